//! Built-in acceptance checks, shared by `thinfilm verify` and the
//! acceptance test target.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coefficients::{BodyForce, PointCoefficients};
use crate::error::FilmError;
use crate::geometry::{
    build_frame, ChartSpec, CosineGap, CylinderPatch, GapField, GapJet, GapSpec, InclinedPlane, Plane, SurfaceChart, TorusPatch,
    TranslatingPlane,
};
use crate::grid::{Grid2D, LateralBc, LateralBcs};
use crate::harness::{fitted_slope, run_epsilon_sweep, run_scenario, ConvergenceReport, GridConfig, PhysicsConfig, ScenarioConfig, SCHEMA_VERSION};
use crate::lubrication::{slider_pressure, solve_lubrication, LubricationBc, PressureTrace};
use crate::new_model::{interior_norms, vertical_closure, BcRegime, ModelParams, NewModel};
use crate::profiles::{ScalarSpec, VectorSpec};
use crate::series::{alpha_beta_series, jacobian_inverse_oracle, series_gradient};
use crate::shallow_water::{Physics, TableSource, TractionBc};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub runtime_s: f64,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] {}. {}: {} ({:.2} s)", self.id, self.name, self.detail, self.runtime_s)
    }
}

fn timed(id: usize, name: &'static str, limit_s: f64, f: impl FnOnce() -> Result<(bool, String), FilmError>) -> CheckOutcome {
    let clock = Instant::now();
    let r = f();
    let runtime_s = clock.elapsed().as_secs_f64();
    let (ok, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
    let in_time = runtime_s < limit_s;
    let detail = if in_time { detail } else { format!("{detail}; runtime over {limit_s} s") };
    CheckOutcome { id, name, passed: ok && in_time, detail, runtime_s }
}

fn cosine_gap() -> CosineGap {
    CosineGap { h0: 1.0, amplitude: 0.3, wavenumber: [1.0, 0.5], frequency: 0.0 }
}

fn cylinder() -> CylinderPatch {
    CylinderPatch { radius: 2.0, length: 1.0, span: 1.0, offset: 0.0, omega: 0.0 }
}

fn torus() -> TorusPatch {
    TorusPatch { major_radius: 3.0, minor_radius: 1.0, u_span: 1.0, v_span: 1.5, u_offset: 0.0, v_offset: 0.2 }
}

/// Largest entry difference between the truncated series and the exact inverse.
fn series_error(chart: &dyn SurfaceChart, gap: &dyn GapField, eps: f64) -> Result<f64, FilmError> {
    let pts = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut err: f64 = 0.0;
    for &x1 in &pts {
        for &x2 in &pts {
            let xi = [x1, x2];
            let fr = build_frame(chart, xi, 0.0)?;
            let gj = gap.jet(xi, 0.0);
            let s = alpha_beta_series(&fr, &gj, 3)?;
            for xi3 in [0.25, 0.5, 1.0] {
                let a = series_gradient(&s, gj.h, eps, xi3, 3);
                let b = jacobian_inverse_oracle(&fr, &gj, eps, xi3)?;
                for l in 0..3 {
                    for k in 0..3 {
                        err = err.max((a[l][k] - b[l][k]).abs());
                    }
                }
            }
        }
    }
    Ok(err)
}

pub fn check_inverse_jacobian() -> CheckOutcome {
    timed(1, "inverse-Jacobian series oracle", 5.0, || {
        let eps = [0.2, 0.1, 0.05];
        let charts: [(&str, Box<dyn SurfaceChart>); 3] =
            [("plane", Box::new(Plane { length: [1.0, 1.0] })), ("cylinder", Box::new(cylinder())), ("torus", Box::new(torus()))];
        let mut ok = true;
        let mut parts = Vec::new();
        for (name, c) in &charts {
            let errs = eps.iter().map(|&e| series_error(c.as_ref(), &cosine_gap(), e)).collect::<Result<Vec<_>, _>>()?;
            let worst = errs.iter().fold(0.0f64, |m, &e| m.max(e));
            // a terminating series leaves only round-off, which has no slope
            if worst <= 1e-13 {
                parts.push(format!("{name} exact (max error {worst:.1e})"));
            } else {
                let s = fitted_slope(&eps, &errs);
                ok &= s >= 3.8;
                parts.push(format!("{name} slope {s:.3}"));
            }
        }
        Ok((ok, format!("{} (need >= 3.8)", parts.join(", "))))
    })
}

fn random_gap(rng: &mut ChaCha8Rng) -> GapJet {
    let mut r = |a: f64| rng.random_range(-a..a);
    let c = r(0.3);
    GapJet {
        h: 1.0 + r(0.5),
        dh: [r(0.5), r(0.5)],
        ddh: [[r(0.3), c], [c, r(0.3)]],
        ht: r(0.3),
        dht: [r(0.2), r(0.2)],
    }
}

pub fn check_identities(seed: u64) -> CheckOutcome {
    timed(2, "coefficient identity suite", 10.0, || {
        let charts: Vec<(&str, Box<dyn SurfaceChart>)> = vec![
            ("plane", Box::new(Plane { length: [1.0, 1.0] })),
            ("inclined plane", Box::new(InclinedPlane { slope: [0.3, -0.4] })),
            ("translating plane", Box::new(TranslatingPlane { velocity: [0.5, -0.2, 0.1] })),
            ("cylinder", Box::new(CylinderPatch { omega: 0.3, ..cylinder() })),
            ("torus", Box::new(torus())),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = [0.0f64; 4];
        for (_, c) in &charts {
            for _ in 0..100 {
                let xi = [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)];
                let t = rng.random_range(0.0..1.0);
                let fr = build_frame(c.as_ref(), xi, t)?;
                let pc = PointCoefficients::evaluate(&fr, &random_gap(&mut rng), xi)?;
                for i in 0..2 {
                    for k in 0..2 {
                        let d = if i == k { 1.0 } else { 0.0 };
                        worst[0] = worst[0].max((pc.b[0][i][k] - d).abs());
                        worst[1] = worst[1].max((pc.jm[0][0][i][k] - pc.m[i][k] / pc.a0).abs());
                        worst[2] = worst[2].max((pc.s_bar[i][k] - pc.p0[i][k] - pc.chi[i][k]).abs());
                    }
                }
                let f = fr.f_expressions();
                for v in &f[1..] {
                    worst[3] = worst[3].max((v - f[0]).abs());
                }
            }
        }
        let ok = worst.iter().all(|&w| w <= 1e-10);
        Ok((ok, format!("max defects B {:.1e}, J {:.1e}, Sbar {:.1e}, f {:.1e} (need <= 1e-10)", worst[0], worst[1], worst[2], worst[3])))
    })
}

fn slider_error(n: usize) -> Result<f64, FilmError> {
    let g = Grid2D::new(n, n)?;
    let (h_in, h_out) = (1.5, 1.0);
    let bc = LubricationBc {
        v: VectorSpec::Uniform { value: [1.0, 0.0] },
        w: VectorSpec::default(),
        trace: PressureTrace::Slider { h_in, h_out, speed: 1.0 },
    };
    let gap = crate::geometry::LinearGap { h0: h_in, slope: [h_out - h_in, 0.0] };
    let (_, sol) = solve_lubrication(&g, &Plane { length: [1.0, 1.0] }, &gap, &bc, 1.0, 0.0, 1e-9)?;
    let (mut err, mut pmax) = (0.0f64, 0.0f64);
    for j in 0..g.n2 {
        for i in 0..g.n1 {
            let exact = slider_pressure(h_in, h_out, 1.0, 1.0, g.xi(i, j)[0]);
            err = err.max((sol.p.get(i, j) - exact).abs());
            pmax = pmax.max(exact.abs());
        }
    }
    Ok(err / pmax)
}

/// Largest deviation of the reconstructed profile from `expected(xi3)`.
fn profile_error(bc: &LubricationBc, expected: impl Fn(f64) -> [f64; 2]) -> Result<f64, FilmError> {
    let g = Grid2D::new(17, 17)?;
    let gap = crate::geometry::LinearGap { h0: 0.8, slope: [0.0; 2] };
    let (_, sol) = solve_lubrication(&g, &Plane { length: [1.0, 1.0] }, &gap, bc, 1.0, 0.0, 1e-9)?;
    let mut err: f64 = 0.0;
    for j in 0..g.n2 {
        for i in 0..g.n1 {
            for z in [0.0, 0.3, 0.5, 0.8, 1.0] {
                let u = sol.velocity(i, j, z);
                let e = expected(z);
                err = err.max((u[0] - e[0]).abs()).max((u[1] - e[1]).abs());
            }
        }
    }
    Ok(err)
}

pub fn check_classical() -> CheckOutcome {
    timed(3, "classical reductions", 30.0, || {
        let ns = [33, 65, 129];
        let errs = ns.iter().map(|&n| slider_error(n)).collect::<Result<Vec<_>, _>>()?;
        let hs: Vec<f64> = ns.iter().map(|&n| 1.0 / (n - 1) as f64).collect();
        let order = fitted_slope(&hs, &errs);
        let couette = profile_error(
            &LubricationBc { v: VectorSpec::default(), w: VectorSpec::Uniform { value: [1.0, -0.5] }, trace: PressureTrace::default() },
            |z| [z, -0.5 * z],
        )?;
        let (gx, h) = (-2.0, 0.8);
        let poiseuille = profile_error(
            &LubricationBc {
                v: VectorSpec::default(),
                w: VectorSpec::default(),
                trace: PressureTrace::Linear { value: 1.0, gradient: [gx, 0.0] },
            },
            |z| [(z * z - z) * h * h / 2.0 * gx, 0.0],
        )?;
        let ok = errs[2] <= 0.01 && order >= 1.8 && couette <= 1e-12 && poiseuille <= 1e-12;
        Ok((
            ok,
            format!(
                "slider rel. error {:.2e} at 129^2 (need <= 1e-2), grid order {order:.2} (need >= 1.8), Couette {couette:.1e}, Poiseuille {poiseuille:.1e} (need <= 1e-12)",
                errs[2]
            ),
        ))
    })
}

fn base_config(bc: BcRegime, chart: ChartSpec, gap: GapSpec, n: usize, dt: f64, t_end: f64) -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: String::new(),
        chart,
        gap,
        epsilons: vec![0.2, 0.1, 0.05],
        bc,
        physics: PhysicsConfig { mu: 1.0, rho0: 1.0, nu: 1.0 },
        grid: GridConfig { n1: n, n2: n },
        dt,
        t_end,
        t_start: 0.0,
        force: Vec::new(),
        output_every: 1,
        out: None,
        seed: 0,
        gap_floor: 1e-9,
        truncate_p1: false,
    }
}

fn cylinder_spec() -> ChartSpec {
    ChartSpec::Cylinder { radius: 2.0, length: 1.0, span: 1.0, offset: 0.0, omega: 0.0 }
}

/// Slider-type flow on a cylinder, velocity conditions.
pub fn velocity_sweep_config() -> ScenarioConfig {
    let bc = BcRegime::Velocity(LubricationBc {
        v: VectorSpec::Uniform { value: [1.0, 0.0] },
        w: VectorSpec::default(),
        trace: PressureTrace::default(),
    });
    base_config(bc, cylinder_spec(), GapSpec::Linear { h0: 1.0, slope: [-0.5, 0.0] }, 65, 1.0, 1.0)
}

/// Shear flow with wall friction on a cylinder, traction conditions.
pub fn traction_sweep_config() -> ScenarioConfig {
    let bc = BcRegime::Traction(TractionBc {
        pi0: ScalarSpec::Constant { value: 0.0 },
        pi1: None,
        friction: Some(0.5),
        s0: -1.0,
        lateral: LateralBcs::all(LateralBc::ZeroGradient),
        initial: VectorSpec::Shear { amplitude: 0.5, wavenumber: 1.0, mean: 0.0 },
        force_form: Default::default(),
    });
    base_config(bc, cylinder_spec(), GapSpec::Constant { h0: 1.0 }, 33, 0.005, 0.5)
}

/// Both sweeps, shared by criteria 4 to 6.
pub struct Sweeps {
    pub velocity: Result<ConvergenceReport, String>,
    pub traction: Result<ConvergenceReport, String>,
}

pub fn run_sweeps() -> Sweeps {
    Sweeps {
        velocity: run_epsilon_sweep(&velocity_sweep_config()).map_err(|e| e.to_string()),
        traction: run_epsilon_sweep(&traction_sweep_config()).map_err(|e| e.to_string()),
    }
}

fn report<'a>(r: &'a Result<ConvergenceReport, String>) -> Result<&'a ConvergenceReport, FilmError> {
    r.as_ref().map_err(|e| FilmError::SolverDivergence { detail: e.clone() })
}

pub fn check_limit_sweeps(s: &Sweeps) -> CheckOutcome {
    let runtime_ok = |r: &ConvergenceReport| r.total_runtime_s < 300.0;
    let mut out = timed(4, "limit convergence sweeps", f64::INFINITY, || {
        let (v, t) = (report(&s.velocity)?, report(&s.traction)?);
        let ok = v.slope_linf >= 0.8 && t.slope_linf >= 0.8 && runtime_ok(v) && runtime_ok(t);
        Ok((
            ok,
            format!(
                "pressure order {:.3} ({:.0} s), velocity order {:.3} ({:.0} s) (need >= 0.8, < 300 s each)",
                v.slope_linf, v.total_runtime_s, t.slope_linf, t.total_runtime_s
            ),
        ))
    });
    out.runtime_s = [&s.velocity, &s.traction].iter().filter_map(|r| r.as_ref().ok()).map(|r| r.total_runtime_s).sum();
    out
}

pub fn check_order_tags(s: &Sweeps) -> CheckOutcome {
    timed(5, "order-of-magnitude tags", f64::INFINITY, || {
        let (v, t) = (report(&s.velocity)?, report(&s.traction)?);
        let ok = t.slope_ratio21 >= 0.8 && t.slope_ratio32 >= 0.8 && v.slope_ratio32 >= 0.8;
        Ok((
            ok,
            format!(
                "traction |u2|/|u1| slope {:.3}, |u3|/|u2| slope {:.3}; velocity |u3|/|u2| slope {:.3} (need >= 0.8)",
                t.slope_ratio21, t.slope_ratio32, v.slope_ratio32
            ),
        ))
    })
}

/// Interior closure defect of a mass-consistent traction state: a stream
/// function flow on a cylinder, whose first-order correction is not
/// divergence free.
fn closure_defect(eps: f64) -> Result<f64, FilmError> {
    let g = Grid2D::new(33, 33)?;
    let tables = TableSource::new(&g, Box::new(cylinder()), Box::new(crate::geometry::LinearGap { h0: 1.0, slope: [0.0; 2] }), 1e-9)?;
    let bc = BcRegime::Traction(TractionBc {
        pi0: ScalarSpec::Constant { value: 0.0 },
        pi1: None,
        friction: Some(0.5),
        s0: -1.0,
        lateral: LateralBcs::default(),
        initial: VectorSpec::Stream { amplitude: 0.3, wavenumber: [1.0, 1.0] },
        force_form: Default::default(),
    });
    let m = NewModel::new(tables, &bc, ModelParams::new(Physics { mu: 1.0, rho0: 1.0 }), eps)?;
    let s = m.initial_stack(0.0)?;
    let table = m.table_at(0.0)?;
    Ok(interior_norms(&g, &vertical_closure(&s, &table)).0)
}

pub fn check_closure() -> CheckOutcome {
    timed(6, "closure and compatibility", f64::INFINITY, || {
        let eps = [0.2, 0.1, 0.05];
        let c = eps.iter().map(|&e| closure_defect(e)).collect::<Result<Vec<_>, _>>()?;
        let order = fitted_slope(&eps, &c);
        let bound = c.iter().zip(&eps).map(|(c, e)| c / (e * e)).fold(0.0, f64::max);
        let cfg = velocity_sweep_config();
        let BcRegime::Velocity(bc) = &cfg.bc else { unreachable!() };
        let g = cfg.grid()?;
        let (_, sol) = solve_lubrication(&g, cfg.chart.build().as_ref(), cfg.gap.build().as_ref(), bc, cfg.physics.mu, 0.0, 1e-9)?;
        let defect = sol.compatibility.defect;
        let ok = order >= 1.8 && defect <= 1e-9;
        Ok((
            ok,
            format!("closure order {order:.3} (need >= 1.8), C = {bound:.3}, compatibility defect {defect:.1e} (need <= 1e-9)"),
        ))
    })
}

fn fixture_drift(bc: BcRegime, eps: f64) -> Result<f64, FilmError> {
    let g = Grid2D::new(17, 17)?;
    let tables = TableSource::new(&g, Box::new(Plane { length: [1.0, 1.0] }), Box::new(crate::geometry::LinearGap { h0: 1.0, slope: [0.0; 2] }), 1e-9)?;
    let params = ModelParams { physics: Physics { mu: 1.0, rho0: 1.0 }, force: BodyForce::none(), truncate_p1: false };
    let mut m = NewModel::new(tables, &bc, params, eps)?;
    let mut s = m.initial_stack(0.0)?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let next = m.step(&s, 0.01)?;
        worst = worst.max(next.max_diff(&s));
        s = next;
    }
    Ok(worst)
}

pub fn check_steady_fixtures() -> CheckOutcome {
    timed(7, "steady-state fixtures", f64::INFINITY, || {
        let couette = fixture_drift(
            BcRegime::Velocity(LubricationBc { v: VectorSpec::default(), w: VectorSpec::Uniform { value: [1.0, 0.0] }, trace: PressureTrace::default() }),
            0.1,
        )?;
        let uniform = fixture_drift(
            BcRegime::Traction(TractionBc {
                pi0: ScalarSpec::Constant { value: 0.5 },
                pi1: None,
                friction: Some(0.0),
                s0: -1.0,
                lateral: LateralBcs::default(),
                initial: VectorSpec::Uniform { value: [0.3, -0.2] },
                force_form: Default::default(),
            }),
            0.1,
        )?;
        let ok = couette <= 1e-10 && uniform <= 1e-10;
        Ok((ok, format!("largest change per step: Couette {couette:.1e}, uniform traction {uniform:.1e} (need <= 1e-10)")))
    })
}

fn scratch_dir(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("thinfilm-verify-{}-{tag}", std::process::id()))
}

fn dir_bytes(dir: &std::path::Path) -> Result<Vec<(String, Vec<u8>)>, FilmError> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)?
        .map(|e| {
            let p = e?.path();
            Ok((p.file_name().unwrap_or_default().to_string_lossy().into_owned(), std::fs::read(&p)?))
        })
        .collect::<Result<_, std::io::Error>>()?;
    files.sort();
    Ok(files)
}

pub fn check_determinism() -> CheckOutcome {
    timed(8, "determinism", f64::INFINITY, || {
        let mut cfg = traction_sweep_config();
        cfg.grid = GridConfig { n1: 17, n2: 17 };
        cfg.t_end = 0.05;
        cfg.dt = 0.01;
        let (a, b) = (scratch_dir("a"), scratch_dir("b"));
        let res = (|| {
            run_scenario(&cfg, &a)?;
            run_scenario(&cfg, &b)?;
            Ok::<_, FilmError>((dir_bytes(&a)?, dir_bytes(&b)?))
        })();
        let _ = std::fs::remove_dir_all(&a);
        let _ = std::fs::remove_dir_all(&b);
        let (fa, fb) = res?;
        let ok = !fa.is_empty() && fa == fb;
        Ok((ok, format!("{} files compared, identical: {}", fa.len(), fa == fb)))
    })
}

/// Run every criterion in order.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    let mut out = vec![check_inverse_jacobian(), check_identities(seed), check_classical()];
    let sweeps = run_sweeps();
    out.push(check_limit_sweeps(&sweeps));
    out.push(check_order_tags(&sweeps));
    out.push(check_closure());
    out.push(check_steady_fixtures());
    out.push(check_determinism());
    out
}
