//! Shallow water limit: evolution of the mean tangential velocity `V` under
//! prescribed normal tractions and wall friction.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{forcing, BodyForce, CoefficientTable, ForceForm, FrictionLaw, PointCoefficients};
use crate::error::FilmError;
use crate::geometry::{GapField, SurfaceChart, Vec3};
use crate::grid::{cfl_limit, diff, grad, hessian, time_step_imex, Field2D, Grid2D, ImplicitDiffusion, LateralBcs};
use crate::output::CsvTable;
use crate::profiles::{ScalarSpec, VectorSpec};

/// Fluid constants; `nu = mu / rho0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub mu: f64,
    pub rho0: f64,
}

impl Physics {
    pub fn nu(&self) -> f64 {
        self.mu / self.rho0
    }
}

fn minus_one() -> f64 {
    -1.0
}

/// Traction-type boundary data.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TractionBc {
    /// Normal traction on the lower surface.
    pub pi0: ScalarSpec,
    /// Normal traction on the upper surface; defaults to `pi0`.
    #[serde(default)]
    pub pi1: Option<ScalarSpec>,
    /// Friction coefficient `C^1_R`; zero switches friction off.
    #[serde(default)]
    pub friction: Option<f64>,
    #[serde(default = "minus_one")]
    pub s0: f64,
    #[serde(default)]
    pub lateral: LateralBcs,
    /// Initial velocity, also held on Dirichlet edges.
    #[serde(default)]
    pub initial: VectorSpec,
    #[serde(default)]
    pub force_form: ForceForm,
}

impl TractionBc {
    pub fn validate(&self) -> Result<(), String> {
        if (self.s0 * self.s0 - 1.0).abs() > 1e-12 {
            return Err("s0 must be +1 or -1".into());
        }
        if let Some(c) = self.friction {
            if !(c >= 0.0 && c.is_finite()) {
                return Err("friction must be non-negative".into());
            }
        }
        self.pi0.validate()?;
        if let Some(p) = &self.pi1 {
            p.validate()?;
        }
        self.initial.validate()
    }

    pub fn law(&self, rho0: f64) -> Result<FrictionLaw, FilmError> {
        let c1 = self.friction.ok_or(FilmError::MissingFriction)?;
        Ok(FrictionLaw { c1, rho0, s0: self.s0 })
    }
}

/// Traction data sampled on a grid.
#[derive(Debug, Clone)]
pub struct TractionFields {
    pub pi0: Field2D,
    pub dpi0: [Field2D; 2],
    pub pi1: Field2D,
    pub law: FrictionLaw,
    /// Values held on Dirichlet edges.
    pub held: [Field2D; 2],
    pub lateral: LateralBcs,
}

impl TractionFields {
    pub fn new(g: &Grid2D, bc: &TractionBc, rho0: f64) -> Result<Self, FilmError> {
        let pi0 = bc.pi0.field(g);
        let dpi0 = grad(g, &pi0);
        let pi1 = bc.pi1.as_ref().unwrap_or(&bc.pi0).field(g);
        Ok(TractionFields { pi0, dpi0, pi1, law: bc.law(rho0)?, held: bc.initial.fields(g), lateral: bc.lateral })
    }
}

/// Which coefficient grouping assembles the viscous and reaction terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SwPath {
    /// `L + psi`, `P + chi`, `kappa`, `F` with the configured force form.
    Split,
    /// `L + psi`, `Sbar`, `kappa`, `Fbar`.
    #[default]
    Compact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowWaterState {
    pub t: f64,
    pub v: [Field2D; 2],
    pub p0: Field2D,
}

/// Velocity of the lower wall `V_1 a1 + V_2 a2 + w a3` in Cartesian components.
pub(crate) fn wall_velocity(p: &PointCoefficients, u: [f64; 3]) -> Vec3 {
    p.basis[0] * u[0] + p.basis[1] * u[1] + p.basis[2] * u[2]
}

/// Spatial derivatives of a tangential field.
pub(crate) struct Jet2 {
    pub d: [[Field2D; 2]; 2],
    pub dd: [[[Field2D; 2]; 2]; 2],
}

impl Jet2 {
    pub fn new(g: &Grid2D, v: &[Field2D; 2]) -> Self {
        Jet2 { d: [grad(g, &v[0]), grad(g, &v[1])], dd: [hessian(g, &v[0]), hessian(g, &v[1])] }
    }
}

/// Tendency `dV/dt` at every node. With `diffusion = false` the implicit
/// part `nu J^{0,0} d^2 V` is left out.
#[allow(clippy::too_many_arguments)]
pub fn sw_rhs(
    v: &[Field2D; 2],
    table: &CoefficientTable,
    tf: &TractionFields,
    physics: Physics,
    force: &BodyForce,
    path: SwPath,
    form: ForceForm,
    diffusion: bool,
) -> [Field2D; 2] {
    let g = &table.grid;
    let jet = Jet2::new(g, v);
    let nu = physics.nu();
    let out: Vec<[f64; 2]> = (0..g.len())
        .into_par_iter()
        .map(|k| {
            let p = &table.points[k];
            let vv = [v[0].data[k], v[1].data[k]];
            let dv = |i: usize, l: usize| jet.d[i][l].data[k];
            let wall = wall_velocity(p, [vv[0], vv[1], p.w]);
            let fr = tf.law.force(&wall);
            let f = match path {
                SwPath::Split => forcing(p, force, form, &fr, &fr, Some(&tf.law)),
                SwPath::Compact => forcing(p, force, ForceForm::Bar, &fr, &fr, Some(&tf.law)),
            };
            std::array::from_fn(|i| {
                let mut adv = 0.0;
                for l in 0..2 {
                    adv += dv(i, l) * (vv[l] - p.c0[l]);
                }
                for kk in 0..2 {
                    let quad: f64 = (0..2).map(|l| vv[l] * p.hc[0][i][l][kk]).sum();
                    adv += vv[kk] * (p.r0[i][kk] + quad);
                }
                let pres: f64 = (0..2).map(|l| tf.dpi0[l].data[k] * p.j00(i, l)).sum::<f64>() / physics.rho0;
                let mut visc = p.kappa[i];
                if diffusion {
                    for l in 0..2 {
                        for m in 0..2 {
                            visc += p.j00(l, m) * jet.dd[i][l][m].data[k];
                        }
                    }
                }
                for kk in 0..2 {
                    for l in 0..2 {
                        visc += dv(kk, l) * (p.l0[kk][l][i] + p.psi[i][kk][l]);
                    }
                    let react = match path {
                        SwPath::Split => p.p0[i][kk] + p.chi[i][kk],
                        SwPath::Compact => p.s_bar[i][kk],
                    };
                    visc += vv[kk] * react;
                }
                -adv - pres + nu * visc - p.q0[i][2] * p.w + f[i]
            })
        })
        .collect();
    [
        Field2D::from_vec(g, out.iter().map(|x| x[0]).collect()),
        Field2D::from_vec(g, out.iter().map(|x| x[1]).collect()),
    ]
}

/// `p^0 = 2 mu (dh/dt) / h + pi0`.
pub fn limit_pressure(table: &CoefficientTable, pi0: &Field2D, mu: f64) -> Field2D {
    let mut p = table.field(|pc| 2.0 * mu * pc.gap.ht / pc.h());
    for (a, b) in p.data.iter_mut().zip(&pi0.data) {
        *a += b;
    }
    p
}

/// `pi0 + (mu / sqrtA) div(sqrtA (W - V)) + (mu / h) grad h . (W - V) - pi1`.
pub fn pi1_consistency(
    v: &[Field2D; 2],
    w: &[Field2D; 2],
    table: &CoefficientTable,
    pi0: &Field2D,
    pi1: &Field2D,
    mu: f64,
) -> Field2D {
    let g = &table.grid;
    let sa = table.field(|p| p.sqrt_a0);
    let d: [Field2D; 2] = std::array::from_fn(|c| w[c].sub(&v[c]));
    let div = diff(g, &sa.mul(&d[0]), 0).add(&diff(g, &sa.mul(&d[1]), 1));
    let mut out = Field2D::zeros(g);
    for (k, p) in table.points.iter().enumerate() {
        let slope = p.gap.dh[0] * d[0].data[k] + p.gap.dh[1] * d[1].data[k];
        out.data[k] = pi0.data[k] + mu * div.data[k] / p.sqrt_a0 + mu * slope / p.h() - pi1.data[k];
    }
    out
}

/// Largest `|V - C^0|` over the grid, for the CFL bound.
pub fn transport_speed(v: &[Field2D; 2], table: &CoefficientTable) -> f64 {
    table
        .points
        .iter()
        .enumerate()
        .map(|(k, p)| (v[0].data[k] - p.c0[0]).hypot(v[1].data[k] - p.c0[1]))
        .fold(0.0, f64::max)
}

/// Coefficient tables, cached when neither the surface nor the gap moves.
pub struct TableSource {
    pub grid: Grid2D,
    pub chart: Box<dyn SurfaceChart>,
    pub gap: Box<dyn GapField>,
    pub floor: f64,
    frozen: Option<CoefficientTable>,
}

impl TableSource {
    pub fn new(grid: &Grid2D, chart: Box<dyn SurfaceChart>, gap: Box<dyn GapField>, floor: f64) -> Result<Self, FilmError> {
        let frozen = if chart.is_static() && gap.is_static() {
            Some(CoefficientTable::build(grid, chart.as_ref(), gap.as_ref(), 0.0, floor)?)
        } else {
            None
        };
        Ok(TableSource { grid: grid.clone(), chart, gap, floor, frozen })
    }

    pub fn is_static(&self) -> bool {
        self.frozen.is_some()
    }

    pub fn at(&self, t: f64) -> Result<Cow<'_, CoefficientTable>, FilmError> {
        match &self.frozen {
            Some(tb) => Ok(Cow::Borrowed(tb)),
            None => Ok(Cow::Owned(CoefficientTable::build(&self.grid, self.chart.as_ref(), self.gap.as_ref(), t, self.floor)?)),
        }
    }
}

/// Implicit viscous operator `I - dt nu J^{0,0} d^2`, rebuilt only when needed.
pub(crate) struct DiffusionCache {
    op: Option<(f64, ImplicitDiffusion)>,
}

impl DiffusionCache {
    pub fn new() -> Self {
        DiffusionCache { op: None }
    }

    pub fn get(&mut self, table: &CoefficientTable, frozen: bool, dt: f64, nu: f64, bcs: LateralBcs) -> Result<&ImplicitDiffusion, FilmError> {
        let reuse = frozen && matches!(&self.op, Some((d, _)) if *d == dt);
        if !reuse {
            let op = ImplicitDiffusion::new(&table.grid, dt, bcs, |k| {
                let p = &table.points[k];
                std::array::from_fn(|l| std::array::from_fn(|m| nu * p.j00(l, m)))
            })?;
            self.op = Some((dt, op));
        }
        Ok(&self.op.as_ref().expect("operator just built").1)
    }
}

/// Shallow water model with its geometry, traction data and forcing.
pub struct ShallowWaterModel {
    pub tables: TableSource,
    pub traction: TractionFields,
    pub physics: Physics,
    pub force: BodyForce,
    pub path: SwPath,
    pub form: ForceForm,
    cache: DiffusionCache,
}

impl ShallowWaterModel {
    pub fn new(tables: TableSource, bc: &TractionBc, physics: Physics, force: BodyForce) -> Result<Self, FilmError> {
        let traction = TractionFields::new(&tables.grid, bc, physics.rho0)?;
        Ok(ShallowWaterModel { tables, traction, physics, force, path: SwPath::Compact, form: bc.force_form, cache: DiffusionCache::new() })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.tables.grid
    }

    pub fn initial_state(&self, t: f64) -> Result<ShallowWaterState, FilmError> {
        let table = self.tables.at(t)?;
        let mut v = self.traction.held.clone();
        for c in &mut v {
            self.traction.lateral.apply(&table.grid, c, &c.clone());
        }
        Ok(ShallowWaterState { t, v, p0: limit_pressure(&table, &self.traction.pi0, self.physics.mu) })
    }

    pub fn rhs(&self, state: &ShallowWaterState) -> Result<[Field2D; 2], FilmError> {
        let table = self.tables.at(state.t)?;
        Ok(sw_rhs(&state.v, &table, &self.traction, self.physics, &self.force, self.path, self.form, true))
    }

    pub fn step(&mut self, state: &ShallowWaterState, dt: f64) -> Result<ShallowWaterState, FilmError> {
        let t0 = self.tables.at(state.t)?.into_owned();
        let limit = cfl_limit(self.grid(), transport_speed(&state.v, &t0));
        if dt > limit {
            return Err(FilmError::CflViolation { dt, limit });
        }
        let t1 = self.tables.at(state.t + dt)?.into_owned();
        let nu = self.physics.nu();
        let op = self.cache.get(&t1, self.tables.is_static(), dt, nu, self.traction.lateral)?;
        let tables = [&t0, &t1];
        let (tr, ph, force, path, form) = (&self.traction, self.physics, &self.force, self.path, self.form);
        let next = time_step_imex(
            &state.v,
            |u, stage| {
                let v = [u[0].clone(), u[1].clone()];
                Ok(sw_rhs(&v, tables[stage], tr, ph, force, path, form, false).to_vec())
            },
            Some(op),
            &self.traction.held,
            dt,
        )?;
        let v = [next[0].clone(), next[1].clone()];
        if v.iter().any(|f| f.data.iter().any(|x| !x.is_finite())) {
            return Err(FilmError::SolverDivergence { detail: format!("non-finite velocity at t = {}", state.t + dt) });
        }
        Ok(ShallowWaterState { t: state.t + dt, v, p0: limit_pressure(&t1, &self.traction.pi0, self.physics.mu) })
    }

    /// Advance to `t_end` with steps no longer than `dt`, returning every
    /// `every`-th state (the first and last always included).
    pub fn run(&mut self, start: ShallowWaterState, t_end: f64, dt: f64, every: usize) -> Result<Vec<ShallowWaterState>, FilmError> {
        let n = ((t_end - start.t) / dt).ceil().max(0.0) as usize;
        let h = if n > 0 { (t_end - start.t) / n as f64 } else { dt };
        let mut out = vec![start.clone()];
        let mut s = start;
        for k in 1..=n {
            s = self.step(&s, h)?;
            if k % every.max(1) == 0 || k == n {
                out.push(s.clone());
            }
        }
        Ok(out)
    }

    pub fn pi1_residual(&self, state: &ShallowWaterState) -> Result<Field2D, FilmError> {
        let table = self.tables.at(state.t)?;
        Ok(pi1_consistency(&state.v, &state.v, &table, &self.traction.pi0, &self.traction.pi1, self.physics.mu))
    }

    /// Column volume `int sqrtA h` and momentum `int sqrtA h V_i`.
    pub fn budgets(&self, state: &ShallowWaterState) -> Result<Budgets, FilmError> {
        let table = self.tables.at(state.t)?;
        let g = self.grid();
        let mass = table.field(|p| p.sqrt_a0 * p.h());
        Ok(Budgets {
            t: state.t,
            volume: mass.integral(g),
            momentum: [mass.mul(&state.v[0]).integral(g), mass.mul(&state.v[1]).integral(g)],
            energy: 0.5 * mass.mul(&state.v[0].mul(&state.v[0]).add(&state.v[1].mul(&state.v[1]))).integral(g),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Budgets {
    pub t: f64,
    pub volume: f64,
    pub momentum: [f64; 2],
    pub energy: f64,
}

/// Time series rows `(t, i, j, xi1, xi2, V1, V2, p0)`.
pub fn time_series_table(g: &Grid2D, states: &[ShallowWaterState]) -> CsvTable {
    let mut t = CsvTable::new(&["t", "i", "j", "xi1", "xi2", "v1", "v2", "p0"]);
    for s in states {
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                let xi = g.xi(i, j);
                t.push(vec![s.t, i as f64, j as f64, xi[0], xi[1], s.v[0].get(i, j), s.v[1].get(i, j), s.p0.get(i, j)]);
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CosineGap, LinearGap, Plane, SqueezeGap, TorusPatch};
    use crate::grid::LateralBc;

    fn plane_model(n: usize, bc: &TractionBc, physics: Physics) -> ShallowWaterModel {
        let g = Grid2D::new(n, n).unwrap();
        let src = TableSource::new(&g, Box::new(Plane { length: [1.0, 1.0] }), Box::new(LinearGap { h0: 1.0, slope: [0.0; 2] }), 1e-6).unwrap();
        ShallowWaterModel::new(src, bc, physics, BodyForce::none()).unwrap()
    }

    fn base_bc() -> TractionBc {
        TractionBc {
            pi0: ScalarSpec::Constant { value: 2.0 },
            pi1: None,
            friction: Some(0.0),
            s0: -1.0,
            lateral: LateralBcs::all(LateralBc::ZeroGradient),
            initial: VectorSpec::Uniform { value: [0.4, -0.3] },
            force_form: ForceForm::Bar,
        }
    }

    #[test]
    fn uniform_state_is_steady() {
        let mut m = plane_model(17, &base_bc(), Physics { mu: 0.1, rho0: 1.0 });
        let s0 = m.initial_state(0.0).unwrap();
        let r = m.rhs(&s0).unwrap();
        assert!(r[0].max_abs() < 1e-14 && r[1].max_abs() < 1e-14);
        let mut s = s0.clone();
        for _ in 0..1000 {
            s = m.step(&s, 0.01).unwrap();
        }
        assert!(s.v[0].sub(&s0.v[0]).max_abs() < 1e-13);
        assert!(s.v[1].sub(&s0.v[1]).max_abs() < 1e-13);
    }

    #[test]
    fn pressure_gradient_accelerates_uniformly() {
        let mut bc = base_bc();
        bc.pi0 = ScalarSpec::Linear { value: 0.0, gradient: [1.5, 0.0] };
        bc.initial = VectorSpec::default();
        let m = plane_model(9, &bc, Physics { mu: 0.1, rho0: 2.0 });
        let r = m.rhs(&m.initial_state(0.0).unwrap()).unwrap();
        assert!(r[0].data.iter().all(|x| (x + 0.75).abs() < 1e-13));
        assert!(r[1].max_abs() < 1e-14);
    }

    #[test]
    fn friction_decay_matches_scalar_ode() {
        let mut bc = base_bc();
        let (c1, v0) = (0.5, 1.0);
        bc.friction = Some(c1);
        bc.initial = VectorSpec::Uniform { value: [v0, 0.0] };
        let mut m = plane_model(9, &bc, Physics { mu: 0.01, rho0: 1.0 });
        let s = m.initial_state(0.0).unwrap();
        let end = m.run(s, 1.0, 0.01, 1000).unwrap().pop().unwrap();
        // dv/dt = 2 s0 c1 v^2 / h with h = 1
        let exact = v0 / (1.0 + 2.0 * c1 * v0);
        assert!((end.v[0].get(4, 4) - exact).abs() < 1e-3, "{}", end.v[0].get(4, 4));
    }

    #[test]
    fn halving_dt_quarters_the_error() {
        let mut bc = base_bc();
        bc.friction = Some(2.0);
        bc.initial = VectorSpec::Uniform { value: [1.0, 0.0] };
        let exact = 1.0 / (1.0 + 4.0);
        let err = |dt: f64| {
            let mut m = plane_model(9, &bc, Physics { mu: 0.01, rho0: 1.0 });
            let s = m.initial_state(0.0).unwrap();
            let end = m.run(s, 1.0, dt, 1_000_000).unwrap().pop().unwrap();
            (end.v[0].get(4, 4) - exact).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn split_and_compact_paths_agree() {
        let g = Grid2D::new(13, 11).unwrap();
        let chart = TorusPatch { major_radius: 3.0, minor_radius: 1.0, u_span: 1.2, v_span: 0.9, u_offset: 0.1, v_offset: 0.3 };
        let gap = CosineGap { h0: 1.0, amplitude: 0.2, wavenumber: [1.0, 2.0], frequency: 0.7 };
        let table = CoefficientTable::build(&g, &chart, &gap, 0.4, 1e-6).unwrap();
        let mut bc = base_bc();
        bc.friction = Some(0.3);
        bc.pi0 = ScalarSpec::Linear { value: 1.0, gradient: [0.2, -0.4] };
        let tf = TractionFields::new(&g, &bc, 1.3).unwrap();
        let v = VectorSpec::Stream { amplitude: 0.2, wavenumber: [1.0, 1.0] }.fields(&g);
        let force = BodyForce::uniform([0.1, -0.2, 0.3]);
        let ph = Physics { mu: 0.2, rho0: 1.3 };
        let a = sw_rhs(&v, &table, &tf, ph, &force, SwPath::Split, ForceForm::Integral, true);
        let b = sw_rhs(&v, &table, &tf, ph, &force, SwPath::Compact, ForceForm::Bar, true);
        for c in 0..2 {
            assert!(a[c].sub(&b[c]).max_abs() < 1e-10, "{}", a[c].sub(&b[c]).max_abs());
        }
    }

    #[test]
    fn squeeze_sets_pressure() {
        let g = Grid2D::new(9, 9).unwrap();
        let src = TableSource::new(&g, Box::new(Plane { length: [1.0, 1.0] }), Box::new(SqueezeGap { h0: 1.0, rate: -0.2 }), 1e-6).unwrap();
        let m = ShallowWaterModel::new(src, &base_bc(), Physics { mu: 0.5, rho0: 1.0 }, BodyForce::none()).unwrap();
        let s = m.initial_state(0.0).unwrap();
        let table = m.tables.at(0.0).unwrap();
        let p = table.at(3, 3);
        assert!((s.p0.get(3, 3) - (2.0 * 0.5 * p.gap.ht / p.h() + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn pi1_residual_cases() {
        let g = Grid2D::new(17, 17).unwrap();
        let table = CoefficientTable::build(&g, &Plane { length: [1.0, 1.0] }, &LinearGap { h0: 1.0, slope: [0.2, 0.0] }, 0.0, 1e-6).unwrap();
        let v = VectorSpec::Uniform { value: [0.3, 0.1] }.fields(&g);
        let pi0 = Field2D::constant(&g, 1.0);
        let r = pi1_consistency(&v, &v, &table, &pi0, &pi0, 0.7);
        assert!(r.max_abs() < 1e-15);
        let r = pi1_consistency(&v, &v, &table, &pi0, &Field2D::constant(&g, 1.25), 0.7);
        assert!(r.data.iter().all(|x| (x + 0.25).abs() < 1e-15));
        // W - V = (xi1^2, xi1 xi2): div = 3 xi1, grad h . (W - V) = 0.2 xi1^2
        let w = [v[0].add(&Field2D::from_fn(&g, |x| x[0] * x[0])), v[1].add(&Field2D::from_fn(&g, |x| x[0] * x[1]))];
        let r = pi1_consistency(&v, &w, &table, &pi0, &pi0, 0.7);
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                let x = g.xi(i, j);
                let hand = 0.7 * 3.0 * x[0] + 0.7 * 0.2 * x[0] * x[0] / (1.0 + 0.2 * x[0]);
                assert!((r.get(i, j) - hand).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn passive_bump_is_carried_by_the_flow() {
        let mut bc = base_bc();
        bc.initial = VectorSpec::Uniform { value: [0.3, 0.0] };
        let mut m = plane_model(65, &bc, Physics { mu: 1e-5, rho0: 1.0 });
        let mut s = m.initial_state(0.0).unwrap();
        let g = m.grid().clone();
        s.v[1] = Field2D::from_fn(&g, |x| 1e-3 * (-((x[0] - 0.3) / 0.08).powi(2)).exp());
        let centroid = |f: &Field2D| {
            let (mut a, mut b) = (0.0, 0.0);
            for i in 0..g.n1 {
                a += f.get(i, 32) * g.xi(i, 32)[0];
                b += f.get(i, 32);
            }
            a / b
        };
        let c0 = centroid(&s.v[1]);
        let end = m.run(s, 1.0, 0.01, 1000).unwrap().pop().unwrap();
        let moved = centroid(&end.v[1]) - c0;
        assert!((moved - 0.3).abs() < g.d1, "{moved}");
    }

    #[test]
    fn oversized_step_is_rejected() {
        let mut m = plane_model(17, &base_bc(), Physics { mu: 0.1, rho0: 1.0 });
        let s = m.initial_state(0.0).unwrap();
        assert!(matches!(m.step(&s, 1.0), Err(FilmError::CflViolation { .. })));
    }

    #[test]
    fn missing_friction_is_an_error() {
        let mut bc = base_bc();
        bc.friction = None;
        assert!(matches!(bc.law(1.0), Err(FilmError::MissingFriction)));
    }
}
