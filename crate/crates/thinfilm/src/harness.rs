//! Scenario files, runs, epsilon sweeps and coefficient dumps.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{BodyForce, CoefficientTable};
use crate::error::FilmError;
use crate::geometry::{ChartSpec, GapSpec};
use crate::grid::{Field2D, Grid2D};
use crate::lubrication::{pressure_peak, slider_peak, solve_lubrication, Compatibility, LubricationBc, PressureTrace};
use crate::new_model::{interior_norms, vertical_closure, BcRegime, FieldStack, ModelParams, NewModel, ResidualReport, EPS_MIN};
use crate::output::{sha256_hex, CsvTable, Manifest, OutputSink};
use crate::shallow_water::{time_series_table, Physics, ShallowWaterModel, ShallowWaterState, TableSource};

pub const SCHEMA_VERSION: u32 = 1;
pub const EPS_MAX: f64 = 0.5;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub mu: f64,
    pub rho0: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n1: usize,
    pub n2: usize,
}

fn default_every() -> usize {
    1
}

fn default_floor() -> f64 {
    1e-9
}

/// One scenario: geometry, boundary regime, constants, discretization.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub chart: ChartSpec,
    pub gap: GapSpec,
    pub epsilons: Vec<f64>,
    pub bc: BcRegime,
    pub physics: PhysicsConfig,
    pub grid: GridConfig,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub t_start: f64,
    /// Body force coefficients `fbar^n`, one row per power of `xi3`.
    #[serde(default)]
    pub force: Vec<[f64; 3]>,
    /// Keep every n-th time level in the field outputs.
    #[serde(default = "default_every")]
    pub output_every: usize,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_floor")]
    pub gap_floor: f64,
    #[serde(default)]
    pub truncate_p1: bool,
}

fn check(ok: bool, path: &str, reason: impl Into<String>) -> Result<(), FilmError> {
    if ok {
        Ok(())
    } else {
        Err(FilmError::config(path, reason))
    }
}

fn gap_validate(g: &GapSpec) -> Result<(), String> {
    let ok = match *g {
        GapSpec::Constant { h0 } | GapSpec::Squeeze { h0, .. } => h0 > 0.0,
        GapSpec::Linear { h0, slope } => h0 > 0.0 && slope.iter().all(|s| s.is_finite()),
        GapSpec::Cosine { h0, amplitude, .. } => h0 > 0.0 && amplitude.abs() < h0,
    };
    if ok {
        Ok(())
    } else {
        Err("gap must stay positive".into())
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, FilmError> {
        let c: ScenarioConfig = serde_json::from_str(text).map_err(|e| FilmError::config("$", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, FilmError> {
        let text = std::fs::read_to_string(path).map_err(|e| FilmError::config(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), FilmError> {
        check(self.schema_version == SCHEMA_VERSION, "schema_version", format!("expected {SCHEMA_VERSION}"))?;
        let p = self.physics;
        check(p.mu > 0.0 && p.mu.is_finite(), "physics.mu", "must be positive")?;
        check(p.rho0 > 0.0 && p.rho0.is_finite(), "physics.rho0", "must be positive")?;
        check((p.nu * p.rho0 - p.mu).abs() <= 1e-12 * p.mu.max(1.0), "physics.nu", "nu * rho0 must equal mu")?;
        check(!self.epsilons.is_empty(), "epsilons", "at least one value is needed")?;
        for (k, &e) in self.epsilons.iter().enumerate() {
            check(e > EPS_MIN && e <= EPS_MAX, &format!("epsilons[{k}]"), format!("{e} is outside (1e-4, 0.5]"))?;
        }
        check(self.t_end > 0.0 && self.t_end.is_finite(), "t_end", "must be positive")?;
        check(self.dt > 0.0 && self.dt.is_finite(), "dt", "must be positive")?;
        check(self.t_start.is_finite() && self.t_start >= 0.0, "t_start", "must be non-negative")?;
        self.grid().map_err(|e| FilmError::config("grid", e.to_string()))?;
        check(self.output_every >= 1, "output_every", "must be at least 1")?;
        check(self.gap_floor > 0.0, "gap_floor", "must be positive")?;
        check(self.force.iter().flatten().all(|v| v.is_finite()), "force", "must be finite")?;
        self.chart.validate().map_err(|r| FilmError::config("chart", r))?;
        gap_validate(&self.gap).map_err(|r| FilmError::config("gap", r))?;
        match &self.bc {
            BcRegime::Velocity(b) => {
                b.v.validate().map_err(|r| FilmError::config("bc.v", r))?;
                b.w.validate().map_err(|r| FilmError::config("bc.w", r))?;
                b.trace.validate().map_err(|r| FilmError::config("bc.trace", r))?;
            }
            BcRegime::Traction(b) => {
                b.validate().map_err(|r| FilmError::config("bc", r))?;
                check(b.friction.is_some(), "bc.friction", "the friction coefficient is required, use 0 to switch it off")?;
            }
        }
        Ok(())
    }

    /// Hash of the canonical serialization.
    pub fn sha256(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn physics(&self) -> Physics {
        Physics { mu: self.physics.mu, rho0: self.physics.rho0 }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams { physics: self.physics(), force: BodyForce { coefficients: self.force.clone() }, truncate_p1: self.truncate_p1 }
    }

    pub fn grid(&self) -> Result<Grid2D, FilmError> {
        Grid2D::new(self.grid.n1, self.grid.n2)
    }

    pub fn tables(&self) -> Result<TableSource, FilmError> {
        TableSource::new(&self.grid()?, self.chart.build(), self.gap.build(), self.gap_floor)
    }
}

/// Limit solution at the final time.
#[derive(Debug, Clone)]
pub enum LimitSolution {
    /// Reynolds pressure `P`.
    Lubrication { p: Field2D, compatibility: Compatibility, profile: CsvTable },
    /// Mean velocity `V` history.
    ShallowWater { states: Vec<ShallowWaterState> },
}

fn solve_limit(cfg: &ScenarioConfig) -> Result<LimitSolution, FilmError> {
    let g = cfg.grid()?;
    let mu = cfg.physics.mu;
    match &cfg.bc {
        BcRegime::Velocity(bc) => {
            let (_, sol) = solve_lubrication(&g, cfg.chart.build().as_ref(), cfg.gap.build().as_ref(), bc, mu, cfg.t_end, cfg.gap_floor)?;
            Ok(LimitSolution::Lubrication { profile: sol.profile_table(), p: sol.p, compatibility: sol.compatibility })
        }
        BcRegime::Traction(bc) => {
            let mut m = ShallowWaterModel::new(cfg.tables()?, bc, cfg.physics(), cfg.params().force)?;
            let start = m.initial_state(cfg.t_start)?;
            let states = m.run(start, cfg.t_end, cfg.dt, cfg.output_every)?;
            Ok(LimitSolution::ShallowWater { states })
        }
    }
}

/// Errors and diagnostics of one sweep member at the final time.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct SweepEntry {
    pub eps: f64,
    /// Distance to the limit solution.
    pub err_linf: f64,
    pub err_l2: f64,
    /// `|u^2| / |u^1|` and `|u^3| / |u^2|` in the L2 norm.
    pub ratio21: f64,
    pub ratio32: f64,
    /// `sum_k u_3^k - eps dh/dt` on interior nodes.
    pub closure_linf: f64,
    pub closure_l2: f64,
}

struct Member {
    entry: SweepEntry,
    history: Vec<FieldStack>,
    residuals: ResidualReport,
    runtime_s: f64,
}

fn vec_norm(g: &Grid2D, f: &[Field2D; 2]) -> (f64, f64) {
    let mag = f[0].zip(&f[1], |a, b| a.hypot(b));
    (mag.max_abs(), mag.l2(g))
}

fn run_member(cfg: &ScenarioConfig, eps: f64, limit: &LimitSolution) -> Result<Member, FilmError> {
    let clock = Instant::now();
    let tables = cfg.tables()?;
    let g = tables.grid.clone();
    let mut model = NewModel::new(tables, &cfg.bc, cfg.params(), eps)?;
    let history = match &cfg.bc {
        // the velocity regime is quasi-static: one solve at the final time
        BcRegime::Velocity(_) => vec![model.initial_stack(cfg.t_end)?],
        BcRegime::Traction(_) => {
            let start = model.initial_stack(cfg.t_start)?;
            model.run(start, cfg.t_end, cfg.dt, cfg.output_every)?
        }
    };
    let last = history.last().expect("history is never empty");
    let diff = match limit {
        LimitSolution::Lubrication { p, .. } => {
            let d = last.p[0].scale(eps * eps).sub(p);
            (d.max_abs(), d.l2(&g))
        }
        LimitSolution::ShallowWater { states } => {
            let v = &states.last().expect("history is never empty").v;
            vec_norm(&g, &[last.u[0][0].sub(&v[0]), last.u[0][1].sub(&v[1])])
        }
    };
    let n = |k: usize| vec_norm(&g, &last.u[k]).1;
    let table = model.table_at(last.t)?;
    let (closure_linf, closure_rms) = interior_norms(&g, &vertical_closure(last, &table));
    let residuals = model.residuals(last)?;
    Ok(Member {
        entry: SweepEntry {
            eps,
            err_linf: diff.0,
            err_l2: diff.1,
            ratio21: n(2) / n(1),
            ratio32: n(3) / n(2),
            closure_linf,
            closure_l2: closure_rms,
        },
        residuals,
        history,
        runtime_s: clock.elapsed().as_secs_f64(),
    })
}

fn run_members(cfg: &ScenarioConfig, limit: &LimitSolution) -> Result<Vec<Member>, FilmError> {
    cfg.epsilons.par_iter().map(|&e| run_member(cfg, e, limit)).collect()
}

fn entries_table(entries: &[SweepEntry]) -> CsvTable {
    let mut t = CsvTable::new(&["eps", "err_linf", "err_l2", "ratio21", "ratio32", "closure_linf", "closure_l2"]);
    for e in entries {
        t.push(vec![e.eps, e.err_linf, e.err_l2, e.ratio21, e.ratio32, e.closure_linf, e.closure_l2]);
    }
    t
}

fn history_table(g: &Grid2D, history: &[FieldStack]) -> CsvTable {
    let mut out = CsvTable::default();
    for s in history {
        let t = s.snapshot_table(g);
        if out.header.is_empty() {
            out.header = t.header;
        }
        out.rows.extend(t.rows);
    }
    out
}

/// Summary of the limit solve.
#[derive(Debug, Clone, Serialize)]
struct LimitSummary {
    regime: &'static str,
    /// Pressure peak `(xi1, P)` on the middle row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pressure_peak: Option<[f64; 2]>,
    /// Closed-form slider peak when the trace is a slider profile.
    #[serde(skip_serializing_if = "Option::is_none")]
    slider_peak: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    compatibility: Option<Compatibility>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_velocity_linf: Option<f64>,
}

/// Run every epsilon of the scenario plus the matching limit model and write
/// the artifact directory.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path) -> Result<Manifest, FilmError> {
    cfg.validate()?;
    let g = cfg.grid()?;
    let limit = solve_limit(cfg)?;
    let members = run_members(cfg, &limit)?;
    let mut sink = OutputSink::new(out)?;
    sink.write_json("config.json", cfg)?;
    let summary = match &limit {
        LimitSolution::Lubrication { p, compatibility, profile } => {
            sink.write("limit_lubrication.csv", &profile.render())?;
            let peak = pressure_peak(&g, p, (g.n2 - 1) / 2);
            let slider = match cfg.bc {
                BcRegime::Velocity(LubricationBc { trace: PressureTrace::Slider { h_in, h_out, speed }, .. }) => {
                    let (x, v) = slider_peak(h_in, h_out, cfg.physics.mu, speed);
                    Some([x, v])
                }
                _ => None,
            };
            LimitSummary {
                regime: "velocity",
                pressure_peak: Some([peak.0, peak.1]),
                slider_peak: slider,
                compatibility: Some(*compatibility),
                final_velocity_linf: None,
            }
        }
        LimitSolution::ShallowWater { states } => {
            sink.write("limit_shallow_water.csv", &time_series_table(&g, states).render())?;
            let v = &states.last().expect("history is never empty").v;
            LimitSummary {
                regime: "traction",
                pressure_peak: None,
                slider_peak: None,
                compatibility: None,
                final_velocity_linf: Some(vec_norm(&g, v).0),
            }
        }
    };
    sink.write_json("limit_summary.json", &summary)?;
    for (k, m) in members.iter().enumerate() {
        sink.write(&format!("new_model_eps{k}.csv"), &history_table(&g, &m.history).render())?;
        sink.write_json(&format!("residuals_eps{k}.json"), &m.residuals)?;
    }
    let entries: Vec<SweepEntry> = members.iter().map(|m| m.entry).collect();
    sink.write("limit_distance.csv", &entries_table(&entries).render())?;
    sink.finish(cfg.sha256())
}

/// Least-squares slope of `ln y` against `ln x`; NaN if any value is not positive.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    if x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return f64::NAN;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub regime: String,
    pub entries: Vec<SweepEntry>,
    pub slope_linf: f64,
    pub slope_l2: f64,
    pub slope_ratio21: f64,
    pub slope_ratio32: f64,
    pub slope_closure: f64,
    pub member_runtime_s: Vec<f64>,
    pub total_runtime_s: f64,
}

impl ConvergenceReport {
    pub fn table(&self) -> CsvTable {
        entries_table(&self.entries)
    }
}

/// Run the new model for every epsilon, the limit model once, and fit the
/// convergence slopes.
pub fn run_epsilon_sweep(cfg: &ScenarioConfig) -> Result<ConvergenceReport, FilmError> {
    cfg.validate()?;
    let e = &cfg.epsilons;
    check(e.len() >= 3, "epsilons", "a sweep needs at least 3 values")?;
    let inc = e.windows(2).all(|w| w[0] < w[1]);
    let dec = e.windows(2).all(|w| w[0] > w[1]);
    check(inc || dec, "epsilons", "values must be strictly monotone")?;
    let clock = Instant::now();
    let limit = solve_limit(cfg)?;
    let members = run_members(cfg, &limit)?;
    let entries: Vec<SweepEntry> = members.iter().map(|m| m.entry).collect();
    let slope = |f: fn(&SweepEntry) -> f64| fitted_slope(e, &entries.iter().map(f).collect::<Vec<_>>());
    Ok(ConvergenceReport {
        regime: match cfg.bc {
            BcRegime::Velocity(_) => "velocity".into(),
            BcRegime::Traction(_) => "traction".into(),
        },
        slope_linf: slope(|s| s.err_linf),
        slope_l2: slope(|s| s.err_l2),
        slope_ratio21: slope(|s| s.ratio21),
        slope_ratio32: slope(|s| s.ratio32),
        slope_closure: slope(|s| s.closure_linf),
        member_runtime_s: members.iter().map(|m| m.runtime_s).collect(),
        total_runtime_s: clock.elapsed().as_secs_f64(),
        entries,
    })
}

/// Write the sweep table and report.
pub fn write_sweep(report: &ConvergenceReport, cfg: &ScenarioConfig, out: &Path) -> Result<Manifest, FilmError> {
    let mut sink = OutputSink::new(out)?;
    sink.write_json("config.json", cfg)?;
    sink.write("convergence.csv", &report.table().render())?;
    sink.write_json("convergence_report.json", report)?;
    sink.finish(cfg.sha256())
}

/// Full coefficient table at time `t` as CSV.
pub fn dump_coefficients(cfg: &ScenarioConfig, t: f64) -> Result<String, FilmError> {
    let g = cfg.grid()?;
    let table = CoefficientTable::build(&g, cfg.chart.build().as_ref(), cfg.gap.build().as_ref(), t, cfg.gap_floor)?;
    Ok(table.to_csv())
}
