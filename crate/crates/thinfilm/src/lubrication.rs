//! Generalized Reynolds equation for the scaled pressure `P = eps^2 pbar^0`
//! and reconstruction of the limit velocity and pressure across the film.
//!
//! The operator `(1/sqrtA) div((h^3/sqrtA) M grad P)` is discretized with
//! bilinear elements in flux form, so integrating the equation over the
//! interior dual cells gives exactly the discrete boundary flux.

use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientTable, PointCoefficients};
use crate::error::FilmError;
use crate::geometry::{GapField, SurfaceChart};
use crate::grid::{apply_triplets, diff, grad, interpolate, solve_sparse, weighted_stiffness, Field2D, Grid2D, LinearSystem};
use crate::output::CsvTable;
use crate::profiles::VectorSpec;

/// Which expression of the diffusion weight to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightForm {
    /// `h^3 M / sqrtA` with right side in `12 mu` units.
    #[default]
    Metric,
    /// `h^3 sqrtA J^{0,0}`, the right side written per unit `12 mu` and rescaled.
    Contravariant,
}

/// Dirichlet trace of `P` on the boundary of the parameter square.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PressureTrace {
    Constant { value: f64 },
    Linear { value: f64, gradient: [f64; 2] },
    /// One-dimensional slider profile along `xi1` for the linear gap from `h_in` to `h_out`.
    Slider { h_in: f64, h_out: f64, speed: f64 },
}

impl Default for PressureTrace {
    fn default() -> Self {
        PressureTrace::Constant { value: 0.0 }
    }
}

impl PressureTrace {
    pub fn eval(&self, xi: [f64; 2], mu: f64) -> f64 {
        match *self {
            PressureTrace::Constant { value } => value,
            PressureTrace::Linear { value, gradient } => value + gradient[0] * xi[0] + gradient[1] * xi[1],
            PressureTrace::Slider { h_in, h_out, speed } => slider_pressure(h_in, h_out, mu, speed, xi[0]),
        }
    }

    pub fn field(&self, g: &Grid2D, mu: f64) -> Field2D {
        Field2D::from_fn(g, |x| self.eval(x, mu))
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            PressureTrace::Constant { value } if !value.is_finite() => Err("trace value must be finite".into()),
            PressureTrace::Linear { value, gradient } if !(value.is_finite() && gradient.iter().all(|g| g.is_finite())) => {
                Err("trace must be finite".into())
            }
            PressureTrace::Slider { h_in, h_out, speed } => {
                if !(h_in > 0.0 && h_out > 0.0 && speed.is_finite()) {
                    Err("slider trace needs positive gaps and a finite speed".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Velocity-type boundary data: lower surface velocity `V`, upper `W`, pressure trace.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LubricationBc {
    #[serde(default)]
    pub v: VectorSpec,
    #[serde(default)]
    pub w: VectorSpec,
    #[serde(default)]
    pub trace: PressureTrace,
}

/// Tangential surface velocities sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceVelocities {
    pub v: [Field2D; 2],
    pub w: [Field2D; 2],
}

impl SurfaceVelocities {
    pub fn from_bc(g: &Grid2D, bc: &LubricationBc) -> Self {
        SurfaceVelocities { v: bc.v.fields(g), w: bc.w.fields(g) }
    }
}

fn sqrt_a_div(g: &Grid2D, table: &CoefficientTable, u: &[Field2D; 2]) -> Field2D {
    let sa = table.field(|p| p.sqrt_a0);
    diff(g, &sa.mul(&u[0]), 0).add(&diff(g, &sa.mul(&u[1]), 1))
}

/// Nodal right side of the Reynolds equation.
pub fn reynolds_rhs(table: &CoefficientTable, vel: &SurfaceVelocities, mu: f64, form: WeightForm) -> Field2D {
    let g = &table.grid;
    let sum = [vel.w[0].add(&vel.v[0]), vel.w[1].add(&vel.v[1])];
    let div_sum = sqrt_a_div(g, table, &sum);
    let mut out = Field2D::zeros(g);
    for (k, p) in table.points.iter().enumerate() {
        let h = p.h();
        let dwv = [vel.w[0].data[k] - vel.v[0].data[k], vel.w[1].data[k] - vel.v[1].data[k]];
        let slope = p.gap.dh[0] * dwv[0] + p.gap.dh[1] * dwv[1];
        out.data[k] = match form {
            WeightForm::Metric => {
                12.0 * mu * p.gap.ht + 12.0 * mu * h * p.a1_over_a0() * p.w - 6.0 * mu * slope
                    + 6.0 * mu * h / p.sqrt_a0 * div_sum.data[k]
            }
            WeightForm::Contravariant => {
                let lubric = p.gap.ht + h * p.a1_over_a0() * p.w - 0.5 * slope + h / (2.0 * p.sqrt_a0) * div_sum.data[k];
                12.0 * mu * lubric
            }
        };
    }
    out
}

fn nodal_weight(p: &PointCoefficients, form: WeightForm) -> [[f64; 2]; 2] {
    let h3 = p.h().powi(3);
    std::array::from_fn(|r| {
        std::array::from_fn(|c| match form {
            WeightForm::Metric => h3 * p.m[r][c] / p.sqrt_a0,
            WeightForm::Contravariant => h3 * p.sqrt_a0 * p.j00(r, c),
        })
    })
}

/// Assemble `K P = -b` with `b_a = sqrtA RHS` times the nodal area and
/// Dirichlet rows on the whole boundary.
pub fn assemble_reynolds(
    table: &CoefficientTable,
    vel: &SurfaceVelocities,
    trace: &Field2D,
    mu: f64,
    form: WeightForm,
) -> Result<LinearSystem, FilmError> {
    let g = &table.grid;
    let weights: Vec<[[f64; 2]; 2]> = table.points.iter().map(|p| nodal_weight(p, form)).collect();
    for (k, w) in weights.iter().enumerate() {
        if !(w[0][0] > 0.0 && w[0][0] * w[1][1] - w[0][1] * w[1][0] > 0.0) {
            let (i, j) = g.ij(k);
            return Err(FilmError::NonSpdWeight { i, j });
        }
    }
    let triplets = weighted_stiffness(g, |i, j| {
        let c = [g.idx(i, j), g.idx(i + 1, j), g.idx(i, j + 1), g.idx(i + 1, j + 1)];
        std::array::from_fn(|r| std::array::from_fn(|s| 0.25 * c.iter().map(|&n| weights[n][r][s]).sum::<f64>()))
    });
    let rhs_field = reynolds_rhs(table, vel, mu, form);
    let mut rhs = vec![0.0; g.len()];
    let mut dirichlet = vec![None; g.len()];
    for j in 0..g.n2 {
        for i in 0..g.n1 {
            let k = g.idx(i, j);
            rhs[k] = -table.points[k].sqrt_a0 * rhs_field.data[k] * g.weight(i, j);
            if g.is_boundary(i, j) {
                dirichlet[k] = Some(trace.data[k]);
            }
        }
    }
    Ok(LinearSystem { n: g.len(), triplets, rhs, dirichlet })
}

/// Discrete integral balance of the solved system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Compatibility {
    /// `sum over interior nodes of sqrtA RHS area`
    pub source: f64,
    /// Net discrete flux of `W grad P` leaving through the boundary.
    pub boundary_flux: f64,
    /// `|source - flux|` relative to the total absolute source.
    pub defect: f64,
}

pub fn compatibility(sys: &LinearSystem, g: &Grid2D, p: &Field2D) -> Compatibility {
    let kp = apply_triplets(&sys.triplets, &p.data, sys.n);
    let (mut source, mut flux, mut scale) = (0.0, 0.0, 0.0);
    for j in 0..g.n2 {
        for i in 0..g.n1 {
            let k = g.idx(i, j);
            if g.is_boundary(i, j) {
                flux += kp[k];
            } else {
                source -= sys.rhs[k];
                scale += sys.rhs[k].abs();
            }
        }
    }
    Compatibility { source, boundary_flux: flux, defect: (source - flux).abs() / scale.max(1.0) }
}

/// Limit solution: pressure `P`, velocity profile coefficients and `u_3^0`.
#[derive(Debug, Clone)]
pub struct LubricationSolution {
    pub grid: Grid2D,
    pub mu: f64,
    /// `P = eps^2 pbar^0`
    pub p: Field2D,
    pub dp: [Field2D; 2],
    /// `h^2 / (2 mu) J^{0,0} grad P`, the coefficient of `xi3^2 - xi3`.
    pub quad: [Field2D; 2],
    pub v: [Field2D; 2],
    pub w: [Field2D; 2],
    /// `u_3^0 = dX/dt . a3`
    pub u3: Field2D,
    pub compatibility: Compatibility,
}

impl LubricationSolution {
    /// Tangential components of `u^0` at node `(i, j)` and height `xi3`.
    pub fn velocity(&self, i: usize, j: usize, xi3: f64) -> [f64; 2] {
        std::array::from_fn(|c| {
            let (v, w) = (self.v[c].get(i, j), self.w[c].get(i, j));
            (xi3 * xi3 - xi3) * self.quad[c].get(i, j) + xi3 * (w - v) + v
        })
    }

    pub fn profile_table(&self) -> CsvTable {
        let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mut header = vec!["xi1".to_string(), "xi2".to_string(), "p_m2".to_string()];
        for c in 1..=2 {
            for z in ["0", "0.25", "0.5", "0.75", "1"] {
                header.push(format!("u{c}_xi3_{z}"));
            }
        }
        header.push("u3".into());
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut t = CsvTable::new(&refs);
        let g = &self.grid;
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                let xi = g.xi(i, j);
                let mut row = vec![xi[0], xi[1], self.p.get(i, j)];
                for c in 0..2 {
                    row.extend(levels.iter().map(|&z| self.velocity(i, j, z)[c]));
                }
                row.push(self.u3.get(i, j));
                t.push(row);
            }
        }
        t
    }
}

/// Solve the Reynolds problem on a prebuilt coefficient table.
pub fn solve_reynolds(
    table: &CoefficientTable,
    vel: &SurfaceVelocities,
    trace: &Field2D,
    mu: f64,
) -> Result<LubricationSolution, FilmError> {
    let g = &table.grid;
    let sys = assemble_reynolds(table, vel, trace, mu, WeightForm::Metric)?;
    let rep = solve_sparse(&sys)?;
    let p = Field2D::from_vec(g, rep.x);
    let dp = grad(g, &p);
    let mut quad = [Field2D::zeros(g), Field2D::zeros(g)];
    for (k, pc) in table.points.iter().enumerate() {
        let s = pc.h() * pc.h() / (2.0 * mu);
        for c in 0..2 {
            quad[c].data[k] = s * (pc.j00(c, 0) * dp[0].data[k] + pc.j00(c, 1) * dp[1].data[k]);
        }
    }
    let compatibility = compatibility(&sys, g, &p);
    Ok(LubricationSolution {
        grid: g.clone(),
        mu,
        p,
        dp,
        quad,
        v: vel.v.clone(),
        w: vel.w.clone(),
        u3: table.field(|pc| pc.w),
        compatibility,
    })
}

/// Build the coefficients at time `t` and solve.
pub fn solve_lubrication(
    grid: &Grid2D,
    chart: &dyn SurfaceChart,
    gap: &dyn GapField,
    bc: &LubricationBc,
    mu: f64,
    t: f64,
    floor: f64,
) -> Result<(CoefficientTable, LubricationSolution), FilmError> {
    let table = CoefficientTable::build(grid, chart, gap, t, floor)?;
    let vel = SurfaceVelocities::from_bc(grid, bc);
    let sol = solve_reynolds(&table, &vel, &bc.trace.field(grid, mu), mu)?;
    Ok((table, sol))
}

/// Velocity and pressure across the film at finite `eps`.
#[derive(Debug, Clone)]
pub struct FullField {
    pub grid: Grid2D,
    pub eps: f64,
    pub p0: Field2D,
    pub p1: Field2D,
    pub p2: Field2D,
    /// Coefficients of `xi3^0, xi3^1, xi3^2` of each tangential component.
    pub u: [[Field2D; 3]; 2],
    pub u3: Field2D,
}

/// Velocity components in `(a1, a2, a3)` and pressure at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub u: [f64; 3],
    pub p: f64,
}

impl FullField {
    /// Bilinear in `(xi1, xi2)`, exact polynomial in `xi3`.
    pub fn evaluate(&self, xi: [f64; 3]) -> FieldSample {
        let g = &self.grid;
        let at = |f: &Field2D| interpolate(g, f, [xi[0], xi[1]]);
        let z = xi[2];
        let tang = |c: usize| at(&self.u[c][0]) + z * at(&self.u[c][1]) + z * z * at(&self.u[c][2]);
        FieldSample {
            u: [tang(0), tang(1), at(&self.u3)],
            p: at(&self.p0) + z * at(&self.p1) + z * z * at(&self.p2),
        }
    }
}

/// Leading-order pressure corrections `pbar^1`, `pbar^2` and the quadratic
/// velocity profile built from a lubrication solution.
pub fn full_field_reconstruction(sol: &LubricationSolution, table: &CoefficientTable, eps: f64) -> FullField {
    let g = &sol.grid;
    let mu = sol.mu;
    // u^2 = quad, u^1 = W - V - u^2
    let u2 = sol.quad.clone();
    let u1: [Field2D; 2] = std::array::from_fn(|c| sol.w[c].sub(&sol.v[c]).sub(&u2[c]));
    let div1 = sqrt_a_div(g, table, &u1);
    let div2 = diff(g, &u2[0], 0).add(&diff(g, &u2[1], 1));
    let mut p1 = Field2D::zeros(g);
    let mut p2 = Field2D::zeros(g);
    for (k, pc) in table.points.iter().enumerate() {
        let h = pc.h();
        let dh = pc.gap.dh;
        let slope1 = dh[0] * u1[0].data[k] + dh[1] * u1[1].data[k];
        p1.data[k] = mu * (-div1.data[k] / pc.sqrt_a0 + slope1 / h);
        let hsum: f64 = (0..2)
            .map(|kk| u2[kk].data[k] * (pc.hc[0][0][0][kk] + pc.hc[0][1][1][kk]))
            .sum();
        let slope2 = dh[0] * u2[0].data[k] + dh[1] * u2[1].data[k];
        p2.data[k] = -mu * (div2.data[k] + hsum - 2.0 / h * slope2);
    }
    let u = [
        [sol.v[0].clone(), u1[0].clone(), u2[0].clone()],
        [sol.v[1].clone(), u1[1].clone(), u2[1].clone()],
    ];
    FullField {
        grid: g.clone(),
        eps,
        p0: sol.p.scale(1.0 / (eps * eps)),
        p1,
        p2,
        u,
        u3: sol.u3.clone(),
    }
}

/// Closed-form pressure of the infinitely wide slider with linear gap
/// `h(x) = h_in + (h_out - h_in) x` and zero pressure at both ends.
pub fn slider_pressure(h_in: f64, h_out: f64, mu: f64, speed: f64, x: f64) -> f64 {
    let s = h_out - h_in;
    let h = h_in + s * x;
    if s == 0.0 {
        return 0.0;
    }
    let c = slider_constant(h_in, h_out, mu, speed);
    6.0 * mu * speed / s * (1.0 / h_in - 1.0 / h) + c / (2.0 * s) * (1.0 / (h_in * h_in) - 1.0 / (h * h))
}

/// Integration constant `C` in `h^3 p' = 6 mu U h + C`.
fn slider_constant(h_in: f64, h_out: f64, mu: f64, speed: f64) -> f64 {
    let s = h_out - h_in;
    let i2 = (1.0 / h_in - 1.0 / h_out) / s;
    let i3 = (1.0 / (h_in * h_in) - 1.0 / (h_out * h_out)) / (2.0 * s);
    -6.0 * mu * speed * i2 / i3
}

/// Location and value of the slider pressure maximum.
pub fn slider_peak(h_in: f64, h_out: f64, mu: f64, speed: f64) -> (f64, f64) {
    let c = slider_constant(h_in, h_out, mu, speed);
    let h_star = -c / (6.0 * mu * speed);
    let x = (h_star - h_in) / (h_out - h_in);
    (x, slider_pressure(h_in, h_out, mu, speed, x))
}

/// Load `int_0^1 p dx` of the slider.
pub fn slider_load(h_in: f64, h_out: f64, mu: f64, speed: f64) -> f64 {
    let s = h_out - h_in;
    let c = slider_constant(h_in, h_out, mu, speed);
    let inv1 = (h_out / h_in).ln() / s;
    let inv2 = (1.0 / h_in - 1.0 / h_out) / s;
    6.0 * mu * speed / s * (1.0 / h_in - inv1) + c / (2.0 * s) * (1.0 / (h_in * h_in) - inv2)
}

/// Maximum of a nodal field along the grid row `j`, refined by a parabola
/// through the largest node and its neighbours.
pub fn pressure_peak(g: &Grid2D, p: &Field2D, j: usize) -> (f64, f64) {
    let (mut im, mut pm) = (0, f64::NEG_INFINITY);
    for i in 0..g.n1 {
        if p.get(i, j) > pm {
            pm = p.get(i, j);
            im = i;
        }
    }
    if im == 0 || im == g.n1 - 1 {
        return (g.xi(im, j)[0], pm);
    }
    let (a, b, c) = (p.get(im - 1, j), pm, p.get(im + 1, j));
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        return (g.xi(im, j)[0], pm);
    }
    let off = 0.5 * (a - c) / den;
    (g.xi(im, j)[0] + off * g.d1, b - 0.25 * (a - c) * off)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CosineGap, CylinderPatch, LinearGap, Plane};

    fn plane() -> Plane {
        Plane { length: [1.0, 1.0] }
    }

    // p' = 6 mu U / h^2 + C / h^3 integrated with composite Simpson, C fixed by p(1) = 0
    fn simpson_slider(h_in: f64, h_out: f64, mu: f64, u: f64, x: f64) -> f64 {
        let h = |s: f64| h_in + (h_out - h_in) * s;
        let integ = |f: &dyn Fn(f64) -> f64, b: f64| {
            let n = 2000;
            let d = b / n as f64;
            (0..=n)
                .map(|k| {
                    let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                    w * f(k as f64 * d)
                })
                .sum::<f64>()
                * d
                / 3.0
        };
        let a = integ(&|s| 6.0 * mu * u / h(s).powi(2), 1.0);
        let b = integ(&|s| 1.0 / h(s).powi(3), 1.0);
        let c = -a / b;
        integ(&|s| 6.0 * mu * u / h(s).powi(2) + c / h(s).powi(3), x)
    }

    fn slider_case(n: usize) -> (Grid2D, LubricationSolution) {
        let g = Grid2D::new(n, n).unwrap();
        let bc = LubricationBc {
            v: VectorSpec::Uniform { value: [1.0, 0.0] },
            w: VectorSpec::default(),
            trace: PressureTrace::Slider { h_in: 1.5, h_out: 1.0, speed: 1.0 },
        };
        let gap = LinearGap { h0: 1.5, slope: [-0.5, 0.0] };
        let (_, sol) = solve_lubrication(&g, &plane(), &gap, &bc, 1.0, 0.0, 1e-6).unwrap();
        (g, sol)
    }

    #[test]
    fn closed_form_slider_matches_quadrature() {
        for x in [0.1, 0.37, 0.5, 0.9] {
            let a = slider_pressure(1.5, 1.0, 0.7, 1.3, x);
            let b = simpson_slider(1.5, 1.0, 0.7, 1.3, x);
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "{x}: {a} {b}");
        }
        let (xs, _) = slider_peak(1.5, 1.0, 1.0, 1.0);
        // classical h* = 2 h_in h_out / (h_in + h_out)
        assert!((1.5 - 0.5 * xs - 1.2).abs() < 1e-14);
    }

    #[test]
    fn slider_pressure_within_one_percent() {
        let (g, sol) = slider_case(65);
        let mut err: f64 = 0.0;
        let mut pmax: f64 = 0.0;
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                let exact = simpson_slider(1.5, 1.0, 1.0, 1.0, g.xi(i, j)[0]);
                err = err.max((sol.p.get(i, j) - exact).abs());
                pmax = pmax.max(exact.abs());
            }
        }
        assert!(err / pmax < 0.01, "{}", err / pmax);
        let (xs, ps) = slider_peak(1.5, 1.0, 1.0, 1.0);
        let (xn, pn) = pressure_peak(&g, &sol.p, g.n2 / 2);
        assert!((xn - xs).abs() < 0.01 && (pn - ps).abs() < 0.01 * ps, "{xn} {xs} {pn} {ps}");
    }

    #[test]
    fn weight_forms_give_the_same_system() {
        let g = Grid2D::new(17, 13).unwrap();
        let chart = CylinderPatch { radius: 2.0, length: 1.0, span: 1.0, offset: 0.0, omega: 0.4 };
        let gap = CosineGap { h0: 1.0, amplitude: 0.2, wavenumber: [1.0, 1.0], frequency: 0.5 };
        let table = CoefficientTable::build(&g, &chart, &gap, 0.3, 1e-6).unwrap();
        let bc = LubricationBc {
            v: VectorSpec::Uniform { value: [0.3, -0.2] },
            w: VectorSpec::Stream { amplitude: 0.1, wavenumber: [1.0, 1.0] },
            trace: PressureTrace::default(),
        };
        let vel = SurfaceVelocities::from_bc(&g, &bc);
        let tr = bc.trace.field(&g, 0.5);
        let a = assemble_reynolds(&table, &vel, &tr, 0.5, WeightForm::Metric).unwrap();
        let b = assemble_reynolds(&table, &vel, &tr, 0.5, WeightForm::Contravariant).unwrap();
        let scale = a.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.rhs.iter().zip(&b.rhs) {
            assert!((x - y).abs() <= 1e-12 * scale);
        }
        for (x, y) in a.triplets.iter().zip(&b.triplets) {
            assert_eq!((x.0, x.1), (y.0, y.1));
            assert!((x.2 - y.2).abs() <= 1e-12 * x.2.abs().max(1.0));
        }
    }

    #[test]
    fn harmonic_extension_when_source_vanishes() {
        let g = Grid2D::new(17, 17).unwrap();
        let bc = LubricationBc { trace: PressureTrace::Linear { value: 1.0, gradient: [2.0, -0.5] }, ..Default::default() };
        let (_, sol) = solve_lubrication(&g, &plane(), &LinearGap { h0: 1.0, slope: [0.0; 2] }, &bc, 1.0, 0.0, 1e-6).unwrap();
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                let x = g.xi(i, j);
                assert!((sol.p.get(i, j) - (1.0 + 2.0 * x[0] - 0.5 * x[1])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn poiseuille_midplane_velocity() {
        let g = Grid2D::new(17, 17).unwrap();
        let (h, mu, g1) = (0.8, 0.3, -1.7);
        let bc = LubricationBc { trace: PressureTrace::Linear { value: 0.0, gradient: [g1, 0.0] }, ..Default::default() };
        let (_, sol) = solve_lubrication(&g, &plane(), &LinearGap { h0: h, slope: [0.0; 2] }, &bc, mu, 0.0, 1e-6).unwrap();
        let u = sol.velocity(8, 5, 0.5);
        assert!((u[0] + h * h * g1 / (8.0 * mu)).abs() < 1e-12, "{}", u[0]);
        assert!(u[1].abs() < 1e-12);
    }

    #[test]
    fn couette_profile_is_linear() {
        let g = Grid2D::new(9, 9).unwrap();
        let bc = LubricationBc { w: VectorSpec::Uniform { value: [1.0, 0.0] }, ..Default::default() };
        let (table, sol) = solve_lubrication(&g, &plane(), &LinearGap { h0: 1.0, slope: [0.0; 2] }, &bc, 1.0, 0.0, 1e-6).unwrap();
        for z in [0.0, 0.25, 0.5, 0.75, 1.0] {
            assert!((sol.velocity(4, 4, z)[0] - z).abs() < 1e-12);
        }
        let full = full_field_reconstruction(&sol, &table, 0.1);
        assert!(full.p1.max_abs() < 1e-12 && full.p2.max_abs() < 1e-12);
    }

    #[test]
    fn reconstruction_matches_surface_velocities() {
        let g = Grid2D::new(17, 17).unwrap();
        let chart = CylinderPatch { radius: 2.0, length: 1.0, span: 1.0, offset: 0.0, omega: 0.0 };
        let gap = CosineGap { h0: 1.0, amplitude: 0.3, wavenumber: [1.0, 0.0], frequency: 0.0 };
        let bc = LubricationBc {
            v: VectorSpec::Uniform { value: [1.0, 0.5] },
            w: VectorSpec::Uniform { value: [0.0, -0.2] },
            trace: PressureTrace::default(),
        };
        let (table, sol) = solve_lubrication(&g, &chart, &gap, &bc, 1.0, 0.0, 1e-6).unwrap();
        let full = full_field_reconstruction(&sol, &table, 0.1);
        for xi in [[0.25, 0.5], [0.5, 0.125]] {
            let bottom = full.evaluate([xi[0], xi[1], 0.0]);
            let top = full.evaluate([xi[0], xi[1], 1.0]);
            assert!((bottom.u[0] - 1.0).abs() < 1e-12 && (bottom.u[1] - 0.5).abs() < 1e-12);
            assert!(top.u[0].abs() < 1e-12 && (top.u[1] + 0.2).abs() < 1e-12);
        }
        assert!(sol.compatibility.defect < 1e-9, "{:?}", sol.compatibility);
    }
}
