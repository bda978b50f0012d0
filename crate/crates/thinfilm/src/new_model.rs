//! The two-dimensional model for the coefficients of the velocity and
//! pressure polynomials in `xi3`.
//!
//! Primary unknowns are the tangential coefficients `u_i^k` (`k = 0..3`)
//! and `p^0`. The normal coefficients `u_3^k` and the pressure corrections
//! `p^1..p^3` are derived from them by [`eliminate_vertical`]. Which of the
//! primary unknowns evolve and which follow from closures depends on the
//! boundary regime:
//!
//! * velocity regime: `u^0 = V`, `u^2` from the depth momentum balance,
//!   `u^3` from the `xi3` momentum balance, `u^1` from the upper wall
//!   condition, and `p^0` from the elliptic consistency equation;
//! * traction regime: `u^0` evolves, `u^1`, `u^2`, `u^3` and `p^0` follow
//!   from the traction and friction conditions.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{BodyForce, CoefficientTable, PointCoefficients};
use crate::error::FilmError;
use crate::grid::{cfl_limit, diff, grad, hessian, time_step_imex, FactoredSystem, Field2D, Grid2D};
use crate::lubrication::{assemble_reynolds, LubricationBc, SurfaceVelocities, WeightForm};
use crate::output::CsvTable;
use crate::shallow_water::{transport_speed, wall_velocity, DiffusionCache, Jet2, Physics, TableSource, TractionBc, TractionFields};

/// Smallest `eps` accepted by the residual evaluation.
pub const EPS_MIN: f64 = 1e-4;

const PRESSURE_TOL: f64 = 1e-12;
const PRESSURE_MAX_ITER: usize = 200;

/// Names of the nine first-group residual components, in output order.
pub const RESIDUAL_NAMES: [&str; 9] = [
    "momentum0_1",
    "momentum0_2",
    "momentum1_1",
    "momentum1_2",
    "momentum2_1",
    "momentum2_2",
    "momentum3_1",
    "momentum3_2",
    "continuity3",
];

/// Coefficients of the velocity and pressure polynomials in `xi3`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStack {
    pub eps: f64,
    pub t: f64,
    /// `u[k][i]` is the tangential coefficient `u_i^k`.
    pub u: [[Field2D; 2]; 4],
    /// `u3[k]` is `u_3^k`.
    pub u3: [Field2D; 4],
    /// `p[k]` is `p^k`.
    pub p: [Field2D; 4],
}

impl FieldStack {
    pub fn zeros(g: &Grid2D, eps: f64, t: f64) -> Self {
        let z = Field2D::zeros(g);
        FieldStack {
            eps,
            t,
            u: std::array::from_fn(|_| [z.clone(), z.clone()]),
            u3: std::array::from_fn(|_| z.clone()),
            p: std::array::from_fn(|_| z.clone()),
        }
    }

    /// Largest absolute difference over every field.
    pub fn max_diff(&self, o: &FieldStack) -> f64 {
        let mut m: f64 = 0.0;
        for k in 0..4 {
            for i in 0..2 {
                m = m.max(self.u[k][i].sub(&o.u[k][i]).max_abs());
            }
            m = m.max(self.u3[k].sub(&o.u3[k]).max_abs());
            m = m.max(self.p[k].sub(&o.p[k]).max_abs());
        }
        m
    }

    /// `1/2 int sqrtA h |u^0|^2`.
    pub fn energy(&self, table: &CoefficientTable) -> f64 {
        let g = &table.grid;
        let mass = table.field(|p| p.sqrt_a0 * p.h());
        let sq = self.u[0][0].mul(&self.u[0][0]).add(&self.u[0][1].mul(&self.u[0][1]));
        0.5 * mass.mul(&sq).integral(g)
    }

    /// One row per node with every coefficient.
    pub fn snapshot_table(&self, g: &Grid2D) -> CsvTable {
        let mut header: Vec<String> = ["t", "i", "j", "xi1", "xi2"].iter().map(|s| s.to_string()).collect();
        for c in 1..=3 {
            for k in 0..4 {
                header.push(format!("u{c}_{k}"));
            }
        }
        for k in 0..4 {
            header.push(format!("p_{k}"));
        }
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut t = CsvTable::new(&refs);
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                let xi = g.xi(i, j);
                let mut row = vec![self.t, i as f64, j as f64, xi[0], xi[1]];
                for c in 0..2 {
                    row.extend((0..4).map(|k| self.u[k][c].get(i, j)));
                }
                row.extend((0..4).map(|k| self.u3[k].get(i, j)));
                row.extend((0..4).map(|k| self.p[k].get(i, j)));
                t.push(row);
            }
        }
        t
    }
}

/// Physical constants, body force and the choice of `p^1` expression.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub physics: Physics,
    pub force: BodyForce,
    /// Use only the leading part of `p^1` instead of the full expression.
    pub truncate_p1: bool,
}

impl ModelParams {
    pub fn new(physics: Physics) -> Self {
        ModelParams { physics, force: BodyForce::none(), truncate_p1: false }
    }
}

/// Boundary regime on the two surfaces.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum BcRegime {
    Velocity(LubricationBc),
    Traction(TractionBc),
}

fn grads(g: &Grid2D, f: &[Field2D; 2]) -> [[Field2D; 2]; 2] {
    [grad(g, &f[0]), grad(g, &f[1])]
}

fn sqrt_a_div(g: &Grid2D, sa: &Field2D, u: &[Field2D; 2]) -> Field2D {
    diff(g, &sa.mul(&u[0]), 0).add(&diff(g, &sa.mul(&u[1]), 1))
}

fn pair(g: &Grid2D, rows: &[[f64; 2]]) -> [Field2D; 2] {
    std::array::from_fn(|c| Field2D::from_vec(g, rows.iter().map(|r| r[c]).collect()))
}

fn ddot(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `u_3^k / eps` for `k = 1, 2, 3`, from the tangential coefficients.
///
/// Working with the scaled quantities keeps the `1/eps` factors of the
/// pressure corrections away from small differences.
fn vertical_scaled(table: &CoefficientTable, u: &[[Field2D; 2]; 4], eps: f64) -> [Field2D; 3] {
    let g = &table.grid;
    let sa = table.field(|p| p.sqrt_a0);
    let div0 = sqrt_a_div(g, &sa, &u[0]);
    let div1 = sqrt_a_div(g, &sa, &u[1]);
    let d0 = grads(g, &u[0]);
    let d1 = grads(g, &u[1]);
    let d2 = grads(g, &u[2]);
    let rows: Vec<[f64; 3]> = (0..g.len())
        .into_par_iter()
        .map(|n| {
            let p = &table.points[n];
            let (h, a, dh) = (p.h(), p.a1_over_a0(), p.gap.dh);
            let at = |f: &[Field2D; 2]| [f[0].data[n], f[1].data[n]];
            let (u0, u1, u2) = (at(&u[0]), at(&u[1]), at(&u[2]));
            let v1 = -h * div0.data[n] / p.sqrt_a0 - h * p.w * a;
            let u0f = [u0[0], u0[1], p.w];
            let mut s0 = 0.0;
            for l in 0..2 {
                for k in 0..2 {
                    s0 += d0[k][l].data[n] * p.b[1][l][k];
                }
                for k in 0..3 {
                    s0 += u0f[k] * p.hc[1][l][l][k];
                }
            }
            let v2 = -h / (2.0 * p.sqrt_a0) * div1.data[n] + 0.5 * ddot(&dh, &u1) - eps * h * v1 * a - 0.5 * eps * h * h * s0;
            let u1f = [u1[0], u1[1], eps * v1];
            let u2f = [u2[0], u2[1], eps * v2];
            let br2 = bracket2(p, &u2f, [d2[0][0].data[n], d2[1][1].data[n]]);
            let mut br1 = 0.0;
            let mut br0 = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    br1 += h * d1[k][l].data[n] * p.b[1][l][k];
                    br0 += d0[k][l].data[n] * p.b[2][l][k];
                }
                br1 += u1f[k] * p.b[1][2][k];
            }
            for k in 0..3 {
                for l in 0..2 {
                    br1 += h * u1f[k] * p.hc[1][l][l][k];
                    br0 += u0f[k] * p.hc[2][l][l][k];
                }
            }
            let v3 = -h / 3.0 * br2 - eps * h / 3.0 * br1 - eps * eps * h.powi(3) / 3.0 * br0;
            [v1, v2, v3]
        })
        .collect();
    std::array::from_fn(|c| Field2D::from_vec(g, rows.iter().map(|r| r[c]).collect()))
}

/// `sum_k d_k u_k^2 + sum_k u_k^2 sum_l H^0_llk - (2/h) sum_k u_k^2 dh_k`.
fn bracket2(p: &PointCoefficients, u2: &[f64; 3], diag_grad: [f64; 2]) -> f64 {
    let mut s = diag_grad[0] + diag_grad[1];
    for k in 0..3 {
        s += u2[k] * (p.hc[0][0][0][k] + p.hc[0][1][1][k]);
    }
    s - 2.0 / p.h() * (u2[0] * p.gap.dh[0] + u2[1] * p.gap.dh[1])
}

/// Recompute `u_3^k` and `p^1..p^3` from the primary unknowns.
pub fn eliminate_vertical(stack: &FieldStack, table: &CoefficientTable, params: &ModelParams) -> Result<FieldStack, FilmError> {
    let g = &table.grid;
    for (n, p) in table.points.iter().enumerate() {
        if !(p.h() > 0.0) {
            let (i, j) = g.ij(n);
            return Err(FilmError::NonPositiveGap { h: p.h(), floor: 0.0, i, j });
        }
    }
    let eps = stack.eps;
    let (mu, rho0) = (params.physics.mu, params.physics.rho0);
    let force = &params.force;
    let v = vertical_scaled(table, &stack.u, eps);
    let u = &stack.u;
    let sa = table.field(|p| p.sqrt_a0);
    let div1 = sqrt_a_div(g, &sa, &u[1]);
    let d0 = grads(g, &u[0]);
    let d2 = grads(g, &u[2]);
    let dw = [table.field(|p| p.dw[0]), table.field(|p| p.dw[1])];
    let ddw = [grad(g, &dw[0]), grad(g, &dw[1])];
    let rows: Vec<[f64; 3]> = (0..g.len())
        .into_par_iter()
        .map(|n| {
            let p = &table.points[n];
            let (h, a, dh) = (p.h(), p.a1_over_a0(), p.gap.dh);
            let at = |f: &[Field2D; 2]| [f[0].data[n], f[1].data[n]];
            let (u0, u1, u2) = (at(&u[0]), at(&u[1]), at(&u[2]));
            let (v1, v2) = (v[0].data[n], v[1].data[n]);
            let u0f = [u0[0], u0[1], p.w];
            let du0 = |k: usize, l: usize| if k < 2 { d0[k][l].data[n] } else { p.dw[l] };

            let p1 = if params.truncate_p1 {
                mu * (-div1.data[n] / p.sqrt_a0 + ddot(&dh, &u1) / h)
            } else {
                let mut lhs = p.wt;
                for l in 0..2 {
                    lhs += p.dw[l] * (u0[l] - p.c0[l]);
                }
                for k in 0..2 {
                    let quad: f64 = (0..2).map(|l| u0[l] * p.n_da[l][k]).sum();
                    lhs += u0[k] * (p.q0[2][k] + quad);
                }
                let mut visc = 0.0;
                for l in 0..2 {
                    for m in 0..2 {
                        visc += p.j00(l, m) * ddw[l][m].data[n];
                    }
                }
                for k in 0..3 {
                    for l in 0..2 {
                        visc += du0(k, l) * p.l0[k][l][2];
                    }
                    visc += u0f[k] * p.s0[2][k];
                }
                rho0 * eps * h * (force.bar(0, 2) - lhs) + mu * (eps * h * visc + a * eps * v1 + 2.0 * v2 / h)
            };

            let u2f = [u2[0], u2[1], eps * v2];
            let br2 = bracket2(p, &u2f, [d2[0][0].data[n], d2[1][1].data[n]]);
            let p2 = -mu * br2;

            let mut inertia = 0.0;
            for k in 0..2 {
                let mut s = p.q0[2][k] + p.dw[k];
                for l in 0..2 {
                    s += u0[l] * (p.n_da[k][l] + p.n_da[l][k]);
                }
                inertia += u2[k] * s;
                for l in 0..2 {
                    inertia += u1[l] * u1[k] * p.n_da[k][l];
                }
            }
            let hmm3 = p.hc[0][0][0][2] + p.hc[0][1][1][2];
            let mut visc3 = -br2 * hmm3;
            for k in 0..2 {
                for l in 0..2 {
                    visc3 += d2[k][l].data[n] * p.l20[k][l][2];
                }
                visc3 += u2[k] * p.s20[2][k];
            }
            let p3 = -eps * rho0 * h / 3.0 * inertia + eps * mu * h / 3.0 * visc3 + eps * rho0 * h / 3.0 * force.bar(2, 2);
            [p1, p2, p3]
        })
        .collect();
    let mut out = stack.clone();
    out.u3 = [table.field(|p| p.w), v[0].scale(eps), v[1].scale(eps), v[2].scale(eps)];
    for c in 0..3 {
        out.p[c + 1] = Field2D::from_vec(g, rows.iter().map(|r| r[c]).collect());
    }
    Ok(out)
}

/// `sum_k u_3^k - eps dh/dt`, which the upper wall condition sets to zero.
pub fn vertical_closure(stack: &FieldStack, table: &CoefficientTable) -> Field2D {
    let ht = table.field(|p| p.gap.ht);
    stack.u3[1].add(&stack.u3[2]).add(&stack.u3[3]).axpy(-stack.eps, &ht)
}

/// Values and derivatives of the stack at one node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeJet {
    /// `u[k][c]`, with `c = 2` the normal component.
    pub u: [[f64; 3]; 4],
    /// `du[k][c][l]`, derivative along `xi_l`.
    pub du: [[[f64; 2]; 3]; 4],
    /// `ddu[k][i][l][m]`, tangential components only.
    pub ddu: [[[[f64; 2]; 2]; 2]; 4],
    /// Time derivatives of the tangential coefficients.
    pub dt: [[f64; 2]; 4],
    pub p: [f64; 4],
    pub dp: [[f64; 2]; 4],
}

/// Pointwise residuals of the nine first-group equations, each written as
/// left side minus right side.
pub fn residual_at(pc: &PointCoefficients, jt: &NodeJet, eps: f64, physics: Physics, force: &BodyForce) -> [f64; 9] {
    let h = pc.h();
    let dh = pc.gap.dh;
    let ht = pc.gap.ht;
    let a = pc.a1_over_a0();
    let w = pc.w;
    let nu = physics.nu();
    let rho0 = physics.rho0;
    let eh = eps * h;
    let u = &jt.u;
    let du = &jt.du;
    let hc0 = &pc.hc[0];
    let b = &pc.b;
    let jm = &pc.jm;
    let c0 = &pc.c0;
    let cs = &pc.c_shift;
    let gap3 = u[0][2] - w;

    // d_l u_i^k + sum_m u_m^k H^0_ilm
    let cd = |k: usize, i: usize, l: usize| du[k][i][l] + (0..3).map(|m| u[k][m] * hc0[i][l][m]).sum::<f64>();
    let lap = |k: usize, i: usize, jj: &[[f64; 3]; 3]| {
        let mut s = 0.0;
        for l in 0..2 {
            for m in 0..2 {
                s += jt.ddu[k][i][l][m] * jj[l][m];
            }
        }
        s
    };
    let lap2 = |k: usize, i: usize, jj: &[[f64; 2]; 2]| {
        let mut s = 0.0;
        for l in 0..2 {
            for m in 0..2 {
                s += jt.ddu[k][i][l][m] * jj[l][m];
            }
        }
        s
    };
    let lterm = |k: usize, i: usize, ll: &[[[f64; 3]; 2]; 3]| {
        let mut s = 0.0;
        for kk in 0..3 {
            for l in 0..2 {
                s += du[k][kk][l] * ll[kk][l][i];
            }
        }
        s
    };
    let sterm = |k: usize, i: usize, ss: &[[f64; 3]; 3]| (0..3).map(|kk| u[k][kk] * ss[i][kk]).sum::<f64>();
    // sum_l d_l u_i^k (u_l^0 - C^0_l) + sum_k u_k (Q^0_ik + sum_l u_l^0 H^0_ilk)
    let transport = |k: usize, i: usize| {
        let mut s = 0.0;
        for l in 0..2 {
            s += du[k][i][l] * (u[0][l] - c0[l]);
        }
        for kk in 0..3 {
            let q: f64 = (0..2).map(|l| u[0][l] * hc0[i][l][kk]).sum();
            s += u[k][kk] * (pc.q0[i][kk] + q);
        }
        s
    };
    let grad_p = |k: usize, i: usize, jj: &[[f64; 3]; 3]| (0..2).map(|l| jt.dp[k][l] * jj[i][l]).sum::<f64>();
    // sum_m u_m^k B^j_lm over tangential m
    let bu = |j: usize, k: usize, l: usize| (0..2).map(|m| u[k][m] * b[j][l][m]).sum::<f64>();
    let slope = |k: usize| u[k][0] * dh[0] + u[k][1] * dh[1];
    let hsum = |j: usize, k: usize| (0..3).map(|kk| u[k][kk] * (pc.hc[j][0][0][kk] + pc.hc[j][1][1][kk])).sum::<f64>();

    let mut r = [0.0; 9];
    for i in 0..2 {
        // xi3^0
        let lhs = jt.dt[0][i] + transport(0, i) + u[1][i] * gap3 / eh;
        let visc = lap(0, i, &jm[0][0]) + lterm(0, i, &pc.l0) + sterm(0, i, &pc.s0) + a * u[1][i] / eh + 2.0 * u[2][i] / (eh * eh);
        r[i] = lhs - (-grad_p(0, i, &jm[0][0]) / rho0 + nu * visc + force.bar(0, i));

        // xi3^1
        let mut lhs = jt.dt[1][i];
        for l in 0..2 {
            lhs += du[1][i][l] * (u[0][l] - c0[l]);
        }
        for k in 0..3 {
            let mut s = pc.q0[i][k];
            for l in 0..2 {
                let d = if k == i { dh[l] / h } else { 0.0 };
                s += u[0][l] * (hc0[i][l][k] - d);
            }
            lhs += u[1][k] * s;
        }
        for l in 0..2 {
            lhs += u[1][l] * cd(0, i, l);
        }
        lhs -= u[1][i] * (ht + c0[2]) / h;
        for l in 0..2 {
            lhs += eh * cd(0, i, l) * (bu(1, 0, l) - cs[1][l]);
        }
        lhs += 2.0 * u[2][i] * gap3 / eh + u[1][i] * u[1][2] / eh;
        let pres = -grad_p(1, i, &jm[0][0]) / rho0 - eh / rho0 * grad_p(0, i, &jm[0][1]) - jt.p[1] * jm[0][0][i][2] / (rho0 * h);
        let visc = lap(1, i, &jm[0][0])
            + lterm(1, i, &pc.l10)
            + sterm(1, i, &pc.s10)
            + eps * (2.0 * h * lap(0, i, &jm[1][0]) + lterm(0, i, &pc.l01) + sterm(0, i, &pc.s01))
            + 2.0 * a * u[2][i] / eh
            + 6.0 * u[3][i] / (eh * eh);
        r[2 + i] = lhs - (pres + nu * visc + force.bar(1, i));

        // xi3^2
        let mut lhs = jt.dt[2][i] + transport(2, i);
        lhs += 2.0 / h * u[2][i] * (u[1][2] / eps - slope(0) - ht - c0[2]) + u[2][2] * u[1][i] / eh;
        for l in 0..2 {
            lhs += cd(0, i, l) * (u[2][l] + eh * bu(1, 1, l) + eh * eh * (bu(2, 0, l) - cs[2][l]));
            lhs += cd(1, i, l) * (u[1][l] - eh * cs[1][l] + eh * bu(1, 0, l));
        }
        lhs += u[1][i] * (eps * bu(1, 0, 2) - eps * cs[1][2] - slope(1) / h);
        lhs += 3.0 / eh * u[3][i] * gap3;
        let pres = -(grad_p(2, i, &jm[0][0]) + eh * grad_p(1, i, &jm[0][1]) + eh * eh * grad_p(0, i, &jm[0][2])) / rho0
            - 2.0 / (rho0 * h) * jt.p[2] * jm[0][0][i][2]
            - eps / rho0 * jt.p[1] * jm[0][1][i][2];
        let hmm3 = hc0[0][0][2] + hc0[1][1][2];
        let visc = 3.0 / eh * u[3][i] * hmm3
            + lap(2, i, &jm[0][0])
            + lterm(2, i, &pc.l20)
            + sterm(2, i, &pc.s20)
            + eps * (2.0 * h * lap(1, i, &jm[1][0]) + lterm(1, i, &pc.l11) + sterm(1, i, &pc.s11))
            + eps * eps * (lap2(0, i, &pc.iota21) + lterm(0, i, &pc.l02) + sterm(0, i, &pc.s02));
        r[4 + i] = lhs - (pres + nu * visc + force.bar(2, i));

        // xi3^3
        let mut lhs = jt.dt[3][i] + transport(3, i);
        for k in 0..2 {
            lhs += u[3][k] * cd(0, i, k);
        }
        lhs += 3.0 / h * u[3][i] * (u[1][2] / eps - ht - c0[2] - slope(0)) + u[3][2] * u[1][i] / eh;
        for l in 0..2 {
            let adv1 = u[1][l] - eh * cs[1][l] + eh * bu(1, 0, l);
            lhs += du[2][i][l] * adv1;
            for k in 0..3 {
                lhs += u[2][k] * hc0[i][l][k] * adv1;
            }
        }
        for k in 0..2 {
            let mut s = du[1][i][k] - dh[k] / h * u[1][i];
            for m in 0..3 {
                s += u[1][m] * hc0[i][k][m];
            }
            for l in 0..2 {
                s += eh * cd(0, i, l) * b[1][l][k];
            }
            lhs += u[2][k] * s;
        }
        lhs += 2.0 * u[2][i] * (u[2][2] / eh - slope(1) / h - eps * cs[1][2] + eps * bu(1, 0, 2));
        for l in 0..2 {
            lhs += eh * cd(1, i, l) * (bu(1, 1, l) + eh * bu(2, 0, l) - eh * cs[2][l]);
        }
        lhs += eps * u[1][i] * ((0..2).map(|k| u[1][k] * b[1][2][k] + eh * u[0][k] * b[2][2][k]).sum::<f64>() - eh * cs[2][2]);
        for k in 0..2 {
            for l in 0..2 {
                lhs += eh * eh * u[1][k] * cd(0, i, l) * b[2][l][k];
            }
        }
        for l in 0..2 {
            lhs += eh.powi(3) * cd(0, i, l) * (bu(3, 0, l) - cs[3][l]);
        }
        let pres = -(grad_p(3, i, &jm[0][0]) + eh * grad_p(2, i, &jm[0][1]) + eh * eh * grad_p(1, i, &jm[0][2]) + eh.powi(3) * grad_p(0, i, &jm[0][3]))
            / rho0
            - (3.0 / h * jt.p[3] * jm[0][0][i][2] + 2.0 * eps * jt.p[2] * jm[0][1][i][2] + eps * eps * h * jt.p[1] * jm[0][2][i][2]) / rho0;
        let visc = lap(3, i, &jm[0][0])
            + lterm(3, i, &pc.l30)
            + sterm(3, i, &pc.s30)
            + 2.0 * eh * lap(2, i, &jm[1][0])
            + eps * (lterm(2, i, &pc.l21) + sterm(2, i, &pc.s21))
            + eps * eps * (lap2(1, i, &pc.iota21) + lterm(1, i, &pc.l12) + sterm(1, i, &pc.s12))
            + eps.powi(3) * (lap2(0, i, &pc.iota3) + lterm(0, i, &pc.l03) + sterm(0, i, &pc.s03));
        r[6 + i] = lhs - (pres + nu * visc + force.bar(3, i));
    }

    // continuity at xi3^3
    let mut c = du[3][0][0] + du[3][1][1] + hsum(0, 3) - 3.0 / h * slope(3);
    let mut t1 = h * hsum(1, 2);
    let mut t2 = h * h * hsum(2, 1);
    let mut t3 = hsum(3, 0);
    for k in 0..2 {
        for l in 0..2 {
            t1 += h * du[2][k][l] * b[1][l][k];
            t2 += h * h * du[1][k][l] * b[2][l][k];
            t3 += du[0][k][l] * b[3][l][k];
        }
        t1 += 2.0 * u[2][k] * b[1][2][k];
        t2 += h * u[1][k] * b[2][2][k];
    }
    c += eps * t1 + eps * eps * t2 + eh.powi(3) * t3;
    r[8] = c;
    r
}

/// Spatial derivatives of a stack on the grid.
struct StackDerivs {
    du: Vec<[[[Field2D; 2]; 3]; 4]>,
    ddu: [[[[Field2D; 2]; 2]; 2]; 4],
    dp: [[Field2D; 2]; 4],
}

impl StackDerivs {
    fn new(g: &Grid2D, s: &FieldStack) -> Self {
        let du = vec![std::array::from_fn(|k| [grad(g, &s.u[k][0]), grad(g, &s.u[k][1]), grad(g, &s.u3[k])])];
        let ddu = std::array::from_fn(|k| [hessian(g, &s.u[k][0]), hessian(g, &s.u[k][1])]);
        let dp = std::array::from_fn(|k| grad(g, &s.p[k]));
        StackDerivs { du, ddu, dp }
    }

    fn jet(&self, s: &FieldStack, rates: Option<&[[Field2D; 2]; 4]>, n: usize) -> NodeJet {
        let du = &self.du[0];
        NodeJet {
            u: std::array::from_fn(|k| [s.u[k][0].data[n], s.u[k][1].data[n], s.u3[k].data[n]]),
            du: std::array::from_fn(|k| std::array::from_fn(|c| [du[k][c][0].data[n], du[k][c][1].data[n]])),
            ddu: std::array::from_fn(|k| {
                std::array::from_fn(|i| std::array::from_fn(|l| std::array::from_fn(|m| self.ddu[k][i][l][m].data[n])))
            }),
            dt: std::array::from_fn(|k| match rates {
                Some(r) => [r[k][0].data[n], r[k][1].data[n]],
                None => [0.0; 2],
            }),
            p: std::array::from_fn(|k| s.p[k].data[n]),
            dp: std::array::from_fn(|k| [self.dp[k][0].data[n], self.dp[k][1].data[n]]),
        }
    }
}

/// First-group residual fields. `rates` supplies the time derivatives of
/// the tangential coefficients; they are taken as zero when absent.
pub fn residual_group1(
    stack: &FieldStack,
    table: &CoefficientTable,
    params: &ModelParams,
    rates: Option<&[[Field2D; 2]; 4]>,
) -> Result<[Field2D; 9], FilmError> {
    if !(stack.eps >= EPS_MIN) {
        return Err(FilmError::EpsilonTooSmall { eps: stack.eps });
    }
    let g = &table.grid;
    let d = StackDerivs::new(g, stack);
    let rows: Vec<[f64; 9]> = (0..g.len())
        .into_par_iter()
        .map(|n| residual_at(&table.points[n], &d.jet(stack, rates, n), stack.eps, params.physics, &params.force))
        .collect();
    Ok(std::array::from_fn(|c| Field2D::from_vec(g, rows.iter().map(|r| r[c]).collect())))
}

/// Norms of one residual component over the interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualNorm {
    pub name: String,
    pub linf: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub t: f64,
    pub eps: f64,
    pub closure_linf: f64,
    pub components: Vec<ResidualNorm>,
}

/// Maximum and root-mean-square over nodes at least one cell from the edge.
pub fn interior_norms(g: &Grid2D, f: &Field2D) -> (f64, f64) {
    let (mut m, mut s, mut n) = (0.0f64, 0.0, 0usize);
    for j in 1..g.n2 - 1 {
        for i in 1..g.n1 - 1 {
            let v = f.get(i, j);
            m = m.max(v.abs());
            s += v * v;
            n += 1;
        }
    }
    (m, (s / n.max(1) as f64).sqrt())
}

pub fn residual_report(stack: &FieldStack, table: &CoefficientTable, params: &ModelParams) -> Result<ResidualReport, FilmError> {
    let r = residual_group1(stack, table, params, None)?;
    let g = &table.grid;
    let components = r
        .iter()
        .zip(RESIDUAL_NAMES)
        .map(|(f, name)| {
            let (linf, l2) = interior_norms(g, f);
            ResidualNorm { name: name.into(), linf, l2 }
        })
        .collect();
    Ok(ResidualReport { t: stack.t, eps: stack.eps, closure_linf: interior_norms(g, &vertical_closure(stack, table)).0, components })
}

/// Impose `u^0 = V` and `sum_k u^k = W - V` through `u^1`.
pub fn apply_bc_velocity(stack: &FieldStack, v: &[Field2D; 2], w: &[Field2D; 2]) -> FieldStack {
    let mut out = stack.clone();
    for i in 0..2 {
        out.u[0][i] = v[i].clone();
        out.u[1][i] = w[i].sub(&v[i]).sub(&stack.u[2][i]).sub(&stack.u[3][i]);
    }
    out
}

/// Velocity-regime data sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFields {
    pub vel: SurfaceVelocities,
    /// Dirichlet trace of `eps^2 p^0`.
    pub trace: Field2D,
}

impl VelocityFields {
    pub fn new(g: &Grid2D, bc: &LubricationBc, mu: f64) -> Self {
        VelocityFields { vel: SurfaceVelocities::from_bc(g, bc), trace: bc.trace.field(g, mu) }
    }
}

/// Tangential coefficients in the velocity regime for a given `P = eps^2 p^0`.
fn velocity_profile(table: &CoefficientTable, vf: &VelocityFields, pm2: &Field2D, eps: f64, params: &ModelParams) -> [[Field2D; 2]; 4] {
    let g = &table.grid;
    let (mu, nu) = (params.physics.mu, params.physics.nu());
    let v = &vf.vel.v;
    let w = &vf.vel.w;
    let jet = Jet2::new(g, v);
    let dp = grad(g, pm2);
    let rows: Vec<[[f64; 2]; 3]> = (0..g.len())
        .into_par_iter()
        .map(|n| {
            let p = &table.points[n];
            let h = p.h();
            let vv = [v[0].data[n], v[1].data[n], p.w];
            let dv = |k: usize, l: usize| if k < 2 { jet.d[k][l].data[n] } else { p.dw[l] };
            let dpn = [dp[0].data[n], dp[1].data[n]];
            let r = eps * h * p.a1_over_a0();
            let mut out = [[0.0; 2]; 3];
            for i in 0..2 {
                let mut lhs = 0.0;
                for l in 0..2 {
                    lhs += dv(i, l) * (vv[l] - p.c0[l]);
                }
                for k in 0..3 {
                    let q: f64 = (0..2).map(|l| vv[l] * p.hc[0][i][l][k]).sum();
                    lhs += vv[k] * (p.q0[i][k] + q);
                }
                let mut visc = 0.0;
                for l in 0..2 {
                    for m in 0..2 {
                        visc += p.j00(l, m) * jet.dd[i][l][m].data[n];
                    }
                }
                for k in 0..3 {
                    for l in 0..2 {
                        visc += dv(k, l) * p.l0[k][l][i];
                    }
                    visc += vv[k] * p.s0[i][k];
                }
                let jp: f64 = (0..2).map(|l| p.j00(i, l) * dpn[l]).sum();
                let gi = h * h / (2.0 * mu) * jp + eps * eps * h * h / (2.0 * nu) * (lhs - nu * visc - params.force.bar(0, i));
                let qi = eps * h.powi(3) / (6.0 * mu) * (0..2).map(|l| p.jm[0][1][i][l] * dpn[l]).sum::<f64>();
                let jump = w[i].data[n] - vv[i];
                let u2 = (gi - 0.5 * r * jump + 0.5 * r * qi) / (1.0 - 0.5 * r + r * r / 6.0);
                let u3 = -r / 3.0 * u2 + qi;
                out[0][i] = jump - u2 - u3;
                out[1][i] = u2;
                out[2][i] = u3;
            }
            out
        })
        .collect();
    let col = |c: usize| pair(g, &rows.iter().map(|r| r[c]).collect::<Vec<_>>());
    [v.clone(), col(0), col(1), col(2)]
}

/// `sum_k u_3^k / eps - dh/dt` for a given `P`.
fn velocity_closure(table: &CoefficientTable, vf: &VelocityFields, pm2: &Field2D, eps: f64, params: &ModelParams) -> Field2D {
    let u = velocity_profile(table, vf, pm2, eps, params);
    let v = vertical_scaled(table, &u, eps);
    let ht = table.field(|p| p.gap.ht);
    v[0].add(&v[1]).add(&v[2]).sub(&ht)
}

/// Scaled pressure `P = eps^2 p^0` of the velocity regime and the number of
/// correction sweeps used.
///
/// The equation is the Reynolds operator plus the finite-`eps` part of the
/// vertical closure, which is moved to the right side and iterated with the
/// Reynolds matrix factorized once.
pub fn solve_velocity_pressure(table: &CoefficientTable, vf: &VelocityFields, eps: f64, params: &ModelParams) -> Result<(Field2D, usize), FilmError> {
    let g = &table.grid;
    let mu = params.physics.mu;
    let sys = assemble_reynolds(table, &vf.vel, &vf.trace, mu, WeightForm::Metric)?;
    let fac = FactoredSystem::new(&sys)?;
    let mut p = Field2D::from_vec(g, fac.solve(&sys.rhs)?);
    if eps == 0.0 {
        return Ok((p, 0));
    }
    for it in 1..=PRESSURE_MAX_ITER {
        let dc = velocity_closure(table, vf, &p, eps, params).sub(&velocity_closure(table, vf, &p, 0.0, params));
        let mut rhs = sys.rhs.clone();
        for j in 1..g.n2 - 1 {
            for i in 1..g.n1 - 1 {
                let k = g.idx(i, j);
                rhs[k] += table.points[k].sqrt_a0 * 12.0 * mu * dc.data[k] * g.weight(i, j);
            }
        }
        let next = Field2D::from_vec(g, fac.solve(&rhs)?);
        let change = next.sub(&p).max_abs();
        p = next;
        if change <= PRESSURE_TOL * p.max_abs().max(1.0) {
            return Ok((p, it));
        }
    }
    Err(FilmError::SolverDivergence { detail: format!("pressure correction did not converge in {PRESSURE_MAX_ITER} sweeps at eps = {eps}") })
}

/// Steady stack of the velocity regime.
pub fn velocity_stack(table: &CoefficientTable, vf: &VelocityFields, eps: f64, params: &ModelParams) -> Result<FieldStack, FilmError> {
    let (pm2, _) = solve_velocity_pressure(table, vf, eps, params)?;
    let mut s = FieldStack::zeros(&table.grid, eps, table.t);
    s.u = velocity_profile(table, vf, &pm2, eps, params);
    s.p[0] = pm2.scale(1.0 / (eps * eps));
    eliminate_vertical(&s, table, params)
}

/// `(u^1/eps, u^2/eps^2, p^0)` of the traction regime for a given `u^0`.
fn traction_closures(u0: &[Field2D; 2], table: &CoefficientTable, tf: &TractionFields, eps: f64, mu: f64) -> ([Field2D; 2], [Field2D; 2], Field2D) {
    let g = &table.grid;
    let jet = Jet2::new(g, u0);
    let sa = table.field(|p| p.sqrt_a0);
    let div0 = sqrt_a_div(g, &sa, u0);
    let law = tf.law;
    let rows: Vec<[f64; 5]> = (0..g.len())
        .into_par_iter()
        .map(|n| {
            let p = &table.points[n];
            let (h, a) = (p.h(), p.a1_over_a0());
            let v = [u0[0].data[n], u0[1].data[n]];
            let dv = |k: usize, l: usize| jet.d[k][l].data[n];
            let (al, be) = (p.alpha[0], p.beta[0]);
            let v1 = -h * div0.data[n] / p.sqrt_a0 - h * p.w * a;
            let p0 = 2.0 * mu * v1 / h + tf.pi0.data[n];
            let f0 = law.force(&wall_velocity(p, [v[0], v[1], p.w]));
            let mut s1 = [0.0; 2];
            for i in 0..2 {
                let dd: f64 = (0..2).map(|k| v[k] * p.d[0][i][k]).sum();
                let fr = law.s0 * eps / mu * (al[i] * f0.dot(&p.basis[0]) + be[i] * f0.dot(&p.basis[1]));
                s1[i] = -h * (dd + al[i] * p.dw[0] + be[i] * p.dw[1] + fr);
            }
            let top = [v[0] + eps * s1[0], v[1] + eps * s1[1], p.w + eps * p.gap.ht];
            let ff = law.force(&wall_velocity(p, top)) + f0;
            let j = |l: usize, m: usize| p.jm[0][0][l][m];
            let mut s2 = [0.0; 2];
            for i in 0..2 {
                let mut s = 0.0;
                for l in 0..2 {
                    s -= j(2, l) * dv(i, l);
                    s += j(l, i) * (0..2).map(|k| dv(k, l) * p.gap.dh[k]).sum::<f64>();
                    s -= j(2, l) * (0..2).map(|k| v[k] * p.hc[0][i][l][k]).sum::<f64>();
                }
                for k in 0..2 {
                    s += v[k] / p.sqrt_a0 * (h * p.i_coef * p.d[0][i][k] - al[i] * p.da_eta[k][0] - be[i] * p.da_eta[k][1]);
                }
                s += j(2, i) * p.gap.ht / h;
                s -= (0..2).map(|k| j(k, i) * p.gap.dht[k]).sum::<f64>();
                let mut wt = 0.0;
                for l in 0..2 {
                    wt += j(2, l) * p.hc[0][i][l][2] + j(l, i) / p.sqrt_a0 * p.da_eta[2][l];
                }
                s -= p.w * wt;
                let fr = law.s0 / mu * (al[i] * ff.dot(&p.basis[0]) + be[i] * ff.dot(&p.basis[1]));
                s2[i] = 0.5 * h * (s + fr);
            }
            [s1[0], s1[1], s2[0], s2[1], p0]
        })
        .collect();
    let col = |c: usize| Field2D::from_vec(g, rows.iter().map(|r| r[c]).collect());
    ([col(0), col(1)], [col(2), col(3)], col(4))
}

/// Set `p^0`, `u^1`, `u^2`, `u^3` from the traction and friction conditions.
pub fn apply_bc_traction(stack: &FieldStack, table: &CoefficientTable, tf: &TractionFields, mu: f64) -> FieldStack {
    let g = &table.grid;
    let eps = stack.eps;
    let (s1, s2, p0) = traction_closures(&stack.u[0], table, tf, eps, mu);
    let dp = grad(g, &p0);
    let mut out = stack.clone();
    let mut u3 = [Field2D::zeros(g), Field2D::zeros(g)];
    for (n, p) in table.points.iter().enumerate() {
        let h = p.h();
        let r = eps * h * p.a1_over_a0();
        for i in 0..2 {
            let jp: f64 = (0..2).map(|l| p.jm[0][1][i][l] * dp[l].data[n]).sum();
            u3[i].data[n] = -r / 3.0 * eps * eps * s2[i].data[n] + eps.powi(3) * h.powi(3) / (6.0 * mu) * jp;
        }
    }
    out.u[1] = [s1[0].scale(eps), s1[1].scale(eps)];
    out.u[2] = [s2[0].scale(eps * eps), s2[1].scale(eps * eps)];
    out.u[3] = u3;
    out.p[0] = p0;
    out
}

/// Explicit tendency of `u^0` in the traction regime, without the implicit
/// `nu J^{0,0} d^2 u^0` part.
fn traction_tendency(u0: &[Field2D; 2], table: &CoefficientTable, tf: &TractionFields, eps: f64, params: &ModelParams) -> [Field2D; 2] {
    let g = &table.grid;
    let (mu, rho0, nu) = (params.physics.mu, params.physics.rho0, params.physics.nu());
    let (s1, s2, p0) = traction_closures(u0, table, tf, eps, mu);
    let dp = grad(g, &p0);
    let jet = Jet2::new(g, u0);
    let rows: Vec<[f64; 2]> = (0..g.len())
        .into_par_iter()
        .map(|n| {
            let p = &table.points[n];
            let h = p.h();
            let v = [u0[0].data[n], u0[1].data[n], p.w];
            let dv = |k: usize, l: usize| if k < 2 { jet.d[k][l].data[n] } else { p.dw[l] };
            std::array::from_fn(|i| {
                let mut adv = 0.0;
                for l in 0..2 {
                    adv += dv(i, l) * (v[l] - p.c0[l]);
                }
                for k in 0..3 {
                    let q: f64 = (0..2).map(|l| v[l] * p.hc[0][i][l][k]).sum();
                    adv += v[k] * (p.q0[i][k] + q);
                }
                let pres: f64 = (0..2).map(|l| p.j00(i, l) * dp[l].data[n]).sum::<f64>() / rho0;
                let mut visc = p.a1_over_a0() / h * s1[i].data[n] + 2.0 / (h * h) * s2[i].data[n];
                for k in 0..3 {
                    for l in 0..2 {
                        visc += dv(k, l) * p.l0[k][l][i];
                    }
                    visc += v[k] * p.s0[i][k];
                }
                -adv - pres + nu * visc + params.force.bar(0, i)
            })
        })
        .collect();
    pair(g, &rows)
}

enum ActiveRegime {
    Velocity(VelocityFields),
    Traction(TractionFields),
}

/// The model on a grid with its geometry, regime and parameters.
pub struct NewModel {
    pub tables: TableSource,
    pub params: ModelParams,
    pub eps: f64,
    regime: ActiveRegime,
    cache: DiffusionCache,
}

impl NewModel {
    pub fn new(tables: TableSource, bc: &BcRegime, params: ModelParams, eps: f64) -> Result<Self, FilmError> {
        if !(eps >= EPS_MIN) {
            return Err(FilmError::EpsilonTooSmall { eps });
        }
        let g = &tables.grid;
        let regime = match bc {
            BcRegime::Velocity(b) => ActiveRegime::Velocity(VelocityFields::new(g, b, params.physics.mu)),
            BcRegime::Traction(b) => ActiveRegime::Traction(TractionFields::new(g, b, params.physics.rho0)?),
        };
        Ok(NewModel { tables, params, eps, regime, cache: DiffusionCache::new() })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.tables.grid
    }

    pub fn table_at(&self, t: f64) -> Result<Cow<'_, CoefficientTable>, FilmError> {
        self.tables.at(t)
    }

    pub fn is_velocity_regime(&self) -> bool {
        matches!(self.regime, ActiveRegime::Velocity(_))
    }

    /// Apply the regime closures to the primary fields and rebuild the derived ones.
    pub fn constrain(&self, stack: &FieldStack, table: &CoefficientTable) -> Result<FieldStack, FilmError> {
        match &self.regime {
            ActiveRegime::Velocity(vf) => velocity_stack(table, vf, stack.eps, &self.params),
            ActiveRegime::Traction(tf) => {
                let s = apply_bc_traction(stack, table, tf, self.params.physics.mu);
                eliminate_vertical(&s, table, &self.params)
            }
        }
    }

    /// Lubrication-type start in the velocity regime, the prescribed initial
    /// velocity in the traction regime.
    pub fn initial_stack(&self, t: f64) -> Result<FieldStack, FilmError> {
        let table = self.tables.at(t)?;
        let mut s = FieldStack::zeros(&table.grid, self.eps, t);
        if let ActiveRegime::Traction(tf) = &self.regime {
            for c in 0..2 {
                let mut f = tf.held[c].clone();
                tf.lateral.apply(&table.grid, &mut f, &tf.held[c]);
                s.u[0][c] = f;
            }
        }
        self.constrain(&s, &table)
    }

    pub fn step(&mut self, stack: &FieldStack, dt: f64) -> Result<FieldStack, FilmError> {
        let t1 = stack.t + dt;
        let table1 = self.tables.at(t1)?.into_owned();
        let next = match &self.regime {
            ActiveRegime::Velocity(_) => {
                let mut s = stack.clone();
                s.t = t1;
                self.constrain(&s, &table1)?
            }
            ActiveRegime::Traction(tf) => {
                let table0 = self.tables.at(stack.t)?.into_owned();
                let limit = cfl_limit(&table0.grid, transport_speed(&stack.u[0], &table0));
                if dt > limit {
                    return Err(FilmError::CflViolation { dt, limit });
                }
                let nu = self.params.physics.nu();
                let op = self.cache.get(&table1, self.tables.is_static(), dt, nu, tf.lateral)?;
                let tabs = [&table0, &table1];
                let (eps, params) = (stack.eps, &self.params);
                let u = time_step_imex(
                    &stack.u[0],
                    |u, stage| {
                        let v = [u[0].clone(), u[1].clone()];
                        Ok(traction_tendency(&v, tabs[stage], tf, eps, params).to_vec())
                    },
                    Some(op),
                    &tf.held,
                    dt,
                )?;
                if u.iter().any(|f| f.data.iter().any(|x| !x.is_finite())) {
                    return Err(FilmError::SolverDivergence { detail: format!("non-finite velocity at t = {t1}") });
                }
                let mut s = stack.clone();
                s.t = t1;
                s.u[0] = [u[0].clone(), u[1].clone()];
                self.constrain(&s, &table1)?
            }
        };
        Ok(next)
    }

    /// Advance to `t_end` in equal steps no longer than `dt`, keeping every
    /// `every`-th stack plus the first and the last.
    pub fn run(&mut self, start: FieldStack, t_end: f64, dt: f64, every: usize) -> Result<Vec<FieldStack>, FilmError> {
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

    pub fn residuals(&self, stack: &FieldStack) -> Result<ResidualReport, FilmError> {
        let table = self.tables.at(stack.t)?;
        residual_report(stack, &table, &self.params)
    }
}
