//! Double-entry check of the first-group residuals: the library kernel is
//! compared with a second, term-by-term transcription written here with
//! one-based indices, on smooth manufactured fields with exact derivatives.

use thinfilm::coefficients::{BodyForce, CoefficientTable, PointCoefficients};
use thinfilm::geometry::{build_frame, CosineGap, CylinderPatch, GapField, SurfaceChart, TorusPatch};
use thinfilm::grid::{Field2D, Grid2D};
use thinfilm::new_model::{residual_at, residual_group1, FieldStack, ModelParams, NodeJet};
use thinfilm::shallow_water::Physics;

/// `c0 + c1 sin(k . xi + phi)`
#[derive(Clone, Copy)]
struct Wave {
    c0: f64,
    c1: f64,
    k: [f64; 2],
    phi: f64,
}

impl Wave {
    fn arg(&self, x: [f64; 2]) -> f64 {
        self.k[0] * x[0] + self.k[1] * x[1] + self.phi
    }
    fn val(&self, x: [f64; 2]) -> f64 {
        self.c0 + self.c1 * self.arg(x).sin()
    }
    fn d(&self, x: [f64; 2], l: usize) -> f64 {
        self.c1 * self.k[l] * self.arg(x).cos()
    }
    fn dd(&self, x: [f64; 2], l: usize, m: usize) -> f64 {
        -self.c1 * self.k[l] * self.k[m] * self.arg(x).sin()
    }
}

/// Deterministic but irregular wave parameters.
fn wave(seed: usize, scale: f64) -> Wave {
    let s = seed as f64;
    Wave {
        c0: scale * (0.3 * (1.7 * s).sin()),
        c1: scale * (0.5 + 0.2 * (0.9 * s).cos()),
        k: [1.0 + (s * 0.37).fract() * 2.0, 0.5 + (s * 0.61).fract() * 2.0],
        phi: 0.3 * s,
    }
}

/// Manufactured stack: `tang[k][i]`, `normal[k]`, `press[k]`, `rate[k][i]`.
struct Manufactured {
    tang: [[Wave; 2]; 4],
    normal: [Wave; 4],
    press: [Wave; 4],
    rate: [[Wave; 2]; 4],
}

fn manufactured(eps: f64) -> Manufactured {
    let mag = [1.0, eps, eps * eps, eps.powi(3)];
    Manufactured {
        tang: std::array::from_fn(|k| std::array::from_fn(|i| wave(1 + 2 * k + i, mag[k]))),
        normal: std::array::from_fn(|k| wave(20 + k, eps * mag[k.saturating_sub(1)])),
        press: std::array::from_fn(|k| wave(30 + k, if k == 0 { 1.0 / (eps * eps) } else { 1.0 })),
        rate: std::array::from_fn(|k| std::array::from_fn(|i| wave(40 + 2 * k + i, 0.2 * mag[k]))),
    }
}

fn jet(m: &Manufactured, x: [f64; 2]) -> NodeJet {
    NodeJet {
        u: std::array::from_fn(|k| [m.tang[k][0].val(x), m.tang[k][1].val(x), m.normal[k].val(x)]),
        du: std::array::from_fn(|k| {
            std::array::from_fn(|c| std::array::from_fn(|l| if c < 2 { m.tang[k][c].d(x, l) } else { m.normal[k].d(x, l) }))
        }),
        ddu: std::array::from_fn(|k| {
            std::array::from_fn(|i| std::array::from_fn(|l| std::array::from_fn(|mm| m.tang[k][i].dd(x, l, mm))))
        }),
        dt: std::array::from_fn(|k| [m.rate[k][0].val(x), m.rate[k][1].val(x)]),
        p: std::array::from_fn(|k| m.press[k].val(x)),
        dp: std::array::from_fn(|k| [m.press[k].d(x, 0), m.press[k].d(x, 1)]),
    }
}

/// Second transcription. Every accessor takes one-based indices as printed.
struct Literal<'a> {
    pc: &'a PointCoefficients,
    jt: &'a NodeJet,
    eps: f64,
    nu: f64,
    rho0: f64,
    force: &'a BodyForce,
}

impl Literal<'_> {
    fn u(&self, i: usize, k: usize) -> f64 {
        self.jt.u[k][i - 1]
    }
    fn du(&self, i: usize, k: usize, l: usize) -> f64 {
        self.jt.du[k][i - 1][l - 1]
    }
    fn ddu(&self, i: usize, k: usize, l: usize, m: usize) -> f64 {
        self.jt.ddu[k][i - 1][l - 1][m - 1]
    }
    fn dtu(&self, i: usize, k: usize) -> f64 {
        self.jt.dt[k][i - 1]
    }
    fn pbar(&self, k: usize) -> f64 {
        self.jt.p[k]
    }
    fn dp(&self, k: usize, l: usize) -> f64 {
        self.jt.dp[k][l - 1]
    }
    fn h(&self) -> f64 {
        self.pc.gap.h
    }
    fn dh(&self, l: usize) -> f64 {
        self.pc.gap.dh[l - 1]
    }
    fn dh_dt(&self) -> f64 {
        self.pc.gap.ht
    }
    fn a1a0(&self) -> f64 {
        self.pc.a1 / self.pc.a0
    }
    fn x_t_a3(&self) -> f64 {
        self.pc.w
    }
    fn hh(&self, j: usize, i: usize, l: usize, k: usize) -> f64 {
        self.pc.hc[j][i - 1][l - 1][k - 1]
    }
    fn bb(&self, j: usize, l: usize, k: usize) -> f64 {
        self.pc.b[j][l - 1][k - 1]
    }
    fn jj(&self, a: usize, b: usize, l: usize, m: usize) -> f64 {
        self.pc.jm[a][b][l - 1][m - 1]
    }
    fn q0(&self, i: usize, k: usize) -> f64 {
        self.pc.q0[i - 1][k - 1]
    }
    fn c0(&self, l: usize) -> f64 {
        self.pc.c0[l - 1]
    }
    /// `C^{j,j-1}_l`
    fn cc(&self, j: usize, l: usize) -> f64 {
        self.pc.c_shift[j][l - 1]
    }
    fn ll(&self, fam: &[[[f64; 3]; 2]; 3], k: usize, l: usize, i: usize) -> f64 {
        fam[k - 1][l - 1][i - 1]
    }
    fn ss(&self, fam: &[[f64; 3]; 3], i: usize, k: usize) -> f64 {
        fam[i - 1][k - 1]
    }
    fn iota(&self, fam: &[[f64; 2]; 2], l: usize, m: usize) -> f64 {
        fam[l - 1][m - 1]
    }
    fn f(&self, n: usize, i: usize) -> f64 {
        self.force.bar(n, i - 1)
    }

    fn sum2(f: impl Fn(usize) -> f64) -> f64 {
        (1..=2).map(f).sum()
    }
    fn sum3(f: impl Fn(usize) -> f64) -> f64 {
        (1..=3).map(f).sum()
    }

    fn visc_block(&self, k: usize, i: usize, lf: &[[[f64; 3]; 2]; 3], sf: &[[f64; 3]; 3]) -> f64 {
        Self::sum3(|kk| Self::sum2(|l| self.du(kk, k, l) * self.ll(lf, kk, l, i))) + Self::sum3(|kk| self.u(kk, k) * self.ss(sf, i, kk))
    }

    fn lap(&self, i: usize, k: usize, a: usize, b: usize) -> f64 {
        Self::sum2(|m| Self::sum2(|l| self.ddu(i, k, l, m) * self.jj(a, b, l, m)))
    }

    fn lap_iota(&self, i: usize, k: usize, fam: &[[f64; 2]; 2]) -> f64 {
        Self::sum2(|l| Self::sum2(|m| self.ddu(i, k, l, m) * self.iota(fam, l, m)))
    }

    fn eq_ui0(&self, i: usize) -> f64 {
        let (e, h) = (self.eps, self.h());
        let lhs = self.dtu(i, 0)
            + Self::sum2(|l| self.du(i, 0, l) * (self.u(l, 0) - self.c0(l)))
            + Self::sum3(|k| self.u(k, 0) * (self.q0(i, k) + Self::sum2(|l| self.u(l, 0) * self.hh(0, i, l, k))))
            + 1.0 / (e * h) * self.u(i, 1) * (self.u(3, 0) - self.x_t_a3());
        let rhs = -1.0 / self.rho0 * (self.pc.alpha[0][i - 1] * self.dp(0, 1) + self.pc.beta[0][i - 1] * self.dp(0, 2))
            + self.nu
                * (self.lap(i, 0, 0, 0)
                    + self.visc_block(0, i, &self.pc.l0, &self.pc.s0)
                    + 1.0 / (e * h) * self.a1a0() * self.u(i, 1)
                    + 2.0 / (e * e * h * h) * self.u(i, 2))
            + self.f(0, i);
        lhs - rhs
    }

    fn eq_u1i(&self, i: usize) -> f64 {
        let (e, h) = (self.eps, self.h());
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut lhs = self.dtu(i, 1) + Self::sum2(|l| self.du(i, 1, l) * (self.u(l, 0) - self.c0(l)));
        lhs += Self::sum3(|k| {
            self.u(k, 1)
                * (self.q0(i, k)
                    + Self::sum2(|l| {
                        let d = if k <= 2 { delta(k, i) } else { 0.0 };
                        self.u(l, 0) * (self.hh(0, i, l, k) - d / h * self.dh(l))
                    }))
        });
        lhs += Self::sum2(|l| self.u(l, 1) * (self.du(i, 0, l) + Self::sum3(|k| self.u(k, 0) * self.hh(0, i, l, k))));
        lhs -= 1.0 / h * self.u(i, 1) * (self.dh_dt() + self.c0(3));
        lhs += e * h
            * Self::sum2(|l| {
                (self.du(i, 0, l) + Self::sum3(|k| self.u(k, 0) * self.hh(0, i, l, k)))
                    * (Self::sum2(|m| self.bb(1, l, m) * self.u(m, 0)) - self.cc(1, l))
            });
        lhs += 2.0 / (e * h) * self.u(i, 2) * (self.u(3, 0) - self.x_t_a3()) + 1.0 / (e * h) * self.u(i, 1) * self.u(3, 1);
        let rhs = -1.0 / self.rho0 * Self::sum2(|l| self.dp(1, l) * self.jj(0, 0, i, l))
            - e * h / self.rho0 * Self::sum2(|l| self.dp(0, l) * self.jj(0, 1, i, l))
            - 1.0 / (self.rho0 * h) * self.pbar(1) * self.jj(0, 0, i, 3)
            + self.nu
                * (self.lap(i, 1, 0, 0)
                    + self.visc_block(1, i, &self.pc.l10, &self.pc.s10)
                    + e * (2.0 * h * self.lap(i, 0, 1, 0) + self.visc_block(0, i, &self.pc.l01, &self.pc.s01))
                    + 2.0 / (e * h) * self.u(i, 2) * self.a1a0()
                    + 6.0 / (e * e * h * h) * self.u(i, 3))
            + self.f(1, i);
        lhs - rhs
    }

    fn eq_ui2(&self, i: usize) -> f64 {
        let (e, h) = (self.eps, self.h());
        let eh = e * h;
        let g0 = |l: usize| self.du(i, 0, l) + Self::sum3(|k| self.u(k, 0) * self.hh(0, i, l, k));
        let g1 = |l: usize| self.du(i, 1, l) + Self::sum3(|k| self.u(k, 1) * self.hh(0, i, l, k));
        let mut lhs = self.dtu(i, 2)
            + Self::sum2(|l| self.du(i, 2, l) * (self.u(l, 0) - self.c0(l)))
            + Self::sum3(|k| self.u(k, 2) * (self.q0(i, k) + Self::sum2(|l| self.u(l, 0) * self.hh(0, i, l, k))));
        lhs += 2.0 / h
            * self.u(i, 2)
            * (1.0 / e * self.u(3, 1) - Self::sum2(|l| self.u(l, 0) * self.dh(l)) - self.dh_dt() - self.c0(3))
            + 1.0 / eh * self.u(3, 2) * self.u(i, 1);
        lhs += Self::sum2(|l| {
            g0(l)
                * (self.u(l, 2)
                    + eh * Self::sum2(|m| self.u(m, 1) * self.bb(1, l, m))
                    + eh * eh * (Self::sum2(|m| self.u(m, 0) * self.bb(2, l, m)) - self.cc(2, l)))
        });
        lhs += Self::sum2(|l| g1(l) * (self.u(l, 1) - eh * self.cc(1, l) + eh * Self::sum2(|m| self.u(m, 0) * self.bb(1, l, m))));
        lhs += self.u(i, 1) * (e * Self::sum2(|l| self.u(l, 0) * self.bb(1, 3, l)) - e * self.cc(1, 3) - 1.0 / h * Self::sum2(|l| self.u(l, 1) * self.dh(l)));
        lhs += 3.0 / eh * self.u(i, 3) * (self.u(3, 0) - self.x_t_a3());
        let rhs = -1.0 / self.rho0
            * (Self::sum2(|l| self.dp(2, l) * self.jj(0, 0, i, l))
                + eh * Self::sum2(|l| self.dp(1, l) * self.jj(0, 1, i, l))
                + eh * eh * Self::sum2(|l| self.dp(0, l) * self.jj(0, 2, i, l)))
            - 2.0 / (self.rho0 * h) * self.pbar(2) * self.jj(0, 0, i, 3)
            - e / self.rho0 * self.pbar(1) * self.jj(0, 1, i, 3)
            + self.nu
                * (3.0 / eh * self.u(i, 3) * Self::sum2(|m| self.hh(0, m, m, 3))
                    + self.lap(i, 2, 0, 0)
                    + self.visc_block(2, i, &self.pc.l20, &self.pc.s20)
                    + e * (2.0 * h * self.lap(i, 1, 1, 0) + self.visc_block(1, i, &self.pc.l11, &self.pc.s11))
                    + e * e * (self.lap_iota(i, 0, &self.pc.iota21) + self.visc_block(0, i, &self.pc.l02, &self.pc.s02)))
            + self.f(2, i);
        lhs - rhs
    }

    fn eq_ui3(&self, i: usize) -> f64 {
        let (e, h) = (self.eps, self.h());
        let eh = e * h;
        let g0 = |l: usize| self.du(i, 0, l) + Self::sum3(|m| self.u(m, 0) * self.hh(0, i, l, m));
        let g1 = |l: usize| self.du(i, 1, l) + Self::sum3(|k| self.u(k, 1) * self.hh(0, i, l, k));
        let shift = |l: usize| self.u(l, 1) - eh * self.cc(1, l) + eh * Self::sum2(|m| self.u(m, 0) * self.bb(1, l, m));
        let mut lhs = self.dtu(i, 3)
            + Self::sum2(|l| self.du(i, 3, l) * (self.u(l, 0) - self.c0(l)))
            + Self::sum3(|k| self.u(k, 3) * (self.q0(i, k) + Self::sum2(|l| self.hh(0, i, l, k) * self.u(l, 0))))
            + Self::sum2(|k| self.u(k, 3) * (self.du(i, 0, k) + Self::sum3(|m| self.u(m, 0) * self.hh(0, i, k, m))));
        lhs += 3.0 / h
            * self.u(i, 3)
            * (1.0 / e * self.u(3, 1) - self.dh_dt() - self.c0(3) - Self::sum2(|m| self.u(m, 0) * self.dh(m)))
            + 1.0 / eh * self.u(3, 3) * self.u(i, 1);
        lhs += Self::sum2(|l| self.du(i, 2, l) * shift(l));
        lhs += Self::sum3(|k| self.u(k, 2) * Self::sum2(|l| self.hh(0, i, l, k) * shift(l)));
        // the r = 1 term contracts the inner sum with B^1_{lk}
        lhs += Self::sum2(|k| {
            self.u(k, 2)
                * (self.du(i, 1, k) - 1.0 / h * self.dh(k) * self.u(i, 1)
                    + Self::sum3(|m| self.u(m, 1) * self.hh(0, i, k, m))
                    + eh * Self::sum2(|l| g0(l) * self.bb(1, l, k)))
        });
        lhs += 2.0
            * self.u(i, 2)
            * (1.0 / eh * self.u(3, 2) - 1.0 / h * Self::sum2(|k| self.u(k, 1) * self.dh(k)) - e * self.cc(1, 3)
                + e * Self::sum2(|k| self.u(k, 0) * self.bb(1, 3, k)));
        lhs += eh
            * Self::sum2(|l| {
                g1(l) * (Self::sum2(|m| self.u(m, 1) * self.bb(1, l, m) + eh * self.u(m, 0) * self.bb(2, l, m)) - eh * self.cc(2, l))
            });
        // C^{2,1}_3 does not depend on k and is taken once
        lhs += e * self.u(i, 1)
            * (Self::sum2(|k| self.u(k, 1) * self.bb(1, 3, k) + eh * self.u(k, 0) * self.bb(2, 3, k)) - eh * self.cc(2, 3));
        lhs += eh * eh * Self::sum2(|k| self.u(k, 1) * Self::sum2(|l| g0(l) * self.bb(2, l, k)));
        lhs += eh.powi(3) * Self::sum2(|l| g0(l) * (Self::sum2(|m| self.u(m, 0) * self.bb(3, l, m)) - self.cc(3, l)));
        let rhs = -1.0 / self.rho0
            * Self::sum2(|l| {
                self.dp(3, l) * self.jj(0, 0, i, l)
                    + eh * self.dp(2, l) * self.jj(0, 1, i, l)
                    + eh * eh * self.dp(1, l) * self.jj(0, 2, i, l)
                    + eh.powi(3) * self.dp(0, l) * self.jj(0, 3, i, l)
            })
            - 1.0 / self.rho0
                * (3.0 / h * self.pbar(3) * self.jj(0, 0, i, 3)
                    + 2.0 * e * self.pbar(2) * self.jj(0, 1, i, 3)
                    + e * e * h * self.pbar(1) * self.jj(0, 2, i, 3))
            + self.nu
                * (self.lap(i, 3, 0, 0)
                    + self.visc_block(3, i, &self.pc.l30, &self.pc.s30)
                    + 2.0 * eh * self.lap(i, 2, 1, 0)
                    + e * self.visc_block(2, i, &self.pc.l21, &self.pc.s21)
                    + e * e * self.lap_iota(i, 1, &self.pc.iota21)
                    + e * e * self.visc_block(1, i, &self.pc.l12, &self.pc.s12)
                    + e.powi(3) * self.lap_iota(i, 0, &self.pc.iota3)
                    + e.powi(3) * self.visc_block(0, i, &self.pc.l03, &self.pc.s03))
            + self.f(3, i);
        lhs - rhs
    }

    fn eq_div3(&self) -> f64 {
        let (e, h) = (self.eps, self.h());
        let hll = |j: usize, k: usize| Self::sum2(|l| self.hh(j, l, l, k));
        Self::sum2(|k| self.du(k, 3, k)) + Self::sum3(|k| self.u(k, 3) * hll(0, k)) - 3.0 / h * Self::sum2(|k| self.u(k, 3) * self.dh(k))
            + e * (h * Self::sum2(|k| Self::sum2(|l| self.du(k, 2, l) * self.bb(1, l, k)))
                + h * Self::sum3(|k| self.u(k, 2) * hll(1, k))
                + 2.0 * Self::sum2(|k| self.u(k, 2) * self.bb(1, 3, k)))
            + e * e
                * (h * h * Self::sum2(|k| Self::sum2(|l| self.du(k, 1, l) * self.bb(2, l, k)))
                    + h * h * Self::sum3(|k| self.u(k, 1) * hll(2, k))
                    + h * Self::sum2(|k| self.u(k, 1) * self.bb(2, 3, k)))
            + (e * h).powi(3)
                * (Self::sum2(|k| Self::sum2(|l| self.du(k, 0, l) * self.bb(3, l, k))) + Self::sum3(|k| self.u(k, 0) * hll(3, k)))
    }

    fn all(&self) -> [f64; 9] {
        [
            self.eq_ui0(1),
            self.eq_ui0(2),
            self.eq_u1i(1),
            self.eq_u1i(2),
            self.eq_ui2(1),
            self.eq_ui2(2),
            self.eq_ui3(1),
            self.eq_ui3(2),
            self.eq_div3(),
        ]
    }
}

fn torus() -> TorusPatch {
    TorusPatch { major_radius: 3.0, minor_radius: 1.0, u_span: 1.2, v_span: 0.9, u_offset: 0.3, v_offset: -0.4 }
}

fn gap() -> CosineGap {
    CosineGap { h0: 1.0, amplitude: 0.2, wavenumber: [1.0, 1.0], frequency: 0.7 }
}

fn force() -> BodyForce {
    BodyForce { coefficients: vec![[0.1, -0.2, 0.3], [0.05, 0.02, -0.01], [-0.03, 0.04, 0.02], [0.01, 0.0, 0.0]] }
}

#[test]
fn kernel_matches_literal_transcription_on_manufactured_fields() {
    let physics = Physics { mu: 0.8, rho0: 1.3 };
    let f = force();
    let charts: Vec<Box<dyn SurfaceChart>> = vec![
        Box::new(torus()),
        Box::new(CylinderPatch { radius: 2.0, length: 1.0, span: 1.0, offset: 0.0, omega: 0.4 }),
    ];
    for chart in &charts {
        for &eps in &[0.2, 0.05] {
            let m = manufactured(eps);
            for (a, b) in [(0.21, 0.37), (0.5, 0.5), (0.83, 0.12)] {
                let x = [a, b];
                let t = 0.35;
                let frame = build_frame(chart.as_ref(), x, t).unwrap();
                let pc = PointCoefficients::evaluate(&frame, &gap().jet(x, t), x).unwrap();
                let jt = jet(&m, x);
                let got = residual_at(&pc, &jt, eps, physics, &f);
                let lit = Literal { pc: &pc, jt: &jt, eps, nu: physics.nu(), rho0: physics.rho0, force: &f }.all();
                for c in 0..9 {
                    let scale = lit[c].abs().max(1.0);
                    assert!((got[c] - lit[c]).abs() <= 1e-10 * scale, "component {c}: {} vs {}", got[c], lit[c]);
                }
            }
        }
    }
}

#[test]
fn grid_residual_converges_to_the_manufactured_defect() {
    let physics = Physics { mu: 0.8, rho0: 1.3 };
    let params = ModelParams { physics, force: force(), truncate_p1: false };
    let eps = 0.1;
    let m = manufactured(eps);
    let chart = torus();
    let probe = [0.5, 0.5];
    let mut errs = Vec::new();
    for n in [33, 65] {
        let g = Grid2D::new(n, n).unwrap();
        let t = 0.35;
        let table = CoefficientTable::build(&g, &chart, &gap(), t, 1e-9).unwrap();
        let mut s = FieldStack::zeros(&g, eps, t);
        for k in 0..4 {
            for i in 0..2 {
                s.u[k][i] = Field2D::from_fn(&g, |x| m.tang[k][i].val(x));
            }
            s.u3[k] = Field2D::from_fn(&g, |x| m.normal[k].val(x));
            s.p[k] = Field2D::from_fn(&g, |x| m.press[k].val(x));
        }
        let rates: [[Field2D; 2]; 4] = std::array::from_fn(|k| std::array::from_fn(|i| Field2D::from_fn(&g, |x| m.rate[k][i].val(x))));
        let r = residual_group1(&s, &table, &params, Some(&rates)).unwrap();
        let (i, j) = ((n - 1) / 2, (n - 1) / 2);
        let pc = table.at(i, j);
        let lit = Literal { pc, jt: &jet(&m, probe), eps, nu: physics.nu(), rho0: physics.rho0, force: &params.force }.all();
        let err = (0..9).map(|c| (r[c].get(i, j) - lit[c]).abs() / lit[c].abs().max(1.0)).fold(0.0, f64::max);
        errs.push(err);
    }
    // second-order differences: halving the spacing cuts the defect by about four
    assert!(errs[1] < 1e-2, "{errs:?}");
    assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
}
