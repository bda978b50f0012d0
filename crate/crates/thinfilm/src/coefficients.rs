//! Coefficient families of the expanded equations, evaluated pointwise.
//!
//! Arrays are zero based throughout. A component index equal to 2 stands for
//! the normal direction. Layouts:
//!
//! * `b[j][l][k]` is `B^j_{lk}`, `j <= 3`, `k` tangential
//! * `hc[j][i][l][k]` is `H^j_{ilk}`, `l` tangential
//! * `d[j][i][k]` is `D^j_{ik}`
//! * `jm[i][j][l][m]` is `J^{i,j}_{lm}`
//! * `km[j][i][l]` is `K^{j,i}_l`
//! * `L` families are `[k][l][i]`, `S` families are `[i][k]`.

use rayon::prelude::*;

use crate::error::FilmError;
use crate::geometry::{build_frame, FrameData, GapField, GapJet, SurfaceChart, Vec3};
use crate::grid::Grid2D;
use crate::series::{alpha_beta_series, AlphaBetaSeries};

/// Series orders carried by the coefficient tables.
pub const TABLE_ORDER: usize = 3;
const NO: usize = TABLE_ORDER + 1;

type Lkli = [[[f64; 3]; 2]; 3];
type Sik = [[f64; 3]; 3];

#[derive(Debug, Clone)]
pub struct PointCoefficients {
    pub xi: [f64; 2],
    pub basis: [Vec3; 3],
    pub e_big: f64,
    pub f_big: f64,
    pub g_big: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub sqrt_a0: f64,
    pub m: [[f64; 2]; 2],
    pub w: f64,
    pub dw: [f64; 2],
    pub wt: f64,
    pub gap: GapJet,
    /// `a_3 . d a_k / d xi_l` as `[k][l]`
    pub n_da: [[f64; 2]; 3],
    /// `d a_k / d xi_l . eta` as `[k][l]`
    pub da_eta: [[f64; 2]; 3],
    pub alpha: [[f64; 3]; NO],
    pub beta: [[f64; 3]; NO],
    pub b: [[[f64; 2]; 3]; NO],
    pub c0: [f64; 3],
    /// `c_shift[i] = C^{i,i-1}` for `i >= 1`
    pub c_shift: [[f64; 3]; NO],
    pub d: [[[f64; 3]; 3]; 2],
    pub hc: [[[[f64; 3]; 2]; 3]; NO],
    pub i_coef: f64,
    pub jm: [[[[f64; 3]; 3]; NO]; NO],
    pub km: [[[f64; 3]; NO]; NO],
    pub l0: Lkli,
    pub p0: [[f64; 2]; 2],
    pub q0: [[f64; 3]; 3],
    pub r0: [[f64; 2]; 2],
    pub s0: Sik,
    pub eta: Vec3,
    pub iota21: [[f64; 2]; 2],
    pub iota3: [[f64; 2]; 2],
    pub kappa: [f64; 2],
    pub tau01: [f64; 2],
    pub tau12: [f64; 2],
    pub tau02: [f64; 2],
    pub tau23: [f64; 2],
    pub tau13: [f64; 2],
    pub tau03: [f64; 2],
    pub phi1: f64,
    pub phi12: f64,
    pub phi22: f64,
    pub phi33: f64,
    pub phi23: f64,
    pub phi13: f64,
    pub chi: [[f64; 3]; 2],
    /// `psi[i][j][l]`
    pub psi: [[[f64; 2]; 2]; 2],
    pub s_bar: [[f64; 3]; 2],
    pub l10: Lkli,
    pub l01: Lkli,
    pub l20: Lkli,
    pub l11: Lkli,
    pub l02: Lkli,
    pub l30: Lkli,
    pub l21: Lkli,
    pub l12: Lkli,
    pub l03: Lkli,
    pub s10: Sik,
    pub s01: Sik,
    pub s20: Sik,
    pub s11: Sik,
    pub s02: Sik,
    pub s30: Sik,
    pub s21: Sik,
    pub s12: Sik,
    pub s03: Sik,
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

impl PointCoefficients {
    /// `A^1 / A^0`
    pub fn a1_over_a0(&self) -> f64 {
        self.a1 / self.a0
    }

    /// `J^{0,0}`, the leading inverse metric contracted with `B^0`.
    pub fn j00(&self, l: usize, m: usize) -> f64 {
        self.jm[0][0][l][m]
    }

    pub fn h(&self) -> f64 {
        self.gap.h
    }

    pub fn evaluate(frame: &FrameData, gap: &GapJet, xi: [f64; 2]) -> Result<PointCoefficients, FilmError> {
        let s = alpha_beta_series(frame, gap, TABLE_ORDER)?;
        Ok(Self::from_series(frame, gap, &s, xi))
    }

    fn from_series(fr: &FrameData, gap: &GapJet, s: &AlphaBetaSeries, xi: [f64; 2]) -> PointCoefficients {
        let a = fr.a;
        let h = gap.h;
        let (h1, h2) = (gap.dh[0], gap.dh[1]);
        let hd = gap.dh;
        let sqa = fr.a0.sqrt();
        let alpha: [[f64; 3]; NO] = std::array::from_fn(|n| s.alpha[n]);
        let beta: [[f64; 3]; NO] = std::array::from_fn(|n| s.beta[n]);

        // a_p . d a_k / d xi_l, a_p . d^2 a_k / d xi_l d xi_m, a_p . d a_k / dt
        let a_da: [[[f64; 2]; 3]; 3] =
            std::array::from_fn(|p| std::array::from_fn(|k| std::array::from_fn(|l| a[p].dot(&fr.da[k][l]))));
        let a_dat: [[f64; 3]; 3] = std::array::from_fn(|p| std::array::from_fn(|k| a[p].dot(&fr.dat[k])));
        let a_xt: [f64; 3] = std::array::from_fn(|p| a[p].dot(&fr.xt));
        let metric = [[fr.e_big, fr.f_big], [fr.f_big, fr.g_big]];

        let b: [[[f64; 2]; 3]; NO] = std::array::from_fn(|j| {
            std::array::from_fn(|l| std::array::from_fn(|k| alpha[j][l] * metric[0][k] + beta[j][l] * metric[1][k]))
        });
        let c0: [f64; 3] = std::array::from_fn(|l| alpha[0][l] * a_xt[0] + beta[0][l] * a_xt[1]);
        let c_shift: [[f64; 3]; NO] = std::array::from_fn(|i| {
            std::array::from_fn(|l| {
                if i == 0 {
                    return 0.0;
                }
                alpha[i][l] * a_xt[0] + beta[i][l] * a_xt[1] + alpha[i - 1][l] * a_dat[0][2] + beta[i - 1][l] * a_dat[1][2]
            })
        });
        let d: [[[f64; 3]; 3]; 2] = std::array::from_fn(|j| {
            std::array::from_fn(|i| std::array::from_fn(|k| alpha[j][i] * a_da[2][k][0] + beta[j][i] * a_da[2][k][1]))
        });
        let hc: [[[[f64; 3]; 2]; 3]; NO] = std::array::from_fn(|j| {
            std::array::from_fn(|i| {
                std::array::from_fn(|l| std::array::from_fn(|k| alpha[j][i] * a_da[0][k][l] + beta[j][i] * a_da[1][k][l]))
            })
        });
        let cvec = a[0].cross(&fr.da[2][1]) + fr.da[2][0].cross(&a[1]);
        let i_coef = cvec.dot(&a[2]);
        let jm: [[[[f64; 3]; 3]; NO]; NO] = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                std::array::from_fn(|l| std::array::from_fn(|m| alpha[i][l] * b[j][m][0] + beta[i][l] * b[j][m][1]))
            })
        });
        let km: [[[f64; 3]; NO]; NO] = std::array::from_fn(|j| {
            std::array::from_fn(|i| {
                std::array::from_fn(|l| {
                    (0..2)
                        .map(|m| {
                            s.d_alpha[j][l][m] * b[i][m][0]
                                + s.d_beta[j][l][m] * b[i][m][1]
                                + alpha[j][l] * hc[i][m][m][0]
                                + beta[j][l] * hc[i][m][m][1]
                        })
                        .sum()
                })
            })
        });
        let j00 = |l: usize, m: usize| jm[0][0][l][m];
        let k00 = |l: usize| km[0][0][l];

        let l0: Lkli = std::array::from_fn(|k| {
            std::array::from_fn(|l| {
                std::array::from_fn(|i| {
                    if i < 2 {
                        k00(l) * delta(k, i) + 2.0 * (0..2).map(|m| hc[0][i][m][k] * j00(l, m)).sum::<f64>()
                    } else {
                        k00(l) * delta(k, 2) + 2.0 * d[0][l][k]
                    }
                })
            })
        });

        // tangential rows use alpha^0, beta^0; the normal row projects on a_3
        let proj = |r: usize, v: &Vec3| -> f64 {
            if r < 2 {
                alpha[0][r] * a[0].dot(v) + beta[0][r] * a[1].dot(v)
            } else {
                a[2].dot(v)
            }
        };
        let first = |r: usize, l: usize, k: usize| -> f64 {
            if r < 2 {
                hc[0][r][l][k]
            } else {
                a_da[2][k][l]
            }
        };
        // sum_{l,m} proj_r(d^2 a_k / d xi_l d xi_m) W_{lm}
        let second = |r: usize, k: usize, wgt: &dyn Fn(usize, usize) -> f64| -> f64 {
            let mut acc = 0.0;
            for l in 0..2 {
                for m in 0..2 {
                    acc += proj(r, &fr.dda[k][l][m]) * wgt(l, m);
                }
            }
            acc
        };
        let first_sum = |r: usize, k: usize, v: &dyn Fn(usize) -> f64| -> f64 { (0..2).map(|l| first(r, l, k) * v(l)).sum() };

        let s0: Sik = std::array::from_fn(|r| {
            std::array::from_fn(|k| second(r, k, &|l, m| j00(l, m)) + first_sum(r, k, &|l| k00(l)))
        });
        let vdot = |i: usize, k: usize, u: &Vec3| alpha[0][i] * fr.da[k][0].dot(u) + beta[0][i] * fr.da[k][1].dot(u);
        let p0: [[f64; 2]; 2] = std::array::from_fn(|i| {
            std::array::from_fn(|k| (i_coef * sqa - fr.a1) / fr.a0 * d[0][i][k] + s0[i][k] - vdot(i, k, &cvec) / sqa)
        });
        let q0: [[f64; 3]; 3] = std::array::from_fn(|i| {
            std::array::from_fn(|k| {
                let tr: f64 = if i < 2 {
                    alpha[0][i] * a_dat[0][k] + beta[0][i] * a_dat[1][k]
                } else {
                    a_dat[2][k]
                };
                tr - (0..2).map(|l| first(i, l, k) * c0[l]).sum::<f64>()
            })
        });
        let r0: [[f64; 2]; 2] = std::array::from_fn(|i| std::array::from_fn(|k| q0[i][k] + hc[0][i][k][2] * fr.w));

        let eta = a[0].cross(&a[2]) * h2 + cvec * h + a[2].cross(&a[1]) * h1;
        let iota21: [[f64; 2]; 2] =
            std::array::from_fn(|l| std::array::from_fn(|m| h * h * (2.0 * jm[2][0][l][m] + jm[1][1][l][m])));
        let iota3: [[f64; 2]; 2] = std::array::from_fn(|l| {
            std::array::from_fn(|m| h * h * h * (2.0 * jm[3][0][l][m] + jm[2][1][l][m] + jm[2][1][m][l]))
        });
        let dh_j = |i: usize, j: usize, l: usize| -> f64 { (0..2).map(|m| hd[m] * jm[i][j][l][m]).sum() };
        let tau01: [f64; 2] = std::array::from_fn(|l| dh_j(1, 0, l) + h * km[1][0][l] + h * km[0][1][l] + jm[1][0][2][l]);
        let tau12: [f64; 2] =
            std::array::from_fn(|l| dh_j(1, 0, l) + h * km[1][0][l] + h * km[0][1][l] + 5.0 * jm[0][1][2][l]);
        let tau02: [f64; 2] = std::array::from_fn(|l| {
            h * (2.0 * dh_j(2, 0, l) + dh_j(1, 1, l)
                + h * (km[2][0][l] + km[1][1][l] + km[0][2][l])
                + jm[1][1][2][l]
                + 2.0 * jm[2][0][l][2])
        });
        let tau23: [f64; 2] = std::array::from_fn(|l| {
            dh_j(1, 0, l) + h * (km[1][0][l] + km[0][1][l]) + 4.0 * jm[1][0][2][l] + 5.0 * jm[0][1][2][l]
        });
        let tau13: [f64; 2] = std::array::from_fn(|l| {
            h * (2.0 * dh_j(2, 0, l) + dh_j(1, 1, l)
                + h * (km[2][0][l] + km[1][1][l] + km[0][2][l])
                + 3.0 * jm[1][1][2][l]
                + 4.0 * jm[0][2][2][l]
                + 2.0 * jm[2][0][2][l])
        });
        let tau03: [f64; 2] = std::array::from_fn(|l| {
            h * h
                * (3.0 * dh_j(3, 0, l) + 2.0 * dh_j(2, 1, l) + dh_j(1, 2, l)
                    + h * (km[3][0][l] + km[2][1][l] + km[1][2][l] + km[0][3][l])
                    + 3.0 * jm[0][3][2][l]
                    + 2.0 * jm[1][2][2][l]
                    + jm[2][1][2][l])
        });
        let hmm3 = |j: usize| -> f64 { (0..2).map(|m| hc[j][m][m][2]).sum() };
        let dh_j3m = |i: usize, j: usize| -> f64 { (0..2).map(|m| hd[m] * jm[i][j][2][m]).sum() };
        let phi1 = k00(2) / h + hmm3(1) - 2.0 / (h * h) * dh_j3m(0, 0);
        let phi12 = h * hmm3(2) - (0..2).map(|m| hd[m] * jm[1][0][m][2]).sum::<f64>() / h
            + km[1][0][2]
            + km[0][1][2]
            + 3.0 / h * jm[1][0][2][2];
        let phi22 = 2.0 * (hmm3(1) - dh_j3m(0, 0) / (h * h)) + 4.0 / (h * h) * j00(2, 2) + 2.0 / h * k00(2);
        let phi33 = 3.0 * (hmm3(1) - dh_j3m(0, 0) / (h * h) + k00(2) / h + 3.0 / (h * h) * j00(2, 2));
        let phi23 = 2.0 * (h * hmm3(2) - dh_j3m(0, 1) / h + km[0][1][2] + km[1][0][2] + 5.0 / h * jm[1][0][2][2]);
        let phi13 = dh_j3m(2, 0) - dh_j3m(0, 2) + h * h * hmm3(3)
            + h * (km[2][0][2] + km[1][1][2] + km[0][2][2])
            + 4.0 * jm[2][0][2][2]
            + 2.0 * jm[1][1][2][2];

        let a3xa2 = a[2].cross(&a[1]);
        let a1xa3 = a[0].cross(&a[2]);
        let chi: [[f64; 3]; 2] = std::array::from_fn(|i| {
            std::array::from_fn(|k| {
                let ha: f64 = (0..2).map(|l| hc[0][i][l][k] * alpha[0][l]).sum();
                let hb: f64 = (0..2).map(|l| hc[0][i][l][k] * beta[0][l]).sum();
                (h1 * (ha - vdot(i, k, &a3xa2) / sqa) + h2 * (hb - vdot(i, k, &a1xa3) / sqa)) / h
            })
        });
        let psi: [[[f64; 2]; 2]; 2] = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                std::array::from_fn(|l| ((alpha[0][l] * h1 + beta[0][l] * h2) * delta(i, j) + hd[j] * j00(l, i)) / h)
            })
        });
        let s_bar: [[f64; 3]; 2] = std::array::from_fn(|i| {
            std::array::from_fn(|k| {
                s0[i][k] - fr.a1 / fr.a0 * d[0][i][k] - (0..2).map(|l| hc[0][i][l][k] * j00(2, l)).sum::<f64>() / h
                    - (-h * i_coef * d[0][i][k] + vdot(i, k, &eta)) / (h * sqa)
            })
        });
        let kappa: [f64; 2] = std::array::from_fn(|i| {
            let mut acc = 0.0;
            for l in 0..2 {
                acc += fr.dw[l] * (l0[2][l][i] - fr.a1 / fr.a0 * j00(i, l));
            }
            acc -= j00(2, i) / (h * h) * gap.ht;
            acc -= 3.0 / h * (0..2).map(|k| j00(k, i) * gap.dht[k]).sum::<f64>();
            let mut br = s0[i][2] - (0..2).map(|l| j00(2, l) * hc[0][i][l][2]).sum::<f64>() / h;
            br -= (0..2).map(|l| j00(l, i) * fr.da[2][l].dot(&eta)).sum::<f64>() / (h * sqa);
            acc + fr.w * br
        });

        // L families
        let lshift = |c: f64| -> Lkli {
            std::array::from_fn(|k| {
                std::array::from_fn(|l| std::array::from_fn(|i| l0[k][l][i] + c / h * j00(2, l) * delta(k, i)))
            })
        };
        let lmix = |wgt: &dyn Fn(usize, usize) -> f64, coef: f64, tau: &[f64; 2], normal: Option<&dyn Fn(usize, usize) -> f64>| -> Lkli {
            std::array::from_fn(|k| {
                std::array::from_fn(|l| {
                    std::array::from_fn(|i| {
                        if i < 2 {
                            coef * (0..2).map(|m| hc[0][i][m][k] * wgt(l, m)).sum::<f64>() + delta(k, i) * tau[l]
                        } else {
                            match normal {
                                Some(f) => f(k, l) + delta(k, 2) * tau[l],
                                None => 0.0,
                            }
                        }
                    })
                })
            })
        };
        let l10 = lshift(2.0);
        let l20 = lshift(4.0);
        let l30 = lshift(6.0);
        let d1_normal = |k: usize, l: usize| 4.0 * h * d[1][l][k];
        // L^{0,1} contracts J^{1,0} in the (m, l) order
        let l01 = lmix(&|l, m| jm[1][0][m][l], 4.0 * h, &tau01, Some(&d1_normal));
        let l11 = lmix(&|l, m| jm[1][0][l][m], 4.0 * h, &tau12, Some(&d1_normal));
        let iota_normal = |k: usize, l: usize| 2.0 * (0..2).map(|m| a_da[2][k][m] * iota21[l][m]).sum::<f64>();
        let l02 = lmix(&|l, m| iota21[l][m], 2.0, &tau02, Some(&iota_normal));
        let l21 = lmix(&|l, m| jm[1][0][l][m], 4.0 * h, &tau23, None);
        let l12 = lmix(&|l, m| iota21[l][m], 2.0, &tau13, None);
        let l03 = lmix(&|l, m| iota3[l][m], 2.0, &tau03, None);

        // S families
        let sshift = |c: f64, phi: f64| -> Sik {
            std::array::from_fn(|r| {
                std::array::from_fn(|k| {
                    let extra = if r < 2 {
                        (0..2).map(|m| hc[0][r][m][k] * j00(2, m)).sum::<f64>()
                    } else {
                        d[0][2][k]
                    };
                    s0[r][k] + c / h * extra + delta(r, k) * phi
                })
            })
        };
        let smix = |wgt: &dyn Fn(usize, usize) -> f64, tau: &[f64; 2], phi: f64| -> Sik {
            std::array::from_fn(|r| std::array::from_fn(|k| second(r, k, wgt) + first_sum(r, k, &|l| tau[l]) + delta(r, k) * phi))
        };
        let s10 = sshift(2.0, phi1);
        let s20 = sshift(4.0, phi22);
        let s30 = sshift(6.0, phi33);
        let j10h = |l: usize, m: usize| 2.0 * h * jm[1][0][l][m];
        let s01 = smix(&j10h, &tau01, 0.0);
        let s11 = smix(&j10h, &tau12, phi12);
        let s21 = smix(&j10h, &tau23, phi23);
        let s02 = smix(&|l, m| iota21[l][m], &tau02, 0.0);
        let s12 = smix(&|l, m| iota21[l][m], &tau13, phi13);
        let s03 = smix(&|l, m| iota3[l][m], &tau03, 0.0);

        PointCoefficients {
            xi,
            basis: a,
            e_big: fr.e_big,
            f_big: fr.f_big,
            g_big: fr.g_big,
            a0: fr.a0,
            a1: fr.a1,
            a2: fr.a2,
            sqrt_a0: sqa,
            m: fr.m(),
            w: fr.w,
            dw: fr.dw,
            wt: fr.wt,
            gap: *gap,
            n_da: std::array::from_fn(|k| a_da[2][k]),
            da_eta: std::array::from_fn(|k| std::array::from_fn(|l| fr.da[k][l].dot(&eta))),
            alpha,
            beta,
            b,
            c0,
            c_shift,
            d,
            hc,
            i_coef,
            jm,
            km,
            l0,
            p0,
            q0,
            r0,
            s0,
            eta,
            iota21,
            iota3,
            kappa,
            tau01,
            tau12,
            tau02,
            tau23,
            tau13,
            tau03,
            phi1,
            phi12,
            phi22,
            phi33,
            phi23,
            phi13,
            chi,
            psi,
            s_bar,
            l10,
            l01,
            l20,
            l11,
            l02,
            l30,
            l21,
            l12,
            l03,
            s10,
            s01,
            s20,
            s11,
            s02,
            s30,
            s21,
            s12,
            s03,
        }
    }

    /// Named scalar entries in a fixed order, for dumps and comparisons.
    pub fn named_entries(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut push = |name: String, v: f64| out.push((name, v));
        push("E".into(), self.e_big);
        push("F".into(), self.f_big);
        push("G".into(), self.g_big);
        push("e".into(), self.n_da[0][0]);
        push("f".into(), self.n_da[0][1]);
        push("g".into(), self.n_da[1][1]);
        push("A0".into(), self.a0);
        push("A1".into(), self.a1);
        push("A2".into(), self.a2);
        push("I".into(), self.i_coef);
        push("h".into(), self.gap.h);
        for n in 0..NO {
            for l in 0..3 {
                push(format!("alpha^{n}_{}", l + 1), self.alpha[n][l]);
                push(format!("beta^{n}_{}", l + 1), self.beta[n][l]);
            }
        }
        for j in 0..NO {
            for l in 0..3 {
                for k in 0..2 {
                    push(format!("B^{j}_{}{}", l + 1, k + 1), self.b[j][l][k]);
                }
            }
        }
        for l in 0..3 {
            push(format!("C^0_{}", l + 1), self.c0[l]);
            for i in 1..NO {
                push(format!("C^{i},{}_{}", i - 1, l + 1), self.c_shift[i][l]);
            }
        }
        for j in 0..2 {
            for i in 0..3 {
                for k in 0..3 {
                    push(format!("D^{j}_{}{}", i + 1, k + 1), self.d[j][i][k]);
                }
            }
        }
        for j in 0..NO {
            for i in 0..3 {
                for l in 0..2 {
                    for k in 0..3 {
                        push(format!("H^{j}_{}{}{}", i + 1, l + 1, k + 1), self.hc[j][i][l][k]);
                    }
                }
            }
        }
        for i in 0..NO {
            for j in 0..NO {
                for l in 0..3 {
                    for m in 0..3 {
                        push(format!("J^{i},{j}_{}{}", l + 1, m + 1), self.jm[i][j][l][m]);
                    }
                }
            }
        }
        for j in 0..NO {
            for i in 0..NO {
                for l in 0..3 {
                    push(format!("K^{j},{i}_{}", l + 1), self.km[j][i][l]);
                }
            }
        }
        let lfam = [
            ("L^0", &self.l0),
            ("L^1,0", &self.l10),
            ("L^0,1", &self.l01),
            ("L^2,0", &self.l20),
            ("L^1,1", &self.l11),
            ("L^0,2", &self.l02),
            ("L^3,0", &self.l30),
            ("L^2,1", &self.l21),
            ("L^1,2", &self.l12),
            ("L^0,3", &self.l03),
        ];
        for (name, fam) in lfam {
            for k in 0..3 {
                for l in 0..2 {
                    for i in 0..3 {
                        push(format!("{name}_{}{}{}", k + 1, l + 1, i + 1), fam[k][l][i]);
                    }
                }
            }
        }
        for i in 0..2 {
            for k in 0..2 {
                push(format!("P^0_{}{}", i + 1, k + 1), self.p0[i][k]);
                push(format!("R^0_{}{}", i + 1, k + 1), self.r0[i][k]);
            }
        }
        let sfam = [
            ("Q^0", &self.q0),
            ("S^0", &self.s0),
            ("S^1,0", &self.s10),
            ("S^0,1", &self.s01),
            ("S^2,0", &self.s20),
            ("S^1,1", &self.s11),
            ("S^0,2", &self.s02),
            ("S^3,0", &self.s30),
            ("S^2,1", &self.s21),
            ("S^1,2", &self.s12),
            ("S^0,3", &self.s03),
        ];
        for (name, fam) in sfam {
            for i in 0..3 {
                for k in 0..3 {
                    push(format!("{name}_{}{}", i + 1, k + 1), fam[i][k]);
                }
            }
        }
        for i in 0..2 {
            for k in 0..3 {
                push(format!("Sbar^0_{}{}", i + 1, k + 1), self.s_bar[i][k]);
                push(format!("chi^0_{}{}", i + 1, k + 1), self.chi[i][k]);
            }
            push(format!("kappa^0_{}", i + 1), self.kappa[i]);
            for j in 0..2 {
                for l in 0..2 {
                    push(format!("psi^0_{}{}{}", i + 1, j + 1, l + 1), self.psi[i][j][l]);
                }
                push(format!("iota^2,1_{}{}", i + 1, j + 1), self.iota21[i][j]);
                push(format!("iota^3_{}{}", i + 1, j + 1), self.iota3[i][j]);
            }
        }
        for c in 0..3 {
            push(format!("eta_{}", c + 1), self.eta[c]);
        }
        let taus = [
            ("tau^0,1", self.tau01),
            ("tau^1,2", self.tau12),
            ("tau^0,2", self.tau02),
            ("tau^2,3", self.tau23),
            ("tau^1,3", self.tau13),
            ("tau^0,3", self.tau03),
        ];
        for (name, t) in taus {
            push(format!("{name}_1"), t[0]);
            push(format!("{name}_2"), t[1]);
        }
        push("phi^1".into(), self.phi1);
        push("phi^1,2".into(), self.phi12);
        push("phi^2,2".into(), self.phi22);
        push("phi^3,3".into(), self.phi33);
        push("phi^2,3".into(), self.phi23);
        push("phi^1,3".into(), self.phi13);
        out
    }
}

/// Body force written as `f = sum_n xi3^n fbar^n`, components in `(a1, a2, a3)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BodyForce {
    pub coefficients: Vec<[f64; 3]>,
}

impl BodyForce {
    pub fn none() -> Self {
        BodyForce { coefficients: Vec::new() }
    }

    /// Uniform force, independent of `xi3`.
    pub fn uniform(f: [f64; 3]) -> Self {
        BodyForce { coefficients: vec![f] }
    }

    /// Coefficient `fbar^n_k`, zero when absent.
    pub fn bar(&self, n: usize, k: usize) -> f64 {
        self.coefficients.get(n).map_or(0.0, |c| c[k])
    }

    pub fn at(&self, xi3: f64, k: usize) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * xi3 + c[k])
    }

    /// `int_0^1 f_k dxi3` by eight-point Gauss-Legendre quadrature.
    pub fn column_integral(&self, k: usize) -> f64 {
        GAUSS_LEGENDRE_8
            .iter()
            .map(|&(x, w)| 0.5 * w * self.at(0.5 * (x + 1.0), k))
            .sum()
    }
}

const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Quadratic wall friction `f_R = rho0 C_R |u| u`, with `C_R = eps C^1_R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionLaw {
    pub c1: f64,
    pub rho0: f64,
    /// Orientation sign of the outward normal relative to `a_3` on the lower surface.
    pub s0: f64,
}

impl FrictionLaw {
    /// `f^1_R` for a wall velocity given in Cartesian components.
    pub fn force(&self, u: &Vec3) -> Vec3 {
        u * (self.rho0 * self.c1 * u.norm())
    }
}

/// Which expression of the depth-averaged forcing to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceForm {
    /// `Fbar^0_i`, built from `fbar^0_i`.
    #[default]
    Bar,
    /// `F^0_i`, built from the column integral of `f^0_i`.
    Integral,
}

/// `F^0_i` or `Fbar^0_i` at one point.
///
/// `top` and `bottom` are the friction forces `f^1_{R_1}` and `f^1_{R_0}`.
pub fn forcing(pc: &PointCoefficients, force: &BodyForce, form: ForceForm, top: &Vec3, bottom: &Vec3, law: Option<&FrictionLaw>) -> [f64; 2] {
    std::array::from_fn(|i| {
        let body = match form {
            ForceForm::Bar => force.bar(0, i),
            ForceForm::Integral => force.column_integral(i),
        };
        let fr = match law {
            Some(l) => {
                let dir = pc.basis[0] * pc.alpha[0][i] + pc.basis[1] * pc.beta[0][i];
                l.s0 / (l.rho0 * pc.gap.h) * (top + bottom).dot(&dir)
            }
            None => 0.0,
        };
        body + fr
    })
}

/// Coefficients at every node of a grid at one time level.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    pub grid: Grid2D,
    pub t: f64,
    pub points: Vec<PointCoefficients>,
}

impl CoefficientTable {
    pub fn build(grid: &Grid2D, chart: &dyn SurfaceChart, gap: &dyn GapField, t: f64, floor: f64) -> Result<CoefficientTable, FilmError> {
        let points = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j) = grid.ij(idx);
                let xi = grid.xi(i, j);
                let g = gap.jet(xi, t);
                if !(g.h > floor) {
                    return Err(FilmError::NonPositiveGap { h: g.h, floor, i, j });
                }
                let fr = build_frame(chart, xi, t)?;
                PointCoefficients::evaluate(&fr, &g, xi)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CoefficientTable { grid: grid.clone(), t, points })
    }

    pub fn at(&self, i: usize, j: usize) -> &PointCoefficients {
        &self.points[self.grid.idx(i, j)]
    }

    /// Nodal field built from a per-point closure.
    pub fn field(&self, f: impl Fn(&PointCoefficients) -> f64) -> crate::grid::Field2D {
        crate::grid::Field2D::from_vec(&self.grid, self.points.iter().map(f).collect())
    }

    /// CSV dump: one row per node and named coefficient, in a fixed order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,xi1,xi2,name,value\n");
        for (idx, p) in self.points.iter().enumerate() {
            let (i, j) = self.grid.ij(idx);
            for (name, v) in p.named_entries() {
                s.push_str(&format!("{i},{j},{},{},{name},{}\n", crate::output::fmt17(p.xi[0]), crate::output::fmt17(p.xi[1]), crate::output::fmt17(v)));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CylinderPatch, InclinedPlane, Plane, TorusPatch, TranslatingPlane};

    fn flat(h: f64) -> GapJet {
        GapJet { h, dh: [0.0; 2], ddh: [[0.0; 2]; 2], ht: 0.0, dht: [0.0; 2] }
    }

    fn point(chart: &dyn SurfaceChart, gap: &GapJet, xi: [f64; 2]) -> PointCoefficients {
        PointCoefficients::evaluate(&build_frame(chart, xi, 0.0).unwrap(), gap, xi).unwrap()
    }

    #[test]
    fn cylinder_reference_values() {
        let c = CylinderPatch { radius: 2.0, length: 1.0, span: 1.0, offset: 0.0, omega: 0.0 };
        let p = point(&c, &flat(1.0), [0.5, 0.3]);
        assert!((p.b[1][1][1] + 0.5).abs() < 1e-14);
        assert!((p.d[0][1][1] + 0.5).abs() < 1e-14);
        assert!((p.i_coef - 1.0).abs() < 1e-14);
        assert!((p.jm[0][0][1][1] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn flat_static_plane_annihilates_curvature_terms() {
        let p = point(&Plane { length: [1.0, 1.0] }, &flat(1.0), [0.4, 0.6]);
        for v in [p.p0[0][0], p.p0[1][1], p.s0[0][0], p.s0[2][2], p.q0[0][0], p.r0[1][1], p.i_coef] {
            assert_eq!(v, 0.0);
        }
        for j in 0..NO {
            for i in 0..3 {
                for l in 0..2 {
                    for k in 0..3 {
                        assert_eq!(p.hc[j][i][l][k], 0.0);
                    }
                }
            }
        }
        assert_eq!(p.kappa, [0.0, 0.0]);
    }

    #[test]
    fn leading_b_is_identity_and_j_is_inverse_metric() {
        let ip = InclinedPlane { slope: [0.3, -0.4] };
        let p = point(&ip, &flat(1.0), [0.2, 0.9]);
        for i in 0..2 {
            for k in 0..2 {
                assert!((p.b[0][i][k] - delta(i, k)).abs() < 1e-14);
                assert!((p.jm[0][0][i][k] - p.m[i][k] / p.a0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mean_curvature_identity() {
        let t = TorusPatch { major_radius: 3.0, minor_radius: 1.0, u_span: 1.0, v_span: 2.0, u_offset: 0.1, v_offset: 0.5 };
        let p = point(&t, &flat(1.0), [0.3, 0.4]);
        // (a1 x d2 a3 + d1 a3 x a2) . a3 is the trace of the shape operator times sqrt(A0)
        assert!((p.i_coef * p.sqrt_a0 - p.a1).abs() < 1e-12);
    }

    #[test]
    fn translation_advects_with_chart_speed() {
        let tp = TranslatingPlane { velocity: [0.5, -0.25, 0.0] };
        let p = point(&tp, &flat(1.0), [0.5, 0.5]);
        assert!((p.c0[0] - 0.5).abs() < 1e-15);
        assert!((p.c0[1] + 0.25).abs() < 1e-15);
        assert_eq!(p.w, 0.0);
    }

    #[test]
    fn s_bar_equals_p_plus_chi() {
        let t = TorusPatch { major_radius: 2.5, minor_radius: 1.0, u_span: 1.3, v_span: 1.7, u_offset: 0.2, v_offset: -0.3 };
        let gap = GapJet { h: 1.2, dh: [0.3, -0.2], ddh: [[0.1, 0.05], [0.05, -0.2]], ht: 0.0, dht: [0.0; 2] };
        let p = point(&t, &gap, [0.35, 0.65]);
        for i in 0..2 {
            for k in 0..2 {
                let lhs = p.s_bar[i][k];
                let rhs = p.p0[i][k] + p.chi[i][k];
                assert!((lhs - rhs).abs() < 1e-12, "{i}{k}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let f = BodyForce { coefficients: vec![[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0], [4.0, 0.0, 0.0]] };
        // 1 + 4/4 = 2, 2/2 = 1, 3/3 = 1
        assert!((f.column_integral(0) - 2.0).abs() < 1e-14);
        assert!((f.column_integral(1) - 1.0).abs() < 1e-14);
        assert!((f.column_integral(2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn forcing_forms_agree_for_uniform_force() {
        let p = point(&Plane { length: [1.0, 1.0] }, &flat(1.0), [0.5, 0.5]);
        let f = BodyForce::uniform([0.3, -0.1, 0.0]);
        let z = Vec3::zeros();
        let a = forcing(&p, &f, ForceForm::Bar, &z, &z, None);
        let b = forcing(&p, &f, ForceForm::Integral, &z, &z, None);
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn friction_opposes_motion() {
        let p = point(&Plane { length: [1.0, 1.0] }, &flat(0.5), [0.5, 0.5]);
        let law = FrictionLaw { c1: 0.2, rho0: 1.0, s0: -1.0 };
        let u = Vec3::new(1.0, 0.0, 0.0);
        let f = law.force(&u);
        let fr = forcing(&p, &BodyForce::none(), ForceForm::Bar, &f, &f, Some(&law));
        assert!((fr[0] + 2.0 * 0.2 / 0.5).abs() < 1e-14);
    }
}
