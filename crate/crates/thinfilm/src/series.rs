//! Power series in `eps xi3 h` for the gradients of the curvilinear coordinates.
//!
//! With `x = X + eps xi3 h a3`, the gradient of each coordinate is written as
//! `grad xi_l = alpha_l a1 + beta_l a2 + gamma_l a3` and
//!
//! ```text
//! alpha_i = sum_n (eps xi3 h)^n alpha_i^n                 (i = 1, 2)
//! alpha_3 = (xi3 / h) sum_n (eps xi3 h)^n alpha_3^n
//! gamma_3 = 1 / (eps h),  gamma_1 = gamma_2 = 0
//! ```
//!
//! The coefficients follow from `det(G - t b) = A0 + t A1 + t^2 A2` where `G`
//! is the metric and `b` the second fundamental form.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::Matrix3;

use crate::error::FilmError;
use crate::geometry::{FrameData, GapJet};

pub const MAX_SERIES_ORDER: usize = 12;

/// Value with its gradient in `(xi1, xi2)`.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: [f64; 2],
}

impl Dual {
    fn new(v: f64, d: [f64; 2]) -> Self {
        Dual { v, d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, [self.d[0] + o.d[0], self.d[1] + o.d[1]])
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, [self.d[0] - o.d[0], self.d[1] - o.d[1]])
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, [-self.d[0], -self.d[1]])
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(
            self.v * o.v,
            [self.d[0] * o.v + self.v * o.d[0], self.d[1] * o.v + self.v * o.d[1]],
        )
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let q = self.v / o.v;
        Dual::new(q, [(self.d[0] - q * o.d[0]) / o.v, (self.d[1] - q * o.d[1]) / o.v])
    }
}

/// `alpha[n][l]`, `beta[n][l]` for `n = 0..=order`, `l = 0..3`, with their
/// derivatives `d_alpha[n][l][m] = d alpha_l^n / d xi_m`.
#[derive(Debug, Clone)]
pub struct AlphaBetaSeries {
    pub order: usize,
    pub alpha: Vec<[f64; 3]>,
    pub beta: Vec<[f64; 3]>,
    pub d_alpha: Vec<[[f64; 2]; 3]>,
    pub d_beta: Vec<[[f64; 2]; 3]>,
}

pub fn alpha_beta_series(frame: &FrameData, gap: &GapJet, order: usize) -> Result<AlphaBetaSeries, FilmError> {
    if order > MAX_SERIES_ORDER {
        return Err(FilmError::TruncationTooHigh { requested: order, max: MAX_SERIES_ORDER });
    }
    let eb = Dual::new(frame.e_big, frame.d_e_big);
    let fb = Dual::new(frame.f_big, frame.d_f_big);
    let gb = Dual::new(frame.g_big, frame.d_g_big);
    let e = Dual::new(frame.e, frame.d_e);
    let f = Dual::new(frame.f, frame.d_f);
    let g = Dual::new(frame.g, frame.d_g);
    let a0 = eb * gb - fb * fb;
    let a1 = -(e * gb) - g * eb + Dual::new(2.0, [0.0; 2]) * f * fb;
    let a2 = e * g - f * f;
    let h1 = Dual::new(gap.dh[0], gap.ddh[0]);
    let h2 = Dual::new(gap.dh[1], gap.ddh[1]);

    // c[n] = [[alpha_1, beta_1], [alpha_2, beta_2]] at order n
    let adj0 = [[gb, -fb], [-fb, eb]];
    let adj1 = [[-g, f], [f, -e]];
    let mut c: Vec<[[Dual; 2]; 2]> = Vec::with_capacity(order + 1);
    for n in 0..=order {
        let cn = std::array::from_fn(|r| {
            std::array::from_fn(|s| match n {
                0 => adj0[r][s] / a0,
                1 => (adj1[r][s] - c[0][r][s] * a1) / a0,
                _ => -(c[n - 2][r][s] * a2 + c[n - 1][r][s] * a1) / a0,
            })
        });
        c.push(cn);
    }

    let mut out = AlphaBetaSeries {
        order,
        alpha: Vec::with_capacity(order + 1),
        beta: Vec::with_capacity(order + 1),
        d_alpha: Vec::with_capacity(order + 1),
        d_beta: Vec::with_capacity(order + 1),
    };
    for cn in &c {
        let al = [cn[0][0], cn[1][0], -(cn[0][0] * h1) - cn[1][0] * h2];
        let be = [cn[0][1], cn[1][1], -(cn[0][1] * h1) - cn[1][1] * h2];
        out.alpha.push(al.map(|x| x.v));
        out.beta.push(be.map(|x| x.v));
        out.d_alpha.push(al.map(|x| x.d));
        out.d_beta.push(be.map(|x| x.d));
    }
    Ok(out)
}

/// Rows `l` hold `(alpha_l, beta_l, gamma_l)` of `grad xi_l` in the basis `(a1, a2, a3)`.
pub type GradientCoefficients = [[f64; 3]; 3];

/// Truncated series for `grad xi_l` at `eps`, `xi3` using orders `0..=n`.
pub fn series_gradient(s: &AlphaBetaSeries, h: f64, eps: f64, xi3: f64, n: usize) -> GradientCoefficients {
    let t = eps * xi3 * h;
    let mut out = [[0.0; 3]; 3];
    let mut tp = 1.0;
    for k in 0..=n.min(s.order) {
        for l in 0..3 {
            out[l][0] += tp * s.alpha[k][l];
            out[l][1] += tp * s.beta[k][l];
        }
        tp *= t;
    }
    for c in &mut out[2][..2] {
        *c *= xi3 / h;
    }
    out[2][2] = 1.0 / (eps * h);
    out
}

/// Exact gradients from inverting the Jacobian of `x = X + eps xi3 h a3`.
pub fn jacobian_inverse_oracle(
    frame: &FrameData,
    gap: &GapJet,
    eps: f64,
    xi3: f64,
) -> Result<GradientCoefficients, FilmError> {
    let n = frame.a[2];
    let t = eps * xi3;
    let cols = [
        frame.a[0] + (n * gap.dh[0] + frame.da[2][0] * gap.h) * t,
        frame.a[1] + (n * gap.dh[1] + frame.da[2][1] * gap.h) * t,
        n * (eps * gap.h),
    ];
    let jac = Matrix3::from_columns(&cols);
    let sv = jac.singular_values();
    let cond = sv.max() / sv.min();
    if !cond.is_finite() || cond > 1e12 {
        return Err(FilmError::SingularJacobian { cond });
    }
    let inv = jac.try_inverse().ok_or(FilmError::SingularJacobian { cond })?;
    let basis = Matrix3::from_columns(&frame.a);
    // rows of inv are grad xi_l; express each in the basis
    let coef = basis.try_inverse().ok_or(FilmError::SingularJacobian { cond })? * inv.transpose();
    Ok(std::array::from_fn(|l| std::array::from_fn(|k| coef[(k, l)])))
}
