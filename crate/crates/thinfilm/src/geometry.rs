//! Lower-surface charts, gap laws and the moving frame built from them.
//!
//! A chart maps the reference domain `[0,1]^2` (and time) into space. Charts
//! report analytic derivatives of `X` up to third order in space and mixed
//! space/time derivatives up to second order in space. [`FdChart`] wraps a
//! bare position closure and supplies the derivatives by central differences.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::FilmError;

pub type Vec3 = Vector3<f64>;

/// Derivatives of `X(xi1, xi2, t)` at one point.
///
/// Spatial indices are zero based: `dx[l]` is `dX/dxi_{l+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartJet {
    pub x: Vec3,
    pub dx: [Vec3; 2],
    pub ddx: [[Vec3; 2]; 2],
    pub dddx: [[[Vec3; 2]; 2]; 2],
    pub xt: Vec3,
    pub dxt: [Vec3; 2],
    pub ddxt: [[Vec3; 2]; 2],
    pub xtt: Vec3,
}

impl ChartJet {
    fn zero() -> Self {
        let z = Vec3::zeros();
        ChartJet {
            x: z,
            dx: [z; 2],
            ddx: [[z; 2]; 2],
            dddx: [[[z; 2]; 2]; 2],
            xt: z,
            dxt: [z; 2],
            ddxt: [[z; 2]; 2],
            xtt: z,
        }
    }
}

pub trait SurfaceChart: Send + Sync {
    fn name(&self) -> String;
    fn jet(&self, xi: [f64; 2], t: f64) -> ChartJet;
    fn position(&self, xi: [f64; 2], t: f64) -> Vec3 {
        self.jet(xi, t).x
    }
    /// True when `X` does not depend on time.
    fn is_static(&self) -> bool {
        false
    }
}

/// `X = (L1 xi1, L2 xi2, 0)`.
#[derive(Debug, Clone, Copy)]
pub struct Plane {
    pub length: [f64; 2],
}

impl SurfaceChart for Plane {
    fn name(&self) -> String {
        "plane".into()
    }
    fn jet(&self, xi: [f64; 2], _t: f64) -> ChartJet {
        let mut j = ChartJet::zero();
        j.x = Vec3::new(self.length[0] * xi[0], self.length[1] * xi[1], 0.0);
        j.dx = [Vec3::new(self.length[0], 0.0, 0.0), Vec3::new(0.0, self.length[1], 0.0)];
        j
    }
    fn is_static(&self) -> bool {
        true
    }
}

/// `X = (xi1, xi2, s1 xi1 + s2 xi2)`; skewed metric when both slopes are nonzero.
#[derive(Debug, Clone, Copy)]
pub struct InclinedPlane {
    pub slope: [f64; 2],
}

impl SurfaceChart for InclinedPlane {
    fn name(&self) -> String {
        "inclined_plane".into()
    }
    fn jet(&self, xi: [f64; 2], _t: f64) -> ChartJet {
        let [s1, s2] = self.slope;
        let mut j = ChartJet::zero();
        j.x = Vec3::new(xi[0], xi[1], s1 * xi[0] + s2 * xi[1]);
        j.dx = [Vec3::new(1.0, 0.0, s1), Vec3::new(0.0, 1.0, s2)];
        j
    }
    fn is_static(&self) -> bool {
        true
    }
}

/// Rigid translation of the unit plane with velocity `v`.
#[derive(Debug, Clone, Copy)]
pub struct TranslatingPlane {
    pub velocity: [f64; 3],
}

impl SurfaceChart for TranslatingPlane {
    fn name(&self) -> String {
        "translating_plane".into()
    }
    fn jet(&self, xi: [f64; 2], t: f64) -> ChartJet {
        let v = Vec3::from(self.velocity);
        let mut j = ChartJet::zero();
        j.x = Vec3::new(xi[0], xi[1], 0.0) + v * t;
        j.dx = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        j.xt = v;
        j
    }
}

/// Cylinder patch `X = (L xi1, R sin th, R cos th)`, `th = th0 + span xi2 + omega t`.
#[derive(Debug, Clone, Copy)]
pub struct CylinderPatch {
    pub radius: f64,
    pub length: f64,
    pub span: f64,
    pub offset: f64,
    pub omega: f64,
}

impl SurfaceChart for CylinderPatch {
    fn name(&self) -> String {
        "cylinder".into()
    }
    fn jet(&self, xi: [f64; 2], t: f64) -> ChartJet {
        let (r, s, w) = (self.radius, self.span, self.omega);
        let th = self.offset + s * xi[1] + w * t;
        let (sn, cs) = th.sin_cos();
        // k-th derivative of (R sin th, R cos th) with respect to th
        let d = |k: usize| -> Vec3 {
            match k % 4 {
                0 => Vec3::new(0.0, r * sn, r * cs),
                1 => Vec3::new(0.0, r * cs, -r * sn),
                2 => Vec3::new(0.0, -r * sn, -r * cs),
                _ => Vec3::new(0.0, -r * cs, r * sn),
            }
        };
        let z = Vec3::zeros();
        let mut j = ChartJet::zero();
        j.x = Vec3::new(self.length * xi[0], 0.0, 0.0) + d(0);
        j.dx = [Vec3::new(self.length, 0.0, 0.0), d(1) * s];
        j.ddx = [[z, z], [z, d(2) * s * s]];
        j.dddx[1][1][1] = d(3) * s * s * s;
        j.xt = d(1) * w;
        j.dxt = [z, d(2) * s * w];
        j.ddxt[1][1] = d(3) * s * s * w;
        j.xtt = d(2) * w * w;
        j
    }
    fn is_static(&self) -> bool {
        self.omega == 0.0
    }
}

/// Torus patch with major radius `R`, minor radius `r`;
/// `u = u0 + su xi1`, `v = v0 + sv xi2`.
#[derive(Debug, Clone, Copy)]
pub struct TorusPatch {
    pub major_radius: f64,
    pub minor_radius: f64,
    pub u_span: f64,
    pub v_span: f64,
    pub u_offset: f64,
    pub v_offset: f64,
}

impl TorusPatch {
    /// Partial derivative of order `(a, b)` in `(u, v)`.
    fn partial(&self, u: f64, v: f64, a: usize, b: usize) -> Vec3 {
        let (rr, r) = (self.major_radius, self.minor_radius);
        // derivatives of cos u, sin u, cos v, sin v
        let dcos = |x: f64, k: usize| match k % 4 {
            0 => x.cos(),
            1 => -x.sin(),
            2 => -x.cos(),
            _ => x.sin(),
        };
        let dsin = |x: f64, k: usize| match k % 4 {
            0 => x.sin(),
            1 => x.cos(),
            2 => -x.sin(),
            _ => -x.cos(),
        };
        // rho(v) = R + r cos v
        let rho = if b == 0 { rr + r * v.cos() } else { r * dcos(v, b) };
        let z = if a == 0 { r * dsin(v, b) } else { 0.0 };
        Vec3::new(rho * dcos(u, a), rho * dsin(u, a), z)
    }
}

impl SurfaceChart for TorusPatch {
    fn name(&self) -> String {
        "torus".into()
    }
    fn jet(&self, xi: [f64; 2], _t: f64) -> ChartJet {
        let u = self.u_offset + self.u_span * xi[0];
        let v = self.v_offset + self.v_span * xi[1];
        let sc = [self.u_span, self.v_span];
        let p = |idx: &[usize]| -> Vec3 {
            let a = idx.iter().filter(|&&i| i == 0).count();
            let b = idx.len() - a;
            let scale: f64 = idx.iter().map(|&i| sc[i]).product();
            self.partial(u, v, a, b) * scale
        };
        let mut j = ChartJet::zero();
        j.x = p(&[]);
        for l in 0..2 {
            j.dx[l] = p(&[l]);
            for m in 0..2 {
                j.ddx[l][m] = p(&[l, m]);
                for n in 0..2 {
                    j.dddx[l][m][n] = p(&[l, m, n]);
                }
            }
        }
        j
    }
    fn is_static(&self) -> bool {
        true
    }
}

/// Stencil for a central difference of order `m` (offsets in units of the step).
fn central_stencil(m: usize) -> &'static [(f64, f64)] {
    match m {
        0 => &[(0.0, 1.0)],
        1 => &[(1.0, 0.5), (-1.0, -0.5)],
        2 => &[(1.0, 1.0), (0.0, -2.0), (-1.0, 1.0)],
        3 => &[(2.0, 0.5), (1.0, -1.0), (-1.0, 1.0), (-2.0, -0.5)],
        _ => panic!("central stencil of order {m} not available"),
    }
}

/// Central difference of `f` with derivative orders `(m1, m2, mt)`.
///
/// The step grows by a factor of ten per derivative order so that rounding
/// stays below truncation for the base steps used here.
fn fd_partial<F: Fn([f64; 2], f64) -> Vec3>(
    f: &F,
    xi: [f64; 2],
    t: f64,
    orders: [usize; 3],
    step: f64,
) -> Vec3 {
    let total: usize = orders.iter().sum();
    if total == 0 {
        return f(xi, t);
    }
    let s = step * 10f64.powi(total as i32 - 1);
    let mut acc = Vec3::zeros();
    for &(o1, w1) in central_stencil(orders[0]) {
        for &(o2, w2) in central_stencil(orders[1]) {
            for &(ot, wt) in central_stencil(orders[2]) {
                acc += f([xi[0] + o1 * s, xi[1] + o2 * s], t + ot * s) * (w1 * w2 * wt);
            }
        }
    }
    acc / s.powi(total as i32)
}

/// Jet of an arbitrary position map by central differences.
pub fn fd_jet<F: Fn([f64; 2], f64) -> Vec3>(f: &F, xi: [f64; 2], t: f64, step: f64) -> ChartJet {
    let e = |l: usize| -> [usize; 3] {
        let mut o = [0; 3];
        o[l] += 1;
        o
    };
    let add = |a: [usize; 3], b: [usize; 3]| [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
    let mut j = ChartJet::zero();
    j.x = f(xi, t);
    j.xt = fd_partial(f, xi, t, e(2), step);
    j.xtt = fd_partial(f, xi, t, [0, 0, 2], step);
    for l in 0..2 {
        j.dx[l] = fd_partial(f, xi, t, e(l), step);
        j.dxt[l] = fd_partial(f, xi, t, add(e(l), e(2)), step);
        for m in 0..2 {
            j.ddx[l][m] = fd_partial(f, xi, t, add(e(l), e(m)), step);
            j.ddxt[l][m] = fd_partial(f, xi, t, add(add(e(l), e(m)), e(2)), step);
            for n in 0..2 {
                j.dddx[l][m][n] = fd_partial(f, xi, t, add(add(e(l), e(m)), e(n)), step);
            }
        }
    }
    j
}

/// Adapter for user charts that only know their position.
pub struct FdChart<F> {
    pub label: String,
    pub map: F,
    pub step: f64,
}

impl<F> FdChart<F>
where
    F: Fn([f64; 2], f64) -> Vec3 + Send + Sync,
{
    pub fn new(label: impl Into<String>, map: F) -> Self {
        FdChart { label: label.into(), map, step: 1e-5 }
    }
}

impl<F> SurfaceChart for FdChart<F>
where
    F: Fn([f64; 2], f64) -> Vec3 + Send + Sync,
{
    fn name(&self) -> String {
        self.label.clone()
    }
    fn jet(&self, xi: [f64; 2], t: f64) -> ChartJet {
        fd_jet(&self.map, xi, t, self.step)
    }
    fn position(&self, xi: [f64; 2], t: f64) -> Vec3 {
        (self.map)(xi, t)
    }
}

/// Covariant basis, its derivatives and the fundamental forms at one point.
///
/// Index conventions (zero based): `a[k]` is `a_{k+1}` with `a[2]` the unit
/// normal, `da[k][l] = d a_k / d xi_l`, `dda[k][l][m]` the second
/// derivatives and `dat[k] = d a_k / dt`.
#[derive(Debug, Clone, Copy)]
pub struct FrameData {
    pub x: Vec3,
    pub xt: Vec3,
    pub xtt: Vec3,
    pub a: [Vec3; 3],
    pub da: [[Vec3; 2]; 3],
    pub dda: [[[Vec3; 2]; 2]; 3],
    pub dat: [Vec3; 3],
    pub e_big: f64,
    pub f_big: f64,
    pub g_big: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub d_e_big: [f64; 2],
    pub d_f_big: [f64; 2],
    pub d_g_big: [f64; 2],
    pub d_e: [f64; 2],
    pub d_f: [f64; 2],
    pub d_g: [f64; 2],
    /// `A^0 = EG - F^2`
    pub a0: f64,
    /// `A^1 = -eG - gE + 2fF`
    pub a1: f64,
    /// `A^2 = eg - f^2`
    pub a2: f64,
    /// Normal velocity of the lower surface, `X_t . a_3`.
    pub w: f64,
    pub dw: [f64; 2],
    pub wt: f64,
}

impl FrameData {
    /// `M = [[G, -F], [-F, E]]`
    pub fn m(&self) -> [[f64; 2]; 2] {
        [[self.g_big, -self.f_big], [-self.f_big, self.e_big]]
    }

    pub fn sqrt_a0(&self) -> f64 {
        self.a0.sqrt()
    }

    pub fn from_jet(jet: &ChartJet) -> Result<FrameData, FilmError> {
        let a1 = jet.dx[0];
        let a2 = jet.dx[1];
        let c = a1.cross(&a2);
        let s = c.norm();
        if !(s > 1e-12 * a1.norm() * a2.norm()) || !s.is_finite() {
            return Err(FilmError::DegenerateParametrization {
                detail: format!("|a1 x a2| = {s:e}"),
            });
        }
        let n = c / s;
        let proj = |v: Vec3| v - n * n.dot(&v);
        let dc: [Vec3; 2] = std::array::from_fn(|l| jet.ddx[0][l].cross(&a2) + a1.cross(&jet.ddx[1][l]));
        let dn: [Vec3; 2] = std::array::from_fn(|l| proj(dc[l]) / s);
        let mut ddn = [[Vec3::zeros(); 2]; 2];
        for l in 0..2 {
            for m in 0..2 {
                let dlm = jet.dddx[0][l][m].cross(&a2)
                    + jet.ddx[0][l].cross(&jet.ddx[1][m])
                    + jet.ddx[0][m].cross(&jet.ddx[1][l])
                    + a1.cross(&jet.dddx[1][l][m]);
                // d_m of P applied to d_l c
                let dp = -(dn[m] * n.dot(&dc[l]) + n * dn[m].dot(&dc[l]));
                ddn[l][m] = (dp + proj(dlm)) / s - proj(dc[l]) * n.dot(&dc[m]) / (s * s);
            }
        }
        let dct = jet.dxt[0].cross(&a2) + a1.cross(&jet.dxt[1]);
        let dnt = proj(dct) / s;

        let (eb, fb, gb) = (a1.dot(&a1), a1.dot(&a2), a2.dot(&a2));
        let (e, f, g) = (n.dot(&jet.ddx[0][0]), n.dot(&jet.ddx[0][1]), n.dot(&jet.ddx[1][1]));
        let d_e_big = std::array::from_fn(|m| 2.0 * a1.dot(&jet.ddx[0][m]));
        let d_f_big = std::array::from_fn(|m| jet.ddx[0][m].dot(&a2) + a1.dot(&jet.ddx[1][m]));
        let d_g_big = std::array::from_fn(|m| 2.0 * a2.dot(&jet.ddx[1][m]));
        let d_e = std::array::from_fn(|m| dn[m].dot(&jet.ddx[0][0]) + n.dot(&jet.dddx[0][0][m]));
        let d_f = std::array::from_fn(|m| dn[m].dot(&jet.ddx[0][1]) + n.dot(&jet.dddx[0][1][m]));
        let d_g = std::array::from_fn(|m| dn[m].dot(&jet.ddx[1][1]) + n.dot(&jet.dddx[1][1][m]));

        let a0 = eb * gb - fb * fb;
        Ok(FrameData {
            x: jet.x,
            xt: jet.xt,
            xtt: jet.xtt,
            a: [a1, a2, n],
            da: [jet.ddx[0], jet.ddx[1], dn],
            dda: [jet.dddx[0], jet.dddx[1], ddn],
            dat: [jet.dxt[0], jet.dxt[1], dnt],
            e_big: eb,
            f_big: fb,
            g_big: gb,
            e,
            f,
            g,
            d_e_big,
            d_f_big,
            d_g_big,
            d_e,
            d_f,
            d_g,
            a0,
            a1: -e * gb - g * eb + 2.0 * f * fb,
            a2: e * g - f * f,
            w: jet.xt.dot(&n),
            dw: std::array::from_fn(|l| jet.dxt[l].dot(&n) + jet.xt.dot(&dn[l])),
            wt: jet.xtt.dot(&n) + jet.xt.dot(&dnt),
        })
    }

    /// The four expressions of the second fundamental form coefficient `f`.
    pub fn f_expressions(&self) -> [f64; 4] {
        let [a1, a2, a3] = self.a;
        [
            -a1.dot(&self.da[2][1]),
            -a2.dot(&self.da[2][0]),
            a3.dot(&self.da[0][1]),
            a3.dot(&self.da[1][0]),
        ]
    }

    /// Components of a Cartesian vector in the basis `(a1, a2, a3)`.
    pub fn components(&self, v: &Vec3) -> Vec3 {
        let basis = Matrix3::from_columns(&self.a);
        basis.lu().solve(v).unwrap_or_else(Vec3::zeros)
    }
}

/// Frame of `chart` at `(xi, t)` from its analytic derivatives.
pub fn build_frame(chart: &dyn SurfaceChart, xi: [f64; 2], t: f64) -> Result<FrameData, FilmError> {
    FrameData::from_jet(&chart.jet(xi, t)).map_err(|e| match e {
        FilmError::DegenerateParametrization { detail } => FilmError::DegenerateParametrization {
            detail: format!("{} at xi = ({}, {}), t = {t}: {detail}", chart.name(), xi[0], xi[1]),
        },
        other => other,
    })
}

/// Frame assembled from central differences of the chart position only.
///
/// Used as an independent check of analytic chart derivatives. The base step
/// applies to first derivatives and grows tenfold per extra order.
pub fn fd_derivative_oracle(
    chart: &dyn SurfaceChart,
    xi: [f64; 2],
    t: f64,
    step: f64,
) -> Result<FrameData, FilmError> {
    let f = |p: [f64; 2], s: f64| chart.position(p, s);
    FrameData::from_jet(&fd_jet(&f, xi, t, step))
}

/// Gap thickness `h` and the derivatives used by the coefficient engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapJet {
    pub h: f64,
    pub dh: [f64; 2],
    pub ddh: [[f64; 2]; 2],
    pub ht: f64,
    pub dht: [f64; 2],
}

pub trait GapField: Send + Sync {
    fn jet(&self, xi: [f64; 2], t: f64) -> GapJet;
    fn is_static(&self) -> bool;
}

/// `h = h0 + s . xi`
#[derive(Debug, Clone, Copy)]
pub struct LinearGap {
    pub h0: f64,
    pub slope: [f64; 2],
}

impl GapField for LinearGap {
    fn jet(&self, xi: [f64; 2], _t: f64) -> GapJet {
        GapJet {
            h: self.h0 + self.slope[0] * xi[0] + self.slope[1] * xi[1],
            dh: self.slope,
            ddh: [[0.0; 2]; 2],
            ht: 0.0,
            dht: [0.0; 2],
        }
    }
    fn is_static(&self) -> bool {
        true
    }
}

/// `h = h0 + A cos(2 pi (k . xi - nu t))`
#[derive(Debug, Clone, Copy)]
pub struct CosineGap {
    pub h0: f64,
    pub amplitude: f64,
    pub wavenumber: [f64; 2],
    pub frequency: f64,
}

impl GapField for CosineGap {
    fn jet(&self, xi: [f64; 2], t: f64) -> GapJet {
        let tau = 2.0 * std::f64::consts::PI;
        let k = [tau * self.wavenumber[0], tau * self.wavenumber[1]];
        let om = tau * self.frequency;
        let ph = k[0] * xi[0] + k[1] * xi[1] - om * t;
        let (s, c) = ph.sin_cos();
        let a = self.amplitude;
        GapJet {
            h: self.h0 + a * c,
            dh: [-a * k[0] * s, -a * k[1] * s],
            ddh: [[-a * k[0] * k[0] * c, -a * k[0] * k[1] * c], [-a * k[1] * k[0] * c, -a * k[1] * k[1] * c]],
            ht: a * om * s,
            dht: [a * om * k[0] * c, a * om * k[1] * c],
        }
    }
    fn is_static(&self) -> bool {
        self.frequency == 0.0 || self.amplitude == 0.0
    }
}

/// Uniform squeeze `h = h0 exp(r t)`.
#[derive(Debug, Clone, Copy)]
pub struct SqueezeGap {
    pub h0: f64,
    pub rate: f64,
}

impl GapField for SqueezeGap {
    fn jet(&self, _xi: [f64; 2], t: f64) -> GapJet {
        let h = self.h0 * (self.rate * t).exp();
        GapJet { h, dh: [0.0; 2], ddh: [[0.0; 2]; 2], ht: self.rate * h, dht: [0.0; 2] }
    }
    fn is_static(&self) -> bool {
        self.rate == 0.0
    }
}

fn unit_length() -> [f64; 2] {
    [1.0, 1.0]
}
fn one() -> f64 {
    1.0
}

/// Serializable description of the built-in charts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChartSpec {
    Plane {
        #[serde(default = "unit_length")]
        length: [f64; 2],
    },
    InclinedPlane {
        slope: [f64; 2],
    },
    TranslatingPlane {
        velocity: [f64; 3],
    },
    Cylinder {
        radius: f64,
        #[serde(default = "one")]
        length: f64,
        #[serde(default = "one")]
        span: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        omega: f64,
    },
    Torus {
        major_radius: f64,
        minor_radius: f64,
        #[serde(default = "one")]
        u_span: f64,
        #[serde(default = "one")]
        v_span: f64,
        #[serde(default)]
        u_offset: f64,
        #[serde(default)]
        v_offset: f64,
    },
}

impl ChartSpec {
    pub fn build(&self) -> Box<dyn SurfaceChart> {
        match *self {
            ChartSpec::Plane { length } => Box::new(Plane { length }),
            ChartSpec::InclinedPlane { slope } => Box::new(InclinedPlane { slope }),
            ChartSpec::TranslatingPlane { velocity } => Box::new(TranslatingPlane { velocity }),
            ChartSpec::Cylinder { radius, length, span, offset, omega } => {
                Box::new(CylinderPatch { radius, length, span, offset, omega })
            }
            ChartSpec::Torus { major_radius, minor_radius, u_span, v_span, u_offset, v_offset } => {
                Box::new(TorusPatch { major_radius, minor_radius, u_span, v_span, u_offset, v_offset })
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let pos = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{what} must be positive and finite"))
            }
        };
        match *self {
            ChartSpec::Plane { length } => {
                pos(length[0], "length[0]")?;
                pos(length[1], "length[1]")
            }
            ChartSpec::Cylinder { radius, length, span, .. } => {
                pos(radius, "radius")?;
                pos(length, "length")?;
                pos(span, "span")
            }
            ChartSpec::Torus { major_radius, minor_radius, u_span, v_span, .. } => {
                pos(minor_radius, "minor_radius")?;
                pos(u_span, "u_span")?;
                pos(v_span, "v_span")?;
                if major_radius <= minor_radius {
                    return Err("major_radius must exceed minor_radius".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Serializable description of the built-in gap laws.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GapSpec {
    Constant {
        h0: f64,
    },
    Linear {
        h0: f64,
        slope: [f64; 2],
    },
    Cosine {
        h0: f64,
        amplitude: f64,
        wavenumber: [f64; 2],
        #[serde(default)]
        frequency: f64,
    },
    Squeeze {
        h0: f64,
        rate: f64,
    },
}

impl GapSpec {
    pub fn build(&self) -> Box<dyn GapField> {
        match *self {
            GapSpec::Constant { h0 } => Box::new(LinearGap { h0, slope: [0.0; 2] }),
            GapSpec::Linear { h0, slope } => Box::new(LinearGap { h0, slope }),
            GapSpec::Cosine { h0, amplitude, wavenumber, frequency } => {
                Box::new(CosineGap { h0, amplitude, wavenumber, frequency })
            }
            GapSpec::Squeeze { h0, rate } => Box::new(SqueezeGap { h0, rate }),
        }
    }
}
