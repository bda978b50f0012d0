//! Uniform tensor grid on `[0,1]^2`, nodal fields, finite-difference
//! operators, sparse solves and the IMEX time step.

use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use faer::prelude::*;

use crate::error::FilmError;

/// Systems with at most this many unknowns use a direct sparse LU.
pub const DIRECT_SOLVE_LIMIT: usize = 200 * 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub n1: usize,
    pub n2: usize,
    pub d1: f64,
    pub d2: f64,
}

impl Grid2D {
    pub fn new(n1: usize, n2: usize) -> Result<Grid2D, FilmError> {
        if n1 < 8 || n2 < 8 {
            return Err(FilmError::InvalidGrid(format!("need at least 8 nodes per direction, got {n1} x {n2}")));
        }
        Ok(Grid2D { n1, n2, d1: 1.0 / (n1 - 1) as f64, d2: 1.0 / (n2 - 1) as f64 })
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        i + self.n1 * j
    }

    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.n1, idx / self.n1)
    }

    pub fn xi(&self, i: usize, j: usize) -> [f64; 2] {
        [i as f64 * self.d1, j as f64 * self.d2]
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n1 - 1 || j == self.n2 - 1
    }

    /// Which edge a boundary node belongs to; ξ1 edges take the corners.
    pub fn edge(&self, i: usize, j: usize) -> Option<Edge> {
        if i == 0 {
            Some(Edge::Xi1Min)
        } else if i == self.n1 - 1 {
            Some(Edge::Xi1Max)
        } else if j == 0 {
            Some(Edge::Xi2Min)
        } else if j == self.n2 - 1 {
            Some(Edge::Xi2Max)
        } else {
            None
        }
    }

    /// Trapezoid quadrature weight of a node.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let wi = if i == 0 || i == self.n1 - 1 { 0.5 } else { 1.0 };
        let wj = if j == 0 || j == self.n2 - 1 { 0.5 } else { 1.0 };
        wi * wj * self.d1 * self.d2
    }

    pub fn min_spacing(&self) -> f64 {
        self.d1.min(self.d2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Xi1Min,
    Xi1Max,
    Xi2Min,
    Xi2Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub n1: usize,
    pub n2: usize,
    pub data: Vec<f64>,
}

impl Field2D {
    pub fn zeros(g: &Grid2D) -> Field2D {
        Field2D { n1: g.n1, n2: g.n2, data: vec![0.0; g.len()] }
    }

    pub fn constant(g: &Grid2D, v: f64) -> Field2D {
        Field2D { n1: g.n1, n2: g.n2, data: vec![v; g.len()] }
    }

    pub fn from_vec(g: &Grid2D, data: Vec<f64>) -> Field2D {
        assert_eq!(data.len(), g.len());
        Field2D { n1: g.n1, n2: g.n2, data }
    }

    pub fn from_fn(g: &Grid2D, f: impl Fn([f64; 2]) -> f64) -> Field2D {
        let data = (0..g.len())
            .map(|k| {
                let (i, j) = g.ij(k);
                f(g.xi(i, j))
            })
            .collect();
        Field2D { n1: g.n1, n2: g.n2, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + self.n1 * j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i + self.n1 * j] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field2D {
        Field2D { n1: self.n1, n2: self.n2, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip(&self, o: &Field2D, f: impl Fn(f64, f64) -> f64) -> Field2D {
        assert_eq!(self.data.len(), o.data.len());
        Field2D { n1: self.n1, n2: self.n2, data: self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn add(&self, o: &Field2D) -> Field2D {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Field2D) -> Field2D {
        self.zip(o, |a, b| a - b)
    }

    pub fn mul(&self, o: &Field2D) -> Field2D {
        self.zip(o, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Field2D {
        self.map(|v| v * s)
    }

    /// `self + s * o`
    pub fn axpy(&self, s: f64, o: &Field2D) -> Field2D {
        self.zip(o, |a, b| a + s * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L2 norm on `[0,1]^2` with trapezoid weights.
    pub fn l2(&self, g: &Grid2D) -> f64 {
        let mut s = 0.0;
        for j in 0..self.n2 {
            for i in 0..self.n1 {
                s += g.weight(i, j) * self.get(i, j).powi(2);
            }
        }
        s.sqrt()
    }

    pub fn integral(&self, g: &Grid2D) -> f64 {
        let mut s = 0.0;
        for j in 0..self.n2 {
            for i in 0..self.n1 {
                s += g.weight(i, j) * self.get(i, j);
            }
        }
        s
    }
}

/// Bilinear interpolation of a nodal field at `xi`, clamped to the square.
pub fn interpolate(g: &Grid2D, f: &Field2D, xi: [f64; 2]) -> f64 {
    let locate = |x: f64, d: f64, n: usize| {
        let s = (x.clamp(0.0, 1.0) / d).min((n - 1) as f64);
        let k = (s.floor() as usize).min(n - 2);
        (k, s - k as f64)
    };
    let (i, s) = locate(xi[0], g.d1, g.n1);
    let (j, t) = locate(xi[1], g.d2, g.n2);
    (1.0 - s) * (1.0 - t) * f.get(i, j) + s * (1.0 - t) * f.get(i + 1, j) + (1.0 - s) * t * f.get(i, j + 1) + s * t * f.get(i + 1, j + 1)
}

/// Second-order first derivative along `dir` (0 for ξ1, 1 for ξ2).
pub fn diff(g: &Grid2D, f: &Field2D, dir: usize) -> Field2D {
    let mut out = Field2D::zeros(g);
    let (n, h) = if dir == 0 { (g.n1, g.d1) } else { (g.n2, g.d2) };
    for j in 0..g.n2 {
        for i in 0..g.n1 {
            let k = if dir == 0 { i } else { j };
            let at = |kk: usize| if dir == 0 { f.get(kk, j) } else { f.get(i, kk) };
            let v = if k == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else if k == n - 1 {
                (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
            } else {
                (at(k + 1) - at(k - 1)) / (2.0 * h)
            };
            out.set(i, j, v);
        }
    }
    out
}

/// Second-order second derivative along `dir`.
pub fn diff2(g: &Grid2D, f: &Field2D, dir: usize) -> Field2D {
    let mut out = Field2D::zeros(g);
    let (n, h) = if dir == 0 { (g.n1, g.d1) } else { (g.n2, g.d2) };
    let h2 = h * h;
    for j in 0..g.n2 {
        for i in 0..g.n1 {
            let k = if dir == 0 { i } else { j };
            let at = |kk: usize| if dir == 0 { f.get(kk, j) } else { f.get(i, kk) };
            let v = if k == 0 {
                (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / h2
            } else if k == n - 1 {
                (2.0 * at(n - 1) - 5.0 * at(n - 2) + 4.0 * at(n - 3) - at(n - 4)) / h2
            } else {
                (at(k + 1) - 2.0 * at(k) + at(k - 1)) / h2
            };
            out.set(i, j, v);
        }
    }
    out
}

/// All second derivatives `[[f11, f12], [f21, f22]]`.
pub fn hessian(g: &Grid2D, f: &Field2D) -> [[Field2D; 2]; 2] {
    let f12 = diff(g, &diff(g, f, 1), 0);
    [[diff2(g, f, 0), f12.clone()], [f12, diff2(g, f, 1)]]
}

pub fn grad(g: &Grid2D, f: &Field2D) -> [Field2D; 2] {
    [diff(g, f, 0), diff(g, f, 1)]
}

/// Flux-form divergence `div(w g)` of a matrix-weighted vector field.
///
/// Nodal fluxes `q = w g` are averaged onto faces, so sums over interior
/// nodes telescope to the faces next to the boundary.
pub fn div_weighted(g: &Grid2D, w: &[[Field2D; 2]; 2], v: &[Field2D; 2]) -> Field2D {
    let q: [Field2D; 2] = std::array::from_fn(|r| w[r][0].mul(&v[0]).add(&w[r][1].mul(&v[1])));
    let mut out = Field2D::zeros(g);
    let d0 = diff(g, &q[0], 0);
    let d1 = diff(g, &q[1], 1);
    for k in 0..g.len() {
        out.data[k] = d0.data[k] + d1.data[k];
    }
    out
}

/// Net outward flux of `w g` through the faces adjacent to the boundary,
/// matching the telescoped interior sum of [`div_weighted`].
pub fn boundary_flux(g: &Grid2D, w: &[[Field2D; 2]; 2], v: &[Field2D; 2]) -> f64 {
    let q: [Field2D; 2] = std::array::from_fn(|r| w[r][0].mul(&v[0]).add(&w[r][1].mul(&v[1])));
    let face1 = |i: usize, j: usize| 0.5 * (q[0].get(i, j) + q[0].get(i + 1, j));
    let face2 = |i: usize, j: usize| 0.5 * (q[1].get(i, j) + q[1].get(i, j + 1));
    let mut s = 0.0;
    for j in 1..g.n2 - 1 {
        s += (face1(g.n1 - 2, j) - face1(0, j)) * g.d2;
    }
    for i in 1..g.n1 - 1 {
        s += (face2(i, g.n2 - 2) - face2(i, 0)) * g.d1;
    }
    s
}

/// Stiffness matrix `K_ab = int grad phi_a . W grad phi_b` for bilinear
/// elements with a constant weight per cell, as triplets.
///
/// `cell_weight(i, j)` gives `W` at the centre of the cell with lower-left
/// node `(i, j)`. `K` is symmetric and its rows sum to zero.
pub fn weighted_stiffness(g: &Grid2D, cell_weight: impl Fn(usize, usize) -> [[f64; 2]; 2]) -> Vec<(usize, usize, f64)> {
    // two-point Gauss rule on the unit cell
    let gp = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    let corners = [(0usize, 0usize), (1, 0), (0, 1), (1, 1)];
    let mut local = [[[[0.0; 4]; 4]; 2]; 2];
    for &s in &gp {
        for &t in &gp {
            // gradients of the bilinear shape functions in reference coordinates
            let gr: [[f64; 2]; 4] = std::array::from_fn(|a| {
                let (ca, cb) = corners[a];
                let fx = if ca == 1 { 1.0 } else { -1.0 };
                let fy = if cb == 1 { 1.0 } else { -1.0 };
                let lx = if ca == 1 { s } else { 1.0 - s };
                let ly = if cb == 1 { t } else { 1.0 - t };
                [fx * ly, lx * fy]
            });
            for a in 0..4 {
                for b in 0..4 {
                    for p in 0..2 {
                        for q in 0..2 {
                            local[p][q][a][b] += 0.25 * gr[a][p] * gr[b][q];
                        }
                    }
                }
            }
        }
    }
    let scale = [[g.d2 / g.d1, 1.0], [1.0, g.d1 / g.d2]];
    let mut trip = Vec::with_capacity((g.n1 - 1) * (g.n2 - 1) * 16);
    for j in 0..g.n2 - 1 {
        for i in 0..g.n1 - 1 {
            let w = cell_weight(i, j);
            let nodes: [usize; 4] = std::array::from_fn(|a| g.idx(i + corners[a].0, j + corners[a].1));
            for a in 0..4 {
                for b in 0..4 {
                    let mut v = 0.0;
                    for p in 0..2 {
                        for q in 0..2 {
                            v += w[p][q] * scale[p][q] * local[p][q][a][b];
                        }
                    }
                    trip.push((nodes[a], nodes[b], v));
                }
            }
        }
    }
    trip
}

/// Sparse system with optional Dirichlet values per unknown.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub n: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    pub dirichlet: Vec<Option<f64>>,
}

/// Outcome of a solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub direct: bool,
}

/// `y = A x` for triplets.
pub fn apply_triplets(triplets: &[(usize, usize, f64)], x: &[f64], n: usize) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for &(r, c, v) in triplets {
        y[r] += v * x[c];
    }
    y
}

/// Solve after eliminating Dirichlet unknowns (keeps symmetric systems symmetric).
pub fn solve_sparse(sys: &LinearSystem) -> Result<SolveReport, FilmError> {
    solve_sparse_with(sys, DIRECT_SOLVE_LIMIT)
}

pub fn solve_sparse_with(sys: &LinearSystem, direct_limit: usize) -> Result<SolveReport, FilmError> {
    let n = sys.n;
    let mut map = vec![usize::MAX; n];
    let mut free = Vec::new();
    for k in 0..n {
        if sys.dirichlet[k].is_none() {
            map[k] = free.len();
            free.push(k);
        }
    }
    let nf = free.len();
    let mut x = vec![0.0; n];
    for k in 0..n {
        if let Some(v) = sys.dirichlet[k] {
            x[k] = v;
        }
    }
    if nf == 0 {
        return Ok(SolveReport { x, iterations: 0, residual: 0.0, direct: true });
    }
    let mut b: Vec<f64> = free.iter().map(|&k| sys.rhs[k]).collect();
    let mut red = Vec::with_capacity(sys.triplets.len());
    for &(r, c, v) in &sys.triplets {
        if map[r] == usize::MAX {
            continue;
        }
        if map[c] == usize::MAX {
            b[map[r]] -= v * x[c];
        } else {
            red.push((map[r], map[c], v));
        }
    }
    let (xf, iterations, direct) = if nf <= direct_limit {
        let lu = SparseLu::new(nf, &red)?;
        (lu.solve(&b), 1, true)
    } else {
        let (xf, it) = pcg(nf, &red, &b, 1e-12, 20 * nf)?;
        (xf, it, false)
    };
    let ax = apply_triplets(&red, &xf, nf);
    let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let residual = ax.iter().zip(&b).fold(0.0f64, |m, (a, bb)| m.max((a - bb).abs())) / bnorm;
    if !residual.is_finite() || residual > 1e-8 {
        return Err(FilmError::SolverDivergence { detail: format!("relative residual {residual:e} after solve") });
    }
    for (f, &k) in free.iter().enumerate() {
        x[k] = xf[f];
    }
    Ok(SolveReport { x, iterations, residual, direct })
}

/// A system with its Dirichlet rows eliminated and the matrix factorized
/// once, for repeated solves with changing right sides.
pub struct FactoredSystem {
    n: usize,
    free: Vec<usize>,
    map: Vec<usize>,
    dirichlet: Vec<Option<f64>>,
    triplets: Vec<(usize, usize, f64)>,
    reduced: Vec<(usize, usize, f64)>,
    lu: Option<SparseLu>,
}

impl FactoredSystem {
    pub fn new(sys: &LinearSystem) -> Result<Self, FilmError> {
        let mut map = vec![usize::MAX; sys.n];
        let mut free = Vec::new();
        for k in 0..sys.n {
            if sys.dirichlet[k].is_none() {
                map[k] = free.len();
                free.push(k);
            }
        }
        let reduced: Vec<_> = sys
            .triplets
            .iter()
            .filter(|&&(r, c, _)| map[r] != usize::MAX && map[c] != usize::MAX)
            .map(|&(r, c, v)| (map[r], map[c], v))
            .collect();
        let lu = if !free.is_empty() && free.len() <= DIRECT_SOLVE_LIMIT {
            Some(SparseLu::new(free.len(), &reduced)?)
        } else {
            None
        };
        Ok(FactoredSystem {
            n: sys.n,
            free,
            map,
            dirichlet: sys.dirichlet.clone(),
            triplets: sys.triplets.clone(),
            reduced,
            lu,
        })
    }

    /// Solve with a new right side; Dirichlet values are those of the original system.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, FilmError> {
        let mut x: Vec<f64> = self.dirichlet.iter().map(|d| d.unwrap_or(0.0)).collect();
        if self.free.is_empty() {
            return Ok(x);
        }
        let mut b: Vec<f64> = self.free.iter().map(|&k| rhs[k]).collect();
        for &(r, c, v) in &self.triplets {
            if self.map[r] != usize::MAX && self.map[c] == usize::MAX {
                b[self.map[r]] -= v * x[c];
            }
        }
        let xf = match &self.lu {
            Some(lu) => lu.solve(&b),
            None => pcg(self.free.len(), &self.reduced, &b, 1e-12, 20 * self.free.len())?.0,
        };
        if xf.iter().any(|v| !v.is_finite()) {
            return Err(FilmError::SolverDivergence { detail: "non-finite solution".into() });
        }
        for (f, &k) in self.free.iter().enumerate() {
            x[k] = xf[f];
        }
        debug_assert_eq!(x.len(), self.n);
        Ok(x)
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite systems.
pub fn pcg(n: usize, a: &[(usize, usize, f64)], b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize), FilmError> {
    let mut diag = vec![0.0; n];
    for &(r, c, v) in a {
        if r == c {
            diag[r] += v;
        }
    }
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(FilmError::SolverDivergence { detail: "non-positive diagonal in CG".into() });
    }
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bn = dot(b, b).sqrt();
    if bn == 0.0 {
        return Ok((x, 0));
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(p, d)| p / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = apply_triplets(a, &p, n);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(FilmError::SolverDivergence { detail: format!("CG breakdown at iteration {it}") });
        }
        let al = rz / pap;
        for k in 0..n {
            x[k] += al * p[k];
            r[k] -= al * ap[k];
        }
        if dot(&r, &r).sqrt() <= tol * bn {
            return Ok((x, it));
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(FilmError::SolverDivergence { detail: format!("CG did not converge in {max_iter} iterations") })
}

/// Factorized sparse matrix, reusable across right-hand sides.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(n: usize, triplets: &[(usize, usize, f64)]) -> Result<SparseLu, FilmError> {
        let t: Vec<Triplet<usize, usize, f64>> = triplets.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &t)
            .map_err(|e| FilmError::SolverDivergence { detail: format!("matrix assembly: {e:?}") })?;
        let lu = a.sp_lu().map_err(|e| FilmError::SolverDivergence { detail: format!("sparse LU: {e:?}") })?;
        Ok(SparseLu { n, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Lateral condition for a transported field on one edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateralBc {
    /// Hold the boundary values fixed.
    #[default]
    Dirichlet,
    /// Second-order one-sided zero normal derivative.
    ZeroGradient,
}

/// Lateral conditions on the four edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LateralBcs {
    #[serde(default)]
    pub xi1_min: LateralBc,
    #[serde(default)]
    pub xi1_max: LateralBc,
    #[serde(default)]
    pub xi2_min: LateralBc,
    #[serde(default)]
    pub xi2_max: LateralBc,
}

impl LateralBcs {
    pub fn all(bc: LateralBc) -> Self {
        LateralBcs { xi1_min: bc, xi1_max: bc, xi2_min: bc, xi2_max: bc }
    }

    pub fn on(&self, e: Edge) -> LateralBc {
        match e {
            Edge::Xi1Min => self.xi1_min,
            Edge::Xi1Max => self.xi1_max,
            Edge::Xi2Min => self.xi2_min,
            Edge::Xi2Max => self.xi2_max,
        }
    }

    /// Boundary-row stencil `(node, coefficient)` with zero right-hand side
    /// for zero-gradient nodes, or `None` for Dirichlet nodes.
    fn stencil(&self, g: &Grid2D, i: usize, j: usize) -> Option<[(usize, f64); 3]> {
        let e = g.edge(i, j)?;
        if self.on(e) == LateralBc::Dirichlet {
            return None;
        }
        let (a, b, c) = match e {
            Edge::Xi1Min => ((0, j), (1, j), (2, j)),
            Edge::Xi1Max => ((g.n1 - 1, j), (g.n1 - 2, j), (g.n1 - 3, j)),
            Edge::Xi2Min => ((i, 0), (i, 1), (i, 2)),
            Edge::Xi2Max => ((i, g.n2 - 1), (i, g.n2 - 2), (i, g.n2 - 3)),
        };
        Some([(g.idx(a.0, a.1), 3.0), (g.idx(b.0, b.1), -4.0), (g.idx(c.0, c.1), 1.0)])
    }

    /// Overwrite boundary values of `f`: Dirichlet nodes take `held`,
    /// zero-gradient nodes are extrapolated from the interior.
    pub fn apply(&self, g: &Grid2D, f: &mut Field2D, held: &Field2D) {
        for pass in 0..2 {
            for j in 0..g.n2 {
                for i in 0..g.n1 {
                    let Some(e) = g.edge(i, j) else { continue };
                    // ξ2 edges first so that ξ1 edges, which own the corners, see final values
                    let xi1_edge = matches!(e, Edge::Xi1Min | Edge::Xi1Max);
                    if (pass == 0) == xi1_edge {
                        continue;
                    }
                    match self.stencil(g, i, j) {
                        None => f.set(i, j, held.get(i, j)),
                        Some(s) => {
                            let v = -(s[1].1 * f.data[s[1].0] + s[2].1 * f.data[s[2].0]) / s[0].1;
                            f.set(i, j, v);
                        }
                    }
                }
            }
        }
    }
}

/// `(I - dt nu D)` with `D u = sum_{lm} W_lm d^2 u / d xi_l d xi_m` on interior
/// rows and the lateral conditions on boundary rows, factorized once.
pub struct ImplicitDiffusion {
    pub grid: Grid2D,
    pub dt: f64,
    pub bcs: LateralBcs,
    lu: SparseLu,
}

impl ImplicitDiffusion {
    /// `weight(node)` is the symmetric matrix `nu J^{0,0}` at that node.
    pub fn new(g: &Grid2D, dt: f64, bcs: LateralBcs, weight: impl Fn(usize) -> [[f64; 2]; 2]) -> Result<Self, FilmError> {
        let mut t = Vec::with_capacity(g.len() * 9);
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                let k = g.idx(i, j);
                if g.is_boundary(i, j) {
                    match bcs.stencil(g, i, j) {
                        None => t.push((k, k, 1.0)),
                        Some(s) => {
                            for (c, v) in s {
                                t.push((k, c, v));
                            }
                        }
                    }
                    continue;
                }
                let w = weight(k);
                if !(w[0][0] > 0.0 && w[0][0] * w[1][1] - w[0][1] * w[1][0] > 0.0) {
                    return Err(FilmError::NonSpdWeight { i, j });
                }
                let (h1, h2) = (g.d1, g.d2);
                let mut add = |ii: usize, jj: usize, v: f64| t.push((k, g.idx(ii, jj), -dt * v));
                add(i + 1, j, w[0][0] / (h1 * h1));
                add(i - 1, j, w[0][0] / (h1 * h1));
                add(i, j + 1, w[1][1] / (h2 * h2));
                add(i, j - 1, w[1][1] / (h2 * h2));
                let cross = (w[0][1] + w[1][0]) / (4.0 * h1 * h2);
                add(i + 1, j + 1, cross);
                add(i - 1, j - 1, cross);
                add(i + 1, j - 1, -cross);
                add(i - 1, j + 1, -cross);
                t.push((k, k, 1.0 + dt * (2.0 * w[0][0] / (h1 * h1) + 2.0 * w[1][1] / (h2 * h2))));
            }
        }
        let lu = SparseLu::new(g.len(), &t)?;
        Ok(ImplicitDiffusion { grid: g.clone(), dt, bcs, lu })
    }

    /// Solve `(I - dt nu D) u = rhs` where boundary entries of `rhs` are
    /// replaced by the Dirichlet values from `held`.
    pub fn solve(&self, rhs: &Field2D, held: &Field2D) -> Field2D {
        let g = &self.grid;
        let mut b = rhs.data.clone();
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                if g.is_boundary(i, j) {
                    let k = g.idx(i, j);
                    b[k] = if self.bcs.stencil(g, i, j).is_none() { held.data[k] } else { 0.0 };
                }
            }
        }
        Field2D::from_vec(g, self.lu.solve(&b))
    }
}

/// CFL limit `0.5 min(dxi) / max |V - C^0|`, infinite for a fluid at rest.
pub fn cfl_limit(g: &Grid2D, speed_max: f64) -> f64 {
    if speed_max > 0.0 {
        0.5 * g.min_spacing() / speed_max
    } else {
        f64::INFINITY
    }
}

/// One IMEX step: Heun (RK2) for the explicit tendency, backward Euler for
/// the implicit diffusion.
///
/// `explicit(state, stage)` gives the explicit tendency, with stage 0 at the
/// old time level and stage 1 at the new one; `implicit` holds the
/// factorized diffusion operators (one per component, `None` for pure RK2);
/// `held` supplies Dirichlet boundary values.
pub fn time_step_imex<F>(
    state: &[Field2D],
    explicit: F,
    implicit: Option<&ImplicitDiffusion>,
    held: &[Field2D],
    dt: f64,
) -> Result<Vec<Field2D>, FilmError>
where
    F: Fn(&[Field2D], usize) -> Result<Vec<Field2D>, FilmError>,
{
    let stage = |rhs: Vec<Field2D>| -> Vec<Field2D> {
        match implicit {
            Some(op) => rhs.iter().zip(held).map(|(r, h)| op.solve(r, h)).collect(),
            None => rhs,
        }
    };
    let e0 = explicit(state, 0)?;
    let pred = stage(state.iter().zip(&e0).map(|(u, e)| u.axpy(dt, e)).collect());
    let e1 = explicit(&pred, 1)?;
    let out = stage(
        state
            .iter()
            .zip(e0.iter().zip(&e1))
            .map(|(u, (a, b))| u.axpy(0.5 * dt, &a.add(b)))
            .collect(),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn small_grids_rejected() {
        assert!(matches!(Grid2D::new(7, 10), Err(FilmError::InvalidGrid(_))));
    }

    #[test]
    fn gradient_of_sine_is_second_order() {
        let g = Grid2D::new(65, 9).unwrap();
        let f = Field2D::from_fn(&g, |x| (PI * x[0]).sin());
        let d = diff(&g, &f, 0);
        let err = (0..g.len())
            .map(|k| {
                let (i, j) = g.ij(k);
                (d.get(i, j) - PI * (PI * g.xi(i, j)[0]).cos()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err <= 1.3 * (PI * g.d1).powi(2), "{err}");
    }

    #[test]
    fn weighted_divergence_exact_for_quadratic() {
        let g = Grid2D::new(17, 13).unwrap();
        let one = Field2D::constant(&g, 1.0);
        let zero = Field2D::zeros(&g);
        let w = [[one.clone(), zero.clone()], [zero, one]];
        let v = [Field2D::from_fn(&g, |x| 2.0 * x[0]), Field2D::from_fn(&g, |x| 2.0 * x[1])];
        let d = div_weighted(&g, &w, &v);
        assert!(d.data.iter().all(|x| (x - 4.0).abs() < 1e-11));
    }

    #[test]
    fn divergence_theorem_telescopes() {
        let g = Grid2D::new(21, 17).unwrap();
        let w = [
            [Field2D::from_fn(&g, |x| 1.0 + x[0]), Field2D::from_fn(&g, |x| 0.2 * x[1])],
            [Field2D::from_fn(&g, |x| 0.2 * x[1]), Field2D::from_fn(&g, |x| 2.0 + x[0] * x[1])],
        ];
        let v = [Field2D::from_fn(&g, |x| (x[0] * x[1]).sin()), Field2D::from_fn(&g, |x| x[0].exp())];
        let d = div_weighted(&g, &w, &v);
        let mut s = 0.0;
        for j in 1..g.n2 - 1 {
            for i in 1..g.n1 - 1 {
                s += d.get(i, j) * g.d1 * g.d2;
            }
        }
        assert!((s - boundary_flux(&g, &w, &v)).abs() < 1e-10);
    }

    #[test]
    fn stiffness_rows_sum_to_zero_and_is_symmetric() {
        let g = Grid2D::new(9, 11).unwrap();
        let t = weighted_stiffness(&g, |i, j| [[1.0 + i as f64, 0.3], [0.3, 2.0 + j as f64]]);
        let one = vec![1.0; g.len()];
        assert!(apply_triplets(&t, &one, g.len()).iter().all(|v| v.abs() < 1e-12));
        let mut dense = vec![0.0; g.len() * g.len()];
        for &(r, c, v) in &t {
            dense[r * g.len() + c] += v;
        }
        for r in 0..g.len() {
            for c in 0..g.len() {
                assert!((dense[r * g.len() + c] - dense[c * g.len() + r]).abs() < 1e-12);
            }
        }
    }

    fn poisson(g: &Grid2D) -> LinearSystem {
        let t = weighted_stiffness(g, |_, _| [[1.0, 0.0], [0.0, 1.0]]);
        let mut rhs = vec![0.0; g.len()];
        let mut dir = vec![None; g.len()];
        for k in 0..g.len() {
            let (i, j) = g.ij(k);
            let x = g.xi(i, j);
            rhs[k] = 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin() * g.d1 * g.d2;
            if g.is_boundary(i, j) {
                dir[k] = Some(0.0);
            }
        }
        LinearSystem { n: g.len(), triplets: t, rhs, dirichlet: dir }
    }

    #[test]
    fn direct_and_iterative_solves_agree() {
        let g = Grid2D::new(33, 33).unwrap();
        let sys = poisson(&g);
        let a = solve_sparse(&sys).unwrap();
        let b = solve_sparse_with(&sys, 0).unwrap();
        assert!(a.direct && !b.direct);
        let nf = (g.n1 - 2) * (g.n2 - 2);
        assert!(b.iterations <= 5 * nf);
        let diff = a.x.iter().zip(&b.x).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(diff < 1e-9, "{diff}");
        let exact = |k: usize| {
            let (i, j) = g.ij(k);
            let x = g.xi(i, j);
            (PI * x[0]).sin() * (PI * x[1]).sin()
        };
        let err = (0..g.len()).map(|k| (a.x[k] - exact(k)).abs()).fold(0.0, f64::max);
        assert!(err < 0.3 * (PI * g.d1).powi(2), "{err}");
    }

    #[test]
    fn pure_neumann_system_is_rejected() {
        let g = Grid2D::new(9, 9).unwrap();
        let mut sys = poisson(&g);
        sys.dirichlet = vec![None; g.len()];
        sys.rhs = vec![1.0; g.len()];
        assert!(matches!(solve_sparse(&sys), Err(FilmError::SolverDivergence { .. })));
        assert!(matches!(solve_sparse_with(&sys, 0), Err(FilmError::SolverDivergence { .. })));
    }

    #[test]
    fn heun_decay_matches_exponential() {
        let g = Grid2D::new(8, 8).unwrap();
        let run = |dt: f64, steps: usize| {
            let mut s = vec![Field2D::constant(&g, 1.0)];
            for _ in 0..steps {
                s = time_step_imex(&s, |u, _| Ok(vec![u[0].scale(-1.0)]), None, &[], dt).unwrap();
            }
            (s[0].get(3, 3) - (-1f64).exp()).abs()
        };
        let e1 = run(0.1, 10);
        let e2 = run(0.05, 20);
        assert!(e1 < 1e-3);
        assert!((e1 / e2 - 4.0).abs() < 0.5, "{}", e1 / e2);
    }

    #[test]
    fn implicit_diffusion_damps_sine_mode() {
        let g = Grid2D::new(33, 33).unwrap();
        let nu = 0.1;
        let dt = 1e-3;
        let op = ImplicitDiffusion::new(&g, dt, LateralBcs::all(LateralBc::Dirichlet), |_| [[nu, 0.0], [0.0, nu]]).unwrap();
        let f0 = Field2D::from_fn(&g, |x| (PI * x[0]).sin() * (PI * x[1]).sin());
        let zero = Field2D::zeros(&g);
        let mut u = vec![f0.clone()];
        for _ in 0..100 {
            u = time_step_imex(&u, |s, _| Ok(vec![Field2D::zeros(&g); s.len()]), Some(&op), &[zero.clone()], dt).unwrap();
        }
        let expect = (-2.0 * PI * PI * nu * 0.1f64).exp();
        assert!((u[0].get(16, 16) - expect).abs() < 5e-3);
    }

    #[test]
    fn zero_gradient_extrapolation() {
        let g = Grid2D::new(9, 9).unwrap();
        let mut f = Field2D::from_fn(&g, |x| 1.0 + (x[0] - 0.5).powi(2) * 0.0 + x[1] * 0.0);
        f.set(0, 4, 7.0);
        LateralBcs::all(LateralBc::ZeroGradient).apply(&g, &mut f, &Field2D::zeros(&g));
        assert!((f.get(0, 4) - 1.0).abs() < 1e-14);
    }
}
