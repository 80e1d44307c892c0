//! Conservative finite-difference discretization of the stationary
//! Fokker-Planck operator in one and two dimensions.
//!
//! Nodes sit on a uniform vertex-centered grid. The flux through the face
//! between neighbors `P` and `Q = P + e_k` is
//!
//! ```text
//! J = f_face (p_P + p_Q) / 2 - eps D_kk (p_Q - p_P) / h_k
//! ```
//!
//! with `f_face` the mean of `f_k` at the two nodes. Boundary faces carry no
//! flux. `A` is the net flux into each node divided by `h_k`, so its columns
//! sum to zero exactly.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::{Domain, Kind, SystemSpec};

pub const MIN_NODES: usize = 16;
pub const DENSE_LIMIT: usize = 5000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub n: Vec<usize>,
    pub h: Vec<f64>,
}

impl Grid {
    pub fn new(domain: &Domain, n: &[usize]) -> Result<Self> {
        let d = domain.dim();
        if !(1..=2).contains(&d) {
            return Err(Error::UnsupportedDimension { what: "finite differences", dim: d });
        }
        if n.len() != d {
            return Err(Error::DimensionMismatch {
                what: "grid node counts",
                expected: d,
                got: n.len(),
            });
        }
        if let Some(&bad) = n.iter().find(|&&k| k < MIN_NODES) {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least {MIN_NODES} nodes per axis, got {bad}"
            )));
        }
        let h = (0..d)
            .map(|k| (domain.upper[k] - domain.lower[k]) / (n[k] - 1) as f64)
            .collect();
        Ok(Self {
            lower: domain.lower.clone(),
            upper: domain.upper.clone(),
            n: n.to_vec(),
            h,
        })
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.n[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + i as f64 * self.h[axis]
        }
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|i| self.coord(axis, i)).collect()
    }

    /// Row-major: the last axis varies fastest.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.dim() {
            1 => [idx, 0],
            _ => [idx / self.n[1], idx % self.n[1]],
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let m = self.multi_index(idx);
        (0..self.dim()).map(|k| self.coord(k, m[k])).collect()
    }

    /// Nearest node to `x`.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for k in 0..self.dim() {
            let i = ((x[k] - self.lower[k]) / self.h[k]).round().clamp(0.0, (self.n[k] - 1) as f64) as usize;
            idx = idx * self.n[k] + i;
        }
        idx
    }

    /// Tensor-product trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let w1 = |k: usize, i: usize| {
            if i == 0 || i + 1 == self.n[k] {
                0.5 * self.h[k]
            } else {
                self.h[k]
            }
        };
        (0..self.len())
            .map(|idx| {
                let m = self.multi_index(idx);
                (0..self.dim()).map(|k| w1(k, m[k])).product()
            })
            .collect()
    }

    /// Reference grid: 801 nodes in 1D, 401 x 601 on the two-metastable
    /// domain, 257 x 257 elsewhere.
    pub fn default_for(system: &SystemSpec) -> Result<Self> {
        let n: Vec<usize> = match (system.dim, &system.kind) {
            (1, _) => vec![801],
            (2, Kind::TwoMetastable) => vec![401, 601],
            (2, _) => vec![257, 257],
            (d, _) => return Err(Error::UnsupportedDimension { what: "finite differences", dim: d }),
        };
        Self::new(&system.domain, &n)
    }
}

/// Sparse matrix as merged triplets sorted by `(col, row)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    fn from_unmerged(n: usize, mut raw: Vec<(usize, usize, f64)>) -> Self {
        raw.sort_by_key(|&(r, c, _)| (c, r));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(raw.len());
        for (r, c, v) in raw {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        Self { n, entries }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for &(_, c, v) in &self.entries {
            s[c] += v;
        }
        s
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let mut s = vec![0.0; self.n];
        for &(r, _, v) in &self.entries {
            s[r] += v.abs();
        }
        s.into_iter().fold(0.0, f64::max)
    }

    /// Max absolute column sum.
    pub fn norm_1(&self) -> f64 {
        let mut s = vec![0.0; self.n];
        for &(_, c, v) in &self.entries {
            s[c] += v.abs();
        }
        s.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.n, self.n);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// The matrix with row and column `k` removed, and `-A[:, k]` without
    /// row `k` as right-hand side.
    fn pinned(&self, k: usize) -> (SparseMatrix, Vec<f64>) {
        let shift = |i: usize| if i > k { i - 1 } else { i };
        let mut rhs = vec![0.0; self.n - 1];
        let mut entries = Vec::with_capacity(self.entries.len());
        for &(r, c, v) in &self.entries {
            if r == k {
                continue;
            }
            if c == k {
                rhs[shift(r)] -= v;
            } else {
                entries.push((shift(r), shift(c), v));
            }
        }
        (SparseMatrix { n: self.n - 1, entries }, rhs)
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trip: Vec<Triplet<usize, usize, f64>> =
            self.entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &trip)
            .map_err(|e| Error::LinearAlgebra(format!("sparse assembly: {e:?}")))
    }
}

/// Face-flux discretization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxScheme {
    /// Arithmetic means of `f` and `p` on the face; second order.
    #[default]
    Central,
    /// Scharfetter-Gummel exponential fitting; first order but monotone at
    /// any cell Peclet number.
    ExponentialFitting,
}

/// Bernoulli function `z / (e^z - 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-6 {
        1.0 - 0.5 * z + z * z / 12.0
    } else {
        z / z.exp_m1()
    }
}

#[derive(Clone, Debug)]
pub struct FdmOperator {
    pub grid: Grid,
    pub epsilon: f64,
    pub matrix: SparseMatrix,
    pub scheme: FluxScheme,
}

pub fn assemble(system: &SystemSpec, grid: &Grid) -> Result<FdmOperator> {
    assemble_with(system, grid, FluxScheme::Central)
}

pub fn assemble_with(system: &SystemSpec, grid: &Grid, scheme: FluxScheme) -> Result<FdmOperator> {
    let d = system.dim;
    if !(1..=2).contains(&d) {
        return Err(Error::UnsupportedDimension { what: "finite differences", dim: d });
    }
    if grid.dim() != d {
        return Err(Error::DimensionMismatch {
            what: "grid dimension",
            expected: d,
            got: grid.dim(),
        });
    }
    if !system.diffusion_is_diagonal() {
        return Err(Error::InvalidArgument("finite differences need a diagonal diffusion matrix".into()));
    }
    let n = grid.len();
    let mut drift = vec![0.0; n * d];
    for idx in 0..n {
        system.drift(&grid.point(idx), &mut drift[idx * d..(idx + 1) * d]);
    }
    let eps = system.epsilon;
    let stride = |k: usize| if k + 1 == d { 1 } else { grid.n[1] };
    let mut raw = Vec::with_capacity(4 * d * n);
    for p in 0..n {
        let m = grid.multi_index(p);
        for k in 0..d {
            if m[k] + 1 == grid.n[k] {
                continue;
            }
            let q = p + stride(k);
            let h = grid.h[k];
            let fa = 0.5 * (drift[p * d + k] + drift[q * d + k]);
            let diff = eps * system.diffusion[k * d + k] / h;
            // J = ci p_P + cj p_Q, flowing from P to Q
            let (ci, cj) = match scheme {
                FluxScheme::Central => (0.5 * fa + diff, 0.5 * fa - diff),
                FluxScheme::ExponentialFitting => {
                    let z = fa / diff;
                    (diff * bernoulli(-z), -diff * bernoulli(z))
                }
            };
            raw.push((p, p, -ci / h));
            raw.push((p, q, -cj / h));
            raw.push((q, p, ci / h));
            raw.push((q, q, cj / h));
        }
    }
    Ok(FdmOperator {
        grid: grid.clone(),
        epsilon: eps,
        matrix: SparseMatrix::from_unmerged(n, raw),
        scheme,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FdmSolution {
    pub grid: Grid,
    pub epsilon: f64,
    /// Trapezoid integral 1.
    pub density: Vec<f64>,
    /// `-eps log p`; `+inf` where the discrete density is not positive.
    pub potential: Vec<f64>,
    pub pinned_node: usize,
    pub mass: f64,
    /// Nodes where the discrete density came out non-positive.
    pub nonpositive_nodes: usize,
}

struct PinnedLu {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    matrix: SparseMatrix,
    rhs: Vec<f64>,
}

fn factor_pinned(op: &FdmOperator, k: usize) -> Result<PinnedLu> {
    let (matrix, rhs) = op.matrix.pinned(k);
    let lu = matrix
        .to_faer()?
        .sp_lu()
        .map_err(|e| Error::LinearAlgebra(format!("sparse LU: {e:?}")))?;
    Ok(PinnedLu { lu, matrix, rhs })
}

fn lu_solve(lu: &PinnedLu, b: &[f64], transpose: bool) -> Vec<f64> {
    let mut x = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
    if transpose {
        lu.lu.solve_transpose_in_place(&mut x);
    } else {
        lu.lu.solve_in_place(&mut x);
    }
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}

/// Hager's estimate of `||M^-1||_1` from solves with `M` and `M^T`.
fn inverse_norm_1(lu: &PinnedLu) -> f64 {
    let n = lu.rhs.len();
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0;
    for _ in 0..5 {
        let y = lu_solve(lu, &x, false);
        est = y.iter().map(|v| v.abs()).sum::<f64>();
        let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let z = lu_solve(lu, &xi, true);
        let (j, zmax) = z
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if zmax <= ztx {
            break;
        }
        x = vec![0.0; n];
        x[j] = 1.0;
    }
    est
}

fn solve_pinned(op: &FdmOperator, k: usize) -> Result<Vec<f64>> {
    let lu = factor_pinned(op, k)?;
    let y = lu_solve(&lu, &lu.rhs, false);
    if y.iter().any(|v| !v.is_finite()) {
        let condition = lu.matrix.norm_1() * inverse_norm_1(&lu);
        return Err(Error::SingularSystem { condition });
    }
    let mut p = Vec::with_capacity(op.grid.len());
    p.extend_from_slice(&y[..k]);
    p.push(1.0);
    p.extend_from_slice(&y[k..]);
    Ok(p)
}

/// Node with the largest density on a grid about four times coarser, pinned
/// at the domain center; falls back to the center itself.
fn choose_pin(system: &SystemSpec, grid: &Grid, scheme: FluxScheme) -> Result<usize> {
    let center: Vec<f64> = grid.lower.iter().zip(&grid.upper).map(|(a, b)| 0.5 * (a + b)).collect();
    let fallback = grid.nearest(&center);
    let coarse_n: Vec<usize> = grid.n.iter().map(|&n| ((n - 1) / 4 + 1).max(MIN_NODES)).collect();
    let coarse = Grid::new(&Domain::new(grid.lower.clone(), grid.upper.clone())?, &coarse_n)?;
    let cop = assemble_with(system, &coarse, scheme)?;
    match solve_pinned(&cop, coarse.nearest(&center)) {
        Ok(p) if p.iter().all(|v| v.is_finite()) => {
            let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
            Ok(grid.nearest(&coarse.point(best)))
        }
        _ => Ok(fallback),
    }
}

/// Steady state of `A p = 0` with trapezoid mass 1.
pub fn steady_state(system: &SystemSpec, op: &FdmOperator) -> Result<FdmSolution> {
    let pin = choose_pin(system, &op.grid, op.scheme)?;
    steady_state_pinned(op, pin)
}

pub fn steady_state_pinned(op: &FdmOperator, pin: usize) -> Result<FdmSolution> {
    let mut p = solve_pinned(op, pin)?;
    let w = op.grid.trapezoid_weights();
    let mass: f64 = p.iter().zip(&w).map(|(a, b)| a * b).sum();
    if !(mass > 0.0) {
        return Err(Error::LinearAlgebra(format!("steady state has non-positive mass {mass}")));
    }
    for v in p.iter_mut() {
        *v /= mass;
    }
    let eps = op.epsilon;
    let potential: Vec<f64> = p
        .iter()
        .map(|&v| if v > 0.0 { -eps * v.ln() } else { f64::INFINITY })
        .collect();
    let nonpositive_nodes = p.iter().filter(|v| **v <= 0.0).count();
    let mass_after = p.iter().zip(&w).map(|(a, b)| a * b).sum();
    Ok(FdmSolution {
        grid: op.grid.clone(),
        epsilon: eps,
        density: p,
        potential,
        pinned_node: pin,
        mass: mass_after,
        nonpositive_nodes,
    })
}

pub fn solve(system: &SystemSpec, grid: &Grid) -> Result<FdmSolution> {
    let op = assemble(system, grid)?;
    steady_state(system, &op)
}

/// Condition number of the pinned matrix: dense SVD in 1D, Hager's 1-norm
/// estimate in 2D.
pub fn condition_number_estimate(op: &FdmOperator, pin: usize) -> Result<f64> {
    let n = op.grid.len();
    if op.grid.dim() == 1 {
        if n > DENSE_LIMIT {
            return Err(Error::SizeLimit {
                what: "singular values",
                nodes: n,
                limit: DENSE_LIMIT,
            });
        }
        let (m, _) = op.matrix.pinned(pin);
        let s = m
            .to_dense()
            .singular_values()
            .map_err(|e| Error::LinearAlgebra(format!("svd: {e:?}")))?;
        let (max, min) = (s[0], *s.last().unwrap());
        return Ok(if min > 0.0 { (max / min).max(1.0) } else { f64::INFINITY });
    }
    let lu = factor_pinned(op, pin)?;
    Ok((lu.matrix.norm_1() * inverse_norm_1(&lu)).max(1.0))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub epsilon: f64,
    /// Eigenvalues of `-A` as `(re, im)`, sorted by real part.
    pub eigenvalues: Vec<(f64, f64)>,
    /// The eigenvalue of smallest magnitude.
    pub zero_mode: (f64, f64),
    /// The `k` nonzero eigenvalues of smallest magnitude, ascending.
    pub smallest: Vec<(f64, f64)>,
    pub norm_inf: f64,
}

impl SpectrumReport {
    pub fn lambda(&self, i: usize) -> f64 {
        self.smallest[i - 1].0
    }
}

/// Dense eigenvalues of `-A` (decay rates positive).
pub fn spectrum(op: &FdmOperator, k: usize) -> Result<SpectrumReport> {
    let n = op.grid.len();
    if n > DENSE_LIMIT {
        return Err(Error::SizeLimit {
            what: "eigensolve",
            nodes: n,
            limit: DENSE_LIMIT,
        });
    }
    let mut m = op.matrix.to_dense();
    for j in 0..n {
        for i in 0..n {
            m[(i, j)] = -m[(i, j)];
        }
    }
    let ev = m
        .eigenvalues()
        .map_err(|e| Error::LinearAlgebra(format!("eigenvalues: {e:?}")))?;
    let mut all: Vec<(f64, f64)> = ev.iter().map(|z| (z.re, z.im)).collect();
    let mag = |z: &(f64, f64)| z.0.hypot(z.1);
    let mut by_mag = all.clone();
    by_mag.sort_by(|a, b| mag(a).total_cmp(&mag(b)));
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(SpectrumReport {
        epsilon: op.epsilon,
        eigenvalues: all,
        zero_mode: by_mag[0],
        smallest: by_mag.iter().skip(1).take(k).copied().collect(),
        norm_inf: op.matrix.norm_inf(),
    })
}

/// Piecewise (bi)linear interpolation of grid values, clamped to the grid.
#[derive(Clone, Debug)]
pub struct GridInterpolator {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridInterpolator {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                what: "grid values",
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    fn locate(&self, axis: usize, x: f64) -> (usize, f64) {
        let g = &self.grid;
        let t = ((x - g.lower[axis]) / g.h[axis]).clamp(0.0, (g.n[axis] - 1) as f64);
        let i = (t.floor() as usize).min(g.n[axis] - 2);
        (i, t - i as f64)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let (i, s) = self.locate(0, x[0]);
        if self.grid.dim() == 1 {
            return (1.0 - s) * self.values[i] + s * self.values[i + 1];
        }
        let (j, t) = self.locate(1, x[1]);
        let ny = self.grid.n[1];
        let v = |a: usize, b: usize| self.values[a * ny + b];
        (1.0 - s) * ((1.0 - t) * v(i, j) + t * v(i, j + 1)) + s * ((1.0 - t) * v(i + 1, j) + t * v(i + 1, j + 1))
    }
}
