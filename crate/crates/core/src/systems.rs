//! Benchmark stochastic systems `dx = f(x) dt + sqrt(2 eps) sigma dW`.
//!
//! Every system has a constant diffusion matrix `D = sigma sigma^T`, so the
//! `div D` terms of the generalized-potential equation vanish.
//!
//! The one-dimensional double well uses `V(x) = x^4/4 - x^2/2`; that is the
//! sign that actually produces two wells at `x = +-1` with barrier `1/4`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Axis-aligned box `[lower_i, upper_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidArgument("domain bounds must have equal, positive length".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument("domain must satisfy lower < upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, a: f64, b: f64) -> Self {
        Self {
            lower: vec![a; dim],
            upper: vec![b; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// Constant antisymmetric matrix acting as a rotation on the first two
/// coordinates: `A[0][1] = 1`, `A[1][0] = -1`, zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct AntisymmetricRotation {
    pub dim: usize,
    pub matrix: Vec<f64>,
}

impl AntisymmetricRotation {
    pub fn plane(dim: usize) -> Self {
        assert!(dim >= 2);
        let mut matrix = vec![0.0; dim * dim];
        matrix[1] = 1.0;
        matrix[dim] = -1.0;
        Self { dim, matrix }
    }

    pub fn apply<S: Scalar>(&self, v: &[S], out: &mut [S]) {
        let d = self.dim;
        for i in 0..d {
            let mut acc = S::zero();
            for j in 0..d {
                let a = self.matrix[i * d + j];
                if a != 0.0 {
                    acc += S::c(a) * v[j];
                }
            }
            out[i] = acc;
        }
    }
}

/// Biochemical oscillator constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorParams {
    pub kappa: f64,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub tau0: f64,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        Self {
            kappa: 100.0,
            alpha: 0.1,
            a: 0.1,
            b: 0.1,
            c: 100.0,
            tau0: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Kind {
    DoubleWell,
    SineGradient,
    TwoMetastable,
    Oscillator(OscillatorParams),
    Synthetic(AntisymmetricRotation),
    /// `f(x) = B h(B^-1 x)` with five decoupled copies of the pair field.
    Coupled { b: Vec<f64>, b_inv: Vec<f64> },
    /// One `(v1, v2)` pair of the coupled system in its own coordinates.
    CoupledPair,
    /// `f(x) = M x`, row-major `M`. Test fixture, not addressable by id.
    Linear(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub id: String,
    pub dim: usize,
    pub epsilon: f64,
    /// Row-major `dim x dim`.
    pub diffusion: Vec<f64>,
    pub domain: Domain,
    pub kind: Kind,
}

pub const SYSTEM_IDS: &[&str] = &[
    "double-well-1d",
    "sine-3d",
    "two-metastable-2d",
    "biochem-2d",
    "synthetic-2d",
    "synthetic-3d",
    "synthetic-4d",
    "synthetic-8d",
    "coupled-10d",
    "coupled-pair-2d",
];

fn identity(dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = 1.0;
    }
    m
}

fn check_eps(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")))
    }
}

pub fn double_well_1d(epsilon: f64) -> Result<SystemSpec> {
    check_eps(epsilon)?;
    Ok(SystemSpec {
        id: "double-well-1d".into(),
        dim: 1,
        epsilon,
        diffusion: vec![1.0],
        domain: Domain::cube(1, -2.0, 2.0),
        kind: Kind::DoubleWell,
    })
}

pub fn sine_gradient_3d(epsilon: f64) -> Result<SystemSpec> {
    check_eps(epsilon)?;
    let h = std::f64::consts::FRAC_PI_2;
    Ok(SystemSpec {
        id: "sine-3d".into(),
        dim: 3,
        epsilon,
        diffusion: identity(3),
        domain: Domain::cube(3, -h, h),
        kind: Kind::SineGradient,
    })
}

/// Noise amplitudes `sqrt(eps/5)` and `sqrt(2 eps)` correspond to
/// `D = diag(1/10, 1)`.
pub fn two_metastable_2d(epsilon: f64) -> Result<SystemSpec> {
    check_eps(epsilon)?;
    Ok(SystemSpec {
        id: "two-metastable-2d".into(),
        dim: 2,
        epsilon,
        diffusion: vec![0.1, 0.0, 0.0, 1.0],
        domain: Domain::new(vec![-2.0, -3.0], vec![2.0, 3.0])?,
        kind: Kind::TwoMetastable,
    })
}

pub fn biochemical_oscillator(epsilon: f64) -> Result<SystemSpec> {
    check_eps(epsilon)?;
    Ok(SystemSpec {
        id: "biochem-2d".into(),
        dim: 2,
        epsilon,
        diffusion: identity(2),
        domain: Domain::new(vec![-0.8, -0.8], vec![12.0, 8.0])?,
        kind: Kind::Oscillator(OscillatorParams::default()),
    })
}

/// `f = -grad V + (1/eps) A grad V` with
/// `V = 3 (1 - x1^2)^2 + x1 + sum_{i>=2} x_i^2`.
pub fn synthetic_rotational(dim: usize, epsilon: f64) -> Result<SystemSpec> {
    check_eps(epsilon)?;
    if !matches!(dim, 2 | 3 | 4 | 8) {
        return Err(Error::UnsupportedDimension {
            what: "synthetic rotational system",
            dim,
        });
    }
    Ok(SystemSpec {
        id: format!("synthetic-{dim}d"),
        dim,
        epsilon,
        diffusion: identity(dim),
        domain: Domain::cube(dim, -2.0, 2.0),
        kind: Kind::Synthetic(AntisymmetricRotation::plane(dim)),
    })
}

/// Coupling matrix of the ten-dimensional system: 0.8 / 1.25 alternating on
/// the diagonal, -0.5 on the superdiagonal.
pub fn coupling_matrix() -> Vec<f64> {
    let n = 10;
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        b[i * n + i] = if i % 2 == 0 { 0.8 } else { 1.25 };
        if i + 1 < n {
            b[i * n + i + 1] = -0.5;
        }
    }
    b
}

/// Inverse of an upper-triangular matrix by back substitution.
fn upper_triangular_inverse(u: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        for i in (0..n).rev() {
            let mut acc = if i == col { 1.0 } else { 0.0 };
            for k in i + 1..n {
                acc -= u[i * n + k] * inv[k * n + col];
            }
            inv[i * n + col] = acc / u[i * n + i];
        }
    }
    inv
}

pub const COUPLED_Y_HALF_WIDTH: f64 = 2.5;

pub fn ten_dim_coupled(epsilon: f64) -> Result<SystemSpec> {
    check_eps(epsilon)?;
    let n = 10;
    let b = coupling_matrix();
    let b_inv = upper_triangular_inverse(&b, n);
    let mut diffusion = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            diffusion[i * n + j] = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum();
        }
    }
    // bounding box of B [-w, w]^10
    let half: Vec<f64> = (0..n)
        .map(|i| COUPLED_Y_HALF_WIDTH * (0..n).map(|k| b[i * n + k].abs()).sum::<f64>())
        .collect();
    let domain = Domain::new(half.iter().map(|h| -h).collect(), half)?;
    Ok(SystemSpec {
        id: "coupled-10d".into(),
        dim: n,
        epsilon,
        diffusion,
        domain,
        kind: Kind::Coupled { b, b_inv },
    })
}

pub fn coupled_pair_2d(epsilon: f64) -> Result<SystemSpec> {
    check_eps(epsilon)?;
    let w = COUPLED_Y_HALF_WIDTH;
    Ok(SystemSpec {
        id: "coupled-pair-2d".into(),
        dim: 2,
        epsilon,
        diffusion: identity(2),
        domain: Domain::cube(2, -w, w),
        kind: Kind::CoupledPair,
    })
}

/// Resolves a system by its configuration id.
/// Linear drift `f = M x` with arbitrary constant diffusion (may be zero).
pub fn linear(matrix: Vec<f64>, diffusion: Vec<f64>, domain: Domain, epsilon: f64) -> Result<SystemSpec> {
    check_eps(epsilon)?;
    let dim = domain.dim();
    for (what, m) in [("drift matrix", &matrix), ("diffusion", &diffusion)] {
        if m.len() != dim * dim {
            return Err(Error::DimensionMismatch { what, expected: dim * dim, got: m.len() });
        }
    }
    Ok(SystemSpec {
        id: "linear".into(),
        dim,
        epsilon,
        diffusion,
        domain,
        kind: Kind::Linear(matrix),
    })
}

/// Zero drift.
pub fn pure_diffusion(domain: Domain, diffusion: Vec<f64>, epsilon: f64) -> Result<SystemSpec> {
    let d = domain.dim();
    linear(vec![0.0; d * d], diffusion, domain, epsilon)
}

pub fn by_id(id: &str, epsilon: f64) -> Result<SystemSpec> {
    match id {
        "double-well-1d" => double_well_1d(epsilon),
        "sine-3d" => sine_gradient_3d(epsilon),
        "two-metastable-2d" => two_metastable_2d(epsilon),
        "biochem-2d" => biochemical_oscillator(epsilon),
        "synthetic-2d" => synthetic_rotational(2, epsilon),
        "synthetic-3d" => synthetic_rotational(3, epsilon),
        "synthetic-4d" => synthetic_rotational(4, epsilon),
        "synthetic-8d" => synthetic_rotational(8, epsilon),
        "coupled-10d" => ten_dim_coupled(epsilon),
        "coupled-pair-2d" => coupled_pair_2d(epsilon),
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

#[inline]
fn pair_field<S: Scalar>(y1: S, y2: S) -> (S, S) {
    let s = S::one() + y1.sin();
    (-y1 + y2 * s, -y2 - y1 * s)
}

#[inline]
fn pair_divergence<S: Scalar>(y1: S, y2: S) -> S {
    S::c(-2.0) + y2 * y1.cos()
}

/// Gradient of the synthetic potential.
fn synthetic_grad<S: Scalar>(x: &[S], out: &mut [S]) {
    let x1 = x[0];
    out[0] = S::c(12.0) * x1 * x1 * x1 - S::c(12.0) * x1 + S::one();
    for i in 1..x.len() {
        out[i] = S::c(2.0) * x[i];
    }
}

impl SystemSpec {
    /// Drift `f(x)`, written into `out`.
    pub fn drift<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            Kind::DoubleWell => out[0] = x[0] - x[0] * x[0] * x[0],
            Kind::SineGradient => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = S::c(4.0) * (S::c(4.0) * v).sin();
                }
            }
            Kind::TwoMetastable => {
                let (px, py) = (x[0], x[1]);
                let cubic = px * (S::one() - px * px);
                let s = S::one() + px.sin();
                out[0] = cubic / S::c(5.0) + py * s;
                out[1] = -py + S::c(2.0) * cubic * s;
            }
            Kind::Oscillator(p) => {
                let (px, py) = (x[0], x[1]);
                let x2 = px * px;
                let hill = (S::c(p.alpha * p.alpha) + x2) / (S::one() + x2);
                out[0] = S::c(p.kappa) * (hill / (S::one() + py) - S::c(p.a) * px);
                out[1] = S::c(p.kappa / p.tau0) * (S::c(p.b) - py / (S::one() + S::c(p.c) * x2));
            }
            Kind::Synthetic(rot) => {
                let mut g = [S::zero(); 8];
                let mut ag = [S::zero(); 8];
                let d = self.dim;
                synthetic_grad(x, &mut g[..d]);
                rot.apply(&g[..d], &mut ag[..d]);
                let inv_eps = S::c(1.0 / self.epsilon);
                for i in 0..d {
                    out[i] = -g[i] + inv_eps * ag[i];
                }
            }
            Kind::Coupled { b, b_inv } => {
                let n = self.dim;
                let mut y = [S::zero(); 10];
                let mut h = [S::zero(); 10];
                for i in 0..n {
                    let mut acc = S::zero();
                    for k in i..n {
                        acc += S::c(b_inv[i * n + k]) * x[k];
                    }
                    y[i] = acc;
                }
                for k in 0..n / 2 {
                    let (v1, v2) = pair_field(y[2 * k], y[2 * k + 1]);
                    h[2 * k] = v1;
                    h[2 * k + 1] = v2;
                }
                for i in 0..n {
                    let mut acc = S::zero();
                    for k in i..n {
                        acc += S::c(b[i * n + k]) * h[k];
                    }
                    out[i] = acc;
                }
            }
            Kind::CoupledPair => {
                let (v1, v2) = pair_field(x[0], x[1]);
                out[0] = v1;
                out[1] = v2;
            }
            Kind::Linear(m) => {
                let n = self.dim;
                for i in 0..n {
                    let mut acc = S::zero();
                    for k in 0..n {
                        acc += S::c(m[i * n + k]) * x[k];
                    }
                    out[i] = acc;
                }
            }
        }
    }

    /// Analytic `div f(x)`.
    pub fn drift_divergence<S: Scalar>(&self, x: &[S]) -> S {
        match &self.kind {
            Kind::DoubleWell => S::one() - S::c(3.0) * x[0] * x[0],
            Kind::SineGradient => x
                .iter()
                .fold(S::zero(), |acc, &v| acc + S::c(16.0) * (S::c(4.0) * v).cos()),
            Kind::TwoMetastable => {
                let (px, py) = (x[0], x[1]);
                (S::one() - S::c(3.0) * px * px) / S::c(5.0) + py * px.cos() - S::one()
            }
            Kind::Oscillator(p) => {
                let (px, py) = (x[0], x[1]);
                let x2 = px * px;
                let q = S::one() + x2;
                let dhill = S::c(2.0 * (1.0 - p.alpha * p.alpha)) * px / (q * q);
                S::c(p.kappa) * (dhill / (S::one() + py) - S::c(p.a))
                    - S::c(p.kappa / p.tau0) / (S::one() + S::c(p.c) * x2)
            }
            // tr(A H) = 0 for antisymmetric A and symmetric H
            Kind::Synthetic(_) => {
                let x1 = x[0];
                -(S::c(36.0) * x1 * x1 - S::c(12.0) + S::c(2.0 * (self.dim as f64 - 1.0)))
            }
            // tr(B J_h B^-1) = tr(J_h)
            Kind::Coupled { b_inv, .. } => {
                let n = self.dim;
                let mut acc = S::zero();
                for k in 0..n / 2 {
                    let row = |i: usize| {
                        let mut s = S::zero();
                        for j in i..n {
                            s += S::c(b_inv[i * n + j]) * x[j];
                        }
                        s
                    };
                    acc += pair_divergence(row(2 * k), row(2 * k + 1));
                }
                acc
            }
            Kind::CoupledPair => pair_divergence(x[0], x[1]),
            Kind::Linear(m) => S::c((0..self.dim).map(|i| m[i * self.dim + i]).sum()),
        }
    }

    pub fn has_exact_potential(&self) -> bool {
        matches!(self.kind, Kind::DoubleWell | Kind::SineGradient | Kind::Synthetic(_))
    }

    /// Exact generalized potential up to an additive constant.
    pub fn exact_potential<S: Scalar>(&self, x: &[S]) -> Option<S> {
        match &self.kind {
            Kind::DoubleWell => {
                let v = x[0] * x[0];
                Some(v * v / S::c(4.0) - v / S::c(2.0))
            }
            Kind::SineGradient => Some(x.iter().fold(S::zero(), |acc, &v| acc + (S::c(4.0) * v).cos())),
            Kind::Synthetic(_) => {
                let x1 = x[0];
                let w = S::one() - x1 * x1;
                let rest = x[1..].iter().fold(S::zero(), |acc, &v| acc + v * v);
                Some(S::c(3.0) * w * w + rest + x1)
            }
            _ => None,
        }
    }

    /// Gradient of the exact potential.
    pub fn exact_potential_grad<S: Scalar>(&self, x: &[S], out: &mut [S]) -> bool {
        match &self.kind {
            Kind::DoubleWell => out[0] = x[0] * x[0] * x[0] - x[0],
            Kind::SineGradient => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = S::c(-4.0) * (S::c(4.0) * v).sin();
                }
            }
            Kind::Synthetic(_) => synthetic_grad(x, out),
            _ => return false,
        }
        true
    }

    /// `tr(D grad^2 V)` of the exact potential (all such systems have `D = I`).
    pub fn exact_potential_weighted_laplacian<S: Scalar>(&self, x: &[S]) -> Option<S> {
        match &self.kind {
            Kind::DoubleWell => Some(S::c(3.0) * x[0] * x[0] - S::one()),
            Kind::SineGradient => Some(
                x.iter()
                    .fold(S::zero(), |acc, &v| acc - S::c(16.0) * (S::c(4.0) * v).cos()),
            ),
            Kind::Synthetic(_) => {
                let x1 = x[0];
                Some(S::c(36.0) * x1 * x1 - S::c(12.0) + S::c(2.0 * (self.dim as f64 - 1.0)))
            }
            _ => None,
        }
    }

    /// Maps `x` to the decoupled pair coordinates `y = B^-1 x`
    /// (identity for every other system).
    pub fn to_pair_coordinates(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Coupled { b_inv, .. } => {
                let n = self.dim;
                (0..n)
                    .map(|i| (i..n).map(|k| b_inv[i * n + k] * x[k]).sum())
                    .collect()
            }
            _ => x.to_vec(),
        }
    }

    pub fn diffusion_as<S: Scalar>(&self) -> Vec<S> {
        self.diffusion.iter().map(|&v| S::c(v)).collect()
    }

    pub fn diffusion_is_diagonal(&self) -> bool {
        let d = self.dim;
        (0..d).all(|i| (0..d).all(|j| i == j || self.diffusion[i * d + j] == 0.0))
    }

    /// Lower Cholesky factor of `D`, tolerating semi-definite matrices
    /// (zero pivots give zero columns).
    pub fn diffusion_cholesky(&self) -> Vec<f64> {
        cholesky_psd(&self.diffusion, self.dim)
    }
}

pub(crate) fn cholesky_psd(m: &[f64], n: usize) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = m[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        let ljj = if diag > 1e-14 * m[j * n + j].abs().max(1e-300) { diag.sqrt() } else { 0.0 };
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut acc = m[i * n + j];
            for k in 0..j {
                acc -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = if ljj > 0.0 { acc / ljj } else { 0.0 };
        }
    }
    l
}
