//! Collocation points: Latin hypercube batches and persistent Euler-Maruyama
//! walkers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::{Domain, Kind, SystemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleSource {
    #[serde(rename = "LHS")]
    Lhs,
    #[serde(rename = "SDE")]
    Sde,
}

/// `n x dim` points, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub points: Vec<f64>,
    pub dim: usize,
    pub epoch: usize,
    pub source: SampleSource,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn lhs_sample(domain: &Domain, n: usize, seed: u64) -> Result<SampleBatch> {
    lhs_sample_with(domain, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// One point per stratum and dimension, strata permuted independently.
pub fn lhs_sample_with<R: Rng>(domain: &Domain, n: usize, rng: &mut R) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let d = domain.dim();
    let mut points = vec![0.0; n * d];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        perm.shuffle(rng);
        let (a, b) = (domain.lower[j], domain.upper[j]);
        let width = (b - a) / n as f64;
        for (i, &s) in perm.iter().enumerate() {
            let u: f64 = rng.gen();
            points[i * d + j] = (a + (s as f64 + u) * width).min(b);
        }
    }
    Ok(SampleBatch {
        points,
        dim: d,
        epoch: 0,
        source: SampleSource::Lhs,
    })
}

/// Default Euler-Maruyama step; the oscillator's kappa = 100 makes it stiff.
pub fn default_dt(system: &SystemSpec) -> f64 {
    match system.kind {
        Kind::Oscillator(_) => 1e-4,
        _ => 1e-3,
    }
}

/// Walkers with one RNG stream each, so trajectories do not depend on how
/// walkers are scheduled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkerState {
    pub positions: Vec<f64>,
    pub dim: usize,
    pub rngs: Vec<ChaCha8Rng>,
    pub dt: f64,
    pub steps_taken: u64,
}

impl WalkerState {
    pub fn new(positions: Vec<f64>, dim: usize, dt: f64, seed: u64) -> Result<Self> {
        if dim == 0 || positions.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                what: "walker positions",
                expected: dim,
                got: positions.len(),
            });
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let n = positions.len() / dim;
        let rngs = (0..n)
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(i as u64);
                r
            })
            .collect();
        Ok(Self {
            positions,
            dim,
            rngs,
            dt,
            steps_taken: 0,
        })
    }

    /// Walkers started from a Latin hypercube over the system domain.
    pub fn from_lhs(system: &SystemSpec, n: usize, dt: f64, seed: u64) -> Result<Self> {
        let start = lhs_sample(&system.domain, n, seed)?;
        Self::new(start.points, system.dim, dt, seed ^ 0x6a09_e667_f3bc_c908)
    }

    pub fn len(&self) -> usize {
        self.rngs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rngs.is_empty()
    }
}

/// Reflects `v` into `[a, b]`; far excursions that bounce out again are clamped.
fn reflect(mut v: f64, a: f64, b: f64) -> f64 {
    for _ in 0..4 {
        if v < a {
            v = 2.0 * a - v;
        } else if v > b {
            v = 2.0 * b - v;
        } else {
            return v;
        }
    }
    v.clamp(a, b)
}

/// `x <- x + f(x) dt + sqrt(2 eps dt) L z` with `L L^T = D`, then reflection
/// at the domain faces.
pub fn euler_maruyama_step(system: &SystemSpec, walkers: &mut WalkerState) -> Result<()> {
    let d = system.dim;
    if walkers.dim != d {
        return Err(Error::DimensionMismatch {
            what: "walker dimension",
            expected: d,
            got: walkers.dim,
        });
    }
    let chol = system.diffusion_cholesky();
    let scale = (2.0 * system.epsilon * walkers.dt).sqrt();
    let dt = walkers.dt;
    let mut f = vec![0.0; d];
    let mut z = vec![0.0; d];
    let (lo, hi) = (&system.domain.lower, &system.domain.upper);
    for (w, (x, rng)) in walkers
        .positions
        .chunks_exact_mut(d)
        .zip(walkers.rngs.iter_mut())
        .enumerate()
    {
        system.drift(x, &mut f);
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut noise = 0.0;
            for k in 0..=i {
                noise += chol[i * d + k] * z[k];
            }
            x[i] += f[i] * dt + scale * noise;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteWalker {
                walker: w,
                steps: walkers.steps_taken + 1,
            });
        }
        for i in 0..d {
            x[i] = reflect(x[i], lo[i], hi[i]);
        }
    }
    walkers.steps_taken += 1;
    Ok(())
}

/// Advances the walkers `k_steps` and returns their positions as a batch.
pub fn sde_batch(system: &SystemSpec, walkers: &mut WalkerState, k_steps: usize, epoch: usize) -> Result<SampleBatch> {
    for _ in 0..k_steps {
        euler_maruyama_step(system, walkers)?;
    }
    Ok(SampleBatch {
        points: walkers.positions.clone(),
        dim: walkers.dim,
        epoch,
        source: SampleSource::Sde,
    })
}
