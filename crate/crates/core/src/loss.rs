//! Generalized-potential residual and the annealed input-gradient loss.
//!
//! With constant `D`, `l(x) = f(x) + D grad V(x)` and
//! `div l = div f + tr(D grad^2 V)`; the residual is
//! `r = grad V . l - eps div l`. Over a batch of `N` points in `d`
//! dimensions the training loss is
//!
//! ```text
//! L = (1/N) sum r_i^2  -  (beta/d) (1/N) sum |grad V(x_i)|^2
//! ```
//!
//! and `beta` is multiplied by `1 - beta_decay` after every optimizer step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{FieldNetwork, FieldView, PointAdjoint, PointLoss, CHUNK};
use crate::scalar::Scalar;
use crate::systems::SystemSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualTerms<S> {
    pub l_vec: Vec<S>,
    pub div_l: S,
    pub residual: S,
}

/// Residual terms from a field's value, gradient and weighted trace.
pub fn residual_from_field<S: Scalar>(
    system: &SystemSpec,
    x: &[S],
    grad_v: &[S],
    weighted_trace: S,
) -> ResidualTerms<S> {
    let d = system.dim;
    let mut l_vec = vec![S::zero(); d];
    system.drift(x, &mut l_vec);
    for (i, li) in l_vec.iter_mut().enumerate() {
        for j in 0..d {
            let dij = system.diffusion[i * d + j];
            if dij != 0.0 {
                *li += S::c(dij) * grad_v[j];
            }
        }
    }
    let div_l = system.drift_divergence(x) + weighted_trace;
    let dot = grad_v.iter().zip(&l_vec).fold(S::zero(), |a, (g, l)| a + *g * *l);
    let residual = dot - S::c(system.epsilon) * div_l;
    ResidualTerms {
        l_vec,
        div_l,
        residual,
    }
}

pub fn residual_at<S: Scalar>(
    system: &SystemSpec,
    net: &FieldNetwork<S>,
    x: &[S],
) -> Result<ResidualTerms<S>> {
    if net.dim() != system.dim {
        return Err(Error::DimensionMismatch {
            what: "network input vs system dimension",
            expected: system.dim,
            got: net.dim(),
        });
    }
    let eval = net.eval_field(x, &system.diffusion_as::<S>())?;
    Ok(residual_from_field(system, x, &eval.grad_x, eval.weighted_hess_trace))
}

/// Residual of the exact potential, when the system has one.
pub fn exact_residual<S: Scalar>(system: &SystemSpec, x: &[S]) -> Option<S> {
    let mut g = vec![S::zero(); system.dim];
    if !system.exact_potential_grad(x, &mut g) {
        return None;
    }
    let lap = system.exact_potential_weighted_laplacian(x)?;
    Some(residual_from_field(system, x, &g, lap).residual)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms<S> {
    pub loss: S,
    pub pde_term: S,
    pub penalty_term: S,
}

/// Per-sample loss used by the parameter-gradient pass.
struct IgannPointLoss<'a, S> {
    system: &'a SystemSpec,
    eps: S,
    /// `1/N`
    inv_n: S,
    /// `beta / (d N)`
    pen_scale: S,
    diffusion: Vec<S>,
    drift: Vec<S>,
    dg: Vec<S>,
    pde_sum: S,
    pen_sum: S,
}

impl<'a, S: Scalar> IgannPointLoss<'a, S> {
    fn new(system: &'a SystemSpec, n_total: usize, beta: S) -> Self {
        let d = system.dim;
        let n = S::c(n_total as f64);
        Self {
            system,
            eps: S::c(system.epsilon),
            inv_n: S::one() / n,
            pen_scale: beta / (S::c(d as f64) * n),
            diffusion: system.diffusion_as(),
            drift: vec![S::zero(); d],
            dg: vec![S::zero(); d],
            pde_sum: S::zero(),
            pen_sum: S::zero(),
        }
    }
}

impl<S: Scalar> PointLoss<S> for IgannPointLoss<'_, S> {
    fn point(&mut self, _index: usize, x: &[S], field: FieldView<'_, S>, d_grad: &mut [S]) -> PointAdjoint<S> {
        let d = self.system.dim;
        let g = field.grad_x;
        self.system.drift(x, &mut self.drift);
        // D g
        for i in 0..d {
            let mut acc = S::zero();
            for j in 0..d {
                acc += self.diffusion[i * d + j] * g[j];
            }
            self.dg[i] = acc;
        }
        let mut dot = S::zero();
        let mut gsq = S::zero();
        for i in 0..d {
            dot += g[i] * (self.drift[i] + self.dg[i]);
            gsq += g[i] * g[i];
        }
        let div_l = self.system.drift_divergence(x) + field.weighted_hess_trace;
        let r = dot - self.eps * div_l;

        let pde = r * r * self.inv_n;
        let pen = gsq * self.pen_scale;
        self.pde_sum += pde;
        self.pen_sum += pen;

        // d(r^2/N)/dg = (2r/N)(f + 2 D g) for symmetric D
        let two = S::c(2.0);
        let rs = two * r * self.inv_n;
        for i in 0..d {
            d_grad[i] = rs * (self.drift[i] + two * self.dg[i]) - two * self.pen_scale * g[i];
        }
        PointAdjoint {
            loss: pde - pen,
            d_value: S::zero(),
            d_trace: -rs * self.eps,
        }
    }
}

fn check_batch<S: Scalar>(system: &SystemSpec, net: &FieldNetwork<S>, points: &[S]) -> Result<usize> {
    if net.dim() != system.dim {
        return Err(Error::DimensionMismatch {
            what: "network input vs system dimension",
            expected: system.dim,
            got: net.dim(),
        });
    }
    if points.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if points.len() % system.dim != 0 {
        return Err(Error::DimensionMismatch {
            what: "flattened batch",
            expected: system.dim,
            got: points.len() % system.dim,
        });
    }
    Ok(points.len() / system.dim)
}

/// Loss terms without gradients.
pub fn igann_loss<S: Scalar>(
    system: &SystemSpec,
    net: &FieldNetwork<S>,
    points: &[S],
    beta: S,
) -> Result<LossTerms<S>> {
    let n = check_batch(system, net, points)?;
    let evals = net.eval_batch(points, &system.diffusion_as::<S>())?;
    let d = system.dim;
    let mut pde = S::zero();
    let mut gsq = S::zero();
    for (p, e) in evals.iter().enumerate() {
        let r = residual_from_field(system, &points[p * d..(p + 1) * d], &e.grad_x, e.weighted_hess_trace).residual;
        pde += r * r;
        gsq += e.grad_x.iter().fold(S::zero(), |a, &g| a + g * g);
    }
    let nn = S::c(n as f64);
    let pde_term = pde / nn;
    let penalty_term = beta / S::c(d as f64) * gsq / nn;
    Ok(LossTerms {
        loss: pde_term - penalty_term,
        pde_term,
        penalty_term,
    })
}

/// Loss terms and the exact parameter gradient of `loss`.
///
/// The batch is split into fixed shards of [`CHUNK`] points whose partial
/// sums are added in shard order, so the result does not depend on
/// `workers`.
pub fn igann_loss_and_grad<S: Scalar>(
    system: &SystemSpec,
    net: &FieldNetwork<S>,
    points: &[S],
    beta: S,
    workers: usize,
) -> Result<(LossTerms<S>, Vec<S>)> {
    let n = check_batch(system, net, points)?;
    let d = system.dim;
    let diffusion = system.diffusion_as::<S>();
    let shards: Vec<&[S]> = points.chunks(CHUNK * d).collect();
    let run_shard = |k: usize| -> Result<(S, S, Vec<S>)> {
        let mut loss = IgannPointLoss::new(system, n, beta);
        let mut grad = vec![S::zero(); net.layout().len()];
        net.accumulate_loss_gradient(shards[k], k * CHUNK, &diffusion, &mut loss, &mut grad)?;
        Ok((loss.pde_sum, loss.pen_sum, grad))
    };

    let workers = workers.max(1).min(shards.len());
    let partials: Vec<Result<(S, S, Vec<S>)>> = if workers == 1 {
        (0..shards.len()).map(run_shard).collect()
    } else {
        let mut slots: Vec<Option<Result<(S, S, Vec<S>)>>> = (0..shards.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let run = &run_shard;
            let count = shards.len();
            let mut handles = Vec::with_capacity(workers);
            for w in 0..workers {
                handles.push(scope.spawn(move || {
                    (w..count)
                        .step_by(workers)
                        .map(|k| (k, run(k)))
                        .collect::<Vec<_>>()
                }));
            }
            for h in handles {
                for (k, r) in h.join().expect("gradient worker panicked") {
                    slots[k] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("missing shard")).collect()
    };

    let mut pde = S::zero();
    let mut pen = S::zero();
    let mut grad = vec![S::zero(); net.layout().len()];
    for part in partials {
        let (a, b, g) = part?;
        pde += a;
        pen += b;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += *v;
        }
    }
    Ok((
        LossTerms {
            loss: pde - pen,
            pde_term: pde,
            penalty_term: pen,
        },
        grad,
    ))
}

/// Annealing schedule `beta_k = beta0 (1 - beta_decay)^k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub beta0: f64,
    pub beta_decay: f64,
    pub steps: u64,
    pub current: f64,
}

impl AnnealSchedule {
    pub fn new(beta0: f64, beta_decay: f64) -> Result<Self> {
        if !(beta0 >= 0.0) || !(0.0..1.0).contains(&beta_decay) {
            return Err(Error::InvalidArgument(format!(
                "need beta0 >= 0 and 0 <= beta_decay < 1, got {beta0}, {beta_decay}"
            )));
        }
        Ok(Self {
            beta0,
            beta_decay,
            steps: 0,
            current: beta0,
        })
    }

    pub fn at(beta0: f64, beta_decay: f64, steps: u64) -> f64 {
        let k = i32::try_from(steps).unwrap_or(i32::MAX);
        beta0 * (1.0 - beta_decay).powi(k)
    }

    pub fn step(self) -> Self {
        let steps = self.steps + 1;
        Self {
            steps,
            current: Self::at(self.beta0, self.beta_decay, steps),
            ..self
        }
    }
}

pub fn step_beta(sched: AnnealSchedule) -> AnnealSchedule {
    sched.step()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Architecture, ParamVector};
    use crate::systems;

    fn constant_net(d: usize, c: f64) -> FieldNetwork<f64> {
        let arch = Architecture::new(d, vec![4]).unwrap();
        let mut p = ParamVector::zeros(arch.param_count());
        let last = p.len() - 1;
        p[last] = c;
        FieldNetwork::new(arch, p).unwrap()
    }

    #[test]
    fn exact_double_well_residual_vanishes() {
        let s = systems::double_well_1d(0.02).unwrap();
        for x in [-1.7, -0.3, 0.0, 0.8, 1.9] {
            assert!(exact_residual::<f64>(&s, &[x]).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_field_residual() {
        let s = systems::double_well_1d(0.02).unwrap();
        let net = constant_net(1, 3.5);
        for x in [0.0, 0.4, -1.2] {
            let r = residual_at(&s, &net, &[x]).unwrap();
            assert!((r.l_vec[0] - (x - x * x * x)).abs() < 1e-15);
            assert!((r.residual + 0.02 * (1.0 - 3.0 * x * x)).abs() < 1e-15);
        }
        let r0 = residual_at(&s, &net, &[0.0]).unwrap();
        assert!((r0.residual + 0.02).abs() < 1e-15);
    }

    #[test]
    fn synthetic_exact_residual() {
        let s = systems::synthetic_rotational(2, 0.04).unwrap();
        assert!(exact_residual::<f64>(&s, &[0.5, -0.3]).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn zero_network_loss_and_baseline() {
        let s = systems::double_well_1d(0.02).unwrap();
        let net = constant_net(1, 0.0);
        let pts = [-1.5, -0.2, 0.3, 1.1];
        let t = igann_loss(&s, &net, &pts, 0.0).unwrap();
        let want: f64 = pts.iter().map(|x| (0.02 * (1.0 - 3.0 * x * x)).powi(2)).sum::<f64>() / 4.0;
        assert!((t.loss - want).abs() < 1e-16);
        assert_eq!(t.penalty_term, 0.0);
        assert_eq!(t.loss, t.pde_term);
    }

    #[test]
    fn identical_points_match_single_point() {
        let s = systems::two_metastable_2d(0.1).unwrap();
        let net = FieldNetwork::<f64>::init(Architecture::new(2, vec![6, 6]).unwrap(), 1).unwrap();
        let one = igann_loss(&s, &net, &[0.3, -0.4], 2.0).unwrap();
        let many: Vec<f64> = [0.3, -0.4].repeat(7);
        let seven = igann_loss(&s, &net, &many, 2.0).unwrap();
        assert!((one.loss - seven.loss).abs() <= 1e-14 * one.loss.abs().max(1.0));
        assert!(matches!(igann_loss(&s, &net, &[], 1.0), Err(Error::EmptyBatch)));
    }

    #[test]
    fn gradient_pass_reports_same_terms() {
        let s = systems::sine_gradient_3d(0.07).unwrap();
        let net = FieldNetwork::<f64>::init(Architecture::new(3, vec![5, 5]).unwrap(), 4).unwrap();
        let pts: Vec<f64> = (0..3 * 600).map(|i| ((i * 37) % 101) as f64 / 101.0 - 0.5).collect();
        let a = igann_loss(&s, &net, &pts, 7.0).unwrap();
        let (b, _) = igann_loss_and_grad(&s, &net, &pts, 7.0, 1).unwrap();
        assert!((a.pde_term - b.pde_term).abs() <= 1e-12 * a.pde_term.abs());
        assert!((a.penalty_term - b.penalty_term).abs() <= 1e-12 * a.penalty_term.abs());
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let s = systems::two_metastable_2d(0.1).unwrap();
        let net = FieldNetwork::<f64>::init(Architecture::new(2, vec![8, 8]).unwrap(), 2).unwrap();
        let pts: Vec<f64> = (0..2 * 1000).map(|i| ((i * 53) % 211) as f64 / 211.0 - 0.5).collect();
        let (a, ga) = igann_loss_and_grad(&s, &net, &pts, 5.0, 1).unwrap();
        let (b, gb) = igann_loss_and_grad(&s, &net, &pts, 5.0, 3).unwrap();
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert!(ga.iter().zip(&gb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn beta_schedule() {
        let s = AnnealSchedule::new(100.0, 3e-4).unwrap();
        assert!((step_beta(s).current - 99.97).abs() < 1e-12);
        let z = AnnealSchedule::new(5.0, 0.0).unwrap();
        assert_eq!(step_beta(z).current, 5.0);
        let mut k = AnnealSchedule::new(150.0, 2e-4).unwrap();
        for _ in 0..10_000 {
            k = k.step();
        }
        let want = 150.0 * 0.9998f64.powi(10_000);
        assert!((k.current - want).abs() < 1e-9);
        assert!((k.current - 20.30).abs() < 5e-3, "{}", k.current);
        assert!(AnnealSchedule::new(-1.0, 0.1).is_err());
        assert!(AnnealSchedule::new(1.0, 1.0).is_err());
    }
}
