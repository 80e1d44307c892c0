//! Scalar-field network `V_theta : R^d -> R` with exact nested derivatives.
//!
//! [`FieldNetwork::eval_field`] returns the value, the input gradient and
//! the diffusion-weighted Hessian trace `tr(D grad^2 V)`.
//! [`FieldNetwork::loss_param_gradient`] differentiates any per-sample loss
//! built from those three quantities with respect to every parameter.

mod arch;
pub mod checkpoint;
mod gelu;
mod jet;
mod layout;

pub use arch::{Activation, Architecture, Init};
pub use checkpoint::Checkpoint;
pub use gelu::{gelu, gelu_derivs, GeluDerivs};
pub use layout::{init_params, LayerShape, ParamCoord, ParamLayout, ParamVector};

pub(crate) use jet::Weighting;
use jet::{JetShape, JetTape};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Samples are pushed through the network in chunks of this many points.
pub const CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct FieldEval<S> {
    pub value: S,
    pub grad_x: Vec<S>,
    pub weighted_hess_trace: S,
}

/// Borrowed view of one sample's field quantities.
#[derive(Clone, Copy, Debug)]
pub struct FieldView<'a, S> {
    pub value: S,
    pub grad_x: &'a [S],
    pub weighted_hess_trace: S,
}

/// Loss contribution of one sample and its adjoints.
#[derive(Clone, Copy, Debug, Default)]
pub struct PointAdjoint<S> {
    pub loss: S,
    pub d_value: S,
    pub d_trace: S,
}

/// A scalar loss of the form `sum_i loss_i(V(x_i), grad V(x_i), tr(D H(x_i)))`.
pub trait PointLoss<S: Scalar> {
    /// `index` is the position of `x` in the batch. The adjoint with respect
    /// to the input gradient is written into `d_grad` (zeroed on entry).
    fn point(
        &mut self,
        index: usize,
        x: &[S],
        field: FieldView<'_, S>,
        d_grad: &mut [S],
    ) -> PointAdjoint<S>;
}

impl<S: Scalar, F> PointLoss<S> for F
where
    F: FnMut(usize, &[S], FieldView<'_, S>, &mut [S]) -> PointAdjoint<S>,
{
    fn point(
        &mut self,
        index: usize,
        x: &[S],
        field: FieldView<'_, S>,
        d_grad: &mut [S],
    ) -> PointAdjoint<S> {
        self(index, x, field, d_grad)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldNetwork<S> {
    arch: Architecture,
    layout: ParamLayout,
    params: ParamVector<S>,
}

impl<S: Scalar> FieldNetwork<S> {
    pub fn new(arch: Architecture, params: ParamVector<S>) -> Result<Self> {
        arch.validate()?;
        let layout = ParamLayout::new(&arch);
        if params.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: layout.len(),
                got: params.len(),
            });
        }
        Ok(Self {
            arch,
            layout,
            params,
        })
    }

    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let params = init_params(&arch, seed);
        Self::new(arch, params)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &ParamVector<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector<S> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamVector<S> {
        self.params
    }

    pub fn dim(&self) -> usize {
        self.arch.input_dim
    }

    fn check_points(&self, points: &[S]) -> Result<usize> {
        let d = self.dim();
        if points.len() % d != 0 {
            return Err(Error::DimensionMismatch {
                what: "flattened points",
                expected: d,
                got: points.len() % d,
            });
        }
        Ok(points.len() / d)
    }

    fn check_diffusion(&self, diffusion: &[S]) -> Result<()> {
        let d = self.dim();
        if diffusion.len() != d * d {
            return Err(Error::DimensionMismatch {
                what: "diffusion matrix entries",
                expected: d * d,
                got: diffusion.len(),
            });
        }
        Ok(())
    }

    /// Field values at a row-major `n x d` block of points.
    pub fn values(&self, points: &[S]) -> Result<Vec<S>> {
        let n = self.check_points(points)?;
        let d = self.dim();
        let mut out = Vec::with_capacity(n);
        for chunk in points.chunks(CHUNK * d) {
            let shape = JetShape::value_only(chunk.len() / d, d);
            let tape = JetTape::forward(&self.layout, &self.params, chunk, shape, None);
            out.extend_from_slice(&tape.out);
        }
        Ok(out)
    }

    pub fn value(&self, x: &[S]) -> Result<S> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "point",
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.values(x)?[0])
    }

    /// `V(x)`, `grad V(x)` and `tr(D grad^2 V(x))` for a constant `d x d`
    /// matrix `D` (row-major).
    pub fn eval_field(&self, x: &[S], diffusion: &[S]) -> Result<FieldEval<S>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "point",
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.eval_batch(x, diffusion)?.pop().unwrap())
    }

    pub fn eval_batch(&self, points: &[S], diffusion: &[S]) -> Result<Vec<FieldEval<S>>> {
        let n = self.check_points(points)?;
        self.check_diffusion(diffusion)?;
        let d = self.dim();
        let weighting = Weighting::new(diffusion, d);
        let mut out = Vec::with_capacity(n);
        for chunk in points.chunks(CHUNK * d) {
            let shape = JetShape::second_order(chunk.len() / d, d);
            let tape = JetTape::forward(&self.layout, &self.params, chunk, shape, Some(&weighting));
            for p in 0..shape.n {
                out.push(FieldEval {
                    value: tape.value(p),
                    grad_x: tape.grad(p).to_vec(),
                    weighted_hess_trace: tape.trace(p),
                });
            }
        }
        Ok(out)
    }

    /// Total loss over `points` and its exact gradient with respect to the
    /// parameters. Chunks are reduced in a fixed order.
    pub fn loss_param_gradient<L: PointLoss<S>>(
        &self,
        points: &[S],
        diffusion: &[S],
        loss: &mut L,
    ) -> Result<(S, Vec<S>)> {
        let mut grad = vec![S::zero(); self.layout.len()];
        let total = self.accumulate_loss_gradient(points, 0, diffusion, loss, &mut grad)?;
        Ok((total, grad))
    }

    /// Like [`loss_param_gradient`](Self::loss_param_gradient) but adds into
    /// an existing gradient buffer; `offset` is the batch index of the first
    /// point, forwarded to the loss.
    pub fn accumulate_loss_gradient<L: PointLoss<S>>(
        &self,
        points: &[S],
        offset: usize,
        diffusion: &[S],
        loss: &mut L,
        grad: &mut [S],
    ) -> Result<S> {
        self.check_points(points)?;
        self.check_diffusion(diffusion)?;
        if grad.len() != self.layout.len() {
            return Err(Error::DimensionMismatch {
                what: "gradient buffer",
                expected: self.layout.len(),
                got: grad.len(),
            });
        }
        let d = self.dim();
        let weighting = Weighting::new(diffusion, d);
        let mut total = S::zero();
        let mut d_grad = vec![S::zero(); d];
        for (c, chunk) in points.chunks(CHUNK * d).enumerate() {
            let shape = JetShape::second_order(chunk.len() / d, d);
            let tape = JetTape::forward(&self.layout, &self.params, chunk, shape, Some(&weighting));
            let mut seed = vec![S::zero(); shape.cols()];
            for p in 0..shape.n {
                d_grad.iter_mut().for_each(|v| *v = S::zero());
                let view = FieldView {
                    value: tape.value(p),
                    grad_x: tape.grad(p),
                    weighted_hess_trace: tape.trace(p),
                };
                let adj = loss.point(
                    offset + c * CHUNK + p,
                    &chunk[p * d..(p + 1) * d],
                    view,
                    &mut d_grad,
                );
                total += adj.loss;
                let base = p * shape.streams;
                seed[base] = adj.d_value;
                seed[base + 1..base + 1 + d].copy_from_slice(&d_grad);
                seed[base + 1 + d] = adj.d_trace;
            }
            tape.backward(&self.layout, &self.params, &weighting, seed, grad);
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(d: usize, widths: Vec<usize>, seed: u64) -> FieldNetwork<f64> {
        let arch = Architecture::new(d, widths).unwrap();
        let mut n = FieldNetwork::init(arch, seed).unwrap();
        // Non-zero biases exercise the bias paths.
        let layout = n.layout().clone();
        for (k, l) in layout.layers().iter().enumerate() {
            for j in 0..l.fan_out {
                n.params_mut()[l.bias_offset + j] = 0.1 * ((j + 3 * k) as f64).sin();
            }
        }
        n
    }

    #[test]
    fn zero_output_layer_gives_zero_field() {
        let mut n = net(2, vec![5, 5], 3);
        let last = *n.layout().layers().last().unwrap();
        for v in &mut n.params_mut()[last.weight_offset..last.end()] {
            *v = 0.0;
        }
        let e = n.eval_field(&[0.3, -0.7], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.grad_x.iter().all(|&g| g == 0.0));
        assert_eq!(e.weighted_hess_trace, 0.0);
    }

    #[test]
    fn dimension_errors() {
        let n = net(2, vec![4], 0);
        assert!(n.eval_field(&[0.1], &[1.0, 0.0, 0.0, 1.0]).is_err());
        assert!(n.eval_field(&[0.1, 0.2], &[1.0]).is_err());
        assert!(n.values(&[0.1, 0.2, 0.3]).is_err());
        assert!(FieldNetwork::new(Architecture::new(2, vec![4]).unwrap(), ParamVector(vec![0.0; 3])).is_err());
    }

    #[test]
    fn values_agree_with_second_order_pass() {
        let n = net(3, vec![7, 6], 11);
        let pts: Vec<f64> = (0..3 * 300).map(|i| ((i * 7919) % 997) as f64 / 997.0 - 0.5).collect();
        let vals = n.values(&pts).unwrap();
        let evals = n.eval_batch(&pts, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        for (v, e) in vals.iter().zip(&evals) {
            assert!((v - e.value).abs() <= 1e-14 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn value_loss_gradient_matches_plain_backprop() {
        // loss = V(x0): compare against a scalar reverse pass written by hand
        // for a one-hidden-layer network.
        let n = net(2, vec![3], 5);
        let x0 = [0.4, -0.2];
        let mut loss = |_: usize, _: &[f64], f: FieldView<'_, f64>, _: &mut [f64]| PointAdjoint {
            loss: f.value,
            d_value: 1.0,
            d_trace: 0.0,
        };
        let (l, g) = n.loss_param_gradient(&x0, &[1.0, 0.0, 0.0, 1.0], &mut loss).unwrap();
        let p = n.params();
        let layout = n.layout();
        let (l0, l1) = (layout.layers()[0], layout.layers()[1]);
        let mut want = vec![0.0; p.len()];
        let mut v = p[l1.bias_offset];
        for j in 0..3 {
            let a = p[l0.weight_offset + 2 * j] * x0[0] + p[l0.weight_offset + 2 * j + 1] * x0[1] + p[l0.bias_offset + j];
            let gd = gelu_derivs(a);
            let w = p[l1.weight_offset + j];
            v += w * gd.value;
            want[l1.weight_offset + j] = gd.value;
            want[l0.weight_offset + 2 * j] = w * gd.d1 * x0[0];
            want[l0.weight_offset + 2 * j + 1] = w * gd.d1 * x0[1];
            want[l0.bias_offset + j] = w * gd.d1;
        }
        want[l1.bias_offset] = 1.0;
        assert!((l - v).abs() < 1e-14);
        for (a, b) in g.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn f32_network_tracks_f64() {
        let n64 = net(2, vec![6, 6], 9);
        let n32 = FieldNetwork::<f32>::new(n64.arch().clone(), ParamVector(n64.params().iter().map(|&v| v as f32).collect())).unwrap();
        let e64 = n64.eval_field(&[0.3, 0.1], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let e32 = n32.eval_field(&[0.3, 0.1], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((e64.value - e32.value as f64).abs() < 1e-5);
        assert!((e64.weighted_hess_trace - e32.weighted_hess_trace as f64).abs() < 1e-4);
    }
}
