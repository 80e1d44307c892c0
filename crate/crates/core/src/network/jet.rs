//! Batched second-order forward propagation and its reverse pass.
//!
//! Every sample travels through the network as a jet of `d + 2` columns:
//! the value, the `d` partial derivatives with respect to the inputs, and
//! the diffusion-weighted Laplacian `tr(D H)` of the current activation.
//! For `h = gelu(a)` the trace obeys
//!
//! ```text
//! tr(D grad^2 h) = gelu''(a) * (grad a)^T D (grad a) + gelu'(a) * tr(D grad^2 a)
//! ```
//!
//! and affine layers act linearly on every column, so each layer is a
//! single matrix product over all jets followed by an element-wise update.
//! The reverse pass differentiates that computation exactly, which needs
//! the third derivative of the activation.

use super::gelu::gelu_derivs;
use super::layout::ParamLayout;
use crate::scalar::Scalar;

/// Column layout of one chunk of jets.
#[derive(Clone, Copy, Debug)]
pub(crate) struct JetShape {
    pub n: usize,
    pub dim: usize,
    pub streams: usize,
}

impl JetShape {
    pub fn value_only(n: usize, dim: usize) -> Self {
        Self { n, dim, streams: 1 }
    }

    pub fn second_order(n: usize, dim: usize) -> Self {
        Self {
            n,
            dim,
            streams: dim + 2,
        }
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.n * self.streams
    }

    #[inline]
    fn has_derivs(&self) -> bool {
        self.streams > 1
    }
}

/// Diffusion matrix in the form the jet update wants.
#[derive(Clone, Debug)]
pub(crate) enum Weighting<S> {
    Diagonal(Vec<S>),
    Full(Vec<S>),
}

impl<S: Scalar> Weighting<S> {
    pub fn new(d: &[S], dim: usize) -> Self {
        assert_eq!(d.len(), dim * dim);
        let diagonal = (0..dim).all(|i| (0..dim).all(|j| i == j || d[i * dim + j] == S::zero()));
        if diagonal {
            Weighting::Diagonal((0..dim).map(|i| d[i * dim + i]).collect())
        } else {
            Weighting::Full(d.to_vec())
        }
    }

    /// `t^T D t`, and `D t` written to `out` when requested.
    #[inline]
    fn quad(&self, t: &[S], out: Option<&mut [S]>) -> S {
        match self {
            Weighting::Diagonal(diag) => {
                let mut q = S::zero();
                for (ti, di) in t.iter().zip(diag) {
                    q += *di * *ti * *ti;
                }
                if let Some(out) = out {
                    for ((o, ti), di) in out.iter_mut().zip(t).zip(diag) {
                        *o = *di * *ti;
                    }
                }
                q
            }
            Weighting::Full(m) => {
                let dim = t.len();
                let mut q = S::zero();
                let mut tmp = [S::zero(); 16];
                let mut heap;
                let dt: &mut [S] = if dim <= 16 {
                    &mut tmp[..dim]
                } else {
                    heap = vec![S::zero(); dim];
                    &mut heap
                };
                for i in 0..dim {
                    let mut acc = S::zero();
                    for k in 0..dim {
                        acc += m[i * dim + k] * t[k];
                    }
                    dt[i] = acc;
                    q += t[i] * acc;
                }
                if let Some(out) = out {
                    out.copy_from_slice(dt);
                }
                q
            }
        }
    }
}

/// Intermediate state of one forward pass, kept for the reverse pass.
pub(crate) struct JetTape<S> {
    pub shape: JetShape,
    /// Layer inputs `h_l`, each `fan_in x cols`.
    inputs: Vec<Vec<S>>,
    /// Pre-activations of hidden layers, `fan_out x cols`.
    pre: Vec<Vec<S>>,
    /// `(gelu', gelu'', gelu''')` per hidden unit and sample.
    derivs: Vec<Vec<[S; 3]>>,
    /// `(grad a)^T D (grad a)` per hidden unit and sample.
    quad: Vec<Vec<S>>,
    /// Output jets, `1 x cols`.
    pub out: Vec<S>,
}

impl<S: Scalar> JetTape<S> {
    pub fn forward(
        layout: &ParamLayout,
        params: &[S],
        points: &[S],
        shape: JetShape,
        weighting: Option<&Weighting<S>>,
    ) -> Self {
        let JetShape { n, dim, streams } = shape;
        let cols = shape.cols();
        debug_assert_eq!(points.len(), n * dim);
        let layers = layout.layers();
        let hidden = layers.len() - 1;

        let mut h0 = vec![S::zero(); dim * cols];
        for p in 0..n {
            for i in 0..dim {
                let row = i * cols + p * streams;
                h0[row] = points[p * dim + i];
                if shape.has_derivs() {
                    h0[row + 1 + i] = S::one();
                }
            }
        }

        let mut tape = JetTape {
            shape,
            inputs: Vec::with_capacity(layers.len()),
            pre: Vec::with_capacity(hidden),
            derivs: Vec::with_capacity(hidden),
            quad: Vec::with_capacity(hidden),
            out: Vec::new(),
        };
        tape.inputs.push(h0);

        for (li, l) in layers.iter().enumerate() {
            let w = &params[l.weight_offset..l.bias_offset];
            let b = &params[l.bias_offset..l.end()];
            let mut z = vec![S::zero(); l.fan_out * cols];
            S::gemm(
                l.fan_out,
                l.fan_in,
                cols,
                S::one(),
                w,
                false,
                tape.inputs.last().unwrap(),
                false,
                S::zero(),
                &mut z,
            );
            for (j, &bj) in b.iter().enumerate() {
                let row = &mut z[j * cols..(j + 1) * cols];
                for p in 0..n {
                    row[p * streams] += bj;
                }
            }
            if li == hidden {
                tape.out = z;
                break;
            }

            let mut h = vec![S::zero(); l.fan_out * cols];
            if !shape.has_derivs() {
                for (hv, &zv) in h.iter_mut().zip(&z) {
                    *hv = super::gelu::gelu(zv);
                }
                tape.inputs.push(h);
                continue;
            }
            let weighting = weighting.expect("second-order pass needs a diffusion matrix");
            let mut derivs = vec![[S::zero(); 3]; l.fan_out * n];
            let mut quad = vec![S::zero(); l.fan_out * n];
            for j in 0..l.fan_out {
                for p in 0..n {
                    let base = j * cols + p * streams;
                    let a = z[base];
                    let tan = &z[base + 1..base + 1 + dim];
                    let lap = z[base + 1 + dim];
                    let g = gelu_derivs(a);
                    let q = weighting.quad(tan, None);
                    h[base] = g.value;
                    for i in 0..dim {
                        h[base + 1 + i] = g.d1 * tan[i];
                    }
                    h[base + 1 + dim] = g.d2 * q + g.d1 * lap;
                    derivs[j * n + p] = [g.d1, g.d2, g.d3];
                    quad[j * n + p] = q;
                }
            }
            tape.pre.push(z);
            tape.derivs.push(derivs);
            tape.quad.push(quad);
            tape.inputs.push(h);
        }
        tape
    }

    #[inline]
    pub fn value(&self, p: usize) -> S {
        self.out[p * self.shape.streams]
    }

    #[inline]
    pub fn grad(&self, p: usize) -> &[S] {
        let base = p * self.shape.streams;
        &self.out[base + 1..base + 1 + self.shape.dim]
    }

    #[inline]
    pub fn trace(&self, p: usize) -> S {
        self.out[p * self.shape.streams + 1 + self.shape.dim]
    }

    /// Accumulates into `grad` the parameter gradient of `sum_p <seed_p, out_p>`
    /// where `seed` has the layout of `out`.
    pub fn backward(
        &self,
        layout: &ParamLayout,
        params: &[S],
        weighting: &Weighting<S>,
        seed: Vec<S>,
        grad: &mut [S],
    ) {
        let JetShape { n, dim, streams } = self.shape;
        assert!(self.shape.has_derivs());
        let cols = self.shape.cols();
        let layers = layout.layers();
        let mut zbar = seed;
        let mut dt = vec![S::zero(); dim];

        for li in (0..layers.len()).rev() {
            let l = &layers[li];
            let input = &self.inputs[li];
            S::gemm(
                l.fan_out,
                cols,
                l.fan_in,
                S::one(),
                &zbar,
                false,
                input,
                true,
                S::one(),
                &mut grad[l.weight_offset..l.bias_offset],
            );
            for j in 0..l.fan_out {
                let row = &zbar[j * cols..(j + 1) * cols];
                let mut acc = S::zero();
                for p in 0..n {
                    acc += row[p * streams];
                }
                grad[l.bias_offset + j] += acc;
            }
            if li == 0 {
                break;
            }

            let below = &layers[li - 1];
            let mut hbar = vec![S::zero(); l.fan_in * cols];
            S::gemm(
                l.fan_in,
                l.fan_out,
                cols,
                S::one(),
                &params[l.weight_offset..l.bias_offset],
                true,
                &zbar,
                false,
                S::zero(),
                &mut hbar,
            );

            // hbar becomes zbar of the layer below, in place.
            let z = &self.pre[li - 1];
            let derivs = &self.derivs[li - 1];
            let quad = &self.quad[li - 1];
            for j in 0..below.fan_out {
                for p in 0..n {
                    let base = j * cols + p * streams;
                    let [d1, d2, d3] = derivs[j * n + p];
                    let q = quad[j * n + p];
                    let tan = &z[base + 1..base + 1 + dim];
                    let lap = z[base + 1 + dim];
                    let sbar = hbar[base + 1 + dim];
                    weighting.quad(tan, Some(&mut dt));

                    let mut abar = hbar[base] * d1 + sbar * (d3 * q + d2 * lap);
                    let two_s_d2 = S::c(2.0) * sbar * d2;
                    for i in 0..dim {
                        let tbar = hbar[base + 1 + i];
                        abar += d2 * tbar * tan[i];
                        hbar[base + 1 + i] = tbar * d1 + two_s_d2 * dt[i];
                    }
                    hbar[base] = abar;
                    hbar[base + 1 + dim] = sbar * d1;
                }
            }
            zbar = hbar;
        }
    }
}
