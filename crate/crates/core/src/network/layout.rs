//! Flat parameter storage.
//!
//! Layers are stored in order; each layer is its weight matrix
//! (`fan_out x fan_in`, row-major) followed by its bias vector.

use std::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{Architecture, Init};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        self.fan_in * self.fan_out
    }

    pub fn end(&self) -> usize {
        self.bias_offset + self.fan_out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamCoord {
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, row: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    layers: Vec<LayerShape>,
    len: usize,
}

impl ParamLayout {
    pub fn new(arch: &Architecture) -> Self {
        let widths = arch.widths();
        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let shape = LayerShape {
                fan_in,
                fan_out,
                weight_offset: offset,
                bias_offset: offset + fan_in * fan_out,
            };
            offset = shape.end();
            layers.push(shape);
        }
        Self { layers, len: offset }
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self, coord: ParamCoord) -> usize {
        match coord {
            ParamCoord::Weight { layer, row, col } => {
                let l = &self.layers[layer];
                assert!(row < l.fan_out && col < l.fan_in);
                l.weight_offset + row * l.fan_in + col
            }
            ParamCoord::Bias { layer, row } => {
                let l = &self.layers[layer];
                assert!(row < l.fan_out);
                l.bias_offset + row
            }
        }
    }

    pub fn coord(&self, index: usize) -> ParamCoord {
        assert!(index < self.len, "parameter index out of range");
        let layer = self.layers.partition_point(|l| l.end() <= index);
        let l = &self.layers[layer];
        if index < l.bias_offset {
            let k = index - l.weight_offset;
            ParamCoord::Weight {
                layer,
                row: k / l.fan_in,
                col: k % l.fan_in,
            }
        } else {
            ParamCoord::Bias {
                layer,
                row: index - l.bias_offset,
            }
        }
    }
}

/// Ordered parameter values `theta` of the field network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector<S>(pub Vec<S>);

impl<S> Deref for ParamVector<S> {
    type Target = [S];
    fn deref(&self) -> &[S] {
        &self.0
    }
}

impl<S> DerefMut for ParamVector<S> {
    fn deref_mut(&mut self) -> &mut [S] {
        &mut self.0
    }
}

impl<S: Scalar> ParamVector<S> {
    pub fn zeros(len: usize) -> Self {
        Self(vec![S::zero(); len])
    }

    pub fn to_f64(&self) -> ParamVector<f64> {
        ParamVector(self.0.iter().map(|v| v.to_f64_lossy()).collect())
    }

    pub fn from_f64(values: &[f64]) -> Self {
        Self(values.iter().map(|&v| S::c(v)).collect())
    }
}

/// He-uniform weights (`U[-sqrt(6/fan_in), sqrt(6/fan_in)]`) and zero biases.
pub fn init_params<S: Scalar>(arch: &Architecture, seed: u64) -> ParamVector<S> {
    let layout = ParamLayout::new(arch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![S::zero(); layout.len()];
    for l in layout.layers() {
        let bound = match arch.init {
            Init::HeUniform => (6.0 / l.fan_in as f64).sqrt(),
        };
        for w in &mut values[l.weight_offset..l.bias_offset] {
            *w = S::c(rng.gen_range(-bound..=bound));
        }
    }
    ParamVector(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn he_uniform_bounds_and_zero_bias() {
        let arch = Architecture::new(1, vec![64, 64, 64, 64]).unwrap();
        let p: ParamVector<f64> = init_params(&arch, 0);
        let layout = ParamLayout::new(&arch);
        let first = layout.layers()[0];
        let bound = 6f64.sqrt();
        for &w in &p[first.weight_offset..first.bias_offset] {
            assert!(w.abs() <= bound);
        }
        for l in layout.layers() {
            let b = (6.0 / l.fan_in as f64).sqrt();
            assert!(p[l.weight_offset..l.bias_offset].iter().all(|w| w.abs() <= b));
            assert!(p[l.bias_offset..l.end()].iter().all(|&v| v == 0.0));
        }
        // Hidden layers have fan_in 64, so the tighter bound applies there.
        let second = layout.layers()[1];
        let max = p[second.weight_offset..second.bias_offset]
            .iter()
            .fold(0.0f64, |m, w| m.max(w.abs()));
        assert!(max <= (6.0f64 / 64.0).sqrt() && max > 0.25);
    }

    #[test]
    fn init_is_deterministic() {
        let arch = Architecture::default_for(1);
        let a: ParamVector<f64> = init_params(&arch, 0);
        let b: ParamVector<f64> = init_params(&arch, 0);
        let c: ParamVector<f64> = init_params(&arch, 1);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), arch.param_count());
    }

    proptest! {
        #[test]
        fn layout_round_trips(
            d in 1usize..6,
            widths in prop::collection::vec(1usize..9, 1..4),
            pick in 0.0f64..1.0,
        ) {
            let arch = Architecture::new(d, widths).unwrap();
            let layout = ParamLayout::new(&arch);
            prop_assert_eq!(layout.len(), arch.param_count());
            let idx = ((layout.len() as f64 * pick) as usize).min(layout.len() - 1);
            prop_assert_eq!(layout.index(layout.coord(idx)), idx);
        }
    }

    #[test]
    fn every_index_round_trips() {
        let arch = Architecture::new(2, vec![3, 4]).unwrap();
        let layout = ParamLayout::new(&arch);
        for i in 0..layout.len() {
            assert_eq!(layout.index(layout.coord(i)), i);
        }
        assert_eq!(
            layout.coord(6),
            ParamCoord::Bias { layer: 0, row: 0 }
        );
    }
}
