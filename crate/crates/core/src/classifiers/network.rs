use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{backward, forward, LayerKind, Shape};
use super::real::Real;
use super::ClassifierError;
use crate::seed::rng_for;

/// A stack of layers ending in `classes` logits; softmax is applied on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network<T> {
    pub input: Shape,
    pub layers: Vec<LayerKind>,
    /// One flat parameter vector per layer: weights, then biases.
    pub params: Vec<Vec<T>>,
    pub classes: usize,
}

/// Reusable buffers for forward and backward passes.
#[derive(Debug, Default, Clone)]
pub struct Workspace<T> {
    acts: Vec<Vec<T>>,
    delta: Vec<T>,
    next: Vec<T>,
}

impl<T: Real> Network<T> {
    /// Glorot-uniform weights and zero biases, drawn from `seed`.
    pub fn new(input_len: usize, layers: Vec<LayerKind>, classes: usize, seed: u64) -> Result<Self, ClassifierError> {
        let input = Shape { channels: 1, len: input_len };
        let mut shape = input;
        for (i, layer) in layers.iter().enumerate() {
            let ok = match *layer {
                LayerKind::Dense { inputs, outputs } => inputs == shape.size() && outputs > 0,
                LayerKind::Conv1d { in_channels, out_channels, kernel } => {
                    in_channels == shape.channels && out_channels > 0 && kernel >= 1 && kernel <= shape.len
                }
                LayerKind::AvgPool { size } => size >= 1 && size <= shape.len,
                LayerKind::Relu => true,
            };
            if !ok {
                return Err(ClassifierError::BadArchitecture { layer: i });
            }
            shape = layer.output_shape(shape);
        }
        if shape.size() != classes || classes < 2 {
            return Err(ClassifierError::BadArchitecture { layer: layers.len() });
        }
        let params = layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let mut rng = rng_for(seed, "init", i as u64);
                let (fan_in, fan_out) = layer.fans();
                let limit = if fan_in + fan_out > 0 { libm::sqrt(6.0 / (fan_in + fan_out) as f64) } else { 0.0 };
                let mut p = vec![T::ZERO; layer.param_count()];
                for w in &mut p[..layer.weight_count()] {
                    *w = T::from_f64(rng.random_range(-limit..=limit));
                }
                p
            })
            .collect();
        Ok(Network { input, layers, params, classes })
    }

    pub fn input_len(&self) -> usize {
        self.input.len
    }

    pub fn shapes(&self) -> Vec<Shape> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(self.input);
        for l in &self.layers {
            let s = l.output_shape(*shapes.last().unwrap());
            shapes.push(s);
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<Vec<T>> {
        self.params.iter().map(|p| vec![T::ZERO; p.len()]).collect()
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            input: self.input,
            layers: self.layers.clone(),
            params: self.params.iter().map(|p| p.iter().map(|&v| U::from_f64(v.to_f64())).collect()).collect(),
            classes: self.classes,
        }
    }

    /// Runs layers `from..` on `x`, which must be the input of layer `from`.
    pub(crate) fn forward_from(&self, from: usize, x: &[T], ws: &mut Workspace<T>) -> Vec<T> {
        let shapes = self.shapes();
        ws.acts.resize_with(self.layers.len() + 1, Vec::new);
        ws.acts[from].clear();
        ws.acts[from].extend_from_slice(x);
        for i in from..self.layers.len() {
            let (head, tail) = ws.acts.split_at_mut(i + 1);
            forward(self.layers[i], &self.params[i], shapes[i], &head[i], &mut tail[0]);
        }
        ws.acts[self.layers.len()].clone()
    }

    pub fn logits(&self, x: &[T], ws: &mut Workspace<T>) -> Vec<T> {
        self.forward_from(0, x, ws)
    }

    pub fn probabilities(&self, x: &[T], ws: &mut Workspace<T>) -> Vec<f64> {
        softmax(&self.logits(x, ws))
    }

    /// Cross-entropy of one sample; adds its parameter gradient into `grads`.
    pub fn accumulate_gradient(&self, x: &[T], label: usize, grads: &mut [Vec<T>], ws: &mut Workspace<T>) -> f64 {
        let logits = self.logits(x, ws);
        let p = softmax(&logits);
        let loss = -libm::log(p[label].max(f64::MIN_POSITIVE));
        let shapes = self.shapes();
        ws.delta.clear();
        ws.delta.extend(p.iter().enumerate().map(|(k, &pk)| T::from_f64(pk - if k == label { 1.0 } else { 0.0 })));
        for i in (0..self.layers.len()).rev() {
            let need_dx = i > 0;
            backward(
                self.layers[i],
                &self.params[i],
                shapes[i],
                &ws.acts[i],
                &ws.delta,
                &mut ws.next,
                &mut grads[i],
                need_dx,
            );
            core::mem::swap(&mut ws.delta, &mut ws.next);
        }
        loss
    }
}

/// Numerically stable softmax, computed in double precision.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<f64> {
    let max = logits.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| libm::exp(v.to_f64() - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mlp(seed: u64) -> Network<f64> {
        let layers = vec![
            LayerKind::Dense { inputs: 4, outputs: 3 },
            LayerKind::Relu,
            LayerKind::Dense { inputs: 3, outputs: 2 },
        ];
        Network::new(4, layers, 2, seed).unwrap()
    }

    #[test]
    fn softmax_sums_to_one_and_fig1_vector() {
        let p = softmax(&[1000.0f64, -3.0, 2.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // a vector whose larger entry is the second classifies as class 1
        let d = [0.4294791f64, 0.57052094];
        let logits: Vec<f64> = d.iter().map(|v| libm::log(*v)).collect();
        let q = softmax(&logits);
        assert!((q[1] - 0.57052094).abs() < 1e-6);
        assert_eq!(super::super::argmax(&q), 1);
    }

    #[test]
    fn zero_final_layer_is_uniform() {
        let mut net = mlp(1);
        net.params[2].iter_mut().for_each(|w| *w = 0.0);
        let p = net.probabilities(&[1.0, -2.0, 3.0, 0.5], &mut Workspace::default());
        assert_eq!(p, [0.5, 0.5]);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        assert_eq!(mlp(7), mlp(7));
        assert_ne!(mlp(7), mlp(8));
        let limit = libm::sqrt(6.0 / 7.0);
        assert!(mlp(3).params[0][..12].iter().all(|w| w.abs() <= limit));
        assert!(mlp(3).params[0][12..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn bad_shapes_rejected() {
        assert!(Network::<f64>::new(4, vec![LayerKind::Dense { inputs: 5, outputs: 2 }], 2, 0).is_err());
        assert!(Network::<f64>::new(4, vec![LayerKind::Dense { inputs: 4, outputs: 3 }], 2, 0).is_err());
        assert!(Network::<f64>::new(4, vec![LayerKind::AvgPool { size: 5 }], 2, 0).is_err());
    }
}
