use alloc::boxed::Box;
use alloc::vec::Vec;
use core::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::layers::LayerKind;
use super::network::{softmax, Network, Workspace};
use super::spec::ModelSpec;
use super::train::TrainingLog;
use super::{Classifier, ClassifierError, PixelProbe};
use crate::dataset::StandardizationStats;

/// Trained network with the recipe and statistics that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralModel {
    pub spec: ModelSpec,
    pub network: Network<f32>,
    pub log: TrainingLog,
    /// Profiling-set statistics its inputs must be standardized with.
    pub stats: Option<StandardizationStats>,
}

impl NeuralModel {
    pub fn with_stats(mut self, stats: StandardizationStats) -> Self {
        self.stats = Some(stats);
        self
    }

    fn check(&self, trace: &[f64]) -> Result<Vec<f32>, ClassifierError> {
        if trace.len() != self.network.input_len() {
            return Err(ClassifierError::LengthMismatch { expected: self.network.input_len(), got: trace.len() });
        }
        Ok(trace.iter().map(|&v| v as f32).collect())
    }
}

impl Classifier for NeuralModel {
    fn class_count(&self) -> usize {
        self.network.classes
    }

    fn input_len(&self) -> usize {
        self.network.input_len()
    }

    fn predict(&self, trace: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        let x = self.check(trace)?;
        Ok(self.network.probabilities(&x, &mut Workspace::default()))
    }

    fn probe<'a>(&'a self, trace: &'a [f64]) -> Result<Box<dyn PixelProbe + 'a>, ClassifierError> {
        let x = self.check(trace)?;
        let LayerKind::Dense { inputs, outputs } = self.network.layers[0] else {
            return Ok(Box::new(CopyProbe { net: &self.network, x, ws: RefCell::default() }));
        };
        let mut ws = Workspace::default();
        let first = Network {
            input: self.network.input,
            layers: self.network.layers[..1].to_vec(),
            params: self.network.params[..1].to_vec(),
            classes: outputs,
        };
        let z = first.logits(&x, &mut ws);
        Ok(Box::new(DenseProbe { net: &self.network, inputs, x, z, buf: Vec::new(), ws }))
    }
}

struct CopyProbe<'a> {
    net: &'a Network<f32>,
    x: Vec<f32>,
    ws: RefCell<Workspace<f32>>,
}

impl PixelProbe for CopyProbe<'_> {
    fn with_pixel(&mut self, position: usize, value: f64) -> Vec<f64> {
        let old = core::mem::replace(&mut self.x[position], value as f32);
        let p = self.net.probabilities(&self.x, self.ws.get_mut());
        self.x[position] = old;
        p
    }
}

/// Changing one input moves the first dense layer's output along one weight
/// column, so only that column and the later layers are recomputed.
struct DenseProbe<'a> {
    net: &'a Network<f32>,
    inputs: usize,
    x: Vec<f32>,
    z: Vec<f32>,
    buf: Vec<f32>,
    ws: Workspace<f32>,
}

impl PixelProbe for DenseProbe<'_> {
    fn with_pixel(&mut self, position: usize, value: f64) -> Vec<f64> {
        let delta = value as f32 - self.x[position];
        let w = &self.net.params[0];
        self.buf.clear();
        self.buf.extend(self.z.iter().enumerate().map(|(o, &z)| z + w[o * self.inputs + position] * delta));
        softmax(&self.net.forward_from(1, &self.buf, &mut self.ws))
    }
}
