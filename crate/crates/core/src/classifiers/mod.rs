//! Profiled attackers built from scratch: multilayer perceptrons and 1-D
//! convolutional networks, trained with RMSprop on softmax cross-entropy.

mod gradcheck;
mod layers;
mod model;
mod network;
mod real;
mod spec;
mod train;

use alloc::boxed::Box;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dataset::Dataset;

pub use gradcheck::gradient_check;
pub use layers::{LayerKind, Shape};
pub use model::NeuralModel;
pub use network::{softmax, Network, Workspace};
pub use real::Real;
pub use spec::{Architecture, CnnSpec, ConvBlock, MlpSpec, ModelSpec, TrainConfig};
pub use train::{initialize, train, train_observed, TrainingLog};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("trace has {got} samples, the model expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("layer {layer} does not fit the shape it receives")]
    BadArchitecture { layer: usize },
    #[error("loss became non-finite in epoch {epoch}; lower the learning rate (now {learning_rate})")]
    NonFiniteLoss { epoch: usize, learning_rate: f64 },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("class {class} has {have} profiling traces, need at least {need}")]
    SparseClass { class: usize, have: usize, need: usize },
    #[error("covariance of class {class} is not positive definite")]
    Singular { class: usize },
}

/// Anything that maps a standardized trace to class confidences.
pub trait Classifier {
    fn class_count(&self) -> usize;

    fn input_len(&self) -> usize;

    /// Confidences summing to one.
    fn predict(&self, trace: &[f64]) -> Result<Vec<f64>, ClassifierError>;

    fn predict_all(&self, dataset: &Dataset) -> Result<Vec<Vec<f64>>, ClassifierError> {
        dataset.rows().map(|r| self.predict(r)).collect()
    }

    /// Evaluator for copies of `trace` that differ in one sample.
    fn probe<'a>(&'a self, trace: &'a [f64]) -> Result<Box<dyn PixelProbe + 'a>, ClassifierError>
    where
        Self: Sized,
    {
        if trace.len() != self.input_len() {
            return Err(ClassifierError::LengthMismatch { expected: self.input_len(), got: trace.len() });
        }
        Ok(Box::new(GenericProbe { model: self, x: trace.to_vec() }))
    }
}

pub trait PixelProbe {
    /// Confidences for the trace with `trace[position] = value`.
    fn with_pixel(&mut self, position: usize, value: f64) -> Vec<f64>;
}

struct GenericProbe<'a, C> {
    model: &'a C,
    x: Vec<f64>,
}

impl<C: Classifier> PixelProbe for GenericProbe<'_, C> {
    fn with_pixel(&mut self, position: usize, value: f64) -> Vec<f64> {
        let old = core::mem::replace(&mut self.x[position], value);
        let p = self.model.predict(&self.x).expect("length checked at construction");
        self.x[position] = old;
        p
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of traces whose most confident class equals their label.
pub fn accuracy_of<C: Classifier + ?Sized>(model: &C, dataset: &Dataset) -> Result<f64, ClassifierError> {
    if dataset.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let mut hits = 0usize;
    for (i, row) in dataset.rows().enumerate() {
        hits += usize::from(argmax(&model.predict(row)?) == dataset.label(i));
    }
    Ok(hits as f64 / dataset.len() as f64)
}
