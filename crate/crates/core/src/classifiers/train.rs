use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::model::NeuralModel;
use super::network::{Network, Workspace};
use super::spec::ModelSpec;
use super::ClassifierError;
use crate::dataset::{shuffled_indices, Dataset};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Mean cross-entropy of every epoch.
    pub epoch_loss: Vec<f64>,
}

/// Fresh, untrained network for `spec`.
pub fn initialize(input_len: usize, classes: usize, spec: &ModelSpec) -> Result<Network<f32>, ClassifierError> {
    Network::new(input_len, spec.architecture.layers(input_len, classes), classes, spec.train.seed)
}

/// Minimizes softmax cross-entropy with RMSprop over a standardized dataset.
pub fn train(dataset: &Dataset, spec: &ModelSpec) -> Result<NeuralModel, ClassifierError> {
    train_observed(dataset, spec, |_, _| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_observed(
    dataset: &Dataset,
    spec: &ModelSpec,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<NeuralModel, ClassifierError> {
    if dataset.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let classes = dataset.class_count();
    if let Some(&label) = dataset.records.iter().map(|r| &r.label).find(|&&l| usize::from(l) >= classes) {
        return Err(ClassifierError::LabelOutOfRange { label: label.into(), classes });
    }
    let cfg = spec.train;
    let mut net = initialize(dataset.trace_len, classes, spec)?;
    let data: Vec<f32> = dataset.traces.iter().map(|&v| v as f32).collect();
    let n = dataset.trace_len;
    let batch = cfg.batch_size.max(1);
    let lr = cfg.learning_rate as f32;
    let rho = cfg.rho as f32;
    let eps = cfg.epsilon as f32;

    let mut grads = net.zeros_like();
    let mut square = net.zeros_like();
    let mut ws = Workspace::default();
    let mut log = TrainingLog::default();
    for epoch in 0..cfg.epochs {
        let order = shuffled_indices(dataset.len(), derive_seed(cfg.seed, "epoch", epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            let mut loss = 0.0;
            for &i in chunk {
                loss += net.accumulate_gradient(&data[i * n..(i + 1) * n], dataset.label(i), &mut grads, &mut ws);
            }
            if !loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss { epoch, learning_rate: cfg.learning_rate });
            }
            total += loss;
            let scale = 1.0 / chunk.len() as f32;
            for ((p, g), s) in net.params.iter_mut().zip(&grads).zip(&mut square) {
                for ((w, &g), s) in p.iter_mut().zip(g).zip(s.iter_mut()) {
                    let g = g * scale;
                    *s = rho * *s + (1.0 - rho) * g * g;
                    *w -= lr * g / (libm::sqrtf(*s) + eps);
                }
            }
            if net.params.iter().flatten().any(|w| !w.is_finite()) {
                return Err(ClassifierError::NonFiniteLoss { epoch, learning_rate: cfg.learning_rate });
            }
        }
        let mean = total / dataset.len() as f64;
        log.epoch_loss.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(NeuralModel { spec: spec.clone(), network: net, log, stats: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::{AcquisitionRecord, LeakageModel};
    use crate::classifiers::{accuracy_of, Architecture, Classifier, MlpSpec, TrainConfig};
    use crate::dataset::KeyPolicy;
    use crate::seed::rng_for;
    use alloc::vec;
    use rand::Rng;

    /// Two classes separated along a random direction with a margin.
    fn separable(count: usize, len: usize, seed: u64) -> Dataset {
        let leakage = LeakageModel::default();
        let mut rng = rng_for(seed, "separable", 0);
        let dir: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut traces = Vec::new();
        let mut records = Vec::new();
        while records.len() < count {
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s: f64 = x.iter().zip(&dir).map(|(a, b)| a * b).sum();
            if s.abs() < 0.3 {
                continue;
            }
            // the label is stored through the plaintext so the record stays consistent
            let key = [0u8; 16];
            let mut pt = [0u8; 16];
            loop {
                pt[2] = rng.random();
                let r = AcquisitionRecord::new(pt, key, &leakage);
                if (r.label == 1) == (s > 0.0) {
                    records.push(r);
                    break;
                }
            }
            traces.extend(x);
        }
        Dataset::new(traces, records, leakage, len, KeyPolicy::Fixed([0; 16])).unwrap()
    }

    fn small() -> ModelSpec {
        ModelSpec {
            architecture: Architecture::Mlp(MlpSpec { hidden: vec![8] }),
            train: TrainConfig { learning_rate: 1e-2, batch_size: 16, epochs: 30, ..TrainConfig::mlp_default() },
        }
    }

    #[test]
    fn separable_set_is_learned() {
        let d = separable(400, 6, 1);
        let model = train(&d, &small()).unwrap();
        assert!(accuracy_of(&model, &d).unwrap() > 0.99);
        assert!(model.log.epoch_loss.last() < model.log.epoch_loss.first());
    }

    #[test]
    fn zero_epochs_is_initialization() {
        let d = separable(20, 6, 2);
        let mut spec = small();
        spec.train.epochs = 0;
        let model = train(&d, &spec).unwrap();
        assert_eq!(model.network, initialize(6, 2, &spec).unwrap());
        assert!(model.log.epoch_loss.is_empty());
    }

    #[test]
    fn same_seed_same_weights() {
        let d = separable(100, 5, 3);
        let mut spec = small();
        spec.train.epochs = 3;
        assert_eq!(train(&d, &spec).unwrap(), train(&d, &spec).unwrap());
        let other = spec.clone().with_seed(9);
        assert_ne!(train(&d, &spec).unwrap().network, train(&d, &other).unwrap().network);
    }

    #[test]
    fn divergence_is_reported() {
        let d = separable(50, 5, 4);
        let mut spec = small();
        spec.train.learning_rate = 1e30;
        spec.train.epochs = 5;
        assert!(matches!(train(&d, &spec), Err(ClassifierError::NonFiniteLoss { .. })));
    }

    #[test]
    fn probes_agree_with_predict() {
        let d = separable(60, 12, 5);
        let mut spec = small();
        spec.train.epochs = 2;
        let mlp = train(&d, &spec).unwrap();
        spec.architecture = Architecture::Cnn(crate::classifiers::CnnSpec {
            blocks: vec![crate::classifiers::ConvBlock { filters: 2, kernel: 3, pool: 2 }],
            dense: vec![4],
        });
        let cnn = train(&d, &spec).unwrap();
        let trace = d.trace(0);
        for model in [&mlp, &cnn] {
            let mut probe = model.probe(trace).unwrap();
            for (pos, v) in [(0, 3.0), (7, -2.5), (11, 0.0)] {
                let mut x = trace.to_vec();
                x[pos] = v;
                let direct = model.predict(&x).unwrap();
                let fast = probe.with_pixel(pos, v);
                for (a, b) in direct.iter().zip(&fast) {
                    assert!((a - b).abs() < 1e-5, "{direct:?} {fast:?}");
                }
                assert!((fast.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
        assert!(mlp.predict(&trace[..3]).is_err());
    }
}
