//! Key ranks, accuracy, rank curves over repeated splits, the naive
//! adversarial-conversion study, and cycle overhead.

mod curve;
mod naive;
mod overhead;
mod scores;

use thiserror::Error;

use crate::classifiers::ClassifierError;
use crate::dataset::DatasetError;

pub use crate::classifiers::accuracy_of;
pub use curve::{mean_rank_curve, rank_trajectory, CurveConfig, RankCurve, Trainer};
pub use naive::{convert_pool, naive_adversarial_study, NaiveStudyReport};
pub use overhead::{analytic_spread, execution_overhead, OverheadRow};
pub use scores::{distinguishable_rank, key_scores, log_scores, rank_of, KeyHypothesisMap, CONFIDENCE_FLOOR};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluationError {
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("rank evaluation needs a non-empty pool sharing one key")]
    MixedKeys,
    #[error("need {need} attack traces, the split leaves {have}")]
    TooFewAttackTraces { need: usize, have: usize },
    #[error("repetitions must be at least 1")]
    NoRepetitions,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::{AcquisitionRecord, LeakageModel};
    use crate::classifiers::Classifier;
    use crate::dataset::{Dataset, KeyPolicy};
    use crate::seed::rng_for;
    use alloc::boxed::Box;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::Rng;

    struct Uniform;

    impl Classifier for Uniform {
        fn class_count(&self) -> usize {
            2
        }
        fn input_len(&self) -> usize {
            1
        }
        fn predict(&self, _: &[f64]) -> Result<Vec<f64>, ClassifierError> {
            Ok(vec![0.5, 0.5])
        }
    }

    /// Reads the label straight off a noiseless trace.
    struct Oracle;

    impl Classifier for Oracle {
        fn class_count(&self) -> usize {
            2
        }
        fn input_len(&self) -> usize {
            1
        }
        fn predict(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
            Ok(if x[0] > 0.0 { vec![0.01, 0.99] } else { vec![0.99, 0.01] })
        }
    }

    /// Trace = label, with a few random plaintexts; fixed key.
    fn pool(count: usize) -> Dataset {
        let leakage = LeakageModel::default();
        let key = [0x5a; 16];
        let mut rng = rng_for(4, "pool", 0);
        let records: Vec<_> = (0..count).map(|_| AcquisitionRecord::new(rng.random(), key, &leakage)).collect();
        let traces = records.iter().map(|r| f64::from(r.label)).collect();
        Dataset::new(traces, records, leakage, 1, KeyPolicy::Fixed(key)).unwrap()
    }

    #[test]
    fn oracle_classifier_reaches_rank_zero() {
        let cfg = CurveConfig { repetitions: 3, profiling_count: 100, m_max: 60, seed: 1, retrain: true };
        let curve = mean_rank_curve(&pool(300), &mut |_, _| Ok(Box::new(Oracle)), &cfg).unwrap();
        assert!(curve.rank_zero_m().unwrap() <= 30, "{:?}", curve.mean);
        assert!(curve.accuracy.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn uniform_classifier_sits_at_half() {
        let cfg = CurveConfig { repetitions: 2, profiling_count: 10, m_max: 20, seed: 1, retrain: false };
        let curve = mean_rank_curve(&pool(40), &mut |_, _| Ok(Box::new(Uniform)), &cfg).unwrap();
        // every candidate ties, so rank is 0 under strict counting
        assert!(curve.mean.iter().all(|&r| r == 0.0));

        // random confidences: mean rank over many trials near 127.5
        let mut rng = rng_for(8, "random-guess", 0);
        let trials = 400;
        let mut total = 0.0;
        let pts: Vec<[u8; 16]> = (0..50).map(|_| rng.random()).collect();
        let map = KeyHypothesisMap::new(&pts, &LeakageModel::default());
        for _ in 0..trials {
            let preds: Vec<Vec<f64>> = (0..50)
                .map(|_| {
                    let p: f64 = rng.random_range(0.05..0.95);
                    vec![p, 1.0 - p]
                })
                .collect();
            total += f64::from(rank_trajectory(&preds, &map, 0x5a, 50)[49]);
        }
        let mean = total / trials as f64;
        // rank of a random candidate is uniform on 0..=255: sd 73.9
        let sigma = 73.9 / libm::sqrt(trials as f64);
        assert!((mean - 127.5).abs() < 3.0 * sigma, "{mean}");
    }

    #[test]
    fn curve_bookkeeping() {
        let curve = RankCurve { mean: vec![3.0, 0.0, 1.0, 0.0, 0.0], ranks: vec![], accuracy: vec![0.5, 0.7] };
        assert_eq!(curve.rank_zero_m(), Some(4));
        assert_eq!(curve.mean_at(100), 0.0);
        assert!((curve.mean_accuracy() - 0.6).abs() < 1e-12);
        assert_eq!(RankCurve { mean: vec![1.0], ranks: vec![], accuracy: vec![] }.rank_zero_m(), None);
    }

    #[test]
    fn pool_errors() {
        let cfg = CurveConfig { repetitions: 1, profiling_count: 100, m_max: 60, seed: 1, retrain: true };
        let r = mean_rank_curve(&pool(120), &mut |_, _| Ok(Box::new(Oracle)), &cfg);
        assert!(matches!(r, Err(EvaluationError::TooFewAttackTraces { .. })));
        let zero = CurveConfig { repetitions: 0, ..cfg };
        assert!(matches!(mean_rank_curve(&pool(300), &mut |_, _| Ok(Box::new(Oracle)), &zero), Err(EvaluationError::NoRepetitions)));
    }

    #[test]
    fn accuracy_edge_cases() {
        let d = pool(200);
        assert_eq!(accuracy_of(&Oracle, &d).unwrap(), 1.0);
        let ones = d.labels().iter().filter(|&&l| l == 1).count() as f64 / 200.0;
        // constant class 0 (uniform ties go to class 0)
        assert!((accuracy_of(&Uniform, &d).unwrap() - (1.0 - ones)).abs() < 1e-12);
        let mut rev = d.subset(&(0..200).rev().collect::<Vec<_>>());
        assert_eq!(accuracy_of(&Oracle, &rev).unwrap(), 1.0);
        rev.traces.iter_mut().for_each(|t| *t = 1.0 - *t);
        assert_eq!(accuracy_of(&Oracle, &rev).unwrap(), 0.0);
    }
}
