use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError};

/// Floor applied to per-sample standard deviations.
pub const SD_FLOOR: f64 = 1e-6;

/// Per-sample mean and (population) standard deviation of a profiling set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl StandardizationStats {
    /// Builds stats from raw vectors, flooring the deviations.
    pub fn new(mean: Vec<f64>, sd: Vec<f64>) -> Self {
        assert_eq!(mean.len(), sd.len());
        let sd = sd.into_iter().map(|s| s.max(SD_FLOOR)).collect();
        StandardizationStats { mean, sd }
    }

    pub fn fit(dataset: &Dataset) -> Result<Self, DatasetError> {
        if dataset.len() < 2 {
            return Err(DatasetError::TooFewTraces { need: 2, have: dataset.len() });
        }
        let n = dataset.trace_len;
        let count = dataset.len() as f64;
        let mut mean = alloc::vec![0.0; n];
        for row in dataset.rows() {
            mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = alloc::vec![0.0; n];
        for row in dataset.rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let sd = var.into_iter().map(|v| libm::sqrt(v / count)).collect();
        Ok(Self::new(mean, sd))
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    #[inline]
    pub fn standardize_sample(&self, index: usize, value: f64) -> f64 {
        (value - self.mean[index]) / self.sd[index]
    }

    pub fn apply_trace(&self, trace: &[f64]) -> Result<Vec<f64>, DatasetError> {
        if trace.len() != self.len() {
            return Err(DatasetError::LengthMismatch { expected: self.len(), got: trace.len() });
        }
        Ok(trace.iter().enumerate().map(|(i, &x)| self.standardize_sample(i, x)).collect())
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset, DatasetError> {
        if dataset.trace_len != self.len() {
            return Err(DatasetError::LengthMismatch { expected: self.len(), got: dataset.trace_len });
        }
        dataset.map_traces(|_, row| row.iter().enumerate().map(|(i, &x)| self.standardize_sample(i, x)).collect())
    }
}

/// Z-scores every sample column; the statistics are returned for reuse on
/// attack sets.
pub fn standardize(dataset: &Dataset) -> Result<(Dataset, StandardizationStats), DatasetError> {
    let stats = StandardizationStats::fit(dataset)?;
    Ok((stats.apply(dataset)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::{AcquisitionRecord, LeakageModel};
    use crate::dataset::KeyPolicy;
    use alloc::vec;

    fn columns(cols: &[&[f64]]) -> Dataset {
        let n_traces = cols[0].len();
        let leakage = LeakageModel::default();
        let mut traces = Vec::new();
        for i in 0..n_traces {
            traces.extend(cols.iter().map(|c| c[i]));
        }
        let records = (0..n_traces).map(|_| AcquisitionRecord::new([0; 16], [0; 16], &leakage)).collect();
        Dataset::new(traces, records, leakage, cols.len(), KeyPolicy::Uniform).unwrap()
    }

    #[test]
    fn two_point_column() {
        let (d, stats) = standardize(&columns(&[&[0.0, 2.0]])).unwrap();
        assert_eq!(d.traces, vec![-1.0, 1.0]);
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.sd, vec![1.0]);
    }

    #[test]
    fn constant_column_becomes_zero() {
        let (d, stats) = standardize(&columns(&[&[3.0, 3.0, 3.0]])).unwrap();
        assert_eq!(d.traces, vec![0.0; 3]);
        assert_eq!(stats.sd, vec![SD_FLOOR]);
    }

    #[test]
    fn stored_stats_reproduce_output() {
        let raw = columns(&[&[1.0, 5.0, 2.0, 8.0], &[0.5, 0.25, 4.0, -1.0]]);
        let (d, stats) = standardize(&raw).unwrap();
        assert_eq!(stats.apply(&raw).unwrap(), d);
    }

    #[test]
    fn standardized_columns_have_unit_moments() {
        let a: Vec<f64> = (0..101).map(|i| (i as f64 * 0.37).sin() * 4.0 + 2.0).collect();
        let b: Vec<f64> = (0..101).map(|i| (i * i % 17) as f64).collect();
        let (d, _) = standardize(&columns(&[&a, &b])).unwrap();
        for c in 0..2 {
            let col: Vec<f64> = d.rows().map(|r| r[c]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64;
            assert!(m.abs() < 1e-9);
            assert!((v.sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn needs_two_traces() {
        assert!(matches!(standardize(&columns(&[&[1.0]])), Err(DatasetError::TooFewTraces { .. })));
        let stats = StandardizationStats::new(vec![0.0; 2], vec![1.0; 2]);
        assert!(stats.apply_trace(&[1.0]).is_err());
    }
}
