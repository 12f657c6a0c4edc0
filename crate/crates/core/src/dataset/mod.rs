//! Trace campaigns, standardization, profiling/attack splits and
//! correlation analysis.

mod acquire;
mod correlation;
mod standardize;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aes::{AcquisitionRecord, Block, LeakageModel};
use crate::countermeasure::CountermeasureError;
use crate::vm::{AsmError, ExecError};

pub use acquire::{acquire, Acquisition, Campaign, Target};
pub use correlation::{correlation_profile, top_peaks};
pub use standardize::{standardize, StandardizationStats, SD_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyPolicy {
    Fixed(Block),
    Uniform,
}

impl KeyPolicy {
    pub fn fixed_key(&self) -> Option<&Block> {
        match self {
            KeyPolicy::Fixed(k) => Some(k),
            KeyPolicy::Uniform => None,
        }
    }
}

/// `N` traces of `n` samples each, with their acquisition records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Row-major `N x n` samples.
    pub traces: Vec<f64>,
    pub records: Vec<AcquisitionRecord>,
    pub leakage: LeakageModel,
    pub trace_len: usize,
    pub key_policy: KeyPolicy,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("trace of {len} samples exceeds the length cap of {cap}")]
    TraceTooLong { len: usize, cap: usize },
    #[error("campaign count must be at least 1")]
    EmptyCampaign,
    #[error("need at least {need} traces, have {have}")]
    TooFewTraces { need: usize, have: usize },
    #[error("profiling count {count} must lie in 1..{total}")]
    BadSplit { count: usize, total: usize },
    #[error("trace has {got} samples, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error(transparent)]
    Countermeasure(#[from] CountermeasureError),
}

impl Dataset {
    pub fn new(
        traces: Vec<f64>,
        records: Vec<AcquisitionRecord>,
        leakage: LeakageModel,
        trace_len: usize,
        key_policy: KeyPolicy,
    ) -> Result<Self, DatasetError> {
        if traces.len() != records.len() * trace_len {
            return Err(DatasetError::LengthMismatch {
                expected: records.len() * trace_len,
                got: traces.len(),
            });
        }
        Ok(Dataset { traces, records, leakage, trace_len, key_policy })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn trace(&self, i: usize) -> &[f64] {
        &self.traces[i * self.trace_len..(i + 1) * self.trace_len]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.traces.chunks_exact(self.trace_len.max(1)).take(self.len())
    }

    pub fn label(&self, i: usize) -> usize {
        usize::from(self.records[i].label)
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    pub fn class_count(&self) -> usize {
        self.leakage.class_count()
    }

    /// Copy of the traces at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut traces = Vec::with_capacity(indices.len() * self.trace_len);
        let mut records = Vec::with_capacity(indices.len());
        for &i in indices {
            traces.extend_from_slice(self.trace(i));
            records.push(self.records[i]);
        }
        Dataset { traces, records, ..self.clone_header() }
    }

    /// Same dataset with every trace replaced by `f(index, trace)`.
    pub fn map_traces(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<Dataset, DatasetError> {
        let mut traces = Vec::with_capacity(self.traces.len());
        for (i, row) in self.rows().enumerate() {
            let new = f(i, row);
            if new.len() != self.trace_len {
                return Err(DatasetError::LengthMismatch { expected: self.trace_len, got: new.len() });
            }
            traces.extend_from_slice(&new);
        }
        Ok(Dataset { traces, records: self.records.clone(), ..self.clone_header() })
    }

    /// Relabel every record under another leakage model.
    pub fn relabel(&self, leakage: LeakageModel) -> Dataset {
        let records = self.records.iter().map(|r| AcquisitionRecord::new(r.plaintext, r.key, &leakage)).collect();
        Dataset { traces: self.traces.clone(), records, leakage, ..self.clone_header() }
    }

    fn clone_header(&self) -> Dataset {
        Dataset {
            traces: Vec::new(),
            records: Vec::new(),
            leakage: self.leakage,
            trace_len: self.trace_len,
            key_policy: self.key_policy,
        }
    }
}

/// Seeded, disjoint and exhaustive partition into profiling and attack sets.
pub fn split(dataset: &Dataset, profiling_count: usize, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
    if profiling_count == 0 || profiling_count >= dataset.len() {
        return Err(DatasetError::BadSplit { count: profiling_count, total: dataset.len() });
    }
    let order = shuffled_indices(dataset.len(), seed);
    let (prof, att) = order.split_at(profiling_count);
    Ok((dataset.subset(prof), dataset.subset(att)))
}

/// `0..n` in a seed-determined order.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::seed::rng_for(seed, "shuffle", n as u64));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::LeakageKind;
    use alloc::vec;

    pub(crate) fn toy(n_traces: usize, len: usize) -> Dataset {
        let leakage = LeakageModel::new(LeakageKind::Lsb, 2);
        let mut traces = Vec::new();
        let mut records = Vec::new();
        for i in 0..n_traces {
            traces.extend((0..len).map(|j| (i * len + j) as f64));
            let mut p = [0u8; 16];
            p[2] = i as u8;
            records.push(AcquisitionRecord::new(p, [0; 16], &leakage));
        }
        Dataset::new(traces, records, leakage, len, KeyPolicy::Fixed([0; 16])).unwrap()
    }

    #[test]
    fn split_sizes_and_partition() {
        let d = toy(60, 2);
        let (p, a) = split(&d, 50, 9).unwrap();
        assert_eq!((p.len(), a.len()), (50, 10));
        let mut firsts: Vec<u64> = p.rows().chain(a.rows()).map(|r| r[0] as u64).collect();
        firsts.sort_unstable();
        assert_eq!(firsts, (0..60).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_seed_deterministic() {
        let d = toy(30, 3);
        assert_eq!(split(&d, 20, 1).unwrap(), split(&d, 20, 1).unwrap());
        assert_ne!(split(&d, 20, 1).unwrap().0, split(&d, 20, 2).unwrap().0);
    }

    #[test]
    fn split_rejects_out_of_range() {
        let d = toy(5, 1);
        assert!(matches!(split(&d, 5, 0), Err(DatasetError::BadSplit { .. })));
        assert!(matches!(split(&d, 0, 0), Err(DatasetError::BadSplit { .. })));
    }

    #[test]
    fn records_and_rows_line_up() {
        let d = toy(4, 3);
        assert_eq!(d.trace(2), &[6.0, 7.0, 8.0]);
        let s = d.subset(&[3, 1]);
        assert_eq!(s.traces, vec![9.0, 10.0, 11.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.records[0], d.records[3]);
        assert!(Dataset::new(vec![0.0; 5], d.records.clone(), d.leakage, 3, d.key_policy).is_err());
    }
}
