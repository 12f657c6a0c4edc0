use alloc::boxed::Box;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::scores::{rank_of, KeyHypothesisMap, CONFIDENCE_FLOOR};
use super::EvaluationError;
use crate::aes::Block;
use crate::classifiers::{accuracy_of, Classifier, ClassifierError};
use crate::dataset::{shuffled_indices, split, standardize, Dataset};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub repetitions: usize,
    pub profiling_count: usize,
    pub m_max: usize,
    pub seed: u64,
    /// Train a fresh model on a fresh split for every repetition; otherwise
    /// train once and only reshuffle the attack traces.
    pub retrain: bool,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig { repetitions: 10, profiling_count: 10_000, m_max: 1000, seed: 0, retrain: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCurve {
    /// Mean rank at `M = index + 1`.
    pub mean: Vec<f64>,
    /// `ranks[rep][M - 1]`.
    pub ranks: Vec<Vec<u16>>,
    /// Attack-set accuracy of each repetition's model.
    pub accuracy: Vec<f64>,
}

impl RankCurve {
    pub fn m_max(&self) -> usize {
        self.mean.len()
    }

    /// Smallest `M` from which the mean rank stays at zero.
    pub fn rank_zero_m(&self) -> Option<usize> {
        let tail = self.mean.iter().rev().take_while(|&&r| r == 0.0).count();
        (tail > 0).then(|| self.mean.len() - tail + 1)
    }

    /// Mean rank at `m`, clamped to the curve's end.
    pub fn mean_at(&self, m: usize) -> f64 {
        self.mean[m.clamp(1, self.mean.len()) - 1]
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.accuracy.iter().sum::<f64>() / self.accuracy.len().max(1) as f64
    }
}

/// Rank of `true_key` after each of the first `m_max` traces, in the given
/// order.
pub fn rank_trajectory(predictions: &[Vec<f64>], map: &KeyHypothesisMap, true_key: u8, m_max: usize) -> Vec<u16> {
    let mut scores = [0.0f64; 256];
    let mut out = Vec::with_capacity(m_max);
    for (i, d) in predictions.iter().take(m_max).enumerate() {
        let logs: Vec<f64> = d.iter().map(|&c| libm::log(c.max(CONFIDENCE_FLOOR))).collect();
        for (k, s) in scores.iter_mut().enumerate() {
            *s += logs[map.class(i, k as u8)];
        }
        out.push(rank_of(&scores, usize::from(true_key)) as u16);
    }
    out
}

pub type Trainer<'a> = dyn FnMut(&Dataset, usize) -> Result<Box<dyn Classifier>, ClassifierError> + 'a;

/// Mean rank of the true key byte over repeated profiling/attack splits of
/// one fixed-key pool. Each split is standardized with its profiling half.
pub fn mean_rank_curve(pool: &Dataset, trainer: &mut Trainer<'_>, cfg: &CurveConfig) -> Result<RankCurve, EvaluationError> {
    if cfg.repetitions == 0 {
        return Err(EvaluationError::NoRepetitions);
    }
    let key: Block = pool.records.first().ok_or(EvaluationError::MixedKeys)?.key;
    if pool.records.iter().any(|r| r.key != key) {
        return Err(EvaluationError::MixedKeys);
    }
    let true_key = key[pool.leakage.byte_index as usize];
    let attack_len = pool.len().saturating_sub(cfg.profiling_count);
    if attack_len < cfg.m_max {
        return Err(EvaluationError::TooFewAttackTraces { need: cfg.m_max, have: attack_len });
    }

    let mut ranks = Vec::with_capacity(cfg.repetitions);
    let mut accuracy = Vec::with_capacity(cfg.repetitions);
    let mut cached: Option<(Box<dyn Classifier>, Dataset, Vec<Vec<f64>>, f64)> = None;
    for rep in 0..cfg.repetitions {
        if cfg.retrain || cached.is_none() {
            let (profiling, attack) = split(pool, cfg.profiling_count, derive_seed(cfg.seed, "split", rep as u64))?;
            let (profiling, stats) = standardize(&profiling)?;
            let attack = stats.apply(&attack)?;
            let model = trainer(&profiling, rep)?;
            let predictions = model.predict_all(&attack)?;
            let acc = accuracy_of(model.as_ref(), &attack)?;
            cached = Some((model, attack, predictions, acc));
        }
        let (_, attack, predictions, acc) = cached.as_ref().expect("filled above");
        let order = shuffled_indices(attack.len(), derive_seed(cfg.seed, "order", rep as u64));
        let chosen: Vec<usize> = order.into_iter().take(cfg.m_max).collect();
        let plaintexts: Vec<Block> = chosen.iter().map(|&i| attack.records[i].plaintext).collect();
        let preds: Vec<Vec<f64>> = chosen.iter().map(|&i| predictions[i].clone()).collect();
        let map = KeyHypothesisMap::new(&plaintexts, &attack.leakage);
        ranks.push(rank_trajectory(&preds, &map, true_key, cfg.m_max));
        accuracy.push(*acc);
    }
    let mean = (0..cfg.m_max)
        .map(|j| ranks.iter().map(|r| f64::from(r[j])).sum::<f64>() / ranks.len() as f64)
        .collect();
    Ok(RankCurve { mean, ranks, accuracy })
}
