use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::curve::{mean_rank_curve, CurveConfig, RankCurve, Trainer};
use super::EvaluationError;
use crate::adversarial::{mine_perturbations, AttackConfig};
use crate::classifiers::Classifier;
use crate::dataset::{Dataset, StandardizationStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveStudyReport {
    pub source: RankCurve,
    pub adversarial: RankCurve,
    /// Share of traces whose conversion met the termination goal.
    pub conversion_success: f64,
    /// Share whose conversion met the goal or flipped the decision.
    pub conversion_effective: f64,
}

/// Converts every trace of `pool` to its one-pixel adversarial version,
/// back in raw units; also returns the success and effective rates.
pub fn convert_pool<C: Classifier>(
    source_model: &C,
    pool: &Dataset,
    stats: &StandardizationStats,
    attack: &AttackConfig,
) -> Result<(Dataset, f64, f64), EvaluationError> {
    let standardized = stats.apply(pool)?;
    let set = mine_perturbations(source_model, &standardized, attack)?;
    let converted = pool.map_traces(|i, raw| {
        let p = &set.perturbations[i];
        let mut t: Vec<f64> = raw.to_vec();
        t[p.position] = p.amplitude * stats.sd[p.position] + stats.mean[p.position];
        t
    })?;
    Ok((converted, set.success_rate(), set.effective_rate()))
}

/// Turns every trace of `pool` into its one-pixel adversarial version against
/// `source_model`, retrains the attacker on the converted traces, and reports
/// rank curves for the original and converted pools side by side.
///
/// `stats` standardizes raw traces for the source model; converted traces
/// are mapped back to raw units so both pools go through the same protocol.
pub fn naive_adversarial_study<C: Classifier>(
    source_model: &C,
    pool: &Dataset,
    stats: &StandardizationStats,
    attack: &AttackConfig,
    trainer: &mut Trainer<'_>,
    cfg: &CurveConfig,
) -> Result<NaiveStudyReport, EvaluationError> {
    let (converted, conversion_success, conversion_effective) = convert_pool(source_model, pool, stats, attack)?;
    let source = mean_rank_curve(pool, trainer, cfg)?;
    let adversarial = mean_rank_curve(&converted, trainer, cfg)?;
    Ok(NaiveStudyReport { source, adversarial, conversion_success, conversion_effective })
}
