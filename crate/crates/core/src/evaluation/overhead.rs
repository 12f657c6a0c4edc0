use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::countermeasure::ProtectedProgram;
use crate::dataset::{acquire, Campaign, DatasetError, KeyPolicy, Target};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub variant: String,
    pub min: u64,
    pub avg: f64,
    pub max: u64,
}

/// Cycle count statistics of `runs` executions of each variant on random
/// inputs; protected variants are recompiled before every run.
pub fn execution_overhead(variants: &[(&str, Target<'_>)], runs: usize, seed: u64) -> Result<Vec<OverheadRow>, DatasetError> {
    variants
        .iter()
        .enumerate()
        .map(|(i, (name, target))| {
            let mut campaign = Campaign::new(runs, KeyPolicy::Uniform, derive_seed(seed, "overhead", i as u64));
            campaign.config.noise_sigma = 0.0;
            campaign.length_cap = usize::MAX;
            let cycles = acquire(*target, &campaign)?.cycle_counts;
            Ok(OverheadRow {
                variant: String::from(*name),
                min: cycles.iter().copied().min().unwrap_or(0),
                avg: cycles.iter().sum::<u64>() as f64 / cycles.len() as f64,
                max: cycles.iter().copied().max().unwrap_or(0),
            })
        })
        .collect()
}

/// Largest possible spread `max - min` of a protected program's cycle count.
pub fn analytic_spread(protected: &ProtectedProgram) -> u64 {
    let slots = protected.slot_count() as u64;
    let longest = protected.noise.iter().map(|i| u64::from(i.cycles())).max().unwrap_or(0);
    let shortest = protected.noise.iter().map(|i| u64::from(i.cycles())).min().unwrap_or(0);
    slots * (u64::from(protected.policy.max_omega()) * longest - u64::from(protected.policy.min_omega()) * shortest)
}
