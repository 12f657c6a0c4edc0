use alloc::borrow::Cow;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, DatasetError, KeyPolicy};
use crate::aes::program::{load_tables, set_inputs};
use crate::aes::{AcquisitionRecord, Block, LeakageModel};
use crate::countermeasure::ProtectedProgram;
use crate::seed::{derive_seed, rng_for};
use crate::vm::{execute, DeviceConfig, Memory, Program};

/// Program run by a campaign.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Fixed(&'a Program),
    /// Annotated source plus insertion policy; compiled per run when the
    /// campaign asks for it, otherwise once.
    Protected(&'a ProtectedProgram),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub count: usize,
    pub key_policy: KeyPolicy,
    pub leakage: LeakageModel,
    pub config: DeviceConfig,
    pub recompile_each_run: bool,
    /// Fixed trace length `n`; defaults to the longest captured trace.
    pub trace_len: Option<usize>,
    /// Longest capture accepted.
    pub length_cap: usize,
    pub seed: u64,
}

impl Campaign {
    pub fn new(count: usize, key_policy: KeyPolicy, seed: u64) -> Self {
        Campaign {
            count,
            key_policy,
            leakage: LeakageModel::default(),
            config: DeviceConfig::default(),
            recompile_each_run: true,
            trace_len: None,
            length_cap: 8192,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub dataset: Dataset,
    /// Captured length of every trace before padding.
    pub raw_lengths: Vec<usize>,
    /// Total cycles of every run.
    pub cycle_counts: Vec<u64>,
}

/// Runs the target `campaign.count` times with fresh random plaintexts.
///
/// Samples are kept at single precision, as a scope would deliver them.
/// Traces shorter than `n` are padded with baseline-plus-noise samples.
pub fn acquire(target: Target<'_>, campaign: &Campaign) -> Result<Acquisition, DatasetError> {
    if campaign.count == 0 {
        return Err(DatasetError::EmptyCampaign);
    }
    campaign.config.validate()?;
    let mut base = Memory::new();
    load_tables(&mut base);
    let mut inputs = rng_for(campaign.seed, "inputs", 0);

    let once: Option<Program> = match target {
        Target::Protected(p) if !campaign.recompile_each_run => {
            Some(p.compile(derive_seed(campaign.seed, "compile", 0))?)
        }
        _ => None,
    };

    let mut raw = Vec::with_capacity(campaign.count);
    let mut records = Vec::with_capacity(campaign.count);
    let mut cycle_counts = Vec::with_capacity(campaign.count);
    for run in 0..campaign.count as u64 {
        let plaintext: Block = inputs.random();
        let key = match campaign.key_policy {
            KeyPolicy::Fixed(k) => k,
            KeyPolicy::Uniform => inputs.random(),
        };
        let program: Cow<'_, Program> = match (target, &once) {
            (Target::Fixed(p), _) => Cow::Borrowed(p),
            (Target::Protected(_), Some(p)) => Cow::Borrowed(p),
            (Target::Protected(p), None) => Cow::Owned(p.compile(derive_seed(campaign.seed, "compile", run))?),
        };
        let mut memory = base.clone();
        set_inputs(&mut memory, &plaintext, &key);
        let config = campaign.config.with_seed(derive_seed(campaign.seed, "noise", run));
        let (trace, _) = execute(&program, &memory, &config)?;
        raw.push(trace.samples.into_iter().map(quantize).collect::<Vec<_>>());
        cycle_counts.push(trace.cycle_count);
        records.push(AcquisitionRecord::new(plaintext, key, &campaign.leakage));
    }

    let longest = raw.iter().map(Vec::len).max().unwrap_or(0);
    let n = campaign.trace_len.unwrap_or(longest);
    let cap = campaign.length_cap.min(n);
    if longest > cap {
        return Err(DatasetError::TraceTooLong { len: longest, cap });
    }

    let pad_noise = (campaign.config.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, campaign.config.noise_sigma).expect("validated sigma"));
    let level = campaign.config.level(0);
    let mut traces = Vec::with_capacity(n * campaign.count);
    let mut raw_lengths = Vec::with_capacity(campaign.count);
    for (run, samples) in raw.into_iter().enumerate() {
        raw_lengths.push(samples.len());
        let missing = n - samples.len();
        traces.extend(samples);
        let mut rng = rng_for(campaign.seed, "pad", run as u64);
        traces.extend((0..missing).map(|_| quantize(level + pad_noise.as_ref().map_or(0.0, |d| d.sample(&mut rng)))));
    }

    let dataset = Dataset::new(traces, records, campaign.leakage, n, campaign.key_policy)?;
    Ok(Acquisition { dataset, raw_lengths, cycle_counts })
}

fn quantize(x: f64) -> f64 {
    x as f32 as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::{first_round_program, RoundProgramOptions};
    use crate::vm::assemble;

    fn aes() -> Program {
        assemble(&first_round_program(&RoundProgramOptions::default())).unwrap()
    }

    #[test]
    fn fixed_key_policy_shares_the_key() {
        let key = [7u8; 16];
        let acq = acquire(Target::Fixed(&aes()), &Campaign::new(10, KeyPolicy::Fixed(key), 1)).unwrap();
        let d = &acq.dataset;
        assert_eq!(d.len(), 10);
        assert!(d.records.iter().all(|r| r.key == key));
        let mut pts: Vec<_> = d.records.iter().map(|r| r.plaintext).collect();
        pts.sort_unstable();
        pts.dedup();
        assert_eq!(pts.len(), 10);
    }

    #[test]
    fn noiseless_fixed_inputs_give_identical_traces() {
        // plaintexts vary per run, so pin them through a one-byte program
        let program = assemble("trigger_high\nld r1, [0x0010]\nldi r2, 0x0f\ntrigger_low").unwrap();
        let mut campaign = Campaign::new(10, KeyPolicy::Fixed([0xaa; 16]), 3);
        campaign.config.noise_sigma = 0.0;
        let d = acquire(Target::Fixed(&program), &campaign).unwrap().dataset;
        let first = d.trace(0).to_vec();
        assert!(d.rows().all(|r| r == first.as_slice()));
        assert_eq!(first, [4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, -10.0, -10.0, -10.0]);
    }

    #[test]
    fn campaigns_are_reproducible() {
        let c = Campaign::new(4, KeyPolicy::Uniform, 11);
        let a = acquire(Target::Fixed(&aes()), &c).unwrap();
        let b = acquire(Target::Fixed(&aes()), &c).unwrap();
        assert_eq!(a, b);
        assert!(a.dataset.traces.iter().all(|&x| x == x as f32 as f64));
    }

    #[test]
    fn labels_follow_records() {
        let d = acquire(Target::Fixed(&aes()), &Campaign::new(20, KeyPolicy::Uniform, 5)).unwrap().dataset;
        for r in &d.records {
            assert_eq!(usize::from(r.label), crate::aes::label_of(&r.plaintext, &r.key, &d.leakage));
        }
    }

    #[test]
    fn padding_and_cap() {
        let program = assemble("trigger_high\nnop\ntrigger_low").unwrap();
        let mut c = Campaign::new(2, KeyPolicy::Uniform, 0);
        c.trace_len = Some(10);
        c.config.noise_sigma = 0.0;
        let acq = acquire(Target::Fixed(&program), &c).unwrap();
        assert_eq!(acq.raw_lengths, [6, 6]);
        assert_eq!(acq.dataset.trace(0), &[0.0, 0.0, 0.0, -10.0, -10.0, -10.0, 0.0, 0.0, 0.0, 0.0]);

        c.trace_len = Some(4);
        assert!(matches!(acquire(Target::Fixed(&program), &c), Err(DatasetError::TraceTooLong { len: 6, cap: 4 })));
        c.trace_len = None;
        c.length_cap = 5;
        assert!(matches!(acquire(Target::Fixed(&program), &c), Err(DatasetError::TraceTooLong { .. })));
        c.count = 0;
        assert!(matches!(acquire(Target::Fixed(&program), &c), Err(DatasetError::EmptyCampaign)));
    }
}
