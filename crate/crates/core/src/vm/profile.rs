use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::asm::Program;
use super::isa::Instruction;
use super::machine::{execute_logged, DeviceConfig, ExecError, Memory};
use crate::dataset::StandardizationStats;
use crate::seed::derive_seed;
use crate::stats::mean_sd;

/// Mean and spread of an instruction's standardized amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeProfile {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("insertion position {position} outside program of {len} instructions")]
    BadPosition { position: usize, len: usize },
    #[error("inserted instruction is not inside the capture window")]
    NotCaptured,
    #[error("standardization statistics cover {have} samples, instruction reaches sample {need}")]
    StatsDoNotCover { have: usize, need: usize },
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Baseline program and statistics an instruction is profiled against.
#[derive(Debug, Clone, Copy)]
pub struct ProfileContext<'a> {
    pub program: &'a Program,
    pub memory: &'a Memory,
    pub config: &'a DeviceConfig,
    pub stats: &'a StandardizationStats,
}

/// Returns `program` with `instr` inserted in front of `instructions[position]`.
pub fn with_inserted(program: &Program, position: usize, instr: Instruction) -> Program {
    let mut instructions = Vec::with_capacity(program.len() + 1);
    instructions.extend_from_slice(&program.instructions[..position]);
    instructions.push(instr);
    instructions.extend_from_slice(&program.instructions[position..]);
    Program { instructions, annotations: Vec::new(), source_text: Default::default() }
}

/// Standardized amplitude produced by `instr` when placed in front of
/// `instructions[position]` of the context program.
///
/// Each repetition runs with its own noise seed; the amplitude of a run is the
/// mean of `(x_s - mean_s) / sd_s` over the samples `s` the inserted
/// instruction occupies, using the baseline program's statistics.
pub fn measure_instruction_profile(
    instr: Instruction,
    ctx: ProfileContext<'_>,
    position: usize,
    repetitions: usize,
) -> Result<AmplitudeProfile, ProfileError> {
    if position > ctx.program.len() {
        return Err(ProfileError::BadPosition { position, len: ctx.program.len() });
    }
    if repetitions == 0 {
        return Err(ProfileError::NoRepetitions);
    }
    let probe = with_inserted(ctx.program, position, instr);
    let mut deltas = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let config = ctx.config.with_seed(derive_seed(ctx.config.rng_seed, "profile", rep as u64));
        let (trace, _, log) = execute_logged(&probe, ctx.memory, &config)?;
        let start = log[position].window_sample.ok_or(ProfileError::NotCaptured)?;
        let width = instr.cycles() as usize * config.samples_per_cycle as usize;
        let end = start + width;
        if end > trace.len() {
            return Err(ProfileError::NotCaptured);
        }
        if end > ctx.stats.len() {
            return Err(ProfileError::StatsDoNotCover { have: ctx.stats.len(), need: end });
        }
        let sum: f64 = (start..end).map(|s| ctx.stats.standardize_sample(s, trace.samples[s])).sum();
        deltas.push(sum / width as f64);
    }
    let (mean, sd) = mean_sd(&deltas);
    Ok(AmplitudeProfile { mean, sd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::asm::assemble;
    use alloc::vec;

    fn flat_stats(n: usize) -> StandardizationStats {
        StandardizationStats::new(vec![0.0; n], vec![1.0; n])
    }

    fn ctx_parts() -> (Program, Memory, DeviceConfig, StandardizationStats) {
        let program = assemble("trigger_high\nnop\nnop\nnop\ntrigger_low").unwrap();
        let config = DeviceConfig { noise_sigma: 0.0, ..DeviceConfig::default() };
        (program, Memory::new(), config, flat_stats(64))
    }

    #[test]
    fn all_ones_immediate_beats_nop() {
        let (program, memory, config, stats) = ctx_parts();
        let ctx = ProfileContext { program: &program, memory: &memory, config: &config, stats: &stats };
        let ldi = assemble("ldi r24, 0xff").unwrap().instructions[0];
        let hi = measure_instruction_profile(ldi, ctx, 2, 1).unwrap();
        let nop = measure_instruction_profile(Instruction::Nop, ctx, 2, 1).unwrap();
        assert_eq!(hi.mean, 8.0);
        assert_eq!(nop.mean, 0.0);
        assert!(hi.mean > nop.mean);
        assert_eq!(hi.sd, 0.0);
    }

    #[test]
    fn zero_immediate_matches_baseline_contribution() {
        let (program, memory, _, _) = ctx_parts();
        let config = DeviceConfig { noise_sigma: 0.0, baseline: 1.5, ..DeviceConfig::default() };
        let stats = StandardizationStats::new(vec![0.5; 64], vec![2.0; 64]);
        let ctx = ProfileContext { program: &program, memory: &memory, config: &config, stats: &stats };
        let ldi0 = assemble("ldi r24, 0x00").unwrap().instructions[0];
        let p = measure_instruction_profile(ldi0, ctx, 1, 3).unwrap();
        // HW(0) = 0, so only the baseline is left: (1.5 - 0.5) / 2.0
        assert_eq!(p.mean, 0.5);
        assert_eq!(p.sd, 0.0);
    }

    #[test]
    fn noisy_repetitions_spread() {
        let (program, memory, _, stats) = ctx_parts();
        let config = DeviceConfig::default();
        let ctx = ProfileContext { program: &program, memory: &memory, config: &config, stats: &stats };
        let ldi = assemble("ldi r24, 0xff").unwrap().instructions[0];
        let p = measure_instruction_profile(ldi, ctx, 3, 200).unwrap();
        assert!((p.mean - 8.0).abs() < 0.2, "{p:?}");
        // three samples per cycle, sigma 1 => sd of their mean is 1/sqrt(3)
        assert!((p.sd - 1.0 / 3f64.sqrt()).abs() < 0.1, "{p:?}");
    }

    #[test]
    fn stats_must_cover_the_instruction() {
        let (program, memory, config, _) = ctx_parts();
        let stats = flat_stats(4);
        let ctx = ProfileContext { program: &program, memory: &memory, config: &config, stats: &stats };
        let err = measure_instruction_profile(Instruction::Nop, ctx, 3, 1).unwrap_err();
        assert_eq!(err, ProfileError::StatsDoNotCover { have: 4, need: 9 });
    }

    #[test]
    fn position_outside_window() {
        let (program, memory, config, stats) = ctx_parts();
        let ctx = ProfileContext { program: &program, memory: &memory, config: &config, stats: &stats };
        assert_eq!(measure_instruction_profile(Instruction::Nop, ctx, 0, 1), Err(ProfileError::NotCaptured));
        assert!(matches!(
            measure_instruction_profile(Instruction::Nop, ctx, 9, 1),
            Err(ProfileError::BadPosition { .. })
        ));
    }
}
