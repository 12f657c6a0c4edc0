//! Choosing amplitude targets from mined perturbations, and noise
//! instructions whose power profile hits them.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{CountermeasureError, InsertionPoint};
use crate::adversarial::AmplitudeHistogram;
use crate::vm::{measure_instruction_profile, AluOp, AmplitudeProfile, Instruction, ProfileContext, Reg, Source};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn widened(&self, margin: f64) -> Interval {
        Interval { lo: self.lo - margin, hi: self.hi + margin }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetIntervals {
    pub intervals: Vec<Interval>,
    /// Set when the models share no mode and single-model modes were used.
    pub fallback: bool,
}

fn side_interval(hists: &[AmplitudeHistogram], side: impl Fn(f64) -> bool + Copy) -> Option<(Interval, bool)> {
    let modes: Vec<(usize, f64)> = hists
        .iter()
        .filter_map(|h| h.mode_where(side).map(|b| (b, h.bin_mean(b))))
        .collect();
    let (first_bin, _) = *modes.first()?;
    let interval = if modes.iter().all(|&(b, _)| b == first_bin) {
        let (lo, hi) = hists[0].edges(first_bin);
        Interval { lo, hi }
    } else {
        let lo = modes.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
        let hi = modes.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
        Interval { lo, hi }
    };
    Some((interval, modes.len() == hists.len()))
}

/// Low- and high-amplitude target intervals spanning the modes of every
/// model's amplitude histogram.
///
/// On each sign side, every model contributes its fullest bin (valued at the
/// mean amplitude it holds) and the interval spans those values; when all
/// modes share one bin the interval is that bin.
pub fn select_target_intervals(hists: &[AmplitudeHistogram]) -> Result<TargetIntervals, CountermeasureError> {
    let Some(first) = hists.first() else {
        return Err(CountermeasureError::NoHistograms);
    };
    if hists.iter().any(|h| !h.same_binning(first)) {
        return Err(CountermeasureError::BinningMismatch);
    }
    let sides = [side_interval(hists, |x| x < 0.0), side_interval(hists, |x| x >= 0.0)];
    let shared: Vec<Interval> = sides.iter().flatten().filter(|s| s.1).map(|s| s.0).collect();
    if !shared.is_empty() {
        return Ok(TargetIntervals { intervals: shared, fallback: false });
    }
    let single: Vec<Interval> = sides.iter().flatten().map(|s| s.0).collect();
    if single.is_empty() {
        return Err(CountermeasureError::NoHistograms);
    }
    Ok(TargetIntervals { intervals: single, fallback: true })
}

/// Candidate noise instructions: the reserved register loaded with values of
/// every Hamming weight, the status-port read, and a cleared or idle cycle.
pub fn candidate_pool(scratch: Reg) -> Vec<Instruction> {
    let mut pool = alloc::vec![
        Instruction::Mov { dst: scratch, src: Source::Imm(0xff) },
        Instruction::Ori { dst: scratch, imm: 0xff },
        Instruction::Ldi { dst: scratch, imm: 0xff },
        Instruction::In { dst: scratch, port: 0x3d },
    ];
    for hw in 0..8u32 {
        let imm = ((1u16 << hw) - 1) as u8;
        pool.push(Instruction::Ldi { dst: scratch, imm });
        pool.push(Instruction::Mov { dst: scratch, src: Source::Imm(imm) });
    }
    pool.push(Instruction::Alu { op: AluOp::Eor, dst: scratch, src: scratch });
    pool.push(Instruction::Nop);
    pool
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCandidate {
    pub instruction: Instruction,
    /// Profile at every insertion point, in point order.
    pub per_point: Vec<AmplitudeProfile>,
    /// Average over points.
    pub profile: AmplitudeProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSet {
    pub members: Vec<NoiseCandidate>,
    pub rejected: Vec<NoiseCandidate>,
    pub intervals: Vec<Interval>,
    /// Intervals no candidate reached; each is served by the candidates
    /// nearest to it instead.
    pub unreached: Vec<usize>,
}

impl NoiseSet {
    pub fn instructions(&self) -> Vec<Instruction> {
        self.members.iter().map(|m| m.instruction).collect()
    }

    pub fn listing(&self) -> String {
        use core::fmt::Write as _;
        let mut out = String::new();
        for m in &self.members {
            let _ = writeln!(out, "{}", m.instruction);
        }
        out
    }
}

fn distance(i: &Interval, x: f64) -> f64 {
    if x < i.lo {
        i.lo - x
    } else if x > i.hi {
        x - i.hi
    } else {
        0.0
    }
}

/// Profiles each candidate in front of every insertion point and keeps those
/// whose averaged standardized delta falls in one of the intervals.
///
/// An interval no candidate reaches is served by the candidates closest to
/// it (all of them, when several sit at the same distance).
pub fn select_noise_instructions(
    candidates: &[Instruction],
    points: &[InsertionPoint],
    intervals: &[Interval],
    ctx: ProfileContext<'_>,
    repetitions: usize,
) -> Result<NoiseSet, CountermeasureError> {
    if points.is_empty() || intervals.is_empty() {
        return Err(CountermeasureError::NothingSelected { candidates: candidates.len() });
    }
    let mut profiled: Vec<NoiseCandidate> = Vec::new();
    for &instruction in candidates {
        if profiled.iter().any(|c| c.instruction == instruction) {
            continue;
        }
        let per_point = points
            .iter()
            .map(|p| measure_instruction_profile(instruction, ctx, p.slot(), repetitions))
            .collect::<Result<Vec<_>, _>>()?;
        let k = per_point.len() as f64;
        let profile = AmplitudeProfile {
            mean: per_point.iter().map(|p| p.mean).sum::<f64>() / k,
            sd: per_point.iter().map(|p| p.sd).sum::<f64>() / k,
        };
        profiled.push(NoiseCandidate { instruction, per_point, profile });
    }
    if profiled.is_empty() {
        return Err(CountermeasureError::NothingSelected { candidates: 0 });
    }

    let mut keep = alloc::vec![false; profiled.len()];
    let mut unreached = Vec::new();
    for (k, interval) in intervals.iter().enumerate() {
        let d: Vec<f64> = profiled.iter().map(|c| distance(interval, c.profile.mean)).collect();
        let best = d.iter().copied().fold(f64::INFINITY, f64::min);
        if best > 0.0 {
            unreached.push(k);
        }
        for (flag, &dist) in keep.iter_mut().zip(&d) {
            *flag |= dist <= best + 1e-9;
        }
    }
    let (mut members, mut rejected) = (Vec::new(), Vec::new());
    for (c, kept) in profiled.into_iter().zip(keep) {
        if kept {
            members.push(c);
        } else {
            rejected.push(c);
        }
    }
    Ok(NoiseSet { members, rejected, intervals: intervals.to_vec(), unreached })
}
