//! Insertion-point discovery by trigger probing.
//!
//! A probe `trigger_low` placed after instruction `i` ends the capture, and
//! the first sentinel sample in the trace tells where that code position
//! lands in time. Landing positions grow with `i`, so a binary search finds
//! the first position at or after each target sample.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::CountermeasureError;
use crate::vm::{disassemble, execute, Annotation, DeviceConfig, Instruction, Memory, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeStep {
    pub iteration: usize,
    pub index: usize,
    /// First sentinel sample of the probed run.
    pub observed: usize,
}

/// Code position after which noise goes, and where it lands in the trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionPoint {
    /// Noise is inserted after `instructions[index]`.
    pub index: usize,
    pub target_sample: usize,
    pub observed_sample: usize,
    pub within_tolerance: bool,
    pub probes: Vec<ProbeStep>,
}

impl InsertionPoint {
    /// Instruction index in front of which noise is spliced.
    pub fn slot(&self) -> usize {
        self.index + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocateOptions {
    /// Accepted distance between probe landing and target, in cycles.
    pub tolerance_cycles: usize,
}

impl Default for LocateOptions {
    fn default() -> Self {
        LocateOptions { tolerance_cycles: 2 }
    }
}

fn probe(program: &Program, after: usize, memory: &Memory, config: &DeviceConfig) -> Result<Option<usize>, CountermeasureError> {
    let mut instructions = Vec::with_capacity(program.len() + 1);
    instructions.extend_from_slice(&program.instructions[..=after]);
    instructions.push(Instruction::TriggerLow);
    instructions.extend_from_slice(&program.instructions[after + 1..]);
    let probed = Program { instructions, annotations: Vec::new(), source_text: String::new() };
    let (trace, _) = execute(&probed, memory, config)?;
    Ok(trace.sentinel_position(config.trigger_low_level))
}

/// Finds, for every target sample, the first code position whose probe
/// lands at or after it.
pub fn locate_insertion_points(
    program: &Program,
    targets: &[usize],
    memory: &Memory,
    config: &DeviceConfig,
    options: &LocateOptions,
) -> Result<Vec<InsertionPoint>, CountermeasureError> {
    let first = program
        .instructions
        .iter()
        .position(|i| matches!(i, Instruction::TriggerHigh))
        .unwrap_or(0);
    let end = program.instructions[first..]
        .iter()
        .position(|i| matches!(i, Instruction::TriggerLow))
        .map_or(program.len(), |p| p + first);
    if end <= first {
        return Err(CountermeasureError::Unreachable { target: targets.first().copied().unwrap_or(0) });
    }
    let last = end - 1;
    let tolerance = options.tolerance_cycles * config.samples_per_cycle as usize;

    let mut points = Vec::with_capacity(targets.len());
    for &target in targets {
        let mut probes = Vec::new();
        let landing = |index: usize, probes: &mut Vec<ProbeStep>| -> Result<usize, CountermeasureError> {
            let observed = probe(program, index, memory, config)?.ok_or(CountermeasureError::Unreachable { target })?;
            probes.push(ProbeStep { iteration: probes.len(), index, observed });
            Ok(observed)
        };

        if landing(last, &mut probes)? < target {
            return Err(CountermeasureError::Unreachable { target });
        }
        let (mut lo, mut hi) = (first, last);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if landing(mid, &mut probes)? >= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let observed = match probes.iter().find(|p| p.index == lo) {
            Some(p) => p.observed,
            None => landing(lo, &mut probes)?,
        };
        points.push(InsertionPoint {
            index: lo,
            target_sample: target,
            observed_sample: observed,
            within_tolerance: observed.abs_diff(target) <= tolerance,
            probes,
        });
    }
    Ok(points)
}

/// Program text with a `;@noise-slot` annotation after every insertion point.
pub fn annotate(program: &Program, points: &[InsertionPoint]) -> String {
    let mut slots: Vec<usize> = points.iter().map(InsertionPoint::slot).collect();
    slots.sort_unstable();
    slots.dedup();
    let mut annotated = Program {
        instructions: program.instructions.clone(),
        annotations: program.annotations.iter().filter(|a| !a.is_noise_slot()).cloned().collect(),
        source_text: String::new(),
    };
    annotated.annotations.extend(slots.into_iter().map(|index| Annotation { index, tag: "noise-slot".into() }));
    annotated.annotations.sort_by_key(|a| a.index);
    disassemble(&annotated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::assemble;
    use alloc::format;

    fn straight(nops: usize) -> Program {
        let mut src = String::from("trigger_high\n");
        for _ in 0..nops {
            src.push_str("nop\n");
        }
        src.push_str("trigger_low\n");
        assemble(&src).unwrap()
    }

    fn quiet() -> DeviceConfig {
        DeviceConfig { noise_sigma: 0.0, ..DeviceConfig::default() }
    }

    #[test]
    fn arithmetic_oracle_for_unit_cycles() {
        let p = straight(40);
        let pts = locate_insertion_points(&p, &[30, 0], &Memory::new(), &quiet(), &LocateOptions::default()).unwrap();
        assert_eq!(pts[0].index, 10);
        assert_eq!(pts[0].observed_sample, 30);
        assert_eq!(pts[1].index, 0);
        assert_eq!(pts[1].observed_sample, 0);
        assert!(pts.iter().all(|p| p.within_tolerance));
        // log is a real binary search: far fewer probes than instructions
        assert!(pts[0].probes.len() <= 8, "{:?}", pts[0].probes);
    }

    #[test]
    fn non_aligned_targets_round_up() {
        let p = straight(40);
        for target in 0..120 {
            let pt = &locate_insertion_points(&p, &[target], &Memory::new(), &quiet(), &LocateOptions::default()).unwrap()[0];
            assert_eq!(pt.index, target.div_ceil(3), "target {target}");
            assert!(pt.observed_sample >= target && pt.observed_sample - target < 3);
        }
    }

    #[test]
    fn monotone_targets_give_monotone_indices() {
        let src = format!("ldi r1, 1\ntrigger_high\n{}trigger_low\n", "ld r2, [0x0000]\nnop\n".repeat(20));
        let p = assemble(&src).unwrap();
        let targets = [5, 17, 40, 41, 88];
        let pts = locate_insertion_points(&p, &targets, &Memory::new(), &quiet(), &LocateOptions::default()).unwrap();
        assert!(pts.windows(2).all(|w| w[0].index <= w[1].index));
        for pt in &pts {
            assert!(pt.observed_sample >= pt.target_sample);
            assert!(pt.within_tolerance);
        }
    }

    #[test]
    fn probe_soundness() {
        // re-running the probed program puts the sentinel where the point says
        let src = format!("trigger_high\n{}trigger_low\n", "ld r2, [0x0000]\neor r2, r2\n".repeat(10));
        let p = assemble(&src).unwrap();
        let cfg = DeviceConfig::default();
        let pts = locate_insertion_points(&p, &[13, 50], &Memory::new(), &cfg, &LocateOptions::default()).unwrap();
        for pt in pts {
            assert_eq!(probe(&p, pt.index, &Memory::new(), &cfg).unwrap(), Some(pt.observed_sample));
        }
    }

    #[test]
    fn unreachable_target() {
        let p = straight(4);
        let err = locate_insertion_points(&p, &[100], &Memory::new(), &quiet(), &LocateOptions::default()).unwrap_err();
        assert!(matches!(err, CountermeasureError::Unreachable { target: 100 }));
    }

    #[test]
    fn annotation_lands_after_the_point() {
        let p = straight(5);
        let pts = locate_insertion_points(&p, &[6], &Memory::new(), &quiet(), &LocateOptions::default()).unwrap();
        let text = annotate(&p, &pts);
        let again = assemble(&text).unwrap();
        assert_eq!(again.instructions, p.instructions);
        assert_eq!(again.noise_slots(), [pts[0].slot()]);
    }
}
