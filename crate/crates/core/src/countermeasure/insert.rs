//! Compile-time noise insertion.
//!
//! Each `;@noise-slot` annotation independently draws a multiplicity `ω`
//! from the policy domain and splices `ω` noise instructions, drawn uniformly
//! with replacement from the noise set, in front of the annotated
//! instruction. A fresh invocation seed yields a fresh splice.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CountermeasureError, InsertionPoint};
use crate::seed::rng_for;
use crate::vm::{assemble, Instruction, Program, NOISE_SLOT_TAG};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionPolicy {
    /// Multiplicities drawn uniformly per slot.
    pub omega: Vec<u32>,
}

impl Default for InsertionPolicy {
    fn default() -> Self {
        InsertionPolicy { omega: alloc::vec![0, 1, 2] }
    }
}

impl InsertionPolicy {
    pub fn max_omega(&self) -> u32 {
        self.omega.iter().copied().max().unwrap_or(0)
    }

    pub fn min_omega(&self) -> u32 {
        self.omega.iter().copied().min().unwrap_or(0)
    }
}

/// Indices into the noise set to splice at each slot, for one invocation.
pub fn draw_plan(
    slots: usize,
    noise_len: usize,
    policy: &InsertionPolicy,
    seed: u64,
) -> Result<Vec<Vec<usize>>, CountermeasureError> {
    if policy.omega.is_empty() {
        return Err(CountermeasureError::EmptyPolicy);
    }
    if noise_len == 0 && policy.max_omega() > 0 {
        return Err(CountermeasureError::EmptyNoiseSet);
    }
    let mut rng = rng_for(seed, "insert", 0);
    Ok((0..slots)
        .map(|_| {
            let omega = policy.omega[rng.random_range(0..policy.omega.len())];
            (0..omega).map(|_| rng.random_range(0..noise_len)).collect()
        })
        .collect())
}

fn check_slots(slots: &[usize], points: &[InsertionPoint]) -> Result<(), CountermeasureError> {
    let expected: Vec<usize> = points.iter().map(InsertionPoint::slot).collect();
    let mut sorted = expected.clone();
    sorted.sort_unstable();
    if slots != sorted.as_slice() {
        return Err(CountermeasureError::SlotMismatch { annotated: slots.to_vec(), points: expected });
    }
    Ok(())
}

/// Splices noise into the annotated source text, returning protected source.
pub fn insert_noise(
    annotated_source: &str,
    points: &[InsertionPoint],
    noise: &[Instruction],
    policy: &InsertionPolicy,
    invocation_seed: u64,
) -> Result<String, CountermeasureError> {
    let annotated = assemble(annotated_source)?;
    check_slots(&annotated.noise_slots(), points)?;
    let plan = draw_plan(annotated.noise_slots().len(), noise.len(), policy, invocation_seed)?;

    let mut out = String::with_capacity(annotated_source.len() + 64);
    let mut slot = 0;
    for line in annotated_source.lines() {
        out.push_str(line);
        out.push('\n');
        if line.trim() == NOISE_SLOT_TAG {
            for &k in &plan[slot] {
                let _ = writeln!(out, "{}", noise[k]);
            }
            slot += 1;
        }
    }
    Ok(out)
}

/// Annotated program ready to be recompiled before every invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectedProgram {
    pub annotated: Program,
    pub points: Vec<InsertionPoint>,
    pub noise: Vec<Instruction>,
    pub policy: InsertionPolicy,
}

impl ProtectedProgram {
    pub fn new(
        annotated_source: &str,
        points: Vec<InsertionPoint>,
        noise: Vec<Instruction>,
        policy: InsertionPolicy,
    ) -> Result<Self, CountermeasureError> {
        let annotated = assemble(annotated_source)?;
        check_slots(&annotated.noise_slots(), &points)?;
        draw_plan(0, noise.len(), &policy, 0)?;
        Ok(ProtectedProgram { annotated, points, noise, policy })
    }

    pub fn annotated_source(&self) -> &str {
        &self.annotated.source_text
    }

    /// Protected program for one invocation; instruction-for-instruction the
    /// same as assembling [`insert_noise`]'s output for the same seed.
    pub fn compile(&self, invocation_seed: u64) -> Result<Program, CountermeasureError> {
        let slots = self.annotated.noise_slots();
        let plan = draw_plan(slots.len(), self.noise.len(), &self.policy, invocation_seed)?;
        let extra: usize = plan.iter().map(Vec::len).sum();
        let mut instructions = Vec::with_capacity(self.annotated.len() + extra);
        let mut next = 0;
        for (slot, picks) in slots.iter().zip(&plan) {
            instructions.extend_from_slice(&self.annotated.instructions[next..*slot]);
            instructions.extend(picks.iter().map(|&k| self.noise[k]));
            next = *slot;
        }
        instructions.extend_from_slice(&self.annotated.instructions[next..]);
        Ok(Program { instructions, annotations: Vec::new(), source_text: String::new() })
    }

    /// Source text of one invocation.
    pub fn protected_source(&self, invocation_seed: u64) -> Result<String, CountermeasureError> {
        insert_noise(self.annotated_source(), &self.points, &self.noise, &self.policy, invocation_seed)
    }

    pub fn slot_count(&self) -> usize {
        self.points.len()
    }

    pub fn noise_listing(&self) -> Vec<String> {
        self.noise.iter().map(ToString::to_string).collect()
    }
}
