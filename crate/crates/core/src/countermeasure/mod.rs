//! Noise-insertion defense: find where the attackers look, find instructions
//! that look like their perturbations, and splice them in at compile time.

mod insert;
mod locate;
mod select;

use alloc::vec::Vec;

use thiserror::Error;

use crate::vm::{AsmError, ExecError, ProfileError};

pub use insert::{draw_plan, insert_noise, InsertionPolicy, ProtectedProgram};
pub use locate::{annotate, locate_insertion_points, InsertionPoint, LocateOptions, ProbeStep};
pub use select::{
    candidate_pool, select_noise_instructions, select_target_intervals, Interval, NoiseCandidate, NoiseSet,
    TargetIntervals,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CountermeasureError {
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("target sample {target} is beyond the end of the capture window")]
    Unreachable { target: usize },
    #[error("noise set is empty")]
    EmptyNoiseSet,
    #[error("insertion policy has no multiplicities")]
    EmptyPolicy,
    #[error("annotated slots {annotated:?} do not match insertion points {points:?}")]
    SlotMismatch { annotated: Vec<usize>, points: Vec<usize> },
    #[error("no amplitude histograms with any mass")]
    NoHistograms,
    #[error("amplitude histograms do not share binning")]
    BinningMismatch,
    #[error("nothing to select: {candidates} candidates, no target intervals or insertion points")]
    NothingSelected { candidates: usize },
}
