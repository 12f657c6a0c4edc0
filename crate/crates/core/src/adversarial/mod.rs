//! One-pixel adversarial attacks by differential evolution, and the
//! histograms used to read universal perturbations out of them.

mod de;
mod histogram;
mod pixel;

pub use de::{differential_evolution, evolve, DeConfig, DeOutcome};
pub use histogram::{amplitude_histogram, position_histogram, AmplitudeHistogram, AMPLITUDE_BINS};
pub use pixel::{
    empirical_range, mine_observed, mine_perturbations, one_pixel_attack, transfer_rate, AttackConfig, Perturbation,
    PerturbationSet, Termination,
};
