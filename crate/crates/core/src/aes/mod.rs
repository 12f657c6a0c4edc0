//! AES-128 reference oracle, first-round VM program generation and
//! leakage-model labelling.

pub mod leakage;
pub mod program;
pub mod reference;

pub use leakage::{label_of, AcquisitionRecord, LeakageKind, LeakageModel};
pub use program::{device_memory, first_round_program, round_output, RoundProgramOptions};
pub use reference::{aes128_encrypt, first_round_state, sbox, Block};
