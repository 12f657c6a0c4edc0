//! Simulated side-channel lab: a leaky 8-bit device running AES, profiled
//! attackers, one-pixel adversarial perturbations, and a noise-insertion
//! countermeasure built from them.
#![no_std]
extern crate alloc;

pub mod adversarial;
pub mod aes;
pub mod classifiers;
pub mod countermeasure;
pub mod dataset;
pub mod evaluation;
pub mod seed;
pub mod stats;
pub mod template;
pub mod vm;
