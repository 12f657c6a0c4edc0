//! Code generation for the first AES round on the toy machine.
//!
//! Memory layout used by the generated program:
//!
//! | address  | contents                                    |
//! |----------|---------------------------------------------|
//! | `0x0000` | plaintext (16 bytes)                        |
//! | `0x0010` | key (16 bytes)                              |
//! | `0x0020` | round-one output state (16 bytes)           |
//! | `0x0030` | SubBytes + ShiftRows scratch (16 bytes)     |
//! | `0x0100` | S-box table (256 bytes)                     |
//! | `0x0200` | xtime reduction mask table (256 bytes)      |
//!
//! SubBytes is a table lookup and ShiftRows is folded into the store address
//! of each substituted byte. MixColumns uses
//! `xtime(u) = (u + u) ^ mask[u & 0x80]` with `mask[0x80] = 0x1b`, so the
//! cycle count never depends on the data.

use alloc::format;
use alloc::string::String;
use core::fmt::Write as _;

use super::reference::{Block, SBOX};
use crate::vm::{MachineState, Memory, Reg};

pub const PLAINTEXT_ADDR: u16 = 0x0000;
pub const KEY_ADDR: u16 = 0x0010;
pub const OUTPUT_ADDR: u16 = 0x0020;
pub const SCRATCH_ADDR: u16 = 0x0030;
pub const SBOX_ADDR: u16 = 0x0100;
pub const XTIME_MASK_ADDR: u16 = 0x0200;

/// Register left untouched by the generated code, free for noise instructions.
pub const DEFAULT_SCRATCH: u8 = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundProgramOptions {
    /// Emit `;` comments naming each step.
    pub comments: bool,
    /// Register the generated code must never touch.
    pub reserved: Reg,
}

impl Default for RoundProgramOptions {
    fn default() -> Self {
        RoundProgramOptions { comments: true, reserved: Reg::new(DEFAULT_SCRATCH).unwrap() }
    }
}

// Working registers; none of them may be the reserved scratch register.
const R_STATE: u8 = 0;
const R_KEY: u8 = 1;
const R_SUB: u8 = 2;
const R_COL: u8 = 4; // r4..r7
const R_T: u8 = 8;
const R_U: u8 = 9;
const R_M: u8 = 10;
const R_HIGH_BIT: u8 = 25;

/// Annotated assembly computing round one of AES-128, bracketed by exactly
/// one `trigger_high` and one `trigger_low`.
pub fn first_round_program(options: &RoundProgramOptions) -> String {
    let used = [R_STATE, R_KEY, R_SUB, R_COL, R_COL + 1, R_COL + 2, R_COL + 3, R_T, R_U, R_M, R_HIGH_BIT];
    let reserved = options.reserved.index() as u8;
    assert!(!used.contains(&reserved), "reserved register r{reserved} is used by the round code");

    let mut out = String::new();
    let comment = |out: &mut String, text: &str| {
        if options.comments {
            let _ = writeln!(out, "; {text}");
        }
    };

    comment(&mut out, "AES-128 first round");
    let _ = writeln!(out, "ldi r{R_HIGH_BIT}, 0x80");
    let _ = writeln!(out, "trigger_high");

    for i in 0..16u16 {
        let (row, col) = (i % 4, i / 4);
        let dest = row + 4 * ((col + 4 - row) % 4);
        comment(&mut out, &format!("AddRoundKey + SubBytes, byte {i} -> ShiftRows slot {dest}"));
        let _ = writeln!(out, "ld r{R_STATE}, [0x{:04x}]", PLAINTEXT_ADDR + i);
        let _ = writeln!(out, "ld r{R_KEY}, [0x{:04x}]", KEY_ADDR + i);
        let _ = writeln!(out, "eor r{R_STATE}, r{R_KEY}");
        let _ = writeln!(out, "ld r{R_SUB}, [0x{SBOX_ADDR:04x}+r{R_STATE}]");
        let _ = writeln!(out, "st [0x{:04x}], r{R_SUB}", SCRATCH_ADDR + dest);
    }

    for c in 0..4u16 {
        comment(&mut out, &format!("MixColumns, column {c}"));
        for i in 0..4u16 {
            let _ = writeln!(out, "ld r{}, [0x{:04x}]", u16::from(R_COL) + i, SCRATCH_ADDR + 4 * c + i);
        }
        let _ = writeln!(out, "mov r{R_T}, r{R_COL}");
        for i in 1..4u8 {
            let _ = writeln!(out, "eor r{R_T}, r{}", R_COL + i);
        }
        for i in 0..4u8 {
            let a = R_COL + i;
            let next = R_COL + (i + 1) % 4;
            let _ = writeln!(out, "mov r{R_U}, r{a}");
            let _ = writeln!(out, "eor r{R_U}, r{next}");
            let _ = writeln!(out, "mov r{R_M}, r{R_U}");
            let _ = writeln!(out, "and r{R_M}, r{R_HIGH_BIT}");
            let _ = writeln!(out, "add r{R_U}, r{R_U}");
            let _ = writeln!(out, "ld r{R_M}, [0x{XTIME_MASK_ADDR:04x}+r{R_M}]");
            let _ = writeln!(out, "eor r{R_U}, r{R_M}");
            let _ = writeln!(out, "eor r{R_U}, r{R_T}");
            let _ = writeln!(out, "eor r{R_U}, r{a}");
            let _ = writeln!(out, "st [0x{:04x}], r{R_U}", OUTPUT_ADDR + 4 * c + u16::from(i));
        }
    }

    let _ = writeln!(out, "trigger_low");
    out
}

/// Device memory holding the inputs and lookup tables of one encryption.
pub fn device_memory(plaintext: &Block, key: &Block) -> Memory {
    let mut mem = Memory::new();
    load_tables(&mut mem);
    set_inputs(&mut mem, plaintext, key);
    mem
}

pub fn load_tables(mem: &mut Memory) {
    mem.write_slice(SBOX_ADDR, &SBOX);
    let mut mask = [0u8; 256];
    mask[0x80] = 0x1b;
    mem.write_slice(XTIME_MASK_ADDR, &mask);
}

pub fn set_inputs(mem: &mut Memory, plaintext: &Block, key: &Block) {
    mem.write_slice(PLAINTEXT_ADDR, plaintext);
    mem.write_slice(KEY_ADDR, key);
}

pub fn round_output(state: &MachineState) -> Block {
    let mut out = [0u8; 16];
    out.copy_from_slice(&state.memory.read_slice(OUTPUT_ADDR, 16));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::reference::first_round_state;
    use crate::vm::{assemble, execute, DeviceConfig, Instruction, UninitPolicy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn run(pt: &Block, key: &Block) -> Block {
        let program = assemble(&first_round_program(&RoundProgramOptions::default())).unwrap();
        let cfg = DeviceConfig { noise_sigma: 0.0, uninit: UninitPolicy::Error, ..DeviceConfig::default() };
        let (_, state) = execute(&program, &device_memory(pt, key), &cfg).unwrap();
        round_output(&state)
    }

    #[test]
    fn all_zero_inputs() {
        assert_eq!(run(&[0; 16], &[0; 16]), first_round_state(&[0; 16], &[0; 16]));
    }

    #[test]
    fn random_inputs_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let pt: Block = rng.random();
            let key: Block = rng.random();
            assert_eq!(run(&pt, &key), first_round_state(&pt, &key));
        }
    }

    #[test]
    fn single_byte_sweep() {
        for v in 0..=255u8 {
            let mut pt = [0u8; 16];
            pt[2] = v;
            let key = [0x5a; 16];
            assert_eq!(run(&pt, &key), first_round_state(&pt, &key));
        }
    }

    #[test]
    fn exactly_one_trigger_pair_around_the_round() {
        let program = assemble(&first_round_program(&RoundProgramOptions::default())).unwrap();
        let highs: alloc::vec::Vec<_> = program
            .instructions
            .iter()
            .enumerate()
            .filter(|(_, i)| matches!(i, Instruction::TriggerHigh))
            .map(|(n, _)| n)
            .collect();
        let lows: alloc::vec::Vec<_> = program
            .instructions
            .iter()
            .enumerate()
            .filter(|(_, i)| matches!(i, Instruction::TriggerLow))
            .map(|(n, _)| n)
            .collect();
        assert_eq!(highs.len(), 1);
        assert_eq!(lows, [program.len() - 1]);
        assert!(highs[0] < 2);
    }

    #[test]
    fn reserved_register_untouched() {
        let program = assemble(&first_round_program(&RoundProgramOptions::default())).unwrap();
        for instr in &program.instructions {
            assert_ne!(instr.destination().map(|r| r.index()), Some(24), "{instr}");
            assert!(instr.sources().all(|r| r.index() != 24), "{instr}");
        }
    }

    #[test]
    fn cycle_count_is_data_independent() {
        let program = assemble(&first_round_program(&RoundProgramOptions::default())).unwrap();
        let cfg = DeviceConfig { noise_sigma: 0.0, ..DeviceConfig::default() };
        let a = execute(&program, &device_memory(&[0; 16], &[0; 16]), &cfg).unwrap().0;
        let b = execute(&program, &device_memory(&[0xff; 16], &[0x3c; 16]), &cfg).unwrap().0;
        assert_eq!(a.cycle_count, b.cycle_count);
        assert_eq!(a.len(), b.len());
    }
}
