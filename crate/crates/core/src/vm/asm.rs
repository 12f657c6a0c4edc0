//! Text assembler for the toy machine.
//!
//! Grammar, one item per line:
//!
//! ```text
//! line        := instruction | annotation | comment | blank
//! instruction := mnemonic [operand {"," operand}]   [";" comment]
//! annotation  := ";@" tag                           (e.g. ";@noise-slot")
//! comment     := ";" text
//! operand     := register | immediate | memory
//! register    := "r" 0..31
//! immediate   := 0x00..0xff | 0..255
//! memory      := "[" address ["+" register] "]"     (address is 16 bits)
//! ```
//!
//! Operand forms per mnemonic:
//!
//! | mnemonic                    | operands                  |
//! |-----------------------------|---------------------------|
//! | `mov`                       | `rd, rs` or `rd, imm`     |
//! | `ldi`, `ori`                | `rd, imm`                 |
//! | `ld`                        | `rd, [mem]`               |
//! | `st`                        | `[mem], rs`               |
//! | `eor`, `and`, `or`, `add`, `sub` | `rd, rs`             |
//! | `in`                        | `rd, port`                |
//! | `nop`, `trigger_high`, `trigger_low` | none             |
//!
//! An annotation applies to the instruction that follows it, so its recorded
//! index is the number of instructions assembled before the tag.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::isa::{Address, AluOp, Instruction, Opcode, Reg, Source};

/// Reserved annotation marking a noise insertion slot.
pub const NOISE_SLOT_TAG: &str = ";@noise-slot";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    /// Index of the instruction the annotation precedes (may equal the
    /// program length for a trailing annotation).
    pub index: usize,
    /// Tag text without the leading `;@`.
    pub tag: String,
}

impl Annotation {
    pub fn is_noise_slot(&self) -> bool {
        self.tag == NOISE_SLOT_TAG[2..]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    pub annotations: Vec<Annotation>,
    pub source_text: String,
}

impl Program {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Instruction indices carrying a `;@noise-slot` annotation, in order.
    pub fn noise_slots(&self) -> Vec<usize> {
        self.annotations.iter().filter(|a| a.is_noise_slot()).map(|a| a.index).collect()
    }

    pub fn total_cycles(&self) -> u64 {
        self.instructions.iter().map(|i| u64::from(i.cycles())).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmErrorKind {
    #[error("unknown opcode `{0}`")]
    UnknownOpcode(String),
    #[error("bad register `{0}`")]
    BadRegister(String),
    #[error("immediate `{0}` out of range 0..=255")]
    ImmediateOutOfRange(String),
    #[error("bad number `{0}`")]
    BadNumber(String),
    #[error("bad memory operand `{0}`")]
    BadAddress(String),
    #[error("`{opcode}` expects {expected} operand(s), got {got}")]
    OperandCount { opcode: Opcode, expected: usize, got: usize },
    #[error("empty annotation tag")]
    EmptyAnnotation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    /// One-based source line.
    pub line: usize,
    pub kind: AsmErrorKind,
}

pub fn assemble(source: &str) -> Result<Program, AsmError> {
    let mut instructions = Vec::new();
    let mut annotations = Vec::new();

    for (n, raw) in source.lines().enumerate() {
        let err = |kind| AsmError { line: n + 1, kind };
        let line = raw.trim();
        if let Some(tag) = line.strip_prefix(";@") {
            let tag = tag.trim();
            if tag.is_empty() {
                return Err(err(AsmErrorKind::EmptyAnnotation));
            }
            annotations.push(Annotation { index: instructions.len(), tag: tag.to_string() });
            continue;
        }
        let code = match line.find(';') {
            Some(pos) => line[..pos].trim(),
            None => line,
        };
        if code.is_empty() {
            continue;
        }
        instructions.push(parse_instruction(code).map_err(err)?);
    }

    Ok(Program { instructions, annotations, source_text: source.to_string() })
}

/// Renders a program back to assembly text, annotations included.
pub fn disassemble(program: &Program) -> String {
    let mut out = String::new();
    let mut notes = program.annotations.iter().peekable();
    for (i, instr) in program.instructions.iter().enumerate() {
        while let Some(a) = notes.next_if(|a| a.index <= i) {
            let _ = writeln!(out, ";@{}", a.tag);
        }
        let _ = writeln!(out, "{instr}");
    }
    for a in notes {
        let _ = writeln!(out, ";@{}", a.tag);
    }
    out
}

fn parse_instruction(code: &str) -> Result<Instruction, AsmErrorKind> {
    let (mnemonic, rest) = match code.find(char::is_whitespace) {
        Some(pos) => (&code[..pos], code[pos..].trim()),
        None => (code, ""),
    };
    let opcode = Opcode::from_mnemonic(&mnemonic.to_ascii_lowercase())
        .ok_or_else(|| AsmErrorKind::UnknownOpcode(mnemonic.to_string()))?;
    let operands: Vec<&str> =
        if rest.is_empty() { Vec::new() } else { rest.split(',').map(str::trim).collect() };

    let expect = |n: usize| {
        if operands.len() == n {
            Ok(())
        } else {
            Err(AsmErrorKind::OperandCount { opcode, expected: n, got: operands.len() })
        }
    };

    let instr = match opcode {
        Opcode::Nop | Opcode::TriggerHigh | Opcode::TriggerLow => {
            expect(0)?;
            match opcode {
                Opcode::Nop => Instruction::Nop,
                Opcode::TriggerHigh => Instruction::TriggerHigh,
                _ => Instruction::TriggerLow,
            }
        }
        Opcode::Mov => {
            expect(2)?;
            let dst = parse_reg(operands[0])?;
            let src = if looks_like_register(operands[1]) {
                Source::Reg(parse_reg(operands[1])?)
            } else {
                Source::Imm(parse_imm(operands[1])?)
            };
            Instruction::Mov { dst, src }
        }
        Opcode::Ldi | Opcode::Ori | Opcode::In => {
            expect(2)?;
            let dst = parse_reg(operands[0])?;
            let imm = parse_imm(operands[1])?;
            match opcode {
                Opcode::Ldi => Instruction::Ldi { dst, imm },
                Opcode::Ori => Instruction::Ori { dst, imm },
                _ => Instruction::In { dst, port: imm },
            }
        }
        Opcode::Ld => {
            expect(2)?;
            Instruction::Ld { dst: parse_reg(operands[0])?, addr: parse_address(operands[1])? }
        }
        Opcode::St => {
            expect(2)?;
            Instruction::St { addr: parse_address(operands[0])?, src: parse_reg(operands[1])? }
        }
        Opcode::Eor | Opcode::And | Opcode::Or | Opcode::Add | Opcode::Sub => {
            expect(2)?;
            let op = match opcode {
                Opcode::Eor => AluOp::Eor,
                Opcode::And => AluOp::And,
                Opcode::Or => AluOp::Or,
                Opcode::Add => AluOp::Add,
                _ => AluOp::Sub,
            };
            Instruction::Alu { op, dst: parse_reg(operands[0])?, src: parse_reg(operands[1])? }
        }
    };
    Ok(instr)
}

fn looks_like_register(s: &str) -> bool {
    s.starts_with(['r', 'R'])
}

fn parse_reg(s: &str) -> Result<Reg, AsmErrorKind> {
    let bad = || AsmErrorKind::BadRegister(s.to_string());
    let digits = s.strip_prefix(['r', 'R']).ok_or_else(bad)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let index: u32 = digits.parse().map_err(|_| bad())?;
    u8::try_from(index).ok().and_then(Reg::new).ok_or_else(bad)
}

fn parse_number(s: &str) -> Result<u64, AsmErrorKind> {
    let bad = || AsmErrorKind::BadNumber(s.to_string());
    let parsed = if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16)
    } else {
        s.parse::<u64>()
    };
    parsed.map_err(|_| bad())
}

fn parse_imm(s: &str) -> Result<u8, AsmErrorKind> {
    let value = parse_number(s)?;
    u8::try_from(value).map_err(|_| AsmErrorKind::ImmediateOutOfRange(s.to_string()))
}

fn parse_address(s: &str) -> Result<Address, AsmErrorKind> {
    let bad = || AsmErrorKind::BadAddress(s.to_string());
    let inner = s.strip_prefix('[').and_then(|t| t.strip_suffix(']')).ok_or_else(bad)?;
    let (base, index) = match inner.split_once('+') {
        Some((b, r)) => (b.trim(), Some(parse_reg(r.trim())?)),
        None => (inner.trim(), None),
    };
    let base = u16::try_from(parse_number(base)?).map_err(|_| bad())?;
    Ok(Address { base, index })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg(i: u8) -> Reg {
        Reg::new(i).unwrap()
    }

    #[test]
    fn single_ldi() {
        let p = assemble("ldi r24, 0xff").unwrap();
        assert_eq!(p.instructions, [Instruction::Ldi { dst: reg(24), imm: 255 }]);
    }

    #[test]
    fn annotation_points_at_following_instruction() {
        let p = assemble("mov r1, r2\n;@noise-slot\neor r1, r3").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.annotations, [Annotation { index: 1, tag: "noise-slot".into() }]);
        assert_eq!(p.noise_slots(), [1]);
    }

    #[test]
    fn register_out_of_range() {
        let e = assemble("ldi r99, 0x00").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(matches!(e.kind, AsmErrorKind::BadRegister(_)));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = assemble("nop\n\nfrob r1").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(matches!(e.kind, AsmErrorKind::UnknownOpcode(_)));

        let e = assemble("nop\nldi r1, 256").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(matches!(e.kind, AsmErrorKind::ImmediateOutOfRange(_)));

        let e = assemble("trigger_low r1").unwrap_err();
        assert!(matches!(e.kind, AsmErrorKind::OperandCount { expected: 0, got: 1, .. }));

        assert!(assemble("ld r1, 0x10").is_err());
        assert!(assemble("ld r1, [0x10000]").is_err());
    }

    #[test]
    fn memory_operands() {
        let p = assemble("ld r2, [0x0100+r0] ; sbox\nst [0x0030], r2").unwrap();
        assert_eq!(
            p.instructions,
            [
                Instruction::Ld { dst: reg(2), addr: Address::indexed(0x100, reg(0)) },
                Instruction::St { addr: Address::absolute(0x30), src: reg(2) },
            ]
        );
    }

    #[test]
    fn mov_accepts_immediate_and_register() {
        let p = assemble("mov r24, 0xff\nmov r1, r2\nin r24, 0x3d").unwrap();
        assert_eq!(p.instructions[0], Instruction::Mov { dst: reg(24), src: Source::Imm(0xff) });
        assert_eq!(p.instructions[1], Instruction::Mov { dst: reg(1), src: Source::Reg(reg(2)) });
        assert_eq!(p.instructions[2], Instruction::In { dst: reg(24), port: 0x3d });
    }

    #[test]
    fn trailing_annotation_is_kept() {
        let p = assemble("nop\n;@noise-slot").unwrap();
        assert_eq!(p.noise_slots(), [1]);
        let again = assemble(&disassemble(&p)).unwrap();
        assert_eq!(again.annotations, p.annotations);
    }
}
