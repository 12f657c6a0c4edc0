use core::fmt;

use serde::{Deserialize, Serialize};

/// Number of general purpose registers.
pub const REGISTER_COUNT: u8 = 32;

/// A general purpose register, `r0` to `r31`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Reg(u8);

impl Reg {
    pub fn new(index: u8) -> Option<Self> {
        (index < REGISTER_COUNT).then_some(Reg(index))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Memory operand: an absolute 16-bit address, optionally offset by a register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Address {
    pub base: u16,
    pub index: Option<Reg>,
}

impl Address {
    pub fn absolute(base: u16) -> Self {
        Address { base, index: None }
    }

    pub fn indexed(base: u16, index: Reg) -> Self {
        Address { base, index: Some(index) }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(r) => write!(f, "[0x{:04x}+{}]", self.base, r),
            None => write!(f, "[0x{:04x}]", self.base),
        }
    }
}

/// Second operand of `mov`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    Reg(Reg),
    Imm(u8),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Reg(r) => write!(f, "{r}"),
            Source::Imm(v) => write!(f, "0x{v:02x}"),
        }
    }
}

/// Two-register ALU operations. The result is written to the destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AluOp {
    Eor,
    And,
    Or,
    Add,
    Sub,
}

impl AluOp {
    pub fn apply(self, a: u8, b: u8) -> u8 {
        match self {
            AluOp::Eor => a ^ b,
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opcode {
    Mov,
    Ldi,
    Ld,
    St,
    Eor,
    And,
    Or,
    Ori,
    Add,
    Sub,
    In,
    Nop,
    TriggerHigh,
    TriggerLow,
}

impl Opcode {
    pub const ALL: [Opcode; 14] = [
        Opcode::Mov,
        Opcode::Ldi,
        Opcode::Ld,
        Opcode::St,
        Opcode::Eor,
        Opcode::And,
        Opcode::Or,
        Opcode::Ori,
        Opcode::Add,
        Opcode::Sub,
        Opcode::In,
        Opcode::Nop,
        Opcode::TriggerHigh,
        Opcode::TriggerLow,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Mov => "mov",
            Opcode::Ldi => "ldi",
            Opcode::Ld => "ld",
            Opcode::St => "st",
            Opcode::Eor => "eor",
            Opcode::And => "and",
            Opcode::Or => "or",
            Opcode::Ori => "ori",
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::In => "in",
            Opcode::Nop => "nop",
            Opcode::TriggerHigh => "trigger_high",
            Opcode::TriggerLow => "trigger_low",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Opcode::ALL.into_iter().find(|op| op.mnemonic() == s)
    }

    /// Cycle cost. Memory accesses take two cycles, everything else one.
    pub fn cycles(self) -> u32 {
        match self {
            Opcode::Ld | Opcode::St => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// One instruction of the toy 8-bit machine.
///
/// Register indices and immediates are range-checked by construction (`Reg`,
/// `u8`), so every value of this type is a valid instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instruction {
    Mov { dst: Reg, src: Source },
    Ldi { dst: Reg, imm: u8 },
    Ld { dst: Reg, addr: Address },
    St { addr: Address, src: Reg },
    Alu { op: AluOp, dst: Reg, src: Reg },
    Ori { dst: Reg, imm: u8 },
    In { dst: Reg, port: u8 },
    Nop,
    TriggerHigh,
    TriggerLow,
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instruction::Mov { .. } => Opcode::Mov,
            Instruction::Ldi { .. } => Opcode::Ldi,
            Instruction::Ld { .. } => Opcode::Ld,
            Instruction::St { .. } => Opcode::St,
            Instruction::Alu { op, .. } => match op {
                AluOp::Eor => Opcode::Eor,
                AluOp::And => Opcode::And,
                AluOp::Or => Opcode::Or,
                AluOp::Add => Opcode::Add,
                AluOp::Sub => Opcode::Sub,
            },
            Instruction::Ori { .. } => Opcode::Ori,
            Instruction::In { .. } => Opcode::In,
            Instruction::Nop => Opcode::Nop,
            Instruction::TriggerHigh => Opcode::TriggerHigh,
            Instruction::TriggerLow => Opcode::TriggerLow,
        }
    }

    pub fn cycles(&self) -> u32 {
        self.opcode().cycles()
    }

    /// Register written by this instruction, if any.
    pub fn destination(&self) -> Option<Reg> {
        match *self {
            Instruction::Mov { dst, .. }
            | Instruction::Ldi { dst, .. }
            | Instruction::Ld { dst, .. }
            | Instruction::Alu { dst, .. }
            | Instruction::Ori { dst, .. }
            | Instruction::In { dst, .. } => Some(dst),
            Instruction::St { .. }
            | Instruction::Nop
            | Instruction::TriggerHigh
            | Instruction::TriggerLow => None,
        }
    }

    /// Registers read by this instruction.
    pub fn sources(&self) -> impl Iterator<Item = Reg> {
        let (a, b) = match *self {
            Instruction::Mov { src: Source::Reg(r), .. } => (Some(r), None),
            Instruction::Ld { addr, .. } => (addr.index, None),
            Instruction::St { addr, src } => (Some(src), addr.index),
            Instruction::Alu { dst, src, .. } => (Some(dst), Some(src)),
            Instruction::Ori { dst, .. } => (Some(dst), None),
            _ => (None, None),
        };
        a.into_iter().chain(b)
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.opcode();
        match self {
            Instruction::Mov { dst, src } => write!(f, "{op} {dst}, {src}"),
            Instruction::Ldi { dst, imm } | Instruction::Ori { dst, imm } => {
                write!(f, "{op} {dst}, 0x{imm:02x}")
            }
            Instruction::Ld { dst, addr } => write!(f, "{op} {dst}, {addr}"),
            Instruction::St { addr, src } => write!(f, "{op} {addr}, {src}"),
            Instruction::Alu { dst, src, .. } => write!(f, "{op} {dst}, {src}"),
            Instruction::In { dst, port } => write!(f, "{op} {dst}, 0x{port:02x}"),
            Instruction::Nop | Instruction::TriggerHigh | Instruction::TriggerLow => {
                write!(f, "{op}")
            }
        }
    }
}
