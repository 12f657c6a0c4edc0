//! Minimal 8-bit register machine standing in for the target device:
//! assembler, cycle-accurate executor with a Hamming-weight power model, and
//! trigger-windowed trace capture.

pub mod asm;
pub mod isa;
pub mod machine;
pub mod profile;

pub use asm::{assemble, disassemble, Annotation, AsmError, AsmErrorKind, Program, NOISE_SLOT_TAG};
pub use isa::{Address, AluOp, Instruction, Opcode, Reg, Source, REGISTER_COUNT};
pub use machine::{
    execute, execute_logged, DeviceConfig, ExecError, MachineState, Memory, RawTrace, Step,
    UninitPolicy, MEMORY_SIZE,
};
pub use profile::{measure_instruction_profile, with_inserted, AmplitudeProfile, ProfileContext, ProfileError};
