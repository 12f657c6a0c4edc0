use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::asm::Program;
use super::isa::{Address, Instruction, Source, REGISTER_COUNT};

pub const MEMORY_SIZE: usize = 1 << 16;

/// What a load from a never-written address does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UninitPolicy {
    ZeroFill,
    Error,
}

/// Parametric power model and capture settings of the simulated device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    /// Power per unit of Hamming weight of the written value.
    pub hw_gain: f64,
    pub baseline: f64,
    /// Standard deviation of the additive Gaussian noise on every sample.
    pub noise_sigma: f64,
    pub samples_per_cycle: u32,
    /// Level forced on the samples of a `trigger_low` cycle.
    pub trigger_low_level: f64,
    pub rng_seed: u64,
    /// Value returned by every `in` instruction.
    pub in_value: u8,
    pub cycle_budget: u64,
    pub uninit: UninitPolicy,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            hw_gain: 1.0,
            baseline: 0.0,
            noise_sigma: 1.0,
            samples_per_cycle: 3,
            trigger_low_level: -10.0,
            rng_seed: 0,
            in_value: 0xff,
            cycle_budget: 1_000_000,
            uninit: UninitPolicy::ZeroFill,
        }
    }
}

impl DeviceConfig {
    pub fn validate(&self) -> Result<(), ExecError> {
        if self.samples_per_cycle == 0 {
            return Err(ExecError::InvalidConfig("samples_per_cycle must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(ExecError::InvalidConfig("noise_sigma must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        DeviceConfig { rng_seed: seed, ..self.clone() }
    }

    /// Noise-free power level of a cycle writing a value of the given weight.
    pub fn level(&self, hamming_weight: u32) -> f64 {
        self.hw_gain * f64::from(hamming_weight) + self.baseline
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("cycle budget of {0} exceeded")]
    CycleBudgetExceeded(u64),
    #[error("read of uninitialized memory at 0x{0:04x}")]
    UninitializedRead(u16),
    #[error("invalid device config: {0}")]
    InvalidConfig(&'static str),
}

/// 64 KiB byte-addressed memory with an initialization map.
#[derive(Clone, PartialEq, Eq)]
pub struct Memory {
    bytes: Vec<u8>,
    written: Vec<u64>,
}

impl core::fmt::Debug for Memory {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let used = self.written.iter().map(|w| w.count_ones()).sum::<u32>();
        f.debug_struct("Memory").field("initialized_bytes", &used).finish()
    }
}

impl Default for Memory {
    fn default() -> Self {
        Memory { bytes: vec![0; MEMORY_SIZE], written: vec![0; MEMORY_SIZE / 64] }
    }
}

impl Memory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, addr: u16, value: u8) {
        let a = usize::from(addr);
        self.bytes[a] = value;
        self.written[a / 64] |= 1 << (a % 64);
    }

    pub fn write_slice(&mut self, addr: u16, values: &[u8]) {
        for (i, &v) in values.iter().enumerate() {
            self.write(addr.wrapping_add(i as u16), v);
        }
    }

    pub fn is_initialized(&self, addr: u16) -> bool {
        let a = usize::from(addr);
        self.written[a / 64] & (1 << (a % 64)) != 0
    }

    /// Raw byte, zero when never written.
    pub fn peek(&self, addr: u16) -> u8 {
        self.bytes[usize::from(addr)]
    }

    pub fn read_slice(&self, addr: u16, len: usize) -> Vec<u8> {
        (0..len).map(|i| self.peek(addr.wrapping_add(i as u16))).collect()
    }

    fn load(&self, addr: u16, policy: UninitPolicy) -> Result<u8, ExecError> {
        if policy == UninitPolicy::Error && !self.is_initialized(addr) {
            return Err(ExecError::UninitializedRead(addr));
        }
        Ok(self.peek(addr))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub registers: [u8; REGISTER_COUNT as usize],
    pub memory: Memory,
    pub cycles: u64,
}

/// Samples captured while the trigger line was high.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrace {
    /// Captured samples only; `samples.len() == window.1 - window.0`.
    pub samples: Vec<f64>,
    /// Total cycles executed by the whole program.
    pub cycle_count: u64,
    /// Capture window in absolute sample positions of the run, `[start, end)`.
    pub trigger_window: (usize, usize),
}

impl RawTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First captured sample sitting exactly at the trigger-low sentinel.
    pub fn sentinel_position(&self, level: f64) -> Option<usize> {
        self.samples.iter().position(|&s| s == level)
    }
}

/// One executed instruction, as recorded by [`execute_logged`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub index: usize,
    pub start_cycle: u64,
    pub cycles: u32,
    /// Value written to the destination register, if any.
    pub written: Option<u8>,
    /// First window-relative sample of this instruction, when captured.
    pub window_sample: Option<usize>,
}

/// Runs `program` on a copy of `memory`, returning the captured trace and
/// the final machine state.
///
/// Every cycle of an instruction emits `samples_per_cycle` samples of
/// `hw_gain * HW(written) + baseline + N(0, noise_sigma)`; instructions that
/// write no register count as weight 0. Capture starts after the first
/// `trigger_high` (or at cycle 0 when the program has none) and ends with the
/// first `trigger_low`, whose own cycle is captured at `trigger_low_level`.
pub fn execute(
    program: &Program,
    memory: &Memory,
    config: &DeviceConfig,
) -> Result<(RawTrace, MachineState), ExecError> {
    run(program, memory, config, None)
}

/// [`execute`] that also returns the per-instruction execution log.
pub fn execute_logged(
    program: &Program,
    memory: &Memory,
    config: &DeviceConfig,
) -> Result<(RawTrace, MachineState, Vec<Step>), ExecError> {
    let mut log = Vec::with_capacity(program.len());
    let (trace, state) = run(program, memory, config, Some(&mut log))?;
    Ok((trace, state, log))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Capture {
    Waiting,
    Armed,
    Done,
}

fn run(
    program: &Program,
    memory: &Memory,
    config: &DeviceConfig,
    mut log: Option<&mut Vec<Step>>,
) -> Result<(RawTrace, MachineState), ExecError> {
    config.validate()?;
    let spc = config.samples_per_cycle as usize;
    let noise = (config.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, config.noise_sigma).expect("validated sigma"));
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut state = MachineState {
        registers: [0; REGISTER_COUNT as usize],
        memory: memory.clone(),
        cycles: 0,
    };
    let has_trigger = program.instructions.iter().any(|i| matches!(i, Instruction::TriggerHigh));
    let mut capture = if has_trigger { Capture::Waiting } else { Capture::Armed };
    let mut window_start = 0usize;
    let mut samples = Vec::new();

    for (index, instr) in program.instructions.iter().enumerate() {
        let cycles = instr.cycles();
        if state.cycles + u64::from(cycles) > config.cycle_budget {
            return Err(ExecError::CycleBudgetExceeded(config.cycle_budget));
        }
        let written = step(instr, &mut state, config)?;
        let captured = capture == Capture::Armed;
        if let Some(log) = log.as_deref_mut() {
            log.push(Step {
                index,
                start_cycle: state.cycles,
                cycles,
                written,
                window_sample: captured.then_some(samples.len()),
            });
        }

        if captured {
            if matches!(instr, Instruction::TriggerLow) {
                for _ in 0..cycles as usize * spc {
                    samples.push(config.trigger_low_level);
                }
                capture = Capture::Done;
            } else {
                let level = config.level(written.map_or(0, u8::count_ones));
                for _ in 0..cycles as usize * spc {
                    let n = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
                    samples.push(level + n);
                }
            }
        }
        state.cycles += u64::from(cycles);

        if capture == Capture::Waiting && matches!(instr, Instruction::TriggerHigh) {
            capture = Capture::Armed;
            window_start = state.cycles as usize * spc;
        }
    }

    let window = (window_start, window_start + samples.len());
    Ok((RawTrace { samples, cycle_count: state.cycles, trigger_window: window }, state))
}

fn effective(addr: &Address, regs: &[u8]) -> u16 {
    match addr.index {
        Some(r) => addr.base.wrapping_add(u16::from(regs[r.index()])),
        None => addr.base,
    }
}

/// Executes one instruction and returns the value written to a register.
fn step(
    instr: &Instruction,
    state: &mut MachineState,
    config: &DeviceConfig,
) -> Result<Option<u8>, ExecError> {
    let regs = &mut state.registers;
    let written = match *instr {
        Instruction::Mov { dst, src } => {
            let v = match src {
                Source::Reg(r) => regs[r.index()],
                Source::Imm(v) => v,
            };
            regs[dst.index()] = v;
            Some(v)
        }
        Instruction::Ldi { dst, imm } => {
            regs[dst.index()] = imm;
            Some(imm)
        }
        Instruction::Ld { dst, addr } => {
            let v = state.memory.load(effective(&addr, regs), config.uninit)?;
            regs[dst.index()] = v;
            Some(v)
        }
        Instruction::St { addr, src } => {
            let a = effective(&addr, regs);
            state.memory.write(a, regs[src.index()]);
            None
        }
        Instruction::Alu { op, dst, src } => {
            let v = op.apply(regs[dst.index()], regs[src.index()]);
            regs[dst.index()] = v;
            Some(v)
        }
        Instruction::Ori { dst, imm } => {
            let v = regs[dst.index()] | imm;
            regs[dst.index()] = v;
            Some(v)
        }
        Instruction::In { dst, .. } => {
            regs[dst.index()] = config.in_value;
            Some(config.in_value)
        }
        Instruction::Nop | Instruction::TriggerHigh | Instruction::TriggerLow => None,
    };
    Ok(written)
}
