//! Flat `key = value` pipeline configuration.
//!
//! One setting per line, `#` starts a comment, unknown keys are errors.
//! Lists are comma separated. Every key and its default is listed by
//! [`PipelineConfig::to_text`], which `parse` reads back unchanged.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use scalab_core::adversarial::{DeConfig, Termination};
use scalab_core::aes::{Block, LeakageKind, LeakageModel};
use scalab_core::classifiers::{Architecture, CnnSpec, ConvBlock, MlpSpec, ModelSpec, TrainConfig};
use scalab_core::countermeasure::InsertionPolicy;
use scalab_core::template::Regularization;
use scalab_core::vm::DeviceConfig;

use crate::error::{LabError, Result};

/// Attackers the pipeline trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attacker {
    Mlp,
    Cnn,
    Ta,
}

impl Attacker {
    pub const ALL: [Attacker; 3] = [Attacker::Mlp, Attacker::Cnn, Attacker::Ta];

    pub fn name(self) -> &'static str {
        match self {
            Attacker::Mlp => "mlp",
            Attacker::Cnn => "cnn",
            Attacker::Ta => "ta",
        }
    }

    /// File the trained model is stored in, relative to the output root.
    pub fn model_file(self) -> String {
        match self {
            Attacker::Ta => "models/ta.template".into(),
            a => format!("models/{}.model", a.name()),
        }
    }
}

impl FromStr for Attacker {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mlp" => Ok(Attacker::Mlp),
            "cnn" => Ok(Attacker::Cnn),
            "ta" => Ok(Attacker::Ta),
            _ => Err(format!("unknown attacker `{s}` (mlp, cnn, ta)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Output root; `None` defers to the environment or `scalab-out`.
    pub out: Option<PathBuf>,
    pub threads: usize,
    pub device: DeviceConfig,
    pub leakage: LeakageModel,
    pub key: Block,
    pub profiling: usize,
    /// Attack traces in the unprotected pool.
    pub attack: usize,
    pub repetitions: usize,
    pub m_max: usize,
    pub attackers: Vec<Attacker>,
    pub mlp: ModelSpec,
    pub cnn: ModelSpec,
    pub ta: Regularization,
    pub de: DeConfig,
    pub termination: Termination,
    /// Attack-set traces mined per model.
    pub mine_count: usize,
    pub mine_models: Vec<Attacker>,
    pub points: usize,
    /// Cycles between a target sample and the histogram peak it came from.
    pub lead_cycles: usize,
    pub peak_separation_cycles: usize,
    pub tolerance_cycles: usize,
    pub policy: InsertionPolicy,
    pub profile_repetitions: usize,
    /// The protected check happens at this multiple of the unprotected
    /// rank-zero trace count.
    pub check_factor: usize,
    pub naive_attacker: Attacker,
    pub overhead_runs: usize,
}

pub const DEFAULT_KEY: Block = [0x2b, 0x7e, 0x15, 0x16, 0x28, 0xae, 0xd2, 0xa6, 0xab, 0xf7, 0x15, 0x88, 0x09, 0xcf, 0x4f, 0x3c];

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            out: None,
            threads: 1,
            device: DeviceConfig::default(),
            leakage: LeakageModel::default(),
            key: DEFAULT_KEY,
            profiling: 10_000,
            attack: 1000,
            repetitions: 5,
            m_max: 1000,
            attackers: Attacker::ALL.to_vec(),
            mlp: ModelSpec {
                architecture: Architecture::Mlp(MlpSpec { hidden: vec![16, 16] }),
                train: TrainConfig { learning_rate: 1e-4, batch_size: 64, epochs: 10, ..TrainConfig::mlp_default() },
            },
            cnn: ModelSpec {
                architecture: Architecture::Cnn(CnnSpec {
                    blocks: vec![ConvBlock { filters: 4, kernel: 11, pool: 4 }, ConvBlock { filters: 8, kernel: 11, pool: 4 }],
                    dense: vec![32],
                }),
                train: TrainConfig { learning_rate: 1e-3, batch_size: 64, epochs: 5, ..TrainConfig::cnn_default() },
            },
            ta: Regularization { lambda: 0.9, epsilon: 1e-6 },
            de: DeConfig { population: 400, iterations: 75, ..DeConfig::default() },
            termination: Termination::ConfidenceTarget { class: None, tau: 0.95 },
            mine_count: 500,
            mine_models: vec![Attacker::Mlp],
            points: 3,
            lead_cycles: 2,
            peak_separation_cycles: 4,
            tolerance_cycles: 2,
            policy: InsertionPolicy::default(),
            profile_repetitions: 50,
            check_factor: 10,
            naive_attacker: Attacker::Mlp,
            overhead_runs: 1000,
        }
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: ToString,
{
    v.parse().map_err(|e: T::Err| LabError::Value { key: key.into(), reason: e.to_string() })
}

/// Comma-separated items; an empty value is an empty list.
fn items(v: &str) -> impl Iterator<Item = &str> {
    let v = v.trim();
    v.split(',').map(str::trim).filter(move |_| !v.is_empty())
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: ToString,
{
    items(v).map(|s| value(key, s)).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn mlp_hidden(spec: &mut ModelSpec) -> &mut Vec<usize> {
    if !matches!(spec.architecture, Architecture::Mlp(_)) {
        spec.architecture = Architecture::Mlp(MlpSpec { hidden: Vec::new() });
    }
    match &mut spec.architecture {
        Architecture::Mlp(m) => &mut m.hidden,
        Architecture::Cnn(_) => unreachable!(),
    }
}

fn cnn_spec(spec: &mut ModelSpec) -> &mut CnnSpec {
    if !matches!(spec.architecture, Architecture::Cnn(_)) {
        spec.architecture = Architecture::Cnn(CnnSpec { blocks: Vec::new(), dense: Vec::new() });
    }
    match &mut spec.architecture {
        Architecture::Cnn(c) => c,
        Architecture::Mlp(_) => unreachable!(),
    }
}

/// `filters:kernel:pool` triples.
fn blocks(key: &str, v: &str) -> Result<Vec<ConvBlock>> {
    items(v)
        .map(|b| {
            let parts: Vec<usize> = b.split(':').map(|p| value(key, p)).collect::<Result<_>>()?;
            match parts[..] {
                [filters, kernel, pool] => Ok(ConvBlock { filters, kernel, pool }),
                _ => Err(LabError::Value { key: key.into(), reason: format!("`{b}` is not filters:kernel:pool") }),
            }
        })
        .collect()
}

fn train_key(t: &mut TrainConfig, field: &str, key: &str, v: &str) -> Result<bool> {
    match field {
        "learning_rate" => t.learning_rate = value(key, v)?,
        "batch_size" => t.batch_size = value(key, v)?,
        "epochs" => t.epochs = value(key, v)?,
        "rho" => t.rho = value(key, v)?,
        "epsilon" => t.epsilon = value(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LabError::Config { line: i + 1, reason: format!("expected `key = value`, got `{line}`") })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| LabError::Config { line: i + 1, reason: e.to_string() })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        PipelineConfig::parse(&text).map_err(|e| match e {
            LabError::Config { line, reason } => LabError::format(path, format!("line {line}: {reason}")),
            e => e,
        })
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = value(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "threads" => self.threads = value(key, v)?,
            "device.hw_gain" => self.device.hw_gain = value(key, v)?,
            "device.baseline" => self.device.baseline = value(key, v)?,
            "device.noise_sigma" => self.device.noise_sigma = value(key, v)?,
            "device.samples_per_cycle" => self.device.samples_per_cycle = value(key, v)?,
            "device.trigger_low_level" => self.device.trigger_low_level = value(key, v)?,
            "leakage.kind" => {
                self.leakage.kind = match v {
                    "lsb" => LeakageKind::Lsb,
                    "hw" => LeakageKind::Hw,
                    _ => return Err(LabError::Value { key: key.into(), reason: "expected lsb or hw".into() }),
                }
            }
            "leakage.byte" => {
                let b: u8 = value(key, v)?;
                if b > 15 {
                    return Err(LabError::Value { key: key.into(), reason: "byte index is 0..=15".into() });
                }
                self.leakage.byte_index = b;
            }
            "key" => {
                let bytes = hex::decode(v).map_err(|e| LabError::Value { key: key.into(), reason: e.to_string() })?;
                self.key = bytes
                    .try_into()
                    .map_err(|_| LabError::Value { key: key.into(), reason: "a key is 16 bytes".into() })?;
            }
            "capture.profiling" => self.profiling = value(key, v)?,
            "capture.attack" => self.attack = value(key, v)?,
            "eval.repetitions" => self.repetitions = value(key, v)?,
            "eval.m_max" => self.m_max = value(key, v)?,
            "eval.check_factor" => self.check_factor = value(key, v)?,
            "attackers" => self.attackers = list(key, v)?,
            "mlp.hidden" => *mlp_hidden(&mut self.mlp) = list(key, v)?,
            "cnn.blocks" => cnn_spec(&mut self.cnn).blocks = blocks(key, v)?,
            "cnn.dense" => cnn_spec(&mut self.cnn).dense = list(key, v)?,
            "ta.lambda" => self.ta.lambda = value(key, v)?,
            "ta.epsilon" => self.ta.epsilon = value(key, v)?,
            "de.population" => self.de.population = value(key, v)?,
            "de.iterations" => self.de.iterations = value(key, v)?,
            "de.f" => self.de.f = value(key, v)?,
            "de.cr" => self.de.cr = value(key, v)?,
            "mine.termination" => {
                self.termination = match (v, self.termination) {
                    ("confidence", t @ Termination::ConfidenceTarget { .. }) => t,
                    ("confidence", _) => Termination::ConfidenceTarget { class: None, tau: 0.95 },
                    ("balance", t @ Termination::Balance { .. }) => t,
                    ("balance", _) => Termination::Balance { sigma: 0.05 },
                    _ => return Err(LabError::Value { key: key.into(), reason: "expected confidence or balance".into() }),
                }
            }
            "mine.target" => {
                let class = if v == "runner-up" { None } else { Some(value(key, v)?) };
                match &mut self.termination {
                    Termination::ConfidenceTarget { class: c, .. } => *c = class,
                    Termination::Balance { .. } => self.termination = Termination::ConfidenceTarget { class, tau: 0.95 },
                }
            }
            "mine.tau" => match &mut self.termination {
                Termination::ConfidenceTarget { tau, .. } => *tau = value(key, v)?,
                Termination::Balance { .. } => {
                    self.termination = Termination::ConfidenceTarget { class: None, tau: value(key, v)? }
                }
            },
            "mine.sigma" => self.termination = Termination::Balance { sigma: value(key, v)? },
            "mine.count" => self.mine_count = value(key, v)?,
            "mine.models" => self.mine_models = list(key, v)?,
            "cm.points" => self.points = value(key, v)?,
            "cm.lead_cycles" => self.lead_cycles = value(key, v)?,
            "cm.peak_separation_cycles" => self.peak_separation_cycles = value(key, v)?,
            "cm.tolerance_cycles" => self.tolerance_cycles = value(key, v)?,
            "cm.omega" => self.policy.omega = list(key, v)?,
            "cm.profile_repetitions" => self.profile_repetitions = value(key, v)?,
            "naive.attacker" => self.naive_attacker = value(key, v)?,
            "overhead.runs" => self.overhead_runs = value(key, v)?,
            _ => {
                let handled = match key.split_once('.') {
                    Some(("mlp", f)) => train_key(&mut self.mlp.train, f, key, v)?,
                    Some(("cnn", f)) => train_key(&mut self.cnn.train, f, key, v)?,
                    _ => false,
                };
                if !handled {
                    return Err(LabError::Value { key: key.into(), reason: "unknown key".into() });
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, reason: &str| Err(LabError::Value { key: key.into(), reason: reason.into() });
        self.device.validate().map_err(|e| LabError::Value { key: "device".into(), reason: e.to_string() })?;
        self.de.validate().map_err(|e| LabError::Value { key: "de".into(), reason: e.to_string() })?;
        self.termination
            .validate(self.leakage.class_count())
            .map_err(|e| LabError::Value { key: "mine".into(), reason: e.into() })?;
        if self.threads == 0 {
            return fail("threads", "at least one thread");
        }
        if self.profiling == 0 || self.attack == 0 {
            return fail("capture", "profiling and attack counts must be positive");
        }
        if self.m_max == 0 || self.m_max > self.attack {
            return fail("eval.m_max", "must lie in 1..=capture.attack");
        }
        if self.repetitions == 0 {
            return fail("eval.repetitions", "at least one repetition");
        }
        if self.policy.omega.is_empty() {
            return fail("cm.omega", "empty multiplicity domain");
        }
        if self.points == 0 {
            return fail("cm.points", "at least one insertion point");
        }
        if self.mine_models.is_empty() {
            return fail("mine.models", "at least one model");
        }
        Ok(())
    }

    /// Every setting in parseable form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        if let Some(out) = &self.out {
            put("out", out.display().to_string());
        }
        put("threads", self.threads.to_string());
        put("device.hw_gain", self.device.hw_gain.to_string());
        put("device.baseline", self.device.baseline.to_string());
        put("device.noise_sigma", self.device.noise_sigma.to_string());
        put("device.samples_per_cycle", self.device.samples_per_cycle.to_string());
        put("device.trigger_low_level", self.device.trigger_low_level.to_string());
        put("leakage.kind", self.leakage.kind.to_string());
        put("leakage.byte", self.leakage.byte_index.to_string());
        put("key", hex::encode(self.key));
        put("capture.profiling", self.profiling.to_string());
        put("capture.attack", self.attack.to_string());
        put("eval.repetitions", self.repetitions.to_string());
        put("eval.m_max", self.m_max.to_string());
        put("eval.check_factor", self.check_factor.to_string());
        put("attackers", join(&self.attackers.iter().map(|a| a.name()).collect::<Vec<_>>()));
        for (name, spec) in [("mlp", &self.mlp), ("cnn", &self.cnn)] {
            match &spec.architecture {
                Architecture::Mlp(m) => put(&format!("{name}.hidden"), join(&m.hidden)),
                Architecture::Cnn(c) => {
                    let b: Vec<String> = c.blocks.iter().map(|b| format!("{}:{}:{}", b.filters, b.kernel, b.pool)).collect();
                    put(&format!("{name}.blocks"), b.join(","));
                    put(&format!("{name}.dense"), join(&c.dense));
                }
            }
            let t = &spec.train;
            put(&format!("{name}.learning_rate"), t.learning_rate.to_string());
            put(&format!("{name}.batch_size"), t.batch_size.to_string());
            put(&format!("{name}.epochs"), t.epochs.to_string());
            put(&format!("{name}.rho"), t.rho.to_string());
            put(&format!("{name}.epsilon"), t.epsilon.to_string());
        }
        put("ta.lambda", self.ta.lambda.to_string());
        put("ta.epsilon", self.ta.epsilon.to_string());
        put("de.population", self.de.population.to_string());
        put("de.iterations", self.de.iterations.to_string());
        put("de.f", self.de.f.to_string());
        put("de.cr", self.de.cr.to_string());
        match self.termination {
            Termination::ConfidenceTarget { class, tau } => {
                put("mine.termination", "confidence".into());
                put("mine.target", class.map_or("runner-up".into(), |c| c.to_string()));
                put("mine.tau", tau.to_string());
            }
            Termination::Balance { sigma } => {
                put("mine.termination", "balance".into());
                put("mine.sigma", sigma.to_string());
            }
        }
        put("mine.count", self.mine_count.to_string());
        put("mine.models", join(&self.mine_models.iter().map(|a| a.name()).collect::<Vec<_>>()));
        put("cm.points", self.points.to_string());
        put("cm.lead_cycles", self.lead_cycles.to_string());
        put("cm.peak_separation_cycles", self.peak_separation_cycles.to_string());
        put("cm.tolerance_cycles", self.tolerance_cycles.to_string());
        put("cm.omega", join(&self.policy.omega));
        put("cm.profile_repetitions", self.profile_repetitions.to_string());
        put("naive.attacker", self.naive_attacker.name().into());
        put("overhead.runs", self.overhead_runs.to_string());
        s
    }

    pub fn spec_for(&self, a: Attacker) -> Option<&ModelSpec> {
        match a {
            Attacker::Mlp => Some(&self.mlp),
            Attacker::Cnn => Some(&self.cnn),
            Attacker::Ta => None,
        }
    }
}
