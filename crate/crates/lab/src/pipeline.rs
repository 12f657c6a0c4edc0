//! Pipeline stages. Each reads the artifacts of earlier stages from the
//! output root, writes its own, and records them in the manifest.

use std::path::PathBuf;
use std::thread;

use scalab_core::adversarial::{
    amplitude_histogram, empirical_range, mine_perturbations, AttackConfig, PerturbationSet, AMPLITUDE_BINS,
};
use scalab_core::aes::program::DEFAULT_SCRATCH;
use scalab_core::aes::{device_memory, first_round_program, RoundProgramOptions};
use scalab_core::classifiers::{train, Classifier, ClassifierError, NeuralModel, PixelProbe};
use scalab_core::countermeasure::{
    annotate, candidate_pool, locate_insertion_points, select_noise_instructions, select_target_intervals,
    InsertionPoint, LocateOptions, NoiseSet, ProtectedProgram, TargetIntervals,
};
use scalab_core::dataset::{acquire, correlation_profile, split, standardize, top_peaks, Campaign, Dataset, KeyPolicy, StandardizationStats, Target};
use scalab_core::evaluation::{
    analytic_spread, execution_overhead, mean_rank_curve, naive_adversarial_study, rank_trajectory, CurveConfig,
    KeyHypothesisMap, NaiveStudyReport, OverheadRow, RankCurve,
};
use scalab_core::seed::derive_seed;
use scalab_core::template::{fit_templates, TemplateModel};
use scalab_core::vm::{assemble, Program, ProfileContext, Reg};
use serde::{Deserialize, Serialize};

use crate::config::{Attacker, PipelineConfig};
use crate::error::{LabError, Result};
use crate::manifest::StageWriter;
use crate::modelio::{self, StatsRef};
use crate::report::{self, Series};
use crate::traceio;

pub const UNPROTECTED_TRACES: &str = "traces/unprotected.sct";
pub const PROTECTED_TRACES: &str = "traces/protected.sct";
pub const STATS_FILE: &str = "models/standardization.json";
pub const PROGRAM_FILE: &str = "asm/aes_round1.asm";
pub const POINTS_FILE: &str = "countermeasure/points.json";
pub const ANNOTATED_FILE: &str = "countermeasure/annotated.asm";
pub const NOISE_FILE: &str = "countermeasure/noise.json";
pub const PROTECTED_FILE: &str = "countermeasure/protected.json";

/// Pipeline commands, in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Capture,
    Train,
    Attack,
    Mine,
    Locate,
    Select,
    Protect,
    Evaluate,
    StudyNaive,
    Overhead,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Capture,
        Stage::Train,
        Stage::Attack,
        Stage::Mine,
        Stage::Locate,
        Stage::Select,
        Stage::Protect,
        Stage::Evaluate,
        Stage::StudyNaive,
        Stage::Overhead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Capture => "capture",
            Stage::Train => "train",
            Stage::Attack => "attack",
            Stage::Mine => "mine",
            Stage::Locate => "locate",
            Stage::Select => "select",
            Stage::Protect => "protect",
            Stage::Evaluate => "evaluate",
            Stage::StudyNaive => "study-naive",
            Stage::Overhead => "overhead",
        }
    }
}

/// A trained attacker as loaded from disk.
#[derive(Debug, Clone)]
pub enum Model {
    Network(NeuralModel),
    Template(TemplateModel),
}

impl Classifier for Model {
    fn class_count(&self) -> usize {
        match self {
            Model::Network(m) => m.class_count(),
            Model::Template(m) => m.class_count(),
        }
    }

    fn input_len(&self) -> usize {
        match self {
            Model::Network(m) => m.input_len(),
            Model::Template(m) => m.input_len(),
        }
    }

    fn predict(&self, trace: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        match self {
            Model::Network(m) => m.predict(trace),
            Model::Template(m) => m.predict(trace),
        }
    }

    fn probe<'a>(&'a self, trace: &'a [f64]) -> Result<Box<dyn PixelProbe + 'a>, ClassifierError> {
        match self {
            Model::Network(m) => m.probe(trace),
            Model::Template(m) => m.probe(trace),
        }
    }
}

/// Trains one attacker on a standardized profiling set.
pub fn train_attacker(cfg: &PipelineConfig, attacker: Attacker, profiling: &Dataset, seed: u64) -> Result<Model, ClassifierError> {
    Ok(match cfg.spec_for(attacker) {
        Some(spec) => Model::Network(train(profiling, &spec.clone().with_seed(seed))?),
        None => Model::Template(fit_templates(profiling, cfg.ta)?),
    })
}

/// Maps `f` over `items` on up to `threads` threads, keeping order.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinedSet {
    pub model: String,
    pub amplitude_range: (f64, f64),
    pub set: PerturbationSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetChoice {
    pub peak: usize,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocateReport {
    pub targets: Vec<TargetChoice>,
    pub points: Vec<InsertionPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRow {
    pub attacker: String,
    pub accuracy: f64,
    pub rank_zero_m: Option<usize>,
    pub curve: RankCurve,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub attacker: String,
    pub unprotected: RankCurve,
    pub protected: RankCurve,
    /// `check_factor` times the unprotected rank-zero `M`.
    pub check_m: usize,
}

impl EvaluationRow {
    pub fn protected_rank_at_check(&self) -> f64 {
        self.protected.mean_at(self.check_m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverheadReport {
    pub rows: Vec<OverheadRow>,
    pub analytic_spread: u64,
}

/// Configuration bound to an output root.
#[derive(Debug, Clone)]
pub struct Lab {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("artifacts serialize");
    s.push(b'\n');
    s
}

fn opt(m: Option<usize>) -> String {
    m.map_or(String::new(), |m| m.to_string())
}

impl Lab {
    pub fn new(cfg: PipelineConfig, out: impl Into<PathBuf>) -> Self {
        Lab { cfg, out: out.into() }
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        derive_seed(self.cfg.seed, stage.name(), 0)
    }

    fn run<T>(&self, stage: Stage, body: impl FnOnce(&mut StageWriter) -> Result<T>) -> Result<T> {
        std::fs::create_dir_all(&self.out).map_err(|e| LabError::io(&self.out, e))?;
        let mut w = StageWriter::new(&self.out, stage.name(), self.stage_seed(stage));
        let result = body(&mut w);
        w.finish(self.cfg.seed, result.is_ok())?;
        result
    }

    /// Path of an artifact that an earlier stage must have written.
    pub fn require(&self, rel: &str, producer: Stage) -> Result<PathBuf> {
        let path = self.out.join(rel);
        if path.is_file() {
            Ok(path)
        } else {
            Err(LabError::MissingArtifact { path, stage: producer.name() })
        }
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, rel: &str, producer: Stage) -> Result<T> {
        let path = self.require(rel, producer)?;
        let bytes = std::fs::read(&path).map_err(|e| LabError::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| LabError::format(&path, e.to_string()))
    }

    fn read_text(&self, rel: &str, producer: Stage) -> Result<String> {
        let path = self.require(rel, producer)?;
        std::fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))
    }

    pub fn program(&self) -> Result<Program> {
        Ok(assemble(&first_round_program(&RoundProgramOptions::default()))?)
    }

    pub fn unprotected_pool(&self) -> Result<Dataset> {
        traceio::load_traces(&self.require(UNPROTECTED_TRACES, Stage::Capture)?)
    }

    /// The fixed profiling/attack split every stage after `capture` shares.
    pub fn split(&self, pool: &Dataset) -> Result<(Dataset, Dataset)> {
        Ok(split(pool, self.cfg.profiling, derive_seed(self.cfg.seed, "split", 0))?)
    }

    pub fn stats(&self) -> Result<StandardizationStats> {
        self.read_json(STATS_FILE, Stage::Train)
    }

    pub fn load_model(&self, attacker: Attacker) -> Result<Model> {
        let path = self.require(&attacker.model_file(), Stage::Train)?;
        Ok(match attacker {
            Attacker::Ta => Model::Template(modelio::load_template(&path)?.0),
            _ => Model::Network(modelio::load_network(&path)?),
        })
    }

    fn curve_config(&self, m_max: usize) -> CurveConfig {
        CurveConfig {
            repetitions: self.cfg.repetitions,
            profiling_count: self.cfg.profiling,
            m_max,
            seed: derive_seed(self.cfg.seed, "evaluate", 0),
            retrain: true,
        }
    }

    fn campaign(&self, count: usize, index: u64) -> Campaign {
        let mut c = Campaign::new(count, KeyPolicy::Fixed(self.cfg.key), derive_seed(self.cfg.seed, "capture", index));
        c.leakage = self.cfg.leakage;
        c.config = self.cfg.device.clone();
        c
    }

    pub fn capture(&self) -> Result<Dataset> {
        self.run(Stage::Capture, |w| {
            let program = self.program()?;
            w.write(PROGRAM_FILE, program.source_text.as_bytes())?;
            let pool = acquire(Target::Fixed(&program), &self.campaign(self.cfg.profiling + self.cfg.attack, 0))?.dataset;
            let mut bytes = Vec::new();
            traceio::write_traces(&mut bytes, &pool).map_err(|e| LabError::io(UNPROTECTED_TRACES, e))?;
            w.write(UNPROTECTED_TRACES, &bytes)?;
            let corr = correlation_profile(&pool)?;
            let rows: Vec<String> = corr.iter().enumerate().map(|(i, c)| format!("{i},{c}\n")).collect();
            w.write("reports/correlation.csv", format!("sample,correlation\n{}", rows.concat()).as_bytes())?;
            Ok(pool)
        })
    }

    pub fn train(&self) -> Result<Vec<(Attacker, Model)>> {
        let pool = self.unprotected_pool()?;
        self.run(Stage::Train, |w| {
            let (profiling, _) = self.split(&pool)?;
            let (profiling, stats) = standardize(&profiling)?;
            let stats_bytes = serde_json::to_vec(&stats).expect("stats serialize");
            w.write(STATS_FILE, &stats_bytes)?;
            let stats_ref =
                StatsRef { path: "standardization.json".into(), sha256: crate::manifest::sha256_hex(&stats_bytes) };
            let seed = self.stage_seed(Stage::Train);
            let models = par_map(&self.cfg.attackers, self.cfg.threads, |&a| {
                train_attacker(&self.cfg, a, &profiling, derive_seed(seed, a.name(), 0))
            });
            let mut out = Vec::new();
            for (&a, m) in self.cfg.attackers.iter().zip(models) {
                let m = m?;
                let bytes = match &m {
                    Model::Network(n) => {
                        let loss: String = n.log.epoch_loss.iter().enumerate().map(|(e, l)| format!("{e},{l}\n")).collect();
                        w.write(&format!("models/{}_loss.csv", a.name()), format!("epoch,loss\n{loss}").as_bytes())?;
                        modelio::encode_network(n, Some(stats_ref.clone()))
                    }
                    Model::Template(t) => modelio::encode_template(t, Some(stats_ref.clone())),
                };
                w.write(&a.model_file(), &bytes)?;
                out.push((a, m));
            }
            Ok(out)
        })
    }

    pub fn attack(&self) -> Result<Vec<AttackRow>> {
        let pool = self.unprotected_pool()?;
        let stats = self.stats()?;
        let models: Vec<(Attacker, Model)> =
            self.cfg.attackers.iter().map(|&a| Ok((a, self.load_model(a)?))).collect::<Result<_>>()?;
        self.run(Stage::Attack, |w| {
            let (_, attack) = self.split(&pool)?;
            let attack = stats.apply(&attack)?;
            let true_key = self.cfg.key[usize::from(self.cfg.leakage.byte_index)];
            let m_max = self.cfg.m_max.min(attack.len());
            let mut rows = Vec::new();
            for (a, model) in &models {
                let predictions = model.predict_all(&attack)?;
                let accuracy = scalab_core::evaluation::accuracy_of(model, &attack)?;
                let ranks: Vec<Vec<u16>> = (0..self.cfg.repetitions)
                    .map(|rep| {
                        let order = scalab_core::dataset::shuffled_indices(
                            attack.len(),
                            derive_seed(self.stage_seed(Stage::Attack), "order", rep as u64),
                        );
                        let chosen = &order[..m_max];
                        let pts: Vec<_> = chosen.iter().map(|&i| attack.records[i].plaintext).collect();
                        let preds: Vec<Vec<f64>> = chosen.iter().map(|&i| predictions[i].clone()).collect();
                        rank_trajectory(&preds, &KeyHypothesisMap::new(&pts, &attack.leakage), true_key, m_max)
                    })
                    .collect();
                let mean = (0..m_max).map(|j| ranks.iter().map(|r| f64::from(r[j])).sum::<f64>() / ranks.len() as f64).collect();
                let curve = RankCurve { mean, ranks, accuracy: vec![accuracy; self.cfg.repetitions] };
                w.write(&format!("reports/attack_{}.csv", a.name()), report::rank_curve_csv(&curve).as_bytes())?;
                rows.push(AttackRow { attacker: a.name().into(), accuracy, rank_zero_m: curve.rank_zero_m(), curve });
            }
            let summary: String =
                rows.iter().map(|r| format!("{},{},{}\n", r.attacker, r.accuracy, opt(r.rank_zero_m))).collect();
            w.write("reports/attack.csv", format!("attacker,accuracy,rank_zero_m\n{summary}").as_bytes())?;
            let series: Vec<Series<'_>> = rows.iter().map(|r| report::rank_series(&r.attacker, &r.curve)).collect();
            w.write("reports/attack.svg", report::line_plot_svg("Key rank, unprotected", "attack traces", "mean rank", &series).as_bytes())?;
            Ok(rows)
        })
    }

    /// Standardized attack set of the fixed split, and the amplitude range of
    /// the standardized profiling set.
    fn mining_inputs(&self) -> Result<(Dataset, (f64, f64))> {
        let pool = self.unprotected_pool()?;
        let stats = self.stats()?;
        let (profiling, attack) = self.split(&pool)?;
        let range = empirical_range(&stats.apply(&profiling)?);
        let attack = stats.apply(&attack)?;
        let n = self.cfg.mine_count.min(attack.len());
        Ok((attack.subset(&(0..n).collect::<Vec<_>>()), range))
    }

    pub fn attack_config(&self, amplitude: (f64, f64), index: u64) -> AttackConfig {
        let mut de = self.cfg.de;
        de.seed = derive_seed(self.stage_seed(Stage::Mine), "de", index);
        AttackConfig { de, termination: self.cfg.termination, amplitude, allowed: None }
    }

    pub fn mine(&self) -> Result<Vec<MinedSet>> {
        let (targets, range) = self.mining_inputs()?;
        let models: Vec<(Attacker, Model)> =
            self.cfg.mine_models.iter().map(|&a| Ok((a, self.load_model(a)?))).collect::<Result<_>>()?;
        self.run(Stage::Mine, |w| {
            let mut out = Vec::new();
            for (i, (a, model)) in models.iter().enumerate() {
                let set = mine_perturbations(model, &targets, &self.attack_config(range, i as u64))?;
                let name = a.name();
                w.write(&format!("perturbations/{name}.csv"), report::perturbations_csv(&set).as_bytes())?;
                let positions = set.position_histogram();
                w.write(&format!("perturbations/{name}_positions.csv"), report::position_histogram_csv(&positions).as_bytes())?;
                let amps = set.amplitude_histogram(AMPLITUDE_BINS, Some(range));
                w.write(&format!("perturbations/{name}_amplitudes.csv"), report::amplitude_histogram_csv(&amps).as_bytes())?;
                let series = [Series { name, points: positions.iter().enumerate().map(|(i, &c)| (i as f64, c as f64)).collect() }];
                w.write(
                    &format!("perturbations/{name}_positions.svg"),
                    report::line_plot_svg("Effective perturbation positions", "sample", "count", &series).as_bytes(),
                )?;
                let mined = MinedSet { model: name.into(), amplitude_range: range, set };
                w.write(&format!("perturbations/{name}.json"), &json(&mined))?;
                out.push(mined);
            }
            Ok(out)
        })
    }

    fn mined_sets(&self) -> Result<Vec<MinedSet>> {
        self.cfg.mine_models.iter().map(|a| self.read_json(&format!("perturbations/{}.json", a.name()), Stage::Mine)).collect()
    }

    pub fn locate(&self) -> Result<LocateReport> {
        let sets = self.mined_sets()?;
        let program = self.program()?;
        self.run(Stage::Locate, |w| {
            let n = sets.iter().map(|s| s.set.trace_len).max().unwrap_or(0);
            let mut hist = vec![0.0; n];
            for s in &sets {
                for (h, c) in hist.iter_mut().zip(s.set.position_histogram()) {
                    *h += c as f64;
                }
            }
            let spc = self.cfg.device.samples_per_cycle as usize;
            let mut peaks = top_peaks(&hist, self.cfg.points, self.cfg.peak_separation_cycles * spc);
            peaks.retain(|&p| hist[p] > 0.0);
            if peaks.is_empty() {
                return Err(LabError::Pipeline("no effective perturbations to place noise at".into()));
            }
            peaks.sort_unstable();
            let targets: Vec<TargetChoice> =
                peaks.iter().map(|&peak| TargetChoice { peak, target: peak.saturating_sub(self.cfg.lead_cycles * spc) }).collect();
            let memory = device_memory(&[0; 16], &self.cfg.key);
            let options = LocateOptions { tolerance_cycles: self.cfg.tolerance_cycles };
            let sample_targets: Vec<usize> = targets.iter().map(|t| t.target).collect();
            let points = locate_insertion_points(&program, &sample_targets, &memory, &self.cfg.device, &options)?;
            for (k, p) in points.iter().enumerate() {
                w.write(&format!("countermeasure/probe_log_{k}.csv"), report::probe_log_csv(&p.probes).as_bytes())?;
            }
            w.write(ANNOTATED_FILE, annotate(&program, &points).as_bytes())?;
            let report = LocateReport { targets, points };
            w.write(POINTS_FILE, &json(&report))?;
            Ok(report)
        })
    }

    pub fn select(&self) -> Result<NoiseSet> {
        let sets = self.mined_sets()?;
        let located: LocateReport = self.read_json(POINTS_FILE, Stage::Locate)?;
        let stats = self.stats()?;
        let program = self.program()?;
        self.run(Stage::Select, |w| {
            let hists: Vec<_> = sets
                .iter()
                .map(|s| amplitude_histogram(&s.set.amplitudes(), AMPLITUDE_BINS, Some(s.amplitude_range)))
                .collect();
            let intervals: TargetIntervals = select_target_intervals(&hists)?;
            w.write("countermeasure/intervals.json", &json(&intervals))?;
            let memory = device_memory(&[0; 16], &self.cfg.key);
            let mut device = self.cfg.device.clone();
            device.rng_seed = self.stage_seed(Stage::Select);
            let ctx = ProfileContext { program: &program, memory: &memory, config: &device, stats: &stats };
            let scratch = Reg::new(DEFAULT_SCRATCH).expect("scratch register exists");
            let noise = select_noise_instructions(
                &candidate_pool(scratch),
                &located.points,
                &intervals.intervals,
                ctx,
                self.cfg.profile_repetitions,
            )?;
            let rows: String = noise
                .members
                .iter()
                .map(|c| (c, true))
                .chain(noise.rejected.iter().map(|c| (c, false)))
                .map(|(c, kept)| format!("{},{},{},{}\n", c.instruction, c.profile.mean, c.profile.sd, kept))
                .collect();
            w.write("countermeasure/candidates.csv", format!("instruction,mean,sd,selected\n{rows}").as_bytes())?;
            w.write("countermeasure/noise.asm", noise.listing().as_bytes())?;
            w.write(NOISE_FILE, &json(&noise))?;
            Ok(noise)
        })
    }

    pub fn protect(&self) -> Result<ProtectedProgram> {
        let annotated = self.read_text(ANNOTATED_FILE, Stage::Locate)?;
        let located: LocateReport = self.read_json(POINTS_FILE, Stage::Locate)?;
        let noise: NoiseSet = self.read_json(NOISE_FILE, Stage::Select)?;
        self.run(Stage::Protect, |w| {
            let protected = ProtectedProgram::new(&annotated, located.points, noise.instructions(), self.cfg.policy.clone())?;
            w.write("countermeasure/protected.asm", protected.protected_source(self.stage_seed(Stage::Protect))?.as_bytes())?;
            w.write(PROTECTED_FILE, &json(&protected))?;
            Ok(protected)
        })
    }

    fn protected_program(&self) -> Result<ProtectedProgram> {
        let p: ProtectedProgram = self.read_json(PROTECTED_FILE, Stage::Protect)?;
        // revalidate: annotations and points must still agree
        let source = p.annotated_source().to_string();
        Ok(ProtectedProgram::new(&source, p.points, p.noise, p.policy)?)
    }

    fn curves(&self, pool: &Dataset, m_max: &[(Attacker, usize)]) -> Result<Vec<RankCurve>> {
        let results = par_map(m_max, self.cfg.threads, |&(a, m)| -> Result<RankCurve> {
            let seed = derive_seed(self.stage_seed(Stage::Evaluate), a.name(), 0);
            let mut trainer = |p: &Dataset, rep: usize| -> Result<Box<dyn Classifier>, ClassifierError> {
                Ok(Box::new(train_attacker(&self.cfg, a, p, derive_seed(seed, "rep", rep as u64))?))
            };
            Ok(mean_rank_curve(pool, &mut trainer, &self.curve_config(m))?)
        });
        results.into_iter().collect()
    }

    /// Retrains every attacker on unprotected and on protected traces.
    pub fn evaluate(&self) -> Result<Vec<EvaluationRow>> {
        let pool = self.unprotected_pool()?;
        let protected = self.protected_program()?;
        self.run(Stage::Evaluate, |w| {
            let plan: Vec<(Attacker, usize)> = self.cfg.attackers.iter().map(|&a| (a, self.cfg.m_max)).collect();
            let unprotected = self.curves(&pool, &plan)?;
            let checks: Vec<(Attacker, usize)> = self
                .cfg
                .attackers
                .iter()
                .zip(&unprotected)
                .map(|(&a, c)| (a, self.cfg.check_factor * c.rank_zero_m().unwrap_or(self.cfg.m_max)))
                .collect();
            let longest = checks.iter().map(|c| c.1).max().unwrap_or(self.cfg.m_max);
            let mut campaign = self.campaign(self.cfg.profiling + longest, 1);
            campaign.recompile_each_run = true;
            let ppool = acquire(Target::Protected(&protected), &campaign)?.dataset;
            let mut bytes = Vec::new();
            traceio::write_traces(&mut bytes, &ppool).map_err(|e| LabError::io(PROTECTED_TRACES, e))?;
            w.write(PROTECTED_TRACES, &bytes)?;
            drop(bytes);
            let protected_curves = self.curves(&ppool, &checks)?;

            let mut rows = Vec::new();
            let mut summary = String::from("attacker,variant,accuracy,rank_zero_m,check_m,mean_rank_at_check\n");
            for ((&(a, check_m), u), p) in checks.iter().zip(unprotected).zip(protected_curves) {
                let name = a.name();
                w.write(&format!("reports/evaluate_{name}_unprotected.csv"), report::rank_curve_csv(&u).as_bytes())?;
                w.write(&format!("reports/evaluate_{name}_protected.csv"), report::rank_curve_csv(&p).as_bytes())?;
                let series = [report::rank_series("unprotected", &u), report::rank_series("protected", &p)];
                w.write(
                    &format!("reports/evaluate_{name}.svg"),
                    report::line_plot_svg(&format!("Key rank, {name}"), "attack traces", "mean rank", &series).as_bytes(),
                )?;
                for (variant, c) in [("unprotected", &u), ("protected", &p)] {
                    summary.push_str(&format!(
                        "{name},{variant},{},{},{check_m},{}\n",
                        c.mean_accuracy(),
                        opt(c.rank_zero_m()),
                        c.mean_at(check_m)
                    ));
                }
                rows.push(EvaluationRow { attacker: name.into(), unprotected: u, protected: p, check_m });
            }
            w.write("reports/evaluate.csv", summary.as_bytes())?;
            Ok(rows)
        })
    }

    /// Converts the whole pool to one-pixel adversarial traces against the
    /// trained model and compares attacks on original and converted traces.
    pub fn study_naive(&self) -> Result<NaiveStudyReport> {
        let pool = self.unprotected_pool()?;
        let stats = self.stats()?;
        let a = self.cfg.naive_attacker;
        let model = self.load_model(a)?;
        let (profiling, _) = self.split(&pool)?;
        let range = empirical_range(&stats.apply(&profiling)?);
        self.run(Stage::StudyNaive, |w| {
            let mut attack = self.attack_config(range, 0);
            attack.de.seed = derive_seed(self.stage_seed(Stage::StudyNaive), "de", 0);
            let seed = self.stage_seed(Stage::StudyNaive);
            let mut trainer = |p: &Dataset, rep: usize| -> Result<Box<dyn Classifier>, ClassifierError> {
                Ok(Box::new(train_attacker(&self.cfg, a, p, derive_seed(seed, "rep", rep as u64))?))
            };
            let report = naive_adversarial_study(&model, &pool, &stats, &attack, &mut trainer, &self.curve_config(self.cfg.m_max))?;
            w.write("reports/naive_source.csv", report::rank_curve_csv(&report.source).as_bytes())?;
            w.write("reports/naive_adversarial.csv", report::rank_curve_csv(&report.adversarial).as_bytes())?;
            let series = [report::rank_series("original", &report.source), report::rank_series("converted", &report.adversarial)];
            w.write(
                "reports/naive.svg",
                report::line_plot_svg("Key rank after per-trace conversion", "attack traces", "mean rank", &series).as_bytes(),
            )?;
            let summary = format!(
                "variant,accuracy,rank_zero_m,conversion_success,conversion_effective\noriginal,{},{},,\nconverted,{},{},{},{}\n",
                report.source.mean_accuracy(),
                opt(report.source.rank_zero_m()),
                report.adversarial.mean_accuracy(),
                opt(report.adversarial.rank_zero_m()),
                report.conversion_success,
                report.conversion_effective,
            );
            w.write("reports/naive.csv", summary.as_bytes())?;
            Ok(report)
        })
    }

    pub fn overhead(&self) -> Result<OverheadReport> {
        let program = self.program()?;
        let protected = self.protected_program()?;
        self.run(Stage::Overhead, |w| {
            let variants = [("unprotected", Target::Fixed(&program)), ("protected", Target::Protected(&protected))];
            let rows = execution_overhead(&variants, self.cfg.overhead_runs, self.stage_seed(Stage::Overhead))?;
            w.write("reports/overhead.csv", report::overhead_csv(&rows).as_bytes())?;
            let report = OverheadReport { rows, analytic_spread: analytic_spread(&protected) };
            w.write("reports/overhead.json", &json(&report))?;
            Ok(report)
        })
    }

    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Capture => self.capture().map(drop),
            Stage::Train => self.train().map(drop),
            Stage::Attack => self.attack().map(drop),
            Stage::Mine => self.mine().map(drop),
            Stage::Locate => self.locate().map(drop),
            Stage::Select => self.select().map(drop),
            Stage::Protect => self.protect().map(drop),
            Stage::Evaluate => self.evaluate().map(drop),
            Stage::StudyNaive => self.study_naive().map(drop),
            Stage::Overhead => self.overhead().map(drop),
        }
    }

    pub fn run_all(&self) -> Result<()> {
        Stage::ALL.iter().try_for_each(|&s| self.run_stage(s))
    }
}
