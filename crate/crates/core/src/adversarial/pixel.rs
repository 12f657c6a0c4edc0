//! One-pixel attacks: change a single trace sample so the model's confidence
//! moves where the termination predicate wants it.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::de::{differential_evolution, DeConfig};
use super::histogram::{amplitude_histogram, position_histogram, AmplitudeHistogram};
use crate::classifiers::{argmax, Classifier, ClassifierError};
use crate::dataset::Dataset;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// Confidence of `class` reaches `tau`. Without a class, the attack aims
    /// at the model's runner-up class for each trace.
    ConfidenceTarget { class: Option<usize>, tau: f64 },
    /// The two class confidences come within `sigma` of each other.
    Balance { sigma: f64 },
}

impl Default for Termination {
    fn default() -> Self {
        Termination::ConfidenceTarget { class: Some(0), tau: 0.95 }
    }
}

impl Termination {
    pub fn validate(&self, classes: usize) -> Result<(), &'static str> {
        match *self {
            Termination::ConfidenceTarget { class, tau } => {
                if !(tau > 0.0 && tau < 1.0) {
                    return Err("tau must lie in (0, 1)");
                }
                if class.is_some_and(|c| c >= classes) {
                    return Err("target class out of range");
                }
            }
            Termination::Balance { sigma } => {
                if !(sigma >= 0.0) {
                    return Err("sigma must be non-negative");
                }
                if classes != 2 {
                    return Err("balance termination needs exactly two classes");
                }
            }
        }
        Ok(())
    }
}

/// Goal resolved for one trace.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Goal {
    Confidence { class: usize, tau: f64 },
    Balance { sigma: f64 },
}

impl Goal {
    fn resolve(t: &Termination, original: &[f64]) -> Goal {
        match *t {
            Termination::ConfidenceTarget { class: Some(class), tau } => Goal::Confidence { class, tau },
            Termination::ConfidenceTarget { class: None, tau } => {
                let top = argmax(original);
                let runner = (0..original.len()).filter(|&c| c != top).fold(None, |b: Option<usize>, c| match b {
                    Some(b) if original[b] >= original[c] => Some(b),
                    _ => Some(c),
                });
                Goal::Confidence { class: runner.unwrap_or(0), tau }
            }
            Termination::Balance { sigma } => Goal::Balance { sigma },
        }
    }

    fn fitness(&self, p: &[f64]) -> f64 {
        match *self {
            Goal::Confidence { class, .. } => p[class],
            Goal::Balance { .. } => -(p[0] - p[1]).abs(),
        }
    }

    fn holds(&self, p: &[f64]) -> bool {
        match *self {
            Goal::Confidence { class, tau } => p[class] >= tau,
            Goal::Balance { sigma } => (p[0] - p[1]).abs() <= sigma,
        }
    }

    fn class(&self) -> usize {
        match *self {
            Goal::Confidence { class, .. } => class,
            Goal::Balance { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub trace_id: usize,
    pub position: usize,
    /// Replacement value, in standardized units.
    pub amplitude: f64,
    pub original: Vec<f64>,
    pub achieved: Vec<f64>,
    /// Class whose confidence the attack pushed (class 0 under balance).
    pub target_class: usize,
    /// The termination predicate holds for `achieved`.
    pub success: bool,
    /// The most confident class changed.
    pub flipped: bool,
    pub evaluations: usize,
}

impl Perturbation {
    pub fn target_confidence(&self) -> f64 {
        self.achieved[self.target_class]
    }

    /// Target reached or decision flipped.
    pub fn effective(&self) -> bool {
        self.success || self.flipped
    }

    pub fn apply(&self, trace: &[f64]) -> Vec<f64> {
        let mut t = trace.to_vec();
        t[self.position] = self.amplitude;
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub de: DeConfig,
    pub termination: Termination,
    /// Range of replacement values.
    pub amplitude: (f64, f64),
    /// Positions the attack may touch; all when `None`.
    pub allowed: Option<Vec<usize>>,
}

/// Smallest and largest value in a (standardized) dataset.
pub fn empirical_range(dataset: &Dataset) -> (f64, f64) {
    dataset.traces.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Searches for the single-sample change that best serves the termination
/// goal. Candidates are `(position gene, amplitude)`; the gene is rounded to
/// index the allowed positions.
pub fn one_pixel_attack<C: Classifier>(
    model: &C,
    trace: &[f64],
    trace_id: usize,
    config: &AttackConfig,
) -> Result<Perturbation, ClassifierError> {
    let original = model.predict(trace)?;
    let goal = Goal::resolve(&config.termination, &original);
    let all: Vec<usize>;
    let positions: &[usize] = match &config.allowed {
        Some(p) if !p.is_empty() => p,
        _ => {
            all = (0..trace.len()).collect();
            &all
        }
    };
    let pick = |gene: f64| positions[(libm::round(gene).max(0.0) as usize).min(positions.len() - 1)];
    let bounds = [(0.0, (positions.len() - 1) as f64), config.amplitude];
    let mut probe = model.probe(trace)?;
    let mut de = config.de;
    de.seed = derive_seed(config.de.seed, "pixel", trace_id as u64);
    let outcome = differential_evolution(
        |c| goal.fitness(&probe.with_pixel(pick(c[0]), c[1])),
        &bounds,
        &de,
        |_, f| match goal {
            Goal::Confidence { tau, .. } => f >= tau,
            Goal::Balance { sigma } => -f <= sigma,
        },
    );
    let position = pick(outcome.best[0]);
    let amplitude = outcome.best[1];
    let achieved = probe.with_pixel(position, amplitude);
    Ok(Perturbation {
        trace_id,
        position,
        amplitude,
        success: goal.holds(&achieved),
        flipped: argmax(&achieved) != argmax(&original),
        target_class: goal.class(),
        original,
        achieved,
        evaluations: outcome.evaluations,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSet {
    pub trace_len: usize,
    pub perturbations: Vec<Perturbation>,
}

impl PerturbationSet {
    pub fn len(&self) -> usize {
        self.perturbations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perturbations.is_empty()
    }

    pub fn successful(&self) -> impl Iterator<Item = &Perturbation> + '_ {
        self.perturbations.iter().filter(|p| p.success)
    }

    pub fn success_rate(&self) -> f64 {
        rate(self.successful().count(), self.len())
    }

    /// Perturbations that reached the target or flipped the decision.
    pub fn effective(&self) -> impl Iterator<Item = &Perturbation> + '_ {
        self.perturbations.iter().filter(|p| p.effective())
    }

    pub fn effective_rate(&self) -> f64 {
        rate(self.effective().count(), self.len())
    }

    /// Positions of effective perturbations.
    pub fn position_histogram(&self) -> Vec<usize> {
        position_histogram(self.effective().map(|p| p.position), self.trace_len)
    }

    /// Amplitudes of effective perturbations.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.effective().map(|p| p.amplitude).collect()
    }

    pub fn amplitude_histogram(&self, bins: usize, range: Option<(f64, f64)>) -> AmplitudeHistogram {
        amplitude_histogram(&self.amplitudes(), bins, range)
    }
}

fn rate(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

/// One attack per trace of a standardized set, with per-trace seeds.
pub fn mine_perturbations<C: Classifier>(
    model: &C,
    dataset: &Dataset,
    config: &AttackConfig,
) -> Result<PerturbationSet, ClassifierError> {
    mine_observed(model, dataset, config, |_, _| {})
}

/// [`mine_perturbations`] with a callback after every trace.
pub fn mine_observed<C: Classifier>(
    model: &C,
    dataset: &Dataset,
    config: &AttackConfig,
    mut on_trace: impl FnMut(usize, &Perturbation),
) -> Result<PerturbationSet, ClassifierError> {
    let mut perturbations = Vec::with_capacity(dataset.len());
    for (i, row) in dataset.rows().enumerate() {
        let p = one_pixel_attack(model, row, i, config)?;
        on_trace(i, &p);
        perturbations.push(p);
    }
    Ok(PerturbationSet { trace_len: dataset.trace_len, perturbations })
}

/// Share of perturbations that still satisfy their goal when applied, as
/// mined, to another model.
pub fn transfer_rate<C: Classifier>(
    set: &PerturbationSet,
    dataset: &Dataset,
    other: &C,
    termination: &Termination,
) -> Result<f64, ClassifierError> {
    let mut hits = 0;
    for p in &set.perturbations {
        let trace = dataset.trace(p.trace_id);
        let before = other.predict(trace)?;
        let goal = Goal::resolve(termination, &before);
        let after = other.predict(&p.apply(trace))?;
        hits += usize::from(goal.holds(&after) || argmax(&after) != argmax(&before));
    }
    Ok(rate(hits, set.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::softmax;
    use alloc::vec;

    /// Logistic model: logit of class 1 is `w . x + b`.
    struct Linear {
        w: Vec<f64>,
        b: f64,
    }

    impl Classifier for Linear {
        fn class_count(&self) -> usize {
            2
        }
        fn input_len(&self) -> usize {
            self.w.len()
        }
        fn predict(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
            let z: f64 = self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b;
            Ok(softmax(&[0.0, z]))
        }
    }

    fn config(termination: Termination) -> AttackConfig {
        AttackConfig {
            de: DeConfig { population: 30, iterations: 40, seed: 5, ..DeConfig::default() },
            termination,
            amplitude: (-5.0, 5.0),
            allowed: None,
        }
    }

    fn logit(p: f64) -> f64 {
        libm::log(p / (1.0 - p))
    }

    #[test]
    fn linear_model_matches_closed_form_threshold() {
        // class 1 confidence >= tau needs w.x + b >= logit(tau); one coordinate
        // j can add at most max over a in [-5,5] of w_j (a - x_j)
        let x = vec![0.3, -0.2, 0.1, 0.0];
        let tau = 0.95;
        for (w, b) in [
            (vec![0.1, 0.2, 0.7, -0.1], -1.0),
            (vec![0.1, 0.1, 0.05, -0.1], -1.0),
            (vec![0.0, 0.0, 0.9, 0.0], -1.5),
            (vec![0.0, 0.0, 0.0, -1.0], 0.0),
        ] {
            let base: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + b;
            let best_gain = w.iter().zip(&x).map(|(wj, xj)| (wj * (5.0 - xj)).max(wj * (-5.0 - xj))).fold(f64::MIN, f64::max);
            let reachable = base + best_gain >= logit(tau) + 1e-6;
            let model = Linear { w, b };
            let p = one_pixel_attack(&model, &x, 0, &config(Termination::ConfidenceTarget { class: Some(1), tau })).unwrap();
            assert_eq!(p.success, reachable, "{p:?}");
            assert!(!p.success || p.target_confidence() >= tau);
        }
    }

    #[test]
    fn ignored_sample_is_never_the_answer() {
        let model = Linear { w: vec![0.0, 1.0, 1.0], b: -2.0 };
        let x = [0.0, 0.0, 0.0];
        let mut cfg = config(Termination::ConfidenceTarget { class: Some(1), tau: 0.9 });
        for seed in 0..10 {
            cfg.de.seed = seed;
            let p = one_pixel_attack(&model, &x, seed as usize, &cfg).unwrap();
            assert!(p.success);
            assert_ne!(p.position, 0);
        }
        cfg.allowed = Some(vec![0]);
        assert!(!one_pixel_attack(&model, &x, 0, &cfg).unwrap().success);
    }

    #[test]
    fn fig1_flip_semantics() {
        // class 0 at 0.8141893 before, class 1 at 0.57052094 after one change
        let z0 = logit(0.8141893);
        let z1 = logit(0.57052094);
        let model = Linear { w: vec![1.0, 0.0], b: 0.0 };
        let trace = [-z0, 0.0];
        let p = Perturbation {
            trace_id: 0,
            position: 0,
            amplitude: z1,
            original: model.predict(&trace).unwrap(),
            achieved: model.predict(&[z1, 0.0]).unwrap(),
            target_class: 1,
            success: false,
            flipped: true,
            evaluations: 0,
        };
        assert!((p.original[0] - 0.8141893).abs() < 1e-7);
        assert!((p.achieved[1] - 0.57052094).abs() < 1e-7);
        assert_eq!(argmax(&p.original), 0);
        assert_eq!(argmax(&model.predict(&p.apply(&trace)).unwrap()), 1);
        assert!(p.effective());
    }

    #[test]
    fn balance_mode_and_runner_up() {
        let model = Linear { w: vec![2.0], b: 3.0 };
        let p = one_pixel_attack(&model, &[0.0], 0, &config(Termination::Balance { sigma: 0.05 })).unwrap();
        assert!(p.success);
        assert!((p.achieved[0] - p.achieved[1]).abs() <= 0.05);
        let q = one_pixel_attack(&model, &[0.0], 0, &config(Termination::ConfidenceTarget { class: None, tau: 0.95 })).unwrap();
        assert_eq!(q.target_class, 0);
        assert!(q.success && q.flipped);
    }

    #[test]
    fn termination_validation() {
        assert!(Termination::Balance { sigma: 0.1 }.validate(9).is_err());
        assert!(Termination::ConfidenceTarget { class: Some(2), tau: 0.9 }.validate(2).is_err());
        assert!(Termination::ConfidenceTarget { class: None, tau: 1.0 }.validate(2).is_err());
        assert!(Termination::default().validate(2).is_ok());
    }

    #[test]
    fn histograms_count_effective_perturbations() {
        let mk = |position, amplitude, success, flipped| Perturbation {
            trace_id: 0,
            position,
            amplitude,
            original: vec![0.5, 0.5],
            achieved: vec![0.5, 0.5],
            target_class: 0,
            success,
            flipped,
            evaluations: 1,
        };
        let set = PerturbationSet {
            trace_len: 4,
            perturbations: vec![mk(1, -2.0, true, true), mk(1, 3.0, false, true), mk(3, 1.0, false, false)],
        };
        assert_eq!(set.position_histogram(), [0, 2, 0, 0]);
        assert_eq!(set.amplitudes(), [-2.0, 3.0]);
        assert!((set.success_rate() - 1.0 / 3.0).abs() < 1e-12);
        assert!((set.effective_rate() - 2.0 / 3.0).abs() < 1e-12);
    }
}
