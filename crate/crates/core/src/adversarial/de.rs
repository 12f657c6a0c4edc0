//! Differential evolution, DE/rand/1/bin with greedy selection.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub population: usize,
    pub iterations: usize,
    /// Differential weight.
    pub f: f64,
    /// Crossover rate.
    pub cr: f64,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig { population: 400, iterations: 100, f: 0.5, cr: 0.9, seed: 0 }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.population < 4 {
            return Err("population must be at least 4");
        }
        if !(self.f > 0.0 && self.f <= 2.0) {
            return Err("F must lie in (0, 2]");
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return Err("CR must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeOutcome {
    pub best: Vec<f64>,
    pub best_fitness: f64,
    /// Best fitness after initialisation and after every generation.
    pub history: Vec<f64>,
    pub evaluations: usize,
    /// Whether `stop` fired before the iteration budget ran out.
    pub stopped: bool,
}

/// Maximizes `fitness` over the box `bounds` from a uniform random start.
pub fn differential_evolution(
    fitness: impl FnMut(&[f64]) -> f64,
    bounds: &[(f64, f64)],
    config: &DeConfig,
    stop: impl FnMut(&[f64], f64) -> bool,
) -> DeOutcome {
    let mut rng = rng_for(config.seed, "de-init", 0);
    let population = (0..config.population)
        .map(|_| bounds.iter().map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect())
        .collect();
    evolve(population, fitness, bounds, config, stop)
}

/// Runs DE from a given initial population.
///
/// `stop` sees every newly evaluated individual with its fitness; once it
/// fires the run ends and the best individual so far is returned.
pub fn evolve(
    mut population: Vec<Vec<f64>>,
    mut fitness: impl FnMut(&[f64]) -> f64,
    bounds: &[(f64, f64)],
    config: &DeConfig,
    mut stop: impl FnMut(&[f64], f64) -> bool,
) -> DeOutcome {
    config.validate().expect("invalid DE configuration");
    assert_eq!(population.len(), config.population);
    let dims = bounds.len();
    let mut rng = rng_for(config.seed, "de-evolve", 0);

    let mut evaluations = 0;
    let mut stopped = false;
    let mut scores = Vec::with_capacity(population.len());
    for ind in &population {
        let s = fitness(ind);
        evaluations += 1;
        scores.push(s);
        if stop(ind, s) {
            stopped = true;
            break;
        }
    }
    // a stop during initialisation leaves the rest unscored
    scores.resize(population.len(), f64::NEG_INFINITY);
    let best_of = |scores: &[f64]| (0..scores.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
    let mut history = alloc::vec![scores[best_of(&scores)]];

    let np = population.len();
    let mut trial = alloc::vec![0.0; dims];
    let mut generation = 0;
    while !stopped && generation < config.iterations {
        for i in 0..np {
            let (a, b, c) = distinct_three(&mut rng, np, i);
            let forced = rng.random_range(0..dims.max(1));
            for d in 0..dims {
                trial[d] = if d == forced || rng.random::<f64>() < config.cr {
                    let v = population[a][d] + config.f * (population[b][d] - population[c][d]);
                    v.clamp(bounds[d].0, bounds[d].1)
                } else {
                    population[i][d]
                };
            }
            let s = fitness(&trial);
            evaluations += 1;
            if s >= scores[i] {
                population[i].copy_from_slice(&trial);
                scores[i] = s;
            }
            if stop(&trial, s) {
                stopped = true;
                break;
            }
        }
        generation += 1;
        history.push(scores[best_of(&scores)]);
    }
    let b = best_of(&scores);
    DeOutcome { best: population[b].clone(), best_fitness: scores[b], history, evaluations, stopped }
}

fn distinct_three(rng: &mut impl Rng, np: usize, not: usize) -> (usize, usize, usize) {
    let mut pick = |taken: &[usize]| loop {
        let k = rng.random_range(0..np);
        if k != not && !taken.contains(&k) {
            return k;
        }
    };
    let a = pick(&[]);
    let b = pick(&[a]);
    let c = pick(&[a, b]);
    (a, b, c)
}
