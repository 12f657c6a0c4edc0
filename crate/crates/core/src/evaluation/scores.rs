use alloc::vec;
use alloc::vec::Vec;

use crate::aes::{Block, LeakageModel};

/// Floor applied to confidences before taking logs.
pub const CONFIDENCE_FLOOR: f64 = 1e-40;

/// Class each key-byte hypothesis assigns to each trace: `classes[i * 256 + k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyHypothesisMap {
    pub classes: Vec<u8>,
}

impl KeyHypothesisMap {
    pub fn new(plaintexts: &[Block], model: &LeakageModel) -> Self {
        let b = model.byte_index as usize;
        let mut classes = Vec::with_capacity(plaintexts.len() * 256);
        for p in plaintexts {
            classes.extend((0..=255u8).map(|k| model.class_for(p[b], k) as u8));
        }
        KeyHypothesisMap { classes }
    }

    pub fn len(&self) -> usize {
        self.classes.len() / 256
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class(&self, trace: usize, key: u8) -> usize {
        usize::from(self.classes[trace * 256 + usize::from(key)])
    }
}

/// `sum_{i < m} log d_i[class(i, k)]` for every candidate `k < candidates`.
pub fn log_scores(
    predictions: &[Vec<f64>],
    class_of: impl Fn(usize, usize) -> usize,
    candidates: usize,
    m: usize,
) -> Vec<f64> {
    let mut s = vec![0.0; candidates];
    for (i, d) in predictions.iter().take(m).enumerate() {
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += libm::log(d[class_of(i, k)].max(CONFIDENCE_FLOOR));
        }
    }
    s
}

/// Scores of the 256 key-byte candidates after the first `m` traces.
pub fn key_scores(predictions: &[Vec<f64>], plaintexts: &[Block], model: &LeakageModel, m: usize) -> Vec<f64> {
    let map = KeyHypothesisMap::new(&plaintexts[..m.min(plaintexts.len())], model);
    log_scores(predictions, |i, k| map.class(i, k as u8), 256, m)
}

/// Number of candidates scoring strictly above the true one.
pub fn rank_of(scores: &[f64], true_key: usize) -> usize {
    let s = scores[true_key];
    scores.iter().filter(|&&x| x > s).count()
}

/// Rank counted over groups of candidates that assign identical classes to
/// the first `m` traces, since such candidates cannot be told apart.
pub fn distinguishable_rank(scores: &[f64], map: &KeyHypothesisMap, true_key: usize, m: usize) -> usize {
    let m = m.min(map.len());
    let column = |k: usize| (0..m).map(move |i| map.class(i, k as u8));
    let mut above: Vec<usize> = Vec::new();
    for k in 0..scores.len() {
        if scores[k] > scores[true_key] && !above.iter().any(|&j| column(j).eq(column(k))) {
            above.push(k);
        }
    }
    above.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::LeakageKind;
    use crate::seed::rng_for;
    use rand::Rng;

    #[test]
    fn uniform_predictions_tie_everything() {
        let s = key_scores(&[vec![0.5, 0.5]], &[[9; 16]], &LeakageModel::default(), 1);
        assert!(s.iter().all(|&x| x == s[0]));
        assert_eq!(rank_of(&s, 17), 0);
    }

    #[test]
    fn one_hot_on_true_labels_scores_zero() {
        let model = LeakageModel::new(LeakageKind::Hw, 2);
        let key = 0x3c;
        let mut rng = rng_for(1, "onehot", 0);
        let pts: Vec<Block> = (0..20).map(|_| rng.random()).collect();
        let preds: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| {
                let mut d = vec![0.0; 9];
                d[model.class_for(p[2], key)] = 1.0;
                d
            })
            .collect();
        let s = key_scores(&preds, &pts, &model, 20);
        assert_eq!(s[usize::from(key)], 0.0);
        assert!(s.iter().all(|&x| x <= 0.0));
        assert_eq!(rank_of(&s, usize::from(key)), 0);
    }

    #[test]
    fn log_domain_matches_direct_products_on_toy_alphabet() {
        let mut rng = rng_for(2, "toy", 0);
        for _ in 0..1000 {
            let classes: Vec<[usize; 4]> = (0..3).map(|_| core::array::from_fn(|_| rng.random_range(0..3))).collect();
            let preds: Vec<Vec<f64>> = (0..3)
                .map(|_| {
                    let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
                    let t: f64 = raw.iter().sum();
                    raw.into_iter().map(|x| x / t).collect()
                })
                .collect();
            let logs = log_scores(&preds, |i, k| classes[i][k], 4, 3);
            let direct: Vec<f64> = (0..4).map(|k| (0..3).map(|i| preds[i][classes[i][k]]).product()).collect();
            for a in 0..4 {
                for b in 0..4 {
                    assert_eq!(logs[a] > logs[b], direct[a] > direct[b] && (direct[a] / direct[b] - 1.0).abs() > 1e-12);
                }
                assert_eq!(rank_of(&logs, a), (0..4).filter(|&b| direct[b] > direct[a] * (1.0 + 1e-12)).count());
            }
        }
    }

    #[test]
    fn rank_counts_strictly_greater() {
        let mut rng = rng_for(3, "rank", 0);
        for _ in 0..1000 {
            let s: Vec<f64> = (0..256).map(|_| f64::from(rng.random_range(0..50u8))).collect();
            let k = rng.random_range(0..256);
            let mut oracle = 0;
            for &x in &s {
                if x > s[k] {
                    oracle += 1;
                }
            }
            assert_eq!(rank_of(&s, k), oracle);
        }
        let mut s: Vec<f64> = (0..256).map(f64::from).collect();
        assert_eq!(rank_of(&s, 255), 0);
        assert_eq!(rank_of(&s, 0), 255);
        s[3] = 255.0;
        assert_eq!(rank_of(&s, 255), 0);
    }

    #[test]
    fn indistinguishable_candidates_collapse() {
        // one trace under LSB: candidates split into two classes only
        let model = LeakageModel::default();
        let pts = [[5u8; 16]];
        let map = KeyHypothesisMap::new(&pts, &model);
        let truth = (0..256).find(|&k| map.class(0, k as u8) == 0).unwrap();
        let preds = [vec![0.1, 0.9]];
        let s = log_scores(&preds, |i, k| map.class(i, k as u8), 256, 1);
        assert_eq!(rank_of(&s, truth), 128);
        assert_eq!(distinguishable_rank(&s, &map, truth, 1), 1);
    }
}
