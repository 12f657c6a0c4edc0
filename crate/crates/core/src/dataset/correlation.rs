use alloc::vec::Vec;

use super::{Dataset, DatasetError};
use crate::aes::sbox;
use crate::stats::pearson;

/// Per-sample Pearson correlation between the trace column and
/// `HW(Sbox(p[b] ^ k[b]))`, using each record's own key.
pub fn correlation_profile(dataset: &Dataset) -> Result<Vec<f64>, DatasetError> {
    if dataset.len() < 3 {
        return Err(DatasetError::TooFewTraces { need: 3, have: dataset.len() });
    }
    let b = dataset.leakage.byte_index as usize;
    let target: Vec<f64> = dataset
        .records
        .iter()
        .map(|r| f64::from(sbox(r.plaintext[b] ^ r.key[b]).count_ones()))
        .collect();
    let mut column = Vec::with_capacity(dataset.len());
    Ok((0..dataset.trace_len)
        .map(|s| {
            column.clear();
            column.extend(dataset.rows().map(|r| r[s]));
            pearson(&column, &target)
        })
        .collect())
}

/// Positions of the `k` largest values of `|profile|`, greedily suppressing
/// anything within `min_separation` of an already chosen peak. Sorted by
/// decreasing magnitude.
pub fn top_peaks(profile: &[f64], k: usize, min_separation: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..profile.len()).collect();
    order.sort_by(|&a, &b| profile[b].abs().total_cmp(&profile[a].abs()).then(a.cmp(&b)));
    let mut peaks: Vec<usize> = Vec::with_capacity(k);
    for i in order {
        if peaks.len() == k {
            break;
        }
        if peaks.iter().all(|&p| p.abs_diff(i) > min_separation) {
            peaks.push(i);
        }
    }
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::{AcquisitionRecord, LeakageModel};
    use crate::dataset::KeyPolicy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn with_columns(n: usize, f: impl Fn(f64, &mut ChaCha8Rng) -> [f64; 2]) -> Dataset {
        let leakage = LeakageModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let key = [0x2bu8; 16];
        let mut traces = Vec::new();
        let mut records = Vec::new();
        for _ in 0..n {
            let p: [u8; 16] = rng.random();
            let hw = f64::from(sbox(p[2] ^ key[2]).count_ones());
            traces.extend(f(hw, &mut rng));
            records.push(AcquisitionRecord::new(p, key, &leakage));
        }
        Dataset::new(traces, records, leakage, 2, KeyPolicy::Fixed(key)).unwrap()
    }

    #[test]
    fn target_column_correlates_perfectly_and_noise_does_not() {
        let d = with_columns(20_000, |hw, rng| [hw, rng.random::<f64>()]);
        let c = correlation_profile(&d).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12);
        // 5 / sqrt(N) ~ 0.035
        assert!(c[1].abs() < 0.035, "{}", c[1]);
    }

    #[test]
    fn constant_column_is_zero() {
        let d = with_columns(10, |hw, _| [hw, 1.0]);
        assert_eq!(correlation_profile(&d).unwrap()[1], 0.0);
        assert!(correlation_profile(&d.subset(&[0, 1])).is_err());
    }

    #[test]
    fn peaks_respect_separation() {
        let p = [0.0, 0.9, 0.8, 0.1, -0.7, 0.0, 0.0, 0.5, 0.6];
        assert_eq!(top_peaks(&p, 3, 1), [1, 4, 8]);
        assert_eq!(top_peaks(&p, 3, 0), [1, 2, 4]);
        assert_eq!(top_peaks(&p, 10, 3).len(), 2);
    }
}
