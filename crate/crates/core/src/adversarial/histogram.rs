use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Default number of amplitude bins.
pub const AMPLITUDE_BINS: usize = 160;

/// Occurrence count of each sample position, positions past `n` clamped to
/// the last bin.
pub fn position_histogram(positions: impl IntoIterator<Item = usize>, n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    if n == 0 {
        return counts;
    }
    for p in positions {
        counts[p.min(n - 1)] += 1;
    }
    counts
}

/// Equal-width histogram of amplitudes over `[lo, hi]`.
///
/// Alongside counts each bin keeps the sum of what fell into it, so a bin can
/// report the mean amplitude it holds rather than its center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeHistogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    pub sums: Vec<f64>,
}

impl AmplitudeHistogram {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Self {
        assert!(bins > 0 && lo <= hi);
        AmplitudeHistogram { lo, hi, counts: vec![0; bins], sums: vec![0.0; bins] }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    /// Bin of `x`; out-of-range values land in the edge bins.
    pub fn bin_of(&self, x: f64) -> usize {
        let w = self.width();
        if w <= 0.0 || x <= self.lo {
            return 0;
        }
        let b = libm::floor((x - self.lo) / w);
        if b >= self.bins() as f64 {
            self.bins() - 1
        } else {
            b as usize
        }
    }

    pub fn add(&mut self, x: f64) {
        let b = self.bin_of(x);
        self.counts[b] += 1;
        self.sums[b] += x;
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let w = self.width();
        (self.lo + w * bin as f64, self.lo + w * (bin + 1) as f64)
    }

    pub fn center(&self, bin: usize) -> f64 {
        let (a, b) = self.edges(bin);
        0.5 * (a + b)
    }

    /// Mean amplitude in `bin`, or its center when empty.
    pub fn bin_mean(&self, bin: usize) -> f64 {
        match self.counts[bin] {
            0 => self.center(bin),
            c => self.sums[bin] / c as f64,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Fullest bin whose mean amplitude satisfies `side`; ties go to the
    /// lower bin.
    pub fn mode_where(&self, side: impl Fn(f64) -> bool) -> Option<usize> {
        let mut best: Option<usize> = None;
        for b in 0..self.bins() {
            if self.counts[b] == 0 || !side(self.bin_mean(b)) {
                continue;
            }
            if best.is_none_or(|m| self.counts[b] > self.counts[m]) {
                best = Some(b);
            }
        }
        best
    }

    pub fn same_binning(&self, other: &Self) -> bool {
        self.bins() == other.bins() && self.lo == other.lo && self.hi == other.hi
    }
}

/// Histogram over `[lo, hi]`, or over the values' own range when not given.
pub fn amplitude_histogram(amplitudes: &[f64], bins: usize, range: Option<(f64, f64)>) -> AmplitudeHistogram {
    let (lo, hi) = range.unwrap_or_else(|| {
        amplitudes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
    });
    let (lo, hi) = if lo.is_finite() && hi.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let mut h = AmplitudeHistogram::new(bins, lo, hi);
    amplitudes.iter().for_each(|&x| h.add(x));
    h
}
