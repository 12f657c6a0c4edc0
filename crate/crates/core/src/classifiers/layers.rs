//! Layer kernels. Activations are flat, channel-major: `x[c * len + t]`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub len: usize,
}

impl Shape {
    pub fn size(&self) -> usize {
        self.channels * self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Dense { inputs: usize, outputs: usize },
    Relu,
    /// Zero-padded so the output keeps the input length.
    Conv1d { in_channels: usize, out_channels: usize, kernel: usize },
    /// Non-overlapping; a ragged tail is dropped.
    AvgPool { size: usize },
}

impl LayerKind {
    pub fn output_shape(&self, input: Shape) -> Shape {
        match *self {
            LayerKind::Dense { outputs, .. } => Shape { channels: 1, len: outputs },
            LayerKind::Relu => input,
            LayerKind::Conv1d { out_channels, .. } => Shape { channels: out_channels, len: input.len },
            LayerKind::AvgPool { size } => Shape { channels: input.channels, len: input.len / size },
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, outputs } => outputs * inputs + outputs,
            LayerKind::Conv1d { in_channels, out_channels, kernel } => out_channels * in_channels * kernel + out_channels,
            LayerKind::Relu | LayerKind::AvgPool { .. } => 0,
        }
    }

    /// Fan-in and fan-out used for Glorot initialisation.
    pub fn fans(&self) -> (usize, usize) {
        match *self {
            LayerKind::Dense { inputs, outputs } => (inputs, outputs),
            LayerKind::Conv1d { in_channels, out_channels, kernel } => (in_channels * kernel, out_channels * kernel),
            _ => (0, 0),
        }
    }

    /// Number of leading parameters that are weights (the rest are biases).
    pub fn weight_count(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, outputs } => outputs * inputs,
            LayerKind::Conv1d { in_channels, out_channels, kernel } => out_channels * in_channels * kernel,
            _ => 0,
        }
    }
}

pub(crate) fn forward<T: Real>(kind: LayerKind, params: &[T], input: Shape, x: &[T], y: &mut Vec<T>) {
    let out = kind.output_shape(input);
    y.clear();
    match kind {
        LayerKind::Dense { inputs, outputs } => {
            let (w, b) = params.split_at(outputs * inputs);
            y.extend((0..outputs).map(|o| {
                let row = &w[o * inputs..(o + 1) * inputs];
                b[o] + dot(row, x)
            }));
        }
        LayerKind::Relu => y.extend(x.iter().map(|&v| if v > T::ZERO { v } else { T::ZERO })),
        LayerKind::Conv1d { in_channels, out_channels, kernel } => {
            let len = input.len;
            let (w, b) = params.split_at(out_channels * in_channels * kernel);
            y.resize(out.size(), T::ZERO);
            let pad = (kernel - 1) / 2;
            for o in 0..out_channels {
                let yo = &mut y[o * len..(o + 1) * len];
                yo.iter_mut().for_each(|v| *v = b[o]);
                for c in 0..in_channels {
                    let xc = &x[c * len..(c + 1) * len];
                    for j in 0..kernel {
                        let wv = w[(o * in_channels + c) * kernel + j];
                        let (t0, t1, s0) = tap_range(len, j, pad);
                        for (yv, &xv) in yo[t0..t1].iter_mut().zip(&xc[s0..s0 + (t1 - t0)]) {
                            *yv += wv * xv;
                        }
                    }
                }
            }
        }
        LayerKind::AvgPool { size } => {
            let scale = T::ONE / T::from_f64(size as f64);
            for c in 0..input.channels {
                let xc = &x[c * input.len..(c + 1) * input.len];
                y.extend((0..out.len).map(|u| xc[u * size..(u + 1) * size].iter().copied().sum::<T>() * scale));
            }
        }
    }
}

/// Accumulates parameter gradients into `grad` and writes the input gradient
/// into `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    kind: LayerKind,
    params: &[T],
    input: Shape,
    x: &[T],
    dy: &[T],
    dx: &mut Vec<T>,
    grad: &mut [T],
    need_dx: bool,
) {
    dx.clear();
    if need_dx {
        dx.resize(input.size(), T::ZERO);
    }
    match kind {
        LayerKind::Dense { inputs, outputs } => {
            let (w, _) = params.split_at(outputs * inputs);
            let (gw, gb) = grad.split_at_mut(outputs * inputs);
            for o in 0..outputs {
                let d = dy[o];
                gb[o] += d;
                if d == T::ZERO {
                    continue;
                }
                axpy(d, x, &mut gw[o * inputs..(o + 1) * inputs]);
                if need_dx {
                    axpy(d, &w[o * inputs..(o + 1) * inputs], dx);
                }
            }
        }
        LayerKind::Relu => {
            if need_dx {
                for ((g, &v), &d) in dx.iter_mut().zip(x).zip(dy) {
                    *g = if v > T::ZERO { d } else { T::ZERO };
                }
            }
        }
        LayerKind::Conv1d { in_channels, out_channels, kernel } => {
            let len = input.len;
            let (w, _) = params.split_at(out_channels * in_channels * kernel);
            let (gw, gb) = grad.split_at_mut(out_channels * in_channels * kernel);
            let pad = (kernel - 1) / 2;
            for o in 0..out_channels {
                let dyo = &dy[o * len..(o + 1) * len];
                gb[o] += dyo.iter().copied().sum::<T>();
                for c in 0..in_channels {
                    let xc = &x[c * len..(c + 1) * len];
                    for j in 0..kernel {
                        let (t0, t1, s0) = tap_range(len, j, pad);
                        let span = t1 - t0;
                        let idx = (o * in_channels + c) * kernel + j;
                        gw[idx] += dot(&dyo[t0..t1], &xc[s0..s0 + span]);
                        if need_dx {
                            axpy(w[idx], &dyo[t0..t1], &mut dx[c * len + s0..c * len + s0 + span]);
                        }
                    }
                }
            }
        }
        LayerKind::AvgPool { size } => {
            if need_dx {
                let out_len = input.len / size;
                let scale = T::ONE / T::from_f64(size as f64);
                for c in 0..input.channels {
                    for u in 0..out_len {
                        let d = dy[c * out_len + u] * scale;
                        dx[c * input.len + u * size..c * input.len + (u + 1) * size].iter_mut().for_each(|g| *g = d);
                    }
                }
            }
        }
    }
}

/// For tap `j`, the output positions `t0..t1` whose input `t + j - pad` is in
/// range, and the first such input index.
#[inline]
fn tap_range(len: usize, j: usize, pad: usize) -> (usize, usize, usize) {
    let t0 = pad.saturating_sub(j);
    let t1 = (len + pad).saturating_sub(j).min(len);
    if t1 <= t0 {
        return (0, 0, 0);
    }
    (t0, t1, t0 + j - pad)
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // four accumulators let the compiler vectorize without reassociating
    let mut acc = [T::ZERO; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * i + k] * b[4 * i + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn conv_same_matches_direct_sum() {
        let kind = LayerKind::Conv1d { in_channels: 2, out_channels: 1, kernel: 3 };
        let params = [1.0, 2.0, 3.0, -1.0, 0.5, 0.0, 10.0];
        let x = [1.0, 2.0, 3.0, 4.0, 0.0, 1.0, 0.0, 1.0];
        let mut y = Vec::new();
        forward::<f64>(kind, &params, Shape { channels: 2, len: 4 }, &x, &mut y);
        // y[t] = 10 + sum_c sum_j w[c][j] * x[c][t + j - 1]
        let expect: Vec<f64> = (0..4)
            .map(|t| {
                let mut s = 10.0;
                for c in 0..2 {
                    for j in 0..3 {
                        let i = t as isize + j as isize - 1;
                        if (0..4).contains(&i) {
                            s += params[c * 3 + j] * x[c * 4 + i as usize];
                        }
                    }
                }
                s
            })
            .collect();
        assert_eq!(y, expect);
    }

    #[test]
    fn even_kernel_and_tiny_inputs() {
        for len in 1..6 {
            for kernel in 1..5 {
                let (t0, t1, s0) = tap_range(len, kernel - 1, (kernel - 1) / 2);
                assert!(t0 <= t1 && t1 <= len && s0 + (t1 - t0) <= len);
            }
        }
    }

    #[test]
    fn pool_drops_ragged_tail() {
        let mut y = Vec::new();
        forward::<f64>(LayerKind::AvgPool { size: 2 }, &[], Shape { channels: 1, len: 5 }, &[1.0, 3.0, 5.0, 7.0, 100.0], &mut y);
        assert_eq!(y, vec![2.0, 6.0]);
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 91.0);
    }
}
