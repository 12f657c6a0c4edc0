use super::network::{Network, Workspace};

/// Largest relative difference between backpropagated gradients of the mean
/// batch loss and central finite differences with step `h`, over every
/// parameter. Differences are taken relative to `max(|a|, |n|, 1e-6)`.
pub fn gradient_check(net: &Network<f64>, batch: &[(&[f64], usize)], h: f64) -> f64 {
    let mut ws = Workspace::default();
    let mut grads = net.zeros_like();
    for &(x, label) in batch {
        net.accumulate_gradient(x, label, &mut grads, &mut ws);
    }
    let scale = 1.0 / batch.len() as f64;

    let loss = |n: &Network<f64>, ws: &mut Workspace<f64>| -> f64 {
        let mut scratch = n.zeros_like();
        batch.iter().map(|&(x, label)| n.accumulate_gradient(x, label, &mut scratch, ws)).sum::<f64>() * scale
    };

    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for layer in 0..net.params.len() {
        for i in 0..net.params[layer].len() {
            let w = net.params[layer][i];
            probe.params[layer][i] = w + h;
            let up = loss(&probe, &mut ws);
            probe.params[layer][i] = w - h;
            let down = loss(&probe, &mut ws);
            probe.params[layer][i] = w;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[layer][i] * scale;
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::LayerKind;
    use crate::seed::rng_for;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::Rng;

    fn batch(len: usize, count: usize, classes: usize) -> Vec<(Vec<f64>, usize)> {
        let mut rng = rng_for(42, "gradcheck", len as u64);
        (0..count)
            .map(|_| ((0..len).map(|_| rng.random_range(-2.0..2.0)).collect(), rng.random_range(0..classes)))
            .collect()
    }

    fn refs(b: &[(Vec<f64>, usize)]) -> Vec<(&[f64], usize)> {
        b.iter().map(|(x, l)| (x.as_slice(), *l)).collect()
    }

    #[test]
    fn two_layer_mlp() {
        let layers = vec![
            LayerKind::Dense { inputs: 4, outputs: 5 },
            LayerKind::Relu,
            LayerKind::Dense { inputs: 5, outputs: 3 },
        ];
        let net = Network::<f64>::new(4, layers, 3, 1).unwrap();
        let b = batch(4, 6, 3);
        let err = gradient_check(&net, &refs(&b), 1e-5);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn conv_pool_dense() {
        let layers = vec![
            LayerKind::Conv1d { in_channels: 1, out_channels: 2, kernel: 3 },
            LayerKind::Relu,
            LayerKind::AvgPool { size: 2 },
            LayerKind::Conv1d { in_channels: 2, out_channels: 3, kernel: 4 },
            LayerKind::AvgPool { size: 2 },
            LayerKind::Dense { inputs: 12, outputs: 2 },
        ];
        let net = Network::<f64>::new(16, layers, 2, 5).unwrap();
        let b = batch(16, 4, 2);
        let err = gradient_check(&net, &refs(&b), 1e-5);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn zero_inputs_stay_finite() {
        let layers = vec![LayerKind::Dense { inputs: 4, outputs: 2 }];
        let net = Network::<f64>::new(4, layers, 2, 0).unwrap();
        let zero = [0.0; 4];
        let err = gradient_check(&net, &[(&zero, 0), (&zero, 1)], 1e-5);
        assert!(err.is_finite());
    }
}
