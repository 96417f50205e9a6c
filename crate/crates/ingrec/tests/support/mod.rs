#![allow(dead_code)]

//! Shared test oracles: central finite differences over network parameters
//! and inputs, plus the relative-error convention used throughout.

use ingrec::losses::{sigmoid_bce_with_logits, softmax_cce_with_logits, TargetVector};
use ingrec::network::{Head, Network};
use ingrec::rng::Rng;
use ingrec::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// |a − b| / max(|a| + |b|, 1e-8)
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Scalar training loss of a network on a fixed batch, per its head.
pub fn head_loss(net: &Network, input: &Tensor, targets: &[TargetVector]) -> f64 {
    let (logits, _) = net.forward(input).expect("forward");
    match net.head {
        Head::SigmoidMultilabel => {
            let t = TargetVector::batch_tensor(targets).expect("targets");
            sigmoid_bce_with_logits(&logits, &t).expect("bce").0
        }
        Head::SoftmaxSinglelabel => {
            let classes: Vec<usize> = targets.iter().map(|t| t.indices()[0]).collect();
            softmax_cce_with_logits(&logits, &classes).expect("cce").0
        }
    }
}

/// Analytic gradients of `head_loss` w.r.t. every parameter and the input.
pub fn analytic_grads(net: &Network, input: &Tensor, targets: &[TargetVector]) -> (Vec<f64>, Vec<f64>) {
    let (logits, cache) = net.forward(input).expect("forward");
    let dlogits = match net.head {
        Head::SigmoidMultilabel => {
            let t = TargetVector::batch_tensor(targets).expect("targets");
            sigmoid_bce_with_logits(&logits, &t).expect("bce").1
        }
        Head::SoftmaxSinglelabel => {
            let classes: Vec<usize> = targets.iter().map(|t| t.indices()[0]).collect();
            softmax_cce_with_logits(&logits, &classes).expect("cce").1
        }
    };
    let (grads, input_grad) = net.backward(&cache, &dlogits).expect("backward");
    (grads.flat(), input_grad.into_data())
}

/// Central finite differences over every network parameter.
pub fn fd_param_grads(net: &Network, input: &Tensor, targets: &[TargetVector]) -> Vec<f64> {
    let base = net.flat_params();
    let mut out = Vec::with_capacity(base.len());
    let mut probe = net.clone();
    for i in 0..base.len() {
        let mut params = base.clone();
        params[i] = base[i] + FD_STEP;
        probe.load_flat_params(&params).unwrap();
        let plus = head_loss(&probe, input, targets);
        params[i] = base[i] - FD_STEP;
        probe.load_flat_params(&params).unwrap();
        let minus = head_loss(&probe, input, targets);
        out.push((plus - minus) / (2.0 * FD_STEP));
    }
    probe.load_flat_params(&base).unwrap();
    out
}

/// Central finite differences over every input entry.
pub fn fd_input_grads(net: &Network, input: &Tensor, targets: &[TargetVector]) -> Vec<f64> {
    let mut out = Vec::with_capacity(input.len());
    let mut probe = input.clone();
    for i in 0..input.len() {
        let orig = input.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let plus = head_loss(net, &probe, targets);
        probe.data_mut()[i] = orig - FD_STEP;
        let minus = head_loss(net, &probe, targets);
        probe.data_mut()[i] = orig;
        out.push((plus - minus) / (2.0 * FD_STEP));
    }
    out
}

/// Worst relative error between analytic gradients and the finite-difference
/// oracle, across every parameter and every input entry.
pub fn max_gradcheck_error(net: &Network, input: &Tensor, targets: &[TargetVector]) -> f64 {
    let (analytic_params, analytic_input) = analytic_grads(net, input, targets);
    let fd_params = fd_param_grads(net, input, targets);
    let fd_input = fd_input_grads(net, input, targets);
    let worst_param = analytic_params
        .iter()
        .zip(&fd_params)
        .map(|(&a, &n)| rel_error(a, n))
        .fold(0.0, f64::max);
    let worst_input = analytic_input
        .iter()
        .zip(&fd_input)
        .map(|(&a, &n)| rel_error(a, n))
        .fold(0.0, f64::max);
    worst_param.max(worst_input)
}

/// A small net exercising every layer kind:
/// conv2d → relu → maxpool2x2 → flatten → dense.
pub fn all_kinds_net(head: Head, rng: &mut Rng) -> Network {
    use ingrec::layers::{Conv2d, Dense, Layer};
    Network::new(
        vec![
            Layer::Conv2d(Conv2d::seeded(2, 3, 3, 3, 1, rng)),
            Layer::Relu,
            Layer::MaxPool2x2,
            Layer::Flatten,
            Layer::Dense(Dense::seeded(12, 4, rng)),
        ],
        head,
    )
}

/// Central differences are only a valid oracle away from the relu and
/// maxpool breakpoints: a pre-activation within the step of zero (or a pool
/// window with a near-tie) puts the secant across the kink and the estimate
/// measures the kink, not the gradient. This margin keeps every perturbed
/// forward pass on one side.
pub const KINK_MARGIN: f64 = 1e-3;

/// True when every relu input and every pool window keeps `margin` distance
/// from its breakpoint for the given input.
pub fn differentiable_at(net: &Network, input: &Tensor, margin: f64) -> bool {
    use ingrec::layers::Layer;
    let Ok((_, cache)) = net.forward(input) else {
        return false;
    };
    for (i, layer) in net.layers.iter().enumerate() {
        let layer_input = &cache.activations[i];
        match layer {
            Layer::Relu => {
                if layer_input.data().iter().any(|v| v.abs() < margin) {
                    return false;
                }
            }
            Layer::MaxPool2x2 => {
                let s = layer_input.sample_shape();
                let (c, h, w) = (s[0], s[1], s[2]);
                for b in 0..layer_input.batch() {
                    let d = layer_input.sample(b);
                    for ch in 0..c {
                        for py in 0..h / 2 {
                            for px in 0..w / 2 {
                                let mut window = [0.0f64; 4];
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        window[dy * 2 + dx] =
                                            d[ch * h * w + (py * 2 + dy) * w + px * 2 + dx];
                                    }
                                }
                                window.sort_by(|a, b| b.partial_cmp(a).unwrap());
                                if window[0] - window[1] < margin {
                                    return false;
                                }
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    true
}

/// Draw a random case, redrawing (deterministically) until the evaluation
/// point is differentiable with margin.
pub fn differentiable_case(
    net: &Network,
    rng: &mut Rng,
    head: Head,
) -> (Tensor, Vec<TargetVector>) {
    for _ in 0..64 {
        let (input, targets) = random_case(rng, head);
        if differentiable_at(net, &input, KINK_MARGIN) {
            return (input, targets);
        }
    }
    panic!("no differentiable evaluation point found in 64 draws");
}

/// Random batch + multi-label targets for the all-kinds net.
pub fn random_case(rng: &mut Rng, head: Head) -> (Tensor, Vec<TargetVector>) {
    let input = Tensor::new(
        vec![2, 2, 6, 6],
        (0..2 * 2 * 6 * 6).map(|_| rng.range_f64(-1.0, 1.0)).collect(),
    )
    .unwrap();
    let targets = match head {
        Head::SigmoidMultilabel => (0..2)
            .map(|_| {
                let bits: Vec<u8> = (0..4).map(|_| rng.below(2) as u8).collect();
                TargetVector::new(bits).unwrap()
            })
            .collect(),
        Head::SoftmaxSinglelabel => (0..2)
            .map(|_| TargetVector::from_indices(&[rng.below(4)], 4).unwrap())
            .collect(),
    };
    (input, targets)
}
