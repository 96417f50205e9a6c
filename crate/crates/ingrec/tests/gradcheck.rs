//! Finite-difference gradient checks for the layer zoo and both head/loss
//! pairs. Every analytic gradient is compared against a central-difference
//! oracle (step 1e-5) that never touches the backward path.

mod support;

use ingrec::layers::{Dense, Layer};
use ingrec::losses::{sigmoid, sigmoid_bce_with_logits, TargetVector};
use ingrec::network::{Head, Network};
use ingrec::rng::Rng;
use ingrec::tensor::Tensor;
use support::*;

#[test]
fn dense_weight_gradient_has_outer_product_structure() {
    // L = sum(logits) for a single dense layer makes dL/dW[o][i] = sum_b x[b][i].
    let mut rng = Rng::seed_from(41);
    let dense = Dense::seeded(3, 2, &mut rng);
    let net = Network::new(vec![Layer::Dense(dense)], Head::SigmoidMultilabel);
    let x = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75]).unwrap();
    let (_, cache) = net.forward(&x).unwrap();
    let ones = Tensor::filled(&[2, 2], 1.0);
    let (grads, _) = net.backward(&cache, &ones).unwrap();
    let dw = &grads.layers[0].as_ref().unwrap().weight;
    for o in 0..2 {
        for i in 0..3 {
            let expected: f64 = (0..2).map(|b| x.sample(b)[i]).sum();
            assert!(
                (dw.data()[o * 3 + i] - expected).abs() < 1e-12,
                "dW[{o}][{i}]"
            );
        }
    }
    // Same structure via the finite-difference oracle on sum(logits).
    let sum_loss = |net: &Network| {
        let (logits, _) = net.forward(&x).unwrap();
        logits.data().iter().sum::<f64>()
    };
    let base = net.flat_params();
    let mut probe = net.clone();
    for (i, &analytic) in grads.flat().iter().enumerate() {
        let mut p = base.clone();
        p[i] = base[i] + FD_STEP;
        probe.load_flat_params(&p).unwrap();
        let plus = sum_loss(&probe);
        p[i] = base[i] - FD_STEP;
        probe.load_flat_params(&p).unwrap();
        let minus = sum_loss(&probe);
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        assert!(
            rel_error(analytic, numeric) < 1e-6,
            "param {i}: analytic {analytic} vs numeric {numeric}"
        );
    }
}

#[test]
fn full_conv_relu_dense_net_matches_finite_differences() {
    let mut rng = Rng::seed_from(7);
    let net = all_kinds_net(Head::SigmoidMultilabel, &mut rng);
    let (input, targets) = random_case(&mut rng, Head::SigmoidMultilabel);
    let err = max_gradcheck_error(&net, &input, &targets);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn maxpool_backward_matches_finite_differences_on_random_map() {
    let mut rng = Rng::seed_from(19);
    // conv 1x1 in front so maxpool sees a parameterized input path.
    let net = Network::new(
        vec![
            Layer::Conv2d(ingrec::layers::Conv2d::seeded(1, 2, 1, 1, 1, &mut rng)),
            Layer::MaxPool2x2,
            Layer::Flatten,
            Layer::Dense(Dense::seeded(8, 3, &mut rng)),
        ],
        Head::SigmoidMultilabel,
    );
    let input = Tensor::new(
        vec![1, 1, 4, 4],
        (0..16).map(|_| rng.range_f64(-2.0, 2.0)).collect(),
    )
    .unwrap();
    let targets = vec![TargetVector::new(vec![1, 0, 1]).unwrap()];
    let err = max_gradcheck_error(&net, &input, &targets);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn softmax_cce_head_matches_finite_differences() {
    let mut rng = Rng::seed_from(23);
    let net = all_kinds_net(Head::SoftmaxSinglelabel, &mut rng);
    let (input, targets) = random_case(&mut rng, Head::SoftmaxSinglelabel);
    let err = max_gradcheck_error(&net, &input, &targets);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn bce_logit_gradient_is_p_minus_y_against_oracle() {
    // dL/dz = (sigmoid(z) − y) / batch, checked against central differences
    // of the loss itself.
    let mut rng = Rng::seed_from(3);
    for _ in 0..20 {
        let z: Vec<f64> = (0..6).map(|_| rng.range_f64(-4.0, 4.0)).collect();
        let y: Vec<f64> = (0..6).map(|_| rng.below(2) as f64).collect();
        let logits = Tensor::new(vec![2, 3], z.clone()).unwrap();
        let targets = Tensor::new(vec![2, 3], y).unwrap();
        let (_, grad) = sigmoid_bce_with_logits(&logits, &targets).unwrap();
        let p = sigmoid(&logits);
        for i in 0..6 {
            let expected = (p.data()[i] - targets.data()[i]) / 2.0;
            assert!((grad.data()[i] - expected).abs() < 1e-12);

            let mut plus = logits.clone();
            plus.data_mut()[i] += FD_STEP;
            let mut minus = logits.clone();
            minus.data_mut()[i] -= FD_STEP;
            let lp = sigmoid_bce_with_logits(&plus, &targets).unwrap().0;
            let lm = sigmoid_bce_with_logits(&minus, &targets).unwrap().0;
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            assert!(
                rel_error(grad.data()[i], numeric) < 1e-6,
                "logit {i}: {} vs {numeric}",
                grad.data()[i]
            );
        }
    }
}

#[test]
fn zero_upstream_gradients_zero_every_parameter_gradient() {
    let mut rng = Rng::seed_from(11);
    let net = all_kinds_net(Head::SigmoidMultilabel, &mut rng);
    let (input, _) = random_case(&mut rng, Head::SigmoidMultilabel);
    let (logits, cache) = net.forward(&input).unwrap();
    let zeros = Tensor::zeros(logits.shape());
    let (grads, input_grad) = net.backward(&cache, &zeros).unwrap();
    assert!(grads.flat().iter().all(|&g| g == 0.0));
    assert!(input_grad.data().iter().all(|&g| g == 0.0));
}

#[test]
fn gradient_record_shapes_match_parameters() {
    let mut rng = Rng::seed_from(13);
    let net = all_kinds_net(Head::SigmoidMultilabel, &mut rng);
    let (input, targets) = random_case(&mut rng, Head::SigmoidMultilabel);
    let t = TargetVector::batch_tensor(&targets).unwrap();
    let (logits, cache) = net.forward(&input).unwrap();
    let (_, dlogits) = sigmoid_bce_with_logits(&logits, &t).unwrap();
    let (grads, _) = net.backward(&cache, &dlogits).unwrap();
    assert_eq!(grads.layers.len(), net.layers.len());
    for (layer, grad) in net.layers.iter().zip(&grads.layers) {
        match (layer.param_count(), grad) {
            (0, None) => {}
            (n, Some(g)) => assert_eq!(n, g.weight.len() + g.bias.len()),
            (n, None) => panic!("layer with {n} params got no gradients"),
        }
    }
    assert_eq!(grads.flat().len(), net.param_count());
}
