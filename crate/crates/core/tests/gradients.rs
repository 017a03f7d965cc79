mod common;

use std::sync::Arc;

use accordion_core::baseline::*;
use accordion_core::data::*;
use accordion_core::nn::*;
use accordion_core::rng::RngStream;
use accordion_core::Tensor;
use common::{random_spec, random_tensor};
use rand::Rng;

/// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)` over
/// every parameter, with central differences of step `1e-6`.
fn max_relative_error(net: &Network<f64>, batch: &Tensor<f64>, labels: &[usize]) -> f64 {
    let (_, grads) = gradients(net, batch, labels).unwrap();
    let loss_at = |n: &Network<f64>| categorical_crossentropy(&n.forward(batch).unwrap(), labels).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (pi, g) in grads.iter().enumerate() {
        for j in 0..g.len() {
            let mut plus = net.clone();
            plus.params_mut().nth(pi).unwrap()[j] += h;
            let mut minus = net.clone();
            minus.params_mut().nth(pi).unwrap()[j] -= h;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let analytic = g.data()[j];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}

fn has_conv_and_pool(spec: &NetworkSpec) -> bool {
    spec.layers.iter().any(|l| matches!(l, LayerSpec::Conv2d(_)))
        && spec.layers.iter().any(|l| matches!(l, LayerSpec::MaxPool2d(_) | LayerSpec::AvgPool2d(_)))
}

#[test]
fn gradients_match_central_differences_on_random_architectures() {
    let specs: Vec<_> = (0..).map(random_spec).filter(|s| has_conv_and_pool(s)).take(8).collect();
    for spec in specs {
        let mut rng = RngStream::new(spec.param_count() as u64, 1);
        let net: Network<f64> = glorot_init(spec.clone(), 3).unwrap().cast();
        let [h, w, c] = spec.input;
        let batch = random_tensor(&mut rng, &[3, h, w, c], 1.0);
        let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..spec.class_count)).collect();
        let err = max_relative_error(&net, &batch, &labels);
        assert!(err <= 1e-3, "{}: {err}", spec.name);
    }
}

#[test]
fn softmax_dense_gradient_has_closed_form() {
    let spec = Arc::new(NetworkSpec {
        name: "dense".into(),
        input: [1, 1, 3],
        class_count: 2,
        layers: vec![
            LayerSpec::Flatten,
            LayerSpec::Dense(Dense { in_features: 3, out_features: 2, activation: Activation::Softmax }),
        ],
    });
    let w = [0.3, -0.2, 0.1, 0.5, -0.4, 0.25];
    let net = Network::new(spec, vec![Tensor::new([3, 2], w.to_vec()).unwrap()]).unwrap();
    let x = [[1.0, 2.0, -1.0], [0.5, -0.5, 0.0]];
    let labels = [1, 0];
    let batch = Tensor::new([2, 1, 1, 3], x.concat()).unwrap();
    let (_, grads) = gradients(&net, &batch, &labels).unwrap();
    for i in 0..3 {
        for k in 0..2 {
            let mut want = 0.0;
            for (n, row) in x.iter().enumerate() {
                let z: Vec<f64> = (0..2).map(|o| (0..3).map(|j| row[j] * w[j * 2 + o]).sum()).collect();
                let denom: f64 = z.iter().map(|v| v.exp()).sum();
                let p = z[k].exp() / denom;
                want += row[i] * (p - f64::from(u8::from(labels[n] == k))) / 2.0;
            }
            assert!((grads[0].data()[i * 2 + k] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn perfect_predictions_give_zero_gradient() {
    let spec = random_spec(4);
    let net: Network<f64> = glorot_init(spec.clone(), 1).unwrap().cast();
    let [h, w, c] = spec.input;
    let batch = random_tensor(&mut RngStream::new(0, 0), &[2, h, w, c], 1.0);
    let (_, mut cache) = forward_with_cache(&net, &batch).unwrap();
    let classes = spec.class_count;
    let labels = [0, classes - 1];
    let mut one_hot = vec![0.0; 2 * classes];
    one_hot[0] = 1.0;
    one_hot[2 * classes - 1] = 1.0;
    *cache.activations.last_mut().unwrap() = Tensor::new([2, classes], one_hot).unwrap();
    let grads = backprop(&net, &cache, &labels).unwrap();
    assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn cached_forward_is_bit_identical_and_accounted() {
    let spec = Arc::new(mnist_custom());
    let net = glorot_init(spec.clone(), 2).unwrap();
    let batch = Tensor::new(
        [4, 28, 28, 1],
        (0..4 * 784).map(|i| ((i * 37) % 256) as f32 / 255.0).collect(),
    )
    .unwrap();
    let (probs, cache) = forward_with_cache(&net, &batch).unwrap();
    let plain = net.forward(&batch).unwrap();
    assert!(probs.data().iter().zip(plain.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(cache.activations.len(), spec.layers.len() + 1);
    let shapes = spec.output_shapes().unwrap();
    let per_image: usize = 784 + shapes.iter().map(Shape::len).sum::<usize>();
    assert_eq!(cache.scalar_count(), 4 * per_image);
}

#[test]
fn optimizers_apply_their_update_rules() {
    let spec = Arc::new(synthetic_tiny(2));
    let start = glorot_init(spec, 0).unwrap();
    let grads: Vec<Tensor> = start
        .params()
        .iter()
        .map(|p| Tensor::new(p.shape().to_vec(), (0..p.len()).map(|i| (i as f32 - 3.0) * 0.1).collect()).unwrap())
        .collect();

    let sgd = BaselineConfig { optimizer: OptimizerKind::Sgd, learning_rate: 0.05, ..Default::default() };
    let mut net = start.clone();
    Optimizer::new(&sgd, &net).apply(&mut net, &grads);
    for ((p, q), g) in net.params().iter().zip(start.params()).zip(&grads) {
        for ((&a, &b), &d) in p.data().iter().zip(q.data()).zip(g.data()) {
            assert_eq!(a, b - 0.05f32 * d);
        }
    }

    // two Adam steps with a constant gradient g: m̂ = g and v̂ = g², so each
    // step moves by lr · g / (|g| + ε)
    let adam = BaselineConfig::default();
    let mut net = start.clone();
    let mut opt = Optimizer::new(&adam, &net);
    opt.apply(&mut net, &grads);
    opt.apply(&mut net, &grads);
    for ((p, q), g) in net.params().iter().zip(start.params()).zip(&grads) {
        for ((&a, &b), &d) in p.data().iter().zip(q.data()).zip(g.data()) {
            let d = d as f64;
            let want = b as f64 - 2.0 * 0.001 * d / (d.abs() + 1e-7);
            assert!((a as f64 - want).abs() < 1e-6, "{a} vs {want}");
        }
    }
}

#[test]
fn small_steps_reduce_the_loss() {
    let data = make_synthetic(&SyntheticTask { count: 64, ..Default::default() }, 3).unwrap();
    let spec = Arc::new(synthetic_tiny(2));
    let batch = data.batch(0, 64).unwrap();
    for optimizer in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        let config = BaselineConfig { optimizer, learning_rate: 1e-3, ..Default::default() };
        let mut net = glorot_init(spec.clone(), 6).unwrap();
        let (before, grads) = gradients(&net, &batch, data.labels()).unwrap();
        Optimizer::new(&config, &net).apply(&mut net, &grads);
        let after = categorical_crossentropy(&net.forward(&batch).unwrap(), data.labels()).unwrap();
        assert!(after < before, "{optimizer:?}: {after} vs {before}");
    }
}

#[test]
fn trainer_records_steps_and_epochs() {
    let data = make_synthetic(&SyntheticTask { count: 100, ..Default::default() }, 4).unwrap();
    let config = BaselineConfig { epochs: 2, eval_every: 3, ..Default::default() };
    let net = glorot_init(Arc::new(synthetic_tiny(2)), 0).unwrap();
    let run = train_bp(&config, net.clone(), &data, &data, 9).unwrap();
    // 100 examples in batches of 32 → 4 steps per epoch, 8 in total
    let steps: Vec<u64> = run.records.iter().map(|r| r.generation).collect();
    assert_eq!(steps, [0, 3, 6, 8]);
    assert!(run.records.iter().all(|r| r.evaluations_so_far == r.generation + 1));
    let again = train_bp(&config, net, &data, &data, 9).unwrap();
    assert_eq!(run.records, again.records);
}

#[test]
fn zero_gradients_and_zero_rates_leave_parameters_alone() {
    let start = glorot_init(Arc::new(synthetic_tiny(2)), 5).unwrap();
    let zeros: Vec<Tensor> = start.params().iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
    let ones: Vec<Tensor> = start.params().iter().map(|p| Tensor::filled(p.shape().to_vec(), 1.0)).collect();
    let cases = [
        (BaselineConfig::default(), &zeros),
        (BaselineConfig { optimizer: OptimizerKind::Sgd, ..Default::default() }, &zeros),
        (BaselineConfig { optimizer: OptimizerKind::Sgd, learning_rate: 0.0, ..Default::default() }, &ones),
    ];
    for (config, grads) in cases {
        let mut net = start.clone();
        Optimizer::new(&config, &net).apply(&mut net, grads);
        for (p, q) in net.params().iter().zip(start.params()) {
            assert_eq!(p.shape(), q.shape());
            assert!(p.data().iter().zip(q.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}

#[test]
fn loss_change_scales_with_learning_rate() {
    let data = make_synthetic(&SyntheticTask { count: 64, ..Default::default() }, 8).unwrap();
    let batch = data.batch(0, 64).unwrap();
    let net = glorot_init(Arc::new(synthetic_tiny(2)), 2).unwrap();
    let (before, grads) = gradients(&net, &batch, data.labels()).unwrap();
    let change = |lr: f64| {
        let config = BaselineConfig { optimizer: OptimizerKind::Sgd, learning_rate: lr, ..Default::default() };
        let mut stepped = net.clone();
        Optimizer::new(&config, &stepped).apply(&mut stepped, &grads);
        categorical_crossentropy(&stepped.forward(&batch).unwrap(), data.labels()).unwrap() - before
    };
    // first order: Δloss ≈ -lr·|g|²
    let norm: f64 = grads.iter().flat_map(|g| g.data()).map(|&v| (v as f64).powi(2)).sum();
    for lr in [1e-2, 2e-2] {
        let d = change(lr);
        assert!(d < 0.0);
        assert!((d / (-lr * norm) - 1.0).abs() < 0.1, "lr {lr}: {d} vs {}", -lr * norm);
    }
}
