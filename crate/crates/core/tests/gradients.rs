use oscnet::activation::Activation;
use oscnet::autodiff::{AdjointFault, OpKind, ParamStore, Tape};
use oscnet::gradcheck::{grad_check, grad_check_with};
use oscnet::layers::{LayerSpec, Network};
use oscnet::oscillator::{HopfLayerConfig, InputMode};
use oscnet::tensor::ComplexTensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-3;
const EPS: f64 = 1e-6;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64, complex: bool) -> ComplexTensor {
    let n: usize = shape.iter().product();
    let re = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    let im = (0..n)
        .map(|_| if complex { rng.random_range(-scale..scale) } else { 0.0 })
        .collect();
    ComplexTensor::from_parts(shape, re, im).unwrap()
}

fn hopf(width: usize, mode: InputMode) -> HopfLayerConfig {
    let mut cfg = HopfLayerConfig::new(width, mode, [1.0, 5.0], 0.01);
    cfg.trainable_freq = true;
    cfg.substeps = 2;
    cfg
}

fn check(specs: Vec<LayerSpec>, input_shape: &[usize], steps: usize, seed: u64) {
    let net = Network::build(input_shape, &specs, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let mut xs = input_shape.to_vec();
    xs.push(steps);
    let x = random_tensor(&mut rng, &xs, 1.0, true);
    let mut ts = net.output_shape.clone();
    ts.push(steps);
    let target = random_tensor(&mut rng, &ts, 1.0, false);
    let report = grad_check(&net, &x, &target, EPS, TOL).unwrap();
    let worst = report.worst().unwrap();
    assert!(
        report.passed,
        "max relative error {} at {}[{}].{} (analytic {}, numeric {})",
        report.max_rel_error, worst.param, worst.index, worst.part, worst.analytic, worst.numeric
    );
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, .. ProptestConfig::default() })]

    #[test]
    fn complex_dense_gradients(seed in any::<u64>()) {
        check(
            vec![
                LayerSpec::Dense { width: 4, activation: Activation::Tanh },
                LayerSpec::Dense { width: 3, activation: Activation::Sigmoid },
                LayerSpec::Dense { width: 2, activation: Activation::Identity },
            ],
            &[3],
            6,
            seed,
        );
    }

    #[test]
    fn hopf_resonator_gradients(seed in any::<u64>()) {
        check(
            vec![
                LayerSpec::Dense { width: 4, activation: Activation::Tanh },
                LayerSpec::Hopf(hopf(4, InputMode::Resonator)),
                LayerSpec::Dense { width: 1, activation: Activation::Identity },
            ],
            &[2],
            50,
            seed,
        );
    }

    #[test]
    fn hopf_amplitude_mod_gradients(seed in any::<u64>()) {
        // Sigmoid keeps μ(t) above the floor so the loss is smooth.
        check(
            vec![
                LayerSpec::Dense { width: 4, activation: Activation::Sigmoid },
                LayerSpec::Hopf(hopf(4, InputMode::AmplitudeMod)),
                LayerSpec::Dense { width: 1, activation: Activation::Identity },
            ],
            &[2],
            50,
            seed,
        );
    }

    #[test]
    fn hopf_frequency_mod_gradients(seed in any::<u64>()) {
        check(
            vec![
                LayerSpec::Dense { width: 4, activation: Activation::Tanh },
                LayerSpec::Hopf(hopf(4, InputMode::FrequencyMod)),
                LayerSpec::Dense { width: 1, activation: Activation::Identity },
            ],
            &[2],
            50,
            seed,
        );
    }

    #[test]
    fn ocnn_block_gradients(seed in any::<u64>()) {
        check(
            vec![LayerSpec::Ocnn {
                filters: 2,
                kernel: 3,
                activation: Activation::Tanh,
                oscillator: hopf(0, InputMode::Resonator),
            }],
            &[4, 4, 1],
            8,
            seed,
        );
    }

    #[test]
    fn matmul_agrees_with_block_real_embedding(seed in any::<u64>(), m in 1usize..5, n in 1usize..5, t in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_tensor(&mut rng, &[m, n], 2.0, true);
        let z = random_tensor(&mut rng, &[n, t], 2.0, true);
        let y = ComplexTensor::matmul(&w, &z).unwrap();
        // [A -B; B A] · [x; y]
        for i in 0..m {
            for c in 0..t {
                let (mut re, mut im) = (0.0, 0.0);
                for j in 0..n {
                    let (a, b) = (w.re()[i * n + j], w.im()[i * n + j]);
                    let (x, yv) = (z.re()[j * t + c], z.im()[j * t + c]);
                    re += a * x - b * yv;
                    im += b * x + a * yv;
                }
                prop_assert!((y.re()[i * t + c] - re).abs() < 1e-12);
                prop_assert!((y.im()[i * t + c] - im).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoints_are_linear_in_the_loss(seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let w = store.add("w", random_tensor(&mut rng, &[3, 2], 1.0, true), true);
        let x = random_tensor(&mut rng, &[2, 4], 1.0, true);
        let t1 = random_tensor(&mut rng, &[3, 4], 1.0, false);
        let t2 = random_tensor(&mut rng, &[3, 4], 1.0, false);
        let grad = |coeffs: (f64, f64)| {
            let mut tape = Tape::new();
            let wv = tape.param(&store, w);
            let xv = tape.constant(x.clone());
            let y = tape.matmul(wv, xv).unwrap();
            let h = tape.activation(y, Activation::Tanh).unwrap();
            let l1 = tape.mse_real(h, &t1).unwrap();
            let l2 = tape.mse_real(h, &t2).unwrap();
            let a = tape.scale(l1, coeffs.0).unwrap();
            let b = tape.scale(l2, coeffs.1).unwrap();
            let l = tape.add(a, b).unwrap();
            tape.gradients(l, store.len()).unwrap().get(w, &store)
        };
        let combined = grad((alpha, 1.0));
        let (g1, g2) = (grad((1.0, 0.0)), grad((0.0, 1.0)));
        for k in 0..combined.len() {
            let want = alpha * g1.get(k) + g2.get(k);
            prop_assert!((combined.get(k) - want).norm() < 1e-12);
        }
    }
}

#[test]
fn corrupted_adjoint_is_caught() {
    let specs = vec![
        LayerSpec::Dense { width: 3, activation: Activation::Tanh },
        LayerSpec::Hopf(hopf(3, InputMode::Resonator)),
        LayerSpec::Dense { width: 1, activation: Activation::Identity },
    ];
    let net = Network::build(&[2], &specs, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(&mut rng, &[2, 20], 1.0, true);
    let target = random_tensor(&mut rng, &[1, 20], 1.0, false);
    let clean = grad_check(&net, &x, &target, EPS, TOL).unwrap();
    assert!(clean.passed);
    for kind in [OpKind::Hopf, OpKind::MatMul, OpKind::Activation] {
        let fault = AdjointFault { kind, factor: 1.01 };
        let bad = grad_check_with(&net, &x, &target, EPS, TOL, Some(fault)).unwrap();
        assert!(!bad.passed, "{kind:?} fault went unnoticed");
    }
}

#[test]
fn frozen_frequencies_are_not_trainable() {
    let mut cfg = hopf(3, InputMode::Resonator);
    cfg.trainable_freq = false;
    let net = Network::build(
        &[2],
        &[
            LayerSpec::Dense { width: 3, activation: Activation::Tanh },
            LayerSpec::Hopf(cfg),
            LayerSpec::Dense { width: 1, activation: Activation::Identity },
        ],
        3,
    )
    .unwrap();
    let omega = net.store.find("layer1.hopf.omega").unwrap();
    assert!(!net.store.get(omega).trainable);
    // Real coordinates of the two dense layers: 2·(3·2 + 3) + 2·(1·3 + 1).
    assert_eq!(net.store.trainable_count(), 26);
}
