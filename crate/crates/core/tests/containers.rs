use std::collections::BTreeMap;

use oscnet::io::{
    read_checkpoint, read_dataset, write_checkpoint, write_dataset, Checkpoint, ContainerError,
    NamedTensor, OptimizerState, RngState,
};
use oscnet::tasks::{Dataset, TaskKind, TaskSample};
use oscnet::tensor::ComplexTensor;
use proptest::prelude::*;

fn tensor(shape: &[usize], re: Vec<f64>, im: Vec<f64>) -> ComplexTensor {
    ComplexTensor::from_parts(shape, re, im).unwrap()
}

prop_compose! {
    fn dataset()(
        task in prop::sample::select(TaskKind::ALL.to_vec()),
        dt in 1e-4..0.1f64,
        channels in 1usize..3,
        steps in 1usize..6,
        n in 0usize..4,
    )(
        values in prop::collection::vec(-1e3..1e3f64, n * channels * steps * 3),
        labels in prop::collection::vec(prop::option::of(0usize..4), n),
        extra in prop::collection::vec(-5.0..5.0f64, 0..3),
        task in Just(task), dt in Just(dt), channels in Just(channels), steps in Just(steps), n in Just(n),
    ) -> Dataset {
        let m = channels * steps;
        let samples = (0..n)
            .map(|i| {
                let v = &values[i * 3 * m..(i + 1) * 3 * m];
                let mut meta = BTreeMap::new();
                meta.insert("phase".to_string(), extra.clone());
                TaskSample {
                    input: tensor(&[channels, steps], v[..m].to_vec(), v[m..2 * m].to_vec()),
                    target: tensor(&[channels, steps], v[2 * m..].to_vec(), vec![0.0; m]),
                    label: labels[i],
                    dt,
                    meta,
                }
            })
            .collect();
        let mut meta = BTreeMap::new();
        meta.insert("duration".to_string(), vec![dt * steps as f64]);
        Dataset { task, dt, samples, meta }
    }
}

prop_compose! {
    fn checkpoint()(
        epoch in 0u64..1000,
        seed in any::<[u8; 32]>(),
        stream in any::<u64>(),
        word_pos in 0u128..1 << 60,
        values in prop::collection::vec(-10.0..10.0f64, 12),
        with_opt in any::<bool>(),
        config in "[a-z =\n\"0-9]{0,40}",
    ) -> Checkpoint {
        let a = tensor(&[2, 2], values[..4].to_vec(), values[4..8].to_vec());
        let b = tensor(&[2], values[8..10].to_vec(), values[10..].to_vec());
        let params = vec![
            NamedTensor { name: "layer0.dense.w".into(), trainable: true, value: a.clone() },
            NamedTensor { name: "layer1.hopf.omega".into(), trainable: false, value: b.clone() },
        ];
        let optimizer = with_opt.then(|| OptimizerState {
            step: epoch * 3,
            m: vec![a.scale(0.1), b.scale(0.1)],
            v: vec![a.scale(0.01), b.scale(0.01)],
        });
        Checkpoint { config, epoch, rng: RngState { seed, stream, word_pos }, params, optimizer }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dataset_round_trip_is_exact(d in dataset()) {
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        prop_assert_eq!(read_dataset(&buf[..]).unwrap(), d);
    }

    #[test]
    fn truncated_dataset_is_rejected(d in dataset(), frac in 0.0..1.0f64) {
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let cut = ((buf.len() - 1) as f64 * frac) as usize;
        prop_assert!(read_dataset(&buf[..cut]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact(c in checkpoint()) {
        let mut buf = Vec::new();
        write_checkpoint(&c, &mut buf).unwrap();
        prop_assert_eq!(read_checkpoint(&buf[..]).unwrap(), c);
    }

    #[test]
    fn truncated_checkpoint_is_rejected(c in checkpoint(), frac in 0.0..1.0f64) {
        let mut buf = Vec::new();
        write_checkpoint(&c, &mut buf).unwrap();
        let cut = ((buf.len() - 1) as f64 * frac) as usize;
        prop_assert!(read_checkpoint(&buf[..cut]).is_err());
    }
}

#[test]
fn trailing_bytes_are_rejected() {
    let mut rng_seed = [0u8; 32];
    rng_seed[0] = 7;
    let c = Checkpoint {
        config: String::new(),
        epoch: 1,
        rng: RngState { seed: rng_seed, stream: 0, word_pos: 0 },
        params: vec![],
        optimizer: None,
    };
    let mut buf = Vec::new();
    write_checkpoint(&c, &mut buf).unwrap();
    buf.push(0);
    assert!(matches!(read_checkpoint(&buf[..]), Err(ContainerError::Corrupt(_))));
}

#[test]
fn containers_are_not_interchangeable() {
    let d = oscnet::tasks::gen_am_demodulation(1, 1);
    let mut buf = Vec::new();
    write_dataset(&d, &mut buf).unwrap();
    assert!(matches!(read_checkpoint(&buf[..]), Err(ContainerError::Magic { .. })));
}
