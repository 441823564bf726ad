mod common;

use common::{max_abs_diff, toy_client};
use fedhome::data::ClientDataset;
use fedhome::federation::{
    aggregate, client_update, local_sgd, run_federated, select_clients, FedConfig, LocalSgd,
    RunOptions, TransportStub, Update,
};
use fedhome::model::{Architecture, Model};
use fedhome::seed::{self, tag};
use fedhome_nn::{sgd_step, ParamVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exact_weighted_mean(vectors: &[Vec<f64>], samples: &[usize]) -> Vec<f64> {
    let total: usize = samples.iter().sum();
    (0..vectors[0].len())
        .map(|j| {
            let mut acc = BigRational::zero();
            for (v, &n) in vectors.iter().zip(samples) {
                let x = BigRational::from_float(v[j]).unwrap();
                acc += x * BigRational::new(BigInt::from(n), BigInt::from(total));
            }
            acc.to_f64().unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregate_matches_exact_rational_oracle(
        seed in any::<u64>(),
        len in 1usize..40,
        clients in 1usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors: Vec<Vec<f64>> = (0..clients)
            .map(|_| (0..len).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let samples: Vec<usize> = (0..clients).map(|_| rng.random_range(1..500)).collect();
        let params: Vec<ParamVector> =
            vectors.iter().map(|v| ParamVector::gather([("w", v.clone())])).collect();
        let updates: Vec<Update<'_>> = params
            .iter()
            .zip(&samples)
            .enumerate()
            .map(|(i, (p, &n))| Update { client_id: clients - 1 - i, params: p, samples: n })
            .collect();
        let (avg, weights) = aggregate(&updates).unwrap();
        prop_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let oracle = exact_weighted_mean(&vectors, &samples);
        prop_assert!(max_abs_diff(avg.values(), &oracle) < 1e-12);
    }
}

#[test]
fn three_client_rational_case() {
    let vectors = vec![vec![0.1, -2.5, 3.0], vec![1.7, 0.2, -0.3], vec![-4.4, 9.9, 0.0]];
    let samples = [3, 7, 11];
    let params: Vec<ParamVector> = vectors.iter().map(|v| ParamVector::gather([("w", v.clone())])).collect();
    let updates: Vec<Update<'_>> = params
        .iter()
        .zip(samples)
        .enumerate()
        .map(|(i, (p, n))| Update {
            client_id: i,
            params: p,
            samples: n,
        })
        .collect();
    let (avg, _) = aggregate(&updates).unwrap();
    assert!(max_abs_diff(avg.values(), &exact_weighted_mean(&vectors, &samples)) < 1e-12);
}

fn toy_clients(n: usize, size: usize) -> Vec<ClientDataset> {
    (0..n).map(|i| toy_client(i, size, i * 3, 50 + i as u64)).collect()
}

#[test]
fn one_round_equals_a_pooled_full_batch_step() {
    let model = Model::new(Architecture::Gcae);
    let clients = toy_clients(4, 6);
    let cfg = FedConfig {
        num_clients: 4,
        clients_per_round: 4,
        local_epochs: 1,
        batch_size: 6,
        rounds: 1,
        seed: 3,
        eval_interval: 0,
        ..FedConfig::default()
    };
    let out = run_federated(&model, &clients, &cfg, RunOptions::default()).unwrap();
    let w0 = model.init(cfg.seed);
    let pooled = ClientDataset::merge(99, &clients);
    let (images, labels) = pooled.all().unwrap();
    let (_, grads) = model.combined_loss(&w0, &images, &labels, cfg.lambda).unwrap();
    let expected = sgd_step(&w0, grads.values(), cfg.learning_rate).unwrap();
    let diff = max_abs_diff(out.params.values(), expected.values());
    assert!(diff < 1e-9, "{diff}");
}

#[test]
fn zero_learning_rate_returns_the_broadcast_model() {
    let model = Model::new(Architecture::FlCnn);
    let data = toy_client(0, 12, 0, 1);
    let w0 = model.init(1);
    let sgd = LocalSgd {
        epochs: 2,
        batch_size: 5,
        learning_rate: 0.0,
        lambda: 0.01,
    };
    let (w, stats) = local_sgd(&model, &data, w0.clone(), &sgd, |e| e as u64).unwrap();
    assert_eq!(w.values(), w0.values());
    assert_eq!(stats.steps, 6);
}

#[test]
fn single_full_batch_step_matches_direct_oracle() {
    let model = Model::new(Architecture::Gcae);
    let data = toy_client(0, 7, 2, 8);
    let w0 = model.init(4);
    let sgd = LocalSgd {
        epochs: 1,
        batch_size: 10,
        learning_rate: 0.05,
        lambda: 0.01,
    };
    let (w, stats) = local_sgd(&model, &data, w0.clone(), &sgd, |_| 17).unwrap();
    assert_eq!(stats.steps, 1);
    let (images, labels) = data.all().unwrap();
    let (_, g) = model.combined_loss(&w0, &images, &labels, 0.01).unwrap();
    let expected = sgd_step(&w0, g.values(), 0.05).unwrap();
    assert!(max_abs_diff(w.values(), expected.values()) < 1e-12);
}

#[test]
fn local_step_count_is_epochs_times_batches() {
    let model = Model::new(Architecture::FlCnn);
    let data = toy_client(0, 480, 0, 2);
    let cfg = FedConfig {
        arch: Architecture::FlCnn,
        ..FedConfig::default()
    };
    let (_, stats) = client_update(&model, &data, &model.init(0), &cfg, 0).unwrap();
    assert_eq!(stats.steps, 240);
    let short = toy_client(1, 23, 0, 2);
    let (_, stats) = client_update(&model, &short, &model.init(0), &cfg, 0).unwrap();
    assert_eq!(stats.steps, 5 * 3);
}

#[test]
fn single_client_federation_is_sequential_training() {
    let model = Model::new(Architecture::FlCnn);
    let clients = vec![toy_client(0, 15, 0, 4)];
    let cfg = FedConfig {
        arch: Architecture::FlCnn,
        num_clients: 1,
        clients_per_round: 1,
        local_epochs: 2,
        batch_size: 4,
        rounds: 3,
        seed: 9,
        eval_interval: 0,
        ..FedConfig::default()
    };
    let out = run_federated(&model, &clients, &cfg, RunOptions::default()).unwrap();
    let mut w = model.init(cfg.seed);
    for round in 0..cfg.rounds {
        let sgd = LocalSgd::from(&cfg);
        w = local_sgd(&model, &clients[0], w, &sgd, |e| {
            seed::derive(cfg.seed, &[tag::LOCAL_SHUFFLE, round as u64, 0, e as u64])
        })
        .unwrap()
        .0;
    }
    assert_eq!(out.params.values(), w.values());
    assert!(out.logs.iter().all(|l| l.weights == [1.0]));
}

#[test]
fn payload_accounting() {
    for (arch, k) in [(Architecture::Gcae, 5), (Architecture::FlMlp, 2)] {
        let model = Model::new(arch);
        let clients = toy_clients(5, 2);
        let cfg = FedConfig {
            arch,
            num_clients: 5,
            clients_per_round: k,
            local_epochs: 1,
            rounds: 3,
            eval_interval: 0,
            ..FedConfig::default()
        };
        let out = run_federated(&model, &clients, &cfg, RunOptions::default()).unwrap();
        let per = (k * model.param_count() * 8) as u64;
        for (t, log) in out.logs.iter().enumerate() {
            assert_eq!(log.payload_bytes_up, per);
            assert_eq!(log.payload_bytes_down, per);
            assert_eq!(log.cumulative_bytes, (t as u64 + 1) * 2 * per);
            assert_eq!(log.selected.len(), k);
        }
    }
    let gcae = FedConfig::default();
    assert_eq!(gcae.round_payload(52_149, &TransportStub::default()), 2_085_960);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let model = Model::new(Architecture::Gcae);
    let clients = toy_clients(6, 9);
    let cfg = FedConfig {
        num_clients: 6,
        clients_per_round: 3,
        local_epochs: 1,
        batch_size: 4,
        rounds: 3,
        seed: 12,
        eval_interval: 0,
        ..FedConfig::default()
    };
    let run = |workers| {
        run_federated(
            &model,
            &clients,
            &cfg,
            RunOptions {
                workers,
                ..RunOptions::default()
            },
        )
        .unwrap()
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.params.values(), b.params.values());
    assert_eq!(a.logs, b.logs);
}

#[test]
fn client_sampling_is_seeded_and_without_replacement() {
    let cfg = FedConfig::default();
    for round in 0..50 {
        let s = select_clients(&cfg, round);
        assert_eq!(s.len(), 5);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(s.iter().all(|&i| i < 30));
        assert_eq!(s, select_clients(&cfg, round));
    }
    assert_ne!(select_clients(&cfg, 0), select_clients(&cfg, 1));
}

#[test]
fn client_errors_carry_the_client_id() {
    let model = Model::new(Architecture::FlCnn);
    let mut clients = toy_clients(2, 3);
    clients[1].samples.clear();
    let cfg = FedConfig {
        arch: Architecture::FlCnn,
        num_clients: 2,
        clients_per_round: 2,
        rounds: 1,
        ..FedConfig::default()
    };
    let err = run_federated(&model, &clients, &cfg, RunOptions::default()).unwrap_err();
    assert!(err.to_string().contains("client 1"), "{err}");
}
