//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Set `FEDHOME_ACCEPTANCE` to a
//! comma-separated list of criterion numbers to run a subset.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{max_abs_diff, random_image, segment_residual, toy_client};
use fedhome::data::{build_partition, segment_windows, synthesize_streams, Activity, ClientDataset, Partition, SensorStream, OVERLAP, WINDOW_SECONDS};
use fedhome::federation::{evaluate_global, run_federated, FedConfig, RunOptions, TransportStub};
use fedhome::model::{Architecture, Model, INPUT_SHAPE};
use fedhome::personalization::{personalize_partition, smote_balance, LatentDataset, SmoteConfig};
use fedhome::run::{self, RunConfig, ROUNDS};
use fedhome_nn::activation::{activation_backward, activation_forward};
use fedhome_nn::conv::{conv2d_backward, conv2d_forward};
use fedhome_nn::dense::{dense_backward, dense_forward};
use fedhome_nn::loss::{mse_loss, softmax_crossentropy};
use fedhome_nn::pool::{maxpool2x2_backward, maxpool2x2_forward, upsample2x2_backward, upsample2x2_forward};
use fedhome_nn::{gradient_check, sgd_step, Activation, Batch, ConvSpec, DenseSpec, GradCheckConfig, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [1, 2, 3];
const E2E_ROUNDS: usize = 150;
const DETERMINISM_ROUNDS: usize = 10;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn parameter_counts() -> Outcome {
    let expected = [52_149, 33_698, 77_498, 1_562_310];
    let got: Vec<usize> = Architecture::ALL.iter().map(|&a| Model::new(a).param_count()).collect();
    ensure(got == expected, || format!("counts {got:?}, expected {expected:?}"))?;
    Ok(format!("{got:?}"))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Max relative error of a single-sample layer under `L = Σ r ⊙ f(x, p)`.
fn layer_error<F, B>(x: &Tensor, params: &[f64], forward: F, backward: B, seed: u64) -> Result<f64, String>
where
    F: Fn(&Tensor, &[f64]) -> Tensor,
    B: Fn(&Tensor, &Tensor, &[f64]) -> (Tensor, Vec<f64>),
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = random_vec(&mut rng, forward(x, params).len());
    let nx = x.len();
    let mut joint = x.data().to_vec();
    joint.extend_from_slice(params);
    let loss = |z: &[f64]| {
        let xi = Tensor::new(x.shape(), z[..nx].to_vec()).unwrap();
        let y = forward(&xi, &z[nx..]);
        let l: f64 = y.data().iter().zip(&r).map(|(a, b)| a * b).sum();
        let (gx, gp) = backward(&Tensor::new(y.shape(), r.clone()).unwrap(), &xi, &z[nx..]);
        let mut g = gx.into_data();
        g.extend(gp);
        Ok((l, g))
    };
    let cfg = GradCheckConfig {
        coordinates: 300,
        seed,
        ..Default::default()
    };
    Ok(gradient_check(loss, &joint, 0..joint.len(), cfg).map_err(err)?.max_rel_error)
}

fn gradient_correctness() -> Outcome {
    let model = Model::new(Architecture::Gcae);
    let params = model.init(11);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let images: Vec<Tensor> = (0..2).map(|_| random_image(&mut rng)).collect();
    let batch = Batch::stack(INPUT_SHAPE, images.iter().map(|t| t.data())).map_err(err)?;
    let labels = [1usize, 7];
    let loss = |p: &[f64]| {
        let pv = model.wrap(p.to_vec()).unwrap();
        let (l, g) = model.combined_loss(&pv, &batch, &labels, 0.01).unwrap();
        Ok((l.total, g.into_values()))
    };
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (i, range) in [model.encoder_range(), model.decoder_range(), model.head_range()].into_iter().enumerate() {
        let cfg = GradCheckConfig {
            coordinates: 70,
            seed: 100 + i as u64,
            ..Default::default()
        };
        let report = gradient_check(loss, params.values(), range, cfg).map_err(err)?;
        checked += report.checked;
        worst = worst.max(report.max_rel_error);
    }
    ensure(checked >= 200, || format!("only {checked} coordinates checked"))?;
    ensure(worst < 1e-4, || format!("end-to-end max relative error {worst:e}"))?;

    let mut layer_worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for spec in [ConvSpec::new(3, 2, 3), ConvSpec::new(5, 3, 2)] {
        let x = Tensor::new(Shape::image(6, 5, spec.in_channels), random_vec(&mut rng, 30 * spec.in_channels)).map_err(err)?;
        let p = random_vec(&mut rng, spec.param_count());
        let e = layer_error(&x, &p, |x, p| conv2d_forward(x, p, &spec).unwrap(), |u, x, p| conv2d_backward(u, x, p, &spec).unwrap(), 7)?;
        layer_worst = layer_worst.max(e);
    }
    let spec = DenseSpec::new(17, 9);
    let x = Tensor::vector(random_vec(&mut rng, 17));
    let p = random_vec(&mut rng, spec.param_count());
    layer_worst = layer_worst.max(layer_error(&x, &p, |x, p| dense_forward(x, p, &spec).unwrap(), |u, x, p| dense_backward(u, x, p, &spec).unwrap(), 9)?);
    let img = Tensor::new(Shape::image(4, 6, 3), random_vec(&mut rng, 72)).map_err(err)?;
    layer_worst = layer_worst.max(layer_error(&img, &[], |x, _| maxpool2x2_forward(x).unwrap().0, |u, x, _| (maxpool2x2_backward(u, x).unwrap(), vec![]), 1)?);
    layer_worst = layer_worst.max(layer_error(&img, &[], |x, _| upsample2x2_forward(x).unwrap(), |u, _, _| (upsample2x2_backward(u).unwrap(), vec![]), 2)?);
    let v = Tensor::vector(random_vec(&mut rng, 40));
    for kind in [Activation::Relu, Activation::Sigmoid, Activation::Softmax] {
        layer_worst = layer_worst.max(layer_error(&v, &[], |x, _| activation_forward(kind, x), |u, x, _| (activation_backward(kind, u, x), vec![]), 4)?);
    }
    let logits = random_vec(&mut rng, 10);
    let r = gradient_check(|z| softmax_crossentropy(z, 6), &logits, 0..10, GradCheckConfig::default()).map_err(err)?;
    layer_worst = layer_worst.max(r.max_rel_error);
    let target = Tensor::vector(random_vec(&mut rng, 12));
    let recon = random_vec(&mut rng, 12);
    let r = gradient_check(
        |z| {
            let (l, g) = mse_loss(&Tensor::vector(z.to_vec()), &target)?;
            Ok((l, g.into_data()))
        },
        &recon,
        0..12,
        GradCheckConfig::default(),
    )
    .map_err(err)?;
    layer_worst = layer_worst.max(r.max_rel_error);
    ensure(layer_worst < 1e-6, || format!("per-layer max relative error {layer_worst:e}"))?;
    Ok(format!("{checked} coordinates, end-to-end {worst:.2e}, per-layer {layer_worst:.2e}"))
}

fn fedavg_equivalence() -> Outcome {
    let model = Model::new(Architecture::Gcae);
    let clients: Vec<ClientDataset> = (0..4).map(|i| toy_client(i, 6, i * 3, 50 + i as u64)).collect();
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
    let out = run_federated(&model, &clients, &cfg, RunOptions::default()).map_err(err)?;
    let w0 = model.init(cfg.seed);
    let (images, labels) = ClientDataset::merge(99, &clients).all().map_err(err)?;
    let (_, grads) = model.combined_loss(&w0, &images, &labels, cfg.lambda).map_err(err)?;
    let expected = sgd_step(&w0, grads.values(), cfg.learning_rate).map_err(err)?;
    let diff = max_abs_diff(out.params.values(), expected.values());
    ensure(diff < 1e-9, || format!("max coordinate difference {diff:e}"))?;
    Ok(format!("max coordinate difference {diff:.2e}"))
}

fn smote_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut synthetic = 0;
    let mut worst: f64 = 0.0;
    for case in 0..500 {
        let classes = rng.random_range(1..=5);
        let dim = rng.random_range(1..=6);
        let n = rng.random_range(classes..=40);
        let mut data = LatentDataset::new(0, dim, classes);
        for i in 0..n {
            let label = if i < classes { i } else { rng.random_range(0..classes) };
            data.push((0..dim).map(|_| rng.random_range(-10.0..10.0)).collect(), label);
        }
        data.original = data.len();
        let cfg = SmoteConfig {
            k_neighbors: rng.random_range(1..=6),
            seed: case,
        };
        let out = smote_balance(&data, &cfg).map_err(err)?;
        let target = *data.histogram().iter().max().unwrap();
        ensure(out.histogram().iter().all(|&c| c == target), || format!("case {case}: histogram {:?}", out.histogram()))?;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(bits(&out.data[..data.data.len()]) == bits(&data.data) && out.labels[..n] == data.labels[..], || {
            format!("case {case}: originals changed")
        })?;
        for i in n..out.len() {
            let class = out.labels[i];
            let members: Vec<&[f64]> = (0..n).filter(|&j| data.labels[j] == class).map(|j| data.point(j)).collect();
            let r = segment_residual(out.point(i), &members);
            worst = worst.max(r);
            ensure(r < 1e-9, || format!("case {case}: point {i} residual {r:e}"))?;
            synthetic += 1;
        }
    }
    Ok(format!("500 datasets, {synthetic} synthetic points, worst residual {worst:.2e}"))
}

fn windowing() -> Outcome {
    for len in 0..=2000usize {
        let mut s = SensorStream::new(0, 200.0);
        s.push_segment(Activity::Walking, (0..len).map(|i| [i as f64; 6]));
        let w = segment_windows(&s, WINDOW_SECONDS, OVERLAP).map_err(err)?;
        let expected = if len < 200 { 0 } else { (len - 200) / 40 + 1 };
        ensure(w.len() == expected, || format!("L = {len}: {} windows, expected {expected}", w.len()))?;
        for (i, win) in w.iter().enumerate() {
            ensure(win.start == 40 * i && win.records[0][0] == (40 * i) as f64, || format!("L = {len}: window {i} starts at {}", win.start))?;
        }
    }
    Ok("L in 0..=2000".into())
}

struct SeedRun {
    seed: u64,
    fedhome_p: f64,
    fedhome: f64,
    fl_cnn: f64,
    k1: f64,
}

fn seed_config(seed: u64) -> Result<RunConfig, String> {
    let mut cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    cfg.fed.rounds = E2E_ROUNDS;
    cfg.fed.eval_interval = 0;
    cfg.resolve().map_err(err)
}

fn federated_accuracy(arch: Architecture, partition: &Partition, fed: FedConfig) -> Result<(Model, fedhome_nn::ParamVector, f64), String> {
    let model = Model::new(arch);
    let fed = FedConfig { arch, ..fed };
    let out = run_federated(&model, &partition.clients, &fed, RunOptions::default()).map_err(err)?;
    let acc = evaluate_global(&model, &out.params, &partition.tests).map_err(err)?.accuracy;
    Ok((model, out.params, acc))
}

fn end_to_end_runs() -> Result<Vec<SeedRun>, String> {
    let mut runs = Vec::new();
    for seed in SEEDS {
        let t = Instant::now();
        let cfg = seed_config(seed)?;
        let partition = build_partition(&synthesize_streams(&cfg.synth, seed), &cfg.partition).map_err(err)?;
        let (model, params, fedhome_p) = federated_accuracy(Architecture::Gcae, &partition, cfg.fed)?;
        let report = personalize_partition(&model, &params, &partition, &cfg.smote, &cfg.personalization).map_err(err)?;
        let (_, _, fl_cnn) = federated_accuracy(Architecture::FlCnn, &partition, cfg.fed)?;
        let k1_cfg = FedConfig {
            clients_per_round: 1,
            ..cfg.fed
        };
        let (_, _, k1) = federated_accuracy(Architecture::Gcae, &partition, k1_cfg)?;
        let run = SeedRun {
            seed,
            fedhome_p,
            fedhome: report.mean_post(),
            fl_cnn,
            k1,
        };
        println!(
            "  seed {}: FedHome-p {:.4}  FedHome {:.4}  FL-CNN {:.4}  K=1 {:.4}  ({:.0}s)",
            run.seed,
            run.fedhome_p,
            run.fedhome,
            run.fl_cnn,
            run.k1,
            t.elapsed().as_secs_f64()
        );
        runs.push(run);
    }
    Ok(runs)
}

fn mean(runs: &[SeedRun], f: impl Fn(&SeedRun) -> f64) -> f64 {
    runs.iter().map(f).sum::<f64>() / runs.len() as f64
}

fn end_to_end(runs: &[SeedRun]) -> Outcome {
    let p = mean(runs, |r| r.fedhome_p);
    let h = mean(runs, |r| r.fedhome);
    let c = mean(runs, |r| r.fl_cnn);
    let detail = format!("FedHome-p {:.2}%, FedHome {:.2}%, gain {:.2} pp, FL-CNN {:.2}%", 100.0 * p, 100.0 * h, 100.0 * (h - p), 100.0 * c);
    let mut failed = Vec::new();
    if p < 0.85 {
        failed.push("(a) FedHome-p below 85%");
    }
    if h - p < 0.02 {
        failed.push("(b) personalization gain below 2 pp");
    }
    if h < c {
        failed.push("(c) FedHome below FL-CNN");
    }
    if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failed.join(", ")))
    }
}

fn k_ordering(runs: &[SeedRun]) -> Outcome {
    let k1 = mean(runs, |r| r.k1);
    let k5 = mean(runs, |r| r.fedhome_p);
    let detail = format!("K=1 {:.2}%, K=5 {:.2}%", 100.0 * k1, 100.0 * k5);
    if k1 < k5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let data = dir.path().join("data");
    let base = RunConfig::default();
    run::generate_data(&base, &data).map_err(err)?;
    let mut cfg = RunConfig {
        data: Some(data),
        checkpoint_interval: 5,
        ..base
    };
    cfg.fed.rounds = DETERMINISM_ROUNDS;
    cfg.fed.eval_interval = 5;
    let first = dir.path().join("first");
    let reference = run::train(&cfg, &first, 1).map_err(err)?;
    let replay = fedhome::run::RunManifest::load(&first).map_err(err)?.config;
    let log = |d: &std::path::Path| std::fs::read(d.join(ROUNDS)).map_err(err);
    let expected_log = log(&first)?;
    let mut runs = 1;
    for (i, workers) in [1, 4, 4].into_iter().enumerate() {
        let out = dir.path().join(format!("replay{i}"));
        let o = run::train(&replay, &out, workers).map_err(err)?;
        ensure(o.checkpoint_sha256 == reference.checkpoint_sha256, || format!("workers {workers}: checkpoint hash differs"))?;
        ensure(log(&out)? == expected_log, || format!("workers {workers}: round log differs"))?;
        runs += 1;
    }
    Ok(format!("{runs} runs of {DETERMINISM_ROUNDS} rounds at workers 1 and 4, sha256 {}", &reference.checkpoint_sha256[..16]))
}

fn communication() -> Outcome {
    let transport = TransportStub::default();
    let mut counts = Vec::new();
    for (arch, rounds) in [(Architecture::Gcae, 3usize), (Architecture::FlMlp, 2)] {
        let model = Model::new(arch);
        let p = model.param_count() as u64;
        let clients: Vec<ClientDataset> = (0..3).map(|i| toy_client(i, 2, i, 70 + i as u64)).collect();
        let cfg = FedConfig {
            arch,
            num_clients: 3,
            clients_per_round: 2,
            local_epochs: 1,
            batch_size: 2,
            rounds,
            seed: 9,
            eval_interval: 0,
            ..FedConfig::default()
        };
        let out = run_federated(&model, &clients, &cfg, RunOptions::default()).map_err(err)?;
        for log in &out.logs {
            let t = log.round as u64;
            let k = cfg.clients_per_round as u64;
            ensure(log.cumulative_bytes == t * 2 * k * p * 8, || format!("{arch} round {t}: {} bytes", log.cumulative_bytes))?;
            ensure(log.payload_bytes_up == k * p * 8 && log.payload_bytes_down == k * p * 8, || format!("{arch} round {t}: per-round payload"))?;
        }
        ensure(cfg.round_payload(model.param_count(), &transport) == 2 * p * 8, || format!("{arch}: round_payload"))?;
        counts.push(p);
    }
    let ratio = counts[1] as f64 / counts[0] as f64;
    ensure(format!("{ratio:.2}") == "29.96", || format!("FL-MLP / GCAE payload ratio {ratio:.4}"))?;
    Ok(format!("ratio {ratio:.4}"))
}

struct Report {
    hard_failures: usize,
    lines: Vec<(u32, String)>,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, soft: bool, t: Instant, outcome: Outcome) {
        let secs = t.elapsed().as_secs_f64();
        let line = match outcome {
            Ok(detail) => format!("PASS {id} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                if !soft {
                    self.hard_failures += 1;
                }
                let kind = if soft { "FAIL (soft)" } else { "FAIL" };
                format!("{kind} {id} {name}: {detail} [{secs:.1}s]")
            }
        };
        println!("{line}");
        self.lines.push((id, line));
    }
}

fn main() -> ExitCode {
    let selected: Option<Vec<u32>> = std::env::var("FEDHOME_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wants = |id: u32| selected.as_ref().is_none_or(|s| s.contains(&id));
    let mut report = Report {
        hard_failures: 0,
        lines: Vec::new(),
    };
    let quick: [(u32, &str, fn() -> Outcome); 7] = [
        (1, "parameter counts", parameter_counts),
        (2, "gradient correctness", gradient_correctness),
        (3, "FedAvg equivalence", fedavg_equivalence),
        (4, "SMOTE properties", smote_properties),
        (5, "windowing arithmetic", windowing),
        (8, "communication accounting", communication),
        (7, "determinism", determinism),
    ];
    for (id, name, f) in quick {
        if wants(id) {
            let t = Instant::now();
            report.record(id, name, false, t, f());
        }
    }
    if wants(6) || wants(9) {
        let t = Instant::now();
        match end_to_end_runs() {
            Ok(runs) => {
                if wants(6) {
                    report.record(6, "end-to-end learning", false, t, end_to_end(&runs));
                }
                if wants(9) {
                    report.record(9, "K ordering", true, t, k_ordering(&runs));
                }
            }
            Err(e) => {
                for (id, name, soft) in [(6, "end-to-end learning", false), (9, "K ordering", true)] {
                    if wants(id) {
                        report.record(id, name, soft, t, Err(e.clone()));
                    }
                }
            }
        }
    }
    report.lines.sort_by_key(|(id, _)| *id);
    println!("summary:");
    for (_, line) in &report.lines {
        println!("{line}");
    }
    if report.hard_failures > 0 {
        println!("{} acceptance criteria failed", report.hard_failures);
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
