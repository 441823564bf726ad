//! Cloud-side round loop and edge-side local training.

mod aggregate;
mod client;
mod transport;

use fedhome_nn::ParamVector;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate, Update};
pub use client::{client_update, local_sgd, ClientStats, LocalSgd};
pub use transport::{TransportMode, TransportStub};

use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::evaluation::{compute_metrics, MetricsReport};
use crate::model::{Architecture, Model, NUM_CLASSES};
use crate::seed::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedConfig {
    pub arch: Architecture,
    pub num_clients: usize,
    pub clients_per_round: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub rounds: usize,
    pub seed: u64,
    /// Evaluate the global model every this many rounds (and after the
    /// last); 0 disables evaluation.
    pub eval_interval: usize,
}

impl Default for FedConfig {
    fn default() -> Self {
        FedConfig {
            arch: Architecture::Gcae,
            num_clients: 30,
            clients_per_round: 5,
            local_epochs: 5,
            batch_size: 10,
            learning_rate: 0.01,
            lambda: 0.01,
            rounds: 500,
            seed: 0,
            eval_interval: 10,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.clients_per_round == 0 || self.clients_per_round > self.num_clients {
            return fail(format!(
                "need 1 <= K <= N, got K = {} and N = {}",
                self.clients_per_round, self.num_clients
            ));
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return fail("local epochs and batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        Ok(())
    }

    /// Bytes sent one way in a round: `K * param_count * 8`.
    pub fn round_payload(&self, param_count: usize, transport: &TransportStub) -> u64 {
        self.clients_per_round as u64 * transport.wire_bytes(param_count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// 1-based: the log of round `t` describes the model after `t` rounds.
    pub round: usize,
    pub selected: Vec<usize>,
    pub client_losses: Vec<f64>,
    pub client_samples: Vec<usize>,
    pub weights: Vec<f64>,
    pub local_steps: usize,
    /// Sample-weighted mean of the clients' final local losses.
    pub train_loss: f64,
    pub payload_bytes_up: u64,
    pub payload_bytes_down: u64,
    pub cumulative_bytes: u64,
    pub test_accuracy: Option<f64>,
}

pub type Evaluator<'a> = dyn Fn(&ParamVector) -> Result<f64> + Sync + 'a;
pub type RoundObserver<'a> = dyn FnMut(&RoundLog, &ParamVector) -> Result<()> + 'a;

/// Execution options that do not change the result.
pub struct RunOptions<'a> {
    /// Worker threads for the client updates of a round.
    pub workers: usize,
    pub transport: TransportStub,
    /// Global-model test accuracy, called every `eval_interval` rounds.
    pub evaluate: Option<&'a Evaluator<'a>>,
    /// Called after every round with its log and the new global model.
    pub on_round: Option<&'a mut RoundObserver<'a>>,
    /// Starting model; `Model::init(cfg.seed)` when absent.
    pub initial: Option<ParamVector>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        RunOptions {
            workers: 1,
            transport: TransportStub::default(),
            evaluate: None,
            on_round: None,
            initial: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FedOutcome {
    pub params: ParamVector,
    pub logs: Vec<RoundLog>,
}

/// `K` distinct client indices for `round`, ascending.
pub fn select_clients(cfg: &FedConfig, round: usize) -> Vec<usize> {
    let mut rng = seed::rng(cfg.seed, &[tag::CLIENT_SAMPLING, round as u64]);
    let mut picked = index::sample(&mut rng, cfg.num_clients, cfg.clients_per_round).into_vec();
    picked.sort_unstable();
    picked
}

/// Federated averaging: each round samples `K` of the `N` clients, trains
/// each from the broadcast model, and replaces the global model with the
/// sample-weighted average of the returned models.
pub fn run_federated(
    model: &Model,
    clients: &[ClientDataset],
    cfg: &FedConfig,
    opts: RunOptions<'_>,
) -> Result<FedOutcome> {
    cfg.validate()?;
    if model.arch() != cfg.arch {
        return Err(Error::Config(format!(
            "model is {} but the configuration asks for {}",
            model.arch(),
            cfg.arch
        )));
    }
    if clients.len() != cfg.num_clients {
        return Err(Error::Config(format!(
            "configuration has N = {} but {} client datasets were given",
            cfg.num_clients,
            clients.len()
        )));
    }
    if let Some(c) = clients.iter().find(|c| c.is_empty()) {
        return Err(Error::EmptyDataset {
            client_id: c.client_id,
        });
    }
    let RunOptions {
        workers,
        transport,
        evaluate,
        mut on_round,
        initial,
    } = opts;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut global = match initial {
        Some(p) => model.wrap(p.into_values())?,
        None => model.init(cfg.seed),
    };
    let payload = cfg.round_payload(model.param_count(), &transport);
    let mut logs = Vec::with_capacity(cfg.rounds);
    for t in 0..cfg.rounds {
        let selected = select_clients(cfg, t);
        let broadcast = transport.deliver(global.clone());
        let results: Vec<Result<(ParamVector, ClientStats)>> = pool.install(|| {
            selected
                .par_iter()
                .map(|&i| {
                    let c = &clients[i];
                    client_update(model, c, &broadcast, cfg, t).map_err(|e| Error::Client {
                        client_id: c.client_id,
                        source: Box::new(e),
                    })
                })
                .collect()
        });
        let mut uploads = Vec::with_capacity(results.len());
        for r in results {
            let (params, stats) = r?;
            uploads.push((transport.deliver(params), stats));
        }
        let updates: Vec<Update<'_>> = uploads
            .iter()
            .map(|(p, s)| Update {
                client_id: s.client_id,
                params: p,
                samples: s.samples,
            })
            .collect();
        let (next, weights) = aggregate(&updates)?;
        global = next;

        let mut stats: Vec<ClientStats> = uploads.iter().map(|(_, s)| *s).collect();
        stats.sort_by_key(|s| s.client_id);
        let n: usize = stats.iter().map(|s| s.samples).sum();
        let round = t + 1;
        let due = cfg.eval_interval > 0 && (round % cfg.eval_interval == 0 || round == cfg.rounds);
        let test_accuracy = match (evaluate, due) {
            (Some(f), true) => Some(f(&global)?),
            _ => None,
        };
        let log = RoundLog {
            round,
            selected: stats.iter().map(|s| s.client_id).collect(),
            client_losses: stats.iter().map(|s| s.final_loss).collect(),
            client_samples: stats.iter().map(|s| s.samples).collect(),
            weights,
            local_steps: stats.iter().map(|s| s.steps).sum(),
            train_loss: stats.iter().map(|s| s.final_loss * s.samples as f64).sum::<f64>() / n as f64,
            payload_bytes_up: payload,
            payload_bytes_down: payload,
            cumulative_bytes: 2 * payload * round as u64,
            test_accuracy,
        };
        if let Some(f) = on_round.as_mut() {
            f(&log, &global)?;
        }
        logs.push(log);
    }
    Ok(FedOutcome {
        params: global,
        logs,
    })
}

/// Predictions of `params` on every test set, pooled, with per-user accuracy.
pub fn evaluate_global(
    model: &Model,
    params: &ParamVector,
    tests: &[ClientDataset],
) -> Result<MetricsReport> {
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    let mut users = Vec::new();
    for t in tests.iter().filter(|t| !t.is_empty()) {
        let (images, y) = t.all()?;
        preds.extend(model.predict(params.values(), &images)?);
        labels.extend(y);
        users.extend(t.samples.iter().map(|s| s.user_id));
    }
    if labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    compute_metrics(&preds, &labels, Some(&users), NUM_CLASSES)
}
