use fedhome_nn::ParamVector;
use serde::{Deserialize, Serialize};

use super::MetricsReport;
use crate::data::Partition;
use crate::error::Result;
use crate::federation::{evaluate_global, local_sgd, LocalSgd};
use crate::model::{Architecture, Model};
use crate::seed::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for CentralConfig {
    fn default() -> Self {
        CentralConfig {
            epochs: 20,
            batch_size: 10,
            learning_rate: 0.01,
            lambda: 0.01,
            seed: 0,
        }
    }
}

/// Plain mini-batch SGD on the pooled training data of every client,
/// evaluated on the pooled test sets.
pub fn run_centralized(
    arch: Architecture,
    partition: &Partition,
    cfg: &CentralConfig,
) -> Result<(ParamVector, MetricsReport)> {
    let model = Model::new(arch);
    let pooled = partition.pooled_train();
    let init = model.init(cfg.seed);
    let params = if cfg.epochs == 0 {
        init
    } else {
        let sgd = LocalSgd {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            learning_rate: cfg.learning_rate,
            lambda: cfg.lambda,
        };
        let seed = cfg.seed;
        local_sgd(&model, &pooled, init, &sgd, |epoch| {
            seed::derive(seed, &[tag::CENTRAL_SHUFFLE, epoch as u64])
        })?
        .0
    };
    let report = evaluate_global(&model, &params, &partition.tests)?;
    Ok((params, report))
}
