use fedhome_nn::{sgd_step_in_place, ParamVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FedConfig;
use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::seed::{self, tag};

/// Hyperparameters of one run of local mini-batch SGD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSgd {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
}

impl From<&FedConfig> for LocalSgd {
    fn from(cfg: &FedConfig) -> Self {
        LocalSgd {
            epochs: cfg.local_epochs,
            batch_size: cfg.batch_size,
            learning_rate: cfg.learning_rate,
            lambda: cfg.lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientStats {
    pub client_id: usize,
    pub samples: usize,
    pub steps: usize,
    /// Sample-weighted mean combined loss over the last epoch.
    pub final_loss: f64,
}

/// Runs `sgd.epochs` epochs of shuffled mini-batch SGD on the combined loss,
/// one step per batch (the last batch may be short). The shuffle of epoch
/// `e` is drawn from `shuffle_seed(e)`.
pub fn local_sgd(
    model: &Model,
    data: &ClientDataset,
    mut params: ParamVector,
    sgd: &LocalSgd,
    shuffle_seed: impl Fn(usize) -> u64,
) -> Result<(ParamVector, ClientStats)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset {
            client_id: data.client_id,
        });
    }
    if sgd.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads = vec![0.0; params.len()];
    let mut steps = 0;
    let mut last_epoch_loss = 0.0;
    for epoch in 0..sgd.epochs {
        order.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed(epoch));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(sgd.batch_size) {
            let (images, labels) = data.batch(chunk)?;
            grads.fill(0.0);
            let loss = model.accumulate_gradients(params.values(), &images, &labels, sgd.lambda, &mut grads)?;
            sgd_step_in_place(params.values_mut(), &grads, sgd.learning_rate)?;
            epoch_loss += loss.total * chunk.len() as f64;
            steps += 1;
        }
        last_epoch_loss = epoch_loss / n as f64;
    }
    Ok((
        params,
        ClientStats {
            client_id: data.client_id,
            samples: n,
            steps,
            final_loss: last_epoch_loss,
        },
    ))
}

/// Local update of one client in round `round`, starting from `global`.
pub fn client_update(
    model: &Model,
    client: &ClientDataset,
    global: &ParamVector,
    cfg: &FedConfig,
    round: usize,
) -> Result<(ParamVector, ClientStats)> {
    let seed = cfg.seed;
    let id = client.client_id as u64;
    local_sgd(model, client, global.clone(), &LocalSgd::from(cfg), |epoch| {
        seed::derive(seed, &[tag::LOCAL_SHUFFLE, round as u64, id, epoch as u64])
    })
}
