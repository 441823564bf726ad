//! Per-client refinement of a trained global model: encode the client's
//! data with the frozen encoder, rebalance classes in latent space with
//! SMOTE, and fine-tune the prediction head alone.

mod smote;

use fedhome_nn::{sgd_step_in_place, Batch, ParamVector, Shape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use smote::{smote_balance, SmoteConfig};

use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::model::{Model, NUM_CLASSES};
use crate::seed::{self, tag};

/// Latent vectors with labels; the first `original` points are encodings of
/// real samples, the rest are synthetic.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDataset {
    pub client_id: usize,
    pub dim: usize,
    pub classes: usize,
    pub data: Vec<f64>,
    pub labels: Vec<usize>,
    pub original: usize,
}

impl LatentDataset {
    pub fn new(client_id: usize, dim: usize, classes: usize) -> Self {
        LatentDataset {
            client_id,
            dim,
            classes,
            data: Vec::new(),
            labels: Vec::new(),
            original: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, point: Vec<f64>, label: usize) {
        assert_eq!(point.len(), self.dim, "latent dimension");
        self.data.extend(point);
        self.labels.push(label);
    }

    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }

    fn batch(&self, indices: &[usize]) -> Result<(Batch, Vec<usize>)> {
        let b = Batch::stack(Shape::Vector(self.dim), indices.iter().map(|&i| self.point(i)))?;
        Ok((b, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}

/// Encoder outputs of every sample, flattened, labels preserved.
pub fn encode_dataset(model: &Model, params: &ParamVector, data: &ClientDataset) -> Result<LatentDataset> {
    let mut out = LatentDataset::new(data.client_id, model.latent_len(), NUM_CLASSES);
    if data.is_empty() {
        return Ok(out);
    }
    let (images, labels) = data.all()?;
    let latents = model.encode(params.values(), &images)?;
    out.data = latents.into_data();
    out.labels = labels;
    out.original = out.labels.len();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    #[default]
    User,
    Home,
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user" => Ok(Level::User),
            "home" => Ok(Level::Home),
            _ => Err(Error::Config(format!("unknown level {s:?}; expected user or home"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonalizationConfig {
    pub fine_tune_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub level: Level,
    pub seed: u64,
}

impl Default for PersonalizationConfig {
    fn default() -> Self {
        PersonalizationConfig {
            fine_tune_epochs: 10,
            batch_size: 10,
            learning_rate: 0.01,
            level: Level::User,
            seed: 0,
        }
    }
}

impl PersonalizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "fine-tuning needs a positive batch size and learning rate".into(),
            ));
        }
        Ok(())
    }
}

/// Mini-batch SGD on the head's cross-entropy over latent inputs. Only the
/// head slice of the returned vector differs from `params`.
pub fn fine_tune_head(
    model: &Model,
    params: &ParamVector,
    data: &LatentDataset,
    cfg: &PersonalizationConfig,
) -> Result<ParamVector> {
    cfg.validate()?;
    let mut out = params.clone();
    if cfg.fine_tune_epochs == 0 {
        return Ok(out);
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset {
            client_id: data.client_id,
        });
    }
    let head = model.head_range();
    let mut grads = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.fine_tune_epochs {
        order.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(
            cfg.seed,
            &[tag::FINE_TUNE, data.client_id as u64, epoch as u64],
        ));
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (latents, labels) = data.batch(chunk)?;
            grads[head.clone()].fill(0.0);
            model.accumulate_head_gradients(out.values(), &latents, &labels, &mut grads)?;
            sgd_step_in_place(&mut out.values_mut()[head.clone()], &grads[head.clone()], cfg.learning_rate)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Personalized {
    pub client_id: usize,
    pub params: ParamVector,
    pub before: Vec<usize>,
    pub after: Vec<usize>,
}

/// encode -> SMOTE -> head fine-tuning for one client's training data.
pub fn personalize_client(
    model: &Model,
    global: &ParamVector,
    client: &ClientDataset,
    smote: &SmoteConfig,
    cfg: &PersonalizationConfig,
) -> Result<Personalized> {
    if client.is_empty() {
        return Err(Error::EmptyDataset {
            client_id: client.client_id,
        });
    }
    let latents = encode_dataset(model, global, client)?;
    let balanced = smote_balance(&latents, smote)?;
    let params = fine_tune_head(model, global, &balanced, cfg)?;
    Ok(Personalized {
        client_id: client.client_id,
        params,
        before: latents.histogram(),
        after: balanced.histogram(),
    })
}

/// One user's test accuracy under the global and the personalized model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub user: usize,
    /// Client (user or home) whose personalized model serves this user.
    pub client: usize,
    pub pre_accuracy: f64,
    pub post_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct PersonalizationReport {
    pub level: Level,
    pub models: Vec<Personalized>,
    pub rows: Vec<UserRow>,
}

impl PersonalizationReport {
    pub fn mean_pre(&self) -> f64 {
        self.rows.iter().map(|r| r.pre_accuracy).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_post(&self) -> f64 {
        self.rows.iter().map(|r| r.post_accuracy).sum::<f64>() / self.rows.len() as f64
    }
}

fn accuracy(model: &Model, params: &ParamVector, test: &ClientDataset) -> Result<f64> {
    let (images, labels) = test.all()?;
    let preds = model.predict(params.values(), &images)?;
    let hits = preds.iter().zip(&labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Personalizes every user (or every home) of a partition from `global`
/// and scores each user's test set before and after.
pub fn personalize_partition(
    model: &Model,
    global: &ParamVector,
    partition: &crate::data::Partition,
    smote: &SmoteConfig,
    cfg: &PersonalizationConfig,
) -> Result<PersonalizationReport> {
    let mut models = Vec::new();
    let mut owner = vec![0usize; partition.tests.len()];
    match cfg.level {
        Level::User => {
            for (h, members) in partition.homes.iter().enumerate() {
                for &u in members {
                    let mut data = partition.clients[h].for_user(u);
                    data.client_id = u;
                    owner[u] = models.len();
                    models.push(personalize_client(model, global, &data, smote, cfg)?);
                }
            }
        }
        Level::Home => {
            for (h, members) in partition.homes.iter().enumerate() {
                for &u in members {
                    owner[u] = models.len();
                }
                models.push(personalize_client(model, global, &partition.clients[h], smote, cfg)?);
            }
        }
    }
    let mut rows = Vec::with_capacity(partition.tests.len());
    for (u, test) in partition.tests.iter().enumerate() {
        let m = &models[owner[u]];
        rows.push(UserRow {
            user: u,
            client: m.client_id,
            pre_accuracy: accuracy(model, global, test)?,
            post_accuracy: accuracy(model, &m.params, test)?,
        });
    }
    Ok(PersonalizationReport {
        level: cfg.level,
        models,
        rows,
    })
}
