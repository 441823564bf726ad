use fedhome_nn::Batch;

use super::image::WindowSample;
use crate::error::Result;
use crate::model::{INPUT_SHAPE, NUM_CLASSES};

/// The samples one client trains on (or one user is tested on).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClientDataset {
    pub client_id: usize,
    /// Users whose data the client holds, ascending.
    pub users: Vec<usize>,
    pub samples: Vec<WindowSample>,
}

impl ClientDataset {
    pub fn new(client_id: usize, users: Vec<usize>, samples: Vec<WindowSample>) -> Self {
        ClientDataset {
            client_id,
            users,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for s in &self.samples {
            h[s.label] += 1;
        }
        h
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Images of `indices` stacked in order, with their labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Batch, Vec<usize>)> {
        let images = Batch::stack(
            INPUT_SHAPE,
            indices.iter().map(|&i| self.samples[i].image.data()),
        )?;
        let labels = indices.iter().map(|&i| self.samples[i].label).collect();
        Ok((images, labels))
    }

    pub fn all(&self) -> Result<(Batch, Vec<usize>)> {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.batch(&idx)
    }

    /// The samples belonging to `user`.
    pub fn for_user(&self, user: usize) -> ClientDataset {
        ClientDataset {
            client_id: self.client_id,
            users: vec![user],
            samples: self
                .samples
                .iter()
                .filter(|s| s.user_id == user)
                .cloned()
                .collect(),
        }
    }

    /// Concatenation of `parts` in order.
    pub fn merge<'a>(client_id: usize, parts: impl IntoIterator<Item = &'a ClientDataset>) -> Self {
        let mut users = Vec::new();
        let mut samples = Vec::new();
        for p in parts {
            users.extend_from_slice(&p.users);
            samples.extend(p.samples.iter().cloned());
        }
        users.sort_unstable();
        users.dedup();
        ClientDataset {
            client_id,
            users,
            samples,
        }
    }
}
