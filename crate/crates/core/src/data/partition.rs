//! Train/test split of per-user windows into client datasets.
//!
//! Test windows come from the end of each class recording, spaced
//! `test_spacing` strides apart; training windows are drawn from the windows
//! that do not overlap any test window, so no tick is shared between the two.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::ClientDataset;
use super::image::{window_to_image, NormStats, WindowSample};
use super::stream::SensorStream;
use super::window::{windows_with, Window, WindowGeometry};
use super::Activity;
use crate::error::{Error, Result};
use crate::model::NUM_CLASSES;
use crate::seed::{self, tag};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Balanced,
    #[default]
    Imbalanced,
    Home,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Balanced => "balanced",
            Scheme::Imbalanced => "imbalanced",
            Scheme::Home => "home",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(Scheme::Balanced),
            "imbalanced" => Ok(Scheme::Imbalanced),
            "home" => Ok(Scheme::Home),
            _ => Err(Error::Config(format!(
                "unknown scheme {s:?}; expected balanced, imbalanced or home"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSpec {
    pub scheme: Scheme,
    pub num_users: usize,
    pub per_user: usize,
    pub homes: usize,
    pub min_home: usize,
    pub max_home: usize,
    pub test_per_class: usize,
    /// Test windows are taken every `test_spacing` strides from the end.
    pub test_spacing: usize,
    pub seed: u64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec {
            scheme: Scheme::Imbalanced,
            num_users: 30,
            per_user: 480,
            homes: 10,
            min_home: 1,
            max_home: 5,
            test_per_class: 16,
            test_spacing: 2,
            seed: 0,
        }
    }
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_users == 0 {
            return bad("num_users must be positive".into());
        }
        if self.per_user < NUM_CLASSES {
            return bad(format!(
                "per_user must be at least {NUM_CLASSES} so every class is present"
            ));
        }
        if self.scheme == Scheme::Balanced && !self.per_user.is_multiple_of(NUM_CLASSES) {
            return bad(format!(
                "balanced partition needs per_user divisible by {NUM_CLASSES}, got {}",
                self.per_user
            ));
        }
        if self.test_spacing == 0 {
            return bad("test_spacing must be positive".into());
        }
        if self.scheme == Scheme::Home {
            if self.homes == 0 || self.min_home == 0 || self.min_home > self.max_home {
                return bad("home sizes need 1 <= min_home <= max_home and homes >= 1".into());
            }
            if self.homes * self.min_home > self.num_users || self.homes * self.max_home < self.num_users {
                return bad(format!(
                    "{} users cannot fill {} homes of {}..={} members",
                    self.num_users, self.homes, self.min_home, self.max_home
                ));
            }
        }
        Ok(())
    }

    /// Training windows per class for user index `user`.
    pub fn class_counts(&self, user: usize) -> [usize; NUM_CLASSES] {
        match self.scheme {
            Scheme::Balanced => [self.per_user / NUM_CLASSES; NUM_CLASSES],
            Scheme::Imbalanced | Scheme::Home => {
                let mut rng = seed::rng(self.seed, &[tag::PARTITION, user as u64]);
                let parts = composition(self.per_user, NUM_CLASSES, &mut rng);
                parts.try_into().expect("ten parts")
            }
        }
    }

    /// Users (by index) in each home; every user is alone unless the scheme
    /// is `Home`.
    pub fn home_members(&self) -> Result<Vec<Vec<usize>>> {
        if self.scheme != Scheme::Home {
            return Ok((0..self.num_users).map(|u| vec![u]).collect());
        }
        self.validate()?;
        let mut rng = seed::rng(self.seed, &[tag::HOMES]);
        let sizes = bounded_composition(
            self.num_users,
            self.homes,
            self.min_home,
            self.max_home,
            &mut rng,
        )?;
        let mut users: Vec<usize> = (0..self.num_users).collect();
        users.shuffle(&mut rng);
        let mut out = Vec::with_capacity(self.homes);
        let mut rest = users.as_slice();
        for size in sizes {
            let (home, tail) = rest.split_at(size);
            let mut home = home.to_vec();
            home.sort_unstable();
            out.push(home);
            rest = tail;
        }
        Ok(out)
    }
}

/// Uniform random composition of `total` into `parts` positive parts.
pub fn composition(total: usize, parts: usize, rng: &mut impl Rng) -> Vec<usize> {
    assert!(parts >= 1 && total >= parts, "cannot split {total} into {parts} positive parts");
    let mut cuts: Vec<usize> = index::sample(rng, total - 1, parts - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    cuts.push(total);
    let mut prev = 0;
    cuts.into_iter()
        .map(|c| {
            let part = c - prev;
            prev = c;
            part
        })
        .collect()
}

/// Rejection-sampled composition with every part in `min..=max`.
pub fn bounded_composition(
    total: usize,
    parts: usize,
    min: usize,
    max: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if parts * min > total || parts * max < total || min == 0 {
        return Err(Error::Config(format!(
            "no composition of {total} into {parts} parts within {min}..={max}"
        )));
    }
    let shift = min - 1;
    for _ in 0..1_000_000 {
        let c: Vec<usize> = composition(total - parts * shift, parts, rng)
            .into_iter()
            .map(|p| p + shift)
            .collect();
        if c.iter().all(|&p| p <= max) {
            return Ok(c);
        }
    }
    Err(Error::Config(format!(
        "rejection sampling found no composition of {total} into {parts} parts within {min}..={max}"
    )))
}

/// The datasets of one partition.
#[derive(Debug, Clone)]
pub struct Partition {
    pub spec: PartitionSpec,
    pub norm: NormStats,
    /// Stream user id of each user index.
    pub user_ids: Vec<usize>,
    /// Training clients: one per user, or one per home.
    pub clients: Vec<ClientDataset>,
    /// Class-balanced test set of each user index.
    pub tests: Vec<ClientDataset>,
    /// User indices behind each client.
    pub homes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEntry {
    pub client_id: usize,
    pub users: Vec<usize>,
    pub histogram: [usize; NUM_CLASSES],
    pub total: usize,
}

/// Reproducibility record of a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub spec: PartitionSpec,
    pub classes: Vec<Activity>,
    pub norm: NormStats,
    pub user_ids: Vec<usize>,
    pub clients: Vec<ClientEntry>,
    pub tests: Vec<ClientEntry>,
}

impl Partition {
    pub fn manifest(&self) -> PartitionManifest {
        let entry = |c: &ClientDataset| ClientEntry {
            client_id: c.client_id,
            users: c.users.clone(),
            histogram: c.histogram(),
            total: c.len(),
        };
        PartitionManifest {
            spec: self.spec,
            classes: Activity::ALL.to_vec(),
            norm: self.norm,
            user_ids: self.user_ids.clone(),
            clients: self.clients.iter().map(entry).collect(),
            tests: self.tests.iter().map(entry).collect(),
        }
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// All training samples pooled, as used by centralized baselines.
    pub fn pooled_train(&self) -> ClientDataset {
        ClientDataset::merge(usize::MAX, &self.clients)
    }

    pub fn pooled_test(&self) -> ClientDataset {
        ClientDataset::merge(usize::MAX, &self.tests)
    }
}

struct UserSplit<'a> {
    train: Vec<Window<'a>>,
    test: Vec<Window<'a>>,
}

fn split_user<'a>(
    stream: &'a SensorStream,
    user: usize,
    spec: &PartitionSpec,
    geometry: WindowGeometry,
    shortfalls: &mut String,
) -> UserSplit<'a> {
    let counts = spec.class_counts(user);
    let all = windows_with(stream, geometry);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for activity in Activity::ALL {
        let class: Vec<Window<'a>> = all.iter().filter(|w| w.activity == activity).copied().collect();
        let mut picked: Vec<Window<'a>> = (0..spec.test_per_class)
            .map_while(|i| {
                let back = i * spec.test_spacing + 1;
                (back <= class.len()).then(|| class[class.len() - back])
            })
            .collect();
        picked.reverse();
        let candidates: Vec<Window<'a>> = class
            .iter()
            .filter(|w| !picked.iter().any(|t| t.segment == w.segment && t.overlaps(w)))
            .copied()
            .collect();
        let need = counts[activity.index()];
        if picked.len() < spec.test_per_class || candidates.len() < need {
            let _ = writeln!(
                shortfalls,
                "  user {} {activity}: need {need} training + {} test windows, have {} + {}",
                stream.user_id,
                spec.test_per_class,
                candidates.len(),
                picked.len()
            );
            continue;
        }
        let mut rng = seed::rng(spec.seed, &[tag::PARTITION, user as u64, activity.index() as u64 + 1]);
        let mut chosen: Vec<usize> = index::sample(&mut rng, candidates.len(), need).into_vec();
        chosen.sort_unstable();
        train.extend(chosen.into_iter().map(|i| candidates[i]));
        test.extend(picked);
    }
    UserSplit { train, test }
}

fn to_samples(windows: &[Window<'_>], user: usize, norm: &NormStats) -> Result<Vec<WindowSample>> {
    windows
        .iter()
        .map(|w| {
            Ok(WindowSample {
                image: window_to_image(w.records, norm)?,
                label: w.activity.index(),
                user_id: user,
            })
        })
        .collect()
}

/// Splits the first `spec.num_users` streams (by user id) into clients and
/// per-user test sets. Normalization statistics come from the training
/// windows only.
pub fn build_partition(streams: &[SensorStream], spec: &PartitionSpec) -> Result<Partition> {
    build_partition_with(streams, spec, WindowGeometry::default())
}

pub fn build_partition_with(
    streams: &[SensorStream],
    spec: &PartitionSpec,
    geometry: WindowGeometry,
) -> Result<Partition> {
    spec.validate()?;
    let mut ordered: Vec<&SensorStream> = streams.iter().collect();
    ordered.sort_by_key(|s| s.user_id);
    if ordered.windows(2).any(|p| p[0].user_id == p[1].user_id) {
        return Err(Error::Config("two streams share a user id".into()));
    }
    if ordered.len() < spec.num_users {
        return Err(Error::Shortfall(format!(
            "  {} users requested, {} streams available",
            spec.num_users,
            ordered.len()
        )));
    }
    ordered.truncate(spec.num_users);

    let mut shortfalls = String::new();
    let splits: Vec<UserSplit<'_>> = ordered
        .iter()
        .enumerate()
        .map(|(u, s)| split_user(s, u, spec, geometry, &mut shortfalls))
        .collect();
    if !shortfalls.is_empty() {
        return Err(Error::Shortfall(shortfalls));
    }

    let norm = NormStats::from_windows(splits.iter().flat_map(|s| s.train.iter().map(|w| w.records)))?;
    let mut per_user = Vec::with_capacity(splits.len());
    let mut tests = Vec::with_capacity(splits.len());
    for (u, split) in splits.iter().enumerate() {
        per_user.push(ClientDataset::new(u, vec![u], to_samples(&split.train, u, &norm)?));
        tests.push(ClientDataset::new(u, vec![u], to_samples(&split.test, u, &norm)?));
    }
    let homes = spec.home_members()?;
    let clients = if spec.scheme == Scheme::Home {
        homes
            .iter()
            .enumerate()
            .map(|(h, members)| ClientDataset::merge(h, members.iter().map(|&u| &per_user[u])))
            .collect()
    } else {
        per_user
    };
    Ok(Partition {
        spec: *spec,
        norm,
        user_ids: ordered.iter().map(|s| s.user_id).collect(),
        clients,
        tests,
        homes,
    })
}
