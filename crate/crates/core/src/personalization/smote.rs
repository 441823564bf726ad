use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LatentDataset;
use crate::data::Activity;
use crate::error::{Error, Result};
use crate::seed::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k_neighbors: 5,
            seed: 0,
        }
    }
}

fn class_name(c: usize) -> String {
    Activity::from_index(c).map_or_else(|| format!("#{c}"), |a| a.code().to_string())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices (into `members`) of the `k` points nearest to `members[i]`,
/// excluding itself; ties go to the lower index.
fn nearest(data: &LatentDataset, members: &[usize], i: usize, k: usize) -> Vec<usize> {
    let x = data.point(members[i]);
    let mut dist: Vec<(f64, usize)> = members
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, &m)| (squared_distance(x, data.point(m)), j))
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist.truncate(k);
    dist.into_iter().map(|(_, j)| j).collect()
}

/// Oversamples every class up to the largest class count. Each new point is
/// `x + d * (x' - x)` for a random member `x` of the class, one of its `k`
/// nearest same-class neighbours `x'` and `d ~ U[0, 1)`. Originals keep their
/// positions; new points follow, grouped by class.
pub fn smote_balance(data: &LatentDataset, cfg: &SmoteConfig) -> Result<LatentDataset> {
    if cfg.k_neighbors == 0 {
        return Err(Error::Config("SMOTE needs k_neighbors >= 1".into()));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); data.classes];
    for (i, &y) in data.labels.iter().enumerate() {
        if y >= data.classes {
            return Err(Error::Config(format!("label {y} out of range for {} classes", data.classes)));
        }
        members[y].push(i);
    }
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass { class: class_name(c) });
    }
    let target = members.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = data.clone();
    for (class, idx) in members.iter().enumerate() {
        let need = target - idx.len();
        if need == 0 {
            continue;
        }
        let mut rng = seed::rng(cfg.seed, &[tag::SMOTE, data.client_id as u64, class as u64]);
        if idx.len() == 1 {
            log::warn!(
                "client {}: class {} has a single sample; duplicating it {need} times",
                data.client_id,
                class_name(class)
            );
        }
        let mut neighbours: Vec<Option<Vec<usize>>> = vec![None; idx.len()];
        for _ in 0..need {
            let i = rng.random_range(0..idx.len());
            let x = data.point(idx[i]);
            let nn = neighbours[i].get_or_insert_with(|| nearest(data, idx, i, cfg.k_neighbors));
            if nn.is_empty() {
                out.push(x.to_vec(), class);
                continue;
            }
            let j = nn[rng.random_range(0..nn.len())];
            let other = data.point(idx[j]);
            let d: f64 = rng.random_range(0.0..1.0);
            out.push(x.iter().zip(other).map(|(a, b)| a + d * (b - a)).collect(), class);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(points: &[(&[f64], usize)], classes: usize) -> LatentDataset {
        let mut d = LatentDataset::new(0, points[0].0.len(), classes);
        for (p, y) in points {
            d.push(p.to_vec(), *y);
        }
        d.original = d.len();
        d
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let d = toy(&[(&[0.0, 1.0], 0), (&[2.0, 3.0], 1)], 2);
        assert_eq!(smote_balance(&d, &SmoteConfig::default()).unwrap(), d);
    }

    #[test]
    fn single_neighbour_stays_on_segment() {
        let d = toy(
            &[
                (&[0.0, 0.0], 0),
                (&[1.0, 0.0], 0),
                (&[2.0, 0.0], 0),
                (&[1.0, 1.0], 1),
                (&[3.0, 5.0], 1),
            ],
            2,
        );
        let out = smote_balance(&d, &SmoteConfig { k_neighbors: 1, seed: 3 }).unwrap();
        assert_eq!(out.histogram(), vec![3, 3]);
        let s = out.point(5);
        let t = (s[0] - 1.0) / 2.0;
        assert!((0.0..=1.0).contains(&t));
        assert!((s[1] - (1.0 + 4.0 * t)).abs() < 1e-12);
    }

    #[test]
    fn lone_point_is_duplicated() {
        let d = toy(&[(&[0.0], 0), (&[1.0], 0), (&[7.0], 1)], 2);
        let out = smote_balance(&d, &SmoteConfig::default()).unwrap();
        assert_eq!(out.point(3), &[7.0]);
    }

    #[test]
    fn empty_class_is_named() {
        let d = toy(&[(&[0.0], 0), (&[1.0], 2)], 3);
        let err = smote_balance(&d, &SmoteConfig::default()).unwrap_err().to_string();
        assert!(err.contains("WAL"), "{err}");
    }

    #[test]
    fn nearest_breaks_ties_by_index() {
        let d = toy(&[(&[0.0], 0), (&[1.0], 0), (&[-1.0], 0), (&[5.0], 0)], 1);
        assert_eq!(nearest(&d, &[0, 1, 2, 3], 0, 2), vec![1, 2]);
        assert_eq!(nearest(&d, &[0, 1, 2, 3], 3, 5), vec![1, 0, 2]);
    }
}
