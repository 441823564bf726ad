use fedhome_nn::{NnError, ParamVector};

use crate::error::{Error, Result};

/// One client's returned parameters and its sample count `n_k`.
#[derive(Debug, Clone, Copy)]
pub struct Update<'a> {
    pub client_id: usize,
    pub params: &'a ParamVector,
    pub samples: usize,
}

/// Sample-weighted average `sum_k (n_k / n) w_k`, accumulated in ascending
/// client-id order as a running mean, so identical updates average to
/// themselves exactly. Returns the weights `n_k / n` in that order.
pub fn aggregate(updates: &[Update<'_>]) -> Result<(ParamVector, Vec<f64>)> {
    let mut sorted: Vec<&Update<'_>> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    let first = sorted
        .first()
        .ok_or_else(|| Error::Config("nothing to aggregate".into()))?;
    let len = first.params.len();
    for u in &sorted {
        if u.params.len() != len {
            return Err(NnError::LengthMismatch {
                expected: len,
                actual: u.params.len(),
            }
            .into());
        }
        if u.samples == 0 {
            return Err(Error::EmptyDataset {
                client_id: u.client_id,
            });
        }
    }
    let total: usize = sorted.iter().map(|u| u.samples).sum();
    let mut out = first.params.clone();
    let mut seen = first.samples;
    for u in &sorted[1..] {
        seen += u.samples;
        let w = u.samples as f64 / seen as f64;
        for (o, &x) in out.values_mut().iter_mut().zip(u.params.values()) {
            *o += (x - *o) * w;
        }
    }
    let weights = sorted
        .iter()
        .map(|u| u.samples as f64 / total as f64)
        .collect();
    Ok((out, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: Vec<f64>) -> ParamVector {
        ParamVector::gather([("w", v)])
    }

    #[test]
    fn identical_updates_are_exact() {
        let a = pv(vec![0.1, -7.3, 1e-9, 3.0]);
        let ups: Vec<_> = [(2, 7), (0, 480), (5, 13)]
            .map(|(id, n)| Update {
                client_id: id,
                params: &a,
                samples: n,
            })
            .to_vec();
        let (out, w) = aggregate(&ups).unwrap();
        assert_eq!(out.values(), a.values());
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_mean() {
        let zero = pv(vec![0.0; 3]);
        let four = pv(vec![4.0; 3]);
        let (out, w) = aggregate(&[
            Update {
                client_id: 1,
                params: &four,
                samples: 3,
            },
            Update {
                client_id: 0,
                params: &zero,
                samples: 1,
            },
        ])
        .unwrap();
        assert_eq!(out.values(), &[3.0; 3]);
        assert_eq!(w, vec![0.25, 0.75]);
    }

    #[test]
    fn errors() {
        assert!(aggregate(&[]).is_err());
        let a = pv(vec![1.0]);
        let b = pv(vec![1.0, 2.0]);
        let up = |p, n| Update {
            client_id: 0,
            params: p,
            samples: n,
        };
        assert!(aggregate(&[up(&a, 1), up(&b, 1)]).is_err());
        assert!(aggregate(&[up(&a, 0)]).is_err());
    }
}
