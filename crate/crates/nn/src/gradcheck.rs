//! Central-difference verification of analytic gradients.

use std::ops::Range;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Minimum number of coordinates compared (all of them if fewer exist).
    pub coordinates: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            coordinates: 200,
            step: DEFAULT_STEP,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Coordinates dropped because the loss had a kink within one step.
    pub kinks_skipped: usize,
}

/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient returned by `loss_fn` at `params` against
/// central differences on a seeded sample of coordinates from `range`.
///
/// A coordinate whose central differences at `step` and `step / 2` disagree
/// beyond round-off is treated as straddling a ReLU/max-pool kink and replaced
/// by another sampled coordinate.
pub fn gradient_check<F>(
    loss_fn: F,
    params: &[f64],
    range: Range<usize>,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (base, analytic) = loss_fn(params)?;
    if !base.is_finite() {
        return Err(NnError::NonFinite {
            value: base,
            context: "gradient check base point".into(),
        });
    }
    if analytic.len() != params.len() {
        return Err(NnError::LengthMismatch {
            expected: params.len(),
            actual: analytic.len(),
        });
    }
    let span = range.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let order: Vec<usize> = index::sample(&mut rng, span, span)
        .into_iter()
        .map(|i| range.start + i)
        .collect();

    let eval = |p: &mut Vec<f64>, i: usize, v: f64| -> Result<f64> {
        p[i] = v;
        let (l, _) = loss_fn(p)?;
        if !l.is_finite() {
            return Err(NnError::NonFinite {
                value: l,
                context: format!("perturbed coordinate {i}"),
            });
        }
        Ok(l)
    };

    let h = cfg.step;
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
        kinks_skipped: 0,
    };
    for &i in &order {
        if report.checked >= cfg.coordinates {
            break;
        }
        let orig = params[i];
        let plus = eval(&mut work, i, orig + h)?;
        let minus = eval(&mut work, i, orig - h)?;
        let half_plus = eval(&mut work, i, orig + h / 2.0)?;
        let half_minus = eval(&mut work, i, orig - h / 2.0)?;
        work[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let refined = (half_plus - half_minus) / h;
        let tolerance = 1e-6 * (numeric.abs() + refined.abs()) + 1e-9 * base.abs().max(1.0);
        if (numeric - refined).abs() > tolerance {
            report.kinks_skipped += 1;
            continue;
        }
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            if err >= report.max_rel_error {
                report.worst_index = Some(i);
            }
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(p: &[f64]) -> Result<(f64, Vec<f64>)> {
        let l = p.iter().enumerate().map(|(i, x)| (i as f64 + 1.0) * x * x).sum();
        let g = p
            .iter()
            .enumerate()
            .map(|(i, x)| 2.0 * (i as f64 + 1.0) * x)
            .collect();
        Ok((l, g))
    }

    #[test]
    fn exact_gradient_passes() {
        let p: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let r = gradient_check(quadratic, &p, 0..50, GradCheckConfig::default()).unwrap();
        assert_eq!(r.checked, 50);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let bad = |p: &[f64]| {
            let (l, mut g) = quadratic(p)?;
            g[3] *= 1.5;
            Ok((l, g))
        };
        let p = vec![1.0; 10];
        let r = gradient_check(bad, &p, 0..10, GradCheckConfig::default()).unwrap();
        assert!(r.max_rel_error > 0.1);
        assert_eq!(r.worst_index, Some(3));
    }

    #[test]
    fn kink_is_skipped() {
        // |x| with the kink 0.7 steps away: only the wider difference crosses it
        let abs = |p: &[f64]| Ok((p[0].abs() + p[1] * p[1], vec![p[0].signum(), 2.0 * p[1]]));
        let p = [0.7 * DEFAULT_STEP, 1.0];
        let r = gradient_check(abs, &p, 0..2, GradCheckConfig::default()).unwrap();
        assert_eq!(r.kinks_skipped, 1);
        assert_eq!(r.checked, 1);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let nan = |_: &[f64]| Ok((f64::NAN, vec![0.0]));
        assert!(matches!(
            gradient_check(nan, &[0.0], 0..1, GradCheckConfig::default()),
            Err(NnError::NonFinite { .. })
        ));
    }
}
