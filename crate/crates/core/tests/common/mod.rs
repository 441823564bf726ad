#![allow(dead_code)]

use fedhome::data::{ClientDataset, WindowSample};
use fedhome::model::{INPUT_SHAPE, NUM_CLASSES};
use fedhome_nn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_image(rng: &mut impl Rng) -> Tensor {
    let data = (0..INPUT_SHAPE.len()).map(|_| rng.random_range(0.0..1.0)).collect();
    Tensor::new(INPUT_SHAPE, data).unwrap()
}

/// `n` random images with labels cycling through the classes from `first_label`.
pub fn toy_client(client_id: usize, n: usize, first_label: usize, seed: u64) -> ClientDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| WindowSample {
            image: random_image(&mut rng),
            label: (first_label + i) % NUM_CLASSES,
            user_id: client_id,
        })
        .collect();
    ClientDataset::new(client_id, vec![client_id], samples)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Smallest max-coordinate residual of `s` against the segments between
/// any two of `points` (a point paired with itself included).
pub fn segment_residual(s: &[f64], points: &[&[f64]]) -> f64 {
    let mut best = f64::INFINITY;
    for a in points {
        for b in points {
            let d: Vec<f64> = a.iter().zip(*b).map(|(x, y)| y - x).collect();
            let dd: f64 = d.iter().map(|v| v * v).sum();
            let t = if dd == 0.0 {
                0.0
            } else {
                let proj: f64 = s.iter().zip(*a).zip(&d).map(|((s, a), d)| (s - a) * d).sum();
                (proj / dd).clamp(0.0, 1.0)
            };
            let r = s
                .iter()
                .zip(*a)
                .zip(&d)
                .map(|((s, a), d)| (s - (a + t * d)).abs())
                .fold(0.0, f64::max);
            best = best.min(r);
        }
    }
    best
}
