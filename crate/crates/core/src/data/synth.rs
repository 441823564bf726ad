//! Synthetic accelerometer + gyroscope streams standing in for recorded
//! data. Every class has a parametric template (harmonic motion about a
//! gravity posture, with periodic impacts for jumps and falls); every user
//! gets their own tempo, amplitude, per-axis gains and sensor orientation,
//! so users are non-IID while classes stay separable.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use super::stream::{Record, SensorStream};
use super::Activity;
use crate::seed::{self, tag};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub users: usize,
    pub seconds_per_class: f64,
    pub sample_rate: f64,
    /// Noise standard deviation for acceleration (m/s^2) and angular velocity (rad/s).
    pub accel_noise: f64,
    pub gyro_noise: f64,
    /// Per-user tempo factor is drawn from `1 +- tempo_spread`.
    pub tempo_spread: f64,
    /// Per-user amplitude factor and per-axis gains are drawn from `1 +- amplitude_spread`.
    pub amplitude_spread: f64,
    /// Largest rotation of a user's sensor frame, in degrees.
    pub max_tilt_degrees: f64,
    /// Readings are rounded to this step, like a real sensor's LSB; 0 keeps
    /// full precision.
    pub resolution: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users: 30,
            seconds_per_class: 80.0,
            sample_rate: 200.0,
            accel_noise: 0.3,
            gyro_noise: 0.08,
            tempo_spread: 0.1,
            amplitude_spread: 0.15,
            max_tilt_degrees: 10.0,
            resolution: 1e-4,
        }
    }
}

/// Periodic impact: a Gaussian pulse once per `period` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impact {
    pub period: f64,
    pub width: f64,
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Template {
    /// Fundamental frequency in Hz.
    pub frequency: f64,
    /// Unit gravity direction in the body frame (posture).
    pub posture: [f64; 3],
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
    /// Second-harmonic amplitude relative to the fundamental.
    pub harmonic: f64,
    pub impact: Option<Impact>,
}

pub fn template(activity: Activity) -> Template {
    let upright = [0.0, 1.0, 0.0];
    let base = Template {
        frequency: 1.0,
        posture: upright,
        accel: [0.0; 3],
        gyro: [0.0; 3],
        harmonic: 0.0,
        impact: None,
    };
    match activity {
        Activity::Standing => Template {
            frequency: 0.3,
            accel: [0.15, 0.08, 0.12],
            gyro: [0.05, 0.03, 0.05],
            ..base
        },
        Activity::Walking => Template {
            frequency: 1.8,
            accel: [1.4, 2.4, 1.1],
            gyro: [0.6, 0.4, 0.9],
            harmonic: 0.35,
            ..base
        },
        Activity::StairsUp => Template {
            frequency: 1.5,
            posture: unit([0.25, 1.0, 0.0]),
            accel: [1.1, 3.0, 0.9],
            gyro: [0.8, 0.3, 0.6],
            harmonic: 0.6,
            ..base
        },
        Activity::StairsDown => Template {
            frequency: 1.7,
            posture: unit([-0.25, 1.0, 0.0]),
            accel: [1.6, 3.6, 1.2],
            gyro: [0.5, 0.5, 1.0],
            harmonic: 0.15,
            ..base
        },
        Activity::Jumping => Template {
            frequency: 1.9,
            accel: [0.6, 5.0, 0.6],
            gyro: [0.3, 0.2, 0.3],
            harmonic: 0.2,
            impact: Some(Impact {
                period: 1.0 / 1.9,
                width: 0.03,
                accel: [0.0, 10.0, 0.0],
                gyro: [0.5, 0.0, 0.5],
            }),
            ..base
        },
        Activity::Jogging => Template {
            frequency: 2.6,
            accel: [2.6, 5.0, 2.2],
            gyro: [1.4, 0.9, 1.8],
            harmonic: 0.3,
            ..base
        },
        Activity::CarStepIn => Template {
            frequency: 0.6,
            posture: unit([0.5, 0.85, 0.15]),
            accel: [1.8, 1.2, 2.2],
            gyro: [1.6, 0.9, 1.1],
            harmonic: 0.5,
            ..base
        },
        Activity::CarStepOut => Template {
            frequency: 0.7,
            posture: unit([-0.4, 0.9, 0.25]),
            accel: [2.2, 1.8, 1.3],
            gyro: [1.0, 1.6, 0.9],
            harmonic: 0.4,
            ..base
        },
        Activity::SitChair => Template {
            frequency: 0.5,
            posture: unit([0.0, 0.6, 0.8]),
            accel: [1.0, 1.8, 0.9],
            gyro: [1.4, 0.4, 0.4],
            harmonic: 0.3,
            ..base
        },
        Activity::Fall => Template {
            frequency: 0.9,
            posture: unit([0.85, 0.15, 0.5]),
            accel: [0.8, 0.6, 0.8],
            gyro: [0.6, 0.6, 0.6],
            harmonic: 0.5,
            impact: Some(Impact {
                period: 1.1,
                width: 0.05,
                accel: [12.0, -6.0, 8.0],
                gyro: [3.5, 2.0, -3.0],
            }),
        },
    }
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.map(|x| x / n)
}

/// Per-user physical variation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserProfile {
    pub tempo: f64,
    pub amplitude: f64,
    pub gains: [f64; 3],
    pub rotation: [[f64; 3]; 3],
}

impl UserProfile {
    pub fn nominal() -> Self {
        UserProfile {
            tempo: 1.0,
            amplitude: 1.0,
            gains: [1.0; 3],
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn draw(spec: &SynthSpec, rng: &mut impl Rng) -> Self {
        let spread = |rng: &mut dyn rand::RngCore, s: f64| {
            if s > 0.0 {
                rng.random_range(1.0 - s..=1.0 + s)
            } else {
                1.0
            }
        };
        let tempo = spread(rng, spec.tempo_spread);
        let amplitude = spread(rng, spec.amplitude_spread);
        let gains = [0; 3].map(|_| spread(rng, spec.amplitude_spread));
        let axis: [f64; 3] = UnitSphere.sample(rng);
        let angle = rng.random_range(0.0..=1.0) * spec.max_tilt_degrees.to_radians();
        UserProfile {
            tempo,
            amplitude,
            gains,
            rotation: rodrigues(axis, angle),
        }
    }
}

fn rodrigues(k: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let [x, y, z] = k;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn rotate(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

/// Noise-free signal of one class for one user.
#[derive(Debug, Clone, Copy)]
pub struct ClassSignal {
    template: Template,
    profile: UserProfile,
    frequency: f64,
    phases: [[f64; 2]; 6],
    impact_phase: f64,
}

impl ClassSignal {
    pub fn new(activity: Activity, profile: UserProfile, jitter: f64, phases: [[f64; 2]; 6], impact_phase: f64) -> Self {
        let template = template(activity);
        ClassSignal {
            template,
            profile,
            frequency: template.frequency * profile.tempo * jitter,
            phases,
            impact_phase,
        }
    }

    pub fn nominal(activity: Activity) -> Self {
        ClassSignal::new(activity, UserProfile::nominal(), 1.0, [[0.0; 2]; 6], 0.0)
    }

    pub fn at(&self, t: f64) -> Record {
        let tpl = &self.template;
        let p = &self.profile;
        let mut acc = [0.0; 3];
        let mut gyro = [0.0; 3];
        let w = TAU * self.frequency * t;
        for ax in 0..3 {
            let gain = p.amplitude * p.gains[ax];
            let [p1, p2] = self.phases[ax];
            acc[ax] = GRAVITY * tpl.posture[ax]
                + gain * tpl.accel[ax] * ((w + p1).sin() + tpl.harmonic * (2.0 * w + p2).sin());
            let [q1, q2] = self.phases[ax + 3];
            gyro[ax] = gain * tpl.gyro[ax] * ((w + q1).sin() + tpl.harmonic * (2.0 * w + q2).sin());
        }
        if let Some(imp) = tpl.impact {
            let period = imp.period / p.tempo;
            let local = (t / period + self.impact_phase).rem_euclid(1.0) - 0.5;
            let pulse = (-0.5 * (local * period / imp.width).powi(2)).exp() * p.amplitude;
            for ax in 0..3 {
                acc[ax] += pulse * imp.accel[ax];
                gyro[ax] += pulse * imp.gyro[ax];
            }
        }
        let acc = rotate(&p.rotation, acc);
        let gyro = rotate(&p.rotation, gyro);
        [acc[0], acc[1], acc[2], gyro[0], gyro[1], gyro[2]]
    }
}

/// Streams for users `0..spec.users`, each with one segment per class in
/// class order; deterministic in `seed`.
pub fn synthesize_streams(spec: &SynthSpec, seed: u64) -> Vec<SensorStream> {
    (0..spec.users).map(|u| synthesize_user(spec, seed, u)).collect()
}

pub fn synthesize_user(spec: &SynthSpec, seed: u64, user: usize) -> SensorStream {
    let mut rng = seed::rng(seed, &[tag::SYNTH_USER, user as u64]);
    let profile = UserProfile::draw(spec, &mut rng);
    let ticks = (spec.seconds_per_class * spec.sample_rate).round() as usize;
    let acc_noise = Normal::new(0.0, spec.accel_noise).expect("finite noise");
    let gyro_noise = Normal::new(0.0, spec.gyro_noise).expect("finite noise");
    let scale = if spec.resolution > 0.0 {
        (1.0 / spec.resolution).round()
    } else {
        0.0
    };
    let mut stream = SensorStream::new(user, spec.sample_rate);
    stream.records.reserve(ticks * Activity::ALL.len());
    for activity in Activity::ALL {
        let jitter = rng.random_range(0.97..=1.03);
        let phases = [[0.0; 2]; 6].map(|_| [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)]);
        let signal = ClassSignal::new(activity, profile, jitter, phases, rng.random_range(0.0..1.0));
        let mut noise = seed::rng(seed, &[tag::SYNTH_NOISE, user as u64, activity.index() as u64]);
        let records = (0..ticks).map(|i| {
            let mut r = signal.at(i as f64 / spec.sample_rate);
            for v in &mut r[..3] {
                *v += acc_noise.sample(&mut noise);
            }
            for v in &mut r[3..] {
                *v += gyro_noise.sample(&mut noise);
            }
            if scale > 0.0 {
                for v in &mut r {
                    *v = (*v * scale).round() / scale;
                }
            }
            r
        });
        stream.push_segment(activity, records);
    }
    stream
}

/// Per-channel mean and standard deviation of a class's nominal,
/// noise-free signal over `seconds`.
pub fn signature(activity: Activity, sample_rate: f64, seconds: f64) -> [f64; 12] {
    let signal = ClassSignal::nominal(activity);
    let n = (seconds * sample_rate) as usize;
    let mut sum = [0.0; 6];
    let mut sq = [0.0; 6];
    for i in 0..n {
        let r = signal.at(i as f64 / sample_rate);
        for ch in 0..6 {
            sum[ch] += r[ch];
            sq[ch] += r[ch] * r[ch];
        }
    }
    let mut out = [0.0; 12];
    for ch in 0..6 {
        let mean = sum[ch] / n as f64;
        out[ch] = mean;
        out[ch + 6] = (sq[ch] / n as f64 - mean * mean).max(0.0).sqrt();
    }
    out
}

/// Smallest distance between two class signatures, in units of the
/// per-channel noise standard deviation.
pub fn min_template_separation(spec: &SynthSpec) -> (f64, Activity, Activity) {
    let sigs = Activity::ALL.map(|a| signature(a, spec.sample_rate, 20.0));
    let sigma = |ch: usize| if ch % 6 < 3 { spec.accel_noise } else { spec.gyro_noise };
    let mut best = (f64::INFINITY, Activity::Standing, Activity::Standing);
    for i in 0..10 {
        for j in i + 1..10 {
            let d = (0..12)
                .map(|ch| ((sigs[i][ch] - sigs[j][ch]) / sigma(ch)).powi(2))
                .sum::<f64>()
                .sqrt();
            if d < best.0 {
                best = (d, Activity::ALL[i], Activity::ALL[j]);
            }
        }
    }
    best
}
