//! Sweeps over variants, partition schemes, `K` and `(B, E)`, repeated
//! with consecutive seeds. Every cell writes its own directory and a `DONE`
//! marker, so an interrupted sweep resumes where it stopped.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_centralized, Summary};
use crate::data::{Partition, Scheme};
use crate::error::{Error, Result};
use crate::federation::{evaluate_global, run_federated, RoundLog, RunOptions};
use crate::model::{Architecture, Model};
use crate::personalization::personalize_partition;
use crate::run::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    FedHome,
    FedHomeP,
    FlCnn,
    FlCnnLarge,
    FlMlp,
    CentralizedGcae,
    CentralizedCnn,
    CentralizedMlp,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::FedHome,
        Variant::FedHomeP,
        Variant::FlCnn,
        Variant::FlCnnLarge,
        Variant::FlMlp,
        Variant::CentralizedGcae,
        Variant::CentralizedCnn,
        Variant::CentralizedMlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::FedHome => "fedhome",
            Variant::FedHomeP => "fedhome-p",
            Variant::FlCnn => "fl-cnn",
            Variant::FlCnnLarge => "fl-cnn-large",
            Variant::FlMlp => "fl-mlp",
            Variant::CentralizedGcae => "centralized-gcae",
            Variant::CentralizedCnn => "centralized-cnn",
            Variant::CentralizedMlp => "centralized-mlp",
        }
    }

    pub fn arch(self) -> Architecture {
        match self {
            Variant::FedHome | Variant::FedHomeP | Variant::CentralizedGcae => Architecture::Gcae,
            Variant::FlCnn | Variant::CentralizedCnn => Architecture::FlCnn,
            Variant::FlCnnLarge => Architecture::FlCnnLarge,
            Variant::FlMlp | Variant::CentralizedMlp => Architecture::FlMlp,
        }
    }

    pub fn federated(self) -> bool {
        !matches!(
            self,
            Variant::CentralizedGcae | Variant::CentralizedCnn | Variant::CentralizedMlp
        )
    }

    pub fn personalized(self) -> bool {
        self == Variant::FedHome
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!("unknown variant {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub variants: Vec<Variant>,
    pub schemes: Vec<Scheme>,
    /// Clients per round to sweep; empty means the configured `K` only.
    pub k_values: Vec<usize>,
    /// `(B, E)` pairs to sweep; empty means the configured pair only.
    pub batch_epochs: Vec<(usize, usize)>,
    pub repetitions: usize,
    /// Accuracy levels for the rounds-to-threshold trend check.
    pub thresholds: Vec<f64>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            variants: vec![Variant::FedHome, Variant::FedHomeP],
            schemes: vec![Scheme::Imbalanced],
            k_values: Vec::new(),
            batch_epochs: Vec::new(),
            repetitions: 5,
            thresholds: vec![0.6, 0.8],
        }
    }
}

impl ExperimentPlan {
    /// The six `(B, E)` combinations of the batch/epoch study.
    pub fn batch_epoch_grid() -> Vec<(usize, usize)> {
        vec![(10, 1), (10, 5), (10, 20), (50, 1), (50, 5), (50, 20)]
    }

    pub fn k_sweep() -> Vec<usize> {
        vec![1, 3, 5, 10, 30]
    }
}

/// Sweep coordinates of one cell (before repetition).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub variant: Variant,
    pub scheme: Scheme,
    /// `None` for centralized variants.
    pub k: Option<usize>,
    pub b: Option<usize>,
    pub e: Option<usize>,
}

impl CellKey {
    pub fn dir(&self, root: &Path, repetition: usize) -> PathBuf {
        let sweep = match (self.k, self.b, self.e) {
            (Some(k), Some(b), Some(e)) => format!("k{k}-b{b}-e{e}"),
            _ => "central".to_string(),
        };
        root.join(self.variant.name())
            .join(self.scheme.to_string())
            .join(sweep)
            .join(format!("rep{repetition}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub round: usize,
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
    pub cumulative_bytes: u64,
}

impl From<&RoundLog> for CurvePoint {
    fn from(log: &RoundLog) -> Self {
        CurvePoint {
            round: log.round,
            train_loss: log.train_loss,
            test_accuracy: log.test_accuracy,
            cumulative_bytes: log.cumulative_bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub repetition: usize,
    pub seed: u64,
    /// The variant's headline test accuracy (after personalization for FedHome).
    pub accuracy: f64,
    /// Test accuracy of the global or centralized model.
    pub global_accuracy: f64,
    pub mean_user_accuracy: f64,
    pub param_count: usize,
    pub cumulative_bytes: u64,
    pub local_steps: usize,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub check: String,
    pub detail: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub results: Vec<CellResult>,
    pub failures: Vec<(CellKey, usize, String)>,
    pub trends: Vec<TrendCheck>,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("round,train_loss,test_accuracy,cumulative_bytes\n");
    for p in curve {
        let acc = p.test_accuracy.map_or(String::new(), |a| a.to_string());
        let _ = writeln!(out, "{},{},{},{}", p.round, p.train_loss, acc, p.cumulative_bytes);
    }
    out
}

/// Runs one training job and returns a result for every variant sharing it
/// (FedHome and FedHome-p share the federated GCAE).
fn run_group(
    cfg: &RunConfig,
    partition: &Partition,
    keys: &[CellKey],
    repetition: usize,
    seed: u64,
) -> Result<Vec<CellResult>> {
    let lead = keys[0];
    let arch = lead.variant.arch();
    let model = Model::new(arch);
    if !lead.variant.federated() {
        let mut central = cfg.central;
        central.seed = seed;
        let (_, report) = run_centralized(arch, partition, &central)?;
        let mean_user = report.mean_user_accuracy().unwrap_or(report.accuracy);
        return Ok(vec![CellResult {
            key: lead,
            repetition,
            seed,
            accuracy: report.accuracy,
            global_accuracy: report.accuracy,
            mean_user_accuracy: mean_user,
            param_count: model.param_count(),
            cumulative_bytes: 0,
            local_steps: central.epochs * partition.pooled_train().len().div_ceil(central.batch_size),
            curve: Vec::new(),
        }]);
    }
    let mut fed = cfg.fed;
    fed.arch = arch;
    fed.seed = seed;
    fed.num_clients = partition.clients.len();
    fed.clients_per_round = lead.k.expect("federated cell has K");
    fed.batch_size = lead.b.expect("federated cell has B");
    fed.local_epochs = lead.e.expect("federated cell has E");
    let tests = &partition.tests;
    let eval = |p: &fedhome_nn::ParamVector| evaluate_global(&model, p, tests).map(|m| m.accuracy);
    let outcome = run_federated(
        &model,
        &partition.clients,
        &fed,
        RunOptions {
            evaluate: Some(&eval),
            ..RunOptions::default()
        },
    )?;
    let global = evaluate_global(&model, &outcome.params, tests)?;
    let curve: Vec<CurvePoint> = outcome.logs.iter().map(CurvePoint::from).collect();
    let bytes = outcome.logs.last().map_or(0, |l| l.cumulative_bytes);
    let steps = outcome.logs.iter().map(|l| l.local_steps).sum();
    let mut out = Vec::new();
    for key in keys {
        let (accuracy, mean_user) = if key.variant.personalized() {
            let mut smote = cfg.smote;
            smote.seed = seed;
            let mut pcfg = cfg.personalization;
            pcfg.seed = seed;
            let rep = personalize_partition(&model, &outcome.params, partition, &smote, &pcfg)?;
            (rep.mean_post(), rep.mean_post())
        } else {
            (global.accuracy, global.mean_user_accuracy().unwrap_or(global.accuracy))
        };
        out.push(CellResult {
            key: *key,
            repetition,
            seed,
            accuracy,
            global_accuracy: global.accuracy,
            mean_user_accuracy: mean_user,
            param_count: model.param_count(),
            cumulative_bytes: bytes,
            local_steps: steps,
            curve: curve.clone(),
        });
    }
    Ok(out)
}

fn save_cell(root: &Path, r: &CellResult) -> Result<()> {
    let dir = r.key.dir(root, r.repetition);
    write_file(&dir.join("curve.csv"), &curve_csv(&r.curve))?;
    write_file(&dir.join("result.json"), &serde_json::to_string_pretty(r)?)?;
    write_file(&dir.join("DONE"), "")
}

fn load_cell(root: &Path, key: &CellKey, repetition: usize) -> Option<CellResult> {
    let dir = key.dir(root, repetition);
    if !dir.join("DONE").exists() {
        return None;
    }
    let text = std::fs::read_to_string(dir.join("result.json")).ok()?;
    serde_json::from_str(&text).ok()
}

/// Cell keys of a plan, grouped by the training job they share.
pub fn plan_groups(cfg: &RunConfig, scheme: Scheme) -> Vec<Vec<CellKey>> {
    let plan = &cfg.experiment;
    let ks = if plan.k_values.is_empty() {
        vec![cfg.fed.clients_per_round]
    } else {
        plan.k_values.clone()
    };
    let bes = if plan.batch_epochs.is_empty() {
        vec![(cfg.fed.batch_size, cfg.fed.local_epochs)]
    } else {
        plan.batch_epochs.clone()
    };
    let mut groups: BTreeMap<(Architecture, bool, Option<usize>, Option<(usize, usize)>), Vec<CellKey>> =
        BTreeMap::new();
    for &variant in &plan.variants {
        if variant.federated() {
            for &k in &ks {
                for &(b, e) in &bes {
                    let key = CellKey {
                        variant,
                        scheme,
                        k: Some(k),
                        b: Some(b),
                        e: Some(e),
                    };
                    groups
                        .entry((variant.arch(), true, Some(k), Some((b, e))))
                        .or_default()
                        .push(key);
                }
            }
        } else {
            let key = CellKey {
                variant,
                scheme,
                k: None,
                b: None,
                e: None,
            };
            groups.entry((variant.arch(), false, None, None)).or_default().push(key);
        }
    }
    groups.into_values().collect()
}

/// Runs every cell of `cfg.experiment` under `root`. Data for repetition `r`
/// is generated from seed `cfg.seed + r`. Completed cells are loaded
/// instead of re-run; failed cells are reported and skipped.
pub fn run_experiment(
    cfg: &RunConfig,
    root: &Path,
    workers: usize,
    make_partition: &(dyn Fn(&RunConfig, Scheme, u64) -> Result<Partition> + Sync),
) -> Result<ExperimentReport> {
    let plan = &cfg.experiment;
    if plan.repetitions == 0 || plan.variants.is_empty() || plan.schemes.is_empty() {
        return Err(Error::Config("the plan needs variants, schemes and repetitions".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut report = ExperimentReport::default();
    for rep in 0..plan.repetitions {
        let seed = cfg.seed.wrapping_add(rep as u64);
        for &scheme in &plan.schemes {
            let groups = plan_groups(cfg, scheme);
            let pending: Vec<&Vec<CellKey>> = groups
                .iter()
                .filter(|g| {
                    g.iter().any(|k| load_cell(root, k, rep).is_none())
                })
                .collect();
            for g in &groups {
                if !pending.contains(&g) {
                    report.results.extend(g.iter().filter_map(|k| load_cell(root, k, rep)));
                }
            }
            if pending.is_empty() {
                continue;
            }
            let partition = match make_partition(cfg, scheme, seed) {
                Ok(p) => p,
                Err(e) => {
                    let msg = e.to_string();
                    for g in &pending {
                        for k in g.iter() {
                            report.failures.push((*k, rep, msg.clone()));
                        }
                    }
                    continue;
                }
            };
            let outcomes: Vec<(&Vec<CellKey>, Result<Vec<CellResult>>)> = pool.install(|| {
                pending
                    .par_iter()
                    .map(|g| (*g, run_group(cfg, &partition, g, rep, seed)))
                    .collect()
            });
            for (g, outcome) in outcomes {
                match outcome.and_then(|rs| {
                    for r in &rs {
                        save_cell(root, r)?;
                    }
                    Ok(rs)
                }) {
                    Ok(rs) => report.results.extend(rs),
                    Err(e) => {
                        log::error!("cell group {:?} rep {rep} failed: {e}", g[0]);
                        for k in g {
                            report.failures.push((*k, rep, e.to_string()));
                        }
                    }
                }
            }
        }
    }
    report.results.sort_by_key(|r| (r.key, r.repetition));
    report.trends = trend_checks(cfg, &report.results);
    write_file(&root.join("summary.csv"), &summary_csv(&report.results))?;
    write_file(&root.join("trends.csv"), &trends_csv(&report.trends))?;
    if !report.failures.is_empty() {
        let mut text = String::from("variant,scheme,k,b,e,repetition,error\n");
        for (k, rep, msg) in &report.failures {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{rep},{:?}",
                k.variant,
                k.scheme,
                opt(k.k),
                opt(k.b),
                opt(k.e),
                msg
            );
        }
        write_file(&root.join("failures.csv"), &text)?;
    }
    Ok(report)
}

fn opt(v: Option<usize>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Results grouped by cell, in key order.
pub fn by_cell(results: &[CellResult]) -> BTreeMap<CellKey, Vec<&CellResult>> {
    let mut m: BTreeMap<CellKey, Vec<&CellResult>> = BTreeMap::new();
    for r in results {
        m.entry(r.key).or_default().push(r);
    }
    m
}

/// One row per cell: mean and standard deviation over repetitions.
pub fn summary_csv(results: &[CellResult]) -> String {
    let mut out = String::from(
        "variant,scheme,k,b,e,repetitions,mean_accuracy,std_accuracy,mean_global_accuracy,param_count,cumulative_bytes\n",
    );
    for (key, rs) in by_cell(results) {
        let acc = Summary::of(&rs.iter().map(|r| r.accuracy).collect::<Vec<_>>());
        let global = Summary::of(&rs.iter().map(|r| r.global_accuracy).collect::<Vec<_>>());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{},{}",
            key.variant,
            key.scheme,
            opt(key.k),
            opt(key.b),
            opt(key.e),
            acc.n,
            acc.mean,
            acc.std,
            global.mean,
            rs[0].param_count,
            rs[0].cumulative_bytes
        );
    }
    out
}

fn trends_csv(trends: &[TrendCheck]) -> String {
    let mut out = String::from("check,detail,passed\n");
    for t in trends {
        let _ = writeln!(out, "{},{:?},{}", t.check, t.detail, t.passed);
    }
    out
}

/// Mean global accuracy per evaluated round over repetitions.
fn mean_curve(rs: &[&CellResult]) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in rs {
        for p in &r.curve {
            if let Some(a) = p.test_accuracy {
                let e = acc.entry(p.round).or_default();
                e.0 += a;
                e.1 += 1;
            }
        }
    }
    acc.into_iter().map(|(round, (s, n))| (round, s / n as f64)).collect()
}

fn rounds_to(curve: &[(usize, f64)], threshold: f64) -> Option<usize> {
    curve.iter().find(|(_, a)| *a >= threshold).map(|(r, _)| *r)
}

/// Soft trend checks: more local computation per round reaches accuracy
/// thresholds no later than `(B, E) = (50, 1)` (one evaluation step of
/// slack), and `K = 1` ends below `K = 5`.
pub fn trend_checks(cfg: &RunConfig, results: &[CellResult]) -> Vec<TrendCheck> {
    let cells = by_cell(results);
    let mut out = Vec::new();
    let slack = cfg.fed.eval_interval.max(1);
    for (key, rs) in &cells {
        if key.b == Some(50) && key.e == Some(1) {
            continue;
        }
        let base_key = CellKey {
            b: Some(50),
            e: Some(1),
            ..*key
        };
        let (Some(base), true) = (cells.get(&base_key), key.k.is_some()) else {
            continue;
        };
        let curve = mean_curve(rs);
        let base_curve = mean_curve(base);
        for &t in &cfg.experiment.thresholds {
            let (mine, theirs) = (rounds_to(&curve, t), rounds_to(&base_curve, t));
            let passed = match (mine, theirs) {
                (_, None) => true,
                (None, Some(_)) => false,
                (Some(m), Some(b)) => m <= b + slack,
            };
            out.push(TrendCheck {
                check: "batch-epoch-convergence".into(),
                detail: format!(
                    "{} {} K={} B={} E={} reaches {t} at round {} vs {} for B=50 E=1",
                    key.variant,
                    key.scheme,
                    opt(key.k),
                    opt(key.b),
                    opt(key.e),
                    mine.map_or("never".into(), |r| r.to_string()),
                    theirs.map_or("never".into(), |r| r.to_string())
                ),
                passed,
            });
        }
    }
    for (key, rs) in &cells {
        if key.k != Some(1) {
            continue;
        }
        let k5 = CellKey { k: Some(5), ..*key };
        if let Some(other) = cells.get(&k5) {
            let mean = |v: &[&CellResult]| v.iter().map(|r| r.accuracy).sum::<f64>() / v.len() as f64;
            let (a1, a5) = (mean(rs), mean(other));
            out.push(TrendCheck {
                check: "participation".into(),
                detail: format!(
                    "{} {} B={} E={}: K=1 accuracy {a1:.4} vs K=5 {a5:.4}",
                    key.variant,
                    key.scheme,
                    opt(key.b),
                    opt(key.e)
                ),
                passed: a1 < a5,
            });
        }
    }
    out
}
