//! Run configuration, run-directory layout and the drivers behind the
//! command line.
//!
//! A training run directory holds:
//!
//! ```text
//! manifest.toml              resolved configuration and dataset hash
//! partition.json             client and test histograms
//! rounds.jsonl               one RoundLog per line
//! curve.csv                  round, train loss, test accuracy, bytes
//! metrics.json               final global-model metrics
//! checkpoints/global.bin     final global model (+ .json metadata)
//! checkpoints/round_NNNN.bin periodic checkpoints
//! personalized/client_NN.bin personalized models
//! personalization.csv        per-user accuracy before and after
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fedhome_nn::ParamVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    build_partition, load_csv, synthesize_streams, write_csv, Partition, PartitionSpec, Scheme,
    SensorStream, SynthSpec,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    curve_csv, run_centralized, run_experiment, CentralConfig, CurvePoint, ExperimentPlan,
    ExperimentReport, MetricsReport, Variant,
};
use crate::federation::{evaluate_global, run_federated, FedConfig, RoundLog, RunOptions};
use crate::model::checkpoint::{file_hash, read_checkpoint, write_checkpoint};
use crate::model::Model;
use crate::personalization::{
    personalize_partition, Level, PersonalizationConfig, PersonalizationReport, SmoteConfig,
};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "FEDHOME_OUT";
pub const MANIFEST: &str = "manifest.toml";
pub const PARTITION: &str = "partition.json";
pub const ROUNDS: &str = "rounds.jsonl";
pub const CURVE: &str = "curve.csv";
pub const METRICS: &str = "metrics.json";
pub const CHECKPOINTS: &str = "checkpoints";
pub const GLOBAL_CHECKPOINT: &str = "global.bin";
pub const PERSONALIZED: &str = "personalized";
pub const PERSONALIZATION_REPORT: &str = "personalization.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; resolving copies it into every section.
    pub seed: u64,
    pub variant: Variant,
    /// Directory of sensor CSV files.
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Save the global model every this many rounds; 0 keeps only the final one.
    pub checkpoint_interval: usize,
    pub synth: SynthSpec,
    pub partition: PartitionSpec,
    pub fed: FedConfig,
    pub smote: SmoteConfig,
    pub personalization: PersonalizationConfig,
    pub central: CentralConfig,
    pub experiment: ExperimentPlan,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            variant: Variant::FedHome,
            data: None,
            output: None,
            checkpoint_interval: 0,
            synth: SynthSpec::default(),
            partition: PartitionSpec::default(),
            fed: FedConfig::default(),
            smote: SmoteConfig::default(),
            personalization: PersonalizationConfig::default(),
            central: CentralConfig::default(),
            experiment: ExperimentPlan::default(),
        }
    }
}

/// What a run directory records about how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: String,
    /// Hash of the dataset the run was trained on.
    pub data_sha256: Option<String>,
    pub config: RunConfig,
}

fn toml_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Toml {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

impl RunConfig {
    /// Propagates the global seed and the variant, and checks the result.
    pub fn resolve(mut self) -> Result<Self> {
        let seed = self.seed;
        self.partition.seed = seed;
        self.fed.seed = seed;
        self.smote.seed = seed;
        self.personalization.seed = seed;
        self.central.seed = seed;
        self.fed.arch = self.variant.arch();
        self.fed.num_clients = match self.partition.scheme {
            Scheme::Home => self.partition.homes,
            _ => self.partition.num_users,
        };
        self.partition.validate()?;
        self.fed.validate()?;
        if self.central.batch_size == 0 {
            return Err(Error::Config("centralized batch size must be positive".into()));
        }
        if self.personalization.batch_size == 0 || self.smote.k_neighbors == 0 {
            return Err(Error::Config(
                "personalization batch size and SMOTE k must be positive".into(),
            ));
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run configuration serializes")
    }

    /// Parses a configuration file, or the configuration inside a run manifest.
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let value: toml::Table = toml::from_str(text).map_err(|e| toml_error(path, e))?;
        if value.contains_key("config") && value.contains_key("version") {
            let m: RunManifest = toml::from_str(text).map_err(|e| toml_error(path, e))?;
            return Ok(m.config);
        }
        toml::from_str(text).map_err(|e| toml_error(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn data_dir(&self) -> Result<&Path> {
        self.data.as_deref().ok_or_else(|| {
            Error::Missing(
                "no dataset given; create one with `fedhome gen-data --out <dir>` and pass it with --data"
                    .into(),
            )
        })
    }
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST);
        if !path.exists() {
            return Err(Error::Missing(format!(
                "{} has no {MANIFEST}; is it a run directory written by `fedhome train`?",
                run_dir.display()
            )));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| toml_error(&path, e))
    }

    pub fn write(&self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join(MANIFEST);
        let text = toml::to_string_pretty(self).map_err(|e| toml_error(&path, e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn user_file_name(user_id: usize) -> String {
    format!("user_{user_id:02}.csv")
}

/// Sensor CSV files of a dataset directory, sorted by name.
pub fn dataset_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|_| Error::MissingData(dir.to_path_buf()))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "csv") {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(Error::MissingData(dir.to_path_buf()));
    }
    files.sort();
    Ok(files)
}

pub fn load_streams(dir: &Path) -> Result<Vec<SensorStream>> {
    let mut streams = dataset_files(dir)?
        .iter()
        .map(|p| load_csv(p))
        .collect::<Result<Vec<_>>>()?;
    streams.sort_by_key(|s| s.user_id);
    Ok(streams)
}

/// SHA-256 over the names and contents of a dataset's CSV files.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for path in dataset_files(dir)? {
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        h.update(path.file_name().unwrap_or_default().as_encoded_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes one CSV file per synthetic user and the partition manifest.
pub fn generate_data(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let streams = synthesize_streams(&cfg.synth, cfg.seed);
    let mut files = Vec::with_capacity(streams.len());
    for s in &streams {
        let path = out.join(user_file_name(s.user_id));
        write_csv(s, &path)?;
        files.push(path);
    }
    let partition = build_partition(&streams, &cfg.partition)?;
    partition.write_manifest(&out.join(PARTITION))?;
    Ok(files)
}

/// Partition of the configured dataset, with the dataset's hash.
pub fn prepare_partition(cfg: &RunConfig) -> Result<(Partition, String)> {
    let dir = cfg.data_dir()?;
    let hash = dataset_hash(dir)?;
    let streams = load_streams(dir)?;
    Ok((build_partition(&streams, &cfg.partition)?, hash))
}

fn jsonl_line(log: &RoundLog) -> Result<String> {
    Ok(serde_json::to_string(log)? + "\n")
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub checkpoint_sha256: String,
    pub metrics: MetricsReport,
    pub rounds: usize,
}

/// Trains the configured variant into `run_dir`.
pub fn train(cfg: &RunConfig, run_dir: &Path, workers: usize) -> Result<TrainOutcome> {
    let cfg = cfg.clone().resolve()?;
    let (partition, data_hash) = prepare_partition(&cfg)?;
    create_dir(run_dir)?;
    let ckpt_dir = run_dir.join(CHECKPOINTS);
    create_dir(&ckpt_dir)?;
    RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        data_sha256: Some(data_hash),
        config: cfg.clone(),
    }
    .write(run_dir)?;
    partition.write_manifest(&run_dir.join(PARTITION))?;

    let model = Model::new(cfg.variant.arch());
    let (params, curve) = if cfg.variant.federated() {
        train_federated(&cfg, &model, &partition, run_dir, workers)?
    } else {
        let (params, _) = run_centralized(model.arch(), &partition, &cfg.central)?;
        (params, Vec::new())
    };
    let path = ckpt_dir.join(GLOBAL_CHECKPOINT);
    let meta = write_checkpoint(&path, &model, &params, "global", Some(curve.len()))?;
    let metrics = evaluate_global(&model, &params, &partition.tests)?;
    let mpath = run_dir.join(METRICS);
    std::fs::write(&mpath, serde_json::to_string_pretty(&metrics)?).map_err(|e| Error::io(&mpath, e))?;
    let cpath = run_dir.join(CURVE);
    std::fs::write(&cpath, curve_csv(&curve)).map_err(|e| Error::io(&cpath, e))?;
    Ok(TrainOutcome {
        run_dir: run_dir.to_path_buf(),
        checkpoint_sha256: meta.sha256,
        metrics,
        rounds: curve.len(),
    })
}

fn train_federated(
    cfg: &RunConfig,
    model: &Model,
    partition: &Partition,
    run_dir: &Path,
    workers: usize,
) -> Result<(ParamVector, Vec<CurvePoint>)> {
    let rounds_path = run_dir.join(ROUNDS);
    let file = File::create(&rounds_path).map_err(|e| Error::io(&rounds_path, e))?;
    let mut out = BufWriter::new(file);
    let ckpt_dir = run_dir.join(CHECKPOINTS);
    let mut curve = Vec::with_capacity(cfg.fed.rounds);
    let tests = &partition.tests;
    let eval = |p: &ParamVector| evaluate_global(model, p, tests).map(|m| m.accuracy);
    let interval = cfg.checkpoint_interval;
    let mut observe = |log: &RoundLog, params: &ParamVector| -> Result<()> {
        out.write_all(jsonl_line(log)?.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(&rounds_path, e))?;
        curve.push(CurvePoint::from(log));
        if interval > 0 && log.round.is_multiple_of(interval) {
            let path = ckpt_dir.join(format!("round_{:04}.bin", log.round));
            write_checkpoint(&path, model, params, "global", Some(log.round))?;
        }
        log::info!(
            "round {} loss {:.4}{}",
            log.round,
            log.train_loss,
            log.test_accuracy.map_or(String::new(), |a| format!(" accuracy {a:.4}"))
        );
        Ok(())
    };
    let outcome = run_federated(
        model,
        &partition.clients,
        &cfg.fed,
        RunOptions {
            workers,
            evaluate: Some(&eval),
            on_round: Some(&mut observe),
            ..RunOptions::default()
        },
    )?;
    Ok((outcome.params, curve))
}

/// Loads a run's manifest and rebuilds its partition, refusing a dataset
/// that changed since training.
pub fn reopen_run(run_dir: &Path) -> Result<(RunManifest, Partition)> {
    let manifest = RunManifest::load(run_dir)?;
    let (partition, hash) = prepare_partition(&manifest.config)?;
    if let Some(expected) = &manifest.data_sha256 {
        if *expected != hash {
            return Err(Error::Config(format!(
                "dataset {} changed since the run was trained (hash {hash}, manifest {expected})",
                manifest.config.data_dir()?.display()
            )));
        }
    }
    Ok((manifest, partition))
}

fn global_checkpoint(run_dir: &Path) -> Result<PathBuf> {
    let path = run_dir.join(CHECKPOINTS).join(GLOBAL_CHECKPOINT);
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Missing(format!(
            "no global checkpoint at {}; run `fedhome train` first",
            path.display()
        )))
    }
}

pub fn personalization_csv(report: &PersonalizationReport) -> String {
    let mut out = String::from("user,client,pre_accuracy,post_accuracy\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.user, r.client, r.pre_accuracy, r.post_accuracy
        ));
    }
    out
}

/// Personalizes every client of a trained run and writes the models and
/// the per-user report.
pub fn personalize(
    run_dir: &Path,
    level: Option<Level>,
    workers: usize,
) -> Result<PersonalizationReport> {
    let ckpt = global_checkpoint(run_dir)?;
    let (manifest, partition) = reopen_run(run_dir)?;
    let (model, global) = read_checkpoint(&ckpt)?;
    let cfg = &manifest.config;
    let mut pcfg = cfg.personalization;
    if let Some(level) = level {
        pcfg.level = level;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let report =
        pool.install(|| personalize_partition(&model, &global, &partition, &cfg.smote, &pcfg))?;
    let dir = run_dir.join(PERSONALIZED);
    create_dir(&dir)?;
    for m in &report.models {
        let path = dir.join(format!("client_{:02}.bin", m.client_id));
        write_checkpoint(&path, &model, &m.params, "personalized", None)?;
    }
    let path = run_dir.join(PERSONALIZATION_REPORT);
    std::fs::write(&path, personalization_csv(&report)).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

/// Scores a checkpoint (the run's global model by default) on the run's
/// test sets and writes `eval.json` beside the checkpoint.
pub fn evaluate(run_dir: &Path, checkpoint: Option<&Path>) -> Result<(MetricsReport, PathBuf)> {
    let ckpt = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => global_checkpoint(run_dir)?,
    };
    let (_, partition) = reopen_run(run_dir)?;
    let (model, params) = read_checkpoint(&ckpt)?;
    let report = evaluate_global(&model, &params, &partition.tests)?;
    let out = ckpt.with_extension("eval.json");
    std::fs::write(&out, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&out, e))?;
    Ok((report, out))
}

/// Runs the configured experiment plan under `out`. Without a dataset
/// directory every repetition synthesizes its own users from its seed.
pub fn sweep(cfg: &RunConfig, out: &Path, workers: usize) -> Result<ExperimentReport> {
    let cfg = cfg.clone().resolve()?;
    create_dir(out)?;
    let plan_path = out.join("plan.toml");
    std::fs::write(&plan_path, cfg.to_toml()).map_err(|e| Error::io(&plan_path, e))?;
    let loaded = match &cfg.data {
        Some(dir) => Some(load_streams(dir)?),
        None => None,
    };
    let make = |cfg: &RunConfig, scheme: Scheme, seed: u64| -> Result<Partition> {
        let spec = PartitionSpec {
            scheme,
            seed,
            ..cfg.partition
        };
        match &loaded {
            Some(streams) => build_partition(streams, &spec),
            None => build_partition(&synthesize_streams(&cfg.synth, seed), &spec),
        }
    };
    run_experiment(&cfg, out, workers, &make)
}

/// Hash of a run's final checkpoint.
pub fn checkpoint_hash(run_dir: &Path) -> Result<String> {
    file_hash(&global_checkpoint(run_dir)?)
}
