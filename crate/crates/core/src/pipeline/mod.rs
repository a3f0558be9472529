//! Stage orchestration. Each stage reads artifacts from the output
//! directory, writes its own atomically and records a manifest under
//! `manifests/<stage>.json`.

mod config;
mod stages;

pub use config::{
    load_config, range_issues, validate_config_str, AdapterConfig, CompareSection, ConfigIssue, DetectorSection,
    EnrichSection, EvaluateSection, GeneratorSection, PathsConfig, PipelineConfig, StageToggles, ENV_PREFIX,
};
pub use stages::{compare_prompts, Query};

use crate::io::{sha256_hex, write_atomic};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

pub const CORPUS: &str = "corpus.jsonl";
pub const ENHANCED: &str = "enhanced.jsonl";
pub const ENHANCEMENT_REPORT: &str = "enhancement_report.json";
pub const DETECTOR_TRAIN: &str = "detector_train.json";
pub const GENERATOR_TRAIN: &str = "generator_train.json";
pub const KNOWLEDGE: &str = "knowledge.jsonl";
pub const QUALITY_REPORT: &str = "quality_report.json";
pub const OVERLAP_REPORT: &str = "overlap_report.json";
pub const ENRICHMENT: &str = "enrichment.jsonl";
pub const MANIFEST_DIR: &str = "manifests";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageName {
    Ingest,
    Enhance,
    TrainDetector,
    TrainGenerator,
    Extract,
    Evaluate,
    CompareKg,
    Enrich,
}

impl StageName {
    pub const ALL: [StageName; 8] = [
        StageName::Ingest,
        StageName::Enhance,
        StageName::TrainDetector,
        StageName::TrainGenerator,
        StageName::Extract,
        StageName::Evaluate,
        StageName::CompareKg,
        StageName::Enrich,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Ingest => "ingest",
            StageName::Enhance => "enhance",
            StageName::TrainDetector => "train-detector",
            StageName::TrainGenerator => "train-generator",
            StageName::Extract => "extract",
            StageName::Evaluate => "evaluate",
            StageName::CompareKg => "compare-kg",
            StageName::Enrich => "enrich",
        }
    }

    pub fn enabled(self, toggles: &StageToggles) -> bool {
        match self {
            StageName::Ingest => toggles.ingest,
            StageName::Enhance => toggles.enhance,
            StageName::TrainDetector => toggles.train_detector,
            StageName::TrainGenerator => toggles.train_generator,
            StageName::Extract => toggles.extract,
            StageName::Evaluate => toggles.evaluate,
            StageName::CompareKg => toggles.compare_kg,
            StageName::Enrich => toggles.enrich,
        }
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StageName::ALL.into_iter().find(|n| n.as_str() == s).ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// The stage that writes a given artifact.
pub fn producer_of(artifact: &str) -> Option<StageName> {
    Some(match artifact {
        CORPUS => StageName::Ingest,
        ENHANCED | ENHANCEMENT_REPORT => StageName::Enhance,
        DETECTOR_TRAIN => StageName::TrainDetector,
        GENERATOR_TRAIN => StageName::TrainGenerator,
        KNOWLEDGE => StageName::Extract,
        QUALITY_REPORT => StageName::Evaluate,
        OVERLAP_REPORT => StageName::CompareKg,
        ENRICHMENT => StageName::Enrich,
        _ => return None,
    })
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("invalid configuration:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigIssue>),
    #[error("missing {artifact} in {}; run `openvik {producer}` first", .out.display())]
    MissingPrerequisite { artifact: String, producer: StageName, out: PathBuf },
    #[error("input file {} does not exist", .0.display())]
    MissingInput(PathBuf),
    #[error("adapter failure: {0}")]
    Adapter(String),
    #[error("{0}")]
    Data(String),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl StageError {
    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            StageError::Config(_) => 2,
            StageError::MissingPrerequisite { .. } | StageError::MissingInput(_) => 3,
            StageError::Adapter(_) => 4,
            StageError::Data(_) | StageError::Io { .. } => 1,
        }
    }
}

impl From<crate::AdapterError> for StageError {
    fn from(e: crate::AdapterError) -> Self {
        StageError::Adapter(e.to_string())
    }
}

/// Provenance of one stage run. Contains no timestamps so reruns compare
/// byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: StageName,
    pub version: String,
    pub seed: u64,
    pub stage_seed: u64,
    pub config_hash: String,
    /// Input role or artifact name to content hash.
    pub inputs: BTreeMap<String, String>,
    /// Artifact name (relative to the output directory) to content hash.
    pub outputs: BTreeMap<String, String>,
    pub stats: serde_json::Value,
}

/// Independent seed for a named stage, derived from the global seed.
pub fn substream(seed: u64, name: &str) -> u64 {
    let digest = sha256_hex(&[seed.to_le_bytes().as_slice(), name.as_bytes()].concat());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

/// Hash of every setting that affects results; file locations are
/// excluded because input contents are hashed separately.
pub fn config_hash(config: &PipelineConfig) -> String {
    let mut value = serde_json::to_value(config).expect("config serializes");
    if let Some(obj) = value.as_object_mut() {
        obj.remove("paths");
        obj.remove("stages");
    }
    sha256_hex(value.to_string().as_bytes())
}

pub(crate) struct StageContext<'a> {
    pub config: &'a PipelineConfig,
    pub stage_seed: u64,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl<'a> StageContext<'a> {
    fn out(&self) -> &Path {
        &self.config.paths.out
    }

    /// Read an artifact produced by an earlier stage.
    pub fn read_artifact(&mut self, name: &str) -> Result<String, StageError> {
        let path = self.out().join(name);
        if !path.exists() {
            return Err(StageError::MissingPrerequisite {
                artifact: name.to_string(),
                producer: producer_of(name).expect("known artifact"),
                out: self.out().to_path_buf(),
            });
        }
        let text = std::fs::read_to_string(&path).map_err(|source| StageError::Io { path, source })?;
        self.inputs.insert(name.to_string(), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    /// Read an external input file under a role name.
    pub fn read_input(&mut self, role: &str, path: &Path) -> Result<String, StageError> {
        if !path.exists() {
            return Err(StageError::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|source| StageError::Io { path: path.to_path_buf(), source })?;
        self.inputs.insert(role.to_string(), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), StageError> {
        let path = self.out().join(name);
        write_atomic(&path, bytes).map_err(|source| StageError::Io { path, source })?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), StageError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
        bytes.push(b'\n');
        self.write(name, &bytes)
    }
}

/// Run one stage; returns its manifest, which is also written to disk.
pub fn run_stage(stage: StageName, config: &PipelineConfig) -> Result<Manifest, StageError> {
    let issues = range_issues(config);
    if !issues.is_empty() {
        return Err(StageError::Config(issues));
    }
    let mut ctx = StageContext {
        config,
        stage_seed: substream(config.seed, stage.as_str()),
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
    };
    let stats = match stage {
        StageName::Ingest => stages::ingest(&mut ctx)?,
        StageName::Enhance => stages::enhance(&mut ctx)?,
        StageName::TrainDetector => stages::train_detector(&mut ctx)?,
        StageName::TrainGenerator => stages::train_generator(&mut ctx)?,
        StageName::Extract => stages::extract(&mut ctx)?,
        StageName::Evaluate => stages::evaluate(&mut ctx)?,
        StageName::CompareKg => stages::compare_kg(&mut ctx)?,
        StageName::Enrich => stages::enrich(&mut ctx)?,
    };
    let manifest = Manifest {
        stage,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        stage_seed: ctx.stage_seed,
        config_hash: config_hash(config),
        inputs: std::mem::take(&mut ctx.inputs),
        outputs: std::mem::take(&mut ctx.outputs),
        stats,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    let path = config.paths.out.join(MANIFEST_DIR).join(format!("{stage}.json"));
    write_atomic(&path, &bytes).map_err(|source| StageError::Io { path, source })?;
    Ok(manifest)
}

/// Run every enabled stage in order, stopping at the first failure.
pub fn run_all(config: &PipelineConfig) -> Result<Vec<Manifest>, StageError> {
    StageName::ALL.into_iter().filter(|s| s.enabled(&config.stages)).map(|s| run_stage(s, config)).collect()
}
