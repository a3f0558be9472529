//! Pipeline configuration: a TOML document plus `OPENVIK_` environment
//! overrides, validated in full before any stage runs.
//!
//! Environment variables name a key path with `__` between segments, e.g.
//! `OPENVIK_GENERATOR__ALPHA=0.5` or `OPENVIK_ENHANCE__DROP__DROP_RATE=0.3`.
//! Values are read as TOML literals, falling back to plain strings.

use crate::diversify::EnhanceConfig;
use crate::generator::{DecodingConfig, PairMode, VarietyConfig};
use crate::region::MAX_REGIONS;
use crate::training::TrainingConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use toml::{Table, Value};

pub const ENV_PREFIX: &str = "OPENVIK_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub corpus: PathBuf,
    pub out: PathBuf,
    /// Knowledge graph fixture (JSON); empty graph when absent.
    pub kg: Option<PathBuf>,
    /// Commonsense completion fixture (JSON); no completions when absent.
    pub commonsense: Option<PathBuf>,
    pub llm_cassette: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    /// Enrichment queries, JSONL of `{query_id, text}`.
    pub queries: Option<PathBuf>,
    pub verbs_exact: Option<PathBuf>,
    pub verbs_fuzzy: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            corpus: "corpus.jsonl".into(),
            out: "out".into(),
            kg: None,
            commonsense: None,
            llm_cassette: None,
            ratings: None,
            queries: None,
            verbs_exact: None,
            verbs_fuzzy: None,
        }
    }
}

const OPTIONAL_PATHS: &[&str] =
    &["kg", "commonsense", "llm_cassette", "ratings", "queries", "verbs_exact", "verbs_fuzzy"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageToggles {
    pub ingest: bool,
    pub enhance: bool,
    pub train_detector: bool,
    pub train_generator: bool,
    pub extract: bool,
    pub evaluate: bool,
    pub compare_kg: bool,
    pub enrich: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            ingest: true,
            enhance: true,
            train_detector: true,
            train_generator: true,
            extract: true,
            evaluate: true,
            compare_kg: true,
            enrich: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdapterConfig {
    pub similarity: String,
    pub embedding_dim: usize,
    pub detector: String,
    pub generator: String,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig { similarity: "hash".into(), embedding_dim: 256, detector: "mock".into(), generator: "mock".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub max_regions: usize,
    pub training: TrainingConfig,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection { max_regions: MAX_REGIONS, training: TrainingConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSection {
    pub alpha: f64,
    pub phi: f64,
    pub pair_mode: PairMode,
    pub patch_size: u32,
    pub training: TrainingConfig,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let v = VarietyConfig::default();
        GeneratorSection { alpha: v.alpha, phi: v.phi, pair_mode: v.pair_mode, patch_size: 16, training: TrainingConfig::default() }
    }
}

impl GeneratorSection {
    pub fn variety(&self) -> VarietyConfig {
        VarietyConfig { phi: self.phi, alpha: self.alpha, pair_mode: self.pair_mode }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// `exhaustive` or `sampled`.
    pub diversity: String,
    pub n_pairs: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection { diversity: "exhaustive".into(), n_pairs: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub threshold: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection { threshold: crate::kg::KG_MATCH_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnrichSection {
    pub min_share: f64,
    pub min_nouns: usize,
    pub min_relations: usize,
}

impl Default for EnrichSection {
    fn default() -> Self {
        EnrichSection { min_share: crate::apps::MIN_SHARE, min_nouns: 0, min_relations: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub stages: StageToggles,
    pub adapters: AdapterConfig,
    pub detector: DetectorSection,
    pub generator: GeneratorSection,
    pub decoding: DecodingConfig,
    pub enhance: EnhanceConfig,
    pub evaluate: EvaluateSection,
    pub compare: CompareSection,
    pub enrich: EnrichSection,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

fn issue(key: impl Into<String>, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue { key: key.into(), message: message.into() }
}

fn parse_env_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

fn set_path(table: &mut Table, path: &[String], value: Value) -> Result<(), String> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for seg in parents {
        match node.entry(seg.clone()).or_insert_with(|| Value::Table(Table::new())) {
            Value::Table(t) => node = t,
            _ => return Err(seg.clone()),
        }
    }
    node.insert(last.clone(), value);
    Ok(())
}

fn apply_env(table: &mut Table, env: &BTreeMap<String, String>, issues: &mut Vec<ConfigIssue>) {
    for (name, raw) in env {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
        let path: Vec<String> = rest.split("__").map(str::to_lowercase).collect();
        if path.iter().any(String::is_empty) {
            issues.push(issue(name.clone(), "malformed override name"));
            continue;
        }
        if let Err(seg) = set_path(table, &path, parse_env_value(raw)) {
            issues.push(issue(name.clone(), format!("{seg} is not a section")));
        }
    }
}

/// Drop keys absent from `schema`, reporting each one.
fn prune_unknown(table: &mut Table, schema: &Table, prefix: &str, issues: &mut Vec<ConfigIssue>) {
    let keys: Vec<String> = table.keys().cloned().collect();
    for key in keys {
        let full = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        let known = schema.get(&key).or_else(|| (prefix == "paths" && OPTIONAL_PATHS.contains(&key.as_str())).then_some(&Value::Boolean(true)));
        match known {
            None => {
                table.remove(&key);
                issues.push(issue(full, "unknown key"));
            }
            Some(Value::Table(sub_schema)) => {
                if let Some(Value::Table(sub)) = table.get_mut(&key) {
                    prune_unknown(sub, sub_schema, &full, issues);
                }
            }
            Some(_) => {}
        }
    }
}

fn typed<T: DeserializeOwned>(table: &Table, key: &str, issues: &mut Vec<ConfigIssue>) -> Option<T> {
    let value = table.get(key).cloned().unwrap_or_else(|| Value::Table(Table::new()));
    match T::deserialize(value) {
        Ok(v) => Some(v),
        Err(e) => {
            issues.push(issue(key, e.message().trim().to_string()));
            None
        }
    }
}

fn check(issues: &mut Vec<ConfigIssue>, ok: bool, key: &str, message: &str) {
    if !ok {
        issues.push(issue(key, message));
    }
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn check_training(issues: &mut Vec<ConfigIssue>, prefix: &str, t: &TrainingConfig) {
    check(issues, t.batch_size >= 1, &format!("{prefix}.batch_size"), "must be at least 1");
    check(issues, t.epsilon > 0.0, &format!("{prefix}.epsilon"), "must be positive");
    check(issues, t.initial_lr > 0.0, &format!("{prefix}.initial_lr"), "must be positive");
    check(issues, t.weight_decay >= 0.0, &format!("{prefix}.weight_decay"), "must be non-negative");
    check(issues, t.epochs >= 1, &format!("{prefix}.epochs"), "must be at least 1");
}

/// Range checks on an assembled config; every violation is reported.
pub fn range_issues(c: &PipelineConfig) -> Vec<ConfigIssue> {
    let mut v = Vec::new();
    let i = &mut v;
    check(i, c.adapters.similarity == "hash", "adapters.similarity", "only \"hash\" is available");
    check(i, c.adapters.detector == "mock", "adapters.detector", "only \"mock\" is available");
    check(i, c.adapters.generator == "mock", "adapters.generator", "only \"mock\" is available");
    check(i, c.adapters.embedding_dim >= 1, "adapters.embedding_dim", "must be at least 1");
    check(i, (1..=MAX_REGIONS).contains(&c.detector.max_regions), "detector.max_regions", "must lie in [1, 30]");
    check_training(i, "detector.training", &c.detector.training);
    check(i, unit(c.generator.alpha), "generator.alpha", "must lie in [0, 1]");
    check(i, (0.0..1.0).contains(&c.generator.phi), "generator.phi", "must lie in [0, 1)");
    check(i, c.generator.patch_size >= 1, "generator.patch_size", "must be at least 1");
    check_training(i, "generator.training", &c.generator.training);
    check(i, c.decoding.width >= 1, "decoding.width", "must be at least 1");
    check(i, unit(c.decoding.penalty), "decoding.penalty", "must lie in [0, 1]");
    check(i, c.decoding.max_tokens >= 1, "decoding.max_tokens", "must be at least 1");
    let e = &c.enhance;
    check(i, unit(e.high_threshold), "enhance.high_threshold", "must lie in [0, 1]");
    check(i, unit(e.relatedness_threshold), "enhance.relatedness_threshold", "must lie in [0, 1]");
    check(i, unit(e.drop.low_threshold), "enhance.drop.low_threshold", "must lie in [0, 1]");
    check(i, unit(e.drop.drop_rate), "enhance.drop.drop_rate", "must lie in [0, 1]");
    check(i, unit(e.drop.target_fraction), "enhance.drop.target_fraction", "must lie in [0, 1]");
    check(i, e.drop.max_passes >= 1, "enhance.drop.max_passes", "must be at least 1");
    for (name, [a1, a2]) in [("low", e.grid.low), ("middle", e.grid.middle), ("high", e.grid.high)] {
        check(i, a1 > 0.0 && a2 > 0.0, &format!("enhance.grid.{name}"), "scales must be positive");
    }
    check(
        i,
        matches!(c.evaluate.diversity.as_str(), "exhaustive" | "sampled"),
        "evaluate.diversity",
        "must be \"exhaustive\" or \"sampled\"",
    );
    check(i, c.evaluate.n_pairs >= 1, "evaluate.n_pairs", "must be at least 1");
    check(i, c.compare.threshold > 0.0 && c.compare.threshold <= 1.0, "compare.threshold", "must lie in (0, 1]");
    check(i, c.enrich.min_share > 0.0 && c.enrich.min_share < 1.0, "enrich.min_share", "must lie in (0, 1)");
    v
}

/// Parse, override, prune, type-check and range-check. All problems found
/// are returned together.
pub fn validate_config_str(text: &str, env: &BTreeMap<String, String>) -> Result<PipelineConfig, Vec<ConfigIssue>> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| vec![issue("", e.message().trim().to_string())])?;
    let mut issues = Vec::new();
    apply_env(&mut table, env, &mut issues);

    let schema = match Value::try_from(PipelineConfig::default()).expect("defaults serialize") {
        Value::Table(t) => t,
        _ => unreachable!("config serializes to a table"),
    };
    prune_unknown(&mut table, &schema, "", &mut issues);

    let seed = match table.get("seed") {
        None => Some(0),
        Some(Value::Integer(n)) if *n >= 0 => Some(*n as u64),
        Some(other) => {
            issues.push(issue("seed", format!("expected a non-negative integer, found {other}")));
            None
        }
    };
    let paths = typed(&table, "paths", &mut issues);
    let stages = typed(&table, "stages", &mut issues);
    let adapters = typed(&table, "adapters", &mut issues);
    let detector = typed(&table, "detector", &mut issues);
    let generator = typed(&table, "generator", &mut issues);
    let decoding = typed(&table, "decoding", &mut issues);
    let enhance = typed(&table, "enhance", &mut issues);
    let evaluate = typed(&table, "evaluate", &mut issues);
    let compare = typed(&table, "compare", &mut issues);
    let enrich = typed(&table, "enrich", &mut issues);
    let config = (|| {
        Some(PipelineConfig {
            seed: seed?,
            paths: paths?,
            stages: stages?,
            adapters: adapters?,
            detector: detector?,
            generator: generator?,
            decoding: decoding?,
            enhance: enhance?,
            evaluate: evaluate?,
            compare: compare?,
            enrich: enrich?,
        })
    })();
    if let Some(c) = &config {
        issues.extend(range_issues(c));
    }
    match config {
        Some(c) if issues.is_empty() => Ok(c),
        _ => Err(issues),
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Make every relative path relative to `base` (the config file's
    /// directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        resolve(base, &mut p.corpus);
        resolve(base, &mut p.out);
        for opt in [
            &mut p.kg,
            &mut p.commonsense,
            &mut p.llm_cassette,
            &mut p.ratings,
            &mut p.queries,
            &mut p.verbs_exact,
            &mut p.verbs_fuzzy,
        ] {
            if let Some(path) = opt.as_mut() {
                resolve(base, path);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Read, validate and resolve a config file using the process environment.
pub fn load_config(path: &Path) -> Result<PipelineConfig, Vec<ConfigIssue>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![issue("", format!("cannot read {}: {e}", path.display()))])?;
    let env: BTreeMap<String, String> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    let mut c = validate_config_str(&text, &env)?;
    c.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(c)
}
