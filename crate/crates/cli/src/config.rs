//! Run configuration: preset defaults, then a JSON config file, then
//! `--set key=value` overrides, then the dedicated flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kshape::geomlayers::{DmlVariant, GtlVariant};
use kshape::model::{ModelConfig, Preset};
use serde_json::{Map, Value};

/// Keys a config file may hold besides the model fields, with defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Dataset manifest (or a directory containing `manifest.json`).
    pub data: Option<PathBuf>,
    /// Output directory; default `out`.
    pub out: PathBuf,
    /// Cross-subject folds; default 5.
    pub folds: usize,
    /// Held-out fold; default 0.
    pub fold: usize,
}

pub const RUN_KEYS: [&str; 5] = ["preset", "data", "out", "folds", "fold"];

/// Overrides that come from dedicated command-line flags.
#[derive(Clone, Debug, Default)]
pub struct FlagOverrides {
    pub preset: Option<Preset>,
    pub gtl: Option<Option<GtlVariant>>,
    pub dml: Option<Option<DmlVariant>>,
    pub ref_index: Option<usize>,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub sets: Vec<String>,
}

/// A layer choice from the command line where `none` disables the layer.
/// (A bare `Option<Option<_>>` field would mean something else to clap.)
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerChoice<T>(pub Option<T>);

pub fn parse_gtl(s: &str) -> Result<LayerChoice<GtlVariant>, String> {
    if s == "none" {
        return Ok(LayerChoice(None));
    }
    s.parse().map(|v| LayerChoice(Some(v))).map_err(|e: kshape::Error| e.to_string())
}

pub fn parse_dml(s: &str) -> Result<LayerChoice<DmlVariant>, String> {
    if s == "none" {
        return Ok(LayerChoice(None));
    }
    s.parse().map(|v| LayerChoice(Some(v))).map_err(|e: kshape::Error| e.to_string())
}

fn read_file(path: &Path) -> Result<Map<String, Value>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    match serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))? {
        Value::Object(map) => Ok(map),
        _ => bail!("config {}: top level must be a JSON object", path.display()),
    }
}

/// `key=value`; the value is read as JSON when it parses, else as a string.
fn parse_set(item: &str) -> Result<(String, Value)> {
    let (k, v) = item
        .split_once('=')
        .with_context(|| format!("--set {item:?}: expected key=value"))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Resolve the full configuration. `n_classes` / `n_joints` come from the
/// dataset when one is loaded.
pub fn resolve(config_path: Option<&Path>, flags: &FlagOverrides) -> Result<RunConfig> {
    let mut entries = match config_path {
        Some(p) => read_file(p)?,
        None => Map::new(),
    };
    for item in &flags.sets {
        let (k, v) = parse_set(item)?;
        entries.insert(k, v);
    }
    let preset = match (flags.preset, entries.remove("preset")) {
        (Some(p), _) => p,
        (None, Some(Value::String(s))) => s.parse().map_err(anyhow::Error::from)?,
        (None, Some(other)) => bail!("preset must be a string, got {other}"),
        (None, None) => Preset::Rehab,
    };
    let take_path = |entries: &mut Map<String, Value>, key: &str| -> Result<Option<PathBuf>> {
        match entries.remove(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(PathBuf::from(s))),
            Some(other) => bail!("{key} must be a string, got {other}"),
        }
    };
    let take_usize = |entries: &mut Map<String, Value>, key: &str, default: usize| -> Result<usize> {
        match entries.remove(key) {
            None => Ok(default),
            Some(v) => v.as_u64().map(|x| x as usize).with_context(|| format!("{key} must be a non-negative integer, got {v}")),
        }
    };
    let data = take_path(&mut entries, "data")?;
    let out = take_path(&mut entries, "out")?;
    let folds = take_usize(&mut entries, "folds", 5)?;
    let fold = take_usize(&mut entries, "fold", 0)?;

    let base = ModelConfig::preset(preset, 2, 25);
    let Value::Object(mut model) = serde_json::to_value(&base)? else {
        unreachable!("config serializes to an object")
    };
    for (k, v) in entries {
        if !model.contains_key(&k) {
            let mut known: Vec<&str> = model.keys().map(String::as_str).collect();
            known.extend(RUN_KEYS);
            bail!("unknown config key {k:?} (known keys: {})", known.join(", "));
        }
        model.insert(k, v);
    }
    let mut model: ModelConfig = serde_json::from_value(Value::Object(model)).context("invalid model configuration")?;
    if let Some(g) = flags.gtl {
        model.gtl = g;
    }
    if let Some(d) = flags.dml {
        model.dml = d;
    }
    if let Some(r) = flags.ref_index {
        model.ref_index = r;
    }
    if let Some(s) = flags.seed {
        model.seed = s;
    }
    Ok(RunConfig {
        model,
        data: flags.data.clone().or(data),
        out: flags.out.clone().or(out).unwrap_or_else(|| PathBuf::from("out")),
        folds,
        fold,
    })
}
