use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use schemalyze_core::oracle::SweepConfig;
use schemalyze_core::{ConstIds, EngineConfig};

/// Keys accepted in a `--config` file. Command-line flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub depth_cap: Option<usize>,
    pub id_size_cap: Option<usize>,
    pub const_ids: Option<String>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub size: Option<usize>,
    pub json: Option<bool>,
    pub show_ids: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }
}

pub fn parse_const_ids(s: &str) -> Result<ConstIds> {
    match s {
        "value" => Ok(ConstIds::Value),
        "column" => Ok(ConstIds::Column),
        other => bail!("unknown const-ids mode `{other}` (expected value or column)"),
    }
}

/// Effective settings after merging flags, config file, environment and defaults.
#[derive(Debug, Clone)]
pub struct Settings {
    pub engine: EngineConfig,
    pub sweep: SweepConfig,
    pub json: bool,
    pub show_ids: bool,
}

pub struct Flags {
    pub depth_cap: Option<usize>,
    pub env_depth_cap: Option<String>,
    pub id_size_cap: Option<usize>,
    pub const_ids: Option<String>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub size: Option<usize>,
    pub json: bool,
    pub show_ids: bool,
}

pub fn merge(flags: Flags, file: FileConfig) -> Result<Settings> {
    let env_cap = match flags.env_depth_cap {
        Some(s) => Some(
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("SCHEMALYZE_DEPTH_CAP is not a number: `{s}`"))?,
        ),
        None => None,
    };
    let mut engine = EngineConfig::default();
    if let Some(cap) = flags.depth_cap.or(file.depth_cap).or(env_cap) {
        engine.depth_cap = cap;
    }
    if let Some(cap) = flags.id_size_cap.or(file.id_size_cap) {
        engine.size_cap = cap;
    }
    if engine.depth_cap < 1 || engine.size_cap < 1 {
        bail!("identifier caps must be at least 1");
    }
    if let Some(mode) = flags.const_ids.or(file.const_ids) {
        engine.const_ids = parse_const_ids(&mode)?;
    }
    let mut sweep = SweepConfig {
        report_missed: true,
        ..SweepConfig::default()
    };
    sweep.seed = flags.seed.or(file.seed).unwrap_or(sweep.seed);
    sweep.trials = flags.trials.or(file.trials).unwrap_or(sweep.trials);
    sweep.size = flags.size.or(file.size).unwrap_or(sweep.size);
    Ok(Settings {
        engine,
        sweep,
        json: flags.json || file.json.unwrap_or(false),
        show_ids: flags.show_ids || file.show_ids.unwrap_or(false),
    })
}
