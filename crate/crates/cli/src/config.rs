//! Config-file handling, resolved-run manifests, and atomic file output.
//!
//! Precedence: command-line flags override config-file values override
//! built-in defaults. Every subcommand writes a manifest of the resolved
//! configuration next to its outputs so a run can be reproduced exactly.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use regime_ensemble::data::Horizon;
use regime_ensemble::ensemble::HyperGrid;

/// Optional TOML config file; every key may be omitted.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct FileConfig {
    pub horizon: Option<String>,
    pub clusters: Option<usize>,
    pub window: Option<usize>,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub train_fraction: Option<f64>,
    pub extreme_percentile: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
            }
        }
    }
}

/// Pick flag over config over default.
pub fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn parse_horizon(label: &str) -> anyhow::Result<Horizon> {
    label.parse::<Horizon>().map_err(anyhow::Error::from)
}

/// Grid-search ranges loaded from TOML.
#[derive(Debug, Clone, Deserialize)]
pub struct GridFile {
    pub clusters: Vec<usize>,
    pub windows: Vec<usize>,
    pub lambdas: Vec<f64>,
}

pub fn load_grid(path: Option<&Path>) -> anyhow::Result<HyperGrid> {
    match path {
        None => Ok(HyperGrid::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading grid {}", path.display()))?;
            let grid: GridFile =
                toml::from_str(&text).with_context(|| format!("parsing grid {}", path.display()))?;
            Ok(HyperGrid {
                clusters: grid.clusters,
                windows: grid.windows,
                lambdas: grid.lambdas,
            })
        }
    }
}

/// Resolved-run record written next to every subcommand's outputs.
///
/// Contains no wall-clock data: re-running with the same manifest inputs must
/// reproduce outputs byte for byte.
#[derive(Debug, Serialize)]
pub struct Manifest<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub threads: Option<usize>,
    pub config: C,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(subcommand: &'static str, config: C) -> Self {
        Manifest {
            tool: "regime-ensemble",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            threads: std::env::var("REGIME_ENSEMBLE_THREADS")
                .ok()
                .and_then(|v| v.parse().ok()),
            config,
        }
    }

    /// Write as `<file>.manifest.json` for file outputs or
    /// `<dir>/manifest.json` for directory outputs.
    pub fn write_next_to(&self, output: &Path, is_dir: bool) -> anyhow::Result<()> {
        let path = if is_dir {
            output.join("manifest.json")
        } else {
            let mut name = output.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            output.with_file_name(name)
        };
        let body = serde_json::to_string_pretty(self)?;
        write_atomic(&path, body.as_bytes())
    }
}

/// Write via a temp file in the destination directory plus rename, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent)
        .with_context(|| format!("creating directory {}", parent.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&parent)
        .with_context(|| format!("creating temp file in {}", parent.display()))?;
    tmp.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}
