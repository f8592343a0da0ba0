//! Config-driven experiment runner: reads a TOML run description, executes
//! one experiment and writes its tables, binary dumps and a manifest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{Plan, RunConfig};
use error::{CliError, Result};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "OMEGA_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "omega-runs";

/// One output file.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
    /// Binary containers carry a timestamp that checksums ignore.
    pub binary: bool,
}

impl Artifact {
    pub fn text(name: impl Into<String>, text: String) -> Self {
        Self { name: name.into(), bytes: text.into_bytes(), binary: false }
    }

    pub fn binary(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self { name: name.into(), bytes, binary: true }
    }

    pub fn sha256(&self) -> String {
        let view = if self.binary {
            omega_core::container::checksum_view(&self.bytes)
        } else {
            self.bytes.clone()
        };
        Sha256::digest(&view).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// What an experiment produced.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub summary: Vec<String>,
    /// Failed guards as `(invariant, message)`; files are still written.
    pub violations: Vec<(String, String)>,
}

impl RunOutput {
    pub fn line(&mut self, s: String) {
        self.summary.push(s);
    }

    pub fn violate(&mut self, invariant: &str, message: String) {
        self.violations.push((invariant.to_string(), message));
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    run: RunInfo,
    files: Vec<FileEntry>,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct RunInfo {
    experiment: String,
    omega_cli: String,
    omega_core: String,
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    bytes: usize,
    sha256: String,
    /// `content`, or `content-without-timestamp` for binary containers.
    scope: String,
}

/// Seconds since the epoch, or `SOURCE_DATE_EPOCH` when set.
pub fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn manifest_text(plan: &Plan, artifacts: &[Artifact]) -> String {
    let m = Manifest {
        run: RunInfo {
            experiment: plan.config.experiment.name().to_string(),
            omega_cli: env!("CARGO_PKG_VERSION").to_string(),
            omega_core: omega_core::VERSION.to_string(),
        },
        files: artifacts
            .iter()
            .map(|a| FileEntry {
                name: a.name.clone(),
                bytes: a.bytes.len(),
                sha256: a.sha256(),
                scope: if a.binary { "content-without-timestamp" } else { "content" }.into(),
            })
            .collect(),
        config: &plan.config,
    };
    toml::to_string(&m).expect("manifest serializes")
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    RunConfig::parse(&text)
}

/// Output directory: explicit override, then the config's `output_dir`,
/// then `$OMEGA_OUTPUT_ROOT/<config stem>`, then `omega-runs/<config stem>`.
pub fn output_dir(config: &RunConfig, config_path: &Path, override_dir: Option<&Path>) -> PathBuf {
    if let Some(d) = override_dir {
        return d.to_path_buf();
    }
    if let Some(d) = &config.output_dir {
        return d.clone();
    }
    let stem = config_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
    root.join(stem)
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub summary: Vec<String>,
    pub files: Vec<String>,
}

/// Write every artifact, `summary.txt` and `manifest.toml` into `dir`.
pub fn write_outputs(dir: &Path, plan: &Plan, out: &RunOutput) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    let mut all = out.artifacts.clone();
    let mut summary = out.summary.join("\n");
    summary.push('\n');
    all.push(Artifact::text("summary.txt", summary));
    for a in &all {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(|e| CliError::io(path.display(), e))?;
    }
    let path = dir.join("manifest.toml");
    std::fs::write(&path, manifest_text(plan, &all)).map_err(|e| CliError::io(path.display(), e))?;
    Ok(all.into_iter().map(|a| a.name).chain(["manifest.toml".to_string()]).collect())
}

/// Load, validate, execute and write one run.
pub fn run(config_path: &Path, override_dir: Option<&Path>) -> Result<RunReport> {
    let config = load_config(config_path)?;
    let dir = output_dir(&config, config_path, override_dir);
    let plan = config.validate()?;
    let out = experiments::execute(&plan, timestamp())?;
    let files = write_outputs(&dir, &plan, &out)?;
    if let Some((invariant, message)) = out.violations.first() {
        return Err(CliError::numerical(invariant.clone(), message.clone()));
    }
    Ok(RunReport { dir, summary: out.summary, files })
}
