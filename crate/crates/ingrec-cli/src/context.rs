//! Run context: config-file resolution, effective-config printing, and the
//! per-run manifest that accompanies every output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<ingrec::Error> for CliError {
    fn from(e: ingrec::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn data_err(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

/// Tracks the resolved configuration of one invocation and writes the run
/// manifest. Flag values override config-file values; both are recorded.
pub struct RunContext {
    command: &'static str,
    out_dir: PathBuf,
    file_config: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl RunContext {
    pub fn new(
        command: &'static str,
        out_dir: &Path,
        config_file: Option<&Path>,
    ) -> CliResult<Self> {
        let file_config = match config_file {
            Some(path) => parse_config_file(path)?,
            None => BTreeMap::new(),
        };
        std::fs::create_dir_all(out_dir)
            .map_err(|e| data_err(format!("create {}: {e}", out_dir.display())))?;
        Ok(RunContext {
            command,
            out_dir: out_dir.to_path_buf(),
            file_config,
            resolved: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    /// Resolve one setting: explicit flag beats config file beats default.
    pub fn setting<T: std::str::FromStr + std::fmt::Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.file_config.get(key) {
                Some(raw) => raw
                    .parse::<T>()
                    .map_err(|e| usage(format!("config key {key}={raw:?}: {e}")))?,
                None => default,
            },
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    pub fn record(&mut self, key: &str, value: impl std::fmt::Display) {
        self.resolved.insert(key.to_string(), value.to_string());
    }

    pub fn input(&mut self, key: &str, path: &Path) {
        self.inputs
            .insert(key.to_string(), path.display().to_string());
    }

    /// Register an output file name and return its full path.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out_dir.join(name)
    }

    /// Print the effective configuration (every run does this).
    pub fn print_config(&self) {
        println!("[{}] effective configuration:", self.command);
        for (k, v) in &self.inputs {
            println!("  input {k} = {v}");
        }
        for (k, v) in &self.resolved {
            println!("  {k} = {v}");
        }
    }

    /// Write `manifest_<command>.json` next to the outputs.
    pub fn write_manifest(mut self) -> CliResult<()> {
        let name = format!("manifest_{}.json", self.command.replace('-', "_"));
        let path = self.out_dir.join(&name);
        self.outputs.push(name);
        self.outputs.sort();
        let manifest = serde_json::json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "inputs": self.inputs,
            "config": self.resolved,
            "outputs": self.outputs,
        });
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| data_err(format!("manifest: {e}")))?;
        std::fs::write(&path, text)
            .map_err(|e| data_err(format!("write {}: {e}", path.display())))?;
        Ok(())
    }
}

/// Flat `key = value` config file; `#` starts a comment.
fn parse_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| data_err(format!("read {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            usage(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}
