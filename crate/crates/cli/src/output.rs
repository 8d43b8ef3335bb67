use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use wfpc_core::config::{Config, GridConfig, SCHEMA_ID};

use crate::Failure;

pub const OUTPUT_SCHEMA: &str = "wfpc-output/1";

/// Fields shared by every JSON record.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub schema: &'static str,
    pub command: &'static str,
    pub config_schema: &'static str,
    /// SHA-256 of the config file bytes; `null` when no config was given.
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub grid: Option<GridConfig>,
}

impl Header {
    pub fn new(command: &'static str, loaded: Option<&Loaded>, seed: Option<u64>) -> Self {
        Self {
            schema: OUTPUT_SCHEMA,
            command,
            config_schema: SCHEMA_ID,
            config_hash: loaded.map(|l| l.hash.clone()),
            seed,
            grid: loaded.map(|l| l.config.grid),
        }
    }
}

pub struct Loaded {
    pub config: Config,
    pub hash: String,
}

pub fn load(path: Option<&Path>) -> Result<Loaded, Failure> {
    let path = path.ok_or_else(|| Failure::Invalid("--config is required for this command".into()))?;
    let bytes = fs::read(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Failure::Invalid("config is not UTF-8".into()))?;
    let config = Config::from_toml(&text)?;
    let hash = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    Ok(Loaded { config, hash })
}

#[derive(Serialize)]
struct Record<'a, T: Serialize> {
    #[serde(flatten)]
    header: &'a Header,
    result: &'a T,
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, header: &Header, result: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(&Record { header, result }).map_err(|e| Failure::Solver(e.to_string()))?;
    fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

/// Whitespace-delimited `x y` lines after a `#` comment naming the columns.
pub fn write_series(dir: &Path, name: &str, columns: (&str, &str), xs: &[f64], ys: &[f64]) -> Result<(), Failure> {
    let mut f = fs::File::create(dir.join(name))?;
    writeln!(f, "# {} {}", columns.0, columns.1)?;
    for (x, y) in xs.iter().zip(ys) {
        writeln!(f, "{x:.10e} {y:.10e}")?;
    }
    Ok(())
}

pub fn prepare(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    Ok(())
}
