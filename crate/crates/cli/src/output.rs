use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sfpl::data::{
    load_covariates, load_rankings, read_coefficient_table, write_coefficient_table,
    CoefficientTable, CovariateMatrix, ObjectCatalog, RankingDataset, Standardization,
    DEFAULT_RANK_TOL,
};
use sfpl::likelihood::CoefficientSet;
use sha2::{Digest, Sha256};

use crate::args::DataArgs;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const COEFFICIENTS: &str = "coefficients.csv";
pub const FIT_JSON: &str = "fit.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Thresholds {
    pub zero: Option<f64>,
    pub fusion: Option<f64>,
    pub epsilon: Option<f64>,
    pub xi: Option<f64>,
    pub rank_tol: f64,
}

impl Thresholds {
    pub fn none() -> Self {
        Self {
            zero: None,
            fusion: None,
            epsilon: None,
            xi: None,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }

    pub fn from_tuning(t: &crate::args::TuningArgs) -> Self {
        Self {
            zero: Some(t.zero_threshold),
            fusion: Some(t.fusion_threshold),
            epsilon: Some(t.epsilon),
            xi: Some(t.xi),
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

/// One per output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub options: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub grid: Option<serde_json::Value>,
    pub thresholds: Thresholds,
    pub wall_clock_seconds: f64,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn digest(role: &str, path: &Path) -> CliResult<FileDigest> {
    Ok(FileDigest {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes `bytes` to `dir/name` and returns its digest entry.
pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<FileDigest> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(FileDigest {
        role: "output".into(),
        path: name.to_string(),
        sha256: hex::encode(Sha256::digest(bytes)),
    })
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<FileDigest> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(dir, name, &bytes)
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> CliResult<()> {
    write_json(dir, MANIFEST, manifest).map(|_| ())
}

pub fn read_manifest(dir: &Path) -> CliResult<RunManifest> {
    let path = dir.join(MANIFEST);
    let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::invalid(path.display().to_string(), e.to_string()))
}

/// Parsed, validated inputs of a fitting command.
pub struct Loaded {
    pub catalog: ObjectCatalog,
    /// Standardized unless `--no-standardize`.
    pub x: CovariateMatrix,
    pub data: RankingDataset,
    pub digests: Vec<FileDigest>,
}

pub fn load(args: &DataArgs) -> CliResult<Loaded> {
    let digests = vec![
        digest("rankings", &args.rankings)?,
        digest("covariates", &args.covariates)?,
    ];
    let (catalog, raw) = load_covariates(&args.covariates)?;
    let data = load_rankings(&args.rankings, &catalog)?;
    let x = if args.standardized() {
        raw.standardize()?
    } else {
        raw.clone()
    };
    Ok(Loaded {
        catalog,
        x,
        data,
        digests,
    })
}

pub fn coefficients_csv(
    b: &CoefficientSet,
    groups: &[String],
    variables: &[String],
    standardization: Option<&Standardization>,
) -> CliResult<Vec<u8>> {
    let table = CoefficientTable {
        groups: groups.to_vec(),
        variables: variables.to_vec(),
        coefficients: b.clone(),
    };
    let mut bytes = Vec::new();
    write_coefficient_table(&table, standardization, &mut bytes)?;
    Ok(bytes)
}

pub fn read_coefficients(path: &Path) -> CliResult<CoefficientTable> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_coefficient_table(file)
        .map_err(|e| CliError::invalid(path.display().to_string(), e.to_string()))
}
