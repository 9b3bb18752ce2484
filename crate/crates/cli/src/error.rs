use std::collections::BTreeMap;
use std::path::PathBuf;

use kgl_core::KglError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    #[error("cache entry {path} is corrupt: expected sha256 {expected}, found {found}")]
    CacheCorrupt { path: PathBuf, expected: String, found: String },

    #[error("member {}: {source}", fmt_coordinates(.coordinates))]
    Member {
        coordinates: BTreeMap<String, f64>,
        #[source]
        source: KglError,
    },

    #[error("no verification reports found in {}", .0.display())]
    NoReports(PathBuf),

    #[error(transparent)]
    Core(#[from] KglError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub fn fmt_coordinates(c: &BTreeMap<String, f64>) -> String {
    c.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

pub trait AtMember<T> {
    fn at(self, coordinates: &BTreeMap<String, f64>) -> Result<T, CliError>;
}

impl<T> AtMember<T> for Result<T, KglError> {
    fn at(self, coordinates: &BTreeMap<String, f64>) -> Result<T, CliError> {
        self.map_err(|source| CliError::Member {
            coordinates: coordinates.clone(),
            source,
        })
    }
}
