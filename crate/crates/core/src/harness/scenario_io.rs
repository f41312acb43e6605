//! JSON scenario and topology files, metrics CSV.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::netmodel::NetworkStructure;
use crate::sim::{MetricsRecord, Scenario, SimError};

#[derive(Debug, Error)]
pub enum ScenarioIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: SimError },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn read(path: &Path) -> Result<String, ScenarioIoError> {
    fs::read_to_string(path).map_err(|source| ScenarioIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &[u8]) -> Result<(), ScenarioIoError> {
    fs::write(path, contents).map_err(|source| ScenarioIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses JSON, reporting the dotted path of the offending field on failure.
fn parse_json<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T, ScenarioIoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        ScenarioIoError::Parse {
            path: origin.to_path_buf(),
            field: if field.is_empty() { ".".into() } else { field },
            message: e.into_inner().to_string(),
        }
    })
}

pub fn parse_scenario(text: &str, origin: &Path) -> Result<Scenario, ScenarioIoError> {
    let s: Scenario = parse_json(text, origin)?;
    s.validate().map_err(|source| ScenarioIoError::Invalid {
        path: origin.to_path_buf(),
        source,
    })?;
    Ok(s)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioIoError> {
    let path = path.as_ref();
    parse_scenario(&read(path)?, path)
}

fn to_pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("plain data serializes");
    out.push(b'\n');
    out
}

pub fn save_scenario(path: impl AsRef<Path>, scenario: &Scenario) -> Result<(), ScenarioIoError> {
    write(path.as_ref(), &to_pretty(scenario))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkStructure, ScenarioIoError> {
    let path = path.as_ref();
    parse_json(&read(path)?, path)
}

pub fn network_json(network: &NetworkStructure) -> String {
    String::from_utf8(to_pretty(network)).expect("json is utf-8")
}

pub fn save_network(path: impl AsRef<Path>, network: &NetworkStructure) -> Result<(), ScenarioIoError> {
    write(path.as_ref(), network_json(network).as_bytes())
}

/// One row of the metrics table.
#[derive(Clone, Debug)]
pub struct MetricsRow {
    pub planner: String,
    pub seed: u64,
    pub metrics: MetricsRecord,
}

pub const METRICS_HEADER: [&str; 7] = [
    "planner",
    "seed",
    "congestion_occurrences",
    "congestion_duration_s",
    "packet_loss_pct",
    "planner_invocations",
    "mean_plan_time_ms",
];

/// Metrics as CSV text. Planner times are wall-clock measurements, so they are written only
/// when `timings` is set; otherwise the column stays empty and the output is reproducible.
pub fn metrics_csv(rows: &[MetricsRow], timings: bool) -> Result<String, ScenarioIoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        let m = &r.metrics;
        let time = match (timings, m.mean_plan_time()) {
            (true, Some(t)) => format!("{:.3}", t.as_secs_f64() * 1e3),
            _ => String::new(),
        };
        w.write_record([
            r.planner.clone(),
            r.seed.to_string(),
            m.congestion_occurrences.to_string(),
            m.congestion_duration_ticks.to_string(),
            format!("{:.6}", m.packet_loss_ratio * 100.0),
            m.planner_invocations.to_string(),
            time,
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn save_metrics(path: impl AsRef<Path>, rows: &[MetricsRow], timings: bool) -> Result<(), ScenarioIoError> {
    write(path.as_ref(), metrics_csv(rows, timings)?.as_bytes())
}
