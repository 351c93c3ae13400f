//! JSON-lines run logs: a header, kernel fits and one record per observation.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::acquisition::CandidateSet;
use crate::error::{Error, Result};
use crate::gp::KernelParams;
use crate::sampling::DesignSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Phase {
    Init,
    Iter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunHeader {
    pub method: String,
    pub seed: u64,
    pub space: DesignSpace,
    /// Method-specific configuration.
    pub config: serde_json::Value,
    /// Finite design set, when the method uses one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<CandidateSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObservationRecord {
    pub method: String,
    /// Zero-based index over all observations of the run.
    pub n: usize,
    pub phase: Phase,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_index: Option<usize>,
    pub tau: usize,
    pub q: usize,
    pub y: f64,
    pub replications: Vec<f64>,
    pub cost: u64,
    pub cumulative_cost: u64,
    /// Acquisition value of the chosen decision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acquisition: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gis: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_rec: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "camelCase")]
pub enum LogRecord {
    Header(RunHeader),
    /// Kernel parameters in force from observation `n` on.
    Kernel {
        n: usize,
        params: KernelParams,
    },
    Observation(ObservationRecord),
    /// Test-set score of the design reported at a cost checkpoint.
    Evaluation(EvaluationRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvaluationRecord {
    pub cost: u64,
    /// Evaluated design; absent for methods without subgoals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    pub mean: f64,
    pub se: f64,
    pub trials: usize,
}

/// Destination of log records as they are produced.
pub trait LogSink {
    fn record(&mut self, r: &LogRecord) -> Result<()>;
}

impl LogSink for Vec<LogRecord> {
    fn record(&mut self, r: &LogRecord) -> Result<()> {
        self.push(r.clone());
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl LogSink for NullSink {
    fn record(&mut self, _: &LogRecord) -> Result<()> {
        Ok(())
    }
}

/// Writes one JSON object per line, flushing after each record.
pub struct JsonlWriter<W: Write>(pub W);

impl<W: Write> LogSink for JsonlWriter<W> {
    fn record(&mut self, r: &LogRecord) -> Result<()> {
        serde_json::to_writer(&mut self.0, r)?;
        self.0.write_all(b"\n")?;
        self.0.flush()?;
        Ok(())
    }
}

/// Parses a JSON-lines log; blank lines are skipped.
pub fn read_log<R: BufRead>(input: R) -> Result<Vec<LogRecord>> {
    let mut out = vec![];
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Log {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_log_file(path: &std::path::Path) -> Result<Vec<LogRecord>> {
    let f = std::fs::File::open(path)?;
    read_log(std::io::BufReader::new(f))
}

/// The header and observation records of a parsed log.
pub fn split_log(records: &[LogRecord]) -> Result<(&RunHeader, Vec<&ObservationRecord>)> {
    let header = match records.first() {
        Some(LogRecord::Header(h)) => h,
        _ => {
            return Err(Error::Log {
                line: 1,
                message: "log must start with a header record".into(),
            })
        }
    };
    let obs = records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Observation(o) => Some(o),
            _ => None,
        })
        .collect();
    Ok((header, obs))
}

/// Evaluation records in log order.
pub fn evaluations(records: &[LogRecord]) -> Vec<&EvaluationRecord> {
    records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Evaluation(e) => Some(e),
            _ => None,
        })
        .collect()
}

/// Total cost charged by the logged observations.
pub fn logged_cost(records: &[LogRecord]) -> u64 {
    records
        .iter()
        .map(|r| match r {
            LogRecord::Observation(o) => (o.q * o.tau) as u64,
            _ => 0,
        })
        .sum()
}
