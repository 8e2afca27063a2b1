//! Record stream lines, summaries and CSV layouts.
//!
//! Records are newline-delimited JSON, one self-describing object per line,
//! so a crashed run still leaves a readable prefix. CSV columns are only ever
//! appended to.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ansatz::checkpoint::Checkpoint;
use crate::ansatz::AnsatzSpec;
use crate::optimizer::{FinalEstimates, IterationRecord, Status};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLine {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(flatten)]
    pub header: RecordHeader,
    pub beta_r: f64,
    #[serde(flatten)]
    pub record: IterationRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(flatten)]
    pub header: RecordHeader,
    pub beta_r: f64,
    pub iterations: usize,
    #[serde(flatten)]
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimates: Option<FinalEstimates>,
}

pub const SWEEP_COLUMNS: &[&str] = &[
    "beta_r",
    "e_per_site",
    "e_per_site_err",
    "s2_per_site",
    "s2_per_site_err",
    "f_per_site",
    "f_per_site_err",
    "m_x",
    "m_x_err",
    "c_xx",
    "c_xx_err",
    "c_zz",
    "c_zz_err",
    "iterations",
    "status",
];

/// Appended to [`SWEEP_COLUMNS`] with `--oracle`.
pub const SWEEP_ORACLE_COLUMNS: &[&str] =
    &["oracle_e_per_site", "oracle_s2_per_site", "oracle_f_per_site", "oracle_m_x", "oracle_c_xx", "oracle_c_zz", "f_rel_error"];

pub const ORACLE_COLUMNS: &[&str] = &["ensemble", "beta", "e_per_site", "entropy_per_site", "f_per_site", "m_x", "c_xx", "c_zz", "kkt_ok"];

pub(crate) struct RecordWriter {
    out: BufWriter<File>,
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self { out: BufWriter::new(File::create(path)?) })
    }

    pub fn write<T: Serialize>(&mut self, line: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, line)?;
        self.out.write_all(b"\n")?;
        // flush per line: the stream must survive a crash
        self.out.flush()?;
        Ok(())
    }
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub(crate) fn save_checkpoint(path: &Path, spec: &AnsatzSpec, params: &[f64], seed: u64) -> Result<()> {
    Checkpoint::new(spec.clone(), params.to_vec(), vec![seed])?.save(path)
}

pub(crate) fn checkpoint_path(dir: &Path, point: Option<usize>) -> PathBuf {
    match point {
        None => dir.join("checkpoint.ckpt"),
        Some(i) => dir.join(format!("checkpoint_{i}.ckpt")),
    }
}

/// Fixed-format CSV cell: empty for missing values.
pub(crate) fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.10e}"),
        None => String::new(),
    }
}

pub(crate) fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}
