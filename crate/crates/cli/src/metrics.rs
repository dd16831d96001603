//! CSV emission: training metrics, per-sample attack reports, and the
//! per-frequency discrepancy trace.
//!
//! Floats are written with Rust's shortest round-trip formatting (`nan` for
//! values that were not computed), so rows parse back losslessly and reruns
//! with the same seed are byte-identical.

use crate::{HarnessError, Result};
use phaseat_core::attack::SampleRecord;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const METRICS_HEADER: &str = "epoch,split,clean_acc,robust_acc,attack_name,e_low,e_high,loss";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: String,
    pub clean_acc: f64,
    pub robust_acc: f64,
    pub attack_name: String,
    pub e_low: f64,
    pub e_high: f64,
    pub loss: f64,
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    if s == "nan" {
        Ok(f64::NAN)
    } else {
        s.parse()
            .map_err(|_| HarnessError::Format(format!("bad float '{s}'")))
    }
}

impl MetricsRow {
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.split,
            fmt_f64(self.clean_acc),
            fmt_f64(self.robust_acc),
            self.attack_name,
            fmt_f64(self.e_low),
            fmt_f64(self.e_high),
            fmt_f64(self.loss)
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(HarnessError::Format(format!(
                "expected 8 metric fields, got {} in '{line}'"
            , fields.len())));
        }
        Ok(Self {
            epoch: fields[0]
                .parse()
                .map_err(|_| HarnessError::Format(format!("bad epoch '{}'", fields[0])))?,
            split: fields[1].to_string(),
            clean_acc: parse_f64(fields[2])?,
            robust_acc: parse_f64(fields[3])?,
            attack_name: fields[4].to_string(),
            e_low: parse_f64(fields[5])?,
            e_high: parse_f64(fields[6])?,
            loss: parse_f64(fields[7])?,
        })
    }
}

/// Append-only metrics writer; creates the file with its header line.
pub struct MetricsWriter {
    file: std::io::BufWriter<std::fs::File>,
    path: PathBuf,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "{METRICS_HEADER}")?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.file, "{}", row.to_line())?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.file.flush()?;
        Ok(self.path)
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == METRICS_HEADER => {}
        other => {
            return Err(HarnessError::Format(format!(
                "bad metrics header: {other:?}"
            )))
        }
    }
    lines.map(MetricsRow::parse).collect()
}

/// Per-sample attack report rows.
pub fn write_attack_report(path: &Path, records: &[SampleRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "sample_id,clean_correct,adv_correct,final_loss,delta_linf")?;
    for r in records {
        writeln!(
            file,
            "{},{},{},{},{}",
            r.sample_id,
            u8::from(r.clean_correct),
            u8::from(r.adv_correct),
            fmt_f64(r.final_loss),
            fmt_f64(r.delta_linf)
        )?;
    }
    file.flush()?;
    Ok(())
}

/// Discrepancy trace: one row per epoch, one column per frequency.
pub struct DiscrepancyWriter {
    file: std::io::BufWriter<std::fs::File>,
    k_max: usize,
}

impl DiscrepancyWriter {
    pub fn create(path: &Path, k_max: usize) -> Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = std::iter::once("epoch".to_string())
            .chain((0..k_max).map(|k| format!("d{k}")))
            .collect();
        writeln!(file, "{}", header.join(","))?;
        Ok(Self { file, k_max })
    }

    pub fn append(&mut self, epoch: usize, discrepancy: &[f64]) -> Result<()> {
        if discrepancy.len() != self.k_max {
            return Err(HarnessError::Format(format!(
                "discrepancy length {} does not match header width {}",
                discrepancy.len(),
                self.k_max
            )));
        }
        let row: Vec<String> = std::iter::once(epoch.to_string())
            .chain(discrepancy.iter().map(|&d| fmt_f64(d)))
            .collect();
        writeln!(self.file, "{}", row.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.file.flush()?;
        Ok(())
    }
}
