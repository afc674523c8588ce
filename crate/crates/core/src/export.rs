//! Result tables: per-group estimates, long-format replicate tables for
//! uncertainty plots, interval summaries and sensitivity grids. Files are
//! written atomically through a temporary file in the target directory.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::bootstrap::{percentile_interval, EstimateWithCI, MAX_FAILED_SHARE};
use crate::error::{Error, Result};
use crate::estimators::GroupEstimates;
use crate::sensitivity::GridCell;

/// One line of the estimates table. Failed groups keep their error message
/// and leave the numeric columns empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub group: String,
    pub y_hat: Option<f64>,
    pub kp_hat: Option<f64>,
    pub d_bar_hat: Option<f64>,
    #[serde(rename = "D_hat")]
    pub d_hat: Option<f64>,
    #[serde(rename = "N_hat")]
    pub n_hat: Option<f64>,
    #[serde(rename = "M_hat")]
    pub m_hat: Option<f64>,
    pub error: Option<String>,
}

pub fn estimate_rows(estimates: &GroupEstimates) -> Vec<EstimateRow> {
    estimates
        .iter()
        .map(|(g, r)| match r {
            Ok(e) => EstimateRow {
                group: g.to_string(),
                y_hat: Some(e.y_hat),
                kp_hat: Some(e.kp_hat),
                d_bar_hat: Some(e.d_bar_hat),
                d_hat: Some(e.d_hat),
                n_hat: Some(e.n_hat),
                m_hat: Some(e.m_hat),
                error: None,
            },
            Err(err) => EstimateRow {
                group: g.to_string(),
                y_hat: None,
                kp_hat: None,
                d_bar_hat: None,
                d_hat: None,
                n_hat: None,
                m_hat: None,
                error: Some(err.to_string()),
            },
        })
        .collect()
}

pub fn write_estimates_csv<W: Write>(rows: &[EstimateRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_estimates_csv<R: Read>(reader: R) -> Result<Vec<EstimateRow>> {
    let mut rd = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str, row: usize) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        return Ok(None);
    }
    s.trim().parse().map(Some).map_err(|_| Error::Parse { row, message: format!("`{s}` is not a number") })
}

fn write_table<W: Write>(writer: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (group, replicate); failed replicates have an empty value.
pub fn write_replicates_long<W: Write>(results: &[EstimateWithCI], writer: W) -> Result<()> {
    let rows = results.iter().flat_map(|r| {
        r.replicates.iter().enumerate().map(move |(k, v)| vec![r.group.clone(), k.to_string(), fmt_opt(*v)])
    });
    write_table(writer, &["group", "replicate_index", "value"], rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRow {
    pub group: String,
    pub replicate_index: usize,
    pub value: Option<f64>,
}

pub fn read_replicates_long<R: Read>(reader: R) -> Result<Vec<ReplicateRow>> {
    let mut rd = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let field = |k: usize| rec.get(k).ok_or_else(|| Error::Parse { row, message: "short row".into() });
        out.push(ReplicateRow {
            group: field(0)?.to_string(),
            replicate_index: field(1)?
                .parse()
                .map_err(|_| Error::Parse { row, message: "bad replicate index".into() })?,
            value: parse_opt(field(2)?, row)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSummary {
    pub group: String,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub failed_replicates: usize,
    pub degenerate: bool,
}

/// Recomputes percentile intervals from a long replicate table, grouping
/// rows in first-seen order.
pub fn summaries_from_long(rows: &[ReplicateRow], level: f64) -> Vec<IntervalSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.group.as_str()) {
            order.push(&r.group);
        }
    }
    order
        .into_iter()
        .map(|g| {
            let all: Vec<Option<f64>> = rows.iter().filter(|r| r.group == g).map(|r| r.value).collect();
            let ok: Vec<f64> = all.iter().flatten().copied().collect();
            let failed = all.len() - ok.len();
            let degenerate = all.is_empty() || failed as f64 > MAX_FAILED_SHARE * all.len() as f64;
            let ci = if degenerate { None } else { percentile_interval(&ok, level) };
            IntervalSummary {
                group: g.to_string(),
                lo: ci.map(|c| c.0),
                hi: ci.map(|c| c.1),
                failed_replicates: failed,
                degenerate,
            }
        })
        .collect()
}

pub fn write_ci_summary<W: Write>(results: &[EstimateWithCI], writer: W) -> Result<()> {
    let rows = results.iter().map(|r| {
        vec![
            r.group.clone(),
            fmt_opt(r.estimate),
            fmt_opt(r.lo),
            fmt_opt(r.hi),
            r.level.to_string(),
            r.failed_replicates.to_string(),
            r.degenerate.to_string(),
        ]
    });
    write_table(writer, &["group", "estimate", "lo", "hi", "level", "failed_replicates", "degenerate"], rows)
}

/// Long grid table: one row per (cell, group).
pub fn write_grid_csv<W: Write>(cells: &[GridCell], writer: W) -> Result<()> {
    let rows = cells.iter().flat_map(|c| {
        c.rates
            .iter()
            .map(move |(g, m)| vec![c.delta.to_string(), c.eta_over_tau.to_string(), g.to_string(), m.to_string()])
    });
    write_table(writer, &["delta", "eta_over_tau", "group", "adjusted_rate"], rows)
}

/// Writes serializable rows with a header taken from the first row.
pub fn write_rows<W: Write, T: Serialize>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `fill` against a temporary file next to `path` and renames it into
/// place only if `fill` succeeds.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut fs::File) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
