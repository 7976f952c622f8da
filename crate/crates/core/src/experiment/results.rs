//! Result files: line-delimited structured records for machines, an
//! aligned text table for people. Output is byte-stable for identical
//! inputs so reruns can be diffed.

use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::runner::{RunRecord, RunStatus};
use crate::experiment::sweep::AblationResult;

fn ser_err(e: serde_json::Error) -> Error {
    Error::InvalidState(format!("could not serialize results: {e}"))
}

/// One JSON record per line, schema tagged inside each record.
pub fn write_records_jsonl(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).map_err(ser_err)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line).map_err(|e| {
            Error::InvalidState(format!("bad record on line {}: {e}", i + 1))
        })?);
    }
    Ok(records)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| x.to_string())
}

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let emit = |out: &mut String, cells: &[String]| {
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(cell);
            out.extend(std::iter::repeat_n(' ', w - cell.len()));
        }
        // No trailing padding.
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    };
    let header_cells: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    emit(&mut out, &header_cells);
    for row in rows {
        emit(&mut out, row);
    }
    out
}

/// Aligned one-row-per-run summary.
pub fn records_table_text(records: &[RunRecord]) -> String {
    let header = [
        "mode", "dataset", "space", "epsilon", "delta", "sigma", "kappa", "eta", "alpha",
        "loss", "steps", "accuracy", "status",
    ];
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let cfg = &r.config;
            vec![
                cfg.mode.to_string(),
                cfg.dataset.clone(),
                cfg.prompt_space.to_string(),
                fmt_opt(cfg.epsilon),
                fmt_opt(cfg.delta),
                fmt_opt(r.privacy.as_ref().map(|p| p.sigma)),
                cfg.kappa.to_string(),
                cfg.eta.to_string(),
                cfg.alpha.to_string(),
                cfg.loss_mode.to_string(),
                cfg.max_steps.to_string(),
                fmt_opt(r.accuracy),
                match &r.status {
                    RunStatus::Ok => "ok".into(),
                    RunStatus::Failed { stage, .. } => format!("failed:{stage}"),
                },
            ]
        })
        .collect();
    render_table(&header, &rows)
}

pub fn write_records_table(records: &[RunRecord], path: &Path) -> Result<()> {
    std::fs::write(path, records_table_text(records))?;
    Ok(())
}

/// One JSON line per grid cell.
pub fn write_ablation_jsonl(result: &AblationResult, path: &Path) -> Result<()> {
    let mut out = String::new();
    for cell in &result.cells {
        let line = serde_json::json!({
            "schema": crate::experiment::runner::RECORD_SCHEMA,
            "parameter": result.parameter,
            "repeats": result.repeats,
            "cell": cell,
        });
        out.push_str(&serde_json::to_string(&line).map_err(ser_err)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// The mean/std-per-value table: one row per grid value.
pub fn ablation_table_text(result: &AblationResult) -> String {
    let parameter = result.parameter.to_string();
    let header = [parameter.as_str(), "mean", "std", "runs", "failures"];
    let rows: Vec<Vec<String>> = result
        .cells
        .iter()
        .map(|cell| {
            vec![
                cell.value.to_string(),
                fmt_opt(cell.mean),
                fmt_opt(cell.std),
                cell.accuracies.len().to_string(),
                cell.failures.len().to_string(),
            ]
        })
        .collect();
    render_table(&header, &rows)
}

pub fn write_ablation_table(result: &AblationResult, path: &Path) -> Result<()> {
    std::fs::write(path, ablation_table_text(result))?;
    Ok(())
}

// ---------------------------------------------------------------------------
