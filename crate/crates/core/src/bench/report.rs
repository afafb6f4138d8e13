//! Report files: `iterations.csv`, `residuals.csv`, `summary.json`.
//! Wall-clock times are left out so that files are reproducible byte for byte.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{ExperimentReport, SolveRecord, Variant, VariantKind};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub name: String,
    pub solves: usize,
    pub converged: usize,
    pub median_iterations: f64,
    pub mean_iterations: f64,
    /// `100 (1 - median / median_none)`; absent without a `none` variant.
    pub reduction_percent: Option<f64>,
}

fn median(v: &mut [usize]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m] as f64
    } else {
        0.5 * (v[m - 1] + v[m]) as f64
    }
}

pub(super) fn summarize(labels: &[String], variants: &[Variant], records: &[SolveRecord]) -> Vec<VariantSummary> {
    let mut out: Vec<VariantSummary> = labels
        .iter()
        .map(|name| {
            let mine: Vec<&SolveRecord> = records.iter().filter(|r| &r.variant == name).collect();
            let mut its: Vec<usize> = mine.iter().map(|r| r.report.iterations).collect();
            let mean = its.iter().sum::<usize>() as f64 / its.len().max(1) as f64;
            VariantSummary {
                name: name.clone(),
                solves: mine.len(),
                converged: mine.iter().filter(|r| r.report.converged()).count(),
                median_iterations: median(&mut its),
                mean_iterations: mean,
                reduction_percent: None,
            }
        })
        .collect();
    if let Some(base) = variants.iter().position(|v| v.kind == VariantKind::None) {
        let m0 = out[base].median_iterations;
        for (i, s) in out.iter_mut().enumerate() {
            s.reduction_percent = Some(if i == base { 0.0 } else { 100.0 * (1.0 - s.median_iterations / m0) });
        }
    }
    out
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    variants: &'a [VariantSummary],
    cycles: usize,
    probe_hashes: Vec<String>,
}

/// Writes the three report files into `dir`, returning their paths.
pub fn emit_report(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let it_path = dir.join("iterations.csv");
    let mut w = BufWriter::new(std::fs::File::create(&it_path)?);
    writeln!(w, "cycle,variant,iterations,final_residual,terminated_by")?;
    for r in &report.records {
        writeln!(w, "{},{},{},{:e},{}", r.cycle, r.variant, r.report.iterations, r.report.final_residual, r.report.termination.as_str())?;
    }
    w.flush()?;

    let res_path = dir.join("residuals.csv");
    let mut w = BufWriter::new(std::fs::File::create(&res_path)?);
    writeln!(w, "cycle,variant,iteration,residual_norm")?;
    for r in &report.records {
        for (j, v) in r.report.residual_history.iter().enumerate() {
            writeln!(w, "{},{},{j},{v:e}", r.cycle, r.variant)?;
        }
    }
    w.flush()?;

    let sum_path = dir.join("summary.json");
    let file = SummaryFile {
        variants: &report.summary,
        cycles: report.probe_hashes.len(),
        probe_hashes: report.probe_hashes.iter().map(|h| format!("{h:016x}")).collect(),
    };
    std::fs::write(&sum_path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(vec![it_path, res_path, sum_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3, 1, 2]), 2.0);
        assert_eq!(median(&mut [4, 1, 2, 3]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
