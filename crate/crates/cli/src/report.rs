//! Evaluation report and histogram emission.
//!
//! The report is a structured text document — a key-value header followed
//! by tab-delimited tables — that is byte-stable under fixed inputs.
//! Histograms additionally go to standalone CSV files
//! (`bin_left,bin_right,count_indist,count_ood`).

use std::fs;
use std::io::Write;
use std::path::Path;

use flowguard_core::eval::{EvalReport, Histogram};

use crate::{IoError, Result};

pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str("# flowguard evaluation report\n");
    out.push_str(&format!("in_count={}\n", report.in_count));
    out.push_str(&format!("ood_count={}\n", report.ood_count));
    for (k, v) in &report.meta {
        out.push_str(&format!("{k}={v}\n"));
    }
    out.push('\n');
    out.push_str("[metrics]\n");
    out.push_str("detector\tauroc\taupr\ttau\ttpr\tfpr\tfailures_in\tfailures_ood\n");
    for d in &report.detectors {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            d.detector.name(),
            d.auroc,
            d.aupr,
            d.tau,
            d.tpr,
            d.fpr,
            d.failures_in,
            d.failures_ood
        ));
    }
    for d in &report.detectors {
        out.push('\n');
        out.push_str(&format!("[histogram:{}]\n", d.detector.name()));
        out.push_str("bin_left\tbin_right\tcount_indist\tcount_ood\n");
        out.push_str(&render_histogram_rows(&d.histogram, '\t'));
    }
    out
}

fn render_histogram_rows(h: &Histogram, sep: char) -> String {
    let mut out = String::new();
    for i in 0..h.count_in.len() {
        out.push_str(&format!(
            "{}{sep}{}{sep}{}{sep}{}\n",
            h.edges[i],
            h.edges[i + 1],
            h.count_in[i],
            h.count_ood[i]
        ));
    }
    // Failure markers live in the overflow row.
    out.push_str(&format!(
        "{}{sep}inf{sep}{}{sep}{}\n",
        h.edges[h.count_in.len()],
        h.overflow_in,
        h.overflow_ood
    ));
    out
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    fs::File::create(path)
        .map_err(|e| IoError::io(format!("creating {}", path.display()), e))?
        .write_all(render_report(report).as_bytes())
        .map_err(|e| IoError::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

pub fn write_histogram_csv(h: &Histogram, path: &Path) -> Result<()> {
    let mut out = String::from("bin_left,bin_right,count_indist,count_ood\n");
    out.push_str(&render_histogram_rows(h, ','));
    fs::File::create(path)
        .map_err(|e| IoError::io(format!("creating {}", path.display()), e))?
        .write_all(out.as_bytes())
        .map_err(|e| IoError::io(format!("writing {}", path.display()), e))?;
    Ok(())
}
