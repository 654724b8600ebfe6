use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{eval_file, RunManifest, ADAPTED, BASE, BM25, MANIFEST_FILE, RRF_ADAPTED, RRF_BASE};
use crate::error::{Error, Result};
use crate::eval::{scatter_svg, EvalReport, ScatterPoint};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_SVG: &str = "alignment_uniformity.svg";

/// One method row; the numbers are copied unchanged from the eval JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub num_queries: usize,
    pub hit_at_1: f64,
    pub hit_at_4: f64,
    pub hit_at_10: f64,
    pub map_at_10: f64,
    pub alignment_raw: Option<f64>,
    pub alignment_norm: Option<f64>,
    pub uniformity_abs: Option<f64>,
}

impl ReportRow {
    fn from_eval(label: &str, r: &EvalReport) -> Self {
        Self {
            method: label.to_string(),
            num_queries: r.num_queries,
            hit_at_1: r.hit_at_1,
            hit_at_4: r.hit_at_4,
            hit_at_10: r.hit_at_10,
            map_at_10: r.map_at_10,
            alignment_raw: r.alignment_raw,
            alignment_norm: r.alignment_norm,
            uniformity_abs: r.uniformity_abs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub report: RunReport,
    pub json: PathBuf,
    pub csv: PathBuf,
    pub svg: PathBuf,
}

/// Rows in display order, with the eval file each comes from.
const ROWS: [(&str, &str, &str); 5] = [
    ("BM25", BM25, "eval_base"),
    ("Base", BASE, "eval_base"),
    ("BMEmbed", ADAPTED, "eval_adapted"),
    ("RRF", RRF_BASE, "fuse"),
    ("RRF+BMEmbed", RRF_ADAPTED, "fuse"),
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Collect the method rows of a finished run into JSON, CSV and an
/// alignment/uniformity scatter, and record them in the manifest. RRF rows
/// are present only when the fuse stage ran.
pub fn emit_report(run_dir: &Path) -> Result<ReportBundle> {
    let manifest_path = run_dir.join(MANIFEST_FILE);
    let mut manifest = RunManifest::load(&manifest_path)?;
    for stage in ["eval_base", "eval_adapted"] {
        if !manifest.is_complete(stage) {
            return Err(Error::InvalidArgument(format!("stage {stage} has not completed in {}", run_dir.display())));
        }
    }
    let mut rows = Vec::new();
    for (label, method, stage) in ROWS {
        if !manifest.is_complete(stage) {
            continue;
        }
        let report: EvalReport = crate::jsonl::read_json(&run_dir.join(eval_file(method)))?;
        rows.push(ReportRow::from_eval(label, &report));
    }
    let report = RunReport {
        config_hash: manifest.config_hash.clone(),
        seed: manifest.seed,
        rows,
    };

    let json = run_dir.join(REPORT_JSON);
    crate::jsonl::write_json(&json, &report)?;

    let mut csv = String::from("method,num_queries,hit@1,hit@4,hit@10,map@10,alignment_raw,alignment_norm,uniformity_abs\n");
    for r in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            r.num_queries,
            r.hit_at_1,
            r.hit_at_4,
            r.hit_at_10,
            r.map_at_10,
            fmt_opt(r.alignment_raw),
            fmt_opt(r.alignment_norm),
            fmt_opt(r.uniformity_abs)
        );
    }
    let csv_path = run_dir.join(REPORT_CSV);
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let points: Vec<ScatterPoint> = report
        .rows
        .iter()
        .filter_map(|r| {
            Some(ScatterPoint {
                label: r.method.clone(),
                alignment_norm: r.alignment_norm?,
                uniformity_abs: r.uniformity_abs?,
            })
        })
        .collect();
    let svg = run_dir.join(REPORT_SVG);
    std::fs::write(&svg, scatter_svg(&points)).map_err(|e| Error::io(&svg, e))?;

    let listed = vec![REPORT_JSON.to_string(), REPORT_CSV.to_string(), REPORT_SVG.to_string()];
    if manifest.report != listed {
        manifest.report = listed;
        manifest.save(&manifest_path)?;
    }
    Ok(ReportBundle {
        report,
        json,
        csv: csv_path,
        svg,
    })
}
