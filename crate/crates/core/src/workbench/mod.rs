//! Experiment drivers: robustness sweeps, model evaluation and report files.

mod eval;
mod sweep;

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::calibrate::AbxTable;
use crate::error::{Error, Result};

pub use eval::{
    model_eval, read_query_manifest, summarize, CensusCell, CensusRow, EvalQuery, ModelEvalSummary, QueryManifestEntry,
    Stats, CENSUS_KS, DEFAULT_THRESHOLDS,
};
pub use sweep::{
    default_grid, robustness_sweep, Partners, RecallCurve, RecallRow, SweepConfig, SweepContext, DEFAULT_KS,
    DEFAULT_TARGETS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidArgument(format!("unknown report format {other:?}"))),
        }
    }
}

impl ReportFormat {
    /// Format implied by a file extension, if recognised.
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

/// Anything the workbench can write as JSON or CSV.
pub trait Report {
    fn to_json(&self) -> serde_json::Value;
    fn csv_header(&self) -> Vec<String>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

fn to_value<T: serde::Serialize>(x: &T) -> serde_json::Value {
    serde_json::to_value(x).expect("report types serialise to JSON")
}

fn num(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Columns: `level`, `n_targets`, then `recall@k` per k.
impl Report for RecallCurve {
    fn to_json(&self) -> serde_json::Value {
        to_value(self)
    }

    fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["level".to_string(), "n_targets".to_string()];
        h.extend(self.ks.iter().map(|k| format!("recall@{k}")));
        h
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![num(r.level), r.n_targets.to_string()];
                row.extend(r.recall.iter().map(|&x| num(x)));
                row
            })
            .collect()
    }
}

/// Long form: `table,row,column,value`. Statistics rows are
/// `stats,<series>,<statistic>`; census rows are
/// `census,<threshold>,top<k>_{count,total,pct}`.
impl Report for ModelEvalSummary {
    fn to_json(&self) -> serde_json::Value {
        to_value(self)
    }

    fn csv_header(&self) -> Vec<String> {
        ["table", "row", "column", "value"].map(String::from).to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        let mut push = |t: &str, r: String, c: String, v: String| rows.push(vec![t.to_string(), r, c, v]);
        push("meta", "all".into(), "n_queries".into(), self.n_queries.to_string());
        push("meta", "all".into(), "k_clips".into(), self.k_clips.to_string());
        for (name, s) in [("prompt_similarity", self.prompt_similarity), ("top1_similarity", Some(self.top1_similarity))] {
            push("stats", name.into(), "n".into(), s.map_or(0, |s| s.n).to_string());
            for (col, v) in [
                ("mean", s.map(|s| s.mean)),
                ("median", s.map(|s| s.median)),
                ("sd", s.map(|s| s.sd)),
                ("max", s.map(|s| s.max)),
            ] {
                push("stats", name.into(), col.into(), opt(v));
            }
        }
        for row in &self.census {
            for (k, c) in self.ks.iter().zip(&row.cells) {
                push("census", num(row.threshold), format!("top{k}_count"), c.count.to_string());
                push("census", num(row.threshold), format!("top{k}_total"), c.total.to_string());
                push("census", num(row.threshold), format!("top{k}_pct"), num(c.pct));
            }
        }
        rows
    }
}

/// Columns: `higher_bin,lower_bin,n,prefer_higher,pct_prefer_higher`; row
/// totals carry `total` as the lower bin.
impl Report for AbxTable {
    fn to_json(&self) -> serde_json::Value {
        to_value(self)
    }

    fn csv_header(&self) -> Vec<String> {
        ["higher_bin", "lower_bin", "n", "prefer_higher", "pct_prefer_higher"]
            .map(String::from)
            .to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for r in &self.rows {
            for c in r.cells.iter().chain(std::iter::once(&r.total)) {
                let lower = if c.lower_bin == 0 { "total".to_string() } else { c.lower_bin.to_string() };
                rows.push(vec![
                    r.higher_bin.to_string(),
                    lower,
                    c.n.to_string(),
                    c.prefer_higher.to_string(),
                    opt(c.pct_prefer_higher),
                ]);
            }
        }
        rows
    }
}

pub fn render_report(report: &dyn Report, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(&report.to_json()).map_err(|e| Error::Invariant(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let fail = |e: csv::Error| Error::Invariant(e.to_string());
            w.write_record(report.csv_header()).map_err(fail)?;
            for row in report.csv_rows() {
                w.write_record(row).map_err(fail)?;
            }
            w.into_inner().map_err(|e| Error::Invariant(e.to_string()))
        }
    }
}

/// Writes `report` to `path` in `format` (`json` or `csv`).
pub fn emit_report(report: &dyn Report, path: impl AsRef<Path>, format: &str) -> Result<()> {
    let format: ReportFormat = format.parse()?;
    let path = path.as_ref();
    fs::write(path, render_report(report, format)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::SearchMode;
    use crate::perturb::PerturbationKind;

    fn curve(levels: &[f64]) -> RecallCurve {
        RecallCurve {
            kind: PerturbationKind::PitchShift,
            mode: SearchMode::Exact,
            ks: vec![1, 5, 10],
            rows: levels
                .iter()
                .map(|&level| RecallRow {
                    level,
                    n_targets: 200,
                    recall: vec![0.5, 0.75, 1.0],
                })
                .collect(),
        }
    }

    #[test]
    fn curve_csv_shape_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let c = curve(&[-1.0, 0.0, 1.0]);
        emit_report(&c, &a, "csv").unwrap();
        emit_report(&c, &b, "csv").unwrap();
        let text = fs::read_to_string(&a).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "level,n_targets,recall@1,recall@5,recall@10");
        assert_eq!(lines[1], "-1,200,0.5,0.75,1");
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

        emit_report(&c, &a, "json").unwrap();
        let back: RecallCurve = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_format_and_bad_path() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_report(&curve(&[0.0]), dir.path().join("x"), "xml"),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            emit_report(&curve(&[0.0]), dir.path().join("missing/x.csv"), "csv"),
            Err(Error::Io { .. })
        ));
        assert_eq!(ReportFormat::from_path(Path::new("a/b.CSV")), Some(ReportFormat::Csv));
    }

    #[test]
    fn summary_csv_is_long_form() {
        let s = ModelEvalSummary {
            n_queries: 2,
            k_clips: 50,
            ks: vec![1, 5, 10],
            prompt_similarity: None,
            top1_similarity: Stats::of(&[0.9, 0.7]).unwrap(),
            census: vec![CensusRow {
                threshold: 0.875,
                cells: vec![CensusCell { count: 1, total: 2, pct: 50.0 }; 3],
            }],
        };
        let text = String::from_utf8(render_report(&s, ReportFormat::Csv).unwrap()).unwrap();
        assert!(text.starts_with("table,row,column,value\n"));
        assert!(text.contains("stats,top1_similarity,max,0.9\n"));
        assert!(text.contains("stats,prompt_similarity,mean,\n"));
        assert!(text.contains("census,0.875,top5_pct,50\n"));
    }
}
