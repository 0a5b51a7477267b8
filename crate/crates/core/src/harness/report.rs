use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::MonteCarloReport;
use crate::scheme::{csv_io, format_f64};

pub const CSV_HEADER: [&str; 10] =
    ["seed", "n", "coord", "sigma_hat", "sigma_tilde", "gamma_n", "score_n", "hy", "plugin", "wall_ms"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Parse(format!("unknown report format `{other}` (expected csv or json)"))),
        }
    }
}

/// One line per replicate and coordinate; `gamma_n` is the diagonal entry of
/// `Γ_n` for that coordinate. Missing values are left empty.
pub fn write_csv<W: Write>(report: &MonteCarloReport, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let d = report.sigma_star.len();
    let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
    for row in &report.rows {
        for j in 0..d {
            w.write_record([
                row.seed.to_string(),
                format_f64(row.n),
                j.to_string(),
                opt(row.sigma_hat.as_ref().map(|s| s[j])),
                opt(row.sigma_tilde.as_ref().map(|s| s[j])),
                opt(row.gamma_n.as_ref().map(|g| g[j][j])),
                opt(row.score_n.as_ref().map(|s| s[j])),
                opt(row.hy),
                opt(row.plugin),
                format_f64(row.wall_ms),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// JSON mirrors the whole report (config, summaries and rows).
pub fn emit_report(report: &MonteCarloReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        ReportFormat::Csv => write_csv(report, std::io::BufWriter::new(file)).map_err(|e| csv_io(path, e)),
        ReportFormat::Json => {
            let mut w = std::io::BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, report).map_err(|e| Error::Parse(e.to_string()))?;
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}
