//! Monte Carlo driver: simulate, estimate and studentize over an `n` ladder,
//! then summarize and emit CSV/JSON reports.

mod config;
mod report;
pub mod stats;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Estimators, ExperimentConfig, Outputs, SchemeSpec};
pub use report::{emit_report, write_csv, ReportFormat, CSV_HEADER};

use crate::error::{Error, Result};
use crate::estimate::{estimate, hayashi_yoshida, plugin_covariation, EstimateOptions, Prior};
use crate::likelihood::QuasiLikEngine;
use crate::rng::replicate_seed;
use crate::sde::{observe, simulate_path, DiffusionModel};

/// Largest tolerated fraction of failed replicates per ladder level.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub n: f64,
    pub replicate: usize,
    pub seed: u64,
    pub sigma_hat: Option<Vec<f64>>,
    pub sigma_tilde: Option<Vec<f64>>,
    /// `Γ_n` and `𝓝_n`, evaluated at `σ*`.
    pub gamma_n: Option<Vec<Vec<f64>>>,
    pub score_n: Option<Vec<f64>>,
    /// `(-∂²H(σ*))^{1/2} (σ̂ - σ*)`.
    pub studentized: Option<Vec<f64>>,
    /// Same for `σ̃`.
    pub studentized_bayes: Option<Vec<f64>>,
    pub hy: Option<f64>,
    pub plugin: Option<f64>,
    /// `∫ b^1·b^2` at `σ*` along the observed previous-tick path.
    pub target_covariation: Option<f64>,
    pub on_boundary: bool,
    pub degenerate: bool,
    pub gamma_fallback: bool,
    pub wall_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordSummary {
    pub coord: usize,
    pub bias: Option<f64>,
    pub bias_se: Option<f64>,
    pub rmse: Option<f64>,
    /// `b_n E|σ̂_j - σ*_j|²`.
    pub scaled_mse: Option<f64>,
    pub ks_stat: Option<f64>,
    pub ks_p: Option<f64>,
    pub studentized_mean: Option<f64>,
    pub studentized_se: Option<f64>,
    pub bayes_ks_stat: Option<f64>,
    pub bayes_ks_p: Option<f64>,
    pub bayes_studentized_mean: Option<f64>,
    pub bayes_studentized_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub n: f64,
    pub replicates: usize,
    pub failures: usize,
    pub on_boundary: usize,
    pub degenerate: usize,
    pub gamma_fallback: usize,
    pub coords: Vec<CoordSummary>,
    /// `sqrt(E|σ̂ - σ*|²)`.
    pub rmse: Option<f64>,
    /// `b_n E|σ̂ - σ*|²`.
    pub scaled_mse: Option<f64>,
    pub hy_mean: Option<f64>,
    pub hy_se: Option<f64>,
    pub plugin_mean: Option<f64>,
    pub plugin_se: Option<f64>,
    pub target_mean: Option<f64>,
    /// `var(plugin) / var(HY)`.
    pub variance_ratio: Option<f64>,
    /// Median of `|σ̃ - σ̂|`.
    pub median_bayes_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSummary {
    /// Slope of `log RMSE(σ̂)` on `log b_n`.
    pub rate_slope: Option<f64>,
    /// `median |σ̃ - σ̂|` strictly decreasing along the ladder.
    pub bayes_gap_decreasing: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub config: ExperimentConfig,
    pub sigma_star: Vec<f64>,
    pub levels: Vec<LevelSummary>,
    pub ladder: LadderSummary,
    pub rows: Vec<ReplicateRow>,
}

/// Runs every replicate at every ladder level. Replicate `r` at level `k` uses
/// seed `replicate_seed(replicate_seed(seed, k), r)`, so output does not depend
/// on the thread count. Failed replicates are recorded; a level with more
/// than 5% failures aborts the run.
pub fn run_mc(config: &ExperimentConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    let model = config.model()?;
    let truth = config.truth()?;
    let mut rows = Vec::with_capacity(config.replicates * config.n_ladder.len());
    let mut levels = Vec::with_capacity(config.n_ladder.len());
    for (k, &n) in config.n_ladder.iter().enumerate() {
        let level_seed = replicate_seed(config.seed, k as u64);
        let level_rows: Vec<ReplicateRow> = (0..config.replicates)
            .into_par_iter()
            .map(|r| run_replicate(config, &model, &truth, n, r, replicate_seed(level_seed, r as u64)))
            .collect();
        let failures = level_rows.iter().filter(|r| r.error.is_some()).count();
        if failures as f64 > MAX_FAILURE_FRACTION * config.replicates as f64 {
            let first = level_rows.iter().find_map(|r| r.error.clone()).unwrap_or_default();
            return Err(Error::Estimation(format!(
                "{failures} of {} replicates failed at n = {n} (first: {first})",
                config.replicates
            )));
        }
        for row in level_rows.iter().filter(|r| r.error.is_some()) {
            log::warn!("replicate {} at n = {n} failed: {}", row.replicate, row.error.as_deref().unwrap_or(""));
        }
        levels.push(summarize_level(n, &truth, &level_rows));
        rows.extend(level_rows);
    }
    let ladder = summarize_ladder(&levels);
    Ok(MonteCarloReport { config: config.clone(), sigma_star: truth, levels, ladder, rows })
}

fn run_replicate(
    config: &ExperimentConfig,
    model: &DiffusionModel,
    truth: &[f64],
    n: f64,
    replicate: usize,
    seed: u64,
) -> ReplicateRow {
    let start = Instant::now();
    let mut row = ReplicateRow {
        n,
        replicate,
        seed,
        sigma_hat: None,
        sigma_tilde: None,
        gamma_n: None,
        score_n: None,
        studentized: None,
        studentized_bayes: None,
        hy: None,
        plugin: None,
        target_covariation: None,
        on_boundary: false,
        degenerate: false,
        gamma_fallback: false,
        wall_ms: 0.0,
        error: None,
    };
    if let Err(e) = fill_replicate(config, model, truth, &mut row) {
        row.error = Some(e.to_string());
    }
    if config.timing {
        row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    }
    row
}

fn fill_replicate(config: &ExperimentConfig, model: &DiffusionModel, truth: &[f64], row: &mut ReplicateRow) -> Result<()> {
    let grid = config.scheme.generate(row.n, config.horizon, row.seed)?;
    let path = simulate_path(model, truth, &grid, None, row.seed)?;
    let sample = observe(&path, &grid)?;
    row.target_covariation = Some(plugin_covariation(model, truth, &sample));
    if config.estimators.hy {
        row.hy = Some(hayashi_yoshida(&sample));
    }
    if !config.estimators.qmle {
        return Ok(());
    }
    let engine = QuasiLikEngine::new(model.clone(), sample);
    let opts = EstimateOptions {
        prior: if config.estimators.bayes { Some(Prior::from_name(&config.prior)?) } else { None },
        info_at: Some(truth.to_vec()),
        ..Default::default()
    };
    let (out, info) = estimate(&engine, &opts)?;
    row.studentized = Some(info.studentize(&out.sigma_hat, truth));
    row.studentized_bayes = out.sigma_tilde.as_ref().map(|s| info.studentize(s, truth));
    row.plugin = Some(out.plugin_covariation);
    row.on_boundary = out.on_boundary;
    row.degenerate = out.degenerate;
    row.gamma_fallback = out.gamma_fallback;
    row.gamma_n = Some(out.gamma_n);
    row.score_n = Some(out.score_n);
    row.sigma_hat = Some(out.sigma_hat);
    row.sigma_tilde = out.sigma_tilde;
    Ok(())
}

fn summarize_level(n: f64, truth: &[f64], rows: &[ReplicateRow]) -> LevelSummary {
    let d = truth.len();
    let ok: Vec<&ReplicateRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let hats: Vec<&Vec<f64>> = ok.iter().filter_map(|r| r.sigma_hat.as_ref()).collect();
    let column = |vs: &[&Vec<f64>], j: usize| -> Vec<f64> { vs.iter().map(|v| v[j]).collect() };
    let students: Vec<&Vec<f64>> = ok.iter().filter_map(|r| r.studentized.as_ref()).collect();
    let bayes_students: Vec<&Vec<f64>> = ok.iter().filter_map(|r| r.studentized_bayes.as_ref()).collect();
    let mean = |x: &[f64]| (!x.is_empty()).then(|| x.iter().sum::<f64>() / x.len() as f64);

    let coords = (0..d)
        .map(|j| {
            let err: Vec<f64> = column(&hats, j).iter().map(|v| v - truth[j]).collect();
            let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
            let ms = mean(&sq);
            let st = column(&students, j);
            let bst = column(&bayes_students, j);
            let ks = stats::ks_standard_normal(&st);
            let bks = stats::ks_standard_normal(&bst);
            CoordSummary {
                coord: j,
                bias: mean(&err),
                bias_se: stats::mean_se(&err).map(|m| m.1),
                rmse: ms.map(f64::sqrt),
                scaled_mse: ms.map(|m| n * m),
                ks_stat: ks.map(|k| k.0),
                ks_p: ks.map(|k| k.1),
                studentized_mean: mean(&st),
                studentized_se: stats::mean_se(&st).map(|m| m.1),
                bayes_ks_stat: bks.map(|k| k.0),
                bayes_ks_p: bks.map(|k| k.1),
                bayes_studentized_mean: mean(&bst),
                bayes_studentized_se: stats::mean_se(&bst).map(|m| m.1),
            }
        })
        .collect();

    let total_sq: Vec<f64> =
        hats.iter().map(|h| h.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).collect();
    let hy: Vec<f64> = ok.iter().filter_map(|r| r.hy).collect();
    let plugin: Vec<f64> = ok.iter().filter_map(|r| r.plugin).collect();
    let target: Vec<f64> = ok.iter().filter_map(|r| r.target_covariation).collect();
    let gaps: Vec<f64> = ok
        .iter()
        .filter_map(|r| {
            let (h, t) = (r.sigma_hat.as_ref()?, r.sigma_tilde.as_ref()?);
            Some(h.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        })
        .collect();
    let variance_ratio = match (stats::variance(&plugin), stats::variance(&hy)) {
        (Some(p), Some(h)) if h > 0.0 => Some(p / h),
        _ => None,
    };
    LevelSummary {
        n,
        replicates: rows.len(),
        failures: rows.len() - ok.len(),
        on_boundary: ok.iter().filter(|r| r.on_boundary).count(),
        degenerate: ok.iter().filter(|r| r.degenerate).count(),
        gamma_fallback: ok.iter().filter(|r| r.gamma_fallback).count(),
        coords,
        rmse: mean(&total_sq).map(f64::sqrt),
        scaled_mse: mean(&total_sq).map(|m| n * m),
        hy_mean: mean(&hy),
        hy_se: stats::mean_se(&hy).map(|m| m.1),
        plugin_mean: mean(&plugin),
        plugin_se: stats::mean_se(&plugin).map(|m| m.1),
        target_mean: mean(&target),
        variance_ratio,
        median_bayes_gap: stats::median(&gaps),
    }
}

fn summarize_ladder(levels: &[LevelSummary]) -> LadderSummary {
    let pts: Vec<(f64, f64)> =
        levels.iter().filter_map(|l| l.rmse.filter(|r| *r > 0.0).map(|r| (l.n.ln(), r.ln()))).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let gaps: Option<Vec<f64>> = levels.iter().map(|l| l.median_bayes_gap).collect();
    LadderSummary {
        rate_slope: stats::slope(&x, &y),
        bayes_gap_decreasing: gaps.filter(|g| g.len() >= 2).map(|g| g.windows(2).all(|w| w[1] < w[0])),
    }
}

/// Acceptance thresholds checked by `mc --assert`: per-coordinate KS at 1%
/// and `|mean| ≤ 3 SE` of the studentized errors (QMLE and, when present,
/// Bayes); the rate slope in `[-0.65, -0.35]` for ladders of three or more
/// levels; `var(plugin)/var(HY) < 1` when both were computed.
pub fn check_thresholds(report: &MonteCarloReport) -> Vec<(String, bool)> {
    let mut out = Vec::new();
    for l in &report.levels {
        for c in &l.coords {
            if let (Some(p), Some(m), Some(se)) = (c.ks_p, c.studentized_mean, c.studentized_se) {
                out.push((format!("n={} coord {} QMLE KS p = {p:.4}", l.n, c.coord), p >= 0.01));
                out.push((format!("n={} coord {} QMLE mean {m:.4} (se {se:.4})", l.n, c.coord), m.abs() <= 3.0 * se));
            }
            if let (Some(p), Some(m), Some(se)) = (c.bayes_ks_p, c.bayes_studentized_mean, c.bayes_studentized_se) {
                out.push((format!("n={} coord {} Bayes KS p = {p:.4}", l.n, c.coord), p >= 0.01));
                out.push((format!("n={} coord {} Bayes mean {m:.4} (se {se:.4})", l.n, c.coord), m.abs() <= 3.0 * se));
            }
        }
        if let Some(v) = l.variance_ratio {
            out.push((format!("n={} var(plugin)/var(HY) = {v:.4}", l.n), v < 1.0));
        }
    }
    if report.levels.len() >= 3 {
        let s = report.ladder.rate_slope;
        out.push((
            format!("rate slope = {}", s.map_or("n/a".into(), |v| format!("{v:.4}"))),
            s.is_some_and(|v| (-0.65..=-0.35).contains(&v)),
        ));
    }
    out
}

#[cfg(test)]
mod tests;
