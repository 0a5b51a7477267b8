use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use nonsync_qmle::estimate::{estimate, EstimateOptions, Prior};
use nonsync_qmle::harness::{check_thresholds, emit_report, run_mc, ExperimentConfig, ReportFormat, SchemeSpec};
use nonsync_qmle::information::{gamma_empirical, gamma_formula_on, CoeffPath};
use nonsync_qmle::likelihood::{GradMode, QuasiLikEngine};
use nonsync_qmle::rng::replicate_seed;
use nonsync_qmle::scheme::{check_a2, gen_clustered_grid, A2Deltas, ObservationGrid};
use nonsync_qmle::sde::{observe, simulate_path, DiffusionModel, NonsyncSample};
use nonsync_qmle::{Error, Result};

/// Quasi-likelihood estimation for nonsynchronously observed diffusions.
#[derive(Parser)]
#[command(name = "nsqmle", version)]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Record wall-clock time per replicate in `mc` output.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a path and write the observations as `side,index,time,value` CSV.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Also save the grid as JSON here.
        #[arg(long)]
        grid_out: Option<PathBuf>,
    },
    /// QMLE, Bayes-type estimator and observed information for one sample (JSON).
    Estimate {
        #[arg(long)]
        model: String,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        sample: PathBuf,
        /// `uniform`, `tilted` or `none`.
        #[arg(long, default_value = "uniform")]
        prior: String,
        /// Use the analytic gradient.
        #[arg(long)]
        analytic_gradient: bool,
    },
    /// Limit information by both routes (JSON).
    Info {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        scheme: SchemeSpec,
        #[arg(long)]
        n: f64,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, default_value_t = 64)]
        bins: usize,
        /// Grids averaged for the formula route (the first of the empirical
        /// replicates' grids); defaults to all of them.
        #[arg(long)]
        info_grids: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
    },
    /// Scheme diagnostics (JSON).
    Check {
        #[command(flatten)]
        grid: GridArgs,
        /// Use the clustered counterexample grid with `--n` points.
        #[arg(long, conflicts_with_all = ["grid", "scheme"])]
        clustered: bool,
        #[arg(long, default_value_t = 0.05)]
        delta1: f64,
        #[arg(long, default_value_t = 0.05)]
        delta2: f64,
        #[arg(long, default_value_t = 0.05)]
        delta3: f64,
    },
    /// Monte Carlo experiment from a JSON/TOML config.
    Mc {
        #[arg(long)]
        config: PathBuf,
        /// `csv` or `json` for `--out`; inferred from the extension otherwise.
        #[arg(long)]
        format: Option<String>,
        /// Exit with code 2 if an acceptance threshold fails.
        #[arg(long)]
        assert: bool,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    model: String,
    /// Comma-separated parameter; defaults to the model's conventional truth.
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<(DiffusionModel, Vec<f64>)> {
        let model = DiffusionModel::builtin(&self.model)?;
        let sigma = match &self.sigma {
            Some(s) => s.clone(),
            None => DiffusionModel::builtin_truth(&self.model)?,
        };
        model.param_box().check(&sigma)?;
        Ok((model, sigma))
    }
}

#[derive(Args)]
struct GridArgs {
    /// Grid JSON file.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// `poisson:λ1,λ2` or `uniform:r1,r2[,offset]`.
    #[arg(long, conflicts_with = "grid")]
    scheme: Option<SchemeSpec>,
    /// `b_n` for a generated grid.
    #[arg(long)]
    n: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
}

impl GridArgs {
    fn resolve(&self, seed: u64) -> Result<ObservationGrid> {
        match (&self.grid, &self.scheme) {
            (Some(path), _) => ObservationGrid::load_json(path),
            (None, Some(s)) => s.generate(self.n_required()?, self.horizon, seed),
            (None, None) => Err(Error::InvalidArgument("give --grid or --scheme with --n".into())),
        }
    }

    fn n_required(&self) -> Result<f64> {
        self.n.ok_or_else(|| Error::InvalidArgument("--n is required with --scheme".into()))
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })
        }
    }
}

fn to_json(v: &impl serde::Serialize) -> Result<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| Error::Parse(e.to_string()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.as_deref();
    match cli.command {
        Command::Simulate { model, grid, grid_out } => {
            let (m, sigma) = model.resolve()?;
            let g = grid.resolve(seed)?;
            if let Some(p) = grid_out {
                g.save_json(p)?;
            }
            let sample = observe(&simulate_path(&m, &sigma, &g, None, seed)?, &g)?;
            let mut buf = Vec::new();
            sample.write_csv_to(&mut buf)?;
            write_output(out, &String::from_utf8_lossy(&buf))?;
        }
        Command::Estimate { model, grid, sample, prior, analytic_gradient } => {
            let m = DiffusionModel::builtin(&model)?;
            let g = ObservationGrid::load_json(&grid)?;
            let s = NonsyncSample::read_csv(g, &sample)?;
            let mut engine = QuasiLikEngine::new(m, s);
            if analytic_gradient {
                engine = engine.with_grad_mode(GradMode::Analytic)?;
            }
            let prior = if prior == "none" { None } else { Some(Prior::from_name(&prior)?) };
            let (outcome, _) = estimate(&engine, &EstimateOptions { prior, ..Default::default() })?;
            write_output(out, &to_json(&outcome)?)?;
        }
        Command::Info { model, scheme, n, reps, bins, info_grids, horizon } => {
            let (m, sigma) = model.resolve()?;
            let grids = (0..info_grids.unwrap_or(reps).max(1))
                .map(|k| scheme.generate(n, horizon, replicate_seed(seed, k as u64)))
                .collect::<Result<Vec<_>>>()?;
            let constant = m.is_constant();
            let path = if constant { None } else { Some(simulate_path(&m, &sigma, &grids[0], None, seed)?) };
            let coeff = path.as_ref().map_or(CoeffPath::Constant, CoeffPath::Simulated);
            let (formula, info) = gamma_formula_on(&m, &sigma, &grids, bins, coeff)?;
            let empirical = gamma_empirical(&m, &sigma, |s| scheme.generate(n, horizon, s), reps, seed)?;
            let report = json!({
                "model": m.name(),
                "sigma_star": sigma,
                "scheme": scheme.to_string(),
                "n": n,
                "formula": formula,
                "empirical": empirical,
                "identity_residual": info.identity_residual(),
                "info_grids": info.grids(),
                "coverage": info.coverage(),
            });
            write_output(out, &to_json(&report)?)?;
        }
        Command::Check { grid, clustered, delta1, delta2, delta3 } => {
            let g = if clustered {
                gen_clustered_grid(grid.n_required()? as usize, grid.horizon)?
            } else {
                grid.resolve(seed)?
            };
            let diag = check_a2(&g, A2Deltas::new(delta1, delta2, delta3)?)?;
            write_output(out, &to_json(&diag)?)?;
        }
        Command::Mc { config, format, assert } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.timing |= cli.timing;
            let report = run_mc(&cfg)?;
            if let Some(p) = &cfg.outputs.csv {
                emit_report(&report, ReportFormat::Csv, p)?;
            }
            if let Some(p) = &cfg.outputs.json {
                emit_report(&report, ReportFormat::Json, p)?;
            }
            if let Some(p) = out {
                let fmt = match format {
                    Some(f) => f.parse()?,
                    None if p.extension().is_some_and(|e| e == "json") => ReportFormat::Json,
                    None => ReportFormat::Csv,
                };
                emit_report(&report, fmt, p)?;
            }
            let summary = json!({ "levels": report.levels, "ladder": report.ladder });
            let checks = check_thresholds(&report);
            let mut text = to_json(&summary)?;
            if assert {
                for (label, ok) in &checks {
                    text.push_str(&format!("{} {label}\n", if *ok { "PASS" } else { "FAIL" }));
                }
            }
            if out.is_none() || cfg.outputs.csv.is_some() || cfg.outputs.json.is_some() || assert {
                print!("{text}");
            }
            if assert && checks.iter().any(|c| !c.1) {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
