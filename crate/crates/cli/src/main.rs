use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sere::evaluation::{case_study_mc, median, rmse, scenario_mc, sweep};
use sere::io::{self, fmt_f64, AppConfig, EstimateRow, TruthConfig};
use sere::simulation::Trajectory;
use sere::{KinematicOrder, Modality, RunOptions, Sere};

/// Spline-embedded recursive estimation toolkit.
#[derive(Parser)]
#[command(name = "sere", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; may name a `preset` to build on.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset used when no config file is given.
    #[arg(long, default_value = "case-study")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Replace existing output files.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn load(&self, tau: Option<f64>, gate: Option<f64>) -> Result<AppConfig> {
        let mut config = match &self.config {
            Some(path) => AppConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => AppConfig::preset(&self.preset)?,
        };
        config.apply_overrides(self.seed, tau, gate)?;
        Ok(config)
    }

    fn output(&self, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
        Ok(io::create_output(&self.out.join(name), self.force)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a truth trajectory and its measurement stream.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the filter over a stream file.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stream: PathBuf,
        /// Squared Mahalanobis gate threshold.
        #[arg(long)]
        gate: Option<f64>,
        /// Knot interval in seconds.
        #[arg(long)]
        tau: Option<f64>,
        /// Drop stale measurements instead of failing.
        #[arg(long)]
        skip_stale: bool,
    },
    /// Monte Carlo evaluation of the configured experiment.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        gate: Option<f64>,
    },
    /// Score an estimates table against a truth table.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Parameter sweep over `τ` (and `ω/ν` for scenario experiments).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: Option<usize>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => simulate(&common),
        Command::Track { common, stream, gate, tau, skip_stale } => track(&common, &stream, gate, tau, skip_stale),
        Command::Mc { common, runs, tau, gate } => monte_carlo(&common, runs, tau, gate),
        Command::Evaluate { truth, estimates, out, force } => evaluate(&truth, &estimates, &out, force),
        Command::Sweep { common, runs } => run_sweep(&common, runs),
    }
}

fn simulate(common: &Common) -> Result<()> {
    let config = common.load(None, None)?;
    let d = config.dim();
    let (truth, stream) = config.simulate(config.scenario.seed)?;
    io::write_stream(common.output("stream.csv")?, &stream.records, d)?;
    io::write_truth(common.output("truth.csv")?, &truth, d)?;
    io::write_outliers(common.output("outliers.csv")?, &stream.outliers)?;
    println!(
        "wrote {} measurements, {} truth samples, {} outliers to {}",
        stream.records.len(),
        truth.len(),
        stream.outliers.len(),
        common.out.display()
    );
    Ok(())
}

fn track(common: &Common, stream: &Path, gate: Option<f64>, tau: Option<f64>, skip_stale: bool) -> Result<()> {
    let config = common.load(tau, gate)?;
    let d = config.dim();
    let records = io::read_stream_file(stream).with_context(|| format!("reading {}", stream.display()))?;
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        bail!("stream {} has no measurements", stream.display());
    };
    let suite = config.scenario.sensor_suite(d)?;
    let mut filter = config.filter.clone();
    let has_position_fix = records.iter().any(|r| r.modality == Modality::Gps);
    if filter.init.position_guess.is_none() && !has_position_fix {
        filter.init.position_guess = Some(config.start_position()?);
    }
    let result = Sere::new(filter, d)?.track(&records, &suite, RunOptions { skip_stale }, |_, _| {})?;

    let rate = config.evaluation.query_rate_hz;
    let (lo, hi) = result.polygon.span();
    let start = first.t.max(lo);
    let end = last.t.min(hi);
    let rows = sere::simulation::rate_schedule((start, end), rate)?
        .into_iter()
        .map(|t| {
            Ok(EstimateRow {
                t,
                position: result.polygon.interpolate(t, KinematicOrder::Position)?,
                velocity: result.polygon.interpolate(t, KinematicOrder::Velocity)?,
            })
        })
        .collect::<sere::Result<Vec<_>>>()?;
    io::write_estimates(common.output("estimates.csv")?, &rows, d)?;
    io::write_control_points(common.output("control_points.csv")?, &result.polygon)?;
    io::write_steps(common.output("steps.csv")?, &result.reports)?;
    let rejected = result.reports.iter().filter(|r| !r.accepted).count();
    io::write_json(
        common.output("summary.json")?,
        &json!({
            "measurements": records.len(),
            "updates": result.reports.len(),
            "rejected": rejected,
            "skipped_stale": result.skipped.len(),
            "control_points": result.polygon.len(),
            "estimates": rows.len(),
            "tau": config.filter.tau,
        }),
    )?;
    println!(
        "tracked {} measurements ({} rejected, {} stale), {} control points",
        records.len(),
        rejected,
        result.skipped.len(),
        result.polygon.len()
    );
    Ok(())
}

fn monte_carlo(common: &Common, runs: Option<usize>, tau: Option<f64>, gate: Option<f64>) -> Result<()> {
    let config = common.load(tau, gate)?;
    let runs = runs.unwrap_or(config.evaluation.runs);
    let seed_base = config.evaluation.seed_base;
    match &config.truth {
        TruthConfig::LissajousCv { .. } => {
            let report = case_study_mc(&config.case_study()?, runs, seed_base)?;
            let header = ["t", "mean_e1", "mean_e2", "std_e1", "std_e2", "rmse", "crlb", "anees"]
                .map(String::from)
                .to_vec();
            let rows = (0..report.times.len()).map(|k| {
                vec![
                    fmt_f64(report.times[k]),
                    fmt_f64(report.mean_error[k][0]),
                    fmt_f64(report.mean_error[k][1]),
                    fmt_f64(report.error_std[k][0]),
                    fmt_f64(report.error_std[k][1]),
                    fmt_f64(report.rmse[k]),
                    fmt_f64(report.crlb[k]),
                    fmt_f64(report.anees[k]),
                ]
            });
            io::write_table(common.output("case_study.csv")?, header, rows)?;
            let (lo, hi) = report.anees_bounds;
            let in_band = report.anees.iter().filter(|a| **a >= lo && **a <= hi).count();
            let mean_anees = report.anees.iter().sum::<f64>() / report.anees.len().max(1) as f64;
            io::write_json(
                common.output("summary.json")?,
                &json!({
                    "runs": report.runs,
                    "failures": report.failures,
                    "rmse_overall": report.rmse_overall,
                    "anees_mean": mean_anees,
                    "anees_bounds": [lo, hi],
                    "anees_fraction_in_band": in_band as f64 / report.anees.len().max(1) as f64,
                }),
            )?;
            println!("{} runs, RMSE {:.4} m, mean ANEES {:.3}", report.runs, report.rmse_overall, mean_anees);
        }
        TruthConfig::Curve { .. } => {
            let report = scenario_mc(&config.scenario_experiment()?, runs, seed_base);
            let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            let header = [
                "seed",
                "rmse_sere",
                "rmse_ungated",
                "rmse_baseline",
                "outliers_injected",
                "outliers_rejected",
                "measurements_rejected",
                "records",
                "control_points",
                "baseline_states",
            ]
            .map(String::from)
            .to_vec();
            let rows = report.outcome.runs.iter().map(|(seed, r)| {
                vec![
                    seed.to_string(),
                    fmt_f64(r.rmse_sere),
                    opt(r.rmse_ungated),
                    opt(r.rmse_baseline),
                    r.outliers_injected.to_string(),
                    r.outliers_rejected.to_string(),
                    r.measurements_rejected.to_string(),
                    r.records.to_string(),
                    r.control_points.to_string(),
                    r.baseline_states.map(|n| n.to_string()).unwrap_or_default(),
                ]
            });
            io::write_table(common.output("runs.csv")?, header, rows)?;
            let failures: Vec<_> =
                report.outcome.failures.iter().map(|(s, e)| json!({"seed": s, "error": e})).collect();
            let med = |v: Vec<f64>| if v.is_empty() { None } else { Some(median(&v)) };
            io::write_json(
                common.output("summary.json")?,
                &json!({
                    "runs": report.outcome.successes(),
                    "failures": failures,
                    "median_rmse_sere": med(report.sere_rmse()),
                    "median_rmse_ungated": med(report.ungated_rmse()),
                    "median_rmse_baseline": med(report.baseline_rmse()),
                }),
            )?;
            println!(
                "{} runs, {} failures, median SERE RMSE {:.4} m",
                report.outcome.successes(),
                report.outcome.failures.len(),
                med(report.sere_rmse()).unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}

fn evaluate(truth: &Path, estimates: &Path, out: &Path, force: bool) -> Result<()> {
    let truth = io::read_truth_file(truth).with_context(|| format!("reading {}", truth.display()))?;
    let file = std::fs::File::open(estimates).with_context(|| format!("reading {}", estimates.display()))?;
    let (lo, hi) = truth.span();
    let (est, reference): (Vec<_>, Vec<_>) = io::read_estimates(file)?
        .into_iter()
        .filter(|(t, _)| *t >= lo && *t <= hi)
        .map(|(t, p)| Ok((p, truth.position(t)?)))
        .collect::<sere::Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    if est.is_empty() {
        bail!("no estimate lies inside the truth span [{lo}, {hi}]");
    }
    let metrics = rmse(&est, &reference)?;
    io::write_json(
        io::create_output(&out.join("metrics.json"), force)?,
        &json!({
            "rmse": metrics.rmse_overall,
            "rmse_per_axis": metrics.rmse_per_axis.iter().collect::<Vec<_>>(),
            "max_error": metrics.max_error,
            "samples": metrics.samples,
        }),
    )?;
    println!("RMSE {:.4} m over {} samples", metrics.rmse_overall, metrics.samples);
    Ok(())
}

fn run_sweep(common: &Common, runs: Option<usize>) -> Result<()> {
    let config = common.load(None, None)?;
    let runs = runs.unwrap_or(config.evaluation.runs);
    let seed_base = config.evaluation.seed_base;
    match &config.truth {
        TruthConfig::LissajousCv { .. } => {
            if config.evaluation.tau_sweep.is_empty() {
                bail!("evaluation.tau_sweep is empty");
            }
            let mut rows = Vec::new();
            for tau in &config.evaluation.tau_sweep {
                let mut cs = config.case_study()?;
                cs.filter.tau = *tau;
                let report = case_study_mc(&cs, runs, seed_base)?;
                let mean_anees = report.anees.iter().sum::<f64>() / report.anees.len().max(1) as f64;
                println!("tau {tau}: RMSE {:.4} m", report.rmse_overall);
                rows.push(vec![
                    fmt_f64(*tau),
                    fmt_f64(report.rmse_overall),
                    fmt_f64(mean_anees),
                    report.runs.to_string(),
                    report.failures.to_string(),
                ]);
            }
            let header = ["tau", "rmse", "anees_mean", "runs", "failures"].map(String::from).to_vec();
            io::write_table(common.output("sweep.csv")?, header, rows.into_iter())?;
        }
        TruthConfig::Curve { .. } => {
            let Some(grid) = &config.sweep else {
                bail!("the configuration has no [sweep] grid");
            };
            let cells = sweep(&config.scenario_experiment()?, grid, runs, seed_base)?;
            let header = ["ratio", "tau", "omega", "nu", "rmse_mean", "rmse_median", "runs", "failures"]
                .map(String::from)
                .to_vec();
            let rows = cells.iter().map(|c| {
                vec![
                    fmt_f64(c.ratio),
                    fmt_f64(c.tau),
                    fmt_f64(c.omega),
                    fmt_f64(c.nu),
                    fmt_f64(c.rmse_mean),
                    fmt_f64(c.rmse_median),
                    c.runs.to_string(),
                    c.failures.to_string(),
                ]
            });
            io::write_table(common.output("sweep.csv")?, header, rows)?;
            if let Some(best) = cells.iter().min_by(|a, b| a.rmse_median.total_cmp(&b.rmse_median)) {
                println!("best cell: omega/nu {} tau {} median RMSE {:.4} m", best.ratio, best.tau, best.rmse_median);
            }
        }
    }
    Ok(())
}
