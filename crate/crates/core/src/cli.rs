//! Command-line front end: `cfsurv estimate` and `cfsurv simulate`.
//!
//! Settings come from flags, then an optional `--config` file, then
//! built-in defaults. Exit codes: 0 on success, 2 for usage errors, 1 for
//! failures during the run.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{layered, split_list, ConfigFile};
use crate::ensemble::SuperLearnerConfig;
use crate::error::{Error, Result};
use crate::estimator::{estimate_curve, fit_nuisances, write_covariance_csv, write_curves_csv, CurveEstimate, NuisanceConfig, DEFAULT_ETA};
use crate::inference::{
    contrast, contrast_band, contrast_rows, curve_rows, default_band_interval, equality_test, pointwise_cis, rmst,
    uniform_band, write_results_csv, write_test_report, BandOptions, BandStyle, ContrastEstimate, ContrastKind,
    UniformBand, WeightKind, DEFAULT_PATHS,
};
use crate::learners::{PropensitySpec, SurvivalLearner, SurvivalLearnerSpec};
use crate::plot::{render, LineStyle, Panel, Series};
use crate::simulation::{run_study, write_summary_csv, DgpConfig, McSummary, StudyConfig, StudyEstimator};
use crate::survdata::{event_grid, load_csv, make_folds, ColumnSpec};

#[derive(Parser, Debug)]
#[command(name = "cfsurv", version, about = "Cross-fitted doubly-robust counterfactual survival curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate both arms' survival curves, contrasts and tests from a CSV.
    Estimate(EstimateArgs),
    /// Run the Monte Carlo study.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Cross-fitting folds.
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Truncation constant: propensity and censoring predictions are floored at 1/eta.
    #[arg(long)]
    eta: Option<f64>,
    /// Gaussian sample paths for bands and tests.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// `key = value` settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated covariate column names.
    #[arg(long)]
    covariates: Option<String>,
    #[arg(long)]
    treatment: Option<String>,
    #[arg(long)]
    time: Option<String>,
    #[arg(long)]
    event: Option<String>,
    /// Time horizon.
    #[arg(long)]
    tau: Option<f64>,
    /// Uniform band style: fixed or variable.
    #[arg(long)]
    band: Option<String>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    /// Survival candidates, e.g. `km,cox.int,exp@0,1`; separate learners with `;` when subsets use commas.
    #[arg(long)]
    s_learners: Option<String>,
    #[arg(long)]
    g_learners: Option<String>,
    #[arg(long)]
    propensity: Option<String>,
    /// Equality-test weight: uniform or integrated_events.
    #[arg(long)]
    weight: Option<String>,
}

#[derive(Args, Debug, Default)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated sample sizes.
    #[arg(long)]
    n_list: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// Full-scale study: 1000 replicates and n = 500, 750, ..., 1500.
    #[arg(long)]
    full: bool,
    /// Bootstrap resamples for the Cox comparator.
    #[arg(long)]
    boot: Option<usize>,
}

const ESTIMATE_KEYS: &[&str] = &[
    "folds", "alpha", "eta", "paths", "seed", "out", "threads", "data", "covariates", "treatment", "time", "event",
    "tau", "band", "t0", "t1", "s_learners", "g_learners", "propensity", "weight",
];
const SIMULATE_KEYS: &[&str] = &["folds", "alpha", "eta", "paths", "seed", "out", "threads", "n_list", "reps", "full", "boot"];

/// Fully resolved settings for `estimate`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: PathBuf,
    pub columns: ColumnSpec,
    pub tau: f64,
    pub folds: usize,
    pub alpha: f64,
    pub eta: f64,
    pub band: BandStyle,
    pub t0: Option<f64>,
    pub t1: Option<f64>,
    pub paths: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub s_learners: Vec<SurvivalLearnerSpec>,
    pub g_learners: Vec<SurvivalLearnerSpec>,
    pub propensity: Vec<PropensitySpec>,
    pub weight: WeightKind,
}

/// Fully resolved settings for `simulate`.
#[derive(Debug, Clone)]
pub struct SimulateConfig {
    pub ns: Vec<usize>,
    pub reps: usize,
    pub folds: usize,
    pub alpha: f64,
    pub eta: f64,
    pub paths: usize,
    pub boot: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

/// Learner lists: `;` separates entries when present, otherwise a comma
/// does unless it starts a covariate index (`exp@0,1`).
fn split_learners(s: &str) -> Vec<String> {
    if s.contains(';') {
        return s.split(';').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect();
    }
    let mut out: Vec<String> = Vec::new();
    for part in split_list(s) {
        let is_index = part.chars().all(|c| c.is_ascii_digit());
        match out.last_mut() {
            Some(prev) if is_index && prev.contains('@') => {
                prev.push(',');
                prev.push_str(&part);
            }
            _ => out.push(part),
        }
    }
    out
}

fn parse_specs<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    let v = split_learners(s).iter().map(|p| p.parse()).collect::<Result<Vec<T>>>()?;
    if v.is_empty() {
        return Err(usage("learner list is empty"));
    }
    Ok(v)
}

fn load_file(path: &Option<PathBuf>, known: &[&str]) -> Result<ConfigFile> {
    let file = match path {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let unknown = file.unknown_keys(known);
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))));
    }
    Ok(file)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(usage(format!("--alpha must lie in (0, 0.5], got {alpha}")));
    }
    Ok(())
}

fn resolve_estimate(a: EstimateArgs) -> Result<RunConfig> {
    let file = load_file(&a.common.config, ESTIMATE_KEYS)?;
    let c = &a.common;
    let text = |flag: &Option<String>, key: &str| flag.clone().or_else(|| file.raw(key).map(String::from));
    let tau = match a.tau.map(Ok).or_else(|| file.get::<f64>("tau").transpose()) {
        Some(v) => v?,
        None => return Err(usage("--tau is required")),
    };
    if !(tau > 0.0) {
        return Err(usage("--tau must be positive"));
    }
    let data = a
        .data
        .clone()
        .or_else(|| file.raw("data").map(PathBuf::from))
        .ok_or_else(|| usage("--data is required"))?;
    if !data.is_file() {
        return Err(usage(format!("data file {} does not exist", data.display())));
    }
    let defaults = ColumnSpec::default();
    let columns = ColumnSpec {
        covariates: text(&a.covariates, "covariates").map(|s| split_list(&s)).unwrap_or_default(),
        treatment: text(&a.treatment, "treatment").unwrap_or(defaults.treatment),
        time: text(&a.time, "time").unwrap_or(defaults.time),
        event: text(&a.event, "event").unwrap_or(defaults.event),
    };
    let folds = layered(c.folds, &file, "folds", 5usize)?;
    if folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    let alpha = layered(c.alpha, &file, "alpha", 0.05)?;
    check_alpha(alpha)?;
    let eta = layered(c.eta, &file, "eta", DEFAULT_ETA)?;
    if !(eta >= 1.0) {
        return Err(usage("--eta must be at least 1"));
    }
    let band: BandStyle = text(&a.band, "band").unwrap_or_else(|| "fixed".into()).parse()?;
    let s_learners = match text(&a.s_learners, "s_learners") {
        Some(s) => parse_specs(&s)?,
        None => SurvivalLearnerSpec::default_library(),
    };
    let g_learners = match text(&a.g_learners, "g_learners") {
        Some(s) => parse_specs(&s)?,
        None => SurvivalLearnerSpec::default_library(),
    };
    let propensity = match text(&a.propensity, "propensity") {
        Some(s) => parse_specs(&s)?,
        None => PropensitySpec::default_library(),
    };
    Ok(RunConfig {
        data,
        columns,
        tau,
        folds,
        alpha,
        eta,
        band,
        t0: a.t0.map(Ok).or_else(|| file.get("t0").transpose()).transpose()?,
        t1: a.t1.map(Ok).or_else(|| file.get("t1").transpose()).transpose()?,
        paths: layered(c.paths, &file, "paths", DEFAULT_PATHS)?,
        seed: layered(c.seed, &file, "seed", 1u64)?,
        out: c.out.clone().or_else(|| file.raw("out").map(PathBuf::from)).unwrap_or_else(|| "cfsurv_out".into()),
        threads: c.threads.map(Ok).or_else(|| file.get("threads").transpose()).transpose()?,
        s_learners,
        g_learners,
        propensity,
        weight: text(&a.weight, "weight").unwrap_or_else(|| "uniform".into()).parse()?,
    })
}

fn resolve_simulate(a: SimulateArgs) -> Result<SimulateConfig> {
    let file = load_file(&a.common.config, SIMULATE_KEYS)?;
    let c = &a.common;
    let full = a.full || file.get::<bool>("full")?.unwrap_or(false);
    let n_text = a.n_list.clone().or_else(|| file.raw("n_list").map(String::from));
    let ns: Vec<usize> = match n_text {
        Some(s) => {
            let parts = split_list(&s);
            let ns = parts
                .iter()
                .map(|p| p.parse::<usize>().map_err(|_| usage(format!("invalid sample size '{p}' in --n-list"))))
                .collect::<Result<Vec<_>>>()?;
            if ns.is_empty() {
                return Err(usage("--n-list is empty"));
            }
            ns
        }
        None if full => vec![500, 750, 1000, 1250, 1500],
        None => vec![500, 1000],
    };
    let folds = layered(c.folds, &file, "folds", 5usize)?;
    if folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    if let Some(&bad) = ns.iter().find(|&&n| n < 2 * folds) {
        return Err(usage(format!("sample size {bad} is too small for {folds} folds")));
    }
    let alpha = layered(c.alpha, &file, "alpha", 0.05)?;
    check_alpha(alpha)?;
    let reps = if full { 1000 } else { layered(a.reps, &file, "reps", 200usize)? };
    if reps == 0 {
        return Err(usage("--reps must be positive"));
    }
    Ok(SimulateConfig {
        ns,
        reps,
        folds,
        alpha,
        eta: layered(c.eta, &file, "eta", DEFAULT_ETA)?,
        paths: layered(c.paths, &file, "paths", 2000usize)?,
        boot: layered(a.boot, &file, "boot", 100usize)?,
        seed: layered(c.seed, &file, "seed", 1u64)?,
        out: c.out.clone().or_else(|| file.raw("out").map(PathBuf::from)).unwrap_or_else(|| "cfsurv_sim".into()),
        threads: c.threads.map(Ok).or_else(|| file.get("threads").transpose()).transpose()?,
    })
}

fn arc_specs(v: &[SurvivalLearnerSpec]) -> Vec<Arc<dyn SurvivalLearner>> {
    v.iter().map(|s| Arc::new(s.clone()) as Arc<dyn SurvivalLearner>).collect()
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn curve_panel(est: &CurveEstimate, cis: &[crate::inference::PointwiseCI], band: &UniformBand) -> Panel {
    let mut p = Panel::new(format!("Survival under a = {}", est.arm), "time", "survival");
    let mut xs = vec![0.0];
    xs.extend_from_slice(est.grid.times());
    let with_one = |v: Vec<f64>| {
        let mut out = vec![1.0];
        out.extend(v);
        out
    };
    p.series.push(Series::line("estimate", xs.clone(), with_one(est.theta_proj.clone()), "black", LineStyle::Solid).steps());
    p.series.push(
        Series::line("pointwise CI", xs.clone(), with_one(cis.iter().map(|c| c.lower).collect()), "#1f5fa8", LineStyle::Dashed)
            .steps(),
    );
    p.series.push(
        Series::line("", xs, with_one(cis.iter().map(|c| c.upper).collect()), "#1f5fa8", LineStyle::Dashed).steps(),
    );
    p.series.push(Series::line("uniform band", band.times.clone(), band.lower.clone(), "#b5442c", LineStyle::Dotted).steps());
    p.series.push(Series::line("", band.times.clone(), band.upper.clone(), "#b5442c", LineStyle::Dotted).steps());
    p.y_range = Some((0.0, 1.0));
    p
}

fn contrast_panel(c: &ContrastEstimate, title: &str, null: f64) -> Panel {
    let mut p = Panel::new(title, "time", c.kind.as_str());
    p.series.push(Series::line("estimate", c.times.clone(), c.estimate.clone(), "black", LineStyle::Solid).steps());
    p.series.push(Series::line("pointwise CI", c.times.clone(), c.lower.clone(), "#1f5fa8", LineStyle::Dashed).steps());
    p.series.push(Series::line("", c.times.clone(), c.upper.clone(), "#1f5fa8", LineStyle::Dashed).steps());
    if let Some(b) = &c.band {
        p.series.push(Series::line("uniform band", c.times.clone(), b.lower.clone(), "#b5442c", LineStyle::Dotted).steps());
        p.series.push(Series::line("", c.times.clone(), b.upper.clone(), "#b5442c", LineStyle::Dotted).steps());
    }
    p.h_line = Some(null);
    p
}

/// Runs the full estimation pipeline and writes every artifact under
/// `cfg.out`. Returns the paths written.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = load_csv(&cfg.data, &cfg.columns, cfg.tau)?;
    let folds = make_folds(data.len(), cfg.folds, cfg.seed)?;
    let nuisance = NuisanceConfig {
        s_learners: arc_specs(&cfg.s_learners),
        g_learners: arc_specs(&cfg.g_learners),
        propensity: cfg.propensity.clone(),
        superlearner: SuperLearnerConfig {
            seed: cfg.seed,
            ..SuperLearnerConfig::default()
        },
        eta: cfg.eta,
    };
    let bundle = fit_nuisances(&data, &folds, &nuisance)?;
    let grid = event_grid(&data);
    let est0 = estimate_curve(&data, &bundle, &grid, 0)?;
    let est1 = estimate_curve(&data, &bundle, &grid, 1)?;

    let interval = match cfg.band {
        BandStyle::FixedWidth => match (cfg.t0, cfg.t1) {
            (None, None) => None,
            (t0, t1) => Some((t0.unwrap_or(0.0), t1.unwrap_or(cfg.tau))),
        },
        BandStyle::VariableWidth => {
            let (d0, d1) = default_band_interval(&data)?;
            Some((cfg.t0.unwrap_or(d0), cfg.t1.unwrap_or(d1)))
        }
    };
    let band_opts = BandOptions {
        style: cfg.band,
        alpha: cfg.alpha,
        interval,
        num_paths: cfg.paths,
        seed: cfg.seed,
    };
    let mut rows = Vec::new();
    let mut panels = Vec::new();
    for est in [&est0, &est1] {
        let cis = pointwise_cis(est, cfg.alpha)?;
        let band = uniform_band(est, &band_opts)?;
        rows.extend(curve_rows(&cis, Some(&band)));
        panels.push(curve_panel(est, &cis, &band));
    }
    let mut contrast_panels = Vec::new();
    for (k, (kind, null)) in [
        (ContrastKind::Difference, 0.0),
        (ContrastKind::SurvivalRatio, 1.0),
        (ContrastKind::RiskRatio, 1.0),
    ]
    .into_iter()
    .enumerate()
    {
        let mut c = contrast(&est0, &est1, kind, cfg.alpha)?;
        contrast_band(&mut c, cfg.band, cfg.paths, cfg.seed.wrapping_add(k as u64 + 1))?;
        rows.extend(contrast_rows(&c));
        contrast_panels.push(contrast_panel(&c, &format!("{} (a=1 vs a=0)", kind.as_str()), null));
    }
    let rm0 = rmst(&est0, cfg.alpha)?;
    let rm1 = rmst(&est1, cfg.alpha)?;
    let rmd = contrast(&est0, &est1, ContrastKind::RmstDifference, cfg.alpha)?;
    for c in [&rm0, &rm1, &rmd] {
        rows.extend(contrast_rows(c));
    }
    let test = equality_test(&data, &est0, &est1, cfg.weight, cfg.paths, cfg.seed)?;

    fs::create_dir_all(&cfg.out)?;
    let path = |name: &str| cfg.out.join(name);
    let mut written = Vec::new();
    write_curves_csv(path("curves.csv"), &[&est0, &est1])?;
    written.push(path("curves.csv"));
    for est in [&est0, &est1] {
        let name = format!("covariance_a{}.csv", est.arm);
        write_covariance_csv(path(&name), est)?;
        written.push(path(&name));
    }
    write_results_csv(path("results.csv"), &rows)?;
    written.push(path("results.csv"));
    let settings = json!({
        "n": data.len(),
        "tau": cfg.tau,
        "folds": cfg.folds,
        "alpha": cfg.alpha,
        "eta": cfg.eta,
        "band": cfg.band.to_string(),
        "band_interval": interval,
        "seed": cfg.seed,
        "truncated_fraction": [est0.truncated_fraction(), est1.truncated_fraction()],
    });
    write_test_report(path("test_report.json"), &test, settings)?;
    written.push(path("test_report.json"));
    let reports: Vec<serde_json::Value> = (0..folds.k())
        .map(|k| {
            let f = bundle.fold(k);
            json!({
                "fold": k + 1,
                "survival": f.survival_report,
                "propensity": f.propensity_report,
            })
        })
        .collect();
    write_json(&path("superlearner_weights.json"), &json!({ "folds": reports }))?;
    written.push(path("superlearner_weights.json"));
    folds.write_csv(path("folds.csv"))?;
    written.push(path("folds.csv"));
    fs::write(path("curves.svg"), render(&panels, 2))?;
    written.push(path("curves.svg"));
    fs::write(path("contrasts.svg"), render(&contrast_panels, 3))?;
    written.push(path("contrasts.svg"));
    Ok(written)
}

fn study_panels(summary: &McSummary, ns: &[usize]) -> Vec<Panel> {
    let colors = ["black", "#1f5fa8", "#b5442c"];
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let mut panels = Vec::new();
    for (metric, title, h) in [
        ("percent_bias", "Percent bias", Some(0.0)),
        ("variance", "n x variance", None),
        ("mse", "n x MSE", None),
        ("coverage", "Pointwise CI coverage", Some(0.95)),
    ] {
        let mut p = Panel::new(title, "n", metric);
        p.h_line = h;
        for est in [StudyEstimator::Cfsurv, StudyEstimator::MarginalCox] {
            for (k, param) in crate::simulation::PARAMETERS.iter().enumerate() {
                let ys: Vec<f64> = ns
                    .iter()
                    .map(|&n| {
                        summary.get(est, param, n, metric).map_or(f64::NAN, |r| {
                            if metric == "variance" || metric == "mse" {
                                r.value * n as f64
                            } else {
                                r.value
                            }
                        })
                    })
                    .collect();
                if ys.iter().all(|v| v.is_nan()) {
                    continue;
                }
                let style = if est == StudyEstimator::Cfsurv { LineStyle::Solid } else { LineStyle::Dashed };
                p.series.push(Series::line(format!("{} {param}", est.as_str()), xs.clone(), ys, colors[k], style).markers());
            }
        }
        panels.push(p);
    }
    panels
}

/// Runs the Monte Carlo study and writes the summary, per-replicate
/// records and plots under `cfg.out`.
pub fn cmd_simulate(cfg: &SimulateConfig) -> Result<Vec<PathBuf>> {
    let mut study = StudyConfig {
        dgp: DgpConfig::default(),
        ns: cfg.ns.clone(),
        reps: cfg.reps,
        seed: cfg.seed,
        alpha: cfg.alpha,
        folds: cfg.folds,
        num_paths: cfg.paths,
        num_boot: cfg.boot,
        ..StudyConfig::default()
    };
    study.nuisance.eta = cfg.eta;
    let summary = run_study(&study)?;
    fs::create_dir_all(&cfg.out)?;
    let path = |name: &str| cfg.out.join(name);
    write_summary_csv(path("mc_summary.csv"), &summary.rows)?;
    let mut wtr = csv::Writer::from_path(path("replicates.csv"))?;
    for r in &summary.records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    write_json(&path("truth.json"), &json!(summary.truth))?;
    fs::write(path("study.svg"), render(&study_panels(&summary, &cfg.ns), 2))?;
    Ok(vec![path("mc_summary.csv"), path("replicates.csv"), path("truth.json"), path("study.svg")])
}

fn install_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(usage("--threads must be positive"));
        }
        // A pool may already exist when the CLI is driven in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

enum Failure {
    Usage(String),
    Run(String),
}

fn classify(e: Error) -> Failure {
    match e {
        Error::Argument(m) | Error::Config(m) => Failure::Usage(m),
        other => Failure::Run(other.to_string()),
    }
}

fn dispatch(cli: Cli) -> std::result::Result<Vec<PathBuf>, Failure> {
    match cli.command {
        Command::Estimate(a) => {
            let cfg = resolve_estimate(a).map_err(classify)?;
            install_threads(cfg.threads).map_err(classify)?;
            cmd_estimate(&cfg).map_err(|e| Failure::Run(e.to_string()))
        }
        Command::Simulate(a) => {
            let cfg = resolve_simulate(a).map_err(classify)?;
            install_threads(cfg.threads).map_err(classify)?;
            cmd_simulate(&cfg).map_err(|e| Failure::Run(e.to_string()))
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learner_list_splitting() {
        assert_eq!(split_learners("km,exp@0,1,cox.int"), vec!["km", "exp@0,1", "cox.int"]);
        assert_eq!(split_learners("exp@0,1;cox@2"), vec!["exp@0,1", "cox@2"]);
    }

    #[test]
    fn alpha_bounds() {
        assert!(check_alpha(0.5).is_ok());
        assert!(check_alpha(0.6).is_err());
        assert!(check_alpha(0.0).is_err());
    }

    #[test]
    fn full_flag_sets_reps() {
        let cfg = resolve_simulate(SimulateArgs {
            full: true,
            reps: Some(3),
            ..SimulateArgs::default()
        })
        .unwrap();
        assert_eq!(cfg.reps, 1000);
        assert_eq!(cfg.ns, vec![500, 750, 1000, 1250, 1500]);
    }

    #[test]
    fn bad_n_list_is_usage_error() {
        let e = resolve_simulate(SimulateArgs {
            n_list: Some("100,abc".into()),
            ..SimulateArgs::default()
        })
        .unwrap_err();
        assert!(matches!(classify(e), Failure::Usage(_)));
    }

    #[test]
    fn missing_tau_exits_two() {
        assert_eq!(run(["cfsurv", "estimate", "--data", "nonexistent.csv"]), 2);
    }
}
