//! `mgb` — cohort simulation, conformal calibration, bound retrieval and
//! coverage evaluation from the command line.
//!
//! Every failure path prints a single machine-greppable line of the form
//! `MGB-E<nn>: <message>` to standard error, where `<nn>` is also the exit
//! code: 2 usage, 3 I/O, 4 unknown entity, 5 missing ground truth,
//! 6 degenerate statistics.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use mgb::cohort::{patient_dir_name, CohortConfig, CohortError};
use mgb::conformal::{calibrate_offset, conformal_rank, predict_interval, ConformalError};
use mgb::evaluation::{
    loo_coverage, marginal_coverage_mc, paired_t_test, pixelwise_coverage, CoverageMethod,
    CoverageReport, EvalError,
};
use mgb::io::reports::{coverage_csv, coverage_csv_mc, write_json, TTestJson};
use mgb::io::{
    load_cohort, load_manifest, read_calibration, read_float_column, write_calibration,
    write_cohort, IoError, IntervalJson, RetrievalJson,
};
use mgb::metrics::{MetricError, MetricSet, MetricSpec};
use mgb::retrieval::{partition_inliers_outliers, retrieval_report, retrieve_bound_volumes,
    RetrievalError};

const VERSION_LINE: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (volume format MGB1 v1, mask format MGM1 v1, cohort layout v1)"
);

#[derive(Parser)]
#[command(name = "mgb", version = VERSION_LINE)]
#[command(about = "Metric-guided reconstruction bounds via conformal prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort directory
    Simulate(SimulateArgs),
    /// Calibrate the conformal offset for one metric
    Calibrate(CalibrateArgs),
    /// Prediction interval, bound retrieval and inlier/outlier partition
    /// for one patient
    PredictRetrieve(PredictRetrieveArgs),
    /// Coverage evaluation (leave-one-out, pixel-wise baseline, or Monte
    /// Carlo)
    Evaluate(EvaluateArgs),
    /// Paired two-sided t-test between two single-column files
    Ttest(TtestArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of patients
    #[arg(long, default_value_t = 20)]
    patients: usize,
    /// Reconstructions per patient (at least 2)
    #[arg(long, default_value_t = 10)]
    recons: usize,
    /// Grid size as X,Y,Z
    #[arg(long, default_value = "64,64,64", value_parser = parse_dims)]
    dims: [usize; 3],
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// White-noise standard deviation before smoothing
    #[arg(long, default_value_t = 0.45)]
    noise: f64,
    /// Box-filter radius in voxels
    #[arg(long, default_value_t = 2)]
    smooth: usize,
    /// Per-axis shift standard deviation in voxels
    #[arg(long, default_value_t = 0.3)]
    shift: f64,
    /// Global intensity jitter standard deviation
    #[arg(long, default_value_t = 0.03)]
    jitter: f64,
    /// Output cohort directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    cohort: PathBuf,
    /// Metric spec: region_max:<organ> | d_at_v:<x>:<organ> |
    /// v_above:<t>:<organ> | region_volume:<organ>
    #[arg(long)]
    metric: String,
    #[arg(long)]
    alpha: f64,
    /// Patient id to leave out of calibration
    #[arg(long)]
    exclude_patient: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictRetrieveArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    patient: usize,
    #[arg(long)]
    metric: String,
    /// calib.json produced by `calibrate`
    #[arg(long)]
    calib: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvaluateMode {
    Loo,
    Pixelwise,
    Mc,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    metric: String,
    #[arg(long)]
    alpha: f64,
    #[arg(long, value_enum)]
    mode: EvaluateMode,
    /// Monte Carlo trial count (mc mode only)
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TtestArgs {
    /// First single-column value file
    #[arg(long)]
    a: PathBuf,
    /// Second single-column value file
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn unknown(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }
}

impl From<IoError> for CliError {
    fn from(err: IoError) -> Self {
        match err {
            IoError::Metric(e) => e.into(),
            IoError::Cohort(e) => e.into(),
            other => Self { code: 3, message: other.to_string() },
        }
    }
}

impl From<MetricError> for CliError {
    fn from(err: MetricError) -> Self {
        match err {
            MetricError::UnknownRegion(_) | MetricError::InvalidSpec(_) => {
                Self { code: 4, message: err.to_string() }
            }
            other => Self { code: 3, message: other.to_string() },
        }
    }
}

impl From<CohortError> for CliError {
    fn from(err: CohortError) -> Self {
        match err {
            CohortError::InvalidConfig(_) => Self::usage(err.to_string()),
            CohortError::Metric(e) => e.into(),
            other => Self { code: 3, message: other.to_string() },
        }
    }
}

impl From<ConformalError> for CliError {
    fn from(err: ConformalError) -> Self {
        Self::usage(err.to_string())
    }
}

impl From<RetrievalError> for CliError {
    fn from(err: RetrievalError) -> Self {
        Self { code: 6, message: err.to_string() }
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        match err {
            EvalError::GroundTruthRequired => Self { code: 5, message: err.to_string() },
            EvalError::UnknownMetric(_) => Self::unknown(err.to_string()),
            EvalError::DegenerateDifferences => Self { code: 6, message: err.to_string() },
            EvalError::LengthMismatch(..) | EvalError::TooFewPairs | EvalError::CohortTooSmall => {
                Self::usage(err.to_string())
            }
            EvalError::Conformal(e) => e.into(),
            EvalError::Metric(e) => e.into(),
            EvalError::Cohort(e) => e.into(),
            EvalError::Retrieval(e) => e.into(),
            other => Self { code: 3, message: other.to_string() },
        }
    }
}

fn parse_dims(text: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected X,Y,Z, got {text:?}"));
    }
    let mut dims = [0usize; 3];
    for (slot, part) in dims.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|_| format!("bad dimension {part:?}"))?;
    }
    Ok(dims)
}

fn parse_metric(text: &str) -> Result<MetricSpec, CliError> {
    text.parse::<MetricSpec>().map_err(|e| CliError::unknown(e.to_string()))
}

fn patient_metric_set<'a>(
    cohort: &'a mgb::Cohort,
    patient: usize,
    metric_name: &str,
) -> Result<&'a MetricSet, CliError> {
    let record = cohort
        .patients
        .iter()
        .find(|p| p.id == patient)
        .ok_or_else(|| CliError::unknown(format!("unknown patient: {}", patient_dir_name(patient))))?;
    record
        .estimated_for(metric_name)
        .ok_or_else(|| CliError::unknown(format!("unknown metric: {metric_name}")))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = CohortConfig {
        n_patients: args.patients,
        n_recons: args.recons,
        dims: args.dims,
        spacing: [1.0, 1.0, 1.0],
        seed: args.seed,
        noise_sigma: args.noise,
        smoothing_radius: args.smooth,
        shift_sigma: args.shift,
        intensity_jitter_sigma: args.jitter,
    };
    let cohort = mgb::cohort::generate_cohort(&cfg)?;
    write_cohort(&args.out, &cohort)?;
    println!("wrote cohort: {} patients x {} recons at {:?} -> {}",
        cfg.n_patients, cfg.n_recons, cfg.dims, args.out.display());
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let metric = parse_metric(&args.metric)?;
    let name = metric.to_string();
    let cohort = load_cohort(&args.cohort)?;
    if let Some(excluded) = args.exclude_patient {
        if !cohort.patients.iter().any(|p| p.id == excluded) {
            return Err(CliError::unknown(format!(
                "unknown patient: {}",
                patient_dir_name(excluded)
            )));
        }
    }
    let mut pairs: Vec<(&MetricSet, f64)> = Vec::new();
    for patient in &cohort.patients {
        if Some(patient.id) == args.exclude_patient {
            continue;
        }
        let set = patient
            .estimated_for(&name)
            .ok_or_else(|| CliError::unknown(format!("unknown metric: {name}")))?;
        let truth = patient
            .gt_for(&name)
            .ok_or(CliError { code: 5, message: "ground truth required".to_owned() })?;
        pairs.push((set, truth));
    }
    let calib = calibrate_offset(&pairs, args.alpha)?;
    write_calibration(&args.out, &calib)?;
    println!(
        "calibrated {name}: n_p={}, q={}, adjusted_level={}{}",
        calib.n_calibration,
        calib.q,
        calib.adjusted_level,
        if calib.unbounded { " (unbounded)" } else { "" }
    );
    Ok(())
}

fn cmd_predict_retrieve(args: PredictRetrieveArgs) -> Result<(), CliError> {
    let metric = parse_metric(&args.metric)?;
    let name = metric.to_string();
    let cohort = load_cohort(&args.cohort)?;
    let calib = read_calibration(&args.calib)?;
    let test = patient_metric_set(&cohort, args.patient, &name)?;
    let interval = predict_interval(test, &calib)?;

    let json = if !interval.is_bounded() {
        RetrievalJson::unbounded(&interval, test.values.len())
    } else {
        match retrieval_report(test, &interval) {
            Ok(report) => RetrievalJson::from(&report),
            Err(RetrievalError::DegenerateInterval) => {
                // Zero-length interval: retrieval indices and the partition
                // are still well defined, the error percentages are not.
                let (lb_index, ub_index) = retrieve_bound_volumes(test, &interval)?;
                let (inliers, outliers) = partition_inliers_outliers(test, &interval);
                RetrievalJson {
                    interval: IntervalJson::from(&interval),
                    lb_index: Some(lb_index),
                    ub_index: Some(ub_index),
                    inliers,
                    outliers,
                    lb_error_pct: None,
                    ub_error_pct: None,
                    reason: Some("degenerate interval".to_owned()),
                }
            }
            Err(other) => return Err(other.into()),
        }
    };
    write_json(&args.out, &json).map_err(CliError::from)?;
    println!(
        "patient {}: interval [{}, {}], {} inliers / {} outliers",
        patient_dir_name(args.patient),
        interval.lb,
        interval.ub,
        json.inliers.len(),
        json.outliers.len()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let metric = parse_metric(&args.metric)?;
    match args.mode {
        EvaluateMode::Loo => {
            let cohort = load_cohort(&args.cohort)?;
            let loo = loo_coverage(&cohort, &metric, args.alpha)?;
            std::fs::write(&args.out, coverage_csv(std::slice::from_ref(&loo.report)))
                .map_err(|e| CliError::from(IoError::from(e)))?;
            println!(
                "loo {}: coverage {:.2}% (target {:.2}%)",
                loo.report.metric, loo.report.coverage_pct, loo.report.adjusted_target_pct
            );
        }
        EvaluateMode::Pixelwise => {
            let cohort = load_cohort(&args.cohort)?;
            let report = pixelwise_coverage(&cohort, &metric, args.alpha)?;
            std::fs::write(&args.out, coverage_csv(std::slice::from_ref(&report)))
                .map_err(|e| CliError::from(IoError::from(e)))?;
            println!(
                "pixelwise {}: coverage {:.2}% (target {:.2}%)",
                report.metric, report.coverage_pct, report.adjusted_target_pct
            );
        }
        EvaluateMode::Mc => {
            let trials = args
                .trials
                .ok_or_else(|| CliError::usage("--trials is required in mc mode"))?;
            if trials == 0 {
                return Err(CliError::usage("--trials must be at least 1"));
            }
            let manifest = load_manifest(&args.cohort)?;
            let cfg = manifest.config;
            let mc = marginal_coverage_mc(&cfg, &metric, args.alpha, trials)?;
            let report = CoverageReport {
                method: CoverageMethod::MetricGuided,
                metric: metric.to_string(),
                alpha: args.alpha,
                n_patients: cfg.n_patients,
                covered: mc.covered,
                coverage_pct: 100.0 * mc.coverage(),
                adjusted_target_pct: 100.0 * conformal_rank(cfg.n_patients - 1, args.alpha) as f64
                    / (cfg.n_patients - 1) as f64,
            };
            std::fs::write(&args.out, coverage_csv_mc(&[(report, trials)]))
                .map_err(|e| CliError::from(IoError::from(e)))?;
            println!(
                "mc {}: coverage {:.4} over {} trials",
                metric,
                mc.coverage(),
                trials
            );
        }
    }
    Ok(())
}

fn cmd_ttest(args: TtestArgs) -> Result<(), CliError> {
    let a = read_float_column(&args.a)?;
    let b = read_float_column(&args.b)?;
    let result = paired_t_test(&a, &b)?;
    write_json(&args.out, &TTestJson::from(&result)).map_err(CliError::from)?;
    println!(
        "t = {:.6}, dof = {}, p = {:.6}",
        result.t_stat, result.dof, result.p_two_sided
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::PredictRetrieve(args) => cmd_predict_retrieve(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Ttest(args) => cmd_ttest(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            if matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            eprintln!("MGB-E02: invalid arguments");
            eprint!("{err}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("MGB-E{:02}: {}", err.code, err.message);
            ExitCode::from(err.code)
        }
    }
}
