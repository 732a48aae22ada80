use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mrkit::diagnostics::{self, DiagnosticsReport, ScoreMethod};
use mrkit::raps::{loss_constants, RobustLoss, HUBER_DEFAULT_K, TUKEY_DEFAULT_K};
use mrkit::sim::{run_study, SimSetup, StudyConfig, TABLE_METHOD_ORDER};
use mrkit::{aps, baselines, io, ps, raps};
use mrkit::{Method, SolverConfig};

#[derive(Parser)]
#[command(
    name = "mrkit",
    version,
    about = "Two-sample summary-data Mendelian randomization estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a causal-effect estimator to a summary-statistics file
    Fit(FitArgs),
    /// Run a Monte Carlo study over one of the six benchmark setups
    Simulate(SimulateArgs),
    /// Print the normal-expectation constants of a robust loss
    Constants(ConstantsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ps,
    Aps,
    Raps,
    Ivw,
    Egger,
    Wmedian,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    L2,
    Huber,
    Tukey,
}

impl LossArg {
    fn build(self, k: Option<f64>) -> Result<RobustLoss, mrkit::Error> {
        match self {
            LossArg::L2 => Ok(RobustLoss::l2()),
            LossArg::Huber => RobustLoss::huber(k.unwrap_or(HUBER_DEFAULT_K)),
            LossArg::Tukey => RobustLoss::tukey(k.unwrap_or(TUKEY_DEFAULT_K)),
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Estimation method
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Robust loss for RAPS
    #[arg(long, value_enum, default_value = "huber")]
    loss: LossArg,
    /// Tuning constant for the robust loss (defaults: Huber 1.345, Tukey 4.685)
    #[arg(long)]
    k: Option<f64>,
    /// Input TSV with columns snp_id, beta_exposure, se_exposure, beta_outcome, se_outcome
    #[arg(long)]
    input: PathBuf,
    /// Output JSON path
    #[arg(long)]
    out: PathBuf,
    /// Also write <PREFIX>.qq.csv and <PREFIX>.loo.csv diagnostics
    #[arg(long, value_name = "PREFIX")]
    diagnostics: Option<String>,
    /// RNG seed (bootstrap standard errors); MRKIT_SEED is used when absent
    #[arg(long)]
    seed: Option<u64>,
    /// Confidence level for the reported interval
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    /// Bootstrap resamples for the weighted-median standard error
    #[arg(long, default_value_t = 1000)]
    boot: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// Generative protocol (1..=6)
    #[arg(long)]
    setup: u8,
    /// Number of instruments
    #[arg(long)]
    p: usize,
    /// Target average instrument strength of the synthetic profile
    #[arg(long)]
    kappa: f64,
    /// Monte Carlo replications
    #[arg(long)]
    reps: usize,
    /// Study seed; MRKIT_SEED is used when absent
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated methods (ivw,egger,wmedian,ps,aps,raps); default all
    #[arg(long)]
    methods: Option<String>,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// True causal effect
    #[arg(long, default_value_t = 0.4)]
    beta0: f64,
    /// Robust loss for the RAPS rows
    #[arg(long, value_enum, default_value = "tukey")]
    loss: LossArg,
    /// Tuning constant for the robust loss
    #[arg(long)]
    k: Option<f64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Confidence level for coverage and CI length
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
}

#[derive(Args)]
struct ConstantsArgs {
    #[arg(long, value_enum)]
    loss: LossArg,
    #[arg(long)]
    k: Option<f64>,
}

fn seed_or_env(flag: Option<u64>) -> u64 {
    if let Some(s) = flag {
        return s;
    }
    std::env::var("MRKIT_SEED")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn parse_methods(list: &Option<String>) -> Result<Vec<Method>, String> {
    let Some(list) = list else {
        return Ok(TABLE_METHOD_ORDER.to_vec());
    };
    let mut requested = Vec::new();
    for token in list.split(",") {
        let m = match token.trim().to_lowercase().as_str() {
            "ivw" => Method::Ivw,
            "egger" => Method::Egger,
            "wmedian" | "median" | "w.median" => Method::WeightedMedian,
            "ps" => Method::Ps,
            "aps" => Method::Aps,
            "raps" => Method::Raps,
            other => return Err(format!("unknown method `{other}`")),
        };
        if !requested.contains(&m) {
            requested.push(m);
        }
    }
    // canonical table order regardless of how the list was written
    Ok(TABLE_METHOD_ORDER
        .iter()
        .copied()
        .filter(|m| requested.contains(m))
        .collect())
}

fn run_fit(args: &FitArgs) -> Result<(), String> {
    let data = io::read_summary_tsv(&args.input).map_err(|e| e.to_string())?;
    if !(args.ci_level > 0.0 && args.ci_level < 1.0) {
        return Err(format!("ci_level must be in (0, 1), got {}", args.ci_level));
    }
    let seed = seed_or_env(args.seed);
    let solver = SolverConfig::default();
    let loss = args.loss.build(args.k).map_err(|e| e.to_string())?;

    let mut intercept = None;
    let fit = match args.method {
        MethodArg::Ps => ps::fit_ps(&data, &solver),
        MethodArg::Aps => aps::fit_aps(&data, &solver),
        MethodArg::Raps => raps::fit_raps(&data, &loss, &solver),
        MethodArg::Ivw => baselines::fit_ivw(&data),
        MethodArg::Egger => baselines::fit_egger(&data).map(|e| {
            intercept = Some((e.intercept, e.intercept_se));
            e.fit
        }),
        MethodArg::Wmedian => baselines::fit_weighted_median(&data, args.boot, seed),
    }
    .map_err(|e| e.to_string())?;

    let kappa = diagnostics::kappa_hat(&data);
    if let Some(prefix) = &args.diagnostics {
        let score_method = match args.method {
            MethodArg::Ps | MethodArg::Ivw | MethodArg::Egger | MethodArg::Wmedian => {
                ScoreMethod::Ps
            }
            MethodArg::Aps => ScoreMethod::Aps,
            MethodArg::Raps => ScoreMethod::Raps(loss),
        };
        // residual/LOO diagnostics follow the profile-score family; for the
        // regression baselines they are computed under the PS refit
        let diag_fit = match args.method {
            MethodArg::Ivw | MethodArg::Egger | MethodArg::Wmedian => {
                ps::fit_ps(&data, &solver).map_err(|e| e.to_string())?
            }
            _ => fit.clone(),
        };
        let report = DiagnosticsReport::compute(&diag_fit, &score_method, &data, &solver)
            .map_err(|e| e.to_string())?;
        io::emit_plot_data(&report, prefix).map_err(|e| e.to_string())?;
    }
    io::write_fit_json(&fit, Some(kappa), intercept, args.ci_level, &args.out)
        .map_err(|e| e.to_string())?;
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> Result<(), String> {
    if args.reps == 0 {
        return Err("reps must be at least 1".into());
    }
    let methods = parse_methods(&args.methods)?;
    let seed = seed_or_env(args.seed);
    let setup = SimSetup::with_profile(args.setup, args.p, args.kappa, args.beta0, seed)
        .map_err(|e| e.to_string())?;
    let loss = args.loss.build(args.k).map_err(|e| e.to_string())?;
    if !(args.ci_level > 0.0 && args.ci_level < 1.0) {
        return Err(format!("ci_level must be in (0, 1), got {}", args.ci_level));
    }
    let config = StudyConfig {
        n_reps: args.reps,
        ci_level: args.ci_level,
        solver: SolverConfig::default(),
        raps_loss: loss,
        wmedian_boot: 1000,
        threads: args.threads,
    };
    let rows = run_study(&setup, &methods, &config);
    io::write_metrics_csv(&rows, &args.out).map_err(|e| e.to_string())?;
    Ok(())
}

fn run_constants(args: &ConstantsArgs) -> Result<(), String> {
    let loss = args.loss.build(args.k).map_err(|e| e.to_string())?;
    let c = loss_constants(&loss).map_err(|e| e.to_string())?;
    println!("{} {} {} {}", c.delta, c.c1, c.c2, c.c3);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Constants(args) => run_constants(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
