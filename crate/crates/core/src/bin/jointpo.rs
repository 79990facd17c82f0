use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use jointpo::data::{ColumnBindings, StratumSpec};
use jointpo::estimator::EstimatorKind;
use jointpo::fixtures::write_fixtures;
use jointpo::inference::{BootstrapPlan, CiType, ResampleMode};
use jointpo::nuisance::{FoldSpec, PropensitySpec};
use jointpo::orthogonal::LinkKind;
use jointpo::pipeline::{emit_report, run, ReportFormat, RunConfig, VsSource};
use jointpo::sim::{default_study_estimator, probe_dgp, run_study, DgpConfig, StudyConfig};
use jointpo::Error;

#[derive(Parser)]
#[command(name = "jointpo", version, about = "Joint distribution of binary potential outcomes")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "JOINTPO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the joint distribution from a CSV file.
    Estimate(Box<EstimateArgs>),
    /// Run a Monte Carlo study on the synthetic design.
    Simulate(SimulateArgs),
    /// Check first-order insensitivity of the orthogonal score to nuisance errors.
    ProbeOrthogonality(ProbeArgs),
    /// Write small example datasets and configs.
    MakeFixtures {
        #[arg(long, default_value = "fixtures")]
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Ls,
    LsAdjusted,
    /// Orthogonal estimator; the link comes from --link.
    Orthogonal,
    OrthogonalLinear,
    OrthogonalLogistic,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkArg {
    Linear,
    Logistic,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum FormatArg {
    Table,
    Json,
}

#[derive(Args)]
struct EstimateArgs {
    /// Run configuration (TOML); replaces the data and estimator flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    input: Option<PathBuf>,
    #[arg(long, default_value = "a")]
    treatment: String,
    #[arg(long, default_value = "y")]
    outcome: String,
    /// Existing column whose distinct values are the strata.
    #[arg(long, group = "strat")]
    stratum: Option<String>,
    /// Quantile bins of a column: `quartile:col`, `tercile:col`, `median:col` or `quantile:K:col`.
    #[arg(long, group = "strat")]
    stratum_from: Option<String>,
    /// Cross of discrete columns, comma separated.
    #[arg(long, group = "strat")]
    stratum_cross: Option<String>,
    #[arg(long, group = "vs")]
    vs_column: Option<String>,
    /// Predictors for a control-arm prognostic score used as V_S, comma separated.
    #[arg(long, group = "vs")]
    vs_prognostic: Option<String>,
    #[arg(long, value_enum, default_value = "ls")]
    estimator: EstimatorArg,
    #[arg(long, value_enum, default_value = "linear")]
    link: LinkArg,
    /// `known:P`, `arm-share`, `stratum-share` or `logistic`.
    #[arg(long, default_value = "stratum-share")]
    propensity: String,
    /// Cross-fitting folds (1 fits and predicts on all rows).
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0.01)]
    clip: f64,
    /// Bootstrap replicates; 0 reports sandwich intervals only.
    #[arg(long, default_value_t = 500)]
    boot_reps: usize,
    #[arg(long, value_enum, default_value = "percentile")]
    ci: CiArg,
    /// Cluster id column; the bootstrap then resamples whole clusters.
    #[arg(long)]
    cluster: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sensitivity grid CSV with columns scenario,stratum,gamma0,gamma1.
    #[arg(long)]
    gamma_grid: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum CiArg {
    Percentile,
    Normal,
}

#[derive(Args)]
struct SimulateArgs {
    /// Study configuration (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    #[arg(long, value_enum, default_value = "linear")]
    link: LinkArg,
    /// Bootstrap replicates inside each replication.
    #[arg(long)]
    boot_reps: Option<usize>,
    /// Slope on V_S in the treatment logit (0 = randomized).
    #[arg(long)]
    confounding: Option<f64>,
    /// Directory for summary.csv and estimates.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Structural link; logistic uses beta = (0, 0.5), lambda = (1, -0.5).
    #[arg(long, value_enum, default_value = "linear")]
    link: LinkArg,
    /// Step sizes, comma separated.
    #[arg(long, default_value = "1,0.5,0.25")]
    t: String,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
}

fn estimator_kind(e: EstimatorArg, link: LinkArg) -> EstimatorKind {
    match (e, link) {
        (EstimatorArg::Ls, _) => EstimatorKind::Ls,
        (EstimatorArg::LsAdjusted, _) => EstimatorKind::LsAdjusted,
        (EstimatorArg::OrthogonalLinear, _) | (EstimatorArg::Orthogonal, LinkArg::Linear) => {
            EstimatorKind::OrthogonalLinear
        }
        (EstimatorArg::OrthogonalLogistic, _) | (EstimatorArg::Orthogonal, LinkArg::Logistic) => {
            EstimatorKind::OrthogonalLogistic
        }
    }
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(|p| p.trim().to_owned()).filter(|p| !p.is_empty()).collect()
}

fn parse_stratum(args: &EstimateArgs) -> Result<StratumSpec, Error> {
    if let Some(col) = &args.stratum {
        return Ok(StratumSpec::ExistingColumn { column: col.clone() });
    }
    if let Some(cols) = &args.stratum_cross {
        return Ok(StratumSpec::FactorCross { columns: list(cols) });
    }
    if let Some(spec) = &args.stratum_from {
        let parts: Vec<&str> = spec.split(':').collect();
        let (bins, column) = match parts.as_slice() {
            ["quartile", c] => (4, *c),
            ["tercile", c] => (3, *c),
            ["median", c] => (2, *c),
            ["quantile", k, c] => (
                k.parse()
                    .map_err(|_| Error::Config(format!("bad bin count in `{spec}`")))?,
                *c,
            ),
            _ => return Err(Error::Config(format!("cannot parse --stratum-from `{spec}`"))),
        };
        return Ok(StratumSpec::QuantileBins {
            column: column.into(),
            bins,
        });
    }
    Err(Error::Config(
        "a stratum is required: --stratum, --stratum-from or --stratum-cross".into(),
    ))
}

fn parse_propensity(s: &str) -> Result<PropensitySpec, Error> {
    Ok(match s {
        "arm-share" => PropensitySpec::ArmShare,
        "stratum-share" => PropensitySpec::StratumShare,
        "logistic" => PropensitySpec::Logistic,
        other => match other.strip_prefix("known:") {
            Some(p) => PropensitySpec::Known {
                p: p.parse()
                    .map_err(|_| Error::Config(format!("bad probability in `{other}`")))?,
            },
            None => return Err(Error::Config(format!("unknown propensity `{other}`"))),
        },
    })
}

fn run_config(args: &EstimateArgs) -> Result<RunConfig, Error> {
    if let Some(path) = &args.config {
        return RunConfig::from_toml_path(path);
    }
    let input = args.input.clone().expect("clap enforces --input");
    let mut cfg = RunConfig::new(input, parse_stratum(args)?);
    cfg.bindings = ColumnBindings {
        treatment: args.treatment.clone(),
        outcome: args.outcome.clone(),
        cluster: args.cluster.clone(),
    };
    cfg.vs_source = match (&args.vs_column, &args.vs_prognostic) {
        (Some(c), _) => Some(VsSource::Column { column: c.clone() }),
        (_, Some(p)) => Some(VsSource::Prognostic { predictors: list(p) }),
        _ => None,
    };
    cfg.estimator.kind = estimator_kind(args.estimator, args.link);
    cfg.estimator.propensity = parse_propensity(&args.propensity)?;
    cfg.estimator.folds = FoldSpec::Stratified {
        k: args.folds,
        seed: args.seed,
    };
    cfg.estimator.clip = args.clip;
    if args.boot_reps > 0 {
        cfg.bootstrap = Some(BootstrapPlan {
            reps: args.boot_reps,
            mode: if args.cluster.is_some() {
                ResampleMode::Cluster
            } else {
                ResampleMode::IidRows
            },
            seed: args.seed,
            ci: match args.ci {
                CiArg::Percentile => CiType::Percentile,
                CiArg::Normal => CiType::Normal,
            },
            level: args.level,
        });
    }
    cfg.gamma_grid = args.gamma_grid.clone();
    cfg.output = args.out.clone();
    cfg.level = args.level;
    Ok(cfg)
}

fn write_output(text: &str, out: Option<&PathBuf>) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn estimate(args: EstimateArgs) -> Result<(), Error> {
    let cfg = run_config(&args)?;
    let report = run(&cfg)?;
    let format = match args.format {
        FormatArg::Table => ReportFormat::Table,
        FormatArg::Json => ReportFormat::Json,
    };
    write_output(&emit_report(&report, format), cfg.output.as_ref())
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let mut study = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => StudyConfig::default(),
    };
    if let Some(r) = args.reps {
        study.reps = r;
    }
    if let Some(n) = args.n {
        study.dgp.n = n;
    }
    if let Some(s) = args.seed {
        study.dgp.seed = s;
    }
    if let Some(e) = args.estimator {
        study.estimator = default_study_estimator();
        study.estimator.kind = estimator_kind(e, args.link);
    }
    if let Some(c) = args.confounding {
        study.dgp.treatment_v_slope = c;
        if c != 0.0 {
            study.estimator.propensity = PropensitySpec::Logistic;
        }
    }
    if let Some(b) = args.boot_reps {
        study.bootstrap = (b > 0).then(|| BootstrapPlan {
            reps: b,
            ..Default::default()
        });
    }
    let report = run_study(&study)?;
    print!("{}", report.to_table());
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        report.write_summary_csv(std::fs::File::create(dir.join("summary.csv"))?)?;
        report.write_estimates_csv(std::fs::File::create(dir.join("estimates.csv"))?)?;
    }
    Ok(())
}

fn probe(args: ProbeArgs) -> Result<(), Error> {
    let t: Vec<f64> = list(&args.t)
        .iter()
        .map(|s| s.parse().map_err(|_| Error::Config(format!("bad step `{s}`"))))
        .collect::<Result<_, _>>()?;
    let mut cfg = DgpConfig {
        n: args.n,
        seed: args.seed,
        ..Default::default()
    };
    if let LinkArg::Logistic = args.link {
        cfg.structural_link = LinkKind::Logistic;
        cfg.beta = [0.0, 0.5];
        cfg.lambda = [1.0, -0.5];
    }
    let report = probe_dgp(&cfg, &t, 0.01)?;
    if args.format == FormatArg::Json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return Ok(());
    }
    println!("n = {}, link = {:?}, xi* = {:?}", report.n, report.link, report.xi);
    for (j, (m, se)) in report.score_mean.iter().zip(&report.score_se).enumerate() {
        println!("score[{j}] mean = {m:+.3e}  se = {se:.3e}  |z| = {:.2}", (m / se).abs());
    }
    println!("{:<10} {:>6} {:>10}  derivative (per coordinate)", "direction", "t", "max |z|");
    for r in &report.results {
        let d: Vec<String> = r.derivative.iter().map(|x| format!("{x:+.2e}")).collect();
        println!("{:<10} {:>6} {:>10.2}  {}", r.direction, r.t, r.max_z(), d.join(" "));
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        e if e.is_validation() => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        // only fails if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let result = match cli.command {
        Command::Estimate(a) => estimate(*a),
        Command::Simulate(a) => simulate(a),
        Command::ProbeOrthogonality(a) => probe(a),
        Command::MakeFixtures { dir } => write_fixtures(&dir).map(|paths| {
            for p in paths {
                println!("{}", p.display());
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
