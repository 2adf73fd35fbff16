//! The `winratio` command line: `analyze`, `simulate` and `truth`.
//!
//! Exit codes: 0 on success, 2 for usage, parse, configuration and validation
//! errors, 3 when estimation is degenerate on valid input.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::covadjust::{adjusted_if_wald, wr_adjusted};
use crate::data::{apply_sensitivity_transform, read_csv, CsvOptions, SensitivityMode};
use crate::estimators::{pocock_estimate, wr_sscore, Method, WrEstimate};
use crate::inference::{bootstrap, bt_qt_ci, bt_wald_ci, pocock_ustat_wald, sscore_if_wald, CiKind, ConfidenceInterval};
use crate::sim::{
    grid_preset, parse_grid, preset, resolve_truth, run_scenario, summaries_to_csv, true_wr_oracle, ArmParams,
    Censoring, MarX, ScenarioEntry, SimMethod, SimScenario, SimSummary,
};
use crate::{AnalysisDataset, StudyConfig, WrError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "winratio", version, about = "Win ratio estimation for a terminal event and a second endpoint")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the win ratio for one dataset and write a JSON report.
    Analyze(AnalyzeArgs),
    /// Run replicated simulations over a scenario grid.
    Simulate(SimulateArgs),
    /// Approximate the true win ratio of a scenario from full data.
    Truth(TruthArgs),
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// CSV with columns arm,time,event,y2 and optional covariates.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, required_unless_present = "config")]
    h: Option<f64>,
    #[arg(long, required_unless_present = "config")]
    tau: Option<f64>,
    /// Key-value file with `h`, `tau` and optionally `alpha`; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Covariate columns for the adjusted estimator.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "sscore,pocock")]
    methods: Vec<Method>,
    /// Interval constructions: if, bt-wald, bt-qt.
    #[arg(long, value_delimiter = ',', default_value = "if")]
    ci: Vec<CiKind>,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 1000)]
    boot: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Censoring sensitivity analyses: best, worst.
    #[arg(long, value_delimiter = ',')]
    sensitivity: Vec<String>,
    /// Offset added to a censoring time when the sensitivity analysis turns it into a death.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Build Wald intervals on the log scale.
    #[arg(long)]
    log_scale: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Grid file with `[[scenario]]` tables.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    grid: Option<PathBuf>,
    /// Scenario preset or grid preset (paper-table1, paper-full).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "WINRATIO_JOBS")]
    jobs: Option<usize>,
    /// Bootstrap replicates per dataset.
    #[arg(long)]
    boot: Option<usize>,
    /// Subjects per arm, overriding the scenarios.
    #[arg(long)]
    n: Option<usize>,
    /// sscore-if, sscore-bt-wald, sscore-bt-qt, pocock, adjusted-if.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<SimMethod>,
    /// Write `<out>.csv` and `<out>.json` instead of CSV to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TruthArgs {
    #[arg(long)]
    preset: Option<String>,
    /// Number of cross-arm pairs (accepts `1e6`).
    #[arg(long, value_parser = parse_count, default_value = "1000000")]
    pairs: usize,
    /// Full-data subjects per arm; defaults to the number of pairs.
    #[arg(long = "super", value_parser = parse_count)]
    n_super: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    scenario: ScenarioFlags,
}

#[derive(Args, Debug, Default)]
struct ScenarioFlags {
    /// Event-time gamma shapes, arm a then arm b.
    #[arg(long, value_delimiter = ',', conflicts_with = "preset")]
    alpha_t: Vec<f64>,
    /// Event-time gamma rates.
    #[arg(long, value_delimiter = ',')]
    lambda_t: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    mu: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = 90.0)]
    horizon: f64,
    #[arg(long, default_value_t = 50.0)]
    tau: f64,
    /// Add the binary covariate with these `delta_y,delta_r` effects.
    #[arg(long, value_delimiter = ',')]
    marx: Vec<f64>,
}

fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 1e15 => Ok(x as usize),
        _ => Err(format!("`{s}` is not a non-negative integer")),
    }
}

/// Parse `args` (including the program name), run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Truth(a) => cmd_truth(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_degenerate() {
                EXIT_DEGENERATE
            } else {
                EXIT_USAGE
            }
        }
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> crate::Result<T> {
    match jobs {
        Some(0) => Err(WrError::InvalidArgument("--jobs must be at least 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| WrError::InvalidArgument(e.to_string())),
        None => Ok(f()),
    }
}

fn write_output(out: Option<&PathBuf>, text: &str) -> crate::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub n_a: usize,
    pub n_b: usize,
    pub censored_pct: f64,
    pub missing_among_survivors_pct: f64,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodBlock {
    pub method: Method,
    pub theta: Option<f64>,
    pub p_win: Option<f64>,
    pub p_loss: Option<f64>,
    /// Variance of the estimate from the influence function (or U-statistic for Pocock).
    pub variance: Option<f64>,
    pub cis: Vec<ConfidenceInterval>,
    /// Set when the estimate or one of its intervals could not be computed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityBlock {
    pub mode: SensitivityMode,
    pub epsilon: f64,
    pub theta: Option<f64>,
    pub p_win: Option<f64>,
    pub p_loss: Option<f64>,
    pub cis: Vec<ConfidenceInterval>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub data: String,
    pub config: StudyConfig,
    pub methods: Vec<Method>,
    pub ci: Vec<CiKind>,
    pub boot: usize,
    pub seed: u64,
    pub log_scale: bool,
    pub covariates: Vec<String>,
    pub sensitivity: Vec<SensitivityMode>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub dataset: DatasetSummary,
    pub methods: Vec<MethodBlock>,
    pub sensitivity: Vec<SensitivityBlock>,
    pub provenance: Provenance,
}

struct Analysis<'a> {
    ci: &'a [CiKind],
    boot: usize,
    seed: u64,
    log_scale: bool,
    covariates: Vec<usize>,
}

impl Analysis<'_> {
    fn point(&self, ds: &AnalysisDataset, method: Method) -> crate::Result<WrEstimate> {
        match method {
            Method::Sscore => wr_sscore(ds),
            Method::Pocock => pocock_estimate(ds).map(|(e, _)| e),
            Method::Adjusted => wr_adjusted(ds, &self.covariates),
        }
    }

    /// Point estimate plus every requested interval. Returns the first error
    /// met after the point estimate alongside what was computed.
    fn estimate(&self, ds: &AnalysisDataset, method: Method) -> (Option<WrEstimate>, Vec<ConfidenceInterval>, Option<WrError>) {
        let alpha = ds.config().alpha;
        let mut base = match self.point(ds, method) {
            Ok(e) => e,
            Err(e) => return (None, Vec::new(), Some(e)),
        };
        let mut cis = Vec::new();
        let mut err = None;
        let mut boot = None;
        for &kind in self.ci {
            let ci = match kind {
                CiKind::IfWald | CiKind::UstatWald => {
                    let r = match method {
                        Method::Sscore => sscore_if_wald(ds, self.log_scale).map(|r| r.0),
                        Method::Pocock => pocock_ustat_wald(ds, self.log_scale).map(|r| r.0),
                        Method::Adjusted => adjusted_if_wald(ds, &self.covariates, self.log_scale).map(|r| r.0),
                    };
                    r.map(|e| {
                        base.variance = e.variance;
                        e.ci.expect("Wald CI")
                    })
                }
                CiKind::BtWald | CiKind::BtQt => {
                    let reps = boot.get_or_insert_with(|| {
                        bootstrap(ds, |d| self.point(d, method).map(|e| e.theta), self.boot, self.seed)
                            .map(|b| b.replicates)
                    });
                    match reps {
                        Ok(r) if kind == CiKind::BtWald => bt_wald_ci(r, base.theta, alpha),
                        Ok(r) => bt_qt_ci(r, alpha),
                        Err(e) => Err(e.duplicate()),
                    }
                }
            };
            match ci {
                Ok(c) => cis.push(c),
                Err(e) => {
                    err.get_or_insert(e);
                }
            }
        }
        base.ci = cis.first().copied();
        (Some(base), cis, err)
    }
}

fn parse_sensitivity(items: &[String]) -> crate::Result<Vec<SensitivityMode>> {
    items
        .iter()
        .map(|s| match s.trim().to_ascii_lowercase().as_str() {
            "best" | "best-case" => Ok(SensitivityMode::BestCase),
            "worst" | "worst-case" => Ok(SensitivityMode::WorstCase),
            other => Err(WrError::InvalidArgument(format!(
                "unknown sensitivity mode `{other}` (expected best or worst)"
            ))),
        })
        .collect()
}

fn cmd_analyze(a: AnalyzeArgs) -> crate::Result<i32> {
    let base = match &a.config {
        Some(p) => Some(StudyConfig::from_kv_str(&std::fs::read_to_string(p)?)?),
        None => None,
    };
    let pick = |flag: Option<f64>, from_cfg: Option<f64>, name: &str| {
        flag.or(from_cfg)
            .ok_or_else(|| WrError::Config(format!("`{name}` is required (flag or --config)")))
    };
    let config = StudyConfig::new(
        pick(a.h, base.map(|c| c.h), "h")?,
        pick(a.tau, base.map(|c| c.tau), "tau")?,
        a.alpha.or(base.map(|c| c.alpha)).unwrap_or(StudyConfig::DEFAULT_ALPHA),
    )?;
    if a.methods.contains(&Method::Adjusted) && a.covariates.is_empty() {
        return Err(WrError::InvalidArgument(
            "--methods adjusted needs covariate columns; pass them with --covariates x1,x2".into(),
        ));
    }
    if a.methods.is_empty() || a.ci.is_empty() {
        return Err(WrError::InvalidArgument("--methods and --ci must not be empty".into()));
    }
    let sensitivity = parse_sensitivity(&a.sensitivity)?;
    if !(a.epsilon.is_finite() && a.epsilon >= 0.0) {
        return Err(WrError::InvalidArgument("--epsilon must be finite and non-negative".into()));
    }
    let ds = read_csv(
        &a.data,
        config,
        &CsvOptions {
            covariates: Some(a.covariates.clone()),
        },
    )?;
    let seed = if a.ci.iter().any(|k| matches!(k, CiKind::BtWald | CiKind::BtQt)) {
        resolve_seed(a.seed)
    } else {
        a.seed.unwrap_or(0)
    };
    let analysis = Analysis {
        ci: &a.ci,
        boot: a.boot,
        seed,
        log_scale: a.log_scale,
        covariates: (0..ds.covariate_dim()).collect(),
    };

    let mut degenerate = None;
    let mut methods = Vec::new();
    for &m in &a.methods {
        let (est, cis, err) = analysis.estimate(&ds, m);
        if let Some(e) = &err {
            if !e.is_degenerate() {
                return Err(err.expect("checked"));
            }
            eprintln!("warning: {m}: {e}");
        }
        methods.push(MethodBlock {
            method: m,
            theta: est.as_ref().map(|e| e.theta),
            p_win: est.as_ref().map(|e| e.p_win),
            p_loss: est.as_ref().map(|e| e.p_loss),
            variance: est.as_ref().and_then(|e| e.variance),
            cis,
            error: err.as_ref().map(ToString::to_string),
        });
        degenerate = degenerate.or(err);
    }
    if !a.methods.contains(&Method::Sscore) {
        if let Ok(e) = wr_sscore(&ds) {
            methods.insert(
                0,
                MethodBlock {
                    method: Method::Sscore,
                    theta: Some(e.theta),
                    p_win: Some(e.p_win),
                    p_loss: Some(e.p_loss),
                    variance: None,
                    cis: Vec::new(),
                    error: None,
                },
            );
        }
    }

    let sscore_only = Analysis {
        covariates: Vec::new(),
        ..analysis
    };
    let sens_blocks = sensitivity
        .iter()
        .map(|&mode| {
            let t = apply_sensitivity_transform(&ds, mode, a.epsilon);
            let (est, cis, err) = sscore_only.estimate(&t, Method::Sscore);
            SensitivityBlock {
                mode,
                epsilon: a.epsilon,
                theta: est.as_ref().map(|e| e.theta),
                p_win: est.as_ref().map(|e| e.p_win),
                p_loss: est.as_ref().map(|e| e.p_loss),
                cis,
                error: err.map(|e| e.to_string()),
            }
        })
        .collect();

    let report = AnalysisReport {
        dataset: DatasetSummary {
            n_a: ds.n_a(),
            n_b: ds.n_b(),
            censored_pct: ds.censored_pct(),
            missing_among_survivors_pct: ds.missing_among_survivors_pct(),
            covariates: a.covariates.clone(),
        },
        methods,
        sensitivity: sens_blocks,
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            data: a.data.display().to_string(),
            config,
            methods: a.methods.clone(),
            ci: a.ci.clone(),
            boot: a.boot,
            seed,
            log_scale: a.log_scale,
            covariates: a.covariates,
            sensitivity,
            epsilon: a.epsilon,
        },
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_output(a.out.as_ref(), &json)?;
    Ok(if degenerate.is_some() { EXIT_DEGENERATE } else { EXIT_OK })
}

#[derive(Serialize)]
struct SimulateJson<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    reps: usize,
    boot: usize,
    methods: &'a [SimMethod],
    scenarios: Vec<ScenarioJson<'a>>,
}

#[derive(Serialize)]
struct ScenarioJson<'a> {
    scenario: &'a SimScenario,
    summary: &'a SimSummary,
}

pub const DEFAULT_REPS: usize = 500;
pub const DEFAULT_SIM_BOOT: usize = 500;

fn cmd_simulate(a: SimulateArgs) -> crate::Result<i32> {
    let (mut entries, grid_reps, grid_seed, grid_boot, grid_methods) = match (&a.grid, &a.preset) {
        (Some(p), _) => {
            let g = parse_grid(&std::fs::read_to_string(p)?)?;
            (g.scenarios, g.reps, g.seed, g.boot, g.methods)
        }
        (None, Some(name)) => match grid_preset(name) {
            Some(v) => (v, None, None, None, None),
            None => (vec![preset(name)?], None, None, None, None),
        },
        (None, None) => unreachable!("clap requires --grid or --preset"),
    };
    let reps = a.reps.or(grid_reps).unwrap_or(DEFAULT_REPS);
    if reps == 0 {
        return Err(WrError::InvalidArgument("--reps must be at least 1".into()));
    }
    let boot = a.boot.or(grid_boot).unwrap_or(DEFAULT_SIM_BOOT);
    let methods: Vec<SimMethod> = if !a.methods.is_empty() {
        a.methods.clone()
    } else if let Some(m) = grid_methods {
        m.iter().map(|s| s.parse()).collect::<crate::Result<_>>()?
    } else {
        vec![SimMethod::SscoreIf, SimMethod::Pocock, SimMethod::AdjustedIf]
    };
    if let Some(n) = a.n {
        for e in &mut entries {
            e.scenario.n_a = n;
            e.scenario.n_b = n;
        }
    }
    let seed = resolve_seed(a.seed.or(grid_seed));
    let summaries = with_jobs(a.jobs, || {
        entries
            .iter()
            .map(|e: &ScenarioEntry| {
                let truth = resolve_truth(e, seed)?;
                run_scenario(&e.scenario, &methods, reps, seed, boot, truth)
            })
            .collect::<crate::Result<Vec<_>>>()
    })??;
    let csv = summaries_to_csv(&summaries)?;
    match &a.out {
        None => print!("{csv}"),
        Some(prefix) => {
            let json = SimulateJson {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                seed,
                reps,
                boot,
                methods: &methods,
                scenarios: entries
                    .iter()
                    .zip(&summaries)
                    .map(|(e, s)| ScenarioJson {
                        scenario: &e.scenario,
                        summary: s,
                    })
                    .collect(),
            };
            let with_ext = |ext: &str| {
                let mut p = prefix.clone().into_os_string();
                p.push(ext);
                PathBuf::from(p)
            };
            std::fs::write(with_ext(".csv"), &csv)?;
            std::fs::write(
                with_ext(".json"),
                serde_json::to_string_pretty(&json).expect("summary serializes") + "\n",
            )?;
        }
    }
    Ok(EXIT_OK)
}

fn scenario_from_flags(f: &ScenarioFlags) -> crate::Result<SimScenario> {
    let pair = |v: &[f64], name: &str| -> crate::Result<[f64; 2]> {
        match v {
            [a, b] => Ok([*a, *b]),
            _ => Err(WrError::InvalidArgument(format!("--{name} takes two values (arm a, arm b)"))),
        }
    };
    let (at, lt, mu, sg) = (
        pair(&f.alpha_t, "alpha-t")?,
        pair(&f.lambda_t, "lambda-t")?,
        pair(&f.mu, "mu")?,
        pair(&f.sigma, "sigma")?,
    );
    let arm = |z: usize| ArmParams {
        alpha_t: at[z],
        lambda_t: lt[z],
        mu: mu[z],
        sigma: sg[z],
        miss_prob: 0.0,
    };
    let marx = if f.marx.is_empty() {
        None
    } else {
        let m = pair(&f.marx, "marx")?;
        Some(MarX {
            delta_y: m[0],
            delta_r: m[1],
        })
    };
    let sc = SimScenario {
        id: "custom".into(),
        n_a: 1,
        n_b: 1,
        arms: [arm(0), arm(1)],
        censoring: Censoring::None,
        h: f.horizon,
        tau: f.tau,
        marx,
    };
    sc.validate()?;
    Ok(sc)
}

fn cmd_truth(a: TruthArgs) -> crate::Result<i32> {
    let sc = match &a.preset {
        Some(name) => preset(name)?.scenario,
        None if !a.scenario.alpha_t.is_empty() => scenario_from_flags(&a.scenario)?,
        None => {
            return Err(WrError::InvalidArgument(
                "give --preset or the scenario flags --alpha-t, --lambda-t, --mu, --sigma".into(),
            ))
        }
    };
    if a.pairs == 0 {
        return Err(WrError::InvalidArgument("--pairs must be at least 1".into()));
    }
    let seed = resolve_seed(a.seed);
    let n_super = a.n_super.unwrap_or(a.pairs);
    let t = with_jobs(a.jobs, || true_wr_oracle(&sc, n_super, a.pairs, seed))??;
    println!("scenario: {}", sc.id);
    println!("theta: {:.6}", t.theta);
    println!("mc_se: {:.6}", t.mc_se);
    println!("wins: {}", t.wins);
    println!("losses: {}", t.losses);
    println!("pairs: {}", t.pairs);
    Ok(EXIT_OK)
}
