use serde::{Deserialize, Serialize};

use super::{ArmParams, Censoring, MarX, SimScenario};
use crate::error::{Result, WrError};

pub const DEFAULT_N: usize = 1000;
pub const DEFAULT_H: f64 = 90.0;
pub const DEFAULT_TAU: f64 = 50.0;
pub const DEFAULT_ORACLE_SIZE: usize = 1_000_000;

/// How the true win ratio of a scenario is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthSpec {
    /// Known in closed form (for example by symmetry of the two arms).
    Exact(f64),
    /// Full-data Monte Carlo oracle with this many subjects per arm and pairs.
    Oracle { n_super: usize, n_pairs: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioEntry {
    pub scenario: SimScenario,
    pub truth: TruthSpec,
}

const THETA1: [ArmParams; 2] = [
    ArmParams {
        alpha_t: 2.5,
        lambda_t: 0.04,
        mu: 10.0,
        sigma: 10.0,
        miss_prob: 0.0,
    },
    ArmParams {
        alpha_t: 2.5,
        lambda_t: 0.04,
        mu: 10.0,
        sigma: 10.0,
        miss_prob: 0.0,
    },
];

const THETA2: [ArmParams; 2] = [
    THETA1[0],
    ArmParams {
        alpha_t: 4.0,
        lambda_t: 0.10,
        mu: 20.0,
        sigma: 20.0,
        miss_prob: 0.0,
    },
];

const CENSORING: [(&str, Censoring); 5] = [
    ("nocens", Censoring::None),
    (
        "homo-low",
        Censoring::Gamma {
            alpha: [1.8, 1.8],
            lambda: [0.01, 0.01],
        },
    ),
    (
        "homo-mod",
        Censoring::Gamma {
            alpha: [1.8, 1.8],
            lambda: [0.02, 0.02],
        },
    ),
    (
        "hetero-low",
        Censoring::Gamma {
            alpha: [3.2, 1.5],
            lambda: [0.04, 0.08],
        },
    ),
    (
        "hetero-mod",
        Censoring::Gamma {
            alpha: [3.2, 1.5],
            lambda: [0.02, 0.05],
        },
    ),
];

const MISSING: [(&str, [f64; 2]); 5] = [
    ("nomiss", [0.0, 0.0]),
    ("mcar20", [0.2, 0.2]),
    ("mcar40", [0.4, 0.4]),
    ("mar20", [0.15, 0.25]),
    ("mar40", [0.3, 0.5]),
];

fn grid_cell(theta: u8, cens: &str, miss: &str) -> Option<ScenarioEntry> {
    let censoring = CENSORING.iter().find(|c| c.0 == cens)?.1;
    let probs = MISSING.iter().find(|m| m.0 == miss)?.1;
    let (mut arms, truth) = match theta {
        1 => (THETA1, TruthSpec::Exact(1.0)),
        2 => (
            THETA2,
            TruthSpec::Oracle {
                n_super: DEFAULT_ORACLE_SIZE,
                n_pairs: DEFAULT_ORACLE_SIZE,
            },
        ),
        _ => return None,
    };
    arms[0].miss_prob = probs[0];
    arms[1].miss_prob = probs[1];
    Some(ScenarioEntry {
        scenario: SimScenario {
            id: format!("paper-theta{theta}-{cens}-{miss}"),
            n_a: DEFAULT_N,
            n_b: DEFAULT_N,
            arms,
            censoring,
            h: DEFAULT_H,
            tau: DEFAULT_TAU,
            marx: None,
        },
        truth,
    })
}

/// Both arms share the outcome model, so the truth is 1; only the
/// missingness differs between arms and depends on the covariate.
fn marx() -> ScenarioEntry {
    let base = ArmParams {
        alpha_t: 2.5,
        lambda_t: 0.02,
        mu: 10.0,
        sigma: 10.0,
        miss_prob: 0.0,
    };
    ScenarioEntry {
        scenario: SimScenario {
            id: "marx".into(),
            n_a: DEFAULT_N,
            n_b: DEFAULT_N,
            arms: [
                ArmParams {
                    miss_prob: 0.1,
                    ..base
                },
                ArmParams {
                    miss_prob: 0.6,
                    ..base
                },
            ],
            censoring: Censoring::None,
            h: DEFAULT_H,
            tau: DEFAULT_TAU,
            marx: Some(MarX::default()),
        },
        truth: TruthSpec::Exact(1.0),
    }
}

/// Look up a named scenario.
///
/// Names are `paper-theta{1,2}-{censoring}-{missingness}` with censoring one of
/// `nocens`, `homo-low`, `homo-mod`, `hetero-low`, `hetero-mod` and
/// missingness one of `nomiss`, `mcar20`, `mcar40`, `mar20`, `mar40`, plus the
/// aliases `paper-theta1-clean`, `paper-theta1`, `paper-theta2` and `marx`.
pub fn preset(name: &str) -> Result<ScenarioEntry> {
    let unknown = || WrError::Config(format!("unknown scenario preset `{name}`"));
    let mut entry = match name {
        "marx" => return Ok(marx()),
        "paper-theta1-clean" | "paper-theta1" => grid_cell(1, "nocens", "nomiss"),
        "paper-theta2" => grid_cell(2, "nocens", "nomiss"),
        _ => {
            let rest = name.strip_prefix("paper-theta").ok_or_else(unknown)?;
            let theta: u8 = rest.get(..1).and_then(|t| t.parse().ok()).ok_or_else(unknown)?;
            let rest = rest.get(1..).and_then(|r| r.strip_prefix('-')).ok_or_else(unknown)?;
            let (cens, miss) = rest.rsplit_once('-').ok_or_else(unknown)?;
            grid_cell(theta, cens, miss)
        }
    }
    .ok_or_else(unknown)?;
    entry.scenario.id = name.to_string();
    Ok(entry)
}

pub fn preset_names() -> Vec<String> {
    let mut out = Vec::new();
    for theta in [1, 2] {
        for (c, _) in CENSORING {
            for (m, _) in MISSING {
                out.push(format!("paper-theta{theta}-{c}-{m}"));
            }
        }
    }
    out.extend(["paper-theta1-clean", "paper-theta1", "paper-theta2", "marx"].map(String::from));
    out
}

/// Named scenario grids: `paper-table1` (both effects, no/moderate
/// homogeneous/moderate heterogeneous censoring, none/MCAR 40%/MAR 40%
/// missingness) and `paper-full` (every paper combination).
pub fn grid_preset(name: &str) -> Option<Vec<ScenarioEntry>> {
    let (cens, miss): (Vec<&str>, Vec<&str>) = match name {
        "paper-table1" => (vec!["nocens", "homo-mod", "hetero-mod"], vec!["nomiss", "mcar40", "mar40"]),
        "paper-full" => (CENSORING.iter().map(|c| c.0).collect(), MISSING.iter().map(|m| m.0).collect()),
        _ => return None,
    };
    let mut out = Vec::new();
    for theta in [1, 2] {
        for c in &cens {
            for m in &miss {
                out.push(grid_cell(theta, c, m).expect("known names"));
            }
        }
    }
    Some(out)
}

/// A parsed grid file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFile {
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub boot: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub scenarios: Vec<ScenarioEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    reps: Option<usize>,
    seed: Option<u64>,
    boot: Option<usize>,
    methods: Option<Vec<String>>,
    #[serde(default)]
    scenario: Vec<RawScenario>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    preset: Option<String>,
    id: Option<String>,
    n: Option<usize>,
    n_a: Option<usize>,
    n_b: Option<usize>,
    alpha_t: Option<[f64; 2]>,
    lambda_t: Option<[f64; 2]>,
    mu: Option<[f64; 2]>,
    sigma: Option<[f64; 2]>,
    miss_prob: Option<[f64; 2]>,
    censor_alpha: Option<[f64; 2]>,
    censor_lambda: Option<[f64; 2]>,
    h: Option<f64>,
    tau: Option<f64>,
    marx: Option<bool>,
    delta_y: Option<f64>,
    delta_r: Option<f64>,
    truth: Option<f64>,
    oracle_pairs: Option<usize>,
    oracle_super: Option<usize>,
}

/// Parse a grid file: optional top-level `reps`, `seed`, `boot`, `methods`,
/// then one `[[scenario]]` table per scenario. A scenario either starts from
/// a `preset` and overrides fields, or lists `alpha_t`, `lambda_t`, `mu` and
/// `sigma` (each `[arm_a, arm_b]`) itself.
pub fn parse_grid(text: &str) -> Result<GridFile> {
    let raw: RawGrid = toml::from_str(text).map_err(|e| WrError::Config(e.to_string()))?;
    if raw.scenario.is_empty() {
        return Err(WrError::Config("grid file defines no [[scenario]] tables".into()));
    }
    let scenarios = raw
        .scenario
        .into_iter()
        .enumerate()
        .map(|(k, s)| build_entry(k, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(GridFile {
        reps: raw.reps,
        seed: raw.seed,
        boot: raw.boot,
        methods: raw.methods,
        scenarios,
    })
}

fn build_entry(k: usize, s: RawScenario) -> Result<ScenarioEntry> {
    let mut entry = match &s.preset {
        Some(name) => preset(name)?,
        None => {
            let need = |v: Option<[f64; 2]>, field: &str| {
                v.ok_or_else(|| WrError::Config(format!("scenario #{}: `{field}` is required without a preset", k + 1)))
            };
            let (at, lt, mu, sg) = (
                need(s.alpha_t, "alpha_t")?,
                need(s.lambda_t, "lambda_t")?,
                need(s.mu, "mu")?,
                need(s.sigma, "sigma")?,
            );
            let arm = |z: usize| ArmParams {
                alpha_t: at[z],
                lambda_t: lt[z],
                mu: mu[z],
                sigma: sg[z],
                miss_prob: 0.0,
            };
            ScenarioEntry {
                scenario: SimScenario {
                    id: format!("scenario-{}", k + 1),
                    n_a: DEFAULT_N,
                    n_b: DEFAULT_N,
                    arms: [arm(0), arm(1)],
                    censoring: Censoring::None,
                    h: DEFAULT_H,
                    tau: DEFAULT_TAU,
                    marx: None,
                },
                truth: TruthSpec::Oracle {
                    n_super: DEFAULT_ORACLE_SIZE,
                    n_pairs: DEFAULT_ORACLE_SIZE,
                },
            }
        }
    };
    let sc = &mut entry.scenario;
    if s.preset.is_some() {
        for (z, arm) in sc.arms.iter_mut().enumerate() {
            if let Some(v) = s.alpha_t {
                arm.alpha_t = v[z];
            }
            if let Some(v) = s.lambda_t {
                arm.lambda_t = v[z];
            }
            if let Some(v) = s.mu {
                arm.mu = v[z];
            }
            if let Some(v) = s.sigma {
                arm.sigma = v[z];
            }
        }
        let changes_outcome = s.alpha_t.is_some() || s.lambda_t.is_some() || s.mu.is_some() || s.sigma.is_some();
        if changes_outcome || s.marx.is_some() || s.delta_y.is_some() {
            entry.truth = TruthSpec::Oracle {
                n_super: DEFAULT_ORACLE_SIZE,
                n_pairs: DEFAULT_ORACLE_SIZE,
            };
        }
    }
    if let Some(id) = s.id {
        sc.id = id;
    }
    if let Some(n) = s.n {
        sc.n_a = n;
        sc.n_b = n;
    }
    if let Some(n) = s.n_a {
        sc.n_a = n;
    }
    if let Some(n) = s.n_b {
        sc.n_b = n;
    }
    if let Some(v) = s.miss_prob {
        sc.arms[0].miss_prob = v[0];
        sc.arms[1].miss_prob = v[1];
    }
    match (s.censor_alpha, s.censor_lambda) {
        (Some(alpha), Some(lambda)) => sc.censoring = Censoring::Gamma { alpha, lambda },
        (None, None) => {}
        _ => {
            return Err(WrError::Config(format!(
                "scenario #{}: censor_alpha and censor_lambda must be given together",
                k + 1
            )))
        }
    }
    if let Some(h) = s.h {
        sc.h = h;
    }
    if let Some(t) = s.tau {
        sc.tau = t;
    }
    match s.marx {
        Some(false) => sc.marx = None,
        Some(true) if sc.marx.is_none() => sc.marx = Some(MarX::default()),
        _ => {}
    }
    if let Some(m) = &mut sc.marx {
        m.delta_y = s.delta_y.unwrap_or(m.delta_y);
        m.delta_r = s.delta_r.unwrap_or(m.delta_r);
    } else if s.delta_y.is_some() || s.delta_r.is_some() {
        return Err(WrError::Config(format!(
            "scenario #{}: delta_y/delta_r need marx = true",
            k + 1
        )));
    }
    if let TruthSpec::Oracle { n_super, n_pairs } = &mut entry.truth {
        *n_pairs = s.oracle_pairs.unwrap_or(*n_pairs);
        *n_super = s.oracle_super.unwrap_or(*n_super);
    }
    if let Some(t) = s.truth {
        entry.truth = TruthSpec::Exact(t);
    }
    entry.scenario.validate()?;
    Ok(entry)
}
