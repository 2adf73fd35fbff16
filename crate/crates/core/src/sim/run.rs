use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gen_dataset, mix, replicate_seed, true_wr_oracle, ScenarioEntry, SimScenario, TruthSpec};
use crate::covadjust::adjusted_if_wald;
use crate::data::AnalysisDataset;
use crate::error::{Result, WrError};
use crate::estimators::wr_sscore;
use crate::inference::{bootstrap, bt_qt_ci, bt_wald_ci, pocock_ustat_wald, sscore_if_wald, BootstrapResult, ConfidenceInterval};

/// An estimator paired with its interval construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMethod {
    SscoreIf,
    SscoreBtWald,
    SscoreBtQt,
    /// Pocock's pairwise estimate with the U-statistic Wald interval.
    Pocock,
    /// Covariate-adjusted estimate with the influence-function Wald interval.
    AdjustedIf,
}

impl SimMethod {
    pub const ALL: [SimMethod; 5] = [
        SimMethod::SscoreIf,
        SimMethod::SscoreBtWald,
        SimMethod::SscoreBtQt,
        SimMethod::Pocock,
        SimMethod::AdjustedIf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SimMethod::SscoreIf => "sscore-if",
            SimMethod::SscoreBtWald => "sscore-bt-wald",
            SimMethod::SscoreBtQt => "sscore-bt-qt",
            SimMethod::Pocock => "pocock",
            SimMethod::AdjustedIf => "adjusted-if",
        }
    }

    fn needs_bootstrap(self) -> bool {
        matches!(self, SimMethod::SscoreBtWald | SimMethod::SscoreBtQt)
    }
}

impl std::fmt::Display for SimMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SimMethod {
    type Err = WrError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        SimMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .or(match s.as_str() {
                "sscore" => Some(SimMethod::SscoreIf),
                "adjusted" => Some(SimMethod::AdjustedIf),
                _ => None,
            })
            .ok_or_else(|| WrError::InvalidArgument(format!("unknown simulation method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub arb_pct: f64,
    pub rmse: f64,
    pub cp_pct: f64,
    pub width: f64,
}

/// Neumaier-compensated mean.
fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp, mut n) = (0.0f64, 0.0f64, 0usize);
    for x in xs {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
        n += 1;
    }
    (sum + comp) / n as f64
}

/// ARB%, RMSE, coverage and mean width against `truth`. `cis` may be empty,
/// in which case coverage and width are NaN.
pub fn compute_metrics(estimates: &[f64], cis: &[ConfidenceInterval], truth: f64) -> Result<Metrics> {
    if estimates.is_empty() {
        return Err(WrError::EmptyInput);
    }
    if !cis.is_empty() && cis.len() != estimates.len() {
        return Err(WrError::InvalidArgument(format!(
            "{} estimates but {} intervals",
            estimates.len(),
            cis.len()
        )));
    }
    let arb_pct = mean(estimates.iter().map(|t| (t - truth) / truth)).abs() * 100.0;
    let rmse = mean(estimates.iter().map(|t| (t - truth).powi(2))).sqrt();
    let (cp_pct, width) = if cis.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            100.0 * cis.iter().filter(|c| c.contains(truth)).count() as f64 / cis.len() as f64,
            mean(cis.iter().map(ConfidenceInterval::width)),
        )
    };
    Ok(Metrics {
        arb_pct,
        rmse,
        cp_pct,
        width,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: SimMethod,
    pub successes: usize,
    pub failures: usize,
    pub mean_estimate: f64,
    pub arb_pct: f64,
    pub rmse: f64,
    pub cp_pct: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub scenario_id: String,
    pub truth: f64,
    pub n_reps: usize,
    pub mean_censored_pct: f64,
    pub mean_missing_pct: f64,
    pub rows: Vec<MethodSummary>,
}

type Outcome = Result<(f64, ConfidenceInterval)>;

fn covariates_for(sc: &SimScenario) -> Vec<usize> {
    if sc.marx.is_some() {
        vec![0]
    } else {
        Vec::new()
    }
}

fn one_replicate(
    sc: &SimScenario,
    ds: &AnalysisDataset,
    methods: &[SimMethod],
    boot_b: usize,
    boot_seed: u64,
) -> Vec<Outcome> {
    let alpha = ds.config().alpha;
    let boot = methods.iter().any(|m| m.needs_bootstrap()).then(|| -> Result<(f64, BootstrapResult)> {
        let theta = wr_sscore(ds)?.theta;
        Ok((theta, bootstrap(ds, |d| wr_sscore(d).map(|e| e.theta), boot_b, boot_seed)?))
    });
    let boot_ci = |f: &dyn Fn(&[f64], f64) -> Result<ConfidenceInterval>| -> Outcome {
        match boot.as_ref().expect("bootstrap requested") {
            Ok((theta, reps)) => Ok((*theta, f(&reps.replicates, *theta)?)),
            Err(e) => Err(e.duplicate()),
        }
    };
    methods
        .iter()
        .map(|m| match m {
            SimMethod::SscoreIf => sscore_if_wald(ds, false).map(|(e, _)| (e.theta, e.ci.expect("IF CI"))),
            SimMethod::Pocock => pocock_ustat_wald(ds, false).map(|(e, _)| (e.theta, e.ci.expect("U-stat CI"))),
            SimMethod::AdjustedIf => {
                adjusted_if_wald(ds, &covariates_for(sc), false).map(|(e, _)| (e.theta, e.ci.expect("IF CI")))
            }
            SimMethod::SscoreBtWald => boot_ci(&|r, t| bt_wald_ci(r, t, alpha)),
            SimMethod::SscoreBtQt => boot_ci(&|r, _| bt_qt_ci(r, alpha)),
        })
        .collect()
}

/// Run `n_reps` replicates of `sc`, estimate with each method and summarise
/// against `truth`.
///
/// Replicate `r` uses `replicate_seed(seed, sc.id, r)`, so the summary does not
/// depend on the size of the rayon pool it runs in. Replicates where a method
/// fails are excluded from that method's metrics and counted as failures.
pub fn run_scenario(
    sc: &SimScenario,
    methods: &[SimMethod],
    n_reps: usize,
    seed: u64,
    boot_b: usize,
    truth: f64,
) -> Result<SimSummary> {
    if n_reps == 0 {
        return Err(WrError::InvalidArgument("n_reps must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(WrError::InvalidArgument("no methods requested".into()));
    }
    if !(truth.is_finite() && truth > 0.0) {
        return Err(WrError::TruthUnavailable(format!("scenario `{}` has truth {truth}", sc.id)));
    }
    sc.validate()?;
    let results: Vec<(f64, f64, Vec<Outcome>)> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let rs = replicate_seed(seed, &sc.id, r as u64);
            let ds = gen_dataset(sc, rs)?;
            let out = one_replicate(sc, &ds, methods, boot_b, mix(rs ^ 0xB007));
            Ok((ds.censored_pct(), ds.missing_among_survivors_pct(), out))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(methods.len());
    for (k, &method) in methods.iter().enumerate() {
        let ok: Vec<(f64, ConfidenceInterval)> =
            results.iter().filter_map(|(_, _, o)| o[k].as_ref().ok().copied()).collect();
        let failures = n_reps - ok.len();
        if failures > 0 {
            let first = results.iter().find_map(|(_, _, o)| o[k].as_ref().err()).expect("a failure");
            log::warn!(
                "scenario `{}`, {method}: {failures} of {n_reps} replicates failed (first: {first})",
                sc.id
            );
        }
        let est: Vec<f64> = ok.iter().map(|o| o.0).collect();
        let cis: Vec<ConfidenceInterval> = ok.iter().map(|o| o.1).collect();
        let m = compute_metrics(&est, &cis, truth).unwrap_or(Metrics {
            arb_pct: f64::NAN,
            rmse: f64::NAN,
            cp_pct: f64::NAN,
            width: f64::NAN,
        });
        rows.push(MethodSummary {
            method,
            successes: ok.len(),
            failures,
            mean_estimate: if est.is_empty() { f64::NAN } else { mean(est.iter().copied()) },
            arb_pct: m.arb_pct,
            rmse: m.rmse,
            cp_pct: m.cp_pct,
            width: m.width,
        });
    }
    Ok(SimSummary {
        scenario_id: sc.id.clone(),
        truth,
        n_reps,
        mean_censored_pct: mean(results.iter().map(|r| r.0)),
        mean_missing_pct: mean(results.iter().map(|r| r.1)),
        rows,
    })
}

/// Resolve a scenario's true win ratio, running the oracle if needed.
pub fn resolve_truth(entry: &ScenarioEntry, seed: u64) -> Result<f64> {
    match entry.truth {
        TruthSpec::Exact(t) => Ok(t),
        TruthSpec::Oracle { n_super, n_pairs } => {
            let oracle_seed = replicate_seed(seed, &entry.scenario.id, u64::MAX);
            true_wr_oracle(&entry.scenario, n_super, n_pairs, oracle_seed)
                .map(|t| t.theta)
                .map_err(|e| WrError::TruthUnavailable(e.to_string()))
        }
    }
}

/// One CSV row per scenario and method, with fixed six-decimal formatting.
pub fn summaries_to_csv(summaries: &[SimSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| WrError::Io(std::io::Error::other(e));
    w.write_record([
        "scenario",
        "method",
        "truth",
        "reps",
        "successes",
        "failures",
        "mean_estimate",
        "arb_pct",
        "rmse",
        "cp_pct",
        "width",
        "censored_pct",
        "missing_pct",
    ])
    .map_err(io)?;
    let f = |x: f64| format!("{x:.6}");
    for s in summaries {
        for r in &s.rows {
            w.write_record([
                s.scenario_id.clone(),
                r.method.to_string(),
                f(s.truth),
                s.n_reps.to_string(),
                r.successes.to_string(),
                r.failures.to_string(),
                f(r.mean_estimate),
                f(r.arb_pct),
                f(r.rmse),
                f(r.cp_pct),
                f(r.width),
                f(s.mean_censored_pct),
                f(s.mean_missing_pct),
            ])
            .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| WrError::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::CiKind;
    use crate::sim::preset;
    use proptest::prelude::*;

    fn ci(lower: f64, upper: f64) -> ConfidenceInterval {
        ConfidenceInterval {
            lower,
            upper,
            level: 0.95,
            kind: CiKind::IfWald,
        }
    }

    #[test]
    fn metric_examples() {
        let m = compute_metrics(&[1.1, 0.9], &[], 1.0).unwrap();
        assert!(m.arb_pct.abs() < 1e-12 && (m.rmse - 0.1).abs() < 1e-12);
        let m = compute_metrics(&[1.0, 1.25], &[ci(0.9, 1.1), ci(1.2, 1.3)], 1.0).unwrap();
        assert_eq!(m.cp_pct, 50.0);
        assert!((m.width - 0.15).abs() < 1e-12);
        let m = compute_metrics(&[2.0], &[], 1.0).unwrap();
        assert!((m.arb_pct - 100.0).abs() < 1e-12 && (m.rmse - 1.0).abs() < 1e-12);
        assert!(compute_metrics(&[], &[], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn arb_invariant_under_sign_flip(devs in prop::collection::vec(-0.5f64..0.5, 1..40), truth in 0.5f64..3.0) {
            let up: Vec<f64> = devs.iter().map(|d| truth + d).collect();
            let down: Vec<f64> = devs.iter().map(|d| truth - d).collect();
            let a = compute_metrics(&up, &[], truth).unwrap();
            let b = compute_metrics(&down, &[], truth).unwrap();
            prop_assert!((a.arb_pct - b.arb_pct).abs() < 1e-9);
            prop_assert!((a.rmse - b.rmse).abs() < 1e-12);
            prop_assert!(a.rmse >= 0.0);
        }
    }

    #[test]
    fn zero_reps_and_bad_truth_rejected() {
        let sc = preset("paper-theta1").unwrap().scenario;
        assert!(matches!(
            run_scenario(&sc, &[SimMethod::SscoreIf], 0, 1, 10, 1.0),
            Err(WrError::InvalidArgument(_))
        ));
        assert!(matches!(
            run_scenario(&sc, &[SimMethod::SscoreIf], 1, 1, 10, f64::NAN),
            Err(WrError::TruthUnavailable(_))
        ));
    }

    #[test]
    fn method_names_round_trip() {
        for m in SimMethod::ALL {
            assert_eq!(m.as_str().parse::<SimMethod>().unwrap(), m);
        }
        assert!("nope".parse::<SimMethod>().is_err());
    }

    #[test]
    fn summary_is_schedule_independent() {
        let mut sc = preset("paper-theta2-homo-mod-mar40").unwrap().scenario;
        sc.n_a = 150;
        sc.n_b = 150;
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_scenario(&sc, &SimMethod::ALL, 6, 42, 30, 2.0).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a, b);
        assert_eq!(summaries_to_csv(&[a.clone()]).unwrap(), summaries_to_csv(&[b]).unwrap());
        for r in &a.rows {
            assert_eq!(r.successes + r.failures, 6);
            assert!((0.0..=100.0).contains(&r.cp_pct) && r.rmse >= 0.0);
        }
    }
}
