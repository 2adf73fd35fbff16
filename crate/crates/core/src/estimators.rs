//! Win ratio point estimators: the S-score Kaplan–Meier plug-in and Pocock's
//! pairwise counting algorithm.

use serde::{Deserialize, Serialize};

use crate::data::{AnalysisDataset, Arm, StudyConfig, SubjectRecord};
use crate::error::{Result, WrError};
use crate::inference::ConfidenceInterval;
use crate::survfit::{cdf_eval, km_fit_scores, StepCdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Kaplan–Meier plug-in on the S-score.
    Sscore,
    /// Pocock's unmatched pairwise counting.
    Pocock,
    /// Covariate-adjusted S-score with inverse-probability weighting.
    Adjusted,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sscore => "sscore",
            Method::Pocock => "pocock",
            Method::Adjusted => "adjusted",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = WrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sscore" | "s-score" => Ok(Method::Sscore),
            "pocock" => Ok(Method::Pocock),
            "adjusted" => Ok(Method::Adjusted),
            other => Err(WrError::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

/// Pair counts from the point of view of arm A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WinLossTally {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
}

impl WinLossTally {
    pub fn total(&self) -> u64 {
        self.wins + self.losses + self.ties
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WrEstimate {
    pub theta: f64,
    /// Probability that arm A wins a random cross-arm pair.
    pub p_win: f64,
    /// Probability that arm A loses a random cross-arm pair.
    pub p_loss: f64,
    pub method: Method,
    pub variance: Option<f64>,
    pub ci: Option<ConfidenceInterval>,
}

impl WrEstimate {
    pub(crate) fn from_probabilities(p_win: f64, p_loss: f64, method: Method) -> Result<Self> {
        if p_loss <= 0.0 {
            return Err(WrError::DegenerateDenominator);
        }
        Ok(WrEstimate {
            theta: p_win / p_loss,
            p_win,
            p_loss,
            method,
            variance: None,
            ci: None,
        })
    }
}

/// `(N, D)`: probability that a draw from `f_a` exceeds a draw from `f_b`, and
/// the reverse. Mass a CDF leaves beyond its last jump takes part in neither.
pub fn win_probabilities(f_a: &StepCdf, f_b: &StepCdf) -> (f64, f64) {
    let n: f64 = f_b.atoms().map(|(s, m)| m * (1.0 - cdf_eval(f_a, s))).sum();
    let d: f64 = f_a.atoms().map(|(s, m)| m * (1.0 - cdf_eval(f_b, s))).sum();
    (n, d)
}

/// Per-arm Kaplan–Meier fits of the coarsened S-score.
pub fn sscore_cdfs(ds: &AnalysisDataset) -> Result<(StepCdf, StepCdf)> {
    let obs = ds.score_observations();
    let fit = |arm: Arm| -> Result<StepCdf> {
        let f = km_fit_scores(obs.iter().filter(|o| o.arm == arm))?;
        if f.is_empty() {
            return Err(WrError::NoEvents(arm));
        }
        Ok(f)
    };
    Ok((fit(Arm::A)?, fit(Arm::B)?))
}

pub fn wr_sscore(ds: &AnalysisDataset) -> Result<WrEstimate> {
    let (f_a, f_b) = sscore_cdfs(ds)?;
    let (n, d) = win_probabilities(&f_a, &f_b);
    WrEstimate::from_probabilities(n, d, Method::Sscore)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Win,
    Loss,
    Tie,
}

/// Compare a subject `i` from arm A with a subject `j` from arm B.
///
/// A first-endpoint decision needs an observed event strictly inside the
/// pair's common follow-up. Otherwise the second endpoint decides when both
/// values are observed; anything else is a tie.
pub fn pocock_compare_pair(i: &SubjectRecord, j: &SubjectRecord, _config: &StudyConfig) -> Outcome {
    if j.delta1 && j.y1_obs < i.y1_obs {
        return Outcome::Win;
    }
    if i.delta1 && i.y1_obs < j.y1_obs {
        return Outcome::Loss;
    }
    match (i.y2, j.y2) {
        (Some(a), Some(b)) if a > b => Outcome::Win,
        (Some(a), Some(b)) if a < b => Outcome::Loss,
        _ => Outcome::Tie,
    }
}

/// Tally by direct enumeration of all `n_a * n_b` pairs.
pub fn pocock_tally_exhaustive(ds: &AnalysisDataset) -> WinLossTally {
    let cfg = ds.config();
    let (a, b) = split_arms(ds);
    let mut t = WinLossTally {
        wins: 0,
        losses: 0,
        ties: 0,
    };
    for i in &a {
        for j in &b {
            match pocock_compare_pair(i, j, cfg) {
                Outcome::Win => t.wins += 1,
                Outcome::Loss => t.losses += 1,
                Outcome::Tie => t.ties += 1,
            }
        }
    }
    t
}

/// Per-subject `(wins, losses)` counts of every record in `xs` against all of
/// `others`, computed by sorting and binary search.
pub(crate) fn pair_counts(xs: &[&SubjectRecord], others: &[&SubjectRecord]) -> Vec<(u64, u64)> {
    let mut event_times: Vec<f64> = others.iter().filter(|r| r.delta1).map(|r| r.y1_obs).collect();
    let mut all_times: Vec<f64> = others.iter().map(|r| r.y1_obs).collect();
    let mut y2s: Vec<f64> = others.iter().filter_map(|r| r.y2).collect();
    event_times.sort_by(f64::total_cmp);
    all_times.sort_by(f64::total_cmp);
    y2s.sort_by(f64::total_cmp);
    let below = |v: &[f64], x: f64| v.partition_point(|&t| t < x) as u64;
    let above = |v: &[f64], x: f64| (v.len() - v.partition_point(|&t| t <= x)) as u64;

    xs.iter()
        .map(|i| {
            let mut w = below(&event_times, i.y1_obs);
            let mut l = if i.delta1 { above(&all_times, i.y1_obs) } else { 0 };
            // an observed second endpoint implies survival past the horizon,
            // where no first-endpoint decision is possible
            if let Some(y) = i.y2 {
                w += below(&y2s, y);
                l += above(&y2s, y);
            }
            (w, l)
        })
        .collect()
}

/// Tally via [`pair_counts`]; agrees exactly with the exhaustive count.
pub fn pocock_tally(ds: &AnalysisDataset) -> WinLossTally {
    let (a, b) = split_arms(ds);
    let (mut wins, mut losses) = (0u64, 0u64);
    for (w, l) in pair_counts(&a, &b) {
        wins += w;
        losses += l;
    }
    let total = (a.len() * b.len()) as u64;
    WinLossTally {
        wins,
        losses,
        ties: total - wins - losses,
    }
}

pub fn pocock_estimate(ds: &AnalysisDataset) -> Result<(WrEstimate, WinLossTally)> {
    let t = pocock_tally(ds);
    if t.wins == 0 && t.losses == 0 {
        return Err(WrError::AllTies);
    }
    let total = t.total() as f64;
    let est = WrEstimate::from_probabilities(t.wins as f64 / total, t.losses as f64 / total, Method::Pocock)?;
    Ok((est, t))
}

pub(crate) fn split_arms(ds: &AnalysisDataset) -> (Vec<&SubjectRecord>, Vec<&SubjectRecord>) {
    ds.records().iter().partition(|r| r.arm == Arm::A)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate_dataset;
    use proptest::prelude::*;

    fn cfg() -> StudyConfig {
        StudyConfig::new(90.0, 50.0, 0.05).unwrap()
    }

    fn death(arm: Arm, t: f64) -> SubjectRecord {
        SubjectRecord::new(arm, t, true, None)
    }

    fn surv(arm: Arm, y2: Option<f64>) -> SubjectRecord {
        SubjectRecord::new(arm, 91.0, true, y2)
    }

    fn steps(vals: &[f64]) -> StepCdf {
        let obs: Vec<(f64, bool)> = vals.iter().map(|&v| (v, true)).collect();
        crate::survfit::km_fit(&obs).unwrap()
    }

    fn deaths(a: &[f64], b: &[f64]) -> AnalysisDataset {
        let mut recs: Vec<_> = a.iter().map(|&t| death(Arm::A, t)).collect();
        recs.extend(b.iter().map(|&t| death(Arm::B, t)));
        validate_dataset(cfg(), recs).unwrap()
    }

    #[test]
    fn win_probability_examples() {
        assert_eq!(win_probabilities(&steps(&[2.0]), &steps(&[1.0])), (1.0, 0.0));
        let (n, d) = win_probabilities(&steps(&[1.0, 2.0, 3.0]), &steps(&[1.0, 2.0, 3.0]));
        assert!((n - 1.0 / 3.0).abs() < 1e-12 && (d - 1.0 / 3.0).abs() < 1e-12);
        let (n, d) = win_probabilities(&steps(&[1.0, 3.0]), &steps(&[2.0, 4.0]));
        assert!((n - 0.25).abs() < 1e-12 && (d - 0.75).abs() < 1e-12);
    }

    #[test]
    fn sscore_examples() {
        let e = wr_sscore(&deaths(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.theta, 1.0);
        assert!(matches!(
            wr_sscore(&deaths(&[2.0], &[1.0])),
            Err(WrError::DegenerateDenominator)
        ));
        let e = wr_sscore(&deaths(&[1.0, 3.0], &[2.0, 4.0])).unwrap();
        assert!((e.theta - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sscore_no_events_in_arm() {
        let recs = vec![death(Arm::A, 5.0), SubjectRecord::new(Arm::B, 5.0, false, None)];
        let ds = validate_dataset(cfg(), recs).unwrap();
        assert!(matches!(wr_sscore(&ds), Err(WrError::NoEvents(Arm::B))));
    }

    #[test]
    fn compare_pair_examples() {
        let c = cfg();
        assert_eq!(pocock_compare_pair(&death(Arm::A, 50.0), &death(Arm::B, 70.0), &c), Outcome::Loss);
        assert_eq!(
            pocock_compare_pair(&surv(Arm::A, Some(30.0)), &surv(Arm::B, Some(20.0)), &c),
            Outcome::Win
        );
        let cens = SubjectRecord::new(Arm::A, 60.0, false, None);
        assert_eq!(pocock_compare_pair(&cens, &death(Arm::B, 70.0), &c), Outcome::Tie);
        assert_eq!(
            pocock_compare_pair(&surv(Arm::A, None), &surv(Arm::B, Some(20.0)), &c),
            Outcome::Tie
        );
        // a censored subject loses only to an event inside its follow-up
        assert_eq!(pocock_compare_pair(&cens, &death(Arm::B, 40.0), &c), Outcome::Win);
    }

    #[test]
    fn pocock_examples() {
        let (e, t) = pocock_estimate(&deaths(&[1.0, 3.0], &[2.0, 4.0])).unwrap();
        assert_eq!((t.wins, t.losses, t.ties), (1, 3, 0));
        assert!((e.theta - 1.0 / 3.0).abs() < 1e-15);
        let (e, _) = pocock_estimate(&deaths(&[1.0, 2.0], &[2.0, 1.0])).unwrap();
        assert_eq!(e.theta, 1.0);
        let recs = vec![surv(Arm::A, None), surv(Arm::B, None)];
        let ds = validate_dataset(cfg(), recs).unwrap();
        assert!(matches!(pocock_estimate(&ds), Err(WrError::AllTies)));
        assert!(matches!(
            pocock_estimate(&deaths(&[2.0], &[1.0])),
            Err(WrError::DegenerateDenominator)
        ));
    }

    /// Random valid records on a coarse grid so that ties are frequent.
    fn record_strategy(complete: bool) -> impl Strategy<Value = SubjectRecord> {
        (any::<bool>(), 0u8..4, 1u32..12, 0u32..6).prop_map(move |(b, kind, t, y)| {
            let arm = if b { Arm::B } else { Arm::A };
            let t = f64::from(t) * 7.5;
            let y2 = f64::from(y) * 10.0;
            match (kind, complete) {
                (0, _) => SubjectRecord::new(arm, t, true, None),
                (1, _) | (2, true) => SubjectRecord::new(arm, 91.0, true, Some(y2)),
                (2, false) => SubjectRecord::new(arm, 91.0, true, None),
                (_, true) => SubjectRecord::new(arm, t, true, None),
                (_, false) => SubjectRecord::new(arm, t, false, None),
            }
        })
    }

    fn dataset_strategy(complete: bool) -> impl Strategy<Value = AnalysisDataset> {
        prop::collection::vec(record_strategy(complete), 2..60).prop_filter_map(
            "both arms needed",
            |recs| validate_dataset(cfg(), recs).ok(),
        )
    }

    fn swap_arms(ds: &AnalysisDataset) -> AnalysisDataset {
        let recs = ds
            .records()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.arm = r.arm.other();
                r
            })
            .collect();
        validate_dataset(*ds.config(), recs).unwrap()
    }

    proptest! {
        #[test]
        fn fast_tally_matches_exhaustive(ds in dataset_strategy(false)) {
            prop_assert_eq!(pocock_tally(&ds), pocock_tally_exhaustive(&ds));
        }

        #[test]
        fn complete_data_estimators_agree(ds in dataset_strategy(true)) {
            let s = wr_sscore(&ds);
            let p = pocock_estimate(&ds);
            if let (Ok(s), Ok((p, _))) = (&s, &p) {
                prop_assert!((s.theta - p.theta).abs() <= 1e-10);
                prop_assert!((s.p_win - p.p_win).abs() <= 1e-12);
            }
        }

        #[test]
        fn label_swap_inverts(ds in dataset_strategy(false)) {
            let sw = swap_arms(&ds);
            if let (Ok(x), Ok(y)) = (wr_sscore(&ds), wr_sscore(&sw)) {
                if x.theta > 0.0 {
                    prop_assert!((x.theta - 1.0 / y.theta).abs() <= 1e-10 * x.theta.max(1.0));
                }
            }
            if let (Ok((x, _)), Ok((y, _))) = (pocock_estimate(&ds), pocock_estimate(&sw)) {
                if x.theta > 0.0 {
                    prop_assert!((x.theta - 1.0 / y.theta).abs() <= 1e-10 * x.theta.max(1.0));
                }
            }
        }

        #[test]
        fn shifting_arm_a_y2_up_never_lowers_p_win(ds in dataset_strategy(true), shift in 0.0f64..10.0) {
            let tau = ds.config().tau;
            let recs: Vec<_> = ds
                .records()
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    if r.arm == Arm::A {
                        r.y2 = r.y2.map(|y| (y + shift).min(tau));
                    }
                    r
                })
                .collect();
            let shifted = validate_dataset(*ds.config(), recs).unwrap();
            let (fa, fb) = (sscore_cdfs(&ds), sscore_cdfs(&shifted));
            if let (Ok((a0, b0)), Ok((a1, b1))) = (fa, fb) {
                let n0 = win_probabilities(&a0, &b0).0;
                let n1 = win_probabilities(&a1, &b1).0;
                prop_assert!(n1 >= n0 - 1e-12);
            }
        }

        #[test]
        fn win_plus_loss_is_one_minus_ties(
            a in prop::collection::vec(1u32..30, 1..25),
            b in prop::collection::vec(1u32..30, 1..25),
        ) {
            let (fa, fb) = (
                steps(&a.iter().map(|&v| f64::from(v)).collect::<Vec<_>>()),
                steps(&b.iter().map(|&v| f64::from(v)).collect::<Vec<_>>()),
            );
            let (n, d) = win_probabilities(&fa, &fb);
            let ties = a.iter().flat_map(|x| b.iter().map(move |y| x == y)).filter(|&t| t).count();
            let p_tie = ties as f64 / (a.len() * b.len()) as f64;
            prop_assert!((n + d - (1.0 - p_tie)).abs() <= 1e-10);
        }
    }

    #[test]
    fn record_order_does_not_change_estimates() {
        let recs = vec![
            death(Arm::A, 10.0),
            surv(Arm::A, Some(3.0)),
            SubjectRecord::new(Arm::A, 30.0, false, None),
            surv(Arm::B, None),
            death(Arm::B, 20.0),
            surv(Arm::B, Some(5.0)),
        ];
        let mut rev = recs.clone();
        rev.reverse();
        let d1 = validate_dataset(cfg(), recs).unwrap();
        let d2 = validate_dataset(cfg(), rev).unwrap();
        assert_eq!(wr_sscore(&d1).unwrap(), wr_sscore(&d2).unwrap());
        assert_eq!(pocock_estimate(&d1).unwrap(), pocock_estimate(&d2).unwrap());
    }
}
