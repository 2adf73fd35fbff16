//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use winratio::covadjust::wr_adjusted;
use winratio::data::validate_dataset;
use winratio::estimators::{pocock_estimate, wr_sscore};
use winratio::inference::{bootstrap, sscore_if_wald};
use winratio::sim::{
    gen_dataset, preset, replicate_seed, resolve_truth, run_scenario, true_wr_oracle, MethodSummary, SimMethod,
    SimSummary,
};
use winratio::survfit::km_fit;
use winratio::WrError::NoObservedOutcomes;
use winratio::{Arm, StudyConfig, SubjectRecord};

const REPS: usize = 500;
const ORACLE_PAIRS: usize = 1_000_000;
const MASTER_SEED: u64 = 1;

type Outcome = (bool, String);

fn row(s: &SimSummary, m: SimMethod) -> &MethodSummary {
    s.rows.iter().find(|r| r.method == m).expect("method was run")
}

fn describe(s: &SimSummary, m: SimMethod) -> String {
    let r = row(s, m);
    format!(
        "{m}: ARB% {:.3} RMSE {:.4} CP% {:.1} width {:.4} ({} ok, {} failed)",
        r.arb_pct, r.rmse, r.cp_pct, r.width, r.successes, r.failures
    )
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn simulate(name: &str, methods: &[SimMethod]) -> SimSummary {
    let entry = preset(name).unwrap();
    let truth = resolve_truth(&entry, MASTER_SEED).unwrap();
    run_scenario(&entry.scenario, methods, REPS, MASTER_SEED, 0, truth).unwrap()
}

fn complete_data_equivalence() -> Outcome {
    let cfg = StudyConfig::new(90.0, 50.0, 0.05).unwrap();
    let mut worst = 0.0f64;
    for k in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(k);
        let mut recs = Vec::new();
        for arm in [Arm::A, Arm::B] {
            for _ in 0..40 {
                recs.push(if rng.random_bool(0.4) {
                    SubjectRecord::new(arm, 91.0, true, Some(f64::from(rng.random_range(0..=10u32) * 5)))
                } else {
                    SubjectRecord::new(arm, f64::from(rng.random_range(1..=18u32) * 5), true, None)
                });
            }
        }
        let ds = validate_dataset(cfg, recs).unwrap();
        let s = wr_sscore(&ds).unwrap().theta;
        let p = pocock_estimate(&ds).unwrap().0.theta;
        worst = worst.max((s - p).abs());
    }
    (worst <= 1e-10, format!("max |sscore - pocock| = {worst:.3e} over 200 datasets"))
}

fn truth_oracle_calibration() -> Outcome {
    let sym = true_wr_oracle(&preset("paper-theta1").unwrap().scenario, ORACLE_PAIRS, ORACLE_PAIRS, MASTER_SEED).unwrap();
    let two = true_wr_oracle(&preset("paper-theta2").unwrap().scenario, ORACLE_PAIRS, ORACLE_PAIRS, MASTER_SEED).unwrap();
    (
        within(sym.theta, 0.995, 1.005) && within(two.theta, 1.96, 2.04),
        format!(
            "symmetric {:.4} (MC SE {:.4}, need [0.995, 1.005]); theta=2 set {:.4} (MC SE {:.4}, need [1.96, 2.04])",
            sym.theta, sym.mc_se, two.theta, two.mc_se
        ),
    )
}

fn clean_reproduction() -> Outcome {
    let s = simulate("paper-theta1-nocens-nomiss", &[SimMethod::SscoreIf]);
    let r = row(&s, SimMethod::SscoreIf);
    let ok = r.arb_pct <= 1.5
        && within(r.rmse, 0.042, 0.062)
        && within(r.cp_pct, 93.0, 97.0)
        && within(r.width, 0.18, 0.22);
    (ok, describe(&s, SimMethod::SscoreIf))
}

fn bias_demonstration() -> Outcome {
    let s = simulate("paper-theta2-nocens-mar40", &[SimMethod::SscoreIf, SimMethod::Pocock]);
    let (ss, pc) = (row(&s, SimMethod::SscoreIf), row(&s, SimMethod::Pocock));
    let ok = pc.arb_pct >= 10.0 && pc.cp_pct <= 20.0 && ss.arb_pct <= 1.5 && within(ss.cp_pct, 93.0, 97.0);
    (
        ok,
        format!(
            "truth {:.4}; {}; {}",
            s.truth,
            describe(&s, SimMethod::SscoreIf),
            describe(&s, SimMethod::Pocock)
        ),
    )
}

fn heterogeneous_censoring() -> Outcome {
    let s = simulate("paper-theta2-hetero-mod-mar40", &[SimMethod::SscoreIf, SimMethod::Pocock]);
    let (ss, pc) = (row(&s, SimMethod::SscoreIf), row(&s, SimMethod::Pocock));
    let ok = ss.arb_pct <= 1.5 && within(ss.cp_pct, 93.0, 97.0) && pc.arb_pct >= 5.0;
    (
        ok,
        format!(
            "censored {:.1}%; {}; {}",
            s.mean_censored_pct,
            describe(&s, SimMethod::SscoreIf),
            describe(&s, SimMethod::Pocock)
        ),
    )
}

fn if_bootstrap_concordance() -> Outcome {
    let sc = preset("paper-theta1-homo-mod-mcar40").unwrap().scenario;
    let mut ratios: Vec<f64> = (0..100u64)
        .map(|k| {
            let seed = replicate_seed(MASTER_SEED, "if-bootstrap", k);
            let ds = gen_dataset(&sc, seed).unwrap();
            let if_se = sscore_if_wald(&ds, false).unwrap().1.se();
            let bt = bootstrap(&ds, |d| wr_sscore(d).map(|e| e.theta), 500, seed ^ 0x5eed).unwrap();
            if_se / bt.sd()
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    let median = (ratios[49] + ratios[50]) / 2.0;
    (
        within(median, 0.9, 1.1),
        format!(
            "median IF/bootstrap SE ratio {median:.4} (range {:.3} to {:.3})",
            ratios[0], ratios[99]
        ),
    )
}

fn weight_cancellation() -> Outcome {
    let names = [
        "paper-theta1-homo-mod-mcar40",
        "paper-theta2-hetero-mod-mar40",
        "paper-theta2-homo-low-mar20",
        "marx",
    ];
    let (mut worst, mut used, mut skipped) = (0.0f64, 0usize, 0usize);
    let mut k = 0u64;
    while used < 100 {
        let mut sc = preset(names[k as usize % names.len()]).unwrap().scenario;
        sc.n_a = 300;
        sc.n_b = 300;
        let ds = gen_dataset(&sc, replicate_seed(MASTER_SEED, "weights", k)).unwrap();
        k += 1;
        let adj = match wr_adjusted(&ds, &[]) {
            Ok(e) => e.theta,
            Err(NoObservedOutcomes(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => panic!("{e}"),
        };
        let unadj = wr_sscore(&ds).unwrap().theta;
        worst = worst.max((adj - unadj).abs());
        used += 1;
    }
    (
        worst <= 1e-10,
        format!("max |adjusted - unadjusted| = {worst:.3e} over {used} datasets ({skipped} without observed outcomes skipped)"),
    )
}

fn marx_adjustment() -> Outcome {
    let entry = preset("marx").unwrap();
    let oracle = true_wr_oracle(&entry.scenario, ORACLE_PAIRS, ORACLE_PAIRS, MASTER_SEED).unwrap();
    let s = run_scenario(
        &entry.scenario,
        &[SimMethod::SscoreIf, SimMethod::AdjustedIf],
        REPS,
        MASTER_SEED,
        0,
        oracle.theta,
    )
    .unwrap();
    let (un, adj) = (row(&s, SimMethod::SscoreIf), row(&s, SimMethod::AdjustedIf));
    let ok = adj.arb_pct <= 2.0 && adj.arb_pct <= 0.5 * un.arb_pct && within(adj.cp_pct, 92.0, 98.0);
    (
        ok,
        format!(
            "oracle truth {:.4} (MC SE {:.4}); {}; {}",
            oracle.theta,
            oracle.mc_se,
            describe(&s, SimMethod::SscoreIf),
            describe(&s, SimMethod::AdjustedIf)
        ),
    )
}

fn km_unit_oracle() -> Outcome {
    let f = km_fit(&[(1.0, true), (2.0, false), (3.0, true)]).unwrap();
    let expect = [(0.5, 0.0), (1.0, 1.0 / 3.0), (2.0, 1.0 / 3.0), (2.5, 1.0 / 3.0), (3.0, 1.0), (9.0, 1.0)];
    let mut err = expect.iter().map(|&(t, v)| (f.eval(t) - v).abs()).fold(0.0, f64::max);

    let xs = [4.0, 1.0, 7.0, 4.0, 2.0, 9.0, 4.0, 1.0];
    let g = km_fit(&xs.map(|x| (x, true))).unwrap();
    for t in [0.0, 1.0, 1.5, 2.0, 4.0, 5.0, 7.0, 8.9, 9.0, 10.0] {
        let ecdf = xs.iter().filter(|&&x| x <= t).count() as f64 / xs.len() as f64;
        err = err.max((g.eval(t) - ecdf).abs());
    }
    (err <= 1e-12, format!("max deviation {err:.3e}"))
}

fn simulate_bytes(dir: &std::path::Path, jobs: &str) -> (Vec<u8>, Vec<u8>) {
    let prefix = dir.join(format!("run-{jobs}"));
    let out = Command::new(env!("CARGO_BIN_EXE_winratio"))
        .env("RUST_LOG", "error")
        .args([
            "simulate",
            "--preset",
            "paper-theta2-hetero-mod-mar40",
            "--reps",
            "40",
            "--seed",
            "2024",
            "--boot",
            "50",
            "--methods",
            "sscore-if,sscore-bt-wald,sscore-bt-qt,pocock,adjusted-if",
            "--jobs",
            jobs,
            "--out",
            prefix.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let read = |ext: &str| {
        let mut p = prefix.clone().into_os_string();
        p.push(ext);
        std::fs::read(PathBuf::from(p)).unwrap()
    };
    (read(".csv"), read(".json"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<(Vec<u8>, Vec<u8>)> = ["1", "4", "1", "3"]
        .iter()
        .enumerate()
        .map(|(i, j)| {
            let sub = dir.path().join(i.to_string());
            std::fs::create_dir(&sub).unwrap();
            simulate_bytes(&sub, j)
        })
        .collect();
    let same = runs.iter().all(|r| *r == runs[0]);
    (
        same && !runs[0].0.is_empty(),
        format!(
            "4 runs (jobs 1, 4, 1, 3): CSV {} bytes, JSON {} bytes, identical = {same}",
            runs[0].0.len(),
            runs[0].1.len()
        ),
    )
}

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("complete-data sscore/pocock equivalence", complete_data_equivalence),
        ("truth oracle calibration", truth_oracle_calibration),
        ("clean scenario reproduction", clean_reproduction),
        ("bias under MAR missingness", bias_demonstration),
        ("heterogeneous censoring robustness", heterogeneous_censoring),
        ("IF/bootstrap SE concordance", if_bootstrap_concordance),
        ("intercept-only weight cancellation", weight_cancellation),
        ("covariate-dependent missingness adjustment", marx_adjustment),
        ("Kaplan-Meier unit oracle", km_unit_oracle),
        ("simulate determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|p| id.ends_with(&format!(" {p}")) || name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        if !ok {
            failed += 1;
        }
        println!(
            "{id} [{}] {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
