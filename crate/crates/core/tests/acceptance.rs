//! Acceptance criteria. Prints one PASS/FAIL line per criterion.
//!
//! Tolerances and time limits are pinned here instead of taken from
//! `Tolerances::default()`, so a change of defaults cannot move the bar.
//! Criteria listed in `UNATTAINABLE` are run and reported like the others;
//! the test asserts that they still fail for the documented reason and
//! that every other criterion passes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use schauder_core::cli;
use schauder_core::heatball::QuadSpec;
use schauder_core::verify::{Check, SweepConfig, Tolerances, VerifyReport};

/// The scaling integral at (α, β) = (2, 2) has exponent γ = α/2 − β + 1 = 0
/// and diverges, so no slope exists for that pair.
const UNATTAINABLE: &[usize] = &[8];

fn pinned_tolerances() -> Tolerances {
    Tolerances {
        mass: 1e-6,
        contraction: 1e-9,
        approximation_factor: 1.05,
        slope: 0.05,
        rough_slope: 0.1,
        equivalence_constant: 20.0,
        refinement: 0.10,
        kernel_mass: 1e-3,
        mean_value: 1e-3,
        subsolution: 1e-6,
        scaling_slope: 0.01,
        residual_factor: 1.05,
        estimate_band: 2.0,
        family_growth: 3.0,
        homogeneity: 1e-12,
        rescaling: 0.10,
    }
}

fn pinned_config() -> SweepConfig {
    let mut c = SweepConfig::new(1, 0.5, 7);
    c.tau_grid = vec![0.2, 0.1, 0.05, 0.025];
    c.mass_taus = vec![0.2, 0.1, 0.05];
    c.cusp_alphas = vec![0.3, 0.5, 0.7];
    c.r_grid = vec![0.25, 0.5, 1.0, 2.0];
    c.epsilon = 4f64.powf(-1.0 / 0.5);
    c.family_count = 10;
    c.chain_pairs = 10_000;
    c.quad = QuadSpec::default();
    c.tol = pinned_tolerances();
    c
}

struct Outcome {
    number: usize,
    name: &'static str,
    pass: bool,
    elapsed: Duration,
    limit: Duration,
    detail: String,
}

impl Outcome {
    fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<22} {} ({:.2} s, limit {:.0} s) {}",
            self.number,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.limit.as_secs_f64(),
            self.detail
        )
    }
}

fn count(r: &VerifyReport, pred: impl Fn(&str) -> bool) -> usize {
    r.measurements.iter().filter(|m| pred(&m.label)).count()
}

fn all_tolerances(r: &VerifyReport, prefix: &str, tol: f64) -> bool {
    r.measurements
        .iter()
        .filter(|m| m.label.contains(prefix))
        .all(|m| m.tolerance == tol)
}

/// Coverage requirements per criterion; `Err` names what is missing.
fn coverage(n: usize, r: &VerifyReport, cfg: &SweepConfig) -> Result<(), String> {
    let need = |ok: bool, what: &str| if ok { Ok(()) } else { Err(what.to_string()) };
    match n {
        1 => {
            need(count(r, |l| l == "mass") == 3, "one mass measurement per tau")?;
            need(all_tolerances(r, "mass", 1e-6), "mass tolerance 1e-6")
        }
        2 => {
            let names = [
                "constant",
                "affine",
                "spatial_cusp",
                "temporal_cusp",
                "caloric_poly",
                "heat_kernel_shift",
                "compact_bump",
                "step",
            ];
            for b in names {
                need(count(r, |l| l.starts_with(b)) == cfg.tau_grid.len(), b)?;
            }
            need(
                r.measurements.iter().all(|m| m.tolerance == 1e-9),
                "contraction tolerance 1e-9",
            )
        }
        3 => {
            for a in ["0.3", "0.5", "0.7"] {
                for (case, der, expected) in [("spatial_cusp", "d_x", -1.0), ("temporal_cusp", "d_t", -2.0)] {
                    let label = format!("{case}({a})/slope {der}");
                    let s = r.slopes.iter().find(|s| s.label == label).ok_or(label.clone())?;
                    let alpha: f64 = a.parse().unwrap();
                    need((s.expected - (alpha + expected)).abs() < 1e-12 && s.tol == 0.05, &label)?;
                    need(
                        count(r, |l| l == format!("{case}({a})/approximation")) == cfg.tau_grid.len(),
                        "approximation rows",
                    )?;
                }
            }
            Ok(())
        }
        4 => {
            for case in ["spatial_cusp(0.5)", "temporal_cusp(0.5)"] {
                need(count(r, |l| l == format!("{case}/S/L lower")) == 1, "S/L lower")?;
                need(count(r, |l| l == format!("{case}/S/L upper")) == 1, "S/L upper")?;
                need(count(r, |l| l == format!("{case}/refinement")) == 1, "refinement")?;
                let pairs = r
                    .measurements
                    .iter()
                    .find(|m| m.label == format!("{case}/chain_pairs"))
                    .ok_or("chain pair count")?;
                need(pairs.lhs >= 10_000.0, "10^4 chain pairs")?;
            }
            Ok(())
        }
        5 => need(count(r, |l| l == "mass") == 6, "(d, r) in {1,2} x {0.5,1,2}"),
        6 => {
            for b in ["constant", "affine", "caloric_poly", "heat_kernel_shift"] {
                need(count(r, |l| l == b) > 0, b)?;
            }
            Ok(())
        }
        7 => {
            need(count(r, |l| l.starts_with("lift(")) > 0, "lifted functions")?;
            need(
                r.measurements.iter().all(|m| m.tolerance == 1e-6),
                "subsolution tolerance 1e-6",
            )
        }
        8 => {
            for pair in ["alpha=2 beta=2", "alpha=4 beta=2"] {
                need(r.slopes.iter().any(|s| s.label.ends_with(pair)), pair)?;
            }
            need(r.slopes.iter().all(|s| s.tol == 0.01), "slope tolerance 0.01")
        }
        9 => {
            need(count(r, |l| l.ends_with("/g(X0)")) == 10, "g(X0) per problem")?;
            let exact = r
                .measurements
                .iter()
                .filter(|m| m.label.ends_with("/g(X0)"))
                .all(|m| m.lhs == 0.0 && m.tolerance == 0.0);
            need(exact, "g(X0) = 0 exactly")?;
            need(
                count(r, |l| l.ends_with("/|g|_0")) == 10 * cfg.rho_grid.len(),
                "rho sweep",
            )
        }
        10 => {
            need(
                count(r, |l| l.ends_with(" ratio")) == 10 * 4 * cfg.estimate_tau_grid.len(),
                "ratios per problem, estimate and tau",
            )?;
            need(count(r, |l| l.contains("band")) > 0, "band measurement")
        }
        11 => {
            for l in ["max rho", "family doubling", "homogeneity 3u"] {
                need(count(r, |x| x == l) == 1, l)?;
            }
            need(count(r, |l| l == "refinement") > 0, "refinement")?;
            need(count(r, |l| l == "sweep/rho") == 20, "20-problem sweep")
        }
        _ => Ok(()),
    }
}

fn run_check(n: usize, check: Check, limit_s: u64, cfg: &SweepConfig) -> (Outcome, VerifyReport) {
    let start = Instant::now();
    let r = check.run(cfg);
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(limit_s);
    let mut detail = Vec::new();
    if !r.passed {
        detail.push(format!("failing: {}", r.failures().join("; ")));
    }
    if !r.recheck() {
        detail.push("stored verdicts inconsistent".into());
    }
    if let Err(what) = coverage(n, &r, cfg) {
        detail.push(format!("coverage: {what}"));
    }
    if elapsed > limit {
        detail.push("over time limit".into());
    }
    let out = Outcome {
        number: n,
        name: check.name(),
        pass: detail.is_empty(),
        elapsed,
        limit,
        detail: detail.join(" | "),
    };
    (out, r)
}

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        let name = e.file_name().to_string_lossy().into_owned();
        let mut bytes = fs::read(e.path()).unwrap();
        if name == "manifest.json" {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            v.as_object_mut().unwrap().remove("created_unix");
            bytes = serde_json::to_vec(&v).unwrap();
        }
        files.insert(name, bytes);
    }
    files
}

fn suite_via_cli(dir: &Path) -> (i32, Duration) {
    let out = dir.to_str().unwrap();
    let args = [
        "schauder", "suite", "--dim", "1", "--alpha", "0.5", "--seed", "7", "--out", out,
    ];
    let (mut so, mut se) = (Vec::new(), Vec::new());
    let start = Instant::now();
    let code = cli::run(args, &mut so, &mut se);
    (code, start.elapsed())
}

#[test]
fn acceptance() {
    let cfg = pinned_config();
    cfg.validate().unwrap();
    let limits = [1, 5, 60, 60, 30, 30, 30, 10, 30, 120, 300];
    let mut outcomes = Vec::new();
    let mut reports = Vec::new();
    for (i, (check, limit)) in Check::ALL.into_iter().zip(limits).enumerate() {
        let (o, r) = run_check(i + 1, check, limit, &cfg);
        println!("{}", o.line());
        outcomes.push(o);
        reports.push(r);
    }

    // Determinism: the suite twice through the command line, compared
    // byte for byte with each other and with the in-process reports.
    let suite_time: Duration = outcomes.iter().map(|o| o.elapsed).sum();
    let limit = suite_time * 2;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (code_a, ta) = suite_via_cli(a.path());
    let (code_b, tb) = suite_via_cli(b.path());
    let (fa, fb) = (read_outputs(a.path()), read_outputs(b.path()));
    let mut detail = Vec::new();
    if code_a != code_b {
        detail.push(format!("exit codes {code_a} vs {code_b}"));
    }
    if fa != fb {
        let differ: Vec<_> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).cloned().collect();
        detail.push(format!("outputs differ: {differ:?}"));
    }
    for r in &reports {
        let name = format!("report_{}.json", r.check);
        if fa.get(&name).map(|v| v.as_slice()) != Some(r.to_json().unwrap().as_bytes()) {
            detail.push(format!("{name} differs from the in-process run"));
        }
    }
    if fa.len() != 2 * reports.len() + 1 {
        detail.push(format!("expected {} files, found {}", 2 * reports.len() + 1, fa.len()));
    }
    if ta.max(tb) > limit {
        detail.push("over time limit".into());
    }
    let det = Outcome {
        number: 12,
        name: "determinism",
        pass: detail.is_empty(),
        elapsed: ta + tb,
        limit,
        detail: detail.join(" | "),
    };
    println!("{}", det.line());
    outcomes.push(det);

    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", outcomes.len());

    for o in &outcomes {
        if UNATTAINABLE.contains(&o.number) {
            assert!(!o.pass, "criterion {} now passes; update UNATTAINABLE", o.number);
            let r = &reports[o.number - 1];
            assert!(
                r.notes.iter().any(|n| n.contains("divergent")),
                "criterion {} fails for an undocumented reason: {}",
                o.number,
                o.detail
            );
        } else {
            assert!(o.pass, "{}", o.line());
        }
    }
}
