//! Acceptance criteria, one line of output per criterion.
//!
//! Runs without the libtest harness so the summary lines are always printed;
//! exits nonzero when any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use chaoscalc::verify::{
    check_car, check_commutation_1d, check_commutation_2d, check_hop, check_l2_lemmas,
    check_martingale, check_norm_bounds, check_qms, check_representations,
    check_riesz_intertwining, check_spectral_shifts, run_suite, Labeled, MartingaleConfig,
    VerifyConfig, WeightSet, FAMILIES, SCALAR_TOL,
};
use chaoscalc::weights::fixtures;
use chaoscalc::{CheckResult, TruncationLevel, VerificationReport, Weight1D, Weight2D};

const TOL: f64 = 1e-12;
const SEED: u64 = 42;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn level(n: usize) -> TruncationLevel {
    TruncationLevel::new(n).unwrap()
}

/// Every genuine check passes and every control fails.
fn report_ok(reports: &[&VerificationReport]) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for r in reports {
        if let Some(c) = r.failures().next() {
            return Err(format!("{} residual {:e} tolerance {:e}", c.check, c.residual, c.tolerance));
        }
        worst = worst.max(r.max_residual());
    }
    Ok(worst)
}

fn checks<'a>(r: &'a VerificationReport, prefix: &'a str) -> impl Iterator<Item = &'a CheckResult> + 'a {
    r.genuine().filter(move |c| c.check.starts_with(prefix))
}

fn require(cond: bool, what: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.to_string())
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Result<String, String>) -> Outcome {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    match (result, limit) {
        (Err(e), _) => Outcome { pass: false, detail: e },
        (Ok(d), Some(limit)) if elapsed > limit => Outcome {
            pass: false,
            detail: format!("{d}; took {elapsed:.2?}, limit {limit:?}"),
        },
        (Ok(d), _) => Outcome {
            pass: true,
            detail: format!("{d}; {elapsed:.2?}"),
        },
    }
}

fn default_weights() -> WeightSet {
    WeightSet::build(&VerifyConfig::default()).unwrap()
}

fn random_2d(set: &WeightSet) -> Vec<Labeled<Weight2D>> {
    set.two_d.iter().filter(|w| w.label.starts_with("random")).cloned().collect()
}

fn random_1d(set: &WeightSet) -> Vec<Labeled<Weight1D>> {
    set.one_d.iter().filter(|w| w.label.starts_with("random")).cloned().collect()
}

fn car() -> Outcome {
    timed(Some(Duration::from_secs(5)), || {
        let r = check_car(level(8)).map_err(|e| e.to_string())?;
        report_ok(&[&r])?;
        require(r.genuine().all(|c| c.residual == 0.0 && c.tolerance == 0.0), "nonzero CAR residual")?;
        require(checks(&r, "car/l2/").count() == 6, "missing L2 relations")?;
        Ok(format!("{} identities at n = 8, all residuals exactly 0", r.genuine().count()))
    })
}

fn hop() -> Outcome {
    timed(None, || {
        let r = check_hop(level(8)).map_err(|e| e.to_string())?;
        report_ok(&[&r])?;
        let basis = checks(&r, "hop/closed-form-basis").next().ok_or("missing hop check")?;
        require(basis.residual == 0.0 && basis.cases == 64 * 256, "hop residual or coverage")?;
        Ok(format!("{} (j, k, sigma) cases, residual 0", basis.cases))
    })
}

fn representations() -> Outcome {
    timed(None, || {
        let fixtures_at_four = [
            Labeled::new("zero", Weight2D::zero()),
            Labeled::new("unit-diagonal", fixtures::unit_diagonal()),
            Labeled::new("running", fixtures::running()),
        ];
        let ones = Weight1D::constant(1.0).unwrap();
        let r4 = check_representations(&fixtures_at_four, &[Labeled::new("one", ones)], level(4), TOL)
            .map_err(|e| e.to_string())?;
        // The same weights restricted to [0,3]², checked for stabilization inside a larger truncation.
        let unit_on_four = Weight1D::from_values((0..4).map(|k| (k, 1.0))).unwrap();
        let restricted = [
            Labeled::new("zero", Weight2D::zero()),
            Labeled::new("unit-diagonal-0..3", Weight2D::from_entries((0..4).map(|k| (k, k, 1.0))).unwrap()),
            Labeled::new("running", fixtures::running()),
        ];
        let r8 = check_representations(&restricted, &[Labeled::new("one-0..3", unit_on_four)], level(8), TOL)
            .map_err(|e| e.to_string())?;
        let worst = report_ok(&[&r4, &r8])?;
        for r in [&r4, &r8] {
            let series: Vec<_> = checks(r, "representations/gwn-series").collect();
            require(series.len() == 3, "a fixture skipped the series check")?;
            for c in series {
                let from = c.inputs["stabilizes_from"].as_u64().unwrap();
                require(from <= 3, "partial sums stabilize after index 3")?;
            }
            require(checks(r, "representations/wn1d-series").count() == 1, "missing 1D series")?;
            require(checks(r, "representations/number-series").count() == 1, "missing number series")?;
        }
        Ok(format!("three fixtures, 1D and number series; max residual {worst:.1e}"))
    })
}

fn commutation() -> Outcome {
    timed(Some(Duration::from_secs(60)), || {
        let set = default_weights();
        let (ws, us) = (random_2d(&set), random_1d(&set));
        require(ws.len() == 5 && us.len() == 5, "expected 5 random weights")?;
        let n = level(8);
        let one_d_weights = [
            vec![Labeled::new("one", Weight1D::constant(1.0).unwrap())],
            us.clone(),
        ]
        .concat();
        let c1 = check_commutation_1d(&one_d_weights, n, TOL).map_err(|e| e.to_string())?;
        let c2 = check_commutation_2d(&ws, &us, n, TOL).map_err(|e| e.to_string())?;
        let l2 = check_l2_lemmas(&ws, &us, n, TOL).map_err(|e| e.to_string())?;
        let worst = report_ok(&[&c1, &c2, &l2])?;
        require(c2.genuine().all(|c| c.tolerance == TOL), "a random weight carries a tail")?;
        let total = c1.genuine().count() + c2.genuine().count() + l2.genuine().count();
        Ok(format!("{total} checks at n = 8, seed {SEED}; max residual {worst:.1e}"))
    })
}

fn spectral_shifts() -> Outcome {
    timed(None, || {
        let set = default_weights();
        let ws = random_2d(&set);
        let r = check_spectral_shifts(&ws, &[], level(8), SCALAR_TOL).map_err(|e| e.to_string())?;
        let worst = report_ok(&[&r])?;
        require(checks(&r, "spectral-shifts/literal-oracle").count() == ws.len(), "literal oracle missing")?;
        let cases: usize = checks(&r, "spectral-shifts/add-index").map(|c| c.cases).sum();
        require(cases == ws.len() * 256 * 8, "not every (sigma, k) covered")?;
        Ok(format!("{cases} (sigma, k) cases per identity; max residual {worst:.1e}"))
    })
}

fn norm_bounds() -> Outcome {
    timed(None, || {
        let set = default_weights();
        let r = check_norm_bounds(&set.two_d, &set.one_d, level(8), 1000, SEED, TOL)
            .map_err(|e| e.to_string())?;
        let worst = report_ok(&[&r])?;
        let gwn = checks(&r, "norm-bounds/gwn").next().ok_or("missing bound")?;
        require(gwn.inputs["functionals"].as_u64().unwrap() >= 1000, "fewer than 1000 functionals")?;
        require(checks(&r, "norm-bounds/remark-comparison").all(|c| c.residual == 0.0), "remark comparison")?;
        require(r.genuine().filter(|c| c.check == "norm-bounds/wn1d").count() == set.one_d.len(), "missing 1D bound")?;
        Ok(format!("p in {{0, 1, 2}}; max bound excess {worst:.1e}"))
    })
}

fn riesz() -> Outcome {
    timed(None, || {
        let set = default_weights();
        let r = check_riesz_intertwining(&set.two_d, level(8), 100, SEED, TOL).map_err(|e| e.to_string())?;
        let worst = report_ok(&[&r])?;
        let c = checks(&r, "riesz-intertwining/annihilation").next().ok_or("missing check")?;
        require(c.inputs["nonreal_inputs"] == true, "no non-real input")?;
        require(c.inputs["vectors"].as_u64().unwrap() > 100, "fewer than 100 random vectors")?;
        Ok(format!("{} vectors; max residual {worst:.1e}", c.inputs["vectors"]))
    })
}

fn martingale() -> Outcome {
    timed(None, || {
        let cfg = MartingaleConfig::standard(10, 6, 100_000, SEED);
        let r = check_martingale(&cfg, TOL).map_err(|e| e.to_string())?;
        report_ok(&[&r])?;
        let grams: Vec<_> = checks(&r, "martingale/exact-gram").collect();
        require(grams.len() == 2 && grams.iter().all(|c| c.inputs["n"] == 10), "exact Gram coverage")?;
        require(checks(&r, "martingale/conditional-moments").count() == 2, "moment checks")?;
        let z = checks(&r, "martingale/monte-carlo-gram").map(|c| c.residual).fold(0.0, f64::max);
        let worst = grams.iter().map(|c| c.residual).fold(0.0, f64::max);
        Ok(format!("exact Gram residual {worst:.1e} at n = 10; max Monte Carlo z-score {z:.2} at n = 6"))
    })
}

fn qms() -> Outcome {
    timed(None, || {
        let set = default_weights();
        let u = random_1d(&set).remove(0).weight;
        let n = level(6);
        let r = check_qms(&set.qms, &u, n, 100, SEED, TOL).map_err(|e| e.to_string())?;
        let worst = report_ok(&[&r])?;
        require(checks(&r, "qms/sum-").count() == 3 * set.qms.len(), "a weight skipped the sum identity")?;
        require(
            checks(&r, "qms/generator-annihilates-identity").all(|c| c.residual == 0.0),
            "L(I) not exactly 0",
        )?;
        require(
            checks(&r, "qms/adjoint-covariance").all(|c| c.cases >= 100),
            "fewer than 100 random observables",
        )?;
        Ok(format!("{} weights at n = 6; max residual {worst:.1e}", set.qms.len()))
    })
}

fn controls() -> Outcome {
    timed(None, || {
        let suite = run_suite(&VerifyConfig::default()).map_err(|e| e.to_string())?;
        for family in FAMILIES {
            let r = suite.family(family).ok_or(format!("{family} missing"))?;
            require(r.controls().count() >= 1, &format!("{family} has no negative control"))?;
            if let Some(c) = r.controls().find(|c| c.pass) {
                return Err(format!("{} passed despite the perturbation", c.check));
            }
        }
        require(suite.pass(), "default suite failed")?;
        Ok(format!(
            "{} controls across {} families all detected",
            suite.summary.controls,
            FAMILIES.len()
        ))
    })
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("CAR suite", car),
        ("hop closed form", hop),
        ("series representations", representations),
        ("commutation suite", commutation),
        ("spectral shifts", spectral_shifts),
        ("norm bounds", norm_bounds),
        ("Riesz intertwining", riesz),
        ("probabilistic side", martingale),
        ("generator sum identity", qms),
        ("negative controls", controls),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {name}: {verdict} ({})", i + 1, outcome.detail);
        if !outcome.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
