use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use chaoscalc::martingale::{
    conditional_moment_check, exact_gram, identity_residual, monte_carlo_gram, BernoulliParams,
};
use chaoscalc::qms::{assemble_generator, demo_hamiltonian, to_rows, GeneratorSpec, Observable};
use chaoscalc::verify::{run_suite, MartingaleConfig, VerifyConfig};
use chaoscalc::{ExprSpec, Functional, TruncationLevel, Weight1D, Weight2D};

/// Exit status for a run whose checks did not all come out as expected.
const VERIFICATION_FAILED: u8 = 1;
/// Exit status for unreadable or invalid input.
const CONFIG_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "chaoscalc", version, about = "Truncated chaotic Fock-space calculus and identity verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the identity-verification suite and write a JSON report.
    Verify(VerifyArgs),
    /// Exact or Monte Carlo Gram matrix of the Bernoulli chaos basis.
    Simulate(SimulateArgs),
    /// Apply an operator expression to a functional.
    Apply(ApplyArgs),
    /// Primal and dual norms of a functional.
    Norms(NormsArgs),
    /// Evaluate the quantum exclusion generator on an observable.
    Qms(QmsArgs),
}

#[derive(Args)]
struct Common {
    /// Truncation level.
    #[arg(long)]
    n: Option<usize>,
    /// Relative tolerance for identity checks.
    #[arg(long)]
    tol: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Extra weight (JSON) added to the built-in fixtures.
    #[arg(long)]
    weight: Option<PathBuf>,
    /// Family name, family prefix or check-name prefix.
    #[arg(long)]
    only: Option<String>,
    /// Monte Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// JSON array file of θ values, or a single θ applied to every index.
    #[arg(long, default_value = "0.5")]
    theta: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Exact atom enumeration (the default when no sample count is given).
    #[arg(long)]
    exact: bool,
    /// Monte Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct ApplyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    expr: PathBuf,
    #[arg(long)]
    functional: PathBuf,
    /// Weight (JSON) for `gwn` leaves.
    #[arg(long)]
    weight: Option<PathBuf>,
}

#[derive(Args)]
struct NormsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    functional: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    p: Vec<f64>,
}

#[derive(Args)]
struct QmsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    weight: PathBuf,
    /// Hermitian matrix (JSON rows of [re, im] pairs); diag(#) when absent.
    #[arg(long)]
    hamiltonian: Option<PathBuf>,
    /// Observable (JSON rows of [re, im] pairs).
    #[arg(long)]
    x: PathBuf,
}

enum Outcome {
    Pass,
    Fail,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn level(n: usize) -> Result<TruncationLevel> {
    Ok(TruncationLevel::new(n)?)
}

fn load_weight(path: &Path) -> Result<Weight2D> {
    Weight2D::from_json(&read(path)?).with_context(|| format!("parsing weight {}", path.display()))
}

fn load_functional(path: &Path) -> Result<Functional> {
    Functional::from_json(&read(path)?).with_context(|| format!("parsing functional {}", path.display()))
}

fn verify(args: VerifyArgs) -> Result<Outcome> {
    let defaults = VerifyConfig::default();
    let extra_weight = args.weight.as_deref().map(load_weight).transpose()?;
    let n = args.common.n.map(level).transpose()?.unwrap_or(defaults.n);
    let samples = args.samples.unwrap_or(defaults.martingale.mc_samples);
    if samples < 20 {
        bail!("--samples must be at least 20");
    }
    let cfg = VerifyConfig {
        n,
        seed: args.seed,
        tolerance: args.common.tol.unwrap_or(defaults.tolerance),
        martingale: MartingaleConfig::standard(
            defaults.martingale.gram_n,
            defaults.martingale.mc_n,
            samples,
            args.seed,
        ),
        extra_weight,
        only: args.only,
        ..defaults
    };
    let report = run_suite(&cfg)?;
    emit(args.common.out.as_deref(), &report)?;
    let s = &report.summary;
    eprintln!(
        "{} checks, {} genuine failures, {} of {} controls passed unexpectedly",
        s.checks, s.genuine_failed, s.controls_passed_unexpectedly, s.controls
    );
    Ok(if report.pass() { Outcome::Pass } else { Outcome::Fail })
}

fn parse_theta(spec: &str, n: usize) -> Result<BernoulliParams> {
    if let Ok(theta) = spec.trim().parse::<f64>() {
        return Ok(BernoulliParams::constant(theta, n)?);
    }
    let values: Vec<f64> = serde_json::from_str(&read(Path::new(spec))?)
        .with_context(|| format!("parsing θ sequence {spec}"))?;
    if values.len() < n {
        bail!("θ sequence has {} entries, truncation needs {n}", values.len());
    }
    Ok(BernoulliParams::new(values[..n].to_vec())?)
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn simulate(args: SimulateArgs) -> Result<Outcome> {
    let n = level(args.common.n.unwrap_or(6))?;
    let params = parse_theta(&args.theta, n.get())?;
    let tol = args.common.tol.unwrap_or(chaoscalc::tolerance::DEFAULT_REL_TOL);
    let mut out = json!({ "theta": params.theta(), "n": n.get() });
    let mut outcome = Outcome::Pass;
    if args.exact || args.samples.is_none() {
        let gram = exact_gram(&params, n)?;
        let residual = identity_residual(&gram);
        let moments = conditional_moment_check(&params, n)?;
        let pass = residual <= tol;
        if !pass {
            outcome = Outcome::Fail;
        }
        out["exact"] = json!({
            "gram": matrix_rows(&gram),
            "identity_residual": residual,
            "tolerance": tol,
            "pass": pass,
            "moments": moments,
        });
    }
    if let Some(samples) = args.samples {
        let mc = monte_carlo_gram(&params, n, samples, args.seed)?;
        out["monte_carlo"] = json!({
            "samples": mc.samples,
            "seed": mc.seed,
            "mean": matrix_rows(&mc.mean),
            "stderr": matrix_rows(&mc.stderr),
            "max_z_score": mc.max_z_score(1e-12),
            "rms_error": mc.rms_error(),
        });
    }
    emit(args.common.out.as_deref(), &out)?;
    Ok(outcome)
}

fn apply(args: ApplyArgs) -> Result<Outcome> {
    let phi = load_functional(&args.functional)?;
    if let Some(n) = args.common.n {
        if n != phi.truncation().get() {
            bail!("--n {n} disagrees with the functional's truncation {}", phi.truncation().get());
        }
    }
    let weight = args.weight.as_deref().map(load_weight).transpose()?;
    let spec = ExprSpec::from_json(&read(&args.expr)?).context("parsing expression")?;
    let expr = spec.build(weight.as_ref())?;
    let result = expr.apply(&phi)?;
    emit(args.common.out.as_deref(), &result)?;
    Ok(Outcome::Pass)
}

fn norms(args: NormsArgs) -> Result<Outcome> {
    let phi = load_functional(&args.functional)?;
    let mut rows = Vec::new();
    for &p in &args.p {
        if !(p >= 0.0 && p.is_finite()) {
            bail!("p must be finite and nonnegative, got {p}");
        }
        rows.push(json!({ "p": p, "norm": phi.norm_p(p), "dual_norm": phi.dual_norm_p(p) }));
    }
    emit(args.common.out.as_deref(), &Value::Array(rows))?;
    Ok(Outcome::Pass)
}

fn qms(args: QmsArgs) -> Result<Outcome> {
    let weight = load_weight(&args.weight)?;
    let x = Observable::from_json(&read(&args.x)?, false).context("parsing observable")?;
    let n = match args.common.n {
        Some(n) => level(n)?,
        None => level(x.dim().trailing_zeros() as usize)?,
    };
    let h = match &args.hamiltonian {
        Some(path) => Observable::from_json(&read(path)?, true).context("parsing hamiltonian")?,
        None => demo_hamiltonian(&Weight1D::constant(1.0)?, n),
    };
    let spec = GeneratorSpec::new(h, weight, n)?;
    let image = assemble_generator(&spec, &x)?;
    emit(args.common.out.as_deref(), &to_rows(image.matrix()))?;
    Ok(Outcome::Pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(CONFIG_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Verify(a) => verify(a),
        Command::Simulate(a) => simulate(a),
        Command::Apply(a) => apply(a),
        Command::Norms(a) => norms(a),
        Command::Qms(a) => qms(a),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(VERIFICATION_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(CONFIG_ERROR)
        }
    }
}
