//! Command line front end. Every subcommand reads a JSON problem
//! description, prints a JSON result, and keeps a strict exit contract:
//! 0 on success (including help/version), 1 on configuration or
//! computation errors, 2 when a verification check fails.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use pencil_core::eigen::solve_pencil;
use pencil_core::oscillation::locate_zeros;
use pencil_core::problem::{parse_problem, RunConfig};
use pencil_core::sturm::{admissible_sup, sigma_solution, transform_pencil};
use pencil_core::verify::{build_context, run_verification};
use pencil_core::Result;

#[derive(Parser)]
#[command(
    name = "pencil",
    version,
    about = "Spectral analysis of a fourth-order operator pencil on the unit interval"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the pencil and report both spectrum branches.
    Spectrum(SpectrumArgs),
    /// Inertia index of the pencil matrix at a parameter value.
    Inertia(LambdaArgs),
    /// Supremum of the admissible parameter range.
    Admissible(CommonArgs),
    /// Transport the problem to its second-order model form.
    Transform(LambdaArgs),
    /// Zero structure of one eigenfunction.
    Oscillation(OscillationArgs),
    /// Run the named theorem checks and report their statuses.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Problem description (JSON file).
    config: PathBuf,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Directory receiving one CSV per validated eigenfunction.
    #[arg(long, value_name = "DIR")]
    emit_eigenfunctions: Option<PathBuf>,
}

#[derive(Args)]
struct LambdaArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Parameter value.
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
}

#[derive(Args)]
struct OscillationArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Signed eigenvalue index: -n for the n-th negative, n for the n-th
    /// positive.
    #[arg(long, allow_negative_numbers = true)]
    index: i32,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also solve the opposite boundary family for the cross-family checks.
    #[arg(long)]
    pair: bool,
    /// Comma-separated subset of checks to run.
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    /// Seed for randomized probes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Spectrum(a) => spectrum(a),
        Cmd::Inertia(a) => inertia(a),
        Cmd::Admissible(a) => admissible(a),
        Cmd::Transform(a) => transform(a),
        Cmd::Oscillation(a) => oscillation(a),
        Cmd::Verify(a) => verify(a),
    }
}

fn load(common: &CommonArgs) -> Result<RunConfig> {
    let text = fs::read_to_string(&common.config)?;
    parse_problem(&text)
}

fn emit(common: &CommonArgs, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match &common.out {
        Some(path) => fs::write(path, text)?,
        None => {
            // a reader that stops consuming (pencil ... | head) is not an
            // error
            if let Err(e) = io::stdout().write_all(text.as_bytes()) {
                if e.kind() != io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

fn spectrum(a: SpectrumArgs) -> Result<u8> {
    let cfg = load(&a.common)?;
    let sol = solve_pencil(&cfg.spec, &cfg.mesh, &cfg.tol)?;
    let doc = sol.document(cfg.samples)?;
    if let Some(dir) = &a.emit_eigenfunctions {
        fs::create_dir_all(dir)?;
        for ef in &doc.eigenfunctions {
            let mut csv = String::from("x,y,dy,ddy\n");
            for i in 0..ef.xs.len() {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    ef.xs[i], ef.y[i], ef.dy[i], ef.ddy[i]
                ));
            }
            fs::write(dir.join(format!("eigenfunction_{}.csv", ef.signed_index)), csv)?;
        }
    }
    emit(&a.common, &serde_json::to_value(&doc)?)?;
    Ok(0)
}

fn inertia(a: LambdaArgs) -> Result<u8> {
    let cfg = load(&a.common)?;
    let sol = solve_pencil(&cfg.spec, &cfg.mesh, &cfg.tol)?;
    let ind = sol.inertia(a.lambda);
    emit(
        &a.common,
        &json!({
            "lambda": a.lambda,
            "ind": ind.negative,
            "near_singular": ind.near_singular,
        }),
    )?;
    Ok(0)
}

fn admissible(a: CommonArgs) -> Result<u8> {
    let cfg = load(&a)?;
    let adm = admissible_sup(&cfg.spec.p, &cfg.mesh, cfg.tol.admissible_rel)?;
    emit(
        &a,
        &json!({
            "sup_lambda": adm.sup_lambda,
            "elements": adm.elements,
        }),
    )?;
    Ok(0)
}

fn transform(a: LambdaArgs) -> Result<u8> {
    let cfg = load(&a.common)?;
    let adm = admissible_sup(&cfg.spec.p, &cfg.mesh, cfg.tol.admissible_rel)?;
    let profile = sigma_solution(&cfg.spec.p, a.lambda, &adm, &cfg.tol)?;
    let model = transform_pencil(&cfg.spec, a.lambda, &profile)?;
    let p_hat: Vec<f64> = profile.t.iter().map(|&t| model.p_hat.eval_raw(t)).collect();
    let r_hat: Vec<f64> = profile.t.iter().map(|&t| model.r_hat.eval_raw(t)).collect();
    emit(
        &a.common,
        &json!({
            "lambda": a.lambda,
            "omega": profile.omega,
            "t": profile.t,
            "p_hat": p_hat,
            "r_hat": r_hat,
            "alpha_term": model.alpha_term,
            "construction": {
                "profile": "sum of the forward and backward one-sided solutions, \
                            unit co-derivative gauge",
                "steps": profile.t.len() - 1,
                "min_sigma": profile.min_sigma,
                "profile_residual": profile.fd_residual,
                "sup_lambda": adm.sup_lambda,
            },
        }),
    )?;
    Ok(0)
}

fn oscillation(a: OscillationArgs) -> Result<u8> {
    let cfg = load(&a.common)?;
    let sol = solve_pencil(&cfg.spec, &cfg.mesh, &cfg.tol)?;
    let ef = sol.eigenfunction(a.index, cfg.samples)?;
    let report = locate_zeros(
        &ef.interpolant,
        cfg.samples,
        cfg.tol.value_tol_rel,
        cfg.tol.deriv_tol_rel,
    );
    let mut value = serde_json::to_value(&report)?;
    value["signed_index"] = json!(a.index);
    value["lambda"] = json!(ef.lambda);
    emit(&a.common, &value)?;
    Ok(0)
}

fn verify(a: VerifyArgs) -> Result<u8> {
    let cfg = load(&a.common)?;
    let ctx = build_context(&cfg, a.pair, a.seed)?;
    let only = if a.only.is_empty() { None } else { Some(a.only.as_slice()) };
    let report = run_verification(&ctx, only)?;
    emit(&a.common, &serde_json::to_value(&report)?)?;
    Ok(report.exit_code() as u8)
}
