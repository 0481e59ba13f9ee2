//! Command-line front end. Exit codes: 0 on success, 1 when a check fails
//! (failed self-check, non-convergence, violated inequality), 2 on bad
//! input or configuration.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde_json::json;

use cliffsolve::clifford::{Multivector, Paravector};
use cliffsolve::config::ProblemConfig;
use cliffsolve::grid::{Field, GridDomain};
use cliffsolve::kernels::{
    cauchy_kernel, disturbed_kernel, kernel_difference, small_argument_constant, yukawa_kernel,
    KernelParams,
};
use cliffsolve::magneto::{solve_magnetization, verify_inequalities, MagnetoSetup};
use cliffsolve::verify;
use cliffsolve::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cliffsolve",
    version,
    about = "Singular integral operators and monotone magnetization solves on voxel grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the built-in algebra and special-function self-checks.
    Verify {
        /// Emit outcomes as JSON instead of one line per check.
        #[arg(long)]
        json: bool,
    },
    /// Tabulate kernel asymptotics over log-spaced radii (CSV).
    Kernels {
        /// Space dimension (2, 3 or 4).
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Scalar part of the disturbance.
        #[arg(long, default_value_t = 1.0)]
        a0: f64,
        /// Vector part of the disturbance, comma separated (default zero).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        a: Vec<f64>,
        /// Ray direction to sample along, comma separated (default diagonal).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        direction: Vec<f64>,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assemble the singular operator for a config and print diagnostics.
    Operator {
        #[arg(long)]
        config: PathBuf,
        /// Output file for the diagnostics JSON (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve f(u) + Bu = g for the configured curve and applied field.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for solution.csv and solve_result.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Magnetization pipeline: solve, then induced-field inequalities.
    Magneto {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the field files and reports.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Skip the sampling audit of the curve's claims.
        #[arg(long)]
        skip_audit: bool,
    },
}

/// Whether the run's checks all passed (distinct from hard errors).
enum RunStatus {
    Clean,
    CheckFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Verify { json } => run_verify(json),
        Command::Kernels {
            n,
            a0,
            a,
            direction,
            out,
        } => run_kernels(n, a0, a, direction, out),
        Command::Operator { config, out } => run_operator(&config, out),
        Command::Solve { config, out } => run_solve(&config, &out),
        Command::Magneto {
            config,
            out,
            skip_audit,
        } => run_magneto(&config, &out, skip_audit),
    };
    match run {
        Ok(RunStatus::Clean) => ExitCode::SUCCESS,
        Ok(RunStatus::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for anything the user can fix in the invocation, 1 for runtime
/// failures of the mathematics.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::DimensionMismatch(_)
        | Error::UnsupportedDimension { .. }
        | Error::MaskSize { .. }
        | Error::Parse(_)
        | Error::Io(_) => 2,
        _ => 1,
    }
}

fn run_verify(as_json: bool) -> Result<RunStatus> {
    let outcomes = verify::run_all();
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    if as_json {
        println!(
            "{}",
            serde_json::to_string_pretty(&outcomes).expect("outcomes serialize")
        );
    } else {
        for o in &outcomes {
            let flag = if o.pass { "pass" } else { "FAIL" };
            println!("{flag}  {:32} {}", o.name, o.detail);
        }
        println!("{} checks, {failed} failed", outcomes.len());
    }
    Ok(if failed == 0 {
        RunStatus::Clean
    } else {
        RunStatus::CheckFailed
    })
}

fn run_kernels(
    n: usize,
    a0: f64,
    a: Vec<f64>,
    direction: Vec<f64>,
    out: Option<PathBuf>,
) -> Result<RunStatus> {
    let a_vec = if a.is_empty() { vec![0.0; n] } else { a };
    if a_vec.len() != n {
        return Err(Error::Config(format!(
            "--a has {} components for n = {n}",
            a_vec.len()
        )));
    }
    let params = KernelParams::new(n, Paravector::new(a0, a_vec)?)?;

    let mut dir = if direction.is_empty() {
        vec![1.0; n]
    } else {
        direction
    };
    if dir.len() != n {
        return Err(Error::Config(format!(
            "--direction has {} components for n = {n}",
            dir.len()
        )));
    }
    let len = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    if !(len.is_finite() && len > 0.0) {
        return Err(Error::Config("--direction must be a nonzero vector".into()));
    }
    for d in &mut dir {
        *d /= len;
    }

    let mut table = String::new();
    table.push_str(
        "r,cauchy_norm,disturbed_norm,difference_norm,scaled_difference,yukawa,profile_constant\n",
    );
    // Four decades, twelve points each, covering the asymptotic fit window.
    let steps = 48;
    for k in 0..=steps {
        let r = 10f64.powf(-3.0 + 4.0 * k as f64 / steps as f64);
        let x: Vec<f64> = dir.iter().map(|d| d * r).collect();
        let cauchy = cauchy_kernel(&x)?.norm();
        let disturbed = disturbed_kernel(&params, &x)?.norm();
        let difference = kernel_difference(&params, &x)?.norm();
        let scaled = r.powi(n as i32 - 1) * difference;
        let yukawa = yukawa_kernel(&params, &x).unwrap_or(f64::NAN);
        let profile = small_argument_constant(&params, r).unwrap_or(f64::NAN);
        table.push_str(&format!(
            "{r:.17e},{cauchy:.17e},{disturbed:.17e},{difference:.17e},{scaled:.17e},{yukawa:.17e},{profile:.17e}\n"
        ));
    }

    match out {
        Some(path) => std::fs::write(&path, table)?,
        None => print!("{table}"),
    }
    Ok(RunStatus::Clean)
}

/// Gaussian bump scaled to the domain box, the standard probe for the
/// left-inverse check.
fn probe_bump(domain: &Arc<GridDomain<f64>>) -> Result<Field<f64>> {
    let n = domain.dimension();
    let (lo, hi) = domain.bounds();
    let center: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let half = lo
        .iter()
        .zip(hi)
        .map(|(l, h)| 0.5 * (h - l))
        .fold(f64::INFINITY, f64::min);
    let width_sq = 0.18 * half * half;
    Field::from_fn(domain, |x| {
        let r2: f64 = x
            .iter()
            .zip(&center)
            .map(|(xi, ci)| (xi - ci) * (xi - ci))
            .sum();
        let mut m = Multivector::zero(n);
        m.set_coeff(0, Complex64::new((-r2 / width_sq).exp(), 0.0));
        m
    })
}

fn run_operator(config: &PathBuf, out: Option<PathBuf>) -> Result<RunStatus> {
    let cfg = ProblemConfig::from_path(config)?;
    let ctx = cfg.build_context::<f64>()?;
    if ctx.exterior_pad() == 0 {
        return Err(Error::Config(
            "operator diagnostics need operator.exterior_pad >= 1".into(),
        ));
    }
    let domain = ctx.domain().clone();

    let bp = ctx.borel_pompeiu_check(&probe_bump(&domain)?)?;
    let norm = ctx.operator_norm_estimate(80, 7)?;
    let min_rayleigh = ctx.sampled_min_rayleigh(64, 11)?;

    let diagnostics = json!({
        "norm_estimate": norm.sigma,
        "min_rayleigh": min_rayleigh,
        "bp_interior_residual": bp.interior_rel_residual,
        "bp_exterior_norm": bp.exterior_rel,
        "grid_N": domain.cells(),
        "dimension": domain.dimension(),
        "a0": ctx.params().a0(),
        "a_vec": ctx.params().disturbance().a,
    });
    let text = serde_json::to_string_pretty(&diagnostics).expect("diagnostics serialize");
    match out {
        Some(path) => std::fs::write(&path, text)?,
        None => println!("{text}"),
    }
    Ok(RunStatus::Clean)
}

fn run_solve(config: &PathBuf, out_dir: &PathBuf) -> Result<RunStatus> {
    let cfg = ProblemConfig::from_path(config)?;
    let curve = cfg.require_curve()?;
    let ctx = cfg.build_context::<f64>()?;
    let applied = cfg.build_applied(ctx.domain())?;
    let setup = MagnetoSetup {
        ctx: &ctx,
        curve,
        applied: &applied,
    };
    let solve_cfg = cfg.solve_config::<f64>(curve);
    let outcome = solve_magnetization(&setup, &solve_cfg, None, 0)?;

    std::fs::create_dir_all(out_dir)?;
    outcome
        .magnetization
        .write_csv_path(&out_dir.join("solution.csv"))?;
    let summary = outcome.solve.summary();
    write_json(&out_dir.join("solve_result.json"), &summary)?;

    println!(
        "converged: {} after {} iterations, final residual {:.3e}",
        summary.converged, summary.iterations, summary.final_residual
    );
    Ok(if summary.converged {
        RunStatus::Clean
    } else {
        RunStatus::CheckFailed
    })
}

fn run_magneto(config: &PathBuf, out_dir: &PathBuf, skip_audit: bool) -> Result<RunStatus> {
    let cfg = ProblemConfig::from_path(config)?;
    let curve = cfg.require_curve()?;
    let ctx = cfg.build_context::<f64>()?;
    let applied = cfg.build_applied(ctx.domain())?;
    let setup = MagnetoSetup {
        ctx: &ctx,
        curve,
        applied: &applied,
    };
    let solve_cfg = cfg.solve_config::<f64>(curve);
    let audit_samples = if skip_audit { None } else { Some(20_000) };
    let outcome = solve_magnetization(&setup, &solve_cfg, audit_samples, 0xA0D17)?;

    // Norm excess for the magnitude inequality: measured operator norm over
    // 1, padded by 2% for the power-iteration bias (it approaches sigma_max
    // from below).
    let sigma = ctx.operator_norm_estimate(80, 7)?.sigma;
    let norm_excess = (sigma - 1.0).max(0.0) + 0.02;
    let report = verify_inequalities(&ctx, &outcome.magnetization, 1e-6, norm_excess)?;

    std::fs::create_dir_all(out_dir)?;
    outcome
        .magnetization
        .write_csv_path(&out_dir.join("magnetization.csv"))?;
    if ctx.domain().dimension() == 3 {
        outcome
            .magnetization
            .write_vtk_path(&out_dir.join("magnetization.vtk"), "magnetization")?;
    }
    let summary = outcome.solve.summary();
    write_json(&out_dir.join("solve_result.json"), &summary)?;
    write_json(&out_dir.join("inequality_report.json"), &report)?;

    println!(
        "converged: {} after {} iterations, final residual {:.3e}",
        summary.converged, summary.iterations, summary.final_residual
    );
    println!(
        "(H_i, M) = {:.6e}, |M|^2 = {:.6e}: sign {} (slack {:.1e}), bound {} (excess {:.3})",
        report.hi_dot_m,
        report.m_norm_sq,
        verdict(report.ineq2_pass),
        report.sign_slack,
        verdict(report.ineq3_pass),
        report.norm_excess,
    );
    let clean = summary.converged && report.ineq2_pass && report.ineq3_pass;
    Ok(if clean {
        RunStatus::Clean
    } else {
        RunStatus::CheckFailed
    })
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "holds"
    } else {
        "VIOLATED"
    }
}

fn write_json<S: serde::Serialize>(path: &std::path::Path, value: &S) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}
