//! `mfcsim run` and `mfcsim verify`.
//!
//! Exit codes: 0 success, 1 a runtime or certification assertion failed,
//! 2 invalid input, 3 a simulation diverged.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{Config, Overrides};
use crate::controller::SignMode;
use crate::error::{Error, Result};
use crate::sim::{self, DerivSpec, SimConfig, SimResult, Summary, Variant};
use crate::system::{check_lie_callbacks, check_relative_degree};
use crate::uncertainty::{aux_deltas, certify_theorem1, check_bounds};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// Environment variable that replaces `--out`.
pub const OUT_ENV: &str = "MFCSIM_OUT";

/// Relative tolerance for closed-form Lie derivatives against finite differences.
pub const LIE_TOL: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "mfcsim", version, about = "Model-following control simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate every configured variant and write CSVs plus summary.json.
    Run(RunArgs),
    /// Certify the configured plant on a sample grid.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory. MFCSIM_OUT takes precedence when set.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// `pure` or `layer:EPS`.
    #[arg(long)]
    pub sign: Option<SignMode>,
    /// `oracle` or `levant:L`.
    #[arg(long)]
    pub deriv: Option<DerivSpec>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: PathBuf,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } | Error::DifferentiatorDivergence { .. } | Error::NumericOverflow { .. } => {
            EXIT_DIVERGENCE
        }
        Error::RelativeDegreeViolation { .. }
        | Error::TheoremViolation { .. }
        | Error::BoundViolation { .. }
        | Error::DegenerateControl { .. }
        | Error::DegenerateInputChannel
        | Error::Singular => EXIT_ASSERTION,
        Error::InvalidDimension(_)
        | Error::UnstableSpecification { .. }
        | Error::NotHurwitz(_)
        | Error::GainInfeasible { .. }
        | Error::Config(_)
        | Error::Io(_) => EXIT_INVALID,
    }
}

pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Run(args) => {
            let out = std::env::var_os(OUT_ENV).map(PathBuf::from).or(args.out.clone());
            let Some(out) = out else {
                eprintln!("error: --out or {OUT_ENV} is required");
                return EXIT_INVALID;
            };
            cmd_run(&args, &out)
        }
        Command::Verify(args) => cmd_verify(&args.config),
    }
}

/// Per-run entry of the manifest.
#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub label: String,
    pub csv: Option<PathBuf>,
    pub summary: Option<Summary>,
    pub error: Option<String>,
    pub audits_pass: bool,
}

#[derive(Debug, Serialize)]
pub struct AssertionFlags {
    /// Gain dominance held at every audited step.
    pub gain_audit: bool,
    /// Lyapunov rate and monotonicity held on every audited run.
    pub lyapunov: bool,
    /// Bound validity held for every redesign run (violations abort the run).
    pub bounds: bool,
    /// No run diverged.
    pub finite: bool,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub runs: Vec<RunRecord>,
    pub assertions: AssertionFlags,
    pub pass: bool,
}

fn load_configs(path: &Path, overrides: &Overrides) -> Result<Vec<SimConfig>> {
    let mut cfg = Config::load(path)?;
    cfg.apply(overrides);
    cfg.sim_configs()
}

fn run_all(cfgs: &[SimConfig]) -> Vec<Result<SimResult>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs.iter().map(|c| scope.spawn(move || sim::run(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

fn write_file(path: &Path, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(path, text)?;
    files.push(path.to_path_buf());
    Ok(())
}

pub fn cmd_run(args: &RunArgs, out: &Path) -> i32 {
    let overrides = Overrides {
        dt: args.dt,
        horizon: args.horizon,
        sign: args.sign,
        deriv: args.deriv,
    };
    let cfgs = match load_configs(&args.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    match run_and_write(args, out, &cfgs) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn run_and_write(args: &RunArgs, out: &Path, cfgs: &[SimConfig]) -> Result<i32> {
    std::fs::create_dir_all(out)?;
    let results = run_all(cfgs);
    let mut files = Vec::new();
    let mut runs = Vec::new();
    let mut code = EXIT_OK;
    let mut flags = AssertionFlags {
        gain_audit: true,
        lyapunov: true,
        bounds: true,
        finite: true,
    };
    for (cfg, res) in cfgs.iter().zip(results) {
        let label = cfg.variant.name().to_string();
        match res {
            Ok(r) => {
                let csv = out.join(format!("{label}.csv"));
                write_file(&csv, &r.to_csv(), &mut files)?;
                if cfg.variant == Variant::MatchedOnly {
                    write_file(&out.join(format!("{label}_nominal.csv")), &r.nominal_csv(), &mut files)?;
                }
                let s = &r.summary;
                flags.gain_audit &= s.gain_audit_violations == 0;
                flags.lyapunov &= s.lyapunov_rate_violations == 0 && s.lyapunov_monotone_violations == 0;
                let ok = s.audits_pass();
                if !ok {
                    code = code.max(EXIT_ASSERTION);
                }
                println!(
                    "{label}: final-window max |e| = {:.3e}, max V = {:.3e}, audits {}",
                    s.final_window_max_abs_e,
                    s.max_v,
                    if ok { "pass" } else { "FAIL" }
                );
                runs.push(RunRecord {
                    label,
                    csv: Some(csv),
                    summary: Some(r.summary),
                    error: None,
                    audits_pass: ok,
                });
            }
            Err(e) => {
                let c = exit_code(&e);
                match &e {
                    Error::BoundViolation { .. } => flags.bounds = false,
                    _ if c == EXIT_DIVERGENCE => flags.finite = false,
                    _ => {}
                }
                code = code.max(c);
                eprintln!("{label}: {e}");
                runs.push(RunRecord {
                    label,
                    csv: None,
                    summary: None,
                    error: Some(e.to_string()),
                    audits_pass: false,
                });
            }
        }
    }
    let summary_path = out.join("summary.json");
    files.push(summary_path.clone());
    let manifest = RunManifest {
        config: args.config.clone(),
        out_dir: out.to_path_buf(),
        files,
        runs,
        assertions: flags,
        pass: code == EXIT_OK,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&summary_path, json + "\n")?;
    Ok(code)
}

/// Lattice on `[-2, 2]^n` with at most 4096 points, plus the configured `x0`.
pub fn sample_grid(n: usize, x0: &[f64]) -> Vec<Vec<f64>> {
    let mut per_axis = 2usize;
    while per_axis < 64 && (per_axis + 1).checked_pow(n as u32).is_some_and(|p| p <= 4096) {
        per_axis += 1;
    }
    let total = per_axis.pow(n as u32);
    let coord = |j: usize| -2.0 + 4.0 * j as f64 / (per_axis - 1) as f64;
    let mut out = Vec::with_capacity(total + 1);
    out.push(x0.to_vec());
    for mut idx in 0..total {
        let mut x = Vec::with_capacity(n);
        for _ in 0..n {
            x.push(coord(idx % per_axis));
            idx /= per_axis;
        }
        out.push(x);
    }
    out
}

pub fn cmd_verify(config: &Path) -> i32 {
    match verify(config) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_ASSERTION,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn verify(config: &Path) -> Result<bool> {
    let cfgs = load_configs(config, &Overrides::default())?;
    let cfg = &cfgs[0];
    let plant = cfg.system.build()?;
    let sys = &plant.system;
    if cfg.x0.len() != sys.dim() {
        return Err(Error::Config(format!("x0 needs {} entries", sys.dim())));
    }
    let samples = sample_grid(sys.dim(), &cfg.x0);
    println!("samples: {}", samples.len());

    let rd = check_relative_degree(sys, &samples, 1e-6)?;
    println!(
        "relative degree {}: pass (worst vanishing {:.2e}, min coefficient {:.3e})",
        sys.dim(),
        rd.worst_vanishing,
        rd.min_control_coefficient
    );

    let lie = check_lie_callbacks(sys, &samples);
    let lie_ok = lie.worst() <= LIE_TOL;
    println!(
        "lie derivatives: {} (worst relative error {:.2e})",
        if lie_ok { "pass" } else { "FAIL" },
        lie.worst()
    );

    let th = certify_theorem1(sys, &samples)?;
    println!(
        "matched/unmatched: {} matched, {} unmatched, {} inconclusive; pass",
        th.matched, th.unmatched_confirmed, th.inconclusive
    );

    let mut bound_failures = 0;
    for x in &samples {
        let aux = aux_deltas(sys, x)?;
        if let Err(e) = check_bounds(&plant.bounds, &aux, x, 0.0) {
            if bound_failures == 0 {
                eprintln!("bounds at {x:?}: {e}");
            }
            bound_failures += 1;
        }
    }
    println!(
        "uncertainty bounds: {} ({bound_failures} violations)",
        if bound_failures == 0 { "pass" } else { "FAIL" }
    );
    Ok(lie_ok && bound_failures == 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_size_and_range() {
        let g = sample_grid(3, &[1.0, 0.0, 0.0]);
        assert_eq!(g.len(), 16 * 16 * 16 + 1);
        assert!(g.iter().flatten().all(|v| (-2.0..=2.0).contains(v)));
        assert_eq!(sample_grid(1, &[0.0]).len(), 65);
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(exit_code(&Error::Divergence { t: 1.0 }), EXIT_DIVERGENCE);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_INVALID);
        assert_eq!(
            exit_code(&Error::BoundViolation {
                t: 0.0,
                detail: String::new()
            }),
            EXIT_ASSERTION
        );
    }
}
