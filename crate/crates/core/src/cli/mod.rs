//! Command-line front end of the `turnpike` binary.
//!
//! Exit codes: 0 success, 1 other failure or usage error, 2 infeasible,
//! 3 certificate failure, 4 bad configuration.

pub mod config;
pub mod output;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::dissipativity::{certify, verify_strict_dissipativity, RateChoice};
use crate::error::Error;
use crate::model::{is_admissible_with, Problem};
use crate::ocp::solve_ocp_with;
use crate::steady_state::{certified_steady_state, verify_kkt};
use crate::system_analysis::analyze;
use crate::turnpike::{InitialSet, TurnpikeReport};
pub use config::Config;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_CERTIFICATE: i32 = 3;
pub const EXIT_BAD_CONFIG: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "turnpike", version, about = "Constrained LQ steady states, dissipativity certificates and turnpike scans")]
struct Cli {
    /// Seed for every sampling step.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Spectral report: eigenvalues, detectability, steady kernel, control gain.
    Analyze { config: PathBuf },
    /// Optimal steady state with its KKT certificate.
    Steady { config: PathBuf },
    /// Storage function for a dissipation rate, checked on sampled points.
    Certify {
        config: PathBuf,
        /// Fixed dissipation rate.
        #[arg(long, conflicts_with = "auto", allow_negative_numbers = true)]
        s: Option<f64>,
        /// Half of the largest feasible rate (the default).
        #[arg(long)]
        auto: bool,
    },
    /// Finite-horizon optimal trajectory.
    Solve {
        config: PathBuf,
        /// Initial state, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long = "N")]
        horizon: usize,
        /// Trajectory CSV; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exceedance counts over initial states, horizons and thresholds.
    Scan {
        config: PathBuf,
        /// Initial set: `ball:<center>:<radius>`, `box:<lower>:<upper>`,
        /// `cone:<height>` or `points:<x>;<x>;…`. Defaults to `[xtp]`.
        #[arg(long, allow_hyphen_values = true)]
        xtp: Option<String>,
        /// Horizons, comma separated.
        #[arg(long = "N", value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
        /// Thresholds, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        /// Number of sampled initial states.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Scan CSV; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// SVG of ‖x*(i) − x_e‖ along the longest horizon.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Run a built-in example end to end.
    Demo {
        example: Example,
        /// Print the example's configuration file and exit.
        #[arg(long)]
        config_only: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Example {
    Example1,
    Example2,
}

impl Example {
    fn name(self) -> &'static str {
        match self {
            Example::Example1 => "example1",
            Example::Example2 => "example2",
        }
    }
}

/// A failed command with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn config(e: Error) -> Self {
        Self::new(EXIT_BAD_CONFIG, e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Infeasible { .. } | Error::InfeasibleSteadyState => EXIT_INFEASIBLE,
            Error::NoFeasibleRate
            | Error::StorageInfeasible(_)
            | Error::NotDecaying
            | Error::WitnessInadmissible { .. }
            | Error::SingularReducedHessian
            | Error::HypothesisViolated(_) => EXIT_CERTIFICATE,
            Error::Config(_)
            | Error::Dimension { .. }
            | Error::NotPsd { .. }
            | Error::NotPd { .. }
            | Error::NotSymmetric(_)
            | Error::BadFactor(..)
            | Error::InvalidPiece(_) => EXIT_BAD_CONFIG,
            Error::NonConvergence { .. } | Error::NonConverged { .. } => EXIT_OTHER,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_OTHER, e.to_string())
    }
}

type Outcome = std::result::Result<i32, Failure>;

/// Run with the process streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_OTHER;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match &cli.command {
        Command::Analyze { config } => {
            let (_, p) = load(config)?;
            print_json(out, &serde_json::to_value(analyze(&p)).expect("report serializes"))?;
            Ok(EXIT_OK)
        }
        Command::Steady { config } => {
            let (_, p) = load(config)?;
            let cert = certified_steady_state(&p)?;
            let check = verify_kkt(&cert, &p);
            let mut value = serde_json::to_value(&cert).expect("certificate serializes");
            value["verification"] = serde_json::to_value(&check).expect("report serializes");
            print_json(out, &value)?;
            Ok(if check.passed && cert.kkt_ok { EXIT_OK } else { EXIT_CERTIFICATE })
        }
        Command::Certify { config, s, .. } => {
            let (cfg, p) = load(config)?;
            let choice = match s {
                Some(rate) if !(*rate > 0.0) => {
                    return Err(Failure::new(EXIT_BAD_CONFIG, format!("--s must be positive, got {rate}")))
                }
                Some(rate) => RateChoice::Fixed(*rate),
                None => RateChoice::Auto,
            };
            let (value, passed) = certificate_json(&p, choice, cfg.tolerances.samples, cli.seed)?;
            print_json(out, &value)?;
            Ok(if passed { EXIT_OK } else { EXIT_CERTIFICATE })
        }
        Command::Solve {
            config,
            x0,
            horizon,
            out: path,
        } => {
            let (cfg, p) = load(config)?;
            let x0 = parse_vector("--x0", x0, p.n())?;
            let opts = cfg.tolerances.ocp_options();
            let sol = solve_ocp_with(&p, &x0, *horizon, &opts)?;
            let csv = output::trajectory_csv(&sol.trajectory)?;
            match path {
                Some(path) => {
                    write_file(path, &csv)?;
                    let admissible = is_admissible_with(&p, &sol.trajectory, opts.admissibility_tol).admissible;
                    print_json(
                        out,
                        &json!({
                            "horizon": horizon,
                            "total_cost": sol.trajectory.total_cost,
                            "admissible": admissible,
                            "stats": sol.stats,
                            "trajectory_csv": path.display().to_string(),
                        }),
                    )?;
                }
                None => out.write_all(csv.as_bytes())?,
            }
            Ok(EXIT_OK)
        }
        Command::Scan {
            config,
            xtp,
            horizons,
            eps,
            samples,
            out: path,
            plot,
        } => {
            let (cfg, p) = load(config)?;
            let initial_set = match xtp {
                Some(spec) => parse_initial_set(spec)?,
                None => cfg.xtp.clone().ok_or_else(|| {
                    Failure::new(EXIT_BAD_CONFIG, "no initial set: pass --xtp or add an [xtp] table")
                })?,
            };
            check_grid(horizons, eps)?;
            let report = cfg.scan(&p, &initial_set, *samples, horizons, eps, cli.seed)?;
            let csv = output::scan_csv(&report.cells)?;
            if let Some(plot) = plot {
                write_file(plot, &output::decay_svg(&report.decay_series, "distance to the steady state"))?;
            }
            match path {
                Some(path) => {
                    write_file(path, &csv)?;
                    print_json(out, &scan_summary(&report))?;
                }
                None => out.write_all(csv.as_bytes())?,
            }
            if !report.all_ok {
                let _ = writeln!(err, "error: some cells exceed the bound M_E/eps");
            }
            Ok(if report.all_ok { EXIT_OK } else { EXIT_CERTIFICATE })
        }
        Command::Demo { example, config_only } => {
            let cfg = Config::builtin(example.name()).expect("built-in example");
            if *config_only {
                out.write_all(cfg.to_toml().map_err(Failure::config)?.as_bytes())?;
                return Ok(EXIT_OK);
            }
            demo(*example, &cfg, cli.seed, out)
        }
    }
}

fn load(path: &Path) -> std::result::Result<(Config, Problem), Failure> {
    let cfg = Config::load(path).map_err(Failure::config)?;
    let p = cfg.problem().map_err(Failure::config)?;
    Ok((cfg, p))
}

fn print_json(out: &mut dyn Write, value: &Value) -> std::io::Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value).expect("json value"))
}

fn write_file(path: &Path, text: &str) -> std::result::Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::new(EXIT_OTHER, format!("cannot write {}: {e}", path.display())))
}

fn parse_list(flag: &str, text: &str) -> std::result::Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Failure::new(EXIT_BAD_CONFIG, format!("{flag}: cannot parse {t:?} as a number")))
        })
        .collect()
}

fn parse_vector(flag: &str, text: &str, len: usize) -> std::result::Result<DVector<f64>, Failure> {
    let v = parse_list(flag, text)?;
    if v.len() != len {
        return Err(Failure::new(
            EXIT_BAD_CONFIG,
            format!("{flag}: expected {len} entries, got {}", v.len()),
        ));
    }
    Ok(DVector::from_vec(v))
}

/// `ball:<center>:<radius>`, `box:<lower>:<upper>`, `cone:<height>` or
/// `points:<x>;<x>;…` with comma-separated vectors.
fn parse_initial_set(spec: &str) -> std::result::Result<InitialSet, Failure> {
    let bad = || {
        Failure::new(
            EXIT_BAD_CONFIG,
            format!("--xtp: cannot parse {spec:?}; expected ball:<c>:<r>, box:<lo>:<hi>, cone:<h> or points:<x>;<x>"),
        )
    };
    let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
    let parts: Vec<&str> = rest.split(':').collect();
    match (kind, parts.as_slice()) {
        ("ball", [center, radius]) => Ok(InitialSet::Ball {
            center: parse_list("--xtp", center)?,
            radius: radius.trim().parse().map_err(|_| bad())?,
        }),
        ("box", [lower, upper]) => Ok(InitialSet::Box {
            lower: parse_list("--xtp", lower)?,
            upper: parse_list("--xtp", upper)?,
        }),
        ("cone", [height]) => Ok(InitialSet::ConeSlice {
            height: height.trim().parse().map_err(|_| bad())?,
        }),
        ("points", [points]) => Ok(InitialSet::Points {
            points: points
                .split(';')
                .map(|p| parse_list("--xtp", p))
                .collect::<std::result::Result<_, _>>()?,
        }),
        _ => Err(bad()),
    }
}

fn check_grid(horizons: &[usize], eps: &[f64]) -> std::result::Result<(), Failure> {
    if horizons.is_empty() || eps.is_empty() {
        return Err(Failure::new(EXIT_BAD_CONFIG, "--N and --eps need at least one value"));
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0)) {
        return Err(Failure::new(EXIT_BAD_CONFIG, format!("--eps: thresholds must be positive, got {e}")));
    }
    Ok(())
}

fn certificate_json(
    p: &Problem,
    choice: RateChoice,
    samples: usize,
    seed: u64,
) -> std::result::Result<(Value, bool), Failure> {
    let (_, sc) = certify(p, choice)?;
    let report = verify_strict_dissipativity(&sc, p, samples, seed)?;
    let passed = report.passed && sc.lmi_margin <= 0.0;
    let mut value = serde_json::to_value(&sc).expect("certificate serializes");
    value["verification"] = serde_json::to_value(&report).expect("report serializes");
    Ok((value, passed))
}

fn scan_summary(report: &TurnpikeReport) -> Value {
    json!({
        "cells": report.cells.len(),
        "infeasible_cells": report.infeasible_cells,
        "all_ok": report.all_ok,
        "m_e": report.m_e,
        "cost_gap": report.cost_gap,
        "rate": report.rate,
        "storage_spread": report.storage_spread,
        "storage_spread_a_priori": report.storage_spread_a_priori,
        "worst_ratio": report.worst_ratio,
        "count_spread": report.count_spread,
    })
}

fn demo(example: Example, cfg: &Config, seed: u64, out: &mut dyn Write) -> Outcome {
    let p = cfg.problem().map_err(Failure::config)?;
    let (samples, horizons): (usize, &[usize]) = match example {
        Example::Example1 => (20, &[10, 20, 50, 100]),
        Example::Example2 => (10, &[10, 20, 50, 100]),
    };
    let eps = [1e-3, 1e-2, 1e-1];
    writeln!(out, "== {} ==", example.name())?;
    let steady = certified_steady_state(&p)?;
    writeln!(
        out,
        "steady state x_e = {:?}, u_e = {:?}, mu = {}, boundary = {}, kkt_ok = {}",
        steady.x_e, steady.u_e, steady.mu, steady.boundary, steady.kkt_ok
    )?;
    let (cert, certified) = certificate_json(&p, RateChoice::Auto, cfg.tolerances.samples, seed)?;
    writeln!(
        out,
        "dissipation rate s = {}, lmi margin = {}, sampled violations = {} of {}",
        cert["s"], cert["lmi_margin"], cert["verification"]["violations"], cert["verification"]["samples"]
    )?;
    let initial_set = cfg.xtp.clone().expect("built-in examples carry an initial set");
    let report = cfg.scan(&p, &initial_set, samples, horizons, &eps, seed)?;
    writeln!(
        out,
        "scan over {samples} initial states, N in {horizons:?}: M_E = {:.4}, worst count*eps/M_E = {:.3e}, infeasible cells = {}",
        report.m_e, report.worst_ratio, report.infeasible_cells
    )?;
    for spread in &report.count_spread {
        writeln!(
            out,
            "  eps = {:e}: count spread across N = {} (all cells {})",
            spread.eps, spread.unsaturated, spread.raw
        )?;
    }
    let passed = steady.kkt_ok && certified && report.all_ok;
    writeln!(out, "{}", if passed { "all checks passed" } else { "some checks failed" })?;
    Ok(if passed { EXIT_OK } else { EXIT_CERTIFICATE })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_set_specs() {
        assert_eq!(
            parse_initial_set("ball:0,0:1").unwrap(),
            InitialSet::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0
            }
        );
        assert_eq!(
            parse_initial_set("box:-1,-2:1,2").unwrap(),
            InitialSet::Box {
                lower: vec![-1.0, -2.0],
                upper: vec![1.0, 2.0]
            }
        );
        assert_eq!(parse_initial_set("cone:5").unwrap(), InitialSet::ConeSlice { height: 5.0 });
        assert_eq!(
            parse_initial_set("points:1,0;0,0.5").unwrap(),
            InitialSet::Points {
                points: vec![vec![1.0, 0.0], vec![0.0, 0.5]]
            }
        );
        for bad in ["ball:0,0", "sphere:1", "cone:x", "points:1,a"] {
            assert_eq!(parse_initial_set(bad).unwrap_err().code, EXIT_BAD_CONFIG, "{bad}");
        }
    }

    #[test]
    fn vector_flags() {
        assert_eq!(parse_vector("--x0", "-1, 0.5", 2).unwrap().as_slice(), &[-1.0, 0.5]);
        assert_eq!(parse_vector("--x0", "1", 2).unwrap_err().code, EXIT_BAD_CONFIG);
    }

    #[test]
    fn error_codes() {
        let code = |e: Error| Failure::from(e).code;
        assert_eq!(
            code(Error::Infeasible {
                x0: vec![1.0],
                horizon: 1
            }),
            EXIT_INFEASIBLE
        );
        assert_eq!(code(Error::NoFeasibleRate), EXIT_CERTIFICATE);
        assert_eq!(code(Error::Config("x".into())), EXIT_BAD_CONFIG);
        assert_eq!(
            code(Error::NonConverged {
                iterations: 1,
                primal: 1.0,
                dual: 1.0
            }),
            EXIT_OTHER
        );
    }

    #[test]
    fn usage_errors_and_help() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run_with(["turnpike", "frobnicate"], &mut out, &mut err), EXIT_OTHER);
        assert_eq!(run_with(["turnpike", "--help"], &mut out, &mut err), EXIT_OK);
        assert!(String::from_utf8(out).unwrap().contains("scan"));
    }
}
