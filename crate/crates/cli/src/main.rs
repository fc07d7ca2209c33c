//! `rdcert`: invariant regions and Lyapunov certificates for
//! reaction-diffusion systems with tridiagonal Toeplitz diffusion.
//!
//! Every subcommand reads the same TOML configuration (see `config`), takes
//! the matrix and weight flags as overrides, and reports results as
//! `key=value` lines. Exit codes are part of the interface:
//! 0 success, 1 failed check or runtime error, 2 bad configuration,
//! 3 capacity limit, 4 certificate failure or infeasible search,
//! 5 finite-time blow-up.

mod config;
mod report;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use rdcert_core::certificate::{check_certificate, search_weights, CertificateReport};
use rdcert_core::regions::{enumerate_regions, membership};
use rdcert_core::simulate::{self, verify_form_sign};
use rdcert_core::Error as CoreError;
use report::{fmt_f64, kv};

const EXIT_FAILED_CHECK: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CAPACITY: u8 = 3;
const EXIT_CERTIFICATE: u8 = 4;
const EXIT_BLOW_UP: u8 = 5;

#[derive(Debug)]
pub enum AppError {
    Config(String),
    Io(String),
    Core(CoreError),
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(msg) => write!(f, "{msg}"),
            AppError::Io(msg) => write!(f, "{msg}"),
            AppError::Core(err) => write!(f, "{err}"),
        }
    }
}

impl From<CoreError> for AppError {
    fn from(err: CoreError) -> Self {
        AppError::Core(err)
    }
}

fn exit_for(err: &AppError) -> ExitCode {
    let code = match err {
        AppError::Config(_) => EXIT_CONFIG,
        AppError::Io(_) => EXIT_FAILED_CHECK,
        AppError::Core(core) => match core {
            CoreError::Capacity { .. } => EXIT_CAPACITY,
            CoreError::Infeasible { .. } => EXIT_CERTIFICATE,
            CoreError::BlowUp { .. } => EXIT_BLOW_UP,
            _ => EXIT_FAILED_CHECK,
        },
    };
    ExitCode::from(code)
}

#[derive(Parser)]
#[command(
    name = "rdcert",
    version,
    about = "Invariant regions and Lyapunov certificates for tridiagonal reaction-diffusion systems"
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Number of components.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Diffusion matrix diagonal.
    #[arg(long, global = true)]
    a: Option<f64>,
    /// Diffusion matrix super-diagonal.
    #[arg(long, global = true)]
    b: Option<f64>,
    /// Diffusion matrix sub-diagonal.
    #[arg(long, global = true, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Region sign pattern, e.g. "++-".
    #[arg(long, global = true)]
    pm: Option<String>,
    /// Coupling weights, comma separated; one value is broadcast.
    #[arg(long, global = true)]
    theta: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form eigenvalues and the parabolicity verdict.
    Spectrum,
    /// Enumerate the sign regions; optionally test a point against the
    /// configured region.
    Regions {
        /// Point in the original coordinates, comma separated.
        #[arg(long)]
        point: Option<String>,
    },
    /// Sweep all chain form matrices at the configured weights.
    Certify,
    /// Search for weights that make the certificate hold.
    ThetaSearch,
    /// Sample the reaction term's structural assumptions.
    Audit,
    /// Integrate the system; monitors as CSV, snapshots as binary records.
    Simulate {
        /// Write monitor rows here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write snapshot records here.
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
    /// Integrate, then check the dissipation form's sign on snapshots.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_for(&err)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, AppError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        m: cli.m,
        a: cli.a,
        b: cli.b,
        c: cli.c,
        pm: cli.pm.clone(),
        theta: cli.theta.clone(),
    })?;
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<ExitCode, AppError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Spectrum => cmd_spectrum(&cfg),
        Command::Regions { point } => cmd_regions(&cfg, point.as_deref()),
        Command::Certify => cmd_certify(&cfg),
        Command::ThetaSearch => cmd_theta_search(&cfg),
        Command::Audit => cmd_audit(&cfg),
        Command::Simulate { out, snapshots } => cmd_simulate(&cfg, out.as_deref(), snapshots.as_deref()),
        Command::Verify => cmd_verify(&cfg),
    }
}

fn cmd_spectrum(cfg: &RunConfig) -> Result<ExitCode, AppError> {
    let d = cfg.build_diffusion()?;
    let par = d.parabolicity();
    let spec = d.spectrum();
    println!("m={}", d.m());
    kv("a", d.a());
    kv("b", d.b());
    kv("c", d.c());
    println!("parabolic={}", par.holds);
    kv("parabolicity_margin", par.margin);
    for (i, &lambda) in spec.lambdas().iter().enumerate() {
        kv(&format!("lambda_{}", i + 1), lambda);
    }
    kv("lambda_min", spec.lambda_min());
    kv("lambda_max", spec.lambda_max());
    Ok(if par.holds {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED_CHECK)
    })
}

fn cmd_regions(cfg: &RunConfig, point: Option<&str>) -> Result<ExitCode, AppError> {
    let d = cfg.build_diffusion()?;
    let m = d.m();
    let regions = enumerate_regions(m)?;
    println!("count={}", regions.len());
    for region in &regions {
        println!("region_{}={}", region.index(), region.label());
    }
    if let Some(text) = point {
        let x = config::parse_float_list(text)
            .map_err(|e| AppError::Config(format!("--point: {e}")))?;
        if x.len() != m {
            return Err(AppError::Config(format!(
                "--point has {} coordinates for m = {m}",
                x.len()
            )));
        }
        let region = cfg.build_region(m)?;
        let spec = d.spectrum();
        let rep = membership(&region, &spec, &x, None);
        println!("point_region={}", region.label());
        println!("point_in_region={}", rep.in_region);
        for (l, slack) in rep.slacks.iter().enumerate() {
            kv(&format!("slack_{}", l + 1), *slack);
        }
        println!("worst_component={}", rep.worst_index + 1);
        kv("tolerance", rep.tolerance);
    }
    Ok(ExitCode::SUCCESS)
}

fn print_certificate(report: &CertificateReport) {
    println!("holds={}", report.holds);
    println!("chains_checked={}", report.chains_checked);
    kv("min_pivot", report.min_pivot);
    if let Some(margin) = report.scaled_margin {
        kv("scaled_margin", margin);
    }
    if let Some(witness) = &report.witness {
        let chain: Vec<String> = witness.chain.iter().map(|q| q.to_string()).collect();
        println!("witness_chain={}", chain.join(","));
        println!("witness_rank={}", witness.rank);
        println!("witness_minor_index={}", witness.minor_index);
        kv("witness_pivot", witness.pivot);
    }
}

fn cmd_certify(cfg: &RunConfig) -> Result<ExitCode, AppError> {
    let d = cfg.build_diffusion()?;
    let poly = cfg.build_polynomial(d.m())?;
    let spec = d.spectrum();
    let report = check_certificate(spec.lambdas(), &poly)?;
    println!("m={}", d.m());
    println!("degree={}", poly.degree());
    for (l, &theta) in poly.thetas().iter().enumerate() {
        kv(&format!("theta_{}", l + 1), theta);
    }
    print_certificate(&report);
    Ok(if report.holds {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CERTIFICATE)
    })
}

fn cmd_theta_search(cfg: &RunConfig) -> Result<ExitCode, AppError> {
    let d = cfg.build_diffusion()?;
    let spec = d.spectrum();
    let outcome = search_weights(spec.lambdas(), cfg.polynomial.degree, &cfg.search_budget())?;
    println!("m={}", d.m());
    println!("degree={}", cfg.polynomial.degree);
    for (l, &theta) in outcome.thetas.iter().enumerate() {
        kv(&format!("theta_{}", l + 1), theta);
    }
    println!("doublings_used={}", outcome.doublings_used);
    print_certificate(&outcome.report);
    Ok(ExitCode::SUCCESS)
}

fn cmd_audit(cfg: &RunConfig) -> Result<ExitCode, AppError> {
    let d = cfg.build_diffusion()?;
    let reaction = cfg.build_reaction(d.m())?;
    let report = reaction.audit(&cfg.audit_config());
    kv("worst_face_slack", report.worst_face_slack);
    println!("quasi_positive={}", report.quasi_positive);
    kv("fitted_slope", report.fitted_slope);
    println!("degree_bound={}", report.degree_bound);
    println!("growth_ok={}", report.growth_ok);
    for (i, v) in report.combination_per_decade.iter().enumerate() {
        kv(&format!("combination_decade_{i}"), *v);
    }
    kv("trend_ratio", report.trend_ratio);
    println!("combination_bounded={}", report.combination_bounded);
    println!("all_hold={}", report.all_hold());
    // The audit is a measurement, not a gate: a clean exit with a negative
    // verdict in the report is still a successful audit.
    Ok(ExitCode::SUCCESS)
}

fn build_problem(
    cfg: &RunConfig,
) -> Result<
    (
        rdcert_core::spectral::ToeplitzDiffusion,
        rdcert_core::regions::RegionSpec,
        rdcert_core::reaction::ReactionSpec,
        rdcert_core::lyapunov::LyapunovPolynomial,
        rdcert_core::simulate::SimSetup,
    ),
    AppError,
> {
    let d = cfg.build_diffusion()?;
    let m = d.m();
    let region = cfg.build_region(m)?;
    let reaction = cfg.build_reaction(m)?;
    let poly = cfg.build_polynomial(m)?;
    let setup = cfg.build_setup(m)?;
    Ok((d, region, reaction, poly, setup))
}

fn summarize_run(report: &simulate::SimReport) {
    eprintln!("dt_effective={}", fmt_f64(report.dt_effective));
    eprintln!("steps_taken={}", report.steps_taken);
    eprintln!("final_t={}", fmt_f64(report.final_t));
    eprintln!("rows={}", report.rows.len());
    eprintln!("snapshots={}", report.snapshots.len());
    match report.blow_up {
        Some(t) => eprintln!("blow_up={}", fmt_f64(t)),
        None => eprintln!("blow_up=none"),
    }
    if let Some(fit) = &report.envelope {
        eprintln!("envelope_slope={}", fmt_f64(fit.slope));
        eprintln!("envelope_intercept={}", fmt_f64(fit.intercept));
        eprintln!("envelope_points={}", fit.points);
    }
}

fn cmd_simulate(
    cfg: &RunConfig,
    out: Option<&std::path::Path>,
    snapshots: Option<&std::path::Path>,
) -> Result<ExitCode, AppError> {
    let (d, region, reaction, poly, setup) = build_problem(cfg)?;
    let report = simulate::run(&d, &region, &reaction, &poly, &setup)?;
    match out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| AppError::Io(format!("cannot create {}: {e}", path.display())))?;
            let mut writer = BufWriter::new(file);
            report::write_csv(&mut writer, &report)
                .and_then(|()| writer.flush())
                .map_err(|e| AppError::Io(format!("writing {}: {e}", path.display())))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            report::write_csv(&mut lock, &report)
                .map_err(|e| AppError::Io(format!("writing monitors: {e}")))?;
        }
    }
    if let Some(path) = snapshots {
        let file = File::create(path)
            .map_err(|e| AppError::Io(format!("cannot create {}: {e}", path.display())))?;
        let mut writer = BufWriter::new(file);
        report::write_snapshots(&mut writer, &report)
            .and_then(|()| writer.flush())
            .map_err(|e| AppError::Io(format!("writing {}: {e}", path.display())))?;
    }
    summarize_run(&report);
    Ok(match report.blow_up {
        Some(_) => ExitCode::from(EXIT_BLOW_UP),
        None => ExitCode::SUCCESS,
    })
}

fn cmd_verify(cfg: &RunConfig) -> Result<ExitCode, AppError> {
    let (d, region, reaction, poly, mut setup) = build_problem(cfg)?;
    if setup.n_snapshots == 0 {
        // This mode exists to look at states along the trajectory, so an
        // unset snapshot count gets a sensible one.
        setup.n_snapshots = 10;
    }
    let report = simulate::run(&d, &region, &reaction, &poly, &setup)?;
    summarize_run(&report);
    if let Some(t) = report.blow_up {
        println!("blow_up={}", fmt_f64(t));
        return Ok(ExitCode::from(EXIT_BLOW_UP));
    }
    let spec = d.spectrum();
    let mut all_hold = true;
    for (i, snap) in report.snapshots.iter().enumerate() {
        let check = verify_form_sign(spec.lambdas(), &poly, &snap.state, report.n_points)?;
        println!("snapshot_{i}_t={}", fmt_f64(snap.t));
        println!("snapshot_{i}_holds={}", check.holds);
        kv(&format!("snapshot_{i}_worst_ratio"), check.worst_ratio);
        all_hold &= check.holds;
    }
    println!("holds={all_hold}");
    Ok(if all_hold {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CERTIFICATE)
    })
}
