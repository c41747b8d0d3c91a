//! The `schauder` command line.
//!
//! Exit status: 0 when every executed check passes, 1 when a check fails
//! or a computation errors, 2 on a usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{write_field, AnalyticFn, BoxDomain, Builtin, BuiltinParams, Cylinder, Partial, SpaceTimePoint};
use crate::heatball::{kernel_mass, mean_value, scaling_integral, HeatBall, QuadSpec};
use crate::holder::{holder_seminorm, sup_abs, Region, ScanGrid};
use crate::mollify::{Mollifier, MollifyMetrics, DEFAULT_KERNEL_NODES};
use crate::verify::checks::{norm_equivalence_experiment, Check, SweepConfig, Tolerances};
use crate::verify::VerifyReport;

#[derive(Debug, Parser)]
#[command(
    name = "schauder",
    version,
    about = "Numerical checks of the mollification proof of interior parabolic Schauder estimates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mollify a built-in function and write the field, its sidecar and metrics.
    Mollify(MollifyArgs),
    /// Hölder seminorm of a built-in function on the unit cylinder or box.
    Seminorm(SeminormArgs),
    /// Heat-ball quadratures.
    #[command(subcommand)]
    Heatball(HeatballCommand),
    /// Norm-equivalence experiment.
    NormEquiv(NormEquivArgs),
    /// Interior derivative estimates over the manufactured family.
    Estimates(ReportArgs),
    /// End-to-end Schauder ratio over the manufactured family.
    Schauder(ReportArgs),
    /// Every acceptance check.
    Suite(SuiteArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    /// `Q_1 = B_1 × (−1, 0)`.
    Cylinder,
    /// `[−1, 1]^d × [−1, 1]`.
    Box,
}

/// Parameters shared by every test-function command.
#[derive(Debug, Clone, Args, Serialize)]
pub struct FunctionArgs {
    /// Built-in test function.
    #[arg(long, default_value = "spatial_cusp")]
    pub builtin: String,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Hölder exponent (cusp exponent and seminorm order).
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
}

impl FunctionArgs {
    fn build(&self) -> Result<AnalyticFn> {
        Builtin::from_str(&self.builtin)?.build(&BuiltinParams::new(self.dim).alpha(self.alpha))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MollifyArgs {
    #[command(flatten)]
    pub function: FunctionArgs,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    /// Spatial derivative order along `--axis`.
    #[arg(long, default_value_t = 0)]
    pub i: u8,
    /// Time derivative order.
    #[arg(long, default_value_t = 0)]
    pub j: u8,
    #[arg(long, default_value_t = 0)]
    pub axis: usize,
    /// Midpoint nodes per axis of the kernel.
    #[arg(long, default_value_t = DEFAULT_KERNEL_NODES)]
    pub kernel_nodes: usize,
    #[arg(long, default_value_t = 33)]
    pub nx: usize,
    #[arg(long, default_value_t = 33)]
    pub nt: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SeminormArgs {
    #[command(flatten)]
    pub function: FunctionArgs,
    #[arg(long, value_enum, default_value_t = RegionKind::Cylinder)]
    pub region: RegionKind,
    #[arg(long, default_value_t = 33)]
    pub nx: usize,
    #[arg(long, default_value_t = 33)]
    pub nt: usize,
    #[arg(long, default_value_t = 16_000_000)]
    pub pair_budget: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QuadArgs {
    #[arg(long, default_value_t = 64)]
    pub slices: usize,
    #[arg(long, default_value_t = 16)]
    pub radial: usize,
    #[arg(long, default_value_t = 16)]
    pub angular: usize,
    /// Exponent `p` of the slice substitution.
    #[arg(long, default_value_t = 2.0)]
    pub cluster: f64,
    /// Largest accepted change when all node counts double.
    #[arg(long, default_value_t = 1e-6)]
    pub quad_tol: f64,
}

impl QuadArgs {
    fn spec(&self) -> QuadSpec {
        QuadSpec {
            n_slices: self.slices,
            n_radial: self.radial,
            n_angular: self.angular,
            cluster: self.cluster,
            tol: self.quad_tol,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum HeatballCommand {
    /// `(1/(4r^d)) ∬_E v |x−y|²/(t−s)²` for a built-in `v`.
    Mv(MvArgs),
    /// `∬_E |x−y|²/(t−s)²`, which equals `4r^d`.
    Mass(MassArgs),
    /// `(1/r^d) ∫ R_r(σ)^α σ^{−β} dσ`.
    Scaling(ScalingArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MvArgs {
    #[arg(long, default_value = "caloric_poly")]
    pub builtin: String,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Spatial center, comma separated (default: the origin).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t: f64,
    #[command(flatten)]
    pub quad: QuadArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MassArgs {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[command(flatten)]
    pub quad: QuadArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScalingArgs {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[arg(long, default_value_t = 4)]
    pub alpha: u32,
    #[arg(long, default_value_t = 2)]
    pub beta: u32,
    #[command(flatten)]
    pub quad: QuadArgs,
}

/// Every numeric knob of the sweeps; the defaults are the acceptance
/// configuration.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Mollification scales, strictly decreasing.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.025")]
    pub tau: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05")]
    pub mass_tau: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.08,0.04,0.02,0.01")]
    pub estimate_tau: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.025")]
    pub rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2")]
    pub r_grid: Vec<f64>,
    /// `R = N·τ`.
    #[arg(long = "N", default_value_t = 2.0)]
    pub n_factor: f64,
    /// `τ = ε·d(X, Y)`; default `4^{−1/α}`.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long = "Lambda", default_value_t = 2.0)]
    pub big_lambda: f64,
    #[arg(long, default_value_t = 10)]
    pub family_count: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.7")]
    pub cusp_alpha: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_KERNEL_NODES)]
    pub kernel_nodes: usize,
    #[arg(long, default_value_t = 33)]
    pub grid_nodes: usize,
    #[arg(long, default_value_t = 17)]
    pub window_nodes: usize,
    #[arg(long, default_value_t = 9)]
    pub estimate_nodes: usize,
    #[arg(long, default_value_t = 17)]
    pub residual_nodes: usize,
    #[arg(long, default_value_t = 16_000_000)]
    pub pair_budget: u64,
    #[arg(long, default_value_t = 10_000)]
    pub chain_pairs: usize,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[command(flatten)]
    pub tol: TolArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TolArgs {
    #[arg(long, default_value_t = 1e-6)]
    pub tol_mass: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol_contraction: f64,
    #[arg(long, default_value_t = 1.05)]
    pub tol_approximation_factor: f64,
    #[arg(long, default_value_t = 0.05)]
    pub tol_slope: f64,
    #[arg(long, default_value_t = 0.1)]
    pub tol_rough_slope: f64,
    #[arg(long, default_value_t = 20.0)]
    pub tol_equivalence_constant: f64,
    #[arg(long, default_value_t = 0.10)]
    pub tol_refinement: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tol_kernel_mass: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tol_mean_value: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_subsolution: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tol_scaling_slope: f64,
    #[arg(long, default_value_t = 1.05)]
    pub tol_residual_factor: f64,
    #[arg(long, default_value_t = 2.0)]
    pub tol_estimate_band: f64,
    #[arg(long, default_value_t = 3.0)]
    pub tol_family_growth: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub tol_homogeneity: f64,
    #[arg(long, default_value_t = 0.10)]
    pub tol_rescaling: f64,
}

impl TolArgs {
    fn tolerances(&self) -> Tolerances {
        Tolerances {
            mass: self.tol_mass,
            contraction: self.tol_contraction,
            approximation_factor: self.tol_approximation_factor,
            slope: self.tol_slope,
            rough_slope: self.tol_rough_slope,
            equivalence_constant: self.tol_equivalence_constant,
            refinement: self.tol_refinement,
            kernel_mass: self.tol_kernel_mass,
            mean_value: self.tol_mean_value,
            subsolution: self.tol_subsolution,
            scaling_slope: self.tol_scaling_slope,
            residual_factor: self.tol_residual_factor,
            estimate_band: self.tol_estimate_band,
            family_growth: self.tol_family_growth,
            homogeneity: self.tol_homogeneity,
            rescaling: self.tol_rescaling,
        }
    }
}

impl SweepArgs {
    pub fn config(&self) -> SweepConfig {
        let mut c = SweepConfig::new(self.dim, self.alpha, self.seed);
        c.tau_grid = self.tau.clone();
        c.mass_taus = self.mass_tau.clone();
        c.estimate_tau_grid = self.estimate_tau.clone();
        c.rho_grid = self.rho.clone();
        c.r_grid = self.r_grid.clone();
        c.n_factor = self.n_factor;
        if let Some(e) = self.epsilon {
            c.epsilon = e;
        }
        c.lambda = self.lambda;
        c.big_lambda = self.big_lambda;
        c.family_count = self.family_count;
        c.cusp_alphas = self.cusp_alpha.clone();
        c.kernel_nodes = self.kernel_nodes;
        c.grid_nodes = self.grid_nodes;
        c.window_nodes = self.window_nodes;
        c.estimate_nodes = self.estimate_nodes;
        c.residual_nodes = self.residual_nodes;
        c.pair_budget = self.pair_budget;
        c.chain_pairs = self.chain_pairs;
        c.quad = self.quad.spec();
        c.tol = self.tol.tolerances();
        c
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NormEquivArgs {
    #[command(flatten)]
    pub report: ReportArgs,
    /// Run on this built-in only (default: both cusps).
    #[arg(long)]
    pub builtin: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SuiteArgs {
    #[command(flatten)]
    pub report: ReportArgs,
    /// Run only these checks, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
}

/// A failure that maps to an exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::UnknownFamily(_)
            | Error::UnsupportedDimension(_)
            | Error::UnsupportedOrder(_)
            | Error::DimensionMismatch { .. }
            | Error::TauTooLarge { .. } => Failure::Usage(e.to_string()),
            e => Failure::Run(e),
        }
    }
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    /// Seconds since the Unix epoch; the only time-dependent field.
    created_unix: u64,
    passed: bool,
    checks: Vec<(String, bool)>,
    files: Vec<ManifestEntry>,
}

/// Writes files in order and records their hashes.
struct Artifacts {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.record(name, bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.files.push(ManifestEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
    }

    fn finish<C: Serialize>(self, command: &str, config: &C, reports: &[VerifyReport]) -> Result<()> {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let m = Manifest {
            tool: "schauder",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            created_unix,
            passed: reports.iter().all(|r| r.passed),
            checks: reports.iter().map(|r| (r.check.clone(), r.passed)).collect(),
            files: self.files,
        };
        fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(())
    }
}

fn write_reports<C: Serialize>(args: &ReportArgs, command: &str, config: &C, reports: &[VerifyReport]) -> Result<()> {
    let mut art = Artifacts::new(&args.out)?;
    for r in reports {
        if matches!(args.format, Format::Json | Format::Both) {
            art.write(&format!("report_{}.json", r.check), r.to_json()?.as_bytes())?;
        }
        if matches!(args.format, Format::Csv | Format::Both) {
            art.write(&format!("sweep_{}.csv", r.check), r.to_csv()?.as_bytes())?;
        }
    }
    art.finish(command, config, reports)
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Summary lines on `out`, failing checks named on `err`; the exit status.
fn conclude(reports: &[VerifyReport], out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let mut code = 0;
    for r in reports {
        writeln!(out, "{} {}", if r.passed { "PASS" } else { "FAIL" }, r.check)?;
        if !r.passed {
            code = 1;
            writeln!(err, "check failed: {}: {}", r.check, r.failures().join("; "))?;
            for n in &r.notes {
                writeln!(err, "  {n}")?;
            }
        }
    }
    Ok(code)
}

fn run_mollify(a: &MollifyArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let u = a.function.build()?;
    let d = a.function.dim;
    if a.axis >= d {
        return Err(Failure::Usage(format!("--axis {} is not below --dim {d}", a.axis)));
    }
    let mut axes = vec![a.axis; a.i as usize];
    axes.sort_unstable();
    let p = Partial::from_axes(&axes, a.j);
    let m = Mollifier::new(d, a.kernel_nodes)?;
    let dom = BoxDomain::symmetric(d, 1.0, -1.0, 1.0)?;
    let field = m.field(&u, &dom, a.tau, p, a.nx, a.nt)?;
    let sup_u = sup_abs(&u, &Region::from(dom), &ScanGrid::new(a.nx, a.nt))?.0;
    // slack of the bound |∂^p u_τ|₀ ≤ C_p τ^{−|p|} |u|₀ (C_0 = 1)
    let bound = m.derivative_constant(p)? * a.tau.powi(-p.weight()) * sup_u;
    let metrics = MollifyMetrics {
        tau: a.tau,
        sup_norm: field.sup_norm(),
        slack: bound - field.sup_norm(),
    };
    fs::create_dir_all(&a.out).map_err(Error::from)?;
    let stem = format!("mollify_{}_i{}_j{}", a.function.builtin, a.i, a.j);
    let csv_path = a.out.join(format!("{stem}.csv"));
    let side_path = a.out.join(format!("{stem}.json"));
    write_field(&field, &csv_path, &side_path)?;
    let metrics_json = serde_json::to_string_pretty(&metrics).map_err(Error::from)? + "\n";
    let mut art = Artifacts::new(&a.out)?;
    art.record(&format!("{stem}.csv"), &fs::read(&csv_path).map_err(Error::from)?);
    art.record(&format!("{stem}.json"), &fs::read(&side_path).map_err(Error::from)?);
    art.write(&format!("{stem}_metrics.json"), metrics_json.as_bytes())?;
    art.finish("mollify", a, &[])?;
    write!(out, "{metrics_json}").map_err(Error::from)?;
    Ok(0)
}

fn run_seminorm(a: &SeminormArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let u = a.function.build()?;
    let d = a.function.dim;
    let region = match a.region {
        RegionKind::Cylinder => Region::from(Cylinder::unit(d)),
        RegionKind::Box => Region::from(BoxDomain::symmetric(d, 1.0, -1.0, 1.0)?),
    };
    let rep = holder_seminorm(&u, a.function.alpha, &region, &ScanGrid::new(a.nx, a.nt), a.pair_budget)?;
    print_json(out, &rep)?;
    Ok(0)
}

fn run_heatball(c: &HeatballCommand, out: &mut dyn Write) -> Result<i32, Failure> {
    let res = match c {
        HeatballCommand::Mv(a) => {
            let v = Builtin::from_str(&a.builtin)?.build(&BuiltinParams::new(a.dim).alpha(a.alpha))?;
            let x = if a.x.is_empty() { vec![0.0; a.dim] } else { a.x.clone() };
            let ball = HeatBall::new(SpaceTimePoint::new(x, a.t)?, a.r)?;
            mean_value(&v, &ball, &a.quad.spec())?
        }
        HeatballCommand::Mass(a) => kernel_mass(&HeatBall::new(SpaceTimePoint::origin(a.dim), a.r)?, &a.quad.spec())?,
        HeatballCommand::Scaling(a) => scaling_integral(a.alpha, a.beta, a.r, a.dim, &a.quad.spec())?,
    };
    print_json(out, &res)?;
    Ok(0)
}

fn run_checks(
    args: &ReportArgs,
    command: &str,
    checks: &[Check],
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, Failure> {
    let cfg = args.sweep.config();
    cfg.validate()?;
    let reports: Vec<VerifyReport> = checks.iter().map(|c| c.run(&cfg)).collect();
    write_reports(args, command, &cfg, &reports)?;
    Ok(conclude(&reports, out, err)?)
}

fn run_norm_equiv(a: &NormEquivArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let Some(name) = &a.builtin else {
        return run_checks(&a.report, "norm-equiv", &[Check::NormEquivalence], out, err);
    };
    let cfg = a.report.sweep.config();
    cfg.validate()?;
    let u = Builtin::from_str(name)?.build(&BuiltinParams::new(cfg.dim).alpha(cfg.alpha))?;
    let mut r = match norm_equivalence_experiment(&u, cfg.alpha, &cfg) {
        Ok(r) => r,
        Err(e) => {
            let mut r = VerifyReport::new("norm_equivalence");
            r.push(crate::verify::Measurement::failed("error", f64::NAN));
            r.note(e.to_string());
            r
        }
    };
    r.check = "norm_equivalence".into();
    let reports = [r];
    write_reports(&a.report, "norm-equiv", &cfg, &reports)?;
    Ok(conclude(&reports, out, err)?)
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    match &cli.command {
        Command::Mollify(a) => run_mollify(a, out),
        Command::Seminorm(a) => run_seminorm(a, out),
        Command::Heatball(c) => run_heatball(c, out),
        Command::NormEquiv(a) => run_norm_equiv(a, out, err),
        Command::Estimates(a) => run_checks(a, "estimates", &[Check::DerivativeEstimates], out, err),
        Command::Schauder(a) => run_checks(a, "schauder", &[Check::Schauder], out, err),
        Command::Suite(a) => {
            let checks = if a.only.is_empty() {
                Check::ALL.to_vec()
            } else {
                a.only.iter().map(|s| Check::from_str(s)).collect::<Result<Vec<_>>>()?
            };
            run_checks(&a.report, "suite", &checks, out, err)
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "usage error: {msg}");
            2
        }
        Err(Failure::Run(e)) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
