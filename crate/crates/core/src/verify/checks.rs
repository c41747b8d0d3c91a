//! Experiment drivers. Each check runs one sweep and returns a report.

use std::num::NonZeroUsize;
use std::str::FromStr;

use gauss_quad::GaussLegendre;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::log_log;
use super::report::{Measurement, Relation, Slope, SlopeRelation, VerifyReport};
use crate::error::{invalid, Error, Result};
use crate::field::bump::compact_bump;
use crate::field::{
    AnalyticFn, BoxDomain, Builtin, BuiltinParams, Cylinder, Evaluable, Orientation, Partial, SpaceTimePoint, Term,
    TermFn, TermKind, MAX_DIM,
};
use crate::heatball::{
    kernel_mass as heat_kernel_mass, mean_value, scaling_exponent, scaling_integral, HeatBall, QuadSpec,
};
use crate::holder::{
    holder_seminorm, parabolic_norm, pdist_raw, seminorm_of_samples, spatial_partials, sup_abs, tensor_samples, Region,
    ScanGrid,
};
use crate::manufactured::{
    freeze, max_heat_operator, problem_family, subsolution_lift, FamilyConfig, ManufacturedProblem,
};
use crate::mollify::{rho_tau, Mollifier};

/// Declared tolerances, one per comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// `|∬ρ_τ − 1|`.
    pub mass: f64,
    /// Additive slack in `|u_τ|₀ ≤ |u|₀`.
    pub contraction: f64,
    /// Factor on `τ^α[u]_α` in `|u_τ − u|₀ ≤ τ^α[u]_α`.
    pub approximation_factor: f64,
    /// Slope tolerance for Hölder test functions.
    pub slope: f64,
    /// Slope tolerance for bounded discontinuous test functions.
    pub rough_slope: f64,
    /// `C` in `1/C ≤ S/L ≤ C`.
    pub equivalence_constant: f64,
    /// Relative change allowed under refinement.
    pub refinement: f64,
    /// Relative error of the heat-ball kernel mass.
    pub kernel_mass: f64,
    /// Mean-value error per unit of `1 + osc`.
    pub mean_value: f64,
    pub subsolution: f64,
    pub scaling_slope: f64,
    /// Factor on the frozen-residual bound.
    pub residual_factor: f64,
    /// Largest `max/min` of an empirical constant across τ.
    pub estimate_band: f64,
    /// Largest growth of the Schauder constant when the family doubles.
    pub family_growth: f64,
    /// Relative tolerance of `ρ(3u) = ρ(u)`.
    pub homogeneity: f64,
    /// Relative tolerance of the rescaling invariance.
    pub rescaling: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
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
}

/// Every knob of the acceptance sweeps. [`SweepConfig::default`] is the
/// acceptance configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dim: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Mollification scales of the estimate and norm-equivalence sweeps.
    pub tau_grid: Vec<f64>,
    /// Scales at which the mollifier mass is integrated.
    pub mass_taus: Vec<f64>,
    /// Scales of the derivative-estimate sweep; `N·τ` must leave room
    /// inside the unit cylinder around every anchor.
    pub estimate_tau_grid: Vec<f64>,
    /// Radii of the frozen-residual cylinders.
    pub rho_grid: Vec<f64>,
    /// Heat-ball radii of the scaling-integral fit.
    pub r_grid: Vec<f64>,
    /// `R = N·τ`.
    #[serde(rename = "N")]
    pub n_factor: f64,
    /// `τ = ε·d(X, Y)` in the norm-equivalence chain.
    pub epsilon: f64,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub family_count: usize,
    /// Exponents of the cusp test functions.
    pub cusp_alphas: Vec<f64>,
    pub kernel_nodes: usize,
    /// Nodes per axis of coarse scans.
    pub grid_nodes: usize,
    /// Nodes per axis of the window around a singular point.
    pub window_nodes: usize,
    /// Nodes per axis on `Q_R` in the derivative estimates.
    pub estimate_nodes: usize,
    /// Nodes per axis on `Q_ρ(X0)` in the frozen-residual check.
    pub residual_nodes: usize,
    pub pair_budget: u64,
    /// Pairs sampled for the norm-equivalence chain.
    pub chain_pairs: usize,
    pub quad: QuadSpec,
    pub tol: Tolerances,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self::new(1, 0.5, 7)
    }
}

impl SweepConfig {
    pub fn new(dim: usize, alpha: f64, seed: u64) -> Self {
        Self {
            dim,
            alpha,
            seed,
            tau_grid: vec![0.2, 0.1, 0.05, 0.025],
            mass_taus: vec![0.2, 0.1, 0.05],
            estimate_tau_grid: vec![0.08, 0.04, 0.02, 0.01],
            rho_grid: vec![0.2, 0.1, 0.05, 0.025],
            r_grid: vec![0.25, 0.5, 1.0, 2.0],
            n_factor: 2.0,
            epsilon: 4f64.powf(-1.0 / alpha),
            lambda: 0.5,
            big_lambda: 2.0,
            family_count: 10,
            cusp_alphas: vec![0.3, 0.5, 0.7],
            kernel_nodes: crate::mollify::DEFAULT_KERNEL_NODES,
            grid_nodes: 33,
            window_nodes: 17,
            estimate_nodes: 9,
            residual_nodes: 17,
            pair_budget: 16_000_000,
            chain_pairs: 10_000,
            quad: QuadSpec::default(),
            tol: Tolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::field::check_dim(self.dim)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        let grids: [(&'static str, &[f64]); 5] = [
            ("tau_grid", &self.tau_grid),
            ("mass_taus", &self.mass_taus),
            ("estimate_tau_grid", &self.estimate_tau_grid),
            ("rho_grid", &self.rho_grid),
            ("r_grid", &self.r_grid),
        ];
        for (name, g) in grids {
            check_grid(name, g)?;
        }
        if self.tau_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("tau_grid", "must be strictly decreasing"));
        }
        for &a in &self.cusp_alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(invalid("cusp_alphas", format!("{a} is not in (0, 1)")));
            }
        }
        if !(self.n_factor >= 1.0 && self.n_factor.is_finite()) {
            return Err(invalid("N", format!("must be at least 1, got {}", self.n_factor)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(invalid(
                "epsilon",
                format!("must lie in (0, 1/2), got {}", self.epsilon),
            ));
        }
        if !(self.lambda > 0.0 && self.lambda <= self.big_lambda && self.big_lambda.is_finite()) {
            return Err(invalid("lambda", "need 0 < lambda <= Lambda < inf"));
        }
        if self.family_count == 0 || self.chain_pairs == 0 || self.pair_budget == 0 {
            return Err(invalid("family_count", "counts and budgets must be positive"));
        }
        let nodes = [
            self.grid_nodes,
            self.window_nodes,
            self.estimate_nodes,
            self.residual_nodes,
        ];
        if nodes.iter().any(|&n| n < 3) {
            return Err(invalid("grid_nodes", "every scan needs at least 3 nodes per axis"));
        }
        self.quad.validate()?;
        let t = &self.tol;
        let tols = [
            t.mass,
            t.contraction,
            t.approximation_factor,
            t.slope,
            t.rough_slope,
            t.equivalence_constant,
            t.refinement,
            t.kernel_mass,
            t.mean_value,
            t.subsolution,
            t.scaling_slope,
            t.residual_factor,
            t.estimate_band,
            t.family_growth,
            t.homogeneity,
            t.rescaling,
        ];
        if tols.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("tolerances", "must be positive and finite"));
        }
        Ok(())
    }

    fn family(&self, count: usize) -> FamilyConfig {
        FamilyConfig::new(self.dim, self.alpha, self.lambda, self.big_lambda, count, self.seed)
    }
}

fn check_grid(name: &'static str, g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return Err(invalid(name, "must not be empty"));
    }
    if g.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid(name, "entries must be positive and finite"));
    }
    let up = g.windows(2).all(|w| w[1] > w[0]);
    let down = g.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(invalid(name, "must be strictly monotone"));
    }
    Ok(())
}

/// The acceptance checks, in suite order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    MollifierMass,
    SupContraction,
    MollifyEstimates,
    NormEquivalence,
    KernelMass,
    CaloricMeanValue,
    Subsolution,
    ScalingIntegral,
    FrozenResidual,
    DerivativeEstimates,
    Schauder,
}

impl Check {
    pub const ALL: [Check; 11] = [
        Check::MollifierMass,
        Check::SupContraction,
        Check::MollifyEstimates,
        Check::NormEquivalence,
        Check::KernelMass,
        Check::CaloricMeanValue,
        Check::Subsolution,
        Check::ScalingIntegral,
        Check::FrozenResidual,
        Check::DerivativeEstimates,
        Check::Schauder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::MollifierMass => "mollifier_mass",
            Check::SupContraction => "sup_contraction",
            Check::MollifyEstimates => "mollify_estimates",
            Check::NormEquivalence => "norm_equivalence",
            Check::KernelMass => "kernel_mass",
            Check::CaloricMeanValue => "caloric_mean_value",
            Check::Subsolution => "subsolution",
            Check::ScalingIntegral => "scaling_integral",
            Check::FrozenResidual => "frozen_residual",
            Check::DerivativeEstimates => "derivative_estimates",
            Check::Schauder => "schauder",
        }
    }

    fn try_run(self, cfg: &SweepConfig) -> Result<VerifyReport> {
        match self {
            Check::MollifierMass => mollifier_mass(cfg),
            Check::SupContraction => sup_contraction(cfg),
            Check::MollifyEstimates => mollify_estimate_suite(&default_mollify_cases(cfg)?, cfg),
            Check::NormEquivalence => norm_equivalence(cfg),
            Check::KernelMass => kernel_mass(cfg),
            Check::CaloricMeanValue => caloric_mean_value(cfg),
            Check::Subsolution => subsolution(cfg),
            Check::ScalingIntegral => scaling_integral_check(cfg),
            Check::FrozenResidual => frozen_residual(cfg),
            Check::DerivativeEstimates => derivative_estimates(cfg),
            Check::Schauder => schauder(cfg),
        }
    }

    /// Runs the check; an error becomes a failing report that records it.
    pub fn run(self, cfg: &SweepConfig) -> VerifyReport {
        match self.try_run(cfg) {
            Ok(mut r) => {
                r.check = self.name().to_string();
                r
            }
            Err(e) => {
                let mut r = VerifyReport::new(self.name());
                r.push(Measurement::failed("error", f64::NAN));
                r.note(e.to_string());
                r
            }
        }
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| invalid("check", format!("unknown check `{s}`")))
    }
}

/// Every check in order.
pub fn run_suite(cfg: &SweepConfig) -> Result<Vec<VerifyReport>> {
    cfg.validate()?;
    Ok(Check::ALL.iter().map(|c| c.run(cfg)).collect())
}

/// Appends `other` to `into`, prefixing labels with `other.check`.
fn absorb(into: &mut VerifyReport, other: VerifyReport) {
    let prefix = other.check;
    for mut m in other.measurements {
        m.label = format!("{prefix}/{}", m.label);
        into.push(m);
    }
    for mut s in other.slopes {
        s.label = format!("{prefix}/{}", s.label);
        into.push_slope(s);
    }
    for mut c in other.constants {
        c.label = format!("{prefix}/{}", c.label);
        into.constants.push(c);
    }
    into.notes
        .extend(other.notes.into_iter().map(|n| format!("{prefix}: {n}")));
}

fn unit_box(d: usize) -> Result<BoxDomain> {
    BoxDomain::symmetric(d, 1.0, -1.0, 1.0)
}

fn builtin(b: Builtin, params: BuiltinParams) -> Result<AnalyticFn> {
    b.build(&params)
}

fn focus_of(u: &AnalyticFn) -> SpaceTimePoint {
    u.focus().cloned().unwrap_or_else(|| SpaceTimePoint::origin(u.dim()))
}

/// Coarse grid over `region` plus a window of scale `tau` at `u`'s focus.
fn scan_points(u: &AnalyticFn, region: &Region, cfg: &SweepConfig, tau: f64) -> Result<Vec<SpaceTimePoint>> {
    ScanGrid::new(cfg.grid_nodes, cfg.grid_nodes)
        .with_focus(focus_of(u), tau, cfg.window_nodes)
        .points(region)
}

/// `[∂^p u_τ]` for every listed partial at every point, point-major.
fn mollified_rows<E: Evaluable + ?Sized>(
    m: &Mollifier,
    u: &E,
    tau: f64,
    ps: &[Partial],
    points: &[SpaceTimePoint],
) -> Result<Vec<Vec<f64>>> {
    points.par_iter().map(|p| m.at_many(u, tau, ps, &p.x, p.t)).collect()
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_of(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

/// Nodes and weights of `panels` Gauss–Legendre panels on `[-1, 1]`.
fn composite_gauss(panels: usize, nodes: usize) -> Vec<(f64, f64)> {
    let base = GaussLegendre::new(NonZeroUsize::new(nodes).expect("positive node count"))
        .into_node_weight_pairs()
        .into_vec();
    let h = 2.0 / panels as f64;
    (0..panels)
        .flat_map(|k| {
            let mid = -1.0 + h * (k as f64 + 0.5);
            base.iter()
                .map(move |(z, w)| (mid + 0.5 * h * z, 0.5 * h * w))
                .collect::<Vec<_>>()
        })
        .collect()
}

const MASS_PANELS: usize = 8;
const MASS_NODES: usize = 16;

/// `∬ρ_τ` by a tensor Gauss–Legendre rule on `[-τ, τ]^d × [-τ², τ²]`.
pub fn mollifier_mass_integral(m: &Mollifier, tau: f64) -> Result<f64> {
    let d = m.dim();
    let rule = composite_gauss(MASS_PANELS, MASS_NODES);
    let k = rule.len();
    let spatial = k.pow(d as u32);
    let jac = tau.powi(d as i32) * tau * tau;
    let total = (0..k)
        .into_par_iter()
        .map(|l| {
            let (zt, wt) = rule[l];
            let mut x = [0.0; MAX_DIM];
            let mut acc = 0.0;
            for code in 0..spatial {
                let mut c = code;
                let mut w = wt;
                for xa in x.iter_mut().take(d) {
                    let (z, wz) = rule[c % k];
                    c /= k;
                    *xa = tau * z;
                    w *= wz;
                }
                acc += w * rho_tau(m, tau, &x[..d], tau * tau * zt)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum::<f64>();
    Ok(jac * total)
}

/// `∬ρ_τ = 1`, by quadrature of the continuous kernel and by summing the
/// discrete weights.
pub fn mollifier_mass(cfg: &SweepConfig) -> Result<VerifyReport> {
    let m = Mollifier::new(cfg.dim, cfg.kernel_nodes)?;
    let mut r = VerifyReport::new(Check::MollifierMass.name());
    for &tau in &cfg.mass_taus {
        let mass = mollifier_mass_integral(&m, tau)?;
        r.push(Measurement::new("mass", mass, Relation::Close, 1.0, cfg.tol.mass).param("tau", tau));
    }
    let discrete = m.axis_weights(0).iter().sum::<f64>().powi(cfg.dim as i32 + 1);
    r.push(Measurement::new(
        "discrete_mass",
        discrete,
        Relation::Close,
        1.0,
        cfg.tol.mass,
    ));
    Ok(r)
}

/// Every built-in test function, placed so that it is bounded on
/// `[-1, 1]^d × [-1, 1]`.
pub fn contraction_family(d: usize, alpha: f64) -> Result<Vec<AnalyticFn>> {
    let below = SpaceTimePoint::new(vec![0.0; d], -1.5)?;
    Builtin::ALL
        .iter()
        .map(|&b| {
            let mut p = BuiltinParams::new(d).alpha(alpha);
            if b == Builtin::HeatKernelShift {
                p = p.shift(below.clone());
            }
            builtin(b, p)
        })
        .collect()
}

/// `|u_τ|₀ ≤ |u|₀` for every built-in function and every τ.
pub fn sup_contraction(cfg: &SweepConfig) -> Result<VerifyReport> {
    let d = cfg.dim;
    let m = Mollifier::new(d, cfg.kernel_nodes)?;
    let dom = unit_box(d)?;
    let mut r = VerifyReport::new(Check::SupContraction.name());
    for u in contraction_family(d, cfg.alpha)? {
        let full = Region::from(dom.clone());
        let sup_u = sup_abs(&u, &full, &ScanGrid::new(cfg.grid_nodes, cfg.grid_nodes))?.0;
        for &tau in &cfg.tau_grid {
            let region = Region::from(dom.shrink(tau)?);
            let points = scan_points(&u, &region, cfg, tau)?;
            let rows = mollified_rows(&m, &u, tau, &[Partial::ZERO], &points)?;
            let sup_tau = max_of(rows.iter().map(|v| v[0].abs()));
            r.push(Measurement::new(u.label(), sup_tau, Relation::Le, sup_u, cfg.tol.contraction).param("tau", tau));
        }
    }
    Ok(r)
}

/// A test function of the mollification estimates.
#[derive(Clone, Debug)]
pub enum MollifyCase {
    /// Hölder continuous with `[u]_α = seminorm`, singular in `x` or in `t`.
    Holder {
        u: AnalyticFn,
        alpha: f64,
        seminorm: f64,
        temporal: bool,
    },
    /// Bounded and discontinuous with `|u|₀ = sup`.
    Rough {
        u: AnalyticFn,
        sup: f64,
    },
    Constant {
        u: AnalyticFn,
    },
}

/// Spatial and temporal cusps for each exponent, the step and a constant.
pub fn default_mollify_cases(cfg: &SweepConfig) -> Result<Vec<MollifyCase>> {
    let d = cfg.dim;
    let mut out = Vec::new();
    for &alpha in &cfg.cusp_alphas {
        for (b, temporal) in [(Builtin::SpatialCusp, false), (Builtin::TemporalCusp, true)] {
            out.push(MollifyCase::Holder {
                u: builtin(b, BuiltinParams::new(d).alpha(alpha))?,
                alpha,
                seminorm: 1.0,
                temporal,
            });
        }
    }
    out.push(MollifyCase::Rough {
        u: builtin(Builtin::Step, BuiltinParams::new(d))?,
        sup: 1.0,
    });
    out.push(MollifyCase::Constant {
        u: builtin(Builtin::Constant, BuiltinParams::new(d).value(2.5))?,
    });
    Ok(out)
}

fn fit_slope(label: &str, pts: Vec<(f64, f64)>, expected: f64, relation: SlopeRelation, tol: f64) -> Result<Slope> {
    let usable: Vec<(f64, f64)> = pts.iter().copied().filter(|(_, y)| *y > 0.0 && y.is_finite()).collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{label}: {} usable scale(s), a slope needs at least 3",
            usable.len()
        )));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = usable.into_iter().unzip();
    let fit = log_log(&x, &y)?;
    Ok(Slope::new(
        label,
        fit.slope,
        fit.half_width(),
        expected,
        relation,
        tol,
        pts,
    ))
}

/// The four mollification estimates over `cfg.tau_grid`: contraction,
/// derivative bounds from `|u|₀` and from `[u]_α`, approximation by
/// `τ^α[u]_α`, and the exponents of the derivative sup-norms.
pub fn mollify_estimate_suite(cases: &[MollifyCase], cfg: &SweepConfig) -> Result<VerifyReport> {
    let d = cfg.dim;
    let m = Mollifier::new(d, cfg.kernel_nodes)?;
    let dom = unit_box(d)?;
    let mut report = VerifyReport::new(Check::MollifyEstimates.name());
    let dx = Partial::dx(0);
    let dt = Partial::dt();
    for case in cases {
        let u = match case {
            MollifyCase::Holder { u, .. } | MollifyCase::Rough { u, .. } | MollifyCase::Constant { u } => u,
        };
        if u.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: u.dim(),
            });
        }
        let mut sub = VerifyReport::new(u.label());
        let mut sup_dx = Vec::new();
        let mut sup_dt = Vec::new();
        for &tau in &cfg.tau_grid {
            let region = Region::from(dom.shrink(tau)?);
            let points = scan_points(u, &region, cfg, tau)?;
            let mut ps = vec![Partial::ZERO, dt];
            ps.extend(spatial_partials(d, 1, 0));
            if matches!(case, MollifyCase::Constant { .. }) {
                ps.extend(spatial_partials(d, 2, 0));
            }
            let rows = mollified_rows(&m, u, tau, &ps, &points)?;
            let sup = |k: usize| max_of(rows.iter().map(|v| v[k].abs()));
            let sup0 = sup(0);
            let (sx, st) = (sup(2), sup(1));
            sup_dx.push((tau, sx));
            sup_dt.push((tau, st));
            match case {
                MollifyCase::Holder { alpha, seminorm, .. } => {
                    let err = max_of(points.iter().zip(&rows).map(|(p, v)| (v[0] - u.value(&p.x, p.t)).abs()));
                    let bound = cfg.tol.approximation_factor * tau.powf(*alpha) * seminorm;
                    sub.push(Measurement::new("approximation", err, Relation::Le, bound, 0.0).param("tau", tau));
                    for (p, s) in [(dx, sx), (dt, st)] {
                        let rhs = m.derivative_constant(p)? * tau.powf(alpha - p.weight() as f64) * seminorm;
                        sub.push(
                            Measurement::new(format!("holder_bound {p}"), s, Relation::Le, rhs, 1e-9 * rhs)
                                .param("tau", tau),
                        );
                    }
                }
                MollifyCase::Rough { sup: sup_u, .. } => {
                    sub.push(
                        Measurement::new("contraction", sup0, Relation::Le, *sup_u, cfg.tol.contraction)
                            .param("tau", tau),
                    );
                    for (p, s) in [(dx, sx), (dt, st)] {
                        let rhs = m.derivative_constant(p)? * tau.powi(-p.weight()) * sup_u;
                        sub.push(
                            Measurement::new(format!("sup_bound {p}"), s, Relation::Le, rhs, 1e-9 * rhs)
                                .param("tau", tau),
                        );
                    }
                }
                MollifyCase::Constant { .. } => {
                    let scale = u.value(&vec![0.0; d], 0.0).abs().max(1.0);
                    for (k, p) in ps.iter().enumerate().skip(1) {
                        sub.push(
                            Measurement::new(format!("vanishing {p}"), sup(k), Relation::Le, 0.0, 1e-9 * scale)
                                .param("tau", tau),
                        );
                    }
                }
            }
        }
        match case {
            MollifyCase::Holder { alpha, temporal, .. } => {
                let slope = if *temporal {
                    fit_slope("slope d_t", sup_dt, alpha - 2.0, SlopeRelation::Close, cfg.tol.slope)?
                } else {
                    fit_slope("slope d_x", sup_dx, alpha - 1.0, SlopeRelation::Close, cfg.tol.slope)?
                };
                sub.push_slope(slope);
            }
            MollifyCase::Rough { .. } => {
                sub.push_slope(fit_slope(
                    "slope d_x",
                    sup_dx,
                    -1.0,
                    SlopeRelation::Close,
                    cfg.tol.rough_slope,
                )?);
                sub.push_slope(fit_slope(
                    "slope d_t",
                    sup_dt,
                    -2.0,
                    SlopeRelation::Close,
                    cfg.tol.rough_slope,
                )?);
            }
            MollifyCase::Constant { .. } => {}
        }
        absorb(&mut report, sub);
    }
    Ok(report)
}

/// `M(τ) = τ^{1−α}|∂_x u_τ|₀ + τ^{2−α}|∂_t u_τ|₀` with its two sup-norms.
struct Bracket {
    sx: f64,
    st: f64,
    m: f64,
}

fn bracket(m: &Mollifier, u: &AnalyticFn, alpha: f64, tau: f64, cfg: &SweepConfig) -> Result<Bracket> {
    let d = u.dim();
    let region = Region::from(unit_box(d)?.shrink(tau)?);
    let points = scan_points(u, &region, cfg, tau)?;
    let mut ps = spatial_partials(d, 1, 0);
    ps.push(Partial::dt());
    let rows = mollified_rows(m, u, tau, &ps, &points)?;
    let sx = max_of(rows.iter().map(|v| euclid(&v[..d])));
    let st = max_of(rows.iter().map(|v| v[d].abs()));
    Ok(Bracket {
        sx,
        st,
        m: tau.powf(1.0 - alpha) * sx + tau.powf(2.0 - alpha) * st,
    })
}

const CHAIN_STRATA: usize = 10;
const CHAIN_STREAM: u64 = 1 << 32;

/// Unit vector in `R^d`, uniformly distributed.
fn direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = euclid(&v);
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// A pair at parabolic distance `dist`, half of them near `focus`.
fn chain_pair(rng: &mut ChaCha8Rng, focus: &SpaceTimePoint, dist: f64) -> (SpaceTimePoint, SpaceTimePoint) {
    let d = focus.dim();
    let near = rng.random_bool(0.5);
    let x: Vec<f64> = focus
        .x
        .iter()
        .map(|c| {
            if near {
                c + rng.random_range(-2.0..2.0) * dist
            } else {
                rng.random_range(-0.5..0.5)
            }
        })
        .collect();
    let t = if near {
        focus.t + rng.random_range(-2.0..2.0) * dist * dist
    } else {
        rng.random_range(-0.5..0.5)
    };
    let (dx, ds): (Vec<f64>, f64) = if rng.random_bool(0.5) {
        let dir = direction(rng, d);
        (
            dir.into_iter().map(|c| c * dist).collect(),
            rng.random_range(-1.0..1.0) * dist * dist,
        )
    } else {
        let len = rng.random_range(0.0..1.0) * dist;
        let dir = direction(rng, d);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        (dir.into_iter().map(|c| c * len).collect(), sign * dist * dist)
    };
    let y = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
    (SpaceTimePoint { x, t }, SpaceTimePoint { x: y, t: t + ds })
}

/// `L = [u]_α` against `S = sup_τ M(τ)`, the stability of `S` when the
/// finest τ is halved, and the chain
/// `|u(X) − u(Y)| ≤ 2τ^α L + |x−y|·|∂_x u_τ|₀ + |t−s|·|∂_t u_τ|₀`
/// at sampled pairs with `τ = ε·d(X, Y)`.
pub fn norm_equivalence_experiment(u: &AnalyticFn, alpha: f64, cfg: &SweepConfig) -> Result<VerifyReport> {
    let d = u.dim();
    if d != cfg.dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim,
            got: d,
        });
    }
    let m = Mollifier::new(d, cfg.kernel_nodes)?;
    let full = Region::from(unit_box(d)?);
    let scan = ScanGrid::new(cfg.grid_nodes, cfg.grid_nodes);
    let l = holder_seminorm(u, alpha, &full, &scan, cfg.pair_budget)?.seminorm;
    let mut r = VerifyReport::new(u.label());
    let brackets = cfg
        .tau_grid
        .iter()
        .map(|&tau| bracket(&m, u, alpha, tau, cfg))
        .collect::<Result<Vec<_>>>()?;
    let (k_max, s) =
        brackets.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |(bk, bv), (k, b)| if b.m > bv { (k, b.m) } else { (bk, bv) },
        );
    let finest = *cfg.tau_grid.last().expect("validated grid");
    let extra = bracket(&m, u, alpha, 0.5 * finest, cfg)?;
    let s_ref = s.max(extra.m);
    for (tau, b) in cfg.tau_grid.iter().zip(&brackets).chain([(&(0.5 * finest), &extra)]) {
        r.push(
            Measurement::new("M", b.m, Relation::Finite, 0.0, 0.0)
                .param("tau", *tau)
                .param("sup_dx", b.sx)
                .param("sup_dt", b.st),
        );
    }
    let tiny = 1e-9;
    if l == 0.0 {
        if s > tiny {
            return Err(Error::Inconsistent(format!("[u]_alpha = 0 but S = {s}")));
        }
        r.push(Measurement::new("S", s, Relation::Le, 0.0, tiny));
        r.note("u is constant on the scan: L = S = 0");
        return Ok(r);
    }
    let c = cfg.tol.equivalence_constant;
    r.push(
        Measurement::new("S/L lower", s / l, Relation::Ge, 1.0 / c, 0.0)
            .param("L", l)
            .param("S", s),
    );
    r.push(
        Measurement::new("S/L upper", s / l, Relation::Le, c, 0.0)
            .param("L", l)
            .param("S", s),
    );
    r.push(Measurement::new(
        "refinement",
        s_ref / s,
        Relation::Close,
        1.0,
        cfg.tol.refinement,
    ));
    r.push_constant("S/L", s / l, &[("tau", cfg.tau_grid[k_max])]);

    let focus = focus_of(u);
    let per = cfg.chain_pairs.div_ceil(CHAIN_STRATA);
    let mut total = 0usize;
    let mut worst = 0.0f64;
    for k in 0..CHAIN_STRATA {
        let count = per.min(cfg.chain_pairs - total);
        if count == 0 {
            break;
        }
        let dist = 0.5 * 2f64.powf(-(k as f64) / 2.0);
        let tau = cfg.epsilon * dist;
        let b = bracket(&m, u, alpha, tau, cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(CHAIN_STREAM + k as u64);
        let pairs: Vec<_> = (0..count).map(|_| chain_pair(&mut rng, &focus, dist)).collect();
        let q = max_of(pairs.iter().map(|(a, b2)| {
            let lhs = (u.value(&a.x, a.t) - u.value(&b2.x, b2.t)).abs();
            let dx = pdist_raw(&a.x, 0.0, &b2.x, 0.0);
            let rhs = 2.0 * tau.powf(alpha) * l + dx * b.sx + (a.t - b2.t).abs() * b.st;
            lhs / rhs
        }));
        worst = worst.max(q);
        total += count;
        r.push(
            Measurement::new("chain", q, Relation::Le, 1.0, 0.0)
                .param("dist", dist)
                .param("tau", tau)
                .param("pairs", count as f64),
        );
    }
    r.push(Measurement::new(
        "chain_pairs",
        total as f64,
        Relation::Close,
        cfg.chain_pairs as f64,
        0.0,
    ));
    r.push_constant("chain max ratio", worst, &[("epsilon", cfg.epsilon)]);
    Ok(r)
}

/// The norm equivalence for the spatial and temporal cusps at `cfg.alpha`.
pub fn norm_equivalence(cfg: &SweepConfig) -> Result<VerifyReport> {
    let mut r = VerifyReport::new(Check::NormEquivalence.name());
    for b in [Builtin::SpatialCusp, Builtin::TemporalCusp] {
        let u = builtin(b, BuiltinParams::new(cfg.dim).alpha(cfg.alpha))?;
        absorb(&mut r, norm_equivalence_experiment(&u, cfg.alpha, cfg)?);
    }
    Ok(r)
}

fn ball_dims(cfg: &SweepConfig) -> Vec<usize> {
    let mut dims = vec![1, 2];
    if !dims.contains(&cfg.dim) {
        dims.push(cfg.dim);
    }
    dims
}

/// `∬_E |x−y|²/(t−s)² = 4r^d`.
pub fn kernel_mass(cfg: &SweepConfig) -> Result<VerifyReport> {
    let mut r = VerifyReport::new(Check::KernelMass.name());
    for d in ball_dims(cfg) {
        for radius in [0.5, 1.0, 2.0] {
            let ball = HeatBall::new(SpaceTimePoint::origin(d), radius)?;
            let q = heat_kernel_mass(&ball, &cfg.quad)?;
            let exact = 4.0 * radius.powi(d as i32);
            r.push(
                Measurement::new("mass", q.value, Relation::RelClose, exact, cfg.tol.kernel_mass)
                    .param("d", d as f64)
                    .param("r", radius)
                    .param("est_error", q.est_error),
            );
        }
    }
    Ok(r)
}

fn ball_centers(d: usize) -> Vec<SpaceTimePoint> {
    let shifted = SpaceTimePoint {
        x: [0.3, -0.2, 0.1][..d].to_vec(),
        t: 0.25,
    };
    vec![SpaceTimePoint::origin(d), shifted]
}

/// `sup − inf` of `v` over grid nodes inside the ball, plus its center.
fn ball_osc(v: &AnalyticFn, ball: &HeatBall, nodes: usize) -> Result<f64> {
    let d = ball.dim();
    let c = &ball.center;
    let reach = ball.r * (d as f64 / (2.0 * std::f64::consts::PI * std::f64::consts::E)).sqrt();
    let dom = BoxDomain::new(
        c.x.iter().map(|v| v - reach).collect(),
        c.x.iter().map(|v| v + reach).collect(),
        c.t - ball.time_depth(),
        c.t,
    )?;
    let spec = crate::field::GridSpec::new(dom, nodes, nodes)?;
    let mut x = vec![0.0; d];
    let mut lo = v.at(c);
    let mut hi = lo;
    for i in 0..spec.node_count() {
        let t = spec.node_into(i, &mut x);
        if ball.contains(&x, t) {
            let w = v.value(&x, t);
            lo = lo.min(w);
            hi = hi.max(w);
        }
    }
    Ok(hi - lo)
}

/// Caloric test functions for a ball centered at `c`.
fn caloric_suite(d: usize, c: &SpaceTimePoint) -> Result<Vec<AnalyticFn>> {
    let slope = [1.0, -0.5, 0.25][..d].to_vec();
    let mut shift = c.clone();
    shift.x[0] += 0.1;
    shift.t -= 1.0;
    Ok(vec![
        builtin(Builtin::Constant, BuiltinParams::new(d).value(2.5))?,
        builtin(Builtin::Affine, BuiltinParams::new(d).value(0.5).slope(slope))?,
        builtin(Builtin::CaloricPoly, BuiltinParams::new(d))?,
        builtin(Builtin::HeatKernelShift, BuiltinParams::new(d).shift(shift))?,
    ])
}

/// `mean_value(v) = v(center)` for caloric `v`.
pub fn caloric_mean_value(cfg: &SweepConfig) -> Result<VerifyReport> {
    let mut r = VerifyReport::new(Check::CaloricMeanValue.name());
    for d in ball_dims(cfg) {
        for c in ball_centers(d) {
            for v in caloric_suite(d, &c)? {
                for radius in [0.5, 1.0] {
                    let ball = HeatBall::new(c.clone(), radius)?;
                    let mv = mean_value(&v, &ball, &cfg.quad)?;
                    let vc = v.at(&c);
                    let osc = ball_osc(&v, &ball, cfg.window_nodes)?;
                    r.push(
                        Measurement::new(
                            v.label(),
                            (mv.value - vc).abs(),
                            Relation::Le,
                            cfg.tol.mean_value * (1.0 + osc),
                            0.0,
                        )
                        .param("d", d as f64)
                        .param("r", radius)
                        .param("t", c.t)
                        .param("x0", c.x[0]),
                    );
                }
            }
        }
    }
    Ok(r)
}

/// `Σ coef_k·(x_k)² + rate·t` as an exact polynomial.
fn quadratic(d: usize, coef: f64, rate: f64) -> Result<AnalyticFn> {
    let mut terms: Vec<Term> = (0..d)
        .filter(|_| coef != 0.0)
        .map(|k| {
            let mut a = [0u8; MAX_DIM];
            a[k] = 2;
            Term { coef, a, b: 0.0 }
        })
        .collect();
    if rate != 0.0 {
        terms.push(Term {
            coef: rate,
            a: [0; MAX_DIM],
            b: 1.0,
        });
    }
    let f = TermFn::new(TermKind::Polynomial, Orientation::Forward, vec![0.0; d], 0.0, terms)?;
    Ok(AnalyticFn::new(std::sync::Arc::new(f), "poly"))
}

/// Nonnegative bump of height `h` peaking at `c`, supported in a cylinder
/// of radius `rho`.
fn bump_at(c: &SpaceTimePoint, rho: f64, h: f64) -> Result<AnalyticFn> {
    let top = SpaceTimePoint::new(c.x.clone(), c.t + 0.5 * rho * rho)?;
    Ok(compact_bump(&Cylinder::new(top, rho)?)?.scaled(h))
}

/// `mean_value(v) ≥ v(center)` for subsolutions, including lifts
/// `w + M|x|²/(2d)` of functions with `∂_t w − Δw ≤ M`.
pub fn subsolution(cfg: &SweepConfig) -> Result<VerifyReport> {
    let mut r = VerifyReport::new(Check::Subsolution.name());
    let m_lift = 1.5;
    for d in ball_dims(cfg) {
        let caloric = builtin(Builtin::CaloricPoly, BuiltinParams::new(d))?;
        for c in ball_centers(d) {
            for radius in [0.5, 1.0] {
                let ball = HeatBall::new(c.clone(), radius)?;
                let around = Region::from(Cylinder::new(SpaceTimePoint::new(c.x.clone(), c.t)?, radius.max(1.0))?);
                let scan = ScanGrid::new(cfg.window_nodes, cfg.window_nodes);
                let dip = AnalyticFn::sum(&[caloric.clone(), bump_at(&c, 2.0 * radius, 0.7)?.scaled(-1.0)])?
                    .with_label("caloric-bump");
                let w = AnalyticFn::sum(&[caloric.clone(), quadratic(d, 0.0, m_lift)?])?.with_label("caloric+Mt");
                let top = max_heat_operator(&dip, &around, &scan)?;
                let m_dip = 1.1 * top.max(0.0) + 1e-3;
                let mut cases = vec![
                    (quadratic(d, 1.0, 0.0)?.with_label("|x|^2"), None),
                    (quadratic(d, 0.0, -1.0)?.with_label("-t"), None),
                    (quadratic(d, 1.0, -1.0)?.with_label("|x|^2-t"), None),
                    (dip.clone(), None),
                ];
                for (base, big_m) in [(w, m_lift), (dip, m_dip)] {
                    let lifted =
                        subsolution_lift(&base, big_m, &around, &scan)?.with_label(format!("lift({})", base.label()));
                    cases.push((lifted, Some(base)));
                }
                for (v, base) in cases {
                    let mv = match mean_value(&v, &ball, &cfg.quad) {
                        Ok(q) => q.value,
                        Err(e) => {
                            r.note(format!("{} (d={d}, r={radius}, t={}): {e}", v.label(), c.t));
                            r.push(Measurement::failed(v.label(), v.at(&c)));
                            continue;
                        }
                    };
                    let tag = |m: Measurement| m.param("d", d as f64).param("r", radius).param("t", c.t);
                    r.push(tag(Measurement::new(
                        v.label(),
                        mv,
                        Relation::Ge,
                        v.at(&c),
                        cfg.tol.subsolution,
                    )));
                    if let Some(b) = base {
                        r.push(tag(Measurement::new(
                            format!("{} vs base", v.label()),
                            mv,
                            Relation::Ge,
                            b.at(&c),
                            cfg.tol.subsolution,
                        )));
                    }
                }
            }
        }
    }
    Ok(r)
}

/// Pairs `(α, β)` of the scaling study at dimension `d`.
/// `(α, β)` pairs of the scaling check, without repeats (at `d = 1` the
/// third pair coincides with the first).
pub fn scaling_pairs(d: usize) -> Vec<(u32, u32)> {
    let mut pairs = vec![(2, 2), (4, 2)];
    if !pairs.contains(&(d as u32 + 1, 2)) {
        pairs.push((d as u32 + 1, 2));
    }
    pairs
}

/// The exponent of `r` in the scaling integral, fitted over `cfg.r_grid`.
/// A divergent pair yields a failed slope; the integral has no value.
pub fn scaling_integral_check(cfg: &SweepConfig) -> Result<VerifyReport> {
    let d = cfg.dim;
    let mut r = VerifyReport::new(Check::ScalingIntegral.name());
    for (a, b) in scaling_pairs(d) {
        let label = format!("exponent alpha={a} beta={b}");
        let expected = scaling_exponent(a, b, d);
        let values: Result<Vec<(f64, f64)>> = cfg
            .r_grid
            .iter()
            .map(|&radius| Ok((radius, scaling_integral(a, b, radius, d, &cfg.quad)?.value)))
            .collect();
        match values.and_then(|pts| fit_slope(&label, pts, expected, SlopeRelation::Close, cfg.tol.scaling_slope)) {
            Ok(s) => {
                let at_one = scaling_integral(a, b, 1.0, d, &cfg.quad)?.value;
                r.push_constant(format!("C alpha={a} beta={b}"), at_one, &[("r", 1.0), ("d", d as f64)]);
                r.push_slope(s);
            }
            Err(e) => {
                r.note(format!("{label}: {e}"));
                r.push_slope(Slope::failed(label, expected, cfg.tol.scaling_slope, Vec::new()));
            }
        }
    }
    Ok(r)
}

fn frobenius_rows(values: &[f64], ncomp: usize) -> impl Iterator<Item = f64> + '_ {
    values.chunks(ncomp).map(euclid)
}

/// `g(X0) = 0` and `|g|₀ ≤ ρ^α([a]_α|∂²u|₀ + [f]_α)` on `Q_ρ(X0)`, all
/// quantities measured on one point set.
pub fn frozen_residual_check(p: &ManufacturedProblem, x0: &SpaceTimePoint, cfg: &SweepConfig) -> Result<VerifyReport> {
    let d = p.dim();
    let fz = freeze(p, x0)?;
    let alpha = p.alpha();
    let mut r = VerifyReport::new("residual");
    r.push(Measurement::new(
        "g(X0)",
        fz.g().at(x0).abs(),
        Relation::Close,
        0.0,
        0.0,
    ));
    let hess = spatial_partials(d, 2, 0);
    for &rho in &cfg.rho_grid {
        let region = Region::from(Cylinder::new(x0.clone(), rho)?);
        let points = ScanGrid::new(cfg.residual_nodes, cfg.residual_nodes).points(&region)?;
        let a_vals = p.a().samples(&points);
        let f_vals = tensor_samples(p.f(), &[Partial::ZERO], &points)?;
        let h_vals = tensor_samples(p.u(), &hess, &points)?;
        let g_sup = max_of(points.iter().map(|q| fz.g().at(q).abs()));
        let a_semi = seminorm_of_samples(&points, &a_vals, d * d, alpha, cfg.pair_budget, &[])?.seminorm;
        let f_semi = seminorm_of_samples(&points, &f_vals, 1, alpha, cfg.pair_budget, &[])?.seminorm;
        let h_sup = max_of(frobenius_rows(&h_vals, hess.len()));
        let rhs = cfg.tol.residual_factor * rho.powf(alpha) * (a_semi * h_sup + f_semi);
        r.push(
            Measurement::new("|g|_0", g_sup, Relation::Le, rhs, 0.0)
                .param("rho", rho)
                .param("a_semi", a_semi)
                .param("f_semi", f_semi)
                .param("hess_sup", h_sup),
        );
    }
    Ok(r)
}

fn anchor_of(p: &ManufacturedProblem) -> SpaceTimePoint {
    p.anchor().cloned().unwrap_or_else(|| p.domain().center.clone())
}

/// The frozen residual over the default family, frozen at each anchor.
pub fn frozen_residual(cfg: &SweepConfig) -> Result<VerifyReport> {
    let mut r = VerifyReport::new(Check::FrozenResidual.name());
    for (k, p) in problem_family(&cfg.family(cfg.family_count))?.iter().enumerate() {
        let mut sub = frozen_residual_check(p, &anchor_of(p), cfg)?;
        sub.check = format!("problem {k}");
        absorb(&mut r, sub);
    }
    Ok(r)
}

/// Largest Frobenius distance between two rows.
fn diameter(values: &[f64], ncomp: usize) -> f64 {
    let rows: Vec<&[f64]> = values.chunks(ncomp).collect();
    rows.par_iter()
        .enumerate()
        .map(|(i, a)| {
            rows[i + 1..]
                .iter()
                .map(|b| a.iter().zip(*b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// The four interior estimates at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateSample {
    pub tau: f64,
    pub r: f64,
    /// `|∂_x³u_τ|, |∂_t∂_x²u_τ|, |∂_x∂_t u_τ|, |∂_t²u_τ|` at `X0`.
    pub lhs: [f64; 4],
    pub rhs: [f64; 4],
    pub osc_hess: f64,
    pub osc_dt: f64,
}

pub const ESTIMATE_NAMES: [&str; 4] = ["d_x^3", "d_t d_x^2", "d_x d_t", "d_t^2"];

/// The partial groups of the four estimates, in [`ESTIMATE_NAMES`] order.
fn estimate_groups(d: usize) -> [Vec<Partial>; 4] {
    [
        spatial_partials(d, 3, 0),
        spatial_partials(d, 2, 1),
        spatial_partials(d, 1, 1),
        vec![Partial::from_axes(&[], 2)],
    ]
}

/// Both sides of the four estimates in normalized coordinates at scale
/// `tau`, `R = N·tau`.
pub fn estimate_sample(
    p: &ManufacturedProblem,
    x0: &SpaceTimePoint,
    tau: f64,
    cfg: &SweepConfig,
) -> Result<EstimateSample> {
    let d = p.dim();
    let fz = freeze(p, x0)?;
    let un = fz.normalized_u()?;
    let gn = fz.normalized_g()?;
    let c = fz.normalized_point();
    let m = Mollifier::new(d, cfg.kernel_nodes)?;
    let groups = estimate_groups(d);
    let flat: Vec<Partial> = groups.iter().flatten().copied().collect();
    let split = |row: &[f64]| -> [f64; 4] {
        let mut out = [0.0; 4];
        let mut k = 0;
        for (slot, g) in out.iter_mut().zip(&groups) {
            *slot = euclid(&row[k..k + g.len()]);
            k += g.len();
        }
        out
    };
    let radius = cfg.n_factor * tau;
    let lhs = split(&m.at_many(&un, tau, &flat, &c.x, c.t)?);
    let region = Region::from(Cylinder::new(c.clone(), radius)?);
    let points = ScanGrid::new(cfg.estimate_nodes, cfg.estimate_nodes).points(&region)?;
    let hess = spatial_partials(d, 2, 0);
    let osc_hess = diameter(&tensor_samples(&un, &hess, &points)?, hess.len());
    let osc_dt = diameter(&tensor_samples(&un, &[Partial::dt()], &points)?, 1);
    let g_rows = mollified_rows(&m, &gn, tau, &flat, &points)?;
    let mut g_sup = [0.0f64; 4];
    for row in &g_rows {
        for (s, v) in g_sup.iter_mut().zip(split(row)) {
            *s = s.max(v);
        }
    }
    let r2 = radius * radius;
    let rhs = [
        osc_hess / radius + r2 * g_sup[0],
        osc_hess / r2 + r2 * g_sup[1],
        osc_dt / radius + r2 * g_sup[2],
        osc_dt / r2 + r2 * g_sup[3],
    ];
    Ok(EstimateSample {
        tau,
        r: radius,
        lhs,
        rhs,
        osc_hess,
        osc_dt,
    })
}

/// Checks that `Q_R(X0)`, pulled back to the original coordinates and
/// widened by the mollifier, stays inside the problem's cylinder.
fn check_margin(p: &ManufacturedProblem, x0: &SpaceTimePoint, cfg: &SweepConfig) -> Result<()> {
    let fz = freeze(p, x0)?;
    let tau = cfg.estimate_tau_grid.iter().copied().fold(0.0, f64::max);
    let radius = cfg.n_factor * tau;
    let reach = fz.map.inverse_norm() * (radius + tau);
    let dom = p.domain();
    let off = pdist_raw(&x0.x, 0.0, &dom.center.x, 0.0);
    let lowest = x0.t - radius * radius - tau * tau;
    let highest = x0.t + tau * tau;
    let bottom = dom.center.t - dom.radius * dom.radius;
    if off + reach >= dom.radius || lowest <= bottom || highest >= dom.center.t {
        return Err(Error::Precondition(format!(
            "domain margin insufficient at {x0}: R = {radius}, tau = {tau}, spatial reach {reach}"
        )));
    }
    Ok(())
}

fn estimate_samples(p: &ManufacturedProblem, x0: &SpaceTimePoint, cfg: &SweepConfig) -> Result<Vec<EstimateSample>> {
    check_margin(p, x0, cfg)?;
    cfg.estimate_tau_grid
        .iter()
        .map(|&tau| estimate_sample(p, x0, tau, cfg))
        .collect()
}

fn band(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

fn push_estimate_ratios(r: &mut VerifyReport, samples: &[EstimateSample]) {
    for (k, name) in ESTIMATE_NAMES.iter().enumerate() {
        let ratios: Vec<f64> = samples.iter().map(|s| s.lhs[k] / s.rhs[k]).collect();
        for (s, ratio) in samples.iter().zip(&ratios) {
            r.push(
                Measurement::new(format!("{name} ratio"), *ratio, Relation::Finite, 0.0, 0.0)
                    .param("tau", s.tau)
                    .param("R", s.r)
                    .param("lhs", s.lhs[k])
                    .param("rhs", s.rhs[k]),
            );
        }
        let (i, hi) = argmax(ratios.iter().copied());
        r.push_constant(
            format!("{name} C"),
            hi,
            &[("tau", samples[i].tau), ("band", band(&ratios))],
        );
    }
}

/// `LHS/RHS` of the four interior derivative estimates at `X0` across
/// `cfg.estimate_tau_grid`. The ratios must be finite; the largest is the
/// problem's empirical constant.
///
/// The left sides are signed derivatives at one point and may pass near
/// zero as τ varies, so a single problem's smallest ratio says little; the
/// stability band is taken over a family (see [`derivative_estimates`]).
pub fn derivative_estimate_check(
    p: &ManufacturedProblem,
    x0: &SpaceTimePoint,
    cfg: &SweepConfig,
) -> Result<VerifyReport> {
    let samples = estimate_samples(p, x0, cfg)?;
    let mut r = VerifyReport::new("estimates");
    push_estimate_ratios(&mut r, &samples);
    Ok(r)
}

/// The derivative estimates over the default family at its anchors. For
/// each estimate and τ the empirical constant is the largest ratio over
/// the family; it must stay within `cfg.tol.estimate_band` across τ. Also
/// checks that `osc_{Q_R} ∂_x²u / R` stays bounded as `R → 0` for a smooth
/// problem.
pub fn derivative_estimates(cfg: &SweepConfig) -> Result<VerifyReport> {
    let mut r = VerifyReport::new(Check::DerivativeEstimates.name());
    let family = problem_family(&cfg.family(cfg.family_count))?;
    let per_problem = family
        .iter()
        .map(|p| estimate_samples(p, &anchor_of(p), cfg))
        .collect::<Result<Vec<_>>>()?;
    for (k, samples) in per_problem.iter().enumerate() {
        let mut sub = VerifyReport::new(format!("problem {k}"));
        push_estimate_ratios(&mut sub, samples);
        absorb(&mut r, sub);
    }
    for (k, name) in ESTIMATE_NAMES.iter().enumerate() {
        let mut consts = Vec::new();
        for (j, &tau) in cfg.estimate_tau_grid.iter().enumerate() {
            let (who, c) = argmax(per_problem.iter().map(|s| s[j].lhs[k] / s[j].rhs[k]));
            r.push_constant(format!("{name} family C"), c, &[("tau", tau), ("problem", who as f64)]);
            consts.push(c);
        }
        r.push(Measurement::new(
            format!("{name} band"),
            band(&consts),
            Relation::Le,
            cfg.tol.estimate_band,
            0.0,
        ));
    }
    let mut smooth = cfg.family(1);
    smooth.singular = false;
    let p = &problem_family(&smooth)?[0];
    let x0 = anchor_of(p);
    let pts = estimate_samples(p, &x0, cfg)?
        .iter()
        .map(|s| (s.r, s.osc_hess / s.r))
        .collect();
    r.push_slope(fit_slope(
        "smooth osc/R",
        pts,
        0.0,
        SlopeRelation::AtLeast,
        cfg.tol.slope,
    )?);
    Ok(r)
}

/// The pieces of one Schauder ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchauderRatio {
    /// `[∂_x²u]_α + [∂_t u]_α`.
    pub top: f64,
    /// `[f]_α`.
    pub f_semi: f64,
    /// `|u|₀`.
    pub sup_u: f64,
    pub ratio: f64,
}

/// `([∂_x²u]_α + [∂_t u]_α) / ([f]_α + |u|₀)` on the problem's cylinder.
pub fn schauder_ratio(p: &ManufacturedProblem, nodes: usize, pair_budget: u64) -> Result<SchauderRatio> {
    let region = Region::from(p.domain().clone());
    let scan = ScanGrid::new(nodes, nodes);
    let alpha = p.alpha();
    let norm = parabolic_norm(p.u(), alpha, &region, &scan, pair_budget)?;
    let f_semi = holder_seminorm(p.f(), alpha, &region, &scan, pair_budget)?.seminorm;
    let den = f_semi + norm.sup_u;
    if den == 0.0 {
        return Err(Error::Degenerate("[f]_alpha + |u|_0 = 0".into()));
    }
    let top = norm.top_seminorms();
    Ok(SchauderRatio {
        top,
        f_semi,
        sup_u: norm.sup_u,
        ratio: top / den,
    })
}

/// `ρ_k` for every problem; the report's constant is `max ρ_k`.
pub fn schauder_sweep(family: &[ManufacturedProblem], cfg: &SweepConfig) -> Result<(VerifyReport, Vec<SchauderRatio>)> {
    let mut r = VerifyReport::new("sweep");
    let ratios = family
        .iter()
        .map(|p| schauder_ratio(p, cfg.grid_nodes, cfg.pair_budget))
        .collect::<Result<Vec<_>>>()?;
    for (k, s) in ratios.iter().enumerate() {
        r.push(
            Measurement::new("rho", s.ratio, Relation::Finite, 0.0, 0.0)
                .param("problem", k as f64)
                .param("top", s.top)
                .param("f_semi", s.f_semi)
                .param("sup_u", s.sup_u),
        );
    }
    let (k, max) = argmax(ratios.iter().map(|s| s.ratio));
    r.push_constant("max rho", max, &[("problem", k as f64), ("count", family.len() as f64)]);
    Ok((r, ratios))
}

fn argmax(it: impl IntoIterator<Item = f64>) -> (usize, f64) {
    it.into_iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |(bk, bv), (k, v)| if v > bv { (k, v) } else { (bk, bv) },
    )
}

/// The end-to-end Schauder ratio: finite family maximum, stable under
/// doubling the family and refining the grid, invariant under `u ↦ 3u`
/// and under parabolic rescaling.
pub fn schauder(cfg: &SweepConfig) -> Result<VerifyReport> {
    let mut r = VerifyReport::new(Check::Schauder.name());
    let count = cfg.family_count;
    let big = problem_family(&cfg.family(2 * count))?;
    let (sweep, ratios) = schauder_sweep(&big, cfg)?;
    let max_small = ratios[..count]
        .iter()
        .map(|s| s.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_big = ratios.iter().map(|s| s.ratio).fold(f64::NEG_INFINITY, f64::max);
    absorb(&mut r, sweep);
    r.push(Measurement::new("max rho", max_small, Relation::Finite, 0.0, 0.0).param("count", count as f64));
    r.push(
        Measurement::new(
            "family doubling",
            max_big / max_small,
            Relation::Le,
            cfg.tol.family_growth,
            0.0,
        )
        .param("max_small", max_small)
        .param("max_big", max_big),
    );

    let fine = 2 * cfg.grid_nodes - 1;
    let refined = big[..count]
        .par_iter()
        .map(|p| schauder_ratio(p, fine, cfg.pair_budget))
        .collect::<Result<Vec<_>>>()?;
    for (k, (a, b)) in ratios.iter().zip(&refined).enumerate() {
        r.push(
            Measurement::new(
                "refinement",
                b.ratio / a.ratio,
                Relation::Close,
                1.0,
                cfg.tol.refinement,
            )
            .param("problem", k as f64)
            .param("nodes", fine as f64),
        );
    }

    let p0 = &big[0];
    let tripled = schauder_ratio(&p0.scaled(3.0)?, cfg.grid_nodes, cfg.pair_budget)?;
    r.push(Measurement::new(
        "homogeneity 3u",
        tripled.ratio,
        Relation::RelClose,
        ratios[0].ratio,
        cfg.tol.homogeneity,
    ));

    let lambda = 2.0;
    let scaled = schauder_ratio(&p0.rescaled(lambda)?, cfg.grid_nodes, cfg.pair_budget)?;
    r.push(
        Measurement::new(
            "rescaling",
            scaled.top / scaled.f_semi,
            Relation::RelClose,
            ratios[0].top / ratios[0].f_semi,
            cfg.tol.rescaling,
        )
        .param("lambda", lambda),
    );

    // [a]_α grows as the coefficient cusp narrows; recorded only
    for ell in [0.5, 0.25, 0.125] {
        let mut fam = cfg.family(count.min(5));
        fam.cusp_scale = ell;
        let probs = problem_family(&fam)?;
        let (_, rs) = schauder_sweep(&probs, cfg)?;
        let (k, max) = argmax(rs.iter().map(|s| s.ratio));
        let diam = 2f64.max(probs[k].domain().radius * 2.0);
        r.push_constant(
            format!("max rho at cusp_scale={ell}"),
            max,
            &[("problem", k as f64), ("a_bound", probs[k].a().seminorm_bound(diam))],
        );
    }
    Ok(r)
}
