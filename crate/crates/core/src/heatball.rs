//! Heat balls, the mean-value kernel `|x−y|²/(t−s)²` and the scaling
//! integral family.
//!
//! For a center `(x, t)` and radius `r` the heat ball is
//! `E = {(y, s) : t − r²/(4π) < s < t, |x − y| ≤ R(t − s)}` with
//! `R(σ) = sqrt(2dσ·log(r²/(4πσ)))`, the level set of the backward heat
//! kernel at height `r^{−d}`.
//!
//! Slices are integrated in `σ = σ_max·e^{−w}`, `w = v^p`, which turns the
//! logarithmic endpoint `σ → 0` into a Gaussian tail in `v`; each slice
//! is a ball integrated in polar coordinates with the exact slice radius.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{check_dim, Evaluable, SpaceTimePoint, MAX_DIM};

/// Depth of the tail `w` kept by the mean-value quadrature, times `d`.
const MEAN_VALUE_TAIL: f64 = 80.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatBall {
    pub center: SpaceTimePoint,
    pub r: f64,
}

impl HeatBall {
    pub fn new(center: SpaceTimePoint, r: f64) -> Result<Self> {
        check_dim(center.dim())?;
        if !(r > 0.0 && r.is_finite()) {
            return Err(invalid("r", format!("must be positive and finite, got {r}")));
        }
        Ok(Self { center, r })
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// `r²/(4π)`.
    pub fn time_depth(&self) -> f64 {
        self.r * self.r / (4.0 * PI)
    }

    /// Slice radius at elapsed time `sigma = t − s`.
    pub fn radius(&self, sigma: f64) -> Result<f64> {
        radius(self.r, sigma, self.dim())
    }

    pub fn contains(&self, y: &[f64], s: f64) -> bool {
        if y.len() != self.dim() {
            return false;
        }
        let sigma = self.center.t - s;
        if !(sigma > 0.0 && sigma < self.time_depth()) {
            return false;
        }
        let dist = y
            .iter()
            .zip(&self.center.x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        dist <= radius_unchecked(self.r, sigma, self.dim())
    }
}

fn radius_unchecked(r: f64, sigma: f64, d: usize) -> f64 {
    let l = (r * r / (4.0 * PI * sigma)).ln().max(0.0);
    (2.0 * d as f64 * sigma * l).sqrt()
}

/// `R_r(σ) = sqrt(2dσ·log(r²/(4πσ)))` for `0 < σ < r²/(4π)`.
pub fn radius(r: f64, sigma: f64, d: usize) -> Result<f64> {
    check_dim(d)?;
    let depth = r * r / (4.0 * PI);
    if !(r > 0.0) || !(sigma > 0.0 && sigma < depth) {
        return Err(invalid(
            "sigma",
            format!("must lie in (0, r²/(4π)) = (0, {depth}), got {sigma}"),
        ));
    }
    Ok(radius_unchecked(r, sigma, d))
}

/// Quadrature resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    /// Gauss nodes in the slice variable.
    pub n_slices: usize,
    /// Gauss nodes along each slice radius.
    pub n_radial: usize,
    /// Angular nodes (ignored for `d = 1`, where the sphere is two points).
    pub n_angular: usize,
    /// Exponent `p` of the substitution `w = v^p`.
    pub cluster: f64,
    /// Largest accepted change under doubling all counts, relative to
    /// `max(1, |value|)`.
    pub tol: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            n_slices: 64,
            n_radial: 16,
            n_angular: 16,
            cluster: 2.0,
            tol: 1e-6,
        }
    }
}

impl QuadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_slices < 4 || self.n_radial < 4 || self.n_angular < 4 {
            return Err(invalid("quadrature", "all node counts must be at least 4"));
        }
        if !(self.cluster >= 1.0 && self.cluster.is_finite()) {
            return Err(invalid("cluster", format!("must be at least 1, got {}", self.cluster)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        Ok(())
    }

    pub fn doubled(&self) -> Self {
        Self {
            n_slices: 2 * self.n_slices,
            n_radial: 2 * self.n_radial,
            n_angular: 2 * self.n_angular,
            ..self.clone()
        }
    }
}

/// A quadrature value with its refinement estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    /// `|I(q) − I(2q)|`.
    pub est_error: f64,
    pub spec: QuadSpec,
}

fn gauss(n: usize) -> Vec<(f64, f64)> {
    GaussLegendre::new(NonZeroUsize::new(n).expect("positive node count"))
        .into_node_weight_pairs()
        .into_vec()
}

/// Unit-sphere directions with weights summing to the sphere's area.
fn sphere_rule(d: usize, n: usize) -> Vec<([f64; MAX_DIM], f64)> {
    match d {
        1 => vec![([1.0, 0.0, 0.0], 1.0), ([-1.0, 0.0, 0.0], 1.0)],
        2 => (0..n)
            .map(|k| {
                let phi = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                ([phi.cos(), phi.sin(), 0.0], 2.0 * PI / n as f64)
            })
            .collect(),
        _ => {
            let mut out = Vec::with_capacity(2 * n * n);
            for (c, wc) in gauss(n) {
                let s = (1.0 - c * c).max(0.0).sqrt();
                for k in 0..2 * n {
                    let phi = 2.0 * PI * (k as f64 + 0.5) / (2 * n) as f64;
                    out.push(([s * phi.cos(), s * phi.sin(), c], wc * PI / n as f64));
                }
            }
            out
        }
    }
}

/// `∫_0^{σ_max} ∫_{|z| ≤ R(σ)} g(x + z, t − σ) |z|²/σ² dz dσ`.
fn kernel_integral<F>(ball: &HeatBall, q: &QuadSpec, g: &F) -> Result<f64>
where
    F: Fn(&[f64], f64) -> Result<f64> + ?Sized,
{
    let d = ball.dim();
    let smax = ball.time_depth();
    let p = q.cluster;
    let vmax = (MEAN_VALUE_TAIL / d as f64).powf(1.0 / p);
    let slices = gauss(q.n_slices);
    let radial = gauss(q.n_radial);
    let sphere = sphere_rule(d, q.n_angular);
    let mut y = [0.0; MAX_DIM];
    let mut total = 0.0;
    for (node, weight) in &slices {
        let v = 0.5 * vmax * (node + 1.0);
        let w = v.powf(p);
        let sigma = smax * (-w).exp();
        // dσ = σ dw = σ p v^{p−1} dv
        let jac = 0.5 * vmax * weight * sigma * p * v.powf(p - 1.0);
        let big_r = (2.0 * d as f64 * sigma * w).sqrt();
        if big_r == 0.0 || jac == 0.0 {
            continue;
        }
        let s = ball.center.t - sigma;
        let mut slice = 0.0;
        for (rn, rw) in &radial {
            let rho = 0.5 * big_r * (rn + 1.0);
            let rjac = 0.5 * big_r * rw * rho.powi(d as i32 + 1);
            let mut ring = 0.0;
            for (dir, aw) in &sphere {
                for k in 0..d {
                    y[k] = ball.center.x[k] + rho * dir[k];
                }
                ring += aw * g(&y[..d], s)?;
            }
            slice += rjac * ring;
        }
        total += jac * slice / (sigma * sigma);
    }
    Ok(total)
}

fn converged<F>(q: &QuadSpec, eval: F) -> Result<QuadResult>
where
    F: Fn(&QuadSpec) -> Result<f64>,
{
    q.validate()?;
    let coarse = eval(q)?;
    let fine_spec = q.doubled();
    let fine = eval(&fine_spec)?;
    let est_error = (fine - coarse).abs();
    if !fine.is_finite() {
        return Err(Error::NonConvergent {
            diff: f64::INFINITY,
            tol: q.tol,
        });
    }
    let tol = q.tol * fine.abs().max(1.0);
    if est_error > tol {
        return Err(Error::NonConvergent { diff: est_error, tol });
    }
    Ok(QuadResult {
        value: fine,
        est_error,
        spec: q.clone(),
    })
}

/// `(1/(4r^d)) ∬_E v(y,s) |x−y|²/(t−s)² dy ds`.
pub fn mean_value<E: Evaluable + ?Sized>(v: &E, ball: &HeatBall, q: &QuadSpec) -> Result<QuadResult> {
    if v.dim() != ball.dim() {
        return Err(Error::DimensionMismatch {
            expected: ball.dim(),
            got: v.dim(),
        });
    }
    let norm = 4.0 * ball.r.powi(ball.dim() as i32);
    converged(q, |spec| {
        Ok(kernel_integral(ball, spec, &|y: &[f64], s: f64| v.eval(y, s))? / norm)
    })
}

/// `∬_E |x−y|²/(t−s)² dy ds`, which equals `4r^d`.
pub fn kernel_mass(ball: &HeatBall, q: &QuadSpec) -> Result<QuadResult> {
    converged(q, |spec| kernel_integral(ball, spec, &|_: &[f64], _: f64| Ok(1.0)))
}

/// `(1/r^d) ∫_0^{r²/(4π)} R_r(σ)^α σ^{−β} dσ`.
///
/// With `γ = α/2 − β + 1` the integrand behaves like `σ^{γ−1}` (up to a
/// logarithm) as `σ → 0`; `γ ≤ 0` diverges and is rejected.
pub fn scaling_integral(alpha: u32, beta: u32, r: f64, d: usize, q: &QuadSpec) -> Result<QuadResult> {
    check_dim(d)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid("r", format!("must be positive and finite, got {r}")));
    }
    let a = alpha as f64;
    let gamma = a / 2.0 - beta as f64 + 1.0;
    if gamma <= 0.0 {
        return Err(Error::Divergent {
            alpha,
            beta,
            exponent: gamma,
        });
    }
    let smax = r * r / (4.0 * PI);
    let wmax = 40.0 / gamma + 2.0 * a;
    let prefactor = r.powi(-(d as i32));
    converged(q, |spec| {
        let p = spec.cluster;
        let vmax = wmax.powf(1.0 / p);
        let mut total = 0.0;
        for (node, weight) in gauss(spec.n_slices) {
            let v = 0.5 * vmax * (node + 1.0);
            let w = v.powf(p);
            let sigma = smax * (-w).exp();
            let jac = 0.5 * vmax * weight * sigma * p * v.powf(p - 1.0);
            let big_r = (2.0 * d as f64 * sigma * w).sqrt();
            total += jac * big_r.powi(alpha as i32) * sigma.powi(-(beta as i32));
        }
        Ok(prefactor * total)
    })
}

/// `−d + α − 2β + 2`, the exponent in `scaling_integral ∝ r^{…}`.
pub fn scaling_exponent(alpha: u32, beta: u32, d: usize) -> f64 {
    -(d as f64) + alpha as f64 - 2.0 * beta as f64 + 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{builtin_family, AnalyticFn, BuiltinParams};

    fn ball(d: usize, r: f64) -> HeatBall {
        HeatBall::new(SpaceTimePoint::origin(d), r).unwrap()
    }

    #[test]
    fn radius_examples() {
        let s = 1.0 / (4.0 * PI * std::f64::consts::E);
        let r = radius(1.0, s, 1).unwrap();
        assert!((r - (1.0 / (2.0 * PI * std::f64::consts::E)).sqrt()).abs() < 1e-15);
        // level set: the heat kernel at (R, σ) equals r^{-d} = 1
        let phi = (4.0 * PI * s).powf(-0.5) * (-r * r / (4.0 * s)).exp();
        assert!((phi - 1.0).abs() < 1e-12);
        let depth = 1.0 / (4.0 * PI);
        assert!(radius(1.0, depth * (1.0 - 1e-12), 1).unwrap() < 1e-5);
        assert!(radius(1.0, 1e-300, 1).unwrap() < 1e-140);
        assert!(radius(1.0, depth, 1).is_err());
        assert!(radius(1.0, 0.0, 1).is_err());
    }

    #[test]
    fn membership() {
        let b = ball(1, 1.0);
        assert!(!b.contains(&[0.0], 0.0));
        assert!(!b.contains(&[0.0], -1.0 / (4.0 * PI)));
        assert!(b.contains(&[0.0], -1.0 / (8.0 * PI)));
    }

    #[test]
    fn kernel_mass_is_four_r_to_the_d() {
        for d in 1..=3 {
            for r in [0.5, 1.0, 2.0] {
                let m = kernel_mass(&ball(d, r), &QuadSpec::default()).unwrap();
                let expect = 4.0 * r.powi(d as i32);
                assert!(((m.value - expect) / expect).abs() < 1e-8, "d={d} r={r}: {}", m.value);
            }
        }
    }

    #[test]
    fn caloric_polynomial_attains_equality() {
        let v = builtin_family("caloric_poly", &BuiltinParams::new(1)).unwrap();
        let m = mean_value(&v, &ball(1, 0.5), &QuadSpec::default()).unwrap();
        assert!(m.value.abs() < 1e-10, "{}", m.value);
    }

    #[test]
    fn square_is_a_strict_subsolution() {
        let v = AnalyticFn::from_fn(1, "x^2", |x, _| x[0] * x[0]);
        let m = mean_value(&v, &ball(1, 1.0), &QuadSpec::default()).unwrap();
        assert!(m.value > 0.0);
    }

    #[test]
    fn scaling_integral_constant_case() {
        let q = QuadSpec::default();
        let v = scaling_integral(0, 0, 1.0, 1, &q).unwrap();
        assert!((v.value - 1.0 / (4.0 * PI)).abs() < 1e-12);
        assert!(matches!(
            scaling_integral(2, 2, 1.0, 1, &q),
            Err(Error::Divergent { .. })
        ));
    }

    #[test]
    fn non_convergence_is_reported() {
        // a discontinuous integrand defeats the Gauss rules
        let v = AnalyticFn::from_fn(1, "jump", |x, _| if x[0] > 0.01 { 1e3 } else { 0.0 });
        let q = QuadSpec {
            tol: 1e-12,
            ..QuadSpec::default()
        };
        assert!(matches!(
            mean_value(&v, &ball(1, 1.0), &q),
            Err(Error::NonConvergent { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        let q = QuadSpec {
            n_radial: 3,
            ..QuadSpec::default()
        };
        assert!(kernel_mass(&ball(1, 1.0), &q).is_err());
    }
}
