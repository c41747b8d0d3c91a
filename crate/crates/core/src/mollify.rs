//! The parabolic mollifier `ρ`, its scaling `ρ_τ(x,t) = τ^{−(d+2)}ρ(x/τ, t/τ²)`
//! and convolution of functions against `ρ_τ` and its derivatives.
//!
//! `ρ(x,t) = φ(t)·Πφ(x_k)` with `φ = ψ/Z`, `ψ(s) = exp(−1/(1−s²))` and
//! `Z = ∫ψ`. Substituting `Y = X − (τz, τ²w)` in the convolution gives
//!
//! `∂^β u_τ(X) = τ^{−|β_x|−2β_t} ∬ (∂^βρ)(z,w) u(x − τz, t − τ²w) dz dw`,
//!
//! an integral over the fixed unit box, discretised once by a midpoint
//! rule whose relative accuracy is then independent of `τ`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::bump::{psi, psi_derivatives};
use crate::field::{check_dim, BoxDomain, Evaluable, Field, GridSpec, Partial, Provenance, MAX_DIM};

/// Default number of kernel nodes per axis.
pub const DEFAULT_KERNEL_NODES: usize = 33;
/// Highest spatial derivative order available per axis and in total.
pub const MAX_SPATIAL: u8 = 3;
/// Highest temporal derivative order available.
pub const MAX_TEMPORAL: u8 = 2;

/// Moments up to this power are matched by the derivative kernels.
const MOMENT_DEGREE: usize = 8;

struct Moments {
    /// `Z = ∫ψ`.
    z: f64,
    /// `μ_q = ∫φ(s) s^q ds` for `q ≤ 2·MOMENT_DEGREE`.
    mu: Vec<f64>,
}

fn moments() -> &'static Moments {
    static CELL: OnceLock<Moments> = OnceLock::new();
    CELL.get_or_init(|| {
        let rule = gauss_quad::GaussLegendre::new(std::num::NonZeroUsize::new(400).expect("nonzero"));
        let pairs = rule.as_node_weight_pairs();
        let z: f64 = pairs.iter().map(|(s, w)| w * psi(*s)).sum();
        let mu = (0..=2 * MOMENT_DEGREE)
            .map(|q| pairs.iter().map(|(s, w)| w * psi(*s) * s.powi(q as i32)).sum::<f64>() / z)
            .collect();
        Moments { z, mu }
    })
}

/// Normalisation constant `Z = ∫_{−1}^{1} exp(−1/(1−s²)) ds`.
pub fn profile_normalization() -> f64 {
    moments().z
}

/// Discrete mollifier: profile evaluators plus the quadrature weights used
/// by every convolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    dim: usize,
    nodes: Vec<f64>,
    /// `weights[m][k]` approximates `∫ φ^{(m)}` over cell `k`.
    weights: Vec<Vec<f64>>,
}

impl Mollifier {
    pub fn new(dim: usize, kernel_nodes: usize) -> Result<Self> {
        check_dim(dim)?;
        if kernel_nodes < 2 * MOMENT_DEGREE + 2 {
            return Err(invalid(
                "kernel_nodes",
                format!("need at least {} nodes, got {kernel_nodes}", 2 * MOMENT_DEGREE + 2),
            ));
        }
        let k = kernel_nodes;
        let h = 2.0 / k as f64;
        let mut nodes = vec![0.0; k];
        for i in 0..k.div_ceil(2) {
            let z = -1.0 + (2 * i + 1) as f64 / k as f64;
            nodes[i] = z;
            nodes[k - 1 - i] = -z;
        }
        let m = moments();
        let raw: Vec<[f64; 6]> = nodes.iter().map(|&z| psi_derivatives(z)).collect();

        let mut weights = Vec::with_capacity(MAX_SPATIAL as usize + 1);
        let base: Vec<f64> = raw.iter().map(|d| h * d[0]).collect();
        let total: f64 = base.iter().sum();
        weights.push(base.iter().map(|w| w / total).collect::<Vec<f64>>());
        for order in 1..=MAX_SPATIAL as usize {
            let naive: Vec<f64> = raw.iter().map(|d| h * d[order] / m.z).collect();
            weights.push(moment_correct(&nodes, &naive, order, h, m)?);
        }
        Ok(Self { dim, nodes, weights })
    }

    pub fn with_default_nodes(dim: usize) -> Result<Self> {
        Self::new(dim, DEFAULT_KERNEL_NODES)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kernel_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// `ρ(x, t)`.
    pub fn profile(&self, x: &[f64], t: f64) -> f64 {
        let z = moments().z;
        x.iter().fold(psi(t) / z, |acc, v| acc * psi(*v) / z)
    }

    /// Exact partial `∂^p ρ(x, t)`.
    pub fn profile_partial(&self, p: Partial, x: &[f64], t: f64) -> Result<f64> {
        check_order(p)?;
        let z = moments().z;
        let mut v = psi_derivatives(t)[p.t as usize] / z;
        for (k, xv) in x.iter().enumerate() {
            v *= psi_derivatives(*xv)[p.x[k] as usize] / z;
        }
        Ok(v)
    }

    /// Discrete weights for order `m` along one axis.
    pub fn axis_weights(&self, m: usize) -> &[f64] {
        &self.weights[m]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `∬|∂^p ρ|`, the constant of the derivative estimates, computed from
    /// the discrete kernel.
    pub fn derivative_constant(&self, p: Partial) -> Result<f64> {
        check_order(p)?;
        let l1 = |m: usize| self.weights[m].iter().map(|w| w.abs()).sum::<f64>();
        Ok((0..self.dim).map(|k| l1(p.x[k] as usize)).product::<f64>() * l1(p.t as usize))
    }

    /// `∂^p u_τ(x, t)`.
    pub fn at<E: Evaluable + ?Sized>(&self, u: &E, tau: f64, p: Partial, x: &[f64], t: f64) -> Result<f64> {
        check_tau(tau)?;
        check_order(p)?;
        if u.dim() != self.dim || x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: if u.dim() != self.dim { u.dim() } else { x.len() },
            });
        }
        self.convolve(u, tau, p, x, t)
    }

    /// Several partials of `u_τ` at one point from a single pass over the
    /// samples of `u`.
    pub fn at_many<E: Evaluable + ?Sized>(
        &self,
        u: &E,
        tau: f64,
        ps: &[Partial],
        x: &[f64],
        t: f64,
    ) -> Result<Vec<f64>> {
        check_tau(tau)?;
        for p in ps {
            check_order(*p)?;
        }
        let d = self.dim;
        if u.dim() != d || x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if u.dim() != d { u.dim() } else { x.len() },
            });
        }
        let k = self.nodes.len();
        let tau2 = tau * tau;
        let spatial = k.pow(d as u32);
        let mut y = [0.0; MAX_DIM];
        let mut idx = [0usize; MAX_DIM];
        let mut acc = vec![0.0; ps.len()];
        for l in 0..k {
            let s = t - tau2 * self.nodes[l];
            for code in 0..spatial {
                let mut c = code;
                for a in 0..d {
                    idx[a] = c % k;
                    c /= k;
                    y[a] = x[a] - tau * self.nodes[idx[a]];
                }
                let v = u.eval(&y[..d], s)?;
                for (out, p) in acc.iter_mut().zip(ps) {
                    let mut w = self.weights[p.t as usize][l];
                    for a in 0..d {
                        w *= self.weights[p.x[a] as usize][idx[a]];
                    }
                    *out += w * v;
                }
            }
        }
        Ok(acc
            .into_iter()
            .zip(ps)
            .map(|(v, p)| v * tau.powi(-p.weight()))
            .collect())
    }

    fn convolve<E: Evaluable + ?Sized>(&self, u: &E, tau: f64, p: Partial, x: &[f64], t: f64) -> Result<f64> {
        let d = self.dim;
        let k = self.nodes.len();
        let wt = &self.weights[p.t as usize];
        let wx: [&[f64]; MAX_DIM] = std::array::from_fn(|a| {
            let m = if a < d { p.x[a] as usize } else { 0 };
            self.weights[m].as_slice()
        });
        let tau2 = tau * tau;
        let mut y = [0.0; MAX_DIM];
        let mut acc = 0.0;
        let spatial = k.pow(d as u32);
        for (l, w_l) in wt.iter().enumerate() {
            if *w_l == 0.0 {
                continue;
            }
            let s = t - tau2 * self.nodes[l];
            let mut inner = 0.0;
            for code in 0..spatial {
                let mut c = code;
                let mut w = 1.0;
                for a in 0..d {
                    let i = c % k;
                    c /= k;
                    w *= wx[a][i];
                    y[a] = x[a] - tau * self.nodes[i];
                }
                if w != 0.0 {
                    inner += w * u.eval(&y[..d], s)?;
                }
            }
            acc += w_l * inner;
        }
        Ok(acc * tau.powi(-p.weight()))
    }

    /// Samples `∂^p u_τ` on an `nx^d × nt` grid over `domain` shrunk by `τ`.
    /// Values outside a sampled input's bounds are never extrapolated.
    pub fn field<E: Evaluable + ?Sized>(
        &self,
        u: &E,
        domain: &BoxDomain,
        tau: f64,
        p: Partial,
        nx: usize,
        nt: usize,
    ) -> Result<Field> {
        check_tau(tau)?;
        check_order(p)?;
        if domain.dim() != self.dim || u.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: if domain.dim() != self.dim {
                    domain.dim()
                } else {
                    u.dim()
                },
            });
        }
        let shrunk = domain.shrink(tau)?;
        let spec = GridSpec::new(shrunk, nx, nt)?;
        let values = (0..spec.node_count())
            .into_par_iter()
            .map(|i| {
                let mut x = [0.0; MAX_DIM];
                let t = spec.node_into(i, &mut x[..self.dim]);
                self.convolve(u, tau, p, &x[..self.dim], t)
            })
            .collect::<Result<Vec<f64>>>()?;
        Field::new(spec, values, Some(Provenance::Computed))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(invalid("tau", format!("must be positive and finite, got {tau}")))
    }
}

fn check_order(p: Partial) -> Result<()> {
    if p.spatial_order() > MAX_SPATIAL || p.t > MAX_TEMPORAL {
        Err(Error::UnsupportedOrder(format!(
            "{p}: at most {MAX_SPATIAL} spatial and {MAX_TEMPORAL} temporal derivatives"
        )))
    } else {
        Ok(())
    }
}

/// Adds a correction along `φ(z)z^q` (same parity as the order) so that
/// the discrete moments `Σ W_k z_k^p` equal the continuous ones
/// `∫φ^{(m)} z^p = (−1)^m p!/(p−m)! μ_{p−m}` for every `p ≤ MOMENT_DEGREE`
/// of the kernel's parity. Other-parity moments vanish by symmetry.
fn moment_correct(nodes: &[f64], naive: &[f64], order: usize, h: f64, m: &Moments) -> Result<Vec<f64>> {
    let powers: Vec<usize> = (0..=MOMENT_DEGREE).filter(|p| p % 2 == order % 2).collect();
    let n = powers.len();
    let target = |p: usize| -> f64 {
        if p < order {
            return 0.0;
        }
        let falling: f64 = ((p - order + 1)..=p).map(|v| v as f64).product();
        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        sign * falling * m.mu[p - order]
    };
    let basis = |q: usize, z: f64| h * psi(z) / m.z * z.powi(q as i32);
    let gram = DMatrix::from_fn(n, n, |i, j| {
        nodes
            .iter()
            .map(|&z| basis(powers[j], z) * z.powi(powers[i] as i32))
            .sum::<f64>()
    });
    let rhs = DVector::from_fn(n, |i, _| {
        let p = powers[i];
        target(p) - nodes.iter().zip(naive).map(|(&z, w)| w * z.powi(p as i32)).sum::<f64>()
    });
    let coef = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("singular moment system".into()))?;
    Ok(nodes
        .iter()
        .zip(naive)
        .map(|(&z, w)| w + (0..n).map(|j| coef[j] * basis(powers[j], z)).sum::<f64>())
        .collect())
}

/// `ρ_τ(x, t) = τ^{−(d+2)} ρ(x/τ, t/τ²)`.
pub fn rho_tau(profile: &Mollifier, tau: f64, x: &[f64], t: f64) -> Result<f64> {
    check_tau(tau)?;
    if x.len() != profile.dim {
        return Err(Error::DimensionMismatch {
            expected: profile.dim,
            got: x.len(),
        });
    }
    let mut xs = [0.0; MAX_DIM];
    for (k, v) in x.iter().enumerate() {
        xs[k] = v / tau;
    }
    Ok(tau.powi(-(profile.dim as i32 + 2)) * profile.profile(&xs[..x.len()], t / (tau * tau)))
}

/// `u_τ` on `domain` shrunk by `τ`.
pub fn mollify<E: Evaluable + ?Sized>(
    u: &E,
    profile: &Mollifier,
    tau: f64,
    domain: &BoxDomain,
    nx: usize,
    nt: usize,
) -> Result<Field> {
    profile.field(u, domain, tau, Partial::ZERO, nx, nt)
}

/// `∂_x^a ∂_t^j u_τ` computed by convolving `u` with `∂_x^a ∂_t^j ρ_τ`.
pub fn mollify_derivative<E: Evaluable + ?Sized>(
    u: &E,
    profile: &Mollifier,
    tau: f64,
    p: Partial,
    domain: &BoxDomain,
    nx: usize,
    nt: usize,
) -> Result<Field> {
    profile.field(u, domain, tau, p, nx, nt)
}

/// Metrics record written next to mollified fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifyMetrics {
    pub tau: f64,
    pub sup_norm: f64,
    pub slack: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{builtin_family, AnalyticFn, BuiltinParams};

    #[test]
    fn normalization_constant() {
        assert!((profile_normalization() - 0.4439938161680793).abs() < 1e-14);
    }

    #[test]
    fn weights_reproduce_low_moments() {
        let m = Mollifier::with_default_nodes(1).unwrap();
        let z = m.nodes();
        let mom =
            |order: usize, p: i32| -> f64 { m.axis_weights(order).iter().zip(z).map(|(w, s)| w * s.powi(p)).sum() };
        assert!((mom(0, 0) - 1.0).abs() < 1e-15);
        assert!(mom(0, 1).abs() < 1e-16);
        assert!((mom(1, 1) + 1.0).abs() < 1e-13);
        assert!(mom(1, 0).abs() < 1e-14);
        assert!((mom(2, 2) - 2.0).abs() < 1e-12);
        assert!((mom(3, 3) + 6.0).abs() < 1e-11);
    }

    #[test]
    fn single_pass_agrees_with_separate_convolutions() {
        let m = Mollifier::with_default_nodes(2).unwrap();
        let u = builtin_family("heat_kernel_shift", &BuiltinParams::new(2)).unwrap();
        let ps = [
            Partial::ZERO,
            Partial::from_axes(&[0, 1, 1], 0),
            Partial::from_axes(&[0], 1),
            Partial::from_axes(&[], 2),
        ];
        let many = m.at_many(&u, 0.1, &ps, &[0.1, -0.2], 0.5).unwrap();
        for (p, v) in ps.iter().zip(many) {
            let one = m.at(&u, 0.1, *p, &[0.1, -0.2], 0.5).unwrap();
            assert!((v - one).abs() <= 1e-10 * (1.0 + one.abs()), "{p}: {v} vs {one}");
        }
    }

    #[test]
    fn order_zero_weights_are_positive() {
        let m = Mollifier::with_default_nodes(2).unwrap();
        assert!(m.axis_weights(0).iter().all(|w| *w > 0.0));
    }

    #[test]
    fn affine_functions_are_fixed() {
        let m = Mollifier::with_default_nodes(1).unwrap();
        let u = builtin_family("affine", &BuiltinParams::new(1).value(0.5).slope(vec![2.0]).rate(-3.0)).unwrap();
        for tau in [0.3, 0.05] {
            let v = m.at(&u, tau, Partial::ZERO, &[0.2], 0.1).unwrap();
            assert!((v - u.value(&[0.2], 0.1)).abs() < 1e-14);
            let dx = m.at(&u, tau, Partial::dx(0), &[0.2], 0.1).unwrap();
            assert!((dx - 2.0).abs() < 1e-11, "{dx}");
            let dt = m.at(&u, tau, Partial::dt(), &[0.2], 0.1).unwrap();
            assert!((dt + 3.0).abs() < 1e-9, "{dt}");
        }
    }

    #[test]
    fn constants_have_vanishing_derivatives() {
        let m = Mollifier::with_default_nodes(2).unwrap();
        let c = builtin_family("constant", &BuiltinParams::new(2).value(3.0)).unwrap();
        for p in [
            Partial::dx(1),
            Partial::from_axes(&[0, 1], 1),
            Partial::from_axes(&[0, 0, 0], 0),
        ] {
            let v = m.at(&c, 0.1, p, &[0.0, 0.1], 0.0).unwrap();
            assert!(v.abs() < 1e-9, "{p}: {v}");
        }
    }

    #[test]
    fn rho_tau_support_and_identity() {
        let m = Mollifier::with_default_nodes(1).unwrap();
        assert_eq!(rho_tau(&m, 0.1, &[0.11], 0.0).unwrap(), 0.0);
        assert_eq!(rho_tau(&m, 0.1, &[0.0], 0.0101).unwrap(), 0.0);
        assert_eq!(rho_tau(&m, 1.0, &[0.3], -0.2).unwrap(), m.profile(&[0.3], -0.2));
        assert!(rho_tau(&m, 0.0, &[0.0], 0.0).is_err());
    }

    #[test]
    fn derivative_matches_finite_difference_of_smooth_function() {
        let m = Mollifier::with_default_nodes(1).unwrap();
        let u = AnalyticFn::from_fn(1, "smooth", |x, t| (3.0 * x[0]).sin() * (1.0 + t).exp());
        let tau = 0.1;
        let h = 1e-4;
        let (x, t) = (0.3, 0.2);
        let v = |x: f64, t: f64| m.at(&u, tau, Partial::ZERO, &[x], t).unwrap();
        let fd = (v(x + h, t) - v(x - h, t)) / (2.0 * h);
        let exact = m.at(&u, tau, Partial::dx(0), &[x], t).unwrap();
        assert!((fd - exact).abs() < 1e-6, "{fd} vs {exact}");
    }

    #[test]
    fn unsupported_orders_rejected() {
        let m = Mollifier::with_default_nodes(2).unwrap();
        let c = builtin_family("constant", &BuiltinParams::new(2)).unwrap();
        let p = Partial::from_axes(&[0, 0, 1, 1], 0);
        assert!(matches!(
            m.at(&c, 0.1, p, &[0.0, 0.0], 0.0),
            Err(Error::UnsupportedOrder(_))
        ));
        let q = Partial { x: [0; MAX_DIM], t: 3 };
        assert!(matches!(
            m.at(&c, 0.1, q, &[0.0, 0.0], 0.0),
            Err(Error::UnsupportedOrder(_))
        ));
    }

    #[test]
    fn field_output_lives_on_shrunk_domain() {
        let m = Mollifier::with_default_nodes(1).unwrap();
        let u = builtin_family("spatial_cusp", &BuiltinParams::new(1).alpha(0.5)).unwrap();
        let dom = BoxDomain::symmetric(1, 1.0, -1.0, 1.0).unwrap();
        let f = mollify(&u, &m, 0.2, &dom, 9, 5).unwrap();
        assert!((f.spec().domain.lo[0] + 0.8).abs() < 1e-15);
        assert!(f.interpolate(&[0.9], 0.0).is_err());
        assert!(matches!(
            mollify(&u, &m, 1.5, &dom, 9, 5),
            Err(Error::TauTooLarge { .. })
        ));
    }

    #[test]
    fn sampled_input_cannot_be_extrapolated() {
        let m = Mollifier::with_default_nodes(1).unwrap();
        let u = builtin_family("caloric_poly", &BuiltinParams::new(1)).unwrap();
        let dom = BoxDomain::symmetric(1, 1.0, -1.0, 1.0).unwrap();
        let spec = GridSpec::new(dom.clone(), 41, 41).unwrap();
        let field = crate::field::sample(&u, &spec).unwrap();
        assert!(m.at(&field, 0.1, Partial::ZERO, &[0.95], 0.0).is_err());
        let v = m.at(&field, 0.1, Partial::ZERO, &[0.5], 0.0).unwrap();
        // x² mollifies to x² + τ²·μ₂, and linear interpolation adds h²/4-ish
        assert!((v - 0.25).abs() < 5e-3);
    }
}
