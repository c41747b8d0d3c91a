//! The one-dimensional bump `ψ(s) = exp(−1/(1−s²))` on `(−1, 1)` and its
//! exact derivatives, shared by the mollifier profile and `compact_bump`.

use std::sync::Arc;

use super::analytic::{AnalyticFn, Partial, SpaceTimeFn, Support};
use super::{Cylinder, SpaceTimePoint, MAX_DIM};
use crate::error::Result;

/// Highest derivative order [`psi_derivatives`] produces.
pub const MAX_ORDER: usize = 5;

/// `ψ(0) = e^{-1}`.
pub const PSI_PEAK: f64 = 0.36787944117144233;

/// `[ψ(s), ψ'(s), …, ψ^{(MAX_ORDER)}(s)]`, all zero for `|s| ≥ 1`.
///
/// With `q(s) = −1/(1−s²)` we have `ψ' = q'ψ`, hence
/// `ψ^{(n+1)} = Σ_k C(n,k) q^{(k+1)} ψ^{(n−k)}`, and the derivatives of
/// `q = −½[1/(1−s) + 1/(1+s)]` are explicit.
pub fn psi_derivatives(s: f64) -> [f64; MAX_ORDER + 1] {
    let mut out = [0.0; MAX_ORDER + 1];
    if !(s.abs() < 1.0) {
        return out;
    }
    let a = 1.0 / (1.0 - s);
    let b = 1.0 / (1.0 + s);
    // dq[k] = q^{(k)}
    let mut dq = [0.0; MAX_ORDER + 1];
    let mut fact = 1.0;
    let (mut ap, mut bp) = (a, b);
    for (k, slot) in dq.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        *slot = -0.5 * fact * (ap + sign * bp);
        ap *= a;
        bp *= b;
    }
    out[0] = (dq[0]).exp();
    for n in 0..MAX_ORDER {
        let mut acc = 0.0;
        let mut c = 1.0;
        for k in 0..=n {
            acc += c * dq[k + 1] * out[n - k];
            c = c * (n - k) as f64 / (k + 1) as f64;
        }
        out[n + 1] = acc;
    }
    out
}

/// `ψ(s)` alone.
pub fn psi(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// Tensor bump with peak value 1 at the center of a closed box, vanishing
/// with all derivatives on the box boundary.
#[derive(Debug, Clone)]
pub(crate) struct TensorBump {
    pub center: Vec<f64>,
    pub half_width: f64,
    pub t_center: f64,
    pub t_half_width: f64,
}

impl TensorBump {
    fn factors(&self, x: &[f64], t: f64) -> ([[f64; MAX_ORDER + 1]; MAX_DIM], [f64; MAX_ORDER + 1]) {
        let mut fx = [[0.0; MAX_ORDER + 1]; MAX_DIM];
        for (k, xv) in x.iter().enumerate() {
            fx[k] = psi_derivatives((xv - self.center[k]) / self.half_width);
        }
        (fx, psi_derivatives((t - self.t_center) / self.t_half_width))
    }
}

impl SpaceTimeFn for TensorBump {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        let mut v = psi((t - self.t_center) / self.t_half_width) / PSI_PEAK;
        for (k, xv) in x.iter().enumerate() {
            if v == 0.0 {
                break;
            }
            v *= psi((xv - self.center[k]) / self.half_width) / PSI_PEAK;
        }
        v
    }

    fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64> {
        let (fx, ft) = self.factors(x, t);
        let mut v = ft[p.t as usize] / (PSI_PEAK * self.t_half_width.powi(p.t as i32));
        for k in 0..x.len() {
            let n = p.x[k] as usize;
            v *= fx[k][n] / (PSI_PEAK * self.half_width.powi(n as i32));
        }
        Some(v)
    }

    fn has_partial(&self, p: Partial) -> bool {
        p.x.iter().all(|&n| n as usize <= MAX_ORDER) && p.t as usize <= MAX_ORDER
    }
}

/// Smooth bump supported in the closed cube inscribed in the cylinder's
/// ball, times the cylinder's closed time interval; peak value 1.
pub fn compact_bump(cyl: &Cylinder) -> Result<AnalyticFn> {
    let d = cyl.dim();
    super::check_dim(d)?;
    let r = cyl.radius;
    let bump = TensorBump {
        center: cyl.center.x.clone(),
        half_width: r / (d as f64).sqrt(),
        t_center: cyl.center.t - 0.5 * r * r,
        t_half_width: 0.5 * r * r,
    };
    let focus = SpaceTimePoint {
        x: cyl.center.x.clone(),
        t: bump.t_center,
    };
    Ok(AnalyticFn::new(Arc::new(bump), "compact_bump")
        .with_support(Support::CompactIn(cyl.clone()))
        .with_focus(Some(focus)))
}
