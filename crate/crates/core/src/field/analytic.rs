use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_dim, Cylinder, SpaceTimePoint, MAX_DIM};
use crate::error::{Error, Result};

/// Largest total spatial order of a derivative an [`AnalyticFn`] may expose.
pub const MAX_SPATIAL_ORDER: u8 = 3;
/// Largest temporal order of a derivative an [`AnalyticFn`] may expose.
pub const MAX_TIME_ORDER: u8 = 2;

/// A mixed partial `∂_x^a ∂_t^j`, one spatial order per axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partial {
    pub x: [u8; MAX_DIM],
    pub t: u8,
}

impl Partial {
    pub const ZERO: Partial = Partial { x: [0; MAX_DIM], t: 0 };

    pub fn dx(axis: usize) -> Self {
        let mut p = Self::ZERO;
        p.x[axis] = 1;
        p
    }

    pub fn dt() -> Self {
        Partial { x: [0; MAX_DIM], t: 1 }
    }

    /// Builds a partial from a list of spatial axes (repeats allowed) and a
    /// time order.
    pub fn from_axes(axes: &[usize], t: u8) -> Self {
        let mut p = Partial { x: [0; MAX_DIM], t };
        for &a in axes {
            p.x[a] += 1;
        }
        p
    }

    pub fn spatial_order(&self) -> u8 {
        self.x.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    pub fn plus(&self, other: &Partial) -> Partial {
        let mut p = *self;
        for k in 0..MAX_DIM {
            p.x[k] += other.x[k];
        }
        p.t += other.t;
        p
    }

    /// Parabolic weight `|a| + 2j`.
    pub fn weight(&self) -> i32 {
        self.spatial_order() as i32 + 2 * self.t as i32
    }

    pub fn within_limits(&self) -> bool {
        self.spatial_order() <= MAX_SPATIAL_ORDER && self.t <= MAX_TIME_ORDER
    }

    /// Every partial `q ≤ self` componentwise, together with the product
    /// of binomial coefficients `C(self, q)`.
    pub fn sub_partials(&self) -> Vec<(Partial, f64)> {
        let mut out = vec![(Partial::ZERO, 1.0)];
        let extend = |out: &mut Vec<(Partial, f64)>, n: u8, set: &dyn Fn(&mut Partial, u8)| {
            let mut next = Vec::with_capacity(out.len() * (n as usize + 1));
            for (q, c) in out.iter() {
                for k in 0..=n {
                    let mut q2 = *q;
                    set(&mut q2, k);
                    next.push((q2, c * binomial(n, k)));
                }
            }
            *out = next;
        };
        for axis in 0..MAX_DIM {
            extend(&mut out, self.x[axis], &move |q, k| q.x[axis] = k);
        }
        extend(&mut out, self.t, &|q, k| q.t = k);
        out
    }

    /// All partials of a `dim`-dimensional function within the global limits.
    pub fn all(dim: usize) -> Vec<Partial> {
        let mut out = Vec::new();
        for t in 0..=MAX_TIME_ORDER {
            for code in 0..(4usize.pow(dim as u32)) {
                let mut p = Partial { x: [0; MAX_DIM], t };
                let mut c = code;
                for k in 0..dim {
                    p.x[k] = (c % 4) as u8;
                    c /= 4;
                }
                if p.within_limits() {
                    out.push(p);
                }
            }
        }
        out
    }
}

impl fmt::Display for Partial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "id");
        }
        for (k, &n) in self.x.iter().enumerate() {
            if n > 0 {
                write!(f, "d_x{k}^{n}")?;
            }
        }
        if self.t > 0 {
            write!(f, "d_t^{}", self.t)?;
        }
        Ok(())
    }
}

pub(crate) fn binomial(n: u8, k: u8) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// A pointwise-defined space-time function with optional exact partials.
pub trait SpaceTimeFn: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64], t: f64) -> f64;
    /// `None` when no exact evaluator exists for `p`.
    fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64>;
    /// Whether `partial(p, ..)` is available at all.
    fn has_partial(&self, p: Partial) -> bool;
}

/// Where an [`AnalyticFn`] may be non-zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Global,
    CompactIn(Cylinder),
}

/// A shareable analytic function. Cloning is cheap.
#[derive(Clone)]
pub struct AnalyticFn {
    inner: Arc<dyn SpaceTimeFn>,
    support: Support,
    focus: Option<SpaceTimePoint>,
    label: String,
}

impl fmt::Debug for AnalyticFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticFn")
            .field("label", &self.label)
            .field("dim", &self.dim())
            .field("support", &self.support)
            .finish()
    }
}

impl AnalyticFn {
    pub fn new(inner: Arc<dyn SpaceTimeFn>, label: impl Into<String>) -> Self {
        Self {
            inner,
            support: Support::Global,
            focus: None,
            label: label.into(),
        }
    }

    /// Value-only function from a closure; no exact derivatives except the
    /// identity.
    pub fn from_fn<F>(dim: usize, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(Arc::new(Closure { dim, f: Box::new(f) }), label)
    }

    pub fn with_support(mut self, support: Support) -> Self {
        self.support = support;
        self
    }

    /// Records the point where the function is least regular. Sup scans
    /// refine around it.
    pub fn with_focus(mut self, focus: Option<SpaceTimePoint>) -> Self {
        self.focus = focus;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn focus(&self) -> Option<&SpaceTimePoint> {
        self.focus.as_ref()
    }

    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        self.inner.value(x, t)
    }

    pub fn at(&self, p: &SpaceTimePoint) -> f64 {
        self.value(&p.x, p.t)
    }

    pub fn has_partial(&self, p: Partial) -> bool {
        p.is_zero() || (p.within_limits() && self.inner.has_partial(p))
    }

    pub fn partial(&self, p: Partial, x: &[f64], t: f64) -> Result<f64> {
        if p.is_zero() {
            return Ok(self.value(x, t));
        }
        if !self.has_partial(p) {
            return Err(Error::MissingDerivative(format!("{p} of `{}`", self.label)));
        }
        self.inner
            .partial(p, x, t)
            .ok_or_else(|| Error::MissingDerivative(format!("{p} of `{}`", self.label)))
    }

    /// The partial `∂^p self` as a function in its own right, keeping the
    /// remaining exact derivatives.
    pub fn derivative(&self, p: Partial) -> Result<AnalyticFn> {
        if !self.has_partial(p) {
            return Err(Error::MissingDerivative(format!("{p} of `{}`", self.label)));
        }
        if p.is_zero() {
            return Ok(self.clone());
        }
        Ok(AnalyticFn {
            inner: Arc::new(Derived {
                base: self.inner.clone(),
                p,
            }),
            support: self.support.clone(),
            focus: self.focus.clone(),
            label: format!("{p} {}", self.label),
        })
    }

    /// `c · self`.
    pub fn scaled(&self, c: f64) -> AnalyticFn {
        AnalyticFn {
            inner: Arc::new(Scaled {
                base: self.inner.clone(),
                c,
            }),
            support: self.support.clone(),
            focus: self.focus.clone(),
            label: format!("{c}*{}", self.label),
        }
    }

    /// Pointwise sum; support and focus come from the first summand.
    pub fn sum(parts: &[AnalyticFn]) -> Result<AnalyticFn> {
        let first = parts.first().ok_or_else(|| Error::InvalidParameter {
            name: "parts",
            reason: "sum of no functions".into(),
        })?;
        same_dim(parts)?;
        let label = parts.iter().map(|p| p.label.as_str()).collect::<Vec<_>>().join(" + ");
        let focus = parts.iter().find_map(|p| p.focus.clone());
        Ok(AnalyticFn {
            inner: Arc::new(Sum {
                parts: parts.iter().map(|p| p.inner.clone()).collect(),
            }),
            support: first.support.clone(),
            focus,
            label,
        })
    }

    /// Pointwise product with Leibniz-rule derivatives.
    pub fn product(&self, other: &AnalyticFn) -> Result<AnalyticFn> {
        same_dim(&[self.clone(), other.clone()])?;
        let support = match (&self.support, &other.support) {
            (s @ Support::CompactIn(_), _) => s.clone(),
            (_, s) => s.clone(),
        };
        Ok(AnalyticFn {
            inner: Arc::new(Product {
                a: self.inner.clone(),
                b: other.inner.clone(),
            }),
            support,
            focus: self.focus.clone().or_else(|| other.focus.clone()),
            label: format!("({})*({})", self.label, other.label),
        })
    }

    /// `x' ↦ self(M x', t)` for a `dim × dim` row-major matrix `M`.
    pub fn linear_pullback(&self, m: &[f64]) -> Result<AnalyticFn> {
        let d = self.dim();
        if m.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: m.len(),
            });
        }
        Ok(AnalyticFn {
            inner: Arc::new(Pullback {
                base: self.inner.clone(),
                m: m.to_vec(),
            }),
            support: Support::Global,
            focus: None,
            label: format!("pullback {}", self.label),
        })
    }

    /// `(x, t) ↦ self(λx, λ²t)`.
    pub fn rescaled(&self, lambda: f64) -> AnalyticFn {
        let focus = self.focus.as_ref().map(|f| SpaceTimePoint {
            x: f.x.iter().map(|v| v / lambda).collect(),
            t: f.t / (lambda * lambda),
        });
        AnalyticFn {
            inner: Arc::new(Rescaled {
                base: self.inner.clone(),
                lambda,
            }),
            support: Support::Global,
            focus,
            label: format!("rescaled({lambda}) {}", self.label),
        }
    }
}

fn same_dim(parts: &[AnalyticFn]) -> Result<()> {
    let d = parts[0].dim();
    check_dim(d)?;
    for p in parts {
        if p.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.dim(),
            });
        }
    }
    Ok(())
}

struct Closure {
    dim: usize,
    f: Box<dyn Fn(&[f64], f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for Closure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Closure(dim = {})", self.dim)
    }
}

impl SpaceTimeFn for Closure {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64], t: f64) -> f64 {
        (self.f)(x, t)
    }
    fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64> {
        p.is_zero().then(|| self.value(x, t))
    }
    fn has_partial(&self, p: Partial) -> bool {
        p.is_zero()
    }
}

#[derive(Debug)]
struct Derived {
    base: Arc<dyn SpaceTimeFn>,
    p: Partial,
}

impl SpaceTimeFn for Derived {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.base.partial(self.p, x, t).unwrap_or(f64::NAN)
    }
    fn partial(&self, q: Partial, x: &[f64], t: f64) -> Option<f64> {
        let pq = self.p.plus(&q);
        if pq.within_limits() {
            self.base.partial(pq, x, t)
        } else {
            None
        }
    }
    fn has_partial(&self, q: Partial) -> bool {
        let pq = self.p.plus(&q);
        pq.within_limits() && self.base.has_partial(pq)
    }
}

#[derive(Debug)]
struct Scaled {
    base: Arc<dyn SpaceTimeFn>,
    c: f64,
}

impl SpaceTimeFn for Scaled {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.c * self.base.value(x, t)
    }
    fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64> {
        self.base.partial(p, x, t).map(|v| self.c * v)
    }
    fn has_partial(&self, p: Partial) -> bool {
        self.base.has_partial(p)
    }
}

#[derive(Debug)]
struct Sum {
    parts: Vec<Arc<dyn SpaceTimeFn>>,
}

impl SpaceTimeFn for Sum {
    fn dim(&self) -> usize {
        self.parts[0].dim()
    }
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.parts.iter().map(|p| p.value(x, t)).sum()
    }
    fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64> {
        self.parts.iter().map(|f| f.partial(p, x, t)).sum()
    }
    fn has_partial(&self, p: Partial) -> bool {
        self.parts.iter().all(|f| f.has_partial(p))
    }
}

#[derive(Debug)]
struct Product {
    a: Arc<dyn SpaceTimeFn>,
    b: Arc<dyn SpaceTimeFn>,
}

impl SpaceTimeFn for Product {
    fn dim(&self) -> usize {
        self.a.dim()
    }
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.a.value(x, t) * self.b.value(x, t)
    }
    fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64> {
        let mut acc = 0.0;
        for (q, c) in p.sub_partials() {
            let rest = Partial {
                x: std::array::from_fn(|k| p.x[k] - q.x[k]),
                t: p.t - q.t,
            };
            acc += c * self.a.partial(q, x, t)? * self.b.partial(rest, x, t)?;
        }
        Some(acc)
    }
    fn has_partial(&self, p: Partial) -> bool {
        p.sub_partials()
            .iter()
            .all(|(q, _)| self.a.has_partial(*q) && self.b.has_partial(*q))
    }
}

#[derive(Debug)]
struct Pullback {
    base: Arc<dyn SpaceTimeFn>,
    m: Vec<f64>,
}

impl Pullback {
    fn image(&self, x: &[f64]) -> [f64; MAX_DIM] {
        let d = x.len();
        let mut y = [0.0; MAX_DIM];
        for (i, yi) in y.iter_mut().enumerate().take(d) {
            *yi = (0..d).map(|j| self.m[i * d + j] * x[j]).sum();
        }
        y
    }
}

impl SpaceTimeFn for Pullback {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, x: &[f64], t: f64) -> f64 {
        let y = self.image(x);
        self.base.value(&y[..x.len()], t)
    }
    fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64> {
        // ∂_{x'_i} = Σ_j M_{ji} ∂_{y_j}; expand the product over the axes of p
        let d = x.len();
        let y = self.image(x);
        let axes: Vec<usize> = (0..d)
            .flat_map(|i| std::iter::repeat(i).take(p.x[i] as usize))
            .collect();
        let k = axes.len();
        let mut acc = 0.0;
        for code in 0..d.pow(k as u32) {
            let mut c = code;
            let mut coef = 1.0;
            let mut target = Vec::with_capacity(k);
            for &i in &axes {
                let j = c % d;
                c /= d;
                coef *= self.m[j * d + i];
                target.push(j);
            }
            if coef != 0.0 {
                acc += coef * self.base.partial(Partial::from_axes(&target, p.t), &y[..d], t)?;
            }
        }
        Some(acc)
    }
    fn has_partial(&self, p: Partial) -> bool {
        let k = p.spatial_order() as usize;
        let d = self.base.dim();
        // every redistribution of the spatial order over the axes is needed
        (0..d.pow(k as u32)).all(|code| {
            let mut c = code;
            let axes: Vec<usize> = (0..k)
                .map(|_| {
                    let j = c % d;
                    c /= d;
                    j
                })
                .collect();
            self.base.has_partial(Partial::from_axes(&axes, p.t))
        })
    }
}

#[derive(Debug)]
struct Rescaled {
    base: Arc<dyn SpaceTimeFn>,
    lambda: f64,
}

impl SpaceTimeFn for Rescaled {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, x: &[f64], t: f64) -> f64 {
        let mut y = [0.0; MAX_DIM];
        for (k, v) in x.iter().enumerate() {
            y[k] = self.lambda * v;
        }
        self.base.value(&y[..x.len()], self.lambda * self.lambda * t)
    }
    fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64> {
        let mut y = [0.0; MAX_DIM];
        for (k, v) in x.iter().enumerate() {
            y[k] = self.lambda * v;
        }
        let v = self.base.partial(p, &y[..x.len()], self.lambda * self.lambda * t)?;
        Some(v * self.lambda.powi(p.weight()))
    }
    fn has_partial(&self, p: Partial) -> bool {
        self.base.has_partial(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Poly;

    // u = x0^2 x1 + t x0, all partials exact
    impl SpaceTimeFn for Poly {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64], t: f64) -> f64 {
            x[0] * x[0] * x[1] + t * x[0]
        }
        fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64> {
            let v = match (p.x[0], p.x[1], p.t) {
                (0, 0, 0) => self.value(x, t),
                (1, 0, 0) => 2.0 * x[0] * x[1] + t,
                (0, 1, 0) => x[0] * x[0],
                (2, 0, 0) => 2.0 * x[1],
                (1, 1, 0) => 2.0 * x[0],
                (2, 1, 0) => 2.0,
                (0, 0, 1) => x[0],
                (1, 0, 1) => 1.0,
                _ => 0.0,
            };
            Some(v)
        }
        fn has_partial(&self, _: Partial) -> bool {
            true
        }
    }

    fn poly() -> AnalyticFn {
        AnalyticFn::new(Arc::new(Poly), "poly")
    }

    fn fd(f: &AnalyticFn, axis: Option<usize>, x: &[f64], t: f64, h: f64) -> f64 {
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        let (mut tp, mut tm) = (t, t);
        match axis {
            Some(a) => {
                xp[a] += h;
                xm[a] -= h;
            }
            None => {
                tp += h;
                tm -= h;
            }
        }
        (f.value(&xp, tp) - f.value(&xm, tm)) / (2.0 * h)
    }

    #[test]
    fn sub_partials_counts_and_weights() {
        let p = Partial::from_axes(&[0, 0, 1], 1);
        let subs = p.sub_partials();
        assert_eq!(subs.len(), 3 * 2 * 2);
        let total: f64 = subs.iter().map(|(_, c)| c).sum();
        assert_eq!(total, 2f64.powi(4));
    }

    #[test]
    fn all_partials_respects_limits() {
        assert_eq!(Partial::all(1).len(), 4 * 3);
        assert_eq!(Partial::all(2).len(), 10 * 3);
        assert!(Partial::all(3).iter().all(Partial::within_limits));
    }

    #[test]
    fn product_rule_matches_finite_differences() {
        let u = poly();
        let w = u.product(&u).unwrap();
        let x = [0.3, -0.7];
        let t = 0.4;
        let exact = w.partial(Partial::dx(0), &x, t).unwrap();
        assert!((exact - fd(&w, Some(0), &x, t, 1e-5)).abs() < 1e-8);
        let exact_t = w.partial(Partial::dt(), &x, t).unwrap();
        assert!((exact_t - fd(&w, None, &x, t, 1e-5)).abs() < 1e-8);
        let mixed = w.partial(Partial::from_axes(&[0, 1], 0), &x, t).unwrap();
        let dx1 = w.derivative(Partial::dx(0)).unwrap();
        assert!((mixed - fd(&dx1, Some(1), &x, t, 1e-5)).abs() < 1e-7);
    }

    #[test]
    fn pullback_chain_rule() {
        let u = poly();
        let m = [2.0, 1.0, -0.5, 3.0];
        let v = u.linear_pullback(&m).unwrap();
        let x = [0.2, 0.1];
        let t = -0.3;
        let cases = [
            (Partial::dx(0), None, 0),
            (Partial::dx(1), None, 1),
            (Partial::from_axes(&[0, 1], 0), Some(0), 1),
            (Partial::from_axes(&[1, 1], 0), Some(1), 1),
        ];
        for (p, first, axis) in cases {
            let exact = v.partial(p, &x, t).unwrap();
            let lower = match first {
                Some(a) => v.derivative(Partial::dx(a)).unwrap(),
                None => v.clone(),
            };
            let approx = fd(&lower, Some(axis), &x, t, 1e-5);
            assert!((exact - approx).abs() < 1e-7, "{p}: {exact} vs {approx}");
        }
    }

    #[test]
    fn rescaling_multiplies_by_parabolic_weight() {
        let u = poly();
        let v = u.rescaled(0.5);
        let x = [0.4, 0.8];
        let p = Partial::from_axes(&[0], 1);
        let expect = u.partial(p, &[0.2, 0.4], 0.25 * 0.6).unwrap() * 0.5f64.powi(3);
        assert_eq!(v.partial(p, &x, 0.6).unwrap(), expect);
    }

    #[test]
    fn missing_derivative_is_an_error() {
        let f = AnalyticFn::from_fn(1, "plain", |x, _| x[0]);
        assert!(matches!(
            f.partial(Partial::dx(0), &[0.0], 0.0),
            Err(Error::MissingDerivative(_))
        ));
        assert_eq!(f.partial(Partial::ZERO, &[2.0], 0.0).unwrap(), 2.0);
    }
}
