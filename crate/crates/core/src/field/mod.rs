//! Space-time points, parabolic cylinders, tensor grids and the function
//! representations (sampled [`Field`]s and [`AnalyticFn`]s) every other
//! module works with.

mod analytic;
mod builtin;
pub mod bump;
mod io;
mod terms;

pub use analytic::{AnalyticFn, Partial, SpaceTimeFn, Support, MAX_SPATIAL_ORDER, MAX_TIME_ORDER};
pub use builtin::{builtin_family, Builtin, BuiltinParams};
pub use io::{read_field, write_field, FieldSidecar};
pub use terms::{Orientation, Term, TermFn, TermKind};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest spatial dimension the crate accepts.
pub const MAX_DIM: usize = 3;

pub(crate) fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        Err(Error::UnsupportedDimension(d))
    } else {
        Ok(())
    }
}

/// A point `X = (x, t)` in space-time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub x: Vec<f64>,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: Vec<f64>, t: f64) -> Result<Self> {
        check_dim(x.len())?;
        if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("point", "coordinates must be finite"));
        }
        Ok(Self { x, t })
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            x: vec![0.0; dim],
            t: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

impl fmt::Display for SpaceTimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(x = [")?;
        for (k, v) in self.x.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "], t = {})", self.t)
    }
}

/// Backward parabolic cylinder `B_R(center.x) × (center.t − R², center.t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: SpaceTimePoint,
    pub radius: f64,
}

impl Cylinder {
    pub fn new(center: SpaceTimePoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("radius", format!("must be positive and finite, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// The unit cylinder `Q_1` with its top center at the origin.
    pub fn unit(dim: usize) -> Self {
        Self {
            center: SpaceTimePoint::origin(dim),
            radius: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    fn dist2(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center.x).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Membership in the open cylinder.
    pub fn contains(&self, x: &[f64], t: f64) -> bool {
        let r = self.radius;
        x.len() == self.dim() && self.dist2(x).sqrt() < r && self.center.t - r * r < t && t < self.center.t
    }

    /// Membership in the closure of the cylinder. Scans over grids use the
    /// closure: suprema of continuous functions agree on both sets.
    pub fn contains_closed(&self, x: &[f64], t: f64) -> bool {
        let r = self.radius;
        x.len() == self.dim() && self.dist2(x).sqrt() <= r && self.center.t - r * r <= t && t <= self.center.t
    }

    pub fn contains_point(&self, p: &SpaceTimePoint) -> bool {
        self.contains(&p.x, p.t)
    }

    pub fn bounding_box(&self) -> BoxDomain {
        let r = self.radius;
        BoxDomain {
            lo: self.center.x.iter().map(|c| c - r).collect(),
            hi: self.center.x.iter().map(|c| c + r).collect(),
            t_lo: self.center.t - r * r,
            t_hi: self.center.t,
        }
    }
}

/// Closed axis-aligned space-time box `Π[lo_k, hi_k] × [t_lo, t_hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, t_lo: f64, t_hi: f64) -> Result<Self> {
        check_dim(lo.len())?;
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        let ok = lo.iter().zip(&hi).all(|(a, b)| a.is_finite() && b.is_finite() && a < b)
            && t_lo.is_finite()
            && t_hi.is_finite()
            && t_lo < t_hi;
        if !ok {
            return Err(invalid("box", "bounds must be finite with lo < hi on every axis"));
        }
        Ok(Self { lo, hi, t_lo, t_hi })
    }

    /// `[-h, h]^d × [t_lo, t_hi]`.
    pub fn symmetric(dim: usize, half_width: f64, t_lo: f64, t_hi: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim], t_lo, t_hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64], t: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *a <= *v && *v <= *b)
            && self.t_lo <= t
            && t <= self.t_hi
    }

    /// Parabolic distance from the interior point to the box boundary.
    pub fn parabolic_margin(&self, x: &[f64], t: f64) -> f64 {
        let spatial = x
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (a, b))| (v - a).min(b - v))
            .fold(f64::INFINITY, f64::min);
        let temporal = (t - self.t_lo).min(self.t_hi - t).max(0.0).sqrt();
        spatial.min(temporal)
    }

    /// Largest `tau` for which the shrunk domain is non-empty.
    pub fn max_tau(&self) -> f64 {
        let spatial = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (b - a))
            .fold(f64::INFINITY, f64::min);
        spatial.min((0.5 * (self.t_hi - self.t_lo)).sqrt())
    }

    /// Closure of `U_τ = {X : d(X, ∂U) > τ}`: every axis shrinks by `τ`,
    /// time by `τ²`.
    pub fn shrink(&self, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(invalid("tau", format!("must be positive, got {tau}")));
        }
        let margin = self.max_tau();
        if tau >= margin {
            return Err(Error::TauTooLarge { tau, margin });
        }
        Ok(Self {
            lo: self.lo.iter().map(|v| v + tau).collect(),
            hi: self.hi.iter().map(|v| v - tau).collect(),
            t_lo: self.t_lo + tau * tau,
            t_hi: self.t_hi - tau * tau,
        })
    }
}

/// Uniform tensor grid with `nx` nodes per spatial axis and `nt` in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub nt: usize,
    pub domain: BoxDomain,
}

#[inline]
fn lerp(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    // convex combination keeps both endpoints and the midpoint exact
    let s = i as f64 / (n - 1) as f64;
    lo * (1.0 - s) + hi * s
}

impl GridSpec {
    pub fn new(domain: BoxDomain, nx: usize, nt: usize) -> Result<Self> {
        if nx < 2 || nt < 2 {
            return Err(invalid(
                "grid",
                format!("need nx >= 2 and nt >= 2, got nx = {nx}, nt = {nt}"),
            ));
        }
        Ok(Self { nx, nt, domain })
    }

    pub fn over_cylinder(cyl: &Cylinder, nx: usize, nt: usize) -> Result<Self> {
        Self::new(cyl.bounding_box(), nx, nt)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn hx(&self, axis: usize) -> f64 {
        (self.domain.hi[axis] - self.domain.lo[axis]) / (self.nx - 1) as f64
    }

    pub fn ht(&self) -> f64 {
        (self.domain.t_hi - self.domain.t_lo) / (self.nt - 1) as f64
    }

    pub fn spatial_count(&self) -> usize {
        self.nx.pow(self.dim() as u32)
    }

    pub fn node_count(&self) -> usize {
        self.spatial_count() * self.nt
    }

    /// Multi-index `[i_0, .., i_{d-1}, i_t]` of a flat node index. Axis 0
    /// varies fastest, time slowest.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let d = self.dim();
        let mut idx = Vec::with_capacity(d + 1);
        for _ in 0..d {
            idx.push(flat % self.nx);
            flat /= self.nx;
        }
        idx.push(flat);
        idx
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let d = self.dim();
        let mut flat = multi[d];
        for k in (0..d).rev() {
            flat = flat * self.nx + multi[k];
        }
        flat
    }

    pub fn x_coord(&self, axis: usize, i: usize) -> f64 {
        lerp(self.domain.lo[axis], self.domain.hi[axis], i, self.nx)
    }

    pub fn t_coord(&self, i: usize) -> f64 {
        lerp(self.domain.t_lo, self.domain.t_hi, i, self.nt)
    }

    /// Writes the spatial coordinates of node `flat` into `x` and returns `t`.
    pub fn node_into(&self, flat: usize, x: &mut [f64]) -> f64 {
        let mut rest = flat;
        for (axis, xv) in x.iter_mut().enumerate().take(self.dim()) {
            *xv = self.x_coord(axis, rest % self.nx);
            rest /= self.nx;
        }
        self.t_coord(rest)
    }

    pub fn node(&self, flat: usize) -> SpaceTimePoint {
        let mut x = vec![0.0; self.dim()];
        let t = self.node_into(flat, &mut x);
        SpaceTimePoint { x, t }
    }
}

/// How a field's values came to be.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SampledFromAnalytic,
    Computed,
}

/// Function samples on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field {
    spec: GridSpec,
    values: Vec<f64>,
    provenance: Option<Provenance>,
}

impl Field {
    pub fn new(spec: GridSpec, values: Vec<f64>, provenance: Option<Provenance>) -> Result<Self> {
        if values.len() != spec.node_count() {
            return Err(invalid(
                "values",
                format!("expected {} values, got {}", spec.node_count(), values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: spec.multi_index(i),
                point: spec.node(i).to_string(),
                value: values[i],
            });
        }
        Ok(Self {
            spec,
            values,
            provenance,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> Option<Provenance> {
        self.provenance
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Multilinear interpolation; exact at grid nodes.
    pub fn evaluate(&self, p: &SpaceTimePoint) -> Result<f64> {
        self.interpolate(&p.x, p.t)
    }

    pub fn interpolate(&self, x: &[f64], t: f64) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        if !self.spec.domain.contains(x, t) {
            return Err(Error::OutOfDomain(SpaceTimePoint { x: x.to_vec(), t }.to_string()));
        }
        let mut base = [0usize; MAX_DIM + 1];
        let mut frac = [0.0f64; MAX_DIM + 1];
        // snap to a node when the query hits its coordinate exactly, so
        // interpolation reproduces stored values bit for bit
        let locate = |v: f64, lo: f64, h: f64, n: usize, node: &dyn Fn(usize) -> f64| -> (usize, f64) {
            let s = (v - lo) / h;
            let near = (s.round().max(0.0) as usize).min(n - 1);
            if node(near) == v {
                return if near == n - 1 { (n - 2, 1.0) } else { (near, 0.0) };
            }
            let i = (s.floor().max(0.0) as usize).min(n - 2);
            (i, (s - i as f64).clamp(0.0, 1.0))
        };
        for k in 0..d {
            let (i, f) = locate(x[k], self.spec.domain.lo[k], self.spec.hx(k), self.spec.nx, &|i| {
                self.spec.x_coord(k, i)
            });
            base[k] = i;
            frac[k] = f;
        }
        let (i, f) = locate(t, self.spec.domain.t_lo, self.spec.ht(), self.spec.nt, &|i| {
            self.spec.t_coord(i)
        });
        base[d] = i;
        frac[d] = f;

        let mut acc = 0.0;
        let mut idx = [0usize; MAX_DIM + 1];
        for corner in 0..(1usize << (d + 1)) {
            let mut w = 1.0;
            for k in 0..=d {
                let bit = (corner >> k) & 1;
                idx[k] = base[k] + bit;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                acc += w * self.values[self.spec.flat_index(&idx[..=d])];
            }
        }
        Ok(acc)
    }
}

/// Anything that can be evaluated pointwise in space-time.
pub trait Evaluable: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], t: f64) -> Result<f64>;
}

impl Evaluable for Field {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn eval(&self, x: &[f64], t: f64) -> Result<f64> {
        self.interpolate(x, t)
    }
}

impl Evaluable for AnalyticFn {
    fn dim(&self) -> usize {
        AnalyticFn::dim(self)
    }

    fn eval(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(self.value(x, t))
    }
}

/// Samples `f` at every node of `spec`.
pub fn sample(f: &AnalyticFn, spec: &GridSpec) -> Result<Field> {
    if f.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: f.dim(),
        });
    }
    let d = spec.dim();
    let mut x = vec![0.0; d];
    let mut values = Vec::with_capacity(spec.node_count());
    for i in 0..spec.node_count() {
        let t = spec.node_into(i, &mut x);
        let v = f.value(&x, t);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                index: spec.multi_index(i),
                point: spec.node(i).to_string(),
                value: v,
            });
        }
        values.push(v);
    }
    Field::new(spec.clone(), values, Some(Provenance::SampledFromAnalytic))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_grid(nx: usize) -> GridSpec {
        GridSpec::new(BoxDomain::symmetric(1, 1.0, 0.0, 1.0).unwrap(), nx, 2).unwrap()
    }

    #[test]
    fn sample_constant_and_identity() {
        let spec = line_grid(3);
        let one = builtin_family("constant", &BuiltinParams::new(1)).unwrap();
        assert!(sample(&one, &spec).unwrap().values().iter().all(|v| *v == 1.0));

        let id = AnalyticFn::from_fn(1, "x", |x, _| x[0]);
        let f = sample(&id, &spec).unwrap();
        assert_eq!(&f.values()[..3], &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn sample_spatial_cusp_matches_direct_evaluation() {
        let spec = line_grid(5);
        let cusp = builtin_family("spatial_cusp", &BuiltinParams::new(1).alpha(0.5)).unwrap();
        let f = sample(&cusp, &spec).unwrap();
        let expect = [1.0, 0.5f64.sqrt(), 0.0, 0.5f64.sqrt(), 1.0];
        for (a, b) in f.values()[..5].iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn sample_reports_non_finite_node() {
        let spec = line_grid(3);
        let bad = AnalyticFn::from_fn(1, "1/x", |x, _| 1.0 / x[0]);
        match sample(&bad, &spec) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, vec![1, 0]),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn interpolation_exact_at_nodes_and_linear_between() {
        let spec = GridSpec::new(BoxDomain::symmetric(2, 1.0, -1.0, 0.0).unwrap(), 5, 4).unwrap();
        let f = AnalyticFn::from_fn(2, "affine", |x, t| 2.0 * x[0] - x[1] + 3.0 * t);
        let field = sample(&f, &spec).unwrap();
        for i in 0..spec.node_count() {
            assert_eq!(field.evaluate(&spec.node(i)).unwrap(), field.values()[i]);
        }
        let p = SpaceTimePoint::new(vec![0.1, -0.3], -0.7).unwrap();
        let exact = 2.0 * 0.1 + 0.3 - 2.1;
        assert!((field.evaluate(&p).unwrap() - exact).abs() < 1e-14);
        let out = SpaceTimePoint::new(vec![1.5, 0.0], -0.5).unwrap();
        assert!(matches!(field.evaluate(&out), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn midpoint_of_linear_samples_is_mean() {
        let spec = line_grid(3);
        let f = sample(&AnalyticFn::from_fn(1, "x", |x, _| x[0]), &spec).unwrap();
        let v = f.interpolate(&[0.5], 0.0).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn interpolation_error_is_second_order() {
        let g = AnalyticFn::from_fn(1, "smooth", |x, t| (2.0 * x[0]).sin() * (1.0 + t * t));
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for n in [11, 21, 41, 81] {
            let spec = GridSpec::new(BoxDomain::symmetric(1, 1.0, 0.0, 1.0).unwrap(), n, n).unwrap();
            let field = sample(&g, &spec).unwrap();
            let mut err: f64 = 0.0;
            for k in 0..97 {
                let x = -0.99 + 1.98 * k as f64 / 96.0;
                let t = 0.013 + 0.97 * ((k * 37) % 97) as f64 / 97.0;
                err = err.max((field.interpolate(&[x], t).unwrap() - g.value(&[x], t)).abs());
            }
            errs.push(err.ln());
            hs.push(spec.hx(0).ln());
        }
        let slope = crate::verify::fit::least_squares(&hs, &errs).unwrap().slope;
        assert!((slope - 2.0).abs() < 0.3, "slope {slope}");
    }

    #[test]
    fn cylinder_membership() {
        let c = Cylinder::new(SpaceTimePoint::new(vec![0.5], 1.0).unwrap(), 0.5).unwrap();
        assert!(c.contains(&[0.5], 0.9));
        assert!(!c.contains(&[0.5], 1.0));
        assert!(!c.contains(&[0.5], 0.75));
        assert!(c.contains(&[0.9], 0.8));
        assert!(!c.contains(&[1.0], 0.8));
        assert!(c.contains_closed(&[1.0], 1.0));
    }

    #[test]
    fn grid_flat_index_round_trip() {
        let spec = GridSpec::new(BoxDomain::symmetric(2, 1.0, 0.0, 1.0).unwrap(), 4, 3).unwrap();
        for i in 0..spec.node_count() {
            assert_eq!(spec.flat_index(&spec.multi_index(i)), i);
        }
        assert_eq!(spec.x_coord(0, 0), -1.0);
        assert_eq!(spec.x_coord(0, 3), 1.0);
    }

    #[test]
    fn shrink_rejects_large_tau() {
        let b = BoxDomain::symmetric(1, 1.0, -1.0, 1.0).unwrap();
        let s = b.shrink(0.2).unwrap();
        assert!((s.lo[0] + 0.8).abs() < 1e-15 && (s.t_hi - 0.96).abs() < 1e-15);
        assert!(matches!(b.shrink(1.0), Err(Error::TauTooLarge { .. })));
    }
}
