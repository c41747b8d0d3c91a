//! Parabolic distance, Hölder seminorms, the `|·|_{2,1,α}` norm and
//! oscillation, all measured on finite point sets.
//!
//! Seminorms are suprema of difference quotients over a deterministic set
//! of pairs, hence lower bounds of the true value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{AnalyticFn, BoxDomain, Cylinder, Evaluable, Field, GridSpec, Partial, SpaceTimePoint, MAX_DIM};

/// `max(|x − y|, |t − s|^{1/2})` on raw coordinates.
#[inline]
pub fn pdist_raw(x: &[f64], t: f64, y: &[f64], s: f64) -> f64 {
    let spatial = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    spatial.max((t - s).abs().sqrt())
}

/// Parabolic distance between two points.
pub fn pdist(a: &SpaceTimePoint, b: &SpaceTimePoint) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(pdist_raw(&a.x, a.t, &b.x, b.t))
}

/// A closed set of space-time points to scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Cylinder(Cylinder),
    Box(BoxDomain),
}

impl From<Cylinder> for Region {
    fn from(c: Cylinder) -> Self {
        Region::Cylinder(c)
    }
}

impl From<BoxDomain> for Region {
    fn from(b: BoxDomain) -> Self {
        Region::Box(b)
    }
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Cylinder(c) => c.dim(),
            Region::Box(b) => b.dim(),
        }
    }

    pub fn bounding_box(&self) -> BoxDomain {
        match self {
            Region::Cylinder(c) => c.bounding_box(),
            Region::Box(b) => b.clone(),
        }
    }

    /// Membership in the closure. Suprema of continuous functions over a
    /// set and over its closure agree, and the closure keeps boundary nodes
    /// such as the top face `t = center.t` of a cylinder.
    pub fn contains(&self, x: &[f64], t: f64) -> bool {
        match self {
            Region::Cylinder(c) => c.contains_closed(x, t),
            Region::Box(b) => b.contains(x, t),
        }
    }
}

/// Resolution of the tensor grid laid over a region's bounding box, plus
/// an optional refinement window around a point of interest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub nx: usize,
    pub nt: usize,
    pub focus: Option<FocusWindow>,
}

/// The box `x ± 3·scale`, `t ± 3·scale²` around `center`, sampled with
/// `nodes` points per axis. Tying the window to the mollification scale
/// makes the sampled set scale exactly with `τ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocusWindow {
    pub center: SpaceTimePoint,
    pub scale: f64,
    pub nodes: usize,
}

impl ScanGrid {
    pub fn new(nx: usize, nt: usize) -> Self {
        Self { nx, nt, focus: None }
    }

    pub fn with_focus(mut self, center: SpaceTimePoint, scale: f64, nodes: usize) -> Self {
        self.focus = Some(FocusWindow { center, scale, nodes });
        self
    }

    /// Grid points inside the closed region, coarse grid first, window after.
    pub fn points(&self, region: &Region) -> Result<Vec<SpaceTimePoint>> {
        let d = region.dim();
        let spec = GridSpec::new(region.bounding_box(), self.nx, self.nt)?;
        let mut out = Vec::new();
        let mut x = vec![0.0; d];
        for i in 0..spec.node_count() {
            let t = spec.node_into(i, &mut x);
            if region.contains(&x, t) {
                out.push(SpaceTimePoint { x: x.clone(), t });
            }
        }
        if let Some(w) = &self.focus {
            if w.center.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: w.center.dim(),
                });
            }
            if w.nodes >= 2 && w.scale > 0.0 {
                let half = 3.0 * w.scale;
                let half_t = 3.0 * w.scale * w.scale;
                let dom = BoxDomain {
                    lo: w.center.x.iter().map(|c| c - half).collect(),
                    hi: w.center.x.iter().map(|c| c + half).collect(),
                    t_lo: w.center.t - half_t,
                    t_hi: w.center.t + half_t,
                };
                let wspec = GridSpec::new(dom, w.nodes, w.nodes)?;
                for i in 0..wspec.node_count() {
                    let t = wspec.node_into(i, &mut x);
                    if region.contains(&x, t) {
                        out.push(SpaceTimePoint { x: x.clone(), t });
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::EmptyRegion(format!(
                "no {}x{} grid node lies in the region",
                self.nx, self.nt
            )));
        }
        Ok(out)
    }
}

/// Result of a seminorm scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub alpha: f64,
    pub seminorm: f64,
    /// Pair attaining `seminorm`; absent when every scanned quotient is 0.
    pub witness: Option<[SpaceTimePoint; 2]>,
    pub pairs_scanned: u64,
}

#[derive(Clone, Copy, Debug)]
struct Best {
    q: f64,
    pos: u64,
    i: usize,
    j: usize,
}

impl Best {
    const NONE: Best = Best {
        q: 0.0,
        pos: u64::MAX,
        i: 0,
        j: 0,
    };

    // larger quotient wins; ties go to the pair scanned first
    fn merge(self, other: Best) -> Best {
        if other.q > self.q || (other.q == self.q && other.pos < self.pos) {
            other
        } else {
            self
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")))
    }
}

/// Euclidean norm of the difference of two value vectors.
#[inline]
fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        return (a[0] - b[0]).abs();
    }
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Quotient `|u(X) − u(Y)| / d(X,Y)^α`; `None` for coincident points.
#[inline]
pub fn difference_quotient(alpha: f64, x: &SpaceTimePoint, ux: &[f64], y: &SpaceTimePoint, uy: &[f64]) -> Option<f64> {
    let dist = pdist_raw(&x.x, x.t, &y.x, y.t);
    if dist == 0.0 {
        return None;
    }
    Some(diff_norm(ux, uy) / dist.powf(alpha))
}

/// Seminorm scan over explicit samples. `values` holds `ncomp` components
/// per point (tensor-valued functions use the Frobenius norm).
///
/// Exhaustive when all `n(n−1)/2` pairs fit the budget. Otherwise the scan
/// takes a prefix of a fixed order: the axis-aligned nearest neighbours in
/// `neighbours`, then index strides `1, 2, …`. A larger budget therefore
/// scans a superset and never reports less.
pub fn seminorm_of_samples(
    points: &[SpaceTimePoint],
    values: &[f64],
    ncomp: usize,
    alpha: f64,
    pair_budget: u64,
    neighbours: &[(usize, usize)],
) -> Result<HolderReport> {
    check_alpha(alpha)?;
    let n = points.len();
    if values.len() != n * ncomp {
        return Err(invalid(
            "values",
            format!("expected {} values, got {}", n * ncomp, values.len()),
        ));
    }
    if n < 2 {
        return Err(Error::EmptyRegion(format!("{n} sample point(s); a seminorm needs two")));
    }
    if pair_budget == 0 {
        return Err(invalid("pair_budget", "must be positive"));
    }
    let val = |i: usize| &values[i * ncomp..(i + 1) * ncomp];
    let total = (n as u64) * (n as u64 - 1) / 2;
    let exhaustive = total <= pair_budget;

    let mut best = Best::NONE;
    let mut scanned = 0u64;
    let mut pos = 0u64;
    if !exhaustive {
        let take = (neighbours.len() as u64).min(pair_budget) as usize;
        best = neighbours[..take]
            .par_iter()
            .enumerate()
            .map(
                |(k, &(i, j))| match difference_quotient(alpha, &points[i], val(i), &points[j], val(j)) {
                    Some(q) => Best { q, pos: k as u64, i, j },
                    None => Best::NONE,
                },
            )
            .reduce(|| Best::NONE, Best::merge);
        scanned += take as u64;
        pos += take as u64;
    }
    let mut remaining = pair_budget - scanned;
    // strides fully covered by the remaining budget, then a partial one
    let mut strides = Vec::new();
    let mut offset = pos;
    for s in 1..n {
        if remaining == 0 {
            break;
        }
        let len = ((n - s) as u64).min(remaining);
        strides.push((s, len, offset));
        offset += len;
        remaining -= len;
        scanned += len;
    }
    let stride_best = strides
        .par_iter()
        .map(|&(s, len, off)| {
            let mut b = Best::NONE;
            for j in 0..len as usize {
                if let Some(q) = difference_quotient(alpha, &points[j], val(j), &points[j + s], val(j + s)) {
                    b = b.merge(Best {
                        q,
                        pos: off + j as u64,
                        i: j,
                        j: j + s,
                    });
                }
            }
            b
        })
        .reduce(|| Best::NONE, Best::merge);
    best = best.merge(stride_best);

    let witness = (best.pos != u64::MAX && best.q > 0.0).then(|| [points[best.i].clone(), points[best.j].clone()]);
    Ok(HolderReport {
        alpha,
        seminorm: if witness.is_some() { best.q } else { 0.0 },
        witness,
        pairs_scanned: scanned,
    })
}

/// Axis-aligned nearest-neighbour pairs among the compacted points of a
/// tensor grid. `keep[i]` is the compacted index of full-grid node `i`.
fn grid_neighbours(spec: &GridSpec, keep: &[Option<usize>]) -> Vec<(usize, usize)> {
    let d = spec.dim();
    let mut out = Vec::new();
    for flat in 0..spec.node_count() {
        let Some(a) = keep[flat] else { continue };
        let idx = spec.multi_index(flat);
        for axis in 0..=d {
            let n = if axis < d { spec.nx } else { spec.nt };
            if idx[axis] + 1 < n {
                let mut nb = idx.clone();
                nb[axis] += 1;
                if let Some(b) = keep[spec.flat_index(&nb)] {
                    out.push((a, b));
                }
            }
        }
    }
    out
}

/// Samples an evaluable on the scan grid and returns points, values and
/// the nearest-neighbour pairs of the coarse grid part.
fn sample_region<E: Evaluable + ?Sized>(
    u: &E,
    region: &Region,
    scan: &ScanGrid,
) -> Result<(Vec<SpaceTimePoint>, Vec<f64>, Vec<(usize, usize)>)> {
    if u.dim() != region.dim() {
        return Err(Error::DimensionMismatch {
            expected: region.dim(),
            got: u.dim(),
        });
    }
    let spec = GridSpec::new(region.bounding_box(), scan.nx, scan.nt)?;
    let mut keep = vec![None; spec.node_count()];
    let mut x = vec![0.0; spec.dim()];
    let mut count = 0;
    for (i, slot) in keep.iter_mut().enumerate() {
        let t = spec.node_into(i, &mut x);
        if region.contains(&x, t) {
            *slot = Some(count);
            count += 1;
        }
    }
    let points = scan.points(region)?;
    let values = points
        .par_iter()
        .map(|p| u.eval(&p.x, p.t))
        .collect::<Result<Vec<f64>>>()?;
    Ok((points, values, grid_neighbours(&spec, &keep)))
}

/// `[u]_α` over the region, scanned on `scan`.
pub fn holder_seminorm<E: Evaluable + ?Sized>(
    u: &E,
    alpha: f64,
    region: &Region,
    scan: &ScanGrid,
    pair_budget: u64,
) -> Result<HolderReport> {
    check_alpha(alpha)?;
    let (points, values, nb) = sample_region(u, region, scan)?;
    seminorm_of_samples(&points, &values, 1, alpha, pair_budget, &nb)
}

/// `[u]_α` over the nodes of a sampled field that lie in the region.
pub fn holder_seminorm_field(field: &Field, alpha: f64, region: &Region, pair_budget: u64) -> Result<HolderReport> {
    check_alpha(alpha)?;
    let spec = field.spec();
    let mut keep = vec![None; spec.node_count()];
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (i, slot) in keep.iter_mut().enumerate() {
        let p = spec.node(i);
        if region.contains(&p.x, p.t) {
            *slot = Some(points.len());
            points.push(p);
            values.push(field.values()[i]);
        }
    }
    let nb = grid_neighbours(spec, &keep);
    seminorm_of_samples(&points, &values, 1, alpha, pair_budget, &nb)
}

/// `sup − inf` over the scan points.
pub fn osc<E: Evaluable + ?Sized>(u: &E, region: &Region, scan: &ScanGrid) -> Result<f64> {
    let (_, values, _) = sample_region(u, region, scan)?;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(hi - lo)
}

/// `sup |u|` over the scan points, with an argmax.
pub fn sup_abs<E: Evaluable + ?Sized>(u: &E, region: &Region, scan: &ScanGrid) -> Result<(f64, SpaceTimePoint)> {
    let points = scan.points(region)?;
    let values = points
        .par_iter()
        .map(|p| u.eval(&p.x, p.t).map(f64::abs))
        .collect::<Result<Vec<f64>>>()?;
    let (k, v) = values.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |(bk, bv), (k, &v)| if v > bv { (k, v) } else { (bk, bv) },
    );
    Ok((v, points[k].clone()))
}

/// The pieces of `|u|_{2,1,α}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicNorm {
    pub alpha: f64,
    /// `|u|₀`.
    pub sup_u: f64,
    /// `|∂_x u|₀` (Euclidean gradient norm).
    pub sup_grad: f64,
    /// `|∂_x² u|₀` (Frobenius norm of the Hessian).
    pub sup_hess: f64,
    /// `|∂_t u|₀`.
    pub sup_dt: f64,
    /// `[∂_x² u]_α`.
    pub semi_hess: HolderReport,
    /// `[∂_t u]_α`.
    pub semi_dt: HolderReport,
    pub total: f64,
}

impl ParabolicNorm {
    /// `[∂_x²u]_α + [∂_t u]_α`, the left side of the Schauder estimate.
    pub fn top_seminorms(&self) -> f64 {
        self.semi_hess.seminorm + self.semi_dt.seminorm
    }
}

/// Spatial partials of a given total order, axis tuples in lexicographic
/// order (so tensors come out in row-major layout).
pub fn spatial_partials(dim: usize, order: usize, t: u8) -> Vec<Partial> {
    let mut out = Vec::new();
    for code in 0..dim.pow(order as u32) {
        let mut c = code;
        let mut axes = [0usize; MAX_DIM];
        for slot in axes.iter_mut().take(order).rev() {
            *slot = c % dim;
            c /= dim;
        }
        out.push(Partial::from_axes(&axes[..order], t));
    }
    out
}

/// Evaluates the listed partials at every point, row-major.
pub(crate) fn tensor_samples(u: &AnalyticFn, partials: &[Partial], points: &[SpaceTimePoint]) -> Result<Vec<f64>> {
    let rows = points
        .par_iter()
        .map(|p| {
            partials
                .iter()
                .map(|q| u.partial(*q, &p.x, p.t))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    if let Some(k) = flat.iter().position(|v| !v.is_finite()) {
        let p = &points[k / partials.len()];
        return Err(Error::NonFinite {
            index: vec![k / partials.len()],
            point: p.to_string(),
            value: flat[k],
        });
    }
    Ok(flat)
}

fn sup_of_tensor(values: &[f64], ncomp: usize) -> f64 {
    values
        .chunks(ncomp)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Assembles `|u|_{2,1,α}` from exact derivatives of `u`.
pub fn parabolic_norm(
    u: &AnalyticFn,
    alpha: f64,
    region: &Region,
    scan: &ScanGrid,
    pair_budget: u64,
) -> Result<ParabolicNorm> {
    check_alpha(alpha)?;
    let d = u.dim();
    if d != region.dim() {
        return Err(Error::DimensionMismatch {
            expected: region.dim(),
            got: d,
        });
    }
    let grad = spatial_partials(d, 1, 0);
    let hess = spatial_partials(d, 2, 0);
    let dt = [Partial::dt()];
    for p in grad.iter().chain(&hess).chain(&dt) {
        if !u.has_partial(*p) {
            return Err(Error::MissingDerivative(format!("{p} of `{}`", u.label())));
        }
    }
    let (points, _, nb) = sample_region(u, region, scan)?;
    let vals = tensor_samples(u, &[Partial::ZERO], &points)?;
    let gvals = tensor_samples(u, &grad, &points)?;
    let hvals = tensor_samples(u, &hess, &points)?;
    let tvals = tensor_samples(u, &dt, &points)?;
    let semi_hess = seminorm_of_samples(&points, &hvals, hess.len(), alpha, pair_budget, &nb)?;
    let semi_dt = seminorm_of_samples(&points, &tvals, 1, alpha, pair_budget, &nb)?;
    let sup_u = sup_of_tensor(&vals, 1);
    let sup_grad = sup_of_tensor(&gvals, grad.len());
    let sup_hess = sup_of_tensor(&hvals, hess.len());
    let sup_dt = sup_of_tensor(&tvals, 1);
    let total = sup_u + sup_grad + sup_hess + sup_dt + semi_hess.seminorm + semi_dt.seminorm;
    Ok(ParabolicNorm {
        alpha,
        sup_u,
        sup_grad,
        sup_hess,
        sup_dt,
        semi_hess,
        semi_dt,
        total,
    })
}
