//! Variable-coefficient problems `∂_t u − a^{ij}∂_{ij}u = f` with a known
//! solution: the coefficient field, the right-hand side derived from `u`,
//! freezing at a point, the normalizing change of variables and the
//! subsolution lift.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::bump::compact_bump;
use crate::field::{
    check_dim, AnalyticFn, BoxDomain, Cylinder, Evaluable, Field, GridSpec, Orientation, Partial, Provenance,
    SpaceTimePoint, Support, Term, TermFn, TermKind, MAX_DIM,
};
use crate::holder::{pdist_raw, seminorm_of_samples, HolderReport, Region, ScanGrid};
use crate::mollify::Mollifier;

/// A `d × d` matrix stored in the top-left corner of a 3×3 array.
pub type Mat = [[f64; MAX_DIM]; MAX_DIM];

/// One upper-triangular entry of the shape matrix `S`:
/// `θ·sin(k·x + ωt + φ) + (1 − θ)·κ(X)`, where `κ` is the shared cusp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntrySpec {
    pub theta: f64,
    pub wave: Vec<f64>,
    pub omega: f64,
    pub phase: f64,
}

/// Serializable description of a [`CoefficientField`].
///
/// `a(X) = m·I + (μ/d)·S(λX)` with `m = (λ_min + Λ)/2`,
/// `μ = variation·(Λ − λ_min)/2` and `|S_ij| ≤ 1`. Gershgorin then puts the
/// spectrum of `a` inside `[m − μ, m + μ] ⊂ [λ_min, Λ]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub dim: usize,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub alpha: f64,
    /// Fraction of the ellipticity gap used by the variable part, in `[0, 1]`.
    pub variation: f64,
    /// Centre of the cusp `κ(X) = 1 − 2·min(1, (d(X, X_c)/ℓ)^α)`.
    pub cusp_center: SpaceTimePoint,
    /// The length `ℓ`.
    pub cusp_scale: f64,
    /// Entries `(i, j)` with `i ≤ j`, row by row.
    pub entries: Vec<EntrySpec>,
    /// Parabolic dilation applied to the argument; 1 for generated fields.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

/// A symmetric, uniformly elliptic, `C^α` coefficient field.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    spec: CoefficientSpec,
}

fn entry_count(d: usize) -> usize {
    d * (d + 1) / 2
}

fn entry_index(d: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * d - i * i.saturating_sub(1) / 2 + (j - i)
}

impl CoefficientField {
    pub fn new(spec: CoefficientSpec) -> Result<Self> {
        let d = spec.dim;
        check_dim(d)?;
        if !(spec.lambda > 0.0 && spec.lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be positive, got {}", spec.lambda)));
        }
        if !(spec.big_lambda >= spec.lambda && spec.big_lambda.is_finite()) {
            return Err(invalid(
                "Lambda",
                format!(
                    "must be finite and at least lambda = {}, got {}",
                    spec.lambda, spec.big_lambda
                ),
            ));
        }
        if !(spec.alpha > 0.0 && spec.alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {}", spec.alpha)));
        }
        if !(0.0..=1.0).contains(&spec.variation) {
            return Err(invalid("variation", "must lie in [0, 1]"));
        }
        if !(spec.cusp_scale > 0.0) || !(spec.scale > 0.0 && spec.scale.is_finite()) {
            return Err(invalid("cusp_scale", "length scales must be positive"));
        }
        if spec.cusp_center.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: spec.cusp_center.dim(),
            });
        }
        if spec.entries.len() != entry_count(d) {
            return Err(Error::DimensionMismatch {
                expected: entry_count(d),
                got: spec.entries.len(),
            });
        }
        for e in &spec.entries {
            if !(0.0..=1.0).contains(&e.theta) {
                return Err(invalid("theta", "must lie in [0, 1]"));
            }
            if e.wave.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: e.wave.len(),
                });
            }
        }
        Ok(Self { spec })
    }

    /// `a ≡ c·I`.
    pub fn constant(dim: usize, c: f64, alpha: f64) -> Result<Self> {
        Self::new(CoefficientSpec {
            dim,
            lambda: c,
            big_lambda: c,
            alpha,
            variation: 0.0,
            cusp_center: SpaceTimePoint::origin(dim),
            cusp_scale: 1.0,
            entries: vec![
                EntrySpec {
                    theta: 1.0,
                    wave: vec![0.0; dim],
                    omega: 0.0,
                    phase: 0.0,
                };
                entry_count(dim)
            ],
            scale: 1.0,
        })
    }

    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn lambda(&self) -> f64 {
        self.spec.lambda
    }

    pub fn big_lambda(&self) -> f64 {
        self.spec.big_lambda
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    fn mean(&self) -> f64 {
        0.5 * (self.spec.lambda + self.spec.big_lambda)
    }

    fn amplitude(&self) -> f64 {
        self.spec.variation * 0.5 * (self.spec.big_lambda - self.spec.lambda)
    }

    fn cusp(&self, x: &[f64], t: f64) -> f64 {
        let c = &self.spec.cusp_center;
        let r = pdist_raw(x, t, &c.x, c.t) / self.spec.cusp_scale;
        1.0 - 2.0 * r.powf(self.spec.alpha).min(1.0)
    }

    /// The matrix `a(x, t)`; entries beyond the dimension are zero.
    pub fn at(&self, x: &[f64], t: f64) -> Mat {
        let d = self.spec.dim;
        let lam = self.spec.scale;
        let mut y = [0.0; MAX_DIM];
        for k in 0..d {
            y[k] = lam * x[k];
        }
        let s = lam * lam * t;
        let mu = self.amplitude() / d as f64;
        let mut out = [[0.0; MAX_DIM]; MAX_DIM];
        let kappa = if mu != 0.0 { self.cusp(&y[..d], s) } else { 0.0 };
        let mut idx = 0;
        for i in 0..d {
            out[i][i] = self.mean();
            for j in i..d {
                let e = &self.spec.entries[idx];
                idx += 1;
                if mu == 0.0 {
                    continue;
                }
                let arg: f64 = e.wave.iter().zip(&y[..d]).map(|(k, v)| k * v).sum::<f64>() + e.omega * s + e.phase;
                let shape = e.theta * arg.sin() + (1.0 - e.theta) * kappa;
                out[i][j] += mu * shape;
                if j != i {
                    out[j][i] = out[i][j];
                }
            }
        }
        out
    }

    pub fn matrix(&self, x: &[f64], t: f64) -> DMatrix<f64> {
        let m = self.at(x, t);
        let d = self.spec.dim;
        DMatrix::from_fn(d, d, |i, j| m[i][j])
    }

    /// Per-entry bounds on `[a_ij]_α` over any set of parabolic diameter at
    /// most `diam`, row-major `d × d`.
    ///
    /// `|sin A − sin B| ≤ 2^{1−α}|A − B|^α` with `|A − B| ≤ (|k| + |ω|·diam)·δ`,
    /// and the cusp contributes `2/ℓ^α` by the triangle inequality.
    pub fn entry_seminorm_bounds(&self, diam: f64) -> Vec<f64> {
        let d = self.spec.dim;
        let a = self.spec.alpha;
        let lam = self.spec.scale;
        let dd = lam * diam;
        let mu = self.amplitude() / d as f64;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let e = &self.spec.entries[entry_index(d, i, j)];
                let k = e.wave.iter().map(|v| v * v).sum::<f64>().sqrt();
                let smooth = 2f64.powf(1.0 - a) * (k + e.omega.abs() * dd).powf(a);
                let rough = 2.0 / self.spec.cusp_scale.powf(a);
                out[i * d + j] = mu * lam.powf(a) * (e.theta * smooth + (1.0 - e.theta) * rough);
            }
        }
        out
    }

    /// Bound on the Frobenius seminorm `sup |a(X) − a(Y)|_F / d(X,Y)^α`.
    pub fn seminorm_bound(&self, diam: f64) -> f64 {
        self.entry_seminorm_bounds(diam)
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// Row-major samples of `a` at the points.
    pub fn samples(&self, points: &[SpaceTimePoint]) -> Vec<f64> {
        let d = self.spec.dim;
        points
            .iter()
            .flat_map(|p| {
                let m = self.at(&p.x, p.t);
                (0..d * d).map(move |k| m[k / d][k % d])
            })
            .collect()
    }

    /// `[a]_α` (Frobenius differences) scanned over the region.
    pub fn seminorm(&self, region: &Region, scan: &ScanGrid, pair_budget: u64) -> Result<HolderReport> {
        let points = scan.points(region)?;
        let d = self.spec.dim;
        seminorm_of_samples(
            &points,
            &self.samples(&points),
            d * d,
            self.spec.alpha,
            pair_budget,
            &[],
        )
    }

    fn rescaled(&self, lambda: f64) -> Self {
        let mut spec = self.spec.clone();
        spec.scale *= lambda;
        Self { spec }
    }
}

/// `A:B` over the leading `d × d` blocks.
fn contract(a: &Mat, b: &Mat, d: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            acc += a[i][j] * b[i][j];
        }
    }
    acc
}

fn hessian(u: &AnalyticFn, x: &[f64], t: f64) -> Mat {
    let d = x.len();
    let mut h = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..d {
        for j in i..d {
            let v = u.partial(Partial::from_axes(&[i, j], 0), x, t).unwrap_or(f64::NAN);
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    h
}

/// `∂_t u − a:∂²u`, the defining formula of `f`.
fn operator_value(u: &AnalyticFn, a: &CoefficientField, x: &[f64], t: f64) -> f64 {
    let d = x.len();
    let am = a.at(x, t);
    let h = hessian(u, x, t);
    let mut acc = u.partial(Partial::dt(), x, t).unwrap_or(f64::NAN);
    for i in 0..d {
        for j in 0..d {
            acc -= am[i][j] * h[i][j];
        }
    }
    acc
}

fn require_second_order(u: &AnalyticFn) -> Result<()> {
    let d = u.dim();
    let mut needed = vec![Partial::dt()];
    for i in 0..d {
        for j in i..d {
            needed.push(Partial::from_axes(&[i, j], 0));
        }
    }
    match needed.into_iter().find(|p| !u.has_partial(*p)) {
        Some(p) => Err(Error::MissingDerivative(format!("{p} of `{}`", u.label()))),
        None => Ok(()),
    }
}

/// `∂_t v − Δv` as a function, from exact derivatives.
pub fn heat_operator_fn(v: &AnalyticFn) -> Result<AnalyticFn> {
    require_second_order(v)?;
    let w = v.clone();
    let label = format!("heat({})", v.label());
    Ok(AnalyticFn::from_fn(v.dim(), label, move |x, t| {
        let mut acc = w.partial(Partial::dt(), x, t).unwrap_or(f64::NAN);
        for i in 0..x.len() {
            acc -= w.partial(Partial::from_axes(&[i, i], 0), x, t).unwrap_or(f64::NAN);
        }
        acc
    })
    .with_support(v.support().clone()))
}

/// `∂_t v − Δv` sampled on a grid.
pub fn heat_operator(v: &AnalyticFn, spec: &GridSpec) -> Result<Field> {
    let h = heat_operator_fn(v)?;
    let values = (0..spec.node_count())
        .map(|i| {
            let p = spec.node(i);
            h.value(&p.x, p.t)
        })
        .collect();
    Field::new(spec.clone(), values, Some(Provenance::Computed))
}

/// `∂_t u_τ − Δu_τ` at one point, from the mollifier's derivative kernels.
pub fn heat_operator_mollified_at<E: Evaluable + ?Sized>(
    u: &E,
    m: &Mollifier,
    tau: f64,
    x: &[f64],
    t: f64,
) -> Result<f64> {
    let mut acc = m.at(u, tau, Partial::dt(), x, t)?;
    for i in 0..x.len() {
        acc -= m.at(u, tau, Partial::from_axes(&[i, i], 0), x, t)?;
    }
    Ok(acc)
}

/// `∂_t u_τ − Δu_τ` on the grid `mollify` would produce.
pub fn heat_operator_mollified<E: Evaluable + ?Sized>(
    u: &E,
    m: &Mollifier,
    tau: f64,
    domain: &BoxDomain,
    nx: usize,
    nt: usize,
) -> Result<Field> {
    let dt = m.field(u, domain, tau, Partial::dt(), nx, nt)?;
    let mut values = dt.values().to_vec();
    for i in 0..domain.dim() {
        let dii = m.field(u, domain, tau, Partial::from_axes(&[i, i], 0), nx, nt)?;
        for (v, w) in values.iter_mut().zip(dii.values()) {
            *v -= w;
        }
    }
    Field::new(dt.spec().clone(), values, Some(Provenance::Computed))
}

/// Largest value of `∂_t v − Δv` over the scan points.
pub fn max_heat_operator(v: &AnalyticFn, region: &Region, scan: &ScanGrid) -> Result<f64> {
    let h = heat_operator_fn(v)?;
    let points = scan.points(region)?;
    Ok(points.iter().map(|p| h.at(p)).fold(f64::NEG_INFINITY, f64::max))
}

/// `w + M|x|²/(2d)`, whose heat operator is that of `w` minus `M`.
///
/// `M` must dominate `∂_t w − Δw` on the region; this is checked on the
/// scan grid (with a relative slack of `1e−12`).
pub fn subsolution_lift(w: &AnalyticFn, m: f64, region: &Region, scan: &ScanGrid) -> Result<AnalyticFn> {
    if !m.is_finite() {
        return Err(invalid("M", "must be finite"));
    }
    let d = w.dim();
    if region.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: region.dim(),
        });
    }
    let top = max_heat_operator(w, region, scan)?;
    if top > m + 1e-12 * m.abs().max(1.0) {
        return Err(Error::Precondition(format!(
            "M = {m} is below the scanned maximum {top} of the heat operator"
        )));
    }
    if m == 0.0 {
        return Ok(w.clone());
    }
    let terms = (0..d)
        .map(|k| {
            let mut a = [0u8; MAX_DIM];
            a[k] = 2;
            Term {
                coef: m / (2.0 * d as f64),
                a,
                b: 0.0,
            }
        })
        .collect();
    let quad = TermFn::new(TermKind::Polynomial, Orientation::Forward, vec![0.0; d], 0.0, terms)?;
    let quad = AnalyticFn::new(Arc::new(quad), format!("{m}|x|^2/{}", 2 * d));
    Ok(AnalyticFn::sum(&[w.clone(), quad])?.with_label(format!("lift({})", w.label())))
}

/// The symmetric map `T = A0^{−1/2}` with `T A0 Tᵀ = I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizingMap {
    pub dim: usize,
    /// `T`, row-major.
    pub t: Vec<f64>,
    /// `T⁻¹ = A0^{1/2}`, row-major.
    pub t_inv: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

impl NormalizingMap {
    /// `‖T‖₂ = λ_min(A0)^{−1/2}`.
    pub fn norm(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .powf(-0.5)
    }

    /// `‖T⁻¹‖₂ = λ_max(A0)^{1/2}`.
    pub fn inverse_norm(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max).sqrt()
    }

    fn mul(m: &[f64], x: &[f64]) -> Vec<f64> {
        let d = x.len();
        (0..d).map(|i| (0..d).map(|j| m[i * d + j] * x[j]).sum()).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        Self::mul(&self.t, x)
    }

    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        Self::mul(&self.t_inv, x)
    }
}

/// Spectral square root factorization of `A0⁻¹`.
pub fn coordinate_normalize(a0: &[f64], dim: usize) -> Result<NormalizingMap> {
    check_dim(dim)?;
    if a0.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            expected: dim * dim,
            got: a0.len(),
        });
    }
    if a0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("A0", "entries must be finite"));
    }
    let scale = a0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..dim {
        for j in 0..i {
            if (a0[i * dim + j] - a0[j * dim + i]).abs() > 1e-14 * scale {
                return Err(invalid("A0", "matrix is not symmetric"));
            }
        }
    }
    let m = DMatrix::from_row_slice(dim, dim, a0);
    let eig = SymmetricEigen::new(m);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite(min));
    }
    let v = &eig.eigenvectors;
    let build = |f: &dyn Fn(f64) -> f64| {
        let mut out = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                out[i * dim + j] = (0..dim).map(|k| v[(i, k)] * f(eig.eigenvalues[k]) * v[(j, k)]).sum();
            }
        }
        // exact symmetry
        for i in 0..dim {
            for j in 0..i {
                let s = 0.5 * (out[i * dim + j] + out[j * dim + i]);
                out[i * dim + j] = s;
                out[j * dim + i] = s;
            }
        }
        out
    };
    Ok(NormalizingMap {
        dim,
        t: build(&|l| 1.0 / l.sqrt()),
        t_inv: build(&|l| l.sqrt()),
        eigenvalues: eig.eigenvalues.iter().copied().collect(),
    })
}

/// Everything needed to regenerate a generated problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemTerms {
    pub index: u64,
    pub dim: usize,
    /// Radius `R` of the domain `Q_R` centred at the origin.
    pub radius: f64,
    /// Vertex of the homogeneous `C^{2,α}` piece.
    pub anchor: SpaceTimePoint,
    /// Polynomial factor in `(x, t)`.
    pub polynomial: Vec<Term>,
    /// Backward Gaussian terms anchored at `anchor`.
    pub singular: Vec<Term>,
    pub coefficient: CoefficientSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemManifest {
    pub seed: u64,
    pub alpha: f64,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub terms: ProblemTerms,
}

/// `u`, `a` and `f = ∂_t u − a:∂²u` on `Q_R`.
#[derive(Clone, Debug)]
pub struct ManufacturedProblem {
    u: AnalyticFn,
    a: Arc<CoefficientField>,
    f: AnalyticFn,
    domain: Cylinder,
    anchor: Option<SpaceTimePoint>,
    manifest: Option<ProblemManifest>,
}

impl ManufacturedProblem {
    /// Builds a problem from any `u` with exact derivatives through
    /// `(∂²_x, ∂_t)`; `f` is defined by the equation.
    pub fn new(u: AnalyticFn, a: CoefficientField, domain: Cylinder) -> Result<Self> {
        let d = u.dim();
        if a.dim() != d || domain.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if a.dim() != d { a.dim() } else { domain.dim() },
            });
        }
        require_second_order(&u)?;
        let a = Arc::new(a);
        let (uu, aa) = (u.clone(), a.clone());
        let f = AnalyticFn::from_fn(d, "f", move |x, t| operator_value(&uu, &aa, x, t))
            .with_support(u.support().clone())
            .with_focus(u.focus().cloned());
        Ok(Self {
            u,
            a,
            f,
            domain,
            anchor: None,
            manifest: None,
        })
    }

    pub fn from_manifest(m: &ProblemManifest) -> Result<Self> {
        let terms = &m.terms;
        let d = terms.dim;
        check_dim(d)?;
        if terms.anchor.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: terms.anchor.dim(),
            });
        }
        let domain = Cylinder::new(SpaceTimePoint::origin(d), terms.radius)?;
        let bump = compact_bump(&domain)?;
        let poly = TermFn::new(
            TermKind::Polynomial,
            Orientation::Forward,
            vec![0.0; d],
            0.0,
            terms.polynomial.clone(),
        )?;
        let mut parts = vec![AnalyticFn::new(Arc::new(poly), "P")];
        if !terms.singular.is_empty() {
            let sing = TermFn::new(
                TermKind::Gaussian,
                Orientation::Backward,
                terms.anchor.x.clone(),
                terms.anchor.t,
                terms.singular.clone(),
            )?;
            parts.push(AnalyticFn::new(Arc::new(sing), "S"));
        }
        let u = bump
            .product(&AnalyticFn::sum(&parts)?)?
            .with_support(Support::CompactIn(domain.clone()))
            .with_focus(Some(terms.anchor.clone()))
            .with_label(format!("u[{}]", terms.index));
        let a = CoefficientField::new(terms.coefficient.clone())?;
        let mut p = Self::new(u, a, domain)?;
        p.anchor = Some(terms.anchor.clone());
        p.manifest = Some(m.clone());
        Ok(p)
    }

    pub fn u(&self) -> &AnalyticFn {
        &self.u
    }

    pub fn a(&self) -> &CoefficientField {
        &self.a
    }

    pub fn f(&self) -> &AnalyticFn {
        &self.f
    }

    pub fn domain(&self) -> &Cylinder {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.a.alpha()
    }

    /// The point where `∂²u` is least regular, if known.
    pub fn anchor(&self) -> Option<&SpaceTimePoint> {
        self.anchor.as_ref()
    }

    pub fn manifest(&self) -> Option<&ProblemManifest> {
        self.manifest.as_ref()
    }

    /// `∂_t u − a:∂²u − f` evaluated afresh.
    pub fn residual(&self, x: &[f64], t: f64) -> f64 {
        operator_value(&self.u, &self.a, x, t) - self.f.value(x, t)
    }

    /// `c·u` with the same coefficients.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut p = Self::new(self.u.scaled(c), (*self.a).clone(), self.domain.clone())?;
        p.anchor = self.anchor.clone();
        Ok(p)
    }

    /// The problem pulled back by `(x, t) ↦ (λx, λ²t)`, posed on `Q_{R/λ}`.
    pub fn rescaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", "scale must be positive"));
        }
        let c = &self.domain.center;
        let center = SpaceTimePoint::new(c.x.iter().map(|v| v / lambda).collect(), c.t / (lambda * lambda))?;
        let domain = Cylinder::new(center, self.domain.radius / lambda)?;
        let u = self.u.rescaled(lambda).with_support(Support::CompactIn(domain.clone()));
        let mut p = Self::new(u, self.a.rescaled(lambda), domain)?;
        p.anchor = self.anchor.as_ref().map(|a| SpaceTimePoint {
            x: a.x.iter().map(|v| v / lambda).collect(),
            t: a.t / (lambda * lambda),
        });
        Ok(p)
    }
}

/// The problem frozen at `X0`.
#[derive(Clone, Debug)]
pub struct FrozenForm {
    pub x0: SpaceTimePoint,
    /// `A0 = a(X0)`, row-major.
    pub a0: Vec<f64>,
    pub f0: f64,
    pub map: NormalizingMap,
    u: AnalyticFn,
    g: AnalyticFn,
}

impl FrozenForm {
    /// `g(X) = (a(X) − A0):∂²u(X) + f(X) − f(X0)`.
    pub fn g(&self) -> &AnalyticFn {
        &self.g
    }

    pub fn u(&self) -> &AnalyticFn {
        &self.u
    }

    /// `∂_t u − A0:∂²u − f0`, which equals `g`.
    pub fn frozen_operator(&self, x: &[f64], t: f64) -> f64 {
        let d = x.len();
        let mut a0 = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..d {
            for j in 0..d {
                a0[i][j] = self.a0[i * d + j];
            }
        }
        let dt = self.u.partial(Partial::dt(), x, t).unwrap_or(f64::NAN);
        dt - contract(&a0, &hessian(&self.u, x, t), d) - self.f0
    }

    /// `u ∘ T⁻¹`, which solves `∂_t − Δ = g ∘ T⁻¹ + f0`.
    pub fn normalized_u(&self) -> Result<AnalyticFn> {
        self.u.linear_pullback(&self.map.t_inv)
    }

    /// `g ∘ T⁻¹`.
    pub fn normalized_g(&self) -> Result<AnalyticFn> {
        self.g.linear_pullback(&self.map.t_inv)
    }

    /// `(T x0, t0)`.
    pub fn normalized_point(&self) -> SpaceTimePoint {
        SpaceTimePoint {
            x: self.map.apply(&self.x0.x),
            t: self.x0.t,
        }
    }
}

/// Freezes the coefficients at `x0`.
pub fn freeze(p: &ManufacturedProblem, x0: &SpaceTimePoint) -> Result<FrozenForm> {
    let d = p.dim();
    if x0.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.dim(),
        });
    }
    if !p.domain.contains_closed(&x0.x, x0.t) {
        return Err(Error::OutOfDomain(x0.to_string()));
    }
    let a0m = p.a.at(&x0.x, x0.t);
    let f0 = p.f.at(x0);
    let a0: Vec<f64> = (0..d * d).map(|k| a0m[k / d][k % d]).collect();
    let map = coordinate_normalize(&a0, d)?;
    let (u, a) = (p.u.clone(), p.a.clone());
    let g = AnalyticFn::from_fn(d, "g", move |x, t| {
        let am = a.at(x, t);
        let h = hessian(&u, x, t);
        // same operation order as `f`, so f(X0) − f0 vanishes exactly
        let mut f = u.partial(Partial::dt(), x, t).unwrap_or(f64::NAN);
        for i in 0..d {
            for j in 0..d {
                f -= am[i][j] * h[i][j];
            }
        }
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += (am[i][j] - a0m[i][j]) * h[i][j];
            }
        }
        acc + (f - f0)
    })
    .with_support(p.u.support().clone())
    .with_focus(Some(x0.clone()));
    Ok(FrozenForm {
        x0: x0.clone(),
        a0,
        f0,
        map,
        u: p.u.clone(),
        g,
    })
}

/// Knobs of the generated family beyond the spec'd arguments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub dim: usize,
    pub alpha: f64,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub count: usize,
    pub seed: u64,
    /// Fraction of the ellipticity gap used by the variable coefficients.
    pub variation: f64,
    /// Include the homogeneous `C^{2,α}` piece.
    pub singular: bool,
    /// Length `ℓ` of the coefficient cusp.
    pub cusp_scale: f64,
}

impl FamilyConfig {
    pub fn new(dim: usize, alpha: f64, lambda: f64, big_lambda: f64, count: usize, seed: u64) -> Self {
        Self {
            dim,
            alpha,
            lambda,
            big_lambda,
            count,
            seed,
            variation: 1.0,
            singular: true,
            cusp_scale: 0.5,
        }
    }
}

/// Monomials `x^a t^b` of parabolic degree `|a| + 2b ≤ 3`.
fn monomials(d: usize) -> Vec<([u8; MAX_DIM], u8)> {
    let mut out = Vec::new();
    for b in 0..=1u8 {
        for code in 0..4usize.pow(d as u32) {
            let mut a = [0u8; MAX_DIM];
            let mut c = code;
            for slot in a.iter_mut().take(d) {
                *slot = (c % 4) as u8;
                c /= 4;
            }
            let deg: u8 = a.iter().sum::<u8>() + 2 * b;
            if deg <= 3 {
                out.push((a, b));
            }
        }
    }
    out
}

fn lattice_point(rng: &mut ChaCha8Rng, d: usize) -> SpaceTimePoint {
    let x = (0..d).map(|_| rng.random_range(-3..=3i32) as f64 / 8.0).collect();
    let t = rng.random_range(-24..=-8i32) as f64 / 32.0;
    SpaceTimePoint { x, t }
}

fn signed_weight(rng: &mut ChaCha8Rng) -> f64 {
    let w = rng.random_range(0.5..1.0);
    if rng.random_bool(0.5) {
        w
    } else {
        -w
    }
}

/// Draws the `index`-th problem of the family: a manifest only.
pub fn generate_manifest(cfg: &FamilyConfig, index: u64) -> Result<ProblemManifest> {
    let d = cfg.dim;
    check_dim(d)?;
    if !(cfg.lambda > 0.0 && cfg.lambda <= cfg.big_lambda && cfg.big_lambda.is_finite()) {
        return Err(invalid(
            "lambda",
            format!(
                "need 0 < lambda <= Lambda < inf, got {} and {}",
                cfg.lambda, cfg.big_lambda
            ),
        ));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {}", cfg.alpha)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let anchor = lattice_point(&mut rng, d);
    let mut cusp_center = lattice_point(&mut rng, d);
    for _ in 0..64 {
        if pdist_raw(&cusp_center.x, cusp_center.t, &anchor.x, anchor.t) >= 0.25 {
            break;
        }
        cusp_center = lattice_point(&mut rng, d);
    }
    let polynomial = monomials(d)
        .into_iter()
        .map(|(a, b)| Term {
            coef: rng.random_range(-1.0..1.0),
            a,
            b: b as f64,
        })
        .collect();
    let (c1, c2) = (signed_weight(&mut rng), signed_weight(&mut rng));
    let alpha = cfg.alpha;
    let singular = if cfg.singular {
        vec![
            Term {
                coef: c1,
                a: [0; MAX_DIM],
                b: 1.0 + alpha / 2.0,
            },
            Term {
                coef: c2,
                a: [1, 0, 0],
                b: (1.0 + alpha) / 2.0,
            },
        ]
    } else {
        Vec::new()
    };
    let entries = (0..entry_count(d))
        .map(|_| EntrySpec {
            theta: rng.random_range(0.2..0.8),
            wave: (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
            omega: rng.random_range(-3.0..3.0),
            phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect();
    Ok(ProblemManifest {
        seed: cfg.seed,
        alpha,
        lambda: cfg.lambda,
        big_lambda: cfg.big_lambda,
        terms: ProblemTerms {
            index,
            dim: d,
            radius: 1.0,
            anchor,
            polynomial,
            singular,
            coefficient: CoefficientSpec {
                dim: d,
                lambda: cfg.lambda,
                big_lambda: cfg.big_lambda,
                alpha,
                variation: cfg.variation,
                cusp_center,
                cusp_scale: cfg.cusp_scale,
                entries,
                scale: 1.0,
            },
        },
    })
}

/// `cfg.count` problems; problem `k` uses ChaCha8 stream `k` of `cfg.seed`,
/// so a larger family extends a smaller one.
pub fn problem_family(cfg: &FamilyConfig) -> Result<Vec<ManufacturedProblem>> {
    (0..cfg.count as u64)
        .map(|k| ManufacturedProblem::from_manifest(&generate_manifest(cfg, k)?))
        .collect()
}

/// The one-dimensional family used by the acceptance checks.
pub fn default_problem_family(
    alpha: f64,
    lambda: f64,
    big_lambda: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<ManufacturedProblem>> {
    problem_family(&FamilyConfig::new(1, alpha, lambda, big_lambda, count, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{builtin_family, BuiltinParams};

    fn family(d: usize, count: usize) -> Vec<ManufacturedProblem> {
        problem_family(&FamilyConfig::new(d, 0.5, 0.5, 2.0, count, 7)).unwrap()
    }

    fn grid_points(p: &ManufacturedProblem, n: usize) -> Vec<SpaceTimePoint> {
        ScanGrid::new(n, n).points(&Region::from(p.domain().clone())).unwrap()
    }

    #[test]
    fn entry_indexing() {
        assert_eq!(entry_index(1, 0, 0), 0);
        let d2: Vec<usize> = [(0, 0), (0, 1), (1, 1)]
            .iter()
            .map(|&(i, j)| entry_index(2, i, j))
            .collect();
        assert_eq!(d2, vec![0, 1, 2]);
        let d3: Vec<usize> = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
            .iter()
            .map(|&(i, j)| entry_index(3, i, j))
            .collect();
        assert_eq!(d3, (0..6).collect::<Vec<_>>());
        assert_eq!(entry_index(3, 2, 1), 4);
    }

    #[test]
    fn residual_identity_on_grid() {
        for d in [1, 2] {
            for p in family(d, 3) {
                for q in grid_points(&p, 9) {
                    let f = p.f().at(&q);
                    // independent contraction order
                    let a = p.a().matrix(&q.x, q.t);
                    let mut lhs = p.u().partial(Partial::dt(), &q.x, q.t).unwrap();
                    for j in (0..d).rev() {
                        for i in (0..d).rev() {
                            lhs -= a[(i, j)] * p.u().partial(Partial::from_axes(&[i, j], 0), &q.x, q.t).unwrap();
                        }
                    }
                    assert!((lhs - f).abs() <= 1e-12 * (1.0 + f.abs()), "{lhs} vs {f}");
                }
            }
        }
    }

    #[test]
    fn coefficients_are_symmetric_and_elliptic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in family(2, 3) {
            let a = p.a();
            for q in grid_points(&p, 9) {
                let m = a.at(&q.x, q.t);
                assert_eq!(m[0][1], m[1][0]);
                let xi = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let n2 = xi[0] * xi[0] + xi[1] * xi[1];
                let form: f64 = (0..2)
                    .map(|i| (0..2).map(|j| m[i][j] * xi[i] * xi[j]).sum::<f64>())
                    .sum();
                assert!(form >= a.lambda() * n2 * (1.0 - 1e-12));
                assert!(form <= a.big_lambda() * n2 * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn solution_vanishes_on_the_parabolic_boundary() {
        let p = &family(1, 1)[0];
        let ps = [
            Partial::ZERO,
            Partial::dx(0),
            Partial::from_axes(&[0, 0], 0),
            Partial::dt(),
        ];
        for k in 0..=20 {
            let s = -1.0 + k as f64 / 10.0;
            for q in ps {
                assert_eq!(p.u().partial(q, &[1.0], s - 1.0).unwrap(), 0.0);
                assert_eq!(p.u().partial(q, &[-1.0], s - 1.0).unwrap(), 0.0);
                assert_eq!(p.u().partial(q, &[s], -1.0).unwrap(), 0.0);
                assert_eq!(p.u().partial(q, &[s], 0.0).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_extends() {
        let small = problem_family(&FamilyConfig::new(1, 0.5, 0.5, 2.0, 2, 7)).unwrap();
        let large = problem_family(&FamilyConfig::new(1, 0.5, 0.5, 2.0, 4, 7)).unwrap();
        for (a, b) in small.iter().zip(&large) {
            assert_eq!(a.manifest(), b.manifest());
        }
        assert_ne!(large[0].manifest(), large[1].manifest());
        let other = problem_family(&FamilyConfig::new(1, 0.5, 0.5, 2.0, 1, 8)).unwrap();
        assert_ne!(other[0].manifest().unwrap().terms, small[0].manifest().unwrap().terms);
    }

    #[test]
    fn manifest_round_trip_is_bit_identical() {
        let p = &family(2, 2)[1];
        let json = serde_json::to_string(p.manifest().unwrap()).unwrap();
        assert!(json.contains("\"Lambda\""));
        let back: ProblemManifest = serde_json::from_str(&json).unwrap();
        let q = ManufacturedProblem::from_manifest(&back).unwrap();
        for pt in grid_points(p, 7) {
            assert_eq!(p.u().at(&pt).to_bits(), q.u().at(&pt).to_bits());
            assert_eq!(p.f().at(&pt).to_bits(), q.f().at(&pt).to_bits());
        }
    }

    #[test]
    fn freezing_point_residual_vanishes_exactly() {
        for p in family(1, 3).iter().chain(&family(2, 2)) {
            let x0 = p.anchor().unwrap().clone();
            let fz = freeze(p, &x0).unwrap();
            assert_eq!(fz.g().at(&x0), 0.0);
            for q in grid_points(p, 9) {
                let g = fz.g().at(&q);
                let h = fz.frozen_operator(&q.x, q.t);
                assert!((g - h).abs() <= 1e-12 * (1.0 + h.abs()), "{g} vs {h}");
            }
        }
    }

    #[test]
    fn freeze_rejects_outside_points() {
        let p = &family(1, 1)[0];
        let out = SpaceTimePoint::new(vec![0.0], 0.5).unwrap();
        assert!(matches!(freeze(p, &out), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn constant_coefficients_give_difference_of_f() {
        let mut cfg = FamilyConfig::new(1, 0.5, 1.0, 1.0, 1, 3);
        cfg.variation = 0.0;
        let p = &problem_family(&cfg).unwrap()[0];
        let x0 = SpaceTimePoint::new(vec![0.25], -0.5).unwrap();
        let fz = freeze(p, &x0).unwrap();
        let f0 = p.f().at(&x0);
        for q in grid_points(p, 9) {
            assert_eq!(fz.g().at(&q), p.f().at(&q) - f0);
        }
    }

    #[test]
    fn caloric_solution_with_identity_coefficients_has_zero_residual() {
        let u = builtin_family("caloric_poly", &BuiltinParams::new(1)).unwrap();
        let a = CoefficientField::constant(1, 1.0, 0.5).unwrap();
        let p = ManufacturedProblem::new(u, a, Cylinder::unit(1)).unwrap();
        let fz = freeze(&p, &SpaceTimePoint::new(vec![0.1], -0.2).unwrap()).unwrap();
        for q in grid_points(&p, 9) {
            assert_eq!(p.f().at(&q), 0.0);
            assert_eq!(fz.g().at(&q), 0.0);
        }
    }

    #[test]
    fn normalize_identity_and_diagonal() {
        let m = coordinate_normalize(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        for (v, e) in m.t.iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert!((v - e).abs() < 1e-15);
        }
        let m = coordinate_normalize(&[4.0, 0.0, 0.0, 1.0], 2).unwrap();
        for (v, e) in m.t.iter().zip([0.5, 0.0, 0.0, 1.0]) {
            assert!((v - e).abs() < 1e-15);
        }
        assert!((m.norm() - 1.0).abs() < 1e-15);
        assert!((m.inverse_norm() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            // Q diag(l) Qᵀ with a random rotation
            let th: f64 = rng.random_range(0.0..PI);
            let (c, s) = (th.cos(), th.sin());
            let l = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
            let a = [
                c * c * l[0] + s * s * l[1],
                c * s * (l[0] - l[1]),
                c * s * (l[0] - l[1]),
                s * s * l[0] + c * c * l[1],
            ];
            let m = coordinate_normalize(&a, 2).unwrap();
            let t = DMatrix::from_row_slice(2, 2, &m.t);
            let prod = &t * DMatrix::from_row_slice(2, 2, &a) * t.transpose();
            assert!((prod - DMatrix::identity(2, 2)).abs().max() < 1e-12);
            assert!(m.norm() <= 0.5f64.powf(-0.5) + 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_indefinite() {
        match coordinate_normalize(&[1.0, 2.0, 2.0, 1.0], 2) {
            Err(Error::NotPositiveDefinite(e)) => assert!((e + 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert!(coordinate_normalize(&[1.0, 0.5, 0.0, 1.0], 2).is_err());
    }

    #[test]
    fn heat_operator_examples() {
        let spec = GridSpec::new(BoxDomain::symmetric(1, 1.0, -1.0, 0.0).unwrap(), 5, 5).unwrap();
        let cal = builtin_family("caloric_poly", &BuiltinParams::new(1)).unwrap();
        assert!(heat_operator(&cal, &spec).unwrap().values().iter().all(|v| *v == 0.0));
        let sq = quadratic(1.0, 0.0);
        assert!(heat_operator(&sq, &spec).unwrap().values().iter().all(|v| *v == -2.0));
        let mt = quadratic(0.0, -1.0);
        assert!(heat_operator(&mt, &spec).unwrap().values().iter().all(|v| *v == -1.0));
        let plain = AnalyticFn::from_fn(1, "plain", |x, _| x[0]);
        assert!(matches!(heat_operator(&plain, &spec), Err(Error::MissingDerivative(_))));
    }

    /// `c2·x² + c1·t` in one dimension.
    fn quadratic(c2: f64, c1: f64) -> AnalyticFn {
        let terms = vec![
            Term {
                coef: c2,
                a: [2, 0, 0],
                b: 0.0,
            },
            Term {
                coef: c1,
                a: [0; MAX_DIM],
                b: 1.0,
            },
        ];
        AnalyticFn::new(
            Arc::new(TermFn::new(TermKind::Polynomial, Orientation::Forward, vec![0.0], 0.0, terms).unwrap()),
            "quadratic",
        )
    }

    #[test]
    fn lift_cancels_the_bound() {
        let region = Region::from(Cylinder::unit(1));
        let scan = ScanGrid::new(9, 9);
        let cal = builtin_family("caloric_poly", &BuiltinParams::new(1)).unwrap();
        let same = subsolution_lift(&cal, 0.0, &region, &scan).unwrap();
        assert_eq!(max_heat_operator(&same, &region, &scan).unwrap(), 0.0);
        let w = quadratic(0.0, 1.5);
        let lifted = subsolution_lift(&w, 1.5, &region, &scan).unwrap();
        let h = heat_operator_fn(&lifted).unwrap();
        for q in scan.points(&region).unwrap() {
            assert_eq!(h.at(&q), 0.0);
        }
        assert!(matches!(
            subsolution_lift(&w, 1.0, &region, &scan),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn mollified_equation_commutes() {
        let p = &family(1, 1)[0];
        let x0 = p.anchor().unwrap().clone();
        let fz = freeze(p, &x0).unwrap();
        let (un, gn) = (fz.normalized_u().unwrap(), fz.normalized_g().unwrap());
        let m = Mollifier::with_default_nodes(1).unwrap();
        let c = fz.normalized_point();
        for tau in [0.1, 0.05] {
            for dx in [-0.1, 0.0, 0.07] {
                let x = [c.x[0] + dx];
                let lhs = heat_operator_mollified_at(&un, &m, tau, &x, c.t - 0.01).unwrap() - fz.f0;
                let rhs = m.at(&gn, tau, Partial::ZERO, &x, c.t - 0.01).unwrap();
                assert!(
                    (lhs - rhs).abs() < 1e-3 * (1.0 + rhs.abs()),
                    "tau {tau}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn coefficient_seminorm_respects_bound() {
        for p in family(1, 4).iter().chain(&family(2, 2)) {
            let region = Region::from(p.domain().clone());
            let mut scan = ScanGrid::new(17, 17);
            let cc = p.a().spec().cusp_center.clone();
            scan = scan.with_focus(cc, 0.05, 9);
            let rep = p.a().seminorm(&region, &scan, 2_000_000).unwrap();
            let bound = p.a().seminorm_bound(2.0);
            assert!(rep.seminorm <= bound, "{} > {bound}", rep.seminorm);
            assert!(rep.seminorm > 0.0);
        }
    }

    #[test]
    fn rescaling_keeps_the_equation() {
        let p = &family(1, 1)[0];
        let r = p.rescaled(2.0).unwrap();
        for q in grid_points(&r, 9) {
            let y = [2.0 * q.x[0]];
            let expect = 4.0 * p.f().value(&y, 4.0 * q.t);
            assert!((r.f().at(&q) - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn rejects_bad_ellipticity() {
        assert!(default_problem_family(0.5, 2.0, 1.0, 1, 0).is_err());
        assert!(default_problem_family(0.5, 0.0, 1.0, 1, 0).is_err());
        assert!(default_problem_family(1.0, 0.5, 1.0, 1, 0).is_err());
    }
}
