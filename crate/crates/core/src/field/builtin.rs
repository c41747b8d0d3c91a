use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::analytic::{AnalyticFn, Partial, SpaceTimeFn};
use super::bump::compact_bump;
use super::terms::{Orientation, Term, TermFn, TermKind};
use super::{check_dim, Cylinder, SpaceTimePoint, MAX_DIM};
use crate::error::{invalid, Error, Result};

/// Names of the built-in test functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    Constant,
    Affine,
    SpatialCusp,
    TemporalCusp,
    CaloricPoly,
    HeatKernelShift,
    CompactBump,
    /// `H(x₀)·H(t)`: bounded, discontinuous in space and in time.
    Step,
}

impl Builtin {
    pub const ALL: [Builtin; 8] = [
        Builtin::Constant,
        Builtin::Affine,
        Builtin::SpatialCusp,
        Builtin::TemporalCusp,
        Builtin::CaloricPoly,
        Builtin::HeatKernelShift,
        Builtin::CompactBump,
        Builtin::Step,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Constant => "constant",
            Builtin::Affine => "affine",
            Builtin::SpatialCusp => "spatial_cusp",
            Builtin::TemporalCusp => "temporal_cusp",
            Builtin::CaloricPoly => "caloric_poly",
            Builtin::HeatKernelShift => "heat_kernel_shift",
            Builtin::CompactBump => "compact_bump",
            Builtin::Step => "step",
        }
    }

    pub fn needs_alpha(self) -> bool {
        matches!(self, Builtin::SpatialCusp | Builtin::TemporalCusp)
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

/// Parameters for [`builtin_family`]. Unused fields are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuiltinParams {
    pub dim: usize,
    /// Hölder exponent of the cusps.
    pub alpha: Option<f64>,
    /// Value of `constant` (default 1) or offset of `affine` (default 0).
    pub value: Option<f64>,
    /// `affine`: `value + slope·x + rate·t`; default slope `e₀`.
    pub slope: Option<Vec<f64>>,
    pub rate: f64,
    /// Singular point of `heat_kernel_shift` (default the origin).
    pub shift: Option<SpaceTimePoint>,
    /// Support cylinder of `compact_bump` (default `Q_1`).
    pub cylinder: Option<Cylinder>,
}

impl BuiltinParams {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            alpha: None,
            value: None,
            slope: None,
            rate: 0.0,
            shift: None,
            cylinder: None,
        }
    }

    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn value(mut self, value: f64) -> Self {
        self.value = Some(value);
        self
    }

    pub fn slope(mut self, slope: Vec<f64>) -> Self {
        self.slope = Some(slope);
        self
    }

    pub fn rate(mut self, rate: f64) -> Self {
        self.rate = rate;
        self
    }

    pub fn shift(mut self, shift: SpaceTimePoint) -> Self {
        self.shift = Some(shift);
        self
    }

    pub fn cylinder(mut self, cylinder: Cylinder) -> Self {
        self.cylinder = Some(cylinder);
        self
    }
}

/// Instantiates a built-in test function by name.
pub fn builtin_family(name: &str, params: &BuiltinParams) -> Result<AnalyticFn> {
    Builtin::from_str(name)?.build(params)
}

impl Builtin {
    pub fn build(self, params: &BuiltinParams) -> Result<AnalyticFn> {
        let d = params.dim;
        check_dim(d)?;
        let alpha = if self.needs_alpha() {
            let a = params
                .alpha
                .ok_or_else(|| invalid("alpha", format!("`{self}` needs an exponent")))?;
            if !(a > 0.0 && a < 1.0) {
                return Err(invalid("alpha", format!("must lie in (0, 1), got {a}")));
            }
            a
        } else {
            0.0
        };
        let origin = Some(SpaceTimePoint::origin(d));
        let f = match self {
            Builtin::Constant => {
                AnalyticFn::new(Arc::new(Affine::constant(d, params.value.unwrap_or(1.0))), "constant")
            }
            Builtin::Affine => {
                let slope = params.slope.clone().unwrap_or_else(|| {
                    let mut s = vec![0.0; d];
                    s[0] = 1.0;
                    s
                });
                if slope.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: slope.len(),
                    });
                }
                let aff = Affine {
                    value: params.value.unwrap_or(0.0),
                    slope,
                    rate: params.rate,
                };
                AnalyticFn::new(Arc::new(aff), "affine")
            }
            Builtin::SpatialCusp => AnalyticFn::new(
                Arc::new(SpatialCusp { dim: d, alpha }),
                format!("spatial_cusp({alpha})"),
            )
            .with_focus(origin),
            Builtin::TemporalCusp => AnalyticFn::new(
                Arc::new(TemporalCusp { dim: d, alpha }),
                format!("temporal_cusp({alpha})"),
            )
            .with_focus(origin),
            Builtin::CaloricPoly => {
                let mut terms: Vec<Term> = (0..d)
                    .map(|k| {
                        let mut a = [0u8; MAX_DIM];
                        a[k] = 2;
                        Term { coef: 1.0, a, b: 0.0 }
                    })
                    .collect();
                terms.push(Term {
                    coef: 2.0 * d as f64,
                    a: [0; MAX_DIM],
                    b: 1.0,
                });
                let f = TermFn::new(TermKind::Polynomial, Orientation::Forward, vec![0.0; d], 0.0, terms)?;
                AnalyticFn::new(Arc::new(f), "caloric_poly")
            }
            Builtin::HeatKernelShift => {
                let shift = params.shift.clone().unwrap_or_else(|| SpaceTimePoint::origin(d));
                if shift.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: shift.dim(),
                    });
                }
                let coef = (4.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
                let f = TermFn::new(
                    TermKind::Gaussian,
                    Orientation::Forward,
                    shift.x.clone(),
                    shift.t,
                    vec![Term {
                        coef,
                        a: [0; MAX_DIM],
                        b: -(d as f64) / 2.0,
                    }],
                )?;
                AnalyticFn::new(Arc::new(f), "heat_kernel_shift").with_focus(Some(shift))
            }
            Builtin::CompactBump => {
                let cyl = params.cylinder.clone().unwrap_or_else(|| Cylinder::unit(d));
                if cyl.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: cyl.dim(),
                    });
                }
                compact_bump(&cyl)?
            }
            Builtin::Step => AnalyticFn::new(Arc::new(Step { dim: d }), "step").with_focus(origin),
        };
        Ok(f)
    }
}

#[derive(Debug)]
struct Affine {
    value: f64,
    slope: Vec<f64>,
    rate: f64,
}

impl Affine {
    fn constant(dim: usize, value: f64) -> Self {
        Self {
            value,
            slope: vec![0.0; dim],
            rate: 0.0,
        }
    }
}

impl SpaceTimeFn for Affine {
    fn dim(&self) -> usize {
        self.slope.len()
    }
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.value + self.slope.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.rate * t
    }
    fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64> {
        let v = match (p.spatial_order(), p.t) {
            (0, 0) => self.value(x, t),
            (0, 1) => self.rate,
            (1, 0) => {
                let axis = p.x.iter().position(|&n| n == 1)?;
                self.slope[axis]
            }
            _ => 0.0,
        };
        Some(v)
    }
    fn has_partial(&self, _: Partial) -> bool {
        true
    }
}

/// `|x|^α`. Partials up to second order in space; singular at `x = 0`.
#[derive(Debug)]
struct SpatialCusp {
    dim: usize,
    alpha: f64,
}

impl SpaceTimeFn for SpatialCusp {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64], _t: f64) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt().powf(self.alpha)
    }
    fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64> {
        if p.t > 0 {
            return Some(0.0);
        }
        let a = self.alpha;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        let axes: Vec<usize> = (0..self.dim)
            .flat_map(|i| std::iter::repeat(i).take(p.x[i] as usize))
            .collect();
        match axes.as_slice() {
            [] => Some(self.value(x, t)),
            _ if r == 0.0 => Some(f64::NAN),
            [i] => Some(a * r.powf(a - 2.0) * x[*i]),
            [i, j] => {
                let delta = if i == j { 1.0 } else { 0.0 };
                Some(a * r.powf(a - 2.0) * delta + a * (a - 2.0) * r.powf(a - 4.0) * x[*i] * x[*j])
            }
            _ => None,
        }
    }
    fn has_partial(&self, p: Partial) -> bool {
        p.t > 0 || p.spatial_order() <= 2
    }
}

/// `|t|^{α/2}`.
#[derive(Debug)]
struct TemporalCusp {
    dim: usize,
    alpha: f64,
}

impl SpaceTimeFn for TemporalCusp {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _x: &[f64], t: f64) -> f64 {
        t.abs().powf(0.5 * self.alpha)
    }
    fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64> {
        if p.spatial_order() > 0 {
            return Some(0.0);
        }
        let e = 0.5 * self.alpha;
        match p.t {
            0 => Some(self.value(x, t)),
            _ if t == 0.0 => Some(f64::NAN),
            1 => Some(e * t.abs().powf(e - 1.0) * t.signum()),
            2 => Some(e * (e - 1.0) * t.abs().powf(e - 2.0)),
            _ => None,
        }
    }
    fn has_partial(&self, _: Partial) -> bool {
        true
    }
}

#[derive(Debug)]
struct Step {
    dim: usize,
}

impl SpaceTimeFn for Step {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64], t: f64) -> f64 {
        if x[0] >= 0.0 && t >= 0.0 {
            1.0
        } else {
            0.0
        }
    }
    fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64> {
        p.is_zero().then(|| self.value(x, t))
    }
    fn has_partial(&self, p: Partial) -> bool {
        p.is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p1() -> BuiltinParams {
        BuiltinParams::new(1)
    }

    #[test]
    fn documented_values() {
        let cal = builtin_family("caloric_poly", &p1()).unwrap();
        assert_eq!(cal.value(&[0.0], 0.0), 0.0);
        assert_eq!(cal.value(&[1.0], 0.5), 2.0);
        let cusp = builtin_family("spatial_cusp", &p1().alpha(0.5)).unwrap();
        assert_eq!(cusp.value(&[0.25], 0.3), 0.5);
        let tc = builtin_family("temporal_cusp", &p1().alpha(0.5)).unwrap();
        assert_eq!(tc.value(&[0.7], -0.0625), 0.5);
        let aff = builtin_family("affine", &p1()).unwrap();
        assert_eq!(aff.value(&[0.3], 9.0), 0.3);
        let c = builtin_family("constant", &p1().value(2.5)).unwrap();
        assert_eq!(c.value(&[0.3], 9.0), 2.5);
    }

    #[test]
    fn caloric_poly_satisfies_heat_equation() {
        for d in 1..=3 {
            let f = builtin_family("caloric_poly", &BuiltinParams::new(d)).unwrap();
            let x = [0.3, -0.2, 0.5];
            let lap: f64 = (0..d)
                .map(|k| f.partial(Partial::from_axes(&[k, k], 0), &x[..d], 0.1).unwrap())
                .sum();
            assert_eq!(f.partial(Partial::dt(), &x[..d], 0.1).unwrap() - lap, 0.0);
        }
    }

    #[test]
    fn rejects_unknown_names_and_bad_alpha() {
        assert!(matches!(builtin_family("nope", &p1()), Err(Error::UnknownFamily(_))));
        for a in [0.0, 1.0, -0.2, 1.5] {
            assert!(matches!(
                builtin_family("spatial_cusp", &p1().alpha(a)),
                Err(Error::InvalidParameter { .. })
            ));
        }
        assert!(builtin_family("temporal_cusp", &p1()).is_err());
    }

    #[test]
    fn cusp_partials_match_finite_differences() {
        let f = builtin_family("spatial_cusp", &BuiltinParams::new(2).alpha(0.3)).unwrap();
        let x = [0.4, -0.3];
        let h = 1e-6;
        let fd = (f.value(&[x[0] + h, x[1]], 0.0) - f.value(&[x[0] - h, x[1]], 0.0)) / (2.0 * h);
        assert!((fd - f.partial(Partial::dx(0), &x, 0.0).unwrap()).abs() < 1e-8);
        let g = builtin_family("temporal_cusp", &p1().alpha(0.7)).unwrap();
        let fd = (g.value(&[0.0], -0.3 + h) - g.value(&[0.0], -0.3 - h)) / (2.0 * h);
        assert!((fd - g.partial(Partial::dt(), &[0.0], -0.3).unwrap()).abs() < 1e-8);
    }
}
