//! Finite sums of terms `c · y^a · σ^b · E` with `y = x − x₀`, `σ = ±(t − t₀)`
//! and `E = exp(−|y|²/(4σ))` (or no exponential). The class is closed
//! under differentiation, which gives exact partials for heat kernels,
//! caloric polynomials and the homogeneous pieces of the manufactured
//! solutions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::analytic::{Partial, SpaceTimeFn};
use super::MAX_DIM;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    /// Polynomial in `(y, σ)`; `b` must be a non-negative integer.
    Polynomial,
    /// Gaussian factor present; the term vanishes for `σ ≤ 0`.
    Gaussian,
}

/// `σ = t − t₀` (forward) or `σ = t₀ − t` (backward).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Forward,
    Backward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub a: [u8; MAX_DIM],
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermFn {
    pub kind: TermKind,
    pub orientation: Orientation,
    pub anchor_x: Vec<f64>,
    pub anchor_t: f64,
    pub terms: Vec<Term>,
    #[serde(skip)]
    derived: BTreeMap<Partial, Vec<Term>>,
}

impl TermFn {
    pub fn new(
        kind: TermKind,
        orientation: Orientation,
        anchor_x: Vec<f64>,
        anchor_t: f64,
        terms: Vec<Term>,
    ) -> Result<Self> {
        super::check_dim(anchor_x.len())?;
        let d = anchor_x.len();
        for term in &terms {
            if term.a[d..].iter().any(|&n| n != 0) {
                return Err(invalid("terms", "exponent on an axis beyond the dimension"));
            }
            if kind == TermKind::Polynomial && (term.b < 0.0 || term.b.fract() != 0.0) {
                return Err(invalid("terms", "polynomial terms need integer powers of sigma"));
            }
        }
        let mut f = Self {
            kind,
            orientation,
            anchor_x,
            anchor_t,
            terms,
            derived: BTreeMap::new(),
        };
        f.precompute();
        Ok(f)
    }

    fn precompute(&mut self) {
        let d = self.anchor_x.len();
        let mut map = BTreeMap::new();
        for p in Partial::all(d) {
            let mut list = self.terms.clone();
            for axis in 0..d {
                for _ in 0..p.x[axis] {
                    list = self.d_axis(&list, axis);
                }
            }
            for _ in 0..p.t {
                list = self.d_time(&list);
            }
            map.insert(p, list);
        }
        self.derived = map;
    }

    fn gaussian(&self) -> bool {
        self.kind == TermKind::Gaussian
    }

    fn d_axis(&self, list: &[Term], axis: usize) -> Vec<Term> {
        let mut out = Vec::new();
        for term in list {
            let n = term.a[axis];
            if n > 0 {
                let mut a = term.a;
                a[axis] -= 1;
                out.push(Term {
                    coef: term.coef * n as f64,
                    a,
                    b: term.b,
                });
            }
            if self.gaussian() {
                let mut a = term.a;
                a[axis] += 1;
                out.push(Term {
                    coef: -0.5 * term.coef,
                    a,
                    b: term.b - 1.0,
                });
            }
        }
        combine(out)
    }

    fn d_time(&self, list: &[Term]) -> Vec<Term> {
        let sign = match self.orientation {
            Orientation::Forward => 1.0,
            Orientation::Backward => -1.0,
        };
        let d = self.anchor_x.len();
        let mut out = Vec::new();
        for term in list {
            if term.b != 0.0 {
                out.push(Term {
                    coef: sign * term.coef * term.b,
                    a: term.a,
                    b: term.b - 1.0,
                });
            }
            if self.gaussian() {
                for axis in 0..d {
                    let mut a = term.a;
                    a[axis] += 2;
                    out.push(Term {
                        coef: sign * 0.25 * term.coef,
                        a,
                        b: term.b - 2.0,
                    });
                }
            }
        }
        combine(out)
    }

    fn sigma(&self, t: f64) -> f64 {
        match self.orientation {
            Orientation::Forward => t - self.anchor_t,
            Orientation::Backward => self.anchor_t - t,
        }
    }

    fn eval_terms(&self, list: &[Term], x: &[f64], t: f64) -> f64 {
        let sigma = self.sigma(t);
        let d = self.anchor_x.len();
        let mut y = [0.0; MAX_DIM];
        for k in 0..d {
            y[k] = x[k] - self.anchor_x[k];
        }
        if self.gaussian() {
            if !(sigma > 0.0) {
                return 0.0;
            }
            let r2: f64 = y[..d].iter().map(|v| v * v).sum();
            let expo = -r2 / (4.0 * sigma);
            let ls = sigma.ln();
            let mut acc = 0.0;
            for term in list {
                // log-space keeps σ^b·E finite where σ^b alone would overflow
                let mut logmag = term.b * ls + expo;
                let mut sign = term.coef.signum();
                let mut zero = false;
                for k in 0..d {
                    let n = term.a[k];
                    if n > 0 {
                        if y[k] == 0.0 {
                            zero = true;
                            break;
                        }
                        logmag += n as f64 * y[k].abs().ln();
                        if y[k] < 0.0 && n % 2 == 1 {
                            sign = -sign;
                        }
                    }
                }
                if !zero {
                    acc += sign * term.coef.abs() * logmag.exp();
                }
            }
            acc
        } else {
            list.iter()
                .map(|term| {
                    let mut v = term.coef * sigma.powi(term.b as i32);
                    for k in 0..d {
                        v *= y[k].powi(term.a[k] as i32);
                    }
                    v
                })
                .sum()
        }
    }
}

fn combine(list: Vec<Term>) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::with_capacity(list.len());
    for term in list {
        if let Some(existing) = out.iter_mut().find(|e| e.a == term.a && e.b == term.b) {
            existing.coef += term.coef;
        } else {
            out.push(term);
        }
    }
    out.retain(|t| t.coef != 0.0);
    out
}

impl SpaceTimeFn for TermFn {
    fn dim(&self) -> usize {
        self.anchor_x.len()
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.eval_terms(&self.terms, x, t)
    }

    fn partial(&self, p: Partial, x: &[f64], t: f64) -> Option<f64> {
        self.derived.get(&p).map(|list| self.eval_terms(list, x, t))
    }

    fn has_partial(&self, p: Partial) -> bool {
        self.derived.contains_key(&p)
    }
}
