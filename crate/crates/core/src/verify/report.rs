//! Self-contained, re-checkable experiment reports.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numfmt::sci;

/// Non-finite numbers are written as `null` and read back as NaN.
mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// How `lhs` is compared with `rhs`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `lhs ≤ rhs + tolerance`.
    Le,
    /// `lhs ≥ rhs − tolerance`.
    Ge,
    /// `|lhs − rhs| ≤ tolerance`.
    Close,
    /// `|lhs − rhs| ≤ tolerance·|rhs|`.
    RelClose,
    /// `lhs` finite (rhs and tolerance unused).
    Finite,
}

impl Relation {
    pub fn holds(self, lhs: f64, rhs: f64, tolerance: f64) -> bool {
        match self {
            Relation::Le => lhs <= rhs + tolerance,
            Relation::Ge => lhs >= rhs - tolerance,
            Relation::Close => (lhs - rhs).abs() <= tolerance,
            Relation::RelClose => (lhs - rhs).abs() <= tolerance * rhs.abs(),
            Relation::Finite => lhs.is_finite(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Le => "le",
            Relation::Ge => "ge",
            Relation::Close => "close",
            Relation::RelClose => "rel_close",
            Relation::Finite => "finite",
        }
    }
}

/// One sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub label: String,
    pub params: BTreeMap<String, f64>,
    #[serde(with = "nullable")]
    pub lhs: f64,
    #[serde(with = "nullable")]
    pub rhs: f64,
    /// `lhs / rhs` when `rhs ≠ 0`.
    pub ratio: Option<f64>,
    pub relation: Relation,
    pub tolerance: f64,
    pub pass: bool,
}

impl Measurement {
    pub fn new(label: impl Into<String>, lhs: f64, relation: Relation, rhs: f64, tolerance: f64) -> Self {
        let ratio = (rhs != 0.0 && rhs.is_finite() && lhs.is_finite()).then(|| lhs / rhs);
        Self {
            label: label.into(),
            params: BTreeMap::new(),
            lhs,
            rhs,
            ratio,
            relation,
            tolerance,
            pass: relation.holds(lhs, rhs, tolerance),
        }
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// A measurement that could not be taken (always failing).
    pub fn failed(label: impl Into<String>, rhs: f64) -> Self {
        let mut m = Self::new(label, f64::NAN, Relation::Finite, rhs, 0.0);
        m.pass = false;
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeRelation {
    /// `|slope − expected| ≤ tol`.
    Close,
    /// `slope ≥ expected − tol`.
    AtLeast,
}

/// A least-squares log-log slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slope {
    pub label: String,
    #[serde(with = "nullable")]
    pub slope: f64,
    /// Two standard errors of the slope.
    #[serde(with = "nullable")]
    pub half_width: f64,
    pub expected: f64,
    pub relation: SlopeRelation,
    pub tol: f64,
    /// The `(x, y)` points before taking logarithms.
    pub points: Vec<(f64, f64)>,
    pub pass: bool,
}

impl Slope {
    pub fn new(
        label: impl Into<String>,
        slope: f64,
        half_width: f64,
        expected: f64,
        relation: SlopeRelation,
        tol: f64,
        points: Vec<(f64, f64)>,
    ) -> Self {
        let mut s = Self {
            label: label.into(),
            slope,
            half_width,
            expected,
            relation,
            tol,
            points,
            pass: false,
        };
        s.pass = s.holds();
        s
    }

    /// A slope that could not be fitted.
    pub fn failed(label: impl Into<String>, expected: f64, tol: f64, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            slope: f64::NAN,
            half_width: f64::NAN,
            expected,
            relation: SlopeRelation::Close,
            tol,
            points,
            pass: false,
        }
    }

    fn holds(&self) -> bool {
        match self.relation {
            SlopeRelation::Close => (self.slope - self.expected).abs() <= self.tol,
            SlopeRelation::AtLeast => self.slope >= self.expected - self.tol,
        }
    }
}

/// An empirical constant: a maximum ratio and where it was attained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub label: String,
    #[serde(with = "nullable")]
    pub value: f64,
    pub witness: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub check: String,
    pub passed: bool,
    pub measurements: Vec<Measurement>,
    pub slopes: Vec<Slope>,
    pub constants: Vec<Constant>,
    pub notes: Vec<String>,
}

impl VerifyReport {
    pub fn new(check: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            passed: true,
            measurements: Vec::new(),
            slopes: Vec::new(),
            constants: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, m: Measurement) {
        self.passed &= m.pass;
        self.measurements.push(m);
    }

    pub fn push_slope(&mut self, s: Slope) {
        self.passed &= s.pass;
        self.slopes.push(s);
    }

    pub fn push_constant(&mut self, label: impl Into<String>, value: f64, witness: &[(&str, f64)]) {
        self.constants.push(Constant {
            label: label.into(),
            value,
            witness: witness.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Recomputes every verdict from the stored numbers; `true` iff the
    /// stored verdicts are consistent and the recomputed overall verdict
    /// equals `passed`.
    pub fn recheck(&self) -> bool {
        let mut all = true;
        for m in &self.measurements {
            let ok = m.relation.holds(m.lhs, m.rhs, m.tolerance);
            if ok != m.pass {
                return false;
            }
            all &= ok;
        }
        for s in &self.slopes {
            let ok = s.holds();
            if ok != s.pass {
                return false;
            }
            all &= ok;
        }
        all == self.passed
    }

    /// Failing measurement and slope labels.
    pub fn failures(&self) -> Vec<String> {
        self.measurements
            .iter()
            .filter(|m| !m.pass)
            .map(|m| m.label.clone())
            .chain(self.slopes.iter().filter(|s| !s.pass).map(|s| s.label.clone()))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One row per measurement, then one per slope (`lhs` = fitted slope,
    /// `rhs` = expected slope). Numbers use `%.16e`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "check",
            "label",
            "params",
            "lhs",
            "rhs",
            "ratio",
            "relation",
            "tolerance",
            "pass",
        ])?;
        for m in &self.measurements {
            let params = m
                .params
                .iter()
                .map(|(k, v)| format!("{k}={}", sci(*v)))
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                self.check.as_str(),
                &m.label,
                &params,
                &sci(m.lhs),
                &sci(m.rhs),
                &m.ratio.map(sci).unwrap_or_default(),
                m.relation.name(),
                &sci(m.tolerance),
                if m.pass { "true" } else { "false" },
            ])?;
        }
        for s in &self.slopes {
            let relation = match s.relation {
                SlopeRelation::Close => "slope_close",
                SlopeRelation::AtLeast => "slope_at_least",
            };
            w.write_record([
                self.check.as_str(),
                &s.label,
                "",
                &sci(s.slope),
                &sci(s.expected),
                "",
                relation,
                &sci(s.tol),
                if s.pass { "true" } else { "false" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relations() {
        assert!(Relation::Le.holds(1.0, 1.0, 0.0));
        assert!(!Relation::Le.holds(1.1, 1.0, 0.05));
        assert!(Relation::Ge.holds(0.96, 1.0, 0.05));
        assert!(Relation::RelClose.holds(4.003, 4.0, 1e-3));
        assert!(!Relation::Finite.holds(f64::NAN, 0.0, 0.0));
    }

    #[test]
    fn recheck_detects_tampering() {
        let mut r = VerifyReport::new("demo");
        r.push(Measurement::new("a", 1.0, Relation::Le, 2.0, 0.0).param("tau", 0.1));
        r.push_slope(Slope::new("s", -0.5, 0.01, -0.5, SlopeRelation::Close, 0.05, vec![]));
        assert!(r.passed && r.recheck());
        let json = r.to_json().unwrap();
        let mut back: VerifyReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        back.measurements[0].lhs = 3.0;
        assert!(!back.recheck());
    }

    #[test]
    fn failed_entries_round_trip() {
        let mut r = VerifyReport::new("demo");
        r.push(Measurement::failed("missing", 1.0));
        r.push_slope(Slope::failed("divergent", 0.0, 0.01, vec![]));
        assert!(!r.passed);
        let back: VerifyReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert!(back.measurements[0].lhs.is_nan());
        assert!(back.recheck());
    }

    #[test]
    fn csv_layout() {
        let mut r = VerifyReport::new("demo");
        r.push(Measurement::new("a", 1.0, Relation::Le, 2.0, 0.0).param("tau", 0.5));
        let text = r.to_csv().unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "check,label,params,lhs,rhs,ratio,relation,tolerance,pass"
        );
        assert_eq!(
            lines.next().unwrap(),
            "demo,a,tau=5.0000000000000000e-01,1.0000000000000000e+00,2.0000000000000000e+00,5.0000000000000000e-01,le,0.0000000000000000e+00,true"
        );
    }
}
