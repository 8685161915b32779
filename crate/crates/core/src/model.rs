//! Grounded deep hinge-loss Markov random fields.
//!
//! A model is stored fully grounded: every potential and hard constraint is an
//! explicit sparse affine expression over three input vectors,
//!
//! ```text
//!     a_y . y + a_x . x_sy + a_g . g + b
//! ```
//!
//! where `y` are the targets being inferred, `x_sy` are observed symbolic
//! inputs and `g` are neural outputs. A hinge potential is
//! `max(expr, 0)^p` with `p` in `{1, 2}`, and a hard constraint requires
//! `expr <= 0`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse coefficient vector, index -> coefficient.
pub type SparseCoeffs = BTreeMap<usize, f64>;

/// Default tolerance used by [`GroundedModel::is_feasible`] callers.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-9;

/// Target assignment with every entry in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetVector(Vec<f64>);

impl TargetVector {
    /// Builds a target vector, clamping each entry into `[0, 1]`.
    pub fn clamped(values: impl IntoIterator<Item = f64>) -> Self {
        TargetVector(values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for TargetVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HingePotential {
    #[serde(rename = "y", default)]
    pub y_coeffs: SparseCoeffs,
    #[serde(rename = "x", default)]
    pub x_coeffs: SparseCoeffs,
    #[serde(rename = "g", default)]
    pub g_coeffs: SparseCoeffs,
    #[serde(rename = "b", default)]
    pub constant: f64,
    #[serde(rename = "p")]
    pub exponent: u32,
    #[serde(default)]
    pub partition: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardConstraint {
    #[serde(rename = "y", default)]
    pub y_coeffs: SparseCoeffs,
    #[serde(rename = "x", default)]
    pub x_coeffs: SparseCoeffs,
    #[serde(rename = "g", default)]
    pub g_coeffs: SparseCoeffs,
    #[serde(rename = "b", default)]
    pub constant: f64,
}

fn dot_sparse(coeffs: &SparseCoeffs, values: &[f64], what: &'static str) -> Result<f64> {
    let mut acc = 0.0;
    for (&index, &coeff) in coeffs {
        let v = values.get(index).ok_or(Error::IndexOutOfRange {
            what,
            index,
            dim: values.len(),
        })?;
        acc += coeff * v;
    }
    Ok(acc)
}

fn affine(
    y_coeffs: &SparseCoeffs,
    x_coeffs: &SparseCoeffs,
    g_coeffs: &SparseCoeffs,
    constant: f64,
    y: &[f64],
    x: &[f64],
    g: &[f64],
) -> Result<f64> {
    Ok(dot_sparse(y_coeffs, y, "target")?
        + dot_sparse(x_coeffs, x, "symbolic input")?
        + dot_sparse(g_coeffs, g, "neural slot")?
        + constant)
}

impl HingePotential {
    /// Builds a potential over targets only.
    pub fn over_targets(
        y_coeffs: impl IntoIterator<Item = (usize, f64)>,
        constant: f64,
        exponent: u32,
        partition: usize,
    ) -> Self {
        HingePotential {
            y_coeffs: y_coeffs.into_iter().collect(),
            x_coeffs: SparseCoeffs::new(),
            g_coeffs: SparseCoeffs::new(),
            constant,
            exponent,
            partition,
        }
    }

    /// The affine argument of the hinge.
    pub fn linear_value(&self, y: &[f64], x: &[f64], g: &[f64]) -> Result<f64> {
        affine(
            &self.y_coeffs,
            &self.x_coeffs,
            &self.g_coeffs,
            self.constant,
            y,
            x,
            g,
        )
    }

    /// `max(a_y.y + a_x.x + a_g.g + b, 0)^p`.
    pub fn value(&self, y: &[f64], x: &[f64], g: &[f64]) -> Result<f64> {
        let hinge = self.linear_value(y, x, g)?.max(0.0);
        Ok(if self.exponent == 2 { hinge * hinge } else { hinge })
    }

    pub fn is_squared(&self) -> bool {
        self.exponent == 2
    }
}

impl HardConstraint {
    pub fn over_targets(y_coeffs: impl IntoIterator<Item = (usize, f64)>, constant: f64) -> Self {
        HardConstraint {
            y_coeffs: y_coeffs.into_iter().collect(),
            x_coeffs: SparseCoeffs::new(),
            g_coeffs: SparseCoeffs::new(),
            constant,
        }
    }

    /// Left-hand side of `expr <= 0`.
    pub fn linear_value(&self, y: &[f64], x: &[f64], g: &[f64]) -> Result<f64> {
        affine(
            &self.y_coeffs,
            &self.x_coeffs,
            &self.g_coeffs,
            self.constant,
            y,
            x,
            g,
        )
    }
}

/// Where a validation problem was found.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Model,
    Potential(usize),
    Constraint(usize),
    Partition(usize),
    Input(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Model => write!(f, "model"),
            Location::Potential(i) => write!(f, "potential {i}"),
            Location::Constraint(i) => write!(f, "constraint {i}"),
            Location::Partition(i) => write!(f, "partition {i}"),
            Location::Input(i) => write!(f, "symbolic input {i}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub location: Location,
    pub message: String,
}

impl Violation {
    fn new(location: Location, message: impl Into<String>) -> Self {
        Violation {
            location,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}", self.message, self.location)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundedModel {
    pub n_y: usize,
    #[serde(default)]
    pub x_sy: Vec<f64>,
    #[serde(default)]
    pub n_g: usize,
    pub r: usize,
    pub w_sy: Vec<f64>,
    #[serde(default)]
    pub potentials: Vec<HingePotential>,
    #[serde(default)]
    pub constraints: Vec<HardConstraint>,
}

impl GroundedModel {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()? + "\n")?;
        Ok(())
    }

    pub fn n_x(&self) -> usize {
        self.x_sy.len()
    }

    /// Returns every invariant violation. An empty list means the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.w_sy.len() != self.r {
            out.push(Violation::new(
                Location::Model,
                format!("{} symbolic weights for {} partitions", self.w_sy.len(), self.r),
            ));
        }
        for (i, &w) in self.w_sy.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                out.push(Violation::new(
                    Location::Partition(i),
                    format!("negative symbolic weight ({w})"),
                ));
            }
        }
        for (i, &x) in self.x_sy.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                out.push(Violation::new(
                    Location::Input(i),
                    format!("symbolic input {x} outside [0, 1]"),
                ));
            }
        }

        let mut covered = vec![false; self.r];
        for (k, phi) in self.potentials.iter().enumerate() {
            let loc = Location::Potential(k);
            if phi.exponent != 1 && phi.exponent != 2 {
                out.push(Violation::new(
                    loc,
                    format!("exponent {} is not 1 or 2", phi.exponent),
                ));
            }
            match covered.get_mut(phi.partition) {
                Some(c) => *c = true,
                None => out.push(Violation::new(
                    loc,
                    format!("partition {} out of range (r = {})", phi.partition, self.r),
                )),
            }
            if phi.y_coeffs.is_empty() && phi.x_coeffs.is_empty() && phi.g_coeffs.is_empty() {
                out.push(Violation::new(loc, "potential has no coefficients"));
            }
            self.check_indices(loc, &phi.y_coeffs, &phi.x_coeffs, &phi.g_coeffs, &mut out);
            if !phi.constant.is_finite() {
                out.push(Violation::new(loc, "non-finite constant"));
            }
        }
        for (p, c) in covered.iter().enumerate() {
            if !c {
                out.push(Violation::new(
                    Location::Partition(p),
                    "partition is not referenced by any potential",
                ));
            }
        }

        for (k, con) in self.constraints.iter().enumerate() {
            let loc = Location::Constraint(k);
            if !con.y_coeffs.values().any(|&a| a != 0.0) {
                out.push(Violation::new(loc, "constraint has no nonzero target coefficient"));
            }
            self.check_indices(loc, &con.y_coeffs, &con.x_coeffs, &con.g_coeffs, &mut out);
            if !con.constant.is_finite() {
                out.push(Violation::new(loc, "non-finite constant"));
            }
        }
        out
    }

    /// Like [`validate`](Self::validate) but as a `Result`.
    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    fn check_indices(
        &self,
        loc: Location,
        y: &SparseCoeffs,
        x: &SparseCoeffs,
        g: &SparseCoeffs,
        out: &mut Vec<Violation>,
    ) {
        let groups = [
            ("target", y, self.n_y),
            ("symbolic input", x, self.n_x()),
            ("neural slot", g, self.n_g),
        ];
        for (what, coeffs, dim) in groups {
            for (&index, &a) in coeffs {
                if index >= dim {
                    out.push(Violation::new(
                        loc,
                        format!("{what} index {index} out of range (dimension {dim})"),
                    ));
                }
                if !a.is_finite() {
                    out.push(Violation::new(loc, format!("non-finite {what} coefficient")));
                }
            }
        }
    }

    fn check_dims(&self, y: &[f64], g: &[f64]) -> Result<()> {
        if y.len() != self.n_y {
            return Err(Error::DimensionMismatch {
                what: "targets",
                expected: self.n_y,
                found: y.len(),
            });
        }
        if g.len() != self.n_g {
            return Err(Error::DimensionMismatch {
                what: "neural outputs",
                expected: self.n_g,
                found: g.len(),
            });
        }
        Ok(())
    }

    /// Value of potential `k` at `(y, x_sy, g)`.
    pub fn potential_value(&self, k: usize, y: &[f64], g: &[f64]) -> Result<f64> {
        self.potentials[k].value(y, &self.x_sy, g)
    }

    /// Partition-aggregated potentials `Phi(y, x_sy, g)`, one entry per partition.
    pub fn potential_vector(&self, y: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(y, g)?;
        let mut phi = vec![0.0; self.r];
        for pot in &self.potentials {
            let slot = phi.get_mut(pot.partition).ok_or(Error::IndexOutOfRange {
                what: "partition",
                index: pot.partition,
                dim: self.r,
            })?;
            *slot += pot.value(y, &self.x_sy, g)?;
        }
        Ok(phi)
    }

    /// `w_sy . Phi(y, x_sy, g)`.
    pub fn energy(&self, y: &[f64], g: &[f64]) -> Result<f64> {
        self.energy_with_weights(&self.w_sy, y, g)
    }

    pub fn energy_with_weights(&self, w_sy: &[f64], y: &[f64], g: &[f64]) -> Result<f64> {
        if w_sy.len() != self.r {
            return Err(Error::DimensionMismatch {
                what: "symbolic weights",
                expected: self.r,
                found: w_sy.len(),
            });
        }
        let phi = self.potential_vector(y, g)?;
        Ok(w_sy.iter().zip(&phi).map(|(w, p)| w * p).sum())
    }

    /// Largest violation of the box and the hard constraints at `y`.
    pub fn max_violation(&self, y: &[f64], g: &[f64]) -> Result<f64> {
        self.check_dims(y, g)?;
        let mut worst: f64 = 0.0;
        for &v in y {
            worst = worst.max(-v).max(v - 1.0);
        }
        for con in &self.constraints {
            worst = worst.max(con.linear_value(y, &self.x_sy, g)?);
        }
        Ok(worst)
    }

    /// True iff `y` lies in the feasible set within `tol`.
    pub fn is_feasible(&self, y: &[f64], g: &[f64], tol: f64) -> bool {
        matches!(self.max_violation(y, g), Ok(v) if v <= tol)
    }

    /// Copy of the model with different symbolic inputs.
    pub fn with_inputs(&self, x_sy: &[f64]) -> GroundedModel {
        GroundedModel {
            x_sy: x_sy.to_vec(),
            ..self.clone()
        }
    }

    /// Copy of the model with different symbolic weights.
    pub fn with_weights(&self, w_sy: &[f64]) -> GroundedModel {
        GroundedModel {
            w_sy: w_sy.to_vec(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(exponent: u32, w: f64) -> GroundedModel {
        GroundedModel {
            n_y: 1,
            x_sy: vec![],
            n_g: 0,
            r: 1,
            w_sy: vec![w],
            potentials: vec![HingePotential::over_targets([(0, 1.0)], -0.5, exponent, 0)],
            constraints: vec![],
        }
    }

    #[test]
    fn negative_weight_is_reported() {
        let m = single(1, -1.0);
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].location, Location::Partition(0));
        assert_eq!(v[0].to_string(), "negative symbolic weight (-1) at partition 0");
    }

    #[test]
    fn bad_exponent_names_potential() {
        let m = single(3, 1.0);
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].location, Location::Potential(0));
    }

    #[test]
    fn well_formed_model_is_ok() {
        assert!(single(1, 1.0).validate().is_empty());
    }

    #[test]
    fn out_of_range_indices_and_inputs() {
        let mut m = single(1, 1.0);
        m.potentials[0].y_coeffs.insert(4, 1.0);
        m.x_sy = vec![1.5];
        m.constraints.push(HardConstraint::over_targets([(0, 0.0)], 0.0));
        let v = m.validate();
        assert_eq!(v.len(), 3, "{v:?}");
    }

    #[test]
    fn uncovered_partition() {
        let mut m = single(1, 1.0);
        m.r = 2;
        m.w_sy.push(0.5);
        let v = m.validate();
        assert_eq!(v, vec![Violation::new(Location::Partition(1), "partition is not referenced by any potential")]);
    }

    #[test]
    fn potential_values() {
        let m = single(1, 1.0);
        assert!((m.potential_value(0, &[0.8], &[]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(m.potential_value(0, &[0.2], &[]).unwrap(), 0.0);
        let sq = single(2, 1.0);
        assert!((sq.potential_value(0, &[0.8], &[]).unwrap() - 0.09).abs() < 1e-15);
    }

    #[test]
    fn potential_value_names_bad_index() {
        let mut m = single(1, 1.0);
        m.potentials[0].y_coeffs.insert(3, 1.0);
        match m.potentials[0].value(&[0.1], &[], &[]) {
            Err(Error::IndexOutOfRange { index, .. }) => assert_eq!(index, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            m.energy(&[0.1, 0.2], &[]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn energy_examples() {
        let m = single(1, 2.0);
        assert!((m.energy(&[0.8], &[]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(single(1, 0.0).energy(&[0.8], &[]).unwrap(), 0.0);

        let mut two = single(1, 1.0);
        two.potentials.push(HingePotential::over_targets([(0, 1.0)], -0.7, 1, 0));
        assert!((two.energy(&[0.8], &[]).unwrap() - 0.4).abs() < 1e-15);
        let phi = two.potential_vector(&[0.8], &[]).unwrap();
        assert_eq!(phi.len(), 1);
        assert!((phi[0] - 0.4).abs() < 1e-15);
        let reweighted = two.with_weights(&[7.0]);
        assert_eq!(reweighted.potential_vector(&[0.8], &[]).unwrap(), phi);
    }

    #[test]
    fn inactive_partitions_are_zero() {
        let m = GroundedModel {
            n_y: 2,
            x_sy: vec![],
            n_g: 0,
            r: 2,
            w_sy: vec![1.0, 1.0],
            potentials: vec![
                HingePotential::over_targets([(0, 1.0)], -1.0, 1, 0),
                HingePotential::over_targets([(1, -1.0)], 0.0, 2, 1),
            ],
            constraints: vec![],
        };
        assert_eq!(m.potential_vector(&[0.5, 0.5], &[]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn feasibility() {
        let mut m = single(1, 1.0);
        assert!(m.is_feasible(&[0.5], &[], 1e-9));
        m.constraints.push(HardConstraint::over_targets([(0, 1.0)], -0.3));
        assert!(!m.is_feasible(&[0.5], &[], 1e-9));
        assert!(m.is_feasible(&[0.3], &[], 1e-9));
        assert!(!m.is_feasible(&[1.1], &[], 1e-9));
    }

    #[test]
    fn json_round_trip_uses_documented_field_names() {
        let mut m = single(2, 0.25);
        m.n_g = 1;
        m.potentials[0].g_coeffs.insert(0, -1.0);
        let text = m.to_json_string().unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["potentials"][0]["y"]["0"], 1.0);
        assert_eq!(value["potentials"][0]["p"], 2);
        assert_eq!(value["potentials"][0]["b"], -0.5);
        assert_eq!(GroundedModel::from_json_str(&text).unwrap(), m);
    }
}
