//! Constrained pseudo-Boolean problems in canonical vector form.
//!
//! A problem maximizes `F(X) = (sum a_i x_i) * F_Q(X)` subject to linear
//! rows `sum b_ik x_i <= B_k` and optional at-most-one groups. Selection
//! problems written over an `N x V` matrix of variables are flattened
//! row-major, so element `i` in variant `j` becomes index `i * V + j` and
//! each element contributes one group of length `V`.
//!
//! Constraint violations are scored by the ratio rule: a violated row
//! contributes `lhs / B_k`, a violated group contributes its ones count
//! (ratio against bound 1). Rows with `B_k <= 0` cannot use a ratio, so a
//! violation there scores `1 + (lhs - B_k)`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Error, Result};

/// One linear row `sum b_i x_i <= bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub row: Vec<f64>,
    pub bound: f64,
}

/// An at-most-one block of consecutive variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub start: usize,
    pub len: usize,
}

impl Group {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    #[default]
    Maximize,
    Minimize,
}

/// Which side of the idle-capacity fraction is reported.
///
/// The raw fraction `sum_j min(load_j, c_j) / sum_j c_j` is the occupied
/// share of channel capacity. `Idle` reports `1 - occupied`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Occupied,
    Idle,
}

pub type CustomCriterion = Arc<dyn Fn(&Bits) -> f64 + Send + Sync>;

/// The multiplicative second factor `F_Q(X)`.
#[derive(Clone, Default)]
pub enum SecondCriterion {
    /// Pure linear objective (`F_Q = 1`).
    #[default]
    Identity,
    /// Channel load balance over an `N classes x V channels` assignment.
    IdleCapacity {
        loads: Vec<f64>,
        capacities: Vec<f64>,
        orientation: Orientation,
    },
    /// A fixed factor.
    Constant(f64),
    /// Arbitrary in-process evaluator; not serializable.
    Custom(CustomCriterion),
}

impl fmt::Debug for SecondCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SecondCriterion::Identity => f.write_str("Identity"),
            SecondCriterion::IdleCapacity {
                loads,
                capacities,
                orientation,
            } => f
                .debug_struct("IdleCapacity")
                .field("loads", loads)
                .field("capacities", capacities)
                .field("orientation", orientation)
                .finish(),
            SecondCriterion::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            SecondCriterion::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A sampled vector with its objective, penalty and modified objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub x: Bits,
    pub f: f64,
    pub f_p: f64,
    pub f_m: f64,
}

impl Candidate {
    pub fn is_feasible(&self) -> bool {
        self.f_p == 0.0
    }
}

/// Scores of one vector without the vector itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub f: f64,
    pub f_p: f64,
    pub f_m: f64,
}

/// Violation contribution of one row with left-hand side `lhs`.
#[inline]
pub fn violation_score(lhs: f64, bound: f64) -> f64 {
    if lhs <= bound {
        0.0
    } else if bound > 0.0 {
        lhs / bound
    } else {
        1.0 + (lhs - bound)
    }
}

/// `sum_j min(sum_i load_i x_ij, c_j) / sum_j c_j` for a row-major
/// `loads.len() x capacities.len()` assignment.
pub fn idle_capacity_criterion(loads: &[f64], assignment: &Bits, capacities: &[f64]) -> Result<f64> {
    let channels = capacities.len();
    let expected = loads.len() * channels;
    if assignment.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: assignment.len(),
        });
    }
    if capacities.iter().any(|&c| c <= 0.0) {
        return Err(Error::invalid("channel capacities must be positive"));
    }
    let total: f64 = capacities.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("total channel capacity is zero"));
    }
    Ok(occupied_fraction(loads, assignment, capacities, total))
}

fn occupied_fraction(loads: &[f64], x: &Bits, capacities: &[f64], total: f64) -> f64 {
    let channels = capacities.len();
    let mut per_channel = vec![0.0; channels];
    for i in x.iter_ones() {
        per_channel[i % channels] += loads[i / channels];
    }
    per_channel
        .iter()
        .zip(capacities)
        .map(|(&load, &cap)| load.min(cap))
        .sum::<f64>()
        / total
}

/// A validated problem in canonical (maximize) form.
///
/// Immutable after construction; evaluation takes `&self` only.
#[derive(Clone, Debug)]
pub struct Problem {
    dim: usize,
    a: Vec<f64>,
    constraints: Vec<Constraint>,
    groups: Vec<Group>,
    criterion: SecondCriterion,
    sense: Sense,
    // b_ik laid out column-major: columns[i * K + k].
    columns: Vec<f64>,
}

impl Problem {
    pub fn builder(a: Vec<f64>) -> ProblemBuilder {
        ProblemBuilder {
            a,
            constraints: Vec::new(),
            groups: Vec::new(),
            criterion: SecondCriterion::Identity,
            sense: Sense::Maximize,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Canonical (maximize-sense) linear coefficients.
    pub fn linear_coeffs(&self) -> &[f64] {
        &self.a
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn criterion(&self) -> &SecondCriterion {
        &self.criterion
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Common group length `V`, if groups exist.
    pub fn variants(&self) -> Option<usize> {
        self.groups.first().map(|g| g.len)
    }

    /// Maps a canonical objective value back to the ingested sense.
    pub fn reported_value(&self, f: f64) -> f64 {
        match self.sense {
            Sense::Maximize => f,
            Sense::Minimize => -f,
        }
    }

    fn check_len(&self, x: &Bits) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn second_factor(&self, x: &Bits) -> f64 {
        match &self.criterion {
            SecondCriterion::Identity => 1.0,
            SecondCriterion::Constant(c) => *c,
            SecondCriterion::Custom(func) => func(x),
            SecondCriterion::IdleCapacity {
                loads,
                capacities,
                orientation,
            } => {
                let total: f64 = capacities.iter().sum();
                let occupied = occupied_fraction(loads, x, capacities, total);
                match orientation {
                    Orientation::Occupied => occupied,
                    Orientation::Idle => 1.0 - occupied,
                }
            }
        }
    }

    /// `F(X)`: the linear sum times the second criterion.
    pub fn evaluate_objective(&self, x: &Bits) -> Result<f64> {
        self.check_len(x)?;
        let linear: f64 = x.iter_ones().map(|i| self.a[i]).sum();
        Ok(linear * self.second_factor(x))
    }

    /// Left-hand sides of every linear row.
    pub fn constraint_lhs(&self, x: &Bits) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let mut lhs = vec![0.0; self.constraints.len()];
        self.accumulate(x, &mut lhs);
        Ok(lhs)
    }

    #[inline]
    fn accumulate(&self, x: &Bits, lhs: &mut [f64]) -> f64 {
        let k = lhs.len();
        let mut linear = 0.0;
        for i in x.iter_ones() {
            linear += self.a[i];
            let col = &self.columns[i * k..(i + 1) * k];
            for (acc, b) in lhs.iter_mut().zip(col) {
                *acc += b;
            }
        }
        linear
    }

    fn violation_sum(&self, x: &Bits, lhs: &[f64]) -> f64 {
        let rows: f64 = lhs
            .iter()
            .zip(&self.constraints)
            .map(|(&l, c)| violation_score(l, c.bound))
            .sum();
        let groups: f64 = self
            .groups
            .iter()
            .map(|g| violation_score(x.count_ones_in(g.range()) as f64, 1.0))
            .sum();
        rows + groups
    }

    /// `f^P = c_penalty * sum_k F_Pk(X)` including group rows.
    pub fn evaluate_penalty(&self, x: &Bits, c_penalty: f64) -> Result<f64> {
        if !(c_penalty > 0.0) {
            return Err(Error::invalid("penalty coefficient must be positive"));
        }
        let lhs = self.constraint_lhs(x)?;
        Ok(c_penalty * self.violation_sum(x, &lhs))
    }

    /// Objective, penalty and `f^M = f - f^P` in a single pass.
    pub fn score(&self, x: &Bits, c_penalty: f64) -> Result<Scores> {
        self.check_len(x)?;
        if !(c_penalty > 0.0) {
            return Err(Error::invalid("penalty coefficient must be positive"));
        }
        Ok(self.score_unchecked(x, c_penalty))
    }

    /// [`Self::score`] for callers that already guarantee the length and a
    /// positive coefficient.
    pub(crate) fn score_unchecked(&self, x: &Bits, c_penalty: f64) -> Scores {
        let mut lhs = vec![0.0; self.constraints.len()];
        let linear = self.accumulate(x, &mut lhs);
        let f = linear * self.second_factor(x);
        let f_p = c_penalty * self.violation_sum(x, &lhs);
        Scores { f, f_p, f_m: f - f_p }
    }

    pub fn evaluate_modified(&self, x: &Bits, c_penalty: f64) -> Result<Candidate> {
        let s = self.score(x, c_penalty)?;
        Ok(Candidate {
            x: x.clone(),
            f: s.f,
            f_p: s.f_p,
            f_m: s.f_m,
        })
    }

    pub fn is_feasible(&self, x: &Bits) -> Result<bool> {
        let lhs = self.constraint_lhs(x)?;
        Ok(self.violation_sum(x, &lhs) == 0.0)
    }

    /// `sum |a_i|`, the linear-objective estimate of the penalty weight.
    pub fn default_penalty_coefficient(&self) -> f64 {
        self.a.iter().map(|a| a.abs()).sum()
    }

    /// [`Self::default_penalty_coefficient`] with a fallback of 1 for an
    /// all-zero objective.
    pub fn penalty_coefficient(&self) -> f64 {
        let c = self.default_penalty_coefficient();
        if c > 0.0 {
            c
        } else {
            1.0
        }
    }

    pub fn to_doc(&self) -> Result<ProblemDoc> {
        let sign = match self.sense {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        };
        let mut doc = ProblemDoc {
            dim: Some(self.dim),
            a: Coeffs::Flat(self.a.iter().map(|a| sign * a).collect()),
            constraints: self
                .constraints
                .iter()
                .map(|c| ConstraintDoc {
                    b: Coeffs::Flat(c.row.clone()),
                    bound: c.bound,
                })
                .collect(),
            groups: Some(self.groups.clone()),
            criterion: CriterionKind::Linear,
            capacities: None,
            loads: None,
            orientation: None,
            factor: None,
            sense: self.sense,
            meta: None,
        };
        match &self.criterion {
            SecondCriterion::Identity => {}
            SecondCriterion::IdleCapacity {
                loads,
                capacities,
                orientation,
            } => {
                doc.criterion = CriterionKind::IdleCapacity;
                doc.loads = Some(loads.clone());
                doc.capacities = Some(capacities.clone());
                doc.orientation = Some(*orientation);
            }
            SecondCriterion::Constant(c) => {
                doc.criterion = CriterionKind::Constant;
                doc.factor = Some(*c);
            }
            SecondCriterion::Custom(_) => {
                return Err(Error::invalid("custom criteria cannot be serialized"))
            }
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc()?)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ProblemDoc = serde_json::from_str(text)?;
        doc.into_problem()
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub struct ProblemBuilder {
    a: Vec<f64>,
    constraints: Vec<Constraint>,
    groups: Vec<Group>,
    criterion: SecondCriterion,
    sense: Sense,
}

impl ProblemBuilder {
    pub fn constraint(mut self, row: Vec<f64>, bound: f64) -> Self {
        self.constraints.push(Constraint { row, bound });
        self
    }

    pub fn group(mut self, start: usize, len: usize) -> Self {
        self.groups.push(Group { start, len });
        self
    }

    /// Splits the whole vector into consecutive groups of `variants`.
    pub fn variant_groups(mut self, variants: usize) -> Self {
        let n = if variants == 0 { 0 } else { self.a.len() / variants };
        self.groups = (0..n)
            .map(|i| Group {
                start: i * variants,
                len: variants,
            })
            .collect();
        self
    }

    pub fn criterion(mut self, criterion: SecondCriterion) -> Self {
        self.criterion = criterion;
        self
    }

    pub fn sense(mut self, sense: Sense) -> Self {
        self.sense = sense;
        self
    }

    pub fn build(self) -> Result<Problem> {
        let dim = self.a.len();
        if dim == 0 {
            return Err(Error::field("a", "problem needs at least one variable"));
        }
        if self.a.iter().any(|v| !v.is_finite()) {
            return Err(Error::field("a", "coefficients must be finite"));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if c.row.len() != dim {
                return Err(Error::field(
                    format!("constraints[{k}].b"),
                    format!("expected {dim} entries, found {}", c.row.len()),
                ));
            }
            if c.row.iter().any(|v| !v.is_finite()) || !c.bound.is_finite() {
                return Err(Error::field(format!("constraints[{k}]"), "values must be finite"));
            }
        }
        if let Some(first) = self.groups.first() {
            let v = first.len;
            let mut covered = vec![false; dim];
            for (g, group) in self.groups.iter().enumerate() {
                if group.len == 0 || group.len != v {
                    return Err(Error::field(
                        format!("groups[{g}].len"),
                        format!("all groups must share one positive length (first is {v})"),
                    ));
                }
                if group.start + group.len > dim {
                    return Err(Error::field(format!("groups[{g}]"), "range exceeds dim"));
                }
                for i in group.range() {
                    if covered[i] {
                        return Err(Error::field(format!("groups[{g}]"), "groups overlap"));
                    }
                    covered[i] = true;
                }
            }
        }
        match &self.criterion {
            SecondCriterion::IdleCapacity {
                loads, capacities, ..
            } => {
                if capacities.is_empty() || capacities.iter().any(|&c| !(c > 0.0)) {
                    return Err(Error::field("capacities", "every capacity must be > 0"));
                }
                if loads.len() * capacities.len() != dim {
                    return Err(Error::field(
                        "loads",
                        format!(
                            "{} loads x {} channels does not match dim {dim}",
                            loads.len(),
                            capacities.len()
                        ),
                    ));
                }
            }
            SecondCriterion::Constant(c) if !c.is_finite() => {
                return Err(Error::field("factor", "must be finite"));
            }
            _ => {}
        }

        let a = match self.sense {
            Sense::Maximize => self.a,
            Sense::Minimize => self.a.into_iter().map(|v| -v).collect(),
        };
        let k = self.constraints.len();
        let mut columns = vec![0.0; dim * k];
        for (ci, c) in self.constraints.iter().enumerate() {
            for (i, &b) in c.row.iter().enumerate() {
                columns[i * k + ci] = b;
            }
        }
        Ok(Problem {
            dim,
            a,
            constraints: self.constraints,
            groups: self.groups,
            criterion: self.criterion,
            sense: self.sense,
            columns,
        })
    }
}

/// Coefficients in either vector (`x_i`) or matrix (`x_ij`) convention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coeffs {
    Flat(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl Coeffs {
    fn flatten(self, field: &str) -> Result<(Vec<f64>, Option<usize>)> {
        match self {
            Coeffs::Flat(v) => Ok((v, None)),
            Coeffs::Matrix(rows) => {
                let v = rows.first().map(|r| r.len()).unwrap_or(0);
                if rows.iter().any(|r| r.len() != v) {
                    return Err(Error::field(field, "matrix rows have unequal lengths"));
                }
                Ok((rows.into_iter().flatten().collect(), Some(v)))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDoc {
    pub b: Coeffs,
    #[serde(rename = "B")]
    pub bound: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    #[default]
    Linear,
    IdleCapacity,
    Constant,
}

/// On-disk JSON layout of a problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub a: Coeffs,
    #[serde(default)]
    pub constraints: Vec<ConstraintDoc>,
    /// Absent means "one group per matrix row" for matrix input and no
    /// groups for vector input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Group>>,
    #[serde(default)]
    pub criterion: CriterionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loads: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<Orientation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    #[serde(default)]
    pub sense: Sense,
    /// Free-form provenance, such as the generator settings. Not interpreted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl ProblemDoc {
    pub fn into_problem(self) -> Result<Problem> {
        let (a, variants) = self.a.flatten("a")?;
        if let Some(dim) = self.dim {
            if dim != a.len() {
                return Err(Error::field(
                    "dim",
                    format!("declared {dim} but `a` has {} entries", a.len()),
                ));
            }
        }
        let mut builder = Problem::builder(a).sense(self.sense);
        for (k, c) in self.constraints.into_iter().enumerate() {
            let (row, _) = c.b.flatten(&format!("constraints[{k}].b"))?;
            builder = builder.constraint(row, c.bound);
        }
        builder = match (self.groups, variants) {
            (Some(groups), _) => groups
                .into_iter()
                .fold(builder, |b, g| b.group(g.start, g.len)),
            (None, Some(v)) if v > 0 => builder.variant_groups(v),
            (None, _) => builder,
        };
        let criterion = match self.criterion {
            CriterionKind::Linear => SecondCriterion::Identity,
            CriterionKind::IdleCapacity => SecondCriterion::IdleCapacity {
                loads: self
                    .loads
                    .ok_or_else(|| Error::field("loads", "required for idle_capacity"))?,
                capacities: self
                    .capacities
                    .ok_or_else(|| Error::field("capacities", "required for idle_capacity"))?,
                orientation: self.orientation.unwrap_or_default(),
            },
            CriterionKind::Constant => SecondCriterion::Constant(
                self.factor
                    .ok_or_else(|| Error::field("factor", "required for constant criterion"))?,
            ),
        };
        builder.criterion(criterion).build()
    }
}
