//! QCBO instances: a quadratic objective over binary variables plus a list of
//! linear constraints, together with the exhaustive classical oracle used as
//! ground truth everywhere else in the crate.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest variable count accepted by [`brute_force_solve`].
pub const MAX_ENUMERATION_VARIABLES: usize = 24;

/// Absolute tolerance used when grouping tied objective values.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// A binary assignment `x0 x1 ... x(n-1)`.
///
/// Assignments map to integers with `x0` as the most significant bit, so
/// `Assignment::from_index(1, 3)` is `001`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    bits: Vec<bool>,
}

impl Assignment {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn from_index(index: usize, n: usize) -> Self {
        Self {
            bits: (0..n).map(|j| (index >> (n - 1 - j)) & 1 == 1).collect(),
        }
    }

    pub fn index(&self) -> usize {
        self.bits
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | usize::from(b))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn flipped(&self, i: usize) -> Self {
        let mut bits = self.bits.clone();
        bits[i] = !bits[i];
        Self { bits }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// `f(x) = sum_{i <= j} q[i][j] x_i x_j`, stored densely (row-major) with the
/// lower triangle kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    n: usize,
    q: Vec<f64>,
}

impl QuadraticObjective {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            q: vec![0.0; n * n],
        }
    }

    /// Builds an objective from `(i, j, coeff)` entries. Entries below the
    /// diagonal are folded onto `(j, i)` and repeated entries are summed.
    pub fn from_entries<I>(n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut obj = Self::zero(n);
        for (i, j, c) in entries {
            if i >= n || j >= n {
                return Err(Error::VariableOutOfRange { index: i.max(j), n });
            }
            if !c.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "non-finite coefficient at ({i}, {j})"
                )));
            }
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            obj.q[a * n + b] += c;
        }
        Ok(obj)
    }

    pub fn num_variables(&self) -> usize {
        self.n
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if i > j {
            0.0
        } else {
            self.q[i * self.n + j]
        }
    }

    /// Nonzero upper-triangular entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..n)
            .flat_map(move |i| (i..n).map(move |j| (i, j)))
            .map(move |(i, j)| (i, j, self.q[i * n + j]))
            .filter(|&(_, _, c)| c != 0.0)
    }

    pub fn evaluate(&self, x: &Assignment) -> f64 {
        assert_eq!(x.len(), self.n, "assignment length mismatch");
        self.evaluate_index(x.index())
    }

    /// Evaluates on the assignment whose ket index is `index`.
    pub fn evaluate_index(&self, index: usize) -> f64 {
        let n = self.n;
        let bit = |i: usize| (index >> (n - 1 - i)) & 1 == 1;
        let mut total = 0.0;
        for i in 0..n {
            if !bit(i) {
                continue;
            }
            let row = &self.q[i * n..(i + 1) * n];
            for (j, q) in row.iter().enumerate().skip(i) {
                if bit(j) {
                    total += q;
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "EQ")]
    Eq,
    #[serde(rename = "LE")]
    Le,
    #[serde(rename = "GE")]
    Ge,
}

impl Sense {
    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Sense::Eq => lhs == rhs,
            Sense::Le => lhs <= rhs,
            Sense::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Eq => "=",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Sense::Eq => "EQ",
            Sense::Le => "LE",
            Sense::Ge => "GE",
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// `coeffs . x (sense) rhs` with integer coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawConstraint")]
pub struct LinearConstraint {
    coeffs: Vec<i64>,
    sense: Sense,
    rhs: i64,
}

#[derive(Deserialize)]
struct RawConstraint {
    coeffs: Vec<i64>,
    sense: Sense,
    rhs: i64,
}

impl TryFrom<RawConstraint> for LinearConstraint {
    type Error = Error;

    fn try_from(raw: RawConstraint) -> Result<Self> {
        Self::new(raw.coeffs, raw.sense, raw.rhs)
    }
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<i64>, sense: Sense, rhs: i64) -> Result<Self> {
        if coeffs.iter().all(|&c| c == 0) {
            return Err(Error::EmptySupport);
        }
        Ok(Self { coeffs, sense, rhs })
    }

    /// `sum_{i in vars} x_i (sense) rhs` over `n` variables.
    pub fn sum_of(n: usize, vars: &[usize], sense: Sense, rhs: i64) -> Result<Self> {
        let mut coeffs = vec![0; n];
        for &v in vars {
            if v >= n {
                return Err(Error::VariableOutOfRange { index: v, n });
            }
            coeffs[v] = 1;
        }
        Self::new(coeffs, sense, rhs)
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn rhs(&self) -> i64 {
        self.rhs
    }

    pub fn num_variables(&self) -> usize {
        self.coeffs.len()
    }

    /// Indices of the variables with a nonzero coefficient.
    pub fn support(&self) -> BTreeSet<usize> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_feasible(&self, x: &Assignment) -> bool {
        assert_eq!(
            x.len(),
            self.coeffs.len(),
            "assignment length does not match constraint"
        );
        let lhs: i64 = self
            .coeffs
            .iter()
            .zip(x.bits())
            .filter(|(_, &b)| b)
            .map(|(&c, _)| c)
            .sum();
        self.sense.holds(lhs, self.rhs)
    }

    /// Feasibility of the assignment with ket index `index` over
    /// `num_variables()` bits.
    pub fn is_feasible_index(&self, index: usize) -> bool {
        let n = self.coeffs.len();
        let lhs: i64 = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|&(i, _)| (index >> (n - 1 - i)) & 1 == 1)
            .map(|(_, &c)| c)
            .sum();
        self.sense.holds(lhs, self.rhs)
    }

    /// Re-expresses the constraint over the variables `vars` (in that order).
    /// Coefficients of variables outside `vars` must be zero.
    pub fn restricted_to(&self, vars: &[usize]) -> Result<Self> {
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c != 0 && !vars.contains(&i) {
                return Err(Error::InvalidInstance(format!(
                    "variable x{i} of the constraint is not in the restriction"
                )));
            }
        }
        let coeffs = vars
            .iter()
            .map(|&v| self.coeffs.get(v).copied().unwrap_or(0))
            .collect();
        Self::new(coeffs, self.sense, self.rhs)
    }

    /// Re-expresses a constraint over local variables `0..k` on `n` global
    /// variables, with local `j` placed at `vars[j]`.
    pub fn lifted(&self, vars: &[usize], n: usize) -> Result<Self> {
        if vars.len() != self.coeffs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coeffs.len(),
                actual: vars.len(),
            });
        }
        let mut coeffs = vec![0; n];
        for (&v, &c) in vars.iter().zip(&self.coeffs) {
            if v >= n {
                return Err(Error::VariableOutOfRange { index: v, n });
            }
            coeffs[v] = c;
        }
        Self::new(coeffs, self.sense, self.rhs)
    }

    /// Whether any assignment of the support satisfies the constraint.
    pub fn is_satisfiable(&self) -> bool {
        let coeffs: Vec<i64> = self.coeffs.iter().copied().filter(|&c| c != 0).collect();
        (0..1usize << coeffs.len()).any(|mask| {
            let lhs: i64 = coeffs
                .iter()
                .enumerate()
                .filter(|&(i, _)| (mask >> i) & 1 == 1)
                .map(|(_, &c)| c)
                .sum();
            self.sense.holds(lhs, self.rhs)
        })
    }

    /// Whether every assignment of the support satisfies the constraint.
    pub fn is_vacuous(&self) -> bool {
        let coeffs: Vec<i64> = self.coeffs.iter().copied().filter(|&c| c != 0).collect();
        (0..1usize << coeffs.len()).all(|mask| {
            let lhs: i64 = coeffs
                .iter()
                .enumerate()
                .filter(|&(i, _)| (mask >> i) & 1 == 1)
                .map(|(_, &c)| c)
                .sum();
            self.sense.holds(lhs, self.rhs)
        })
    }
}

impl fmt::Display for LinearConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mag = c.abs();
            match (first, c < 0) {
                (true, true) => f.write_str("-")?,
                (true, false) => {}
                (false, true) => f.write_str(" - ")?,
                (false, false) => f.write_str(" + ")?,
            }
            if mag != 1 {
                write!(f, "{mag}")?;
            }
            write!(f, "x{i}")?;
            first = false;
        }
        write!(f, " {} {}", self.sense, self.rhs)
    }
}

/// `min f(x) s.t. every constraint holds`.
#[derive(Debug, Clone, PartialEq)]
pub struct QcboInstance {
    objective: QuadraticObjective,
    constraints: Vec<LinearConstraint>,
}

impl QcboInstance {
    pub fn new(objective: QuadraticObjective, constraints: Vec<LinearConstraint>) -> Result<Self> {
        let n = objective.num_variables();
        for (k, c) in constraints.iter().enumerate() {
            if c.num_variables() != n {
                return Err(Error::InvalidInstance(format!(
                    "constraint {k} has {} coefficients, objective has {n} variables",
                    c.num_variables()
                )));
            }
        }
        Ok(Self {
            objective,
            constraints,
        })
    }

    pub fn num_variables(&self) -> usize {
        self.objective.num_variables()
    }

    pub fn objective(&self) -> &QuadraticObjective {
        &self.objective
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn is_feasible(&self, x: &Assignment) -> bool {
        self.constraints.iter().all(|c| c.is_feasible(x))
    }

    pub fn is_feasible_index(&self, index: usize) -> bool {
        self.constraints.iter().all(|c| c.is_feasible_index(index))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawInstance = serde_json::from_str(text)?;
        raw.try_into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RawInstance::from(self))?)
    }
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    n: usize,
    q: Vec<(usize, usize, f64)>,
    constraints: Vec<LinearConstraint>,
}

impl TryFrom<RawInstance> for QcboInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        let objective = QuadraticObjective::from_entries(raw.n, raw.q)?;
        QcboInstance::new(objective, raw.constraints)
    }
}

impl From<&QcboInstance> for RawInstance {
    fn from(inst: &QcboInstance) -> Self {
        RawInstance {
            n: inst.num_variables(),
            q: inst.objective.entries().collect(),
            constraints: inst.constraints.clone(),
        }
    }
}

/// Constrained optimum of an instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimum {
    Feasible {
        value: f64,
        assignments: Vec<Assignment>,
    },
    NoFeasibleSolution,
}

/// Output of [`brute_force_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub optimum: Optimum,
    /// Unconstrained minimum of the objective.
    pub f_min: f64,
    /// Unconstrained maximum of the objective.
    pub f_max: f64,
}

impl BruteForce {
    pub fn optimal_value(&self) -> Option<f64> {
        match &self.optimum {
            Optimum::Feasible { value, .. } => Some(*value),
            Optimum::NoFeasibleSolution => None,
        }
    }

    pub fn optimal_assignments(&self) -> &[Assignment] {
        match &self.optimum {
            Optimum::Feasible { assignments, .. } => assignments,
            Optimum::NoFeasibleSolution => &[],
        }
    }
}

/// Exhaustive enumeration over all `2^n` assignments.
pub fn brute_force_solve(inst: &QcboInstance) -> Result<BruteForce> {
    let n = inst.num_variables();
    if n > MAX_ENUMERATION_VARIABLES {
        return Err(Error::TooLarge {
            what: "variables",
            value: n,
            limit: MAX_ENUMERATION_VARIABLES,
        });
    }
    let mut f_min = f64::INFINITY;
    let mut f_max = f64::NEG_INFINITY;
    let mut best = f64::INFINITY;
    let mut argbest: Vec<usize> = Vec::new();
    for idx in 0..1usize << n {
        let f = inst.objective.evaluate_index(idx);
        f_min = f_min.min(f);
        f_max = f_max.max(f);
        if !inst.is_feasible_index(idx) {
            continue;
        }
        if f < best - TIE_TOLERANCE {
            best = f;
            argbest.clear();
            argbest.push(idx);
        } else if (f - best).abs() <= TIE_TOLERANCE {
            argbest.push(idx);
        }
    }
    let optimum = if argbest.is_empty() {
        Optimum::NoFeasibleSolution
    } else {
        Optimum::Feasible {
            value: best,
            assignments: argbest
                .into_iter()
                .map(|idx| Assignment::from_index(idx, n))
                .collect(),
        }
    };
    Ok(BruteForce {
        optimum,
        f_min,
        f_max,
    })
}

/// Random objective with integer coefficients drawn uniformly from
/// `coeff_range` on the upper triangle (diagonal included).
pub fn random_qcbo(
    n: usize,
    constraints: Vec<LinearConstraint>,
    seed: u64,
    coeff_range: RangeInclusive<i64>,
) -> Result<QcboInstance> {
    if coeff_range.is_empty() {
        return Err(Error::InvalidInstance("empty coefficient range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let c = rng.random_range(coeff_range.clone());
            entries.push((i, j, c as f64));
        }
    }
    QcboInstance::new(QuadraticObjective::from_entries(n, entries)?, constraints)
}

/// Default coefficient range for random objectives.
pub const DEFAULT_COEFF_RANGE: RangeInclusive<i64> = -5..=5;

#[cfg(test)]
mod tests {
    use super::*;

    fn eq(n: usize, vars: &[usize], rhs: i64) -> LinearConstraint {
        LinearConstraint::sum_of(n, vars, Sense::Eq, rhs).unwrap()
    }

    fn example_two_vars() -> QcboInstance {
        let obj =
            QuadraticObjective::from_entries(2, [(0, 1, 1.0), (0, 0, 3.0), (1, 1, 4.0)]).unwrap();
        QcboInstance::new(obj, vec![eq(2, &[0, 1], 1)]).unwrap()
    }

    fn example_three_vars() -> QcboInstance {
        let obj = QuadraticObjective::from_entries(
            3,
            [
                (0, 0, 3.0),
                (0, 1, -1.0),
                (0, 2, 4.0),
                (1, 1, -2.0),
                (1, 2, -5.0),
                (2, 2, 1.0),
            ],
        )
        .unwrap();
        QcboInstance::new(obj, vec![eq(3, &[0, 1], 1), eq(3, &[0, 2], 1)]).unwrap()
    }

    #[test]
    fn support_lists_nonzero_coefficients() {
        assert_eq!(eq(2, &[0, 1], 1).support(), BTreeSet::from([0, 1]));
        assert_eq!(eq(3, &[0, 2], 1).support(), BTreeSet::from([0, 2]));
        assert!(matches!(
            LinearConstraint::new(vec![0, 0], Sense::Eq, 1),
            Err(Error::EmptySupport)
        ));
    }

    #[test]
    fn feasibility_of_hamming_weight_one() {
        let c = eq(2, &[0, 1], 1);
        assert!(c.is_feasible(&Assignment::new(vec![false, true])));
        assert!(!c.is_feasible(&Assignment::new(vec![true, true])));
        let vacuous = LinearConstraint::sum_of(4, &[0, 1, 2, 3], Sense::Le, 4).unwrap();
        for idx in 0..16 {
            assert!(vacuous.is_feasible(&Assignment::from_index(idx, 4)));
        }
    }

    #[test]
    #[should_panic]
    fn feasibility_length_mismatch_panics() {
        eq(2, &[0, 1], 1).is_feasible(&Assignment::new(vec![true]));
    }

    #[test]
    fn assignment_index_is_msb_first() {
        let a = Assignment::from_index(1, 3);
        assert_eq!(a.to_string(), "001");
        assert_eq!(a.index(), 1);
        assert_eq!(Assignment::from_index(4, 3).to_string(), "100");
    }

    #[test]
    fn solves_worked_examples() {
        let bf = brute_force_solve(&example_two_vars()).unwrap();
        assert_eq!(bf.optimal_value(), Some(3.0));
        assert_eq!(
            bf.optimal_assignments(),
            &[Assignment::new(vec![true, false])]
        );
        assert_eq!((bf.f_min, bf.f_max), (0.0, 8.0));

        let bf = brute_force_solve(&example_three_vars()).unwrap();
        assert_eq!(bf.optimal_value(), Some(-6.0));
        assert_eq!(
            bf.optimal_assignments(),
            &[Assignment::new(vec![false, true, true])]
        );
    }

    #[test]
    fn infeasible_instance_is_reported() {
        let obj = QuadraticObjective::from_entries(2, [(0, 0, 1.0)]).unwrap();
        let inst = QcboInstance::new(obj, vec![eq(2, &[0, 1], 3)]).unwrap();
        let bf = brute_force_solve(&inst).unwrap();
        assert_eq!(bf.optimum, Optimum::NoFeasibleSolution);
    }

    #[test]
    fn random_instances_are_deterministic() {
        let c = vec![eq(2, &[0, 1], 1)];
        let a = random_qcbo(2, c.clone(), 7, DEFAULT_COEFF_RANGE).unwrap();
        let b = random_qcbo(2, c.clone(), 7, DEFAULT_COEFF_RANGE).unwrap();
        assert_eq!(a, b);

        let zero = random_qcbo(2, c.clone(), 3, 0..=0).unwrap();
        assert_eq!(brute_force_solve(&zero).unwrap().optimal_value(), Some(0.0));

        let c5 = vec![LinearConstraint::sum_of(5, &[0, 1, 2, 3, 4], Sense::Le, 2).unwrap()];
        let s1 = random_qcbo(5, c5.clone(), 1, DEFAULT_COEFF_RANGE).unwrap();
        let s2 = random_qcbo(5, c5, 2, DEFAULT_COEFF_RANGE).unwrap();
        assert_ne!(s1.objective(), s2.objective());
    }

    #[test]
    fn lower_triangle_entries_fold_upward() {
        let obj = QuadraticObjective::from_entries(2, [(1, 0, 2.0), (0, 1, 1.0)]).unwrap();
        assert_eq!(obj.coeff(0, 1), 3.0);
        assert_eq!(obj.coeff(1, 0), 0.0);
    }

    #[test]
    fn json_roundtrip() {
        let inst = example_three_vars();
        let text = inst.to_json().unwrap();
        assert_eq!(QcboInstance::from_json(&text).unwrap(), inst);
        let bad =
            r#"{"n": 2, "q": [], "constraints": [{"coeffs": [0, 0], "sense": "EQ", "rhs": 1}]}"#;
        assert!(QcboInstance::from_json(bad).is_err());
    }

    #[test]
    fn display_is_readable() {
        let c = LinearConstraint::new(vec![1, 0, -2, 3], Sense::Le, 2).unwrap();
        assert_eq!(c.to_string(), "x0 - 2x2 + 3x3 <= 2");
    }
}
