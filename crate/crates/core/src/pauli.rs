//! Diagonal Hamiltonians as sparse sums of Pauli-Z products.
//!
//! A term's `mask` has bit `j` set when `Z` acts on qubit `j`. Basis indices
//! use the opposite convention (qubit 0 is the most significant bit of the
//! index), so masks are bit-reversed before being compared with indices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::QuadraticObjective;
use crate::statevector::StateVector;

/// Terms with a smaller magnitude are dropped after decomposition.
pub const PRUNE_EPSILON: f64 = 1e-12;

/// Largest register for which dense diagonals are materialized.
pub const MAX_DIAGONAL_QUBITS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliZTerm {
    pub mask: u64,
    pub coeff: f64,
}

impl PauliZTerm {
    pub fn new(mask: u64, coeff: f64) -> Self {
        Self { mask, coeff }
    }

    pub fn identity(coeff: f64) -> Self {
        Self { mask: 0, coeff }
    }

    pub fn is_identity(&self) -> bool {
        self.mask == 0
    }

    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        (0..64).filter(move |q| (self.mask >> q) & 1 == 1)
    }
}

/// Reverses the low `m` bits: converts a qubit mask to a basis-index mask and
/// back.
pub fn reverse_bits(mask: u64, m: usize) -> u64 {
    if m == 0 {
        return 0;
    }
    mask.reverse_bits() >> (64 - m)
}

/// Unnormalized in-place Walsh-Hadamard transform.
pub fn fwht(data: &mut [f64]) {
    let len = data.len();
    assert!(
        len.is_power_of_two(),
        "transform length must be a power of two"
    );
    let mut h = 1;
    while h < len {
        for block in data.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// A real diagonal over `2^m` basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalVector {
    m: usize,
    values: Vec<f64>,
}

impl DiagonalVector {
    pub fn new(m: usize, values: Vec<f64>) -> Result<Self> {
        if m > MAX_DIAGONAL_QUBITS {
            return Err(Error::TooLarge {
                what: "qubits",
                value: m,
                limit: MAX_DIAGONAL_QUBITS,
            });
        }
        if values.len() != 1 << m {
            return Err(Error::DimensionMismatch {
                expected: 1 << m,
                actual: values.len(),
            });
        }
        Ok(Self { m, values })
    }

    /// Infers `m` from the length, which must be a power of two.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if !values.len().is_power_of_two() {
            return Err(Error::InvalidInstance(format!(
                "diagonal length {} is not a power of two",
                values.len()
            )));
        }
        let m = values.len().trailing_zeros() as usize;
        Self::new(m, values)
    }

    pub fn num_qubits(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A diagonal Hamiltonian on `m` qubits. Terms are kept sorted by ascending
/// mask with no duplicates; the identity is stored as the `mask == 0` term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHamiltonian")]
pub struct ZHamiltonian {
    m: usize,
    terms: Vec<PauliZTerm>,
}

#[derive(Deserialize)]
struct RawHamiltonian {
    m: usize,
    terms: Vec<PauliZTerm>,
}

impl TryFrom<RawHamiltonian> for ZHamiltonian {
    type Error = Error;

    fn try_from(raw: RawHamiltonian) -> Result<Self> {
        Self::from_terms(raw.m, raw.terms)
    }
}

impl ZHamiltonian {
    pub fn zero(m: usize) -> Self {
        Self {
            m,
            terms: Vec::new(),
        }
    }

    /// Merges repeated masks, drops negligible coefficients and sorts.
    pub fn from_terms<I>(m: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = PauliZTerm>,
    {
        if m > 64 {
            return Err(Error::TooLarge {
                what: "qubits",
                value: m,
                limit: 64,
            });
        }
        let mut merged: BTreeMap<u64, f64> = BTreeMap::new();
        for t in terms {
            if m < 64 && t.mask >> m != 0 {
                return Err(Error::QubitOutOfRange {
                    qubit: 63 - t.mask.leading_zeros() as usize,
                    num_qubits: m,
                });
            }
            *merged.entry(t.mask).or_insert(0.0) += t.coeff;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| c.abs() >= PRUNE_EPSILON)
            .map(|(mask, coeff)| PauliZTerm { mask, coeff })
            .collect();
        Ok(Self { m, terms })
    }

    pub fn num_qubits(&self) -> usize {
        self.m
    }

    pub fn terms(&self) -> &[PauliZTerm] {
        &self.terms
    }

    pub fn coeff(&self, mask: u64) -> f64 {
        self.terms
            .binary_search_by_key(&mask, |t| t.mask)
            .map(|i| self.terms[i].coeff)
            .unwrap_or(0.0)
    }

    pub fn identity_coeff(&self) -> f64 {
        self.coeff(0)
    }

    /// Non-identity terms in ascending mask order.
    pub fn non_identity_terms(&self) -> impl Iterator<Item = &PauliZTerm> {
        self.terms.iter().filter(|t| !t.is_identity())
    }

    /// Value of the diagonal at one basis index.
    pub fn value_at(&self, index: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let parity = (reverse_bits(t.mask, self.m) & index as u64).count_ones();
                if parity.is_multiple_of(2) {
                    t.coeff
                } else {
                    -t.coeff
                }
            })
            .sum()
    }

    /// Relabels qubits: qubit `q` becomes `map[q]` on a `new_m`-qubit
    /// register.
    pub fn remap_qubits(&self, map: &[usize], new_m: usize) -> Result<Self> {
        if map.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                actual: map.len(),
            });
        }
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut mask = 0u64;
                for q in t.qubits() {
                    mask |= 1 << map[q];
                }
                PauliZTerm::new(mask, t.coeff)
            })
            .collect::<Vec<_>>();
        Self::from_terms(new_m, terms)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Ising form of a QUBO via `x_i -> (I - Z_i) / 2`.
pub fn qubo_to_ising(obj: &QuadraticObjective) -> ZHamiltonian {
    let n = obj.num_variables();
    let mut terms = Vec::new();
    for (i, j, c) in obj.entries() {
        if i == j {
            terms.push(PauliZTerm::identity(c / 2.0));
            terms.push(PauliZTerm::new(1 << i, -c / 2.0));
        } else {
            let q = c / 4.0;
            terms.push(PauliZTerm::identity(q));
            terms.push(PauliZTerm::new(1 << i, -q));
            terms.push(PauliZTerm::new(1 << j, -q));
            terms.push(PauliZTerm::new((1 << i) | (1 << j), q));
        }
    }
    ZHamiltonian::from_terms(n, terms).expect("masks are within the objective's variables")
}

/// Pauli-Z expansion of an arbitrary diagonal via the fast Walsh-Hadamard
/// transform: `c_S = 2^-m sum_x d(x) (-1)^{|x & S|}`.
pub fn diagonal_to_pauli(d: &DiagonalVector) -> ZHamiltonian {
    let m = d.num_qubits();
    let mut coeffs = d.values().to_vec();
    fwht(&mut coeffs);
    let scale = 1.0 / (1u64 << m) as f64;
    let terms = coeffs
        .into_iter()
        .enumerate()
        .map(|(s, c)| PauliZTerm::new(reverse_bits(s as u64, m), c * scale));
    ZHamiltonian::from_terms(m, terms).expect("masks are within the register")
}

/// Dense diagonal of `h`; the inverse of [`diagonal_to_pauli`].
pub fn pauli_to_diagonal(h: &ZHamiltonian) -> DiagonalVector {
    let m = h.num_qubits();
    assert!(
        m <= MAX_DIAGONAL_QUBITS,
        "register too large for a dense diagonal"
    );
    let mut values = vec![0.0; 1 << m];
    for t in h.terms() {
        values[reverse_bits(t.mask, m) as usize] += t.coeff;
    }
    fwht(&mut values);
    DiagonalVector { m, values }
}

/// Extends `hf` with `flag_count` flag qubits after its variables and adds
/// `(delta / 2)(I - Z_v)` for each flag `v`.
pub fn add_flag_penalty(hf: &ZHamiltonian, delta: f64, flag_count: usize) -> ZHamiltonian {
    assert!(delta >= 0.0, "penalty must be non-negative");
    let n = hf.num_qubits();
    let mut terms = hf.terms().to_vec();
    for v in 0..flag_count {
        terms.push(PauliZTerm::identity(delta / 2.0));
        terms.push(PauliZTerm::new(1 << (n + v), -delta / 2.0));
    }
    ZHamiltonian::from_terms(n + flag_count, terms).expect("flag qubits fit in the mask")
}

/// `<psi| h |psi>`.
pub fn expectation(h: &ZHamiltonian, psi: &StateVector) -> f64 {
    assert_eq!(
        h.num_qubits(),
        psi.num_qubits(),
        "Hamiltonian and state qubit counts differ"
    );
    diagonal_expectation(&pauli_to_diagonal(h), psi)
}

pub(crate) fn diagonal_expectation(d: &DiagonalVector, psi: &StateVector) -> f64 {
    d.values()
        .iter()
        .zip(psi.amplitudes())
        .map(|(v, a)| v * a.norm_sqr())
        .sum()
}

/// Extremal eigenvalues of a diagonal Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumExtrema {
    pub min: f64,
    pub max: f64,
    /// Basis indices attaining the minimum (within 1e-9).
    pub argmin: Vec<usize>,
}

pub fn spectrum_extrema(h: &ZHamiltonian) -> SpectrumExtrema {
    let d = pauli_to_diagonal(h);
    let min = d.values().iter().copied().fold(f64::INFINITY, f64::min);
    let max = d.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let argmin = d
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| (v - min).abs() <= 1e-9)
        .map(|(i, _)| i)
        .collect();
    SpectrumExtrema { min, max, argmin }
}
