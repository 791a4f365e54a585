//! Dense statevector simulation.
//!
//! The basis index of `|b0 b1 ... b(m-1)>` is `sum_j b_j 2^(m-1-j)`: qubit 0
//! is the most significant bit, so `|001>` is index 1.

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pauli::{reverse_bits, DiagonalVector, PauliZTerm};

pub const MAX_QUBITS: usize = 24;

const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    m: usize,
    amps: Vec<Complex64>,
}

#[derive(Debug, Serialize)]
struct AmplitudeRecord {
    ket: String,
    re: f64,
    im: f64,
}

/// Bitstring of a basis index, qubit 0 first.
pub fn ket_string(index: usize, m: usize) -> String {
    (0..m)
        .map(|j| {
            if (index >> (m - 1 - j)) & 1 == 1 {
                '1'
            } else {
                '0'
            }
        })
        .collect()
}

/// Stride between the two amplitudes a single-qubit gate on `qubit` mixes.
#[inline]
fn stride(m: usize, qubit: usize) -> usize {
    1 << (m - 1 - qubit)
}

/// `exp(-i beta X)` on `qubit` of a raw, not necessarily normalized, vector.
pub(crate) fn rx_kernel(amps: &mut [Complex64], m: usize, qubit: usize, beta: f64) {
    let s = stride(m, qubit);
    let c = Complex64::new(beta.cos(), 0.0);
    let ms = Complex64::new(0.0, -beta.sin());
    for block in amps.chunks_exact_mut(2 * s) {
        let (lo, hi) = block.split_at_mut(s);
        for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = c * x + ms * y;
            *b = ms * x + c * y;
        }
    }
}

/// `Im <left| X_qubit |right>` for raw vectors.
pub(crate) fn im_x_overlap(left: &[Complex64], right: &[Complex64], m: usize, qubit: usize) -> f64 {
    let s = stride(m, qubit);
    left.chunks_exact(2 * s)
        .zip(right.chunks_exact(2 * s))
        .map(|(l, r)| {
            let (l0, l1) = l.split_at(s);
            let (r0, r1) = r.split_at(s);
            l0.iter()
                .zip(r1)
                .chain(l1.iter().zip(r0))
                .map(|(a, b)| (a.conj() * b).im)
                .sum::<f64>()
        })
        .sum()
}

/// `amp_x <- amp_x * exp(-i scale phases[x])` on a raw vector.
pub(crate) fn phase_kernel(amps: &mut [Complex64], phases: &[f64], scale: f64) {
    debug_assert_eq!(phases.len(), amps.len());
    for (a, &p) in amps.iter_mut().zip(phases) {
        *a *= Complex64::from_polar(1.0, -scale * p);
    }
}

impl StateVector {
    /// `|0...0>` on `m` qubits.
    pub fn init_zero(m: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&m) {
            return Err(Error::QubitCount(m));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << m];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { m, amps })
    }

    /// Computational basis state `|index>`.
    pub fn basis(m: usize, index: usize) -> Result<Self> {
        let mut s = Self::init_zero(m)?;
        if index >= s.amps.len() {
            return Err(Error::DimensionMismatch {
                expected: s.amps.len(),
                actual: index,
            });
        }
        s.amps[0] = Complex64::new(0.0, 0.0);
        s.amps[index] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    /// Wraps amplitudes, normalizing them. Fails on a zero vector.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        if !amps.len().is_power_of_two() || amps.len() < 2 {
            return Err(Error::InvalidInstance(format!(
                "amplitude count {} is not a power of two >= 2",
                amps.len()
            )));
        }
        let m = amps.len().trailing_zeros() as usize;
        if m > MAX_QUBITS {
            return Err(Error::QubitCount(m));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidInstance("state has zero norm".into()));
        }
        Ok(Self {
            m,
            amps: amps.into_iter().map(|a| a / norm).collect(),
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amps[index]
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    #[inline]
    fn check_norm(&self) {
        debug_assert!(
            (self.norm() - 1.0).abs() < NORM_TOLERANCE,
            "norm drifted to {}",
            self.norm()
        );
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.m {
            return Err(Error::QubitOutOfRange {
                qubit,
                num_qubits: self.m,
            });
        }
        Ok(())
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.amps.len() {
            return Err(Error::DimensionMismatch {
                expected: self.amps.len(),
                actual: len,
            });
        }
        Ok(())
    }

    pub fn apply_h(&mut self, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        let s = stride(self.m, qubit);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for block in self.amps.chunks_exact_mut(2 * s) {
            let (lo, hi) = block.split_at_mut(s);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = (x + y) * r;
                *b = (x - y) * r;
            }
        }
        self.check_norm();
        Ok(())
    }

    pub fn apply_h_all(&mut self) {
        for q in 0..self.m {
            self.apply_h(q).expect("qubit in range");
        }
    }

    /// `exp(-i beta X)` on `qubit`.
    pub fn apply_rx(&mut self, qubit: usize, beta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        rx_kernel(&mut self.amps, self.m, qubit, beta);
        self.check_norm();
        Ok(())
    }

    /// `X` on `qubit`.
    pub fn apply_x(&mut self, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        let s = stride(self.m, qubit);
        for block in self.amps.chunks_exact_mut(2 * s) {
            let (lo, hi) = block.split_at_mut(s);
            lo.swap_with_slice(hi);
        }
        Ok(())
    }

    /// `amp_x <- amp_x * exp(-i gamma d(x))`.
    pub fn apply_diagonal_phase(&mut self, d: &DiagonalVector, gamma: f64) -> Result<()> {
        self.check_dim(d.len())?;
        self.apply_phases_scaled(d.values(), gamma);
        Ok(())
    }

    /// `amp_x <- amp_x * exp(-i scale phases[x])`; `phases` must have the
    /// state's dimension.
    pub(crate) fn apply_phases_scaled(&mut self, phases: &[f64], scale: f64) {
        phase_kernel(&mut self.amps, phases, scale);
        self.check_norm();
    }

    /// `amp_x <- amp_x * exp(-i angle coeff (-1)^{parity(x & mask)})`.
    pub fn apply_z_term_phase(&mut self, term: &PauliZTerm, angle: f64) -> Result<()> {
        if self.m < 64 && term.mask >> self.m != 0 {
            return Err(Error::QubitOutOfRange {
                qubit: 63 - term.mask.leading_zeros() as usize,
                num_qubits: self.m,
            });
        }
        let index_mask = reverse_bits(term.mask, self.m);
        let even = Complex64::from_polar(1.0, -angle * term.coeff);
        let odd = even.conj();
        for (x, a) in self.amps.iter_mut().enumerate() {
            if (index_mask & x as u64).count_ones().is_multiple_of(2) {
                *a *= even;
            } else {
                *a *= odd;
            }
        }
        self.check_norm();
        Ok(())
    }

    /// `exp(-i beta |s><s|)`: `psi <- psi + (e^{-i beta} - 1) <s|psi> s`.
    pub fn apply_projector_phase(&mut self, s: &StateVector, beta: f64) -> Result<()> {
        self.check_dim(s.dim())?;
        let overlap = s.inner(self);
        let factor = (Complex64::from_polar(1.0, -beta) - 1.0) * overlap;
        for (a, b) in self.amps.iter_mut().zip(&s.amps) {
            *a += factor * b;
        }
        self.check_norm();
        Ok(())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        assert_eq!(self.dim(), other.dim(), "state dimensions differ");
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|<self|other>|`.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm()
    }

    pub fn probabilities(&self) -> DiagonalVector {
        DiagonalVector::new(self.m, self.amps.iter().map(|a| a.norm_sqr()).collect())
            .expect("state dimension is 2^m")
    }

    /// Samples `shots` measurement outcomes; returns counts per basis index.
    pub fn sample_counts<R: Rng>(&self, shots: usize, rng: &mut R) -> Vec<usize> {
        let probs: Vec<f64> = self.amps.iter().map(|a| a.norm_sqr()).collect();
        let dist = WeightedIndex::new(&probs).expect("probabilities are non-negative");
        let mut counts = vec![0; probs.len()];
        for _ in 0..shots {
            counts[dist.sample(rng)] += 1;
        }
        counts
    }

    /// Tensor product `self (x) other`, with `self` on the leading qubits.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let m = self.m + other.m;
        if m > MAX_QUBITS {
            return Err(Error::QubitCount(m));
        }
        let amps = self
            .amps
            .iter()
            .flat_map(|a| other.amps.iter().map(move |b| a * b))
            .collect();
        Ok(StateVector { m, amps })
    }

    /// Debug dump: `[{"ket": "...", "re": .., "im": ..}, ...]`.
    pub fn to_json(&self) -> Result<String> {
        let records: Vec<AmplitudeRecord> = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| AmplitudeRecord {
                ket: ket_string(i, self.m),
                re: a.re,
                im: a.im,
            })
            .collect();
        Ok(serde_json::to_string(&records)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_state_eq(a: &StateVector, b: &[Complex64], tol: f64) {
        assert_eq!(a.dim(), b.len());
        for (x, y) in a.amplitudes().iter().zip(b) {
            assert!((x - y).norm() <= tol, "{x} != {y}");
        }
    }

    fn uniform(m: usize) -> StateVector {
        let mut s = StateVector::init_zero(m).unwrap();
        s.apply_h_all();
        s
    }

    #[test]
    fn init_zero_ranges() {
        assert_state_eq(
            &StateVector::init_zero(1).unwrap(),
            &[c(1., 0.), c(0., 0.)],
            0.0,
        );
        let s = StateVector::init_zero(3).unwrap();
        assert_eq!(s.dim(), 8);
        assert_eq!(s.amplitude(0), c(1., 0.));
        assert_abs_diff_eq!(s.norm(), 1.0);
        assert!(matches!(
            StateVector::init_zero(0),
            Err(Error::QubitCount(0))
        ));
        assert!(StateVector::init_zero(25).is_err());
    }

    #[test]
    fn hadamard_layer() {
        let s = uniform(3);
        for a in s.amplitudes() {
            assert_abs_diff_eq!(a.re, 1.0 / 8f64.sqrt(), epsilon = 1e-12);
        }
        let mut t = s.clone();
        t.apply_h_all();
        assert_state_eq(&t, StateVector::init_zero(3).unwrap().amplitudes(), 1e-10);

        let mut one = StateVector::basis(1, 1).unwrap();
        one.apply_h_all();
        assert_state_eq(&one, &[c(FRAC_1_SQRT_2, 0.), c(-FRAC_1_SQRT_2, 0.)], 1e-12);
    }

    #[test]
    fn diagonal_phase_examples() {
        let d = DiagonalVector::from_values(vec![1.0, -1.0]).unwrap();
        let mut s = uniform(1);
        s.apply_diagonal_phase(&d, 0.0).unwrap();
        assert_state_eq(&s, uniform(1).amplitudes(), 1e-15);

        // exp(-i pi/2 Z)|+> = (-i|0> + i|1>)/sqrt2
        s.apply_diagonal_phase(&d, FRAC_PI_2).unwrap();
        assert_state_eq(&s, &[c(0., -FRAC_1_SQRT_2), c(0., FRAC_1_SQRT_2)], 1e-12);

        let constant = DiagonalVector::from_values(vec![2.0; 4]).unwrap();
        let mut t = uniform(2);
        t.apply_diagonal_phase(&constant, 0.7).unwrap();
        for (p, q) in t
            .probabilities()
            .values()
            .iter()
            .zip(uniform(2).probabilities().values())
        {
            assert_abs_diff_eq!(p, q, epsilon = 1e-12);
        }
        let wrong = DiagonalVector::from_values(vec![0.0; 2]).unwrap();
        assert!(t.apply_diagonal_phase(&wrong, 1.0).is_err());
    }

    #[test]
    fn z_term_phase_examples() {
        let term = PauliZTerm::new(0b111, 1.0);
        let mut s = uniform(3);
        s.apply_z_term_phase(&term, 0.0).unwrap();
        assert_state_eq(&s, uniform(3).amplitudes(), 1e-15);

        let mut g = uniform(2);
        g.apply_z_term_phase(&PauliZTerm::identity(1.0), 0.3)
            .unwrap();
        let phase = Complex64::from_polar(1.0, -0.3);
        let expected: Vec<_> = uniform(2).amplitudes().iter().map(|a| a * phase).collect();
        assert_state_eq(&g, &expected, 1e-12);

        s.apply_z_term_phase(&term, FRAC_PI_2).unwrap();
        let amp = 1.0 / 8f64.sqrt();
        for x in 0..8usize {
            let want = if x.count_ones() % 2 == 1 {
                c(0., amp)
            } else {
                c(0., -amp)
            };
            assert!((s.amplitude(x) - want).norm() < 1e-12);
        }
        assert!(s
            .apply_z_term_phase(&PauliZTerm::new(0b1000, 1.0), 1.0)
            .is_err());
    }

    #[test]
    fn rx_examples() {
        let mut s = StateVector::init_zero(1).unwrap();
        s.apply_rx(0, 0.0).unwrap();
        assert_state_eq(&s, &[c(1., 0.), c(0., 0.)], 0.0);
        s.apply_rx(0, FRAC_PI_2).unwrap();
        assert_state_eq(&s, &[c(0., 0.), c(0., -1.)], 1e-12);

        let mut t = StateVector::init_zero(1).unwrap();
        t.apply_rx(0, FRAC_PI_4).unwrap();
        assert_state_eq(
            &t,
            &[c(FRAC_PI_4.cos(), 0.), c(0., -FRAC_PI_4.sin())],
            1e-12,
        );
        assert!(t.apply_rx(1, 0.1).is_err());
    }

    #[test]
    fn rx_acts_on_the_named_qubit() {
        // X on qubit 0 of |00> gives |10> = index 2
        let mut s = StateVector::init_zero(2).unwrap();
        s.apply_rx(0, FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(s.amplitude(2).norm(), 1.0, epsilon = 1e-12);
        let mut x = StateVector::init_zero(3).unwrap();
        x.apply_x(2).unwrap();
        assert_eq!(x.amplitude(1), c(1., 0.));
    }

    #[test]
    fn projector_phase_examples() {
        let s = uniform(2);
        let mut psi = StateVector::basis(2, 3).unwrap();
        let before = psi.clone();
        psi.apply_projector_phase(&s, 0.0).unwrap();
        assert_state_eq(&psi, before.amplitudes(), 1e-15);

        let mut on_s = s.clone();
        on_s.apply_projector_phase(&s, 1.1).unwrap();
        let phase = Complex64::from_polar(1.0, -1.1);
        let want: Vec<_> = s.amplitudes().iter().map(|a| a * phase).collect();
        assert_state_eq(&on_s, &want, 1e-12);

        let perp = StateVector::from_amplitudes(vec![c(1., 0.), c(-1., 0.), c(0., 0.), c(0., 0.)])
            .unwrap();
        let mut p = perp.clone();
        p.apply_projector_phase(&s, PI / 3.0).unwrap();
        assert_state_eq(&p, perp.amplitudes(), 1e-12);
    }

    #[test]
    fn fidelity_and_probabilities() {
        let s = uniform(3);
        assert_abs_diff_eq!(s.fidelity(&s), 1.0, epsilon = 1e-12);
        let a = StateVector::basis(3, 1).unwrap();
        let b = StateVector::basis(3, 2).unwrap();
        assert_eq!(a.fidelity(&b), 0.0);
        for p in s.probabilities().values() {
            assert_abs_diff_eq!(*p, 0.125, epsilon = 1e-12);
        }
    }

    #[test]
    fn tensor_orders_leading_register_first() {
        let a = StateVector::basis(1, 1).unwrap();
        let b = StateVector::basis(2, 1).unwrap();
        let t = a.tensor(&b).unwrap();
        assert_eq!(t.amplitude(0b101), c(1., 0.));
        assert_eq!(ket_string(0b101, 3), "101");
    }

    #[test]
    fn sampling_is_seeded() {
        use rand::SeedableRng;
        let s = uniform(2);
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = s.sample_counts(1000, &mut r1);
        assert_eq!(a, s.sample_counts(1000, &mut r2));
        assert_eq!(a.iter().sum::<usize>(), 1000);
    }

    #[test]
    fn json_dump() {
        let s = StateVector::basis(2, 1).unwrap();
        let text = s.to_json().unwrap();
        assert!(text.starts_with(r#"[{"ket":"00","re":0.0,"im":0.0},{"ket":"01","re":1.0"#));
    }

    fn arb_state(m: usize) -> impl Strategy<Value = StateVector> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << m)
            .prop_filter_map("nonzero", |v| {
                StateVector::from_amplitudes(v.into_iter().map(|(r, i)| c(r, i)).collect()).ok()
            })
    }

    proptest! {
        #[test]
        fn projector_inverse_composition(psi in arb_state(3), s in arb_state(3), beta in -7.0f64..7.0) {
            let mut p = psi.clone();
            p.apply_projector_phase(&s, beta).unwrap();
            prop_assert!((p.norm() - 1.0).abs() < 1e-9);
            p.apply_projector_phase(&s, -beta).unwrap();
            for (x, y) in p.amplitudes().iter().zip(psi.amplitudes()) {
                prop_assert!((x - y).norm() < 1e-9);
            }
        }

        #[test]
        fn diagonal_gates_commute(psi in arb_state(3), mask in 0u64..8, angle in -4.0f64..4.0,
                                  d in prop::collection::vec(-2.0f64..2.0, 8), gamma in -4.0f64..4.0) {
            let d = DiagonalVector::new(3, d).unwrap();
            let term = PauliZTerm::new(mask, 0.7);
            let mut a = psi.clone();
            a.apply_z_term_phase(&term, angle).unwrap();
            a.apply_diagonal_phase(&d, gamma).unwrap();
            let mut b = psi.clone();
            b.apply_diagonal_phase(&d, gamma).unwrap();
            b.apply_z_term_phase(&term, angle).unwrap();
            for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }

        #[test]
        fn gates_preserve_norm(psi in arb_state(4), q in 0usize..4, beta in -7.0f64..7.0) {
            let mut p = psi.clone();
            p.apply_rx(q, beta).unwrap();
            p.apply_h(q).unwrap();
            prop_assert!((p.norm() - 1.0).abs() < 1e-9);
            prop_assert!((p.probabilities().values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
