//! Constraint gadgets.
//!
//! A gadget acts on the variables in the union of its constraints' supports
//! followed by one or more flag qubits. A basis ket is *properly labeled* when
//! its flags report the feasibility of its variable bits. The gadget
//! Hamiltonian is `-1` on properly labeled kets and `+1` elsewhere; a
//! (multi-angle) QAOA circuit is trained to reach its ground space, which
//! ideally yields the equal superposition of properly labeled kets.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{random_starts, search_from, Lbfgs, Minimum, NelderMead};
use crate::pauli::{
    diagonal_expectation, diagonal_to_pauli, fwht, pauli_to_diagonal, reverse_bits, DiagonalVector,
    PauliZTerm, ZHamiltonian,
};
use crate::problem::LinearConstraint;
use crate::statevector::{im_x_overlap, phase_kernel, rx_kernel, StateVector};

/// Largest union-of-supports size accepted for labeling.
pub const MAX_GADGET_VARIABLES: usize = 12;

/// Largest total register accepted for training.
pub const MAX_GADGET_QUBITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlagMode {
    /// One flag per constraint, set when that constraint is violated.
    PerConstraint,
    /// One shared flag, set when any constraint is violated.
    Single,
}

impl fmt::Display for FlagMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlagMode::PerConstraint => "per-constraint",
            FlagMode::Single => "single",
        })
    }
}

/// Constraints re-indexed over their union of supports.
///
/// Register layout: variable qubits in ascending original index, then the
/// flag qubits `v0, v1, ...` in constraint order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct GadgetSpec {
    variables: Vec<usize>,
    constraints: Vec<LinearConstraint>,
    flag_mode: FlagMode,
}

#[derive(Deserialize)]
struct RawSpec {
    variables: Vec<usize>,
    constraints: Vec<LinearConstraint>,
    flag_mode: FlagMode,
}

impl TryFrom<RawSpec> for GadgetSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        GadgetSpec::from_local(raw.variables, raw.constraints, raw.flag_mode)
    }
}

impl GadgetSpec {
    /// Builds a spec from constraints over a common set of `n` variables.
    pub fn new(constraints: &[LinearConstraint], flag_mode: FlagMode) -> Result<Self> {
        let Some(first) = constraints.first() else {
            return Err(Error::InvalidInstance(
                "a gadget needs at least one constraint".into(),
            ));
        };
        let n = first.num_variables();
        let mut union = std::collections::BTreeSet::new();
        for c in constraints {
            if c.num_variables() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: c.num_variables(),
                });
            }
            union.extend(c.support());
        }
        let variables: Vec<usize> = union.into_iter().collect();
        let local = constraints
            .iter()
            .map(|c| c.restricted_to(&variables))
            .collect::<Result<Vec<_>>>()?;
        Self::from_local(variables, local, flag_mode)
    }

    /// Builds a spec from constraints already expressed over local variables
    /// `0..variables.len()`, where local `j` stands for `variables[j]`.
    pub fn from_local(
        variables: Vec<usize>,
        constraints: Vec<LinearConstraint>,
        flag_mode: FlagMode,
    ) -> Result<Self> {
        if constraints.is_empty() {
            return Err(Error::InvalidInstance(
                "a gadget needs at least one constraint".into(),
            ));
        }
        if variables.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInstance(
                "gadget variables must be strictly ascending".into(),
            ));
        }
        for c in &constraints {
            if c.num_variables() != variables.len() {
                return Err(Error::DimensionMismatch {
                    expected: variables.len(),
                    actual: c.num_variables(),
                });
            }
        }
        Ok(Self {
            variables,
            constraints,
            flag_mode,
        })
    }

    /// Original indices of the gadget's variable qubits.
    pub fn variables(&self) -> &[usize] {
        &self.variables
    }

    /// Constraints over local variable indices.
    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn flag_mode(&self) -> FlagMode {
        self.flag_mode
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn flag_count(&self) -> usize {
        match self.flag_mode {
            FlagMode::PerConstraint => self.constraints.len(),
            FlagMode::Single => 1,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_variables() + self.flag_count()
    }

    /// Constraints lifted back onto `n` original variables.
    pub fn global_constraints(&self, n: usize) -> Result<Vec<LinearConstraint>> {
        self.constraints
            .iter()
            .map(|c| c.lifted(&self.variables, n))
            .collect()
    }

    /// The flag pattern (flag 0 most significant) that properly labels the
    /// variable pattern `var_index`.
    pub fn proper_flags(&self, var_index: usize) -> usize {
        match self.flag_mode {
            FlagMode::PerConstraint => self.constraints.iter().fold(0, |acc, c| {
                (acc << 1) | usize::from(!c.is_feasible_index(var_index))
            }),
            FlagMode::Single => usize::from(
                !self
                    .constraints
                    .iter()
                    .all(|c| c.is_feasible_index(var_index)),
            ),
        }
    }

    pub fn is_proper(&self, ket: usize) -> bool {
        let f = self.flag_count();
        let flags = ket & ((1 << f) - 1);
        flags == self.proper_flags(ket >> f)
    }

    /// Spec with local variable `j` taken from this spec's local variable
    /// `order[j]`. Variable indices are renumbered `0..k`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        let k = self.num_variables();
        if order.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: order.len(),
            });
        }
        let constraints = self
            .constraints
            .iter()
            .map(|c| {
                let coeffs = order.iter().map(|&j| c.coeffs()[j]).collect();
                LinearConstraint::new(coeffs, c.sense(), c.rhs())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_local((0..k).collect(), constraints, self.flag_mode)
    }

    /// The same constraints placed on different original variables.
    pub fn with_variables(&self, variables: Vec<usize>) -> Result<Self> {
        Self::from_local(variables, self.constraints.clone(), self.flag_mode)
    }
}

/// The `+-1` labeling diagonal: `-1` on properly labeled kets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDiagonal {
    pub c_v: DiagonalVector,
}

impl LabeledDiagonal {
    pub fn proper_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.c_v
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v < 0.0)
            .map(|(i, _)| i)
    }

    pub fn proper_count(&self) -> usize {
        self.proper_indices().count()
    }

    /// Probability mass of `psi` on properly labeled kets.
    pub fn proper_mass(&self, psi: &StateVector) -> f64 {
        self.proper_indices()
            .map(|i| psi.amplitude(i).norm_sqr())
            .sum()
    }
}

pub fn label_states(spec: &GadgetSpec) -> Result<LabeledDiagonal> {
    let k = spec.num_variables();
    if k > MAX_GADGET_VARIABLES {
        return Err(Error::TooLarge {
            what: "gadget variables",
            value: k,
            limit: MAX_GADGET_VARIABLES,
        });
    }
    let m = spec.num_qubits();
    let values = (0..1usize << m)
        .map(|ket| if spec.is_proper(ket) { -1.0 } else { 1.0 })
        .collect();
    Ok(LabeledDiagonal {
        c_v: DiagonalVector::new(m, values)?,
    })
}

pub fn build_gadget_hamiltonian(labels: &LabeledDiagonal) -> ZHamiltonian {
    diagonal_to_pauli(&labels.c_v)
}

/// Equal superposition, with real positive amplitudes, of properly labeled
/// kets.
pub fn ideal_feasible_state(labels: &LabeledDiagonal) -> StateVector {
    let amps = labels
        .c_v
        .values()
        .iter()
        .map(|&v| num_complex::Complex64::new(if v < 0.0 { 1.0 } else { 0.0 }, 0.0))
        .collect();
    StateVector::from_amplitudes(amps).expect("every labeling has proper kets")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnsatzMode {
    /// One cost angle and one mixer angle per layer.
    #[serde(rename = "qaoa")]
    Shared,
    /// One angle per non-identity Hamiltonian term and one per qubit, per
    /// layer.
    #[serde(rename = "ma-qaoa")]
    MultiAngle,
}

impl fmt::Display for AnsatzMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnsatzMode::Shared => "qaoa",
            AnsatzMode::MultiAngle => "ma-qaoa",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnsatzConfig {
    pub layers: usize,
    pub mode: AnsatzMode,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        Self {
            layers: 1,
            mode: AnsatzMode::MultiAngle,
        }
    }
}

/// `H^m |0>` followed by `layers` rounds of Z-term phases and per-qubit
/// `exp(-i beta X)` mixers.
///
/// Angle vectors are layer-major. Cost angles follow the Hamiltonian's
/// non-identity terms in ascending mask order; the identity only contributes
/// a global phase and has no angle.
///
/// Circuits written with half-angle gates, `exp(-i t/2 Z..)` and
/// `exp(-i t/2 X)`, map onto this ansatz by halving every angle.
#[derive(Debug, Clone)]
pub struct Ansatz {
    m: usize,
    config: AnsatzConfig,
    terms: Vec<PauliZTerm>,
    // diagonal of the Hamiltonian without its identity term
    shared_diag: Vec<f64>,
}

impl Ansatz {
    pub fn new(h: &ZHamiltonian, config: AnsatzConfig) -> Self {
        assert!(config.layers >= 1, "an ansatz needs at least one layer");
        let terms: Vec<PauliZTerm> = h.non_identity_terms().copied().collect();
        let no_identity =
            ZHamiltonian::from_terms(h.num_qubits(), terms.iter().copied()).expect("valid terms");
        Self {
            m: h.num_qubits(),
            config,
            terms,
            shared_diag: pauli_to_diagonal(&no_identity).into_values(),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.m
    }

    pub fn config(&self) -> AnsatzConfig {
        self.config
    }

    pub fn terms(&self) -> &[PauliZTerm] {
        &self.terms
    }

    pub fn gammas_per_layer(&self) -> usize {
        match self.config.mode {
            AnsatzMode::Shared => 1,
            AnsatzMode::MultiAngle => self.terms.len(),
        }
    }

    pub fn betas_per_layer(&self) -> usize {
        match self.config.mode {
            AnsatzMode::Shared => 1,
            AnsatzMode::MultiAngle => self.m,
        }
    }

    pub fn num_gammas(&self) -> usize {
        self.config.layers * self.gammas_per_layer()
    }

    pub fn num_betas(&self) -> usize {
        self.config.layers * self.betas_per_layer()
    }

    pub fn num_parameters(&self) -> usize {
        self.num_gammas() + self.num_betas()
    }

    fn check_lengths(&self, gammas: &[f64], betas: &[f64]) -> Result<()> {
        if gammas.len() != self.num_gammas() {
            return Err(Error::AngleCount {
                what: "cost angles",
                expected: self.num_gammas(),
                actual: gammas.len(),
            });
        }
        if betas.len() != self.num_betas() {
            return Err(Error::AngleCount {
                what: "mixer angles",
                expected: self.num_betas(),
                actual: betas.len(),
            });
        }
        Ok(())
    }

    fn beta(&self, betas: &[f64], layer: usize, qubit: usize) -> f64 {
        match self.config.mode {
            AnsatzMode::Shared => betas[layer],
            AnsatzMode::MultiAngle => betas[layer * self.m + qubit],
        }
    }

    /// Phase vector and scale of the cost unitary in `layer`.
    fn layer_phases<'a>(
        &'a self,
        gammas: &[f64],
        layer: usize,
        buf: &'a mut [f64],
    ) -> (&'a [f64], f64) {
        match self.config.mode {
            AnsatzMode::Shared => (&self.shared_diag, gammas[layer]),
            AnsatzMode::MultiAngle => {
                // phase(x) = sum_S gamma_S c_S (-1)^{x.S}, built with one transform
                buf.iter_mut().for_each(|p| *p = 0.0);
                let t = self.terms.len();
                for (term, g) in self.terms.iter().zip(&gammas[layer * t..][..t]) {
                    buf[reverse_bits(term.mask, self.m) as usize] = g * term.coeff;
                }
                fwht(buf);
                (buf, 1.0)
            }
        }
    }

    /// Prepares the ansatz state on its own register.
    pub fn prepare(&self, gammas: &[f64], betas: &[f64]) -> Result<StateVector> {
        self.check_lengths(gammas, betas)?;
        let mut psi = StateVector::init_zero(self.m)?;
        psi.apply_h_all();
        let mut buf = vec![0.0; 1 << self.m];
        for layer in 0..self.config.layers {
            let (phases, scale) = self.layer_phases(gammas, layer, &mut buf);
            psi.apply_phases_scaled(phases, scale);
            for q in 0..self.m {
                psi.apply_rx(q, self.beta(betas, layer, q))?;
            }
        }
        Ok(psi)
    }

    /// `<psi|D|psi>` for a diagonal observable `D`, with its gradient with
    /// respect to `(gammas, betas)` computed by one backward sweep.
    pub fn value_and_gradient(
        &self,
        observable: &[f64],
        gammas: &[f64],
        betas: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let mut psi = self.prepare(gammas, betas)?.into_amplitudes();
        if observable.len() != psi.len() {
            return Err(Error::DimensionMismatch {
                expected: psi.len(),
                actual: observable.len(),
            });
        }
        let mut lam: Vec<_> = psi.iter().zip(observable).map(|(a, d)| a * d).collect();
        let value = psi
            .iter()
            .zip(observable)
            .map(|(a, d)| a.norm_sqr() * d)
            .sum();

        let ng = gammas.len();
        let mut grad = vec![0.0; ng + betas.len()];
        let mut buf = vec![0.0; psi.len()];
        let mut overlap = vec![0.0; psi.len()];
        let t = self.terms.len();
        for layer in (0..self.config.layers).rev() {
            for q in 0..self.m {
                let g = 2.0 * im_x_overlap(&lam, &psi, self.m, q);
                match self.config.mode {
                    AnsatzMode::Shared => grad[ng + layer] += g,
                    AnsatzMode::MultiAngle => grad[ng + layer * self.m + q] = g,
                }
                let b = self.beta(betas, layer, q);
                rx_kernel(&mut psi, self.m, q, -b);
                rx_kernel(&mut lam, self.m, q, -b);
            }
            for ((w, l), p) in overlap.iter_mut().zip(&lam).zip(&psi) {
                *w = (l.conj() * p).im;
            }
            match self.config.mode {
                AnsatzMode::Shared => {
                    grad[layer] = 2.0
                        * self
                            .shared_diag
                            .iter()
                            .zip(&overlap)
                            .map(|(d, w)| d * w)
                            .sum::<f64>();
                }
                AnsatzMode::MultiAngle => {
                    fwht(&mut overlap);
                    for (i, term) in self.terms.iter().enumerate() {
                        grad[layer * t + i] =
                            2.0 * term.coeff * overlap[reverse_bits(term.mask, self.m) as usize];
                    }
                }
            }
            let (phases, scale) = self.layer_phases(gammas, layer, &mut buf);
            phase_kernel(&mut psi, phases, -scale);
            phase_kernel(&mut lam, phases, -scale);
        }
        Ok((value, grad))
    }

    /// Applies the same circuit gate by gate to `qubit_map[q]` of a larger
    /// register.
    pub fn apply(
        &self,
        psi: &mut StateVector,
        qubit_map: &[usize],
        gammas: &[f64],
        betas: &[f64],
    ) -> Result<()> {
        self.check_lengths(gammas, betas)?;
        if qubit_map.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                actual: qubit_map.len(),
            });
        }
        for &q in qubit_map {
            psi.apply_h(q)?;
        }
        for layer in 0..self.config.layers {
            for (i, t) in self.terms.iter().enumerate() {
                let angle = match self.config.mode {
                    AnsatzMode::Shared => gammas[layer],
                    AnsatzMode::MultiAngle => gammas[layer * self.terms.len() + i],
                };
                let mask = t.qubits().fold(0u64, |acc, q| acc | 1 << qubit_map[q]);
                psi.apply_z_term_phase(&PauliZTerm::new(mask, t.coeff), angle)?;
            }
            for (q, &target) in qubit_map.iter().enumerate() {
                psi.apply_rx(target, self.beta(betas, layer, q))?;
            }
        }
        Ok(())
    }
}

/// Ansatz state for explicit angles.
pub fn ansatz_state(
    h: &ZHamiltonian,
    config: AnsatzConfig,
    gammas: &[f64],
    betas: &[f64],
) -> Result<StateVector> {
    if config.layers == 0 {
        return Err(Error::InvalidInstance(
            "an ansatz needs at least one layer".into(),
        ));
    }
    Ansatz::new(h, config).prepare(gammas, betas)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub seed: u64,
    /// Restarts from angles uniform in `[0, 2pi)`, refined by Nelder-Mead and
    /// then `polish`.
    pub restarts: usize,
    /// Extra restarts from angles uniform in `[-local_scale, local_scale)`,
    /// i.e. close to the uniform superposition, refined by `polish` alone.
    pub local_restarts: usize,
    pub local_scale: f64,
    pub optimizer: NelderMead,
    /// Gradient refinement applied to each restart's Nelder-Mead result.
    pub polish: Option<Lbfgs>,
    /// Restarts whose `<H_C>` is within this of the best count as tied; the
    /// tie goes to the state closest to the ideal superposition.
    pub tie_tolerance: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 20,
            local_restarts: 10,
            local_scale: 0.1,
            optimizer: NelderMead::default(),
            polish: Some(Lbfgs::default()),
            tie_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerInfo {
    pub seed: u64,
    pub restarts: usize,
    pub best_restart: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// A trained gadget together with its quality metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedGadget {
    pub spec: GadgetSpec,
    pub hamiltonian: ZHamiltonian,
    pub config: AnsatzConfig,
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `<H_C>` of the prepared state.
    pub expectation: f64,
    /// `(1 - <H_C>) / 2`, the probability mass on properly labeled kets.
    pub gadget_ar: f64,
    /// `|<prepared|ideal>|`.
    pub fidelity: f64,
    pub optimizer: OptimizerInfo,
}

fn gadget_ar_from(expectation: f64) -> f64 {
    ((1.0 - expectation) / 2.0).clamp(0.0, 1.0)
}

/// Trains the gadget circuit on `<H_C>` from global and near-zero random
/// starts. Among restarts tied on `<H_C>` the one closest to the ideal
/// superposition wins.
pub fn train_gadget(
    spec: &GadgetSpec,
    config: AnsatzConfig,
    opts: &TrainOptions,
) -> Result<TrainedGadget> {
    if spec.num_qubits() > MAX_GADGET_QUBITS {
        return Err(Error::TooLarge {
            what: "gadget qubits",
            value: spec.num_qubits(),
            limit: MAX_GADGET_QUBITS,
        });
    }
    if config.layers == 0 {
        return Err(Error::InvalidInstance(
            "an ansatz needs at least one layer".into(),
        ));
    }
    let labels = label_states(spec)?;
    let hamiltonian = build_gadget_hamiltonian(&labels);
    let ansatz = Ansatz::new(&hamiltonian, config);
    let ng = ansatz.num_gammas();
    let c_v = &labels.c_v;
    let objective = |x: &[f64]| {
        let psi = ansatz
            .prepare(&x[..ng], &x[ng..])
            .expect("angle vector has the ansatz length");
        diagonal_expectation(c_v, &psi)
    };
    let smooth = |x: &[f64]| {
        ansatz
            .value_and_gradient(c_v.values(), &x[..ng], &x[ng..])
            .expect("angle vector has the ansatz length")
    };
    let dim = ansatz.num_parameters();
    let global = opts.restarts.max(1);
    let mut starts = random_starts(dim, global, opts.seed, 0, 0.0..TAU);
    starts.extend(random_starts(
        dim,
        opts.local_restarts,
        opts.seed,
        global as u64,
        -opts.local_scale..opts.local_scale,
    ));
    let search = |i: usize, x0: &[f64]| match (&opts.polish, i < global) {
        (None, true) => opts.optimizer.minimize(objective, x0),
        (None, false) => NelderMead {
            initial_step: opts.local_scale,
            ..opts.optimizer
        }
        .minimize(objective, x0),
        (Some(lbfgs), true) => {
            let coarse = opts.optimizer.minimize(objective, x0);
            let fine = lbfgs.minimize(&smooth, &coarse.x);
            Minimum {
                evaluations: coarse.evaluations + fine.evaluations,
                converged: coarse.converged || fine.converged,
                ..fine
            }
        }
        (Some(lbfgs), false) => lbfgs.minimize(&smooth, x0),
    };
    let run = search_from(&starts, search);
    // the ground space is degenerate; among equally good restarts keep the
    // one nearest the equal superposition
    let ideal = ideal_feasible_state(&labels);
    let fidelities: Vec<f64> = run
        .runs
        .iter()
        .map(|m| {
            let psi = ansatz.prepare(&m.x[..ng], &m.x[ng..])?;
            Ok(psi.fidelity(&ideal))
        })
        .collect::<Result<_>>()?;
    let cutoff = run.best.value + opts.tie_tolerance;
    let chosen = (0..run.runs.len())
        .filter(|&r| run.runs[r].value <= cutoff)
        .fold(run.best_restart, |best, r| {
            if fidelities[r] > fidelities[best] {
                r
            } else {
                best
            }
        });
    let winner = &run.runs[chosen];
    let (gammas, betas) = winner.x.split_at(ng);
    let psi = ansatz.prepare(gammas, betas)?;
    let expectation = diagonal_expectation(c_v, &psi);
    let fidelity = fidelities[chosen];
    Ok(TrainedGadget {
        spec: spec.clone(),
        hamiltonian,
        config,
        gammas: gammas.to_vec(),
        betas: betas.to_vec(),
        expectation,
        gadget_ar: gadget_ar_from(expectation),
        fidelity,
        optimizer: OptimizerInfo {
            seed: opts.seed,
            restarts: starts.len(),
            best_restart: chosen,
            evaluations: run.total_evaluations,
            converged: winner.converged,
        },
    })
}

impl TrainedGadget {
    pub fn ansatz(&self) -> Ansatz {
        Ansatz::new(&self.hamiltonian, self.config)
    }

    /// The state the trained circuit prepares on the gadget register.
    pub fn prepare_state(&self) -> StateVector {
        self.ansatz()
            .prepare(&self.gammas, &self.betas)
            .expect("trained angles match the ansatz")
    }

    pub fn labels(&self) -> LabeledDiagonal {
        label_states(&self.spec).expect("spec was labeled during training")
    }

    pub fn proper_mass(&self) -> f64 {
        self.labels().proper_mass(&self.prepare_state())
    }

    /// Runs the gadget circuit on `qubit_map[q]` of a larger register.
    pub fn apply_to(&self, psi: &mut StateVector, qubit_map: &[usize]) -> Result<()> {
        self.ansatz()
            .apply(psi, qubit_map, &self.gammas, &self.betas)
    }

    /// Moves the gadget onto `target`, whose local variable `var_perm[j]`
    /// plays the role of this gadget's local variable `j`. Flags keep their
    /// positions. The relabeled circuit prepares the correspondingly permuted
    /// state.
    pub fn relabel(&self, target: &GadgetSpec, var_perm: &[usize]) -> Result<TrainedGadget> {
        let k = self.spec.num_variables();
        let m = self.spec.num_qubits();
        if target.num_qubits() != m || target.num_variables() != k || var_perm.len() != k {
            return Err(Error::GadgetMismatch(
                "relabeling target has a different register shape".into(),
            ));
        }
        let mut seen = vec![false; k];
        for &j in var_perm {
            if j >= k || std::mem::replace(&mut seen[j], true) {
                return Err(Error::GadgetMismatch(
                    "variable map is not a permutation".into(),
                ));
            }
        }
        let qubit_map: Vec<usize> = (0..m)
            .map(|q| if q < k { var_perm[q] } else { q })
            .collect();
        let hamiltonian = self.hamiltonian.remap_qubits(&qubit_map, m)?;
        let expected = build_gadget_hamiltonian(&label_states(target)?);
        if !same_hamiltonian(&hamiltonian, &expected) {
            return Err(Error::GadgetMismatch(
                "permuted gadget Hamiltonian does not label the target constraints".into(),
            ));
        }

        let old_terms: Vec<PauliZTerm> = self.hamiltonian.non_identity_terms().copied().collect();
        let new_masks: Vec<u64> = hamiltonian.non_identity_terms().map(|t| t.mask).collect();
        let gammas = match self.config.mode {
            AnsatzMode::Shared => self.gammas.clone(),
            AnsatzMode::MultiAngle => {
                let t = old_terms.len();
                // position of each old term in the new ascending order
                let position: Vec<usize> = old_terms
                    .iter()
                    .map(|term| {
                        let mapped = term.qubits().fold(0u64, |acc, q| acc | 1 << qubit_map[q]);
                        new_masks
                            .binary_search(&mapped)
                            .expect("remapped masks are present")
                    })
                    .collect();
                let mut out = vec![0.0; self.gammas.len()];
                for layer in 0..self.config.layers {
                    for (i, &p) in position.iter().enumerate() {
                        out[layer * t + p] = self.gammas[layer * t + i];
                    }
                }
                out
            }
        };
        let betas = match self.config.mode {
            AnsatzMode::Shared => self.betas.clone(),
            AnsatzMode::MultiAngle => {
                let mut out = vec![0.0; self.betas.len()];
                for layer in 0..self.config.layers {
                    for q in 0..m {
                        out[layer * m + qubit_map[q]] = self.betas[layer * m + q];
                    }
                }
                out
            }
        };
        Ok(TrainedGadget {
            spec: target.clone(),
            hamiltonian,
            gammas,
            betas,
            ..self.clone()
        })
    }
}

fn same_hamiltonian(a: &ZHamiltonian, b: &ZHamiltonian) -> bool {
    a.num_qubits() == b.num_qubits()
        && a.terms().len() == b.terms().len()
        && a.terms()
            .iter()
            .zip(b.terms())
            .all(|(x, y)| x.mask == y.mask && (x.coeff - y.coeff).abs() < 1e-9)
}
