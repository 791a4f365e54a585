//! Grover-mixer QAOA driven by a trained gadget.
//!
//! The gadget state `|s>` is both the initial state and the mixer axis:
//! each layer applies `exp(-i gamma H_f')` then `exp(-i beta |s><s|)`, where
//! `H_f'` is the Ising objective plus the flag penalty.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gadget::{FlagMode, TrainedGadget};
use crate::optimize::{multistart_with, Minimum, NelderMead};
use crate::pauli::{
    add_flag_penalty, diagonal_expectation, pauli_to_diagonal, qubo_to_ising, spectrum_extrema,
    DiagonalVector,
};
use crate::problem::{brute_force_solve, QcboInstance};
use crate::statevector::{ket_string, StateVector};

/// Probabilities below this are left out of JSON distributions.
pub const DISTRIBUTION_CUTOFF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveConfig {
    /// Number of GM-QAOA layers; `0` reports the gadget state itself.
    pub layers: usize,
    /// Flag penalty; `None` applies [`delta_rule`].
    pub delta: Option<f64>,
    pub seed: u64,
    /// Random restarts added to the grid-seeded search when `layers > 1`.
    pub restarts: usize,
    /// Points per axis of the `(gamma, beta)` grid that seeds the search.
    pub grid: usize,
    pub optimizer: NelderMead,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            layers: 1,
            delta: None,
            seed: 0,
            restarts: 8,
            grid: 32,
            optimizer: NelderMead::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub num_variables: usize,
    pub flag_count: usize,
    pub flag_mode: FlagMode,
    pub layers: usize,
    pub delta: f64,
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `<H_f'>` of the output state.
    pub expectation: f64,
    pub f_star: f64,
    pub f_min: f64,
    /// Largest eigenvalue of the unpenalized objective Hamiltonian.
    pub hf_max: f64,
    pub ar: f64,
    pub p_opt: f64,
    pub baseline: f64,
    /// Output probability on kets whose flags misreport feasibility.
    pub improper_mass: f64,
    pub gadget_ar: f64,
    pub seed: u64,
    pub evaluations: usize,
    /// Output probabilities over `|x_0 ... x_{n-1} v_0 ...>`.
    pub distribution: DiagonalVector,
    proper: Vec<bool>,
    optimal: Vec<bool>,
}

#[derive(Serialize)]
struct KetRecord {
    ket: String,
    p: f64,
    label: &'static str,
    optimal: bool,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    num_variables: usize,
    flag_count: usize,
    flag_mode: FlagMode,
    layers: usize,
    delta: f64,
    gammas: &'a [f64],
    betas: &'a [f64],
    expectation: f64,
    f_star: f64,
    f_min: f64,
    hf_max: f64,
    ar: f64,
    p_opt: f64,
    baseline: f64,
    improper_mass: f64,
    gadget_ar: f64,
    seed: u64,
    evaluations: usize,
    modal_ket: String,
    distribution: Vec<KetRecord>,
}

impl SolveReport {
    pub fn num_qubits(&self) -> usize {
        self.num_variables + self.flag_count
    }

    pub fn is_proper(&self, ket: usize) -> bool {
        self.proper[ket]
    }

    /// True for kets carrying an optimal assignment with every flag at 0.
    pub fn is_optimal(&self, ket: usize) -> bool {
        self.optimal[ket]
    }

    /// Kets by descending probability, ties by ascending index.
    pub fn ranked(&self) -> Vec<(usize, f64)> {
        let mut kets: Vec<(usize, f64)> = self
            .distribution
            .values()
            .iter()
            .copied()
            .enumerate()
            .collect();
        kets.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        kets
    }

    pub fn modal_ket(&self) -> String {
        ket_string(self.ranked()[0].0, self.num_qubits())
    }

    pub fn to_json(&self) -> Result<String> {
        let m = self.num_qubits();
        let distribution = self
            .distribution
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= DISTRIBUTION_CUTOFF)
            .map(|(i, &p)| KetRecord {
                ket: ket_string(i, m),
                p,
                label: if self.proper[i] { "proper" } else { "improper" },
                optimal: self.optimal[i],
            })
            .collect();
        let view = ReportJson {
            num_variables: self.num_variables,
            flag_count: self.flag_count,
            flag_mode: self.flag_mode,
            layers: self.layers,
            delta: self.delta,
            gammas: &self.gammas,
            betas: &self.betas,
            expectation: self.expectation,
            f_star: self.f_star,
            f_min: self.f_min,
            hf_max: self.hf_max,
            ar: self.ar,
            p_opt: self.p_opt,
            baseline: self.baseline,
            improper_mass: self.improper_mass,
            gadget_ar: self.gadget_ar,
            seed: self.seed,
            evaluations: self.evaluations,
            modal_ket: self.modal_ket(),
            distribution,
        };
        Ok(serde_json::to_string_pretty(&view)?)
    }
}

/// `5 + 2 |f_min|` with `f_min` the unconstrained minimum.
pub fn delta_rule(inst: &QcboInstance) -> Result<f64> {
    Ok(5.0 + 2.0 * brute_force_solve(inst)?.f_min.abs())
}

/// Chance of hitting an optimum by a uniform guess over `2^n` assignments.
pub fn random_guess_baseline(inst: &QcboInstance) -> Result<f64> {
    let bf = brute_force_solve(inst)?;
    Ok(bf.optimal_assignments().len() as f64 / (1u64 << inst.num_variables()) as f64)
}

fn check_gadget(inst: &QcboInstance, gadget: &TrainedGadget) -> Result<()> {
    let n = inst.num_variables();
    if let Some(&v) = gadget.spec.variables().iter().find(|&&v| v >= n) {
        return Err(Error::VariableOutOfRange { index: v, n });
    }
    if gadget.spec.global_constraints(n)? != inst.constraints() {
        return Err(Error::GadgetMismatch(
            "gadget constraints differ from the instance constraints".into(),
        ));
    }
    Ok(())
}

/// The gadget state on `n` variables plus its flags: non-support variables
/// are put in `|+>`.
pub fn embed_gadget_state(gadget: &TrainedGadget, n: usize) -> Result<StateVector> {
    let spec = &gadget.spec;
    if let Some(&v) = spec.variables().iter().find(|&&v| v >= n) {
        return Err(Error::VariableOutOfRange { index: v, n });
    }
    let flags = spec.flag_count();
    let mut psi = StateVector::init_zero(n + flags)?;
    for q in (0..n).filter(|q| !spec.variables().contains(q)) {
        psi.apply_h(q)?;
    }
    let map: Vec<usize> = spec
        .variables()
        .iter()
        .copied()
        .chain(n..n + flags)
        .collect();
    gadget.apply_to(&mut psi, &map)?;
    Ok(psi)
}

fn evolve(s: &StateVector, cost: &DiagonalVector, gammas: &[f64], betas: &[f64]) -> StateVector {
    let mut psi = s.clone();
    for (&g, &b) in gammas.iter().zip(betas) {
        psi.apply_diagonal_phase(cost, g)
            .expect("cost spans the register");
        psi.apply_projector_phase(s, b)
            .expect("mixer spans the register");
    }
    psi
}

/// Grid over one layer's `(gamma, beta)`; returns the best point, ties to
/// the first in row-major order.
fn grid_seed<F: Fn(&[f64]) -> f64>(f: &F, points: usize) -> (Vec<f64>, f64) {
    let step = TAU / points.max(1) as f64;
    let mut best = (vec![0.0, 0.0], f64::INFINITY);
    for i in 0..points.max(1) {
        for j in 0..points.max(1) {
            let x = [i as f64 * step, j as f64 * step];
            let v = f(&x);
            if v < best.1 {
                best = (x.to_vec(), v);
            }
        }
    }
    best
}

/// Runs GM-QAOA on `inst` with `gadget` as state preparation and mixer.
pub fn run_gm_qaoa(
    inst: &QcboInstance,
    gadget: &TrainedGadget,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    check_gadget(inst, gadget)?;
    let n = inst.num_variables();
    let bf = brute_force_solve(inst)?;
    let f_star = bf.optimal_value().ok_or(Error::NoFeasibleSolution)?;
    let hf = qubo_to_ising(inst.objective());
    let hf_max = spectrum_extrema(&hf).max;
    let delta = cfg.delta.unwrap_or(5.0 + 2.0 * bf.f_min.abs());
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidInstance(format!(
            "penalty {delta} must be finite and non-negative"
        )));
    }
    let flags = gadget.spec.flag_count();
    let cost = pauli_to_diagonal(&add_flag_penalty(&hf, delta, flags));
    let s = embed_gadget_state(gadget, n)?;

    let p = cfg.layers;
    let energy = |x: &[f64]| diagonal_expectation(&cost, &evolve(&s, &cost, &x[..p], &x[p..]));
    // angles are stored as (gammas, betas); a single layer is [gamma, beta]
    let (angles, evaluations) = if p == 0 {
        (Vec::new(), 0)
    } else {
        let (seed, _) = grid_seed(&|x: &[f64]| energy_one_layer(&s, &cost, x), cfg.grid);
        let mut start = vec![0.0; 2 * p];
        start[0] = seed[0];
        start[p] = seed[1];
        let seeded = cfg.optimizer.minimize(energy, &start);
        let grid_evals = cfg.grid.max(1).pow(2);
        if p == 1 || cfg.restarts == 0 {
            (seeded.x, grid_evals + seeded.evaluations)
        } else {
            let random = multistart_with(2 * p, cfg.restarts, cfg.seed, |x0| {
                cfg.optimizer.minimize(energy, x0)
            });
            let evals = grid_evals + seeded.evaluations + random.total_evaluations;
            let best: Minimum = if random.best.value < seeded.value {
                random.best
            } else {
                seeded
            };
            (best.x, evals)
        }
    };
    let (gammas, betas) = angles.split_at(p);
    let out = evolve(&s, &cost, gammas, betas);
    let expectation = diagonal_expectation(&cost, &out);
    let distribution = out.probabilities();

    let dim = 1usize << (n + flags);
    let proper: Vec<bool> = (0..dim)
        .map(|ket| {
            let x = ket >> flags;
            let wanted = match gadget.spec.flag_mode() {
                FlagMode::PerConstraint => inst.constraints().iter().fold(0, |acc, c| {
                    (acc << 1) | usize::from(!c.is_feasible_index(x))
                }),
                FlagMode::Single => usize::from(!inst.is_feasible_index(x)),
            };
            ket & ((1 << flags) - 1) == wanted
        })
        .collect();
    let mut optimal = vec![false; dim];
    for a in bf.optimal_assignments() {
        optimal[a.index() << flags] = true;
    }
    let probs = distribution.values();
    let p_opt = (0..dim).filter(|&k| optimal[k]).map(|k| probs[k]).sum();
    let improper_mass = (0..dim).filter(|&k| !proper[k]).map(|k| probs[k]).sum();
    // every value equal: the output is trivially optimal
    let ar = if (f_star - hf_max).abs() < 1e-12 {
        1.0
    } else {
        (expectation - hf_max) / (f_star - hf_max)
    };

    Ok(SolveReport {
        num_variables: n,
        flag_count: flags,
        flag_mode: gadget.spec.flag_mode(),
        layers: p,
        delta,
        gammas: gammas.to_vec(),
        betas: betas.to_vec(),
        expectation,
        f_star,
        f_min: bf.f_min,
        hf_max,
        ar,
        p_opt,
        baseline: bf.optimal_assignments().len() as f64 / (1u64 << n) as f64,
        improper_mass,
        gadget_ar: gadget.gadget_ar,
        seed: cfg.seed,
        evaluations,
        distribution,
        proper,
        optimal,
    })
}

fn energy_one_layer(s: &StateVector, cost: &DiagonalVector, x: &[f64]) -> f64 {
    diagonal_expectation(cost, &evolve(s, cost, &x[..1], &x[1..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gadget::{train_gadget, AnsatzConfig, GadgetSpec, TrainOptions};
    use crate::problem::{LinearConstraint, QuadraticObjective, Sense};
    use approx::assert_abs_diff_eq;

    fn two_var_instance() -> QcboInstance {
        let obj =
            QuadraticObjective::from_entries(2, [(0, 1, 1.0), (0, 0, 3.0), (1, 1, 4.0)]).unwrap();
        let c = LinearConstraint::sum_of(2, &[0, 1], Sense::Eq, 1).unwrap();
        QcboInstance::new(obj, vec![c]).unwrap()
    }

    fn gadget_for(inst: &QcboInstance, mode: FlagMode) -> TrainedGadget {
        let spec = GadgetSpec::new(inst.constraints(), mode).unwrap();
        let opts = TrainOptions {
            restarts: 6,
            ..TrainOptions::default()
        };
        train_gadget(&spec, AnsatzConfig::default(), &opts).unwrap()
    }

    #[test]
    fn delta_and_baseline_rules() {
        let inst = two_var_instance();
        assert_eq!(delta_rule(&inst).unwrap(), 5.0);
        assert_eq!(random_guess_baseline(&inst).unwrap(), 0.25);
        let zero = QcboInstance::new(
            QuadraticObjective::zero(2),
            vec![LinearConstraint::sum_of(2, &[0, 1], Sense::Eq, 1).unwrap()],
        )
        .unwrap();
        assert_eq!(delta_rule(&zero).unwrap(), 5.0);
        assert_eq!(random_guess_baseline(&zero).unwrap(), 0.5);
    }

    #[test]
    fn embedding_spreads_over_free_variables() {
        let c = LinearConstraint::sum_of(2, &[0, 1], Sense::Eq, 1).unwrap();
        let spec = GadgetSpec::new(&[c], FlagMode::PerConstraint).unwrap();
        let g = train_gadget(
            &spec,
            AnsatzConfig::default(),
            &TrainOptions {
                restarts: 4,
                ..Default::default()
            },
        )
        .unwrap();
        let own = g.prepare_state();
        let same = embed_gadget_state(&g, 2).unwrap();
        for (a, b) in own.amplitudes().iter().zip(same.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
        // n = 3: |x0 x1 x2 v>; x2 is free
        let wide = embed_gadget_state(&g, 3).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for ket in 0..16usize {
            let local = ((ket >> 2) << 1) | (ket & 1);
            assert!((wide.amplitude(ket) - own.amplitude(local) * r).norm() < 1e-12);
        }
        assert!(embed_gadget_state(&g, 1).is_err());
    }

    #[test]
    fn worked_two_variable_solve() {
        let inst = two_var_instance();
        let g = gadget_for(&inst, FlagMode::PerConstraint);
        let cfg = SolveConfig {
            delta: Some(10.0),
            ..SolveConfig::default()
        };
        let r = run_gm_qaoa(&inst, &g, &cfg).unwrap();
        assert_eq!(r.f_star, 3.0);
        assert_eq!(r.hf_max, 8.0);
        assert_eq!(r.modal_ket(), "100");
        assert_abs_diff_eq!(
            r.distribution.values().iter().sum::<f64>(),
            1.0,
            epsilon = 1e-9
        );
        assert!(r.p_opt > 0.9);
        assert!(r.improper_mass < 1e-6);
        let json = r.to_json().unwrap();
        assert!(json.contains(r#""ket": "100""#));
        assert!(json.contains(r#""label": "proper""#));
    }

    #[test]
    fn zero_layers_report_gadget_statistics() {
        let inst = two_var_instance();
        let g = gadget_for(&inst, FlagMode::PerConstraint);
        let cfg = SolveConfig {
            layers: 0,
            ..SolveConfig::default()
        };
        let r = run_gm_qaoa(&inst, &g, &cfg).unwrap();
        // one optimal ket among four proper ones
        assert_abs_diff_eq!(r.p_opt, 0.25, epsilon = 1e-6);
        assert!(r.gammas.is_empty());
    }

    #[test]
    fn mismatched_gadget_is_rejected() {
        let inst = two_var_instance();
        let other = LinearConstraint::sum_of(2, &[0, 1], Sense::Le, 1).unwrap();
        let spec = GadgetSpec::new(&[other], FlagMode::PerConstraint).unwrap();
        let g = train_gadget(
            &spec,
            AnsatzConfig::default(),
            &TrainOptions {
                restarts: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(
            run_gm_qaoa(&inst, &g, &SolveConfig::default()),
            Err(Error::GadgetMismatch(_))
        ));
    }

    #[test]
    fn infeasible_instance_is_refused() {
        let c = LinearConstraint::sum_of(2, &[0, 1], Sense::Eq, 3).unwrap();
        let inst = QcboInstance::new(QuadraticObjective::zero(2), vec![c]).unwrap();
        let g = gadget_for(&inst, FlagMode::Single);
        assert!(matches!(
            run_gm_qaoa(&inst, &g, &SolveConfig::default()),
            Err(Error::NoFeasibleSolution)
        ));
    }

    #[test]
    fn solving_is_deterministic() {
        let inst = two_var_instance();
        let g = gadget_for(&inst, FlagMode::PerConstraint);
        let cfg = SolveConfig {
            layers: 2,
            restarts: 3,
            seed: 9,
            ..SolveConfig::default()
        };
        let a = run_gm_qaoa(&inst, &g, &cfg).unwrap();
        let b = run_gm_qaoa(&inst, &g, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}
