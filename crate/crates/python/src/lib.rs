//! Python bindings. Constraints are passed as strings in the constraint
//! language, e.g. `"x0 + 2x3 <= 2"`.

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use qcbo_gadgets::experiment::{self, OverlapCase, SingleGrid, SweepOptions};
use qcbo_gadgets::gadget::{
    self as core_gadget, AnsatzConfig, AnsatzMode, FlagMode, GadgetSpec, TrainOptions,
};
use qcbo_gadgets::pauli::{self, DiagonalVector, PauliZTerm, ZHamiltonian};
use qcbo_gadgets::problem::{self, LinearConstraint, QcboInstance, QuadraticObjective};
use qcbo_gadgets::solver::{self, SolveConfig, SolveReport, DISTRIBUTION_CUTOFF};
use qcbo_gadgets::statevector::ket_string;
use qcbo_gadgets::{parse_constraints, Comparison, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn flag_mode(name: &str) -> PyResult<FlagMode> {
    match name {
        "per-constraint" => Ok(FlagMode::PerConstraint),
        "single" => Ok(FlagMode::Single),
        _ => Err(PyValueError::new_err(format!(
            "flag_mode must be \"per-constraint\" or \"single\", got {name:?}"
        ))),
    }
}

fn ansatz(name: &str, layers: usize) -> PyResult<AnsatzConfig> {
    let mode = match name {
        "ma-qaoa" => AnsatzMode::MultiAngle,
        "qaoa" => AnsatzMode::Shared,
        _ => {
            return Err(PyValueError::new_err(format!(
                "ansatz must be \"ma-qaoa\" or \"qaoa\", got {name:?}"
            )))
        }
    };
    Ok(AnsatzConfig { layers, mode })
}

fn spec_from(constraints: &[String], n: Option<usize>, mode: &str) -> PyResult<GadgetSpec> {
    let parsed = parse_constraints(constraints, n).map_err(to_py)?;
    GadgetSpec::new(&parsed, flag_mode(mode)?).map_err(to_py)
}

/// A linear constraint over binary variables.
#[pyclass(frozen, name = "Constraint", module = "qcbo_gadgets")]
struct PyConstraint(LinearConstraint);

#[pymethods]
impl PyConstraint {
    #[new]
    #[pyo3(signature = (text, n=None))]
    fn new(text: &str, n: Option<usize>) -> PyResult<Self> {
        qcbo_gadgets::parse_constraint(text, n)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn coeffs(&self) -> Vec<i64> {
        self.0.coeffs().to_vec()
    }

    #[getter]
    fn sense(&self) -> &'static str {
        self.0.sense().symbol()
    }

    #[getter]
    fn rhs(&self) -> i64 {
        self.0.rhs()
    }

    #[getter]
    fn support(&self) -> Vec<usize> {
        self.0.support().into_iter().collect()
    }

    fn is_satisfiable(&self) -> bool {
        self.0.is_satisfiable()
    }

    /// `bits[i]` is the value of `x_i`.
    fn is_feasible(&self, bits: Vec<bool>) -> PyResult<bool> {
        if bits.len() != self.0.num_variables() {
            return Err(PyValueError::new_err(format!(
                "expected {} bits, got {}",
                self.0.num_variables(),
                bits.len()
            )));
        }
        Ok(self.0.is_feasible(&problem::Assignment::new(bits)))
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Constraint({:?})", self.0.to_string())
    }
}

/// A diagonal Hamiltonian as a sum of Pauli-Z strings.
#[pyclass(frozen, name = "Hamiltonian", module = "qcbo_gadgets")]
struct PyHamiltonian(ZHamiltonian);

#[pymethods]
impl PyHamiltonian {
    /// `terms` is a list of `(qubits, coeff)`; an empty qubit list is the
    /// identity.
    #[new]
    fn new(num_qubits: usize, terms: Vec<(Vec<usize>, f64)>) -> PyResult<Self> {
        let terms = terms
            .into_iter()
            .map(|(qs, c)| PauliZTerm::new(qs.iter().fold(0u64, |acc, &q| acc | 1 << q), c));
        ZHamiltonian::from_terms(num_qubits, terms)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn num_qubits(&self) -> usize {
        self.0.num_qubits()
    }

    #[getter]
    fn terms(&self) -> Vec<(Vec<usize>, f64)> {
        self.0
            .terms()
            .iter()
            .map(|t| (t.qubits().collect(), t.coeff))
            .collect()
    }

    fn coeff(&self, qubits: Vec<usize>) -> f64 {
        self.0
            .coeff(qubits.iter().fold(0u64, |acc, &q| acc | 1 << q))
    }

    /// Eigenvalue of every basis ket, qubit 0 most significant.
    fn diagonal(&self) -> Vec<f64> {
        pauli::pauli_to_diagonal(&self.0).into_values()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Hamiltonian(num_qubits={}, terms={})",
            self.0.num_qubits(),
            self.0.terms().len()
        )
    }
}

#[pyfunction]
fn diagonal_to_pauli(values: Vec<f64>) -> PyResult<PyHamiltonian> {
    let d = DiagonalVector::from_values(values).map_err(to_py)?;
    Ok(PyHamiltonian(pauli::diagonal_to_pauli(&d)))
}

/// Ising form of `sum q_ij x_i x_j` given as `(i, j, coeff)` entries.
#[pyfunction]
fn qubo_to_ising(n: usize, entries: Vec<(usize, usize, f64)>) -> PyResult<PyHamiltonian> {
    let obj = QuadraticObjective::from_entries(n, entries).map_err(to_py)?;
    Ok(PyHamiltonian(pauli::qubo_to_ising(&obj)))
}

#[pyfunction]
fn add_flag_penalty(h: &PyHamiltonian, delta: f64, flag_count: usize) -> PyHamiltonian {
    PyHamiltonian(pauli::add_flag_penalty(&h.0, delta, flag_count))
}

/// A trained constraint gadget.
#[pyclass(frozen, name = "Gadget", module = "qcbo_gadgets")]
struct PyGadget(core_gadget::TrainedGadget);

#[pymethods]
impl PyGadget {
    #[getter]
    fn gadget_ar(&self) -> f64 {
        self.0.gadget_ar
    }

    #[getter]
    fn fidelity(&self) -> f64 {
        self.0.fidelity
    }

    #[getter]
    fn expectation(&self) -> f64 {
        self.0.expectation
    }

    #[getter]
    fn gammas(&self) -> Vec<f64> {
        self.0.gammas.clone()
    }

    #[getter]
    fn betas(&self) -> Vec<f64> {
        self.0.betas.clone()
    }

    #[getter]
    fn num_variables(&self) -> usize {
        self.0.spec.num_variables()
    }

    #[getter]
    fn flag_count(&self) -> usize {
        self.0.spec.flag_count()
    }

    #[getter]
    fn num_qubits(&self) -> usize {
        self.0.spec.num_qubits()
    }

    #[getter]
    fn hamiltonian(&self) -> PyHamiltonian {
        PyHamiltonian(self.0.hamiltonian.clone())
    }

    /// `-1` on properly labeled kets, `+1` elsewhere.
    fn labels(&self) -> Vec<f64> {
        self.0.labels().c_v.into_values()
    }

    fn amplitudes(&self) -> Vec<Complex64> {
        self.0.prepare_state().into_amplitudes()
    }

    fn probabilities(&self) -> Vec<f64> {
        self.0.prepare_state().probabilities().into_values()
    }

    fn proper_mass(&self) -> f64 {
        self.0.proper_mass()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Gadget(qubits={}, gadget_ar={:.6}, fidelity={:.6})",
            self.0.spec.num_qubits(),
            self.0.gadget_ar,
            self.0.fidelity
        )
    }
}

/// Trains a gadget for `constraints`.
#[pyfunction]
#[pyo3(signature = (constraints, n=None, *, flag_mode="per-constraint", ansatz="ma-qaoa", layers=1, seed=0, restarts=20))]
#[allow(clippy::too_many_arguments)]
fn train_gadget(
    py: Python<'_>,
    constraints: Vec<String>,
    n: Option<usize>,
    flag_mode: &str,
    ansatz: &str,
    layers: usize,
    seed: u64,
    restarts: usize,
) -> PyResult<PyGadget> {
    let spec = spec_from(&constraints, n, flag_mode)?;
    let config = self::ansatz(ansatz, layers)?;
    let opts = TrainOptions {
        seed,
        restarts,
        ..TrainOptions::default()
    };
    py.detach(|| core_gadget::train_gadget(&spec, config, &opts))
        .map(PyGadget)
        .map_err(to_py)
}

/// A QCBO: quadratic objective plus linear constraints.
#[pyclass(frozen, name = "Instance", module = "qcbo_gadgets")]
struct PyInstance(QcboInstance);

#[pymethods]
impl PyInstance {
    /// `q` holds `(i, j, coeff)` objective entries; constraints are strings.
    #[new]
    fn new(n: usize, q: Vec<(usize, usize, f64)>, constraints: Vec<String>) -> PyResult<Self> {
        let objective = QuadraticObjective::from_entries(n, q).map_err(to_py)?;
        let constraints = parse_constraints(&constraints, Some(n)).map_err(to_py)?;
        QcboInstance::new(objective, constraints)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        QcboInstance::from_json(text).map(Self).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    #[getter]
    fn num_variables(&self) -> usize {
        self.0.num_variables()
    }

    #[getter]
    fn constraints(&self) -> Vec<String> {
        self.0
            .constraints()
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    /// Objective value at the basis index `x` (x0 most significant).
    fn evaluate(&self, x: usize) -> f64 {
        self.0.objective().evaluate_index(x)
    }

    /// `(f*, optimal bitstrings)` by enumeration, or `None` if infeasible.
    fn brute_force(&self) -> PyResult<Option<(f64, Vec<String>)>> {
        let bf = problem::brute_force_solve(&self.0).map_err(to_py)?;
        let n = self.0.num_variables();
        Ok(bf.optimal_value().map(|v| {
            let kets = bf
                .optimal_assignments()
                .iter()
                .map(|a| ket_string(a.index(), n))
                .collect();
            (v, kets)
        }))
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(n={}, constraints={:?})",
            self.0.num_variables(),
            self.constraints()
        )
    }
}

/// Outcome of a GM-QAOA run.
#[pyclass(frozen, name = "SolveReport", module = "qcbo_gadgets")]
struct PyReport(SolveReport);

#[pymethods]
impl PyReport {
    #[getter]
    fn ar(&self) -> f64 {
        self.0.ar
    }

    #[getter]
    fn p_opt(&self) -> f64 {
        self.0.p_opt
    }

    #[getter]
    fn baseline(&self) -> f64 {
        self.0.baseline
    }

    #[getter]
    fn expectation(&self) -> f64 {
        self.0.expectation
    }

    #[getter]
    fn f_star(&self) -> f64 {
        self.0.f_star
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta
    }

    #[getter]
    fn improper_mass(&self) -> f64 {
        self.0.improper_mass
    }

    #[getter]
    fn gammas(&self) -> Vec<f64> {
        self.0.gammas.clone()
    }

    #[getter]
    fn betas(&self) -> Vec<f64> {
        self.0.betas.clone()
    }

    #[getter]
    fn modal_ket(&self) -> String {
        self.0.modal_ket()
    }

    /// Kets with probability at least 1e-6, most probable first.
    fn distribution(&self) -> Vec<(String, f64)> {
        let m = self.0.num_qubits();
        self.0
            .ranked()
            .into_iter()
            .filter(|&(_, p)| p >= DISTRIBUTION_CUTOFF)
            .map(|(k, p)| (ket_string(k, m), p))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveReport(ar={:.6}, p_opt={:.6}, modal_ket={:?})",
            self.0.ar,
            self.0.p_opt,
            self.0.modal_ket()
        )
    }
}

/// Runs GM-QAOA on `instance` with `gadget` as state preparation.
#[pyfunction]
#[pyo3(signature = (instance, gadget, *, layers=1, delta=None, seed=0, grid=32))]
fn solve(
    py: Python<'_>,
    instance: &PyInstance,
    gadget: &PyGadget,
    layers: usize,
    delta: Option<f64>,
    seed: u64,
    grid: usize,
) -> PyResult<PyReport> {
    let cfg = SolveConfig {
        layers,
        delta,
        seed,
        grid,
        ..SolveConfig::default()
    };
    py.detach(|| solver::run_gm_qaoa(&instance.0, &gadget.0, &cfg))
        .map(PyReport)
        .map_err(to_py)
}

/// Canonicalized gadget library, optionally backed by a JSON file.
#[pyclass(name = "GadgetStore", module = "qcbo_gadgets")]
struct PyStore(qcbo_gadgets::GadgetStore);

#[pymethods]
impl PyStore {
    #[new]
    #[pyo3(signature = (path=None))]
    fn new(path: Option<std::path::PathBuf>) -> PyResult<Self> {
        match path {
            Some(p) => qcbo_gadgets::GadgetStore::open(p).map(Self).map_err(to_py),
            None => Ok(Self(qcbo_gadgets::GadgetStore::in_memory())),
        }
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn keys(&self) -> Vec<String> {
        self.0.keys().map(|k| k.as_str().to_string()).collect()
    }

    /// Returns `(gadget, hit)`; a miss trains and stores the gadget.
    #[pyo3(signature = (constraints, n=None, *, flag_mode="per-constraint", ansatz="ma-qaoa", layers=1, seed=0, restarts=20))]
    #[allow(clippy::too_many_arguments)]
    fn get_or_train(
        &mut self,
        py: Python<'_>,
        constraints: Vec<String>,
        n: Option<usize>,
        flag_mode: &str,
        ansatz: &str,
        layers: usize,
        seed: u64,
        restarts: usize,
    ) -> PyResult<(PyGadget, bool)> {
        let spec = spec_from(&constraints, n, flag_mode)?;
        let config = self::ansatz(ansatz, layers)?;
        let opts = TrainOptions {
            seed,
            restarts,
            ..TrainOptions::default()
        };
        let store = &mut self.0;
        py.detach(|| store.get_or_train(&spec, &config, &opts))
            .map(|(g, hit)| (PyGadget(g), hit))
            .map_err(to_py)
    }

    fn save(&self) -> PyResult<()> {
        self.0.save().map_err(to_py)
    }
}

fn csv_string(write: impl FnOnce(&mut Vec<u8>) -> qcbo_gadgets::Result<()>) -> PyResult<String> {
    let mut out = Vec::new();
    write(&mut out).map_err(to_py)?;
    String::from_utf8(out).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Single-constraint sweep; returns the CSV text.
#[pyfunction]
#[pyo3(signature = (*, seed=0, n_max=5, b_max=5, strict=false, instances=10, restarts=20))]
fn sweep_single(
    py: Python<'_>,
    seed: u64,
    n_max: usize,
    b_max: i64,
    strict: bool,
    instances: usize,
    restarts: usize,
) -> PyResult<String> {
    let grid = SingleGrid {
        n_max,
        b_max,
        comparisons: if strict {
            Comparison::ALL.to_vec()
        } else {
            Comparison::NON_STRICT.to_vec()
        },
    };
    let opts = SweepOptions {
        seed,
        instances,
        restarts,
        ..SweepOptions::default()
    };
    let sweep = py
        .detach(|| experiment::sweep_single(&grid, &opts, None))
        .map_err(to_py)?;
    csv_string(|out| sweep.write_csv(out))
}

/// Two-constraint sweep for overlap `case` in 1..=3; returns the CSV text.
#[pyfunction]
#[pyo3(signature = (case, *, sets=10, seed=0, instances=10, restarts=20))]
fn sweep_two(
    py: Python<'_>,
    case: u8,
    sets: usize,
    seed: u64,
    instances: usize,
    restarts: usize,
) -> PyResult<String> {
    let case = OverlapCase::from_number(case).map_err(to_py)?;
    let opts = SweepOptions {
        seed,
        instances,
        restarts,
        ..SweepOptions::default()
    };
    let sweep = py
        .detach(|| experiment::sweep_two(case, sets, &opts, None))
        .map_err(to_py)?;
    csv_string(|out| sweep.write_csv(out))
}

#[pymodule]
#[pyo3(name = "qcbo_gadgets")]
fn qcbo_gadgets_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConstraint>()?;
    m.add_class::<PyHamiltonian>()?;
    m.add_class::<PyGadget>()?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyStore>()?;
    m.add_function(wrap_pyfunction!(diagonal_to_pauli, m)?)?;
    m.add_function(wrap_pyfunction!(qubo_to_ising, m)?)?;
    m.add_function(wrap_pyfunction!(add_flag_penalty, m)?)?;
    m.add_function(wrap_pyfunction!(train_gadget, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_single, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_two, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
