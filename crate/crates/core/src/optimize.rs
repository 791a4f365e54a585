//! Derivative-free local search for variational angles.

use std::cell::{Cell, RefCell};
use std::f64::consts::TAU;
use std::ops::Range;

use argmin::core::{CostFunction, Executor, Gradient, State, TerminationReason};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Nelder-Mead with dimension-adaptive coefficients (Gao and Han), which
/// reduce to the classic 1 / 2 / 0.5 / 0.5 values in two dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop once the spread of function values over the simplex is below this.
    pub ftol: f64,
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            ftol: 1e-10,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl NelderMead {
    pub fn minimize<F>(&self, mut f: F, x0: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        if n == 0 {
            return Minimum {
                x: Vec::new(),
                value: f(&[]),
                evaluations: 1,
                converged: true,
            };
        }
        let nf = n as f64;
        let (alpha, gamma) = (1.0, 1.0 + 2.0 / nf);
        let rho = if n > 1 { 0.75 - 0.5 / nf } else { 0.5 };
        let sigma = if n > 1 { 1.0 - 1.0 / nf } else { 0.5 };

        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), eval(x0, &mut evals)));
        for i in 0..n {
            let mut p = x0.to_vec();
            p[i] += self.initial_step;
            let v = eval(&p, &mut evals);
            simplex.push((p, v));
        }

        let mut converged = false;
        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut trial2 = vec![0.0; n];
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[n].1 - simplex[0].1;
            if spread <= self.ftol {
                converged = true;
                break;
            }
            if evals >= self.max_evals {
                break;
            }

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for (p, _) in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(p) {
                    *c += x / nf;
                }
            }
            let worst = simplex[n].0.clone();
            let f_best = simplex[0].1;
            let f_second_worst = simplex[n - 1].1;
            let f_worst = simplex[n].1;

            for ((t, c), w) in trial.iter_mut().zip(&centroid).zip(&worst) {
                *t = c + alpha * (c - w);
            }
            let f_reflect = eval(&trial, &mut evals);

            if f_reflect < f_best {
                for ((t, c), w) in trial2.iter_mut().zip(&centroid).zip(&worst) {
                    *t = c + gamma * (c - w);
                }
                let f_expand = eval(&trial2, &mut evals);
                simplex[n] = if f_expand < f_reflect {
                    (trial2.clone(), f_expand)
                } else {
                    (trial.clone(), f_reflect)
                };
                continue;
            }
            if f_reflect < f_second_worst {
                simplex[n] = (trial.clone(), f_reflect);
                continue;
            }
            // contraction: outside if the reflection improved on the worst
            let outside = f_reflect < f_worst;
            for (((t, c), w), r) in trial2.iter_mut().zip(&centroid).zip(&worst).zip(&trial) {
                *t = if outside {
                    c + rho * (r - c)
                } else {
                    c + rho * (w - c)
                };
            }
            let f_contract = eval(&trial2, &mut evals);
            let accept = if outside {
                f_contract <= f_reflect
            } else {
                f_contract < f_worst
            };
            if accept {
                simplex[n] = (trial2.clone(), f_contract);
                continue;
            }
            // shrink toward the best vertex
            let best = simplex[0].0.clone();
            for (p, v) in simplex.iter_mut().skip(1) {
                for (x, b) in p.iter_mut().zip(&best) {
                    *x = b + sigma * (*x - b);
                }
                *v = eval(p, &mut evals);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, value) = simplex.swap_remove(0);
        Minimum {
            x,
            value,
            evaluations: evals,
            converged,
        }
    }
}

/// Limited-memory BFGS on a function that returns its value and gradient
/// together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lbfgs {
    pub max_iters: u64,
    /// Hard cap on function evaluations, line searches included.
    pub max_evals: usize,
    pub memory: usize,
    pub grad_tol: f64,
}

impl Default for Lbfgs {
    fn default() -> Self {
        Self {
            max_iters: 300,
            max_evals: 2000,
            memory: 10,
            grad_tol: 1e-9,
        }
    }
}

struct Smooth<'a, F> {
    f: &'a F,
    max_evals: usize,
    evals: &'a Cell<usize>,
    best: &'a RefCell<(Vec<f64>, f64)>,
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>)> Smooth<'_, F> {
    fn call(&self, x: &[f64]) -> Result<(f64, Vec<f64>), argmin::core::Error> {
        if self.evals.get() >= self.max_evals {
            return Err(argmin::core::Error::msg("evaluation budget exhausted"));
        }
        self.evals.set(self.evals.get() + 1);
        let (v, g) = (self.f)(x);
        let mut best = self.best.borrow_mut();
        if v < best.1 {
            *best = (x.to_vec(), v);
        }
        Ok((v, g))
    }
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>)> CostFunction for Smooth<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        self.call(x).map(|r| r.0)
    }
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>)> Gradient for Smooth<'_, F> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Vec<f64>) -> Result<Vec<f64>, argmin::core::Error> {
        self.call(x).map(|r| r.1)
    }
}

impl Lbfgs {
    /// Minimizes from `x0` and returns the best point evaluated, so the
    /// result is never worse than `x0`.
    pub fn minimize<F>(&self, f: &F, x0: &[f64]) -> Minimum
    where
        F: Fn(&[f64]) -> (f64, Vec<f64>),
    {
        let (start, grad) = f(x0);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if x0.is_empty() || grad_norm <= self.grad_tol {
            return Minimum {
                x: x0.to_vec(),
                value: start,
                evaluations: 1,
                converged: true,
            };
        }
        let evals = Cell::new(1);
        let best = RefCell::new((x0.to_vec(), start));
        let problem = Smooth {
            f,
            max_evals: self.max_evals,
            evals: &evals,
            best: &best,
        };
        let solver = LBFGS::new(MoreThuenteLineSearch::new(), self.memory)
            .with_tolerance_grad(self.grad_tol)
            .and_then(|s| s.with_tolerance_cost(f64::EPSILON))
            .expect("tolerances are non-negative");
        // an error means the budget ran out or a line search failed; either
        // way the best point seen so far stands
        let converged = Executor::new(problem, solver)
            .configure(|state| state.param(x0.to_vec()).max_iters(self.max_iters))
            .run()
            .is_ok_and(|run| {
                matches!(
                    run.state.get_termination_reason(),
                    Some(TerminationReason::SolverConverged)
                )
            });
        let (x, value) = best.into_inner();
        Minimum {
            x,
            value,
            evaluations: evals.get(),
            converged,
        }
    }
}

/// Outcome of [`multistart`].
#[derive(Debug, Clone, PartialEq)]
pub struct MultistartResult {
    pub best: Minimum,
    pub best_restart: usize,
    pub total_evaluations: usize,
    /// Every restart's result, by restart index.
    pub runs: Vec<Minimum>,
}

/// Runs `restarts` independent Nelder-Mead searches from angles drawn
/// uniformly in `[0, 2pi)`. See [`multistart_with`].
pub fn multistart<F>(
    f: F,
    dim: usize,
    restarts: usize,
    seed: u64,
    nm: &NelderMead,
) -> MultistartResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    multistart_with(dim, restarts, seed, |x0| nm.minimize(&f, x0))
}

/// Runs `search` from `restarts` starting points drawn uniformly in
/// `[0, 2pi)^dim`. See [`random_starts`] and [`search_from`].
pub fn multistart_with<S>(dim: usize, restarts: usize, seed: u64, search: S) -> MultistartResult
where
    S: Fn(&[f64]) -> Minimum + Sync,
{
    let starts = random_starts(dim, restarts.max(1), seed, 0, 0.0..TAU);
    search_from(&starts, |_, x0| search(x0))
}

/// `count` points drawn uniformly from `range^dim`; point `i` comes from the
/// ChaCha8 stream `first_stream + i` of `seed`.
pub fn random_starts(
    dim: usize,
    count: usize,
    seed: u64,
    first_stream: u64,
    range: Range<f64>,
) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(first_stream + i as u64);
            (0..dim).map(|_| rng.random_range(range.clone())).collect()
        })
        .collect()
}

/// Runs `search(index, start)` from every start in parallel. The best result
/// is the lowest value, ties going to the lowest index, independent of
/// scheduling.
pub fn search_from<S>(starts: &[Vec<f64>], search: S) -> MultistartResult
where
    S: Fn(usize, &[f64]) -> Minimum + Sync,
{
    assert!(!starts.is_empty(), "at least one start is needed");
    let runs: Vec<Minimum> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| search(i, x0))
        .collect();
    let total_evaluations = runs.iter().map(|m| m.evaluations).sum();
    let (best_restart, _) =
        runs.iter()
            .enumerate()
            .fold((0usize, f64::INFINITY), |(bi, bv), (i, m)| {
                if m.value < bv {
                    (i, m.value)
                } else {
                    (bi, bv)
                }
            });
    MultistartResult {
        best: runs[best_restart].clone(),
        best_restart,
        total_evaluations,
        runs,
    }
}
