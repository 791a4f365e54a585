//! Seeded experiment sweeps with deterministic CSV output.
//!
//! All randomness derives from one master seed. Each consumer gets its own
//! seed from [`derive_seed`] (SplitMix64 over a label path) and feeds it to
//! ChaCha8, so results do not depend on thread scheduling.

use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dsl::Comparison;
use crate::error::{Error, Result};
use crate::gadget::{
    train_gadget, AnsatzConfig, FlagMode, GadgetSpec, TrainOptions, TrainedGadget,
};
use crate::problem::{random_qcbo, LinearConstraint, QcboInstance, Sense, DEFAULT_COEFF_RANGE};
use crate::solver::{run_gm_qaoa, SolveConfig, SolveReport};
use crate::store::{canonicalize, GadgetStore};

pub const CSV_FORMAT_VERSION: u32 = 1;

/// Attempts allowed when sampling satisfiable constraint sets.
pub const REJECTION_CAP: usize = 1000;

const LABEL_SINGLE: u64 = 1;
const LABEL_TWO: u64 = 2;
const LABEL_GADGET: u64 = 3;
const LABEL_SAMPLE: u64 = 4;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for the label path `path` under `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Settings shared by every sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub seed: u64,
    /// Gadget ansatz depth and mode.
    pub ansatz: AnsatzConfig,
    /// Gadget training restarts.
    pub restarts: usize,
    /// Random QCBOs solved per satisfiable constraint (set).
    pub instances: usize,
    /// GM-QAOA layers.
    pub solve_layers: usize,
    pub solve_grid: usize,
    /// Overrides the `5 + 2|f_min|` penalty.
    pub delta: Option<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            ansatz: AnsatzConfig::default(),
            restarts: 20,
            instances: 10,
            solve_layers: 1,
            solve_grid: 32,
            delta: None,
        }
    }
}

impl SweepOptions {
    fn solve_config(&self, seed: u64) -> SolveConfig {
        SolveConfig {
            layers: self.solve_layers,
            delta: self.delta,
            seed,
            grid: self.solve_grid,
            ..SolveConfig::default()
        }
    }
}

/// Gadgets for `specs`, trained once per canonical key. Store hits are
/// reused; misses are trained in parallel with a seed derived from the key
/// and then added to the store.
pub fn gadgets_for(
    specs: &[GadgetSpec],
    opts: &SweepOptions,
    store: Option<&mut GadgetStore>,
) -> Result<Vec<TrainedGadget>> {
    let canon = specs
        .iter()
        .map(|s| canonicalize(s, &opts.ansatz))
        .collect::<Result<Vec<_>>>()?;
    let mut local = GadgetStore::in_memory();
    let store = store.unwrap_or(&mut local);

    let mut seen = BTreeSet::new();
    let misses: Vec<_> = canon
        .iter()
        .filter(|c| store.get(&c.key).is_none() && seen.insert(c.key.clone()))
        .collect();
    let trained = misses
        .par_iter()
        .map(|c| {
            let train = TrainOptions {
                seed: derive_seed(opts.seed, &[LABEL_GADGET, fnv1a(c.key.as_str())]),
                restarts: opts.restarts,
                ..TrainOptions::default()
            };
            train_gadget(&c.spec, opts.ansatz, &train)
        })
        .collect::<Result<Vec<_>>>()?;
    for (c, g) in misses.iter().zip(trained) {
        store.put(c.key.clone(), g);
    }
    specs
        .iter()
        .zip(&canon)
        .map(|(spec, c)| {
            store
                .get(&c.key)
                .expect("every key was stored above")
                .relabel(spec, &c.order)
        })
        .collect()
}

/// `n_max`, `b_max` and comparisons of the `sum_i x_i (op) b` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleGrid {
    pub n_max: usize,
    pub b_max: i64,
    pub comparisons: Vec<Comparison>,
}

impl Default for SingleGrid {
    fn default() -> Self {
        Self {
            n_max: 5,
            b_max: 5,
            comparisons: Comparison::NON_STRICT.to_vec(),
        }
    }
}

impl SingleGrid {
    /// Cells in output order: `n`, then comparison, then `b`.
    pub fn cells(&self) -> Vec<(usize, Comparison, i64)> {
        let mut cells = Vec::new();
        for n in 1..=self.n_max {
            for &op in &self.comparisons {
                for b in 0..=self.b_max {
                    cells.push((n, op, b));
                }
            }
        }
        cells
    }
}

/// One CSV row: either a gadget (`kind = "gadget"`, instance fields empty)
/// or one solved QCBO (`kind = "qcbo"`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleRow {
    pub kind: &'static str,
    pub n: usize,
    pub sense: String,
    pub b: i64,
    pub satisfiable: bool,
    pub vacuous: bool,
    pub gadget_ar: f64,
    pub fidelity: f64,
    pub instance: Option<usize>,
    pub instance_seed: Option<u64>,
    pub ar: Option<f64>,
    pub p_opt: Option<f64>,
    pub baseline: Option<f64>,
    pub delta: Option<f64>,
    pub improper_mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoRow {
    pub kind: &'static str,
    pub case: u8,
    pub set: usize,
    pub constraints: String,
    pub flag_mode: FlagMode,
    pub gadget_ar: f64,
    pub fidelity: f64,
    pub instance: Option<usize>,
    pub instance_seed: Option<u64>,
    pub ar: Option<f64>,
    pub p_opt: Option<f64>,
    pub baseline: Option<f64>,
    pub delta: Option<f64>,
    pub improper_mass: Option<f64>,
}

fn write_csv<W: Write, R: Serialize>(out: W, header: &str, rows: &[R]) -> Result<()> {
    let mut out = out;
    writeln!(out, "{header}")?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn header(kind: &str, opts: &SweepOptions, extra: &str) -> String {
    format!(
        "# qcbo-gadgets {kind} v{CSV_FORMAT_VERSION}; seed={}; prng=chacha8+splitmix64; ansatz={} p={}; restarts={}; solve_layers={}; grid={}; delta={}{extra}",
        opts.seed,
        opts.ansatz.mode,
        opts.ansatz.layers,
        opts.restarts,
        opts.solve_layers,
        opts.solve_grid,
        opts.delta.map_or_else(|| "rule".to_string(), |d| d.to_string()),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleSweep {
    pub grid: SingleGrid,
    pub options: SweepOptions,
    pub rows: Vec<SingleRow>,
}

impl SingleSweep {
    pub fn gadget_rows(&self) -> impl Iterator<Item = &SingleRow> {
        self.rows.iter().filter(|r| r.kind == "gadget")
    }

    pub fn instance_rows(&self) -> impl Iterator<Item = &SingleRow> {
        self.rows.iter().filter(|r| r.kind == "qcbo")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let comparisons: Vec<&str> = self.grid.comparisons.iter().map(|c| c.symbol()).collect();
        let extra = format!(
            "; n_max={}; b_max={}; senses={}",
            self.grid.n_max,
            self.grid.b_max,
            comparisons.join(" ")
        );
        write_csv(
            out,
            &header("sweep-single", &self.options, &extra),
            &self.rows,
        )
    }
}

fn solve_instances(
    constraints: &[LinearConstraint],
    gadget: &TrainedGadget,
    opts: &SweepOptions,
    seed_path: &[u64],
) -> Result<Vec<(usize, u64, SolveReport)>> {
    let n = constraints[0].num_variables();
    (0..opts.instances)
        .into_par_iter()
        .map(|i| {
            let mut path = seed_path.to_vec();
            path.push(i as u64);
            let seed = derive_seed(opts.seed, &path);
            let inst: QcboInstance =
                random_qcbo(n, constraints.to_vec(), seed, DEFAULT_COEFF_RANGE)?;
            let report = run_gm_qaoa(&inst, gadget, &opts.solve_config(seed))?;
            Ok((i, seed, report))
        })
        .collect()
}

/// Trains a gadget for every grid cell and solves random QCBOs for each
/// satisfiable cell.
pub fn sweep_single(
    grid: &SingleGrid,
    opts: &SweepOptions,
    store: Option<&mut GadgetStore>,
) -> Result<SingleSweep> {
    let cells = grid.cells();
    let constraints = cells
        .iter()
        .map(|&(n, op, b)| {
            let (sense, rhs) = op.normalize(b);
            LinearConstraint::sum_of(n, &(0..n).collect::<Vec<_>>(), sense, rhs)
        })
        .collect::<Result<Vec<_>>>()?;
    let specs = constraints
        .iter()
        .map(|c| GadgetSpec::new(std::slice::from_ref(c), FlagMode::PerConstraint))
        .collect::<Result<Vec<_>>>()?;
    let gadgets = gadgets_for(&specs, opts, store)?;

    let per_cell = cells
        .par_iter()
        .zip(&constraints)
        .zip(&gadgets)
        .enumerate()
        .map(|(idx, ((&(n, op, b), c), g))| {
            let satisfiable = c.is_satisfiable();
            let base = SingleRow {
                kind: "gadget",
                n,
                sense: op.symbol().to_string(),
                b,
                satisfiable,
                vacuous: c.is_vacuous(),
                gadget_ar: g.gadget_ar,
                fidelity: g.fidelity,
                instance: None,
                instance_seed: None,
                ar: None,
                p_opt: None,
                baseline: None,
                delta: None,
                improper_mass: None,
            };
            let mut rows = vec![base.clone()];
            if satisfiable {
                let path = [LABEL_SINGLE, idx as u64];
                for (i, seed, r) in solve_instances(std::slice::from_ref(c), g, opts, &path)? {
                    rows.push(SingleRow {
                        kind: "qcbo",
                        instance: Some(i),
                        instance_seed: Some(seed),
                        ar: Some(r.ar),
                        p_opt: Some(r.p_opt),
                        baseline: Some(r.baseline),
                        delta: Some(r.delta),
                        improper_mass: Some(r.improper_mass),
                        ..base.clone()
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SingleSweep {
        grid: grid.clone(),
        options: *opts,
        rows: per_cell.into_iter().flatten().collect(),
    })
}

/// Support layouts of the two overlapping constraints over five variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OverlapCase {
    /// `{0,1,2}` and `{0,3,4}`: one shared variable.
    One,
    /// `{0,1,2,3}` and `{0,3,4}`: two shared variables.
    Two,
    /// `{0,1,2,3}` and `{0,2,3,4}`: three shared variables.
    Three,
}

impl OverlapCase {
    pub const ALL: [OverlapCase; 3] = [OverlapCase::One, OverlapCase::Two, OverlapCase::Three];

    pub const NUM_VARIABLES: usize = 5;

    pub fn number(self) -> u8 {
        match self {
            OverlapCase::One => 1,
            OverlapCase::Two => 2,
            OverlapCase::Three => 3,
        }
    }

    pub fn from_number(case: u8) -> Result<Self> {
        match case {
            1 => Ok(OverlapCase::One),
            2 => Ok(OverlapCase::Two),
            3 => Ok(OverlapCase::Three),
            _ => Err(Error::InvalidInstance(format!(
                "overlap case must be 1, 2 or 3, got {case}"
            ))),
        }
    }

    pub fn supports(self) -> [&'static [usize]; 2] {
        match self {
            OverlapCase::One => [&[0, 1, 2], &[0, 3, 4]],
            OverlapCase::Two => [&[0, 1, 2, 3], &[0, 3, 4]],
            OverlapCase::Three => [&[0, 1, 2, 3], &[0, 2, 3, 4]],
        }
    }
}

/// Draws `count` distinct satisfiable constraint pairs on the case's supports:
/// senses uniform over `=, <=, >=` and `b_i` uniform over `0..=|supp_i| + 1`.
pub fn sample_constraint_sets(
    case: OverlapCase,
    count: usize,
    seed: u64,
) -> Result<Vec<[LinearConstraint; 2]>> {
    const SENSES: [Sense; 3] = [Sense::Eq, Sense::Le, Sense::Ge];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        &[LABEL_TWO, LABEL_SAMPLE, u64::from(case.number())],
    ));
    let n = OverlapCase::NUM_VARIABLES;
    let mut sets: Vec<[LinearConstraint; 2]> = Vec::with_capacity(count);
    let mut tries = 0;
    while sets.len() < count {
        if tries == REJECTION_CAP {
            return Err(Error::RejectionCap(REJECTION_CAP));
        }
        tries += 1;
        let mut draw = |support: &[usize]| {
            let sense = SENSES[rng.random_range(0..SENSES.len())];
            let rhs = rng.random_range(0..=support.len() as i64 + 1);
            LinearConstraint::sum_of(n, support, sense, rhs)
        };
        let [s0, s1] = case.supports();
        let pair = [draw(s0)?, draw(s1)?];
        let satisfiable = (0..1usize << n).any(|x| pair.iter().all(|c| c.is_feasible_index(x)));
        if satisfiable && !sets.contains(&pair) {
            sets.push(pair);
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoSweep {
    pub case: OverlapCase,
    pub options: SweepOptions,
    pub sets: Vec<[LinearConstraint; 2]>,
    pub rows: Vec<TwoRow>,
}

impl TwoSweep {
    pub fn gadget_rows(&self) -> impl Iterator<Item = &TwoRow> {
        self.rows.iter().filter(|r| r.kind == "gadget")
    }

    pub fn instance_rows(&self) -> impl Iterator<Item = &TwoRow> {
        self.rows.iter().filter(|r| r.kind == "qcbo")
    }

    /// Mean gadget_ar over this sweep's gadgets in `mode`.
    pub fn mean_gadget_ar(&self, mode: FlagMode) -> f64 {
        let values: Vec<f64> = self
            .gadget_rows()
            .filter(|r| r.flag_mode == mode)
            .map(|r| r.gadget_ar)
            .collect();
        values.iter().sum::<f64>() / values.len().max(1) as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let extra = format!("; case={}; sets={}", self.case.number(), self.sets.len());
        write_csv(out, &header("sweep-two", &self.options, &extra), &self.rows)
    }
}

/// Samples `sets` constraint pairs for `case`, trains both flag modes for
/// each, and solves the same random QCBOs with both gadgets.
pub fn sweep_two(
    case: OverlapCase,
    sets: usize,
    opts: &SweepOptions,
    store: Option<&mut GadgetStore>,
) -> Result<TwoSweep> {
    let pairs = sample_constraint_sets(case, sets, opts.seed)?;
    let modes = [FlagMode::Single, FlagMode::PerConstraint];
    let jobs: Vec<(usize, FlagMode)> = (0..pairs.len())
        .flat_map(|s| modes.iter().map(move |&m| (s, m)))
        .collect();
    let specs = jobs
        .iter()
        .map(|&(s, m)| GadgetSpec::new(&pairs[s], m))
        .collect::<Result<Vec<_>>>()?;
    let gadgets = gadgets_for(&specs, opts, store)?;

    let per_job = jobs
        .par_iter()
        .zip(&gadgets)
        .map(|(&(s, mode), g)| {
            let base = TwoRow {
                kind: "gadget",
                case: case.number(),
                set: s,
                constraints: format!("{}; {}", pairs[s][0], pairs[s][1]),
                flag_mode: mode,
                gadget_ar: g.gadget_ar,
                fidelity: g.fidelity,
                instance: None,
                instance_seed: None,
                ar: None,
                p_opt: None,
                baseline: None,
                delta: None,
                improper_mass: None,
            };
            let mut rows = vec![base.clone()];
            // the QCBOs depend on the set only, so both modes see the same ones
            let path = [LABEL_TWO, u64::from(case.number()), s as u64];
            for (i, seed, r) in solve_instances(&pairs[s], g, opts, &path)? {
                rows.push(TwoRow {
                    kind: "qcbo",
                    instance: Some(i),
                    instance_seed: Some(seed),
                    ar: Some(r.ar),
                    p_opt: Some(r.p_opt),
                    baseline: Some(r.baseline),
                    delta: Some(r.delta),
                    improper_mass: Some(r.improper_mass),
                    ..base.clone()
                });
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TwoSweep {
        case,
        options: *opts,
        sets: pairs,
        rows: per_job.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> SweepOptions {
        SweepOptions {
            seed: 5,
            restarts: 3,
            instances: 2,
            solve_grid: 8,
            ..SweepOptions::default()
        }
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(2, &[2]));
        // reference value of the SplitMix64 finalizer
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(SingleGrid::default().cells().len(), 90);
        let strict = SingleGrid {
            comparisons: Comparison::ALL.to_vec(),
            ..SingleGrid::default()
        };
        assert_eq!(strict.cells().len(), 150);
    }

    #[test]
    fn sampled_sets_are_distinct_and_satisfiable() {
        for case in OverlapCase::ALL {
            let sets = sample_constraint_sets(case, 10, 3).unwrap();
            assert_eq!(sets.len(), 10);
            for (i, a) in sets.iter().enumerate() {
                assert!((0..32).any(|x| a.iter().all(|c| c.is_feasible_index(x))));
                let [s0, s1] = case.supports();
                assert_eq!(a[0].support().into_iter().collect::<Vec<_>>(), s0);
                assert_eq!(a[1].support().into_iter().collect::<Vec<_>>(), s1);
                for (k, s) in [s0, s1].iter().enumerate() {
                    assert!((0..=s.len() as i64 + 1).contains(&a[k].rhs()));
                }
                assert!(sets[..i].iter().all(|b| b != a));
            }
        }
    }

    #[test]
    fn small_single_sweep_shape() {
        let grid = SingleGrid {
            n_max: 2,
            b_max: 3,
            comparisons: vec![Comparison::Eq, Comparison::Lt],
        };
        let sweep = sweep_single(&grid, &quick(), None).unwrap();
        assert_eq!(sweep.gadget_rows().count(), 16);
        let satisfiable = sweep.gadget_rows().filter(|r| r.satisfiable).count();
        assert_eq!(sweep.instance_rows().count(), 2 * satisfiable);
        // x0 + x1 = 3 cannot hold; x0 < 0 cannot either
        let row = |n, s: &str, b| {
            sweep
                .gadget_rows()
                .find(|r| r.n == n && r.sense == s && r.b == b)
                .unwrap()
        };
        assert!(!row(2, "=", 3).satisfiable);
        assert!(!row(1, "<", 0).satisfiable);
        assert!(row(1, "<", 3).vacuous);
        let mut csv = Vec::new();
        sweep.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("# qcbo-gadgets sweep-single v1; seed=5;"));
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("kind,n,sense,b,satisfiable"));
    }

    #[test]
    fn store_hits_reuse_gadgets() {
        let grid = SingleGrid {
            n_max: 2,
            b_max: 1,
            comparisons: vec![Comparison::Le],
        };
        let mut store = GadgetStore::in_memory();
        let a = sweep_single(&grid, &quick(), Some(&mut store)).unwrap();
        assert_eq!(store.len(), 4);
        let b = sweep_single(&grid, &quick(), Some(&mut store)).unwrap();
        assert_eq!(a, b);
    }
}
