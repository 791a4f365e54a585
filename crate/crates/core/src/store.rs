//! On-disk library of trained gadgets, keyed up to variable relabeling.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gadget::{
    train_gadget, AnsatzConfig, GadgetSpec, OptimizerInfo, TrainOptions, TrainedGadget,
};
use crate::pauli::ZHamiltonian;

pub const STORE_VERSION: u64 = 1;

/// Relabeling-invariant identity of a (spec, ansatz) pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalKey(String);

impl CanonicalKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Canonical form of a spec.
#[derive(Debug, Clone, PartialEq)]
pub struct Canonical {
    pub key: CanonicalKey,
    /// `GadgetSpec` with variables sorted into canonical order and renumbered
    /// `0..k`.
    pub spec: GadgetSpec,
    /// `order[j]` is the caller's local variable placed at canonical
    /// position `j`.
    pub order: Vec<usize>,
}

/// Sorts variables by their coefficient column across all constraints (ties
/// by position). Constraint order is kept because it fixes the flag order.
pub fn canonicalize(spec: &GadgetSpec, config: &AnsatzConfig) -> Result<Canonical> {
    let k = spec.num_variables();
    let column =
        |j: usize| -> Vec<i64> { spec.constraints().iter().map(|c| c.coeffs()[j]).collect() };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| column(a).cmp(&column(b)).then(a.cmp(&b)));
    let canonical = spec.reordered(&order)?;

    let rows: Vec<String> = canonical
        .constraints()
        .iter()
        .map(|c| {
            let coeffs: Vec<String> = c.coeffs().iter().map(i64::to_string).collect();
            format!("[{}]{}{}", coeffs.join(","), c.sense().tag(), c.rhs())
        })
        .collect();
    let key = format!(
        "k={};{};flags={};p={};ansatz={}",
        k,
        rows.join(";"),
        spec.flag_mode(),
        config.layers,
        config.mode
    );
    Ok(Canonical {
        key: CanonicalKey(key),
        spec: canonical,
        order,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreRecord {
    key: CanonicalKey,
    spec: GadgetSpec,
    hamiltonian: ZHamiltonian,
    config: AnsatzConfig,
    gammas: Vec<f64>,
    betas: Vec<f64>,
    expectation: f64,
    gadget_ar: f64,
    fidelity: f64,
    seed: u64,
    restarts: usize,
    best_restart: usize,
    evaluations: usize,
    converged: bool,
}

impl StoreRecord {
    fn new(key: CanonicalKey, g: TrainedGadget) -> Self {
        Self {
            key,
            spec: g.spec,
            hamiltonian: g.hamiltonian,
            config: g.config,
            gammas: g.gammas,
            betas: g.betas,
            expectation: g.expectation,
            gadget_ar: g.gadget_ar,
            fidelity: g.fidelity,
            seed: g.optimizer.seed,
            restarts: g.optimizer.restarts,
            best_restart: g.optimizer.best_restart,
            evaluations: g.optimizer.evaluations,
            converged: g.optimizer.converged,
        }
    }

    fn into_parts(self) -> (CanonicalKey, TrainedGadget) {
        let gadget = TrainedGadget {
            spec: self.spec,
            hamiltonian: self.hamiltonian,
            config: self.config,
            gammas: self.gammas,
            betas: self.betas,
            expectation: self.expectation,
            gadget_ar: self.gadget_ar,
            fidelity: self.fidelity,
            optimizer: OptimizerInfo {
                seed: self.seed,
                restarts: self.restarts,
                best_restart: self.best_restart,
                evaluations: self.evaluations,
                converged: self.converged,
            },
        };
        (self.key, gadget)
    }
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    version: u64,
    records: Vec<StoreRecord>,
}

/// Gadgets held in memory, optionally backed by a JSON file.
#[derive(Debug, Clone, Default)]
pub struct GadgetStore {
    path: Option<PathBuf>,
    records: BTreeMap<CanonicalKey, TrainedGadget>,
}

impl GadgetStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path`, or starts empty when it does not exist. A file that
    /// exists but cannot be read as a store is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if !path.exists() {
            return Ok(Self {
                path: Some(path),
                records: BTreeMap::new(),
            });
        }
        let text = fs::read_to_string(&path)?;
        let corrupt = |message: String| Error::StoreCorrupt {
            path: path.clone(),
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| corrupt("missing \"version\"".into()))?;
        if version != STORE_VERSION {
            return Err(Error::StoreVersion {
                path,
                found: version,
                expected: STORE_VERSION,
            });
        }
        let file: StoreFile = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
        let mut records = BTreeMap::new();
        for record in file.records {
            let (key, gadget) = record.into_parts();
            if records.insert(key.clone(), gadget).is_some() {
                return Err(corrupt(format!("duplicate key {key}")));
            }
        }
        Ok(Self {
            path: Some(path),
            records,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &CanonicalKey> {
        self.records.keys()
    }

    pub fn get(&self, key: &CanonicalKey) -> Option<&TrainedGadget> {
        self.records.get(key)
    }

    /// Inserts `gadget` unless a record with at least its gadget_ar is
    /// already stored. Returns whether the store changed.
    pub fn put(&mut self, key: CanonicalKey, gadget: TrainedGadget) -> bool {
        match self.records.get(&key) {
            Some(existing) if existing.gadget_ar >= gadget.gadget_ar => false,
            _ => {
                self.records.insert(key, gadget);
                true
            }
        }
    }

    /// Writes the store to its file atomically. No-op for in-memory stores.
    pub fn save(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let file = StoreFile {
            version: STORE_VERSION,
            records: self
                .records
                .iter()
                .map(|(k, g)| StoreRecord::new(k.clone(), g.clone()))
                .collect(),
        };
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer_pretty(&mut tmp, &file)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    /// A stored gadget moved onto `spec`'s variables, if one exists.
    pub fn lookup(
        &self,
        spec: &GadgetSpec,
        config: &AnsatzConfig,
    ) -> Result<Option<TrainedGadget>> {
        let canonical = canonicalize(spec, config)?;
        self.get(&canonical.key)
            .map(|g| g.relabel(spec, &canonical.order))
            .transpose()
    }

    /// Returns a gadget for `spec`, training and storing one on a miss. The
    /// flag is true on a hit. The store file is not written; call
    /// [`GadgetStore::save`].
    pub fn get_or_train(
        &mut self,
        spec: &GadgetSpec,
        config: &AnsatzConfig,
        opts: &TrainOptions,
    ) -> Result<(TrainedGadget, bool)> {
        let canonical = canonicalize(spec, config)?;
        if let Some(g) = self.get(&canonical.key) {
            return Ok((g.relabel(spec, &canonical.order)?, true));
        }
        let trained = train_gadget(&canonical.spec, *config, opts)?;
        let gadget = trained.relabel(spec, &canonical.order)?;
        self.put(canonical.key, trained);
        Ok((gadget, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_constraints;
    use crate::gadget::FlagMode;
    use approx::assert_abs_diff_eq;

    fn spec(texts: &[&str], n: usize) -> GadgetSpec {
        GadgetSpec::new(
            &parse_constraints(texts, Some(n)).unwrap(),
            FlagMode::PerConstraint,
        )
        .unwrap()
    }

    fn key(texts: &[&str], n: usize) -> CanonicalKey {
        canonicalize(&spec(texts, n), &AnsatzConfig::default())
            .unwrap()
            .key
    }

    fn opts() -> TrainOptions {
        TrainOptions {
            restarts: 4,
            ..TrainOptions::default()
        }
    }

    #[test]
    fn keys_ignore_relabeling() {
        assert_eq!(key(&["x0 + x1 = 1"], 2), key(&["x3 + x7 = 1"], 8));
        assert_ne!(key(&["x0 + x1 <= 1"], 2), key(&["x0 + x1 = 1"], 2));
        assert_eq!(
            key(&["x0 + x1 = 1", "x0 + x2 = 1"], 3),
            key(&["x5 + x2 = 1", "x5 + x9 = 1"], 10)
        );
        assert_eq!(key(&["x0 + 2x1 <= 2"], 2), key(&["2x0 + x1 <= 2"], 2));
        assert_ne!(
            key(&["x0 + x1 = 1", "x0 + x2 = 1"], 3),
            key(&["x0 + x1 = 1", "x2 + x3 = 1"], 4)
        );
        let shared = canonicalize(
            &spec(&["x0 + x1 = 1"], 2),
            &AnsatzConfig {
                layers: 1,
                mode: crate::gadget::AnsatzMode::Shared,
            },
        )
        .unwrap();
        assert_ne!(shared.key, key(&["x0 + x1 = 1"], 2));
    }

    #[test]
    fn empty_store_misses() {
        let store = GadgetStore::in_memory();
        assert!(store.get(&key(&["x0 + x1 = 1"], 2)).is_none());
        assert!(store
            .lookup(&spec(&["x0 + x1 = 1"], 2), &AnsatzConfig::default())
            .unwrap()
            .is_none());
    }

    #[test]
    fn file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gadgets.json");
        let mut store = GadgetStore::open(&path).unwrap();
        let s = spec(&["x0 + 2x1 <= 1"], 2);
        let (g, hit) = store
            .get_or_train(&s, &AnsatzConfig::default(), &opts())
            .unwrap();
        assert!(!hit);
        store.save().unwrap();

        let mut again = GadgetStore::open(&path).unwrap();
        assert_eq!(again.len(), 1);
        let k = again.keys().next().unwrap().clone();
        assert_eq!(again.get(&k), store.get(&k));
        let (h, hit) = again
            .get_or_train(&s, &AnsatzConfig::default(), &opts())
            .unwrap();
        assert!(hit);
        assert_eq!(g, h);
    }

    #[test]
    fn higher_gadget_ar_wins() {
        let s = spec(&["x0 + x1 = 1"], 2);
        let c = canonicalize(&s, &AnsatzConfig::default()).unwrap();
        let good = train_gadget(&c.spec, AnsatzConfig::default(), &opts()).unwrap();
        let mut bad = good.clone();
        bad.gadget_ar = 0.5;
        let mut store = GadgetStore::in_memory();
        assert!(store.put(c.key.clone(), bad.clone()));
        assert!(store.put(c.key.clone(), good.clone()));
        assert!(!store.put(c.key.clone(), bad));
        assert_eq!(store.get(&c.key), Some(&good));
    }

    #[test]
    fn relabeled_hit_keeps_its_quality() {
        let mut store = GadgetStore::in_memory();
        let first = spec(&["x0 + x1 + x2 <= 1", "x0 + x3 >= 1"], 4);
        let (g, _) = store
            .get_or_train(&first, &AnsatzConfig::default(), &opts())
            .unwrap();
        assert_abs_diff_eq!(g.proper_mass(), g.gadget_ar, epsilon = 1e-9);
        // same structure on other variables, shared variable no longer first
        let second = spec(&["x2 + x5 + x6 <= 1", "x6 + x9 >= 1"], 10);
        let (h, hit) = store
            .get_or_train(&second, &AnsatzConfig::default(), &opts())
            .unwrap();
        assert!(hit);
        assert_eq!(h.spec, second);
        assert_abs_diff_eq!(h.proper_mass(), h.gadget_ar, epsilon = 1e-9);
    }

    #[test]
    fn corrupt_or_foreign_files_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{not json").unwrap();
        assert!(matches!(
            GadgetStore::open(&path),
            Err(Error::StoreCorrupt { .. })
        ));
        fs::write(&path, r#"{"version": 2, "records": []}"#).unwrap();
        assert!(matches!(
            GadgetStore::open(&path),
            Err(Error::StoreVersion { found: 2, .. })
        ));
        fs::write(&path, r#"{"version": 1, "records": [{"key": "x"}]}"#).unwrap();
        assert!(matches!(
            GadgetStore::open(&path),
            Err(Error::StoreCorrupt { .. })
        ));
        // the bad file is left alone
        assert!(fs::read_to_string(&path).unwrap().contains("\"key\""));
    }
}
