//! Post-hoc analysis of evolved edit lists.
//!
//! Everything here speaks to a [`FitnessOracle`]: a total function from edit
//! subsets to `Some(mean cycles)` or `None` for failing variants. Search
//! output is analyzed through [`VariantOracle`], which materializes subsets
//! of a concrete edit list against the seed program; algorithm tests use
//! synthetic oracles with planted structure, checked against brute force.
//!
//! Performance of a subset `T` is always the fractional cycle reduction
//! relative to the unedited program: `perf(T) = (f(∅) − f(T)) / f(∅)`.

mod emit;
mod history;
mod interact;
mod minimize;
mod separate;
mod subsets;

pub use emit::{graph_dot, subsets_csv};
pub use history::{discovery_history, source_map, Discovery, SourceMapping};
pub use interact::{interaction_graph, InteractionGraph};
pub use minimize::{minimize_weak_edits, MinimizeReport};
pub use separate::{separate, SeparateReport, SeparationDetail};
pub use subsets::{enumerate_subsets, SubsetLimit, SubsetRecord, MAX_ENUMERATED_EDITS};

use crate::evo::{materialize, Edit, EditUid};
use crate::mir::{verify, Program};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

/// Fitness of an exact edit subset. `None` means the variant fails: it does
/// not materialize, does not verify, or loses on some suite test.
pub trait FitnessOracle: Sync {
    fn fitness(&self, edits: &BTreeSet<EditUid>) -> Option<f64>;
}

/// Memoizing wrapper that also counts *unique* subset evaluations, so tests
/// can pin the oracle-call complexity of each algorithm.
pub struct CountingOracle<'a> {
    inner: &'a dyn FitnessOracle,
    cache: Mutex<BTreeMap<BTreeSet<EditUid>, Option<f64>>>,
}

impl<'a> CountingOracle<'a> {
    pub fn new(inner: &'a dyn FitnessOracle) -> Self {
        CountingOracle { inner, cache: Mutex::new(BTreeMap::new()) }
    }

    pub fn unique_calls(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

impl FitnessOracle for CountingOracle<'_> {
    fn fitness(&self, edits: &BTreeSet<EditUid>) -> Option<f64> {
        if let Some(v) = self.cache.lock().unwrap().get(edits) {
            return *v;
        }
        let v = self.inner.fitness(edits);
        self.cache.lock().unwrap().insert(edits.clone(), v);
        v
    }
}

/// Oracle defined by an explicit table; panics on a subset outside the table
/// (a test-construction bug, not a runtime condition).
pub struct TableOracle {
    pub table: BTreeMap<BTreeSet<EditUid>, Option<f64>>,
}

impl FitnessOracle for TableOracle {
    fn fitness(&self, edits: &BTreeSet<EditUid>) -> Option<f64> {
        *self
            .table
            .get(edits)
            .unwrap_or_else(|| panic!("oracle table has no entry for {edits:?}"))
    }
}

/// Oracle defined by a closure.
pub struct FnOracle<F: Fn(&BTreeSet<EditUid>) -> Option<f64> + Sync>(pub F);

impl<F: Fn(&BTreeSet<EditUid>) -> Option<f64> + Sync> FitnessOracle for FnOracle<F> {
    fn fitness(&self, edits: &BTreeSet<EditUid>) -> Option<f64> {
        (self.0)(edits)
    }
}

/// Oracle backed by real programs: subsets of `edits` (kept in discovery
/// order) are folded over the seed and judged. Uids must be unique.
pub struct VariantOracle<'a> {
    seed: &'a Program,
    edits: Vec<Edit>,
    judge: &'a (dyn Fn(&Program) -> Option<f64> + Sync),
    rng_root: u64,
}

impl<'a> VariantOracle<'a> {
    pub fn new(
        seed: &'a Program,
        edits: Vec<Edit>,
        judge: &'a (dyn Fn(&Program) -> Option<f64> + Sync),
        rng_root: u64,
    ) -> Self {
        let mut uids: Vec<EditUid> = edits.iter().map(|e| e.uid).collect();
        uids.sort_unstable();
        uids.dedup();
        assert_eq!(uids.len(), edits.len(), "edit uids must be unique");
        VariantOracle { seed, edits, judge, rng_root }
    }

    pub fn uids(&self) -> Vec<EditUid> {
        self.edits.iter().map(|e| e.uid).collect()
    }
}

impl FitnessOracle for VariantOracle<'_> {
    fn fitness(&self, subset: &BTreeSet<EditUid>) -> Option<f64> {
        let picked: Vec<Edit> =
            self.edits.iter().filter(|e| subset.contains(&e.uid)).cloned().collect();
        if picked.len() != subset.len() {
            return None; // subset mentions uids this oracle does not know
        }
        let p = materialize(self.seed, &picked, self.rng_root).ok()?;
        if !verify(&p).is_empty() {
            return None;
        }
        (self.judge)(&p)
    }
}

/// Convenience for call sites holding uid slices.
pub fn uid_set(uids: &[EditUid]) -> BTreeSet<EditUid> {
    uids.iter().copied().collect()
}

/// Planted four-edit landscape with one enabler (uid 6) and three dependents
/// (uids 5, 8, 10): any of 5, 8, 10 without 6 fails outright; 8 and 10 pay
/// off only alongside 6 and compound with each other; 5 changes nothing until
/// all three of the others are present, then unlocks a further drop. Under
/// the witness rule in [`interaction_graph`], the dependency edges are
/// exactly 8→6, 10→6, 5→6, 5→8, 5→10, and all four edits form one cluster.
pub fn planted_quad() -> (Vec<EditUid>, TableOracle) {
    let uids = vec![5, 6, 8, 10];
    let mut table: BTreeMap<BTreeSet<EditUid>, Option<f64>> = BTreeMap::new();
    let mut put = |s: &[EditUid], v: Option<f64>| {
        table.insert(s.iter().copied().collect(), v);
    };
    put(&[], Some(1000.0));
    put(&[6], Some(900.0));
    put(&[6, 8], Some(850.0));
    put(&[6, 10], Some(860.0));
    put(&[6, 8, 10], Some(790.0));
    put(&[5, 6], Some(900.0));
    put(&[5, 6, 8], Some(850.0));
    put(&[5, 6, 10], Some(860.0));
    put(&[5, 6, 8, 10], Some(700.0));
    for fail in [
        vec![5],
        vec![8],
        vec![10],
        vec![5, 8],
        vec![5, 10],
        vec![8, 10],
        vec![5, 8, 10],
    ] {
        put(&fail, None);
    }
    (uids, TableOracle { table })
}
