//! Weak-edit minimization.
//!
//! Walks the edit list once, provisionally removing each edit from the
//! current kept set. An edit whose removal keeps the variant passing and
//! costs less than `theta` fractional cycles is *weak* and stays removed;
//! an edit whose removal breaks the variant or gives up at least `theta`
//! is kept. One oracle call per edit plus one for the full set.

use super::{uid_set, FitnessOracle};
use crate::evo::EditUid;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeReport {
    /// Edits found removable, in scan order.
    pub weak: Vec<EditUid>,
    /// Edits retained, in scan order.
    pub kept: Vec<EditUid>,
    /// Mean cycles with every edit applied.
    pub full_fitness: f64,
    /// Mean cycles with only the kept edits applied.
    pub kept_fitness: f64,
    pub theta: f64,
}

/// Returns `None` when the full set itself fails, in which case there is
/// nothing coherent to minimize.
pub fn minimize_weak_edits(
    oracle: &dyn FitnessOracle,
    edits: &[EditUid],
    theta: f64,
) -> Option<MinimizeReport> {
    let full: Vec<EditUid> = edits.to_vec();
    let full_fitness = oracle.fitness(&uid_set(&full))?;

    let mut weak: Vec<EditUid> = Vec::new();
    let mut kept: Vec<EditUid> = Vec::new();
    // Cycles of the current kept set (full minus weaks so far).
    let mut current = full_fitness;

    for &e in &full {
        let trial: Vec<EditUid> =
            full.iter().copied().filter(|u| *u != e && !weak.contains(u)).collect();
        match oracle.fitness(&uid_set(&trial)) {
            None => kept.push(e),
            Some(without) => {
                // Fraction of cycles e is currently saving.
                let contribution =
                    if without > 0.0 { (without - current) / without } else { 0.0 };
                if contribution < theta {
                    weak.push(e);
                    current = without;
                } else {
                    kept.push(e);
                }
            }
        }
    }

    Some(MinimizeReport { weak, kept, full_fitness, kept_fitness: current, theta })
}
