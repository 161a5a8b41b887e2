//! Exhaustive subset enumeration.

use super::FitnessOracle;
use crate::evo::EditUid;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Enumeration is 2^n oracle calls; beyond this it is a mistake, not a job.
pub const MAX_ENUMERATED_EDITS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("refusing to enumerate 2^{0} subsets (limit is 2^{MAX_ENUMERATED_EDITS})")]
pub struct SubsetLimit(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetRecord {
    /// Members, ascending by uid.
    pub subset: Vec<EditUid>,
    /// Mean cycles, `None` when the variant fails.
    pub fitness: Option<f64>,
    /// Fractional cycle reduction vs. the empty subset, when both are valid.
    pub perf: Option<f64>,
}

/// Evaluate every subset of `edits`, in bitmask order (bit i = presence of
/// `edits[i]`). Parallel but deterministic: records come back indexed by mask.
pub fn enumerate_subsets(
    oracle: &dyn FitnessOracle,
    edits: &[EditUid],
) -> Result<Vec<SubsetRecord>, SubsetLimit> {
    if edits.len() > MAX_ENUMERATED_EDITS {
        return Err(SubsetLimit(edits.len()));
    }
    let base = oracle.fitness(&BTreeSet::new());
    let n = edits.len();
    let records: Vec<SubsetRecord> = (0u64..(1 << n))
        .into_par_iter()
        .map(|mask| {
            let subset: BTreeSet<EditUid> = edits
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &u)| u)
                .collect();
            let fitness = oracle.fitness(&subset);
            let perf = match (base, fitness) {
                (Some(b), Some(f)) if b > 0.0 => Some((b - f) / b),
                _ => None,
            };
            SubsetRecord { subset: subset.into_iter().collect(), fitness, perf }
        })
        .collect();
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::FnOracle;

    #[test]
    fn enumerates_all_subsets_in_mask_order() {
        let oracle = FnOracle(|s: &BTreeSet<EditUid>| Some(100.0 - s.len() as f64));
        let r = enumerate_subsets(&oracle, &[3, 1, 2]).unwrap();
        assert_eq!(r.len(), 8);
        assert_eq!(r[0].subset, Vec::<EditUid>::new());
        assert_eq!(r[1].subset, vec![3]);
        assert_eq!(r[2].subset, vec![1]);
        assert_eq!(r[3].subset, vec![1, 3]);
        assert_eq!(r[7].subset, vec![1, 2, 3]);
        assert_eq!(r[7].fitness, Some(97.0));
        assert_eq!(r[7].perf, Some(0.03));
    }

    #[test]
    fn refuses_oversized_enumerations() {
        let oracle = FnOracle(|_: &BTreeSet<EditUid>| Some(1.0));
        let uids: Vec<EditUid> = (0..21).collect();
        assert_eq!(enumerate_subsets(&oracle, &uids), Err(SubsetLimit(21)));
    }
}
