//! Independent / epistatic separation.
//!
//! An edit is *independent* when the improvement it delivers alone matches
//! the improvement it delivers inside the evolved set; otherwise it is
//! *epistatic* — its value depends on co-applied edits. Both improvements
//! are normalized by the baseline `f(∅)`, so on a purely additive landscape
//! the two agree exactly. An edit whose solo variant (or whose in-context
//! removal variant) fails is epistatic by definition.
//!
//! The scan removes recognized independent edits from the context as it
//! goes, mirroring how one would peel off separable improvements; with
//! memoization this costs at most `3·|S| + 2` unique oracle calls.

use super::{uid_set, FitnessOracle};
use crate::evo::EditUid;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationDetail {
    /// perf of the edit applied alone, `None` when that variant fails.
    pub perf_alone: Option<f64>,
    /// perf lost by removing the edit from its context, `None` on failure.
    pub perf_in_context: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparateReport {
    pub independent: Vec<EditUid>,
    pub epistatic: Vec<EditUid>,
    pub details: BTreeMap<EditUid, SeparationDetail>,
    pub tolerance: f64,
}

/// Returns `None` when the baseline (no edits) fails, which would make every
/// perf number meaningless.
pub fn separate(
    oracle: &dyn FitnessOracle,
    edits: &[EditUid],
    tolerance: f64,
) -> Option<SeparateReport> {
    let base = oracle.fitness(&uid_set(&[]))?;
    if base <= 0.0 {
        return None;
    }

    let mut independent: Vec<EditUid> = Vec::new();
    let mut epistatic: Vec<EditUid> = Vec::new();
    let mut details = BTreeMap::new();

    for &e in edits {
        let alone = oracle.fitness(&uid_set(&[e]));
        let perf_alone = alone.map(|a| (base - a) / base);

        // Context: the full set minus edits already recognized independent.
        let ctx: Vec<EditUid> =
            edits.iter().copied().filter(|u| !independent.contains(u)).collect();
        let without: Vec<EditUid> = ctx.iter().copied().filter(|u| *u != e).collect();
        let f_ctx = oracle.fitness(&uid_set(&ctx));
        let f_without = oracle.fitness(&uid_set(&without));
        let perf_in_context = match (f_ctx, f_without) {
            (Some(w), Some(wo)) => Some((wo - w) / base),
            _ => None,
        };

        details.insert(e, SeparationDetail { perf_alone, perf_in_context });
        match (perf_alone, perf_in_context) {
            (Some(a), Some(c)) if (a - c).abs() <= tolerance => independent.push(e),
            _ => epistatic.push(e),
        }
    }

    Some(SeparateReport { independent, epistatic, details, tolerance })
}
