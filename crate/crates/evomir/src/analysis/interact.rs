//! Interaction graph, clusters, and dependency edges over an edit set.
//!
//! Built from the full subset table (so bounded by
//! [`super::MAX_ENUMERATED_EDITS`]). Definitions, writing `perf(T)` for the
//! fractional cycle reduction of subset `T` and `⊥` for a failing variant:
//!
//! - marginal: `Δ_i(T) = perf(T∪{i}) − perf(T)`, defined only when both
//!   perfs are.
//! - *interaction* `i—j` (undirected): some context `T ⊆ E∖{i,j}` exists
//!   where adding `j` changes `i`'s marginal by more than `theta`, or where
//!   adding `i` has a different effect on pass/fail status with `j` present
//!   than without (so edits coupled only through failure still register);
//!   checked from both edits' viewpoints so the relation is symmetric.
//! - *cluster*: connected component of the interaction relation.
//! - *dependency* `i→j` (directed): in every subset where `i` earns at least
//!   `theta` (that is, `perf(T) − perf(T∖{i}) ≥ theta` with both defined),
//!   `j` is present too. An edit with no qualifying subset at all depends on
//!   every other edit — it never demonstrates standalone worth.

use super::{FitnessOracle, SubsetLimit, MAX_ENUMERATED_EDITS};
use crate::evo::EditUid;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub nodes: Vec<EditUid>,
    /// Unordered interacting pairs, stored with the smaller uid first.
    pub interactions: BTreeSet<(EditUid, EditUid)>,
    /// Directed dependency edges `(i, j)` meaning `i` depends on `j`.
    pub dependencies: BTreeSet<(EditUid, EditUid)>,
    /// Connected components of the interaction relation, each sorted,
    /// ordered by smallest member. Singletons included.
    pub clusters: Vec<Vec<EditUid>>,
    pub theta: f64,
}

pub fn interaction_graph(
    oracle: &dyn FitnessOracle,
    edits: &[EditUid],
    theta: f64,
) -> Result<InteractionGraph, SubsetLimit> {
    let n = edits.len();
    if n > MAX_ENUMERATED_EDITS {
        return Err(SubsetLimit(n));
    }
    let nodes: Vec<EditUid> = edits.to_vec();

    // perf by bitmask over `nodes`; None = failing variant.
    let base = oracle.fitness(&BTreeSet::new());
    let perf: Vec<Option<f64>> = (0u64..(1 << n))
        .map(|mask| {
            let subset: BTreeSet<EditUid> = nodes
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &u)| u)
                .collect();
            match (base, oracle.fitness(&subset)) {
                (Some(b), Some(f)) if b > 0.0 => Some((b - f) / b),
                _ => None,
            }
        })
        .collect();

    let marginal = |i: usize, t: u64| -> Option<f64> {
        debug_assert_eq!(t >> i & 1, 0);
        Some(perf[(t | 1 << i) as usize]? - perf[t as usize]?)
    };

    let mut interactions = BTreeSet::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut hit = false;
            // Contexts free of both i and j, enumerated over the other bits.
            let others: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
            'ctx: for m in 0u64..(1 << others.len()) {
                let mut t = 0u64;
                for (bit, &k) in others.iter().enumerate() {
                    if m >> bit & 1 == 1 {
                        t |= 1 << k;
                    }
                }
                for (a, b) in [(i, j), (j, i)] {
                    let d0 = perf[t as usize].is_some();
                    let da = perf[(t | 1 << a) as usize].is_some();
                    let db = perf[(t | 1 << b) as usize].is_some();
                    let dab = perf[(t | 1 << a | 1 << b) as usize].is_some();
                    if (d0, da) != (db, dab) {
                        hit = true;
                        break 'ctx;
                    }
                    if let (Some(x), Some(y)) = (marginal(a, t | 1 << b), marginal(a, t)) {
                        if (x - y).abs() > theta {
                            hit = true;
                            break 'ctx;
                        }
                    }
                }
            }
            if hit {
                let (a, b) = (nodes[i].min(nodes[j]), nodes[i].max(nodes[j]));
                interactions.insert((a, b));
            }
        }
    }

    let mut dependencies = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            // Witness against i→j: a subset containing i but not j in which
            // i earns at least theta.
            let mut witnessed = false;
            for t in 0u64..(1 << n) {
                if t >> i & 1 == 0 || t >> j & 1 == 1 {
                    continue;
                }
                if let Some(d) = marginal(i, t & !(1 << i)) {
                    if d >= theta {
                        witnessed = true;
                        break;
                    }
                }
            }
            if !witnessed {
                dependencies.insert((nodes[i], nodes[j]));
            }
        }
    }

    let clusters = components(&nodes, &interactions);
    Ok(InteractionGraph { nodes, interactions, dependencies, clusters, theta })
}

fn components(
    nodes: &[EditUid],
    interactions: &BTreeSet<(EditUid, EditUid)>,
) -> Vec<Vec<EditUid>> {
    let mut adj: BTreeMap<EditUid, Vec<EditUid>> = BTreeMap::new();
    for &(a, b) in interactions {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let mut seen: BTreeSet<EditUid> = BTreeSet::new();
    let mut out = Vec::new();
    let mut ordered = nodes.to_vec();
    ordered.sort_unstable();
    for &start in &ordered {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = vec![];
        let mut stack = vec![start];
        seen.insert(start);
        while let Some(u) = stack.pop() {
            comp.push(u);
            for &v in adj.get(&u).into_iter().flatten() {
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{planted_quad, FnOracle};

    #[test]
    fn additive_edits_form_singleton_clusters_with_no_edges() {
        let oracle = FnOracle(|s: &BTreeSet<EditUid>| {
            let saved: f64 = s.iter().map(|u| 50.0 + *u as f64).sum();
            Some(1000.0 - saved)
        });
        let g = interaction_graph(&oracle, &[1, 2, 3], 0.01).unwrap();
        assert!(g.interactions.is_empty());
        assert_eq!(g.clusters, vec![vec![1], vec![2], vec![3]]);
        // Every additive edit justifies itself alone: no dependencies.
        assert!(g.dependencies.is_empty());
    }

    #[test]
    fn planted_quad_yields_exact_dependency_edges_and_one_cluster() {
        let (uids, oracle) = planted_quad();
        let g = interaction_graph(&oracle, &uids, 0.01).unwrap();

        let expected: BTreeSet<(EditUid, EditUid)> =
            [(8, 6), (10, 6), (5, 6), (5, 8), (5, 10)].into_iter().collect();
        assert_eq!(g.dependencies, expected, "dependency edges must match exactly");
        assert_eq!(g.clusters, vec![vec![5, 6, 8, 10]], "one four-edit cluster");
    }

    #[test]
    fn failure_coupled_pair_interacts() {
        let oracle = FnOracle(|s: &BTreeSet<EditUid>| {
            match (s.contains(&1), s.contains(&2)) {
                (true, true) => Some(800.0),
                (false, false) => Some(1000.0),
                _ => None,
            }
        });
        let g = interaction_graph(&oracle, &[1, 2], 0.01).unwrap();
        assert_eq!(g.interactions.iter().copied().collect::<Vec<_>>(), vec![(1, 2)]);
        assert_eq!(g.clusters, vec![vec![1, 2]]);
        // Neither ever earns theta without the other.
        assert!(g.dependencies.contains(&(1, 2)) && g.dependencies.contains(&(2, 1)));
    }
}
