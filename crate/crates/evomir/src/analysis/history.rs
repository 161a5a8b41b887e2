//! Discovery history and source mapping for evolved edits.

use crate::evo::{apply, Edit, EditUid, GenerationLog};
use crate::mir::Program;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discovery {
    pub uid: EditUid,
    /// First generation whose population contained the edit.
    pub first_generation: u32,
    /// Slot of the first individual carrying it in that generation.
    pub first_slot: usize,
}

/// When each of `edits` first appeared anywhere in the population, replayed
/// from the generation logs. Edits never seen in the logs are omitted.
/// Sorted by first appearance, then uid.
pub fn discovery_history(logs: &[GenerationLog], edits: &[EditUid]) -> Vec<Discovery> {
    let mut out = Vec::new();
    for &uid in edits {
        let mut found = None;
        'scan: for log in logs {
            for (slot, s) in log.population.iter().enumerate() {
                if s.edits.contains(&uid) {
                    found = Some(Discovery { uid, first_generation: log.generation, first_slot: slot });
                    break 'scan;
                }
            }
        }
        if let Some(d) = found {
            out.push(d);
        }
    }
    out.sort_by_key(|d| (d.first_generation, d.uid));
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMapping {
    pub uid: EditUid,
    pub kind: String,
    /// Source locations of the instructions the edit touches, resolved in
    /// the program state the edit actually applied to (so edits layered on
    /// earlier edits still map back to seed lines via copied provenance).
    pub locations: Vec<String>,
}

pub fn source_map(seed: &Program, edits: &[Edit], rng_root: u64) -> Vec<SourceMapping> {
    let mut program = seed.clone();
    let mut out = Vec::new();
    for e in edits {
        let f = program.entry();
        let mut locations: Vec<String> = Vec::new();
        for id in e.kind.touched() {
            if let Some((b, i)) = f.find(id) {
                if let Some(loc) = &f.blocks[b].instrs[i].source_loc {
                    if !locations.contains(loc) {
                        locations.push(loc.clone());
                    }
                }
            }
        }
        out.push(SourceMapping { uid: e.uid, kind: e.kind.name().to_string(), locations });
        // Keep the program current for the next edit; a failing apply leaves
        // later mappings running against the last good state.
        let _ = apply(&mut program, e, rng_root);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evo::{EditKind, Fitness, SlotLog};
    use crate::mir::{parse_named, InstId};

    fn log(generation: u32, pops: Vec<Vec<EditUid>>) -> GenerationLog {
        GenerationLog {
            generation,
            best_fitness: Fitness::Invalid,
            best_edits: vec![],
            valid_count: 0,
            population_size: pops.len(),
            mean_valid_cycles: None,
            population: pops
                .into_iter()
                .map(|edits| SlotLog { edits, fitness: Fitness::Invalid })
                .collect(),
        }
    }

    #[test]
    fn first_appearance_is_found_and_ordered() {
        let logs = vec![
            log(0, vec![vec![], vec![]]),
            log(1, vec![vec![7], vec![]]),
            log(2, vec![vec![7, 9], vec![9]]),
        ];
        let h = discovery_history(&logs, &[9, 7, 1234]);
        assert_eq!(
            h,
            vec![
                Discovery { uid: 7, first_generation: 1, first_slot: 0 },
                Discovery { uid: 9, first_generation: 2, first_slot: 0 },
            ]
        );
    }

    #[test]
    fn edits_map_back_to_source_lines() {
        let text = "fn @k() {\nentry:\n  %t = tid.lane\n  %a = add %t, 1\n  ret\n}\n";
        let p = parse_named(text, "kern.ir").unwrap();
        let edits = vec![
            Edit { uid: 1, kind: EditKind::Copy { donor: InstId(1), before: InstId(2) } },
            // Touches the copy created by uid 1; provenance is inherited.
            Edit { uid: 2, kind: EditKind::Delete { target: InstId((1 << 32) + 1) } },
        ];
        let m = source_map(&p, &edits, 0);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].kind, "copy");
        assert!(m[0].locations.iter().any(|l| l.contains("kern.ir")), "{:?}", m[0]);
        assert_eq!(m[1].locations, m[0].locations[..1].to_vec());
    }
}
