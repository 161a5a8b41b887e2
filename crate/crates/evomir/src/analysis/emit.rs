//! Plain-text renderings of analysis results.

use super::{InteractionGraph, SubsetRecord};
use std::fmt::Write;

/// Graphviz rendering: solid undirected edges for interactions, dashed
/// arrows for dependencies. Clusters are drawn as subgraph boxes.
pub fn graph_dot(g: &InteractionGraph) -> String {
    let mut s = String::new();
    s.push_str("digraph interactions {\n");
    s.push_str("  node [shape=circle];\n");
    for (ci, cluster) in g.clusters.iter().enumerate() {
        writeln!(s, "  subgraph cluster_{ci} {{").unwrap();
        writeln!(s, "    label=\"cluster {ci}\";").unwrap();
        for uid in cluster {
            writeln!(s, "    e{uid} [label=\"{uid}\"];").unwrap();
        }
        s.push_str("  }\n");
    }
    for (a, b) in &g.interactions {
        writeln!(s, "  e{a} -> e{b} [dir=none];").unwrap();
    }
    for (a, b) in &g.dependencies {
        writeln!(s, "  e{a} -> e{b} [style=dashed, constraint=false];").unwrap();
    }
    s.push_str("}\n");
    s
}

/// CSV table of a full subset enumeration. Subsets are rendered as
/// `+`-joined uids; an empty subset is `-`.
pub fn subsets_csv(records: &[SubsetRecord]) -> String {
    let mut s = String::from("subset,size,status,mean_cycles,perf\n");
    for r in records {
        let subset = if r.subset.is_empty() {
            "-".to_string()
        } else {
            r.subset.iter().map(|u| u.to_string()).collect::<Vec<_>>().join("+")
        };
        let status = if r.fitness.is_some() { "pass" } else { "fail" };
        let cycles = r.fitness.map(|f| format!("{f}")).unwrap_or_default();
        let perf = r.perf.map(|p| format!("{p:.6}")).unwrap_or_default();
        writeln!(s, "{subset},{},{status},{cycles},{perf}", r.subset.len()).unwrap();
    }
    s
}
