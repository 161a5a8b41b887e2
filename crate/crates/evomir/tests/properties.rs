//! Property suites, runnable with one command:
//!
//! ```text
//! cargo test -p evomir --test properties
//! ```
//!
//! Covered invariants: the printer/parser round-trips every shipped kernel
//! and 1000 generated mutants, search keeps its best fitness monotone under
//! elitism and its population size constant, materializing an edit list is a
//! strict left fold (so any split of the list composes), and the analysis
//! algorithms stay within their oracle-call budgets.

use evomir::analysis::{
    minimize_weak_edits, separate, uid_set, CountingOracle, FitnessOracle, TableOracle,
};
use evomir::bench::kernels;
use evomir::evo::{materialize, search, Edit, EditKind, EvalContext, SearchConfig};
use evomir::mir::{parse, print, structural_eq, Program, ValueRef};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

// ---------------------------------------------------------------------------
// deterministic random edits

fn random_edit(rng: &mut ChaCha8Rng, p: &Program, uid: u64) -> Edit {
    let ids = p.all_ids();
    let pick = |rng: &mut ChaCha8Rng| ids[rng.gen_range(0..ids.len())];
    let kind = match rng.gen_range(0..6) {
        0 => EditKind::Copy { donor: pick(rng), before: pick(rng) },
        1 => EditKind::Delete { target: pick(rng) },
        2 => EditKind::Move { target: pick(rng), before: pick(rng) },
        3 => EditKind::Replace { target: pick(rng), donor: pick(rng) },
        4 => EditKind::Swap { a: pick(rng), b: pick(rng) },
        _ => EditKind::OperandReplace {
            target: pick(rng),
            index: rng.gen_range(0..3),
            replacement: ValueRef::Inst(pick(rng)),
        },
    };
    Edit { uid, kind }
}

/// Rejection-sample an edit list that applies cleanly to `seed`.
fn random_applying_list(
    rng: &mut ChaCha8Rng,
    seed: &Program,
    max_len: usize,
    uid_base: u64,
) -> (Vec<Edit>, Program) {
    'outer: for _ in 0..500 {
        let len = rng.gen_range(1..=max_len);
        let mut edits = Vec::with_capacity(len);
        let mut p = seed.clone();
        for i in 0..len {
            // Draw against the current program so later edits can touch
            // instructions introduced by earlier ones.
            let e = random_edit(rng, &p, uid_base + i as u64);
            match materialize(&p, std::slice::from_ref(&e), 0) {
                Ok(next) => {
                    p = next;
                    edits.push(e);
                }
                Err(_) => continue 'outer,
            }
        }
        return (edits, p);
    }
    panic!("could not sample an applying edit list in 500 attempts");
}

#[test]
fn printer_round_trips_corpus_and_1000_mutants() {
    // Corpus first: print is a fixed point through the parser.
    let seeds: Vec<Program> = kernels::KERNEL_NAMES.iter().map(|n| kernels::load(n)).collect();
    for p in &seeds {
        let text = print(p);
        let back = parse(&text).expect("printed corpus kernel reparses");
        assert_eq!(print(&back), text);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x524f554e44);
    let mut produced = 0usize;
    while produced < 1000 {
        let seed = &seeds[produced % seeds.len()];
        let (_, mutant) = random_applying_list(&mut rng, seed, 3, 1_000_000);
        let text = print(&mutant);
        let back = parse(&text)
            .unwrap_or_else(|e| panic!("mutant fails to reparse: {e}\n{text}"));
        assert_eq!(print(&back), text, "print is not a fixed point for a mutant");
        produced += 1;
    }
    assert_eq!(produced, 1000);
}

#[test]
fn materialize_is_a_left_fold() {
    let seeds: Vec<Program> = kernels::KERNEL_NAMES.iter().map(|n| kernels::load(n)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x464f4c44);
    for round in 0..300 {
        let seed = &seeds[round % seeds.len()];
        let (edits, _) = random_applying_list(&mut rng, seed, 4, 2_000_000);
        let whole = materialize(seed, &edits, 0).expect("list applies as a whole");
        let k = rng.gen_range(0..=edits.len());
        let prefix = materialize(seed, &edits[..k], 0).expect("prefix applies");
        let chained = materialize(&prefix, &edits[k..], 0).expect("suffix applies to prefix");
        assert!(
            structural_eq(&whole, &chained),
            "fold law violated at round {round}, split {k}"
        );
    }
}

// ---------------------------------------------------------------------------
// engine invariants on a small kernel with a cheap judge

const SMALL_KERNEL: &str = r#"
fn @small() {
  global @out[i32 x 64]
entry:
  %lane = tid.lane
  %a = add %lane, 1
  %b = mul %a, 3
  %c = add %b, %a
  %d = sub %c, %lane
  %e = and %d, 255
  st.global @out, %lane, %e
  ret
}
"#;

fn instruction_count(p: &Program) -> f64 {
    p.entry().iter_instrs().count() as f64
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 24,
        failure_persistence: None,
        .. ProptestConfig::default()
    })]

    /// With elitism, the best fitness of a generation never worsens, and the
    /// population size never changes.
    #[test]
    fn search_is_elitist_and_population_constant(
        pop in 4usize..=12,
        gens in 2u32..=6,
        elitism in 1usize..=3,
        seed in 0u64..1_000,
    ) {
        let program = parse(SMALL_KERNEL).unwrap();
        let judge = |p: &Program| Some(instruction_count(p));
        let cx = EvalContext { seed_program: &program, judge: &judge };
        let cfg = SearchConfig {
            population: pop,
            generations: gens,
            elitism: elitism.min(pop),
            seed,
            ..SearchConfig::default()
        };
        let mut sizes_ok = true;
        let mut monotone = true;
        let mut prev_best: Option<f64> = None;
        search(&cx, &cfg, &mut |log, state| {
            sizes_ok &= log.population.len() == pop
                && log.population_size == pop
                && state.population.len() == pop;
            match log.best_fitness.cycles() {
                Some(best) => {
                    if let Some(p) = prev_best {
                        monotone &= best <= p;
                    }
                    prev_best = Some(best);
                }
                None => monotone = false, // judge accepts everything
            }
        });
        prop_assert!(sizes_ok, "population size drifted from {}", pop);
        prop_assert!(monotone, "best fitness worsened despite elitism");
    }
}

// ---------------------------------------------------------------------------
// analysis oracle-call budgets

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 32,
        failure_persistence: None,
        .. ProptestConfig::default()
    })]

    /// Weak-edit minimization performs at most |S| + 1 unique oracle calls;
    /// separation performs at most 3|S| + 2.
    #[test]
    fn analysis_stays_within_call_budgets(
        n in 1usize..=8,
        raw in prop::collection::vec(prop::option::of(100.0f64..1000.0), 256),
    ) {
        let uids: Vec<u64> = (1..=n as u64).collect();
        let mut table: BTreeMap<BTreeSet<u64>, Option<f64>> = BTreeMap::new();
        for mask in 0u32..(1 << n) {
            let subset: BTreeSet<u64> =
                (0..n).filter(|b| mask & (1 << b) != 0).map(|b| b as u64 + 1).collect();
            table.insert(subset, raw[mask as usize]);
        }
        // The empty and full sets must be valid for the algorithms to run.
        table.insert(BTreeSet::new(), Some(1000.0));
        table.insert(uids.iter().copied().collect(), Some(500.0));
        let oracle = TableOracle { table };

        let counting = CountingOracle::new(&oracle);
        prop_assert!(minimize_weak_edits(&counting, &uids, 0.01).is_some());
        prop_assert!(
            counting.unique_calls() <= n + 1,
            "minimization used {} unique calls for {} edits",
            counting.unique_calls(),
            n
        );

        let counting = CountingOracle::new(&oracle);
        prop_assert!(separate(&counting, &uids, 0.01).is_some());
        prop_assert!(
            counting.unique_calls() <= 3 * n + 2,
            "separation used {} unique calls for {} edits",
            counting.unique_calls(),
            n
        );
    }
}

/// The planted landscape shipped for the analysis pipeline stays internally
/// consistent: its table covers exactly the subsets the pipeline may query.
#[test]
fn planted_quad_table_is_closed_under_pipeline_queries() {
    let (uids, oracle) = evomir::analysis::planted_quad();
    // Full enumeration touches every subset; if the table were missing one,
    // this would panic inside the oracle.
    let records = evomir::analysis::enumerate_subsets(&oracle, &uids).unwrap();
    assert_eq!(records.len(), 1 << uids.len());
    assert_eq!(oracle.fitness(&uid_set(&[])), Some(1000.0));
}
