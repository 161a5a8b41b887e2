//! Generational search loop.
//!
//! Determinism contract: given the same seed program, judge, and config, a
//! search produces byte-identical generation logs regardless of how many
//! threads evaluate fitness. Evaluation is pure per individual and results
//! are assembled by slot; all stochastic choices draw from streams keyed by
//! `(run seed, generation, slot)`, never from a shared sequential RNG.

use super::apply::{apply, materialize};
use super::{Edit, EditKind, EditUid};
use crate::mir::{
    def_dominates_use, dominators, verify, InstId, Operand, OperandKind, Program, ScalarType,
    ValueRef,
};
use crate::rng::stream;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

const DOMAIN_BREED: u64 = 0x42524544; // "BRED"

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub population: usize,
    pub generations: u32,
    pub elitism: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament: usize,
    /// Root seed for every stream in the run (breeding, repair).
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population: 256,
            generations: 50,
            elitism: 4,
            crossover_rate: 0.8,
            mutation_rate: 0.3,
            tournament: 2,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Individual {
    pub edits: Vec<Edit>,
}

impl Individual {
    pub fn uids(&self) -> Vec<EditUid> {
        self.edits.iter().map(|e| e.uid).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Fitness {
    /// Every suite test passed; lower mean cycles is better.
    Valid { mean_cycles: f64 },
    /// Materialization, verification, or some suite test failed.
    Invalid,
}

impl Fitness {
    pub fn is_valid(&self) -> bool {
        matches!(self, Fitness::Valid { .. })
    }

    pub fn cycles(&self) -> Option<f64> {
        match self {
            Fitness::Valid { mean_cycles } => Some(*mean_cycles),
            Fitness::Invalid => None,
        }
    }

    fn key(&self) -> (u8, f64) {
        match self {
            Fitness::Valid { mean_cycles } => (0, *mean_cycles),
            Fitness::Invalid => (1, f64::INFINITY),
        }
    }

    /// Total order: valid before invalid, then ascending cycles.
    pub fn cmp_key(a: &Fitness, b: &Fitness) -> std::cmp::Ordering {
        let (ka, kb) = (a.key(), b.key());
        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
    }
}

/// What the engine needs to score a variant. `judge` sees a materialized,
/// verifier-clean program and returns its mean cycle count over the fitness
/// suite, or `None` if any test fails.
pub struct EvalContext<'a> {
    pub seed_program: &'a Program,
    pub judge: &'a (dyn Fn(&Program) -> Option<f64> + Sync),
}

impl<'a> EvalContext<'a> {
    /// Score one edit list (used for baselines and post-hoc analysis).
    pub fn evaluate(&self, edits: &[Edit], rng_root: u64) -> Fitness {
        let p = match materialize(self.seed_program, edits, rng_root) {
            Ok(p) => p,
            Err(_) => return Fitness::Invalid,
        };
        if !verify(&p).is_empty() {
            return Fitness::Invalid;
        }
        match (self.judge)(&p) {
            Some(mean_cycles) => Fitness::Valid { mean_cycles },
            None => Fitness::Invalid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotLog {
    pub edits: Vec<EditUid>,
    pub fitness: Fitness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: u32,
    pub best_fitness: Fitness,
    pub best_edits: Vec<EditUid>,
    pub valid_count: usize,
    pub population_size: usize,
    pub mean_valid_cycles: Option<f64>,
    /// Full population, slot by slot, for discovery-history replay.
    pub population: Vec<SlotLog>,
}

/// Resumable search position: the population about to be evaluated as
/// generation `generation`. Restarting from a checkpoint replays the run
/// exactly, because breeding streams are keyed by generation and slot rather
/// than carried RNG state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub generation: u32,
    pub population: Vec<Individual>,
}

pub struct SearchOutcome {
    /// Logs for the generations run in this invocation, in order.
    pub logs: Vec<GenerationLog>,
    pub best: Individual,
    pub best_fitness: Fitness,
    pub final_state: SearchState,
}

/// Edit uids encode their origin so they are unique across a run and never
/// collide with hand-assigned uids (which should stay below `1 << 34`).
pub fn encode_uid(generation: u32, slot: usize, attempt: u32) -> EditUid {
    ((generation as u64 + 1) << 34) | ((slot as u64 & 0xFFFFF) << 8) | (attempt as u64 & 0xFF)
}

pub fn search(
    cx: &EvalContext,
    cfg: &SearchConfig,
    on_generation: &mut dyn FnMut(&GenerationLog, &SearchState),
) -> SearchOutcome {
    let initial = SearchState {
        generation: 0,
        population: vec![Individual::default(); cfg.population],
    };
    search_resumed(cx, cfg, initial, on_generation)
}

pub fn search_resumed(
    cx: &EvalContext,
    cfg: &SearchConfig,
    state: SearchState,
    on_generation: &mut dyn FnMut(&GenerationLog, &SearchState),
) -> SearchOutcome {
    assert!(cfg.population > 0, "population must be positive");
    assert!(
        cfg.elitism >= 1 && cfg.elitism <= cfg.population,
        "elitism must be in 1..=population"
    );
    assert!(cfg.tournament >= 1, "tournament size must be positive");
    assert_eq!(
        state.population.len(),
        cfg.population,
        "checkpoint population size does not match config"
    );

    let mut population = state.population;
    let mut cache: HashMap<Vec<EditUid>, Fitness> = HashMap::new();
    let mut logs = Vec::new();

    for gen in state.generation..=cfg.generations {
        let fits = evaluate_all(cx, cfg, &population, &mut cache);

        let mut order: Vec<usize> = (0..cfg.population).collect();
        order.sort_by(|&a, &b| Fitness::cmp_key(&fits[a], &fits[b]).then(a.cmp(&b)));
        let best_slot = order[0];

        let valid: Vec<f64> = fits.iter().filter_map(Fitness::cycles).collect();
        let log = GenerationLog {
            generation: gen,
            best_fitness: fits[best_slot],
            best_edits: population[best_slot].uids(),
            valid_count: valid.len(),
            population_size: cfg.population,
            mean_valid_cycles: if valid.is_empty() {
                None
            } else {
                Some(valid.iter().sum::<f64>() / valid.len() as f64)
            },
            population: population
                .iter()
                .zip(&fits)
                .map(|(ind, f)| SlotLog { edits: ind.uids(), fitness: *f })
                .collect(),
        };

        let mut next = Vec::with_capacity(cfg.population);
        for &slot in order.iter().take(cfg.elitism) {
            next.push(population[slot].clone());
        }
        let rank_of = {
            let mut rank = vec![0usize; cfg.population];
            for (r, &slot) in order.iter().enumerate() {
                rank[slot] = r;
            }
            rank
        };
        for slot in cfg.elitism..cfg.population {
            let mut rng = stream(cfg.seed, &[DOMAIN_BREED, gen as u64, slot as u64]);
            let p1 = tournament(&mut rng, &rank_of, cfg.tournament);
            let p2 = tournament(&mut rng, &rank_of, cfg.tournament);
            let mut child = if rng.gen_bool(cfg.crossover_rate) {
                crossover(cx, cfg, &population[p1], &population[p2], &mut rng)
            } else {
                population[p1].clone()
            };
            if rng.gen_bool(cfg.mutation_rate) {
                mutate(cx, cfg, &mut child, gen, slot, &mut rng);
            }
            next.push(child);
        }

        // The final generation breeds too: a checkpoint always means "the
        // population about to be evaluated as generation N", so a completed
        // run can later be extended and still replay exactly like a longer
        // continuous run.
        let best = population[best_slot].clone();
        let best_fitness = fits[best_slot];
        population = next;
        let snapshot = SearchState { generation: gen + 1, population: population.clone() };
        on_generation(&log, &snapshot);
        logs.push(log);

        if gen == cfg.generations {
            return SearchOutcome { best, best_fitness, final_state: snapshot, logs };
        }
    }
    unreachable!("loop returns at the final generation");
}

fn evaluate_all(
    cx: &EvalContext,
    cfg: &SearchConfig,
    population: &[Individual],
    cache: &mut HashMap<Vec<EditUid>, Fitness>,
) -> Vec<Fitness> {
    let jobs: Vec<usize> = (0..population.len())
        .filter(|&s| !cache.contains_key(&population[s].uids()))
        .collect();
    let fresh: Vec<(usize, Fitness)> = jobs
        .par_iter()
        .map(|&s| (s, cx.evaluate(&population[s].edits, cfg.seed)))
        .collect();
    for (s, f) in fresh {
        cache.insert(population[s].uids(), f);
    }
    population.iter().map(|ind| cache[&ind.uids()]).collect()
}

fn tournament(rng: &mut ChaCha8Rng, rank_of: &[usize], size: usize) -> usize {
    let mut best = rng.gen_range(0..rank_of.len());
    for _ in 1..size {
        let c = rng.gen_range(0..rank_of.len());
        if rank_of[c] < rank_of[best] {
            best = c;
        }
    }
    best
}

/// One-point crossover on edit lists. The child keeps the head of the first
/// parent and the tail of the second, with later duplicate uids dropped. A
/// child that fails to materialize or verify is replaced by the first parent
/// wholesale, so crossover can shuffle but never manufacture garbage.
fn crossover(
    cx: &EvalContext,
    cfg: &SearchConfig,
    p1: &Individual,
    p2: &Individual,
    rng: &mut ChaCha8Rng,
) -> Individual {
    let c1 = rng.gen_range(0..=p1.edits.len());
    let c2 = rng.gen_range(0..=p2.edits.len());
    let mut edits: Vec<Edit> = Vec::with_capacity(c1 + p2.edits.len() - c2);
    for e in p1.edits[..c1].iter().chain(&p2.edits[c2..]) {
        if !edits.iter().any(|x| x.uid == e.uid) {
            edits.push(e.clone());
        }
    }
    let child = Individual { edits };
    let ok = matches!(
        materialize(cx.seed_program, &child.edits, cfg.seed),
        Ok(p) if verify(&p).is_empty()
    );
    if ok {
        child
    } else {
        p1.clone()
    }
}

/// Append one freshly generated edit that keeps the individual verifier-clean,
/// trying up to 20 draws. Each attempt gets its own uid so an accepted edit's
/// identity is independent of how many attempts failed before it.
fn mutate(
    cx: &EvalContext,
    cfg: &SearchConfig,
    ind: &mut Individual,
    gen: u32,
    slot: usize,
    rng: &mut ChaCha8Rng,
) {
    let cur = match materialize(cx.seed_program, &ind.edits, cfg.seed) {
        Ok(p) if verify(&p).is_empty() => p,
        _ => return,
    };
    for attempt in 0..20 {
        let uid = encode_uid(gen, slot, attempt);
        let Some(edit) = propose(&cur, uid, rng) else { continue };
        let mut test = cur.clone();
        if apply(&mut test, &edit, cfg.seed).is_ok() && verify(&test).is_empty() {
            ind.edits.push(edit);
            return;
        }
    }
}

/// Draw one random edit against the materialized program. Structural kinds
/// exclude terminators; operand replacement may retarget any value-kind
/// operand, including branch conditions.
fn propose(p: &Program, uid: EditUid, rng: &mut ChaCha8Rng) -> Option<Edit> {
    let f = p.entry();
    let all: Vec<InstId> = f.iter_instrs().map(|(_, _, ins)| ins.id).collect();
    let plain: Vec<InstId> = f
        .iter_instrs()
        .filter(|(_, _, ins)| !ins.opcode.is_terminator())
        .map(|(_, _, ins)| ins.id)
        .collect();
    if all.is_empty() || plain.is_empty() {
        return None;
    }
    let pick = |rng: &mut ChaCha8Rng, v: &[InstId]| v[rng.gen_range(0..v.len())];

    let kind = match rng.gen_range(0..6u32) {
        0 => EditKind::Copy { donor: pick(rng, &plain), before: pick(rng, &all) },
        1 => {
            let used: std::collections::BTreeSet<InstId> = f
                .iter_instrs()
                .flat_map(|(_, _, ins)| ins.operands.iter())
                .filter_map(|o| match o {
                    Operand::Value(ValueRef::Inst(id)) => Some(*id),
                    _ => None,
                })
                .collect();
            let deletable: Vec<InstId> =
                plain.iter().copied().filter(|id| !used.contains(id)).collect();
            if deletable.is_empty() {
                return None;
            }
            EditKind::Delete { target: pick(rng, &deletable) }
        }
        2 => EditKind::Move { target: pick(rng, &plain), before: pick(rng, &all) },
        3 => EditKind::Replace { target: pick(rng, &plain), donor: pick(rng, &plain) },
        4 => EditKind::Swap { a: pick(rng, &plain), b: pick(rng, &plain) },
        5 => return propose_operand_replace(p, uid, rng),
        _ => unreachable!(),
    };
    Some(Edit { uid, kind })
}

fn propose_operand_replace(p: &Program, uid: EditUid, rng: &mut ChaCha8Rng) -> Option<Edit> {
    let f = p.entry();
    let slots: Vec<(InstId, usize)> = f
        .iter_instrs()
        .flat_map(|(_, _, ins)| {
            let id = ins.id;
            ins.opcode
                .operand_kinds()
                .iter()
                .enumerate()
                .filter(|(_, k)| matches!(k, OperandKind::I32 | OperandKind::Bool | OperandKind::Poly))
                .map(move |(i, _)| (id, i))
                .collect::<Vec<_>>()
        })
        .collect();
    if slots.is_empty() {
        return None;
    }
    let (target, index) = slots[rng.gen_range(0..slots.len())];
    let (tb, ti) = f.find(target)?;
    let ins = &f.blocks[tb].instrs[ti];

    let ty = match ins.opcode.operand_kinds()[index] {
        OperandKind::I32 => ScalarType::I32,
        OperandKind::Bool => ScalarType::Bool,
        OperandKind::Poly => ins
            .operands
            .iter()
            .find_map(|o| match o {
                Operand::Value(v) => f.value_type(*v),
                _ => None,
            })
            .unwrap_or(ScalarType::I32),
        _ => return None,
    };

    let dom = dominators(f);
    let positions: BTreeMap<InstId, (usize, usize)> =
        f.iter_instrs().map(|(b, i, ins)| (ins.id, (b, i))).collect();
    let current = match &ins.operands[index] {
        Operand::Value(v) => Some(*v),
        _ => None,
    };
    let mut cands: Vec<ValueRef> = Vec::new();
    for (i, pt) in f.params.iter().enumerate() {
        if *pt == ty {
            cands.push(ValueRef::Param(i as u32));
        }
    }
    for (&id, _) in positions.iter() {
        let v = ValueRef::Inst(id);
        if id != target
            && def_dominates_use(&dom, &positions, v, tb, ti)
            && f.value_type(v) == Some(ty)
        {
            cands.push(v);
        }
    }
    cands.retain(|v| Some(*v) != current);
    if cands.is_empty() {
        return None;
    }
    let replacement = cands[rng.gen_range(0..cands.len())];
    Some(Edit {
        uid,
        kind: EditKind::OperandReplace { target, index: index as u32, replacement },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mir::parse;

    const KERNEL: &str = "\
fn @k() {
  shared @s[i32 x 64]
entry:
  %t = tid.lane
  %a = add %t, 1
  %b = mul %a, 3
  %c = add %b, 5
  %d = xor %c, %a
  st.shared @s, %t, %d
  %e = add %t, 7
  st.shared @s, %e, %a
  bar.warp
  ret
}
";

    /// Judge that rewards short entry blocks: cycles = instruction count,
    /// cheap and discriminating enough to exercise the loop.
    fn count_judge(p: &Program) -> Option<f64> {
        Some(p.entry().iter_instrs().count() as f64)
    }

    fn run(seed: u64, pop: usize, gens: u32) -> (Vec<GenerationLog>, SearchOutcome) {
        let prog = parse(KERNEL).unwrap();
        let judge = count_judge;
        let cx = EvalContext { seed_program: &prog, judge: &judge };
        let cfg = SearchConfig {
            population: pop,
            generations: gens,
            elitism: 2,
            seed,
            ..SearchConfig::default()
        };
        let mut logs = Vec::new();
        let out = search(&cx, &cfg, &mut |l, _| logs.push(l.clone()));
        (logs, out)
    }

    #[test]
    fn identical_seeds_reproduce_identical_histories() {
        let (la, oa) = run(11, 16, 6);
        let (lb, ob) = run(11, 16, 6);
        assert_eq!(la, lb);
        assert_eq!(oa.best, ob.best);
        let ja: Vec<String> = la.iter().map(|l| serde_json::to_string(l).unwrap()).collect();
        let jb: Vec<String> = lb.iter().map(|l| serde_json::to_string(l).unwrap()).collect();
        assert_eq!(ja, jb);
    }

    #[test]
    fn different_seeds_diverge() {
        let (la, _) = run(11, 16, 6);
        let (lb, _) = run(12, 16, 6);
        assert_ne!(la, lb);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let (solo, _) = {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            pool.install(|| run(7, 16, 5))
        };
        let (multi, _) = {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
            pool.install(|| run(7, 16, 5))
        };
        assert_eq!(solo, multi);
    }

    #[test]
    fn search_makes_progress_on_a_shrinkable_kernel() {
        let (_, out) = run(3, 32, 12);
        let best = out.best_fitness.cycles().expect("best stays valid");
        assert!(best < 10.0, "expected dead code to be deleted, got {best}");
        assert!(!out.best.edits.is_empty());
    }

    #[test]
    fn elite_fitness_never_worsens() {
        let (logs, _) = run(5, 24, 10);
        for w in logs.windows(2) {
            let (a, b) = (&w[0].best_fitness, &w[1].best_fitness);
            assert!(
                Fitness::cmp_key(b, a) != std::cmp::Ordering::Greater,
                "best worsened: {a:?} -> {b:?}"
            );
        }
    }

    #[test]
    fn population_size_is_constant() {
        let (logs, _) = run(9, 20, 6);
        assert!(logs.iter().all(|l| l.population.len() == 20));
    }

    #[test]
    fn resume_from_checkpoint_replays_identically() {
        let prog = parse(KERNEL).unwrap();
        let judge = count_judge;
        let cx = EvalContext { seed_program: &prog, judge: &judge };
        let cfg =
            SearchConfig { population: 12, generations: 8, elitism: 2, seed: 4, ..Default::default() };

        let mut full_logs = Vec::new();
        let mut mid: Option<SearchState> = None;
        search(&cx, &cfg, &mut |l, s| {
            if l.generation == 4 {
                mid = Some(s.clone());
            }
            full_logs.push(l.clone());
        });

        let mut tail_logs = Vec::new();
        let out = search_resumed(&cx, &cfg, mid.unwrap(), &mut |l, _| tail_logs.push(l.clone()));
        assert_eq!(&full_logs[5..], &tail_logs[..]);
        assert_eq!(out.final_state.generation, 9);
    }

    #[test]
    fn uids_encode_origin_uniquely() {
        let mut seen = std::collections::BTreeSet::new();
        for gen in 0..4 {
            for slot in 0..100 {
                for attempt in 0..20 {
                    assert!(seen.insert(encode_uid(gen, slot, attempt)));
                }
            }
        }
        assert!(encode_uid(0, 0, 0) >= 1 << 34);
    }
}
