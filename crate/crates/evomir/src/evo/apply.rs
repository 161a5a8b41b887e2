//! Applying edits to a program.
//!
//! Application is structural: an edit either rewrites the entry function or
//! fails with an [`ApplyError`]. Semantic damage (type clashes, dominance
//! breaks, lost terminators) is deliberately left to the verifier, which the
//! search runs on every materialized variant. The one semantic service done
//! here is *operand repair*: instructions that were inserted, moved, or
//! rewritten get any out-of-scope value operands replaced with an in-scope
//! value of the same type, chosen uniformly from a deterministic stream keyed
//! by the edit uid. Untouched instructions are never repaired.

use super::{Edit, EditKind, EditUid};
use crate::mir::{
    def_dominates_use, dominators, Dominance, InstId, Instruction, Operand, OperandKind, Program,
    ScalarType, ValueRef,
};
use crate::rng::stream;
use rand::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

/// Instruction ids at or above this base were created by edits; ids below it
/// come from parsing. An edit with uid `u` creates id `EDIT_ID_BASE + u`.
pub const EDIT_ID_BASE: u64 = 1 << 32;

/// Domain tag separating repair draws from every other RNG stream in a run.
const DOMAIN_REPAIR: u64 = 0x52455052; // "REPR"

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApplyError {
    #[error("no instruction with id {0:?}")]
    MissingTarget(InstId),
    #[error("edit may not structurally touch terminator {0:?}")]
    TerminatorTarget(InstId),
    #[error("deleting {0:?} would orphan uses of its result")]
    WouldOrphanUses(InstId),
    #[error("edit uid {0} was already applied (duplicate created id)")]
    DuplicateUid(EditUid),
    #[error("instruction {target:?} has no operand {index}")]
    BadOperandIndex { target: InstId, index: u32 },
    #[error("operand {index} of {target:?} is not a value operand")]
    NotAValueOperand { target: InstId, index: u32 },
    #[error("replacement value {0:?} does not exist in the function")]
    MissingReplacement(ValueRef),
    #[error("replacement instruction {0:?} produces no value")]
    ResultlessReplacement(InstId),
    #[error("edit references the same instruction twice")]
    SamePosition,
    #[error("no in-scope {ty:?} value to repair operand {index} of {target:?}")]
    NoRepairCandidate { target: InstId, index: u32, ty: ScalarType },
}

/// Apply one edit to `program`'s entry function in place.
pub fn apply(program: &mut Program, edit: &Edit, rng_root: u64) -> Result<(), ApplyError> {
    let f = program.entry_mut();
    match edit.kind {
        EditKind::Copy { donor, before } => {
            let (db, di) = find(f, donor)?;
            let d = &f.blocks[db].instrs[di];
            if d.opcode.is_terminator() {
                return Err(ApplyError::TerminatorTarget(donor));
            }
            let new_id = InstId(EDIT_ID_BASE + edit.uid);
            if find(f, new_id).is_ok() {
                return Err(ApplyError::DuplicateUid(edit.uid));
            }
            let mut ins = d.clone();
            ins.id = new_id;
            let (bb, bi) = find(f, before)?;
            f.blocks[bb].instrs.insert(bi, ins);
            repair(f, bb, bi, edit.uid, rng_root)
        }
        EditKind::Delete { target } => {
            let (tb, ti) = find(f, target)?;
            if f.blocks[tb].instrs[ti].opcode.is_terminator() {
                return Err(ApplyError::TerminatorTarget(target));
            }
            let used = f.iter_instrs().any(|(_, _, ins)| {
                ins.operands.iter().any(|o| *o == Operand::Value(ValueRef::Inst(target)))
            });
            if used {
                return Err(ApplyError::WouldOrphanUses(target));
            }
            f.blocks[tb].instrs.remove(ti);
            Ok(())
        }
        EditKind::Move { target, before } => {
            if target == before {
                return Err(ApplyError::SamePosition);
            }
            let (tb, ti) = find(f, target)?;
            if f.blocks[tb].instrs[ti].opcode.is_terminator() {
                return Err(ApplyError::TerminatorTarget(target));
            }
            find(f, before)?;
            let ins = f.blocks[tb].instrs.remove(ti);
            let (bb, bi) = find(f, before).expect("anchor endures removal");
            f.blocks[bb].instrs.insert(bi, ins);
            repair(f, bb, bi, edit.uid, rng_root)
        }
        EditKind::Replace { target, donor } => {
            if target == donor {
                return Err(ApplyError::SamePosition);
            }
            let (db, di) = find(f, donor)?;
            let d = &f.blocks[db].instrs[di];
            if d.opcode.is_terminator() {
                return Err(ApplyError::TerminatorTarget(donor));
            }
            let (opcode, operands, loc) = (d.opcode, d.operands.clone(), d.source_loc.clone());
            let (tb, ti) = find(f, target)?;
            // Rewriting a used def into a result-less instruction (a store,
            // say) would orphan its uses just like deleting it.
            if !opcode.has_result() && f.blocks[tb].instrs[ti].opcode.has_result() {
                let used = f.iter_instrs().any(|(_, _, ins)| {
                    ins.operands.iter().any(|o| *o == Operand::Value(ValueRef::Inst(target)))
                });
                if used {
                    return Err(ApplyError::WouldOrphanUses(target));
                }
            }
            let t = &mut f.blocks[tb].instrs[ti];
            if t.opcode.is_terminator() {
                return Err(ApplyError::TerminatorTarget(target));
            }
            t.opcode = opcode;
            t.operands = operands;
            t.source_loc = loc;
            repair(f, tb, ti, edit.uid, rng_root)
        }
        EditKind::Swap { a, b } => {
            if a == b {
                return Err(ApplyError::SamePosition);
            }
            let (ab, ai) = find(f, a)?;
            let (bb, bi) = find(f, b)?;
            if f.blocks[ab].instrs[ai].opcode.is_terminator() {
                return Err(ApplyError::TerminatorTarget(a));
            }
            if f.blocks[bb].instrs[bi].opcode.is_terminator() {
                return Err(ApplyError::TerminatorTarget(b));
            }
            if ab == bb {
                f.blocks[ab].instrs.swap(ai, bi);
            } else {
                // Two-step replace through a placeholder clone keeps borrows simple.
                let ia = f.blocks[ab].instrs[ai].clone();
                let ib = std::mem::replace(&mut f.blocks[bb].instrs[bi], ia);
                f.blocks[ab].instrs[ai] = ib;
            }
            repair(f, ab, ai, edit.uid, rng_root)?;
            repair(f, bb, bi, edit.uid, rng_root)
        }
        EditKind::OperandReplace { target, index, replacement } => {
            match replacement {
                ValueRef::Param(i) => {
                    if i as usize >= f.params.len() {
                        return Err(ApplyError::MissingReplacement(replacement));
                    }
                }
                ValueRef::Inst(id) => {
                    find(f, id)?;
                    // A result-less instruction (store, branch, barrier) is
                    // not a value; allowing it here would make the program
                    // unprintable as well as unverifiable.
                    if f.value_type(replacement).is_none() {
                        return Err(ApplyError::ResultlessReplacement(id));
                    }
                }
            }
            let (tb, ti) = find(f, target)?;
            let t = &mut f.blocks[tb].instrs[ti];
            let idx = index as usize;
            if idx >= t.operands.len() {
                return Err(ApplyError::BadOperandIndex { target, index });
            }
            let kinds = t.opcode.operand_kinds();
            let replaceable = matches!(
                kinds.get(idx),
                Some(OperandKind::I32 | OperandKind::Bool | OperandKind::Poly)
            );
            if !replaceable {
                return Err(ApplyError::NotAValueOperand { target, index });
            }
            t.operands[idx] = Operand::Value(replacement);
            Ok(())
        }
    }
}

/// Fold an edit list over a seed program, strictly: the first edit that fails
/// to apply aborts the whole materialization. Purely a function of
/// `(seed, edits, rng_root)`.
pub fn materialize(seed: &Program, edits: &[Edit], rng_root: u64) -> Result<Program, ApplyError> {
    let mut p = seed.clone();
    for e in edits {
        apply(&mut p, e, rng_root)?;
    }
    Ok(p)
}

fn find(f: &crate::mir::Function, id: InstId) -> Result<(usize, usize), ApplyError> {
    f.find(id).ok_or(ApplyError::MissingTarget(id))
}

/// Replace out-of-scope value operands of the instruction at `(bb, bi)` with
/// in-scope values of the same type. Candidates are ordered (params by index,
/// then defs by id) and one is drawn uniformly per repaired operand from a
/// stream keyed by `(uid, operand index)`, so repair is independent of how
/// the surrounding edit list came to be.
fn repair(
    f: &mut crate::mir::Function,
    bb: usize,
    bi: usize,
    uid: EditUid,
    rng_root: u64,
) -> Result<(), ApplyError> {
    let dom = dominators(f);
    let positions: BTreeMap<InstId, (usize, usize)> =
        f.iter_instrs().map(|(b, i, ins)| (ins.id, (b, i))).collect();
    let target = f.blocks[bb].instrs[bi].clone();
    let mut repaired = f.blocks[bb].instrs[bi].clone();
    let mut changed = false;
    for (oi, op) in target.operands.iter().enumerate() {
        let v = match op {
            Operand::Value(v) => *v,
            _ => continue,
        };
        if def_dominates_use(&dom, &positions, v, bb, bi) {
            continue;
        }
        let ty = operand_type(f, &target, oi, v);
        let cands = in_scope_values(f, &dom, &positions, bb, bi, ty, target.id);
        if cands.is_empty() {
            return Err(ApplyError::NoRepairCandidate { target: target.id, index: oi as u32, ty });
        }
        let mut rng = stream(rng_root, &[DOMAIN_REPAIR, uid, oi as u64]);
        repaired.operands[oi] = Operand::Value(cands[rng.gen_range(0..cands.len())]);
        changed = true;
    }
    if changed {
        f.blocks[bb].instrs[bi] = repaired;
    }
    Ok(())
}

/// Concrete type an operand slot needs. Poly slots take their cue from the
/// out-of-scope value itself when it still exists somewhere in the function
/// (a moved def, say), then from a sibling value operand, and fall back to
/// i32.
fn operand_type(
    f: &crate::mir::Function,
    ins: &Instruction,
    oi: usize,
    v: ValueRef,
) -> ScalarType {
    match ins.opcode.operand_kinds().get(oi) {
        Some(OperandKind::I32) => ScalarType::I32,
        Some(OperandKind::Bool) => ScalarType::Bool,
        Some(OperandKind::Poly) => f
            .value_type(v)
            .or_else(|| {
                ins.operands.iter().enumerate().find_map(|(i, o)| match o {
                    Operand::Value(w) if i != oi => f.value_type(*w),
                    _ => None,
                })
            })
            .unwrap_or(ScalarType::I32),
        _ => ScalarType::I32,
    }
}

fn in_scope_values(
    f: &crate::mir::Function,
    dom: &Dominance,
    positions: &BTreeMap<InstId, (usize, usize)>,
    bb: usize,
    bi: usize,
    ty: ScalarType,
    exclude: InstId,
) -> Vec<ValueRef> {
    let mut out = Vec::new();
    for (i, p) in f.params.iter().enumerate() {
        if *p == ty {
            out.push(ValueRef::Param(i as u32));
        }
    }
    let mut defs: Vec<InstId> = Vec::new();
    for (&id, _) in positions.iter() {
        if id == exclude {
            continue;
        }
        let v = ValueRef::Inst(id);
        if def_dominates_use(dom, positions, v, bb, bi) && f.value_type(v) == Some(ty) {
            defs.push(id);
        }
    }
    defs.sort();
    out.extend(defs.into_iter().map(ValueRef::Inst));
    out
}
