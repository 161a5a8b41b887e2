//! Evolutionary search over edit lists.
//!
//! An individual is an ordered list of [`Edit`]s against a fixed seed
//! program. Materializing an individual folds its edits over the seed, left
//! to right; fitness is the mean cycle count over a test suite, defined only
//! when every test passes. Everything is keyed off a single run seed so a
//! search is reproducible edit-for-edit regardless of thread count.

mod apply;
mod engine;

pub use apply::{apply, materialize, ApplyError, EDIT_ID_BASE};
pub use engine::{
    encode_uid, search, search_resumed, EvalContext, Fitness, GenerationLog, Individual,
    SearchConfig, SearchOutcome, SearchState, SlotLog,
};

use crate::mir::{InstId, ValueRef};
use serde::{Deserialize, Serialize};

/// Stable identity of an edit. Uids survive crossover and selection, so the
/// same uid appearing in many individuals always denotes the same edit.
pub type EditUid = u64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub uid: EditUid,
    pub kind: EditKind,
}

/// One mutation against the entry function of the seed program.
///
/// Instruction ids are stable under editing: parsing assigns small ids and
/// edit-created instructions get `EDIT_ID_BASE + uid`, so later edits can
/// reference instructions introduced by earlier ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditKind {
    /// Copy `donor` and insert the copy before `before`.
    Copy { donor: InstId, before: InstId },
    /// Remove `target`. Fails if any remaining instruction uses its result.
    Delete { target: InstId },
    /// Remove `target` and reinsert it before `before`.
    Move { target: InstId, before: InstId },
    /// Rewrite `target` in place with `donor`'s opcode and operands, keeping
    /// `target`'s id (uses of the old result now see the new computation).
    Replace { target: InstId, donor: InstId },
    /// Exchange the instructions at `a`'s and `b`'s positions.
    Swap { a: InstId, b: InstId },
    /// Replace the value operand at `index` of `target` with `replacement`.
    OperandReplace { target: InstId, index: u32, replacement: ValueRef },
}

impl EditKind {
    pub fn name(&self) -> &'static str {
        match self {
            EditKind::Copy { .. } => "copy",
            EditKind::Delete { .. } => "delete",
            EditKind::Move { .. } => "move",
            EditKind::Replace { .. } => "replace",
            EditKind::Swap { .. } => "swap",
            EditKind::OperandReplace { .. } => "operand-replace",
        }
    }

    /// Instruction ids this edit touches, for source mapping.
    pub fn touched(&self) -> Vec<InstId> {
        match *self {
            EditKind::Copy { donor, before } => vec![donor, before],
            EditKind::Delete { target } => vec![target],
            EditKind::Move { target, before } => vec![target, before],
            EditKind::Replace { target, donor } => vec![target, donor],
            EditKind::Swap { a, b } => vec![a, b],
            EditKind::OperandReplace { target, .. } => vec![target],
        }
    }
}
