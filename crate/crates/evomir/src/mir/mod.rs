//! A minimal SSA-style IR for parallel kernels.
//!
//! Design points that everything downstream leans on:
//!
//! * Two scalar types only, `i32` and `bool`. Values are immutable SSA names;
//!   there are no phi nodes, so any dataflow that crosses a branch goes
//!   through memory (`global`/`shared` buffers or per-lane `local` slots).
//! * Every instruction has a stable [`InstId`] that survives mutation of the
//!   surrounding program. Ids are never reused within a run.
//! * Control flow is a reducible CFG with a single designated exit block
//!   ending in `ret`.
//! * The textual format is line-oriented (`;` comments), but the parser is
//!   token-based so compact one-line programs are accepted too.

pub mod parse;
pub mod print;
pub mod verify;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub use parse::{parse, parse_named, ParseError};
pub use print::print;
pub use verify::{def_dominates_use, dominators, verify, Dominance, Violation, ViolationKind};

/// Stable identity of an instruction.
///
/// Instructions present in a parsed program are numbered in textual order.
/// Instructions created later (by edits) get ids derived from the edit uid,
/// in a disjoint range, so materializing an edit list is a pure function.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct InstId(pub u64);

impl std::fmt::Display for InstId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum ScalarType {
    I32,
    Bool,
}

impl std::fmt::Display for ScalarType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarType::I32 => write!(f, "i32"),
            ScalarType::Bool => write!(f, "bool"),
        }
    }
}

/// A value is either a function parameter or the result of an instruction.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum ValueRef {
    Param(u32),
    Inst(InstId),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum MemSpace {
    Global,
    Shared,
}

impl std::fmt::Display for MemSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MemSpace::Global => write!(f, "global"),
            MemSpace::Shared => write!(f, "shared"),
        }
    }
}

/// One instruction operand. Which kinds are legal in which position is fixed
/// by the opcode signature (see [`Opcode::operand_kinds`]).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum Operand {
    /// An SSA value reference.
    Value(ValueRef),
    /// An i32 immediate. Also used for `ld.local`/`st.local` slot indices.
    Imm(i32),
    /// A buffer, by index into the function's buffer declarations.
    Buffer(u32),
    /// A branch target, by block index.
    Label(u32),
}

/// The closed opcode set.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Opcode {
    // arithmetic / logic
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
    And,
    Or,
    Xor,
    Shl,
    // comparisons (i32 x i32 -> bool)
    IcmpEq,
    IcmpNe,
    IcmpSlt,
    IcmpSle,
    IcmpSgt,
    IcmpSge,
    Select,
    // control
    Br,
    CondBr,
    Ret,
    // memory
    LdGlobal,
    StGlobal,
    LdShared,
    StShared,
    LdLocal,
    StLocal,
    // thread context: tid.lane = lane index within the warp, tid.warp =
    // warp index within the block, tid.block = block index within the grid.
    // dim.block = threads per block, dim.grid = blocks per grid. A linear
    // in-block thread id is therefore tid.warp * warp_size + tid.lane.
    TidLane,
    TidWarp,
    TidBlock,
    DimBlock,
    DimGrid,
    // parallel primitives
    Shfl,
    BarBlock,
    BarWarp,
    Rand,
}

/// What an operand position accepts.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OperandKind {
    /// i32 value reference or immediate.
    I32,
    /// bool value reference.
    Bool,
    /// Value of either scalar type; all `Poly` positions of one instruction
    /// must agree (immediates count as i32).
    Poly,
    /// Buffer reference of the given space.
    Buf(MemSpace),
    /// Immediate local-slot index.
    SlotImm,
    /// Block label.
    Label,
}

/// What an opcode produces.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ResultKind {
    None,
    I32,
    Bool,
    /// Same type as the instruction's `Poly` operands.
    Poly,
}

impl Opcode {
    pub const ALL: [Opcode; 35] = [
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::Div,
        Opcode::Min,
        Opcode::Max,
        Opcode::And,
        Opcode::Or,
        Opcode::Xor,
        Opcode::Shl,
        Opcode::IcmpEq,
        Opcode::IcmpNe,
        Opcode::IcmpSlt,
        Opcode::IcmpSle,
        Opcode::IcmpSgt,
        Opcode::IcmpSge,
        Opcode::Select,
        Opcode::Br,
        Opcode::CondBr,
        Opcode::Ret,
        Opcode::LdGlobal,
        Opcode::StGlobal,
        Opcode::LdShared,
        Opcode::StShared,
        Opcode::LdLocal,
        Opcode::StLocal,
        Opcode::TidLane,
        Opcode::TidWarp,
        Opcode::TidBlock,
        Opcode::DimBlock,
        Opcode::DimGrid,
        Opcode::Shfl,
        Opcode::BarBlock,
        Opcode::BarWarp,
        Opcode::Rand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::Div => "div",
            Opcode::Min => "min",
            Opcode::Max => "max",
            Opcode::And => "and",
            Opcode::Or => "or",
            Opcode::Xor => "xor",
            Opcode::Shl => "shl",
            Opcode::IcmpEq => "icmp.eq",
            Opcode::IcmpNe => "icmp.ne",
            Opcode::IcmpSlt => "icmp.slt",
            Opcode::IcmpSle => "icmp.sle",
            Opcode::IcmpSgt => "icmp.sgt",
            Opcode::IcmpSge => "icmp.sge",
            Opcode::Select => "select",
            Opcode::Br => "br",
            Opcode::CondBr => "condbr",
            Opcode::Ret => "ret",
            Opcode::LdGlobal => "ld.global",
            Opcode::StGlobal => "st.global",
            Opcode::LdShared => "ld.shared",
            Opcode::StShared => "st.shared",
            Opcode::LdLocal => "ld.local",
            Opcode::StLocal => "st.local",
            Opcode::TidLane => "tid.lane",
            Opcode::TidWarp => "tid.warp",
            Opcode::TidBlock => "tid.block",
            Opcode::DimBlock => "dim.block",
            Opcode::DimGrid => "dim.grid",
            Opcode::Shfl => "shfl",
            Opcode::BarBlock => "bar.block",
            Opcode::BarWarp => "bar.warp",
            Opcode::Rand => "rand",
        }
    }

    pub fn from_name(name: &str) -> Option<Opcode> {
        Opcode::ALL.iter().copied().find(|op| op.name() == name)
    }

    pub fn is_terminator(self) -> bool {
        matches!(self, Opcode::Br | Opcode::CondBr | Opcode::Ret)
    }

    pub fn operand_kinds(self) -> &'static [OperandKind] {
        use MemSpace::{Global, Shared};
        use OperandKind as K;
        match self {
            Opcode::Add
            | Opcode::Sub
            | Opcode::Mul
            | Opcode::Div
            | Opcode::Min
            | Opcode::Max
            | Opcode::Shl => &[K::I32, K::I32],
            Opcode::And | Opcode::Or | Opcode::Xor => &[K::Poly, K::Poly],
            Opcode::IcmpEq
            | Opcode::IcmpNe
            | Opcode::IcmpSlt
            | Opcode::IcmpSle
            | Opcode::IcmpSgt
            | Opcode::IcmpSge => &[K::I32, K::I32],
            Opcode::Select => &[K::Bool, K::Poly, K::Poly],
            Opcode::Br => &[K::Label],
            Opcode::CondBr => &[K::Bool, K::Label, K::Label],
            Opcode::Ret => &[],
            Opcode::LdGlobal => &[K::Buf(Global), K::I32],
            Opcode::StGlobal => &[K::Buf(Global), K::I32, K::I32],
            Opcode::LdShared => &[K::Buf(Shared), K::I32],
            Opcode::StShared => &[K::Buf(Shared), K::I32, K::I32],
            Opcode::LdLocal => &[K::SlotImm],
            Opcode::StLocal => &[K::SlotImm, K::I32],
            Opcode::TidLane
            | Opcode::TidWarp
            | Opcode::TidBlock
            | Opcode::DimBlock
            | Opcode::DimGrid => &[],
            Opcode::Shfl => &[K::I32, K::I32],
            Opcode::BarBlock | Opcode::BarWarp => &[],
            Opcode::Rand => &[],
        }
    }

    pub fn result_kind(self) -> ResultKind {
        match self {
            Opcode::Add
            | Opcode::Sub
            | Opcode::Mul
            | Opcode::Div
            | Opcode::Min
            | Opcode::Max
            | Opcode::Shl
            | Opcode::LdGlobal
            | Opcode::LdShared
            | Opcode::LdLocal
            | Opcode::TidLane
            | Opcode::TidWarp
            | Opcode::TidBlock
            | Opcode::DimBlock
            | Opcode::DimGrid
            | Opcode::Shfl
            | Opcode::Rand => ResultKind::I32,
            Opcode::IcmpEq
            | Opcode::IcmpNe
            | Opcode::IcmpSlt
            | Opcode::IcmpSle
            | Opcode::IcmpSgt
            | Opcode::IcmpSge => ResultKind::Bool,
            Opcode::And | Opcode::Or | Opcode::Xor | Opcode::Select => ResultKind::Poly,
            Opcode::Br
            | Opcode::CondBr
            | Opcode::Ret
            | Opcode::StGlobal
            | Opcode::StShared
            | Opcode::StLocal
            | Opcode::BarBlock
            | Opcode::BarWarp => ResultKind::None,
        }
    }

    pub fn has_result(self) -> bool {
        self.result_kind() != ResultKind::None
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Instruction {
    pub id: InstId,
    pub opcode: Opcode,
    pub operands: Vec<Operand>,
    /// Opaque provenance string, attached at parse time ("file:line") and
    /// carried along by copies. Not part of structural equality.
    pub source_loc: Option<String>,
}

impl Instruction {
    pub fn result(&self) -> Option<ValueRef> {
        if self.opcode.has_result() {
            Some(ValueRef::Inst(self.id))
        } else {
            None
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Block {
    pub label: String,
    pub instrs: Vec<Instruction>,
}

impl Block {
    pub fn terminator(&self) -> Option<&Instruction> {
        self.instrs.last().filter(|i| i.opcode.is_terminator())
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct BufferDecl {
    pub name: String,
    pub space: MemSpace,
    pub len: u32,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub params: Vec<ScalarType>,
    pub buffers: Vec<BufferDecl>,
    /// Number of per-lane local scratch slots (`local [i32 x N]`).
    pub local_slots: u32,
    pub blocks: Vec<Block>,
}

impl Function {
    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn buffer_index(&self, name: &str) -> Option<usize> {
        self.buffers.iter().position(|b| b.name == name)
    }

    /// Index of the single exit block (the one ending in `ret`), if exactly
    /// one exists.
    pub fn exit_block(&self) -> Option<usize> {
        let mut found = None;
        for (i, b) in self.blocks.iter().enumerate() {
            if matches!(b.terminator(), Some(t) if t.opcode == Opcode::Ret) {
                if found.is_some() {
                    return None;
                }
                found = Some(i);
            }
        }
        found
    }

    /// CFG successors of block `i`, from its terminator's label operands.
    pub fn successors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        if let Some(term) = self.blocks[i].terminator() {
            for op in &term.operands {
                if let Operand::Label(l) = op {
                    out.push(*l as usize);
                }
            }
        }
        out
    }

    pub fn iter_instrs(&self) -> impl Iterator<Item = (usize, usize, &Instruction)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(bi, b)| b.instrs.iter().enumerate().map(move |(ii, ins)| (bi, ii, ins)))
    }

    /// Locate an instruction by id: (block index, index within block).
    pub fn find(&self, id: InstId) -> Option<(usize, usize)> {
        self.iter_instrs()
            .find(|(_, _, ins)| ins.id == id)
            .map(|(b, i, _)| (b, i))
    }

    /// Best-effort type of a value. Assumes a well-formed function; poly
    /// results are resolved through their first value operand.
    pub fn value_type(&self, v: ValueRef) -> Option<ScalarType> {
        self.value_type_depth(v, 0)
    }

    fn value_type_depth(&self, v: ValueRef, depth: u32) -> Option<ScalarType> {
        if depth > 64 {
            return None;
        }
        match v {
            ValueRef::Param(i) => self.params.get(i as usize).copied(),
            ValueRef::Inst(id) => {
                let (bi, ii) = self.find(id)?;
                let ins = &self.blocks[bi].instrs[ii];
                match ins.opcode.result_kind() {
                    ResultKind::None => None,
                    ResultKind::I32 => Some(ScalarType::I32),
                    ResultKind::Bool => Some(ScalarType::Bool),
                    ResultKind::Poly => {
                        let kinds = ins.opcode.operand_kinds();
                        for (op, k) in ins.operands.iter().zip(kinds) {
                            if *k == OperandKind::Poly {
                                match op {
                                    Operand::Imm(_) => return Some(ScalarType::I32),
                                    Operand::Value(inner) => {
                                        return self.value_type_depth(*inner, depth + 1)
                                    }
                                    _ => return None,
                                }
                            }
                        }
                        None
                    }
                }
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Program {
    pub functions: Vec<Function>,
    /// Free-form key/value annotations, printed as `; !key = value` lines.
    pub metadata: BTreeMap<String, String>,
}

impl Program {
    /// The kernel entry point. The first function is the entry.
    pub fn entry(&self) -> &Function {
        &self.functions[0]
    }

    pub fn entry_mut(&mut self) -> &mut Function {
        &mut self.functions[0]
    }

    /// All instruction ids in the program, in textual order.
    pub fn all_ids(&self) -> Vec<InstId> {
        self.functions
            .iter()
            .flat_map(|f| f.iter_instrs().map(|(_, _, ins)| ins.id))
            .collect()
    }

    pub fn max_id(&self) -> u64 {
        self.all_ids().iter().map(|id| id.0).max().unwrap_or(0)
    }
}

/// Structural equality: identical shape, labels, opcodes, immediates and
/// dataflow, ignoring instruction ids, value numbering and source locations.
///
/// The canonical printer renames values positionally and omits ids, so two
/// programs are structurally equal exactly when they print byte-identically.
pub fn structural_eq(a: &Program, b: &Program) -> bool {
    print(a) == print(b)
}
