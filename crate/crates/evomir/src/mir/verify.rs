//! Static verifier.
//!
//! `verify` returns the full list of violations rather than failing fast, so
//! callers (and the CLI) can report everything wrong with a program at once.
//! A program with an empty violation list is safe to launch on the VM and to
//! mutate.

use super::{
    Function, InstId, Opcode, Operand, OperandKind, Program, ResultKind, ScalarType,
    ValueRef,
};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum ViolationKind {
    DuplicateId,
    MissingTerminator,
    MultiExit,
    UnreachableBlock,
    NoExitPath,
    IrreducibleCfg,
    ArityMismatch,
    BadOperand,
    TypeMismatch,
    SsaDominance,
    InvalidDecl,
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub function: String,
    pub block: Option<String>,
    pub inst: Option<InstId>,
    pub msg: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} in @{}", self.kind, self.function)?;
        if let Some(b) = &self.block {
            write!(f, " block '{b}'")?;
        }
        if let Some(i) = &self.inst {
            write!(f, " inst {i}")?;
        }
        write!(f, ": {}", self.msg)
    }
}

/// Block-level dominator sets, stored as bitsets.
pub struct Dominance {
    doms: Vec<Vec<u64>>,
    reachable: Vec<bool>,
}

impl Dominance {
    /// Does block `a` dominate block `b`? Every block dominates itself.
    /// Queries involving unreachable blocks are answered conservatively
    /// (false unless `a == b`).
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        if a == b {
            return true;
        }
        if !self.reachable[a] || !self.reachable[b] {
            return false;
        }
        self.doms[b][a / 64] >> (a % 64) & 1 == 1
    }

    pub fn is_reachable(&self, b: usize) -> bool {
        self.reachable[b]
    }
}

/// Iterative dominator computation over the block CFG.
pub fn dominators(f: &Function) -> Dominance {
    let n = f.blocks.len();
    let words = n.div_ceil(64);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for b in 0..n {
        for s in f.successors(b) {
            if s < n {
                preds[s].push(b);
            }
        }
    }

    let mut reachable = vec![false; n];
    let mut stack = vec![0usize];
    let mut rpo = Vec::new();
    // DFS for reachability, then an RPO-ish order for fast convergence.
    let mut visited = vec![false; n];
    while let Some(b) = stack.pop() {
        if visited[b] {
            continue;
        }
        visited[b] = true;
        reachable[b] = true;
        rpo.push(b);
        for s in f.successors(b) {
            if s < n && !visited[s] {
                stack.push(s);
            }
        }
    }

    let full: Vec<u64> = (0..words)
        .map(|w| {
            let hi = ((w + 1) * 64).min(n);
            let lo = w * 64;
            let mut m = 0u64;
            for b in lo..hi {
                m |= 1u64 << (b - lo);
            }
            m
        })
        .collect();

    let mut doms: Vec<Vec<u64>> = vec![full.clone(); n];
    if n > 0 {
        doms[0] = vec![0; words];
        doms[0][0] = 1;
    }
    let mut changed = true;
    while changed {
        changed = false;
        for &b in &rpo {
            if b == 0 {
                continue;
            }
            let mut acc = full.clone();
            let mut any_pred = false;
            for &p in &preds[b] {
                if !reachable[p] {
                    continue;
                }
                any_pred = true;
                for w in 0..words {
                    acc[w] &= doms[p][w];
                }
            }
            if !any_pred {
                continue;
            }
            acc[b / 64] |= 1u64 << (b % 64);
            if acc != doms[b] {
                doms[b] = acc;
                changed = true;
            }
        }
    }

    Dominance { doms, reachable }
}

/// Does the definition point of `v` dominate the use at (`ub`, `ui`)?
/// `positions` maps instruction ids to their (block, index) spots.
pub fn def_dominates_use(
    dom: &Dominance,
    positions: &BTreeMap<InstId, (usize, usize)>,
    v: ValueRef,
    ub: usize,
    ui: usize,
) -> bool {
    match v {
        ValueRef::Param(_) => true,
        ValueRef::Inst(id) => match positions.get(&id) {
            None => false,
            Some(&(db, di)) => {
                if db == ub {
                    di < ui
                } else {
                    dom.dominates(db, ub)
                }
            }
        },
    }
}

struct FuncCx<'a> {
    f: &'a Function,
    positions: BTreeMap<InstId, (usize, usize)>,
    types: BTreeMap<InstId, Option<ScalarType>>,
}

impl<'a> FuncCx<'a> {
    fn new(f: &'a Function) -> Self {
        let mut positions = BTreeMap::new();
        for (bi, ii, ins) in f.iter_instrs() {
            positions.insert(ins.id, (bi, ii));
        }
        let mut cx = FuncCx { f, positions, types: BTreeMap::new() };
        // Two passes resolve poly chains regardless of textual order.
        for _ in 0..2 {
            for (_, _, ins) in f.iter_instrs() {
                let t = cx.compute_type(ins.id);
                cx.types.insert(ins.id, t);
            }
        }
        cx
    }

    fn compute_type(&self, id: InstId) -> Option<ScalarType> {
        let (bi, ii) = *self.positions.get(&id)?;
        let ins = &self.f.blocks[bi].instrs[ii];
        match ins.opcode.result_kind() {
            ResultKind::None => None,
            ResultKind::I32 => Some(ScalarType::I32),
            ResultKind::Bool => Some(ScalarType::Bool),
            ResultKind::Poly => {
                let kinds = ins.opcode.operand_kinds();
                for (op, k) in ins.operands.iter().zip(kinds) {
                    if *k == OperandKind::Poly {
                        return match op {
                            Operand::Imm(_) => Some(ScalarType::I32),
                            Operand::Value(v) => self.value_type(*v),
                            _ => None,
                        };
                    }
                }
                None
            }
        }
    }

    fn value_type(&self, v: ValueRef) -> Option<ScalarType> {
        match v {
            ValueRef::Param(i) => self.f.params.get(i as usize).copied(),
            ValueRef::Inst(id) => self.types.get(&id).copied().flatten(),
        }
    }
}

/// Largest buffer the VM will allocate, in elements.
pub const MAX_BUFFER_LEN: u32 = 1 << 22;

pub fn verify(program: &Program) -> Vec<Violation> {
    let mut out = Vec::new();

    // Program-wide id uniqueness.
    let mut seen: BTreeMap<InstId, usize> = BTreeMap::new();
    for (fi, f) in program.functions.iter().enumerate() {
        for (_, _, ins) in f.iter_instrs() {
            if let Some(prev) = seen.insert(ins.id, fi) {
                out.push(Violation {
                    kind: ViolationKind::DuplicateId,
                    function: f.name.clone(),
                    block: None,
                    inst: Some(ins.id),
                    msg: format!("id {} already used in function index {prev}", ins.id),
                });
            }
        }
    }

    for f in &program.functions {
        verify_function(f, &mut out);
    }
    out
}

/// Convenience wrapper: true when `verify` reports nothing.
pub fn verify_ok(program: &Program) -> bool {
    verify(program).is_empty()
}

fn verify_function(f: &Function, out: &mut Vec<Violation>) {
    let v = |kind, block: Option<usize>, inst, msg: String| Violation {
        kind,
        function: f.name.clone(),
        block: block.map(|b: usize| f.blocks[b].label.clone()),
        inst,
        msg,
    };

    for b in &f.buffers {
        if b.len == 0 || b.len > MAX_BUFFER_LEN {
            out.push(v(
                ViolationKind::InvalidDecl,
                None,
                None,
                format!("buffer @{} has invalid length {}", b.name, b.len),
            ));
        }
    }
    if f.local_slots > MAX_BUFFER_LEN {
        out.push(v(
            ViolationKind::InvalidDecl,
            None,
            None,
            format!("local declaration of {} slots is too large", f.local_slots),
        ));
    }

    // Terminator discipline.
    for (bi, block) in f.blocks.iter().enumerate() {
        match block.instrs.last() {
            None => out.push(v(
                ViolationKind::MissingTerminator,
                Some(bi),
                None,
                "block is empty".into(),
            )),
            Some(last) if !last.opcode.is_terminator() => out.push(v(
                ViolationKind::MissingTerminator,
                Some(bi),
                Some(last.id),
                format!("block ends with '{}', not a terminator", last.opcode.name()),
            )),
            _ => {}
        }
        for ins in block.instrs.iter().rev().skip(1) {
            if ins.opcode.is_terminator() {
                out.push(v(
                    ViolationKind::MissingTerminator,
                    Some(bi),
                    Some(ins.id),
                    format!("terminator '{}' in the middle of a block", ins.opcode.name()),
                ));
            }
        }
    }

    // Single exit.
    let ret_blocks: Vec<usize> = f
        .blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| matches!(b.terminator(), Some(t) if t.opcode == Opcode::Ret))
        .map(|(i, _)| i)
        .collect();
    if ret_blocks.len() != 1 {
        out.push(v(
            ViolationKind::MultiExit,
            None,
            None,
            format!("function has {} exit blocks, expected exactly 1", ret_blocks.len()),
        ));
    }

    let dom = dominators(f);
    for (bi, _) in f.blocks.iter().enumerate() {
        if !dom.is_reachable(bi) {
            out.push(v(
                ViolationKind::UnreachableBlock,
                Some(bi),
                None,
                "block is unreachable from entry".into(),
            ));
        }
    }

    // Every reachable block must be able to reach the exit, so that
    // post-dominators (and warp reconvergence points) exist.
    if let [exit] = ret_blocks[..] {
        let n = f.blocks.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for b in 0..n {
            for s in f.successors(b) {
                if s < n {
                    preds[s].push(b);
                }
            }
        }
        let mut reaches_exit = vec![false; n];
        let mut stack = vec![exit];
        while let Some(b) = stack.pop() {
            if reaches_exit[b] {
                continue;
            }
            reaches_exit[b] = true;
            for &p in &preds[b] {
                stack.push(p);
            }
        }
        for bi in 0..n {
            if dom.is_reachable(bi) && !reaches_exit[bi] {
                out.push(v(
                    ViolationKind::NoExitPath,
                    Some(bi),
                    None,
                    "no path from block to the exit block".into(),
                ));
            }
        }
    }

    // Reducibility: removing back edges (u -> v with v dom u) must leave the
    // reachable CFG acyclic.
    {
        let n = f.blocks.len();
        let mut fwd: Vec<Vec<usize>> = vec![Vec::new(); n];
        for u in 0..n {
            if !dom.is_reachable(u) {
                continue;
            }
            for s in f.successors(u) {
                if s < n && dom.is_reachable(s) && !dom.dominates(s, u) {
                    fwd[u].push(s);
                }
            }
        }
        // DFS cycle detection.
        let mut color = vec![0u8; n]; // 0 white, 1 grey, 2 black
        let mut cyclic = false;
        fn dfs(u: usize, fwd: &Vec<Vec<usize>>, color: &mut Vec<u8>, cyclic: &mut bool) {
            color[u] = 1;
            for &s in &fwd[u] {
                if color[s] == 1 {
                    *cyclic = true;
                } else if color[s] == 0 {
                    dfs(s, fwd, color, cyclic);
                }
            }
            color[u] = 2;
        }
        for u in 0..n {
            if dom.is_reachable(u) && color[u] == 0 {
                dfs(u, &fwd, &mut color, &mut cyclic);
            }
        }
        if cyclic {
            out.push(v(
                ViolationKind::IrreducibleCfg,
                None,
                None,
                "cycle not headed by a dominator (irreducible control flow)".into(),
            ));
        }
    }

    // Per-instruction shape, types and dominance.
    let cx = FuncCx::new(f);
    for (bi, ii, ins) in f.iter_instrs() {
        let kinds = ins.opcode.operand_kinds();
        if ins.operands.len() != kinds.len() {
            out.push(v(
                ViolationKind::ArityMismatch,
                Some(bi),
                Some(ins.id),
                format!(
                    "'{}' takes {} operands, found {}",
                    ins.opcode.name(),
                    kinds.len(),
                    ins.operands.len()
                ),
            ));
            continue;
        }

        let mut poly_ty: Option<ScalarType> = None;
        for (oi, (op, kind)) in ins.operands.iter().zip(kinds).enumerate() {
            match kind {
                OperandKind::I32 => match op {
                    Operand::Imm(_) => {}
                    Operand::Value(val) => match cx.value_type(*val) {
                        Some(ScalarType::I32) => {}
                        Some(t) => out.push(v(
                            ViolationKind::TypeMismatch,
                            Some(bi),
                            Some(ins.id),
                            format!("operand {oi} must be i32, found {t}"),
                        )),
                        None => {}
                    },
                    _ => out.push(v(
                        ViolationKind::BadOperand,
                        Some(bi),
                        Some(ins.id),
                        format!("operand {oi} must be an i32 value or immediate"),
                    )),
                },
                OperandKind::Bool => match op {
                    Operand::Value(val) => match cx.value_type(*val) {
                        Some(ScalarType::Bool) => {}
                        Some(t) => out.push(v(
                            ViolationKind::TypeMismatch,
                            Some(bi),
                            Some(ins.id),
                            format!("operand {oi} must be bool, found {t}"),
                        )),
                        None => {}
                    },
                    _ => out.push(v(
                        ViolationKind::TypeMismatch,
                        Some(bi),
                        Some(ins.id),
                        format!("operand {oi} must be a bool value"),
                    )),
                },
                OperandKind::Poly => {
                    let t = match op {
                        Operand::Imm(_) => Some(ScalarType::I32),
                        Operand::Value(val) => cx.value_type(*val),
                        _ => {
                            out.push(v(
                                ViolationKind::BadOperand,
                                Some(bi),
                                Some(ins.id),
                                format!("operand {oi} must be a value or immediate"),
                            ));
                            None
                        }
                    };
                    if let Some(t) = t {
                        match poly_ty {
                            None => poly_ty = Some(t),
                            Some(prev) if prev != t => out.push(v(
                                ViolationKind::TypeMismatch,
                                Some(bi),
                                Some(ins.id),
                                format!("operand {oi} has type {t}, expected {prev}"),
                            )),
                            _ => {}
                        }
                    }
                }
                OperandKind::Buf(space) => match op {
                    Operand::Buffer(idx) => match f.buffers.get(*idx as usize) {
                        Some(decl) if decl.space == *space => {}
                        Some(decl) => out.push(v(
                            ViolationKind::BadOperand,
                            Some(bi),
                            Some(ins.id),
                            format!(
                                "'{}' expects a {space} buffer, @{} is {}",
                                ins.opcode.name(),
                                decl.name,
                                decl.space
                            ),
                        )),
                        None => out.push(v(
                            ViolationKind::BadOperand,
                            Some(bi),
                            Some(ins.id),
                            format!("buffer index {idx} out of range"),
                        )),
                    },
                    _ => out.push(v(
                        ViolationKind::BadOperand,
                        Some(bi),
                        Some(ins.id),
                        format!("operand {oi} must be a buffer"),
                    )),
                },
                OperandKind::SlotImm => match op {
                    Operand::Imm(s) if *s >= 0 && (*s as u32) < f.local_slots => {}
                    Operand::Imm(s) => out.push(v(
                        ViolationKind::BadOperand,
                        Some(bi),
                        Some(ins.id),
                        format!("local slot {s} out of range (function declares {})", f.local_slots),
                    )),
                    _ => out.push(v(
                        ViolationKind::BadOperand,
                        Some(bi),
                        Some(ins.id),
                        format!("operand {oi} must be an immediate local slot index"),
                    )),
                },
                OperandKind::Label => match op {
                    Operand::Label(idx) if (*idx as usize) < f.blocks.len() => {}
                    _ => out.push(v(
                        ViolationKind::BadOperand,
                        Some(bi),
                        Some(ins.id),
                        format!("operand {oi} must be a valid block label"),
                    )),
                },
            }

            // Label operands may only appear where the signature wants them;
            // a Value operand in a Label slot is caught above. The reverse
            // (Label where a value is expected) is also caught above.

            // A value operand must name an instruction that actually produces
            // a value; stores, branches and barriers have no result register.
            if let Operand::Value(ValueRef::Inst(id)) = op {
                if let Some(&(db, di)) = cx.positions.get(id) {
                    if f.blocks[db].instrs[di].opcode.result_kind() == ResultKind::None {
                        out.push(v(
                            ViolationKind::BadOperand,
                            Some(bi),
                            Some(ins.id),
                            format!(
                                "operand {oi} refers to {id} ('{}'), which produces no value",
                                f.blocks[db].instrs[di].opcode.name()
                            ),
                        ));
                        continue;
                    }
                }
            }

            // SSA dominance for all value operands.
            if let Operand::Value(val) = op {
                if !def_dominates_use(&dom, &cx.positions, *val, bi, ii) {
                    let detail = match val {
                        ValueRef::Inst(id) if !cx.positions.contains_key(id) => {
                            format!("operand {oi} refers to {id}, which is not defined in this function")
                        }
                        _ => format!("definition of operand {oi} does not dominate this use"),
                    };
                    out.push(v(ViolationKind::SsaDominance, Some(bi), Some(ins.id), detail));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn kinds(text: &str) -> Vec<ViolationKind> {
        verify(&parse(text).unwrap()).into_iter().map(|v| v.kind).collect()
    }

    #[test]
    fn clean_program_verifies() {
        let text = "fn @k(%n: i32) {
  global @g[i32 x 8]
entry:
  %i = tid.lane
  %c = icmp.slt %i, %n
  condbr %c, body, done
body:
  st.global @g, %i, %i
  br done
done:
  ret
}";
        assert!(kinds(text).is_empty());
    }

    #[test]
    fn loop_is_reducible_and_clean() {
        let text = "fn @k() {
  local [i32 x 1]
entry:
  st.local 0, 0
  br head
head:
  %i = ld.local 0
  %c = icmp.slt %i, 10
  condbr %c, body, done
body:
  %i2 = add %i, 1
  st.local 0, %i2
  br head
done:
  ret
}";
        assert!(kinds(text).is_empty());
    }

    #[test]
    fn missing_terminator_flagged() {
        let text = "fn @k() { entry: %x = rand\n ret\nother: %y = rand }";
        // 'other' has no terminator (and is also unreachable).
        let ks = kinds(text);
        assert!(ks.contains(&ViolationKind::MissingTerminator), "{ks:?}");
        assert!(ks.contains(&ViolationKind::UnreachableBlock), "{ks:?}");
    }

    #[test]
    fn multi_exit_flagged() {
        let text = "fn @k() {
entry:
  %c = icmp.eq 1, 1
  condbr %c, a, b
a:
  ret
b:
  ret
}";
        assert!(kinds(text).contains(&ViolationKind::MultiExit));
    }

    #[test]
    fn no_exit_path_flagged_for_infinite_loop() {
        let text = "fn @k() {
entry:
  %c = icmp.eq 1, 1
  condbr %c, spin, done
spin:
  br spin
done:
  ret
}";
        assert!(kinds(text).contains(&ViolationKind::NoExitPath));
    }

    #[test]
    fn irreducible_cfg_flagged() {
        let text = "fn @k() {
entry:
  %c = icmp.eq 1, 1
  condbr %c, a, b
a:
  %d = icmp.eq 1, 2
  condbr %d, b, done
b:
  %e = icmp.eq 1, 3
  condbr %e, a, done
done:
  ret
}";
        // a and b form a cycle entered from two sides; neither dominates the
        // other, so the a<->b cycle survives back-edge removal.
        assert!(kinds(text).contains(&ViolationKind::IrreducibleCfg));
    }

    #[test]
    fn type_and_kind_errors_flagged() {
        // bool where i32 expected
        let t1 = "fn @k() { entry: %c = icmp.eq 1, 1\n %x = add %c, 2\n ret }";
        assert!(kinds(t1).contains(&ViolationKind::TypeMismatch));
        // i32 where bool expected
        let t2 = "fn @k() { entry: %x = rand\n condbr %x, a, a\na: ret }";
        assert!(kinds(t2).contains(&ViolationKind::TypeMismatch));
        // shared op on a global buffer
        let t3 = "fn @k() { global @g[i32 x 4]\n entry: %x = ld.shared @g, 0\n ret }";
        assert!(kinds(t3).contains(&ViolationKind::BadOperand));
        // local slot out of range
        let t4 = "fn @k() { local [i32 x 2]\n entry: %x = ld.local 5\n ret }";
        assert!(kinds(t4).contains(&ViolationKind::BadOperand));
    }

    #[test]
    fn reference_to_resultless_instruction_flagged() {
        // Build "%y = add %x, 1" where %x's id actually names the st.global,
        // which produces no value. Unreachable through the parser (it resolves
        // names), so splice the operand in directly.
        let text = "fn @k() {
  global @g[i32 x 4]
entry:
  %x = tid.lane
  st.global @g, 0, %x
  %y = add %x, 1
  ret
}";
        let mut p = parse(text).unwrap();
        let store_id = p.entry().blocks[0].instrs[1].id;
        assert_eq!(p.entry().blocks[0].instrs[1].opcode, Opcode::StGlobal);
        let add = &mut p.functions[0].blocks[0].instrs[2];
        add.operands[0] = Operand::Value(ValueRef::Inst(store_id));
        assert!(verify(&p).iter().any(|v| v.kind == ViolationKind::BadOperand), "{:?}", verify(&p));
    }

    #[test]
    fn select_arms_must_agree() {
        let text = "fn @k() {
entry:
  %c = icmp.eq 1, 1
  %d = icmp.eq 2, 2
  %x = select %c, %d, 3
  ret
}";
        assert!(kinds(text).contains(&ViolationKind::TypeMismatch));
    }

    #[test]
    fn dominance_violation_flagged() {
        let text = "fn @k() {
entry:
  %c = icmp.eq 1, 1
  condbr %c, a, b
a:
  %x = add 1, 2
  br join
b:
  br join
join:
  %y = add %x, 1
  ret
}";
        assert!(kinds(text).contains(&ViolationKind::SsaDominance));
    }

    #[test]
    fn use_before_def_in_same_block_flagged() {
        let text = "fn @k() {
a:
  br b
b:
  %u = add %v, 1
  br c
c:
  %v = tid.lane
  ret
}";
        assert!(kinds(text).contains(&ViolationKind::SsaDominance));
    }

    #[test]
    fn diamond_dominators() {
        let text = "fn @k() {
entry:
  %c = icmp.eq 1, 1
  condbr %c, a, b
a:
  br join
b:
  br join
join:
  ret
}";
        let p = parse(text).unwrap();
        let d = dominators(p.entry());
        assert!(d.dominates(0, 3));
        assert!(!d.dominates(1, 3));
        assert!(!d.dominates(2, 3));
        assert!(d.dominates(0, 1));
    }
}
