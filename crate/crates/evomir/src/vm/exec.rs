//! The SIMT interpreter.
//!
//! The entry function is lowered once per launch into a flat form with
//! register numbers instead of instruction ids, then interpreted warp by
//! warp. See the module docs in `vm` for the scheduling and divergence rules.

use super::postdom::post_dominators;
use super::{
    CostModel, FaultKind, InstructionMix, LaunchConfig, LaunchError, RunResult, Status, TraceEntry,
};
use crate::mir::{verify, InstId, MemSpace, Opcode, Operand, OperandKind, Program, ValueRef};
use crate::rng::mix64;
use std::collections::BTreeMap;

const NO_REG: u32 = u32::MAX;

#[derive(Clone, Copy)]
enum Src {
    Reg(u32),
    Imm(i32),
}

struct LInst {
    id: InstId,
    op: Opcode,
    dst: u32,
    srcs: Vec<Src>,
    buf: u32,
    slot: u32,
    labels: [usize; 2],
    cost: u64,
}

struct Lowered {
    blocks: Vec<Vec<LInst>>,
    n_regs: u32,
    ipdom: Vec<Option<usize>>,
}

fn lower(p: &Program, cost: &CostModel) -> Lowered {
    let f = p.entry();
    let mut reg_of: BTreeMap<InstId, u32> = BTreeMap::new();
    let mut n_regs = 0u32;
    for (_, _, ins) in f.iter_instrs() {
        if ins.opcode.has_result() {
            reg_of.insert(ins.id, n_regs);
            n_regs += 1;
        }
    }

    let pd = post_dominators(f);
    let ipdom = (0..f.blocks.len()).map(|b| pd.ipdom(b)).collect();

    let blocks = f
        .blocks
        .iter()
        .map(|block| {
            block
                .instrs
                .iter()
                .map(|ins| {
                    let mut li = LInst {
                        id: ins.id,
                        op: ins.opcode,
                        dst: ins.result().and_then(|_| reg_of.get(&ins.id).copied()).unwrap_or(NO_REG),
                        srcs: Vec::new(),
                        buf: u32::MAX,
                        slot: u32::MAX,
                        labels: [usize::MAX; 2],
                        cost: cost.cost(ins.opcode),
                    };
                    let mut label_at = 0;
                    for (op, kind) in ins.operands.iter().zip(ins.opcode.operand_kinds()) {
                        match (kind, op) {
                            (OperandKind::Buf(_), Operand::Buffer(i)) => li.buf = *i,
                            (OperandKind::SlotImm, Operand::Imm(s)) => li.slot = *s as u32,
                            (OperandKind::Label, Operand::Label(l)) => {
                                li.labels[label_at] = *l as usize;
                                label_at += 1;
                            }
                            (_, Operand::Imm(v)) => li.srcs.push(Src::Imm(*v)),
                            (_, Operand::Value(ValueRef::Inst(id))) => {
                                li.srcs.push(Src::Reg(reg_of[id]))
                            }
                            (_, Operand::Value(ValueRef::Param(_))) => {
                                // The entry function takes no parameters, which
                                // `launch` enforces before lowering.
                                unreachable!("param reference in entry function")
                            }
                            _ => unreachable!("operand shape rejected by verifier"),
                        }
                    }
                    li
                })
                .collect()
        })
        .collect();

    Lowered { blocks, n_regs, ipdom }
}

#[derive(Clone, Copy)]
struct Frame {
    mask: u64,
    block: usize,
    idx: usize,
    /// Block index at which this frame pops, or usize::MAX.
    reconv: usize,
}

struct Warp {
    regs: Vec<i32>,
    rand_ctr: Vec<u64>,
    locals: Vec<i32>,
    stack: Vec<Frame>,
    parked: bool,
    retired: bool,
    cycles_used: u64,
}

struct Machine<'a> {
    lo: &'a Lowered,
    cfg: &'a LaunchConfig,
    seed: u64,
    ws: usize,
    buffer_names: Vec<String>,
    buffer_lens: Vec<u32>,
    buffer_spaces: Vec<MemSpace>,
    globals: Vec<Vec<i32>>,
    cycles: u64,
    instructions: u64,
    mix: InstructionMix,
    trace: Option<Vec<TraceEntry>>,
}

enum Step {
    Ok,
    Fault(FaultKind),
}

/// Execute the entry function of `program`.
///
/// `inputs` provides initial contents for global buffers by name; anything
/// shorter than the declared length is zero-extended, anything longer is an
/// error. The program must pass verification.
pub fn launch(
    program: &Program,
    cfg: &LaunchConfig,
    cost: &CostModel,
    inputs: &BTreeMap<String, Vec<i32>>,
    seed: u64,
    want_trace: bool,
) -> Result<RunResult, LaunchError> {
    cfg.validate()?;
    let violations = verify(program);
    if !violations.is_empty() {
        return Err(LaunchError::invalid_program(violations));
    }
    let f = program.entry();
    if !f.params.is_empty() {
        return Err(LaunchError::EntryHasParams);
    }

    let mut globals: Vec<Vec<i32>> = Vec::new();
    for b in &f.buffers {
        globals.push(vec![0; b.len as usize]);
    }
    for (name, data) in inputs {
        let Some(bi) = f.buffer_index(name) else {
            return Err(LaunchError::UnknownInputBuffer(name.clone()));
        };
        let decl = &f.buffers[bi];
        if decl.space != MemSpace::Global {
            return Err(LaunchError::UnknownInputBuffer(name.clone()));
        }
        if data.len() > decl.len as usize {
            return Err(LaunchError::InputTooLong {
                buffer: name.clone(),
                declared: decl.len,
                given: data.len(),
            });
        }
        globals[bi][..data.len()].copy_from_slice(data);
    }

    let lo = lower(program, cost);
    let mut m = Machine {
        lo: &lo,
        cfg,
        seed,
        ws: cfg.warp_size as usize,
        buffer_names: f.buffers.iter().map(|b| b.name.clone()).collect(),
        buffer_lens: f.buffers.iter().map(|b| b.len).collect(),
        buffer_spaces: f.buffers.iter().map(|b| b.space).collect(),
        globals,
        cycles: 0,
        instructions: 0,
        mix: InstructionMix::default(),
        trace: want_trace.then(Vec::new),
    };
    let local_slots = f.local_slots as usize;

    let mut status = Status::Completed;
    'grid: for cta in 0..cfg.blocks {
        match m.run_cta(cta, local_slots) {
            Status::Completed => {}
            other => {
                status = other;
                break 'grid;
            }
        }
    }

    let globals = m
        .buffer_names
        .iter()
        .zip(&m.buffer_spaces)
        .zip(&m.globals)
        .filter(|((_, space), _)| **space == MemSpace::Global)
        .map(|((name, _), data)| (name.clone(), data.clone()))
        .collect();

    Ok(RunResult {
        status,
        cycles: m.cycles,
        instructions_executed: m.instructions,
        mix: m.mix,
        globals,
        trace: m.trace,
    })
}

impl<'a> Machine<'a> {
    fn run_cta(&mut self, cta: u32, local_slots: usize) -> Status {
        let ws = self.ws;
        let n_warps = self.cfg.warps_per_block() as usize;
        let full_mask: u64 = if ws == 64 { u64::MAX } else { (1u64 << ws) - 1 };

        // Fresh shared memory per CTA.
        let mut shared: Vec<Vec<i32>> = self
            .buffer_spaces
            .iter()
            .zip(&self.buffer_lens)
            .map(|(space, len)| match space {
                MemSpace::Shared => vec![0; *len as usize],
                MemSpace::Global => Vec::new(),
            })
            .collect();

        let mut warps: Vec<Warp> = (0..n_warps)
            .map(|_| Warp {
                regs: vec![0; self.lo.n_regs as usize * ws],
                rand_ctr: vec![0; ws],
                locals: vec![0; local_slots * ws],
                stack: vec![Frame { mask: full_mask, block: 0, idx: 0, reconv: usize::MAX }],
                parked: false,
                retired: false,
                cycles_used: 0,
            })
            .collect();

        loop {
            let mut all_done = true;
            for w in (0..n_warps).rev() {
                if warps[w].retired || warps[w].parked {
                    continue;
                }
                all_done = false;
                match self.step(cta, w, &mut warps, &mut shared) {
                    Step::Ok => {}
                    Step::Fault(k) => return Status::Fault(k),
                }
                if warps[w].cycles_used > self.cfg.cycle_budget {
                    return Status::Timeout;
                }
                if warps[w].parked || warps[w].retired {
                    let parked = warps.iter().filter(|x| x.parked).count();
                    let retired = warps.iter().filter(|x| x.retired).count();
                    let running = n_warps - parked - retired;
                    if running == 0 && parked > 0 {
                        if retired > 0 {
                            return Status::Fault(FaultKind::Deadlock {
                                block: cta,
                                parked: parked as u32,
                                retired: retired as u32,
                            });
                        }
                        // Barrier release: everyone arrived.
                        for warp in warps.iter_mut() {
                            warp.parked = false;
                            warp.stack.last_mut().expect("parked warp has a frame").idx += 1;
                        }
                    }
                }
            }
            if all_done {
                if warps.iter().all(|w| w.retired) {
                    return Status::Completed;
                }
                // Only parked warps remain and the release check above did
                // not fire, which cannot happen: parking triggers the check.
                unreachable!("scheduler stalled without a barrier release");
            }
        }
    }

    /// Execute one instruction for warp `w`.
    fn step(
        &mut self,
        cta: u32,
        w: usize,
        warps: &mut [Warp],
        shared: &mut [Vec<i32>],
    ) -> Step {
        let ws = self.ws;
        let fr = *warps[w].stack.last().expect("runnable warp has a frame");
        let ins = &self.lo.blocks[fr.block][fr.idx];
        let mask = fr.mask;

        self.cycles += ins.cost;
        warps[w].cycles_used += ins.cost;
        self.instructions += 1;
        self.mix.record(ins.op);
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEntry {
                block: cta,
                warp: w as u32,
                mask,
                inst: ins.id,
                op: ins.op.name(),
                cost: ins.cost,
            });
        }

        let lanes = |mask: u64| (0..ws).filter(move |l| mask >> l & 1 == 1);
        let src = |warp: &Warp, s: Src, lane: usize| -> i32 {
            match s {
                Src::Imm(v) => v,
                Src::Reg(r) => warp.regs[r as usize * ws + lane],
            }
        };

        use Opcode::*;
        match ins.op {
            // Lane-wise pure ops.
            Add | Sub | Mul | Div | Min | Max | Shl | And | Or | Xor | IcmpEq | IcmpNe
            | IcmpSlt | IcmpSle | IcmpSgt | IcmpSge | Select | TidLane | TidWarp | TidBlock
            | DimBlock | DimGrid | Rand | Shfl | LdLocal => {
                let warp = &mut warps[w];
                for lane in lanes(mask) {
                    let v = match ins.op {
                        Add => src(warp, ins.srcs[0], lane).wrapping_add(src(warp, ins.srcs[1], lane)),
                        Sub => src(warp, ins.srcs[0], lane).wrapping_sub(src(warp, ins.srcs[1], lane)),
                        Mul => src(warp, ins.srcs[0], lane).wrapping_mul(src(warp, ins.srcs[1], lane)),
                        Div => {
                            let d = src(warp, ins.srcs[1], lane);
                            if d == 0 { 0 } else { src(warp, ins.srcs[0], lane).wrapping_div(d) }
                        }
                        Min => src(warp, ins.srcs[0], lane).min(src(warp, ins.srcs[1], lane)),
                        Max => src(warp, ins.srcs[0], lane).max(src(warp, ins.srcs[1], lane)),
                        Shl => src(warp, ins.srcs[0], lane) << (src(warp, ins.srcs[1], lane) & 31),
                        And => src(warp, ins.srcs[0], lane) & src(warp, ins.srcs[1], lane),
                        Or => src(warp, ins.srcs[0], lane) | src(warp, ins.srcs[1], lane),
                        Xor => src(warp, ins.srcs[0], lane) ^ src(warp, ins.srcs[1], lane),
                        IcmpEq => (src(warp, ins.srcs[0], lane) == src(warp, ins.srcs[1], lane)) as i32,
                        IcmpNe => (src(warp, ins.srcs[0], lane) != src(warp, ins.srcs[1], lane)) as i32,
                        IcmpSlt => (src(warp, ins.srcs[0], lane) < src(warp, ins.srcs[1], lane)) as i32,
                        IcmpSle => (src(warp, ins.srcs[0], lane) <= src(warp, ins.srcs[1], lane)) as i32,
                        IcmpSgt => (src(warp, ins.srcs[0], lane) > src(warp, ins.srcs[1], lane)) as i32,
                        IcmpSge => (src(warp, ins.srcs[0], lane) >= src(warp, ins.srcs[1], lane)) as i32,
                        Select => {
                            if src(warp, ins.srcs[0], lane) != 0 {
                                src(warp, ins.srcs[1], lane)
                            } else {
                                src(warp, ins.srcs[2], lane)
                            }
                        }
                        TidLane => lane as i32,
                        TidWarp => w as i32,
                        TidBlock => cta as i32,
                        DimBlock => self.cfg.threads_per_block as i32,
                        DimGrid => self.cfg.blocks as i32,
                        Rand => {
                            let thread = (w * ws + lane) as u64;
                            let ctr = warp.rand_ctr[lane];
                            warp.rand_ctr[lane] += 1;
                            lane_rand(self.seed, cta as u64, thread, ctr)
                        }
                        Shfl => {
                            // Reads the source lane's current register value
                            // regardless of the active mask.
                            let lane_sel =
                                (src(warp, ins.srcs[1], lane) as u32 & (ws as u32 - 1)) as usize;
                            src(warp, ins.srcs[0], lane_sel)
                        }
                        LdLocal => warp.locals[ins.slot as usize * ws + lane],
                        _ => unreachable!(),
                    };
                    warp.regs[ins.dst as usize * ws + lane] = v;
                }
                warps[w].stack.last_mut().unwrap().idx += 1;
            }

            StLocal => {
                let warp = &mut warps[w];
                for lane in lanes(mask) {
                    let v = src(warp, ins.srcs[0], lane);
                    warp.locals[ins.slot as usize * ws + lane] = v;
                }
                warp.stack.last_mut().unwrap().idx += 1;
            }

            LdGlobal | LdShared => {
                let mem_len = self.buffer_lens[ins.buf as usize];
                for lane in lanes(mask) {
                    let idx = src(&warps[w], ins.srcs[0], lane);
                    if idx < 0 || idx as u32 >= mem_len {
                        return Step::Fault(self.oob(ins, idx, cta, w, lane));
                    }
                    let v = if ins.op == LdGlobal {
                        self.globals[ins.buf as usize][idx as usize]
                    } else {
                        shared[ins.buf as usize][idx as usize]
                    };
                    warps[w].regs[ins.dst as usize * ws + lane] = v;
                }
                warps[w].stack.last_mut().unwrap().idx += 1;
            }

            StGlobal | StShared => {
                let mem_len = self.buffer_lens[ins.buf as usize];
                // Bounds are checked in ascending lane order so the fault
                // reports the lowest offending lane; writes are then applied
                // descending so the lowest lane's value lands last.
                let mut writes: Vec<(usize, i32)> = Vec::new();
                for lane in lanes(mask) {
                    let idx = src(&warps[w], ins.srcs[0], lane);
                    if idx < 0 || idx as u32 >= mem_len {
                        return Step::Fault(self.oob(ins, idx, cta, w, lane));
                    }
                    writes.push((idx as usize, src(&warps[w], ins.srcs[1], lane)));
                }
                let target = if ins.op == StGlobal {
                    &mut self.globals[ins.buf as usize]
                } else {
                    &mut shared[ins.buf as usize]
                };
                for (idx, v) in writes.into_iter().rev() {
                    target[idx] = v;
                }
                warps[w].stack.last_mut().unwrap().idx += 1;
            }

            BarWarp => {
                // Warp-level sync: a cost, not a scheduling event, since a
                // warp's lanes already execute in lockstep.
                warps[w].stack.last_mut().unwrap().idx += 1;
            }

            BarBlock => {
                // Park without advancing; the scheduler advances everyone
                // past the barrier on release.
                warps[w].parked = true;
            }

            Br => {
                self.jump(&mut warps[w], ins.labels[0]);
            }

            CondBr => {
                let mut taken = 0u64;
                for lane in lanes(mask) {
                    if src(&warps[w], ins.srcs[0], lane) != 0 {
                        taken |= 1 << lane;
                    }
                }
                let not_taken = mask & !taken;
                let (t_target, n_target) = (ins.labels[0], ins.labels[1]);
                if not_taken == 0 {
                    self.jump(&mut warps[w], t_target);
                } else if taken == 0 {
                    self.jump(&mut warps[w], n_target);
                } else {
                    let reconv = self.lo.ipdom[fr.block]
                        .expect("verified non-exit block has a post-dominator");
                    // The current frame becomes the continuation at the
                    // reconvergence point (or merges if it is already one),
                    // then the two sides run on top of it, taken first. A side
                    // that targets the reconvergence point directly has no
                    // work of its own: its lanes wait in the continuation
                    // frame instead of re-executing the join block masked.
                    self.jump(&mut warps[w], reconv);
                    if n_target != reconv {
                        warps[w].stack.push(Frame { mask: not_taken, block: n_target, idx: 0, reconv });
                    }
                    if t_target != reconv {
                        warps[w].stack.push(Frame { mask: taken, block: t_target, idx: 0, reconv });
                    }
                }
            }

            Ret => {
                warps[w].stack.pop();
                if warps[w].stack.is_empty() {
                    warps[w].retired = true;
                }
            }
        }
        Step::Ok
    }

    /// Move the warp's top frame to `target`, popping it if `target` is the
    /// frame's reconvergence point.
    fn jump(&self, warp: &mut Warp, target: usize) {
        let top = warp.stack.last().expect("jump with empty stack");
        if top.reconv == target {
            warp.stack.pop();
            if warp.stack.is_empty() {
                warp.retired = true;
            }
        } else {
            let top = warp.stack.last_mut().unwrap();
            top.block = target;
            top.idx = 0;
        }
    }

    fn oob(&self, ins: &LInst, index: i32, cta: u32, w: usize, lane: usize) -> FaultKind {
        FaultKind::OutOfBounds {
            inst: ins.id,
            buffer: self.buffer_names[ins.buf as usize].clone(),
            index,
            len: self.buffer_lens[ins.buf as usize],
            block: cta,
            warp: w as u32,
            lane: lane as u32,
        }
    }
}

/// Deterministic per-lane random stream: a splitmix chain over
/// (seed, block, thread-in-block, per-lane draw counter), masked to a
/// non-negative i32.
fn lane_rand(seed: u64, cta: u64, thread: u64, counter: u64) -> i32 {
    let mut h = seed;
    h = mix64(h ^ cta);
    h = mix64(h ^ (thread << 32));
    h = mix64(h ^ counter);
    (h & 0x7fff_ffff) as i32
}

#[cfg(test)]
mod tests {
    use super::super::{CostModel, LaunchConfig, Status};
    use super::*;
    use crate::mir::parse;

    fn run(text: &str, cfg: &LaunchConfig, inputs: &[(&str, Vec<i32>)]) -> RunResult {
        let p = parse(text).unwrap();
        let inputs: BTreeMap<String, Vec<i32>> =
            inputs.iter().map(|(n, v)| (n.to_string(), v.clone())).collect();
        launch(&p, cfg, &CostModel::default(), &inputs, 7, false).unwrap()
    }

    #[test]
    fn lane_ids_written_to_global() {
        let r = run(
            "fn @k() {
  global @out[i32 x 32]
entry:
  %l = tid.lane
  st.global @out, %l, %l
  ret
}",
            &LaunchConfig::default(),
            &[],
        );
        assert_eq!(r.status, Status::Completed);
        let out = &r.globals["out"];
        assert_eq!(out[..5], [0, 1, 2, 3, 4]);
        assert_eq!(out[31], 31);
        // tid.lane (1) + st.global (100) + ret (2), one warp.
        assert_eq!(r.cycles, 103);
        assert_eq!(r.instructions_executed, 3);
        assert_eq!(r.mix.mem_global, 1);
    }

    #[test]
    fn divergent_branch_pays_both_sides_and_reconverges() {
        let r = run(
            "fn @k() {
  global @out[i32 x 32]
entry:
  %l = tid.lane
  %c = icmp.slt %l, 8
  condbr %c, low, high
low:
  %a = add %l, 100
  st.global @out, %l, %a
  br join
high:
  %b = add %l, 200
  st.global @out, %l, %b
  br join
join:
  ret
}",
            &LaunchConfig::default(),
            &[],
        );
        assert_eq!(r.status, Status::Completed);
        assert_eq!(r.globals["out"][0], 100);
        assert_eq!(r.globals["out"][7], 107);
        assert_eq!(r.globals["out"][8], 208);
        assert_eq!(r.globals["out"][31], 231);
        // Both sides issued: 2 adds, 2 stores, 2 brs.
        assert_eq!(r.mix.mem_global, 2);
        assert_eq!(r.mix.control, 4); // condbr, 2x br, ret
    }

    #[test]
    fn uniform_branch_pays_one_side() {
        let r = run(
            "fn @k() {
  global @out[i32 x 32]
entry:
  %l = tid.lane
  %c = icmp.slt %l, 99
  condbr %c, low, high
low:
  st.global @out, %l, 1
  br join
high:
  st.global @out, %l, 2
  br join
join:
  ret
}",
            &LaunchConfig::default(),
            &[],
        );
        assert_eq!(r.mix.mem_global, 1);
        assert!(r.globals["out"].iter().all(|&v| v == 1));
    }

    #[test]
    fn loop_accumulates() {
        let r = run(
            "fn @k() {
  global @out[i32 x 32]
  local [i32 x 2]
entry:
  %l = tid.lane
  st.local 0, 0
  st.local 1, 0
  br head
head:
  %i = ld.local 0
  %acc = ld.local 1
  %c = icmp.slt %i, 5
  condbr %c, body, done
body:
  %acc2 = add %acc, %l
  %i2 = add %i, 1
  st.local 1, %acc2
  st.local 0, %i2
  br head
done:
  %fin = ld.local 1
  st.global @out, %l, %fin
  ret
}",
            &LaunchConfig::default(),
            &[],
        );
        assert_eq!(r.status, Status::Completed);
        for lane in 0..32 {
            assert_eq!(r.globals["out"][lane], 5 * lane as i32);
        }
    }

    #[test]
    fn shared_memory_and_block_barrier() {
        // Warp 1 writes shared, all warps sync, warp 0 reads what warp 1 wrote.
        let cfg = LaunchConfig { threads_per_block: 64, ..Default::default() };
        let r = run(
            "fn @k() {
  global @out[i32 x 64]
  shared @s[i32 x 64]
entry:
  %l = tid.lane
  %w = tid.warp
  %t0 = mul %w, 32
  %t = add %t0, %l
  %v = add %t, 1000
  st.shared @s, %t, %v
  bar.block
  %r = ld.shared @s, %t
  st.global @out, %t, %r
  ret
}",
            &cfg,
            &[],
        );
        assert_eq!(r.status, Status::Completed);
        for t in 0..64 {
            assert_eq!(r.globals["out"][t], 1000 + t as i32);
        }
        assert_eq!(r.mix.sync, 2);
    }

    #[test]
    fn barrier_deadlock_when_some_warps_retire() {
        let cfg = LaunchConfig { threads_per_block: 64, ..Default::default() };
        let r = run(
            "fn @k() {
entry:
  %w = tid.warp
  %c = icmp.eq %w, 0
  condbr %c, wait, skip
wait:
  bar.block
  br join
skip:
  br join
join:
  ret
}",
            &cfg,
            &[],
        );
        match r.status {
            Status::Fault(FaultKind::Deadlock { parked, retired, .. }) => {
                assert_eq!(parked, 1);
                assert_eq!(retired, 1);
            }
            other => panic!("expected deadlock, got {other:?}"),
        }
    }

    #[test]
    fn out_of_bounds_store_faults_with_lowest_lane() {
        let r = run(
            "fn @k() {
  global @out[i32 x 8]
entry:
  %l = tid.lane
  st.global @out, %l, %l
  ret
}",
            &LaunchConfig::default(),
            &[],
        );
        match r.status {
            Status::Fault(FaultKind::OutOfBounds { index, lane, .. }) => {
                assert_eq!(index, 8);
                assert_eq!(lane, 8);
            }
            other => panic!("expected OOB, got {other:?}"),
        }
    }

    #[test]
    fn racing_stores_resolve_to_lowest_lane_and_warp() {
        // All 64 threads store their thread id to cell 0 in the same round.
        let cfg = LaunchConfig { threads_per_block: 64, ..Default::default() };
        let r = run(
            "fn @k() {
  global @out[i32 x 1]
entry:
  %l = tid.lane
  %w = tid.warp
  %t0 = mul %w, 32
  %t = add %t0, %l
  st.global @out, 0, %t
  ret
}",
            &cfg,
            &[],
        );
        assert_eq!(r.status, Status::Completed);
        assert_eq!(r.globals["out"][0], 0);
    }

    #[test]
    fn timeout_on_runaway_loop() {
        let cfg = LaunchConfig { cycle_budget: 500, ..Default::default() };
        let r = run(
            "fn @k() {
  local [i32 x 1]
entry:
  br head
head:
  %i = ld.local 0
  %c = icmp.slt %i, 100000
  condbr %c, body, done
body:
  %j = add %i, 1
  st.local 0, %j
  br head
done:
  ret
}",
            &cfg,
            &[],
        );
        assert_eq!(r.status, Status::Timeout);
    }

    #[test]
    fn shfl_broadcasts_lane_zero() {
        let r = run(
            "fn @k() {
  global @out[i32 x 32]
entry:
  %l = tid.lane
  %v = add %l, 50
  %b = shfl %v, 0
  st.global @out, %l, %b
  ret
}",
            &LaunchConfig::default(),
            &[],
        );
        assert!(r.globals["out"].iter().all(|&v| v == 50));
    }

    #[test]
    fn rand_is_deterministic_per_seed() {
        let text = "fn @k() {
  global @out[i32 x 32]
entry:
  %l = tid.lane
  %r = rand
  st.global @out, %l, %r
  ret
}";
        let a = run(text, &LaunchConfig::default(), &[]);
        let b = run(text, &LaunchConfig::default(), &[]);
        assert_eq!(a.globals["out"], b.globals["out"]);
        assert!(a.globals["out"].iter().all(|&v| v >= 0));
        // Different lanes see different draws.
        assert_ne!(a.globals["out"][0], a.globals["out"][1]);
    }

    #[test]
    fn inputs_are_zero_extended_and_oversize_rejected() {
        let text = "fn @k() {
  global @in[i32 x 8]
  global @out[i32 x 8]
entry:
  %l = tid.lane
  %c = icmp.slt %l, 8
  condbr %c, body, done
body:
  %v = ld.global @in, %l
  %v2 = add %v, 1
  st.global @out, %l, %v2
  br done
done:
  ret
}";
        let r = run(text, &LaunchConfig::default(), &[("in", vec![5, 6])]);
        assert_eq!(r.globals["out"], vec![6, 7, 1, 1, 1, 1, 1, 1]);

        let p = parse(text).unwrap();
        let mut inputs = BTreeMap::new();
        inputs.insert("in".to_string(), vec![0; 9]);
        let err =
            launch(&p, &LaunchConfig::default(), &CostModel::default(), &inputs, 0, false)
                .unwrap_err();
        assert!(matches!(err, LaunchError::InputTooLong { .. }));
    }

    #[test]
    fn trace_records_issues() {
        let p = parse("fn @k() { entry: %x = rand\n ret }").unwrap();
        let r = launch(&p, &LaunchConfig::default(), &CostModel::default(), &BTreeMap::new(), 1, true)
            .unwrap();
        let t = r.trace.unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].op, "rand");
        assert_eq!(t[1].op, "ret");
        assert_eq!(t[0].mask, u32::MAX as u64);
    }

    #[test]
    fn blocks_run_sequentially_with_own_shared() {
        let cfg = LaunchConfig { blocks: 2, ..Default::default() };
        let r = run(
            "fn @k() {
  global @out[i32 x 2]
  shared @s[i32 x 1]
entry:
  %b = tid.block
  %l = tid.lane
  %c = icmp.eq %l, 0
  condbr %c, write, after
write:
  %old = ld.shared @s, 0
  %new = add %old, 1
  st.shared @s, 0, %new
  st.global @out, %b, %new
  br after
after:
  ret
}",
            &cfg,
            &[],
        );
        // Shared memory resets between blocks, so both see 1.
        assert_eq!(r.globals["out"], vec![1, 1]);
    }
}
