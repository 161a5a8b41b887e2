//! Deterministic SIMT virtual machine.
//!
//! The VM executes the entry function of a verified program under an explicit
//! cost model and returns exact cycle counts, an instruction mix, and final
//! global-buffer contents. Everything — scheduling, races, randomness — is a
//! pure function of `(program, config, inputs, seed)`, which is what makes it
//! usable as a fitness oracle.
//!
//! Execution model:
//! - Thread blocks (CTAs) run sequentially in ascending index order; shared
//!   memory and local slots are zeroed per CTA.
//! - Within a CTA, warps are stepped round-robin, one instruction per turn,
//!   in **descending** warp order; per-lane stores are applied in descending
//!   lane order. Racing stores in the same round therefore resolve to the
//!   lowest (warp, lane) writer.
//! - Branch divergence uses a reconvergence stack: a divergent `condbr` pays
//!   for both sides and reconverges at the immediate post-dominator.
//! - `bar.block` arrival is per warp. A barrier releases only when every warp
//!   in the CTA is parked at one; if some warps have already retired while
//!   others wait, the launch faults with a deadlock.

mod exec;
pub mod postdom;

pub use exec::launch;

use crate::mir::{InstId, Opcode, Violation};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Grid/block geometry plus the per-warp cycle budget.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LaunchConfig {
    pub blocks: u32,
    pub threads_per_block: u32,
    pub warp_size: u32,
    /// A launch times out once any single warp has accumulated this many
    /// cycles. Guards against runaway loops in evolved programs.
    pub cycle_budget: u64,
}

impl Default for LaunchConfig {
    fn default() -> Self {
        LaunchConfig { blocks: 1, threads_per_block: 32, warp_size: 32, cycle_budget: 1_000_000 }
    }
}

impl LaunchConfig {
    pub fn warps_per_block(&self) -> u32 {
        self.threads_per_block / self.warp_size
    }

    pub fn validate(&self) -> Result<(), LaunchError> {
        let bad = |m: &str| Err(LaunchError::BadConfig(m.to_string()));
        if self.blocks == 0 {
            return bad("blocks must be >= 1");
        }
        if self.warp_size == 0 || self.warp_size > 64 || !self.warp_size.is_power_of_two() {
            return bad("warp_size must be a power of two in 1..=64");
        }
        if self.threads_per_block == 0 || self.threads_per_block % self.warp_size != 0 {
            return bad("threads_per_block must be a positive multiple of warp_size");
        }
        if self.cycle_budget == 0 {
            return bad("cycle_budget must be >= 1");
        }
        Ok(())
    }
}

/// Per-opcode issue costs, in cycles. One warp issue of an instruction costs
/// the same regardless of how many lanes are active.
///
/// Serializes as a JSON object keyed by opcode name; deserializing starts
/// from the default table, so partial override files are valid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostModel {
    costs: BTreeMap<Opcode, u64>,
}

impl Serialize for CostModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let named: BTreeMap<&str, u64> =
            self.costs.iter().map(|(op, c)| (op.name(), *c)).collect();
        named.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CostModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let named: BTreeMap<String, u64> = BTreeMap::deserialize(d)?;
        let mut model = CostModel::default();
        for (name, cycles) in named {
            let op = Opcode::from_name(&name).ok_or_else(|| {
                serde::de::Error::custom(format!("unknown opcode '{name}' in cost model"))
            })?;
            model.costs.insert(op, cycles);
        }
        Ok(model)
    }
}

impl Default for CostModel {
    fn default() -> Self {
        use Opcode::*;
        let mut costs = BTreeMap::new();
        for op in Opcode::ALL {
            let c = match op {
                Add | Sub | Mul | Div | Min | Max | Shl => 1,
                And | Or | Xor | Select => 1,
                IcmpEq | IcmpNe | IcmpSlt | IcmpSle | IcmpSgt | IcmpSge => 1,
                TidLane | TidWarp | TidBlock | DimBlock | DimGrid => 1,
                Br | CondBr | Ret => 2,
                Shfl => 2,
                LdGlobal | StGlobal => 100,
                LdShared | StShared => 8,
                LdLocal | StLocal => 2,
                BarBlock => 20,
                BarWarp => 5,
                Rand => 4,
            };
            costs.insert(op, c);
        }
        CostModel { costs }
    }
}

impl CostModel {
    pub fn cost(&self, op: Opcode) -> u64 {
        self.costs[&op]
    }

    /// Default costs with overrides from a JSON object keyed by opcode name,
    /// e.g. `{"ld.global": 80, "bar.block": 10}`.
    pub fn with_overrides_json(json: &str) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum FaultKind {
    OutOfBounds { inst: InstId, buffer: String, index: i32, len: u32, block: u32, warp: u32, lane: u32 },
    Deadlock { block: u32, parked: u32, retired: u32 },
}

impl std::fmt::Display for FaultKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FaultKind::OutOfBounds { inst, buffer, index, len, block, warp, lane } => write!(
                f,
                "out-of-bounds access at {inst}: @{buffer}[{index}] (len {len}) by block {block} warp {warp} lane {lane}"
            ),
            FaultKind::Deadlock { block, parked, retired } => write!(
                f,
                "barrier deadlock in block {block}: {parked} warp(s) parked, {retired} retired"
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Completed,
    Timeout,
    Fault(FaultKind),
}

impl Status {
    pub fn is_completed(&self) -> bool {
        matches!(self, Status::Completed)
    }
}

/// Issue counts grouped by instruction family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct InstructionMix {
    pub arith: u64,
    pub compare_logic: u64,
    pub mem_global: u64,
    pub mem_shared: u64,
    pub mem_local: u64,
    pub sync: u64,
    pub control: u64,
    pub rand: u64,
}

impl InstructionMix {
    pub fn record(&mut self, op: Opcode) {
        use Opcode::*;
        let slot = match op {
            Add | Sub | Mul | Div | Min | Max | Shl | Select => &mut self.arith,
            TidLane | TidWarp | TidBlock | DimBlock | DimGrid => &mut self.arith,
            And | Or | Xor => &mut self.compare_logic,
            IcmpEq | IcmpNe | IcmpSlt | IcmpSle | IcmpSgt | IcmpSge => &mut self.compare_logic,
            LdGlobal | StGlobal => &mut self.mem_global,
            LdShared | StShared => &mut self.mem_shared,
            LdLocal | StLocal => &mut self.mem_local,
            Shfl | BarBlock | BarWarp => &mut self.sync,
            Br | CondBr | Ret => &mut self.control,
            Rand => &mut self.rand,
        };
        *slot += 1;
    }

    pub fn total(&self) -> u64 {
        self.arith
            + self.compare_logic
            + self.mem_global
            + self.mem_shared
            + self.mem_local
            + self.sync
            + self.control
            + self.rand
    }
}

/// One warp issue, recorded when tracing is enabled.
#[derive(Clone, Debug, Serialize)]
pub struct TraceEntry {
    pub block: u32,
    pub warp: u32,
    pub mask: u64,
    pub inst: InstId,
    pub op: &'static str,
    pub cost: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub status: Status,
    /// Total cost of every warp issue across all blocks.
    pub cycles: u64,
    /// Number of warp issues (a divergent branch's two sides count twice).
    pub instructions_executed: u64,
    pub mix: InstructionMix,
    /// Final contents of every global buffer, keyed by name.
    pub globals: BTreeMap<String, Vec<i32>>,
    pub trace: Option<Vec<TraceEntry>>,
}

#[derive(Debug, thiserror::Error)]
pub enum LaunchError {
    #[error("invalid launch config: {0}")]
    BadConfig(String),
    #[error("entry function must take no parameters")]
    EntryHasParams,
    #[error("no buffer named @{0} in the entry function")]
    UnknownInputBuffer(String),
    #[error("input for @{buffer} has {given} elements, buffer declares {declared}")]
    InputTooLong { buffer: String, declared: u32, given: usize },
    #[error("program failed verification ({} violation(s), first: {first})", .violations.len())]
    InvalidProgram { violations: Vec<Violation>, first: String },
}

impl LaunchError {
    pub fn invalid_program(violations: Vec<Violation>) -> Self {
        let first = violations.first().map(|v| v.to_string()).unwrap_or_default();
        LaunchError::InvalidProgram { violations, first }
    }
}
