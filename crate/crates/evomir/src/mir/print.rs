//! Canonical IR printer.
//!
//! Output is deterministic: values are renamed positionally (`%a0..` for
//! parameters, `%0..` for instruction results in textual order), metadata is
//! emitted sorted, whitespace is fixed. Two programs print byte-identically
//! exactly when they are structurally equal, and `parse(print(p))` is
//! structurally identical to `p`.

use super::{Function, Operand, Program, ValueRef};
use std::collections::BTreeMap;
use std::fmt::Write;

pub fn print(program: &Program) -> String {
    let mut out = String::new();
    for (k, v) in &program.metadata {
        let _ = writeln!(out, "; !{k} = {v}");
    }
    if !program.metadata.is_empty() {
        out.push('\n');
    }
    for (i, f) in program.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_function(&mut out, f);
    }
    out
}

fn print_function(out: &mut String, f: &Function) {
    // Positional value names.
    let mut names: BTreeMap<ValueRef, String> = BTreeMap::new();
    for i in 0..f.params.len() {
        names.insert(ValueRef::Param(i as u32), format!("a{i}"));
    }
    let mut n = 0usize;
    for (_, _, ins) in f.iter_instrs() {
        if ins.opcode.has_result() {
            names.insert(ValueRef::Inst(ins.id), format!("{n}"));
            n += 1;
        }
    }

    let _ = write!(out, "fn @{}(", f.name);
    for (i, ty) in f.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "%a{i}: {ty}");
    }
    out.push_str(") {\n");
    for b in &f.buffers {
        let _ = writeln!(out, "  {} @{}[i32 x {}]", b.space, b.name, b.len);
    }
    if f.local_slots > 0 {
        let _ = writeln!(out, "  local [i32 x {}]", f.local_slots);
    }
    for (bi, block) in f.blocks.iter().enumerate() {
        let _ = writeln!(out, "{}:", block.label);
        for ins in &block.instrs {
            out.push_str("  ");
            if ins.opcode.has_result() {
                let _ = write!(out, "%{} = ", names[&ValueRef::Inst(ins.id)]);
            }
            out.push_str(ins.opcode.name());
            for (oi, op) in ins.operands.iter().enumerate() {
                out.push_str(if oi == 0 { " " } else { ", " });
                match op {
                    Operand::Value(v) => match names.get(v) {
                        Some(nm) => {
                            let _ = write!(out, "%{nm}");
                        }
                        None => {
                            // Dangling reference (mid-mutation); keep it
                            // printable for diagnostics.
                            let _ = write!(out, "%?");
                        }
                    },
                    Operand::Imm(v) => {
                        let _ = write!(out, "{v}");
                    }
                    Operand::Buffer(idx) => match f.buffers.get(*idx as usize) {
                        Some(b) => {
                            let _ = write!(out, "@{}", b.name);
                        }
                        None => {
                            let _ = write!(out, "@?");
                        }
                    },
                    Operand::Label(idx) => match f.blocks.get(*idx as usize) {
                        Some(b) => {
                            let _ = write!(out, "{}", b.label);
                        }
                        None => out.push_str("?"),
                    },
                }
            }
            out.push('\n');
        }
        let _ = bi;
    }
    out.push_str("}\n");
}
