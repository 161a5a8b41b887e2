//! Shared helpers for the integration tests: schema validation against the
//! files shipped in `schemas/`, driving the installed binary, and locating
//! instructions in corpus kernels for hand-built edits.
#![allow(dead_code)]

use evomir::mir::{InstId, Opcode, Operand, Program, ValueRef};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;

// ---------------------------------------------------------------------------
// schema validation
//
// The checker implements the subset of JSON Schema the shipped schemas use:
// `type` (string or list, "number" admits integers), `enum`, `properties`,
// `required`, `additionalProperties` (bool or schema), `items`, `minItems`,
// `maxItems`. Unknown keywords are ignored.

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

pub fn load_schema(name: &str) -> Value {
    let path = schema_dir().join(format!("{name}.schema.json"));
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("cannot read schema {}: {e}", path.display()));
    serde_json::from_str(&text)
        .unwrap_or_else(|e| panic!("schema {} is not valid JSON: {e}", path.display()))
}

pub fn check_schema(name: &str, value: &Value) {
    let schema = load_schema(name);
    if let Err(msg) = validate(&schema, value, "$") {
        panic!("value does not match schema '{name}': {msg}");
    }
}

fn json_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                "integer"
            } else {
                "number"
            }
        }
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

pub fn validate(schema: &Value, value: &Value, path: &str) -> Result<(), String> {
    if let Some(t) = schema.get("type") {
        let allowed: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => return Err(format!("{path}: malformed 'type' in schema")),
        };
        let actual = json_type(value);
        let ok = allowed
            .iter()
            .any(|&a| a == actual || (a == "number" && actual == "integer"));
        if !ok {
            return Err(format!("{path}: expected type {allowed:?}, found {actual}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            return Err(format!("{path}: {value} is not one of {options:?}"));
        }
    }
    if let Some(obj) = value.as_object() {
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for r in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(r) {
                    return Err(format!("{path}: missing required key '{r}'"));
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        if let Some(props) = props {
            for (k, sub) in props {
                if let Some(v) = obj.get(k) {
                    validate(sub, v, &format!("{path}.{k}"))?;
                }
            }
        }
        match schema.get("additionalProperties") {
            Some(Value::Bool(false)) => {
                for k in obj.keys() {
                    if !props.is_some_and(|p| p.contains_key(k)) {
                        return Err(format!("{path}: unexpected key '{k}'"));
                    }
                }
            }
            Some(sub @ Value::Object(_)) => {
                for (k, v) in obj {
                    if !props.is_some_and(|p| p.contains_key(k)) {
                        validate(sub, v, &format!("{path}.{k}"))?;
                    }
                }
            }
            _ => {}
        }
    }
    if let Some(arr) = value.as_array() {
        if let Some(min) = schema.get("minItems").and_then(Value::as_u64) {
            if (arr.len() as u64) < min {
                return Err(format!("{path}: fewer than {min} items"));
            }
        }
        if let Some(max) = schema.get("maxItems").and_then(Value::as_u64) {
            if (arr.len() as u64) > max {
                return Err(format!("{path}: more than {max} items"));
            }
        }
        if let Some(items) = schema.get("items") {
            for (i, v) in arr.iter().enumerate() {
                validate(items, v, &format!("{path}[{i}]"))?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// binary driving

pub struct CliOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CliOutput {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| {
            panic!("stdout is not JSON: {e}\nstdout:\n{}\nstderr:\n{}", self.stdout, self.stderr)
        })
    }
}

/// Run the built `evomir` binary with the given arguments.
pub fn cli<I, S>(args: I) -> CliOutput
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    cli_in(Path::new(env!("CARGO_MANIFEST_DIR")), args)
}

pub fn cli_in<I, S>(cwd: &Path, args: I) -> CliOutput
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    cli_env(cwd, &[], args)
}

pub fn cli_env<I, S>(cwd: &Path, envs: &[(&str, &str)], args: I) -> CliOutput
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_evomir"));
    cmd.args(args).current_dir(cwd);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("failed to spawn evomir binary");
    CliOutput {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

// ---------------------------------------------------------------------------
// edit recipes

/// The conditional branch of the named block: its instruction id and the
/// value it branches on.
pub fn block_condbr(p: &Program, label: &str) -> (InstId, ValueRef) {
    let f = p.entry();
    let b = f
        .blocks
        .iter()
        .find(|b| b.label == label)
        .unwrap_or_else(|| panic!("no block '{label}'"));
    let ins = b
        .instrs
        .iter()
        .find(|i| i.opcode == Opcode::CondBr)
        .unwrap_or_else(|| panic!("no condbr in '{label}'"));
    let Operand::Value(v) = ins.operands[0] else { panic!("condbr condition not a value") };
    (ins.id, v)
}

/// The first instruction with the given opcode in the named block.
pub fn find_opcode(p: &Program, label: &str, op: Opcode) -> InstId {
    let f = p.entry();
    let b = f
        .blocks
        .iter()
        .find(|b| b.label == label)
        .unwrap_or_else(|| panic!("no block '{label}'"));
    b.instrs
        .iter()
        .find(|i| i.opcode == op)
        .unwrap_or_else(|| panic!("no {op:?} in '{label}'"))
        .id
}
