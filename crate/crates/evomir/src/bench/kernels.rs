//! Embedded kernel corpus.
//!
//! The shipped kernels are compiled into the binary with [`include_str!`] so
//! that results never depend on a checkout layout.  Setting the
//! `EVOMIR_CORPUS` environment variable to a directory containing `<name>.ir`
//! files overrides individual kernels at runtime, which is how experimental
//! kernel variants are injected without rebuilding.

use crate::mir::{parse_named, Program};

/// Names of every kernel shipped in the corpus, sorted.
pub const KERNEL_NAMES: [&str; 5] = [
    "grid_diffusion_checked",
    "grid_diffusion_padded",
    "sw_naive",
    "sw_tuned",
    "tcell_walk",
];

/// Embedded source text for a shipped kernel, or `None` for unknown names.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    match name {
        "sw_naive" => Some(include_str!("../../../../corpus/v1/sw_naive.ir")),
        "sw_tuned" => Some(include_str!("../../../../corpus/v1/sw_tuned.ir")),
        "grid_diffusion_checked" => {
            Some(include_str!("../../../../corpus/v1/grid_diffusion_checked.ir"))
        }
        "grid_diffusion_padded" => {
            Some(include_str!("../../../../corpus/v1/grid_diffusion_padded.ir"))
        }
        "tcell_walk" => Some(include_str!("../../../../corpus/v1/tcell_walk.ir")),
        _ => None,
    }
}

/// Kernel source after applying any `EVOMIR_CORPUS` directory override.
pub fn kernel_source(name: &str) -> Option<String> {
    if let Ok(dir) = std::env::var("EVOMIR_CORPUS") {
        let path = std::path::Path::new(&dir).join(format!("{name}.ir"));
        if let Ok(text) = std::fs::read_to_string(&path) {
            return Some(text);
        }
    }
    builtin_source(name).map(str::to_string)
}

/// Parse a shipped kernel by name.  Panics on unknown names or corpus text
/// that fails to parse; both indicate a broken build rather than user error.
pub fn load(name: &str) -> Program {
    let src = kernel_source(name)
        .unwrap_or_else(|| panic!("unknown kernel '{name}'"));
    parse_named(&src, name).unwrap_or_else(|e| panic!("kernel '{name}' failed to parse: {e}"))
}
