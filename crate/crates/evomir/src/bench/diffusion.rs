//! Reference integer diffusion stencil (host-side ground truth).
//!
//! Each step, every cell sends a quarter of its value (truncating integer
//! division) to each in-grid 4-neighbor and receives the neighbors' quarters
//! in return. Off-grid sides exchange nothing, so the boundary neither leaks
//! nor reflects. Because every sent quarter arrives somewhere, the grid sum
//! is conserved exactly despite truncation.

pub const FLUX_DIVISOR: i32 = 4;

const OFFSETS: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

pub fn step(grid: &[i32], w: usize, h: usize) -> Vec<i32> {
    assert_eq!(grid.len(), w * h);
    let mut out = vec![0i32; w * h];
    for r in 0..h {
        for c in 0..w {
            let v = grid[r * w + c];
            let q = v / FLUX_DIVISOR;
            let mut acc = v;
            for (dr, dc) in OFFSETS {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr >= 0 && nr < h as i64 && nc >= 0 && nc < w as i64 {
                    acc += grid[nr as usize * w + nc as usize] / FLUX_DIVISOR - q;
                }
            }
            out[r * w + c] = acc;
        }
    }
    out
}

pub fn run(grid: &[i32], w: usize, h: usize, steps: usize) -> Vec<i32> {
    let mut g = grid.to_vec();
    for _ in 0..steps {
        g = step(&g, w, h);
    }
    g
}
