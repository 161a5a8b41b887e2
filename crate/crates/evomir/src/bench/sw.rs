//! Reference local-alignment scorer (host-side ground truth).
//!
//! Plain quadratic dynamic program over the standard local-alignment
//! recurrence with linear gaps: `H[i][j] = max(0, diag + subst, up + gap,
//! left + gap)`. Sequences are 0..=3 codes (A, C, G, T). The traceback
//! breaks ties diagonal > up > left and stops at the first zero cell.

pub const MATCH: i32 = 2;
pub const MISMATCH: i32 = -2;
pub const GAP: i32 = -1;

pub const ALPHABET: [char; 4] = ['A', 'C', 'G', 'T'];

/// Encode an ACGT string as 0..=3 codes. Panics on other characters; the
/// corpus only ever builds sequences from [`ALPHABET`].
pub fn encode(seq: &str) -> Vec<i32> {
    seq.chars()
        .map(|c| match c {
            'A' => 0,
            'C' => 1,
            'G' => 2,
            'T' => 3,
            other => panic!("not a nucleotide: {other:?}"),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScoreMatrix {
    /// Row-major (n+1) x (m+1); row 0 and column 0 are zero.
    pub h: Vec<i32>,
    pub n: usize,
    pub m: usize,
}

impl ScoreMatrix {
    pub fn at(&self, i: usize, j: usize) -> i32 {
        self.h[i * (self.m + 1) + j]
    }

    pub fn best(&self) -> i32 {
        self.h.iter().copied().max().unwrap_or(0)
    }

    /// Position of the best cell, first in row-major order on ties.
    pub fn best_pos(&self) -> (usize, usize) {
        let (mut bi, mut bj, mut bv) = (0, 0, 0);
        for i in 0..=self.n {
            for j in 0..=self.m {
                if self.at(i, j) > bv {
                    bv = self.at(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }
        (bi, bj)
    }
}

pub fn score_matrix(a: &[i32], b: &[i32]) -> ScoreMatrix {
    let (n, m) = (a.len(), b.len());
    let mut h = vec![0i32; (n + 1) * (m + 1)];
    for i in 1..=n {
        for j in 1..=m {
            let s = if a[i - 1] == b[j - 1] { MATCH } else { MISMATCH };
            let diag = h[(i - 1) * (m + 1) + (j - 1)] + s;
            let up = h[(i - 1) * (m + 1) + j] + GAP;
            let left = h[i * (m + 1) + (j - 1)] + GAP;
            h[i * (m + 1) + j] = diag.max(up).max(left).max(0);
        }
    }
    ScoreMatrix { h, n, m }
}

pub fn best_score(a: &[i32], b: &[i32]) -> i32 {
    score_matrix(a, b).best()
}

/// Aligned strings ('-' for gaps) for the best local alignment, ties broken
/// diagonal > up > left, ending at the first zero.
pub fn traceback(sm: &ScoreMatrix, a: &[i32], b: &[i32]) -> (String, String) {
    let (mut i, mut j) = sm.best_pos();
    let (mut ra, mut rb) = (Vec::new(), Vec::new());
    while i > 0 && j > 0 && sm.at(i, j) > 0 {
        let s = if a[i - 1] == b[j - 1] { MATCH } else { MISMATCH };
        if sm.at(i, j) == sm.at(i - 1, j - 1) + s {
            ra.push(ALPHABET[a[i - 1] as usize]);
            rb.push(ALPHABET[b[j - 1] as usize]);
            i -= 1;
            j -= 1;
        } else if sm.at(i, j) == sm.at(i - 1, j) + GAP {
            ra.push(ALPHABET[a[i - 1] as usize]);
            rb.push('-');
            i -= 1;
        } else {
            ra.push('-');
            rb.push(ALPHABET[b[j - 1] as usize]);
            j -= 1;
        }
    }
    ra.reverse();
    rb.reverse();
    (ra.into_iter().collect(), rb.into_iter().collect())
}
