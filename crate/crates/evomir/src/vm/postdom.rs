//! Post-dominator analysis over the block CFG.
//!
//! The VM reconverges divergent warps at the immediate post-dominator of the
//! branching block, so this analysis defines where a warp's sides rejoin.

use crate::mir::{Function, Opcode};

pub struct PostDom {
    doms: Vec<Vec<u64>>,
    has_info: Vec<bool>,
    ipdom: Vec<Option<usize>>,
}

impl PostDom {
    /// Does block `a` post-dominates block `b`? Every block post-dominates
    /// itself. Blocks with no path to the exit have no information and answer
    /// false (except for `a == b`).
    pub fn post_dominates(&self, a: usize, b: usize) -> bool {
        if a == b {
            return true;
        }
        if !self.has_info[a] || !self.has_info[b] {
            return false;
        }
        self.doms[b][a / 64] >> (a % 64) & 1 == 1
    }

    /// Immediate post-dominator: the closest block that every path from `b`
    /// to the exit must pass through. `None` for the exit block itself and
    /// for blocks that cannot reach the exit.
    pub fn ipdom(&self, b: usize) -> Option<usize> {
        self.ipdom[b]
    }
}

pub fn post_dominators(f: &Function) -> PostDom {
    let n = f.blocks.len();
    let words = n.div_ceil(64);
    let exit = f
        .blocks
        .iter()
        .position(|b| matches!(b.terminator(), Some(t) if t.opcode == Opcode::Ret));

    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for b in 0..n {
        succs[b] = f.successors(b).into_iter().filter(|&s| s < n).collect();
    }

    // Reverse reachability: which blocks can reach the exit at all.
    let mut has_info = vec![false; n];
    if let Some(exit) = exit {
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for b in 0..n {
            for &s in &succs[b] {
                preds[s].push(b);
            }
        }
        let mut stack = vec![exit];
        while let Some(b) = stack.pop() {
            if has_info[b] {
                continue;
            }
            has_info[b] = true;
            for &p in &preds[b] {
                stack.push(p);
            }
        }
    }

    let full: Vec<u64> = (0..words)
        .map(|w| {
            let lo = w * 64;
            let hi = ((w + 1) * 64).min(n);
            let mut m = 0u64;
            for b in lo..hi {
                m |= 1u64 << (b - lo);
            }
            m
        })
        .collect();

    let mut doms: Vec<Vec<u64>> = vec![full.clone(); n];
    if let Some(exit) = exit {
        doms[exit] = vec![0; words];
        doms[exit][exit / 64] = 1u64 << (exit % 64);
        let mut changed = true;
        while changed {
            changed = false;
            for b in (0..n).rev() {
                if b == exit || !has_info[b] {
                    continue;
                }
                let mut acc = full.clone();
                for &s in &succs[b] {
                    if !has_info[s] {
                        continue;
                    }
                    for w in 0..words {
                        acc[w] &= doms[s][w];
                    }
                }
                acc[b / 64] |= 1u64 << (b % 64);
                if acc != doms[b] {
                    doms[b] = acc;
                    changed = true;
                }
            }
        }
    }

    let pd = PostDom { doms, has_info, ipdom: vec![None; n] };
    let mut ipdom = vec![None; n];
    for b in 0..n {
        if Some(b) == exit || !pd.has_info[b] {
            continue;
        }
        let strict: Vec<usize> =
            (0..n).filter(|&d| d != b && pd.post_dominates(d, b)).collect();
        // The immediate post-dominator is the strict post-dominator that all
        // the others also post-dominate (the one nearest to b).
        ipdom[b] = strict
            .iter()
            .copied()
            .find(|&c| strict.iter().all(|&d| d == c || pd.post_dominates(d, c)));
    }

    PostDom { ipdom, ..pd }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mir::parse;

    #[test]
    fn diamond_reconverges_at_join() {
        let p = parse(
            "fn @k() {
entry:
  %c = icmp.eq 1, 1
  condbr %c, a, b
a:
  br join
b:
  br join
join:
  ret
}",
        )
        .unwrap();
        let pd = post_dominators(p.entry());
        assert_eq!(pd.ipdom(0), Some(3));
        assert_eq!(pd.ipdom(1), Some(3));
        assert_eq!(pd.ipdom(2), Some(3));
        assert_eq!(pd.ipdom(3), None);
        assert!(pd.post_dominates(3, 0));
        assert!(!pd.post_dominates(1, 0));
    }

    #[test]
    fn loop_exit_is_the_reconvergence_point() {
        let p = parse(
            "fn @k() {
  local [i32 x 1]
entry:
  br head
head:
  %i = ld.local 0
  %c = icmp.slt %i, 4
  condbr %c, body, done
body:
  %j = add %i, 1
  st.local 0, %j
  br head
done:
  ret
}",
        )
        .unwrap();
        let pd = post_dominators(p.entry());
        // head's divergent exit rejoins at done, not inside the loop.
        assert_eq!(pd.ipdom(1), Some(3));
        assert_eq!(pd.ipdom(2), Some(1));
    }

    #[test]
    fn nested_diamonds() {
        let p = parse(
            "fn @k() {
entry:
  %c = icmp.eq 1, 1
  condbr %c, outer_a, outer_b
outer_a:
  %d = icmp.eq 2, 2
  condbr %d, inner_a, inner_b
inner_a:
  br inner_join
inner_b:
  br inner_join
inner_join:
  br join
outer_b:
  br join
join:
  ret
}",
        )
        .unwrap();
        let pd = post_dominators(p.entry());
        assert_eq!(pd.ipdom(0), Some(6));
        assert_eq!(pd.ipdom(1), Some(4));
        assert_eq!(pd.ipdom(4), Some(6));
    }
}
