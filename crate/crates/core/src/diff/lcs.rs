//! Minimal line-level edit scripts (Myers' greedy O(ND) algorithm) and the
//! old/new line correspondence derived from them.

use serde::{Deserialize, Serialize};

/// One step of an edit script. Indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Equal { old: usize, new: usize },
    Delete { old: usize },
    Insert { new: usize },
}

/// Computes a shortest edit script turning `a` into `b`.
///
/// Common prefixes and suffixes are matched first; the remaining middle part
/// goes through Myers' forward search. The number of `Equal` steps is always
/// the length of a longest common subsequence.
pub fn edit_script<T: PartialEq>(a: &[T], b: &[T]) -> Vec<EditOp> {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let suffix = a[prefix..]
        .iter()
        .rev()
        .zip(b[prefix..].iter().rev())
        .take_while(|(x, y)| x == y)
        .count();

    let mut ops = Vec::with_capacity(a.len().max(b.len()));
    ops.extend((0..prefix).map(|i| EditOp::Equal { old: i, new: i }));

    let a_mid = &a[prefix..a.len() - suffix];
    let b_mid = &b[prefix..b.len() - suffix];
    for op in myers(a_mid, b_mid) {
        ops.push(match op {
            EditOp::Equal { old, new } => EditOp::Equal {
                old: old + prefix,
                new: new + prefix,
            },
            EditOp::Delete { old } => EditOp::Delete { old: old + prefix },
            EditOp::Insert { new } => EditOp::Insert { new: new + prefix },
        });
    }

    let a_tail = a.len() - suffix;
    let b_tail = b.len() - suffix;
    ops.extend((0..suffix).map(|i| EditOp::Equal {
        old: a_tail + i,
        new: b_tail + i,
    }));
    ops
}

fn myers<T: PartialEq>(a: &[T], b: &[T]) -> Vec<EditOp> {
    let n = a.len() as isize;
    let m = b.len() as isize;
    if n == 0 {
        return (0..b.len()).map(|new| EditOp::Insert { new }).collect();
    }
    if m == 0 {
        return (0..a.len()).map(|old| EditOp::Delete { old }).collect();
    }

    let max = (n + m) as usize;
    let offset = max as isize + 1;
    let mut v = vec![0isize; 2 * max + 3];
    // trace[d] holds v[-d-1 ..= d+1] as it was before round d.
    let mut trace: Vec<Vec<isize>> = Vec::new();
    let mut found = None;

    'outer: for d in 0..=max as isize {
        let lo = (offset - d - 1) as usize;
        let hi = (offset + d + 1) as usize;
        trace.push(v[lo..=hi].to_vec());
        let mut k = -d;
        while k <= d {
            let idx = (offset + k) as usize;
            let mut x = if k == -d || (k != d && v[idx - 1] < v[idx + 1]) {
                v[idx + 1]
            } else {
                v[idx - 1] + 1
            };
            let mut y = x - k;
            while x < n && y < m && a[x as usize] == b[y as usize] {
                x += 1;
                y += 1;
            }
            v[idx] = x;
            if x >= n && y >= m {
                found = Some(d);
                break 'outer;
            }
            k += 2;
        }
    }

    let depth = found.expect("myers search always reaches the end");
    let mut ops = Vec::new();
    let (mut x, mut y) = (n, m);
    for d in (0..=depth).rev() {
        let snapshot = &trace[d as usize];
        let at = |k: isize| snapshot[(k + d + 1) as usize];
        let k = x - y;
        let prev_k = if k == -d || (k != d && at(k - 1) < at(k + 1)) {
            k + 1
        } else {
            k - 1
        };
        let prev_x = if d == 0 { 0 } else { at(prev_k) };
        let prev_y = prev_x - prev_k;
        while x > prev_x && y > prev_y {
            ops.push(EditOp::Equal {
                old: (x - 1) as usize,
                new: (y - 1) as usize,
            });
            x -= 1;
            y -= 1;
        }
        if d > 0 {
            if x == prev_x {
                ops.push(EditOp::Insert {
                    new: (y - 1) as usize,
                });
            } else {
                ops.push(EditOp::Delete {
                    old: (x - 1) as usize,
                });
            }
        }
        x = prev_x;
        y = prev_y;
    }
    ops.reverse();
    ops
}

/// Correspondence between unchanged lines of two file versions.
///
/// Line numbers are 1-based. The mapping is injective and strictly
/// order-preserving by construction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineMap {
    old_to_new: Vec<Option<usize>>,
    new_to_old: Vec<Option<usize>>,
}

impl LineMap {
    pub fn from_script(old_len: usize, new_len: usize, ops: &[EditOp]) -> Self {
        let mut old_to_new = vec![None; old_len];
        let mut new_to_old = vec![None; new_len];
        for op in ops {
            if let EditOp::Equal { old, new } = *op {
                old_to_new[old] = Some(new + 1);
                new_to_old[new] = Some(old + 1);
            }
        }
        LineMap {
            old_to_new,
            new_to_old,
        }
    }

    pub fn between<T: PartialEq>(old: &[T], new: &[T]) -> Self {
        Self::from_script(old.len(), new.len(), &edit_script(old, new))
    }

    /// Identity map over `len` lines.
    pub fn identity(len: usize) -> Self {
        LineMap {
            old_to_new: (1..=len).map(Some).collect(),
            new_to_old: (1..=len).map(Some).collect(),
        }
    }

    pub fn new_of(&self, old_line: usize) -> Option<usize> {
        old_line
            .checked_sub(1)
            .and_then(|i| self.old_to_new.get(i).copied().flatten())
    }

    pub fn old_of(&self, new_line: usize) -> Option<usize> {
        new_line
            .checked_sub(1)
            .and_then(|i| self.new_to_old.get(i).copied().flatten())
    }

    /// Mapped `(old, new)` pairs in ascending order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.old_to_new
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.map(|n| (i + 1, n)))
    }

    pub fn len(&self) -> usize {
        self.pairs().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn old_len(&self) -> usize {
        self.old_to_new.len()
    }

    pub fn new_len(&self) -> usize {
        self.new_to_old.len()
    }
}
