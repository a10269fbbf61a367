use serde::{Deserialize, Serialize};

use crate::spaces::VectorSpace;

use super::Pattern;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingMethod {
    GeometricNestedDissection,
    Natural,
}

/// Symmetric permutation, `perm[new] = old`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    pub perm: Vec<usize>,
    pub inverse: Vec<usize>,
    pub method: OrderingMethod,
    /// Indices (pre-permutation) of the first-level separator, empty for natural.
    pub top_separator: Vec<usize>,
}

impl Ordering {
    pub fn natural(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
            inverse: (0..n).collect(),
            method: OrderingMethod::Natural,
            top_separator: Vec::new(),
        }
    }

    pub fn from_perm(perm: Vec<usize>, method: OrderingMethod) -> Self {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        Self {
            perm,
            inverse,
            method,
            top_separator: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.perm.len()];
        for &p in &self.perm {
            if p >= seen.len() || seen[p] {
                return false;
            }
            seen[p] = true;
        }
        true
    }

    /// One index per line, 0-based, in elimination order.
    pub fn write_text(&self, path: &std::path::Path) -> std::io::Result<()> {
        let mut s = String::with_capacity(self.perm.len() * 7);
        for p in &self.perm {
            s.push_str(&p.to_string());
            s.push('\n');
        }
        std::fs::write(path, s)
    }
}

#[derive(Clone, Copy)]
struct Support {
    x: (usize, usize),
    y: (usize, usize),
}

/// Recursive bisection of the element rectangle. Unknown `r` is the space DOF
/// `dofs[r]`; a cut at breakpoint `c` sends every unknown whose support has
/// elements on both sides to the separator, which is numbered after both halves.
pub fn nested_dissection_order(space: &VectorSpace, dofs: &[usize]) -> Ordering {
    nested_dissection_with_leaf(space, dofs, 8)
}

pub fn nested_dissection_with_leaf(space: &VectorSpace, dofs: &[usize], leaf: usize) -> Ordering {
    let supports: Vec<Support> = dofs
        .iter()
        .map(|&d| {
            let (c, i, j) = space.locate(d);
            let t = &space.comps[c];
            Support {
                x: t.sx.knot_vector().support_elements(i),
                y: t.sy.knot_vector().support_elements(j),
            }
        })
        .collect();
    let ne = space.elements;
    let mut perm = Vec::with_capacity(dofs.len());
    let mut top = None;
    let all: Vec<usize> = (0..dofs.len()).collect();
    // explicit stack: (unknowns, box, stage)
    enum Job {
        Split(Vec<usize>, [usize; 4], bool),
        Emit(Vec<usize>),
    }
    let mut stack = vec![Job::Split(all, [0, ne, 0, ne], true)];
    while let Some(job) = stack.pop() {
        match job {
            Job::Emit(v) => perm.extend(v),
            Job::Split(set, b, is_top) => {
                let [x0, x1, y0, y1] = b;
                let (wx, wy) = (x1 - x0, y1 - y0);
                if set.len() <= leaf || (wx < 2 && wy < 2) {
                    perm.extend(set);
                    if is_top {
                        top = Some(Vec::new());
                    }
                    continue;
                }
                let cut_x = wx >= wy;
                let c = if cut_x { x0 + wx / 2 } else { y0 + wy / 2 };
                let (mut lo, mut hi, mut sep) = (Vec::new(), Vec::new(), Vec::new());
                for r in set {
                    let (a, z) = if cut_x { supports[r].x } else { supports[r].y };
                    if z < c {
                        lo.push(r);
                    } else if a >= c {
                        hi.push(r);
                    } else {
                        sep.push(r);
                    }
                }
                if is_top {
                    top = Some(sep.clone());
                }
                let (blo, bhi) = if cut_x {
                    ([x0, c, y0, y1], [c, x1, y0, y1])
                } else {
                    ([x0, x1, y0, c], [x0, x1, c, y1])
                };
                stack.push(Job::Emit(sep));
                stack.push(Job::Split(hi, bhi, false));
                stack.push(Job::Split(lo, blo, false));
            }
        }
    }
    let mut ord = Ordering::from_perm(perm, OrderingMethod::GeometricNestedDissection);
    ord.top_separator = top.unwrap_or_default();
    ord
}

/// Elimination tree of a structurally symmetric pattern (`NONE` marks roots).
pub fn elimination_tree(p: &Pattern) -> Vec<usize> {
    let n = p.n();
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for i in 0..n {
        for &j in p.row(i) {
            let mut r = j as usize;
            if r >= i {
                break;
            }
            while ancestor[r] != NONE && ancestor[r] != i {
                let next = ancestor[r];
                ancestor[r] = i;
                r = next;
            }
            if ancestor[r] == NONE {
                ancestor[r] = i;
                parent[r] = i;
            }
        }
    }
    parent
}

/// Column counts of the Cholesky factor (diagonal included), by row subtrees.
fn column_counts(p: &Pattern, parent: &[usize]) -> Vec<usize> {
    let n = p.n();
    let mut mark = vec![NONE; n];
    let mut count = vec![1usize; n];
    for i in 0..n {
        mark[i] = i;
        for &j in p.row(i) {
            let mut k = j as usize;
            if k >= i {
                break;
            }
            while mark[k] != i {
                count[k] += 1;
                mark[k] = i;
                k = parent[k];
            }
        }
    }
    count
}

/// Lower-factor nnz (diagonal included) of `P A Pᵀ` for a symmetric pattern.
pub fn cholesky_factor_nnz(p: &Pattern, ord: &Ordering) -> usize {
    let pp = p.permuted(&ord.perm);
    let parent = elimination_tree(&pp);
    column_counts(&pp, &parent).iter().sum()
}

/// Supernodal structure of the permuted pattern.
#[derive(Debug, Clone)]
pub struct Symbolic {
    pub n: usize,
    pub ordering: Ordering,
    pub parent: Vec<usize>,
    pub colcount: Vec<usize>,
    /// Supernode `s` owns columns `sn_start[s]..sn_start[s + 1]`.
    pub sn_start: Vec<usize>,
    /// Row indices below the diagonal block, ascending.
    pub sn_rows: Vec<Vec<u32>>,
    pub sn_parent: Vec<usize>,
    /// Lower-factor nnz including the diagonal.
    pub nnz_l: usize,
}

impl Symbolic {
    pub fn supernodes(&self) -> usize {
        self.sn_start.len() - 1
    }

    pub fn front_size(&self, s: usize) -> (usize, usize) {
        (self.sn_start[s + 1] - self.sn_start[s], self.sn_rows[s].len())
    }

    /// Exact multiply-add count of the partial dense LU of every front.
    pub fn factor_madds(&self) -> u64 {
        (0..self.supernodes())
            .map(|s| {
                let (k, r) = self.front_size(s);
                front_madds(k, r)
            })
            .sum()
    }

    /// Multiply-adds of one solve with `L` and `U` (diagonals included).
    pub fn solve_madds(&self) -> u64 {
        2 * self.nnz_l as u64
    }

    pub fn max_front(&self) -> usize {
        (0..self.supernodes())
            .map(|s| {
                let (k, r) = self.front_size(s);
                k + r
            })
            .max()
            .unwrap_or(0)
    }
}

/// `Σ_t (nf - t - 1)² + (nf - t - 1)` for `t < k`, `nf = k + r`.
pub(crate) fn front_madds(k: usize, r: usize) -> u64 {
    let nf = (k + r) as u64;
    (0..k as u64).map(|t| (nf - t - 1) * (nf - t - 1) + (nf - t - 1)).sum()
}

/// Elimination tree, column counts and fundamental supernodes of `P A Pᵀ`.
pub fn symbolic_factor(p: &Pattern, ord: &Ordering) -> Symbolic {
    let n = p.n();
    let pp = p.permuted(&ord.perm);
    let parent = elimination_tree(&pp);
    let colcount = column_counts(&pp, &parent);
    let mut nchild = vec![0usize; n];
    for &q in &parent {
        if q != NONE {
            nchild[q] += 1;
        }
    }
    let mut sn_start = vec![0usize];
    for j in 1..n {
        let merge = parent[j - 1] == j && nchild[j] == 1 && colcount[j - 1] == colcount[j] + 1;
        if !merge {
            sn_start.push(j);
        }
    }
    if n > 0 {
        sn_start.push(n);
    }
    let nsn = sn_start.len() - 1;
    let mut col_sn = vec![0usize; n];
    for s in 0..nsn {
        for c in sn_start[s]..sn_start[s + 1] {
            col_sn[c] = s;
        }
    }
    let sn_parent: Vec<usize> = (0..nsn)
        .map(|s| {
            let last = sn_start[s + 1] - 1;
            if parent[last] == NONE {
                NONE
            } else {
                col_sn[parent[last]]
            }
        })
        .collect();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); nsn];
    for s in 0..nsn {
        if sn_parent[s] != NONE {
            children[sn_parent[s]].push(s);
        }
    }
    let mut sn_rows: Vec<Vec<u32>> = vec![Vec::new(); nsn];
    let mut mark = vec![NONE; n];
    for s in 0..nsn {
        let (f, l) = (sn_start[s], sn_start[s + 1] - 1);
        let mut rows = Vec::new();
        for c in f..=l {
            for &r in pp.row(c) {
                let r = r as usize;
                if r > l && mark[r] != s {
                    mark[r] = s;
                    rows.push(r as u32);
                }
            }
        }
        for &ch in &children[s] {
            for &r in &sn_rows[ch] {
                let r = r as usize;
                if r > l && mark[r] != s {
                    mark[r] = s;
                    rows.push(r as u32);
                }
            }
        }
        rows.sort_unstable();
        debug_assert_eq!(rows.len() + 1, colcount[l]);
        sn_rows[s] = rows;
    }
    let nnz_l = colcount.iter().sum();
    Symbolic {
        n,
        ordering: ord.clone(),
        parent,
        colcount,
        sn_start,
        sn_rows,
        sn_parent,
        nnz_l,
    }
}
