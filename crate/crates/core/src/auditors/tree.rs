//! CART regression trees shared by the tree auditor and the forests.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::rng::open_unit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Left when x ≤ threshold.
    Cont { col: usize, threshold: f64 },
    /// Left when the code equals `level` (one-vs-rest).
    CatEq { col: usize, level: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default)]
    pub left: u32,
    #[serde(default)]
    pub right: u32,
    pub value: f64,
    pub n: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, data: &Dataset, i: usize) -> usize {
        let mut k = 0usize;
        loop {
            let node = &self.nodes[k];
            let go_left = match node.split {
                None => return k,
                Some(Split::Cont { col, threshold }) => data.cont[col][i] <= threshold,
                Some(Split::CatEq { col, level }) => data.cat[col][i] == level,
            };
            k = if go_left { node.left } else { node.right } as usize;
        }
    }

    pub fn predict_row(&self, data: &Dataset, i: usize) -> f64 {
        self.nodes[self.leaf_index(data, i)].value
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &Tree, k: usize) -> usize {
            match t.nodes[k].split {
                None => 0,
                Some(_) => 1 + rec(t, t.nodes[k].left as usize).max(rec(t, t.nodes[k].right as usize)),
            }
        }
        rec(self, 0)
    }

    /// Highest continuous and categorical column referenced, for schema checks.
    pub fn max_cols(&self) -> (Option<usize>, Option<usize>) {
        let (mut c, mut d) = (None, None);
        for n in &self.nodes {
            match n.split {
                Some(Split::Cont { col, .. }) => c = c.max(Some(col)),
                Some(Split::CatEq { col, .. }) => d = d.max(Some(col)),
                None => {}
            }
        }
        (c, d)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub include_categorical: bool,
    /// Features tried per split; `None` tries all.
    pub mtry: Option<usize>,
}

/// Fitted tree plus, for each leaf node id, the sample rows it holds.
pub struct CartFit {
    pub tree: Tree,
    pub leaf_rows: Vec<(usize, Vec<usize>)>,
}

#[derive(Clone, Copy)]
enum Feat {
    Cont(usize),
    Cat(usize, usize),
}

struct Builder<'a, R> {
    data: &'a Dataset,
    t: &'a [f64],
    p: CartParams,
    feats: Vec<Feat>,
    /// One row-id array per continuous feature, sorted by value within each
    /// node's range.
    sorted: Vec<Vec<usize>>,
    members: Vec<usize>,
    go_left: Vec<bool>,
    scratch: Vec<usize>,
    nodes: Vec<Node>,
    leaf_rows: Vec<(usize, Vec<usize>)>,
    keep_leaf_rows: bool,
    rng: Option<&'a mut R>,
}

/// Fits a CART tree to targets `t` (indexed by data row) on `rows`, which may
/// contain repeats (bootstrap). Ties between equal-gain splits go to the
/// lowest feature index (continuous before categorical), then the smallest
/// threshold or level.
pub fn fit_cart<R: Rng>(
    data: &Dataset,
    t: &[f64],
    rows: &[usize],
    p: CartParams,
    rng: Option<&mut R>,
    keep_leaf_rows: bool,
) -> CartFit {
    let mut feats: Vec<Feat> = (0..data.cont.len()).map(Feat::Cont).collect();
    if p.include_categorical {
        feats.extend((0..data.cat.len()).map(|j| Feat::Cat(j, data.n_levels(j))));
    }
    let sorted = (0..data.cont.len())
        .map(|j| {
            let mut v = rows.to_vec();
            let col = &data.cont[j];
            v.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            v
        })
        .collect();
    let mut b = Builder {
        data,
        t,
        p,
        feats,
        sorted,
        members: rows.to_vec(),
        go_left: vec![false; data.n()],
        scratch: Vec::with_capacity(rows.len()),
        nodes: Vec::new(),
        leaf_rows: Vec::new(),
        keep_leaf_rows,
        rng,
    };
    b.build(0, rows.len(), 0);
    CartFit { tree: Tree { nodes: b.nodes }, leaf_rows: b.leaf_rows }
}

struct Best {
    gain: f64,
    split: Split,
    n_left: usize,
}

impl<R: Rng> Builder<'_, R> {
    fn build(&mut self, a: usize, b: usize, depth: usize) -> u32 {
        let m = b - a;
        let (mut s, mut ss) = (0.0, 0.0);
        for &r in &self.members[a..b] {
            s += self.t[r];
            ss += self.t[r] * self.t[r];
        }
        let value = if m > 0 { s / m as f64 } else { 0.0 };
        let id = self.nodes.len();
        self.nodes.push(Node { split: None, left: 0, right: 0, value, n: m as u32 });

        let can_split = depth < self.p.max_depth && m >= 2 * self.p.min_leaf.max(1);
        let best = if can_split { self.best_split(a, b, s) } else { None };
        match best {
            Some(best) if best.gain > 1e-12 * ss.max(f64::MIN_POSITIVE) => {
                self.partition(a, b, &best);
                let mid = a + best.n_left;
                let left = self.build(a, mid, depth + 1);
                let right = self.build(mid, b, depth + 1);
                let node = &mut self.nodes[id];
                node.split = Some(best.split);
                node.left = left;
                node.right = right;
            }
            _ => {
                if self.keep_leaf_rows {
                    self.leaf_rows.push((id, self.members[a..b].to_vec()));
                }
            }
        }
        id as u32
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.feats.len();
        match (self.p.mtry, self.rng.as_deref_mut()) {
            (Some(k), Some(rng)) if k < d => {
                // Partial Fisher-Yates, then restore index order so tie-breaking
                // stays by lowest feature index.
                let mut idx: Vec<usize> = (0..d).collect();
                for i in 0..k {
                    let j = i + ((open_unit(rng) * (d - i) as f64) as usize).min(d - i - 1);
                    idx.swap(i, j);
                }
                let mut pick = idx[..k].to_vec();
                pick.sort_unstable();
                pick
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, a: usize, b: usize, total: f64) -> Option<Best> {
        let m = b - a;
        let min_leaf = self.p.min_leaf.max(1);
        let base = total * total / m as f64;
        let mut best: Option<Best> = None;
        let consider = |gain: f64, split: Split, n_left: usize, best: &mut Option<Best>| {
            if best.as_ref().map_or(true, |bb| gain > bb.gain) {
                *best = Some(Best { gain, split, n_left });
            }
        };
        for fi in self.candidate_features() {
            match self.feats[fi] {
                Feat::Cont(col) => {
                    let x = &self.data.cont[col];
                    let rows = &self.sorted[col][a..b];
                    let mut sl = 0.0;
                    for k in 0..m - 1 {
                        sl += self.t[rows[k]];
                        let nl = k + 1;
                        let (xl, xr) = (x[rows[k]], x[rows[k + 1]]);
                        if xl == xr || nl < min_leaf || m - nl < min_leaf {
                            continue;
                        }
                        let sr = total - sl;
                        let gain = sl * sl / nl as f64 + sr * sr / (m - nl) as f64 - base;
                        let threshold = xl + (xr - xl) / 2.0;
                        consider(gain, Split::Cont { col, threshold }, nl, &mut best);
                    }
                }
                Feat::Cat(col, k) => {
                    let codes = &self.data.cat[col];
                    let mut sums = vec![0.0; k];
                    let mut counts = vec![0usize; k];
                    for &r in &self.members[a..b] {
                        sums[codes[r] as usize] += self.t[r];
                        counts[codes[r] as usize] += 1;
                    }
                    for level in 0..k {
                        let nl = counts[level];
                        if nl < min_leaf || m - nl < min_leaf {
                            continue;
                        }
                        let (sl, sr) = (sums[level], total - sums[level]);
                        let gain = sl * sl / nl as f64 + sr * sr / (m - nl) as f64 - base;
                        consider(gain, Split::CatEq { col, level: level as u32 }, nl, &mut best);
                    }
                }
            }
        }
        best
    }

    fn goes_left(&self, split: &Split, r: usize) -> bool {
        match *split {
            Split::Cont { col, threshold } => self.data.cont[col][r] <= threshold,
            Split::CatEq { col, level } => self.data.cat[col][r] == level,
        }
    }

    fn partition(&mut self, a: usize, b: usize, best: &Best) {
        for k in a..b {
            let r = self.members[k];
            self.go_left[r] = self.goes_left(&best.split, r);
        }
        let go_left = &self.go_left;
        let scratch = &mut self.scratch;
        let mut stable = |v: &mut [usize]| {
            scratch.clear();
            let mut w = 0;
            for k in 0..v.len() {
                if go_left[v[k]] {
                    v[w] = v[k];
                    w += 1;
                } else {
                    scratch.push(v[k]);
                }
            }
            v[w..].copy_from_slice(scratch);
        };
        stable(&mut self.members[a..b]);
        for s in &mut self.sorted {
            stable(&mut s[a..b]);
        }
    }
}
