//! Groups, prediction buckets, and the (group, bucket) cell grid.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Groups as the cross product of categorical columns; no columns means a
/// single group.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupSpec {
    pub columns: Vec<String>,
}

impl GroupSpec {
    pub fn none() -> Self {
        GroupSpec { columns: vec![] }
    }

    pub fn cross<S: AsRef<str>>(cols: &[S]) -> Self {
        GroupSpec { columns: cols.iter().map(|c| c.as_ref().to_string()).collect() }
    }

    /// Resolves column names against `data`.
    pub fn layout(&self, data: &Dataset) -> Result<GroupLayout> {
        let mut sizes = Vec::with_capacity(self.columns.len());
        for name in &self.columns {
            let j = data.cat_index(name).ok_or_else(|| {
                if data.cont_index(name).is_some() {
                    Error::config("groups", format!("column `{name}` is not categorical"))
                } else {
                    Error::config("groups", format!("unknown column `{name}`"))
                }
            })?;
            sizes.push(data.n_levels(j));
        }
        Ok(GroupLayout { columns: self.columns.clone(), sizes })
    }
}

/// A resolved group structure: column names and their level counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupLayout {
    pub columns: Vec<String>,
    pub sizes: Vec<usize>,
}

impl GroupLayout {
    pub fn n_groups(&self) -> usize {
        self.sizes.iter().product()
    }

    /// Row-major group id of every row: id = Σ code_j · Π_{k>j} K_k.
    pub fn assign(&self, data: &Dataset) -> Result<Vec<u32>> {
        let mut ids = vec![0u32; data.n()];
        for (name, &k) in self.columns.iter().zip(&self.sizes) {
            let j = data
                .cat_index(name)
                .ok_or_else(|| Error::Schema(format!("group column `{name}` missing")))?;
            if data.n_levels(j) > k {
                return Err(Error::Schema(format!("group column `{name}` has more levels than recorded")));
            }
            for (id, &c) in ids.iter_mut().zip(&data.cat[j]) {
                *id = *id * k as u32 + c;
            }
        }
        Ok(ids)
    }
}

pub fn assign_groups(data: &Dataset, spec: &GroupSpec) -> Result<Vec<u32>> {
    spec.layout(data)?.assign(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// Buckets of the current iterate f⁽ᵇ⁾.
    #[default]
    Dynamic,
    /// Buckets of the initial predictor f⁽⁰⁾.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketRange {
    /// [min, max] of the anchor predictions.
    #[default]
    Auto,
    Fixed { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(default)]
    pub range: BucketRange,
    #[serde(default)]
    pub anchor: Anchor,
    #[serde(default)]
    pub directional: bool,
}

impl Default for BucketSpec {
    fn default() -> Self {
        BucketSpec { l: 1, range: BucketRange::Auto, anchor: Anchor::Dynamic, directional: false }
    }
}

impl BucketSpec {
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::config("buckets.L", "must be at least 1"));
        }
        if let BucketRange::Fixed { lo, hi } = self.range {
            if !(lo < hi) {
                return Err(Error::config("buckets.range", "needs lo < hi"));
            }
        }
        Ok(())
    }

    /// Number of bucket ids per group.
    pub fn n_ids(&self) -> usize {
        if self.directional {
            2 * self.l
        } else {
            self.l
        }
    }

    /// Concrete grid for the given anchor predictions.
    pub fn grid(&self, anchor: &[f64]) -> Result<BucketGrid> {
        check_finite(anchor)?;
        let (lo, hi) = match self.range {
            BucketRange::Fixed { lo, hi } => (lo, hi),
            BucketRange::Auto => {
                if anchor.is_empty() {
                    return Err(Error::data("cannot derive bucket range from zero predictions"));
                }
                anchor.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
            }
        };
        Ok(BucketGrid { lo, hi, n: self.l })
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| x.is_nan()) {
        Some(i) => Err(Error::data(format!("NaN prediction at row {}", i + 1))),
        None => Ok(()),
    }
}

/// L equal-width buckets on [lo, hi]. Bucket l (0-based) is
/// (edge_l, edge_{l+1}] except bucket 0, which also contains lo; values
/// outside the range clamp to the end buckets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl BucketGrid {
    /// edge_l = lo + l(hi − lo)/n for l = 0..=n.
    pub fn edge(&self, l: usize) -> f64 {
        self.lo + l as f64 * (self.hi - self.lo) / self.n as f64
    }

    pub fn bucket(&self, v: f64) -> usize {
        if self.n <= 1 || !(self.hi > self.lo) {
            return 0;
        }
        let w = (self.hi - self.lo) / self.n as f64;
        let guess = ((v - self.lo) / w).ceil() - 1.0;
        let mut l = if guess.is_nan() { 0 } else { guess.clamp(0.0, (self.n - 1) as f64) as usize };
        // Settle rounding so membership agrees with the edge formula exactly.
        while l > 0 && v <= self.edge(l) {
            l -= 1;
        }
        while l + 1 < self.n && v > self.edge(l + 1) {
            l += 1;
        }
        l
    }

    pub fn bucketize(&self, f: &[f64]) -> Vec<u32> {
        f.iter().map(|&v| self.bucket(v) as u32).collect()
    }
}

pub fn bucketize(predictions: &[f64], spec: &BucketSpec) -> Result<Vec<u32>> {
    spec.validate()?;
    Ok(spec.grid(predictions)?.bucketize(predictions))
}

/// Directional masks: ids 0..L are S_l^≤ = {f ≤ edge_l}, ids L..2L are
/// S_l^≥ = {f ≥ edge_l}, for l = 1..=L.
pub fn directional_buckets(predictions: &[f64], spec: &BucketSpec) -> Result<Vec<(usize, Vec<bool>)>> {
    spec.validate()?;
    let grid = spec.grid(predictions)?;
    let mut out = Vec::with_capacity(2 * spec.l);
    for id in 0..2 * spec.l {
        let sel = BucketSelector::from_id(id, spec.l, true);
        out.push((id, predictions.iter().map(|&v| sel.contains(&grid, v)).collect()));
    }
    Ok(out)
}

/// Which part of the bucket axis a cell covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketSelector {
    All,
    Bucket(usize),
    /// f ≤ edge_l, l in 1..=L.
    AtMost(usize),
    /// f ≥ edge_l, l in 1..=L.
    AtLeast(usize),
    /// Snapped value equals k/L (grid of the selector's own resolution).
    GridPoint { k: usize, l: usize },
}

impl BucketSelector {
    pub fn from_id(id: usize, l: usize, directional: bool) -> Self {
        if !directional {
            if l == 1 {
                BucketSelector::All
            } else {
                BucketSelector::Bucket(id)
            }
        } else if id < l {
            BucketSelector::AtMost(id + 1)
        } else {
            BucketSelector::AtLeast(id - l + 1)
        }
    }

    pub fn contains(&self, grid: &BucketGrid, v: f64) -> bool {
        match *self {
            BucketSelector::All => true,
            BucketSelector::Bucket(b) => grid.bucket(v) == b,
            BucketSelector::AtMost(l) => v <= grid.edge(l),
            BucketSelector::AtLeast(l) => v >= grid.edge(l),
            BucketSelector::GridPoint { k, l } => snap_index(v, l) == k,
        }
    }
}

/// Replayable cell definition: a group (or all rows) intersected with a
/// bucket selection of the anchor predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRule {
    pub groups: GroupLayout,
    pub group_id: u32,
    pub grid: BucketGrid,
    pub selector: BucketSelector,
    pub anchor: Anchor,
}

impl CellRule {
    /// Membership mask given precomputed group ids and anchor predictions.
    pub fn mask(&self, group_ids: &[u32], anchor: &[f64]) -> Vec<bool> {
        group_ids
            .iter()
            .zip(anchor)
            .map(|(&g, &v)| g == self.group_id && self.selector.contains(&self.grid, v))
            .collect()
    }
}

/// Cell identity inside one boosting round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub group_id: u32,
    pub bucket_id: u32,
}

/// Index k of the nearest point k/L of the grid {0, 1/L, …, 1}; `v` is
/// clamped to [0, 1] and exact midpoints round down.
pub fn snap_index(v: f64, l: usize) -> usize {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let k = (v * l as f64 - 0.5).ceil();
    k.clamp(0.0, l as f64) as usize
}

pub fn snap_to_grid(v: f64, l: usize) -> f64 {
    snap_index(v, l) as f64 / l as f64
}
