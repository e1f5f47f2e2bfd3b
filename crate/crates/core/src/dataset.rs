//! Column-typed tables, CSV ingestion, and seeded splitting.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::rng::splitmix64;

/// Role of a CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Cont,
    Cat,
    Y,
    Weight,
    /// Carried along but never used as a feature (truth columns, stored
    /// predictions).
    Aux,
}

impl Role {
    fn prefix(self) -> &'static str {
        match self {
            Role::Cont => "cont",
            Role::Cat => "cat",
            Role::Y => "y",
            Role::Weight => "weight",
            Role::Aux => "aux",
        }
    }
}

/// Ordered column-role map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<(String, Role)>,
}

impl Schema {
    /// Parses `cont:x1,cat:x6,y:y,weight:w,aux:f_star`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (role, name) = item
                .split_once(':')
                .ok_or_else(|| Error::config("schema", format!("`{item}` lacks a role prefix")))?;
            let role = match role {
                "cont" => Role::Cont,
                "cat" => Role::Cat,
                "y" => Role::Y,
                "weight" => Role::Weight,
                "aux" => Role::Aux,
                other => {
                    return Err(Error::config("schema", format!("unknown role `{other}`")))
                }
            };
            columns.push((name.to_string(), role));
        }
        let schema = Schema { columns };
        schema.validate()?;
        Ok(schema)
    }

    /// Role assignment used when no schema is supplied: `y` is the outcome,
    /// `weight` the weight, `x6`/`x7` categorical, other `x*` continuous, and
    /// anything else auxiliary.
    pub fn infer(header: &[String]) -> Result<Self> {
        let columns = header
            .iter()
            .map(|h| {
                let role = match h.as_str() {
                    "y" => Role::Y,
                    "weight" => Role::Weight,
                    "x6" | "x7" => Role::Cat,
                    s if s.starts_with('x') => Role::Cont,
                    _ => Role::Aux,
                };
                (h.clone(), role)
            })
            .collect();
        let schema = Schema { columns };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        let ys = self.columns.iter().filter(|c| c.1 == Role::Y).count();
        if ys != 1 {
            return Err(Error::config("schema", format!("need exactly one outcome column, found {ys}")));
        }
        if self.columns.iter().filter(|c| c.1 == Role::Weight).count() > 1 {
            return Err(Error::config("schema", "at most one weight column"));
        }
        let mut seen = std::collections::HashSet::new();
        for (name, _) in &self.columns {
            if !seen.insert(name) {
                return Err(Error::config("schema", format!("column `{name}` listed twice")));
            }
        }
        Ok(())
    }

    pub fn to_spec_string(&self) -> String {
        self.columns
            .iter()
            .map(|(n, r)| format!("{}:{n}", r.prefix()))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Immutable column-major table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub cont_names: Vec<String>,
    pub cont: Vec<Vec<f64>>,
    pub cat_names: Vec<String>,
    pub cat: Vec<Vec<u32>>,
    /// Original label of each dense code, per categorical column.
    pub cat_levels: Vec<Vec<String>>,
    pub y_name: String,
    pub y: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub aux_names: Vec<String>,
    pub aux: Vec<Vec<f64>>,
}

/// Feature layout that auditors and baselines key on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub cont: Vec<String>,
    pub cat: Vec<(String, Vec<String>)>,
}

impl FeatureSchema {
    /// Checks that `data` exposes the same feature columns and levels.
    pub fn check(&self, data: &Dataset) -> Result<()> {
        let other = data.feature_schema();
        if self.cont != other.cont {
            return Err(Error::Schema(format!(
                "continuous columns {:?} expected, found {:?}",
                self.cont, other.cont
            )));
        }
        for ((n, lv), (m, lw)) in self.cat.iter().zip(&other.cat) {
            if n != m || lw.len() > lv.len() || lv[..lw.len()] != lw[..] {
                return Err(Error::Schema(format!("categorical column `{n}` levels differ")));
            }
        }
        if self.cat.len() != other.cat.len() {
            return Err(Error::Schema("categorical column count differs".into()));
        }
        Ok(())
    }
}

impl Dataset {
    /// Builds a dataset from columns, validating lengths and weights.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cont_names: Vec<String>,
        cont: Vec<Vec<f64>>,
        cat_names: Vec<String>,
        cat: Vec<Vec<u32>>,
        y: Vec<f64>,
    ) -> Result<Self> {
        let cat_levels = cat
            .iter()
            .map(|c| {
                let k = c.iter().copied().max().map_or(0, |m| m as usize + 1);
                (0..k).map(|i| i.to_string()).collect()
            })
            .collect();
        let d = Dataset {
            cont_names,
            cont,
            cat_names,
            cat,
            cat_levels,
            y_name: "y".into(),
            y,
            weights: None,
            aux_names: vec![],
            aux: vec![],
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Result<Self> {
        self.weights = Some(w);
        self.validate()?;
        Ok(self)
    }

    pub fn with_aux(mut self, name: &str, col: Vec<f64>) -> Result<Self> {
        check_len(self.n(), col.len())?;
        if let Some(i) = self.aux_names.iter().position(|n| n == name) {
            self.aux[i] = col;
        } else {
            self.aux_names.push(name.to_string());
            self.aux.push(col);
        }
        Ok(self)
    }

    /// Declares the number of levels of categorical column `j` (for columns
    /// where some levels may be absent from this sample).
    pub fn with_levels(mut self, j: usize, k: usize) -> Self {
        self.cat_levels[j] = (0..k).map(|i| i.to_string()).collect();
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        check_len(self.cont_names.len(), self.cont.len())?;
        check_len(self.cat_names.len(), self.cat.len())?;
        for c in &self.cont {
            check_len(n, c.len())?;
        }
        for (j, c) in self.cat.iter().enumerate() {
            check_len(n, c.len())?;
            let k = self.cat_levels[j].len() as u32;
            if c.iter().any(|&v| v >= k) {
                return Err(Error::data(format!("column `{}` has codes outside its levels", self.cat_names[j])));
            }
        }
        if let Some(w) = &self.weights {
            check_len(n, w.len())?;
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::data("weights must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_levels(&self, j: usize) -> usize {
        self.cat_levels[j].len()
    }

    pub fn feature_schema(&self) -> FeatureSchema {
        FeatureSchema {
            cont: self.cont_names.clone(),
            cat: self
                .cat_names
                .iter()
                .cloned()
                .zip(self.cat_levels.iter().cloned())
                .collect(),
        }
    }

    pub fn cat_index(&self, name: &str) -> Option<usize> {
        self.cat_names.iter().position(|n| n == name)
    }

    pub fn cont_index(&self, name: &str) -> Option<usize> {
        self.cont_names.iter().position(|n| n == name)
    }

    pub fn aux_col(&self, name: &str) -> Option<&[f64]> {
        self.aux_names.iter().position(|n| n == name).map(|i| &self.aux[i][..])
    }

    /// Looks up a numeric column of any role by name (categoricals by code).
    pub fn numeric_col(&self, name: &str) -> Option<Vec<f64>> {
        if let Some(j) = self.cont_index(name) {
            return Some(self.cont[j].clone());
        }
        if let Some(j) = self.cat_index(name) {
            return Some(self.cat[j].iter().map(|&c| c as f64).collect());
        }
        if name == self.y_name {
            return Some(self.y.clone());
        }
        self.aux_col(name).map(<[f64]>::to_vec)
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let pick = |c: &Vec<f64>| idx.iter().map(|&i| c[i]).collect::<Vec<_>>();
        Dataset {
            cont_names: self.cont_names.clone(),
            cont: self.cont.iter().map(pick).collect(),
            cat_names: self.cat_names.clone(),
            cat: self.cat.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            cat_levels: self.cat_levels.clone(),
            y_name: self.y_name.clone(),
            y: pick(&self.y),
            weights: self.weights.as_ref().map(pick),
            aux_names: self.aux_names.clone(),
            aux: self.aux.iter().map(pick).collect(),
        }
    }

    /// Row-wise concatenation of datasets with identical layouts.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::data("nothing to concatenate"))?;
        let mut out = (*first).clone();
        for p in &parts[1..] {
            if p.cont_names != out.cont_names || p.cat_names != out.cat_names || p.aux_names != out.aux_names {
                return Err(Error::Schema("concatenated datasets differ in layout".into()));
            }
            for (a, b) in out.cont.iter_mut().zip(&p.cont) {
                a.extend_from_slice(b);
            }
            for (a, b) in out.cat.iter_mut().zip(&p.cat) {
                a.extend_from_slice(b);
            }
            for (a, b) in out.aux.iter_mut().zip(&p.aux) {
                a.extend_from_slice(b);
            }
            out.y.extend_from_slice(&p.y);
            match (&mut out.weights, &p.weights) {
                (Some(a), Some(b)) => a.extend_from_slice(b),
                (None, None) => {}
                _ => return Err(Error::Schema("weights present in only some parts".into())),
            }
        }
        Ok(out)
    }

    /// Loads a CSV with a header row. Categorical levels are recoded to dense
    /// codes (numeric order when every level parses as a number).
    pub fn load_csv(path: &Path, schema: Option<&Schema>) -> Result<Dataset> {
        Self::load_impl(path, schema, None)
    }

    /// As [`load_csv`](Self::load_csv) but reuses the categorical level
    /// mapping of `reference` so codes agree across files.
    pub fn load_csv_aligned(path: &Path, schema: Option<&Schema>, reference: &FeatureSchema) -> Result<Dataset> {
        Self::load_impl(path, schema, Some(reference))
    }

    fn load_impl(path: &Path, schema: Option<&Schema>, reference: Option<&FeatureSchema>) -> Result<Dataset> {
        let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_reader(file, schema, reference)
    }

    pub fn from_reader<R: std::io::Read>(
        reader: R,
        schema: Option<&Schema>,
        reference: Option<&FeatureSchema>,
    ) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let inferred;
        let schema = match schema {
            Some(s) => s,
            None => {
                inferred = Schema::infer(&header)?;
                &inferred
            }
        };
        let mut pos = Vec::with_capacity(schema.columns.len());
        for (name, role) in &schema.columns {
            let i = header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
            pos.push((i, *role, name.clone()));
        }
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); pos.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (k, (i, _, name)) in pos.iter().enumerate() {
                let cell = rec.get(*i).ok_or_else(|| Error::Parse {
                    row: row + 1,
                    column: name.clone(),
                    message: "missing field".into(),
                })?;
                raw[k].push(cell.to_string());
            }
        }
        if raw.first().map_or(true, Vec::is_empty) {
            return Err(Error::data("empty dataset"));
        }

        let num = |k: usize| -> Result<Vec<f64>> {
            raw[k]
                .iter()
                .enumerate()
                .map(|(r, s)| {
                    s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                        row: r + 1,
                        column: pos[k].2.clone(),
                        message: format!("`{s}` is not a finite number"),
                    })
                })
                .collect()
        };

        let mut d = Dataset {
            cont_names: vec![],
            cont: vec![],
            cat_names: vec![],
            cat: vec![],
            cat_levels: vec![],
            y_name: String::new(),
            y: vec![],
            weights: None,
            aux_names: vec![],
            aux: vec![],
        };
        for (k, (_, role, name)) in pos.iter().enumerate() {
            match role {
                Role::Cont => {
                    d.cont_names.push(name.clone());
                    d.cont.push(num(k)?);
                }
                Role::Y => {
                    d.y_name = name.clone();
                    d.y = num(k)?;
                }
                Role::Weight => d.weights = Some(num(k)?),
                Role::Aux => {
                    d.aux_names.push(name.clone());
                    d.aux.push(num(k)?);
                }
                Role::Cat => {
                    let levels = match reference.and_then(|r| r.cat.iter().find(|c| &c.0 == name)) {
                        Some((_, lv)) => lv.clone(),
                        None => sorted_levels(&raw[k]),
                    };
                    let map: HashMap<&str, u32> =
                        levels.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect();
                    let codes = raw[k]
                        .iter()
                        .enumerate()
                        .map(|(r, s)| {
                            map.get(s.as_str()).copied().ok_or_else(|| Error::Parse {
                                row: r + 1,
                                column: name.clone(),
                                message: format!("unseen level `{s}`"),
                            })
                        })
                        .collect::<Result<Vec<u32>>>()?;
                    d.cat_names.push(name.clone());
                    d.cat.push(codes);
                    d.cat_levels.push(levels);
                }
            }
        }
        d.validate()?;
        Ok(d)
    }

    /// Writes the table as CSV. Floats use the shortest representation that
    /// parses back to the same bits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = Vec::new();
        header.extend(self.cont_names.iter().map(String::as_str));
        header.extend(self.cat_names.iter().map(String::as_str));
        header.push(&self.y_name);
        if self.weights.is_some() {
            header.push("weight");
        }
        header.extend(self.aux_names.iter().map(String::as_str));
        wtr.write_record(&header)?;
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            rec.clear();
            rec.extend(self.cont.iter().map(|c| fmt_f64(c[i])));
            rec.extend(
                self.cat
                    .iter()
                    .zip(&self.cat_levels)
                    .map(|(c, lv)| lv[c[i] as usize].clone()),
            );
            rec.push(fmt_f64(self.y[i]));
            if let Some(w) = &self.weights {
                rec.push(fmt_f64(w[i]));
            }
            rec.extend(self.aux.iter().map(|c| fmt_f64(c[i])));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|source| Error::Io { path: "<csv>".into(), source })?;
        Ok(())
    }

    /// Schema matching [`write_csv`](Self::write_csv) output.
    pub fn schema(&self) -> Schema {
        let mut columns = Vec::new();
        columns.extend(self.cont_names.iter().map(|n| (n.clone(), Role::Cont)));
        columns.extend(self.cat_names.iter().map(|n| (n.clone(), Role::Cat)));
        columns.push((self.y_name.clone(), Role::Y));
        if self.weights.is_some() {
            columns.push(("weight".into(), Role::Weight));
        }
        columns.extend(self.aux_names.iter().map(|n| (n.clone(), Role::Aux)));
        Schema { columns }
    }

    /// Content hash of one row under `seed`; equal rows hash equally.
    fn row_key(&self, i: usize, seed: u64) -> u64 {
        let mut h = splitmix64(seed);
        let mut mix = |bits: u64| h = splitmix64(h ^ bits);
        for c in &self.cont {
            mix(c[i].to_bits());
        }
        for c in &self.cat {
            mix(c[i] as u64);
        }
        mix(self.y[i].to_bits());
        if let Some(w) = &self.weights {
            mix(w[i].to_bits());
        }
        for c in &self.aux {
            mix(c[i].to_bits());
        }
        h
    }

    fn row_cmp(&self, a: usize, b: usize) -> std::cmp::Ordering {
        let cols = self.cont.iter().chain(std::iter::once(&self.y)).chain(&self.aux);
        for c in cols {
            let o = c[a].total_cmp(&c[b]);
            if o.is_ne() {
                return o;
            }
        }
        for c in &self.cat {
            let o = c[a].cmp(&c[b]);
            if o.is_ne() {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    }

    /// Row indices ordered by a seeded hash of row content; equal rows keep
    /// a content-defined order, so the result depends only on the row multiset.
    pub fn seeded_order(&self, seed: u64) -> Vec<usize> {
        let keys: Vec<u64> = (0..self.n()).map(|i| self.row_key(i, seed)).collect();
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]).then_with(|| self.row_cmp(a, b)));
        order
    }

    /// Seeded split into calibration, validation, and holdout index sets.
    pub fn split(&self, spec: &SplitSpec) -> Result<Split> {
        spec.validate()?;
        let n = self.n();
        if n < 2 {
            return Err(Error::data("need at least two rows to split"));
        }
        let order = self.seeded_order(spec.seed);

        let n_cal = (spec.calib_fraction * n as f64).round() as usize;
        if n_cal == 0 || n_cal > n {
            return Err(Error::config("split.calib_fraction", "yields an empty calibration split"));
        }
        if spec.share_calib_valid {
            let calib = order[..n_cal].to_vec();
            return Ok(Split {
                valid: calib.clone(),
                calib,
                holdout: order[n_cal..].to_vec(),
                shared: true,
            });
        }
        let n_val = ((spec.valid_fraction * n as f64).round() as usize).min(n - n_cal);
        if n_val == 0 {
            return Err(Error::config(
                "split.valid_fraction",
                "yields an empty validation split (set share_calib_valid to reuse calibration)",
            ));
        }
        Ok(Split {
            calib: order[..n_cal].to_vec(),
            valid: order[n_cal..n_cal + n_val].to_vec(),
            holdout: order[n_cal + n_val..].to_vec(),
            shared: false,
        })
    }
}

fn sorted_levels(values: &[String]) -> Vec<String> {
    let uniq: BTreeMap<&str, ()> = values.iter().map(|s| (s.as_str(), ())).collect();
    let mut levels: Vec<String> = uniq.into_keys().map(str::to_string).collect();
    let numeric: Option<Vec<f64>> = levels.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(levels).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        levels = paired.into_iter().map(|p| p.1).collect();
    }
    levels
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub calib_fraction: f64,
    pub valid_fraction: f64,
    #[serde(default)]
    pub share_calib_valid: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { calib_fraction: 0.5, valid_fraction: 0.5, share_calib_valid: false, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.calib_fraction > 0.0 && self.calib_fraction <= 1.0) {
            return Err(Error::config("split.calib_fraction", "must lie in (0,1]"));
        }
        if !(self.valid_fraction >= 0.0 && self.valid_fraction < 1.0) {
            return Err(Error::config("split.valid_fraction", "must lie in [0,1)"));
        }
        if !self.share_calib_valid && self.calib_fraction + self.valid_fraction > 1.0 + 1e-12 {
            return Err(Error::config("split", "calib_fraction + valid_fraction exceeds 1"));
        }
        Ok(())
    }
}

/// Row indices of each part. With `shared`, `valid` equals `calib`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub calib: Vec<usize>,
    pub valid: Vec<usize>,
    pub holdout: Vec<usize>,
    pub shared: bool,
}
