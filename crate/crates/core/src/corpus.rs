//! Dataset model, corpus CSV reading/writing, anthropometric ratios and
//! sparsity diagnostics.
//!
//! A corpus file is a CSV whose first column holds object ids and whose other
//! header cells name features as `name:num`, `name:cat` or `meta:name`. An
//! empty cell or the literal `NA` marks a missing value. `meta:` columns are
//! carried along as annotations and never used for fitting.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Literal missing-value marker accepted in corpus files (besides empty).
pub const MISSING_MARKER: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Numeric => "numeric",
            FeatureKind::Categorical => "categorical",
        }
    }

    fn header_suffix(self) -> &'static str {
        match self {
            FeatureKind::Numeric => "num",
            FeatureKind::Categorical => "cat",
        }
    }
}

/// Description of one fitting feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Ordered category labels; empty for numeric features.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
            categories: Vec::new(),
            description: String::new(),
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
            description: String::new(),
        }
    }

    fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }
}

/// How `load_dataset` obtains feature specs.
#[derive(Debug, Clone, Default)]
pub enum Schema {
    /// Kinds from the header suffixes; categories are the sorted distinct
    /// observed labels.
    #[default]
    Infer,
    /// Fixed specs. The header must name exactly these features.
    Explicit(Vec<FeatureSpec>),
}

/// Raw material for [`Dataset::new`].
#[derive(Debug, Clone, Default)]
pub struct DatasetParts {
    pub ids: Vec<String>,
    /// Fitting features in column order.
    pub features: Vec<FeatureSpec>,
    /// One row per object, one cell per feature in `features` order. Numeric
    /// features must hold [`Cell::Numeric`] or [`Cell::Missing`], categorical
    /// ones [`Cell::Category`] or [`Cell::Missing`].
    pub rows: Vec<Vec<Cell>>,
    pub annotation_keys: Vec<String>,
    /// One row per object, one text cell per annotation key ("" = missing).
    pub annotations: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Missing,
    Numeric(f64),
    Category(usize),
}

/// Objects described by numeric and categorical features with per-cell
/// observed flags. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<String>,
    features: Vec<FeatureSpec>,
    numeric_features: Vec<usize>,
    categorical_features: Vec<usize>,
    // row-major N x R and N x C
    numeric: Vec<Option<f64>>,
    categorical: Vec<Option<usize>>,
    annotation_keys: Vec<String>,
    annotations: Vec<Vec<String>>,
}

impl Dataset {
    pub fn new(parts: DatasetParts) -> Result<Self> {
        let DatasetParts {
            ids,
            features,
            rows,
            annotation_keys,
            mut annotations,
        } = parts;

        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            if f.kind == FeatureKind::Categorical {
                if f.categories.is_empty() {
                    return Err(Error::Schema(format!(
                        "categorical feature `{}` has no categories",
                        f.name
                    )));
                }
                let distinct: HashSet<_> = f.categories.iter().collect();
                if distinct.len() != f.categories.len() {
                    return Err(Error::Schema(format!(
                        "categorical feature `{}` lists a category twice",
                        f.name
                    )));
                }
            }
        }
        let mut seen_ids = HashSet::new();
        for id in &ids {
            if !seen_ids.insert(id.as_str()) {
                return Err(Error::Schema(format!("duplicate object id `{id}`")));
            }
        }
        if rows.len() != ids.len() {
            return Err(Error::Schema(format!(
                "{} ids but {} rows",
                ids.len(),
                rows.len()
            )));
        }
        if annotations.is_empty() && annotation_keys.is_empty() {
            annotations = vec![Vec::new(); ids.len()];
        }
        if annotations.len() != ids.len()
            || annotations.iter().any(|a| a.len() != annotation_keys.len())
        {
            return Err(Error::Schema("annotation table shape mismatch".into()));
        }

        let numeric_features: Vec<usize> = (0..features.len())
            .filter(|&i| features[i].kind == FeatureKind::Numeric)
            .collect();
        let categorical_features: Vec<usize> = (0..features.len())
            .filter(|&i| features[i].kind == FeatureKind::Categorical)
            .collect();

        let mut numeric = Vec::with_capacity(ids.len() * numeric_features.len());
        let mut categorical = Vec::with_capacity(ids.len() * categorical_features.len());
        for (n, row) in rows.iter().enumerate() {
            if row.len() != features.len() {
                return Err(Error::Schema(format!(
                    "object `{}` has {} cells, expected {}",
                    ids[n],
                    row.len(),
                    features.len()
                )));
            }
            for &fi in &numeric_features {
                match row[fi] {
                    Cell::Missing => numeric.push(None),
                    Cell::Numeric(x) if x.is_finite() => numeric.push(Some(x)),
                    Cell::Numeric(_) => {
                        return Err(Error::Value {
                            row: n + 1,
                            column: features[fi].name.clone(),
                            message: "non-finite numeric value".into(),
                        })
                    }
                    Cell::Category(_) => {
                        return Err(Error::Schema(format!(
                            "categorical cell in numeric feature `{}`",
                            features[fi].name
                        )))
                    }
                }
            }
            for &fi in &categorical_features {
                match row[fi] {
                    Cell::Missing => categorical.push(None),
                    Cell::Category(v) if v < features[fi].categories.len() => {
                        categorical.push(Some(v))
                    }
                    Cell::Category(v) => {
                        return Err(Error::Value {
                            row: n + 1,
                            column: features[fi].name.clone(),
                            message: format!("category index {v} out of range"),
                        })
                    }
                    Cell::Numeric(_) => {
                        return Err(Error::Schema(format!(
                            "numeric cell in categorical feature `{}`",
                            features[fi].name
                        )))
                    }
                }
            }
        }

        Ok(Self {
            ids,
            features,
            numeric_features,
            categorical_features,
            numeric,
            categorical,
            annotation_keys,
            annotations,
        })
    }

    pub fn n_objects(&self) -> usize {
        self.ids.len()
    }

    /// Number of numeric features (R).
    pub fn n_numeric(&self) -> usize {
        self.numeric_features.len()
    }

    /// Number of categorical features (C).
    pub fn n_categorical(&self) -> usize {
        self.categorical_features.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, n: usize) -> &str {
        &self.ids[n]
    }

    /// Fitting features in column order.
    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn numeric_spec(&self, r: usize) -> &FeatureSpec {
        &self.features[self.numeric_features[r]]
    }

    pub fn categorical_spec(&self, c: usize) -> &FeatureSpec {
        &self.features[self.categorical_features[c]]
    }

    /// Number of categories V_c of categorical feature `c`.
    pub fn category_count(&self, c: usize) -> usize {
        self.categorical_spec(c).categories.len()
    }

    pub fn category_counts(&self) -> Vec<usize> {
        (0..self.n_categorical())
            .map(|c| self.category_count(c))
            .collect()
    }

    #[inline]
    pub fn numeric(&self, n: usize, r: usize) -> Option<f64> {
        self.numeric[n * self.numeric_features.len() + r]
    }

    #[inline]
    pub fn categorical(&self, n: usize, c: usize) -> Option<usize> {
        self.categorical[n * self.categorical_features.len() + c]
    }

    pub fn numeric_row(&self, n: usize) -> &[Option<f64>] {
        let r = self.numeric_features.len();
        &self.numeric[n * r..(n + 1) * r]
    }

    pub fn categorical_row(&self, n: usize) -> &[Option<usize>] {
        let c = self.categorical_features.len();
        &self.categorical[n * c..(n + 1) * c]
    }

    /// Column `r` of the numeric matrix.
    pub fn numeric_column(&self, r: usize) -> Vec<Option<f64>> {
        (0..self.n_objects()).map(|n| self.numeric(n, r)).collect()
    }

    pub fn categorical_column(&self, c: usize) -> Vec<Option<usize>> {
        (0..self.n_objects()).map(|n| self.categorical(n, c)).collect()
    }

    pub fn annotation_keys(&self) -> &[String] {
        &self.annotation_keys
    }

    pub fn annotations(&self, n: usize) -> &[String] {
        &self.annotations[n]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    pub fn total_cells(&self) -> usize {
        self.numeric.len() + self.categorical.len()
    }

    pub fn observed_cells(&self) -> usize {
        self.numeric.iter().filter(|x| x.is_some()).count()
            + self.categorical.iter().filter(|x| x.is_some()).count()
    }

    /// Objects at `indices`, in that order. Specs are kept unchanged, so
    /// category sets stay aligned with the parent dataset.
    ///
    /// Indices must be distinct.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let r = self.n_numeric();
        let c = self.n_categorical();
        let mut out = Dataset {
            ids: Vec::with_capacity(indices.len()),
            features: self.features.clone(),
            numeric_features: self.numeric_features.clone(),
            categorical_features: self.categorical_features.clone(),
            numeric: Vec::with_capacity(indices.len() * r),
            categorical: Vec::with_capacity(indices.len() * c),
            annotation_keys: self.annotation_keys.clone(),
            annotations: Vec::with_capacity(indices.len()),
        };
        for &n in indices {
            out.ids.push(self.ids[n].clone());
            out.numeric.extend_from_slice(self.numeric_row(n));
            out.categorical.extend_from_slice(self.categorical_row(n));
            out.annotations.push(self.annotations[n].clone());
        }
        debug_assert_eq!(
            out.ids.iter().collect::<HashSet<_>>().len(),
            out.ids.len(),
            "subset indices must be distinct"
        );
        out
    }

    /// Copy with numeric cell (n, r) marked missing.
    pub fn with_numeric_masked(&self, n: usize, r: usize) -> Dataset {
        let mut out = self.clone();
        out.numeric[n * self.n_numeric() + r] = None;
        out
    }

    /// Copy with categorical cell (n, c) marked missing.
    pub fn with_categorical_masked(&self, n: usize, c: usize) -> Dataset {
        let mut out = self.clone();
        out.categorical[n * self.n_categorical() + c] = None;
        out
    }

    /// Z-scores every numeric feature over its observed values (population
    /// standard deviation). Constant features are only centred.
    pub fn standardized(&self) -> Dataset {
        let mut out = self.clone();
        let r_count = self.n_numeric();
        for r in 0..r_count {
            let observed: Vec<f64> = self.numeric_column(r).into_iter().flatten().collect();
            if observed.is_empty() {
                continue;
            }
            let m = observed.len() as f64;
            let mean = observed.iter().sum::<f64>() / m;
            let var = observed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
            let sd = var.sqrt();
            for n in 0..self.n_objects() {
                if let Some(x) = &mut out.numeric[n * r_count + r] {
                    *x = if sd > 0.0 { (*x - mean) / sd } else { *x - mean };
                }
            }
        }
        out
    }

    /// Observed-value mean of each numeric feature (0 when never observed).
    pub fn numeric_means(&self) -> Vec<f64> {
        (0..self.n_numeric())
            .map(|r| {
                let (s, m) = (0..self.n_objects())
                    .filter_map(|n| self.numeric(n, r))
                    .fold((0.0, 0usize), |(s, m), x| (s + x, m + 1));
                if m == 0 {
                    0.0
                } else {
                    s / m as f64
                }
            })
            .collect()
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == MISSING_MARKER
}

enum Column {
    Feature(usize),
    Meta(usize),
}

/// Reads a corpus CSV from `path`.
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, schema)
}

/// Reads a corpus CSV from any reader.
pub fn read_dataset<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| csv_error(e, 1))?,
        None => return Err(Error::Parse { row: 1, message: "empty file, no header".into() }),
    };
    if header.is_empty() {
        return Err(Error::Parse { row: 1, message: "empty header".into() });
    }

    let mut features: Vec<FeatureSpec> = Vec::new();
    let mut annotation_keys = Vec::new();
    let mut columns = Vec::new();
    for cell in header.iter().skip(1) {
        let cell = cell.trim();
        if let Some(key) = cell.strip_prefix("meta:") {
            columns.push(Column::Meta(annotation_keys.len()));
            annotation_keys.push(key.to_string());
            continue;
        }
        let (name, kind) = match cell.rsplit_once(':') {
            Some((name, "num")) => (name, FeatureKind::Numeric),
            Some((name, "cat")) => (name, FeatureKind::Categorical),
            _ => {
                return Err(Error::Schema(format!(
                    "header cell `{cell}` must be `name:num`, `name:cat` or `meta:name`"
                )))
            }
        };
        if name.is_empty() {
            return Err(Error::Schema(format!("header cell `{cell}` has an empty name")));
        }
        columns.push(Column::Feature(features.len()));
        features.push(FeatureSpec {
            name: name.to_string(),
            kind,
            categories: Vec::new(),
            description: String::new(),
        });
    }

    if let Schema::Explicit(specs) = schema {
        if specs.len() != features.len() {
            return Err(Error::Schema(format!(
                "schema lists {} features, header has {}",
                specs.len(),
                features.len()
            )));
        }
        for f in features.iter_mut() {
            let spec = specs.iter().find(|s| s.name == f.name).ok_or_else(|| {
                Error::Schema(format!("header feature `{}` is not in the schema", f.name))
            })?;
            if spec.kind != f.kind {
                return Err(Error::Schema(format!(
                    "feature `{}` is {} in the schema but {} in the header",
                    f.name,
                    spec.kind.as_str(),
                    f.kind.as_str()
                )));
            }
            *f = spec.clone();
        }
    }

    // Raw categorical labels are collected first so inferred category sets
    // can be sorted before indices are assigned.
    enum RawCell {
        Missing,
        Numeric(f64),
        Label(String),
    }

    let width = header.len();
    let mut ids = Vec::new();
    let mut raw_rows: Vec<(usize, Vec<RawCell>)> = Vec::new();
    let mut annotations = Vec::new();
    for (i, rec) in records.enumerate() {
        let fallback_row = i + 2;
        let rec = rec.map_err(|e| csv_error(e, fallback_row))?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(fallback_row);
        if rec.len() != width {
            return Err(Error::Parse {
                row,
                message: format!("expected {width} cells, found {}", rec.len()),
            });
        }
        let id = rec[0].trim();
        if id.is_empty() {
            return Err(Error::Parse { row, message: "empty object id".into() });
        }
        ids.push(id.to_string());
        let mut cells: Vec<RawCell> = (0..features.len()).map(|_| RawCell::Missing).collect();
        let mut notes = vec![String::new(); annotation_keys.len()];
        for (col, cell) in columns.iter().zip(rec.iter().skip(1)) {
            match *col {
                Column::Meta(a) => {
                    if !is_missing(cell) {
                        notes[a] = cell.to_string();
                    }
                }
                Column::Feature(f) => {
                    let text = cell.trim();
                    if is_missing(text) {
                        continue;
                    }
                    cells[f] = match features[f].kind {
                        FeatureKind::Numeric => {
                            let x: f64 = text.parse().map_err(|_| Error::Value {
                                row,
                                column: features[f].name.clone(),
                                message: format!("`{text}` is not a number"),
                            })?;
                            if !x.is_finite() {
                                return Err(Error::Value {
                                    row,
                                    column: features[f].name.clone(),
                                    message: format!("`{text}` is not finite"),
                                });
                            }
                            RawCell::Numeric(x)
                        }
                        FeatureKind::Categorical => RawCell::Label(text.to_string()),
                    };
                }
            }
        }
        raw_rows.push((row, cells));
        annotations.push(notes);
    }

    if matches!(schema, Schema::Infer) {
        for (f, spec) in features.iter_mut().enumerate() {
            if spec.kind != FeatureKind::Categorical {
                continue;
            }
            let labels: BTreeSet<&str> = raw_rows
                .iter()
                .filter_map(|(_, cells)| match &cells[f] {
                    RawCell::Label(s) => Some(s.as_str()),
                    _ => None,
                })
                .collect();
            if labels.is_empty() {
                return Err(Error::Schema(format!(
                    "categorical feature `{}` has no observed values; supply an explicit schema",
                    spec.name
                )));
            }
            spec.categories = labels.into_iter().map(String::from).collect();
        }
    }

    let mut rows = Vec::with_capacity(raw_rows.len());
    for (row, cells) in raw_rows {
        let mut out = Vec::with_capacity(cells.len());
        for (f, cell) in cells.into_iter().enumerate() {
            out.push(match cell {
                RawCell::Missing => Cell::Missing,
                RawCell::Numeric(x) => Cell::Numeric(x),
                RawCell::Label(label) => {
                    Cell::Category(features[f].category_index(&label).ok_or_else(|| {
                        Error::Value {
                            row,
                            column: features[f].name.clone(),
                            message: format!("unknown category `{label}`"),
                        }
                    })?)
                }
            });
        }
        rows.push(out);
    }

    Dataset::new(DatasetParts {
        ids,
        features,
        rows,
        annotation_keys,
        annotations,
    })
}

fn csv_error(e: csv::Error, fallback_row: usize) -> Error {
    let row = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_row);
    Error::Parse {
        row,
        message: e.to_string(),
    }
}

/// Writes `d` in corpus CSV form: id column, features in column order, then
/// `meta:` columns. Missing cells are written empty.
pub fn write_dataset<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let wrap = |e: csv::Error| Error::Parse { row: 0, message: e.to_string() };

    let mut header = vec!["id".to_string()];
    header.extend(
        d.features
            .iter()
            .map(|f| format!("{}:{}", f.name, f.kind.header_suffix())),
    );
    header.extend(d.annotation_keys.iter().map(|k| format!("meta:{k}")));
    w.write_record(&header).map_err(wrap)?;

    let mut slot = vec![0usize; d.features.len()];
    for (r, &fi) in d.numeric_features.iter().enumerate() {
        slot[fi] = r;
    }
    for (c, &fi) in d.categorical_features.iter().enumerate() {
        slot[fi] = c;
    }
    for n in 0..d.n_objects() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(d.ids[n].clone());
        for (fi, f) in d.features.iter().enumerate() {
            rec.push(match f.kind {
                FeatureKind::Numeric => d
                    .numeric(n, slot[fi])
                    .map(|x| x.to_string())
                    .unwrap_or_default(),
                FeatureKind::Categorical => d
                    .categorical(n, slot[fi])
                    .map(|v| f.categories[v].clone())
                    .unwrap_or_default(),
            });
        }
        rec.extend(d.annotations[n].iter().cloned());
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io("<dataset writer>", e))?;
    Ok(())
}

/// Number of raw lengths (a through m).
pub const RAW_LENGTHS: usize = 13;

/// Names of the raw length columns.
pub const RAW_LENGTH_NAMES: [&str; RAW_LENGTHS] =
    ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m"];

/// The twelve anthropometric features as (name, numerator, denominator)
/// over raw length indices; `None` denominator keeps the length as is.
pub const ANTHROPOMETRIC_FEATURES: [(&str, usize, Option<usize>); 12] = [
    ("a_over_b", 0, Some(1)),
    ("c_over_d", 2, Some(3)),
    ("c_over_a", 2, Some(0)),
    ("e_over_c", 4, Some(2)),
    ("f_over_g", 5, Some(6)),
    ("h_over_i", 7, Some(8)),
    ("i_over_j", 8, Some(9)),
    ("a_over_i", 0, Some(8)),
    ("k_over_i", 10, Some(8)),
    ("l_over_i", 11, Some(8)),
    ("l_over_m", 11, Some(12)),
    ("e", 4, None),
];

/// Raw caliper lengths a..m of one object, in a common unit.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMeasurements {
    pub id: String,
    pub lengths: [Option<f64>; RAW_LENGTHS],
}

/// Computes the twelve anthropometric features. Eleven are length ratios;
/// the twelfth (pupil diameter `e`) is kept un-normalized. A ratio whose
/// operand is missing or non-finite, or whose denominator is not positive,
/// is missing.
pub fn compute_anthropometrics(raw: &RawMeasurements) -> [Option<f64>; 12] {
    let get = |i: usize| raw.lengths[i].filter(|x| x.is_finite());
    let mut out = [None; 12];
    for (slot, &(_, num, den)) in out.iter_mut().zip(ANTHROPOMETRIC_FEATURES.iter()) {
        *slot = match den {
            None => get(num),
            Some(den) => match (get(num), get(den)) {
                (Some(a), Some(b)) if b > 0.0 => Some(a / b).filter(|x| x.is_finite()),
                _ => None,
            },
        };
    }
    out
}

/// Reads a raw-measurement CSV with header `id,a,b,...,m`.
pub fn load_raw_measurements(path: impl AsRef<Path>) -> Result<Vec<RawMeasurements>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw_measurements(file)
}

pub fn read_raw_measurements<R: Read>(reader: R) -> Result<Vec<RawMeasurements>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let expected: Vec<&str> = std::iter::once("id").chain(RAW_LENGTH_NAMES).collect();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Schema(format!(
            "raw measurement header must be `{}`",
            expected.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(e, i + 2))?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
        if rec.len() != expected.len() {
            return Err(Error::Parse {
                row,
                message: format!("expected {} cells, found {}", expected.len(), rec.len()),
            });
        }
        let mut lengths = [None; RAW_LENGTHS];
        for (j, slot) in lengths.iter_mut().enumerate() {
            let text = rec[j + 1].trim();
            if is_missing(text) {
                continue;
            }
            let x: f64 = text.parse().map_err(|_| Error::Value {
                row,
                column: RAW_LENGTH_NAMES[j].into(),
                message: format!("`{text}` is not a number"),
            })?;
            *slot = Some(x);
        }
        out.push(RawMeasurements {
            id: rec[0].trim().to_string(),
            lengths,
        });
    }
    Ok(out)
}

/// Builds a numeric-only dataset of the twelve anthropometric features.
pub fn anthropometric_dataset(raws: &[RawMeasurements]) -> Result<Dataset> {
    let features = ANTHROPOMETRIC_FEATURES
        .iter()
        .map(|(name, _, _)| FeatureSpec::numeric(*name))
        .collect();
    let rows = raws
        .iter()
        .map(|raw| {
            compute_anthropometrics(raw)
                .iter()
                .map(|v| v.map_or(Cell::Missing, Cell::Numeric))
                .collect()
        })
        .collect();
    Dataset::new(DatasetParts {
        ids: raws.iter().map(|r| r.id.clone()).collect(),
        features,
        rows,
        ..Default::default()
    })
}

/// Missingness diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    /// Missing cells over total cells.
    pub overall: f64,
    /// (feature name, missing fraction) in column order.
    pub per_feature: Vec<(String, f64)>,
    pub observed_cells: usize,
    pub total_cells: usize,
    pub n_numeric: usize,
    pub category_counts: Vec<usize>,
}

impl SparsityReport {
    /// Free parameters of a K-cluster model:
    /// (K-1) weights + K*2R Gaussian parameters + K*sum(V_c - 1) category
    /// probabilities.
    pub fn free_parameters(&self, k: usize) -> usize {
        free_parameters(k, self.n_numeric, &self.category_counts)
    }

    /// Observed cells per free model parameter at `k` clusters.
    pub fn observables_per_parameter(&self, k: usize) -> f64 {
        self.observed_cells as f64 / self.free_parameters(k) as f64
    }
}

pub fn free_parameters(k: usize, n_numeric: usize, category_counts: &[usize]) -> usize {
    let cat: usize = category_counts.iter().map(|&v| v.saturating_sub(1)).sum();
    (k - 1) + k * 2 * n_numeric + k * cat
}

pub fn sparsity_report(d: &Dataset) -> SparsityReport {
    let n = d.n_objects();
    let mut per_feature = Vec::with_capacity(d.features.len());
    let mut slot_r = 0;
    let mut slot_c = 0;
    for f in &d.features {
        let missing = match f.kind {
            FeatureKind::Numeric => {
                let r = slot_r;
                slot_r += 1;
                (0..n).filter(|&i| d.numeric(i, r).is_none()).count()
            }
            FeatureKind::Categorical => {
                let c = slot_c;
                slot_c += 1;
                (0..n).filter(|&i| d.categorical(i, c).is_none()).count()
            }
        };
        let frac = if n == 0 { 0.0 } else { missing as f64 / n as f64 };
        per_feature.push((f.name.clone(), frac));
    }
    let total = d.total_cells();
    let observed = d.observed_cells();
    SparsityReport {
        overall: if total == 0 {
            0.0
        } else {
            (total - observed) as f64 / total as f64
        },
        per_feature,
        observed_cells: observed,
        total_cells: total,
        n_numeric: d.n_numeric(),
        category_counts: d.category_counts(),
    }
}
