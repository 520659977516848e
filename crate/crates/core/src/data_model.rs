//! Tabular dataset representation: schema declaration, CSV ingestion and the
//! stratified train/test split.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn numeric(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Numeric,
        }
    }

    pub fn categorical(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Categorical,
        }
    }
}

/// Declarative description of a delimited text file.
///
/// A delimiter of `' '` means "any run of whitespace". `value_map` rewrites
/// raw values column by column before any typing or binarity check, which is
/// how German credit's `personal_status` codes become a gender column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub columns: Vec<ColumnSpec>,
    pub protected_attribute: String,
    pub privileged_value: String,
    pub label_column: String,
    pub favorable_value: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub missing_token: Option<String>,
    #[serde(default)]
    pub value_map: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default)]
    pub has_header: bool,
}

fn default_delimiter() -> char {
    ','
}

impl DatasetSchema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: DatasetSchema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Schema("no columns declared".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        if self.protected_attribute == self.label_column {
            return Err(Error::Schema(
                "protected attribute and label must be different columns".into(),
            ));
        }
        self.index_of(&self.protected_attribute)?;
        self.index_of(&self.label_column)?;
        for col in self.value_map.keys() {
            self.index_of(col)?;
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::Schema("delimiter must be an ASCII character".into()));
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))
    }

    pub fn protected_index(&self) -> usize {
        self.index_of(&self.protected_attribute)
            .expect("validated schema")
    }

    pub fn label_index(&self) -> usize {
        self.index_of(&self.label_column).expect("validated schema")
    }

    /// Feature columns: everything except the protected attribute and label.
    pub fn feature_columns(&self) -> impl Iterator<Item = (usize, &ColumnSpec)> {
        let (p, l) = (self.protected_index(), self.label_index());
        self.columns
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != p && *i != l)
    }

    /// Schema with the named columns removed. Protected and label columns are
    /// never removed.
    pub fn without_columns(&self, drop: &[String]) -> Result<Self> {
        for d in drop {
            if *d == self.protected_attribute || *d == self.label_column {
                return Err(Error::Schema(format!(
                    "refusing to drop protected/label column `{d}`"
                )));
            }
            self.index_of(d)?;
        }
        let mut out = self.clone();
        out.columns.retain(|c| !drop.contains(&c.name));
        out.value_map.retain(|k, _| !drop.contains(k));
        Ok(out)
    }
}

/// The two observed values of a binary column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryClasses {
    pub positive: String,
    pub negative: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    /// Data records in the file (blank lines and a declared header excluded).
    pub records: usize,
    pub dropped_missing: usize,
    /// Protected-value counts over every record, including dropped ones.
    pub raw_protected_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct RawDataset {
    pub schema: DatasetSchema,
    pub rows: Vec<Vec<String>>,
    pub row_ids: Vec<usize>,
    pub protected: BinaryClasses,
    pub label: BinaryClasses,
    pub stats: LoadStats,
}

impl RawDataset {
    /// Builds a dataset from in-memory rows, applying the same checks as
    /// [`load_csv`]. Row ids are assigned positionally.
    pub fn from_rows(schema: DatasetSchema, rows: Vec<Vec<String>>) -> Result<Self> {
        schema.validate()?;
        let width = schema.columns.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(Error::RowWidth {
                    line: i + 1,
                    expected: width,
                    found: r.len(),
                });
            }
        }
        let row_ids = (0..rows.len()).collect();
        let mut raw_protected_counts = BTreeMap::new();
        let p = schema.protected_index();
        for r in &rows {
            *raw_protected_counts.entry(r[p].clone()).or_insert(0) += 1;
        }
        let stats = LoadStats {
            records: rows.len(),
            dropped_missing: 0,
            raw_protected_counts,
        };
        Self::assemble(schema, rows, row_ids, stats)
    }

    fn assemble(
        schema: DatasetSchema,
        rows: Vec<Vec<String>>,
        row_ids: Vec<usize>,
        stats: LoadStats,
    ) -> Result<Self> {
        let protected = binary_classes(
            &rows,
            schema.protected_index(),
            &schema.protected_attribute,
            &schema.privileged_value,
        )?;
        let label = binary_classes(
            &rows,
            schema.label_index(),
            &schema.label_column,
            &schema.favorable_value,
        )?;
        let ds = RawDataset {
            schema,
            rows,
            row_ids,
            protected,
            label,
            stats,
        };
        ds.check_numeric()?;
        Ok(ds)
    }

    fn check_numeric(&self) -> Result<()> {
        for (ci, col) in self.schema.feature_columns() {
            if col.kind != ColumnKind::Numeric {
                continue;
            }
            for (r, id) in self.rows.iter().zip(&self.row_ids) {
                if r[ci].parse::<f64>().map(|v| !v.is_finite()).unwrap_or(true) {
                    return Err(Error::NotNumeric {
                        line: id + 1,
                        column: col.name.clone(),
                        value: r[ci].clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_privileged(&self, row: usize) -> bool {
        self.rows[row][self.schema.protected_index()] == self.schema.privileged_value
    }

    pub fn is_favorable(&self, row: usize) -> bool {
        self.rows[row][self.schema.label_index()] == self.schema.favorable_value
    }

    /// Counts of kept rows per protected value.
    pub fn protected_counts(&self) -> BTreeMap<String, usize> {
        let p = self.schema.protected_index();
        let mut out = BTreeMap::new();
        for r in &self.rows {
            *out.entry(r[p].clone()).or_insert(0) += 1;
        }
        out
    }

    /// Numeric value of a feature cell. Only valid for numeric columns, which
    /// are checked at construction.
    pub fn numeric(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col].parse().expect("numeric column checked at load")
    }

    /// Rows at `indices` (in the given order) with ids and classes preserved.
    pub fn select(&self, indices: &[usize]) -> RawDataset {
        RawDataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
            protected: self.protected.clone(),
            label: self.label.clone(),
            stats: self.stats.clone(),
        }
    }

    /// Drops feature columns by name.
    pub fn drop_columns(&self, names: &[String]) -> Result<RawDataset> {
        let schema = self.schema.without_columns(names)?;
        let keep: Vec<usize> = self
            .schema
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| !names.contains(&c.name))
            .map(|(i, _)| i)
            .collect();
        Ok(RawDataset {
            schema,
            rows: self
                .rows
                .iter()
                .map(|r| keep.iter().map(|&i| r[i].clone()).collect())
                .collect(),
            row_ids: self.row_ids.clone(),
            protected: self.protected.clone(),
            label: self.label.clone(),
            stats: self.stats.clone(),
        })
    }
}

fn binary_classes(
    rows: &[Vec<String>],
    col: usize,
    name: &str,
    positive: &str,
) -> Result<BinaryClasses> {
    let mut negative: Option<&str> = None;
    let mut saw_positive = false;
    for r in rows {
        let v = r[col].as_str();
        if v == positive {
            saw_positive = true;
            continue;
        }
        match negative {
            None => negative = Some(v),
            Some(n) if n == v => {}
            Some(_) => {
                return Err(Error::UnmappableValue {
                    column: name.to_string(),
                    value: v.to_string(),
                })
            }
        }
    }
    if !rows.is_empty() && (!saw_positive || negative.is_none()) {
        return Err(Error::Schema(format!(
            "column `{name}` is not binary: observed only `{}`",
            negative.unwrap_or(positive)
        )));
    }
    Ok(BinaryClasses {
        positive: positive.to_string(),
        negative: negative.map(str::to_string),
    })
}

/// Loads a delimited text file. Rows containing the schema's missing token in
/// any field are dropped and counted; `value_map` is applied before typing.
pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<RawDataset> {
    let path = path.as_ref();
    schema.validate()?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_text(&text, schema)
}

/// Parses file contents; see [`load_csv`].
pub fn parse_text(text: &str, schema: &DatasetSchema) -> Result<RawDataset> {
    let width = schema.columns.len();
    let maps: Vec<Option<&BTreeMap<String, String>>> = schema
        .columns
        .iter()
        .map(|c| schema.value_map.get(&c.name))
        .collect();
    let p = schema.protected_index();

    let mut stats = LoadStats::default();
    let mut rows = Vec::new();
    let mut row_ids = Vec::new();
    let mut header_pending = schema.has_header;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let fields: Vec<&str> = if schema.delimiter == ' ' {
            line.split_whitespace().collect()
        } else {
            line.split(schema.delimiter).map(str::trim).collect()
        };
        if fields.len() != width {
            return Err(Error::RowWidth {
                line: lineno + 1,
                expected: width,
                found: fields.len(),
            });
        }
        let record_id = stats.records;
        stats.records += 1;

        let missing = schema
            .missing_token
            .as_deref()
            .is_some_and(|tok| fields.contains(&tok));
        let mapped: Vec<String> = fields
            .iter()
            .zip(&maps)
            .map(|(f, m)| match m.and_then(|m| m.get(*f)) {
                Some(v) => v.clone(),
                None => f.to_string(),
            })
            .collect();
        if schema.missing_token.as_deref() != Some(mapped[p].as_str()) {
            *stats
                .raw_protected_counts
                .entry(mapped[p].clone())
                .or_insert(0) += 1;
        }
        if missing {
            stats.dropped_missing += 1;
            continue;
        }
        rows.push(mapped);
        row_ids.push(record_id);
    }
    RawDataset::assemble(schema.clone(), rows, row_ids, stats)
}

/// Stratified split on (protected value × label). The test set holds
/// `round(N × test_fraction)` rows apportioned across strata by largest
/// remainder, each stratum keeping at least one row on each side. Output rows
/// keep file order.
pub fn split_train_test(
    data: &RawDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(RawDataset, RawDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut strata: BTreeMap<(bool, bool), Vec<usize>> = BTreeMap::new();
    for i in 0..data.len() {
        strata
            .entry((data.is_privileged(i), data.is_favorable(i)))
            .or_default()
            .push(i);
    }
    let quotas = apportion(
        &strata.values().map(Vec::len).collect::<Vec<_>>(),
        test_fraction,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_idx = Vec::new();
    let mut train_idx = Vec::new();
    for (((privileged, favorable), mut members), quota) in strata.into_iter().zip(quotas) {
        let n = members.len();
        if n < 2 {
            return Err(Error::StratumTooSmall {
                stratum: format!(
                    "{}={}, {}={}",
                    data.schema.protected_attribute,
                    class_name(&data.protected, privileged),
                    data.schema.label_column,
                    class_name(&data.label, favorable)
                ),
                size: n,
            });
        }
        let n_test = quota.clamp(1, n - 1);
        members.shuffle(&mut rng);
        test_idx.extend_from_slice(&members[..n_test]);
        train_idx.extend_from_slice(&members[n_test..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((data.select(&train_idx), data.select(&test_idx)))
}

/// Largest-remainder allocation of `round(total × fraction)` across `sizes`.
fn apportion(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (total as f64 * fraction).round() as usize;
    let exact: Vec<f64> = sizes.iter().map(|&n| n as f64 * fraction).collect();
    let mut out: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = out.iter().sum();
    for &i in order.iter().take(target.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

fn class_name(c: &BinaryClasses, positive: bool) -> &str {
    if positive {
        &c.positive
    } else {
        c.negative.as_deref().unwrap_or("?")
    }
}
