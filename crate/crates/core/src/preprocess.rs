//! Protected-attribute correlation pruning, min-max normalization and one-hot
//! encoding.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data_model::{ColumnKind, RawDataset};
use crate::error::{Error, Result};

/// Default pruning cutoff for [`prune_correlated`].
pub const DEFAULT_CORR_THRESHOLD: f64 = 0.8;

/// A feature column as seen by [`association`].
#[derive(Debug, Clone, Copy)]
pub enum FeatureValues<'a> {
    Numeric(&'a [f64]),
    Categorical(&'a [&'a str]),
}

/// Absolute point-biserial correlation between a numeric feature and a binary
/// indicator. Zero-variance inputs score 0.
pub fn point_biserial(values: &[f64], indicator: &[bool]) -> f64 {
    let n = values.len();
    if n == 0 || n != indicator.len() {
        return 0.0;
    }
    let nf = n as f64;
    let mean_x = values.iter().sum::<f64>() / nf;
    let mean_g = indicator.iter().filter(|&&g| g).count() as f64 / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &g) in values.iter().zip(indicator) {
        let dx = x - mean_x;
        let dg = if g { 1.0 } else { 0.0 } - mean_g;
        sxy += dx * dg;
        sxx += dx * dx;
        syy += dg * dg;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).abs().min(1.0)
}

/// Cramér's V between a categorical feature and a binary indicator.
pub fn cramers_v(values: &[&str], indicator: &[bool]) -> f64 {
    let n = values.len();
    if n == 0 || n != indicator.len() {
        return 0.0;
    }
    let mut table: BTreeMap<&str, [f64; 2]> = BTreeMap::new();
    let mut col_totals = [0.0f64; 2];
    for (&v, &g) in values.iter().zip(indicator) {
        table.entry(v).or_insert([0.0; 2])[g as usize] += 1.0;
        col_totals[g as usize] += 1.0;
    }
    let rows = table.len();
    let cols = col_totals.iter().filter(|&&c| c > 0.0).count();
    if rows < 2 || cols < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mut chi2 = 0.0;
    for counts in table.values() {
        let row_total = counts[0] + counts[1];
        for (j, &observed) in counts.iter().enumerate() {
            let expected = row_total * col_totals[j] / nf;
            chi2 += (observed - expected).powi(2) / expected;
        }
    }
    let k = (rows.min(cols) - 1) as f64;
    (chi2 / (nf * k)).sqrt().min(1.0)
}

/// Association of a feature with a binary protected indicator, in `[0, 1]`.
pub fn association(feature: FeatureValues<'_>, protected: &[bool]) -> f64 {
    match feature {
        FeatureValues::Numeric(v) => point_biserial(v, protected),
        FeatureValues::Categorical(v) => cramers_v(v, protected),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationEntry {
    pub name: String,
    pub kind: ColumnKind,
    pub score: f64,
    pub dropped: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationReport {
    pub threshold: f64,
    pub columns: Vec<AssociationEntry>,
}

impl AssociationReport {
    pub fn dropped(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.dropped)
            .map(|c| c.name.clone())
            .collect()
    }
}

/// Scores every feature column against the protected attribute and removes
/// those scoring strictly above `threshold`. The protected attribute and the
/// label are never pruned.
pub fn prune_correlated(
    data: &RawDataset,
    threshold: f64,
) -> Result<(RawDataset, AssociationReport)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "correlation threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let protected: Vec<bool> = (0..data.len()).map(|i| data.is_privileged(i)).collect();
    let mut columns = Vec::new();
    for (ci, spec) in data.schema.feature_columns() {
        let (score, degenerate) = match spec.kind {
            ColumnKind::Numeric => {
                let v: Vec<f64> = (0..data.len()).map(|r| data.numeric(r, ci)).collect();
                let constant = v.windows(2).all(|w| w[0] == w[1]);
                (association(FeatureValues::Numeric(&v), &protected), constant)
            }
            ColumnKind::Categorical => {
                let v: Vec<&str> = data.rows.iter().map(|r| r[ci].as_str()).collect();
                let constant = v.windows(2).all(|w| w[0] == w[1]);
                (
                    association(FeatureValues::Categorical(&v), &protected),
                    constant,
                )
            }
        };
        if degenerate {
            warn!("column `{}` has zero variance; association set to 0", spec.name);
        }
        columns.push(AssociationEntry {
            name: spec.name.clone(),
            kind: spec.kind,
            score,
            dropped: score > threshold,
            degenerate,
        });
    }
    let report = AssociationReport { threshold, columns };
    let pruned = data.drop_columns(&report.dropped())?;
    Ok((pruned, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureSource {
    Numeric { column: String },
    Category { column: String, value: String },
}

impl FeatureSource {
    pub fn column(&self) -> &str {
        match self {
            FeatureSource::Numeric { column } | FeatureSource::Category { column, .. } => column,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    fn scale(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span <= 0.0 {
            0.0
        } else {
            ((v - self.min) / span).clamp(0.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum FittedColumn {
    Numeric {
        name: String,
        stats: MinMax,
    },
    Categorical {
        name: String,
        vocabulary: Vec<String>,
    },
}

/// Per-row metadata carried beside the features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub row_id: usize,
    pub privileged: bool,
    pub favorable: bool,
}

/// Normalized and one-hot-encoded rows. The protected attribute and label
/// live only in `meta`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub rows: Vec<Vec<f64>>,
    pub columns: Vec<FeatureSource>,
    pub meta: Vec<RowMeta>,
    pub normalization: BTreeMap<String, MinMax>,
    pub unseen_categories: usize,
}

impl EncodedMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.meta.iter().map(|m| m.favorable).collect()
    }

    pub fn protected(&self) -> Vec<bool> {
        self.meta.iter().map(|m| m.privileged).collect()
    }

    /// Rows for which `keep` returns true, order preserved.
    pub fn filter(&self, mut keep: impl FnMut(&RowMeta) -> bool) -> EncodedMatrix {
        let (rows, meta) = self
            .rows
            .iter()
            .zip(&self.meta)
            .filter(|(_, m)| keep(m))
            .map(|(r, m)| (r.clone(), *m))
            .unzip();
        EncodedMatrix {
            rows,
            meta,
            columns: self.columns.clone(),
            normalization: self.normalization.clone(),
            unseen_categories: self.unseen_categories,
        }
    }

    /// Fails if any feature column derives from `protected`.
    pub fn assert_excludes(&self, protected: &str) -> Result<()> {
        if self.columns.iter().any(|c| c.column() == protected) {
            return Err(Error::ProtectedLeak(protected.to_string()));
        }
        Ok(())
    }
}

/// Min-max statistics and category vocabularies fit on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    columns: Vec<FittedColumn>,
}

impl Encoder {
    pub fn fit(train: &RawDataset) -> Encoder {
        let mut columns = Vec::new();
        for (ci, spec) in train.schema.feature_columns() {
            match spec.kind {
                ColumnKind::Numeric => {
                    let mut stats = MinMax {
                        min: f64::INFINITY,
                        max: f64::NEG_INFINITY,
                    };
                    for r in 0..train.len() {
                        let v = train.numeric(r, ci);
                        stats.min = stats.min.min(v);
                        stats.max = stats.max.max(v);
                    }
                    if train.is_empty() {
                        stats = MinMax { min: 0.0, max: 0.0 };
                    }
                    if stats.max <= stats.min {
                        warn!("numeric column `{}` is constant; encoded as 0", spec.name);
                    }
                    columns.push(FittedColumn::Numeric {
                        name: spec.name.clone(),
                        stats,
                    });
                }
                ColumnKind::Categorical => {
                    let mut vocabulary: Vec<String> =
                        train.rows.iter().map(|r| r[ci].clone()).collect();
                    vocabulary.sort_unstable();
                    vocabulary.dedup();
                    columns.push(FittedColumn::Categorical {
                        name: spec.name.clone(),
                        vocabulary,
                    });
                }
            }
        }
        Encoder { columns }
    }

    /// Names of the source columns this encoder consumes.
    pub fn source_columns(&self) -> Vec<String> {
        self.columns
            .iter()
            .map(|c| match c {
                FittedColumn::Numeric { name, .. } | FittedColumn::Categorical { name, .. } => {
                    name.clone()
                }
            })
            .collect()
    }

    pub fn feature_sources(&self) -> Vec<FeatureSource> {
        let mut out = Vec::new();
        for c in &self.columns {
            match c {
                FittedColumn::Numeric { name, .. } => out.push(FeatureSource::Numeric {
                    column: name.clone(),
                }),
                FittedColumn::Categorical { name, vocabulary } => {
                    out.extend(vocabulary.iter().map(|v| FeatureSource::Category {
                        column: name.clone(),
                        value: v.clone(),
                    }))
                }
            }
        }
        out
    }

    pub fn transform(&self, data: &RawDataset) -> Result<EncodedMatrix> {
        let mut layout = Vec::with_capacity(self.columns.len());
        for c in &self.columns {
            let name = match c {
                FittedColumn::Numeric { name, .. } | FittedColumn::Categorical { name, .. } => name,
            };
            layout.push(data.schema.index_of(name)?);
        }
        let dim = self.feature_sources().len();
        let mut unseen = 0usize;
        let mut rows = Vec::with_capacity(data.len());
        let mut meta = Vec::with_capacity(data.len());
        for r in 0..data.len() {
            let mut v = Vec::with_capacity(dim);
            for (c, &ci) in self.columns.iter().zip(&layout) {
                match c {
                    FittedColumn::Numeric { stats, .. } => v.push(stats.scale(data.numeric(r, ci))),
                    FittedColumn::Categorical { vocabulary, .. } => {
                        let start = v.len();
                        v.resize(start + vocabulary.len(), 0.0);
                        match vocabulary.binary_search(&data.rows[r][ci]) {
                            Ok(k) => v[start + k] = 1.0,
                            Err(_) => unseen += 1,
                        }
                    }
                }
            }
            rows.push(v);
            meta.push(RowMeta {
                row_id: data.row_ids[r],
                privileged: data.is_privileged(r),
                favorable: data.is_favorable(r),
            });
        }
        if unseen > 0 {
            warn!("{unseen} categorical value(s) unseen during fit encoded as all-zero blocks");
        }
        let normalization = self
            .columns
            .iter()
            .filter_map(|c| match c {
                FittedColumn::Numeric { name, stats } => Some((name.clone(), *stats)),
                FittedColumn::Categorical { .. } => None,
            })
            .collect();
        Ok(EncodedMatrix {
            rows,
            columns: self.feature_sources(),
            meta,
            normalization,
            unseen_categories: unseen,
        })
    }
}

/// Fits normalization and vocabularies on `train` and applies them to both sets.
pub fn encode(train: &RawDataset, test: &RawDataset) -> Result<(EncodedMatrix, EncodedMatrix)> {
    if train.schema.columns != test.schema.columns {
        return Err(Error::Schema(
            "train and test schemas differ; prune both identically".into(),
        ));
    }
    let encoder = Encoder::fit(train);
    Ok((encoder.transform(train)?, encoder.transform(test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{parse_text, ColumnSpec, DatasetSchema};

    fn schema() -> DatasetSchema {
        DatasetSchema {
            columns: vec![
                ColumnSpec::numeric("x"),
                ColumnSpec::categorical("c"),
                ColumnSpec::categorical("sexcopy"),
                ColumnSpec::categorical("sex"),
                ColumnSpec::categorical("y"),
            ],
            protected_attribute: "sex".into(),
            privileged_value: "m".into(),
            label_column: "y".into(),
            favorable_value: "1".into(),
            delimiter: ',',
            missing_token: None,
            value_map: Default::default(),
            has_header: false,
        }
    }

    fn data() -> RawDataset {
        let text = "0,a,M,m,1\n5,b,F,f,0\n10,c,M,m,0\n5,a,F,f,1\n";
        parse_text(text, &schema()).unwrap()
    }

    #[test]
    fn cramers_v_on_known_table() {
        // [[30,10],[10,30]]: chi2 = 20, n = 80
        let mut vals = Vec::new();
        let mut ind = Vec::new();
        for (v, g, n) in [("a", true, 30), ("a", false, 10), ("b", true, 10), ("b", false, 30)] {
            for _ in 0..n {
                vals.push(v);
                ind.push(g);
            }
        }
        let expected = (20.0f64 / 80.0).sqrt();
        assert!((cramers_v(&vals, &ind) - expected).abs() < 1e-12);
        assert!((cramers_v(&vals, &ind) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_null_association() {
        let ind = [true, false, true, false, false];
        let same: Vec<&str> = ind.iter().map(|&g| if g { "m" } else { "f" }).collect();
        assert!((cramers_v(&same, &ind) - 1.0).abs() < 1e-12);
        assert_eq!(cramers_v(&["k"; 5], &ind), 0.0);
        assert_eq!(point_biserial(&[3.0; 5], &ind), 0.0);
        let num: Vec<f64> = ind.iter().map(|&g| g as u8 as f64).collect();
        assert!((point_biserial(&num, &ind) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn association_symmetric_under_relabel() {
        let ind = [true, false, true, true, false, false, true];
        let flipped: Vec<bool> = ind.iter().map(|g| !g).collect();
        let x = [1.0, 4.0, 2.0, 0.5, 3.0, 9.0, 1.5];
        let c = ["a", "b", "a", "c", "b", "c", "a"];
        assert!((point_biserial(&x, &ind) - point_biserial(&x, &flipped)).abs() < 1e-12);
        assert!((cramers_v(&c, &ind) - cramers_v(&c, &flipped)).abs() < 1e-12);
    }

    #[test]
    fn prune_drops_protected_copy_only() {
        let (pruned, report) = prune_correlated(&data(), 0.8).unwrap();
        assert_eq!(report.dropped(), vec!["sexcopy".to_string()]);
        assert_eq!(report.columns.len(), 3);
        assert!(pruned.schema.index_of("sexcopy").is_err());
        assert!(pruned.schema.index_of("sex").is_ok());
    }

    #[test]
    fn prune_threshold_one_keeps_everything() {
        let (pruned, report) = prune_correlated(&data(), 1.0).unwrap();
        assert!(report.dropped().is_empty());
        assert_eq!(pruned.schema.columns.len(), 5);
        assert!(prune_correlated(&data(), 0.0).is_err());
    }

    #[test]
    fn min_max_and_one_hot() {
        let (pruned, _) = prune_correlated(&data(), 0.8).unwrap();
        let (train, _) = encode(&pruned, &pruned).unwrap();
        // x, then c ∈ {a,b,c}
        assert_eq!(train.dim(), 4);
        let xs: Vec<f64> = train.rows.iter().map(|r| r[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0, 0.5]);
        for r in &train.rows {
            assert_eq!(r[1..].iter().sum::<f64>(), 1.0);
        }
        train.assert_excludes("sex").unwrap();
        assert!(train.columns.iter().all(|c| c.column() != "y"));
    }

    #[test]
    fn unseen_test_category_is_zero_block() {
        let train = data().drop_columns(&["sexcopy".into()]).unwrap();
        let test = parse_text("20,z,M,m,1\n-5,a,F,f,0\n", &schema())
            .unwrap()
            .drop_columns(&["sexcopy".into()])
            .unwrap();
        let (_, te) = encode(&train, &test).unwrap();
        assert_eq!(te.unseen_categories, 1);
        assert_eq!(te.rows[0], vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(te.rows[1], vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_numeric_encodes_zero() {
        let text = "7,a,M,m,1\n7,b,F,f,0\n";
        let ds = parse_text(text, &schema()).unwrap();
        let (tr, _) = encode(&ds, &ds).unwrap();
        assert!(tr.rows.iter().all(|r| r[0] == 0.0));
    }
}
