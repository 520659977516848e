//! End-to-end pipeline: load, split, prune, encode, flag and remove
//! cross-group near-duplicates, reweigh, train, evaluate.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{load_csv, split_train_test, DatasetSchema, LoadStats, RawDataset};
use crate::debias::{
    flag_and_rank, members, partition_groups, remove_top_k, removal_budget, FlagRanking,
    GroupPartition, RemovalPlan, DEFAULT_SIMILARITY_THRESHOLD,
};
use crate::error::{Error, Result, StageContext};
use crate::metrics::{FairnessReport, RemovalStats};
use crate::model::{Classifier, LogisticConfig, LogisticModel, Trainer, LogisticTrainer};
use crate::preprocess::{prune_correlated, AssociationReport, EncodedMatrix, Encoder, DEFAULT_CORR_THRESHOLD};
use crate::reweigh::{compute_weights, SampleWeights};

/// Overrides applied on top of a schema file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemaOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected_attribute: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privileged_value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub favorable_value: Option<String>,
}

impl SchemaOverrides {
    pub fn apply(&self, mut schema: DatasetSchema) -> Result<DatasetSchema> {
        if let Some(v) = &self.protected_attribute {
            schema.protected_attribute = v.clone();
        }
        if let Some(v) = &self.privileged_value {
            schema.privileged_value = v.clone();
        }
        if let Some(v) = &self.label_column {
            schema.label_column = v.clone();
        }
        if let Some(v) = &self.favorable_value {
            schema.favorable_value = v.clone();
        }
        schema.validate()?;
        Ok(schema)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub schema: PathBuf,
    #[serde(default)]
    pub overrides: SchemaOverrides,
    pub test_fraction: f64,
    pub seed: u64,
    pub corr_threshold: f64,
    pub similarity_threshold: f64,
    pub removal_percents: Vec<f64>,
    pub reweigh: bool,
    pub trainer: LogisticConfig,
}

impl ExperimentConfig {
    pub fn new(data: impl Into<PathBuf>, schema: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            data: data.into(),
            schema: schema.into(),
            overrides: SchemaOverrides::default(),
            test_fraction: 0.3,
            seed: 42,
            corr_threshold: DEFAULT_CORR_THRESHOLD,
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
            removal_percents: vec![0.0, 1.0, 2.0],
            reweigh: true,
            trainer: LogisticConfig::default(),
        }
    }

    pub fn load_schema(&self) -> Result<DatasetSchema> {
        self.overrides
            .apply(DatasetSchema::from_json_file(&self.schema)?)
    }
}

/// Everything upstream of the removal step. Shared by every k so that all
/// runs see the same split and test set.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub schema: DatasetSchema,
    pub load_stats: LoadStats,
    pub kept_rows: usize,
    pub train_raw: RawDataset,
    pub association: AssociationReport,
    pub encoder: Encoder,
    pub train: EncodedMatrix,
    pub test: EncodedMatrix,
    pub partition: GroupPartition,
    pub ranking: FlagRanking,
    /// Training rows with the privileged / unprivileged protected value.
    pub train_protected_totals: (usize, usize),
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let schema = config.load_schema().stage("schema")?;
    let data = load_csv(&config.data, &schema).stage("load")?;
    info!(
        "loaded {} rows ({} dropped for missing values)",
        data.len(),
        data.stats.dropped_missing
    );
    let (train_raw, test_raw) =
        split_train_test(&data, config.test_fraction, config.seed).stage("split")?;
    let (train_raw, association) =
        prune_correlated(&train_raw, config.corr_threshold).stage("prune")?;
    let test_raw = test_raw
        .drop_columns(&association.dropped())
        .stage("prune")?;
    let encoder = Encoder::fit(&train_raw);
    let train = encoder.transform(&train_raw).stage("encode")?;
    let test = encoder.transform(&test_raw).stage("encode")?;
    train
        .assert_excludes(&schema.protected_attribute)
        .stage("encode")?;
    let partition = partition_groups(&train).stage("partition")?;
    let ranking = flag_and_rank(
        &members(&train, &partition.pf),
        &members(&train, &partition.uu),
        config.similarity_threshold,
    )
    .stage("flag")?;
    info!(
        "flagged {} / {} privileged-favorable and {} / {} unprivileged-unfavorable rows",
        ranking.pf.len(),
        partition.pf.len(),
        ranking.uu.len(),
        partition.uu.len()
    );
    let privileged = train.meta.iter().filter(|m| m.privileged).count();
    Ok(Prepared {
        kept_rows: data.len(),
        load_stats: data.stats,
        train_protected_totals: (privileged, train.len() - privileged),
        schema,
        train_raw,
        association,
        encoder,
        train,
        test,
        partition,
        ranking,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: FairnessReport,
    pub plan: RemovalPlan,
    pub weights: SampleWeights,
    pub model: LogisticModel,
    pub filtered_train: EncodedMatrix,
}

/// Runs removal (skipped at `k = 0`), reweighing, training and evaluation on
/// prepared data.
pub fn run_prepared(prep: &Prepared, config: &ExperimentConfig, k_percent: f64) -> Result<RunOutcome> {
    let (filtered, plan) = if k_percent == 0.0 {
        (prep.train.clone(), RemovalPlan::empty(0.0, prep.ranking.threshold))
    } else {
        let (priv_total, unpriv_total) = prep.train_protected_totals;
        let budget_pf = removal_budget(priv_total, k_percent).stage("remove")?;
        let budget_uu = removal_budget(unpriv_total, k_percent).stage("remove")?;
        remove_top_k(&prep.train, &prep.ranking, k_percent, budget_pf, budget_uu)
    };
    filtered
        .assert_excludes(&prep.schema.protected_attribute)
        .stage("train")?;
    let weights = if config.reweigh {
        compute_weights(&filtered).stage("reweigh")?
    } else {
        SampleWeights::uniform(&filtered)
    };
    let trainer = LogisticTrainer {
        config: config.trainer,
    };
    let model = trainer
        .fit(&filtered.rows, &filtered.labels(), &weights.weights, config.seed)
        .stage("train")?;
    let prediction = model.predict(&prep.test.rows).stage("predict")?;
    let removal = RemovalStats {
        k_percent,
        similarity_threshold: prep.ranking.threshold,
        flagged_pf: prep.ranking.pf.len(),
        flagged_uu: prep.ranking.uu.len(),
        removed_pf: plan.removed_pf.len(),
        removed_uu: plan.removed_uu.len(),
        budget_pf: plan.budget_pf,
        budget_uu: plan.budget_uu,
    };
    let report = FairnessReport::evaluate(
        &prediction.labels,
        &prep.test.labels(),
        &prep.test.protected(),
        filtered.len(),
        removal,
        config.reweigh,
    )
    .stage("metrics")?;
    Ok(RunOutcome {
        report,
        plan,
        weights,
        model,
        filtered_train: filtered,
    })
}

/// The whole pipeline for a single removal percentage.
pub fn run_pipeline(config: &ExperimentConfig, k_percent: f64) -> Result<FairnessReport> {
    let prep = prepare(config)?;
    Ok(run_prepared(&prep, config, k_percent)?.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub dropped_missing: usize,
    pub kept: usize,
    /// Per protected value, over every record in the file.
    pub protected_totals: BTreeMap<String, usize>,
    pub train_size: usize,
    pub test_size: usize,
    pub group_pf: usize,
    pub group_uu: usize,
    pub flagged_pf: usize,
    pub flagged_uu: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentEntry {
    pub k_percent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<FairnessReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<RemovalPlan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub protected_attribute: String,
    pub privileged_value: String,
    pub unprivileged_value: String,
    pub sign_convention: String,
    pub dataset: DatasetSummary,
    pub association: AssociationReport,
    pub entries: Vec<ExperimentEntry>,
    pub complete: bool,
}

impl ExperimentReport {
    pub fn entry(&self, k_percent: f64) -> Option<&FairnessReport> {
        self.entries
            .iter()
            .find(|e| e.k_percent == k_percent)
            .and_then(|e| e.report.as_ref())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Accuracy / AOD / SPD per removal percentage.
    pub fn render_fairness_table(&self) -> String {
        let name = self
            .config
            .data
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut out = String::new();
        let _ = writeln!(out, "{name}");
        let _ = writeln!(out, "{:<14} {:>9} {:>9} {:>9} {:>9}", "data", "accuracy", "AOD", "SPD", "removed");
        for e in &self.entries {
            let label = if e.k_percent == 0.0 {
                "raw".to_string()
            } else {
                format!("{} % removal", e.k_percent)
            };
            match &e.report {
                Some(r) => {
                    let _ = writeln!(
                        out,
                        "{label:<14} {:>9.4} {:>9.4} {:>9.4} {:>9}",
                        r.accuracy,
                        r.aod,
                        r.spd,
                        r.removal.removed_pf + r.removal.removed_uu
                    );
                }
                None => {
                    let _ = writeln!(
                        out,
                        "{label:<14} failed: {}",
                        e.error.as_deref().unwrap_or("unknown error")
                    );
                }
            }
        }
        out
    }

    /// Removal counts per protected value: dataset totals with the budgets
    /// they imply, then what was removed from the training split.
    pub fn render_removal_table(&self) -> String {
        let priv_v = &self.privileged_value;
        let unpriv_v = &self.unprivileged_value;
        let total = |v: &str| self.dataset.protected_totals.get(v).copied().unwrap_or(0);
        let (tp, tu) = (total(priv_v), total(unpriv_v));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>10} {:>10} {:>16} {:>16}",
            "instance", priv_v, unpriv_v, "removed (train)", "budget (train)"
        );
        let _ = writeln!(out, "{:<14} {tp:>10} {tu:>10}", "total");
        for e in self.entries.iter().filter(|e| e.k_percent > 0.0) {
            let budget = |n| removal_budget(n, e.k_percent).unwrap_or(0);
            let (removed, train_budget) = match &e.plan {
                Some(p) => (
                    format!("{}/{}", p.removed_pf.len(), p.removed_uu.len()),
                    format!("{}/{}", p.budget_pf, p.budget_uu),
                ),
                None => ("-".into(), "-".into()),
            };
            let _ = writeln!(
                out,
                "{:<14} {:>10} {:>10} {removed:>16} {train_budget:>16}",
                format!("{} % removal", e.k_percent),
                budget(tp),
                budget(tu)
            );
        }
        out
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let prep = prepare(config)?;
    let outcomes: Vec<(f64, Result<RunOutcome>)> = config
        .removal_percents
        .par_iter()
        .map(|&k| (k, run_prepared(&prep, config, k)))
        .collect();
    let mut complete = true;
    let entries = outcomes
        .into_iter()
        .map(|(k_percent, r)| match r {
            Ok(o) => ExperimentEntry {
                k_percent,
                report: Some(o.report),
                plan: Some(o.plan),
                error: None,
            },
            Err(e) => {
                complete = false;
                ExperimentEntry {
                    k_percent,
                    report: None,
                    plan: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    let dataset = DatasetSummary {
        records: prep.load_stats.records,
        dropped_missing: prep.load_stats.dropped_missing,
        kept: prep.kept_rows,
        protected_totals: prep.load_stats.raw_protected_counts.clone(),
        train_size: prep.train.len(),
        test_size: prep.test.len(),
        group_pf: prep.partition.pf.len(),
        group_uu: prep.partition.uu.len(),
        flagged_pf: prep.ranking.pf.len(),
        flagged_uu: prep.ranking.uu.len(),
    };
    Ok(ExperimentReport {
        config: config.clone(),
        protected_attribute: prep.schema.protected_attribute.clone(),
        privileged_value: prep.schema.privileged_value.clone(),
        unprivileged_value: prep.train_raw.protected.negative.clone().unwrap_or_default(),
        sign_convention: "privileged minus unprivileged; positive favors the privileged group".into(),
        dataset,
        association: prep.association,
        entries,
        complete,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn k_suffix(k: f64) -> String {
    format!("{k}").replace('.', "_")
}

/// Writes `report.json` and one `removal_plan_k<k>.csv` per removal run.
pub fn write_experiment(report: &ExperimentReport, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    write(&out_dir.join("report.json"), &report.to_json()?)?;
    for e in &report.entries {
        if let Some(plan) = &e.plan {
            let name = format!("removal_plan_k{}.csv", k_suffix(e.k_percent));
            write(&out_dir.join(name), &plan.to_csv()?)?;
        }
    }
    let tables = format!(
        "{}\n{}",
        report.render_fairness_table(),
        report.render_removal_table()
    );
    write(&out_dir.join("tables.txt"), &tables)
}

/// Trained model with what is needed to encode new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub model: LogisticModel,
    pub encoder: Encoder,
    pub feature_columns: Vec<crate::preprocess::FeatureSource>,
    pub dropped_columns: Vec<String>,
    pub removal: RemovalStats,
    pub reweighed: bool,
}

impl ModelArtifact {
    pub fn new(prep: &Prepared, outcome: &RunOutcome) -> Self {
        ModelArtifact {
            model: outcome.model.clone(),
            encoder: prep.encoder.clone(),
            feature_columns: prep.train.columns.clone(),
            dropped_columns: prep.association.dropped(),
            removal: outcome.report.removal.clone(),
            reweighed: outcome.report.reweighed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write(path, &serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Evaluates a saved model on the test split that `config` reproduces.
pub fn evaluate_artifact(artifact: &ModelArtifact, config: &ExperimentConfig) -> Result<FairnessReport> {
    let schema = config.load_schema().stage("schema")?;
    let data = load_csv(&config.data, &schema).stage("load")?;
    let (train, test) = split_train_test(&data, config.test_fraction, config.seed).stage("split")?;
    let test = artifact.encoder.transform(&test).stage("encode")?;
    test.assert_excludes(&schema.protected_attribute).stage("encode")?;
    let prediction = artifact.model.predict(&test.rows).stage("predict")?;
    FairnessReport::evaluate(
        &prediction.labels,
        &test.labels(),
        &test.protected(),
        train.len() - artifact.removal.removed_pf - artifact.removal.removed_uu,
        artifact.removal.clone(),
        artifact.reweighed,
    )
    .stage("metrics")
}

/// Writes the debiased training split (`debiased.csv`: row id, weight, raw
/// fields), the removal plan as CSV and JSON, and the association report.
pub fn write_debias_outputs(prep: &Prepared, outcome: &RunOutcome, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    let by_id: HashMap<usize, &Vec<String>> = prep
        .train_raw
        .row_ids
        .iter()
        .copied()
        .zip(&prep.train_raw.rows)
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row_id".to_string(), "weight".to_string()];
    header.extend(prep.train_raw.schema.columns.iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    for (id, weight) in outcome.weights.row_ids.iter().zip(&outcome.weights.weights) {
        let mut rec = vec![id.to_string(), format!("{weight:.12}")];
        rec.extend(by_id[id].iter().cloned());
        w.write_record(&rec)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(out_dir, e.into_error()))?;
    let debiased = out_dir.join("debiased.csv");
    fs::write(&debiased, bytes).map_err(|e| Error::io(&debiased, e))?;
    write(&out_dir.join("removal_plan.csv"), &outcome.plan.to_csv()?)?;
    write(
        &out_dir.join("removal_plan.json"),
        &serde_json::to_string_pretty(&outcome.plan)?,
    )?;
    write(
        &out_dir.join("association.json"),
        &serde_json::to_string_pretty(&prep.association)?,
    )
}
