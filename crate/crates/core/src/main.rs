use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairprep::harness::{
    evaluate_artifact, ensure_dir, prepare, run_experiment, run_prepared, write_debias_outputs,
    write_experiment, ExperimentConfig, ModelArtifact, SchemaOverrides,
};
use fairprep::{LogisticConfig, Result};

#[derive(Parser)]
#[command(name = "fairprep", version, about = "Remove cross-group near-duplicates, reweigh, train and audit fairness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flag and remove near-duplicates from the training split; write the
    /// debiased rows with weights and the removal plan.
    Debias(Common),
    /// Run the pipeline for one removal percentage and write model.json.
    Train(Common),
    /// Evaluate a saved model on the reproduced test split; write report.json.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "model.json")]
        model: PathBuf,
    },
    /// Sweep removal percentages and write report.json, removal plans and tables.
    Experiment(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    protected_attr: Option<String>,
    #[arg(long)]
    privileged_value: Option<String>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    favorable_value: Option<String>,
    #[arg(long, default_value_t = fairprep::debias::DEFAULT_SIMILARITY_THRESHOLD)]
    similarity_threshold: f64,
    /// Removal percentage(s); comma separated for `experiment`.
    #[arg(long, value_delimiter = ',')]
    removal_percent: Vec<f64>,
    #[arg(long, default_value_t = fairprep::preprocess::DEFAULT_CORR_THRESHOLD)]
    corr_threshold: f64,
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Train with unit weights instead of reweighing.
    #[arg(long)]
    no_reweigh: bool,
    #[arg(long, default_value_t = LogisticConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = LogisticConfig::default().l2_penalty)]
    l2_penalty: f64,
    #[arg(long, default_value_t = LogisticConfig::default().max_epochs)]
    max_epochs: usize,
}

impl Common {
    fn config(&self, default_percents: &[f64]) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(&self.data, &self.schema);
        cfg.overrides = SchemaOverrides {
            protected_attribute: self.protected_attr.clone(),
            privileged_value: self.privileged_value.clone(),
            label_column: self.label.clone(),
            favorable_value: self.favorable_value.clone(),
        };
        cfg.similarity_threshold = self.similarity_threshold;
        cfg.corr_threshold = self.corr_threshold;
        cfg.test_fraction = self.test_fraction;
        cfg.seed = self.seed;
        cfg.reweigh = !self.no_reweigh;
        cfg.trainer = LogisticConfig {
            learning_rate: self.learning_rate,
            l2_penalty: self.l2_penalty,
            max_epochs: self.max_epochs,
            ..LogisticConfig::default()
        };
        cfg.removal_percents = if self.removal_percent.is_empty() {
            default_percents.to_vec()
        } else {
            self.removal_percent.clone()
        };
        cfg
    }

    fn single_percent(&self) -> f64 {
        self.removal_percent.first().copied().unwrap_or(1.0)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Debias(c) => {
            let cfg = c.config(&[1.0]);
            let prep = prepare(&cfg)?;
            let outcome = run_prepared(&prep, &cfg, c.single_percent())?;
            write_debias_outputs(&prep, &outcome, &c.out_dir)?;
            println!(
                "removed {} privileged-favorable and {} unprivileged-unfavorable rows; {} rows remain",
                outcome.plan.removed_pf.len(),
                outcome.plan.removed_uu.len(),
                outcome.filtered_train.len()
            );
        }
        Command::Train(c) => {
            let cfg = c.config(&[1.0]);
            let prep = prepare(&cfg)?;
            let outcome = run_prepared(&prep, &cfg, c.single_percent())?;
            ensure_dir(&c.out_dir)?;
            ModelArtifact::new(&prep, &outcome).save(&c.out_dir.join("model.json"))?;
            let s = &outcome.model.summary;
            println!(
                "trained on {} rows: {} epochs, loss {:.6}, converged {}",
                outcome.filtered_train.len(),
                s.epochs,
                s.final_loss,
                s.converged
            );
        }
        Command::Evaluate { common, model } => {
            let cfg = common.config(&[]);
            let artifact = ModelArtifact::load(&model)?;
            let report = evaluate_artifact(&artifact, &cfg)?;
            ensure_dir(&common.out_dir)?;
            let path = common.out_dir.join("report.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)?)
                .map_err(|e| fairprep::Error::Io { path, source: e })?;
            println!(
                "accuracy {:.4}  AOD {:.4}  SPD {:.4}",
                report.accuracy, report.aod, report.spd
            );
        }
        Command::Experiment(c) => {
            let cfg = c.config(&[0.0, 1.0, 2.0]);
            let report = run_experiment(&cfg)?;
            write_experiment(&report, &c.out_dir)?;
            println!("{}", report.render_fairness_table());
            println!("{}", report.render_removal_table());
            if !report.complete {
                eprintln!("warning: some runs failed; see report.json");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
