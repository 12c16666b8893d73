use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use radiomx::config::ExperimentConfig;
use radiomx::{pipeline, sweep};
use radiomx_core::features::Modality;
use radiomx_core::imgio::Task;
use radiomx_core::phantom::{self, PhantomSpec};

#[derive(Parser)]
#[command(name = "radiomx", version, about = "2D / 2.5D / 3D radiomics pipeline comparison")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON); missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for outputs (and stage inputs).
    #[arg(long, default_value = "radiomx_out")]
    out_dir: PathBuf,
    /// Directory holding manifest.csv.
    #[arg(long)]
    cohort: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<Task>>,
    #[arg(long, value_delimiter = ',')]
    modalities: Option<Vec<Modality>>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    stratify_split: bool,
    /// Shuffle labels across patients (null experiment).
    #[arg(long)]
    permute_labels: bool,
    #[arg(long)]
    bootstrap: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(p) = &self.cohort {
            c.cohort = p.clone();
        }
        if let Some(t) = &self.tasks {
            c.tasks = t.clone();
        }
        if let Some(m) = &self.modalities {
            c.modalities = m.clone();
        }
        if let Some(s) = self.split_seed {
            c.split_seed = s;
        }
        if let Some(b) = self.bootstrap {
            c.bootstrap_resamples = b;
        }
        c.stratify_split |= self.stratify_split;
        c.permute_labels |= self.permute_labels;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with planted texture signal.
    Phantom {
        /// Phantom spec (JSON); missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "cohort_out")]
        out_dir: PathBuf,
        #[arg(long)]
        n_patients: Option<usize>,
        /// Signal strength for all three tasks.
        #[arg(long)]
        signal: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        slice_thicknesses: Option<Vec<f64>>,
    },
    /// Resample, extract and write feature tables.
    Extract(Common),
    /// Run feature selection on extracted tables.
    Select(Common),
    /// Grid-search and fit a model per cell.
    Train(Common),
    /// Evaluate stored models and write report.json.
    Eval(Common),
    /// Extract, select, train and evaluate in one go.
    Run(Common),
    /// Spacing × repartition sweep with capped features and logistic models.
    Aux {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        repartitions: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        spacings: Option<Vec<f64>>,
    },
}

fn print_report(r: &radiomx::ComparisonReport) {
    println!("{:<5} {:<5} {:<22} {:<22} {:>3}  kind", "task", "mod", "training", "validation", "p");
    for c in &r.cells {
        println!(
            "{:<5} {:<5} {:<22} {:<22} {:>3}  {}",
            c.task.as_str(),
            c.modality.as_str(),
            c.training.to_string(),
            c.validation.to_string(),
            c.selected.len(),
            c.model_kind.map_or("-".to_string(), |k| format!("{k:?}")),
        );
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Phantom {
            config,
            seed,
            out_dir,
            n_patients,
            signal,
            slice_thicknesses,
        } => {
            let mut spec: PhantomSpec = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => PhantomSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(n) = n_patients {
                spec.n_patients = n;
            }
            if let Some(s) = signal {
                spec.signal = [s; 3];
            }
            if let Some(t) = slice_thicknesses {
                spec.slice_thicknesses = t;
            }
            let m = phantom::generate(&spec, &out_dir)?;
            println!("wrote {} patients to {}", m.session(1).len(), out_dir.display());
        }
        Command::Extract(c) => {
            let x = pipeline::cmd_extract(&c.config()?, &c.out_dir)?;
            for (m, t) in &x.tables {
                println!("{m}: {} rows", t.rows.len());
            }
        }
        Command::Select(c) => pipeline::cmd_select(&c.config()?, &c.out_dir)?,
        Command::Train(c) => pipeline::cmd_train(&c.config()?, &c.out_dir)?,
        Command::Eval(c) => print_report(&pipeline::cmd_eval(&c.config()?, &c.out_dir)?),
        Command::Run(c) => print_report(&pipeline::cmd_run(&c.config()?, &c.out_dir)?),
        Command::Aux {
            common,
            repartitions,
            spacings,
        } => {
            let mut cfg = common.config()?;
            if let Some(r) = repartitions {
                cfg.repartitions = r;
            }
            if let Some(s) = spacings {
                cfg.aux_spacings = s;
            }
            cfg.validate()?;
            let res = sweep::cmd_aux(&cfg, &common.out_dir)?;
            for c in &res.report.comparisons {
                println!(
                    "{:<4} {:>5.2} mm  2D {:.3}  3D {:.3}  P = {:.3e}",
                    c.task.as_str(),
                    c.spacing,
                    c.mean_2d,
                    c.mean_3d,
                    c.p_2d_vs_3d
                );
            }
        }
    }
    Ok(())
}
