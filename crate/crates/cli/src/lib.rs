//! `delib` command line: data generation, model training and evaluation,
//! simulated deliberation sessions, and reliance reports from session logs.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use delib_core::dataset::{generate_synthetic, load_dataset, write_dataset, Dataset, Schema, SyntheticConfig};
use delib_core::knowledge::KnowledgeExtractor;
use delib_core::metrics::{reliance_report, write_reliance_csv, RelianceReport};
use delib_core::model::{fit, ModelSnapshot};
use delib_core::session::{Engine, JsonlStore, SessionStore};
use delib_core::simulate::{simulate, HumanPolicy, SimulationConfig, SimulationResult};

#[derive(Debug, Parser)]
#[command(name = "delib", version, about = "Human-AI deliberation engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic admissions dataset as CSV.
    Generate {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.25)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the model on a training split and save it.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        split: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Uncertainty halfgap: distance to a threshold at which uncertainty reaches zero.
        #[arg(long)]
        halfgap: Option<f64>,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Print binary accuracy of a saved model on the held-out split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        split: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Evaluate on every row instead of the held-out split.
        #[arg(long)]
        all: bool,
    },
    /// Run scripted sessions with a simulated human and the mock language model.
    Simulate {
        /// always-concede, always-argue, or oracle.
        #[arg(long)]
        policy: String,
        /// Argument strength for always-argue, in [0, 1].
        #[arg(long)]
        strength: Option<f64>,
        #[arg(long, default_value_t = 4)]
        cases: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Dataset CSV; a synthetic one is generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Size of the generated dataset.
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0.7)]
        split: f64,
        /// Move each case onto its nearest decision threshold.
        #[arg(long)]
        boundary: bool,
        /// Conflict threshold in percentage points.
        #[arg(long, default_value_t = delib_core::woe::DEFAULT_CONFLICT_THRESHOLD)]
        tau: f64,
        /// Reliance report CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for one JSONL event log per session.
        #[arg(long)]
        logs: Option<PathBuf>,
    },
    /// Reliance report from stored session logs, one participant per directory.
    Report {
        #[arg(long = "logs", required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Generate { n, seed, noise, out: path } => {
            let data = generate_synthetic(&Schema::admissions(), &SyntheticConfig::new(n, seed).with_noise(noise))?;
            File::create(&path).map_err(anyhow::Error::from).and_then(|f| Ok(write_dataset(&data, f)?)).with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "wrote {} rows to {}", data.len(), path.display())?;
        }
        Command::Train {
            data,
            split,
            seed,
            halfgap,
            out: path,
        } => {
            let dataset = load(&data)?;
            let (train, test) = dataset.split(split, seed)?;
            let mut model = fit(&train)?;
            if let Some(h) = halfgap {
                model = model.with_residual_halfgap(h)?;
            }
            model.save(&path).with_context(|| format!("writing {}", path.display()))?;
            if model.degenerate {
                writeln!(out, "warning: design matrix is rank deficient; minimum-norm weights used")?;
            }
            writeln!(out, "train rows: {}, test rows: {}", train.len(), test.len())?;
            writeln!(out, "test accuracy: {:.4}", model.binary_accuracy(&test)?)?;
            writeln!(out, "model written to {}", path.display())?;
        }
        Command::Eval {
            data,
            model,
            split,
            seed,
            all,
        } => {
            let dataset = load(&data)?;
            let snapshot = ModelSnapshot::load(&model).with_context(|| format!("reading {}", model.display()))?;
            let eval_set = if all { dataset } else { dataset.split(split, seed)?.1 };
            writeln!(out, "rows: {}", eval_set.len())?;
            writeln!(out, "accuracy: {:.4}", snapshot.binary_accuracy(&eval_set)?)?;
        }
        Command::Simulate {
            policy,
            strength,
            cases,
            seed,
            data,
            n,
            split,
            boundary,
            tau,
            out: report_path,
            logs,
        } => {
            let mut policy: HumanPolicy = policy.parse().map_err(anyhow::Error::msg)?;
            if let Some(s) = strength {
                match &mut policy {
                    HumanPolicy::AlwaysArgue { strength } => *strength = s,
                    _ => bail!("--strength only applies to always-argue"),
                }
            }
            let dataset = match &data {
                Some(path) => load(path)?,
                None => generate_synthetic(&Schema::admissions(), &SyntheticConfig::new(n, seed))?,
            };
            let (train, test) = dataset.split(split, seed)?;
            let model = fit(&train)?;
            let kx = Arc::new(KnowledgeExtractor::new(Arc::new(train), Arc::new(model))?);
            let mut config = SimulationConfig::new(policy, cases, seed).with_boundary(boundary);
            config.threshold = tau;
            let result = simulate(kx, &test, &config)?;
            if let Some(dir) = &logs {
                save_logs(dir, &result)?;
            }
            print_simulation(out, &result)?;
            let rows = vec![(policy.to_string(), result.report.clone())];
            write_csv(out, report_path.as_deref(), &rows)?;
        }
        Command::Report { logs, out: report_path } => {
            let mut rows = Vec::new();
            for dir in &logs {
                rows.push((participant_name(dir), report_from_logs(dir)?));
            }
            write_csv(out, report_path.as_deref(), &rows)?;
        }
    }
    Ok(())
}

fn load(path: &Path) -> Result<Dataset> {
    load_dataset(path, &Schema::admissions()).with_context(|| format!("loading {}", path.display()))
}

fn participant_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn save_logs(dir: &Path, result: &SimulationResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let store = JsonlStore::open(dir)?;
    for s in &result.sessions {
        let path = store.path_for(&s.session_id)?;
        if path.exists() {
            fs::remove_file(&path)?;
        }
        store.append(&s.session_id, &s.log)?;
    }
    Ok(())
}

/// Replays every session log in `dir` and reports over the decided ones.
pub fn report_from_logs(dir: &Path) -> Result<RelianceReport> {
    let store = JsonlStore::open(dir)?;
    let mut records = Vec::new();
    for id in store.session_ids()? {
        let entries = store.load(&id)?.unwrap_or_default();
        let session = Engine::replay(&entries).with_context(|| format!("replaying session {id}"))?;
        if let Some(r) = session.decision_record() {
            records.push(r);
        }
    }
    if records.is_empty() {
        bail!("no decided sessions in {}", dir.display());
    }
    Ok(reliance_report(&records)?)
}

fn print_simulation(out: &mut dyn Write, result: &SimulationResult) -> Result<()> {
    writeln!(out, "policy: {}", result.policy)?;
    for (s, r) in result.sessions.iter().zip(&result.records) {
        writeln!(
            out,
            "{} case {}: u_ai {:.3}, rounds {}, opinion changes {}, initial {}, ai {}, final {}, truth {}",
            s.session_id,
            s.case_id,
            s.prediction.uncertainty,
            s.transcript.iter().filter(|t| t.kind == delib_core::session::EntryKind::Message).count() / 2,
            s.opinion_changes.len(),
            r.human_initial.as_str(),
            r.ai_suggestion.as_str(),
            r.human_final.as_str(),
            r.ground_truth.as_str(),
        )?;
    }
    writeln!(
        out,
        "audit: {} opinion changes and {} AI messages checked, {} convexity and {} grounding findings",
        result.audit.changes_checked,
        result.audit.messages_checked,
        result.audit.convexity.len(),
        result.audit.grounding.len(),
    )?;
    Ok(())
}

fn write_csv(out: &mut dyn Write, path: Option<&Path>, rows: &[(String, RelianceReport)]) -> Result<()> {
    let mut buf = Vec::new();
    write_reliance_csv(&mut buf, rows)?;
    out.write_all(&buf)?;
    if let Some(path) = path {
        File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
