use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use phosml::dataset::{load_dataset, TargetKind};
use phosml::pipeline::{
    evaluate_external, header_lines, importance_table, run, write_artifacts, Artifacts, DocumentModel, Experiment,
    ModelDocument, PipelineConfig, PipelineError, RosterEntry,
};

#[derive(Parser)]
#[command(name = "phosml", version, about = "Photophysical property regression for Pt(II) emitters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full experiment: split, tune and compare learners, stack, report.
    Run(ConfigArgs),
    /// SPXY train/test split and fold assignment.
    Split(ConfigArgs),
    /// Random search for one learner on the training split.
    Tune {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        learner: String,
    },
    /// Fit one learner on the training split and save a model document.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        learner: String,
        /// Use the configured parameters without searching.
        #[arg(long)]
        no_tune: bool,
    },
    /// Train the configured stack and compare meta-learners.
    Stack(ConfigArgs),
    /// Cross-validation and test-set tables for the roster.
    Evaluate(ConfigArgs),
    /// Apply a model document to a descriptor file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Predictions file; stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Feature importance of a single-model document.
    Importance {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Full table as delimited text.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

/// Config file plus overrides of its keys.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    target: Option<TargetKind>,
    /// Trials per learner.
    #[arg(long)]
    budget: Option<usize>,
    /// Trials per meta-learner candidate.
    #[arg(long)]
    meta_budget: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(&self.config)
            .map_err(|e| PipelineError::new("config", format!("{}: {e}", self.config.display())))?;
        let mut cfg = PipelineConfig::from_toml_unchecked(&text)?;
        let dir = self.config.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(dir);
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(t) = self.target {
            cfg.target.kind = t;
        }
        if let Some(b) = self.budget {
            cfg.search.budget = b;
        }
        if let Some(b) = self.meta_budget {
            cfg.search.meta_budget = b;
        }
        if let Some(k) = self.folds {
            cfg.split.k = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn thread_pool() -> Result<()> {
    if let Ok(v) = std::env::var("PHOSML_THREADS") {
        let n: usize = v.parse().with_context(|| format!("PHOSML_THREADS={v} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match thread_pool().and_then(|_| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<PipelineError>() {
                Some(p) if p.stage == "config" => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(a) => cmd_run(&a.load()?),
        Command::Split(a) => cmd_split(&a.load()?),
        Command::Tune { cfg, learner } => cmd_tune(&cfg.load()?, &learner),
        Command::Train { cfg, learner, no_tune } => cmd_train(&cfg.load()?, &learner, !no_tune),
        Command::Stack(a) => cmd_stack(&a.load()?),
        Command::Evaluate(a) => cmd_evaluate(&a.load()?),
        Command::Predict { model, data, output } => cmd_predict(&model, &data, output.as_deref()),
        Command::Importance { model, top, output } => cmd_importance(&model, top, output.as_deref()),
    }
}

fn finish(cfg: &PipelineConfig, artifacts: &Artifacts) -> Result<()> {
    write_artifacts(&cfg.output, artifacts)?;
    for name in artifacts.keys() {
        eprintln!("wrote {}", cfg.output.join(name).display());
    }
    Ok(())
}

fn cmd_run(cfg: &PipelineConfig) -> Result<()> {
    let out = run(cfg)?;
    print!("{}", out.cv_report.render_table());
    println!();
    print!("{}", out.meta_test_report.render_table());
    println!();
    let best = out.best_single();
    println!(
        "held-out: stack R² {:.4} MAE {:.4}; best single ({}) R² {:.4} MAE {:.4}",
        out.stack_holdout.r2, out.stack_holdout.mae, best.label, best.holdout.r2, best.holdout.mae
    );
    finish(cfg, &out.artifacts)
}

fn cmd_split(cfg: &PipelineConfig) -> Result<()> {
    let exp = Experiment::prepare(cfg)?;
    println!(
        "{} training rows in {} folds, {} test rows",
        exp.plan.train_indices.len(),
        exp.folds.k(),
        exp.plan.test_indices.len()
    );
    finish(cfg, &Artifacts::from([("split.csv".to_string(), exp.split_csv())]))
}

fn roster_entry(cfg: &PipelineConfig, learner: &str) -> RosterEntry {
    cfg.roster()
        .into_iter()
        .find(|e| e.learner == learner)
        .unwrap_or_else(|| RosterEntry::new(learner))
}

fn cmd_tune(cfg: &PipelineConfig, learner: &str) -> Result<()> {
    phosml::learners::registry().get(learner).map_err(|e| PipelineError::new("config", e))?;
    let exp = Experiment::prepare(cfg)?;
    let entry = RosterEntry {
        tune: true,
        ..roster_entry(cfg, learner)
    };
    let (spec, search) = phosml::pipeline::tune_learner(
        &entry,
        cfg.search.budget,
        &exp.x_train,
        &exp.y_train,
        &exp.folds,
        cfg.seed,
        cfg.r2,
    )?;
    let Some(search) = search else { bail!("learner `{learner}` has an empty search space") };
    let best = search.best_trial();
    println!(
        "best trial {} of {}: RMSE {} MAE {}",
        best.index,
        search.trials.len(),
        best.rmse.render(),
        best.mae.render()
    );
    println!("{}", serde_json::to_string(&spec.params)?);
    let csv = format!("{}{}", exp.header(), search.to_csv());
    finish(cfg, &Artifacts::from([(format!("trials/{learner}.csv"), csv)]))
}

fn cmd_train(cfg: &PipelineConfig, learner: &str, tune: bool) -> Result<()> {
    phosml::learners::registry().get(learner).map_err(|e| PipelineError::new("config", e))?;
    let exp = Experiment::prepare(cfg)?;
    let entry = RosterEntry {
        tune: tune && roster_entry(cfg, learner).tune,
        ..roster_entry(cfg, learner)
    };
    let o = exp.evaluate_roster_entry(&entry)?;
    println!(
        "{}: CV MAE {} RMSE {} R² {}; held-out R² {:.4} MAE {:.4}",
        o.label,
        o.cv.mae.render(),
        o.cv.rmse.render(),
        o.cv.r2.render(),
        o.holdout.r2,
        o.holdout.mae
    );
    let mut art = Artifacts::new();
    art.insert(format!("models/{learner}.json"), exp.document(DocumentModel::Single(o.model)).to_json());
    if let Some(s) = o.search {
        art.insert(format!("trials/{learner}.csv"), format!("{}{}", exp.header(), s.to_csv()));
    }
    finish(cfg, &art)
}

fn cmd_stack(cfg: &PipelineConfig) -> Result<()> {
    let exp = Experiment::prepare(cfg)?;
    let (stack, meta, holdout) = exp.stack(&BTreeMap::new())?;
    let kind = exp.target.kind;
    let mut cv = phosml::metrics::EvalReport::new("meta-learners, cross-validation", kind, cfg.r2);
    let mut test = phosml::metrics::EvalReport::new("meta-learners on the test set", kind, cfg.r2);
    cv.rows = meta.iter().map(|m| m.cv.clone()).collect();
    test.rows = meta.iter().map(|m| m.test.clone()).collect();
    print!("{}", test.render_table());
    println!("held-out stack: R² {:.4} MAE {:.4} RMSE {:.4}", holdout.r2, holdout.mae, holdout.rmse);
    let h = exp.header();
    let mut art = Artifacts::new();
    art.insert("models/stack.json".into(), exp.document(DocumentModel::Stack(stack)).to_json());
    art.insert("reports/meta_cv.txt".into(), format!("{h}{}", cv.render_table()));
    art.insert("reports/meta_test.txt".into(), format!("{h}{}", test.render_table()));
    finish(cfg, &art)
}

fn cmd_evaluate(cfg: &PipelineConfig) -> Result<()> {
    let exp = Experiment::prepare(cfg)?;
    let kind = exp.target.kind;
    let k = exp.folds.k();
    let mut cv = phosml::metrics::EvalReport::new(format!("{k}-fold cross-validation on the training set"), kind, cfg.r2);
    let mut test = phosml::metrics::EvalReport::new("fold models on the test set", kind, cfg.r2);
    for entry in cfg.roster() {
        let o = exp.evaluate_roster_entry(&entry)?;
        cv.rows.push(o.cv);
        test.rows.push(o.test);
    }
    print!("{}", cv.render_table());
    println!();
    print!("{}", test.render_table());
    let h = exp.header();
    let mut art = Artifacts::new();
    art.insert("reports/cv.txt".into(), format!("{h}{}", cv.render_table()));
    art.insert("reports/cv.csv".into(), format!("{h}{}", cv.to_csv()));
    art.insert("reports/test.txt".into(), format!("{h}{}", test.render_table()));
    art.insert("reports/test.csv".into(), format!("{h}{}", test.to_csv()));
    finish(cfg, &art)
}

fn cmd_predict(model: &Path, data: &Path, output: Option<&Path>) -> Result<()> {
    let doc = ModelDocument::load(model)?;
    let dataset = load_dataset(data, &doc.schema).map_err(|e| PipelineError::new("load", e))?;
    let (preds, report) = evaluate_external(&doc, &dataset, Default::default())?;
    let kind = doc.target.kind;
    let mut out = header_lines(&doc.config_sha256, doc.seed);
    match kind {
        TargetKind::Kr => out.push_str("id,kr_per_s,log10_kr_per_s\n"),
        _ => writeln!(out, "id,{}", kind.column())?,
    }
    for (s, p) in dataset.samples().iter().zip(&preds) {
        match kind {
            TargetKind::Kr => writeln!(out, "{},{},{}", s.id, p.reported, p.model_space)?,
            _ => writeln!(out, "{},{}", s.id, p.reported)?,
        }
    }
    match output {
        Some(path) => {
            std::fs::write(path, &out).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{out}"),
    }
    if let Some(r) = report {
        let text = r.render_table();
        match output {
            Some(path) => {
                let rp = path.with_extension("report.txt");
                std::fs::write(&rp, format!("{}{text}", header_lines(&doc.config_sha256, doc.seed)))
                    .with_context(|| format!("writing {}", rp.display()))?;
                eprint!("{text}");
                eprintln!("wrote {}", rp.display());
            }
            None => eprint!("{text}"),
        }
    }
    Ok(())
}

fn cmd_importance(model: &Path, top: usize, output: Option<&Path>) -> Result<()> {
    let doc = ModelDocument::load(model)?;
    let DocumentModel::Single(m) = &doc.model else {
        bail!(PipelineError::new("importance", "importance is defined for single-model documents; pass one of the roster models"));
    };
    let rows = importance_table(m)?;
    let width = rows.iter().take(top).map(|r| r.0.chars().count()).max().unwrap_or(0).max(7);
    println!("rank  {:<width$}  importance", "feature");
    for (i, (c, _, v)) in rows.iter().take(top).enumerate() {
        println!("{:>4}  {c:<width$}  {v:.4}", i + 1);
    }
    if let Some(path) = output {
        let mut out = header_lines(&doc.config_sha256, doc.seed);
        out.push_str("rank,column,source,importance\n");
        for (i, (c, p, v)) in rows.iter().enumerate() {
            writeln!(out, "{},{c},{p},{v}", i + 1)?;
        }
        std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
