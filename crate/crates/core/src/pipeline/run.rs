use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::artifacts::{header_lines, Artifacts};
use super::config::{PipelineConfig, RosterEntry};
use super::document::{DocumentModel, ModelDocument, Prediction};
use super::PipelineError;
use crate::dataset::{encode, load_dataset, Dataset, DesignMatrix, FeatureSchema, TargetKind, TargetSpec};
use crate::learners::{registry, LearnerSpec, TrainedRegressor};
use crate::metrics::{EvalReport, EvalRow, FoldScore, HoldoutScore, R2Definition};
use crate::split::{kfold_assign, spxy_split, Folds, SplitPlan, SpxyOptions};
use crate::stacking::{build_oof_matrix, train_stack_from, StackModel};
use crate::tuning::{cross_validate, random_search, SearchResult};

/// Loaded data, target encoding and split shared by every stage.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: PipelineConfig,
    pub config_sha256: String,
    pub dataset_sha256: String,
    pub schema: FeatureSchema,
    pub target: TargetSpec,
    pub dataset: Dataset,
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    pub plan: SplitPlan,
    /// Folds as row positions of the training matrix.
    pub folds: Folds,
    pub x_train: DesignMatrix,
    pub y_train: Vec<f64>,
    pub x_test: DesignMatrix,
    pub y_test: Vec<f64>,
}

/// Tuning, cross-validation and held-out results of one learner.
#[derive(Debug, Clone)]
pub struct LearnerOutcome {
    pub learner: String,
    pub label: String,
    /// Parameters used for every reported fit.
    pub spec: LearnerSpec,
    pub search: Option<SearchResult>,
    /// Fold scores on the held-out fold.
    pub cv: EvalRow,
    /// Per-fold models scored on the test set.
    pub test: EvalRow,
    /// Model refit on all training rows.
    pub model: TrainedRegressor,
    /// `model` scored on the test set.
    pub holdout: HoldoutScore,
}

/// Everything a full run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub experiment: Experiment,
    pub learners: Vec<LearnerOutcome>,
    pub cv_report: EvalReport,
    pub test_report: EvalReport,
    pub meta: Vec<LearnerOutcome>,
    pub meta_cv_report: EvalReport,
    pub meta_test_report: EvalReport,
    pub stack: StackModel,
    pub stack_holdout: HoldoutScore,
    /// `(column, source feature, importance)`, most important first.
    pub importance: Vec<(String, String, f64)>,
    pub artifacts: Artifacts,
}

impl RunOutput {
    /// Roster learner with the highest held-out R².
    pub fn best_single(&self) -> &LearnerOutcome {
        self.learners
            .iter()
            .reduce(|a, b| if b.holdout.r2 > a.holdout.r2 { b } else { a })
            .expect("roster is never empty")
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn target_name(kind: TargetKind) -> &'static str {
    match kind {
        TargetKind::Wavelength => "emission wavelength",
        TargetKind::Kr => "log10 k_r",
        TargetKind::Plqy => "PLQY",
    }
}

/// Reads the dataset and encodes the configured target.
pub fn load_and_encode(
    config: &PipelineConfig,
) -> Result<(FeatureSchema, TargetSpec, Dataset, DesignMatrix, Vec<f64>, String), PipelineError> {
    let schema = config.schema()?;
    let target = config.target_spec()?;
    let bytes = std::fs::read(&config.dataset)
        .map_err(|e| PipelineError::new("load", format!("{}: {e}", config.dataset.display())))?;
    let dataset = load_dataset(&config.dataset, &schema).map_err(|e| PipelineError::new("load", e))?;
    let (x, y) = encode(&dataset, &target).map_err(|e| PipelineError::new("encode", e))?;
    Ok((schema, target, dataset, x, y, sha256_hex(&bytes)))
}

/// SPXY split followed by fold assignment of the training rows.
pub fn plan_split(config: &PipelineConfig, x: &DesignMatrix, y: &[f64]) -> Result<SplitPlan, PipelineError> {
    let opts = SpxyOptions {
        train_fraction: config.split.train_fraction,
        standardize: config.split.spxy_on_standardized,
    };
    let plan = spxy_split(&x.data, y, opts).map_err(|e| PipelineError::new("split", e))?;
    kfold_assign(&plan, config.split.k, config.seed).map_err(|e| PipelineError::new("split", e))
}

/// Random search over `entry`'s space, or the fixed parameters when tuning is
/// off or the space is empty.
pub fn tune_learner(
    entry: &RosterEntry,
    budget: usize,
    x: &DesignMatrix,
    y: &[f64],
    folds: &Folds,
    seed: u64,
    def: R2Definition,
) -> Result<(LearnerSpec, Option<SearchResult>), PipelineError> {
    let base = LearnerSpec {
        learner: entry.learner.clone(),
        params: entry.params.clone(),
        seed,
    };
    let space = entry.space();
    if !entry.tune || space.is_empty() {
        return Ok((base, None));
    }
    let result = random_search(&base, &space, budget, x, y, folds, seed, def).map_err(|e| PipelineError::new("tune", e))?;
    Ok((result.best_spec(seed), Some(result)))
}

impl Experiment {
    /// Loads, encodes and splits. Fails on fold/size problems before any
    /// model is trained.
    pub fn prepare(config: &PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let (schema, target, dataset, x, y, dataset_sha256) = load_and_encode(config)?;
        let plan = plan_split(config, &x, &y)?;
        let folds = plan.fold_positions().map_err(|e| PipelineError::new("split", e))?;
        let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
        Ok(Self {
            config_sha256: config.hash(),
            config: config.clone(),
            dataset_sha256,
            schema,
            target,
            x_train: x.select_rows(&plan.train_indices),
            y_train: pick(&plan.train_indices),
            x_test: x.select_rows(&plan.test_indices),
            y_test: pick(&plan.test_indices),
            dataset,
            x,
            y,
            plan,
            folds,
        })
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn r2(&self) -> R2Definition {
        self.config.r2
    }

    pub fn header(&self) -> String {
        header_lines(&self.config_sha256, self.seed())
    }

    /// Tunes `entry` on `x`/`y` with the experiment folds, cross-validates the
    /// winner, scores the fold models on `x_test`, then refits on all rows.
    pub fn evaluate(
        &self,
        entry: &RosterEntry,
        budget: usize,
        x: &DesignMatrix,
        y: &[f64],
        x_test: &DesignMatrix,
        y_test: &[f64],
    ) -> Result<LearnerOutcome, PipelineError> {
        let label = registry().label(&entry.learner).to_string();
        let def = self.r2();
        let (spec, search) = tune_learner(entry, budget, x, y, &self.folds, self.seed(), def)?;
        let cv = cross_validate(&spec, x, y, &self.folds, def).map_err(|e| PipelineError::new("evaluate", e))?;
        let test_scores = cv
            .models
            .iter()
            .map(|m| {
                let pred = m.predict(x_test).map_err(|e| PipelineError::new("evaluate", e))?;
                FoldScore::compute(y_test, &pred, def).map_err(|e| PipelineError::new("evaluate", e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let model = TrainedRegressor::fit(&spec, x, y).map_err(|e| PipelineError::new("train", e))?;
        let pred = model.predict(x_test).map_err(|e| PipelineError::new("evaluate", e))?;
        let holdout = HoldoutScore::compute(y_test, &pred, def).map_err(|e| PipelineError::new("evaluate", e))?;
        Ok(LearnerOutcome {
            cv: EvalRow::from_scores(label.clone(), &cv.scores),
            test: EvalRow::from_scores(label.clone(), &test_scores),
            learner: entry.learner.clone(),
            label,
            spec,
            search,
            model,
            holdout,
        })
    }

    /// Evaluates one roster entry on the training split.
    pub fn evaluate_roster_entry(&self, entry: &RosterEntry) -> Result<LearnerOutcome, PipelineError> {
        self.evaluate(entry, self.config.search.budget, &self.x_train, &self.y_train, &self.x_test, &self.y_test)
    }

    /// Trains the configured stack. Bases reuse tuned parameters from
    /// `tuned` when available and are tuned here otherwise; every meta
    /// candidate is tuned on the out-of-fold matrix and the architecture's
    /// meta-learner is kept.
    pub fn stack(
        &self,
        tuned: &BTreeMap<String, LearnerSpec>,
    ) -> Result<(StackModel, Vec<LearnerOutcome>, HoldoutScore), PipelineError> {
        let mut arch = self.config.architecture();
        for base in arch.bases.iter_mut() {
            let spec = match tuned.get(&base.learner) {
                Some(s) => s.clone(),
                None => {
                    let entry = RosterEntry {
                        params: base.params.clone(),
                        ..RosterEntry::new(&base.learner)
                    };
                    self.tune(&entry)?.0
                }
            };
            *base = spec;
        }
        let oof = build_oof_matrix(&arch, &self.x_train, &self.y_train, &self.folds)
            .map_err(|e| PipelineError::new("stack", e))?;
        // Refit bases give the meta input for the test rows.
        let mut stack =
            train_stack_from(&arch, &self.x_train, &self.y_train, &oof).map_err(|e| PipelineError::new("stack", e))?;
        let meta_test = stack.meta_input(&self.x_test).map_err(|e| PipelineError::new("stack", e))?;

        let mut candidates = self.config.meta_candidates();
        if !candidates.contains(&arch.meta.learner) {
            candidates.push(arch.meta.learner.clone());
        }
        let mut meta = Vec::with_capacity(candidates.len());
        for c in &candidates {
            let entry = RosterEntry {
                params: if *c == arch.meta.learner { arch.meta.params.clone() } else { Default::default() },
                ..RosterEntry::new(c)
            };
            meta.push(self.evaluate(&entry, self.config.search.meta_budget, &oof.meta, &self.y_train, &meta_test, &self.y_test)?);
        }
        let chosen = meta.iter().find(|m| m.learner == arch.meta.learner).expect("meta learner evaluated");
        stack.architecture.meta = chosen.spec.clone();
        stack.meta = chosen.model.clone();
        let holdout = chosen.holdout;
        meta.retain(|m| self.config.meta_candidates().contains(&m.learner));
        Ok((stack, meta, holdout))
    }

    fn tune(&self, entry: &RosterEntry) -> Result<(LearnerSpec, Option<SearchResult>), PipelineError> {
        tune_learner(entry, self.config.search.budget, &self.x_train, &self.y_train, &self.folds, self.seed(), self.r2())
    }

    /// Model document wrapping `model`.
    pub fn document(&self, model: DocumentModel) -> ModelDocument {
        ModelDocument::new(&self.config_sha256, self.seed(), self.target.clone(), self.schema.clone(), model)
    }

    /// `id,index,set,fold,selection_order` for every sample.
    pub fn split_csv(&self) -> String {
        let ids = self.dataset.ids();
        let mut rows: Vec<(usize, &str, String, String)> = Vec::with_capacity(ids.len());
        let mut fold_of = BTreeMap::new();
        for (f, fold) in self.plan.folds.iter().enumerate() {
            for &i in fold {
                fold_of.insert(i, f);
            }
        }
        for (order, &i) in self.plan.train_indices.iter().enumerate() {
            rows.push((i, "train", fold_of.get(&i).map(|f| f.to_string()).unwrap_or_default(), order.to_string()));
        }
        for &i in &self.plan.test_indices {
            rows.push((i, "test", String::new(), String::new()));
        }
        rows.sort_by_key(|r| r.0);
        let mut out = self.header();
        out.push_str("id,index,set,fold,selection_order\n");
        for (i, set, fold, order) in rows {
            writeln!(out, "{},{i},{set},{fold},{order}", csv_field(ids[i])).unwrap();
        }
        out
    }

    fn report_text(&self, report: &EvalReport) -> String {
        format!("{}{}", self.header(), report.render_table())
    }

    fn report_csv(&self, report: &EvalReport) -> String {
        format!("{}{}", self.header(), report.to_csv())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `(column, source feature, importance)` sorted by decreasing importance,
/// then column name.
pub fn importance_table(model: &TrainedRegressor) -> Result<Vec<(String, String, f64)>, PipelineError> {
    let imp = model.feature_importance().map_err(|e| PipelineError::new("importance", e))?;
    let mut rows: Vec<(String, String, f64)> = model
        .columns
        .iter()
        .zip(&model.provenance)
        .map(|(c, p)| (c.clone(), p.clone(), imp[c]))
        .collect();
    rows.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    Ok(rows)
}

/// Importance as delimited text, with a per-source aggregate section.
pub(crate) fn importance_csv(header: &str, rows: &[(String, String, f64)]) -> String {
    let mut out = header.to_string();
    out.push_str("rank,column,source,importance\n");
    for (r, (c, p, v)) in rows.iter().enumerate() {
        writeln!(out, "{},{},{},{v}", r + 1, csv_field(c), csv_field(p)).unwrap();
    }
    out
}

pub(crate) fn importance_by_source_csv(header: &str, rows: &[(String, String, f64)]) -> String {
    let mut agg: BTreeMap<&str, f64> = BTreeMap::new();
    for (_, p, v) in rows {
        *agg.entry(p).or_default() += v;
    }
    let mut v: Vec<(&str, f64)> = agg.into_iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut out = header.to_string();
    out.push_str("rank,source,importance\n");
    for (r, (p, w)) in v.iter().enumerate() {
        writeln!(out, "{},{},{w}", r + 1, csv_field(p)).unwrap();
    }
    out
}

/// Plain-text view of the ten most important columns.
pub(crate) fn importance_top10(header: &str, label: &str, rows: &[(String, String, f64)]) -> String {
    let top = &rows[..rows.len().min(10)];
    let width = top.iter().map(|r| r.0.chars().count()).max().unwrap_or(0).max("feature".len());
    let mut out = header.to_string();
    writeln!(out, "Top features ({label})").unwrap();
    writeln!(out, "rank  {:<width$}  importance", "feature").unwrap();
    for (r, (c, _, v)) in top.iter().enumerate() {
        writeln!(out, "{:>4}  {c:<width$}  {v:.4}", r + 1).unwrap();
    }
    out
}

fn holdout_csv(header: &str, rows: &[(String, HoldoutScore)]) -> String {
    let mut out = header.to_string();
    out.push_str("model,n,mae,rmse,r2\n");
    for (m, s) in rows {
        writeln!(out, "{},{},{},{},{}", csv_field(m), s.n, s.mae, s.rmse, s.r2).unwrap();
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_sha256: &'a str,
    seed: u64,
    dataset: String,
    dataset_sha256: &'a str,
    target: &'a TargetSpec,
    files: BTreeMap<&'a str, String>,
}

/// Runs the whole experiment and assembles its artifacts.
pub fn run(config: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    let exp = Experiment::prepare(config)?;
    let kind = exp.target.kind;
    let header = exp.header();

    let mut learners = Vec::new();
    for entry in config.roster() {
        learners.push(exp.evaluate_roster_entry(&entry)?);
    }
    let tuned: BTreeMap<String, LearnerSpec> = learners.iter().map(|o| (o.learner.clone(), o.spec.clone())).collect();
    let (stack, meta, stack_holdout) = exp.stack(&tuned)?;

    let imp_learner = config.importance_learner();
    let imp_model = match learners.iter().find(|o| o.learner == imp_learner) {
        Some(o) => o.model.clone(),
        None => {
            let (spec, _) = exp.tune(&RosterEntry::new(&imp_learner))?;
            TrainedRegressor::fit(&spec, &exp.x_train, &exp.y_train).map_err(|e| PipelineError::new("importance", e))?
        }
    };
    let importance = importance_table(&imp_model)?;

    let name = target_name(kind);
    let k = exp.folds.k();
    let mut cv_report = EvalReport::new(format!("{name}: {k}-fold cross-validation on the training set"), kind, config.r2);
    let mut test_report = EvalReport::new(format!("{name}: fold models on the test set"), kind, config.r2);
    cv_report.rows = learners.iter().map(|o| o.cv.clone()).collect();
    test_report.rows = learners.iter().map(|o| o.test.clone()).collect();
    let mut meta_cv_report = EvalReport::new(format!("{name}: meta-learners, {k}-fold cross-validation"), kind, config.r2);
    let mut meta_test_report = EvalReport::new(format!("{name}: meta-learners on the test set"), kind, config.r2);
    meta_cv_report.rows = meta.iter().map(|o| o.cv.clone()).collect();
    meta_test_report.rows = meta.iter().map(|o| o.test.clone()).collect();

    let mut art = Artifacts::new();
    art.insert("config.toml".into(), config.canonical_toml());
    art.insert("split.csv".into(), exp.split_csv());
    let trials = learners.iter().map(|o| ("", o)).chain(meta.iter().map(|o| ("meta_", o)));
    for (prefix, o) in trials {
        if let Some(s) = &o.search {
            art.insert(format!("trials/{prefix}{}.csv", o.learner), format!("{header}{}", s.to_csv()));
        }
    }
    art.insert("reports/cv.txt".into(), exp.report_text(&cv_report));
    art.insert("reports/cv.csv".into(), exp.report_csv(&cv_report));
    art.insert("reports/test.txt".into(), exp.report_text(&test_report));
    art.insert("reports/test.csv".into(), exp.report_csv(&test_report));
    art.insert("reports/meta_cv.txt".into(), exp.report_text(&meta_cv_report));
    art.insert("reports/meta_cv.csv".into(), exp.report_csv(&meta_cv_report));
    art.insert("reports/meta_test.txt".into(), exp.report_text(&meta_test_report));
    art.insert("reports/meta_test.csv".into(), exp.report_csv(&meta_test_report));
    let mut holdout: Vec<(String, HoldoutScore)> = learners.iter().map(|o| (o.label.clone(), o.holdout)).collect();
    holdout.push(("Stack".into(), stack_holdout));
    art.insert("reports/holdout.csv".into(), holdout_csv(&header, &holdout));

    let imp_label = registry().label(&imp_learner);
    art.insert("importance/columns.csv".into(), importance_csv(&header, &importance));
    art.insert("importance/sources.csv".into(), importance_by_source_csv(&header, &importance));
    art.insert("importance/top10.txt".into(), importance_top10(&header, imp_label, &importance));

    art.insert("scatter.csv".into(), scatter_csv(&exp, &stack)?);

    for o in &learners {
        art.insert(
            format!("models/{}.json", o.learner),
            exp.document(DocumentModel::Single(o.model.clone())).to_json(),
        );
    }
    art.insert("models/stack.json".into(), exp.document(DocumentModel::Stack(stack.clone())).to_json());

    let manifest = Manifest {
        config_sha256: &exp.config_sha256,
        seed: exp.seed(),
        dataset: config.dataset.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        dataset_sha256: &exp.dataset_sha256,
        target: &exp.target,
        files: art.iter().map(|(k, v)| (k.as_str(), sha256_hex(v.as_bytes()))).collect(),
    };
    let mut manifest = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest.push('\n');
    art.insert("manifest.json".into(), manifest);

    Ok(RunOutput {
        experiment: exp,
        learners,
        cv_report,
        test_report,
        meta,
        meta_cv_report,
        meta_test_report,
        stack,
        stack_holdout,
        importance,
        artifacts: art,
    })
}

/// True-vs-predicted pairs of the final stack for every sample.
fn scatter_csv(exp: &Experiment, stack: &StackModel) -> Result<String, PipelineError> {
    let pred = stack.predict(&exp.x).map_err(|e| PipelineError::new("predict", e))?;
    let ids = exp.dataset.ids();
    let test: std::collections::BTreeSet<usize> = exp.plan.test_indices.iter().copied().collect();
    let mut out = exp.header();
    out.push_str("id,set,y_true,y_pred,y_true_reported,y_pred_reported\n");
    for (i, (&t, &p)) in exp.y.iter().zip(&pred).enumerate() {
        let set = if test.contains(&i) { "test" } else { "train" };
        writeln!(
            out,
            "{},{set},{t},{p},{},{}",
            csv_field(ids[i]),
            exp.target.inverse(t),
            exp.target.to_reported(p)
        )
        .unwrap();
    }
    Ok(out)
}

/// Predictions for `dataset`, plus a scored report when every sample carries
/// the model's target.
pub fn evaluate_external(
    doc: &ModelDocument,
    dataset: &Dataset,
    def: R2Definition,
) -> Result<(Vec<Prediction>, Option<EvalReport>), PipelineError> {
    let preds = doc.predict(dataset)?;
    let truth: Option<Vec<f64>> = dataset
        .samples()
        .iter()
        .map(|s| s.targets.get(doc.target.kind).map(|v| doc.target.forward(v)))
        .collect();
    let report = match truth {
        Some(t) if !t.is_empty() => {
            let p: Vec<f64> = preds.iter().map(|p| p.model_space).collect();
            let score = FoldScore::compute(&t, &p, def).map_err(|e| PipelineError::new("evaluate", e))?;
            let label = match &doc.model {
                DocumentModel::Single(m) => registry().label(&m.spec.learner).to_string(),
                DocumentModel::Stack(_) => "Stack".to_string(),
            };
            let mut r = EvalReport::new(format!("{}: external test set", target_name(doc.target.kind)), doc.target.kind, def);
            r.rows.push(EvalRow::from_scores(label, &[score]));
            Some(r)
        }
        _ => None,
    };
    Ok((preds, report))
}
