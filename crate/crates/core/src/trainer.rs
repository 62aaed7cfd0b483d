//! Training regime: softmax-only pretraining, then joint sample and set
//! supervision with offline and online set-parameter maintenance. Also
//! hosts the small synthetic experiments built on top of it.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::data::{gen_blobs, DataError, LabeledDataset, PairList};
use crate::eval::{score_pairs, verification_metrics, EvalError, VerificationReport};
use crate::linalg::Matrix;
use crate::losses::{
    center_loss, combine_losses, max_margin_loss, pushing_loss, softmax_loss, LossError, LossResult, LossWeights,
};
use crate::model::{adam_step, init_model, AdamState, ClassifierHead, LrSchedule, ModelError, ModelParams, Parameters};
use crate::seeded_rng;
use crate::setparams::{offline_update, online_update, SetParams, SetParamsError, SetTargets, UpdateMode, UpdateSchedule};
use crate::svm::{fit_one_vs_all, min_pairwise_margin, SvmConfig, SvmError, HARD_MARGIN};

const SHUFFLE_STREAM: u64 = 30;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {term} at iteration {iteration}")]
    NonFinite { term: String, iteration: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    SetParams(#[from] SetParamsError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SetTerm {
    MaxMargin,
    Center,
    Pushing,
}

impl fmt::Display for SetTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SetTerm::MaxMargin => "max_margin",
            SetTerm::Center => "center",
            SetTerm::Pushing => "pushing",
        })
    }
}

impl FromStr for SetTerm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "max_margin" => Ok(SetTerm::MaxMargin),
            "center" => Ok(SetTerm::Center),
            "pushing" => Ok(SetTerm::Pushing),
            other => Err(format!(
                "unknown set term {other:?} (expected max_margin, center or pushing)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub layer_dims: Vec<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub schedule: LrSchedule,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weights: LossWeights,
    pub update: UpdateSchedule,
    pub svm: SvmConfig,
    pub seed: u64,
    pub set_terms: BTreeSet<SetTerm>,
    /// Draw ⌈batch/m⌉ samples per class instead of shuffling uniformly.
    pub balanced: bool,
    /// Stop updating the backbone once set supervision starts; the head
    /// keeps training.
    pub freeze_backbone: bool,
}

impl TrainConfig {
    /// Defaults for everything but the architecture.
    pub fn new(layer_dims: Vec<usize>) -> Self {
        Self {
            layer_dims,
            batch_size: 64,
            epochs: 30,
            pretrain_epochs: 15,
            schedule: LrSchedule::paper_default(),
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weights: LossWeights::default(),
            update: UpdateSchedule::default(),
            svm: SvmConfig::default(),
            seed: 0,
            set_terms: BTreeSet::new(),
            balanced: false,
            freeze_backbone: false,
        }
    }

    pub fn with_terms(mut self, terms: &[SetTerm]) -> Self {
        self.set_terms = terms.iter().copied().collect();
        self
    }

    /// Enabled terms whose weight is positive; a zero weight disables a term.
    pub fn effective_terms(&self) -> Vec<SetTerm> {
        self.set_terms
            .iter()
            .copied()
            .filter(|t| self.lambda(*t) > 0.0)
            .collect()
    }

    fn lambda(&self, term: SetTerm) -> f64 {
        match term {
            SetTerm::MaxMargin => self.weights.lambda_m,
            SetTerm::Center => self.weights.lambda_c,
            SetTerm::Pushing => self.weights.lambda_p,
        }
    }

    fn targets(&self) -> SetTargets {
        let terms = self.effective_terms();
        SetTargets {
            centroids: terms.iter().any(|t| matches!(t, SetTerm::Center | SetTerm::Pushing)),
            hyperplanes: terms.contains(&SetTerm::MaxMargin),
        }
    }

    pub fn validate(&self, train: &LabeledDataset) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.layer_dims.len() < 2 {
            return bad("layer_dims needs an input and an embedding width".into());
        }
        if self.layer_dims[0] != train.dim() {
            return bad(format!(
                "layer_dims starts at {} but the data has {} features",
                self.layer_dims[0],
                train.dim()
            ));
        }
        if train.class_count() < 2 {
            return bad("training needs at least 2 classes".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if self.pretrain_epochs > self.epochs {
            return bad(format!(
                "pretrain_epochs ({}) exceeds epochs ({})",
                self.pretrain_epochs, self.epochs
            ));
        }
        if self.schedule.final_epoch() + 1 < self.epochs {
            return bad(format!(
                "learning-rate schedule ends at epoch {} but training runs {} epochs",
                self.schedule.final_epoch(),
                self.epochs
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be finite and >= 0, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("Adam needs beta1, beta2 in [0, 1) and epsilon > 0".into());
        }
        self.weights.validate()?;
        self.update.validate()?;
        self.svm.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_softmax: f64,
    pub loss_maxmargin: f64,
    pub loss_center: f64,
    pub loss_pushing: f64,
    /// Classes skipped by the max-margin term or by set updates this iteration.
    pub skipped_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochEval {
    pub epoch: usize,
    pub report: VerificationReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub iterations: Vec<IterationRecord>,
    pub evals: Vec<EpochEval>,
}

impl MetricsLog {
    pub const ITERATION_HEADER: &'static str =
        "iteration,epoch,lr,loss_total,loss_softmax,loss_maxmargin,loss_center,loss_pushing,skipped_classes";
    pub const EVAL_HEADER: &'static str = "epoch,accuracy,auc,eer,threshold";

    /// Iteration rows, then the per-epoch evaluation rows under their own
    /// header. Floats use shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", Self::ITERATION_HEADER);
        for r in &self.iterations {
            let _ = writeln!(
                s,
                "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{}",
                r.iteration,
                r.epoch,
                r.lr,
                r.loss_total,
                r.loss_softmax,
                r.loss_maxmargin,
                r.loss_center,
                r.loss_pushing,
                r.skipped_classes
            );
        }
        let _ = writeln!(s, "{}", Self::EVAL_HEADER);
        for e in &self.evals {
            let r = &e.report;
            let _ = writeln!(s, "{},{:?},{:?},{:?},{:?}", e.epoch, r.accuracy, r.auc, r.eer, r.threshold);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(path, self.to_csv())
    }

    pub fn final_report(&self) -> Option<&VerificationReport> {
        self.evals.last().map(|e| &e.report)
    }
}

/// Progress notifications for callers that need more than the final state.
pub enum TrainEvent<'a> {
    /// Fired after a full offline update, with the model it was computed from.
    Offline {
        iteration: usize,
        set_params: &'a SetParams,
        model: &'a ModelParams,
    },
    Online {
        iteration: usize,
    },
    EpochEnd {
        epoch: usize,
        model: &'a ModelParams,
        head: &'a ClassifierHead,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: MetricsLog,
    /// Iterations at which a full offline update ran.
    pub offline_iterations: Vec<usize>,
    pub online_updates: usize,
}

pub fn train(config: &TrainConfig, train_set: &LabeledDataset, eval: Option<(&LabeledDataset, &PairList)>) -> Result<TrainOutcome> {
    train_with_observer(config, train_set, eval, &mut |_| {})
}

fn ensure_finite(r: &LossResult, term: &str, iteration: usize) -> Result<()> {
    if r.is_finite() {
        Ok(())
    } else {
        Err(TrainError::NonFinite {
            term: format!("{term} loss"),
            iteration,
        })
    }
}

fn batches(config: &TrainConfig, train: &LabeledDataset, rng: &mut impl rand::Rng) -> Vec<Vec<usize>> {
    let n = train.len();
    let count = (n / config.batch_size).max(1);
    if config.balanced {
        let members = train.class_members();
        let per_class = config.batch_size.div_ceil(train.class_count());
        (0..count)
            .map(|_| {
                let mut batch = Vec::new();
                for class in &members {
                    let k = per_class.min(class.len());
                    let picks = rand::seq::index::sample(&mut *rng, class.len(), k);
                    batch.extend(picks.into_iter().map(|p| class[p]));
                }
                batch
            })
            .collect()
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let size = config.batch_size.min(n);
        order.chunks_exact(size).take(count).map(<[usize]>::to_vec).collect()
    }
}

fn evaluate(model: &ModelParams, eval: (&LabeledDataset, &PairList)) -> Result<VerificationReport> {
    let (ds, pairs) = eval;
    let emb = model.embed(ds.features())?;
    let scores = score_pairs(&emb, pairs)?;
    Ok(verification_metrics(&scores, &pairs.same_identity())?)
}

/// [`train`], reporting updates and epoch ends to `observer`.
pub fn train_with_observer(
    config: &TrainConfig,
    train_set: &LabeledDataset,
    eval: Option<(&LabeledDataset, &PairList)>,
    observer: &mut dyn FnMut(TrainEvent<'_>),
) -> Result<TrainOutcome> {
    config.validate(train_set)?;
    let m = train_set.class_count();
    let mut model = init_model(&config.layer_dims, config.seed)?;
    let mut head = ClassifierHead::init(model.embedding_dim(), m, config.seed)?;
    let mut model_adam = AdamState::new(&model, config.beta1, config.beta2, config.epsilon);
    let mut head_adam = AdamState::new(&head, config.beta1, config.beta2, config.epsilon);

    let terms = config.effective_terms();
    let targets = config.targets();
    let mut set_params: Option<SetParams> = None;
    let mut rng = seeded_rng(config.seed, SHUFFLE_STREAM);
    let mut log = MetricsLog::default();
    let mut offline_iterations = Vec::new();
    let mut online_updates = 0usize;
    let mut iteration = 0usize;

    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at_epoch(epoch)?;
        let set_phase = epoch >= config.pretrain_epochs && !terms.is_empty();
        for batch in batches(config, train_set, &mut rng) {
            let mut skipped = 0usize;
            if set_phase {
                let due = match &set_params {
                    None => true,
                    Some(_) => config.update.mode.uses_offline() && iteration % config.update.offline_period_iters == 0,
                };
                if due {
                    let (sp, report) = offline_update(
                        &model,
                        train_set,
                        &config.update,
                        &config.svm,
                        targets,
                        config.seed,
                        iteration,
                    )?;
                    skipped += report.skipped.len();
                    offline_iterations.push(iteration);
                    observer(TrainEvent::Offline {
                        iteration,
                        set_params: &sp,
                        model: &model,
                    });
                    set_params = Some(sp);
                }
            }

            let x = train_set.features().select_rows(&batch);
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.labels()[i]).collect();
            let (emb, cache) = model.forward(&x)?;
            let softmax = softmax_loss(&head, &emb, &labels)?.scaled(config.weights.softmax);
            ensure_finite(&softmax, "softmax", iteration)?;
            let mut record = IterationRecord {
                iteration,
                epoch,
                lr,
                loss_total: 0.0,
                loss_softmax: softmax.value,
                loss_maxmargin: 0.0,
                loss_center: 0.0,
                loss_pushing: 0.0,
                skipped_classes: 0,
            };
            let mut parts = vec![softmax];
            if set_phase {
                let sp = set_params.as_ref().expect("initialized at the pretrain boundary");
                for &term in &terms {
                    let r = match term {
                        SetTerm::MaxMargin => max_margin_loss(&emb, &labels, &sp.hyperplanes, config.weights.lambda_m)?,
                        SetTerm::Center => center_loss(&emb, &labels, &sp.centroids, config.weights.lambda_c)?,
                        SetTerm::Pushing => pushing_loss(&emb, &labels, &sp.centroids, config.weights.lambda_p)?,
                    };
                    ensure_finite(&r, &term.to_string(), iteration)?;
                    match term {
                        SetTerm::MaxMargin => record.loss_maxmargin = r.value,
                        SetTerm::Center => record.loss_center = r.value,
                        SetTerm::Pushing => record.loss_pushing = r.value,
                    }
                    skipped += r.skipped_classes.len();
                    parts.push(r);
                }
            }
            let combined = combine_losses(&parts)?;
            ensure_finite(&combined, "combined", iteration)?;
            record.loss_total = combined.value;

            let (grads, _) = model.backward(&cache, &combined.grad_embeddings)?;
            if !grads.all_finite() {
                return Err(TrainError::NonFinite {
                    term: "backbone gradient".into(),
                    iteration,
                });
            }
            let head_grads = combined.grad_head.expect("softmax term supplies head gradients");
            if !(config.freeze_backbone && set_phase) {
                adam_step(&mut model, &grads, &mut model_adam, lr, config.weight_decay)?;
            }
            adam_step(&mut head, &head_grads, &mut head_adam, lr, config.weight_decay)?;
            if !model.all_finite() || !head.all_finite() {
                return Err(TrainError::NonFinite {
                    term: "parameters after the optimizer step".into(),
                    iteration,
                });
            }

            if set_phase && config.update.mode.uses_online() {
                let sp = set_params.as_ref().expect("initialized at the pretrain boundary");
                let (next, report) = online_update(sp, &emb, &labels, &config.update, &config.svm, targets)?;
                skipped += report.skipped.len();
                set_params = Some(next);
                online_updates += 1;
                observer(TrainEvent::Online { iteration });
            }

            record.skipped_classes = skipped;
            log.iterations.push(record);
            iteration += 1;
        }
        if let Some(e) = eval {
            log.evals.push(EpochEval {
                epoch,
                report: evaluate(&model, e)?,
            });
        }
        observer(TrainEvent::EpochEnd {
            epoch,
            model: &model,
            head: &head,
        });
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params: model,
            head,
            set_params,
        },
        log,
        offline_iterations,
        online_updates,
    })
}

// ---------------------------------------------------------------------------
// 2D toy experiment

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToySelector {
    S,
    SC,
    SP,
    SM,
}

impl ToySelector {
    pub const ALL: [ToySelector; 4] = [ToySelector::S, ToySelector::SC, ToySelector::SP, ToySelector::SM];

    pub fn terms(self) -> &'static [SetTerm] {
        match self {
            ToySelector::S => &[],
            ToySelector::SC => &[SetTerm::Center],
            ToySelector::SP => &[SetTerm::Pushing],
            ToySelector::SM => &[SetTerm::MaxMargin],
        }
    }
}

impl fmt::Display for ToySelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ToySelector::S => "S",
            ToySelector::SC => "S+C",
            ToySelector::SP => "S+P",
            ToySelector::SM => "S+M",
        })
    }
}

impl FromStr for ToySelector {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "S" => Ok(ToySelector::S),
            "S+C" => Ok(ToySelector::SC),
            "S+P" => Ok(ToySelector::SP),
            "S+M" => Ok(ToySelector::SM),
            other => Err(format!("unknown selector {other:?} (expected S, S+C, S+P or S+M)")),
        }
    }
}

pub const TOY_CLASSES: usize = 3;
pub const TOY_PER_CLASS: usize = 100;
pub const TOY_INPUT_DIM: usize = 10;
const TOY_DATA_SEED: u64 = 2017;

/// The fixed three-class, 10-feature dataset shared by every toy run.
pub fn toy_dataset() -> Result<LabeledDataset> {
    Ok(gen_blobs(TOY_CLASSES, TOY_PER_CLASS, TOY_INPUT_DIM, 1.0, 3.0, TOY_DATA_SEED)?)
}

/// Configuration of a toy run: 10 → 32 → 2 network, default loss weights,
/// a scaled-down schedule.
pub fn toy_config(selector: ToySelector, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::new(vec![TOY_INPUT_DIM, 32, 2]).with_terms(selector.terms());
    c.batch_size = 30;
    c.epochs = 30;
    c.pretrain_epochs = 15;
    c.schedule = LrSchedule::new(0.01, vec![15, 25], 0.1, 30).expect("valid schedule");
    c.update.offline_period_iters = 50;
    c.seed = seed;
    c
}

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub dataset: LabeledDataset,
    /// Embeddings of the whole dataset after each epoch.
    pub snapshots: Vec<Matrix>,
    pub outcome: TrainOutcome,
}

impl ToyRun {
    pub fn final_embeddings(&self) -> &Matrix {
        self.snapshots.last().expect("at least one epoch")
    }
}

pub fn toy2d_experiment(selector: ToySelector, seed: u64) -> Result<ToyRun> {
    toy2d_with_config(&toy_config(selector, seed))
}

pub fn toy2d_with_config(config: &TrainConfig) -> Result<ToyRun> {
    let dataset = toy_dataset()?;
    let mut snapshots = Vec::with_capacity(config.epochs);
    let mut embed_err = None;
    let outcome = train_with_observer(config, &dataset, None, &mut |event| {
        if let TrainEvent::EpochEnd { model, .. } = event {
            match model.embed(dataset.features()) {
                Ok(e) => snapshots.push(e),
                Err(e) => embed_err = Some(e),
            }
        }
    })?;
    if let Some(e) = embed_err {
        return Err(e.into());
    }
    Ok(ToyRun {
        dataset,
        snapshots,
        outcome,
    })
}

// ---------------------------------------------------------------------------
// Max-margin dynamics on free embeddings

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsOptions {
    pub refits: usize,
    pub steps_per_refit: usize,
    pub step_size: f64,
    pub lambda: f64,
    pub svm: SvmConfig,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        Self {
            refits: 10,
            steps_per_refit: 20,
            step_size: 0.5,
            lambda: 1.0,
            svm: SvmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsTrace {
    /// Hard-margin geometric margin measured at each refit, then once more
    /// on the final embeddings.
    pub margins: Vec<f64>,
    pub embeddings: Matrix,
    /// One-vs-all planes refitted on the final embeddings.
    pub final_planes: crate::svm::HyperplaneSet,
}

/// Treats the embeddings themselves as parameters and descends the
/// max-margin loss, refitting the one-vs-all planes every
/// `steps_per_refit` gradient steps.
pub fn max_margin_dynamics(points: &Matrix, labels: &[usize], class_count: usize, opts: &DynamicsOptions) -> Result<DynamicsTrace> {
    let mut x = points.clone();
    let mut margins = Vec::with_capacity(opts.refits + 1);
    for refit in 0..opts.refits {
        let (planes, _) = fit_one_vs_all(&x, labels, class_count, &opts.svm, 1)?;
        margins.push(min_pairwise_margin(&x, labels, class_count)?);
        for _ in 0..opts.steps_per_refit {
            let r = max_margin_loss(&x, labels, &planes, opts.lambda)?;
            ensure_finite(&r, "max_margin", refit)?;
            let mut step = r.grad_embeddings;
            step.scale(-opts.step_size);
            x.add_assign(&step);
        }
    }
    margins.push(min_pairwise_margin(&x, labels, class_count)?);
    let (final_planes, _) = fit_one_vs_all(&x, labels, class_count, &HARD_MARGIN, 1)?;
    Ok(DynamicsTrace {
        margins,
        embeddings: x,
        final_planes,
    })
}

// ---------------------------------------------------------------------------
// Update-strategy comparison

#[derive(Debug, Clone, PartialEq)]
pub struct ModeResult {
    pub mode: UpdateMode,
    pub report: VerificationReport,
}

/// Trains `base` once per update mode and reports the final verification
/// metrics of each.
pub fn compare_update_modes(base: &TrainConfig, train_set: &LabeledDataset, eval: (&LabeledDataset, &PairList)) -> Result<Vec<ModeResult>> {
    UpdateMode::ALL
        .iter()
        .map(|&mode| {
            let mut c = base.clone();
            c.update.mode = mode;
            let outcome = train(&c, train_set, Some(eval))?;
            let report = outcome.log.final_report().cloned().expect("eval runs every epoch");
            Ok(ModeResult { mode, report })
        })
        .collect()
}

/// Markdown-style table of accuracy, AUC and 1 − EER per mode.
pub fn format_mode_table(results: &[ModeResult]) -> String {
    let mut s = String::from("mode,accuracy,auc,one_minus_eer\n");
    for r in results {
        let _ = writeln!(
            s,
            "{},{:.4},{:.4},{:.4}",
            r.mode,
            r.report.accuracy,
            r.report.auc,
            1.0 - r.report.eer
        );
    }
    s
}
