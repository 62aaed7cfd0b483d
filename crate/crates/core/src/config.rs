//! Run configuration: flat `key=value` text with dotted keys and `#`
//! comments, layered as defaults ← file ← overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::data::{gen_blobs, gen_rings, load_dataset_csv, make_verification_pairs, parse_pairs_csv, DataError, LabeledDataset, PairList};
use crate::model::LrSchedule;
use crate::setparams::UpdateMode;
use crate::trainer::{SetTerm, TrainConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("bad value {value:?} for `{key}`: {message}")]
    Value { key: String, value: String, message: String },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Every accepted key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "seed for initialization, shuffling, sampling and generated data"),
    ("data.train", "", "training CSV (label,f1,..); empty = generate"),
    ("data.eval", "", "evaluation CSV; empty = generated held-out classes"),
    ("data.pairs", "", "evaluation pairs CSV (a,b,same); empty = generate"),
    ("data.generator", "blobs", "blobs | rings"),
    ("data.classes", "20", "generated training classes"),
    ("data.eval_classes", "10", "generated held-out classes (0 = no evaluation)"),
    ("data.per_class", "40", "generated samples per class"),
    ("data.dim", "20", "generated feature dimension (blobs)"),
    ("data.spread", "1", "blob standard deviation"),
    ("data.separation", "1.5", "minimum distance between blob means"),
    ("data.eval_pairs", "400", "generated evaluation pair count"),
    ("model.layer_dims", "20,64,16", "input,hidden..,embedding widths"),
    ("train.batch_size", "64", "samples per iteration"),
    ("train.epochs", "30", "total epochs"),
    ("train.pretrain_epochs", "15", "softmax-only epochs before set terms start"),
    ("train.balanced", "false", "draw ceil(batch/m) per class instead of shuffling"),
    ("train.freeze_backbone", "false", "freeze the backbone once set terms start"),
    ("lr.base", "0.001", "initial learning rate"),
    ("lr.drop_epochs", "15,25", "epochs at which the rate is multiplied by lr.drop_factor"),
    ("lr.drop_factor", "0.1", "learning-rate drop multiplier"),
    ("optim.weight_decay", "0.0005", "decoupled weight decay"),
    ("optim.beta1", "0.9", "Adam first-moment decay"),
    ("optim.beta2", "0.999", "Adam second-moment decay"),
    ("optim.epsilon", "0.00000001", "Adam denominator offset"),
    ("weights.softmax", "1", "softmax weight"),
    ("weights.lambda_M", "0.03", "max-margin weight"),
    ("weights.lambda_P", "0.03", "pushing weight"),
    ("weights.lambda_C", "0.0001", "center weight"),
    ("terms", "", "enabled set terms: comma list of max_margin, center, pushing"),
    ("update.mode", "both", "online_only | offline_only | both"),
    ("update.offline_period", "500", "iterations between offline updates"),
    ("update.alpha", "0.01", "online blending weight"),
    ("update.per_class_samples", "50", "samples per class drawn for offline updates"),
    ("update.min_pos_online", "2", "minimum positives and negatives for an online SVM refit"),
    ("svm.C", "1", "SVM box constraint"),
    ("svm.tol", "0.0001", "SVM stopping tolerance"),
    ("svm.max_iter", "1000", "SVM epoch limit"),
    ("output.dir", "out", "output directory"),
];

/// Raw layered settings, always holding every key.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl Settings {
    /// Applies `key=value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(ConfigError::UnknownKey(key.to_string())),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("every known key has a value")
    }

    /// Sorted `key=value` lines; applying them to defaults reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let value = self.get(key);
        value.parse().map_err(|e: T::Err| ConfigError::Value {
            key: key.to_string(),
            value: value.to_string(),
            message: e.to_string(),
        })
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let value = self.get(key);
        value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| {
                item.parse().map_err(|e: T::Err| ConfigError::Value {
                    key: key.to_string(),
                    value: value.to_string(),
                    message: e.to_string(),
                })
            })
            .collect()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn to_run_config(&self) -> Result<RunConfig> {
        let epochs: usize = self.parse("train.epochs")?;
        let schedule = LrSchedule::new(
            self.parse("lr.base")?,
            self.list("lr.drop_epochs")?,
            self.parse("lr.drop_factor")?,
            epochs,
        )
        .map_err(|e| ConfigError::Value {
            key: "lr.drop_epochs".into(),
            value: self.get("lr.drop_epochs").into(),
            message: e.to_string(),
        })?;
        let mut train = TrainConfig::new(self.list("model.layer_dims")?);
        train.batch_size = self.parse("train.batch_size")?;
        train.epochs = epochs;
        train.pretrain_epochs = self.parse("train.pretrain_epochs")?;
        train.balanced = self.parse("train.balanced")?;
        train.freeze_backbone = self.parse("train.freeze_backbone")?;
        train.schedule = schedule;
        train.weight_decay = self.parse("optim.weight_decay")?;
        train.beta1 = self.parse("optim.beta1")?;
        train.beta2 = self.parse("optim.beta2")?;
        train.epsilon = self.parse("optim.epsilon")?;
        train.weights.softmax = self.parse("weights.softmax")?;
        train.weights.lambda_m = self.parse("weights.lambda_M")?;
        train.weights.lambda_p = self.parse("weights.lambda_P")?;
        train.weights.lambda_c = self.parse("weights.lambda_C")?;
        train.set_terms = self.list::<SetTerm>("terms")?.into_iter().collect();
        train.update.mode = self.parse::<UpdateMode>("update.mode")?;
        train.update.offline_period_iters = self.parse("update.offline_period")?;
        train.update.online_alpha = self.parse("update.alpha")?;
        train.update.per_class_offline_samples = self.parse("update.per_class_samples")?;
        train.update.min_pos_online = self.parse("update.min_pos_online")?;
        train.svm.c = self.parse("svm.C")?;
        train.svm.tol = self.parse("svm.tol")?;
        train.svm.max_iter = self.parse("svm.max_iter")?;
        train.seed = self.parse("seed")?;

        let generator = match self.get("data.generator") {
            "blobs" => Generator::Blobs,
            "rings" => Generator::Rings,
            other => {
                return Err(ConfigError::Value {
                    key: "data.generator".into(),
                    value: other.into(),
                    message: "expected blobs or rings".into(),
                })
            }
        };
        let data = DataSpec {
            train_path: self.path("data.train"),
            eval_path: self.path("data.eval"),
            pairs_path: self.path("data.pairs"),
            generator,
            classes: self.parse("data.classes")?,
            eval_classes: self.parse("data.eval_classes")?,
            per_class: self.parse("data.per_class")?,
            dim: self.parse("data.dim")?,
            spread: self.parse("data.spread")?,
            separation: self.parse("data.separation")?,
            eval_pairs: self.parse("data.eval_pairs")?,
            seed: train.seed,
        };
        Ok(RunConfig {
            train,
            data,
            output_dir: PathBuf::from(self.get("output.dir")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Blobs,
    Rings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub train_path: Option<PathBuf>,
    pub eval_path: Option<PathBuf>,
    pub pairs_path: Option<PathBuf>,
    pub generator: Generator,
    pub classes: usize,
    pub eval_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub spread: f64,
    pub separation: f64,
    pub eval_pairs: usize,
    pub seed: u64,
}

impl DataSpec {
    /// Training set and, when configured, the held-out evaluation set with
    /// its pairs. Generated evaluation classes are disjoint from training
    /// classes.
    pub fn load(&self) -> std::result::Result<(LabeledDataset, Option<(LabeledDataset, PairList)>), DataError> {
        let (train, eval) = match &self.train_path {
            Some(path) => {
                let train = load_dataset_csv(path)?;
                let eval = self.eval_path.as_ref().map(load_dataset_csv).transpose()?;
                (train, eval)
            }
            None => {
                let total = self.classes + self.eval_classes;
                let all = match self.generator {
                    Generator::Blobs => gen_blobs(total, self.per_class, self.dim, self.spread, self.separation, self.seed)?,
                    Generator::Rings => gen_rings(total, self.per_class, self.seed)?,
                };
                if self.eval_classes == 0 {
                    (all, None)
                } else {
                    let (train, eval) = all.split_classes(self.classes)?;
                    (train, Some(eval))
                }
            }
        };
        let eval = match eval {
            None => None,
            Some(ds) => {
                let pairs = match &self.pairs_path {
                    Some(path) => {
                        let text = std::fs::read_to_string(path)?;
                        parse_pairs_csv(&text, &ds)?
                    }
                    None => make_verification_pairs(&ds, self.eval_pairs, self.seed)?,
                };
                Some((ds, pairs))
            }
        };
        Ok((train, eval))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DataSpec,
    pub output_dir: PathBuf,
}
