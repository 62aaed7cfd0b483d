//! Versioned binary checkpoints.
//!
//! Layout:
//!
//! ```text
//! "SBEL" 0x01
//! text manifest, one `key=value` per line, terminated by a single NUL byte
//! every array as little-endian f64, in manifest order
//! ```
//!
//! Manifest keys:
//!
//! * `layer_dims=4,16,2` and `class_count=3`
//! * `array=<name> <len>` — one line per array, in payload order
//! * `set_params=0|1`, and when set: `last_offline_iteration=<n>`,
//!   `centroid_count.<class>=<n>`, `plane_info.<class>=<iterations>,<converged>`
//!
//! Array names: `backbone.w.<k>`, `backbone.b.<k>`, `head.w`, `head.b`,
//! `centroid.<class>`, `plane.w.<class>`, `plane.b.<class>` (w, b),
//! `plane.stats.<class>` (dual objective, KKT gap), `plane.dual.<class>`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::linalg::Matrix;
use crate::model::{ClassifierHead, ModelParams};
use crate::setparams::{CentroidSet, SetParams};
use crate::svm::{FitInfo, Hyperplane, HyperplaneSet};

pub const MAGIC: &[u8; 4] = b"SBEL";
pub const VERSION: u8 = 0x01;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("inconsistent checkpoint: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub head: ClassifierHead,
    pub set_params: Option<SetParams>,
}

struct Writer {
    manifest: String,
    payload: Vec<u8>,
}

impl Writer {
    fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        self.manifest.push_str(&format!("{key}={value}\n"));
    }

    fn array(&mut self, name: &str, values: &[f64]) {
        self.line("array", format!("{name} {}", values.len()));
        for v in values {
            self.payload.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer {
            manifest: String::new(),
            payload: Vec::new(),
        };
        w.line("layer_dims", join(self.params.layer_dims()));
        w.line("class_count", self.head.class_count());
        w.line("set_params", u8::from(self.set_params.is_some()));
        if let Some(sp) = &self.set_params {
            w.line("last_offline_iteration", sp.last_offline_iteration);
            for (class_id, _) in sp.centroids.iter() {
                w.line(
                    &format!("centroid_count.{class_id}"),
                    sp.centroids.count(class_id).unwrap_or(0),
                );
            }
            for p in sp.hyperplanes.iter() {
                w.line(
                    &format!("plane_info.{}", p.class_id),
                    format!("{},{}", p.fit_info.iterations, u8::from(p.fit_info.converged)),
                );
            }
        }
        for (k, (wt, b)) in self.params.weights().iter().zip(self.params.biases()).enumerate() {
            w.array(&format!("backbone.w.{k}"), wt.as_slice());
            w.array(&format!("backbone.b.{k}"), b);
        }
        w.array("head.w", self.head.weights.as_slice());
        w.array("head.b", &self.head.bias);
        if let Some(sp) = &self.set_params {
            for (class_id, c) in sp.centroids.iter() {
                w.array(&format!("centroid.{class_id}"), c);
            }
            for p in sp.hyperplanes.iter() {
                let id = p.class_id;
                w.array(&format!("plane.w.{id}"), &p.w);
                w.array(&format!("plane.b.{id}"), &[p.b]);
                w.array(
                    &format!("plane.stats.{id}"),
                    &[p.fit_info.dual_objective, p.fit_info.kkt_gap],
                );
                w.array(&format!("plane.dual.{id}"), &p.dual);
            }
        }
        let mut out = Vec::with_capacity(6 + w.manifest.len() + w.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(w.manifest.as_bytes());
        out.push(0);
        out.extend_from_slice(&w.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = *bytes
            .get(4)
            .ok_or_else(|| CheckpointError::Manifest("missing version byte".into()))?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let rest = &bytes[5..];
        let nul = rest
            .iter()
            .position(|&b| b == 0)
            .ok_or_else(|| CheckpointError::Manifest("manifest is not NUL-terminated".into()))?;
        let manifest = std::str::from_utf8(&rest[..nul])
            .map_err(|_| CheckpointError::Manifest("manifest is not UTF-8".into()))?;
        let payload = &rest[nul + 1..];

        let mut keys: BTreeMap<String, String> = BTreeMap::new();
        let mut layout: Vec<(String, usize)> = Vec::new();
        for line in manifest.lines() {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CheckpointError::Manifest(format!("line {line:?} has no '='")))?;
            if key == "array" {
                let (name, len) = value
                    .split_once(' ')
                    .ok_or_else(|| CheckpointError::Manifest(format!("bad array entry {value:?}")))?;
                let len = len
                    .parse()
                    .map_err(|_| CheckpointError::Manifest(format!("bad array length in {value:?}")))?;
                layout.push((name.to_string(), len));
            } else {
                keys.insert(key.to_string(), value.to_string());
            }
        }

        let expected: usize = layout.iter().map(|(_, len)| len * 8).sum();
        if payload.len() < expected {
            return Err(CheckpointError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(CheckpointError::Inconsistent(format!(
                "{} trailing bytes after the last array",
                payload.len() - expected
            )));
        }
        let mut arrays: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut offset = 0;
        for (name, len) in layout {
            let values = payload[offset..offset + len * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            offset += len * 8;
            if arrays.insert(name.clone(), values).is_some() {
                return Err(CheckpointError::Manifest(format!("array {name} listed twice")));
            }
        }
        Reader { keys, arrays }.build()
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, self.encode())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

pub fn save_checkpoint(
    params: &ModelParams,
    head: &ClassifierHead,
    set_params: Option<&SetParams>,
    path: impl AsRef<Path>,
) -> Result<()> {
    Checkpoint {
        params: params.clone(),
        head: head.clone(),
        set_params: set_params.cloned(),
    }
    .save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

struct Reader {
    keys: BTreeMap<String, String>,
    arrays: BTreeMap<String, Vec<f64>>,
}

fn bad(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Inconsistent(msg.into())
}

impl Reader {
    fn key(&self, key: &str) -> Result<&str> {
        self.keys
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CheckpointError::Manifest(format!("missing key {key}")))
    }

    fn number<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.key(key)?;
        v.parse()
            .map_err(|_| CheckpointError::Manifest(format!("key {key} has bad value {v:?}")))
    }

    fn take(&mut self, name: &str, len: usize) -> Result<Vec<f64>> {
        let v = self
            .arrays
            .remove(name)
            .ok_or_else(|| bad(format!("missing array {name}")))?;
        if v.len() != len {
            return Err(bad(format!("array {name} has {} values, expected {len}", v.len())));
        }
        Ok(v)
    }

    fn take_any(&mut self, name: &str) -> Result<Vec<f64>> {
        self.arrays
            .remove(name)
            .ok_or_else(|| bad(format!("missing array {name}")))
    }

    /// Class ids that appear with a given key or array prefix.
    fn ids(&self, prefix: &str, from_arrays: bool) -> Result<Vec<usize>> {
        let names: Vec<&String> = if from_arrays {
            self.arrays.keys().collect()
        } else {
            self.keys.keys().collect()
        };
        let mut ids = Vec::new();
        for name in names {
            if let Some(id) = name.strip_prefix(prefix) {
                ids.push(
                    id.parse()
                        .map_err(|_| CheckpointError::Manifest(format!("bad class id in {name}")))?,
                );
            }
        }
        ids.sort_unstable();
        Ok(ids)
    }

    fn build(mut self) -> Result<Checkpoint> {
        let dims: Vec<usize> = self
            .key("layer_dims")?
            .split(',')
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| CheckpointError::Manifest("bad layer_dims".into()))?;
        let class_count: usize = self.number("class_count")?;
        if dims.len() < 2 {
            return Err(CheckpointError::Manifest("layer_dims needs two entries".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for k in 0..dims.len() - 1 {
            let w = self.take(&format!("backbone.w.{k}"), dims[k] * dims[k + 1])?;
            weights.push(Matrix::from_vec(dims[k], dims[k + 1], w));
            biases.push(self.take(&format!("backbone.b.{k}"), dims[k + 1])?);
        }
        let emb = *dims.last().expect("checked length");
        let params = ModelParams::from_parts(dims, weights, biases).map_err(|e| bad(e.to_string()))?;
        let head_w = self.take("head.w", emb * class_count)?;
        let head_b = self.take("head.b", class_count)?;
        let head = ClassifierHead::new(Matrix::from_vec(emb, class_count, head_w), head_b)
            .map_err(|e| bad(e.to_string()))?;

        let set_params = match self.key("set_params")? {
            "0" => None,
            "1" => Some(self.build_set_params(emb, class_count)?),
            other => return Err(CheckpointError::Manifest(format!("bad set_params flag {other:?}"))),
        };
        if let Some(name) = self.arrays.keys().next() {
            return Err(bad(format!("unexpected array {name}")));
        }
        Ok(Checkpoint {
            params,
            head,
            set_params,
        })
    }

    fn build_set_params(&mut self, dim: usize, class_count: usize) -> Result<SetParams> {
        let last_offline_iteration = self.number("last_offline_iteration")?;
        let mut centroids = CentroidSet::new(dim, class_count);
        for id in self.ids("centroid_count.", false)? {
            let count = self.number(&format!("centroid_count.{id}"))?;
            let c = self.take(&format!("centroid.{id}"), dim)?;
            centroids.insert(id, c, count).map_err(|e| bad(e.to_string()))?;
        }
        let mut hyperplanes = HyperplaneSet::new(dim, class_count);
        for id in self.ids("plane_info.", false)? {
            let info = self.key(&format!("plane_info.{id}"))?.to_string();
            let (iterations, converged) = info
                .split_once(',')
                .and_then(|(i, c)| Some((i.parse().ok()?, c == "1")))
                .ok_or_else(|| CheckpointError::Manifest(format!("bad plane_info for class {id}")))?;
            let w = self.take(&format!("plane.w.{id}"), dim)?;
            let b = self.take(&format!("plane.b.{id}"), 1)?[0];
            let stats = self.take(&format!("plane.stats.{id}"), 2)?;
            let dual = self.take_any(&format!("plane.dual.{id}"))?;
            hyperplanes
                .insert(Hyperplane {
                    w,
                    b,
                    class_id: id,
                    fit_info: FitInfo {
                        iterations,
                        dual_objective: stats[0],
                        converged,
                        kkt_gap: stats[1],
                    },
                    dual,
                })
                .map_err(|e| bad(e.to_string()))?;
        }
        if let Some(stray) = self.ids("centroid.", true)?.first() {
            return Err(bad(format!("centroid.{stray} has no count entry")));
        }
        Ok(SetParams {
            centroids,
            hyperplanes,
            last_offline_iteration,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;
    use crate::model::init_model;
    use crate::setparams::{offline_update, SetTargets, UpdateSchedule};
    use crate::svm::SvmConfig;

    fn sample() -> Checkpoint {
        let params = init_model(&[3, 5, 2], 4).unwrap();
        let head = ClassifierHead::init(2, 3, 4).unwrap();
        let data = gen_blobs(3, 6, 3, 0.5, 3.0, 2).unwrap();
        let (sp, _) = offline_update(
            &params,
            &data,
            &UpdateSchedule::default(),
            &SvmConfig::default(),
            SetTargets::ALL,
            9,
            0,
        )
        .unwrap();
        Checkpoint {
            params,
            head,
            set_params: Some(sp),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::decode(&ck.encode()).unwrap();
        assert_eq!(back, ck);

        let bare = Checkpoint {
            set_params: None,
            ..ck
        };
        assert_eq!(Checkpoint::decode(&bare.encode()).unwrap(), bare);
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let mut bytes = sample().encode();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bytes), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn wrong_version_is_reported() {
        let mut bytes = sample().encode();
        bytes[4] = 0x02;
        assert!(matches!(
            Checkpoint::decode(&bytes),
            Err(CheckpointError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = sample().encode();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(Checkpoint::decode(cut), Err(CheckpointError::Truncated { .. })));
    }

    #[test]
    fn save_and_load_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sbel");
        let ck = sample();
        save_checkpoint(&ck.params, &ck.head, ck.set_params.as_ref(), &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ck);
        assert!(!dir.path().join("m.sbel.tmp").exists());
    }
}
