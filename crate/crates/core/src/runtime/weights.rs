use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "weights.bin";
pub const INIT_STD: f32 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ModelConfig>,
    pub tensors: Vec<TensorEntry>,
}

/// Tensor names and shapes a config requires, in archive order.
pub fn expected_tensors(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (d, f, v) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
    let mut out = vec![("embed.weight".to_string(), vec![v, d])];
    for i in 0..cfg.n_layers {
        let p = format!("layers.{i}");
        out.push((format!("{p}.attn_norm.weight"), vec![d]));
        for m in ["wq", "wk", "wv", "wo"] {
            out.push((format!("{p}.attn.{m}"), vec![d, d]));
        }
        out.push((format!("{p}.mlp_norm.weight"), vec![d]));
        out.push((format!("{p}.mlp.w1"), vec![d, f]));
        out.push((format!("{p}.mlp.w2"), vec![f, d]));
    }
    out.push(("final_norm.weight".to_string(), vec![d]));
    if !cfg.tied_head {
        out.push(("lm_head.weight".to_string(), vec![d, v]));
    }
    out
}

/// Named float32 tensors, row-major, `[in, out]` for projections.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightArchive {
    pub config: Option<ModelConfig>,
    pub tensors: BTreeMap<String, Tensor>,
}

fn manifest_paths(path: &Path) -> (PathBuf, PathBuf) {
    let dir = if path.is_dir() || path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    (dir.join(MANIFEST_FILE), dir.join(BLOB_FILE))
}

impl WeightArchive {
    /// Seeded normal init (std 0.02) with unit norm gains.
    pub fn random_init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, INIT_STD).expect("positive std");
        let tensors = expected_tensors(cfg)
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = if name.ends_with("norm.weight") {
                    vec![1.0; n]
                } else {
                    (0..n).map(|_| normal.sample(&mut rng)).collect()
                };
                (name, Tensor { shape, data })
            })
            .collect();
        WeightArchive {
            config: Some(cfg.clone()),
            tensors,
        }
    }

    /// All-zero weights with unit norm gains.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let tensors = expected_tensors(cfg)
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let fill = if name.ends_with("norm.weight") { 1.0 } else { 0.0 };
                (name, Tensor { shape, data: vec![fill; n] })
            })
            .collect();
        WeightArchive {
            config: Some(cfg.clone()),
            tensors,
        }
    }

    /// Loads `manifest.json` + `weights.bin` and checks every tensor the
    /// config requires. `path` is the archive directory or its manifest.
    pub fn load(path: &Path, cfg: &ModelConfig) -> Result<Self> {
        let (manifest_path, blob_path) = manifest_paths(path);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: ArchiveManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: manifest_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let entries: BTreeMap<&str, &TensorEntry> =
            manifest.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        let mut tensors = BTreeMap::new();
        for (name, shape) in expected_tensors(cfg) {
            let entry = entries
                .get(name.as_str())
                .ok_or_else(|| Error::MissingTensor(name.clone()))?;
            if entry.shape != shape {
                return Err(Error::ShapeMismatch {
                    name,
                    expected: shape,
                    found: entry.shape.clone(),
                });
            }
            if entry.dtype != "f32" {
                return Err(Error::ModelConfig(format!(
                    "tensor {name} has dtype {:?}, only f32 is supported",
                    entry.dtype
                )));
            }
            let n: usize = shape.iter().product();
            let end = entry.offset + n * 4;
            if end > blob.len() {
                return Err(Error::TruncatedBlob {
                    name,
                    needed: end,
                    available: blob.len(),
                });
            }
            let data = blob[entry.offset..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.insert(name, Tensor { shape, data });
        }
        Ok(WeightArchive {
            config: manifest.config,
            tensors,
        })
    }

    /// Reads only the config stored in an archive manifest.
    pub fn read_config(path: &Path) -> Result<Option<ModelConfig>> {
        let (manifest_path, _) = manifest_paths(path);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: ArchiveManifest = serde_json::from_str(&text)?;
        Ok(manifest.config)
    }

    /// Writes tensors contiguously in the order `expected_tensors` gives
    /// (falling back to name order for extras).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut order: Vec<&String> = Vec::new();
        if let Some(cfg) = &self.config {
            for (name, _) in expected_tensors(cfg) {
                if let Some((k, _)) = self.tensors.get_key_value(&name) {
                    order.push(k);
                }
            }
        }
        for k in self.tensors.keys() {
            if !order.contains(&k) {
                order.push(k);
            }
        }
        let mut blob = Vec::new();
        let mut entries = Vec::new();
        for name in order {
            let t = &self.tensors[name];
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                dtype: "f32".into(),
                offset: blob.len(),
            });
            for x in &t.data {
                blob.extend_from_slice(&x.to_le_bytes());
            }
        }
        let manifest = ArchiveManifest {
            config: self.config.clone(),
            tensors: entries,
        };
        let mp = dir.join(MANIFEST_FILE);
        fs::write(&mp, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&mp, e))?;
        let bp = dir.join(BLOB_FILE);
        fs::write(&bp, blob).map_err(|e| Error::io(&bp, e))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }
}
