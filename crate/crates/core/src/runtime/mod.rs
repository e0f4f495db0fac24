//! Small decoder-only transformer with per-query attention visibility,
//! weight-archive IO and verbalizer scoring.

mod model;
mod plan;
mod scoring;
mod weights;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use model::{logits_json, AttentionTrace, LanguageModel, Model, Real, Trace};
pub use plan::{PlanDump, VisibilityPlan};
pub use scoring::{
    argmax, log_softmax, score_labels, scorer_by_name, FirstToken, FullVerbalizer, LabelScorer,
    SCORER_NAMES,
};
pub use weights::{
    expected_tensors, ArchiveManifest, Tensor, TensorEntry, WeightArchive, BLOB_FILE, INIT_STD,
    MANIFEST_FILE,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosEncoding {
    Rotary,
    None,
}

fn default_eps() -> f64 {
    1e-5
}

fn default_theta() -> f64 {
    10000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub pos_encoding: PosEncoding,
    #[serde(default = "default_eps")]
    pub norm_eps: f64,
    #[serde(default)]
    pub tied_head: bool,
    #[serde(default = "default_theta")]
    pub rope_theta: f64,
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::ModelConfig(m));
        if self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 || self.vocab_size == 0 {
            return fail("n_heads, d_model, d_ff and vocab_size must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.pos_encoding == PosEncoding::Rotary && self.head_dim() % 2 != 0 {
            return fail(format!("rotary needs an even head dim, got {}", self.head_dim()));
        }
        if !(self.norm_eps > 0.0) {
            return fail(format!("norm_eps must be positive, got {}", self.norm_eps));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Builds a model at the requested precision behind the object-safe trait.
pub fn build_model(
    cfg: &ModelConfig,
    weights: &WeightArchive,
    precision: Precision,
) -> Result<Arc<dyn LanguageModel>> {
    Ok(match precision {
        Precision::F32 => Arc::new(Model::<f32>::new(cfg, weights)?),
        Precision::F64 => Arc::new(Model::<f64>::new(cfg, weights)?),
    })
}

/// Loads an archive directory whose manifest carries the config.
pub fn load_model(dir: &Path, precision: Precision) -> Result<(ModelConfig, Arc<dyn LanguageModel>)> {
    let cfg = WeightArchive::read_config(dir)?.ok_or_else(|| {
        Error::ModelConfig(format!("{} has no embedded config", dir.display()))
    })?;
    let w = WeightArchive::load(dir, &cfg)?;
    let m = build_model(&cfg, &w, precision)?;
    Ok((cfg, m))
}
