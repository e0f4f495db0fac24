use std::fmt::Debug;

use num_traits::Float;

use super::plan::VisibilityPlan;
use super::weights::WeightArchive;
use super::{ModelConfig, PosEncoding};
use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

/// Scalar the forward pass runs in.
pub trait Real: Float + Send + Sync + Debug + 'static {
    /// Pre-softmax score given to hidden keys.
    const MASK: Self;
    fn of_f32(x: f32) -> Self;
    fn of_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const MASK: f32 = -1e9;
    fn of_f32(x: f32) -> Self {
        x
    }
    fn of_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const MASK: f64 = f64::NEG_INFINITY;
    fn of_f32(x: f32) -> Self {
        x as f64
    }
    fn of_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone)]
struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    fn from_archive(w: &WeightArchive, name: &str) -> Result<Self> {
        let t = w.get(name)?;
        let (rows, cols) = match t.shape.as_slice() {
            [r, c] => (*r, *c),
            [c] => (1, *c),
            _ => {
                return Err(Error::ShapeMismatch {
                    name: name.to_string(),
                    expected: vec![],
                    found: t.shape.clone(),
                })
            }
        };
        Ok(Mat {
            rows,
            cols,
            data: t.data.iter().map(|&x| T::of_f32(x)).collect(),
        })
    }

    fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// `y = x · w` for one row.
fn vec_mat<T: Real>(x: &[T], w: &Mat<T>, out: &mut [T]) {
    out.fill(T::zero());
    for (k, &a) in x.iter().enumerate() {
        if a == T::zero() {
            continue;
        }
        for (o, &b) in out.iter_mut().zip(w.row(k)) {
            *o = *o + a * b;
        }
    }
}

fn matmul<T: Real>(x: &[T], n: usize, w: &Mat<T>) -> Vec<T> {
    let mut out = vec![T::zero(); n * w.cols];
    for i in 0..n {
        vec_mat(
            &x[i * w.rows..(i + 1) * w.rows],
            w,
            &mut out[i * w.cols..(i + 1) * w.cols],
        );
    }
    out
}

fn rms_norm<T: Real>(x: &[T], g: &[T], eps: T, out: &mut [T]) {
    let n = T::of_f64(x.len() as f64);
    let ms = x.iter().fold(T::zero(), |s, &v| s + v * v) / n;
    let scale = (ms + eps).sqrt().recip();
    for ((o, &v), &gi) in out.iter_mut().zip(x).zip(g) {
        *o = v * scale * gi;
    }
}

fn gelu<T: Real>(x: T) -> T {
    let c = T::of_f64((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of_f64(0.5);
    half * x * (T::one() + (c * (x + T::of_f64(0.044715) * x * x * x)).tanh())
}

struct Layer<T> {
    attn_norm: Vec<T>,
    wq: Mat<T>,
    wk: Mat<T>,
    wv: Mat<T>,
    wo: Mat<T>,
    mlp_norm: Vec<T>,
    w1: Mat<T>,
    w2: Mat<T>,
}

/// Decoder-only transformer: pre-norm RMS normalization, multi-head
/// attention with optional rotary embedding, GELU MLP.
pub struct Model<T> {
    cfg: ModelConfig,
    embed: Mat<T>,
    layers: Vec<Layer<T>>,
    final_norm: Vec<T>,
    head: Option<Mat<T>>,
}

/// Attention weights from a traced forward: `[layer][head][query]`, each
/// row covering keys `0..=query`.
pub type AttentionTrace<T> = Vec<Vec<Vec<Vec<T>>>>;

pub struct Trace<T> {
    pub attention: AttentionTrace<T>,
    pub logits: Vec<Vec<T>>,
}

impl<T: Real> Model<T> {
    pub fn new(cfg: &ModelConfig, w: &WeightArchive) -> Result<Self> {
        cfg.validate()?;
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for i in 0..cfg.n_layers {
            let p = format!("layers.{i}");
            layers.push(Layer {
                attn_norm: Mat::from_archive(w, &format!("{p}.attn_norm.weight"))?.data,
                wq: Mat::from_archive(w, &format!("{p}.attn.wq"))?,
                wk: Mat::from_archive(w, &format!("{p}.attn.wk"))?,
                wv: Mat::from_archive(w, &format!("{p}.attn.wv"))?,
                wo: Mat::from_archive(w, &format!("{p}.attn.wo"))?,
                mlp_norm: Mat::from_archive(w, &format!("{p}.mlp_norm.weight"))?.data,
                w1: Mat::from_archive(w, &format!("{p}.mlp.w1"))?,
                w2: Mat::from_archive(w, &format!("{p}.mlp.w2"))?,
            });
        }
        let head = if cfg.tied_head {
            None
        } else {
            Some(Mat::from_archive(w, "lm_head.weight")?)
        };
        Ok(Model {
            cfg: cfg.clone(),
            embed: Mat::from_archive(w, "embed.weight")?,
            layers,
            final_norm: Mat::from_archive(w, "final_norm.weight")?.data,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.len() > self.cfg.max_positions {
            return Err(Error::ModelConfig(format!(
                "sequence of {} tokens exceeds max_positions {}",
                tokens.len(),
                self.cfg.max_positions
            )));
        }
        if let Some(t) = tokens.iter().find(|t| t.index() >= self.cfg.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id: t.0,
                size: self.cfg.vocab_size,
            });
        }
        Ok(())
    }

    /// Full causal forward; logits for the requested positions.
    pub fn forward(&self, tokens: &[TokenId], positions: &[usize]) -> Result<Vec<Vec<T>>> {
        self.check_tokens(tokens)?;
        Ok(self.run(tokens, None, positions, None))
    }

    /// Forward where every attention row is restricted to the plan.
    pub fn forward_with_plan(
        &self,
        tokens: &[TokenId],
        plan: &VisibilityPlan,
        positions: &[usize],
    ) -> Result<Vec<Vec<T>>> {
        self.check_plan(tokens, plan)?;
        Ok(self.run(tokens, Some(plan), positions, None))
    }

    /// Forward that also records attention weights; logits for every position.
    pub fn forward_traced(&self, tokens: &[TokenId], plan: Option<&VisibilityPlan>) -> Result<Trace<T>> {
        match plan {
            Some(p) => self.check_plan(tokens, p)?,
            None => self.check_tokens(tokens)?,
        }
        let all: Vec<usize> = (0..tokens.len()).collect();
        let mut attention = Vec::new();
        let logits = self.run(tokens, plan, &all, Some(&mut attention));
        Ok(Trace { attention, logits })
    }

    fn check_plan(&self, tokens: &[TokenId], plan: &VisibilityPlan) -> Result<()> {
        if plan.len() != tokens.len() {
            return Err(Error::InvalidPlan(format!(
                "plan covers {} positions, sequence has {}",
                plan.len(),
                tokens.len()
            )));
        }
        plan.validate()?;
        self.check_tokens(tokens)
    }

    fn rotate(&self, x: &mut [T], pos: usize) {
        if self.cfg.pos_encoding != PosEncoding::Rotary {
            return;
        }
        let hd = self.cfg.head_dim();
        let p = pos as f64;
        for head in x.chunks_exact_mut(hd) {
            for i in 0..hd / 2 {
                let freq = self.cfg.rope_theta.powf(-(2.0 * i as f64) / hd as f64);
                let (s, c) = (p * freq).sin_cos();
                let (s, c) = (T::of_f64(s), T::of_f64(c));
                let (a, b) = (head[2 * i], head[2 * i + 1]);
                head[2 * i] = a * c - b * s;
                head[2 * i + 1] = a * s + b * c;
            }
        }
    }

    fn run(
        &self,
        tokens: &[TokenId],
        plan: Option<&VisibilityPlan>,
        positions: &[usize],
        mut trace: Option<&mut AttentionTrace<T>>,
    ) -> Vec<Vec<T>> {
        let n = tokens.len();
        let d = self.cfg.d_model;
        let h = self.cfg.n_heads;
        let hd = self.cfg.head_dim();
        let eps = T::of_f64(self.cfg.norm_eps);
        let scale = T::of_f64(1.0 / (hd as f64).sqrt());

        let mut x: Vec<T> = Vec::with_capacity(n * d);
        for t in tokens {
            x.extend_from_slice(self.embed.row(t.index()));
        }
        let mut normed = vec![T::zero(); n * d];
        for layer in &self.layers {
            for i in 0..n {
                rms_norm(&x[i * d..(i + 1) * d], &layer.attn_norm, eps, &mut normed[i * d..(i + 1) * d]);
            }
            let mut q = matmul(&normed, n, &layer.wq);
            let mut k = matmul(&normed, n, &layer.wk);
            let v = matmul(&normed, n, &layer.wv);
            for i in 0..n {
                self.rotate(&mut q[i * d..(i + 1) * d], i);
                self.rotate(&mut k[i * d..(i + 1) * d], i);
            }
            let mut ctx = vec![T::zero(); n * d];
            let mut layer_trace = vec![Vec::with_capacity(n); if trace.is_some() { h } else { 0 }];
            let mut scores = vec![T::zero(); n];
            for head in 0..h {
                let off = head * hd;
                for qi in 0..n {
                    let qv = &q[qi * d + off..qi * d + off + hd];
                    let row = plan.map(|p| p.row(qi));
                    let mut max = T::neg_infinity();
                    for ki in 0..=qi {
                        let kv = &k[ki * d + off..ki * d + off + hd];
                        let mut s = qv.iter().zip(kv).fold(T::zero(), |a, (&x, &y)| a + x * y) * scale;
                        if let Some(r) = row {
                            if !r[ki] {
                                s = s + T::MASK;
                            }
                        }
                        scores[ki] = s;
                        if s > max {
                            max = s;
                        }
                    }
                    let mut sum = T::zero();
                    for s in &mut scores[..=qi] {
                        *s = (*s - max).exp();
                        sum = sum + *s;
                    }
                    let out = &mut ctx[qi * d + off..qi * d + off + hd];
                    for ki in 0..=qi {
                        let p = scores[ki] / sum;
                        scores[ki] = p;
                        if p == T::zero() {
                            continue;
                        }
                        let vv = &v[ki * d + off..ki * d + off + hd];
                        for (o, &val) in out.iter_mut().zip(vv) {
                            *o = *o + p * val;
                        }
                    }
                    if trace.is_some() {
                        layer_trace[head].push(scores[..=qi].to_vec());
                    }
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(layer_trace);
            }
            let attn_out = matmul(&ctx, n, &layer.wo);
            for (xi, a) in x.iter_mut().zip(&attn_out) {
                *xi = *xi + *a;
            }
            for i in 0..n {
                rms_norm(&x[i * d..(i + 1) * d], &layer.mlp_norm, eps, &mut normed[i * d..(i + 1) * d]);
            }
            let mut hidden = matmul(&normed, n, &layer.w1);
            for v in &mut hidden {
                *v = gelu(*v);
            }
            let mlp_out = matmul(&hidden, n, &layer.w2);
            for (xi, m) in x.iter_mut().zip(&mlp_out) {
                *xi = *xi + *m;
            }
        }

        let mut out = Vec::with_capacity(positions.len());
        let mut hrow = vec![T::zero(); d];
        for &p in positions {
            rms_norm(&x[p * d..(p + 1) * d], &self.final_norm, eps, &mut hrow);
            let logits = match &self.head {
                Some(w) => {
                    let mut l = vec![T::zero(); w.cols];
                    vec_mat(&hrow, w, &mut l);
                    l
                }
                None => (0..self.embed.rows)
                    .map(|t| {
                        self.embed
                            .row(t)
                            .iter()
                            .zip(&hrow)
                            .fold(T::zero(), |a, (&e, &hv)| a + e * hv)
                    })
                    .collect(),
            };
            out.push(logits);
        }
        out
    }
}

/// Object-safe view of a model with logits widened to f64.
pub trait LanguageModel: Send + Sync {
    fn config(&self) -> &ModelConfig;

    fn logits(
        &self,
        tokens: &[TokenId],
        plan: Option<&VisibilityPlan>,
        positions: &[usize],
    ) -> Result<Vec<Vec<f64>>>;
}

impl<T: Real> LanguageModel for Model<T> {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn logits(
        &self,
        tokens: &[TokenId],
        plan: Option<&VisibilityPlan>,
        positions: &[usize],
    ) -> Result<Vec<Vec<f64>>> {
        let l = match plan {
            Some(p) => self.forward_with_plan(tokens, p, positions)?,
            None => self.forward(tokens, positions)?,
        };
        Ok(l
            .into_iter()
            .map(|r| r.into_iter().map(Real::as_f64).collect())
            .collect())
    }
}

/// Logit rows as a JSON array of arrays.
pub fn logits_json<T: Real>(logits: &[Vec<T>]) -> String {
    let rows: Vec<Vec<f64>> = logits
        .iter()
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect();
    serde_json::to_string(&rows).expect("finite logits serialize")
}
