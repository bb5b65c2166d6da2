//! The degeneracy classifier: a 7×7 stem, two residual blocks, a one-layer
//! self-attention encoder over spatial tokens, and a two-way linear head.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nn::{self, AttnCache, AttnWeights, BnCache, BnStats, LnCache, Tensor};
use crate::error::{Error, Result};
use crate::rng;

/// Class index of "degenerate" in the logits.
pub const DEGENERATE: usize = 1;
pub const NON_DEGENERATE: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub size_px: usize,
    pub stem_channels: usize,
    pub block2_channels: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            size_px: 64,
            stem_channels: 8,
            block2_channels: 16,
            model_dim: 32,
            heads: 2,
            ff_dim: 64,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            ln_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size_px < 8 || !self.size_px.is_multiple_of(8) {
            return Err(Error::Domain(
                "model size_px must be a multiple of 8 and >= 8".into(),
            ));
        }
        if self.stem_channels == 0 || self.block2_channels == 0 || self.ff_dim == 0 {
            return Err(Error::Domain("model widths must be positive".into()));
        }
        if self.heads == 0 || !self.model_dim.is_multiple_of(self.heads) {
            return Err(Error::Domain("model_dim must be divisible by heads".into()));
        }
        Ok(())
    }

    /// Side of the token grid after the stem, pooling and the strided block.
    pub fn token_side(&self) -> usize {
        self.size_px / 8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Named parameter tensors plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

pub type Grads = BTreeMap<String, Tensor>;

fn is_buffer(name: &str) -> bool {
    name.ends_with(".running_mean") || name.ends_with(".running_var")
}

const BNS: [&str; 6] = [
    "stem.bn",
    "block1.bn1",
    "block1.bn2",
    "block2.bn1",
    "block2.bn2",
    "block2.proj_bn",
];

impl ModelParams {
    /// Every tensor with its shape, zero-filled; batch-norm scales and
    /// running variances are one, layer-norm scales are one.
    fn skeleton(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (c1, c2, d, f) = (
            config.stem_channels,
            config.block2_channels,
            config.model_dim,
            config.ff_dim,
        );
        let mut t = BTreeMap::new();
        let mut put = |name: &str, shape: &[usize]| {
            t.insert(name.to_string(), Tensor::zeros(shape));
        };
        put("stem.conv.w", &[c1, 1, 7, 7]);
        put("block1.conv1.w", &[c1, c1, 3, 3]);
        put("block1.conv2.w", &[c1, c1, 3, 3]);
        put("block2.conv1.w", &[c2, c1, 3, 3]);
        put("block2.conv2.w", &[c2, c2, 3, 3]);
        put("block2.proj.w", &[c2, c1, 1, 1]);
        for bn in BNS {
            let ch = if bn.starts_with("block2") { c2 } else { c1 };
            for part in ["gamma", "beta", "running_mean", "running_var"] {
                put(&format!("{bn}.{part}"), &[ch]);
            }
        }
        put("tokens.w", &[d, c2]);
        put("tokens.b", &[d]);
        for p in ["q", "k", "v", "o"] {
            put(&format!("attn.{p}.w"), &[d, d]);
            put(&format!("attn.{p}.b"), &[d]);
        }
        for ln in ["attn.ln1", "attn.ln2"] {
            put(&format!("{ln}.gamma"), &[d]);
            put(&format!("{ln}.beta"), &[d]);
        }
        put("ff.w1", &[f, d]);
        put("ff.b1", &[f]);
        put("ff.w2", &[d, f]);
        put("ff.b2", &[d]);
        put("head.w", &[2, d]);
        put("head.b", &[2]);
        let mut p = Self { config, tensors: t };
        for (name, v) in p.tensors.iter_mut() {
            if name.ends_with(".gamma") || name.ends_with(".running_var") {
                v.data.fill(1.0);
            }
        }
        Ok(p)
    }

    /// Every tensor zero, running variances one.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let mut p = Self::skeleton(config)?;
        for (name, v) in p.tensors.iter_mut() {
            if !name.ends_with(".running_var") {
                v.data.fill(0.0);
            }
        }
        Ok(p)
    }

    /// He-normal convolutions and `N(0, 1/fan_in)` projections. Biases,
    /// norm shifts and running statistics keep their neutral values.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::skeleton(config)?;
        let mut r = rng::seeded(seed);
        for (name, v) in p.tensors.iter_mut() {
            let fan_in: usize = v.shape[1..].iter().product();
            let sd =
                if name.ends_with("conv.w") || name.contains(".conv") || name.ends_with("proj.w") {
                    (2.0 / fan_in as f64).sqrt()
                } else if name.ends_with(".w") || name.ends_with(".w1") || name.ends_with(".w2") {
                    (1.0 / fan_in as f64).sqrt()
                } else {
                    continue;
                };
            for x in &mut v.data {
                *x = sd * r.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(p)
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.tensors[name]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors.get_mut(name).expect("unknown parameter")
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.tensors
            .keys()
            .filter(|n| !is_buffer(n))
            .cloned()
            .collect()
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|(n, _)| !is_buffer(n))
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .values()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Folds batch statistics into the running estimates.
    pub fn apply_bn_stats(&mut self, stats: &[(String, BnStats)]) {
        let m = self.config.bn_momentum;
        for (bn, s) in stats {
            let rm = self.get_mut(&format!("{bn}.running_mean"));
            for (r, v) in rm.data.iter_mut().zip(&s.mean) {
                *r = (1.0 - m) * *r + m * v;
            }
            let rv = self.get_mut(&format!("{bn}.running_var"));
            for (r, v) in rv.data.iter_mut().zip(&s.var_unbiased) {
                *r = (1.0 - m) * *r + m * v;
            }
        }
    }

    fn bn(&self, name: &str, x: &Tensor, mode: Mode) -> (Tensor, BnCache, Option<BnStats>) {
        nn::batch_norm(
            x,
            &self.get(&format!("{name}.gamma")).data,
            &self.get(&format!("{name}.beta")).data,
            &self.get(&format!("{name}.running_mean")).data,
            &self.get(&format!("{name}.running_var")).data,
            self.config.bn_eps,
            mode == Mode::Train,
        )
    }

    fn attn_weights(&self) -> AttnWeights<'_> {
        AttnWeights {
            wq: self.get("attn.q.w"),
            bq: &self.get("attn.q.b").data,
            wk: self.get("attn.k.w"),
            bk: &self.get("attn.k.b").data,
            wv: self.get("attn.v.w"),
            bv: &self.get("attn.v.b").data,
            wo: self.get("attn.o.w"),
            bo: &self.get("attn.o.b").data,
        }
    }
}

struct BlockCache {
    xin: Tensor,
    bc1: BnCache,
    r1: Tensor,
    bc2: BnCache,
    proj_bc: Option<BnCache>,
    out: Tensor,
}

struct Cache {
    x: Tensor,
    stem_bc: BnCache,
    a1: Tensor,
    pool_arg: Vec<usize>,
    b1: BlockCache,
    b2: BlockCache,
    tok: Tensor,
    emb: Tensor,
    attn: AttnCache,
    ln1: LnCache,
    h: Tensor,
    f1r: Tensor,
    ln2: LnCache,
    pooled: Tensor,
}

/// Result of a forward pass over a batch.
pub struct ForwardPass {
    /// `[batch, 2]` row-major.
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// Batch statistics to fold into running estimates (training mode only).
    pub bn_stats: Vec<(String, BnStats)>,
    /// Hash of every ReLU on/off state and pooling choice; two inputs with
    /// the same pattern lie in the same smooth piece of the network.
    pub pattern: u64,
    cache: Cache,
}

impl ForwardPass {
    pub fn batch(&self) -> usize {
        self.logits.len() / 2
    }

    /// Degenerate-class probability per sample.
    pub fn degeneracy(&self) -> Vec<f64> {
        self.probs.chunks(2).map(|p| p[DEGENERATE]).collect()
    }
}

fn block_forward(
    p: &ModelParams,
    prefix: &str,
    xin: &Tensor,
    stride: usize,
    mode: Mode,
    stats: &mut Vec<(String, BnStats)>,
) -> BlockCache {
    let mut keep = |name: String, s: Option<BnStats>| {
        if let Some(s) = s {
            stats.push((name, s));
        }
    };
    let c1 = nn::conv2d(xin, p.get(&format!("{prefix}.conv1.w")), stride, 1);
    let (b1, bc1, s) = p.bn(&format!("{prefix}.bn1"), &c1, mode);
    keep(format!("{prefix}.bn1"), s);
    let r1 = nn::relu(&b1);
    let c2 = nn::conv2d(&r1, p.get(&format!("{prefix}.conv2.w")), 1, 1);
    let (mut sum, bc2, s) = p.bn(&format!("{prefix}.bn2"), &c2, mode);
    keep(format!("{prefix}.bn2"), s);
    let proj_bc = if p.tensors.contains_key(&format!("{prefix}.proj.w")) {
        let pc = nn::conv2d(xin, p.get(&format!("{prefix}.proj.w")), stride, 0);
        let (pb, pbc, s) = p.bn(&format!("{prefix}.proj_bn"), &pc, mode);
        keep(format!("{prefix}.proj_bn"), s);
        sum.add_assign(&pb);
        Some(pbc)
    } else {
        sum.add_assign(xin);
        None
    };
    BlockCache {
        xin: xin.clone(),
        bc1,
        r1,
        bc2,
        proj_bc,
        out: nn::relu(&sum),
    }
}

fn block_backward(
    p: &ModelParams,
    prefix: &str,
    c: &BlockCache,
    stride: usize,
    dout: &Tensor,
    g: &mut Grads,
) -> Tensor {
    let dsum = nn::relu_backward(&c.out, dout);
    let (dc2, dg, db) =
        nn::batch_norm_backward(&dsum, &p.get(&format!("{prefix}.bn2.gamma")).data, &c.bc2);
    put_vec(g, &format!("{prefix}.bn2.gamma"), dg);
    put_vec(g, &format!("{prefix}.bn2.beta"), db);
    let (dr1, dw2) =
        nn::conv2d_backward(&c.r1, p.get(&format!("{prefix}.conv2.w")), &dc2, 1, 1, true);
    g.insert(format!("{prefix}.conv2.w"), dw2);
    let db1 = nn::relu_backward(&c.r1, &dr1.unwrap());
    let (dc1, dg, db) =
        nn::batch_norm_backward(&db1, &p.get(&format!("{prefix}.bn1.gamma")).data, &c.bc1);
    put_vec(g, &format!("{prefix}.bn1.gamma"), dg);
    put_vec(g, &format!("{prefix}.bn1.beta"), db);
    let (dx, dw1) = nn::conv2d_backward(
        &c.xin,
        p.get(&format!("{prefix}.conv1.w")),
        &dc1,
        stride,
        1,
        true,
    );
    g.insert(format!("{prefix}.conv1.w"), dw1);
    let mut dx = dx.unwrap();
    match &c.proj_bc {
        Some(pbc) => {
            let (dpc, dg, db) = nn::batch_norm_backward(
                &dsum,
                &p.get(&format!("{prefix}.proj_bn.gamma")).data,
                pbc,
            );
            put_vec(g, &format!("{prefix}.proj_bn.gamma"), dg);
            put_vec(g, &format!("{prefix}.proj_bn.beta"), db);
            let (dxp, dwp) = nn::conv2d_backward(
                &c.xin,
                p.get(&format!("{prefix}.proj.w")),
                &dpc,
                stride,
                0,
                true,
            );
            g.insert(format!("{prefix}.proj.w"), dwp);
            dx.add_assign(&dxp.unwrap());
        }
        None => dx.add_assign(&dsum),
    }
    dx
}

fn put_vec(g: &mut Grads, name: &str, v: Vec<f64>) {
    let n = v.len();
    g.insert(name.to_string(), Tensor::from_vec(&[n], v));
}

fn hash_relu(h: &mut DefaultHasher, t: &Tensor) {
    let mut word = 0u64;
    for (i, v) in t.data.iter().enumerate() {
        word = (word << 1) | (*v > 0.0) as u64;
        if i % 64 == 63 {
            h.write_u64(word);
            word = 0;
        }
    }
    h.write_u64(word);
}

/// Stacks square images `[S·S]` into a `[B, 1, S, S]` batch.
pub fn batch_tensor(images: &[&[f64]], size_px: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(images.len() * size_px * size_px);
    for img in images {
        if img.len() != size_px * size_px {
            return Err(Error::Contract(format!(
                "image has {} pixels, model expects {size_px}x{size_px}",
                img.len()
            )));
        }
        data.extend_from_slice(img);
    }
    Ok(Tensor::from_vec(&[images.len(), 1, size_px, size_px], data))
}

impl ModelParams {
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<ForwardPass> {
        let s = self.config.size_px;
        if x.shape.len() != 4
            || x.shape[1] != 1
            || x.shape[2] != s
            || x.shape[3] != s
            || x.shape[0] == 0
        {
            return Err(Error::Contract(format!(
                "input shape {:?} does not match [B, 1, {s}, {s}]",
                x.shape
            )));
        }
        let mut stats = Vec::new();
        let z1 = nn::conv2d(x, self.get("stem.conv.w"), 2, 3);
        let (b1, stem_bc, st) = self.bn("stem.bn", &z1, mode);
        if let Some(st) = st {
            stats.push(("stem.bn".to_string(), st));
        }
        let a1 = nn::relu(&b1);
        let (pooled_map, pool_arg) = nn::max_pool2(&a1);
        let blk1 = block_forward(self, "block1", &pooled_map, 1, mode, &mut stats);
        let blk2 = block_forward(self, "block2", &blk1.out, 2, mode, &mut stats);

        let (b, c, hh, ww) = blk2.out.dims4();
        let t = hh * ww;
        let mut tok = Tensor::zeros(&[b, t, c]);
        for bi in 0..b {
            for ch in 0..c {
                for k in 0..t {
                    tok.data[(bi * t + k) * c + ch] = blk2.out.data[(bi * c + ch) * t + k];
                }
            }
        }
        let emb = nn::linear(&tok, self.get("tokens.w"), &self.get("tokens.b").data);
        let (att, attn) = nn::self_attention(&emb, &self.attn_weights(), self.config.heads);
        let mut h_pre = emb.clone();
        h_pre.add_assign(&att);
        let (h, ln1) = nn::layer_norm(
            &h_pre,
            &self.get("attn.ln1.gamma").data,
            &self.get("attn.ln1.beta").data,
            self.config.ln_eps,
        );
        let f1 = nn::linear(&h, self.get("ff.w1"), &self.get("ff.b1").data);
        let f1r = nn::relu(&f1);
        let f2 = nn::linear(&f1r, self.get("ff.w2"), &self.get("ff.b2").data);
        let mut o_pre = h.clone();
        o_pre.add_assign(&f2);
        let (o, ln2) = nn::layer_norm(
            &o_pre,
            &self.get("attn.ln2.gamma").data,
            &self.get("attn.ln2.beta").data,
            self.config.ln_eps,
        );
        let d = self.config.model_dim;
        let mut pooled = Tensor::zeros(&[b, d]);
        for bi in 0..b {
            for k in 0..t {
                for e in 0..d {
                    pooled.data[bi * d + e] += o.data[(bi * t + k) * d + e] / t as f64;
                }
            }
        }
        let logits = nn::linear(&pooled, self.get("head.w"), &self.get("head.b").data).data;
        let mut probs = logits.clone();
        nn::softmax_rows(&mut probs, 2);

        let mut hasher = DefaultHasher::new();
        for r in [&a1, &blk1.r1, &blk1.out, &blk2.r1, &blk2.out, &f1r] {
            hash_relu(&mut hasher, r);
        }
        pool_arg.hash(&mut hasher);

        Ok(ForwardPass {
            logits,
            probs,
            bn_stats: stats,
            pattern: hasher.finish(),
            cache: Cache {
                x: x.clone(),
                stem_bc,
                a1,
                pool_arg,
                b1: blk1,
                b2: blk2,
                tok,
                emb,
                attn,
                ln1,
                h,
                f1r,
                ln2,
                pooled,
            },
        })
    }

    /// Mean cross-entropy over the batch and its gradient for every
    /// trainable tensor.
    pub fn backward(&self, fwd: &ForwardPass, labels: &[usize]) -> Result<(f64, Grads)> {
        if labels.len() != fwd.batch() || labels.iter().any(|&l| l > 1) {
            return Err(Error::Contract(
                "labels must be 0/1, one per batch sample".into(),
            ));
        }
        let c = &fwd.cache;
        let mut g = Grads::new();
        let (loss, dlogits, _) = nn::softmax_cross_entropy(&fwd.logits, labels, 2);
        let b = labels.len();
        let d = self.config.model_dim;
        let dl = Tensor::from_vec(&[b, 2], dlogits);
        let (dpooled, dw, db) = nn::linear_backward(&c.pooled, self.get("head.w"), &dl);
        g.insert("head.w".into(), dw);
        put_vec(&mut g, "head.b", db);

        let t = c.tok.shape[1];
        let mut do_ = Tensor::zeros(&[b, t, d]);
        for bi in 0..b {
            for k in 0..t {
                for e in 0..d {
                    do_.data[(bi * t + k) * d + e] = dpooled.data[bi * d + e] / t as f64;
                }
            }
        }
        let (do_pre, dg, db) =
            nn::layer_norm_backward(&do_, &self.get("attn.ln2.gamma").data, &c.ln2);
        put_vec(&mut g, "attn.ln2.gamma", dg);
        put_vec(&mut g, "attn.ln2.beta", db);
        let (df1r, dw2, db2) = nn::linear_backward(&c.f1r, self.get("ff.w2"), &do_pre);
        g.insert("ff.w2".into(), dw2);
        put_vec(&mut g, "ff.b2", db2);
        let df1 = nn::relu_backward(&c.f1r, &df1r);
        let (mut dh, dw1, db1) = nn::linear_backward(&c.h, self.get("ff.w1"), &df1);
        g.insert("ff.w1".into(), dw1);
        put_vec(&mut g, "ff.b1", db1);
        dh.add_assign(&do_pre);
        let (dh_pre, dg, db) =
            nn::layer_norm_backward(&dh, &self.get("attn.ln1.gamma").data, &c.ln1);
        put_vec(&mut g, "attn.ln1.gamma", dg);
        put_vec(&mut g, "attn.ln1.beta", db);
        let ag = nn::self_attention_backward(
            &c.emb,
            &self.attn_weights(),
            self.config.heads,
            &c.attn,
            &dh_pre,
        );
        g.insert("attn.q.w".into(), ag.dwq);
        put_vec(&mut g, "attn.q.b", ag.dbq);
        g.insert("attn.k.w".into(), ag.dwk);
        put_vec(&mut g, "attn.k.b", ag.dbk);
        g.insert("attn.v.w".into(), ag.dwv);
        put_vec(&mut g, "attn.v.b", ag.dbv);
        g.insert("attn.o.w".into(), ag.dwo);
        put_vec(&mut g, "attn.o.b", ag.dbo);
        let mut demb = ag.dx;
        demb.add_assign(&dh_pre);
        let (dtok, dw, db) = nn::linear_backward(&c.tok, self.get("tokens.w"), &demb);
        g.insert("tokens.w".into(), dw);
        put_vec(&mut g, "tokens.b", db);

        let (_, ch, hh, ww) = c.b2.out.dims4();
        let mut dout2 = Tensor::zeros(&c.b2.out.shape);
        for bi in 0..b {
            for k in 0..hh * ww {
                for e in 0..ch {
                    dout2.data[(bi * ch + e) * hh * ww + k] = dtok.data[(bi * t + k) * ch + e];
                }
            }
        }
        let dout1 = block_backward(self, "block2", &c.b2, 2, &dout2, &mut g);
        let dpool = block_backward(self, "block1", &c.b1, 1, &dout1, &mut g);
        let da1 = nn::max_pool2_backward(&c.a1.shape, &c.pool_arg, &dpool);
        let db1 = nn::relu_backward(&c.a1, &da1);
        let (dz1, dg, db) =
            nn::batch_norm_backward(&db1, &self.get("stem.bn.gamma").data, &c.stem_bc);
        put_vec(&mut g, "stem.bn.gamma", dg);
        put_vec(&mut g, "stem.bn.beta", db);
        let (_, dw) = nn::conv2d_backward(&c.x, self.get("stem.conv.w"), &dz1, 2, 3, false);
        g.insert("stem.conv.w".into(), dw);
        Ok((loss, g))
    }

    /// Loss only, without keeping a backward cache around.
    pub fn loss(&self, x: &Tensor, labels: &[usize], mode: Mode) -> Result<(f64, u64)> {
        let f = self.forward(x, mode)?;
        let (loss, _, _) = nn::softmax_cross_entropy(&f.logits, labels, 2);
        Ok((loss, f.pattern))
    }

    /// Logits and degenerate-class probability of one image.
    pub fn predict(&self, pixels: &[f64]) -> Result<([f64; 2], f64)> {
        let x = batch_tensor(&[pixels], self.config.size_px)?;
        let f = self.forward(&x, Mode::Infer)?;
        Ok(([f.logits[0], f.logits[1]], f.probs[DEGENERATE]))
    }
}

/// Outcome of comparing analytic and finite-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest error over checked coordinates, relative to the larger of the
    /// two gradient magnitudes at that coordinate, floored at 1e-3 of the
    /// largest analytic gradient of the whole model. The floor keeps
    /// structurally zero gradients (attention key bias) from turning
    /// round-off into relative error.
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
    /// Coordinates where every probe step crossed a ReLU or pooling switch.
    pub skipped: usize,
}

/// Central differences (step `h`, shrunk ×10 up to twice when a probe
/// crosses a non-differentiable switch) on up to `per_tensor` random
/// coordinates of every trainable tensor, in training mode.
pub fn gradient_check(
    params: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    h: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheck> {
    let fwd = params.forward(x, Mode::Train)?;
    let base_pattern = fwd.pattern;
    let (_, grads) = params.backward(&fwd, labels)?;
    let mut r = rng::seeded(seed);
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
        skipped: 0,
    };
    let scale = grads
        .values()
        .flat_map(|g| g.data.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut probe = params.clone();
    for name in params.trainable_names() {
        let ga = &grads[&name];
        let n = ga.len();
        let coords: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            (0..per_tensor).map(|_| r.random_range(0..n)).collect()
        };
        for i in coords {
            let orig = params.get(&name).data[i];
            let mut numeric = None;
            let mut step = h;
            for _ in 0..3 {
                probe.get_mut(&name).data[i] = orig + step;
                let (lp, pp) = probe.loss(x, labels, Mode::Train)?;
                probe.get_mut(&name).data[i] = orig - step;
                let (lm, pm) = probe.loss(x, labels, Mode::Train)?;
                probe.get_mut(&name).data[i] = orig;
                if pp == base_pattern && pm == base_pattern {
                    numeric = Some((lp - lm) / (2.0 * step));
                    break;
                }
                step /= 10.0;
            }
            let Some(num) = numeric else {
                out.skipped += 1;
                continue;
            };
            let a = ga.data[i];
            let denom = a.abs().max(num.abs()).max(1e-3 * scale).max(1e-10);
            let rel = (a - num).abs() / denom;
            out.checked += 1;
            if rel > out.max_rel_error {
                out.max_rel_error = rel;
                out.worst = format!("{name}[{i}]");
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the blob, in f32 elements.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: ModelConfig,
    blob: String,
    tensors: Vec<ManifestEntry>,
}

pub(crate) const MANIFEST: &str = "manifest.json";
const BLOB: &str = "weights.bin";

impl ModelParams {
    /// Writes `manifest.json` and `weights.bin` (little-endian f32) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut blob = Vec::new();
        let mut tensors = Vec::new();
        for (name, t) in &self.tensors {
            tensors.push(ManifestEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                offset: blob.len() / 4,
            });
            for v in &t.data {
                blob.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: "adslam-model".into(),
            version: 1,
            config: self.config,
            blob: BLOB.into(),
            tensors,
        };
        let text =
            serde_json::to_string_pretty(&manifest).map_err(|e| Error::Contract(e.to_string()))?;
        let mp = dir.join(MANIFEST);
        fs::write(&mp, text + "\n").map_err(|e| Error::io(&mp, e))?;
        let bp = dir.join(BLOB);
        fs::write(&bp, blob).map_err(|e| Error::io(&bp, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mp = dir.join(MANIFEST);
        let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(&mp, e.line(), e.to_string()))?;
        if manifest.format != "adslam-model" || manifest.version != 1 {
            return Err(Error::parse(&mp, 1, "unsupported model format"));
        }
        let bp = dir.join(&manifest.blob);
        let blob = fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
        let mut p = Self::skeleton(manifest.config)?;
        let mut seen = 0;
        for e in &manifest.tensors {
            let Some(t) = p.tensors.get_mut(&e.name) else {
                return Err(Error::parse(
                    &mp,
                    1,
                    format!("unexpected tensor {}", e.name),
                ));
            };
            if t.shape != e.shape {
                return Err(Error::parse(
                    &mp,
                    1,
                    format!(
                        "tensor {} has shape {:?}, expected {:?}",
                        e.name, e.shape, t.shape
                    ),
                ));
            }
            let end = (e.offset + t.len()) * 4;
            if end > blob.len() {
                return Err(Error::parse(
                    &bp,
                    1,
                    format!("blob too short for tensor {}", e.name),
                ));
            }
            for (k, v) in t.data.iter_mut().enumerate() {
                let o = (e.offset + k) * 4;
                *v = f32::from_le_bytes(blob[o..o + 4].try_into().unwrap()) as f64;
            }
            seen += 1;
        }
        if seen != p.tensors.len() {
            return Err(Error::parse(&mp, 1, "manifest is missing tensors"));
        }
        if !p.is_finite() {
            return Err(Error::Contract("model contains non-finite values".into()));
        }
        Ok(p)
    }
}
