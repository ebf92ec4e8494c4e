use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, Bound, Graph, Linear, Mlp, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    /// Hidden width of the per-token MLP as a multiple of `d_model`.
    pub mlp_ratio: usize,
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            heads: 4,
            layers: 2,
            mlp_ratio: 4,
            activation: Activation::Tanh,
        }
    }
}

/// Scaled dot-product attention `softmax(Q·Kᵀ/√d_k)·V` on `[B, T, d_k]` inputs.
pub fn attention(g: &mut Graph, q: Var, k: Var, v: Var) -> Var {
    let d_k = *g.shape(k).last().unwrap();
    let kt = g.transpose(k);
    let scores = g.bmm(q, kt);
    let scores = g.scale(scores, 1.0 / (d_k as f64).sqrt());
    let weights = g.softmax(scores);
    g.bmm(weights, v)
}

#[derive(Clone, Debug)]
struct AffineNorm {
    gamma: ParamId,
    beta: ParamId,
}

impl AffineNorm {
    fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        Self {
            gamma: store.add(&format!("{name}.gamma"), Tensor::full(&[d], 1.0)),
            beta: store.add(&format!("{name}.beta"), Tensor::zeros(&[d])),
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let n = g.layer_norm(x);
        let s = g.mul_row(n, p.var(self.gamma));
        g.add_row(s, p.var(self.beta))
    }
}

/// One pre-norm block: `z' = MSA(LN(z)) + z`, `z'' = MLP(LN(z')) + z'`.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    ln_attn: AffineNorm,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    pub wo: Linear,
    ln_mlp: AffineNorm,
    pub mlp: Mlp,
    heads: usize,
}

impl EncoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.d_model;
        assert!(d % cfg.heads == 0, "d_model {d} not divisible by {} heads", cfg.heads);
        Self {
            ln_attn: AffineNorm::new(store, &format!("{name}.ln_attn"), d),
            wq: Linear::new(store, &format!("{name}.wq"), d, d, rng),
            wk: Linear::new(store, &format!("{name}.wk"), d, d, rng),
            wv: Linear::new(store, &format!("{name}.wv"), d, d, rng),
            wo: Linear::new(store, &format!("{name}.wo"), d, d, rng),
            ln_mlp: AffineNorm::new(store, &format!("{name}.ln_mlp"), d),
            mlp: Mlp::new(
                store,
                &format!("{name}.mlp"),
                &[d, d * cfg.mlp_ratio, d],
                cfg.activation,
                rng,
            ),
            heads: cfg.heads,
        }
    }

    fn self_attention(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let d = *g.shape(x).last().unwrap();
        let dk = d / self.heads;
        let q = self.wq.forward(g, p, x);
        let k = self.wk.forward(g, p, x);
        let v = self.wv.forward(g, p, x);
        let heads: Vec<Var> = (0..self.heads)
            .map(|h| {
                let qh = g.slice_last(q, h * dk, dk);
                let kh = g.slice_last(k, h * dk, dk);
                let vh = g.slice_last(v, h * dk, dk);
                attention(g, qh, kh, vh)
            })
            .collect();
        let joined = if heads.len() == 1 { heads[0] } else { g.concat(&heads, 2) };
        self.wo.forward(g, p, joined)
    }

    /// `z` is `[B, T, d_model]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, z: Var) -> Var {
        let n1 = self.ln_attn.forward(g, p, z);
        let attn = self.self_attention(g, p, n1);
        let z1 = g.add(attn, z);
        let n2 = self.ln_mlp.forward(g, p, z1);
        let m = self.mlp.forward(g, p, n2);
        g.add(m, z1)
    }

    /// Zero the attention and MLP output projections (the block becomes the
    /// identity map).
    pub fn zero_output_projections(&self, store: &mut ParamStore) {
        for id in [
            self.wo.weight,
            self.wo.bias,
            self.mlp.layers.last().unwrap().weight,
            self.mlp.layers.last().unwrap().bias,
        ] {
            store.get_mut(id).data_mut().fill(0.0);
        }
    }
}

/// Stack of [`EncoderLayer`]s followed by a final layer norm.
#[derive(Clone, Debug)]
pub struct TransformerEncoder {
    pub config: EncoderConfig,
    pub layers: Vec<EncoderLayer>,
    final_norm: AffineNorm,
}

impl TransformerEncoder {
    pub fn new(store: &mut ParamStore, name: &str, config: EncoderConfig, rng: &mut impl Rng) -> Self {
        let layers = (0..config.layers)
            .map(|i| EncoderLayer::new(store, &format!("{name}.layer{i}"), &config, rng))
            .collect();
        Self {
            config,
            layers,
            final_norm: AffineNorm::new(store, &format!("{name}.ln_final"), config.d_model),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, z: Var) -> Var {
        let mut h = z;
        for layer in &self.layers {
            h = layer.forward(g, p, h);
        }
        self.final_norm.forward(g, p, h)
    }
}
