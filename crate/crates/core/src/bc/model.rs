use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::slice::BcSample;
use crate::error::{Error, Result};
use crate::obs::{EGO_DIM, LIDAR_DIM, NAVI_DIM, OBS_DIM};
use crate::planner::MixedAction;
use crate::tensor::{
    load_checkpoint, save_checkpoint, Activation, Adam, EncoderConfig, Graph, Linear, ParamStore, Tensor,
    TransformerEncoder, Var,
};

/// Raw head outputs map to `v_f = V_MID + V_MID·o₀` and `d_f = D_SCALE·o₁`.
pub const V_MID: f64 = 7.5;
pub const D_SCALE: f64 = 3.5;

const META: &str = "meta.config";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub encoder: EncoderConfig,
}

impl Default for BcTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-3,
            batch: 64,
            seed: 0,
            encoder: EncoderConfig::default(),
        }
    }
}

/// Transformer encoder over three tokens (ego, navigation, lidar) with a
/// linear head onto the terminal target.
#[derive(Clone, Debug)]
pub struct BasicModel {
    pub store: ParamStore,
    pub config: EncoderConfig,
    embed: [Linear; 3],
    encoder: TransformerEncoder,
    head: Linear,
    /// Set once the model is handed to the learner; training refuses a
    /// frozen model.
    pub frozen: bool,
}

const SEGMENTS: [(usize, usize); 3] = [(0, EGO_DIM), (EGO_DIM, NAVI_DIM), (EGO_DIM + NAVI_DIM, LIDAR_DIM)];

impl BasicModel {
    pub fn new(config: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.d_model;
        let embed = ["ego", "navi", "lidar"]
            .iter()
            .zip(SEGMENTS)
            .map(|(name, (_, w))| Linear::new(&mut store, &format!("bc.embed_{name}"), w, d, &mut rng))
            .collect::<Vec<_>>()
            .try_into()
            .expect("three tokens");
        let encoder = TransformerEncoder::new(&mut store, "bc.encoder", config, &mut rng);
        let head = Linear::new(&mut store, "bc.head", d, 2, &mut rng);
        Self {
            store,
            config,
            embed,
            encoder,
            head,
            frozen: false,
        }
    }

    /// `[B, 2]` raw head outputs for a `[B, 259]` observation batch.
    pub fn forward(&self, g: &mut Graph, p: &crate::tensor::Bound, obs: Var) -> Var {
        let b = g.shape(obs)[0];
        let d = self.config.d_model;
        let tokens: Vec<Var> = self
            .embed
            .iter()
            .zip(SEGMENTS)
            .map(|(lin, (start, w))| {
                let part = g.slice_last(obs, start, w);
                let e = lin.forward(g, p, part);
                g.reshape(e, &[b, 1, d])
            })
            .collect();
        let z = g.concat(&tokens, 1);
        let h = self.encoder.forward(g, p, z);
        let pooled = g.mean_axis1(h);
        self.head.forward(g, p, pooled)
    }

    /// Physical-unit prediction before clamping.
    pub fn predict_raw(&self, obs: &[f64]) -> MixedAction {
        assert_eq!(obs.len(), OBS_DIM, "basic model input width");
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let x = g.input(Tensor::new(&[1, OBS_DIM], obs.to_vec()));
        let o = self.forward(&mut g, &p, x);
        let o = g.value(o).data();
        MixedAction {
            v_f: V_MID + V_MID * o[0],
            d_f: D_SCALE * o[1],
        }
    }

    fn named(&self) -> Vec<(String, Tensor)> {
        let c = &self.config;
        let act = match c.activation {
            Activation::Relu => 0.0,
            Activation::Tanh => 1.0,
        };
        let meta = vec![c.d_model as f64, c.heads as f64, c.layers as f64, c.mlp_ratio as f64, act];
        let mut out = vec![(META.to_string(), Tensor::new(&[5], meta))];
        out.extend(self.store.named_values());
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.named())
    }

    /// Load a frozen model; the encoder shape comes from the checkpoint.
    pub fn load(path: &Path) -> Result<Self> {
        let mut all = load_checkpoint(path)?;
        let bad = |m: String| Error::Checkpoint(format!("{}: {m}", path.display()));
        let pos = all
            .iter()
            .position(|(n, _)| n == META)
            .ok_or_else(|| bad("not a basic-model checkpoint".into()))?;
        let meta = all.remove(pos).1;
        let m = meta.data();
        if m.len() != 5 {
            return Err(bad(format!("malformed {META}")));
        }
        let config = EncoderConfig {
            d_model: m[0] as usize,
            heads: m[1] as usize,
            layers: m[2] as usize,
            mlp_ratio: m[3] as usize,
            activation: if m[4] == 0.0 { Activation::Relu } else { Activation::Tanh },
        };
        let mut model = Self::new(config, 0);
        model.store.load_values(&all).map_err(bad)?;
        model.frozen = true;
        Ok(model)
    }
}

/// Clamp the prediction to `[0, v_max] × [l_min, l_max]`.
pub fn bc_infer(model: &BasicModel, obs: &[f64], v_max: f64, bounds: (f64, f64)) -> MixedAction {
    let raw = model.predict_raw(obs);
    MixedAction {
        v_f: raw.v_f.clamp(0.0, v_max),
        d_f: raw.d_f.clamp(bounds.0, bounds.1),
    }
}

/// Mean squared error in physical units over `samples`.
pub fn bc_loss(model: &BasicModel, samples: &[&BcSample]) -> f64 {
    let mut total = 0.0;
    for chunk in samples.chunks(256) {
        let mut g = Graph::new();
        let p = model.store.bind(&mut g, false);
        let (x, _) = batch_tensors(chunk);
        let x = g.input(x);
        let o = model.forward(&mut g, &p, x);
        for (i, s) in chunk.iter().enumerate() {
            let o = &g.value(o).data()[2 * i..2 * i + 2];
            total += (V_MID + V_MID * o[0] - s.label.v_f).powi(2) + (D_SCALE * o[1] - s.label.d_f).powi(2);
        }
    }
    total / (2 * samples.len().max(1)) as f64
}

fn batch_tensors(chunk: &[&BcSample]) -> (Tensor, Tensor) {
    let mut x = Vec::with_capacity(chunk.len() * OBS_DIM);
    let mut y = Vec::with_capacity(chunk.len() * 2);
    for s in chunk {
        assert_eq!(s.observation.len(), OBS_DIM, "sample observation width");
        x.extend(&s.observation);
        y.extend([s.label.v_f, s.label.d_f]);
    }
    (Tensor::new(&[chunk.len(), OBS_DIM], x), Tensor::new(&[chunk.len(), 2], y))
}

/// Fit a fresh model by minibatch Adam; returns the model and the mean
/// training loss of each epoch.
pub fn bc_train(samples: &[BcSample], cfg: &BcTrainConfig) -> Result<(BasicModel, Vec<f64>)> {
    let mut model = BasicModel::new(cfg.encoder, cfg.seed);
    let history = bc_train_more(&mut model, samples, cfg)?;
    Ok((model, history))
}

/// Continue training `model` for `cfg.epochs` epochs.
pub fn bc_train_more(model: &mut BasicModel, samples: &[BcSample], cfg: &BcTrainConfig) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Precondition("behavior cloning needs at least one sample".into()));
    }
    if model.frozen {
        return Err(Error::Precondition("basic model is frozen".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6263);
    let opt = Adam::with_lr(cfg.lr);
    let scale = Tensor::new(&[2], vec![V_MID, D_SCALE]);
    let offset = Tensor::new(&[2], vec![V_MID, 0.0]);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for idx in order.chunks(cfg.batch.max(1)) {
            let chunk: Vec<&BcSample> = idx.iter().map(|&i| &samples[i]).collect();
            let (x, y) = batch_tensors(&chunk);
            let mut g = Graph::new();
            let p = model.store.bind(&mut g, true);
            let x = g.input(x);
            let o = model.forward(&mut g, &p, x);
            let s = g.input(scale.clone());
            let off = g.input(offset.clone());
            let phys = g.mul_row(o, s);
            let phys = g.add_row(phys, off);
            let y = g.input(y);
            let d = g.sub(phys, y);
            let d2 = g.square(d);
            let loss = g.mean(d2);
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::Diverged(format!("behavior cloning loss {lv} at epoch {epoch}")));
            }
            let grads = g.backward(loss);
            let g = p.grads(&model.store, &grads);
            opt.step(&mut model.store, &g);
            sum += lv * chunk.len() as f64;
        }
        let mean = sum / samples.len() as f64;
        log::debug!("bc epoch {epoch}: loss {mean:.5}");
        history.push(mean);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BcTrainConfig {
        BcTrainConfig {
            epochs: 300,
            lr: 3e-3,
            batch: 8,
            seed: 1,
            encoder: EncoderConfig {
                d_model: 16,
                heads: 2,
                layers: 1,
                mlp_ratio: 2,
                activation: Activation::Tanh,
            },
        }
    }

    fn obs(k: usize) -> Vec<f64> {
        (0..OBS_DIM).map(|i| ((i * 7 + k * 13) as f64 * 0.1).sin()).collect()
    }

    #[test]
    fn memorizes_a_single_sample() {
        let s = BcSample {
            observation: obs(0),
            label: MixedAction { v_f: 9.0, d_f: -1.2 },
        };
        let (m, hist) = bc_train(&[s.clone()], &tiny()).unwrap();
        assert!(*hist.last().unwrap() < 1e-4, "final loss {}", hist.last().unwrap());
        let out = bc_infer(&m, &s.observation, 15.0, (-5.0, 5.0));
        assert!((out.v_f - 9.0).abs() < 0.05 && (out.d_f + 1.2).abs() < 0.05);
    }

    #[test]
    fn conflicting_labels_floor_at_their_variance() {
        let o = obs(1);
        let a = BcSample { observation: o.clone(), label: MixedAction { v_f: 4.0, d_f: 0.0 } };
        let b = BcSample { observation: o, label: MixedAction { v_f: 8.0, d_f: 2.0 } };
        let mut cfg = tiny();
        cfg.batch = 2;
        let (m, _) = bc_train(&[a.clone(), b.clone()], &cfg).unwrap();
        // Bayes-optimal constant: the mean label, leaving per-output variances 4 and 1
        let floor = (4.0 + 1.0) / 2.0;
        let l = bc_loss(&m, &[&a, &b]);
        assert!(l >= floor - 1e-9 && l < floor + 0.05, "loss {l}");
    }

    #[test]
    fn inference_is_deterministic_and_clamped() {
        let m = BasicModel::new(tiny().encoder, 3);
        let o = obs(2);
        assert_eq!(bc_infer(&m, &o, 15.0, (-1.0, 1.0)), bc_infer(&m, &o, 15.0, (-1.0, 1.0)));
        let mut big = m.clone();
        let head_bias = big.store.id("bc.head.bias").unwrap();
        big.store.get_mut(head_bias).data_mut().copy_from_slice(&[100.0, -100.0]);
        let out = bc_infer(&big, &o, 15.0, (-1.0, 1.0));
        assert_eq!(out, MixedAction { v_f: 15.0, d_f: -1.0 });
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = BasicModel::new(tiny().encoder, 4);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bc.ckpt");
        m.save(&p).unwrap();
        let back = BasicModel::load(&p).unwrap();
        assert!(back.frozen);
        assert_eq!(back.store.named_values(), m.store.named_values());
        let o = obs(5);
        assert_eq!(back.predict_raw(&o), m.predict_raw(&o));
    }

    #[test]
    fn frozen_model_refuses_training() {
        let mut m = BasicModel::new(tiny().encoder, 4);
        m.frozen = true;
        let s = BcSample { observation: obs(0), label: MixedAction { v_f: 1.0, d_f: 0.0 } };
        assert!(bc_train_more(&mut m, &[s], &tiny()).is_err());
    }
}
