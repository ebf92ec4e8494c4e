use std::collections::HashMap;

use super::{Gradients, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named parameters plus the adaptive-moment buffers that track them.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, usize>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        self.index.insert(name.to_string(), self.values.len());
        self.names.push(name.to_string());
        self.m.push(vec![0.0; value.len()]);
        self.v.push(vec![0.0; value.len()]);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_values(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Record every parameter on `g` (as a differentiable leaf when
    /// `trainable`, otherwise as a constant).
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .values
            .iter()
            .map(|t| {
                if trainable {
                    g.leaf(t.clone())
                } else {
                    g.input(t.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// Overwrite values by name from another store with the same layout.
    pub fn load_values(&mut self, named: &[(String, Tensor)]) -> Result<(), String> {
        for (name, t) in named {
            let Some(&i) = self.index.get(name) else {
                return Err(format!("unknown parameter {name}"));
            };
            if self.values[i].shape() != t.shape() {
                return Err(format!(
                    "parameter {name}: shape {:?} does not match {:?}",
                    t.shape(),
                    self.values[i].shape()
                ));
            }
            self.values[i] = t.clone();
        }
        if named.len() != self.values.len() {
            return Err(format!(
                "expected {} parameters, got {}",
                self.values.len(),
                named.len()
            ));
        }
        Ok(())
    }

    pub fn named_values(&self) -> Vec<(String, Tensor)> {
        self.names.iter().cloned().zip(self.values.iter().cloned()).collect()
    }

    /// `self ← τ·src + (1 − τ)·self`.
    pub fn polyak_from(&mut self, src: &ParamStore, tau: f64) {
        assert_eq!(self.values.len(), src.values.len(), "polyak: layout mismatch");
        for (dst, s) in self.values.iter_mut().zip(&src.values) {
            assert_eq!(dst.shape(), s.shape(), "polyak: shape mismatch");
            if tau == 1.0 {
                dst.data_mut().copy_from_slice(s.data());
                continue;
            }
            for (d, x) in dst.data_mut().iter_mut().zip(s.data()) {
                *d = tau * x + (1.0 - tau) * *d;
            }
        }
    }
}

/// A [`ParamStore`] recorded on one graph.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wrap vars that were recorded in store order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients in store order; parameters the loss does not reach get zeros.
    pub fn grads(&self, store: &ParamStore, grads: &Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(&store.values)
            .map(|(&v, t)| grads.get(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    /// One bias-corrected adaptive-moment update.
    pub fn step(&self, store: &mut ParamStore, grads: &[Tensor]) {
        assert_eq!(grads.len(), store.values.len(), "adam: gradient count mismatch");
        store.step += 1;
        let t = store.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            assert_eq!(
                g.shape(),
                store.values[i].shape(),
                "adam: gradient shape mismatch for {}",
                store.names[i]
            );
            let (m, v) = (&mut store.m[i], &mut store.v[i]);
            let p = store.values[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[f64]) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::new(&[values.len()], values.to_vec()));
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut s, id) = store_with(&[1.0, -2.0, 3.0]);
        Adam::default().step(&mut s, &[Tensor::zeros(&[3])]);
        assert_eq!(s.get(id).data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // m̂ = g, v̂ = g² on the first step, so Δ = −lr·g/(|g| + ε).
        let (mut s, id) = store_with(&[0.0, 0.0, 0.0]);
        let g = [0.5, -3.0, 1e-3];
        let opt = Adam::with_lr(0.01);
        opt.step(&mut s, &[Tensor::new(&[3], g.to_vec())]);
        for (p, gi) in s.get(id).data().iter().zip(g) {
            let expected = -0.01 * gi / (gi.abs() + 1e-8);
            assert!((p - expected).abs() < 1e-15, "{p} vs {expected}");
            assert!((p.abs() - 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(w) = Σ cᵢ (wᵢ − tᵢ)²
        let target = [3.0, -1.5];
        let curv = [1.0, 10.0];
        let (mut s, id) = store_with(&[0.0, 0.0]);
        let opt = Adam::with_lr(0.05);
        let mut steps = 0;
        loop {
            let w = s.get(id).data().to_vec();
            let err = w.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if err < 1e-3 {
                break;
            }
            assert!(steps < 2000, "did not converge, w = {w:?}");
            let g: Vec<f64> = (0..2).map(|i| 2.0 * curv[i] * (w[i] - target[i])).collect();
            opt.step(&mut s, &[Tensor::new(&[2], g)]);
            steps += 1;
        }
    }

    #[test]
    fn polyak_with_unit_tau_copies() {
        let (mut a, id) = store_with(&[1.0, 2.0]);
        let (b, _) = store_with(&[5.0, -7.25]);
        a.polyak_from(&b, 1.0);
        assert_eq!(a.get(id).data(), b.get(id).data());
        let (c, _) = store_with(&[0.0, 0.0]);
        a.polyak_from(&c, 0.5);
        assert_eq!(a.get(id).data(), &[2.5, -3.625]);
    }
}
