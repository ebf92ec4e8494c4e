use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect())
}

/// Values bounded away from zero, for kinked ops.
fn rand_away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.5);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data)
}

/// Largest relative error between analytic and central-difference gradients
/// of `Σ R ⊙ f(inputs)` for a random projection `R`.
fn grad_check(inputs: Vec<Tensor>, f: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let out_shape = {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let y = f(&mut g, &vars);
        g.shape(y).to_vec()
    };
    let proj = rand_tensor(&mut rng, &out_shape, -1.0, 1.0);
    let loss_of = |xs: &[Tensor], track: bool| -> (f64, Option<Vec<Tensor>>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs
            .iter()
            .map(|t| if track { g.leaf(t.clone()) } else { g.input(t.clone()) })
            .collect();
        let y = f(&mut g, &vars);
        let r = g.input(proj.clone());
        let p = g.mul(y, r);
        let l = g.sum(p);
        let value = g.value(l).item();
        if !track {
            return (value, None);
        }
        let grads = g.backward(l);
        let gs = vars
            .iter()
            .zip(xs)
            .map(|(&v, t)| grads.get(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        (value, Some(gs))
    };
    let (_, analytic) = loss_of(&inputs, true);
    let analytic = analytic.unwrap();
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += H;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= H;
            let numeric = (loss_of(&plus, false).0 - loss_of(&minus, false).0) / (2.0 * H);
            let a = analytic[i].data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    worst
}

const GRAD_TOL: f64 = 1e-4;

macro_rules! assert_grad {
    ($inputs:expr, $f:expr) => {{
        let err = grad_check($inputs, $f);
        assert!(err <= GRAD_TOL, "max relative gradient error {err:e}");
    }};
}

#[test]
fn grad_matmul_rank2_and_rank3() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&mut rng, &[3, 4], -1.0, 1.0);
    let w = rand_tensor(&mut rng, &[4, 5], -1.0, 1.0);
    assert_grad!(vec![a, w.clone()], |g, v| g.matmul(v[0], v[1]));
    let a3 = rand_tensor(&mut rng, &[2, 3, 4], -1.0, 1.0);
    assert_grad!(vec![a3, w], |g, v| g.matmul(v[0], v[1]));
}

#[test]
fn grad_bmm_and_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_tensor(&mut rng, &[2, 3, 4], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[2, 4, 2], -1.0, 1.0);
    assert_grad!(vec![a.clone(), b], |g, v| g.bmm(v[0], v[1]));
    assert_grad!(vec![a], |g, v| g.transpose(v[0]));
    let m = rand_tensor(&mut rng, &[3, 5], -1.0, 1.0);
    assert_grad!(vec![m], |g, v| g.transpose(v[0]));
}

#[test]
fn grad_elementwise_binary() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = rand_tensor(&mut rng, &[3, 4], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[3, 4], -1.0, 1.0);
    assert_grad!(vec![a.clone(), b.clone()], |g, v| g.add(v[0], v[1]));
    assert_grad!(vec![a.clone(), b.clone()], |g, v| g.sub(v[0], v[1]));
    assert_grad!(vec![a.clone(), b.clone()], |g, v| g.mul(v[0], v[1]));
    // keep the pair well separated so the min is not at a tie
    let c = a.map(|x| x + 0.5);
    let d = Tensor::new(
        a.shape(),
        a.data().iter().enumerate().map(|(i, x)| if i % 2 == 0 { x + 1.0 } else { x - 1.0 }).collect(),
    );
    assert_grad!(vec![c, d], |g, v| g.minimum(v[0], v[1]));
}

#[test]
fn grad_row_broadcasts() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = rand_tensor(&mut rng, &[2, 3, 4], -1.0, 1.0);
    let r = rand_tensor(&mut rng, &[4], -1.0, 1.0);
    assert_grad!(vec![a.clone(), r.clone()], |g, v| g.add_row(v[0], v[1]));
    assert_grad!(vec![a, r], |g, v| g.mul_row(v[0], v[1]));
}

#[test]
fn grad_unary() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = rand_tensor(&mut rng, &[3, 4], -2.0, 2.0);
    assert_grad!(vec![a.clone()], |g, v| g.scale(v[0], -1.7));
    assert_grad!(vec![a.clone()], |g, v| g.add_scalar(v[0], 0.3));
    assert_grad!(vec![a.clone()], |g, v| g.tanh(v[0]));
    assert_grad!(vec![a.clone()], |g, v| g.exp(v[0]));
    assert_grad!(vec![a.clone()], |g, v| g.softplus(v[0]));
    assert_grad!(vec![a.clone()], |g, v| g.square(v[0]));
    assert_grad!(vec![a.clone()], |g, v| g.reshape(v[0], &[2, 6]));
    let k = rand_away_from_zero(&mut rng, &[3, 4]);
    assert_grad!(vec![k.clone()], |g, v| g.relu(v[0]));
    // bounds sit in the gaps of rand_away_from_zero
    assert_grad!(vec![k], |g, v| g.clamp(v[0], -0.05, 0.05));
    assert_grad!(vec![a], |g, v| g.clamp(v[0], -5.0, 5.0));
}

#[test]
fn grad_row_normalizers() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = rand_tensor(&mut rng, &[2, 3, 5], -2.0, 2.0);
    assert_grad!(vec![a.clone()], |g, v| g.softmax(v[0]));
    assert_grad!(vec![a], |g, v| g.layer_norm(v[0]));
}

#[test]
fn grad_shape_ops_and_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = rand_tensor(&mut rng, &[2, 3, 4], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[2, 1, 4], -1.0, 1.0);
    let c = rand_tensor(&mut rng, &[2, 3, 2], -1.0, 1.0);
    let d = rand_tensor(&mut rng, &[1, 3, 4], -1.0, 1.0);
    assert_grad!(vec![a.clone(), b], |g, v| g.concat(&[v[0], v[1]], 1));
    assert_grad!(vec![a.clone(), c], |g, v| g.concat(&[v[0], v[1]], 2));
    assert_grad!(vec![a.clone(), d], |g, v| g.concat(&[v[0], v[1]], 0));
    assert_grad!(vec![a.clone()], |g, v| g.slice_last(v[0], 1, 2));
    assert_grad!(vec![a.clone()], |g, v| g.mean_axis1(v[0]));
    assert_grad!(vec![a.clone()], |g, v| g.sum(v[0]));
    assert_grad!(vec![a], |g, v| g.mean(v[0]));
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut g = Graph::new();
    let a = g.input(rand_tensor(&mut rng, &[4, 7], -30.0, 30.0));
    let s = g.softmax(a);
    for row in g.value(s).data().chunks(7) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(row.iter().all(|&p| p >= 0.0));
    }
}

#[test]
fn layer_norm_rows_standardized() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut g = Graph::new();
    let a = g.input(rand_tensor(&mut rng, &[5, 16], -3.0, 4.0));
    let n = g.layer_norm(a);
    for row in g.value(n).data().chunks(16) {
        let mean = row.iter().sum::<f64>() / 16.0;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 16.0;
        assert!(mean.abs() <= 1e-9, "mean {mean}");
        assert!((var - 1.0).abs() <= 1e-9, "var {var}");
    }
}

#[test]
fn matmul_with_identity_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let a = rand_tensor(&mut rng, &[3, 5], -1.0, 1.0);
    let mut g = Graph::new();
    let av = g.input(a.clone());
    let i = g.input(Tensor::identity(5));
    let p = g.matmul(av, i);
    assert_eq!(g.value(p), &a);
}

#[test]
fn backward_basic_identities() {
    let x = Tensor::new(&[4], vec![1.0, -2.0, 0.5, 3.0]);
    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let l = g.sum(xv);
    let grads = g.backward(l);
    assert_eq!(grads.get(xv).unwrap().data(), &[1.0; 4]);
    assert_eq!(grads.get(l).unwrap().data(), &[1.0]);

    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let sq = g.mul(xv, xv);
    let l = g.sum(sq);
    let grads = g.backward(l);
    let expected: Vec<f64> = x.data().iter().map(|v| 2.0 * v).collect();
    assert_eq!(grads.get(xv).unwrap().data(), expected.as_slice());
}

#[test]
#[should_panic(expected = "[3, 4] x [5, 2]")]
fn shape_mismatch_reports_both_shapes() {
    let mut g = Graph::new();
    let a = g.input(Tensor::zeros(&[3, 4]));
    let b = g.input(Tensor::zeros(&[5, 2]));
    g.matmul(a, b);
}

/// Element-wise evaluation of `softmax(Q·Kᵀ/√d_k)·V` for one batch entry.
fn attention_oracle(q: &[f64], k: &[f64], v: &[f64], t: usize, dk: usize, dv: usize) -> Vec<f64> {
    let mut out = vec![0.0; t * dv];
    for i in 0..t {
        let mut scores = vec![0.0; t];
        for j in 0..t {
            let mut s = 0.0;
            for d in 0..dk {
                s += q[i * dk + d] * k[j * dk + d];
            }
            scores[j] = s / (dk as f64).sqrt();
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        for j in 0..t {
            let w = (scores[j] - max).exp() / z;
            for d in 0..dv {
                out[i * dv + d] += w * v[j * dv + d];
            }
        }
    }
    out
}

#[test]
fn attention_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let q = rand_tensor(&mut rng, &[1, 3, 4], -2.0, 2.0);
        let k = rand_tensor(&mut rng, &[1, 3, 4], -2.0, 2.0);
        let v = rand_tensor(&mut rng, &[1, 3, 4], -2.0, 2.0);
        let mut g = Graph::new();
        let (qv, kv, vv) = (g.input(q.clone()), g.input(k.clone()), g.input(v.clone()));
        let out = attention(&mut g, qv, kv, vv);
        let expected = attention_oracle(q.data(), k.data(), v.data(), 3, 4, 4);
        for (a, b) in g.value(out).data().iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn attention_single_token_returns_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let v = rand_tensor(&mut rng, &[2, 1, 3], -1.0, 1.0);
    let mut g = Graph::new();
    let q = g.input(rand_tensor(&mut rng, &[2, 1, 3], -1.0, 1.0));
    let k = g.input(rand_tensor(&mut rng, &[2, 1, 3], -1.0, 1.0));
    let vv = g.input(v.clone());
    let out = attention(&mut g, q, k, vv);
    assert_eq!(g.value(out), &v);
}

#[test]
fn attention_identical_keys_average_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let key_row = [0.3, -1.2, 0.7];
    let k = Tensor::new(&[1, 4, 3], key_row.repeat(4));
    let v = rand_tensor(&mut rng, &[1, 4, 2], -1.0, 1.0);
    let col_mean: Vec<f64> = (0..2)
        .map(|c| (0..4).map(|r| v.data()[r * 2 + c]).sum::<f64>() / 4.0)
        .collect();
    let mut g = Graph::new();
    let q = g.input(rand_tensor(&mut rng, &[1, 4, 3], -1.0, 1.0));
    let kv = g.input(k);
    let vv = g.input(v);
    let out = attention(&mut g, q, kv, vv);
    for row in g.value(out).data().chunks(2) {
        assert!((row[0] - col_mean[0]).abs() < 1e-12);
        assert!((row[1] - col_mean[1]).abs() < 1e-12);
    }
}

#[test]
fn grad_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let q = rand_tensor(&mut rng, &[2, 3, 4], -1.0, 1.0);
    let k = rand_tensor(&mut rng, &[2, 3, 4], -1.0, 1.0);
    let v = rand_tensor(&mut rng, &[2, 3, 4], -1.0, 1.0);
    assert_grad!(vec![q, k, v], |g, x| attention(g, x[0], x[1], x[2]));
}

fn small_encoder(layers: usize, heads: usize) -> (ParamStore, TransformerEncoder) {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut store = ParamStore::new();
    let cfg = EncoderConfig {
        d_model: 8,
        heads,
        layers,
        mlp_ratio: 2,
        activation: Activation::Tanh,
    };
    let enc = TransformerEncoder::new(&mut store, "enc", cfg, &mut rng);
    // non-trivial norm affines so their gradients are exercised
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        if name.contains("gamma") || name.contains("beta") {
            let id = store.id(&name).unwrap();
            for x in store.get_mut(id).data_mut() {
                *x += rng.gen_range(-0.3..0.3);
            }
        }
    }
    (store, enc)
}

#[test]
fn grad_full_encoder_layer() {
    let (store, enc) = small_encoder(1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let x = rand_tensor(&mut rng, &[2, 3, 8], -1.0, 1.0);
    let mut inputs = vec![x];
    inputs.extend(store.iter().map(|(_, t)| t.clone()));
    let err = grad_check(inputs, |g, v| {
        // parameters arrive as graph leaves in store order
        let bound = Bound::from_vars(v[1..].to_vec());
        enc.layers[0].forward(g, &bound, v[0])
    });
    assert!(err <= GRAD_TOL, "encoder layer gradient error {err:e}");
}

#[test]
fn zero_output_projections_give_identity_layer() {
    let (mut store, enc) = small_encoder(1, 2);
    enc.layers[0].zero_output_projections(&mut store);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = rand_tensor(&mut rng, &[2, 3, 8], -1.0, 1.0);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let xv = g.input(x.clone());
    let y = enc.layers[0].forward(&mut g, &p, xv);
    assert_eq!(g.value(y), &x);
}

#[test]
fn one_head_attention_block_matches_plain_attention() {
    let (store, enc) = small_encoder(1, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let x = rand_tensor(&mut rng, &[1, 3, 8], -1.0, 1.0);
    let oracle = encoder_oracle(&store, "enc", 1, 1, x.data(), 3, 8);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let xv = g.input(x);
    let y = enc.forward(&mut g, &p, xv);
    for (a, b) in g.value(y).data().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn two_layer_stack_matches_hand_traced_forward() {
    let (store, enc) = small_encoder(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let x = rand_tensor(&mut rng, &[1, 3, 8], -1.0, 1.0);
    let oracle = encoder_oracle(&store, "enc", 2, 2, x.data(), 3, 8);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let xv = g.input(x);
    let y = enc.forward(&mut g, &p, xv);
    for (a, b) in g.value(y).data().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

// ---- scalar-loop encoder oracle -------------------------------------------

fn param<'a>(store: &'a ParamStore, name: &str) -> &'a [f64] {
    store.get(store.id(name).unwrap_or_else(|| panic!("no param {name}"))).data()
}

fn ln_rows(x: &[Vec<f64>], gamma: &[f64], beta: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = (var + 1e-10).sqrt();
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / sd * gamma[j] + beta[j])
                .collect()
        })
        .collect()
}

fn affine(x: &[Vec<f64>], w: &[f64], b: &[f64], n_out: usize) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            (0..n_out)
                .map(|o| b[o] + row.iter().enumerate().map(|(i, v)| v * w[i * n_out + o]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn encoder_oracle(
    store: &ParamStore,
    name: &str,
    layers: usize,
    heads: usize,
    x: &[f64],
    t: usize,
    d: usize,
) -> Vec<f64> {
    let mut z: Vec<Vec<f64>> = x.chunks(d).map(|r| r.to_vec()).collect();
    assert_eq!(z.len(), t);
    let dk = d / heads;
    for l in 0..layers {
        let p = |s: &str| param(store, &format!("{name}.layer{l}.{s}"));
        let n1 = ln_rows(&z, p("ln_attn.gamma"), p("ln_attn.beta"));
        let q = affine(&n1, p("wq.weight"), p("wq.bias"), d);
        let k = affine(&n1, p("wk.weight"), p("wk.bias"), d);
        let v = affine(&n1, p("wv.weight"), p("wv.bias"), d);
        let mut joined = vec![vec![0.0; d]; t];
        for h in 0..heads {
            let take = |m: &Vec<Vec<f64>>| -> Vec<f64> {
                m.iter().flat_map(|r| r[h * dk..(h + 1) * dk].to_vec()).collect()
            };
            let o = attention_oracle(&take(&q), &take(&k), &take(&v), t, dk, dk);
            for i in 0..t {
                joined[i][h * dk..(h + 1) * dk].copy_from_slice(&o[i * dk..(i + 1) * dk]);
            }
        }
        let attn = affine(&joined, p("wo.weight"), p("wo.bias"), d);
        let z1: Vec<Vec<f64>> = z
            .iter()
            .zip(&attn)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        let n2 = ln_rows(&z1, p("ln_mlp.gamma"), p("ln_mlp.beta"));
        let hidden = p("mlp.0.bias").len();
        let h1: Vec<Vec<f64>> = affine(&n2, p("mlp.0.weight"), p("mlp.0.bias"), hidden)
            .into_iter()
            .map(|r| r.into_iter().map(f64::tanh).collect())
            .collect();
        let m = affine(&h1, p("mlp.1.weight"), p("mlp.1.bias"), d);
        z = z1
            .iter()
            .zip(&m)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
    }
    let y = ln_rows(
        &z,
        param(store, &format!("{name}.ln_final.gamma")),
        param(store, &format!("{name}.ln_final.beta")),
    );
    y.concat()
}

#[test]
fn forward_is_deterministic() {
    let (store, enc) = small_encoder(2, 2);
    let x = Tensor::full(&[1, 3, 8], 0.25);
    let run = || {
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let xv = g.input(x.clone());
        let y = enc.forward(&mut g, &p, xv);
        g.value(y).clone()
    };
    assert_eq!(run(), run());
}
