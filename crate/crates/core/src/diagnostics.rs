//! The float64 gradient-check suite over every differentiable building
//! block, from single ops up to the autoencoder, fusion layer and head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fusion::{BranchState, CrossFusion, MultiHeadAttention};
use crate::gradcheck::{grad_check_many, GradCheckOptions, GradCheckResult};
use crate::head::{cross_entropy, Head, HeadConfig, HeadKind};
use crate::nn::{Bound, Init, ParamStore};
use crate::nrca::{Nrca, NrcaConfig};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Op names covered by [`gradient_suite`], in run order.
pub const SUITE_OPS: [&str; 12] = [
    "matmul",
    "conv2d",
    "conv_transpose2d",
    "max_pool2d",
    "layer_norm",
    "softmax",
    "gelu",
    "attention",
    "cross_fuse",
    "nrca",
    "head",
    "cross_entropy",
];

/// `Σ w·(y − y₀)`. Every output carries an O(1) weight, and subtracting the
/// unperturbed output keeps constant offsets out of the rounding error.
fn weighted_sum(tape: &mut Tape<f64>, y: Var, reduction: &Reduction) -> Result<Var> {
    let y0 = tape.constant(reduction.baseline.clone());
    let w = tape.constant(reduction.weights.clone());
    let d = tape.sub(y, y0)?;
    let prod = tape.mul(d, w)?;
    Ok(tape.sum(prod))
}

struct Reduction {
    weights: Tensor<f64>,
    baseline: Tensor<f64>,
}

fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::randn(shape.to_vec(), 1.0, rng)
}

/// Reduction weights and baseline for a function, from a dry run.
fn reduction<F>(f: &F, xs: &[Tensor<f64>], rng: &mut ChaCha8Rng) -> Result<Reduction>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::no_grad();
    let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
    let y = f(&mut tape, &vars)?;
    let baseline = tape.value(y).clone();
    // magnitudes in [0.5, 1.5] so no output is nearly ignored
    let weights = baseline.map(|_| {
        let m = rng.random_range(0.5..1.5);
        if rng.random() {
            m
        } else {
            -m
        }
    });
    Ok(Reduction { weights, baseline })
}

fn check<F>(
    name: String,
    f: F,
    xs: Vec<Tensor<f64>>,
    rng: &mut ChaCha8Rng,
    opts: GradCheckOptions,
) -> Result<GradCheckResult>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let red = reduction(&f, &xs, rng)?;
    grad_check_many(
        &name,
        |tape: &mut Tape<f64>, vs: &[Var]| {
            let y = f(tape, vs)?;
            weighted_sum(tape, y, &red)
        },
        &xs,
        opts,
    )
}

fn params_of(store: &ParamStore<f64>) -> Vec<Tensor<f64>> {
    store.tensors().to_vec()
}

/// Max-pool inputs whose window entries are separated by at least `gap`, so
/// finite-difference probes never change which entry is the maximum.
fn separated(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * gap).collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(shape.to_vec(), vals).expect("sized above")
}

/// Runs `cases` randomly shaped checks per op in [`SUITE_OPS`].
pub fn gradient_suite(seed: u64, cases: usize, opts: GradCheckOptions) -> Result<Vec<GradCheckResult>> {
    let mut out = Vec::new();
    for (op_idx, &op) in SUITE_OPS.iter().enumerate() {
        for case in 0..cases {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((op_idx as u64) << 16) | case as u64);
            out.push(run_case(op, case, &mut rng, opts)?);
        }
    }
    Ok(out)
}

fn run_case(op: &str, case: usize, rng: &mut ChaCha8Rng, opts: GradCheckOptions) -> Result<GradCheckResult> {
    let r = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| rng.random_range(lo..=hi);
    match op {
        "matmul" => {
            let (m, k, n) = (r(rng, 1, 5), r(rng, 1, 5), r(rng, 1, 5));
            let xs = vec![randn(&[m, k], rng), randn(&[k, n], rng)];
            check(
                format!("matmul[{m}x{k}·{k}x{n}]"),
                |t, v| t.matmul(v[0], v[1]),
                xs,
                rng,
                opts,
            )
        }
        "conv2d" => {
            let (b, ci, co, kk) = (r(rng, 1, 2), r(rng, 1, 3), r(rng, 1, 3), r(rng, 1, 3));
            let (stride, pad) = (r(rng, 1, 2), r(rng, 0, 1));
            let (h, w) = (r(rng, kk, 6), r(rng, kk, 6));
            let xs = vec![
                randn(&[b, ci, h, w], rng),
                randn(&[co, ci, kk, kk], rng),
                randn(&[co], rng),
            ];
            let name = format!("conv2d[x={:?} k={kk} s={stride} p={pad}]", [b, ci, h, w]);
            check(
                name,
                move |t, v| t.conv2d(v[0], v[1], Some(v[2]), stride, pad),
                xs,
                rng,
                opts,
            )
        }
        "conv_transpose2d" => {
            let (b, ci, co, kk) = (r(rng, 1, 2), r(rng, 1, 3), r(rng, 1, 3), r(rng, 1, 3));
            let stride = r(rng, 1, 2);
            let pad = if kk > 1 { r(rng, 0, 1) } else { 0 };
            let (h, w) = (r(rng, 2, 5), r(rng, 2, 5));
            let xs = vec![
                randn(&[b, ci, h, w], rng),
                randn(&[ci, co, kk, kk], rng),
                randn(&[co], rng),
            ];
            let name = format!("conv_transpose2d[x={:?} k={kk} s={stride} p={pad}]", [b, ci, h, w]);
            check(
                name,
                move |t, v| t.conv_transpose2d(v[0], v[1], Some(v[2]), stride, pad),
                xs,
                rng,
                opts,
            )
        }
        "max_pool2d" => {
            let (b, c, win) = (r(rng, 1, 2), r(rng, 1, 3), r(rng, 1, 3));
            let stride = r(rng, 1, win);
            let (h, w) = (r(rng, win, 7), r(rng, win, 7));
            let xs = vec![separated(&[b, c, h, w], 0.01, rng)];
            let name = format!("max_pool2d[x={:?} win={win} s={stride}]", [b, c, h, w]);
            check(name, move |t, v| t.max_pool2d(v[0], win, stride), xs, rng, opts)
        }
        "layer_norm" => {
            // width 2 normalizes every row to ±1, which has no gradient
            let (rows, n) = (r(rng, 1, 4), r(rng, 3, 7));
            let xs = vec![randn(&[rows, n], rng), randn(&[n], rng), randn(&[n], rng)];
            check(
                format!("layer_norm[{rows}x{n}]"),
                |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5),
                xs,
                rng,
                opts,
            )
        }
        "softmax" => {
            let (a, n) = (r(rng, 1, 4), r(rng, 2, 6));
            let xs = vec![randn(&[a, 2, n], rng)];
            check(format!("softmax[{a}x2x{n}]"), |t, v| Ok(t.softmax(v[0])), xs, rng, opts)
        }
        "gelu" => {
            let n = r(rng, 3, 12);
            // inside [-3, 3] and off the derivative's zero near -0.7518
            let xs = vec![Tensor::new(
                vec![n],
                (0..n)
                    .map(|_| loop {
                        let v: f64 = rng.random_range(-3.0..3.0);
                        if (v + 0.7518).abs() > 0.1 {
                            break v;
                        }
                    })
                    .collect(),
            )?];
            check(format!("gelu[{n}]"), |t, v| Ok(t.gelu(v[0])), xs, rng, opts)
        }
        "attention" => {
            let heads = r(rng, 1, 3);
            let dim = heads * r(rng, 1, 3);
            let (b, l) = (r(rng, 1, 2), r(rng, 1, 5));
            let mut store = ParamStore::new();
            let mha = MultiHeadAttention::new(&mut Init::new(&mut store, rng), dim, heads)?;
            let mut xs = vec![randn(&[b, l, dim], rng)];
            xs.extend(params_of(&store));
            let name = format!("attention[B={b} L={l} C={dim} h={heads}]");
            check(
                name,
                move |t, v| Ok(mha.forward(t, &Bound::from_vars(v[1..].to_vec()), v[0])?.0),
                xs,
                rng,
                opts,
            )
        }
        "cross_fuse" => {
            let heads = r(rng, 1, 2);
            let (own, other) = (r(rng, 2, 5), heads * r(rng, 1, 3));
            let (b, lo, lx) = (r(rng, 1, 2), r(rng, 1, 3), r(rng, 1, 4));
            let mut store = ParamStore::new();
            let cf = CrossFusion::new(&mut Init::new(&mut store, rng), own, other, heads)?;
            let mut xs = vec![randn(&[b, 1 + lo, own], rng), randn(&[b, 1 + lx, other], rng)];
            xs.extend(params_of(&store));
            let name = format!("cross_fuse[B={b} own={own}x{lo} other={other}x{lx} h={heads}]");
            let f = move |t: &mut Tape<f64>, v: &[Var]| {
                let own_s = BranchState {
                    tokens: v[0],
                    num_patches: lo,
                    embed_dim: own,
                };
                let other_s = BranchState {
                    tokens: v[1],
                    num_patches: lx,
                    embed_dim: other,
                };
                Ok(cf
                    .forward(t, &Bound::from_vars(v[2..].to_vec()), &own_s, &other_s)?
                    .state
                    .tokens)
            };
            check(name, f, xs, rng, opts)
        }
        "nrca" => {
            let cfg = NrcaConfig {
                enabled: true,
                encoder_channels: (0..r(rng, 1, 2)).map(|_| r(rng, 1, 3)).collect(),
                kernel_size: 3,
                pool_window: 2,
                latent_channels: r(rng, 1, 3),
            };
            let c = r(rng, 1, 2);
            let side = cfg.required_divisor() * r(rng, 1, 2);
            let mut store = ParamStore::new();
            let nrca = Nrca::new(&mut Init::new(&mut store, rng), &cfg, c)?;
            let mut xs = vec![randn(&[1, c, side, side], rng)];
            xs.extend(params_of(&store));
            let name = format!(
                "nrca[x={:?} enc={:?} latent={} case {case}]",
                [1, c, side, side],
                cfg.encoder_channels,
                cfg.latent_channels
            );
            check(
                name,
                move |t, v| nrca.forward(t, &Bound::from_vars(v[1..].to_vec()), v[0]),
                xs,
                rng,
                opts,
            )
        }
        "head" => {
            let kind = if case.is_multiple_of(2) {
                HeadKind::Residual
            } else {
                HeadKind::Mlp
            };
            let (cs, cl, b) = (r(rng, 2, 4), r(rng, 1, 4), r(rng, 1, 3));
            let cfg = HeadConfig {
                kind,
                hidden_dim: if rng.random() { Some(r(rng, 3, 5)) } else { None },
                num_classes: r(rng, 2, 4),
            };
            let mut store = ParamStore::new();
            let head = Head::new(&mut Init::new(&mut store, rng), &cfg, cs, cl)?;
            let mut xs = vec![randn(&[b, 1, cs], rng), randn(&[b, 1, cl], rng)];
            // the classifier starts at zero; give it random weights here
            xs.extend(params_of(&store).iter().map(|p| randn(p.shape(), rng).map(|v| 0.5 * v)));
            let name = format!(
                "head[{kind:?} B={b} C={cs}+{cl} hidden={:?} k={}]",
                cfg.hidden_dim, cfg.num_classes
            );
            check(
                name,
                move |t, v| head.forward(t, &Bound::from_vars(v[2..].to_vec()), v[0], v[1]),
                xs,
                rng,
                opts,
            )
        }
        "cross_entropy" => {
            let (b, k) = (r(rng, 1, 6), r(rng, 2, 5));
            let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
            let xs = vec![randn(&[b, k], rng)];
            let name = format!("cross_entropy[B={b} k={k}]");
            grad_check_many(&name, move |t, v| Ok(cross_entropy(t, v[0], &labels)?.loss), &xs, opts)
        }
        other => Err(crate::Error::Config(format!("no gradient check for `{other}`"))),
    }
}
