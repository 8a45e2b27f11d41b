use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fcfl_core::fusion::{BranchState, CrossFusion};
use fcfl_core::nn::{Init, ParamStore};
use fcfl_core::{FcflModel, ModelConfig, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn conv2d(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::<f32>::randn([8, 16, 32, 32], 1.0, &mut rng);
    let k = Tensor::<f32>::randn([32, 16, 3, 3], 0.1, &mut rng);
    c.bench_function("conv2d 8x16x32x32 k3 forward", |b| {
        b.iter(|| {
            let mut t = Tape::no_grad();
            let (xv, kv) = (t.constant(x.clone()), t.constant(k.clone()));
            black_box(t.conv2d(xv, kv, None, 1, 1).unwrap());
        })
    });
    c.bench_function("conv2d 8x16x32x32 k3 forward+backward", |b| {
        b.iter(|| {
            let mut t = Tape::new();
            let (xv, kv) = (t.param(x.clone()), t.param(k.clone()));
            let y = t.conv2d(xv, kv, None, 1, 1).unwrap();
            let s = t.sum(y);
            t.backward(s).unwrap();
            black_box(t.grad(kv).is_some());
        })
    });
}

/// Cost of one CLS cross-attention as the other branch grows; should scale
/// linearly in the number of patches.
fn cross_attention(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::<f32>::new();
    let cf = CrossFusion::new(&mut Init::new(&mut store, &mut rng), 192, 384, 6).unwrap();
    let own = Tensor::<f32>::randn([4, 17, 192], 1.0, &mut rng);
    let mut group = c.benchmark_group("cross_attention");
    for l in [64usize, 128, 256, 512] {
        let other = Tensor::<f32>::randn([4, 1 + l, 384], 1.0, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(l), &other, |b, other| {
            b.iter(|| {
                let mut t = Tape::no_grad();
                let p = store.bind(&mut t);
                let (ov, xv) = (t.constant(own.clone()), t.constant(other.clone()));
                let a = BranchState {
                    tokens: ov,
                    num_patches: 16,
                    embed_dim: 192,
                };
                let b2 = BranchState {
                    tokens: xv,
                    num_patches: l,
                    embed_dim: 384,
                };
                black_box(cf.forward(&mut t, &p, &a, &b2).unwrap().state.tokens);
            })
        });
    }
    group.finish();
}

fn toy_forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = FcflModel::<f32>::new(ModelConfig::toy()).unwrap();
    let x = Tensor::<f32>::randn([8, 3, 48, 48], 1.0, &mut rng);
    c.bench_function("toy model forward, batch 8", |b| {
        b.iter(|| black_box(model.predict(&x).unwrap()))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = conv2d, cross_attention, toy_forward
}
criterion_main!(benches);
