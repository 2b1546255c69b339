//! Hot kernels on the default rayon pool against a one-thread pool.
//!
//! Build with `--no-default-features` for the fully sequential code path;
//! the `seq`/`par` ids then measure the same code.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;

use uir_core::arch::{Network, NetworkConfig};
use uir_core::nn::{conv2d_backward, conv2d_forward, ConvSpec};
use uir_core::objective::LossWeights;
use uir_core::parallel::is_parallel;
use uir_core::spectral::{fft2d, ComplexTensor};
use uir_core::{Tape, Tensor};

fn image(shape: [usize; 4]) -> Tensor {
    Tensor::from_fn(shape, |[n, c, h, w]| {
        ((n * 7 + c * 13 + h * 3 + w * 5) % 17) as f32 / 17.0
    })
}

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let all = ThreadPoolBuilder::new().build().expect("pool");
    let tag = if is_parallel() { "par" } else { "seq-build" };
    vec![("seq", one), (tag, all)]
}

fn bench_conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv");
    let cases = [
        ("3x3_36ch_64px", ConvSpec::new(36, 36, 3, 3), [1, 36, 64, 64]),
        ("dw31x1_144ch_32px", ConvSpec::depthwise(144, 31, 1), [1, 144, 32, 32]),
        (
            "dw7x7_d3_72ch_64px",
            ConvSpec::depthwise(72, 7, 7).with_dilation(3),
            [1, 72, 64, 64],
        ),
    ];
    for (label, pool) in pools() {
        for (name, spec, shape) in &cases {
            let spec = &spec.without_bias();
            let x = image(*shape);
            let w = image(spec.weight_shape().0);
            let y = conv2d_forward(&x, &w, None, spec).expect("conv");
            group.bench_with_input(BenchmarkId::new(format!("{name}/fwd"), label), &x, |b, x| {
                pool.install(|| b.iter(|| conv2d_forward(black_box(x), &w, None, spec).expect("conv")))
            });
            group.bench_with_input(BenchmarkId::new(format!("{name}/bwd"), label), &x, |b, x| {
                pool.install(|| b.iter(|| conv2d_backward(black_box(x), &w, &y, spec, true)))
            });
        }
    }
    group.finish();
}

fn bench_fft(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft2d");
    for (label, pool) in pools() {
        for hw in [64usize, 60] {
            let x = ComplexTensor::from_real(image([1, 36, hw, hw]));
            group.bench_with_input(BenchmarkId::new(format!("36x{hw}x{hw}"), label), &x, |b, x| {
                pool.install(|| b.iter(|| fft2d(black_box(x))))
            });
        }
    }
    group.finish();
}

fn bench_network(c: &mut Criterion) {
    let mut group = c.benchmark_group("network");
    group.sample_size(10);
    let net = Network::new(&NetworkConfig::default()).expect("net");
    let params = net.init_params(0).expect("params");
    let x = image([1, 3, 64, 64]);
    let w = LossWeights::default();
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new("infer_64px", label), |b| {
            pool.install(|| b.iter(|| net.infer(&params, black_box(&x)).expect("infer")))
        });
        group.bench_function(BenchmarkId::new("train_step_64px", label), |b| {
            pool.install(|| {
                b.iter(|| {
                    let tape = Tape::<f32>::new();
                    let p = params.bind(&tape, true);
                    let xv = tape.constant(x.clone());
                    let y = net.forward(&tape, &p, xv).expect("forward");
                    let loss = tape.composite_loss(y, xv, &w).expect("loss");
                    tape.backward(loss.total).expect("backward")
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_conv, bench_fft, bench_network);
criterion_main!(benches);
