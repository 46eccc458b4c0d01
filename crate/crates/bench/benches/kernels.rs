use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use mfrnet::degrade::{degrade, DegradeSpec};
use mfrnet::ops::{conv2d, conv2d_backward_input, conv2d_backward_params};
use mfrnet::{ConvParams, Tensor};

fn ramp(shape: [usize; 4]) -> Tensor<f32> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|i| ((i * 7919) % 1000) as f32 / 1000.0 - 0.5).collect()).unwrap()
}

fn params(o: usize, i: usize, k: usize) -> ConvParams<f32> {
    ConvParams::new(ramp([o, i, k, k]).map(|v| v * 0.1), vec![0.01; o]).unwrap()
}

fn conv(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv2d_96x96");
    for (i, o, k) in [(8, 8, 3), (24, 24, 3), (64, 64, 3), (32, 64, 1)] {
        let x = ramp([1, i, 96, 96]);
        let p = params(o, i, k);
        g.throughput(Throughput::Elements((96 * 96 * i * o * k * k) as u64));
        let id = format!("{i}->{o} k{k}");
        g.bench_with_input(BenchmarkId::new("forward", &id), &(), |b, _| b.iter(|| conv2d(&x, &p).unwrap()));
        let y = conv2d(&x, &p).unwrap();
        g.bench_with_input(BenchmarkId::new("backward_input", &id), &(), |b, _| {
            b.iter(|| conv2d_backward_input(&y, &p).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("backward_params", &id), &(), |b, _| {
            b.iter(|| conv2d_backward_params(&x, &y, &p).unwrap())
        });
    }
    g.finish();
}

fn dct_degradation(c: &mut Criterion) {
    let x = ramp([1, 3, 96, 96]).map(|v| v + 0.5);
    let spec = DegradeSpec::new(16.0).unwrap();
    c.bench_function("degrade_96x96x3", |b| b.iter(|| degrade(&x, &spec).unwrap()));
}

criterion_group!(benches, conv, dct_degradation);
criterion_main!(benches);
