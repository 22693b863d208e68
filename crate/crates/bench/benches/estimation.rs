use activeid::estimation::{batch_init_narx, reconstruct, EkfState, ReconstructOptions};
use activeid::models::{RnnShape, RnnSs};
use activeid::rng::{stream, Stream};
use activeid::{DVector, EkfHyper, NarxNet, NarxPredictor, StateSpaceModel};
use activeid_bench::{signal, NarxFixture, SsFixture};
use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

fn ekf_narx(c: &mut Criterion) {
    let mut g = c.benchmark_group("ekf_update_narx");
    for (n1, n2) in [(8usize, 6usize), (16, 10)] {
        let mut net = NarxNet::init(6, n1, n2, 1, &mut stream(0, Stream::InitWeights));
        let h = EkfHyper::narx(net.n_theta(), 1, 1e-2, 1e-10, 1e-2);
        let mut est = EkfState::for_model(&net, &h).unwrap();
        let x: Vec<f64> = (0..6).map(signal).collect();
        let mut t = 0usize;
        g.bench_function(BenchmarkId::from_parameter(format!("{n1}x{n2}")), |b| {
            b.iter(|| {
                t += 1;
                est.update_narx(&mut net, &h, &x, &[signal(t)]).unwrap()
            })
        });
    }
    g.finish();
}

fn batch_init(c: &mut Criterion) {
    let f = NarxFixture::new(80, 41, false);
    let mut g = c.benchmark_group("batch_init_narx");
    g.sample_size(20);
    g.bench_function("80 samples, 10 epochs", |b| {
        b.iter_batched(|| f.model.clone(), |mut m| batch_init_narx(&mut m, &f.ds, &f.hyper, 10).unwrap(), BatchSize::SmallInput)
    });
    g.finish();
}

fn joint_update(c: &mut Criterion) {
    let shape = RnnShape { n_x: 4, n_u: 1, n_y: 1, n1x: 8, n2x: 6, n1y: 5 };
    let mut model = RnnSs::init(shape, &mut stream(0, Stream::InitWeights));
    let h = EkfHyper::joint(4, model.n_theta(), 1, 2.0, 2.0, 1e-10, 1e-10, 1.0);
    let mut est = EkfState::joint(&model, DVector::zeros(4), &h).unwrap();
    let mut t = 0usize;
    c.bench_function("ekf_update_joint", |b| {
        b.iter(|| {
            t += 1;
            est.update_joint(&mut model, &h, &[signal(3 * t)], &[0.1 * signal(t)]).unwrap()
        })
    });
}

fn smoothing(c: &mut Criterion) {
    let mut g = c.benchmark_group("reconstruct");
    g.sample_size(10);
    for k in [100usize, 400] {
        let f = SsFixture::new(k, 41);
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| reconstruct(&f.model, &f.inputs, &f.outputs, &f.hyper, &DVector::zeros(2), &ReconstructOptions::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, ekf_narx, batch_init, joint_update, smoothing);
criterion_main!(benches);
