use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ndarray::Array3;
use purikit::attack::{attack, AttackConfig, Norm};
use purikit::cluster::{kmeans, LatentVector};
use purikit::net::{input_gradient, loss_and_grads, NetworkParams};
use purikit::signal::{tikhonov_split, TikhonovConfig};
use purikit::sparse::{cbpdn, AdmmConfig, Dictionary};
use purikit::tensorio::generate_synthetic_dataset;

fn tikhonov(c: &mut Criterion) {
    let x = Array3::from_shape_fn((32, 32, 3), |(i, j, k)| ((i * 7 + j * 3 + k) % 11) as f64 / 10.0);
    let cfg = TikhonovConfig::default();
    c.bench_function("tikhonov_split 32x32x3", |b| {
        b.iter(|| tikhonov_split(black_box(x.view()), &cfg).unwrap())
    });
}

fn sparse_coding(c: &mut Criterion) {
    let dict = Dictionary::random(8, 5, 1, 1).unwrap();
    let x = Array3::from_shape_fn((16, 16, 1), |(i, j, _)| ((i * j) % 5) as f64 / 20.0 - 0.1);
    let admm = AdmmConfig {
        max_iters: 100,
        ..AdmmConfig::for_lambda(0.05)
    };
    c.bench_function("cbpdn 16x16 8 atoms 100 iters", |b| {
        b.iter(|| cbpdn(&dict, black_box(x.view()), 0.05, &admm).unwrap())
    });
}

fn network(c: &mut Criterion) {
    let data = generate_synthetic_dataset(4, 4, 12, 0.05, 1).unwrap();
    let params = NetworkParams::init(1, 12, 12, 4, &mut rand_seeded()).unwrap();
    let views: Vec<_> = data.images().iter().map(|x| x.view()).collect();
    c.bench_function("forward 12x12", |b| {
        b.iter(|| params.forward(black_box(views[0])).unwrap())
    });
    c.bench_function("loss_and_grads batch 16", |b| {
        b.iter(|| loss_and_grads(&params, black_box(&views), data.labels(), 1e-4, None).unwrap())
    });
    c.bench_function("input_gradient 12x12", |b| {
        b.iter(|| input_gradient(&params, black_box(views[0]), 0).unwrap())
    });
    let pgd = AttackConfig::pgd(Norm::L2, 0.3, 10, 0);
    c.bench_function("pgd 10 steps 12x12", |b| {
        b.iter(|| attack(&params, black_box(views[0]), 0, &pgd).unwrap())
    });
}

fn clustering(c: &mut Criterion) {
    let points: Vec<LatentVector> = (0..300)
        .map(|i| LatentVector::new((0..16).map(|d| ((i * 31 + d * 17) % 97) as f64 / 97.0).collect()))
        .collect();
    c.bench_function("kmeans 300x16 psi=4", |b| b.iter(|| kmeans(black_box(&points), 4, 0).unwrap()));
}

fn rand_seeded() -> impl rand::Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(0)
}

criterion_group!(benches, tikhonov, sparse_coding, network, clustering);
criterion_main!(benches);
