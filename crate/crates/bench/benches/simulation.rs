use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use symreg_bench::lorenz_expr;
use symreg_core::lorenz::{objectives, Channel, SimSetup};

fn lorenz(c: &mut Criterion) {
    let expr = lorenz_expr("Sub z Mul k x");
    let constants = [("k".to_string(), 27.84)].into();
    let mut group = c.benchmark_group("lorenz_objectives");
    group.sample_size(30);
    for n in [500, 5000] {
        let setup = SimSetup {
            n,
            ..SimSetup::with_channel(Channel::Y)
        };
        group.bench_function(format!("n={n}"), |b| {
            b.iter(|| black_box(objectives(&expr, &constants, &setup).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, lorenz);
criterion_main!(benches);
