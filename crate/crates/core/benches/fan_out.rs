use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stochplan::exec::Executor;
use stochplan::instance::generate_synthetic;
use stochplan::layout::{CapacityPoint, Layout};
use stochplan::subproblem::evaluate;

/// One round of subproblem solves at a fixed point, as in a Benders
/// iteration, on the sequential path and on the worker pool.
fn fan_out(c: &mut Criterion) {
    let inst = generate_synthetic(11, 4, 4, 1, 48, 2).unwrap();
    let layout = Layout::new(&inst);
    let mut point = CapacityPoint::zeros(&layout);
    point.capacity.iter_mut().for_each(|x| *x = 50.0);
    let jobs: Vec<(usize, usize)> = (0..layout.n_years)
        .flat_map(|y| (0..layout.n_scenarios).map(move |s| (y, s)))
        .collect();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());

    let mut group = c.benchmark_group("subproblem_fan_out");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Executor::sequential()),
        ("parallel", Executor::new(cores.max(2)).unwrap()),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| {
                let out = exec.map(&jobs, |&(y, s)| {
                    evaluate(&inst, &layout, y, s, point.year_capacity(&layout, y), 1e-6)
                        .unwrap()
                        .value
                });
                black_box(out)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, fan_out);
criterion_main!(benches);
