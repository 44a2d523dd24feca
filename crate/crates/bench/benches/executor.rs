use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lcws::executor::forkjoin::{fib, ForkJoinPool};
use lcws::executor::{execute_dag, ExecutorConfig};
use lcws_bench::regular;

fn forkjoin(c: &mut Criterion) {
    let mut g = c.benchmark_group("fib_22");
    g.sample_size(20);
    for workers in [1, 2, 4] {
        let pool = ForkJoinPool::new(workers);
        g.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, _| {
            b.iter(|| pool.run(|w| fib(w, 22)).0)
        });
    }
    g.finish();
}

fn dag_execution(c: &mut Criterion) {
    let mut g = c.benchmark_group("execute_regular_16");
    g.sample_size(10);
    let dag = regular(16);
    for workers in [1, 4] {
        g.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| execute_dag(&dag, &ExecutorConfig::new(w)).unwrap().nodes_executed)
        });
    }
    g.finish();
}

criterion_group!(benches, forkjoin, dag_execution);
criterion_main!(benches);
