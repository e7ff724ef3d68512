use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deadbeat::dynamics::registry;
use deadbeat::oracle::build_graph;
use deadbeat::simulate::{certify_basin, default_max_steps};
use deadbeat::{compute_layers, synthesize, Execution, Grid, InputSet, ReachOptions};

const STRATEGIES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn double_integrator(cells: usize) -> (deadbeat::SystemModel, Grid, InputSet) {
    let model = registry::builtin("double-integrator").unwrap();
    let grid = Grid::new(model.state_box().to_vec(), vec![cells, cells]).unwrap();
    let inputs = InputSet::uniform(model.input_box().to_vec(), vec![41]).unwrap();
    (model, grid, inputs)
}

fn bench_layers(c: &mut Criterion) {
    let mut group = c.benchmark_group("compute_layers");
    group.sample_size(10);
    for cells in [41, 101] {
        let (model, grid, inputs) = double_integrator(cells);
        for (label, exec) in STRATEGIES {
            let mut opts = ReachOptions::for_grid(&grid);
            opts.execution = exec;
            group.bench_with_input(BenchmarkId::new(label, cells), &opts, |b, opts| {
                b.iter(|| compute_layers(&model, &grid, &inputs, 0.1, opts).unwrap())
            });
            opts.table_budget = 0;
            group.bench_with_input(BenchmarkId::new(format!("{label}-no-table"), cells), &opts, |b, opts| {
                b.iter(|| compute_layers(&model, &grid, &inputs, 0.1, opts).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_synth_and_certify(c: &mut Criterion) {
    let (model, grid, inputs) = double_integrator(101);
    let layers = compute_layers(&model, &grid, &inputs, 0.1, &ReachOptions::for_grid(&grid)).unwrap();
    let table = synthesize(&layers, &model, &grid, &inputs, Execution::Parallel).unwrap();
    let max_steps = default_max_steps(layers.layer_count);

    let mut group = c.benchmark_group("synthesize");
    group.sample_size(10);
    for (label, exec) in STRATEGIES {
        group.bench_function(label, |b| {
            b.iter(|| synthesize(&layers, &model, &grid, &inputs, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("certify_basin");
    group.sample_size(10);
    for (label, exec) in STRATEGIES {
        group.bench_function(label, |b| {
            b.iter(|| certify_basin(&model, &table, &grid, 0.1, max_steps, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let (model, grid, inputs) = double_integrator(41);
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    for (label, exec) in STRATEGIES {
        group.bench_function(label, |b| {
            b.iter(|| build_graph(&model, &grid, &inputs, 0.1, exec).unwrap().min_horizons())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_layers, bench_synth_and_certify, bench_oracle);
criterion_main!(benches);
