use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mpisv::config::VariantKind;
use mpisv::discretize::assemble;
use mpisv_bench::ffp_2d;

fn bench_assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble_2d_ffp");
    group.sample_size(10);
    for (name, variant, parallel) in [
        ("equilibrium_parallel", VariantKind::Equilibrium, true),
        ("equilibrium_serial", VariantKind::Equilibrium, false),
        ("limit_primitive", VariantKind::Limit, true),
    ] {
        for cells in [8, 16] {
            let mut cfg = ffp_2d(cells, variant, parallel);
            cfg.measurement_time_s = 0.2e-3;
            let grid = cfg.grid().unwrap();
            let specs = cfg.members().unwrap().remove(0).specs;
            let (q, opts) = (cfg.quadrature(), cfg.assembly_options());
            group.bench_with_input(BenchmarkId::new(name, cells * cells), &cells, |b, _| {
                b.iter(|| assemble(&specs, &grid, &q, &opts).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_assembly);
criterion_main!(benches);
