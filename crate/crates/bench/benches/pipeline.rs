use std::f64::consts::PI;

use abpole_core::fem::{assemble, reduce, solve_eigs, DofMap};
use abpole_core::geometry::{build_domain, generate_mesh, insert_crack, DomainSpec, MeshParams};
use abpole_core::localexp::{extract_expansion, f_alpha, ExtractOptions, PolarField};
use abpole_core::{DiskMode, DiskVariant};
use criterion::{black_box, criterion_group, criterion_main, Criterion};
use num_complex::Complex64;

fn pipeline(c: &mut Criterion) {
    let disk = build_domain(&DomainSpec::disk(1.0)).unwrap();
    let crack = insert_crack(&disk, 0.3, 0.1).unwrap();
    let params = MeshParams::new(0.05);

    c.bench_function("mesh cracked disk h=0.05", |b| b.iter(|| generate_mesh(&disk, Some(&crack), &params).unwrap()));

    let mesh = generate_mesh(&disk, Some(&crack), &params).unwrap();
    c.bench_function("assemble stiffness and mass", |b| b.iter(|| assemble(black_box(&mesh)).unwrap()));

    let (k, m) = assemble(&mesh).unwrap();
    let (kr, mr) = reduce(&k, &m, &DofMap::cracked(&mesh)).unwrap();
    let mut g = c.benchmark_group("eigensolve");
    g.sample_size(10);
    g.bench_function("lowest 6", |b| b.iter(|| solve_eigs(&kr, &mr, 6, None).unwrap()));
    g.finish();

    let mode = DiskMode::new(3, 1).unwrap();
    let field = PolarField(|r: f64, t: f64| f_alpha(1.0, t) * (Complex64::from_polar(1.0, -t / 2.0) * mode.eigenfunction(DiskVariant::U, r, t)).re);
    let opts = ExtractOptions::default();
    c.bench_function("extract expansion", |b| b.iter(|| extract_expansion(&field, PI / 3.0, [0.01, 0.02], &opts).unwrap()));
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
