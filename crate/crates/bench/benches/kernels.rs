use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use latcb::fourier::FourierField;
use latcb::statics::{solve_atomistic_static, MacroForce, StaticOptions};
use latcb::stress::{sample_micro, AtomisticStress, CbModel};
use latcb::{Polynomial, Potential, RadialFunction};
use nalgebra::DMatrix;

fn lj(d: usize) -> Potential {
    Potential::pair(RadialFunction::lennard_jones(), DMatrix::identity(d, d), 2.0).unwrap()
}

fn eam(d: usize) -> Potential {
    Potential::eam(
        Some(RadialFunction::lennard_jones()),
        RadialFunction::Exponential { coeff: 1.0, decay: 3.0, r0: 1.0 },
        Polynomial::new(vec![0.0, -1.0, 0.3]),
        DMatrix::identity(d, d),
        1.5,
    )
    .unwrap()
}

fn wave(d: usize) -> FourierField {
    let mut wave = vec![0; d];
    wave[0] = 1;
    let mut dir = vec![0.0; d];
    dir[0] = 1.0;
    FourierField::sine(wave, dir, 0.002)
}

fn forces(c: &mut Criterion) {
    let mut group = c.benchmark_group("forces");
    for (name, p, cells) in [("lj_1d", lj(1), 4096), ("lj_2d", lj(2), 64), ("eam_2d", eam(2), 64)] {
        let (_, u) = sample_micro(&p, &wave(p.dim()), cells).unwrap();
        group.bench_with_input(BenchmarkId::new("forces", name), &u, |b, u| {
            b.iter(|| p.forces(black_box(u)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("hessian_apply", name), &u, |b, u| {
            b.iter(|| p.hessian_apply(black_box(u), u).unwrap())
        });
    }
    group.finish();
}

fn stress(c: &mut Criterion) {
    let p = lj(2);
    let (_, u) = sample_micro(&p, &wave(2), 32).unwrap();
    let sa = AtomisticStress::new(&p, &u).unwrap();
    c.bench_function("atomistic_stress_point_2d", |b| b.iter(|| sa.at(black_box(&[3.3, 7.1]))));
    let m = CbModel::new(p.clone());
    let f = DMatrix::from_row_slice(2, 2, &[0.01, 0.0, 0.0, -0.01]);
    c.bench_function("cb_moduli_2d", |b| b.iter(|| m.moduli(black_box(&f)).unwrap()));
}

fn statics(c: &mut Criterion) {
    let p = lj(1);
    let force = MacroForce::new(FourierField::sine(vec![1], vec![1.0], 1.0), 0.01).unwrap();
    let opts = StaticOptions::default();
    let mut group = c.benchmark_group("atomistic_static");
    group.sample_size(10);
    for cells in [64usize, 256] {
        let lattice = latcb::LatticeSpec::cubic(1, cells).unwrap();
        let f = latcb::statics::make_forces(&force, 1.0 / cells as f64, &lattice).unwrap();
        let u0 = latcb::DisplacementField::zeros(&lattice);
        group.bench_with_input(BenchmarkId::from_parameter(cells), &f, |b, f| {
            b.iter(|| solve_atomistic_static(&p, &f.atomistic, &u0, &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forces, stress, statics);
criterion_main!(benches);
