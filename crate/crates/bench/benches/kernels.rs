use criterion::{criterion_group, criterion_main, Criterion};
use phs_core::discrete::{no_input, DiscreteSystem, Grid1D};
use phs_core::dsl::{builtin, BuiltinOptions};
use std::hint::black_box;

fn symbolic(c: &mut Criterion) {
    let string = builtin("string_damped", BuiltinOptions::default()).unwrap();
    c.bench_function("power_balance/string_damped", |b| b.iter(|| black_box(&string).power_balance().unwrap()));
    let mhd = builtin("mhd", BuiltinOptions { mhd_dim: 2 }).unwrap();
    c.bench_function("verify/mhd_2d", |b| b.iter(|| black_box(&mhd).verify().unwrap()));
}

fn stepping(c: &mut Criterion) {
    for name in ["string", "string_damped"] {
        let sys = builtin(name, BuiltinOptions::default()).unwrap();
        let ds = DiscreteSystem::new(&sys, Grid1D::new(201, 0.0, 1.0).unwrap()).unwrap();
        let x0 = ds.initial_state().unwrap();
        ds.step(&x0, 1e-3, &no_input).unwrap();
        c.bench_function(&format!("step_midpoint/{name}/N=201"), |b| {
            b.iter(|| ds.step(black_box(&x0), 1e-3, &no_input).unwrap())
        });
    }
}

criterion_group!(benches, symbolic, stepping);
criterion_main!(benches);
