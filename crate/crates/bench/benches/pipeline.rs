//! Benchmarks for the training, classification, and solver hot paths.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use mcsort::classify::{assign, rational_from_f64, Method, ScoredReferenceSet};
use mcsort::choquet::train_choquet;
use mcsort::dataset::Direction;
use mcsort::learner::{train, StructurePolicy, TrainConfig};
use mcsort::qpsolve::{solve, QpProblem, SolverOptions};

use mcsort_bench::{synthetic_table, unit_scales};

fn bench_train_plain(c: &mut Criterion) {
    let table = synthetic_table(60, 4, 3, 11);
    let scales = unit_scales(4, 2);
    let config = TrainConfig::plain(0.1, 0.1);
    c.bench_function("train_plain_60x4_gamma2", |b| {
        b.iter(|| train(black_box(&table), &scales, &config).unwrap())
    });
}

fn bench_train_product_search(c: &mut Criterion) {
    let table = synthetic_table(24, 4, 2, 13);
    let scales = unit_scales(4, 2);
    let config = TrainConfig {
        form: mcsort::encoding::InteractionForm::Product,
        policy: StructurePolicy::Both,
        c1: 0.1,
        c2: 0.1,
    };
    // 25 signed matchings on 4 criteria, one QP each.
    c.bench_function("train_product_24x4_25_structures", |b| {
        b.iter(|| train(black_box(&table), &scales, &config).unwrap())
    });
}

fn bench_train_choquet(c: &mut Criterion) {
    let table = synthetic_table(60, 4, 3, 17);
    let directions = vec![Direction::Gain; 4];
    c.bench_function("train_choquet_60x4", |b| {
        b.iter(|| train_choquet(black_box(&table), &directions, 0.1).unwrap())
    });
}

fn bench_classification(c: &mut Criterion) {
    let table = synthetic_table(200, 4, 3, 19);
    let scales = unit_scales(4, 2);
    let model = train(&table, &scales, &TrainConfig::plain(0.1, 0.1)).unwrap();
    let values: Vec<f64> = table
        .performances
        .iter()
        .map(|row| model.value(row).unwrap())
        .collect();
    let refs = ScoredReferenceSet::from_f64(&values, &table.labels, table.q).unwrap();
    let query = rational_from_f64(0.437).unwrap();
    for (name, method, k) in [
        ("assign_m1_200_refs", Method::M1, None),
        ("assign_m2_200_refs", Method::M2, None),
        ("assign_m3_200_refs", Method::M3, None),
        ("assign_m4_200_refs_k5", Method::M4, Some(5)),
    ] {
        c.bench_function(name, |b| {
            b.iter(|| assign(black_box(&refs), black_box(&query), method, k).unwrap())
        });
    }
}

fn bench_qp_solver(c: &mut Criterion) {
    // Box-constrained separable QP with a dense coupling band; dimension 40.
    let n = 40;
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        p[i][i] = 1.0 + (i % 5) as f64;
        if i + 1 < n {
            p[i][i + 1] = 0.25;
            p[i + 1][i] = 0.25;
        }
    }
    let c_lin: Vec<f64> = (0..n).map(|i| -((i % 7) as f64) / 3.0).collect();
    let problem = QpProblem {
        p,
        c: c_lin,
        a_ineq: vec![],
        b_ineq: vec![],
        a_eq: vec![vec![1.0; n]],
        b_eq: vec![1.0],
        lb: vec![0.0; n],
    };
    let options = SolverOptions::default();
    c.bench_function("qp_simplex_constrained_dim40", |b| {
        b.iter(|| solve(black_box(&problem), &options).unwrap())
    });
}

criterion_group!(
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_train_plain,
        bench_train_product_search,
        bench_train_choquet,
        bench_classification,
        bench_qp_solver
);
criterion_main!(benches);
