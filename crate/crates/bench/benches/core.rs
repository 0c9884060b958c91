use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dynograph_core::hiv::{build_mechanistic, doctor_feedback_graph, MechanisticParams};
use dynograph_core::kalman::{
    construct_unfaithful, faithfulness_verdict, marginal_decomposition, riccati_solve, B3Rule, Coefficient,
    LinearSystem3,
};
use dynograph_core::simulate::{simulate, SimConfig};
use dynograph_core::{derive_graph, parse_model, print_model, InfluenceGraph};

const OU: &str = "system ou\nattr theta = 1\ncomponent X : diffusion { drift = -theta * X; sigma = 1; init = 0; }\n";

fn bench_simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    let ou = parse_model(OU).unwrap();
    for reps in [100, 1000] {
        let cfg = SimConfig::new(1e-3, 1.0, reps, 1);
        group.bench_with_input(BenchmarkId::new("ou_1000_steps", reps), &cfg, |b, cfg| {
            b.iter(|| simulate(black_box(&ou), cfg).unwrap())
        });
    }
    let hiv = build_mechanistic(&MechanisticParams::default(), Some(20.0)).unwrap();
    let cfg = SimConfig::new(0.01, 50.0, 100, 1);
    group.bench_function("hiv_mechanistic_100x5000", |b| b.iter(|| simulate(black_box(&hiv), &cfg).unwrap()));
    group.finish();
}

fn bench_kalman(c: &mut Criterion) {
    let mut group = c.benchmark_group("kalman");
    let sys = LinearSystem3::from_constants([-0.3, 0.5, 1.0, 0.4, -0.2, 0.7, -0.1, 0.3, -0.5]);
    group.bench_function("riccati_10k_steps", |b| b.iter(|| riccati_solve(black_box(&sys), 10.0, 1e-3).unwrap()));
    group.bench_function("decomposition_10k_steps", |b| {
        b.iter(|| marginal_decomposition(black_box(&sys), 10.0, 1e-3).unwrap())
    });
    group.bench_function("verdict_10k_steps", |b| {
        b.iter(|| faithfulness_verdict(black_box(&sys), 10.0, 1e-3, None).unwrap())
    });
    let k = Coefficient::Const;
    group.bench_function("construct_unfaithful_5k_steps", |b| {
        b.iter(|| construct_unfaithful(k(1.0), k(-0.8), k(0.2), k(0.3), 5.0, 1e-3, B3Rule::Closure).unwrap())
    });
    group.finish();
}

/// Dense graph on `n` nodes with a fixed edge pattern.
fn patterned_graph(n: usize) -> InfluenceGraph {
    let names: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
    let mut g = InfluenceGraph::new(names.iter().cloned());
    for i in 0..n {
        for j in 0..n {
            if i != j && (i * 7 + j * 3) % 5 == 0 {
                g.add_edge(&names[i], &names[j]).unwrap();
            }
        }
    }
    g
}

fn bench_graph(c: &mut Criterion) {
    let mut group = c.benchmark_group("graph");
    let hiv = build_mechanistic(&MechanisticParams::default(), Some(20.0)).unwrap();
    let text = print_model(&hiv);
    group.bench_function("parse_mechanistic", |b| b.iter(|| parse_model(black_box(&text)).unwrap()));
    group.bench_function("derive_mechanistic", |b| b.iter(|| derive_graph(black_box(&hiv)).unwrap()));

    let doctor = doctor_feedback_graph().graph;
    group.bench_function("doctor_all_pairs_influence", |b| {
        b.iter(|| {
            let mut held = 0;
            for j in doctor.nodes() {
                for k in doctor.nodes() {
                    if j != k && doctor.influence(j, k).unwrap().holds {
                        held += 1;
                    }
                }
            }
            held
        })
    });
    for n in [8, 64] {
        let g = patterned_graph(n);
        let (first, last) = (g.nodes()[0].clone(), g.nodes()[n - 1].clone());
        group.bench_with_input(BenchmarkId::new("dynamical_independence", n), &g, |b, g| {
            b.iter(|| g.dynamical_independence(black_box(&first), black_box(&last)).unwrap())
        });
        let blockers: Vec<String> = g.nodes()[1..n / 2].to_vec();
        let refs: Vec<&str> = blockers.iter().map(String::as_str).collect();
        group.bench_with_input(BenchmarkId::new("blocks", n), &g, |b, g| {
            b.iter(|| g.blocks(black_box(&refs), &first, &last).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_simulate, bench_kalman, bench_graph);
criterion_main!(benches);
