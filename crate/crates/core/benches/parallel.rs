//! Sequential and data-parallel execution of the exhaustive oracle: one wide
//! simulation, and a batch of random trial checks.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use pktflow::engine::Variant;
use pktflow::exec::Exec;
use pktflow::gen::random_networks;
use pktflow::netmodel::Network;
use pktflow::oracle::{check_against, simulate};

fn widest(nets: &[Network]) -> &Network {
    nets.iter()
        .max_by_key(|n| (n.layout.pk_size(), n.firewalls.len()))
        .expect("non-empty population")
}

fn check_batch(nets: &[Network], exec: Exec) -> usize {
    exec.map(nets.iter().collect(), |net| {
        net.zone_ids()
            .filter(|&z| {
                let exact = simulate(net, z, 12, None, Exec::Sequential).unwrap();
                check_against(net, z, Variant::V2, &exact, Default::default())
                    .unwrap()
                    .is_ok()
            })
            .count()
    })
    .into_iter()
    .sum()
}

fn bench(c: &mut Criterion) {
    let nets = random_networks(2024, 40);
    let wide = widest(&nets);
    let origin = wide.zone_ids().next().unwrap();

    let mut g = c.benchmark_group("simulate");
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(exec), &exec, |b, &exec| {
            b.iter(|| simulate(black_box(wide), origin, 12, None, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("trial_batch");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(exec), &exec, |b, &exec| {
            b.iter(|| check_batch(black_box(&nets), exec))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
