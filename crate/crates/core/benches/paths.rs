//! Sequential against data-parallel path simulation on the three-peer plan
//! and the 1000-member pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use da_core::fairness::{lifetime_fairness, McOptions};
use da_core::montecarlo::{run_samples, Execution, SimulationConfig};
use da_core::mortality::HazardModel;
use da_core::schemes::{da_dominating_dc, dc_drawdown, Cohort, Dissolution, Plan, Pool};

const DELTA: f64 = 0.06;
const GAMMA: f64 = 2.0 / 3.0;

fn dominating(pool: Pool) -> Plan {
    let dd = pool.cohorts.iter().map(|c| dc_drawdown(c.deposit, c.model.clone(), GAMMA, DELTA).unwrap()).collect();
    Plan::new(pool, da_dominating_dc(dd, Dissolution::LastSurvivorLumpSum).unwrap()).unwrap()
}

fn three_peer() -> Plan {
    let members = [(300.0, 0.03), (270.0, 0.04), (255.0, 0.05)];
    dominating(Pool::singles(members.iter().map(|&(s, l)| (s, HazardModel::constant(l).unwrap())).collect(), DELTA).unwrap())
}

fn thousand() -> Plan {
    let cohorts = [(400.0, 0.02), (300.0, 0.03), (270.0, 0.04), (255.0, 0.05), (200.0, 0.06)]
        .iter()
        .map(|&(s, l)| Cohort { deposit: s, model: HazardModel::constant(l).unwrap(), members: 200 })
        .collect();
    dominating(Pool::new(cohorts, DELTA).unwrap())
}

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    for (name, plan, n) in [("three_peer", three_peer(), 20_000), ("thousand", thousand(), 200)] {
        group.throughput(Throughput::Elements(n as u64));
        for (mode, exec) in MODES {
            let cfg = SimulationConfig::new(plan.clone(), GAMMA, 30.0, n, 1).with_execution(exec);
            group.bench_with_input(BenchmarkId::new(name, mode), &cfg, |b, cfg| b.iter(|| run_samples(cfg).unwrap()));
        }
    }
    group.finish();
}

fn lifetime(c: &mut Criterion) {
    let mut group = c.benchmark_group("lifetime_fairness");
    group.sample_size(10);
    let plan = three_peer();
    group.throughput(Throughput::Elements(50_000));
    for (mode, exec) in MODES {
        let opts = McOptions::new(50_000, 2).with_execution(exec);
        group.bench_function(mode, |b| b.iter(|| lifetime_fairness(&plan, &opts).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, simulate, lifetime);
criterion_main!(benches);
