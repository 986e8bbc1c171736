use da_core::fairness::{
    equitability_fit, instantaneous_fairness, lifetime_fairness, periodic_fairness, FairnessReport, McOptions, Notion,
};
use da_core::ledger::{BalancePolicy, PayoutSchedule};
use da_core::mortality::HazardModel;
use da_core::schemes::{
    da_dominating_dc, dc_drawdown, equitable_tontine, ftp_plan, instantaneous_fair_payout, periodic_fair_da, Cohort,
    Dissolution, Plan, Pool,
};

const LAMBDA: [f64; 3] = [0.03, 0.04, 0.05];
const DEPOSIT: [f64; 3] = [300.0, 270.0, 255.0];
const DELTA: f64 = 0.06;
const GAMMA: f64 = 2.0 / 3.0;

fn constant(l: f64) -> HazardModel {
    HazardModel::constant(l).unwrap()
}

fn three_peer_pool() -> Pool {
    Pool::singles(DEPOSIT.iter().zip(LAMBDA).map(|(&s, l)| (s, constant(l))).collect(), DELTA).unwrap()
}

fn exponential_da(dissolution: Dissolution) -> Plan {
    let thetas = LAMBDA.iter().map(|l| DELTA + l / GAMMA).collect();
    Plan::new(three_peer_pool(), periodic_fair_da(thetas, dissolution)).unwrap()
}

fn dominating(dissolution: Dissolution) -> Plan {
    let pool = three_peer_pool();
    let dd = pool.cohorts.iter().map(|c| dc_drawdown(c.deposit, c.model.clone(), GAMMA, DELTA).unwrap()).collect();
    Plan::new(pool, da_dominating_dc(dd, dissolution).unwrap()).unwrap()
}

fn level_schedule(delta: f64, years: f64) -> PayoutSchedule {
    let rate = if delta == 0.0 { 1.0 / years } else { delta / -(-delta * years).exp_m1() };
    PayoutSchedule::constant(rate, years).unwrap()
}

fn heterogeneous_tontine() -> Plan {
    let pool = three_peer_pool();
    let spec = equitable_tontine(&pool, vec![1.0, 1.2, 0.9], level_schedule(DELTA, 25.0), false, Dissolution::LastSurvivorLumpSum)
        .unwrap()
        .with_balance_policy(BalancePolicy::Permit);
    Plan::new(pool, spec).unwrap()
}

fn homogeneous_ftp() -> Plan {
    let pool = Pool::new(vec![Cohort { deposit: 100.0, model: constant(0.05), members: 5 }], 0.03).unwrap();
    Plan::new(pool, ftp_plan(Dissolution::DissolveAtTwoSurvivors)).unwrap()
}

#[test]
fn periodic_fair_transfers_pass_in_early_periods() {
    let plan = exponential_da(Dissolution::LastSurvivorLumpSum);
    for period in [1, 2] {
        let r = periodic_fairness(&plan, period, &McOptions::new(200_000, 31)).unwrap();
        assert!(r.pass, "period {period}: {r:?}");
        for e in &r.entries {
            assert!(e.residual.abs() < 3.0 * e.std_error + 1e-9 * e.before.abs(), "{e:?}");
        }
    }
}

#[test]
fn heterogeneous_tontine_is_not_periodic_fair() {
    let r = periodic_fairness(&heterogeneous_tontine(), 1, &McOptions::new(100_000, 32)).unwrap();
    assert!(!r.pass, "{r:?}");
    let worst = r.entries.iter().map(|e| e.residual.abs() / e.std_error).fold(0.0, f64::max);
    assert!(worst > 10.0, "largest residual only {worst} standard errors");
}

#[test]
fn homogeneous_fair_transfer_plan_is_lifetime_and_instantaneously_fair() {
    let plan = homogeneous_ftp();
    let l = lifetime_fairness(&plan, &McOptions::new(100_000, 33)).unwrap();
    assert!(l.pass, "{l:?}");
    assert!(l.entries[0].relative.abs() < 5e-3);
    let i = instantaneous_fairness(&plan, 0.5, 20.0, &McOptions::new(100_000, 34)).unwrap();
    assert!(i.pass, "sup residual {}", i.sup_residual);
}

#[test]
fn truncated_perpetual_tontine_keeps_a_uniform_shortfall() {
    // Identical members: each loses the same fraction of their deposit to
    // the balance left in the fund.
    let pool = Pool::singles((0..4).map(|_| (200.0, constant(0.05))).collect(), 0.04).unwrap();
    let spec = equitable_tontine(&pool, vec![1.0; 4], level_schedule(0.04, 25.0), false, Dissolution::Perpetual)
        .unwrap()
        .with_balance_policy(BalancePolicy::Permit);
    let plan = Plan::new(pool, spec).unwrap();
    let fit = equitability_fit(&plan, &McOptions::new(50_000, 35).with_horizon(25.0)).unwrap();
    assert!(fit.equitable, "{fit:?}");
    assert!(fit.epsilon > 10.0 * fit.std_error / 200.0, "{fit:?}");
}

#[test]
fn rebalanced_tontine_with_unequal_weights_is_not_equitable() {
    let m = constant(0.05);
    let pool = Pool::new(vec![Cohort::single(360.0, m.clone()), Cohort { deposit: 360.0, model: m, members: 4 }], 0.0).unwrap();
    let spec = equitable_tontine(&pool, vec![0.8, 1.0], level_schedule(0.0, 30.0), true, Dissolution::LastSurvivorLumpSum).unwrap();
    let plan = Plan::new(pool, spec).unwrap();
    let fit = equitability_fit(&plan, &McOptions::new(50_000, 36)).unwrap();
    assert!(!fit.equitable, "{fit:?}");
    assert!(fit.max_dev > 10.0 * fit.std_error, "{fit:?}");
}

#[test]
fn fair_lifetime_plan_fits_zero_shortfall() {
    let fit = equitability_fit(&dominating(Dissolution::DissolveAtFirstDeath), &McOptions::new(100_000, 37)).unwrap();
    assert!(fit.equitable);
    assert!(fit.epsilon.abs() < 3.0 * fit.std_error / 255.0 + 1e-3, "{fit:?}");
}

#[test]
fn standard_errors_shrink_with_the_square_root_of_paths() {
    let plan = dominating(Dissolution::DissolveAtFirstDeath);
    let se: Vec<f64> = [10_000, 100_000, 1_000_000]
        .iter()
        .map(|&n| lifetime_fairness(&plan, &McOptions::new(n, 38)).unwrap().entries[0].std_error)
        .collect();
    for w in se.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
    }
}

#[test]
fn stronger_notions_imply_weaker_ones() {
    let plans = [
        ("dominating first death", dominating(Dissolution::DissolveAtFirstDeath)),
        ("exponential continue", exponential_da(Dissolution::LastSurvivorLumpSum)),
        ("instantaneous", Plan::new(three_peer_pool(), instantaneous_fair_payout()).unwrap()),
        ("tontine", heterogeneous_tontine()),
        ("ftp homogeneous", homogeneous_ftp()),
    ];
    let all = [Notion::Instantaneous, Notion::Periodic, Notion::Lifetime, Notion::Equitability];
    for (name, plan) in plans {
        let r = FairnessReport::evaluate(&plan, &all, &McOptions::new(20_000, 39).with_horizon(60.0), 0.5).unwrap();
        assert!(r.chain_consistent(), "{name}: {:?}", [
            r.instantaneous.as_ref().map(|x| x.pass),
            r.periodic.as_ref().map(|x| x.pass),
            r.lifetime.as_ref().map(|x| x.pass),
            r.equitability.as_ref().map(|x| x.equitable),
        ]);
    }
}
