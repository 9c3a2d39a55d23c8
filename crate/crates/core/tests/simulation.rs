use ismarket_core::learning::build_grid;
use ismarket_core::regret::{counterfactual_regret, payoff_row};
use ismarket_core::rng::{self, STREAM_POLICY_BASE};
use ismarket_core::simulation::{
    build_population, realized_scarcity, rescale_demand, run, RegretMode, RunConfig, Simulation,
};
use ismarket_core::{Buyer, FirmLayout, MarketParams, Point, Seller};
use rand::Rng;

fn buyer(id: usize, x: f64, y: f64, q_need: f64, beta: f64) -> Buyer {
    Buyer { id, position: Point::new(x, y), q_need, beta }
}

fn seller(id: usize, x: f64, y: f64, q_supply: f64) -> Seller {
    Seller { id, position: Point::new(x, y), q_supply, phi_index: 0 }
}

fn short(seed: u64, horizon: usize) -> MarketParams {
    MarketParams { seed, horizon, ..MarketParams::default() }
}

#[test]
fn scaling_hits_target_scarcity() {
    for s in [0.25, 0.5, 1.0, 2.0] {
        let layout = build_population(&MarketParams { s, ..MarketParams::default() }).unwrap();
        let got = realized_scarcity(&layout).unwrap();
        assert!((got - s).abs() <= 1e-12 * s, "s={s} got {got}");
    }
    let layout = build_population(&MarketParams { s: 1.0, ..MarketParams::default() }).unwrap();
    assert!((layout.total_demand() - layout.total_supply()).abs() < 1e-9);
}

#[test]
fn scaling_factor_worked_example() {
    let mut layout = FirmLayout::new(
        vec![buyer(0, 0.0, 0.0, 30.0, 1.0), buyer(1, 1.0, 0.0, 50.0, 1.0)],
        vec![seller(0, 0.0, 1.0, 60.0), seller(1, 1.0, 1.0, 40.0)],
        2.0,
    );
    let factor = rescale_demand(&mut layout, 2.0).unwrap();
    assert_eq!(factor, 2.5);
    assert_eq!(layout.total_demand(), 200.0);

    let mut pair = FirmLayout::new(vec![buyer(0, 0.0, 0.0, 3.0, 1.0)], vec![seller(0, 0.0, 0.0, 8.0)], 1.0);
    rescale_demand(&mut pair, 0.25).unwrap();
    assert_eq!(pair.buyers[0].q_need, 2.0);

    let mut empty = FirmLayout::new(vec![buyer(0, 0.0, 0.0, 3.0, 1.0)], vec![seller(0, 0.0, 0.0, 0.0)], 1.0);
    assert!(rescale_demand(&mut empty, 1.0).is_err());
}

#[test]
fn empty_supply_market_is_quiet() {
    let layout = FirmLayout::new(
        vec![buyer(0, 0.0, 0.0, 5.0, 1.0)],
        vec![seller(0, 1.0, 0.0, 0.0), seller(1, 0.0, 1.0, 0.0)],
        2.0,
    );
    let mut sim = Simulation::with_layout(MarketParams::default(), layout).unwrap();
    for _ in 0..5 {
        let out = sim.step().unwrap();
        assert_eq!(out.record.per_seller_reward, vec![0.0, 0.0]);
        assert_eq!(out.record.si, 1.0);
        assert_eq!(out.record.mean_price, None);
    }
}

#[test]
fn top_arm_earns_full_market_price() {
    let params = MarketParams { k: 5, c_t: 0.7, ..MarketParams::default() };
    let layout = FirmLayout::new(vec![buyer(0, 3.0, 4.0, 12.0, 5.0)], vec![seller(0, 0.0, 0.0, 7.0)], 10.0);
    let mut sim = Simulation::with_layout(params, layout).unwrap();
    let out = sim.play(&[4]).unwrap();
    assert_eq!(out.clearing.contracts.len(), 1);
    assert_eq!(out.clearing.contracts[0].qty, 7.0);
    assert!((out.record.per_seller_reward[0] - 700.0).abs() < 1e-9);
}

/// Two isolated buyer/seller pairs: transport across pairs prices every cross
/// bid out of tolerance, so each seller's reward has a closed form.
#[test]
fn three_steps_match_hand_stepped_oracle() {
    let params = MarketParams { k: 3, c_d: 10.0, c_t: 10.0, alpha: 0.6, tau_0: 1.0, seed: 42, ..MarketParams::default() };
    let layout = FirmLayout::new(
        vec![buyer(0, 0.0, 0.0, 6.0, 1.0), buyer(1, 100.0, 0.0, 12.0, 1.0)],
        vec![seller(0, 0.0, 0.0, 10.0), seller(1, 100.0, 0.0, 10.0)],
        200.0,
    );
    let mut sim = Simulation::with_layout(params.clone(), layout).unwrap();

    let phis = [-0.1, 0.45, 1.0];
    let traded = [6.0, 10.0];
    let unsold = [4.0, 0.0];
    let scale = 100.0 * 10.0;
    let mut weights = [[0.0f64; 3]; 2];
    let mut rngs: Vec<_> = (0..2).map(|j| rng::stream(42, STREAM_POLICY_BASE + j)).collect();

    for t in 0..3u32 {
        let tau = (1.0f64 * 0.996f64.powi(t as i32)).max(0.01);
        let mut expected_actions = [0usize; 2];
        for j in 0..2 {
            let m = weights[j].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = weights[j].iter().map(|w| ((w - m) / (tau * scale)).exp()).collect();
            let z: f64 = e.iter().sum();
            let u: f64 = rngs[j].random();
            let mut acc = 0.0;
            expected_actions[j] = 2;
            for (k, ek) in e.iter().enumerate() {
                acc += ek / z;
                if u < acc {
                    expected_actions[j] = k;
                    break;
                }
            }
        }
        let out = sim.step().unwrap();
        assert_eq!(out.record.per_seller_action, expected_actions.to_vec(), "t={t}");
        assert!((out.record.tau - tau).abs() < 1e-15);
        for j in 0..2 {
            let a = expected_actions[j];
            let reward = traded[j] * phis[a] * 100.0 - unsold[j] * 10.0;
            assert!((out.record.per_seller_reward[j] - reward).abs() < 1e-9, "t={t} j={j}");
            weights[j][a] = 0.6 * weights[j][a] + 0.4 * reward;
        }
        for (j, p) in sim.policies().iter().enumerate() {
            for k in 0..3 {
                assert!((p.weights[k] - weights[j][k]).abs() < 1e-9);
            }
            assert_eq!(p.t, t as u64 + 1);
        }
        assert_eq!(out.record.traded_qty, 16.0);
        assert!((out.record.si - 16.0 / 18.0).abs() < 1e-15);
    }
}

#[test]
fn runs_are_deterministic() {
    let cfg = RunConfig::new(short(9, 60));
    assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
    let other = RunConfig::new(short(10, 60));
    assert_ne!(run(&cfg).unwrap().records, run(&other).unwrap().records);
}

#[test]
fn zero_horizon_is_empty() {
    let r = run(&RunConfig::new(short(1, 0))).unwrap();
    assert!(r.records.is_empty());
    assert!(r.final_policies.iter().all(|p| p.t == 0 && p.weights.iter().all(|&w| w == 0.0)));
}

#[test]
fn instrumentation_is_neutral() {
    let plain = run(&RunConfig::new(short(3, 80))).unwrap();
    let mut cfg = RunConfig::new(short(3, 80));
    cfg.regret_mode = RegretMode::Sampled(7);
    cfg.record_contracts = true;
    cfg.snapshot_interval = 20;
    let loud = run(&cfg).unwrap();
    assert_eq!(loud.snapshots.len(), 4);
    assert!(loud.contracts.as_ref().is_some_and(|c| !c.is_empty()));
    for (a, b) in plain.records.iter().zip(&loud.records) {
        assert_eq!(a.mean_price.map(f64::to_bits), b.mean_price.map(f64::to_bits));
        assert_eq!(a.si.to_bits(), b.si.to_bits());
        assert_eq!(a.per_seller_reward, b.per_seller_reward);
        assert_eq!(a.per_seller_action, b.per_seller_action);
        assert_eq!(b.total_regret.is_some(), b.t % 7 == 0);
    }
    assert_eq!(plain.final_policies, loud.final_policies);
}

#[test]
fn temperature_at_horizon() {
    for horizon in [1, 250, 1000] {
        let p = short(2, horizon);
        let r = run(&RunConfig::new(p.clone())).unwrap();
        let expected = (p.tau_0 * libm::pow(p.decay, horizon as f64)).max(p.tau_min);
        for policy in &r.final_policies {
            assert_eq!(policy.tau, expected);
        }
    }
}

#[test]
fn reward_accounting_identity() {
    let params = short(5, 40);
    let mut cfg = RunConfig::new(params.clone());
    cfg.record_contracts = true;
    let layout = build_population(&params).unwrap();
    let r = run(&cfg).unwrap();
    let contracts = r.contracts.unwrap();
    for rec in &r.records {
        for (j, s) in layout.sellers.iter().enumerate() {
            let mine: Vec<_> = contracts.iter().filter(|c| c.t == rec.t && c.contract.seller_id == j).collect();
            let sold: f64 = mine.iter().map(|c| c.contract.qty).sum();
            let mut net = 0.0;
            for c in &mine {
                let d = layout.dist.get(c.contract.buyer_id, j);
                net += c.contract.qty * (c.contract.unit_price - d * params.c_t);
            }
            let unsold = s.q_supply - sold;
            let residual = rec.per_seller_reward[j] + unsold * params.c_d - net;
            assert!(residual.abs() < 1e-9 * (1.0 + net.abs()), "t={} j={j} residual {residual}", rec.t);
        }
        assert!(rec.traded_qty <= layout.total_supply().min(layout.total_demand()) + 1e-9);
        assert!((0.0..=1.0).contains(&rec.si));
    }
}

#[test]
fn replayed_reward_matches_live_reward() {
    let params = short(11, 30);
    let mut sim = Simulation::new(params.clone()).unwrap();
    for _ in 0..30 {
        let layout = sim.layout().clone();
        let grid = sim.grid().clone();
        let out = sim.step().unwrap();
        let actions = &out.record.per_seller_action;
        for j in [0, actions.len() / 2, actions.len() - 1] {
            let row = payoff_row(&layout, &params, actions, &grid, j).unwrap();
            assert_eq!(row[actions[j]].to_bits(), out.record.per_seller_reward[j].to_bits());
        }
    }
}

/// One buyer, two co-located sellers, no transport or disposal cost: the
/// buyer takes the cheaper seller, the lower id on ties.
#[test]
fn undercutting_regret_matches_bimatrix() {
    let params = MarketParams { k: 3, c_d: 0.0, c_t: 0.0, ..MarketParams::default() };
    let layout = FirmLayout::new(
        vec![buyer(0, 0.0, 0.0, 10.0, 1.0)],
        vec![seller(0, 0.0, 0.0, 10.0), seller(1, 0.0, 0.0, 10.0)],
        1.0,
    );
    let grid = build_grid(3, 0.0, 100.0).unwrap();
    let phi = [0.0, 0.5, 1.0];
    let payoff = |a0: usize, a1: usize| -> [f64; 2] {
        if phi[a0] <= phi[a1] {
            [1000.0 * phi[a0], 0.0]
        } else {
            [0.0, 1000.0 * phi[a1]]
        }
    };
    for a0 in 0..3 {
        for a1 in 0..3 {
            let best0 = (0..3).map(|k| payoff(k, a1)[0]).fold(f64::MIN, f64::max);
            let best1 = (0..3).map(|k| payoff(a0, k)[1]).fold(f64::MIN, f64::max);
            let played = payoff(a0, a1);
            let r = counterfactual_regret(&layout, &params, &[a0, a1], &grid).unwrap();
            assert_eq!(r.per_seller_regret, vec![best0 - played[0], best1 - played[1]], "({a0},{a1})");
            let nash = best0 == played[0] && best1 == played[1];
            assert_eq!(r.total_regret == 0.0, nash);
        }
    }
}
