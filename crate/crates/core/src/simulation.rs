//! Full market runs from population construction through the per-timestep
//! loop.
//!
//! Every timestep is an independent market episode. Endowments and demands
//! reset to their fixed per-step values, each seller samples an arm, the
//! auction clears, and every seller updates the value estimate of the arm it
//! played with its step reward.

use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auction::{run_auction, ClearingResult};
use crate::error::{Error, Result};
use crate::learning::{build_grid, ActionGrid, PolicyState, TemperatureSchedule};
use crate::market::{scarcity, Contract, FirmLayout, MarketParams};
use crate::metrics::{symbiosis_index, weighted_mean_price};
use crate::regret::counterfactual_regret;
use crate::rng::{self, SimRng, STREAM_ENDOWMENTS, STREAM_POLICY_BASE};
use crate::spatial::{generate_layout, LayoutSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RegretMode {
    #[default]
    Off,
    EveryStep,
    /// Evaluate on every n-th timestep (t = 0, n, 2n, ...).
    Sampled(usize),
}

impl RegretMode {
    pub fn active_at(&self, t: usize) -> bool {
        match *self {
            RegretMode::Off => false,
            RegretMode::EveryStep => true,
            RegretMode::Sampled(n) => n > 0 && t.is_multiple_of(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: MarketParams,
    pub record_contracts: bool,
    pub regret_mode: RegretMode,
    /// Policy snapshot every this many steps; 0 disables snapshots.
    pub snapshot_interval: usize,
}

impl RunConfig {
    pub fn new(params: MarketParams) -> Self {
        RunConfig { params, record_contracts: false, regret_mode: RegretMode::Off, snapshot_interval: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if let RegretMode::Sampled(0) = self.regret_mode {
            return Err(Error::config("regret_mode", "sampling interval must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestepRecord {
    pub t: usize,
    /// Quantity-weighted mean contract price; `None` when nothing traded.
    pub mean_price: Option<f64>,
    pub traded_qty: f64,
    pub si: f64,
    pub per_seller_reward: Vec<f64>,
    /// 0-based grid index played by each seller.
    pub per_seller_action: Vec<usize>,
    pub per_seller_regret: Option<Vec<f64>>,
    pub total_regret: Option<f64>,
    /// Temperature the actions were sampled at.
    pub tau: f64,
}

impl TimestepRecord {
    pub fn total_reward(&self) -> f64 {
        self.per_seller_reward.iter().fold(0.0, |acc, r| acc + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    /// Number of completed timesteps when the snapshot was taken.
    pub t: usize,
    pub policies: Vec<PolicyState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedContract {
    pub t: usize,
    #[serde(flatten)]
    pub contract: Contract,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub records: Vec<TimestepRecord>,
    pub final_policies: Vec<PolicyState>,
    pub snapshots: Vec<PolicySnapshot>,
    pub contracts: Option<Vec<TimedContract>>,
}

/// Late-run outcome of a run: symbiosis and price averaged over the last
/// steps, weighting each step by traded quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateSummary {
    pub si: f64,
    /// `None` when the window saw no trades.
    pub price: Option<f64>,
    pub traded_qty: f64,
}

impl RunResult {
    /// Summary over the last `window` records (all of them if fewer).
    pub fn late_summary(&self, window: usize) -> LateSummary {
        let start = self.records.len().saturating_sub(window);
        let tail = &self.records[start..];
        if tail.is_empty() {
            return LateSummary { si: 0.0, price: None, traded_qty: 0.0 };
        }
        let si = tail.iter().map(|r| r.si).sum::<f64>() / tail.len() as f64;
        let mut value = 0.0;
        let mut qty = 0.0;
        for r in tail {
            if let Some(p) = r.mean_price {
                value += p * r.traded_qty;
                qty += r.traded_qty;
            }
        }
        LateSummary { si, price: (qty > 0.0).then(|| value / qty), traded_qty: qty }
    }

    pub fn total_regret_series(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.total_regret).collect()
    }
}

fn uniform(rng: &mut SimRng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Generates the layout, draws endowments and tolerances, then rescales all
/// buyer demands by one factor so that total demand over total supply is
/// exactly `params.s`.
pub fn build_population(params: &MarketParams) -> Result<FirmLayout> {
    params.validate()?;
    let mut layout = generate_layout(&LayoutSpec::from_params(params), params.buyer_fraction)?;
    let mut rng = rng::stream(params.seed, STREAM_ENDOWMENTS);
    for b in layout.buyers.iter_mut() {
        b.q_need = uniform(&mut rng, params.demand_range);
        b.beta = uniform(&mut rng, params.beta_range);
    }
    for s in layout.sellers.iter_mut() {
        s.q_supply = uniform(&mut rng, params.demand_range);
    }
    rescale_demand(&mut layout, params.s)?;
    Ok(layout)
}

/// Multiplies every buyer demand by `s * supply / demand`.
pub fn rescale_demand(layout: &mut FirmLayout, s: f64) -> Result<f64> {
    let supply = layout.total_supply();
    if supply <= 0.0 {
        return Err(Error::config("demand_range", "total raw supply is zero"));
    }
    let demand = layout.total_demand();
    if demand <= 0.0 {
        return Err(Error::config("demand_range", "total raw demand is zero"));
    }
    let factor = s * supply / demand;
    for b in layout.buyers.iter_mut() {
        b.q_need *= factor;
    }
    Ok(factor)
}

/// Step reward of every seller from one clearing.
pub fn seller_rewards(layout: &FirmLayout, params: &MarketParams, result: &ClearingResult) -> Vec<f64> {
    let mut net = alloc::vec![0.0; layout.sellers.len()];
    for c in &result.contracts {
        let transport = layout.dist.get(c.buyer_id, c.seller_id) * params.c_t;
        net[c.seller_id] += c.qty * (c.unit_price - transport);
    }
    net.iter().zip(&result.unsold).map(|(n, u)| n - u * params.c_d).collect()
}

/// Everything produced by one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub record: TimestepRecord,
    pub clearing: ClearingResult,
}

/// A market in progress.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: MarketParams,
    layout: FirmLayout,
    grid: ActionGrid,
    schedule: TemperatureSchedule,
    policies: Vec<PolicyState>,
    rngs: Vec<SimRng>,
    reward_scale: f64,
    regret_mode: RegretMode,
    t: usize,
}

impl Simulation {
    pub fn new(params: MarketParams) -> Result<Self> {
        let layout = build_population(&params)?;
        Self::with_layout(params, layout)
    }

    /// Runs on a caller-supplied layout, skipping population construction and
    /// demand rescaling.
    pub fn with_layout(params: MarketParams, layout: FirmLayout) -> Result<Self> {
        params.validate()?;
        let grid = build_grid(params.k, params.c_d, params.p_m)?;
        let schedule = TemperatureSchedule { tau_0: params.tau_0, tau_min: params.tau_min, decay: params.decay };
        let n_sellers = layout.sellers.len();
        let policies = (0..n_sellers).map(|_| PolicyState::new(params.k, &schedule)).collect();
        let rngs = (0..n_sellers).map(|j| rng::stream(params.seed, STREAM_POLICY_BASE + j as u64)).collect();
        // Weights are compared in units of one seller's endowment sold at p_m,
        // which makes the temperature dimensionless.
        let mean_supply = if n_sellers > 0 { layout.total_supply() / n_sellers as f64 } else { 0.0 };
        let reward_scale = if mean_supply > 0.0 { params.p_m * mean_supply } else { params.p_m };
        Ok(Simulation {
            params,
            layout,
            grid,
            schedule,
            policies,
            rngs,
            reward_scale,
            regret_mode: RegretMode::Off,
            t: 0,
        })
    }

    pub fn with_regret(mut self, mode: RegretMode) -> Self {
        self.regret_mode = mode;
        self
    }

    pub fn layout(&self) -> &FirmLayout {
        &self.layout
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.grid
    }

    pub fn policies(&self) -> &[PolicyState] {
        &self.policies
    }

    pub fn reward_scale(&self) -> f64 {
        self.reward_scale
    }

    /// Timesteps completed so far.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Samples every seller's arm from its policy, then plays them.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let scale = self.reward_scale;
        let actions: Vec<usize> = self
            .policies
            .iter()
            .zip(self.rngs.iter_mut())
            .map(|(p, rng)| p.sample_action(rng, scale))
            .collect();
        self.play(&actions)
    }

    /// Clears the market with the given arms and applies the learning update.
    pub fn play(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        if actions.len() != self.policies.len() || actions.iter().any(|&a| a >= self.grid.len()) {
            return Err(Error::contract("actions must name one grid arm per seller"));
        }
        let tau = self.policies.first().map_or(self.schedule.at(self.t as u64), |p| p.tau);
        let phis: Vec<f64> = actions.iter().map(|&a| self.grid.phi(a)).collect();
        let clearing = run_auction(&self.layout, &self.params, &phis)?;
        let rewards = seller_rewards(&self.layout, &self.params, &clearing);

        let regret = if self.regret_mode.active_at(self.t) {
            Some(counterfactual_regret(&self.layout, &self.params, actions, &self.grid)?)
        } else {
            None
        };

        for ((policy, &arm), &r) in self.policies.iter_mut().zip(actions).zip(&rewards) {
            policy.update_weights(arm, r, self.params.alpha)?;
            policy.advance_temperature(&self.schedule);
        }
        for (seller, &arm) in self.layout.sellers.iter_mut().zip(actions) {
            seller.phi_index = arm;
        }

        let traded_qty = clearing.traded_qty();
        let si = symbiosis_index(traded_qty, self.layout.total_supply(), self.layout.total_demand())?;
        let record = TimestepRecord {
            t: self.t,
            mean_price: weighted_mean_price(&clearing.contracts),
            traded_qty,
            si,
            per_seller_reward: rewards,
            per_seller_action: actions.to_vec(),
            total_regret: regret.as_ref().map(|r| r.total_regret),
            per_seller_regret: regret.map(|r| r.per_seller_regret),
            tau,
        };
        self.t += 1;
        Ok(StepOutcome { record, clearing })
    }
}

/// Executes `config.params.horizon` timesteps.
pub fn run(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    let sim = Simulation::new(config.params.clone())?.with_regret(config.regret_mode);
    run_simulation(sim, config)
}

/// Drives an already-built simulation for the configured horizon.
pub fn run_simulation(mut sim: Simulation, config: &RunConfig) -> Result<RunResult> {
    let horizon = config.params.horizon;
    let mut records = Vec::with_capacity(horizon);
    let mut snapshots = Vec::new();
    let mut contracts = config.record_contracts.then(Vec::new);
    for _ in 0..horizon {
        let StepOutcome { record, clearing } = sim.step()?;
        if let Some(log) = contracts.as_mut() {
            log.extend(clearing.contracts.iter().map(|&c| TimedContract { t: record.t, contract: c }));
        }
        records.push(record);
        if config.snapshot_interval > 0 && sim.t().is_multiple_of(config.snapshot_interval) {
            snapshots.push(PolicySnapshot { t: sim.t(), policies: sim.policies.clone() });
        }
    }
    Ok(RunResult { records, final_policies: sim.policies, snapshots, contracts })
}

/// Exposed for diagnostics: scarcity of the built population.
pub fn realized_scarcity(layout: &FirmLayout) -> Result<f64> {
    scarcity(&layout.buyers, &layout.sellers)
}
