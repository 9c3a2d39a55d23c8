//! Counterfactual per-step regret by auction replay.
//!
//! For seller `j` the market is re-cleared once per alternative arm with every
//! other seller's action frozen. Both the best alternative and the played arm
//! are evaluated by the same replay, so they share tie-breaking exactly.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::auction::run_auction;
use crate::error::{Error, Result};
use crate::learning::ActionGrid;
use crate::market::{FirmLayout, MarketParams};
use crate::simulation::seller_rewards;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub t: usize,
    pub per_seller_regret: Vec<f64>,
    pub total_regret: f64,
}

impl RegretRecord {
    pub fn at(mut self, t: usize) -> Self {
        self.t = t;
        self
    }

    pub fn mean_regret(&self) -> f64 {
        if self.per_seller_regret.is_empty() {
            0.0
        } else {
            self.total_regret / self.per_seller_regret.len() as f64
        }
    }
}

fn check_actions(actions: &[usize], grid: &ActionGrid, layout: &FirmLayout) -> Result<()> {
    if actions.len() != layout.sellers.len() {
        return Err(Error::contract(alloc::format!(
            "{} actions for {} sellers",
            actions.len(),
            layout.sellers.len()
        )));
    }
    if let Some(&bad) = actions.iter().find(|&&a| a >= grid.len()) {
        return Err(Error::contract(alloc::format!("arm {bad} outside grid of {}", grid.len())));
    }
    Ok(())
}

/// Reward of `seller` for every arm of the grid, others fixed at `actions`.
pub fn payoff_row(
    layout: &FirmLayout,
    params: &MarketParams,
    actions: &[usize],
    grid: &ActionGrid,
    seller: usize,
) -> Result<Vec<f64>> {
    check_actions(actions, grid, layout)?;
    let mut phis: Vec<f64> = actions.iter().map(|&a| grid.phi(a)).collect();
    let mut row = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        phis[seller] = grid.phi(k);
        let result = run_auction(layout, params, &phis)?;
        row.push(seller_rewards(layout, params, &result)[seller]);
    }
    Ok(row)
}

pub fn counterfactual_regret(
    layout: &FirmLayout,
    params: &MarketParams,
    actions: &[usize],
    grid: &ActionGrid,
) -> Result<RegretRecord> {
    check_actions(actions, grid, layout)?;
    let base: Vec<f64> = actions.iter().map(|&a| grid.phi(a)).collect();
    let played = seller_rewards(layout, params, &run_auction(layout, params, &base)?);

    let mut phis = base.clone();
    let mut per_seller_regret = Vec::with_capacity(actions.len());
    for (j, &arm) in actions.iter().enumerate() {
        let mut best = played[j];
        for k in (0..grid.len()).filter(|&k| k != arm) {
            phis[j] = grid.phi(k);
            let result = run_auction(layout, params, &phis)?;
            let r = seller_rewards(layout, params, &result)[j];
            if r > best {
                best = r;
            }
        }
        phis[j] = base[j];
        per_seller_regret.push(best - played[j]);
    }
    let total_regret = per_seller_regret.iter().fold(0.0, |acc, r| acc + r);
    Ok(RegretRecord { t: 0, per_seller_regret, total_regret })
}

/// Median of the trailing `window` points ending at each index; the first
/// points use whatever prefix is available.
pub fn rolling_median(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut buf: Vec<f64> = Vec::with_capacity(window);
    series
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let lo = (i + 1).saturating_sub(window);
            buf.clear();
            buf.extend_from_slice(&series[lo..=i]);
            buf.sort_by(f64::total_cmp);
            let n = buf.len();
            if n % 2 == 1 {
                buf[n / 2]
            } else {
                0.5 * (buf[n / 2 - 1] + buf[n / 2])
            }
        })
        .collect()
}
