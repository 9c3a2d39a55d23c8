//! Symbiosis index and market aggregates.

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::auction::ClearingResult;
use crate::error::{Error, Result};
use crate::market::{Contract, FirmLayout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketAggregates {
    pub q_bought: f64,
    pub q_to_sell: f64,
    pub q_needed: f64,
    pub mean_price: Option<f64>,
}

impl MarketAggregates {
    pub fn from_clearing(layout: &FirmLayout, result: &ClearingResult) -> Self {
        MarketAggregates {
            q_bought: result.traded_qty(),
            q_to_sell: layout.total_supply(),
            q_needed: layout.total_demand(),
            mean_price: weighted_mean_price(&result.contracts),
        }
    }

    pub fn symbiosis_index(&self) -> Result<f64> {
        symbiosis_index(self.q_bought, self.q_to_sell, self.q_needed)
    }
}

/// Relative slack for `q_bought` exceeding the feasible volume, which happens
/// when the two totals are summed in different orders.
const ROUNDING_SLACK: f64 = 1e-9;

/// `q_bought / min(q_to_sell, q_needed)`; 1 when there is nothing to exchange.
pub fn symbiosis_index(q_bought: f64, q_to_sell: f64, q_needed: f64) -> Result<f64> {
    if !(q_bought >= 0.0 && q_to_sell >= 0.0 && q_needed >= 0.0) {
        return Err(Error::contract(format!(
            "symbiosis index needs non-negative quantities, got ({q_bought}, {q_to_sell}, {q_needed})"
        )));
    }
    let feasible = q_to_sell.min(q_needed);
    if feasible == 0.0 {
        return Ok(1.0);
    }
    let si = q_bought / feasible;
    if si > 1.0 + ROUNDING_SLACK {
        return Err(Error::contract(format!("bought {q_bought} exceeds the feasible volume {feasible}")));
    }
    Ok(si.min(1.0))
}

/// Quantity-weighted mean unit price, `None` when nothing traded.
pub fn weighted_mean_price(contracts: &[Contract]) -> Option<f64> {
    let mut value = 0.0;
    let mut qty = 0.0;
    for c in contracts {
        value += c.qty * c.unit_price;
        qty += c.qty;
    }
    if qty > 0.0 {
        Some(value / qty)
    } else {
        None
    }
}
