//! Decentralized multilateral auction clearing one timestep.
//!
//! Each round: every active seller bids its whole remaining quantity to every
//! active buyer at its delivered price; every active buyer proposes to the
//! single cheapest bid within its tolerance `beta * p_m` (ties go to the
//! smaller seller id); every seller confirms proposals in order of per-unit
//! margin, then larger requested quantity, then smaller buyer id, until its
//! inventory runs out, truncating the last one. Satisfied buyers and empty
//! sellers leave. Rounds repeat until one clears nothing.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{price_of, Contract, FirmLayout, MarketParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub seller_id: usize,
    pub buyer_id: usize,
    pub qty_available: f64,
    pub unit_price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub buyer_id: usize,
    pub seller_id: usize,
    pub qty_requested: f64,
    pub unit_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingResult {
    pub contracts: Vec<Contract>,
    /// Remaining inventory per seller.
    pub unsold: Vec<f64>,
    /// Remaining need per buyer.
    pub unmet: Vec<f64>,
    /// Rounds run, including the final round that cleared nothing.
    pub rounds: usize,
}

impl ClearingResult {
    pub fn traded_qty(&self) -> f64 {
        self.contracts.iter().fold(0.0, |acc, c| acc + c.qty)
    }
}

/// What happened in one round, for debugging and replay audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub bids_considered: usize,
    pub proposals: Vec<Proposal>,
    pub acceptances: Vec<Contract>,
}

pub fn run_auction(layout: &FirmLayout, params: &MarketParams, actions: &[f64]) -> Result<ClearingResult> {
    clear(layout, params, actions, None)
}

/// Same as [`run_auction`], reporting every round to `sink`.
pub fn run_auction_traced(
    layout: &FirmLayout,
    params: &MarketParams,
    actions: &[f64],
    sink: &mut dyn FnMut(RoundTrace),
) -> Result<ClearingResult> {
    clear(layout, params, actions, Some(sink))
}

/// Every bid a seller would post this round, for inspection.
pub fn bids(layout: &FirmLayout, params: &MarketParams, actions: &[f64], remaining: &[f64]) -> Vec<Bid> {
    let mut out = Vec::new();
    for (j, &phi) in actions.iter().enumerate() {
        if remaining[j] <= 0.0 {
            continue;
        }
        for i in 0..layout.buyers.len() {
            out.push(Bid {
                seller_id: j,
                buyer_id: i,
                qty_available: remaining[j],
                unit_price: price_of(phi, params.p_m, layout.dist.get(i, j), params.c_t),
            });
        }
    }
    out
}

fn clear(
    layout: &FirmLayout,
    params: &MarketParams,
    actions: &[f64],
    mut sink: Option<&mut dyn FnMut(RoundTrace)>,
) -> Result<ClearingResult> {
    let nb = layout.buyers.len();
    let ns = layout.sellers.len();
    if actions.len() != ns {
        return Err(Error::contract(format!("{} actions for {} sellers", actions.len(), ns)));
    }
    if let Some(j) = actions.iter().position(|a| !a.is_finite()) {
        return Err(Error::contract(format!("non-finite action for seller {j}")));
    }

    let mut need: Vec<f64> = layout.buyers.iter().map(|b| b.q_need).collect();
    let mut remaining: Vec<f64> = layout.sellers.iter().map(|s| s.q_supply).collect();
    let tolerance: Vec<f64> = layout.buyers.iter().map(|b| b.beta * params.p_m).collect();
    let mut prices = Vec::with_capacity(nb * ns);
    for i in 0..nb {
        let row = layout.dist.row(i);
        prices.extend(actions.iter().zip(row).map(|(&phi, &d)| price_of(phi, params.p_m, d, params.c_t)));
    }

    let cap = nb + ns;
    let mut contracts = Vec::new();
    let mut inbox: Vec<Vec<Proposal>> = vec![Vec::new(); ns];
    let mut round = 0;
    loop {
        round += 1;
        if round > cap {
            return Err(Error::RoundCap { cap });
        }
        for p in inbox.iter_mut() {
            p.clear();
        }

        let mut n_active_buyers = 0;
        let n_active_sellers = remaining.iter().filter(|&&q| q > 0.0).count();
        for i in 0..nb {
            if need[i] <= 0.0 {
                continue;
            }
            n_active_buyers += 1;
            let row = &prices[i * ns..(i + 1) * ns];
            let mut best: Option<usize> = None;
            for j in 0..ns {
                if remaining[j] <= 0.0 || row[j] > tolerance[i] {
                    continue;
                }
                if best.is_none_or(|b| row[j] < row[b]) {
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                inbox[j].push(Proposal {
                    buyer_id: i,
                    seller_id: j,
                    qty_requested: need[i].min(remaining[j]),
                    unit_price: row[j],
                });
            }
        }

        let executed_before = contracts.len();
        let mut trace_proposals = Vec::new();
        for j in 0..ns {
            let props = &mut inbox[j];
            if props.is_empty() {
                continue;
            }
            if sink.is_some() {
                trace_proposals.extend_from_slice(props);
            }
            // The per-unit margin p_ij - d_ij c_t equals phi_j p_m for every
            // proposal a seller receives, so the order falls through to quantity
            // and then buyer id.
            props.sort_by(|a, b| {
                b.qty_requested
                    .partial_cmp(&a.qty_requested)
                    .unwrap_or(Ordering::Equal)
                    .then(a.buyer_id.cmp(&b.buyer_id))
            });
            let mut inventory = remaining[j];
            for p in props.iter() {
                if inventory <= 0.0 {
                    break;
                }
                let qty = p.qty_requested.min(inventory);
                inventory -= qty;
                need[p.buyer_id] -= qty;
                contracts.push(Contract {
                    buyer_id: p.buyer_id,
                    seller_id: j,
                    qty,
                    unit_price: p.unit_price,
                    round,
                });
            }
            remaining[j] = inventory;
        }

        let executed = contracts.len() - executed_before;
        if let Some(sink) = sink.as_mut() {
            sink(RoundTrace {
                round,
                bids_considered: n_active_buyers * n_active_sellers,
                proposals: trace_proposals,
                acceptances: contracts[executed_before..].to_vec(),
            });
        }
        if executed == 0 {
            break;
        }
    }

    Ok(ClearingResult { contracts, unsold: remaining, unmet: need, rounds: round })
}
