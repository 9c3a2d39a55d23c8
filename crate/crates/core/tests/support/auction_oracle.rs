//! Brute-force reference for the clearing protocol on small integer instances.
//!
//! Works on integer quantities and replays the protocol literally: buyers
//! scan sellers in id order keeping the first strictly cheaper qualifying
//! one, sellers serve proposals by scanning every remaining proposal for the
//! largest request (first buyer id wins), and rounds repeat until one clears
//! nothing.

#![allow(dead_code)]

use ismarket_core::auction::run_auction;
use ismarket_core::learning::build_grid;
use ismarket_core::rng;
use ismarket_core::{price_of, Buyer, FirmLayout, MarketParams, Point, Seller};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OracleContract {
    pub buyer: usize,
    pub seller: usize,
    pub qty: u64,
    pub price_bits: u64,
    pub round: usize,
}

/// `prices[i][j]` is the delivered price from seller `j` to buyer `i`.
pub fn clear(prices: &[Vec<f64>], tolerance: &[f64], need: &[u64], supply: &[u64]) -> Vec<OracleContract> {
    let mut need = need.to_vec();
    let mut stock = supply.to_vec();
    let mut out = Vec::new();
    let mut round = 0;
    loop {
        round += 1;
        assert!(round <= need.len() + stock.len() + 1, "oracle failed to terminate");
        // (buyer, seller, requested)
        let mut proposals: Vec<(usize, usize, u64)> = Vec::new();
        for i in 0..need.len() {
            if need[i] == 0 {
                continue;
            }
            let mut choice: Option<usize> = None;
            for j in 0..stock.len() {
                let ok = stock[j] > 0 && prices[i][j] <= tolerance[i];
                let better = match choice {
                    None => true,
                    Some(c) => prices[i][j] < prices[i][c],
                };
                if ok && better {
                    choice = Some(j);
                }
            }
            if let Some(j) = choice {
                proposals.push((i, j, need[i].min(stock[j])));
            }
        }
        let mut made = 0;
        for j in 0..stock.len() {
            let mut pending: Vec<(usize, u64)> =
                proposals.iter().filter(|p| p.1 == j).map(|p| (p.0, p.2)).collect();
            while stock[j] > 0 && !pending.is_empty() {
                let mut pick = 0;
                for (n, p) in pending.iter().enumerate() {
                    let cur = pending[pick];
                    if p.1 > cur.1 || (p.1 == cur.1 && p.0 < cur.0) {
                        pick = n;
                    }
                }
                let (i, want) = pending.remove(pick);
                let qty = want.min(stock[j]);
                stock[j] -= qty;
                need[i] -= qty;
                out.push(OracleContract { buyer: i, seller: j, qty, price_bits: prices[i][j].to_bits(), round });
                made += 1;
            }
        }
        if made == 0 {
            return out;
        }
    }
}

pub struct Instance {
    pub layout: FirmLayout,
    pub params: MarketParams,
    pub actions: Vec<f64>,
}

/// Small market on an integer lattice with a coarse price grid so that price
/// ties and partial fills are common: up to 4 buyers and 4 sellers, integer
/// quantities up to 8.
pub fn instance(seed: u64) -> Instance {
    let mut rng = rng::stream(seed, 0xA0C7);
    let nb = rng.random_range(1..=4);
    let ns = rng.random_range(1..=4);
    let at = |rng: &mut rng::SimRng| Point::new(rng.random_range(0..4) as f64, rng.random_range(0..4) as f64);
    let buyers = (0..nb)
        .map(|id| Buyer {
            id,
            position: at(&mut rng),
            q_need: rng.random_range(0..=8) as f64,
            beta: [0.8, 1.0, 1.2][rng.random_range(0..3)],
        })
        .collect();
    let sellers = (0..ns)
        .map(|id| Seller { id, position: at(&mut rng), q_supply: rng.random_range(0..=8) as f64, phi_index: 0 })
        .collect();
    let c_d = [0.0, 10.0, 40.0][rng.random_range(0..3)];
    let c_t = [0.0, 5.0, 20.0][rng.random_range(0..3)];
    let params = MarketParams { c_d, c_t, k: 5, ..MarketParams::default() };
    let grid = build_grid(5, c_d, params.p_m).unwrap();
    let actions = (0..ns).map(|_| grid.phi(rng.random_range(0..5))).collect();
    Instance { layout: FirmLayout::new(buyers, sellers, 4.0), params, actions }
}

/// Oracle contracts of an instance, sorted.
pub fn expected(inst: &Instance) -> Vec<OracleContract> {
    let l = &inst.layout;
    let prices: Vec<Vec<f64>> = (0..l.buyers.len())
        .map(|i| {
            (0..l.sellers.len())
                .map(|j| price_of(inst.actions[j], inst.params.p_m, l.dist.get(i, j), inst.params.c_t))
                .collect()
        })
        .collect();
    let tol: Vec<f64> = l.buyers.iter().map(|b| b.beta * inst.params.p_m).collect();
    let need: Vec<u64> = l.buyers.iter().map(|b| b.q_need as u64).collect();
    let supply: Vec<u64> = l.sellers.iter().map(|s| s.q_supply as u64).collect();
    let mut out = clear(&prices, &tol, &need, &supply);
    out.sort();
    out
}

/// Contracts produced by the library's auction, in the oracle's form, sorted.
/// `None` when a quantity is not a whole number.
pub fn actual(inst: &Instance) -> Option<Vec<OracleContract>> {
    let r = run_auction(&inst.layout, &inst.params, &inst.actions).ok()?;
    let mut out = Vec::with_capacity(r.contracts.len());
    for c in &r.contracts {
        if c.qty.fract() != 0.0 {
            return None;
        }
        out.push(OracleContract {
            buyer: c.buyer_id,
            seller: c.seller_id,
            qty: c.qty as u64,
            price_bits: c.unit_price.to_bits(),
            round: c.round,
        });
    }
    out.sort();
    Some(out)
}
