//! Domain types and the closed-form pricing, reward and scarcity formulas.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every exogenous scalar of one market run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Reference market price (outside option of buyers).
    pub p_m: f64,
    /// Transport cost per km per unit.
    pub c_t: f64,
    /// Disposal penalty per unsold unit.
    pub c_d: f64,
    /// Target scarcity, total demand over total supply.
    pub s: f64,
    /// Firms per km².
    pub rho: f64,
    /// Cluster spread, as a fraction of the environment width.
    pub cs: f64,
    pub n_firms: usize,
    pub n_clusters: usize,
    pub buyer_fraction: f64,
    pub beta_range: (f64, f64),
    pub demand_range: (f64, f64),
    /// Number of bins in the seller action grid.
    pub k: usize,
    pub alpha: f64,
    pub tau_0: f64,
    pub tau_min: f64,
    pub decay: f64,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            p_m: 100.0,
            c_t: 0.1,
            c_d: 10.0,
            s: 2.0,
            rho: 0.001,
            cs: 1.0,
            n_firms: 40,
            n_clusters: 4,
            buyer_fraction: 0.5,
            beta_range: (0.8, 1.2),
            demand_range: (1.0, 10.0),
            k: 30,
            alpha: 0.8,
            tau_0: 0.5,
            tau_min: 0.01,
            decay: 0.996,
            horizon: 1000,
            seed: 0,
        }
    }
}

fn check(ok: bool, field: &'static str, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, reason))
    }
}

impl MarketParams {
    pub fn n_buyers(&self) -> usize {
        libm::floor(self.buyer_fraction * self.n_firms as f64) as usize
    }

    pub fn n_sellers(&self) -> usize {
        self.n_firms - self.n_buyers()
    }

    /// Side length of the square environment, `sqrt(n_firms / rho)`.
    pub fn width(&self) -> f64 {
        libm::sqrt(self.n_firms as f64 / self.rho)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.p_m.is_finite() && self.p_m > 0.0, "p_m", "must be > 0")?;
        check(self.c_t.is_finite() && self.c_t >= 0.0, "c_t", "must be >= 0")?;
        check(self.c_d.is_finite() && self.c_d >= 0.0, "c_d", "must be >= 0")?;
        check(self.s.is_finite() && self.s > 0.0, "s", "must be > 0")?;
        check(self.rho.is_finite() && self.rho > 0.0, "rho", "must be > 0")?;
        check((0.0..=1.0).contains(&self.cs), "cs", "must lie in [0, 1]")?;
        check(self.n_firms >= 2, "n_firms", "must be >= 2")?;
        check(self.n_clusters >= 1, "n_clusters", "must be >= 1")?;
        check(
            self.buyer_fraction > 0.0 && self.buyer_fraction < 1.0,
            "buyer_fraction",
            "must lie in (0, 1)",
        )?;
        check(
            self.n_buyers() >= 1 && self.n_sellers() >= 1,
            "buyer_fraction",
            "must leave at least one buyer and one seller",
        )?;
        let (b_lo, b_hi) = self.beta_range;
        check(
            b_lo.is_finite() && b_hi.is_finite() && b_lo > 0.0 && b_lo <= b_hi,
            "beta_range",
            "bounds must satisfy 0 < lo <= hi",
        )?;
        let (d_lo, d_hi) = self.demand_range;
        check(
            d_lo.is_finite() && d_hi.is_finite() && d_lo > 0.0 && d_lo <= d_hi,
            "demand_range",
            "bounds must satisfy 0 < lo <= hi",
        )?;
        check(self.k >= 2, "k", "action grid needs at least 2 bins")?;
        check((0.0..=1.0).contains(&self.alpha), "alpha", "must lie in [0, 1]")?;
        check(self.tau_min.is_finite() && self.tau_min > 0.0, "tau_min", "must be > 0")?;
        check(self.tau_0.is_finite() && self.tau_0 >= self.tau_min, "tau_0", "must be >= tau_min")?;
        check(self.decay > 0.0 && self.decay <= 1.0, "decay", "must lie in (0, 1]")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        libm::sqrt(dx * dx + dy * dy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Buyer {
    pub id: usize,
    pub position: Point,
    /// Demand per timestep.
    pub q_need: f64,
    /// Price tolerance multiplier: offers above `beta * p_m` are refused.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seller {
    pub id: usize,
    pub position: Point,
    /// Endowment per timestep.
    pub q_supply: f64,
    /// Current action, a 0-based index into the action grid.
    pub phi_index: usize,
}

/// Row-major buyer x seller matrix of distances in km.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n_buyers: usize,
    n_sellers: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_points(buyers: &[Point], sellers: &[Point]) -> Self {
        let mut data = Vec::with_capacity(buyers.len() * sellers.len());
        for b in buyers {
            for s in sellers {
                data.push(b.distance(s));
            }
        }
        DistanceMatrix { n_buyers: buyers.len(), n_sellers: sellers.len(), data }
    }

    #[inline]
    pub fn get(&self, buyer: usize, seller: usize) -> f64 {
        self.data[buyer * self.n_sellers + seller]
    }

    pub fn row(&self, buyer: usize) -> &[f64] {
        &self.data[buyer * self.n_sellers..(buyer + 1) * self.n_sellers]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_buyers, self.n_sellers)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> DistanceMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for s in 0..self.n_sellers {
            for b in 0..self.n_buyers {
                data.push(self.get(b, s));
            }
        }
        DistanceMatrix { n_buyers: self.n_sellers, n_sellers: self.n_buyers, data }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmLayout {
    pub buyers: Vec<Buyer>,
    pub sellers: Vec<Seller>,
    pub dist: DistanceMatrix,
    pub width: f64,
}

impl FirmLayout {
    /// Builds a layout from explicit agents, computing the distance matrix.
    pub fn new(buyers: Vec<Buyer>, sellers: Vec<Seller>, width: f64) -> Self {
        let bp: Vec<Point> = buyers.iter().map(|b| b.position).collect();
        let sp: Vec<Point> = sellers.iter().map(|s| s.position).collect();
        let dist = DistanceMatrix::from_points(&bp, &sp);
        FirmLayout { buyers, sellers, dist, width }
    }

    pub fn total_demand(&self) -> f64 {
        self.buyers.iter().fold(0.0, |acc, b| acc + b.q_need)
    }

    pub fn total_supply(&self) -> f64 {
        self.sellers.iter().fold(0.0, |acc, s| acc + s.q_supply)
    }
}

/// One executed trade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub buyer_id: usize,
    pub seller_id: usize,
    pub qty: f64,
    pub unit_price: f64,
    pub round: usize,
}

/// Delivered unit price `phi * p_m + d * c_t`.
#[inline]
pub fn price_of(phi: f64, p_m: f64, d_ij: f64, c_t: f64) -> f64 {
    phi * p_m + d_ij * c_t
}

/// Step reward of one seller: net revenue over its contracts minus the
/// disposal penalty on unsold units.
pub fn seller_reward(
    qtys: &[f64],
    prices: &[f64],
    transport_costs: &[f64],
    unsold: f64,
    c_d: f64,
) -> Result<f64> {
    if qtys.len() != prices.len() || qtys.len() != transport_costs.len() {
        return Err(Error::contract(format!(
            "seller_reward length mismatch: {} quantities, {} prices, {} transport costs",
            qtys.len(),
            prices.len(),
            transport_costs.len()
        )));
    }
    if !(unsold >= 0.0) {
        return Err(Error::contract(format!("unsold must be >= 0, got {unsold}")));
    }
    let mut net = 0.0;
    for ((q, p), c) in qtys.iter().zip(prices).zip(transport_costs) {
        net += q * (p - c);
    }
    Ok(net - unsold * c_d)
}

/// Total demand over total supply.
pub fn scarcity(buyers: &[Buyer], sellers: &[Seller]) -> Result<f64> {
    let supply: f64 = sellers.iter().map(|s| s.q_supply).sum();
    if supply <= 0.0 {
        return Err(Error::Domain("scarcity with zero total supply"));
    }
    let demand: f64 = buyers.iter().map(|b| b.q_need).sum();
    Ok(demand / supply)
}
