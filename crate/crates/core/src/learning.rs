//! Seller pricing policy: a discrete grid of price multipliers, one
//! exponential-moving-average value estimate per grid point, and Boltzmann
//! sampling with an annealed temperature.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The `K` price multipliers a seller can play, evenly spaced from
/// `phi_min = -c_d / p_m` up to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub phi_min: f64,
    pub values: Vec<f64>,
}

impl ActionGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn phi(&self, index: usize) -> f64 {
        self.values[index]
    }
}

pub fn build_grid(k: usize, c_d: f64, p_m: f64) -> Result<ActionGrid> {
    if k < 2 {
        return Err(Error::config("k", "action grid needs at least 2 bins"));
    }
    if !(p_m > 0.0) {
        return Err(Error::config("p_m", "must be > 0"));
    }
    if !(c_d >= 0.0) {
        return Err(Error::config("c_d", "must be >= 0"));
    }
    let phi_min = -c_d / p_m;
    let span = 1.0 - phi_min;
    let last = (k - 1) as f64;
    let mut values: Vec<f64> = (0..k).map(|i| phi_min + (i as f64 / last) * span).collect();
    // Pin the top endpoint; the affine form can land one ulp off 1.
    values[k - 1] = 1.0;
    Ok(ActionGrid { phi_min, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub tau_0: f64,
    pub tau_min: f64,
    pub decay: f64,
}

impl TemperatureSchedule {
    /// `max(tau_min, tau_0 * decay^t)`, evaluated in closed form.
    pub fn at(&self, t: u64) -> f64 {
        let tau = self.tau_0 * libm::pow(self.decay, t as f64);
        if tau > self.tau_min {
            tau
        } else {
            self.tau_min
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    /// Value estimate per grid point, in currency.
    pub weights: Vec<f64>,
    /// Number of temperature advances so far.
    pub t: u64,
    pub tau: f64,
}

impl PolicyState {
    pub fn new(k: usize, schedule: &TemperatureSchedule) -> Self {
        PolicyState { weights: vec![0.0; k], t: 0, tau: schedule.at(0) }
    }

    /// EMA update of the chosen arm: `w <- alpha * w + (1 - alpha) * reward`.
    pub fn update_weights(&mut self, chosen: usize, reward: f64, alpha: f64) -> Result<()> {
        if chosen >= self.weights.len() {
            return Err(Error::contract(format!("arm {chosen} out of range 0..{}", self.weights.len())));
        }
        if !reward.is_finite() {
            return Err(Error::contract(format!("non-finite reward {reward}")));
        }
        let w = &mut self.weights[chosen];
        *w = alpha * *w + (1.0 - alpha) * reward;
        Ok(())
    }

    pub fn advance_temperature(&mut self, schedule: &TemperatureSchedule) {
        self.t += 1;
        self.tau = schedule.at(self.t);
    }

    /// Softmax probabilities of the weights divided by `reward_scale`.
    pub fn probabilities(&self, reward_scale: f64) -> Vec<f64> {
        softmax(&self.weights, self.tau * reward_scale)
    }

    /// Draws an arm from the softmax of `weights / reward_scale` at the
    /// current temperature.
    pub fn sample_action<R: Rng + ?Sized>(&self, rng: &mut R, reward_scale: f64) -> usize {
        sample_softmax(&self.weights, self.tau * reward_scale, rng)
    }
}

fn max_weight(weights: &[f64]) -> f64 {
    weights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn argmax(weights: &[f64]) -> usize {
    let mut best = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > weights[best] {
            best = i;
        }
    }
    best
}

/// `exp(w_k / tau) / sum_l exp(w_l / tau)`, shifted by the max weight.
pub fn softmax(weights: &[f64], tau: f64) -> Vec<f64> {
    if weights.is_empty() {
        return Vec::new();
    }
    if !(tau > 0.0) {
        let mut p = vec![0.0; weights.len()];
        p[argmax(weights)] = 1.0;
        return p;
    }
    let m = max_weight(weights);
    let mut p: Vec<f64> = weights.iter().map(|w| libm::exp((w - m) / tau)).collect();
    let z: f64 = p.iter().sum();
    for x in p.iter_mut() {
        *x /= z;
    }
    p
}

/// Inverse-CDF draw from the softmax without allocating.
pub fn sample_softmax<R: Rng + ?Sized>(weights: &[f64], tau: f64, rng: &mut R) -> usize {
    if !(tau > 0.0) {
        return argmax(weights);
    }
    let m = max_weight(weights);
    let z: f64 = weights.iter().map(|w| libm::exp((w - m) / tau)).sum();
    let target = rng.random::<f64>() * z;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += libm::exp((w - m) / tau);
        if target < acc {
            return i;
        }
    }
    weights.len() - 1
}
