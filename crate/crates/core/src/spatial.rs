//! Clustered firm layouts on a square environment.

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Buyer, DistanceMatrix, FirmLayout, MarketParams, Point, Seller};
use crate::rng::{self, STREAM_LAYOUT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSpec {
    pub n_firms: usize,
    pub n_clusters: usize,
    /// Firms per km².
    pub rho: f64,
    /// Std-dev of positions around their cluster center, relative to the width.
    pub cs: f64,
    pub seed: u64,
}

impl LayoutSpec {
    pub fn from_params(params: &MarketParams) -> Self {
        LayoutSpec {
            n_firms: params.n_firms,
            n_clusters: params.n_clusters,
            rho: params.rho,
            cs: params.cs,
            seed: params.seed,
        }
    }

    /// Environment side length in km, `sqrt(n_firms / rho)`.
    pub fn width(&self) -> f64 {
        libm::sqrt(self.n_firms as f64 / self.rho)
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::config("rho", "must be > 0"));
        }
        if self.n_firms < 2 {
            return Err(Error::config("n_firms", "must be >= 2"));
        }
        if self.n_clusters == 0 {
            return Err(Error::config("n_clusters", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.cs) {
            return Err(Error::config("cs", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Folds `x` back into `[0, width]` by mirror reflection at both walls.
fn reflect(x: f64, width: f64) -> f64 {
    if width <= 0.0 {
        return 0.0;
    }
    if (0.0..=width).contains(&x) {
        return x;
    }
    let period = 2.0 * width;
    let mut m = libm::fmod(x, period);
    if m < 0.0 {
        m += period;
    }
    let folded = if m > width { period - m } else { m };
    folded.clamp(0.0, width)
}

/// Draws cluster centers uniformly over the square, assigns firms to clusters
/// round-robin, scatters each firm around its center with Gaussian noise of
/// std-dev `cs * width` per axis (reflected at the walls), then shuffles firm
/// indices and makes the first `floor(buyer_fraction * n_firms)` buyers.
///
/// Buyers come back with `q_need = 0` and `beta = 1`; endowments are filled
/// in by [`crate::simulation::build_population`].
pub fn generate_layout(spec: &LayoutSpec, buyer_fraction: f64) -> Result<FirmLayout> {
    spec.validate()?;
    let n_buyers = libm::floor(buyer_fraction * spec.n_firms as f64) as usize;
    if !(buyer_fraction > 0.0 && buyer_fraction < 1.0) || n_buyers == 0 || n_buyers >= spec.n_firms {
        return Err(Error::config("buyer_fraction", "must leave at least one buyer and one seller"));
    }

    let width = spec.width();
    let sd = spec.cs * width;
    let mut rng = rng::stream(spec.seed, STREAM_LAYOUT);

    let centers: Vec<Point> = (0..spec.n_clusters)
        .map(|_| {
            let x = rng.random::<f64>() * width;
            let y = rng.random::<f64>() * width;
            Point::new(x, y)
        })
        .collect();

    let positions: Vec<Point> = (0..spec.n_firms)
        .map(|i| {
            let c = centers[i % spec.n_clusters];
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            Point::new(reflect(c.x + sd * zx, width), reflect(c.y + sd * zy, width))
        })
        .collect();

    let mut order: Vec<usize> = (0..spec.n_firms).collect();
    order.shuffle(&mut rng);

    let buyers: Vec<Buyer> = order[..n_buyers]
        .iter()
        .enumerate()
        .map(|(id, &f)| Buyer { id, position: positions[f], q_need: 0.0, beta: 1.0 })
        .collect();
    let sellers: Vec<Seller> = order[n_buyers..]
        .iter()
        .enumerate()
        .map(|(id, &f)| Seller { id, position: positions[f], q_supply: 0.0, phi_index: 0 })
        .collect();

    Ok(FirmLayout::new(buyers, sellers, width))
}

/// Buyer x seller Euclidean distances.
pub fn distance_matrix(buyers: &[Point], sellers: &[Point]) -> DistanceMatrix {
    DistanceMatrix::from_points(buyers, sellers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(cs: f64, rho: f64, seed: u64) -> LayoutSpec {
        LayoutSpec { n_firms: 40, n_clusters: 4, rho, cs, seed }
    }

    #[test]
    fn width_from_density() {
        let w = spec(0.5, 0.001, 0).width();
        assert!((w - 200.0).abs() < 1e-9);
        assert_eq!(w, libm::sqrt(40.0 / 0.001));
    }

    #[test]
    fn zero_spread_collapses_clusters() {
        let spec = LayoutSpec { n_firms: 40, n_clusters: 4, rho: 0.001, cs: 0.0, seed: 3 };
        let layout = generate_layout(&spec, 0.5).unwrap();
        let mut all: Vec<Point> = layout.buyers.iter().map(|b| b.position).collect();
        all.extend(layout.sellers.iter().map(|s| s.position));
        let mut distinct: Vec<Point> = Vec::new();
        for p in all {
            if !distinct.contains(&p) {
                distinct.push(p);
            }
        }
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn full_spread_is_near_uniform() {
        let width = 100.0;
        let mut rng = rng::stream(11, 0);
        let n = 10_000;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            let c = rng.random::<f64>() * width;
            let z: f64 = rng.sample(StandardNormal);
            xs.push(reflect(c + width * z, width));
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        let uniform_sd = width / libm::sqrt(12.0);
        assert!((libm::sqrt(var) / uniform_sd - 1.0).abs() < 0.10);

        // Same check through the generator itself, pooling layouts.
        let mut pooled = Vec::new();
        for seed in 0..250 {
            let l = generate_layout(&LayoutSpec { n_firms: 40, n_clusters: 1, rho: 0.004, cs: 1.0, seed }, 0.5).unwrap();
            pooled.extend(l.buyers.iter().map(|b| b.position.x / l.width));
            pooled.extend(l.sellers.iter().map(|s| s.position.x / l.width));
        }
        let m = pooled.iter().sum::<f64>() / pooled.len() as f64;
        let v = pooled.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (pooled.len() - 1) as f64;
        assert!((libm::sqrt(v) * libm::sqrt(12.0) - 1.0).abs() < 0.10);
    }

    #[test]
    fn reflect_stays_inside() {
        for &x in &[-250.0, -1.0, 0.0, 3.0, 100.0, 101.0, 399.0, 1e6] {
            let r = reflect(x, 100.0);
            assert!((0.0..=100.0).contains(&r), "{x} -> {r}");
        }
        assert_eq!(reflect(-1.0, 100.0), 1.0);
        assert_eq!(reflect(101.0, 100.0), 99.0);
    }

    #[test]
    fn layout_invariants() {
        for seed in 0..20 {
            let l = generate_layout(&spec(0.3, 0.001, seed), 0.5).unwrap();
            assert_eq!(l.buyers.len(), 20);
            assert_eq!(l.sellers.len(), 20);
            let diag = l.width * libm::sqrt(2.0);
            for (i, b) in l.buyers.iter().enumerate() {
                assert!((0.0..=l.width).contains(&b.position.x) && (0.0..=l.width).contains(&b.position.y));
                for (j, s) in l.sellers.iter().enumerate() {
                    let d = l.dist.get(i, j);
                    assert!(d <= diag);
                    let oracle = libm::hypot(b.position.x - s.position.x, b.position.y - s.position.y);
                    assert!((d - oracle).abs() <= 1e-9 * oracle.max(1.0));
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_layout(&spec(0.2, 0.01, 99), 0.5).unwrap();
        let b = generate_layout(&spec(0.2, 0.01, 99), 0.5).unwrap();
        assert_eq!(a, b);
        let c = generate_layout(&spec(0.2, 0.01, 100), 0.5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn denser_layouts_are_smaller() {
        let mut prev_width = f64::INFINITY;
        let mut prev_mean = f64::INFINITY;
        for &rho in &[1e-4, 1e-3, 1e-2, 1e-1] {
            let mut sum = 0.0;
            let mut count = 0.0;
            for seed in 0..30 {
                let l = generate_layout(&spec(0.4, rho, seed), 0.5).unwrap();
                for i in 0..l.buyers.len() {
                    for j in 0..l.sellers.len() {
                        sum += l.dist.get(i, j);
                        count += 1.0;
                    }
                }
                assert!(l.width < prev_width);
            }
            let mean = sum / count;
            assert!(mean <= prev_mean);
            prev_width = spec(0.4, rho, 0).width();
            prev_mean = mean;
        }
    }

    #[test]
    fn config_errors() {
        assert!(matches!(generate_layout(&spec(0.1, 0.0, 0), 0.5), Err(Error::Config { field: "rho", .. })));
        let tiny = LayoutSpec { n_firms: 1, n_clusters: 1, rho: 1.0, cs: 0.1, seed: 0 };
        assert!(matches!(generate_layout(&tiny, 0.5), Err(Error::Config { field: "n_firms", .. })));
    }

    #[test]
    fn distance_examples() {
        let d = distance_matrix(&[Point::new(0.0, 0.0)], &[Point::new(3.0, 4.0)]);
        assert_eq!(d.get(0, 0), 5.0);
        let d = distance_matrix(&[Point::new(2.5, -1.0)], &[Point::new(2.5, -1.0)]);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn distance_matches_pairwise_oracle() {
        let mut rng = rng::stream(5, 0);
        let mut pts = |n: usize| -> Vec<Point> {
            (0..n).map(|_| Point::new(rng.random::<f64>() * 50.0, rng.random::<f64>() * 50.0)).collect()
        };
        let b = pts(3);
        let s = pts(2);
        let d = distance_matrix(&b, &s);
        assert_eq!(d.shape(), (3, 2));
        for i in 0..3 {
            for j in 0..2 {
                let dx = b[i].x - s[j].x;
                let dy = b[i].y - s[j].y;
                let oracle = libm::pow(dx * dx + dy * dy, 0.5);
                assert!((d.get(i, j) - oracle).abs() < 1e-12);
            }
        }
    }
}
