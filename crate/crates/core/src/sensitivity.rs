//! Global sensitivity analysis by direct simulation. Sobol indices come from
//! Saltelli designs; partial dependence and ICE curves sweep one parameter
//! over Latin hypercube backgrounds.
//!
//! Designs are built and consumed separately from model evaluation so that a
//! caller can evaluate rows in any order (or in parallel) and hand back the
//! outputs keyed by row.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::rng::{self, derive_seed, STREAM_DESIGN};
use crate::simulation::run;
use crate::simulation::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    Linear,
    Log2,
    Log10,
}

impl Scale {
    fn forward(self, x: f64) -> f64 {
        match self {
            Scale::Linear => x,
            Scale::Log2 => libm::log2(x),
            Scale::Log10 => libm::log10(x),
        }
    }

    fn inverse(self, y: f64) -> f64 {
        match self {
            Scale::Linear => y,
            Scale::Log2 => libm::exp2(y),
            Scale::Log10 => libm::pow(10.0, y),
        }
    }
}

/// One swept parameter: bounds in natural units, sampled uniformly in the
/// transformed space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
}

impl Dimension {
    pub fn new(name: &str, lo: f64, hi: f64, scale: Scale) -> Self {
        Dimension { name: name.to_string(), lo, hi, scale }
    }

    /// Maps `u` in `[0, 1]` to natural units; the result never leaves `[lo, hi]`.
    pub fn from_unit(&self, u: f64) -> f64 {
        let a = self.scale.forward(self.lo);
        let b = self.scale.forward(self.hi);
        let x = self.scale.inverse(a + u.clamp(0.0, 1.0) * (b - a));
        x.clamp(self.lo, self.hi)
    }

    pub fn to_unit(&self, x: f64) -> f64 {
        let a = self.scale.forward(self.lo);
        let b = self.scale.forward(self.hi);
        if b == a {
            return 0.0;
        }
        (self.scale.forward(x) - a) / (b - a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub dims: Vec<Dimension>,
}

pub const DENSITY: &str = "rho";

impl ParamSpace {
    /// Disposal cost, scarcity (log2), density (log10), cluster spread and
    /// transport cost, in that order.
    pub fn standard() -> Self {
        ParamSpace {
            dims: vec![
                Dimension::new("c_d", 0.0, 200.0, Scale::Linear),
                Dimension::new("s", 0.25, 2.0, Scale::Log2),
                Dimension::new(DENSITY, 1e-5, 1e-1, Scale::Log10),
                Dimension::new("cs", 0.0, 0.5, Scale::Linear),
                Dimension::new("c_t", 0.0, 10.0, Scale::Linear),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.dims.iter().map(|d| d.name.clone()).collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(u).map(|(d, &x)| d.from_unit(x)).collect()
    }
}

/// Writes a design point into a copy of `base`. Dimension names must be
/// `MarketParams` fields among `c_d`, `s`, `rho`, `cs`, `c_t`, `p_m`, `alpha`.
pub fn apply_point(base: &MarketParams, space: &ParamSpace, point: &[f64]) -> Result<MarketParams> {
    let mut p = base.clone();
    for (d, &x) in space.dims.iter().zip(point) {
        match d.name.as_str() {
            "c_d" => p.c_d = x,
            "s" => p.s = x,
            "rho" => p.rho = x,
            "cs" => p.cs = x,
            "c_t" => p.c_t = x,
            "p_m" => p.p_m = x,
            "alpha" => p.alpha = x,
            other => return Err(Error::contract(format!("dimension `{other}` is not a sweepable parameter"))),
        }
    }
    Ok(p)
}

/// Latin hypercube in the unit cube: every axis cut into `n` equal bins with
/// exactly one jittered point per bin, bins paired at random across axes.
pub fn lhs_unit<R: Rng + ?Sized>(n: usize, dims: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; dims]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for d in 0..dims {
        perm.shuffle(rng);
        for (row, &bin) in out.iter_mut().zip(&perm) {
            row[d] = (bin as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    out
}

/// Latin hypercube over `space`, stratified in the transformed coordinates.
pub fn lhs_sample(space: &ParamSpace, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, STREAM_DESIGN);
    lhs_unit(n, space.len(), &mut rng).iter().map(|u| space.from_unit(u)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    A,
    B,
    /// A with column `i` taken from B.
    AB(usize),
    /// B with column `i` taken from A.
    BA(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub block: Block,
    /// Base sample index within the block.
    pub sample: usize,
    pub point: Vec<f64>,
}

/// Saltelli design: blocks A, B, AB_1..AB_k and, with second order, BA_1..BA_k,
/// each `base_n` rows long and stored block after block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaltelliDesign {
    pub base_n: usize,
    pub names: Vec<String>,
    pub second_order: bool,
    pub rows: Vec<DesignRow>,
}

impl SaltelliDesign {
    pub fn new(space: &ParamSpace, base_n: usize, seed: u64, second_order: bool) -> Result<Self> {
        let k = space.len();
        if base_n == 0 || base_n > 1 << 16 {
            return Err(Error::config("base_n", "must lie in 1..=65536"));
        }
        if k == 0 || 2 * k > 256 {
            return Err(Error::config("space", "needs 1..=128 dimensions"));
        }
        let scramble = (seed ^ (seed >> 32)) as u32;
        let unit = |i: usize, dim: usize| sobol_burley::sample(i as u32, dim as u32, scramble) as f64;
        let a: Vec<Vec<f64>> = (0..base_n).map(|i| (0..k).map(|d| unit(i, d)).collect()).collect();
        let b: Vec<Vec<f64>> = (0..base_n).map(|i| (0..k).map(|d| unit(i, k + d)).collect()).collect();

        let mut blocks = vec![Block::A, Block::B];
        blocks.extend((0..k).map(Block::AB));
        if second_order {
            blocks.extend((0..k).map(Block::BA));
        }
        let mut rows = Vec::with_capacity(blocks.len() * base_n);
        for &block in &blocks {
            for i in 0..base_n {
                let u = match block {
                    Block::A => a[i].clone(),
                    Block::B => b[i].clone(),
                    Block::AB(c) => {
                        let mut r = a[i].clone();
                        r[c] = b[i][c];
                        r
                    }
                    Block::BA(c) => {
                        let mut r = b[i].clone();
                        r[c] = a[i][c];
                        r
                    }
                };
                rows.push(DesignRow { block, sample: i, point: space.from_unit(&u) });
            }
        }
        Ok(SaltelliDesign { base_n, names: space.names(), second_order, rows })
    }

    pub fn k(&self) -> usize {
        self.names.len()
    }

    /// `base_n * (k + 2)`, or `base_n * (2k + 2)` with second order.
    pub fn evaluations(&self) -> usize {
        let k = self.k();
        self.base_n * if self.second_order { 2 * k + 2 } else { k + 2 }
    }

    fn block_offset(&self, block: Block) -> usize {
        let k = self.k();
        let idx = match block {
            Block::A => 0,
            Block::B => 1,
            Block::AB(i) => 2 + i,
            Block::BA(i) => 2 + k + i,
        };
        idx * self.base_n
    }

    fn block<'a>(&self, y: &'a [f64], block: Block) -> &'a [f64] {
        let o = self.block_offset(block);
        &y[o..o + self.base_n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolIndices {
    pub names: Vec<String>,
    pub s1: Vec<f64>,
    pub st: Vec<f64>,
    /// Pairwise second-order indices, `s2[i][j]` for `i < j`; zero elsewhere.
    pub s2: Option<Vec<Vec<f64>>>,
    pub variance: f64,
    /// Set when the output had zero variance and every index was reported as 0.
    pub degenerate: bool,
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    xs.sum::<f64>() / n as f64
}

/// First order by the Saltelli (2010) estimator, total order by Jansen's,
/// second order by the AB/BA cross products.
pub fn estimate_indices(design: &SaltelliDesign, y: &[f64]) -> Result<SobolIndices> {
    if y.len() != design.rows.len() {
        return Err(Error::contract(format!("{} outputs for {} design rows", y.len(), design.rows.len())));
    }
    if design.base_n < 2 {
        return Err(Error::config("base_n", "need at least 2 base samples to estimate indices"));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::contract(format!("non-finite output at design row {i}")));
    }
    let n = design.base_n;
    let k = design.k();
    let ya = design.block(y, Block::A);
    let yb = design.block(y, Block::B);
    let both = || ya.iter().chain(yb).copied();
    let mu = mean(both(), 2 * n);
    let variance = mean(both().map(|v| (v - mu) * (v - mu)), 2 * n);

    let scale = mu.abs().max(1.0);
    if !(variance > 1e-24 * scale * scale) {
        return Ok(SobolIndices {
            names: design.names.clone(),
            s1: vec![0.0; k],
            st: vec![0.0; k],
            s2: design.second_order.then(|| vec![vec![0.0; k]; k]),
            variance: 0.0,
            degenerate: true,
        });
    }

    let mut s1 = Vec::with_capacity(k);
    let mut st = Vec::with_capacity(k);
    for i in 0..k {
        let yab = design.block(y, Block::AB(i));
        s1.push(mean((0..n).map(|r| yb[r] * (yab[r] - ya[r])), n) / variance);
        st.push(0.5 * mean((0..n).map(|r| (ya[r] - yab[r]) * (ya[r] - yab[r])), n) / variance);
    }

    let s2 = design.second_order.then(|| {
        let mut m = vec![vec![0.0; k]; k];
        for i in 0..k {
            let yba = design.block(y, Block::BA(i));
            for j in (i + 1)..k {
                let yab = design.block(y, Block::AB(j));
                let vij = mean((0..n).map(|r| yba[r] * yab[r] - ya[r] * yb[r]), n) / variance;
                m[i][j] = vij - s1[i] - s1[j];
            }
        }
        m
    });

    Ok(SobolIndices { names: design.names.clone(), s1, st, s2, variance, degenerate: false })
}

/// Builds the design and evaluates `model` on every row in order, then
/// estimates indices for each of its `M` outputs.
pub fn sobol_estimate<F, const M: usize>(
    space: &ParamSpace,
    base_n: usize,
    seed: u64,
    second_order: bool,
    mut model: F,
) -> Result<[SobolIndices; M]>
where
    F: FnMut(usize, &[f64]) -> Result<[f64; M]>,
{
    let design = SaltelliDesign::new(space, base_n, seed, second_order)?;
    let mut ys: Vec<Vec<f64>> = vec![Vec::with_capacity(design.rows.len()); M];
    for (i, row) in design.rows.iter().enumerate() {
        let out = model(i, &row.point)?;
        for (col, v) in ys.iter_mut().zip(out) {
            col.push(v);
        }
    }
    let mut result = Vec::with_capacity(M);
    for y in &ys {
        result.push(estimate_indices(&design, y)?);
    }
    result
        .try_into()
        .map_err(|_| Error::contract("output count mismatch"))
}

/// Simulator outputs fed to the sensitivity pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub si: f64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub point: Vec<f64>,
    pub replicate: usize,
    pub final_si: f64,
    /// Late-run price; `p_m` (the buyers' outside option) when nothing traded.
    pub final_price: f64,
}

/// The simulator as a deterministic function of a design point: runs
/// `replicates` independent markets and averages their late-run outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioModel {
    pub base: MarketParams,
    pub space: ParamSpace,
    pub replicates: usize,
    /// Trailing window, in timesteps, that defines "final" outcomes.
    pub window: usize,
}

impl ScenarioModel {
    pub fn new(base: MarketParams, space: ParamSpace) -> Self {
        ScenarioModel { base, space, replicates: 2, window: 100 }
    }

    pub fn outcome(&self, point: &[f64], replicate: usize, row_seed: u64) -> Result<ScenarioOutcome> {
        let mut params = apply_point(&self.base, &self.space, point)?;
        params.seed = derive_seed(row_seed, replicate as u64);
        let result = run(&RunConfig::new(params.clone()))?;
        let late = result.late_summary(self.window);
        Ok(ScenarioOutcome {
            point: point.to_vec(),
            replicate,
            final_si: late.si,
            final_price: late.price.unwrap_or(params.p_m),
        })
    }

    pub fn evaluate(&self, point: &[f64], row_seed: u64) -> Result<ModelOutput> {
        let reps = self.replicates.max(1);
        let mut si = 0.0;
        let mut price = 0.0;
        for r in 0..reps {
            let o = self.outcome(point, r, row_seed)?;
            si += o.final_si;
            price += o.final_price;
        }
        Ok(ModelOutput { si: si / reps as f64, price: price / reps as f64 })
    }

    /// Seed for design row `row` under master seed `seed`.
    pub fn row_seed(seed: u64, row: usize) -> u64 {
        derive_seed(seed, row as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Line {
    Ice(usize),
    Pdp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpPoint {
    pub level: usize,
    pub line: usize,
    pub grid: usize,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpRow {
    pub density_level: f64,
    pub line: Line,
    pub sweep_value: f64,
    pub si: f64,
    pub price: f64,
}

/// Evaluation plan for PDP/ICE curves: per density level, `background_n`
/// Latin hypercube points over the dimensions other than density and the
/// swept one, each swept across `grid_n` evenly spaced values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpDesign {
    pub sweep_dim: usize,
    pub levels: Vec<f64>,
    pub grid: Vec<f64>,
    pub background_n: usize,
    pub points: Vec<PdpPoint>,
}

impl PdpDesign {
    pub fn new(
        space: &ParamSpace,
        sweep: &str,
        levels: &[f64],
        grid_n: usize,
        background_n: usize,
        seed: u64,
    ) -> Result<Self> {
        let sweep_dim = space
            .index_of(sweep)
            .ok_or_else(|| Error::config("sweep_dim", format!("`{sweep}` is not a dimension of the space")))?;
        let density = space
            .index_of(DENSITY)
            .ok_or_else(|| Error::config("space", "needs a density dimension"))?;
        if sweep_dim == density {
            return Err(Error::config("sweep_dim", "density is held at fixed levels and cannot be swept"));
        }
        if grid_n < 2 {
            return Err(Error::config("grid_n", "must be >= 2"));
        }
        if background_n == 0 || levels.is_empty() {
            return Err(Error::config("background_n", "need at least one background point and one level"));
        }
        let dim = &space.dims[sweep_dim];
        let grid: Vec<f64> = (0..grid_n).map(|g| dim.from_unit(g as f64 / (grid_n - 1) as f64)).collect();
        let others: Vec<usize> = (0..space.len()).filter(|&d| d != sweep_dim && d != density).collect();

        let mut points = Vec::with_capacity(levels.len() * background_n * grid_n);
        for (li, &level) in levels.iter().enumerate() {
            let mut rng = rng::stream(derive_seed(seed, li as u64), STREAM_DESIGN);
            let background = lhs_unit(background_n, others.len(), &mut rng);
            for (line, u) in background.iter().enumerate() {
                for (g, &x) in grid.iter().enumerate() {
                    let mut point = vec![0.0; space.len()];
                    for (slot, &d) in others.iter().enumerate() {
                        point[d] = space.dims[d].from_unit(u[slot]);
                    }
                    point[density] = level;
                    point[sweep_dim] = x;
                    points.push(PdpPoint { level: li, line, grid: g, point });
                }
            }
        }
        Ok(PdpDesign { sweep_dim, levels: levels.to_vec(), grid, background_n, points })
    }

    /// ICE rows for every evaluated point followed, per level, by the PDP
    /// (pointwise mean over that level's ICE lines).
    pub fn assemble(&self, outputs: &[ModelOutput]) -> Result<Vec<PdpRow>> {
        if outputs.len() != self.points.len() {
            return Err(Error::contract(format!("{} outputs for {} PDP points", outputs.len(), self.points.len())));
        }
        let grid_n = self.grid.len();
        let mut rows = Vec::with_capacity(self.levels.len() * (self.background_n + 1) * grid_n);
        for (li, &level) in self.levels.iter().enumerate() {
            let mut si_sum = vec![0.0; grid_n];
            let mut price_sum = vec![0.0; grid_n];
            for (p, o) in self.points.iter().zip(outputs).filter(|(p, _)| p.level == li) {
                si_sum[p.grid] += o.si;
                price_sum[p.grid] += o.price;
                rows.push(PdpRow {
                    density_level: level,
                    line: Line::Ice(p.line),
                    sweep_value: self.grid[p.grid],
                    si: o.si,
                    price: o.price,
                });
            }
            let n = self.background_n as f64;
            for g in 0..grid_n {
                rows.push(PdpRow {
                    density_level: level,
                    line: Line::Pdp,
                    sweep_value: self.grid[g],
                    si: si_sum[g] / n,
                    price: price_sum[g] / n,
                });
            }
        }
        Ok(rows)
    }
}

/// Builds the design, evaluates `model` on every point in order and assembles
/// the ICE/PDP table.
pub fn pdp_ice<F>(
    space: &ParamSpace,
    sweep: &str,
    levels: &[f64],
    grid_n: usize,
    background_n: usize,
    seed: u64,
    mut model: F,
) -> Result<Vec<PdpRow>>
where
    F: FnMut(usize, &[f64]) -> Result<ModelOutput>,
{
    let design = PdpDesign::new(space, sweep, levels, grid_n, background_n, seed)?;
    let outputs = design
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| model(i, &p.point))
        .collect::<Result<Vec<_>>>()?;
    design.assemble(&outputs)
}
