//! One function per subcommand. Each writes its files into an output
//! directory and returns the manifest it wrote.

use std::path::Path;
use std::time::Instant;

use ismarket_core::regret::rolling_median;
use ismarket_core::rng::derive_seed;
use ismarket_core::sensitivity::{
    estimate_indices, Block, Line, ModelOutput, ParamSpace, PdpDesign, SaltelliDesign, ScenarioModel, ScenarioOutcome,
};
use ismarket_core::simulation::{build_population, run, RegretMode, RunResult};
use ismarket_core::MarketParams;
use serde::Serialize;
use serde_json::json;

use crate::batch::{partition, run_batch};
use crate::config::{apply_numeric, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::output::{opt, Manifest, OutDir, Timing};

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

fn fail_if_any(manifest: &Manifest) -> CliResult<()> {
    if manifest.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Run(format!(
            "{} job(s) failed, details in manifest.json: {}",
            manifest.failures.len(),
            manifest.failures[0]
        )))
    }
}

pub const TIMESERIES_COLUMNS: [&str; 6] = ["t", "mean_price", "si", "total_reward", "total_regret", "tau"];

pub fn timeseries_rows(result: &RunResult) -> impl Iterator<Item = Vec<String>> + '_ {
    result.records.iter().map(|r| {
        vec![
            r.t.to_string(),
            opt(r.mean_price),
            r.si.to_string(),
            r.total_reward().to_string(),
            opt(r.total_regret),
            r.tau.to_string(),
        ]
    })
}

/// A single run: `timeseries.csv`, plus `contracts.jsonl` and `policies.jsonl`
/// when contracts or snapshots are enabled.
pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path) -> CliResult<Manifest> {
    let mut out = OutDir::create(out_dir)?;
    let started = Instant::now();
    let result = run(&cfg.run_config(cfg.params.clone()))?;
    let elapsed = started.elapsed().as_secs_f64();

    out.write_csv("timeseries.csv", &header(&TIMESERIES_COLUMNS), timeseries_rows(&result))?;
    if let Some(contracts) = &result.contracts {
        out.write_jsonl("contracts.jsonl", contracts)?;
    }
    if !result.snapshots.is_empty() {
        out.write_jsonl("policies.jsonl", &result.snapshots)?;
    }
    let timing = Timing::new(started, vec![elapsed], 1);
    let manifest = Manifest::new("run", cfg, vec![cfg.params.seed], json!({}), timing);
    out.finish(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    /// Swept fields and their values; cells are the cartesian product with
    /// the last field varying fastest.
    pub grid: Vec<(String, Vec<f64>)>,
    pub replicates: usize,
    /// Trailing timesteps that define a run's final price and SI.
    pub window: usize,
    /// Also write every run's time series under `runs/`.
    pub per_run: bool,
}

impl SweepSpec {
    pub fn cells(&self) -> Vec<Vec<f64>> {
        let mut cells = vec![Vec::new()];
        for (_, values) in &self.grid {
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&v| {
                        let mut c = prefix.clone();
                        c.push(v);
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RunSummary {
    final_price: Option<f64>,
    final_si: f64,
    traded_qty: f64,
    seconds: f64,
    series: Option<Vec<Vec<String>>>,
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

/// Grid sweep with replicates. Replicate `r` of every cell uses seed
/// `derive_seed(master, r)`, so cells are compared on common random numbers.
pub fn cmd_sweep(cfg: &ExperimentConfig, spec: &SweepSpec, workers: usize, out_dir: &Path) -> CliResult<Manifest> {
    if spec.replicates == 0 {
        return Err(CliError::config("replicates must be >= 1"));
    }
    if spec.grid.is_empty() || spec.grid.iter().any(|(_, v)| v.is_empty()) {
        return Err(CliError::config("every grid field needs at least one value"));
    }
    let cells = spec.cells();
    let cell_params: Vec<MarketParams> = cells
        .iter()
        .map(|values| {
            spec.grid.iter().zip(values).try_fold(cfg.params.clone(), |p, ((key, _), &v)| apply_numeric(&p, key, v))
        })
        .collect::<CliResult<_>>()?;
    let master = cfg.params.seed;
    let seeds: Vec<u64> = (0..spec.replicates).map(|r| derive_seed(master, r as u64)).collect();
    let n_runs = cells.len() * spec.replicates;

    let mut out = OutDir::create(out_dir)?;
    let started = Instant::now();
    let results = run_batch(n_runs, workers, |job| {
        let t0 = Instant::now();
        let params = MarketParams { seed: seeds[job % spec.replicates], ..cell_params[job / spec.replicates].clone() };
        let result = run(&cfg.run_config(params))?;
        let late = result.late_summary(spec.window);
        Ok(RunSummary {
            final_price: late.price,
            final_si: late.si,
            traded_qty: late.traded_qty,
            seconds: t0.elapsed().as_secs_f64(),
            series: spec.per_run.then(|| timeseries_rows(&result).collect()),
        })
    })?;
    let (runs, failures) = partition(results);

    let keys: Vec<&str> = spec.grid.iter().map(|(k, _)| k.as_str()).collect();
    let mut run_header = header(&["run", "cell", "replicate", "seed"]);
    run_header.extend(keys.iter().map(|k| k.to_string()));
    run_header.extend(header(&["final_price", "final_si", "traded_qty"]));
    let mut run_rows = Vec::new();
    for (job, summary) in runs.iter().enumerate() {
        let (cell, rep) = (job / spec.replicates, job % spec.replicates);
        let mut row = vec![job.to_string(), cell.to_string(), rep.to_string(), seeds[rep].to_string()];
        row.extend(cells[cell].iter().map(f64::to_string));
        match summary {
            Some(s) => row.extend([opt(s.final_price), s.final_si.to_string(), s.traded_qty.to_string()]),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        run_rows.push(row);
    }
    out.write_csv("runs.csv", &run_header, run_rows)?;

    let mut sweep_header = header(&["cell"]);
    sweep_header.extend(keys.iter().map(|k| k.to_string()));
    sweep_header.extend(header(&["n", "price_n", "price_mean", "price_std", "si_mean", "si_std"]));
    let mut sweep_rows = Vec::new();
    for (cell, values) in cells.iter().enumerate() {
        let done: Vec<&RunSummary> = runs[cell * spec.replicates..(cell + 1) * spec.replicates].iter().flatten().collect();
        let prices: Vec<f64> = done.iter().filter_map(|s| s.final_price).collect();
        let sis: Vec<f64> = done.iter().map(|s| s.final_si).collect();
        let (pm, ps) = mean_std(&prices);
        let (sm, ss) = mean_std(&sis);
        let mut row = vec![cell.to_string()];
        row.extend(values.iter().map(f64::to_string));
        row.extend([done.len().to_string(), prices.len().to_string(), opt(pm), opt(ps), opt(sm), opt(ss)]);
        sweep_rows.push(row);
    }
    out.write_csv("sweep.csv", &sweep_header, sweep_rows)?;

    if spec.per_run {
        for (job, summary) in runs.iter().enumerate() {
            if let Some(series) = summary.as_ref().and_then(|s| s.series.as_ref()) {
                out.write_csv(&format!("runs/run_{job:05}.csv"), &header(&TIMESERIES_COLUMNS), series)?;
            }
        }
    }

    let per_run: Vec<f64> = runs.iter().map(|s| s.as_ref().map_or(0.0, |s| s.seconds)).collect();
    let timing = Timing::new(started, per_run, workers);
    let mut manifest = Manifest::new("sweep", cfg, seeds, json!(spec), timing);
    manifest.failures = failures.iter().map(|(job, e)| format!("run {job}: {e}")).collect();
    let manifest = out.finish(manifest)?;
    fail_if_any(&manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolSpec {
    pub base_n: usize,
    pub replicates: usize,
    pub window: usize,
    pub second_order: bool,
}

fn block_label(b: Block) -> String {
    match b {
        Block::A => "A".into(),
        Block::B => "B".into(),
        Block::AB(i) => format!("AB{i}"),
        Block::BA(i) => format!("BA{i}"),
    }
}

fn scenario_model(cfg: &ExperimentConfig, replicates: usize, window: usize) -> CliResult<ScenarioModel> {
    if replicates == 0 {
        return Err(CliError::config("replicates must be >= 1"));
    }
    Ok(ScenarioModel { base: cfg.params.clone(), space: ParamSpace::standard(), replicates, window })
}

struct Evaluated {
    /// Outcomes in (point, replicate) order; `None` where the run failed.
    raw: Vec<Option<ScenarioOutcome>>,
    /// Replicate mean per point; `None` unless every replicate succeeded.
    means: Vec<Option<ModelOutput>>,
    failures: Vec<(usize, String)>,
    seconds: Vec<f64>,
}

/// Evaluates every point `replicates` times in parallel.
fn evaluate_points(model: &ScenarioModel, points: &[Vec<f64>], master: u64, workers: usize) -> CliResult<Evaluated> {
    let reps = model.replicates;
    let results = run_batch(points.len() * reps, workers, |job| {
        let t0 = Instant::now();
        let row = job / reps;
        let o = model.outcome(&points[row], job % reps, ScenarioModel::row_seed(master, row))?;
        Ok((o, t0.elapsed().as_secs_f64()))
    })?;
    let (raw, failures) = partition(results);
    let seconds = raw.iter().map(|r| r.as_ref().map_or(0.0, |r| r.1)).collect();
    let raw: Vec<Option<ScenarioOutcome>> = raw.into_iter().map(|r| r.map(|r| r.0)).collect();
    let means = raw
        .chunks(reps)
        .map(|chunk| {
            let done: Vec<&ScenarioOutcome> = chunk.iter().flatten().collect();
            (done.len() == reps).then(|| ModelOutput {
                si: done.iter().map(|o| o.final_si).sum::<f64>() / reps as f64,
                price: done.iter().map(|o| o.final_price).sum::<f64>() / reps as f64,
            })
        })
        .collect();
    Ok(Evaluated { raw, means, failures, seconds })
}

fn outcome_rows(raw: &[Option<ScenarioOutcome>], reps: usize, master: u64) -> Vec<Vec<String>> {
    raw.iter()
        .enumerate()
        .map(|(job, o)| {
            let (row, rep) = (job / reps, job % reps);
            let seed = derive_seed(ScenarioModel::row_seed(master, row), rep as u64);
            let (si, price) = o.as_ref().map_or((String::new(), String::new()), |o| (o.final_si.to_string(), o.final_price.to_string()));
            vec![row.to_string(), rep.to_string(), seed.to_string(), si, price]
        })
        .collect()
}

/// Saltelli design over the standard parameter space, simulator outcomes,
/// and first/total (optionally second) order indices for SI and price.
pub fn cmd_sobol(cfg: &ExperimentConfig, spec: &SobolSpec, workers: usize, out_dir: &Path) -> CliResult<Manifest> {
    if spec.base_n < 2 {
        return Err(CliError::config("base_n must be >= 2"));
    }
    let model = scenario_model(cfg, spec.replicates, spec.window)?;
    let master = cfg.params.seed;
    let design = SaltelliDesign::new(&model.space, spec.base_n, master, spec.second_order)?;
    let names = model.space.names();
    let mut out = OutDir::create(out_dir)?;

    let mut design_header = header(&["row", "block", "sample"]);
    design_header.extend(names.iter().cloned());
    let design_rows = design.rows.iter().enumerate().map(|(i, r)| {
        let mut row = vec![i.to_string(), block_label(r.block), r.sample.to_string()];
        row.extend(r.point.iter().map(f64::to_string));
        row
    });
    out.write_csv("sobol_design.csv", &design_header, design_rows)?;

    let started = Instant::now();
    let points: Vec<Vec<f64>> = design.rows.iter().map(|r| r.point.clone()).collect();
    let Evaluated { raw, means, failures, seconds } = evaluate_points(&model, &points, master, workers)?;
    out.write_csv(
        "sobol_outcomes.csv",
        &header(&["row", "replicate", "seed", "final_si", "final_price"]),
        outcome_rows(&raw, spec.replicates, master),
    )?;

    if failures.is_empty() {
        let means: Vec<ModelOutput> = means.into_iter().flatten().collect();
        let si: Vec<f64> = means.iter().map(|m| m.si).collect();
        let price: Vec<f64> = means.iter().map(|m| m.price).collect();
        let outputs = [("si", estimate_indices(&design, &si)?), ("price", estimate_indices(&design, &price)?)];
        let mut rows = Vec::new();
        for (output, idx) in &outputs {
            for (i, name) in names.iter().enumerate() {
                rows.push(vec![
                    output.to_string(),
                    name.clone(),
                    idx.s1[i].to_string(),
                    idx.st[i].to_string(),
                    idx.variance.to_string(),
                    idx.degenerate.to_string(),
                ]);
            }
        }
        out.write_csv("sobol_indices.csv", &header(&["output", "parameter", "S1", "ST", "variance", "degenerate"]), rows)?;
        if spec.second_order {
            let mut rows = Vec::new();
            for (output, idx) in &outputs {
                if let Some(s2) = &idx.s2 {
                    for i in 0..names.len() {
                        for j in (i + 1)..names.len() {
                            rows.push(vec![output.to_string(), names[i].clone(), names[j].clone(), s2[i][j].to_string()]);
                        }
                    }
                }
            }
            out.write_csv("sobol_s2.csv", &header(&["output", "parameter_i", "parameter_j", "S2"]), rows)?;
        }
        for (output, idx) in &outputs {
            if idx.degenerate {
                eprintln!("warning: {output} output has zero variance; all indices reported as 0");
            }
        }
    }

    let timing = Timing::new(started, seconds, workers);
    let settings = json!({ "spec": spec, "space": model.space, "evaluations": design.evaluations() * spec.replicates });
    let mut manifest = Manifest::new("sobol", cfg, Vec::new(), settings, timing);
    manifest.failures = failures.iter().map(|(job, e)| format!("evaluation {job}: {e}")).collect();
    let manifest = out.finish(manifest)?;
    fail_if_any(&manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdpSpec {
    pub sweep_dim: String,
    pub levels: Vec<f64>,
    pub grid_n: usize,
    pub background_n: usize,
    pub replicates: usize,
    pub window: usize,
}

/// ICE curves and their mean (the PDP) for one swept parameter at fixed
/// density levels.
pub fn cmd_pdp(cfg: &ExperimentConfig, spec: &PdpSpec, workers: usize, out_dir: &Path) -> CliResult<Manifest> {
    let model = scenario_model(cfg, spec.replicates, spec.window)?;
    let master = cfg.params.seed;
    let design = PdpDesign::new(&model.space, &spec.sweep_dim, &spec.levels, spec.grid_n, spec.background_n, master)
        .map_err(|e| CliError::config(e.to_string()))?;
    let mut out = OutDir::create(out_dir)?;
    let started = Instant::now();
    let points: Vec<Vec<f64>> = design.points.iter().map(|p| p.point.clone()).collect();
    let Evaluated { raw, means, failures, seconds } = evaluate_points(&model, &points, master, workers)?;
    out.write_csv(
        "pdp_outcomes.csv",
        &header(&["point", "replicate", "seed", "final_si", "final_price"]),
        outcome_rows(&raw, spec.replicates, master),
    )?;

    if failures.is_empty() {
        let means: Vec<ModelOutput> = means.into_iter().flatten().collect();
        let table = design.assemble(&means)?;
        let rows = table.iter().map(|r| {
            let (line, ice_id) = match r.line {
                Line::Ice(i) => ("ice", i.to_string()),
                Line::Pdp => ("pdp", String::new()),
            };
            vec![
                r.density_level.to_string(),
                line.to_string(),
                ice_id,
                spec.sweep_dim.clone(),
                r.sweep_value.to_string(),
                r.si.to_string(),
                r.price.to_string(),
            ]
        });
        out.write_csv(
            "pdp_ice.csv",
            &header(&["density_level", "line", "ice_id", "sweep_dim", "sweep_value", "si", "price"]),
            rows,
        )?;
    }

    let timing = Timing::new(started, seconds, workers);
    let settings = json!({ "spec": spec, "space": model.space });
    let mut manifest = Manifest::new("pdp", cfg, Vec::new(), settings, timing);
    manifest.failures = failures.iter().map(|(job, e)| format!("evaluation {job}: {e}")).collect();
    let manifest = out.finish(manifest)?;
    fail_if_any(&manifest)?;
    Ok(manifest)
}

/// Per-step counterfactual regret with rolling medians of the total and the
/// per-seller mean. Regret is evaluated every step unless the config asks
/// for sampling.
pub fn cmd_regret(cfg: &ExperimentConfig, window: usize, out_dir: &Path) -> CliResult<Manifest> {
    let mut rc = cfg.run_config(cfg.params.clone());
    if rc.regret_mode == RegretMode::Off {
        rc.regret_mode = RegretMode::EveryStep;
    }
    let mut out = OutDir::create(out_dir)?;
    let started = Instant::now();
    let result = run(&rc)?;
    let elapsed = started.elapsed().as_secs_f64();

    let evaluated: Vec<_> = result.records.iter().filter(|r| r.per_seller_regret.is_some()).collect();
    let n_sellers = result.final_policies.len();
    let totals: Vec<f64> = evaluated.iter().map(|r| r.total_regret.unwrap_or(0.0)).collect();
    let means: Vec<f64> = totals.iter().map(|t| if n_sellers > 0 { t / n_sellers as f64 } else { 0.0 }).collect();
    let med_total = rolling_median(&totals, window);
    let med_mean = rolling_median(&means, window);

    let mut cols = header(&["t"]);
    cols.extend((0..n_sellers).map(|j| format!("regret_{j}")));
    cols.extend(header(&["total", "mean", "rolling_median_total", "rolling_median_mean"]));
    let rows = evaluated.iter().enumerate().map(|(i, r)| {
        let mut row = vec![r.t.to_string()];
        row.extend(r.per_seller_regret.iter().flatten().map(f64::to_string));
        row.extend([totals[i].to_string(), means[i].to_string(), med_total[i].to_string(), med_mean[i].to_string()]);
        row
    });
    out.write_csv("regret.csv", &cols, rows)?;

    let timing = Timing::new(started, vec![elapsed], 1);
    let settings = json!({ "rolling_window": window, "regret_mode": rc.regret_mode });
    out.finish(Manifest::new("regret", cfg, vec![cfg.params.seed], settings, timing))
}

#[derive(Serialize)]
struct LayoutFirm {
    id: usize,
    role: &'static str,
    x: f64,
    y: f64,
    /// Demand for buyers, endowment for sellers.
    quantity: f64,
    /// Price tolerance multiplier; absent for sellers.
    beta: Option<f64>,
}

#[derive(Serialize)]
struct LayoutDump {
    width: f64,
    n_buyers: usize,
    n_sellers: usize,
    firms: Vec<LayoutFirm>,
}

/// The generated population (positions, roles, demands, endowments) as JSON.
pub fn cmd_layout(cfg: &ExperimentConfig, out_dir: &Path) -> CliResult<Manifest> {
    let started = Instant::now();
    let layout = build_population(&cfg.params)?;
    let mut firms: Vec<LayoutFirm> = layout
        .buyers
        .iter()
        .map(|b| LayoutFirm { id: b.id, role: "buyer", x: b.position.x, y: b.position.y, quantity: b.q_need, beta: Some(b.beta) })
        .collect();
    firms.extend(layout.sellers.iter().map(|s| LayoutFirm {
        id: s.id,
        role: "seller",
        x: s.position.x,
        y: s.position.y,
        quantity: s.q_supply,
        beta: None,
    }));
    let dump = LayoutDump { width: layout.width, n_buyers: layout.buyers.len(), n_sellers: layout.sellers.len(), firms };
    let mut out = OutDir::create(out_dir)?;
    out.write_json("layout.json", &dump)?;
    let timing = Timing::new(started, Vec::new(), 1);
    out.finish(Manifest::new("layout", cfg, vec![cfg.params.seed], json!({}), timing))
}
