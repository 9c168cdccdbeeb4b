//! Scenario runners behind the `sim` subcommands.
//!
//! Every run draws from its own stream keyed by (scenario, run index), so a
//! report depends only on the config, the run count and the seed. Arms of
//! one comparison share the run's stream.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{CatalystAlgorithm, CatalystConfig, CatalystPairing, MigrationMode, TargetedMigrationConfig};
use crate::clustering::physical_complexity_cluster;
use crate::complexity::{clustering_coefficient_target, complexity_cv, complexity_with_clusters, efficiency_ec_lenient, SitePopulation};
use crate::ecosystem::{init_ecosystem, response_rate, EcosystemParams, EcosystemRun};
use crate::evolution::{EvolutionParams, RandomPairing};
use crate::recognition::RecognizerKind;
use crate::rng::{SeededRng, SimRng};
use crate::stability::{classify_generation, partition_distribution, stability_report, MacroStateDef, OccupationTrace};
use crate::{Error, Result};

use super::analysis::*;
use super::setups::{pool_population, stability_setup, two_cluster_setup, StabilityLandscape};

pub const SCENARIOS: [&str; 10] = [
    "succession",
    "species-abundance",
    "species-area",
    "complexity",
    "stability",
    "stability-grid",
    "diversity-length",
    "diversity-modularity",
    "catalyst",
    "targeted-migration",
];

/// Attached to every report that quotes a response rate.
pub const RESPONSE_RATE_NOTE: &str = "response rate: mean best response fitness over the window, as a percentage";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplexityScenario {
    pub alphabet_size: usize,
    pub optimum_len: usize,
    pub generations: usize,
    pub sample_every: usize,
    /// Clusters sought by the per-cluster Efficiency.
    pub k: usize,
}

impl Default for ComplexityScenario {
    fn default() -> Self {
        Self { alphabet_size: 15, optimum_len: 3, generations: 1000, sample_every: 10, k: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityScenario {
    pub landscape: StabilityLandscape,
    pub generations: usize,
}

impl Default for StabilityScenario {
    fn default() -> Self {
        Self { landscape: StabilityLandscape::default(), generations: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridScenario {
    pub mutation: Vec<f64>,
    pub crossover: Vec<f64>,
    pub landscape: StabilityLandscape,
    pub generations: usize,
}

impl Default for GridScenario {
    fn default() -> Self {
        let steps: Vec<f64> = (0..=10).map(|i| f64::from(i) / 10.0).collect();
        Self {
            mutation: steps.clone(),
            crossover: steps,
            landscape: StabilityLandscape { alphabet_size: 80, ..StabilityLandscape::default() },
            generations: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalystScenario {
    pub alphabet_size: usize,
    pub optimum_len: usize,
    /// Crossover rate of the control and both catalyst arms.
    pub crossover_rate: f64,
    pub baseline_crossover_rate: f64,
    pub k: usize,
    /// Runs still short of the optimum here are recorded at this value.
    pub max_generations: usize,
}

impl Default for CatalystScenario {
    fn default() -> Self {
        Self { alphabet_size: 15, optimum_len: 3, crossover_rate: 0.25, baseline_crossover_rate: 0.10, k: 2, max_generations: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub ecosystem: EcosystemParams,
    /// Standalone populations (complexity, stability, catalyst).
    pub evolution: EvolutionParams,
    pub complexity: ComplexityScenario,
    pub stability: StabilityScenario,
    pub grid: GridScenario,
    pub catalyst: CatalystScenario,
    /// Targeted arm; the control arms are derived from it.
    pub migration: TargetedMigrationConfig,
    pub window: usize,
    /// Events before the early diversity snapshot.
    pub early_events: u64,
    pub species_resamples: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            ecosystem: EcosystemParams::default(),
            evolution: EvolutionParams { stall_generations: None, ..EvolutionParams::default() },
            complexity: ComplexityScenario::default(),
            stability: StabilityScenario::default(),
            grid: GridScenario::default(),
            catalyst: CatalystScenario::default(),
            migration: TargetedMigrationConfig { enabled: true, ..TargetedMigrationConfig::default() },
            window: 100,
            early_events: 100,
            species_resamples: 10,
        }
    }
}

impl ScenarioConfig {
    /// Defaults with the scenario's own adjustments applied.
    pub fn for_scenario(name: &str) -> Result<Self> {
        scenario_key(name)?;
        let mut cfg = Self::default();
        let ub = &mut cfg.ecosystem.user_base;
        match name {
            "species-abundance" | "species-area" => {
                ub.sector_size = 1;
                ub.communities = 10;
            }
            "diversity-length" => ub.request_parts = DistributionSpec::uniform(1, 17),
            "diversity-modularity" => ub.sector_size = 1,
            _ => {}
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.ecosystem.validate()?;
        self.evolution.validate()?;
        self.migration_validate()?;
        if self.window == 0 || self.window as u64 > self.ecosystem.n_events {
            return Err(Error::InvalidParameter("window must lie in 1..=ecosystem.n_events".into()));
        }
        if self.early_events == 0 || self.early_events > self.ecosystem.n_events {
            return Err(Error::InvalidParameter("early_events must lie in 1..=ecosystem.n_events".into()));
        }
        if self.complexity.sample_every == 0 || self.complexity.k == 0 || self.catalyst.k == 0 {
            return Err(Error::InvalidParameter("sample_every and k must be positive".into()));
        }
        let rate = |x: f64| (0.0..=1.0).contains(&x);
        if !self.grid.mutation.iter().chain(&self.grid.crossover).all(|&x| rate(x))
            || !rate(self.catalyst.crossover_rate)
            || !rate(self.catalyst.baseline_crossover_rate)
        {
            return Err(Error::InvalidParameter("rates must lie in [0,1]".into()));
        }
        if self.grid.mutation.is_empty() || self.grid.crossover.is_empty() {
            return Err(Error::InvalidParameter("grid axes must be non-empty".into()));
        }
        for (what, d, len) in [
            ("complexity", self.complexity.alphabet_size, self.complexity.optimum_len),
            ("catalyst", self.catalyst.alphabet_size, self.catalyst.optimum_len),
        ] {
            if len == 0 || d < 2 * len {
                return Err(Error::InvalidParameter(format!("{what}: alphabet_size must hold two optima of optimum_len")));
            }
        }
        for land in [&self.stability.landscape, &self.grid.landscape] {
            if land.optimum_len == 0 || land.tuples_per_part < 3 || land.tuples_per_part > 6 || land.optimum_len * land.tuples_per_part > 100 {
                return Err(Error::InvalidParameter("stability landscape: 1+ parts of 3..=6 tuples".into()));
            }
        }
        Ok(())
    }

    fn migration_validate(&self) -> Result<()> {
        if self.migration.recognizer == RecognizerKind::Mlp && (self.migration.variants == 0 || self.migration.epochs == 0) {
            return Err(Error::InvalidParameter("migration: MLP needs variants and epochs".into()));
        }
        Ok(())
    }
}

/// A block of numbers exported as one CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub n_runs: usize,
    /// SHA-256 of the scenario name, run count and config.
    pub config_hash: String,
    pub notes: Vec<String>,
    pub summary: BTreeMap<String, f64>,
    pub tables: BTreeMap<String, Table>,
}

impl ScenarioReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }
}

pub fn scenario_key(name: &str) -> Result<u64> {
    SCENARIOS.iter().position(|s| *s == name).map(|i| i as u64 + 1).ok_or_else(|| Error::UnknownScenario(name.to_string()))
}

pub fn config_hash(name: &str, cfg: &ScenarioConfig, n_runs: usize) -> String {
    let body = serde_json::to_string(cfg).expect("config serializes");
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    h.update(n_runs.to_le_bytes());
    h.update(body.as_bytes());
    hex::encode(h.finalize())
}

struct Ctx {
    key: u64,
    seed: u64,
}

impl Ctx {
    fn rng(&self, keys: &[u64]) -> SimRng {
        let mut all = vec![self.key];
        all.extend_from_slice(keys);
        SeededRng::new(self.seed).stream(&all)
    }
}

/// Runs `f` for every index on the rayon pool; results keep index order.
fn fan<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(f).collect()
}

pub fn run_scenario(name: &str, cfg: &ScenarioConfig, n_runs: usize, seed: u64) -> Result<ScenarioReport> {
    let key = scenario_key(name)?;
    cfg.validate()?;
    if n_runs == 0 {
        return Err(Error::InvalidParameter("n_runs must be positive".into()));
    }
    let ctx = Ctx { key, seed };
    let mut report = ScenarioReport {
        scenario: name.to_string(),
        seed,
        n_runs,
        config_hash: config_hash(name, cfg, n_runs),
        notes: Vec::new(),
        summary: BTreeMap::new(),
        tables: BTreeMap::new(),
    };
    match name {
        "succession" => succession(cfg, n_runs, &ctx, &mut report)?,
        "species-abundance" => species_abundance(cfg, n_runs, &ctx, &mut report)?,
        "species-area" => species_area_scenario(cfg, n_runs, &ctx, &mut report)?,
        "complexity" => complexity(cfg, n_runs, &ctx, &mut report)?,
        "stability" => stability(cfg, n_runs, &ctx, &mut report)?,
        "stability-grid" => stability_grid(cfg, n_runs, &ctx, &mut report)?,
        "diversity-length" => diversity(cfg, n_runs, &ctx, &mut report, Diversity::Length)?,
        "diversity-modularity" => diversity(cfg, n_runs, &ctx, &mut report, Diversity::Modularity)?,
        "catalyst" => catalyst(cfg, n_runs, &ctx, &mut report)?,
        "targeted-migration" => targeted_migration(cfg, n_runs, &ctx, &mut report)?,
        _ => unreachable!("scenario_key accepted the name"),
    }
    Ok(report)
}

fn put(report: &mut ScenarioReport, key: &str, v: f64) {
    report.summary.insert(key.to_string(), v);
}

fn put_mean_sd(report: &mut ScenarioReport, key: &str, v: &[f64]) {
    let (m, s) = mean_sd(v);
    put(report, &format!("{key}_mean"), m);
    put(report, &format!("{key}_sd"), s);
}

fn ecosystem_run(params: &EcosystemParams, migration: Option<&TargetedMigrationConfig>, rng: &mut SimRng) -> Result<EcosystemRun> {
    let mut run = init_ecosystem(params, rng)?;
    run.run(params.n_events, migration, rng, |_| {})?;
    Ok(run)
}

/// Per-window mean and sd across runs of the windowed response rate.
fn windowed_table(traces: &[Vec<f64>], window: usize, columns: &[&str]) -> (Table, Vec<f64>) {
    let per_run: Vec<Vec<f64>> = traces.iter().map(|t| windowed_means(t, window)).collect();
    let n_windows = per_run.iter().map(Vec::len).min().unwrap_or(0);
    let mut table = Table::new(columns);
    let mut means = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let vals: Vec<f64> = per_run.iter().map(|r| 100.0 * r[w]).collect();
        let (m, s) = mean_sd(&vals);
        means.push(m);
        table.push(vec![((w + 1) * window) as f64, m, s]);
    }
    (table, means)
}

fn succession(cfg: &ScenarioConfig, n: usize, ctx: &Ctx, report: &mut ScenarioReport) -> Result<()> {
    let traces = fan(n, |r| Ok(ecosystem_run(&cfg.ecosystem, None, &mut ctx.rng(&[r as u64]))?.trace))?;
    let finals: Vec<f64> = traces.iter().map(|t| response_rate(t, cfg.window)).collect::<Result<_>>()?;
    let whole: Vec<f64> = traces.iter().map(|t| response_rate(t, t.len())).collect::<Result<_>>()?;
    put_mean_sd(report, "final_rate", &finals);
    put_mean_sd(report, "run_rate", &whole);
    let (windowed, means) = windowed_table(&traces, cfg.window, &["event", "rate_mean", "rate_sd"]);
    let idx: Vec<f64> = (0..means.len()).map(|i| i as f64).collect();
    put(report, "spearman_windowed", if means.len() > 1 { spearman(&idx, &means)? } else { f64::NAN });
    report.tables.insert("windowed".into(), windowed);
    let mut runs = Table::new(&["run", "final_rate", "run_rate"]);
    for (r, (f, w)) in finals.iter().zip(&whole).enumerate() {
        runs.push(vec![r as f64, *f, *w]);
    }
    report.tables.insert("runs".into(), runs);
    report.tables.insert("trace".into(), long_trace(&traces));
    report.notes.push(RESPONSE_RATE_NOTE.into());
    report.notes.push("spearman_windowed: rank correlation of the across-run mean windowed rate with time".into());
    Ok(())
}

fn long_trace(traces: &[Vec<f64>]) -> Table {
    let mut t = Table::new(&["run", "event", "fitness"]);
    for (r, trace) in traces.iter().enumerate() {
        for (i, f) in trace.iter().enumerate() {
            t.push(vec![r as f64, (i + 1) as f64, *f]);
        }
    }
    t
}

fn species_abundance(cfg: &ScenarioConfig, n: usize, ctx: &Ctx, report: &mut ScenarioReport) -> Result<()> {
    let parts = fan(n, |r| {
        let run = ecosystem_run(&cfg.ecosystem, None, &mut ctx.rng(&[r as u64]))?;
        Ok(species_partition(&run.net))
    })?;
    let counts: Vec<f64> = parts.iter().map(|p| p.len() as f64).collect();
    put_mean_sd(report, "species", &counts);
    let mut abundance = Table::new(&["run", "rank", "copies", "share"]);
    // Octave k holds species with 2^k..2^(k+1)-1 copies.
    let mut octaves: BTreeMap<u32, f64> = BTreeMap::new();
    let mut top = Vec::new();
    for (r, p) in parts.iter().enumerate() {
        let mut copies = p.abundance.clone();
        copies.sort_unstable_by(|a, b| b.cmp(a));
        let total: usize = copies.iter().sum();
        for (rank, c) in copies.iter().enumerate() {
            abundance.push(vec![r as f64, (rank + 1) as f64, *c as f64, *c as f64 / total.max(1) as f64]);
            *octaves.entry(c.max(&1).ilog2()).or_default() += 1.0 / n as f64;
        }
        top.push(relative_abundance(p).first().copied().unwrap_or(0.0));
    }
    put_mean_sd(report, "top_share", &top);
    let mut hist = Table::new(&["octave", "min_copies", "species_mean"]);
    for (k, v) in octaves {
        hist.push(vec![f64::from(k), 2f64.powi(k as i32), v]);
    }
    report.tables.insert("abundance".into(), abundance);
    report.tables.insert("histogram".into(), hist);
    report.notes.push("species: single linkage at description difference <= 0.10 over every agent copy".into());
    Ok(())
}

fn species_area_scenario(cfg: &ScenarioConfig, n: usize, ctx: &Ctx, report: &mut ScenarioReport) -> Result<()> {
    let curves = fan(n, |r| {
        let mut rng = ctx.rng(&[r as u64]);
        let run = ecosystem_run(&cfg.ecosystem, None, &mut rng)?;
        let part = species_partition(&run.net);
        let curve = species_area(&run.net, &part, cfg.species_resamples, &mut rng);
        let reg = log_log_regression(&curve)?;
        Ok((part.len(), curve, reg))
    })?;
    let slopes: Vec<f64> = curves.iter().map(|c| c.2.slope).collect();
    let r2: Vec<f64> = curves.iter().map(|c| c.2.r_squared).collect();
    put_mean_sd(report, "slope", &slopes);
    put_mean_sd(report, "r_squared", &r2);
    put(report, "slope_min", slopes.iter().copied().fold(f64::INFINITY, f64::min));
    put(report, "r_squared_min", r2.iter().copied().fold(f64::INFINITY, f64::min));
    put_mean_sd(report, "species", &curves.iter().map(|c| c.0 as f64).collect::<Vec<_>>());
    let len = curves[0].1.len();
    let mean_curve: Vec<(usize, f64)> =
        (0..len).map(|i| (curves[0].1[i].0, curves.iter().map(|c| c.1[i].1).sum::<f64>() / n as f64)).collect();
    let reg = log_log_regression(&mean_curve)?;
    put(report, "mean_curve_slope", reg.slope);
    put(report, "mean_curve_r_squared", reg.r_squared);
    let mut table = Table::new(&["habitats", "species_mean", "log10_habitats", "log10_species"]);
    for (h, s) in &mean_curve {
        table.push(vec![*h as f64, *s, (*h as f64).log10(), s.log10()]);
    }
    report.tables.insert("species_area".into(), table);
    let mut runs = Table::new(&["run", "species", "slope", "intercept", "r_squared"]);
    for (r, c) in curves.iter().enumerate() {
        runs.push(vec![r as f64, c.0 as f64, c.2.slope, c.2.intercept, c.2.r_squared]);
    }
    report.tables.insert("runs".into(), runs);
    report.notes.push("regression: log10 species count on log10 habitats over n = 1..n_users".into());
    Ok(())
}

fn complexity(cfg: &ScenarioConfig, n: usize, ctx: &Ctx, report: &mut ScenarioReport) -> Result<()> {
    let c = &cfg.complexity;
    let out = fan(n, |r| {
        let mut rng = ctx.rng(&[r as u64]);
        let setup = two_cluster_setup(c.alphabet_size, c.optimum_len, &mut rng);
        let mut pop = pool_population(&setup, cfg.evolution.clone(), &mut rng)?;
        let mut trace = Vec::new();
        for g in 1..=c.generations {
            pop.step_generation(&mut RandomPairing, &mut rng);
            if g % c.sample_every == 0 {
                let sp = SitePopulation::new(pop.individuals().to_vec(), c.alphabet_size)?;
                trace.push(complexity_cv(&sp).map(|x| x.e).unwrap_or(0.0));
            }
        }
        let sp = SitePopulation::new(pop.individuals().to_vec(), c.alphabet_size)?;
        let whole = complexity_cv(&sp).map(|x| (x.e, x.ell_v as f64)).unwrap_or((0.0, 0.0));
        let clusters = physical_complexity_cluster(&sp, c.k)?;
        let ec = efficiency_ec_lenient(&sp, &clusters);
        let k_eff = clusters.k_effective();
        let per_cluster: Vec<f64> = clusters
            .members()
            .into_iter()
            .filter(|m| !m.is_empty())
            .map(|m| sp.subset(&m).and_then(|p| complexity_with_clusters(&p, k_eff)).map(|x| x.e).unwrap_or(0.0))
            .collect();
        let min_cluster = per_cluster.iter().copied().fold(f64::INFINITY, f64::min);
        Ok((whole.0, whole.1, ec, min_cluster, k_eff as f64, trace))
    })?;
    let col = |f: fn(&(f64, f64, f64, f64, f64, Vec<f64>)) -> f64| out.iter().map(f).collect::<Vec<f64>>();
    put_mean_sd(report, "e", &col(|x| x.0));
    put_mean_sd(report, "ell_v", &col(|x| x.1));
    put_mean_sd(report, "e_c", &col(|x| x.2));
    put(report, "e_c_cluster_min", col(|x| x.3).into_iter().fold(f64::INFINITY, f64::min));
    put(report, "k_effective_mean", mean_sd(&col(|x| x.4)).0);
    put(report, "e_target", clustering_coefficient_target(c.alphabet_size, c.k));
    let mut trace = Table::new(&["generation", "e_mean", "e_sd"]);
    for i in 0..out[0].5.len() {
        let (m, s) = mean_sd(&out.iter().map(|x| x.5[i]).collect::<Vec<_>>());
        trace.push(vec![((i + 1) * c.sample_every) as f64, m, s]);
    }
    report.tables.insert("e_trace".into(), trace);
    let mut runs = Table::new(&["run", "e", "ell_v", "e_c", "e_c_cluster_min", "k_effective"]);
    for (r, x) in out.iter().enumerate() {
        runs.push(vec![r as f64, x.0, x.1, x.2, x.3, x.4]);
    }
    report.tables.insert("runs".into(), runs);
    report.notes.push("e_target: 1 - ln k / ln |D|, the limit for k equal pure clusters".into());
    Ok(())
}

/// One fixed-horizon stability run.
fn occupation(land: &StabilityLandscape, params: EvolutionParams, generations: usize, rng: &mut SimRng) -> Result<OccupationTrace> {
    let setup = stability_setup(land, rng);
    let defs = stability_defs(land);
    let mut pop = pool_population(&setup, params, rng)?;
    let mut trace = OccupationTrace::default();
    for _ in 0..generations {
        let rep = pop.step_generation(&mut RandomPairing, rng);
        let lens: Vec<usize> = pop.individuals().iter().map(Vec::len).collect();
        trace.push(classify_generation(&rep.fitness, &lens, &defs, 1.0));
    }
    Ok(trace)
}

fn stability_defs(land: &StabilityLandscape) -> [MacroStateDef; 2] {
    [MacroStateDef::max().with_max_len(land.optimum_len), MacroStateDef::half()]
}

fn stability(cfg: &ScenarioConfig, n: usize, ctx: &Ctx, report: &mut ScenarioReport) -> Result<()> {
    let s = &cfg.stability;
    let params = EvolutionParams { stall_generations: None, ..cfg.evolution.clone() };
    let traces = fan(n, |r| occupation(&s.landscape, params.clone(), s.generations, &mut ctx.rng(&[r as u64])))?;
    let defs = stability_defs(&s.landscape);
    let rep = stability_report(&traces, &defs)?;
    put(report, "d_ins", rep.d_ins);
    for (k, v) in &rep.p_hat {
        put(report, &format!("p_{k}"), *v);
    }
    let mut occ = Table::new(&["generation", "p_max", "p_half", "p_other"]);
    let (mut peak, mut peak_gen, mut last_half) = (0.0, 0usize, 0usize);
    for t in 0..s.generations {
        let p = partition_distribution(&traces, t)?;
        if p[1] > peak {
            peak = p[1];
            peak_gen = t + 1;
        }
        if p[1] > 0.0 {
            last_half = t + 1;
        }
        occ.push(vec![(t + 1) as f64, p[0], p[1], p[2]]);
    }
    put(report, "half_peak", peak);
    put(report, "half_peak_generation", peak_gen as f64);
    put(report, "half_last_generation", last_half as f64);
    report.tables.insert("occupancy".into(), occ);
    report.notes.push("M_max: holds an exact solution no longer than the optimum; M_half is reported as M_half minus M_max".into());
    Ok(())
}

fn stability_grid(cfg: &ScenarioConfig, n: usize, ctx: &Ctx, report: &mut ScenarioReport) -> Result<()> {
    let g = &cfg.grid;
    let cells: Vec<(f64, f64)> = g.mutation.iter().flat_map(|&m| g.crossover.iter().map(move |&c| (m, c))).collect();
    let traces = fan(cells.len() * n, |i| {
        let (cell, r) = (i / n, i % n);
        let (m, c) = cells[cell];
        let params = EvolutionParams { mutation_rate: m, crossover_rate: c, stall_generations: None, ..cfg.evolution.clone() };
        occupation(&g.landscape, params, g.generations, &mut ctx.rng(&[cell as u64, r as u64]))
    })?;
    let defs = stability_defs(&g.landscape);
    let mut cols = vec!["mutation".to_string()];
    cols.extend(g.crossover.iter().map(|c| format!("crossover_{c}")));
    let mut table = Table { columns: cols, rows: Vec::new() };
    for (mi, &m) in g.mutation.iter().enumerate() {
        let mut row = vec![m];
        for (ci, &c) in g.crossover.iter().enumerate() {
            let cell = mi * g.crossover.len() + ci;
            let d = stability_report(&traces[cell * n..(cell + 1) * n], &defs)?.d_ins;
            put(report, &format!("d_ins[m={m},c={c}]"), d);
            row.push(d);
        }
        table.push(row);
    }
    report.tables.insert("d_ins".into(), table);
    Ok(())
}

#[derive(Clone, Copy)]
enum Diversity {
    /// Stored agent-sequence lengths against request lengths.
    Length,
    /// Agent tuple counts against service tuple counts.
    Modularity,
}

fn diversity(cfg: &ScenarioConfig, n: usize, ctx: &Ctx, report: &mut ScenarioReport, which: Diversity) -> Result<()> {
    let ub = &cfg.ecosystem.user_base;
    let spec = match which {
        Diversity::Length => ub.request_parts.clone(),
        Diversity::Modularity => ub.service_tuples.clone(),
    };
    let pmf = spec.pmf();
    let observe = |run: &EcosystemRun| -> Vec<f64> {
        match which {
            Diversity::Length => histogram(
                run.net.habitats.iter().flat_map(|h| h.sequences.iter().map(|s| s.len() as u32)),
                spec.min,
                spec.max,
            ),
            Diversity::Modularity => histogram(
                run.net.habitats.iter().flat_map(|h| h.agents.values().map(|a| a.description.tuples().len() as u32)),
                spec.min,
                spec.max,
            ),
        }
    };
    let df = spec.support_len() - 1;
    let out = fan(n, |r| {
        let mut rng = ctx.rng(&[r as u64]);
        let mut run = init_ecosystem(&cfg.ecosystem, &mut rng)?;
        run.run(cfg.early_events, None, &mut rng, |_| {})?;
        let early = observe(&run);
        run.run(cfg.ecosystem.n_events - cfg.early_events, None, &mut rng, |_| {})?;
        let last = observe(&run);
        let tvd_early = total_variation(&early, &pmf).unwrap_or(1.0);
        let tvd_final = total_variation(&last, &pmf)?;
        let chi = chi_squared(&last, &expected_counts(&pmf, last.iter().sum()), df.max(1))?;
        Ok((tvd_early, tvd_final, chi, last))
    })?;
    let decreased = out.iter().filter(|x| x.1 < x.0).count();
    put(report, "tvd_decreased_fraction", decreased as f64 / n as f64);
    put_mean_sd(report, "tvd_early", &out.iter().map(|x| x.0).collect::<Vec<_>>());
    put_mean_sd(report, "tvd_final", &out.iter().map(|x| x.1).collect::<Vec<_>>());
    put_mean_sd(report, "chi_squared", &out.iter().map(|x| x.2.statistic).collect::<Vec<_>>());
    let mean_hist: Vec<f64> = (0..pmf.len()).map(|i| out.iter().map(|x| x.3[i]).sum::<f64>() / n as f64).collect();
    let total: f64 = mean_hist.iter().sum();
    let expected = expected_counts(&pmf, total);
    let pooled = chi_squared(&mean_hist, &expected, df.max(1))?;
    put(report, "chi_squared_mean_histogram", pooled.statistic);
    put(report, "chi_squared_critical", pooled.critical);
    put(report, "chi_squared_below_critical", f64::from(u8::from(pooled.below_critical)));
    put(report, "chi_squared_p_value", pooled.p_value);
    put(report, "df", df as f64);
    let mut table = Table::new(&["value", "observed_mean", "expected"]);
    for i in 0..pmf.len() {
        table.push(vec![f64::from(spec.min) + i as f64, mean_hist[i], expected[i]]);
    }
    report.tables.insert("frequencies".into(), table);
    let mut runs = Table::new(&["run", "tvd_early", "tvd_final", "chi_squared", "p_value"]);
    for (r, x) in out.iter().enumerate() {
        runs.push(vec![r as f64, x.0, x.1, x.2.statistic, x.2.p_value]);
    }
    report.tables.insert("runs".into(), runs);
    report.notes.push(format!(
        "critical: lower-tail 5% value ({}); p_value: upper tail",
        if quoted_critical(df).is_some() { "quoted constant" } else { "chi-squared quantile" }
    ));
    Ok(())
}

const CATALYST_ARMS: [&str; 4] = ["crossover_control", "physical_complexity", "average_link", "baseline"];

fn catalyst(cfg: &ScenarioConfig, n: usize, ctx: &Ctx, report: &mut ScenarioReport) -> Result<()> {
    let c = &cfg.catalyst;
    let arm = |a: usize, r: usize| -> Result<f64> {
        let mut rng = ctx.rng(&[r as u64]);
        let setup = two_cluster_setup(c.alphabet_size, c.optimum_len, &mut rng);
        let rate = if a == 3 { c.baseline_crossover_rate } else { c.crossover_rate };
        let params = EvolutionParams { crossover_rate: rate, stall_generations: None, ..cfg.evolution.clone() };
        let algorithm = if a == 1 { CatalystAlgorithm::PhysicalComplexity } else { CatalystAlgorithm::AverageLink };
        let cat = CatalystConfig { enabled: a == 1 || a == 2, algorithm, k: c.k, crossover_rate: rate };
        let mut pairing = CatalystPairing::new(cat, &setup.alphabet, &setup.catalog);
        let mut pop = pool_population(&setup, params, &mut rng)?;
        let mut g = 0;
        while !pop.optimum_reached() && g < c.max_generations {
            pop.step_generation(&mut pairing, &mut rng);
            g += 1;
        }
        Ok(g as f64)
    };
    let flat = fan(n * CATALYST_ARMS.len(), |i| arm(i % CATALYST_ARMS.len(), i / CATALYST_ARMS.len()))?;
    let arms: Vec<Vec<f64>> = (0..CATALYST_ARMS.len()).map(|a| flat.iter().skip(a).step_by(CATALYST_ARMS.len()).copied().collect()).collect();
    for (name, v) in CATALYST_ARMS.iter().zip(&arms) {
        put_mean_sd(report, name, v);
        put(report, &format!("{name}_censored"), v.iter().filter(|&&g| g >= c.max_generations as f64).count() as f64);
    }
    if n >= 2 {
        for (a, b) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
            let (t, p) = welch_t_test(&arms[a], &arms[b])?;
            put(report, &format!("t[{}<{}]", CATALYST_ARMS[a], CATALYST_ARMS[b]), t);
            put(report, &format!("p[{}<{}]", CATALYST_ARMS[a], CATALYST_ARMS[b]), p);
        }
    }
    let mut cols = vec!["run"];
    cols.extend(CATALYST_ARMS);
    let mut table = Table::new(&cols);
    for r in 0..n {
        let mut row = vec![r as f64];
        row.extend(arms.iter().map(|v| v[r]));
        table.push(row);
    }
    report.tables.insert("generations".into(), table);
    report.notes.push("generations until some individual reaches fitness 1; arms of one run share the setup".into());
    report.notes.push("t and p: Welch two-sample test, two-sided".into());
    Ok(())
}

const MIGRATION_ARMS: [&str; 4] = ["baseline", "targeted", "random_control", "pattern_control"];

fn targeted_migration(cfg: &ScenarioConfig, n: usize, ctx: &Ctx, report: &mut ScenarioReport) -> Result<()> {
    let targeted = TargetedMigrationConfig { enabled: true, mode: MigrationMode::Targeted, ..cfg.migration.clone() };
    let configs = [
        None,
        Some(targeted.clone()),
        Some(TargetedMigrationConfig { mode: MigrationMode::RandomControl, ..targeted.clone() }),
        Some(TargetedMigrationConfig { recognizer: RecognizerKind::FitnessControl, ..targeted }),
    ];
    let k = MIGRATION_ARMS.len();
    let traces = fan(n * k, |i| {
        let (a, r) = (i % k, i / k);
        Ok(ecosystem_run(&cfg.ecosystem, configs[a].as_ref(), &mut ctx.rng(&[r as u64]))?.trace)
    })?;
    let mut finals = vec![Vec::with_capacity(n); k];
    for (i, t) in traces.iter().enumerate() {
        finals[i % k].push(response_rate(t, cfg.window)?);
    }
    for (name, v) in MIGRATION_ARMS.iter().zip(&finals) {
        put_mean_sd(report, &format!("{name}_final_rate"), v);
        let whole: Vec<f64> = traces.iter().skip(MIGRATION_ARMS.iter().position(|x| x == name).unwrap()).step_by(k).map(|t| response_rate(t, t.len())).collect::<Result<_>>()?;
        put(report, &format!("{name}_run_rate_mean"), mean_sd(&whole).0);
    }
    let base = mean_sd(&finals[0]).0;
    for a in 1..k {
        put(report, &format!("{}_minus_baseline", MIGRATION_ARMS[a]), mean_sd(&finals[a]).0 - base);
        if n >= 2 {
            put(report, &format!("p[{}_vs_baseline]", MIGRATION_ARMS[a]), welch_t_test(&finals[a], &finals[0])?.1);
        }
    }
    let mut cols = vec!["run"];
    cols.extend(MIGRATION_ARMS);
    let mut table = Table::new(&cols);
    for r in 0..n {
        let mut row = vec![r as f64];
        row.extend(finals.iter().map(|v| v[r]));
        table.push(row);
    }
    report.tables.insert("final_rates".into(), table);
    let mut cols = vec!["event"];
    cols.extend(MIGRATION_ARMS);
    let mut windowed = Table::new(&cols);
    let per_arm: Vec<Vec<f64>> = (0..k)
        .map(|a| {
            let arm: Vec<Vec<f64>> = traces.iter().skip(a).step_by(k).cloned().collect();
            windowed_table(&arm, cfg.window, &["event", "m", "s"]).1
        })
        .collect();
    for w in 0..per_arm[0].len() {
        let mut row = vec![((w + 1) * cfg.window) as f64];
        row.extend(per_arm.iter().map(|v| v[w]));
        windowed.push(row);
    }
    report.tables.insert("windowed".into(), windowed);
    report.notes.push(RESPONSE_RATE_NOTE.into());
    report.notes.push(format!("recognizer: {:?}; arms of one run share the run's stream", cfg.migration.recognizer));
    Ok(())
}
