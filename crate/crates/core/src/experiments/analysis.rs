//! Distribution samplers, goodness-of-fit, species grouping, and the small
//! statistics the scenarios report.

use std::collections::BTreeMap;

use rand::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::ecosystem::HabitatNetwork;
use crate::model::{description_difference, AgentId, SemanticDescription};
use crate::rng::SimRng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Uniform,
    Gaussian,
    Power,
}

/// A distribution over the integers `min..=max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    pub min: u32,
    pub max: u32,
    #[serde(default)]
    pub mean: Option<f64>,
    #[serde(default)]
    pub stddev: Option<f64>,
    #[serde(default)]
    pub exponent: Option<f64>,
}

pub const DEFAULT_POWER_EXPONENT: f64 = 1.5;

impl DistributionSpec {
    pub fn uniform(min: u32, max: u32) -> Self {
        Self { kind: DistributionKind::Uniform, min, max, mean: None, stddev: None, exponent: None }
    }

    pub fn gaussian(min: u32, max: u32, mean: f64, stddev: f64) -> Self {
        Self { kind: DistributionKind::Gaussian, min, max, mean: Some(mean), stddev: Some(stddev), exponent: None }
    }

    pub fn power(min: u32, max: u32, exponent: f64) -> Self {
        Self { kind: DistributionKind::Power, min, max, mean: None, stddev: None, exponent: Some(exponent) }
    }

    pub fn support_len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    fn mean(&self) -> f64 {
        self.mean.unwrap_or((self.min + self.max) as f64 / 2.0)
    }

    fn stddev(&self) -> f64 {
        self.stddev.unwrap_or(self.support_len() as f64 / 4.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max < self.min {
            return Err(Error::InvalidParameter(format!("support {}..={} is empty", self.min, self.max)));
        }
        if self.kind == DistributionKind::Gaussian && !(self.stddev() > 0.0) {
            return Err(Error::InvalidParameter("gaussian stddev must be positive".into()));
        }
        if self.kind == DistributionKind::Power && !(self.exponent.unwrap_or(DEFAULT_POWER_EXPONENT) > 0.0) {
            return Err(Error::InvalidParameter("power exponent must be positive".into()));
        }
        Ok(())
    }

    /// Draws a value in the support. The gaussian is rounded and redrawn
    /// until it lands inside.
    pub fn sample(&self, rng: &mut SimRng) -> u32 {
        match self.kind {
            DistributionKind::Uniform => rng.gen_range(self.min..=self.max),
            DistributionKind::Gaussian => {
                loop {
                    let x = normal_draw(self.mean(), self.stddev(), rng).round();
                    if x >= self.min as f64 && x <= self.max as f64 {
                        return x as u32;
                    }
                }
            }
            DistributionKind::Power => {
                let pmf = self.pmf();
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, p) in pmf.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return self.min + i as u32;
                    }
                }
                self.max
            }
        }
    }

    /// Probability of each support value, in order.
    pub fn pmf(&self) -> Vec<f64> {
        let n = self.support_len();
        let raw: Vec<f64> = match self.kind {
            DistributionKind::Uniform => vec![1.0; n],
            DistributionKind::Gaussian => {
                let d = Normal::new(self.mean(), self.stddev()).expect("validated stddev");
                (0..n)
                    .map(|i| {
                        let x = (self.min as usize + i) as f64;
                        d.cdf(x + 0.5) - d.cdf(x - 0.5)
                    })
                    .collect()
            }
            DistributionKind::Power => {
                let s = self.exponent.unwrap_or(DEFAULT_POWER_EXPONENT);
                (0..n).map(|i| ((i + 1) as f64).powf(-s)).collect()
            }
        };
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }
}

/// Box–Muller draw.
fn normal_draw(mean: f64, sd: f64, rng: &mut SimRng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    mean + sd * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Counts of `values` over `min..=max`; values outside are dropped.
pub fn histogram(values: impl IntoIterator<Item = u32>, min: u32, max: u32) -> Vec<f64> {
    let mut h = vec![0.0; (max - min + 1) as usize];
    for v in values {
        if v >= min && v <= max {
            h[(v - min) as usize] += 1.0;
        }
    }
    h
}

/// Critical values quoted in the literature the diversity experiments follow.
pub fn quoted_critical(df: usize) -> Option<f64> {
    match df {
        16 => Some(7.962),
        10 => Some(3.940),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquaredResult {
    pub statistic: f64,
    pub df: usize,
    /// Lower-tail 5% critical value: the quoted constant for df 16 and 10,
    /// otherwise the 0.05 quantile.
    pub critical: f64,
    pub below_critical: bool,
    /// Upper-tail p-value.
    pub p_value: f64,
}

pub fn chi_squared(observed: &[f64], expected: &[f64], df: usize) -> Result<ChiSquaredResult> {
    if observed.len() != expected.len() {
        return Err(Error::BinMismatch { observed: observed.len(), expected: expected.len() });
    }
    if df == 0 {
        return Err(Error::InvalidParameter("df must be positive".into()));
    }
    if let Some(&e) = expected.iter().find(|&&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter(format!("expected count {e} is not positive")));
    }
    let statistic: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dist = ChiSquared::new(df as f64).expect("df > 0");
    let critical = quoted_critical(df).unwrap_or_else(|| dist.inverse_cdf(0.05));
    Ok(ChiSquaredResult { statistic, df, critical, below_critical: statistic < critical, p_value: 1.0 - dist.cdf(statistic) })
}

/// Expected counts: `pmf` scaled to the observed total.
pub fn expected_counts(pmf: &[f64], total: f64) -> Vec<f64> {
    pmf.iter().map(|p| p * total).collect()
}

/// Total variation distance between two histograms, each normalised.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::BinMismatch { observed: p.len(), expected: q.len() });
    }
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    if sp <= 0.0 || sq <= 0.0 {
        return Err(Error::Empty("histogram"));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a / sp - b / sq).abs()).sum::<f64>())
}

/// Species over distinct agent ids; abundance counts copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesPartition {
    pub species: Vec<Vec<AgentId>>,
    pub abundance: Vec<usize>,
}

impl SpeciesPartition {
    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    /// Species index of every member id.
    pub fn index(&self) -> BTreeMap<AgentId, usize> {
        self.species.iter().enumerate().flat_map(|(s, ids)| ids.iter().map(move |&a| (a, s))).collect()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage grouping: members within `threshold` difference chain
/// into one species. `members` pairs each id with its copy count.
pub fn partition_descriptions(members: &[(AgentId, &SemanticDescription, usize)], threshold: f64) -> SpeciesPartition {
    let n = members.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if description_difference(members[i].1, members[j].1) <= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, (Vec<AgentId>, usize)> = BTreeMap::new();
    for (i, m) in members.iter().enumerate() {
        let r = find(&mut parent, i);
        let g = groups.entry(r).or_default();
        g.0.push(m.0);
        g.1 += m.2;
    }
    let (species, abundance) = groups.into_values().unzip();
    SpeciesPartition { species, abundance }
}

pub const SPECIES_THRESHOLD: f64 = 0.10;

/// Species over every agent copy in the network.
pub fn species_partition(net: &HabitatNetwork) -> SpeciesPartition {
    let mut copies: BTreeMap<AgentId, usize> = BTreeMap::new();
    for h in &net.habitats {
        for &id in h.agents.keys() {
            *copies.entry(id).or_insert(0) += 1;
        }
    }
    let members: Vec<(AgentId, &SemanticDescription, usize)> =
        copies.iter().map(|(&id, &c)| (id, net.catalog.get(id).as_ref(), c)).collect();
    partition_descriptions(&members, SPECIES_THRESHOLD)
}

/// Share of all copies held by each species, largest first.
pub fn relative_abundance(p: &SpeciesPartition) -> Vec<f64> {
    let total: usize = p.abundance.iter().sum();
    let mut shares: Vec<f64> = p.abundance.iter().map(|&a| a as f64 / total.max(1) as f64).collect();
    shares.sort_by(|a, b| b.total_cmp(a));
    shares
}

/// Mean number of species present at `n` random habitats, for every `n`.
pub fn species_area(net: &HabitatNetwork, partition: &SpeciesPartition, resamples: usize, rng: &mut SimRng) -> Vec<(usize, f64)> {
    let index = partition.index();
    let per_habitat: Vec<Vec<usize>> = net
        .habitats
        .iter()
        .map(|h| {
            let mut s: Vec<usize> = h.agents.keys().filter_map(|a| index.get(a).copied()).collect();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();
    // Each resample grows one shuffled order, so every prefix is a uniform
    // random n-subset and counts never drop as n grows.
    let mut totals = vec![0usize; net.len()];
    let mut order: Vec<usize> = (0..net.len()).collect();
    for _ in 0..resamples {
        order.shuffle(rng);
        let mut seen = vec![false; partition.len()];
        let mut count = 0usize;
        for (i, &h) in order.iter().enumerate() {
            for &s in &per_habitat[h] {
                if !seen[s] {
                    seen[s] = true;
                    count += 1;
                }
            }
            totals[i] += count;
        }
    }
    totals.iter().enumerate().map(|(i, &t)| (i + 1, t as f64 / resamples.max(1) as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(x, y)`.
pub fn linear_regression(points: &[(f64, f64)]) -> Result<Regression> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter("regression needs two points".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("x values are all equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(Regression { slope, intercept: my - slope * mx, r_squared })
}

/// log10–log10 regression over points with positive coordinates.
pub fn log_log_regression(points: &[(usize, f64)]) -> Result<Regression> {
    let logs: Vec<(f64, f64)> =
        points.iter().filter(|p| p.0 > 0 && p.1 > 0.0).map(|&(x, y)| ((x as f64).log10(), y.log10())).collect();
    linear_regression(&logs)
}

/// Average ranks, 1-based, ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::BinMismatch { observed: x.len(), expected: y.len() });
    }
    let pts: Vec<(f64, f64)> = ranks(x).into_iter().zip(ranks(y)).collect();
    let r = linear_regression(&pts)?;
    Ok(r.r_squared.sqrt() * r.slope.signum())
}

/// Mean of consecutive non-overlapping windows.
pub fn windowed_means(trace: &[f64], window: usize) -> Vec<f64> {
    trace.chunks_exact(window.max(1)).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Welch's two-sample t-test, two-sided p-value.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidParameter("t-test needs two samples per arm".into()));
    }
    let (ma, sa) = mean_sd(a);
    let (mb, sb) = mean_sd(b);
    let (va, vb) = (sa * sa / a.len() as f64, sb * sb / b.len() as f64);
    if va + vb == 0.0 {
        return Ok((0.0, if ma == mb { 1.0 } else { 0.0 }));
    }
    let t = (ma - mb) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    Ok((t, 2.0 * (1.0 - dist.cdf(t.abs()))))
}
