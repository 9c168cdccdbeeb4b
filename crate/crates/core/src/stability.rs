//! Macro-state occupation and the degree of instability.
//!
//! The state space of a population is far too large for an explicit
//! transition matrix, so occupation probabilities are Monte-Carlo estimates:
//! the fraction of independent runs in a macro-state at each generation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const LEVEL_TOLERANCE: f64 = 1e-9;

/// "Possesses at least one individual at `level` × the global maximum fitness".
///
/// With `max_len` set, only individuals of at most that many agents count.
/// Under parsimony the global maximum fitness individual is the shortest
/// exact solution, so a bloated copy of it is a different individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroStateDef {
    pub name: String,
    pub level: f64,
    pub tolerance: f64,
    #[serde(default)]
    pub max_len: Option<usize>,
}

impl MacroStateDef {
    pub fn new(name: &str, level: f64) -> Self {
        Self { name: name.to_string(), level, tolerance: LEVEL_TOLERANCE, max_len: None }
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = Some(max_len);
        self
    }

    pub fn max() -> Self {
        Self::new("M_max", 1.0)
    }

    pub fn half() -> Self {
        Self::new("M_half", 0.5)
    }

    /// `lengths[i]` is the agent count of the individual with `fitness[i]`.
    pub fn holds(&self, fitness: &[f64], lengths: &[usize], global_max: f64) -> bool {
        let target = self.level * global_max;
        let short = |i: usize| self.max_len.map_or(true, |m| lengths.get(i).map_or(true, |&l| l <= m));
        fitness.iter().enumerate().any(|(i, &f)| (f - target).abs() <= self.tolerance && short(i))
    }
}

/// One flag per definition; flags may overlap.
pub fn classify_generation(fitness: &[f64], lengths: &[usize], defs: &[MacroStateDef], global_max: f64) -> Vec<bool> {
    defs.iter().map(|d| d.holds(fitness, lengths, global_max)).collect()
}

/// Per-generation flags of one run: `flags[t][m]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OccupationTrace {
    pub flags: Vec<Vec<bool>>,
}

impl OccupationTrace {
    pub fn push(&mut self, flags: Vec<bool>) {
        self.flags.push(flags);
    }

    pub fn horizon(&self) -> usize {
        self.flags.len()
    }

    /// Index in the exclusive partition {defs[0], defs[1] ∖ defs[0], ..., none}.
    pub fn partition_state(&self, t: usize) -> usize {
        let f = &self.flags[t];
        f.iter().position(|&x| x).unwrap_or(f.len())
    }
}

/// `p[t][m]`: fraction of runs in macro-state `m` at generation `t`.
pub fn occupation_probabilities(runs: &[OccupationTrace]) -> Result<Vec<Vec<f64>>> {
    let first = runs.first().ok_or(Error::Empty("run list"))?;
    let horizon = first.horizon();
    if runs.iter().any(|r| r.horizon() != horizon) {
        return Err(Error::InvalidParameter("runs have unequal horizons".into()));
    }
    let n = runs.len() as f64;
    Ok((0..horizon)
        .map(|t| {
            let m = first.flags[t].len();
            (0..m).map(|k| runs.iter().filter(|r| r.flags[t][k]).count() as f64 / n).collect()
        })
        .collect())
}

/// Distribution over the exclusive partition at generation `t` (last entry: none of the states).
pub fn partition_distribution(runs: &[OccupationTrace], t: usize) -> Result<Vec<f64>> {
    let first = runs.first().ok_or(Error::Empty("run list"))?;
    let m = first.flags.get(t).ok_or(Error::InvalidParameter("generation beyond horizon".into()))?.len();
    let mut p = vec![0.0; m + 1];
    for r in runs {
        p[r.partition_state(t)] += 1.0;
    }
    p.iter_mut().for_each(|x| *x /= runs.len() as f64);
    Ok(p)
}

/// `d_ins = −Σ p log_N p` over an N-way partition.
pub fn degree_of_instability(p: &[f64], n: usize) -> Result<f64> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || p.iter().any(|&x| x < 0.0) || p.len() > n || n < 2 {
        return Err(Error::NotADistribution(sum));
    }
    let ln_n = (n as f64).ln();
    Ok(p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln() / ln_n).sum::<f64>().max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub p_hat: BTreeMap<String, f64>,
    pub d_ins: f64,
}

/// Limit estimate at the last generation over the partition
/// {M_1, M_2 ∖ M_1, ..., other}.
pub fn stability_report(runs: &[OccupationTrace], defs: &[MacroStateDef]) -> Result<StabilityReport> {
    let horizon = runs.first().map(OccupationTrace::horizon).unwrap_or(0);
    if horizon == 0 {
        return Err(Error::Empty("trace"));
    }
    let p = partition_distribution(runs, horizon - 1)?;
    let d_ins = degree_of_instability(&p, p.len())?;
    let mut p_hat = BTreeMap::new();
    for (d, &x) in defs.iter().zip(&p) {
        p_hat.insert(d.name.clone(), x);
    }
    p_hat.insert("other".to_string(), p[defs.len()]);
    Ok(StabilityReport { p_hat, d_ins })
}
