//! Physical Complexity of populations of variable-length sequences.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sequences of symbols drawn from an alphabet of `alphabet_size` symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SitePopulation {
    sequences: Vec<Vec<u32>>,
    alphabet_size: usize,
}

impl SitePopulation {
    pub fn new(sequences: Vec<Vec<u32>>, alphabet_size: usize) -> Result<Self> {
        if alphabet_size < 2 {
            return Err(Error::InvalidParameter("alphabet needs at least two symbols".into()));
        }
        if sequences.is_empty() || sequences.iter().any(Vec::is_empty) {
            return Err(Error::Empty("sequence"));
        }
        Ok(Self { sequences, alphabet_size })
    }

    pub fn sequences(&self) -> &[Vec<u32>] {
        &self.sequences
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn ell_max(&self) -> usize {
        self.sequences.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Number of sequences with length ≥ `site` (1-based).
    pub fn sample_size(&self, site: usize) -> usize {
        self.sequences.iter().filter(|s| s.len() >= site).count()
    }

    /// Sub-population of the listed members.
    pub fn subset(&self, members: &[usize]) -> Result<Self> {
        Self::new(members.iter().map(|&i| self.sequences[i].clone()).collect(), self.alphabet_size)
    }

    /// Entropy at `site` with frequencies taken over sequences reaching it.
    fn raw_entropy(&self, site: usize) -> f64 {
        let mut counts = std::collections::BTreeMap::new();
        let mut n = 0usize;
        for s in &self.sequences {
            if let Some(&x) = s.get(site - 1) {
                *counts.entry(x).or_insert(0usize) += 1;
                n += 1;
            }
        }
        let ln_d = (self.alphabet_size as f64).ln();
        let h: f64 = counts
            .values()
            .map(|&c| {
                let p = c as f64 / n as f64;
                -p * p.ln() / ln_d
            })
            .sum();
        h.clamp(0.0, 1.0)
    }
}

/// `H_V(i) = −Σ_d p_d(i) log_|D| p_d(i)` for `1 ≤ i ≤ ℓ_V`.
pub fn per_site_entropy(pop: &SitePopulation, site: usize) -> Result<f64> {
    let ell_v = ell_v(pop, 1);
    if site == 0 || site > ell_v {
        return Err(Error::SiteOutOfRange { site, ell_v });
    }
    Ok(pop.raw_entropy(site))
}

/// Largest ℓ with `sampleSize(ℓ) ≥ |D|·ℓ/|T|`, or 0.
///
/// Whenever the two-sided form (additionally `sampleSize(ℓ+1) < |D|·ℓ/|T|`)
/// has a solution it is this ℓ; the one-sided rule also answers when the
/// two-sided form has none.
pub fn ell_v(pop: &SitePopulation, clusters: usize) -> usize {
    let t = clusters.max(1);
    (1..=pop.ell_max())
        .rev()
        .find(|&l| pop.sample_size(l) * t >= pop.alphabet_size * l)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub ell_v: usize,
    pub per_site_entropy: Vec<f64>,
    pub c_v: f64,
    pub e: f64,
}

/// `C_V = ℓ_V − Σ H_V(i)` and `E = C_V/ℓ_V`, with ℓ_V taken for `clusters` = |T|.
pub fn complexity_with_clusters(pop: &SitePopulation, clusters: usize) -> Result<ComplexityReport> {
    let l = ell_v(pop, clusters);
    if l == 0 {
        return Err(Error::DegeneratePopulation);
    }
    let per_site_entropy: Vec<f64> = (1..=l).map(|i| pop.raw_entropy(i)).collect();
    let c_v = l as f64 - per_site_entropy.iter().sum::<f64>();
    Ok(ComplexityReport { ell_v: l, per_site_entropy, c_v, e: c_v / l as f64 })
}

pub fn complexity_cv(pop: &SitePopulation) -> Result<ComplexityReport> {
    complexity_with_clusters(pop, 1)
}

/// Limit of E for a population made of |T| equally sized pure clusters.
pub fn clustering_coefficient_target(alphabet_size: usize, clusters: usize) -> f64 {
    1.0 - (clusters as f64).ln() / (alphabet_size as f64).ln()
}

/// Assignment of each sequence to one of `k` clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterSet {
    pub fn new(labels: Vec<usize>, k: usize) -> Self {
        Self { labels, k }
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.labels.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// Number of non-empty clusters.
    pub fn k_effective(&self) -> usize {
        self.members().iter().filter(|m| !m.is_empty()).count()
    }

    /// Relabel so that non-empty clusters are numbered by first appearance.
    pub fn compacted(&self) -> Self {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&c| {
                if map[c] == usize::MAX {
                    map[c] = next;
                    next += 1;
                }
                map[c]
            })
            .collect();
        Self { labels, k: next }
    }
}

/// Mean per-cluster Efficiency; a single cluster gives plain E.
pub fn efficiency_ec(pop: &SitePopulation, clusters: &ClusterSet) -> Result<f64> {
    if clusters.k == 1 {
        return Ok(complexity_cv(pop)?.e);
    }
    let mut total = 0.0;
    for (c, members) in clusters.members().iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyCluster(c));
        }
        total += complexity_with_clusters(&pop.subset(members)?, clusters.k)?.e;
    }
    Ok(total / clusters.k as f64)
}

/// E_c of the non-empty clusters, evaluated with |T| = k_effective.
/// Degenerate clusters (ℓ_V = 0) contribute 0.
pub fn efficiency_ec_lenient(pop: &SitePopulation, clusters: &ClusterSet) -> f64 {
    let members: Vec<Vec<usize>> = clusters.members().into_iter().filter(|m| !m.is_empty()).collect();
    let t = members.len();
    if t == 0 {
        return 0.0;
    }
    let total: f64 = members
        .iter()
        .map(|m| {
            pop.subset(m)
                .and_then(|p| complexity_with_clusters(&p, t))
                .map(|r| r.e)
                .unwrap_or(0.0)
        })
        .sum();
    total / t as f64
}
