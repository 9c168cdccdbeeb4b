//! Sequence distance, average-link agglomerative clustering, and greedy
//! Physical-Complexity clustering.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::complexity::{efficiency_ec_lenient, ClusterSet, SitePopulation};
use crate::model::{AgentCatalog, AgentId, AttributeTuple, MISSING_PENALTY};
use crate::{Error, Result};

/// `Σ_{b ∈ B} min_{a ∈ A, a.id = b.id} |b − a|`, 100 for ids absent from A.
pub fn directed_distance(a: &[AttributeTuple], b: &[AttributeTuple]) -> u32 {
    b.iter()
        .map(|t| {
            a.iter()
                .filter(|s| s.id == t.id)
                .map(|s| s.value.abs_diff(t.value) as u32)
                .min()
                .unwrap_or(MISSING_PENALTY)
        })
        .sum()
}

pub fn sequence_tuples(seq: &[AgentId], catalog: &AgentCatalog) -> Vec<AttributeTuple> {
    let mut v: Vec<AttributeTuple> =
        seq.iter().flat_map(|&a| catalog.get(a).tuples().iter().copied()).collect();
    v.sort_unstable();
    v
}

/// Symmetrized distance `max(d(a,b), d(b,a))`.
pub fn sequence_distance(a: &[AgentId], b: &[AgentId], catalog: &AgentCatalog) -> f64 {
    let (x, y) = (sequence_tuples(a, catalog), sequence_tuples(b, catalog));
    tuple_distance(&x, &y)
}

pub fn tuple_distance(x: &[AttributeTuple], y: &[AttributeTuple]) -> f64 {
    directed_distance(x, y).max(directed_distance(y, x)) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self { n, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("matrix must be square".into()));
        }
        Ok(Self { n, data: rows.concat() })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Surviving slot (the lower index).
    pub into: usize,
    pub absorbed: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Replays the first `n − k` merges.
    pub fn cut(&self, k: usize) -> ClusterSet {
        let k = k.clamp(1, self.n.max(1));
        let mut slot: Vec<usize> = (0..self.n).collect();
        for m in self.merges.iter().take(self.n - k) {
            for s in slot.iter_mut() {
                if *s == m.absorbed {
                    *s = m.into;
                }
            }
        }
        ClusterSet::new(slot, self.n).compacted()
    }
}

/// Average-link agglomeration down to one cluster. `weights` gives the
/// multiplicity of each point (identical copies collapsed into one row).
pub fn average_link_dendrogram(matrix: &DistanceMatrix, weights: Option<&[usize]>) -> Dendrogram {
    let n = matrix.len();
    let mut d = matrix.data.clone();
    let mut size: Vec<usize> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1; n],
    };
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if active[j] && d[i * n + j] < best.0 {
                    best = (d[i * n + j], i, j);
                }
            }
        }
        let (h, i, j) = best;
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for m in 0..n {
            if active[m] && m != i && m != j {
                let v = (si * d[i * n + m] + sj * d[j * n + m]) / (si + sj);
                d[i * n + m] = v;
                d[m * n + i] = v;
            }
        }
        active[j] = false;
        size[i] += size[j];
        merges.push(Merge { into: i, absorbed: j, height: h, size: size[i] });
    }
    Dendrogram { n, merges }
}

pub fn average_link_cluster(matrix: &DistanceMatrix, k: usize) -> Result<ClusterSet> {
    if k == 0 || k > matrix.len() {
        return Err(Error::InvalidParameter(format!("k={k} for {} points", matrix.len())));
    }
    Ok(average_link_dendrogram(matrix, None).cut(k))
}

/// Indices of identical sequences, groups in order of first appearance.
pub fn duplicate_groups(seqs: &[Vec<u32>]) -> Vec<Vec<usize>> {
    let mut index: HashMap<&[u32], usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, s) in seqs.iter().enumerate() {
        let g = *index.entry(s.as_slice()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

/// Greedy clustering maximizing E_c. Duplicate groups are placed largest
/// first; each group goes, with all its copies, to the cluster giving the
/// highest E_c of the sequences placed so far (ties to the lowest cluster).
pub fn physical_complexity_cluster(pop: &SitePopulation, k: usize) -> Result<ClusterSet> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let seqs = pop.sequences();
    let mut groups = duplicate_groups(seqs);
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));

    let mut placed: Vec<usize> = Vec::with_capacity(seqs.len());
    let mut placed_labels: Vec<usize> = Vec::with_capacity(seqs.len());
    for g in &groups {
        let mut best = (f64::NEG_INFINITY, 0);
        if k > 1 {
            for c in 0..k {
                let mut members = placed.clone();
                members.extend_from_slice(g);
                let mut labels = placed_labels.clone();
                labels.extend(std::iter::repeat(c).take(g.len()));
                let sub = pop.subset(&members)?;
                let ec = efficiency_ec_lenient(&sub, &ClusterSet::new(labels, k));
                if ec > best.0 {
                    best = (ec, c);
                }
            }
        }
        placed.extend_from_slice(g);
        placed_labels.extend(std::iter::repeat(best.1).take(g.len()));
    }
    let mut labels = vec![0; seqs.len()];
    for (&i, &c) in placed.iter().zip(&placed_labels) {
        labels[i] = c;
    }
    Ok(ClusterSet::new(labels, k))
}
