//! Standalone evolving-population setups (no habitat network).

use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evolution::{Objective, Population};
use crate::model::{AgentCatalog, AgentId, SemanticDescription, UserRequest};
use crate::rng::SimRng;
use crate::Result;

/// An alphabet of agents and the requests a population evolves against.
#[derive(Debug, Clone)]
pub struct StandaloneSetup {
    pub catalog: AgentCatalog,
    pub alphabet: Vec<AgentId>,
    pub requests: Vec<UserRequest>,
    /// Agents forming each request's exact solution.
    pub optima: Vec<Vec<AgentId>>,
}

impl StandaloneSetup {
    pub fn objectives(&self) -> Vec<Objective> {
        self.requests.iter().map(|r| Objective::compile(r, &self.alphabet, &self.catalog)).collect()
    }
}

/// Draws `n` distinct attribute ids not in `taken`.
fn fresh_ids(n: usize, taken: &mut Vec<u32>, rng: &mut SimRng) -> Vec<u32> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let id = rng.gen_range(1..=100);
        if !taken.contains(&id) {
            taken.push(id);
            out.push(id);
        }
    }
    out
}

fn value(rng: &mut SimRng) -> u32 {
    rng.gen_range(3..=98)
}

/// Agent description built from id/value pairs.
fn agent(raw: Vec<(u32, u32)>) -> SemanticDescription {
    SemanticDescription::for_agent(&raw).expect("generated agent description is valid")
}

/// Decoy agent: ids drawn from the request tuples `near` with random values.
fn decoy(near: &[(u32, u32)], rng: &mut SimRng) -> SemanticDescription {
    let ids: Vec<u32> = near.iter().map(|t| t.0).collect();
    let n = rng.gen_range(3..=6).min(ids.len().max(3));
    let chosen: Vec<u32> = if ids.len() >= n {
        ids.choose_multiple(rng, n).copied().collect()
    } else {
        let mut taken = ids.clone();
        fresh_ids(n, &mut taken, rng)
    };
    agent(chosen.into_iter().map(|id| (id, value(rng))).collect())
}

/// Knobs of the single-optimum stability landscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityLandscape {
    pub alphabet_size: usize,
    pub optimum_len: usize,
    pub tuples_per_part: usize,
    /// Mismatch a near-twin of an optimum agent leaves when substituted for it.
    pub twin_mismatch: u32,
    pub with_twins: bool,
}

impl Default for StabilityLandscape {
    fn default() -> Self {
        Self { alphabet_size: 20, optimum_len: 2, tuples_per_part: 4, twin_mismatch: 2, with_twins: true }
    }
}

/// One request whose exact answer is `optimum_len` specific agents; the rest
/// of the alphabet are near-twins of those agents and decoys.
pub fn stability_setup(land: &StabilityLandscape, rng: &mut SimRng) -> StandaloneSetup {
    let mut taken = Vec::new();
    let mut descs = Vec::new();
    let mut parts = Vec::new();
    let mut req_tuples = Vec::new();
    for _ in 0..land.optimum_len {
        let ids = fresh_ids(land.tuples_per_part, &mut taken, rng);
        let d = agent(ids.iter().map(|&id| (id, value(rng))).collect());
        req_tuples.extend(d.to_raw());
        parts.push(d.clone());
        descs.push(d);
    }
    if land.with_twins {
        for p in parts.clone() {
            let mut raw = p.to_raw();
            let mut left = land.twin_mismatch;
            let mut i = 0;
            while left > 0 {
                let n = raw.len();
                raw[i % n].1 += 1;
                left -= 1;
                i += 1;
            }
            descs.push(agent(raw));
        }
    }
    while descs.len() < land.alphabet_size {
        descs.push(decoy(&req_tuples, rng));
    }
    let catalog = AgentCatalog::from_descriptions(descs);
    let alphabet: Vec<AgentId> = catalog.ids().collect();
    let optimum: Vec<AgentId> = (0..land.optimum_len as AgentId).collect();
    StandaloneSetup {
        catalog,
        alphabet,
        requests: vec![UserRequest::new(parts, 0).expect("parts")],
        optima: vec![optimum],
    }
}

/// Two requests whose exact answers use disjoint halves of the alphabet.
pub fn two_cluster_setup(alphabet_size: usize, optimum_len: usize, rng: &mut SimRng) -> StandaloneSetup {
    let half = alphabet_size / 2;
    let mut taken = Vec::new();
    let mut descs: Vec<SemanticDescription> = Vec::with_capacity(alphabet_size);
    let mut requests = Vec::new();
    let mut optima = Vec::new();
    for side in 0..2 {
        let start = side * half;
        let size = if side == 0 { half } else { alphabet_size - half };
        let mut parts = Vec::new();
        let mut side_tuples = Vec::new();
        let mut side_descs = Vec::new();
        for _ in 0..optimum_len {
            let n = rng.gen_range(3..=6);
            let ids = fresh_ids(n, &mut taken, rng);
            let d = agent(ids.iter().map(|&id| (id, value(rng))).collect());
            side_tuples.extend(d.to_raw());
            parts.push(d.clone());
            side_descs.push(d);
        }
        while side_descs.len() < size {
            side_descs.push(decoy(&side_tuples, rng));
        }
        descs.extend(side_descs);
        requests.push(UserRequest::new(parts, 0).expect("parts"));
        optima.push((start as AgentId..(start + optimum_len) as AgentId).collect());
    }
    let catalog = AgentCatalog::from_descriptions(descs);
    let alphabet = catalog.ids().collect();
    StandaloneSetup { catalog, alphabet, requests, optima }
}

/// Population seeded with one-agent individuals from the whole alphabet.
pub fn pool_population(setup: &StandaloneSetup, params: crate::evolution::EvolutionParams, rng: &mut SimRng) -> Result<Population> {
    Population::from_pool(setup.alphabet.clone(), &[], setup.objectives(), params, rng)
}
