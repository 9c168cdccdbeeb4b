//! Variable-length genetic algorithm over agent-sequences.
//!
//! Individuals are stored as genomes of local symbol indices into the
//! population's alphabet; `Population::agent_ids` maps them back.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{AgentCatalog, AgentId, UserRequest, MISSING_PENALTY};
use crate::rng::SimRng;
use crate::{Error, Result};

pub type Genome = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionParams {
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub pop_size_factor: f64,
    pub min_population: usize,
    /// Optional ceiling on the resized population; `None` follows the sizing rule exactly.
    pub max_population: Option<usize>,
    pub max_generations: usize,
    /// `None` disables the stall rule (fixed-horizon experiments).
    pub stall_generations: Option<usize>,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        Self {
            crossover_rate: 0.10,
            mutation_rate: 0.10,
            pop_size_factor: 1.29,
            min_population: 10,
            max_population: None,
            max_generations: 1000,
            stall_generations: Some(50),
        }
    }
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<()> {
        let frac = |x: f64| (0.0..=1.0).contains(&x);
        if !frac(self.crossover_rate) || !frac(self.mutation_rate) {
            return Err(Error::InvalidParameter("rates must lie in [0,1]".into()));
        }
        if self.pop_size_factor <= 0.0 || self.min_population < 2 {
            return Err(Error::InvalidParameter("population sizing".into()));
        }
        Ok(())
    }
}

/// Total mismatch of a sequence against a request, straight from the descriptions.
pub fn total_mismatch(seq: &[AgentId], req: &UserRequest, catalog: &AgentCatalog) -> u32 {
    req.required()
        .map(|r| {
            seq.iter()
                .flat_map(|&a| catalog.get(a).tuples().iter())
                .filter(|t| t.id == r.id)
                .map(|t| t.value.abs_diff(r.value) as u32)
                .min()
                .unwrap_or(MISSING_PENALTY)
        })
        .sum()
}

/// `1 / (1 + Σ_r |r − a|)`.
pub fn fitness(seq: &[AgentId], req: &UserRequest, catalog: &AgentCatalog) -> f64 {
    1.0 / (1.0 + total_mismatch(seq, req, catalog) as f64)
}

/// Parsimony pressure: sequences longer than the mean are scaled down.
pub fn effective_fitness(fitness: f64, len: usize, mean_len: f64) -> f64 {
    if len as f64 > mean_len {
        fitness * mean_len / len as f64
    } else {
        fitness
    }
}

/// A request compiled against an alphabet: `table[s * n_req + r]` is the
/// mismatch symbol `s` alone leaves on required tuple `r`.
#[derive(Debug, Clone)]
pub struct Objective {
    n_req: usize,
    table: Vec<u8>,
}

impl Objective {
    pub fn compile(req: &UserRequest, alphabet: &[AgentId], catalog: &AgentCatalog) -> Self {
        let required: Vec<_> = req.required().copied().collect();
        let n_req = required.len();
        let mut table = Vec::with_capacity(alphabet.len() * n_req);
        for &a in alphabet {
            let tuples = catalog.get(a).tuples();
            for r in &required {
                let m = tuples
                    .iter()
                    .filter(|t| t.id == r.id)
                    .map(|t| t.value.abs_diff(r.value))
                    .min()
                    .unwrap_or(MISSING_PENALTY as u8);
                table.push(m);
            }
        }
        Self { n_req, table }
    }

    pub fn mismatch(&self, genome: &[u32]) -> u32 {
        let mut best = [MISSING_PENALTY as u8; 64];
        if self.n_req <= best.len() {
            let best = &mut best[..self.n_req];
            for &s in genome {
                let row = &self.table[s as usize * self.n_req..][..self.n_req];
                for (b, &m) in best.iter_mut().zip(row) {
                    *b = (*b).min(m);
                }
            }
            best.iter().map(|&b| b as u32).sum()
        } else {
            (0..self.n_req)
                .map(|r| {
                    genome
                        .iter()
                        .map(|&s| self.table[s as usize * self.n_req + r])
                        .min()
                        .unwrap_or(MISSING_PENALTY as u8) as u32
                })
                .sum()
        }
    }

    pub fn fitness(&self, genome: &[u32]) -> f64 {
        1.0 / (1.0 + self.mismatch(genome) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub fitness: Vec<f64>,
    pub max_fitness: f64,
    pub avg_fitness: f64,
}

impl FitnessReport {
    fn from_values(fitness: Vec<f64>) -> Self {
        let max_fitness = fitness.iter().copied().fold(0.0, f64::max);
        let avg_fitness = fitness.iter().sum::<f64>() / fitness.len() as f64;
        Self { fitness, max_fitness, avg_fitness }
    }
}

/// Chooses which individuals are crossed with which.
pub trait CrossoverPairing {
    fn pairs(&mut self, genomes: &[Genome], n_pairs: usize, rng: &mut SimRng) -> Vec<(usize, usize)>;
}

/// Unconstrained pairing: every individual may be crossed with any other.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPairing;

impl CrossoverPairing for RandomPairing {
    fn pairs(&mut self, genomes: &[Genome], n_pairs: usize, rng: &mut SimRng) -> Vec<(usize, usize)> {
        pair_within_labels(&vec![0; genomes.len()], n_pairs, rng)
    }
}

/// Draws up to `n_pairs` disjoint pairs whose members share a label. The first
/// member is a uniformly random unused individual, its partner a uniformly
/// random unused individual with the same label.
pub fn pair_within_labels(labels: &[usize], n_pairs: usize, rng: &mut SimRng) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(rng);
    let mut used = vec![false; labels.len()];
    let mut out = Vec::with_capacity(n_pairs);
    for &i in &order {
        if out.len() == n_pairs {
            break;
        }
        if used[i] {
            continue;
        }
        used[i] = true;
        let partners: Vec<usize> =
            (0..labels.len()).filter(|&j| !used[j] && labels[j] == labels[i]).collect();
        if let Some(&j) = partners.choose(rng) {
            used[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// One-point crossover. Children swap tails after a cut in `[1, min_len-1]`.
pub fn crossover<T: Clone>(a: &[T], b: &[T], rng: &mut SimRng) -> (Vec<T>, Vec<T>) {
    let min_len = a.len().min(b.len());
    if min_len < 2 {
        return (a.to_vec(), b.to_vec());
    }
    let cut = rng.gen_range(1..min_len);
    crossover_at(a, b, cut)
}

pub fn crossover_at<T: Clone>(a: &[T], b: &[T], cut: usize) -> (Vec<T>, Vec<T>) {
    let mut c1 = a[..cut].to_vec();
    c1.extend_from_slice(&b[cut..]);
    let mut c2 = b[..cut].to_vec();
    c2.extend_from_slice(&a[cut..]);
    (c1, c2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MutationKind {
    Insert,
    Replace,
    Delete,
}

/// One point mutation with a uniformly chosen kind and locus.
pub fn mutate<T: Clone>(seq: &mut Vec<T>, pool: &[T], rng: &mut SimRng) -> MutationKind {
    let kind = loop {
        let k = match rng.gen_range(0..3) {
            0 => MutationKind::Insert,
            1 => MutationKind::Replace,
            _ => MutationKind::Delete,
        };
        if !(k == MutationKind::Delete && seq.len() <= 1) {
            break k;
        }
    };
    match kind {
        MutationKind::Insert => {
            let at = rng.gen_range(0..=seq.len());
            seq.insert(at, pool.choose(rng).expect("non-empty pool").clone());
        }
        MutationKind::Replace => {
            let at = rng.gen_range(0..seq.len());
            seq[at] = pool.choose(rng).expect("non-empty pool").clone();
        }
        MutationKind::Delete => {
            let at = rng.gen_range(0..seq.len());
            seq.remove(at);
        }
    }
    kind
}

/// Roulette-wheel sampling with replacement.
pub fn select(weights: &[f64], n: usize, rng: &mut SimRng) -> Vec<usize> {
    if weights.len() == 1 {
        return vec![0; n];
    }
    let dist = WeightedIndex::new(weights).expect("positive fitness");
    (0..n).map(|_| dist.sample(rng)).collect()
}

#[derive(Debug, Clone)]
pub struct Population {
    alphabet: Vec<AgentId>,
    objectives: Vec<Objective>,
    individuals: Vec<Genome>,
    /// `per_objective[j][i]`: fitness of individual `i` under objective `j`.
    per_objective: Vec<Vec<f64>>,
    raw: Vec<f64>,
    generation: usize,
    params: EvolutionParams,
}

impl Population {
    /// Individuals are given as local symbol indices into `alphabet`.
    pub fn new(
        alphabet: Vec<AgentId>,
        objectives: Vec<Objective>,
        individuals: Vec<Genome>,
        params: EvolutionParams,
    ) -> Result<Self> {
        params.validate()?;
        if alphabet.is_empty() {
            return Err(Error::Empty("alphabet"));
        }
        if objectives.is_empty() {
            return Err(Error::Empty("objectives"));
        }
        if individuals.is_empty() || individuals.iter().any(|g| g.is_empty()) {
            return Err(Error::Empty("individual"));
        }
        if individuals.iter().flatten().any(|&s| s as usize >= alphabet.len()) {
            return Err(Error::InvalidParameter("symbol outside alphabet".into()));
        }
        let mut pop = Self {
            alphabet,
            objectives,
            individuals,
            per_objective: Vec::new(),
            raw: Vec::new(),
            generation: 0,
            params,
        };
        pop.evaluate();
        Ok(pop)
    }

    /// Seeds every alphabet symbol as a one-agent individual plus the given
    /// stored sequences, then clones random seeds up to the sizing rule.
    pub fn from_pool(
        alphabet: Vec<AgentId>,
        stored: &[Genome],
        objectives: Vec<Objective>,
        params: EvolutionParams,
        rng: &mut SimRng,
    ) -> Result<Self> {
        let mut seeds: Vec<Genome> = (0..alphabet.len() as u32).map(|s| vec![s]).collect();
        seeds.extend(stored.iter().cloned());
        let mut individuals = seeds.clone();
        let mean = mean_len(&individuals);
        let target = size_rule(&params, alphabet.len(), mean);
        while individuals.len() < target {
            individuals.push(seeds.choose(rng).expect("seeds").clone());
        }
        Self::new(alphabet, objectives, individuals, params)
    }

    /// Random individuals with lengths uniform in `[min_len, max_len]`.
    pub fn random(
        alphabet: Vec<AgentId>,
        objectives: Vec<Objective>,
        params: EvolutionParams,
        min_len: usize,
        max_len: usize,
        rng: &mut SimRng,
    ) -> Result<Self> {
        if min_len == 0 || max_len < min_len {
            return Err(Error::InvalidParameter("initial length range".into()));
        }
        let target = size_rule(&params, alphabet.len(), (min_len + max_len) as f64 / 2.0);
        let d = alphabet.len() as u32;
        let individuals = (0..target)
            .map(|_| {
                let len = rng.gen_range(min_len..=max_len);
                (0..len).map(|_| rng.gen_range(0..d)).collect()
            })
            .collect();
        Self::new(alphabet, objectives, individuals, params)
    }

    fn evaluate(&mut self) {
        self.per_objective = self
            .objectives
            .iter()
            .map(|o| self.individuals.iter().map(|g| o.fitness(g)).collect())
            .collect();
        self.raw = (0..self.individuals.len())
            .map(|i| self.per_objective.iter().map(|f| f[i]).fold(0.0, f64::max))
            .collect();
    }

    pub fn alphabet(&self) -> &[AgentId] {
        &self.alphabet
    }

    pub fn individuals(&self) -> &[Genome] {
        &self.individuals
    }

    pub fn fitness(&self) -> &[f64] {
        &self.raw
    }

    pub fn objective_fitness(&self, j: usize) -> &[f64] {
        &self.per_objective[j]
    }

    pub fn n_objectives(&self) -> usize {
        self.objectives.len()
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn params(&self) -> &EvolutionParams {
        &self.params
    }

    pub fn mean_len(&self) -> f64 {
        mean_len(&self.individuals)
    }

    pub fn agent_ids(&self, genome: &[u32]) -> Vec<AgentId> {
        genome.iter().map(|&s| self.alphabet[s as usize]).collect()
    }

    pub fn report(&self) -> FitnessReport {
        FitnessReport::from_values(self.raw.clone())
    }

    /// Some individual has fitness 1.
    pub fn optimum_reached(&self) -> bool {
        self.raw.iter().any(|&x| x >= 1.0)
    }

    /// Every objective has an individual at fitness 1.
    pub fn all_objectives_met(&self) -> bool {
        self.per_objective.iter().all(|f| f.iter().any(|&x| x >= 1.0))
    }

    /// Highest raw fitness; ties go to the shorter, then lexicographically
    /// smaller agent-id list.
    pub fn best(&self) -> (Vec<AgentId>, f64) {
        let mut best: Option<(Vec<AgentId>, f64)> = None;
        for (g, &f) in self.individuals.iter().zip(&self.raw) {
            let ids = self.agent_ids(g);
            let better = match &best {
                None => true,
                Some((b, bf)) => {
                    f > *bf || (f == *bf && (ids.len(), &ids) < (b.len(), b))
                }
            };
            if better {
                best = Some((ids, f));
            }
        }
        best.expect("non-empty population")
    }

    /// Evaluate → select → crossover → mutate; returns the new population's fitness.
    pub fn step_generation(&mut self, pairing: &mut dyn CrossoverPairing, rng: &mut SimRng) -> FitnessReport {
        let mean = self.mean_len();
        let target = size_rule(&self.params, self.alphabet.len(), mean);
        let lens: Vec<usize> = self.individuals.iter().map(Vec::len).collect();

        let weights: Vec<f64> = self.raw.iter().zip(&lens).map(|(&f, &l)| effective_fitness(f, l, mean)).collect();
        let parents = select(&weights, target, rng);
        let mut next: Vec<Genome> = parents.into_iter().map(|i| self.individuals[i].clone()).collect();

        let n_pairs = (self.params.crossover_rate * next.len() as f64 / 2.0).round() as usize;
        if n_pairs > 0 {
            for (i, j) in pairing.pairs(&next, n_pairs, rng) {
                let (a, b) = crossover(&next[i], &next[j], rng);
                next[i] = a;
                next[j] = b;
            }
        }

        let n_mut = ((self.params.mutation_rate * next.len() as f64).round() as usize).min(next.len());
        if n_mut > 0 {
            let symbols: Vec<u32> = (0..self.alphabet.len() as u32).collect();
            for i in rand::seq::index::sample(rng, next.len(), n_mut).into_iter() {
                mutate(&mut next[i], &symbols, rng);
            }
        }

        self.individuals = next;
        self.generation += 1;
        self.evaluate();
        self.report()
    }
}

fn mean_len(genomes: &[Genome]) -> f64 {
    genomes.iter().map(Vec::len).sum::<usize>() as f64 / genomes.len().max(1) as f64
}

/// `max(min_population, ceil(factor·|D|·ℓ̄))`, optionally capped.
pub fn size_rule(params: &EvolutionParams, alphabet: usize, mean_len: f64) -> usize {
    let n = (params.pop_size_factor * alphabet as f64 * mean_len).ceil() as usize;
    let n = n.max(params.min_population);
    match params.max_population {
        Some(cap) => n.min(cap.max(params.min_population)),
        None => n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub best: Vec<AgentId>,
    pub best_fitness: f64,
    pub generations_used: usize,
    pub trace: Vec<FitnessReport>,
}

/// Evolves until the optimum is present, the stall rule fires, or the
/// generation cap is hit.
pub fn run_population(
    pop: &mut Population,
    pairing: Option<&mut dyn CrossoverPairing>,
    rng: &mut SimRng,
) -> RunOutcome {
    let mut default_pairing = RandomPairing;
    let pairing: &mut dyn CrossoverPairing = match pairing {
        Some(p) => p,
        None => &mut default_pairing,
    };
    let mut trace = Vec::new();
    let mut best_max = pop.report().max_fitness;
    let mut since_improvement = 0;
    let max_gen = pop.params.max_generations;
    while !pop.optimum_reached() && trace.len() < max_gen {
        let rep = pop.step_generation(pairing, rng);
        if rep.max_fitness > best_max {
            best_max = rep.max_fitness;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        trace.push(rep);
        if matches!(pop.params.stall_generations, Some(s) if since_improvement >= s) {
            break;
        }
    }
    let (best, best_fitness) = pop.best();
    RunOutcome { best, best_fitness, generations_used: trace.len(), trace }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SemanticDescription;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn desc(raw: &[(u32, u32)]) -> SemanticDescription {
        SemanticDescription::new(raw).unwrap()
    }

    fn rng() -> SimRng {
        SeededRng::new(7).stream(&[0])
    }

    #[test]
    fn fitness_examples() {
        let cat = AgentCatalog::from_descriptions(vec![
            desc(&[(1, 12), (2, 50), (3, 7)]),
            desc(&[(1, 10), (2, 20), (3, 30)]),
            desc(&[(4, 40), (5, 55), (6, 60)]),
        ]);
        let req = UserRequest::new(vec![desc(&[(1, 10)])], 0).unwrap();
        assert!((fitness(&[0], &req, &cat) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(fitness(&[1], &req, &cat), 1.0);
        // part one: (1,11)→1 via agent 1, (3,9)→2 via agent 0; part two: (5,57)→2, (6,60)→0
        let req2 = UserRequest::new(vec![desc(&[(1, 11), (3, 9)]), desc(&[(5, 57), (6, 60)])], 0).unwrap();
        assert_eq!(total_mismatch(&[0, 1, 2], &req2, &cat), 5);
        assert!((fitness(&[0, 1, 2], &req2, &cat) - 1.0 / 6.0).abs() < 1e-15);
        // id 9 is nowhere in the sequence
        let req3 = UserRequest::new(vec![desc(&[(9, 1)])], 0).unwrap();
        assert_eq!(total_mismatch(&[0, 1, 2], &req3, &cat), 100);
    }

    #[test]
    fn effective_fitness_examples() {
        assert_eq!(effective_fitness(0.7, 3, 3.0), 0.7);
        assert_eq!(effective_fitness(0.8, 4, 2.0), 0.4);
        assert_eq!(effective_fitness(0.6, 1, 2.0), 0.6);
    }

    #[test]
    fn crossover_examples() {
        assert_eq!(crossover_at(&['X', 'Y'], &['P', 'Q'], 1), (vec!['X', 'Q'], vec!['P', 'Y']));
        let mut r = rng();
        assert_eq!(crossover(&['X'], &['P', 'Q'], &mut r), (vec!['X'], vec!['P', 'Q']));
    }

    #[test]
    fn mutation_kinds() {
        let mut r = rng();
        let pool = [7u32];
        for _ in 0..200 {
            let orig = vec![1u32, 2, 3];
            let mut s = orig.clone();
            match mutate(&mut s, &pool, &mut r) {
                MutationKind::Delete => {
                    assert_eq!(s.len(), 2);
                    assert!(s.windows(2).all(|w| w[0] < w[1]));
                }
                MutationKind::Insert => {
                    assert_eq!(s.len(), 4);
                    assert_eq!(s.iter().filter(|&&x| x == 7).count(), 1);
                }
                MutationKind::Replace => {
                    assert_eq!(s.len(), 3);
                    assert_eq!(s.iter().zip(&orig).filter(|(a, b)| a != b).count(), 1);
                }
            }
            let mut one = vec![1u32];
            assert_ne!(mutate(&mut one, &pool, &mut r), MutationKind::Delete);
        }
    }

    #[test]
    fn selection_shares() {
        let mut r = rng();
        let mut w = vec![0.1; 10];
        w[0] = 0.9;
        let picks = select(&w, 20_000, &mut r);
        let share = picks.iter().filter(|&&i| i == 0).count() as f64 / 20_000.0;
        // 0.9/(0.9+9·0.1) = 0.5; 4σ ≈ 0.014
        assert!((share - 0.5).abs() < 0.014, "{share}");
        assert_eq!(select(&[0.3], 5, &mut r), vec![0; 5]);
    }

    #[test]
    fn uniform_selection_chi_squared() {
        let mut r = rng();
        let picks = select(&[1.0; 10], 10_000, &mut r);
        let mut counts = [0f64; 10];
        for p in picks {
            counts[p] += 1.0;
        }
        let chi: f64 = counts.iter().map(|c| (c - 1000.0).powi(2) / 1000.0).sum();
        // df 9: mean 9, sd ≈ 4.24
        assert!(chi < 9.0 + 3.0 * 4.25, "{chi}");
    }

    #[test]
    fn objective_matches_reference() {
        let cat = AgentCatalog::from_descriptions(vec![
            desc(&[(1, 12), (2, 50), (3, 7)]),
            desc(&[(1, 10), (2, 20), (3, 30)]),
            desc(&[(4, 40), (5, 55), (6, 60)]),
        ]);
        let req = UserRequest::new(vec![desc(&[(1, 11), (3, 9)]), desc(&[(5, 57), (8, 60)])], 0).unwrap();
        let alphabet = vec![2, 0, 1];
        let obj = Objective::compile(&req, &alphabet, &cat);
        for g in [vec![0u32], vec![1, 2], vec![2, 2, 0], vec![0, 1, 2]] {
            let ids: Vec<_> = g.iter().map(|&s| alphabet[s as usize]).collect();
            assert_eq!(obj.mismatch(&g), total_mismatch(&ids, &req, &cat));
        }
    }

    #[test]
    fn trivially_satisfiable_request_is_immediate() {
        let cat = AgentCatalog::from_descriptions(
            (0..10).map(|i| desc(&[(1, i + 1), (2, 2 * i + 1), (3, 3 * i + 1)])).collect(),
        );
        let req = UserRequest::new(vec![cat.get(4).as_ref().clone()], 0).unwrap();
        let alphabet: Vec<AgentId> = cat.ids().collect();
        let mut max_used = 0;
        for run in 0..100 {
            let mut r = SeededRng::new(3).stream(&[run]);
            let obj = Objective::compile(&req, &alphabet, &cat);
            let mut pop = Population::from_pool(alphabet.clone(), &[], vec![obj], EvolutionParams::default(), &mut r).unwrap();
            let out = run_population(&mut pop, None, &mut r);
            assert_eq!(out.best, vec![4]);
            assert_eq!(out.trace.len(), out.generations_used);
            max_used = max_used.max(out.generations_used);
        }
        assert!(max_used <= 20);
    }

    #[test]
    fn unreachable_optimum_stops_on_stall() {
        let cat = AgentCatalog::from_descriptions(vec![desc(&[(1, 1), (2, 2), (3, 3)])]);
        let req = UserRequest::new(vec![desc(&[(50, 50)])], 0).unwrap();
        let obj = Objective::compile(&req, &[0], &cat);
        let mut r = rng();
        let mut pop = Population::from_pool(vec![0], &[], vec![obj], EvolutionParams::default(), &mut r).unwrap();
        let out = run_population(&mut pop, None, &mut r);
        assert_eq!(out.generations_used, 50);
        assert_eq!(out.trace.len(), 50);
    }

    #[test]
    fn no_variation_resamples_genotypes() {
        let cat = AgentCatalog::from_descriptions((0..4).map(|i| desc(&[(1, i + 1)])).collect());
        let req = UserRequest::new(vec![desc(&[(7, 7)])], 0).unwrap();
        let alphabet = vec![0, 1, 2, 3];
        let obj = Objective::compile(&req, &alphabet, &cat);
        let params = EvolutionParams { crossover_rate: 0.0, mutation_rate: 0.0, ..Default::default() };
        let init: Vec<Genome> = (0..12).map(|i| vec![i % 4]).collect();
        let mut pop = Population::new(alphabet, vec![obj], init.clone(), params).unwrap();
        let mut r = rng();
        let rep = pop.step_generation(&mut RandomPairing, &mut r);
        assert!(pop.individuals().iter().all(|g| init.contains(g)));
        assert!(rep.avg_fitness <= rep.max_fitness);
        assert_eq!(pop.generation(), 1);
    }

    #[test]
    fn best_tie_break() {
        let cat = AgentCatalog::from_descriptions((0..3).map(|i| desc(&[(1, i + 1)])).collect());
        let req = UserRequest::new(vec![desc(&[(9, 9)])], 0).unwrap();
        let alphabet = vec![0, 1, 2];
        let obj = Objective::compile(&req, &alphabet, &cat);
        let pop = Population::new(alphabet, vec![obj], vec![vec![2, 1], vec![2], vec![1]], EvolutionParams::default()).unwrap();
        assert_eq!(pop.best().0, vec![1]);
    }

    #[test]
    fn pairing_respects_labels() {
        let mut r = rng();
        let labels = [0, 1, 0, 1, 0, 1, 1, 0];
        for _ in 0..50 {
            let pairs = pair_within_labels(&labels, 4, &mut r);
            assert_eq!(pairs.len(), 4);
            assert!(pairs.iter().all(|&(i, j)| labels[i] == labels[j] && i != j));
        }
    }

    proptest! {
        #[test]
        fn crossover_conserves_length(a in proptest::collection::vec(0u32..9, 1..12),
                                      b in proptest::collection::vec(0u32..9, 1..12), seed in any::<u64>()) {
            let mut r = SeededRng::new(seed).stream(&[]);
            let (c, d) = crossover(&a, &b, &mut r);
            prop_assert_eq!(c.len() + d.len(), a.len() + b.len());
        }

        #[test]
        fn mutate_changes_length_by_at_most_one(a in proptest::collection::vec(0u32..9, 1..12), seed in any::<u64>()) {
            let mut r = SeededRng::new(seed).stream(&[]);
            let mut s = a.clone();
            mutate(&mut s, &[1, 2, 3], &mut r);
            prop_assert!(!s.is_empty());
            prop_assert!((s.len() as i64 - a.len() as i64).abs() <= 1);
        }

        #[test]
        fn fitness_bounds(vals in proptest::collection::vec((1u32..=6, 1u32..=100), 3..=6),
                          req in proptest::collection::vec((1u32..=8, 1u32..=100), 1..6), len in 1usize..6, mean in 0.5f64..6.0) {
            let cat = AgentCatalog::from_descriptions(vec![SemanticDescription::new(&vals).unwrap()]);
            let r = UserRequest::new(vec![SemanticDescription::new(&req).unwrap()], 0).unwrap();
            let f = fitness(&[0], &r, &cat);
            prop_assert!(f > 0.0 && f <= 1.0);
            prop_assert_eq!(f == 1.0, total_mismatch(&[0], &r, &cat) == 0);
            let e = effective_fitness(f, len, mean);
            prop_assert!(e <= f);
            prop_assert_eq!(e == f, len as f64 <= mean);
        }
    }
}
