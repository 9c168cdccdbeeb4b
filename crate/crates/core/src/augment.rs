//! Clustering catalyst (crossover only within detected clusters) and
//! targeted migration (shared migration histories spent on targeted copies).

use std::collections::{BTreeMap, HashMap};

use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{average_link_dendrogram, duplicate_groups, physical_complexity_cluster, tuple_distance, DistanceMatrix};
use crate::complexity::SitePopulation;
use crate::ecosystem::{CopyCause, HabitatNetwork};
use crate::evolution::{pair_within_labels, CrossoverPairing, Genome, RandomPairing};
use crate::model::{AgentCatalog, AgentId, AttributeTuple, HabitatId};
use crate::recognition::{build_recognizer, Recognizer, RecognizerKind, DEFAULT_EPOCHS, DEFAULT_VARIANTS};
use crate::rng::{SeededRng, SimRng};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalystAlgorithm {
    AverageLink,
    PhysicalComplexity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalystConfig {
    pub enabled: bool,
    pub algorithm: CatalystAlgorithm,
    pub k: usize,
    pub crossover_rate: f64,
}

impl Default for CatalystConfig {
    fn default() -> Self {
        Self { enabled: false, algorithm: CatalystAlgorithm::AverageLink, k: 2, crossover_rate: 0.25 }
    }
}

/// Crossover pairing that clusters the population each generation and
/// pairs only within clusters. Disabled, it is the default random pairing.
#[derive(Debug, Clone)]
pub struct CatalystPairing {
    pub cfg: CatalystConfig,
    alphabet_size: usize,
    /// Tuples of each alphabet symbol.
    symbols: Vec<Vec<AttributeTuple>>,
    /// Labels from the most recent call, for inspection.
    pub last_labels: Vec<usize>,
}

impl CatalystPairing {
    pub fn new(cfg: CatalystConfig, alphabet: &[AgentId], catalog: &AgentCatalog) -> Self {
        let symbols = alphabet.iter().map(|&a| catalog.get(a).tuples().to_vec()).collect();
        Self { cfg, alphabet_size: alphabet.len(), symbols, last_labels: Vec::new() }
    }

    fn tuples(&self, g: &[u32]) -> Vec<AttributeTuple> {
        let mut v: Vec<AttributeTuple> = g.iter().flat_map(|&s| self.symbols[s as usize].iter().copied()).collect();
        v.sort_unstable();
        v
    }

    /// Cluster label of every genome.
    pub fn labels(&self, genomes: &[Genome]) -> Result<Vec<usize>> {
        let k = self.cfg.k.max(1);
        if k == 1 || genomes.len() < 2 {
            return Ok(vec![0; genomes.len()]);
        }
        match self.cfg.algorithm {
            CatalystAlgorithm::PhysicalComplexity => {
                let pop = SitePopulation::new(genomes.to_vec(), self.alphabet_size)?;
                Ok(physical_complexity_cluster(&pop, k)?.labels)
            }
            CatalystAlgorithm::AverageLink => {
                // Identical genomes collapse into one weighted point.
                let groups = duplicate_groups(genomes);
                let reps: Vec<Vec<AttributeTuple>> = groups.iter().map(|g| self.tuples(&genomes[g[0]])).collect();
                let weights: Vec<usize> = groups.iter().map(Vec::len).collect();
                let m = DistanceMatrix::from_fn(reps.len(), |i, j| tuple_distance(&reps[i], &reps[j]));
                let cut = average_link_dendrogram(&m, Some(&weights)).cut(k.min(reps.len()));
                let mut labels = vec![0; genomes.len()];
                for (gi, g) in groups.iter().enumerate() {
                    for &i in g {
                        labels[i] = cut.labels[gi];
                    }
                }
                Ok(labels)
            }
        }
    }
}

impl CrossoverPairing for CatalystPairing {
    fn pairs(&mut self, genomes: &[Genome], n_pairs: usize, rng: &mut SimRng) -> Vec<(usize, usize)> {
        if !self.cfg.enabled {
            return RandomPairing.pairs(genomes, n_pairs, rng);
        }
        let labels = self.labels(genomes).expect("population genomes are non-empty and within the alphabet");
        let pairs = pair_within_labels(&labels, n_pairs, rng);
        self.last_labels = labels;
        pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigrationMode {
    Targeted,
    RandomControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetedMigrationConfig {
    pub enabled: bool,
    pub recognizer: RecognizerKind,
    pub mode: MigrationMode,
    /// Training variants per agent for the MLP recognizer.
    pub variants: usize,
    pub epochs: usize,
    /// Seed for recognizer training, keyed per agent id.
    pub recognizer_seed: u64,
}

impl Default for TargetedMigrationConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            recognizer: RecognizerKind::Distance,
            mode: MigrationMode::Targeted,
            variants: DEFAULT_VARIANTS,
            epochs: DEFAULT_EPOCHS,
            recognizer_seed: 0,
        }
    }
}

/// One trained recognizer per agent id, built on first use.
#[derive(Default)]
pub struct RecognizerBank {
    built: HashMap<AgentId, Box<dyn Recognizer + Send + Sync>>,
}

impl RecognizerBank {
    pub fn len(&self) -> usize {
        self.built.len()
    }

    pub fn is_empty(&self) -> bool {
        self.built.is_empty()
    }

    fn ensure(&mut self, id: AgentId, net: &HabitatNetwork, cfg: &TargetedMigrationConfig) -> Result<()> {
        if !self.built.contains_key(&id) {
            let mut rng = SeededRng::new(cfg.recognizer_seed).stream(&[0x7265_636f, u64::from(id)]);
            let r = build_recognizer(cfg.recognizer, net.catalog.get(id), cfg.variants, cfg.epochs, &mut rng)?;
            self.built.insert(id, r);
        }
        Ok(())
    }

    /// Both agents recognize each other.
    pub fn mutual(&mut self, a: AgentId, b: AgentId, net: &HabitatNetwork, cfg: &TargetedMigrationConfig) -> Result<bool> {
        self.ensure(a, net, cfg)?;
        self.ensure(b, net, cfg)?;
        Ok(self.built[&a].recognize(net.catalog.get(b)) && self.built[&b].recognize(net.catalog.get(a)))
    }
}

/// Uses per habitat reported by the peers at `at` that mutually recognize
/// `agent`.
pub fn shared_history(
    net: &HabitatNetwork,
    agent: AgentId,
    at: HabitatId,
    cfg: &TargetedMigrationConfig,
    bank: &mut RecognizerBank,
) -> Result<BTreeMap<HabitatId, u32>> {
    let mut uses: BTreeMap<HabitatId, u32> = BTreeMap::new();
    let peers: Vec<AgentId> = net.habitat(at).agents.keys().copied().filter(|&p| p != agent).collect();
    for p in peers {
        if bank.mutual(agent, p, net, cfg)? {
            for r in &net.habitat(at).agents[&p].migration_history {
                *uses.entry(r.habitat_id).or_insert(0) += r.uses;
            }
        }
    }
    Ok(uses)
}

/// Spends one targeted-migration counter of `agent` at `at` on a copy to
/// the most promising habitat, if the counter is positive and a destination
/// exists. Returns the destination.
pub fn targeted_migrate(
    net: &mut HabitatNetwork,
    agent: AgentId,
    at: HabitatId,
    cfg: &TargetedMigrationConfig,
    bank: &mut RecognizerBank,
    rng: &mut SimRng,
) -> Result<Option<HabitatId>> {
    targeted_migrate_from(net, agent, at, at, cfg, bank, rng)
}

/// Targeted migration of the copy at `at`, spending the counter held by the
/// copy at `holder`.
pub fn targeted_migrate_from(
    net: &mut HabitatNetwork,
    agent: AgentId,
    at: HabitatId,
    holder: HabitatId,
    cfg: &TargetedMigrationConfig,
    bank: &mut RecognizerBank,
    rng: &mut SimRng,
) -> Result<Option<HabitatId>> {
    let (Some(copy), Some(owner)) = (net.habitat(at).agents.get(&agent), net.habitat(holder).agents.get(&agent)) else {
        return Ok(None);
    };
    if !cfg.enabled || owner.targeted_migrations == 0 {
        return Ok(None);
    }
    let fresh = |net: &HabitatNetwork, h: HabitatId| h != at && !net.habitat(h).agents.contains_key(&agent);
    let dest = match cfg.mode {
        MigrationMode::Targeted => {
            let visited = copy.migration_history.clone();
            let uses = shared_history(net, agent, at, cfg, bank)?;
            let mut best: Option<(u32, HabitatId)> = None;
            for (&h, &u) in &uses {
                if u == 0 || visited.iter().any(|r| r.habitat_id == h) || !fresh(net, h) {
                    continue;
                }
                // Ascending ids: strict improvement keeps the lowest id on ties.
                if best.map_or(true, |(bu, _)| u > bu) {
                    best = Some((u, h));
                }
            }
            best.map(|(_, h)| h)
        }
        MigrationMode::RandomControl => {
            let all: Vec<HabitatId> = (0..net.len() as HabitatId).filter(|&h| fresh(net, h)).collect();
            all.choose(rng).copied()
        }
    };
    if let Some(to) = dest {
        let cause = match cfg.mode {
            MigrationMode::Targeted => CopyCause::Targeted,
            MigrationMode::RandomControl => CopyCause::RandomControl,
        };
        net.copy_agent(at, to, agent, cause);
        if let Some(a) = net.habitats[holder as usize].agents.get_mut(&agent) {
            a.targeted_migrations -= 1;
        }
    }
    Ok(dest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecosystem::EcosystemParams;
    use crate::model::{MigrationRecord, SemanticDescription};

    fn desc(raw: &[(u32, u32)]) -> SemanticDescription {
        SemanticDescription::for_agent(raw).unwrap()
    }

    fn net(n: usize) -> (HabitatNetwork, SimRng) {
        let mut rng = SeededRng::new(3).stream(&[]);
        let mut net = HabitatNetwork::init(EcosystemParams { n_users: n, ..Default::default() }, &mut rng).unwrap();
        for h in &mut net.habitats {
            h.connections.clear();
        }
        (net, rng)
    }

    fn cfg() -> TargetedMigrationConfig {
        TargetedMigrationConfig { enabled: true, ..Default::default() }
    }

    #[test]
    fn zero_counter_never_moves() {
        let (mut net, mut rng) = net(4);
        let a = net.deploy_agent(0, desc(&[(1, 50), (2, 50), (3, 50)]), &mut rng).unwrap();
        let b = net.deploy_agent(0, desc(&[(1, 51), (2, 50), (3, 50)]), &mut rng).unwrap();
        net.habitats[0].agents.get_mut(&b).unwrap().migration_history.push(MigrationRecord { habitat_id: 2, uses: 5 });
        let mut bank = RecognizerBank::default();
        assert_eq!(targeted_migrate(&mut net, a, 0, &cfg(), &mut bank, &mut rng).unwrap(), None);
    }

    #[test]
    fn single_similar_peer_points_the_way() {
        let (mut net, mut rng) = net(4);
        let a = net.deploy_agent(0, desc(&[(1, 50), (2, 50), (3, 50)]), &mut rng).unwrap();
        let b = net.deploy_agent(0, desc(&[(1, 51), (2, 50), (3, 50)]), &mut rng).unwrap();
        let far = net.deploy_agent(0, desc(&[(7, 5), (8, 5), (9, 5)]), &mut rng).unwrap();
        net.habitats[0].agents.get_mut(&b).unwrap().migration_history.push(MigrationRecord { habitat_id: 2, uses: 5 });
        net.habitats[0].agents.get_mut(&far).unwrap().migration_history.push(MigrationRecord { habitat_id: 3, uses: 50 });
        net.habitats[0].agents.get_mut(&a).unwrap().targeted_migrations = 1;
        let mut bank = RecognizerBank::default();
        assert_eq!(targeted_migrate(&mut net, a, 0, &cfg(), &mut bank, &mut rng).unwrap(), Some(2));
        assert_eq!(net.habitats[0].agents[&a].targeted_migrations, 0);
        assert!(net.habitats[2].agents.contains_key(&a));
        assert_eq!(net.habitats[2].agents[&a].targeted_migrations, 0);
    }

    #[test]
    fn ties_go_to_the_lowest_id_and_visited_are_skipped() {
        let (mut net, mut rng) = net(5);
        let a = net.deploy_agent(0, desc(&[(1, 50), (2, 50), (3, 50)]), &mut rng).unwrap();
        let b = net.deploy_agent(0, desc(&[(1, 51), (2, 50), (3, 50)]), &mut rng).unwrap();
        {
            let peer = net.habitats[0].agents.get_mut(&b).unwrap();
            peer.migration_history.push(MigrationRecord { habitat_id: 4, uses: 3 });
            peer.migration_history.push(MigrationRecord { habitat_id: 3, uses: 3 });
            peer.migration_history.push(MigrationRecord { habitat_id: 1, uses: 9 });
        }
        let me = net.habitats[0].agents.get_mut(&a).unwrap();
        me.targeted_migrations = 2;
        me.migration_history.push(MigrationRecord { habitat_id: 1, uses: 0 });
        let mut bank = RecognizerBank::default();
        assert_eq!(targeted_migrate(&mut net, a, 0, &cfg(), &mut bank, &mut rng).unwrap(), Some(3));
        assert_eq!(targeted_migrate(&mut net, a, 0, &cfg(), &mut bank, &mut rng).unwrap(), Some(4));
    }

    #[test]
    fn random_control_spends_the_counter_anywhere() {
        let (mut net, mut rng) = net(6);
        let a = net.deploy_agent(0, desc(&[(1, 50), (2, 50), (3, 50)]), &mut rng).unwrap();
        net.habitats[0].agents.get_mut(&a).unwrap().targeted_migrations = 5;
        let c = TargetedMigrationConfig { mode: MigrationMode::RandomControl, ..cfg() };
        let mut bank = RecognizerBank::default();
        for _ in 0..5 {
            assert!(targeted_migrate(&mut net, a, 0, &c, &mut bank, &mut rng).unwrap().is_some());
        }
        assert!(net.habitats.iter().all(|h| h.agents.contains_key(&a)));
        assert_eq!(net.habitats[0].agents[&a].targeted_migrations, 0);
    }

    #[test]
    fn catalyst_never_crosses_planted_clusters() {
        let catalog = AgentCatalog::from_descriptions(vec![
            desc(&[(1, 10), (2, 10), (3, 10)]),
            desc(&[(1, 12), (2, 10), (3, 10)]),
            desc(&[(50, 90), (51, 90), (52, 90)]),
            desc(&[(50, 88), (51, 90), (52, 90)]),
        ]);
        let alphabet: Vec<AgentId> = catalog.ids().collect();
        let genomes: Vec<Genome> = (0..40).map(|i| if i % 2 == 0 { vec![0, 1] } else { vec![2, 3, 2] }).collect();
        for algorithm in [CatalystAlgorithm::AverageLink, CatalystAlgorithm::PhysicalComplexity] {
            let mut p = CatalystPairing::new(CatalystConfig { enabled: true, algorithm, k: 2, crossover_rate: 0.25 }, &alphabet, &catalog);
            let mut rng = SeededRng::new(1).stream(&[]);
            let pairs = p.pairs(&genomes, 10, &mut rng);
            assert_eq!(pairs.len(), 10);
            assert!(pairs.iter().all(|&(i, j)| i % 2 == j % 2), "{algorithm:?}");
        }
    }

    #[test]
    fn one_cluster_matches_random_pairing() {
        let catalog = AgentCatalog::from_descriptions(vec![desc(&[(1, 10), (2, 10), (3, 10)]), desc(&[(4, 1), (5, 1), (6, 1)])]);
        let alphabet: Vec<AgentId> = catalog.ids().collect();
        let genomes: Vec<Genome> = (0..30).map(|i| vec![i % 2, 1 - i % 2]).collect();
        let mut p = CatalystPairing::new(CatalystConfig { enabled: true, k: 1, ..Default::default() }, &alphabet, &catalog);
        let (mut r1, mut r2) = (SeededRng::new(9).stream(&[]), SeededRng::new(9).stream(&[]));
        assert_eq!(p.pairs(&genomes, 7, &mut r1), RandomPairing.pairs(&genomes, 7, &mut r2));
        let mut off = CatalystPairing::new(CatalystConfig::default(), &alphabet, &catalog);
        let (mut r1, mut r2) = (SeededRng::new(9).stream(&[]), SeededRng::new(9).stream(&[]));
        assert_eq!(off.pairs(&genomes, 7, &mut r1), RandomPairing.pairs(&genomes, 7, &mut r2));
    }
}
