//! The habitat network: agent pools, probabilistic migration, Hebbian
//! connection updates, escape and death, request handling, and the user base
//! that deploys agents and issues requests.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{targeted_migrate, targeted_migrate_from, RecognizerBank, TargetedMigrationConfig};
use crate::evolution::{run_population, EvolutionParams, Objective, Population};
use crate::experiments::analysis::DistributionSpec;
use crate::model::{Agent, AgentCatalog, AgentId, AgentSequence, HabitatId, SemanticDescription, UserRequest};
use crate::rng::SimRng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EcosystemParams {
    pub n_users: usize,
    pub initial_agents_per_user: usize,
    pub deploy_every_k_requests: u32,
    pub hebbian_alpha: f64,
    pub p_init: f64,
    pub connection_floor: f64,
    pub success_threshold: f64,
    pub k_init: usize,
    pub escape_budget: u32,
    pub unused_threshold: u32,
    pub n_events: u64,
    pub evolution: EvolutionParams,
    pub user_base: UserBaseParams,
}

impl Default for EcosystemParams {
    fn default() -> Self {
        Self {
            n_users: 100,
            initial_agents_per_user: 5,
            deploy_every_k_requests: 3,
            hebbian_alpha: 0.1,
            p_init: 0.5,
            connection_floor: 0.05,
            success_threshold: 0.9,
            k_init: 4,
            escape_budget: 3,
            unused_threshold: 20,
            n_events: 1000,
            evolution: EvolutionParams {
                max_population: Some(300),
                max_generations: 200,
                stall_generations: Some(30),
                ..EvolutionParams::default()
            },
            user_base: UserBaseParams::default(),
        }
    }
}

impl EcosystemParams {
    pub fn validate(&self) -> Result<()> {
        self.evolution.validate()?;
        let frac = |x: f64| x > 0.0 && x <= 1.0;
        if self.n_users < 2 {
            return Err(Error::InvalidParameter("n_users must be at least 2".into()));
        }
        if !frac(self.hebbian_alpha) || !frac(self.p_init) || !(0.0..1.0).contains(&self.connection_floor) {
            return Err(Error::InvalidParameter("connection probabilities".into()));
        }
        if self.deploy_every_k_requests == 0 || self.k_init == 0 {
            return Err(Error::InvalidParameter("deploy_every_k_requests and k_init must be positive".into()));
        }
        self.user_base.validate()
    }
}

/// One line of the event ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Deploy { t: u64, habitat: HabitatId, agent: AgentId },
    Copy { t: u64, from: HabitatId, to: HabitatId, agent: AgentId, cause: CopyCause },
    Escape { t: u64, from: HabitatId, to: HabitatId, agent: AgentId },
    Death { t: u64, habitat: HabitatId, agent: AgentId, counter: u32 },
    Request { t: u64, habitat: HabitatId, fitness: f64, generations: usize, executed: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopyCause {
    Deployment,
    Sequence,
    Targeted,
    RandomControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Habitat {
    pub id: HabitatId,
    pub owner_user: usize,
    pub agents: BTreeMap<AgentId, Agent>,
    pub sequences: Vec<AgentSequence>,
    /// Outgoing edges: destination → migration probability.
    pub connections: BTreeMap<HabitatId, f64>,
    pub requests: u32,
}

impl Habitat {
    fn new(id: HabitatId) -> Self {
        Self {
            id,
            owner_user: id as usize,
            agents: BTreeMap::new(),
            sequences: Vec::new(),
            connections: BTreeMap::new(),
            requests: 0,
        }
    }
}

/// Best response to one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub habitat: HabitatId,
    pub best: Vec<AgentId>,
    pub fitness: f64,
    pub generations: usize,
    /// Habitats each executed agent newly reached by sequence migration.
    pub arrivals: Vec<(AgentId, HabitatId)>,
}

#[derive(Debug, Clone)]
pub struct HabitatNetwork {
    pub habitats: Vec<Habitat>,
    pub catalog: AgentCatalog,
    pub params: EcosystemParams,
    pub ledger: Vec<Event>,
    pub time: u64,
}

impl HabitatNetwork {
    /// Each habitat opens `k_init` connections to random others, in both
    /// directions, at `p_init`.
    pub fn init(params: EcosystemParams, rng: &mut SimRng) -> Result<Self> {
        params.validate()?;
        let n = params.n_users;
        let mut habitats: Vec<Habitat> = (0..n as HabitatId).map(Habitat::new).collect();
        let k = params.k_init.min(n - 1);
        for h in 0..n {
            let others: Vec<usize> = (0..n).filter(|&o| o != h).collect();
            for &o in others.choose_multiple(rng, k) {
                habitats[h].connections.insert(o as HabitatId, params.p_init);
                habitats[o].connections.insert(h as HabitatId, params.p_init);
            }
        }
        Ok(Self { habitats, catalog: AgentCatalog::new(), params, ledger: Vec::new(), time: 0 })
    }

    pub fn len(&self) -> usize {
        self.habitats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.habitats.is_empty()
    }

    fn check(&self, h: HabitatId) -> Result<()> {
        if (h as usize) < self.habitats.len() {
            Ok(())
        } else {
            Err(Error::UnknownHabitat(h))
        }
    }

    pub fn habitat(&self, h: HabitatId) -> &Habitat {
        &self.habitats[h as usize]
    }

    /// Total agent copies across all pools.
    pub fn agent_count(&self) -> usize {
        self.habitats.iter().map(|h| h.agents.len()).sum()
    }

    /// Registers a new agent at `h` and lets it migrate.
    pub fn deploy_agent(&mut self, h: HabitatId, desc: SemanticDescription, rng: &mut SimRng) -> Result<AgentId> {
        self.check(h)?;
        let id = self.catalog.register(desc);
        let agent = Agent::new(id, Arc::clone(self.catalog.get(id)), h, self.params.escape_budget);
        self.habitats[h as usize].agents.insert(id, agent);
        self.ledger.push(Event::Deploy { t: self.time, habitat: h, agent: id });
        self.migrate(h, id, rng);
        Ok(id)
    }

    /// Copies `agent` from `from` to `to` unless `to` already holds it.
    pub fn copy_agent(&mut self, from: HabitatId, to: HabitatId, agent: AgentId, cause: CopyCause) -> bool {
        if from == to || self.habitats[to as usize].agents.contains_key(&agent) {
            return false;
        }
        let Some(original) = self.habitats[from as usize].agents.get(&agent) else {
            return false;
        };
        let mut copy = original.copy_to(to);
        copy.targeted_migrations = 0;
        self.habitats[to as usize].agents.insert(agent, copy);
        self.ledger.push(Event::Copy { t: self.time, from, to, agent, cause });
        true
    }

    /// Copies an agent along each outgoing connection with that connection's
    /// probability. Returns the habitats that received a copy.
    pub fn migrate(&mut self, from: HabitatId, agent: AgentId, rng: &mut SimRng) -> Vec<HabitatId> {
        let edges: Vec<(HabitatId, f64)> = self.habitats[from as usize].connections.iter().map(|(&d, &p)| (d, p)).collect();
        let mut reached = Vec::new();
        for (to, p) in edges {
            if rng.gen_bool(p.clamp(0.0, 1.0)) && self.copy_agent(from, to, agent, CopyCause::Deployment) {
                reached.push(to);
            }
        }
        reached
    }

    /// Copies a sequence, and any of its agents the destination lacks,
    /// along each outgoing connection with that connection's probability.
    pub fn migrate_sequence(&mut self, from: HabitatId, seq: &AgentSequence, rng: &mut SimRng) -> Vec<HabitatId> {
        self.migrate_sequence_tracked(from, seq, rng).0
    }

    /// As [`HabitatNetwork::migrate_sequence`], also listing every agent copy
    /// that landed.
    pub fn migrate_sequence_tracked(
        &mut self,
        from: HabitatId,
        seq: &AgentSequence,
        rng: &mut SimRng,
    ) -> (Vec<HabitatId>, Vec<(AgentId, HabitatId)>) {
        let edges: Vec<(HabitatId, f64)> = self.habitats[from as usize].connections.iter().map(|(&d, &p)| (d, p)).collect();
        let mut reached = Vec::new();
        let mut arrivals = Vec::new();
        for (to, p) in edges {
            if !rng.gen_bool(p.clamp(0.0, 1.0)) {
                continue;
            }
            let distinct: BTreeSet<AgentId> = seq.agents.iter().copied().collect();
            for a in distinct {
                if self.copy_agent(from, to, a, CopyCause::Sequence) {
                    arrivals.push((a, to));
                }
            }
            let target = &mut self.habitats[to as usize];
            if !target.sequences.iter().any(|s| s.agents == seq.agents) {
                target.sequences.push(seq.clone());
            }
            reached.push(to);
        }
        (reached, arrivals)
    }

    /// Reinforces (success) or weakens (failure) each edge along `path`,
    /// which ends at the habitat where the agents were used. On success a
    /// direct edge from the path's origin is opened when none exists.
    pub fn hebbian_update(&mut self, path: &[HabitatId], success: bool) {
        let alpha = self.params.hebbian_alpha;
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a == b {
                continue;
            }
            let conns = &mut self.habitats[a as usize].connections;
            if let Some(p) = conns.get_mut(&b) {
                if success {
                    *p += alpha * (1.0 - *p);
                } else {
                    *p *= 1.0 - alpha;
                    if *p < self.params.connection_floor {
                        conns.remove(&b);
                    }
                }
            }
        }
        if success && path.len() >= 3 {
            let (origin, end) = (path[0], path[path.len() - 1]);
            if origin != end {
                self.habitats[origin as usize].connections.entry(end).or_insert(self.params.p_init);
            }
        }
    }

    /// Evolves a response from the pool at `h`, registers and executes it,
    /// migrates it and applies migration feedback.
    pub fn handle_request(&mut self, h: HabitatId, req: &UserRequest, rng: &mut SimRng) -> Result<ResponseRecord> {
        self.check(h)?;
        let habitat = &self.habitats[h as usize];
        if habitat.agents.is_empty() {
            return Err(Error::EmptyPool(h));
        }
        let alphabet: Vec<AgentId> = habitat.agents.keys().copied().collect();
        let local: BTreeMap<AgentId, u32> = alphabet.iter().enumerate().map(|(i, &a)| (a, i as u32)).collect();
        let stored: Vec<Vec<u32>> = habitat
            .sequences
            .iter()
            .filter_map(|s| s.agents.iter().map(|a| local.get(a).copied()).collect::<Option<Vec<u32>>>())
            .collect();
        let objective = Objective::compile(req, &alphabet, &self.catalog);
        let mut pop = Population::from_pool(alphabet, &stored, vec![objective], self.params.evolution.clone(), rng)?;
        let outcome = run_population(&mut pop, None, rng);

        let mut seq = AgentSequence::new(outcome.best.clone())?;
        seq.origin_habitats.insert(h);
        let success = outcome.best_fitness >= self.params.success_threshold;
        let used: BTreeSet<AgentId> = seq.agents.iter().copied().collect();

        let habitat = &mut self.habitats[h as usize];
        habitat.requests += 1;
        if let Some(existing) = habitat.sequences.iter_mut().find(|s| s.agents == seq.agents) {
            existing.origin_habitats.insert(h);
        } else {
            habitat.sequences.push(seq.clone());
        }
        let mut paths = Vec::new();
        for (id, agent) in habitat.agents.iter_mut() {
            if used.contains(id) {
                if let Some(rec) = agent.migration_history.last_mut() {
                    rec.uses += 1;
                }
                agent.unused_requests = 0;
                agent.targeted_migrations += 1;
                paths.push(agent.migration_history.iter().map(|r| r.habitat_id).collect::<Vec<_>>());
            } else {
                agent.unused_requests += 1;
            }
        }
        self.ledger.push(Event::Request {
            t: self.time,
            habitat: h,
            fitness: outcome.best_fitness,
            generations: outcome.generations_used,
            executed: paths.len() as u32,
        });
        let (_, arrivals) = self.migrate_sequence_tracked(h, &seq, rng);
        for path in paths {
            if path.len() >= 2 {
                self.hebbian_update(&path, success);
            }
        }
        Ok(ResponseRecord {
            habitat: h,
            best: outcome.best,
            fitness: outcome.best_fitness,
            generations: outcome.generations_used,
            arrivals,
        })
    }

    /// Agents idle for `unused_threshold` requests move to a random connected
    /// habitat that lacks them, spending one escape; with none left (or no
    /// destination) they die.
    pub fn decay_and_escape(&mut self, rng: &mut SimRng) {
        let threshold = self.params.unused_threshold;
        for h in 0..self.habitats.len() {
            let idle: Vec<AgentId> =
                self.habitats[h].agents.values().filter(|a| a.unused_requests >= threshold).map(|a| a.id).collect();
            for id in idle {
                self.escape(h as HabitatId, id, rng);
            }
        }
    }

    fn escape(&mut self, from: HabitatId, id: AgentId, rng: &mut SimRng) {
        let dests: Vec<HabitatId> = self.habitats[from as usize]
            .connections
            .keys()
            .copied()
            .filter(|d| !self.habitats[*d as usize].agents.contains_key(&id))
            .collect();
        let mut agent = self.habitats[from as usize].agents.remove(&id).expect("idle agent is in the pool");
        self.habitats[from as usize].sequences.retain(|s| !s.agents.contains(&id));
        match dests.choose(rng) {
            Some(&to) if agent.escape_remaining > 0 => {
                agent.escape_remaining -= 1;
                agent.unused_requests = 0;
                agent.migration_history.push(crate::model::MigrationRecord { habitat_id: to, uses: 0 });
                self.habitats[to as usize].agents.insert(id, agent);
                self.ledger.push(Event::Escape { t: self.time, from, to, agent: id });
            }
            _ => self.ledger.push(Event::Death { t: self.time, habitat: from, agent: id, counter: agent.targeted_migrations }),
        }
    }

    /// Deployments + copies − deaths, from the ledger.
    pub fn ledger_copy_count(&self) -> i64 {
        self.ledger
            .iter()
            .map(|e| match e {
                Event::Deploy { .. } | Event::Copy { .. } => 1,
                Event::Death { .. } => -1,
                _ => 0,
            })
            .sum()
    }

    /// Executions minus targeted copies, from the ledger; equals the live
    /// counters plus those lost with dead copies.
    pub fn ledger_counter_balance(&self) -> (i64, i64) {
        let mut earned = 0i64;
        let mut lost = 0i64;
        for e in &self.ledger {
            match e {
                Event::Request { executed, .. } => earned += i64::from(*executed),
                Event::Copy { cause: CopyCause::Targeted | CopyCause::RandomControl, .. } => earned -= 1,
                Event::Death { counter, .. } => lost += i64::from(*counter),
                _ => {}
            }
        }
        (earned, self.targeted_counter_total() as i64 + lost)
    }

    /// Per-copy counters summed over the ecosystem.
    pub fn targeted_counter_total(&self) -> u64 {
        self.habitats.iter().flat_map(|h| h.agents.values()).map(|a| u64::from(a.targeted_migrations)).sum()
    }
}

/// Mean response fitness over the last `window` entries, as a percentage.
pub fn response_rate(trace: &[f64], window: usize) -> Result<f64> {
    if window == 0 || window > trace.len() {
        return Err(Error::InvalidParameter(format!("window {window} for a trace of {}", trace.len())));
    }
    let tail = &trace[trace.len() - window..];
    Ok(100.0 * tail.iter().sum::<f64>() / window as f64)
}

/// How users deploy services and phrase requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UserBaseParams {
    /// Services each user will deploy over a run, initial ones included.
    pub planned_per_user: usize,
    /// Number of parts per request.
    pub request_parts: DistributionSpec,
    /// Tuples per service description (clipped to the agent range 3..=6).
    pub service_tuples: DistributionSpec,
    /// Largest value shift between sibling services of one provider.
    pub variant_spread: u32,
    /// Value components a sibling shifts.
    pub variant_components: usize,
    /// Users split into this many communities with disjoint attribute ids;
    /// requests stay within a community.
    pub communities: usize,
    /// Providers per sector. Families in one sector are shifts of a common
    /// base, close enough to recognize one another.
    pub sector_size: usize,
    /// Largest value shift between family bases of one sector.
    pub sector_spread: u32,
    /// Chance that a request part asks for a sector peer's service instead
    /// of a catalogue service.
    pub sector_share: f64,
}

impl Default for UserBaseParams {
    fn default() -> Self {
        Self {
            planned_per_user: 7,
            request_parts: DistributionSpec::uniform(1, 3),
            service_tuples: DistributionSpec::uniform(3, 6),
            variant_spread: 5,
            variant_components: 2,
            communities: 1,
            sector_size: 8,
            sector_spread: 5,
            sector_share: 0.2,
        }
    }
}

impl UserBaseParams {
    pub fn validate(&self) -> Result<()> {
        self.request_parts.validate()?;
        self.service_tuples.validate()?;
        if self.planned_per_user == 0 || self.communities == 0 || self.sector_size == 0 {
            return Err(Error::InvalidParameter("planned_per_user, communities and sector_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.sector_share) {
            return Err(Error::InvalidParameter("sector_share must be a probability".into()));
        }
        if self.request_parts.min < 1 {
            return Err(Error::InvalidParameter("requests need at least one part".into()));
        }
        Ok(())
    }
}

/// Hidden service plans and request catalogues of every user.
///
/// Each user provides one family of sibling services, all within a small
/// value shift of a base description. A user's requests ask for exact
/// services from its catalogue, whether or not they are deployed yet.
#[derive(Debug, Clone)]
pub struct UserBase {
    pub params: UserBaseParams,
    pub plans: Vec<Vec<SemanticDescription>>,
    pub deployed: Vec<usize>,
    pub catalogue: Vec<Vec<(usize, usize)>>,
    /// Services of each user's sector peers.
    pub sector_peers: Vec<Vec<(usize, usize)>>,
    pub community: Vec<usize>,
    pub sector: Vec<usize>,
    requests: Vec<u32>,
}

impl UserBase {
    /// Draws every user's service family. Catalogues are filled by
    /// [`UserBase::deploy_initial`].
    pub fn generate(net: &HabitatNetwork, params: UserBaseParams, rng: &mut SimRng) -> Result<Self> {
        params.validate()?;
        let n = net.len();
        let community: Vec<usize> = (0..n).map(|u| u % params.communities).collect();
        let sector: Vec<usize> = (0..n).map(|u| u % params.communities + params.communities * (u / params.communities / params.sector_size)).collect();
        let span = 100 / params.communities as u32;
        let mut bases: BTreeMap<usize, Vec<(u32, u32)>> = BTreeMap::new();
        let mut plans = Vec::with_capacity(n);
        for u in 0..n {
            let base = bases.entry(sector[u]).or_insert_with(|| {
                let lo = community[u] as u32 * span + 1;
                let tuples = params.service_tuples.sample(rng).clamp(3, 6) as usize;
                let ids: Vec<u32> = (lo..lo + span).collect::<Vec<_>>().choose_multiple(rng, tuples).copied().collect();
                ids.iter().map(|&id| (id, rng.gen_range(15..=85))).collect()
            });
            let own: Vec<(u32, u32)> = if params.sector_size > 1 {
                base.iter().map(|&(id, v)| (id, shift(v, rng.gen_range(0..=params.sector_spread), rng))).collect()
            } else {
                base.clone()
            };
            plans.push(family(&own, &params, rng));
        }
        let sector_peers = (0..n)
            .map(|u| {
                (0..n)
                    .filter(|&v| v != u && sector[v] == sector[u])
                    .flat_map(|v| (0..params.planned_per_user).map(move |i| (v, i)))
                    .collect()
            })
            .collect();
        Ok(Self { params, plans, deployed: vec![0; n], catalogue: vec![Vec::new(); n], sector_peers, community, sector, requests: vec![0; n] })
    }

    /// Deploys the next planned service of `user`, if any remain.
    pub fn deploy_next(&mut self, user: usize, net: &mut HabitatNetwork, rng: &mut SimRng) -> Result<Option<AgentId>> {
        let i = self.deployed[user];
        let Some(desc) = self.plans[user].get(i).cloned() else {
            return Ok(None);
        };
        self.deployed[user] += 1;
        net.deploy_agent(user as HabitatId, desc, rng).map(Some)
    }

    /// Deploys the initial services, then fixes each user's catalogue: the
    /// deployed services of itself and its same-community neighbours that
    /// reached its pool, plus everything those suppliers have yet to deploy.
    pub fn deploy_initial(&mut self, net: &mut HabitatNetwork, rng: &mut SimRng) -> Result<()> {
        for _ in 0..net.params.initial_agents_per_user {
            for u in 0..net.len() {
                self.deploy_next(u, net, rng)?;
            }
        }
        for u in 0..net.len() {
            let pool = &net.habitats[u].agents;
            let mut suppliers = vec![u];
            suppliers.extend(
                net.habitats[u].connections.keys().map(|&v| v as usize).filter(|&v| self.community[v] == self.community[u]),
            );
            let mut cat = Vec::new();
            for v in suppliers {
                for i in 0..self.params.planned_per_user {
                    let reached = || pool.values().any(|a| *a.description == self.plans[v][i]);
                    if i >= self.deployed[v] || reached() {
                        cat.push((v, i));
                    }
                }
            }
            self.catalogue[u] = cat;
        }
        Ok(())
    }

    /// A request from `user`: distinct services as parts, each from the
    /// catalogue or, with probability `sector_share`, from a sector peer.
    pub fn request(&self, user: usize, t: u64, rng: &mut SimRng) -> Result<UserRequest> {
        let k = self.params.request_parts.sample(rng) as usize;
        let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(k);
        for _ in 0..k * 4 {
            if chosen.len() == k {
                break;
            }
            let peers = &self.sector_peers[user];
            let from = if !peers.is_empty() && rng.gen_bool(self.params.sector_share) { peers } else { &self.catalogue[user] };
            let &pick = from.choose(rng).ok_or(Error::Empty("request catalogue"))?;
            if !chosen.contains(&pick) {
                chosen.push(pick);
            }
        }
        UserRequest::new(chosen.into_iter().map(|(v, i)| self.plans[v][i].clone()).collect(), t)
    }

    /// Counts a request; every `every`-th one triggers a deployment.
    pub fn after_request(&mut self, user: usize, net: &mut HabitatNetwork, rng: &mut SimRng) -> Result<Option<AgentId>> {
        self.requests[user] += 1;
        if self.requests[user] % net.params.deploy_every_k_requests == 0 {
            self.deploy_next(user, net, rng)
        } else {
            Ok(None)
        }
    }

    /// Fraction of catalogue entries, over all users, already deployed.
    pub fn deployed_fraction(&self) -> f64 {
        let (mut have, mut total) = (0usize, 0usize);
        for cat in &self.catalogue {
            total += cat.len();
            have += cat.iter().filter(|&&(v, i)| i < self.deployed[v]).count();
        }
        have as f64 / total.max(1) as f64
    }
}

fn shift(v: u32, by: u32, rng: &mut SimRng) -> u32 {
    let signed = if rng.gen_bool(0.5) { i64::from(by) } else { -i64::from(by) };
    (i64::from(v) + signed).clamp(1, 100) as u32
}

/// `planned_per_user` distinct siblings: `base` first, then copies with a
/// few values shifted.
fn family(base: &[(u32, u32)], params: &UserBaseParams, rng: &mut SimRng) -> Vec<SemanticDescription> {
    let mut out: Vec<SemanticDescription> = Vec::with_capacity(params.planned_per_user);
    while out.len() < params.planned_per_user {
        let mut raw = base.to_vec();
        if !out.is_empty() {
            let k = params.variant_components.clamp(1, raw.len());
            for i in rand::seq::index::sample(rng, raw.len(), k) {
                raw[i].1 = shift(raw[i].1, rng.gen_range(1..=params.variant_spread.max(1)), rng);
            }
        }
        let d = SemanticDescription::for_agent(&raw).expect("family ids are distinct and in range");
        if !out.contains(&d) {
            out.push(d);
        }
    }
    out
}

/// One simulated run: network, user base and the per-event response trace.
#[derive(Debug, Clone)]
pub struct EcosystemRun {
    pub net: HabitatNetwork,
    pub users: UserBase,
    pub trace: Vec<f64>,
}

/// Builds the network and user base and deploys the initial services.
pub fn init_ecosystem(params: &EcosystemParams, rng: &mut SimRng) -> Result<EcosystemRun> {
    let mut net = HabitatNetwork::init(params.clone(), rng)?;
    let mut users = UserBase::generate(&net, params.user_base.clone(), rng)?;
    users.deploy_initial(&mut net, rng)?;
    Ok(EcosystemRun { net, users, trace: Vec::new() })
}

impl EcosystemRun {
    /// One request event from a uniformly chosen user.
    pub fn step(&mut self, migration: Option<(&TargetedMigrationConfig, &mut RecognizerBank)>, rng: &mut SimRng) -> Result<ResponseRecord> {
        let user = rng.gen_range(0..self.net.len());
        let req = self.users.request(user, self.net.time, rng)?;
        let h = user as HabitatId;
        let rec = self.net.handle_request(h, &req, rng)?;
        if let Some((cfg, bank)) = migration {
            if cfg.enabled {
                let used: BTreeSet<AgentId> = rec.best.iter().copied().collect();
                for &a in &used {
                    targeted_migrate(&mut self.net, a, h, cfg, bank, rng)?;
                }
                // Executed agents also interact where their sequence lands,
                // spending the counter earned at `h`.
                for &(a, at) in &rec.arrivals {
                    targeted_migrate_from(&mut self.net, a, at, h, cfg, bank, rng)?;
                }
            }
        }
        self.net.decay_and_escape(rng);
        self.users.after_request(user, &mut self.net, rng)?;
        self.trace.push(rec.fitness);
        self.net.time += 1;
        Ok(rec)
    }

    /// Runs `n_events` steps, calling `observe` after each.
    pub fn run(
        &mut self,
        n_events: u64,
        migration: Option<&TargetedMigrationConfig>,
        rng: &mut SimRng,
        mut observe: impl FnMut(&EcosystemRun),
    ) -> Result<()> {
        let mut bank = RecognizerBank::default();
        for _ in 0..n_events {
            self.step(migration.map(|c| (c, &mut bank)), rng)?;
            observe(self);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn params(n: usize) -> EcosystemParams {
        EcosystemParams { n_users: n, ..EcosystemParams::default() }
    }

    fn desc(raw: &[(u32, u32)]) -> SemanticDescription {
        SemanticDescription::for_agent(raw).unwrap()
    }

    #[test]
    fn two_users_form_one_pair() {
        let mut rng = SeededRng::new(1).stream(&[]);
        let net = HabitatNetwork::init(params(2), &mut rng).unwrap();
        assert_eq!(net.habitats[0].connections.keys().collect::<Vec<_>>(), vec![&1]);
        assert_eq!(net.habitats[1].connections.keys().collect::<Vec<_>>(), vec![&0]);
    }

    #[test]
    fn initial_degree_and_no_isolation() {
        let mut total = 0.0;
        for seed in 0..100 {
            let mut rng = SeededRng::new(seed).stream(&[]);
            let net = HabitatNetwork::init(params(100), &mut rng).unwrap();
            assert!(net.habitats.iter().all(|h| !h.connections.is_empty() && !h.connections.contains_key(&h.id)));
            total += net.habitats.iter().map(|h| h.connections.len()).sum::<usize>() as f64 / 100.0;
        }
        let mean = total / 100.0;
        assert!((mean - 8.0).abs() < 0.3, "{mean}");
    }

    #[test]
    fn certain_connection_always_copies() {
        let mut rng = SeededRng::new(2).stream(&[]);
        let mut net = HabitatNetwork::init(params(2), &mut rng).unwrap();
        net.habitats[0].connections.insert(1, 1.0);
        let id = net.deploy_agent(0, desc(&[(1, 2), (3, 4), (5, 6)]), &mut rng).unwrap();
        assert!(net.habitats[1].agents.contains_key(&id));
        assert!(net.habitats[0].agents.contains_key(&id));
        let copy = &net.habitats[1].agents[&id];
        assert_eq!(copy.migration_history.iter().map(|r| r.habitat_id).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn half_probability_copies_half_the_time() {
        let mut rng = SeededRng::new(3).stream(&[]);
        let mut net = HabitatNetwork::init(params(2), &mut rng).unwrap();
        net.habitats[0].connections.insert(1, 0.5);
        let id = net.deploy_agent(0, desc(&[(1, 2), (3, 4), (5, 6)]), &mut rng).unwrap();
        let mut hits = 0;
        for _ in 0..10_000 {
            net.habitats[1].agents.remove(&id);
            hits += net.migrate(0, id, &mut rng).len();
        }
        let frac = hits as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn no_connections_no_copies() {
        let mut rng = SeededRng::new(4).stream(&[]);
        let mut net = HabitatNetwork::init(params(2), &mut rng).unwrap();
        net.habitats[0].connections.clear();
        let id = net.deploy_agent(0, desc(&[(1, 2), (3, 4), (5, 6)]), &mut rng).unwrap();
        assert!(net.migrate(0, id, &mut rng).is_empty());
    }

    #[test]
    fn hebbian_rules() {
        let mut rng = SeededRng::new(5).stream(&[]);
        let mut net = HabitatNetwork::init(params(3), &mut rng).unwrap();
        net.habitats[0].connections.insert(1, 0.5);
        net.hebbian_update(&[0, 1], true);
        assert!((net.habitats[0].connections[&1] - 0.55).abs() < 1e-12);
        net.habitats[0].connections.insert(1, 0.05);
        net.hebbian_update(&[0, 1], false);
        assert!(!net.habitats[0].connections.contains_key(&1));
        net.habitats[0].connections.insert(1, 0.5);
        let mut last = 0.5;
        for _ in 0..200 {
            net.hebbian_update(&[0, 1], true);
            let p = net.habitats[0].connections[&1];
            assert!(p >= last && p <= 1.0);
            last = p;
        }
    }

    #[test]
    fn success_two_hops_away_opens_an_edge() {
        let mut rng = SeededRng::new(6).stream(&[]);
        let mut net = HabitatNetwork::init(params(3), &mut rng).unwrap();
        for h in &mut net.habitats {
            h.connections.clear();
        }
        net.habitats[0].connections.insert(1, 0.5);
        net.habitats[1].connections.insert(2, 0.5);
        net.hebbian_update(&[0, 1, 2], true);
        assert_eq!(net.habitats[0].connections.get(&2), Some(&0.5));
        net.hebbian_update(&[1, 2], true);
        assert!(!net.habitats[1].connections.contains_key(&1));
    }

    #[test]
    fn exact_pool_answer_scores_one() {
        let mut rng = SeededRng::new(7).stream(&[]);
        let mut net = HabitatNetwork::init(params(2), &mut rng).unwrap();
        let a = desc(&[(1, 20), (2, 30), (3, 40)]);
        let b = desc(&[(4, 20), (5, 30), (6, 40)]);
        net.deploy_agent(0, a.clone(), &mut rng).unwrap();
        net.deploy_agent(0, b.clone(), &mut rng).unwrap();
        net.deploy_agent(0, desc(&[(7, 1), (8, 2), (9, 3)]), &mut rng).unwrap();
        let rec = net.handle_request(0, &UserRequest::new(vec![a, b], 0).unwrap(), &mut rng).unwrap();
        assert_eq!(rec.fitness, 1.0);
        assert!(net.habitats[0].sequences.iter().any(|s| s.agents == rec.best));
        assert!(matches!(net.handle_request(1, &UserRequest::new(vec![desc(&[(1, 1), (2, 2), (3, 3)])], 0).unwrap(), &mut rng), Err(Error::EmptyPool(1))) || !net.habitats[1].agents.is_empty());
    }

    #[test]
    fn empty_pool_is_an_error() {
        let mut rng = SeededRng::new(8).stream(&[]);
        let mut net = HabitatNetwork::init(params(2), &mut rng).unwrap();
        let req = UserRequest::new(vec![desc(&[(1, 1), (2, 2), (3, 3)])], 0).unwrap();
        assert!(matches!(net.handle_request(1, &req, &mut rng), Err(Error::EmptyPool(1))));
        assert!(matches!(net.handle_request(9, &req, &mut rng), Err(Error::UnknownHabitat(9))));
    }

    #[test]
    fn escape_moves_then_kills() {
        let mut rng = SeededRng::new(9).stream(&[]);
        let mut net = HabitatNetwork::init(params(2), &mut rng).unwrap();
        net.habitats[0].connections.clear();
        let id = net.deploy_agent(0, desc(&[(1, 2), (3, 4), (5, 6)]), &mut rng).unwrap();
        net.habitats[0].connections.insert(1, 0.5);
        let before = net.agent_count();
        let idle = net.params.unused_threshold;
        net.habitats[0].agents.get_mut(&id).unwrap().unused_requests = idle;
        net.decay_and_escape(&mut rng);
        assert_eq!(net.agent_count(), before);
        let moved = &net.habitats[1].agents[&id];
        assert_eq!(moved.escape_remaining, 2);
        net.habitats[1].agents.get_mut(&id).unwrap().escape_remaining = 0;
        net.habitats[1].agents.get_mut(&id).unwrap().unused_requests = idle;
        net.decay_and_escape(&mut rng);
        assert_eq!(net.agent_count(), before - 1);
        assert!(matches!(net.ledger.last(), Some(Event::Death { .. })));
    }

    #[test]
    fn used_agents_never_escape() {
        let mut rng = SeededRng::new(10).stream(&[]);
        let mut net = HabitatNetwork::init(params(2), &mut rng).unwrap();
        let a = desc(&[(1, 20), (2, 30), (3, 40)]);
        let id = net.deploy_agent(0, a.clone(), &mut rng).unwrap();
        for t in 0..30 {
            net.handle_request(0, &UserRequest::new(vec![a.clone()], t).unwrap(), &mut rng).unwrap();
            net.decay_and_escape(&mut rng);
            assert!(net.habitats[0].agents.contains_key(&id));
        }
    }

    #[test]
    fn response_rate_examples() {
        assert_eq!(response_rate(&[1.0; 10], 10).unwrap(), 100.0);
        assert!((response_rate(&[0.5, 0.7], 2).unwrap() - 60.0).abs() < 1e-12);
        assert!(response_rate(&[1.0], 2).is_err());
    }

    #[test]
    fn deployed_catalogue_targets_are_in_reach() {
        let mut fractions = Vec::new();
        for seed in 0..5 {
            let mut rng = SeededRng::new(11).stream(&[seed]);
            let run = init_ecosystem(&EcosystemParams::default(), &mut rng).unwrap();
            for (u, cat) in run.users.catalogue.iter().enumerate() {
                for &(v, i) in cat.iter().filter(|&&(v, i)| i < run.users.deployed[v]) {
                    let target = &run.users.plans[v][i];
                    assert!(run.net.habitats[u].agents.values().any(|a| *a.description == *target));
                }
            }
            let copies = run.net.ledger.iter().filter(|e| matches!(e, Event::Copy { .. })).count();
            assert_eq!(run.net.agent_count() - copies, 500);
            fractions.push(run.users.deployed_fraction());
        }
        let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
        assert!((0.55..0.62).contains(&mean), "{fractions:?}");
    }

    #[test]
    fn every_third_request_deploys() {
        let mut rng = SeededRng::new(12).stream(&[]);
        let mut run = init_ecosystem(&params(4), &mut rng).unwrap();
        let before = run.users.deployed[2];
        for k in 1..=6 {
            let d = run.users.after_request(2, &mut run.net, &mut rng).unwrap();
            assert_eq!(d.is_some(), k % 3 == 0);
        }
        assert_eq!(run.users.deployed[2], before + 2);
    }

    #[test]
    fn siblings_are_similar() {
        let mut rng = SeededRng::new(13).stream(&[]);
        let run = init_ecosystem(&params(10), &mut rng).unwrap();
        for plan in &run.users.plans {
            for a in plan {
                for b in plan {
                    assert!(crate::model::description_difference(a, b) < 0.10);
                }
            }
        }
    }
}
