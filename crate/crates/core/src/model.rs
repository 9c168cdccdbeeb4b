//! Shared domain types: semantic descriptions, agents, sequences, requests.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type AgentId = u32;
pub type HabitatId = u32;

pub const COMPONENT_MIN: u32 = 1;
pub const COMPONENT_MAX: u32 = 100;
/// Mismatch charged for a required attribute id absent from a sequence.
pub const MISSING_PENALTY: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeTuple {
    pub id: u8,
    pub value: u8,
}

impl AttributeTuple {
    pub fn new(id: u32, value: u32) -> Result<Self> {
        for c in [id, value] {
            if !(COMPONENT_MIN..=COMPONENT_MAX).contains(&c) {
                return Err(Error::OutOfRange(c as i64));
            }
        }
        Ok(Self { id: id as u8, value: value as u8 })
    }
}

/// Tuples sorted ascending by (id, value).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticDescription {
    tuples: Vec<AttributeTuple>,
}

impl SemanticDescription {
    /// Any non-empty tuple list (requests parts, test fixtures).
    pub fn new(raw: &[(u32, u32)]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Empty("description"));
        }
        let mut tuples = raw
            .iter()
            .map(|&(i, v)| AttributeTuple::new(i, v))
            .collect::<Result<Vec<_>>>()?;
        tuples.sort_unstable();
        Ok(Self { tuples })
    }

    /// Agent descriptions hold between three and six tuples.
    pub fn for_agent(raw: &[(u32, u32)]) -> Result<Self> {
        match raw.len() {
            n if n < 3 => Err(Error::TooShort(n)),
            n if n > 6 => Err(Error::TooLong(n)),
            _ => Self::new(raw),
        }
    }

    pub fn tuples(&self) -> &[AttributeTuple] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn to_raw(&self) -> Vec<(u32, u32)> {
        self.tuples.iter().map(|t| (t.id as u32, t.value as u32)).collect()
    }
}

/// Sort and validate a raw tuple list. `agent` enables the 3..=6 length check.
pub fn canonicalize(raw: &[(u32, u32)], agent: bool) -> Result<SemanticDescription> {
    if agent {
        SemanticDescription::for_agent(raw)
    } else {
        SemanticDescription::new(raw)
    }
}

/// Normalized L1 difference in [0,1].
///
/// Tuples are paired by attribute id (in sorted order within an id). A paired
/// tuple costs |Δvalue|; each of the `max(|a|,|b|) - pairs` unpaired slots
/// costs 100 per component. The total is divided by `2·100·max(|a|,|b|)`.
pub fn description_difference(a: &SemanticDescription, b: &SemanticDescription) -> f64 {
    let (x, y) = (a.tuples(), b.tuples());
    let n = x.len().max(y.len());
    if n == 0 {
        return 0.0;
    }
    let (mut i, mut j, mut pairs, mut cost) = (0, 0, 0usize, 0u32);
    while i < x.len() && j < y.len() {
        match x[i].id.cmp(&y[j].id) {
            std::cmp::Ordering::Equal => {
                cost += x[i].value.abs_diff(y[j].value) as u32;
                pairs += 1;
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    cost += 2 * COMPONENT_MAX * (n - pairs) as u32;
    cost as f64 / (2.0 * COMPONENT_MAX as f64 * n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MigrationRecord {
    pub habitat_id: HabitatId,
    pub uses: u32,
}

/// One copy of an agent living in a habitat pool. Copies share `id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub description: Arc<SemanticDescription>,
    pub migration_history: Vec<MigrationRecord>,
    pub escape_remaining: u32,
    pub targeted_migrations: u32,
    pub unused_requests: u32,
}

impl Agent {
    pub fn new(id: AgentId, description: Arc<SemanticDescription>, home: HabitatId, escape_budget: u32) -> Self {
        Self {
            id,
            description,
            migration_history: vec![MigrationRecord { habitat_id: home, uses: 0 }],
            escape_remaining: escape_budget,
            targeted_migrations: 0,
            unused_requests: 0,
        }
    }

    pub fn has_visited(&self, h: HabitatId) -> bool {
        self.migration_history.iter().any(|r| r.habitat_id == h)
    }

    /// Copy arriving at `to`: history extended, counters carried over.
    pub fn copy_to(&self, to: HabitatId) -> Self {
        let mut c = self.clone();
        c.migration_history.push(MigrationRecord { habitat_id: to, uses: 0 });
        c.unused_requests = 0;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentSequence {
    pub agents: Vec<AgentId>,
    pub origin_habitats: BTreeSet<HabitatId>,
}

impl AgentSequence {
    pub fn new(agents: Vec<AgentId>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::Empty("agent sequence"));
        }
        Ok(Self { agents, origin_habitats: BTreeSet::new() })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRequest {
    pub parts: Vec<SemanticDescription>,
    pub issued_at: u64,
}

impl UserRequest {
    pub fn new(parts: Vec<SemanticDescription>, issued_at: u64) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Empty("request"));
        }
        Ok(Self { parts, issued_at })
    }

    /// All required tuples of all parts, in part order.
    pub fn required(&self) -> impl Iterator<Item = &AttributeTuple> {
        self.parts.iter().flat_map(|p| p.tuples().iter())
    }
}

/// Immutable descriptions indexed by agent id.
#[derive(Debug, Clone, Default)]
pub struct AgentCatalog {
    descriptions: Vec<Arc<SemanticDescription>>,
}

impl AgentCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_descriptions(descs: Vec<SemanticDescription>) -> Self {
        Self { descriptions: descs.into_iter().map(Arc::new).collect() }
    }

    pub fn register(&mut self, desc: SemanticDescription) -> AgentId {
        self.descriptions.push(Arc::new(desc));
        (self.descriptions.len() - 1) as AgentId
    }

    pub fn get(&self, id: AgentId) -> &Arc<SemanticDescription> {
        &self.descriptions[id as usize]
    }

    pub fn len(&self) -> usize {
        self.descriptions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptions.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = AgentId> {
        0..self.descriptions.len() as AgentId
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(raw: &[(u32, u32)]) -> SemanticDescription {
        SemanticDescription::new(raw).unwrap()
    }

    #[test]
    fn canonicalize_sorts() {
        let c = canonicalize(&[(3, 5), (1, 2), (2, 9)], true).unwrap();
        assert_eq!(c.to_raw(), vec![(1, 2), (2, 9), (3, 5)]);
    }

    #[test]
    fn agent_length_checks() {
        assert_eq!(canonicalize(&[(1, 2)], true), Err(Error::TooShort(1)));
        let seven: Vec<_> = (1..=7).map(|i| (i, i)).collect();
        assert_eq!(canonicalize(&seven, true), Err(Error::TooLong(7)));
        assert!(canonicalize(&[(1, 2)], false).is_ok());
    }

    #[test]
    fn out_of_range_rejected() {
        assert_eq!(canonicalize(&[(0, 5), (1, 1), (2, 2)], true), Err(Error::OutOfRange(0)));
        assert_eq!(canonicalize(&[(1, 101), (1, 1), (2, 2)], true), Err(Error::OutOfRange(101)));
    }

    #[test]
    fn travel_example_is_valid_and_unchanged() {
        let raw = [(1, 25), (2, 35), (3, 55), (4, 6), (5, 37), (6, 12)];
        assert_eq!(canonicalize(&raw, true).unwrap().to_raw(), raw.to_vec());
    }

    #[test]
    fn difference_examples() {
        let a = d(&[(1, 10), (2, 20)]);
        assert_eq!(description_difference(&a, &a), 0.0);
        assert_eq!(description_difference(&a, &d(&[(3, 10), (4, 20)])), 1.0);
        assert!((description_difference(&a, &d(&[(1, 12), (2, 20)])) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn difference_with_unequal_lengths() {
        // one pair costing 4, one unpaired slot costing 200, over 2·100·2
        let a = d(&[(1, 10), (2, 20)]);
        let b = d(&[(1, 14)]);
        assert!((description_difference(&a, &b) - 204.0 / 400.0).abs() < 1e-15);
    }

    fn arb_desc() -> impl Strategy<Value = SemanticDescription> {
        proptest::collection::btree_map(1u32..=12, 1u32..=100, 1..=6).prop_map(|m| {
            let raw: Vec<_> = m.into_iter().collect();
            SemanticDescription::new(&raw).unwrap()
        })
    }

    proptest! {
        #[test]
        fn canonicalize_idempotent(raw in proptest::collection::vec((1u32..=100, 1u32..=100), 1..8)) {
            let once = canonicalize(&raw, false).unwrap();
            let twice = canonicalize(&once.to_raw(), false).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn difference_symmetric_bounded(a in arb_desc(), b in arb_desc()) {
            let ab = description_difference(&a, &b);
            prop_assert_eq!(ab, description_difference(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 0.0, a == b);
        }

        #[test]
        fn difference_triangle(a in arb_desc(), b in arb_desc(), c in arb_desc()) {
            let ac = description_difference(&a, &c);
            let via = description_difference(&a, &b) + description_difference(&b, &c);
            prop_assert!(ac <= via + 1e-12, "{} > {}", ac, via);
        }
    }
}
