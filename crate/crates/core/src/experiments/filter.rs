//! Semantic filter: renders numeric tuples in business vocabulary.
//!
//! Table file: one mapping per line, tab or whitespace separated,
//! `id  values  attribute  label...`, where `values` is `v` or `lo..hi` and
//! the label may be several words. `{v}` in a label is replaced by the value
//! and `{v*N}` by the value times `N`. `#` starts a comment.

use std::path::Path;

use crate::model::{AttributeTuple, SemanticDescription, UserRequest};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterEntry {
    pub id: u8,
    pub lo: u8,
    pub hi: u8,
    pub attribute: String,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SemanticFilterTable {
    pub entries: Vec<FilterEntry>,
}

/// Travel-industry table shipped with the crate.
pub const TRAVEL_TABLE: &str = include_str!("../../data/travel.filter");

fn component(s: &str, line: usize) -> Result<u8> {
    let v: u32 = s.parse().map_err(|_| Error::InvalidParameter(format!("line {line}: '{s}' is not a number")))?;
    if !(1..=100).contains(&v) {
        return Err(Error::InvalidParameter(format!("line {line}: {v} outside 1..=100")));
    }
    Ok(v as u8)
}

impl SemanticFilterTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(id), Some(values), Some(attribute)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::InvalidParameter(format!("line {}: expected id, values, attribute, label", i + 1)));
            };
            let label = parts.collect::<Vec<_>>().join(" ");
            if label.is_empty() {
                return Err(Error::InvalidParameter(format!("line {}: missing label", i + 1)));
            }
            let (lo, hi) = match values.split_once("..") {
                Some((a, b)) => (component(a, i + 1)?, component(b, i + 1)?),
                None => {
                    let v = component(values, i + 1)?;
                    (v, v)
                }
            };
            entries.push(FilterEntry { id: component(id, i + 1)?, lo, hi, attribute: attribute.to_string(), label });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn travel() -> Self {
        Self::parse(TRAVEL_TABLE).expect("shipped table parses")
    }

    /// `(Attribute, Label)`, or `(id, value)` when unmapped. The first
    /// matching line wins.
    pub fn render_tuple(&self, t: &AttributeTuple) -> String {
        match self.entries.iter().find(|e| e.id == t.id && (e.lo..=e.hi).contains(&t.value)) {
            Some(e) => format!("({}, {})", e.attribute, fill(&e.label, t.value)),
            None => format!("({},{})", t.id, t.value),
        }
    }
}

fn fill(label: &str, v: u8) -> String {
    let mut out = label.replace("{v}", &v.to_string());
    while let Some(start) = out.find("{v*") {
        let Some(len) = out[start..].find('}') else { break };
        let factor: u32 = out[start + 3..start + len].parse().unwrap_or(1);
        out.replace_range(start..=start + len, &(u32::from(v) * factor).to_string());
    }
    out
}

pub fn filter_description(desc: &SemanticDescription, table: &SemanticFilterTable) -> String {
    let inner: Vec<String> = desc.tuples().iter().map(|t| table.render_tuple(t)).collect();
    format!("{{{}}}", inner.join(", "))
}

pub fn filter_request(req: &UserRequest, table: &SemanticFilterTable) -> String {
    let parts: Vec<String> = req.parts.iter().map(|p| filter_description(p, table)).collect();
    format!("[{}]", parts.join(", "))
}
