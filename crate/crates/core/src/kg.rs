//! Triples and the global/local triple stores.
//!
//! Identity of a triple is its case-folded, whitespace-normalized
//! `(head, relation, tail)`; direction is kept in storage but ignored when
//! walking paths.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

/// Collapses internal whitespace runs and trims the ends.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Dedup/identity form of an entity or relation name.
pub fn fold(s: &str) -> String {
    normalize_ws(s).to_lowercase()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub segment_id: String,
    #[serde(default)]
    pub agent_role: String,
    #[serde(default)]
    pub iteration: u32,
}

impl Provenance {
    pub fn new(segment_id: impl Into<String>, agent_role: impl Into<String>, iteration: u32) -> Self {
        Self {
            segment_id: segment_id.into(),
            agent_role: agent_role.into(),
            iteration,
        }
    }
}

/// Case-folded identity of a triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripleKey {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl fmt::Display for TripleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub provenance: Provenance,
}

fn default_confidence() -> f64 {
    1.0
}

impl Triple {
    /// Builds a normalized triple with confidence 1.0 and empty provenance.
    pub fn new(head: &str, relation: &str, tail: &str) -> Result<Self> {
        Self {
            head: head.to_string(),
            relation: relation.to_string(),
            tail: tail.to_string(),
            confidence: 1.0,
            provenance: Provenance::default(),
        }
        .normalized()
    }

    pub fn with_confidence(mut self, confidence: f64) -> Result<Self> {
        self.confidence = confidence;
        self.validate()?;
        Ok(self)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Whitespace-normalizes the three names and checks the invariants.
    pub fn normalized(mut self) -> Result<Self> {
        self.head = normalize_ws(&self.head);
        self.relation = normalize_ws(&self.relation);
        self.tail = normalize_ws(&self.tail);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why| Err(Error::MalformedTriple(self.display_raw(), why));
        if self.head.trim().is_empty() {
            return bad("empty head");
        }
        if self.relation.trim().is_empty() {
            return bad("empty relation");
        }
        if self.tail.trim().is_empty() {
            return bad("empty tail");
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return bad("confidence outside [0, 1]");
        }
        Ok(())
    }

    pub fn key(&self) -> TripleKey {
        TripleKey {
            head: fold(&self.head),
            relation: fold(&self.relation),
            tail: fold(&self.tail),
        }
    }

    fn display_raw(&self) -> String {
        format!("({:?}, {:?}, {:?})", self.head, self.relation, self.tail)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphKind {
    Global,
    Local,
}

/// Summary of what a local graph contributed to a global one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub new_triples: usize,
    pub new_entities: usize,
    pub new_relations: usize,
}

/// Deduplicated triple store with an entity adjacency index.
///
/// Mutation takes `&mut self`; share it behind an `RwLock` for the
/// many-readers/single-writer pattern.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    kind: GraphKind,
    triples: BTreeMap<TripleKey, Triple>,
    /// folded entity -> keys of triples touching it
    entity_index: BTreeMap<String, BTreeSet<TripleKey>>,
    /// folded entity -> first-seen surface form
    entity_names: BTreeMap<String, String>,
}

impl KnowledgeGraph {
    pub fn new(kind: GraphKind) -> Self {
        Self {
            kind,
            triples: BTreeMap::new(),
            entity_index: BTreeMap::new(),
            entity_names: BTreeMap::new(),
        }
    }

    pub fn global() -> Self {
        Self::new(GraphKind::Global)
    }

    pub fn local() -> Self {
        Self::new(GraphKind::Local)
    }

    pub fn from_triples(kind: GraphKind, ts: impl IntoIterator<Item = Triple>) -> Result<Self> {
        let mut kg = Self::new(kind);
        kg.add_triples(ts)?;
        Ok(kg)
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, key: &TripleKey) -> bool {
        self.triples.contains_key(key)
    }

    pub fn get(&self, key: &TripleKey) -> Option<&Triple> {
        self.triples.get(key)
    }

    /// Triples in key order.
    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.values()
    }

    pub fn keys(&self) -> impl Iterator<Item = &TripleKey> {
        self.triples.keys()
    }

    /// Surface names of all entities, ordered by folded form.
    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.entity_names.values().map(String::as_str)
    }

    pub fn entity_count(&self) -> usize {
        self.entity_names.len()
    }

    /// Triples whose head or tail folds to `entity`.
    pub fn adjacent(&self, entity: &str) -> Vec<&Triple> {
        self.entity_index
            .get(&fold(entity))
            .map(|keys| keys.iter().filter_map(|k| self.triples.get(k)).collect())
            .unwrap_or_default()
    }

    pub fn has_relation(&self, relation: &str) -> bool {
        let r = fold(relation);
        self.triples.keys().any(|k| k.relation == r)
    }

    /// Inserts every triple; a colliding key keeps the higher confidence.
    /// The batch is validated up front so a bad triple leaves the store
    /// untouched. Returns the number of new keys.
    pub fn add_triples(&mut self, ts: impl IntoIterator<Item = Triple>) -> Result<usize> {
        let batch = ts.into_iter().map(Triple::normalized).collect::<Result<Vec<_>>>()?;
        let mut added = 0;
        for t in batch {
            let key = t.key();
            match self.triples.get_mut(&key) {
                Some(existing) => {
                    if t.confidence > existing.confidence {
                        *existing = t;
                    }
                }
                None => {
                    self.index(&key, &t);
                    self.triples.insert(key, t);
                    added += 1;
                }
            }
        }
        Ok(added)
    }

    fn index(&mut self, key: &TripleKey, t: &Triple) {
        for (folded, surface) in [(&key.head, &t.head), (&key.tail, &t.tail)] {
            self.entity_index.entry(folded.clone()).or_default().insert(key.clone());
            self.entity_names
                .entry(folded.clone())
                .or_insert_with(|| surface.clone());
        }
    }

    /// Local subgraph of every triple within `max_hops` undirected hops of
    /// any seed. Unknown seeds contribute nothing.
    pub fn retrieve_paths<S: AsRef<str>>(&self, seeds: &[S], max_hops: usize) -> Result<KnowledgeGraph> {
        if max_hops == 0 {
            return Err(Error::Precondition("max_hops must be at least 1".into()));
        }
        let mut visited: BTreeSet<String> = BTreeSet::new();
        let mut frontier: VecDeque<String> = VecDeque::new();
        for s in seeds {
            let f = fold(s.as_ref());
            if self.entity_index.contains_key(&f) && visited.insert(f.clone()) {
                frontier.push_back(f);
            }
        }
        let mut picked: BTreeSet<&TripleKey> = BTreeSet::new();
        for _ in 0..max_hops {
            if frontier.is_empty() {
                break;
            }
            let mut next = VecDeque::new();
            for entity in frontier.drain(..) {
                for key in &self.entity_index[&entity] {
                    picked.insert(key);
                    for other in [&key.head, &key.tail] {
                        if visited.insert(other.clone()) {
                            next.push_back(other.clone());
                        }
                    }
                }
            }
            frontier = next;
        }
        let mut local = KnowledgeGraph::local();
        local.add_triples(picked.into_iter().map(|k| self.triples[k].clone()))?;
        Ok(local)
    }

    /// Absorbs a local graph; the report counts keys this graph lacked.
    pub fn merge_local(&mut self, lhkg: &KnowledgeGraph) -> Result<MergeReport> {
        let known_relations: BTreeSet<String> = self.triples.keys().map(|k| k.relation.clone()).collect();
        let new_entities = lhkg
            .entity_names
            .keys()
            .filter(|e| !self.entity_names.contains_key(*e))
            .count();
        let new_relations = lhkg
            .triples
            .keys()
            .map(|k| &k.relation)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|r| !known_relations.contains(*r))
            .count();
        let new_triples = self.add_triples(lhkg.triples().cloned())?;
        Ok(MergeReport {
            new_triples,
            new_entities,
            new_relations,
        })
    }

    pub fn read_jsonl(path: &Path, kind: GraphKind) -> Result<Self> {
        let ts: Vec<Triple> = fsutil::read_jsonl(path)?;
        Self::from_triples(kind, ts)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let ts: Vec<&Triple> = self.triples().collect();
        fsutil::write_jsonl(path, &ts)
    }

    /// Edge list for external graph viewers.
    pub fn write_edge_csv(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["head", "relation", "tail", "confidence"])?;
            for t in self.triples() {
                csv.write_record([&t.head, &t.relation, &t.tail, &t.confidence.to_string()])?;
            }
            csv.flush()?;
            Ok(())
        })
    }
}
