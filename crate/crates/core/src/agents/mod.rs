//! The five extraction agents and the verifier loop that drives them.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kg::{fold, KnowledgeGraph, Provenance, Triple, TripleKey};
use crate::segmenter::Segment;

pub mod backend;
pub mod parse;
pub mod prompts;
pub mod session;

pub use backend::{
    CallContext, ChatBackend, ChatBackendConfig, ChatMessage, ChatRequest, HttpChatBackend, MessageRole, RetryPolicy,
    ScriptEntry, ScriptMatch, ScriptedBackend,
};
pub use prompts::PromptSet;
pub use session::{run_session, ExtractionSession, SessionAbort, SessionConfig, SessionStatus, TraceEntry};

pub const CANDIDATE_CONFIDENCE: f64 = 0.5;
pub const DEFAULT_APPROVED_CONFIDENCE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    KgMaster,
    EntityExtractor,
    RelationExtractor,
    KrDistiller,
    Verifier,
}

impl AgentRole {
    pub const ALL: [AgentRole; 5] = [
        AgentRole::KgMaster,
        AgentRole::EntityExtractor,
        AgentRole::RelationExtractor,
        AgentRole::KrDistiller,
        AgentRole::Verifier,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::KgMaster => "kg_master",
            AgentRole::EntityExtractor => "entity_extractor",
            AgentRole::RelationExtractor => "relation_extractor",
            AgentRole::KrDistiller => "kr_distiller",
            AgentRole::Verifier => "verifier",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub subqueries: Vec<String>,
    pub candidate_relations: Vec<String>,
    /// Surface names of knowledge-graph entities the query touches.
    pub seed_entities: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub triple_key: TripleKey,
    pub decision: Decision,
    #[serde(default)]
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl Verdict {
    pub fn is_approved(&self) -> bool {
        self.decision == Decision::Approved
    }
}

/// A rejected triple waiting to be resubmitted, with the verifier's reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub triple: Triple,
    pub reason: String,
}

/// An agent's parsed answer plus the digest of the prompt that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply<T> {
    pub value: T,
    pub prompt_digest: String,
    /// Items the agent produced that were discarded, with the cause.
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self::from(&ChatBackendConfig::default())
    }
}

impl From<&ChatBackendConfig> for GenerationParams {
    fn from(c: &ChatBackendConfig) -> Self {
        Self {
            model: c.model.clone(),
            temperature: c.temperature,
            top_p: c.top_p,
            max_tokens: c.max_tokens,
        }
    }
}

const REPAIR: &str = "Your previous reply could not be parsed. Reply again with only the JSON object \
in the format described in your instructions, and no other text.";

/// Everything an agent needs to talk to the chat service.
pub struct AgentRuntime<'a> {
    pub backend: &'a dyn ChatBackend,
    pub prompts: PromptSet,
    pub params: GenerationParams,
    pub retry: RetryPolicy,
}

impl<'a> AgentRuntime<'a> {
    pub fn new(backend: &'a dyn ChatBackend) -> Self {
        Self {
            backend,
            prompts: PromptSet::default(),
            params: GenerationParams::default(),
            retry: RetryPolicy::default(),
        }
    }

    fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            model: self.params.model.clone(),
            messages,
            temperature: self.params.temperature,
            top_p: self.params.top_p,
            max_tokens: self.params.max_tokens,
        }
    }

    /// One exchange with a single repair attempt when `parse` rejects the
    /// reply.
    fn ask<T>(
        &self,
        role: AgentRole,
        iteration: u32,
        user: String,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<(T, String)> {
        let ctx = CallContext {
            agent_role: role,
            iteration,
        };
        let mut messages = vec![ChatMessage::system(self.prompts.get(role)), ChatMessage::user(user)];
        let digest = prompt_digest(&messages);
        let raw = self.retry.call(self.backend, &ctx, &self.request(messages.clone()))?;
        if let Some(v) = parse(&raw) {
            return Ok((v, digest));
        }
        tracing::warn!(%role, iteration, "unparseable reply, asking once more");
        messages.push(ChatMessage::assistant(raw));
        messages.push(ChatMessage::user(REPAIR));
        let raw = self.retry.call(self.backend, &ctx, &self.request(messages))?;
        parse(&raw).map(|v| (v, digest)).ok_or_else(|| Error::Protocol {
            role: role.to_string(),
            raw,
        })
    }

    /// Decomposes the query and picks the knowledge-graph entities to expand
    /// from: those whose folded name occurs, on word boundaries, in a
    /// proposed seed, the query or a sub-query.
    pub fn kg_master_plan(&self, query: &str, gkg: &KnowledgeGraph, iteration: u32) -> Result<Reply<Plan>> {
        if query.trim().is_empty() {
            return Err(Error::Precondition("query must not be empty".into()));
        }
        let mut user = format!("Query: {}\n", query.trim());
        let relations: Vec<String> = {
            let mut seen = HashSet::new();
            gkg.keys()
                .filter(|k| seen.insert(k.relation.clone()))
                .map(|k| k.relation.clone())
                .take(50)
                .collect()
        };
        if !relations.is_empty() {
            user.push_str(&format!(
                "Relations present in the knowledge graph: {}\n",
                relations.join(", ")
            ));
        }
        let (reply, digest) = self.ask(AgentRole::KgMaster, iteration, user, parse::parse_plan)?;

        let mut probes: Vec<&str> = reply.seed_entities.iter().map(String::as_str).collect();
        probes.push(query);
        probes.extend(reply.subqueries.iter().map(String::as_str));
        let seed_entities = match_entities(gkg, &probes);
        let unmatched = reply
            .seed_entities
            .iter()
            .filter(|s| !seed_entities.iter().any(|e| fold(e) == fold(s)))
            .map(|s| format!("seed {s:?} not in knowledge graph"))
            .collect();
        Ok(Reply {
            value: Plan {
                subqueries: reply.subqueries,
                candidate_relations: reply.candidate_relations,
                seed_entities,
            },
            prompt_digest: digest,
            dropped: unmatched,
        })
    }

    pub fn extract_entities(
        &self,
        segment: &Segment,
        plan: &Plan,
        feedback: &[Feedback],
        iteration: u32,
    ) -> Result<Reply<Vec<String>>> {
        let mut user = String::new();
        if !plan.subqueries.is_empty() {
            user.push_str(&format!("Focus: {}\n", plan.subqueries.join("; ")));
        }
        user.push_str(&format!("Text fragment:\n{}\n", segment.text()));
        push_feedback(&mut user, feedback);
        let (raw, digest) = self.ask(AgentRole::EntityExtractor, iteration, user, |r| {
            Some(parse::parse_entities(r))
        })?;
        Ok(Reply {
            value: order_entities(&segment.text(), raw),
            prompt_digest: digest,
            dropped: Vec::new(),
        })
    }

    /// Candidate triples whose head and tail are both among `entities`.
    /// Anything else is dropped and reported in [`Reply::dropped`].
    #[allow(clippy::too_many_arguments)]
    pub fn extract_relations(
        &self,
        segment: &Segment,
        entities: &[String],
        plan: &Plan,
        paths: &KnowledgeGraph,
        feedback: &[Feedback],
        iteration: u32,
    ) -> Result<Reply<Vec<Triple>>> {
        if entities.is_empty() {
            return Ok(Reply {
                value: Vec::new(),
                prompt_digest: String::new(),
                dropped: Vec::new(),
            });
        }
        let mut user = format!("Text fragment:\n{}\n\nEntities:\n", segment.text());
        for e in entities {
            user.push_str(&format!("- {e}\n"));
        }
        if !plan.candidate_relations.is_empty() {
            user.push_str(&format!(
                "Candidate relations: {}\n",
                plan.candidate_relations.join(", ")
            ));
        }
        if !paths.is_empty() {
            user.push_str("Related facts from the knowledge graph:\n");
            for t in paths.triples().take(40) {
                user.push_str(&format!("{t}\n"));
            }
        }
        push_feedback(&mut user, feedback);
        let (raw, digest) = self.ask(AgentRole::RelationExtractor, iteration, user, parse::parse_triples)?;

        let known: HashSet<String> = entities.iter().map(|e| fold(e)).collect();
        let provenance = Provenance::new(&segment.id, AgentRole::RelationExtractor.as_str(), iteration);
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for r in raw {
            let triple = Triple::new(&r.head, &r.relation, &r.tail);
            match triple {
                Err(e) => dropped.push(e.to_string()),
                Ok(t) if !known.contains(&fold(&t.head)) || !known.contains(&fold(&t.tail)) => {
                    tracing::info!(segment = %segment.id, "dropping {t}: entity not extracted");
                    dropped.push(format!("{t}: unknown entity"));
                }
                Ok(t) => kept.push(
                    t.with_confidence(CANDIDATE_CONFIDENCE)?
                        .with_provenance(provenance.clone()),
                ),
            }
        }
        Ok(Reply {
            value: kept,
            prompt_digest: digest,
            dropped,
        })
    }

    /// One verdict per submitted triple, in order.
    pub fn verify_triples(&self, triples: &[Triple], context: &Segment, iteration: u32) -> Result<Reply<Vec<Verdict>>> {
        if triples.is_empty() {
            return Err(Error::Precondition("nothing to verify".into()));
        }
        let mut user = format!("Text fragment:\n{}\n\nTriples:\n", context.text());
        for (i, t) in triples.iter().enumerate() {
            user.push_str(&format!("{}. {t}\n", i + 1));
        }
        let n = triples.len();
        let (raw, digest) = self.ask(AgentRole::Verifier, iteration, user, |r| parse::parse_verdicts(r, n))?;
        let verdicts = triples
            .iter()
            .zip(raw)
            .map(|(t, v)| Verdict {
                triple_key: t.key(),
                reason: if v.decision == Decision::Rejected && v.reason.trim().is_empty() {
                    "no reason given".into()
                } else {
                    v.reason
                },
                decision: v.decision,
                confidence: v.confidence,
            })
            .collect();
        Ok(Reply {
            value: verdicts,
            prompt_digest: digest,
            dropped: Vec::new(),
        })
    }
}

/// Case-folded dedup with whitespace normalization, first occurrence wins.
/// Malformed candidates are dropped.
pub fn distill_triples(candidates: &[Triple]) -> Vec<Triple> {
    let mut seen = HashSet::new();
    candidates
        .iter()
        .filter_map(|t| t.clone().normalized().ok())
        .filter(|t| seen.insert(t.key()))
        .collect()
}

/// Splits a verified batch. Approved triples take the verifier's confidence
/// (0.9 when it gave none) and are stamped as verified in `iteration`.
pub fn apply_verdicts(triples: &[Triple], verdicts: &[Verdict], iteration: u32) -> (Vec<Triple>, Vec<Feedback>) {
    let mut approved = Vec::new();
    let mut rejected = Vec::new();
    for (t, v) in triples.iter().zip(verdicts) {
        match v.decision {
            Decision::Approved => {
                let mut t = t.clone();
                t.confidence = v
                    .confidence
                    .filter(|c| c.is_finite())
                    .unwrap_or(DEFAULT_APPROVED_CONFIDENCE)
                    .clamp(0.0, 1.0);
                t.provenance.agent_role = AgentRole::Verifier.as_str().into();
                t.provenance.iteration = iteration;
                approved.push(t);
            }
            Decision::Rejected => rejected.push(Feedback {
                triple: t.clone(),
                reason: v.reason.clone(),
            }),
        }
    }
    (approved, rejected)
}

pub fn prompt_digest(messages: &[ChatMessage]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(json!(m.role).to_string());
        h.update([0]);
        h.update(&m.content);
        h.update([0]);
    }
    hex::encode(h.finalize())
}

fn push_feedback(user: &mut String, feedback: &[Feedback]) {
    if feedback.is_empty() {
        return;
    }
    user.push_str("\nThese triples were rejected by the verifier. Correct them or leave them out:\n");
    for f in feedback {
        user.push_str(&format!("- {}: {}\n", f.triple, f.reason));
    }
}

/// Is `needle` a substring of `hay` that starts and ends on word boundaries?
fn contains_word(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    hay.match_indices(needle).any(|(i, _)| {
        let before = hay[..i].chars().next_back();
        let after = hay[i + needle.len()..].chars().next();
        before.is_none_or(|c| !c.is_alphanumeric()) && after.is_none_or(|c| !c.is_alphanumeric())
    })
}

fn match_entities(gkg: &KnowledgeGraph, probes: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for probe in probes {
        let p = fold(probe);
        for name in gkg.entities() {
            let f = fold(name);
            if (f == p || contains_word(&p, &f)) && seen.insert(f) {
                out.push(name.to_string());
            }
        }
    }
    out
}

/// Trims and dedups (case-folded), then orders by first mention in `text`.
/// Entities that never appear keep their reply order after the rest.
fn order_entities(text: &str, raw: Vec<String>) -> Vec<String> {
    let hay = fold(text);
    let mut seen = HashSet::new();
    let mut items: Vec<(usize, usize, String)> = raw
        .into_iter()
        .map(|e| crate::kg::normalize_ws(e.trim_matches(|c: char| c == '"' || c == '\'')))
        .filter(|e| !e.is_empty() && seen.insert(fold(e)))
        .enumerate()
        .map(|(i, e)| (hay.find(&fold(&e)).unwrap_or(usize::MAX), i, e))
        .collect();
    items.sort_by_key(|&(pos, i, _)| (pos, i));
    items.into_iter().map(|(_, _, e)| e).collect()
}

pub(crate) fn reply_json<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).unwrap_or(Value::Null)
}
