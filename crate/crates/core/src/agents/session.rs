//! The bounded extraction loop: plan, retrieve, extract, distill, verify,
//! and resubmit what the verifier rejected.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{apply_verdicts, distill_triples, reply_json, AgentRole, AgentRuntime, Feedback, Verdict};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple, TripleKey};
use crate::segmenter::Segment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub max_iterations: u32,
    pub hop_limit: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5,
            hop_limit: 2,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.hop_limit == 0 {
            return Err(Error::Config("hop_limit must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    Converged,
    Exhausted,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: u32,
    pub agent_role: AgentRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_id: Option<String>,
    /// SHA-256 of the prompt; absent for steps that made no call.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
    pub parsed_output: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verdicts: Vec<Verdict>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub resubmitted: Vec<TripleKey>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<String>,
}

/// Per-iteration bookkeeping. `approval_rate` is the logged reward proxy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: u32,
    pub submitted: usize,
    pub approved: usize,
    pub rejected: usize,
    pub resubmitted: usize,
    pub approval_rate: f64,
    pub z_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSession {
    pub query: String,
    pub context: Vec<Segment>,
    /// Verified triples, deduplicated by key.
    pub z: Vec<Triple>,
    pub step: u32,
    pub max_iterations: u32,
    pub status: SessionStatus,
    pub trace: Vec<TraceEntry>,
    pub iterations: Vec<IterationSummary>,
    /// Triples still rejected when the session stopped.
    #[serde(default)]
    pub pending: Vec<Feedback>,
}

impl ExtractionSession {
    fn new(query: &str, context: &[Segment], max_iterations: u32) -> Self {
        Self {
            query: query.to_string(),
            context: context.to_vec(),
            z: Vec::new(),
            step: 0,
            max_iterations,
            status: SessionStatus::Running,
            trace: Vec::new(),
            iterations: Vec::new(),
            pending: Vec::new(),
        }
    }

    pub fn resubmissions(&self) -> usize {
        self.iterations.iter().map(|i| i.resubmitted).sum()
    }

    /// The verified triples as a local graph.
    pub fn local_graph(&self) -> Result<KnowledgeGraph> {
        KnowledgeGraph::from_triples(crate::kg::GraphKind::Local, self.z.iter().cloned())
    }

    fn admit(&mut self, approved: Vec<Triple>) {
        for t in approved {
            let key = t.key();
            match self.z.iter_mut().find(|z| z.key() == key) {
                Some(existing) if t.confidence > existing.confidence => *existing = t,
                Some(_) => {}
                None => self.z.push(t),
            }
        }
    }
}

/// A session that stopped on an unrecoverable backend failure. The partial
/// trace is kept.
#[derive(Debug)]
pub struct SessionAbort {
    pub session: Box<ExtractionSession>,
    pub error: Error,
}

impl std::fmt::Display for SessionAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for SessionAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs the loop until an iteration ends without rejections or the
/// iteration budget is spent.
pub fn run_session(
    rt: &AgentRuntime<'_>,
    query: &str,
    segments: &[Segment],
    gkg: &KnowledgeGraph,
    cfg: &SessionConfig,
) -> std::result::Result<ExtractionSession, SessionAbort> {
    let mut session = ExtractionSession::new(query, segments, cfg.max_iterations);
    if let Err(error) = cfg.validate() {
        session.status = SessionStatus::Aborted;
        return Err(SessionAbort {
            session: Box::new(session),
            error,
        });
    }
    let mut pending: BTreeMap<String, Vec<Feedback>> = BTreeMap::new();
    while session.step < cfg.max_iterations {
        let iteration = session.step + 1;
        match run_iteration(rt, &mut session, &mut pending, gkg, cfg, iteration) {
            Ok(rejected) => {
                session.step = iteration;
                if rejected == 0 {
                    session.status = SessionStatus::Converged;
                    break;
                }
            }
            Err(e) => {
                session.step = iteration;
                session.status = SessionStatus::Aborted;
                session.pending = pending.into_values().flatten().collect();
                return Err(SessionAbort {
                    session: Box::new(session),
                    error: Error::SessionAborted {
                        iteration: iteration as usize,
                        source: Box::new(e),
                    },
                });
            }
        }
    }
    if session.status == SessionStatus::Running {
        session.status = SessionStatus::Exhausted;
    }
    session.pending = pending.into_values().flatten().collect();
    Ok(session)
}

/// Returns the number of rejections in this iteration.
fn run_iteration(
    rt: &AgentRuntime<'_>,
    session: &mut ExtractionSession,
    pending: &mut BTreeMap<String, Vec<Feedback>>,
    gkg: &KnowledgeGraph,
    cfg: &SessionConfig,
    iteration: u32,
) -> Result<usize> {
    let plan = rt.kg_master_plan(&session.query, gkg, iteration)?;
    let paths = gkg.retrieve_paths(&plan.value.seed_entities, cfg.hop_limit)?;
    session.trace.push(TraceEntry {
        iteration,
        agent_role: AgentRole::KgMaster,
        segment_id: None,
        prompt_digest: Some(plan.prompt_digest),
        parsed_output: json!({ "plan": plan.value, "retrieved_triples": paths.len() }),
        verdicts: Vec::new(),
        resubmitted: Vec::new(),
        dropped: plan.dropped,
    });
    let plan = plan.value;

    let mut summary = IterationSummary {
        iteration,
        submitted: 0,
        approved: 0,
        rejected: 0,
        resubmitted: 0,
        approval_rate: 1.0,
        z_size: 0,
    };
    let segments = session.context.clone();
    for segment in &segments {
        let feedback = pending.remove(&segment.id).unwrap_or_default();

        let entities = rt.extract_entities(segment, &plan, &feedback, iteration)?;
        session.trace.push(TraceEntry {
            iteration,
            agent_role: AgentRole::EntityExtractor,
            segment_id: Some(segment.id.clone()),
            prompt_digest: Some(entities.prompt_digest),
            parsed_output: reply_json(&entities.value),
            verdicts: Vec::new(),
            resubmitted: Vec::new(),
            dropped: entities.dropped,
        });

        let relations = rt.extract_relations(segment, &entities.value, &plan, &paths, &feedback, iteration)?;
        session.trace.push(TraceEntry {
            iteration,
            agent_role: AgentRole::RelationExtractor,
            segment_id: Some(segment.id.clone()),
            prompt_digest: (!relations.prompt_digest.is_empty()).then_some(relations.prompt_digest),
            parsed_output: reply_json(&relations.value),
            verdicts: Vec::new(),
            resubmitted: Vec::new(),
            dropped: relations.dropped,
        });

        let verified: HashSet<TripleKey> = session.z.iter().map(Triple::key).collect();
        let mut candidates: Vec<Triple> = feedback.iter().map(|f| f.triple.clone()).collect();
        candidates.extend(relations.value);
        let distilled: Vec<Triple> = distill_triples(&candidates)
            .into_iter()
            .filter(|t| !verified.contains(&t.key()))
            .collect();
        let resubmitted: Vec<TripleKey> = feedback
            .iter()
            .map(|f| f.triple.key())
            .filter(|k| !verified.contains(k))
            .collect();
        session.trace.push(TraceEntry {
            iteration,
            agent_role: AgentRole::KrDistiller,
            segment_id: Some(segment.id.clone()),
            prompt_digest: None,
            parsed_output: reply_json(&distilled),
            verdicts: Vec::new(),
            resubmitted: Vec::new(),
            dropped: Vec::new(),
        });
        if distilled.is_empty() {
            continue;
        }

        let verdicts = rt.verify_triples(&distilled, segment, iteration)?;
        debug_assert_eq!(verdicts.value.len(), distilled.len());
        let (approved, rejected) = apply_verdicts(&distilled, &verdicts.value, iteration);
        summary.submitted += distilled.len();
        summary.approved += approved.len();
        summary.rejected += rejected.len();
        summary.resubmitted += resubmitted.len();
        session.trace.push(TraceEntry {
            iteration,
            agent_role: AgentRole::Verifier,
            segment_id: Some(segment.id.clone()),
            prompt_digest: Some(verdicts.prompt_digest),
            parsed_output: json!({ "approved": approved.len(), "rejected": rejected.len() }),
            verdicts: verdicts.value,
            resubmitted,
            dropped: Vec::new(),
        });
        session.admit(approved);
        if !rejected.is_empty() {
            pending.insert(segment.id.clone(), rejected);
        }
    }
    if summary.submitted > 0 {
        summary.approval_rate = summary.approved as f64 / summary.submitted as f64;
    }
    summary.z_size = session.z.len();
    let rejected = summary.rejected;
    session.iterations.push(summary);
    Ok(rejected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{RetryPolicy, ScriptEntry, ScriptMatch, ScriptedBackend};
    use crate::kg::GraphKind;
    use std::collections::BTreeSet;

    const PLAN: &str =
        r#"{"subqueries":["properties"],"candidate_relations":["is"],"seed_entities":["Hydrogen sulfide"]}"#;
    const ENTS: &str = r#"{"entities":["Hydrogen sulfide","colorless gas","rotten eggs"]}"#;
    const RELS: &str = r#"{"triples":[{"head":"Hydrogen sulfide","relation":"is","tail":"colorless gas"},
        {"head":"Hydrogen sulfide","relation":"smells like","tail":"rotten eggs"}]}"#;

    fn entry(role: AgentRole, iteration: Option<u32>, response: &str) -> ScriptEntry {
        ScriptEntry {
            when: ScriptMatch {
                agent_role: role,
                iteration,
            },
            response: response.into(),
        }
    }

    fn base(extra: Vec<ScriptEntry>) -> ScriptedBackend {
        let mut v = vec![
            entry(AgentRole::KgMaster, None, PLAN),
            entry(AgentRole::EntityExtractor, None, ENTS),
            entry(AgentRole::RelationExtractor, None, RELS),
        ];
        v.extend(extra);
        ScriptedBackend::new(v)
    }

    fn segments() -> Vec<Segment> {
        vec![Segment {
            id: "doc#0".into(),
            source_doc: "doc".into(),
            sentences: vec![
                "Hydrogen sulfide is a colorless gas.".into(),
                "It smells like rotten eggs.".into(),
            ],
            token_count: 14,
            flags: BTreeSet::new(),
        }]
    }

    fn gkg() -> KnowledgeGraph {
        KnowledgeGraph::from_triples(
            GraphKind::Global,
            [Triple::new("Hydrogen sulfide", "is", "toxic").unwrap()],
        )
        .unwrap()
    }

    fn run(b: &ScriptedBackend, max_iterations: u32) -> ExtractionSession {
        let mut rt = AgentRuntime::new(b);
        rt.retry = RetryPolicy::none();
        let cfg = SessionConfig {
            max_iterations,
            hop_limit: 2,
        };
        run_session(&rt, "hydrogen sulfide properties", &segments(), &gkg(), &cfg).unwrap()
    }

    #[test]
    fn approve_all_converges_at_step_one() {
        let b = base(vec![entry(AgentRole::Verifier, None, "all valid")]);
        let s = run(&b, 5);
        assert_eq!(s.status, SessionStatus::Converged);
        assert_eq!(s.step, 1);
        assert_eq!(s.z.len(), 2);
        assert!(s.z.iter().all(|t| t.provenance.agent_role == "verifier"));
        assert_eq!(s.resubmissions(), 0);
    }

    #[test]
    fn reject_then_approve_resubmits_once() {
        let b = base(vec![
            entry(
                AgentRole::Verifier,
                Some(1),
                "reject #2: odor is not a relation to rotten eggs",
            ),
            entry(AgentRole::Verifier, None, "all valid"),
        ]);
        let s = run(&b, 5);
        assert_eq!(s.status, SessionStatus::Converged);
        assert_eq!(s.step, 2);
        assert_eq!(s.resubmissions(), 1);
        assert_eq!(s.z.len(), 2);
        let v2: Vec<_> = s
            .trace
            .iter()
            .filter(|e| e.agent_role == AgentRole::Verifier && e.iteration == 2)
            .collect();
        assert_eq!(v2.len(), 1);
        assert_eq!(v2[0].verdicts.len(), 1);
        assert_eq!(v2[0].resubmitted.len(), 1);

        let calls = b.calls();
        let second_extract = calls
            .iter()
            .find(|(c, _)| c.agent_role == AgentRole::RelationExtractor && c.iteration == 2)
            .unwrap();
        assert!(second_extract.1.messages[1].content.contains("odor is not a relation"));
    }

    #[test]
    fn always_reject_exhausts() {
        let b = base(vec![entry(AgentRole::Verifier, None, "reject #1: no\nreject #2: no")]);
        let s = run(&b, 3);
        assert_eq!(s.status, SessionStatus::Exhausted);
        assert_eq!(s.step, 3);
        assert!(s.z.is_empty());
        assert_eq!(s.pending.len(), 2);
        for e in s.trace.iter().filter(|e| e.agent_role == AgentRole::Verifier) {
            assert_eq!(e.verdicts.len(), 2);
        }
    }

    #[test]
    fn transport_failure_aborts_with_trace() {
        struct Down;
        impl crate::agents::ChatBackend for Down {
            fn complete(&self, _: &crate::agents::CallContext, _: &crate::agents::ChatRequest) -> Result<String> {
                Err(Error::Transport("connection refused".into()))
            }
        }
        let mut rt = AgentRuntime::new(&Down);
        rt.retry = RetryPolicy {
            max_retries: 2,
            base_delay_ms: 0,
        };
        let abort = run_session(&rt, "q", &segments(), &gkg(), &SessionConfig::default()).unwrap_err();
        assert_eq!(abort.session.status, SessionStatus::Aborted);
        assert!(matches!(abort.error, Error::SessionAborted { iteration: 1, .. }));
    }

    #[test]
    fn zero_iterations_rejected() {
        let b = base(vec![]);
        let rt = AgentRuntime::new(&b);
        let cfg = SessionConfig {
            max_iterations: 0,
            hop_limit: 2,
        };
        assert!(run_session(&rt, "q", &segments(), &gkg(), &cfg).is_err());
    }
}
