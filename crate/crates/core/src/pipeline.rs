//! End-to-end wiring: documents to segments, segments to verified triples,
//! triples to instruction samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{run_session, AgentRuntime, ExtractionSession, SessionAbort, SessionConfig, SessionStatus};
use crate::datafactory::{gen_kgc_samples, gen_rte_samples, InstructionSample, Theme};
use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::segmenter::{Document, EmbeddingProvider, Segment, Segmenter};

/// Segments every document in parallel; output keeps document order.
pub fn segment_documents(
    docs: &[Document],
    provider: &dyn EmbeddingProvider,
    segmenter: &Segmenter,
) -> Result<Vec<Segment>> {
    let per_doc: Vec<Vec<Segment>> = docs
        .par_iter()
        .map(|d| {
            segmenter.segment(d, provider).map_err(|e| match e {
                Error::Precondition(m) => Error::Precondition(format!("document {}: {m}", d.id)),
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}

/// Default query for a document-level session.
pub fn document_query(doc_id: &str) -> String {
    format!("Extract the industrial knowledge stated in document {doc_id}")
}

/// One session per source document, or a single session over all
/// segments when `query` is given. Sessions run in parallel.
pub fn extract(
    rt: &AgentRuntime<'_>,
    segments: &[Segment],
    gkg: &KnowledgeGraph,
    cfg: &SessionConfig,
    query: Option<&str>,
) -> Vec<std::result::Result<ExtractionSession, SessionAbort>> {
    let groups: Vec<(String, Vec<Segment>)> = match query {
        Some(q) => vec![(q.to_string(), segments.to_vec())],
        None => {
            let mut groups: Vec<(String, Vec<Segment>)> = Vec::new();
            for s in segments {
                match groups.iter_mut().find(|(doc, _)| *doc == s.source_doc) {
                    Some((_, g)) => g.push(s.clone()),
                    None => groups.push((s.source_doc.clone(), vec![s.clone()])),
                }
            }
            groups.into_iter().map(|(doc, g)| (document_query(&doc), g)).collect()
        }
    };
    groups
        .par_iter()
        .map(|(q, segs)| run_session(rt, q, segs, gkg, cfg))
        .collect()
}

/// Verified triples of every finished session as one local graph.
pub fn collect_verified<'a>(sessions: impl IntoIterator<Item = &'a ExtractionSession>) -> Result<KnowledgeGraph> {
    let mut lhkg = KnowledgeGraph::local();
    for s in sessions {
        if matches!(
            s.status,
            SessionStatus::Converged | SessionStatus::Exhausted | SessionStatus::Aborted
        ) {
            lhkg.add_triples(s.z.iter().cloned())?;
        }
    }
    Ok(lhkg)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistillOutput {
    pub rte: Vec<InstructionSample>,
    pub kgc: Vec<InstructionSample>,
}

impl DistillOutput {
    pub fn all(&self) -> impl Iterator<Item = &InstructionSample> {
        self.rte.iter().chain(&self.kgc)
    }
}

pub fn distill(lhkg: &KnowledgeGraph, segments: &[Segment], theme: Theme) -> DistillOutput {
    let tag = |mut v: Vec<InstructionSample>| {
        for s in &mut v {
            s.theme = theme;
        }
        v
    };
    DistillOutput {
        rte: tag(gen_rte_samples(lhkg, segments)),
        kgc: tag(gen_kgc_samples(lhkg, segments)),
    }
}
