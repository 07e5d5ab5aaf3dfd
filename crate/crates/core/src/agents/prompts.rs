use std::collections::BTreeMap;
use std::path::Path;

use super::AgentRole;
use crate::error::Result;

const KG_MASTER: &str = "\
You are the KG Master of an industrial knowledge-graph team. You manage read \
access to the global knowledge graph. Decompose the user's query into focused \
sub-queries, propose the relation types worth expanding, and name the entities \
of the knowledge graph the query is about.
Reply with one JSON object and nothing else:
{\"subqueries\": [string], \"candidate_relations\": [string], \"seed_entities\": [string]}";

const ENTITY_EXTRACTOR: &str = "\
You are the Entity Extractor. Extract the important entities related to \
industry, production, equipment, materials, safety and management that are \
mentioned in the text fragment. Use the exact surface form from the text.
Reply with one JSON object and nothing else:
{\"entities\": [string]}";

const RELATION_EXTRACTOR: &str = "\
You are the Relation Extractor. Identify relationships that the text fragment \
states between the listed entities. Head and tail must be taken from the \
entity list; the relation is a short predicate.
Reply with one JSON object and nothing else:
{\"triples\": [{\"head\": string, \"relation\": string, \"tail\": string}]}";

const KR_DISTILLER: &str = "\
You are the KR Distiller. Keep the candidate triples consistent with the \
context you have seen so far: merge duplicates, normalize names and drop \
triples that restate one another.
Reply with one JSON object and nothing else:
{\"triples\": [{\"head\": string, \"relation\": string, \"tail\": string}]}";

const VERIFIER: &str = "\
You are the Verifier. Check every numbered triple against the text fragment \
for factual accuracy and consistency. Reject a triple when the fragment does \
not support it and say why.
Reply with one JSON object and nothing else:
{\"verdicts\": [{\"index\": int, \"decision\": \"approve\" | \"reject\", \"reason\": string, \"confidence\": number}]}
Indices start at 1. Triples you do not list are treated as approved.";

/// System prompts keyed by agent role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<AgentRole, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        let templates = [
            (AgentRole::KgMaster, KG_MASTER),
            (AgentRole::EntityExtractor, ENTITY_EXTRACTOR),
            (AgentRole::RelationExtractor, RELATION_EXTRACTOR),
            (AgentRole::KrDistiller, KR_DISTILLER),
            (AgentRole::Verifier, VERIFIER),
        ]
        .into_iter()
        .map(|(r, t)| (r, t.to_string()))
        .collect();
        Self { templates }
    }
}

impl PromptSet {
    /// Defaults, with `<role>.txt` files from `dir` taking precedence.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = Self::default();
        for role in AgentRole::ALL {
            let path = dir.join(format!("{}.txt", role.as_str()));
            if path.is_file() {
                set.templates.insert(role, std::fs::read_to_string(path)?);
            }
        }
        Ok(set)
    }

    pub fn get(&self, role: AgentRole) -> &str {
        &self.templates[&role]
    }

    pub fn set(&mut self, role: AgentRole, template: impl Into<String>) {
        self.templates.insert(role, template.into());
    }
}
