//! Lenient parsing of agent replies.
//!
//! Replies are expected to carry JSON, possibly inside a fenced block or
//! surrounded by prose. Entity lists and verdicts also have plain-text
//! forms.

use std::sync::LazyLock;

use regex::Regex;
use serde_json::Value;

use super::Decision;

/// Finds the first JSON value in `text`: a fenced block, the whole text, or
/// the outermost bracketed span.
pub fn extract_json(text: &str) -> Option<Value> {
    static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```(?:json|JSON)?\s*\n?(.*?)```").unwrap());
    for cap in FENCE.captures_iter(text) {
        if let Ok(v) = serde_json::from_str(cap[1].trim()) {
            return Some(v);
        }
    }
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    for (open, close) in [('{', '}'), ('[', ']')] {
        if let (Some(a), Some(b)) = (trimmed.find(open), trimmed.rfind(close)) {
            if a < b {
                if let Ok(v) = serde_json::from_str(&trimmed[a..=b]) {
                    return Some(v);
                }
            }
        }
    }
    None
}

fn string_list(v: &Value) -> Option<Vec<String>> {
    v.as_array().map(|items| {
        items
            .iter()
            .filter_map(|x| match x {
                Value::String(s) => Some(s.clone()),
                Value::Object(o) => o
                    .get("name")
                    .or_else(|| o.get("entity"))
                    .and_then(Value::as_str)
                    .map(str::to_string),
                _ => None,
            })
            .collect()
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlanReply {
    pub subqueries: Vec<String>,
    pub candidate_relations: Vec<String>,
    pub seed_entities: Vec<String>,
}

pub fn parse_plan(text: &str) -> Option<PlanReply> {
    let v = extract_json(text)?;
    let obj = v.as_object()?;
    let field = |k: &str| obj.get(k).and_then(string_list).unwrap_or_default();
    Some(PlanReply {
        subqueries: field("subqueries"),
        candidate_relations: field("candidate_relations"),
        seed_entities: field("seed_entities"),
    })
}

/// JSON `{"entities": [...]}` or `[...]`; otherwise a list separated by
/// semicolons or newlines, with bullets stripped.
pub fn parse_entities(text: &str) -> Vec<String> {
    if let Some(v) = extract_json(text) {
        let list = match &v {
            Value::Object(o) => o.get("entities").and_then(string_list),
            Value::Array(_) => string_list(&v),
            _ => None,
        };
        if let Some(list) = list {
            return list;
        }
    }
    static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]|\d+[.)])\s*").unwrap());
    text.split([';', '\n'])
        .map(|s| BULLET.replace(s, "").trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

fn raw_triple(v: &Value) -> Option<RawTriple> {
    match v {
        Value::Object(o) => {
            let get = |keys: &[&str]| {
                keys.iter()
                    .find_map(|k| o.get(*k).and_then(Value::as_str))
                    .map(str::to_string)
            };
            Some(RawTriple {
                head: get(&["head", "subject", "Subject"])?,
                relation: get(&["relation", "predicate", "Predicate"])?,
                tail: get(&["tail", "object", "Object"])?,
            })
        }
        Value::Array(a) if a.len() == 3 => Some(RawTriple {
            head: a[0].as_str()?.to_string(),
            relation: a[1].as_str()?.to_string(),
            tail: a[2].as_str()?.to_string(),
        }),
        _ => None,
    }
}

/// JSON triples, or `Subject: …; Predicate: …; Object: …` lines. A blank
/// reply means no triples; anything else unparseable is `None`.
pub fn parse_triples(text: &str) -> Option<Vec<RawTriple>> {
    if text.trim().is_empty() {
        return Some(Vec::new());
    }
    if let Some(v) = extract_json(text) {
        let items = match &v {
            Value::Object(o) => o.get("triples").and_then(Value::as_array),
            Value::Array(a) => Some(a),
            _ => None,
        };
        if let Some(items) = items {
            return Some(items.iter().filter_map(raw_triple).collect());
        }
    }
    static SPO: LazyLock<Regex> = LazyLock::new(|| {
        Regex::new(r"(?i)subject\W*:\s*(.+?)\s*;\s*predicate\W*:\s*(.+?)\s*;\s*object\W*:\s*(.+?)\s*$").unwrap()
    });
    let found: Vec<RawTriple> = text
        .lines()
        .filter_map(|line| SPO.captures(line.trim()))
        .map(|c| RawTriple {
            head: c[1].trim_matches('"').to_string(),
            relation: c[2].trim_matches('"').to_string(),
            tail: c[3].trim_matches('"').to_string(),
        })
        .collect();
    (!found.is_empty()).then_some(found)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawVerdict {
    pub decision: Decision,
    pub reason: String,
    pub confidence: Option<f64>,
}

fn decision_word(w: &str) -> Option<Decision> {
    match w.to_ascii_lowercase().as_str() {
        "approve" | "approved" | "accept" | "accepted" | "valid" | "correct" | "ok" => Some(Decision::Approved),
        "reject" | "rejected" | "invalid" | "incorrect" | "wrong" => Some(Decision::Rejected),
        _ => None,
    }
}

/// Exactly `n` verdicts, by 1-based index. Unlisted triples are approved.
/// Accepts JSON verdict lists, "all valid", or lines like
/// `reject #2: tail not in context`.
pub fn parse_verdicts(text: &str, n: usize) -> Option<Vec<RawVerdict>> {
    let approved = RawVerdict {
        decision: Decision::Approved,
        reason: String::new(),
        confidence: None,
    };
    let mut out = vec![approved; n];
    let mut set = |idx: usize, v: RawVerdict| {
        if (1..=n).contains(&idx) {
            out[idx - 1] = v;
        } else {
            tracing::warn!("verifier referenced triple #{idx} of {n}; ignored");
        }
    };

    if let Some(v) = extract_json(text) {
        let items = match &v {
            Value::Object(o) => o.get("verdicts").and_then(Value::as_array),
            Value::Array(a) => Some(a),
            _ => None,
        };
        if let Some(items) = items {
            for (pos, item) in items.iter().enumerate() {
                let idx = item
                    .get("index")
                    .and_then(Value::as_u64)
                    .map_or(pos + 1, |i| i as usize);
                let decision = item
                    .get("decision")
                    .and_then(Value::as_str)
                    .and_then(decision_word)
                    .or_else(|| {
                        item.get("valid").and_then(Value::as_bool).map(|b| {
                            if b {
                                Decision::Approved
                            } else {
                                Decision::Rejected
                            }
                        })
                    })?;
                set(
                    idx,
                    RawVerdict {
                        decision,
                        reason: item.get("reason").and_then(Value::as_str).unwrap_or("").to_string(),
                        confidence: item.get("confidence").and_then(Value::as_f64),
                    },
                );
            }
            return Some(out);
        }
        if v.get("all_valid").and_then(Value::as_bool) == Some(true) {
            return Some(out);
        }
    }

    static ALL: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"(?i)\ball\s+(?:triples\s+(?:are\s+)?)?(?:valid|approved|correct)\b").unwrap());
    static LINE: LazyLock<Regex> = LazyLock::new(|| {
        Regex::new(
            r"(?i)\b(approved?|accept(?:ed)?|valid|reject(?:ed)?|invalid)\s*(?:triple\s*)?#?\s*(\d+)\s*[:\-–]?\s*(.*)$",
        )
        .unwrap()
    });
    let mut recognized = ALL.is_match(text);
    for line in text.lines() {
        if let Some(c) = LINE.captures(line.trim()) {
            let Some(decision) = decision_word(&c[1]) else { continue };
            let idx: usize = c[2].parse().ok()?;
            set(
                idx,
                RawVerdict {
                    decision,
                    reason: c[3].trim().to_string(),
                    confidence: None,
                },
            );
            recognized = true;
        }
    }
    recognized.then_some(out)
}
