//! Embedding-driven segmentation of raw documents into coherent runs of
//! sentences.
//!
//! A sentence joins the open segment when its best cosine similarity to the
//! trailing window of that segment clears the threshold and the token cap
//! still holds. A second pass folds short segments into the neighbour they
//! are most similar to, or flags them when the cap forbids it.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hasher;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http;

pub const DEFAULT_DIMENSION: usize = 384;
pub const EMBED_URL_ENV: &str = "KGMASD_EMBED_BASE_URL";

// ---------------------------------------------------------------------------
// Tokenization and sentence splitting

pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Alphanumeric runs are one token each; every other non-space character
/// is its own token.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordPunctTokenizer;

impl Tokenizer for WordPunctTokenizer {
    fn count(&self, text: &str) -> usize {
        let mut n = 0;
        let mut in_word = false;
        for c in text.chars() {
            if c.is_alphanumeric() || c == '_' {
                if !in_word {
                    n += 1;
                    in_word = true;
                }
            } else {
                in_word = false;
                if !c.is_whitespace() {
                    n += 1;
                }
            }
        }
        n
    }
}

/// Rule-based splitter on `.`, `!`, `?` and `。`. Terminators stay attached
/// to their sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        cur.push(c);
        let terminal = match c {
            '!' | '?' | '。' => true,
            // keep decimals such as 0.91 together
            '.' => chars.peek().is_none_or(|n| n.is_whitespace()),
            _ => false,
        };
        if terminal {
            while let Some(&n) = chars.peek() {
                if matches!(n, '"' | '\'' | ')' | '”' | '’') {
                    cur.push(n);
                    chars.next();
                } else {
                    break;
                }
            }
            push_sentence(&mut out, &mut cur);
        }
    }
    push_sentence(&mut out, &mut cur);
    out
}

fn push_sentence(out: &mut Vec<String>, cur: &mut String) {
    let s = crate::kg::normalize_ws(cur);
    if !s.is_empty() {
        out.push(s);
    }
    cur.clear();
}

// ---------------------------------------------------------------------------
// Embedding providers

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProviderConfig {
    /// Base URL, or `offline` for the built-in hashing embedder.
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

fn default_endpoint() -> String {
    "offline".into()
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

fn default_timeout_secs() -> f64 {
    30.0
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: default_endpoint(),
            dimension: DEFAULT_DIMENSION,
            timeout_secs: default_timeout_secs(),
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Config("embedding timeout must be positive".into()));
        }
        Ok(())
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed_batch(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Embeds `sentences`, checking arity and dimension of the reply.
pub fn embed(provider: &dyn EmbeddingProvider, sentences: &[String]) -> Result<Vec<Vec<f64>>> {
    if sentences.is_empty() {
        return Err(Error::Precondition("cannot embed an empty sentence list".into()));
    }
    let vectors = provider.embed_batch(sentences)?;
    if vectors.len() != sentences.len() {
        return Err(Error::Contract(format!(
            "provider returned {} vectors for {} sentences",
            vectors.len(),
            sentences.len()
        )));
    }
    let dim = provider.dimension();
    if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != dim) {
        return Err(Error::Contract(format!(
            "vector {i} has dimension {}, expected {dim}",
            v.len()
        )));
    }
    Ok(vectors)
}

/// Seeded feature hashing of character trigrams and lowercase words.
/// Deterministic and network-free; similarity tracks surface overlap only.
#[derive(Debug, Clone)]
pub struct OfflineEmbedder {
    dimension: usize,
    seed: u64,
}

impl OfflineEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self { dimension, seed }
    }

    fn bucket(&self, feature: &str, salt: u8) -> (usize, f64) {
        let mut h = fnv::FnvHasher::with_key(self.seed ^ 0xcbf2_9ce4_8422_2325);
        h.write_u8(salt);
        h.write(feature.as_bytes());
        let v = h.finish();
        let idx = (v % self.dimension as u64) as usize;
        let sign = if (v >> 63) & 1 == 0 { 1.0 } else { -1.0 };
        (idx, sign)
    }

    fn embed_one(&self, sentence: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        let lower = sentence.to_lowercase();
        let padded: Vec<char> = format!("  {lower} ").chars().collect();
        for w in padded.windows(3) {
            let g: String = w.iter().collect();
            let (i, s) = self.bucket(&g, 3);
            v[i] += s;
        }
        for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let (i, s) = self.bucket(word, 1);
            v[i] += 2.0 * s;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            // every feature cancelled out; fall back to a fixed unit vector
            let (i, _) = self.bucket(&lower, 7);
            v[i] = 1.0;
        }
        v
    }
}

impl Default for OfflineEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION, 0)
    }
}

impl EmbeddingProvider for OfflineEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(sentences.iter().map(|s| self.embed_one(s)).collect())
    }
}

/// Lookup-table provider, for fixtures with hand-chosen vectors.
#[derive(Debug, Clone, Default)]
pub struct TableEmbedder {
    dimension: usize,
    table: HashMap<String, Vec<f64>>,
}

impl TableEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            table: HashMap::new(),
        }
    }

    pub fn insert(&mut self, sentence: impl Into<String>, vector: Vec<f64>) -> &mut Self {
        self.table.insert(sentence.into(), vector);
        self
    }
}

impl EmbeddingProvider for TableEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>> {
        sentences
            .iter()
            .map(|s| {
                self.table
                    .get(s)
                    .cloned()
                    .ok_or_else(|| Error::Contract(format!("no vector for sentence {s:?}")))
            })
            .collect()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    inputs: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for `POST {endpoint}/embed`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    config: EmbeddingProviderConfig,
}

impl HttpEmbedder {
    pub fn new(config: EmbeddingProviderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed_batch(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>> {
        let url = http::join_url(&self.config.endpoint, "embed");
        let resp: EmbedResponse = http::post_json(
            &url,
            &EmbedRequest { inputs: sentences },
            None,
            Duration::from_secs_f64(self.config.timeout_secs),
        )?;
        Ok(resp.vectors)
    }
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedSimilarity("zero-norm vector"));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

// ---------------------------------------------------------------------------
// Segmentation

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<String>,
}

impl Document {
    pub fn from_text(id: impl Into<String>, text: &str) -> Self {
        Self {
            id: id.into(),
            sentences: split_sentences(text),
        }
    }
}

/// On-disk document: either pre-split sentences or raw text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<String>>,
}

impl DocumentRecord {
    pub fn into_document(self) -> Document {
        match (self.sentences, self.text) {
            (Some(s), _) => Document {
                id: self.id,
                sentences: s,
            },
            (None, Some(t)) => Document::from_text(self.id, &t),
            (None, None) => Document {
                id: self.id,
                sentences: Vec::new(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentFlag {
    BelowMin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub source_doc: String,
    pub sentences: Vec<String>,
    pub token_count: usize,
    #[serde(default)]
    pub flags: BTreeSet<SegmentFlag>,
}

impl Segment {
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }

    pub fn is_below_min(&self) -> bool {
        self.flags.contains(&SegmentFlag::BelowMin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    pub threshold: f64,
    pub window: usize,
    pub min_sentences: usize,
    pub max_tokens: usize,
    /// Fold short segments into a neighbour after the greedy pass.
    pub merge_short: bool,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            window: 8,
            min_sentences: 2,
            max_tokens: 512,
            merge_short: true,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [-1, 1]", self.threshold)));
        }
        if self.window == 0 || self.max_tokens == 0 || self.min_sentences == 0 {
            return Err(Error::Config(
                "window, max_tokens and min_sentences must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

pub struct Segmenter {
    config: SegmenterConfig,
    tokenizer: Box<dyn Tokenizer>,
}

impl Segmenter {
    pub fn new(config: SegmenterConfig) -> Result<Self> {
        Self::with_tokenizer(config, Box::new(WordPunctTokenizer))
    }

    pub fn with_tokenizer(config: SegmenterConfig, tokenizer: Box<dyn Tokenizer>) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, tokenizer })
    }

    pub fn config(&self) -> &SegmenterConfig {
        &self.config
    }

    fn tokens(&self, sentences: &[String]) -> usize {
        self.tokenizer.count(&sentences.join(" "))
    }

    /// Splits sentences longer than the cap at word boundaries so every
    /// unit fits on its own.
    fn fit_units(&self, sentences: &[String]) -> Result<Vec<String>> {
        let cap = self.config.max_tokens;
        let mut units = Vec::with_capacity(sentences.len());
        for s in sentences {
            if self.tokenizer.count(s) <= cap {
                units.push(s.clone());
                continue;
            }
            let mut piece = String::new();
            for word in s.split_whitespace() {
                let candidate = if piece.is_empty() {
                    word.to_string()
                } else {
                    format!("{piece} {word}")
                };
                if self.tokenizer.count(&candidate) <= cap {
                    piece = candidate;
                } else if piece.is_empty() {
                    return Err(Error::Precondition(format!("single word exceeds {cap} tokens")));
                } else {
                    units.push(std::mem::replace(&mut piece, word.to_string()));
                    if self.tokenizer.count(&piece) > cap {
                        return Err(Error::Precondition(format!("single word exceeds {cap} tokens")));
                    }
                }
            }
            if !piece.is_empty() {
                units.push(piece);
            }
        }
        Ok(units)
    }

    pub fn segment(&self, doc: &Document, provider: &dyn EmbeddingProvider) -> Result<Vec<Segment>> {
        if doc.sentences.is_empty() {
            return Err(Error::Precondition(format!("document {:?} has no sentences", doc.id)));
        }
        let units = self.fit_units(&doc.sentences)?;
        let vectors = embed(provider, &units)?;

        // Greedy pass: runs of unit indices.
        let mut runs: Vec<Vec<usize>> = vec![vec![0]];
        for i in 1..units.len() {
            let open = runs.last_mut().expect("at least one run");
            let window = &open[open.len().saturating_sub(self.config.window)..];
            let mut best = f64::NEG_INFINITY;
            for &j in window {
                best = best.max(cosine(&vectors[i], &vectors[j])?);
            }
            let fits = {
                let mut cand: Vec<String> = open.iter().map(|&j| units[j].clone()).collect();
                cand.push(units[i].clone());
                self.tokens(&cand) <= self.config.max_tokens
            };
            if best >= self.config.threshold && fits {
                open.push(i);
            } else {
                runs.push(vec![i]);
            }
        }

        if self.config.merge_short {
            self.merge_short_runs(&mut runs, &units, &vectors)?;
        }

        Ok(runs
            .into_iter()
            .enumerate()
            .map(|(n, run)| {
                let sentences: Vec<String> = run.iter().map(|&j| units[j].clone()).collect();
                let mut flags = BTreeSet::new();
                if sentences.len() < self.config.min_sentences {
                    flags.insert(SegmentFlag::BelowMin);
                }
                Segment {
                    id: format!("{}#{n}", doc.id),
                    source_doc: doc.id.clone(),
                    token_count: self.tokens(&sentences),
                    sentences,
                    flags,
                }
            })
            .collect())
    }

    fn merge_short_runs(&self, runs: &mut Vec<Vec<usize>>, units: &[String], vectors: &[Vec<f64>]) -> Result<()> {
        let fits = |a: &[usize], b: &[usize]| {
            let joined: Vec<String> = a.iter().chain(b).map(|&j| units[j].clone()).collect();
            self.tokens(&joined) <= self.config.max_tokens
        };
        let mut i = 0;
        while i < runs.len() {
            if runs[i].len() >= self.config.min_sentences {
                i += 1;
                continue;
            }
            let first = runs[i][0];
            let last = *runs[i].last().unwrap();
            let prev = if i > 0 && fits(&runs[i - 1], &runs[i]) {
                let boundary = *runs[i - 1].last().unwrap();
                Some(cosine(&vectors[boundary], &vectors[first])?)
            } else {
                None
            };
            let next = if i + 1 < runs.len() && fits(&runs[i], &runs[i + 1]) {
                let boundary = runs[i + 1][0];
                Some(cosine(&vectors[last], &vectors[boundary])?)
            } else {
                None
            };
            match (prev, next) {
                (Some(p), n) if n.is_none_or(|n| p >= n) => {
                    let run = runs.remove(i);
                    runs[i - 1].extend(run);
                    // the grown neighbour may still be short; revisit it
                    i -= 1;
                }
                (_, Some(_)) => {
                    let run = runs.remove(i);
                    runs[i].splice(0..0, run);
                }
                _ => i += 1,
            }
        }
        Ok(())
    }
}

/// Segments with the default tokenizer.
pub fn segment(doc: &Document, provider: &dyn EmbeddingProvider, cfg: SegmenterConfig) -> Result<Vec<Segment>> {
    Segmenter::new(cfg)?.segment(doc, provider)
}
