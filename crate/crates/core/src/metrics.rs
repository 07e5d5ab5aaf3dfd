//! BLEU-4 and ROUGE-1/2/L, both on a 0–100 scale.
//!
//! BLEU is corpus-level (clipped n-gram counts summed over samples, one
//! reference per candidate). ROUGE is reported per sample and averaged.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::fsutil;

pub const TOKENIZER_NAME: &str = "nfc+lowercase+whitespace";
pub const SMOOTHING_NAME: &str = "add-one on zero-match orders";
pub const ROUGE_AGGREGATION: &str = "mean of per-sample scores";

/// NFC-normalize, lowercase, split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    normalized.split_whitespace().map(str::to_string).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_overlap(cand: &[String], refr: &[String], n: usize) -> usize {
    let rc = ngram_counts(refr, n);
    ngram_counts(cand, n)
        .into_iter()
        .map(|(g, c)| c.min(rc.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Sufficient statistics for BLEU over one sample or a whole corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; 4],
    pub totals: [usize; 4],
    pub cand_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn of(cand: &[String], refr: &[String]) -> Self {
        let mut s = BleuStats {
            cand_len: cand.len(),
            ref_len: refr.len(),
            ..Default::default()
        };
        for n in 1..=4 {
            s.matches[n - 1] = clipped_overlap(cand, refr, n);
            s.totals[n - 1] = cand.len().saturating_sub(n - 1);
        }
        s
    }

    fn add(&mut self, other: &BleuStats) {
        for i in 0..4 {
            self.matches[i] += other.matches[i];
            self.totals[i] += other.totals[i];
        }
        self.cand_len += other.cand_len;
        self.ref_len += other.ref_len;
    }

    /// BLEU-4 on a 0–100 scale.
    pub fn score(&self) -> f64 {
        let log_p: f64 = (0..4)
            .map(|i| {
                let (m, t) = (self.matches[i], self.totals[i]);
                let p = if m == 0 {
                    1.0 / (t as f64 + 1.0)
                } else {
                    m as f64 / t as f64
                };
                p.ln()
            })
            .sum::<f64>()
            / 4.0;
        let bp = if self.cand_len == 0 {
            if self.ref_len == 0 {
                1.0
            } else {
                0.0
            }
        } else if self.cand_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        } else {
            1.0
        };
        (100.0 * bp * log_p.exp()).clamp(0.0, 100.0)
    }
}

pub fn bleu4(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Precondition("BLEU needs at least one candidate".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Shape(format!(
            "{} candidates vs {} references",
            candidates.len(),
            references.len()
        )));
    }
    let mut total = BleuStats::default();
    for (c, r) in candidates.iter().zip(references) {
        total.add(&BleuStats::of(c, r));
    }
    Ok(total.score())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RougeVariant {
    R1,
    R2,
    RL,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(matched: usize, ref_units: usize, cand_units: usize) -> Self {
        let recall = if ref_units == 0 {
            0.0
        } else {
            matched as f64 / ref_units as f64
        };
        let precision = if cand_units == 0 {
            0.0
        } else {
            matched as f64 / cand_units as f64
        };
        let f1 = if recall + precision == 0.0 {
            0.0
        } else {
            2.0 * recall * precision / (recall + precision)
        };
        Self {
            recall: 100.0 * recall,
            precision: 100.0 * precision,
            f1: 100.0 * f1,
        }
    }

    fn perfect() -> Self {
        Self {
            recall: 100.0,
            precision: 100.0,
            f1: 100.0,
        }
    }
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge(candidate: &[String], reference: &[String], variant: RougeVariant) -> Result<RougeScore> {
    if reference.is_empty() {
        return Err(Error::Precondition("ROUGE needs a non-empty reference".into()));
    }
    if candidate.is_empty() {
        return Ok(RougeScore::default());
    }
    let (matched, ref_units, cand_units) = match variant {
        RougeVariant::R1 => (
            clipped_overlap(candidate, reference, 1),
            reference.len(),
            candidate.len(),
        ),
        RougeVariant::R2 => (
            clipped_overlap(candidate, reference, 2),
            reference.len().saturating_sub(1),
            candidate.len().saturating_sub(1),
        ),
        RougeVariant::RL => (lcs_len(candidate, reference), reference.len(), candidate.len()),
    };
    // single-token texts have no bigrams; score them on exact agreement
    if ref_units == 0 && cand_units == 0 {
        return Ok(if candidate == reference {
            RougeScore::perfect()
        } else {
            RougeScore::default()
        });
    }
    Ok(RougeScore::from_counts(matched, ref_units, cand_units))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub bleu4: f64,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub tokenizer: String,
    pub bleu_smoothing: String,
    pub rouge_aggregation: String,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            tokenizer: TOKENIZER_NAME.into(),
            bleu_smoothing: SMOOTHING_NAME.into(),
            rouge_aggregation: ROUGE_AGGREGATION.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub config: ScoreConfig,
    pub bleu4: f64,
    pub rouge1_f: f64,
    pub rouge2_f: f64,
    #[serde(rename = "rougeL_f")]
    pub rouge_l_f: f64,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore,
    pub per_sample: Vec<SampleScore>,
}

fn mean_score(xs: &[RougeScore]) -> RougeScore {
    let n = xs.len() as f64;
    RougeScore {
        recall: xs.iter().map(|s| s.recall).sum::<f64>() / n,
        precision: xs.iter().map(|s| s.precision).sum::<f64>() / n,
        f1: xs.iter().map(|s| s.f1).sum::<f64>() / n,
    }
}

/// Scores `(id, candidate text, reference text)` triples.
pub fn score_corpus(items: &[(String, String, String)]) -> Result<ScoreReport> {
    if items.is_empty() {
        return Err(Error::Precondition("nothing to score".into()));
    }
    let mut cands = Vec::with_capacity(items.len());
    let mut refs = Vec::with_capacity(items.len());
    let mut per_sample = Vec::with_capacity(items.len());
    for (id, cand, refr) in items {
        let c = tokenize(cand);
        let r = tokenize(refr);
        per_sample.push(SampleScore {
            id: id.clone(),
            bleu4: BleuStats::of(&c, &r).score(),
            rouge1: rouge(&c, &r, RougeVariant::R1)?,
            rouge2: rouge(&c, &r, RougeVariant::R2)?,
            rouge_l: rouge(&c, &r, RougeVariant::RL)?,
        });
        cands.push(c);
        refs.push(r);
    }
    let r1: Vec<_> = per_sample.iter().map(|s| s.rouge1).collect();
    let r2: Vec<_> = per_sample.iter().map(|s| s.rouge2).collect();
    let rl: Vec<_> = per_sample.iter().map(|s| s.rouge_l).collect();
    let (rouge1, rouge2, rouge_l) = (mean_score(&r1), mean_score(&r2), mean_score(&rl));
    Ok(ScoreReport {
        config: ScoreConfig::default(),
        bleu4: bleu4(&cands, &refs)?,
        rouge1_f: rouge1.f1,
        rouge2_f: rouge2.f1,
        rouge_l_f: rouge_l.f1,
        rouge1,
        rouge2,
        rouge_l,
        per_sample,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
}

/// Pairs predictions with references by id, in reference order.
pub fn evaluate_files(pred: &Path, refs: &Path) -> Result<ScoreReport> {
    let preds: Vec<TextRecord> = fsutil::read_jsonl(pred)?;
    let refs: Vec<TextRecord> = fsutil::read_jsonl(refs)?;
    let by_id: BTreeMap<&str, &str> = preds.iter().map(|r| (r.id.as_str(), r.text.as_str())).collect();
    let items = refs
        .iter()
        .map(|r| {
            by_id
                .get(r.id.as_str())
                .map(|p| (r.id.clone(), p.to_string(), r.text.clone()))
                .ok_or_else(|| Error::Precondition(format!("no prediction for id {:?}", r.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    score_corpus(&items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn bleu_identity() {
        let c = vec![toks("the pump must be vented before start")];
        assert!((bleu4(&c, &c).unwrap() - 100.0).abs() < 1e-9);
        let short = vec![toks("ok")];
        assert!((bleu4(&short, &short).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn bleu_brevity_penalty_case() {
        let s = bleu4(&[toks("a b c d")], &[toks("a b c d e")]).unwrap();
        let expect = 100.0 * (-0.25f64).exp();
        assert!((s - expect).abs() < 1e-9);
        assert!((s - 77.880).abs() < 1e-3);
    }

    #[test]
    fn bleu_smoothing_keeps_score_positive() {
        let s = bleu4(&[toks("a b x c d")], &[toks("a b y c d")]).unwrap();
        assert!(s > 0.0 && s < 100.0);
    }

    #[test]
    fn bleu_rejects_empty_and_mismatch() {
        assert!(bleu4(&[], &[]).is_err());
        assert!(bleu4(&[toks("a")], &[]).is_err());
    }

    #[test]
    fn rouge_identity_all_variants() {
        for text in ["a", "a b", "the valve is closed"] {
            let t = toks(text);
            for v in [RougeVariant::R1, RougeVariant::R2, RougeVariant::RL] {
                assert!((rouge(&t, &t, v).unwrap().f1 - 100.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rouge_l_hand_case() {
        let s = rouge(&toks("a b c"), &toks("a c b"), RougeVariant::RL).unwrap();
        assert!((s.f1 - 200.0 / 3.0).abs() < 1e-9);
        assert!((s.recall - s.precision).abs() < 1e-12);
    }

    #[test]
    fn rouge_disjoint_and_empty() {
        assert_eq!(rouge(&toks("x y"), &toks("a b"), RougeVariant::R1).unwrap().f1, 0.0);
        assert_eq!(
            rouge(&[], &toks("a b"), RougeVariant::RL).unwrap(),
            RougeScore::default()
        );
        assert!(rouge(&toks("a"), &[], RougeVariant::R1).is_err());
    }

    #[test]
    fn tokenizer_normalizes() {
        // "é" composed vs decomposed
        assert_eq!(tokenize("Caf\u{e9}  X"), tokenize("cafe\u{301} x"));
    }

    #[test]
    fn corpus_report_aggregates() {
        let items = vec![
            ("1".to_string(), "a b c".to_string(), "a c b".to_string()),
            ("2".to_string(), "x y z w".to_string(), "x y z w".to_string()),
        ];
        let r = score_corpus(&items).unwrap();
        assert!((r.rouge_l_f - (200.0 / 3.0 + 100.0) / 2.0).abs() < 1e-9);
        assert_eq!(r.per_sample.len(), 2);
        assert_eq!(r.config.tokenizer, TOKENIZER_NAME);
    }
}
