//! Instruction samples built from verified triples, plus dataset I/O,
//! stratified splits, theme statistics and the CSV audit sheet.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::kg::{fold, KnowledgeGraph, Triple, TripleKey};
use crate::segmenter::Segment;

pub const RTE_INSTRUCTION: &str =
    "Extract the knowledge triple (subject, predicate, object) stated in the following industrial text.";
pub const KGC_INSTRUCTION: &str =
    "Using the context, complete the knowledge triple by predicting the missing object entity.";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Theme {
    Transportation,
    Health,
    General,
    Environment,
    Equipment,
    Production,
    Electricity,
    #[serde(alias = "Disaster Prevention")]
    DisasterPrevention,
    #[default]
    Unlabeled,
}

impl Theme {
    pub const ALL: [Theme; 9] = [
        Theme::Transportation,
        Theme::Health,
        Theme::General,
        Theme::Environment,
        Theme::Equipment,
        Theme::Production,
        Theme::Electricity,
        Theme::DisasterPrevention,
        Theme::Unlabeled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Theme::Transportation => "Transportation",
            Theme::Health => "Health",
            Theme::General => "General",
            Theme::Environment => "Environment",
            Theme::Equipment => "Equipment",
            Theme::Production => "Production",
            Theme::Electricity => "Electricity",
            Theme::DisasterPrevention => "DisasterPrevention",
            Theme::Unlabeled => "Unlabeled",
        }
    }
}

impl fmt::Display for Theme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Theme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let squashed: String = s.chars().filter(|c| !c.is_whitespace() && *c != '_').collect();
        Theme::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(&squashed))
            .ok_or_else(|| Error::Config(format!("unknown theme {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    Rte,
    Kgc,
    #[default]
    Qa,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Rte => "RTE",
            Mode::Kgc => "KGC",
            Mode::Qa => "QA",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFlag {
    /// Head and tail of the source triple coincide.
    Degenerate,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub instruction: String,
    #[serde(default)]
    pub input: String,
    pub output: String,
    #[serde(default)]
    pub theme: Theme,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub provenance_triples: Vec<TripleKey>,
    #[serde(default = "one")]
    pub lkg_weight: f64,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub flags: BTreeSet<SampleFlag>,
    /// Keys this schema does not know, kept verbatim.
    #[serde(flatten)]
    pub extras: BTreeMap<String, Value>,
}

impl InstructionSample {
    pub fn new(instruction: impl Into<String>, input: impl Into<String>, output: impl Into<String>) -> Self {
        Self {
            instruction: instruction.into(),
            input: input.into(),
            output: output.into(),
            theme: Theme::Unlabeled,
            mode: Mode::Qa,
            provenance_triples: Vec::new(),
            lkg_weight: 1.0,
            flags: BTreeSet::new(),
            extras: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.instruction.trim().is_empty() {
            return Err(Error::Contract("sample has an empty instruction".into()));
        }
        if self.output.trim().is_empty() {
            return Err(Error::Contract("sample has an empty output".into()));
        }
        if !(self.lkg_weight > 0.0 && self.lkg_weight <= 1.0) {
            return Err(Error::Contract(format!(
                "lkg_weight {} outside (0, 1]",
                self.lkg_weight
            )));
        }
        if self.mode == Mode::Rte && self.provenance_triples.is_empty() {
            return Err(Error::Contract("RTE sample without provenance triples".into()));
        }
        Ok(())
    }
}

pub fn render_rte_output(t: &Triple) -> String {
    format!("Subject: {}; Predicate: {}; Object: {}", t.head, t.relation, t.tail)
}

fn lkg_weight(t: &Triple) -> f64 {
    if t.confidence > 0.0 {
        t.confidence.min(1.0)
    } else {
        1.0
    }
}

/// Segments that back a triple: the one it was extracted from, then any
/// other whose text mentions both head and tail.
fn supporting_segments<'a>(t: &Triple, segments: &'a [Segment]) -> Vec<&'a Segment> {
    let head = fold(&t.head);
    let tail = fold(&t.tail);
    let mut out: Vec<&Segment> = segments.iter().filter(|s| s.id == t.provenance.segment_id).collect();
    for s in segments {
        if s.id == t.provenance.segment_id {
            continue;
        }
        let text = fold(&s.text());
        if text.contains(&head) && text.contains(&tail) {
            out.push(s);
        }
    }
    out
}

/// One relation-extraction sample per (triple, supporting segment).
pub fn gen_rte_samples(lhkg: &KnowledgeGraph, segments: &[Segment]) -> Vec<InstructionSample> {
    let mut out = Vec::new();
    for t in lhkg.triples() {
        let support = supporting_segments(t, segments);
        if support.is_empty() {
            tracing::warn!("no supporting segment for {t}; skipped");
            continue;
        }
        for seg in support {
            let mut s = InstructionSample::new(RTE_INSTRUCTION, seg.text(), render_rte_output(t));
            s.mode = Mode::Rte;
            s.provenance_triples = vec![t.key()];
            s.lkg_weight = lkg_weight(t);
            s.extras.insert("segment_id".into(), Value::String(seg.id.clone()));
            out.push(s);
        }
    }
    out
}

/// One completion sample per triple with the tail held out.
pub fn gen_kgc_samples(lhkg: &KnowledgeGraph, segments: &[Segment]) -> Vec<InstructionSample> {
    let mut out = Vec::new();
    for t in lhkg.triples() {
        let support = supporting_segments(t, segments);
        let Some(seg) = support.first() else {
            tracing::warn!("no supporting segment for {t}; skipped");
            continue;
        };
        let input = format!(
            "Context: {}\nEntity: {}\nRelation: {}\nMissing: object",
            seg.text(),
            t.head,
            t.relation
        );
        let mut s = InstructionSample::new(KGC_INSTRUCTION, input, t.tail.clone());
        s.mode = Mode::Kgc;
        s.provenance_triples = vec![t.key()];
        s.lkg_weight = lkg_weight(t);
        s.extras.insert("segment_id".into(), Value::String(seg.id.clone()));
        if fold(&t.head) == fold(&t.tail) {
            s.flags.insert(SampleFlag::Degenerate);
        }
        out.push(s);
    }
    out
}

pub fn export_jsonl(samples: &[InstructionSample], path: &Path) -> Result<()> {
    fsutil::write_jsonl(path, samples)
}

pub fn import_jsonl(path: &Path) -> Result<Vec<InstructionSample>> {
    fsutil::read_jsonl(path)
}

/// Split ratios; they must be positive and sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub test: f64,
    pub val: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, test: f64, val: f64, seed: u64) -> Result<Self> {
        let s = Self { train, test, val, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let r = [self.train, self.test, self.val];
        if r.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::Precondition("split ratios must be positive".into()));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    fn ratios(&self) -> [f64; 3] {
        [self.train, self.test, self.val]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<InstructionSample>,
    pub test: Vec<InstructionSample>,
    pub val: Vec<InstructionSample>,
}

impl DatasetSplit {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.test.len(), self.val.len()]
    }
}

const ROUND_EPS: f64 = 1e-9;

/// Bucket sizes from cumulative ratio boundaries.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let c1 = ((n as f64 * ratios[0] + ROUND_EPS).floor() as usize).min(n);
    let c2 = ((n as f64 * (ratios[0] + ratios[1]) + ROUND_EPS).floor() as usize).clamp(c1, n);
    [c1, c2 - c1, n - c2]
}

/// Per-theme bucket counts, each the floor or ceiling of the theme's exact
/// share, with bucket totals equal to `targets`. Found as a max flow from
/// themes (their leftover units) to buckets (their leftover capacity).
fn allocate(theme_sizes: &[usize], ratios: [f64; 3], targets: [usize; 3]) -> Vec<[usize; 3]> {
    let k = theme_sizes.len();
    let mut alloc: Vec<[usize; 3]> = Vec::with_capacity(k);
    let mut frac = Vec::with_capacity(k);
    for &n in theme_sizes {
        let exact = ratios.map(|r| n as f64 * r);
        let floor = exact.map(|x| (x + ROUND_EPS).floor() as usize);
        alloc.push(floor);
        frac.push(exact.map(|x| x - (x + ROUND_EPS).floor() > ROUND_EPS));
    }

    // nodes: 0 source, 1..=k themes, k+1..=k+3 buckets, k+4 sink
    let sink = k + 4;
    let mut cap = vec![vec![0i64; k + 5]; k + 5];
    let mut need = 0i64;
    for t in 0..k {
        let left = theme_sizes[t] as i64 - alloc[t].iter().sum::<usize>() as i64;
        cap[0][t + 1] = left;
        need += left;
        for b in 0..3 {
            if frac[t][b] {
                cap[t + 1][k + 1 + b] = 1;
            }
        }
    }
    for b in 0..3 {
        let used: usize = alloc.iter().map(|a| a[b]).sum();
        cap[k + 1 + b][sink] = (targets[b] as i64 - used as i64).max(0);
    }
    let flow = max_flow(&mut cap, 0, sink);
    if flow == need {
        for t in 0..k {
            for b in 0..3 {
                // residual on the reverse edge equals the flow pushed
                if frac[t][b] && cap[t + 1][k + 1 + b] == 0 {
                    alloc[t][b] += 1;
                }
            }
        }
    } else {
        tracing::warn!("exact stratified rounding infeasible; using largest remainders per theme");
        for (t, &n) in theme_sizes.iter().enumerate() {
            let exact = ratios.map(|r| n as f64 * r);
            let mut left = n - alloc[t].iter().sum::<usize>();
            let mut order = [0, 1, 2];
            order.sort_by(|&a, &b| {
                let fa = exact[a] - exact[a].floor();
                let fb = exact[b] - exact[b].floor();
                fb.total_cmp(&fa)
            });
            for b in order {
                if left == 0 {
                    break;
                }
                alloc[t][b] += 1;
                left -= 1;
            }
        }
    }
    alloc
}

/// Edmonds-Karp; leaves the residual capacities in `cap`.
fn max_flow(cap: &mut [Vec<i64>], s: usize, t: usize) -> i64 {
    let n = cap.len();
    let mut total = 0;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if prev[v] == usize::MAX && cap[u][v] > 0 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[t] == usize::MAX {
            return total;
        }
        let mut push = i64::MAX;
        let mut v = t;
        while v != s {
            push = push.min(cap[prev[v]][v]);
            v = prev[v];
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            cap[u][v] -= push;
            cap[v][u] += push;
            v = u;
        }
        total += push;
    }
}

/// Theme-stratified split. Each theme is shuffled with its own seeded
/// stream and cut by its allocated counts.
pub fn split_dataset(samples: &[InstructionSample], spec: &SplitSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    if samples.len() < 3 {
        return Err(Error::Precondition(format!(
            "need at least 3 samples to split, got {}",
            samples.len()
        )));
    }
    let mut by_theme: BTreeMap<Theme, Vec<&InstructionSample>> = BTreeMap::new();
    for s in samples {
        by_theme.entry(s.theme).or_default().push(s);
    }
    let sizes: Vec<usize> = by_theme.values().map(Vec::len).collect();
    let targets = split_sizes(samples.len(), spec.ratios());
    let alloc = allocate(&sizes, spec.ratios(), targets);

    let mut out = DatasetSplit::default();
    for ((theme, mut group), counts) in by_theme.into_iter().zip(alloc) {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(theme as u64);
        group.shuffle(&mut rng);
        let mut it = group.into_iter().cloned();
        out.train.extend(it.by_ref().take(counts[0]));
        out.test.extend(it.by_ref().take(counts[1]));
        out.val.extend(it);
    }
    Ok(out)
}

pub fn theme_counts(samples: &[InstructionSample]) -> BTreeMap<Theme, usize> {
    let mut counts = BTreeMap::new();
    for s in samples {
        *counts.entry(s.theme).or_insert(0) += 1;
    }
    counts
}

/// Share of each theme present, in percent.
pub fn theme_stats(samples: &[InstructionSample]) -> BTreeMap<Theme, f64> {
    let n = samples.len() as f64;
    theme_counts(samples)
        .into_iter()
        .map(|(t, c)| (t, 100.0 * c as f64 / n))
        .collect()
}

pub const AUDIT_HEADER: [&str; 7] = [
    "instruction",
    "input",
    "output",
    "theme",
    "mode",
    "lkg_weight",
    "provenance",
];

/// Spreadsheet-friendly audit sheet; provenance keys are joined with " | ".
pub fn export_audit_csv(samples: &[InstructionSample], path: &Path) -> Result<()> {
    fsutil::write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(AUDIT_HEADER)?;
        for s in samples {
            let provenance = s
                .provenance_triples
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(" | ");
            csv.write_record([
                s.instruction.as_str(),
                s.input.as_str(),
                s.output.as_str(),
                s.theme.as_str(),
                &s.mode.to_string(),
                &s.lkg_weight.to_string(),
                &provenance,
            ])?;
        }
        csv.flush()?;
        Ok(())
    })
}

/// Fine-tuning settings recorded alongside an exported dataset. Nothing in
/// this crate runs the training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecipe {
    pub method: String,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub learning_rate: f64,
    pub batch_size: u32,
    pub epochs: u32,
    pub teacher_temperature: f64,
    pub teacher_top_p: f64,
    pub tasks: Vec<Mode>,
    pub sample_weight_field: String,
}

impl Default for TrainingRecipe {
    fn default() -> Self {
        Self {
            method: "lora".into(),
            lora_rank: 16,
            lora_alpha: 64,
            learning_rate: 2e-5,
            batch_size: 64,
            epochs: 5,
            teacher_temperature: 0.8,
            teacher_top_p: 0.85,
            tasks: vec![Mode::Rte, Mode::Kgc],
            sample_weight_field: "lkg_weight".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{GraphKind, Provenance};

    fn seg(id: &str, text: &str) -> Segment {
        Segment {
            id: id.into(),
            source_doc: "d".into(),
            sentences: vec![text.into()],
            token_count: text.split_whitespace().count(),
            flags: BTreeSet::new(),
        }
    }

    fn verified(h: &str, r: &str, t: &str, segment: &str, conf: f64) -> Triple {
        Triple::new(h, r, t)
            .unwrap()
            .with_confidence(conf)
            .unwrap()
            .with_provenance(Provenance::new(segment, "verifier", 1))
    }

    #[test]
    fn rte_output_format() {
        let kg = KnowledgeGraph::from_triples(
            GraphKind::Local,
            [verified("Hydrogen sulfide", "is", "colorless gas", "d#0", 0.9)],
        )
        .unwrap();
        let segs = [seg("d#0", "Hydrogen sulfide is a colorless gas")];
        let s = gen_rte_samples(&kg, &segs);
        assert_eq!(s.len(), 1);
        assert_eq!(
            s[0].output,
            "Subject: Hydrogen sulfide; Predicate: is; Object: colorless gas"
        );
        assert_eq!(s[0].input, "Hydrogen sulfide is a colorless gas");
        assert_eq!(s[0].lkg_weight, 0.9);
        s[0].validate().unwrap();
        assert!(gen_rte_samples(&KnowledgeGraph::local(), &segs).is_empty());
    }

    #[test]
    fn rte_polyethylene_lists_density() {
        let text = "Polyethylene typically has a density between 0.91-0.96 g/cm3 and is chemically stable.";
        let kg = KnowledgeGraph::from_triples(
            GraphKind::Local,
            [verified("Polyethylene", "density range", "0.91-0.96 g/cm3", "p#0", 0.9)],
        )
        .unwrap();
        let s = gen_rte_samples(&kg, &[seg("p#0", text)]);
        assert!(s[0].output.contains("density range"));
        assert!(s[0].output.contains("0.91-0.96 g/cm3"));
    }

    #[test]
    fn rte_one_sample_per_supporting_segment() {
        let kg =
            KnowledgeGraph::from_triples(GraphKind::Local, [verified("pump", "drives", "valve", "a#0", 0.9)]).unwrap();
        let segs = [
            seg("a#0", "The pump drives the valve."),
            seg("b#0", "A valve is driven by a pump."),
            seg("c#0", "Unrelated."),
        ];
        assert_eq!(gen_rte_samples(&kg, &segs).len(), 2);
        let orphan = KnowledgeGraph::from_triples(GraphKind::Local, [verified("x", "r", "y", "zz", 0.9)]).unwrap();
        assert!(gen_rte_samples(&orphan, &segs).is_empty());
    }

    #[test]
    fn kgc_holds_out_tail() {
        let kg = KnowledgeGraph::from_triples(
            GraphKind::Local,
            [
                verified(
                    "insulation resistance meter",
                    "purpose",
                    "measure insulation resistance",
                    "m#0",
                    0.9,
                ),
                verified("a", "r", "b", "m#0", 0.9),
                verified("loop", "feeds", "LOOP", "m#0", 0.9),
            ],
        )
        .unwrap();
        let segs = [seg(
            "m#0",
            "The insulation resistance meter is used to measure insulation resistance.",
        )];
        let s = gen_kgc_samples(&kg, &segs);
        assert_eq!(s.len(), 3);
        let meter = s.iter().find(|x| x.output == "measure insulation resistance").unwrap();
        assert!(meter.input.contains("Entity: insulation resistance meter"));
        assert!(meter.input.contains("Relation: purpose"));
        assert_eq!(meter.output, "measure insulation resistance");
        assert!(!meter.input.contains("Missing: measure"));
        let degenerate = s.iter().find(|x| x.output == "LOOP").unwrap();
        assert!(degenerate.flags.contains(&SampleFlag::Degenerate));
    }

    #[test]
    fn bare_import_gets_defaults_and_keeps_extras() {
        let s: InstructionSample =
            serde_json::from_str(r#"{"instruction":"i","input":"","output":"o","source":"manual"}"#).unwrap();
        assert_eq!(s.theme, Theme::Unlabeled);
        assert_eq!(s.mode, Mode::Qa);
        assert_eq!(s.lkg_weight, 1.0);
        assert_eq!(s.extras["source"], "manual");
        let back: InstructionSample = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn theme_aliases() {
        let t: Theme = serde_json::from_str("\"Disaster Prevention\"").unwrap();
        assert_eq!(t, Theme::DisasterPrevention);
        assert_eq!(
            "disaster prevention".parse::<Theme>().unwrap(),
            Theme::DisasterPrevention
        );
        assert!("nope".parse::<Theme>().is_err());
    }

    #[test]
    fn import_reports_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        std::fs::write(
            &p,
            "{\"instruction\":\"a\",\"output\":\"b\"}\n{\"instruction\":\"a\",\"output\":\"b\"}\nnot json\n",
        )
        .unwrap();
        match import_jsonl(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    fn themed(n: usize, theme: Theme) -> Vec<InstructionSample> {
        (0..n)
            .map(|i| {
                let mut s = InstructionSample::new("i", format!("{theme}{i}"), "o");
                s.theme = theme;
                s
            })
            .collect()
    }

    #[test]
    fn minimal_split_one_each() {
        let third = 1.0 / 3.0;
        let spec = SplitSpec::new(third, third, 1.0 - 2.0 * third, 0).unwrap();
        assert_eq!(
            split_dataset(&themed(3, Theme::General), &spec).unwrap().sizes(),
            [1, 1, 1]
        );
        assert!(split_dataset(&themed(2, Theme::General), &spec).is_err());
    }

    #[test]
    fn split_rejects_bad_ratios() {
        assert!(SplitSpec::new(0.5, 0.5, 0.1, 0).is_err());
        assert!(SplitSpec::new(1.0, 0.0, 0.0, 0).is_err());
    }

    #[test]
    fn split_is_stratified_exhaustive_and_deterministic() {
        let mut all = themed(101, Theme::General);
        all.extend(themed(37, Theme::Health));
        all.extend(themed(12, Theme::Electricity));
        let spec = SplitSpec::new(0.6, 0.2, 0.2, 7).unwrap();
        let a = split_dataset(&all, &spec).unwrap();
        let b = split_dataset(&all, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sizes(), split_sizes(150, [0.6, 0.2, 0.2]));
        let mut inputs: Vec<_> = a
            .train
            .iter()
            .chain(&a.test)
            .chain(&a.val)
            .map(|s| s.input.clone())
            .collect();
        inputs.sort();
        inputs.dedup();
        assert_eq!(inputs.len(), 150);
        for (theme, n) in [
            (Theme::General, 101.0),
            (Theme::Health, 37.0),
            (Theme::Electricity, 12.0),
        ] {
            for (bucket, r) in [(&a.train, 0.6), (&a.test, 0.2), (&a.val, 0.2)] {
                let got = bucket.iter().filter(|s| s.theme == theme).count() as f64;
                assert!((got - n * r).abs() < 1.0, "{theme}: {got} vs {}", n * r);
            }
        }
        let c = split_dataset(&all, &SplitSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn theme_stats_sum_to_hundred() {
        assert!(theme_stats(&[]).is_empty());
        let st = theme_stats(&themed(4, Theme::General));
        assert_eq!(st[&Theme::General], 100.0);
    }

    #[test]
    fn audit_csv_quotes_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("audit.csv");
        let mut a = InstructionSample::new("Extract, please", "x \"quoted\"", "o");
        a.provenance_triples = vec![Triple::new("a", "r", "b").unwrap().key()];
        let b = InstructionSample::new("i", "line\nbreak", "o2");
        export_audit_csv(&[a.clone(), b.clone()], &p).unwrap();
        let raw = std::fs::read_to_string(&p).unwrap();
        assert!(raw.starts_with("instruction,input,output,theme,mode,lkg_weight,provenance\n"));
        assert!(raw.contains("\"Extract, please\""));
        let mut rd = csv::Reader::from_path(&p).unwrap();
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(&rows[0][1], "x \"quoted\"");
        assert_eq!(&rows[1][1], "line\nbreak");
        assert_eq!(&rows[0][6], "(a, r, b)");
    }

    #[test]
    fn recipe_records_lora_settings() {
        let v = serde_json::to_value(TrainingRecipe::default()).unwrap();
        assert_eq!(v["lora_rank"], 16);
        assert_eq!(v["lora_alpha"], 64);
        assert_eq!(v["learning_rate"], 2e-5);
        assert_eq!(v["batch_size"], 64);
        assert_eq!(v["epochs"], 5);
    }
}
