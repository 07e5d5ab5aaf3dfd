use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kgmasd::agents::{AgentRuntime, GenerationParams, PromptSet};
use kgmasd::config::{BackendSetting, OFFLINE_ENDPOINT};
use kgmasd::datafactory::{
    export_audit_csv, export_jsonl, import_jsonl, split_dataset, theme_counts, theme_stats, SplitSpec, TrainingRecipe,
};
use kgmasd::kg::GraphKind;
use kgmasd::segmenter::{DocumentRecord, Segmenter};
use kgmasd::{fsutil, metrics, pipeline, KnowledgeGraph, PipelineConfig, Segment};
use serde::Serialize;

use crate::{
    AuditArgs, BackendFlags, DistillArgs, EmbedFlags, EmbedKind, EvalArgs, ExtractArgs, SegmentArgs, SplitArgs,
    StatsArgs,
};

pub struct Global {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Global {
    /// Defaults, then the config file, then flags.
    fn pipeline_config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn apply_embed(cfg: &mut PipelineConfig, flags: &EmbedFlags) {
    match flags.embed {
        Some(EmbedKind::Offline) => cfg.embed.endpoint = OFFLINE_ENDPOINT.into(),
        Some(EmbedKind::Http) => {
            cfg.embed.endpoint = match &flags.embed_url {
                Some(url) => url.clone(),
                None if cfg.embed.endpoint == OFFLINE_ENDPOINT => String::new(),
                None => cfg.embed.endpoint.clone(),
            }
        }
        None => {
            if let Some(url) = &flags.embed_url {
                cfg.embed.endpoint = url.clone();
            }
        }
    }
}

fn apply_backend(cfg: &mut PipelineConfig, flags: &BackendFlags) -> Result<()> {
    if let Some(spec) = &flags.backend {
        cfg.backend = match (BackendSetting::parse(spec)?, &cfg.backend) {
            (BackendSetting::Http(_), BackendSetting::Http(existing)) => BackendSetting::Http(existing.clone()),
            (b, _) => b,
        };
    }
    if let Some(url) = &flags.llm_url {
        match &mut cfg.backend {
            BackendSetting::Http(c) => c.endpoint = url.clone(),
            BackendSetting::Scripted { .. } => bail!("--llm-url only applies to the http backend"),
        }
    }
    if let Some(dir) = &flags.prompts_dir {
        cfg.paths.prompts_dir = Some(dir.clone());
    }
    Ok(())
}

pub(crate) fn reading(path: &Path) -> String {
    format!("reading {}", path.display())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn segment(global: &Global, args: SegmentArgs) -> Result<()> {
    let mut cfg = global.pipeline_config()?;
    apply_embed(&mut cfg, &args.embed);
    let s = &mut cfg.segmenter;
    s.threshold = args.threshold.unwrap_or(s.threshold);
    s.window = args.window.unwrap_or(s.window);
    s.min_sentences = args.min_sentences.unwrap_or(s.min_sentences);
    s.max_tokens = args.max_tokens.unwrap_or(s.max_tokens);
    cfg.resolve_endpoints();
    cfg.validate()?;

    let docs: Vec<_> = fsutil::read_jsonl::<DocumentRecord>(&args.input)
        .with_context(|| reading(&args.input))?
        .into_iter()
        .map(DocumentRecord::into_document)
        .collect();
    let segmenter = Segmenter::new(cfg.segmenter)?;
    let provider = cfg.embedder()?;
    let segments = pipeline::segment_documents(&docs, provider.as_ref(), &segmenter)?;
    fsutil::write_jsonl(&args.out, &segments)?;
    println!("{} documents -> {} segments", docs.len(), segments.len());
    Ok(())
}

pub fn extract(global: &Global, args: ExtractArgs) -> Result<()> {
    let mut cfg = global.pipeline_config()?;
    apply_backend(&mut cfg, &args.backend)?;
    if let Some(p) = args.gkg {
        cfg.paths.gkg = Some(p);
    }
    if let Some(n) = args.max_iterations {
        cfg.session.max_iterations = n;
    }
    if let Some(h) = args.hop_limit {
        cfg.session.hop_limit = h;
    }
    cfg.resolve_endpoints();
    cfg.validate()?;
    let out_dir = args
        .out_dir
        .or_else(|| cfg.paths.out_dir.clone())
        .context("--out-dir is required (or set paths.out_dir in the config)")?;

    let segments: Vec<Segment> = fsutil::read_jsonl(&args.segments).with_context(|| reading(&args.segments))?;
    let mut gkg = match &cfg.paths.gkg {
        Some(p) => KnowledgeGraph::read_jsonl(p, GraphKind::Global).with_context(|| reading(p))?,
        None => KnowledgeGraph::global(),
    };
    let backend = cfg.chat_backend()?;
    let mut rt = AgentRuntime::new(backend.as_ref());
    rt.params = GenerationParams::from(&cfg.chat_config());
    rt.retry = cfg.retry;
    if let Some(dir) = &cfg.paths.prompts_dir {
        rt.prompts = PromptSet::load_dir(dir)?;
    }

    let results = pipeline::extract(&rt, &segments, &gkg, &cfg.session, args.query.as_deref());
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(session) => records.push(SessionRecord { session, error: None }),
            Err(abort) => {
                failures.push(format!("{}: {}", abort.session.query, abort.error));
                records.push(SessionRecord {
                    session: *abort.session,
                    error: Some(abort.error.to_string()),
                });
            }
        }
    }
    let lhkg = pipeline::collect_verified(records.iter().map(|r| &r.session))?;

    ensure_dir(&out_dir)?;
    fsutil::write_jsonl(&out_dir.join("sessions.jsonl"), &records)?;
    lhkg.write_jsonl(&out_dir.join("triples.jsonl"))?;
    if cfg.paths.gkg.is_some() {
        let report = gkg.merge_local(&lhkg)?;
        gkg.write_jsonl(&out_dir.join("gkg_merged.jsonl"))?;
        tracing::info!(?report, "merged local graph");
    }
    for r in &records {
        println!(
            "{}: {:?} after {} iteration(s), {} verified triple(s)",
            r.session.query,
            r.session.status,
            r.session.step,
            r.session.z.len()
        );
    }
    println!(
        "{} verified triples -> {}",
        lhkg.len(),
        out_dir.join("triples.jsonl").display()
    );
    if !failures.is_empty() {
        bail!(
            "{} of {} sessions aborted; first: {}",
            failures.len(),
            records.len(),
            failures[0]
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct SessionRecord {
    #[serde(flatten)]
    session: kgmasd::agents::ExtractionSession,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn distill(args: DistillArgs) -> Result<()> {
    let lhkg = KnowledgeGraph::read_jsonl(&args.triples, GraphKind::Local).with_context(|| reading(&args.triples))?;
    let segments: Vec<Segment> = fsutil::read_jsonl(&args.segments).with_context(|| reading(&args.segments))?;
    let out = pipeline::distill(&lhkg, &segments, args.theme);
    let samples: Vec<_> = out.all().cloned().collect();
    for s in &samples {
        s.validate()?;
    }
    ensure_dir(&args.out_dir)?;
    export_jsonl(&samples, &args.out_dir.join("samples.jsonl"))?;
    fsutil::write_json(&args.out_dir.join("training_recipe.json"), &TrainingRecipe::default())?;
    println!(
        "{} RTE + {} KGC samples from {} triples",
        out.rte.len(),
        out.kgc.len(),
        lhkg.len()
    );
    Ok(())
}

pub fn split(global: &Global, args: SplitArgs) -> Result<()> {
    let cfg = global.pipeline_config()?;
    let [train, test, val] = args.ratios[..] else {
        bail!("--ratios takes exactly three values");
    };
    let spec = SplitSpec::new(train, test, val, cfg.seed)?;
    let samples = import_jsonl(&args.input).with_context(|| reading(&args.input))?;
    let split = split_dataset(&samples, &spec)?;
    ensure_dir(&args.out_dir)?;
    for (name, part) in [("train", &split.train), ("test", &split.test), ("val", &split.val)] {
        export_jsonl(part, &args.out_dir.join(format!("{name}.jsonl")))?;
    }
    let [a, b, c] = split.sizes();
    println!("train {a} / test {b} / val {c}");
    Ok(())
}

pub fn stats(args: StatsArgs) -> Result<()> {
    let samples = import_jsonl(&args.input).with_context(|| reading(&args.input))?;
    let report = serde_json::json!({
        "total": samples.len(),
        "counts": theme_counts(&samples),
        "percentages": theme_stats(&samples),
    });
    if let Some(out) = &args.out {
        fsutil::write_json(out, &report)?;
    }
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &report)?;
    writeln!(stdout)?;
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let report = metrics::evaluate_files(&args.pred, &args.reference)?;
    fsutil::write_json(&args.out, &report)?;
    println!("BLEU-4 {:.3}  ROUGE-L F1 {:.3}", report.bleu4, report.rouge_l_f);
    Ok(())
}

pub fn audit(args: AuditArgs) -> Result<()> {
    let samples = import_jsonl(&args.input).with_context(|| reading(&args.input))?;
    export_audit_csv(&samples, &args.out)?;
    println!("{} rows -> {}", samples.len(), args.out.display());
    Ok(())
}
