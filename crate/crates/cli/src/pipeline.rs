//! The five pipeline stages and the end-to-end runner.
//!
//! Layout of the output directory:
//!
//! ```text
//! genericized/<persona>.json
//! unigraph.json            unify_stats.txt
//! samples/<synthetic>.json narratives/<synthetic>.txt
//! msc_report.json          msc_report.txt
//! evaluation.json          evaluation_plot.csv
//! manifest.json
//! ```
//!
//! The manifest records input digests rather than input paths, so two runs
//! over the same inputs write identical bytes wherever they live.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use synonymix_core::derive_seed;
use synonymix_core::embed::TokenHashEmbedder;
use synonymix_core::genericize::{genericize_graph, GenericRules};
use synonymix_core::graph::{load_persona, save_persona, NodeId, PersonaGraph};
use synonymix_core::metrics::{compare_banks, load_items, CompareOptions, DistanceReport, ItemSpec, ResponseTable};
use synonymix_core::sampler::{bank_msc, sample_bank, save_franken, AnchorChoice, FrankenGraph, MscReport, WalkParams};
use synonymix_core::unify::{dp_prune, merge_stats, save_unigraph, DpParams, EmbeddingThreshold, EquivalenceProvider, ExactCanonical, Unigraph};

use crate::codec::{Codec, MockCodec, RemoteCodec};
use crate::config::{CodecKind, EvaluateConfig, MergeMethod, PipelineConfig, SampleConfig, UnifyConfig};

pub const STAGES: [&str; 5] = ["genericize", "unify", "sample", "msc", "evaluate"];

/// Seed of one stage, derived from the global seed and the stage name.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    derive_seed(seed, stage)
}

pub fn make_codec(kind: CodecKind, config: &crate::config::CodecConfig) -> Result<Box<dyn Codec>> {
    Ok(match kind {
        CodecKind::Mock => Box::new(MockCodec),
        CodecKind::Remote => Box::new(RemoteCodec::from_env(config)?),
    })
}

/// Input persona files in name order: `*.json` graphs and `*.txt` narratives.
pub fn persona_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.retain(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "txt")));
    files.sort();
    if files.is_empty() {
        bail!("no *.json or *.txt personas in {}", dir.display());
    }
    Ok(files)
}

pub fn read_persona(path: &Path, codec: &dyn Codec) -> Result<PersonaGraph> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    if path.extension().and_then(|e| e.to_str()) == Some("txt") {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("persona");
        let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
        codec.extract(stem, &text).with_context(|| format!("cannot extract {}", path.display()))
    } else {
        load_persona(&bytes).with_context(|| format!("invalid persona graph {}", path.display()))
    }
}

pub fn load_rules(path: Option<&Path>) -> Result<GenericRules> {
    match path {
        None => Ok(GenericRules::default()),
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("cannot read {}", p.display()))?;
            Ok(GenericRules::from_json(&bytes)?)
        }
    }
}

pub fn genericize_all(graphs: &[PersonaGraph], rules: &GenericRules) -> Result<Vec<PersonaGraph>> {
    graphs
        .iter()
        .map(|g| genericize_graph(g, rules).with_context(|| format!("persona {}", g.persona_id)))
        .collect()
}

pub fn unify(graphs: &[PersonaGraph], config: &UnifyConfig, seed: u64) -> Result<Unigraph> {
    let embedding;
    let eq: &dyn EquivalenceProvider = match config.method {
        MergeMethod::Exact => &ExactCanonical,
        MergeMethod::Embedding => {
            embedding = EmbeddingThreshold::new(TokenHashEmbedder::default(), config.tau)?;
            &embedding
        }
    };
    let params = DpParams::new(config.epsilon, config.delta, config.max_contribution);
    Ok(dp_prune(graphs, eq, params, seed)?)
}

pub fn walk_params(config: &SampleConfig, seed: u64) -> (WalkParams, AnchorChoice) {
    let anchor = if config.anchor == "auto" {
        AnchorChoice::Auto
    } else {
        AnchorChoice::Fixed(NodeId::from(config.anchor.as_str()))
    };
    let params = WalkParams {
        anchor: NodeId::from(config.anchor.as_str()),
        lambda: config.lambda,
        alpha: config.alpha,
        max_steps: config.max_steps,
        node_budget: config.node_budget,
        time_jitter: config.time_jitter,
        seed,
    };
    (params, anchor)
}

pub fn sample(u: &Unigraph, config: &SampleConfig, seed: u64) -> Result<Vec<FrankenGraph>> {
    let (params, anchor) = walk_params(config, seed);
    Ok(sample_bank(u, &params, &anchor, config.count, &TokenHashEmbedder::default())?)
}

/// Reads a response table; `*.json` files use the object form, anything else CSV.
pub fn read_responses(bank_id: &str, path: &Path, items: &[ItemSpec]) -> Result<ResponseTable> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let table = if path.extension().and_then(|e| e.to_str()) == Some("json") {
        ResponseTable::from_json(bank_id, &bytes, items)?
    } else {
        ResponseTable::from_csv(bank_id, bytes.as_slice(), items)?
    };
    Ok(table)
}

pub struct EvaluationInputs<'a> {
    pub items: &'a Path,
    pub bank_d: &'a Path,
    pub bank_l: &'a Path,
    pub bank_f: &'a Path,
}

pub fn evaluate(inputs: &EvaluationInputs<'_>, config: &EvaluateConfig) -> Result<DistanceReport> {
    let bytes = fs::read(inputs.items).with_context(|| format!("cannot read {}", inputs.items.display()))?;
    let items = load_items(&bytes)?;
    let d = read_responses("D", inputs.bank_d, &items)?;
    let l = read_responses("L", inputs.bank_l, &items)?;
    let f = read_responses("F", inputs.bank_f, &items)?;
    Ok(compare_banks(&d, &l, &f, &items, CompareOptions { raw_emd: config.raw_emd })?)
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("artifact serializes");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: String,
    /// `ok`, `failed`, `skipped` or `not-run`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub inputs: Vec<InputRecord>,
    pub parameters: serde_json::Value,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn succeeded(&self) -> bool {
        self.stages.iter().all(|s| s.status == "ok" || s.status == "skipped")
    }

    pub fn completed(&self) -> usize {
        self.stages.iter().filter(|s| s.status == "ok").count()
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {message}")]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

fn digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

struct Writer<'a> {
    out: &'a Path,
    written: Vec<String>,
}

impl Writer<'_> {
    fn put(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(rel.to_string());
        Ok(())
    }
}

/// Runs every stage in order. The manifest is written even when a stage fails.
pub fn run_all(config: &PipelineConfig) -> Result<Manifest, StageError> {
    let out = &config.paths.out_dir;
    let mut parameters = serde_json::to_value(config).expect("config serializes");
    if let Some(obj) = parameters.as_object_mut() {
        obj.remove("paths");
        obj.remove("explorer");
        // JSON has no infinity; record the unpruned setting the way the config spells it.
        if config.unify.epsilon.is_infinite() {
            obj["unify"]["epsilon"] = "inf".into();
        }
    }
    let mut manifest = Manifest {
        tool: "synonymix".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        inputs: Vec::new(),
        parameters,
        stages: Vec::new(),
    };
    let result = run_stages(config, &mut manifest);
    for name in STAGES.iter().skip(manifest.stages.len()) {
        manifest.stages.push(StageRecord {
            name: name.to_string(),
            status: "not-run".into(),
            seed: None,
            artifacts: vec![],
            error: None,
        });
    }
    let write = fs::create_dir_all(out).and_then(|_| fs::write(out.join("manifest.json"), json_bytes(&manifest)));
    match (result, write) {
        (Err(e), _) => Err(e),
        (Ok(()), Err(e)) => Err(StageError { stage: "manifest".into(), message: e.to_string() }),
        (Ok(()), Ok(())) => Ok(manifest),
    }
}

fn run_stages(config: &PipelineConfig, manifest: &mut Manifest) -> Result<(), StageError> {
    let out = config.paths.out_dir.as_path();
    let stage = |name: &str, seed: Option<u64>, manifest: &mut Manifest, body: &mut dyn FnMut(&mut Writer) -> Result<()>| {
        let mut w = Writer { out, written: Vec::new() };
        let outcome = body(&mut w);
        let error = outcome.as_ref().err().map(|e| format!("{e:#}"));
        manifest.stages.push(StageRecord {
            name: name.into(),
            status: if error.is_some() { "failed" } else { "ok" }.into(),
            seed,
            artifacts: w.written,
            error: error.clone(),
        });
        match error {
            Some(message) => Err(StageError { stage: name.into(), message }),
            None => Ok(()),
        }
    };

    let mut generic: Vec<PersonaGraph> = Vec::new();
    let mut inputs = Vec::new();
    stage("genericize", None, manifest, &mut |w| {
        let codec = make_codec(config.codec.kind, &config.codec)?;
        let rules = load_rules(config.paths.rules.as_deref())?;
        if let Some(r) = &config.paths.rules {
            inputs.push(InputRecord { role: "rules".into(), name: file_name(r), sha256: digest(r)? });
        }
        let mut graphs = Vec::new();
        for path in persona_files(&config.paths.personas)? {
            inputs.push(InputRecord { role: "persona".into(), name: file_name(&path), sha256: digest(&path)? });
            graphs.push(read_persona(&path, codec.as_ref())?);
        }
        generic = genericize_all(&graphs, &rules)?;
        for g in &generic {
            w.put(&format!("genericized/{}.json", g.persona_id), &save_persona(g))?;
        }
        Ok(())
    })?;
    manifest.inputs = std::mem::take(&mut inputs);

    let unify_seed = stage_seed(config.seed, "unify");
    let mut unigraph = None;
    stage("unify", Some(unify_seed), manifest, &mut |w| {
        let u = unify(&generic, &config.unify, unify_seed)?;
        w.put("unigraph.json", &save_unigraph(&u))?;
        w.put("unify_stats.txt", format!("{}\n", merge_stats(&u)).as_bytes())?;
        unigraph = Some(u);
        Ok(())
    })?;
    let unigraph = unigraph.expect("unify succeeded");

    let sample_seed = stage_seed(config.seed, "sample");
    let mut bank = Vec::new();
    stage("sample", Some(sample_seed), manifest, &mut |w| {
        let codec = make_codec(config.codec.kind, &config.codec)?;
        bank = sample(&unigraph, &config.sample, sample_seed)?;
        for f in &bank {
            w.put(&format!("samples/{}.json", f.synthetic_id), &save_franken(f))?;
            w.put(&format!("narratives/{}.txt", f.synthetic_id), codec.reconstruct(f)?.as_bytes())?;
        }
        Ok(())
    })?;

    stage("msc", None, manifest, &mut |w| {
        let report: MscReport = bank_msc(&bank, config.msc.threshold)?;
        w.put("msc_report.json", &json_bytes(&report))?;
        w.put("msc_report.txt", report.to_string().as_bytes())?;
        Ok(())
    })?;

    if config.evaluate.skip {
        manifest.stages.push(StageRecord {
            name: "evaluate".into(),
            status: "skipped".into(),
            seed: None,
            artifacts: vec![],
            error: None,
        });
        return Ok(());
    }
    let mut eval_inputs = Vec::new();
    let result = stage("evaluate", None, manifest, &mut |w| {
        let p = &config.paths;
        let need = |o: &Option<PathBuf>, what: &str| o.clone().ok_or_else(|| anyhow!("paths.{what} is not set"));
        let (items, d, l, f) = (need(&p.items, "items")?, need(&p.bank_d, "bank_d")?, need(&p.bank_l, "bank_l")?, need(&p.bank_f, "bank_f")?);
        for (role, path) in [("items", &items), ("bank_d", &d), ("bank_l", &l), ("bank_f", &f)] {
            eval_inputs.push(InputRecord { role: role.into(), name: file_name(path), sha256: digest(path)? });
        }
        let report = evaluate(&EvaluationInputs { items: &items, bank_d: &d, bank_l: &l, bank_f: &f }, &config.evaluate)?;
        w.put("evaluation.json", &json_bytes(&report))?;
        w.put("evaluation_plot.csv", report.plot_csv().as_bytes())?;
        Ok(())
    });
    manifest.inputs.extend(eval_inputs);
    result
}
