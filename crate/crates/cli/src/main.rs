use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use synonymix_cli::config::{CodecKind, MergeMethod, PipelineConfig};
use synonymix_cli::pipeline::{self, EvaluationInputs};
use synonymix_cli::workspace::{write_fixture, FixtureKind};
use synonymix_core::fixture::FixtureSpec;
use synonymix_core::graph::save_persona;
use synonymix_core::sampler::{bank_msc, load_franken, save_franken};
use synonymix_core::unify::{load_unigraph, merge_stats, save_unigraph};

#[derive(Parser)]
#[command(name = "synonymix", version, about = "Merge persona graphs, sample synthetic personas, and evaluate them")]
struct Cli {
    /// TOML config supplying defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Exact,
    Embed,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodecArg {
    Mock,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Replace entity mentions in factual labels with generic role tokens.
    Genericize {
        /// Persona file (*.json graph or *.txt markup) or a directory of them.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, value_enum)]
        codec: Option<CodecArg>,
    },
    /// Merge a directory of persona graphs into a unigraph.
    Unify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Label equivalence.
        #[arg(long = "eq", value_enum)]
        method: Option<Method>,
        #[arg(long)]
        tau: Option<f64>,
        /// Prune with the DP set union (epsilon defaults to 1 unless given).
        #[arg(long)]
        dp: bool,
        /// Privacy budget; any finite value turns on the DP set union.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long = "max-contrib")]
        max_contribution: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample synthetic persona graphs by thematic random walk.
    Sample {
        #[arg(long)]
        unigraph: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Interpretive node id, or "auto" to draw one per persona.
        #[arg(long)]
        anchor: Option<String>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        time_jitter: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Maximum source contribution of every sampled graph in a directory.
    /// The text table goes to stdout and the JSON report to `--report`
    /// (default: msc_report.json beside the bank directory).
    Msc {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Enrichment and transformation distances plus the one-sided signed-rank test.
    Evaluate {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        bank_d: PathBuf,
        #[arg(long)]
        bank_l: PathBuf,
        #[arg(long)]
        bank_f: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Per-item scatter data as CSV.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Keep EMD in category units instead of normalizing to [0, 1].
        #[arg(long)]
        raw_emd: bool,
    },
    /// Serve the explorer HTTP API over a unigraph file.
    Serve {
        #[arg(long)]
        unigraph: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Allowed CORS origin; repeatable. Without any, every origin is allowed.
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
    },
    /// Write a synthetic persona bank and a config to run it.
    GenFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        personas: usize,
        /// Nodes per layer per persona.
        #[arg(long, default_value_t = 8)]
        nodes: usize,
        #[arg(long, default_value_t = 0.5)]
        shared: f64,
        /// Draw shared labels from a pool of this size instead of one fixed set.
        #[arg(long)]
        pool: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Four personas with 76/83/67 S/F/I nodes (8/0/12 merged) instead.
        #[arg(long)]
        four_persona: bool,
        /// Also write survey items and D/L/F response banks.
        #[arg(long)]
        survey: bool,
    },
    /// Run genericize, unify, sample, msc and evaluate in order.
    RunAll {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        personas: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        skip_evaluate: bool,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
    },
}

fn base_config(path: Option<&Path>) -> Result<PipelineConfig> {
    Ok(match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    })
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let mut config = base_config(cli.config.as_deref())?;
    match cli.command {
        Command::Genericize { input, out, rules, codec } => {
            if let Some(c) = codec {
                config.codec.kind = match c {
                    CodecArg::Mock => CodecKind::Mock,
                    CodecArg::Remote => CodecKind::Remote,
                };
            }
            let rules = pipeline::load_rules(rules.as_deref().or(config.paths.rules.as_deref()))?;
            let codec = pipeline::make_codec(config.codec.kind, &config.codec)?;
            let files = if input.is_dir() { pipeline::persona_files(&input)? } else { vec![input] };
            let graphs = files.iter().map(|f| pipeline::read_persona(f, codec.as_ref())).collect::<Result<Vec<_>>>()?;
            for g in pipeline::genericize_all(&graphs, &rules)? {
                write(&out.join(format!("{}.json", g.persona_id)), &save_persona(&g))?;
            }
            println!("genericized {} persona graphs into {}", graphs.len(), out.display());
        }
        Command::Unify { input, out, method, tau, dp, epsilon, delta, max_contribution, seed } => {
            let u = &mut config.unify;
            set(&mut u.method, method.map(|m| match m {
                Method::Exact => MergeMethod::Exact,
                Method::Embed => MergeMethod::Embedding,
            }));
            set(&mut u.tau, tau);
            set(&mut u.epsilon, epsilon);
            if dp && u.epsilon.is_infinite() {
                u.epsilon = 1.0;
            }
            set(&mut u.delta, delta);
            set(&mut u.max_contribution, max_contribution);
            set(&mut config.seed, seed);
            let codec = pipeline::make_codec(config.codec.kind, &config.codec)?;
            let graphs = pipeline::persona_files(&input)?
                .iter()
                .map(|f| pipeline::read_persona(f, codec.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            let unigraph = pipeline::unify(&graphs, &config.unify, pipeline::stage_seed(config.seed, "unify"))?;
            write(&out, &save_unigraph(&unigraph))?;
            println!("{}", merge_stats(&unigraph));
        }
        Command::Sample { unigraph, out_dir: out, anchor, count, lambda, alpha, budget, max_steps, time_jitter, seed } => {
            let s = &mut config.sample;
            set(&mut s.anchor, anchor);
            set(&mut s.count, count);
            set(&mut s.lambda, lambda);
            set(&mut s.alpha, alpha);
            set(&mut s.node_budget, budget);
            if max_steps.is_some() {
                s.max_steps = max_steps;
            }
            set(&mut s.time_jitter, time_jitter);
            set(&mut config.seed, seed);
            let bytes = fs::read(&unigraph).with_context(|| format!("cannot read {}", unigraph.display()))?;
            let u = load_unigraph(&bytes)?;
            let codec = pipeline::make_codec(config.codec.kind, &config.codec)?;
            let bank = pipeline::sample(&u, &config.sample, pipeline::stage_seed(config.seed, "sample"))?;
            for f in &bank {
                write(&out.join(format!("{}.json", f.synthetic_id)), &save_franken(f))?;
                write(&out.join(format!("{}.txt", f.synthetic_id)), codec.reconstruct(f)?.as_bytes())?;
            }
            println!("sampled {} synthetic personas into {}", bank.len(), out.display());
        }
        Command::Msc { bank, threshold, report } => {
            set(&mut config.msc.threshold, threshold);
            let mut files: Vec<PathBuf> = fs::read_dir(&bank)
                .with_context(|| format!("cannot list {}", bank.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            files.retain(|p| p.extension().is_some_and(|e| e == "json"));
            files.sort();
            let graphs = files
                .iter()
                .map(|f| {
                    let bytes = fs::read(f)?;
                    load_franken(&bytes).with_context(|| format!("invalid sample {}", f.display()))
                })
                .collect::<Result<Vec<_>>>()?;
            let r = bank_msc(&graphs, config.msc.threshold)?;
            let report = report.unwrap_or_else(|| {
                let dir = bank.canonicalize().unwrap_or(bank.clone());
                dir.parent().unwrap_or(Path::new(".")).join("msc_report.json")
            });
            write(&report, &pipeline::json_bytes(&r))?;
            print!("{r}");
        }
        Command::Evaluate { items, bank_d, bank_l, bank_f, report, plot, raw_emd } => {
            config.evaluate.raw_emd |= raw_emd;
            let inputs = EvaluationInputs { items: &items, bank_d: &bank_d, bank_l: &bank_l, bank_f: &bank_f };
            let r = pipeline::evaluate(&inputs, &config.evaluate)?;
            write(&report, &pipeline::json_bytes(&r))?;
            if let Some(path) = plot {
                write(&path, r.plot_csv().as_bytes())?;
            }
            for s in &r.summaries {
                print!(
                    "{}: {} items, enrichment {:.3}, transformation {:.3}, {:.0}% below diagonal",
                    s.kind.as_str(),
                    s.items,
                    s.mean_enrichment,
                    s.mean_transformation,
                    100.0 * s.fraction_below
                );
                match &s.test {
                    Some(t) => println!("; p = {:.4}, |r| = {:.3} ({:?})", t.p_value, t.effect_size, t.magnitude),
                    None => println!("; test undefined (no non-zero differences)"),
                }
            }
        }
        Command::Serve { unigraph, addr, cors_origins } => {
            if !cors_origins.is_empty() {
                config.explorer.cors_origins = cors_origins;
            }
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("serving {} on http://{addr}", unigraph.display());
            rt.block_on(synonymix_explorer::serve(&unigraph, addr, &config.explorer))?;
        }
        Command::GenFixture { out, personas, nodes, shared, pool, seed, four_persona, survey } => {
            let kind = if four_persona {
                FixtureKind::FourPersona
            } else {
                FixtureKind::Generated(FixtureSpec { pool_size: pool, ..FixtureSpec::new(personas, nodes, shared, seed) })
            };
            let path = write_fixture(&out, &kind, survey, seed)?;
            println!("wrote fixture; run it with: synonymix --config {} run-all", path.display());
        }
        Command::RunAll { seed, personas, out, skip_evaluate, epsilon, lambda, count } => {
            set(&mut config.seed, seed);
            set(&mut config.paths.personas, personas);
            set(&mut config.paths.out_dir, out);
            config.evaluate.skip |= skip_evaluate;
            set(&mut config.unify.epsilon, epsilon);
            set(&mut config.sample.lambda, lambda);
            set(&mut config.sample.count, count);
            let manifest = pipeline::run_all(&config)?;
            for s in &manifest.stages {
                println!("{:<11} {}", s.name, s.status);
            }
            if !manifest.succeeded() {
                bail!("pipeline did not complete");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
