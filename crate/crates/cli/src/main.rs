mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tcrag::engine::{reasoning_loop, replay, ActionGenerator, ScriptedGenerator, SessionTrace, WireGenerator};
use tcrag::harness::{
    attack_rows, default_sigma_grid, noise_aware_factory, render_attack_table, render_sweep_table, run_ablation,
    run_attack_grid, run_attack_suite, sweep_sigma, synthetic_suite, AttackKind, AttackSpec, GeneratorFactory,
    MetricsReport, NoiseAwareGenerator, NoiseKind, QaCase, Suite, SuiteRun, SweepRow, Variant,
};
use tcrag::monitor::{Metric, MonitorConfig};
use tcrag::retrieval::{ChunkIndex, Corpus, ToolRegistry};
use tcrag::turing::{
    check_lemma1, check_lemma2, construct_sama, construct_tc, enumerate_inputs, fixtures, random_inputs,
    random_machine, MachineSpec, Symbol, TcMachine, TuringMachine,
};

use config::Config;

#[derive(Parser)]
#[command(name = "tcrag", version, about = "Stack-memory RAG agent and its evaluation harness")]
struct Cli {
    /// TOML or JSON config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that the stack construction simulates Turing machines.
    TmCheck(TmCheckArgs),
    /// Answer one query with the reasoning loop.
    AgentRun(AgentRunArgs),
    /// Corpus utilities.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Run the suite under noise poisoning attacks.
    Attack(AttackArgs),
    /// Run the suite with parts of the system disabled.
    Ablate(AblateArgs),
    /// Run the suite over a grid of thresholds.
    Sweep(SweepArgs),
    /// Re-run a stored trace and compare it byte for byte.
    Replay(ReplayArgs),
    /// Write the synthetic suite as JSON.
    Suite(SuiteArgs),
}

#[derive(Args)]
struct TmCheckArgs {
    /// Machine description (JSON). Without it, the built-in machines are used.
    #[arg(long)]
    machine: Option<PathBuf>,
    /// Built-in machine name (all-ones, palindrome, unary-increment, paren-matcher, looper).
    #[arg(long, conflicts_with = "machine")]
    fixture: Option<String>,
    /// One input word per line, one symbol per character.
    #[arg(long)]
    inputs: Option<PathBuf>,
    /// Without --inputs, check every word up to this length.
    #[arg(long, default_value_t = 6)]
    max_len: usize,
    #[arg(long, default_value_t = 10_000)]
    budget: u64,
    /// Use the two-valued construction instead of graded state values.
    #[arg(long)]
    sama: bool,
    #[arg(long, default_value_t = 10.0)]
    sigma: f64,
    /// Check this many random machines instead.
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inputs per random machine.
    #[arg(long, default_value_t = 20)]
    random_inputs: usize,
    /// Write reports here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct EngineFlags {
    #[arg(long)]
    metric: Option<Metric>,
    /// Defaults to the metric's operating threshold.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    max_loop: Option<usize>,
    /// Tool registry JSON file.
    #[arg(long)]
    tools: Option<PathBuf>,
}

#[derive(Args)]
struct AgentRunArgs {
    #[arg(long)]
    query: String,
    /// `scripted:FILE`, `wire:URL` or `noise-aware`.
    #[arg(long)]
    generator: String,
    #[command(flatten)]
    engine: EngineFlags,
    /// Corpus directory or JSONL file. Defaults to the synthetic corpus.
    #[arg(long, conflicts_with = "index")]
    corpus: Option<PathBuf>,
    /// Index written by `corpus build`.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Timeout for wire generators, in seconds.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Chunk a corpus and write the index as JSON.
    Build {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct SuiteFlags {
    /// Suite JSON written by `tcrag suite`.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    size: Option<usize>,
    /// `noise-aware` or `wire:URL`.
    #[arg(long, default_value = "noise-aware")]
    generator: String,
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    #[command(flatten)]
    engine: EngineFlags,
    /// Reports as JSON lines; without it they go to stdout and the table to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-case traces.
    #[arg(long)]
    traces: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    /// Omit both --attack and --noise to run all six combinations.
    #[arg(long, requires = "noise")]
    attack: Option<AttackKind>,
    #[arg(long, requires = "attack")]
    noise: Option<NoiseKind>,
    #[command(flatten)]
    suite: SuiteFlags,
}

#[derive(Args)]
struct AblateArgs {
    /// Omit to run every variant.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, requires = "noise")]
    attack: Option<AttackKind>,
    #[arg(long, requires = "attack")]
    noise: Option<NoiseKind>,
    #[command(flatten)]
    suite: SuiteFlags,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated thresholds; defaults to the metric's grid.
    #[arg(long, value_delimiter = ',')]
    sigmas: Vec<f64>,
    #[arg(long, requires = "noise")]
    attack: Option<AttackKind>,
    #[arg(long, requires = "attack")]
    noise: Option<NoiseKind>,
    #[command(flatten)]
    suite: SuiteFlags,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Playbook the trace was produced with.
    #[arg(long)]
    playbook: PathBuf,
    #[command(flatten)]
    engine: EngineFlags,
    #[arg(long, conflicts_with = "index")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = Config::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::TmCheck(a) => tm_check(a),
        Command::AgentRun(a) => agent_run(a, &mut cfg),
        Command::Corpus(CorpusCommand::Build { input, out }) => {
            let corpus = Corpus::load(&input)?;
            let index = ChunkIndex::build(&corpus)?;
            fs::write(&out, serde_json::to_string(&index)?).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("{} documents, {} chunks -> {}", corpus.documents().len(), index.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Attack(a) => attack(a, &mut cfg),
        Command::Ablate(a) => ablate(a, &mut cfg),
        Command::Sweep(a) => sweep(a, &mut cfg),
        Command::Replay(a) => replay_cmd(a, &mut cfg),
        Command::Suite(a) => {
            let suite = synthetic_suite(a.seed.unwrap_or(cfg.suite.seed), a.size.unwrap_or(cfg.suite.size));
            fs::write(&a.out, serde_json::to_string_pretty(&suite)?)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_machine(path: &Path) -> Result<TuringMachine> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec: MachineSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(TuringMachine::from_spec(&spec)?)
}

fn build_tc(tm: &TuringMachine, a: &TmCheckArgs) -> Result<TcMachine> {
    Ok(if a.sama { construct_sama(tm) } else { construct_tc(tm, a.sigma)? })
}

fn tm_check(a: TmCheckArgs) -> Result<ExitCode> {
    let mut jobs: Vec<(TuringMachine, Vec<Vec<Symbol>>)> = Vec::new();
    if let Some(n) = a.random {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        for i in 0..n {
            let tm = random_machine(&mut rng, 5, 3).with_name(format!("random-{}-{i}", a.seed));
            let inputs = random_inputs(&mut rng, &tm, a.random_inputs, a.max_len);
            jobs.push((tm, inputs));
        }
    } else {
        let machines = match (&a.machine, &a.fixture) {
            (Some(p), _) => vec![load_machine(p)?],
            (None, Some(name)) => vec![fixtures::all()
                .into_iter()
                .find(|m| m.name() == name)
                .ok_or_else(|| anyhow!("no built-in machine named {name:?}"))?],
            (None, None) => fixtures::all(),
        };
        for tm in machines {
            let inputs = match &a.inputs {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    text.lines().map(|w| tm.parse_input(w.trim())).collect::<Result<_, _>>()?
                }
                None => enumerate_inputs(&tm, a.max_len),
            };
            jobs.push((tm, inputs));
        }
    }

    let mut out = output(a.out.as_deref())?;
    let (mut pairs, mut failures, mut disagreements) = (0usize, 0usize, 0usize);
    for (tm, inputs) in &jobs {
        let tc = build_tc(tm, &a)?;
        for input in inputs {
            let report = check_lemma1(&tc, input, a.budget)?;
            pairs += 1;
            failures += report.failures.len();
            writeln!(out, "{}", serde_json::to_string(&report)?)?;
        }
        let summary = check_lemma2(&tc, inputs, a.budget)?;
        disagreements += summary.mismatches.len();
        for m in &summary.mismatches {
            eprintln!("{}: halting mismatch on {:?}: native {}, stack {}", tm.name(), m.input, m.native, m.tc);
        }
    }
    out.flush()?;
    eprintln!(
        "{} machines, {pairs} pairs, {failures} commutation failures, {disagreements} halting disagreements",
        jobs.len()
    );
    Ok(if failures == 0 && disagreements == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            Box::new(io::BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn apply_engine_flags(cfg: &mut Config, f: &EngineFlags) -> Result<()> {
    if let Some(p) = &f.tools {
        cfg.load_tools(p)?;
    }
    if f.metric.is_some() || f.sigma.is_some() {
        let metric = f.metric.unwrap_or(cfg.engine.monitor.metric);
        let sigma = match (f.sigma, f.metric) {
            (Some(s), _) => s,
            (None, Some(m)) => m.default_sigma(),
            (None, None) => cfg.engine.monitor.sigma,
        };
        cfg.engine.monitor = MonitorConfig::new(metric, sigma)?;
    }
    if let Some(n) = f.max_loop {
        cfg.engine.max_loop = n;
    }
    cfg.engine.validate()?;
    Ok(())
}

fn load_index(corpus: Option<&Path>, index: Option<&Path>, cfg: &Config) -> Result<ChunkIndex> {
    Ok(match (corpus, index) {
        (_, Some(p)) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        (Some(p), None) => ChunkIndex::build(&Corpus::load(p)?)?,
        (None, None) => ChunkIndex::build(&load_suite(cfg)?.corpus())?,
    })
}

fn registry(cfg: &Config, index: ChunkIndex) -> Result<ToolRegistry> {
    Ok(ToolRegistry::from_config(&cfg.tools, Arc::new(index), cfg.base_dir.as_deref())?)
}

fn make_generator(spec: &str, timeout: u64) -> Result<Box<dyn ActionGenerator>> {
    if spec == "noise-aware" {
        return Ok(Box::new(NoiseAwareGenerator));
    }
    match spec.split_once(':') {
        Some(("scripted", path)) => Ok(Box::new(ScriptedGenerator::load(Path::new(path))?)),
        Some(("wire", url)) => Ok(Box::new(WireGenerator::new(url, Duration::from_secs(timeout))?)),
        _ => bail!("unknown generator {spec:?}; use scripted:FILE, wire:URL or noise-aware"),
    }
}

fn agent_run(a: AgentRunArgs, cfg: &mut Config) -> Result<ExitCode> {
    apply_engine_flags(cfg, &a.engine)?;
    let mut tools = registry(cfg, load_index(a.corpus.as_deref(), a.index.as_deref(), cfg)?)?;
    let mut generator = make_generator(&a.generator, a.timeout)?;
    let session = reasoning_loop(&a.query, generator.as_mut(), &mut tools, &cfg.engine)?;
    if let Some(p) = &a.trace {
        fs::write(p, session.trace.to_jsonl()).with_context(|| format!("writing {}", p.display()))?;
    }
    let outcome = &session.trace.outcome;
    eprintln!("{:?} after {} actions", outcome.status, outcome.actions_taken);
    if let Some(e) = &outcome.error {
        eprintln!("generator error: {e}");
    }
    println!("{}", session.conclusion);
    Ok(ExitCode::SUCCESS)
}

fn replay_cmd(a: ReplayArgs, cfg: &mut Config) -> Result<ExitCode> {
    apply_engine_flags(cfg, &a.engine)?;
    let text = fs::read_to_string(&a.trace).with_context(|| format!("reading {}", a.trace.display()))?;
    let trace = SessionTrace::from_jsonl(&text)?;
    let generator = ScriptedGenerator::load(&a.playbook)?;
    let mut tools = registry(cfg, load_index(a.corpus.as_deref(), a.index.as_deref(), cfg)?)?;
    let same = replay(&trace, &generator, &mut tools, &cfg.engine)?;
    println!("{same}");
    Ok(if same { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn load_suite(cfg: &Config) -> Result<Suite> {
    match &cfg.suite.path {
        Some(p) => {
            let p = match &cfg.base_dir {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.clone(),
            };
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => Ok(synthetic_suite(cfg.suite.seed, cfg.suite.size)),
    }
}

struct Prepared {
    suite: Suite,
    tools: ToolRegistry,
    factory: Box<GeneratorFactory<'static>>,
}

fn prepare(f: &SuiteFlags, cfg: &mut Config) -> Result<Prepared> {
    apply_engine_flags(cfg, &f.engine)?;
    if let Some(p) = &f.suite {
        cfg.suite.path = Some(std::env::current_dir()?.join(p));
    }
    if let Some(s) = f.seed {
        cfg.suite.seed = s;
    }
    if let Some(n) = f.size {
        cfg.suite.size = n;
    }
    let suite = load_suite(cfg)?;
    let tools = registry(cfg, ChunkIndex::build(&suite.corpus())?)?;
    let factory: Box<GeneratorFactory<'static>> = if f.generator == "noise-aware" {
        Box::new(noise_aware_factory())
    } else if let Some(url) = f.generator.strip_prefix("wire:") {
        let (url, timeout) = (url.to_string(), Duration::from_secs(f.timeout));
        Box::new(move |_: &QaCase| -> Box<dyn ActionGenerator> {
            match WireGenerator::new(url.clone(), timeout) {
                Ok(g) => Box::new(g),
                Err(e) => panic!("cannot build wire generator: {e}"),
            }
        })
    } else {
        bail!("suite runs need the noise-aware or a wire generator, got {:?}", f.generator);
    };
    Ok(Prepared { suite, tools, factory })
}

fn attack_spec(attack: Option<AttackKind>, noise: Option<NoiseKind>) -> Option<AttackSpec> {
    Some(AttackSpec { attack: attack?, noise: noise? })
}

fn write_traces(dir: &Path, runs: &[SuiteRun]) -> Result<()> {
    for run in runs {
        let sub = dir.join(run.report.label.replace('/', "-"));
        fs::create_dir_all(&sub).with_context(|| format!("creating {}", sub.display()))?;
        for (case, trace) in &run.traces {
            fs::write(sub.join(format!("{case}.jsonl")), trace.to_jsonl())?;
        }
    }
    Ok(())
}

/// JSON lines go to `--out` (table on stdout) or to stdout (table on stderr).
fn emit(f: &SuiteFlags, runs: &[SuiteRun], table: &str) -> Result<()> {
    let mut lines = String::new();
    for run in runs {
        lines.push_str(&serde_json::to_string(&run.report)?);
        lines.push('\n');
    }
    if let Some(dir) = &f.traces {
        write_traces(dir, runs)?;
    }
    match &f.out {
        Some(p) => {
            fs::write(p, lines).with_context(|| format!("writing {}", p.display()))?;
            print!("{table}");
        }
        None => {
            print!("{lines}");
            eprint!("{table}");
        }
    }
    Ok(())
}

fn summary_table(reports: &[&MetricsReport]) -> String {
    reports.iter().map(|r| format!("{r}\n")).collect()
}

fn attack(a: AttackArgs, cfg: &mut Config) -> Result<ExitCode> {
    let p = prepare(&a.suite, cfg)?;
    let runs = match attack_spec(a.attack, a.noise) {
        Some(spec) => vec![run_attack_suite(&p.suite, &p.tools, spec, &cfg.engine, p.factory.as_ref())?],
        None => run_attack_grid(&p.suite, &p.tools, &cfg.engine, p.factory.as_ref())?,
    };
    let reports: Vec<&MetricsReport> = runs.iter().map(|r| &r.report).collect();
    let table = render_attack_table(&attack_rows(&reports));
    emit(&a.suite, &runs, &table)?;
    Ok(ExitCode::SUCCESS)
}

fn ablate(a: AblateArgs, cfg: &mut Config) -> Result<ExitCode> {
    let p = prepare(&a.suite, cfg)?;
    let variants = match a.variant {
        Some(v) => vec![v],
        None => Variant::ALL.to_vec(),
    };
    let attack = attack_spec(a.attack, a.noise);
    let runs = variants
        .into_iter()
        .map(|v| run_ablation(&p.suite, &p.tools, v, attack, &cfg.engine, p.factory.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let reports: Vec<&MetricsReport> = runs.iter().map(|r| &r.report).collect();
    emit(&a.suite, &runs, &summary_table(&reports))?;
    Ok(ExitCode::SUCCESS)
}

fn sweep(a: SweepArgs, cfg: &mut Config) -> Result<ExitCode> {
    let p = prepare(&a.suite, cfg)?;
    let metric = cfg.engine.monitor.metric;
    let sigmas = if a.sigmas.is_empty() { default_sigma_grid(metric).to_vec() } else { a.sigmas };
    let runs = sweep_sigma(
        &p.suite,
        &p.tools,
        metric,
        &sigmas,
        attack_spec(a.attack, a.noise),
        &cfg.engine,
        p.factory.as_ref(),
    )?;
    let rows: Vec<SweepRow> = runs.iter().map(|r| SweepRow::from(&r.report)).collect();
    emit(&a.suite, &runs, &render_sweep_table(metric, &rows))?;
    Ok(ExitCode::SUCCESS)
}
