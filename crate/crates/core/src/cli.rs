//! The `gammae` command line: ingest, sample, train, eval, answer, ablate.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::{ablation_run, write_ablation_csv, AblationVariant, Evaluator};
use crate::kg::{load_triples, GraphSplits, Split, TripleSources};
use crate::manifest::{manifest_path, RunManifest};
use crate::model::{Model, ModelConfig, ModelError, UnionMode};
use crate::query::{parse_query, read_queries, sample_distinct, write_queries, QueryInstance, SampleOptions, Structure};
use crate::train::{train, LossVariant, TrainConfig, TrainError, TrainEvent};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// An error plus the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    fn usage(e: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_USAGE, error: e.into() }
    }

    fn data(e: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_DATA, error: e.into() }
    }
}

type CmdResult = Result<(), Failure>;

trait OrData<T> {
    fn or_data(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrData<T> for Result<T, E> {
    fn or_data(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::data(e.into().context(what())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "gammae", version, about = "Gamma embeddings for logical queries over knowledge graphs")]
pub struct Cli {
    /// Worker threads for training and evaluation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load train/valid/test triple files into a canonical graph file.
    Ingest(IngestArgs),
    /// Sample query files for every split with all three answer tiers.
    Sample(SampleArgs),
    /// Train a model and write its checkpoint.
    Train(TrainArgs),
    /// Rank held-out answers and write metric and correlation CSVs.
    Eval(EvalArgs),
    /// Print the best-scoring entities for one query.
    Answer(AnswerArgs),
    /// Evaluate the union-mode and elasticity ablation checkpoints.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory holding train.txt, valid.txt, test.txt (and optional entities.dict, relations.dict).
    pub dir: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub entities: Option<PathBuf>,
    #[arg(long)]
    pub relations: Option<PathBuf>,
    /// Add a reverse relation for every edge.
    #[arg(long)]
    pub add_inverse: bool,
    /// Canonical graph file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Output directory for train.jsonl, valid.jsonl and test.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Comma-separated structures (default: all 14; negation-free unions are never trained on).
    #[arg(long, value_delimiter = ',')]
    pub structures: Vec<Structure>,
    /// Training queries per structure.
    #[arg(long, default_value_t = 1000)]
    pub train_count: usize,
    /// Valid and test queries per structure.
    #[arg(long, default_value_t = 100)]
    pub eval_count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub answer_cap: usize,
}

/// Training settings. Every field may also come from the `--config` file
/// (same names, kebab-case); flags win over the file.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainFlags {
    /// Gamma dimensions (desk 32, paper 800).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Hidden width of the operator networks (default 2 * dim).
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub neg_samples: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub elasticity: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// mm, dnf or dm.
    #[arg(long)]
    pub union_mode: Option<UnionMode>,
    /// paper or standard.
    #[arg(long)]
    pub loss_variant: Option<LossVariant>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub gradcheck_every: Option<usize>,
    /// Serial gradient accumulation.
    #[arg(long)]
    #[serde(default)]
    pub deterministic: bool,
    /// Start from the large-scale defaults instead of the desk defaults.
    #[arg(long)]
    #[serde(default)]
    pub paper_defaults: bool,
    #[arg(skip)]
    pub threads: Option<usize>,
}

impl TrainFlags {
    /// `self` with every field set in `over` replaced.
    fn overlay(self, over: &TrainFlags) -> TrainFlags {
        macro_rules! pick {
            ($($f:ident),*) => { TrainFlags { $($f: over.$f.clone().or(self.$f),)*
                deterministic: over.deterministic || self.deterministic,
                paper_defaults: over.paper_defaults || self.paper_defaults } };
        }
        pick!(dim, hidden, lr, neg_samples, margin, elasticity, batch_size, union_mode, loss_variant, steps, seed, log_every, checkpoint_every, gradcheck_every, threads)
    }

    pub fn load(path: &Path) -> Result<TrainFlags, Failure> {
        let text = fs::read_to_string(path).or_data(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| Failure::usage(anyhow!("{}: {e}", path.display())))
    }

    /// Defaults, then this set of overrides.
    pub fn resolve(&self) -> (ModelConfig, TrainConfig) {
        let (mut m, mut t) =
            if self.paper_defaults { (ModelConfig::paper(), TrainConfig::paper()) } else { (ModelConfig::desk(), TrainConfig::desk()) };
        if let Some(dim) = self.dim {
            m = ModelConfig { elasticity: m.elasticity, ..ModelConfig::with_dim(dim, 2 * dim) };
        }
        if let Some(h) = self.hidden {
            m.hidden = h;
        }
        if let Some(e) = self.elasticity {
            m.elasticity = e;
        }
        if let Some(u) = self.union_mode {
            m.union_mode = u;
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => { $(if let Some(v) = self.$flag { t.$field = v; })* };
        }
        set!(lr => learning_rate, neg_samples => negative_samples, margin => margin, batch_size => batch_size,
             loss_variant => loss_variant, steps => steps, seed => seed, log_every => log_every);
        t.checkpoint_every = self.checkpoint_every.or(t.checkpoint_every);
        t.gradcheck_every = self.gradcheck_every.or(t.gradcheck_every);
        t.deterministic |= self.deterministic;
        (m, t)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Training queries (JSON lines).
    #[arg(long)]
    pub queries: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Loss trace CSV (default: <out>.loss.csv).
    #[arg(long)]
    pub loss_trace: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Tier {
    Valid,
    Test,
}

impl From<Tier> for Split {
    fn from(t: Tier) -> Split {
        match t {
            Tier::Valid => Split::Valid,
            Tier::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, value_enum, default_value_t = Tier::Test)]
    pub tier: Tier,
    /// Directory for metrics.csv and correlation.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Dataset label for the metrics CSV.
    #[arg(long, default_value = "dataset")]
    pub dataset: String,
    /// Evaluate with a different union mode than the checkpoint's.
    #[arg(long)]
    pub union_mode: Option<UnionMode>,
}

#[derive(Debug, Args)]
pub struct AnswerArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// One query record as a JSON line.
    #[arg(long, conflicts_with = "query_file")]
    pub query: Option<String>,
    /// File of query records.
    #[arg(long)]
    pub query_file: Option<PathBuf>,
    /// 1-based record number in --query-file.
    #[arg(long, default_value_t = 1, requires = "query_file")]
    pub line: usize,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Graph file, used to print entity names.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Write the listing here (plus a manifest) instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, value_enum, default_value_t = Tier::Test)]
    pub tier: Tier,
    #[arg(long, default_value = "dataset")]
    pub dataset: String,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint trained with union mode mm.
    #[arg(long)]
    pub mm: Option<PathBuf>,
    #[arg(long)]
    pub dnf: Option<PathBuf>,
    #[arg(long)]
    pub dm: Option<PathBuf>,
    /// Checkpoint trained without elasticity.
    #[arg(long)]
    pub no_elasticity: Option<PathBuf>,
    /// Checkpoint trained with the default elasticity.
    #[arg(long)]
    pub elasticity: Option<PathBuf>,
}

/// Parses `args` and runs the command. Help and version requests succeed.
pub fn run<I, T>(args: I) -> Result<(), Failure>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.render().to_string();
            let text = text.trim_end().strip_prefix("error: ").unwrap_or(text.trim_end()).to_string();
            return Err(Failure::usage(anyhow!(text)));
        }
    };
    if let Some(n) = cli.threads {
        set_threads(n)?;
    }
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Answer(a) => cmd_answer(a),
        Command::Ablate(a) => cmd_ablate(a),
    }
}

/// Process entry point for the binary.
pub fn main() -> ExitCode {
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", describe(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// The error chain joined with `: `, skipping causes already quoted by the
/// message above them.
pub fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out += ": ";
            }
            out += &text;
        }
    }
    out
}

fn set_threads(n: usize) -> CmdResult {
    if n == 0 {
        return Err(Failure::usage(anyhow!("--threads must be at least 1")));
    }
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn write_manifest(m: &RunManifest, artifact: &Path) -> CmdResult {
    let path = manifest_path(artifact);
    m.save(&path).or_data(|| format!("writing {}", path.display()))
}

fn add_input(m: &mut RunManifest, path: &Path) -> CmdResult {
    m.add_input(path).or_data(|| format!("reading {}", path.display()))
}

fn load_graph(path: &Path) -> Result<GraphSplits, Failure> {
    GraphSplits::load(path).or_data(|| format!("loading graph {}", path.display()))
}

fn load_model(path: &Path) -> Result<Model, Failure> {
    Model::load(path).or_data(|| format!("loading checkpoint {}", path.display()))
}

fn load_queries(path: &Path) -> Result<Vec<QueryInstance>, Failure> {
    read_queries(path).or_data(|| format!("reading queries {}", path.display()))
}

fn check_query_ids(queries: &[QueryInstance], entities: usize, relations: usize, path: &Path) -> CmdResult {
    for (i, q) in queries.iter().enumerate() {
        let bad_entity = q.graph.anchors().into_iter().chain(q.answers_test.iter().copied()).find(|&e| e >= entities);
        let bad_relation = q.graph.relations().into_iter().find(|&r| r >= relations);
        if let Some(e) = bad_entity {
            return Err(Failure::data(anyhow!("{} record {}: entity {e} outside 0..{entities}", path.display(), i + 1)));
        }
        if let Some(r) = bad_relation {
            return Err(Failure::data(anyhow!("{} record {}: relation {r} outside 0..{relations}", path.display(), i + 1)));
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).or_data(|| format!("creating {}", path.display()))
}

fn cmd_ingest(a: IngestArgs) -> CmdResult {
    let mut sources = match &a.dir {
        Some(dir) => TripleSources::from_dir(dir),
        None => TripleSources::default(),
    };
    for (slot, given) in [(&mut sources.train, &a.train), (&mut sources.valid, &a.valid), (&mut sources.test, &a.test)] {
        if let Some(p) = given {
            *slot = p.clone();
        }
    }
    if a.entities.is_some() {
        sources.entity_vocab = a.entities.clone();
    }
    if a.relations.is_some() {
        sources.relation_vocab = a.relations.clone();
    }
    if sources.train.as_os_str().is_empty() || sources.valid.as_os_str().is_empty() || sources.test.as_os_str().is_empty() {
        return Err(Failure::usage(anyhow!("give a dataset directory or all of --train, --valid and --test")));
    }
    sources.add_inverse = a.add_inverse;

    let (splits, report) = load_triples(&sources).map_err(Failure::data)?;
    splits.save(&a.out).or_data(|| format!("writing {}", a.out.display()))?;
    let report_path = a.out.with_extension("report.txt");
    fs::write(&report_path, report.to_string()).or_data(|| format!("writing {}", report_path.display()))?;
    print!("{report}");

    let mut m = RunManifest::new("ingest").with_config(&serde_json::json!({ "add_inverse": a.add_inverse }));
    for p in [Some(&sources.train), Some(&sources.valid), Some(&sources.test), sources.entity_vocab.as_ref(), sources.relation_vocab.as_ref()]
        .into_iter()
        .flatten()
    {
        add_input(&mut m, p)?;
    }
    m.add_output(&a.out);
    m.add_output(&report_path);
    write_manifest(&m, &a.out)
}

fn cmd_sample(a: SampleArgs) -> CmdResult {
    let splits = load_graph(&a.graph)?;
    let structures: Vec<Structure> = if a.structures.is_empty() { Structure::ALL.to_vec() } else { a.structures.clone() };
    let opts = SampleOptions { answer_cap: a.answer_cap, ..SampleOptions::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    fs::create_dir_all(&a.out_dir).or_data(|| format!("creating {}", a.out_dir.display()))?;

    let mut m = RunManifest::new("sample").with_seed(a.seed).with_config(&serde_json::json!({
        "structures": structures.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        "train_count": a.train_count,
        "eval_count": a.eval_count,
        "answer_cap": a.answer_cap,
    }));
    add_input(&mut m, &a.graph)?;
    for split in Split::ALL {
        let (count, pool): (usize, Vec<Structure>) = match split {
            Split::Train => (a.train_count, structures.iter().copied().filter(|s| Structure::TRAINING.contains(s)).collect()),
            _ => (a.eval_count, structures.clone()),
        };
        let mut queries = Vec::new();
        for s in pool {
            let got = match sample_distinct(&splits, split, s, count, &mut rng, &opts) {
                Ok(q) => q,
                Err(e) => {
                    eprintln!("{split} {s}: {e}");
                    Vec::new()
                }
            };
            eprintln!("{split}\t{s}\t{}/{count}", got.len());
            queries.extend(got);
        }
        let path = a.out_dir.join(format!("{split}.jsonl"));
        write_queries(&path, &queries).or_data(|| format!("writing {}", path.display()))?;
        m.add_output(&path);
    }
    write_manifest(&m, &a.out_dir.join("sample"))
}

fn numerical_or_data(e: TrainError) -> Failure {
    match e {
        TrainError::NonFinite { .. } => Failure { code: EXIT_NUMERICAL, error: e.into() },
        TrainError::InvalidConfig(_) | TrainError::Model(ModelError::InvalidConfig(_)) => Failure::usage(e),
        other => Failure::data(other),
    }
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let file = match &a.config {
        Some(p) => TrainFlags::load(p)?,
        None => TrainFlags::default(),
    };
    let flags = file.overlay(&a.flags);
    if let Some(n) = flags.threads {
        set_threads(n)?;
    }
    let (mcfg, tcfg) = flags.resolve();
    mcfg.validate().map_err(Failure::usage)?;
    tcfg.validate().map_err(Failure::usage)?;

    let splits = load_graph(&a.graph)?;
    let queries = load_queries(&a.queries)?;
    check_query_ids(&queries, splits.entity_count(), splits.relation_count(), &a.queries)?;
    let mut model = Model::new(mcfg.clone(), splits.entity_count(), splits.relation_count(), tcfg.seed).map_err(Failure::usage)?;

    let mut m = RunManifest::new("train").with_seed(tcfg.seed).with_config(&ResolvedTrain { model: &mcfg, train: &tcfg });
    add_input(&mut m, &a.graph)?;
    add_input(&mut m, &a.queries)?;
    if let Some(p) = &a.config {
        add_input(&mut m, p)?;
    }

    let trace_path = a.loss_trace.clone().unwrap_or_else(|| a.out.with_extension("loss.csv"));
    let mut trace = create(&trace_path)?;
    writeln!(trace, "step,loss").or_data(|| trace_path.display().to_string())?;
    let mut side_error: Option<Failure> = None;
    let result = train(&mut model, &tcfg, &queries, |ev, model| {
        let r = match ev {
            TrainEvent::Logged { step, loss } => {
                eprintln!("step {step}\tloss {loss:.6}");
                writeln!(trace, "{step},{loss}").and_then(|_| trace.flush()).or_data(|| trace_path.display().to_string())
            }
            TrainEvent::GradCheck { step, max_relative_error } => {
                eprintln!("step {step}\tgradient check max relative error {max_relative_error:.3e}");
                Ok(())
            }
            TrainEvent::Checkpoint { step } => {
                let p = a.out.with_extension(format!("step{step}.json"));
                model.save(&p).or_data(|| format!("writing {}", p.display()))
            }
        };
        if let Err(e) = r {
            side_error.get_or_insert(e);
        }
    });
    let report = result.map_err(numerical_or_data)?;
    if let Some(e) = side_error {
        return Err(e);
    }
    trace.flush().or_data(|| trace_path.display().to_string())?;
    if report.skipped_queries > 0 {
        eprintln!("skipped {} queries with no usable answers or too few negatives", report.skipped_queries);
    }
    model.save(&a.out).or_data(|| format!("writing {}", a.out.display()))?;
    m.add_output(&a.out);
    m.add_output(&trace_path);
    write_manifest(&m, &a.out)
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let mut model = load_model(&a.checkpoint)?;
    if let Some(u) = a.union_mode {
        model.set_union_mode(u);
    }
    let queries = load_queries(&a.queries)?;
    check_query_ids(&queries, model.entity_count(), model.relation_count(), &a.queries)?;
    let tier: Split = a.tier.into();
    let eval = Evaluator::new(&model);
    let table = eval.evaluate(&queries, tier).map_err(Failure::data)?;
    let report = eval.uncertainty_report(&queries, tier).map_err(Failure::data)?;

    fs::create_dir_all(&a.out_dir).or_data(|| format!("creating {}", a.out_dir.display()))?;
    let metrics_path = a.out_dir.join("metrics.csv");
    let corr_path = a.out_dir.join("correlation.csv");
    let mut out = create(&metrics_path)?;
    table.write_csv(&a.dataset, &mut out).and_then(|_| out.flush()).or_data(|| metrics_path.display().to_string())?;
    let mut out = create(&corr_path)?;
    report.write_csv(&mut out).and_then(|_| out.flush()).or_data(|| corr_path.display().to_string())?;
    println!("{table}");
    eprint!("{}", report.notes());

    let mut m = RunManifest::new("eval").with_config(&serde_json::json!({
        "tier": tier.as_str(),
        "dataset": a.dataset,
        "union_mode": model.config().union_mode,
    }));
    add_input(&mut m, &a.checkpoint)?;
    add_input(&mut m, &a.queries)?;
    m.add_output(&metrics_path);
    m.add_output(&corr_path);
    write_manifest(&m, &a.out_dir.join("eval"))
}

fn cmd_answer(a: AnswerArgs) -> CmdResult {
    let model = load_model(&a.checkpoint)?;
    let query = match (&a.query, &a.query_file) {
        (Some(line), None) => parse_query(line).map_err(|e| Failure::data(anyhow!("--query: {e}")))?,
        (None, Some(path)) => {
            let mut all = load_queries(path)?;
            if a.line == 0 || a.line > all.len() {
                return Err(Failure::usage(anyhow!("--line {} outside 1..={}", a.line, all.len())));
            }
            all.swap_remove(a.line - 1)
        }
        _ => return Err(Failure::usage(anyhow!("give --query or --query-file"))),
    };
    check_query_ids(std::slice::from_ref(&query), model.entity_count(), model.relation_count(), Path::new("query"))?;
    let names = match &a.graph {
        Some(p) => load_graph(p)?.entity_names,
        None => None,
    };
    let top = Evaluator::new(&model).top_n(&query.graph, a.top).map_err(Failure::data)?;
    let mut text = String::new();
    for (i, (e, score)) in top.iter().enumerate() {
        let name = names.as_ref().and_then(|v| v.name(*e)).map(|n| format!("\t{n}")).unwrap_or_default();
        text += &format!("{}\t{e}\t{score:.6}{name}\n", i + 1);
    }
    match &a.out {
        None => print!("{text}"),
        Some(path) => {
            fs::write(path, &text).or_data(|| format!("writing {}", path.display()))?;
            let mut m = RunManifest::new("answer").with_config(&serde_json::json!({ "top": a.top, "line": a.line }));
            add_input(&mut m, &a.checkpoint)?;
            if let Some(p) = &a.query_file {
                add_input(&mut m, p)?;
            }
            m.add_output(path);
            write_manifest(&m, path)?;
        }
    }
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> CmdResult {
    let queries = load_queries(&a.queries)?;
    let mut m = RunManifest::new("ablate").with_config(&serde_json::json!({ "tier": Split::from(a.tier).as_str(), "dataset": a.dataset }));
    add_input(&mut m, &a.queries)?;
    let mut models: Vec<(AblationVariant, Option<Model>)> = Vec::new();
    for (mode, path) in [(UnionMode::Mixture, &a.mm), (UnionMode::Dnf, &a.dnf), (UnionMode::Dm, &a.dm)] {
        let model = path.as_deref().map(load_model).transpose()?.map(|mut model| {
            model.set_union_mode(mode);
            model
        });
        models.push((AblationVariant::Union(mode), model));
    }
    for (fallback, path) in [(0.0, &a.no_elasticity), (ModelConfig::desk().elasticity, &a.elasticity)] {
        let model = path.as_deref().map(load_model).transpose()?;
        let eps = model.as_ref().map_or(fallback, |m| m.config().elasticity);
        models.push((AblationVariant::Elasticity(eps), model));
    }
    for path in [&a.mm, &a.dnf, &a.dm, &a.no_elasticity, &a.elasticity].into_iter().flatten() {
        add_input(&mut m, path)?;
    }
    let refs: Vec<(AblationVariant, Option<&Model>)> = models.iter().map(|(v, m)| (*v, m.as_ref())).collect();
    let rows = ablation_run(&a.dataset, &refs, &queries, a.tier.into()).map_err(Failure::data)?;
    let mut out = create(&a.out)?;
    write_ablation_csv(&rows, &mut out).and_then(|_| out.flush()).or_data(|| a.out.display().to_string())?;
    for row in &rows {
        println!("[{} {}]\n{}\n", row.variant.group(), row.variant.label(), row.table);
    }
    m.add_output(&a.out);
    write_manifest(&m, &a.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let file: TrainFlags = toml::from_str("dim = 8\nlr = 0.1\nsteps = 7\nunion-mode = \"dnf\"\ndeterministic = true").unwrap();
        let cli = TrainFlags { lr: Some(0.2), ..Default::default() };
        let (m, t) = file.overlay(&cli).resolve();
        assert_eq!(m.dim, 8);
        assert_eq!(m.hidden, 16);
        assert_eq!(m.union_mode, UnionMode::Dnf);
        assert_eq!(t.learning_rate, 0.2);
        assert_eq!(t.steps, 7);
        assert!(t.deterministic);
        assert!(toml::from_str::<TrainFlags>("dimm = 3").is_err());
    }

    #[test]
    fn paper_defaults() {
        let (m, t) = TrainFlags { paper_defaults: true, ..Default::default() }.resolve();
        assert_eq!((m.dim, t.negative_samples, t.margin, t.batch_size), (800, 128, 30.0, 512));
        assert_eq!(m.elasticity, 0.05);
        let (m, _) = TrainFlags { paper_defaults: true, dim: Some(16), ..Default::default() }.resolve();
        assert_eq!(m.dim, 16);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["gammae", "frobnicate"]).unwrap_err().code, EXIT_USAGE);
        assert_eq!(run(["gammae", "train", "--graph", "g"]).unwrap_err().code, EXIT_USAGE);
        assert!(run(["gammae", "--help"]).is_ok());
    }
}
