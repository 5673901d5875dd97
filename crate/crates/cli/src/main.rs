mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hlsgen::dataset::{self, DatasetManifest, SplitRole};
use hlsgen::descgen::{self, DescriptionJob, PointDefaults};
use hlsgen::feedback_loop::{self, LoopConfig, LoopContext, Trajectory};
use hlsgen::func_check::{self, FuncChecker, FunctionalCheck};
use hlsgen::llm::{Backend, CassetteBackend, CassetteMode, ChatClient};
use hlsgen::metrics::{self, GroupKey, ReportConfig, ReportFormat};
use hlsgen::prompt::{FeedbackKind, PromptBuilder, PromptTemplates};
use hlsgen::syntax_check::{SyntaxCheck, SyntaxChecker};
use hlsgen::Category;

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "hlsgen", version, about = "Generate, check and score LLM-written HLS C kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a dataset file; exits 1 on any malformed line or violation.
    Validate(ValidateArgs),
    /// Split a dataset into train and test files.
    Split(SplitArgs),
    /// Write a dataset in instruction-tuning JSONL form.
    ExportTrain(ExportArgs),
    /// Generate descriptions for a directory of reference sources.
    Describe(DescribeArgs),
    /// Run the generation and repair loop over a dataset.
    Generate(GenerateArgs),
    /// Syntax-check one C file; exits 1 if it has errors.
    CheckSyntax(CheckSyntaxArgs),
    /// Functionally check one candidate against a point's reference.
    CheckFunc(CheckFuncArgs),
    /// Score trajectories with pass@k.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct ValidateArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value_t = RoleArg::Test)]
    role: RoleArg,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RoleArg {
    Train,
    Test,
}

#[derive(Args, Debug)]
struct SplitArgs {
    file: PathBuf,
    /// Train:test ratio.
    #[arg(long, default_value = "4:1")]
    ratio: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(Args, Debug)]
struct ExportArgs {
    file: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct BackendArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long)]
    cassette: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum BackendKind {
    Remote,
    Replay,
    Record,
    ReplayOrRecord,
}

#[derive(Args, Debug)]
struct DescribeArgs {
    #[arg(long)]
    sources: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = CategoryArg::OtherKernel)]
    category: CategoryArg,
    /// Replacement base prompt; `{code}` marks where the source goes.
    #[arg(long)]
    base_prompt: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CategoryArg {
    MatrixLinearAlgebra,
    ScientificSimulation,
    StatisticalComputation,
    IterativeMethod,
    OtherKernel,
}

impl From<CategoryArg> for Category {
    fn from(c: CategoryArg) -> Self {
        match c {
            CategoryArg::MatrixLinearAlgebra => Category::MatrixLinearAlgebra,
            CategoryArg::ScientificSimulation => Category::ScientificSimulation,
            CategoryArg::StatisticalComputation => Category::StatisticalComputation,
            CategoryArg::IterativeMethod => Category::IterativeMethod,
            CategoryArg::OtherKernel => Category::OtherKernel,
        }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Test-spec JSON file.
    #[arg(long)]
    tests: Option<PathBuf>,
    /// Trajectory JSONL output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<u32>,
    #[arg(long, overrides_with = "no_cot")]
    cot: bool,
    #[arg(long, overrides_with = "cot")]
    no_cot: bool,
    /// Comma-separated subset of `syntax,func`, or `none`.
    #[arg(long)]
    feedback: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    /// Only these point ids (comma-separated).
    #[arg(long, value_delimiter = ',')]
    points: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args, Debug)]
struct CheckSyntaxArgs {
    file: PathBuf,
    #[arg(long)]
    compiler: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CheckFuncArgs {
    #[arg(long)]
    point: String,
    #[arg(long)]
    candidate: PathBuf,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    tests: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Trajectory files (repeat or comma-separate).
    #[arg(long, required = true, value_delimiter = ',')]
    traj: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    k: Vec<u64>,
    /// Grouping keys: complexity, category, variant, cot, iterations, feedback.
    #[arg(long, value_delimiter = ',')]
    group: Vec<String>,
    #[arg(long, default_value = "json")]
    format: String,
    /// Include per-stage time statistics.
    #[arg(long)]
    timings: bool,
    /// Score each sample at this iteration instead of its final state.
    #[arg(long)]
    at_iteration: Option<u32>,
    /// Dataset every trajectory must resolve in.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Facts about a `generate` run, stored next to its trajectories.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct RunMeta {
    seed: Option<u64>,
    backend: String,
    syntax_checker: String,
    func_checker: String,
}

fn meta_path(traj: &Path) -> PathBuf {
    traj.with_extension("meta.json")
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = dataset::parse_jsonl(&bytes).with_context(|| format!("decoding {}", path.display()))?;
    if !parsed.errors.is_empty() {
        for e in &parsed.errors {
            eprintln!("{}:{e}", path.display());
        }
        bail!("{}: {} malformed line(s)", path.display(), parsed.errors.len());
    }
    Ok(parsed.manifest)
}

fn create_output(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn parse_feedback(text: &str) -> Result<BTreeSet<FeedbackKind>> {
    let mut set = BTreeSet::new();
    for word in text.split(',').map(str::trim).filter(|w| !w.is_empty()) {
        match word.to_ascii_lowercase().as_str() {
            "syntax" => {
                set.insert(FeedbackKind::Syntax);
            }
            "func" | "functional" => {
                set.insert(FeedbackKind::Functional);
            }
            "none" => {}
            other => bail!("unknown feedback kind `{other}` (expected syntax, func or none)"),
        }
    }
    Ok(set)
}

fn parse_ratio(text: &str) -> Result<(usize, usize)> {
    let (a, b) = text.split_once(':').with_context(|| format!("ratio `{text}` must look like 4:1"))?;
    Ok((a.trim().parse().context("train part")?, b.trim().parse().context("test part")?))
}

fn build_backend(args: &BackendArgs, cfg: &RunConfig) -> Result<Arc<dyn Backend>> {
    let kind = args.backend.unwrap_or(BackendKind::Remote);
    let cassette = args.cassette.clone().or_else(|| cfg.cassette.clone());
    let remote = || -> Result<Arc<dyn Backend>> { Ok(Arc::new(ChatClient::new(cfg.backend.clone())?)) };
    let need = || cassette.clone().context("this backend needs --cassette");
    Ok(match kind {
        BackendKind::Remote => remote()?,
        BackendKind::Replay => Arc::new(CassetteBackend::open(need()?, CassetteMode::Strict)?),
        BackendKind::Record => Arc::new(CassetteBackend::open(need()?, CassetteMode::Record(remote()?))?),
        BackendKind::ReplayOrRecord => Arc::new(CassetteBackend::open(need()?, CassetteMode::Permissive(remote()?))?),
    })
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}

fn prompt_builder(cfg: &RunConfig) -> Result<PromptBuilder> {
    let templates = match &cfg.templates {
        Some(dir) => PromptTemplates::load_dir(dir).with_context(|| format!("loading templates from {}", dir.display()))?,
        None => PromptTemplates::default(),
    };
    Ok(PromptBuilder::new(templates))
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode> {
    let bytes = fs::read(&args.file).with_context(|| format!("reading {}", args.file.display()))?;
    let parsed = dataset::parse_jsonl(&bytes)?;
    for e in &parsed.errors {
        eprintln!("{}:{e}", args.file.display());
    }
    let role = match args.role {
        RoleArg::Train => SplitRole::Train,
        RoleArg::Test => SplitRole::Test,
    };
    let report = dataset::validate(&parsed.manifest, role);
    for v in &report.violations {
        eprintln!("{v}");
    }
    eprintln!(
        "{} points, {} malformed lines, {} violations, {} defaults applied",
        parsed.manifest.len(),
        parsed.errors.len(),
        report.violations.len(),
        parsed.defaults_applied.len()
    );
    Ok(if parsed.errors.is_empty() && report.is_clean() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_split(args: SplitArgs) -> Result<ExitCode> {
    let manifest = load_manifest(&args.file)?;
    let (train, test) = parse_ratio(&args.ratio)?;
    let (tr, te) = dataset::split(&manifest, train, test, args.seed)?;
    for (m, path) in [(&tr, &args.train_out), (&te, &args.test_out)] {
        let mut w = create_output(path)?;
        dataset::export_training_jsonl(m, &mut w)?;
        w.flush()?;
    }
    eprintln!("train {} / test {} (seed {})", tr.len(), te.len(), args.seed);
    Ok(ExitCode::SUCCESS)
}

fn cmd_export(args: ExportArgs) -> Result<ExitCode> {
    let manifest = load_manifest(&args.file)?;
    match &args.out {
        Some(path) => {
            let mut w = create_output(path)?;
            dataset::export_training_jsonl(&manifest, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            dataset::export_training_jsonl(&manifest, &mut w)?;
            w.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_describe(args: DescribeArgs) -> Result<ExitCode> {
    let cfg = RunConfig::load(args.backend.config.as_deref())?;
    let backend = build_backend(&args.backend, &cfg)?;
    let base_prompt = match &args.base_prompt {
        Some(p) => Some(fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let mut sources: Vec<PathBuf> = fs::read_dir(&args.sources)
        .with_context(|| format!("listing {}", args.sources.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "c"))
        .collect();
    sources.sort();
    if sources.is_empty() {
        bail!("no .c files in {}", args.sources.display());
    }
    let pool = thread_pool(args.backend.workers.or(cfg.workers))?;
    let results: Vec<Result<dataset::DesignPoint>> = pool.install(|| {
        sources
            .par_iter()
            .map(|path| {
                let source = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let mut job = DescriptionJob::new(source.clone());
                if let Some(bp) = &base_prompt {
                    job.base_prompt = bp.clone();
                }
                let description = descgen::describe(&job, backend.as_ref(), &cfg.generation)
                    .with_context(|| format!("describing {}", path.display()))?;
                let defaults = PointDefaults { category: args.category.into(), ..PointDefaults::for_file(path) };
                Ok(descgen::assemble_point(&source, &description, &defaults))
            })
            .collect()
    });
    let points = results.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest::new(points);
    let mut w = create_output(&args.out)?;
    dataset::export_training_jsonl(&manifest, &mut w)?;
    w.flush()?;
    eprintln!("described {} sources", manifest.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitCode> {
    let cfg = RunConfig::load(args.backend.config.as_deref())?;
    let dataset_path = args.dataset.clone().or_else(|| cfg.dataset.clone()).context("--dataset is required")?;
    let tests_path = args.tests.clone().or_else(|| cfg.tests.clone()).context("--tests is required")?;
    let out = args.out.clone().or_else(|| cfg.out.clone()).context("--out is required")?;
    let seed = args.seed.or(cfg.seed);

    let manifest = load_manifest(&dataset_path)?;
    let report = dataset::validate(&manifest, SplitRole::Test);
    if !report.is_clean() {
        for v in &report.violations {
            eprintln!("{v}");
        }
        bail!("{} violates dataset invariants", dataset_path.display());
    }
    let mut specs = func_check::load_test_specs(&tests_path)
        .with_context(|| format!("loading test specs {}", tests_path.display()))?;
    if let Some(s) = seed {
        for spec in specs.values_mut() {
            spec.compare.sample_seed = s;
        }
    }
    let wanted: BTreeSet<&str> = args.points.iter().map(String::as_str).collect();
    let points: Vec<_> = manifest.points.iter().filter(|p| wanted.is_empty() || wanted.contains(p.id.as_str())).collect();
    if points.is_empty() {
        bail!("no design points selected");
    }
    if let Some(p) = points.iter().find(|p| !specs.contains_key(&p.source_file)) {
        bail!("no test spec for point `{}` (source_file `{}`)", p.id, p.source_file);
    }

    let mut params = cfg.generation.clone();
    if let Some(n) = args.samples {
        params.n_samples = n;
    }
    let loop_cfg = LoopConfig {
        max_feedback_iterations: args.max_iters.unwrap_or(cfg.loop_.max_feedback_iterations),
        cot: if args.cot { true } else if args.no_cot { false } else { cfg.loop_.cot },
        n_samples: params.n_samples,
        which_feedback: match &args.feedback {
            Some(text) => parse_feedback(text)?,
            None => cfg.loop_.feedback.clone(),
        },
        params,
    };

    let syntax = SyntaxChecker::new(cfg.syntax.clone())?;
    let functional = FuncChecker::new(cfg.functional.clone())?;
    let prompts = prompt_builder(&cfg)?;
    let backend = build_backend(&args.backend, &cfg)?;
    let pool = thread_pool(args.backend.workers.or(cfg.workers))?;

    let ctx = LoopContext { backend: backend.as_ref(), prompts: &prompts, syntax: &syntax, functional: &functional };
    let results: Vec<_> = pool.install(|| {
        points
            .par_iter()
            .map(|p| feedback_loop::run(p, specs.get(&p.source_file), &loop_cfg, ctx).map_err(|e| (p.id.clone(), e)))
            .collect()
    });

    let mut w = create_output(&out)?;
    let (mut written, mut failed) = (0usize, 0usize);
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for r in results {
        match r {
            Ok(trajs) => {
                for t in trajs {
                    *tally.entry(t.final_status.to_string()).or_default() += 1;
                    serde_json::to_writer(&mut w, &t)?;
                    w.write_all(b"\n")?;
                    written += 1;
                }
            }
            Err((id, e)) => {
                eprintln!("point `{id}`: {e}");
                failed += 1;
            }
        }
    }
    w.flush()?;

    let meta = RunMeta {
        seed,
        backend: backend.id(),
        syntax_checker: syntax.version(),
        func_checker: FunctionalCheck::version(&functional),
    };
    fs::write(meta_path(&out), serde_json::to_string_pretty(&meta)? + "\n")?;

    let summary: Vec<String> = tally.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    eprintln!("wrote {written} trajectories to {} ({})", out.display(), summary.join(", "));
    if failed > 0 {
        bail!("{failed} point(s) failed");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_check_syntax(args: CheckSyntaxArgs) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(args.config.as_deref())?.syntax;
    if let Some(c) = args.compiler {
        cfg.compiler = c;
    }
    let source = fs::read_to_string(&args.file).with_context(|| format!("reading {}", args.file.display()))?;
    let checker = SyntaxChecker::new(cfg)?;
    let result = checker.check(&source)?;
    for d in &result.diagnostics {
        eprintln!("{d}");
    }
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(if result.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_check_func(args: CheckFuncArgs) -> Result<ExitCode> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let dataset_path = args.dataset.or(cfg.dataset.clone()).context("--dataset is required")?;
    let tests_path = args.tests.or(cfg.tests.clone()).context("--tests is required")?;
    let manifest = load_manifest(&dataset_path)?;
    let point = manifest.get(&args.point).with_context(|| format!("no point `{}` in the dataset", args.point))?;
    let specs = func_check::load_test_specs(&tests_path)?;
    let mut spec = specs
        .get(&point.source_file)
        .cloned()
        .with_context(|| format!("no test spec for `{}`", point.source_file))?;
    if let Some(s) = args.seed.or(cfg.seed) {
        spec.compare.sample_seed = s;
    }
    let candidate = fs::read_to_string(&args.candidate).with_context(|| format!("reading {}", args.candidate.display()))?;
    let checker = FuncChecker::new(cfg.functional)?;
    let result = checker.check(point, &spec, &candidate)?;
    eprintln!("{}", result.status.summary());
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(if result.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode> {
    let format: ReportFormat = args.format.parse().map_err(anyhow::Error::msg)?;
    let group_by = args.group.iter().map(|g| g.parse::<GroupKey>()).collect::<Result<Vec<_>, _>>()?;
    let mut trajectories = Vec::new();
    let mut run = BTreeMap::new();
    for path in &args.traj {
        trajectories.extend(read_trajectories(path)?);
        let meta = meta_path(path);
        if meta.exists() {
            let m: RunMeta = serde_json::from_str(&fs::read_to_string(&meta)?)
                .with_context(|| format!("parsing {}", meta.display()))?;
            let prefix = if args.traj.len() > 1 { format!("{}.", path.display()) } else { String::new() };
            if let Some(s) = m.seed {
                run.insert(format!("{prefix}seed"), s.to_string());
            }
            run.insert(format!("{prefix}backend"), m.backend);
            run.insert(format!("{prefix}syntax_checker"), m.syntax_checker);
            run.insert(format!("{prefix}func_checker"), m.func_checker);
        }
    }
    if let Some(ds) = &args.dataset {
        let manifest = load_manifest(ds)?;
        if let Some(t) = trajectories.iter().find(|t| manifest.get(&t.point_id).is_none()) {
            bail!("trajectory point `{}` is not in {}", t.point_id, ds.display());
        }
    }
    let config = ReportConfig { k: args.k.clone(), group_by, at_iteration: args.at_iteration, run };
    let report = metrics::aggregate(&trajectories, config, args.timings)?;
    match &args.out {
        Some(path) => {
            let mut w = create_output(path)?;
            metrics::emit(&report, format, &mut w)?;
        }
        None => {
            metrics::emit(&report, format, io::stdout().lock())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Split(a) => cmd_split(a),
        Command::ExportTrain(a) => cmd_export(a),
        Command::Describe(a) => cmd_describe(a),
        Command::Generate(a) => cmd_generate(a),
        Command::CheckSyntax(a) => cmd_check_syntax(a),
        Command::CheckFunc(a) => cmd_check_func(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
