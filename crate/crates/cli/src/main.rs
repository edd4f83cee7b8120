mod stages;
mod util;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use slicemine_classify::eval::CvConfig;
use slicemine_classify::{read_verdicts, write_verdicts, ClassifyError, SavedModel, Verdict};
use slicemine_core::cluster::{write_clusters_csv, ClusterMode, DEFAULT_MERGE_THRESHOLD};
use slicemine_core::hdbscan::HdbscanParams;
use slicemine_core::ingest::{audit_scenarios, mining_set, write_records_jsonl, DEFAULT_LMAX_CAP};
use slicemine_core::io::{
    read_csv, read_jsonl, read_patterns_csv, read_spec_flags_csv, write_csv, write_json, write_jsonl,
    write_patterns_csv, write_slices_jsonl, write_spec_flags_csv,
};
use slicemine_core::labels::{agreement, read_labels, sample_pool, LabelRecord, PoolItem, PoolParams};
use slicemine_core::mine::{extract_slices, mine, PatternStats, Scope};
use slicemine_core::paraphrase::ClusterParams;
use slicemine_core::rollup::{
    prevalence_bundle, rank, rollup, write_ranked_csv, RollupInputs, View, DEFAULT_SECONDS_PER_CANDIDATE,
};
use slicemine_core::verify::{FilteredRow, FILTERED_COLUMNS};
use slicemine_judge::{inter_judge_agreement, judge_agreement, judge_pool, JudgeConfig, JudgeVerdict};

use stages::MechanismMode;
use util::{ensure_dir, load_aggregated, load_clusters, load_records, occurrence_rows, read_occurrences, require};

#[derive(Parser)]
#[command(name = "slicemine", version, about = "Mine recurring step slices from Gherkin corpora")]
struct Cli {
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse feature files into step records.
    Ingest(IngestArgs),
    /// Assign step clusters.
    Cluster(ClusterArgs),
    /// Enumerate slices and aggregate pattern statistics.
    Mine(MineArgs),
    /// Per-file spec-suite statistics.
    DetectSpec(DetectSpecArgs),
    /// Paraphrase clustering of mined patterns.
    ClusterPatterns(ClusterPatternsArgs),
    /// Draw a stratified labelling pool.
    Sample(SampleArgs),
    /// Inter-rater agreement.
    Agree(AgreeArgs),
    /// Majority-aggregate per-rater labels.
    Aggregate(AggregateArgs),
    /// Cross-validate and fit the extraction-worthiness classifier.
    Train(TrainArgs),
    /// Score patterns with a trained model.
    Classify(ClassifyArgs),
    /// Assign mechanisms to extraction-worthy verdicts.
    Mechanism(MechanismArgs),
    /// Ask an LLM judge about every pooled pattern.
    Judge(JudgeArgs),
    /// Agreement between judge verdicts and human labels.
    JudgeAgree(JudgeAgreeArgs),
    /// Apply verification rules R1..R6.
    Filter(FilterArgs),
    /// Corpus-level prevalence.
    Rollup(RollupArgs),
    /// Top-k candidates per scope.
    Rank(RankArgs),
    /// End-to-end pipeline into one directory.
    Run(RunArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Corpus roots with one subdirectory per repository.
    #[arg(long, num_args = 1..)]
    features: Vec<PathBuf>,
    #[arg(long, conflicts_with = "features")]
    records: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Where to list files that failed to parse.
    #[arg(long)]
    skipped: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long, default_value = "exact")]
    mode: ClusterMode,
    #[arg(long, default_value = "builtin")]
    provider: String,
    #[arg(long, default_value_t = DEFAULT_MERGE_THRESHOLD)]
    threshold: f64,
    /// Records with cluster ids assigned.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LMAX_CAP)]
    lmax_cap: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    slices: Option<PathBuf>,
    #[arg(long)]
    spec_flags: Option<PathBuf>,
    /// pattern -> scenarios index used by rollup.
    #[arg(long)]
    occurrences: Option<PathBuf>,
    #[arg(long)]
    audit: Option<PathBuf>,
}

#[derive(Args)]
struct DetectSpecArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// Accepted for compatibility; detection recomputes per-file density.
    #[arg(long)]
    patterns: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LMAX_CAP)]
    lmax_cap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ParaphraseOpts {
    #[arg(long, default_value = "builtin")]
    provider: String,
    #[arg(long, default_value_t = 5)]
    min_cluster_size: usize,
    #[arg(long, default_value_t = 5)]
    min_samples: usize,
    #[arg(long, default_value_t = 50)]
    reduce_dim: usize,
}

impl ParaphraseOpts {
    fn params(&self) -> ClusterParams {
        ClusterParams {
            reduce_dim: self.reduce_dim,
            hdbscan: HdbscanParams {
                min_cluster_size: self.min_cluster_size,
                min_samples: self.min_samples,
            },
        }
    }
}

#[derive(Args)]
struct ClusterPatternsArgs {
    #[arg(long)]
    patterns: PathBuf,
    #[command(flatten)]
    opts: ParaphraseOpts,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PoolOpts {
    #[arg(long, default_value_t = 200)]
    pool_size: usize,
    #[arg(long, default_value_t = 60)]
    overlap: usize,
    #[arg(long, default_value_t = 20)]
    spec_coverage: usize,
    #[arg(long, value_delimiter = ',', default_value = "A,B,C")]
    raters: Vec<String>,
}

impl PoolOpts {
    fn params(&self, seed: u64) -> PoolParams {
        PoolParams {
            pool_size: self.pool_size,
            overlap: self.overlap,
            spec_coverage: self.spec_coverage,
            raters: self.raters.clone(),
            seed,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    patterns: PathBuf,
    #[command(flatten)]
    opts: PoolOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write one blank label file per rater here.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct AgreeArgs {
    #[arg(long)]
    labels: PathBuf,
    /// Restrict pairwise kappas to items every rater labelled.
    #[arg(long)]
    overlap_only: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct CvOpts {
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
}

impl CvOpts {
    fn config(&self, seed: u64) -> CvConfig {
        CvConfig {
            k: self.folds,
            bootstrap: self.bootstrap,
            seed,
            ..CvConfig::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    patterns: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    cv: CvOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    patterns: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "rule")]
    mechanism: MechanismMode,
}

#[derive(Args)]
struct MechanismArgs {
    #[arg(long, value_enum, default_value = "rule")]
    mode: MechanismMode,
    #[arg(long)]
    verdicts: PathBuf,
    #[arg(long)]
    patterns: PathBuf,
    /// Needed for `--mode learned`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct JudgeArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    patterns: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Raw request/response log (JSONL).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Replacement rubric text.
    #[arg(long)]
    rubric: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Human labels; with `--report`, also write agreement.
    #[arg(long, requires = "report")]
    labels: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct JudgeAgreeArgs {
    /// One verdicts file per judge.
    #[arg(long, num_args = 1.., required = true)]
    verdicts: Vec<PathBuf>,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    verdicts: PathBuf,
    #[arg(long)]
    patterns: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    funnel: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ViewArg {
    Full,
    RealSignal,
    PostEw,
    All,
}

#[derive(Args)]
struct RollupArgs {
    #[arg(long, value_enum, default_value = "all")]
    view: ViewArg,
    #[arg(long)]
    patterns: PathBuf,
    /// Records with cluster ids (defines the scenario denominator).
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    occurrences: PathBuf,
    #[arg(long)]
    spec_flags: Option<PathBuf>,
    #[arg(long)]
    verdicts: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SECONDS_PER_CANDIDATE)]
    seconds_per_candidate: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Rq1,
    Rq2,
    Rq3,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Scope {
        match s {
            ScopeArg::Rq1 => Scope::Rq1,
            ScopeArg::Rq2 => Scope::Rq2,
            ScopeArg::Rq3 => Scope::Rq3,
        }
    }
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    patterns: PathBuf,
    #[arg(long, value_enum)]
    scope: ScopeArg,
    #[arg(long, default_value_t = 200)]
    top_k: usize,
    /// Keep only patterns that survive the verification rules.
    #[arg(long)]
    filtered: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, num_args = 1..)]
    features: Vec<PathBuf>,
    #[arg(long, conflicts_with = "features")]
    records: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "exact")]
    mode: ClusterMode,
    #[arg(long, default_value_t = DEFAULT_MERGE_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_LMAX_CAP)]
    lmax_cap: usize,
    /// Also write every slice (large).
    #[arg(long)]
    slices: bool,
    #[arg(long)]
    skip_paraphrase: bool,
    #[command(flatten)]
    paraphrase: ParaphraseOpts,
    #[command(flatten)]
    pool: PoolOpts,
    /// Labels (per-rater or aggregated); enables train, classify and filter.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    cv: CvOpts,
    /// Seeds pool sampling, folds and bootstrap.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "rule")]
    mechanism: MechanismMode,
    #[arg(long, default_value_t = 200)]
    top_k: usize,
    #[arg(long, default_value_t = DEFAULT_SECONDS_PER_CANDIDATE)]
    seconds_per_candidate: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_missing_input(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn is_missing_input(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(c.downcast_ref(), Some(slicemine_core::Error::MissingInput(_)))
            || matches!(
                c.downcast_ref(),
                Some(ClassifyError::Core(slicemine_core::Error::MissingInput(_)))
            )
    })
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Cluster(a) => cluster(a),
        Command::Mine(a) => mine_cmd(a),
        Command::DetectSpec(a) => detect_spec(a),
        Command::ClusterPatterns(a) => cluster_patterns_cmd(a),
        Command::Sample(a) => sample(a),
        Command::Agree(a) => agree(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Train(a) => train(a),
        Command::Classify(a) => classify(a),
        Command::Mechanism(a) => mechanism(a),
        Command::Judge(a) => judge(a),
        Command::JudgeAgree(a) => judge_agree(a),
        Command::Filter(a) => filter(a),
        Command::Rollup(a) => rollup_cmd(a),
        Command::Rank(a) => rank_cmd(a),
        Command::Run(a) => run(a),
    }
}

fn patterns_from(path: &Path) -> Result<Vec<PatternStats>> {
    require(path)?;
    read_patterns_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn verdicts_from(path: &Path) -> Result<Vec<Verdict>> {
    require(path)?;
    Ok(read_verdicts(path)?)
}

fn print_json<T: serde::Serialize>(value: &T, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => write_json(p, value)?,
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let (records, skipped) = load_records(&a.features, a.records.as_deref())?;
    write_records_jsonl(&a.out, &records)?;
    if let Some(p) = &a.skipped {
        write_jsonl(p, &skipped)?;
    }
    log::info!("{} step records, {} files skipped", records.len(), skipped.len());
    Ok(())
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let (records, _) = load_records(&[], Some(&a.records))?;
    let (records, clusters) = stages::cluster_records(&records, a.mode, &a.provider, a.threshold)?;
    write_records_jsonl(&a.out, &records)?;
    write_clusters_csv(&a.clusters, &clusters)?;
    log::info!("{} clusters over {} records", clusters.len(), records.len());
    Ok(())
}

fn mine_cmd(a: MineArgs) -> Result<()> {
    let (records, _) = load_records(&[], Some(&a.records))?;
    let clusters = load_clusters(&records, a.clusters.as_ref())?;
    let audit = audit_scenarios(&records, a.lmax_cap);
    let scenarios = mining_set(&records);
    let result = mine(&scenarios, &clusters, audit.l_max);
    write_patterns_csv(&a.out, &result.patterns)?;
    if let Some(p) = &a.slices {
        write_slices_jsonl(p, extract_slices(&scenarios, audit.l_max))?;
    }
    if let Some(p) = &a.spec_flags {
        write_spec_flags_csv(p, &result.spec_flags)?;
    }
    if let Some(p) = &a.occurrences {
        write_jsonl(p, &occurrence_rows(&result.accumulator.occurrences()))?;
    }
    if let Some(p) = &a.audit {
        write_json(p, &audit)?;
    }
    log::info!("{} patterns from {} scenarios (L_max {})", result.patterns.len(), scenarios.len(), audit.l_max);
    Ok(())
}

fn detect_spec(a: DetectSpecArgs) -> Result<()> {
    if a.patterns.is_some() {
        log::info!("--patterns is not needed; spec flags are computed from --records");
    }
    let (records, _) = load_records(&[], Some(&a.records))?;
    let clusters = load_clusters(&records, a.clusters.as_ref())?;
    let audit = audit_scenarios(&records, a.lmax_cap);
    let result = mine(&mining_set(&records), &clusters, audit.l_max);
    write_spec_flags_csv(&a.out, &result.spec_flags)?;
    log::info!(
        "{} of {} files flagged",
        result.spec_flags.iter().filter(|f| f.flagged).count(),
        result.spec_flags.len()
    );
    Ok(())
}

fn cluster_patterns_cmd(a: ClusterPatternsArgs) -> Result<()> {
    let patterns = patterns_from(&a.patterns)?;
    let clustering = stages::paraphrase(&patterns, &a.opts.provider, &a.opts.params())?;
    stages::write_paraphrase(&a.out, &clustering)?;
    print_json(&clustering.summary, a.summary.as_ref())
}

fn write_pool(out: &Path, templates: Option<&Path>, patterns: &[PatternStats], opts: &PoolOpts, seed: u64) -> Result<()> {
    let pool = sample_pool(patterns, &opts.params(seed))?;
    for note in &pool.fallbacks {
        log::warn!("{note}");
    }
    write_jsonl(out, &pool.items)?;
    if let Some(dir) = templates {
        ensure_dir(dir)?;
        for rater in &opts.raters {
            write_jsonl(&dir.join(format!("labels_{rater}.jsonl")), &pool.label_template(rater))?;
        }
    }
    log::info!("pool of {} items, per rater {:?}", pool.items.len(), pool.per_rater_totals());
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let patterns = patterns_from(&a.patterns)?;
    write_pool(&a.out, a.templates.as_deref(), &patterns, &a.opts, a.seed)
}

fn agree(a: AgreeArgs) -> Result<()> {
    require(&a.labels)?;
    let mut labels = read_labels(&a.labels)?;
    if a.overlap_only {
        let raters: HashSet<&str> = labels.iter().map(|l| l.rater.as_str()).collect();
        let mut per_item: HashMap<&str, HashSet<&str>> = HashMap::new();
        for l in &labels {
            per_item.entry(&l.pattern_ref).or_default().insert(&l.rater);
        }
        let full: HashSet<String> = per_item
            .into_iter()
            .filter(|(_, r)| r.len() == raters.len())
            .map(|(k, _)| k.to_string())
            .collect();
        labels.retain(|l: &LabelRecord| full.contains(&l.pattern_ref));
    }
    print_json(&agreement(&labels)?, a.out.as_ref())
}

fn aggregate(a: AggregateArgs) -> Result<()> {
    let agg = load_aggregated(&a.labels)?;
    write_jsonl(&a.out, &agg)?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let patterns = patterns_from(&a.patterns)?;
    let labels = load_aggregated(&a.labels)?;
    let (model, report) = stages::train(&patterns, &labels, &a.cv.config(a.seed))?;
    model.save(&a.model)?;
    write_json(&a.report, &report)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<SavedModel> {
    require(path)?;
    Ok(SavedModel::load(path)?)
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let patterns = patterns_from(&a.patterns)?;
    let verdicts = stages::classify(&model, &patterns, a.mechanism)?;
    write_verdicts(&a.out, &verdicts)?;
    Ok(())
}

fn mechanism(a: MechanismArgs) -> Result<()> {
    let mut verdicts = verdicts_from(&a.verdicts)?;
    let patterns = patterns_from(&a.patterns)?;
    let model = match (&a.model, a.mode) {
        (Some(p), _) => Some(load_model(p)?),
        (None, MechanismMode::Learned) => bail!(slicemine_core::Error::MissingInput("--model".into())),
        (None, MechanismMode::Rule) => None,
    };
    stages::assign_mechanisms(&mut verdicts, &patterns, a.mode, model.as_ref())?;
    write_verdicts(&a.out, &verdicts)?;
    Ok(())
}

fn judge(a: JudgeArgs) -> Result<()> {
    require(&a.pool)?;
    let pool: Vec<PoolItem> = read_jsonl(&a.pool)?;
    let patterns = patterns_from(&a.patterns)?;
    let by_ref: HashMap<String, &PatternStats> = patterns.iter().map(|p| (p.pattern_ref(), p)).collect();
    let mut items = Vec::with_capacity(pool.len());
    for it in &pool {
        match by_ref.get(&it.pattern_ref) {
            Some(p) => items.push(*p),
            None => log::warn!("pool item {} not in the pattern table", it.pattern_ref),
        }
    }
    let rubric = match &a.rubric {
        Some(p) => {
            require(p)?;
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?
        }
        None => slicemine_judge::DEFAULT_RUBRIC.to_string(),
    };
    let mut cfg = JudgeConfig::from_env()?;
    cfg.concurrency = a.concurrency;
    let verdicts = judge_pool(&items, &rubric, &cfg, a.log.as_deref())?;
    write_jsonl(&a.out, &verdicts)?;
    if let (Some(labels), Some(report)) = (&a.labels, &a.report) {
        let human = load_aggregated(labels)?;
        write_json(report, &judge_agreement(&verdicts, &human))?;
    }
    Ok(())
}

fn judge_agree(a: JudgeAgreeArgs) -> Result<()> {
    let human = load_aggregated(&a.labels)?;
    let mut per_judge = Vec::new();
    for p in &a.verdicts {
        require(p)?;
        per_judge.push(read_jsonl::<JudgeVerdict>(p)?);
    }
    #[derive(serde::Serialize)]
    struct Report {
        judges: Vec<slicemine_judge::JudgeAgreement>,
        inter_judge: Option<slicemine_judge::agreement::InterJudgeAgreement>,
    }
    let report = Report {
        judges: per_judge.iter().map(|v| judge_agreement(v, &human)).collect(),
        inter_judge: inter_judge_agreement(&per_judge),
    };
    print_json(&report, a.out.as_ref())
}

fn filter(a: FilterArgs) -> Result<()> {
    let verdicts = verdicts_from(&a.verdicts)?;
    let patterns = patterns_from(&a.patterns)?;
    let (rows, funnel) = stages::filter(&patterns, &verdicts);
    write_csv(&a.out, &FILTERED_COLUMNS, &rows)?;
    print_json(&funnel, a.funnel.as_ref())
}

fn rollup_cmd(a: RollupArgs) -> Result<()> {
    let patterns = patterns_from(&a.patterns)?;
    let (records, _) = load_records(&[], Some(&a.records))?;
    let scenarios: Vec<_> = mining_set(&records).into_iter().map(|s| s.key).collect();
    require(&a.occurrences)?;
    let occurrences = read_occurrences(&a.occurrences)?;
    let spec_flags = match &a.spec_flags {
        Some(p) => {
            require(p)?;
            Some(read_spec_flags_csv(p)?)
        }
        None => None,
    };
    let ew = match &a.verdicts {
        Some(p) => Some(stages::ew_positive(&verdicts_from(p)?)),
        None => None,
    };
    let inputs = RollupInputs {
        patterns: &patterns,
        occurrences: &occurrences,
        scenarios: &scenarios,
        spec_flags: spec_flags.as_deref(),
        ew_positive: ew.as_ref(),
    };
    let view = match a.view {
        ViewArg::All => return print_json(&prevalence_bundle(&inputs, a.seconds_per_candidate)?, a.out.as_ref()),
        ViewArg::Full => View::Full,
        ViewArg::RealSignal => View::RealSignal,
        ViewArg::PostEw => View::PostEw,
    };
    print_json(&rollup(&inputs, view)?, a.out.as_ref())
}

fn rank_cmd(a: RankArgs) -> Result<()> {
    let mut patterns = patterns_from(&a.patterns)?;
    if let Some(p) = &a.filtered {
        require(p)?;
        let rows: Vec<FilteredRow> = read_csv(p)?;
        patterns = stages::survivors(&patterns, &rows);
    }
    let rows = rank(&patterns, a.scope.into(), a.top_k);
    match &a.out {
        Some(p) => write_ranked_csv(p, &rows)?,
        None => {
            for r in &rows {
                println!("{}\t{:.4}\t{}", r.rank, r.primary_score, r.cluster_id_seq);
            }
        }
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let dir = &a.out_dir;
    ensure_dir(dir)?;
    let (records, skipped) = load_records(&a.features, a.records.as_deref())?;
    if !skipped.is_empty() {
        write_jsonl(&dir.join("skipped.jsonl"), &skipped)?;
    }
    let (records, clusters) = stages::cluster_records(&records, a.mode, &a.paraphrase.provider, a.threshold)?;
    write_records_jsonl(&dir.join("records.jsonl"), &records)?;
    write_clusters_csv(&dir.join("clusters.csv"), &clusters)?;

    let audit = audit_scenarios(&records, a.lmax_cap);
    write_json(&dir.join("audit.json"), &audit)?;
    let scenarios = mining_set(&records);
    let mined = mine(&scenarios, &clusters, audit.l_max);
    let patterns = mined.patterns;
    write_patterns_csv(&dir.join("patterns.csv"), &patterns)?;
    write_spec_flags_csv(&dir.join("spec_flags.csv"), &mined.spec_flags)?;
    let occurrences: BTreeMap<_, _> = mined.accumulator.occurrences();
    write_jsonl(&dir.join("occurrences.jsonl"), &occurrence_rows(&occurrences))?;
    if a.slices {
        write_slices_jsonl(&dir.join("slices.jsonl"), extract_slices(&scenarios, audit.l_max))?;
    }
    log::info!("{} patterns from {} scenarios", patterns.len(), scenarios.len());

    if !a.skip_paraphrase {
        let clustering = stages::paraphrase(&patterns, &a.paraphrase.provider, &a.paraphrase.params())?;
        stages::write_paraphrase(&dir.join("paraphrase_clusters.csv"), &clustering)?;
        write_json(&dir.join("paraphrase_summary.json"), &clustering.summary)?;
    }

    let eligible = patterns.iter().filter(|p| p.scope_eligible()).count();
    if eligible >= a.pool.pool_size {
        write_pool(&dir.join("pool.jsonl"), Some(&dir.join("templates")), &patterns, &a.pool, a.seed)?;
    } else {
        log::info!("{eligible} scope-eligible patterns, fewer than the pool size; no pool drawn");
    }

    let mut verdicts = None;
    let mut filtered = None;
    if let Some(labels_path) = &a.labels {
        let labels = load_aggregated(labels_path)?;
        let (model, report) = stages::train(&patterns, &labels, &a.cv.config(a.seed))?;
        write_json(&dir.join("eval.json"), &report)?;
        model.save(&dir.join("model.bin"))?;
        let v = stages::classify(&model, &patterns, a.mechanism)?;
        write_verdicts(&dir.join("verdicts.csv"), &v)?;
        let (rows, funnel) = stages::filter(&patterns, &v);
        write_csv(&dir.join("filtered.csv"), &FILTERED_COLUMNS, &rows)?;
        write_json(&dir.join("funnel.json"), &funnel)?;
        verdicts = Some(v);
        filtered = Some(rows);
    }

    let scenario_keys: Vec<_> = scenarios.into_iter().map(|s| s.key).collect();
    let ew = verdicts.as_deref().map(stages::ew_positive);
    let inputs = RollupInputs {
        patterns: &patterns,
        occurrences: &occurrences,
        scenarios: &scenario_keys,
        spec_flags: Some(&mined.spec_flags),
        ew_positive: ew.as_ref(),
    };
    write_json(&dir.join("prevalence.json"), &prevalence_bundle(&inputs, a.seconds_per_candidate)?)?;

    let ranked_pool = match &filtered {
        Some(rows) => stages::survivors(&patterns, rows),
        None => patterns.clone(),
    };
    for (scope, name) in [(Scope::Rq1, "rq1"), (Scope::Rq2, "rq2"), (Scope::Rq3, "rq3")] {
        write_ranked_csv(&dir.join(format!("topk_{name}.csv")), &rank(&ranked_pool, scope, a.top_k))?;
    }
    Ok(())
}

