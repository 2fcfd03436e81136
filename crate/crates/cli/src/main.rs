use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fgaudit::lattice::{DEFAULT_EPSILON, DEFAULT_MAX_SET_SIZE, DEFAULT_SIGMA};
use fgaudit::{
    anonymize, audit, enumerate_admitted, load_anonymized, load_table, mine_all, query_error,
    AnonymizedDataset, AnonymizerConfig, AuditConfig, DatasetConfig, Method, MinedKnowledge,
    QuerySpec, Report, SampleGate, SolverConfig, Strategy, DEFAULT_WORLD_CAP,
};

const QI_FILE: &str = "qi.csv";
const SENSITIVE_FILE: &str = "sensitive.csv";

#[derive(Parser, Serialize)]
#[command(name = "fgaudit", version, about = "Mine foreground knowledge from bucketized data and audit linkage breaches")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Bucketize a raw table into a QI file and a sensitive file.
    Anonymize(AnonymizeArgs),
    /// Mine global distributions from an anonymized dataset.
    Mine(MineArgs),
    /// Compute per-tuple linkage and flag breaches.
    Audit(AuditArgs),
    /// Mean relative error of random COUNT queries.
    QueryError(QueryErrorArgs),
}

#[derive(Args, Serialize, Clone)]
struct SchemaArgs {
    /// TOML dataset config; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Quasi-identifier attributes, comma separated.
    #[arg(long, value_delimiter = ',')]
    qi: Vec<String>,
    #[arg(long)]
    sensitive_attr: Option<String>,
    /// Sensitive values treated as the target, comma separated.
    #[arg(long, value_delimiter = ',')]
    sensitive_values: Vec<String>,
    #[arg(long)]
    missing_marker: Option<String>,
}

impl SchemaArgs {
    fn resolve(&self) -> Result<DatasetConfig> {
        let mut cfg = match &self.config {
            Some(p) => DatasetConfig::from_toml_file(p)?,
            None => DatasetConfig {
                qi_attributes: Vec::new(),
                sensitive_attribute: String::new(),
                sensitive_values: Vec::new(),
                missing_marker: None,
                bin_widths: Default::default(),
            },
        };
        if !self.qi.is_empty() {
            cfg.qi_attributes = self.qi.clone();
        }
        if let Some(s) = &self.sensitive_attr {
            cfg.sensitive_attribute = s.clone();
        }
        if !self.sensitive_values.is_empty() {
            cfg.sensitive_values = self.sensitive_values.clone();
        }
        if self.missing_marker.is_some() {
            cfg.missing_marker = self.missing_marker.clone();
        }
        if cfg.qi_attributes.is_empty() {
            bail!("no QI attributes given (use --qi or --config)");
        }
        if cfg.sensitive_attribute.is_empty() {
            bail!("no sensitive attribute given (use --sensitive-attr or --config)");
        }
        if cfg.sensitive_values.is_empty() {
            bail!("no target values given (use --sensitive-values or --config)");
        }
        Ok(cfg)
    }
}

#[derive(Args, Serialize, Clone)]
struct DataArgs {
    /// Directory holding qi.csv and sensitive.csv.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    qi_file: Option<PathBuf>,
    #[arg(long)]
    sensitive_file: Option<PathBuf>,
}

impl DataArgs {
    fn paths(&self) -> Result<(PathBuf, PathBuf)> {
        let pick = |explicit: &Option<PathBuf>, name: &str| -> Result<PathBuf> {
            match (explicit, &self.data) {
                (Some(p), _) => Ok(p.clone()),
                (None, Some(d)) => Ok(d.join(name)),
                (None, None) => bail!("anonymized data not given (use --data or --qi-file/--sensitive-file)"),
            }
        };
        Ok((pick(&self.qi_file, QI_FILE)?, pick(&self.sensitive_file, SENSITIVE_FILE)?))
    }

    fn load(&self, cfg: &DatasetConfig) -> Result<AnonymizedDataset> {
        let (qi, sens) = self.paths()?;
        Ok(load_anonymized(qi, sens, cfg)?)
    }
}

#[derive(Args, Serialize)]
struct AnonymizeArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    /// Raw CSV table.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    l: usize,
    #[arg(long, default_value = "anatomy")]
    strategy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for qi.csv and sensitive.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SolverKind {
    Newton,
    FixedPoint,
}

#[derive(Args, Serialize, Clone)]
struct MiningArgs {
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Explicit support threshold; overrides epsilon and sigma.
    #[arg(long)]
    min_support: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_SET_SIZE)]
    max_set_size: usize,
    #[arg(long, default_value_t = DEFAULT_WORLD_CAP)]
    world_cap: u64,
    #[arg(long, value_enum, default_value = "newton")]
    solver: SolverKind,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

impl MiningArgs {
    fn gate(&self) -> Result<SampleGate> {
        Ok(match self.min_support {
            Some(j) => SampleGate::with_min_support(j),
            None => SampleGate::new(self.epsilon, self.sigma)?,
        })
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig {
            method: match self.solver {
                SolverKind::Newton => Method::Newton,
                SolverKind::FixedPoint => Method::FixedPoint,
            },
            tol: self.tol,
            max_iter: self.max_iter,
            ..SolverConfig::default()
        }
    }

    fn mine(&self, dataset: &AnonymizedDataset) -> Result<MinedKnowledge<f64>> {
        let gate = self.gate()?;
        log::info!("minimum support {}", gate.min_support);
        let admitted = enumerate_admitted(dataset, &gate, self.max_set_size)?;
        let targets = [dataset.schema().target().clone()];
        Ok(mine_all(dataset, &admitted, &targets, &self.solver(), self.world_cap)?)
    }
}

#[derive(Args, Serialize)]
struct MineArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    mining: MiningArgs,
    /// Report path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct AuditArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    mining: MiningArgs,
    /// Report from `mine`; knowledge is mined afresh when absent.
    #[arg(long)]
    knowledge: Option<PathBuf>,
    /// Original raw table, enabling recall and false-flag metrics.
    #[arg(long)]
    original: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct QueryErrorArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    original: PathBuf,
    /// Constrained QI attributes per query; all of them when absent.
    #[arg(long)]
    qd: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    selectivity: f64,
    #[arg(long, default_value_t = 10_000)]
    queries: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn emit(report: &Report, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => report.write(p).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            report.to_writer(&mut stdout)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

fn cmd_anonymize(args: &AnonymizeArgs) -> Result<()> {
    let cfg = args.schema.resolve()?;
    let table = load_table(&args.input, &cfg)?;
    let strategy: Strategy = args.strategy.parse()?;
    let ds = anonymize(&table, &AnonymizerConfig::new(args.l, strategy, args.seed))?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    ds.write(args.out.join(QI_FILE), args.out.join(SENSITIVE_FILE))?;
    eprintln!(
        "{} rows in {} groups (l = {}, {strategy}) written to {}",
        ds.len(),
        ds.groups().len(),
        args.l,
        args.out.display()
    );
    Ok(())
}

fn summarize_knowledge(report: &Report) {
    if report.distributions.is_empty() {
        eprintln!("no attribute set has enough support; nothing mined");
    }
    for d in &report.distributions {
        eprintln!(
            "{:?} target {:?}: m = {}, iterations = {}, residual = {}, converged = {}",
            d.attributes,
            d.target,
            d.entries.len(),
            d.iterations.map_or_else(|| "n/a".into(), |i| i.to_string()),
            d.residual.map_or_else(|| "n/a".into(), |r| format!("{r:.3e}")),
            d.converged
        );
    }
}

fn cmd_mine(args: &MineArgs, config: serde_json::Value) -> Result<()> {
    let cfg = args.schema.resolve()?;
    let ds = args.data.load(&cfg)?;
    let knowledge = args.mining.mine(&ds)?;
    let mut report = Report::new(config);
    report.add_knowledge(ds.schema(), &knowledge);
    summarize_knowledge(&report);
    emit(&report, args.out.as_deref())
}

fn cmd_audit(args: &AuditArgs, config: serde_json::Value) -> Result<()> {
    let cfg = args.schema.resolve()?;
    let ds = args.data.load(&cfg)?;
    let mut report = Report::new(config);
    let knowledge = match &args.knowledge {
        Some(p) => {
            let prior = Report::read(p).with_context(|| format!("reading {}", p.display()))?;
            report.distributions = prior.distributions.clone();
            prior.knowledge(ds.schema())?
        }
        None => {
            let k = args.mining.mine(&ds)?;
            report.add_knowledge(ds.schema(), &k);
            k
        }
    };
    if knowledge.is_empty() {
        let note = "no mined distribution available; linkage falls back to each group's target fraction";
        log::warn!("{note}");
        report.diagnostics.notices.push(note.into());
    }
    let original = args.original.as_ref().map(|p| load_table(p, &cfg)).transpose()?;
    if original.is_none() {
        let note = "original table not given; recall and false-flag rate omitted";
        eprintln!("{note}");
        report.diagnostics.notices.push(note.into());
    }
    let mut audit_cfg = AuditConfig::new(args.r, vec![ds.schema().target().clone()]);
    audit_cfg.world_cap = args.mining.world_cap;
    let breach = audit(&ds, &knowledge, &audit_cfg, original.as_ref())?;
    for w in &breach.warnings {
        log::warn!("{w}");
    }
    report.add_audit(ds.schema(), &breach);
    let m = &breach.metrics;
    eprintln!(
        "flagged {} of {} tuples at r = {}; recall {}, false-flag rate {}, avg breach probability {}, avg delta {:.6}",
        m.flagged,
        ds.len(),
        args.r,
        fmt_opt(m.recall),
        fmt_opt(m.false_flag_rate),
        fmt_opt(m.avg_breach_prob),
        m.avg_delta
    );
    emit(&report, args.out.as_deref())
}

fn cmd_query_error(args: &QueryErrorArgs) -> Result<()> {
    let cfg = args.schema.resolve()?;
    let ds = args.data.load(&cfg)?;
    let original = load_table(&args.original, &cfg)?;
    let spec = QuerySpec {
        qd: args.qd.unwrap_or(cfg.qi_attributes.len()),
        selectivity: args.selectivity,
        count: args.queries,
        seed: args.seed,
    };
    let err = query_error(&original, &ds, &spec)?;
    println!("{err}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    let config = serde_json::to_value(cli)?;
    match &cli.command {
        Command::Anonymize(a) => cmd_anonymize(a),
        Command::Mine(a) => cmd_mine(a, config),
        Command::Audit(a) => cmd_audit(a, config),
        Command::QueryError(a) => cmd_query_error(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
