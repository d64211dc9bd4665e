use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tablemaster::eval::{evaluate, load_dataset, render_report, DatasetFormat};
use tablemaster::gateway::Cassette;
use tablemaster::normalize::{normalize, Kind};
use tablemaster::pipeline::{Pipeline, PipelineConfig, RunRecord};
use tablemaster::reasoning::TaskKind;
use tablemaster::table::{parse_table, render_markdown, Table, TableFormat};

#[derive(Parser)]
#[command(name = "tablemaster", version, about = "Answer questions over tables with a language model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question about one table.
    Run(RunArgs),
    /// Score a dataset and write a report.
    Eval(EvalArgs),
    /// Print the normalized form of a table.
    Normalize(NormalizeArgs),
    /// Inspect or prune a response cassette.
    #[command(subcommand)]
    Cassette(CassetteCommand),
}

/// Flags that override the config file. Values use the config file syntax.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// record, replay, or passthrough.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    cassette: Option<PathBuf>,
    #[arg(long)]
    peek_size: Option<usize>,
    #[arg(long)]
    b_max: Option<usize>,
    /// on or off.
    #[arg(long)]
    normalize: Option<String>,
    /// on or off.
    #[arg(long)]
    full_table_fallback: Option<String>,
    /// focus or full.
    #[arg(long)]
    reasoning_table: Option<String>,
    #[arg(long)]
    template_dir: Option<PathBuf>,
    /// Interpreter command for generated programs, e.g. "python3 -I".
    #[arg(long)]
    interpreter: Option<String>,
    #[arg(long)]
    exec_timeout_ms: Option<u64>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    base_url: Option<String>,
}

impl ConfigArgs {
    fn build(&self, mut config: PipelineConfig) -> Result<PipelineConfig> {
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let pairs = [
            ("backend", self.backend.clone()),
            ("cassette", path(&self.cassette)),
            ("peek_size", self.peek_size.map(|v| v.to_string())),
            ("b_max", self.b_max.map(|v| v.to_string())),
            ("normalize", self.normalize.clone()),
            ("full_table_fallback", self.full_table_fallback.clone()),
            ("reasoning_table", self.reasoning_table.clone()),
            ("template_dir", path(&self.template_dir)),
            ("interpreter", self.interpreter.clone()),
            ("exec_timeout_ms", self.exec_timeout_ms.map(|v| v.to_string())),
            ("model", self.model.clone()),
            ("base_url", self.base_url.clone()),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                config.set(key, &v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct TableArgs {
    /// Table file (.md, .csv, .tsv, .json).
    table: PathBuf,
    /// markdown, csv, tsv, or json; defaults to the file extension.
    #[arg(long)]
    format: Option<String>,
    /// Reject ragged rows instead of padding them.
    #[arg(long)]
    strict: bool,
}

impl TableArgs {
    fn load(&self) -> Result<Table> {
        let format = match &self.format {
            Some(f) => f.parse::<TableFormat>().map_err(|e| anyhow!(e))?,
            None => self
                .table
                .extension()
                .and_then(|e| e.to_str())
                .and_then(TableFormat::from_extension)
                .unwrap_or(TableFormat::Csv),
        };
        let text = std::fs::read_to_string(&self.table)
            .with_context(|| format!("reading {}", self.table.display()))?;
        let table = parse_table(&text, format, self.strict)
            .with_context(|| format!("parsing {}", self.table.display()))?;
        Ok(table)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    table: TableArgs,
    #[arg(long, short)]
    question: String,
    /// qa or fact_verification.
    #[arg(long, default_value = "qa")]
    task: String,
    /// Where to write the run trace.
    #[arg(long, default_value = "trace.json")]
    trace: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    dataset: PathBuf,
    /// jsonl, wikitq-tsv, or tabfact-json.
    #[arg(long, default_value = "jsonl")]
    dataset_format: String,
    /// Output directory for report.txt, report.json, and traces/.
    #[arg(long, default_value = "eval-out")]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    /// Only the first N instances.
    #[arg(long)]
    limit: Option<usize>,
    /// Include per-quartile accuracy tables.
    #[arg(long)]
    buckets: bool,
    /// Include predicted versus tallied cost.
    #[arg(long)]
    cost: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct NormalizeArgs {
    #[command(flatten)]
    table: TableArgs,
}

#[derive(Subcommand)]
enum CassetteCommand {
    /// List recorded entries.
    Inspect { dir: PathBuf },
    /// Remove entries no trace in `traces` refers to.
    Prune {
        dir: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        dry_run: bool,
    },
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = args.config.build(PipelineConfig::default())?;
    let task: TaskKind = args.task.parse().map_err(|e: String| anyhow!(e))?;
    let table = args.table.load()?;
    let pipeline = Pipeline::from_config(config)?;
    let record = pipeline.run("run", &table, &args.question, task)?;
    for (stage, message) in record.trace.warnings() {
        eprintln!("warning [{stage}]: {message}");
    }
    write_json(&args.trace, &record)?;
    if record.answer.abstained {
        println!("(no answer)");
    } else {
        println!("{}", record.answer.value);
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let defaults = PipelineConfig {
        normalize: false,
        ..PipelineConfig::default()
    };
    let config = args.config.build(defaults)?;
    let format: DatasetFormat = args.dataset_format.parse().map_err(|e: String| anyhow!(e))?;
    let mut dataset = load_dataset(&args.dataset, format)?;
    if dataset.skipped > 0 {
        eprintln!("skipped {} malformed records", dataset.skipped);
    }
    if let Some(limit) = args.limit {
        dataset.instances.truncate(limit);
    }
    let pipeline = Pipeline::from_config(config)?;
    let report = evaluate(
        &dataset.instances,
        &pipeline,
        args.parallelism,
        Some(&args.out.join("traces")),
    )?;
    let text = render_report(&report, args.buckets, args.cost);
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("report.txt"), &text)?;
    write_json(&args.out.join("report.json"), &report)?;
    print!("{text}");
    Ok(())
}

fn cmd_normalize(args: NormalizeArgs) -> Result<()> {
    let table = args.table.load()?;
    let n = normalize(&table);
    println!("{}", render_markdown(&n.table, false));
    if n.transposed {
        eprintln!("transposed from column-major input");
    }
    for p in &n.provenance {
        let kind = match p.kind {
            Kind::Integer => "integer",
            Kind::Decimal => "decimal",
            Kind::Date => "date",
            Kind::Text => "text",
            Kind::Mixed => "mixed",
        };
        eprint!("{}: {kind}, {} cells canonicalized", p.column, p.canonicalized);
        if !p.unparsed_rows.is_empty() {
            eprint!(", unparsed rows {:?}", p.unparsed_rows);
        }
        for note in &p.notes {
            eprint!("; {note}");
        }
        eprintln!();
    }
    Ok(())
}

fn cmd_cassette(cmd: CassetteCommand) -> Result<()> {
    match cmd {
        CassetteCommand::Inspect { dir } => {
            let entries = Cassette::open(&dir).entries()?;
            for e in &entries {
                let first = e.response.text.lines().next().unwrap_or("");
                println!("{}  {:<22} {}", &e.key[..12], e.template_id.as_str(), first);
            }
            println!("{} entries", entries.len());
        }
        CassetteCommand::Prune { dir, traces, dry_run } => {
            let mut used = BTreeSet::new();
            let listing = std::fs::read_dir(&traces).with_context(|| format!("reading {}", traces.display()))?;
            for entry in listing {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    let record: RunRecord = serde_json::from_str(&std::fs::read_to_string(&path)?)
                        .with_context(|| format!("{} is not a run trace", path.display()))?;
                    used.extend(record.trace.lm_calls().map(|c| c.request_key.clone()));
                }
            }
            if used.is_empty() {
                bail!("no traces found in {}; refusing to prune everything", traces.display());
            }
            let cassette = Cassette::open(&dir);
            let mut removed = 0;
            for key in cassette.keys()? {
                if !used.contains(&key) {
                    if !dry_run {
                        cassette.remove(&key)?;
                    }
                    removed += 1;
                }
            }
            println!("{} {removed} unreferenced entries", if dry_run { "would remove" } else { "removed" });
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Normalize(a) => cmd_normalize(a),
        Command::Cassette(c) => cmd_cassette(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
