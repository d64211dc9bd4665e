//! End-to-end orchestration and run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::{reconstruct_focus, verbalize, VerbalizedTable};
use crate::eval::{CostObservation, CostTally};
use crate::gateway::{
    digest, Cassette, CassetteBackend, CassetteMode, Gateway, HttpBackend, HttpConfig, LmBackend,
    TemplateRegistry,
};
use crate::normalize::{normalize, ColumnKind, NormalizedTable};
use crate::reasoning::{
    answer_adaptive, Answer, Executor, ExecutorProfile, ReasoningOptions, ReasoningTable, TaskKind,
};
use crate::sql::{RowEngine, RowSet, DEFAULT_TIMEOUT};
use crate::structure::{
    column_lookup, extract_structure, rank_columns, row_lookup, ColumnSelection, RankedColumns,
    StructureInfo, DEFAULT_B_MAX, DEFAULT_PEEK_SIZE,
};
use crate::table::{render_csv, Table, TableError};
use crate::trace::{Fallback, ReasoningTrace};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("config file {path}: {message}")]
    File { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub peek_size: usize,
    pub b_max: usize,
    pub executor: ExecutorProfile,
    pub backend_mode: CassetteMode,
    pub cassette: Option<PathBuf>,
    pub normalize: bool,
    pub full_table_fallback: bool,
    pub reasoning_table: ReasoningTable,
    pub template_dir: Option<PathBuf>,
    pub http: HttpConfig,
    pub sql_timeout_ms: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            peek_size: DEFAULT_PEEK_SIZE,
            b_max: DEFAULT_B_MAX,
            executor: ExecutorProfile::default(),
            backend_mode: CassetteMode::Replay,
            cassette: None,
            normalize: true,
            full_table_fallback: true,
            reasoning_table: ReasoningTable::Focus,
            template_dir: None,
            http: HttpConfig::default(),
            sql_timeout_ms: DEFAULT_TIMEOUT.as_millis() as u64,
        }
    }
}

fn parse_flag(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Invalid(format!("{key}: expected on/off, got `{value}`"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::Invalid(format!("{key}: expected a number, got `{value}`")))
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.peek_size < 1 {
            return Err(ConfigError::Invalid("peek_size must be at least 1".into()));
        }
        if self.b_max < 1 {
            return Err(ConfigError::Invalid("b_max must be at least 1".into()));
        }
        if self.backend_mode != CassetteMode::Passthrough && self.cassette.is_none() {
            return Err(ConfigError::Invalid(format!(
                "{} mode needs a cassette path",
                match self.backend_mode {
                    CassetteMode::Record => "record",
                    _ => "replay",
                }
            )));
        }
        if self.executor.interpreter.is_empty() {
            return Err(ConfigError::Invalid("executor interpreter is empty".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key.trim() {
            "peek_size" => self.peek_size = parse_num(key, value)?,
            "b_max" => self.b_max = parse_num(key, value)?,
            "backend" | "backend_mode" => {
                self.backend_mode = value.parse().map_err(ConfigError::Invalid)?
            }
            "cassette" => self.cassette = Some(PathBuf::from(value)),
            "normalize" => self.normalize = parse_flag(key, value)?,
            "full_table_fallback" => self.full_table_fallback = parse_flag(key, value)?,
            "reasoning_table" => {
                self.reasoning_table = value.parse().map_err(ConfigError::Invalid)?
            }
            "template_dir" => self.template_dir = Some(PathBuf::from(value)),
            "interpreter" => {
                self.executor.interpreter = value.split_whitespace().map(str::to_string).collect()
            }
            "program_extension" => self.executor.extension = value.trim_start_matches('.').into(),
            "exec_timeout_ms" => self.executor.timeout_ms = parse_num(key, value)?,
            "memory_limit_mb" => self.executor.memory_limit_mb = parse_num(key, value)?,
            "isolate_network" => self.executor.isolate_network = parse_flag(key, value)?,
            "exec_parallelism" => self.executor.parallelism = parse_num(key, value)?,
            "model" => self.http.model = value.into(),
            "base_url" => self.http.base_url = value.into(),
            "api_key_env" => self.http.api_key_env = value.into(),
            "http_timeout_secs" => self.http.timeout_secs = parse_num(key, value)?,
            "sql_timeout_ms" => self.sql_timeout_ms = parse_num(key, value)?,
            other => return Err(ConfigError::Invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Invalid(format!("line {}: expected key = value", i + 1)))?;
            self.set(key, value)
                .map_err(|e| ConfigError::Invalid(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        self.apply_text(&text).map_err(|e| ConfigError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn reasoning_options(&self) -> ReasoningOptions {
        ReasoningOptions {
            full_table_fallback: self.full_table_fallback,
            reasoning_table: self.reasoning_table,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("language model misconfigured: {0}")]
    Misconfigured(String),
    #[error("internal error: {0}")]
    Internal(#[from] TableError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSummary {
    pub rows: usize,
    pub columns: usize,
    pub digest: String,
}

impl TableSummary {
    pub fn of(table: &Table) -> Self {
        Self {
            rows: table.row_count(),
            columns: table.column_count(),
            digest: digest(&render_csv(table)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSummary {
    pub table: TableSummary,
    pub headers: Vec<String>,
    pub transposed: bool,
    pub column_kinds: Vec<ColumnKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusSummary {
    pub columns: Vec<String>,
    pub initial_columns: Vec<String>,
    pub rows: usize,
    pub width: usize,
    pub reconstruction_count: usize,
    pub estimations: usize,
    pub condensation_ratio: f64,
    pub hash: String,
}

/// Everything recorded about one run; written as the per-instance trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub question: String,
    pub task_kind: TaskKind,
    pub config: PipelineConfig,
    pub input: TableSummary,
    pub normalized: NormalizedSummary,
    pub structure: StructureInfo,
    pub ranked: RankedColumns,
    pub column_selection: ColumnSelection,
    pub rows: RowSet,
    pub focus: FocusSummary,
    pub verbalized: VerbalizedTable,
    pub answer: Answer,
    pub trace: ReasoningTrace,
}

impl RunRecord {
    pub fn cost(&self) -> &CostTally {
        self.trace.cost.as_ref().expect("every finished run records its cost")
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    gateway: Gateway,
    executor: Executor,
}

pub fn build_backend(config: &PipelineConfig) -> Result<Arc<dyn LmBackend>, PipelineError> {
    let live = || -> Result<Arc<dyn LmBackend>, PipelineError> {
        HttpBackend::new(config.http.clone())
            .map(|b| Arc::new(b) as Arc<dyn LmBackend>)
            .map_err(|e| PipelineError::Misconfigured(e.to_string()))
    };
    let cassette = config.cassette.as_ref().map(Cassette::open);
    Ok(match (config.backend_mode, cassette) {
        (CassetteMode::Replay, Some(c)) => Arc::new(CassetteBackend::replay(c)),
        (CassetteMode::Record, Some(c)) => Arc::new(
            CassetteBackend::new(c, CassetteMode::Record, Some(live()?))
                .map_err(|e| PipelineError::Misconfigured(e.to_string()))?,
        ),
        (CassetteMode::Passthrough, _) => live()?,
        (_, None) => {
            return Err(ConfigError::Invalid("this backend mode needs a cassette path".into()).into())
        }
    })
}

impl Pipeline {
    pub fn new(config: PipelineConfig, gateway: Gateway) -> Result<Self, PipelineError> {
        config.validate()?;
        let executor = Executor::new(config.executor.clone());
        Ok(Self {
            config,
            gateway,
            executor,
        })
    }

    /// Builds templates and backend from the configuration alone.
    pub fn from_config(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let templates = match &config.template_dir {
            Some(dir) => TemplateRegistry::load_dir(dir)
                .map_err(|e| ConfigError::Invalid(format!("templates: {e}")))?,
            None => TemplateRegistry::default(),
        };
        let backend = build_backend(&config)?;
        Self::new(config, Gateway::new(templates, backend))
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn run(&self, id: &str, table: &Table, question: &str, task_kind: TaskKind) -> Result<RunRecord, PipelineError> {
        let cfg = &self.config;
        let gw = &self.gateway;
        let mut trace = ReasoningTrace::default();

        let normalized = if cfg.normalize {
            normalize(table)
        } else {
            NormalizedTable::passthrough(table.clone())
        };
        let structure = extract_structure(&normalized, cfg.peek_size, gw, &mut trace);
        let ranked = rank_columns(&normalized, question, cfg.peek_size, gw, &mut trace);
        let column_selection = column_lookup(
            &normalized,
            &ranked,
            question,
            cfg.peek_size,
            cfg.b_max,
            &structure.key_column,
            gw,
            &mut trace,
        );
        let rows = match RowEngine::new(&normalized) {
            Ok(engine) => {
                let engine = engine.with_timeout(Duration::from_millis(cfg.sql_timeout_ms));
                row_lookup(&normalized, question, cfg.peek_size, gw, &engine, &mut trace)
            }
            Err(e) => {
                let reason = format!("could not load table into the SQL engine: {e}");
                trace.warn("row_lookup", reason.clone());
                trace.fallback(Fallback::AllRows, reason.clone());
                RowSet::all(normalized.table.row_count(), "", reason)
            }
        };
        let focus = reconstruct_focus(
            &normalized,
            question,
            &rows,
            &column_selection.columns,
            &ranked,
            gw,
            &mut trace,
        )?;
        let verbalized = verbalize(&focus, gw, &mut trace);
        let answer = answer_adaptive(
            &normalized,
            &focus,
            &verbalized,
            question,
            task_kind,
            cfg.reasoning_options(),
            gw,
            &self.executor,
            &mut trace,
        );
        if let Some(msg) = trace.misconfiguration() {
            return Err(PipelineError::Misconfigured(msg.to_string()));
        }

        let n = normalized.table.column_count() as u64;
        let m = normalized.table.row_count() as u64;
        let k = structure.peek_used as u64;
        let retries = trace.fallbacks.iter().filter(|f| **f == Fallback::FullTableRetry).count() as u64;
        trace.cost = Some(
            CostTally::from_observation(CostObservation {
                k,
                n,
                e: focus.reconstruction_count as u64,
                a: focus.table.row_count() as u64,
                b: focus.table.column_count() as u64,
            })
            .with_unmodeled((k * n + retries * m * n) as f64),
        );

        Ok(RunRecord {
            id: id.to_string(),
            question: question.to_string(),
            task_kind,
            config: cfg.clone(),
            input: TableSummary::of(table),
            normalized: NormalizedSummary {
                table: TableSummary::of(&normalized.table),
                headers: normalized.table.headers().to_vec(),
                transposed: normalized.transposed,
                column_kinds: normalized.column_kinds.clone(),
            },
            structure,
            ranked,
            column_selection,
            rows,
            focus: FocusSummary {
                columns: focus.selected_columns.clone(),
                initial_columns: focus.initial_columns.clone(),
                rows: focus.table.row_count(),
                width: focus.table.column_count(),
                reconstruction_count: focus.reconstruction_count,
                estimations: focus.estimations,
                condensation_ratio: focus.condensation_ratio,
                hash: focus.hash(),
            },
            verbalized,
            answer,
            trace,
        })
    }
}
