//! Command-line front end and the evaluation pipeline behind it.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::datasets::{load_ground_truth, DatasetLayout};
use crate::error::{Error, EvalError, Result};
use crate::eval::{score, EvalReport, GroundTruth, Protocol, NS_DEPTH};
use crate::metrics::MetricId;
use crate::normalize::{FittedNormalizer, NormFormula, NormalizationSpec, Scheme};
use crate::search::{batch_search, write_rankings, Depth, Exclusions, RankedList};
use crate::store::{self, DescriptorSet};

/// Query side of an experiment.
#[derive(Debug, Clone)]
pub enum QuerySource {
    /// Queries are rows of the index itself.
    Same,
    Store(DescriptorSet),
}

impl QuerySource {
    pub fn from_arg(arg: Option<&Path>) -> Result<Self> {
        match arg {
            None => Ok(QuerySource::Same),
            Some(p) if p.as_os_str().eq_ignore_ascii_case("same") => Ok(QuerySource::Same),
            Some(p) => Ok(QuerySource::Store(DescriptorSet::open(p)?)),
        }
    }
}

/// One normalization × metric configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellConfig {
    pub metric: MetricId,
    pub norm: NormalizationSpec,
    /// `None` picks the protocol default: full rankings for mAP, 4 for N-S.
    pub depth: Option<Depth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub rankings: Vec<RankedList>,
    /// Degenerate rows/columns left unscaled by the normalizer.
    pub normalization_warnings: usize,
    /// Distances that could not be computed and were ranked last.
    pub metric_warnings: usize,
}

/// An index, a query source and validated ground truth, ready to be scored
/// under any number of configurations.
pub struct Experiment {
    index: DescriptorSet,
    queries: QuerySource,
    gt: GroundTruth,
    /// Row of each ground-truth query in the query matrix (index or store).
    query_rows: Vec<usize>,
}

impl Experiment {
    pub fn new(index: DescriptorSet, queries: QuerySource, gt: GroundTruth) -> Result<Self> {
        gt.validate()?;
        let query_set = match &queries {
            QuerySource::Same => &index,
            QuerySource::Store(s) => {
                if s.dim() != index.dim() {
                    return Err(crate::error::SearchError::DimensionMismatch {
                        query: s.dim(),
                        index: index.dim(),
                    }
                    .into());
                }
                s
            }
        };
        let mut query_rows = Vec::with_capacity(gt.queries.len());
        for q in &gt.queries {
            let row = query_set.row_of(&q.query).ok_or_else(|| EvalError::UnknownId {
                query: q.query.clone(),
                id: q.query.clone(),
            })?;
            query_rows.push(row);
            if let Some(missing) = q.positives.iter().find(|id| index.row_of(id).is_none()) {
                return Err(EvalError::UnknownId {
                    query: q.query.clone(),
                    id: missing.clone(),
                }
                .into());
            }
        }
        Ok(Self {
            index,
            queries,
            gt,
            query_rows,
        })
    }

    /// Loads stores and ground truth from disk.
    pub fn load(index: &Path, queries: Option<&Path>, layout: DatasetLayout, gt: Option<&Path>) -> Result<Self> {
        let index = DescriptorSet::open(index)?;
        let queries = QuerySource::from_arg(queries)?;
        let gt = load_ground_truth(layout, gt, index.ids())?;
        Self::new(index, queries, gt)
    }

    pub fn ground_truth(&self) -> &GroundTruth {
        &self.gt
    }

    pub fn index(&self) -> &DescriptorSet {
        &self.index
    }

    pub fn default_depth(&self) -> Depth {
        match self.gt.protocol {
            Protocol::Map => Depth::Full,
            Protocol::Ns => Depth::Top(NS_DEPTH),
        }
    }

    fn exclusions(&self) -> Exclusions {
        self.gt
            .queries
            .iter()
            .filter(|q| q.exclude_self)
            .map(|q| (q.query.clone(), HashSet::from([q.query.clone()])))
            .collect()
    }

    /// Fit on the index, normalize both sides, search, score.
    pub fn evaluate(&self, cell: CellConfig) -> Result<Evaluation> {
        let normalizer = FittedNormalizer::fit(cell.norm, self.index.matrix())?;
        let index_n = normalizer.apply(self.index.matrix())?;
        let mut normalization_warnings = index_n.degenerate;
        let index = self.index.with_matrix(index_n.matrix);
        let queries = match &self.queries {
            QuerySource::Same => index.select(&self.query_rows),
            QuerySource::Store(s) => {
                let picked = s.select(&self.query_rows);
                let qn = normalizer.apply(picked.matrix())?;
                normalization_warnings += qn.degenerate;
                picked.with_matrix(qn.matrix)
            }
        };
        let depth = cell.depth.unwrap_or_else(|| self.default_depth());
        let rankings = batch_search(&queries, &index, cell.metric, depth, &self.exclusions())?;
        let report = score(&rankings, &self.gt)?;
        let metric_warnings = rankings.iter().map(|r| r.warnings).sum();
        Ok(Evaluation {
            report,
            rankings,
            normalization_warnings,
            metric_warnings,
        })
    }
}

/// Rows and columns of a grid run.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub schemes: Vec<Scheme>,
    pub metrics: Vec<MetricId>,
    pub label: String,
    pub q_low: f64,
    pub q_high: f64,
    pub formula: NormFormula,
    pub depth: Option<Depth>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            schemes: Scheme::GRID.to_vec(),
            metrics: MetricId::ALL.to_vec(),
            label: "descriptors".into(),
            q_low: NormalizationSpec::DEFAULT_Q_LOW,
            q_high: NormalizationSpec::DEFAULT_Q_HIGH,
            formula: NormFormula::Standard,
            depth: None,
        }
    }
}

impl GridSpec {
    pub fn cell(&self, scheme: Scheme, metric: MetricId) -> Result<CellConfig> {
        Ok(CellConfig {
            metric,
            norm: NormalizationSpec::new(scheme)
                .with_quantiles(self.q_low, self.q_high)?
                .with_formula(self.formula),
            depth: self.depth,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub scheme: Scheme,
    pub metric: MetricId,
    pub outcome: std::result::Result<EvalReport, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub label: String,
    pub protocol: Protocol,
    pub schemes: Vec<Scheme>,
    pub metrics: Vec<MetricId>,
    /// Row-major: scheme by scheme, metrics in column order.
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }

    /// Index of the highest-scoring cell; the earliest one wins ties.
    pub fn best(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.cells.iter().enumerate() {
            if let Ok(r) = &c.outcome {
                if best.is_none_or(|(_, b)| r.aggregate > b) {
                    best = Some((i, r.aggregate));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    fn format_score(&self, v: f64) -> String {
        match self.protocol {
            Protocol::Map => format!("{v:.2}"),
            Protocol::Ns => format!("{v:.3}"),
        }
    }

    /// Aligned text table; the best cell carries a trailing `*`.
    pub fn to_table(&self) -> String {
        let best = self.best();
        let row_w = self
            .schemes
            .iter()
            .map(|s| s.label().len())
            .chain([self.label.len()])
            .max()
            .unwrap_or(0);
        let col_w = 9;
        let mut out = String::new();
        let _ = write!(out, "{:<row_w$}", self.label);
        for m in &self.metrics {
            let _ = write!(out, " {:>col_w$}", m.short_label());
        }
        out.push('\n');
        for (r, scheme) in self.schemes.iter().enumerate() {
            let _ = write!(out, "{:<row_w$}", scheme.label());
            for c in 0..self.metrics.len() {
                let idx = r * self.metrics.len() + c;
                let text = match &self.cells[idx].outcome {
                    Ok(rep) => {
                        let mark = if best == Some(idx) { "*" } else { " " };
                        format!("{}{mark}", self.format_score(rep.aggregate))
                    }
                    Err(_) => "ERR ".to_string(),
                };
                let _ = write!(out, " {text:>col_w$}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let best = self.best();
        let mut out = String::from("label,normalization,metric,protocol,score,best,error\n");
        for (i, c) in self.cells.iter().enumerate() {
            let (score, err) = match &c.outcome {
                Ok(r) => (format!("{}", r.aggregate), String::new()),
                Err(e) => (String::new(), e.replace(['"', '\n'], "'")),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},\"{}\"",
                csv_field(&self.label),
                c.scheme.name(),
                c.metric.name(),
                self.protocol.name(),
                score,
                u8::from(best == Some(i)),
                err
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Runs every (scheme, metric) cell; failing cells are recorded, not fatal.
pub fn run_grid(exp: &Experiment, spec: &GridSpec, parallel_cells: bool) -> GridResult {
    let pairs: Vec<(Scheme, MetricId)> = spec
        .schemes
        .iter()
        .flat_map(|&s| spec.metrics.iter().map(move |&m| (s, m)))
        .collect();
    let run = |&(scheme, metric): &(Scheme, MetricId)| GridCell {
        scheme,
        metric,
        outcome: spec
            .cell(scheme, metric)
            .and_then(|cell| exp.evaluate(cell))
            .map(|e| e.report)
            .map_err(|e| e.to_string()),
    };
    let cells = if parallel_cells {
        pairs.par_iter().map(run).collect()
    } else {
        pairs.iter().map(run).collect()
    };
    GridResult {
        label: spec.label.clone(),
        protocol: exp.ground_truth().protocol,
        schemes: spec.schemes.clone(),
        metrics: spec.metrics.clone(),
        cells,
    }
}

// ---------------------------------------------------------------------------
// argument parsing

#[derive(Debug, Parser)]
#[command(
    name = "vitriever",
    version,
    about = "Exhaustive descriptor retrieval and benchmark scoring"
)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "VITRIEVER_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a text listing (or re-emit a binary store) into a validated store.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a normalizer and write the normalized store.
    Normalize {
        input: PathBuf,
        #[command(flatten)]
        norm: NormArgs,
        /// Store to fit on (defaults to the input).
        #[arg(long, conflicts_with = "normalizer")]
        fit: Option<PathBuf>,
        /// Previously saved normalizer sidecar to apply instead of fitting.
        #[arg(long)]
        normalizer: Option<PathBuf>,
        #[arg(long)]
        save_normalizer: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the index for each query and dump TREC-style lines.
    Search {
        #[command(flatten)]
        stores: StoreArgs,
        #[arg(long, default_value = "cosine")]
        metric: MetricId,
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long, default_value = "10")]
        k: Depth,
        /// Drop each query's own id from its ranking.
        #[arg(long)]
        exclude_self: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score one normalization × metric configuration.
    Evaluate {
        #[command(flatten)]
        stores: StoreArgs,
        #[command(flatten)]
        truth: TruthArgs,
        #[arg(long, default_value = "cosine")]
        metric: MetricId,
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long)]
        k: Option<Depth>,
        /// Machine-readable report (`<query> <score>` + `AGGREGATE`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rankings in TREC-style text.
        #[arg(long)]
        rankings: Option<PathBuf>,
    },
    /// Score every normalization × metric cell.
    Grid {
        #[command(flatten)]
        stores: StoreArgs,
        #[command(flatten)]
        truth: TruthArgs,
        /// Comma-separated schemes (default: the five table rows).
        #[arg(long, value_delimiter = ',')]
        norms: Vec<Scheme>,
        /// Comma-separated metrics (default: all seven).
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<MetricId>,
        #[arg(long, default_value = "descriptors")]
        label: String,
        #[arg(long, value_parser = parse_quantiles, default_value = "0.25,0.75")]
        robust_quantiles: (f64, f64),
        #[arg(long)]
        as_printed: bool,
        #[arg(long)]
        k: Option<Depth>,
        #[arg(long)]
        parallel_cells: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct StoreArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Query store, or SAME to query with index rows.
    #[arg(long)]
    pub queries: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TruthArgs {
    #[arg(long)]
    pub layout: DatasetLayout,
    /// Ground-truth directory (oxford, paris) or file (json).
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NormArgs {
    #[arg(long, default_value = "none")]
    pub norm: Scheme,
    #[arg(long, value_parser = parse_quantiles, default_value = "0.25,0.75")]
    pub robust_quantiles: (f64, f64),
    /// Use signed-sum L1 and square-root-free L2 denominators.
    #[arg(long)]
    pub as_printed: bool,
}

impl NormArgs {
    pub fn spec(&self) -> Result<NormalizationSpec> {
        let formula = if self.as_printed {
            NormFormula::AsPrinted
        } else {
            NormFormula::Standard
        };
        Ok(NormalizationSpec::new(self.norm)
            .with_quantiles(self.robust_quantiles.0, self.robust_quantiles.1)?
            .with_formula(formula))
    }
}

fn parse_quantiles(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected <low,high>")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad quantile {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad quantile {hi:?}"))?;
    Ok((lo, hi))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

/// Converts a text listing or binary store at `input` into a store at `out`.
pub fn cmd_ingest(input: &Path, out: &Path) -> Result<(usize, usize)> {
    let bytes = fs::read(input).map_err(|e| Error::io(input, e))?;
    let (matrix, ids) = if store::looks_like_store(&bytes) {
        store::decode_store(&bytes)?
    } else {
        let text = String::from_utf8(bytes).map_err(|_| crate::error::StoreError::TextParse {
            line: 0,
            message: "input is neither a binary store nor UTF-8 text".into(),
        })?;
        store::parse_text(&text)?
    };
    store::write_store(&matrix, &ids, out)?;
    Ok((matrix.count(), matrix.dim()))
}

/// Loads, evaluates one cell, returns the evaluation.
pub fn cmd_evaluate(
    index: &Path,
    queries: Option<&Path>,
    layout: DatasetLayout,
    gt: Option<&Path>,
    cell: CellConfig,
) -> Result<Evaluation> {
    Experiment::load(index, queries, layout, gt)?.evaluate(cell)
}

pub fn cmd_grid(
    index: &Path,
    queries: Option<&Path>,
    layout: DatasetLayout,
    gt: Option<&Path>,
    spec: &GridSpec,
    parallel_cells: bool,
) -> Result<GridResult> {
    Ok(run_grid(
        &Experiment::load(index, queries, layout, gt)?,
        spec,
        parallel_cells,
    ))
}

/// Executes a parsed command line. Returns `Ok(false)` when the command
/// completed but reported errors (failing grid cells).
pub fn run(cli: Cli, stdout: &mut impl Write, stderr: &mut impl Write) -> Result<bool> {
    match cli.command {
        Command::Ingest { input, out } => {
            let (n, d) = cmd_ingest(&input, &out)?;
            writeln!(stdout, "wrote {} ({n} descriptors, dim {d})", out.display()).map_err(stdout_err)?;
        }
        Command::Normalize {
            input,
            norm,
            fit,
            normalizer,
            save_normalizer,
            out,
        } => {
            let (matrix, ids) = store::read_store(&input)?;
            let fitted = match normalizer {
                Some(p) => FittedNormalizer::load(p)?,
                None => {
                    let reference = match &fit {
                        Some(p) => store::read_store(p)?.0,
                        None => matrix.clone(),
                    };
                    FittedNormalizer::fit(norm.spec()?, &reference)?
                }
            };
            let normalized = fitted.apply(&matrix)?;
            if normalized.degenerate > 0 {
                writeln!(
                    stderr,
                    "warning: {} degenerate rows/columns left unscaled",
                    normalized.degenerate
                )
                .map_err(stdout_err)?;
            }
            store::write_store(&normalized.matrix, &ids, &out)?;
            if let Some(p) = save_normalizer {
                fitted.save(p)?;
            }
            writeln!(stdout, "wrote {}", out.display()).map_err(stdout_err)?;
        }
        Command::Search {
            stores,
            metric,
            norm,
            k,
            exclude_self,
            out,
        } => {
            let index = DescriptorSet::open(&stores.index)?;
            let queries = match QuerySource::from_arg(stores.queries.as_deref())? {
                QuerySource::Same => index.clone(),
                QuerySource::Store(s) => s,
            };
            let fitted = FittedNormalizer::fit(norm.spec()?, index.matrix())?;
            let index_n = index.with_matrix(fitted.apply(index.matrix())?.matrix);
            let queries_n = queries.with_matrix(fitted.apply(queries.matrix())?.matrix);
            let exclusions: Exclusions = if exclude_self {
                queries
                    .ids()
                    .iter()
                    .map(|id| (id.to_string(), HashSet::from([id.to_string()])))
                    .collect()
            } else {
                Exclusions::new()
            };
            let rankings = batch_search(&queries_n, &index_n, metric, k, &exclusions)?;
            let mut buf = Vec::new();
            write_rankings(&rankings, &mut buf).map_err(stdout_err)?;
            match out {
                Some(p) => write_file(&p, buf)?,
                None => stdout.write_all(&buf).map_err(stdout_err)?,
            }
        }
        Command::Evaluate {
            stores,
            truth,
            metric,
            norm,
            k,
            out,
            rankings,
        } => {
            let cell = CellConfig {
                metric,
                norm: norm.spec()?,
                depth: k,
            };
            let ev = cmd_evaluate(
                &stores.index,
                stores.queries.as_deref(),
                truth.layout,
                truth.gt.as_deref(),
                cell,
            )?;
            if ev.normalization_warnings + ev.metric_warnings > 0 {
                writeln!(
                    stderr,
                    "warning: {} degenerate normalization denominators, {} undefined distances",
                    ev.normalization_warnings, ev.metric_warnings
                )
                .map_err(stdout_err)?;
            }
            ev.report.write_table(stdout).map_err(stdout_err)?;
            if let Some(p) = out {
                let mut buf = Vec::new();
                ev.report.write_machine(&mut buf).map_err(stdout_err)?;
                write_file(&p, buf)?;
            }
            if let Some(p) = rankings {
                let mut buf = Vec::new();
                write_rankings(&ev.rankings, &mut buf).map_err(stdout_err)?;
                write_file(&p, buf)?;
            }
        }
        Command::Grid {
            stores,
            truth,
            norms,
            metrics,
            label,
            robust_quantiles,
            as_printed,
            k,
            parallel_cells,
            out,
            csv,
        } => {
            let defaults = GridSpec::default();
            let spec = GridSpec {
                schemes: if norms.is_empty() { defaults.schemes } else { norms },
                metrics: if metrics.is_empty() { defaults.metrics } else { metrics },
                label,
                q_low: robust_quantiles.0,
                q_high: robust_quantiles.1,
                formula: if as_printed {
                    NormFormula::AsPrinted
                } else {
                    NormFormula::Standard
                },
                depth: k,
            };
            let grid = cmd_grid(
                &stores.index,
                stores.queries.as_deref(),
                truth.layout,
                truth.gt.as_deref(),
                &spec,
                parallel_cells,
            )?;
            let table = grid.to_table();
            stdout.write_all(table.as_bytes()).map_err(stdout_err)?;
            for c in grid.cells.iter() {
                if let Err(e) = &c.outcome {
                    writeln!(stderr, "error: cell {} / {}: {e}", c.scheme.label(), c.metric.name())
                        .map_err(stdout_err)?;
                }
            }
            if let Some(p) = out {
                write_file(&p, &table)?;
            }
            if let Some(p) = csv {
                write_file(&p, grid.to_csv())?;
            }
            return Ok(grid.failures() == 0);
        }
    }
    Ok(true)
}

/// Configures the global thread pool; call once before [`run`].
pub fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads.filter(|&n| n > 0) {
        // a pool that is already built keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
