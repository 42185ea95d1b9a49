//! File ingestion, task dispatch and report writing behind the `qpca` binary.
//!
//! A report is a deterministic function of the inputs and the seed: it holds
//! no timings, paths or clocks. Wall-clock stage timings go to a sidecar file
//! next to it so that reruns stay byte-identical.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::apps::{
    lssvm_classify, lssvm_train, qlr_predict, qlr_state_demo, qsvm_state_demo, training_accuracy, FeatureSpace,
    LabeledDataset, LssvmModel, RegressionPrediction, StateDemo,
};
use crate::error::{Error, Result};
use crate::pca::{svd_decompose, DataMatrix, SpectralModel};
use crate::pipeline::{
    beta_error_sweep, derive_seed, error_scaling_experiment, ledger_predict, run_pipeline, success_sweep,
    AnchorProfile, CompressionReport, LedgerInputs, Mode, PipelineConfig, ResourceLedger, ScalingConfig, ScalingReport,
    ScalingRow, Spectrum, SuccessPoint, Target,
};
use crate::qram::build_tree;

/// Perturbation grid for the per-dataset infidelity sweep.
pub const SWEEP_GRID: [f64; 4] = [0.0, 0.02, 0.04, 0.08];

const STREAM_DEMO: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Compress,
    Qsvm,
    Qlr,
    Scaling,
    Ledger,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compress" => Ok(Task::Compress),
            "qsvm" => Ok(Task::Qsvm),
            "qlr" => Ok(Task::Qlr),
            "scaling" => Ok(Task::Scaling),
            "ledger" => Ok(Task::Ledger),
            _ => Err(Error::InvalidInput(format!("unknown task `{s}`"))),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Mode::Ideal),
            "quantized" => Ok(Mode::Quantized),
            "sampled" => Ok(Mode::Sampled),
            _ => Err(Error::InvalidInput(format!("unknown mode `{s}`"))),
        }
    }
}

/// Everything one invocation needs. Row indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(skip)]
    pub input: Option<PathBuf>,
    #[serde(skip)]
    pub labels: Option<PathBuf>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub plot_dir: Option<PathBuf>,
    pub task: Task,
    pub theta: f64,
    pub bits: usize,
    pub mode: Mode,
    pub eps_beta: f64,
    pub shots: u64,
    pub seed: u64,
    pub subset: Option<Vec<usize>>,
    pub single: Option<usize>,
    pub anchor: Option<usize>,
    pub gamma: f64,
    /// Ledger-only overrides; defaults come from the data and `bits`.
    pub eps_lambda: Option<f64>,
    pub dim: Option<usize>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub success_probability: Option<f64>,
    /// Extra query point for the application tasks.
    pub query: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn new(task: Task, out: impl Into<PathBuf>) -> Self {
        let p = PipelineConfig::default();
        Self {
            input: None,
            labels: None,
            out: out.into(),
            plot_dir: None,
            task,
            theta: p.theta,
            bits: p.bits,
            mode: p.mode,
            eps_beta: p.eps_beta,
            shots: p.shots,
            seed: p.seed,
            subset: None,
            single: None,
            anchor: None,
            gamma: crate::apps::DEFAULT_GAMMA,
            eps_lambda: None,
            dim: None,
            rows: None,
            cols: None,
            success_probability: None,
            query: None,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            theta: self.theta,
            bits: self.bits,
            mode: self.mode,
            eps_beta: self.eps_beta,
            shots: self.shots,
            seed: self.seed,
            ..PipelineConfig::default()
        }
    }

    fn target(&self) -> Result<Target> {
        match (&self.subset, self.single) {
            (Some(_), Some(_)) => Err(Error::InvalidInput("choose either a subset or a single row".into())),
            (Some(s), None) => Ok(Target::Subset(s.clone())),
            (None, Some(i)) => Ok(Target::Single(i)),
            (None, None) => Ok(Target::Full),
        }
    }
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn parse_value(field: &str, line: usize, column: usize) -> Result<f64> {
    let t = field.trim();
    let v: f64 = t
        .parse()
        .map_err(|_| parse_error(line, column, format!("`{t}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(line, column, format!("`{t}` is not finite")));
    }
    Ok(v)
}

/// Data lines with their 1-based line numbers, skipping blank lines and
/// `#` comments.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

/// Parses comma-separated rows. Errors carry the 1-based line and field.
pub fn parse_csv(text: &str) -> Result<DataMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut last_line = 0;
    for (line, l) in data_lines(text) {
        last_line = line;
        let row = l
            .split(',')
            .enumerate()
            .map(|(c, f)| parse_value(f, line, c + 1))
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_error(
                    line,
                    row.len().min(w) + 1,
                    format!("expected {w} fields, found {}", row.len()),
                ))
            }
            _ => {}
        }
        if row.iter().all(|&v| v == 0.0) {
            return Err(parse_error(line, 1, "row is identically zero"));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_error(last_line + 1, 1, "no data rows"));
    }
    DataMatrix::from_rows(&rows)
}

pub fn ingest_csv(path: &Path) -> Result<DataMatrix> {
    parse_csv(&fs::read_to_string(path)?)
}

/// One finite value per line; the count must equal `expected`.
pub fn parse_labels(text: &str, expected: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut last_line = 0;
    for (line, l) in data_lines(text) {
        last_line = line;
        out.push(parse_value(l, line, 1)?);
    }
    if out.len() != expected {
        return Err(parse_error(
            last_line + 1,
            1,
            format!("expected {expected} labels, found {}", out.len()),
        ));
    }
    Ok(out)
}

pub fn ingest_labels(path: &Path, expected: usize) -> Result<Vec<f64>> {
    parse_labels(&fs::read_to_string(path)?, expected)
}

/// Writes rows with shortest round-trip formatting, so ingesting the file
/// reproduces the matrix bit for bit.
pub fn write_csv(path: &Path, x: &DataMatrix) -> Result<()> {
    let mut s = String::new();
    for i in 0..x.rows() {
        let row: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// Writes via a temporary sibling and a rename, so a failed run never leaves
/// a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub variance_proportions: Vec<f64>,
    pub threshold: f64,
    pub selected_dim: usize,
    pub variance_captured: f64,
    pub anchor_index: usize,
}

impl ModelSummary {
    fn new(x: &DataMatrix, m: &SpectralModel) -> Self {
        Self {
            rows: x.rows(),
            cols: x.cols(),
            rank: m.rank(),
            singular_values: m.singular_values().to_vec(),
            variance_proportions: m.variance_proportions().to_vec(),
            threshold: m.threshold(),
            selected_dim: m.selected_dim(),
            variance_captured: m.variance_captured(),
            anchor_index: m.anchor_index(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionSection {
    pub anchor_draws: Vec<usize>,
    pub spectrum: Spectrum,
    pub anchor: AnchorProfile,
    pub result: CompressionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifiedQuery {
    /// Training row, or `None` for an explicit query point.
    pub row: Option<usize>,
    pub original: f64,
    pub compressed: f64,
    pub exact: StateDemo,
    pub sampled: StateDemo,
    /// The sampled sign matches the classical compressed-space sign, or the
    /// estimate is flagged inconclusive.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QsvmSection {
    pub compressed_dim: usize,
    pub original_model: LssvmModel,
    pub compressed_model: LssvmModel,
    pub original_accuracy: f64,
    pub compressed_accuracy: f64,
    pub agreement: f64,
    pub inconclusive: usize,
    pub queries: Vec<ClassifiedQuery>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressedQuery {
    pub row: Option<usize>,
    pub original: RegressionPrediction,
    pub compressed: RegressionPrediction,
    pub exact: StateDemo,
    pub sampled: StateDemo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QlrSection {
    pub compressed_dim: usize,
    pub forms_agree: bool,
    pub max_form_gap: f64,
    pub max_space_gap: f64,
    pub queries: Vec<RegressedQuery>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotData {
    /// `(component, λ_j)`.
    pub scree: Vec<(usize, f64)>,
    pub infidelity_vs_eps: Vec<ScalingRow>,
    pub success_vs_d: Vec<SuccessPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compression: Option<CompressionSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qsvm: Option<QsvmSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qlr: Option<QlrSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ledger: Option<ResourceLedger>,
    pub plots: PlotData,
    /// File name of the timings sidecar.
    pub timings_file: String,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }
}

/// Wall-clock milliseconds per stage, in execution order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
    pub total_ms: f64,
}

struct Clock {
    start: Instant,
    last: Instant,
    timings: Timings,
}

impl Clock {
    fn new() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            last: now,
            timings: Timings::default(),
        }
    }

    fn lap(&mut self, stage: impl Display) {
        let now = Instant::now();
        self.timings
            .stages
            .push((stage.to_string(), (now - self.last).as_secs_f64() * 1e3));
        self.last = now;
    }

    fn finish(mut self) -> Timings {
        self.timings.total_ms = self.start.elapsed().as_secs_f64() * 1e3;
        self.timings
    }
}

pub fn timings_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".timings.json");
    out.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: Report,
    pub timings: Timings,
}

fn require_input(cfg: &RunConfig) -> Result<DataMatrix> {
    let path = cfg
        .input
        .as_deref()
        .ok_or_else(|| Error::InvalidInput(format!("task `{:?}` needs an input file", cfg.task).to_lowercase()))?;
    ingest_csv(path)
}

fn require_labels(cfg: &RunConfig, rows: usize) -> Result<Vec<f64>> {
    let path = cfg
        .labels
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("this task needs a labels file".into()))?;
    ingest_labels(path, rows)
}

fn scree(m: &SpectralModel) -> Vec<(usize, f64)> {
    m.variance_proportions().iter().copied().enumerate().collect()
}

/// Builds the report without touching the filesystem beyond reading inputs.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    let mut clock = Clock::new();
    let pcfg = cfg.pipeline();
    pcfg.validate()?;
    let mut report = Report {
        tool: "qpca",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        model: None,
        compression: None,
        qsvm: None,
        qlr: None,
        scaling: None,
        ledger: None,
        plots: PlotData {
            scree: Vec::new(),
            infidelity_vs_eps: Vec::new(),
            success_vs_d: Vec::new(),
        },
        timings_file: timings_path(&cfg.out)
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned(),
    };
    let x = match cfg.task {
        Task::Scaling => None,
        Task::Ledger => cfg.input.as_deref().map(ingest_csv).transpose()?,
        _ => Some(require_input(cfg)?),
    };
    clock.lap("ingest");
    match cfg.task {
        Task::Compress => {
            let x = x.expect("input is required");
            let run = run_pipeline(&x, cfg.anchor, &cfg.target()?, &pcfg)?;
            clock.lap("pipeline");
            let tree = build_tree(&x)?;
            report.plots.scree = scree(&run.model);
            report.plots.infidelity_vs_eps =
                beta_error_sweep(&tree, &run.rho, &run.spectrum, &run.profile, &pcfg, &SWEEP_GRID)?;
            report.plots.success_vs_d = success_sweep(&tree, &run.rho, &run.spectrum, run.profile.anchor_index, &pcfg)?;
            clock.lap("sweeps");
            report.model = Some(ModelSummary::new(&x, &run.model));
            report.ledger = Some(run.report.ledger.clone());
            report.compression = Some(CompressionSection {
                anchor_draws: run.anchor_draws,
                spectrum: run.spectrum,
                anchor: run.profile,
                result: run.report,
            });
        }
        Task::Qsvm => {
            let x = x.expect("input is required");
            let labels = require_labels(cfg, x.rows())?;
            let model = svd_decompose(&x, cfg.theta, cfg.anchor.unwrap_or(0))?;
            report.plots.scree = scree(&model);
            report.model = Some(ModelSummary::new(&x, &model));
            report.qsvm = Some(qsvm_section(cfg, x, labels)?);
            clock.lap("qsvm");
        }
        Task::Qlr => {
            let x = x.expect("input is required");
            let targets = require_labels(cfg, x.rows())?;
            let model = svd_decompose(&x, cfg.theta, cfg.anchor.unwrap_or(0))?;
            report.plots.scree = scree(&model);
            report.model = Some(ModelSummary::new(&x, &model));
            report.qlr = Some(qlr_section(cfg, x, targets)?);
            clock.lap("qlr");
        }
        Task::Scaling => {
            let sc = ScalingConfig {
                base_seed: cfg.seed,
                d: cfg.dim.unwrap_or(ScalingConfig::default().d),
                ..ScalingConfig::default()
            };
            let r = error_scaling_experiment(&sc)?;
            report.plots.infidelity_vs_eps = r.rows.clone();
            report.scaling = Some(r);
            clock.lap("scaling");
        }
        Task::Ledger => {
            let model = x.as_ref().map(|x| svd_decompose(x, cfg.theta, 0)).transpose()?;
            if let (Some(x), Some(m)) = (&x, &model) {
                report.plots.scree = scree(m);
                report.model = Some(ModelSummary::new(x, m));
            }
            let missing = |what: &str| Error::InvalidInput(format!("ledger needs {what} or an input file"));
            let d = cfg
                .dim
                .or(model.as_ref().map(|m| m.selected_dim()))
                .ok_or_else(|| missing("--dim"))?;
            let inputs = LedgerInputs {
                rows: cfg
                    .rows
                    .or(x.as_ref().map(|x| x.rows()))
                    .ok_or_else(|| missing("--rows"))?,
                cols: cfg
                    .cols
                    .or(x.as_ref().map(|x| x.cols()))
                    .ok_or_else(|| missing("--cols"))?,
                d,
                eps_lambda: cfg.eps_lambda.unwrap_or(pcfg.phase().eps_lambda),
                eps_beta: cfg.eps_beta,
                success_probability: cfg.success_probability.unwrap_or(1.0 / d.max(1) as f64),
            };
            report.ledger = Some(ledger_predict(inputs, &pcfg.ledger)?);
            clock.lap("ledger");
        }
    }
    Ok(RunOutcome {
        report,
        timings: clock.finish(),
    })
}

fn queries(cfg: &RunConfig, x: &DataMatrix) -> Result<Vec<(Option<usize>, Vec<f64>)>> {
    let mut q: Vec<(Option<usize>, Vec<f64>)> = (0..x.rows()).map(|i| (Some(i), x.row(i).to_vec())).collect();
    if let Some(extra) = &cfg.query {
        if extra.len() != x.cols() {
            return Err(Error::InvalidInput(format!(
                "query has {} features, data has {}",
                extra.len(),
                x.cols()
            )));
        }
        q.push((None, extra.clone()));
    }
    Ok(q)
}

fn qsvm_section(cfg: &RunConfig, x: DataMatrix, labels: Vec<f64>) -> Result<QsvmSection> {
    let compressed = FeatureSpace::compressed(&x, cfg.theta)?;
    let queries = queries(cfg, &x)?;
    let data = LabeledDataset::classification(x, labels, cfg.gamma)?;
    let original_model = lssvm_train(&data, &FeatureSpace::Original)?;
    let compressed_model = lssvm_train(&data, &compressed)?;
    let original_accuracy = training_accuracy(&original_model, data.targets())?;
    let compressed_accuracy = training_accuracy(&compressed_model, data.targets())?;
    let mut out = Vec::with_capacity(queries.len());
    for (k, (row, q)) in queries.into_iter().enumerate() {
        let original = lssvm_classify(&original_model, &FeatureSpace::Original, &q)?;
        let compressed_label = lssvm_classify(&compressed_model, &compressed, &q)?;
        let exact = qsvm_state_demo(&compressed_model, &compressed, &q, None, 0)?;
        let seed = derive_seed(cfg.seed, STREAM_DEMO + 16 * k as u64);
        let sampled = qsvm_state_demo(&compressed_model, &compressed, &q, Some(cfg.shots), seed)?;
        let consistent = sampled.inconclusive || crate::apps::sign(sampled.rescaled) == compressed_label;
        out.push(ClassifiedQuery {
            row,
            original,
            compressed: compressed_label,
            exact,
            sampled,
            consistent,
        });
    }
    let agreement = out.iter().filter(|q| q.original == q.compressed).count() as f64 / out.len() as f64;
    Ok(QsvmSection {
        compressed_dim: compressed.dim(data.points()),
        original_model,
        compressed_model,
        original_accuracy,
        compressed_accuracy,
        agreement,
        inconclusive: out.iter().filter(|q| q.sampled.inconclusive).count(),
        queries: out,
    })
}

fn qlr_section(cfg: &RunConfig, x: DataMatrix, targets: Vec<f64>) -> Result<QlrSection> {
    let compressed = FeatureSpace::compressed(&x, cfg.theta)?;
    let queries = queries(cfg, &x)?;
    let data = LabeledDataset::regression(x, targets, cfg.gamma)?;
    let mut out = Vec::with_capacity(queries.len());
    for (k, (row, q)) in queries.into_iter().enumerate() {
        let original = qlr_predict(&data, &q, &FeatureSpace::Original)?;
        let compressed_pred = qlr_predict(&data, &q, &compressed)?;
        let exact = qlr_state_demo(&data, &q, &compressed, None, 0)?;
        let seed = derive_seed(cfg.seed, STREAM_DEMO + 16 * k as u64);
        let sampled = qlr_state_demo(&data, &q, &compressed, Some(cfg.shots), seed)?;
        out.push(RegressedQuery {
            row,
            original,
            compressed: compressed_pred,
            exact,
            sampled,
        });
    }
    let max_of = |f: &dyn Fn(&RegressedQuery) -> f64| out.iter().map(f).fold(0.0, f64::max);
    Ok(QlrSection {
        compressed_dim: compressed.dim(data.points()),
        forms_agree: out.iter().all(|q| q.original.agree && q.compressed.agree),
        max_form_gap: max_of(&|q| {
            (q.original.normal_form - q.original.svd_form)
                .abs()
                .max((q.compressed.normal_form - q.compressed.svd_form).abs())
        }),
        max_space_gap: max_of(&|q| (q.original.svd_form - q.compressed.svd_form).abs()),
        queries: out,
    })
}

/// Runs the task and writes the report, its timings sidecar, and plot data
/// if a plot directory is configured. Nothing is written on failure.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let outcome = execute(cfg)?;
    write_atomic(&cfg.out, outcome.report.to_json().as_bytes())?;
    let timings = serde_json::to_string_pretty(&outcome.timings).expect("timings are serializable");
    write_atomic(&timings_path(&cfg.out), timings.as_bytes())?;
    if let Some(dir) = &cfg.plot_dir {
        emit_plot_data(&outcome.report, dir)?;
    }
    Ok(outcome)
}

fn write_table(path: &Path, header: &str, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut s = format!("# {header}\n");
    for l in lines {
        s.push_str(&l);
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// Whitespace-separated tables with a `#` header line:
/// `scree.dat`, `infidelity_vs_eps.dat` and `success_vs_d.dat`. Values use
/// shortest round-trip formatting.
pub fn emit_plot_data(report: &Report, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let p = &report.plots;
    write_table(
        &dir.join("scree.dat"),
        "component lambda",
        p.scree.iter().map(|(j, l)| format!("{j} {l}")),
    )?;
    write_table(
        &dir.join("infidelity_vs_eps.dat"),
        "eps_beta eps mean_deviation max_deviation mean_infidelity max_infidelity",
        p.infidelity_vs_eps.iter().map(|r| {
            format!(
                "{} {} {} {} {} {}",
                r.eps_beta, r.eps, r.mean_deviation, r.max_deviation, r.mean_infidelity, r.max_infidelity
            )
        }),
    )?;
    write_table(
        &dir.join("success_vs_d.dat"),
        "d success_probability rotation_constant variance_captured",
        p.success_vs_d.iter().map(|s| {
            format!(
                "{} {} {} {}",
                s.d, s.success_probability, s.rotation_constant, s.variance_captured
            )
        }),
    )
}

/// Reads a table written by [`emit_plot_data`] back into rows of numbers.
pub fn read_plot_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    data_lines(&text)
        .map(|(line, l)| {
            l.split_whitespace()
                .enumerate()
                .map(|(c, f)| parse_value(f, line, c + 1))
                .collect()
        })
        .collect()
}

/// `{"error": {"code": …, "message": …}}` for the binary's stderr.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({ "error": { "code": e.code(), "message": e.to_string() } }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_positions_are_one_based() {
        let e = parse_csv("1,a\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, column: 2, .. }), "{e:?}");
        let e = parse_csv("# header\n1,2\n3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
        let e = parse_csv("1,2\n0,0\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, column: 1, .. }), "{e:?}");
        assert!(matches!(parse_csv("1,NaN\n"), Err(Error::Parse { column: 2, .. })));
        assert!(matches!(parse_csv("# only\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_accepts_header_and_spaces() {
        let x = parse_csv("# a,b\n 1, 2\n\n3,4.5\n").unwrap();
        assert_eq!((x.rows(), x.cols()), (2, 2));
        assert_eq!(x.get(1, 1), 4.5);
    }

    #[test]
    fn labels_must_match_rows() {
        assert_eq!(parse_labels("1\n-1\n", 2).unwrap(), vec![1.0, -1.0]);
        assert!(matches!(parse_labels("1\n", 2), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            parse_labels("1\nx\n", 2),
            Err(Error::Parse { line: 2, column: 1, .. })
        ));
    }

    #[test]
    fn names_round_trip() {
        for t in ["compress", "qsvm", "qlr", "scaling", "ledger"] {
            assert!(t.parse::<Task>().is_ok());
        }
        assert!("fast".parse::<Mode>().is_err());
    }

    #[test]
    fn sidecar_sits_next_to_report() {
        assert_eq!(timings_path(Path::new("a/r.json")), Path::new("a/r.json.timings.json"));
    }

    #[test]
    fn error_json_has_code() {
        let s = error_json(&Error::InvalidInput("x".into()));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["error"]["code"], "INVALID_INPUT");
    }
}
