//! Analysis over persisted runs: per-task metric verdicts, the verdict
//! tallies behind the stacked-bar summaries, the four mixed-effects
//! regressions, and report emission (JSON, CSV, plot data).
//!
//! A report is a pure function of (runs, persona sets, seed): rows are
//! sorted, maps are ordered, and nothing time-dependent is recorded, so two
//! invocations with the same inputs serialize to identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{AttributeKind, OrderingKind, PersonaSet};
use crate::error::{Error, Result};
use crate::lmm::{
    build_frame, coefficient_report, fit_reml, CoefficientRow, FormulaKind, Observation,
    CATEGORY_REFERENCE,
};
use crate::metrics::{
    expertise_advantage, fidelity, robustness, CorrectnessMatrix, MetricKind, MetricResult,
    Verdict, DEFAULT_RESAMPLES,
};
use crate::prompt::Strategy;
use crate::run::{read_manifest, read_records, RunManifest, RunRecord};

#[derive(Debug, Clone, Copy)]
pub struct AnalysisOptions {
    pub seed: u64,
    pub resamples: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            seed: 0,
            resamples: DEFAULT_RESAMPLES,
        }
    }
}

/// One run loaded back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub records: Vec<RunRecord>,
}

/// Read every `<strategy>.manifest.json` (and its records file) under a runs
/// directory.
pub fn load_runs(runs_dir: impl AsRef<Path>) -> Result<Vec<LoadedRun>> {
    let runs_dir = runs_dir.as_ref();
    let mut runs = Vec::new();
    let mut manifest_paths = Vec::new();
    let model_dirs =
        std::fs::read_dir(runs_dir).map_err(|e| Error::io(runs_dir.display().to_string(), e))?;
    for model_dir in model_dirs {
        let model_dir = model_dir.map_err(|e| Error::io(runs_dir.display().to_string(), e))?;
        if !model_dir.path().is_dir() {
            continue;
        }
        let task_dirs = std::fs::read_dir(model_dir.path())
            .map_err(|e| Error::io(model_dir.path().display().to_string(), e))?;
        for task_dir in task_dirs {
            let task_dir =
                task_dir.map_err(|e| Error::io(model_dir.path().display().to_string(), e))?;
            if !task_dir.path().is_dir() {
                continue;
            }
            let files = std::fs::read_dir(task_dir.path())
                .map_err(|e| Error::io(task_dir.path().display().to_string(), e))?;
            for file in files {
                let file =
                    file.map_err(|e| Error::io(task_dir.path().display().to_string(), e))?;
                let name = file.file_name().to_string_lossy().into_owned();
                if name.ends_with(".manifest.json") {
                    manifest_paths.push(file.path());
                }
            }
        }
    }
    manifest_paths.sort();
    for path in manifest_paths {
        let manifest = read_manifest(&path)?;
        if manifest.incomplete {
            return Err(Error::IncompleteRun(format!(
                "run {} ({}/{}/{}) is marked incomplete; re-invoke the run to resume from cache",
                manifest.run_id, manifest.model_name, manifest.task_id, manifest.strategy
            )));
        }
        let records_path = path
            .to_string_lossy()
            .replace(".manifest.json", ".jsonl")
            .into();
        let records = read_records(Path::new(&records_path as &String))?;
        runs.push(LoadedRun { manifest, records });
    }
    if runs.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no run manifests under {}",
            runs_dir.display()
        )));
    }
    Ok(runs)
}

// ---------------------------------------------------------------------------
// Report structure
// ---------------------------------------------------------------------------

/// One measured metric: which cell it belongs to, which category key it
/// tallies under, and what it targeted (a persona id or an ordering kind).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub task: String,
    pub strategy: Strategy,
    pub metric: MetricKind,
    /// Tally key, e.g. "advantage/static", "robustness/name",
    /// "fidelity/education".
    pub key: String,
    /// Persona id (advantage), irrelevant category (robustness), or
    /// ordering kind (fidelity).
    pub target: String,
    pub result: MetricResult,
}

/// Verdict tallies for one (model, strategy, metric key) over its tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub model: String,
    pub strategy: Strategy,
    pub key: String,
    pub positive: usize,
    pub negative: usize,
    pub non_significant: usize,
    pub n_tasks: usize,
    /// Advantage: positive or non-significant tasks. Fidelity: positive
    /// tasks. Robustness: non-significant tasks (no measurable effect of
    /// irrelevant attributes in either direction).
    pub success_rate: f64,
}

/// Instances whose response yielded no extractable answer, per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoAnswerCounts {
    pub model: String,
    pub task: String,
    pub strategy: Strategy,
    pub n_no_answer: usize,
    pub n_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RegressionOutcome {
    Fitted {
        coefficients: Vec<CoefficientRow>,
        sigma2_group: f64,
        sigma2_residual: f64,
        boundary: bool,
        n_observations: usize,
        n_groups: usize,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub name: String,
    pub formula: FormulaKind,
    pub outcome: RegressionOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: u64,
    pub resamples: usize,
    /// "model/task/strategy" -> records digest of the contributing run.
    pub run_digests: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub provenance: Provenance,
    pub metrics: Vec<MetricRow>,
    pub verdict_counts: Vec<VerdictCounts>,
    pub no_answer_counts: Vec<NoAnswerCounts>,
    pub regressions: Vec<RegressionReport>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<AnalysisReport> {
        serde_json::from_str(text).map_err(Error::from)
    }
}

// ---------------------------------------------------------------------------
// Analysis
// ---------------------------------------------------------------------------

/// Persona tally category for the persona-effect regression and advantage
/// keys.
fn persona_category(set: &PersonaSet, persona_id: &str) -> String {
    if let Some(p) = set.member(persona_id) {
        match p.attribute_kind {
            AttributeKind::NoPersona => CATEGORY_REFERENCE.to_string(),
            AttributeKind::Name => "name".to_string(),
            AttributeKind::Color => "color".to_string(),
            AttributeKind::Education => {
                let level = p.education_level.expect("education persona has a level");
                format!("edu-{}", level.level())
            }
            AttributeKind::Expertise => {
                if let Some(level) = p.specialization_level {
                    format!("exp-{level}")
                } else {
                    match p.domain_match.map(|d| d.level()) {
                        Some(2) => "exp".to_string(),
                        Some(1) => "exp-related".to_string(),
                        _ => "exp-out-domain".to_string(),
                    }
                }
            }
        }
    } else {
        "unknown".to_string()
    }
}

/// Compute every metric, tally, and regression the runs support.
pub fn analyze(
    runs: &[LoadedRun],
    sets: &[&PersonaSet],
    options: &AnalysisOptions,
) -> Result<AnalysisReport> {
    if runs.is_empty() {
        return Err(Error::EmptySelection("no runs to analyze".into()));
    }
    let set_by_task: BTreeMap<&str, &PersonaSet> =
        sets.iter().map(|s| (s.task_id.as_str(), *s)).collect();

    let mut warnings = Vec::new();
    let mut run_digests = BTreeMap::new();
    let mut metric_rows = Vec::new();
    let mut no_answer_counts = Vec::new();
    // (model, task, strategy) -> matrix, kept for the regressions.
    let mut matrices: BTreeMap<(String, String, Strategy), CorrectnessMatrix> = BTreeMap::new();
    let mut model_meta: BTreeMap<String, (Option<String>, Option<f64>)> = BTreeMap::new();

    for run in runs {
        let manifest = &run.manifest;
        let key = format!(
            "{}/{}/{}",
            manifest.model_name, manifest.task_id, manifest.strategy
        );
        run_digests.insert(key.clone(), manifest.records_digest.clone());
        model_meta.insert(
            manifest.model_name.clone(),
            (
                manifest.config.model_family.clone(),
                manifest.config.model_size_b,
            ),
        );
        let set = set_by_task.get(manifest.task_id.as_str()).ok_or_else(|| {
            Error::EmptySelection(format!(
                "no persona set for task '{}' referenced by run {}",
                manifest.task_id, manifest.run_id
            ))
        })?;

        let matrix = CorrectnessMatrix::from_records(
            &run.records,
            &manifest.task_id,
            &set.no_persona().id,
        )?;

        let n_no_answer = run.records.iter().filter(|r| r.extracted.is_none()).count();
        no_answer_counts.push(NoAnswerCounts {
            model: manifest.model_name.clone(),
            task: manifest.task_id.clone(),
            strategy: manifest.strategy,
            n_no_answer,
            n_records: run.records.len(),
        });

        // Advantage of each task-aligned expert present in the run.
        let mut advantage_targets: Vec<(String, String)> = Vec::new();
        if let Some(expert) = set.static_expert() {
            if matrix.has_persona(&expert.id) {
                advantage_targets.push(("advantage/static".into(), expert.id.clone()));
            }
        }
        for p in &set.members {
            if p.is_dynamic() && matrix.has_persona(&p.id) {
                let level = p.specialization_level.expect("dynamic persona has a level");
                advantage_targets.push((format!("advantage/dynamic-{level}"), p.id.clone()));
            }
        }
        for (key, persona_id) in advantage_targets {
            let result = expertise_advantage(&matrix, &persona_id)?;
            metric_rows.push(MetricRow {
                model: manifest.model_name.clone(),
                task: manifest.task_id.clone(),
                strategy: manifest.strategy,
                metric: MetricKind::Advantage,
                key,
                target: persona_id,
            result,
            });
        }

        // Robustness per irrelevant category, names and colors separately.
        for (kind, label) in [(AttributeKind::Name, "name"), (AttributeKind::Color, "color")] {
            let ids: Vec<String> = set
                .irrelevant_of_kind(kind)
                .into_iter()
                .filter(|id| matrix.has_persona(id))
                .collect();
            if ids.is_empty() {
                continue;
            }
            let result = robustness(&matrix, ids.iter().map(String::as_str))?;
            metric_rows.push(MetricRow {
                model: manifest.model_name.clone(),
                task: manifest.task_id.clone(),
                strategy: manifest.strategy,
                metric: MetricKind::Robustness,
                key: format!("robustness/{label}"),
                target: label.to_string(),
                result,
            });
        }

        // Fidelity per ordering whose personas are all present.
        for ordering in &set.expected_orderings {
            if !ordering.all_ids().all(|id| matrix.has_persona(id)) {
                continue;
            }
            let result = fidelity(&matrix, ordering, options.resamples, options.seed)?;
            metric_rows.push(MetricRow {
                model: manifest.model_name.clone(),
                task: manifest.task_id.clone(),
                strategy: manifest.strategy,
                metric: MetricKind::Fidelity,
                key: format!("fidelity/{}", ordering.ordering_kind),
                target: ordering.ordering_kind.to_string(),
                result,
            });
        }

        matrices.insert(
            (
                manifest.model_name.clone(),
                manifest.task_id.clone(),
                manifest.strategy,
            ),
            matrix,
        );
    }

    metric_rows.sort_by(|a, b| {
        (&a.model, &a.task, a.strategy, &a.key).cmp(&(&b.model, &b.task, b.strategy, &b.key))
    });
    no_answer_counts.sort_by(|a, b| {
        (&a.model, &a.task, a.strategy).cmp(&(&b.model, &b.task, b.strategy))
    });

    let verdict_counts = tally_verdicts(&metric_rows);
    let regressions = run_regressions(&matrices, &metric_rows, &set_by_task, &model_meta);

    Ok(AnalysisReport {
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: options.seed,
            resamples: options.resamples,
            run_digests,
            warnings: {
                warnings.sort();
                warnings
            },
        },
        metrics: metric_rows,
        verdict_counts,
        no_answer_counts,
        regressions,
    })
}

fn tally_verdicts(rows: &[MetricRow]) -> Vec<VerdictCounts> {
    let mut tally: BTreeMap<(String, Strategy, String), (usize, usize, usize)> = BTreeMap::new();
    for row in rows {
        let entry = tally
            .entry((row.model.clone(), row.strategy, row.key.clone()))
            .or_default();
        match row.result.verdict {
            Verdict::Positive => entry.0 += 1,
            Verdict::Negative => entry.1 += 1,
            Verdict::NonSignificant => entry.2 += 1,
        }
    }
    tally
        .into_iter()
        .map(|((model, strategy, key), (positive, negative, non_significant))| {
            let n_tasks = positive + negative + non_significant;
            let successes = if key.starts_with("advantage/") {
                positive + non_significant
            } else if key.starts_with("fidelity/") {
                positive
            } else {
                non_significant
            };
            VerdictCounts {
                model,
                strategy,
                key,
                positive,
                negative,
                non_significant,
                n_tasks,
                success_rate: successes as f64 / n_tasks as f64,
            }
        })
        .collect()
}

fn run_regressions(
    matrices: &BTreeMap<(String, String, Strategy), CorrectnessMatrix>,
    metric_rows: &[MetricRow],
    set_by_task: &BTreeMap<&str, &PersonaSet>,
    model_meta: &BTreeMap<String, (Option<String>, Option<f64>)>,
) -> Vec<RegressionReport> {
    let mut reports = Vec::new();

    // Persona effect on score, Base strategy, treatment-coded against the
    // no-persona baseline.
    let mut category_obs = Vec::new();
    for ((model, task, strategy), matrix) in matrices {
        if *strategy != Strategy::Base {
            continue;
        }
        let set = set_by_task[task.as_str()];
        for (persona_id, accuracy) in matrix.accuracies() {
            category_obs.push(Observation {
                score: accuracy,
                model: model.clone(),
                task: task.clone(),
                category: Some(persona_category(set, &persona_id)),
                ..Default::default()
            });
        }
    }
    reports.push(fit_report(
        "persona_category".into(),
        FormulaKind::PersonaCategory,
        &category_obs,
    ));

    // Attribute-level regressions: one per ordinal attribute.
    for (label, kind) in [
        ("education", OrderingKind::Education),
        ("domain_match", OrderingKind::DomainMatch),
        ("specialization", OrderingKind::Specialization),
    ] {
        let mut obs = Vec::new();
        for ((model, task, strategy), matrix) in matrices {
            if *strategy != Strategy::Base {
                continue;
            }
            let set = set_by_task[task.as_str()];
            for p in &set.members {
                let level = match kind {
                    OrderingKind::Education => p.education_level.map(|l| l.level()),
                    OrderingKind::DomainMatch => p.domain_match.map(|l| l.level()),
                    OrderingKind::Specialization => p.specialization_level.map(|l| l.level()),
                };
                let Some(level) = level else { continue };
                if !matrix.has_persona(&p.id) {
                    continue;
                }
                obs.push(Observation {
                    score: matrix.accuracy(&p.id).expect("column present"),
                    model: model.clone(),
                    task: task.clone(),
                    level: Some(level as f64),
                    ..Default::default()
                });
            }
        }
        reports.push(fit_report(
            format!("attribute_level/{label}"),
            FormulaKind::AttributeLevel,
            &obs,
        ));
    }

    // Model-scale and strategy-effect regressions, one per metric key.
    let metric_keys: BTreeSet<&str> = metric_rows.iter().map(|r| r.key.as_str()).collect();
    for key in metric_keys {
        let scale_obs: Vec<Observation> = metric_rows
            .iter()
            .filter(|r| r.key == key && r.strategy == Strategy::Base)
            .filter_map(|r| {
                let (family, size_b) = model_meta.get(&r.model)?;
                Some(Observation {
                    score: r.result.value,
                    model: r.model.clone(),
                    task: r.task.clone(),
                    family: family.clone(),
                    size_b: *size_b,
                    ..Default::default()
                })
            })
            .filter(|o| o.family.is_some() && o.size_b.is_some())
            .collect();
        reports.push(fit_report(
            format!("model_scale/{key}"),
            FormulaKind::ModelScale,
            &scale_obs,
        ));

        let strategy_obs: Vec<Observation> = metric_rows
            .iter()
            .filter(|r| r.key == key)
            .map(|r| Observation {
                score: r.result.value,
                model: r.model.clone(),
                task: r.task.clone(),
                method: Some(r.strategy.as_str().to_string()),
                ..Default::default()
            })
            .collect();
        let distinct_methods: BTreeSet<&str> = strategy_obs
            .iter()
            .filter_map(|o| o.method.as_deref())
            .collect();
        if distinct_methods.len() < 2 {
            reports.push(RegressionReport {
                name: format!("strategy_effect/{key}"),
                formula: FormulaKind::StrategyEffect,
                outcome: RegressionOutcome::Skipped {
                    reason: "fewer than two strategies present".into(),
                },
            });
        } else {
            reports.push(fit_report(
                format!("strategy_effect/{key}"),
                FormulaKind::StrategyEffect,
                &strategy_obs,
            ));
        }
    }

    reports.sort_by(|a, b| a.name.cmp(&b.name));
    reports
}

fn fit_report(name: String, formula: FormulaKind, obs: &[Observation]) -> RegressionReport {
    let outcome = match build_frame(obs, formula).and_then(|frame| {
        let fit = fit_reml(&frame)?;
        Ok((frame, fit))
    }) {
        Ok((frame, fit)) => RegressionOutcome::Fitted {
            coefficients: coefficient_report(&fit),
            sigma2_group: fit.sigma2_group,
            sigma2_residual: fit.sigma2_residual,
            boundary: fit.boundary,
            n_observations: frame.n_observations(),
            n_groups: frame.n_groups(),
        },
        Err(e) => RegressionOutcome::Skipped {
            reason: e.to_string(),
        },
    };
    RegressionReport {
        name,
        formula,
        outcome,
    }
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    PlotData,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<ReportFormat> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "plotdata" => Ok(ReportFormat::PlotData),
            other => Err(Error::PreconditionViolation(format!(
                "unknown report format '{other}'"
            ))),
        }
    }
}

use std::str::FromStr;

/// Flat CSV row for one metric; `metric_rows_from_csv` reconstructs them
/// losslessly.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CsvMetricRow {
    model: String,
    task: String,
    strategy: Strategy,
    metric: MetricKind,
    key: String,
    target: String,
    value: f64,
    verdict: Verdict,
    p_value: Option<f64>,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
    witness: Option<String>,
    n_instances: usize,
    seed: Option<u64>,
}

impl From<&MetricRow> for CsvMetricRow {
    fn from(row: &MetricRow) -> Self {
        CsvMetricRow {
            model: row.model.clone(),
            task: row.task.clone(),
            strategy: row.strategy,
            metric: row.metric,
            key: row.key.clone(),
            target: row.target.clone(),
            value: row.result.value,
            verdict: row.result.verdict,
            p_value: row.result.p_value,
            ci_lo: row.result.ci95.map(|c| c.0),
            ci_hi: row.result.ci95.map(|c| c.1),
            witness: row.result.witness.clone(),
            n_instances: row.result.n_instances,
            seed: row.result.seed,
        }
    }
}

impl From<CsvMetricRow> for MetricRow {
    fn from(row: CsvMetricRow) -> Self {
        MetricRow {
            model: row.model,
            task: row.task,
            strategy: row.strategy,
            metric: row.metric,
            key: row.key,
            target: row.target,
            result: MetricResult {
                metric_kind: row.metric,
                value: row.value,
                verdict: row.verdict,
                p_value: row.p_value,
                ci95: match (row.ci_lo, row.ci_hi) {
                    (Some(lo), Some(hi)) => Some((lo, hi)),
                    _ => None,
                },
                witness: row.witness,
                n_instances: row.n_instances,
                seed: row.seed,
            },
        }
    }
}

pub fn metrics_to_csv(rows: &[MetricRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(CsvMetricRow::from(row))
            .map_err(|e| Error::parse("metrics.csv", e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::parse("metrics.csv", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn metric_rows_from_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.deserialize::<CsvMetricRow>() {
        let record = record.map_err(|e| Error::parse("metrics.csv", e.to_string()))?;
        rows.push(MetricRow::from(record));
    }
    Ok(rows)
}

fn verdict_counts_to_csv(counts: &[VerdictCounts]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in counts {
        writer
            .serialize(row)
            .map_err(|e| Error::parse("verdict_counts.csv", e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::parse("verdict_counts.csv", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn coefficients_to_csv(regressions: &[RegressionReport]) -> Result<String> {
    #[derive(Serialize)]
    struct Row<'a> {
        regression: &'a str,
        coefficient: &'a str,
        estimate: f64,
        ci_lo: f64,
        ci_hi: f64,
        significant: bool,
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    for regression in regressions {
        if let RegressionOutcome::Fitted { coefficients, .. } = &regression.outcome {
            for c in coefficients {
                writer
                    .serialize(Row {
                        regression: &regression.name,
                        coefficient: &c.name,
                        estimate: c.estimate,
                        ci_lo: c.ci_lo,
                        ci_hi: c.ci_hi,
                        significant: c.significant,
                    })
                    .map_err(|e| Error::parse("coefficients.csv", e.to_string()))?;
            }
        }
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::parse("coefficients.csv", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Write the report in the requested format; returns the files written.
pub fn emit(report: &AnalysisReport, format: ReportFormat, out_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut written = Vec::new();
    let mut write = |name: &str, body: String| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(path.display().to_string(), e))?;
        written.push(path);
        Ok(())
    };
    match format {
        ReportFormat::Json => {
            write("report.json", report.to_json())?;
        }
        ReportFormat::Csv => {
            write("metrics.csv", metrics_to_csv(&report.metrics)?)?;
        }
        ReportFormat::PlotData => {
            write("verdict_counts.csv", verdict_counts_to_csv(&report.verdict_counts)?)?;
            write("coefficients.csv", coefficients_to_csv(&report.regressions)?)?;
        }
    }
    Ok(written)
}
