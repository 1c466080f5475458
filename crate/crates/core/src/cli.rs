//! Command-line surface: `run`, `analyze`, `report`.
//!
//! Exit codes: 0 success, 2 transport failure, 64 usage error, 65 data
//! error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::catalog::{AttributeKind, Catalog, PersonaSet, TaskInstance};
use crate::endpoint::{Client, EndpointFile, ResponseCache};
use crate::error::{Error, Result};
use crate::grader::ExtractionRules;
use crate::prompt::{DemoRegistry, Strategy};
use crate::report::{analyze, emit, load_runs, AnalysisOptions, AnalysisReport, ReportFormat};
use crate::run::{execute_and_persist, RunSpec};

pub const EXIT_OK: u8 = 0;
pub const EXIT_TRANSPORT: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_DATA: u8 = 65;

#[derive(Debug, Parser)]
#[command(
    name = "persona-eval",
    version,
    about = "Measure whether persona prompts have their intended effect on task accuracy"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute one strategy over task files, grading and persisting records.
    Run(RunArgs),
    /// Compute metrics, verdict tallies, and regressions from persisted runs.
    Analyze(AnalyzeArgs),
    /// Convert an analysis report to JSON, CSV, or plot-data tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Endpoint configuration (TOML); API key comes from the env var it
    /// names.
    #[arg(long = "endpoint-config", value_name = "FILE")]
    endpoint_config: PathBuf,

    /// Task files (JSONL), one instance per line.
    #[arg(long = "tasks", value_name = "FILE", required = true, num_args = 1..)]
    tasks: Vec<PathBuf>,

    /// Persona catalog (TOML); defaults to the bundled study catalog.
    #[arg(long = "catalog", value_name = "FILE")]
    catalog: Option<PathBuf>,

    /// Prompting strategy.
    #[arg(long = "strategy", value_parser = parse_strategy)]
    strategy: Strategy,

    /// Comma-separated persona ids or kind keywords (names, colors,
    /// education, static-expert, dynamic, experts). Default: the whole set.
    #[arg(long = "personas", value_name = "FILTER")]
    personas: Option<String>,

    #[arg(long = "seed", default_value_t = 0)]
    seed: u64,

    #[arg(long = "runs-dir", value_name = "DIR", default_value = "runs")]
    runs_dir: PathBuf,

    #[arg(long = "cache-dir", value_name = "DIR", default_value = "cache")]
    cache_dir: PathBuf,

    /// Extraction patterns file overriding the default grading regexes.
    #[arg(long = "patterns", value_name = "FILE")]
    patterns: Option<PathBuf>,

    /// Extra dynamic-expert demonstration files (<kind>.<mc|open>.txt).
    #[arg(long = "demos-dir", value_name = "DIR")]
    demos_dir: Option<PathBuf>,

    /// On dynamic-expert parse failure, substitute the task's static expert
    /// and flag the records instead of aborting.
    #[arg(long = "dynamic-fallback", default_value_t = false)]
    dynamic_fallback: bool,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Directory previously populated by `run`.
    #[arg(long = "runs", value_name = "DIR")]
    runs: PathBuf,

    /// Persona catalog (TOML); defaults to the bundled study catalog.
    #[arg(long = "catalog", value_name = "FILE")]
    catalog: Option<PathBuf>,

    #[arg(long = "seed", default_value_t = 0)]
    seed: u64,

    /// Bootstrap resamples for the fidelity confidence interval.
    #[arg(long = "resamples", default_value_t = 10000)]
    resamples: usize,

    /// Where to write the report JSON.
    #[arg(long = "out", value_name = "FILE", default_value = "report.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Report JSON produced by `analyze`.
    #[arg(long = "input", value_name = "FILE", default_value = "report.json")]
    input: PathBuf,

    #[arg(long = "format", value_parser = parse_format)]
    format: ReportFormat,

    #[arg(long = "out", value_name = "DIR", default_value = "report")]
    out: PathBuf,
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|_| {
        format!("'{s}' is not a strategy (expected base, instruction, refine, refine-instruction)")
    })
}

fn parse_format(s: &str) -> std::result::Result<ReportFormat, String> {
    s.parse()
        .map_err(|_| format!("'{s}' is not a report format (expected json, csv, plotdata)"))
}

/// Parse argv and execute; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit code 0
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Report(args) => cmd_report(&args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Transport { .. } | Error::EndpointRejection { .. } => EXIT_TRANSPORT,
                _ => EXIT_DATA,
            }
        }
    }
}

fn load_catalog_arg(path: &Option<PathBuf>) -> Result<Catalog> {
    match path {
        Some(path) => Catalog::load(path),
        None => Ok(Catalog::bundled()),
    }
}

/// Expand a `--personas` filter into ids valid for the set.
fn expand_persona_filter(set: &PersonaSet, filter: &str) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for item in filter.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            "names" => ids.extend(
                set.members
                    .iter()
                    .filter(|p| p.attribute_kind == AttributeKind::Name)
                    .map(|p| p.id.clone()),
            ),
            "colors" => ids.extend(
                set.members
                    .iter()
                    .filter(|p| p.attribute_kind == AttributeKind::Color)
                    .map(|p| p.id.clone()),
            ),
            "education" => ids.extend(
                set.members
                    .iter()
                    .filter(|p| p.attribute_kind == AttributeKind::Education)
                    .map(|p| p.id.clone()),
            ),
            "dynamic" => ids.extend(
                set.members
                    .iter()
                    .filter(|p| p.is_dynamic())
                    .map(|p| p.id.clone()),
            ),
            "static-expert" => {
                let expert = set.static_expert().ok_or_else(|| {
                    Error::EmptySelection(format!("task '{}' has no static expert", set.task_id))
                })?;
                ids.push(expert.id.clone());
            }
            "experts" => ids.extend(
                set.members
                    .iter()
                    .filter(|p| p.attribute_kind == AttributeKind::Expertise)
                    .map(|p| p.id.clone()),
            ),
            id => {
                if set.member(id).is_none() {
                    return Err(Error::EmptySelection(format!(
                        "persona '{id}' is not in the set for task '{}'",
                        set.task_id
                    )));
                }
                ids.push(id.to_string());
            }
        }
    }
    ids.sort();
    ids.dedup();
    Ok(ids)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let endpoint_file = EndpointFile::load(&args.endpoint_config)?;
    let config = endpoint_file.resolve();
    let generator = endpoint_file.generator.as_ref().map(|g| g.resolve());
    let catalog = load_catalog_arg(&args.catalog)?;
    let rules = match &args.patterns {
        Some(path) => ExtractionRules::load(path)?,
        None => ExtractionRules::default(),
    };
    let mut registry = DemoRegistry::bundled();
    if let Some(dir) = &args.demos_dir {
        registry.load_dir(dir)?;
    }
    let client = Client::new(ResponseCache::new(&args.cache_dir))?;

    // Group instances by task across all task files.
    let mut by_task: BTreeMap<String, Vec<TaskInstance>> = BTreeMap::new();
    let mut digests = Vec::new();
    for path in &args.tasks {
        let instances = crate::catalog::load_tasks(path)?;
        digests.push(crate::catalog::tasks_digest(&instances));
        for instance in instances {
            by_task.entry(instance.task_id.clone()).or_default().push(instance);
        }
    }
    let tasks_digest = digests.join("+");

    for (task_id, instances) in &by_task {
        let set = catalog.persona_set(task_id).ok_or_else(|| {
            Error::EmptySelection(format!("catalog has no persona set for task '{task_id}'"))
        })?;
        let filter_ids = match &args.personas {
            Some(filter) => Some(expand_persona_filter(set, filter)?),
            None => None,
        };
        let spec = RunSpec {
            config: &config,
            generator: generator.as_ref(),
            set,
            dataset_kind: catalog.dataset_kind(task_id).unwrap_or(task_id),
            strategy: args.strategy,
            instances,
            rules: &rules,
            registry: &registry,
            persona_filter: filter_ids.as_deref(),
            dynamic_fallback: args.dynamic_fallback,
            catalog_digest: catalog.digest(),
            tasks_digest: tasks_digest.clone(),
            seed: args.seed,
        };
        let output = execute_and_persist(&client, &spec, &args.runs_dir)?;
        println!(
            "run {} {}/{}/{}: {} records ({} personas x {} instances), records digest {}",
            output.manifest.run_id,
            output.manifest.model_name,
            task_id,
            args.strategy,
            output.manifest.n_records,
            output.manifest.n_personas,
            output.manifest.n_instances,
            &output.manifest.records_digest[..12],
        );
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let catalog = load_catalog_arg(&args.catalog)?;
    let runs = load_runs(&args.runs)?;
    let sets: Vec<&PersonaSet> = catalog.persona_sets().collect();
    let options = AnalysisOptions {
        seed: args.seed,
        resamples: args.resamples,
    };
    let report = analyze(&runs, &sets, &options)?;
    let json = report.to_json();
    std::fs::write(&args.out, &json)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    println!(
        "analyzed {} runs: {} metric rows, {} regressions -> {}",
        runs.len(),
        report.metrics.len(),
        report.regressions.len(),
        args.out.display()
    );
    for counts in &report.verdict_counts {
        println!(
            "  {} {} {}: +{} -{} ~{} (success {:.0}%)",
            counts.model,
            counts.strategy,
            counts.key,
            counts.positive,
            counts.negative,
            counts.non_significant,
            counts.success_rate * 100.0
        );
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| Error::io(args.input.display().to_string(), e))?;
    let report = AnalysisReport::from_json(&text)?;
    let written = emit(&report, args.format, &args.out)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Re-analyze a runs directory with explicit persona sets (used by tests and
/// downstream tooling that bypasses catalog files).
pub fn analyze_dir(
    runs_dir: &Path,
    sets: &[&PersonaSet],
    options: &AnalysisOptions,
) -> Result<AnalysisReport> {
    let runs = load_runs(runs_dir)?;
    analyze(&runs, sets, options)
}
