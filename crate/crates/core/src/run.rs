//! Run execution: one graded record per (persona, instance), resumable
//! through the response cache.
//!
//! Every strategy's record set includes the no-persona baseline row for each
//! instance. The baseline always renders as the bare task, so refine runs
//! feed the exact cached baseline response back as the prior turn, and the
//! baseline cell is shared across strategies through the cache.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{Persona, PersonaSet, TaskInstance};
use crate::endpoint::{slug, Client, Completion, EndpointConfig};
use crate::error::{Error, Result};
use crate::grader::ExtractionRules;
use crate::prompt::{
    build_prompt, generate_dynamic_experts, DemoRegistry, Strategy,
};

/// One graded model response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub model_name: String,
    pub task_id: String,
    pub instance_id: String,
    pub persona_id: String,
    pub strategy: Strategy,
    pub prompt_hash: String,
    pub raw_response: String,
    /// Normalized extracted answer; `None` when no extraction pattern fired.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted: Option<String>,
    /// Set iff `extracted` is set; a missing answer scores as incorrect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default)]
    pub generator_fallback: bool,
}

/// Provenance and coverage for one (model, task, strategy) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub model_name: String,
    pub task_id: String,
    pub strategy: Strategy,
    pub catalog_digest: String,
    pub tasks_digest: String,
    pub config: ConfigSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_model: Option<String>,
    pub seed: u64,
    pub n_personas: usize,
    pub n_instances: usize,
    pub n_records: usize,
    pub records_digest: String,
    pub incomplete: bool,
}

/// Endpoint settings echoed into the manifest (no secrets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub base_url: String,
    pub model_name: String,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub parallelism_cap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_size_b: Option<f64>,
}

impl From<&EndpointConfig> for ConfigSummary {
    fn from(c: &EndpointConfig) -> Self {
        ConfigSummary {
            base_url: c.base_url.clone(),
            model_name: c.model_name.clone(),
            max_tokens: c.max_tokens,
            timeout_secs: c.timeout_secs,
            max_retries: c.max_retries,
            parallelism_cap: c.parallelism_cap,
            model_family: c.model_family.clone(),
            model_size_b: c.model_size_b,
        }
    }
}

/// Everything one run needs.
pub struct RunSpec<'a> {
    pub config: &'a EndpointConfig,
    /// Endpoint for dynamic-expert generation; required when the selected
    /// personas include dynamic placeholders.
    pub generator: Option<&'a EndpointConfig>,
    pub set: &'a PersonaSet,
    pub dataset_kind: &'a str,
    pub strategy: Strategy,
    pub instances: &'a [TaskInstance],
    pub rules: &'a ExtractionRules,
    pub registry: &'a DemoRegistry,
    /// Persona ids to run; `None` runs the whole set. The no-persona
    /// baseline participates regardless.
    pub persona_filter: Option<&'a [String]>,
    /// Substitute the task's static expert when dynamic-expert generation
    /// fails to parse, flagging the affected records.
    pub dynamic_fallback: bool,
    pub catalog_digest: String,
    pub tasks_digest: String,
    pub seed: u64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub manifest: RunManifest,
}

/// Deterministic run id over the run's identity inputs, so re-invocations
/// resume the same run.
fn run_id(spec: &RunSpec) -> String {
    let mut hasher = Sha256::new();
    hasher.update(spec.config.model_name.as_bytes());
    hasher.update(b"/");
    hasher.update(spec.set.task_id.as_bytes());
    hasher.update(b"/");
    hasher.update(spec.strategy.as_str().as_bytes());
    hasher.update(b"/");
    hasher.update(spec.catalog_digest.as_bytes());
    hasher.update(b"/");
    hasher.update(spec.tasks_digest.as_bytes());
    hex::encode(&hasher.finalize()[..8])
}

/// Run every (persona, instance) cell of the strategy, grade the responses,
/// and return the records sorted by (persona_id, instance_id) with the run
/// manifest. Completion order does not affect the result.
pub fn execute_run(client: &Client, spec: &RunSpec) -> Result<RunOutput> {
    let members = select_members(spec)?;
    let baseline = spec.set.no_persona().clone();
    let run_id = run_id(spec);

    for instance in spec.instances {
        if instance.task_id != spec.set.task_id {
            return Err(Error::PreconditionViolation(format!(
                "instance '{}' belongs to task '{}', not '{}'",
                instance.instance_id, instance.task_id, spec.set.task_id
            )));
        }
    }

    // The no-persona Base pass: the baseline column for every strategy and
    // the prior turn for the refine strategies.
    let base_completions: Vec<Completion> = parallel_map(
        spec.config.parallelism_cap,
        spec.instances,
        |instance| {
            let prompt = build_prompt(&baseline, Strategy::Base, instance, None)?;
            client.complete(spec.config, &prompt)
        },
    )?;

    // Instance-specific personas for the dynamic placeholders.
    let needs_generation = members.iter().any(|p| p.is_dynamic());
    let generated: Vec<Option<DynamicSet>> = if needs_generation {
        let generator = spec.generator.ok_or_else(|| {
            Error::PreconditionViolation(
                "selected personas include dynamic experts but no generator endpoint is configured"
                    .into(),
            )
        })?;
        let fallback_description = spec
            .set
            .static_expert()
            .map(|p| p.description.clone());
        if spec.dynamic_fallback && fallback_description.is_none() {
            return Err(Error::PreconditionViolation(
                "dynamic fallback requested but the task has no static expert".into(),
            ));
        }
        parallel_map(generator.parallelism_cap, spec.instances, |instance| {
            let mut complete =
                |messages: &crate::prompt::MessageSequence| -> Result<String> {
                    client.complete(generator, messages).map(|c| c.text)
                };
            let experts = generate_dynamic_experts(
                instance,
                spec.dataset_kind,
                spec.registry,
                &mut complete,
                if spec.dynamic_fallback {
                    fallback_description.as_deref()
                } else {
                    None
                },
            )?;
            Ok(Some(DynamicSet {
                descriptions: experts.descriptions,
                fallback: experts.fallback,
            }))
        })?
    } else {
        spec.instances.iter().map(|_| None).collect()
    };

    // One work item per (persona, instance).
    let mut items = Vec::with_capacity(members.len() * spec.instances.len());
    for persona in &members {
        for (row, instance) in spec.instances.iter().enumerate() {
            items.push((persona.clone(), row, instance));
        }
    }
    let records = parallel_map(spec.config.parallelism_cap, &items, |(persona, row, instance)| {
        let mut persona = persona.clone();
        let mut generator_fallback = false;
        if persona.is_dynamic() {
            let dynamic = generated[*row]
                .as_ref()
                .expect("generation ran for dynamic personas");
            let level = persona.specialization_level.expect("dynamic persona has a level");
            persona.description = dynamic.descriptions[level.level() as usize].clone();
            generator_fallback = dynamic.fallback;
        }
        let completion = if persona.is_no_persona() {
            // Any strategy's baseline row is the cached Base response.
            base_completions[*row].clone()
        } else if spec.strategy.is_refine() {
            let prior = &base_completions[*row].text;
            let prompt = build_prompt(&persona, spec.strategy, instance, Some(prior))?;
            client.complete(spec.config, &prompt)?
        } else {
            let prompt = build_prompt(&persona, spec.strategy, instance, None)?;
            client.complete(spec.config, &prompt)?
        };
        let extracted = spec.rules.extract(&completion.text, instance.answer_type);
        let correct = extracted
            .as_deref()
            .map(|e| crate::grader::score(Some(e), &instance.gold, instance.answer_type));
        Ok(RunRecord {
            run_id: run_id.clone(),
            model_name: spec.config.model_name.clone(),
            task_id: instance.task_id.clone(),
            instance_id: instance.instance_id.clone(),
            persona_id: persona.id.clone(),
            strategy: spec.strategy,
            prompt_hash: completion.prompt_hash,
            raw_response: completion.text,
            extracted,
            correct,
            generator_fallback,
        })
    })?;

    let mut records = records;
    records.sort_by(|a, b| {
        (&a.persona_id, &a.instance_id).cmp(&(&b.persona_id, &b.instance_id))
    });
    let manifest = RunManifest {
        run_id,
        model_name: spec.config.model_name.clone(),
        task_id: spec.set.task_id.clone(),
        strategy: spec.strategy,
        catalog_digest: spec.catalog_digest.clone(),
        tasks_digest: spec.tasks_digest.clone(),
        config: ConfigSummary::from(spec.config),
        generator_model: spec.generator.map(|g| g.model_name.clone()),
        seed: spec.seed,
        n_personas: members.len(),
        n_instances: spec.instances.len(),
        n_records: records.len(),
        records_digest: records_digest(&records),
        incomplete: false,
    };
    Ok(RunOutput { records, manifest })
}

/// Like [`execute_run`], but persists records and manifest under `runs_dir`.
/// On failure an incomplete manifest is written so the gap is visible; a
/// re-invocation resumes from the response cache.
pub fn execute_and_persist(
    client: &Client,
    spec: &RunSpec,
    runs_dir: impl AsRef<Path>,
) -> Result<RunOutput> {
    let runs_dir = runs_dir.as_ref();
    match execute_run(client, spec) {
        Ok(output) => {
            write_records(runs_dir, &output.manifest, &output.records)?;
            Ok(output)
        }
        Err(e) => {
            let manifest = RunManifest {
                run_id: run_id(spec),
                model_name: spec.config.model_name.clone(),
                task_id: spec.set.task_id.clone(),
                strategy: spec.strategy,
                catalog_digest: spec.catalog_digest.clone(),
                tasks_digest: spec.tasks_digest.clone(),
                config: ConfigSummary::from(spec.config),
                generator_model: spec.generator.map(|g| g.model_name.clone()),
                seed: spec.seed,
                n_personas: 0,
                n_instances: spec.instances.len(),
                n_records: 0,
                records_digest: String::new(),
                incomplete: true,
            };
            // Best effort: the failure we report is the run's, not the write's.
            let _ = write_manifest(runs_dir, &manifest);
            Err(e)
        }
    }
}

struct DynamicSet {
    descriptions: [String; 3],
    fallback: bool,
}

fn select_members(spec: &RunSpec) -> Result<Vec<Persona>> {
    let mut members: Vec<Persona> = match spec.persona_filter {
        None => spec.set.members.clone(),
        Some(ids) => {
            let mut selected = Vec::new();
            for id in ids {
                let persona = spec.set.member(id).ok_or_else(|| {
                    Error::EmptySelection(format!(
                        "persona '{id}' is not in the set for task '{}'",
                        spec.set.task_id
                    ))
                })?;
                selected.push(persona.clone());
            }
            if !selected.iter().any(|p| p.is_no_persona()) {
                selected.push(spec.set.no_persona().clone());
            }
            selected
        }
    };
    members.sort_by(|a, b| a.id.cmp(&b.id));
    members.dedup_by(|a, b| a.id == b.id);
    Ok(members)
}

/// Run a fallible job over items with at most `cap` worker threads,
/// preserving input order. The first error aborts outstanding work.
fn parallel_map<T: Sync, R: Send>(
    cap: usize,
    items: &[T],
    job: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    let cap = cap.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<R>>>> =
        (0..items.len()).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..cap {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= items.len() {
                    break;
                }
                let result = job(&items[index]);
                if result.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                *slots[index].lock().expect("result slot") = Some(result);
            });
        }
    });

    let mut out = Vec::with_capacity(items.len());
    let mut first_error = None;
    for slot in slots {
        match slot.into_inner().expect("result slot") {
            Some(Ok(value)) => out.push(value),
            Some(Err(e)) => {
                first_error.get_or_insert(e);
            }
            None => {
                first_error.get_or_insert(Error::Transport {
                    attempts: 0,
                    message: "work item cancelled after earlier failure".into(),
                });
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn records_digest(records: &[RunRecord]) -> String {
    let mut hasher = Sha256::new();
    for record in records {
        hasher.update(serde_json::to_string(record).expect("record serializes"));
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

pub fn run_dir(runs_dir: &Path, model: &str, task: &str) -> PathBuf {
    runs_dir.join(slug(model)).join(slug(task))
}

pub fn records_path(runs_dir: &Path, model: &str, task: &str, strategy: Strategy) -> PathBuf {
    run_dir(runs_dir, model, task).join(format!("{}.jsonl", strategy.as_str()))
}

pub fn manifest_path(runs_dir: &Path, model: &str, task: &str, strategy: Strategy) -> PathBuf {
    run_dir(runs_dir, model, task).join(format!("{}.manifest.json", strategy.as_str()))
}

pub fn write_records(runs_dir: &Path, manifest: &RunManifest, records: &[RunRecord]) -> Result<()> {
    let path = records_path(runs_dir, &manifest.model_name, &manifest.task_id, manifest.strategy);
    let dir = path.parent().expect("records path has a parent");
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut body = String::new();
    for record in records {
        body.push_str(&serde_json::to_string(record)?);
        body.push('\n');
    }
    std::fs::write(&path, body).map_err(|e| Error::io(path.display().to_string(), e))?;
    write_manifest(runs_dir, manifest)
}

fn write_manifest(runs_dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = manifest_path(runs_dir, &manifest.model_name, &manifest.task_id, manifest.strategy);
    let dir = path.parent().expect("manifest path has a parent");
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let body = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RunRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(path.display().to_string(), format!("line {}: {e}", lineno + 1)))?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}
