//! Synthetic correctness matrices and a scripted mock endpoint with planted
//! effect structure — the independent oracle the pipeline is validated
//! against.
//!
//! Every bit is a pure function of (spec, seed): columns draw from a ChaCha
//! stream keyed by the persona id, so results do not depend on column or
//! evaluation order. The scripted endpoint serves responses whose
//! correctness reproduces the simulated matrix cell for cell, keyed by the
//! request digest, so replays and retries return identical bytes and the
//! whole run -> grade -> metrics path can be checked against
//! [`simulate_matrix`] exactly.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicUsize, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{choice_label, AnswerType, OrderingSpec, Persona, TaskInstance};
use crate::endpoint::{prompt_hash, EndpointConfig};
use crate::error::{Error, Result};
use crate::metrics::CorrectnessMatrix;
use crate::prompt::{build_prompt, Strategy};

/// Column id of the simulated no-persona baseline.
pub const BASELINE_ID: &str = "no_persona";

const PROBABILITY_FLOOR: f64 = 0.01;
const PROBABILITY_CEIL: f64 = 0.99;

/// Monotone per-group probability offsets along an expected ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingPlant {
    pub spec: OrderingSpec,
    /// One offset per ranked group, applied to every member.
    pub offsets: Vec<f64>,
}

/// Description of planted per-persona correctness probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSpec {
    pub task_id: String,
    pub n_instances: usize,
    pub baseline_p: f64,
    /// Signed probability offsets per persona id.
    #[serde(default)]
    pub deltas: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering_plant: Option<OrderingPlant>,
    /// Optional shared instance-difficulty offset, drawn uniformly from
    /// [-difficulty_sd, difficulty_sd] per instance; stresses the paired
    /// test's power advantage. Zero keeps cells independent.
    #[serde(default)]
    pub difficulty_sd: f64,
    pub seed: u64,
}

impl EffectSpec {
    pub fn new(task_id: impl Into<String>, n_instances: usize, baseline_p: f64, seed: u64) -> Self {
        EffectSpec {
            task_id: task_id.into(),
            n_instances,
            baseline_p,
            deltas: BTreeMap::new(),
            ordering_plant: None,
            difficulty_sd: 0.0,
            seed,
        }
    }

    pub fn with_delta(mut self, persona_id: impl Into<String>, delta: f64) -> Self {
        self.deltas.insert(persona_id.into(), delta);
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EffectSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string_pretty(self).expect("effect spec serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn instance_ids(&self) -> Vec<String> {
        (0..self.n_instances).map(|i| format!("i{i:05}")).collect()
    }

    /// All persona columns: the baseline plus everything named by a delta or
    /// an ordering-plant group.
    pub fn persona_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.deltas.keys().cloned().collect();
        if let Some(plant) = &self.ordering_plant {
            ids.extend(plant.spec.all_ids().map(str::to_string));
        }
        ids.push(BASELINE_ID.to_string());
        ids.sort();
        ids.dedup();
        ids
    }

    /// Planted probability per persona, before clipping.
    fn raw_probability(&self, persona_id: &str) -> f64 {
        let mut p = self.baseline_p;
        if persona_id == BASELINE_ID {
            return p;
        }
        if let Some(delta) = self.deltas.get(persona_id) {
            p += delta;
        }
        if let Some(plant) = &self.ordering_plant {
            for (group, offset) in plant.spec.ranked_groups.iter().zip(&plant.offsets) {
                if group.iter().any(|id| id == persona_id) {
                    p += offset;
                }
            }
        }
        p
    }

    fn validate(&self) -> Result<()> {
        if self.n_instances == 0 {
            return Err(Error::PreconditionViolation("n_instances must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.baseline_p) {
            return Err(Error::PreconditionViolation(format!(
                "baseline_p {} outside [0, 1]",
                self.baseline_p
            )));
        }
        if let Some(plant) = &self.ordering_plant {
            if plant.offsets.len() != plant.spec.ranked_groups.len() {
                return Err(Error::PreconditionViolation(format!(
                    "{} plant offsets for {} groups",
                    plant.offsets.len(),
                    plant.spec.ranked_groups.len()
                )));
            }
        }
        Ok(())
    }
}

/// A simulated matrix plus the effective cell probabilities and any
/// clipping warnings.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub matrix: CorrectnessMatrix,
    pub probabilities: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

fn column_key(seed: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"persona-eval/synthlab/v1");
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.finalize().into()
}

/// Draw the planted correctness matrix: one independent Bernoulli per cell,
/// deterministic per (spec, seed).
pub fn simulate_matrix(spec: &EffectSpec) -> Result<Simulation> {
    spec.validate()?;
    let persona_ids = spec.persona_ids();
    let instance_ids = spec.instance_ids();
    let n = spec.n_instances;

    let difficulties: Vec<f64> = if spec.difficulty_sd > 0.0 {
        let mut rng = ChaCha8Rng::from_seed(column_key(spec.seed, "\u{0}instance-difficulty"));
        (0..n)
            .map(|_| rng.gen_range(-spec.difficulty_sd..spec.difficulty_sd))
            .collect()
    } else {
        vec![0.0; n]
    };

    let mut probabilities = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut columns: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    for persona_id in &persona_ids {
        let raw = spec.raw_probability(persona_id);
        let p = raw.clamp(PROBABILITY_FLOOR, PROBABILITY_CEIL);
        if (raw - p).abs() > f64::EPSILON {
            warnings.push(format!(
                "probability for '{persona_id}' clipped from {raw} to {p}"
            ));
        }
        probabilities.insert(persona_id.clone(), p);
        let mut rng = ChaCha8Rng::from_seed(column_key(spec.seed, persona_id));
        let column = (0..n)
            .map(|row| {
                let cell_p = (p + difficulties[row]).clamp(PROBABILITY_FLOOR, PROBABILITY_CEIL);
                rng.gen::<f64>() < cell_p
            })
            .collect();
        columns.insert(persona_id, column);
    }

    let mut bits = Vec::with_capacity(n * persona_ids.len());
    for row in 0..n {
        for persona_id in &persona_ids {
            bits.push(columns[persona_id.as_str()][row]);
        }
    }
    let matrix = CorrectnessMatrix::new(
        spec.task_id.clone(),
        instance_ids,
        persona_ids,
        BASELINE_ID,
        bits,
    )?;
    Ok(Simulation {
        matrix,
        probabilities,
        warnings,
    })
}

/// A persona set covering the spec's columns, so simulated runs can flow
/// through prompt rendering and analysis. Ids starting with `name_` become
/// irrelevant name personas, `color_` irrelevant color personas, and
/// `expert_` personas are expertise-typed with the first one (sorted) as the
/// task's in-domain expert; ordering-plant groups become education personas
/// at ascending levels.
pub fn synthetic_persona_set(spec: &EffectSpec) -> Result<crate::catalog::PersonaSet> {
    use crate::catalog::{
        AttributeKind, DomainMatch, EducationLevel, Persona, PersonaSet,
    };
    let blank = |id: &str| Persona {
        id: id.to_string(),
        attribute_kind: AttributeKind::Name,
        description: String::new(),
        expertise_domain: None,
        specialization_level: None,
        domain_match: None,
        education_level: None,
    };
    let mut members = vec![Persona {
        attribute_kind: AttributeKind::NoPersona,
        ..blank(BASELINE_ID)
    }];
    let mut irrelevant_ids = std::collections::BTreeSet::new();
    let mut expert_seen = false;

    let plant_level = |id: &str| -> Option<usize> {
        let plant = spec.ordering_plant.as_ref()?;
        plant
            .spec
            .ranked_groups
            .iter()
            .position(|group| group.iter().any(|g| g == id))
    };

    for id in spec.persona_ids() {
        if id == BASELINE_ID {
            continue;
        }
        let persona = if let Some(level) = plant_level(&id) {
            let education = match level {
                0 => EducationLevel::Uneducated,
                1 => EducationLevel::Primary,
                2 => EducationLevel::Middle,
                3 => EducationLevel::HighSchool,
                4 => EducationLevel::College,
                5 => EducationLevel::Graduate,
                _ => {
                    return Err(Error::PreconditionViolation(
                        "ordering plants support at most six groups".into(),
                    ))
                }
            };
            Persona {
                attribute_kind: AttributeKind::Education,
                description: format!("You are a person at study level {level}."),
                education_level: Some(education),
                ..blank(&id)
            }
        } else if id.starts_with("color_") {
            irrelevant_ids.insert(id.clone());
            Persona {
                attribute_kind: AttributeKind::Color,
                description: format!("Your favorite color is {}.", &id["color_".len()..]),
                ..blank(&id)
            }
        } else if id.starts_with("expert_") {
            let domain = id["expert_".len()..].replace('_', " ");
            let domain_match = if expert_seen {
                DomainMatch::OutOfDomain
            } else {
                expert_seen = true;
                DomainMatch::InDomain
            };
            Persona {
                attribute_kind: AttributeKind::Expertise,
                description: format!("You are an expert in {domain}."),
                expertise_domain: Some(domain),
                domain_match: Some(domain_match),
                ..blank(&id)
            }
        } else {
            irrelevant_ids.insert(id.clone());
            Persona {
                attribute_kind: AttributeKind::Name,
                description: format!("Your name is {}.", id.trim_start_matches("name_")),
                ..blank(&id)
            }
        };
        members.push(persona);
    }

    let expected_orderings = spec
        .ordering_plant
        .as_ref()
        .map(|plant| vec![plant.spec.clone()])
        .unwrap_or_default();
    Ok(PersonaSet {
        task_id: spec.task_id.clone(),
        members,
        irrelevant_ids,
        expected_orderings,
    })
}

/// Synthetic numeric task instances matching the simulator's instance ids.
pub fn synthetic_instances(task_id: &str, n: usize) -> Vec<TaskInstance> {
    (0..n)
        .map(|i| TaskInstance {
            instance_id: format!("i{i:05}"),
            task_id: task_id.to_string(),
            question: format!("What is {i} + {i}?"),
            choices: None,
            gold: (2 * i).to_string(),
            answer_type: AnswerType::Numeric,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Answer bank
// ---------------------------------------------------------------------------

/// Correct and incorrect response texts per instance, in the cue formats the
/// grader extracts.
#[derive(Debug, Clone, Default)]
pub struct AnswerBank {
    texts: BTreeMap<String, (String, String)>,
}

impl AnswerBank {
    /// Generate cue-conformant texts for every instance.
    pub fn for_instances(instances: &[TaskInstance]) -> AnswerBank {
        let mut texts = BTreeMap::new();
        for instance in instances {
            texts.insert(
                instance.instance_id.clone(),
                (correct_text(instance), incorrect_text(instance)),
            );
        }
        AnswerBank { texts }
    }

    pub fn insert(
        &mut self,
        instance_id: impl Into<String>,
        correct: impl Into<String>,
        incorrect: impl Into<String>,
    ) {
        self.texts
            .insert(instance_id.into(), (correct.into(), incorrect.into()));
    }

    pub fn response(&self, instance_id: &str, correct: bool) -> Option<&str> {
        self.texts
            .get(instance_id)
            .map(|(right, wrong)| if correct { right.as_str() } else { wrong.as_str() })
    }

    pub fn covers(&self, instances: &[TaskInstance]) -> bool {
        instances
            .iter()
            .all(|i| self.texts.contains_key(&i.instance_id))
    }
}

fn correct_text(instance: &TaskInstance) -> String {
    match instance.answer_type {
        AnswerType::Numeric => format!("Working through it step by step.\n#### {}", instance.gold),
        AnswerType::MultipleChoice => format!("Considering each option, the answer is ({}).", instance.gold),
        AnswerType::MathExpression => format!("We simplify and find \\boxed{{{}}}.", instance.gold),
    }
}

fn incorrect_text(instance: &TaskInstance) -> String {
    match instance.answer_type {
        AnswerType::Numeric => {
            let wrong = instance
                .gold
                .parse::<i64>()
                .map(|g| (g + 1).to_string())
                .unwrap_or_else(|_| "0".to_string());
            format!("Working through it step by step.\n#### {wrong}")
        }
        AnswerType::MultipleChoice => {
            let n = instance.choices.as_ref().map_or(2, Vec::len);
            let wrong = (0..n)
                .map(|i| choice_label(i).to_string())
                .find(|label| label != &instance.gold)
                .unwrap_or_else(|| "Z".to_string());
            format!("Considering each option, the answer is ({wrong}).")
        }
        AnswerType::MathExpression => format!("We simplify and find \\boxed{{{}+1}}.", instance.gold),
    }
}

// ---------------------------------------------------------------------------
// Scripted endpoint
// ---------------------------------------------------------------------------

/// Routes: request digest -> response text, precomputed so the endpoint's
/// correctness bits reproduce the simulated matrix exactly.
#[derive(Debug, Clone, Default)]
pub struct EndpointScript {
    routes: HashMap<String, String>,
}

impl EndpointScript {
    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    /// Register every (persona, instance) cell the run will issue under the
    /// given strategy. For refine strategies the prior turn is the scripted
    /// baseline response, mirroring what the real run feeds back.
    pub fn for_run(
        spec: &EffectSpec,
        bank: &AnswerBank,
        config: &EndpointConfig,
        personas: &[Persona],
        strategy: Strategy,
        instances: &[TaskInstance],
    ) -> Result<EndpointScript> {
        if !bank.covers(instances) {
            return Err(Error::PreconditionViolation(
                "answer bank does not cover every instance".into(),
            ));
        }
        let simulation = simulate_matrix(spec)?;
        let matrix = &simulation.matrix;
        let mut script = EndpointScript::default();

        let baseline = personas
            .iter()
            .find(|p| p.is_no_persona())
            .ok_or_else(|| {
                Error::PreconditionViolation("personas must include the no-persona baseline".into())
            })?;
        let baseline_bits = matrix.column(BASELINE_ID)?;

        for (row, instance) in instances.iter().enumerate() {
            let baseline_text = bank
                .response(&instance.instance_id, baseline_bits[row])
                .expect("bank covers instances");
            let base_prompt = build_prompt(baseline, Strategy::Base, instance, None)?;
            script
                .routes
                .insert(prompt_hash(config, &base_prompt), baseline_text.to_string());

            for persona in personas {
                if persona.is_no_persona() {
                    continue;
                }
                let bits = matrix.column(&persona.id)?;
                let text = bank
                    .response(&instance.instance_id, bits[row])
                    .expect("bank covers instances");
                let prompt = if strategy.is_refine() {
                    build_prompt(persona, strategy, instance, Some(baseline_text))?
                } else {
                    build_prompt(persona, strategy, instance, None)?
                };
                script
                    .routes
                    .insert(prompt_hash(config, &prompt), text.to_string());
            }
        }
        Ok(script)
    }

    pub fn insert_route(&mut self, digest: impl Into<String>, response: impl Into<String>) {
        self.routes.insert(digest.into(), response.into());
    }
}

/// A loopback chat-completions server serving scripted responses. Unknown
/// request digests get a 404. Stateless given the script, so concurrent
/// requests and replays are safe.
pub struct ScriptedEndpoint {
    address: std::net::SocketAddr,
    served: Arc<AtomicUsize>,
    budget: Arc<AtomicI64>,
    fail_next: Arc<AtomicI64>,
    forced_status: Arc<AtomicUsize>,
    shutdown: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl ScriptedEndpoint {
    pub fn serve(script: EndpointScript) -> Result<ScriptedEndpoint> {
        let listener = TcpListener::bind("127.0.0.1:0")
            .map_err(|e| Error::io("127.0.0.1:0", e))?;
        let address = listener.local_addr().map_err(|e| Error::io("local addr", e))?;
        let served = Arc::new(AtomicUsize::new(0));
        let budget = Arc::new(AtomicI64::new(i64::MAX));
        let fail_next = Arc::new(AtomicI64::new(0));
        let forced_status = Arc::new(AtomicUsize::new(0));
        let shutdown = Arc::new(AtomicBool::new(false));

        let routes = Arc::new(script.routes);
        let handle = {
            let served = Arc::clone(&served);
            let budget = Arc::clone(&budget);
            let fail_next = Arc::clone(&fail_next);
            let forced_status = Arc::clone(&forced_status);
            let shutdown = Arc::clone(&shutdown);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let routes = Arc::clone(&routes);
                    let served = Arc::clone(&served);
                    let budget = Arc::clone(&budget);
                    let fail_next = Arc::clone(&fail_next);
                    let forced_status = Arc::clone(&forced_status);
                    std::thread::spawn(move || {
                        let _ = handle_connection(
                            stream,
                            &routes,
                            &served,
                            &budget,
                            &fail_next,
                            &forced_status,
                        );
                    });
                }
            })
        };
        Ok(ScriptedEndpoint {
            address,
            served,
            budget,
            fail_next,
            forced_status,
            shutdown,
            handle: Some(handle),
        })
    }

    /// The chat-completions URL clients should post to.
    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.address)
    }

    /// Network requests that reached the server (cache hits never do).
    pub fn requests_served(&self) -> usize {
        self.served.load(Ordering::SeqCst)
    }

    /// Serve at most `n` further requests successfully; everything after
    /// gets a 500, simulating an endpoint dying mid-run.
    pub fn fail_after(&self, n: usize) {
        self.budget.store(n as i64, Ordering::SeqCst);
    }

    /// Answer the next `n` requests with a 500, then serve normally.
    pub fn fail_next(&self, n: usize) {
        self.fail_next.store(n as i64, Ordering::SeqCst);
    }

    /// Answer every request with the given status until restored.
    pub fn force_status(&self, status: u16) {
        self.forced_status.store(status as usize, Ordering::SeqCst);
    }

    pub fn restore(&self) {
        self.budget.store(i64::MAX, Ordering::SeqCst);
        self.fail_next.store(0, Ordering::SeqCst);
        self.forced_status.store(0, Ordering::SeqCst);
    }
}

impl Drop for ScriptedEndpoint {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.address);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(
    mut stream: TcpStream,
    routes: &HashMap<String, String>,
    served: &AtomicUsize,
    budget: &AtomicI64,
    fail_next: &AtomicI64,
    forced_status: &AtomicUsize,
) -> std::io::Result<()> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Ok(());
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = find_header_end(&buf) {
            break pos;
        }
        if buf.len() > 1 << 20 {
            return Ok(());
        }
    };
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length = headers
        .lines()
        .find_map(|line| {
            let (name, value) = line.split_once(':')?;
            if name.trim().eq_ignore_ascii_case("content-length") {
                value.trim().parse::<usize>().ok()
            } else {
                None
            }
        })
        .unwrap_or(0);
    let body_start = header_end + 4;
    while buf.len() < body_start + content_length {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    let body = &buf[body_start..(body_start + content_length).min(buf.len())];

    served.fetch_add(1, Ordering::SeqCst);
    let forced = forced_status.load(Ordering::SeqCst);
    if forced != 0 {
        return write_response(&mut stream, forced as u16, r#"{"error":"scripted status"}"#);
    }
    if fail_next.fetch_sub(1, Ordering::SeqCst) > 0 {
        return write_response(&mut stream, 500, r#"{"error":"scripted hiccup"}"#);
    }
    if budget.fetch_sub(1, Ordering::SeqCst) <= 0 {
        return write_response(&mut stream, 500, r#"{"error":"scripted outage"}"#);
    }

    let digest = hex::encode(Sha256::digest(body));
    match routes.get(&digest) {
        Some(text) => {
            let wire = serde_json::json!({
                "choices": [{
                    "message": {"role": "assistant", "content": text},
                    "finish_reason": "stop",
                }]
            });
            write_response(&mut stream, 200, &wire.to_string())
        }
        None => write_response(&mut stream, 404, r#"{"error":"unknown prompt digest"}"#),
    }
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

fn write_response(stream: &mut TcpStream, status: u16, body: &str) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        401 => "Unauthorized",
        404 => "Not Found",
        _ => "Internal Server Error",
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes())?;
    stream.flush()
}
