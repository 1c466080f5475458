//! Persona and task data model, catalog loading, and expected orderings.
//!
//! A catalog file is a TOML document with four sections:
//!
//! * `[personas]` — one entry per persona: `kind`, `description`, and the
//!   optional ordinal fields (`domain`, `specialization`, `education`).
//! * `[irrelevant]` — ids of personas whose attribute has no bearing on any
//!   task (names, favorite colors).
//! * `[tasks]` — per task: the in-domain `expert` id and the `dataset` kind
//!   used to pick dynamic-expert demonstrations.
//! * `[orderings]` — per task: explicit `domain_match` group lists, lowest
//!   expected performance first. Education and specialization orderings are
//!   derived from the personas' ordinal fields instead.
//!
//! Education-level and dynamic-expert personas are study-wide: they join the
//! persona set of every task. Task-specific experts enter through the
//! `domain_match` groups.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The single attribute a persona is characterized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Expertise,
    Name,
    Color,
    Education,
    NoPersona,
}

/// Specialization depth of a dynamically generated expert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecializationLevel {
    Broad,
    Focused,
    Niche,
}

impl SpecializationLevel {
    pub fn level(self) -> u8 {
        self as u8
    }

    pub const ALL: [SpecializationLevel; 3] = [
        SpecializationLevel::Broad,
        SpecializationLevel::Focused,
        SpecializationLevel::Niche,
    ];
}

impl fmt::Display for SpecializationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SpecializationLevel::Broad => "broad",
            SpecializationLevel::Focused => "focused",
            SpecializationLevel::Niche => "niche",
        };
        f.write_str(s)
    }
}

/// How closely an expert persona's domain matches the task's domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainMatch {
    OutOfDomain,
    RelatedDomain,
    InDomain,
}

impl DomainMatch {
    pub fn level(self) -> u8 {
        self as u8
    }
}

/// Formal education attainment, totally ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EducationLevel {
    Uneducated,
    Primary,
    Middle,
    HighSchool,
    College,
    Graduate,
}

impl EducationLevel {
    pub fn level(self) -> u8 {
        self as u8
    }
}

/// One prompt-prefix-bearing identity with exactly one attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub id: String,
    pub attribute_kind: AttributeKind,
    /// Full prompt prefix, e.g. "You are an expert in math."; empty for the
    /// no-persona baseline and for dynamic experts before generation.
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expertise_domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specialization_level: Option<SpecializationLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_match: Option<DomainMatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub education_level: Option<EducationLevel>,
}

impl Persona {
    /// Dynamic experts are expertise personas whose description is generated
    /// per instance at a fixed specialization level.
    pub fn is_dynamic(&self) -> bool {
        self.attribute_kind == AttributeKind::Expertise && self.specialization_level.is_some()
    }

    pub fn is_no_persona(&self) -> bool {
        self.attribute_kind == AttributeKind::NoPersona
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::parse(format!("persona '{}'", self.id), msg));
        match self.attribute_kind {
            AttributeKind::NoPersona => {
                if !self.description.is_empty() {
                    return fail("no-persona entry must have an empty description".into());
                }
            }
            AttributeKind::Education => {
                if self.education_level.is_none() {
                    return fail("education persona requires an education level".into());
                }
            }
            AttributeKind::Expertise => {
                if self.description.is_empty() && self.specialization_level.is_none() {
                    return fail("static expert requires a description".into());
                }
            }
            AttributeKind::Name | AttributeKind::Color => {
                if self.description.is_empty() {
                    return fail("persona requires a description".into());
                }
            }
        }
        if self.education_level.is_some() && self.attribute_kind != AttributeKind::Education {
            return fail("education level is only valid on education personas".into());
        }
        if self.specialization_level.is_some() && self.attribute_kind != AttributeKind::Expertise {
            return fail("specialization is only valid on expertise personas".into());
        }
        Ok(())
    }
}

/// Which expected ordering a fidelity measurement ranks against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingKind {
    Education,
    DomainMatch,
    Specialization,
}

impl fmt::Display for OrderingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OrderingKind::Education => "education",
            OrderingKind::DomainMatch => "domain_match",
            OrderingKind::Specialization => "specialization",
        };
        f.write_str(s)
    }
}

/// An expected performance ordering: persona-id groups from lowest to highest
/// expected accuracy. Multi-member groups are averaged before ranking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingSpec {
    pub ordering_kind: OrderingKind,
    pub ranked_groups: Vec<Vec<String>>,
}

impl OrderingSpec {
    pub fn all_ids(&self) -> impl Iterator<Item = &str> {
        self.ranked_groups.iter().flatten().map(String::as_str)
    }

    fn validate(&self, task_id: &str) -> Result<()> {
        if self.ranked_groups.len() < 2 {
            return Err(Error::parse(
                format!("ordering {}/{}", task_id, self.ordering_kind),
                "needs at least two groups",
            ));
        }
        let mut seen = BTreeSet::new();
        for id in self.all_ids() {
            if !seen.insert(id.to_string()) {
                return Err(Error::parse(
                    format!("ordering {}/{}", task_id, self.ordering_kind),
                    format!("persona '{id}' appears in more than one group"),
                ));
            }
        }
        Ok(())
    }
}

/// All personas evaluated on one task, with the irrelevant subset and the
/// orderings fidelity is scored against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaSet {
    pub task_id: String,
    pub members: Vec<Persona>,
    pub irrelevant_ids: BTreeSet<String>,
    pub expected_orderings: Vec<OrderingSpec>,
}

impl PersonaSet {
    pub fn member(&self, id: &str) -> Option<&Persona> {
        self.members.iter().find(|p| p.id == id)
    }

    pub fn no_persona(&self) -> &Persona {
        self.members
            .iter()
            .find(|p| p.is_no_persona())
            .expect("validated persona set contains a no-persona member")
    }

    /// Member ids that are not in the irrelevant set (includes the baseline).
    pub fn relevant_ids(&self) -> BTreeSet<String> {
        self.members
            .iter()
            .filter(|p| !self.irrelevant_ids.contains(&p.id))
            .map(|p| p.id.clone())
            .collect()
    }

    /// Irrelevant member ids of one attribute kind (name or color).
    pub fn irrelevant_of_kind(&self, kind: AttributeKind) -> BTreeSet<String> {
        self.members
            .iter()
            .filter(|p| p.attribute_kind == kind && self.irrelevant_ids.contains(&p.id))
            .map(|p| p.id.clone())
            .collect()
    }

    /// The task-aligned static expert (domain match = in-domain).
    pub fn static_expert(&self) -> Option<&Persona> {
        self.members
            .iter()
            .find(|p| p.domain_match == Some(DomainMatch::InDomain) && !p.is_dynamic())
    }

    pub fn expected_ordering(&self, kind: OrderingKind) -> Option<&OrderingSpec> {
        self.expected_orderings
            .iter()
            .find(|o| o.ordering_kind == kind)
    }

    fn validate(&self) -> Result<()> {
        let locus = format!("persona set '{}'", self.task_id);
        let mut ids = BTreeSet::new();
        for p in &self.members {
            p.validate()?;
            if !ids.insert(p.id.clone()) {
                return Err(Error::parse(&locus, format!("duplicate persona id '{}'", p.id)));
            }
        }
        let baselines = self.members.iter().filter(|p| p.is_no_persona()).count();
        if baselines != 1 {
            return Err(Error::parse(
                &locus,
                format!("expected exactly one no-persona member, found {baselines}"),
            ));
        }
        let no_persona_id = &self.no_persona().id;
        if self.irrelevant_ids.contains(no_persona_id) {
            return Err(Error::parse(&locus, "the no-persona baseline cannot be irrelevant"));
        }
        for id in &self.irrelevant_ids {
            if !ids.contains(id) {
                return Err(Error::parse(&locus, format!("irrelevant id '{id}' is not a member")));
            }
        }
        for ordering in &self.expected_orderings {
            ordering.validate(&self.task_id)?;
            for id in ordering.all_ids() {
                if !ids.contains(id) {
                    return Err(Error::parse(
                        &locus,
                        format!("ordering references unknown persona '{id}'"),
                    ));
                }
                if id == no_persona_id {
                    return Err(Error::parse(
                        &locus,
                        "the no-persona baseline cannot appear in an ordering group",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Derive the expected ordering for an ordinal attribute from the set's
/// members: one group per attribute level, ascending. Group members are
/// sorted by id, so the result is invariant to member order.
pub fn expected_ordering(set: &PersonaSet, kind: OrderingKind) -> Result<OrderingSpec> {
    let mut by_level: BTreeMap<u8, Vec<String>> = BTreeMap::new();
    for p in &set.members {
        let level = match kind {
            OrderingKind::Education => p.education_level.map(EducationLevel::level),
            OrderingKind::Specialization => p.specialization_level.map(SpecializationLevel::level),
            OrderingKind::DomainMatch => p.domain_match.map(DomainMatch::level),
        };
        if let Some(level) = level {
            by_level.entry(level).or_default().push(p.id.clone());
        }
    }
    if by_level.len() < 2 {
        return Err(Error::OrderingUnavailable(format!(
            "task '{}' has {} distinct {} level(s); need at least 2",
            set.task_id,
            by_level.len(),
            kind
        )));
    }
    let ranked_groups = by_level
        .into_values()
        .map(|mut ids| {
            ids.sort();
            ids
        })
        .collect();
    Ok(OrderingSpec {
        ordering_kind: kind,
        ranked_groups,
    })
}

// ---------------------------------------------------------------------------
// Catalog document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonaEntry {
    kind: AttributeKind,
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    specialization: Option<SpecializationLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    education: Option<EducationLevel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IrrelevantSection {
    ids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskEntry {
    expert: String,
    dataset: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrderingEntry {
    domain_match: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogDoc {
    personas: BTreeMap<String, PersonaEntry>,
    irrelevant: IrrelevantSection,
    tasks: BTreeMap<String, TaskEntry>,
    orderings: BTreeMap<String, OrderingEntry>,
}

/// A loaded persona catalog: the raw document plus one derived [`PersonaSet`]
/// per task. Immutable after load and safe to share across threads.
#[derive(Debug, Clone)]
pub struct Catalog {
    doc: CatalogDoc,
    sets: BTreeMap<String, PersonaSet>,
}

/// The catalog shipped with the harness: the full study design (12 names,
/// 6 colors, 6 education levels, per-dataset static and out-of-domain
/// experts, dynamic-expert placeholders) across all 27 tasks.
pub const BUNDLED_CATALOG: &str = include_str!("../data/catalog.toml");

impl Catalog {
    pub fn load(path: impl AsRef<Path>) -> Result<Catalog> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Catalog::from_toml(&text, &path.display().to_string())
    }

    pub fn bundled() -> Catalog {
        Catalog::from_toml(BUNDLED_CATALOG, "bundled catalog")
            .expect("bundled catalog must parse")
    }

    /// Parse a catalog document. `origin` names the source in errors.
    pub fn from_toml(text: &str, origin: &str) -> Result<Catalog> {
        if text.trim().is_empty() {
            return Err(Error::parse(origin, "catalog file is empty"));
        }
        let doc: CatalogDoc =
            toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        let mut sets = BTreeMap::new();
        for task_id in doc.tasks.keys() {
            let set = build_persona_set(&doc, task_id, origin)?;
            set.validate()?;
            sets.insert(task_id.clone(), set);
        }
        Ok(Catalog { doc, sets })
    }

    pub fn persona_sets(&self) -> impl Iterator<Item = &PersonaSet> {
        self.sets.values()
    }

    pub fn persona_set(&self, task_id: &str) -> Option<&PersonaSet> {
        self.sets.get(task_id)
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &str> {
        self.sets.keys().map(String::as_str)
    }

    /// Dataset kind of a task, used to select dynamic-expert demonstrations.
    pub fn dataset_kind(&self, task_id: &str) -> Option<&str> {
        self.doc.tasks.get(task_id).map(|t| t.dataset.as_str())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&self.doc).expect("catalog document serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Content digest of the canonical serialization, recorded in manifests.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }
}

/// Load a catalog file and return the per-task persona sets it defines.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    Catalog::load(path)
}

fn make_persona(id: &str, entry: &PersonaEntry) -> Persona {
    Persona {
        id: id.to_string(),
        attribute_kind: entry.kind,
        description: entry.description.clone(),
        expertise_domain: entry.domain.clone(),
        specialization_level: entry.specialization,
        domain_match: None,
        education_level: entry.education,
    }
}

fn build_persona_set(doc: &CatalogDoc, task_id: &str, origin: &str) -> Result<PersonaSet> {
    let task = &doc.tasks[task_id];
    let locus = format!("{origin}: task '{task_id}'");
    let lookup = |id: &str| -> Result<&PersonaEntry> {
        doc.personas
            .get(id)
            .ok_or_else(|| Error::parse(&locus, format!("unknown persona id '{id}'")))
    };

    let mut members: BTreeMap<String, Persona> = BTreeMap::new();

    // Study-wide members: the baseline, education personas, dynamic experts,
    // and everything declared irrelevant.
    for (id, entry) in &doc.personas {
        let global = entry.kind == AttributeKind::NoPersona
            || entry.kind == AttributeKind::Education
            || entry.specialization.is_some();
        if global {
            members.insert(id.clone(), make_persona(id, entry));
        }
    }
    for id in &doc.irrelevant.ids {
        members.insert(id.clone(), make_persona(id, lookup(id)?));
    }

    // Task-specific experts, with their domain match taken from the explicit
    // group position: first group is out-of-domain, last is in-domain, any
    // middle group is related-domain.
    let ordering = doc
        .orderings
        .get(task_id)
        .ok_or_else(|| Error::parse(&locus, "missing [orderings] entry"))?;
    let n_groups = ordering.domain_match.len();
    if !(2..=3).contains(&n_groups) {
        return Err(Error::parse(
            &locus,
            format!("domain_match ordering must have 2 or 3 groups, found {n_groups}"),
        ));
    }
    for (gi, group) in ordering.domain_match.iter().enumerate() {
        let level = if gi == 0 {
            DomainMatch::OutOfDomain
        } else if gi + 1 == n_groups {
            DomainMatch::InDomain
        } else {
            DomainMatch::RelatedDomain
        };
        for id in group {
            let mut p = make_persona(id, lookup(id)?);
            p.domain_match = Some(level);
            members.insert(id.clone(), p);
        }
    }

    let last_group = &ordering.domain_match[n_groups - 1];
    if !last_group.contains(&task.expert) {
        return Err(Error::parse(
            &locus,
            format!("expert '{}' is not in the in-domain ordering group", task.expert),
        ));
    }

    let mut set = PersonaSet {
        task_id: task_id.to_string(),
        members: members.into_values().collect(),
        irrelevant_ids: doc.irrelevant.ids.iter().cloned().collect(),
        expected_orderings: Vec::new(),
    };

    let mut orderings = vec![OrderingSpec {
        ordering_kind: OrderingKind::DomainMatch,
        ranked_groups: ordering.domain_match.clone(),
    }];
    if let Ok(edu) = expected_ordering(&set, OrderingKind::Education) {
        orderings.push(edu);
    }
    if let Ok(spec) = expected_ordering(&set, OrderingKind::Specialization) {
        orderings.push(spec);
    }
    set.expected_orderings = orderings;
    Ok(set)
}

// ---------------------------------------------------------------------------
// Task instances
// ---------------------------------------------------------------------------

/// How an instance's answer is extracted and compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerType {
    MultipleChoice,
    Numeric,
    MathExpression,
}

/// A single gradeable question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub instance_id: String,
    pub task_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    pub gold: String,
    pub answer_type: AnswerType,
}

/// Letter label for a zero-based choice index: 0 -> "A", 1 -> "B", ...
pub fn choice_label(index: usize) -> char {
    (b'A' + index as u8) as char
}

impl TaskInstance {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.gold.is_empty() {
            return Err("missing gold answer".into());
        }
        match self.answer_type {
            AnswerType::MultipleChoice => {
                let choices = self
                    .choices
                    .as_ref()
                    .ok_or("multiple_choice instance requires choices")?;
                if choices.is_empty() {
                    return Err("multiple_choice instance requires at least one choice".into());
                }
                let valid: Vec<String> =
                    (0..choices.len()).map(|i| choice_label(i).to_string()).collect();
                if !valid.contains(&self.gold) {
                    return Err(format!(
                        "gold '{}' is not a valid choice label (choices: {})",
                        self.gold,
                        valid.join(", ")
                    ));
                }
            }
            AnswerType::Numeric | AnswerType::MathExpression => {
                if self.choices.is_some() {
                    return Err("choices are only valid on multiple_choice instances".into());
                }
            }
        }
        Ok(())
    }
}

/// Load task instances from a JSONL file, one instance per line, preserving
/// file order. Any invalid line aborts the load; the error reports every
/// offending line.
pub fn load_tasks(path: impl AsRef<Path>) -> Result<Vec<TaskInstance>> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    load_tasks_str(&text, &path.display().to_string())
}

pub fn load_tasks_str(text: &str, origin: &str) -> Result<Vec<TaskInstance>> {
    let mut instances = Vec::new();
    let mut problems = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TaskInstance>(line) {
            Ok(instance) => {
                if let Err(msg) = instance.validate() {
                    problems.push(format!("line {lineno}: {msg}"));
                } else if !seen_ids.insert(instance.instance_id.clone()) {
                    problems.push(format!(
                        "line {lineno}: duplicate instance_id '{}'",
                        instance.instance_id
                    ));
                } else {
                    instances.push(instance);
                }
            }
            Err(e) => problems.push(format!("line {lineno}: {e}")),
        }
    }
    if !problems.is_empty() {
        return Err(Error::parse(origin, problems.join("; ")));
    }
    if instances.is_empty() {
        return Err(Error::parse(origin, "task file contains no instances"));
    }
    Ok(instances)
}

/// Content digest of a task file's canonical JSONL serialization.
pub fn tasks_digest(instances: &[TaskInstance]) -> String {
    let mut hasher = Sha256::new();
    for instance in instances {
        hasher.update(serde_json::to_string(instance).expect("instance serializes"));
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}
