//! File schemas, DOT export and the command surface.
//!
//! Every document is JSON with a required `"version": 1`. Commands write
//! documents to stdout and diagnostics to stderr. Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | unreadable, unparsable or invalid input |
//! | 2 | no alignment exists |
//! | 3 | the state budget was exceeded |
//! | 4 | `check` found violations |
//! | 64 | bad command line |

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{
    align, relaxed_align, verify_alignment, AlignError, Alignment, Cost, CostParams, Move, MoveKind, SearchOptions,
    SearchStats,
};
use crate::diagnosis::{classify_with_log, trust_report, DeviationRecord, TrustCounts};
use crate::log::{derive_order_from_timestamps, project_log, Event, FragmentOf, SystemLog};
use crate::objects::{ObjectMultiset, ObjectUniverse, Role, RoleKind};
use crate::pnid::{Arc, Label, Marking, Place, ProcessModel, ProjectionTag, Tpnid, Transition, TransitionFiring, Variable};
use crate::poset::Poset;
use crate::relaxed_model::build_relaxed_model;
use crate::testkit::{generate_run, inject, run_as_log, IssueKind, IssueParams, IssueSpec, Target};

pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("the alignment has {0} violation(s)")]
    CheckFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Align(AlignError::NoAlignment) => 2,
            CliError::Align(AlignError::BudgetExceeded(_)) => 3,
            CliError::CheckFailed(_) => 4,
            _ => 1,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn one() -> u32 {
    1
}

fn is_one(n: &u32) -> bool {
    *n == 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub id: String,
    pub role: String,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableEntry {
    pub name: String,
    pub role: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fresh: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaceEntry {
    pub id: String,
    #[serde(rename = "type")]
    pub alpha: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionTag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcEntry {
    pub place: String,
    /// One variable sequence per token.
    pub vars: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub id: String,
    /// The activity; `null` for a silent transition.
    pub label: Option<String>,
    #[serde(default)]
    pub inputs: Vec<ArcEntry>,
    #[serde(default)]
    pub outputs: Vec<ArcEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionTag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenEntry {
    pub place: String,
    pub token: Vec<String>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub version: u32,
    pub roles: Vec<Role>,
    #[serde(default)]
    pub objects: Vec<ObjectEntry>,
    pub variables: Vec<VariableEntry>,
    pub places: Vec<PlaceEntry>,
    pub transitions: Vec<TransitionEntry>,
    #[serde(default)]
    pub initial_marking: Vec<TokenEntry>,
    #[serde(default)]
    pub final_marking: Vec<TokenEntry>,
}

fn check_version(v: u32) -> Result<(), CliError> {
    if v != VERSION {
        return Err(CliError::Invalid(format!("unsupported document version {v}, expected {VERSION}")));
    }
    Ok(())
}

fn universe_entries(u: &ObjectUniverse) -> (Vec<Role>, Vec<ObjectEntry>) {
    let objects = u
        .objects()
        .iter()
        .map(|(o, count)| ObjectEntry { id: o.to_string(), role: u.role_of(o).unwrap_or_default().to_string(), count })
        .collect();
    (u.roles().collect(), objects)
}

fn build_universe(roles: &[Role], objects: &[ObjectEntry]) -> Result<ObjectUniverse, CliError> {
    let mut roles = roles.to_vec();
    for o in objects {
        if !roles.iter().any(|r| r.name == o.role) {
            roles.push(Role::new(o.role.clone(), RoleKind::Expected));
        }
    }
    let mut u = ObjectUniverse::new(roles).map_err(invalid)?;
    for o in objects {
        if u.role_of(&o.id).is_some() {
            return Err(CliError::Invalid(format!("object `{}` declared twice", o.id)));
        }
        u.add_object(&o.id, &o.role, o.count).map_err(invalid)?;
    }
    Ok(u)
}

fn marking_entries(m: &Marking) -> Vec<TokenEntry> {
    m.iter().map(|(p, tok, count)| TokenEntry { place: p.to_string(), token: tok.clone(), count }).collect()
}

fn build_marking(entries: &[TokenEntry], u: &ObjectUniverse) -> Result<Marking, CliError> {
    let mut m = Marking::new();
    for t in entries {
        for o in &t.token {
            if u.role_of(o).is_none() {
                return Err(CliError::Invalid(format!("marking of `{}` names unknown object `{o}`", t.place)));
            }
        }
        m.add(&t.place, t.token.clone(), t.count);
    }
    Ok(m)
}

fn arc_entries(arcs: &[Arc]) -> Vec<ArcEntry> {
    arcs.iter().map(|a| ArcEntry { place: a.place.clone(), vars: a.vars.clone() }).collect()
}

fn arcs(entries: Vec<ArcEntry>) -> Vec<Arc> {
    entries.into_iter().map(|a| Arc { place: a.place, vars: a.vars }).collect()
}

impl ModelDocument {
    pub fn from_model(m: &ProcessModel) -> Self {
        let (roles, objects) = universe_entries(&m.universe);
        ModelDocument {
            version: VERSION,
            roles,
            objects,
            variables: m
                .net
                .variables
                .values()
                .map(|v| VariableEntry { name: v.name.clone(), role: v.role.clone(), fresh: v.fresh })
                .collect(),
            places: m
                .net
                .places
                .values()
                .map(|p| PlaceEntry { id: p.id.clone(), alpha: p.alpha.clone(), projection: p.projection.clone() })
                .collect(),
            transitions: m
                .net
                .transitions
                .values()
                .map(|t| TransitionEntry {
                    id: t.id.clone(),
                    label: t.label.activity().map(str::to_string),
                    inputs: arc_entries(&t.inputs),
                    outputs: arc_entries(&t.outputs),
                    projection: t.projection.clone(),
                })
                .collect(),
            initial_marking: marking_entries(&m.initial),
            final_marking: marking_entries(&m.final_marking),
        }
    }

    pub fn into_model(self) -> Result<ProcessModel, CliError> {
        check_version(self.version)?;
        let universe = build_universe(&self.roles, &self.objects)?;
        let mut net = Tpnid::default();
        for v in self.variables {
            if !universe.has_role(&v.role) {
                return Err(CliError::Invalid(format!("variable `{}` has unknown role `{}`", v.name, v.role)));
            }
            let var = Variable { name: v.name.clone(), role: v.role, fresh: v.fresh };
            if net.variables.insert(v.name.clone(), var).is_some() {
                return Err(CliError::Invalid(format!("variable `{}` declared twice", v.name)));
            }
        }
        for p in self.places {
            if let Some(r) = p.alpha.iter().find(|r| !universe.has_role(r)) {
                return Err(CliError::Invalid(format!("place `{}` has unknown role `{r}`", p.id)));
            }
            let place = Place { id: p.id.clone(), alpha: p.alpha, projection: p.projection };
            if net.places.insert(p.id.clone(), place).is_some() {
                return Err(CliError::Invalid(format!("place `{}` declared twice", p.id)));
            }
        }
        for t in self.transitions {
            let tr = Transition {
                id: t.id.clone(),
                label: t.label.map_or(Label::Silent, Label::Activity),
                inputs: arcs(t.inputs),
                outputs: arcs(t.outputs),
                projection: t.projection,
            };
            if net.transitions.insert(t.id.clone(), tr).is_some() {
                return Err(CliError::Invalid(format!("transition `{}` declared twice", t.id)));
            }
        }
        let initial = build_marking(&self.initial_marking, &universe)?;
        let final_marking = build_marking(&self.final_marking, &universe)?;
        let m = ProcessModel { net, initial, final_marking, universe };
        m.validate().map_err(invalid)?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FragmentEntry {
    pub parent: String,
    pub original: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventEntry {
    pub id: String,
    pub activity: String,
    /// Object ids, repeated for multiplicity.
    pub objects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorder: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragment_of: Option<FragmentEntry>,
}

impl EventEntry {
    pub fn from_event(e: &Event) -> Self {
        EventEntry {
            id: e.id.clone(),
            activity: e.activity.clone(),
            objects: e.objects.elements(),
            timestamp: e.timestamp,
            recorder: e.recorder.clone(),
            fragment_of: e
                .projection_of
                .as_ref()
                .map(|f| FragmentEntry { parent: f.parent.clone(), original: f.original.elements() }),
        }
    }

    pub fn into_event(self) -> Event {
        let mut e = Event::new(self.id, self.activity, self.objects.into_iter().collect());
        e.timestamp = self.timestamp;
        e.recorder = self.recorder;
        e.projection_of =
            self.fragment_of.map(|f| FragmentOf { parent: f.parent, original: f.original.into_iter().collect() });
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogDocument {
    pub version: u32,
    /// Roles with their kinds; roles only named by objects are `expected`.
    #[serde(default)]
    pub roles: Vec<Role>,
    pub objects: Vec<ObjectEntry>,
    pub events: Vec<EventEntry>,
    /// Explicit order pairs. Without them the order follows the timestamps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<(String, String)>>,
    /// Timestamps closer than this are unordered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_tolerance: Option<f64>,
}

impl LogDocument {
    /// The canonical document: the order is always written as its covering
    /// pairs.
    pub fn from_log(l: &SystemLog) -> Self {
        let (roles, objects) = universe_entries(&l.universe);
        LogDocument {
            version: VERSION,
            roles,
            objects,
            events: l.topological_ids().iter().map(|id| EventEntry::from_event(&l.events[id])).collect(),
            order: Some(l.order.covering_relation()),
            timestamp_tolerance: None,
        }
    }

    pub fn into_log(self) -> Result<SystemLog, CliError> {
        check_version(self.version)?;
        let universe = build_universe(&self.roles, &self.objects)?;
        let events: Vec<Event> = self.events.into_iter().map(EventEntry::into_event).collect();
        let pairs = match self.order {
            Some(pairs) => pairs,
            None => {
                let stamps: Vec<(String, f64)> =
                    events.iter().filter_map(|e| e.timestamp.map(|t| (e.id.clone(), t))).collect();
                if stamps.is_empty() {
                    Vec::new()
                } else if stamps.len() < events.len() {
                    return Err(invalid("without an explicit order every event needs a timestamp"));
                } else {
                    derive_order_from_timestamps(&stamps, self.timestamp_tolerance.unwrap_or(0.0))
                        .map_err(invalid)?
                        .covering_relation()
                }
            }
        };
        SystemLog::new(events, pairs, universe).map_err(invalid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveEntry {
    pub id: String,
    pub kind: MoveKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<EventEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub firing: Option<TransitionFiring>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub substituted_roles: BTreeSet<String>,
    pub cost: Cost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustEntry {
    pub role: String,
    pub activity: String,
    #[serde(flatten)]
    pub counts: TrustCounts,
    /// Synchronized slots over all slots, as an exact fraction.
    pub score: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub deviations: Vec<DeviationRecord>,
    pub trust: Vec<TrustEntry>,
}

impl DiagnosisReport {
    pub fn new(al: &Alignment, m: &ProcessModel, l: &SystemLog) -> Self {
        let trust = trust_report(al, &l.universe)
            .entries
            .into_iter()
            .map(|((role, activity), counts)| {
                let score = counts.trust_score().to_string();
                TrustEntry { role, activity, counts, score }
            })
            .collect();
        DiagnosisReport { deviations: classify_with_log(al, m, l), trust }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentDocument {
    pub version: u32,
    pub relaxed: bool,
    pub total_cost: Cost,
    pub moves: Vec<MoveEntry>,
    /// Covering pairs of the alignment order, by move id.
    pub order: Vec<(String, String)>,
    /// Roles of the objects the moves mention.
    #[serde(default)]
    pub objects: Vec<ObjectEntry>,
    #[serde(default)]
    pub stats: SearchStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<DiagnosisReport>,
}

impl AlignmentDocument {
    pub fn from_alignment(al: &Alignment, universe: &ObjectUniverse) -> Self {
        let mut mentioned = BTreeSet::new();
        for m in &al.moves {
            mentioned.extend(m.event.iter().flat_map(|e| e.objects.support()));
            mentioned.extend(m.firing.iter().flat_map(|f| f.involved().support()));
        }
        let objects = mentioned
            .into_iter()
            .filter_map(|o| {
                let role = universe.role_of(&o)?.to_string();
                Some(ObjectEntry { count: universe.objects().count(&o), id: o, role })
            })
            .collect();
        AlignmentDocument {
            version: VERSION,
            relaxed: al.relaxed,
            total_cost: al.total_cost,
            moves: al
                .moves
                .iter()
                .map(|m| MoveEntry {
                    id: m.id.clone(),
                    kind: m.kind,
                    label: m.label.clone(),
                    event: m.event.as_ref().map(EventEntry::from_event),
                    firing: m.firing.clone(),
                    substituted_roles: m.substituted_roles.clone(),
                    cost: m.cost,
                })
                .collect(),
            order: al.order.covering_relation(),
            objects,
            stats: al.stats.clone(),
            diagnosis: None,
        }
    }

    pub fn into_alignment(self) -> Result<Alignment, CliError> {
        check_version(self.version)?;
        let moves: Vec<Move> = self
            .moves
            .into_iter()
            .map(|m| Move {
                id: m.id,
                kind: m.kind,
                label: m.label,
                event: m.event.map(EventEntry::into_event),
                firing: m.firing,
                substituted_roles: m.substituted_roles,
                cost: m.cost,
            })
            .collect();
        let ids: BTreeSet<&String> = moves.iter().map(|m| &m.id).collect();
        if ids.len() != moves.len() {
            return Err(invalid("move ids are not unique"));
        }
        let order = Poset::new(moves.iter().map(|m| m.id.clone()), self.order).map_err(invalid)?;
        Ok(Alignment { moves, order, total_cost: self.total_cost, relaxed: self.relaxed, stats: self.stats })
    }
}

/// Any of the documents, told apart by their keys.
#[derive(Debug, Clone, PartialEq)]
pub enum Document {
    Model(ModelDocument),
    Log(LogDocument),
    Alignment(AlignmentDocument),
}

fn parse_text<T: DeserializeOwned>(path: &str, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        let message = message.rsplit_once(" at line ").map_or(message.as_str(), |(m, _)| m).to_string();
        CliError::Parse { path: path.to_string(), line: e.line(), column: e.column(), message }
    })
}

fn read(path: &Path) -> Result<(String, String), CliError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: name.clone(), source })?;
    Ok((name, text))
}

pub fn parse_document(path: &str, text: &str) -> Result<Document, CliError> {
    let value: serde_json::Value = parse_text(path, text)?;
    let has = |k: &str| value.get(k).is_some();
    if has("transitions") {
        Ok(Document::Model(parse_text(path, text)?))
    } else if has("moves") {
        Ok(Document::Alignment(parse_text(path, text)?))
    } else if has("events") {
        Ok(Document::Log(parse_text(path, text)?))
    } else {
        Err(CliError::Invalid(format!("{path}: not a model, log or alignment document")))
    }
}

pub fn read_model(path: &Path) -> Result<ProcessModel, CliError> {
    let (name, text) = read(path)?;
    parse_text::<ModelDocument>(&name, &text)?.into_model()
}

pub fn read_log(path: &Path) -> Result<SystemLog, CliError> {
    let (name, text) = read(path)?;
    parse_text::<LogDocument>(&name, &text)?.into_log()
}

pub fn read_alignment(path: &Path) -> Result<Alignment, CliError> {
    let (name, text) = read(path)?;
    parse_text::<AlignmentDocument>(&name, &text)?.into_alignment()
}

pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ColorBy {
    Kind,
    Role,
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn node_label(activity: &str, objs: &ObjectMultiset) -> String {
    format!("{activity}^({})", objs.elements().join(","))
}

fn kind_class(kind: MoveKind, silent: bool) -> (&'static str, &'static str) {
    match kind {
        MoveKind::Sync => ("sync", "white"),
        MoveKind::RelaxedSync => ("relaxed_sync", "lightblue"),
        MoveKind::SubstituteSync => ("substitute_sync", "lightcyan"),
        MoveKind::Log => ("log", "gold"),
        MoveKind::RelaxedLog => ("relaxed_log", "lightyellow"),
        MoveKind::Model if silent => ("silent", "lightgray"),
        MoveKind::RelaxedModel if silent => ("relaxed_silent", "lightgray"),
        MoveKind::Model => ("model", "plum"),
        MoveKind::RelaxedModel => ("relaxed_model", "thistle"),
        MoveKind::CorrelationSilent => ("correlation", "lightgray"),
    }
}

const PALETTE: [&str; 8] =
    ["lightblue", "palegreen", "gold", "plum", "lightsalmon", "khaki", "lightpink", "paleturquoise"];

struct DotNode {
    id: String,
    label: String,
    kind_class: (&'static str, &'static str),
    roles: BTreeSet<String>,
    deviating: bool,
}

fn render_dot(name: &str, nodes: &[DotNode], edges: &[(String, String)], color_by: ColorBy) -> String {
    let role_sets: BTreeSet<&BTreeSet<String>> = nodes.iter().map(|n| &n.roles).collect();
    let role_color: BTreeMap<&BTreeSet<String>, &str> =
        role_sets.into_iter().enumerate().map(|(i, r)| (r, PALETTE[i % PALETTE.len()])).collect();
    let mut out = format!("digraph {name} {{\n");
    for n in nodes {
        let (class, fill) = match color_by {
            ColorBy::Kind => (n.kind_class.0.to_string(), n.kind_class.1),
            ColorBy::Role => {
                let key = n.roles.iter().cloned().collect::<Vec<_>>().join("_");
                (format!("roles_{key}"), role_color[&n.roles])
            }
        };
        let border = if n.deviating { ", penwidth=2" } else { "" };
        let _ = writeln!(
            out,
            "  {} [label={}, class={}, style=filled, fillcolor={}{border}];",
            dot_id(&n.id),
            dot_id(&n.label),
            dot_id(&class),
            dot_id(fill)
        );
    }
    for (a, b) in edges {
        let _ = writeln!(out, "  {} -> {};", dot_id(a), dot_id(b));
    }
    out.push_str("}\n");
    out
}

/// The role of an object: from the universe, else the role prefix of a
/// canonical fresh name `{role}{k}`.
fn role_name(o: &str, roles: &BTreeMap<String, String>) -> String {
    roles.get(o).cloned().unwrap_or_else(|| o.trim_end_matches(|c: char| c.is_ascii_digit()).to_string())
}

/// DOT text for an alignment document: one node per move labeled
/// `activity^(objects)`, one edge per covering pair.
pub fn alignment_dot(doc: &AlignmentDocument, color_by: ColorBy) -> String {
    let role_of: BTreeMap<String, String> = doc.objects.iter().map(|o| (o.id.clone(), o.role.clone())).collect();
    let nodes: Vec<DotNode> = doc
        .moves
        .iter()
        .map(|m| {
            let objs: ObjectMultiset = match (&m.event, &m.firing) {
                (Some(e), _) => e.objects.iter().cloned().collect(),
                (None, Some(f)) => f.involved(),
                _ => ObjectMultiset::new(),
            };
            let silent = m.label.is_none();
            let activity = m.label.clone().unwrap_or_else(|| m.firing.as_ref().map_or("τ".into(), |f| f.transition.clone()));
            let roles = objs.iter().map(|(o, _)| role_name(o, &role_of)).collect();
            DotNode {
                id: m.id.clone(),
                label: node_label(&activity, &objs),
                kind_class: kind_class(m.kind, silent),
                roles,
                deviating: m.kind.is_deviating(silent),
            }
        })
        .collect();
    render_dot("alignment", &nodes, &doc.order, color_by)
}

/// DOT text for a log: one node per event, one edge per covering pair.
pub fn log_dot(l: &SystemLog, color_by: ColorBy) -> String {
    let role_of: BTreeMap<String, String> =
        l.universe.objects().iter().filter_map(|(o, _)| Some((o.to_string(), l.universe.role_of(o)?.to_string()))).collect();
    let nodes: Vec<DotNode> = l
        .topological_ids()
        .iter()
        .map(|id| {
            let e = &l.events[id];
            DotNode {
                id: id.clone(),
                label: node_label(&e.activity, &e.objects),
                kind_class: ("event", "white"),
                roles: e.objects.iter().map(|(o, _)| role_name(o, &role_of)).collect(),
                deviating: false,
            }
        })
        .collect();
    render_dot("log", &nodes, &l.order.covering_relation(), color_by)
}

#[derive(Debug, Parser)]
#[command(name = "relalign", version, about = "Regular and relaxed alignments of object-centric logs and nets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CostArgs {
    /// The ε of the relaxed cost function, as a fraction like `1/1024`.
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub log_weight: Option<String>,
    #[arg(long)]
    pub model_weight: Option<String>,
    /// Roles whose objects a synchronous move may exchange.
    #[arg(long, value_delimiter = ',')]
    pub substitutable_roles: Vec<String>,
    #[arg(long)]
    pub max_states: Option<usize>,
    /// Require the exact final marking.
    #[arg(long)]
    pub strict_final: bool,
}

impl CostArgs {
    fn params(&self, relaxed: bool) -> Result<CostParams, CliError> {
        let cost = |s: &Option<String>, name: &str| -> Result<Option<Cost>, CliError> {
            s.as_ref().map(|s| s.parse().map_err(|_| CliError::Invalid(format!("bad {name} `{s}`")))).transpose()
        };
        let mut p = if relaxed { CostParams::relaxed() } else { CostParams::standard() };
        if let Some(e) = cost(&self.epsilon, "epsilon")? {
            p = p.with_epsilon(e);
        }
        let lw = cost(&self.log_weight, "log weight")?.unwrap_or(p.log_weight);
        let mw = cost(&self.model_weight, "model weight")?.unwrap_or(p.model_weight);
        p = p.with_weights(lw, mw);
        p.validate().map_err(CliError::Invalid)?;
        Ok(p)
    }

    fn options(&self) -> SearchOptions {
        let mut o = SearchOptions::default().substitutable(self.substitutable_roles.iter().cloned());
        if let Some(n) = self.max_states {
            o.max_states = n;
        }
        o.strict_final = self.strict_final;
        o
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align a log with a model and report the deviations.
    Align {
        model: PathBuf,
        log: PathBuf,
        /// Search for a relaxed alignment.
        #[arg(long)]
        relaxed: bool,
        #[command(flatten)]
        cost: CostArgs,
    },
    /// Write the relaxed model of a model.
    RelaxModel { model: PathBuf },
    /// Project a model or a log onto roles or objects.
    Project {
        document: PathBuf,
        /// Comma-separated roles, or `all`.
        #[arg(long, value_delimiter = ',', required_unless_present = "objects", conflicts_with = "objects")]
        roles: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        objects: Vec<String>,
    },
    /// Verify an alignment document against its log and model.
    Check {
        model: PathBuf,
        log: PathBuf,
        alignment: PathBuf,
        #[command(flatten)]
        cost: CostArgs,
    },
    /// Simulate a run of a model and write it as a log.
    Generate {
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        max_firings: usize,
        /// Tag every event with the given recorder.
        #[arg(long)]
        recorder: Option<String>,
    },
    /// Inject a data-quality issue into a log.
    Inject {
        log: PathBuf,
        /// One of mi_e, in_e, mi_o, in_o, mi_p, in_p.
        #[arg(long)]
        kind: String,
        #[arg(long, conflicts_with_all = ["role", "id"])]
        activity: Option<String>,
        #[arg(long, conflicts_with = "id")]
        role: Option<String>,
        /// An event id, or a prefix ending in `*`.
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        object: Option<String>,
        #[arg(long)]
        replacement: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render an alignment or a log as a DOT graph.
    ExportDot {
        document: PathBuf,
        #[arg(long, value_enum, default_value = "kind")]
        color_by: ColorBy,
    },
}

fn objects_arg(list: &[String], u: &ObjectUniverse) -> Result<ObjectMultiset, CliError> {
    let mut objs = ObjectMultiset::new();
    for o in list {
        if u.role_of(o).is_none() {
            return Err(CliError::Invalid(format!("unknown object `{o}`")));
        }
        objs.insert(o.clone(), u.objects().count(o));
    }
    Ok(objs)
}

fn roles_arg(list: &[String], u: &ObjectUniverse) -> Result<ObjectMultiset, CliError> {
    if list.iter().any(|r| r == "all") {
        return Ok(u.objects().clone());
    }
    u.objects_of_roles(&list.iter().cloned().collect()).map_err(invalid)
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<(), CliError> {
    let text = match cmd {
        Command::Align { model, log, relaxed, cost } => {
            let (m, l) = (read_model(&model)?, read_log(&log)?);
            let (params, opts) = (cost.params(relaxed)?, cost.options());
            let al = if relaxed { relaxed_align(&l, &m, &params, &opts)? } else { align(&l, &m, &params, &opts)? };
            let mut doc = AlignmentDocument::from_alignment(&al, &l.universe);
            doc.diagnosis = Some(DiagnosisReport::new(&al, &m, &l));
            to_json(&doc)
        }
        Command::RelaxModel { model } => to_json(&ModelDocument::from_model(&build_relaxed_model(&read_model(&model)?).model)),
        Command::Project { document, roles, objects } => {
            let (name, text) = read(&document)?;
            let pick = |u: &ObjectUniverse| if roles.is_empty() { objects_arg(&objects, u) } else { roles_arg(&roles, u) };
            match parse_document(&name, &text)? {
                Document::Model(d) => {
                    let m = d.into_model()?;
                    to_json(&ModelDocument::from_model(&m.project_net(&pick(&m.universe)?)))
                }
                Document::Log(d) => {
                    let l = d.into_log()?;
                    to_json(&LogDocument::from_log(&project_log(&l, &pick(&l.universe)?)))
                }
                Document::Alignment(_) => return Err(invalid("only models and logs can be projected")),
            }
        }
        Command::Check { model, log, alignment, cost } => {
            let (m, l, al) = (read_model(&model)?, read_log(&log)?, read_alignment(&alignment)?);
            let report = verify_alignment(&al, &l, &m, &cost.params(al.relaxed)?, &cost.options());
            out.write_all(to_json(&serde_json::json!({ "version": VERSION, "ok": report.ok(), "violations": report.violations })).as_bytes())
                .map_err(|source| CliError::Io { path: "stdout".into(), source })?;
            if !report.ok() {
                return Err(CliError::CheckFailed(report.violations.len()));
            }
            return Ok(());
        }
        Command::Generate { model, seed, max_firings, recorder } => {
            let m = read_model(&model)?;
            let run = generate_run(&m, seed, max_firings).map_err(invalid)?;
            let tag = recorder.map(|r| move |_: &str| r.clone());
            let tag_ref = tag.as_ref().map(|f| f as &dyn Fn(&str) -> String);
            to_json(&LogDocument::from_log(&run_as_log(&m, &run, tag_ref).map_err(invalid)?))
        }
        Command::Inject { log, kind, activity, role, id, object, replacement, seed } => {
            let l = read_log(&log)?;
            let kind: IssueKind = serde_json::from_value(serde_json::Value::String(kind.clone()))
                .map_err(|_| CliError::Invalid(format!("unknown issue kind `{kind}`")))?;
            let target = match (activity, role, id) {
                (Some(a), _, _) => Target::Activity(a),
                (_, Some(r), _) => Target::Role(r),
                (_, _, Some(i)) => Target::Id(i),
                _ => Target::Any,
            };
            let spec = IssueSpec { kind, target, params: IssueParams { object, replacement } };
            to_json(&LogDocument::from_log(&inject(&l, &spec, seed).map_err(invalid)?))
        }
        Command::ExportDot { document, color_by } => {
            let (name, text) = read(&document)?;
            match parse_document(&name, &text)? {
                Document::Alignment(d) => {
                    check_version(d.version)?;
                    alignment_dot(&d, color_by)
                }
                Document::Log(d) => log_dot(&d.into_log()?, color_by),
                Document::Model(_) => return Err(invalid("only alignments and logs can be exported")),
            }
        }
    };
    out.write_all(text.as_bytes()).map_err(|source| CliError::Io { path: "stdout".into(), source })
}

/// Runs the command line `args` and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { 64 } else { 0 };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::running_example as rx;

    #[test]
    fn model_document_round_trip() {
        let m = rx::model();
        let doc = ModelDocument::from_model(&m);
        let text = to_json(&doc);
        let back: ModelDocument = parse_text("m", &text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.into_model().unwrap(), m);
    }

    #[test]
    fn log_document_round_trip() {
        for l in [rx::log_one(), rx::log_two(), rx::log_three(), rx::log_four()] {
            let doc = LogDocument::from_log(&l);
            let back = parse_text::<LogDocument>("l", &to_json(&doc)).unwrap().into_log().unwrap();
            assert_eq!(back.events, l.events);
            assert_eq!(back.order, l.order);
            assert_eq!(LogDocument::from_log(&back), doc);
        }
    }

    #[test]
    fn explicit_order_wins_over_timestamps() {
        let text = r#"{"version": 1, "objects": [{"id": "a1", "role": "a"}],
            "events": [{"id": "e1", "activity": "x", "objects": ["a1"], "timestamp": 2.0},
                       {"id": "e2", "activity": "y", "objects": ["a1"], "timestamp": 1.0}],
            "order": [["e1", "e2"]]}"#;
        let l = parse_text::<LogDocument>("l", text).unwrap().into_log().unwrap();
        assert!(l.order.precedes(&"e1".to_string(), &"e2".to_string()));
        let stamped = text.replace(r#""order": [["e1", "e2"]]"#, r#""timestamp_tolerance": 0.5"#);
        let l = parse_text::<LogDocument>("l", &stamped).unwrap().into_log().unwrap();
        assert!(l.order.precedes(&"e2".to_string(), &"e1".to_string()));
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = parse_text::<LogDocument>("bad.json", "{\n  \"version\": 1,\n  \"events\": [}\n").unwrap_err();
        match &err {
            CliError::Parse { line, column, .. } => assert_eq!((*line, *column), (3, 14)),
            e => panic!("{e}"),
        }
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().starts_with("bad.json:3:14: "));
    }

    #[test]
    fn invalid_documents_are_rejected() {
        let mut doc = ModelDocument::from_model(&rx::model());
        doc.version = 2;
        assert!(doc.clone().into_model().is_err());
        doc.version = 1;
        doc.transitions[0].inputs[0].place = "nowhere".into();
        assert!(doc.into_model().is_err());
        let text = r#"{"version": 1, "objects": [], "events": [{"id": "e1", "activity": "x", "objects": ["ghost"]}]}"#;
        assert!(parse_text::<LogDocument>("l", text).unwrap().into_log().is_err());
        let text = r#"{"version": 1, "objects": [{"id": "a1", "role": "a"}],
            "events": [{"id": "e1", "activity": "x", "objects": ["a1"]}], "order": [["e1", "e9"]]}"#;
        assert!(parse_text::<LogDocument>("l", text).unwrap().into_log().is_err());
    }

    #[test]
    fn empty_alignment_has_empty_graph_body() {
        let doc = AlignmentDocument {
            version: 1,
            relaxed: false,
            total_cost: Cost::zero(),
            moves: Vec::new(),
            order: Vec::new(),
            objects: Vec::new(),
            stats: SearchStats::default(),
            diagnosis: None,
        };
        assert_eq!(alignment_dot(&doc, ColorBy::Kind), "digraph alignment {\n}\n");
    }

    #[test]
    fn alignment_document_round_trip() {
        let (l, m) = (rx::log_one(), rx::model());
        let al = align(&l, &m, &CostParams::standard(), &SearchOptions::default()).unwrap();
        let doc = AlignmentDocument::from_alignment(&al, &l.universe);
        let back = parse_text::<AlignmentDocument>("a", &to_json(&doc)).unwrap();
        assert_eq!(back, doc);
        let al2 = back.into_alignment().unwrap();
        assert_eq!(al2.moves, al.moves);
        assert_eq!(al2.order, al.order);
    }

    #[test]
    fn usage_errors_do_not_clash_with_search_codes() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["relalign", "align"], &mut out, &mut err), 64);
        assert_eq!(run(["relalign", "--help"], &mut out, &mut err), 0);
    }
}
