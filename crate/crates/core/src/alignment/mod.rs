//! Alignments between a system log and a process model, in the regular and
//! the relaxed setting, together with an independent verifier and a
//! brute-force reference search.

mod cost;
mod oracle;
mod search;
mod verify;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{Event, LogError, SystemLog};
use crate::objects::{ObjectMultiset, ObjectUniverse};
use crate::pnid::{ExecutionPoset, Marking, NetError, ProcessModel, TransitionFiring};
use crate::poset::Poset;
use crate::relaxed_model::RelaxedModel;

pub use cost::{move_cost, move_cost_relaxed, move_cost_standard, Cost, CostParams, CostParseError, CostScheme, MoveShape};
pub use oracle::{brute_force_align, BruteForce};
pub use search::{align, relaxed_align, relaxed_align_with};
pub use verify::{verify_alignment, VerifyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Sync,
    Log,
    Model,
    RelaxedSync,
    RelaxedLog,
    RelaxedModel,
    SubstituteSync,
    CorrelationSilent,
}

impl MoveKind {
    pub fn has_event(self) -> bool {
        use MoveKind::*;
        matches!(self, Sync | Log | RelaxedSync | RelaxedLog | SubstituteSync)
    }

    pub fn has_firing(self) -> bool {
        use MoveKind::*;
        !matches!(self, Log | RelaxedLog)
    }

    pub fn is_synchronous(self) -> bool {
        use MoveKind::*;
        matches!(self, Sync | RelaxedSync | SubstituteSync)
    }

    /// Log-only and visible model-only moves.
    pub fn is_deviating(self, silent: bool) -> bool {
        use MoveKind::*;
        match self {
            Log | RelaxedLog => true,
            Model | RelaxedModel => !silent,
            _ => false,
        }
    }

    pub fn is_relaxed(self) -> bool {
        use MoveKind::*;
        matches!(self, RelaxedSync | RelaxedLog | RelaxedModel | SubstituteSync | CorrelationSilent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub id: String,
    pub kind: MoveKind,
    /// The activity of the move, `None` for silent firings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// The recorded event or fragment the move consumes.
    pub event: Option<Event>,
    pub firing: Option<TransitionFiring>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub substituted_roles: BTreeSet<String>,
    pub cost: Cost,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub expanded: usize,
    pub generated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Moves in the order the search produced them.
    pub moves: Vec<Move>,
    pub order: Poset<String>,
    pub total_cost: Cost,
    pub relaxed: bool,
    pub stats: SearchStats,
}

impl Alignment {
    pub fn get(&self, id: &str) -> Option<&Move> {
        self.moves.iter().find(|m| m.id == id)
    }

    pub fn count(&self, kind: MoveKind) -> usize {
        self.moves.iter().filter(|m| m.kind == kind).count()
    }

    pub fn with_event(&self, id: &str) -> Option<&Move> {
        self.moves.iter().find(|m| m.event.as_ref().is_some_and(|e| e.id == id))
    }

    /// The log side: consumed events and fragments, ordered by the alignment.
    pub fn log_side(&self, universe: &ObjectUniverse) -> Result<SystemLog, LogError> {
        let mut to_event = BTreeMap::new();
        let mut events = Vec::new();
        for m in &self.moves {
            if let Some(e) = &m.event {
                to_event.insert(m.id.clone(), e.id.clone());
                events.push(e.clone());
            }
        }
        let keep: BTreeSet<String> = to_event.keys().cloned().collect();
        let order = self.order.project(&keep).relabel(|id| to_event[id].clone());
        SystemLog::new(events, order.pairs(), universe.clone())
    }

    /// The model side: firings ordered by the alignment.
    pub fn model_side(&self) -> ExecutionPoset {
        let mut to_firing = BTreeMap::new();
        let mut firings = BTreeMap::new();
        for m in &self.moves {
            if let Some(f) = &m.firing {
                to_firing.insert(m.id.clone(), f.id.clone());
                firings.insert(f.id.clone(), f.clone());
            }
        }
        let keep: BTreeSet<String> = to_firing.keys().cloned().collect();
        let run = self.order.project(&keep).relabel(|id| to_firing[id].clone());
        ExecutionPoset { run, firings }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignError {
    #[error("no alignment exists")]
    NoAlignment,
    #[error("search budget of {0} states exceeded")]
    BudgetExceeded(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchOptions {
    pub max_states: usize,
    /// Require the exact final marking instead of ignoring idle objects.
    pub strict_final: bool,
    /// Roles whose objects a synchronous move may exchange.
    pub substitutable_roles: BTreeSet<String>,
}

pub const DEFAULT_MAX_STATES: usize = 5_000_000;

impl Default for SearchOptions {
    fn default() -> Self {
        let max_states =
            std::env::var("RA_MAX_STATES").ok().and_then(|v| v.parse().ok()).unwrap_or(DEFAULT_MAX_STATES);
        SearchOptions { max_states, strict_final: false, substitutable_roles: BTreeSet::new() }
    }
}

impl SearchOptions {
    pub fn substitutable(mut self, roles: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.substitutable_roles = roles.into_iter().map(Into::into).collect();
        self
    }
}

/// Whether `event` can be matched with a firing of a transition labeled
/// `label` that involves `involved`. Returns the roles whose objects are
/// exchanged, empty for an exact match.
///
/// Objects of a role outside `substitutable` must agree exactly. Objects of
/// a substitutable role either agree, or are disjoint with the same count.
pub fn potential_match(
    event: &Event,
    label: Option<&str>,
    involved: &ObjectMultiset,
    universe: &ObjectUniverse,
    substitutable: &BTreeSet<String>,
) -> Option<BTreeSet<String>> {
    if label != Some(event.activity.as_str()) {
        return None;
    }
    if event.objects == *involved {
        return Some(BTreeSet::new());
    }
    let by_role = |m: &ObjectMultiset| -> BTreeMap<String, ObjectMultiset> {
        let mut out: BTreeMap<String, ObjectMultiset> = BTreeMap::new();
        for (o, c) in m.iter() {
            let role = universe.role_of(o).map_or_else(|| role_from_name(o), str::to_string);
            out.entry(role).or_default().insert(o, c);
        }
        out
    };
    let (ev, fi) = (by_role(&event.objects), by_role(involved));
    let roles: BTreeSet<&String> = ev.keys().chain(fi.keys()).collect();
    let mut substituted = BTreeSet::new();
    for r in roles {
        let empty = ObjectMultiset::new();
        let (a, b) = (ev.get(r).unwrap_or(&empty), fi.get(r).unwrap_or(&empty));
        if a == b {
            continue;
        }
        let disjoint = a.iter().all(|(o, _)| b.count(o) == 0);
        if !substitutable.contains(r) || a.size() != b.size() || a.is_empty() || !disjoint {
            return None;
        }
        substituted.insert(r.clone());
    }
    Some(substituted)
}

/// Role of an object minted by the search under a canonical `{role}{k}` name.
pub(crate) fn role_from_name(o: &str) -> String {
    o.trim_end_matches(|c: char| c.is_ascii_digit()).to_string()
}

/// Whether `marking` counts as final. In strict mode it must equal the
/// model's final marking. Otherwise objects that are not persistent and
/// still sit exactly where the initial marking put them are ignored on both
/// sides.
pub fn final_reached(m: &ProcessModel, marking: &Marking, strict: bool) -> bool {
    if strict {
        return *marking == m.final_marking;
    }
    let with = |mk: &Marking, o: &str| -> Vec<(String, Vec<String>, u32)> {
        mk.iter().filter(|(_, t, _)| t.iter().any(|x| x == o)).map(|(p, t, c)| (p.to_string(), t.clone(), c)).collect()
    };
    let mut objects = marking.object_names();
    objects.extend(m.initial.object_names());
    objects.extend(m.final_marking.object_names());
    let idle: BTreeSet<String> = objects
        .into_iter()
        .filter(|o| !m.universe.is_persistent(o) && with(marking, o) == with(&m.initial, o))
        .collect();
    let strip = |mk: &Marking| -> Marking {
        let mut out = Marking::new();
        for (p, t, c) in mk.iter() {
            if !t.iter().any(|x| idle.contains(x)) {
                out.add(p, t.clone(), c);
            }
        }
        out
    };
    strip(marking) == strip(&m.final_marking)
}

/// The move shape used for costing a move against `model` (the relaxed
/// model when `relaxed` is given).
pub fn shape_of(mv: &Move, model: &ProcessModel, relaxed: Option<&RelaxedModel>) -> MoveShape {
    match &mv.firing {
        Some(f) => {
            let silent = model.net.transitions.get(&f.transition).is_none_or(|t| t.label.is_silent());
            let var_count = match relaxed {
                Some(r) => r.base_var_count(&f.transition),
                None => model.net.var_count(&f.transition),
            };
            MoveShape { kind: mv.kind, silent, var_count, objects: f.mode.0.len() }
        }
        None => {
            let n = mv.event.as_ref().map_or(0, |e| e.objects.size() as usize);
            MoveShape { kind: mv.kind, silent: false, var_count: n, objects: n }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::running_example as rx;

    fn ev(act: &str, objs: &[&str]) -> Event {
        Event::new("e", act, objs.iter().copied().collect())
    }

    fn ms(objs: &[&str]) -> ObjectMultiset {
        objs.iter().copied().collect()
    }

    #[test]
    fn potential_match_cases() {
        let u = rx::universe();
        let none = BTreeSet::new();
        let w: BTreeSet<String> = ["w".to_string()].into();
        let e = ev("collect", &["p6", "w1"]);
        assert_eq!(potential_match(&e, Some("collect"), &ms(&["p6", "w1"]), &u, &none), Some(BTreeSet::new()));
        assert_eq!(potential_match(&e, Some("destroy"), &ms(&["p6", "w1"]), &u, &none), None);
        assert_eq!(potential_match(&e, Some("collect"), &ms(&["p6", "w2"]), &u, &none), None);
        assert_eq!(potential_match(&e, Some("collect"), &ms(&["p6", "w2"]), &u, &w), Some(w.clone()));
        // packages are not substitutable
        assert_eq!(potential_match(&e, Some("collect"), &ms(&["p7", "w1"]), &u, &w), None);
        // substitution needs equal counts
        assert_eq!(potential_match(&e, Some("collect"), &ms(&["p6"]), &u, &w), None);
        assert_eq!(potential_match(&e, None, &ms(&["p6", "w1"]), &u, &w), None);
    }

    #[test]
    fn final_marking_modes() {
        let m = rx::model();
        assert!(final_reached(&m, &m.initial, true));
        let mut moved = m.initial.clone();
        moved.remove("p12", &vec!["d2".into()], 1);
        moved.add("p11", vec!["d2".into()], 1);
        assert!(!final_reached(&m, &moved, false));
        assert!(!final_reached(&m, &moved, true));
        // an expected object that never moved is ignored unless strict
        let mut m2 = m.clone();
        m2.final_marking = moved.clone();
        assert!(final_reached(&m2, &m.initial, false));
        assert!(!final_reached(&m2, &m.initial, true));
        // a leftover package is never ignored
        let mut extra = m.initial.clone();
        extra.add("p10", vec!["p1".into()], 1);
        assert!(!final_reached(&m, &extra, false));
    }
}
