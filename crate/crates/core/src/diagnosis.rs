//! Reading an alignment: which behavior corresponds to which, what kind of
//! quality issue each deviation suggests, and how much each role's view of
//! an activity can be trusted.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::alignment::{Alignment, Move, MoveKind};
use crate::log::SystemLog;
use crate::objects::{ObjectMultiset, ObjectUniverse};
use crate::pnid::ProcessModel;

/// One matched pair, `None` standing for ε.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CongruenceTriple {
    pub move_id: String,
    pub log_side: Option<String>,
    pub model_side: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCategory {
    MissingEvent,
    IncorrectEvent,
    MissingObject,
    IncorrectObject,
    MissingPosition,
    IncorrectPosition,
    Unclassified,
}

impl IssueCategory {
    pub const ISSUES: [IssueCategory; 6] = [
        IssueCategory::MissingEvent,
        IssueCategory::IncorrectEvent,
        IssueCategory::MissingObject,
        IssueCategory::IncorrectObject,
        IssueCategory::MissingPosition,
        IssueCategory::IncorrectPosition,
    ];

    /// The short label `mi_e`, `in_o`, ...
    pub fn label(self) -> &'static str {
        match self {
            IssueCategory::MissingEvent => "mi_e",
            IssueCategory::IncorrectEvent => "in_e",
            IssueCategory::MissingObject => "mi_o",
            IssueCategory::IncorrectObject => "in_o",
            IssueCategory::MissingPosition => "mi_p",
            IssueCategory::IncorrectPosition => "in_p",
            IssueCategory::Unclassified => "unclassified",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ISSUES.into_iter().chain([IssueCategory::Unclassified]).find(|c| c.label() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationRecord {
    pub move_id: String,
    pub category: IssueCategory,
    /// All categories the rules suggest; `category` is `Unclassified` when
    /// there is more than one.
    pub candidates: BTreeSet<IssueCategory>,
    pub agreeing_roles: BTreeSet<String>,
    pub disagreeing_roles: BTreeSet<String>,
    /// The number of agreeing roles.
    pub likelihood_rank: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustCounts {
    pub sync: usize,
    pub relaxed_sync: usize,
    pub log: usize,
    pub model: usize,
    pub substitute: usize,
    pub synchronized_slots: u64,
    pub total_slots: u64,
}

impl TrustCounts {
    pub fn moves(&self) -> usize {
        self.sync + self.relaxed_sync + self.log + self.model + self.substitute
    }

    pub fn trust_score(&self) -> Ratio<u64> {
        if self.total_slots == 0 {
            return Ratio::from_integer(1);
        }
        Ratio::new(self.synchronized_slots, self.total_slots)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustReport {
    /// Keyed by (role, activity).
    pub entries: BTreeMap<(String, String), TrustCounts>,
}

impl TrustReport {
    pub fn get(&self, role: &str, activity: &str) -> Option<&TrustCounts> {
        self.entries.get(&(role.to_string(), activity.to_string()))
    }

    pub fn score(&self, role: &str, activity: &str) -> Option<Ratio<u64>> {
        self.get(role, activity).map(TrustCounts::trust_score)
    }
}

fn is_silent_move(mv: &Move) -> bool {
    mv.kind == MoveKind::CorrelationSilent || mv.kind.has_firing() && !mv.kind.has_event() && activity(mv).is_none()
}

fn activity(mv: &Move) -> Option<&str> {
    mv.label.as_deref()
}

pub fn congruence_of(al: &Alignment) -> BTreeSet<CongruenceTriple> {
    al.moves
        .iter()
        .filter(|mv| !is_silent_move(mv))
        .map(|mv| CongruenceTriple {
            move_id: mv.id.clone(),
            log_side: mv.event.as_ref().map(|e| e.id.clone()),
            model_side: mv.firing.as_ref().map(|f| f.id.clone()),
        })
        .collect()
}

fn role_of(universe: &ObjectUniverse, o: &str) -> String {
    universe.role_of(o).map_or_else(|| crate::alignment::role_from_name(o), str::to_string)
}

fn roles_in(universe: &ObjectUniverse, objs: &ObjectMultiset) -> BTreeSet<String> {
    objs.iter().map(|(o, _)| role_of(universe, o)).collect()
}

/// Objects on the log side and on the model side of a move.
fn sides(mv: &Move) -> (Option<&ObjectMultiset>, Option<ObjectMultiset>) {
    (mv.event.as_ref().map(|e| &e.objects), mv.firing.as_ref().map(|f| f.involved()))
}

/// The issue suggested by a log-only and a model-only view of the same
/// activity, if they look like one another.
fn pair_issue(universe: &ObjectUniverse, log: &ObjectMultiset, model: &ObjectMultiset) -> Option<IssueCategory> {
    if log == model {
        return Some(IssueCategory::IncorrectPosition);
    }
    if log.leq(model) {
        return Some(IssueCategory::MissingObject);
    }
    if model.leq(log) || role_counts(universe, log) == role_counts(universe, model) {
        return Some(IssueCategory::IncorrectObject);
    }
    None
}

fn role_counts(universe: &ObjectUniverse, objs: &ObjectMultiset) -> BTreeMap<String, u32> {
    let mut out = BTreeMap::new();
    for (o, c) in objs.iter() {
        *out.entry(role_of(universe, o)).or_insert(0) += c;
    }
    out
}

struct Classifier<'a> {
    al: &'a Alignment,
    model: &'a ProcessModel,
    universe: &'a ObjectUniverse,
    log: Option<&'a SystemLog>,
}

impl Classifier<'_> {
    fn activity_roles(&self, mv: &Move) -> BTreeSet<String> {
        let Some(a) = activity(mv) else { return BTreeSet::new() };
        let mut roles: BTreeSet<String> = self
            .model
            .net
            .transitions
            .values()
            .filter(|t| t.label.activity() == Some(a))
            .flat_map(|t| self.model.net.transition_roles(t))
            .collect();
        if roles.is_empty() {
            if let Some(e) = &mv.event {
                roles = roles_in(self.universe, e.original_objects());
            }
        }
        roles
    }

    /// Whether some transition has the activity and the roles of the move's
    /// event.
    fn fits_model(&self, mv: &Move) -> bool {
        let Some(e) = &mv.event else { return false };
        let roles = roles_in(self.universe, &e.objects);
        self.model
            .net
            .transitions
            .values()
            .any(|t| t.label.activity() == Some(e.activity.as_str()) && self.model.net.transition_roles(t) == roles)
    }

    /// Whether every transition with the activity of a whole recorded event
    /// involves more roles than the event names.
    fn lacks_roles(&self, mv: &Move) -> bool {
        let Some(e) = mv.event.as_ref().filter(|e| !e.is_fragment()) else { return false };
        let roles = roles_in(self.universe, &e.objects);
        let mut with = self.model.net.transitions.values().filter(|t| t.label.activity() == Some(e.activity.as_str())).peekable();
        with.peek().is_some()
            && with.all(|t| {
                let need = self.model.net.transition_roles(t);
                roles.is_subset(&need) && roles != need
            })
    }

    /// Whether the event of `mv` names an object that no synchronized move
    /// uses, while objects of the same role do get synchronized.
    fn names_stray_object(&self, mv: &Move) -> bool {
        let Some(e) = &mv.event else { return false };
        let synced: BTreeSet<String> = self
            .al
            .moves
            .iter()
            .filter(|m| m.kind.is_synchronous())
            .filter_map(|m| m.event.as_ref())
            .flat_map(|f| f.objects.support())
            .collect();
        e.objects.iter().any(|(o, _)| {
            let role = role_of(self.universe, o);
            !synced.contains(o) && synced.iter().any(|x| role_of(self.universe, x) == role)
        })
    }

    /// Order of the recorded events of two moves, in the log when known.
    fn recorded_before(&self, a: &Move, b: &Move) -> bool {
        match (self.log, &a.event, &b.event) {
            (Some(l), Some(x), Some(y)) => l.order.precedes(&x.root().to_string(), &y.root().to_string()),
            _ => self.al.order.precedes(&a.id, &b.id),
        }
    }

    /// Whether a synchronized record with the same activity and objects sits
    /// next to the record of `mv` on one of its objects, as a duplicate would.
    fn has_synced_twin(&self, mv: &Move) -> bool {
        let Some(e) = &mv.event else { return false };
        self.al.moves.iter().any(|n| {
            let Some(f) = n.event.as_ref().filter(|f| n.kind.is_synchronous() && f.root() != e.root()) else { return false };
            f.activity == e.activity
                && f.original_objects() == e.original_objects()
                && e.objects.iter().any(|(o, _)| {
                    let (a, b) = if self.recorded_before(n, mv) { (n, mv) } else { (mv, n) };
                    !self.al.moves.iter().any(|c| {
                        c.event.as_ref().is_some_and(|g| g.objects.count(o) > 0 && g.root() != e.root() && g.root() != f.root())
                            && self.recorded_before(a, c)
                            && self.recorded_before(c, b)
                    })
                })
        })
    }

    fn objects_of(mv: &Move) -> ObjectMultiset {
        match (&mv.event, &mv.firing) {
            (Some(e), _) => e.objects.clone(),
            (None, Some(f)) => f.involved(),
            _ => ObjectMultiset::new(),
        }
    }

    /// Whether another visible deviation involves a different object of a
    /// role `mv` involves, as a confusion of the two would leave.
    fn confusable(&self, mv: &Move) -> bool {
        let mine = Self::objects_of(mv);
        let roles = roles_in(self.universe, &mine);
        self.al.moves.iter().any(|o| {
            o.id != mv.id
                && matches!(o.kind, MoveKind::Log | MoveKind::RelaxedLog | MoveKind::Model | MoveKind::RelaxedModel)
                && activity(o).is_some()
                && Self::objects_of(o)
                    .iter()
                    .any(|(x, _)| mine.count(x) == 0 && roles.contains(&role_of(self.universe, x)))
        })
    }

    /// Roles of the root event of `mv` that some synchronous move covers.
    fn synced_roles_of_root(&self, mv: &Move) -> BTreeSet<String> {
        let Some(root) = mv.event.as_ref().map(|e| e.root()) else { return BTreeSet::new() };
        self.al
            .moves
            .iter()
            .filter(|o| o.kind.is_synchronous() && o.event.as_ref().is_some_and(|e| e.root() == root))
            .flat_map(|o| roles_in(self.universe, &o.event.as_ref().unwrap().objects))
            .collect()
    }

    fn agreeing(&self, mv: &Move) -> BTreeSet<String> {
        let all = self.activity_roles(mv);
        match mv.kind {
            MoveKind::Log | MoveKind::RelaxedLog => self.synced_roles_of_root(mv),
            MoveKind::Model | MoveKind::Sync => all,
            MoveKind::RelaxedModel => roles_in(self.universe, &mv.firing.as_ref().unwrap().involved()),
            MoveKind::RelaxedSync => roles_in(self.universe, &mv.event.as_ref().unwrap().objects),
            MoveKind::SubstituteSync => all.difference(&mv.substituted_roles).cloned().collect(),
            MoveKind::CorrelationSilent => BTreeSet::new(),
        }
    }

    /// Whether the move gets a record.
    fn deviating(&self, mv: &Move) -> bool {
        match mv.kind {
            MoveKind::Log | MoveKind::RelaxedLog | MoveKind::SubstituteSync => true,
            MoveKind::Model | MoveKind::RelaxedModel => activity(mv).is_some(),
            MoveKind::RelaxedSync => {
                let e = mv.event.as_ref().unwrap();
                e.objects == *e.original_objects()
            }
            MoveKind::Sync | MoveKind::CorrelationSilent => false,
        }
    }

    fn candidates(&self, mv: &Move) -> BTreeSet<IssueCategory> {
        use IssueCategory::*;
        let mut out = BTreeSet::new();
        let a = activity(mv);
        let counterparts = |log_side: bool| {
            self.al.moves.iter().filter(move |o| {
                o.id != mv.id
                    && activity(o) == a
                    && if log_side { matches!(o.kind, MoveKind::Model | MoveKind::RelaxedModel) } else { matches!(o.kind, MoveKind::Log | MoveKind::RelaxedLog) }
            })
        };
        match mv.kind {
            MoveKind::SubstituteSync => {
                out.insert(IncorrectObject);
            }
            MoveKind::RelaxedSync => {
                out.insert(MissingObject);
            }
            MoveKind::Log | MoveKind::RelaxedLog => {
                let objs = sides(mv).0.unwrap();
                // relaxing splits a wrong object off, so an event left whole was refused by every role
                let refused = self.al.relaxed && mv.kind == MoveKind::Log && roles_in(self.universe, objs).len() > 1;
                if !refused {
                    for o in counterparts(true) {
                        out.extend(pair_issue(self.universe, objs, &sides(o).1.unwrap()));
                    }
                }
                if out.is_empty() {
                    if self.synced_roles_of_root(mv).is_empty() {
                        out.insert(IncorrectEvent);
                        // a recorded event the model could produce may just have lost the
                        // event that enabled it
                        if !refused && self.fits_model(mv) {
                            out.insert(MissingEvent);
                        }
                    } else {
                        // right for the synchronized roles, out of place or wrong for the rest
                        out.insert(IncorrectObject);
                        out.insert(IncorrectPosition);
                    }
                }
                // unmatched records at most one step apart on an object may be a swapped pair
                let swapped = objs.iter().any(|(o, _)| {
                    let on_o: Vec<&Move> = self
                        .al
                        .moves
                        .iter()
                        .filter(|m| m.id != mv.id && m.event.as_ref().is_some_and(|e| e.objects.count(o) > 0))
                        .collect();
                    on_o.iter().filter(|n| matches!(n.kind, MoveKind::Log | MoveKind::RelaxedLog)).any(|n| {
                        let (a, b) = if self.recorded_before(n, mv) { (*n, mv) } else { (mv, *n) };
                        on_o.iter().filter(|c| self.recorded_before(a, c) && self.recorded_before(c, b)).count() <= 1
                    })
                });
                if swapped {
                    out.insert(IncorrectPosition);
                }
                if self.has_synced_twin(mv) {
                    out.insert(IncorrectEvent);
                }
                if self.lacks_roles(mv) {
                    out.insert(MissingObject);
                }
                if self.names_stray_object(mv) {
                    out.insert(IncorrectObject);
                }
                if !refused && self.confusable(mv) {
                    out.insert(IncorrectObject);
                }
            }
            MoveKind::Model | MoveKind::RelaxedModel => {
                let objs = sides(mv).1.unwrap();
                for o in counterparts(false) {
                    out.extend(pair_issue(self.universe, sides(o).0.unwrap(), &objs));
                }
                if mv.kind == MoveKind::RelaxedModel {
                    let mine = roles_in(self.universe, &objs);
                    let split = self.al.moves.iter().any(|o| {
                        o.kind == MoveKind::RelaxedSync
                            && activity(o) == a
                            && o.event.as_ref().is_some_and(|e| !e.is_fragment() && roles_in(self.universe, &e.objects).is_disjoint(&mine))
                    });
                    if split {
                        out.insert(MissingObject);
                    }
                }
                // the firing may have happened unrecorded
                out.insert(MissingEvent);
                // a duplicated record of an object forces an extra firing somewhere on it
                let doubled = objs.iter().any(|(o, _)| {
                    let on_o: Vec<&Move> = self
                        .al
                        .moves
                        .iter()
                        .filter(|m| m.event.as_ref().is_some_and(|e| e.objects.count(o) > 0))
                        .collect();
                    let prec = |a: &Move, b: &Move| self.recorded_before(a, b);
                    let between = |a: &Move, b: &Move| on_o.iter().any(|c| prec(a, c) && prec(c, b));
                    on_o.iter().enumerate().any(|(i, a)| {
                        on_o[i + 1..].iter().any(|b| {
                            a.kind.is_synchronous()
                                && b.kind.is_synchronous()
                                && activity(a) == activity(b)
                                && Self::objects_of(a) == Self::objects_of(b)
                                && !between(a, b)
                                && !between(b, a)
                        })
                    })
                });
                if doubled {
                    out.insert(IncorrectEvent);
                }
                if self.confusable(mv) {
                    out.insert(IncorrectObject);
                }
            }
            MoveKind::Sync | MoveKind::CorrelationSilent => {}
        }
        out
    }

    fn record(&self, mv: &Move, candidates: BTreeSet<IssueCategory>) -> DeviationRecord {
        let all = self.activity_roles(mv);
        let agreeing: BTreeSet<String> = self.agreeing(mv).intersection(&all).cloned().collect();
        let disagreeing = all.difference(&agreeing).cloned().collect();
        let category = if candidates.len() == 1 { *candidates.iter().next().unwrap() } else { IssueCategory::Unclassified };
        DeviationRecord {
            move_id: mv.id.clone(),
            category,
            likelihood_rank: agreeing.len(),
            candidates,
            agreeing_roles: agreeing,
            disagreeing_roles: disagreeing,
        }
    }

    /// Synchronous moves whose events come from different recorders, are
    /// unordered in the log, yet are ordered in the run.
    fn position_gaps(&self, l: &SystemLog) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if !l.has_multiple_recorders() {
            return out;
        }
        let run = self.al.model_side();
        let synced: Vec<&Move> = self.al.moves.iter().filter(|m| m.kind.is_synchronous()).collect();
        for x in &synced {
            for y in &synced {
                let (ex, ey) = (x.event.as_ref().unwrap(), y.event.as_ref().unwrap());
                let (Some(rx), Some(ry)) = (l.event(ex.root()).map(|e| &e.recorder), l.event(ey.root()).map(|e| &e.recorder)) else {
                    continue;
                };
                if rx == ry || ex.root() == ey.root() || l.order.comparable(&ex.root().to_string(), &ey.root().to_string()) {
                    continue;
                }
                if run.run.precedes(&x.firing.as_ref().unwrap().id, &y.firing.as_ref().unwrap().id) {
                    out.insert(y.id.clone());
                }
            }
        }
        out
    }

    fn run(&self) -> Vec<DeviationRecord> {
        let gaps = self.log.map(|l| self.position_gaps(l)).unwrap_or_default();
        let mut out = Vec::new();
        for mv in &self.al.moves {
            let mut c = if self.deviating(mv) { self.candidates(mv) } else { BTreeSet::new() };
            if gaps.contains(&mv.id) {
                c.insert(IssueCategory::MissingPosition);
            }
            if !c.is_empty() {
                let mut r = self.record(mv, c);
                if r.candidates == BTreeSet::from([IssueCategory::MissingPosition]) {
                    r.agreeing_roles.append(&mut r.disagreeing_roles);
                    r.likelihood_rank = r.agreeing_roles.len();
                }
                out.push(r);
            }
        }
        out
    }
}

/// One record per deviating move: log moves, visible model moves,
/// substitute synchronous moves, and relaxed synchronous moves on whole
/// events. Position gaps across recorders need the log and are only found by
/// [`classify_with_log`].
pub fn classify(al: &Alignment, model: &ProcessModel) -> Vec<DeviationRecord> {
    Classifier { al, model, universe: &model.universe, log: None }.run()
}

pub fn classify_with_log(al: &Alignment, model: &ProcessModel, l: &SystemLog) -> Vec<DeviationRecord> {
    Classifier { al, model, universe: &l.universe, log: Some(l) }.run()
}

/// Per (role, activity) move counts and the share of object slots that were
/// synchronized. Silent moves are left out.
pub fn trust_report(al: &Alignment, universe: &ObjectUniverse) -> TrustReport {
    let mut report = TrustReport::default();
    for mv in al.moves.iter().filter(|m| !is_silent_move(m)) {
        let a = activity(mv).unwrap().to_string();
        let objs = match (&mv.event, &mv.firing) {
            (Some(e), _) => e.objects.clone(),
            (None, Some(f)) => f.involved(),
            (None, None) => continue,
        };
        let mut touched = BTreeSet::new();
        for (o, c) in objs.iter() {
            let role = role_of(universe, o);
            let entry = report.entries.entry((role.clone(), a.clone())).or_default();
            let synced = match mv.kind {
                MoveKind::Sync | MoveKind::RelaxedSync => true,
                MoveKind::SubstituteSync => !mv.substituted_roles.contains(&role),
                _ => false,
            };
            entry.total_slots += c as u64;
            if synced {
                entry.synchronized_slots += c as u64;
            }
            touched.insert(role);
        }
        for role in touched {
            let entry = report.entries.get_mut(&(role, a.clone())).unwrap();
            match mv.kind {
                MoveKind::Sync => entry.sync += 1,
                MoveKind::RelaxedSync => entry.relaxed_sync += 1,
                MoveKind::SubstituteSync => entry.substitute += 1,
                MoveKind::Log | MoveKind::RelaxedLog => entry.log += 1,
                MoveKind::Model | MoveKind::RelaxedModel => entry.model += 1,
                MoveKind::CorrelationSilent => {}
            }
        }
    }
    report
}
