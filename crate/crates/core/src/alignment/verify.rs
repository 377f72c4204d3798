//! Checks an alignment against the log and the model it claims to align,
//! without reusing anything from the search.

use std::collections::{BTreeMap, BTreeSet};

use super::{final_reached, move_cost, potential_match, shape_of, Alignment, CostParams, MoveKind, SearchOptions};
use crate::log::{relaxed_log, relaxed_version_violations, SystemLog};
use crate::pnid::ProcessModel;
use crate::relaxed_model::build_relaxed_model;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub violations: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn verify_alignment(
    al: &Alignment,
    l: &SystemLog,
    m: &ProcessModel,
    params: &CostParams,
    opts: &SearchOptions,
) -> VerifyReport {
    let mut v = Vec::new();
    let rm = al.relaxed.then(|| build_relaxed_model(m));
    let model = rm.as_ref().map_or(m, |r| &r.model);

    let ids: BTreeSet<&String> = al.moves.iter().map(|x| &x.id).collect();
    if ids.len() != al.moves.len() {
        v.push("move ids are not unique".into());
    }
    if al.order.element_set().iter().collect::<BTreeSet<_>>() != ids {
        v.push("order does not range over the moves".into());
    }

    for mv in &al.moves {
        let id = &mv.id;
        if mv.kind.has_event() != mv.event.is_some() || mv.kind.has_firing() != mv.firing.is_some() {
            v.push(format!("{id}: {:?} move with wrong components", mv.kind));
            continue;
        }
        if !al.relaxed && mv.kind.is_relaxed() && mv.kind != MoveKind::SubstituteSync {
            v.push(format!("{id}: relaxed move in a regular alignment"));
        }
        let fragment = mv.event.as_ref().is_some_and(|e| e.is_fragment());
        let class = mv.firing.as_ref().map(|f| match &rm {
            _ if !model.net.transitions.contains_key(&f.transition) => "unknown",
            Some(r) if r.is_correlation(&f.transition) => "correlation",
            Some(r) if r.is_projection(&f.transition) => "projection",
            _ => "base",
        });
        if class == Some("unknown") {
            v.push(format!("{id}: unknown transition"));
            continue;
        }
        let fits = match mv.kind {
            MoveKind::Sync => !fragment && class == Some("base"),
            MoveKind::Log => !fragment,
            MoveKind::RelaxedLog => fragment,
            MoveKind::Model => class == Some("base"),
            MoveKind::RelaxedModel => class == Some("projection"),
            MoveKind::CorrelationSilent => class == Some("correlation"),
            MoveKind::RelaxedSync => (fragment || class == Some("projection")) && class != Some("correlation"),
            MoveKind::SubstituteSync => class != Some("correlation"),
        };
        if !fits {
            v.push(format!("{id}: components do not fit a {:?} move", mv.kind));
        }
        let label = match (&mv.event, &mv.firing) {
            (Some(e), _) => Some(e.activity.as_str()),
            (None, Some(f)) => model.net.transitions[&f.transition].label.activity(),
            (None, None) => None,
        };
        if mv.label.as_deref() != label {
            v.push(format!("{id}: label {:?} should be {label:?}", mv.label));
        }
        if let (Some(e), Some(f)) = (&mv.event, &mv.firing) {
            let label = model.net.transitions[&f.transition].label.activity();
            match potential_match(e, label, &f.involved(), &l.universe, &opts.substitutable_roles) {
                None => v.push(format!("{id}: event and firing do not match")),
                Some(s) if s != mv.substituted_roles => v.push(format!("{id}: substituted roles differ")),
                Some(s) if s.is_empty() == (mv.kind == MoveKind::SubstituteSync) => {
                    v.push(format!("{id}: substitution does not fit the move kind"))
                }
                _ => {}
            }
        }
        let expected = move_cost(&shape_of(mv, model, rm.as_ref()), params);
        if expected != mv.cost {
            v.push(format!("{id}: cost {} should be {expected}", mv.cost));
        }
    }
    let total = al.moves.iter().map(|m| m.cost).sum();
    if al.total_cost != total {
        v.push(format!("total cost {} differs from the sum {total}", al.total_cost));
    }
    if !v.is_empty() {
        return VerifyReport { violations: v };
    }

    // log side
    let events: Vec<_> = al.moves.iter().filter_map(|m| m.event.clone()).collect();
    if !al.relaxed && events.iter().any(|e| e.is_fragment()) {
        v.push("fragments in a regular alignment".into());
    }
    let move_of: BTreeMap<&str, &str> =
        al.moves.iter().filter_map(|m| m.event.as_ref().map(|e| (e.id.as_str(), m.id.as_str()))).collect();
    match relaxed_log(l, events) {
        Err(e) => v.push(format!("log side is not a log: {e}")),
        Ok(relaxed) => {
            v.extend(relaxed_version_violations(l, &relaxed));
            for (a, b) in relaxed.order.pairs() {
                if !al.order.precedes(&move_of[a.as_str()].to_string(), &move_of[b.as_str()].to_string()) {
                    v.push(format!("log order {a} < {b} is not kept"));
                }
            }
            // no two matched pairs may be ordered one way in the log and the
            // other way in the run
            let run = al.model_side();
            let synced: Vec<(&String, &String)> = al
                .moves
                .iter()
                .filter(|m| m.kind.is_synchronous())
                .map(|m| (&m.event.as_ref().unwrap().id, &m.firing.as_ref().unwrap().id))
                .collect();
            for (e1, f1) in &synced {
                for (e2, f2) in &synced {
                    if relaxed.order.precedes(e1, e2) && run.run.precedes(f2, f1) {
                        v.push(format!("{e1} < {e2} in the log but {f2} < {f1} in the run"));
                    }
                }
            }
        }
    }

    // model side
    let run = al.model_side();
    if !model.is_execution_poset_to(&run, |mk| final_reached(model, mk, opts.strict_final)) {
        v.push("model side is not an execution poset of the model".into());
    }
    VerifyReport { violations: v }
}
