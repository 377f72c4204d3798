//! The relaxed model: the base net together with a projected copy of every
//! multi-role transition for each proper subset of its roles, plus silent
//! transitions that assemble and dissolve correlated tokens.
//!
//! A correlation place `q` with type `(r1, .., rn)` gets one shadow place
//! `q|{ri}` per role. Projected transitions that keep only some roles of `q`
//! read and write the shadows instead of `q`; `tau_create_q` moves one token
//! from every shadow into `q` and `tau_destroy_q` splits it again.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use crate::pnid::{projected_name, Arc, Label, Marking, Place, ProcessModel, ProjectionTag, Tpnid, Transition, TransitionFiring, Variable};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelaxedModel {
    pub base: ProcessModel,
    /// The relaxed net with the base markings.
    pub model: ProcessModel,
    pub correlation_transitions: BTreeSet<String>,
    /// Projected transition → (base transition, kept roles).
    pub projection_index: BTreeMap<String, (String, BTreeSet<String>)>,
}

impl RelaxedModel {
    /// The base transition a transition of the relaxed net stems from;
    /// correlation transitions map to themselves.
    pub fn base_of<'a>(&'a self, t: &'a str) -> &'a str {
        self.projection_index.get(t).map_or(t, |(b, _)| b.as_str())
    }

    pub fn is_projection(&self, t: &str) -> bool {
        self.projection_index.contains_key(t)
    }

    pub fn is_correlation(&self, t: &str) -> bool {
        self.correlation_transitions.contains(t)
    }

    /// `|Var(t)|` of the base transition.
    pub fn base_var_count(&self, t: &str) -> usize {
        if self.is_correlation(t) {
            return self.model.net.var_count(t);
        }
        self.base.net.var_count(self.base_of(t))
    }
}

pub fn create_name(place: &str) -> String {
    format!("tau_create_{place}")
}

pub fn destroy_name(place: &str) -> String {
    format!("tau_destroy_{place}")
}

fn shadow(place: &str, role: &str) -> String {
    projected_name(place, &BTreeSet::from([role.to_string()]))
}

pub fn build_relaxed_model(m: &ProcessModel) -> RelaxedModel {
    let base = &m.net;
    let mut net: Tpnid = base.clone();
    let mut projection_index = BTreeMap::new();
    let mut correlation_transitions = BTreeSet::new();

    let correlation: Vec<&Place> = base.places.values().filter(|p| p.alpha.len() >= 2).collect();
    for q in &correlation {
        let roles: BTreeSet<&String> = q.alpha.iter().collect();
        for r in roles {
            let id = shadow(&q.id, r);
            let kept = BTreeSet::from([r.clone()]);
            let dropped = q.alpha.iter().filter(|x| *x != r).cloned().collect();
            net.places.insert(
                id.clone(),
                Place { id, alpha: vec![r.clone()], projection: Some(ProjectionTag { base: q.id.clone(), kept_roles: kept, dropped_roles: dropped }) },
            );
        }
    }

    for t in base.transitions.values() {
        let roles: BTreeSet<String> = base.transition_roles(t);
        if roles.len() < 2 {
            continue;
        }
        let roles: Vec<String> = roles.into_iter().collect();
        for mask in 1..(1u32 << roles.len()) - 1 {
            let kept: BTreeSet<String> = (0..roles.len()).filter(|i| mask >> i & 1 == 1).map(|i| roles[i].clone()).collect();
            let project = |arcs: &[Arc]| -> Vec<Arc> {
                let mut out = Vec::new();
                for a in arcs {
                    let alpha = &base.places[&a.place].alpha;
                    let keep: Vec<usize> = (0..alpha.len()).filter(|&i| kept.contains(&alpha[i])).collect();
                    if keep.is_empty() {
                        continue;
                    }
                    if keep.len() == alpha.len() {
                        out.push(a.clone());
                        continue;
                    }
                    for &i in &keep {
                        out.push(Arc { place: shadow(&a.place, &alpha[i]), vars: a.vars.iter().map(|s| vec![s[i].clone()]).collect() });
                    }
                }
                out
            };
            let id = projected_name(&t.id, &kept);
            let dropped = roles.iter().filter(|r| !kept.contains(*r)).cloned().collect();
            net.transitions.insert(
                id.clone(),
                Transition {
                    id: id.clone(),
                    label: t.label.clone(),
                    inputs: project(&t.inputs),
                    outputs: project(&t.outputs),
                    projection: Some(ProjectionTag { base: t.id.clone(), kept_roles: kept.clone(), dropped_roles: dropped }),
                },
            );
            projection_index.insert(id, (t.id.clone(), kept));
        }
    }

    for q in &correlation {
        let vars: Vec<String> = (0..q.alpha.len())
            .map(|i| {
                let role = &q.alpha[i];
                let unique = q.alpha.iter().filter(|r| *r == role).count() == 1;
                let plain_ok = base.variables.get(role).is_none_or(|v| v.role == *role && !v.fresh);
                let name = if unique && plain_ok { role.clone() } else { format!("{role}_{i}") };
                net.variables.entry(name.clone()).or_insert(Variable { name: name.clone(), role: role.clone(), fresh: false });
                name
            })
            .collect();
        let split: Vec<Arc> =
            (0..q.alpha.len()).map(|i| Arc { place: shadow(&q.id, &q.alpha[i]), vars: vec![vec![vars[i].clone()]] }).collect();
        let joined = vec![Arc { place: q.id.clone(), vars: vec![vars.clone()] }];
        for (id, inputs, outputs) in
            [(create_name(&q.id), split.clone(), joined.clone()), (destroy_name(&q.id), joined, split)]
        {
            net.transitions.insert(id.clone(), Transition { id: id.clone(), label: Label::Silent, inputs, outputs, projection: None });
            correlation_transitions.insert(id);
        }
    }

    RelaxedModel {
        base: m.clone(),
        model: ProcessModel { net, initial: m.initial.clone(), final_marking: m.final_marking.clone(), universe: m.universe.clone() },
        correlation_transitions,
        projection_index,
    }
}

/// Checks up to `depth` firings that every firing sequence of `m` also fires
/// in the relaxed model and reaches the same marking there.
pub fn language_inclusion_check(m: &ProcessModel, depth: usize) -> bool {
    language_inclusion_counterexample(m, depth).is_none()
}

/// A firing sequence of `m` that the relaxed model cannot replay, if any.
pub fn language_inclusion_counterexample(m: &ProcessModel, depth: usize) -> Option<Vec<TransitionFiring>> {
    let relaxed = build_relaxed_model(m);
    let mut seen: HashSet<Marking> = HashSet::new();
    let mut queue: VecDeque<(Marking, Marking, Vec<TransitionFiring>)> = VecDeque::new();
    seen.insert(m.initial.clone());
    queue.push_back((m.initial.clone(), relaxed.model.initial.clone(), Vec::new()));
    while let Some((mk, rk, trace)) = queue.pop_front() {
        if trace.len() >= depth {
            continue;
        }
        for t in m.net.transitions.keys() {
            for mode in m.enabled_modes(&mk, t).expect("transition of the net") {
                let f = TransitionFiring::new(format!("{t}#{}", trace.len() + 1), t.clone(), mode);
                let mut next_trace = trace.clone();
                next_trace.push(f.clone());
                let next = m.fire(&mk, &f).expect("enabled mode fires");
                let Ok(rnext) = relaxed.model.fire(&rk, &f) else { return Some(next_trace) };
                if rnext != next {
                    return Some(next_trace);
                }
                if seen.insert(next.clone()) {
                    queue.push_back((next, rnext, next_trace));
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pnid::Mode;
    use crate::running_example as rx;

    fn f(id: &str, t: &str, b: &[(&str, &str)]) -> TransitionFiring {
        TransitionFiring::new(id, t, b.iter().copied().collect::<Mode>())
    }

    #[test]
    fn relaxed_fragment_of_running_example() {
        let r = build_relaxed_model(&rx::model());
        r.model.validate().unwrap();
        for t in ["ring|{p}", "ring|{d}", "deliver_home|{p}", "deliver_home|{d}", "tau_create_p5", "tau_destroy_p5"] {
            assert!(r.model.net.transitions.contains_key(t), "{t}");
        }
        assert!(r.model.net.places.contains_key("p5|{p}") && r.model.net.places.contains_key("p5|{d}"));
        assert_eq!(r.model.net.transitions["ring|{d}"].label, Label::Activity("ring".into()));
        // three correlation places, one create/destroy pair each
        assert_eq!(r.correlation_transitions.len(), 6);
        assert!(r.correlation_transitions.iter().all(|t| r.model.net.transitions[t].label.is_silent()));
        // deliver_depot has roles {p,d,w}: six proper subsets
        assert_eq!(r.projection_index.values().filter(|(b, _)| b == "deliver_depot").count(), 6);
        for (t, (b, _)) in &r.projection_index {
            assert_eq!(r.model.net.transitions[t].label, r.base.net.transitions[b].label);
        }
        assert_eq!(r.base_var_count("ring|{d}"), 2);
    }

    #[test]
    fn single_role_net_is_unchanged() {
        let mut m = rx::model();
        m.net.transitions.retain(|_, t| rx::model().net.transition_roles(t).len() == 1);
        m.net.places.retain(|_, p| p.alpha.len() == 1);
        let r = build_relaxed_model(&m);
        assert_eq!(r.model.net, m.net);
        assert!(r.correlation_transitions.is_empty());
    }

    #[test]
    fn projected_ring_then_correlation() {
        let r = build_relaxed_model(&rx::model());
        let m = &r.model;
        let seq = [
            f("a", "t_start", &[("d", "d1")]),
            f("b", "create", &[("nu_p", "p7")]),
            f("c", "order_home", &[("p", "p7")]),
            f("1", "ring|{d}", &[("d", "d1")]),
            f("2", "ring|{p}", &[("p", "p7")]),
            f("3", "tau_create_p5", &[("p", "p7"), ("d", "d1")]),
            f("4", "deliver_home", &[("p", "p7"), ("d", "d1")]),
        ];
        let mut mk = m.initial.clone();
        for x in &seq {
            mk = m.fire(&mk, x).unwrap_or_else(|e| panic!("{}: {e}", x.id));
        }
    }

    #[test]
    fn create_then_destroy_is_a_no_op() {
        let r = build_relaxed_model(&rx::model());
        let m = &r.model;
        let mut mk = Marking::new();
        mk.add("p6|{p}", vec!["p1".into()], 1);
        mk.add("p6|{d}", vec!["d1".into()], 1);
        let b = [("p", "p1"), ("d", "d1")];
        let joined = m.fire(&mk, &f("x", "tau_create_p6", &b)).unwrap();
        assert_eq!(joined.count("p6", &vec!["p1".into(), "d1".into()]), 1);
        assert_eq!(m.fire(&joined, &f("y", "tau_destroy_p6", &b)).unwrap(), mk);
    }

    #[test]
    fn language_inclusion_small_depth() {
        assert!(language_inclusion_check(&rx::model(), 5));
        let empty = ProcessModel {
            net: Tpnid::default(),
            initial: Marking::new(),
            final_marking: Marking::new(),
            universe: rx::universe(),
        };
        assert!(language_inclusion_check(&empty, 8));
    }
}
