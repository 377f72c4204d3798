//! Exhaustive depth-first enumeration of alignments on small inputs, used as
//! a reference for the optimal search. It works on the string-level net and
//! log API and checks the log order pair by pair.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use super::{move_cost, potential_match, AlignError, Cost, CostParams, MoveKind, MoveShape, SearchOptions};
use crate::log::{shares_object, Event, SystemLog};
use crate::objects::ObjectMultiset;
use crate::pnid::{FreshContext, Marking, ProcessModel, TransitionFiring};
use crate::relaxed_model::{build_relaxed_model, RelaxedModel};

const TRIVIAL_STATES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteForce {
    pub cost: Cost,
    pub moves: Vec<(MoveKind, Option<String>, Option<String>)>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct Key {
    marking: Marking,
    /// Per event: the parts consumed so far, and whether as a whole event.
    parts: Vec<(Vec<ObjectMultiset>, bool)>,
}

struct Dfs<'a> {
    l: &'a SystemLog,
    ids: Vec<String>,
    model: &'a ProcessModel,
    rm: Option<&'a RelaxedModel>,
    params: &'a CostParams,
    opts: &'a SearchOptions,
    fresh: FreshContext,
    max_moves: usize,
    best: Option<BruteForce>,
    memo: HashMap<Key, (Cost, usize)>,
    trail: Vec<(MoveKind, Option<String>, Option<String>)>,
}

fn subsets(m: &ObjectMultiset) -> Vec<ObjectMultiset> {
    let items: Vec<(&str, u32)> = m.iter().collect();
    (1u32..(1 << items.len()))
        .map(|mask| {
            let mut out = ObjectMultiset::new();
            for (i, (o, c)) in items.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    out.insert(*o, *c);
                }
            }
            out
        })
        .collect()
}

impl Dfs<'_> {
    fn remaining(&self, key: &Key, e: usize) -> ObjectMultiset {
        let mut left = self.l.events[&self.ids[e]].objects.clone();
        for p in &key.parts[e].0 {
            left = left.subtract(p).expect("parts are taken from the event");
        }
        left
    }

    /// Whether consuming `part` of event `e` now respects the relaxed order
    /// with everything consumed before.
    fn allowed(&self, key: &Key, e: usize, part: &ObjectMultiset, whole: bool) -> bool {
        let x = &self.ids[e];
        (0..self.ids.len()).all(|z| {
            if !self.l.order.precedes(x, &self.ids[z]) {
                return true;
            }
            let (parts, z_whole) = &key.parts[z];
            parts.iter().all(|p| !((whole && *z_whole) || shares_object(p, part)))
        })
    }

    fn candidate_parts(&self, key: &Key, e: usize) -> Vec<(ObjectMultiset, bool)> {
        let left = self.remaining(key, e);
        if left.is_empty() {
            return Vec::new();
        }
        let untouched = key.parts[e].0.is_empty();
        if self.rm.is_none() {
            return if untouched { vec![(left, true)] } else { Vec::new() };
        }
        subsets(&left).into_iter().map(|p| {
            let whole = untouched && p == left;
            (p, whole)
        })
        .collect()
    }

    fn class(&self, t: &str) -> MoveKind {
        match self.rm {
            Some(r) if r.is_correlation(t) => MoveKind::CorrelationSilent,
            Some(r) if r.is_projection(t) => MoveKind::RelaxedModel,
            _ => MoveKind::Model,
        }
    }

    fn firing_shape(&self, kind: MoveKind, f: &TransitionFiring) -> MoveShape {
        let t = &self.model.net.transitions[&f.transition];
        let var_count = match self.rm {
            Some(r) => r.base_var_count(&f.transition),
            None => self.model.net.var_count(&f.transition),
        };
        MoveShape { kind, silent: t.label.is_silent(), var_count, objects: f.mode.0.len() }
    }

    fn firing_options(&self, marking: &Marking, tag: &str) -> Vec<(MoveKind, TransitionFiring, Cost)> {
        let mut out = Vec::new();
        for t in self.model.net.transitions.keys() {
            let class = self.class(t);
            for mode in self.model.enabled_modes_with_context(marking, t, &self.fresh).expect("transition of the net") {
                let f = TransitionFiring::new(format!("{t}@{tag}"), t.clone(), mode);
                let c = move_cost(&self.firing_shape(class, &f), self.params);
                out.push((class, f, c));
            }
        }
        out
    }

    /// Every event as a log move plus the cheapest model run on its own:
    /// always an alignment, so its cost bounds the optimum.
    fn trivial(&self) -> Option<BruteForce> {
        let mut trail = Vec::new();
        let mut cost = Cost::zero();
        for id in &self.ids {
            let e = &self.l.events[id];
            let n = e.objects.size() as usize;
            cost = cost + move_cost(&MoveShape { kind: MoveKind::Log, silent: false, var_count: n, objects: n }, self.params);
            trail.push((MoveKind::Log, Some(format!("{id}{}", e.objects)), None));
        }
        let mut seen: HashMap<Marking, Cost> = HashMap::new();
        let mut nodes: Vec<(Marking, Option<(usize, MoveKind, String)>)> = vec![(self.model.initial.clone(), None)];
        let mut heap = BinaryHeap::from([Reverse((Cost::zero(), 0usize))]);
        while let Some(Reverse((g, k))) = heap.pop() {
            let marking = nodes[k].0.clone();
            if seen.get(&marking).is_some_and(|&c| c < g) {
                continue;
            }
            if super::final_reached(self.model, &marking, self.opts.strict_final) {
                let mut path = Vec::new();
                let mut cur = k;
                while let Some((prev, kind, t)) = nodes[cur].1.clone() {
                    path.push((kind, None, Some(t)));
                    cur = prev;
                }
                path.reverse();
                trail.extend(path);
                return Some(BruteForce { cost: cost + g, moves: trail });
            }
            if nodes.len() > TRIVIAL_STATES {
                return None;
            }
            for (kind, f, c) in self.firing_options(&marking, "b") {
                let next = self.model.fire(&marking, &f).expect("enabled mode fires");
                let ng = g + c;
                if seen.get(&next).is_none_or(|&old| ng < old) {
                    seen.insert(next.clone(), ng);
                    nodes.push((next, Some((k, kind, f.transition))));
                    heap.push(Reverse((ng, nodes.len() - 1)));
                }
            }
        }
        None
    }

    fn go(&mut self, key: Key, g: Cost, depth: usize) {
        if self.best.as_ref().is_some_and(|b| g >= b.cost) {
            return;
        }
        let left = self.max_moves - depth;
        if let Some(&(c, d)) = self.memo.get(&key) {
            if g >= c && left <= d {
                return;
            }
        }
        self.memo.insert(key.clone(), (g, left));
        let done = (0..self.ids.len()).all(|e| self.remaining(&key, e).is_empty());
        if done && super::final_reached(self.model, &key.marking, self.opts.strict_final) {
            self.best = Some(BruteForce { cost: g, moves: self.trail.clone() });
            return;
        }
        if left == 0 {
            return;
        }
        let mut options: Vec<(MoveKind, Option<(usize, ObjectMultiset, bool)>, Option<TransitionFiring>, Cost)> = Vec::new();
        for e in 0..self.ids.len() {
            for (part, whole) in self.candidate_parts(&key, e) {
                if !self.allowed(&key, e, &part, whole) {
                    continue;
                }
                let kind = if whole { MoveKind::Log } else { MoveKind::RelaxedLog };
                let n = part.size() as usize;
                let c = move_cost(&MoveShape { kind, silent: false, var_count: n, objects: n }, self.params);
                options.push((kind, Some((e, part, whole)), None, c));
            }
        }
        for (class, f, c) in self.firing_options(&key.marking, &depth.to_string()) {
            let label = self.model.net.transitions[&f.transition].label.activity().map(str::to_string);
            let involved = f.involved();
            if let Some(a) = &label {
                for e in 0..self.ids.len() {
                    let ev = &self.l.events[&self.ids[e]];
                    if ev.activity != *a {
                        continue;
                    }
                    for (part, whole) in self.candidate_parts(&key, e) {
                        let probe = Event::new("probe", a.clone(), part.clone());
                        let Some(subst) =
                            potential_match(&probe, Some(a), &involved, &self.l.universe, &self.opts.substitutable_roles)
                        else {
                            continue;
                        };
                        let kind = if !subst.is_empty() {
                            MoveKind::SubstituteSync
                        } else if whole && class == MoveKind::Model {
                            MoveKind::Sync
                        } else if self.rm.is_some() {
                            MoveKind::RelaxedSync
                        } else {
                            continue;
                        };
                        if !self.allowed(&key, e, &part, whole) {
                            continue;
                        }
                        let c = move_cost(&self.firing_shape(kind, &f), self.params);
                        options.push((kind, Some((e, part, whole)), Some(f.clone()), c));
                    }
                }
            }
            options.push((class, None, Some(f), c));
        }
        options.sort_by_key(|o| o.3);
        for (kind, part, firing, c) in options {
            let mut next = key.clone();
            if let Some(f) = &firing {
                next.marking = self.model.fire(&key.marking, f).expect("enabled mode fires");
            }
            if let Some((e, p, whole)) = &part {
                next.parts[*e].0.push(p.clone());
                next.parts[*e].1 = *whole;
            }
            self.trail.push((kind, part.as_ref().map(|(e, p, _)| format!("{}{p}", self.ids[*e])), firing.map(|f| f.transition)));
            self.go(next, g + c, depth + 1);
            self.trail.pop();
        }
    }
}

/// The cheapest alignment with at most `max_moves` moves, by exhaustive
/// enumeration. Only suitable for a handful of events and transitions.
pub fn brute_force_align(
    l: &SystemLog,
    m: &ProcessModel,
    params: &CostParams,
    opts: &SearchOptions,
    relaxed: bool,
    max_moves: usize,
) -> Result<BruteForce, AlignError> {
    let rm = relaxed.then(|| build_relaxed_model(m));
    let model = rm.as_ref().map_or(m, |r| &r.model);
    let mut fresh = FreshContext::default();
    let mut candidates: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (o, _) in l.objects().iter() {
        fresh.reserved.insert(o.to_string());
        let role = l.universe.role_of(o).map_or_else(|| super::role_from_name(o), str::to_string);
        candidates.entry(role).or_default().push(o.to_string());
    }
    fresh.candidates = candidates;
    let ids: Vec<String> = l.events.keys().cloned().collect();
    let mut dfs = Dfs {
        l,
        model,
        rm: rm.as_ref(),
        params,
        opts,
        fresh,
        max_moves,
        best: None,
        memo: HashMap::new(),
        trail: Vec::new(),
        ids: ids.clone(),
    };
    dfs.best = dfs.trivial().filter(|b| b.moves.len() <= max_moves);
    let key = Key { marking: model.initial.clone(), parts: vec![(Vec::new(), false); ids.len()] };
    dfs.go(key, Cost::zero(), 0);
    dfs.best.ok_or(AlignError::NoAlignment)
}
