//! Cheapest-first search over pairs of (unconsumed log residue, marking).
//!
//! Objects, places and transitions are interned to integers. The log side of
//! a state keeps, per recorded event, a bitmask of the distinct objects not
//! consumed yet. An event consumed in one piece is whole; any other piece is
//! a fragment. Bit 15 marks events that some whole event overtook and that
//! therefore may only be consumed in fragments.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::rc::Rc;

use smallvec::SmallVec;

mod heuristic;

use super::{move_cost, AlignError, Alignment, Cost, CostParams, Move, MoveKind, MoveShape, SearchOptions, SearchStats};
use crate::log::{relaxed_order, Event, FragmentOf, SystemLog};
use crate::objects::{ObjectMultiset, RoleKind};
use crate::pnid::{Marking, Mode, ProcessModel, TransitionFiring};
use crate::poset::Poset;
use crate::relaxed_model::{build_relaxed_model, RelaxedModel};

type Obj = u32;
type Tok = SmallVec<[Obj; 3]>;
type Binding = SmallVec<[Obj; 4]>;
type CMarking = Vec<(u16, Tok)>;

const MUST_SPLIT: u16 = 1 << 15;
const MAX_SLOTS: usize = 15;
const UNBOUND: Obj = Obj::MAX;

#[derive(Clone, PartialEq, Eq, Hash)]
struct State {
    res: Box<[u16]>,
    marking: CMarking,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum TKind {
    Base,
    Projected,
    Correlation,
}

struct CTrans {
    id: String,
    activity: Option<String>,
    kind: TKind,
    var_names: Vec<String>,
    var_roles: Vec<u16>,
    fresh: Vec<usize>,
    inputs: Vec<(u16, SmallVec<[u8; 3]>)>,
    outputs: Vec<(u16, SmallVec<[u8; 3]>)>,
    model_cost: Cost,
    sync_cost: Cost,
    silent: bool,
}

struct CEvent {
    activity: String,
    objs: Vec<Obj>,
    counts: Vec<u32>,
    preds: Vec<usize>,
    full: u16,
}

#[derive(Clone)]
struct CMove {
    kind: MoveKind,
    /// Event, consumed objects and whether it is consumed whole.
    event: Option<(usize, u16, bool)>,
    firing: Option<(usize, Binding)>,
    subst: BTreeSet<u16>,
    cost: Cost,
}

struct Node {
    parent: usize,
    mv: Option<CMove>,
    state: Rc<State>,
}

struct Objects {
    names: Vec<String>,
    roles: Vec<u16>,
    index: HashMap<String, Obj>,
}

impl Objects {
    fn intern(&mut self, name: &str, role: u16) -> Obj {
        if let Some(&o) = self.index.get(name) {
            return o;
        }
        let o = self.names.len() as Obj;
        self.names.push(name.to_string());
        self.roles.push(role);
        self.index.insert(name.to_string(), o);
        o
    }
}

struct Search<'a> {
    model: &'a ProcessModel,
    relaxed: bool,
    params: &'a CostParams,
    scale: i128,
    strict: bool,
    roles: Vec<String>,
    persistent: Vec<bool>,
    substitutable: Vec<bool>,
    objects: Objects,
    reserved: Vec<Obj>,
    canon: Vec<Vec<Obj>>,
    candidates: Vec<Vec<Obj>>,
    transitions: Vec<CTrans>,
    events: Vec<CEvent>,
    event_ids: Vec<String>,
    initial: CMarking,
    final_marking: CMarking,
}

fn scaled(c: Cost, scale: i128) -> i128 {
    let s = c * Cost::int(scale);
    debug_assert_eq!(s.denom(), 1);
    s.numer()
}

impl<'a> Search<'a> {
    fn new(
        l: &SystemLog,
        model: &'a ProcessModel,
        relaxed: Option<&RelaxedModel>,
        params: &'a CostParams,
        opts: &SearchOptions,
    ) -> Result<Self, AlignError> {
        params.validate().map_err(AlignError::Invalid)?;
        model.validate()?;
        let scale = params.scale();
        let mut roles: Vec<String> = model.universe.role_names().into_iter().collect();
        for v in model.net.variables.values() {
            if !roles.contains(&v.role) {
                roles.push(v.role.clone());
            }
        }
        let role_idx = |r: &str, roles: &[String]| roles.iter().position(|x| x == r).map(|i| i as u16);
        for e in l.events.values() {
            for (o, _) in e.objects.iter() {
                let r = model.universe.role_of(o).map_or_else(|| super::role_from_name(o), str::to_string);
                if !roles.contains(&r) {
                    roles.push(r);
                }
            }
        }
        let persistent: Vec<bool> =
            roles.iter().map(|r| model.universe.role_kind(r) == Some(RoleKind::Persistent)).collect();
        let substitutable = roles.iter().map(|r| opts.substitutable_roles.contains(r)).collect();
        let mut objects = Objects { names: Vec::new(), roles: Vec::new(), index: HashMap::new() };
        let role_of_obj = |o: &str| model.universe.role_of(o).map_or_else(|| super::role_from_name(o), str::to_string);

        let place_names: Vec<String> = model.net.places.keys().cloned().collect();
        let place_idx: HashMap<&str, u16> = place_names.iter().enumerate().map(|(i, p)| (p.as_str(), i as u16)).collect();
        let compile_marking = |mk: &Marking, objects: &mut Objects| -> CMarking {
            let mut out = CMarking::new();
            for (p, tok, c) in mk.iter() {
                let t: Tok = tok.iter().map(|o| objects.intern(o, role_idx(&role_of_obj(o), &roles).unwrap_or(0))).collect();
                for _ in 0..c {
                    out.push((place_idx[p], t.clone()));
                }
            }
            out.sort();
            out
        };
        let initial = compile_marking(&model.initial, &mut objects);
        let final_marking = compile_marking(&model.final_marking, &mut objects);

        let mut reserved = Vec::new();
        let mut candidates = vec![Vec::new(); roles.len()];
        for (o, _) in l.objects().iter() {
            let r = role_idx(&role_of_obj(o), &roles).expect("role registered above");
            let id = objects.intern(o, r);
            reserved.push(id);
            candidates[r as usize].push(id);
        }
        reserved.sort();

        let mut transitions = Vec::new();
        for t in model.net.transitions.values() {
            let var_names: Vec<String> = t.variables().into_iter().collect();
            let vi = |v: &String| var_names.iter().position(|x| x == v).unwrap() as u8;
            let var_roles = var_names.iter().map(|v| role_idx(&model.net.variables[v].role, &roles).unwrap()).collect();
            let fresh = (0..var_names.len()).filter(|&i| model.net.variables[&var_names[i]].fresh).collect();
            let arcs = |arcs: &[crate::pnid::Arc]| -> Vec<(u16, SmallVec<[u8; 3]>)> {
                arcs.iter().flat_map(|a| a.vars.iter().map(|s| (place_idx[a.place.as_str()], s.iter().map(vi).collect()))).collect()
            };
            let (kind, base_vars) = match relaxed {
                Some(r) if r.is_correlation(&t.id) => (TKind::Correlation, var_names.len()),
                Some(r) if r.is_projection(&t.id) => (TKind::Projected, r.base_var_count(&t.id)),
                _ => (TKind::Base, var_names.len()),
            };
            let silent = t.label.is_silent();
            let shape = |kind| MoveShape { kind, silent, var_count: base_vars, objects: var_names.len() };
            let (mk, sk) = match kind {
                TKind::Base => (MoveKind::Model, MoveKind::Sync),
                TKind::Projected => (MoveKind::RelaxedModel, MoveKind::RelaxedSync),
                TKind::Correlation => (MoveKind::CorrelationSilent, MoveKind::RelaxedSync),
            };
            let mc = move_cost(&shape(mk), params);
            let sc = move_cost(&shape(sk), params);
            transitions.push(CTrans {
                id: t.id.clone(),
                activity: t.label.activity().map(str::to_string),
                kind,
                inputs: arcs(&t.inputs),
                outputs: arcs(&t.outputs),
                var_roles,
                fresh,
                var_names,
                model_cost: mc,
                sync_cost: sc,
                silent,
            });
        }

        let event_ids: Vec<String> = l.events.keys().cloned().collect();
        let mut events = Vec::new();
        for e in l.events.values() {
            if e.objects.iter().count() > MAX_SLOTS {
                return Err(AlignError::Invalid(format!("event `{}` has more than {MAX_SLOTS} distinct objects", e.id)));
            }
            let mut objs = Vec::new();
            let mut counts = Vec::new();
            for (o, c) in e.objects.iter() {
                objs.push(objects.index[o]);
                counts.push(c);
            }
            let preds = l.order.predecessors(&e.id).iter().map(|p| event_ids.binary_search(p).unwrap()).collect();
            let full = ((1u32 << objs.len()) - 1) as u16;
            events.push(CEvent { activity: e.activity.clone(), objs, counts, preds, full });
        }
        let n_roles = roles.len();
        Ok(Search {
            model,
            relaxed: relaxed.is_some(),
            params,
            scale,
            strict: opts.strict_final,
            roles,
            persistent,
            substitutable,
            objects,
            reserved,
            canon: vec![Vec::new(); n_roles],
            candidates,
            transitions,
            events,
            event_ids,
            initial,
            final_marking,
        })
    }

    fn canonical(&mut self, role: u16, present: &[Obj], taken: &[Obj]) -> Obj {
        let mut k = 0;
        loop {
            if k == self.canon[role as usize].len() {
                let name = format!("{}{}", self.roles[role as usize], k + 1);
                let o = self.objects.intern(&name, role);
                self.canon[role as usize].push(o);
            }
            let o = self.canon[role as usize][k];
            if present.binary_search(&o).is_err() && self.reserved.binary_search(&o).is_err() && !taken.contains(&o) {
                return o;
            }
            k += 1;
        }
    }

    fn enabled(&mut self, m: &CMarking, present: &[Obj], t: usize) -> Vec<Binding> {
        let tr = &self.transitions[t];
        let mut partial = Vec::new();
        let mut binding: Binding = SmallVec::from_elem(UNBOUND, tr.var_names.len());
        let mut used: SmallVec<[usize; 8]> = SmallVec::new();
        bind(m, &tr.inputs, 0, &mut binding, &mut used, &mut partial);
        if tr.fresh.is_empty() {
            partial.sort();
            partial.dedup();
            return partial;
        }
        let fresh = tr.fresh.clone();
        let roles: Vec<u16> = fresh.iter().map(|&v| tr.var_roles[v]).collect();
        let mut out = Vec::new();
        for b in partial {
            let mut modes = vec![b];
            let mut taken: Vec<Obj> = Vec::new();
            for (&v, &r) in fresh.iter().zip(&roles) {
                let c = self.canonical(r, present, &taken);
                taken.push(c);
                let mut options = vec![c];
                for &o in &self.candidates[r as usize] {
                    if present.binary_search(&o).is_err() && !options.contains(&o) {
                        options.push(o);
                    }
                }
                modes = modes
                    .into_iter()
                    .flat_map(|m| {
                        options.iter().map(move |&o| {
                            let mut m = m.clone();
                            m[v] = o;
                            m
                        })
                    })
                    .collect();
            }
            for m in modes {
                let mut vals: Vec<Obj> = fresh.iter().map(|&v| m[v]).collect();
                vals.sort();
                vals.dedup();
                if vals.len() == fresh.len() {
                    out.push(m);
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    fn fire(&self, m: &CMarking, t: usize, b: &Binding) -> CMarking {
        let tr = &self.transitions[t];
        let mut next = m.clone();
        for (p, seq) in &tr.inputs {
            let tok: (u16, Tok) = (*p, seq.iter().map(|&v| b[v as usize]).collect());
            let i = next.binary_search(&tok).expect("enabled binding");
            next.remove(i);
        }
        for (p, seq) in &tr.outputs {
            let tok: (u16, Tok) = (*p, seq.iter().map(|&v| b[v as usize]).collect());
            let i = next.binary_search(&tok).unwrap_or_else(|i| i);
            next.insert(i, tok);
        }
        next
    }

    fn final_ok(&self, m: &CMarking) -> bool {
        if self.strict {
            return *m == self.final_marking;
        }
        let mut objs: Vec<Obj> =
            m.iter().chain(&self.initial).chain(&self.final_marking).flat_map(|(_, t)| t.iter().copied()).collect();
        objs.sort();
        objs.dedup();
        let with = |mk: &CMarking, o: Obj| -> Vec<(u16, Tok)> { mk.iter().filter(|(_, t)| t.contains(&o)).cloned().collect() };
        let idle: Vec<Obj> = objs
            .into_iter()
            .filter(|&o| !self.persistent[self.objects.roles[o as usize] as usize] && with(m, o) == with(&self.initial, o))
            .collect();
        let strip = |mk: &CMarking| -> Vec<(u16, Tok)> {
            mk.iter().filter(|(_, t)| !t.iter().any(|o| idle.contains(o))).cloned().collect()
        };
        strip(m) == strip(&self.final_marking)
    }

    fn objs_of(&self, e: usize, mask: u16) -> impl Iterator<Item = (Obj, u32)> + '_ {
        let ev = &self.events[e];
        (0..ev.objs.len()).filter(move |i| mask >> i & 1 == 1).map(move |i| (ev.objs[i], ev.counts[i]))
    }

    /// Residues after consuming `mask` of event `e`, if the log order allows.
    fn consume(&self, res: &[u16], e: usize, mask: u16) -> Option<(Box<[u16]>, bool)> {
        let ev = &self.events[e];
        let r = res[e] & !MUST_SPLIT;
        let whole = mask == ev.full && r == ev.full && res[e] & MUST_SPLIT == 0;
        if !self.relaxed && !whole {
            return None;
        }
        let mut next: Box<[u16]> = res.into();
        for &y in &ev.preds {
            let ry = res[y] & !MUST_SPLIT;
            if ry == 0 {
                continue;
            }
            if !self.relaxed {
                return None;
            }
            let share = self.objs_of(y, ry).any(|(o, _)| self.objs_of(e, mask).any(|(x, _)| x == o));
            if share {
                return None;
            }
            if whole && ry == self.events[y].full {
                if self.events[y].objs.len() < 2 {
                    return None;
                }
                next[y] |= MUST_SPLIT;
            }
        }
        let left = r & !mask;
        next[e] = if left == 0 { 0 } else { left | (res[e] & MUST_SPLIT) };
        Some((next, whole))
    }

    /// Masks of `e` whose objects are exactly `vals` (sorted), within `r`.
    fn exact_mask(&self, e: usize, r: u16, vals: &[Obj]) -> Option<u16> {
        let ev = &self.events[e];
        let mut mask = 0u16;
        let mut i = 0;
        while i < vals.len() {
            let o = vals[i];
            let mut c = 0;
            while i < vals.len() && vals[i] == o {
                c += 1;
                i += 1;
            }
            let slot = ev.objs.iter().position(|&x| x == o)?;
            if r >> slot & 1 == 0 || ev.counts[slot] != c {
                return None;
            }
            mask |= 1 << slot;
        }
        Some(mask)
    }

    /// Fragments of `e` within `r` matching `vals` with some substitutable
    /// roles exchanged, with the exchanged roles.
    fn substitute_masks(&self, e: usize, r: u16, vals: &[Obj]) -> Vec<(u16, BTreeSet<u16>)> {
        let ev = &self.events[e];
        let mut by_role: BTreeMap<u16, Vec<Obj>> = BTreeMap::new();
        for &o in vals {
            by_role.entry(self.objects.roles[o as usize]).or_default().push(o);
        }
        // per role: (mask, substituted)
        let mut options: Vec<Vec<(u16, bool)>> = Vec::new();
        for (&role, objs) in &by_role {
            let mut opts = Vec::new();
            if let Some(m) = self.exact_mask(e, r, objs) {
                opts.push((m, false));
            }
            if self.substitutable[role as usize] {
                let slots: Vec<usize> = (0..ev.objs.len())
                    .filter(|&i| r >> i & 1 == 1 && self.objects.roles[ev.objs[i] as usize] == role && !objs.contains(&ev.objs[i]))
                    .collect();
                for sub in 1u32..(1 << slots.len()) {
                    let chosen = slots.iter().enumerate().filter(|(k, _)| sub >> k & 1 == 1);
                    let (mut mask, mut count) = (0u16, 0usize);
                    for (_, &i) in chosen {
                        mask |= 1 << i;
                        count += ev.counts[i] as usize;
                    }
                    if count == objs.len() {
                        opts.push((mask, true));
                    }
                }
            }
            if opts.is_empty() {
                return Vec::new();
            }
            options.push(opts);
        }
        let roles: Vec<u16> = by_role.keys().copied().collect();
        let mut out = vec![(0u16, BTreeSet::new())];
        for (k, opts) in options.iter().enumerate() {
            let role = roles[k];
            out = out
                .into_iter()
                .flat_map(|(m, s)| {
                    opts.iter().map(move |&(om, sub)| {
                        let mut s = s.clone();
                        if sub {
                            s.insert(role);
                        }
                        (m | om, s)
                    })
                })
                .collect();
        }
        out.retain(|(_, s)| !s.is_empty());
        out
    }

    fn log_cost(&self, e: usize, mask: u16, kind: MoveKind) -> Cost {
        let n: u32 = self.objs_of(e, mask).map(|(_, c)| c).sum();
        let shape = MoveShape { kind, silent: false, var_count: n as usize, objects: n as usize };
        move_cost(&shape, self.params)
    }

    fn successors(&mut self, s: &State) -> Vec<(CMove, State)> {
        let mut present: Vec<Obj> = s.marking.iter().flat_map(|(_, t)| t.iter().copied()).collect();
        present.sort();
        present.dedup();
        let mut out = Vec::new();
        let open: Vec<usize> = (0..self.events.len()).filter(|&e| s.res[e] & !MUST_SPLIT != 0).collect();

        for &e in &open {
            let r = s.res[e] & !MUST_SPLIT;
            let mut sub = r;
            while sub != 0 {
                if let Some((res, whole)) = self.consume(&s.res, e, sub) {
                    let kind = if whole { MoveKind::Log } else { MoveKind::RelaxedLog };
                    let cost = self.log_cost(e, sub, kind);
                    let mv = CMove { kind, event: Some((e, sub, whole)), firing: None, subst: BTreeSet::new(), cost };
                    out.push((mv, State { res, marking: s.marking.clone() }));
                }
                sub = (sub - 1) & r;
            }
        }

        for t in 0..self.transitions.len() {
            let modes = self.enabled(&s.marking, &present, t);
            if modes.is_empty() {
                continue;
            }
            let tr = &self.transitions[t];
            let (kind, cost) = match tr.kind {
                TKind::Base => (MoveKind::Model, tr.model_cost),
                TKind::Projected => (MoveKind::RelaxedModel, tr.model_cost),
                TKind::Correlation => (MoveKind::CorrelationSilent, tr.model_cost),
            };
            let activity = tr.activity.clone();
            let (sync_cost, base) = (tr.sync_cost, tr.kind == TKind::Base);
            for b in modes {
                let next = self.fire(&s.marking, t, &b);
                if let Some(a) = &activity {
                    let mut vals: Vec<Obj> = b.to_vec();
                    vals.sort();
                    for &e in &open {
                        if self.events[e].activity != *a {
                            continue;
                        }
                        let r = s.res[e] & !MUST_SPLIT;
                        let mut matches: Vec<(u16, BTreeSet<u16>)> = Vec::new();
                        if let Some(m) = self.exact_mask(e, r, &vals) {
                            matches.push((m, BTreeSet::new()));
                        }
                        if self.substitutable.iter().any(|&x| x) {
                            matches.extend(self.substitute_masks(e, r, &vals));
                        }
                        for (mask, subst) in matches {
                            let Some((res, whole)) = self.consume(&s.res, e, mask) else { continue };
                            let kind = if !subst.is_empty() {
                                MoveKind::SubstituteSync
                            } else if whole && base {
                                MoveKind::Sync
                            } else {
                                MoveKind::RelaxedSync
                            };
                            if !self.relaxed && kind != MoveKind::Sync && kind != MoveKind::SubstituteSync {
                                continue;
                            }
                            let mv = CMove {
                                kind,
                                event: Some((e, mask, whole)),
                                firing: Some((t, b.clone())),
                                subst,
                                cost: sync_cost,
                            };
                            out.push((mv, State { res, marking: next.clone() }));
                        }
                    }
                }
                let mv = CMove { kind, event: None, firing: Some((t, b)), subst: BTreeSet::new(), cost };
                out.push((mv, State { res: s.res.clone(), marking: next }));
            }
        }
        out
    }

    fn run(&mut self, max_states: usize) -> Result<(Vec<CMove>, SearchStats), AlignError> {
        let h = heuristic::Heuristic::new(self);
        let start = Rc::new(State {
            res: self.events.iter().map(|e| e.full).collect(),
            marking: self.initial.clone(),
        });
        let h0 = h.estimate(self, &start.res, &start.marking);
        if h0 >= heuristic::INF {
            return Err(AlignError::NoAlignment);
        }
        let mut nodes = vec![Node { parent: usize::MAX, mv: None, state: start.clone() }];
        let mut best: HashMap<Rc<State>, ((i128, u32, u32), usize, bool)> = HashMap::new();
        let mut heap = BinaryHeap::new();
        let mut stats = SearchStats::default();
        let mut seq = 0u64;
        best.insert(start, ((0, 0, 0), 0, false));
        heap.push(Reverse(((h0, 0i128, 0u32, 0u32), seq, 0usize, 0i128)));
        while let Some(Reverse((_, _, node, g))) = heap.pop() {
            let state = nodes[node].state.clone();
            let entry = best.get_mut(&state).expect("queued states are recorded");
            if entry.2 || entry.1 != node || entry.0 .0 != g {
                continue;
            }
            entry.2 = true;
            let key = entry.0;
            if state.res.iter().all(|&r| r & !MUST_SPLIT == 0) && self.final_ok(&state.marking) {
                let mut path = Vec::new();
                let mut k = node;
                while let Some(mv) = nodes[k].mv.take() {
                    path.push(mv);
                    k = nodes[k].parent;
                }
                path.reverse();
                return Ok((path, stats));
            }
            stats.expanded += 1;
            for (mv, next) in self.successors(&state) {
                let silent = mv.firing.as_ref().is_some_and(|(t, _)| self.transitions[*t].silent);
                let g = key.0 + scaled(mv.cost, self.scale);
                let dev = key.1 + mv.kind.is_deviating(silent) as u32;
                let rel = key.2 + mv.kind.is_relaxed() as u32;
                let nk = (g, dev, rel);
                let next = Rc::new(next);
                if let Some((k, _, _)) = best.get(&next) {
                    if *k <= nk {
                        continue;
                    }
                }
                let est = h.estimate(self, &next.res, &next.marking);
                if est >= heuristic::INF {
                    continue;
                }
                stats.generated += 1;
                if stats.generated > max_states {
                    return Err(AlignError::BudgetExceeded(max_states));
                }
                nodes.push(Node { parent: node, mv: Some(mv), state: next.clone() });
                let id = nodes.len() - 1;
                seq += 1;
                best.insert(next, (nk, id, false));
                // among equal keys, the deepest and then the newest state first
                heap.push(Reverse(((g + est, -g, dev, rel), u64::MAX - seq, id, g)));
            }
        }
        Err(AlignError::NoAlignment)
    }

    fn build(&self, l: &SystemLog, path: Vec<CMove>, stats: SearchStats) -> Result<Alignment, AlignError> {
        let mut fragments: BTreeMap<usize, usize> = BTreeMap::new();
        let mut firings: BTreeMap<usize, usize> = BTreeMap::new();
        let mut moves = Vec::new();
        for (k, cm) in path.into_iter().enumerate() {
            let event = cm.event.map(|(e, mask, whole)| {
                let orig = &l.events[&self.event_ids[e]];
                if whole {
                    return orig.clone();
                }
                let n = fragments.entry(e).or_insert(0);
                *n += 1;
                let objects: ObjectMultiset = self
                    .objs_of(e, mask)
                    .flat_map(|(o, c)| std::iter::repeat(self.objects.names[o as usize].clone()).take(c as usize))
                    .collect();
                let mut ev = Event::new(format!("{}#{n}", orig.id), orig.activity.clone(), objects);
                ev.projection_of = Some(FragmentOf { parent: orig.id.clone(), original: orig.objects.clone() });
                ev.timestamp = orig.timestamp;
                ev.recorder = orig.recorder.clone();
                ev
            });
            let firing = cm.firing.as_ref().map(|&(t, ref b)| {
                let tr = &self.transitions[t];
                let n = firings.entry(t).or_insert(0);
                *n += 1;
                let mode: Mode = tr.var_names.iter().zip(b.iter()).map(|(v, &o)| (v.clone(), self.objects.names[o as usize].clone())).collect();
                TransitionFiring::new(format!("{}#{n}", tr.id), tr.id.clone(), mode)
            });
            let substituted_roles = cm.subst.iter().map(|&r| self.roles[r as usize].clone()).collect();
            let label = match (&event, cm.firing) {
                (Some(e), _) => Some(e.activity.clone()),
                (None, Some((t, _))) => self.transitions[t].activity.clone(),
                (None, None) => None,
            };
            moves.push(Move { id: format!("m{}", k + 1), kind: cm.kind, label, event, firing, substituted_roles, cost: cm.cost });
        }
        let order = alignment_order(l, self.model, &moves)?;
        let total_cost = moves.iter().map(|m| m.cost).sum();
        Ok(Alignment { moves, order, total_cost, relaxed: self.relaxed, stats })
    }
}

/// Orders the moves of an alignment: log elements by the relaxed order of
/// the log, firings by their causal run.
pub(crate) fn alignment_order(l: &SystemLog, model: &ProcessModel, moves: &[Move]) -> Result<Poset<String>, AlignError> {
    let events: Vec<Event> = moves.iter().filter_map(|m| m.event.clone()).collect();
    let by_event: BTreeMap<&str, &str> =
        moves.iter().filter_map(|m| m.event.as_ref().map(|e| (e.id.as_str(), m.id.as_str()))).collect();
    let by_firing: BTreeMap<&str, &str> =
        moves.iter().filter_map(|m| m.firing.as_ref().map(|f| (f.id.as_str(), m.id.as_str()))).collect();
    let mut pairs = Vec::new();
    let log_order = relaxed_order(l, &events).map_err(|e| AlignError::Invalid(e.to_string()))?;
    for (a, b) in log_order.covering_relation() {
        pairs.push((by_event[a.as_str()].to_string(), by_event[b.as_str()].to_string()));
    }
    let seq: Vec<TransitionFiring> = moves.iter().filter_map(|m| m.firing.clone()).collect();
    let run = model.causal_run(seq)?;
    for (a, b) in run.run.covering_relation() {
        pairs.push((by_firing[a.as_str()].to_string(), by_firing[b.as_str()].to_string()));
    }
    Poset::new(moves.iter().map(|m| m.id.clone()), pairs).map_err(|e| AlignError::Invalid(e.to_string()))
}

fn bind(
    m: &CMarking,
    slots: &[(u16, SmallVec<[u8; 3]>)],
    k: usize,
    binding: &mut Binding,
    used: &mut SmallVec<[usize; 8]>,
    out: &mut Vec<Binding>,
) {
    if k == slots.len() {
        out.push(binding.clone());
        return;
    }
    let (p, seq) = &slots[k];
    let lo = m.partition_point(|(q, _)| q < p);
    let hi = m.partition_point(|(q, _)| q <= p);
    for i in lo..hi {
        if used.contains(&i) || (i > lo && m[i] == m[i - 1] && !used.contains(&(i - 1))) {
            continue;
        }
        let tok = &m[i].1;
        let mut newly: SmallVec<[usize; 3]> = SmallVec::new();
        let mut ok = true;
        for (j, &v) in seq.iter().enumerate() {
            let v = v as usize;
            if binding[v] == UNBOUND {
                binding[v] = tok[j];
                newly.push(v);
            } else if binding[v] != tok[j] {
                ok = false;
                break;
            }
        }
        if ok {
            used.push(i);
            bind(m, slots, k + 1, binding, used, out);
            used.pop();
        }
        for v in newly {
            binding[v] = UNBOUND;
        }
    }
}

/// An optimal alignment of `l` and `m` using only whole events and
/// transitions of `m`.
pub fn align(l: &SystemLog, m: &ProcessModel, params: &CostParams, opts: &SearchOptions) -> Result<Alignment, AlignError> {
    let mut s = Search::new(l, m, None, params, opts)?;
    let (path, stats) = s.run(opts.max_states)?;
    s.build(l, path, stats)
}

/// An optimal relaxed alignment of `l` and the relaxed model of `m`.
pub fn relaxed_align(l: &SystemLog, m: &ProcessModel, params: &CostParams, opts: &SearchOptions) -> Result<Alignment, AlignError> {
    relaxed_align_with(l, &build_relaxed_model(m), params, opts)
}

pub fn relaxed_align_with(
    l: &SystemLog,
    rm: &RelaxedModel,
    params: &CostParams,
    opts: &SearchOptions,
) -> Result<Alignment, AlignError> {
    let mut s = Search::new(l, &rm.model, Some(rm), params, opts)?;
    let (path, stats) = s.run(opts.max_states)?;
    s.build(l, path, stats)
}
