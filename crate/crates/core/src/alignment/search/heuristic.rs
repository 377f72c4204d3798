//! A lower bound on the remaining cost, from one object at a time.
//!
//! An object's footprint in a marking is the multiset of (place, position)
//! pairs of the tokens it occurs in. Forgetting all other objects, every
//! firing moves the footprint of each object it binds, so the footprints of
//! a role form a small state space of their own. Aligning the object's
//! remaining trace against that space, with one unit per deviating step,
//! bounds from below what the object contributes to the real alignment:
//! every deviating move costs at least its weight for each object it
//! involves. Objects of substitutable roles are skipped.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use smallvec::SmallVec;

use super::{CMarking, Obj, Search, MUST_SPLIT};
use crate::alignment::CostScheme;

type Footprint = SmallVec<[(u16, u8); 4]>;

pub(super) const INF: i128 = i128::MAX / 4;
const MAX_STATES: usize = 4096;
const MAX_TOKENS: usize = 4;
/// Objects whose events have more orders than this get no bound.
const MAX_TRACES: usize = 24;

struct RoleSpace {
    index: HashMap<Footprint, usize>,
    /// Reverse edges: target → (source, label).
    back: Vec<Vec<(usize, Option<u32>)>>,
    complete: bool,
}

struct Table {
    space: usize,
    trace: Vec<(usize, usize)>,
    dist: Vec<i128>,
}

pub(super) struct Heuristic {
    sum: bool,
    spaces: Vec<Option<RoleSpace>>,
    /// One table per order of the object's events; empty when unbounded.
    tables: HashMap<Obj, Vec<Table>>,
    /// Per role, for objects minted during the search.
    fallback: Vec<Vec<Table>>,
}

fn footprint(m: &CMarking, o: Obj) -> Footprint {
    let mut f: Footprint = SmallVec::new();
    for (p, tok) in m {
        for (i, &x) in tok.iter().enumerate() {
            if x == o {
                f.push((*p, i as u8));
            }
        }
    }
    f.sort();
    f
}

impl Heuristic {
    pub(super) fn new(s: &Search<'_>) -> Self {
        let mut labels: HashMap<&str, u32> = HashMap::new();
        for e in &s.events {
            let n = labels.len() as u32;
            labels.entry(e.activity.as_str()).or_insert(n);
        }
        for t in &s.transitions {
            if let Some(a) = &t.activity {
                let n = labels.len() as u32;
                labels.entry(a.as_str()).or_insert(n);
            }
        }
        let scale = s.scale;
        let w_log = (s.params.log_weight * crate::alignment::Cost::int(scale)).numer();
        let w_model = (s.params.model_weight * crate::alignment::Cost::int(scale)).numer();

        let n_roles = s.roles.len();
        let mut seeds: Vec<Vec<Footprint>> = vec![vec![Footprint::new()]; n_roles];
        let mut watched: Vec<Obj> = Vec::new();
        for (_, t) in s.initial.iter().chain(&s.final_marking) {
            watched.extend(t.iter().copied());
        }
        for e in &s.events {
            watched.extend(e.objs.iter().copied());
        }
        watched.sort();
        watched.dedup();
        for &o in &watched {
            seeds[s.objects.roles[o as usize] as usize].push(footprint(&s.initial, o));
        }

        let spaces: Vec<Option<RoleSpace>> = (0..n_roles)
            .map(|r| (!s.substitutable[r]).then(|| explore(s, r as u16, &seeds[r], &labels)))
            .collect();

        let mut tables = HashMap::new();
        for &o in &watched {
            let r = s.objects.roles[o as usize] as usize;
            let list = spaces[r].as_ref().map_or_else(Vec::new, |space| {
                let goals = goals(s, o, space);
                traces_of(s, o)
                    .into_iter()
                    .map(|trace| distances(space, r, trace, &goals, s, &labels, w_log, w_model))
                    .collect()
            });
            tables.insert(o, list);
        }
        let fallback = (0..n_roles)
            .map(|r| {
                spaces[r]
                    .as_ref()
                    .map(|space| {
                        let goals = space.index.get(&Footprint::new()).copied().into_iter().collect::<Vec<_>>();
                        distances(space, r, Vec::new(), &goals, s, &labels, w_log, w_model)
                    })
                    .into_iter()
                    .collect()
            })
            .collect();
        Heuristic { sum: s.params.scheme == CostScheme::Relaxed, spaces, tables, fallback }
    }

    pub(super) fn estimate(&self, s: &Search<'_>, res: &[u16], m: &CMarking) -> i128 {
        let mut feet: HashMap<Obj, Footprint> = HashMap::new();
        for (p, tok) in m {
            for (i, &x) in tok.iter().enumerate() {
                feet.entry(x).or_default().push((*p, i as u8));
            }
        }
        let mut total = 0i128;
        let open = |&(e, slot): &(usize, usize)| (res[e] & !MUST_SPLIT) >> slot & 1 == 1;
        let mut eval = |o: Obj, list: &[Table]| -> bool {
            let Some(first) = list.first() else { return true };
            let Some(space) = self.spaces[first.space].as_ref() else { return true };
            let mut f = feet.get(&o).cloned().unwrap_or_default();
            f.sort();
            let Some(&k) = space.index.get(&f) else { return true };
            // the least over the orders whose prefix is what has been consumed
            let mut d = None::<i128>;
            for t in list {
                let done = t.trace.iter().take_while(|x| !open(x)).count();
                if t.trace[done..].iter().all(open) {
                    let v = t.dist[k * (t.trace.len() + 1) + done];
                    d = Some(d.map_or(v, |x| x.min(v)));
                }
            }
            let Some(d) = d else { return true };
            if d >= INF {
                return !space.complete;
            }
            if space.complete {
                total = if self.sum { total + d } else { total.max(d) };
            }
            true
        };
        for (&o, t) in &self.tables {
            if !eval(o, t) {
                return INF;
            }
        }
        for &o in feet.keys() {
            if !self.tables.contains_key(&o) {
                let r = s.objects.roles[o as usize] as usize;
                if !eval(o, &self.fallback[r]) {
                    return INF;
                }
            }
        }
        total
    }
}

/// The orders in which the events of `o` may be consumed, each with the
/// slot of `o`; empty when there are more than [`MAX_TRACES`].
fn traces_of(s: &Search<'_>, o: Obj) -> Vec<Vec<(usize, usize)>> {
    let items: Vec<(usize, usize)> =
        (0..s.events.len()).filter_map(|e| s.events[e].objs.iter().position(|&x| x == o).map(|slot| (e, slot))).collect();
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(items.len());
    let mut used = vec![false; items.len()];
    if !extend(s, &items, &mut used, &mut cur, &mut out) {
        return Vec::new();
    }
    out
}

fn extend(
    s: &Search<'_>,
    items: &[(usize, usize)],
    used: &mut [bool],
    cur: &mut Vec<(usize, usize)>,
    out: &mut Vec<Vec<(usize, usize)>>,
) -> bool {
    if cur.len() == items.len() {
        out.push(cur.clone());
        return out.len() <= MAX_TRACES;
    }
    for i in 0..items.len() {
        let ready = !used[i]
            && (0..items.len()).all(|j| used[j] || j == i || !s.events[items[i].0].preds.contains(&items[j].0));
        if ready {
            used[i] = true;
            cur.push(items[i]);
            let ok = extend(s, items, used, cur, out);
            cur.pop();
            used[i] = false;
            if !ok {
                return false;
            }
        }
    }
    true
}

fn goals(s: &Search<'_>, o: Obj, space: &RoleSpace) -> Vec<usize> {
    let mut out = Vec::new();
    let fin = footprint(&s.final_marking, o);
    out.extend(space.index.get(&fin));
    if !s.strict && !s.persistent[s.objects.roles[o as usize] as usize] {
        out.extend(space.index.get(&footprint(&s.initial, o)));
    }
    out.sort();
    out.dedup();
    out
}

/// Moves of one object of role `r` under transition `t`, one per nonempty
/// set of variables of `r` it binds.
fn moves_of(s: &Search<'_>, t: usize, r: u16) -> Vec<(Footprint, Footprint, bool)> {
    let tr = &s.transitions[t];
    let vars: Vec<usize> = (0..tr.var_names.len()).filter(|&v| tr.var_roles[v] == r).collect();
    let mut out = Vec::new();
    for mask in 1u32..(1 << vars.len()) {
        let chosen: Vec<usize> = (0..vars.len()).filter(|i| mask >> i & 1 == 1).map(|i| vars[i]).collect();
        let side = |arcs: &[(u16, SmallVec<[u8; 3]>)]| -> Footprint {
            let mut f: Footprint = SmallVec::new();
            for (p, seq) in arcs {
                for (i, &v) in seq.iter().enumerate() {
                    if chosen.contains(&(v as usize)) {
                        f.push((*p, i as u8));
                    }
                }
            }
            f.sort();
            f
        };
        let fresh = chosen.iter().any(|v| tr.fresh.contains(v));
        let (pre, post) = (side(&tr.inputs), side(&tr.outputs));
        if fresh && !pre.is_empty() {
            continue;
        }
        out.push((pre, post, fresh));
    }
    out
}

fn explore(s: &Search<'_>, r: u16, seeds: &[Footprint], labels: &HashMap<&str, u32>) -> RoleSpace {
    let moves: Vec<(Option<u32>, Vec<(Footprint, Footprint, bool)>)> = (0..s.transitions.len())
        .map(|t| (s.transitions[t].activity.as_deref().map(|a| labels[a]), moves_of(s, t, r)))
        .collect();
    let mut index: HashMap<Footprint, usize> = HashMap::new();
    let mut states: Vec<Footprint> = Vec::new();
    let mut fwd: Vec<Vec<(usize, Option<u32>)>> = Vec::new();
    let mut queue = VecDeque::new();
    let mut complete = true;
    for f in seeds {
        if !index.contains_key(f) {
            index.insert(f.clone(), states.len());
            states.push(f.clone());
            fwd.push(Vec::new());
            queue.push_back(states.len() - 1);
        }
    }
    while let Some(k) = queue.pop_front() {
        let cur = states[k].clone();
        for (label, ms) in &moves {
            for (pre, post, fresh) in ms {
                if *fresh && !cur.is_empty() {
                    continue;
                }
                let Some(mut next) = remove_all(&cur, pre) else { continue };
                next.extend(post.iter().copied());
                next.sort();
                if next.len() > MAX_TOKENS {
                    complete = false;
                    continue;
                }
                let j = match index.get(&next) {
                    Some(&j) => j,
                    None => {
                        if states.len() >= MAX_STATES {
                            complete = false;
                            continue;
                        }
                        index.insert(next.clone(), states.len());
                        states.push(next);
                        fwd.push(Vec::new());
                        queue.push_back(states.len() - 1);
                        states.len() - 1
                    }
                };
                fwd[k].push((j, *label));
            }
        }
    }
    let mut back = vec![Vec::new(); states.len()];
    for (k, out) in fwd.into_iter().enumerate() {
        for (j, label) in out {
            back[j].push((k, label));
        }
    }
    RoleSpace { index, back, complete }
}

fn remove_all(f: &Footprint, pre: &Footprint) -> Option<Footprint> {
    let mut out = f.clone();
    for x in pre {
        let i = out.iter().position(|y| y == x)?;
        out.remove(i);
    }
    Some(out)
}

#[allow(clippy::too_many_arguments)]
fn distances(
    space: &RoleSpace,
    role: usize,
    trace: Vec<(usize, usize)>,
    goals: &[usize],
    s: &Search<'_>,
    labels: &HashMap<&str, u32>,
    w_log: i128,
    w_model: i128,
) -> Table {
    let width = trace.len() + 1;
    let acts: Vec<u32> = trace.iter().map(|&(e, _)| labels[s.events[e].activity.as_str()]).collect();
    let n = space.back.len();
    let mut dist = vec![INF; n * width];
    let mut heap = BinaryHeap::new();
    for &g in goals {
        dist[g * width + trace.len()] = 0;
        heap.push(Reverse((0i128, g, trace.len())));
    }
    while let Some(Reverse((d, k, j))) = heap.pop() {
        if d > dist[k * width + j] {
            continue;
        }
        let mut relax = |k2: usize, j2: usize, c: i128, heap: &mut BinaryHeap<_>| {
            let nd = d + c;
            if nd < dist[k2 * width + j2] {
                dist[k2 * width + j2] = nd;
                heap.push(Reverse((nd, k2, j2)));
            }
        };
        if j > 0 {
            relax(k, j - 1, w_log, &mut heap);
        }
        for &(src, label) in &space.back[k] {
            relax(src, j, if label.is_some() { w_model } else { 0 }, &mut heap);
            if j > 0 && label.is_some() && label == Some(acts[j - 1]) {
                relax(src, j - 1, 0, &mut heap);
            }
        }
    }
    Table { space: role, trace, dist }
}
