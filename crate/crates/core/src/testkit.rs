//! Ground truth for tests: random runs of a model, runs read as logs, logs
//! with one injected quality issue, and small random net/log pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{Event, LogError, SystemLog};
use crate::objects::{ObjectError, ObjectMultiset, ObjectUniverse, Role, RoleKind};
use crate::pnid::{Arc, ExecutionPoset, FreshContext, Label, Marking, Mode, NetError, Place, ProcessModel, Tpnid, Transition, TransitionFiring, Variable};
use crate::poset::Poset;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TestkitError {
    #[error("no run to the final marking within the firing budget")]
    NoRunFound,
    #[error("no event matches {0}")]
    TargetNotFound(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Object(#[from] ObjectError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IssueKind {
    #[serde(rename = "mi_e")]
    MissingEvent,
    #[serde(rename = "in_e")]
    IncorrectEvent,
    #[serde(rename = "mi_o")]
    MissingObject,
    #[serde(rename = "in_o")]
    IncorrectObject,
    #[serde(rename = "mi_p")]
    MissingPosition,
    #[serde(rename = "in_p")]
    IncorrectPosition,
}

impl IssueKind {
    pub const ALL: [IssueKind; 6] = [
        IssueKind::MissingEvent,
        IssueKind::IncorrectEvent,
        IssueKind::MissingObject,
        IssueKind::IncorrectObject,
        IssueKind::MissingPosition,
        IssueKind::IncorrectPosition,
    ];

    pub fn category(self) -> crate::diagnosis::IssueCategory {
        use crate::diagnosis::IssueCategory as C;
        match self {
            IssueKind::MissingEvent => C::MissingEvent,
            IssueKind::IncorrectEvent => C::IncorrectEvent,
            IssueKind::MissingObject => C::MissingObject,
            IssueKind::IncorrectObject => C::IncorrectObject,
            IssueKind::MissingPosition => C::MissingPosition,
            IssueKind::IncorrectPosition => C::IncorrectPosition,
        }
    }
}

/// Which events an issue may hit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Any,
    Activity(String),
    /// Events involving an object of the role.
    Role(String),
    /// An event id, or an id prefix ending in `*`.
    Id(String),
}

impl Target {
    fn matches(&self, e: &Event, universe: &ObjectUniverse) -> bool {
        match self {
            Target::Any => true,
            Target::Activity(a) => e.activity == *a,
            Target::Role(r) => e.objects.iter().any(|(o, _)| universe.role_of(o) == Some(r.as_str())),
            Target::Id(p) => match p.strip_suffix('*') {
                Some(prefix) => e.id.starts_with(prefix),
                None => e.id == *p,
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueParams {
    /// The object to drop (mi_o) or to replace (in_o).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    /// The object put in its place (in_o).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueSpec {
    pub kind: IssueKind,
    pub target: Target,
    #[serde(default)]
    pub params: IssueParams,
}

impl IssueSpec {
    pub fn new(kind: IssueKind, target: Target) -> Self {
        IssueSpec { kind, target, params: IssueParams::default() }
    }
}

const COMPLETION_STATES: usize = 50_000;

fn enabled_firings(m: &ProcessModel, marking: &Marking, ctx: &FreshContext, allow_fresh: bool) -> Vec<(String, Mode)> {
    let mut out = Vec::new();
    for (id, t) in &m.net.transitions {
        if !allow_fresh && t.variables().iter().any(|v| m.net.variables[v].fresh) {
            continue;
        }
        for mode in m.enabled_modes_with_context(marking, id, ctx).expect("transition of the net") {
            out.push((id.clone(), mode));
        }
    }
    out
}

/// Shortest firing sequence from `start` to the final marking, with at most
/// `budget` firings. Fresh transitions are only tried when the final marking
/// holds an object that `start` lacks.
fn complete(m: &ProcessModel, start: &Marking, reserved: &BTreeSet<String>, budget: usize) -> Option<Vec<(String, Mode)>> {
    let allow_fresh = !m.final_marking.object_names().is_subset(&start.object_names());
    let ctx = FreshContext { reserved: reserved.clone(), candidates: BTreeMap::new() };
    let mut parent: HashMap<Marking, Option<(Marking, (String, Mode))>> = HashMap::new();
    let mut queue = VecDeque::from([(start.clone(), 0usize)]);
    parent.insert(start.clone(), None);
    while let Some((mk, depth)) = queue.pop_front() {
        if mk == m.final_marking {
            let mut path = Vec::new();
            let mut cur = mk;
            while let Some(Some((prev, step))) = parent.get(&cur).cloned() {
                path.push(step);
                cur = prev;
            }
            path.reverse();
            return Some(path);
        }
        if depth == budget || parent.len() > COMPLETION_STATES {
            continue;
        }
        for (t, mode) in enabled_firings(m, &mk, &ctx, allow_fresh) {
            let next = m.fire(&mk, &TransitionFiring::new("probe", t.clone(), mode.clone())).expect("enabled");
            if !parent.contains_key(&next) {
                parent.insert(next.clone(), Some((mk.clone(), (t, mode))));
                queue.push_back((next, depth + 1));
            }
        }
    }
    None
}

/// A random run from the initial to the final marking with at most
/// `max_firings` firings: a random walk, then the shortest completion.
/// Fresh objects never reuse a name seen earlier in the run.
pub fn generate_run(m: &ProcessModel, seed: u64, max_firings: usize) -> Result<ExecutionPoset, TestkitError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..12 {
        let walk_len = if attempt == 11 { 0 } else { rng.gen_range(0..=max_firings) };
        let mut marking = m.initial.clone();
        let mut reserved: BTreeSet<String> = m.initial.object_names();
        let mut steps: Vec<(String, Mode)> = Vec::new();
        while steps.len() < walk_len {
            let ctx = FreshContext { reserved: reserved.clone(), candidates: BTreeMap::new() };
            let options = enabled_firings(m, &marking, &ctx, true);
            // minting new objects is rarer than moving existing ones
            let weights: Vec<f64> = options
                .iter()
                .map(|(t, _)| if m.net.transitions[t].variables().iter().any(|v| m.net.variables[v].fresh) { 0.2 } else { 1.0 })
                .collect();
            if options.is_empty() {
                break;
            }
            let k = WeightedIndex::new(&weights).expect("positive weights").sample(&mut rng);
            let (t, mode) = options[k].clone();
            marking = m.fire(&marking, &TransitionFiring::new("probe", t.clone(), mode.clone()))?;
            reserved.extend(mode.0.values().cloned());
            steps.push((t, mode));
        }
        if let Some(rest) = complete(m, &marking, &reserved, max_firings - steps.len()) {
            steps.extend(rest);
            let mut counter: BTreeMap<String, usize> = BTreeMap::new();
            let seq = steps
                .into_iter()
                .map(|(t, mode)| {
                    let n = counter.entry(t.clone()).or_insert(0);
                    *n += 1;
                    TransitionFiring::new(format!("{t}#{n}"), t, mode)
                })
                .collect();
            return Ok(m.causal_run(seq)?);
        }
    }
    Err(TestkitError::NoRunFound)
}

/// Reads a run as a log: every visible firing becomes an event with the
/// transition's label and the firing's objects, τ firings disappear, and
/// the run's order is kept. Events are numbered `e01, e02, ..` along a
/// linear extension. Objects minted by the run join the universe.
pub fn run_as_log(m: &ProcessModel, run: &ExecutionPoset, recorder: Option<&dyn Fn(&str) -> String>) -> Result<SystemLog, TestkitError> {
    let mut universe = m.universe.clone();
    let visible: BTreeSet<String> = run
        .firings
        .values()
        .filter(|f| m.net.transitions.get(&f.transition).is_some_and(|t| !t.label.is_silent()))
        .map(|f| f.id.clone())
        .collect();
    let sub = run.run.project(&visible);
    let mut ids = BTreeMap::new();
    let mut events = Vec::new();
    for (k, fid) in linear_order(&sub).into_iter().enumerate() {
        let f = &run.firings[&fid];
        for (var, o) in &f.mode.0 {
            if universe.role_of(o).is_none() {
                universe.add_object(o, &m.net.variables[var].role, 1)?;
            }
        }
        let activity = m.net.transitions[&f.transition].label.activity().unwrap().to_string();
        let id = format!("e{:02}", k + 1);
        let mut e = Event::new(id.clone(), activity.clone(), f.involved());
        e.recorder = recorder.map(|r| r(&activity));
        ids.insert(fid, id);
        events.push(e);
    }
    let pairs = sub.pairs().into_iter().map(|(a, b)| (ids[&a].clone(), ids[&b].clone()));
    Ok(SystemLog::new(events, pairs, universe)?)
}

/// A linear extension, preferring elements in their stored order.
fn linear_order(p: &Poset<String>) -> Vec<String> {
    let mut left: Vec<String> = p.elements().to_vec();
    let mut out = Vec::with_capacity(left.len());
    while !left.is_empty() {
        let k = left.iter().position(|x| left.iter().all(|y| !p.precedes(y, x))).expect("acyclic");
        out.push(left.remove(k));
    }
    out
}

fn rebuild(l: &SystemLog, events: Vec<Event>, pairs: Vec<(String, String)>) -> Result<SystemLog, TestkitError> {
    Ok(SystemLog::new(events, pairs, l.universe.clone())?)
}

fn fresh_id(l: &SystemLog, base: &str) -> String {
    (1..).map(|k| format!("{base}_dup{k}")).find(|id| !l.events.contains_key(id)).unwrap()
}

/// The closed order after removing every pair between `target` and an
/// event of another recorder that no chain through other events implies.
fn erase_cross_pairs(l: &SystemLog, target: &str) -> Vec<(String, String)> {
    let rec = |id: &String| l.events[id].recorder.clone();
    let t = target.to_string();
    let kept: Vec<(String, String)> = l
        .order
        .pairs()
        .into_iter()
        .filter(|(a, b)| {
            let other = if *a == t { b } else if *b == t { a } else { return true };
            rec(other) == rec(&t)
        })
        .collect();
    Poset::new(l.events.keys().cloned(), kept).expect("a subrelation of an order").pairs()
}

/// Swaps `a` with `b`, where `b` covers `a`: `b` takes over the
/// predecessors of `a`, and `a` the successors of `b`.
fn swap_covering(l: &SystemLog, a: &str, b: &str) -> Vec<(String, String)> {
    let cover = l.order.covering_relation();
    let mut pairs = Vec::new();
    for (x, y) in &cover {
        if x == a && y == b {
            pairs.push((y.clone(), x.clone()));
            continue;
        }
        pairs.push((x.clone(), y.clone()));
        if y == a {
            pairs.push((x.clone(), b.to_string()));
        }
        if x == b {
            pairs.push((a.to_string(), y.clone()));
        }
    }
    pairs
}

/// Applies one quality issue to a log. The target is drawn with the seed
/// among the events the issue can actually change.
pub fn inject(l: &SystemLog, spec: &IssueSpec, seed: u64) -> Result<SystemLog, TestkitError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<&Event> = l.events.values().filter(|e| spec.target.matches(e, &l.universe)).collect();
    let not_found = || TestkitError::TargetNotFound(format!("{:?} for {:?}", spec.target, spec.kind));
    let role_of = |o: &str| l.universe.role_of(o).map(str::to_string);
    let pairs = || l.order.pairs();
    let events_except = |skip: &str| -> Vec<Event> { l.events.values().filter(|e| e.id != skip).cloned().collect() };

    match spec.kind {
        IssueKind::MissingEvent => {
            let e = pool.choose(&mut rng).ok_or_else(not_found)?;
            let keep: BTreeSet<String> = l.events.keys().filter(|k| **k != e.id).cloned().collect();
            rebuild(l, events_except(&e.id), l.order.project(&keep).pairs())
        }
        IssueKind::IncorrectEvent => {
            let e = pool.choose(&mut rng).ok_or_else(not_found)?;
            let anchors: Vec<&String> = l.events.keys().filter(|k| **k != e.id && !l.order.comparable(k, &e.id)).collect();
            let anchors = if anchors.is_empty() { l.events.keys().collect() } else { anchors };
            let z = (*anchors.choose(&mut rng).unwrap()).clone();
            let mut copy = (*e).clone();
            copy.id = fresh_id(l, &e.id);
            let mut ps = pairs();
            ps.push((z.clone(), copy.id.clone()));
            ps.extend(l.order.predecessors(&z).into_iter().map(|x| (x, copy.id.clone())));
            let mut events: Vec<Event> = l.events.values().cloned().collect();
            events.push(copy);
            rebuild(l, events, ps)
        }
        IssueKind::MissingObject => {
            let pool: Vec<&&Event> = pool
                .iter()
                .filter(|e| e.objects.size() >= 2 && spec.params.object.as_ref().is_none_or(|o| e.objects.count(o) > 0))
                .collect();
            let e = pool.choose(&mut rng).ok_or_else(not_found)?;
            let victim = match &spec.params.object {
                Some(o) => o.clone(),
                None => e.objects.elements().choose(&mut rng).unwrap().clone(),
            };
            let mut changed = (**e).clone();
            changed.objects = changed.objects.subtract(&ObjectMultiset::singleton(victim)).expect("object of the event");
            let mut events = events_except(&e.id);
            events.push(changed);
            rebuild(l, events, pairs())
        }
        IssueKind::IncorrectObject => {
            let known = l.objects();
            let mut options: Vec<(&Event, String, String)> = Vec::new();
            for e in &pool {
                for (o, _) in e.objects.iter() {
                    if spec.params.object.as_ref().is_some_and(|x| x != o) {
                        continue;
                    }
                    let role = role_of(o);
                    let mut alts: Vec<String> = match &spec.params.replacement {
                        Some(r) => vec![r.clone()],
                        None => known.iter().map(|(x, _)| x.to_string()).filter(|x| role_of(x) == role).collect(),
                    };
                    if alts.iter().all(|x| e.objects.count(x) > 0) && spec.params.replacement.is_none() {
                        alts = l.universe.objects().iter().map(|(x, _)| x.to_string()).filter(|x| role_of(x) == role).collect();
                    }
                    for r in alts {
                        if e.objects.count(&r) == 0 {
                            options.push((e, o.to_string(), r));
                        }
                    }
                }
            }
            let (e, from, to) = options.choose(&mut rng).ok_or_else(not_found)?;
            let mut changed = (*e).clone();
            let n = changed.objects.count(from);
            changed.objects = changed.objects.subtract(&ObjectMultiset::from_iter(std::iter::repeat(from.clone()).take(n as usize))).unwrap();
            changed.objects.insert(to.clone(), n);
            let mut events = events_except(&e.id);
            events.push(changed);
            rebuild(l, events, pairs())
        }
        IssueKind::MissingPosition => {
            let before = pairs().len();
            let mut options = Vec::new();
            for e in &pool {
                if e.recorder.is_none() {
                    continue;
                }
                let erased = erase_cross_pairs(l, &e.id);
                if erased.len() < before {
                    options.push(erased);
                }
            }
            let erased = options.choose(&mut rng).ok_or_else(not_found)?.clone();
            rebuild(l, l.events.values().cloned().collect(), erased)
        }
        IssueKind::IncorrectPosition => {
            let cover = l.order.covering_relation();
            let ids: BTreeSet<&str> = pool.iter().map(|e| e.id.as_str()).collect();
            let options: Vec<&(String, String)> =
                cover.iter().filter(|(a, b)| ids.contains(a.as_str()) || ids.contains(b.as_str())).collect();
            let (a, b) = options.choose(&mut rng).ok_or_else(not_found)?;
            let mut events: Vec<Event> = l.events.values().cloned().collect();
            let (ta, tb) = (l.events[a].timestamp, l.events[b].timestamp);
            for e in &mut events {
                if e.id == *a {
                    e.timestamp = tb;
                } else if e.id == *b {
                    e.timestamp = ta;
                }
            }
            rebuild(l, events, swap_covering(l, a, b))
        }
    }
}

/// A small random net with a log recorded from one of its runs, with noise.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: ProcessModel,
    pub log: SystemLog,
}

const LABELS: [&str; 4] = ["a", "b", "c", "d"];

/// At most 3 roles, 6 transitions and 6 events. The final marking is where
/// a random walk of the net ends, so a run always exists.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        if let Some(i) = try_instance(&mut rng) {
            return i;
        }
    }
}

fn try_instance(rng: &mut ChaCha8Rng) -> Option<Instance> {
    let roles: Vec<&str> = ["x", "y", "z"][..rng.gen_range(1..=3)].to_vec();
    let spontaneous = rng.gen_bool(0.25);
    let mut universe = ObjectUniverse::new(roles.iter().enumerate().map(|(i, r)| {
        Role::new(*r, if i == 0 && spontaneous { RoleKind::Spontaneous } else { RoleKind::Expected })
    }))
    .ok()?;

    let mut net = Tpnid::default();
    for r in &roles {
        net.variables.insert(r.to_string(), Variable { name: r.to_string(), role: r.to_string(), fresh: false });
    }
    if spontaneous {
        let name = format!("nu_{}", roles[0]);
        net.variables.insert(name.clone(), Variable { name, role: roles[0].into(), fresh: true });
    }
    let mut places: Vec<Vec<&str>> = Vec::new();
    for r in &roles {
        for _ in 0..rng.gen_range(1..=2) {
            places.push(vec![r]);
        }
    }
    if roles.len() >= 2 && rng.gen_bool(0.6) {
        places.push(vec![roles[0], roles[1]]);
    }
    places.truncate(5);
    for (i, alpha) in places.iter().enumerate() {
        let id = format!("q{}", i + 1);
        net.places.insert(id.clone(), Place { id, alpha: alpha.iter().map(|s| s.to_string()).collect(), projection: None });
    }

    let n_trans = rng.gen_range(2..=6);
    for k in 0..n_trans {
        let mut involved: Vec<&str> = vec![*roles.choose(rng).unwrap()];
        if roles.len() >= 2 && rng.gen_bool(0.4) {
            let other = *roles.choose(rng).unwrap();
            if !involved.contains(&other) {
                involved.push(other);
            }
        }
        let minting = spontaneous && involved == [roles[0]] && k == 0;
        let destroying = spontaneous && involved == [roles[0]] && k == 1;
        let arc = |i: usize, fresh: bool| Arc {
            place: format!("q{}", i + 1),
            vars: vec![places[i].iter().map(|r| if fresh && *r == roles[0] { format!("nu_{r}") } else { r.to_string() }).collect()],
        };
        // places that hold every involved role exactly once between them
        let cover = |rng: &mut ChaCha8Rng| -> Vec<usize> {
            let joint: Vec<usize> = (0..places.len()).filter(|&i| places[i].len() == 2 && involved.iter().all(|r| places[i].contains(r))).collect();
            if involved.len() == 2 && !joint.is_empty() && rng.gen_bool(0.5) {
                return vec![*joint.choose(rng).unwrap()];
            }
            involved
                .iter()
                .map(|r| *(0..places.len()).filter(|&i| places[i] == [*r]).collect::<Vec<_>>().choose(rng).unwrap())
                .collect()
        };
        let inputs: Vec<usize> = if minting { Vec::new() } else { cover(rng) };
        let outputs: Vec<usize> = if destroying { Vec::new() } else { cover(rng) };
        let id = format!("t{}", k + 1);
        let label = if rng.gen_bool(0.15) { Label::Silent } else { Label::Activity(LABELS[rng.gen_range(0..LABELS.len())].into()) };
        net.transitions.insert(
            id.clone(),
            Transition {
                id,
                label,
                inputs: inputs.iter().map(|&i| arc(i, false)).collect(),
                outputs: outputs.iter().map(|&i| arc(i, minting)).collect(),
                projection: None,
            },
        );
    }
    if net.transitions.is_empty() {
        return None;
    }

    let mut initial = Marking::new();
    for r in &roles {
        let n = if spontaneous && *r == roles[0] { rng.gen_range(0..=1) } else { rng.gen_range(1..=2) };
        for j in 1..=n {
            let o = format!("{r}{j}");
            universe.add_object(&o, r, 1).ok()?;
            let homes: Vec<usize> = (0..places.len()).filter(|&i| places[i] == [*r]).collect();
            let p = homes.choose(rng).unwrap();
            initial.add(&format!("q{}", p + 1), vec![o], 1);
        }
    }
    let mut model = ProcessModel { net, initial: initial.clone(), final_marking: initial.clone(), universe: universe.clone() };
    model.validate().ok()?;

    // walk
    let mut marking = initial;
    let mut reserved = marking.object_names();
    let mut seq = Vec::new();
    for step in 0..rng.gen_range(1..=6) {
        let ctx = FreshContext { reserved: reserved.clone(), candidates: BTreeMap::new() };
        let options = enabled_firings(&model, &marking, &ctx, true);
        let Some((t, mode)) = options.choose(rng).cloned() else { break };
        for (var, o) in &mode.0 {
            if universe.role_of(o).is_none() {
                universe.add_object(o, &model.net.variables[var].role, 1).ok()?;
            }
        }
        let f = TransitionFiring::new(format!("{t}#{step}"), t, mode);
        marking = model.fire(&marking, &f).ok()?;
        reserved.extend(f.mode.0.values().cloned());
        seq.push(f);
    }
    model.final_marking = marking;
    model.universe = universe.clone();

    // recorded behavior with noise
    let mut recorded: Vec<(String, ObjectMultiset)> = seq
        .iter()
        .filter_map(|f| model.net.transitions[&f.transition].label.activity().map(|a| (a.to_string(), f.involved())))
        .collect();
    let objects: Vec<String> = universe.objects().iter().map(|(o, _)| o.to_string()).collect();
    for _ in 0..rng.gen_range(0..=2) {
        match rng.gen_range(0..4) {
            0 if !recorded.is_empty() => {
                let k = rng.gen_range(0..recorded.len());
                recorded.remove(k);
            }
            1 => {
                let a = LABELS[rng.gen_range(0..LABELS.len())].to_string();
                let o = objects.choose(rng).unwrap().clone();
                let k = rng.gen_range(0..=recorded.len());
                recorded.insert(k, (a, ObjectMultiset::singleton(o)));
            }
            2 if recorded.len() >= 2 => {
                let k = rng.gen_range(0..recorded.len() - 1);
                recorded.swap(k, k + 1);
            }
            3 if !recorded.is_empty() => {
                let k = rng.gen_range(0..recorded.len());
                let o = objects.choose(rng).unwrap().clone();
                recorded[k].1.insert(o, 1);
            }
            _ => {}
        }
    }
    recorded.truncate(6);
    let events: Vec<Event> =
        recorded.into_iter().enumerate().map(|(k, (a, objs))| Event::new(format!("e{}", k + 1), a, objs)).collect();
    let ids: Vec<String> = events.iter().map(|e| e.id.clone()).collect();
    let pairs: Vec<(String, String)> = if rng.gen_bool(0.7) {
        ids.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect()
    } else {
        // a partial order: keep a random subset of the sequence's pairs
        let mut ps = Vec::new();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                if rng.gen_bool(0.5) {
                    ps.push((ids[i].clone(), ids[j].clone()));
                }
            }
        }
        ps
    };
    let log = SystemLog::new(events, pairs, universe).ok()?;
    Some(Instance { model, log })
}
