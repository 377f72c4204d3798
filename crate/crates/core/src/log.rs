//! System logs: recorded events ordered by a partial order, their object
//! projections, and relaxed versions in which events are split into
//! concurrent fragments.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objects::{ObjectMultiset, ObjectUniverse};
use crate::poset::{Poset, PosetError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("event `{0}` has no objects")]
    NoObjects(String),
    #[error("event id `{0}` is used twice")]
    DuplicateEvent(String),
    #[error("unknown event `{0}`")]
    UnknownEvent(String),
    #[error("event `{event}` mentions unknown object `{object}`")]
    UnknownObject { event: String, object: String },
    #[error("bad partition of event `{0}`: {1}")]
    BadPartition(String, String),
    #[error(transparent)]
    Order(#[from] PosetError),
}

/// Marks an event as a fragment of a recorded event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentOf {
    pub parent: String,
    pub original: ObjectMultiset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: String,
    pub activity: String,
    pub objects: ObjectMultiset,
    pub projection_of: Option<FragmentOf>,
    pub timestamp: Option<f64>,
    pub recorder: Option<String>,
}

impl Event {
    pub fn new(id: impl Into<String>, activity: impl Into<String>, objects: ObjectMultiset) -> Self {
        Event { id: id.into(), activity: activity.into(), objects, projection_of: None, timestamp: None, recorder: None }
    }

    /// Id of the recorded event this event stems from.
    pub fn root(&self) -> &str {
        self.projection_of.as_ref().map_or(&self.id, |f| &f.parent)
    }

    /// Objects of the recorded event this event stems from.
    pub fn original_objects(&self) -> &ObjectMultiset {
        self.projection_of.as_ref().map_or(&self.objects, |f| &f.original)
    }

    pub fn is_fragment(&self) -> bool {
        self.projection_of.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemLog {
    pub events: BTreeMap<String, Event>,
    pub order: Poset<String>,
    pub universe: ObjectUniverse,
}

impl SystemLog {
    pub fn new(
        events: impl IntoIterator<Item = Event>,
        pairs: impl IntoIterator<Item = (String, String)>,
        universe: ObjectUniverse,
    ) -> Result<Self, LogError> {
        let mut map = BTreeMap::new();
        for e in events {
            if e.objects.is_empty() {
                return Err(LogError::NoObjects(e.id));
            }
            for (o, _) in e.objects.iter() {
                if universe.role_of(o).is_none() {
                    return Err(LogError::UnknownObject { event: e.id.clone(), object: o.to_string() });
                }
            }
            if map.contains_key(&e.id) {
                return Err(LogError::DuplicateEvent(e.id));
            }
            map.insert(e.id.clone(), e);
        }
        let pairs: Vec<(String, String)> = pairs.into_iter().collect();
        for (a, b) in &pairs {
            for x in [a, b] {
                if !map.contains_key(x) {
                    return Err(LogError::UnknownEvent(x.clone()));
                }
            }
        }
        let order = Poset::new(map.keys().cloned(), pairs)?;
        Ok(SystemLog { events: map, order, universe })
    }

    /// A log ordered by timestamps, see [`derive_order_from_timestamps`].
    pub fn from_timestamps(events: Vec<Event>, tolerance: f64, universe: ObjectUniverse) -> Result<Self, LogError> {
        let stamps: Vec<(String, f64)> = events.iter().map(|e| (e.id.clone(), e.timestamp.unwrap_or(0.0))).collect();
        let order = derive_order_from_timestamps(&stamps, tolerance)?;
        Self::new(events, order.pairs(), universe)
    }

    pub fn empty(universe: ObjectUniverse) -> Self {
        SystemLog { events: BTreeMap::new(), order: Poset::empty(), universe }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn event(&self, id: &str) -> Option<&Event> {
        self.events.get(id)
    }

    /// Every object mentioned by some event.
    pub fn objects(&self) -> ObjectMultiset {
        let mut out = ObjectMultiset::new();
        for e in self.events.values() {
            for (o, _) in e.objects.iter() {
                if out.count(o) == 0 {
                    out.insert(o, 1);
                }
            }
        }
        out
    }

    /// Distinct recorder tags.
    pub fn recorders(&self) -> BTreeSet<String> {
        self.events.values().filter_map(|e| e.recorder.clone()).collect()
    }

    pub fn has_multiple_recorders(&self) -> bool {
        self.recorders().len() > 1
    }

    /// Events in a linear extension of the order, ties broken by id.
    pub fn topological_ids(&self) -> Vec<String> {
        let mut indeg: BTreeMap<&str, usize> = self.events.keys().map(|k| (k.as_str(), 0)).collect();
        for (_, b) in self.order.covering_relation() {
            *indeg.get_mut(b.as_str()).unwrap() += 1;
        }
        let cover = self.order.covering_relation();
        let mut ready: BTreeSet<&str> = indeg.iter().filter(|(_, &d)| d == 0).map(|(k, _)| *k).collect();
        let mut out = Vec::with_capacity(self.events.len());
        while let Some(x) = ready.pop_first() {
            out.push(x.to_string());
            for (a, b) in &cover {
                if a == x {
                    let d = indeg.get_mut(b.as_str()).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(b.as_str());
                    }
                }
            }
        }
        out
    }
}

/// The projection of `l` onto `objs`: every event keeps `min(O', objs)` and
/// disappears when that is empty; the order between survivors is unchanged.
pub fn project_log(l: &SystemLog, objs: &ObjectMultiset) -> SystemLog {
    let mut events = BTreeMap::new();
    for e in l.events.values() {
        let kept = e.objects.min_with(objs);
        if !kept.is_empty() {
            let mut p = e.clone();
            p.objects = kept;
            events.insert(p.id.clone(), p);
        }
    }
    let order = l.order.project_by(|x| events.contains_key(x));
    SystemLog { events, order, universe: l.universe.clone() }
}

/// Splits event `e` into one fragment per part of `partition`.
///
/// Fragments are named `{root}#{k}`. The new order is the transitive closure
/// of the pairs `(x, y)` whose sources are ordered in `l` and which either
/// involve no new fragment or share an object.
pub fn relax_event(l: &SystemLog, e: &str, partition: &[ObjectMultiset]) -> Result<SystemLog, LogError> {
    let ev = l.events.get(e).ok_or_else(|| LogError::UnknownEvent(e.to_string()))?;
    let bad = |msg: &str| LogError::BadPartition(e.to_string(), msg.to_string());
    if partition.len() < 2 {
        return Err(bad("needs at least two parts"));
    }
    if partition.iter().any(ObjectMultiset::is_empty) {
        return Err(bad("empty part"));
    }
    let sum = partition.iter().fold(ObjectMultiset::new(), |acc, p| acc.add(p));
    if sum != ev.objects {
        return Err(bad("parts do not sum to the event's objects"));
    }
    let root = ev.root().to_string();
    let mut next_index = l
        .events
        .values()
        .filter(|x| x.root() == root && x.is_fragment())
        .filter_map(|x| x.id.rsplit_once('#').and_then(|(_, k)| k.parse::<usize>().ok()))
        .max()
        .unwrap_or(0);
    let original = ev.original_objects().clone();
    let mut fragments = Vec::new();
    for part in partition {
        next_index += 1;
        let mut f = ev.clone();
        f.id = format!("{root}#{next_index}");
        f.objects = part.clone();
        f.projection_of = Some(FragmentOf { parent: root.clone(), original: original.clone() });
        fragments.push(f);
    }
    let new_ids: BTreeSet<String> = fragments.iter().map(|f| f.id.clone()).collect();
    let mut events: BTreeMap<String, Event> =
        l.events.iter().filter(|(k, _)| k.as_str() != e).map(|(k, v)| (k.clone(), v.clone())).collect();
    for f in fragments {
        events.insert(f.id.clone(), f);
    }
    let src = |x: &str| if new_ids.contains(x) { e.to_string() } else { x.to_string() };
    let mut pairs = Vec::new();
    for x in events.values() {
        for y in events.values() {
            if !l.order.precedes(&src(&x.id), &src(&y.id)) {
                continue;
            }
            let touches_new = new_ids.contains(&x.id) || new_ids.contains(&y.id);
            if !touches_new || shares_object(&x.objects, &y.objects) {
                pairs.push((x.id.clone(), y.id.clone()));
            }
        }
    }
    let order = Poset::new(events.keys().cloned(), pairs)?;
    Ok(SystemLog { events, order, universe: l.universe.clone() })
}

pub fn shares_object(a: &ObjectMultiset, b: &ObjectMultiset) -> bool {
    a.iter().any(|(o, _)| b.count(o) > 0)
}

/// Checks that `candidate` is a relaxed version of `original`: fragments of
/// each recorded event sum to its objects, and every single-object trace is
/// the same in both logs once fragments are mapped to their recorded event.
pub fn is_relaxed_version(original: &SystemLog, candidate: &SystemLog) -> bool {
    relaxed_version_violations(original, candidate).is_empty()
}

/// Reasons why `candidate` is not a relaxed version of `original`.
pub fn relaxed_version_violations(original: &SystemLog, candidate: &SystemLog) -> Vec<String> {
    let mut out = Vec::new();
    let mut sums: BTreeMap<&str, ObjectMultiset> = BTreeMap::new();
    let mut whole: BTreeSet<&str> = BTreeSet::new();
    for c in candidate.events.values() {
        let root = c.root();
        let Some(o) = original.events.get(root) else {
            out.push(format!("event `{}` has no recorded counterpart `{root}`", c.id));
            continue;
        };
        if o.activity != c.activity {
            out.push(format!("event `{}` changes activity {} to {}", c.id, o.activity, c.activity));
        }
        if o.is_fragment() {
            out.push(format!("recorded event `{root}` is itself a fragment"));
        }
        if !c.is_fragment() {
            whole.insert(root);
        }
        let acc = sums.entry(root).or_default();
        *acc = acc.add(&c.objects);
    }
    for o in original.events.values() {
        match sums.get(o.id.as_str()) {
            None => out.push(format!("recorded event `{}` is missing", o.id)),
            Some(s) if *s != o.objects => {
                out.push(format!("objects of `{}` sum to {s}, expected {}", o.id, o.objects))
            }
            _ => {}
        }
        if whole.contains(o.id.as_str()) && candidate.events.values().filter(|c| c.root() == o.id).count() > 1 {
            out.push(format!("`{}` occurs both whole and split", o.id));
        }
    }
    if !out.is_empty() {
        return out;
    }
    let objects = original.objects();
    for (obj, _) in objects.iter() {
        let with = |l: &SystemLog| -> Vec<(String, String)> {
            l.events.values().filter(|e| e.objects.count(obj) > 0).map(|e| (e.id.clone(), e.root().to_string())).collect()
        };
        let orig = with(original);
        let cand = with(candidate);
        let roots: Vec<&String> = cand.iter().map(|(_, r)| r).collect();
        let unique: BTreeSet<&String> = roots.iter().copied().collect();
        if unique.len() != roots.len() {
            out.push(format!("trace of `{obj}` contains two fragments of one event"));
            continue;
        }
        let orig_ids: BTreeSet<&String> = orig.iter().map(|(id, _)| id).collect();
        if unique != orig_ids {
            out.push(format!("trace of `{obj}` covers different events"));
            continue;
        }
        for (x, rx) in &cand {
            for (y, ry) in &cand {
                if candidate.order.precedes(x, y) != original.order.precedes(rx, ry) {
                    out.push(format!("trace of `{obj}` disagrees on the order of `{x}` and `{y}`"));
                }
            }
        }
    }
    out
}

/// The order of a relaxed version of `original` made of `elements`: the
/// transitive closure of all pairs whose recorded events are ordered and
/// that are either both whole or share an object.
pub fn relaxed_order(original: &SystemLog, elements: &[Event]) -> Result<Poset<String>, PosetError> {
    let mut pairs = Vec::new();
    for x in elements {
        for y in elements {
            if original.order.precedes(&x.root().to_string(), &y.root().to_string())
                && ((!x.is_fragment() && !y.is_fragment()) || shares_object(&x.objects, &y.objects))
            {
                pairs.push((x.id.clone(), y.id.clone()));
            }
        }
    }
    Poset::new(elements.iter().map(|e| e.id.clone()), pairs)
}

/// The relaxed version of `original` whose events are `elements`.
pub fn relaxed_log(original: &SystemLog, elements: Vec<Event>) -> Result<SystemLog, LogError> {
    let order = relaxed_order(original, &elements)?;
    SystemLog::new(elements, order.pairs(), original.universe.clone())
}

/// `e1 ≺ e2` iff `t2 - t1 > tolerance`.
pub fn derive_order_from_timestamps(stamps: &[(String, f64)], tolerance: f64) -> Result<Poset<String>, PosetError> {
    let mut pairs = Vec::new();
    for (a, ta) in stamps {
        for (b, tb) in stamps {
            if tb - ta > tolerance {
                pairs.push((a.clone(), b.clone()));
            }
        }
    }
    Poset::new(stamps.iter().map(|(id, _)| id.clone()), pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::running_example as rx;
    use proptest::prelude::*;

    fn ms(xs: &[&str]) -> ObjectMultiset {
        xs.iter().copied().collect()
    }

    fn ring_p2(l: &SystemLog) -> String {
        l.events.values().find(|e| e.activity == "ring").unwrap().id.clone()
    }

    #[test]
    fn trace_of_deliverer() {
        let l = rx::log_one();
        let t = project_log(&l, &ms(&["d1"]));
        let acts: Vec<String> = t.topological_ids().iter().map(|id| t.events[id].activity.clone()).collect();
        assert_eq!(acts, ["t_start", "deliver_depot", "ring", "deliver_depot", "t_stop"]);
        assert!(t.events.values().all(|e| e.objects == ms(&["d1"])));
        assert_eq!(t.order.covering_relation().len(), 4);
    }

    #[test]
    fn projection_identity_and_empty() {
        let l = rx::log_one();
        assert_eq!(project_log(&l, l.universe.objects()), l);
        assert!(project_log(&l, &ObjectMultiset::new()).is_empty());
    }

    #[test]
    fn relax_ring_of_p2() {
        let l = rx::log_one();
        let e = ring_p2(&l);
        let r = relax_event(&l, &e, &[ms(&["p2"]), ms(&["d1"])]).unwrap();
        let fp = format!("{e}#1");
        let fd = format!("{e}#2");
        assert_eq!(r.events[&fp].objects, ms(&["p2"]));
        assert!(!r.order.comparable(&fp, &fd));
        assert!(is_relaxed_version(&l, &r));
        assert!(is_relaxed_version(&l, &l));
        // the package fragment is still ordered inside the package's trace
        let dd = r.events.values().find(|x| x.activity == "deliver_depot" && x.objects.count("p2") > 0).unwrap();
        assert!(r.order.precedes(&fp, &dd.id));
    }

    #[test]
    fn bad_partitions() {
        let l = rx::log_one();
        let e = ring_p2(&l);
        assert!(matches!(relax_event(&l, &e, &[ms(&["p2", "d1"])]), Err(LogError::BadPartition(..))));
        assert!(matches!(relax_event(&l, &e, &[ms(&["p2"]), ms(&["d2"])]), Err(LogError::BadPartition(..))));
        let r = relax_event(&l, &e, &[ms(&["p2"]), ms(&["d1"])]).unwrap();
        let again = relax_event(&r, &format!("{e}#1"), &[ms(&["p2"]), ms(&[])]);
        assert!(matches!(again, Err(LogError::BadPartition(..))));
    }

    #[test]
    fn dropping_an_object_is_not_a_relaxation() {
        let l = rx::log_one();
        let e = ring_p2(&l);
        let mut bad = relax_event(&l, &e, &[ms(&["p2"]), ms(&["d1"])]).unwrap();
        bad.events.remove(&format!("{e}#2"));
        bad.order = bad.order.project_by(|x| !x.ends_with("#2"));
        assert!(!is_relaxed_version(&l, &bad));
    }

    #[test]
    fn timestamp_orders() {
        let st = |ts: &[f64]| -> Vec<(String, f64)> { ts.iter().enumerate().map(|(i, t)| (format!("e{}", i + 1), *t)).collect() };
        let chain = derive_order_from_timestamps(&st(&[0.0, 10.0, 20.0]), 5.0).unwrap();
        assert_eq!(chain.pairs().len(), 3);
        assert!(derive_order_from_timestamps(&st(&[0.0, 3.0]), 5.0).unwrap().pairs().is_empty());
        let p = derive_order_from_timestamps(&st(&[0.0, 4.0, 8.0]), 5.0).unwrap();
        assert_eq!(p.pairs(), vec![("e1".to_string(), "e3".to_string())]);
    }

    proptest! {
        #[test]
        fn repeated_relaxation_stays_valid(seed in any::<u64>()) {
            let l = rx::log_one();
            let mut r = l.clone();
            let mut s = seed;
            for _ in 0..4 {
                let splittable: Vec<String> =
                    r.events.values().filter(|e| e.objects.size() >= 2).map(|e| e.id.clone()).collect();
                if splittable.is_empty() {
                    break;
                }
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let e = &splittable[(s >> 33) as usize % splittable.len()];
                let objs = r.events[e].objects.elements();
                let cut = 1 + (s >> 40) as usize % (objs.len() - 1);
                let a: ObjectMultiset = objs[..cut].iter().cloned().collect();
                let b: ObjectMultiset = objs[cut..].iter().cloned().collect();
                r = relax_event(&r, e, &[a, b]).unwrap();
            }
            prop_assert!(is_relaxed_version(&l, &r), "{:?}", relaxed_version_violations(&l, &r));
            for (o, _) in l.objects().iter() {
                let single = ObjectMultiset::singleton(o);
                let a = project_log(&l, &single);
                let b = project_log(&r, &single);
                prop_assert_eq!(a.len(), b.len());
                prop_assert_eq!(a.order.pairs().len(), b.order.pairs().len());
            }
        }

        #[test]
        fn projections_compose(mask_a in 0u32..64, mask_b in 0u32..64) {
            let l = rx::log_one();
            let names = ["p1", "p2", "d1", "w1", "d2", "w2"];
            let pick = |m: u32| -> ObjectMultiset { names.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, n)| *n).collect() };
            let (a, b) = (pick(mask_a), pick(mask_b));
            prop_assert_eq!(project_log(&project_log(&l, &a), &b), project_log(&l, &a.min_with(&b)));
        }
    }
}
