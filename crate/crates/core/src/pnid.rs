//! Typed Petri nets with identifiers (t-PNIDs).
//!
//! Places are typed by a sequence of roles and hold tuples of object names.
//! Arcs carry a multiset of variable sequences; a transition fires under a
//! mode that binds every variable on its arcs to an object. Fresh variables
//! occur only on output arcs and mint object names that are not in the
//! current marking.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objects::{ObjectMultiset, ObjectUniverse};
use crate::poset::Poset;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("unknown place `{0}`")]
    UnknownPlace(String),
    #[error("unknown transition `{0}`")]
    UnknownTransition(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("id `{0}` is used for both a place and a transition")]
    Clash(String),
    #[error("place `{0}` has an empty type")]
    EmptyPlaceType(String),
    #[error("arc {place} of `{transition}`: variables {vars:?} do not match place type {alpha:?}")]
    ArcType { transition: String, place: String, vars: Vec<String>, alpha: Vec<String> },
    #[error("fresh variable `{1}` used on an input arc of `{0}`")]
    FreshOnInput(String, String),
    #[error("output variable `{1}` of `{0}` is neither fresh nor consumed")]
    UnboundOutput(String, String),
    #[error("token {token:?} does not match the type of place `{place}`")]
    TokenType { place: String, token: Vec<String> },
    #[error("transition `{transition}` is not enabled: {reason}")]
    NotEnabled { transition: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub role: String,
    pub fresh: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Silent,
    Activity(String),
}

impl Label {
    pub fn is_silent(&self) -> bool {
        matches!(self, Label::Silent)
    }

    pub fn activity(&self) -> Option<&str> {
        match self {
            Label::Silent => None,
            Label::Activity(a) => Some(a),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Silent => f.write_str("τ"),
            Label::Activity(a) => f.write_str(a),
        }
    }
}

/// Marks a place or transition as the projection of a base element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProjectionTag {
    pub base: String,
    pub kept_roles: BTreeSet<String>,
    pub dropped_roles: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Place {
    pub id: String,
    pub alpha: Vec<String>,
    pub projection: Option<ProjectionTag>,
}

/// One arc: the place and the multiset of variable sequences it carries,
/// listed one sequence per token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arc {
    pub place: String,
    pub vars: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub id: String,
    pub label: Label,
    pub inputs: Vec<Arc>,
    pub outputs: Vec<Arc>,
    pub projection: Option<ProjectionTag>,
}

impl Transition {
    /// Variables on the transition's arcs, in name order.
    pub fn variables(&self) -> BTreeSet<String> {
        self.inputs
            .iter()
            .chain(&self.outputs)
            .flat_map(|a| a.vars.iter().flatten().cloned())
            .collect()
    }

    pub fn input_variables(&self) -> BTreeSet<String> {
        self.inputs.iter().flat_map(|a| a.vars.iter().flatten().cloned()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tpnid {
    pub variables: BTreeMap<String, Variable>,
    pub places: BTreeMap<String, Place>,
    pub transitions: BTreeMap<String, Transition>,
}

pub type Token = Vec<String>;

/// Place-wise multisets of object tuples. Empty entries are never stored, so
/// derived equality is structural equality.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Marking(BTreeMap<String, BTreeMap<Token, u32>>);

impl Marking {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, place: &str, token: Token, count: u32) {
        if count > 0 {
            *self.0.entry(place.to_string()).or_default().entry(token).or_insert(0) += count;
        }
    }

    /// Removes `count` copies; returns false (and leaves the marking
    /// unchanged) when fewer are present.
    pub fn remove(&mut self, place: &str, token: &Token, count: u32) -> bool {
        let Some(tokens) = self.0.get_mut(place) else { return count == 0 };
        let have = tokens.get(token).copied().unwrap_or(0);
        if have < count {
            return false;
        }
        if have == count {
            tokens.remove(token);
            if tokens.is_empty() {
                self.0.remove(place);
            }
        } else {
            tokens.insert(token.clone(), have - count);
        }
        true
    }

    pub fn count(&self, place: &str, token: &Token) -> u32 {
        self.0.get(place).and_then(|t| t.get(token)).copied().unwrap_or(0)
    }

    pub fn tokens(&self, place: &str) -> impl Iterator<Item = (&Token, u32)> {
        self.0.get(place).into_iter().flat_map(|t| t.iter().map(|(k, &v)| (k, v)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Token, u32)> {
        self.0.iter().flat_map(|(p, t)| t.iter().map(move |(k, &v)| (p.as_str(), k, v)))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.iter().map(|(_, _, c)| c).sum()
    }

    /// Every object name occurring in some token.
    pub fn object_names(&self) -> BTreeSet<String> {
        self.iter().flat_map(|(_, t, _)| t.iter().cloned()).collect()
    }

    pub fn contains_object(&self, name: &str) -> bool {
        self.iter().any(|(_, t, _)| t.iter().any(|o| o == name))
    }

    pub fn leq(&self, other: &Marking) -> bool {
        self.iter().all(|(p, t, c)| other.count(p, t) >= c)
    }
}

impl fmt::Debug for Marking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (p, toks) in &self.0 {
            let list: Vec<String> =
                toks.iter().map(|(t, c)| if *c > 1 { format!("{c}·({})", t.join(",")) } else { format!("({})", t.join(",")) }).collect();
            m.entry(p, &list);
        }
        m.finish()
    }
}

/// A binding of variables to object names.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mode(pub BTreeMap<String, String>);

impl Mode {
    pub fn get(&self, var: &str) -> Option<&str> {
        self.0.get(var).map(String::as_str)
    }

    pub fn bind(mut self, var: &str, obj: &str) -> Self {
        self.0.insert(var.to_string(), obj.to_string());
        self
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Mode {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Mode(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TransitionFiring {
    pub id: String,
    pub transition: String,
    pub mode: Mode,
}

impl TransitionFiring {
    pub fn new(id: impl Into<String>, transition: impl Into<String>, mode: Mode) -> Self {
        TransitionFiring { id: id.into(), transition: transition.into(), mode }
    }

    /// The multiset of objects bound by the mode.
    pub fn involved(&self) -> ObjectMultiset {
        self.mode.0.values().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessModel {
    pub net: Tpnid,
    pub initial: Marking,
    pub final_marking: Marking,
    pub universe: ObjectUniverse,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionPoset {
    pub run: Poset<String>,
    pub firings: BTreeMap<String, TransitionFiring>,
}

impl ExecutionPoset {
    /// A totally ordered run.
    pub fn from_sequence(firings: Vec<TransitionFiring>) -> Self {
        let ids: Vec<String> = firings.iter().map(|f| f.id.clone()).collect();
        let pairs: Vec<(String, String)> = ids.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
        let run = Poset::new(ids, pairs).expect("a sequence is acyclic");
        ExecutionPoset { run, firings: firings.into_iter().map(|f| (f.id.clone(), f)).collect() }
    }
}

/// Names that canonical fresh bindings must avoid, plus extra candidate
/// names per role that fresh variables may bind to.
#[derive(Debug, Clone, Default)]
pub struct FreshContext {
    pub reserved: BTreeSet<String>,
    pub candidates: BTreeMap<String, Vec<String>>,
}

impl Tpnid {
    /// Checks the structural invariants of the net.
    pub fn validate(&self) -> Result<(), NetError> {
        for p in self.places.values() {
            if self.transitions.contains_key(&p.id) {
                return Err(NetError::Clash(p.id.clone()));
            }
            if p.alpha.is_empty() {
                return Err(NetError::EmptyPlaceType(p.id.clone()));
            }
        }
        for t in self.transitions.values() {
            for (arcs, input) in [(&t.inputs, true), (&t.outputs, false)] {
                for arc in arcs {
                    let place = self.places.get(&arc.place).ok_or_else(|| NetError::UnknownPlace(arc.place.clone()))?;
                    for seq in &arc.vars {
                        let mut roles = Vec::with_capacity(seq.len());
                        for v in seq {
                            let var = self.variables.get(v).ok_or_else(|| NetError::UnknownVariable(v.clone()))?;
                            if input && var.fresh {
                                return Err(NetError::FreshOnInput(t.id.clone(), v.clone()));
                            }
                            roles.push(var.role.clone());
                        }
                        if roles != place.alpha {
                            return Err(NetError::ArcType {
                                transition: t.id.clone(),
                                place: arc.place.clone(),
                                vars: seq.clone(),
                                alpha: place.alpha.clone(),
                            });
                        }
                    }
                }
            }
            let consumed = t.input_variables();
            for v in t.variables() {
                if !self.variables[&v].fresh && !consumed.contains(&v) {
                    return Err(NetError::UnboundOutput(t.id.clone(), v));
                }
            }
        }
        Ok(())
    }

    pub fn transition(&self, id: &str) -> Result<&Transition, NetError> {
        self.transitions.get(id).ok_or_else(|| NetError::UnknownTransition(id.to_string()))
    }

    /// Roles of the variables of `t`.
    pub fn transition_roles(&self, t: &Transition) -> BTreeSet<String> {
        t.variables().iter().map(|v| self.variables[v].role.clone()).collect()
    }

    /// Number of variables of a transition, `|Var(t)|`.
    pub fn var_count(&self, t: &str) -> usize {
        self.transitions.get(t).map_or(0, |t| t.variables().len())
    }

    pub fn check_marking(&self, m: &Marking) -> Result<(), NetError> {
        for (p, tok, _) in m.iter() {
            let place = self.places.get(p).ok_or_else(|| NetError::UnknownPlace(p.to_string()))?;
            if tok.len() != place.alpha.len() {
                return Err(NetError::TokenType { place: p.to_string(), token: tok.clone() });
            }
        }
        Ok(())
    }
}

impl ProcessModel {
    pub fn validate(&self) -> Result<(), NetError> {
        self.net.validate()?;
        self.net.check_marking(&self.initial)?;
        self.net.check_marking(&self.final_marking)
    }

    pub fn enabled_modes(&self, marking: &Marking, t: &str) -> Result<BTreeSet<Mode>, NetError> {
        self.enabled_modes_with_context(marking, t, &FreshContext::default())
    }

    /// Like [`ProcessModel::enabled_modes`], additionally avoiding the
    /// context's reserved names for canonical fresh names and offering each
    /// context candidate absent from the marking as an extra fresh binding.
    pub fn enabled_modes_with_context(
        &self,
        marking: &Marking,
        t: &str,
        ctx: &FreshContext,
    ) -> Result<BTreeSet<Mode>, NetError> {
        let tr = self.net.transition(t)?;
        let slots: Vec<(&str, &Vec<String>)> =
            tr.inputs.iter().flat_map(|a| a.vars.iter().map(move |s| (a.place.as_str(), s))).collect();
        let mut partial = Vec::new();
        bind_inputs(marking, &slots, 0, &mut BTreeMap::new(), &mut Vec::new(), &mut partial);

        let fresh: Vec<&Variable> =
            tr.variables().iter().map(|v| &self.net.variables[v]).filter(|v| v.fresh).collect();
        let mut out = BTreeSet::new();
        for base in partial {
            let mut modes = vec![base];
            let mut taken: BTreeSet<String> = BTreeSet::new();
            for var in &fresh {
                let canonical = canonical_fresh_name(&var.role, |n| {
                    marking.contains_object(n) || ctx.reserved.contains(n)
                        || taken.contains(n)
                });
                taken.insert(canonical.clone());
                let mut options = vec![canonical];
                for c in ctx.candidates.get(&var.role).into_iter().flatten() {
                    if !marking.contains_object(c) && !options.contains(c) {
                        options.push(c.clone());
                    }
                }
                modes = modes
                    .into_iter()
                    .flat_map(|m| options.iter().map(move |o| m.clone().bind(&var.name, o)))
                    .collect();
            }
            for m in modes {
                // two fresh variables must not share a name
                let fresh_vals: BTreeSet<&str> = fresh.iter().filter_map(|v| m.get(&v.name)).collect();
                if fresh_vals.len() == fresh.len() {
                    out.insert(m);
                }
            }
        }
        Ok(out)
    }

    /// Input and output tokens of `t` under `mode`.
    pub fn instantiate(&self, t: &Transition, mode: &Mode) -> Result<(Vec<(String, Token)>, Vec<(String, Token)>), NetError> {
        let inst = |arcs: &[Arc]| -> Result<Vec<(String, Token)>, NetError> {
            let mut out = Vec::new();
            for a in arcs {
                for seq in &a.vars {
                    let mut tok = Vec::with_capacity(seq.len());
                    for v in seq {
                        let o = mode.get(v).ok_or_else(|| NetError::NotEnabled {
                            transition: t.id.clone(),
                            reason: format!("variable `{v}` is unbound"),
                        })?;
                        tok.push(o.to_string());
                    }
                    out.push((a.place.clone(), tok));
                }
            }
            Ok(out)
        };
        Ok((inst(&t.inputs)?, inst(&t.outputs)?))
    }

    /// `m - pre + post` for the firing.
    pub fn fire(&self, marking: &Marking, firing: &TransitionFiring) -> Result<Marking, NetError> {
        let t = self.net.transition(&firing.transition)?;
        let not_enabled = |reason: String| NetError::NotEnabled { transition: t.id.clone(), reason };
        let vars = t.variables();
        for v in firing.mode.0.keys() {
            if !vars.contains(v) {
                return Err(not_enabled(format!("mode binds foreign variable `{v}`")));
            }
        }
        for v in &vars {
            let var = &self.net.variables[v];
            if let Some(obj) = firing.mode.get(v) {
                if let Some(role) = self.universe.role_of(obj) {
                    if role != var.role {
                        return Err(not_enabled(format!("`{obj}` has role {role}, variable `{v}` needs {}", var.role)));
                    }
                }
                if var.fresh && marking.contains_object(obj) {
                    return Err(not_enabled(format!("fresh object `{obj}` already exists")));
                }
            }
        }
        let (pre, post) = self.instantiate(t, &firing.mode)?;
        let mut next = marking.clone();
        for (p, tok) in &pre {
            if !next.remove(p, tok, 1) {
                return Err(not_enabled(format!("missing token ({}) in {p}", tok.join(","))));
            }
        }
        for (p, tok) in post {
            next.add(&p, tok, 1);
        }
        Ok(next)
    }

    /// Fires `seq` in order and returns its causal run: a firing precedes
    /// another when it produced a token the other consumed, or when it used
    /// an object that the other later minted afresh.
    pub fn causal_run(&self, seq: Vec<TransitionFiring>) -> Result<ExecutionPoset, NetError> {
        let mut producers: BTreeMap<(String, Token), VecDeque<Option<String>>> = BTreeMap::new();
        for (p, tok, c) in self.initial.iter() {
            producers.entry((p.to_string(), tok.clone())).or_default().extend(std::iter::repeat(None).take(c as usize));
        }
        let mut users: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut marking = self.initial.clone();
        let mut pairs = Vec::new();
        for f in &seq {
            let t = self.net.transition(&f.transition)?;
            marking = self.fire(&marking, f)?;
            let (pre, post) = self.instantiate(t, &f.mode)?;
            for key in pre {
                let q = producers.get_mut(&key).expect("token consumed by an enabled firing");
                if let Some(Some(src)) = q.pop_front() {
                    pairs.push((src, f.id.clone()));
                }
            }
            for v in t.variables() {
                if self.net.variables[&v].fresh {
                    for prev in users.get(&f.mode.0[&v]).into_iter().flatten() {
                        pairs.push((prev.clone(), f.id.clone()));
                    }
                }
            }
            for key in post {
                producers.entry(key).or_default().push_back(Some(f.id.clone()));
            }
            for o in f.mode.0.values() {
                users.entry(o.clone()).or_default().push(f.id.clone());
            }
        }
        let ids: Vec<String> = seq.iter().map(|f| f.id.clone()).collect();
        let run = Poset::new(ids, pairs).expect("causal order follows the firing sequence");
        Ok(ExecutionPoset { run, firings: seq.into_iter().map(|f| (f.id.clone(), f)).collect() })
    }

    /// True iff every linear extension of the run fires from the initial to
    /// the final marking.
    ///
    /// The marking reached after a downward-closed set of firings does not
    /// depend on the order they fired in, so it suffices to visit every
    /// downward-closed set once and check that each of its minimal
    /// successors is enabled.
    pub fn is_execution_poset(&self, run: &ExecutionPoset) -> bool {
        self.is_execution_poset_to(run, |m| *m == self.final_marking)
    }

    /// [`ProcessModel::is_execution_poset`] with a custom test for the
    /// marking reached after the whole run.
    pub fn is_execution_poset_to(&self, run: &ExecutionPoset, accept: impl Fn(&Marking) -> bool) -> bool {
        let elems = run.run.elements();
        if elems.len() != run.firings.len() || elems.iter().any(|e| !run.firings.contains_key(e)) {
            return false;
        }
        let n = elems.len();
        let preds: Vec<Vec<usize>> = elems
            .iter()
            .map(|e| run.run.predecessors(e).iter().map(|p| run.run.index_of(p).unwrap()).collect())
            .collect();
        let mut seen: HashSet<FixedBitSet> = HashSet::new();
        let mut queue = VecDeque::new();
        let start = FixedBitSet::with_capacity(n);
        seen.insert(start.clone());
        queue.push_back((start, self.initial.clone()));
        while let Some((done, marking)) = queue.pop_front() {
            if done.count_ones(..) == n {
                if !accept(&marking) {
                    return false;
                }
                continue;
            }
            for i in 0..n {
                if done.contains(i) || !preds[i].iter().all(|&p| done.contains(p)) {
                    continue;
                }
                let Ok(next) = self.fire(&marking, &run.firings[&elems[i]]) else { return false };
                let mut d = done.clone();
                d.insert(i);
                if seen.insert(d.clone()) {
                    queue.push_back((d, next));
                }
            }
        }
        true
    }

    /// Reference check that fires every linear extension separately.
    pub fn is_execution_poset_naive(&self, run: &ExecutionPoset, limit: usize) -> bool {
        let ext = run.run.linear_extensions(limit);
        ext.sequences.iter().all(|seq| {
            let mut m = self.initial.clone();
            for id in seq {
                match run.firings.get(id).map(|f| self.fire(&m, f)) {
                    Some(Ok(next)) => m = next,
                    _ => return false,
                }
            }
            m == self.final_marking
        })
    }

    /// The projection of the model onto the roles of `objs`, with markings
    /// restricted to tokens over `objs`.
    pub fn project_net(&self, objs: &ObjectMultiset) -> ProcessModel {
        let roles = self.universe.roles_of(objs);
        let net = &self.net;
        let mut out = Tpnid::default();
        let mut place_map: BTreeMap<String, (String, Vec<usize>)> = BTreeMap::new();
        for p in net.places.values() {
            let keep: Vec<usize> = (0..p.alpha.len()).filter(|&i| roles.contains(&p.alpha[i])).collect();
            if keep.is_empty() {
                continue;
            }
            let alpha: Vec<String> = keep.iter().map(|&i| p.alpha[i].clone()).collect();
            let place = if keep.len() == p.alpha.len() {
                p.clone()
            } else {
                let kept: BTreeSet<String> = alpha.iter().cloned().collect();
                let dropped = p.alpha.iter().filter(|r| !kept.contains(*r)).cloned().collect();
                let base = p.projection.as_ref().map_or(p.id.clone(), |t| t.base.clone());
                Place {
                    id: projected_name(&base, &kept),
                    alpha,
                    projection: Some(ProjectionTag { base, kept_roles: kept, dropped_roles: dropped }),
                }
            };
            place_map.insert(p.id.clone(), (place.id.clone(), keep));
            out.places.insert(place.id.clone(), place);
        }
        for t in net.transitions.values() {
            let project_arcs = |arcs: &[Arc]| -> Vec<Arc> {
                arcs.iter()
                    .filter_map(|a| {
                        let (id, keep) = place_map.get(&a.place)?;
                        let vars = a.vars.iter().map(|s| keep.iter().map(|&i| s[i].clone()).collect()).collect();
                        Some(Arc { place: id.clone(), vars })
                    })
                    .collect()
            };
            let inputs = project_arcs(&t.inputs);
            let outputs = project_arcs(&t.outputs);
            if inputs.is_empty() && outputs.is_empty() {
                continue;
            }
            let mut nt = Transition { id: t.id.clone(), label: t.label.clone(), inputs, outputs, projection: t.projection.clone() };
            let all_roles = net.transition_roles(t);
            let kept: BTreeSet<String> = net.transition_roles(&nt).into_iter().collect();
            if kept != all_roles {
                let base = t.projection.as_ref().map_or(t.id.clone(), |tag| tag.base.clone());
                nt.id = projected_name(&base, &kept);
                nt.projection = Some(ProjectionTag {
                    base,
                    dropped_roles: all_roles.difference(&kept).cloned().collect(),
                    kept_roles: kept,
                });
            }
            for v in nt.variables() {
                out.variables.insert(v.clone(), net.variables[&v].clone());
            }
            out.transitions.insert(nt.id.clone(), nt);
        }
        let project_marking = |m: &Marking| {
            let mut pm = Marking::new();
            for (p, tok, c) in m.iter() {
                let Some((id, keep)) = place_map.get(p) else { continue };
                let t: Token = keep.iter().map(|&i| tok[i].clone()).collect();
                let cap = t.iter().map(|o| objs.count(o)).min().unwrap_or(0);
                pm.add(id, t, c.min(cap));
            }
            pm
        };
        let mut universe = ObjectUniverse::new(self.universe.roles().filter(|r| roles.contains(&r.name)))
            .expect("subset of valid roles");
        for (o, c) in self.universe.objects().min_with(objs).iter() {
            if c > 0 {
                universe.add_object(o, self.universe.role_of(o).unwrap(), c).expect("role kept");
            }
        }
        ProcessModel {
            net: out,
            initial: project_marking(&self.initial),
            final_marking: project_marking(&self.final_marking),
            universe,
        }
    }
}

/// `base|{r1,r2}` naming of projected places and transitions.
pub fn projected_name(base: &str, kept: &BTreeSet<String>) -> String {
    format!("{base}|{{{}}}", kept.iter().cloned().collect::<Vec<_>>().join(","))
}

/// Lowest `{role}{k}`, `k >= 1`, for which `used` is false.
pub fn canonical_fresh_name(role: &str, mut used: impl FnMut(&str) -> bool) -> String {
    (1..).map(|k| format!("{role}{k}")).find(|n| !used(n)).expect("unbounded counter")
}

fn bind_inputs(
    marking: &Marking,
    slots: &[(&str, &Vec<String>)],
    k: usize,
    binding: &mut BTreeMap<String, String>,
    taken: &mut Vec<(String, Token)>,
    out: &mut Vec<Mode>,
) {
    if k == slots.len() {
        out.push(Mode(binding.clone()));
        return;
    }
    let (place, vars) = slots[k];
    for (tok, count) in marking.tokens(place) {
        let used = taken.iter().filter(|(p, t)| p == place && t == tok).count() as u32;
        if used >= count {
            continue;
        }
        let mut added = Vec::new();
        let mut ok = true;
        for (v, o) in vars.iter().zip(tok) {
            match binding.get(v) {
                Some(b) if b != o => {
                    ok = false;
                    break;
                }
                Some(_) => {}
                None => {
                    binding.insert(v.clone(), o.clone());
                    added.push(v.clone());
                }
            }
        }
        if ok {
            taken.push((place.to_string(), tok.clone()));
            bind_inputs(marking, slots, k + 1, binding, taken, out);
            taken.pop();
        }
        for v in added {
            binding.remove(&v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::running_example as rx;

    fn firing(id: &str, t: &str, binding: &[(&str, &str)]) -> TransitionFiring {
        TransitionFiring::new(id, t, binding.iter().copied().collect())
    }

    #[test]
    fn running_example_is_valid() {
        rx::model().validate().unwrap();
    }

    #[test]
    fn initially_enabled_modes() {
        let m = rx::model();
        let modes = m.enabled_modes(&m.initial, "t_start").unwrap();
        let want: BTreeSet<Mode> = [[("d", "d1")], [("d", "d2")]].into_iter().map(|b| b.into_iter().collect()).collect();
        assert_eq!(modes, want);
        let create = m.enabled_modes(&m.initial, "create").unwrap();
        assert_eq!(create.len(), 1);
        assert_eq!(create.iter().next().unwrap().get("nu_p"), Some("p1"));
        let enabled: Vec<&String> = m
            .net
            .transitions
            .keys()
            .filter(|t| !m.enabled_modes(&m.initial, t).unwrap().is_empty())
            .collect();
        assert_eq!(enabled, ["create", "t_start"]);
    }

    #[test]
    fn fresh_names_avoid_context() {
        let m = rx::model();
        let ctx = FreshContext {
            reserved: ["p1".to_string()].into(),
            candidates: [("p".to_string(), vec!["p7".to_string()])].into(),
        };
        let modes = m.enabled_modes_with_context(&m.initial, "create", &ctx).unwrap();
        let names: Vec<&str> = modes.iter().map(|m| m.get("nu_p").unwrap()).collect();
        assert_eq!(names, ["p2", "p7"]);
    }

    #[test]
    fn fire_t_start() {
        let m = rx::model();
        let next = m.fire(&m.initial, &firing("f1", "t_start", &[("d", "d1")])).unwrap();
        assert_eq!(next.tokens("p12").collect::<Vec<_>>(), vec![(&vec!["d2".to_string()], 1)]);
        assert_eq!(next.tokens("p11").collect::<Vec<_>>(), vec![(&vec!["d1".to_string()], 1)]);
        let err = m.fire(&m.initial, &firing("f2", "t_stop", &[("d", "d1")])).unwrap_err();
        assert!(matches!(err, NetError::NotEnabled { .. }));
    }

    #[test]
    fn deliver_depot_needs_registered_pair() {
        let m = rx::model();
        let seq = [
            firing("a", "t_start", &[("d", "d1")]),
            firing("b", "create", &[("nu_p", "p1")]),
            firing("c", "order_depot", &[("p", "p1")]),
            firing("d", "tau1", &[("p", "p1"), ("d", "d1")]),
        ];
        let mut mk = m.initial.clone();
        for f in &seq {
            mk = m.fire(&mk, f).unwrap();
        }
        assert!(m.enabled_modes(&mk, "deliver_depot").unwrap().is_empty());
        mk = m.fire(&mk, &firing("e", "register_depot", &[("p", "p1"), ("w", "w1")])).unwrap();
        let modes = m.enabled_modes(&mk, "deliver_depot").unwrap();
        let want: Mode = [("p", "p1"), ("d", "d1"), ("w", "w1")].into_iter().collect();
        assert_eq!(modes.into_iter().collect::<Vec<_>>(), vec![want]);
    }

    #[test]
    fn self_loop_keeps_marking() {
        let mut m = rx::model();
        m.net.transitions.insert(
            "loop".into(),
            Transition {
                id: "loop".into(),
                label: Label::Silent,
                inputs: vec![Arc { place: "p8".into(), vars: vec![vec!["w".into()]] }],
                outputs: vec![Arc { place: "p8".into(), vars: vec![vec!["w".into()]] }],
                projection: None,
            },
        );
        let next = m.fire(&m.initial, &firing("l", "loop", &[("w", "w1")])).unwrap();
        assert_eq!(next, m.initial);
    }

    #[test]
    fn run_one_is_an_execution_poset() {
        let m = rx::model();
        let run = rx::run_one();
        assert!(m.is_execution_poset(&run));
        assert!(m.is_execution_poset_naive(&run, 100_000));
    }

    #[test]
    fn empty_run_needs_initial_equal_final() {
        let m = rx::model();
        let run = ExecutionPoset { run: Poset::empty(), firings: BTreeMap::new() };
        assert!(m.is_execution_poset(&run));
        let mut other = m.clone();
        other.final_marking = Marking::new();
        assert!(!other.is_execution_poset(&run));
    }

    #[test]
    fn missing_tau1_breaks_the_run() {
        let m = rx::model();
        let mut run = rx::run_one();
        let tau: Vec<String> =
            run.firings.values().filter(|f| f.transition == "tau1").map(|f| f.id.clone()).collect();
        assert!(!tau.is_empty());
        let drop = Poset::antichain(tau.iter().cloned());
        run.run = run.run.difference(&drop);
        for t in &tau {
            run.firings.remove(t);
        }
        assert!(!m.is_execution_poset(&run));
        // the naive check agrees on the six-firing prefix of the package
        let prefix: BTreeSet<String> = run.run.elements().iter().take(6).cloned().collect();
        let sub = ExecutionPoset {
            run: run.run.project(&prefix),
            firings: run.firings.iter().filter(|(k, _)| prefix.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect(),
        };
        assert_eq!(m.is_execution_poset(&sub), m.is_execution_poset_naive(&sub, 100_000));
    }

    #[test]
    fn projection_on_packages() {
        let m = rx::model();
        let objs = m.universe.objects().add(&["p1"].into_iter().collect());
        let pm = m.project_net(&objs.filter(|o| o.starts_with('p')));
        let ids: Vec<&str> = pm.net.transitions.keys().map(String::as_str).collect();
        assert!(ids.contains(&"ring|{p}") && ids.contains(&"deliver_home|{p}"));
        assert!(!ids.contains(&"t_start"));
        assert!(pm.net.places.contains_key("p5|{p}"));
        let tag = pm.net.transitions["ring|{p}"].projection.clone().unwrap();
        assert_eq!(tag.dropped_roles, ["d".to_string()].into());
        pm.net.validate().unwrap();
    }

    #[test]
    fn projection_on_warehouses() {
        let m = rx::model();
        let pm = m.project_net(&m.universe.objects_of_roles(&["w".to_string()].into()).unwrap());
        let places: Vec<&str> = pm.net.places.keys().map(String::as_str).collect();
        assert_eq!(places, ["p7|{w}", "p8"]);
        assert_eq!(pm.initial.tokens("p8").map(|(_, c)| c).sum::<u32>(), 3);
    }

    #[test]
    fn projection_on_everything_is_identity_and_idempotent() {
        let m = rx::model();
        let all = m.universe.objects().clone();
        assert_eq!(m.project_net(&all), m);
        let p = m.universe.objects_of_roles(&["p".to_string(), "d".to_string()].into()).unwrap();
        let once = m.project_net(&p);
        assert_eq!(once.project_net(&p), once);
    }
}
