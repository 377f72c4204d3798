//! Finite partially ordered sets.
//!
//! The order is stored transitively closed as one successor bitset per element,
//! so comparability queries are constant time. The covering relation (Hasse
//! diagram) is derived on demand.

use std::collections::BTreeSet;
use std::fmt::Debug;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PosetError {
    #[error("order relation contains a cycle through `{0}`")]
    Cycle(String),
    #[error("pair references unknown element `{0}`")]
    UnknownElement(String),
    #[error("set is not downward closed: `{0}` is missing below `{1}`")]
    NotDownwardClosed(String, String),
}

/// A finite set together with a strict partial order over it.
#[derive(Clone, PartialEq, Eq)]
pub struct Poset<T> {
    elems: Vec<T>,
    succ: Vec<FixedBitSet>,
}

/// Serialized form: the elements and the covering pairs.
#[derive(Serialize, Deserialize)]
struct PosetRepr<T> {
    elements: Vec<T>,
    covering: Vec<(T, T)>,
}

impl<T: Ord + Clone + Debug + Serialize> Serialize for Poset<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PosetRepr { elements: self.elems.clone(), covering: self.covering_relation() }.serialize(s)
    }
}

impl<'de, T: Ord + Clone + Debug + Deserialize<'de>> Deserialize<'de> for Poset<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = PosetRepr::<T>::deserialize(d)?;
        Poset::new(r.elements, r.covering).map_err(serde::de::Error::custom)
    }
}

/// Result of [`Poset::linear_extensions`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearExtensions<T> {
    pub sequences: Vec<Vec<T>>,
    /// Set when more extensions exist than the requested limit.
    pub truncated: bool,
}

/// A partition of a poset into a downward-closed lower part and the rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cut<T: Ord> {
    pub lower: BTreeSet<T>,
    pub upper: BTreeSet<T>,
}

impl<T: Ord + Clone + Debug> Poset<T> {
    pub fn empty() -> Self {
        Poset { elems: Vec::new(), succ: Vec::new() }
    }

    /// An antichain over `elements`.
    pub fn antichain(elements: impl IntoIterator<Item = T>) -> Self {
        let elems: Vec<T> = elements.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let n = elems.len();
        Poset { elems, succ: vec![FixedBitSet::with_capacity(n); n] }
    }

    /// Builds the transitive closure of `pairs` over `elements`.
    ///
    /// Every element mentioned by a pair must be listed in `elements`.
    pub fn new(
        elements: impl IntoIterator<Item = T>,
        pairs: impl IntoIterator<Item = (T, T)>,
    ) -> Result<Self, PosetError> {
        let mut p = Self::antichain(elements);
        for (a, b) in pairs {
            let i = p.index_of(&a).ok_or_else(|| PosetError::UnknownElement(format!("{a:?}")))?;
            let j = p.index_of(&b).ok_or_else(|| PosetError::UnknownElement(format!("{b:?}")))?;
            if i == j {
                return Err(PosetError::Cycle(format!("{a:?}")));
            }
            p.succ[i].insert(j);
        }
        p.close()?;
        Ok(p)
    }

    /// Transitive closure of a bare relation; the carrier is the set of
    /// elements mentioned in `pairs`.
    pub fn transitive_closure(pairs: impl IntoIterator<Item = (T, T)>) -> Result<Self, PosetError> {
        let pairs: Vec<(T, T)> = pairs.into_iter().collect();
        let elems: BTreeSet<T> = pairs.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
        Self::new(elems, pairs)
    }

    fn close(&mut self) -> Result<(), PosetError> {
        let n = self.elems.len();
        for k in 0..n {
            let row_k = self.succ[k].clone();
            for i in 0..n {
                if self.succ[i].contains(k) {
                    self.succ[i].union_with(&row_k);
                }
            }
        }
        for i in 0..n {
            if self.succ[i].contains(i) {
                return Err(PosetError::Cycle(format!("{:?}", self.elems[i])));
            }
        }
        Ok(())
    }

    pub fn index_of(&self, x: &T) -> Option<usize> {
        self.elems.binary_search(x).ok()
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn contains(&self, x: &T) -> bool {
        self.index_of(x).is_some()
    }

    /// Elements in ascending id order.
    pub fn elements(&self) -> &[T] {
        &self.elems
    }

    pub fn element_set(&self) -> BTreeSet<T> {
        self.elems.iter().cloned().collect()
    }

    /// `a ≺ b`.
    pub fn precedes(&self, a: &T, b: &T) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.succ[i].contains(j),
            _ => false,
        }
    }

    pub fn comparable(&self, a: &T, b: &T) -> bool {
        self.precedes(a, b) || self.precedes(b, a)
    }

    pub fn successors(&self, x: &T) -> Vec<T> {
        match self.index_of(x) {
            Some(i) => self.succ[i].ones().map(|j| self.elems[j].clone()).collect(),
            None => Vec::new(),
        }
    }

    pub fn predecessors(&self, x: &T) -> Vec<T> {
        match self.index_of(x) {
            Some(j) => (0..self.elems.len())
                .filter(|&i| self.succ[i].contains(j))
                .map(|i| self.elems[i].clone())
                .collect(),
            None => Vec::new(),
        }
    }

    /// All pairs of the (closed) order.
    pub fn pairs(&self) -> Vec<(T, T)> {
        let mut out = Vec::new();
        for (i, row) in self.succ.iter().enumerate() {
            for j in row.ones() {
                out.push((self.elems[i].clone(), self.elems[j].clone()));
            }
        }
        out
    }

    /// The transitive reduction: `(x, y)` with no `z` such that `x ≺ z ≺ y`.
    pub fn covering_relation(&self) -> Vec<(T, T)> {
        let mut out = Vec::new();
        for (i, row) in self.succ.iter().enumerate() {
            let mut implied = FixedBitSet::with_capacity(self.elems.len());
            for z in row.ones() {
                implied.union_with(&self.succ[z]);
            }
            for j in row.ones() {
                if !implied.contains(j) {
                    out.push((self.elems[i].clone(), self.elems[j].clone()));
                }
            }
        }
        out
    }

    /// The subposet on `keep ∩ elements`.
    pub fn project(&self, keep: &BTreeSet<T>) -> Self {
        self.project_by(|x| keep.contains(x))
    }

    pub fn project_by(&self, mut keep: impl FnMut(&T) -> bool) -> Self {
        let kept: Vec<usize> = (0..self.elems.len()).filter(|&i| keep(&self.elems[i])).collect();
        let n = kept.len();
        let mut succ = vec![FixedBitSet::with_capacity(n); n];
        for (a, &i) in kept.iter().enumerate() {
            for (b, &j) in kept.iter().enumerate() {
                if self.succ[i].contains(j) {
                    succ[a].insert(b);
                }
            }
        }
        Poset { elems: kept.iter().map(|&i| self.elems[i].clone()).collect(), succ }
    }

    pub fn minimal_elements(&self) -> BTreeSet<T> {
        let n = self.elems.len();
        let mut has_pred = FixedBitSet::with_capacity(n);
        for row in &self.succ {
            has_pred.union_with(row);
        }
        (0..n).filter(|&i| !has_pred.contains(i)).map(|i| self.elems[i].clone()).collect()
    }

    pub fn maximal_elements(&self) -> BTreeSet<T> {
        (0..self.elems.len())
            .filter(|&i| self.succ[i].is_clear())
            .map(|i| self.elems[i].clone())
            .collect()
    }

    /// Enumerates linear extensions in lexicographic order of element ids,
    /// stopping after `limit` sequences.
    pub fn linear_extensions(&self, limit: usize) -> LinearExtensions<T> {
        let n = self.elems.len();
        let mut indeg = vec![0usize; n];
        for row in &self.succ {
            for j in row.ones() {
                indeg[j] += 1;
            }
        }
        let mut out = Vec::new();
        let mut truncated = false;
        let mut prefix = Vec::with_capacity(n);
        let mut used = vec![false; n];
        self.extend(&mut indeg, &mut used, &mut prefix, limit, &mut out, &mut truncated);
        LinearExtensions { sequences: out, truncated }
    }

    fn extend(
        &self,
        indeg: &mut [usize],
        used: &mut [bool],
        prefix: &mut Vec<usize>,
        limit: usize,
        out: &mut Vec<Vec<T>>,
        truncated: &mut bool,
    ) {
        if *truncated {
            return;
        }
        if prefix.len() == self.elems.len() {
            if out.len() == limit {
                *truncated = true;
            } else {
                out.push(prefix.iter().map(|&i| self.elems[i].clone()).collect());
            }
            return;
        }
        for i in 0..self.elems.len() {
            if used[i] || indeg[i] != 0 {
                continue;
            }
            used[i] = true;
            prefix.push(i);
            for j in self.succ[i].ones() {
                indeg[j] -= 1;
            }
            self.extend(indeg, used, prefix, limit, out, truncated);
            for j in self.succ[i].ones() {
                indeg[j] += 1;
            }
            prefix.pop();
            used[i] = false;
            if *truncated {
                return;
            }
        }
    }

    /// Union of carriers and relations, closed afterwards.
    pub fn union(&self, other: &Self) -> Result<Self, PosetError> {
        let elems = self.element_set().union(&other.element_set()).cloned().collect::<Vec<_>>();
        Self::new(elems, self.pairs().into_iter().chain(other.pairs()))
    }

    pub fn intersection(&self, other: &Self) -> Self {
        let elems: BTreeSet<T> = self.element_set().intersection(&other.element_set()).cloned().collect();
        let pairs: BTreeSet<(T, T)> = self.pairs().into_iter().collect();
        let common = other.pairs().into_iter().filter(|p| pairs.contains(p));
        // intersection of two partial orders is again transitive and acyclic
        Self::new(elems, common).expect("intersection of partial orders is a partial order")
    }

    /// Set difference on carriers; the relation keeps pairs among survivors.
    pub fn difference(&self, other: &Self) -> Self {
        let drop = other.element_set();
        self.project_by(|x| !drop.contains(x))
    }

    /// `self ⊆ other`: carrier inclusion and `≺_self = ≺_other ∩ (self × self)`.
    pub fn is_subposet(&self, other: &Self) -> bool {
        if !self.elems.iter().all(|x| other.contains(x)) {
            return false;
        }
        for a in &self.elems {
            for b in &self.elems {
                if self.precedes(a, b) != other.precedes(a, b) {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_downward_closed(&self, set: &BTreeSet<T>) -> bool {
        self.check_downward_closed(set).is_ok()
    }

    fn check_downward_closed(&self, set: &BTreeSet<T>) -> Result<(), PosetError> {
        for x in set {
            for y in self.predecessors(x) {
                if !set.contains(&y) {
                    return Err(PosetError::NotDownwardClosed(format!("{y:?}"), format!("{x:?}")));
                }
            }
        }
        Ok(())
    }

    /// Maps every element through `f`, which must be injective.
    pub fn relabel<U: Ord + Clone + Debug>(&self, mut f: impl FnMut(&T) -> U) -> Poset<U> {
        let mapped: Vec<U> = self.elems.iter().map(&mut f).collect();
        let pairs = self.pairs().into_iter().map(|(a, b)| {
            let i = self.index_of(&a).unwrap();
            let j = self.index_of(&b).unwrap();
            (mapped[i].clone(), mapped[j].clone())
        });
        Poset::new(mapped.clone(), pairs.collect::<Vec<_>>()).expect("injective relabeling preserves order")
    }
}

impl<T: Ord + Clone + Debug> Cut<T> {
    /// Validates `lower` as the lower part of a cut of `poset`.
    pub fn new(poset: &Poset<T>, lower: BTreeSet<T>) -> Result<Self, PosetError> {
        for x in &lower {
            if !poset.contains(x) {
                return Err(PosetError::UnknownElement(format!("{x:?}")));
            }
        }
        poset.check_downward_closed(&lower)?;
        let upper = poset.elements().iter().filter(|x| !lower.contains(x)).cloned().collect();
        Ok(Cut { lower, upper })
    }
}

impl<T: Ord + Clone + Debug> Debug for Poset<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Poset")
            .field("elements", &self.elems)
            .field("covering", &self.covering_relation())
            .finish()
    }
}

impl<T: Ord + Clone + Debug> Default for Poset<T> {
    fn default() -> Self {
        Self::empty()
    }
}
