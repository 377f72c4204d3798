//! Object roles, object multisets and the object universe.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObjectError {
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("cannot subtract {1} x `{0}`: only {2} present")]
    Underflow(String, u32, u32),
    #[error("role `{0}` declared twice")]
    DuplicateRole(String),
    #[error("object `{0}` has multiplicity zero")]
    ZeroMultiplicity(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleKind {
    Persistent,
    Expected,
    Spontaneous,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Role {
    pub name: String,
    pub kind: RoleKind,
}

impl Role {
    pub fn new(name: impl Into<String>, kind: RoleKind) -> Self {
        Role { name: name.into(), kind }
    }
}

/// A finite multiset of object names. Counts are always at least one.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectMultiset(BTreeMap<String, u32>);

impl ObjectMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(name: impl Into<String>) -> Self {
        let mut m = Self::new();
        m.insert(name, 1);
        m
    }

    pub fn insert(&mut self, name: impl Into<String>, count: u32) {
        if count > 0 {
            *self.0.entry(name.into()).or_insert(0) += count;
        }
    }

    pub fn count(&self, name: &str) -> u32 {
        self.0.get(name).copied().unwrap_or(0)
    }

    /// Total number of elements, counting multiplicity.
    pub fn size(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn support(&self) -> BTreeSet<String> {
        self.0.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Elements with repetition, in name order.
    pub fn elements(&self) -> Vec<String> {
        self.0.iter().flat_map(|(k, &v)| std::iter::repeat(k.clone()).take(v as usize)).collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.insert(k, v);
        }
        out
    }

    /// `self - other`, defined only when `other <= self`.
    pub fn subtract(&self, other: &Self) -> Result<Self, ObjectError> {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            let have = out.count(k);
            if have < v {
                return Err(ObjectError::Underflow(k.to_string(), v, have));
            }
            if have == v {
                out.0.remove(k);
            } else {
                out.0.insert(k.to_string(), have - v);
            }
        }
        Ok(out)
    }

    pub fn leq(&self, other: &Self) -> bool {
        self.iter().all(|(k, v)| other.count(k) >= v)
    }

    pub fn min_with(&self, other: &Self) -> Self {
        let mut out = Self::new();
        for (k, v) in self.iter() {
            out.insert(k, v.min(other.count(k)));
        }
        out
    }

    /// Objects whose name satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        ObjectMultiset(self.0.iter().filter(|(k, _)| keep(k)).map(|(k, &v)| (k.clone(), v)).collect())
    }
}

impl<S: Into<String>> FromIterator<S> for ObjectMultiset {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut m = Self::new();
        for x in iter {
            m.insert(x, 1);
        }
        m
    }
}

impl fmt::Debug for ObjectMultiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for ObjectMultiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (k, v)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            if v > 1 {
                write!(f, "{v}·")?;
            }
            f.write_str(k)?;
        }
        f.write_str("]")
    }
}

/// All objects of a system with their roles.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectUniverse {
    roles: BTreeMap<String, RoleKind>,
    objects: ObjectMultiset,
    role_of: BTreeMap<String, String>,
}

impl ObjectUniverse {
    pub fn new(roles: impl IntoIterator<Item = Role>) -> Result<Self, ObjectError> {
        let mut u = ObjectUniverse::default();
        for r in roles {
            if u.roles.insert(r.name.clone(), r.kind).is_some() {
                return Err(ObjectError::DuplicateRole(r.name));
            }
        }
        Ok(u)
    }

    /// Registers `count` indistinguishable copies of `name`.
    pub fn add_object(&mut self, name: &str, role: &str, count: u32) -> Result<(), ObjectError> {
        if !self.roles.contains_key(role) {
            return Err(ObjectError::UnknownRole(role.to_string()));
        }
        if count == 0 {
            return Err(ObjectError::ZeroMultiplicity(name.to_string()));
        }
        self.objects.insert(name, count);
        self.role_of.insert(name.to_string(), role.to_string());
        Ok(())
    }

    pub fn roles(&self) -> impl Iterator<Item = Role> + '_ {
        self.roles.iter().map(|(n, &k)| Role::new(n.clone(), k))
    }

    pub fn role_names(&self) -> BTreeSet<String> {
        self.roles.keys().cloned().collect()
    }

    pub fn has_role(&self, role: &str) -> bool {
        self.roles.contains_key(role)
    }

    pub fn role_kind(&self, role: &str) -> Option<RoleKind> {
        self.roles.get(role).copied()
    }

    pub fn role_of(&self, object: &str) -> Option<&str> {
        self.role_of.get(object).map(String::as_str)
    }

    pub fn objects(&self) -> &ObjectMultiset {
        &self.objects
    }

    pub fn objects_of_roles(&self, roles: &BTreeSet<String>) -> Result<ObjectMultiset, ObjectError> {
        for r in roles {
            if !self.roles.contains_key(r) {
                return Err(ObjectError::UnknownRole(r.clone()));
            }
        }
        Ok(self.objects.filter(|o| self.role_of.get(o).is_some_and(|r| roles.contains(r))))
    }

    /// Roles of the objects in `objs`; unknown objects are skipped.
    pub fn roles_of(&self, objs: &ObjectMultiset) -> BTreeSet<String> {
        objs.iter().filter_map(|(o, _)| self.role_of(o).map(str::to_string)).collect()
    }

    pub fn is_persistent(&self, object: &str) -> bool {
        self.role_of(object).and_then(|r| self.role_kind(r)) == Some(RoleKind::Persistent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ms(xs: &[&str]) -> ObjectMultiset {
        xs.iter().copied().collect()
    }

    fn roles(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn universe() -> ObjectUniverse {
        let mut u = ObjectUniverse::new([
            Role::new("p", RoleKind::Spontaneous),
            Role::new("d", RoleKind::Expected),
            Role::new("w", RoleKind::Persistent),
        ])
        .unwrap();
        u.add_object("w1", "w", 2).unwrap();
        u.add_object("w2", "w", 1).unwrap();
        u.add_object("d1", "d", 1).unwrap();
        u.add_object("d2", "d", 1).unwrap();
        u.add_object("p1", "p", 1).unwrap();
        u
    }

    #[test]
    fn objects_by_role() {
        let u = universe();
        assert_eq!(u.objects_of_roles(&roles(&["w"])).unwrap(), ms(&["w1", "w1", "w2"]));
        assert_eq!(u.objects_of_roles(&roles(&["d"])).unwrap(), ms(&["d1", "d2"]));
        assert!(u.objects_of_roles(&roles(&[])).unwrap().is_empty());
        assert_eq!(u.objects_of_roles(&roles(&["x"])), Err(ObjectError::UnknownRole("x".into())));
    }

    #[test]
    fn role_partition_sums_to_universe() {
        let u = universe();
        let mut sum = ObjectMultiset::new();
        for r in u.role_names() {
            sum = sum.add(&u.objects_of_roles(&roles(&[&r])).unwrap());
        }
        assert_eq!(&sum, u.objects());
    }

    #[test]
    fn multiset_arithmetic() {
        assert_eq!(ms(&["w1", "w1"]).add(&ms(&["w1", "w2"])), ms(&["w1", "w1", "w1", "w2"]));
        assert!(ms(&["p1", "d1"]).leq(&ms(&["p1", "p2", "d1"])));
        assert_eq!(ms(&["w1", "w1", "w2"]).min_with(&ms(&["w1"])), ms(&["w1"]));
        assert_eq!(ms(&["a", "a", "b"]).subtract(&ms(&["a"])).unwrap(), ms(&["a", "b"]));
        assert_eq!(ms(&["a"]).subtract(&ms(&["a", "a"])), Err(ObjectError::Underflow("a".into(), 2, 1)));
        assert_eq!(ms(&["w1", "w1", "w2"]).to_string(), "[2·w1,w2]");
    }

    fn arb_ms() -> impl Strategy<Value = ObjectMultiset> {
        prop::collection::vec((0..4u8, 0..3u32), 0..5).prop_map(|v| {
            let mut m = ObjectMultiset::new();
            for (o, c) in v {
                m.insert(format!("o{o}"), c);
            }
            m
        })
    }

    proptest! {
        #[test]
        fn leq_is_a_partial_order(a in arb_ms(), b in arb_ms(), c in arb_ms()) {
            prop_assert!(a.leq(&a));
            if a.leq(&b) && b.leq(&c) {
                prop_assert!(a.leq(&c));
            }
            if a.leq(&b) && b.leq(&a) {
                prop_assert_eq!(&a, &b);
            }
        }

        #[test]
        fn add_then_subtract(a in arb_ms(), b in arb_ms()) {
            prop_assert_eq!(a.add(&b).subtract(&b).unwrap(), a.clone());
            prop_assert!(a.min_with(&b).leq(&a) && a.min_with(&b).leq(&b));
        }
    }
}
