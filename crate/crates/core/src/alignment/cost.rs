//! Exact rational move costs.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::MoveKind;

/// A nonnegative exact rational, printed as `int+num/den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Cost(pub Ratio<i128>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse `{0}` as a rational cost")]
pub struct CostParseError(pub String);

impl Cost {
    pub fn new(num: i128, den: i128) -> Self {
        Cost(Ratio::new(num, den))
    }

    pub fn int(n: i128) -> Self {
        Cost(Ratio::from_integer(n))
    }

    pub fn zero() -> Self {
        Cost(Ratio::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = self.0;
        if r.is_negative() {
            return write!(f, "-{}", Cost(-r));
        }
        let whole = r.trunc();
        let frac = r - whole;
        match (whole.is_zero(), frac.is_zero()) {
            (true, true) => f.write_str("0"),
            (false, true) => write!(f, "{}", whole.numer()),
            (true, false) => write!(f, "{}/{}", frac.numer(), frac.denom()),
            (false, false) => write!(f, "{}+{}/{}", whole.numer(), frac.numer(), frac.denom()),
        }
    }
}

impl FromStr for Cost {
    type Err = CostParseError;

    /// Accepts `3`, `1/1024`, `3+2/1024` and sums of such terms.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || CostParseError(s.to_string());
        let mut total = Ratio::<i128>::zero();
        for term in s.trim().split('+') {
            let term = term.trim();
            let r = match term.split_once('/') {
                Some((n, d)) => {
                    let n: i128 = n.trim().parse().map_err(|_| err())?;
                    let d: i128 = d.trim().parse().map_err(|_| err())?;
                    if d == 0 {
                        return Err(err());
                    }
                    Ratio::new(n, d)
                }
                None => Ratio::from_integer(term.parse().map_err(|_| err())?),
            };
            total += r;
        }
        Ok(Cost(total))
    }
}

impl Serialize for Cost {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cost {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, o: Cost) -> Cost {
        Cost(self.0 + o.0)
    }
}

impl Sub for Cost {
    type Output = Cost;
    fn sub(self, o: Cost) -> Cost {
        Cost(self.0 - o.0)
    }
}

impl Mul for Cost {
    type Output = Cost;
    fn mul(self, o: Cost) -> Cost {
        Cost(self.0 * o.0)
    }
}

impl Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::zero(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostScheme {
    Standard,
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostParams {
    pub epsilon: Cost,
    pub scheme: CostScheme,
    /// Multipliers for deviating log and model moves.
    pub log_weight: Cost,
    pub model_weight: Cost,
    /// Matching threshold; accepted and reported, not used by the search.
    pub theta: Cost,
}

impl CostParams {
    pub fn standard() -> Self {
        CostParams {
            epsilon: Cost::new(1, 1024),
            scheme: CostScheme::Standard,
            log_weight: Cost::int(1),
            model_weight: Cost::int(1),
            theta: Cost::int(1),
        }
    }

    pub fn relaxed() -> Self {
        CostParams { scheme: CostScheme::Relaxed, ..Self::standard() }
    }

    pub fn with_weights(mut self, log: Cost, model: Cost) -> Self {
        self.log_weight = log;
        self.model_weight = model;
        self
    }

    pub fn with_epsilon(mut self, eps: Cost) -> Self {
        self.epsilon = eps;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let e = self.epsilon.0;
        if e <= Ratio::zero() || e >= Ratio::one() {
            return Err(format!("epsilon {} is not in (0,1)", self.epsilon));
        }
        if self.log_weight.0 <= Ratio::zero() || self.model_weight.0 <= Ratio::zero() {
            return Err("weights must be positive".into());
        }
        Ok(())
    }

    pub fn eps2(&self) -> Cost {
        self.epsilon * self.epsilon
    }

    /// A common denominator of every move cost under these parameters, so
    /// that costs can be scaled to integers.
    pub fn scale(&self) -> i128 {
        let e = self.epsilon.denom();
        e * e * self.log_weight.denom() * self.model_weight.denom()
    }
}

/// What a cost function needs to know about a move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveShape {
    pub kind: MoveKind,
    /// The firing's transition is labeled τ.
    pub silent: bool,
    /// `|Var(t)|` of the base transition; for moves without a firing, the
    /// number of objects of the event.
    pub var_count: usize,
    /// Number of objects involved in the move.
    pub objects: usize,
}

/// Costs of non-relaxed moves: deviating moves cost one, synchronous moves
/// nothing, and silent model moves a second-order epsilon.
pub fn move_cost_standard(shape: &MoveShape, params: &CostParams) -> Cost {
    use MoveKind::*;
    match shape.kind {
        Sync | RelaxedSync | SubstituteSync => Cost::zero(),
        Log | RelaxedLog => params.log_weight,
        Model | RelaxedModel if !shape.silent => params.model_weight,
        Model | RelaxedModel | CorrelationSilent => params.eps2(),
    }
}

/// Costs of relaxed moves: correlation moves cost `ε²`; deviating moves on
/// visible activities `|O| + (|Var| - |O|)·ε`; all other moves
/// `(|Var| - |O|)·ε`, with silent model moves costing at least `ε²`.
pub fn move_cost_relaxed(shape: &MoveShape, params: &CostParams) -> Cost {
    use MoveKind::*;
    let o = shape.objects as i128;
    let missing = Cost::int(shape.var_count as i128 - o) * params.epsilon;
    match shape.kind {
        CorrelationSilent => params.eps2(),
        Log | RelaxedLog => (Cost::int(o) + missing) * params.log_weight,
        Model | RelaxedModel if !shape.silent => (Cost::int(o) + missing) * params.model_weight,
        Model | RelaxedModel if missing.is_zero() => params.eps2(),
        _ => missing,
    }
}

pub fn move_cost(shape: &MoveShape, params: &CostParams) -> Cost {
    match params.scheme {
        CostScheme::Standard => move_cost_standard(shape, params),
        CostScheme::Relaxed => move_cost_relaxed(shape, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use MoveKind::*;

    fn shape(kind: MoveKind, var_count: usize, objects: usize) -> MoveShape {
        MoveShape { kind, silent: false, var_count, objects }
    }

    #[test]
    fn display_and_parse() {
        for (c, s) in [
            (Cost::zero(), "0"),
            (Cost::int(2), "2"),
            (Cost::new(1, 1024), "1/1024"),
            (Cost::int(3) + Cost::new(2, 1024), "3+1/512"),
        ] {
            assert_eq!(c.to_string(), s);
            assert_eq!(s.parse::<Cost>().unwrap(), c);
        }
        assert_eq!("3+2/1024".parse::<Cost>().unwrap(), Cost::new(3 * 512 + 1, 512));
        assert!("x".parse::<Cost>().is_err());
        assert!("1/0".parse::<Cost>().is_err());
    }

    #[test]
    fn standard_costs() {
        let p = CostParams::standard();
        assert_eq!(move_cost_standard(&shape(Sync, 2, 2), &p), Cost::zero());
        assert_eq!(move_cost_standard(&shape(Log, 2, 2), &p), Cost::int(1));
        let tau = MoveShape { silent: true, ..shape(Model, 2, 2) };
        assert_eq!(move_cost_standard(&tau, &p), Cost::new(1, 1 << 20));
        let w = CostParams::standard().with_weights(Cost::int(10), Cost::new(1, 10));
        assert_eq!(move_cost_standard(&shape(Log, 1, 1), &w), Cost::int(10));
        assert_eq!(move_cost_standard(&shape(Model, 1, 1), &w), Cost::new(1, 10));
    }

    #[test]
    fn relaxed_examples() {
        let p = CostParams::relaxed();
        let eps = p.epsilon;
        assert_eq!(move_cost_relaxed(&shape(Sync, 3, 3), &p), Cost::zero());
        assert_eq!(move_cost_relaxed(&shape(RelaxedModel, 2, 1), &p), Cost::int(1) + eps);
        assert_eq!(move_cost_relaxed(&shape(CorrelationSilent, 2, 2), &p), eps * eps);
        assert_eq!(move_cost_relaxed(&shape(RelaxedSync, 2, 1), &p), eps);
        let tau = MoveShape { silent: true, ..shape(RelaxedModel, 2, 1) };
        assert_eq!(move_cost_relaxed(&tau, &p), eps);
        let full_tau = MoveShape { silent: true, ..shape(Model, 2, 2) };
        assert_eq!(move_cost_relaxed(&full_tau, &p), eps * eps);
    }

    #[test]
    fn scale_makes_costs_integral() {
        let p = CostParams::relaxed().with_weights(Cost::new(1, 10), Cost::new(7, 3));
        let s = Cost::int(p.scale());
        for kind in [Sync, Log, Model, RelaxedSync, RelaxedLog, RelaxedModel, SubstituteSync, CorrelationSilent] {
            for (v, o) in [(3, 3), (3, 2), (2, 1), (1, 1)] {
                let c = move_cost(&shape(kind, v, o), &p) * s;
                assert_eq!(c.denom(), 1);
            }
        }
    }
}
