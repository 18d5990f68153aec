//! Parameters, linear expressions and valuations.

use std::collections::BTreeMap;
use std::fmt;

use num::{BigInt, One, Signed, Zero};

use super::ModelError;

/// Exact rational probability value.
pub type Rational = num::BigRational;

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Interned parameter name, `[A-Za-z_][A-Za-z0-9_.]*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(String);

impl ParamId {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if is_ident(&name) {
            Ok(ParamId(name))
        } else {
            Err(ModelError::InvalidIdentifier(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered set of parameters whose values must sum to one under any
/// complete valuation. Groups of one model are pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    members: Vec<ParamId>,
}

impl ParamGroup {
    pub fn new(members: Vec<ParamId>) -> Result<Self, ModelError> {
        if members.len() < 2 {
            return Err(ModelError::GroupTooSmall);
        }
        for (i, m) in members.iter().enumerate() {
            if members[..i].contains(m) {
                return Err(ModelError::GroupOverlap(m.to_string()));
            }
        }
        Ok(ParamGroup { members })
    }

    pub fn members(&self) -> &[ParamId] {
        &self.members
    }

    pub fn contains(&self, p: &ParamId) -> bool {
        self.members.contains(p)
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.members.iter().map(|p| p.as_str()).collect();
        f.write_str(&names.join(", "))
    }
}

/// Linear expression over parameters: a rational constant plus rational
/// coefficients. Zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LinExpr {
    constant: Rational,
    terms: BTreeMap<ParamId, Rational>,
}

impl LinExpr {
    pub fn constant(value: Rational) -> Self {
        LinExpr {
            constant: value,
            terms: BTreeMap::new(),
        }
    }

    pub fn param(p: ParamId) -> Self {
        Self::term(Rational::one(), p)
    }

    pub fn term(coeff: Rational, p: ParamId) -> Self {
        let mut terms = BTreeMap::new();
        if !coeff.is_zero() {
            terms.insert(p, coeff);
        }
        LinExpr {
            constant: Rational::zero(),
            terms,
        }
    }

    pub fn one() -> Self {
        Self::constant(Rational::one())
    }

    pub fn add(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out.add_assign(other, false);
        out
    }

    pub fn sub(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out.add_assign(other, true);
        out
    }

    fn add_assign(&mut self, other: &LinExpr, negate: bool) {
        let sign = if negate {
            -Rational::one()
        } else {
            Rational::one()
        };
        self.constant += &other.constant * &sign;
        for (p, c) in &other.terms {
            let entry = self.terms.entry(p.clone()).or_insert_with(Rational::zero);
            *entry += c * &sign;
            if entry.is_zero() {
                self.terms.remove(p);
            }
        }
    }

    pub fn constant_part(&self) -> &Rational {
        &self.constant
    }

    pub fn coeff(&self, p: &ParamId) -> Option<&Rational> {
        self.terms.get(p)
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamId> {
        self.terms.keys()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// The expression's value if it has no parameters.
    pub fn as_constant(&self) -> Option<&Rational> {
        if self.is_constant() {
            Some(&self.constant)
        } else {
            None
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.constant.is_zero()
    }

    /// Evaluates under a total valuation.
    pub fn eval(&self, v: &Valuation) -> Result<Rational, ModelError> {
        let mut acc = self.constant.clone();
        for (p, c) in &self.terms {
            let val = v
                .get(p)
                .ok_or_else(|| ModelError::UnboundParameter(p.to_string()))?;
            acc += c * val;
        }
        Ok(acc)
    }

    /// Folds the assigned parameters into the constant and keeps the rest
    /// symbolic.
    pub fn substitute(&self, v: &Valuation) -> LinExpr {
        let mut out = LinExpr::constant(self.constant.clone());
        for (p, c) in &self.terms {
            match v.get(p) {
                Some(val) => out.constant += c * val,
                None => {
                    out.terms.insert(p.clone(), c.clone());
                }
            }
        }
        out
    }
}

/// Renders in the model grammar: `num`, `param`, `num*param` joined by
/// `+` and `-`. A leading negative term is written as `0 - ...` so the
/// output stays parseable.
impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        if !self.constant.is_zero() || self.terms.is_empty() {
            write!(f, "{}", rational_str(&self.constant))?;
            first = false;
        }
        for (p, c) in &self.terms {
            if first && c.is_negative() {
                write!(f, "0")?;
                first = false;
            }
            let mag = c.abs();
            let op = if c.is_negative() { "-" } else { "+" };
            if first {
                if mag.is_one() {
                    write!(f, "{p}")?;
                } else {
                    write!(f, "{}*{p}", rational_str(&mag))?;
                }
                first = false;
            } else if mag.is_one() {
                write!(f, " {op} {p}")?;
            } else {
                write!(f, " {op} {}*{p}", rational_str(&mag))?;
            }
        }
        Ok(())
    }
}

/// Canonical text for a rational: plain integer, or `n/d`.
pub(crate) fn rational_str(r: &Rational) -> String {
    if r.denom() == &BigInt::one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Partial assignment of parameters to probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Valuation {
    values: BTreeMap<ParamId, Rational>,
}

impl Valuation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, p: ParamId, value: Rational) -> Result<(), ModelError> {
        if value.is_negative() || value > Rational::one() {
            return Err(ModelError::ValueOutOfRange(rational_str(&value)));
        }
        self.values.insert(p, value);
        Ok(())
    }

    pub fn from_pairs<I>(pairs: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (ParamId, Rational)>,
    {
        let mut v = Valuation::new();
        for (p, value) in pairs {
            v.insert(p, value)?;
        }
        Ok(v)
    }

    pub fn get(&self, p: &ParamId) -> Option<&Rational> {
        self.values.get(p)
    }

    pub fn contains(&self, p: &ParamId) -> bool {
        self.values.contains_key(p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamId, &Rational)> {
        self.values.iter()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Copies entries of `other` that are not yet assigned here.
    pub fn extend_missing(&mut self, other: &Valuation) {
        for (p, val) in &other.values {
            self.values.entry(p.clone()).or_insert_with(|| val.clone());
        }
    }

    /// Checks that every group fully covered by this assignment sums to 1.
    pub fn check_groups(&self, groups: &[ParamGroup]) -> Result<(), ModelError> {
        for g in groups {
            if !g.members().iter().all(|m| self.contains(m)) {
                continue;
            }
            let sum: Rational = g.members().iter().map(|m| self.values[m].clone()).sum();
            if !sum.is_one() {
                return Err(ModelError::GroupSum {
                    group: g.to_string(),
                    sum: rational_str(&sum),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    fn p(name: &str) -> ParamId {
        ParamId::new(name).unwrap()
    }

    #[test]
    fn eval_constant_and_param() {
        let v = Valuation::from_pairs([(p("p2"), rat(4, 5))]).unwrap();
        assert_eq!(LinExpr::one().eval(&v).unwrap(), rat(1, 1));
        assert_eq!(LinExpr::param(p("p2")).eval(&v).unwrap(), rat(4, 5));
    }

    #[test]
    fn eval_complement_form() {
        // 1 - p2 - p3 at p2 = 0.7, p3 = 0.3
        let e = LinExpr::one()
            .sub(&LinExpr::param(p("p2")))
            .sub(&LinExpr::param(p("p3")));
        let v = Valuation::from_pairs([(p("p2"), rat(7, 10)), (p("p3"), rat(3, 10))]).unwrap();
        assert_eq!(e.eval(&v).unwrap(), rat(0, 1));
    }

    #[test]
    fn eval_unbound_param_fails() {
        let e = LinExpr::param(p("p9"));
        let err = e.eval(&Valuation::new()).unwrap_err();
        assert_eq!(err, ModelError::UnboundParameter("p9".into()));
    }

    #[test]
    fn substitute_partial() {
        let e = LinExpr::param(p("p2")).add(&LinExpr::param(p("p3")));
        let v = Valuation::from_pairs([(p("p2"), rat(0, 1))]).unwrap();
        assert_eq!(e.substitute(&v), LinExpr::param(p("p3")));
    }

    #[test]
    fn substitute_to_constant_one() {
        let e = LinExpr::param(p("p5"));
        let v = Valuation::from_pairs([(p("p5"), rat(1, 1))]).unwrap();
        assert_eq!(e.substitute(&v), LinExpr::one());
    }

    #[test]
    fn substitute_keeps_unassigned_term() {
        // 0.5*p7 + p8 with p7 = 0.4 becomes 0.2 + p8
        let e = LinExpr::term(rat(1, 2), p("p7")).add(&LinExpr::param(p("p8")));
        let v = Valuation::from_pairs([(p("p7"), rat(2, 5))]).unwrap();
        let expected = LinExpr::constant(rat(1, 5)).add(&LinExpr::param(p("p8")));
        assert_eq!(e.substitute(&v), expected);
    }

    #[test]
    fn display_round_trip_forms() {
        let e = LinExpr::one()
            .sub(&LinExpr::param(p("p2")))
            .sub(&LinExpr::term(rat(1, 3), p("p3")));
        assert_eq!(e.to_string(), "1 - p2 - 1/3*p3");
        let neg_first = LinExpr::term(rat(-1, 1), p("q")).add(&LinExpr::param(p("r")));
        assert_eq!(neg_first.to_string(), "0 - q + r");
        assert_eq!(LinExpr::constant(rat(0, 1)).to_string(), "0");
    }

    #[test]
    fn valuation_rejects_out_of_range() {
        let mut v = Valuation::new();
        assert!(v.insert(p("a"), rat(3, 2)).is_err());
        assert!(v.insert(p("a"), rat(-1, 10)).is_err());
        assert!(v.insert(p("a"), rat(1, 1)).is_ok());
    }

    #[test]
    fn group_sum_checked_only_when_complete() {
        let g = ParamGroup::new(vec![p("a"), p("b")]).unwrap();
        let partial = Valuation::from_pairs([(p("a"), rat(1, 2))]).unwrap();
        assert!(partial.check_groups(&[g.clone()]).is_ok());
        let bad = Valuation::from_pairs([(p("a"), rat(1, 2)), (p("b"), rat(1, 4))]).unwrap();
        assert!(bad.check_groups(&[g.clone()]).is_err());
        let good = Valuation::from_pairs([(p("a"), rat(1, 2)), (p("b"), rat(1, 2))]).unwrap();
        assert!(good.check_groups(&[g]).is_ok());
    }
}
