use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::modp::{self, Fingerprint};
use super::monomial::ParamId;
use super::polynomial::{fmt_coeff, Polynomial};
use super::{ParamTable, RatFunError, Valuation};

/// An irreducible-by-construction building block of a [`RationalFunction`]:
/// a non-constant polynomial with coprime integer coefficients, positive
/// leading coefficient, and no monomial content (unless it is a single
/// parameter). Factors are shared, so cloning a function is cheap.
#[derive(Clone)]
pub struct Factor(Arc<FactorData>);

struct FactorData {
    poly: Polynomial,
    hash: u64,
    fingerprint: OnceLock<Fingerprint>,
}

impl Factor {
    fn new(poly: Polynomial) -> Self {
        debug_assert!(!poly.is_constant());
        let mut h = DefaultHasher::new();
        poly.hash(&mut h);
        Factor(Arc::new(FactorData { poly, hash: h.finish(), fingerprint: OnceLock::new() }))
    }

    pub fn poly(&self) -> &Polynomial {
        &self.0.poly
    }

    fn fingerprint(&self) -> &Fingerprint {
        self.0.fingerprint.get_or_init(|| std::array::from_fn(|k| self.0.poly.eval_mod(k)))
    }
}

impl PartialEq for Factor {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.hash == other.0.hash && self.0.poly == other.0.poly)
    }
}

impl Eq for Factor {}

impl Ord for Factor {
    fn cmp(&self, other: &Self) -> Ordering {
        if self == other {
            return Ordering::Equal;
        }
        let (a, b) = (self.poly(), other.poly());
        a.degree().cmp(&b.degree()).then_with(|| a.len().cmp(&b.len())).then_with(|| a.cmp(b))
    }
}

impl PartialOrd for Factor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Factor({:?})", self.poly())
    }
}

/// Exact multivariate rational function.
///
/// Stored as `coeff * prod(factor_i ^ exp_i)` with non-zero integer exponents;
/// negative exponents form the denominator. Factors with equal polynomials are
/// merged and cancel structurally, so quotients such as `x/x` collapse, but no
/// polynomial gcd is ever computed: two representations of the same function
/// may differ, and semantic equality is checked by evaluation.
///
/// The expanded numerator `numer(coeff) * prod(f^e, e > 0)` and denominator
/// `denom(coeff) * prod(f^-e, e < 0)` have integer coefficients whose joint
/// content is 1, and the denominator has a positive leading coefficient.
#[derive(Clone, PartialEq, Eq)]
pub struct RationalFunction {
    coeff: BigRational,
    factors: Vec<(Factor, i32)>,
}

impl RationalFunction {
    pub fn zero() -> Self {
        RationalFunction { coeff: BigRational::zero(), factors: Vec::new() }
    }

    pub fn one() -> Self {
        RationalFunction::constant(BigRational::one())
    }

    pub fn constant(c: BigRational) -> Self {
        RationalFunction { coeff: c, factors: Vec::new() }
    }

    pub fn from_integer(n: i64) -> Self {
        RationalFunction::constant(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn var(id: ParamId) -> Self {
        RationalFunction { coeff: BigRational::one(), factors: vec![(Factor::new(Polynomial::var(id)), 1)] }
    }

    /// `num / den`; a zero denominator (including `0/0`) is rejected.
    pub fn new(num: &Polynomial, den: &Polynomial) -> Result<Self, RatFunError> {
        if den.is_zero() {
            return Err(RatFunError::ZeroDenominator);
        }
        Self::from_polynomial(num).div(&Self::from_polynomial(den))
    }

    /// Factors out the rational content and the monomial content of `p`.
    pub fn from_polynomial(p: &Polynomial) -> Self {
        let (coeff, prim) = p.primitive();
        if coeff.is_zero() {
            return RationalFunction::zero();
        }
        let content = prim.monomial_content();
        let rest = if content.is_one() { prim } else { prim.div_monomial(&content).expect("content divides") };
        let mut factors: Vec<(Factor, i32)> =
            content.powers().iter().map(|&(id, e)| (Factor::new(Polynomial::var(id)), e as i32)).collect();
        if !rest.is_constant() {
            factors.push((Factor::new(rest), 1));
        }
        factors.sort_by(|a, b| a.0.cmp(&b.0));
        RationalFunction { coeff, factors }
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty() && self.coeff.is_one()
    }

    pub fn is_constant(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn constant_value(&self) -> Option<&BigRational> {
        self.factors.is_empty().then_some(&self.coeff)
    }

    pub fn coefficient(&self) -> &BigRational {
        &self.coeff
    }

    pub fn factors(&self) -> &[(Factor, i32)] {
        &self.factors
    }

    /// Number of polynomial terms held across all stored factors.
    pub fn term_count(&self) -> usize {
        self.factors.iter().map(|f| f.0.poly().len()).sum()
    }

    pub fn vars(&self) -> Vec<ParamId> {
        let mut v: Vec<ParamId> = self.factors.iter().flat_map(|f| f.0.poly().vars()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn neg(&self) -> Self {
        RationalFunction { coeff: -&self.coeff, factors: self.factors.clone() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return RationalFunction::zero();
        }
        RationalFunction { coeff: &self.coeff * &other.coeff, factors: merge_factors(&self.factors, &other.factors, 1) }
    }

    pub fn recip(&self) -> Result<Self, RatFunError> {
        if self.is_zero() {
            return Err(RatFunError::DivisionByZeroFunction);
        }
        Ok(RationalFunction {
            coeff: self.coeff.recip(),
            factors: self.factors.iter().map(|(f, e)| (f.clone(), -e)).collect(),
        })
    }

    pub fn div(&self, other: &Self) -> Result<Self, RatFunError> {
        if other.is_zero() {
            return Err(RatFunError::DivisionByZeroFunction);
        }
        if self.is_zero() {
            return Ok(RationalFunction::zero());
        }
        Ok(RationalFunction {
            coeff: &self.coeff / &other.coeff,
            factors: merge_factors(&self.factors, &other.factors, -1),
        })
    }

    /// Sum over the common denominator: shared factors are pulled out with
    /// their minimal exponent, only the cofactors are expanded.
    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let mut common: Vec<(Factor, i32)> = Vec::new();
        let mut rest_a: Vec<(&Factor, u32)> = Vec::new();
        let mut rest_b: Vec<(&Factor, u32)> = Vec::new();
        let (a, b) = (&self.factors, &other.factors);
        let (mut i, mut j) = (0, 0);
        let split = |f: &Factor, ea: i32, eb: i32, common: &mut Vec<(Factor, i32)>| {
            let m = ea.min(eb);
            if m != 0 {
                common.push((f.clone(), m));
            }
            (ea - m, eb - m)
        };
        while i < a.len() || j < b.len() {
            let ord = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => x.0.cmp(&y.0),
                (Some(_), None) => Ordering::Less,
                (None, _) => Ordering::Greater,
            };
            match ord {
                Ordering::Less => {
                    let (ra, rb) = split(&a[i].0, a[i].1, 0, &mut common);
                    push_rest(&mut rest_a, &a[i].0, ra);
                    push_rest(&mut rest_b, &a[i].0, rb);
                    i += 1;
                }
                Ordering::Greater => {
                    let (ra, rb) = split(&b[j].0, 0, b[j].1, &mut common);
                    push_rest(&mut rest_a, &b[j].0, ra);
                    push_rest(&mut rest_b, &b[j].0, rb);
                    j += 1;
                }
                Ordering::Equal => {
                    let (ra, rb) = split(&a[i].0, a[i].1, b[j].1, &mut common);
                    push_rest(&mut rest_a, &a[i].0, ra);
                    push_rest(&mut rest_b, &a[i].0, rb);
                    i += 1;
                    j += 1;
                }
            }
        }
        if rest_a.is_empty() && rest_b.is_empty() {
            let coeff = &self.coeff + &other.coeff;
            if coeff.is_zero() {
                return RationalFunction::zero();
            }
            return RationalFunction { coeff, factors: common };
        }
        let pa = expand(&rest_a).scale(&self.coeff);
        let pb = expand(&rest_b).scale(&other.coeff);
        let sum = RationalFunction::from_polynomial(&pa.add(&pb));
        if sum.is_zero() {
            return RationalFunction::zero();
        }
        RationalFunction { coeff: sum.coeff, factors: merge_factors(&common, &sum.factors, 1) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Expanded numerator polynomial.
    pub fn numerator(&self) -> Polynomial {
        let pos: Vec<(&Factor, u32)> = self.factors.iter().filter(|f| f.1 > 0).map(|f| (&f.0, f.1 as u32)).collect();
        expand(&pos).scale(&BigRational::from_integer(self.coeff.numer().clone()))
    }

    /// Expanded denominator polynomial.
    pub fn denominator(&self) -> Polynomial {
        let neg: Vec<(&Factor, u32)> = self.factors.iter().filter(|f| f.1 < 0).map(|f| (&f.0, (-f.1) as u32)).collect();
        expand(&neg).scale(&BigRational::from_integer(self.coeff.denom().clone()))
    }

    pub fn eval(&self, point: &Valuation) -> Result<BigRational, RatFunError> {
        let mut num = self.coeff.clone();
        let mut den = BigRational::one();
        for (f, e) in &self.factors {
            let v = f.poly().eval(point)?;
            let p = num_traits::pow(v, e.unsigned_abs() as usize);
            if *e > 0 {
                num *= p;
            } else {
                den *= p;
            }
        }
        if den.is_zero() {
            return Err(RatFunError::EvalDenominatorZero);
        }
        Ok(num / den)
    }

    /// Values modulo a large prime at fixed pseudo-random points.
    pub(crate) fn fingerprint(&self) -> Fingerprint {
        let mut out = modp::constant(&self.coeff);
        for (f, e) in &self.factors {
            let fp = f.fingerprint();
            for k in 0..modp::POINTS {
                out[k] = match (out[k], fp[k]) {
                    (Some(acc), Some(v)) => {
                        let v = if *e > 0 { Some(v) } else { modp::inv(v) };
                        v.map(|v| modp::mul(acc, modp::pow(v, e.unsigned_abs() as u64)))
                    }
                    _ => None,
                };
            }
        }
        out
    }

    /// Number of arithmetic operations needed to evaluate the stored form:
    /// each factor polynomial term by term, the products between factors and
    /// their powers, the constant coefficients, and one final division when a
    /// non-constant denominator exists.
    pub fn op_count(&self) -> usize {
        let side = |positive: bool, c: &BigInt| -> usize {
            let mut ops = 0;
            let mut mults = 0usize;
            for (f, e) in &self.factors {
                if (*e > 0) == positive {
                    ops += f.poly().op_count();
                    mults += e.unsigned_abs() as usize;
                }
            }
            if mults == 0 {
                return 0;
            }
            ops += mults - 1;
            if !c.abs().is_one() {
                ops += 1;
            }
            ops
        };
        let has_den = self.factors.iter().any(|f| f.1 < 0);
        let has_num = self.factors.iter().any(|f| f.1 > 0);
        if !has_den {
            // constant denominators fold into the numerator coefficient
            if !has_num {
                return 0;
            }
            let mut ops = side(true, &BigInt::one());
            if !self.coeff.abs().is_one() {
                ops += 1;
            }
            return ops;
        }
        side(true, self.coeff.numer()) + side(false, self.coeff.denom()) + 1
    }

    /// Replaces every parameter `v` by the polynomial `image(v)`.
    pub fn substitute(&self, image: &dyn Fn(ParamId) -> Polynomial) -> Result<Self, RatFunError> {
        let mut out = RationalFunction::constant(self.coeff.clone());
        for (f, e) in &self.factors {
            let g = RationalFunction::from_polynomial(&f.poly().substitute(image));
            for _ in 0..e.unsigned_abs() {
                out = if *e > 0 { out.mul(&g) } else { out.div(&g)? };
            }
        }
        Ok(out)
    }

    pub fn display<'a>(&'a self, params: &'a ParamTable) -> RationalDisplay<'a> {
        RationalDisplay { f: self, params }
    }
}

fn push_rest<'a>(v: &mut Vec<(&'a Factor, u32)>, f: &'a Factor, e: i32) {
    debug_assert!(e >= 0);
    if e > 0 {
        v.push((f, e as u32));
    }
}

fn expand(factors: &[(&Factor, u32)]) -> Polynomial {
    // multiply small factors first
    let mut order: Vec<&(&Factor, u32)> = factors.iter().collect();
    order.sort_by_key(|f| f.0.poly().len());
    let mut out = Polynomial::one();
    for (f, e) in order {
        for _ in 0..*e {
            out = out.mul(f.poly());
        }
    }
    out
}

fn merge_factors(a: &[(Factor, i32)], b: &[(Factor, i32)], sign: i32) -> Vec<(Factor, i32)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => {
                out.push(a[i].clone());
                i += 1;
            }
            Ordering::Greater => {
                out.push((b[j].0.clone(), sign * b[j].1));
                j += 1;
            }
            Ordering::Equal => {
                let e = a[i].1 + sign * b[j].1;
                if e != 0 {
                    out.push((a[i].0.clone(), e));
                }
                i += 1;
                j += 1;
            }
        }
    }
    out.extend(a[i..].iter().cloned());
    out.extend(b[j..].iter().map(|(f, e)| (f.clone(), sign * e)));
    out
}

impl From<Polynomial> for RationalFunction {
    fn from(p: Polynomial) -> Self {
        RationalFunction::from_polynomial(&p)
    }
}

impl fmt::Debug for RationalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RationalFunction").field("coeff", &self.coeff).field("factors", &self.factors).finish()
    }
}

pub struct RationalDisplay<'a> {
    f: &'a RationalFunction,
    params: &'a ParamTable,
}

impl RationalDisplay<'_> {
    fn side(&self, positive: bool, c: &BigInt, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        if !c.is_one() {
            write!(out, "{c}")?;
            first = false;
        }
        for (f, e) in &self.f.factors {
            if (*e > 0) != positive {
                continue;
            }
            let poly = f.poly();
            let single_var = poly.len() == 1;
            for _ in 0..e.unsigned_abs() {
                if !first {
                    out.write_str("*")?;
                }
                first = false;
                if single_var {
                    write!(out, "{}", poly.display(self.params))?;
                } else {
                    write!(out, "({})", poly.display(self.params))?;
                }
            }
        }
        if first {
            out.write_str("1")?;
        }
        Ok(())
    }
}

impl fmt::Display for RationalDisplay<'_> {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let f = self.f;
        if f.is_zero() {
            return out.write_str("0");
        }
        if f.factors.is_empty() {
            return fmt_coeff(&f.coeff, out);
        }
        let has_den = f.factors.iter().any(|x| x.1 < 0);
        let has_num = f.factors.iter().any(|x| x.1 > 0);
        let negative = f.coeff.is_negative();
        let num_c = f.coeff.numer().abs();
        if !has_den {
            if negative {
                out.write_str("-")?;
            }
            if !f.coeff.is_integer() {
                fmt_coeff(&f.coeff.abs(), out)?;
                out.write_str("*")?;
                return self.side(true, &BigInt::one(), out);
            }
            return self.side(true, &num_c, out);
        }
        out.write_str("(")?;
        if negative {
            out.write_str("-")?;
        }
        if has_num {
            self.side(true, &num_c, out)?;
        } else {
            write!(out, "{num_c}")?;
        }
        out.write_str(")/(")?;
        self.side(false, f.coeff.denom(), out)?;
        out.write_str(")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn x(i: u32) -> RationalFunction {
        RationalFunction::var(ParamId(i))
    }

    fn c(n: i64, d: i64) -> RationalFunction {
        RationalFunction::constant(r(n, d))
    }

    fn point(values: &[(u32, BigRational)]) -> Valuation {
        let mut v = Valuation::new(values.len());
        for (i, val) in values {
            v.set(ParamId(*i), val.clone());
        }
        v
    }

    #[test]
    fn intro_success_probability() {
        // p1 + (1 - p1) p2
        let one = RationalFunction::one();
        let f = x(0).add(&one.sub(&x(0)).mul(&x(1)));
        let v = point(&[(0, r(95, 100)), (1, r(8, 10))]);
        assert_eq!(f.eval(&v).unwrap(), r(99, 100));
        let v = point(&[(0, r(8, 10)), (1, r(9, 10))]);
        assert_eq!(f.eval(&v).unwrap(), r(98, 100));
        // canonical p1 + p2 - p1*p2 costs three operations
        assert_eq!(f.op_count(), 3);
    }

    #[test]
    fn identities() {
        assert_eq!(x(0).add(&RationalFunction::zero()), x(0));
        assert!(x(0).div(&x(0)).unwrap().is_one());
        let inv = RationalFunction::one().div(&x(0)).unwrap();
        let two = inv.add(&inv);
        assert_eq!(two, c(2, 1).div(&x(0)).unwrap());
        assert!(matches!(x(0).div(&RationalFunction::zero()), Err(RatFunError::DivisionByZeroFunction)));
        assert!(matches!(
            RationalFunction::new(&Polynomial::zero(), &Polynomial::zero()),
            Err(RatFunError::ZeroDenominator)
        ));
    }

    #[test]
    fn shared_denominators_are_not_squared() {
        let d = RationalFunction::one().sub(&x(0).mul(&x(1)));
        let a = x(2).div(&d).unwrap();
        let b = x(3).div(&d).unwrap();
        let s = a.add(&b);
        let negative: Vec<_> = s.factors().iter().filter(|f| f.1 < 0).collect();
        assert_eq!(negative.len(), 1);
        assert_eq!(negative[0].1, -1);
    }

    #[test]
    fn expanded_form_invariants() {
        // (1/2 - p) / (3/4 q - 1)
        let num = c(1, 2).sub(&x(0));
        let den = c(3, 4).mul(&x(1)).sub(&RationalFunction::one());
        let f = num.div(&den).unwrap();
        let n = f.numerator();
        let d = f.denominator();
        assert!(n.is_integral() && d.is_integral());
        assert!(d.leading_coefficient().unwrap().is_positive());
        let v = point(&[(0, r(1, 3)), (1, r(1, 5))]);
        let direct = (r(1, 2) - r(1, 3)) / (r(3, 4) * r(1, 5) - r(1, 1));
        assert_eq!(f.eval(&v).unwrap(), direct);
        assert_eq!(n.eval(&v).unwrap() / d.eval(&v).unwrap(), direct);
    }

    #[test]
    fn eval_errors() {
        let f = RationalFunction::one().div(&RationalFunction::one().sub(&x(0))).unwrap();
        assert!(matches!(f.eval(&point(&[(0, r(1, 1))])), Err(RatFunError::EvalDenominatorZero)));
        assert!(matches!(f.eval(&Valuation::new(0)), Err(RatFunError::MissingParameter(_))));
    }

    #[test]
    fn op_counts() {
        assert_eq!(c(1, 2).op_count(), 0);
        assert_eq!(x(0).div(&x(1)).unwrap().op_count(), 1);
    }
}
