use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::modp;
use super::monomial::{Monomial, ParamId};
use super::{ParamTable, RatFunError, Valuation};

/// Sparse multivariate polynomial with exact rational coefficients.
///
/// Terms are kept sorted by descending graded-lex order of their monomials,
/// and no stored coefficient is zero; the zero polynomial has no terms.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Polynomial {
    terms: Vec<(Monomial, BigRational)>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Polynomial { terms: Vec::new() }
    }

    pub fn one() -> Self {
        Polynomial::constant(BigRational::one())
    }

    pub fn constant(c: BigRational) -> Self {
        Polynomial::monomial(Monomial::one(), c)
    }

    pub fn var(id: ParamId) -> Self {
        Polynomial::monomial(Monomial::var(id), BigRational::one())
    }

    pub fn monomial(m: Monomial, c: BigRational) -> Self {
        if c.is_zero() {
            Polynomial::zero()
        } else {
            Polynomial { terms: vec![(m, c)] }
        }
    }

    /// Collects terms in any order, merging duplicates and dropping zeros.
    pub fn from_terms<I: IntoIterator<Item = (Monomial, BigRational)>>(iter: I) -> Self {
        let mut acc: HashMap<Monomial, BigRational> = HashMap::new();
        for (m, c) in iter {
            *acc.entry(m).or_insert_with(BigRational::zero) += c;
        }
        Polynomial::from_map(acc)
    }

    fn from_map(acc: HashMap<Monomial, BigRational>) -> Self {
        let mut terms: Vec<_> = acc.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        terms.sort_unstable_by(|a, b| b.0.cmp(&a.0));
        Polynomial { terms }
    }

    pub fn terms(&self) -> &[(Monomial, BigRational)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty() || (self.terms.len() == 1 && self.terms[0].0.is_one())
    }

    pub fn constant_value(&self) -> Option<BigRational> {
        match self.terms.as_slice() {
            [] => Some(BigRational::zero()),
            [(m, c)] if m.is_one() => Some(c.clone()),
            _ => None,
        }
    }

    pub fn is_one(&self) -> bool {
        self.constant_value().is_some_and(|c| c.is_one())
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.0.degree()).max().unwrap_or(0)
    }

    pub fn leading(&self) -> Option<&(Monomial, BigRational)> {
        self.terms.first()
    }

    pub fn leading_coefficient(&self) -> Option<&BigRational> {
        self.terms.first().map(|t| &t.1)
    }

    pub fn is_integral(&self) -> bool {
        self.terms.iter().all(|t| t.1.is_integer())
    }

    /// Sorted list of parameters occurring in the polynomial.
    pub fn vars(&self) -> Vec<ParamId> {
        let mut v: Vec<ParamId> = self.terms.iter().flat_map(|t| t.0.vars()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn neg(&self) -> Polynomial {
        Polynomial { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect() }
    }

    pub fn scale(&self, k: &BigRational) -> Polynomial {
        if k.is_zero() {
            return Polynomial::zero();
        }
        Polynomial { terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect() }
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Polynomial {
        Polynomial { terms: self.terms.iter().map(|(t, c)| (t.mul(m), c.clone())).collect() }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        self.merge(other, false)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.merge(other, true)
    }

    fn merge(&self, other: &Polynomial, negate: bool) -> Polynomial {
        let (a, b) = (&self.terms, &other.terms);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Greater => {
                    out.push(a[i].clone());
                    i += 1;
                }
                Ordering::Less => {
                    let c = if negate { -&b[j].1 } else { b[j].1.clone() };
                    out.push((b[j].0.clone(), c));
                    j += 1;
                }
                Ordering::Equal => {
                    let c = if negate { &a[i].1 - &b[j].1 } else { &a[i].1 + &b[j].1 };
                    if !c.is_zero() {
                        out.push((a[i].0.clone(), c));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend(a[i..].iter().cloned());
        out.extend(b[j..].iter().map(|(m, c)| (m.clone(), if negate { -c } else { c.clone() })));
        Polynomial { terms: out }
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        if self.is_zero() || other.is_zero() {
            return Polynomial::zero();
        }
        if let Some(c) = self.constant_value() {
            return other.scale(&c);
        }
        if let Some(c) = other.constant_value() {
            return self.scale(&c);
        }
        if self.terms.len() == 1 {
            let (m, c) = &self.terms[0];
            return other.mul_monomial(m).scale(c);
        }
        if other.terms.len() == 1 {
            let (m, c) = &other.terms[0];
            return self.mul_monomial(m).scale(c);
        }
        if self.is_integral() && other.is_integral() {
            // integer accumulation avoids a gcd per product
            let mut acc: HashMap<Monomial, BigInt> = HashMap::with_capacity(self.len() * other.len());
            for (ma, ca) in &self.terms {
                let ca = ca.numer();
                for (mb, cb) in &other.terms {
                    let prod = ca * cb.numer();
                    let entry = acc.entry(ma.mul(mb)).or_insert_with(BigInt::zero);
                    *entry += prod;
                }
            }
            let mut terms: Vec<_> =
                acc.into_iter().filter(|(_, c)| !c.is_zero()).map(|(m, c)| (m, BigRational::from_integer(c))).collect();
            terms.sort_unstable_by(|a, b| b.0.cmp(&a.0));
            return Polynomial { terms };
        }
        let mut acc: HashMap<Monomial, BigRational> = HashMap::with_capacity(self.len() * other.len());
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                *acc.entry(ma.mul(mb)).or_insert_with(BigRational::zero) += ca * cb;
            }
        }
        Polynomial::from_map(acc)
    }

    pub fn pow(&self, exp: u32) -> Polynomial {
        let mut out = Polynomial::one();
        for _ in 0..exp {
            out = out.mul(self);
        }
        out
    }

    /// Largest monomial dividing every term.
    pub fn monomial_content(&self) -> Monomial {
        let mut iter = self.terms.iter();
        let Some(first) = iter.next() else {
            return Monomial::one();
        };
        let mut g = first.0.clone();
        for (m, _) in iter {
            if g.is_one() {
                break;
            }
            g = g.gcd(m);
        }
        g
    }

    pub fn div_monomial(&self, m: &Monomial) -> Option<Polynomial> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (t, c) in &self.terms {
            terms.push((t.div(m)?, c.clone()));
        }
        Some(Polynomial { terms })
    }

    /// Splits `self` into `c * p` where `p` has coprime integer coefficients
    /// and a positive leading coefficient. Returns `(0, 0)` for zero.
    pub fn primitive(&self) -> (BigRational, Polynomial) {
        if self.is_zero() {
            return (BigRational::zero(), Polynomial::zero());
        }
        let mut num_gcd = BigInt::zero();
        let mut den_lcm = BigInt::one();
        for (_, c) in &self.terms {
            num_gcd = num_gcd.gcd(c.numer());
            den_lcm = den_lcm.lcm(c.denom());
        }
        let mut content = BigRational::new(num_gcd, den_lcm);
        if self.terms[0].1.is_negative() {
            content = -content;
        }
        if content.is_one() {
            return (content, self.clone());
        }
        let inv = content.recip();
        (content, self.scale(&inv))
    }

    /// Exact evaluation. Terms are accumulated over a common denominator so
    /// the inner loop stays in integer arithmetic.
    pub fn eval(&self, point: &Valuation) -> Result<BigRational, RatFunError> {
        if self.terms.is_empty() {
            return Ok(BigRational::zero());
        }
        // per-variable maximal exponent
        let mut max_exp: Vec<(ParamId, u32)> = Vec::new();
        for (m, _) in &self.terms {
            for &(v, e) in m.powers() {
                match max_exp.iter_mut().find(|x| x.0 == v) {
                    Some(x) => x.1 = x.1.max(e),
                    None => max_exp.push((v, e)),
                }
            }
        }
        max_exp.sort_unstable();
        struct Table {
            id: ParamId,
            max: u32,
            num_pows: Vec<BigInt>,
            den_pows: Vec<BigInt>,
        }
        let mut tables = Vec::with_capacity(max_exp.len());
        for &(id, max) in &max_exp {
            let value = point.get(id).ok_or(RatFunError::MissingParameter(id))?;
            let mut num_pows = vec![BigInt::one()];
            let mut den_pows = vec![BigInt::one()];
            for k in 1..=max as usize {
                num_pows.push(&num_pows[k - 1] * value.numer());
                den_pows.push(&den_pows[k - 1] * value.denom());
            }
            tables.push(Table { id, max, num_pows, den_pows });
        }
        let mut coef_lcm = BigInt::one();
        for (_, c) in &self.terms {
            if !c.denom().is_one() {
                coef_lcm = coef_lcm.lcm(c.denom());
            }
        }
        let mut total = BigInt::zero();
        for (m, c) in &self.terms {
            let mut term = if coef_lcm.is_one() { c.numer().clone() } else { c.numer() * (&coef_lcm / c.denom()) };
            let powers = m.powers();
            let mut pi = 0;
            for t in &tables {
                let e = if pi < powers.len() && powers[pi].0 == t.id {
                    pi += 1;
                    powers[pi - 1].1
                } else {
                    0
                };
                if e > 0 {
                    term *= &t.num_pows[e as usize];
                }
                if e < t.max {
                    term *= &t.den_pows[(t.max - e) as usize];
                }
            }
            total += term;
        }
        let mut denom = coef_lcm;
        for t in &tables {
            denom *= &t.den_pows[t.max as usize];
        }
        Ok(BigRational::new(total, denom))
    }

    /// Value modulo the fingerprint prime at coordinate set `k`.
    pub(crate) fn eval_mod(&self, k: usize) -> Option<u64> {
        let mut total = 0;
        for (m, c) in &self.terms {
            let mut term = modp::from_rational(c)?;
            for &(v, e) in m.powers() {
                term = modp::mul(term, modp::pow(modp::coordinate(k, v), e as u64));
            }
            total = modp::add(total, term);
        }
        Some(total)
    }

    /// Replaces every parameter `v` by `image(v)`.
    pub fn substitute(&self, image: &dyn Fn(ParamId) -> Polynomial) -> Polynomial {
        let mut out = Polynomial::zero();
        for (m, c) in &self.terms {
            let mut term = Polynomial::constant(c.clone());
            for &(v, e) in m.powers() {
                term = term.mul(&image(v).pow(e));
            }
            out = out.add(&term);
        }
        out
    }

    /// Arithmetic operations needed to evaluate this polynomial term by term.
    pub fn op_count(&self) -> usize {
        if self.terms.is_empty() {
            return 0;
        }
        let mut ops = self.terms.len() - 1;
        for (m, c) in &self.terms {
            let deg = m.degree() as usize;
            if deg > 0 {
                ops += deg - 1;
                if !c.abs().is_one() {
                    ops += 1;
                }
            }
        }
        ops
    }

    pub fn display<'a>(&'a self, params: &'a ParamTable) -> PolyDisplay<'a> {
        PolyDisplay { poly: self, params }
    }
}

impl Ord for Polynomial {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.terms.iter().zip(&other.terms) {
            let o = a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1));
            if o != Ordering::Equal {
                return o;
            }
        }
        self.terms.len().cmp(&other.terms.len())
    }
}

impl PartialOrd for Polynomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn fmt_coeff(c: &BigRational, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c.is_integer() {
        write!(f, "{}", c.numer())
    } else {
        write!(f, "{}/{}", c.numer(), c.denom())
    }
}

pub(crate) fn fmt_monomial(m: &Monomial, params: &ParamTable, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for (i, &(id, e)) in m.powers().iter().enumerate() {
        if i > 0 {
            f.write_str("*")?;
        }
        f.write_str(params.name(id))?;
        if e > 1 {
            write!(f, "^{e}")?;
        }
    }
    Ok(())
}

pub struct PolyDisplay<'a> {
    poly: &'a Polynomial,
    params: &'a ParamTable,
}

impl fmt::Display for PolyDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.poly.terms.iter().enumerate() {
            let abs = c.abs();
            if i == 0 {
                if c.is_negative() {
                    f.write_str("-")?;
                }
            } else if c.is_negative() {
                f.write_str(" - ")?;
            } else {
                f.write_str(" + ")?;
            }
            if m.is_one() {
                fmt_coeff(&abs, f)?;
            } else {
                if !abs.is_one() {
                    fmt_coeff(&abs, f)?;
                    f.write_str("*")?;
                }
                fmt_monomial(m, self.params, f)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn x(i: u32) -> Polynomial {
        Polynomial::var(ParamId(i))
    }

    #[test]
    fn arithmetic_cancels_terms() {
        let one = Polynomial::one();
        let a = one.sub(&x(0)); // 1 - p
        let b = a.add(&x(0));
        assert!(b.is_one());
        let sq = a.mul(&a);
        assert_eq!(sq.len(), 3);
        assert_eq!(sq.leading_coefficient(), Some(&r(1, 1)));
        assert!(a.sub(&a).is_zero());
    }

    #[test]
    fn primitive_part_is_sign_canonical() {
        let p = x(0).scale(&r(-2, 3)).add(&Polynomial::constant(r(4, 9)));
        let (c, q) = p.primitive();
        assert_eq!(c, r(-2, 9));
        assert_eq!(q.terms()[0].1, r(3, 1));
        assert_eq!(q.terms()[1].1, r(-2, 1));
        assert_eq!(q.scale(&c), p);
    }

    #[test]
    fn eval_matches_direct_arithmetic() {
        // 3/2 p^2 q - q + 1/4
        let p = Polynomial::from_terms([
            (Monomial::from_powers([(ParamId(0), 2), (ParamId(1), 1)]), r(3, 2)),
            (Monomial::var(ParamId(1)), r(-1, 1)),
            (Monomial::one(), r(1, 4)),
        ]);
        let mut v = Valuation::new(2);
        v.set(ParamId(0), r(2, 3));
        v.set(ParamId(1), r(5, 7));
        let expect = r(3, 2) * r(4, 9) * r(5, 7) - r(5, 7) + r(1, 4);
        assert_eq!(p.eval(&v).unwrap(), expect);
        let empty = Valuation::new(1);
        assert!(matches!(p.eval(&empty), Err(RatFunError::MissingParameter(_))));
    }

    #[test]
    fn op_count_by_definition() {
        // p1 + p2 - p1*p2: two additions, one multiplication
        let p = x(0).add(&x(1)).sub(&x(0).mul(&x(1)));
        assert_eq!(p.op_count(), 3);
        // 2*p^3: two multiplications for the power, one for the coefficient
        assert_eq!(x(0).pow(3).scale(&r(2, 1)).op_count(), 3);
        assert_eq!(Polynomial::constant(r(1, 2)).op_count(), 0);
    }
}
