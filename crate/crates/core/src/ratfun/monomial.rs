use std::cmp::Ordering;
use std::fmt;

use smallvec::SmallVec;

/// Index of a parameter in a [`ParamTable`](super::ParamTable).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub u32);

impl ParamId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// A power product of parameters, stored sparsely as `(param, exponent)` pairs
/// sorted by parameter id. Zero exponents are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Monomial {
    powers: SmallVec<[(ParamId, u32); 4]>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial::default()
    }

    pub fn var(id: ParamId) -> Self {
        Monomial::power(id, 1)
    }

    pub fn power(id: ParamId, exp: u32) -> Self {
        let mut powers = SmallVec::new();
        if exp > 0 {
            powers.push((id, exp));
        }
        Monomial { powers }
    }

    /// Builds a monomial from arbitrary `(param, exponent)` pairs; repeated
    /// parameters are merged and zero exponents dropped.
    pub fn from_powers<I: IntoIterator<Item = (ParamId, u32)>>(iter: I) -> Self {
        let mut powers: SmallVec<[(ParamId, u32); 4]> = iter.into_iter().filter(|p| p.1 > 0).collect();
        powers.sort_unstable_by_key(|p| p.0);
        let mut merged: SmallVec<[(ParamId, u32); 4]> = SmallVec::with_capacity(powers.len());
        for (id, e) in powers {
            match merged.last_mut() {
                Some(last) if last.0 == id => last.1 += e,
                _ => merged.push((id, e)),
            }
        }
        Monomial { powers: merged }
    }

    pub fn is_one(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.powers.iter().map(|p| p.1).sum()
    }

    pub fn exponent(&self, id: ParamId) -> u32 {
        self.powers.binary_search_by_key(&id, |p| p.0).map(|i| self.powers[i].1).unwrap_or(0)
    }

    pub fn powers(&self) -> &[(ParamId, u32)] {
        &self.powers
    }

    pub fn vars(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.powers.iter().map(|p| p.0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.powers, &other.powers);
        let mut out: SmallVec<[(ParamId, u32); 4]> = SmallVec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial { powers: out }
    }

    /// `self / other`, or `None` when `other` does not divide `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out: SmallVec<[(ParamId, u32); 4]> = SmallVec::new();
        let mut j = 0;
        for &(id, e) in &self.powers {
            if j < other.powers.len() && other.powers[j].0 < id {
                return None;
            }
            if j < other.powers.len() && other.powers[j].0 == id {
                let f = other.powers[j].1;
                j += 1;
                match e.cmp(&f) {
                    Ordering::Less => return None,
                    Ordering::Equal => {}
                    Ordering::Greater => out.push((id, e - f)),
                }
            } else {
                out.push((id, e));
            }
        }
        if j < other.powers.len() {
            return None;
        }
        Some(Monomial { powers: out })
    }

    /// Per-parameter minimum of exponents.
    pub fn gcd(&self, other: &Monomial) -> Monomial {
        let mut out: SmallVec<[(ParamId, u32); 4]> = SmallVec::new();
        let (a, b) = (&self.powers, &other.powers);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1.min(b[j].1)));
                    i += 1;
                    j += 1;
                }
            }
        }
        Monomial { powers: out }
    }
}

/// Graded lexicographic order: total degree first, then exponent vectors
/// compared lexicographically with parameter 0 most significant.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        let by_degree = self.degree().cmp(&other.degree());
        if by_degree != Ordering::Equal {
            return by_degree;
        }
        let (a, b) = (&self.powers, &other.powers);
        let mut i = 0;
        loop {
            match (a.get(i), b.get(i)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(x), Some(y)) => {
                    if x.0 != y.0 {
                        // the side holding the smaller parameter id has a
                        // positive exponent where the other has zero
                        return if x.0 < y.0 { Ordering::Greater } else { Ordering::Less };
                    }
                    if x.1 != y.1 {
                        return x.1.cmp(&y.1);
                    }
                }
            }
            i += 1;
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
