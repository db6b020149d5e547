use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::Zero;

use super::modp::{self, Fingerprint};
use super::monomial::ParamId;
use super::{RatFunError, RationalFunction, Valuation};

/// Binary operation of an unevaluated formula node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn apply_rational(self, a: &RationalFunction, b: &RationalFunction) -> Result<RationalFunction, RatFunError> {
        Ok(match self {
            BinOp::Add => a.add(b),
            BinOp::Sub => a.sub(b),
            BinOp::Mul => a.mul(b),
            BinOp::Div => a.div(b)?,
        })
    }

    fn apply_exact(self, a: &BigRational, b: &BigRational) -> Result<BigRational, RatFunError> {
        Ok(match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b.is_zero() {
                    return Err(RatFunError::EvalDenominatorZero);
                }
                a / b
            }
        })
    }

    fn apply_mod(self, a: u64, b: u64) -> Option<u64> {
        Some(match self {
            BinOp::Add => modp::add(a, b),
            BinOp::Sub => modp::sub(a, b),
            BinOp::Mul => modp::mul(a, b),
            BinOp::Div => modp::mul(a, modp::inv(b)?),
        })
    }
}

/// How [`Formula`] operations combine canonical leaves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Arithmetic {
    /// Fold two leaves only when the canonical result is no costlier than
    /// the unevaluated operation.
    #[default]
    Shared,
    /// Always fold: every formula stays a single canonical function.
    Expanded,
}

/// A rational function kept as a shared expression graph whose leaves are
/// canonical [`RationalFunction`]s.
///
/// Combining two leaves yields a leaf whenever the canonical result costs no
/// more operations than the unevaluated node would; otherwise a node is
/// recorded. Nodes that vanish or equal one at every fingerprint point are
/// replaced by the constant.
#[derive(Clone)]
pub struct Formula(Arc<Node>);

struct Node {
    kind: Kind,
    fingerprint: Fingerprint,
}

enum Kind {
    Leaf(RationalFunction),
    Binary(BinOp, Formula, Formula),
}

/// Borrowed view of a formula's top node.
pub enum View<'a> {
    Leaf(&'a RationalFunction),
    Binary(BinOp, &'a Formula, &'a Formula),
}

impl Formula {
    pub fn leaf(f: RationalFunction) -> Self {
        let fingerprint = f.fingerprint();
        Formula(Arc::new(Node { kind: Kind::Leaf(f), fingerprint }))
    }

    pub fn zero() -> Self {
        Formula::leaf(RationalFunction::zero())
    }

    pub fn one() -> Self {
        Formula::leaf(RationalFunction::one())
    }

    pub fn var(id: ParamId) -> Self {
        Formula::leaf(RationalFunction::var(id))
    }

    pub fn view(&self) -> View<'_> {
        match &self.0.kind {
            Kind::Leaf(f) => View::Leaf(f),
            Kind::Binary(op, a, b) => View::Binary(*op, a, b),
        }
    }

    /// Identity of the shared node, stable while any clone is alive.
    pub fn key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn as_rational(&self) -> Option<&RationalFunction> {
        match &self.0.kind {
            Kind::Leaf(f) => Some(f),
            Kind::Binary(..) => None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.as_rational().is_some()
    }

    pub fn is_zero(&self) -> bool {
        match &self.0.kind {
            Kind::Leaf(f) => f.is_zero(),
            Kind::Binary(..) => self.0.fingerprint.iter().all(|v| *v == Some(0)),
        }
    }

    pub fn is_one(&self) -> bool {
        match &self.0.kind {
            Kind::Leaf(f) => f.is_one(),
            Kind::Binary(..) => self.0.fingerprint.iter().all(|v| *v == Some(1)),
        }
    }

    pub fn constant_value(&self) -> Option<&BigRational> {
        self.as_rational().and_then(|f| f.constant_value())
    }

    pub fn is_constant(&self) -> bool {
        self.constant_value().is_some()
    }

    pub fn neg(&self) -> Self {
        Formula::zero().sub(self)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.apply(BinOp::Add, other, Arithmetic::Shared).expect("addition is total")
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.apply(BinOp::Sub, other, Arithmetic::Shared).expect("subtraction is total")
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.apply(BinOp::Mul, other, Arithmetic::Shared).expect("multiplication is total")
    }

    pub fn div(&self, other: &Self) -> Result<Self, RatFunError> {
        self.apply(BinOp::Div, other, Arithmetic::Shared)
    }

    pub fn recip(&self) -> Result<Self, RatFunError> {
        Formula::one().div(self)
    }

    /// `self op other`; only [`BinOp::Div`] by the zero function fails.
    pub fn apply(&self, op: BinOp, other: &Self, arith: Arithmetic) -> Result<Self, RatFunError> {
        let same = self.key() == other.key();
        match op {
            BinOp::Add if self.is_zero() => return Ok(other.clone()),
            BinOp::Add | BinOp::Sub if other.is_zero() => return Ok(self.clone()),
            BinOp::Sub if same => return Ok(Formula::zero()),
            BinOp::Mul if self.is_zero() || other.is_zero() => return Ok(Formula::zero()),
            BinOp::Mul if self.is_one() => return Ok(other.clone()),
            BinOp::Mul | BinOp::Div if other.is_one() => return Ok(self.clone()),
            BinOp::Div if other.is_zero() => return Err(RatFunError::DivisionByZeroFunction),
            BinOp::Div if self.is_zero() => return Ok(Formula::zero()),
            BinOp::Div if same => return Ok(Formula::one()),
            _ => {}
        }
        if let (Some(a), Some(b)) = (self.as_rational(), other.as_rational()) {
            let r = op.apply_rational(a, b)?;
            if arith == Arithmetic::Expanded || r.op_count() <= a.op_count() + b.op_count() + 1 {
                return Ok(Formula::leaf(r));
            }
        }
        let (fa, fb) = (&self.0.fingerprint, &other.0.fingerprint);
        let fingerprint: Fingerprint = std::array::from_fn(|k| match (fa[k], fb[k]) {
            (Some(x), Some(y)) => op.apply_mod(x, y),
            _ => None,
        });
        let node = Formula(Arc::new(Node { kind: Kind::Binary(op, self.clone(), other.clone()), fingerprint }));
        if node.is_zero() {
            return Ok(Formula::zero());
        }
        if node.is_one() {
            return Ok(Formula::one());
        }
        Ok(node)
    }

    /// Visits every distinct node once, children before parents.
    pub fn for_each_postorder(roots: &[&Formula], mut visit: impl FnMut(&Formula)) {
        let mut done: HashSet<usize> = HashSet::new();
        let mut stack: Vec<(&Formula, bool)> = roots.iter().rev().map(|r| (*r, false)).collect();
        while let Some((f, expanded)) = stack.pop() {
            if done.contains(&f.key()) {
                continue;
            }
            match (&f.0.kind, expanded) {
                (Kind::Binary(_, a, b), false) => {
                    stack.push((f, true));
                    stack.push((b, false));
                    stack.push((a, false));
                }
                _ => {
                    done.insert(f.key());
                    visit(f);
                }
            }
        }
    }

    /// Bottom-up evaluation over the graph with one value per distinct node.
    fn fold<T: Clone>(
        &self,
        mut leaf: impl FnMut(&RationalFunction) -> Result<T, RatFunError>,
        mut binary: impl FnMut(BinOp, &T, &T) -> Result<T, RatFunError>,
    ) -> Result<T, RatFunError> {
        let mut memo: HashMap<usize, T> = HashMap::new();
        let mut err = None;
        Formula::for_each_postorder(&[self], |f| {
            if err.is_some() {
                return;
            }
            let v = match f.view() {
                View::Leaf(r) => leaf(r),
                View::Binary(op, a, b) => binary(op, &memo[&a.key()], &memo[&b.key()]),
            };
            match v {
                Ok(v) => {
                    memo.insert(f.key(), v);
                }
                Err(e) => err = Some(e),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(memo.remove(&self.key()).expect("root visited")),
        }
    }

    pub fn eval(&self, point: &Valuation) -> Result<BigRational, RatFunError> {
        self.fold(|r| r.eval(point), |op, a, b| op.apply_exact(a, b))
    }

    /// Expands the whole graph into a single canonical function. Can be
    /// very expensive on large graphs.
    pub fn to_rational(&self) -> Result<RationalFunction, RatFunError> {
        self.fold(|r| Ok(r.clone()), |op, a, b| op.apply_rational(a, b))
    }

    /// Operations of the graph: each distinct node counts once, leaves by
    /// their canonical cost.
    pub fn op_count(&self) -> usize {
        let mut total = 0;
        Formula::for_each_postorder(&[self], |f| {
            total += match f.view() {
                View::Leaf(r) => r.op_count(),
                View::Binary(..) => 1,
            }
        });
        total
    }

    /// Number of unevaluated operation nodes.
    pub fn node_count(&self) -> usize {
        let mut n = 0;
        Formula::for_each_postorder(&[self], |f| n += usize::from(!f.is_leaf()));
        n
    }

    /// Parameters occurring anywhere in the graph.
    pub fn vars(&self) -> Vec<ParamId> {
        let mut out = Vec::new();
        Formula::for_each_postorder(&[self], |f| {
            if let View::Leaf(r) = f.view() {
                out.extend(r.vars());
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Replaces each parameter for which `image` returns a formula.
    pub fn substitute(
        &self,
        image: &dyn Fn(ParamId) -> Option<Formula>,
        arith: Arithmetic,
    ) -> Result<Formula, RatFunError> {
        self.fold(|r| substitute_leaf(r, image, arith), |op, a, b| a.apply(op, b, arith))
    }
}

fn substitute_leaf(
    r: &RationalFunction,
    image: &dyn Fn(ParamId) -> Option<Formula>,
    arith: Arithmetic,
) -> Result<Formula, RatFunError> {
    if r.vars().iter().all(|&v| image(v).is_none()) {
        return Ok(Formula::leaf(r.clone()));
    }
    let mut out = Formula::leaf(RationalFunction::constant(r.coefficient().clone()));
    for (factor, e) in r.factors() {
        let mut poly = Formula::zero();
        for (m, c) in factor.poly().terms() {
            let mut term = Formula::leaf(RationalFunction::constant(c.clone()));
            for &(v, k) in m.powers() {
                let base = image(v).unwrap_or_else(|| Formula::var(v));
                for _ in 0..k {
                    term = term.apply(BinOp::Mul, &base, arith)?;
                }
            }
            poly = poly.apply(BinOp::Add, &term, arith)?;
        }
        let op = if *e > 0 { BinOp::Mul } else { BinOp::Div };
        for _ in 0..e.unsigned_abs() {
            out = out.apply(op, &poly, arith)?;
        }
    }
    Ok(out)
}

impl From<RationalFunction> for Formula {
    fn from(f: RationalFunction) -> Self {
        Formula::leaf(f)
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0.kind {
            Kind::Leaf(r) => write!(f, "Leaf({r:?})"),
            Kind::Binary(op, ..) => write!(f, "Node({}, #{:x})", op.symbol(), self.key()),
        }
    }
}

/// Leaves compare structurally; anything else by fingerprint, which is an
/// identity test that can only err with negligible probability.
impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        if self.key() == other.key() {
            return true;
        }
        match (self.as_rational(), other.as_rational()) {
            (Some(a), Some(b)) if a == b => true,
            _ => self.0.fingerprint == other.0.fingerprint && self.0.fingerprint.iter().all(Option::is_some),
        }
    }
}

impl Eq for Formula {}

impl Default for Formula {
    fn default() -> Self {
        Formula::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratfun::{parse_expr, parse_rational, ParamTable};

    fn table() -> ParamTable {
        ParamTable::from_names(["a", "b", "c"])
    }

    fn leaf(s: &str) -> Formula {
        Formula::leaf(parse_expr(s, &table()).unwrap())
    }

    fn point(a: &str, b: &str, c: &str) -> Valuation {
        Valuation::from_values([a, b, c].iter().map(|s| parse_rational(s).unwrap()).collect())
    }

    #[test]
    fn cheap_combinations_stay_canonical() {
        let f = leaf("a").add(&leaf("1 - a").mul(&leaf("b")));
        assert_eq!(f.as_rational().unwrap(), &parse_expr("a + b - a*b", &table()).unwrap());
        assert_eq!(f.op_count(), 3);
    }

    #[test]
    fn costly_sums_become_nodes() {
        let x = leaf("a/(1 - b)");
        let y = leaf("c/(1 - a*c)");
        let s = x.add(&y);
        assert!(!s.is_leaf());
        let v = point("1/3", "1/5", "1/7");
        assert_eq!(s.eval(&v).unwrap(), x.eval(&v).unwrap() + y.eval(&v).unwrap());
        assert_eq!(s.to_rational().unwrap().eval(&v).unwrap(), s.eval(&v).unwrap());
    }

    #[test]
    fn hidden_cancellation_is_detected() {
        let x = leaf("a/(1 - b)");
        let y = leaf("c/(1 - a*c)");
        let s = x.add(&y);
        let back = s.sub(&y);
        // structurally a node, semantically x
        assert!(back.sub(&x).is_zero());
        assert!(s.div(&s).unwrap().is_one());
        let gap = Formula::one().sub(&s.div(&x.add(&y)).unwrap());
        assert_eq!(s.div(&gap), Err(RatFunError::DivisionByZeroFunction));
    }

    #[test]
    fn substitution_matches_evaluation() {
        let x = leaf("a/(1 - b)").add(&leaf("c/(1 - a*c)"));
        let b = ParamId(1);
        let g = x.substitute(&|v| (v == b).then(|| leaf("a*c")), Arithmetic::Shared).unwrap();
        let v = point("1/3", "1/5", "1/7");
        let mut w = v.clone();
        w.set(b, parse_rational("1/21").unwrap());
        assert_eq!(g.eval(&v).unwrap(), x.eval(&w).unwrap());
        assert!(!g.vars().contains(&b));
    }

    #[test]
    fn expanded_mode_keeps_one_leaf() {
        let x = leaf("a/(1 - b)").apply(BinOp::Add, &leaf("c/(1 - a*c)"), Arithmetic::Expanded).unwrap();
        assert!(x.is_leaf());
        let v = point("1/3", "1/5", "1/7");
        assert_eq!(x.eval(&v).unwrap(), leaf("a/(1 - b)").add(&leaf("c/(1 - a*c)")).eval(&v).unwrap());
    }

    #[test]
    fn shared_nodes_count_once() {
        let x = leaf("a/(1 - b)").add(&leaf("c/(1 - a*c)"));
        let y = x.mul(&x);
        assert_eq!(y.node_count(), 2);
        assert_eq!(y.op_count(), x.op_count() + 1);
    }

    #[test]
    fn division_by_vanishing_node_fails_in_eval() {
        let x = leaf("a").sub(&leaf("b/(1-c)"));
        let f = Formula::one().div(&x).unwrap();
        assert_eq!(f.eval(&point("1/2", "1/4", "1/2")), Err(RatFunError::EvalDenominatorZero));
        assert_eq!(f.eval(&point("1/2", "1/4", "1/3")).unwrap(), parse_rational("8").unwrap());
    }
}
