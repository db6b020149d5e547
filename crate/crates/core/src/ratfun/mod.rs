//! Exact multivariate rational functions over a table of named parameters.

mod formula;
mod function;
mod modp;
mod monomial;
mod parse;
mod polynomial;

use std::collections::HashMap;

use num_rational::BigRational;
use thiserror::Error;

pub use formula::{Arithmetic, BinOp, Formula, View};
pub use function::{Factor, RationalDisplay, RationalFunction};
pub use monomial::{Monomial, ParamId};
pub use parse::{parse_expr, parse_rational};
pub use polynomial::{PolyDisplay, Polynomial};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RatFunError {
    #[error("division by the zero function")]
    DivisionByZeroFunction,
    #[error("denominator is the zero polynomial")]
    ZeroDenominator,
    #[error("denominator vanishes at the evaluation point")]
    EvalDenominatorZero,
    #[error("no value for parameter {0}")]
    MissingParameter(ParamId),
    #[error("undeclared parameter `{0}`")]
    UndeclaredParameter(String),
    #[error("syntax error at column {col}: {msg}")]
    Syntax { col: usize, msg: String },
}

/// Ordered set of distinct parameter names; a parameter's id is its position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParamTable {
    names: Vec<String>,
    index: HashMap<String, ParamId>,
}

impl ParamTable {
    pub fn new() -> Self {
        ParamTable::default()
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut t = ParamTable::new();
        for n in names {
            t.declare(n);
        }
        t
    }

    /// Returns the id of `name`, registering it if new.
    pub fn declare(&mut self, name: impl Into<String>) -> ParamId {
        let name = name.into();
        assert!(!name.is_empty(), "parameter names must be non-empty");
        if let Some(&id) = self.index.get(&name) {
            return id;
        }
        let id = ParamId(self.names.len() as u32);
        self.index.insert(name.clone(), id);
        self.names.push(name);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len() as u32).map(ParamId)
    }
}

/// A (possibly partial) assignment of exact values to parameters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Valuation {
    values: Vec<Option<BigRational>>,
}

impl Valuation {
    pub fn new(n: usize) -> Self {
        Valuation { values: vec![None; n] }
    }

    pub fn from_values(values: Vec<BigRational>) -> Self {
        Valuation { values: values.into_iter().map(Some).collect() }
    }

    pub fn get(&self, id: ParamId) -> Option<&BigRational> {
        self.values.get(id.index()).and_then(|v| v.as_ref())
    }

    pub fn set(&mut self, id: ParamId, value: BigRational) {
        if self.values.len() <= id.index() {
            self.values.resize(id.index() + 1, None);
        }
        self.values[id.index()] = Some(value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_complete(&self, n: usize) -> bool {
        self.values.len() >= n && self.values[..n].iter().all(Option::is_some)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &BigRational)> {
        self.values.iter().enumerate().filter_map(|(i, v)| v.as_ref().map(|v| (ParamId(i as u32), v)))
    }
}
