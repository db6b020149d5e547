//! Parametric DTMCs: data model, text format, stochasticity checks and the
//! induced graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ratfun::{parse_expr, ParamTable, RatFunError, RationalFunction, Valuation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("line {line}: {msg}")]
    SyntaxError { line: usize, msg: String },
    #[error("line {line}: undeclared parameter `{name}`")]
    UndeclaredParameter { line: usize, name: String },
    #[error("line {line}: initial state declared twice")]
    DuplicateInit { line: usize },
    #[error("no initial state declared")]
    NoInit,
    #[error("target `{0}` resolves to no state")]
    EmptyTarget(String),
    #[error("state {0} does not exist")]
    UnknownState(StateId),
}

/// A parametric discrete-time Markov chain.
///
/// Rows are sparse and never store a function that is structurally zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pdtmc {
    params: ParamTable,
    initial: StateId,
    rows: Vec<BTreeMap<StateId, RationalFunction>>,
    labels: Vec<BTreeSet<String>>,
}

impl Pdtmc {
    pub fn new(params: ParamTable, n_states: usize, initial: StateId) -> Self {
        assert!(initial.index() < n_states.max(1));
        Pdtmc {
            params,
            initial,
            rows: vec![BTreeMap::new(); n_states.max(1)],
            labels: vec![BTreeSet::new(); n_states.max(1)],
        }
    }

    pub fn params(&self) -> &ParamTable {
        &self.params
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn set_initial(&mut self, s: StateId) {
        assert!(s.index() < self.rows.len());
        self.initial = s;
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.rows.iter().map(BTreeMap::len).sum()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.rows.len() as u32).map(StateId)
    }

    pub fn add_state(&mut self) -> StateId {
        self.rows.push(BTreeMap::new());
        self.labels.push(BTreeSet::new());
        StateId(self.rows.len() as u32 - 1)
    }

    fn ensure_state(&mut self, s: StateId) {
        while self.rows.len() <= s.index() {
            self.add_state();
        }
    }

    pub fn row(&self, s: StateId) -> &BTreeMap<StateId, RationalFunction> {
        &self.rows[s.index()]
    }

    pub fn transition(&self, from: StateId, to: StateId) -> Option<&RationalFunction> {
        self.rows[from.index()].get(&to)
    }

    /// Adds `f` to the probability of `from -> to`; the edge disappears if
    /// the sum is zero.
    pub fn add_transition(&mut self, from: StateId, to: StateId, f: RationalFunction) {
        let row = &mut self.rows[from.index()];
        match row.get_mut(&to) {
            Some(existing) => {
                let sum = existing.add(&f);
                if sum.is_zero() {
                    row.remove(&to);
                } else {
                    *existing = sum;
                }
            }
            None if !f.is_zero() => {
                row.insert(to, f);
            }
            None => {}
        }
    }

    pub fn set_transition(&mut self, from: StateId, to: StateId, f: RationalFunction) {
        if f.is_zero() {
            self.rows[from.index()].remove(&to);
        } else {
            self.rows[from.index()].insert(to, f);
        }
    }

    pub fn remove_transition(&mut self, from: StateId, to: StateId) -> Option<RationalFunction> {
        self.rows[from.index()].remove(&to)
    }

    pub fn clear_row(&mut self, s: StateId) {
        self.rows[s.index()].clear();
    }

    pub fn labels(&self, s: StateId) -> &BTreeSet<String> {
        &self.labels[s.index()]
    }

    pub fn add_label(&mut self, s: StateId, label: impl Into<String>) {
        self.labels[s.index()].insert(label.into());
    }

    pub fn states_with_label(&self, label: &str) -> BTreeSet<StateId> {
        self.states().filter(|s| self.labels[s.index()].contains(label)).collect()
    }

    /// Evaluated row sums at `point`.
    pub fn row_sum(&self, s: StateId, point: &Valuation) -> Result<BigRational, RatFunError> {
        let mut sum = BigRational::zero();
        for f in self.rows[s.index()].values() {
            sum += f.eval(point)?;
        }
        Ok(sum)
    }

    /// Replaces the parameter table; existing ids must stay valid.
    pub fn with_params(mut self, params: ParamTable) -> Self {
        assert!(params.len() >= self.params.len());
        self.params = params;
        self
    }
}

/// Directed graph of the non-zero transitions, with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InducedGraph {
    succ: Vec<Vec<StateId>>,
    pred: Vec<Vec<StateId>>,
}

impl InducedGraph {
    pub fn n_vertices(&self) -> usize {
        self.succ.len()
    }

    pub fn n_edges(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn successors(&self, s: StateId) -> &[StateId] {
        &self.succ[s.index()]
    }

    pub fn predecessors(&self, s: StateId) -> &[StateId] {
        &self.pred[s.index()]
    }

    pub fn has_edge(&self, from: StateId, to: StateId) -> bool {
        self.succ[from.index()].binary_search(&to).is_ok()
    }

    /// States reachable from `start` (inclusive).
    pub fn forward_reachable(&self, start: &[StateId]) -> Vec<bool> {
        reach(&self.succ, start)
    }

    /// States that can reach one of `goal` (inclusive).
    pub fn backward_reachable(&self, goal: &[StateId]) -> Vec<bool> {
        reach(&self.pred, goal)
    }
}

fn reach(adj: &[Vec<StateId>], start: &[StateId]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack: Vec<StateId> = Vec::new();
    for &s in start {
        if !seen[s.index()] {
            seen[s.index()] = true;
            stack.push(s);
        }
    }
    while let Some(v) = stack.pop() {
        for &w in &adj[v.index()] {
            if !seen[w.index()] {
                seen[w.index()] = true;
                stack.push(w);
            }
        }
    }
    seen
}

pub fn induced_graph(m: &Pdtmc) -> InducedGraph {
    let n = m.n_states();
    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![Vec::new(); n];
    for s in m.states() {
        for (&t, f) in m.row(s) {
            if !f.is_zero() {
                succ[s.index()].push(t);
                pred[t.index()].push(s);
            }
        }
    }
    // rows are BTreeMaps and sources are visited in order, so both lists
    // are already ascending
    InducedGraph { succ, pred }
}

/// Target of a reachability query `P=? [F target]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Label(String),
    States(Vec<StateId>),
}

impl Target {
    /// Accepts a label name or a comma-separated list of state ids.
    pub fn parse(text: &str) -> Target {
        let ids: Option<Vec<StateId>> = text.split(',').map(|t| t.trim().parse::<u32>().ok().map(StateId)).collect();
        match ids {
            Some(ids) if !text.trim().is_empty() => Target::States(ids),
            _ => Target::Label(text.trim().to_string()),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Label(l) => f.write_str(l),
            Target::States(ids) => {
                let parts: Vec<String> = ids.iter().map(ToString::to_string).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

pub fn resolve_target(m: &Pdtmc, q: &Target) -> Result<BTreeSet<StateId>, ModelError> {
    let set = match q {
        Target::Label(l) => m.states_with_label(l),
        Target::States(ids) => {
            for &s in ids {
                if s.index() >= m.n_states() {
                    return Err(ModelError::UnknownState(s));
                }
            }
            ids.iter().copied().collect()
        }
    };
    if set.is_empty() {
        return Err(ModelError::EmptyTarget(q.to_string()));
    }
    Ok(set)
}

/// Rows whose evaluated sum differs from 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StochasticReport {
    pub violations: Vec<RowViolation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowViolation {
    pub state: StateId,
    pub point: usize,
    pub sum: Option<BigRational>,
}

impl StochasticReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_stochastic(m: &Pdtmc, points: &[Valuation]) -> StochasticReport {
    let mut report = StochasticReport::default();
    for (i, point) in points.iter().enumerate() {
        for s in m.states() {
            match m.row_sum(s, point) {
                Ok(sum) if sum.is_one() => {}
                Ok(sum) => report.violations.push(RowViolation { state: s, point: i, sum: Some(sum) }),
                Err(_) => report.violations.push(RowViolation { state: s, point: i, sum: None }),
            }
        }
    }
    report
}

/// Parses the line-oriented model format:
///
/// ```text
/// param p1
/// states 3
/// init 0
/// label 1 success
/// trans 0 1 p1
/// trans 0 2 1 - p1
/// trans 1 1 1
/// trans 2 2 1
/// ```
pub fn parse_model(text: &str) -> Result<Pdtmc, ModelError> {
    let mut params = ParamTable::new();
    let mut declared_states = 0usize;
    let mut init: Option<StateId> = None;
    let mut labels: Vec<(StateId, String)> = Vec::new();
    let mut trans: Vec<(usize, StateId, StateId, RationalFunction)> = Vec::new();
    let mut max_state = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let syntax = |msg: &str| ModelError::SyntaxError { line, msg: msg.to_string() };
        let (keyword, rest) = content.split_once(char::is_whitespace).unwrap_or((content, ""));
        let rest = rest.trim();
        let state = |tok: Option<&str>| -> Result<StateId, ModelError> {
            let tok = tok.ok_or_else(|| syntax("missing state id"))?;
            tok.parse::<u32>().map(StateId).map_err(|_| syntax(&format!("invalid state id `{tok}`")))
        };
        match keyword {
            "param" => {
                let mut names = rest.split_whitespace();
                let name = names.next().ok_or_else(|| syntax("missing parameter name"))?;
                if names.next().is_some() || !is_identifier(name) {
                    return Err(syntax(&format!("invalid parameter name `{rest}`")));
                }
                if params.id(name).is_some() {
                    return Err(syntax(&format!("parameter `{name}` declared twice")));
                }
                params.declare(name);
            }
            "states" => {
                declared_states = rest.parse().map_err(|_| syntax("invalid state count"))?;
            }
            "init" => {
                if init.is_some() {
                    return Err(ModelError::DuplicateInit { line });
                }
                let s = state(Some(rest))?;
                max_state = max_state.max(s.index() + 1);
                init = Some(s);
            }
            "label" => {
                let mut toks = rest.split_whitespace();
                let s = state(toks.next())?;
                let name = toks.next().ok_or_else(|| syntax("missing label name"))?;
                if toks.next().is_some() {
                    return Err(syntax("trailing tokens after label"));
                }
                max_state = max_state.max(s.index() + 1);
                labels.push((s, name.to_string()));
            }
            "trans" => {
                let mut toks = rest.splitn(3, char::is_whitespace);
                let from = state(toks.next())?;
                let to = state(toks.next())?;
                let expr = toks.next().map(str::trim).unwrap_or("");
                if expr.is_empty() {
                    return Err(syntax("missing probability expression"));
                }
                let f = parse_expr(expr, &params).map_err(|e| match e {
                    RatFunError::UndeclaredParameter(name) => ModelError::UndeclaredParameter { line, name },
                    other => syntax(&other.to_string()),
                })?;
                max_state = max_state.max(from.index() + 1).max(to.index() + 1);
                trans.push((line, from, to, f));
            }
            other => return Err(syntax(&format!("unknown keyword `{other}`"))),
        }
    }

    let initial = init.ok_or(ModelError::NoInit)?;
    let mut m = Pdtmc::new(params, declared_states.max(max_state), initial);
    for (s, l) in labels {
        m.ensure_state(s);
        m.add_label(s, l);
    }
    for (_, from, to, f) in trans {
        if f.is_zero() {
            continue;
        }
        m.add_transition(from, to, f);
    }
    Ok(m)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn render_model(m: &Pdtmc) -> String {
    let mut out = String::new();
    for name in m.params().names() {
        writeln!(out, "param {name}").unwrap();
    }
    writeln!(out, "states {}", m.n_states()).unwrap();
    writeln!(out, "init {}", m.initial()).unwrap();
    for s in m.states() {
        for l in m.labels(s) {
            writeln!(out, "label {s} {l}").unwrap();
        }
    }
    for s in m.states() {
        for (t, f) in m.row(s) {
            writeln!(out, "trans {s} {t} {}", f.display(m.params())).unwrap();
        }
    }
    out
}
