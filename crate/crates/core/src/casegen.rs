//! Deterministic generators for the case-study model families.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::model::{Pdtmc, StateId};
use crate::ratfun::{parse_expr, ParamId, ParamTable, Polynomial, RationalFunction};
use crate::sampling::Sampler;

/// How the functionally-equivalent services of one operation are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Strategy {
    /// Services are tried in order until one succeeds.
    Seq,
    /// As `Seq`, and a failed service may be retried before moving on.
    SeqR,
    /// All services are invoked at once; one success suffices.
    Par,
    /// One service is picked at random.
    Prob,
    /// As `Prob`, and a failure may lead to a new random pick.
    ProbR,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Seq, Strategy::SeqR, Strategy::Par, Strategy::Prob, Strategy::ProbR];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Seq => "SEQ",
            Strategy::SeqR => "SEQ_R",
            Strategy::Par => "PAR",
            Strategy::Prob => "PROB",
            Strategy::ProbR => "PROB_R",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_uppercase().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == norm || st.name().replace('_', "") == norm)
            .ok_or_else(|| format!("unknown strategy `{s}` (expected SEQ, SEQ_R, PAR, PROB or PROB_R)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FxSpec {
    pub strategy: Strategy,
    pub services: usize,
}

pub const SUCCESS_LABEL: &str = "success";
pub const FX_SUCCESS_LABEL: &str = "successFX";
pub const FX_FAIL_LABEL: &str = "failedFX";

struct Builder {
    params: ParamTable,
    edges: Vec<(usize, usize, String)>,
    n: usize,
    labels: Vec<(usize, &'static str)>,
}

impl Builder {
    fn new() -> Self {
        Builder { params: ParamTable::new(), edges: Vec::new(), n: 0, labels: Vec::new() }
    }

    fn state(&mut self) -> usize {
        self.n += 1;
        self.n - 1
    }

    fn param(&mut self, name: String) -> String {
        self.params.declare(name.as_str());
        name
    }

    fn edge(&mut self, from: usize, to: usize, expr: impl Into<String>) {
        self.edges.push((from, to, expr.into()));
    }

    fn build(self) -> Pdtmc {
        let mut m = Pdtmc::new(self.params, self.n, StateId(0));
        for (s, l) in self.labels {
            m.add_label(StateId(s as u32), l);
        }
        for (from, to, expr) in self.edges {
            let f = parse_expr(&expr, m.params()).expect("generated expressions are well-formed");
            m.add_transition(StateId(from as u32), StateId(to as u32), f);
        }
        m
    }
}

/// The two-service example: try the first service, fall back to the second.
pub fn gen_fx_intro() -> Pdtmc {
    let mut b = Builder::new();
    let p1 = b.param("p1".into());
    let p2 = b.param("p2".into());
    let (s0, s1, ok, fail) = (b.state(), b.state(), b.state(), b.state());
    b.labels.extend([(s0, "initial"), (ok, SUCCESS_LABEL), (fail, "fail")]);
    b.edge(s0, ok, p1.clone());
    b.edge(s0, s1, format!("1 - {p1}"));
    b.edge(s1, ok, p2.clone());
    b.edge(s1, fail, format!("1 - {p2}"));
    b.edge(ok, ok, "1");
    b.edge(fail, fail, "1");
    b.build()
}

/// Workflow operations: market watch, technical analysis, alarm, order,
/// fundamental analysis, notification.
const OPS: usize = 6;

/// Six-operation trading workflow with `spec.services` implementations per
/// operation, combined according to `spec.strategy`.
///
/// Probabilities of the workflow branches are `x` (expert or normal mode),
/// `y1`, `y2` (after technical analysis: order, watch again, or alarm) and
/// `z1`, `z2` (after fundamental analysis: order, analyse again, or stop).
/// Service `j` of operation `i` succeeds with `p{i}{j}`.
pub fn gen_fx(spec: FxSpec) -> Pdtmc {
    let k = spec.services;
    assert!(k >= 1, "at least one service per operation");
    let mut b = Builder::new();
    let init = b.state();
    let success = b.state();
    let fail = b.state();
    let d1 = b.state();
    let d2 = b.state();
    b.labels.extend([(init, "initial"), (success, SUCCESS_LABEL), (success, FX_SUCCESS_LABEL), (fail, FX_FAIL_LABEL)]);
    let x = b.param("x".into());
    let (y1, y2) = (b.param("y1".into()), b.param("y2".into()));
    let (z1, z2) = (b.param("z1".into()), b.param("z2".into()));

    // entry state of every operation, allocated before wiring so that
    // operations can refer to each other
    let entries: Vec<usize> = (0..OPS).map(|_| b.state()).collect();
    // successor of each operation on success
    let next = [entries[1], d1, success, entries[5], d2, success];

    b.edge(init, entries[0], x.clone());
    b.edge(init, entries[4], format!("1 - {x}"));
    b.edge(d1, entries[3], y1.clone());
    b.edge(d1, entries[0], format!("(1 - {y1})*{y2}"));
    b.edge(d1, entries[2], format!("(1 - {y1})*(1 - {y2})"));
    b.edge(d2, entries[3], z1.clone());
    b.edge(d2, entries[4], format!("(1 - {z1})*{z2}"));
    b.edge(d2, success, format!("(1 - {z1})*(1 - {z2})"));
    b.edge(success, success, "1");
    b.edge(fail, fail, "1");

    for (i, (&entry, &dest)) in entries.iter().zip(&next).enumerate() {
        let op = i + 1;
        let p: Vec<String> = (1..=k).map(|j| b.param(format!("p{op}{j}"))).collect();
        match spec.strategy {
            Strategy::Seq => {
                let states: Vec<usize> = std::iter::once(entry).chain((1..k).map(|_| b.state())).collect();
                for j in 0..k {
                    let on_fail = if j + 1 < k { states[j + 1] } else { fail };
                    b.edge(states[j], dest, p[j].clone());
                    b.edge(states[j], on_fail, format!("1 - {}", p[j]));
                }
            }
            Strategy::SeqR => {
                let r: Vec<String> = (1..=k).map(|j| b.param(format!("r{op}{j}"))).collect();
                let attempts: Vec<usize> = std::iter::once(entry).chain((1..k).map(|_| b.state())).collect();
                let retries: Vec<usize> = (0..k).map(|_| b.state()).collect();
                for j in 0..k {
                    let give_up = if j + 1 < k { attempts[j + 1] } else { fail };
                    b.edge(attempts[j], dest, p[j].clone());
                    b.edge(attempts[j], retries[j], format!("1 - {}", p[j]));
                    b.edge(retries[j], attempts[j], r[j].clone());
                    b.edge(retries[j], give_up, format!("1 - {}", r[j]));
                }
            }
            Strategy::Prob | Strategy::ProbR => {
                let weights = pick_weights(&mut b, op, k);
                let services: Vec<usize> = (0..k).map(|_| b.state()).collect();
                let on_fail = if spec.strategy == Strategy::ProbR {
                    let retry = b.state();
                    if op == 3 {
                        // a failed alarm is always raised again
                        b.edge(retry, entry, "1");
                    } else {
                        let r = b.param(format!("r{op}"));
                        b.edge(retry, entry, r.clone());
                        b.edge(retry, fail, format!("1 - {r}"));
                    }
                    retry
                } else {
                    fail
                };
                for j in 0..k {
                    b.edge(entry, services[j], weights[j].clone());
                    b.edge(services[j], dest, p[j].clone());
                    b.edge(services[j], on_fail, format!("1 - {}", p[j]));
                }
            }
            Strategy::Par => {
                let join = if op == OPS { None } else { Some(b.state()) };
                for mask in 0u32..(1 << k) {
                    let outcome = b.state();
                    let factors: Vec<String> = (0..k)
                        .map(|j| if mask & (1 << j) != 0 { p[j].clone() } else { format!("(1 - {})", p[j]) })
                        .collect();
                    b.edge(entry, outcome, factors.join("*"));
                    let to = if mask == 0 { fail } else { join.unwrap_or(dest) };
                    b.edge(outcome, to, "1");
                }
                if let Some(j) = join {
                    b.edge(j, dest, "1");
                }
            }
        }
    }
    b.build()
}

/// Stick-breaking selection weights over `k` services; each `q{op}{j}` is
/// free in (0,1) and the weights always sum to one.
fn pick_weights(b: &mut Builder, op: usize, k: usize) -> Vec<String> {
    let q: Vec<String> = (1..k).map(|j| b.param(format!("q{op}{j}"))).collect();
    stick_breaking(&q)
}

/// Branch expressions `q0`, `(1 - q0)*q1`, ..., `(1 - q0)*...*(1 - q_last)`.
fn stick_breaking(q: &[String]) -> Vec<String> {
    let k = q.len() + 1;
    (0..k)
        .map(|j| {
            let mut parts: Vec<String> = q[..j].iter().map(|v| format!("(1 - {v})")).collect();
            if j < k - 1 {
                parts.push(q[j].clone());
            }
            if parts.is_empty() {
                "1".to_string()
            } else {
                parts.join("*")
            }
        })
        .collect()
}

/// A population-style chain of `n` stages: stage `i` advances with `a{i}`,
/// and otherwise either stays or drops out with equal probability.
pub fn gen_loop_chain(n: usize) -> Pdtmc {
    assert!(n >= 1);
    let mut b = Builder::new();
    let stages: Vec<usize> = (0..n).map(|_| b.state()).collect();
    let success = b.state();
    let fail = b.state();
    b.labels.extend([(stages[0], "initial"), (success, SUCCESS_LABEL), (fail, "fail")]);
    for i in 0..n {
        let a = b.param(format!("a{}", i + 1));
        let next = if i + 1 < n { stages[i + 1] } else { success };
        b.edge(stages[i], next, a.clone());
        b.edge(stages[i], stages[i], format!("(1 - {a})/2"));
        b.edge(stages[i], fail, format!("(1 - {a})/2"));
    }
    b.edge(success, success, "1");
    b.edge(fail, fail, "1");
    b.build()
}

/// Shape of a random chain for property tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSpec {
    /// Total number of states, at least 3.
    pub states: usize,
    /// Size of the parameter pool, at least 1.
    pub params: usize,
    pub seed: u64,
}

pub const GOAL_LABEL: &str = "goal";

/// A random chain ending in two absorbing states, `goal` and `sink`. Each
/// other state has one to three successors, the first with a larger index,
/// so every run is eventually absorbed. Branch probabilities are stick
/// breaks over pool parameters `v{i}` or small constants.
pub fn gen_random(spec: RandomSpec) -> Pdtmc {
    assert!(spec.states >= 3 && spec.params >= 1);
    let mut sampler = Sampler::new(spec.seed);
    let rng = sampler.rng();
    let mut b = Builder::new();
    let pool: Vec<String> = (0..spec.params).map(|i| b.param(format!("v{i}"))).collect();
    let n = spec.states;
    for _ in 0..n {
        b.state();
    }
    let (goal, sink) = (n - 2, n - 1);
    b.labels.extend([(0, "initial"), (goal, GOAL_LABEL), (sink, "sink")]);
    for s in 0..goal {
        let mut succ = vec![rng.gen_range(s + 1..n)];
        for _ in 0..rng.gen_range(0..=2) {
            let t = rng.gen_range(0..n);
            if !succ.contains(&t) {
                succ.push(t);
            }
        }
        let breaks: Vec<String> = (1..succ.len())
            .map(|_| match rng.gen_range(0..4) {
                0 => ["1/2", "1/3", "3/4"][rng.gen_range(0..3)].to_string(),
                _ => pool[rng.gen_range(0..pool.len())].clone(),
            })
            .collect();
        for (t, p) in succ.into_iter().zip(stick_breaking(&breaks)) {
            b.edge(s, t, p);
        }
    }
    b.edge(goal, goal, "1");
    b.edge(sink, sink, "1");
    b.build()
}

/// Number of parameters kept by [`gen_param_sweep`] for `fraction` of `n`.
pub fn kept_parameter_count(n: usize, fraction: f64) -> usize {
    let kept = (fraction * n as f64 - 1e-9).ceil();
    (kept.max(0.0) as usize).min(n)
}

/// Result of [`gen_param_sweep`].
#[derive(Debug, Clone)]
pub struct SweptModel {
    pub model: Pdtmc,
    /// Substituted parameters of the source model with their values.
    pub fixed: Vec<(ParamId, num_rational::BigRational)>,
    /// For each kept parameter, its id in the source model.
    pub kept: Vec<ParamId>,
}

/// Keeps `⌈fraction·#params⌉` parameters, chosen at random, and fixes the
/// rest to seeded constants in (0.01, 0.99). Draws that would make a
/// parametric transition constant 0 or 1 are rejected and redrawn.
pub fn gen_param_sweep(m: &Pdtmc, fraction: f64, seed: u64) -> SweptModel {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction must lie in (0, 1]");
    let n = m.params().len();
    let keep = kept_parameter_count(n, fraction);
    let mut sampler = Sampler::new(seed);
    let mut order: Vec<ParamId> = m.params().ids().collect();
    order.shuffle(sampler.rng());
    let mut kept: Vec<ParamId> = order[..keep].to_vec();
    kept.sort_unstable();
    let fixed_ids: Vec<ParamId> = order[keep..].to_vec();

    let names: Vec<&str> = kept.iter().map(|&id| m.params().name(id)).collect();
    let table = ParamTable::from_names(names);
    let mut new_id = vec![None; n];
    for (i, &id) in kept.iter().enumerate() {
        new_id[id.index()] = Some(ParamId(i as u32));
    }

    'draw: loop {
        let mut values = vec![None; n];
        let mut fixed = Vec::new();
        for &id in &fixed_ids {
            let v = sampler.value();
            values[id.index()] = Some(v.clone());
            fixed.push((id, v));
        }
        fixed.sort_by_key(|f| f.0);
        let image = |v: ParamId| -> Polynomial {
            match (&values[v.index()], new_id[v.index()]) {
                (Some(c), _) => Polynomial::constant(c.clone()),
                (None, Some(id)) => Polynomial::var(id),
                (None, None) => unreachable!("every parameter is kept or fixed"),
            }
        };
        let mut out = Pdtmc::new(table.clone(), m.n_states(), m.initial());
        for s in m.states() {
            for l in m.labels(s) {
                out.add_label(s, l.clone());
            }
            for (&t, f) in m.row(s) {
                let g: RationalFunction = f.substitute(&image).expect("substituted denominators stay non-zero");
                if !f.is_constant() && (g.is_zero() || g.is_one()) {
                    continue 'draw;
                }
                out.set_transition(s, t, g);
            }
        }
        return SweptModel { model: out, fixed, kept };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{induced_graph, validate_stochastic};
    use crate::sampling::valuations;

    #[test]
    fn intro_shape() {
        let m = gen_fx_intro();
        assert_eq!(m.n_states(), 4);
        assert_eq!(m.n_transitions(), 6);
    }

    #[test]
    fn table_sizes_sample() {
        let m = gen_fx(FxSpec { strategy: Strategy::Seq, services: 2 });
        assert_eq!((m.n_states(), m.n_transitions()), (17, 34));
        let m = gen_fx(FxSpec { strategy: Strategy::SeqR, services: 2 });
        let g = induced_graph(&m);
        assert_eq!((g.n_vertices(), g.n_edges()), (29, 58));
        let m = gen_fx(FxSpec { strategy: Strategy::Prob, services: 5 });
        assert_eq!((m.n_states(), m.n_transitions()), (41, 100));
    }

    #[test]
    fn generated_models_are_stochastic() {
        for strategy in Strategy::ALL {
            for k in 1..=3 {
                let m = gen_fx(FxSpec { strategy, services: k });
                let pts = valuations(m.params(), 5, 11);
                assert!(validate_stochastic(&m, &pts).is_ok(), "{strategy} k={k}");
            }
        }
        let m = gen_loop_chain(4);
        assert!(validate_stochastic(&m, &valuations(m.params(), 5, 3)).is_ok());
    }

    #[test]
    fn random_chains_are_stochastic_and_seeded() {
        for seed in 0..20 {
            let spec = RandomSpec { states: 3 + seed as usize % 12, params: 3, seed };
            let m = gen_random(spec);
            assert_eq!(m.n_states(), spec.states);
            assert!(validate_stochastic(&m, &valuations(m.params(), 5, seed)).is_ok());
            assert_eq!(gen_random(spec), m);
        }
    }

    #[test]
    fn strategy_names_parse() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("seqr".parse::<Strategy>().unwrap(), Strategy::SeqR);
        assert!("zip".parse::<Strategy>().is_err());
    }

    #[test]
    fn sweep_counts() {
        assert_eq!(kept_parameter_count(83, 0.01), 1);
        assert_eq!(kept_parameter_count(83, 1.0), 83);
        assert_eq!(kept_parameter_count(10, 0.5), 5);
        let m = gen_fx(FxSpec { strategy: Strategy::SeqR, services: 2 });
        let full = gen_param_sweep(&m, 1.0, 5);
        assert_eq!(full.model, m);
        let half = gen_param_sweep(&m, 0.5, 5);
        assert_eq!(half.model.params().len(), kept_parameter_count(m.params().len(), 0.5));
        assert_eq!(half.model.n_transitions(), m.n_transitions());
        assert_eq!(gen_param_sweep(&m, 0.5, 5).model, half.model);
    }
}
