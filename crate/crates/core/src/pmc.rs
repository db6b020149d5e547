//! Parametric reachability by state elimination.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::fragmentation::{Fragment, FragmentSet};
use crate::model::{induced_graph, Pdtmc, StateId};
use crate::ratfun::{Arithmetic, BinOp, Formula, RatFunError, RationalFunction};

/// Reachability formula per target state.
pub type ReachFormulaMap = BTreeMap<StateId, Formula>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PmcError {
    #[error("state {0} has a self-loop of probability one but is not a target")]
    SelfLoopProbabilityOne(StateId),
    #[error("empty target set")]
    EmptyTargets,
    #[error("state elimination exceeded its deadline")]
    Timeout,
    #[error("single-state fragments have no fragment model")]
    SingleStateFragment,
    #[error(transparent)]
    RatFun(#[from] RatFunError),
}

/// Order in which transient states are eliminated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum EliminationOrder {
    /// Smallest current out-degree first, ties by ascending id.
    #[default]
    MinOutDegree,
    /// Ascending id.
    Ascending,
    /// Descending id.
    Descending,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ElimOptions {
    pub order: EliminationOrder,
    pub deadline: Option<Instant>,
    pub arithmetic: Arithmetic,
}

/// `Pr[F {t}]` from the initial state for each target `t`, all targets
/// absorbing.
pub fn eliminate_reach(m: &Pdtmc, targets: &BTreeSet<StateId>) -> Result<ReachFormulaMap, PmcError> {
    eliminate_reach_with(m, targets, &ElimOptions::default())
}

/// Probability of reaching any state of `targets`.
pub fn reach_probability(m: &Pdtmc, targets: &BTreeSet<StateId>, opts: &ElimOptions) -> Result<Formula, PmcError> {
    let map = eliminate_reach_with(m, targets, opts)?;
    let mut sum = Formula::zero();
    for f in map.values() {
        sum = sum.apply(BinOp::Add, f, opts.arithmetic)?;
    }
    Ok(sum)
}

pub fn eliminate_reach_with(
    m: &Pdtmc,
    targets: &BTreeSet<StateId>,
    opts: &ElimOptions,
) -> Result<ReachFormulaMap, PmcError> {
    if targets.is_empty() {
        return Err(PmcError::EmptyTargets);
    }
    let ar = opts.arithmetic;
    let init = m.initial();
    let mut result: ReachFormulaMap = targets.iter().map(|&t| (t, Formula::zero())).collect();
    if targets.contains(&init) {
        result.insert(init, Formula::one());
        return Ok(result);
    }

    let n = m.n_states();
    let is_target: Vec<bool> = (0..n).map(|i| targets.contains(&StateId(i as u32))).collect();

    // graph pre-pass on the chain with absorbing targets
    let graph = induced_graph(m);
    let mut fwd = vec![false; n];
    let mut stack = vec![init];
    fwd[init.index()] = true;
    while let Some(v) = stack.pop() {
        if is_target[v.index()] {
            continue;
        }
        for &w in graph.successors(v) {
            if !fwd[w.index()] {
                fwd[w.index()] = true;
                stack.push(w);
            }
        }
    }
    let goal: Vec<StateId> = targets.iter().copied().filter(|t| fwd[t.index()]).collect();
    let mut bwd = vec![false; n];
    for &t in &goal {
        bwd[t.index()] = true;
    }
    let mut stack = goal.clone();
    while let Some(v) = stack.pop() {
        for &u in graph.predecessors(v) {
            if fwd[u.index()] && !bwd[u.index()] && !is_target[u.index()] {
                bwd[u.index()] = true;
                stack.push(u);
            }
        }
    }
    if !bwd[init.index()] {
        return Ok(result);
    }
    let keep: Vec<bool> = (0..n).map(|i| fwd[i] && bwd[i]).collect();

    let mut out: Vec<BTreeMap<usize, Formula>> = vec![BTreeMap::new(); n];
    let mut inc: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for s in m.states() {
        let i = s.index();
        if !keep[i] || is_target[i] {
            continue;
        }
        for (t, f) in m.row(s) {
            if keep[t.index()] {
                out[i].insert(t.index(), Formula::leaf(f.clone()));
                inc[t.index()].insert(i);
            }
        }
    }

    let eliminable: Vec<usize> = (0..n).filter(|&i| keep[i] && !is_target[i] && i != init.index()).collect();
    let mut queue: BTreeSet<(usize, usize)> = BTreeSet::new();
    let key = |i: usize, out: &[BTreeMap<usize, Formula>]| -> usize {
        match opts.order {
            EliminationOrder::MinOutDegree => out[i].len(),
            EliminationOrder::Ascending => 0,
            EliminationOrder::Descending => n - i,
        }
    };
    let mut current_key = vec![0usize; n];
    for &i in &eliminable {
        current_key[i] = key(i, &out);
        queue.insert((current_key[i], i));
    }
    let mut eliminated = vec![false; n];

    while let Some((_, v)) = queue.pop_first() {
        if let Some(deadline) = opts.deadline {
            if Instant::now() > deadline {
                return Err(PmcError::Timeout);
            }
        }
        eliminated[v] = true;
        let mut row = std::mem::take(&mut out[v]);
        inc[v].remove(&v);
        let self_loop = row.remove(&v);
        let scale = match self_loop {
            Some(l) => {
                let d = Formula::one().apply(BinOp::Sub, &l, ar)?;
                if d.is_zero() {
                    return Err(PmcError::SelfLoopProbabilityOne(StateId(v as u32)));
                }
                Some(Formula::one().apply(BinOp::Div, &d, ar)?)
            }
            None => None,
        };
        let mut succ: Vec<(usize, Formula)> = Vec::with_capacity(row.len());
        for (w, p) in row {
            let p = match &scale {
                Some(s) => p.apply(BinOp::Mul, s, ar)?,
                None => p,
            };
            succ.push((w, p));
        }
        for &(w, _) in &succ {
            inc[w].remove(&v);
        }
        let preds: Vec<usize> = std::mem::take(&mut inc[v]).into_iter().collect();
        for u in preds {
            let p_uv = out[u].remove(&v).expect("predecessor lists are consistent");
            for (w, q) in &succ {
                let contrib = p_uv.apply(BinOp::Mul, q, ar)?;
                match out[u].get_mut(w) {
                    Some(existing) => {
                        let sum = existing.apply(BinOp::Add, &contrib, ar)?;
                        if sum.is_zero() {
                            out[u].remove(w);
                            inc[*w].remove(&u);
                        } else {
                            *existing = sum;
                        }
                    }
                    None => {
                        if !contrib.is_zero() {
                            out[u].insert(*w, contrib);
                            inc[*w].insert(u);
                        }
                    }
                }
            }
            if !eliminated[u] && u != init.index() && opts.order == EliminationOrder::MinOutDegree {
                let k = out[u].len();
                if k != current_key[u] {
                    queue.remove(&(current_key[u], u));
                    current_key[u] = k;
                    queue.insert((k, u));
                }
            }
        }
    }

    let i0 = init.index();
    let scale = match out[i0].get(&i0) {
        Some(l) => {
            let d = Formula::one().apply(BinOp::Sub, l, ar)?;
            if d.is_zero() {
                return Err(PmcError::SelfLoopProbabilityOne(init));
            }
            Some(Formula::one().apply(BinOp::Div, &d, ar)?)
        }
        None => None,
    };
    for (&t, f) in &out[i0] {
        if t == i0 {
            continue;
        }
        debug_assert!(is_target[t]);
        let v = match &scale {
            Some(s) => f.apply(BinOp::Mul, s, ar)?,
            None => f.clone(),
        };
        result.insert(StateId(t as u32), v);
    }
    Ok(result)
}

/// Sub-model of a multi-state fragment: the fragment's states only, entered
/// at its input, with every output state made absorbing.
#[derive(Debug, Clone)]
pub struct FragmentModel {
    pub model: Pdtmc,
    /// Global id of each local state.
    pub global: Vec<StateId>,
    /// Local ids of the output states.
    pub outputs: BTreeSet<StateId>,
}

pub fn fragment_model(m: &Pdtmc, f: &Fragment) -> Result<FragmentModel, PmcError> {
    if f.is_single() {
        return Err(PmcError::SingleStateFragment);
    }
    let global: Vec<StateId> = f.states.iter().copied().collect();
    let local = |s: StateId| global.binary_search(&s).ok().map(|i| StateId(i as u32));
    let initial = local(f.input).expect("input lies in the fragment");
    let mut model = Pdtmc::new(m.params().clone(), global.len(), initial);
    let mut outputs = BTreeSet::new();
    for (i, &s) in global.iter().enumerate() {
        let li = StateId(i as u32);
        for l in m.labels(s) {
            model.add_label(li, l.clone());
        }
        if f.outputs.contains(&s) {
            model.set_transition(li, li, RationalFunction::one());
            outputs.insert(li);
            continue;
        }
        for (&t, p) in m.row(s) {
            // valid fragments have no other edges leaving from non-outputs
            if let Some(lt) = local(t) {
                model.add_transition(li, lt, p.clone());
            }
        }
    }
    Ok(FragmentModel { model, global, outputs })
}

/// Formulas for reaching each output of `f` from its input.
pub fn fragment_reach_all(m: &Pdtmc, f: &Fragment, opts: &ElimOptions) -> Result<ReachFormulaMap, PmcError> {
    if f.is_single() {
        return Ok([(f.input, Formula::one())].into());
    }
    let fm = fragment_model(m, f)?;
    let local = eliminate_reach_with(&fm.model, &fm.outputs, opts)?;
    Ok(local.into_iter().map(|(t, formula)| (fm.global[t.index()], formula)).collect())
}

/// Output formulas for every fragment, computed on a pool of `threads`
/// workers (0 = rayon default). Results are in fragment order.
pub fn reach_all_fragments(
    m: &Pdtmc,
    fs: &FragmentSet,
    threads: usize,
    opts: &ElimOptions,
) -> Result<Vec<ReachFormulaMap>, PmcError> {
    let work = || -> Result<Vec<ReachFormulaMap>, PmcError> {
        fs.fragments().par_iter().map(|f| fragment_reach_all(m, f, opts)).collect()
    };
    if threads == 1 {
        return fs.fragments().iter().map(|f| fragment_reach_all(m, f, opts)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::ratfun::Valuation;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn retry_loop() {
        let m = parse_model(
            "param p\nparam r\ninit 0\ntrans 0 1 p\ntrans 0 0 (1-p)*r\ntrans 0 2 (1-p)*(1-r)\ntrans 1 1 1\ntrans 2 2 1\n",
        )
        .unwrap();
        let res = eliminate_reach(&m, &[StateId(1)].into()).unwrap();
        let f = &res[&StateId(1)];
        let v = Valuation::from_values(vec![r(1, 2), r(1, 2)]);
        assert_eq!(f.eval(&v).unwrap(), r(2, 3));
    }

    #[test]
    fn target_is_initial() {
        let m = parse_model("init 0\ntrans 0 1 1\ntrans 1 1 1\n").unwrap();
        let res = eliminate_reach(&m, &[StateId(0)].into()).unwrap();
        assert!(res[&StateId(0)].is_one());
    }

    #[test]
    fn unreachable_target_is_zero() {
        let m = parse_model("init 0\ntrans 0 1 1\ntrans 1 1 1\ntrans 2 2 1\n").unwrap();
        let res = eliminate_reach(&m, &[StateId(2)].into()).unwrap();
        assert!(res[&StateId(2)].is_zero());
    }

    #[test]
    fn absorbing_non_target_on_a_path_is_an_error() {
        // malformed row: a probability-one self-loop next to another edge
        let m = parse_model("init 0\ntrans 0 1 1\ntrans 1 1 1\ntrans 1 2 1/2\ntrans 2 2 1\n").unwrap();
        assert_eq!(eliminate_reach(&m, &[StateId(2)].into()), Err(PmcError::SelfLoopProbabilityOne(StateId(1))));
    }

    #[test]
    fn orders_agree() {
        let m = parse_model(
            "param a\nparam b\ninit 0\ntrans 0 1 a\ntrans 0 2 1-a\ntrans 1 0 b\ntrans 1 3 1-b\ntrans 2 1 a\ntrans 2 4 1-a\ntrans 3 3 1\ntrans 4 4 1\n",
        )
        .unwrap();
        let t: BTreeSet<StateId> = [StateId(3)].into();
        let v = Valuation::from_values(vec![r(1, 3), r(2, 7)]);
        let mut values = Vec::new();
        for order in [EliminationOrder::MinOutDegree, EliminationOrder::Ascending, EliminationOrder::Descending] {
            let f = reach_probability(&m, &t, &ElimOptions { order, ..Default::default() }).unwrap();
            values.push(f.eval(&v).unwrap());
        }
        assert!(values.windows(2).all(|w| w[0] == w[1]));
    }
}
