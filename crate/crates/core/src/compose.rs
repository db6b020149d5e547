//! Abstract model over fragments and the closed-form equation system.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fragmentation::FragmentSet;
use crate::model::{Pdtmc, StateId};
use crate::pmc::{reach_probability, ElimOptions, PmcError, ReachFormulaMap};
use crate::ratfun::{parse_expr, BinOp, Formula, ParamId, ParamTable, RatFunError, RationalFunction, Valuation, View};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("fragment {fragment}: non-output state {state} leads outside to {succ}")]
    InconsistentCoverage { fragment: usize, state: StateId, succ: StateId },
    #[error("fragment {fragment}: output state {state} leads back into the fragment at {succ}")]
    OutputReentry { fragment: usize, state: StateId, succ: StateId },
    #[error("state {0} belongs to no fragment")]
    Unowned(StateId),
    #[error("no reachability formula for output {output} of fragment {fragment}")]
    MissingFormula { fragment: usize, output: StateId },
    #[error(transparent)]
    Pmc(#[from] PmcError),
    #[error("equation system: {0}")]
    Format(String),
}

/// A parameter standing for the probability of leaving `fragment` through
/// `output`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthParam {
    pub fragment: usize,
    pub output: StateId,
    pub param: ParamId,
    pub name: String,
    pub formula: Formula,
}

/// Chain with one state per fragment; abstract state `i` is fragment `i`.
#[derive(Debug, Clone)]
pub struct AbstractModel {
    pub model: Pdtmc,
    pub synth: Vec<SynthParam>,
    pub n_base_params: usize,
}

impl AbstractModel {
    /// Extends a base valuation with the evaluated fragment formulas.
    pub fn extend_valuation(&self, base: &Valuation) -> Result<Valuation, RatFunError> {
        let mut v = base.clone();
        for s in &self.synth {
            v.set(s.param, s.formula.eval(base)?);
        }
        Ok(v)
    }
}

fn fresh_name(table: &ParamTable, fragment: usize, output: StateId) -> String {
    let mut name = format!("F{fragment}_{output}");
    while table.id(&name).is_some() {
        name.push('_');
    }
    name
}

/// Collapses every fragment of `m` into one state. Leaving fragment `f`
/// through output `z` along `z -p-> s` becomes an edge to the owner of `s`
/// with probability `σ(f,z)·p`, where `σ(f,z)` is a fresh parameter bound to
/// the fragment formula, or the formula itself when it is constant. Edges to
/// the owner's own input become self-loops.
pub fn build_abstract(m: &Pdtmc, fs: &FragmentSet, reach: &[ReachFormulaMap]) -> Result<AbstractModel, ComposeError> {
    let mut params = m.params().clone();
    let n_base = params.len();
    let mut synth = Vec::new();
    // per fragment, weight of each output
    let mut weights: Vec<BTreeMap<StateId, RationalFunction>> = Vec::with_capacity(fs.len());
    for (fi, f) in fs.fragments().iter().enumerate() {
        let mut w = BTreeMap::new();
        for &z in &f.outputs {
            let formula = reach
                .get(fi)
                .and_then(|r| r.get(&z))
                .cloned()
                .ok_or(ComposeError::MissingFormula { fragment: fi, output: z })?;
            if let Some(c) = formula.constant_value() {
                w.insert(z, RationalFunction::constant(c.clone()));
            } else {
                let name = fresh_name(&params, fi, z);
                let id = params.declare(name.as_str());
                synth.push(SynthParam { fragment: fi, output: z, param: id, name, formula });
                w.insert(z, RationalFunction::var(id));
            }
        }
        weights.push(w);
    }

    let owner = |s: StateId| fs.owner(s).ok_or(ComposeError::Unowned(s));
    let initial = owner(m.initial())?;
    let mut out = Pdtmc::new(params, fs.len(), StateId(initial as u32));
    for (fi, f) in fs.fragments().iter().enumerate() {
        let a = StateId(fi as u32);
        for &s in &f.states {
            for l in m.labels(s) {
                out.add_label(a, l.clone());
            }
            let weight = weights[fi].get(&s);
            for (&t, p) in m.row(s) {
                let to = owner(t)?;
                if weight.is_none() {
                    if to != fi {
                        return Err(ComposeError::InconsistentCoverage { fragment: fi, state: s, succ: t });
                    }
                    continue;
                }
                if to == fi && t != f.input && !f.is_single() {
                    return Err(ComposeError::OutputReentry { fragment: fi, state: s, succ: t });
                }
                let w = weight.expect("checked above");
                out.add_transition(a, StateId(to as u32), w.mul(p));
            }
        }
    }
    Ok(AbstractModel { model: out, synth, n_base_params: n_base })
}

/// A named formula; `param` is set for fragment formulas that the result
/// refers to by parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub name: String,
    pub param: Option<ParamId>,
    pub formula: RationalFunction,
}

/// Ordered bindings ending in `result`; every binding refers only to base
/// parameters and the parameters of earlier bindings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquationSystem {
    pub params: ParamTable,
    pub n_base_params: usize,
    pub bindings: Vec<Binding>,
}

pub const RESULT_NAME: &str = "result";

impl EquationSystem {
    /// A system consisting of a single formula over the base parameters.
    pub fn single(params: ParamTable, formula: RationalFunction) -> Self {
        let n = params.len();
        EquationSystem {
            params,
            n_base_params: n,
            bindings: vec![Binding { name: RESULT_NAME.into(), param: None, formula }],
        }
    }

    pub fn result(&self) -> &RationalFunction {
        &self.bindings.last().expect("result binding").formula
    }

    pub fn base_params(&self) -> Vec<&str> {
        self.params.names()[..self.n_base_params].iter().map(String::as_str).collect()
    }

    pub fn op_count(&self) -> usize {
        self.bindings.iter().map(|b| b.formula.op_count()).sum()
    }

    /// Evaluates the bindings in order and returns the value of `result`.
    pub fn evaluate(&self, point: &Valuation) -> Result<BigRational, RatFunError> {
        let mut v = point.clone();
        let mut last = None;
        for b in &self.bindings {
            let x = b.formula.eval(&v)?;
            if let Some(id) = b.param {
                v.set(id, x.clone());
            }
            last = Some(x);
        }
        Ok(last.expect("result binding"))
    }

    /// Binding parameters referenced before being bound.
    pub fn unbound_references(&self) -> Vec<String> {
        let mut bound: BTreeSet<ParamId> = (0..self.n_base_params as u32).map(ParamId).collect();
        let mut bad = Vec::new();
        for b in &self.bindings {
            for v in b.formula.vars() {
                if !bound.contains(&v) {
                    bad.push(self.params.name(v).to_string());
                }
            }
            if let Some(id) = b.param {
                bound.insert(id);
            }
        }
        bad
    }

    pub fn to_json(&self) -> SystemJson {
        SystemJson {
            params: self.base_params().iter().map(|s| s.to_string()).collect(),
            bindings: self
                .bindings
                .iter()
                .map(|b| BindingJson { name: b.name.clone(), formula: b.formula.display(&self.params).to_string() })
                .collect(),
            result: RESULT_NAME.to_string(),
            op_count: self.op_count(),
        }
    }

    pub fn from_json(j: &SystemJson) -> Result<Self, ComposeError> {
        let mut params = ParamTable::from_names(j.params.iter().map(String::as_str));
        let n_base = params.len();
        let mut bindings = Vec::new();
        let last = j.bindings.len().checked_sub(1).ok_or_else(|| ComposeError::Format("no bindings".into()))?;
        for (i, b) in j.bindings.iter().enumerate() {
            let formula =
                parse_expr(&b.formula, &params).map_err(|e| ComposeError::Format(format!("{}: {e}", b.name)))?;
            let param = if i == last {
                if b.name != j.result {
                    return Err(ComposeError::Format(format!("last binding is `{}`, expected `{}`", b.name, j.result)));
                }
                None
            } else {
                if params.id(&b.name).is_some() {
                    return Err(ComposeError::Format(format!("`{}` bound twice", b.name)));
                }
                Some(params.declare(b.name.as_str()))
            };
            bindings.push(Binding { name: b.name.clone(), param, formula });
        }
        Ok(EquationSystem { params, n_base_params: n_base, bindings })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingJson {
    pub name: String,
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemJson {
    pub params: Vec<String>,
    pub bindings: Vec<BindingJson>,
    pub result: String,
    pub op_count: usize,
}

/// Solves the abstract model for the fragments holding `targets` and binds
/// the fragment formulas before the result. With `inline`, fragment
/// parameters are replaced by their formulas instead.
pub fn compose_system(
    abs: &AbstractModel,
    fs: &FragmentSet,
    targets: &BTreeSet<StateId>,
    opts: &ElimOptions,
    inline: bool,
) -> Result<EquationSystem, ComposeError> {
    let mut abstract_targets = BTreeSet::new();
    for &t in targets {
        let fi = fs.owner(t).ok_or(ComposeError::Unowned(t))?;
        abstract_targets.insert(StateId(fi as u32));
    }
    let mut result = reach_probability(&abs.model, &abstract_targets, opts)?;
    let mut params = abs.model.params().clone();
    let mut roots: Vec<(String, Option<ParamId>, &Formula)> = Vec::new();
    if inline {
        let image: HashMap<ParamId, &Formula> = abs.synth.iter().map(|s| (s.param, &s.formula)).collect();
        result =
            result.substitute(&|v| image.get(&v).map(|f| (*f).clone()), opts.arithmetic).map_err(PmcError::from)?;
        params = ParamTable::from_names(params.names()[..abs.n_base_params].iter().cloned());
    } else {
        roots.extend(abs.synth.iter().map(|s| (s.name.clone(), Some(s.param), &s.formula)));
    }
    roots.push((RESULT_NAME.into(), None, &result));
    Ok(linearize(params, abs.n_base_params, &roots))
}

impl EquationSystem {
    /// Bindings computing `f` over the parameters of `params`.
    pub fn from_formula(params: ParamTable, f: &Formula) -> Self {
        let n = params.len();
        linearize(params, n, &[(RESULT_NAME.into(), None, f)])
    }
}

/// Turns formula graphs into bindings: every operation node becomes one
/// binding over fresh `_t` parameters, and leaves that are shared and not
/// trivial get their own binding too. Roots keep their given names.
fn linearize(mut params: ParamTable, n_base: usize, roots: &[(String, Option<ParamId>, &Formula)]) -> EquationSystem {
    let mut uses: HashMap<usize, usize> = HashMap::new();
    let all: Vec<&Formula> = roots.iter().map(|r| r.2).collect();
    Formula::for_each_postorder(&all, |f| {
        if let View::Binary(_, a, b) = f.view() {
            *uses.entry(a.key()).or_default() += 1;
            *uses.entry(b.key()).or_default() += 1;
        }
    });
    let mut bound: HashMap<usize, ParamId> = HashMap::new();
    let mut bindings: Vec<Binding> = Vec::new();
    let mut temps = 0usize;
    let mut fresh = |params: &mut ParamTable| -> (String, ParamId) {
        loop {
            let name = format!("_t{temps}");
            temps += 1;
            if params.id(&name).is_none() {
                let id = params.declare(name.as_str());
                return (name, id);
            }
        }
    };

    for (name, param, root) in roots {
        let mut pending: Vec<Formula> = Vec::new();
        Formula::for_each_postorder(&[*root], |f| {
            if !bound.contains_key(&f.key()) {
                pending.push(f.clone());
            }
        });
        for f in pending {
            let is_root = f.key() == root.key();
            let formula = match f.view() {
                View::Leaf(r) => {
                    let shared = uses.get(&f.key()).copied().unwrap_or(0) > 1 && r.op_count() > 1;
                    if !is_root && !shared {
                        continue;
                    }
                    r.clone()
                }
                View::Binary(op, a, b) => {
                    let side = |g: &Formula, bound: &HashMap<usize, ParamId>| match bound.get(&g.key()) {
                        Some(&id) => RationalFunction::var(id),
                        None => g.as_rational().expect("operands are bound or leaves").clone(),
                    };
                    let (sa, sb) = (side(a, &bound), side(b, &bound));
                    let joint = apply(op, &sa, &sb);
                    if joint.op_count() <= sa.op_count() + sb.op_count() + 1 {
                        joint
                    } else {
                        // evaluating the leaves separately is cheaper
                        for g in [a, b] {
                            if !bound.contains_key(&g.key()) && g.as_rational().is_some_and(|r| r.op_count() > 0) {
                                let (n, id) = fresh(&mut params);
                                bound.insert(g.key(), id);
                                bindings.push(Binding { name: n, param: Some(id), formula: side(g, &HashMap::new()) });
                            }
                        }
                        apply(op, &side(a, &bound), &side(b, &bound))
                    }
                }
            };
            let (bname, bparam) = if is_root {
                match param {
                    Some(id) => (name.clone(), Some(*id)),
                    None => (name.clone(), None),
                }
            } else {
                let (n, id) = fresh(&mut params);
                (n, Some(id))
            };
            if let Some(id) = bparam {
                bound.insert(f.key(), id);
            }
            bindings.push(Binding { name: bname, param: bparam, formula });
        }
        if let Some(&id) = bound.get(&root.key()) {
            if bindings.last().is_none_or(|b| b.name != *name) {
                // root already bound under another name
                bindings.push(Binding { name: name.clone(), param: *param, formula: RationalFunction::var(id) });
            }
        }
    }
    EquationSystem { params, n_base_params: n_base, bindings }
}

fn apply(op: BinOp, a: &RationalFunction, b: &RationalFunction) -> RationalFunction {
    match op {
        BinOp::Add => a.add(b),
        BinOp::Sub => a.sub(b),
        BinOp::Mul => a.mul(b),
        BinOp::Div => a.div(b).expect("divisor node is not identically zero"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratfun::parse_rational;

    #[test]
    fn json_round_trip() {
        let params = ParamTable::from_names(["p", "q"]);
        let mut ext = params.clone();
        let s = ext.declare("F1_2");
        let f = parse_expr("p*(1 - q)", &params).unwrap();
        let g = parse_expr("F1_2/(1 - q*F1_2)", &ext).unwrap();
        let sys = EquationSystem {
            params: ext,
            n_base_params: 2,
            bindings: vec![
                Binding { name: "F1_2".into(), param: Some(s), formula: f },
                Binding { name: RESULT_NAME.into(), param: None, formula: g },
            ],
        };
        assert!(sys.unbound_references().is_empty());
        let back = EquationSystem::from_json(&sys.to_json()).unwrap();
        assert_eq!(back, sys);
        let v = Valuation::from_values(vec![parse_rational("1/2").unwrap(), parse_rational("1/3").unwrap()]);
        // F = 1/3, result = (1/3)/(1 - 1/9) = 3/8
        assert_eq!(sys.evaluate(&v).unwrap(), parse_rational("3/8").unwrap());
    }

    #[test]
    fn constant_system_costs_nothing() {
        let sys = EquationSystem::single(ParamTable::new(), RationalFunction::one());
        assert_eq!(sys.op_count(), 0);
        assert_eq!(sys.bindings.len(), 1);
    }
}
