//! Partitioning a chain into single-input fragments, with the two
//! reachability-preserving restructurings that enable fragment formation.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{induced_graph, InducedGraph, Pdtmc, StateId};
use crate::ratfun::RationalFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FragmentKind {
    Multi,
    Single,
}

/// States `states` entered only through `input`, left only from `outputs`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub states: BTreeSet<StateId>,
    pub input: StateId,
    pub outputs: BTreeSet<StateId>,
    pub kind: FragmentKind,
}

impl Fragment {
    pub fn single(s: StateId) -> Self {
        Fragment { states: [s].into(), input: s, outputs: [s].into(), kind: FragmentKind::Single }
    }

    pub fn is_single(&self) -> bool {
        self.kind == FragmentKind::Single
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Disjoint fragments plus the owning fragment of every state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FragmentSet {
    fragments: Vec<Fragment>,
    owner: Vec<Option<usize>>,
}

impl FragmentSet {
    pub fn new(n_states: usize) -> Self {
        FragmentSet { fragments: Vec::new(), owner: vec![None; n_states] }
    }

    pub fn push(&mut self, f: Fragment) -> usize {
        let idx = self.fragments.len();
        for &s in &f.states {
            if self.owner.len() <= s.index() {
                self.owner.resize(s.index() + 1, None);
            }
            assert!(self.owner[s.index()].is_none(), "state {s} already owned");
            self.owner[s.index()] = Some(idx);
        }
        self.fragments.push(f);
        idx
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.fragments
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    pub fn owner(&self, s: StateId) -> Option<usize> {
        self.owner.get(s.index()).copied().flatten()
    }

    pub fn n_multi(&self) -> usize {
        self.fragments.iter().filter(|f| !f.is_single()).count()
    }

    /// True when every one of the `n_states` states has exactly one owner.
    pub fn is_partition(&self, n_states: usize) -> bool {
        self.owner.len() >= n_states
            && self.owner[..n_states].iter().all(Option::is_some)
            && self.fragments.iter().map(Fragment::len).sum::<usize>() == n_states
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RestructureError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("state {0} keeps successors inside the fragment")]
    InapplicableWhenZRetainsInternalSuccessors(StateId),
}

/// Inserts one auxiliary state per successor of `z` outside `inside`:
/// `z -p-> s` becomes `z -p-> aux -1-> s`. A self-loop on `z` counts as an
/// inside successor when `z` is in `inside`.
pub fn restructure_split(
    m: &mut Pdtmc,
    z: StateId,
    inside: &BTreeSet<StateId>,
) -> Result<Vec<StateId>, RestructureError> {
    let row: Vec<(StateId, RationalFunction)> = m.row(z).iter().map(|(t, f)| (*t, f.clone())).collect();
    let outside: Vec<&(StateId, RationalFunction)> = row.iter().filter(|(t, _)| !inside.contains(t)).collect();
    if outside.is_empty() {
        return Err(RestructureError::PreconditionViolated(format!("state {z} has no outside successor")));
    }
    if outside.len() == row.len() {
        return Err(RestructureError::PreconditionViolated(format!("state {z} has no inside successor")));
    }
    let mut created = Vec::with_capacity(outside.len());
    for (s, p) in outside {
        let aux = m.add_state();
        m.remove_transition(z, *s);
        m.set_transition(z, aux, p.clone());
        m.set_transition(aux, *s, RationalFunction::one());
        created.push(aux);
    }
    Ok(created)
}

/// An edge `from -> via` replaced by `from -> to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EdgeRewrite {
    pub from: StateId,
    pub via: StateId,
    pub to: StateId,
}

/// Reroutes every edge into `z` from outside `inside` directly to the
/// successors of `z`, with product probabilities. `input`, if given, is the
/// one inside state `z` may still lead to; any other inside successor, or a
/// self-loop, makes the rewrite inapplicable.
pub fn restructure_bypass(
    m: &mut Pdtmc,
    z: StateId,
    inside: &BTreeSet<StateId>,
    input: Option<StateId>,
) -> Result<Vec<EdgeRewrite>, RestructureError> {
    let graph = induced_graph(m);
    let external: Vec<StateId> =
        graph.predecessors(z).iter().copied().filter(|s| *s != z && !inside.contains(s)).collect();
    if external.is_empty() {
        return Err(RestructureError::PreconditionViolated(format!("state {z} has no outside predecessor")));
    }
    let succ: Vec<(StateId, RationalFunction)> = m.row(z).iter().map(|(t, f)| (*t, f.clone())).collect();
    if !succ.iter().any(|(t, _)| !inside.contains(t) && *t != z) {
        return Err(RestructureError::PreconditionViolated(format!("state {z} has no outside successor")));
    }
    if succ.iter().any(|(t, _)| *t == z || (inside.contains(t) && Some(*t) != input)) {
        return Err(RestructureError::InapplicableWhenZRetainsInternalSuccessors(z));
    }
    let mut rewrites = Vec::new();
    for s in external {
        let p = m.remove_transition(s, z).expect("edge from predecessor");
        for (t, q) in &succ {
            m.add_transition(s, *t, p.mul(q));
            rewrites.push(EdgeRewrite { from: s, via: z, to: *t });
        }
    }
    Ok(rewrites)
}

/// Why a fragment candidate is not a valid fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FragmentViolation {
    InputNotInFragment,
    NoOutputs,
    OutputNotInFragment(StateId),
    ExternalPredecessor { state: StateId, pred: StateId },
    OutputReentersFragment { output: StateId, succ: StateId },
    LeavesFromNonOutput { state: StateId, succ: StateId },
    InitialNotInput(StateId),
    NotTransient(StateId),
}

impl fmt::Display for FragmentViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FragmentViolation::InputNotInFragment => f.write_str("input is not a member"),
            FragmentViolation::NoOutputs => f.write_str("no output states"),
            FragmentViolation::OutputNotInFragment(s) => write!(f, "output {s} is not a member"),
            FragmentViolation::ExternalPredecessor { state, pred } => {
                write!(f, "non-input state {state} has outside predecessor {pred}")
            }
            FragmentViolation::OutputReentersFragment { output, succ } => {
                write!(f, "output {output} leads back to member {succ}")
            }
            FragmentViolation::LeavesFromNonOutput { state, succ } => {
                write!(f, "non-output {state} leads to outside state {succ}")
            }
            FragmentViolation::InitialNotInput(s) => write!(f, "initial state {s} is a non-input member"),
            FragmentViolation::NotTransient(s) => write!(f, "state {s} cannot reach an output"),
        }
    }
}

/// Checks every multi-state fragment condition; single-state fragments are
/// valid by definition.
pub fn check_fragment(m: &Pdtmc, graph: &InducedGraph, f: &Fragment) -> Result<(), FragmentViolation> {
    if f.is_single() {
        return Ok(());
    }
    let z = &f.states;
    if !z.contains(&f.input) {
        return Err(FragmentViolation::InputNotInFragment);
    }
    if f.outputs.is_empty() {
        return Err(FragmentViolation::NoOutputs);
    }
    for &o in &f.outputs {
        if !z.contains(&o) {
            return Err(FragmentViolation::OutputNotInFragment(o));
        }
    }
    if z.contains(&m.initial()) && m.initial() != f.input {
        return Err(FragmentViolation::InitialNotInput(m.initial()));
    }
    for &s in z {
        if s != f.input {
            if let Some(&p) = graph.predecessors(s).iter().find(|p| !z.contains(p)) {
                return Err(FragmentViolation::ExternalPredecessor { state: s, pred: p });
            }
        }
        if f.outputs.contains(&s) {
            if let Some(&t) = graph.successors(s).iter().find(|t| z.contains(t) && **t != f.input) {
                return Err(FragmentViolation::OutputReentersFragment { output: s, succ: t });
            }
        } else if let Some(&t) = graph.successors(s).iter().find(|t| !z.contains(t)) {
            return Err(FragmentViolation::LeavesFromNonOutput { state: s, succ: t });
        }
    }
    // transience: every member reaches an output without leaving
    let mut reaches: BTreeSet<StateId> = f.outputs.clone();
    let mut stack: Vec<StateId> = f.outputs.iter().copied().collect();
    while let Some(v) = stack.pop() {
        for &u in graph.predecessors(v) {
            if z.contains(&u) && !f.outputs.contains(&u) && reaches.insert(u) {
                stack.push(u);
            }
        }
    }
    if let Some(&s) = z.iter().find(|s| !reaches.contains(s)) {
        return Err(FragmentViolation::NotTransient(s));
    }
    Ok(())
}

pub fn validate_fragment(m: &Pdtmc, f: &Fragment) -> bool {
    check_fragment(m, &induced_graph(m), f).is_ok()
}

/// Order in which unassigned states are tried as fragment inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum InputOrder {
    #[default]
    Ascending,
    Descending,
}

/// Audit record of what fragmentation did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum FragEvent {
    Split { state: StateId, aux: Vec<StateId> },
    Bypass { state: StateId, rewrites: Vec<EdgeRewrite> },
    RestructureSkipped { state: StateId, reason: String },
    PredecessorAssigned { state: StateId, input: StateId },
    Downgrade { input: StateId, reason: String },
}

#[derive(Debug, Clone)]
pub struct FragOptions {
    pub alpha: usize,
    pub order: InputOrder,
}

impl Default for FragOptions {
    fn default() -> Self {
        FragOptions { alpha: 6, order: InputOrder::Ascending }
    }
}

/// Output of [`fragmentation`].
#[derive(Debug, Clone)]
pub struct Fragmentation {
    /// The chain after restructuring; auxiliary states are appended.
    pub model: Pdtmc,
    pub fragments: FragmentSet,
    pub events: Vec<FragEvent>,
    pub n_original_states: usize,
}

impl Fragmentation {
    pub fn is_auxiliary(&self, s: StateId) -> bool {
        s.index() >= self.n_original_states
    }
}

struct Ctx {
    model: Pdtmc,
    graph: InducedGraph,
    assigned: Vec<bool>,
    fs: FragmentSet,
    events: Vec<FragEvent>,
    aux_budget: usize,
}

struct Candidate {
    input: StateId,
    members: BTreeSet<StateId>,
    stack: Vec<StateId>,
    pending: BTreeSet<StateId>,
}

impl Candidate {
    fn push(&mut self, s: StateId) {
        if !self.members.contains(&s) && self.pending.insert(s) {
            self.stack.push(s);
        }
    }
}

enum Step {
    Continue,
    Abandon,
}

impl Ctx {
    fn is_assigned(&self, s: StateId) -> bool {
        self.assigned.get(s.index()).copied().unwrap_or(false)
    }

    fn assign(&mut self, f: Fragment) {
        for &s in &f.states {
            if self.assigned.len() <= s.index() {
                self.assigned.resize(s.index() + 1, false);
            }
            self.assigned[s.index()] = true;
        }
        self.fs.push(f);
    }

    fn refresh(&mut self) {
        self.graph = induced_graph(&self.model);
        if self.assigned.len() < self.model.n_states() {
            self.assigned.resize(self.model.n_states(), false);
        }
    }

    fn split(&mut self, z: StateId, inside: &BTreeSet<StateId>) -> Option<Vec<StateId>> {
        let outside = self.graph.successors(z).iter().filter(|t| !inside.contains(t)).count();
        if outside > self.aux_budget {
            self.events.push(FragEvent::RestructureSkipped { state: z, reason: "auxiliary state budget".into() });
            return None;
        }
        match restructure_split(&mut self.model, z, inside) {
            Ok(aux) => {
                self.aux_budget -= aux.len();
                self.refresh();
                self.events.push(FragEvent::Split { state: z, aux: aux.clone() });
                Some(aux)
            }
            Err(e) => {
                self.events.push(FragEvent::RestructureSkipped { state: z, reason: e.to_string() });
                None
            }
        }
    }

    /// Bypass would rewire edges of other fragments' states; refuse when a
    /// finished fragment would gain an edge into one of its non-input states.
    fn bypass_breaks_fragments(&self, z: StateId, inside: &BTreeSet<StateId>) -> bool {
        let succ = self.graph.successors(z);
        for &p in self.graph.predecessors(z) {
            if p == z || inside.contains(&p) {
                continue;
            }
            if let Some(fi) = self.fs.owner(p) {
                let f = &self.fs.fragments()[fi];
                if succ.iter().any(|t| f.states.contains(t) && *t != f.input) {
                    return true;
                }
            }
        }
        false
    }

    /// Threshold restructuring of `w`, which is about to join `cand`.
    fn restructure_at_threshold(&mut self, cand: &mut Candidate, w: StateId) {
        let mut inside = cand.members.clone();
        inside.insert(w);
        let has_external_pred = self.graph.predecessors(w).iter().any(|p| !inside.contains(p));
        if has_external_pred {
            if self.bypass_breaks_fragments(w, &inside) {
                self.events.push(FragEvent::RestructureSkipped {
                    state: w,
                    reason: "bypass would enter another fragment".into(),
                });
                return;
            }
            match restructure_bypass(&mut self.model, w, &inside, Some(cand.input)) {
                Ok(rewrites) => {
                    self.refresh();
                    self.events.push(FragEvent::Bypass { state: w, rewrites });
                }
                Err(e) => self.events.push(FragEvent::RestructureSkipped { state: w, reason: e.to_string() }),
            }
            return;
        }
        let succ = self.graph.successors(w);
        let outside = succ.iter().any(|t| !inside.contains(t));
        let inner = succ.iter().any(|t| inside.contains(t) && *t != cand.input);
        if outside && inner {
            if let Some(aux) = self.split(w, &inside) {
                for a in aux {
                    cand.push(a);
                }
            }
        } else {
            self.events.push(FragEvent::RestructureSkipped { state: w, reason: "no restructuring applies".into() });
        }
    }

    fn traverse(&mut self, cand: &mut Candidate, w: StateId, is_input: bool) -> Step {
        if !is_input {
            let preds: Vec<StateId> =
                self.graph.predecessors(w).iter().copied().filter(|i| *i != w && !cand.members.contains(i)).collect();
            if preds.iter().any(|i| self.is_assigned(*i)) {
                self.assign(Fragment::single(w));
                self.events.push(FragEvent::PredecessorAssigned { state: w, input: cand.input });
                return Step::Abandon;
            }
            for i in preds {
                cand.push(i);
            }
        }
        let outs: Vec<StateId> =
            self.graph.successors(w).iter().copied().filter(|o| *o != w && !cand.members.contains(o)).collect();
        let (assigned, free): (Vec<StateId>, Vec<StateId>) = outs.iter().partition(|o| self.is_assigned(**o));
        if free.is_empty() {
            return Step::Continue;
        }
        for &o in &free {
            cand.push(o);
        }
        if !assigned.is_empty() {
            // successors already owned elsewhere are moved behind auxiliary
            // states, which can then serve as outputs
            let mut inside = cand.members.clone();
            inside.insert(w);
            inside.extend(free.iter().copied());
            if let Some(aux) = self.split(w, &inside) {
                for a in aux {
                    cand.push(a);
                }
            }
        }
        Step::Continue
    }

    fn is_output_now(&self, cand: &Candidate, w: StateId) -> bool {
        self.graph.predecessors(w).iter().all(|p| cand.members.contains(p))
            && self.graph.successors(w).iter().all(|o| !cand.members.contains(o) && *o != w)
    }

    fn grow(&mut self, z0: StateId, alpha: usize) {
        let mut cand = Candidate { input: z0, members: [z0].into(), stack: Vec::new(), pending: BTreeSet::new() };
        if let Step::Abandon = self.traverse(&mut cand, z0, true) {
            unreachable!("the input is never checked for predecessors");
        }
        while let Some(w) = cand.stack.pop() {
            cand.pending.remove(&w);
            if cand.members.contains(&w) || self.is_assigned(w) {
                continue;
            }
            if !self.is_output_now(&cand, w) {
                if cand.members.len() < alpha {
                    if let Step::Abandon = self.traverse(&mut cand, w, false) {
                        self.events.push(FragEvent::Downgrade {
                            input: z0,
                            reason: format!("member candidate {w} has a predecessor in another fragment"),
                        });
                        self.assign(Fragment::single(z0));
                        return;
                    }
                } else {
                    self.restructure_at_threshold(&mut cand, w);
                }
            }
            cand.members.insert(w);
        }
        if cand.members.len() == 1 {
            self.assign(Fragment::single(z0));
            return;
        }
        let outputs: BTreeSet<StateId> = cand
            .members
            .iter()
            .copied()
            .filter(|s| self.graph.successors(*s).iter().any(|t| !cand.members.contains(t)))
            .collect();
        let f = Fragment { states: cand.members, input: z0, outputs, kind: FragmentKind::Multi };
        match check_fragment(&self.model, &self.graph, &f) {
            Ok(()) => self.assign(f),
            Err(v) => {
                self.events.push(FragEvent::Downgrade { input: z0, reason: v.to_string() });
                self.assign(Fragment::single(z0));
            }
        }
    }
}

/// Partitions `m` into fragments. Targets and absorbing states become
/// single-state fragments up front; every other state is tried as an input
/// in `opts.order`, growing a candidate until its size reaches `opts.alpha`,
/// after which members are restructured into outputs. Candidates that do not
/// form a valid fragment fall back to a single state. With `alpha == 1`
/// every state is its own fragment.
pub fn fragmentation(m: &Pdtmc, targets: &BTreeSet<StateId>, opts: &FragOptions) -> Fragmentation {
    let alpha = opts.alpha.max(1);
    let n = m.n_states();
    let graph = induced_graph(m);
    let mut ctx = Ctx {
        model: m.clone(),
        graph,
        assigned: vec![false; n],
        fs: FragmentSet::new(n),
        events: Vec::new(),
        aux_budget: m.n_transitions(),
    };
    for &t in targets {
        ctx.assign(Fragment::single(t));
    }
    for s in m.states() {
        let absorbing = ctx.graph.successors(s) == [s];
        if absorbing && !ctx.is_assigned(s) {
            ctx.assign(Fragment::single(s));
        }
    }
    loop {
        let next = match opts.order {
            InputOrder::Ascending => (0..ctx.model.n_states()).find(|&i| !ctx.assigned[i]),
            InputOrder::Descending => (0..ctx.model.n_states()).rev().find(|&i| !ctx.assigned[i]),
        };
        let Some(i) = next else { break };
        let z0 = StateId(i as u32);
        if alpha == 1 {
            ctx.assign(Fragment::single(z0));
        } else {
            ctx.grow(z0, alpha);
        }
    }
    let total = ctx.model.n_states();
    debug_assert!(ctx.fs.is_partition(total));
    assert!(total - n <= m.n_transitions(), "auxiliary states exceed the original out-degree");
    Fragmentation { model: ctx.model, fragments: ctx.fs, events: ctx.events, n_original_states: n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn ids(v: &[u32]) -> BTreeSet<StateId> {
        v.iter().map(|&i| StateId(i)).collect()
    }

    #[test]
    fn chain_forms_one_fragment() {
        let m = parse_model("init 0\ntrans 0 1 1\ntrans 1 2 1\ntrans 2 2 1\n").unwrap();
        let fr = fragmentation(&m, &ids(&[2]), &FragOptions { alpha: 10, ..Default::default() });
        assert_eq!(fr.fragments.len(), 2);
        let f = &fr.fragments.fragments()[1];
        assert_eq!(f.states, ids(&[0, 1]));
        assert_eq!(f.input, StateId(0));
        assert_eq!(f.outputs, ids(&[1]));
    }

    #[test]
    fn self_loops_only_give_singles() {
        let m = parse_model("init 0\ntrans 0 0 1\ntrans 1 1 1\ntrans 2 2 1\n").unwrap();
        let fr = fragmentation(&m, &ids(&[2]), &FragOptions::default());
        assert_eq!(fr.fragments.len(), 3);
        assert!(fr.fragments.fragments().iter().all(Fragment::is_single));
    }

    #[test]
    fn fragment_checks() {
        // 0 -> {1,2}; 1 -> {3,4}; 2 -> 4; 3,4 outputs leaving to 5,6
        let m = parse_model(
            "param p\ninit 0\ntrans 0 1 p\ntrans 0 2 1-p\ntrans 1 3 p\ntrans 1 4 1-p\ntrans 2 4 1\n\
             trans 3 5 1\ntrans 4 6 p\ntrans 4 0 1-p\ntrans 5 5 1\ntrans 6 6 1\n",
        )
        .unwrap();
        let good = Fragment {
            states: ids(&[0, 1, 2, 3, 4]),
            input: StateId(0),
            outputs: ids(&[3, 4]),
            kind: FragmentKind::Multi,
        };
        assert!(validate_fragment(&m, &good));
        let no_out = Fragment { outputs: BTreeSet::new(), ..good.clone() };
        assert!(!validate_fragment(&m, &no_out));
        // an inner state with an outside predecessor
        let mut m2 = m.clone();
        m2.set_transition(StateId(5), StateId(2), RationalFunction::one());
        m2.remove_transition(StateId(5), StateId(5));
        assert!(!validate_fragment(&m2, &good));
    }

    #[test]
    fn split_creates_one_aux_per_outside_edge() {
        let mut m = parse_model(
            "param p\ninit 0\ntrans 0 1 1/2\ntrans 0 2 p/2\ntrans 0 3 (1-p)/2\ntrans 1 0 1\ntrans 2 2 1\ntrans 3 3 1\n",
        )
        .unwrap();
        let before = m.n_transitions();
        let aux = restructure_split(&mut m, StateId(0), &ids(&[0, 1])).unwrap();
        assert_eq!(aux.len(), 2);
        assert_eq!(m.n_transitions(), before + 2);
        for a in aux {
            assert_eq!(m.row(a).len(), 1);
        }
        assert!(restructure_split(&mut m, StateId(1), &ids(&[0, 1])).is_err());
    }

    #[test]
    fn bypass_multiplies_probabilities() {
        let mut m = parse_model(
            "param q\nparam a\ninit 0\ntrans 0 1 q\ntrans 0 2 1-q\ntrans 2 1 1\ntrans 1 3 a\ntrans 1 4 1-a\ntrans 3 3 1\ntrans 4 4 1\n",
        )
        .unwrap();
        let rewrites = restructure_bypass(&mut m, StateId(1), &ids(&[1, 2]), None).unwrap();
        assert_eq!(rewrites.len(), 2);
        assert!(m.transition(StateId(0), StateId(1)).is_none());
        assert_eq!(m.row(StateId(0)).len(), 3);
        assert!(m.transition(StateId(2), StateId(1)).is_some());
    }
}
