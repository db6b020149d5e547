//! End-to-end run: fragment, solve fragments, build and solve the abstract
//! model, and check the result against the numeric oracle.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_rational::BigRational;
use serde::Serialize;
use thiserror::Error;

use crate::compose::{build_abstract, compose_system, AbstractModel, ComposeError, EquationSystem};
use crate::fragmentation::{fragmentation, FragOptions, Fragmentation, InputOrder};
use crate::model::{Pdtmc, StateId};
use crate::oracle::{reach_at, relative_error, OracleError};
use crate::pmc::{reach_all_fragments, reach_probability, ElimOptions, PmcError, ReachFormulaMap};
use crate::ratfun::{Arithmetic, Formula, ParamId, RatFunError, Valuation};

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub alpha: usize,
    pub order: InputOrder,
    /// Worker threads for per-fragment elimination (0 = all cores).
    pub threads: usize,
    pub elim: ElimOptions,
    /// Substitute fragment formulas into the abstract model instead of
    /// binding them to fresh parameters.
    pub inline: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            alpha: 6,
            order: InputOrder::Ascending,
            threads: 0,
            elim: ElimOptions::default(),
            inline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Pmc(#[from] PmcError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct PhaseTimings {
    pub fragmentation: Duration,
    pub fragment_pmc: Duration,
    pub abstract_pmc: Duration,
    pub composition: Duration,
}

impl PhaseTimings {
    pub fn total(&self) -> Duration {
        self.fragmentation + self.fragment_pmc + self.abstract_pmc + self.composition
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub fragmentation: Fragmentation,
    pub reach: Vec<ReachFormulaMap>,
    pub abstract_model: AbstractModel,
    pub system: EquationSystem,
    pub timings: PhaseTimings,
}

pub fn run(m: &Pdtmc, targets: &BTreeSet<StateId>, opts: &PipelineOptions) -> Result<PipelineResult, PipelineError> {
    let mut timings = PhaseTimings::default();
    let t = Instant::now();
    let fr = fragmentation(m, targets, &FragOptions { alpha: opts.alpha, order: opts.order });
    timings.fragmentation = t.elapsed();

    let t = Instant::now();
    let reach = reach_all_fragments(&fr.model, &fr.fragments, opts.threads, &opts.elim)?;
    timings.fragment_pmc = t.elapsed();

    let t = Instant::now();
    let abs = build_abstract(&fr.model, &fr.fragments, &reach)?;
    timings.composition = t.elapsed();

    let t = Instant::now();
    let system = compose_system(&abs, &fr.fragments, targets, &opts.elim, opts.inline)?;
    timings.abstract_pmc = t.elapsed();

    Ok(PipelineResult { fragmentation: fr, reach, abstract_model: abs, system, timings })
}

/// State elimination on the whole chain.
pub fn monolithic(
    m: &Pdtmc,
    targets: &BTreeSet<StateId>,
    timeout: Option<Duration>,
    arithmetic: Arithmetic,
) -> Result<Formula, PmcError> {
    let opts = ElimOptions { deadline: timeout.map(|d| Instant::now() + d), arithmetic, ..Default::default() };
    reach_probability(m, targets, &opts)
}

#[derive(Debug, Clone, Serialize)]
pub struct Sample {
    pub index: usize,
    #[serde(serialize_with = "ser_rational")]
    pub closed_form: BigRational,
    #[serde(serialize_with = "ser_rational")]
    pub oracle: BigRational,
    pub rel_error: f64,
    pub pass: bool,
}

fn ser_rational<S: serde::Serializer>(v: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub tolerance: f64,
    pub samples: Vec<Sample>,
    pub max_rel_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("system parameter `{0}` is not a model parameter")]
    UnknownParameter(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    RatFun(#[from] RatFunError),
}

/// Compares `system` with the exact oracle on `m` at every point. Points are
/// indexed by the model's parameters; system parameters are matched by name.
pub fn verify(
    system: &EquationSystem,
    m: &Pdtmc,
    targets: &BTreeSet<StateId>,
    points: &[Valuation],
    tolerance: f64,
) -> Result<VerifyReport, VerifyError> {
    let mut ids = Vec::with_capacity(system.n_base_params);
    for name in system.base_params() {
        ids.push(m.params().id(name).ok_or_else(|| VerifyError::UnknownParameter(name.to_string()))?);
    }
    let mut samples = Vec::with_capacity(points.len());
    for (index, p) in points.iter().enumerate() {
        let mut q = Valuation::new(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if let Some(x) = p.get(*id) {
                q.set(ParamId(i as u32), x.clone());
            }
        }
        let oracle = reach_at(m, targets, p)?;
        let closed_form = system.evaluate(&q)?;
        let rel_error = relative_error(&closed_form, &oracle);
        samples.push(Sample { index, pass: rel_error <= tolerance, closed_form, oracle, rel_error });
    }
    let max_rel_error = samples.iter().map(|s| s.rel_error).fold(0.0, f64::max);
    let pass = samples.iter().all(|s| s.pass);
    Ok(VerifyReport { tolerance, samples, max_rel_error, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casegen::{gen_fx, gen_fx_intro, FxSpec, Strategy};
    use crate::model::{resolve_target, Target};
    use crate::sampling::valuations;

    #[test]
    fn intro_end_to_end() {
        let m = gen_fx_intro();
        let t = resolve_target(&m, &Target::parse("success")).unwrap();
        let res = run(&m, &t, &PipelineOptions { alpha: 10, ..Default::default() }).unwrap();
        let pts = valuations(m.params(), 20, 1);
        let rep = verify(&res.system, &m, &t, &pts, 0.0).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn seq_r_two_services() {
        let m = gen_fx(FxSpec { strategy: Strategy::SeqR, services: 2 });
        let t = resolve_target(&m, &Target::parse("successFX")).unwrap();
        let res = run(&m, &t, &PipelineOptions::default()).unwrap();
        let pts = valuations(m.params(), 5, 2);
        let rep = verify(&res.system, &m, &t, &pts, 1e-9).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}
