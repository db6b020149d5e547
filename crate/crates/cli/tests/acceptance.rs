//! Acceptance criteria, one verdict line each.
//!
//! Criteria listed in `KNOWN_DEVIATIONS` are still evaluated at full
//! strength and reported as FAIL when they fail; only they are allowed to
//! fail without failing the target.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use fragmc::{bench_rows, Cli, Command};
use fragmc_core::casegen::{
    gen_fx, gen_fx_intro, gen_loop_chain, gen_param_sweep, gen_random, FxSpec, RandomSpec, Strategy, GOAL_LABEL,
};
use fragmc_core::compose::EquationSystem;
use fragmc_core::fragmentation::{
    fragmentation, restructure_bypass, restructure_split, validate_fragment, FragOptions,
};
use fragmc_core::model::{resolve_target, Pdtmc, StateId, Target};
use fragmc_core::oracle::{reach_at, relative_error};
use fragmc_core::pipeline::{monolithic, run, verify, PipelineOptions};
use fragmc_core::pmc::{fragment_reach_all, ElimOptions, PmcError};
use fragmc_core::ratfun::{parse_expr, parse_rational, Arithmetic, Valuation};
use fragmc_core::sampling::valuations;

const SEED: u64 = 2024;

/// Criteria expected to fail, with the reason recorded in the README.
const KNOWN_DEVIATIONS: &[&str] = &["table-sizes", "fragmentation-wins"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Case {
    name: String,
    model: Pdtmc,
    targets: BTreeSet<StateId>,
}

fn case(name: impl Into<String>, model: Pdtmc, target: &str) -> Case {
    let targets = resolve_target(&model, &Target::parse(target)).expect("corpus targets exist");
    Case { name: name.into(), model, targets }
}

fn fx(strategy: Strategy, services: usize) -> Pdtmc {
    gen_fx(FxSpec { strategy, services })
}

/// Every model family the generators produce, at desk scale.
fn corpus() -> Vec<Case> {
    let mut out = vec![case("FX-intro", gen_fx_intro(), "success")];
    for strategy in Strategy::ALL {
        for k in 1..=5 {
            out.push(case(format!("FX {strategy} k={k}"), fx(strategy, k), "successFX"));
        }
    }
    for n in 1..=20 {
        out.push(case(format!("chain n={n}"), gen_loop_chain(n), "success"));
    }
    for (strategy, k) in [(Strategy::SeqR, 2), (Strategy::Prob, 3), (Strategy::Par, 3)] {
        for fraction in [0.25, 0.5] {
            let swept = gen_param_sweep(&fx(strategy, k), fraction, SEED);
            out.push(case(format!("FX {strategy} k={k} f={fraction}"), swept.model, "successFX"));
        }
    }
    for seed in 0..40 {
        let spec = RandomSpec { states: 3 + seed as usize % 13, params: 1 + seed as usize % 4, seed };
        out.push(case(format!("random #{seed}"), gen_random(spec), GOAL_LABEL));
    }
    out
}

fn intro_formula() -> Outcome {
    let m = gen_fx_intro();
    let targets = resolve_target(&m, &Target::parse("success")).unwrap();
    let start = Instant::now();
    let res = match run(&m, &targets, &PipelineOptions::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let expected = parse_expr("p1 + (1 - p1)*p2", m.params()).unwrap();
    let agree =
        valuations(m.params(), 20, SEED).iter().all(|p| res.system.evaluate(p).ok() == Some(expected.eval(p).unwrap()));
    let point = Valuation::from_values(vec![parse_rational("0.95").unwrap(), parse_rational("0.8").unwrap()]);
    let at = res.system.evaluate(&point).unwrap();
    let elapsed = start.elapsed();
    let exact = at == BigRational::new(99.into(), 100.into());
    outcome(
        agree && exact && elapsed < Duration::from_secs(1),
        format!("20/20 points agree: {agree}, value at (0.95, 0.8) = {at}, {} ms", elapsed.as_millis()),
    )
}

/// States and transitions of the FX model, as published.
const TABLE_SIZES: [(Strategy, usize, usize, usize); 21] = [
    (Strategy::Seq, 1, 11, 22),
    (Strategy::Seq, 2, 17, 34),
    (Strategy::Seq, 3, 23, 46),
    (Strategy::Seq, 4, 29, 58),
    (Strategy::Seq, 5, 35, 70),
    (Strategy::Par, 2, 40, 36),
    (Strategy::Par, 3, 64, 111),
    (Strategy::Par, 4, 112, 207),
    (Strategy::Par, 5, 208, 399),
    (Strategy::Prob, 2, 23, 46),
    (Strategy::Prob, 3, 29, 64),
    (Strategy::Prob, 4, 35, 82),
    (Strategy::Prob, 5, 41, 100),
    (Strategy::SeqR, 2, 29, 58),
    (Strategy::SeqR, 3, 41, 82),
    (Strategy::SeqR, 4, 53, 106),
    (Strategy::SeqR, 5, 65, 130),
    (Strategy::ProbR, 2, 29, 58),
    (Strategy::ProbR, 3, 35, 75),
    (Strategy::ProbR, 4, 41, 93),
    (Strategy::ProbR, 5, 47, 111),
];

fn table_sizes() -> Outcome {
    let start = Instant::now();
    let mut wrong = Vec::new();
    for (strategy, k, states, transitions) in TABLE_SIZES {
        let m = fx(strategy, k);
        let got = (m.n_states(), m.n_transitions());
        if got != (states, transitions) {
            wrong.push(format!("{strategy} k={k} gives {}/{} for {states}/{transitions}", got.0, got.1));
        }
    }
    let elapsed = start.elapsed();
    let mut detail = format!("{}/21 rows match, {} ms", 21 - wrong.len(), elapsed.as_millis());
    if !wrong.is_empty() {
        detail += &format!("; {}", wrong.join("; "));
    }
    outcome(wrong.is_empty() && elapsed < Duration::from_secs(1), detail)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut cases = Vec::new();
    for strategy in Strategy::ALL {
        for k in 1..=3 {
            cases.push(case(format!("FX {strategy} k={k}"), fx(strategy, k), "successFX"));
        }
    }
    for n in 1..=20 {
        cases.push(case(format!("chain n={n}"), gen_loop_chain(n), "success"));
    }
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for c in &cases {
        let pts = valuations(c.model.params(), 20, SEED);
        let verdict = run(&c.model, &c.targets, &PipelineOptions::default())
            .map_err(|e| e.to_string())
            .and_then(|res| verify(&res.system, &c.model, &c.targets, &pts, 1e-9).map_err(|e| e.to_string()));
        match verdict {
            Ok(rep) if rep.pass => worst = worst.max(rep.max_rel_error),
            Ok(rep) => bad.push(format!("{} (max rel. error {:e})", c.name, rep.max_rel_error)),
            Err(e) => bad.push(format!("{}: {e}", c.name)),
        }
    }
    let elapsed = start.elapsed();
    let mut detail = format!(
        "{}/{} models verified, max rel. error {worst:e}, {:.1} s",
        cases.len() - bad.len(),
        cases.len(),
        elapsed.as_secs_f64()
    );
    if !bad.is_empty() {
        detail += &format!("; failing: {}", bad.join(", "));
    }
    outcome(bad.is_empty() && elapsed < Duration::from_secs(300), detail)
}

fn oracle_values(m: &Pdtmc, targets: &BTreeSet<StateId>, pts: &[Valuation]) -> Option<Vec<BigRational>> {
    pts.iter().map(|p| reach_at(m, targets, p).ok()).collect()
}

fn preserved(before: &Pdtmc, after: &Pdtmc, targets: &BTreeSet<StateId>, pts: &[Valuation]) -> bool {
    match (oracle_values(before, targets, pts), oracle_values(after, targets, pts)) {
        (Some(a), Some(b)) => a.iter().zip(&b).all(|(x, y)| relative_error(x, y) <= 1e-12),
        _ => false,
    }
}

fn restructuring_soundness() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED);
    let (mut models, mut splits, mut bypasses, mut broken) = (0, 0, 0, Vec::new());
    let mut seed = 0u64;
    while models < 200 && seed < 10_000 {
        let spec = RandomSpec { states: rng.gen_range(3..=15), params: rng.gen_range(1..=4), seed };
        seed += 1;
        let m = gen_random(spec);
        let targets = m.states_with_label(GOAL_LABEL);
        let pts = valuations(m.params(), 10, seed);
        let mut applied = false;
        let (mut split_done, mut bypass_done) = (false, false);
        for _ in 0..30 {
            let z = StateId(rng.gen_range(0..m.n_states()) as u32);
            let inside: BTreeSet<StateId> = m.states().filter(|s| *s != z && rng.gen_bool(0.5)).collect();
            if !split_done {
                let mut after = m.clone();
                if restructure_split(&mut after, z, &inside).is_ok() {
                    split_done = true;
                    splits += 1;
                    if !preserved(&m, &after, &targets, &pts) {
                        broken.push(format!("split of {z} in model {}", spec.seed));
                    }
                }
            }
            if !bypass_done && !targets.contains(&z) && z != m.initial() {
                let mut after = m.clone();
                if restructure_bypass(&mut after, z, &inside, None).is_ok() {
                    bypass_done = true;
                    bypasses += 1;
                    if !preserved(&m, &after, &targets, &pts) {
                        broken.push(format!("bypass of {z} in model {}", spec.seed));
                    }
                }
            }
            applied = split_done || bypass_done;
            if split_done && bypass_done {
                break;
            }
        }
        if applied {
            models += 1;
        }
    }
    outcome(
        models == 200 && broken.is_empty(),
        format!("{models} models, {splits} splits, {bypasses} bypasses, {} violations {:?}", broken.len(), broken),
    )
}

fn fragment_invariants(cases: &[Case]) -> Outcome {
    let (mut fragments, mut bad) = (0, Vec::new());
    for c in cases {
        let pts = valuations(c.model.params(), 10, SEED);
        for alpha in [3, 6, 15] {
            let fr = fragmentation(&c.model, &c.targets, &FragOptions { alpha, ..Default::default() });
            if !fr.fragments.is_partition(fr.model.n_states()) {
                bad.push(format!("{} α={alpha}: not a partition", c.name));
            }
            for f in fr.fragments.fragments().iter().filter(|f| !f.is_single()) {
                fragments += 1;
                if !validate_fragment(&fr.model, f) {
                    bad.push(format!("{} α={alpha}: invalid fragment at {}", c.name, f.input));
                    continue;
                }
                let sums_to_one = fragment_reach_all(&fr.model, f, &ElimOptions::default()).is_ok_and(|reach| {
                    pts.iter().all(|p| {
                        let total =
                            reach.values().filter_map(|g| g.eval(p).ok()).fold(BigRational::zero(), |a, b| a + b);
                        relative_error(&total, &BigRational::one()) <= 1e-12
                    })
                });
                if !sums_to_one {
                    bad.push(format!("{} α={alpha}: outputs of fragment {} do not sum to 1", c.name, f.input));
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "{} models × 3 thresholds, {fragments} multi-state fragments, {} violations {:?}",
            cases.len(),
            bad.len(),
            bad
        ),
    )
}

fn composition_vs_monolithic(cases: &[Case]) -> Outcome {
    let (mut compared, mut skipped, mut bad) = (0, 0, Vec::new());
    for c in cases.iter().filter(|c| c.model.n_states() <= 30) {
        let mono = match monolithic(&c.model, &c.targets, Some(Duration::from_secs(30)), Arithmetic::Shared) {
            Ok(f) => f,
            Err(PmcError::Timeout) => {
                skipped += 1;
                continue;
            }
            Err(e) => {
                bad.push(format!("{}: {e}", c.name));
                continue;
            }
        };
        compared += 1;
        let agree = run(&c.model, &c.targets, &PipelineOptions::default()).is_ok_and(|res| {
            valuations(c.model.params(), 20, SEED)
                .iter()
                .all(|p| matches!((mono.eval(p), res.system.evaluate(p)), (Ok(a), Ok(b)) if a == b))
        });
        if !agree {
            bad.push(c.name.clone());
        }
    }
    outcome(
        compared > 0 && bad.is_empty(),
        format!("{compared} models compared exactly at 20 points, {skipped} monolithic timeouts, mismatches {bad:?}"),
    )
}

fn alpha_sweep() -> Outcome {
    let m = fx(Strategy::SeqR, 2);
    let targets = resolve_target(&m, &Target::parse("successFX")).unwrap();
    // default solve and sampling settings, as `fragmc bench` would use them
    let cli = Cli::try_parse_from(["fragmc", "bench", "-m", "fx.pm", "-t", "successFX", "--alpha-range", "1..29"])
        .expect("bench command line");
    let Command::Bench(args) = cli.command else { unreachable!("parsed a bench command") };
    let start = Instant::now();
    let rows = match bench_rows(&m, &targets, args.alpha_range.clone(), &args.solve, &args.sample) {
        Ok(rows) => rows,
        Err(e) => return outcome(false, e.to_string()),
    };
    let verified = rows.iter().filter(|r| r.verified).count();
    let first_single = rows.first().is_some_and(|r| r.alpha == 1 && r.all_single);
    let ops: Vec<String> = rows.iter().map(|r| r.op_count.to_string()).collect();
    outcome(
        rows.len() == 29 && verified == 29 && first_single,
        format!(
            "{} rows, {verified} verified, α=1 all single: {first_single}, op counts [{}], {:.1} s",
            rows.len(),
            ops.join(" "),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn fragmentation_wins() -> Outcome {
    let m = fx(Strategy::SeqR, 3);
    let targets = resolve_target(&m, &Target::parse("successFX")).unwrap();
    let timeout = Duration::from_secs(60);
    let composed = match run(&m, &targets, &PipelineOptions::default()) {
        Ok(res) => res.system.op_count(),
        Err(e) => return outcome(false, format!("composition failed: {e}")),
    };
    match monolithic(&m, &targets, Some(timeout), Arithmetic::Shared) {
        Err(PmcError::Timeout) => {
            outcome(true, format!("monolithic timed out after {timeout:?}; composed {composed} ops"))
        }
        Err(e) => outcome(false, format!("monolithic failed: {e}")),
        Ok(mono) => {
            let mono = EquationSystem::from_formula(m.params().clone(), &mono).op_count();
            outcome(composed < mono, format!("composed {composed} ops, monolithic {mono} ops"))
        }
    }
}

type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

fn main() -> ExitCode {
    let cases = corpus();
    let criteria: Vec<(&str, Check<'_>)> = vec![
        ("intro-formula", Box::new(intro_formula)),
        ("table-sizes", Box::new(table_sizes)),
        ("oracle-equivalence", Box::new(oracle_equivalence)),
        ("restructuring-soundness", Box::new(restructuring_soundness)),
        ("fragment-invariants", Box::new(|| fragment_invariants(&cases))),
        ("composition-vs-monolithic", Box::new(|| composition_vs_monolithic(&cases))),
        ("alpha-sweep", Box::new(alpha_sweep)),
        ("fragmentation-wins", Box::new(fragmentation_wins)),
    ];
    let mut unexpected = Vec::new();
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let o = check();
        let tag = if o.pass { "[PASS]" } else { "[FAIL]" };
        println!("{tag} {} {name}: {}", i + 1, o.detail);
        let known = KNOWN_DEVIATIONS.contains(&name);
        if !o.pass && !known {
            unexpected.push(name);
        } else if o.pass && known {
            println!("       note: {name} is listed as a known deviation but passed");
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: no unexpected failures (known deviations: {})", KNOWN_DEVIATIONS.join(", "));
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected failures: {}", unexpected.join(", "));
        ExitCode::FAILURE
    }
}
