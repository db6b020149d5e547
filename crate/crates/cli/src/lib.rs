//! `fragmc` subcommands. Everything here writes to caller-supplied sinks so
//! the commands can be driven from tests as well as from `main`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fragmc_core::casegen::{gen_fx, gen_fx_intro, gen_loop_chain, gen_param_sweep, FxSpec, Strategy};
use fragmc_core::compose::{EquationSystem, SystemJson};
use fragmc_core::fragmentation::{FragEvent, FragmentKind, Fragmentation, InputOrder};
use fragmc_core::model::{parse_model, render_model, resolve_target, Pdtmc, StateId, Target};
use fragmc_core::pipeline::{monolithic, run, verify, PipelineOptions, PipelineResult, VerifyError, VerifyReport};
use fragmc_core::pmc::{ElimOptions, PmcError};
use fragmc_core::ratfun::{parse_rational, Arithmetic, ParamId, Valuation};
use fragmc_core::sampling::valuations;
use num_traits::ToPrimitive;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "fragmc", version, about = "Parametric reachability for Markov chains by fragmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the closed-form equation system for a model
    Check(CheckArgs),
    /// Show how a model is split into fragments
    Fragment(FragmentArgs),
    /// Evaluate an equation system at a point
    Eval(EvalArgs),
    /// Compare a closed form against the numeric oracle
    Verify(VerifyArgs),
    /// Sweep the fragment size threshold
    Bench(BenchArgs),
    /// Write a generated model
    Gen(GenArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// model file
    #[arg(short, long)]
    pub model: PathBuf,

    /// target label, or comma-separated state ids
    #[arg(short, long)]
    pub target: String,
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    /// fragment size threshold
    #[arg(short, long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..))]
    pub alpha: u64,

    /// order in which fragment inputs are tried
    #[arg(long, value_enum, default_value_t = OrderArg::Ascending)]
    pub input_order: OrderArg,

    /// fragment workers (0 = one per core)
    #[arg(long, default_value_t = 0)]
    pub threads: usize,

    /// substitute fragment formulas into the result
    #[arg(long)]
    pub inline: bool,

    /// how intermediate formulas are combined
    #[arg(long, value_enum, default_value_t = ArithArg::Shared)]
    pub arithmetic: ArithArg,

    /// give up state elimination after this many seconds
    #[arg(long)]
    pub timeout: Option<f64>,
}

impl SolveArgs {
    fn pipeline(&self) -> PipelineOptions {
        PipelineOptions {
            alpha: self.alpha as usize,
            order: self.input_order.into(),
            threads: self.threads,
            inline: self.inline,
            elim: ElimOptions {
                deadline: self.timeout.map(|s| Instant::now() + Duration::from_secs_f64(s)),
                arithmetic: self.arithmetic.into(),
                ..Default::default()
            },
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    Ascending,
    Descending,
}

impl From<OrderArg> for InputOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Ascending => InputOrder::Ascending,
            OrderArg::Descending => InputOrder::Descending,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ArithArg {
    Shared,
    Expanded,
}

impl From<ArithArg> for Arithmetic {
    fn from(a: ArithArg) -> Self {
        match a {
            ArithArg::Shared => Arithmetic::Shared,
            ArithArg::Expanded => Arithmetic::Expanded,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct CheckArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solve: SolveArgs,

    /// equation system JSON (default: stdout, with the summary on stderr)
    #[arg(short, long)]
    pub output: Option<PathBuf>,

    /// also eliminate the unfragmented chain and report its size
    #[arg(long)]
    pub monolithic: bool,
}

#[derive(Args, Debug, Clone)]
pub struct FragmentArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(short, long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..))]
    pub alpha: u64,

    #[arg(long, value_enum, default_value_t = OrderArg::Ascending)]
    pub input_order: OrderArg,

    /// include the restructuring and downgrade log
    #[arg(long)]
    pub explain: bool,

    /// report file (default: stdout)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// equation system JSON
    #[arg(short, long)]
    pub system: PathBuf,

    /// parameter values, e.g. `p1=0.9,p2=4/5`
    #[arg(short, long)]
    pub point: String,
}

#[derive(Args, Debug, Clone)]
pub struct SampleArgs {
    /// number of seeded valuations
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,

    #[arg(long, env = "FRAGMC_SEED", default_value_t = 0)]
    pub seed: u64,

    /// largest accepted relative error
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[command(flatten)]
    pub sample: SampleArgs,

    /// check this system instead of building one
    #[arg(short, long)]
    pub system: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[command(flatten)]
    pub sample: SampleArgs,

    /// inclusive threshold range `A..B`
    #[arg(long, value_parser = parse_alpha_range)]
    pub alpha_range: RangeInclusive<usize>,

    /// leave out the timing columns so runs are byte-for-byte repeatable
    #[arg(long)]
    pub no_timings: bool,

    /// CSV file (default: stdout)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    /// FX composition strategy
    #[arg(long, value_parser = parse_strategy, required_unless_present_any = ["intro", "loop_chain"])]
    pub strategy: Option<Strategy>,

    /// services per operation
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..=5))]
    pub services: u64,

    /// the four-state introductory model
    #[arg(long, conflicts_with_all = ["strategy", "loop_chain"])]
    pub intro: bool,

    /// chain of N retry loops
    #[arg(long, conflicts_with = "strategy")]
    pub loop_chain: Option<usize>,

    /// keep only this fraction of parameters, fixing the rest
    #[arg(long)]
    pub sweep_fraction: Option<f64>,

    #[arg(long, env = "FRAGMC_SEED", default_value_t = 0)]
    pub seed: u64,

    /// model file (default: stdout)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|_| format!("unknown strategy `{s}`"))
}

pub fn parse_alpha_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (s, s),
    };
    let lo: usize = a.trim().parse().map_err(|_| format!("bad range start in `{s}`"))?;
    let hi: usize = b.trim().parse().map_err(|_| format!("bad range end in `{s}`"))?;
    if lo == 0 || lo > hi {
        return Err(format!("range `{s}` must satisfy 1 <= A <= B"));
    }
    Ok(lo..=hi)
}

/// What went wrong, by exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Io = 1,
    Parse = 2,
    Validate = 3,
    Solve = 4,
    Verify = 5,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

trait Classify<T> {
    fn or_fail(self, kind: FailureKind) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_fail(self, kind: FailureKind) -> Result<T, Failure> {
        self.map_err(|e| Failure { kind, error: e.into() })
    }
}

fn fail<T>(kind: FailureKind, msg: impl fmt::Display) -> Result<T, Failure> {
    Err(Failure { kind, error: anyhow::anyhow!("{msg}") })
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(anyhow::Error::from)
        .map_err(|e| e.context(format!("reading {}", path.display())))
        .or_fail(FailureKind::Io)
}

/// Writes `text` to `path`, or to `stdout` when no path is given.
fn emit(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(anyhow::Error::from)
            .map_err(|e| e.context(format!("writing {}", p.display())))
            .or_fail(FailureKind::Io),
        None => stdout.write_all(text.as_bytes()).or_fail(FailureKind::Io),
    }
}

pub fn load_model(args: &ModelArgs) -> Result<(Pdtmc, BTreeSet<StateId>), Failure> {
    let text = read(&args.model)?;
    let m = parse_model(&text)
        .map_err(anyhow::Error::from)
        .map_err(|e| e.context(format!("parsing {}", args.model.display())))
        .or_fail(FailureKind::Parse)?;
    let targets = resolve_target(&m, &Target::parse(&args.target)).or_fail(FailureKind::Validate)?;
    Ok((m, targets))
}

pub fn load_system(path: &Path) -> Result<EquationSystem, Failure> {
    let text = read(path)?;
    let json: SystemJson = serde_json::from_str(&text).or_fail(FailureKind::Parse)?;
    EquationSystem::from_json(&json).or_fail(FailureKind::Parse)
}

fn solve_failure(e: fragmc_core::pipeline::PipelineError) -> Failure {
    Failure { kind: FailureKind::Solve, error: e.into() }
}

/// Parses `name=value` pairs; values may be decimals or fractions.
pub fn parse_point(text: &str, sys: &EquationSystem) -> Result<Valuation, Failure> {
    let mut v = Valuation::new(sys.n_base_params);
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((name, value)) = item.split_once('=') else {
            return fail(FailureKind::Parse, format!("expected name=value, got `{item}`"));
        };
        let name = name.trim();
        let id = match sys.params.id(name) {
            Some(id) if id.index() < sys.n_base_params => id,
            _ => return fail(FailureKind::Validate, format!("unknown parameter `{name}`")),
        };
        v.set(id, parse_rational(value.trim()).or_fail(FailureKind::Parse)?);
    }
    if let Some(missing) = sys.base_params().iter().enumerate().find(|(i, _)| v.get(ParamId(*i as u32)).is_none()) {
        return fail(FailureKind::Validate, format!("no value for parameter `{}`", missing.1));
    }
    Ok(v)
}

/// Verifies `sys` against the oracle on `m` at `points` (model-indexed).
pub fn verify_system(
    sys: &EquationSystem,
    m: &Pdtmc,
    targets: &BTreeSet<StateId>,
    points: &[Valuation],
    tolerance: f64,
) -> Result<VerifyReport, Failure> {
    verify(sys, m, targets, points, tolerance).map_err(|e| {
        let kind = match e {
            VerifyError::UnknownParameter(_) => FailureKind::Validate,
            _ => FailureKind::Verify,
        };
        Failure { kind, error: e.into() }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub fragments: usize,
    pub multi_state_fragments: usize,
    pub states_before: usize,
    pub transitions_before: usize,
    pub states_after: usize,
    pub transitions_after: usize,
    pub synthetic_parameters: usize,
    pub bindings: usize,
    pub op_count: usize,
    pub fragmentation_ms: f64,
    pub fragment_pmc_ms: f64,
    pub abstract_pmc_ms: f64,
    pub composition_ms: f64,
    pub total_ms: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl Summary {
    pub fn of(m: &Pdtmc, res: &PipelineResult) -> Self {
        let fr = &res.fragmentation;
        let t = &res.timings;
        Summary {
            fragments: fr.fragments.len(),
            multi_state_fragments: fr.fragments.n_multi(),
            states_before: m.n_states(),
            transitions_before: m.n_transitions(),
            states_after: fr.model.n_states(),
            transitions_after: fr.model.n_transitions(),
            synthetic_parameters: res.abstract_model.synth.len(),
            bindings: res.system.bindings.len(),
            op_count: res.system.op_count(),
            fragmentation_ms: ms(t.fragmentation),
            fragment_pmc_ms: ms(t.fragment_pmc),
            abstract_pmc_ms: ms(t.abstract_pmc),
            composition_ms: ms(t.composition),
            total_ms: ms(t.total()),
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "fragments: {} ({} multi-state)", self.fragments, self.multi_state_fragments)?;
        writeln!(
            f,
            "states/transitions: {}/{} -> {}/{}",
            self.states_before, self.transitions_before, self.states_after, self.transitions_after
        )?;
        writeln!(f, "bindings: {} ({} fragment parameters)", self.bindings, self.synthetic_parameters)?;
        writeln!(f, "op count: {}", self.op_count)?;
        write!(
            f,
            "time: fragmentation {:.3} ms, fragment pmc {:.3} ms, composition {:.3} ms, abstract pmc {:.3} ms, total {:.3} ms",
            self.fragmentation_ms, self.fragment_pmc_ms, self.composition_ms, self.abstract_pmc_ms, self.total_ms
        )
    }
}

pub fn cmd_check(a: &CheckArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<PipelineResult, Failure> {
    let (m, targets) = load_model(&a.model)?;
    let res = run(&m, &targets, &a.solve.pipeline()).map_err(solve_failure)?;
    let json = serde_json::to_string_pretty(&res.system.to_json()).or_fail(FailureKind::Io)? + "\n";
    let summary = Summary::of(&m, &res);
    let mut report = summary.to_string();
    if a.monolithic {
        let timeout = a.solve.timeout.map(Duration::from_secs_f64);
        let t = Instant::now();
        report += &match monolithic(&m, &targets, timeout, a.solve.arithmetic.into()) {
            Ok(f) => {
                let mono = EquationSystem::from_formula(m.params().clone(), &f);
                format!("\nmonolithic: op count {}, {:.3} ms", mono.op_count(), ms(t.elapsed()))
            }
            Err(PmcError::Timeout) => format!("\nmonolithic: timeout after {:.3} ms", ms(t.elapsed())),
            Err(e) => return Err(e).or_fail(FailureKind::Solve),
        };
    }
    match &a.output {
        Some(path) => {
            emit(Some(path), &json, stdout)?;
            writeln!(stdout, "{report}").or_fail(FailureKind::Io)?;
        }
        None => {
            emit(None, &json, stdout)?;
            writeln!(stderr, "{report}").or_fail(FailureKind::Io)?;
        }
    }
    Ok(res)
}

#[derive(Debug, Clone, Serialize)]
pub struct FragmentEntry {
    pub index: usize,
    pub kind: FragmentKind,
    pub input: StateId,
    pub outputs: Vec<StateId>,
    pub states: Vec<StateId>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FragmentReport {
    pub alpha: usize,
    pub states_before: usize,
    pub transitions_before: usize,
    pub states_after: usize,
    pub transitions_after: usize,
    pub auxiliary_states: Vec<StateId>,
    pub fragments: Vec<FragmentEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<FragEvent>>,
}

impl FragmentReport {
    pub fn new(m: &Pdtmc, alpha: usize, fr: &Fragmentation, explain: bool) -> Self {
        FragmentReport {
            alpha,
            states_before: m.n_states(),
            transitions_before: m.n_transitions(),
            states_after: fr.model.n_states(),
            transitions_after: fr.model.n_transitions(),
            auxiliary_states: fr.model.states().filter(|s| fr.is_auxiliary(*s)).collect(),
            fragments: fr
                .fragments
                .fragments()
                .iter()
                .enumerate()
                .map(|(index, f)| FragmentEntry {
                    index,
                    kind: f.kind,
                    input: f.input,
                    outputs: f.outputs.iter().copied().collect(),
                    states: f.states.iter().copied().collect(),
                })
                .collect(),
            events: explain.then(|| fr.events.clone()),
        }
    }
}

pub fn cmd_fragment(a: &FragmentArgs, stdout: &mut dyn Write) -> Result<FragmentReport, Failure> {
    let (m, targets) = load_model(&a.model)?;
    let opts = fragmc_core::fragmentation::FragOptions { alpha: a.alpha as usize, order: a.input_order.into() };
    let fr = fragmc_core::fragmentation::fragmentation(&m, &targets, &opts);
    let report = FragmentReport::new(&m, opts.alpha, &fr, a.explain);
    let json = serde_json::to_string_pretty(&report).or_fail(FailureKind::Io)? + "\n";
    emit(a.output.as_deref(), &json, stdout)?;
    Ok(report)
}

pub fn cmd_eval(a: &EvalArgs, stdout: &mut dyn Write) -> Result<num_rational::BigRational, Failure> {
    let sys = load_system(&a.system)?;
    let unbound = sys.unbound_references();
    if !unbound.is_empty() {
        return fail(FailureKind::Validate, format!("system uses unbound names: {}", unbound.join(", ")));
    }
    let point = parse_point(&a.point, &sys)?;
    let value = sys.evaluate(&point).or_fail(FailureKind::Solve)?;
    writeln!(stdout, "{value}\t{}", value.to_f64().unwrap_or(f64::NAN)).or_fail(FailureKind::Io)?;
    Ok(value)
}

pub fn cmd_verify(a: &VerifyArgs, stdout: &mut dyn Write) -> Result<VerifyReport, Failure> {
    let (m, targets) = load_model(&a.model)?;
    let sys = match &a.system {
        Some(path) => load_system(path)?,
        None => run(&m, &targets, &a.solve.pipeline()).map_err(solve_failure)?.system,
    };
    let points = valuations(m.params(), a.sample.samples as usize, a.sample.seed);
    let report = verify_system(&sys, &m, &targets, &points, a.sample.tolerance)?;
    for s in &report.samples {
        writeln!(
            stdout,
            "sample {:>3}: closed form {:.15e}  oracle {:.15e}  rel error {:.3e}  {}",
            s.index,
            s.closed_form.to_f64().unwrap_or(f64::NAN),
            s.oracle.to_f64().unwrap_or(f64::NAN),
            s.rel_error,
            if s.pass { "ok" } else { "MISMATCH" }
        )
        .or_fail(FailureKind::Io)?;
    }
    let verdict = if report.pass { "PASS" } else { "FAIL" };
    writeln!(
        stdout,
        "{verdict}: {} samples, max rel error {:.3e} (tolerance {:e})",
        report.samples.len(),
        report.max_rel_error,
        report.tolerance
    )
    .or_fail(FailureKind::Io)?;
    if !report.pass {
        return fail(
            FailureKind::Verify,
            format!("closed form disagrees with the oracle (max rel error {:.3e})", report.max_rel_error),
        );
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub alpha: usize,
    pub fragments: usize,
    pub multi_state_fragments: usize,
    pub states: usize,
    pub transitions: usize,
    pub op_count: usize,
    pub verified: bool,
    pub max_rel_error: f64,
    pub all_single: bool,
    pub total_ms: f64,
}

/// One pipeline run and verification per threshold in `alphas`.
pub fn bench_rows(
    m: &Pdtmc,
    targets: &BTreeSet<StateId>,
    alphas: RangeInclusive<usize>,
    solve: &SolveArgs,
    sample: &SampleArgs,
) -> Result<Vec<BenchRow>, Failure> {
    let points = valuations(m.params(), sample.samples as usize, sample.seed);
    let mut rows = Vec::new();
    for alpha in alphas {
        let opts = PipelineOptions { alpha, ..solve.pipeline() };
        let res = run(m, targets, &opts).map_err(solve_failure)?;
        let report = verify_system(&res.system, m, targets, &points, sample.tolerance)?;
        let fs = &res.fragmentation.fragments;
        rows.push(BenchRow {
            alpha,
            fragments: fs.len(),
            multi_state_fragments: fs.n_multi(),
            states: res.fragmentation.model.n_states(),
            transitions: res.fragmentation.model.n_transitions(),
            op_count: res.system.op_count(),
            verified: report.pass,
            max_rel_error: report.max_rel_error,
            all_single: fs.n_multi() == 0,
            total_ms: ms(res.timings.total()),
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow], timings: bool) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "alpha",
        "fragments",
        "multi_state_fragments",
        "states",
        "transitions",
        "op_count",
        "verified",
        "max_rel_error",
    ];
    if timings {
        header.push("total_ms");
    }
    w.write_record(&header).or_fail(FailureKind::Io)?;
    for r in rows {
        let mut rec = vec![
            r.alpha.to_string(),
            r.fragments.to_string(),
            r.multi_state_fragments.to_string(),
            r.states.to_string(),
            r.transitions.to_string(),
            r.op_count.to_string(),
            r.verified.to_string(),
            format!("{:e}", r.max_rel_error),
        ];
        if timings {
            rec.push(format!("{:.3}", r.total_ms));
        }
        w.write_record(&rec).or_fail(FailureKind::Io)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}")).or_fail(FailureKind::Io)?;
    String::from_utf8(bytes).or_fail(FailureKind::Io)
}

pub fn cmd_bench(a: &BenchArgs, stdout: &mut dyn Write) -> Result<Vec<BenchRow>, Failure> {
    let (m, targets) = load_model(&a.model)?;
    let rows = bench_rows(&m, &targets, a.alpha_range.clone(), &a.solve, &a.sample)?;
    emit(a.output.as_deref(), &bench_csv(&rows, !a.no_timings)?, stdout)?;
    if let Some(bad) = rows.iter().find(|r| !r.verified) {
        return fail(FailureKind::Verify, format!("alpha {} does not match the oracle", bad.alpha));
    }
    Ok(rows)
}

pub fn cmd_gen(a: &GenArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<Pdtmc, Failure> {
    let mut m = if a.intro {
        gen_fx_intro()
    } else if let Some(n) = a.loop_chain {
        if n == 0 {
            return fail(FailureKind::Validate, "loop chain needs at least one loop");
        }
        gen_loop_chain(n)
    } else {
        let strategy = a.strategy.expect("clap requires a strategy");
        gen_fx(FxSpec { strategy, services: a.services as usize })
    };
    if let Some(f) = a.sweep_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return fail(FailureKind::Validate, format!("sweep fraction {f} is outside (0, 1]"));
        }
        let swept = gen_param_sweep(&m, f, a.seed);
        let names: Vec<&str> = swept.kept.iter().map(|id| m.params().name(*id)).collect();
        writeln!(stderr, "kept {} of {} parameters: {}", names.len(), m.params().len(), names.join(" "))
            .or_fail(FailureKind::Io)?;
        m = swept.model;
    }
    emit(a.output.as_deref(), &render_model(&m), stdout)?;
    Ok(m)
}

/// Runs one parsed command line.
pub fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    match &cli.command {
        Command::Check(a) => cmd_check(a, stdout, stderr).map(drop),
        Command::Fragment(a) => cmd_fragment(a, stdout).map(drop),
        Command::Eval(a) => cmd_eval(a, stdout).map(drop),
        Command::Verify(a) => cmd_verify(a, stdout).map(drop),
        Command::Bench(a) => cmd_bench(a, stdout).map(drop),
        Command::Gen(a) => cmd_gen(a, stdout, stderr).map(drop),
    }
}
