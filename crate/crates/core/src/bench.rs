//! Building handler stacks from a declarative description, running the workflows
//! on them, and timing sync against async stacks.

use std::cell::Cell;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::{json, Value as Json};

use crate::effects::{HandlerStack, Scope};
use crate::error::{Error, Result};
use crate::llm::{
    LiveBackend, LlmConfig, LlmHandler, MockBackend, MockRule, RecordedCalls, RecordingHandler,
    ReplayHandler, Trace,
};
use crate::runtime::{AsyncHandler, AsyncSeqHandler, ClockKind, Scheduler, SyncHandler};
use crate::workflows::{
    game24_mock_rule, research_mock_rule, research_topics, solve_game24, Game24Handler,
    Game24Outcome, LogSink, ResearchTopicsHandler, SolveState, TopicReport, TotParams,
    FIXTURE_TOPICS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_SOLUTION: i32 = 3;

/// Process exit code for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::TraceFormat { .. } => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Async,
    Sync,
}

#[derive(Debug, Clone)]
pub enum LlmSpec {
    Live(LlmConfig),
    Mock,
    Replay(PathBuf),
    Record(PathBuf, Box<LlmSpec>),
}

#[derive(Debug, Clone)]
pub struct StackSpec {
    pub mode: RunMode,
    pub llm: LlmSpec,
    /// Deliver completion callbacks in submission order.
    pub seq: bool,
    pub mock_latency_ms: u64,
    pub mock_jitter_ms: u64,
    pub seed: u64,
    pub clock: ClockKind,
}

impl StackSpec {
    pub fn mock(mode: RunMode, latency_ms: u64) -> Self {
        StackSpec {
            mode,
            llm: LlmSpec::Mock,
            seq: mode == RunMode::Async,
            mock_latency_ms: latency_ms,
            mock_jitter_ms: 0,
            seed: 0,
            clock: ClockKind::Wall,
        }
    }

    pub fn with_clock(mut self, clock: ClockKind) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_llm(mut self, llm: LlmSpec) -> Self {
        self.llm = llm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq && self.mode == RunMode::Sync {
            return Err(Error::Config("the sequential handler requires async mode".into()));
        }
        validate_llm(&self.llm, false)
    }

    /// Pushes the runtime, LLM and callback-ordering handlers. The caller
    /// pushes the workflow handler on top.
    pub fn install(&self, stack: &HandlerStack, rule: impl FnOnce() -> MockRule) -> Result<Installed> {
        self.validate()?;
        let mut scopes = vec![];
        let scheduler = match self.mode {
            RunMode::Async => {
                let h = AsyncHandler::with_clock(self.clock);
                let s = h.scheduler();
                scopes.push(stack.push(h)?);
                s
            }
            RunMode::Sync => {
                let h = SyncHandler::with_clock(self.clock);
                let s = h.scheduler();
                scopes.push(stack.push(h)?);
                s
            }
        };
        let mut installed = Installed {
            scopes,
            scheduler,
            recording: None,
            mock_calls: None,
        };
        self.install_llm(stack, &self.llm, rule, &mut installed)?;
        if self.seq {
            installed.scopes.push(stack.push(AsyncSeqHandler::new())?);
        }
        Ok(installed)
    }

    fn install_llm(
        &self,
        stack: &HandlerStack,
        llm: &LlmSpec,
        rule: impl FnOnce() -> MockRule,
        installed: &mut Installed,
    ) -> Result<String> {
        let model = match llm {
            LlmSpec::Mock => {
                let backend = MockBackend::new(rule())
                    .with_latency(Duration::from_millis(self.mock_latency_ms))
                    .with_jitter(self.mock_jitter_ms, self.seed);
                installed.mock_calls = Some(backend.call_counter());
                installed.scopes.push(stack.push(LlmHandler::new(backend))?);
                "mock".to_owned()
            }
            LlmSpec::Live(config) => {
                let backend = LiveBackend::new(config.clone())?;
                installed.scopes.push(stack.push(LlmHandler::new(backend))?);
                config.model.clone()
            }
            LlmSpec::Replay(path) => {
                let trace = Trace::load(path)?;
                let model = trace.records.first().map(|r| r.model.clone()).unwrap_or_default();
                let replay = ReplayHandler::new(trace).strict(true).keep_latency(true);
                installed.scopes.push(stack.push(replay)?);
                model
            }
            LlmSpec::Record(path, inner) => {
                let model = self.install_llm(stack, inner, rule, installed)?;
                let rec = RecordingHandler::new(model.clone());
                installed.recording = Some((path.clone(), rec.calls()));
                installed.scopes.push(stack.push(rec)?);
                model
            }
        };
        Ok(model)
    }
}

fn validate_llm(llm: &LlmSpec, under_record: bool) -> Result<()> {
    match llm {
        LlmSpec::Mock => Ok(()),
        LlmSpec::Live(config) => config.validate(),
        LlmSpec::Replay(path) if !path.is_file() => Err(Error::Config(format!(
            "replay trace {} does not exist",
            path.display()
        ))),
        LlmSpec::Replay(_) => Ok(()),
        LlmSpec::Record(..) if under_record => {
            Err(Error::Config("record cannot wrap another record".into()))
        }
        LlmSpec::Record(path, inner) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
            if dir.is_some_and(|d| !d.is_dir()) {
                return Err(Error::Config(format!(
                    "cannot write trace to {}",
                    path.display()
                )));
            }
            validate_llm(inner, true)
        }
    }
}

/// Handlers pushed by [`StackSpec::install`].
pub struct Installed {
    scopes: Vec<Scope>,
    scheduler: Scheduler,
    recording: Option<(PathBuf, RecordedCalls)>,
    mock_calls: Option<Rc<Cell<usize>>>,
}

impl Installed {
    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn mock_calls(&self) -> Option<usize> {
        self.mock_calls.as_ref().map(|c| c.get())
    }

    /// Pops the handlers (draining outstanding tasks) and writes the
    /// recorded trace, if any.
    pub fn finish(mut self) -> Result<Option<Trace>> {
        while let Some(mut s) = self.scopes.pop() {
            s.release()?;
        }
        match self.recording.take() {
            Some((path, calls)) => {
                let trace = calls.trace();
                trace.save(&path)?;
                Ok(Some(trace))
            }
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunStats {
    pub elapsed: Duration,
    pub llm_calls: Option<usize>,
    pub trace: Option<Trace>,
}

fn timed<T>(
    spec: &StackSpec,
    rule: impl FnOnce() -> MockRule,
    body: impl FnOnce(&HandlerStack) -> Result<T>,
) -> Result<(T, RunStats)> {
    let stack = HandlerStack::new();
    let start = Instant::now();
    let installed = spec.install(&stack, rule)?;
    let out = body(&stack);
    let sched = installed.scheduler().clone();
    let llm_calls = installed.mock_calls();
    let finished = installed.finish();
    let out = out?;
    let trace = finished?;
    let elapsed = match spec.clock {
        ClockKind::Virtual => sched.now(),
        ClockKind::Wall => start.elapsed(),
    };
    let stats = RunStats {
        elapsed,
        llm_calls,
        trace,
    };
    Ok((out, stats))
}

pub fn run_research_topics(
    spec: &StackSpec,
    area: &str,
    sink: LogSink,
) -> Result<(TopicReport, RunStats)> {
    timed(
        spec,
        || research_mock_rule(&FIXTURE_TOPICS),
        |stack| {
            let _h = stack.push(ResearchTopicsHandler::new(sink))?;
            research_topics(stack, area)
        },
    )
}

pub fn run_tot(
    spec: &StackSpec,
    numbers: &[i64],
    params: TotParams,
    on_step: impl FnMut(usize, &[SolveState]),
) -> Result<(Game24Outcome, RunStats)> {
    timed(spec, game24_mock_rule, |stack| {
        let _h = stack.push(Game24Handler::new())?;
        solve_game24(stack, numbers, params, on_step)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workflow {
    ResearchTopics,
    Tot,
}

impl Workflow {
    pub fn id(self) -> &'static str {
        match self {
            Workflow::ResearchTopics => "research-topics",
            Workflow::Tot => "tot",
        }
    }
}

#[derive(Debug, Clone)]
pub enum BenchInput {
    Area(String),
    Numbers(Vec<i64>),
}

impl BenchInput {
    fn to_json(&self) -> Json {
        match self {
            BenchInput::Area(a) => json!(a),
            BenchInput::Numbers(ns) => json!(ns),
        }
    }

    fn label(&self) -> String {
        match self {
            BenchInput::Area(a) => a.clone(),
            BenchInput::Numbers(ns) => {
                let parts: Vec<String> = ns.iter().map(|n| n.to_string()).collect();
                format!("[{}]", parts.join("; "))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub input: Json,
    pub async_s: f64,
    pub sync_s: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchMeta {
    pub latency_ms: u64,
    pub trials: usize,
    pub seed: u64,
    pub clock: String,
    pub os: String,
    pub arch: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub workflow: String,
    pub rows: Vec<BenchRow>,
    pub mean_speedup: f64,
    pub meta: BenchMeta,
}

impl BenchReport {
    /// Rows laid out as input, async and sync seconds, speedup; then the mean.
    pub fn table(&self) -> String {
        let labels: Vec<String> = self
            .rows
            .iter()
            .map(|r| match &r.input {
                Json::String(s) => s.clone(),
                Json::Array(ns) => {
                    let parts: Vec<String> = ns.iter().map(|n| n.to_string()).collect();
                    format!("[{}]", parts.join("; "))
                }
                other => other.to_string(),
            })
            .collect();
        let w = labels.iter().map(|l| l.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<w$}  {:>10}  {:>10}  {:>8}", "Input", "Async (s)", "Sync (s)", "Speedup");
        for (row, label) in self.rows.iter().zip(&labels) {
            let _ = writeln!(
                out,
                "{:<w$}  {:>10.2}  {:>10.2}  {:>7.2}x",
                label, row.async_s, row.sync_s, row.speedup
            );
        }
        let _ = writeln!(out, "{:<w$}  {:>10}  {:>10}  {:>7.2}x", "Mean", "", "", self.mean_speedup);
        out
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub workflow: Workflow,
    pub inputs: Vec<BenchInput>,
    pub trials: usize,
    pub latency_ms: u64,
    pub seed: u64,
    pub clock: ClockKind,
    pub params: TotParams,
}

impl BenchConfig {
    pub fn new(workflow: Workflow, inputs: Vec<BenchInput>) -> Self {
        BenchConfig {
            workflow,
            inputs,
            trials: 3,
            latency_ms: 100,
            seed: 0,
            clock: ClockKind::Wall,
            params: TotParams::default(),
        }
    }
}

fn run_once(cfg: &BenchConfig, input: &BenchInput, mode: RunMode) -> Result<Duration> {
    let mut spec = StackSpec::mock(mode, cfg.latency_ms).with_clock(cfg.clock);
    spec.seed = cfg.seed;
    match (cfg.workflow, input) {
        (Workflow::ResearchTopics, BenchInput::Area(area)) => {
            Ok(run_research_topics(&spec, area, LogSink::buffer())?.1.elapsed)
        }
        (Workflow::Tot, BenchInput::Numbers(ns)) => {
            Ok(run_tot(&spec, ns, cfg.params, |_, _| {})?.1.elapsed)
        }
        (w, i) => Err(Error::Config(format!(
            "input {} does not fit workflow {}",
            i.label(),
            w.id()
        ))),
    }
}

/// Times every input under the async and sync stacks, `trials` times each,
/// and reports the medians. Always uses the mock backend.
pub fn bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if cfg.inputs.is_empty() {
        return Err(Error::Config("no bench inputs".into()));
    }
    let mut rows = vec![];
    for input in &cfg.inputs {
        let mut walls = [vec![], vec![]];
        for _ in 0..cfg.trials {
            for (i, mode) in [RunMode::Async, RunMode::Sync].into_iter().enumerate() {
                walls[i].push(run_once(cfg, input, mode)?.as_secs_f64());
            }
        }
        let [a, s] = walls;
        let (async_s, sync_s) = (median(a), median(s));
        let speedup = if async_s > 0.0 { round3(sync_s / async_s) } else { 1.0 };
        rows.push(BenchRow {
            input: input.to_json(),
            async_s,
            sync_s,
            speedup,
        });
    }
    let mean = rows.iter().map(|r| r.speedup).sum::<f64>() / rows.len() as f64;
    Ok(BenchReport {
        workflow: cfg.workflow.id().to_owned(),
        rows,
        mean_speedup: round3(mean),
        meta: BenchMeta {
            latency_ms: cfg.latency_ms,
            trials: cfg.trials,
            seed: cfg.seed,
            clock: match cfg.clock {
                ClockKind::Wall => "wall",
                ClockKind::Virtual => "virtual",
            }
            .to_owned(),
            os: std::env::consts::OS.to_owned(),
            arch: std::env::consts::ARCH.to_owned(),
        },
    })
}

/// The inputs of the published running-time table.
pub fn table_inputs() -> Vec<BenchInput> {
    [[4, 9, 10, 13], [2, 10, 10, 13], [5, 6, 8, 13]]
        .into_iter()
        .map(|ns| BenchInput::Numbers(ns.to_vec()))
        .collect()
}

/// One row per record: seq, kind, latency, model and shortened prompt and
/// response.
pub fn inspect_trace(trace: &Trace) -> Vec<String> {
    fn short(s: &str, n: usize) -> String {
        let flat = s.replace('\n', "\\n");
        match flat.char_indices().nth(n) {
            Some((i, _)) => format!("{}...", &flat[..i]),
            None => flat,
        }
    }
    trace
        .records
        .iter()
        .map(|r| {
            let kind = serde_json::to_value(r.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            format!(
                "{:>4}  {:<8}  {:>9.3} ms  {:<12}  {:<40}  {}",
                r.seq,
                kind,
                r.latency_ms,
                r.model,
                short(&r.prompt, 40),
                short(&r.response, 40)
            )
        })
        .collect()
}
