use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use llm_effects::bench::{
    bench, exit_code, inspect_trace, run_research_topics, run_tot, table_inputs, BenchConfig,
    BenchInput, LlmSpec, RunMode, RunStats, StackSpec, Workflow, EXIT_CONFIG, EXIT_FAILURE,
    EXIT_NO_SOLUTION, EXIT_OK,
};
use llm_effects::calculus::{parse_program, CalcError, Machine, Mode, DEFAULT_STEP_LIMIT};
use llm_effects::llm::{LlmConfig, Trace};
use llm_effects::runtime::ClockKind;
use llm_effects::workflows::{LogSink, TotParams, DEFAULT_AREA};
use llm_effects::Error;

#[derive(Parser)]
#[command(name = "llmfx", version, about = "Run, trace and benchmark LLM workflows written with effect handlers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a workflow once.
    #[command(subcommand)]
    Run(RunCommand),
    /// Time a workflow under the async and sync stacks (mock backend only).
    Bench(BenchArgs),
    /// Record, replay or inspect LLM call traces.
    #[command(subcommand)]
    Trace(TraceCommand),
    /// Evaluate programs of the handler calculus.
    #[command(subcommand)]
    Calc(CalcCommand),
}

#[derive(Subcommand)]
enum RunCommand {
    ResearchTopics(ResearchArgs),
    Tot(TotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Async,
    Sync,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum LlmArg {
    Live,
    Mock,
    Replay,
    Record,
}

#[derive(Args, Clone)]
struct StackArgs {
    #[arg(long, value_enum, default_value = "async")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "mock")]
    llm: LlmArg,
    /// Trace file for `--llm replay` and `--llm record`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Backend used underneath `--llm record`.
    #[arg(long, value_enum, default_value = "mock")]
    record_from: LlmArg,
    /// Simulated latency of every mock call.
    #[arg(long, default_value_t = 100)]
    latency_ms: u64,
    /// Random extra mock latency, up to this many milliseconds.
    #[arg(long, default_value_t = 0)]
    jitter_ms: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Deliver callbacks in completion order instead of submission order.
    #[arg(long)]
    no_seq: bool,
    /// Simulate latency on a virtual clock instead of sleeping.
    #[arg(long)]
    virtual_clock: bool,
    #[arg(long)]
    json: bool,
}

impl StackArgs {
    fn spec(&self) -> Result<StackSpec, Error> {
        let mode = match self.mode {
            ModeArg::Async => RunMode::Async,
            ModeArg::Sync => RunMode::Sync,
        };
        let trace_path = || {
            self.trace
                .clone()
                .ok_or_else(|| Error::Config("--trace PATH is required for replay and record".into()))
        };
        let base = |arg: LlmArg| -> Result<LlmSpec, Error> {
            match arg {
                LlmArg::Mock => Ok(LlmSpec::Mock),
                LlmArg::Live => Ok(LlmSpec::Live(LlmConfig::from_env())),
                LlmArg::Replay => Ok(LlmSpec::Replay(trace_path()?)),
                LlmArg::Record => Err(Error::Config("record cannot wrap another record".into())),
            }
        };
        let llm = match self.llm {
            LlmArg::Record => LlmSpec::Record(trace_path()?, Box::new(base(self.record_from)?)),
            other => base(other)?,
        };
        let spec = StackSpec {
            mode,
            llm,
            seq: mode == RunMode::Async && !self.no_seq,
            mock_latency_ms: self.latency_ms,
            mock_jitter_ms: self.jitter_ms,
            seed: self.seed,
            clock: if self.virtual_clock { ClockKind::Virtual } else { ClockKind::Wall },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct ResearchArgs {
    #[arg(long, default_value = DEFAULT_AREA)]
    area: String,
    #[command(flatten)]
    stack: StackArgs,
}

#[derive(Args)]
struct TotArgs {
    /// Four positive integers.
    #[arg(num_args = 4, required = true)]
    numbers: Vec<i64>,
    #[arg(long, default_value_t = 4)]
    n_steps: usize,
    #[arg(long, default_value_t = 5)]
    n_select: usize,
    #[arg(long, default_value_t = 3)]
    n_eval: usize,
    /// Print the frontier after every step.
    #[arg(long)]
    verbose: bool,
    #[command(flatten)]
    stack: StackArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum WorkflowArg {
    Tot,
    ResearchTopics,
}

impl From<WorkflowArg> for Workflow {
    fn from(w: WorkflowArg) -> Self {
        match w {
            WorkflowArg::Tot => Workflow::Tot,
            WorkflowArg::ResearchTopics => Workflow::ResearchTopics,
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(value_enum)]
    workflow: WorkflowArg,
    /// Inputs: four numbers such as "4 9 10 13" for tot, an area for
    /// research-topics. Defaults to the standard inputs.
    #[arg(long = "input")]
    inputs: Vec<String>,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long, default_value_t = 100)]
    latency_ms: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    virtual_clock: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum TraceCommand {
    /// Run a workflow and write its LLM calls to PATH.
    Record {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "research-topics")]
        workflow: WorkflowArg,
        #[arg(long)]
        input: Option<String>,
        #[command(flatten)]
        stack: StackArgs,
    },
    /// Run a workflow answering every LLM call from PATH.
    Replay {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "research-topics")]
        workflow: WorkflowArg,
        #[arg(long)]
        input: Option<String>,
        #[command(flatten)]
        stack: StackArgs,
    },
    /// Print one row per recorded call.
    Inspect {
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum CalcCommand {
    /// Evaluate a program and print its output and final value.
    Run {
        file: PathBuf,
        #[arg(long)]
        multishot: bool,
        #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
        step_limit: usize,
    },
    /// Print every configuration of the run, one per line.
    Trace {
        file: PathBuf,
        #[arg(long)]
        multishot: bool,
        #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
        step_limit: usize,
    },
}

fn fail(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_code(err)
}

fn stats_json(stats: &RunStats) -> serde_json::Value {
    json!({ "elapsed_s": stats.elapsed.as_secs_f64(), "llm_calls": stats.llm_calls })
}

fn research(area: &str, stack: &StackArgs) -> i32 {
    let spec = match stack.spec() {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let sink = LogSink::buffer();
    match run_research_topics(&spec, area, sink.clone()) {
        Ok((report, stats)) => {
            if stack.json {
                let mut out = serde_json::to_value(&report).expect("report serializes");
                out["log"] = json!(sink.lines());
                out["stats"] = stats_json(&stats);
                println!("{out}");
            } else {
                for line in sink.lines() {
                    println!("{line}");
                }
                eprintln!("elapsed: {:.3} s", stats.elapsed.as_secs_f64());
            }
            EXIT_OK
        }
        Err(e) => fail(&e),
    }
}

fn parse_numbers(s: &str) -> Result<Vec<i64>, Error> {
    let ns = s
        .split(|c: char| c.is_whitespace() || c == ',' || c == ';')
        .filter(|t| !t.is_empty())
        .map(|t| t.trim_matches(|c| c == '[' || c == ']').parse::<i64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Error::Config(format!("bad input {s:?}: {e}")))?;
    if ns.len() != 4 {
        return Err(Error::Config(format!("expected four numbers, got {s:?}")));
    }
    Ok(ns)
}

fn tot(args: &TotArgs, numbers: &[i64]) -> i32 {
    let spec = match args.stack.spec() {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let params = TotParams {
        n_steps: args.n_steps,
        n_select: args.n_select,
        n_eval: args.n_eval,
    };
    let verbose = args.verbose && !args.stack.json;
    let result = run_tot(&spec, numbers, params, |step, frontier| {
        if verbose {
            println!("step {}:", step + 1);
            for s in frontier {
                println!("  {s}");
            }
        }
    });
    let (outcome, stats) = match result {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if args.stack.json {
        let frontier: Vec<String> = outcome.frontier.iter().map(|s| s.to_string()).collect();
        let out = json!({
            "input": numbers,
            "frontier": frontier,
            "answer": outcome.answer,
            "stats": stats_json(&stats),
        });
        println!("{out}");
    } else {
        println!("frontier:");
        for s in &outcome.frontier {
            println!("  {s}");
        }
        match &outcome.answer {
            Some(a) => println!("answer: {a}"),
            None => println!("answer: none"),
        }
        eprintln!("elapsed: {:.3} s", stats.elapsed.as_secs_f64());
    }
    // Fewer than four steps cannot reach a validated answer.
    if outcome.answer.is_none() && params.n_steps >= 4 {
        EXIT_NO_SOLUTION
    } else {
        EXIT_OK
    }
}

fn run_bench(args: &BenchArgs) -> i32 {
    let workflow: Workflow = args.workflow.into();
    let inputs = if args.inputs.is_empty() {
        match workflow {
            Workflow::Tot => table_inputs(),
            Workflow::ResearchTopics => vec![BenchInput::Area(DEFAULT_AREA.into())],
        }
    } else {
        let parsed: Result<Vec<BenchInput>, Error> = args
            .inputs
            .iter()
            .map(|s| match workflow {
                Workflow::Tot => parse_numbers(s).map(BenchInput::Numbers),
                Workflow::ResearchTopics => Ok(BenchInput::Area(s.clone())),
            })
            .collect();
        match parsed {
            Ok(p) => p,
            Err(e) => return fail(&e),
        }
    };
    let mut cfg = BenchConfig::new(workflow, inputs);
    cfg.trials = args.trials;
    cfg.latency_ms = args.latency_ms;
    cfg.seed = args.seed;
    cfg.clock = if args.virtual_clock { ClockKind::Virtual } else { ClockKind::Wall };
    match bench(&cfg) {
        Ok(report) => {
            if args.json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print!("{}", report.table());
            }
            EXIT_OK
        }
        Err(e) => fail(&e),
    }
}

fn trace_run(
    path: PathBuf,
    workflow: WorkflowArg,
    input: Option<String>,
    stack: &StackArgs,
    llm: LlmArg,
) -> i32 {
    let mut stack = stack.clone();
    stack.trace = Some(path);
    if llm == LlmArg::Record && stack.llm == LlmArg::Live {
        stack.record_from = LlmArg::Live;
    }
    stack.llm = llm;
    match workflow {
        WorkflowArg::ResearchTopics => {
            research(input.as_deref().unwrap_or(DEFAULT_AREA), &stack)
        }
        WorkflowArg::Tot => {
            let numbers = match parse_numbers(input.as_deref().unwrap_or("4 9 10 13")) {
                Ok(n) => n,
                Err(e) => return fail(&e),
            };
            let args = TotArgs {
                numbers: numbers.clone(),
                n_steps: 4,
                n_select: 5,
                n_eval: 3,
                verbose: false,
                stack,
            };
            tot(&args, &numbers)
        }
    }
}

fn inspect(path: &PathBuf, as_json: bool) -> i32 {
    let trace = match Trace::load(path) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    if as_json {
        print!("{}", trace.to_jsonl());
    } else {
        println!("{} records", trace.len());
        for row in inspect_trace(&trace) {
            println!("{row}");
        }
    }
    EXIT_OK
}

fn calc(file: &PathBuf, multishot: bool, step_limit: usize, trace: bool) -> i32 {
    let src = match std::fs::read_to_string(file) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", file.display());
            return EXIT_CONFIG;
        }
    };
    let prog = match parse_program(&src) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", file.display());
            return EXIT_CONFIG;
        }
    };
    let mode = if multishot { Mode::MultiShot } else { Mode::OneShot };
    let mut machine = Machine::new(mode).with_step_limit(step_limit);
    if trace {
        return match machine.trace(&prog) {
            Ok(t) => {
                for line in t.lines() {
                    println!("{line}");
                }
                match t.end {
                    llm_effects::calculus::TraceEnd::Terminal(_) => EXIT_OK,
                    _ => EXIT_FAILURE,
                }
            }
            Err(e) => calc_fail(&e),
        };
    }
    match machine.eval(&prog) {
        Ok(out) => {
            for v in &out.output {
                println!("{}", v.render());
            }
            println!("=> {}", out.value);
            EXIT_OK
        }
        Err(e) => calc_fail(&e),
    }
}

fn calc_fail(err: &CalcError) -> i32 {
    eprintln!("error: {err}");
    match err {
        CalcError::Parse(_) | CalcError::MultiShotRequired(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(RunCommand::ResearchTopics(a)) => research(&a.area, &a.stack),
        Command::Run(RunCommand::Tot(a)) => {
            let numbers = a.numbers.clone();
            tot(&a, &numbers)
        }
        Command::Bench(a) => run_bench(&a),
        Command::Trace(TraceCommand::Record { path, workflow, input, stack }) => {
            trace_run(path, workflow, input, &stack, LlmArg::Record)
        }
        Command::Trace(TraceCommand::Replay { path, workflow, input, stack }) => {
            trace_run(path, workflow, input, &stack, LlmArg::Replay)
        }
        Command::Trace(TraceCommand::Inspect { path, json }) => inspect(&path, json),
        Command::Calc(CalcCommand::Run { file, multishot, step_limit }) => {
            calc(&file, multishot, step_limit, false)
        }
        Command::Calc(CalcCommand::Trace { file, multishot, step_limit }) => {
            calc(&file, multishot, step_limit, true)
        }
    };
    ExitCode::from(code as u8)
}
