//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::cell::RefCell;
use std::io::ErrorKind;
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::rc::Rc;
use std::time::{Duration, Instant};

use num_rational::Rational64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use llm_effects::bench::{
    bench, run_research_topics, run_tot, table_inputs, BenchConfig, LlmSpec, RunMode, StackSpec,
    Workflow,
};
use llm_effects::calculus::{
    parse_program, run_source, trace_steps, Clause, Comp, HandlerDef, Mode, Rule, Step, TraceEnd,
    Val, DECIDE_FAIL,
};
use llm_effects::runtime::{async_, sleep_for, AsyncHandler, AsyncSeqHandler, ClockKind, Task};
use llm_effects::workflows::{
    brute_solve, log, LogDateHandler, LogHandler, LogSink, TotParams, DEFAULT_AREA,
};
use llm_effects::{create_operation, Callback, HandlerFrame, HandlerStack, Value};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, budget: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < budget, || format!("took {t:.2?}, budget {budget:?}"))
}

// 1 -------------------------------------------------------------------------

fn hello_world() -> Outcome {
    let start = Instant::now();
    let sink = LogSink::buffer();
    let stack = HandlerStack::new();
    let _info = stack.push(LogHandler::new(sink.clone())).map_err(|e| e.to_string())?;
    let _date = stack.push(LogDateHandler::new(sink.clone())).map_err(|e| e.to_string())?;
    log(&stack, "Hello World!").map_err(|e| e.to_string())?;
    let lines = sink.lines();
    ensure(lines.len() == 2, || format!("expected 2 lines, got {lines:?}"))?;
    ensure(lines[0].starts_with("[DATE] "), || format!("first line {:?}", lines[0]))?;
    ensure(lines[1] == "[INFO] Hello World!", || format!("second line {:?}", lines[1]))?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("{:?} then {:?}", lines[0], lines[1]))
}

// 2 -------------------------------------------------------------------------

fn callback_order(latencies: &[u64], seq: bool) -> Vec<i64> {
    let order: Rc<RefCell<Vec<i64>>> = Rc::default();
    let stack = HandlerStack::new();
    let mut scopes = vec![stack.push(AsyncHandler::with_clock(ClockKind::Virtual)).unwrap()];
    if seq {
        scopes.push(stack.push(AsyncSeqHandler::new()).unwrap());
    }
    for (i, &ms) in latencies.iter().enumerate() {
        let o = Rc::clone(&order);
        let cb = Callback::new(move |v| {
            o.borrow_mut().push(v.as_int().unwrap());
            Ok(v)
        });
        let task = Task::new(move |ctx| async move {
            sleep_for(&ctx, Duration::from_millis(ms))?.await?;
            Ok(Value::Int(i as i64))
        });
        async_(&stack, task, Some(cb)).unwrap();
    }
    while let Some(mut s) = scopes.pop() {
        s.release().unwrap();
    }
    let out = order.borrow().clone();
    out
}

fn sequential_callbacks() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(2);
    let (mut ordered, mut control_disorder) = (0, 0);
    for _ in 0..200 {
        let n = rng.gen_range(1..=50);
        let lat: Vec<u64> = (0..n).map(|_| rng.gen_range(0..=50)).collect();
        let want: Vec<i64> = (0..n as i64).collect();
        if callback_order(&lat, true) == want {
            ordered += 1;
        }
        let control = callback_order(&lat, false);
        let mut sorted = control.clone();
        sorted.sort();
        ensure(sorted == want, || "control run lost callbacks".into())?;
        if control != want {
            control_disorder += 1;
        }
    }
    ensure(ordered == 200, || format!("{ordered}/200 cases in submission order"))?;
    ensure(control_disorder >= 1, || "control never reordered".into())?;
    within(start, Duration::from_secs(30))?;
    Ok(format!("200/200 ordered; control out of order in {control_disorder}/200"))
}

// 3 -------------------------------------------------------------------------

fn research_speedup() -> Outcome {
    let start = Instant::now();
    let run = |mode| {
        run_research_topics(&StackSpec::mock(mode, 200), DEFAULT_AREA, LogSink::buffer())
            .map(|(r, s)| (r, s.elapsed.as_secs_f64()))
            .map_err(|e| e.to_string())
    };
    let (report, async_s) = run(RunMode::Async)?;
    let (_, sync_s) = run(RunMode::Sync)?;
    let speedup = sync_s / async_s;
    ensure(report.entries.len() == 8, || format!("{} topics", report.entries.len()))?;
    ensure(sync_s >= 1.8, || format!("sync {sync_s:.3} s < 1.8 s"))?;
    ensure(async_s <= 0.8, || format!("async {async_s:.3} s > 0.8 s"))?;
    ensure(speedup >= 3.0, || format!("speedup {speedup:.2}"))?;
    within(start, Duration::from_secs(5))?;
    Ok(format!("sync {sync_s:.3} s, async {async_s:.3} s, speedup {speedup:.2}x"))
}

// 4 -------------------------------------------------------------------------

fn tot_speedup() -> Outcome {
    let start = Instant::now();
    let mut cfg = BenchConfig::new(Workflow::Tot, table_inputs());
    cfg.trials = 1;
    cfg.latency_ms = 100;
    let report = bench(&cfg).map_err(|e| e.to_string())?;
    print!("{}", report.table());
    for row in &report.rows {
        ensure(row.speedup >= 5.0, || format!("{} speedup {:.2}", row.input, row.speedup))?;
        let recomputed = (row.sync_s / row.async_s * 1000.0).round() / 1000.0;
        ensure(recomputed == row.speedup, || format!("speedup cell {} != {recomputed}", row.speedup))?;
    }
    within(start, Duration::from_secs(180))?;
    let cells: Vec<String> = report.rows.iter().map(|r| format!("{:.2}x", r.speedup)).collect();
    Ok(format!("speedups {}; mean {:.2}x", cells.join(", "), report.mean_speedup))
}

// 5 -------------------------------------------------------------------------

/// Independent check of an answer: evaluates `expr` with exact rationals
/// and collects the literals it uses.
fn eval_answer(text: &str) -> Option<(Rational64, Vec<i64>)> {
    let mut toks = vec![];
    let cs: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    let mut i = 0;
    while i < cs.len() {
        if cs[i].is_ascii_digit() {
            let j = (i..cs.len()).find(|&j| !cs[j].is_ascii_digit()).unwrap_or(cs.len());
            toks.push(cs[i..j].iter().collect::<String>());
            i = j;
        } else {
            toks.push(cs[i].to_string());
            i += 1;
        }
    }
    fn expr(t: &[String], p: &mut usize, lits: &mut Vec<i64>) -> Option<Rational64> {
        let mut v = term(t, p, lits)?;
        while let Some(op) = t.get(*p).filter(|s| *s == "+" || *s == "-") {
            let op = op.clone();
            *p += 1;
            let r = term(t, p, lits)?;
            v = if op == "+" { v + r } else { v - r };
        }
        Some(v)
    }
    fn term(t: &[String], p: &mut usize, lits: &mut Vec<i64>) -> Option<Rational64> {
        let mut v = atom(t, p, lits)?;
        while let Some(op) = t.get(*p).filter(|s| *s == "*" || *s == "/") {
            let op = op.clone();
            *p += 1;
            let r = atom(t, p, lits)?;
            v = if op == "*" {
                v * r
            } else if r == Rational64::from_integer(0) {
                return None;
            } else {
                v / r
            };
        }
        Some(v)
    }
    fn atom(t: &[String], p: &mut usize, lits: &mut Vec<i64>) -> Option<Rational64> {
        let tok = t.get(*p)?.clone();
        *p += 1;
        if tok == "(" {
            let v = expr(t, p, lits)?;
            (t.get(*p)? == ")").then_some(())?;
            *p += 1;
            Some(v)
        } else {
            let n: i64 = tok.parse().ok()?;
            lits.push(n);
            Some(Rational64::from_integer(n))
        }
    }
    let (mut p, mut lits) = (0, vec![]);
    let v = expr(&toks, &mut p, &mut lits)?;
    (p == toks.len()).then_some((v, lits))
}

fn tot_correctness() -> Outcome {
    let start = Instant::now();
    let mut inputs: Vec<Vec<i64>> = vec![vec![4, 9, 10, 13], vec![2, 10, 10, 13], vec![5, 6, 8, 13]];
    let mut rng = StdRng::seed_from_u64(24);
    while inputs.len() < 23 {
        let q: Vec<i64> = (0..4).map(|_| rng.gen_range(1..=13)).collect();
        if brute_solve(&q).is_some() && !inputs.contains(&q) {
            inputs.push(q);
        }
    }
    let spec = StackSpec::mock(RunMode::Async, 0).with_clock(ClockKind::Virtual);
    for q in &inputs {
        let (outcome, _) = run_tot(&spec, q, TotParams::default(), |_, _| {})
            .map_err(|e| format!("{q:?}: {e}"))?;
        let answer = outcome.answer.ok_or_else(|| format!("{q:?}: no answer"))?;
        let lhs = answer.split('=').next().unwrap_or_default();
        let (v, mut lits) = eval_answer(lhs).ok_or_else(|| format!("{q:?}: cannot read {answer:?}"))?;
        let mut want = q.clone();
        want.sort();
        lits.sort();
        ensure(v == Rational64::from_integer(24), || format!("{q:?}: {answer} is {v}"))?;
        ensure(lits == want, || format!("{q:?}: {answer} uses {lits:?}"))?;
    }
    within(start, Duration::from_secs(120))?;
    Ok(format!("{} inputs solved and checked", inputs.len()))
}

// 6 -------------------------------------------------------------------------

fn record_replay_identity() -> Outcome {
    let start = Instant::now();
    // Anything that tried the network would connect here.
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    listener.set_nonblocking(true).map_err(|e| e.to_string())?;
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    std::env::set_var("LLM_BASE_URL", &url);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = dir.path().join("first.trace.jsonl");
    let second = dir.path().join("second.trace.jsonl");
    let mut spec = StackSpec::mock(RunMode::Async, 40).with_clock(ClockKind::Virtual);
    spec.mock_jitter_ms = 30;
    spec.seed = 6;
    let output = |spec: &StackSpec| -> Result<String, String> {
        let sink = LogSink::buffer();
        let (report, _) =
            run_research_topics(spec, DEFAULT_AREA, sink.clone()).map_err(|e| e.to_string())?;
        let mut out = sink.lines().join("\n");
        out.push('\n');
        out.push_str(&serde_json::to_string(&report).unwrap());
        Ok(out)
    };
    let recorded = output(&spec.clone().with_llm(LlmSpec::Record(first.clone(), Box::new(LlmSpec::Mock))))?;
    let replayed = output(&spec.clone().with_llm(LlmSpec::Record(
        second.clone(),
        Box::new(LlmSpec::Replay(first.clone())),
    )))?;
    std::env::remove_var("LLM_BASE_URL");
    ensure(recorded.as_bytes() == replayed.as_bytes(), || "replayed output differs".into())?;
    let (a, b) = (std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    ensure(a == b, || "re-recorded trace differs".into())?;
    let connections = match listener.accept() {
        Ok(_) => 1,
        Err(e) if e.kind() == ErrorKind::WouldBlock => 0,
        Err(e) => return Err(e.to_string()),
    };
    ensure(connections == 0, || "network connection attempted".into())?;
    within(start, Duration::from_secs(5))?;
    Ok(format!("{} output bytes identical, trace identical, 0 connections", recorded.len()))
}

// 7 -------------------------------------------------------------------------

const GOLDEN: [(&str, &str, &[&str]); 5] = [
    (
        "bind",
        "do x <- return 1 in return x",
        &["[start] ⟨∅; do x <- return 1 in return x⟩", "[LetBind] ⟨∅; return 1⟩", "terminal: 1"],
    ),
    (
        "branches",
        "do y <- if false then return 1 else return 2 in if true then return y else return 0",
        &[
            "[start] ⟨∅; do y <- if false then return 1 else return 2 in if true then return y else return 0⟩",
            "[LetStep(IfFalse)] ⟨∅; do y <- return 2 in if true then return y else return 0⟩",
            "[LetBind] ⟨∅; if true then return 2 else return 0⟩",
            "[IfTrue] ⟨∅; return 2⟩",
            "terminal: 2",
        ],
    ),
    (
        "handle",
        "with handler {op(x) -> return x} handle do y <- op(5) in return y",
        &[
            "[start] ⟨∅; with handler {op(x) -> return x} handle do y <- op(5) in return y⟩",
            "[With] ⟨{op} : ∅; {| do y <- op(5) in return y |}⟩",
            "[OpHandle] ⟨∅; do y <- return 5 in with handler {op(x) -> return x} handle return y⟩",
            "[LetBind] ⟨∅; with handler {op(x) -> return x} handle return 5⟩",
            "[With] ⟨{op} : ∅; {| return 5 |}⟩",
            "[Unwrap] ⟨∅; return 5⟩",
            "terminal: 5",
        ],
    ),
    (
        "forward",
        "with handler {ask(x) -> return 7} handle with handler {tell(x) -> return 0} handle do y <- ask(1) in return y",
        &[
            "[start] ⟨∅; with handler {ask(x) -> return 7} handle with handler {tell(x) -> return 0} handle do y <- ask(1) in return y⟩",
            "[With] ⟨{ask} : ∅; {| with handler {tell(x) -> return 0} handle do y <- ask(1) in return y |}⟩",
            "[With] ⟨{tell} : {ask} : ∅; {| {| do y <- ask(1) in return y |} |}⟩",
            "[OpForward] ⟨{ask} : ∅; {| do y <- ask(1) in with handler {tell(x) -> return 0} handle return y |}⟩",
            "[OpHandle] ⟨∅; do y <- return 7 in with handler {ask(x) -> return 7} handle with handler {tell(x) -> return 0} handle return y⟩",
            "[LetBind] ⟨∅; with handler {ask(x) -> return 7} handle with handler {tell(x) -> return 0} handle return 7⟩",
            "[With] ⟨{ask} : ∅; {| with handler {tell(x) -> return 0} handle return 7 |}⟩",
            "[With] ⟨{tell} : {ask} : ∅; {| {| return 7 |} |}⟩",
            "[Unwrap] ⟨{ask} : ∅; {| return 7 |}⟩",
            "[Unwrap] ⟨∅; return 7⟩",
            "terminal: 7",
        ],
    ),
    (
        "stuck",
        "do z <- with handler {op(x) -> return x} handle fail(0) in return z",
        &[
            "[start] ⟨∅; do z <- with handler {op(x) -> return x} handle fail(0) in return z⟩",
            "[LetStep(With)] ⟨{op} : ∅; do z <- {| fail(0) |} in return z⟩",
            "[LetStep(OpForward)] ⟨∅; do z <- do %1 <- fail(0) in with handler {op(x) -> return x} handle return %1 in return z⟩",
            "stuck: unhandled operation fail",
        ],
    ),
];

fn golden_traces() -> Outcome {
    let start = Instant::now();
    let mut rules = std::collections::BTreeSet::new();
    for (name, src, want) in GOLDEN {
        let prog = parse_program(src).map_err(|e| format!("{name}: {e}"))?;
        let t = trace_steps(&prog, Mode::OneShot).map_err(|e| format!("{name}: {e}"))?;
        let got = t.lines();
        for (i, (g, w)) in got.iter().zip(want.iter()).enumerate() {
            ensure(g == w, || format!("{name} line {i}:\n  got  {g}\n  want {w}"))?;
        }
        ensure(got.len() == want.len(), || format!("{name}: {} lines, want {}", got.len(), want.len()))?;
        for s in &t.steps {
            rules.insert(format!("{:?}", s.rule));
            if s.let_depth > 0 {
                rules.insert("LetStep".into());
            }
        }
        if matches!(t.end, TraceEnd::Stuck(_)) {
            rules.insert("Stuck".into());
        }
    }
    for r in ["LetStep", "LetBind", "IfTrue", "IfFalse", "With", "OpHandle", "OpForward", "Stuck"] {
        ensure(rules.contains(r), || format!("{r} not covered"))?;
    }
    within(start, Duration::from_secs(1))?;
    Ok(format!("5 traces match; covered {}", rules.into_iter().collect::<Vec<_>>().join(" ")))
}

// 8 -------------------------------------------------------------------------

struct ProgramGen {
    rng: StdRng,
    next_var: usize,
}

impl ProgramGen {
    const OPS: [&'static str; 3] = ["a", "b", "print"];

    fn var(&mut self) -> String {
        self.next_var += 1;
        format!("v{}", self.next_var)
    }

    fn value(&mut self, scope: &[String]) -> Val {
        match self.rng.gen_range(0..4) {
            0 if !scope.is_empty() => Val::Var(scope[self.rng.gen_range(0..scope.len())].clone()),
            1 => Val::True,
            2 => Val::False,
            _ => Val::Int(self.rng.gen_range(0..5)),
        }
    }

    fn op(&mut self) -> String {
        Self::OPS[self.rng.gen_range(0..Self::OPS.len())].to_owned()
    }

    fn comp(&mut self, depth: usize, scope: &mut Vec<String>) -> Comp {
        let choice = if depth <= 1 { self.rng.gen_range(0..2) } else { self.rng.gen_range(0..6) };
        match choice {
            0 => Comp::Return(self.value(scope)),
            1 => Comp::Op(self.op(), self.value(scope)),
            2 | 3 => {
                let x = self.var();
                let c1 = self.comp(depth - 1, scope);
                scope.push(x.clone());
                let c2 = self.comp(depth - 1, scope);
                scope.pop();
                Comp::let_(x, c1, c2)
            }
            4 => {
                let v = self.value(scope);
                let (a, b) = (self.comp(depth - 1, scope), self.comp(depth - 1, scope));
                Comp::if_(v, a, b)
            }
            _ => {
                let mut clauses: Vec<Clause> = vec![];
                for op in Self::OPS {
                    if self.rng.gen_bool(0.5) {
                        let param = self.var();
                        scope.push(param.clone());
                        let body = self.comp(depth - 1, scope);
                        scope.pop();
                        clauses.push(Clause { op: op.into(), param, resume: None, body });
                    }
                }
                if clauses.is_empty() {
                    let param = self.var();
                    clauses.push(Clause { op: "a".into(), param, resume: None, body: Comp::Return(Val::Int(0)) });
                }
                let body = self.comp(depth - 1, scope);
                Comp::with(HandlerDef { clauses }, body)
            }
        }
    }
}

/// Every rule whose left-hand side matches `c`, checked one pattern at a
/// time so overlapping rules would all be reported.
fn applicable(c: &Comp, stack: &mut Vec<Rc<HandlerDef>>) -> Vec<Step> {
    let at = |rule| Step { rule, let_depth: 0 };
    let op_rule = |op: &str, v: &Val, stack: &[Rc<HandlerDef>]| -> Option<Rule> {
        if matches!(v, Val::Var(_)) {
            return None;
        }
        match stack.last() {
            Some(h) if h.clause(op).is_some() => Some(Rule::OpHandle),
            Some(_) => Some(Rule::OpForward),
            None if op == "print" => Some(Rule::Print),
            None => None,
        }
    };
    let mut out = vec![];
    if let Comp::Let(_, c1, _) = c {
        if let Comp::Return(v) = &**c1 {
            if !matches!(v, Val::Var(_)) {
                out.push(at(Rule::LetBind));
            }
        }
        if let Comp::Op(op, v) = &**c1 {
            out.extend(op_rule(op, v, stack).map(at));
        }
        if !matches!(**c1, Comp::Return(_) | Comp::Op(..)) {
            for s in applicable(c1, stack) {
                out.push(Step { rule: s.rule, let_depth: s.let_depth + 1 });
            }
        }
    }
    if let Comp::Op(op, v) = c {
        out.extend(op_rule(op, v, stack).map(at));
    }
    if let Comp::If(Val::True, ..) = c {
        out.push(at(Rule::IfTrue));
    }
    if let Comp::If(Val::False, ..) = c {
        out.push(at(Rule::IfFalse));
    }
    if let Comp::With(..) = c {
        out.push(at(Rule::With));
    }
    if let Comp::Handling(_, inner) = c {
        if let Comp::Return(_) = **inner {
            out.push(at(Rule::Unwrap));
        }
    }
    if let Comp::Handling(h, inner) = c {
        if !matches!(**inner, Comp::Return(_)) {
            stack.push(Rc::clone(h));
            out.extend(applicable(inner, stack));
            stack.pop();
        }
    }
    if let Comp::Resume(Val::Cont(_), w) = c {
        if !matches!(w, Val::Var(_)) {
            out.push(at(Rule::Resume));
        }
    }
    out
}

fn determinism_property() -> Outcome {
    let start = Instant::now();
    let mut gen = ProgramGen { rng: StdRng::seed_from_u64(8), next_var: 0 };
    let noop = Rc::new(HandlerDef {
        clauses: vec![Clause { op: "unused".into(), param: "u".into(), resume: None, body: Comp::Return(Val::Int(0)) }],
    });
    let (mut configs, mut terminated, mut stuck) = (0, 0, 0);
    for i in 0..1000 {
        let depth = gen.rng.gen_range(1..=6);
        let prog = gen.comp(depth, &mut vec![]);
        ensure(prog.depth() <= 6, || format!("program {i} has depth {}", prog.depth()))?;
        let t = trace_steps(&prog, Mode::OneShot).map_err(|e| format!("program {i}: {e}"))?;
        for (k, cfg) in t.configs.iter().enumerate() {
            configs += 1;
            let rules = applicable(&cfg.comp, &mut vec![]);
            match t.steps.get(k) {
                Some(step) => ensure(rules == [*step], || {
                    format!("program {i} config {k} {}: machine {step}, matcher {rules:?}", cfg)
                })?,
                None => ensure(rules.is_empty(), || {
                    format!("program {i} final config {}: matcher {rules:?}", cfg)
                })?,
            }
        }
        let wrapped = Comp::With(Rc::clone(&noop), Box::new(prog.clone()));
        let tw = trace_steps(&wrapped, Mode::OneShot).map_err(|e| e.to_string())?;
        match (&t.end, &tw.end) {
            (TraceEnd::Terminal(a), TraceEnd::Terminal(b)) => {
                terminated += 1;
                ensure(a == b && t.output == tw.output, || {
                    format!("program {i}: wrapping changed {a} to {b}\n  {prog}")
                })?;
            }
            (TraceEnd::Stuck(a), TraceEnd::Stuck(b)) => {
                stuck += 1;
                ensure(a == b, || format!("program {i}: stuck {a} became {b}"))?;
            }
            (a, b) => return Err(format!("program {i}: {a:?} became {b:?}\n  {prog}")),
        }
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("{configs} configurations, one rule each; {terminated} terminating, {stuck} stuck; wrapping preserved results"))
}

// 9 -------------------------------------------------------------------------

fn decide_fail() -> Outcome {
    let start = Instant::now();
    let out = run_source(DECIDE_FAIL, Mode::MultiShot).map_err(|e| e.to_string())?;
    ensure(out.output == [Val::True, Val::False], || format!("printed {:?}", out.output))?;
    within(start, Duration::from_secs(1))?;
    Ok("printed (true, false)".into())
}

// 10 ------------------------------------------------------------------------

type Printer = Rc<RefCell<Vec<String>>>;

fn runtime_program(i: usize) -> Vec<String> {
    let out: Printer = Rc::default();
    let print = |v: Value| out.borrow_mut().push(v.render());
    let stack = HandlerStack::new();
    let (ask, tell, echo, flip, get) = (
        create_operation("ask"),
        create_operation("tell"),
        create_operation("echo"),
        create_operation("flip"),
        create_operation("get"),
    );
    match i {
        0 => {
            let sink = LogSink::buffer();
            let _i = stack.push(LogHandler::new(sink.clone())).unwrap();
            let _d = stack.push(LogDateHandler::new(sink.clone())).unwrap();
            log(&stack, "Hello World!").unwrap();
            for line in sink.lines() {
                match line.strip_prefix("[INFO] ") {
                    Some(msg) => print(msg.into()),
                    None => print(line.split(' ').next().unwrap().into()),
                }
            }
        }
        1 => {
            let _e = stack.push(HandlerFrame::new("Echo").on(&echo, |_, a| Ok(a[0].clone()))).unwrap();
            print(stack.perform(&echo, &[Value::Int(3)]).unwrap());
        }
        2 => {
            let _a = stack.push(HandlerFrame::new("Ask").on(&ask, |_, _| Ok(Value::Int(7)))).unwrap();
            let _t = stack.push(HandlerFrame::new("Tell").on(&tell, |_, _| Ok(Value::Int(0)))).unwrap();
            print(stack.perform(&ask, &[Value::Int(1)]).unwrap());
        }
        3 => {
            let _f = stack.push(HandlerFrame::new("Flip").on(&flip, |_, _| Ok(Value::Bool(true)))).unwrap();
            let b = stack.perform(&flip, &[Value::Int(0)]).unwrap();
            print(if b == Value::Bool(true) { "heads".into() } else { "tails".into() });
        }
        _ => {
            let _a = stack.push(HandlerFrame::new("Ask").on(&ask, |_, _| Ok(Value::Int(10)))).unwrap();
            let o = Rc::clone(&out);
            let a2 = ask.clone();
            let _g = stack
                .push(HandlerFrame::new("Get").on(&get, move |ctx, args| {
                    let v = ctx.perform(&a2, args)?;
                    o.borrow_mut().push(v.render());
                    Ok(v)
                }))
                .unwrap();
            print(stack.perform(&get, &[Value::Int(1)]).unwrap());
        }
    }
    let v = out.borrow().clone();
    v
}

const CROSS: [&str; 5] = [
    r#"with handler {log(m) -> print(m)} handle
       with handler {log(m) -> do d <- print("[DATE]") in log(m)} handle
       log("Hello World!")"#,
    "with handler {echo(x) -> return x} handle do a <- echo(3) in print(a)",
    "with handler {ask(x) -> return 7} handle with handler {tell(x) -> return 0} handle do a <- ask(1) in print(a)",
    r#"with handler {flip(x) -> return true} handle do b <- flip(0) in if b then print("heads") else print("tails")"#,
    "with handler {ask(x) -> return 10} handle
     with handler {get(x) -> do v <- ask(x) in do p <- print(v) in return v} handle
     do r <- get(1) in print(r)",
];

fn cross_system() -> Outcome {
    let start = Instant::now();
    for (i, src) in CROSS.iter().enumerate() {
        let calc = run_source(src, Mode::OneShot).map_err(|e| format!("program {i}: {e}"))?;
        let calc_out: Vec<String> = calc.output.iter().map(Val::render).collect();
        let rt_out = runtime_program(i);
        ensure(calc_out == rt_out, || format!("program {i}: calculus {calc_out:?}, runtime {rt_out:?}"))?;
    }
    within(start, Duration::from_secs(1))?;
    Ok("5 programs agree".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("dispatch composition", hello_world),
        ("sequential callbacks", sequential_callbacks),
        ("research topics speedup", research_speedup),
        ("tree-of-thoughts speedup", tot_speedup),
        ("tree-of-thoughts correctness", tot_correctness),
        ("record/replay identity", record_replay_identity),
        ("calculus golden traces", golden_traces),
        ("calculus determinism", determinism_property),
        ("multi-shot backtracking", decide_fail),
        ("cross-system agreement", cross_system),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let t = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({t:.2} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({t:.2} s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
