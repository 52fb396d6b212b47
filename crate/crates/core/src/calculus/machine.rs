use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use super::ast::{Clause, Comp, Continuation, HandlerDef, Val};
use super::parser::ParseError;

pub const DEFAULT_STEP_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    OneShot,
    /// Clauses may bind their continuation and resume it any number of times.
    MultiShot,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StuckReason {
    #[error("unhandled operation {0}")]
    UnhandledOp(String),
    #[error("free variable {0}")]
    FreeVariable(String),
    #[error("expected a boolean, found {0}")]
    NonBoolean(Val),
    #[error("expected a continuation, found {0}")]
    NotAContinuation(Val),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalcError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("stuck: {0}")]
    Stuck(StuckReason),
    #[error("step limit of {0} exceeded")]
    StepLimitExceeded(usize),
    #[error("clause for {0} binds a continuation; run in multi-shot mode")]
    MultiShotRequired(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    LetBind,
    IfTrue,
    IfFalse,
    With,
    Unwrap,
    OpHandle,
    OpForward,
    Resume,
    Print,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The rule used for one step, and how many `do` frames it was under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub rule: Rule,
    pub let_depth: usize,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for _ in 0..self.let_depth {
            f.write_str("LetStep(")?;
        }
        write!(f, "{}", self.rule)?;
        for _ in 0..self.let_depth {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Handler stack (bottom to top) and the current computation.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub stack: Vec<Rc<HandlerDef>>,
    pub comp: Comp,
}

impl Config {
    pub fn new(comp: Comp) -> Self {
        Config {
            stack: stack_of(&comp),
            comp,
        }
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("⟨")?;
        for h in self.stack.iter().rev() {
            write!(f, "{} : ", h.label())?;
        }
        write!(f, "∅; {}⟩", self.comp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepResult {
    Stepped(Config, Step),
    Terminal(Val),
    Stuck(StuckReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub value: Val,
    pub output: Vec<Val>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEnd {
    Terminal(Val),
    Stuck(StuckReason),
    StepLimit,
}

/// Every configuration from the start until the run ends; `steps[i]` leads
/// from `configs[i]` to `configs[i + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub configs: Vec<Config>,
    pub steps: Vec<Step>,
    pub end: TraceEnd,
    pub output: Vec<Val>,
}

impl Trace {
    /// One line per configuration, labeled with the rule that produced it.
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.configs.len() + 1);
        for (i, c) in self.configs.iter().enumerate() {
            let label = match i {
                0 => "start".to_owned(),
                _ => self.steps[i - 1].to_string(),
            };
            out.push(format!("[{label}] {c}"));
        }
        out.push(match &self.end {
            TraceEnd::Terminal(v) => format!("terminal: {v}"),
            TraceEnd::Stuck(r) => format!("stuck: {r}"),
            TraceEnd::StepLimit => "step limit reached".to_owned(),
        });
        out
    }
}

enum Frame {
    Let(String, Comp),
    Mark(Rc<HandlerDef>),
}

fn is_redex_head(c: &Comp) -> bool {
    matches!(c, Comp::Return(_) | Comp::Op(..))
}

/// Splits off the evaluation context around the next redex.
fn decompose(mut c: Comp) -> (Vec<Frame>, Comp) {
    let mut frames = vec![];
    loop {
        c = match c {
            Comp::Let(x, c1, c2) if !is_redex_head(&c1) => {
                frames.push(Frame::Let(x, *c2));
                *c1
            }
            Comp::Handling(h, inner) if !matches!(*inner, Comp::Return(_)) => {
                frames.push(Frame::Mark(h));
                *inner
            }
            other => return (frames, other),
        };
    }
}

fn plug(frames: Vec<Frame>, mut c: Comp) -> Comp {
    for f in frames.into_iter().rev() {
        c = match f {
            Frame::Let(x, c2) => Comp::Let(x, Box::new(c), Box::new(c2)),
            Frame::Mark(h) => Comp::Handling(h, Box::new(c)),
        };
    }
    c
}

/// Installed handlers on the path to the next redex, bottom to top.
pub fn stack_of(mut c: &Comp) -> Vec<Rc<HandlerDef>> {
    let mut stack = vec![];
    loop {
        c = match c {
            Comp::Let(_, c1, _) if !is_redex_head(c1) => c1,
            Comp::Handling(h, inner) => {
                stack.push(Rc::clone(h));
                inner
            }
            _ => return stack,
        };
    }
}

fn closed(v: &Val) -> Result<(), StuckReason> {
    match v {
        Val::Var(x) => Err(StuckReason::FreeVariable(x.clone())),
        _ => Ok(()),
    }
}

/// Fresh-name supply for let-normalization and renaming.
#[derive(Debug, Default)]
pub struct Fresh(u64);

impl Fresh {
    pub fn next(&mut self) -> String {
        self.0 += 1;
        format!("%{}", self.0)
    }
}

fn subst_val(v: &Val, x: &str, w: &Val) -> Val {
    match v {
        Val::Var(y) if y == x => w.clone(),
        other => other.clone(),
    }
}

fn captures(w: &Val, binder: &str) -> bool {
    matches!(w, Val::Var(y) if y == binder)
}

/// Capture-avoiding `[w/x]c`. Substituting a continuation for `x` turns
/// calls `x(v)` into resumptions.
pub fn subst(c: &Comp, x: &str, w: &Val, fresh: &mut Fresh) -> Comp {
    match c {
        Comp::Return(v) => Comp::Return(subst_val(v, x, w)),
        Comp::Op(op, v) => {
            let v = subst_val(v, x, w);
            match w {
                Val::Cont(_) if op == x => Comp::Resume(w.clone(), v),
                Val::Var(renamed) if op == x => Comp::Op(renamed.clone(), v),
                _ => Comp::Op(op.clone(), v),
            }
        }
        Comp::Resume(k, v) => Comp::Resume(subst_val(k, x, w), subst_val(v, x, w)),
        Comp::If(v, a, b) => Comp::If(
            subst_val(v, x, w),
            Box::new(subst(a, x, w, fresh)),
            Box::new(subst(b, x, w, fresh)),
        ),
        Comp::Let(y, c1, c2) => {
            let c1 = subst(c1, x, w, fresh);
            if y == x {
                return Comp::Let(y.clone(), Box::new(c1), c2.clone());
            }
            let (y, c2) = if captures(w, y) {
                let z = fresh.next();
                let renamed = subst(c2, y, &Val::Var(z.clone()), fresh);
                (z, renamed)
            } else {
                (y.clone(), (**c2).clone())
            };
            Comp::Let(y, Box::new(c1), Box::new(subst(&c2, x, w, fresh)))
        }
        Comp::With(h, body) => Comp::With(
            Rc::new(subst_handler(h, x, w, fresh)),
            Box::new(subst(body, x, w, fresh)),
        ),
        Comp::Handling(h, body) => Comp::Handling(
            Rc::new(subst_handler(h, x, w, fresh)),
            Box::new(subst(body, x, w, fresh)),
        ),
    }
}

fn subst_handler(h: &HandlerDef, x: &str, w: &Val, fresh: &mut Fresh) -> HandlerDef {
    let clauses = h
        .clauses
        .iter()
        .map(|cl| {
            let binds_x = cl.param == x || cl.resume.as_deref() == Some(x);
            if binds_x {
                return cl.clone();
            }
            let mut cl = cl.clone();
            if captures(w, &cl.param) {
                let z = fresh.next();
                cl.body = subst(&cl.body, &cl.param, &Val::Var(z.clone()), fresh);
                cl.param = z;
            }
            if let Some(k) = cl.resume.clone().filter(|k| captures(w, k)) {
                let z = fresh.next();
                cl.body = subst(&cl.body, &k, &Val::Var(z.clone()), fresh);
                cl.resume = Some(z);
            }
            cl.body = subst(&cl.body, x, w, fresh);
            cl
        })
        .collect();
    HandlerDef { clauses }
}

/// First clause that binds a continuation, if any.
pub fn find_multishot_clause(c: &Comp) -> Option<String> {
    fn in_handler(h: &HandlerDef) -> Option<String> {
        h.clauses.iter().find_map(|cl: &Clause| {
            if cl.resume.is_some() {
                Some(cl.op.clone())
            } else {
                find_multishot_clause(&cl.body)
            }
        })
    }
    match c {
        Comp::Return(_) | Comp::Op(..) | Comp::Resume(..) => None,
        Comp::Let(_, a, b) | Comp::If(_, a, b) => {
            find_multishot_clause(a).or_else(|| find_multishot_clause(b))
        }
        Comp::With(h, body) | Comp::Handling(h, body) => {
            in_handler(h).or_else(|| find_multishot_clause(body))
        }
    }
}

/// Small-step evaluator. `print(v)` reaching the empty stack is recorded as
/// output and returns `v`.
pub struct Machine {
    mode: Mode,
    step_limit: usize,
    fresh: Fresh,
    output: Vec<Val>,
}

impl Machine {
    pub fn new(mode: Mode) -> Self {
        Machine {
            mode,
            step_limit: DEFAULT_STEP_LIMIT,
            fresh: Fresh::default(),
            output: vec![],
        }
    }

    pub fn with_step_limit(mut self, limit: usize) -> Self {
        self.step_limit = limit;
        self
    }

    pub fn output(&self) -> &[Val] {
        &self.output
    }

    pub fn step(&mut self, cfg: &Config) -> StepResult {
        let (frames, focus) = decompose(cfg.comp.clone());
        let let_depth = frames.iter().filter(|f| matches!(f, Frame::Let(..))).count();
        let stepped = |comp: Comp, rule| {
            StepResult::Stepped(Config::new(comp), Step { rule, let_depth })
        };
        match focus {
            Comp::Return(v) => match closed(&v) {
                Ok(()) => StepResult::Terminal(v),
                Err(r) => StepResult::Stuck(r),
            },
            Comp::Let(x, c1, c2) => match *c1 {
                Comp::Return(v) => {
                    if let Err(r) = closed(&v) {
                        return StepResult::Stuck(r);
                    }
                    let next = subst(&c2, &x, &v, &mut self.fresh);
                    stepped(plug(frames, next), Rule::LetBind)
                }
                Comp::Op(op, v) => self.op_redex(frames, let_depth, x, op, v, *c2),
                _ => unreachable!("decompose stops only at redex heads"),
            },
            Comp::Op(op, v) => {
                let y = self.fresh.next();
                let rest = Comp::Return(Val::Var(y.clone()));
                self.op_redex(frames, let_depth, y, op, v, rest)
            }
            Comp::If(v, a, b) => match v {
                Val::True => stepped(plug(frames, *a), Rule::IfTrue),
                Val::False => stepped(plug(frames, *b), Rule::IfFalse),
                Val::Var(x) => StepResult::Stuck(StuckReason::FreeVariable(x)),
                other => StepResult::Stuck(StuckReason::NonBoolean(other)),
            },
            Comp::With(h, c) => stepped(plug(frames, Comp::Handling(h, c)), Rule::With),
            Comp::Handling(_, inner) => stepped(plug(frames, *inner), Rule::Unwrap),
            Comp::Resume(k, w) => {
                if let Err(r) = closed(&w) {
                    return StepResult::Stuck(r);
                }
                match k {
                    Val::Cont(k) => {
                        let body = subst(&k.body, &k.var, &w, &mut self.fresh);
                        let next = Comp::With(Rc::clone(&k.handler), Box::new(body));
                        stepped(plug(frames, next), Rule::Resume)
                    }
                    Val::Var(x) => StepResult::Stuck(StuckReason::FreeVariable(x)),
                    other => StepResult::Stuck(StuckReason::NotAContinuation(other)),
                }
            }
        }
    }

    /// `do y = op(v) in c` under the context `frames`.
    fn op_redex(
        &mut self,
        mut frames: Vec<Frame>,
        let_depth: usize,
        y: String,
        op: String,
        v: Val,
        c: Comp,
    ) -> StepResult {
        if let Err(r) = closed(&v) {
            return StepResult::Stuck(r);
        }
        let step = |rule| Step { rule, let_depth };
        let Some(j) = frames.iter().rposition(|f| matches!(f, Frame::Mark(_))) else {
            if op != "print" {
                return StepResult::Stuck(StuckReason::UnhandledOp(op));
            }
            self.output.push(v.clone());
            let next = Comp::Let(y, Box::new(Comp::Return(v)), Box::new(c));
            return StepResult::Stepped(Config::new(plug(frames, next)), step(Rule::Print));
        };
        let inner = frames.split_off(j + 1);
        let Some(Frame::Mark(h)) = frames.pop() else {
            unreachable!("index points at a handler frame")
        };
        let rest = plug(inner, c);
        let (next, rule) = match h.clause(&op) {
            Some(cl) => {
                let body = subst(&cl.body, &cl.param, &v, &mut self.fresh);
                match (&cl.resume, self.mode) {
                    (Some(k), Mode::MultiShot) => {
                        let cont = Val::Cont(Rc::new(Continuation {
                            handler: Rc::clone(&h),
                            var: y,
                            body: rest,
                        }));
                        (subst(&body, k, &cont, &mut self.fresh), Rule::OpHandle)
                    }
                    (Some(_), Mode::OneShot) => {
                        return StepResult::Stuck(StuckReason::UnhandledOp(op));
                    }
                    (None, _) => {
                        let resume = Comp::With(Rc::clone(&h), Box::new(rest));
                        (Comp::Let(y, Box::new(body), Box::new(resume)), Rule::OpHandle)
                    }
                }
            }
            None => {
                let resume = Comp::With(Rc::clone(&h), Box::new(rest));
                let call = Comp::Op(op, v);
                (Comp::Let(y, Box::new(call), Box::new(resume)), Rule::OpForward)
            }
        };
        StepResult::Stepped(Config::new(plug(frames, next)), step(rule))
    }

    fn check_mode(&self, c: &Comp) -> Result<(), CalcError> {
        match (self.mode, find_multishot_clause(c)) {
            (Mode::OneShot, Some(op)) => Err(CalcError::MultiShotRequired(op)),
            _ => Ok(()),
        }
    }

    pub fn eval(&mut self, c: &Comp) -> Result<Outcome, CalcError> {
        self.check_mode(c)?;
        let mut cfg = Config::new(c.clone());
        for steps in 0..=self.step_limit {
            match self.step(&cfg) {
                StepResult::Stepped(next, _) => cfg = next,
                StepResult::Terminal(value) => {
                    return Ok(Outcome {
                        value,
                        output: std::mem::take(&mut self.output),
                        steps,
                    })
                }
                StepResult::Stuck(r) => return Err(CalcError::Stuck(r)),
            }
        }
        Err(CalcError::StepLimitExceeded(self.step_limit))
    }

    pub fn trace(&mut self, c: &Comp) -> Result<Trace, CalcError> {
        self.check_mode(c)?;
        let mut configs = vec![Config::new(c.clone())];
        let mut steps = vec![];
        let end = loop {
            if steps.len() >= self.step_limit {
                break TraceEnd::StepLimit;
            }
            match self.step(configs.last().expect("trace starts non-empty")) {
                StepResult::Stepped(next, s) => {
                    configs.push(next);
                    steps.push(s);
                }
                StepResult::Terminal(v) => break TraceEnd::Terminal(v),
                StepResult::Stuck(r) => break TraceEnd::Stuck(r),
            }
        };
        Ok(Trace {
            configs,
            steps,
            end,
            output: std::mem::take(&mut self.output),
        })
    }
}

pub fn eval(c: &Comp, mode: Mode) -> Result<Outcome, CalcError> {
    Machine::new(mode).eval(c)
}

pub fn trace_steps(c: &Comp, mode: Mode) -> Result<Trace, CalcError> {
    Machine::new(mode).trace(c)
}
