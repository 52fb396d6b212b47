//! A core calculus of effect handlers: parser, printer and a small-step
//! machine, with optional multi-shot continuations.
//!
//! Concrete syntax:
//!
//! ```text
//! comp    := "return" value | "do" x "<-" comp "in" comp
//!          | "if" value "then" comp "else" comp
//!          | op "(" value ")" | "with" handler "handle" comp
//! handler := "handler" "{" clause ("," clause)* "}"
//! clause  := op "(" x ("," k)? ")" "->" comp
//! value   := x | "true" | "false" | integer | string
//! ```

mod ast;
mod machine;
mod parser;

pub use ast::{Clause, Comp, Continuation, HandlerDef, Val};
pub use machine::{
    eval, find_multishot_clause, stack_of, subst, trace_steps, CalcError, Config, Fresh, Machine,
    Mode, Outcome, Rule, Step, StepResult, StuckReason, Trace, TraceEnd, DEFAULT_STEP_LIMIT,
};
pub use parser::{parse_program, ParseError};

/// Parses and evaluates `src`.
pub fn run_source(src: &str, mode: Mode) -> Result<Outcome, CalcError> {
    eval(&parse_program(src)?, mode)
}

impl Val {
    /// Printed form: strings without quotes.
    pub fn render(&self) -> String {
        match self {
            Val::Str(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

/// Backtracking with a multi-shot `decide`: the first choice is resumed with
/// `true`; a `fail` inside it resumes the innermost choice with `false`.
/// Prints the two choices once they differ.
pub const DECIDE_FAIL: &str = r#"
with handler {
  decide(u, k) ->
    with handler { fail(v) -> k(false) } handle k(true)
}
handle
  do b1 <- decide(0) in
  do b2 <- decide(0) in
  if b1 then
    (if b2 then fail(0) else do p <- print(b1) in print(b2))
  else
    (if b2 then (do p <- print(b1) in print(b2)) else fail(0))
"#;
