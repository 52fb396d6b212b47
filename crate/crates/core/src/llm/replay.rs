use std::cell::RefCell;
use std::rc::Rc;
use std::time::Duration;

use super::{CallKind, LlmRequest, Trace, COMPLETE, PARSE};
use crate::effects::{Context, Handler, HandlerFrame};
use crate::error::{Error, Result};
use crate::runtime::{async_, sleep_for, Task};
use crate::value::Value;

struct ReplayState {
    trace: Trace,
    next: usize,
}

/// Answers `complete` and `parse` from a recorded trace, one record per call
/// in issue order. Nothing is forwarded below except timing.
pub struct ReplayHandler {
    state: Rc<RefCell<ReplayState>>,
    strict: bool,
    keep_latency: bool,
}

impl ReplayHandler {
    pub fn new(trace: Trace) -> Self {
        ReplayHandler {
            state: Rc::new(RefCell::new(ReplayState { trace, next: 0 })),
            strict: false,
            keep_latency: false,
        }
    }

    /// Also require each call's kind and prompt to match its record.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    /// Sleep for each record's latency before answering.
    pub fn keep_latency(mut self, keep: bool) -> Self {
        self.keep_latency = keep;
        self
    }
}

impl ReplayState {
    fn answer(&mut self, req: &LlmRequest, strict: bool) -> Result<(String, f64)> {
        let Some(rec) = self.trace.records.get(self.next) else {
            return Err(Error::ReplayExhausted {
                consumed: self.next,
            });
        };
        self.next += 1;
        if strict && (rec.kind != req.kind || rec.prompt != req.prompt) {
            return Err(Error::ReplayMismatch {
                seq: rec.seq,
                expected: format!("{} {:?}", rec.kind, rec.prompt),
                found: format!("{} {:?}", req.kind, req.prompt),
            });
        }
        Ok((rec.response.clone(), rec.latency_ms))
    }
}

fn replay_clause(
    state: Rc<RefCell<ReplayState>>,
    strict: bool,
    keep_latency: bool,
    kind: CallKind,
) -> impl Fn(&Context, &[Value]) -> Result<Value> {
    move |ctx, args| {
        let req = LlmRequest::decode(kind, args)?;
        let answer = state.borrow_mut().answer(&req, strict);
        let task = Task::new(move |ctx| async move {
            let (raw, latency) = answer?;
            if keep_latency && latency > 0.0 {
                sleep_for(&ctx, Duration::from_millis(latency.round() as u64))?.await?;
            }
            match &req.schema {
                None => Ok(Value::Str(raw)),
                Some(s) => Ok(Value::Json(s.parse_output(&raw)?)),
            }
        });
        Ok(Value::Future(async_(ctx, task, None)?))
    }
}

impl Handler for ReplayHandler {
    fn into_frame(self) -> HandlerFrame {
        HandlerFrame::new("ReplayHandler")
            .on(
                &COMPLETE,
                replay_clause(Rc::clone(&self.state), self.strict, self.keep_latency, CallKind::Complete),
            )
            .on(
                &PARSE,
                replay_clause(self.state, self.strict, self.keep_latency, CallKind::Parse),
            )
    }
}
