use std::cell::{Cell, RefCell};
use std::rc::Rc;

use super::{response_text, CallKind, LlmCallRecord, LlmRequest, Trace, COMPLETE, PARSE};
use crate::effects::{Context, Handler, HandlerFrame};
use crate::runtime::{async_, expect_future, now_ms, Task};
use crate::value::Value;

/// Calls captured by a [`RecordingHandler`], readable after its scope ends.
#[derive(Clone, Default)]
pub struct RecordedCalls(Rc<RefCell<Vec<LlmCallRecord>>>);

impl RecordedCalls {
    /// Settled calls ordered by when they were issued. Calls that failed leave
    /// no record, so sequence numbers are reassigned to stay contiguous.
    pub fn trace(&self) -> Trace {
        let mut records = self.0.borrow().clone();
        records.sort_by_key(|r| r.seq);
        for (i, r) in records.iter_mut().enumerate() {
            r.seq = i as u64;
        }
        Trace::new(records)
    }

    pub fn len(&self) -> usize {
        self.0.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Forwards `complete` and `parse` to the handler below and records each
/// settled call. Latency is measured on the scheduler clock.
pub struct RecordingHandler {
    calls: RecordedCalls,
    model: String,
}

impl RecordingHandler {
    pub fn new(model: impl Into<String>) -> Self {
        RecordingHandler {
            calls: RecordedCalls::default(),
            model: model.into(),
        }
    }

    pub fn calls(&self) -> RecordedCalls {
        self.calls.clone()
    }
}

fn record_clause(
    calls: RecordedCalls,
    next_seq: Rc<Cell<u64>>,
    model: String,
    kind: CallKind,
) -> impl Fn(&Context, &[Value]) -> crate::Result<Value> {
    move |ctx, args| {
        let req = LlmRequest::decode(kind, args)?;
        let op = match kind {
            CallKind::Complete => &COMPLETE,
            CallKind::Parse => &PARSE,
        };
        let seq = next_seq.get();
        next_seq.set(seq + 1);
        let start = now_ms(ctx)?;
        let inner = expect_future(op.name(), ctx.perform(op, args)?)?;
        let calls = calls.clone();
        let model = model.clone();
        let task = Task::new(move |ctx| async move {
            let v = inner.await?;
            let latency = (now_ms(&ctx)? - start).max(0.0);
            calls.0.borrow_mut().push(LlmCallRecord {
                seq,
                kind,
                prompt: req.prompt.clone(),
                schema_id: req.schema_id().map(str::to_owned),
                response: response_text(&v)?,
                model,
                latency_ms: (latency * 1000.0).round() / 1000.0,
            });
            Ok(v)
        });
        Ok(Value::Future(async_(ctx, task, None)?))
    }
}

impl Handler for RecordingHandler {
    fn into_frame(self) -> HandlerFrame {
        let seq = Rc::new(Cell::new(0));
        HandlerFrame::new("RecordingHandler")
            .on(
                &COMPLETE,
                record_clause(self.calls.clone(), Rc::clone(&seq), self.model.clone(), CallKind::Complete),
            )
            .on(&PARSE, record_clause(self.calls, seq, self.model, CallKind::Parse))
    }
}
