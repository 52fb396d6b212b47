//! LLM calls as operations.
//!
//! `complete(prompt)` and `parse(prompt, schema)` both return futures.
//! [`LlmHandler`] discharges them with a [`Backend`]; [`RecordingHandler`]
//! and [`ReplayHandler`] sit in front to capture or substitute responses.

mod live;
mod mock;
mod record;
mod replay;
mod schema;
mod trace;

use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::sync::LazyLock;

pub use live::{chat_request_body, extract_content, LiveBackend, LlmConfig};
pub use mock::{MockBackend, MockRule};
pub use record::{RecordedCalls, RecordingHandler};
pub use replay::ReplayHandler;
pub use schema::{FieldType, Schema, SchemaRegistry};
pub use trace::{CallKind, LlmCallRecord, Trace, TRACE_EXTENSION};

use crate::effects::{Context, Handler, HandlerFrame, OperationId};
use crate::error::{Error, Result};
use crate::runtime::{async_, expect_future, FutureHandle, Task};
use crate::value::{Args, Value};

/// `complete(prompt)`: free-text completion, returns a future of a string.
pub static COMPLETE: LazyLock<OperationId> = LazyLock::new(|| OperationId::new("complete"));
/// `parse(prompt, schema)`: structured completion, returns a future of JSON.
pub static PARSE: LazyLock<OperationId> = LazyLock::new(|| OperationId::new("parse"));

pub fn complete(ctx: &Context, prompt: &str) -> Result<FutureHandle> {
    let out = ctx.perform(&COMPLETE, &[Value::from(prompt)])?;
    expect_future("complete", out)
}

pub fn parse(ctx: &Context, prompt: &str, schema: &Schema) -> Result<FutureHandle> {
    let out = ctx.perform(&PARSE, &[Value::from(prompt), Value::any(schema.clone())])?;
    expect_future("parse", out)
}

/// Decoded arguments of a `complete` or `parse` operation.
#[derive(Debug, Clone)]
pub struct LlmRequest {
    pub kind: CallKind,
    pub prompt: String,
    pub schema: Option<Schema>,
}

impl LlmRequest {
    pub fn complete(prompt: impl Into<String>) -> Self {
        LlmRequest {
            kind: CallKind::Complete,
            prompt: prompt.into(),
            schema: None,
        }
    }

    pub fn parse(prompt: impl Into<String>, schema: Schema) -> Self {
        LlmRequest {
            kind: CallKind::Parse,
            prompt: prompt.into(),
            schema: Some(schema),
        }
    }

    pub(crate) fn decode(kind: CallKind, args: &[Value]) -> Result<Self> {
        let name = kind.to_string();
        let a = Args::new(&name, args);
        let prompt = a.str(0)?;
        if prompt.trim().is_empty() {
            return Err(Error::bad_arg(&name, "prompt is empty"));
        }
        Ok(match kind {
            CallKind::Complete => LlmRequest::complete(prompt),
            CallKind::Parse => LlmRequest::parse(prompt, a.downcast::<Schema>(1)?.clone()),
        })
    }

    pub fn schema_id(&self) -> Option<&str> {
        self.schema.as_ref().map(Schema::id)
    }
}

pub type BackendFuture = Pin<Box<dyn Future<Output = Result<String>>>>;

/// Produces raw response text for a request.
///
/// `ctx` dispatches below the LLM handler, so a backend can sleep or offload.
pub trait Backend: 'static {
    fn model(&self) -> String;
    fn call(&self, ctx: Rc<Context>, req: LlmRequest) -> BackendFuture;
}

/// Discharges `complete` and `parse` by scheduling a backend call with
/// `async_`. `parse` validates the raw text against the schema.
pub struct LlmHandler {
    backend: Rc<dyn Backend>,
}

impl LlmHandler {
    pub fn new(backend: impl Backend) -> Self {
        LlmHandler {
            backend: Rc::new(backend),
        }
    }

    pub fn from_rc(backend: Rc<dyn Backend>) -> Self {
        LlmHandler { backend }
    }
}

fn llm_clause(backend: Rc<dyn Backend>, kind: CallKind) -> impl Fn(&Context, &[Value]) -> Result<Value> {
    move |ctx, args| {
        let req = LlmRequest::decode(kind, args)?;
        let backend = Rc::clone(&backend);
        let task = Task::new(move |ctx| async move {
            let schema = req.schema.clone();
            let raw = backend.call(ctx, req).await?;
            match schema {
                None => Ok(Value::Str(raw)),
                Some(s) => Ok(Value::Json(s.parse_output(&raw)?)),
            }
        });
        Ok(Value::Future(async_(ctx, task, None)?))
    }
}

impl Handler for LlmHandler {
    fn into_frame(self) -> HandlerFrame {
        HandlerFrame::new("LlmHandler")
            .on(&COMPLETE, llm_clause(Rc::clone(&self.backend), CallKind::Complete))
            .on(&PARSE, llm_clause(self.backend, CallKind::Parse))
    }
}

/// Text stored in a trace for a settled call: the string itself for
/// completions, canonical JSON for parses.
pub fn response_text(v: &Value) -> Result<String> {
    match v {
        Value::Str(s) => Ok(s.clone()),
        Value::Json(j) => Ok(serde_json::to_string(j).expect("JSON values serialize")),
        other => Err(Error::bad_arg(
            "complete",
            format!("unexpected response value {}", other.type_name()),
        )),
    }
}
