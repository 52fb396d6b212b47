//! Asynchronous operations and the handlers that discharge them.
//!
//! `async_` schedules a [`Task`] and returns a [`FutureHandle`] right away;
//! `await_` blocks the performer until a future settles. Task bodies can
//! also simply `.await` handles, which suspends only that task.

mod event;
mod future;
mod handlers;
mod scheduler;

use std::sync::LazyLock;
use std::time::Duration;

pub use event::{CompletionEvent, EventWait};
pub use future::{FutureHandle, FutureState, Task};
pub use handlers::{AsyncHandler, AsyncSeqHandler, SyncHandler};
pub use scheduler::{BlockingJob, ClockKind, Scheduler};

use crate::effects::{Context, OperationId};
use crate::error::{Error, Result};
use crate::value::{Callback, Value};

/// `async_(task, post_fn?)`: schedule a task, return its future.
pub static ASYNC: LazyLock<OperationId> = LazyLock::new(|| OperationId::new("async_"));
/// `await_(future)`: wait for a future and return its value.
pub static AWAIT: LazyLock<OperationId> = LazyLock::new(|| OperationId::new("await_"));
/// `sleep(ms)`: a future completing after the given delay.
pub static SLEEP: LazyLock<OperationId> = LazyLock::new(|| OperationId::new("sleep"));
/// `offload(job)`: run blocking work off the scheduler thread.
pub static OFFLOAD: LazyLock<OperationId> = LazyLock::new(|| OperationId::new("offload"));
/// `now()`: milliseconds on the scheduler clock.
pub static NOW: LazyLock<OperationId> = LazyLock::new(|| OperationId::new("now"));

pub(crate) fn expect_future(op: &str, v: Value) -> Result<FutureHandle> {
    match v {
        Value::Future(h) => Ok(h),
        other => Err(Error::bad_arg(
            op,
            format!("handler returned {} instead of a future", other.type_name()),
        )),
    }
}

pub fn async_(ctx: &Context, task: Task, post_fn: Option<Callback>) -> Result<FutureHandle> {
    let post = post_fn.map(Value::Callback).unwrap_or(Value::Unit);
    let out = ctx.perform(&ASYNC, &[Value::Task(task), post])?;
    expect_future("async_", out)
}

pub fn await_(ctx: &Context, fut: &FutureHandle) -> Result<Value> {
    ctx.perform(&AWAIT, &[Value::Future(fut.clone())])
}

/// Awaits `v` if it is a future, otherwise returns it unchanged.
pub fn resolve(ctx: &Context, v: Value) -> Result<Value> {
    match v {
        Value::Future(h) => await_(ctx, &h),
        other => Ok(other),
    }
}

pub fn sleep_for(ctx: &Context, duration: Duration) -> Result<FutureHandle> {
    let ms = i64::try_from(duration.as_millis()).unwrap_or(i64::MAX);
    let out = ctx.perform(&SLEEP, &[Value::Int(ms)])?;
    expect_future("sleep", out)
}

pub fn offload(ctx: &Context, job: BlockingJob) -> Result<FutureHandle> {
    let cell = std::cell::RefCell::new(Some(job));
    let out = ctx.perform(&OFFLOAD, &[Value::any(cell)])?;
    expect_future("offload", out)
}

pub fn now_ms(ctx: &Context) -> Result<f64> {
    let v = ctx.perform(&NOW, &[])?;
    v.as_float()
        .ok_or_else(|| Error::bad_arg("now", "expected a number"))
}
