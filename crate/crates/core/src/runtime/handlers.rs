use std::cell::RefCell;
use std::rc::Rc;
use std::time::Duration;

use super::event::CompletionEvent;
use super::future::Task;
use super::scheduler::{BlockingJob, ClockKind, Scheduler};
use super::{ASYNC, AWAIT, NOW, OFFLOAD, SLEEP};
use crate::effects::{Handler, HandlerFrame};
use crate::error::Error;
use crate::value::{Args, Value};

/// Discharges `async_`, `await_`, `sleep`, `offload` and `now` with a
/// cooperative scheduler. Leaving the scope drains every scheduled task.
pub struct AsyncHandler {
    scheduler: Scheduler,
    eager: bool,
    name: &'static str,
}

impl Default for AsyncHandler {
    fn default() -> Self {
        Self::new()
    }
}

impl AsyncHandler {
    pub fn new() -> Self {
        Self::with_clock(ClockKind::Wall)
    }

    pub fn with_clock(kind: ClockKind) -> Self {
        AsyncHandler {
            scheduler: Scheduler::new(kind),
            eager: false,
            name: "AsyncHandler",
        }
    }

    pub fn scheduler(&self) -> Scheduler {
        self.scheduler.clone()
    }
}

impl Handler for AsyncHandler {
    fn into_frame(self) -> HandlerFrame {
        let AsyncHandler {
            scheduler,
            eager,
            name,
        } = self;
        let (s_async, s_await, s_sleep, s_off, s_now, s_exit) = (
            scheduler.clone(),
            scheduler.clone(),
            scheduler.clone(),
            scheduler.clone(),
            scheduler.clone(),
            scheduler,
        );
        HandlerFrame::new(name)
            .on(&ASYNC, move |ctx, args| {
                let args = Args::new("async_", args);
                let task = args.task(0)?;
                let post = args.callback(1)?.cloned();
                task.bind(ctx.caller_context());
                let handle = s_async.spawn_task(task, post)?;
                if eager {
                    // Failures stay in the future; the caller sees them on await.
                    let _ = s_async.run_until(&handle);
                }
                Ok(Value::Future(handle))
            })
            .on(&AWAIT, move |_, args| {
                let fut = Args::new("await_", args).future(0)?;
                match fut.scheduler() {
                    Some(owner) => owner.run_until(fut),
                    None if s_await.is_closed() => Err(Error::SchedulerClosed),
                    None => fut.result().unwrap_or(Err(Error::SchedulerClosed)),
                }
            })
            .on(&SLEEP, move |_, args| {
                let ms = Args::new("sleep", args).int(0)?.max(0) as u64;
                Ok(Value::Future(s_sleep.sleep(Duration::from_millis(ms))?))
            })
            .on(&OFFLOAD, move |_, args| {
                let cell = Args::new("offload", args).downcast::<RefCell<Option<BlockingJob>>>(0)?;
                let job = cell
                    .borrow_mut()
                    .take()
                    .ok_or_else(|| Error::bad_arg("offload", "job was already started"))?;
                let handle = s_off.offload(job)?;
                if eager {
                    let _ = s_off.run_until(&handle);
                }
                Ok(Value::Future(handle))
            })
            .on(&NOW, move |_, _| {
                Ok(Value::Float(s_now.now().as_secs_f64() * 1000.0))
            })
            .on_exit(move |_| s_exit.drain())
    }
}

/// Same operations as [`AsyncHandler`], but every scheduled task runs to
/// completion before `async_` returns. Swapping it in serializes a workflow
/// without touching the workflow code.
pub struct SyncHandler(AsyncHandler);

impl Default for SyncHandler {
    fn default() -> Self {
        Self::new()
    }
}

impl SyncHandler {
    pub fn new() -> Self {
        Self::with_clock(ClockKind::Wall)
    }

    pub fn with_clock(kind: ClockKind) -> Self {
        SyncHandler(AsyncHandler {
            scheduler: Scheduler::new(kind),
            eager: true,
            name: "SyncHandler",
        })
    }

    pub fn scheduler(&self) -> Scheduler {
        self.0.scheduler()
    }
}

impl Handler for SyncHandler {
    fn into_frame(self) -> HandlerFrame {
        self.0.into_frame()
    }
}

/// Refines `async_` so callbacks run in submission order, whatever order
/// the tasks themselves finish in.
///
/// Each task gets its own completion event; its callback waits for the
/// previous task's event and then sets its own.
#[derive(Clone)]
pub struct AsyncSeqHandler {
    prev: Rc<RefCell<CompletionEvent>>,
}

impl Default for AsyncSeqHandler {
    fn default() -> Self {
        Self::new()
    }
}

impl AsyncSeqHandler {
    pub fn new() -> Self {
        AsyncSeqHandler {
            prev: Rc::new(RefCell::new(CompletionEvent::new_set())),
        }
    }
}

impl Handler for AsyncSeqHandler {
    fn into_frame(self) -> HandlerFrame {
        let prev = self.prev;
        let reset = Rc::clone(&prev);
        HandlerFrame::new("AsyncSeqHandler")
            .on_enter(move |_| {
                *reset.borrow_mut() = CompletionEvent::new_set();
                Ok(())
            })
            .on(&ASYNC, move |ctx, args| {
                let args = Args::new("async_", args);
                let task = args.task(0)?.clone();
                let post = args.callback(1)?.cloned();
                task.bind(ctx.caller_context());
                let next = CompletionEvent::new();
                let wait_for = prev.replace(next.clone());
                let wrapped = Task::from_future(async move {
                    let result = task.run().await;
                    wait_for.wait().await;
                    let out = match (result, post) {
                        (Ok(v), Some(post)) => post.call(v),
                        (r, _) => r,
                    };
                    // Set even on failure so later callbacks are not blocked.
                    next.set();
                    out
                });
                ctx.perform(&ASYNC, &[Value::Task(wrapped), Value::Unit])
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::HandlerStack;
    use crate::runtime::{async_, await_, sleep_for};
    use crate::value::Callback;
    use std::time::Instant;

    fn sleeper(ms: u64, out: Value) -> Task {
        Task::new(move |ctx| async move {
            sleep_for(&ctx, Duration::from_millis(ms))?.await?;
            Ok(out)
        })
    }

    #[test]
    fn async_then_await() {
        let stack = HandlerStack::new();
        stack
            .with(AsyncHandler::with_clock(ClockKind::Virtual), |ctx| {
                let f = async_(ctx, Task::ready(Value::Int(7)), None)?;
                assert!(f.is_pending());
                assert_eq!(await_(ctx, &f)?, Value::Int(7));
                assert_eq!(await_(ctx, &f)?, Value::Int(7));
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn async_without_handler_is_unhandled() {
        let stack = HandlerStack::new();
        assert!(matches!(
            async_(&stack, Task::ready(Value::Unit), None),
            Err(Error::UnhandledOperation { .. })
        ));
    }

    #[test]
    fn exit_drains_pending_tasks() {
        let stack = HandlerStack::new();
        let mut futs = vec![];
        stack
            .with(AsyncHandler::with_clock(ClockKind::Virtual), |ctx| {
                for i in 0..3 {
                    futs.push(async_(ctx, sleeper(10 * i, Value::Int(i as i64)), None)?);
                }
                Ok(())
            })
            .unwrap();
        for (i, f) in futs.iter().enumerate() {
            assert_eq!(f.result(), Some(Ok(Value::Int(i as i64))));
        }
    }

    #[test]
    fn await_error_passthrough() {
        let stack = HandlerStack::new();
        let err = stack
            .with(AsyncHandler::with_clock(ClockKind::Virtual), |ctx| {
                let f = async_(
                    ctx,
                    Task::from_future(async { Err(Error::Task("bad".into())) }),
                    None,
                )?;
                let e = await_(ctx, &f).unwrap_err();
                assert_eq!(e, Error::Task("bad".into()));
                Ok(())
            })
            .unwrap_err();
        // The same failure is re-raised when the scope drains.
        assert_eq!(err, Error::Task("bad".into()));
    }

    #[test]
    fn two_sleeps_overlap_on_wall_clock() {
        let stack = HandlerStack::new();
        let start = Instant::now();
        stack
            .with(AsyncHandler::new(), |ctx| {
                async_(ctx, sleeper(100, Value::Unit), None)?;
                async_(ctx, sleeper(100, Value::Unit), None)?;
                Ok(())
            })
            .unwrap();
        let wall = start.elapsed();
        assert!(wall >= Duration::from_millis(100));
        assert!(wall <= Duration::from_millis(150), "{wall:?}");
    }

    #[test]
    fn eight_sleeps_fit_in_two_durations() {
        let stack = HandlerStack::new();
        let start = Instant::now();
        stack
            .with(AsyncHandler::new(), |ctx| {
                for _ in 0..8 {
                    async_(ctx, sleeper(50, Value::Unit), None)?;
                }
                Ok(())
            })
            .unwrap();
        assert!(start.elapsed() <= Duration::from_millis(100));
    }

    #[test]
    fn sleep_zero_completes() {
        let stack = HandlerStack::new();
        stack
            .with(AsyncHandler::with_clock(ClockKind::Virtual), |ctx| {
                let f = async_(ctx, sleeper(0, Value::Int(1)), None)?;
                assert_eq!(await_(ctx, &f)?, Value::Int(1));
                Ok(())
            })
            .unwrap();
    }

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
            async_(&stack, sleeper(ms, Value::Int(i as i64)), Some(cb)).unwrap();
        }
        while let Some(mut s) = scopes.pop() {
            s.release().unwrap();
        }
        let out = order.borrow().clone();
        out
    }

    #[test]
    fn seq_handler_orders_callbacks_by_submission() {
        assert_eq!(callback_order(&[30, 10, 20], true), [0, 1, 2]);
        assert_eq!(callback_order(&[30, 10, 20], false), [1, 2, 0]);
        assert_eq!(callback_order(&[5], true), [0]);
    }

    #[test]
    fn sync_handler_runs_eagerly() {
        let stack = HandlerStack::new();
        stack
            .with(SyncHandler::with_clock(ClockKind::Virtual), |ctx| {
                let f = async_(ctx, sleeper(10, Value::Int(3)), None)?;
                assert_eq!(f.result(), Some(Ok(Value::Int(3))));
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn task_dispatches_against_scheduling_context() {
        use crate::effects::create_operation;
        let probe = create_operation("probe");
        let stack = HandlerStack::new();
        let _a = stack.push(AsyncHandler::with_clock(ClockKind::Virtual)).unwrap();
        let mut upper = stack
            .push(HandlerFrame::new("Probe").on(&probe, |_, _| Ok(Value::from("upper"))))
            .unwrap();
        let p = probe.clone();
        let f = async_(
            &stack,
            Task::new(move |ctx| async move { ctx.perform(&p, &[]) }),
            None,
        )
        .unwrap();
        // The frame is gone by the time the task runs; the snapshot still sees it.
        upper.release().unwrap();
        assert_eq!(await_(&stack, &f).unwrap(), Value::from("upper"));
    }
}
