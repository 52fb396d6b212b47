use std::cell::{Cell, RefCell};
use std::fmt;
use std::future::Future;
use std::pin::Pin;
use std::rc::{Rc, Weak};
use std::task::{Context as TaskCx, Poll, Waker};

use super::scheduler::{Scheduler, SchedulerInner};
use crate::effects::Context;
use crate::error::{Error, Result};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum FutureState {
    Pending,
    Completed(Value),
    Failed(Error),
}

pub(crate) struct FutureCell {
    id: u64,
    state: RefCell<FutureState>,
    waiters: RefCell<Vec<Waker>>,
    scheduler: Weak<SchedulerInner>,
    /// Registered futures count towards the owning scheduler's drain.
    registered: bool,
    settles: Cell<u32>,
}

/// Handle to the eventual result of scheduled work.
///
/// Handles are cheap to clone and can be awaited any number of times from
/// inside tasks; once settled every read yields the same result.
#[derive(Clone)]
pub struct FutureHandle(Rc<FutureCell>);

impl FutureHandle {
    pub(crate) fn new(id: u64, scheduler: Weak<SchedulerInner>, registered: bool) -> Self {
        FutureHandle(Rc::new(FutureCell {
            id,
            state: RefCell::new(FutureState::Pending),
            waiters: RefCell::new(Vec::new()),
            scheduler,
            registered,
            settles: Cell::new(0),
        }))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn state(&self) -> FutureState {
        self.0.state.borrow().clone()
    }

    pub fn is_pending(&self) -> bool {
        matches!(*self.0.state.borrow(), FutureState::Pending)
    }

    /// The settled result, or `None` while pending.
    pub fn result(&self) -> Option<Result<Value>> {
        match &*self.0.state.borrow() {
            FutureState::Pending => None,
            FutureState::Completed(v) => Some(Ok(v.clone())),
            FutureState::Failed(e) => Some(Err(e.clone())),
        }
    }

    pub fn ptr_eq(&self, other: &FutureHandle) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    pub fn scheduler(&self) -> Option<Scheduler> {
        self.0.scheduler.upgrade().map(Scheduler::from_inner)
    }

    /// Blocks the caller by driving the owning scheduler until this future
    /// settles.
    pub fn wait(&self) -> Result<Value> {
        match self.scheduler() {
            Some(s) => s.run_until(self),
            None => Err(Error::SchedulerClosed),
        }
    }

    /// Moves the future out of `Pending`. Later calls are ignored and
    /// return `false`.
    pub(crate) fn settle(&self, result: Result<Value>) -> bool {
        {
            let mut state = self.0.state.borrow_mut();
            if !matches!(*state, FutureState::Pending) {
                return false;
            }
            *state = match &result {
                Ok(v) => FutureState::Completed(v.clone()),
                Err(e) => FutureState::Failed(e.clone()),
            };
        }
        self.0.settles.set(self.0.settles.get() + 1);
        if self.0.registered {
            if let Some(s) = self.0.scheduler.upgrade() {
                s.on_settled(result.err());
            }
        }
        for w in self.0.waiters.take() {
            w.wake();
        }
        true
    }

    #[cfg(test)]
    pub(crate) fn settle_count(&self) -> u32 {
        self.0.settles.get()
    }
}

impl Future for FutureHandle {
    type Output = Result<Value>;

    fn poll(self: Pin<&mut Self>, cx: &mut TaskCx<'_>) -> Poll<Self::Output> {
        match self.result() {
            Some(r) => Poll::Ready(r),
            None => {
                self.0.waiters.borrow_mut().push(cx.waker().clone());
                Poll::Pending
            }
        }
    }
}

impl fmt::Debug for FutureHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FutureHandle#{}({:?})", self.0.id, self.0.state.borrow())
    }
}

pub(crate) type TaskFuture = Pin<Box<dyn Future<Output = Result<Value>>>>;
type TaskBody = Box<dyn FnOnce(Rc<Context>) -> TaskFuture>;

struct TaskCell {
    body: RefCell<Option<TaskBody>>,
    ctx: RefCell<Option<Rc<Context>>>,
}

/// A deferred computation handed to `async_`.
///
/// The body receives the dispatch context captured when the task was first
/// scheduled, so operations it performs resolve against the handlers that
/// were below the scheduling code at that moment.
#[derive(Clone)]
pub struct Task(Rc<TaskCell>);

impl Task {
    pub fn new<F, Fut>(body: F) -> Task
    where
        F: FnOnce(Rc<Context>) -> Fut + 'static,
        Fut: Future<Output = Result<Value>> + 'static,
    {
        let body: TaskBody = Box::new(move |ctx| Box::pin(body(ctx)));
        Task(Rc::new(TaskCell {
            body: RefCell::new(Some(body)),
            ctx: RefCell::new(None),
        }))
    }

    /// A task that does not dispatch anything.
    pub fn from_future<Fut>(fut: Fut) -> Task
    where
        Fut: Future<Output = Result<Value>> + 'static,
    {
        Task::new(move |_| fut)
    }

    pub fn ready(value: Value) -> Task {
        Task::from_future(std::future::ready(Ok(value)))
    }

    pub fn is_bound(&self) -> bool {
        self.0.ctx.borrow().is_some()
    }

    /// Binds the dispatch context unless one is already bound.
    pub fn bind(&self, ctx: Context) {
        let mut slot = self.0.ctx.borrow_mut();
        if slot.is_none() {
            *slot = Some(Rc::new(ctx));
        }
    }

    pub fn is_started(&self) -> bool {
        self.0.body.borrow().is_none()
    }

    /// Takes the body out; a task runs at most once.
    pub(crate) fn start(&self) -> Result<TaskFuture> {
        let body = self
            .0
            .body
            .borrow_mut()
            .take()
            .ok_or_else(|| Error::bad_arg("async_", "task was already scheduled"))?;
        let ctx = self
            .0
            .ctx
            .borrow()
            .clone()
            .unwrap_or_else(|| Rc::new(Context::empty()));
        Ok(body(ctx))
    }

    /// Runs the task body inline as a future.
    pub fn run(self) -> TaskFuture {
        match self.start() {
            Ok(f) => f,
            Err(e) => Box::pin(std::future::ready(Err(e))),
        }
    }
}
