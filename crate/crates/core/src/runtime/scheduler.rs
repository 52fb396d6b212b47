//! Single-threaded cooperative executor with timers and offloaded blocking work.

use std::cell::{Cell, RefCell};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::sync::{Arc, Condvar, Mutex};
use std::task::{Context as TaskCx, Poll, Wake, Waker};
use std::time::{Duration, Instant};

use super::future::{FutureHandle, Task};
use crate::error::{Error, Result};
use crate::value::{Callback, Value};

/// Where deadlines come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockKind {
    Wall,
    /// Time jumps straight to the next timer whenever nothing is runnable.
    Virtual,
}

#[derive(Debug)]
struct Clock {
    kind: ClockKind,
    origin: Instant,
    virtual_now: Cell<Duration>,
}

impl Clock {
    fn now(&self) -> Duration {
        match self.kind {
            ClockKind::Wall => self.origin.elapsed(),
            ClockKind::Virtual => self.virtual_now.get(),
        }
    }
}

/// Blocking work run on its own thread; the string result settles a future.
pub type BlockingJob = Box<dyn FnOnce() -> Result<String> + Send>;

#[derive(Default)]
struct SharedState {
    ready: VecDeque<u64>,
    inbox: Vec<(u64, Result<String>)>,
}

#[derive(Default)]
struct Shared {
    state: Mutex<SharedState>,
    cv: Condvar,
}

impl Shared {
    fn push_ready(&self, id: u64) {
        self.state.lock().unwrap().ready.push_back(id);
        self.cv.notify_one();
    }
}

struct TaskWaker {
    id: u64,
    shared: Arc<Shared>,
}

impl Wake for TaskWaker {
    fn wake(self: Arc<Self>) {
        self.shared.push_ready(self.id);
    }

    fn wake_by_ref(self: &Arc<Self>) {
        self.shared.push_ready(self.id);
    }
}

type Job = Pin<Box<dyn Future<Output = ()>>>;

pub(crate) struct SchedulerInner {
    clock: Clock,
    shared: Arc<Shared>,
    jobs: RefCell<HashMap<u64, Job>>,
    wakers: RefCell<HashMap<u64, Waker>>,
    running: RefCell<HashSet<u64>>,
    rewake: RefCell<HashSet<u64>>,
    timers: RefCell<BinaryHeap<Reverse<(Duration, u64)>>>,
    timer_handles: RefCell<HashMap<u64, FutureHandle>>,
    external: RefCell<HashMap<u64, FutureHandle>>,
    next_id: Cell<u64>,
    next_job: Cell<u64>,
    created: Cell<usize>,
    pending: Cell<usize>,
    closed: Cell<bool>,
    first_failure: RefCell<Option<Error>>,
}

impl SchedulerInner {
    pub(crate) fn on_settled(&self, failure: Option<Error>) {
        self.pending.set(self.pending.get() - 1);
        if let Some(e) = failure {
            let mut first = self.first_failure.borrow_mut();
            if first.is_none() {
                *first = Some(e);
            }
        }
    }
}

/// Cooperative scheduler backing the async handlers.
///
/// Tasks are polled one at a time on the calling thread. They interleave at
/// suspension points: awaiting a future, sleeping, or waiting on an event.
#[derive(Clone)]
pub struct Scheduler {
    inner: Rc<SchedulerInner>,
}

impl Scheduler {
    pub fn new(kind: ClockKind) -> Self {
        Scheduler {
            inner: Rc::new(SchedulerInner {
                clock: Clock {
                    kind,
                    origin: Instant::now(),
                    virtual_now: Cell::new(Duration::ZERO),
                },
                shared: Arc::default(),
                jobs: RefCell::default(),
                wakers: RefCell::default(),
                running: RefCell::default(),
                rewake: RefCell::default(),
                timers: RefCell::default(),
                timer_handles: RefCell::default(),
                external: RefCell::default(),
                next_id: Cell::new(0),
                next_job: Cell::new(0),
                created: Cell::new(0),
                pending: Cell::new(0),
                closed: Cell::new(false),
                first_failure: RefCell::new(None),
            }),
        }
    }

    pub(crate) fn from_inner(inner: Rc<SchedulerInner>) -> Self {
        Scheduler { inner }
    }

    pub fn clock_kind(&self) -> ClockKind {
        self.inner.clock.kind
    }

    /// Time since the scheduler was created, on its own clock.
    pub fn now(&self) -> Duration {
        self.inner.clock.now()
    }

    pub fn is_closed(&self) -> bool {
        self.inner.closed.get()
    }

    /// Futures created through [`Scheduler::spawn`] so far.
    pub fn future_count(&self) -> usize {
        self.inner.created.get()
    }

    /// Registered futures that have not settled yet.
    pub fn pending_count(&self) -> usize {
        self.inner.pending.get()
    }

    fn fresh_id(&self) -> u64 {
        let id = self.inner.next_id.get();
        self.inner.next_id.set(id + 1);
        id
    }

    fn check_open(&self) -> Result<()> {
        if self.is_closed() {
            Err(Error::SchedulerClosed)
        } else {
            Ok(())
        }
    }

    /// Schedules `fut`; its result, passed through `post`, settles the
    /// returned handle. Nothing runs until the scheduler is driven.
    pub fn spawn<F>(&self, fut: F, post: Option<Callback>) -> Result<FutureHandle>
    where
        F: Future<Output = Result<Value>> + 'static,
    {
        self.check_open()?;
        let handle = FutureHandle::new(self.fresh_id(), Rc::downgrade(&self.inner), true);
        self.inner.created.set(self.inner.created.get() + 1);
        self.inner.pending.set(self.inner.pending.get() + 1);
        let settle = handle.clone();
        let job = async move {
            let result = fut.await;
            let result = match (result, post) {
                (Ok(v), Some(post)) => post.call(v),
                (r, _) => r,
            };
            settle.settle(result);
        };
        self.enqueue(Box::pin(job));
        Ok(handle)
    }

    pub fn spawn_task(&self, task: &Task, post: Option<Callback>) -> Result<FutureHandle> {
        self.check_open()?;
        let fut = task.start()?;
        self.spawn(fut, post)
    }

    fn enqueue(&self, job: Job) {
        let id = self.inner.next_job.get();
        self.inner.next_job.set(id + 1);
        let waker = Waker::from(Arc::new(TaskWaker {
            id,
            shared: Arc::clone(&self.inner.shared),
        }));
        self.inner.jobs.borrow_mut().insert(id, job);
        self.inner.wakers.borrow_mut().insert(id, waker);
        self.inner.shared.push_ready(id);
    }

    /// A future that completes with `Unit` once `duration` has elapsed.
    pub fn sleep(&self, duration: Duration) -> Result<FutureHandle> {
        self.check_open()?;
        let handle = FutureHandle::new(self.fresh_id(), Rc::downgrade(&self.inner), false);
        let deadline = self.now() + duration;
        self.inner
            .timers
            .borrow_mut()
            .push(Reverse((deadline, handle.id())));
        self.inner
            .timer_handles
            .borrow_mut()
            .insert(handle.id(), handle.clone());
        Ok(handle)
    }

    /// Runs `job` on a fresh thread; the returned future settles with its
    /// string result. Overlapping jobs are in flight simultaneously.
    pub fn offload(&self, job: BlockingJob) -> Result<FutureHandle> {
        self.check_open()?;
        let handle = FutureHandle::new(self.fresh_id(), Rc::downgrade(&self.inner), false);
        self.inner
            .external
            .borrow_mut()
            .insert(handle.id(), handle.clone());
        let id = handle.id();
        let shared = Arc::clone(&self.inner.shared);
        std::thread::spawn(move || {
            let result = job();
            shared.state.lock().unwrap().inbox.push((id, result));
            shared.cv.notify_one();
        });
        Ok(handle)
    }

    /// Drives the scheduler until `fut` settles and returns its result.
    ///
    /// May be called from inside a running task: the caller's own task is
    /// parked while others make progress.
    pub fn run_until(&self, fut: &FutureHandle) -> Result<Value> {
        self.check_open()?;
        loop {
            if let Some(r) = fut.result() {
                return r;
            }
            if !self.run_once() {
                return Err(Error::Stalled(format!(
                    "future #{} can never complete: no runnable tasks, timers or in-flight work",
                    fut.id()
                )));
            }
        }
    }

    /// Runs every registered future to completion, then closes the
    /// scheduler. The first failure (in settle order) is returned after
    /// everything has settled.
    pub fn drain(&self) -> Result<()> {
        if self.is_closed() {
            return Ok(());
        }
        let mut stalled = None;
        while self.pending_count() > 0 {
            if !self.run_once() {
                stalled = Some(Error::Stalled(format!(
                    "{} futures still pending at scope exit",
                    self.pending_count()
                )));
                break;
            }
        }
        self.inner.closed.set(true);
        self.inner.jobs.borrow_mut().clear();
        self.inner.wakers.borrow_mut().clear();
        self.inner.timers.borrow_mut().clear();
        self.inner.timer_handles.borrow_mut().clear();
        if let Some(e) = stalled {
            return Err(e);
        }
        match self.inner.first_failure.borrow_mut().take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Makes one unit of progress. Returns `false` when nothing can happen.
    fn run_once(&self) -> bool {
        let (inbox, ready) = {
            let mut st = self.inner.shared.state.lock().unwrap();
            let inbox = std::mem::take(&mut st.inbox);
            let ready = if inbox.is_empty() {
                st.ready.pop_front()
            } else {
                None
            };
            (inbox, ready)
        };
        if !inbox.is_empty() {
            for (id, result) in inbox {
                let handle = self.inner.external.borrow_mut().remove(&id);
                if let Some(h) = handle {
                    h.settle(result.map(Value::Str));
                }
            }
            return true;
        }
        if let Some(id) = ready {
            self.poll_job(id);
            return true;
        }
        let next_deadline = self.inner.timers.borrow().peek().map(|Reverse((d, _))| *d);
        if let Some(deadline) = next_deadline {
            match self.inner.clock.kind {
                ClockKind::Virtual => {
                    if deadline > self.inner.clock.virtual_now.get() {
                        self.inner.clock.virtual_now.set(deadline);
                    }
                }
                ClockKind::Wall => {
                    let now = self.now();
                    if deadline > now && self.wait_for_wake(Some(deadline - now)) {
                        return true;
                    }
                }
            }
            self.fire_due_timers();
            return true;
        }
        if !self.inner.external.borrow().is_empty() {
            self.wait_for_wake(None);
            return true;
        }
        false
    }

    /// Blocks until a task is woken or an offloaded job reports back.
    /// Returns `true` if woken before the timeout.
    fn wait_for_wake(&self, timeout: Option<Duration>) -> bool {
        let shared = &self.inner.shared;
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut st = shared.state.lock().unwrap();
        loop {
            if !st.ready.is_empty() || !st.inbox.is_empty() {
                return true;
            }
            match deadline {
                None => st = shared.cv.wait(st).unwrap(),
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return false;
                    }
                    st = shared.cv.wait_timeout(st, d - now).unwrap().0;
                }
            }
        }
    }

    fn fire_due_timers(&self) {
        let now = self.now();
        loop {
            let due = {
                let mut timers = self.inner.timers.borrow_mut();
                match timers.peek() {
                    Some(Reverse((d, id))) if *d <= now => {
                        let id = *id;
                        timers.pop();
                        Some(id)
                    }
                    _ => None,
                }
            };
            let Some(id) = due else { break };
            let handle = self.inner.timer_handles.borrow_mut().remove(&id);
            if let Some(h) = handle {
                h.settle(Ok(Value::Unit));
            }
        }
    }

    fn poll_job(&self, id: u64) {
        let job = self.inner.jobs.borrow_mut().remove(&id);
        let Some(mut job) = job else {
            // Woken while its own poll is further up the call stack.
            if self.inner.running.borrow().contains(&id) {
                self.inner.rewake.borrow_mut().insert(id);
            }
            return;
        };
        let Some(waker) = self.inner.wakers.borrow().get(&id).cloned() else {
            return;
        };
        self.inner.running.borrow_mut().insert(id);
        let mut cx = TaskCx::from_waker(&waker);
        let poll = job.as_mut().poll(&mut cx);
        self.inner.running.borrow_mut().remove(&id);
        match poll {
            Poll::Ready(()) => {
                self.inner.wakers.borrow_mut().remove(&id);
                self.inner.rewake.borrow_mut().remove(&id);
            }
            Poll::Pending => {
                if self.is_closed() {
                    return;
                }
                self.inner.jobs.borrow_mut().insert(id, job);
                if self.inner.rewake.borrow_mut().remove(&id) {
                    self.inner.shared.push_ready(id);
                }
            }
        }
    }
}

impl std::fmt::Debug for Scheduler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scheduler")
            .field("clock", &self.inner.clock.kind)
            .field("futures", &self.future_count())
            .field("pending", &self.pending_count())
            .field("closed", &self.is_closed())
            .finish()
    }
}
