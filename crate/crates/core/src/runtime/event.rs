use std::cell::{Cell, RefCell};
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context as TaskCx, Poll, Waker};

#[derive(Default)]
struct EventCell {
    set: Cell<bool>,
    waiters: RefCell<Vec<Waker>>,
}

/// One-way flag that tasks can wait on. Once set it stays set.
#[derive(Clone, Default)]
pub struct CompletionEvent(Rc<EventCell>);

impl CompletionEvent {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn new_set() -> Self {
        let e = Self::default();
        e.set();
        e
    }

    pub fn is_set(&self) -> bool {
        self.0.set.get()
    }

    pub fn set(&self) {
        self.0.set.set(true);
        for w in self.0.waiters.take() {
            w.wake();
        }
    }

    pub fn wait(&self) -> EventWait {
        EventWait(self.clone())
    }
}

impl std::fmt::Debug for CompletionEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CompletionEvent(set={})", self.is_set())
    }
}

pub struct EventWait(CompletionEvent);

impl Future for EventWait {
    type Output = ();

    fn poll(self: Pin<&mut Self>, cx: &mut TaskCx<'_>) -> Poll<()> {
        if self.0.is_set() {
            Poll::Ready(())
        } else {
            self.0 .0.waiters.borrow_mut().push(cx.waker().clone());
            Poll::Pending
        }
    }
}
