//! Abstract operations, handler frames and the scoped handler stack.
//!
//! An operation is an opaque identity. A handler frame maps operations to
//! clauses. Performing an operation walks the stack from the top down to the
//! current *cursor* and runs the first clause found. While that clause runs
//! the cursor sits just below its frame, so operations the clause performs
//! are discharged by the sub-stack underneath it.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::value::Value;

static NEXT_OPERATION: AtomicU64 = AtomicU64::new(0);
static NEXT_FRAME: AtomicU64 = AtomicU64::new(0);

/// Identity of an abstract operation. Equality is by creation, never by name.
#[derive(Clone)]
pub struct OperationId {
    id: u64,
    name: Arc<str>,
}

impl OperationId {
    pub fn new(name: &str) -> Self {
        OperationId {
            id: NEXT_OPERATION.fetch_add(1, Ordering::Relaxed),
            name: Arc::from(name),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn id(&self) -> u64 {
        self.id
    }
}

pub fn create_operation(name: &str) -> OperationId {
    OperationId::new(name)
}

impl PartialEq for OperationId {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for OperationId {}

impl Hash for OperationId {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.id.hash(state);
    }
}

impl fmt::Debug for OperationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.name, self.id)
    }
}

impl fmt::Display for OperationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

pub type Clause = Rc<dyn Fn(&Context, &[Value]) -> Result<Value>>;
type Hook = Box<dyn Fn(&Context) -> Result<()>>;

/// A handler as it sits on the stack: a frozen clause map plus lifecycle hooks.
pub struct HandlerFrame {
    id: u64,
    name: String,
    clauses: HashMap<OperationId, Clause>,
    on_enter: Option<Hook>,
    on_exit: Option<Hook>,
}

impl HandlerFrame {
    pub fn new(name: impl Into<String>) -> Self {
        HandlerFrame {
            id: NEXT_FRAME.fetch_add(1, Ordering::Relaxed),
            name: name.into(),
            clauses: HashMap::new(),
            on_enter: None,
            on_exit: None,
        }
    }

    /// Registers the clause discharging `op`, replacing any earlier one.
    pub fn on(
        mut self,
        op: &OperationId,
        clause: impl Fn(&Context, &[Value]) -> Result<Value> + 'static,
    ) -> Self {
        self.clauses.insert(op.clone(), Rc::new(clause));
        self
    }

    pub fn on_enter(mut self, hook: impl Fn(&Context) -> Result<()> + 'static) -> Self {
        self.on_enter = Some(Box::new(hook));
        self
    }

    pub fn on_exit(mut self, hook: impl Fn(&Context) -> Result<()> + 'static) -> Self {
        self.on_exit = Some(Box::new(hook));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn handles(&self, op: &OperationId) -> bool {
        self.clauses.contains_key(op)
    }

    fn clause(&self, op: &OperationId) -> Option<Clause> {
        self.clauses.get(op).cloned()
    }
}

impl fmt::Debug for HandlerFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut ops: Vec<_> = self.clauses.keys().map(|o| o.name().to_owned()).collect();
        ops.sort();
        f.debug_struct("HandlerFrame")
            .field("name", &self.name)
            .field("ops", &ops)
            .finish()
    }
}

/// Anything that can be turned into a frame and pushed on a stack.
pub trait Handler {
    fn into_frame(self) -> HandlerFrame;
}

impl Handler for HandlerFrame {
    fn into_frame(self) -> HandlerFrame {
        self
    }
}

/// A view of the handler stack that operations are performed against.
///
/// The live stack owns one of these; [`Context::snapshot_context`] makes
/// detached copies for work that runs later.
pub struct Context {
    frames: RefCell<Vec<Rc<HandlerFrame>>>,
    /// `None` means "no bound": every frame is visible.
    cursor: Cell<Option<usize>>,
    /// Bound the performer saw before the running clause was entered.
    caller: Cell<Option<usize>>,
}

/// Detached, immutable dispatch view captured from a stack.
pub type DispatchContext = Context;

impl Context {
    pub fn empty() -> Self {
        Context::from_frames(Vec::new(), None)
    }

    fn from_frames(frames: Vec<Rc<HandlerFrame>>, cursor: Option<usize>) -> Self {
        Context {
            frames: RefCell::new(frames),
            cursor: Cell::new(cursor),
            caller: Cell::new(None),
        }
    }

    fn bound(&self) -> usize {
        let len = self.frames.borrow().len();
        self.cursor.get().map_or(len, |c| c.min(len))
    }

    pub fn depth(&self) -> usize {
        self.frames.borrow().len()
    }

    /// Number of frames visible to the next `perform`.
    pub fn cursor(&self) -> usize {
        self.bound()
    }

    pub fn frame_names(&self) -> Vec<String> {
        self.frames.borrow().iter().map(|f| f.name.clone()).collect()
    }

    /// Runs the topmost clause for `op` among the visible frames.
    pub fn perform(&self, op: &OperationId, args: &[Value]) -> Result<Value> {
        let bound = self.bound();
        let found = {
            let frames = self.frames.borrow();
            frames[..bound]
                .iter()
                .enumerate()
                .rev()
                .find_map(|(i, f)| f.clause(op).map(|c| (i, c)))
        };
        let Some((index, clause)) = found else {
            return Err(Error::UnhandledOperation {
                op: op.name().to_owned(),
                stack: self.describe(),
            });
        };
        let _restore = CursorGuard {
            ctx: self,
            cursor: self.cursor.replace(Some(index)),
            caller: self.caller.replace(Some(bound)),
        };
        clause(self, args)
    }

    /// Captures the frames and the current cursor for later dispatch.
    pub fn snapshot_context(&self) -> Context {
        Context::from_frames(self.frames.borrow().clone(), Some(self.bound()))
    }

    /// Captures the view of whoever performed the operation whose clause is
    /// currently running. Outside of a clause this equals the snapshot.
    pub fn caller_context(&self) -> Context {
        let bound = self.caller.get().unwrap_or_else(|| self.bound());
        Context::from_frames(self.frames.borrow().clone(), Some(bound))
    }

    /// Frame names bottom to top with a `|` marking the cursor.
    pub fn describe(&self) -> String {
        let frames = self.frames.borrow();
        let bound = self.bound();
        let mut parts: Vec<String> = Vec::with_capacity(frames.len() + 1);
        for (i, f) in frames.iter().enumerate() {
            if i == bound {
                parts.push("|".into());
            }
            parts.push(f.name.clone());
        }
        if bound == frames.len() {
            parts.push("|".into());
        }
        format!("[{}]", parts.join(" "))
    }
}

impl fmt::Debug for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Context{}", self.describe())
    }
}

struct CursorGuard<'a> {
    ctx: &'a Context,
    cursor: Option<usize>,
    caller: Option<usize>,
}

impl Drop for CursorGuard<'_> {
    fn drop(&mut self) {
        self.ctx.cursor.set(self.cursor);
        self.ctx.caller.set(self.caller);
    }
}

/// The live, mutable handler stack of one execution context.
pub struct HandlerStack {
    ctx: Rc<Context>,
}

impl Default for HandlerStack {
    fn default() -> Self {
        Self::new()
    }
}

impl HandlerStack {
    pub fn new() -> Self {
        HandlerStack {
            ctx: Rc::new(Context::empty()),
        }
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    /// Runs the frame's enter hook and makes it the topmost frame.
    pub fn push(&self, handler: impl Handler) -> Result<Scope> {
        let frame = handler.into_frame();
        if let Some(enter) = &frame.on_enter {
            enter(&self.ctx)?;
        }
        let scope = Scope {
            ctx: Rc::clone(&self.ctx),
            frame_id: frame.id,
            name: frame.name.clone(),
            released: false,
        };
        self.ctx.frames.borrow_mut().push(Rc::new(frame));
        Ok(scope)
    }

    /// Pushes `handler`, runs `body`, then pops it again.
    ///
    /// A body error wins over an exit-hook error.
    pub fn with<R>(
        &self,
        handler: impl Handler,
        body: impl FnOnce(&Context) -> Result<R>,
    ) -> Result<R> {
        let mut scope = self.push(handler)?;
        let out = body(&self.ctx);
        let exit = scope.release();
        let value = out?;
        exit?;
        Ok(value)
    }
}

impl std::ops::Deref for HandlerStack {
    type Target = Context;

    fn deref(&self) -> &Context {
        &self.ctx
    }
}

/// Token returned by [`HandlerStack::push`]. Releasing it pops the frame and
/// runs the exit hook.
///
/// Dropping an unreleased scope releases it and discards any error; call
/// [`Scope::release`] to observe exit failures.
pub struct Scope {
    ctx: Rc<Context>,
    frame_id: u64,
    name: String,
    released: bool,
}

impl Scope {
    pub fn release(&mut self) -> Result<()> {
        if self.released {
            return Ok(());
        }
        let frame = {
            let mut frames = self.ctx.frames.borrow_mut();
            match frames.last() {
                Some(top) if top.id == self.frame_id => frames.pop(),
                top => {
                    return Err(Error::OutOfOrderPop {
                        frame: self.name.clone(),
                        top: top.map(|f| f.name.clone()).unwrap_or_else(|| "<empty>".into()),
                    })
                }
            }
        };
        self.released = true;
        match frame.as_ref().and_then(|f| f.on_exit.as_ref()) {
            Some(exit) => exit(&self.ctx),
            None => Ok(()),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl Drop for Scope {
    fn drop(&mut self) {
        let _ = self.release();
    }
}
