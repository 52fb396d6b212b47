use std::cell::RefCell;
use std::io::Write;
use std::rc::Rc;

use super::LOG;
use crate::effects::{Context, Handler, HandlerFrame};
use crate::error::Result;
use crate::value::{Args, Value};

/// Where printed lines go: standard output or an in-memory buffer.
#[derive(Clone, Debug, Default)]
pub enum LogSink {
    #[default]
    Stdout,
    Buffer(Rc<RefCell<Vec<String>>>),
}

impl LogSink {
    pub fn buffer() -> Self {
        LogSink::Buffer(Rc::default())
    }

    pub fn write(&self, line: impl Into<String>) {
        let line = line.into();
        match self {
            LogSink::Stdout => {
                let mut out = std::io::stdout().lock();
                let _ = writeln!(out, "{line}");
            }
            LogSink::Buffer(b) => b.borrow_mut().push(line),
        }
    }

    /// Lines written so far; empty for stdout.
    pub fn lines(&self) -> Vec<String> {
        match self {
            LogSink::Stdout => vec![],
            LogSink::Buffer(b) => b.borrow().clone(),
        }
    }
}

/// `log(msg)`.
pub fn log(ctx: &Context, msg: impl Into<Value>) -> Result<Value> {
    ctx.perform(&LOG, &[msg.into()])
}

/// Prints `[INFO] {msg}`.
#[derive(Clone, Default)]
pub struct LogHandler {
    sink: LogSink,
}

impl LogHandler {
    pub fn new(sink: LogSink) -> Self {
        LogHandler { sink }
    }
}

impl Handler for LogHandler {
    fn into_frame(self) -> HandlerFrame {
        HandlerFrame::new("LogHandler").on(&LOG, move |_, args| {
            let msg = Args::new("log", args).get(0)?.render();
            self.sink.write(format!("[INFO] {msg}"));
            Ok(Value::Unit)
        })
    }
}

/// Prints `[DATE] {local time}` and then performs `log` again, which reaches
/// the next handler down.
#[derive(Clone, Default)]
pub struct LogDateHandler {
    sink: LogSink,
}

impl LogDateHandler {
    pub fn new(sink: LogSink) -> Self {
        LogDateHandler { sink }
    }
}

impl Handler for LogDateHandler {
    fn into_frame(self) -> HandlerFrame {
        HandlerFrame::new("LogDateHandler").on(&LOG, move |ctx, args| {
            let now = chrono::Local::now().format("%Y-%m-%d %H:%M:%S%.6f");
            self.sink.write(format!("[DATE] {now}"));
            ctx.perform(&LOG, args)
        })
    }
}
