//! Dynamically typed values passed to and returned from operations.

use std::any::Any;
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::runtime::{FutureHandle, Task};

/// Post-processing callback attached to a scheduled task.
#[derive(Clone)]
pub struct Callback(Rc<dyn Fn(Value) -> Result<Value>>);

impl Callback {
    pub fn new(f: impl Fn(Value) -> Result<Value> + 'static) -> Self {
        Callback(Rc::new(f))
    }

    pub fn identity() -> Self {
        Callback::new(Ok)
    }

    pub fn call(&self, v: Value) -> Result<Value> {
        (self.0)(v)
    }
}

impl fmt::Debug for Callback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Callback")
    }
}

#[derive(Clone, Default)]
pub enum Value {
    #[default]
    Unit,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Value>),
    Json(serde_json::Value),
    Future(FutureHandle),
    Task(Task),
    Callback(Callback),
    /// Domain objects owned by a particular handler family.
    Any(Rc<dyn Any>),
}

impl Value {
    pub fn any<T: Any>(x: T) -> Self {
        Value::Any(Rc::new(x))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Unit => "unit",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::List(_) => "list",
            Value::Json(_) => "json",
            Value::Future(_) => "future",
            Value::Task(_) => "task",
            Value::Callback(_) => "callback",
            Value::Any(_) => "object",
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            Value::Float(x) => Some(*x),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_future(&self) -> Option<&FutureHandle> {
        match self {
            Value::Future(f) => Some(f),
            _ => None,
        }
    }

    pub fn downcast<T: Any>(&self) -> Option<&T> {
        match self {
            Value::Any(rc) => rc.downcast_ref::<T>(),
            _ => None,
        }
    }

    pub fn into_list(self) -> Option<Vec<Value>> {
        match self {
            Value::List(xs) => Some(xs),
            _ => None,
        }
    }

    /// Text shown when the value is printed by a log sink.
    pub fn render(&self) -> String {
        match self {
            Value::Str(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

/// Typed extraction of positional operation arguments.
pub struct Args<'a> {
    op: &'a str,
    values: &'a [Value],
}

impl<'a> Args<'a> {
    pub fn new(op: &'a str, values: &'a [Value]) -> Self {
        Args { op, values }
    }

    pub fn get(&self, i: usize) -> Result<&'a Value> {
        self.values
            .get(i)
            .ok_or_else(|| Error::bad_arg(self.op, format!("missing argument #{i}")))
    }

    pub fn opt(&self, i: usize) -> Option<&'a Value> {
        self.values.get(i)
    }

    pub fn str(&self, i: usize) -> Result<&'a str> {
        let v = self.get(i)?;
        v.as_str().ok_or_else(|| self.mismatch(i, "str", v))
    }

    pub fn int(&self, i: usize) -> Result<i64> {
        let v = self.get(i)?;
        v.as_int().ok_or_else(|| self.mismatch(i, "int", v))
    }

    pub fn future(&self, i: usize) -> Result<&'a FutureHandle> {
        let v = self.get(i)?;
        v.as_future().ok_or_else(|| self.mismatch(i, "future", v))
    }

    pub fn task(&self, i: usize) -> Result<&'a Task> {
        match self.get(i)? {
            Value::Task(t) => Ok(t),
            v => Err(self.mismatch(i, "task", v)),
        }
    }

    pub fn callback(&self, i: usize) -> Result<Option<&'a Callback>> {
        match self.opt(i) {
            None | Some(Value::Unit) => Ok(None),
            Some(Value::Callback(c)) => Ok(Some(c)),
            Some(v) => Err(self.mismatch(i, "callback", v)),
        }
    }

    pub fn downcast<T: Any>(&self, i: usize) -> Result<&'a T> {
        let v = self.get(i)?;
        v.downcast::<T>()
            .ok_or_else(|| self.mismatch(i, std::any::type_name::<T>(), v))
    }

    fn mismatch(&self, i: usize, want: &str, got: &Value) -> Error {
        Error::bad_arg(
            self.op,
            format!("argument #{i}: expected {want}, got {}", got.type_name()),
        )
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("Unit"),
            Value::Bool(b) => write!(f, "Bool({b})"),
            Value::Int(i) => write!(f, "Int({i})"),
            Value::Float(x) => write!(f, "Float({x})"),
            Value::Str(s) => write!(f, "Str({s:?})"),
            Value::List(xs) => f.debug_list().entries(xs).finish(),
            Value::Json(j) => write!(f, "Json({j})"),
            Value::Future(h) => write!(f, "{h:?}"),
            Value::Task(_) => f.write_str("Task"),
            Value::Callback(_) => f.write_str("Callback"),
            Value::Any(_) => f.write_str("Any"),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("()"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::List(xs) => {
                f.write_str("[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
            Value::Json(j) => write!(f, "{j}"),
            Value::Future(h) => write!(f, "<future #{}>", h.id()),
            Value::Task(_) => f.write_str("<task>"),
            Value::Callback(_) => f.write_str("<callback>"),
            Value::Any(_) => f.write_str("<object>"),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Unit, Value::Unit) => true,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::List(a), Value::List(b)) => a == b,
            (Value::Json(a), Value::Json(b)) => a == b,
            (Value::Future(a), Value::Future(b)) => a.ptr_eq(b),
            (Value::Any(a), Value::Any(b)) => Rc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_owned())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<FutureHandle> for Value {
    fn from(h: FutureHandle) -> Self {
        Value::Future(h)
    }
}

impl From<Task> for Value {
    fn from(t: Task) -> Self {
        Value::Task(t)
    }
}

impl From<Callback> for Value {
    fn from(c: Callback) -> Self {
        Value::Callback(c)
    }
}

impl From<Vec<Value>> for Value {
    fn from(xs: Vec<Value>) -> Self {
        Value::List(xs)
    }
}
