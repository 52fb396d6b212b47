use std::fmt;
use std::rc::Rc;

/// Captured rest of a computation: resuming with `w` runs
/// `with handler handle [w/var]body`.
#[derive(Debug, Clone, PartialEq)]
pub struct Continuation {
    pub handler: Rc<HandlerDef>,
    pub var: String,
    pub body: Comp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Val {
    Var(String),
    True,
    False,
    Int(i64),
    Str(String),
    Cont(Rc<Continuation>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub op: String,
    pub param: String,
    /// Continuation binder, only legal in multi-shot mode.
    pub resume: Option<String>,
    pub body: Comp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandlerDef {
    pub clauses: Vec<Clause>,
}

impl HandlerDef {
    pub fn clause(&self, op: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.op == op)
    }

    /// Short label listing the handled operations, e.g. `{decide}`.
    pub fn label(&self) -> String {
        let ops: Vec<&str> = self.clauses.iter().map(|c| c.op.as_str()).collect();
        format!("{{{}}}", ops.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Comp {
    Return(Val),
    Let(String, Box<Comp>, Box<Comp>),
    If(Val, Box<Comp>, Box<Comp>),
    Op(String, Val),
    With(Rc<HandlerDef>, Box<Comp>),
    /// A handler that has been installed; its frame is on the stack while
    /// the inner computation runs.
    Handling(Rc<HandlerDef>, Box<Comp>),
    /// Applying a captured continuation.
    Resume(Val, Val),
}

impl Comp {
    pub fn ret(v: Val) -> Comp {
        Comp::Return(v)
    }

    pub fn let_(x: impl Into<String>, c1: Comp, c2: Comp) -> Comp {
        Comp::Let(x.into(), Box::new(c1), Box::new(c2))
    }

    pub fn if_(v: Val, t: Comp, e: Comp) -> Comp {
        Comp::If(v, Box::new(t), Box::new(e))
    }

    pub fn op(name: impl Into<String>, v: Val) -> Comp {
        Comp::Op(name.into(), v)
    }

    pub fn with(h: HandlerDef, c: Comp) -> Comp {
        Comp::With(Rc::new(h), Box::new(c))
    }

    /// Nesting depth, counting every computation node.
    pub fn depth(&self) -> usize {
        match self {
            Comp::Return(_) | Comp::Op(..) | Comp::Resume(..) => 1,
            Comp::Let(_, a, b) | Comp::If(_, a, b) => 1 + a.depth().max(b.depth()),
            Comp::With(h, c) => {
                let clauses = h.clauses.iter().map(|cl| cl.body.depth()).max().unwrap_or(0);
                1 + c.depth().max(clauses)
            }
            Comp::Handling(_, c) => 1 + c.depth(),
        }
    }
}

fn write_str_lit(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for ch in s.chars() {
        match ch {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Val {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Val::Var(x) => f.write_str(x),
            Val::True => f.write_str("true"),
            Val::False => f.write_str("false"),
            Val::Int(i) => write!(f, "{i}"),
            Val::Str(s) => write_str_lit(f, s),
            Val::Cont(k) => write!(f, "<cont {} {}. {}>", k.handler.label(), k.var, k.body),
        }
    }
}

impl fmt::Display for HandlerDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("handler {")?;
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match &c.resume {
                Some(k) => write!(f, "{}({}, {}) -> {}", c.op, c.param, k, c.body)?,
                None => write!(f, "{}({}) -> {}", c.op, c.param, c.body)?,
            }
        }
        f.write_str("}")
    }
}

impl fmt::Display for Comp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Comp::Return(v) => write!(f, "return {v}"),
            Comp::Let(x, a, b) => write!(f, "do {x} <- {a} in {b}"),
            Comp::If(v, a, b) => write!(f, "if {v} then {a} else {b}"),
            Comp::Op(op, v) => write!(f, "{op}({v})"),
            Comp::With(h, c) => write!(f, "with {h} handle {c}"),
            Comp::Handling(_, c) => write!(f, "{{| {c} |}}"),
            Comp::Resume(k, v) => write!(f, "resume({k}, {v})"),
        }
    }
}
