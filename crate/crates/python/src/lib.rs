//! Python bindings: operations and handler stacks with Python clauses, the
//! workflow runners, the Game of 24 helpers, the calculus and trace files.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString, PyTuple};

use llm_effects::bench::{
    bench as bench_run, run_research_topics as research_run, run_tot as tot_run, table_inputs,
    BenchConfig, BenchInput, LlmSpec, RunMode, StackSpec, Workflow,
};
use llm_effects::calculus::{parse_program, CalcError, Machine, Mode, DEFAULT_STEP_LIMIT};
use llm_effects::llm::Trace;
use llm_effects::runtime::ClockKind;
use llm_effects::workflows::{self, LogSink, TotParams, DEFAULT_AREA};
use llm_effects::{
    Context, Error, HandlerFrame, HandlerStack as CoreStack, OperationId, Scope as CoreScope, Value,
};

create_exception!(llm_effects, EffectError, PyException);
create_exception!(llm_effects, ConfigError, EffectError);

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::TraceFormat { .. } => ConfigError::new_err(e.to_string()),
        other => EffectError::new_err(other.to_string()),
    }
}

fn calc_err(e: CalcError) -> PyErr {
    match e {
        CalcError::Parse(_) | CalcError::MultiShotRequired(_) => PyValueError::new_err(e.to_string()),
        other => EffectError::new_err(other.to_string()),
    }
}

/// A runtime value Python has no native form for, such as a future.
#[pyclass(unsendable, name = "Opaque")]
struct PyOpaque(Value);

#[pymethods]
impl PyOpaque {
    fn __repr__(&self) -> String {
        format!("<{} {}>", self.0.type_name(), self.0)
    }
}

fn json_to_py(py: Python<'_>, j: &serde_json::Value) -> PyObject {
    use serde_json::Value as J;
    match j {
        J::Null => py.None(),
        J::Bool(b) => b.into_py(py),
        J::Number(n) => match n.as_i64() {
            Some(i) => i.into_py(py),
            None => n.as_f64().unwrap_or(f64::NAN).into_py(py),
        },
        J::String(s) => s.into_py(py),
        J::Array(xs) => PyList::new_bound(py, xs.iter().map(|x| json_to_py(py, x))).into_py(py),
        J::Object(m) => {
            let d = PyDict::new_bound(py);
            for (k, v) in m {
                d.set_item(k, json_to_py(py, v)).expect("string keys");
            }
            d.into_py(py)
        }
    }
}

fn to_py(py: Python<'_>, v: &Value) -> PyObject {
    match v {
        Value::Unit => py.None(),
        Value::Bool(b) => b.into_py(py),
        Value::Int(i) => i.into_py(py),
        Value::Float(f) => f.into_py(py),
        Value::Str(s) => s.into_py(py),
        Value::List(xs) => PyList::new_bound(py, xs.iter().map(|x| to_py(py, x))).into_py(py),
        Value::Json(j) => json_to_py(py, j),
        other => Py::new(py, PyOpaque(other.clone()))
            .expect("allocate opaque value")
            .into_py(py),
    }
}

fn py_to_json(obj: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    use serde_json::Value as J;
    if obj.is_none() {
        Ok(J::Null)
    } else if obj.is_instance_of::<PyBool>() {
        Ok(J::Bool(obj.extract()?))
    } else if obj.is_instance_of::<PyInt>() {
        Ok(J::from(obj.extract::<i64>()?))
    } else if obj.is_instance_of::<PyFloat>() {
        Ok(J::from(obj.extract::<f64>()?))
    } else if obj.is_instance_of::<PyString>() {
        Ok(J::String(obj.extract()?))
    } else if let Ok(d) = obj.downcast::<PyDict>() {
        let mut m = serde_json::Map::new();
        for (k, v) in d.iter() {
            m.insert(k.extract::<String>()?, py_to_json(&v)?);
        }
        Ok(J::Object(m))
    } else if obj.is_instance_of::<PyList>() || obj.is_instance_of::<PyTuple>() {
        obj.iter()?.map(|x| py_to_json(&x?)).collect::<PyResult<Vec<_>>>().map(J::Array)
    } else {
        Err(PyTypeError::new_err(format!("cannot convert {} to JSON", obj.get_type().name()?)))
    }
}

fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    if obj.is_none() {
        Ok(Value::Unit)
    } else if obj.is_instance_of::<PyBool>() {
        Ok(Value::Bool(obj.extract()?))
    } else if obj.is_instance_of::<PyInt>() {
        Ok(Value::Int(obj.extract()?))
    } else if obj.is_instance_of::<PyFloat>() {
        Ok(Value::Float(obj.extract()?))
    } else if obj.is_instance_of::<PyString>() {
        Ok(Value::Str(obj.extract()?))
    } else if let Ok(o) = obj.downcast::<PyOpaque>() {
        Ok(o.borrow().0.clone())
    } else if obj.is_instance_of::<PyDict>() {
        Ok(Value::Json(py_to_json(obj)?))
    } else if obj.is_instance_of::<PyList>() || obj.is_instance_of::<PyTuple>() {
        obj.iter()?.map(|x| from_py(&x?)).collect::<PyResult<Vec<_>>>().map(Value::List)
    } else {
        Err(PyTypeError::new_err(format!("unsupported value {}", obj.repr()?)))
    }
}

/// An effect operation; equal only to itself.
#[pyclass(frozen, name = "Operation")]
#[derive(Clone)]
struct PyOperation(OperationId);

#[pymethods]
impl PyOperation {
    #[new]
    fn new(name: &str) -> Self {
        PyOperation(OperationId::new(name))
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_owned()
    }

    fn __repr__(&self) -> String {
        format!("Operation({:?})", self.0.name())
    }
}

fn perform_with(ctx: &Context, op: &PyOperation, args: &Bound<'_, PyTuple>) -> PyResult<PyObject> {
    let vals = args.iter().map(|a| from_py(&a)).collect::<PyResult<Vec<_>>>()?;
    let out = ctx.perform(&op.0, &vals).map_err(to_py_err)?;
    Ok(to_py(args.py(), &out))
}

/// The dispatch view handed to a clause: performing from here reaches only
/// the handlers below the running one.
#[pyclass(unsendable, name = "Context")]
struct PyContext(Context);

#[pymethods]
impl PyContext {
    #[pyo3(signature = (op, *args))]
    fn perform(&self, op: &PyOperation, args: &Bound<'_, PyTuple>) -> PyResult<PyObject> {
        perform_with(&self.0, op, args)
    }

    fn describe(&self) -> String {
        self.0.describe()
    }
}

/// A handler made of Python callables. Each clause is called as
/// `clause(ctx, *args)` and returns the operation's result.
#[pyclass(unsendable, name = "Handler")]
struct PyHandler {
    name: String,
    clauses: Vec<(OperationId, PyObject)>,
}

#[pymethods]
impl PyHandler {
    #[new]
    fn new(name: String, clauses: &Bound<'_, PyDict>) -> PyResult<Self> {
        let mut out = vec![];
        for (k, v) in clauses.iter() {
            let op = k.extract::<PyOperation>()?;
            if !v.is_callable() {
                return Err(PyTypeError::new_err(format!("clause for {} is not callable", op.0)));
            }
            out.push((op.0, v.unbind()));
        }
        Ok(PyHandler { name, clauses: out })
    }

    fn __repr__(&self) -> String {
        let ops: Vec<&str> = self.clauses.iter().map(|(o, _)| o.name()).collect();
        format!("Handler({:?}, [{}])", self.name, ops.join(", "))
    }
}

impl PyHandler {
    fn frame(&self, py: Python<'_>) -> HandlerFrame {
        let mut frame = HandlerFrame::new(self.name.clone());
        for (op, f) in &self.clauses {
            let f = f.clone_ref(py);
            let name = op.name().to_owned();
            frame = frame.on(op, move |ctx, args| {
                Python::with_gil(|py| {
                    let mut call_args = vec![Py::new(py, PyContext(ctx.snapshot_context()))
                        .map_err(|e| Error::Task(e.to_string()))?
                        .into_py(py)];
                    call_args.extend(args.iter().map(|a| to_py(py, a)));
                    let res = f
                        .call1(py, PyTuple::new_bound(py, call_args))
                        .map_err(|e| Error::Task(format!("clause {name}: {e}")))?;
                    from_py(res.bind(py)).map_err(|e| Error::Task(e.to_string()))
                })
            });
        }
        frame
    }
}

/// An installed handler; leaving the `with` block or calling `release`
/// removes it.
#[pyclass(unsendable, name = "Scope")]
struct PyScope(Option<CoreScope>);

#[pymethods]
impl PyScope {
    fn release(&mut self) -> PyResult<()> {
        match self.0.take() {
            Some(mut s) => s.release().map_err(to_py_err),
            None => Ok(()),
        }
    }

    fn __enter__(slf: PyRef<'_, Self>) -> PyRef<'_, Self> {
        slf
    }

    #[pyo3(signature = (*_exc))]
    fn __exit__(&mut self, _exc: &Bound<'_, PyTuple>) -> PyResult<bool> {
        self.release()?;
        Ok(false)
    }
}

#[pyclass(unsendable, name = "HandlerStack")]
struct PyStack(CoreStack);

#[pymethods]
impl PyStack {
    #[new]
    fn new() -> Self {
        PyStack(CoreStack::new())
    }

    fn push(&self, py: Python<'_>, handler: &PyHandler) -> PyResult<PyScope> {
        let scope = self.0.push(handler.frame(py)).map_err(to_py_err)?;
        Ok(PyScope(Some(scope)))
    }

    #[pyo3(signature = (op, *args))]
    fn perform(&self, op: &PyOperation, args: &Bound<'_, PyTuple>) -> PyResult<PyObject> {
        perform_with(self.0.context(), op, args)
    }

    fn depth(&self) -> usize {
        self.0.depth()
    }

    fn describe(&self) -> String {
        self.0.describe()
    }
}

fn spec(mode: &str, latency_ms: u64, virtual_clock: bool, llm: &str, trace: Option<PathBuf>) -> PyResult<StackSpec> {
    let mode = match mode {
        "async" => RunMode::Async,
        "sync" => RunMode::Sync,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let need = |t: &Option<PathBuf>| {
        t.clone().ok_or_else(|| ConfigError::new_err("a trace path is required"))
    };
    let llm = match llm {
        "mock" => LlmSpec::Mock,
        "live" => LlmSpec::Live(llm_effects::llm::LlmConfig::from_env()),
        "replay" => LlmSpec::Replay(need(&trace)?),
        "record" => LlmSpec::Record(need(&trace)?, Box::new(LlmSpec::Mock)),
        other => return Err(PyValueError::new_err(format!("unknown llm {other:?}"))),
    };
    let clock = if virtual_clock { ClockKind::Virtual } else { ClockKind::Wall };
    Ok(StackSpec::mock(mode, latency_ms).with_clock(clock).with_llm(llm))
}

/// Runs the research-topics workflow; returns the report, the log lines and
/// the elapsed seconds.
#[pyfunction]
#[pyo3(signature = (area=DEFAULT_AREA.to_owned(), mode="async", latency_ms=100, virtual_clock=true, llm="mock", trace=None))]
fn run_research_topics(
    py: Python<'_>,
    area: String,
    mode: &str,
    latency_ms: u64,
    virtual_clock: bool,
    llm: &str,
    trace: Option<PathBuf>,
) -> PyResult<PyObject> {
    let spec = spec(mode, latency_ms, virtual_clock, llm, trace)?;
    let sink = LogSink::buffer();
    let (report, stats) = research_run(&spec, &area, sink.clone()).map_err(to_py_err)?;
    let out = serde_json::json!({
        "area": report.area,
        "entries": report.entries,
        "log": sink.lines(),
        "elapsed_s": stats.elapsed.as_secs_f64(),
    });
    Ok(json_to_py(py, &out))
}

/// Solves the Game of 24 with the tree-of-thoughts search over the mock.
#[pyfunction]
#[pyo3(signature = (numbers, mode="async", latency_ms=0, virtual_clock=true, n_steps=4, n_select=5, n_eval=3))]
#[allow(clippy::too_many_arguments)]
fn run_tot(
    py: Python<'_>,
    numbers: Vec<i64>,
    mode: &str,
    latency_ms: u64,
    virtual_clock: bool,
    n_steps: usize,
    n_select: usize,
    n_eval: usize,
) -> PyResult<PyObject> {
    let spec = spec(mode, latency_ms, virtual_clock, "mock", None)?;
    let params = TotParams { n_steps, n_select, n_eval };
    let (outcome, stats) = tot_run(&spec, &numbers, params, |_, _| {}).map_err(to_py_err)?;
    let frontier: Vec<String> = outcome.frontier.iter().map(|s| s.to_string()).collect();
    let out = serde_json::json!({
        "frontier": frontier,
        "answer": outcome.answer,
        "elapsed_s": stats.elapsed.as_secs_f64(),
    });
    Ok(json_to_py(py, &out))
}

/// Times a workflow under the async and sync stacks; returns the report.
#[pyfunction]
#[pyo3(name = "bench", signature = (workflow, inputs=None, trials=3, latency_ms=100, virtual_clock=false, seed=0))]
fn bench_workflow(
    py: Python<'_>,
    workflow: &str,
    inputs: Option<&Bound<'_, PyList>>,
    trials: usize,
    latency_ms: u64,
    virtual_clock: bool,
    seed: u64,
) -> PyResult<PyObject> {
    let wf = match workflow {
        "tot" => Workflow::Tot,
        "research-topics" => Workflow::ResearchTopics,
        other => return Err(PyValueError::new_err(format!("unknown workflow {other:?}"))),
    };
    let inputs = match inputs {
        None => match wf {
            Workflow::Tot => table_inputs(),
            Workflow::ResearchTopics => vec![BenchInput::Area(DEFAULT_AREA.into())],
        },
        Some(xs) => xs
            .iter()
            .map(|x| match wf {
                Workflow::Tot => x.extract::<Vec<i64>>().map(BenchInput::Numbers),
                Workflow::ResearchTopics => x.extract::<String>().map(BenchInput::Area),
            })
            .collect::<PyResult<_>>()?,
    };
    let mut cfg = BenchConfig::new(wf, inputs);
    cfg.trials = trials;
    cfg.latency_ms = latency_ms;
    cfg.seed = seed;
    cfg.clock = if virtual_clock { ClockKind::Virtual } else { ClockKind::Wall };
    let report = bench_run(&cfg).map_err(to_py_err)?;
    Ok(json_to_py(py, &serde_json::to_value(&report).expect("report serializes")))
}

/// An expression reaching 24 with the four numbers, or None.
#[pyfunction]
fn brute_solve(numbers: Vec<i64>) -> Option<String> {
    workflows::brute_solve(&numbers)
}

/// Normalized `expr = 24` if `expr` uses exactly `numbers` and equals 24.
#[pyfunction]
fn check_answer(expr: &str, numbers: Vec<i64>) -> PyResult<String> {
    workflows::check_answer(expr, &numbers).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn machine(multishot: bool, step_limit: usize) -> Machine {
    let mode = if multishot { Mode::MultiShot } else { Mode::OneShot };
    Machine::new(mode).with_step_limit(step_limit)
}

/// Evaluates a calculus program; returns `(value, printed)` as strings.
#[pyfunction]
#[pyo3(signature = (src, multishot=false, step_limit=DEFAULT_STEP_LIMIT))]
fn calc_eval(src: &str, multishot: bool, step_limit: usize) -> PyResult<(String, Vec<String>)> {
    let prog = parse_program(src).map_err(|e| calc_err(e.into()))?;
    let out = machine(multishot, step_limit).eval(&prog).map_err(calc_err)?;
    Ok((out.value.to_string(), out.output.iter().map(|v| v.render()).collect()))
}

/// Every configuration of a run, one line each, then how it ended.
#[pyfunction]
#[pyo3(signature = (src, multishot=false, step_limit=DEFAULT_STEP_LIMIT))]
fn calc_trace(src: &str, multishot: bool, step_limit: usize) -> PyResult<Vec<String>> {
    let prog = parse_program(src).map_err(|e| calc_err(e.into()))?;
    let t = machine(multishot, step_limit).trace(&prog).map_err(calc_err)?;
    Ok(t.lines())
}

/// Reads a `.trace.jsonl` file into a list of dicts.
#[pyfunction]
fn load_trace(py: Python<'_>, path: PathBuf) -> PyResult<PyObject> {
    let trace = Trace::load(path).map_err(to_py_err)?;
    let records: Vec<serde_json::Value> = trace
        .records
        .iter()
        .map(|r| serde_json::to_value(r).expect("record serializes"))
        .collect();
    Ok(json_to_py(py, &serde_json::Value::Array(records)))
}

#[pymodule]
#[pyo3(name = "llm_effects")]
pub fn llm_effects_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("EffectError", py.get_type_bound::<EffectError>())?;
    m.add("ConfigError", py.get_type_bound::<ConfigError>())?;
    m.add_class::<PyOperation>()?;
    m.add_class::<PyHandler>()?;
    m.add_class::<PyStack>()?;
    m.add_class::<PyScope>()?;
    m.add_class::<PyContext>()?;
    m.add_class::<PyOpaque>()?;
    m.add("DEFAULT_AREA", DEFAULT_AREA)?;
    m.add("FIXTURE_TOPICS", workflows::FIXTURE_TOPICS.to_vec())?;
    for f in [
        wrap_pyfunction!(run_research_topics, m)?,
        wrap_pyfunction!(run_tot, m)?,
        wrap_pyfunction!(bench_workflow, m)?,
        wrap_pyfunction!(brute_solve, m)?,
        wrap_pyfunction!(check_answer, m)?,
        wrap_pyfunction!(calc_eval, m)?,
        wrap_pyfunction!(calc_trace, m)?,
        wrap_pyfunction!(load_trace, m)?,
    ] {
        m.add_function(f)?;
    }
    Ok(())
}
