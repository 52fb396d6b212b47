use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;
use std::time::Duration;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::{Backend, BackendFuture, LlmRequest};
use crate::effects::Context;
use crate::error::Error;
use crate::runtime::sleep_for;

/// How a [`MockBackend`] maps prompts to responses.
#[derive(Clone)]
pub enum MockRule {
    Table(Rc<HashMap<String, String>>),
    Func(Rc<dyn Fn(&LlmRequest) -> Option<String>>),
}

impl MockRule {
    pub fn table<K: Into<String>, V: Into<String>>(
        entries: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        MockRule::Table(Rc::new(
            entries
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        ))
    }

    pub fn func(f: impl Fn(&LlmRequest) -> Option<String> + 'static) -> Self {
        MockRule::Func(Rc::new(f))
    }

    pub fn respond(&self, req: &LlmRequest) -> Option<String> {
        match self {
            MockRule::Table(t) => t.get(&req.prompt).cloned(),
            MockRule::Func(f) => f(req),
        }
    }
}

/// Deterministic backend. Each call sleeps for the configured latency on the
/// scheduler clock, then answers from its rule.
pub struct MockBackend {
    rule: MockRule,
    latency: Duration,
    jitter_ms: u64,
    rng: RefCell<StdRng>,
    model: String,
    calls: Rc<Cell<usize>>,
}

impl MockBackend {
    pub fn new(rule: MockRule) -> Self {
        MockBackend {
            rule,
            latency: Duration::ZERO,
            jitter_ms: 0,
            rng: RefCell::new(StdRng::seed_from_u64(0)),
            model: "mock".into(),
            calls: Rc::default(),
        }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// Adds a uniform extra delay in `0..=max_ms`, drawn from a seeded RNG.
    pub fn with_jitter(mut self, max_ms: u64, seed: u64) -> Self {
        self.jitter_ms = max_ms;
        self.rng = RefCell::new(StdRng::seed_from_u64(seed));
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    /// Shared counter of calls made so far.
    pub fn call_counter(&self) -> Rc<Cell<usize>> {
        Rc::clone(&self.calls)
    }

    fn delay(&self) -> Duration {
        if self.jitter_ms == 0 {
            return self.latency;
        }
        let extra = self.rng.borrow_mut().gen_range(0..=self.jitter_ms);
        self.latency + Duration::from_millis(extra)
    }
}

impl Backend for MockBackend {
    fn model(&self) -> String {
        self.model.clone()
    }

    fn call(&self, ctx: Rc<Context>, req: LlmRequest) -> BackendFuture {
        self.calls.set(self.calls.get() + 1);
        let delay = self.delay();
        let answer = self.rule.respond(&req);
        Box::pin(async move {
            if !delay.is_zero() {
                sleep_for(&ctx, delay)?.await?;
            }
            answer.ok_or(Error::MockRuleMissing { prompt: req.prompt })
        }) as BackendFuture
    }
}
