use serde::Serialize;

use super::logging::{log, LogSink};
use super::{GET_DESCRIPTION, GET_TOPICS, LOG};
use crate::effects::{Context, Handler, HandlerFrame};
use crate::error::{Error, Result};
use crate::llm::{complete, parse, CallKind, MockRule, Schema};
use crate::runtime::{async_, await_, expect_future, FutureHandle, Task};
use crate::value::{Args, Callback, Value};

pub const DEFAULT_AREA: &str = "PL techniques for LLM applications";

pub fn topics_prompt(area: &str) -> String {
    format!("Give a list of topics in the research area {area}.")
}

pub fn description_prompt(topic: &str) -> String {
    format!("Give a short description about the topic {topic}.")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicReport {
    pub area: String,
    pub entries: Vec<(String, String)>,
}

pub fn get_topics(ctx: &Context, area: &str) -> Result<Vec<String>> {
    let v = ctx.perform(&GET_TOPICS, &[Value::from(area)])?;
    v.into_list()
        .ok_or_else(|| Error::bad_arg("get_topics", "expected a list"))?
        .into_iter()
        .map(|t| {
            t.as_str()
                .map(str::to_owned)
                .ok_or_else(|| Error::bad_arg("get_topics", "topics must be strings"))
        })
        .collect()
}

pub fn get_description(ctx: &Context, topic: &str) -> Result<FutureHandle> {
    let v = ctx.perform(&GET_DESCRIPTION, &[Value::from(topic)])?;
    expect_future("get_description", v)
}

/// Asks for topics, fans out one description request per topic, and logs
/// each topic followed by its description.
pub fn research_topics(ctx: &Context, area: &str) -> Result<TopicReport> {
    let topics = get_topics(ctx, area)?;
    let mut pending = Vec::with_capacity(topics.len());
    for topic in &topics {
        let description = get_description(ctx, topic)?;
        log(ctx, topic.as_str())?;
        log(ctx, description.clone())?;
        pending.push(description);
    }
    let mut entries = Vec::with_capacity(topics.len());
    for (topic, fut) in topics.into_iter().zip(pending) {
        let d = await_(ctx, &fut)?;
        entries.push((topic, d.render()));
    }
    Ok(TopicReport {
        area: area.to_owned(),
        entries,
    })
}

/// Implements the research operations on top of `parse`, `complete` and
/// `async_`. `log` prints through a callback once its message resolves.
pub struct ResearchTopicsHandler {
    sink: LogSink,
    schema: Schema,
}

impl ResearchTopicsHandler {
    pub fn new(sink: LogSink) -> Self {
        ResearchTopicsHandler {
            sink,
            schema: Schema::research_area(),
        }
    }
}

impl Handler for ResearchTopicsHandler {
    fn into_frame(self) -> HandlerFrame {
        let schema = self.schema;
        let sink = self.sink;
        HandlerFrame::new("ResearchTopicsHandler")
            .on(&GET_TOPICS, move |ctx, args| {
                let area = Args::new("get_topics", args).str(0)?;
                let fut = parse(ctx, &topics_prompt(area), &schema)?;
                let v = await_(ctx, &fut)?;
                let topics = match v {
                    Value::Json(j) => j["topics"].clone(),
                    other => {
                        return Err(Error::bad_arg("get_topics", format!("got {other:?}")))
                    }
                };
                let list = topics
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(|t| t.as_str().map(Value::from))
                    .collect();
                Ok(Value::List(list))
            })
            .on(&GET_DESCRIPTION, |ctx, args| {
                let topic = Args::new("get_description", args).str(0)?;
                Ok(Value::Future(complete(ctx, &description_prompt(topic))?))
            })
            .on(&LOG, move |ctx, args| {
                let msg = Args::new("log", args).get(0)?.clone();
                let aux = Task::from_future(async move {
                    match msg {
                        Value::Future(f) => f.await,
                        other => Ok(other),
                    }
                });
                let sink = sink.clone();
                let print = Callback::new(move |v| {
                    sink.write(v.render());
                    Ok(v)
                });
                Ok(Value::Future(async_(ctx, aux, Some(print))?))
            })
    }
}

pub const FIXTURE_TOPICS: [&str; 8] = [
    "effect handlers",
    "prompting",
    "structured outputs",
    "asynchronous execution",
    "tree of thoughts",
    "record and replay",
    "program synthesis",
    "type systems for LLM code",
];

pub fn fixture_description(topic: &str) -> String {
    format!("A short overview of {topic} and why it matters for LLM applications.")
}

/// Mock responder for the research workflow: every area gets `topics`, and
/// each topic gets a canned description.
pub fn research_mock_rule(topics: &[&str]) -> MockRule {
    let topics_json =
        serde_json::to_string(&serde_json::json!({ "topics": topics })).expect("serializable");
    MockRule::func(move |req| match req.kind {
        CallKind::Parse => req
            .prompt
            .starts_with("Give a list of topics in the research area")
            .then(|| topics_json.clone()),
        CallKind::Complete => req
            .prompt
            .strip_prefix("Give a short description about the topic ")
            .and_then(|t| t.strip_suffix('.'))
            .map(fixture_description),
    })
}
