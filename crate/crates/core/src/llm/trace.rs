//! Recorded LLM calls and their JSON Lines file format.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    Complete,
    Parse,
}

impl fmt::Display for CallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CallKind::Complete => "complete",
            CallKind::Parse => "parse",
        })
    }
}

/// One request/response pair. Field order is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmCallRecord {
    pub seq: u64,
    pub kind: CallKind,
    pub prompt: String,
    pub schema_id: Option<String>,
    pub response: String,
    pub model: String,
    pub latency_ms: f64,
}

const KEYS: [&str; 7] = [
    "seq",
    "kind",
    "prompt",
    "schema_id",
    "response",
    "model",
    "latency_ms",
];

pub const TRACE_EXTENSION: &str = ".trace.jsonl";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<LlmCallRecord>,
}

impl Trace {
    pub fn new(records: Vec<LlmCallRecord>) -> Self {
        Trace { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks seq contiguity and the kind/schema pairing. The error's line
    /// number is the 1-based record position.
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            let line = i + 1;
            let fail = |msg: String| Err(Error::TraceFormat { line, msg });
            if r.seq != i as u64 {
                return fail(format!("expected seq {i}, found {}", r.seq));
            }
            if (r.kind == CallKind::Parse) != r.schema_id.is_some() {
                return fail(format!(
                    "kind `{}` does not match schema_id {:?}",
                    r.kind, r.schema_id
                ));
            }
            if !(r.latency_ms >= 0.0) {
                return fail(format!("negative latency {}", r.latency_ms));
            }
            if r.prompt.is_empty() {
                return fail("empty prompt".into());
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(parse_line(line, i + 1)?);
        }
        let trace = Trace { records };
        // Report positions as file lines when the file has no blank lines.
        trace.validate()?;
        Ok(trace)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_jsonl(&text)
    }
}

fn parse_line(line: &str, lineno: usize) -> Result<LlmCallRecord> {
    let fail = |msg: String| Error::TraceFormat { line: lineno, msg };
    let raw: serde_json::Value = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
    let obj = raw
        .as_object()
        .ok_or_else(|| fail("expected a JSON object".into()))?;
    let found: BTreeSet<&str> = obj.keys().map(String::as_str).collect();
    let wanted: BTreeSet<&str> = KEYS.into_iter().collect();
    if found != wanted {
        let missing: Vec<_> = wanted.difference(&found).collect();
        let extra: Vec<_> = found.difference(&wanted).collect();
        return Err(fail(format!("keys mismatch: missing {missing:?}, unexpected {extra:?}")));
    }
    serde_json::from_value(raw).map_err(|e| fail(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(seq: u64, kind: CallKind) -> LlmCallRecord {
        LlmCallRecord {
            seq,
            kind,
            prompt: format!("prompt {seq}"),
            schema_id: (kind == CallKind::Parse).then(|| "ResearchArea".into()),
            response: "r".into(),
            model: "mock".into(),
            latency_ms: 1.5,
        }
    }

    #[test]
    fn line_has_exact_key_order() {
        let t = Trace::new(vec![rec(0, CallKind::Complete)]);
        assert_eq!(
            t.to_jsonl(),
            "{\"seq\":0,\"kind\":\"complete\",\"prompt\":\"prompt 0\",\"schema_id\":null,\
             \"response\":\"r\",\"model\":\"mock\",\"latency_ms\":1.5}\n"
        );
    }

    #[test]
    fn round_trip() {
        let t = Trace::new(vec![rec(0, CallKind::Parse), rec(1, CallKind::Complete)]);
        assert_eq!(Trace::from_jsonl(&t.to_jsonl()).unwrap(), t);
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let t = Trace::new(vec![rec(0, CallKind::Complete), rec(1, CallKind::Complete)]);
        let text = t.to_jsonl();
        let cut = &text[..text.len() - 10];
        match Trace::from_jsonl(cut) {
            Err(Error::TraceFormat { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_or_extra_keys_rejected() {
        let line = r#"{"seq":0,"kind":"complete","prompt":"p","response":"r","model":"m","latency_ms":1}"#;
        assert!(matches!(
            Trace::from_jsonl(line),
            Err(Error::TraceFormat { line: 1, .. })
        ));
        let line = r#"{"seq":0,"kind":"complete","prompt":"p","schema_id":null,"response":"r","model":"m","latency_ms":1,"x":2}"#;
        assert!(Trace::from_jsonl(line).is_err());
    }

    #[test]
    fn invariants_checked() {
        let gap = Trace::new(vec![rec(0, CallKind::Complete), rec(2, CallKind::Complete)]);
        assert!(gap.validate().is_err());
        let mut bad = rec(0, CallKind::Parse);
        bad.schema_id = None;
        assert!(Trace::new(vec![bad]).validate().is_err());
    }
}
