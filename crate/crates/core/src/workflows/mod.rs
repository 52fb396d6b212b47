//! Workflow programs written against abstract operations, and the handlers
//! that give those operations meaning.

pub mod game24;
mod game24_handler;
mod logging;
mod research;
mod tot;

use std::sync::LazyLock;

pub use game24::{brute_solve, check_answer, SolveState};
pub use game24_handler::{
    as_state, game24_mock_rule, label_value, parse_proposals, propose_prompt, solve_game24,
    state_value, validate_prompt, value_prompt, Game24Handler, Game24Outcome,
};
pub use logging::{log, LogDateHandler, LogHandler, LogSink};
pub use research::{
    description_prompt, fixture_description, get_description, get_topics, research_mock_rule,
    research_topics, topics_prompt, ResearchTopicsHandler, TopicReport, DEFAULT_AREA,
    FIXTURE_TOPICS,
};
pub use tot::{top_k, tree_of_thoughts, ScoredCandidate, TotParams};

use crate::effects::OperationId;

pub static LOG: LazyLock<OperationId> = LazyLock::new(|| OperationId::new("log"));
pub static GET_TOPICS: LazyLock<OperationId> = LazyLock::new(|| OperationId::new("get_topics"));
pub static GET_DESCRIPTION: LazyLock<OperationId> =
    LazyLock::new(|| OperationId::new("get_description"));
pub static INIT: LazyLock<OperationId> = LazyLock::new(|| OperationId::new("init"));
pub static EXPAND: LazyLock<OperationId> = LazyLock::new(|| OperationId::new("expand"));
pub static SCORE: LazyLock<OperationId> = LazyLock::new(|| OperationId::new("score"));
pub static VALIDATE: LazyLock<OperationId> = LazyLock::new(|| OperationId::new("validate"));
