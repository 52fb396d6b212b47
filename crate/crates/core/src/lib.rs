pub mod bench;
pub mod calculus;
pub mod effects;
pub mod error;
pub mod llm;
pub mod runtime;
pub mod value;
pub mod workflows;

pub use effects::{create_operation, Context, Handler, HandlerFrame, HandlerStack, OperationId, Scope};
pub use error::{Error, Result};
pub use value::{Args, Callback, Value};
