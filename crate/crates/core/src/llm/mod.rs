//! Chat-completion plumbing and the LLM-assisted editing tasks.

pub mod config;
pub mod constraints;
pub mod mock;
pub mod prompts;
pub mod refine;
pub mod transport;

pub use config::GenerationConfig;
pub use constraints::{Length, RefinementConstraints, Style, Temperament};
pub use transport::{
    ChatTransport, HttpTransport, HttpTransportConfig, RetryPolicy, RetryingTransport, TransportError,
    TransportErrorKind,
};
