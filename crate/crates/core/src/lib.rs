//! Soft-labeled latent-context prediction with block attention for
//! extractive question answering.
//!
//! The crate holds the algorithms; the `blanc` binary and the benchmarks
//! build on the types re-exported here.

pub mod block_attention;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod soft_label;

pub use block_attention::{ContextDistributions, ContextHeadParams, MultiSpanSpec};
pub use data::{Answer, QAExample, SynthConfig};
pub use error::{BlancError, Result};
pub use metrics::{MetricsReport, SpanPair, SupportingFactExample};
pub use numerics::{Parameter, SeededRng, Tensor};
pub use soft_label::{generate_soft_labels, AnswerSpan, SoftLabelConfig, SoftLabelVector};
