//! Filter-based top-k position monitoring over distributed streams.
//!
//! A coordinator tracks which `k` of `n` nodes currently observe the largest
//! values. Nodes hold filter intervals and only communicate when a value
//! leaves its filter, using a randomized extremum protocol whose message
//! count is logarithmic in expectation. The crate simulates the whole system
//! with exact message accounting and ships an offline oracle that lower
//! bounds the cost of any filter-based algorithm on the same trace.

pub mod domain;
pub mod error;
pub mod harness;
pub mod monitor;
pub mod oracle;
pub mod protocols;
pub mod streams;
pub mod trace;
pub mod transport;

pub use domain::{
    compute_top_k, extremes_update, midpoint, rank_compare, validate_filter_set, ExtValue,
    FilterInterval, FilterViolation, NodeId, RankKey, Validity, Value, WindowExtremes,
};
pub use error::{Error, Result};
pub use monitor::{CoordinatorState, Monitor, MonitorConfig, NodeView, StepReport};
pub use protocols::{lemma3_bound, run_extremum, Mode, ProtocolConfig, ProtocolOutcome, RandomSource};
pub use streams::{generate, load_csv, save_csv, Family, GeneratorParams, GeneratorSpec};
pub use trace::{Snapshot, Trace};
pub use transport::{EventLogEntry, Fabric, MessageKind, MessageTally};
