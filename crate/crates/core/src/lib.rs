//! Fetch pages, model them as DOM graphs, extract class-grouped content, and
//! write it out as CSV, with users, history and cost instrumentation alongside.
//!
//! The stages are independent modules: [`fetcher`] (HTTP plus consent gate),
//! [`dom`] (graph, traversal, filters), [`extractor`] (class → tag → contents and
//! refinement), [`structurer`] (CSV), [`metrics`] (cost models and survey stats)
//! and [`persistence`] (users, sessions, history). [`pipeline`] composes them.

pub mod clock;
pub mod dom;
pub mod extractor;
pub mod fetcher;
pub mod metrics;
pub mod persistence;
pub mod pipeline;
pub mod structurer;

pub use clock::{Clock, FixedClock, SystemClock};
pub use dom::{DomGraph, DomNode, NodeId};
pub use extractor::{ClassContents, ExtractOptions, RefinementMode, RefinementQuery};
pub use structurer::{render_bytes, to_csv, CsvDocument};
