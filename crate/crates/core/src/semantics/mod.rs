//! Relaxed split-deque semantics: recorded histories, the exhaustive
//! checker, and a stepped interleaving model that produces histories.

pub mod checker;
pub mod history;
pub mod interleave;

pub use checker::{check_relaxed, check_relaxed_with_bound, is_good, segments, Verdict, SEARCH_BOUND};
pub use history::{History, HistoryEvent, Method, Outcome, Recorder};
