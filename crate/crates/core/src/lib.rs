//! Low-cost work stealing: the split deque, the scheduler, a classical
//! work-stealing baseline, a deterministic simulator, potential-function
//! trace analysis, a relaxed-semantics history checker and a threaded
//! executor.
//!
//! Most users start from [`sim::run`] or [`executor::execute_dag_parallel`].

pub mod cws;
pub mod dag;
pub mod executor;
pub mod potential;
pub mod scheduler;
pub mod semantics;
pub mod sim;
pub mod split_deque;

pub use cws::{ConcurrentDeque, CwsCostModel};
pub use dag::{generate_irregular, generate_regular, CompDag, DagKind, DagSpec, NodeId};
pub use executor::{execute_dag_parallel, ExecutionReport};
pub use scheduler::{scheduler_iteration, IterationOutcome, ProcessorState, ReadyTracker, Slot};
pub use sim::{run, SchedulerKind, SimConfig, SimMetrics, TraceLevel};
pub use split_deque::{BottomResult, PopResult, SplitDeque, SyncEvents, TopResult};
