//! Real-thread execution of the low-cost work-stealing scheduler.
//!
//! [`execute_dag_parallel`] runs a [`CompDag`] on `P` OS threads with the
//! lock-free split deque and the same [`scheduler_iteration`] the simulator
//! uses. [`forkjoin`] offers a small `join`-based API over the same deque,
//! and [`episodes`] records invocation histories from real threads.
//!
//! Shared state between workers is limited to steal surfaces (`pop_top`),
//! `targeted` flags, per-node join counters for nodes with two parents, and
//! per-worker executed counters used for termination.

pub mod episodes;
pub mod forkjoin;

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dag::{CompDag, NodeId};
use crate::scheduler::{
    random_victim, scheduler_iteration, Enabled, IterationKind, IterationOutcome, LcwsContext, Slot,
    StealOutcome,
};
use crate::sim::{splitmix64, stream_seed};
use crate::split_deque::atomic::{split_deque, Owner, Stealer};
use crate::split_deque::{BottomResult, PopResult, SyncEvents, TopResult};

/// Keeps a value on its own cache line.
#[derive(Debug, Default)]
#[repr(align(128))]
pub(crate) struct Padded<T>(pub T);

/// How idle workers wait.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Idle workers back off (bounded exponential spinning, then yielding)
    /// after repeated empty steal attempts.
    #[default]
    Library,
    /// Steal attempts run back to back, as the analysis assumes.
    Measurement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutorConfig {
    pub workers: usize,
    pub mode: Mode,
    /// Per-worker deque capacity; `None` sizes it from the dag.
    pub deque_capacity: Option<usize>,
    /// Livelock guard.
    pub watchdog: Duration,
    pub seed: u64,
}

impl ExecutorConfig {
    pub fn new(workers: usize) -> Self {
        ExecutorConfig {
            workers,
            mode: Mode::Library,
            deque_capacity: None,
            watchdog: Duration::from_secs(120),
            seed: 0,
        }
    }
}

/// Counters of one worker.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerReport {
    pub sync: SyncEvents,
    pub busy: u64,
    pub idle: u64,
    pub notifications: u64,
    pub exposures: u64,
    pub steals_success: u64,
    pub steals_abort: u64,
    pub steals_empty: u64,
    /// Atomic decrements on join counters; runtime cost, not scheduler cost.
    pub join_updates: u64,
}

impl WorkerReport {
    fn absorb<N>(&mut self, o: &IterationOutcome<N>) {
        match o.kind {
            IterationKind::Busy => self.busy += 1,
            IterationKind::Idle => self.idle += 1,
        }
        self.sync += o.sync;
        self.notifications += u64::from(o.notified_victim.is_some());
        self.exposures += u64::from(o.exposed);
        if let Some(s) = o.steal {
            match s.outcome {
                StealOutcome::Success => self.steals_success += 1,
                StealOutcome::Abort => self.steals_abort += 1,
                StealOutcome::Empty => self.steals_empty += 1,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionReport {
    pub wall_time: Duration,
    pub per_worker: Vec<WorkerReport>,
    pub notifications: u64,
    pub nodes_executed: u64,
    /// Wrapping sum of `splitmix64(id)` over executed nodes.
    pub checksum: u64,
}

impl ExecutionReport {
    pub fn sync_totals(&self) -> SyncEvents {
        self.per_worker.iter().fold(SyncEvents::NONE, |a, w| a + w.sync)
    }
}

/// The checksum of executing every node of `dag` once.
pub fn expected_checksum(dag: &CompDag) -> u64 {
    dag.nodes().fold(0u64, |a, u| a.wrapping_add(splitmix64(u.0 as u64)))
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("at least one worker is required")]
    NoWorkers,
    #[error("the dag has no nodes")]
    EmptyDag,
    #[error("watchdog fired after {0:?} with {1} nodes executed")]
    Watchdog(Duration, u64),
}

struct Shared<'a> {
    dag: &'a CompDag,
    stealers: Vec<Stealer<NodeId>>,
    targeted: Vec<Padded<AtomicBool>>,
    executed: Vec<Padded<AtomicU64>>,
    /// Remaining parents per node; empty for trees.
    joins: Vec<AtomicU32>,
    /// Claim bits guarding exactly-once execution (debug builds).
    claims: Vec<AtomicU64>,
    abort: AtomicBool,
}

impl Shared<'_> {
    fn executed_total(&self) -> u64 {
        self.executed.iter().map(|c| c.0.load(Ordering::Relaxed)).sum()
    }
}

struct Worker<'s, 'd> {
    shared: &'s Shared<'d>,
    me: usize,
    owner: Owner<NodeId>,
    assigned: Slot<NodeId>,
    rng: ChaCha8Rng,
    report: WorkerReport,
    executed: u64,
    checksum: u64,
}

impl LcwsContext for Worker<'_, '_> {
    type Node = NodeId;

    fn targeted(&self) -> bool {
        self.shared.targeted[self.me].0.load(Ordering::Relaxed)
    }
    fn clear_targeted(&mut self) {
        self.shared.targeted[self.me].0.store(false, Ordering::Relaxed);
    }
    fn assigned(&self) -> Slot<NodeId> {
        self.assigned
    }
    fn set_assigned(&mut self, slot: Slot<NodeId>) {
        self.assigned = slot;
    }

    fn execute(&mut self, u: NodeId) -> Enabled<NodeId> {
        let sh = self.shared;
        if !sh.claims.is_empty() {
            let bit = 1u64 << (u.index() % 64);
            let prev = sh.claims[u.index() / 64].fetch_or(bit, Ordering::Relaxed);
            assert!(prev & bit == 0, "node {u} executed twice");
        }
        self.checksum = self.checksum.wrapping_add(splitmix64(u.0 as u64));
        self.executed += 1;
        sh.executed[self.me].0.store(self.executed, Ordering::Relaxed);
        let mut out = Enabled::Zero;
        for c in sh.dag.children(u) {
            let ready = if sh.joins.is_empty() || sh.dag.in_degree(c) <= 1 {
                true
            } else {
                self.report.join_updates += 1;
                sh.joins[c.index()].fetch_sub(1, Ordering::AcqRel) == 1
            };
            if ready {
                out = match out {
                    Enabled::Zero => Enabled::One(c),
                    Enabled::One(a) => Enabled::Two(a, c),
                    Enabled::Two(..) => unreachable!("out-degree is at most two"),
                };
            }
        }
        out
    }

    fn push(&mut self, node: NodeId) -> SyncEvents {
        self.owner.push(node)
    }
    fn pop(&mut self) -> (PopResult<NodeId>, SyncEvents) {
        self.owner.pop()
    }
    fn update_bottom(&mut self) -> SyncEvents {
        self.owner.update_bottom()
    }
    fn pop_bottom(&mut self) -> (BottomResult<NodeId>, SyncEvents) {
        self.owner.pop_bottom()
    }
    fn choose_victim(&mut self) -> Option<usize> {
        random_victim(&mut self.rng, self.me, self.shared.stealers.len())
    }
    fn pop_top(&mut self, victim: usize) -> (TopResult<NodeId>, SyncEvents) {
        self.shared.stealers[victim].pop_top()
    }
    fn notify(&mut self, victim: usize) {
        self.shared.targeted[victim].0.store(true, Ordering::Relaxed);
    }
}

/// Bounded exponential backoff for idle loops.
pub(crate) struct Backoff {
    step: u32,
    enabled: bool,
}

impl Backoff {
    pub(crate) fn new(mode: Mode) -> Self {
        Backoff {
            step: 0,
            enabled: mode == Mode::Library,
        }
    }

    pub(crate) fn reset(&mut self) {
        self.step = 0;
    }

    pub(crate) fn snooze(&mut self) {
        if !self.enabled {
            return;
        }
        if self.step <= 6 {
            for _ in 0..1u32 << self.step {
                std::hint::spin_loop();
            }
            self.step += 1;
        } else {
            std::thread::yield_now();
        }
    }
}

/// Runs `dag` on `workers` threads with default settings.
pub fn execute_dag_parallel(dag: &CompDag, workers: usize) -> Result<ExecutionReport, ExecError> {
    execute_dag(dag, &ExecutorConfig::new(workers))
}

pub fn execute_dag(dag: &CompDag, cfg: &ExecutorConfig) -> Result<ExecutionReport, ExecError> {
    let p = cfg.workers;
    if p == 0 {
        return Err(ExecError::NoWorkers);
    }
    if dag.is_empty() {
        return Err(ExecError::EmptyDag);
    }
    let t1 = dag.t1();
    // Pushes bound the index range between resets, and t1 bounds pushes.
    let capacity = cfg
        .deque_capacity
        .unwrap_or_else(|| (t1 as usize).min(1 << 21) + 64);
    let (owners, stealers): (Vec<_>, Vec<_>) = (0..p).map(|_| split_deque::<NodeId>(capacity)).unzip();
    let joins = if dag.max_in_degree() > 1 {
        dag.nodes().map(|u| AtomicU32::new(dag.in_degree(u))).collect()
    } else {
        Vec::new()
    };
    let claims = if cfg!(debug_assertions) {
        (0..dag.len().div_ceil(64)).map(|_| AtomicU64::new(0)).collect()
    } else {
        Vec::new()
    };
    let shared = Shared {
        dag,
        stealers,
        targeted: (0..p).map(|_| Padded(AtomicBool::new(false))).collect(),
        executed: (0..p).map(|_| Padded(AtomicU64::new(0))).collect(),
        joins,
        claims,
        abort: AtomicBool::new(false),
    };
    let start = Instant::now();
    let results: Vec<(WorkerReport, u64, u64)> = std::thread::scope(|sc| {
        let handles: Vec<_> = owners
            .into_iter()
            .enumerate()
            .map(|(me, owner)| {
                let shared = &shared;
                let mode = cfg.mode;
                let watchdog = cfg.watchdog;
                let seed = stream_seed(cfg.seed, me);
                sc.spawn(move || {
                    let mut w = Worker {
                        shared,
                        me,
                        owner,
                        assigned: if me == 0 { Slot::Node(dag.root()) } else { Slot::None },
                        rng: ChaCha8Rng::seed_from_u64(seed),
                        report: WorkerReport::default(),
                        executed: 0,
                        checksum: 0,
                    };
                    worker_loop(&mut w, t1, mode, start, watchdog);
                    (w.report, w.executed, w.checksum)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
            .collect()
    });
    let wall_time = start.elapsed();
    let nodes_executed = results.iter().map(|r| r.1).sum();
    if shared.abort.load(Ordering::Relaxed) {
        return Err(ExecError::Watchdog(wall_time, nodes_executed));
    }
    let per_worker: Vec<WorkerReport> = results.iter().map(|r| r.0).collect();
    Ok(ExecutionReport {
        wall_time,
        notifications: per_worker.iter().map(|w| w.notifications).sum(),
        per_worker,
        nodes_executed,
        checksum: results.iter().fold(0u64, |a, r| a.wrapping_add(r.2)),
    })
}

fn worker_loop(w: &mut Worker<'_, '_>, t1: u64, mode: Mode, start: Instant, watchdog: Duration) {
    let mut backoff = Backoff::new(mode);
    let mut idle_run = 0u64;
    loop {
        let out = scheduler_iteration(w);
        w.report.absorb(&out);
        if out.kind == IterationKind::Busy {
            idle_run = 0;
            backoff.reset();
            continue;
        }
        if w.shared.executed_total() >= t1 || w.shared.abort.load(Ordering::Relaxed) {
            return;
        }
        idle_run += 1;
        if idle_run.is_multiple_of(4096) && start.elapsed() > watchdog {
            w.shared.abort.store(true, Ordering::Relaxed);
            return;
        }
        match out.steal.map(|s| s.outcome) {
            Some(StealOutcome::Success) => backoff.reset(),
            _ => backoff.snooze(),
        }
    }
}
