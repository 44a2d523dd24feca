//! Deterministic discrete-time simulation of either scheduler.
//!
//! Every step, each processor runs one scheduling iteration, in id order.
//! State changes take effect immediately, so a thief with a higher id sees
//! what lower-id processors did earlier in the same step. Processor 0 holds
//! the root at step 0. The run ends as soon as the last node executes.
//!
//! Processor `i` draws victims from a ChaCha8 stream seeded with
//! [`stream_seed`]`(master_seed, i)`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cws::{cws_scheduler_iteration, ConcurrentDeque, CwsContext, CwsCostModel};
use crate::dag::{CompDag, DagKind, DagSpec, NodeId};
use crate::scheduler::{
    random_victim, scheduler_iteration, Enabled, IterationKind, IterationOutcome, LcwsContext,
    ProcessorState, ReadyTracker, Slot, StealOutcome,
};
use crate::semantics::history::{History, HistoryEvent, Method, Outcome};
use crate::split_deque::{BottomResult, PopResult, SplitDeque, SyncEvents, TopResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchedulerKind {
    Lcws,
    Cws,
}

impl SchedulerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Lcws => "lcws",
            SchedulerKind::Cws => "cws",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lcws" => Ok(SchedulerKind::Lcws),
            "cws" => Ok(SchedulerKind::Cws),
            _ => Err(format!("unknown scheduler `{s}` (expected lcws or cws)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceLevel {
    #[default]
    None,
    /// Per-step counters only.
    Counters,
    /// Counters, per-step state snapshots, iteration records and deque
    /// invocations. Memory grows with steps times processors.
    Full,
}

impl FromStr for TraceLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(TraceLevel::None),
            "counters" => Ok(TraceLevel::Counters),
            "full" => Ok(TraceLevel::Full),
            _ => Err(format!("unknown trace level `{s}` (expected none, counters or full)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimConfig<'a> {
    pub dag: &'a CompDag,
    pub processors: usize,
    pub scheduler: SchedulerKind,
    pub master_seed: u64,
    pub trace_level: TraceLevel,
    /// Defaults to `10 * (t1 + P * t_inf)`.
    pub step_budget: Option<u64>,
    pub cws_costs: CwsCostModel,
}

impl<'a> SimConfig<'a> {
    pub fn new(dag: &'a CompDag, processors: usize, scheduler: SchedulerKind, master_seed: u64) -> Self {
        SimConfig {
            dag,
            processors,
            scheduler,
            master_seed,
            trace_level: TraceLevel::None,
            step_budget: None,
            cws_costs: CwsCostModel::default(),
        }
    }

    pub fn with_trace(mut self, level: TraceLevel) -> Self {
        self.trace_level = level;
        self
    }

    pub fn budget(&self) -> u64 {
        self.step_budget.unwrap_or_else(|| {
            10 * (self.dag.t1() + self.processors as u64 * self.dag.t_inf())
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SimMetrics {
    pub steps: u64,
    pub busy_iterations: u64,
    pub idle_iterations: u64,
    pub cas: u64,
    pub mfence: u64,
    pub notifications: u64,
    pub steals_success: u64,
    pub steals_abort: u64,
    pub steals_empty: u64,
    /// Iterations that entered the `update_bottom` branch.
    pub exposures: u64,
}

impl SimMetrics {
    /// `cas + mfence + notifications`.
    pub fn total_sync(&self) -> u64 {
        self.cas + self.mfence + self.notifications
    }

    fn absorb<N>(&mut self, o: &IterationOutcome<N>) {
        match o.kind {
            IterationKind::Busy => self.busy_iterations += 1,
            IterationKind::Idle => self.idle_iterations += 1,
        }
        self.cas += o.sync.cas_attempts;
        self.mfence += o.sync.fences;
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

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SimError {
    #[error("at least one processor is required")]
    NoProcessors,
    #[error("the dag has no nodes")]
    EmptyDag,
    #[error("step budget of {budget} exhausted with {executed} of {t1} nodes executed")]
    StepBudget { budget: u64, executed: u64, t1: u64 },
}

/// Counters for one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepCounters {
    pub busy: u32,
    pub idle: u32,
    pub sync: SyncEvents,
    pub notifications: u32,
}

/// One processor's state at a step boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcSnapshot {
    pub assigned: Option<NodeId>,
    /// Deque contents, bottom first.
    pub deque: Vec<NodeId>,
    /// How many of the topmost deque nodes are public.
    pub public_len: usize,
}

impl ProcSnapshot {
    /// The public (stealable) nodes, bottom first.
    pub fn public(&self) -> &[NodeId] {
        &self.deque[self.deque.len() - self.public_len..]
    }

    pub fn private(&self) -> &[NodeId] {
        &self.deque[..self.deque.len() - self.public_len]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationRecord {
    pub worker: usize,
    pub outcome: IterationOutcome<NodeId>,
}

/// One deque invocation, as the instrumentation sink sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DequeOp {
    pub step: u64,
    pub worker: usize,
    /// Owner of the deque operated on.
    pub deque: usize,
    pub method: Method,
    pub arg: Option<NodeId>,
    pub result: Outcome,
    pub sync: SyncEvents,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub level: TraceLevel,
    pub processors: usize,
    pub t_inf: u64,
    /// `w(u) = t_inf - d(u)` per node, from the enabling tree (full only).
    pub weights: Vec<u32>,
    /// One entry per step.
    pub counters: Vec<StepCounters>,
    /// `steps + 1` boundaries; entry `s` is the state before step `s` (full).
    pub snapshots: Vec<Vec<ProcSnapshot>>,
    /// Iterations of each step, in execution order (full).
    pub iterations: Vec<Vec<IterationRecord>>,
    /// Deque invocations in execution order (full).
    pub ops: Vec<DequeOp>,
}

impl Trace {
    pub fn steps(&self) -> usize {
        self.counters.len()
    }

    /// Invocation history of processor `owner`'s deque. Invocation `k` of
    /// the run gets the timestamps `2k` and `2k + 1`.
    pub fn deque_history(&self, owner: usize) -> History {
        let events = self
            .ops
            .iter()
            .enumerate()
            .filter(|(_, op)| op.deque == owner)
            .map(|(k, op)| HistoryEvent {
                worker: op.worker as u32,
                method: op.method,
                arg: op.arg.map(|n| n.0 as u64),
                result: op.result,
                invoke_ts: 2 * k as u64,
                response_ts: 2 * k as u64 + 1,
            })
            .collect();
        History { events }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimOutput {
    pub metrics: SimMetrics,
    pub trace: Option<Trace>,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of processor `id`'s victim stream.
pub fn stream_seed(master: u64, id: usize) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(id as u64 ^ 0xA076_1D64_78BD_642F))
}

/// Read access to a simulated deque for snapshots.
trait SnapshotDeque {
    fn snapshot(&self) -> (Vec<NodeId>, usize);
}

impl SnapshotDeque for SplitDeque<NodeId> {
    fn snapshot(&self) -> (Vec<NodeId>, usize) {
        let mut v: Vec<NodeId> = self.public_slice().to_vec();
        v.extend_from_slice(self.private_slice());
        v.reverse();
        (v, self.public_len())
    }
}

impl SnapshotDeque for ConcurrentDeque<NodeId> {
    fn snapshot(&self) -> (Vec<NodeId>, usize) {
        let mut v = self.as_slice().to_vec();
        v.reverse();
        let n = v.len();
        (v, n)
    }
}

struct Step<'a, D> {
    procs: &'a mut [ProcessorState<D>],
    me: usize,
    dag: &'a CompDag,
    tracker: &'a mut ReadyTracker,
    ops: Option<&'a mut Vec<DequeOp>>,
    step: u64,
    costs: CwsCostModel,
}

impl<D> Step<'_, D> {
    fn log(&mut self, deque: usize, method: Method, arg: Option<NodeId>, result: Outcome, sync: SyncEvents) {
        if let Some(ops) = self.ops.as_deref_mut() {
            ops.push(DequeOp {
                step: self.step,
                worker: self.me,
                deque,
                method,
                arg,
                result,
                sync,
            });
        }
    }

    fn victim(&mut self) -> Option<usize> {
        let p = self.procs.len();
        random_victim(&mut self.procs[self.me].rng, self.me, p)
    }
}

fn top_outcome(r: TopResult<NodeId>) -> Outcome {
    match r {
        TopResult::Node(n) => Outcome::Node(n.0 as u64),
        TopResult::Empty => Outcome::Empty,
        TopResult::Abort => Outcome::Abort,
    }
}

fn bottom_outcome(r: BottomResult<NodeId>) -> Outcome {
    match r {
        BottomResult::Node(n) => Outcome::Node(n.0 as u64),
        BottomResult::Empty => Outcome::Empty,
    }
}

impl LcwsContext for Step<'_, SplitDeque<NodeId>> {
    type Node = NodeId;

    fn targeted(&self) -> bool {
        self.procs[self.me].targeted
    }
    fn clear_targeted(&mut self) {
        self.procs[self.me].targeted = false;
    }
    fn assigned(&self) -> Slot<NodeId> {
        self.procs[self.me].assigned
    }
    fn set_assigned(&mut self, slot: Slot<NodeId>) {
        self.procs[self.me].assigned = slot;
    }
    fn execute(&mut self, node: NodeId) -> Enabled<NodeId> {
        self.tracker.execute_node(self.dag, node)
    }
    fn push(&mut self, node: NodeId) -> SyncEvents {
        let s = self.procs[self.me].deque.push(node);
        self.log(self.me, Method::Push, Some(node), Outcome::Unit, s);
        s
    }
    fn pop(&mut self) -> (PopResult<NodeId>, SyncEvents) {
        let (r, s) = self.procs[self.me].deque.pop();
        let o = match r {
            PopResult::Node(n) => Outcome::Node(n.0 as u64),
            PopResult::Race => Outcome::Race,
        };
        self.log(self.me, Method::Pop, None, o, s);
        (r, s)
    }
    fn update_bottom(&mut self) -> SyncEvents {
        let s = self.procs[self.me].deque.update_bottom();
        self.log(self.me, Method::UpdateBottom, None, Outcome::Unit, s);
        s
    }
    fn pop_bottom(&mut self) -> (BottomResult<NodeId>, SyncEvents) {
        let (r, s) = self.procs[self.me].deque.pop_bottom();
        self.log(self.me, Method::PopBottom, None, bottom_outcome(r), s);
        (r, s)
    }
    fn choose_victim(&mut self) -> Option<usize> {
        self.victim()
    }
    fn pop_top(&mut self, victim: usize) -> (TopResult<NodeId>, SyncEvents) {
        let (r, s) = self.procs[victim].deque.pop_top();
        self.log(victim, Method::PopTop, None, top_outcome(r), s);
        (r, s)
    }
    fn notify(&mut self, victim: usize) {
        self.procs[victim].targeted = true;
    }
}

impl CwsContext for Step<'_, ConcurrentDeque<NodeId>> {
    type Node = NodeId;

    fn assigned(&self) -> Slot<NodeId> {
        self.procs[self.me].assigned
    }
    fn set_assigned(&mut self, slot: Slot<NodeId>) {
        self.procs[self.me].assigned = slot;
    }
    fn execute(&mut self, node: NodeId) -> Enabled<NodeId> {
        self.tracker.execute_node(self.dag, node)
    }
    fn push_bottom(&mut self, node: NodeId) -> SyncEvents {
        let s = self.costs.charge(self.procs[self.me].deque.push_bottom(node));
        self.log(self.me, Method::Push, Some(node), Outcome::Unit, s);
        s
    }
    fn pop_bottom(&mut self) -> (BottomResult<NodeId>, SyncEvents) {
        let (r, path) = self.procs[self.me].deque.pop_bottom();
        let s = self.costs.charge(path);
        self.log(self.me, Method::PopBottom, None, bottom_outcome(r), s);
        (r, s)
    }
    fn choose_victim(&mut self) -> Option<usize> {
        self.victim()
    }
    fn pop_top(&mut self, victim: usize) -> (TopResult<NodeId>, SyncEvents) {
        let (r, path) = self.procs[victim].deque.pop_top();
        let s = self.costs.charge(path);
        self.log(victim, Method::PopTop, None, top_outcome(r), s);
        (r, s)
    }
}

/// Runs one simulation.
pub fn run(cfg: &SimConfig<'_>) -> Result<SimOutput, SimError> {
    match cfg.scheduler {
        SchedulerKind::Lcws => drive(cfg, SplitDeque::new, |st| scheduler_iteration(st)),
        SchedulerKind::Cws => drive(cfg, ConcurrentDeque::new, |st| cws_scheduler_iteration(st)),
    }
}

fn drive<'d, D, F>(
    cfg: &SimConfig<'d>,
    new_deque: fn() -> D,
    mut iterate: F,
) -> Result<SimOutput, SimError>
where
    D: SnapshotDeque,
    F: for<'x> FnMut(&mut Step<'x, D>) -> IterationOutcome<NodeId>,
{
    let dag = cfg.dag;
    let p = cfg.processors;
    if p == 0 {
        return Err(SimError::NoProcessors);
    }
    if dag.is_empty() {
        return Err(SimError::EmptyDag);
    }
    let full = cfg.trace_level == TraceLevel::Full;
    let counters = cfg.trace_level != TraceLevel::None;
    let mut procs: Vec<ProcessorState<D>> = (0..p)
        .map(|id| ProcessorState {
            id,
            deque: new_deque(),
            assigned: Slot::None,
            targeted: false,
            rng: ChaCha8Rng::seed_from_u64(stream_seed(cfg.master_seed, id)),
        })
        .collect();
    procs[0].assigned = Slot::Node(dag.root());
    let mut tracker = ReadyTracker::new(dag, full);
    let mut metrics = SimMetrics::default();
    let mut trace = Trace {
        level: cfg.trace_level,
        processors: p,
        t_inf: dag.t_inf(),
        weights: vec![],
        counters: vec![],
        snapshots: vec![],
        iterations: vec![],
        ops: vec![],
    };
    if full {
        trace.snapshots.push(snapshot(&procs));
    }
    let t1 = dag.t1();
    let budget = cfg.budget();
    let mut step = 0u64;
    while tracker.executed_count() < t1 {
        if step >= budget {
            return Err(SimError::StepBudget {
                budget,
                executed: tracker.executed_count(),
                t1,
            });
        }
        let mut sc = StepCounters::default();
        let mut records = Vec::new();
        for me in 0..p {
            let mut st = Step {
                procs: &mut procs,
                me,
                dag,
                tracker: &mut tracker,
                ops: full.then_some(&mut trace.ops),
                step,
                costs: cfg.cws_costs,
            };
            let out = iterate(&mut st);
            metrics.absorb(&out);
            if counters {
                match out.kind {
                    IterationKind::Busy => sc.busy += 1,
                    IterationKind::Idle => sc.idle += 1,
                }
                sc.sync += out.sync;
                sc.notifications += u32::from(out.notified_victim.is_some());
            }
            if full {
                records.push(IterationRecord {
                    worker: me,
                    outcome: out,
                });
            }
            if tracker.executed_count() == t1 {
                break;
            }
        }
        step += 1;
        if counters {
            trace.counters.push(sc);
        }
        if full {
            trace.iterations.push(records);
            trace.snapshots.push(snapshot(&procs));
        }
    }
    metrics.steps = step;
    if full {
        trace.weights = dag
            .nodes()
            .map(|u| {
                tracker
                    .weight(u, dag.t_inf())
                    .expect("every node is enabled by termination") as u32
            })
            .collect();
    }
    Ok(SimOutput {
        metrics,
        trace: counters.then_some(trace),
    })
}

fn snapshot<D: SnapshotDeque>(procs: &[ProcessorState<D>]) -> Vec<ProcSnapshot> {
    procs
        .iter()
        .map(|pr| {
            let (deque, public_len) = pr.deque.snapshot();
            ProcSnapshot {
                assigned: pr.assigned.node(),
                deque,
                public_len,
            }
        })
        .collect()
}

/// The CSV header.
pub const CSV_HEADER: &str = "scheduler,kind,depth,lambda,procs,seed,t1,t_inf,steps,busy,idle,cas,mfence,notifications,steals_success,steals_abort,steals_empty";

/// One CSV row: a configuration and its metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub scheduler: SchedulerKind,
    pub kind: DagKind,
    pub depth: u32,
    /// Irregular dags only; the CSV field is empty otherwise.
    pub lambda: Option<f64>,
    pub procs: usize,
    pub seed: u64,
    pub t1: u64,
    pub t_inf: u64,
    pub metrics: SimMetrics,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let m = &self.metrics;
        let lambda = self.lambda.map(|l| l.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scheduler,
            self.kind,
            self.depth,
            lambda,
            self.procs,
            self.seed,
            self.t1,
            self.t_inf,
            m.steps,
            m.busy_iterations,
            m.idle_iterations,
            m.cas,
            m.mfence,
            m.notifications,
            m.steals_success,
            m.steals_abort,
            m.steals_empty
        )
    }
}

/// A grid of simulations.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub kind: DagKind,
    pub depths: Vec<u32>,
    pub lambda: f64,
    pub procs: Vec<usize>,
    pub schedulers: Vec<SchedulerKind>,
    /// Each seed drives both the simulation and, for irregular dags, the
    /// generator.
    pub seeds: Vec<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Dag(#[from] crate::dag::DagError),
    #[error("{scheduler} depth {depth} P={procs} seed {seed}: {source}")]
    Run {
        scheduler: SchedulerKind,
        depth: u32,
        procs: usize,
        seed: u64,
        source: SimError,
    },
}

impl SweepSpec {
    pub fn len(&self) -> usize {
        self.depths.len() * self.procs.len() * self.schedulers.len() * self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs every configuration of `spec`, ordered by depth, processor count,
/// scheduler and seed. `on_row` sees each row as soon as it is ready.
pub fn sweep_with(spec: &SweepSpec, mut on_row: impl FnMut(&SweepRow)) -> Result<Vec<SweepRow>, SweepError> {
    let mut rows = Vec::with_capacity(spec.len());
    for &depth in &spec.depths {
        let regular = match spec.kind {
            DagKind::Regular => Some(DagSpec::regular(depth).build()?),
            DagKind::Irregular => None,
        };
        let irregular: Vec<CompDag> = match spec.kind {
            DagKind::Regular => vec![],
            DagKind::Irregular => spec
                .seeds
                .iter()
                .map(|&s| DagSpec::irregular(depth, spec.lambda, s).build())
                .collect::<Result<_, _>>()?,
        };
        for &procs in &spec.procs {
            for &scheduler in &spec.schedulers {
                for (i, &seed) in spec.seeds.iter().enumerate() {
                    let dag = regular.as_ref().unwrap_or_else(|| &irregular[i]);
                    let out = run(&SimConfig::new(dag, procs, scheduler, seed)).map_err(|source| {
                        SweepError::Run {
                            scheduler,
                            depth,
                            procs,
                            seed,
                            source,
                        }
                    })?;
                    let row = SweepRow {
                        scheduler,
                        kind: spec.kind,
                        depth,
                        lambda: (spec.kind == DagKind::Irregular).then_some(spec.lambda),
                        procs,
                        seed,
                        t1: dag.t1(),
                        t_inf: dag.t_inf(),
                        metrics: out.metrics,
                    };
                    on_row(&row);
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, SweepError> {
    sweep_with(spec, |_| {})
}

/// Seed-averaged metrics of one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanRow {
    pub scheduler: SchedulerKind,
    pub kind: DagKind,
    pub depth: u32,
    pub procs: usize,
    pub runs: usize,
    pub idle_iterations: f64,
    pub steps: f64,
    pub total_sync: f64,
}

/// Averages rows that differ only in seed, keeping first-appearance order.
pub fn mean_rows(rows: &[SweepRow]) -> Vec<MeanRow> {
    let mut out: Vec<MeanRow> = Vec::new();
    for r in rows {
        let key = |m: &MeanRow| {
            m.scheduler == r.scheduler && m.kind == r.kind && m.depth == r.depth && m.procs == r.procs
        };
        let m = match out.iter_mut().position(|m| key(m)) {
            Some(i) => &mut out[i],
            None => {
                out.push(MeanRow {
                    scheduler: r.scheduler,
                    kind: r.kind,
                    depth: r.depth,
                    procs: r.procs,
                    runs: 0,
                    idle_iterations: 0.0,
                    steps: 0.0,
                    total_sync: 0.0,
                });
                out.last_mut().expect("just pushed")
            }
        };
        m.runs += 1;
        m.idle_iterations += r.metrics.idle_iterations as f64;
        m.steps += r.metrics.steps as f64;
        m.total_sync += r.metrics.total_sync() as f64;
    }
    for m in &mut out {
        let n = m.runs as f64;
        m.idle_iterations /= n;
        m.steps /= n;
        m.total_sync /= n;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::generate_regular;

    fn sim(dag: &CompDag, p: usize, s: SchedulerKind, seed: u64) -> SimMetrics {
        run(&SimConfig::new(dag, p, s, seed)).unwrap().metrics
    }

    #[test]
    fn lcws_single_processor_depth_two() {
        let dag = generate_regular(2).unwrap();
        let m = sim(&dag, 1, SchedulerKind::Lcws, 0);
        assert_eq!(m.busy_iterations, 7);
        assert_eq!(m.notifications, 0);
        assert!(m.cas + m.mfence <= 2, "{m:?}");
        assert_eq!(m.steps, 7);
    }

    #[test]
    fn cws_single_processor_depth_two_hand_count() {
        // 3 pushes, 4 leaf popBottoms; the deque holds one node when the
        // two leftmost pending siblings come off, plus the final race.
        let dag = generate_regular(2).unwrap();
        let m = sim(&dag, 1, SchedulerKind::Cws, 0);
        assert_eq!(m.mfence, 7);
        assert_eq!(m.cas, 2);
    }

    #[test]
    fn counters_are_consistent() {
        let dag = generate_regular(9).unwrap();
        for s in [SchedulerKind::Lcws, SchedulerKind::Cws] {
            let m = sim(&dag, 6, s, 4);
            assert_eq!(m.busy_iterations, dag.t1());
            assert_eq!(m.steals_success + m.steals_abort + m.steals_empty, m.idle_iterations);
            assert_eq!(m.steals_abort, 0);
            if s == SchedulerKind::Lcws {
                assert_eq!(m.notifications, m.steals_empty);
                assert!(m.exposures <= m.notifications);
            } else {
                assert_eq!(m.notifications, 0);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let dag = generate_regular(10).unwrap();
        let a = run(&SimConfig::new(&dag, 8, SchedulerKind::Lcws, 3).with_trace(TraceLevel::Full)).unwrap();
        let b = run(&SimConfig::new(&dag, 8, SchedulerKind::Lcws, 3).with_trace(TraceLevel::Full)).unwrap();
        assert_eq!(a, b);
        let c = sim(&dag, 8, SchedulerKind::Lcws, 4);
        assert_ne!(a.metrics, c);
    }

    #[test]
    fn budget_guard_fires() {
        let dag = generate_regular(6).unwrap();
        let mut cfg = SimConfig::new(&dag, 2, SchedulerKind::Lcws, 0);
        cfg.step_budget = Some(3);
        assert!(matches!(run(&cfg), Err(SimError::StepBudget { budget: 3, .. })));
    }

    #[test]
    fn full_trace_shape() {
        let dag = generate_regular(5).unwrap();
        let out = run(&SimConfig::new(&dag, 3, SchedulerKind::Lcws, 1).with_trace(TraceLevel::Full)).unwrap();
        let t = out.trace.unwrap();
        assert_eq!(t.steps() as u64, out.metrics.steps);
        assert_eq!(t.snapshots.len(), t.steps() + 1);
        assert_eq!(t.snapshots[0][0].assigned, Some(dag.root()));
        assert!(t.snapshots.last().unwrap().iter().all(|s| s.assigned.is_none() && s.deque.is_empty()));
        assert_eq!(t.weights[0] as u64, dag.t_inf());
        let busy: u32 = t.counters.iter().map(|c| c.busy).sum();
        assert_eq!(busy as u64, dag.t1());
    }

    #[test]
    fn simulator_histories_are_valid() {
        use crate::semantics::check_relaxed;
        let dag = generate_regular(4).unwrap();
        let out = run(&SimConfig::new(&dag, 3, SchedulerKind::Lcws, 2).with_trace(TraceLevel::Full)).unwrap();
        let t = out.trace.unwrap();
        for p in 0..3 {
            let h = t.deque_history(p);
            assert!(check_relaxed(&h).is_valid(), "{}", h.to_text());
        }
    }

    #[test]
    fn csv_row_format() {
        let row = SweepRow {
            scheduler: SchedulerKind::Lcws,
            kind: DagKind::Regular,
            depth: 3,
            lambda: None,
            procs: 2,
            seed: 9,
            t1: 15,
            t_inf: 4,
            metrics: SimMetrics {
                steps: 10,
                busy_iterations: 15,
                idle_iterations: 5,
                cas: 1,
                mfence: 2,
                notifications: 3,
                steals_success: 1,
                steals_abort: 0,
                steals_empty: 4,
                exposures: 3,
            },
        };
        assert_eq!(row.to_csv(), "lcws,regular,3,,2,9,15,4,10,15,5,1,2,3,1,0,4");
        assert_eq!(CSV_HEADER.split(',').count(), row.to_csv().split(',').count());
        let irr = SweepRow {
            kind: DagKind::Irregular,
            lambda: Some(0.05),
            ..row
        };
        assert!(irr.to_csv().starts_with("lcws,irregular,3,0.05,2,"));
    }

    #[test]
    fn sweep_rows_and_means() {
        let spec = SweepSpec {
            kind: DagKind::Regular,
            depths: vec![0, 3],
            lambda: 0.05,
            procs: vec![2],
            schedulers: vec![SchedulerKind::Lcws, SchedulerKind::Cws],
            seeds: vec![1, 2, 3],
        };
        let rows = sweep(&spec).unwrap();
        assert_eq!(rows.len(), 12);
        let means = mean_rows(&rows);
        assert_eq!(means.len(), 4);
        assert!(means.iter().all(|m| m.runs == 3));
    }

    #[test]
    fn stream_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..64).map(|i| stream_seed(42, i)).collect();
        assert_eq!(s.len(), 64);
        assert_ne!(stream_seed(1, 0), stream_seed(2, 0));
    }
}
