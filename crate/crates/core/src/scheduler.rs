//! Low-cost work stealing: the per-processor scheduling iteration.
//!
//! [`scheduler_iteration`] is written once against [`LcwsContext`]; the
//! simulator and the threaded executor each provide a context. One call is
//! one pass of the scheduling loop:
//!
//! 1. if the `targeted` flag is set, expose a node with `update_bottom` and
//!    clear the flag;
//! 2. with a valid assigned node, execute it: of two enabled nodes the first
//!    is assigned and the second pushed, a single enabled node is assigned,
//!    and with none the next node comes from `pop`, then `pop_bottom`;
//! 3. otherwise run [`work_migration`]: steal from a uniformly random other
//!    processor, and on an empty public part set that processor's flag.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dag::{CompDag, NodeId};
use crate::split_deque::{BottomResult, PopResult, SyncEvents, TopResult};

/// Contents of a processor's `assigned` register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Slot<N> {
    #[default]
    None,
    Empty,
    Abort,
    Node(N),
}

impl<N: Copy> Slot<N> {
    pub fn node(self) -> Option<N> {
        match self {
            Slot::Node(n) => Some(n),
            _ => None,
        }
    }
}

/// True iff `x` holds a real node.
pub fn valid_node<N>(x: &Slot<N>) -> bool {
    matches!(x, Slot::Node(_))
}

/// Nodes enabled by one execution, in child order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enabled<N> {
    Zero,
    One(N),
    Two(N, N),
}

impl<N: Copy> Enabled<N> {
    pub fn len(&self) -> usize {
        match self {
            Enabled::Zero => 0,
            Enabled::One(_) => 1,
            Enabled::Two(..) => 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Enabled::Zero)
    }

    pub fn to_vec(&self) -> Vec<N> {
        match *self {
            Enabled::Zero => vec![],
            Enabled::One(a) => vec![a],
            Enabled::Two(a, b) => vec![a, b],
        }
    }

    fn with(self, n: N) -> Enabled<N> {
        match self {
            Enabled::Zero => Enabled::One(n),
            Enabled::One(a) => Enabled::Two(a, n),
            Enabled::Two(..) => panic!("a node enables at most two children"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IterationKind {
    Busy,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StealOutcome {
    Success,
    Abort,
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StealAttempt {
    pub victim: usize,
    pub outcome: StealOutcome,
}

/// What one scheduling iteration did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationOutcome<N> {
    pub kind: IterationKind,
    pub executed: Option<N>,
    pub enabled: Enabled<N>,
    pub sync: SyncEvents,
    /// Whether the iteration entered the `update_bottom` branch.
    pub exposed: bool,
    pub steal: Option<StealAttempt>,
    pub notified_victim: Option<usize>,
}

impl<N> IterationOutcome<N> {
    fn start() -> Self {
        IterationOutcome {
            kind: IterationKind::Idle,
            executed: None,
            enabled: Enabled::Zero,
            sync: SyncEvents::NONE,
            exposed: false,
            steal: None,
            notified_victim: None,
        }
    }

    pub fn enabled_count(&self) -> usize
    where
        N: Copy,
    {
        self.enabled.len()
    }
}

/// Everything [`scheduler_iteration`] needs from one processor and its peers.
pub trait LcwsContext {
    type Node: Copy;

    fn targeted(&self) -> bool;
    fn clear_targeted(&mut self);
    fn assigned(&self) -> Slot<Self::Node>;
    fn set_assigned(&mut self, slot: Slot<Self::Node>);
    fn execute(&mut self, node: Self::Node) -> Enabled<Self::Node>;

    fn push(&mut self, node: Self::Node) -> SyncEvents;
    fn pop(&mut self) -> (PopResult<Self::Node>, SyncEvents);
    fn update_bottom(&mut self) -> SyncEvents;
    fn pop_bottom(&mut self) -> (BottomResult<Self::Node>, SyncEvents);

    /// A uniformly random processor other than this one; `None` when alone.
    fn choose_victim(&mut self) -> Option<usize>;
    fn pop_top(&mut self, victim: usize) -> (TopResult<Self::Node>, SyncEvents);
    /// Sets `victim`'s `targeted` flag.
    fn notify(&mut self, victim: usize);
}

/// One pass of the scheduling loop.
pub fn scheduler_iteration<C: LcwsContext>(ctx: &mut C) -> IterationOutcome<C::Node> {
    let mut out = IterationOutcome::start();
    if ctx.targeted() {
        out.sync += ctx.update_bottom();
        ctx.clear_targeted();
        out.exposed = true;
    }
    match ctx.assigned() {
        Slot::Node(u) => {
            out.kind = IterationKind::Busy;
            out.executed = Some(u);
            let enabled = ctx.execute(u);
            out.enabled = enabled;
            match enabled {
                Enabled::Two(first, second) => {
                    ctx.set_assigned(Slot::Node(first));
                    out.sync += ctx.push(second);
                }
                Enabled::One(first) => ctx.set_assigned(Slot::Node(first)),
                Enabled::Zero => {
                    let (popped, s) = ctx.pop();
                    out.sync += s;
                    let slot = match popped {
                        PopResult::Node(n) => Slot::Node(n),
                        PopResult::Race => {
                            let (b, s) = ctx.pop_bottom();
                            out.sync += s;
                            match b {
                                BottomResult::Node(n) => Slot::Node(n),
                                BottomResult::Empty => Slot::Empty,
                            }
                        }
                    };
                    ctx.set_assigned(slot);
                }
            }
        }
        _ => work_migration(ctx, &mut out),
    }
    out
}

/// The idle half of the loop: one steal attempt.
pub fn work_migration<C: LcwsContext>(ctx: &mut C, out: &mut IterationOutcome<C::Node>) {
    out.kind = IterationKind::Idle;
    let Some(victim) = ctx.choose_victim() else {
        ctx.set_assigned(Slot::None);
        return;
    };
    let (r, s) = ctx.pop_top(victim);
    out.sync += s;
    let (slot, outcome) = match r {
        TopResult::Node(n) => (Slot::Node(n), StealOutcome::Success),
        TopResult::Abort => (Slot::Abort, StealOutcome::Abort),
        TopResult::Empty => {
            ctx.notify(victim);
            out.notified_victim = Some(victim);
            (Slot::Empty, StealOutcome::Empty)
        }
    };
    ctx.set_assigned(slot);
    out.steal = Some(StealAttempt { victim, outcome });
}

/// Uniform victim among the `procs - 1` processors other than `me`.
pub fn random_victim(rng: &mut ChaCha8Rng, me: usize, procs: usize) -> Option<usize> {
    if procs < 2 {
        return None;
    }
    let r = rng.random_range(0..procs - 1);
    Some(if r >= me { r + 1 } else { r })
}

/// One simulated processor.
#[derive(Debug, Clone)]
pub struct ProcessorState<D> {
    pub id: usize,
    pub deque: D,
    pub assigned: Slot<NodeId>,
    pub targeted: bool,
    pub rng: ChaCha8Rng,
}

/// Tracks which nodes are ready and records the enabling tree.
///
/// Trees need no per-node counters: a node is enabled exactly when its only
/// parent executes. Counters are allocated only for dags with joins.
#[derive(Debug, Clone)]
pub struct ReadyTracker {
    remaining: Option<Vec<u32>>,
    enabled: Vec<u64>,
    executed: Vec<u64>,
    executed_count: u64,
    depth: Option<Vec<u32>>,
    enabling_parent: Option<Vec<u32>>,
}

const NO_PARENT: u32 = u32::MAX;

#[inline]
fn bit(set: &[u64], i: usize) -> bool {
    set[i / 64] >> (i % 64) & 1 == 1
}

#[inline]
fn set_bit(set: &mut [u64], i: usize) {
    set[i / 64] |= 1 << (i % 64);
}

impl ReadyTracker {
    /// With `enabling_tree`, records `d(u)` and the enabling parent of every
    /// node; that costs two words per node.
    pub fn new(dag: &CompDag, enabling_tree: bool) -> Self {
        let n = dag.len();
        let words = n.div_ceil(64);
        let remaining = (dag.max_in_degree() > 1)
            .then(|| dag.nodes().map(|u| dag.in_degree(u)).collect());
        let mut t = ReadyTracker {
            remaining,
            enabled: vec![0; words],
            executed: vec![0; words],
            executed_count: 0,
            depth: enabling_tree.then(|| vec![0; n]),
            enabling_parent: enabling_tree.then(|| vec![NO_PARENT; n]),
        };
        if n > 0 {
            set_bit(&mut t.enabled, dag.root().index());
        }
        t
    }

    pub fn executed_count(&self) -> u64 {
        self.executed_count
    }

    pub fn is_executed(&self, u: NodeId) -> bool {
        bit(&self.executed, u.index())
    }

    pub fn is_ready(&self, u: NodeId) -> bool {
        bit(&self.enabled, u.index()) && !self.is_executed(u)
    }

    /// Depth in the enabling tree, if recorded and the node has been enabled.
    pub fn depth(&self, u: NodeId) -> Option<u32> {
        let d = self.depth.as_ref()?;
        bit(&self.enabled, u.index()).then(|| d[u.index()])
    }

    pub fn enabling_parent(&self, u: NodeId) -> Option<NodeId> {
        let p = self.enabling_parent.as_ref()?[u.index()];
        (p != NO_PARENT).then_some(NodeId(p))
    }

    /// `t_inf - d(u)`.
    pub fn weight(&self, u: NodeId, t_inf: u64) -> Option<u64> {
        self.depth(u).map(|d| t_inf - d as u64)
    }

    /// Executes `u` and returns the children it enables.
    ///
    /// # Panics
    /// If `u` is not ready, in particular if it was already executed.
    pub fn execute_node(&mut self, dag: &CompDag, u: NodeId) -> Enabled<NodeId> {
        let i = u.index();
        assert!(!bit(&self.executed, i), "node {u} executed twice");
        assert!(bit(&self.enabled, i), "node {u} executed before it was enabled");
        set_bit(&mut self.executed, i);
        self.executed_count += 1;
        let du = self.depth.as_ref().map_or(0, |d| d[i]);
        let mut out = Enabled::Zero;
        for c in dag.children(u) {
            let ci = c.index();
            let ready = match &mut self.remaining {
                Some(rem) => {
                    rem[ci] -= 1;
                    rem[ci] == 0
                }
                None => true,
            };
            if ready {
                set_bit(&mut self.enabled, ci);
                if let Some(d) = &mut self.depth {
                    d[ci] = du + 1;
                }
                if let Some(p) = &mut self.enabling_parent {
                    p[ci] = u.0;
                }
                out = out.with(c);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::generate_regular;
    use crate::split_deque::SplitDeque;

    #[test]
    fn valid_node_rejects_sentinels() {
        assert!(!valid_node::<u32>(&Slot::Empty));
        assert!(!valid_node::<u32>(&Slot::Abort));
        assert!(!valid_node::<u32>(&Slot::None));
        assert!(valid_node(&Slot::Node(3u32)));
    }

    #[test]
    fn execute_leaf_and_fork() {
        let dag = generate_regular(1).unwrap();
        let mut t = ReadyTracker::new(&dag, true);
        assert_eq!(t.execute_node(&dag, NodeId(0)), Enabled::Two(NodeId(1), NodeId(2)));
        assert_eq!(t.depth(NodeId(2)), Some(1));
        assert_eq!(t.enabling_parent(NodeId(1)), Some(NodeId(0)));
        assert_eq!(t.weight(NodeId(1), dag.t_inf()), Some(1));
        assert_eq!(t.execute_node(&dag, NodeId(1)), Enabled::Zero);
        assert_eq!(t.executed_count(), 2);
    }

    #[test]
    fn join_enabled_by_second_parent() {
        // 0 forks 1 and 2, both feed the join 3.
        let dag = CompDag::new(&[vec![1, 2], vec![3], vec![3], vec![]]).unwrap();
        let mut t = ReadyTracker::new(&dag, true);
        t.execute_node(&dag, NodeId(0));
        assert_eq!(t.execute_node(&dag, NodeId(2)), Enabled::Zero);
        assert!(!t.is_ready(NodeId(3)));
        assert_eq!(t.execute_node(&dag, NodeId(1)), Enabled::One(NodeId(3)));
        assert_eq!(t.enabling_parent(NodeId(3)), Some(NodeId(1)));
        assert_eq!(t.depth(NodeId(3)), Some(2));
    }

    #[test]
    #[should_panic(expected = "executed twice")]
    fn double_execution_is_fatal() {
        let dag = generate_regular(1).unwrap();
        let mut t = ReadyTracker::new(&dag, false);
        t.execute_node(&dag, NodeId(0));
        t.execute_node(&dag, NodeId(0));
    }

    /// Minimal two-processor context over explicit state, for driving single
    /// iterations by hand.
    struct Pair {
        dag: CompDag,
        tracker: ReadyTracker,
        procs: Vec<ProcessorState<SplitDeque<NodeId>>>,
        me: usize,
        victim: usize,
    }

    impl Pair {
        fn new(dag: CompDag) -> Self {
            use rand::SeedableRng;
            let tracker = ReadyTracker::new(&dag, false);
            let procs = (0..2)
                .map(|id| ProcessorState {
                    id,
                    deque: SplitDeque::new(),
                    assigned: Slot::None,
                    targeted: false,
                    rng: ChaCha8Rng::seed_from_u64(id as u64),
                })
                .collect();
            Pair {
                dag,
                tracker,
                procs,
                me: 0,
                victim: 1,
            }
        }
    }

    impl LcwsContext for Pair {
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
        fn set_assigned(&mut self, s: Slot<NodeId>) {
            self.procs[self.me].assigned = s;
        }
        fn execute(&mut self, u: NodeId) -> Enabled<NodeId> {
            self.tracker.execute_node(&self.dag, u)
        }
        fn push(&mut self, n: NodeId) -> SyncEvents {
            self.procs[self.me].deque.push(n)
        }
        fn pop(&mut self) -> (PopResult<NodeId>, SyncEvents) {
            self.procs[self.me].deque.pop()
        }
        fn update_bottom(&mut self) -> SyncEvents {
            self.procs[self.me].deque.update_bottom()
        }
        fn pop_bottom(&mut self) -> (BottomResult<NodeId>, SyncEvents) {
            self.procs[self.me].deque.pop_bottom()
        }
        fn choose_victim(&mut self) -> Option<usize> {
            Some(self.victim)
        }
        fn pop_top(&mut self, v: usize) -> (TopResult<NodeId>, SyncEvents) {
            self.procs[v].deque.pop_top()
        }
        fn notify(&mut self, v: usize) {
            self.procs[v].targeted = true;
        }
    }

    #[test]
    fn targeted_idle_processor_exposes_nothing_then_steals() {
        let mut ctx = Pair::new(generate_regular(1).unwrap());
        ctx.procs[0].targeted = true;
        let out = scheduler_iteration(&mut ctx);
        assert!(out.exposed);
        assert!(!ctx.procs[0].targeted);
        assert_eq!(out.kind, IterationKind::Idle);
        assert_eq!(out.sync, SyncEvents::FENCE);
        assert_eq!(out.steal.unwrap().outcome, StealOutcome::Empty);
        assert_eq!(out.notified_victim, Some(1));
        assert!(ctx.procs[1].targeted);
    }

    #[test]
    fn fork_assigns_first_pushes_second() {
        let mut ctx = Pair::new(generate_regular(2).unwrap());
        ctx.procs[0].assigned = Slot::Node(NodeId(0));
        let out = scheduler_iteration(&mut ctx);
        assert_eq!(out.kind, IterationKind::Busy);
        assert_eq!(out.enabled_count(), 2);
        assert_eq!(ctx.procs[0].assigned, Slot::Node(NodeId(1)));
        assert_eq!(ctx.procs[0].deque.private_slice(), &[NodeId(2)]);
        assert!(out.sync.is_none());
    }

    #[test]
    fn leaf_with_private_work_is_fence_free() {
        let mut ctx = Pair::new(generate_regular(1).unwrap());
        ctx.procs[0].assigned = Slot::Node(NodeId(0));
        scheduler_iteration(&mut ctx);
        let out = scheduler_iteration(&mut ctx);
        assert_eq!(out.executed, Some(NodeId(1)));
        assert_eq!(out.enabled_count(), 0);
        assert_eq!(ctx.procs[0].assigned, Slot::Node(NodeId(2)));
        assert_eq!(out.sync.fences, 0);
        assert_eq!(out.sync.cas_attempts, 0);
    }

    #[test]
    fn steal_single_public_node() {
        let mut ctx = Pair::new(generate_regular(1).unwrap());
        ctx.procs[1].deque.push(NodeId(0));
        ctx.procs[1].deque.update_bottom();
        let out = scheduler_iteration(&mut ctx);
        assert_eq!(ctx.procs[0].assigned, Slot::Node(NodeId(0)));
        assert_eq!(out.steal.unwrap().outcome, StealOutcome::Success);
        assert_eq!(out.sync.cas_successes, 1);
        assert_eq!(out.notified_victim, None);
    }

    #[test]
    fn victims_are_uniform_over_others() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = [0u32; 4];
        for _ in 0..40_000 {
            hits[random_victim(&mut rng, 2, 4).unwrap()] += 1;
        }
        assert_eq!(hits[2], 0);
        for h in [hits[0], hits[1], hits[3]] {
            assert!((12_500..14_200).contains(&h), "{hits:?}");
        }
        assert_eq!(random_victim(&mut rng, 0, 1), None);
    }
}
