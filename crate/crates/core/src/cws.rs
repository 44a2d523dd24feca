//! Classical work stealing over a single-bottom ABP deque.
//!
//! Every local transition goes through the concurrent deque, so the owner
//! pays synchronization on each push and bottom pop. What it pays is decided
//! by [`CwsCostModel`], separately from the deque logic: deque methods report
//! which code path ran ([`CwsPath`]) and the cost model turns that into
//! [`SyncEvents`].

use std::fmt;

use crate::scheduler::{
    Enabled, IterationKind, IterationOutcome, Slot, StealAttempt, StealOutcome,
};
use crate::split_deque::{Age, BottomResult, SyncEvents, TopResult};

/// The code path one deque invocation took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CwsPath {
    Push,
    /// The deque was empty on entry.
    PopBottomEmpty,
    /// More than one node remained; no race with thieves was possible.
    PopBottomFast,
    /// The last node was contested with a CAS on `age`.
    PopBottomLast { won: bool },
    /// `bottom` had already passed `top`: the node went to a thief.
    PopBottomLost,
    PopTopEmpty,
    PopTop { won: bool },
}

/// Synchronization charged per [`CwsPath`]. All constants default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CwsCostModel {
    pub fence_per_push: u64,
    pub fence_per_pop_bottom: u64,
    pub fence_per_steal_snapshot: u64,
    pub cas_per_top_removal: u64,
    pub cas_on_last_element_race: u64,
}

impl Default for CwsCostModel {
    fn default() -> Self {
        CwsCostModel {
            fence_per_push: 1,
            fence_per_pop_bottom: 1,
            fence_per_steal_snapshot: 1,
            cas_per_top_removal: 1,
            cas_on_last_element_race: 1,
        }
    }
}

impl CwsCostModel {
    pub fn charge(&self, path: CwsPath) -> SyncEvents {
        let fences = |n| SyncEvents {
            fences: n,
            ..SyncEvents::NONE
        };
        let cas = |n, won: bool| SyncEvents {
            cas_attempts: n,
            cas_successes: if won { n } else { 0 },
            fences: 0,
        };
        match path {
            CwsPath::Push => fences(self.fence_per_push),
            CwsPath::PopBottomEmpty | CwsPath::PopBottomFast | CwsPath::PopBottomLost => {
                fences(self.fence_per_pop_bottom)
            }
            CwsPath::PopBottomLast { won } => {
                fences(self.fence_per_pop_bottom) + cas(self.cas_on_last_element_race, won)
            }
            CwsPath::PopTopEmpty => SyncEvents::NONE,
            CwsPath::PopTop { won } => {
                fences(self.fence_per_steal_snapshot) + cas(self.cas_per_top_removal, won)
            }
        }
    }
}

/// A sequential ABP deque: `entries[age.top .. bottom)` are live, bottom is
/// the highest index.
#[derive(Clone, Default)]
pub struct ConcurrentDeque<T> {
    entries: Vec<T>,
    bottom: usize,
    age: Age,
}

impl<T: Copy + fmt::Debug> fmt::Debug for ConcurrentDeque<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConcurrentDeque")
            .field("live", &self.as_slice())
            .field("age", &self.age)
            .finish()
    }
}

impl<T: Copy> ConcurrentDeque<T> {
    pub fn new() -> Self {
        ConcurrentDeque {
            entries: Vec::new(),
            bottom: 0,
            age: Age::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.bottom.saturating_sub(self.age.top as usize)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn age(&self) -> Age {
        self.age
    }

    /// Live nodes, top first.
    pub fn as_slice(&self) -> &[T] {
        let top = (self.age.top as usize).min(self.bottom);
        &self.entries[top..self.bottom]
    }

    pub fn push_bottom(&mut self, node: T) -> CwsPath {
        if self.bottom == self.entries.len() {
            self.entries.push(node);
        } else {
            self.entries[self.bottom] = node;
        }
        self.bottom += 1;
        CwsPath::Push
    }

    pub fn pop_bottom(&mut self) -> (BottomResult<T>, CwsPath) {
        if self.bottom == 0 {
            return (BottomResult::Empty, CwsPath::PopBottomEmpty);
        }
        self.bottom -= 1;
        let b = self.bottom;
        let node = self.entries[b];
        let old = self.age;
        if b > old.top as usize {
            return (BottomResult::Node(node), CwsPath::PopBottomFast);
        }
        self.bottom = 0;
        let new = old.reset();
        if b == old.top as usize {
            // Sequential build: the CAS always sees `old`.
            self.age = new;
            return (BottomResult::Node(node), CwsPath::PopBottomLast { won: true });
        }
        self.age = new;
        (BottomResult::Empty, CwsPath::PopBottomLost)
    }

    pub fn pop_top(&mut self) -> (TopResult<T>, CwsPath) {
        let old = self.age;
        if self.bottom <= old.top as usize {
            return (TopResult::Empty, CwsPath::PopTopEmpty);
        }
        let node = self.entries[old.top as usize];
        self.age = Age {
            top: old.top + 1,
            tag: old.tag,
        };
        (TopResult::Node(node), CwsPath::PopTop { won: true })
    }
}

/// Hooks for [`cws_scheduler_iteration`]. Sync events are charged by the
/// context so that it can apply its own cost model.
pub trait CwsContext {
    type Node: Copy;

    fn assigned(&self) -> Slot<Self::Node>;
    fn set_assigned(&mut self, slot: Slot<Self::Node>);
    fn execute(&mut self, node: Self::Node) -> Enabled<Self::Node>;
    fn push_bottom(&mut self, node: Self::Node) -> SyncEvents;
    fn pop_bottom(&mut self) -> (BottomResult<Self::Node>, SyncEvents);
    fn choose_victim(&mut self) -> Option<usize>;
    fn pop_top(&mut self, victim: usize) -> (TopResult<Self::Node>, SyncEvents);
}

/// One pass of the classical work-stealing loop.
pub fn cws_scheduler_iteration<C: CwsContext>(ctx: &mut C) -> IterationOutcome<C::Node> {
    let mut out = IterationOutcome {
        kind: IterationKind::Idle,
        executed: None,
        enabled: Enabled::Zero,
        sync: SyncEvents::NONE,
        exposed: false,
        steal: None,
        notified_victim: None,
    };
    if let Slot::Node(u) = ctx.assigned() {
        out.kind = IterationKind::Busy;
        out.executed = Some(u);
        out.enabled = ctx.execute(u);
        match out.enabled {
            Enabled::Two(first, second) => {
                ctx.set_assigned(Slot::Node(first));
                out.sync += ctx.push_bottom(second);
            }
            Enabled::One(first) => ctx.set_assigned(Slot::Node(first)),
            Enabled::Zero => {
                let (r, s) = ctx.pop_bottom();
                out.sync += s;
                ctx.set_assigned(match r {
                    BottomResult::Node(n) => Slot::Node(n),
                    BottomResult::Empty => Slot::Empty,
                });
            }
        }
        return out;
    }
    let Some(victim) = ctx.choose_victim() else {
        ctx.set_assigned(Slot::None);
        return out;
    };
    let (r, s) = ctx.pop_top(victim);
    out.sync += s;
    let (slot, outcome) = match r {
        TopResult::Node(n) => (Slot::Node(n), StealOutcome::Success),
        TopResult::Abort => (Slot::Abort, StealOutcome::Abort),
        TopResult::Empty => (Slot::Empty, StealOutcome::Empty),
    };
    ctx.set_assigned(slot);
    out.steal = Some(StealAttempt { victim, outcome });
    out
}
