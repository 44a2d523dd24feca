//! The split deque: a work deque whose bottom (private) part is owner-only and
//! whose top (public) part can be stolen from.
//!
//! ```text
//!   index:   age.top        officialBottom        privateBottom
//!              |  public part   |   private part       |
//!   entries: [ t  .  .  .  .  . | .  .  .  .  .  .  .  b ]
//! ```
//!
//! [`SplitDeque`] is the single-threaded build used by the simulator: every
//! method is atomic with respect to the others and reports the synchronization
//! events its concurrent counterpart would execute. [`atomic`] holds the
//! lock-free build used by the threaded executor.
//!
//! Charging table (per invocation):
//! - `push`, `pop`: nothing;
//! - `update_bottom`: one fence;
//! - `pop_bottom`: one fence, plus a CAS on the last-node path;
//! - `pop_top`: nothing when it sees an empty public part, otherwise one
//!   fence and one CAS.

pub mod atomic;

use std::fmt;
use std::ops::AddAssign;

/// Synchronization instructions issued by one or more deque invocations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SyncEvents {
    pub cas_attempts: u64,
    pub cas_successes: u64,
    pub fences: u64,
}

impl SyncEvents {
    pub const NONE: SyncEvents = SyncEvents {
        cas_attempts: 0,
        cas_successes: 0,
        fences: 0,
    };

    pub const FENCE: SyncEvents = SyncEvents {
        cas_attempts: 0,
        cas_successes: 0,
        fences: 1,
    };

    pub fn cas(success: bool) -> SyncEvents {
        SyncEvents {
            cas_attempts: 1,
            cas_successes: u64::from(success),
            fences: 0,
        }
    }

    pub fn is_none(&self) -> bool {
        *self == SyncEvents::NONE
    }

    /// CAS attempts plus fences.
    pub fn total(&self) -> u64 {
        self.cas_attempts + self.fences
    }
}

impl AddAssign for SyncEvents {
    fn add_assign(&mut self, o: SyncEvents) {
        self.cas_attempts += o.cas_attempts;
        self.cas_successes += o.cas_successes;
        self.fences += o.fences;
    }
}

impl std::ops::Add for SyncEvents {
    type Output = SyncEvents;

    fn add(mut self, o: SyncEvents) -> SyncEvents {
        self += o;
        self
    }
}

/// Result of [`SplitDeque::pop`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopResult<T> {
    Node(T),
    /// The private part was empty.
    Race,
}

/// Result of a steal attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopResult<T> {
    Node(T),
    Empty,
    /// Lost a race against another removal of the topmost node.
    Abort,
}

/// Result of [`SplitDeque::pop_bottom`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BottomResult<T> {
    Node(T),
    Empty,
}

impl<T> TopResult<T> {
    pub fn node(self) -> Option<T> {
        match self {
            TopResult::Node(n) => Some(n),
            _ => None,
        }
    }
}

/// The `(tag, top)` pair, compared-and-swapped as one 64-bit word: tag in the
/// high 32 bits, top in the low 32. Tags wrap at 2^32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Age {
    pub top: u32,
    pub tag: u32,
}

impl Age {
    #[inline]
    pub fn pack(self) -> u64 {
        ((self.tag as u64) << 32) | self.top as u64
    }

    #[inline]
    pub fn unpack(word: u64) -> Age {
        Age {
            top: word as u32,
            tag: (word >> 32) as u32,
        }
    }

    /// The age the owner installs when it resets an emptied deque.
    #[inline]
    pub fn reset(self) -> Age {
        Age {
            top: 0,
            tag: self.tag.wrapping_add(1),
        }
    }
}

/// Single-threaded split deque.
///
/// Entries grow on demand; occupancy in the simulator is bounded by the dag's
/// work, so no capacity is fixed up front.
#[derive(Clone)]
pub struct SplitDeque<T> {
    entries: Vec<T>,
    private_bottom: usize,
    official_bottom: usize,
    age: Age,
}

impl<T: Copy> Default for SplitDeque<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Copy + fmt::Debug> fmt::Debug for SplitDeque<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SplitDeque")
            .field("public", &self.public_slice())
            .field("private", &self.private_slice())
            .field("age", &self.age)
            .finish()
    }
}

impl<T: Copy> SplitDeque<T> {
    pub fn new() -> Self {
        SplitDeque {
            entries: Vec::new(),
            private_bottom: 0,
            official_bottom: 0,
            age: Age::default(),
        }
    }

    pub fn private_bottom(&self) -> usize {
        self.private_bottom
    }

    pub fn official_bottom(&self) -> usize {
        self.official_bottom
    }

    pub fn age(&self) -> Age {
        self.age
    }

    pub fn private_len(&self) -> usize {
        self.private_bottom.saturating_sub(self.official_bottom)
    }

    pub fn public_len(&self) -> usize {
        self.official_bottom.saturating_sub(self.age.top as usize)
    }

    pub fn len(&self) -> usize {
        self.private_len() + self.public_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Public nodes, top first.
    pub fn public_slice(&self) -> &[T] {
        let top = (self.age.top as usize).min(self.official_bottom);
        &self.entries[top..self.official_bottom]
    }

    /// Private nodes, oldest (topmost) first.
    pub fn private_slice(&self) -> &[T] {
        let lo = self.official_bottom.min(self.private_bottom);
        &self.entries[lo..self.private_bottom]
    }

    /// Topmost node of the whole deque, public or private.
    pub fn top(&self) -> Option<T> {
        self.public_slice()
            .first()
            .or_else(|| self.private_slice().first())
            .copied()
    }

    /// Pushes onto the bottom of the private part.
    pub fn push(&mut self, node: T) -> SyncEvents {
        let p = self.private_bottom;
        if p == self.entries.len() {
            self.entries.push(node);
        } else {
            self.entries[p] = node;
        }
        self.private_bottom = p + 1;
        SyncEvents::NONE
    }

    /// Pops the bottom of the private part, or reports `Race` when it is empty.
    pub fn pop(&mut self) -> (PopResult<T>, SyncEvents) {
        let p = self.private_bottom;
        if p == self.official_bottom {
            return (PopResult::Race, SyncEvents::NONE);
        }
        let p = p - 1;
        let node = self.entries[p];
        self.private_bottom = p;
        (PopResult::Node(node), SyncEvents::NONE)
    }

    /// Moves the topmost private node into the bottom of the public part.
    pub fn update_bottom(&mut self) -> SyncEvents {
        if self.private_bottom > self.official_bottom {
            self.official_bottom += 1;
        }
        SyncEvents::FENCE
    }

    /// Steals the topmost public node.
    pub fn pop_top(&mut self) -> (TopResult<T>, SyncEvents) {
        let old = self.age;
        let old_bottom = self.official_bottom;
        if old_bottom <= old.top as usize {
            return (TopResult::Empty, SyncEvents::NONE);
        }
        let node = self.entries[old.top as usize];
        // No other invocation can interleave here, so the CAS always succeeds.
        self.age = Age {
            top: old.top + 1,
            tag: old.tag,
        };
        (TopResult::Node(node), SyncEvents::FENCE + SyncEvents::cas(true))
    }

    /// Pops the bottommost public node. Called by the owner only after
    /// [`SplitDeque::pop`] reported an empty private part.
    pub fn pop_bottom(&mut self) -> (BottomResult<T>, SyncEvents) {
        debug_assert_eq!(self.private_len(), 0, "pop_bottom with a non-empty private part");
        let mut sync = SyncEvents::FENCE;
        let o = self.official_bottom;
        if o == 0 {
            return (BottomResult::Empty, sync);
        }
        let o = o - 1;
        self.official_bottom = o;
        // The private part is empty, so the private bottom follows the
        // official one down; leaving it behind would let `pop` return this
        // node a second time.
        self.private_bottom = o;
        let node = self.entries[o];
        let old = self.age;
        if o > old.top as usize {
            return (BottomResult::Node(node), sync);
        }
        self.official_bottom = 0;
        self.private_bottom = 0;
        let new = old.reset();
        if o == old.top as usize {
            // Sequentially the CAS cannot fail.
            sync += SyncEvents::cas(true);
            self.age = new;
            return (BottomResult::Node(node), sync);
        }
        self.age = new;
        (BottomResult::Empty, sync)
    }
}

/// Sequential reference split deque: an ordered list of nodes (top first)
/// of which the first `public` are stealable.
///
/// Used as the oracle for [`SplitDeque`] and by the relaxed-semantics
/// checker when replaying linearizations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ReferenceDeque<T> {
    items: std::collections::VecDeque<T>,
    public: usize,
}

impl<T: Copy> ReferenceDeque<T> {
    pub fn new() -> Self {
        ReferenceDeque {
            items: Default::default(),
            public: 0,
        }
    }

    pub fn public_len(&self) -> usize {
        self.public
    }

    pub fn private_len(&self) -> usize {
        self.items.len() - self.public
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Nodes from top to bottom.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    pub fn push(&mut self, node: T) {
        self.items.push_back(node);
    }

    pub fn pop(&mut self) -> PopResult<T> {
        if self.private_len() == 0 {
            PopResult::Race
        } else {
            PopResult::Node(self.items.pop_back().unwrap())
        }
    }

    pub fn update_bottom(&mut self) {
        if self.private_len() > 0 {
            self.public += 1;
        }
    }

    /// Removes the bottommost public node. Returns `None` on a non-empty
    /// private part, which is outside the method's contract.
    pub fn pop_bottom(&mut self) -> Option<BottomResult<T>> {
        if self.private_len() > 0 {
            return None;
        }
        if self.public == 0 {
            return Some(BottomResult::Empty);
        }
        self.public -= 1;
        Some(BottomResult::Node(self.items.pop_back().unwrap()))
    }

    /// Never aborts.
    pub fn pop_top(&mut self) -> TopResult<T> {
        if self.public == 0 {
            TopResult::Empty
        } else {
            self.public -= 1;
            TopResult::Node(self.items.pop_front().unwrap())
        }
    }
}
