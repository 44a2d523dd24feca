//! Decides whether a recorded history meets the relaxed split-deque
//! semantics.
//!
//! A history is valid when its non-aborting invocations can be given
//! distinct linearization points, each inside its own interval, such that
//! replaying them in point order on [`ReferenceDeque`] reproduces every
//! recorded result, and every aborted `popTop` has some removal of the
//! topmost node linearized inside its interval.
//!
//! Search enumerates strict total orders of the non-aborting invocations,
//! depth first, pruning by replaying each prefix. Point assignment for a
//! fixed order is greedy: each invocation goes as early as its interval and
//! its predecessor allow, which is optimal. Aborts are checked on complete
//! orders by narrowing the interval of the chosen remover and re-running the
//! greedy pass.

use std::fmt;

use super::history::{History, HistoryEvent, Method, Outcome};
use crate::split_deque::{BottomResult, PopResult, ReferenceDeque, TopResult};

/// Largest number of non-aborting invocations searched exhaustively in one
/// segment.
pub const SEARCH_BOUND: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Counterexample(Counterexample),
    /// A segment has more non-aborting invocations than the search bound.
    TooLarge { events: usize, bound: usize },
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    /// Indices into `History::events` of the offending segment.
    pub events: Vec<usize>,
    pub reason: String,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (events {:?})", self.reason, self.events)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Valid => f.write_str("valid"),
            Verdict::Counterexample(c) => write!(f, "counterexample: {c}"),
            Verdict::TooLarge { events, bound } => {
                write!(f, "too-large: {events} non-aborting events exceed bound {bound}")
            }
        }
    }
}

/// True iff no two owner-method invocations overlap in time.
pub fn is_good(h: &History) -> bool {
    let mut owner: Vec<&HistoryEvent> =
        h.events.iter().filter(|e| e.method.is_owner_method()).collect();
    owner.sort_by_key(|e| e.invoke_ts);
    let mut horizon = None;
    for e in owner {
        if horizon.is_some_and(|r| e.invoke_ts < r) {
            return false;
        }
        horizon = Some(horizon.map_or(e.response_ts, |r: u64| r.max(e.response_ts)));
    }
    true
}

/// Splits the history at quiescent points: instants that no interval
/// contains and at which every pushed node has been returned. Each segment
/// lists event indices in invocation order.
pub fn segments(h: &History) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..h.events.len()).collect();
    idx.sort_by_key(|&i| (h.events[i].invoke_ts, h.events[i].response_ts));
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let mut horizon = 0u64;
    let mut live: i64 = 0;
    for (k, &i) in idx.iter().enumerate() {
        let e = &h.events[i];
        cur.push(i);
        horizon = horizon.max(e.response_ts);
        match (e.method, e.result) {
            (Method::Push, _) => live += 1,
            (_, Outcome::Node(_)) => live -= 1,
            _ => {}
        }
        let quiescent = match idx.get(k + 1) {
            Some(&n) => horizon <= h.events[n].invoke_ts && live == 0,
            None => true,
        };
        if quiescent {
            out.push(std::mem::take(&mut cur));
        }
    }
    out
}

pub fn check_relaxed(h: &History) -> Verdict {
    check_relaxed_with_bound(h, SEARCH_BOUND)
}

pub fn check_relaxed_with_bound(h: &History, bound: usize) -> Verdict {
    if let Err(e) = h.validate() {
        return Verdict::Counterexample(Counterexample {
            events: vec![],
            reason: e.to_string(),
        });
    }
    if !is_good(h) {
        return Verdict::Counterexample(Counterexample {
            events: vec![],
            reason: "owner methods overlap".into(),
        });
    }
    let segs = segments(h);
    for seg in &segs {
        let n = seg.iter().filter(|&&i| !h.events[i].is_abort()).count();
        if n > bound && !is_sequential(h, seg) {
            return Verdict::TooLarge { events: n, bound };
        }
    }
    for seg in segs {
        let evs: Vec<HistoryEvent> = seg.iter().map(|&i| h.events[i]).collect();
        let ok = if is_sequential(h, &seg) {
            replay_sequential(&evs)
        } else {
            segment_is_valid(&evs)
        };
        if !ok {
            return Verdict::Counterexample(Counterexample {
                events: seg,
                reason: "no linearization reproduces the recorded results".into(),
            });
        }
    }
    Verdict::Valid
}

/// True iff no two invocations of the segment overlap. `seg` is in
/// invocation order.
fn is_sequential(h: &History, seg: &[usize]) -> bool {
    seg.windows(2)
        .all(|w| h.events[w[0]].response_ts <= h.events[w[1]].invoke_ts)
}

/// A sequential segment admits exactly one order, and an abort there has
/// nothing overlapping it to blame.
fn replay_sequential(events: &[HistoryEvent]) -> bool {
    let mut d = ReferenceDeque::new();
    events
        .iter()
        .all(|e| !e.is_abort() && apply(&mut d, e).is_some())
}

/// Replays one invocation. Returns whether the recorded result matches and
/// whether the invocation removed the deque's topmost node.
pub(crate) fn apply(d: &mut ReferenceDeque<u64>, e: &HistoryEvent) -> Option<bool> {
    let mut removes_top = false;
    let got = match e.method {
        Method::Push => {
            d.push(e.arg?);
            Outcome::Unit
        }
        Method::UpdateBottom => {
            d.update_bottom();
            Outcome::Unit
        }
        Method::Pop => match d.pop() {
            PopResult::Node(n) => Outcome::Node(n),
            PopResult::Race => Outcome::Race,
        },
        Method::PopBottom => {
            let last_public = d.public_len() == 1;
            match d.pop_bottom()? {
                BottomResult::Node(n) => {
                    removes_top = last_public;
                    Outcome::Node(n)
                }
                BottomResult::Empty => Outcome::Empty,
            }
        }
        Method::PopTop => match d.pop_top() {
            TopResult::Node(n) => {
                removes_top = true;
                Outcome::Node(n)
            }
            TopResult::Empty => Outcome::Empty,
            TopResult::Abort => Outcome::Abort,
        },
    };
    (got == e.result).then_some(removes_top)
}

/// Greedy earliest placement of `order` into closed intervals. Points are
/// real; equal real parts are separated by infinitesimals, so an invocation
/// can follow its predecessor whenever its interval ends strictly later.
pub(crate) fn greedy_feasible(intervals: &[(u64, u64)], order: &[usize]) -> bool {
    let mut prev: Option<u64> = None;
    for &i in order {
        let (lo, hi) = intervals[i];
        match prev {
            Some(p) if lo <= p => {
                if p >= hi {
                    return false;
                }
            }
            _ => {
                if lo > hi {
                    return false;
                }
                prev = Some(lo);
            }
        }
    }
    true
}

struct Search<'a> {
    live: Vec<&'a HistoryEvent>,
    aborts: Vec<&'a HistoryEvent>,
    placed: Vec<bool>,
    order: Vec<usize>,
    removes_top: Vec<bool>,
}

fn segment_is_valid(events: &[HistoryEvent]) -> bool {
    let (aborts, live): (Vec<&HistoryEvent>, Vec<&HistoryEvent>) =
        events.iter().partition(|e| e.is_abort());
    let n = live.len();
    let mut s = Search {
        live,
        aborts,
        placed: vec![false; n],
        order: Vec::with_capacity(n),
        removes_top: vec![false; n],
    };
    s.dfs(&ReferenceDeque::new(), None)
}

impl Search<'_> {
    fn dfs(&mut self, state: &ReferenceDeque<u64>, prev: Option<u64>) -> bool {
        if self.order.len() == self.live.len() {
            return self.aborts_explained();
        }
        for i in 0..self.live.len() {
            if self.placed[i] {
                continue;
            }
            let e = self.live[i];
            if prev.is_some_and(|p| p >= e.response_ts) {
                // Some earlier choice already passed this interval.
                return false;
            }
            let next = Some(prev.map_or(e.invoke_ts, |p| p.max(e.invoke_ts)));
            let stranded = (0..self.live.len())
                .any(|j| j != i && !self.placed[j] && next >= Some(self.live[j].response_ts));
            if stranded {
                continue;
            }
            let mut st = state.clone();
            let Some(rt) = apply(&mut st, e) else {
                continue;
            };
            self.placed[i] = true;
            self.order.push(i);
            self.removes_top[i] = rt;
            if self.dfs(&st, next) {
                return true;
            }
            self.order.pop();
            self.placed[i] = false;
        }
        false
    }

    fn aborts_explained(&self) -> bool {
        if self.aborts.is_empty() {
            return true;
        }
        let removers: Vec<usize> = (0..self.live.len()).filter(|&i| self.removes_top[i]).collect();
        let base: Vec<(u64, u64)> = self
            .live
            .iter()
            .map(|e| (e.invoke_ts, e.response_ts))
            .collect();
        self.assign_abort(0, &removers, base)
    }

    /// Picks a remover for abort `k` onwards, narrowing intervals as it goes.
    fn assign_abort(&self, k: usize, removers: &[usize], iv: Vec<(u64, u64)>) -> bool {
        let Some(x) = self.aborts.get(k) else {
            return greedy_feasible(&iv, &self.order);
        };
        for &r in removers {
            let (lo, hi) = iv[r];
            let (lo, hi) = (lo.max(x.invoke_ts), hi.min(x.response_ts));
            if lo > hi {
                continue;
            }
            let mut next = iv.clone();
            next[r] = (lo, hi);
            if self.assign_abort(k + 1, removers, next) {
                return true;
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(w: u32, m: Method, arg: Option<u64>, r: Outcome, i: u64, e: u64) -> HistoryEvent {
        HistoryEvent {
            worker: w,
            method: m,
            arg,
            result: r,
            invoke_ts: i,
            response_ts: e,
        }
    }

    use Method::*;
    use Outcome::*;

    #[test]
    fn sequential_steal_is_valid() {
        let h = History::new(vec![
            ev(0, Push, Some(1), Unit, 0, 1),
            ev(0, UpdateBottom, None, Unit, 2, 3),
            ev(1, PopTop, None, Node(1), 4, 5),
        ]);
        assert_eq!(check_relaxed(&h), Verdict::Valid);
    }

    #[test]
    fn phantom_node_is_rejected() {
        let h = History::new(vec![
            ev(0, Push, Some(1), Unit, 0, 1),
            ev(0, UpdateBottom, None, Unit, 2, 3),
            ev(1, PopTop, None, Node(9), 4, 5),
        ]);
        assert!(matches!(check_relaxed(&h), Verdict::Counterexample(_)));
    }

    #[test]
    fn good_ignores_pop_top_overlap() {
        let h = History::new(vec![
            ev(0, Push, Some(1), Unit, 0, 4),
            ev(1, PopTop, None, Empty, 1, 3),
        ]);
        assert!(is_good(&h));
        let h = History::new(vec![
            ev(0, Push, Some(1), Unit, 0, 4),
            ev(1, Push, Some(2), Unit, 1, 3),
        ]);
        assert!(!is_good(&h));
    }

    #[test]
    fn overlap_permits_either_order() {
        // The steal overlaps the exposure, so it may see the node or not.
        for result in [Node(1), Empty] {
            let mut evs = vec![
                ev(0, Push, Some(1), Unit, 0, 1),
                ev(0, UpdateBottom, None, Unit, 2, 5),
                ev(1, PopTop, None, result, 3, 6),
            ];
            if result == Empty {
                evs.push(ev(0, Pop, None, Race, 7, 8));
                evs.push(ev(0, PopBottom, None, Node(1), 9, 10));
            }
            assert_eq!(check_relaxed(&History::new(evs)), Verdict::Valid, "{result}");
        }
    }

    #[test]
    fn real_time_order_is_respected() {
        // The steal finished before the exposure began.
        let h = History::new(vec![
            ev(0, Push, Some(1), Unit, 0, 1),
            ev(1, PopTop, None, Node(1), 2, 3),
            ev(0, UpdateBottom, None, Unit, 4, 5),
        ]);
        assert!(!check_relaxed(&h).is_valid());
    }

    #[test]
    fn abort_needs_overlapping_top_removal() {
        let prefix = [
            ev(0, Push, Some(1), Unit, 0, 1),
            ev(0, UpdateBottom, None, Unit, 2, 3),
        ];
        let explained = History::new(
            [
                &prefix[..],
                &[
                    ev(1, PopTop, None, Abort, 4, 9),
                    ev(2, PopTop, None, Node(1), 5, 6),
                ],
            ]
            .concat(),
        );
        assert_eq!(check_relaxed(&explained), Verdict::Valid);

        let unexplained = History::new(
            [
                &prefix[..],
                &[
                    ev(1, PopTop, None, Abort, 4, 5),
                    ev(2, PopTop, None, Node(1), 6, 7),
                ],
            ]
            .concat(),
        );
        assert!(!check_relaxed(&unexplained).is_valid());
    }

    #[test]
    fn abort_straddling_remover_is_narrowed() {
        // The remover's interval [5, 9] overlaps the abort [2, 6]; its point
        // must then fall in [5, 6], which is only possible if the exposure
        // ending at 5 precedes it. The trailing pop forces no conflict.
        let h = History::new(vec![
            ev(0, Push, Some(1), Unit, 0, 1),
            ev(0, UpdateBottom, None, Unit, 3, 5),
            ev(1, PopTop, None, Abort, 2, 6),
            ev(2, PopTop, None, Node(1), 5, 9),
        ]);
        assert_eq!(check_relaxed(&h), Verdict::Valid);
        // Shifting the abort before the exposure leaves nothing to blame.
        let h = History::new(vec![
            ev(0, Push, Some(1), Unit, 0, 1),
            ev(1, PopTop, None, Abort, 2, 3),
            ev(0, UpdateBottom, None, Unit, 4, 5),
            ev(2, PopTop, None, Node(1), 6, 9),
        ]);
        assert!(!check_relaxed(&h).is_valid());
    }

    #[test]
    fn pop_bottom_of_last_public_node_explains_abort() {
        let h = History::new(vec![
            ev(0, Push, Some(1), Unit, 0, 1),
            ev(0, UpdateBottom, None, Unit, 2, 3),
            ev(1, PopTop, None, Abort, 4, 9),
            ev(0, Pop, None, Race, 5, 6),
            ev(0, PopBottom, None, Node(1), 7, 8),
        ]);
        assert_eq!(check_relaxed(&h), Verdict::Valid);
    }

    #[test]
    fn segmentation_splits_at_quiescent_points() {
        let mut evs = Vec::new();
        let mut t = 0;
        for n in 0..10 {
            evs.push(ev(0, Push, Some(n), Unit, t, t + 1));
            evs.push(ev(0, Pop, None, Node(n), t + 2, t + 3));
            t += 4;
        }
        let h = History::new(evs);
        assert_eq!(segments(&h).len(), 10);
        assert_eq!(check_relaxed(&h), Verdict::Valid);
    }

    #[test]
    fn too_large_segment() {
        // Thirteen concurrent steals on an empty deque.
        let evs: Vec<HistoryEvent> = (0..13).map(|w| ev(w + 1, PopTop, None, Empty, w as u64, 100)).collect();
        assert_eq!(
            check_relaxed(&History::new(evs)),
            Verdict::TooLarge {
                events: 13,
                bound: SEARCH_BOUND
            }
        );
    }

    #[test]
    fn long_sequential_segments_skip_the_bound() {
        let mut evs = Vec::new();
        for n in 0..40 {
            evs.push(ev(0, Push, Some(n), Unit, 2 * n, 2 * n + 1));
        }
        assert_eq!(check_relaxed(&History::new(evs.clone())), Verdict::Valid);
        evs.push(ev(1, PopTop, None, Abort, 200, 201));
        assert!(!check_relaxed(&History::new(evs)).is_valid());
    }

    #[test]
    fn greedy_handles_touching_intervals() {
        // Two invocations confined to the same instant cannot both fit.
        assert!(!greedy_feasible(&[(3, 3), (3, 3)], &[0, 1]));
        assert!(greedy_feasible(&[(3, 3), (3, 4)], &[0, 1]));
        assert!(!greedy_feasible(&[(3, 4), (3, 3)], &[0, 1]));
        assert!(greedy_feasible(&[(0, 10), (0, 10), (0, 10)], &[2, 0, 1]));
    }
}
