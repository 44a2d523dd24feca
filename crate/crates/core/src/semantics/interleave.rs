//! A stepped model of the split deque's concurrent code.
//!
//! Each method is broken into the shared-memory accesses of the lock-free
//! implementation, and a seeded random scheduler interleaves the owner with
//! a few thieves one access at a time. Memory is sequentially consistent;
//! the model explores the algorithm's interleavings, not hardware
//! reorderings. Timestamps are global scheduler steps, so they are unique.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::history::{History, HistoryEvent, Method, Outcome};
use crate::split_deque::Age;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterleaveConfig {
    pub thieves: usize,
    /// Nodes the owner pushes before draining its deque.
    pub max_pushes: usize,
    /// Steal attempts per thief.
    pub steals_per_thief: usize,
    /// Histories with more non-aborting events are regenerated.
    pub max_non_aborting: usize,
}

impl Default for InterleaveConfig {
    fn default() -> Self {
        InterleaveConfig {
            thieves: 2,
            max_pushes: 3,
            steals_per_thief: 2,
            max_non_aborting: super::checker::SEARCH_BOUND,
        }
    }
}

#[derive(Debug, Default)]
struct Shared {
    entries: Vec<u64>,
    private_bottom: u64,
    official_bottom: u64,
    age: Age,
}

#[derive(Debug, Clone, Copy)]
enum Action {
    Push(u64),
    UpdateBottom,
    /// `pop`, falling back to `popBottom` on RACE.
    Take,
}

/// An invocation in flight.
#[derive(Debug, Clone, Copy)]
enum Frame {
    PopTop { pc: u8, old: Age, node: u64 },
    PopBottom { pc: u8, o: u64, node: u64, old: Age },
}

#[derive(Debug)]
struct Worker {
    id: u32,
    script: Vec<Action>,
    next: usize,
    /// Remaining steal attempts, for thieves.
    steals: usize,
    draining: bool,
    frame: Option<(Frame, u64)>,
    /// Set after `pop` returns RACE.
    bottom_pending: bool,
    done: bool,
}

/// Result of one simulated episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub history: History,
    pub pushed: Vec<u64>,
    pub removed: Vec<u64>,
}

/// Generates one episode's history from `rng`.
pub fn random_episode(cfg: &InterleaveConfig, rng: &mut ChaCha8Rng) -> Episode {
    loop {
        let ep = run_once(cfg, rng);
        let n = ep.history.events.iter().filter(|e| !e.is_abort()).count();
        if n <= cfg.max_non_aborting {
            return ep;
        }
    }
}

/// `count` episodes from one seed.
pub fn random_histories(cfg: &InterleaveConfig, seed: u64, count: usize) -> Vec<Episode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_episode(cfg, &mut rng)).collect()
}

fn run_once(cfg: &InterleaveConfig, rng: &mut ChaCha8Rng) -> Episode {
    let pushes = rng.random_range(1..=cfg.max_pushes.max(1));
    let mut script = Vec::new();
    let mut next_id = 1;
    let mut pending = 0;
    while next_id <= pushes as u64 || rng.random_bool(0.3) {
        let roll = rng.random_range(0..3);
        if roll == 0 && next_id <= pushes as u64 {
            script.push(Action::Push(next_id));
            next_id += 1;
            pending += 1;
        } else if roll == 1 {
            script.push(Action::UpdateBottom);
        } else if pending > 0 && rng.random_bool(0.5) {
            script.push(Action::Take);
            pending -= 1;
        } else if next_id <= pushes as u64 {
            script.push(Action::Push(next_id));
            next_id += 1;
            pending += 1;
        } else {
            break;
        }
    }
    let mut workers: Vec<Worker> = (0..=cfg.thieves)
        .map(|id| Worker {
            id: id as u32,
            script: if id == 0 { script.clone() } else { vec![] },
            next: 0,
            steals: if id == 0 { 0 } else { cfg.steals_per_thief },
            draining: false,
            frame: None,
            bottom_pending: false,
            done: false,
        })
        .collect();
    let mut mem = Shared {
        entries: vec![0; cfg.max_pushes + 1],
        ..Shared::default()
    };
    let mut clock = 0u64;
    let mut events = Vec::new();
    let mut removed = Vec::new();
    loop {
        let live: Vec<usize> = (0..workers.len()).filter(|&w| !workers[w].done).collect();
        if live.is_empty() {
            break;
        }
        let w = live[rng.random_range(0..live.len())];
        if let Some(ev) = step(&mut workers[w], &mut mem, &mut clock) {
            if let Outcome::Node(n) = ev.result {
                removed.push(n);
            }
            events.push(ev);
        }
    }
    events.sort_by_key(|e: &HistoryEvent| e.invoke_ts);
    Episode {
        history: History { events },
        pushed: (1..next_id).collect(),
        removed,
    }
}

fn tick(clock: &mut u64) -> u64 {
    let t = *clock;
    *clock += 1;
    t
}

fn event(w: &Worker, method: Method, arg: Option<u64>, result: Outcome, inv: u64, clock: &mut u64) -> HistoryEvent {
    HistoryEvent {
        worker: w.id,
        method,
        arg,
        result,
        invoke_ts: inv,
        response_ts: tick(clock),
    }
}

/// Advances one worker by one scheduler step. The owner's single-access
/// methods take two steps (invoke, then access and respond); multi-access
/// methods take one step per access.
fn step(w: &mut Worker, mem: &mut Shared, clock: &mut u64) -> Option<HistoryEvent> {
    if let Some((frame, inv)) = w.frame {
        return match frame {
            Frame::PopTop { .. } => pop_top_step(w, mem, clock, frame, inv),
            Frame::PopBottom { .. } => pop_bottom_step(w, mem, clock, frame, inv),
        };
    }
    if w.id != 0 {
        if w.steals == 0 {
            w.done = true;
            return None;
        }
        w.steals -= 1;
        let inv = tick(clock);
        w.frame = Some((
            Frame::PopTop {
                pc: 0,
                old: Age::default(),
                node: 0,
            },
            inv,
        ));
        return None;
    }
    if w.bottom_pending {
        w.bottom_pending = false;
        let inv = tick(clock);
        w.frame = Some((
            Frame::PopBottom {
                pc: 0,
                o: 0,
                node: 0,
                old: Age::default(),
            },
            inv,
        ));
        return None;
    }
    let action = if w.next < w.script.len() {
        w.next += 1;
        w.script[w.next - 1]
    } else {
        w.draining = true;
        Action::Take
    };
    // Owner single-access methods: invoke and respond around one access.
    let inv = tick(clock);
    Some(match action {
        Action::Push(n) => {
            let p = mem.private_bottom;
            mem.entries[p as usize] = n;
            mem.private_bottom = p + 1;
            event(w, Method::Push, Some(n), Outcome::Unit, inv, clock)
        }
        Action::UpdateBottom => {
            if mem.private_bottom > mem.official_bottom {
                mem.official_bottom += 1;
            }
            event(w, Method::UpdateBottom, None, Outcome::Unit, inv, clock)
        }
        Action::Take => {
            if mem.private_bottom == mem.official_bottom {
                w.bottom_pending = true;
                event(w, Method::Pop, None, Outcome::Race, inv, clock)
            } else {
                mem.private_bottom -= 1;
                let n = mem.entries[mem.private_bottom as usize];
                event(w, Method::Pop, None, Outcome::Node(n), inv, clock)
            }
        }
    })
}

fn pop_top_step(w: &mut Worker, mem: &mut Shared, clock: &mut u64, frame: Frame, inv: u64) -> Option<HistoryEvent> {
    let Frame::PopTop { pc, old, node } = frame else {
        unreachable!()
    };
    let finish = |w: &mut Worker, r, clock: &mut u64| {
        w.frame = None;
        Some(event(w, Method::PopTop, None, r, inv, clock))
    };
    match pc {
        0 => {
            w.frame = Some((Frame::PopTop { pc: 1, old: mem.age, node }, inv));
            None
        }
        1 => {
            if mem.official_bottom <= old.top as u64 {
                return finish(w, Outcome::Empty, clock);
            }
            w.frame = Some((Frame::PopTop { pc: 2, old, node }, inv));
            None
        }
        2 => {
            let node = mem.entries[old.top as usize];
            w.frame = Some((Frame::PopTop { pc: 3, old, node }, inv));
            None
        }
        _ => {
            if mem.age == old {
                mem.age = Age {
                    top: old.top + 1,
                    tag: old.tag,
                };
                finish(w, Outcome::Node(node), clock)
            } else {
                finish(w, Outcome::Abort, clock)
            }
        }
    }
}

fn pop_bottom_step(w: &mut Worker, mem: &mut Shared, clock: &mut u64, frame: Frame, inv: u64) -> Option<HistoryEvent> {
    let Frame::PopBottom { pc, o, node, old } = frame else {
        unreachable!()
    };
    let finish = |w: &mut Worker, r: Outcome, clock: &mut u64| {
        w.frame = None;
        if w.draining && r == Outcome::Empty {
            w.done = true;
        }
        Some(event(w, Method::PopBottom, None, r, inv, clock))
    };
    let resume = |w: &mut Worker, pc, o, node, old| {
        w.frame = Some((Frame::PopBottom { pc, o, node, old }, inv));
        None
    };
    match pc {
        0 => {
            let o = mem.official_bottom;
            if o == 0 {
                return finish(w, Outcome::Empty, clock);
            }
            mem.official_bottom = o - 1;
            resume(w, 1, o - 1, node, old)
        }
        1 => resume(w, 2, o, mem.entries[o as usize], old),
        2 => {
            let old = mem.age;
            if o > old.top as u64 {
                mem.private_bottom = o;
                return finish(w, Outcome::Node(node), clock);
            }
            resume(w, 3, o, node, old)
        }
        3 => {
            mem.official_bottom = 0;
            mem.private_bottom = 0;
            resume(w, 4, o, node, old)
        }
        4 => {
            if o == old.top as u64 && mem.age == old {
                mem.age = old.reset();
                return finish(w, Outcome::Node(node), clock);
            }
            resume(w, 5, o, node, old)
        }
        _ => {
            mem.age = old.reset();
            finish(w, Outcome::Empty, clock)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::checker::{check_relaxed, Verdict};

    #[test]
    fn every_node_removed_exactly_once() {
        for ep in random_histories(&InterleaveConfig::default(), 3, 500) {
            let mut r = ep.removed.clone();
            r.sort();
            assert_eq!(r, ep.pushed, "{}", ep.history.to_text());
            ep.history.validate().unwrap();
        }
    }

    #[test]
    fn model_histories_meet_relaxed_semantics() {
        for ep in random_histories(&InterleaveConfig::default(), 9, 300) {
            assert_eq!(check_relaxed(&ep.history), Verdict::Valid, "{}", ep.history.to_text());
        }
    }

    #[test]
    fn contention_produces_aborts() {
        let cfg = InterleaveConfig {
            thieves: 3,
            ..InterleaveConfig::default()
        };
        let aborts: usize = random_histories(&cfg, 5, 400)
            .iter()
            .map(|ep| ep.history.events.iter().filter(|e| e.is_abort()).count())
            .sum();
        assert!(aborts > 0);
    }
}
