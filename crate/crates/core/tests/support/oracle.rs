//! Brute-force reference for the relaxed-semantics checker.
//!
//! Enumerates every permutation of the non-aborting invocations and every
//! assignment of a top-removing invocation to each aborted `popTop`, then
//! tests placement with a pairwise condition instead of a greedy pass.
//! Only usable on small histories.

use lcws::semantics::{is_good, History, HistoryEvent, Method, Outcome};
use lcws::split_deque::{BottomResult, PopResult, ReferenceDeque, TopResult};

/// Replays `e`; `None` on a mismatch, otherwise whether it took the
/// topmost node in a way a thief's CAS can observe.
fn step(d: &mut ReferenceDeque<u64>, e: &HistoryEvent) -> Option<bool> {
    let (got, top) = match e.method {
        Method::Push => {
            d.push(e.arg?);
            (Outcome::Unit, false)
        }
        Method::UpdateBottom => {
            d.update_bottom();
            (Outcome::Unit, false)
        }
        Method::Pop => match d.pop() {
            PopResult::Node(n) => (Outcome::Node(n), false),
            PopResult::Race => (Outcome::Race, false),
        },
        Method::PopBottom => {
            let single = d.public_len() == 1;
            match d.pop_bottom()? {
                BottomResult::Node(n) => (Outcome::Node(n), single),
                BottomResult::Empty => (Outcome::Empty, false),
            }
        }
        Method::PopTop => match d.pop_top() {
            TopResult::Node(n) => (Outcome::Node(n), true),
            TopResult::Empty => (Outcome::Empty, false),
            TopResult::Abort => (Outcome::Abort, false),
        },
    };
    (got == e.result).then_some(top)
}

/// Strictly increasing real points inside closed intervals exist for the
/// given order iff every interval is non-empty and each earlier lower end
/// lies strictly below each later upper end.
fn placeable(iv: &[(u64, u64)], order: &[usize]) -> bool {
    order.iter().enumerate().all(|(k, &b)| {
        iv[b].0 <= iv[b].1 && order[..k].iter().all(|&a| iv[a].0 < iv[b].1)
    })
}

fn assignments(aborts: &[HistoryEvent], removers: &[usize], iv: &[(u64, u64)], order: &[usize]) -> bool {
    let Some((x, rest)) = aborts.split_first() else {
        return placeable(iv, order);
    };
    removers.iter().any(|&r| {
        let mut next = iv.to_vec();
        next[r] = (iv[r].0.max(x.invoke_ts), iv[r].1.min(x.response_ts));
        assignments(rest, removers, &next, order)
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

pub fn brute_force_valid(h: &History) -> bool {
    if h.validate().is_err() || !is_good(h) {
        return false;
    }
    let (aborts, live): (Vec<HistoryEvent>, Vec<HistoryEvent>) =
        h.events.iter().partition(|e| e.is_abort());
    assert!(live.len() <= 9, "brute force is limited to tiny histories");
    let iv: Vec<(u64, u64)> = live.iter().map(|e| (e.invoke_ts, e.response_ts)).collect();
    permutations(live.len()).into_iter().any(|order| {
        let mut d = ReferenceDeque::new();
        let mut removers = Vec::new();
        for &i in &order {
            match step(&mut d, &live[i]) {
                None => return false,
                Some(true) => removers.push(i),
                Some(false) => {}
            }
        }
        assignments(&aborts, &removers, &iv, &order)
    })
}

/// Small histories for comparing the checker with [`brute_force_valid`]:
/// simulated interleavings of at most `max_events` events, half of them
/// with one result perturbed.
pub fn small_histories(seed: u64, count: usize, max_events: usize) -> Vec<History> {
    use lcws::semantics::interleave::{random_episode, InterleaveConfig};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let cfg = InterleaveConfig {
            thieves: rng.random_range(1..=2),
            max_pushes: 2,
            steals_per_thief: rng.random_range(1..=2),
            max_non_aborting: max_events,
        };
        let mut h = random_episode(&cfg, &mut rng).history;
        if h.events.len() > max_events {
            continue;
        }
        if out.len() % 2 == 1 {
            let i = rng.random_range(0..h.events.len());
            let e = &mut h.events[i];
            e.result = match (e.method, e.result) {
                (Method::Push | Method::UpdateBottom, _) => Outcome::Node(1),
                (Method::Pop, Outcome::Race) => Outcome::Node(rng.random_range(1..=2)),
                (Method::Pop, _) => Outcome::Race,
                (_, Outcome::Node(n)) => {
                    [Outcome::Empty, Outcome::Abort, Outcome::Node(3 - n)][rng.random_range(0..3)]
                }
                (Method::PopTop, Outcome::Empty) => Outcome::Abort,
                (_, _) => Outcome::Node(rng.random_range(1..=2)),
            };
        }
        out.push(h);
    }
    out
}
