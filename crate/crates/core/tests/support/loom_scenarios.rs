//! loom scenarios for the lock-free split deque. Every scenario asserts
//! that each pushed node is returned exactly once across the owner and the
//! thieves.

use lcws::split_deque::atomic::{split_deque_on, Owner};
use lcws::split_deque::{BottomResult, TopResult};
use loom::thread;

use crate::loom_platform::LoomPlatform;

pub fn drain(owner: &Owner<u64, LoomPlatform>, got: &mut Vec<u64>) {
    loop {
        if let (lcws::PopResult::Node(n), _) = owner.pop() {
            got.push(n);
            continue;
        }
        match owner.pop_bottom().0 {
            BottomResult::Node(n) => got.push(n),
            BottomResult::Empty => break,
        }
    }
}

fn model(f: impl Fn() + Sync + Send + 'static) {
    let mut b = loom::model::Builder::new();
    b.preemption_bound = Some(3);
    b.check(f);
}

fn steal_all(s: lcws::split_deque::atomic::Stealer<u64, LoomPlatform>, tries: usize) -> Vec<u64> {
    let mut got = Vec::new();
    for _ in 0..tries {
        if let TopResult::Node(n) = s.pop_top().0 {
            got.push(n);
        }
    }
    got
}

fn assert_exactly_once(mut got: Vec<u64>, pushed: u64) {
    got.sort_unstable();
    assert_eq!(got, (1..=pushed).collect::<Vec<_>>());
}

pub fn last_node_race_between_owner_and_thief() {
    model(|| {
        let (owner, s) = split_deque_on::<u64, LoomPlatform>(4);
        owner.push(1);
        owner.update_bottom();
        let t = thread::spawn(move || steal_all(s, 1));
        let mut got = Vec::new();
        drain(&owner, &mut got);
        got.extend(t.join().unwrap());
        assert_exactly_once(got, 1);
    });
}

pub fn exposure_concurrent_with_steals() {
    model(|| {
        let (owner, s) = split_deque_on::<u64, LoomPlatform>(4);
        let t = thread::spawn(move || steal_all(s, 2));
        owner.push(1);
        owner.push(2);
        owner.update_bottom();
        owner.update_bottom();
        let mut got = Vec::new();
        drain(&owner, &mut got);
        got.extend(t.join().unwrap());
        assert_exactly_once(got, 2);
    });
}

pub fn two_thieves_on_one_public_node() {
    model(|| {
        let (owner, s) = split_deque_on::<u64, LoomPlatform>(4);
        owner.push(1);
        owner.update_bottom();
        let s2 = s.clone();
        let a = thread::spawn(move || steal_all(s, 1));
        let b = thread::spawn(move || steal_all(s2, 1));
        let mut got = a.join().unwrap();
        got.extend(b.join().unwrap());
        drain(&owner, &mut got);
        assert_exactly_once(got, 1);
    });
}

pub fn reuse_after_reset() {
    // A reset followed by new pushes must not let a stale thief take a node
    // twice or take an overwritten slot.
    model(|| {
        let (owner, s) = split_deque_on::<u64, LoomPlatform>(4);
        owner.push(1);
        owner.update_bottom();
        let t = thread::spawn(move || steal_all(s, 2));
        let mut got = Vec::new();
        drain(&owner, &mut got);
        owner.push(2);
        owner.update_bottom();
        drain(&owner, &mut got);
        got.extend(t.join().unwrap());
        assert_exactly_once(got, 2);
    });
}

pub fn private_pop_while_public_node_is_contested() {
    model(|| {
        let (owner, s) = split_deque_on::<u64, LoomPlatform>(4);
        owner.push(1);
        owner.update_bottom();
        owner.push(2);
        let t = thread::spawn(move || steal_all(s, 2));
        let mut got = Vec::new();
        drain(&owner, &mut got);
        owner.push(3);
        owner.update_bottom();
        drain(&owner, &mut got);
        got.extend(t.join().unwrap());
        assert_exactly_once(got, 3);
    });
}

#[allow(dead_code)]
pub const ALL: &[(&str, fn())] = &[
    ("last_node_race_between_owner_and_thief", last_node_race_between_owner_and_thief),
    ("exposure_concurrent_with_steals", exposure_concurrent_with_steals),
    ("two_thieves_on_one_public_node", two_thieves_on_one_public_node),
    ("reuse_after_reset", reuse_after_reset),
    ("private_pop_while_public_node_is_contested", private_pop_while_public_node_is_contested),
];
