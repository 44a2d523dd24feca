//! Recorded invocation histories of one split deque, and their text format.
//!
//! One event per line: `<worker> <method> <arg|-> <result> <invoke_ts> <response_ts>`.
//! Methods are spelled `push pop updateBottom popBottom popTop`. Results are
//! a node number, `RACE`, `EMPTY`, `ABORT`, or `-` for methods without one.
//! Blank lines and lines starting with `#` are ignored.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Push,
    Pop,
    UpdateBottom,
    PopBottom,
    PopTop,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Push,
        Method::Pop,
        Method::UpdateBottom,
        Method::PopBottom,
        Method::PopTop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Push => "push",
            Method::Pop => "pop",
            Method::UpdateBottom => "updateBottom",
            Method::PopBottom => "popBottom",
            Method::PopTop => "popTop",
        }
    }

    /// The four methods only the owner may call.
    pub fn is_owner_method(self) -> bool {
        self != Method::PopTop
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// What an invocation returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    /// `push` and `updateBottom`.
    Unit,
    Node(u64),
    Race,
    Empty,
    Abort,
}

impl Outcome {
    pub fn node(self) -> Option<u64> {
        match self {
            Outcome::Node(n) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Unit => f.write_str("-"),
            Outcome::Node(n) => write!(f, "{n}"),
            Outcome::Race => f.write_str("RACE"),
            Outcome::Empty => f.write_str("EMPTY"),
            Outcome::Abort => f.write_str("ABORT"),
        }
    }
}

impl FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "-" => Outcome::Unit,
            "RACE" => Outcome::Race,
            "EMPTY" => Outcome::Empty,
            "ABORT" => Outcome::Abort,
            n => Outcome::Node(n.parse().map_err(|_| format!("bad result `{n}`"))?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HistoryEvent {
    pub worker: u32,
    pub method: Method,
    pub arg: Option<u64>,
    pub result: Outcome,
    pub invoke_ts: u64,
    pub response_ts: u64,
}

impl HistoryEvent {
    pub fn overlaps(&self, other: &HistoryEvent) -> bool {
        self.invoke_ts < other.response_ts && other.invoke_ts < self.response_ts
    }

    pub fn is_abort(&self) -> bool {
        self.result == Outcome::Abort
    }
}

impl fmt::Display for HistoryEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.worker, self.method)?;
        match self.arg {
            Some(a) => write!(f, "{a}")?,
            None => f.write_str("-")?,
        }
        write!(f, " {} {} {}", self.result, self.invoke_ts, self.response_ts)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HistoryError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("event {index}: invocation must precede response")]
    BadInterval { index: usize },
    #[error("worker {worker} has overlapping events {first} and {second}")]
    WorkerOverlap {
        worker: u32,
        first: usize,
        second: usize,
    },
    #[error("event {index}: {msg}")]
    Malformed { index: usize, msg: String },
    #[error("io: {0}")]
    Io(String),
}

/// Events of one deque instance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    pub events: Vec<HistoryEvent>,
}

impl History {
    pub fn new(events: Vec<HistoryEvent>) -> Self {
        History { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks the shape invariants: well-formed intervals, arguments only on
    /// `push`, results matching the method, per-worker sequential events.
    pub fn validate(&self) -> Result<(), HistoryError> {
        for (index, e) in self.events.iter().enumerate() {
            if e.invoke_ts >= e.response_ts {
                return Err(HistoryError::BadInterval { index });
            }
            let ok = match e.method {
                Method::Push => e.arg.is_some() && e.result == Outcome::Unit,
                Method::UpdateBottom => e.arg.is_none() && e.result == Outcome::Unit,
                Method::Pop => e.arg.is_none() && matches!(e.result, Outcome::Node(_) | Outcome::Race),
                Method::PopBottom => {
                    e.arg.is_none() && matches!(e.result, Outcome::Node(_) | Outcome::Empty)
                }
                Method::PopTop => {
                    e.arg.is_none()
                        && matches!(e.result, Outcome::Node(_) | Outcome::Empty | Outcome::Abort)
                }
            };
            if !ok {
                return Err(HistoryError::Malformed {
                    index,
                    msg: format!("`{e}` is not a possible {} invocation", e.method),
                });
            }
        }
        let mut by_worker: Vec<usize> = (0..self.events.len()).collect();
        by_worker.sort_by_key(|&i| (self.events[i].worker, self.events[i].invoke_ts));
        for w in by_worker.windows(2) {
            let (a, b) = (&self.events[w[0]], &self.events[w[1]]);
            if a.worker == b.worker && a.overlaps(b) {
                return Err(HistoryError::WorkerOverlap {
                    worker: a.worker,
                    first: w[0],
                    second: w[1],
                });
            }
        }
        Ok(())
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.events {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut v = Vec::new();
        self.write_text(&mut v).expect("writing to a Vec cannot fail");
        String::from_utf8(v).expect("history text is ASCII")
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<History, HistoryError> {
        let mut events = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| HistoryError::Io(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse = |msg: String| HistoryError::Parse { line: i + 1, msg };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(parse(format!("expected 6 fields, found {}", f.len())));
            }
            let num = |s: &str, what: &str| {
                s.parse::<u64>()
                    .map_err(|_| parse(format!("bad {what} `{s}`")))
            };
            events.push(HistoryEvent {
                worker: u32::try_from(num(f[0], "worker")?)
                    .map_err(|_| parse("worker id out of range".into()))?,
                method: f[1].parse().map_err(parse)?,
                arg: match f[2] {
                    "-" => None,
                    a => Some(num(a, "argument")?),
                },
                result: f[3].parse().map_err(parse)?,
                invoke_ts: num(f[4], "invoke timestamp")?,
                response_ts: num(f[5], "response timestamp")?,
            });
        }
        Ok(History { events })
    }
}

/// Thread-safe history recorder. Timestamps come from one shared counter, so
/// every endpoint gets a distinct value.
#[derive(Debug, Default)]
pub struct Recorder {
    clock: AtomicU64,
    events: Mutex<Vec<HistoryEvent>>,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Draws a fresh timestamp.
    pub fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::SeqCst)
    }

    /// Runs `op` between two timestamps and records the event.
    pub fn record<T>(
        &self,
        worker: u32,
        method: Method,
        arg: Option<u64>,
        op: impl FnOnce() -> (T, Outcome),
    ) -> T {
        let invoke_ts = self.tick();
        let (value, result) = op();
        let response_ts = self.tick();
        self.events
            .lock()
            .expect("recorder poisoned")
            .push(HistoryEvent {
                worker,
                method,
                arg,
                result,
                invoke_ts,
                response_ts,
            });
        value
    }

    pub fn into_history(self) -> History {
        let mut events = self.events.into_inner().expect("recorder poisoned");
        events.sort_by_key(|e| e.invoke_ts);
        History { events }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(worker: u32, method: Method, arg: Option<u64>, result: Outcome, i: u64, r: u64) -> HistoryEvent {
        HistoryEvent {
            worker,
            method,
            arg,
            result,
            invoke_ts: i,
            response_ts: r,
        }
    }

    #[test]
    fn text_round_trip() {
        let h = History::new(vec![
            ev(0, Method::Push, Some(4), Outcome::Unit, 0, 1),
            ev(0, Method::UpdateBottom, None, Outcome::Unit, 2, 3),
            ev(1, Method::PopTop, None, Outcome::Abort, 2, 6),
            ev(0, Method::Pop, None, Outcome::Race, 4, 5),
            ev(0, Method::PopBottom, None, Outcome::Node(4), 7, 8),
        ]);
        let text = h.to_text();
        assert!(text.starts_with("0 push 4 - 0 1\n0 updateBottom - - 2 3\n1 popTop - ABORT 2 6\n"));
        assert_eq!(History::read_text(text.as_bytes()).unwrap(), h);
        h.validate().unwrap();
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = History::read_text("# c\n0 push 1 - 0 1\n0 shove 1 - 2 3\n".as_bytes()).unwrap_err();
        assert_eq!(
            err,
            HistoryError::Parse {
                line: 3,
                msg: "unknown method `shove`".into()
            }
        );
    }

    #[test]
    fn validation_catches_shape_errors() {
        let bad = History::new(vec![ev(0, Method::Push, None, Outcome::Unit, 0, 1)]);
        assert!(matches!(bad.validate(), Err(HistoryError::Malformed { .. })));
        let bad = History::new(vec![ev(0, Method::Pop, None, Outcome::Race, 3, 3)]);
        assert_eq!(bad.validate(), Err(HistoryError::BadInterval { index: 0 }));
        let bad = History::new(vec![
            ev(2, Method::PopTop, None, Outcome::Empty, 0, 5),
            ev(2, Method::PopTop, None, Outcome::Empty, 4, 6),
        ]);
        assert!(matches!(bad.validate(), Err(HistoryError::WorkerOverlap { worker: 2, .. })));
    }

    #[test]
    fn recorder_orders_by_invocation() {
        let r = Recorder::new();
        r.record(0, Method::Push, Some(1), || ((), Outcome::Unit));
        let got = r.record(1, Method::PopTop, None, || (7, Outcome::Empty));
        assert_eq!(got, 7);
        let h = r.into_history();
        assert_eq!(h.events[0].invoke_ts, 0);
        assert_eq!(h.events[1].response_ts, 3);
    }
}
