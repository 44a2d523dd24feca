//! `lcws`: generate dags, simulate schedulers, run the threaded executor and
//! verification suites.
//!
//! Exit status: 0 on success, 1 when a verification fails, 2 on usage or
//! input errors.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lcws::dag::{CompDag, DagKind, DagSpec, DEFAULT_LAMBDA};
use lcws::executor::forkjoin::{fib, tree_sum, ForkJoinPool};
use lcws::executor::{execute_dag, expected_checksum, ExecutorConfig, Mode};
use lcws::potential::{check_lemmas, check_phase_decrease, Report};
use lcws::semantics::{check_relaxed, History, Verdict};
use lcws::sim::{self, mean_rows, SchedulerKind, SimConfig, SweepRow, SweepSpec, TraceLevel, CSV_HEADER};

#[derive(Parser)]
#[command(name = "lcws", version, about = "Low-cost work stealing laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dag and write it in the text format.
    GenDag(GenDag),
    /// Simulate one configuration and print one CSV row.
    Run(RunArgs),
    /// Sweep fork depths at a fixed processor count.
    SweepSpan(SweepSpan),
    /// Sweep processor counts at a fixed depth.
    SweepProcs(SweepProcs),
    /// Run both schedulers and print their total-sync ratio.
    Compare(Compare),
    /// Run the threaded executor.
    Exec(Exec),
    /// Run a verification suite.
    Verify(Verify),
    /// Check a recorded deque history against the relaxed semantics.
    CheckHistory(CheckHistory),
}

#[derive(Args, Clone)]
struct DagArgs {
    #[arg(long, value_enum, default_value = "regular")]
    kind: KindArg,
    /// Fork-depth parameter of the generator.
    #[arg(long, default_value_t = 10)]
    depth: u32,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
}

#[derive(Args, Clone)]
struct SweepDagArgs {
    #[arg(long, value_enum, default_value = "regular")]
    kind: KindArg,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Regular,
    Irregular,
}

impl From<KindArg> for DagKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Regular => DagKind::Regular,
            KindArg::Irregular => DagKind::Irregular,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchedArg {
    Lcws,
    Cws,
}

impl From<SchedArg> for SchedulerKind {
    fn from(s: SchedArg) -> Self {
        match s {
            SchedArg::Lcws => SchedulerKind::Lcws,
            SchedArg::Cws => SchedulerKind::Cws,
        }
    }
}

#[derive(Args)]
struct SeedArgs {
    /// First seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
}

impl SeedArgs {
    fn list(&self) -> Vec<u64> {
        (0..self.seeds).map(|i| self.seed + i).collect()
    }
}

#[derive(Args)]
struct GenDag {
    #[command(flatten)]
    dag: DagArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    dag: DagArgs,
    #[arg(long, default_value_t = 64)]
    procs: usize,
    #[arg(long, value_enum, default_value = "lcws")]
    scheduler: SchedArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write per-step counters (step,busy,idle,cas,mfence,notifications).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepSpan {
    #[command(flatten)]
    dag: SweepDagArgs,
    /// Comma-separated `a:b:step` ranges (inclusive) or single depths.
    #[arg(long)]
    depths: Vec<u32>,
    #[arg(long, default_value_t = 64)]
    procs: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "lcws,cws")]
    schedulers: Vec<SchedArg>,
    #[command(flatten)]
    seeds: SeedArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepProcs {
    #[command(flatten)]
    dag: SweepDagArgs,
    #[arg(long, default_value_t = 20)]
    depth: u32,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    procs_list: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "lcws,cws")]
    schedulers: Vec<SchedArg>,
    #[command(flatten)]
    seeds: SeedArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Compare {
    #[command(flatten)]
    dag: SweepDagArgs,
    #[arg(long, default_value = "15")]
    depths: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "64")]
    procs_list: Vec<usize>,
    #[command(flatten)]
    seeds: SeedArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Workload {
    Dag,
    Fib,
    TreeSum,
}

#[derive(Args)]
struct Exec {
    #[command(flatten)]
    dag: DagArgs,
    #[arg(long, value_enum, default_value = "dag")]
    workload: Workload,
    /// Argument of fib, or log2 of the tree-sum leaf count.
    #[arg(long, default_value_t = 25)]
    n: u32,
    #[arg(long, default_value_t = 4)]
    procs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Disable idle backoff.
    #[arg(long)]
    measurement: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Lemmas,
    Phases,
    Executor,
    All,
}

#[derive(Args)]
struct Verify {
    #[arg(long, value_enum, default_value = "lemmas")]
    suite: Suite,
    #[command(flatten)]
    dag: DagArgs,
    #[arg(long, default_value_t = 4)]
    procs: usize,
    #[command(flatten)]
    seeds: SeedArgs,
}

#[derive(Args)]
struct CheckHistory {
    file: PathBuf,
}

/// Expands `a:b:step` arguments before clap sees them.
fn expand_ranges(args: Vec<String>) -> Result<Vec<String>, String> {
    let mut out = Vec::with_capacity(args.len());
    let mut it = args.into_iter().peekable();
    while let Some(a) = it.next() {
        let (flag, inline) = match a.split_once('=') {
            Some(("--depths", v)) => (true, Some(v.to_string())),
            _ => (a == "--depths", None),
        };
        if !flag {
            out.push(a);
            continue;
        }
        let v = match inline {
            Some(v) => v,
            None => match it.next() {
                Some(v) => v,
                None => {
                    out.push(a);
                    continue;
                }
            },
        };
        for d in range_values(&v)? {
            out.push("--depths".into());
            out.push(d.to_string());
        }
    }
    Ok(out)
}

/// Comma-separated list of `a:b:step`, `a:b` or single depths.
fn range_values(v: &str) -> Result<Vec<u32>, String> {
    let mut out = Vec::new();
    for item in v.split(',') {
        out.extend(range_item(item)?);
    }
    Ok(out)
}

fn range_item(v: &str) -> Result<Vec<u32>, String> {
    let parts: Vec<&str> = v.split(':').collect();
    let num = |s: &str| s.parse::<u32>().map_err(|_| format!("invalid depth range `{v}`"));
    Ok(match parts.as_slice() {
        [a] => vec![num(a)?],
        [a, b] => (num(a)?..=num(b)?).collect(),
        [a, b, s] => {
            let step = num(s)?;
            if step == 0 {
                return Err(format!("invalid depth range `{v}`: step is 0"));
            }
            (num(a)?..=num(b)?).step_by(step as usize).collect()
        }
        _ => return Err(format!("invalid depth range `{v}`")),
    })
}

/// Error that decides the exit status.
enum Failure {
    Usage(String),
    Verification(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn build_dag(d: &DagArgs, seed: u64) -> Result<CompDag, Failure> {
    let spec = DagSpec {
        kind: d.kind.into(),
        depth: d.depth,
        lambda: d.lambda,
        seed,
    };
    Ok(spec.build()?)
}

fn write_rows(out: &mut dyn Write, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv())?;
    }
    Ok(())
}

fn gen_dag(a: GenDag) -> Outcome {
    let dag = build_dag(&a.dag, a.seed)?;
    let mut out = output(&a.out)?;
    dag.write_text(&mut out)?;
    out.flush()?;
    Ok(())
}

fn run(a: RunArgs) -> Outcome {
    let dag = build_dag(&a.dag, a.seed)?;
    let level = if a.trace.is_some() { TraceLevel::Counters } else { TraceLevel::None };
    let cfg = SimConfig::new(&dag, a.procs, a.scheduler.into(), a.seed).with_trace(level);
    let res = sim::run(&cfg)?;
    let kind: DagKind = a.dag.kind.into();
    let row = SweepRow {
        scheduler: a.scheduler.into(),
        kind,
        depth: a.dag.depth,
        lambda: (kind == DagKind::Irregular).then_some(a.dag.lambda),
        procs: a.procs,
        seed: a.seed,
        t1: dag.t1(),
        t_inf: dag.t_inf(),
        metrics: res.metrics,
    };
    let mut out = output(&a.out)?;
    write_rows(&mut out, &[row])?;
    out.flush()?;
    if let (Some(path), Some(trace)) = (&a.trace, res.trace) {
        let mut t = BufWriter::new(File::create(path)?);
        writeln!(t, "step,busy,idle,cas,mfence,notifications")?;
        for (s, c) in trace.counters.iter().enumerate() {
            writeln!(
                t,
                "{s},{},{},{},{},{}",
                c.busy, c.idle, c.sync.cas_attempts, c.sync.fences, c.notifications
            )?;
        }
        t.flush()?;
    }
    Ok(())
}

fn run_sweep(spec: &SweepSpec, path: &Option<PathBuf>) -> Result<Vec<SweepRow>, Failure> {
    let mut out = output(path)?;
    writeln!(out, "{CSV_HEADER}")?;
    let mut io_err = None;
    let rows = sim::sweep_with(spec, |r| {
        if io_err.is_none() {
            io_err = writeln!(out, "{}", r.to_csv()).err();
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    out.flush()?;
    Ok(rows)
}

fn sweep_span(a: SweepSpan) -> Outcome {
    if a.depths.is_empty() {
        return Err(Failure::Usage("--depths is required".into()));
    }
    let spec = SweepSpec {
        kind: a.dag.kind.into(),
        depths: a.depths,
        lambda: a.dag.lambda,
        procs: vec![a.procs],
        schedulers: a.schedulers.into_iter().map(Into::into).collect(),
        seeds: a.seeds.list(),
    };
    run_sweep(&spec, &a.out).map(drop)
}

fn sweep_procs(a: SweepProcs) -> Outcome {
    let spec = SweepSpec {
        kind: a.dag.kind.into(),
        depths: vec![a.depth],
        lambda: a.dag.lambda,
        procs: a.procs_list,
        schedulers: a.schedulers.into_iter().map(Into::into).collect(),
        seeds: a.seeds.list(),
    };
    run_sweep(&spec, &a.out).map(drop)
}

fn compare(a: Compare) -> Outcome {
    let spec = SweepSpec {
        kind: a.dag.kind.into(),
        depths: a.depths,
        lambda: a.dag.lambda,
        procs: a.procs_list,
        schedulers: vec![SchedulerKind::Lcws, SchedulerKind::Cws],
        seeds: a.seeds.list(),
    };
    let rows = run_sweep(&spec, &a.out)?;
    let means = mean_rows(&rows);
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "# depth,procs,lcws_total,cws_total,lcws_over_cws")?;
    for l in means.iter().filter(|m| m.scheduler == SchedulerKind::Lcws) {
        let c = means
            .iter()
            .find(|m| m.scheduler == SchedulerKind::Cws && m.depth == l.depth && m.procs == l.procs)
            .expect("both schedulers ran every configuration");
        let ratio = if c.total_sync > 0.0 { l.total_sync / c.total_sync } else { f64::NAN };
        writeln!(
            stdout,
            "# {},{},{:.1},{:.1},{:.6}",
            l.depth, l.procs, l.total_sync, c.total_sync, ratio
        )?;
    }
    Ok(())
}

fn exec(a: Exec) -> Outcome {
    let mode = if a.measurement { Mode::Measurement } else { Mode::Library };
    let mut out = io::stdout().lock();
    match a.workload {
        Workload::Dag => {
            let dag = build_dag(&a.dag, a.seed)?;
            let cfg = ExecutorConfig {
                mode,
                seed: a.seed,
                ..ExecutorConfig::new(a.procs)
            };
            let r = execute_dag(&dag, &cfg)?;
            let s = r.sync_totals();
            writeln!(out, "nodes_executed={} t1={}", r.nodes_executed, dag.t1())?;
            writeln!(out, "checksum={:016x} expected={:016x}", r.checksum, expected_checksum(&dag))?;
            writeln!(out, "cas={} mfence={} notifications={}", s.cas_attempts, s.fences, r.notifications)?;
            writeln!(out, "wall_time_ms={:.3}", r.wall_time.as_secs_f64() * 1e3)?;
            if r.nodes_executed != dag.t1() || r.checksum != expected_checksum(&dag) {
                return Err(Failure::Verification("execution did not cover the dag exactly once".into()));
            }
        }
        Workload::Fib | Workload::TreeSum => {
            let pool = ForkJoinPool::new(a.procs.max(1)).with_mode(mode).with_seed(a.seed);
            let (value, expect, rep) = if matches!(a.workload, Workload::Fib) {
                let (v, rep) = pool.run(|w| fib(w, a.n as u64));
                (v, fib_seq(a.n as u64), rep)
            } else {
                let values: Vec<u64> = (0..1u64 << a.n.min(30)).collect();
                let expect = values.iter().sum();
                let (v, rep) = pool.run(|w| tree_sum(w, &values));
                (v, expect, rep)
            };
            let s = rep.sync_totals();
            writeln!(out, "result={value} expected={expect}")?;
            writeln!(out, "cas={} mfence={} notifications={}", s.cas_attempts, s.fences, rep.notifications())?;
            writeln!(out, "wall_time_ms={:.3}", rep.wall_time.as_secs_f64() * 1e3)?;
            if value != expect {
                return Err(Failure::Verification("result differs from the sequential oracle".into()));
            }
        }
    }
    Ok(())
}

fn fib_seq(n: u64) -> u64 {
    let (mut a, mut b) = (0u64, 1u64);
    for _ in 0..n {
        (a, b) = (b, a + b);
    }
    a
}

fn verify(a: Verify) -> Outcome {
    let mut out = io::stdout().lock();
    let mut failed = Vec::new();
    let lemmas = matches!(a.suite, Suite::Lemmas | Suite::All);
    let phases = matches!(a.suite, Suite::Phases | Suite::All);
    if lemmas || phases {
        let mut total = Report::default();
        let (mut ph_ok, mut ph_n) = (0usize, 0usize);
        for seed in a.seeds.list() {
            let dag = build_dag(&a.dag, seed)?;
            let res = sim::run(&SimConfig::new(&dag, a.procs, SchedulerKind::Lcws, seed).with_trace(TraceLevel::Full))?;
            let trace = res.trace.expect("full trace requested");
            if lemmas {
                total.merge(check_lemmas(&trace)?);
            }
            if phases && a.procs >= 2 {
                let r = check_phase_decrease(&trace)?;
                ph_ok += r.successes();
                ph_n += r.phases.len();
            }
        }
        if lemmas {
            writeln!(out, "lemmas: {} checks, {} violations", total.checked, total.violations.len())?;
            if !total.ok() {
                write!(out, "{}", total.to_csv())?;
                failed.push("lemmas");
            }
        }
        if phases {
            let frac = if ph_n > 0 { ph_ok as f64 / ph_n as f64 } else { 1.0 };
            writeln!(out, "phases: {ph_ok} of {ph_n} successful ({frac:.3})")?;
            if ph_n > 0 && frac <= 0.25 {
                failed.push("phases");
            }
        }
    }
    if matches!(a.suite, Suite::Executor | Suite::All) {
        for seed in a.seeds.list() {
            let dag = build_dag(&a.dag, seed)?;
            let cfg = ExecutorConfig {
                seed,
                ..ExecutorConfig::new(a.procs)
            };
            let r = execute_dag(&dag, &cfg)?;
            let ok = r.nodes_executed == dag.t1() && r.checksum == expected_checksum(&dag);
            writeln!(out, "executor seed {seed}: {} of {} nodes, {}", r.nodes_executed, dag.t1(), if ok { "ok" } else { "MISMATCH" })?;
            if !ok {
                failed.push("executor");
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("failed: {}", failed.join(", "))))
    }
}

fn check_history(a: CheckHistory) -> Outcome {
    let h = History::read_text(BufReader::new(File::open(&a.file)?))?;
    let v = check_relaxed(&h);
    println!("{v}");
    match v {
        Verdict::Valid => Ok(()),
        _ => Err(Failure::Verification(format!("{} is not accepted", a.file.display()))),
    }
}

fn main() -> ExitCode {
    let args = match expand_ranges(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}\n\nUsage: lcws <COMMAND> [OPTIONS]; see `lcws --help`");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenDag(a) => gen_dag(a),
        Command::Run(a) => run(a),
        Command::SweepSpan(a) => sweep_span(a),
        Command::SweepProcs(a) => sweep_procs(a),
        Command::Compare(a) => compare(a),
        Command::Exec(a) => exec(a),
        Command::Verify(a) => verify(a),
        Command::CheckHistory(a) => check_history(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nUsage: lcws <COMMAND> [OPTIONS]; see `lcws --help`");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_expand_inclusively() {
        assert_eq!(range_values("0:25:5").unwrap(), vec![0, 5, 10, 15, 20, 25]);
        assert_eq!(range_values("3:5").unwrap(), vec![3, 4, 5]);
        assert_eq!(range_values("7").unwrap(), vec![7]);
        assert!(range_values("1:2:0").is_err());
        assert!(range_values("a:b").is_err());
        assert_eq!(range_values("15,20:30:5").unwrap(), vec![15, 20, 25, 30]);
    }

    #[test]
    fn depths_flag_is_rewritten() {
        let a = expand_ranges(vec!["lcws".into(), "--depths=1:3".into(), "--x".into()]).unwrap();
        assert_eq!(a, ["lcws", "--depths", "1", "--depths", "2", "--depths", "3", "--x"]);
    }

    #[test]
    fn fib_oracle() {
        assert_eq!(fib_seq(25), 75025);
    }
}
