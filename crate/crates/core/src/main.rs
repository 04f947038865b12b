use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use era_lab::scenario::{self, FuzzConfig, SchemeSpec};
use era_lab::sched::{self, Schedule, Workload};
use era_lab::sim::config::Policy;
use era_lab::sim::exec::{Execution, RunMeta};
use era_lab::trace;

/// Simulate Harris's list under a reclamation scheme and check the run.
///
/// Exit codes: 0 clean, 2 expected violation found, 3 unexpected verdict,
/// 1 usage or input error.
#[derive(Parser)]
#[command(name = "era-lab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one of the two scripted executions.
    Scenario {
        #[arg(value_enum)]
        which: Which,
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Number of keys T2 cycles through (figure1).
        #[arg(long, default_value_t = 64)]
        n: i64,
        #[arg(long, default_value_t = 2)]
        threads: usize,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Random workloads and interleavings over a range of seeds.
    Fuzz {
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Seed range, `a..b`.
        #[arg(long, default_value = "0..100", value_parser = parse_range)]
        seeds: Range<u64>,
        #[arg(long, default_value_t = 2)]
        threads: usize,
        #[arg(long, default_value_t = 10)]
        ops: usize,
        /// Keys are drawn from 1..=keys.
        #[arg(long, default_value_t = 8)]
        keys: i64,
    },
    /// Re-check an emitted trace.
    Check {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Run a workload file under a schedule file.
    Run {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        /// Comma-separated keys present before the run.
        #[arg(long, value_delimiter = ',')]
        prefill: Vec<i64>,
        /// Step cap.
        #[arg(long, default_value_t = 1_000_000)]
        limit: usize,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Figure1,
    Figure2,
}

#[derive(Args)]
struct SchemeArgs {
    /// none, ebr, hp or ibr.
    #[arg(long, default_value = "ebr")]
    scheme: String,
    #[arg(long)]
    hp_k: Option<u8>,
    #[arg(long)]
    hp_r: Option<usize>,
    #[arg(long)]
    ibr_a: Option<u64>,
    /// recycle or release.
    #[arg(long, default_value = "recycle")]
    policy: Policy,
}

impl SchemeArgs {
    fn spec(&self) -> SchemeSpec {
        SchemeSpec { name: self.scheme.clone(), hp_k: self.hp_k, hp_r: self.hp_r, ibr_a: self.ibr_a }
    }
}

fn parse_range(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or("expected a..b")?;
    let a = a.parse().map_err(|_| format!("bad start `{a}`"))?;
    let b = b.parse().map_err(|_| format!("bad end `{b}`"))?;
    Ok(a..b)
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn report(exec: &Execution, trace_path: Option<&Path>) -> Result<i32, String> {
    let r = scenario::analyze(exec);
    print!("{r}");
    if let Some(p) = trace_path {
        fs::write(p, trace::emit(exec)).map_err(|e| format!("{}: {e}", p.display()))?;
        println!("trace: {}", p.display());
    }
    Ok(r.exit_code())
}

fn go(cli: Cli) -> Result<i32, String> {
    match cli.cmd {
        Cmd::Scenario { which, scheme, n, threads, trace } => {
            let exec = match which {
                Which::Figure1 => scenario::figure1(scheme.spec().build(threads)?, n, threads, scheme.policy)?,
                Which::Figure2 => {
                    // One retired node is enough to trigger a scan here.
                    let spec = SchemeSpec { hp_r: scheme.hp_r.or(Some(1)), ..scheme.spec() };
                    scenario::figure2(spec.build(4)?, scheme.policy)?
                }
            };
            report(&exec, trace.as_deref())
        }
        Cmd::Fuzz { scheme, seeds, threads, ops, keys } => {
            let cfg = FuzzConfig { policy: scheme.policy, ..FuzzConfig::new(scheme.spec(), threads, ops, keys) };
            let s = scenario::fuzz(&cfg, seeds)?;
            print!("{s}");
            let expect_clean = matches!(scheme.scheme.as_str(), "none" | "ebr");
            Ok(match (s.runs_with_violations, expect_clean) {
                (0, _) => 0,
                (_, false) => 2,
                _ => 3,
            })
        }
        Cmd::Check { trace } => {
            let r = scenario::replay(&read(&trace)?).map_err(|e| e.to_string())?;
            print!("{r}");
            Ok(r.exit_code())
        }
        Cmd::Run { scheme, workload, schedule, prefill, limit, trace } => {
            let workload: Workload = read(&workload)?.parse()?;
            let threads = workload.threads.len();
            let schedule: Schedule = read(&schedule)?.parse()?;
            let meta = RunMeta {
                policy: scheme.policy,
                prefill,
                seed: match schedule {
                    Schedule::Random { seed, .. } => Some(seed),
                    _ => None,
                },
                ..RunMeta::new(scheme.spec().build(threads)?, threads, workload)
            };
            let order = schedule.threads(threads)?;
            if let Some(t) = order.iter().find(|t| t.index() >= threads) {
                return Err(format!("schedule names {t} but the workload has {threads} threads"));
            }
            report(&sched::run(meta, &order, limit), trace.as_deref())
        }
    }
}

fn main() -> ExitCode {
    // clap's own usage errors exit with 2, which means something else here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match go(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("era-lab: {e}");
            ExitCode::from(1)
        }
    }
}
