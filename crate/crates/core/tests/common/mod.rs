#![allow(dead_code)]

use era_lab::sched::{self, random_schedule, Workload};
use era_lab::sim::config::Policy;
use era_lab::sim::exec::{Execution, RunMeta};
use era_lab::smr::Scheme;

pub fn scheme(name: &str, threads: usize) -> Scheme {
    Scheme::from_parts(name, threads, None, None, None).unwrap()
}

/// A random run cut off after at most `steps` steps.
pub fn random_run(name: &str, seed: u64, threads: usize, ops: usize, keys: i64, steps: usize) -> Execution {
    random_run_with(scheme(name, threads), Policy::Recycle, seed, threads, ops, keys, steps)
}

pub fn random_run_with(
    scheme: Scheme,
    policy: Policy,
    seed: u64,
    threads: usize,
    ops: usize,
    keys: i64,
    steps: usize,
) -> Execution {
    let workload = Workload::random(seed, threads, ops, keys);
    let meta = RunMeta { policy, seed: Some(seed), ..RunMeta::new(scheme, threads, workload) };
    let order = random_schedule(seed ^ 0x5eed, steps, threads).unwrap();
    sched::run(meta, &order, steps)
}
