//! A deterministic shared-memory simulator for Harris's lock-free list under
//! pluggable memory reclamation schemes, with checkers for access safety,
//! robustness, linearizability and phase discipline.

pub mod check;
pub mod list;
pub mod scenario;
pub mod sched;
pub mod sim;
pub mod smr;
pub mod trace;
