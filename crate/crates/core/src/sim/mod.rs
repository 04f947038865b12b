//! The simulated machine: values, steps, configurations and executions.

pub mod config;
pub mod ctx;
pub mod exec;
pub mod step;
pub mod value;

pub use config::{Configuration, Fault, InitSpec, NodeState, Policy, Space};
pub use ctx::{Ctx, Tv};
pub use exec::{Execution, History, Observer, RunMeta};
pub use step::{Object, OpName, Site, Step, StepKind};
pub use value::{Addr, Field, Global, Loc, NodeId, PhysLoc, RefWord, StepIndex, Taint, ThreadId, Value, NULL_ADDR};
