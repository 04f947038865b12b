//! Per-configuration node accounting and bound checks.

use super::violation::{Violation, ViolationKind};
use crate::sim::config::{Configuration, Fault};
use crate::sim::exec::{Execution, Observer};
use crate::sim::step::{Step, StepKind};
use crate::sim::value::{StepIndex, ThreadId};

/// Counts for `C_0 ..= C_n`. Index `i` of every vector is configuration `C_i`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RobustnessSeries {
    pub threads: usize,
    pub active: Vec<usize>,
    pub max_active: Vec<usize>,
    pub retired: Vec<usize>,
    pub reclaimed: Vec<usize>,
    pub minted: Vec<usize>,
}

impl RobustnessSeries {
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn peak_retired(&self) -> usize {
        self.retired.iter().copied().max().unwrap_or(0)
    }

    pub fn peak_active(&self) -> usize {
        self.max_active.last().copied().unwrap_or(0)
    }

    fn push(&mut self, cfg: &Configuration, reclaimed: usize) {
        let (active, retired) = cfg.count_states();
        let prev = self.max_active.last().copied().unwrap_or(0);
        self.active.push(active);
        self.max_active.push(prev.max(active));
        self.retired.push(retired);
        self.reclaimed.push(reclaimed);
        self.minted.push(cfg.minted() as usize);
    }
}

struct Accountant {
    series: RobustnessSeries,
    reclaimed: usize,
}

impl Observer for Accountant {
    fn initial(&mut self, cfg: &Configuration) {
        self.series.push(cfg, 0);
    }

    fn after(&mut self, cfg: &Configuration, step: &Step, faults: &[Fault]) {
        let s = &mut self.series;
        let last = s.active.len() - 1;
        let (mut active, mut retired) = (s.active[last], s.retired[last]);
        if !faults.is_empty() {
            (active, retired) = cfg.count_states();
        } else {
            match step.kind {
                StepKind::Alloc { .. } => active += 1,
                StepKind::Retire { .. } => {
                    active -= 1;
                    retired += 1;
                }
                StepKind::Reclaim { .. } => {
                    retired -= 1;
                    self.reclaimed += 1;
                }
                _ => {}
            }
        }
        let prev_max = s.max_active[last];
        s.active.push(active);
        s.max_active.push(prev_max.max(active));
        s.retired.push(retired);
        s.reclaimed.push(self.reclaimed);
        s.minted.push(cfg.minted() as usize);
    }
}

/// Active counts include the two sentinels.
pub fn robustness_series(exec: &Execution) -> RobustnessSeries {
    let mut acc =
        Accountant { series: RobustnessSeries { threads: exec.meta.threads, ..Default::default() }, reclaimed: 0 };
    exec.replay(&mut acc);
    acc.series
}

/// Shape of the bound checked against `retired(i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    /// `retired(i) <= c · N`.
    Constant(usize),
    /// `retired(i) <= max_active(i)^d · N`.
    Weak(u32),
}

impl Bound {
    pub fn limit(&self, max_active: usize, threads: usize) -> usize {
        match *self {
            Bound::Constant(c) => c.saturating_mul(threads),
            Bound::Weak(d) => max_active.saturating_pow(d).saturating_mul(threads),
        }
    }
}

/// First configuration that breaks `bound`, as a violation.
pub fn check_bound(series: &RobustnessSeries, bound: Bound) -> Result<(), Violation> {
    for i in 0..series.len() {
        let limit = bound.limit(series.max_active[i], series.threads);
        if series.retired[i] > limit {
            return Err(Violation::new(
                ViolationKind::BoundExceeded,
                i as StepIndex,
                ThreadId(0),
                format!("retired({i}) = {} exceeds {limit} for {bound:?}", series.retired[i]),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(retired: Vec<usize>, max_active: Vec<usize>) -> RobustnessSeries {
        RobustnessSeries {
            threads: 2,
            active: max_active.clone(),
            max_active,
            reclaimed: vec![0; retired.len()],
            minted: vec![0; retired.len()],
            retired,
        }
    }

    #[test]
    fn constant_bound_is_c_times_n() {
        let s = series(vec![0, 4, 6], vec![2, 3, 3]);
        assert!(check_bound(&s, Bound::Constant(3)).is_ok());
        let e = check_bound(&s, Bound::Constant(2)).unwrap_err();
        assert_eq!(e.step, 2);
    }

    #[test]
    fn weak_bound_grows_with_max_active() {
        let s = series(vec![0, 17, 19], vec![2, 3, 3]);
        assert!(check_bound(&s, Bound::Weak(2)).is_err());
        assert!(check_bound(&s, Bound::Weak(3)).is_ok());
    }
}
