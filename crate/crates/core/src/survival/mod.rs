//! Cox partial likelihood with Breslow baselines, cause-specific and
//! subdistribution hazard models, and their static and landmark risk
//! predictions.

mod competing;
mod cox;

use serde::{Deserialize, Serialize};

use crate::data::{EpisodeTable, EventType};
use crate::error::{Error, Result};
use crate::landmark::ExpandedFineGrayDataset;

pub use competing::{
    fit_cause_specific, fit_fine_gray, fit_fg_separate, CauseComponent, CauseSpecificFit, CifMode,
    FineGrayFit,
};
pub use cox::{fit_cox, CoxFit, CoxOptions};

/// Right-continuous nondecreasing step function, 0 before the first jump.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepFunction {
    pub times: Vec<f64>,
    /// Cumulative value from `times[i]` onward.
    pub values: Vec<f64>,
}

impl StepFunction {
    /// Value at the largest jump time `<= t`.
    pub fn eval(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 0.0,
            k => self.values[k - 1],
        }
    }

    /// Jump sizes aligned with `times`.
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.values
            .iter()
            .map(|&v| {
                let d = v - prev;
                prev = v;
                d
            })
            .collect()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }
}

/// Counting-process rows `(start, stop]` with event indicator and case weight.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Intervals {
    pub start: Vec<f64>,
    pub stop: Vec<f64>,
    pub event: Vec<bool>,
    pub weight: Vec<f64>,
}

impl Intervals {
    pub fn len(&self) -> usize {
        self.stop.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stop.is_empty()
    }

    /// Rows `(landmark, eventtime]` with events of `cause`; other causes and
    /// censoring end follow-up without an event.
    pub fn for_cause(table: &EpisodeTable, cause: EventType) -> Self {
        let n = table.len();
        let mut iv = Intervals {
            start: Vec::with_capacity(n),
            stop: Vec::with_capacity(n),
            event: Vec::with_capacity(n),
            weight: vec![1.0; n],
        };
        for r in &table.records {
            iv.start.push(r.landmark as f64);
            iv.stop.push(r.eventtime);
            iv.event.push(r.event_type == cause);
        }
        iv
    }

    pub fn for_fine_gray(expanded: &ExpandedFineGrayDataset) -> Self {
        Intervals {
            start: expanded.rows.iter().map(|r| r.tstart).collect(),
            stop: expanded.rows.iter().map(|r| r.tstop).collect(),
            event: expanded.rows.iter().map(|r| r.is_event()).collect(),
            weight: expanded.rows.iter().map(|r| r.weight).collect(),
        }
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.start.len() != n || self.event.len() != n || self.weight.len() != n {
            return Err(Error::InvalidInput("interval columns differ in length".into()));
        }
        for i in 0..n {
            if !(self.start[i] < self.stop[i]) {
                return Err(Error::Validation {
                    row: i,
                    message: format!(
                        "interval start {} must precede stop {}",
                        self.start[i], self.stop[i]
                    ),
                });
            }
            if !(self.weight[i] > 0.0) || !self.weight[i].is_finite() {
                return Err(Error::Validation {
                    row: i,
                    message: format!("case weight {} must be positive", self.weight[i]),
                });
            }
        }
        Ok(())
    }
}

/// `1 - exp(-exp(eta) * (L(b) - L(a)))` for a baseline cumulative hazard `L`.
pub fn window_risk(baseline: &StepFunction, eta: f64, a: f64, b: f64) -> f64 {
    let d = (baseline.eval(b) - baseline.eval(a)).max(0.0);
    -(-(eta.exp() * d)).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_function_is_right_continuous() {
        let f = StepFunction {
            times: vec![1.0, 2.0, 3.0],
            values: vec![1.0 / 3.0, 5.0 / 6.0, 11.0 / 6.0],
        };
        assert_eq!(f.eval(0.999), 0.0);
        assert_eq!(f.eval(1.0), 1.0 / 3.0);
        assert_eq!(f.eval(2.5), 5.0 / 6.0);
        assert_eq!(f.eval(100.0), 11.0 / 6.0);
        let inc = f.increments();
        assert!((inc[1] - 0.5).abs() < 1e-15 && (inc[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn window_risk_formulas() {
        let f = StepFunction {
            times: vec![7.0],
            values: vec![0.3],
        };
        assert!((window_risk(&f, 0.0, 0.0, 7.0) - (1.0 - (-0.3f64).exp())).abs() < 1e-15);
        assert_eq!(window_risk(&f, 2.0, 8.0, 15.0), 0.0);
        assert!(window_risk(&f, 0.0, 0.0, 6.0) <= window_risk(&f, 0.0, 0.0, 7.0));
    }

    #[test]
    fn invalid_intervals() {
        let iv = Intervals {
            start: vec![1.0],
            stop: vec![1.0],
            event: vec![true],
            weight: vec![1.0],
        };
        assert!(matches!(iv.validate(), Err(Error::Validation { row: 0, .. })));
    }
}
