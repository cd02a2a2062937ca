//! Cyclic two-stage training clock.
//!
//! Training runs for `ms` steps split into cycles of `2 * us` steps:
//! Stage I (accumulate while training) then Stage II (train the selected
//! subnetwork). Stage membership of step t is the parity of `ceil(t / us)`,
//! and the first step of each Stage II is the mask-refresh step. When `ms`
//! is not a multiple of the cycle length the trailing steps simply run out
//! the clock: a trailing partial Stage I accumulates without ever being
//! consumed, a trailing partial Stage II keeps its last mask.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    I,
    II,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::I => write!(f, "I"),
            Stage::II => write!(f, "II"),
        }
    }
}

/// What happened on entering one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepEvents {
    pub t: usize,
    pub stage: Stage,
    /// Set when this step opens a new cycle (accumulators reset here).
    pub entered_cycle: Option<usize>,
    /// Set when this step is the first of a stage.
    pub entered_stage: Option<Stage>,
    /// True on the first step of every Stage II: derive the mask, clear the
    /// accumulators, then do the masked update.
    pub refresh_mask: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSchedule {
    ms: usize,
    ur: f64,
    us: usize,
    n: usize,
    t: usize,
}

impl StageSchedule {
    /// `us = max(1, round(ms * ur))`, `n = floor(ms / (2 * us))`.
    pub fn new(ms: usize, ur: f64) -> Result<Self> {
        if ms == 0 {
            return Err(Error::Config("total steps ms must be >= 1".into()));
        }
        if !(ur > 0.0 && ur < 1.0) {
            return Err(Error::Config(format!("update ratio {ur} outside (0, 1)")));
        }
        let us = ((ms as f64 * ur).round() as usize).max(1);
        let n = ms / (2 * us);
        Ok(StageSchedule { ms, ur, us, n, t: 0 })
    }

    pub fn total_steps(&self) -> usize {
        self.ms
    }

    pub fn update_ratio(&self) -> f64 {
        self.ur
    }

    pub fn steps_per_stage(&self) -> usize {
        self.us
    }

    pub fn total_cycles(&self) -> usize {
        self.n
    }

    /// Last advanced-to step (0 before the first advance).
    pub fn current_step(&self) -> usize {
        self.t
    }

    pub fn stage_of(&self, t: usize) -> Result<Stage> {
        if t < 1 || t > self.ms {
            return Err(Error::StepOutOfRange { t, ms: self.ms });
        }
        // ceil(t / us) odd <=> Stage I
        if t.div_ceil(self.us) % 2 == 1 {
            Ok(Stage::I)
        } else {
            Ok(Stage::II)
        }
    }

    pub fn is_refresh_step(&self, t: usize) -> bool {
        t >= 1
            && t <= self.ms
            && t.div_ceil(self.us) % 2 == 0
            && (t - 1) % self.us == 0
    }

    /// Zero-based cycle index containing step t.
    pub fn cycle_of(&self, t: usize) -> usize {
        (t - 1) / (2 * self.us)
    }

    /// Move to the next step and report its events.
    pub fn advance(&mut self) -> Result<StepEvents> {
        if self.t >= self.ms {
            return Err(Error::StepOutOfRange {
                t: self.t + 1,
                ms: self.ms,
            });
        }
        self.t += 1;
        let t = self.t;
        let stage = self.stage_of(t)?;
        let entered_cycle = if (t - 1) % (2 * self.us) == 0 {
            Some(self.cycle_of(t))
        } else {
            None
        };
        let entered_stage = if (t - 1) % self.us == 0 { Some(stage) } else { None };
        Ok(StepEvents {
            t,
            stage,
            entered_cycle,
            entered_stage,
            refresh_mask: self.is_refresh_step(t),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn us_rounding_and_cycle_count() {
        let s = StageSchedule::new(100, 0.1).unwrap();
        assert_eq!(s.steps_per_stage(), 10);
        assert_eq!(s.total_cycles(), 5);
        let s = StageSchedule::new(7, 0.3).unwrap(); // 2.1 rounds to 2
        assert_eq!(s.steps_per_stage(), 2);
        assert_eq!(s.total_cycles(), 1);
    }

    #[test]
    fn stage_arithmetic_examples() {
        let s = StageSchedule::new(100, 0.1).unwrap();
        assert_eq!(s.stage_of(10).unwrap(), Stage::I);
        assert_eq!(s.stage_of(11).unwrap(), Stage::II);
        assert!(s.is_refresh_step(11));
        assert!(!s.is_refresh_step(12));
        assert_eq!(s.stage_of(21).unwrap(), Stage::I);
        assert_eq!(s.cycle_of(21), 1);
        assert!(s.stage_of(0).is_err());
        assert!(s.stage_of(101).is_err());
    }

    #[test]
    fn refresh_steps_every_cycle() {
        let mut s = StageSchedule::new(100, 0.1).unwrap();
        let mut refreshes = Vec::new();
        for _ in 0..100 {
            let e = s.advance().unwrap();
            if e.refresh_mask {
                refreshes.push(e.t);
            }
        }
        assert_eq!(refreshes, vec![11, 31, 51, 71, 91]);
        assert!(s.advance().is_err());
    }

    #[test]
    fn tail_is_a_partial_stage_one() {
        // ms=25, us=10: cycle 0 complete at t=20, then t=21..25 is Stage I of
        // cycle 1 and never reaches a refresh.
        let mut s = StageSchedule::new(25, 0.4).unwrap();
        assert_eq!(s.steps_per_stage(), 10);
        let mut log = Vec::new();
        for _ in 0..25 {
            log.push(s.advance().unwrap());
        }
        assert_eq!(log[20].entered_cycle, Some(1));
        assert!(log[20..].iter().all(|e| e.stage == Stage::I));
        assert!(log[20..].iter().all(|e| !e.refresh_mask));
    }

    /// Literal transcription of the training-clock pseudocode, used as an
    /// independent oracle for the event stream.
    fn oracle_trace(ms: usize, ur: f64) -> Vec<StepEvents> {
        let us = ((ms as f64 * ur).round() as usize).max(1);
        let n = ms / (2 * us);
        let mut events = Vec::new();
        let mut t = 1usize;
        for k in 0..=n {
            while t <= (k + 1) * 2 * us && t <= ms {
                let stage = if t.div_ceil(us) % 2 == 1 { Stage::I } else { Stage::II };
                let refresh = stage == Stage::II && (t - 1) % us == 0;
                events.push(StepEvents {
                    t,
                    stage,
                    entered_cycle: if (t - 1) % (2 * us) == 0 { Some(k) } else { None },
                    entered_stage: if (t - 1) % us == 0 { Some(stage) } else { None },
                    refresh_mask: refresh,
                });
                t += 1;
            }
        }
        events
    }

    #[test]
    fn event_log_matches_oracle_simulation() {
        for (ms, ur) in [(40, 0.25), (100, 0.1), (25, 0.4), (7, 0.3), (1, 0.5), (13, 0.45)] {
            let mut s = StageSchedule::new(ms, ur).unwrap();
            let got: Vec<StepEvents> = (0..ms).map(|_| s.advance().unwrap()).collect();
            assert_eq!(got, oracle_trace(ms, ur), "ms={ms} ur={ur}");
        }
    }
}
