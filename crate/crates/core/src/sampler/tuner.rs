//! Windowed proposal-scale adaptation for random-walk Metropolis steps.

use serde::{Deserialize, Serialize};

pub const TARGET_LOW: f64 = 0.25;
pub const TARGET_HIGH: f64 = 0.45;
const GROW: f64 = 1.1;
const SHRINK: f64 = 0.9;

/// Proposal standard deviation for one parameter plus acceptance bookkeeping.
///
/// Every `window` attempts the windowed acceptance rate is compared with
/// `[TARGET_LOW, TARGET_HIGH]` and the scale multiplied by 1.1 or 0.9. After
/// [`ProposalTuner::freeze`] the scale is fixed and attempts are counted
/// separately so reported rates describe the retained part of the chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalTuner {
    pub proposal_sd: f64,
    window: usize,
    accept_count: usize,
    attempt_count: usize,
    frozen: bool,
    frozen_accepts: usize,
    frozen_attempts: usize,
}

impl ProposalTuner {
    pub fn new(proposal_sd: f64, window: usize) -> Self {
        assert!(proposal_sd > 0.0 && window > 0);
        Self {
            proposal_sd,
            window,
            accept_count: 0,
            attempt_count: 0,
            frozen: false,
            frozen_accepts: 0,
            frozen_attempts: 0,
        }
    }

    pub fn record(&mut self, accepted: bool) {
        if self.frozen {
            self.frozen_attempts += 1;
            self.frozen_accepts += accepted as usize;
            return;
        }
        self.attempt_count += 1;
        self.accept_count += accepted as usize;
        if self.attempt_count == self.window {
            let rate = self.accept_count as f64 / self.window as f64;
            if rate > TARGET_HIGH {
                self.proposal_sd *= GROW;
            } else if rate < TARGET_LOW {
                self.proposal_sd *= SHRINK;
            }
            self.accept_count = 0;
            self.attempt_count = 0;
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Acceptance counts since freezing.
    pub fn counts(&self) -> (usize, usize) {
        (self.frozen_accepts, self.frozen_attempts)
    }
}

/// Acceptance counts for plain (untuned) accept/reject steps.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AcceptCounter {
    pub accepted: usize,
    pub attempted: usize,
}

impl AcceptCounter {
    pub fn record(&mut self, accepted: bool) {
        self.attempted += 1;
        self.accepted += accepted as usize;
    }
}

/// Post-burn-in acceptance rate of one Metropolis step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRate {
    pub parameter: String,
    pub accepted: usize,
    pub attempted: usize,
    /// Final proposal scale, when the step is a tuned random walk.
    pub proposal_sd: Option<f64>,
}

impl AcceptanceRate {
    pub fn rate(&self) -> f64 {
        if self.attempted == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grows_when_accepting_too_often() {
        let mut t = ProposalTuner::new(1.0, 100);
        for _ in 0..100 {
            t.record(true);
        }
        assert!((t.proposal_sd - 1.1).abs() < 1e-15);
        for _ in 0..100 {
            t.record(false);
        }
        assert!((t.proposal_sd - 0.99).abs() < 1e-15);
    }

    #[test]
    fn unchanged_inside_band() {
        let mut t = ProposalTuner::new(2.0, 100);
        for i in 0..100 {
            t.record(i % 3 == 0);
        }
        assert_eq!(t.proposal_sd, 2.0);
    }

    #[test]
    fn frozen_scale_does_not_move() {
        let mut t = ProposalTuner::new(1.0, 10);
        t.freeze();
        for _ in 0..50 {
            t.record(true);
        }
        assert_eq!(t.proposal_sd, 1.0);
        assert_eq!(t.counts(), (50, 50));
    }
}
