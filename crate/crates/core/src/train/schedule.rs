//! Learning-rate halving and early stopping driven by validation scores.

/// What the schedule decided after observing one epoch's validation score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub improved: bool,
    pub halved: bool,
    pub stop: bool,
}

/// Tracks the best score and a single no-improvement streak shared by the
/// halving and stopping rules. The learning rate is halved every
/// `halve_patience` epochs of the streak; training stops once the streak
/// reaches `stop_patience`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    learning_rate: f64,
    best: Option<f64>,
    streak: usize,
    halvings: usize,
    halve_patience: usize,
    stop_patience: usize,
}

impl Schedule {
    pub fn new(learning_rate: f64, halve_patience: usize, stop_patience: usize) -> Self {
        assert!(halve_patience > 0 && stop_patience > 0);
        Schedule {
            learning_rate,
            best: None,
            streak: 0,
            halvings: 0,
            halve_patience,
            stop_patience,
        }
    }

    pub fn observe(&mut self, score: f64) -> Decision {
        // NaN never counts as an improvement.
        let improved = match self.best {
            None => !score.is_nan(),
            Some(best) => score > best,
        };
        if improved {
            self.best = Some(score);
            self.streak = 0;
            return Decision {
                improved,
                halved: false,
                stop: false,
            };
        }
        self.streak += 1;
        if self.streak >= self.stop_patience {
            return Decision {
                improved,
                halved: false,
                stop: true,
            };
        }
        let halved = self.streak.is_multiple_of(self.halve_patience);
        if halved {
            self.learning_rate /= 2.0;
            self.halvings += 1;
        }
        Decision {
            improved,
            halved,
            stop: false,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn streak(&self) -> usize {
        self.streak
    }

    pub fn halvings(&self) -> usize {
        self.halvings
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improving_scores_never_halve() {
        let mut s = Schedule::new(1.0, 3, 10);
        for e in 0..100 {
            let d = s.observe(e as f64);
            assert!(d.improved && !d.halved && !d.stop);
        }
        assert_eq!(s.learning_rate(), 1.0);
    }

    #[test]
    fn ties_are_not_improvements() {
        let mut s = Schedule::new(1.0, 3, 10);
        assert!(s.observe(0.5).improved);
        assert!(!s.observe(0.5).improved);
        assert_eq!(s.streak(), 1);
        assert!(s.observe(0.6).improved);
        assert_eq!(s.streak(), 0);
    }

    #[test]
    fn nan_is_never_best() {
        let mut s = Schedule::new(1.0, 3, 10);
        assert!(!s.observe(f64::NAN).improved);
        assert!(s.observe(-1.0).improved);
        assert!(!s.observe(f64::NAN).improved);
    }
}
