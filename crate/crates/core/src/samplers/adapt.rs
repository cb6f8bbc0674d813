//! Random-walk step sizes tuned towards a target acceptance rate.

/// Log-scale Robbins–Monro adaptation of a random-walk step, frozen on request.
#[derive(Debug, Clone, PartialEq)]
pub struct RwScale {
    ln_step: f64,
    target: f64,
    visits: u64,
    accepted: u64,
    proposed: u64,
    frozen: bool,
}

impl RwScale {
    pub fn new(step: f64) -> Self {
        Self::with_target(step, 0.3)
    }

    pub fn with_target(step: f64, target: f64) -> Self {
        Self {
            ln_step: step.ln(),
            target,
            visits: 0,
            accepted: 0,
            proposed: 0,
            frozen: false,
        }
    }

    pub fn step(&self) -> f64 {
        self.ln_step.exp()
    }

    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
        if self.frozen {
            return;
        }
        self.visits += 1;
        let gain = (self.visits as f64 + 10.0).powf(-0.6);
        let hit = if accepted { 1.0 } else { 0.0 };
        self.ln_step = (self.ln_step + gain * (hit - self.target)).clamp(-12.0, 5.0);
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
        self.accepted = 0;
        self.proposed = 0;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Acceptance rate since the last freeze (or since construction).
    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_shrinks_under_rejection_and_stops_when_frozen() {
        let mut s = RwScale::new(1.0);
        for _ in 0..100 {
            s.record(false);
        }
        let shrunk = s.step();
        assert!(shrunk < 1.0);
        s.freeze();
        for _ in 0..100 {
            s.record(false);
        }
        assert_eq!(s.step(), shrunk);
        assert_eq!(s.acceptance(), 0.0);
    }
}
