//! Kinematic winch model: released cable length as a function of time.

/// Constant-rate payout schedule, clipped to the reel limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinchSchedule {
    /// Released length at t = 0 (m).
    pub initial_length: f64,
    /// Signed rate (m/s); negative reels the cable in.
    pub payout_speed: f64,
    /// Maximum releasable length (m).
    pub capacity: f64,
    /// Shortest length the winch can reel in to (m).
    pub stow_length: f64,
}

impl WinchSchedule {
    pub fn length_at(&self, t: f64) -> f64 {
        (self.initial_length + self.payout_speed * t).clamp(self.stow_length, self.capacity)
    }

    /// d(length)/dt, zero once the schedule is clipped.
    pub fn rate_at(&self, t: f64) -> f64 {
        let raw = self.initial_length + self.payout_speed * t;
        if raw > self.stow_length && raw < self.capacity {
            self.payout_speed
        } else {
            0.0
        }
    }

    pub fn state_at(&self, t: f64) -> WinchState {
        WinchState {
            released_length: self.length_at(t),
            payout_speed: self.rate_at(t),
        }
    }
}

/// Instantaneous winch state used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinchState {
    pub released_length: f64,
    pub payout_speed: f64,
}

impl WinchState {
    pub fn advance(&mut self, dt: f64) {
        self.released_length = (self.released_length + self.payout_speed * dt).max(0.0);
    }
}
