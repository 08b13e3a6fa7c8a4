/// Point-to-point reference alternating between two positions.
///
/// Each segment is the quintic minimum-jerk blend `10s³ − 15s⁴ + 6s⁵`, so
/// position, velocity and acceleration are continuous at every junction and
/// the velocity profile is bell shaped.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmoidTrajectory {
    pub q_start: Vec<f64>,
    pub q_end: Vec<f64>,
    /// Length of one forward or backward segment [s].
    pub segment: f64,
    /// Number of segments; the reference holds its final value afterwards.
    pub repetitions: usize,
}

/// Reference position, velocity and acceleration.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub q: Vec<f64>,
    pub q_dot: Vec<f64>,
    pub q_ddot: Vec<f64>,
}

pub fn sigmoid_trajectory(q_start: &[f64], q_end: &[f64], duration: f64, repetitions: usize) -> SigmoidTrajectory {
    assert!(duration > 0.0, "segment duration must be positive");
    assert_eq!(q_start.len(), q_end.len());
    SigmoidTrajectory {
        q_start: q_start.to_vec(),
        q_end: q_end.to_vec(),
        segment: duration,
        repetitions,
    }
}

impl SigmoidTrajectory {
    pub fn total_duration(&self) -> f64 {
        self.segment * self.repetitions as f64
    }

    /// Number of samples over all segments at `rate` Hz.
    pub fn sample_count(&self, rate: f64) -> usize {
        (self.total_duration() * rate).round() as usize
    }

    pub fn at(&self, t: f64) -> Reference {
        let n = self.q_start.len();
        let total = self.total_duration();
        let (seg, tau) = if self.repetitions == 0 || t <= 0.0 {
            (0, 0.0)
        } else if t >= total {
            (self.repetitions - 1, self.segment)
        } else {
            let k = ((t / self.segment).floor() as usize).min(self.repetitions - 1);
            (k, t - k as f64 * self.segment)
        };
        let (a, b) = if seg % 2 == 0 {
            (&self.q_start, &self.q_end)
        } else {
            (&self.q_end, &self.q_start)
        };
        let s = (tau / self.segment).clamp(0.0, 1.0);
        let h = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
        let hd = 30.0 * s * s * (1.0 - s) * (1.0 - s) / self.segment;
        let hdd = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (self.segment * self.segment);
        let mut r = Reference {
            q: vec![0.0; n],
            q_dot: vec![0.0; n],
            q_ddot: vec![0.0; n],
        };
        for i in 0..n {
            let span = b[i] - a[i];
            r.q[i] = a[i] + span * h;
            r.q_dot[i] = span * hd;
            r.q_ddot[i] = span * hdd;
        }
        r
    }
}
