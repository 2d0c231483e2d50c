//! Composite Simpson quadrature on uniformly spaced integrator steps.
//!
//! Segment integrals (`d_i`, `h_i`, the averaged objective, the neutral
//! defect) all use this rule so the quadrature order matches or exceeds the
//! order of the time-integration schemes.

/// Weight of sample `idx` in a composite Simpson rule over `steps` intervals
/// (already divided by 3). `steps` must be even.
#[inline]
pub fn simpson_weight(idx: usize, steps: usize) -> f64 {
    debug_assert!(steps % 2 == 0 && idx <= steps);
    if idx == 0 || idx == steps {
        1.0 / 3.0
    } else if idx % 2 == 1 {
        4.0 / 3.0
    } else {
        2.0 / 3.0
    }
}

/// Integrate uniformly sampled values with composite Simpson. The sample
/// count must be odd (an even number of intervals); a single sample gives 0.
pub fn simpson(samples: &[f64], dt: f64) -> f64 {
    if samples.len() <= 1 {
        return 0.0;
    }
    let steps = samples.len() - 1;
    assert!(steps % 2 == 0, "composite Simpson needs an even number of intervals, got {steps}");
    let mut acc = 0.0;
    for (i, v) in samples.iter().enumerate() {
        acc += simpson_weight(i, steps) * v;
    }
    acc * dt
}

/// Streaming form of `simpson` for integrands evaluated step by step.
#[derive(Clone, Debug)]
pub struct SimpsonAccumulator {
    steps: usize,
    dt: f64,
    acc: f64,
}

impl SimpsonAccumulator {
    pub fn new(steps: usize, dt: f64) -> Self {
        assert!(steps % 2 == 0, "composite Simpson needs an even number of intervals, got {steps}");
        SimpsonAccumulator { steps, dt, acc: 0.0 }
    }

    /// Add the sample at position `idx` (0..=steps); order does not matter.
    pub fn add(&mut self, idx: usize, value: f64) {
        self.acc += simpson_weight(idx, self.steps) * value;
    }

    pub fn value(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.acc * self.dt
        }
    }
}
