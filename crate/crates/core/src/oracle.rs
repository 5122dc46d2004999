//! Uniform interface to a positive semigroup sampled at a fixed time step.

/// A positive semigroup `(M_t)` observed at multiples of [`time_step`].
///
/// `apply_right` realizes `f -> M_dt f` on pointwise values, `apply_left`
/// realizes `mu -> mu M_dt` on cell masses. Implementations must keep the two
/// actions mutually transposed so that `mu(M f) = (mu M)(f)`.
///
/// [`time_step`]: SemigroupOracle::time_step
pub trait SemigroupOracle {
    /// Number of states (cells).
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn time_step(&self) -> f64;

    fn apply_right(&self, f: &[f64], out: &mut [f64]);

    fn apply_left(&self, mu: &[f64], out: &mut [f64]);

    /// Number of whole steps in `t`, rounding down.
    fn steps_for(&self, t: f64) -> usize {
        let r = t / self.time_step();
        let n = (r + 1e-9).floor();
        if (r - n).abs() > 1e-9 {
            log::warn!(
                "time {t} is not a multiple of the step {}; rounding down to {} steps",
                self.time_step(),
                n
            );
        }
        n.max(0.0) as usize
    }
}

/// A vector carried as `exp(log_scale) * values`, so that long evolutions
/// with large positive or negative growth never overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledVector {
    pub values: Vec<f64>,
    pub log_scale: f64,
}

impl ScaledVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, log_scale: 0.0 }
    }

    /// Renormalize so that the largest absolute entry is one.
    pub fn rebalance(&mut self) {
        let m = self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if m > 0.0 && m.is_finite() {
            for v in &mut self.values {
                *v /= m;
            }
            self.log_scale += m.ln();
        }
    }

    /// Plain values, `exp(log_scale - shift) * values`.
    pub fn unscaled(&self, shift: f64) -> Vec<f64> {
        let s = (self.log_scale - shift).exp();
        self.values.iter().map(|v| v * s).collect()
    }
}

/// Which action of the semigroup to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// `f -> M f`
    Right,
    /// `mu -> mu M`
    Left,
}

/// Apply `steps` steps of the chosen action.
pub fn evolve<S: SemigroupOracle + ?Sized>(s: &S, action: Action, state: &[f64], steps: usize) -> Vec<f64> {
    let mut cur = state.to_vec();
    let mut next = vec![0.0; cur.len()];
    for _ in 0..steps {
        match action {
            Action::Right => s.apply_right(&cur, &mut next),
            Action::Left => s.apply_left(&cur, &mut next),
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Like [`evolve`], rebalancing every step and recording the log-scale.
pub fn evolve_scaled<S: SemigroupOracle + ?Sized>(
    s: &S,
    action: Action,
    state: ScaledVector,
    steps: usize,
) -> ScaledVector {
    let mut cur = state;
    let mut next = vec![0.0; cur.values.len()];
    for _ in 0..steps {
        match action {
            Action::Right => s.apply_right(&cur.values, &mut next),
            Action::Left => s.apply_left(&cur.values, &mut next),
        }
        std::mem::swap(&mut cur.values, &mut next);
        cur.rebalance();
    }
    cur
}

/// Trajectory `state, M state, ..., M^steps state` (all `steps + 1` snapshots).
pub fn trajectory<S: SemigroupOracle + ?Sized>(s: &S, action: Action, state: &[f64], steps: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(state.to_vec());
    for k in 0..steps {
        let mut next = vec![0.0; state.len()];
        match action {
            Action::Right => s.apply_right(&out[k], &mut next),
            Action::Left => s.apply_left(&out[k], &mut next),
        }
        out.push(next);
    }
    out
}
