//! Per-beam SNR time series.
//!
//! A trace is a dense `[time × beam]` table of SNR in dB on a uniform grid,
//! either loaded from a CSV file or synthesized from a [`Scenario`].

mod io;
mod scenario;
mod synth;

pub use io::{load_trace, trace_to_csv, write_trace};
pub use scenario::{Blockage, Scatterer, Scenario};
pub use synth::{fspl_db, noise_floor_dbm, path_states, synthesize_trace, PathState};

use crate::error::{Error, Result};

/// Native cadence of the sounder's full four-face scan.
pub const TRACE_DT_MS: f64 = 6.25;

#[derive(Debug, Clone, PartialEq)]
pub struct SnrTrace {
    run_id: String,
    dt_ms: f64,
    n_beams: usize,
    samples: Vec<f64>,
}

impl SnrTrace {
    /// `samples` is row-major: `samples[row * n_beams + beam]`. `-inf` marks a
    /// beam with no received energy; NaN and `+inf` are rejected.
    pub fn new(run_id: impl Into<String>, dt_ms: f64, n_beams: usize, samples: Vec<f64>) -> Result<Self> {
        if !(dt_ms > 0.0 && dt_ms.is_finite()) {
            return Err(Error::config("dt_ms", "must be positive and finite"));
        }
        if n_beams == 0 {
            return Err(Error::config("n_beams", "must be at least 1"));
        }
        if samples.len() % n_beams != 0 {
            return Err(Error::config("samples", "length is not a multiple of n_beams"));
        }
        if samples.len() / n_beams < 2 {
            return Err(Error::config("samples", "a trace needs at least 2 time samples"));
        }
        if let Some(i) = samples.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::config(
                "samples",
                format!("invalid SNR {} at row {}, beam {}", samples[i], i / n_beams, i % n_beams),
            ));
        }
        Ok(Self {
            run_id: run_id.into(),
            dt_ms,
            n_beams,
            samples,
        })
    }

    /// Builds a trace from a closure evaluated at every `(row, beam)`.
    pub fn from_fn(
        run_id: impl Into<String>,
        dt_ms: f64,
        rows: usize,
        n_beams: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut samples = Vec::with_capacity(rows * n_beams);
        for r in 0..rows {
            for b in 0..n_beams {
                samples.push(f(r, b));
            }
        }
        Self::new(run_id, dt_ms, n_beams, samples)
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn dt_ms(&self) -> f64 {
        self.dt_ms
    }

    pub fn n_beams(&self) -> usize {
        self.n_beams
    }

    pub fn rows(&self) -> usize {
        self.samples.len() / self.n_beams
    }

    pub fn duration_ms(&self) -> f64 {
        (self.rows() - 1) as f64 * self.dt_ms
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.samples[row * self.n_beams..(row + 1) * self.n_beams]
    }

    pub fn sample(&self, row: usize, beam: usize) -> f64 {
        self.samples[row * self.n_beams + beam]
    }

    pub fn with_run_id(mut self, run_id: impl Into<String>) -> Self {
        self.run_id = run_id.into();
        self
    }

    /// Row index holding at time `t_ms` (zero-order hold). Times within a
    /// relative 1e-9 of a grid point snap onto it.
    fn row_at(&self, t_ms: f64) -> usize {
        let x = t_ms / self.dt_ms;
        let idx = (x + 1e-9 * x.abs().max(1.0)).floor() as usize;
        idx.min(self.rows() - 1)
    }

    /// SNR of `beam_id` at `t_ms`: the latest sample at or before `t_ms`.
    pub fn snr_at(&self, t_ms: f64, beam_id: usize) -> Result<f64> {
        if beam_id >= self.n_beams {
            return Err(Error::Simulation(format!(
                "beam {beam_id} out of range for trace `{}` with {} beams",
                self.run_id, self.n_beams
            )));
        }
        if !(t_ms >= 0.0 && t_ms <= self.duration_ms() * (1.0 + 1e-12)) {
            return Err(Error::Simulation(format!(
                "time {t_ms} ms outside trace `{}` (0..={} ms)",
                self.run_id,
                self.duration_ms()
            )));
        }
        Ok(self.sample(self.row_at(t_ms), beam_id))
    }

    /// Unchecked variant for the engine's hot loop; callers guarantee ranges.
    pub(crate) fn snr_at_unchecked(&self, t_ms: f64, beam_id: usize) -> f64 {
        self.sample(self.row_at(t_ms), beam_id)
    }

    pub(crate) fn max_abs_diff(&self, other: &SnrTrace) -> Option<f64> {
        if self.n_beams != other.n_beams || self.samples.len() != other.samples.len() {
            return None;
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.samples.iter().zip(&other.samples) {
            if a == b {
                continue;
            }
            let d = (a - b).abs();
            if d.is_nan() {
                return None;
            }
            worst = worst.max(d);
        }
        Some(worst)
    }

    /// True when both traces have the same shape and cadence and every cell
    /// agrees to within `tol_db` (`-inf` must match `-inf`).
    pub fn approx_eq(&self, other: &SnrTrace, tol_db: f64) -> bool {
        (self.dt_ms - other.dt_ms).abs() <= 1e-12 * self.dt_ms
            && self.max_abs_diff(other).is_some_and(|d| d <= tol_db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SnrTrace {
        SnrTrace::new("toy", 6.25, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()
    }

    #[test]
    fn shape_and_duration() {
        let t = toy();
        assert_eq!(t.rows(), 3);
        assert_eq!(t.duration_ms(), 12.5);
        assert_eq!(t.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn zero_order_hold() {
        let t = toy();
        assert_eq!(t.snr_at(6.25, 1).unwrap(), 4.0);
        assert_eq!(t.snr_at(6.0, 0).unwrap(), 1.0);
        assert_eq!(t.snr_at(9.0, 0).unwrap(), 3.0);
        assert_eq!(t.snr_at(12.5, 1).unwrap(), 6.0);
        assert_eq!(t.snr_at(0.0, 0).unwrap(), 1.0);
    }

    #[test]
    fn hold_snaps_onto_grid_points() {
        let t = SnrTrace::from_fn("grid", 6.25, 200, 1, |r, _| r as f64).unwrap();
        for k in 0..(199 * 50) {
            let t_ms = k as f64 * 0.125;
            assert_eq!(t.snr_at(t_ms, 0).unwrap(), (k / 50) as f64, "slot {k}");
        }
    }

    #[test]
    fn out_of_range_lookups_fail() {
        let t = toy();
        assert!(t.snr_at(-0.1, 0).is_err());
        assert!(t.snr_at(12.6, 0).is_err());
        assert!(t.snr_at(1.0, 2).is_err());
    }

    #[test]
    fn rejects_invalid_tables() {
        assert!(SnrTrace::new("x", 6.25, 2, vec![1.0, 2.0]).is_err());
        assert!(SnrTrace::new("x", 6.25, 2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(SnrTrace::new("x", 0.0, 1, vec![1.0, 2.0]).is_err());
        assert!(SnrTrace::new("x", 6.25, 1, vec![1.0, f64::NAN]).is_err());
        assert!(SnrTrace::new("x", 6.25, 1, vec![1.0, f64::INFINITY]).is_err());
        assert!(SnrTrace::new("x", 6.25, 1, vec![1.0, f64::NEG_INFINITY]).is_ok());
    }
}
