//! Throughput model, outage statistics and sweep-period optimisation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::SnrTrace;
use crate::engine::{simulate_aggregates, SweepConfig};
use crate::error::{Error, Result};
use crate::geometry::BeamCodebook;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionFraction {
    pub value: f64,
    /// True when the sweep does not fit in the period and the value was floored at 0.
    pub clamped: bool,
}

/// `eta = 1 - M * Ts / (n_chains * T)`, floored at zero.
pub fn transmission_fraction(
    n_beams: usize,
    dwell_ms: f64,
    period_ms: f64,
    n_chains: usize,
) -> Result<TransmissionFraction> {
    if !(period_ms > 0.0) {
        return Err(Error::config("T_ms", format!("{period_ms} must be positive")));
    }
    if n_beams == 0 || n_chains == 0 {
        return Err(Error::config("n_chains", "beam and chain counts must be at least 1"));
    }
    if !(dwell_ms >= 0.0) {
        return Err(Error::config("dwell_ms", "must be non-negative"));
    }
    let eta = 1.0 - (n_beams as f64 * dwell_ms) / (n_chains as f64 * period_ms);
    Ok(if eta < 0.0 {
        TransmissionFraction { value: 0.0, clamped: true }
    } else {
        TransmissionFraction { value: eta, clamped: false }
    })
}

/// `eta * B * log2(1 + snr)`; `-inf` dB gives 0.
pub fn shannon_rate(snr_db: f64, bandwidth_hz: f64, eta: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
        return Err(Error::config("bandwidth_hz", format!("{bandwidth_hz} must be positive")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::config("eta", format!("{eta} not in [0, 1]")));
    }
    if snr_db.is_nan() {
        return Err(Error::config("snr_db", "NaN"));
    }
    Ok(eta * bandwidth_hz * (10f64.powf(snr_db / 10.0)).ln_1p() / std::f64::consts::LN_2)
}

/// Fraction of serving slots in outage (sweep slots excluded).
pub fn outage_likelihood(trace: &SnrTrace, codebook: &BeamCodebook, config: &SweepConfig) -> Result<f64> {
    Ok(simulate_aggregates(trace, codebook, config)?
        .aggregates
        .serving_outage_fraction)
}

pub const DEFAULT_PERIODS_MS: [f64; 11] = [
    50.0, 75.0, 100.0, 150.0, 200.0, 300.0, 500.0, 700.0, 1000.0, 1500.0, 2000.0,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeriodGrid {
    pub periods_ms: Vec<f64>,
}

impl Default for PeriodGrid {
    fn default() -> Self {
        Self {
            periods_ms: DEFAULT_PERIODS_MS.to_vec(),
        }
    }
}

impl PeriodGrid {
    pub fn new(periods_ms: Vec<f64>) -> Result<Self> {
        if periods_ms.is_empty() {
            return Err(Error::config("periods_ms", "grid is empty"));
        }
        if periods_ms.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::config("periods_ms", "periods must be positive"));
        }
        if periods_ms.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("periods_ms", "periods must be strictly increasing"));
        }
        Ok(Self { periods_ms })
    }

    /// Every period must leave data time after the longest sweep among `chains`.
    pub fn check_feasible(&self, codebook: &BeamCodebook, base: &SweepConfig, chains: &[usize]) -> Result<()> {
        for &n in chains {
            for &t in &self.periods_ms {
                base.with_chains(n).with_period(t).validate(codebook)?;
            }
        }
        Ok(())
    }
}

/// How per-run rates are scaled before averaging across runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the run's maximum over the grid for the same chain count.
    PerRun,
    /// Divide by the run's maximum over the grid and over all chain counts.
    CrossChain,
}

/// Raw engine output for one `(run, n_chains, T)` point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub period_ms: f64,
    pub mean_rate_bps: f64,
    pub outage_fraction: f64,
}

/// Engine results over a period grid for every run and chain count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridEvaluation {
    pub run_ids: Vec<String>,
    pub chains: Vec<usize>,
    pub periods_ms: Vec<f64>,
    /// `points[run][chain_index][period_index]`
    pub points: Vec<Vec<Vec<GridPoint>>>,
}

/// Runs the engine for every `(trace, n_chains, T)` combination. Jobs run on
/// the current rayon pool; results are assembled in key order.
pub fn evaluate_grid(
    traces: &[SnrTrace],
    codebook: &BeamCodebook,
    grid: &PeriodGrid,
    chains: &[usize],
    base: &SweepConfig,
) -> Result<GridEvaluation> {
    if traces.is_empty() {
        return Err(Error::config("traces", "ensemble is empty"));
    }
    if chains.is_empty() {
        return Err(Error::config("n_chains", "no chain counts given"));
    }
    grid.check_feasible(codebook, base, chains)?;
    let n_t = grid.periods_ms.len();
    let jobs: Vec<(usize, usize, usize)> = (0..traces.len())
        .flat_map(|r| (0..chains.len()).flat_map(move |c| (0..n_t).map(move |t| (r, c, t))))
        .collect();
    let flat = jobs
        .par_iter()
        .map(|&(r, c, t)| {
            let period = grid.periods_ms[t];
            let cfg = base.with_chains(chains[c]).with_period(period);
            let res = simulate_aggregates(&traces[r], codebook, &cfg)?;
            Ok(GridPoint {
                period_ms: period,
                mean_rate_bps: res.aggregates.mean_rate_bps,
                outage_fraction: res.aggregates.serving_outage_fraction,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = flat.into_iter();
    let points = (0..traces.len())
        .map(|_| (0..chains.len()).map(|_| it.by_ref().take(n_t).collect()).collect())
        .collect();
    Ok(GridEvaluation {
        run_ids: traces.iter().map(|t| t.run_id().to_owned()).collect(),
        chains: chains.to_vec(),
        periods_ms: grid.periods_ms.clone(),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub period_ms: f64,
    pub mean_rate_bps: f64,
    pub normalized_rate: f64,
    pub outage_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunCurve {
    pub run_id: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputCurve {
    pub n_chains: usize,
    pub normalization: Normalization,
    pub runs: Vec<RunCurve>,
    /// `(T_ms, mean normalized rate across runs)`
    pub ensemble: Vec<(f64, f64)>,
}

impl ThroughputCurve {
    pub fn ensemble_values(&self) -> Vec<f64> {
        self.ensemble.iter().map(|p| p.1).collect()
    }

    /// Largest ensemble value.
    pub fn peak(&self) -> Option<f64> {
        self.ensemble.iter().map(|p| p.1).reduce(f64::max)
    }
}

impl GridEvaluation {
    fn chain_index(&self, n_chains: usize) -> Result<usize> {
        self.chains
            .iter()
            .position(|&c| c == n_chains)
            .ok_or_else(|| Error::config("n_chains", format!("{n_chains} was not evaluated")))
    }

    /// Normalized throughput curve for one chain count.
    pub fn throughput_curve(&self, n_chains: usize, normalization: Normalization) -> Result<ThroughputCurve> {
        let c = self.chain_index(n_chains)?;
        let mut runs = Vec::with_capacity(self.run_ids.len());
        for (r, run_id) in self.run_ids.iter().enumerate() {
            let scale = match normalization {
                Normalization::PerRun => max_rate(&self.points[r][c]),
                Normalization::CrossChain => self.points[r].iter().map(|p| max_rate(p)).fold(0.0, f64::max),
            };
            if !(scale > 0.0) {
                return Err(Error::Simulation(format!(
                    "run `{run_id}` has zero throughput at every sweep period"
                )));
            }
            runs.push(RunCurve {
                run_id: run_id.clone(),
                points: self.points[r][c]
                    .iter()
                    .map(|p| CurvePoint {
                        period_ms: p.period_ms,
                        mean_rate_bps: p.mean_rate_bps,
                        normalized_rate: p.mean_rate_bps / scale,
                        outage_fraction: p.outage_fraction,
                    })
                    .collect(),
            });
        }
        let ensemble = self
            .periods_ms
            .iter()
            .enumerate()
            .map(|(t, &period)| {
                let sum: f64 = runs.iter().map(|run| run.points[t].normalized_rate).sum();
                (period, sum / runs.len() as f64)
            })
            .collect();
        Ok(ThroughputCurve {
            n_chains,
            normalization,
            runs,
            ensemble,
        })
    }

    /// Compares chain counts on a common per-run scale.
    pub fn chain_comparison(&self, normalization: Normalization) -> Result<ChainComparison> {
        let rows = self
            .chains
            .iter()
            .map(|&n| {
                let curve = self.throughput_curve(n, normalization)?;
                let peak = curve.peak().unwrap_or(0.0);
                let peak_period_ms = optimal_period(&curve)?;
                let plateau_periods_ms: Vec<f64> = curve
                    .ensemble
                    .iter()
                    .filter(|p| p.1 >= 0.95 * peak)
                    .map(|p| p.0)
                    .collect();
                Ok(ChainRow {
                    n_chains: n,
                    peak,
                    peak_period_ms,
                    plateau_count: plateau_periods_ms.len(),
                    plateau_span_ms: plateau_periods_ms.last().unwrap() - plateau_periods_ms[0],
                    plateau_periods_ms,
                    curve: curve.ensemble,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChainComparison { normalization, rows })
    }
}

fn max_rate(points: &[GridPoint]) -> f64 {
    points.iter().map(|p| p.mean_rate_bps).fold(0.0, f64::max)
}

/// Normalized throughput curve of an ensemble for one chain count.
pub fn throughput_curve(
    traces: &[SnrTrace],
    codebook: &BeamCodebook,
    grid: &PeriodGrid,
    base: &SweepConfig,
    n_chains: usize,
) -> Result<ThroughputCurve> {
    evaluate_grid(traces, codebook, grid, &[n_chains], base)?.throughput_curve(n_chains, Normalization::PerRun)
}

/// Period maximising the ensemble curve; ties go to the shorter period.
pub fn optimal_period(curve: &ThroughputCurve) -> Result<f64> {
    curve
        .ensemble
        .iter()
        .copied()
        .reduce(|best, p| if p.1 > best.1 { p } else { best })
        .map(|p| p.0)
        .ok_or_else(|| Error::config("curve", "throughput curve is empty"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainRow {
    pub n_chains: usize,
    pub peak: f64,
    pub peak_period_ms: f64,
    /// Grid periods reaching at least 95 % of this chain count's peak.
    pub plateau_periods_ms: Vec<f64>,
    pub plateau_count: usize,
    /// Longest minus shortest plateau period.
    pub plateau_span_ms: f64,
    pub curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainComparison {
    pub normalization: Normalization,
    pub rows: Vec<ChainRow>,
}

impl ChainComparison {
    pub fn row(&self, n_chains: usize) -> Option<&ChainRow> {
        self.rows.iter().find(|r| r.n_chains == n_chains)
    }
}

pub fn chain_comparison(
    traces: &[SnrTrace],
    codebook: &BeamCodebook,
    grid: &PeriodGrid,
    base: &SweepConfig,
    chains: &[usize],
) -> Result<ChainComparison> {
    evaluate_grid(traces, codebook, grid, chains, base)?.chain_comparison(Normalization::CrossChain)
}

/// True when `values` rise to their maximum and then fall, allowing
/// reversals of at most `tol` along the way.
pub fn is_unimodal(values: &[f64], tol: f64) -> bool {
    let Some(peak) = values
        .iter()
        .enumerate()
        .reduce(|best, v| if v.1 > best.1 { v } else { best })
        .map(|(i, _)| i)
    else {
        return true;
    };
    let rising = values[..=peak].windows(2).all(|w| w[1] >= w[0] - tol);
    let falling = values[peak..].windows(2).all(|w| w[1] <= w[0] + tol);
    rising && falling
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_codebook, CodebookParams};
    use proptest::prelude::*;

    #[test]
    fn transmission_fraction_examples() {
        let eta = transmission_fraction(200, 0.125, 300.0, 1).unwrap();
        assert!((eta.value - (1.0 - 25.0 / 300.0)).abs() < 1e-15);
        assert!(!eta.clamped);
        assert_eq!(transmission_fraction(200, 0.125, 100.0, 4).unwrap().value, 0.9375);
        let edge = transmission_fraction(200, 0.125, 25.0, 1).unwrap();
        assert_eq!(edge.value, 0.0);
        assert!(!edge.clamped);
        let over = transmission_fraction(200, 0.125, 10.0, 1).unwrap();
        assert_eq!((over.value, over.clamped), (0.0, true));
        assert!(transmission_fraction(200, 0.125, 0.0, 1).is_err());
        assert!(transmission_fraction(200, 0.125, -5.0, 1).is_err());
    }

    #[test]
    fn shannon_rate_examples() {
        assert!((shannon_rate(0.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(shannon_rate(f64::NEG_INFINITY, 1e8, 0.7).unwrap(), 0.0);
        let r = shannon_rate(20.0, 1e8, 0.916666).unwrap();
        let expected = 0.916666 * 1e8 * 101f64.log2();
        assert!((r - expected).abs() / expected < 1e-12);
        // independent evaluation: 0.916666 * 1e8 * log2(101)
        assert!((r - 610335608.7048156).abs() / r < 1e-6);
        assert!(shannon_rate(10.0, 0.0, 1.0).is_err());
        assert!(shannon_rate(10.0, 1.0, 1.5).is_err());
        assert!(shannon_rate(10.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(PeriodGrid::new(vec![]).is_err());
        assert!(PeriodGrid::new(vec![100.0, 100.0]).is_err());
        assert!(PeriodGrid::new(vec![200.0, 100.0]).is_err());
        assert!(PeriodGrid::new(vec![-1.0]).is_err());
        let cb = build_codebook(&CodebookParams::default()).unwrap();
        let base = SweepConfig::default();
        assert!(PeriodGrid::default().check_feasible(&cb, &base, &[1, 2, 4]).is_ok());
        let tight = PeriodGrid::new(vec![25.0, 50.0]).unwrap();
        assert!(tight.check_feasible(&cb, &base, &[4]).is_ok());
        assert!(tight.check_feasible(&cb, &base, &[1]).is_err());
    }

    #[test]
    fn unimodality_helper() {
        assert!(is_unimodal(&[0.1, 0.5, 0.9, 1.0, 0.8, 0.2], 0.0));
        assert!(!is_unimodal(&[0.1, 0.5, 0.4, 1.0, 0.8], 0.0));
        assert!(is_unimodal(&[0.1, 0.5, 0.49, 1.0, 0.8], 0.02));
        assert!(!is_unimodal(&[1.0, 0.5, 0.9], 0.02));
        assert!(is_unimodal(&[], 0.0));
    }

    fn curve(values: &[f64]) -> ThroughputCurve {
        ThroughputCurve {
            n_chains: 1,
            normalization: Normalization::PerRun,
            runs: vec![],
            ensemble: values.iter().enumerate().map(|(i, &v)| (100.0 * (i + 1) as f64, v)).collect(),
        }
    }

    #[test]
    fn optimal_period_breaks_ties_toward_shorter_period() {
        assert_eq!(optimal_period(&curve(&[0.5, 1.0, 1.0, 0.9])).unwrap(), 200.0);
        assert_eq!(optimal_period(&curve(&[0.5, 0.7, 1.0])).unwrap(), 300.0);
        assert!(optimal_period(&curve(&[])).is_err());
    }

    fn evaluation(rates: Vec<Vec<f64>>) -> GridEvaluation {
        let periods: Vec<f64> = (1..=rates[0].len()).map(|i| i as f64 * 100.0).collect();
        GridEvaluation {
            run_ids: (0..rates.len()).map(|i| format!("r{i}")).collect(),
            chains: vec![1],
            periods_ms: periods.clone(),
            points: rates
                .into_iter()
                .map(|run| {
                    vec![run
                        .into_iter()
                        .zip(&periods)
                        .map(|(r, &p)| GridPoint { period_ms: p, mean_rate_bps: r, outage_fraction: 0.0 })
                        .collect()]
                })
                .collect(),
        }
    }

    #[test]
    fn zero_throughput_run_is_named() {
        let ev = evaluation(vec![vec![1.0, 2.0], vec![0.0, 0.0]]);
        let err = ev.throughput_curve(1, Normalization::PerRun).unwrap_err();
        assert!(err.to_string().contains("`r1`"));
    }

    proptest! {
        #[test]
        fn per_run_normalization_peaks_at_one_and_ignores_scale(
            rates in prop::collection::vec(prop::collection::vec(1.0f64..1e9, 6), 1..5),
            scale in 1e-3f64..1e3,
        ) {
            let ev = evaluation(rates.clone());
            let c = ev.throughput_curve(1, Normalization::PerRun).unwrap();
            for run in &c.runs {
                let max = run.points.iter().map(|p| p.normalized_rate).fold(0.0, f64::max);
                prop_assert_eq!(max, 1.0);
                prop_assert!(run.points.iter().all(|p| (0.0..=1.0).contains(&p.normalized_rate)));
            }
            let mut scaled = rates;
            scaled[0].iter_mut().for_each(|r| *r *= scale);
            let c2 = evaluation(scaled).throughput_curve(1, Normalization::PerRun).unwrap();
            prop_assert_eq!(optimal_period(&c).unwrap(), optimal_period(&c2).unwrap());
        }

        #[test]
        fn eta_monotone(t in 30.0f64..5000.0, dt in 0.1f64..100.0, m in 1usize..400) {
            let a = transmission_fraction(m, 0.125, t, 1).unwrap();
            let b = transmission_fraction(m, 0.125, t + dt, 1).unwrap();
            if !a.clamped && a.value > 0.0 {
                prop_assert!(b.value > a.value);
                prop_assert!(transmission_fraction(m, 0.125, t, 2).unwrap().value > a.value);
                prop_assert!(transmission_fraction(m + 1, 0.125, t, 1).unwrap().value < a.value);
            }
        }

        #[test]
        fn shannon_rate_monotone_and_linear(snr in -30.0f64..60.0, d in 0.01f64..10.0, b in 1.0f64..1e9, eta in 0.01f64..1.0) {
            prop_assert!(shannon_rate(snr + d, b, eta).unwrap() > shannon_rate(snr, b, eta).unwrap());
            let base = shannon_rate(snr, b, eta).unwrap();
            let rel = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs();
            prop_assert!(rel(shannon_rate(snr, 2.0 * b, eta).unwrap(), 2.0 * base));
            prop_assert!(rel(shannon_rate(snr, b, eta / 2.0).unwrap(), base / 2.0));
        }
    }
}
