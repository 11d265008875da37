//! Slot-level simulation of periodic receive-side beam sweeping.
//!
//! Time advances in dwell-length slots. Every sweep period starts with an
//! exhaustive sweep: the faces are split evenly among the RX chains and each
//! chain measures one of its beams per slot. When the sweep ends the strongest
//! beam is served and its measured SNR becomes the reference that fixes the
//! rate. A serving slot whose SNR falls more than the outage margin below the
//! reference is an outage and carries no data. With a single chain the outage
//! lasts until the next sweep. Extra chains keep watching the runner-up beams
//! and can take over within the same slot.
//!
//! The simulated horizon is the largest whole number of sweep periods that
//! fits in the trace, so the sweep overhead is exactly
//! `sweep_slots * dwell / period` whenever the period is a multiple of the
//! dwell.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::SnrTrace;
use crate::error::{Error, Result};
use crate::geometry::BeamCodebook;
use crate::metrics::shannon_rate;

/// Integer nanoseconds, so slot/cycle arithmetic is exact.
fn to_ns(ms: f64) -> u64 {
    (ms * 1e6).round() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub sweep_period_ms: f64,
    pub dwell_ms: f64,
    pub n_chains: usize,
    pub outage_margin_db: f64,
    pub bandwidth_hz: f64,
    /// Data-less slots after a reactive switch to a monitored beam.
    pub switch_cost_slots: u32,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sweep_period_ms: 300.0,
            dwell_ms: 0.125,
            n_chains: 4,
            outage_margin_db: 5.0,
            bandwidth_hz: 100e6,
            switch_cost_slots: 0,
        }
    }
}

impl SweepConfig {
    pub fn with_period(&self, sweep_period_ms: f64) -> Self {
        Self {
            sweep_period_ms,
            ..self.clone()
        }
    }

    pub fn with_chains(&self, n_chains: usize) -> Self {
        Self {
            n_chains,
            ..self.clone()
        }
    }

    /// Sweep length in slots for `codebook`.
    pub fn sweep_slots(&self, codebook: &BeamCodebook) -> Result<usize> {
        Ok(sweep_schedule(codebook, self.n_chains)?
            .iter()
            .map(Vec::len)
            .max()
            .unwrap_or(0))
    }

    pub fn validate(&self, codebook: &BeamCodebook) -> Result<()> {
        if !(self.dwell_ms > 0.0 && self.dwell_ms.is_finite()) || to_ns(self.dwell_ms) == 0 {
            return Err(Error::config("dwell_ms", format!("{} must be positive", self.dwell_ms)));
        }
        if !(self.outage_margin_db >= 0.0 && self.outage_margin_db.is_finite()) {
            return Err(Error::config("outage_margin_db", "must be non-negative"));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::config("bandwidth_hz", "must be positive"));
        }
        let sweep_ms = self.sweep_slots(codebook)? as f64 * self.dwell_ms;
        if !(self.sweep_period_ms.is_finite() && self.sweep_period_ms > sweep_ms) {
            return Err(Error::config(
                "sweep_period_ms",
                format!(
                    "{} ms leaves no time for data after a {sweep_ms} ms sweep with {} chain(s)",
                    self.sweep_period_ms, self.n_chains
                ),
            ));
        }
        Ok(())
    }
}

/// Per-chain beam lists: chain `c` sweeps faces
/// `[c * F / n, (c + 1) * F / n)` in beam id order.
pub fn sweep_schedule(codebook: &BeamCodebook, n_chains: usize) -> Result<Vec<Vec<usize>>> {
    let faces = codebook.n_faces();
    if n_chains == 0 || faces % n_chains != 0 {
        return Err(Error::config(
            "n_chains",
            format!("{n_chains} chain(s) cannot split {faces} faces evenly"),
        ));
    }
    let per_chain = faces / n_chains;
    Ok((0..n_chains)
        .map(|c| {
            codebook
                .beams()
                .iter()
                .filter(|b| b.face / per_chain == c)
                .map(|b| b.id)
                .collect()
        })
        .collect())
}

/// Strongest measurement; ties go to the lowest beam id.
pub fn select_beam(measurements: &[(usize, f64)]) -> Result<(usize, f64)> {
    measurements
        .iter()
        .copied()
        .reduce(|best, m| {
            if m.1 > best.1 || (m.1 == best.1 && m.0 < best.0) {
                m
            } else {
                best
            }
        })
        .ok_or_else(|| Error::Simulation("no beam measurements to select from".into()))
}

/// True iff `actual < reference - margin`. A non-finite reference (nothing
/// was received during the sweep) is always an outage.
pub fn detect_outage(ref_snr_db: f64, actual_snr_db: f64, margin_db: f64) -> bool {
    !ref_snr_db.is_finite() || actual_snr_db < ref_snr_db - margin_db
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Sweeping,
    Serving,
}

impl Phase {
    fn as_str(self) -> &'static str {
        match self {
            Phase::Sweeping => "sweeping",
            Phase::Serving => "serving",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub t_ms: f64,
    pub phase: Phase,
    /// None during sweeps.
    pub serving_beam: Option<usize>,
    pub actual_snr_db: Option<f64>,
    pub outage: bool,
    pub rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimAggregates {
    pub mean_rate_bps: f64,
    /// Outage slots over all slots.
    pub outage_fraction: f64,
    /// Outage slots over serving slots.
    pub serving_outage_fraction: f64,
    pub n_slots: usize,
    pub n_sweep_slots: usize,
    pub n_outage_slots: usize,
    pub n_sweeps: usize,
    pub n_reactive_switches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub run_id: String,
    pub config: SweepConfig,
    pub aggregates: SimAggregates,
    /// Empty unless requested.
    pub slots: Vec<SlotRecord>,
}

impl SimResult {
    /// Per-slot CSV: `t_ms,phase,serving_beam,actual_snr_db,outage,rate_bps`.
    pub fn slots_csv(&self) -> String {
        let mut out = String::from("t_ms,phase,serving_beam,actual_snr_db,outage,rate_bps\n");
        for s in &self.slots {
            let beam = s.serving_beam.map(|b| b.to_string()).unwrap_or_default();
            let snr = s.actual_snr_db.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.t_ms,
                s.phase.as_str(),
                beam,
                snr,
                u8::from(s.outage),
                s.rate_bps
            )
            .unwrap();
        }
        out
    }

    pub fn write_slots_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.slots_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn aggregates_json(&self) -> String {
        serde_json::to_string_pretty(&self.aggregates).expect("aggregates serialize")
    }
}

/// A monitored beam: its reference (SNR when it was last adopted) and its
/// latest observed SNR.
#[derive(Debug, Clone, Copy)]
struct Monitored {
    beam: usize,
    reference: f64,
    current: f64,
}

struct Link {
    serving: usize,
    ref_snr_db: f64,
    rate_bps: f64,
    monitored: Vec<Monitored>,
    /// Outage persists until the next sweep.
    latched: bool,
    /// Remaining data-less slots after a reactive switch.
    switching: u32,
}

/// Runs the sweep/serve state machine and keeps the per-slot log.
pub fn run_simulation(trace: &SnrTrace, codebook: &BeamCodebook, config: &SweepConfig) -> Result<SimResult> {
    simulate(trace, codebook, config, true)
}

/// Same as [`run_simulation`] but only aggregates are kept.
pub fn simulate_aggregates(trace: &SnrTrace, codebook: &BeamCodebook, config: &SweepConfig) -> Result<SimResult> {
    simulate(trace, codebook, config, false)
}

fn simulate(trace: &SnrTrace, codebook: &BeamCodebook, config: &SweepConfig, keep_log: bool) -> Result<SimResult> {
    config.validate(codebook)?;
    if trace.n_beams() != codebook.len() {
        return Err(Error::Simulation(format!(
            "trace `{}` has {} beams but the codebook has {}",
            trace.run_id(),
            trace.n_beams(),
            codebook.len()
        )));
    }
    let schedule = sweep_schedule(codebook, config.n_chains)?;
    let sweep_slots = schedule.iter().map(Vec::len).max().unwrap_or(0);

    let dwell_ns = to_ns(config.dwell_ms);
    let period_ns = to_ns(config.sweep_period_ms);
    let duration_ns = to_ns(trace.duration_ms());
    let n_cycles = duration_ns / period_ns;
    if n_cycles == 0 {
        return Err(Error::Simulation(format!(
            "trace `{}` ({} ms) is shorter than one {} ms sweep period",
            trace.run_id(),
            trace.duration_ms(),
            config.sweep_period_ms
        )));
    }
    let n_slots = (n_cycles * period_ns).div_ceil(dwell_ns) as usize;
    let margin = config.outage_margin_db;

    let mut slots = Vec::with_capacity(if keep_log { n_slots } else { 0 });
    let mut measurements: Vec<(usize, f64)> = Vec::with_capacity(codebook.len());
    let mut link: Option<Link> = None;
    let mut rate_sum = 0.0;
    let mut n_sweep_slots = 0;
    let mut n_outage = 0;
    let mut n_sweeps = 0;
    let mut n_switches = 0;

    for k in 0..n_slots {
        let t_ns = k as u64 * dwell_ns;
        let t_ms = t_ns as f64 / 1e6;
        let cycle = t_ns / period_ns;
        let cycle_start = (cycle * period_ns).div_ceil(dwell_ns) as usize;
        let offset = k - cycle_start;

        if offset < sweep_slots {
            if offset == 0 {
                n_sweeps += 1;
                measurements.clear();
            }
            for chain in &schedule {
                if let Some(&beam) = chain.get(offset) {
                    measurements.push((beam, trace.snr_at_unchecked(t_ms, beam)));
                }
            }
            n_sweep_slots += 1;
            if offset + 1 == sweep_slots {
                link = Some(adopt_sweep(&measurements, config)?);
            }
            if keep_log {
                slots.push(SlotRecord {
                    t_ms,
                    phase: Phase::Sweeping,
                    serving_beam: None,
                    actual_snr_db: None,
                    outage: false,
                    rate_bps: 0.0,
                });
            }
            continue;
        }

        let link = link.as_mut().expect("a sweep precedes every serving slot");
        for m in link.monitored.iter_mut() {
            m.current = trace.snr_at_unchecked(t_ms, m.beam);
        }
        let mut outage = link.latched;
        if !outage {
            let actual = link.monitored.iter().find(|m| m.beam == link.serving).unwrap().current;
            if detect_outage(link.ref_snr_db, actual, margin) {
                if config.n_chains > 1 && reactive_switch(link, margin, config)? {
                    n_switches += 1;
                } else {
                    link.latched = true;
                    outage = true;
                }
            }
        }
        let rate = if outage {
            n_outage += 1;
            0.0
        } else if link.switching > 0 {
            link.switching -= 1;
            0.0
        } else {
            link.rate_bps
        };
        rate_sum += rate;
        if keep_log {
            let actual = link.monitored.iter().find(|m| m.beam == link.serving).unwrap().current;
            slots.push(SlotRecord {
                t_ms,
                phase: Phase::Serving,
                serving_beam: Some(link.serving),
                actual_snr_db: Some(actual),
                outage,
                rate_bps: rate,
            });
        }
    }

    let n_serving = n_slots - n_sweep_slots;
    Ok(SimResult {
        run_id: trace.run_id().to_owned(),
        config: config.clone(),
        aggregates: SimAggregates {
            mean_rate_bps: rate_sum / n_slots as f64,
            outage_fraction: n_outage as f64 / n_slots as f64,
            serving_outage_fraction: if n_serving == 0 {
                0.0
            } else {
                n_outage as f64 / n_serving as f64
            },
            n_slots,
            n_sweep_slots,
            n_outage_slots: n_outage,
            n_sweeps,
            n_reactive_switches: n_switches,
        },
        slots,
    })
}

fn adopt_sweep(measurements: &[(usize, f64)], config: &SweepConfig) -> Result<Link> {
    let (serving, ref_snr_db) = select_beam(measurements)?;
    let mut ranked = measurements.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let monitored = ranked
        .iter()
        .take(config.n_chains)
        .map(|&(beam, snr)| Monitored {
            beam,
            reference: snr,
            current: snr,
        })
        .collect();
    Ok(Link {
        serving,
        ref_snr_db,
        rate_bps: link_rate(ref_snr_db, config)?,
        monitored,
        latched: false,
        switching: 0,
    })
}

fn link_rate(ref_snr_db: f64, config: &SweepConfig) -> Result<f64> {
    if ref_snr_db.is_finite() {
        shannon_rate(ref_snr_db, config.bandwidth_hz, 1.0)
    } else {
        Ok(0.0)
    }
}

/// Moves service to the best monitored beam still within its own margin.
fn reactive_switch(link: &mut Link, margin: f64, config: &SweepConfig) -> Result<bool> {
    let candidate = link
        .monitored
        .iter()
        .enumerate()
        .filter(|(_, m)| m.beam != link.serving && m.current.is_finite() && !detect_outage(m.reference, m.current, margin))
        .max_by(|(_, a), (_, b)| a.current.total_cmp(&b.current).then(b.beam.cmp(&a.beam)))
        .map(|(i, _)| i);
    let Some(i) = candidate else {
        return Ok(false);
    };
    let m = &mut link.monitored[i];
    m.reference = m.current;
    link.serving = m.beam;
    link.ref_snr_db = m.current;
    link.rate_bps = link_rate(m.current, config)?;
    link.switching = config.switch_cost_slots;
    Ok(true)
}
