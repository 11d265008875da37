#![allow(dead_code)]

use beamsweep::channel::{synthesize_trace, Scenario, SnrTrace, TRACE_DT_MS};
use beamsweep::geometry::{build_codebook, Beam, BeamCodebook, CodebookParams, Direction};

pub const TOY_STEP_MS: f64 = 500.0;
pub const TOY_DURATION_MS: f64 = 1000.0;

pub fn default_codebook() -> BeamCodebook {
    build_codebook(&CodebookParams::default()).unwrap()
}

/// Two beams on a single face.
pub fn toy_codebook() -> BeamCodebook {
    let beam = |id: usize, az: f64| Beam {
        id,
        face: 0,
        boresight: Direction::new(az, 0.0),
        hpbw_deg: 16.8,
        peak_gain_dbi: 43.3,
    };
    BeamCodebook::from_beams(vec![0.0], vec![beam(0, -10.0), beam(1, 10.0)]).unwrap()
}

/// Beam 0 holds 20 dB until 500 ms then drops to 5 dB; beam 1 holds 15 dB.
pub fn toy_step_trace() -> SnrTrace {
    let rows = (TOY_DURATION_MS / TRACE_DT_MS) as usize + 1;
    SnrTrace::from_fn("toy-step", TRACE_DT_MS, rows, 2, |r, b| {
        let t = r as f64 * TRACE_DT_MS;
        match (b, t < TOY_STEP_MS) {
            (0, true) => 20.0,
            (0, false) => 5.0,
            _ => 15.0,
        }
    })
    .unwrap()
}

/// Every beam at `snr_db` for 15 s.
pub fn constant_trace(n_beams: usize, snr_db: f64) -> SnrTrace {
    SnrTrace::from_fn("constant", TRACE_DT_MS, 2401, n_beams, |_, _| snr_db).unwrap()
}

/// The six-run default ensemble, seeds 0..6.
pub fn ensemble_traces(codebook: &BeamCodebook) -> Vec<SnrTrace> {
    Scenario::nlos_ensemble(6, 0)
        .iter()
        .map(|s| synthesize_trace(s, codebook).unwrap())
        .collect()
}

/// Great-circle distance by the spherical law of cosines, in degrees.
pub fn great_circle_deg(az1: f64, el1: f64, az2: f64, el2: f64) -> f64 {
    let (p1, p2) = (el1.to_radians(), el2.to_radians());
    let dl = (az2 - az1).to_radians();
    let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Worst-case nearest-beam distance over an az/el grid covering
/// `[-180, 180) x [-el_half, el_half]`.
pub fn brute_force_covering(codebook: &BeamCodebook, el_half: f64, step: f64) -> f64 {
    let beams: Vec<(f64, f64)> = codebook
        .beams()
        .iter()
        .map(|b| (b.boresight.azimuth_deg, b.boresight.elevation_deg))
        .collect();
    let n_az = (360.0 / step).round() as usize;
    let n_el = (2.0 * el_half / step).round() as usize + 1;
    let mut worst = 0.0f64;
    for i in 0..n_az {
        let az = -180.0 + i as f64 * step;
        for j in 0..n_el {
            let el = -el_half + j as f64 * step;
            let nearest = beams
                .iter()
                .map(|&(beam_az, beam_el)| great_circle_deg(az, el, beam_az, beam_el))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(nearest);
        }
    }
    worst
}

/// Expected `(phase_is_sweep, serving_beam, outage)` for every 0.125 ms slot
/// of the toy fixture at T = 200 ms, n = 1, traced by hand:
/// - each 1600-slot cycle opens with a 2-slot sweep;
/// - sweeps at 0, 200 and 400 ms pick beam 0 (20 dB > 15 dB);
/// - at 500 ms beam 0 reads 5 dB < 20 - 5, so outage latches until 600 ms;
/// - sweeps at 600 and 800 ms pick beam 1 (15 dB > 5 dB), no outage after.
pub fn toy_expected_timeline() -> Vec<(bool, Option<usize>, bool)> {
    (0..8000usize)
        .map(|k| {
            let in_cycle = k % 1600;
            if in_cycle < 2 {
                (true, None, false)
            } else if k < 4800 {
                (false, Some(0), k >= 4000)
            } else {
                (false, Some(1), false)
            }
        })
        .collect()
}
