use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Scenario, SnrTrace, TRACE_DT_MS};
use crate::error::{Error, Result};
use crate::geometry::{beam_gain_dbi, tx_gain_dbi, BeamCodebook, Direction};

const SPEED_OF_LIGHT_MPS: f64 = 299_792_458.0;
const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

/// Free-space path loss `20 log10(4 pi d / lambda)` in dB.
pub fn fspl_db(distance_m: f64, carrier_ghz: f64) -> f64 {
    let wavelength = SPEED_OF_LIGHT_MPS / (carrier_ghz * 1e9);
    20.0 * (4.0 * std::f64::consts::PI * distance_m / wavelength).log10()
}

pub fn noise_floor_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

/// Geometry of one propagation path at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    /// Arrival direction in the vehicle frame.
    pub arrival: Direction,
    /// Departure direction in the world frame.
    pub departure: Direction,
    pub length_m: f64,
    pub extra_loss_db: f64,
    pub blocked: bool,
}

fn direction_to(from: [f64; 3], to: [f64; 3], heading_deg: f64) -> Direction {
    let (dx, dy, dz) = (to[0] - from[0], to[1] - from[1], to[2] - from[2]);
    Direction::new(
        dy.atan2(dx).to_degrees() - heading_deg,
        dz.atan2(dx.hypot(dy)).to_degrees(),
    )
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Unblocked propagation paths at time `t_s`: the direct path first (when
/// present), then one single-bounce path per scatterer.
pub fn path_states(scenario: &Scenario, t_s: f64) -> Result<Vec<PathState>> {
    let (pos, heading) = scenario.rx_pose(t_s);
    let rx = [pos[0], pos[1], scenario.rx_height_m];
    let tx = [scenario.tx_position_m[0], scenario.tx_position_m[1], scenario.tx_height_m];
    let mut paths = Vec::with_capacity(scenario.scatterers.len() + 1);
    if scenario.los_present {
        let d = distance(tx, rx);
        if d < 1e-9 {
            return Err(Error::config(
                "waypoints_m",
                format!("receiver at t = {t_s} s coincides with the transmitter"),
            ));
        }
        paths.push(PathState {
            arrival: direction_to(rx, tx, heading),
            departure: direction_to(tx, rx, 0.0),
            length_m: d,
            extra_loss_db: 0.0,
            blocked: false,
        });
    }
    for (i, s) in scenario.scatterers.iter().enumerate() {
        let (d_in, d_out) = (distance(tx, s.position_m), distance(s.position_m, rx));
        if d_in < 1e-9 || d_out < 1e-9 {
            return Err(Error::config(
                format!("scatterers[{i}]"),
                format!("scatterer coincides with an antenna at t = {t_s} s"),
            ));
        }
        paths.push(PathState {
            arrival: direction_to(rx, s.position_m, heading),
            departure: direction_to(tx, s.position_m, 0.0),
            length_m: d_in + d_out,
            extra_loss_db: s.reflection_loss_db,
            blocked: false,
        });
    }
    Ok(paths)
}

/// Synthesizes the per-beam SNR trace of `scenario` at the 6.25 ms cadence.
///
/// Per sample and beam the SNR is the power sum over paths of
/// `P_tx + G_tx + G_beam - FSPL - reflection - blockage - N`. Blockage is a
/// per-path Markov chain stepped once per sample; a blocking event draws its
/// loss uniformly from `[loss_db_min, loss_db_max]` and keeps it until the
/// path clears. The output is a pure function of `(scenario, codebook)`.
pub fn synthesize_trace(scenario: &Scenario, codebook: &BeamCodebook) -> Result<SnrTrace> {
    scenario.validate()?;
    if codebook.is_empty() {
        return Err(Error::config("codebook", "codebook is empty"));
    }
    let rows = (scenario.duration_s * 1000.0 / TRACE_DT_MS).round() as usize + 1;
    let dt_s = TRACE_DT_MS / 1000.0;
    let noise = noise_floor_dbm(scenario.bandwidth_hz, scenario.noise_figure_db);
    let blk = &scenario.blockage;
    let p_block = 1.0 - (-blk.p_block_per_s * dt_s).exp();
    let p_unblock = 1.0 - (-blk.p_unblock_per_s * dt_s).exp();

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let n_paths = scenario.scatterers.len() + usize::from(scenario.los_present);
    // current blockage loss per path, None when clear
    let mut blockage: Vec<Option<f64>> = vec![None; n_paths];

    let n_beams = codebook.len();
    let mut samples = Vec::with_capacity(rows * n_beams);
    let mut linear = vec![0.0f64; n_beams];
    for row in 0..rows {
        if row > 0 {
            for state in blockage.iter_mut() {
                let u: f64 = rng.gen();
                *state = match *state {
                    None if u < p_block => Some(blk.loss_db_min + (blk.loss_db_max - blk.loss_db_min) * rng.gen::<f64>()),
                    Some(_) if u < p_unblock => None,
                    s => s,
                };
            }
        }
        let t_s = row as f64 * dt_s;
        let paths = path_states(scenario, t_s)?;
        linear.iter_mut().for_each(|v| *v = 0.0);
        for (path, loss) in paths.iter().zip(&blockage) {
            let common = scenario.tx_power_dbm + tx_gain_dbi(&scenario.tx_pattern, path.departure)
                - fspl_db(path.length_m, scenario.carrier_ghz)
                - path.extra_loss_db
                - loss.unwrap_or(0.0)
                - noise;
            for (acc, beam) in linear.iter_mut().zip(codebook.beams()) {
                *acc += 10f64.powf((common + beam_gain_dbi(beam, path.arrival)) / 10.0);
            }
        }
        samples.extend(linear.iter().map(|v| 10.0 * v.log10()));
    }
    SnrTrace::new(scenario.run_id.clone(), TRACE_DT_MS, n_beams, samples)
}
