use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Direction, TxPattern};

/// 10.5 mph in m/s.
pub const NLOS_MEAN_SPEED_MPS: f64 = 4.69;

/// Point reflector standing in for a building face, lamp post or vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scatterer {
    /// `[x, y, z]` in metres, z above ground.
    pub position_m: [f64; 3],
    pub reflection_loss_db: f64,
}

/// Per-path two-state blockage process. Rates are transition probabilities
/// per second; the per-sample probability is `1 - exp(-rate * dt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Blockage {
    pub p_block_per_s: f64,
    pub p_unblock_per_s: f64,
    pub loss_db_min: f64,
    pub loss_db_max: f64,
}

impl Default for Blockage {
    fn default() -> Self {
        Self {
            p_block_per_s: 0.2,
            p_unblock_per_s: 1.0,
            loss_db_min: 10.0,
            loss_db_max: 20.0,
        }
    }
}

impl Blockage {
    pub fn disabled() -> Self {
        Self {
            p_block_per_s: 0.0,
            p_unblock_per_s: 0.0,
            ..Self::default()
        }
    }
}

/// Geometry, mobility and link budget of one synthetic run.
///
/// Ground positions are `[x, y]` in metres; heights are carried separately.
/// The receiver drives along `waypoints_m` at `speed_mps` starting from the
/// first waypoint and stops at the last one. Its heading (the azimuth of
/// face 0) follows the current polyline segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub run_id: String,
    pub tx_position_m: [f64; 2],
    pub tx_height_m: f64,
    pub tx_pattern: TxPattern,
    pub rx_height_m: f64,
    pub waypoints_m: Vec<[f64; 2]>,
    pub speed_mps: f64,
    pub duration_s: f64,
    pub carrier_ghz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub tx_power_dbm: f64,
    pub scatterers: Vec<Scatterer>,
    pub blockage: Blockage,
    pub los_present: bool,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            tx_position_m: [0.0, 0.0],
            tx_height_m: 2.9,
            tx_pattern: TxPattern::default(),
            rx_height_m: 2.4,
            waypoints_m: vec![[100.0, 0.0]],
            speed_mps: NLOS_MEAN_SPEED_MPS,
            duration_s: 15.0,
            carrier_ghz: 28.3,
            bandwidth_hz: 100e6,
            noise_figure_db: 7.0,
            tx_power_dbm: 0.0,
            scatterers: Vec::new(),
            blockage: Blockage::default(),
            los_present: true,
            seed: 0,
        }
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, "must be finite"))
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() {
            return Err(Error::config("run_id", "must not be empty"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::config("duration_s", format!("{} must be positive", self.duration_s)));
        }
        if !(self.speed_mps >= 0.0 && self.speed_mps.is_finite()) {
            return Err(Error::config("speed_mps", format!("{} must be non-negative", self.speed_mps)));
        }
        if !(self.carrier_ghz > 0.0 && self.carrier_ghz.is_finite()) {
            return Err(Error::config("carrier_ghz", "must be positive"));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::config("bandwidth_hz", "must be positive"));
        }
        finite("noise_figure_db", self.noise_figure_db)?;
        finite("tx_power_dbm", self.tx_power_dbm)?;
        finite("tx_height_m", self.tx_height_m)?;
        finite("rx_height_m", self.rx_height_m)?;
        self.tx_pattern.validate()?;
        if self.waypoints_m.is_empty() {
            return Err(Error::config("waypoints_m", "at least one waypoint is required"));
        }
        if self.waypoints_m.iter().flatten().chain(&self.tx_position_m).any(|v| !v.is_finite()) {
            return Err(Error::config("waypoints_m", "coordinates must be finite"));
        }
        for (i, s) in self.scatterers.iter().enumerate() {
            if s.position_m.iter().any(|v| !v.is_finite()) || !(s.reflection_loss_db >= 0.0) {
                return Err(Error::config(
                    format!("scatterers[{i}]"),
                    "position must be finite and reflection loss non-negative",
                ));
            }
        }
        let b = &self.blockage;
        for (field, p) in [
            ("blockage.p_block_per_s", b.p_block_per_s),
            ("blockage.p_unblock_per_s", b.p_unblock_per_s),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(field, format!("{p} not in [0, 1]")));
            }
        }
        if !(b.loss_db_min >= 0.0 && b.loss_db_min <= b.loss_db_max && b.loss_db_max.is_finite()) {
            return Err(Error::config(
                "blockage",
                "need 0 <= loss_db_min <= loss_db_max < inf",
            ));
        }
        if !self.los_present && self.scatterers.is_empty() {
            return Err(Error::config(
                "scatterers",
                "no propagation path: set los_present or add scatterers",
            ));
        }
        Ok(())
    }

    /// RX ground position and heading (degrees) at time `t_s`.
    pub fn rx_pose(&self, t_s: f64) -> ([f64; 2], f64) {
        let wp = &self.waypoints_m;
        let mut remaining = self.speed_mps * t_s;
        let mut heading = 0.0;
        for seg in wp.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy);
            if len == 0.0 {
                continue;
            }
            heading = dy.atan2(dx).to_degrees();
            if remaining <= len {
                let f = remaining / len;
                return ([a[0] + f * dx, a[1] + f * dy], heading);
            }
            remaining -= len;
        }
        (*wp.last().unwrap(), heading)
    }

    /// One member of the default NLOS ensemble.
    ///
    /// The transmitter sits on a 2.9 m mast at the origin with no line of
    /// sight. The receiver drives a straight 80 m street 35 to 55 m away at
    /// 10.5 mph for 15 s. Three reflectors line the street 6 to 20 m off the
    /// driving line. Everything random is drawn from `seed`.
    pub fn nlos_ensemble_member(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let street_y = rng.gen_range(35.0..55.0);
        let x0 = rng.gen_range(-45.0..-25.0);
        let start = [x0, street_y];
        let end = [x0 + 80.0, street_y];
        let mid = [x0 + 40.0, street_y];
        let scatterers = (0..3)
            .map(|_| {
                let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                Scatterer {
                    position_m: [
                        rng.gen_range(x0 - 5.0..x0 + 75.0),
                        street_y + side * rng.gen_range(6.0..20.0),
                        rng.gen_range(1.5..8.0),
                    ],
                    reflection_loss_db: rng.gen_range(15.0..25.0),
                }
            })
            .collect();
        Scenario {
            run_id: format!("nlos-{seed}"),
            tx_pattern: TxPattern {
                boresight: Direction::new(mid[1].atan2(mid[0]).to_degrees(), 0.0),
                ..TxPattern::default()
            },
            waypoints_m: vec![start, end],
            scatterers,
            los_present: false,
            seed,
            ..Scenario::default()
        }
    }

    /// `runs` ensemble members with seeds `base_seed..base_seed + runs`.
    pub fn nlos_ensemble(runs: usize, base_seed: u64) -> Vec<Self> {
        (0..runs as u64)
            .map(|i| Self::nlos_ensemble_member(base_seed + i))
            .collect()
    }
}
