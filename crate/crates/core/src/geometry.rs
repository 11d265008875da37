//! Receive beam codebook and directional gain patterns.
//!
//! Angles are in degrees throughout. Azimuth is measured in the vehicle frame
//! (0 = straight ahead, positive counter-clockwise seen from above) and
//! elevation from the horizontal plane.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attenuation cap of the parabolic pattern, in dB below peak.
pub const SIDELOBE_FLOOR_DB: f64 = 30.0;

/// RX module half-power beamwidth, degrees.
pub const RX_HPBW_DEG: f64 = 16.8;
/// RX module boresight gain, dBi.
pub const RX_PEAK_GAIN_DBI: f64 = 43.3;
/// TX module half-power beamwidth (azimuth), degrees.
pub const TX_HPBW_DEG: f64 = 54.1;
/// TX module boresight gain, dBi.
pub const TX_PEAK_GAIN_DBI: f64 = 36.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Direction {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Direction {
    /// Wraps azimuth into [-180, 180) and clamps elevation into [-90, 90].
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self {
            azimuth_deg: wrap_azimuth(azimuth_deg),
            elevation_deg: elevation_deg.clamp(-90.0, 90.0),
        }
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (sa, ca) = self.azimuth_deg.to_radians().sin_cos();
        let (se, ce) = self.elevation_deg.to_radians().sin_cos();
        [ce * ca, ce * sa, se]
    }
}

pub fn wrap_azimuth(azimuth_deg: f64) -> f64 {
    let w = (azimuth_deg + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Great-circle distance between two directions, in degrees (haversine form).
pub fn angular_distance(a: Direction, b: Direction) -> f64 {
    let el_a = a.elevation_deg.to_radians();
    let el_b = b.elevation_deg.to_radians();
    let half_del = 0.5 * (el_b - el_a);
    let half_daz = 0.5 * (b.azimuth_deg - a.azimuth_deg).to_radians();
    let h = half_del.sin().powi(2) + el_a.cos() * el_b.cos() * half_daz.sin().powi(2);
    (2.0 * h.clamp(0.0, 1.0).sqrt().asin()).to_degrees()
}

/// Parabolic main lobe capped at [`SIDELOBE_FLOOR_DB`] below peak.
pub fn pattern_gain_dbi(peak_gain_dbi: f64, hpbw_deg: f64, off_axis_deg: f64) -> f64 {
    let x = off_axis_deg / hpbw_deg;
    peak_gain_dbi - (12.0 * x * x).min(SIDELOBE_FLOOR_DB)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub id: usize,
    pub face: usize,
    pub boresight: Direction,
    pub hpbw_deg: f64,
    pub peak_gain_dbi: f64,
}

pub fn beam_gain_dbi(beam: &Beam, toward: Direction) -> f64 {
    pattern_gain_dbi(
        beam.peak_gain_dbi,
        beam.hpbw_deg,
        angular_distance(beam.boresight, toward),
    )
}

/// Fixed transmit beam. Assumed rotationally symmetric about its boresight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TxPattern {
    pub boresight: Direction,
    pub hpbw_deg: f64,
    pub peak_gain_dbi: f64,
}

impl Default for TxPattern {
    fn default() -> Self {
        Self {
            boresight: Direction::new(0.0, 0.0),
            hpbw_deg: TX_HPBW_DEG,
            peak_gain_dbi: TX_PEAK_GAIN_DBI,
        }
    }
}

impl TxPattern {
    pub fn validate(&self) -> Result<()> {
        if !(self.hpbw_deg > 0.0 && self.hpbw_deg.is_finite()) {
            return Err(Error::config("tx_pattern.hpbw_deg", "must be positive and finite"));
        }
        if !self.peak_gain_dbi.is_finite() {
            return Err(Error::config("tx_pattern.peak_gain_dbi", "must be finite"));
        }
        Ok(())
    }
}

pub fn tx_gain_dbi(pattern: &TxPattern, toward: Direction) -> f64 {
    pattern_gain_dbi(
        pattern.peak_gain_dbi,
        pattern.hpbw_deg,
        angular_distance(pattern.boresight, toward),
    )
}

/// Parameters of the per-face hexagonal lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookParams {
    pub face_boresights_deg: Vec<f64>,
    pub beams_per_face: usize,
    /// Number of elevation rows; derived from the hexagonal cell size when absent.
    pub rows: Option<usize>,
    pub az_halfspan_deg: f64,
    pub el_halfspan_deg: f64,
    pub hpbw_deg: f64,
    pub peak_gain_dbi: f64,
}

impl Default for CodebookParams {
    fn default() -> Self {
        Self {
            face_boresights_deg: vec![0.0, 90.0, 180.0, -90.0],
            beams_per_face: 50,
            rows: None,
            az_halfspan_deg: 45.0,
            el_halfspan_deg: 30.0,
            hpbw_deg: RX_HPBW_DEG,
            peak_gain_dbi: RX_PEAK_GAIN_DBI,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeamCodebook {
    beams: Vec<Beam>,
    face_boresights_deg: Vec<f64>,
}

impl BeamCodebook {
    /// Builds a codebook from explicit beams. Ids must be `0..n` in order,
    /// faces must index `face_boresights_deg`, and boresights must be distinct.
    pub fn from_beams(face_boresights_deg: Vec<f64>, beams: Vec<Beam>) -> Result<Self> {
        if face_boresights_deg.is_empty() {
            return Err(Error::config("face_boresights_deg", "at least one face is required"));
        }
        for (i, b) in beams.iter().enumerate() {
            if b.id != i {
                return Err(Error::config("beams", format!("beam at position {i} has id {}", b.id)));
            }
            if b.face >= face_boresights_deg.len() {
                return Err(Error::config("beams", format!("beam {i} refers to unknown face {}", b.face)));
            }
            if !(b.hpbw_deg > 0.0) || !b.peak_gain_dbi.is_finite() {
                return Err(Error::config("beams", format!("beam {i} has an invalid pattern")));
            }
        }
        for (i, a) in beams.iter().enumerate() {
            if let Some(b) = beams[..i].iter().find(|b| b.boresight == a.boresight) {
                return Err(Error::config(
                    "beams",
                    format!("beams {} and {} share a boresight", b.id, a.id),
                ));
            }
        }
        Ok(Self {
            beams,
            face_boresights_deg,
        })
    }

    pub fn beams(&self) -> &[Beam] {
        &self.beams
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn n_faces(&self) -> usize {
        self.face_boresights_deg.len()
    }

    pub fn face_boresights_deg(&self) -> &[f64] {
        &self.face_boresights_deg
    }

    pub fn beam(&self, id: usize) -> Option<&Beam> {
        self.beams.get(id)
    }

    /// CSV export: `beam_id,face,azimuth_deg,elevation_deg,hpbw_deg,peak_gain_dbi`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beam_id,face,azimuth_deg,elevation_deg,hpbw_deg,peak_gain_dbi\n");
        for b in &self.beams {
            writeln!(
                out,
                "{},{},{:.9},{:.9},{:.9},{:.9}",
                b.id, b.face, b.boresight.azimuth_deg, b.boresight.elevation_deg, b.hpbw_deg, b.peak_gain_dbi
            )
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Builds the four-face receive codebook.
///
/// Each face is a block of `rows` equal-height elevation bands. A row at
/// elevation `el` gets a share of the face's beams proportional to `cos(el)`,
/// so the great-circle spacing inside a row stays roughly constant. Even rows
/// put their beams at cell centers and odd rows shift by half a cell, which
/// gives hexagonal packing between neighbouring rows. The shifted rows end
/// exactly on the `+az_halfspan` edge, so the lattice continues evenly across
/// face boundaries when faces are `2 * az_halfspan` apart.
///
/// Ids run face-major, then row (lowest elevation first), then increasing
/// azimuth offset.
pub fn build_codebook(params: &CodebookParams) -> Result<BeamCodebook> {
    let az_h = params.az_halfspan_deg;
    let el_h = params.el_halfspan_deg;
    if !(az_h > 0.0 && az_h <= 180.0) {
        return Err(Error::config("az_halfspan_deg", format!("{az_h} not in (0, 180]")));
    }
    if !(el_h > 0.0 && el_h <= 90.0) {
        return Err(Error::config("el_halfspan_deg", format!("{el_h} not in (0, 90]")));
    }
    if params.face_boresights_deg.is_empty() {
        return Err(Error::config("face_boresights_deg", "at least one face is required"));
    }
    if params.face_boresights_deg.iter().any(|a| !a.is_finite()) {
        return Err(Error::config("face_boresights_deg", "azimuths must be finite"));
    }
    if !(params.hpbw_deg > 0.0 && params.hpbw_deg.is_finite()) {
        return Err(Error::config("hpbw_deg", "must be positive and finite"));
    }
    if !params.peak_gain_dbi.is_finite() {
        return Err(Error::config("peak_gain_dbi", "must be finite"));
    }
    let n = params.beams_per_face;
    if n == 0 {
        return Err(Error::config("beams_per_face", "must be at least 1"));
    }
    let rows = match params.rows {
        Some(r) if r == 0 || r > n => {
            return Err(Error::config(
                "rows",
                format!("{n} beams per face cannot be laid out on {r} rows"),
            ))
        }
        Some(r) => r,
        None => default_row_count(n, az_h, el_h),
    };

    let row_height = 2.0 * el_h / rows as f64;
    let row_el: Vec<f64> = (0..rows)
        .map(|i| -el_h + row_height * (i as f64 + 0.5))
        .collect();
    let counts = allocate_columns(n, &row_el);

    let mut beams = Vec::with_capacity(n * params.face_boresights_deg.len());
    for (face, &face_az) in params.face_boresights_deg.iter().enumerate() {
        for (row, (&el, &cols)) in row_el.iter().zip(&counts).enumerate() {
            let spacing = 2.0 * az_h / cols as f64;
            let shift = if row % 2 == 0 { 0.5 } else { 1.0 };
            for k in 0..cols {
                let offset = -az_h + spacing * (k as f64 + shift);
                beams.push(Beam {
                    id: beams.len(),
                    face,
                    boresight: Direction::new(face_az + offset, el),
                    hpbw_deg: params.hpbw_deg,
                    peak_gain_dbi: params.peak_gain_dbi,
                });
            }
        }
    }
    BeamCodebook::from_beams(params.face_boresights_deg.clone(), beams)
}

/// Row count whose band height best matches a hexagonal cell of the
/// per-beam solid angle.
fn default_row_count(n: usize, az_h: f64, el_h: f64) -> usize {
    let face_area_deg2 = 2.0 * az_h * 2.0 * el_h.to_radians().sin() * (180.0 / std::f64::consts::PI);
    let cell = face_area_deg2 / n as f64;
    let row_pitch = (3f64.sqrt() / 2.0 * cell).sqrt();
    ((2.0 * el_h / row_pitch).round() as usize).clamp(1, n)
}

/// One beam per row, then the rest by largest remainder on `cos(el)` weights.
/// Remainder ties go to the lower row.
fn allocate_columns(n: usize, row_el: &[f64]) -> Vec<usize> {
    let weights: Vec<f64> = row_el.iter().map(|e| e.to_radians().cos()).collect();
    let total: f64 = weights.iter().sum();
    let spare = n - row_el.len();
    let quotas: Vec<f64> = weights.iter().map(|w| spare as f64 * w / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| 1 + q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..row_el.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Id of the beam closest to `toward`; ties go to the lowest id.
pub fn nearest_beam(codebook: &BeamCodebook, toward: Direction) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for b in codebook.beams() {
        let d = angular_distance(b.boresight, toward);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((b.id, d));
        }
    }
    best.map(|(id, _)| id)
        .ok_or_else(|| Error::config("codebook", "codebook is empty"))
}

/// Largest distance from any point of the covered segment (full azimuth,
/// `|el| <= el_halfspan_deg`) to its nearest beam, on a `step_deg` grid.
pub fn covering_radius(codebook: &BeamCodebook, el_halfspan_deg: f64, step_deg: f64) -> f64 {
    let beams: Vec<[f64; 3]> = codebook.beams().iter().map(|b| b.boresight.unit_vector()).collect();
    let n_az = (360.0 / step_deg).round() as usize;
    let n_el = (2.0 * el_halfspan_deg / step_deg).round() as usize;
    let mut worst: f64 = 0.0;
    for j in 0..=n_el {
        let el = -el_halfspan_deg + step_deg * j as f64;
        for i in 0..n_az {
            let p = Direction::new(-180.0 + step_deg * i as f64, el).unit_vector();
            let best_dot = beams
                .iter()
                .map(|v| v[0] * p[0] + v[1] * p[1] + v[2] * p[2])
                .fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(best_dot.clamp(-1.0, 1.0).acos().to_degrees());
        }
    }
    worst
}

/// Smallest pairwise great-circle distance between beam boresights.
pub fn min_separation(codebook: &BeamCodebook) -> f64 {
    let beams = codebook.beams();
    let mut min = f64::INFINITY;
    for (i, a) in beams.iter().enumerate() {
        for b in &beams[i + 1..] {
            min = min.min(angular_distance(a.boresight, b.boresight));
        }
    }
    min
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dir(az: f64, el: f64) -> Direction {
        Direction::new(az, el)
    }

    #[test]
    fn default_codebook_has_200_beams_50_per_face() {
        let cb = build_codebook(&CodebookParams::default()).unwrap();
        assert_eq!(cb.len(), 200);
        for face in 0..4 {
            assert_eq!(cb.beams().iter().filter(|b| b.face == face).count(), 50);
        }
        for b in cb.beams() {
            assert_eq!(b.face, b.id / 50);
        }
    }

    #[test]
    fn default_rows_follow_cosine_allocation() {
        let cb = build_codebook(&CodebookParams::default()).unwrap();
        let mut per_row = std::collections::BTreeMap::<i64, usize>::new();
        for b in cb.beams().iter().filter(|b| b.face == 0) {
            *per_row.entry(b.boresight.elevation_deg.round() as i64).or_default() += 1;
        }
        let expected: Vec<(i64, usize)> = vec![(-25, 8), (-15, 8), (-5, 9), (5, 9), (15, 8), (25, 8)];
        assert_eq!(per_row.into_iter().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn single_beam_per_face_sits_on_boresight() {
        let params = CodebookParams {
            beams_per_face: 1,
            ..Default::default()
        };
        let cb = build_codebook(&params).unwrap();
        assert_eq!(cb.len(), 4);
        for (b, &az) in cb.beams().iter().zip(&params.face_boresights_deg) {
            assert_eq!(b.boresight, Direction::new(az, 0.0));
        }
    }

    #[test]
    fn rejects_bad_spans_and_layouts() {
        for (field, params) in [
            ("az_halfspan_deg", CodebookParams { az_halfspan_deg: 0.0, ..Default::default() }),
            ("el_halfspan_deg", CodebookParams { el_halfspan_deg: -1.0, ..Default::default() }),
            ("el_halfspan_deg", CodebookParams { el_halfspan_deg: 91.0, ..Default::default() }),
            ("beams_per_face", CodebookParams { beams_per_face: 0, ..Default::default() }),
            ("rows", CodebookParams { rows: Some(51), ..Default::default() }),
            ("rows", CodebookParams { rows: Some(0), ..Default::default() }),
        ] {
            match build_codebook(&params) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected config error on {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn explicit_rows_are_honoured() {
        let params = CodebookParams {
            rows: Some(5),
            ..Default::default()
        };
        let cb = build_codebook(&params).unwrap();
        assert_eq!(cb.len(), 200);
        let mut els: Vec<i64> = cb.beams().iter().map(|b| b.boresight.elevation_deg.round() as i64).collect();
        els.sort();
        els.dedup();
        assert_eq!(els, vec![-24, -12, 0, 12, 24]);
    }

    #[test]
    fn angular_distance_examples() {
        assert_eq!(angular_distance(dir(0.0, 0.0), dir(0.0, 0.0)), 0.0);
        assert!((angular_distance(dir(0.0, 0.0), dir(90.0, 0.0)) - 90.0).abs() < 1e-12);
        // spherical law of cosines, evaluated by hand
        let expected = 46.583394504705794;
        assert!((angular_distance(dir(10.0, 20.0), dir(-30.0, -5.0)) - expected).abs() < 1e-9);
        // azimuth is irrelevant at the pole
        assert!(angular_distance(dir(10.0, 90.0), dir(-100.0, 90.0)) < 1e-12);
        assert!((angular_distance(dir(179.0, 0.0), dir(-179.0, 0.0)) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rx_gain_examples() {
        let beam = Beam {
            id: 0,
            face: 0,
            boresight: dir(0.0, 0.0),
            hpbw_deg: RX_HPBW_DEG,
            peak_gain_dbi: RX_PEAK_GAIN_DBI,
        };
        assert_eq!(beam_gain_dbi(&beam, dir(0.0, 0.0)), 43.3);
        assert!((beam_gain_dbi(&beam, dir(8.4, 0.0)) - 40.3).abs() < 1e-9);
        assert!((beam_gain_dbi(&beam, dir(0.0, 60.0)) - 13.3).abs() < 1e-12);
    }

    #[test]
    fn tx_gain_examples() {
        let tx = TxPattern::default();
        assert_eq!(tx_gain_dbi(&tx, dir(0.0, 0.0)), 36.8);
        assert!((tx_gain_dbi(&tx, dir(27.05, 0.0)) - 33.8).abs() < 1e-9);
        assert!((tx_gain_dbi(&tx, dir(180.0, 0.0)) - 6.8).abs() < 1e-12);
        assert!(TxPattern { hpbw_deg: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn nearest_beam_to_face_zero_boresight() {
        let cb = build_codebook(&CodebookParams::default()).unwrap();
        // exhaustive scan: rows at el -25 (8) and -15 (8) precede the el -5 row,
        // whose fifth beam sits at az 0
        let brute = cb
            .beams()
            .iter()
            .min_by(|a, b| {
                angular_distance(a.boresight, dir(0.0, 0.0))
                    .total_cmp(&angular_distance(b.boresight, dir(0.0, 0.0)))
                    .then(a.id.cmp(&b.id))
            })
            .unwrap()
            .id;
        assert_eq!(brute, 20);
        assert_eq!(nearest_beam(&cb, dir(0.0, 0.0)).unwrap(), 20);
    }

    #[test]
    fn nearest_beam_tie_and_degenerate_cases() {
        let mk = |id, az| Beam {
            id,
            face: 0,
            boresight: dir(az, 0.0),
            hpbw_deg: 10.0,
            peak_gain_dbi: 0.0,
        };
        let cb = BeamCodebook::from_beams(vec![0.0], vec![mk(0, 10.0), mk(1, -10.0)]).unwrap();
        assert_eq!(nearest_beam(&cb, dir(0.0, 0.0)).unwrap(), 0);
        let single = BeamCodebook::from_beams(vec![0.0], vec![mk(0, 10.0)]).unwrap();
        assert_eq!(nearest_beam(&single, dir(-170.0, 40.0)).unwrap(), 0);
        let empty = BeamCodebook::from_beams(vec![0.0], vec![]).unwrap();
        assert!(nearest_beam(&empty, dir(0.0, 0.0)).is_err());
    }

    #[test]
    fn from_beams_rejects_duplicate_boresights() {
        let mk = |id| Beam {
            id,
            face: 0,
            boresight: dir(5.0, 0.0),
            hpbw_deg: 10.0,
            peak_gain_dbi: 0.0,
        };
        assert!(BeamCodebook::from_beams(vec![0.0], vec![mk(0), mk(1)]).is_err());
    }

    #[test]
    fn csv_export_has_header_and_one_row_per_beam() {
        let cb = build_codebook(&CodebookParams::default()).unwrap();
        let csv = cb.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "beam_id,face,azimuth_deg,elevation_deg,hpbw_deg,peak_gain_dbi"
        );
        assert_eq!(lines.count(), 200);
        assert!(csv.contains("\n20,0,0.000000000,-5.000000000,16.800000000,43.300000000\n"));
    }

    #[test]
    fn wrap_azimuth_range() {
        assert_eq!(wrap_azimuth(180.0), -180.0);
        assert_eq!(wrap_azimuth(-180.0), -180.0);
        assert_eq!(wrap_azimuth(225.0), -135.0);
        assert!(wrap_azimuth(-1e-17).abs() < 1e-12);
        assert!(wrap_azimuth(-1e-17) < 180.0);
    }

    fn any_dir() -> impl Strategy<Value = Direction> {
        (-180.0f64..180.0, -90.0f64..=90.0).prop_map(|(a, e)| Direction::new(a, e))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn angular_distance_is_a_metric(a in any_dir(), b in any_dir(), c in any_dir()) {
            let ab = angular_distance(a, b);
            prop_assert!((ab - angular_distance(b, a)).abs() <= 1e-9);
            prop_assert!((0.0..=180.0).contains(&ab));
            prop_assert!(ab <= angular_distance(a, c) + angular_distance(c, b) + 1e-9);
        }
    }

    proptest! {
        #[test]
        fn gain_is_non_increasing_off_axis(psi in 0.0f64..180.0, extra in 0.0f64..30.0) {
            let g1 = pattern_gain_dbi(RX_PEAK_GAIN_DBI, RX_HPBW_DEG, psi);
            let g2 = pattern_gain_dbi(RX_PEAK_GAIN_DBI, RX_HPBW_DEG, psi + extra);
            prop_assert!(g2 <= g1);
            prop_assert!(g1 <= RX_PEAK_GAIN_DBI);
            prop_assert!(g1 >= RX_PEAK_GAIN_DBI - SIDELOBE_FLOOR_DB);
        }
    }
}
