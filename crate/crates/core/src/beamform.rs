//! Steering vectors, beamformed power and the source-referenced quality
//! metrics built on them.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::detect::Method;
use crate::error::{Error, Result};
use crate::linalg::{dot, eigh, eigh_call_count, trace, CovarianceMatrix, C64};
use crate::mitigate::{subtract_subspace, MitigationReport};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Reported in place of 10·log10 of a non-positive SINR numerator.
pub const SINR_FLOOR_DB: f64 = -300.0;

/// Largest subtraction depth tried by the iterative-SINR search.
pub const ITERATIVE_SINR_MAX_DEPTH: usize = 32;

const SIDEREAL_DAY_SECONDS: f64 = 86_400.0;

/// Sidereal seconds to radians of rotation.
pub fn lst_radians(lst_seconds: f64) -> f64 {
    lst_seconds * 2.0 * PI / SIDEREAL_DAY_SECONDS
}

/// Right ascension in hours and minutes to radians.
pub fn ra_from_hm(hours: f64, minutes: f64) -> f64 {
    (hours + minutes / 60.0) * PI / 12.0
}

/// LST in seconds at which `ra` (radians) transits.
pub fn transit_lst_seconds(ra: f64) -> f64 {
    ra * SIDEREAL_DAY_SECONDS / (2.0 * PI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    /// East, north, up in metres.
    pub positions: Vec<[f64; 3]>,
    pub cable_delays: Vec<f64>,
    pub site_latitude: f64,
    pub site_longitude: f64,
    pub reference_index: usize,
}

impl ArrayGeometry {
    pub fn new(
        positions: Vec<[f64; 3]>,
        cable_delays: Vec<f64>,
        site_latitude: f64,
        site_longitude: f64,
        reference_index: usize,
    ) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "an array needs at least 2 antennas, got {}",
                positions.len()
            )));
        }
        if cable_delays.len() != positions.len() {
            return Err(Error::DimensionMismatch {
                expected: positions.len(),
                got: cable_delays.len(),
            });
        }
        if reference_index >= positions.len() {
            return Err(Error::InvalidArgument(format!(
                "reference index {reference_index} out of range for {} antennas",
                positions.len()
            )));
        }
        let finite = positions.iter().flatten().chain(&cable_delays).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("geometry contains non-finite values".into()));
        }
        Ok(Self {
            positions,
            cable_delays,
            site_latitude,
            site_longitude,
            reference_index,
        })
    }

    pub fn dim(&self) -> usize {
        self.positions.len()
    }

    /// Phase vector for a plane wave arriving from unit vector `s` (ENU).
    pub fn steering_from_unit(&self, s: [f64; 3], freq_hz: f64) -> Vec<C64> {
        let r0 = self.positions[self.reference_index];
        let c0 = self.cable_delays[self.reference_index];
        self.positions
            .iter()
            .zip(&self.cable_delays)
            .map(|(p, c)| {
                let proj = (p[0] - r0[0]) * s[0] + (p[1] - r0[1]) * s[1] + (p[2] - r0[2]) * s[2];
                let tau = -proj / SPEED_OF_LIGHT + (c - c0);
                C64::from_polar(1.0, -2.0 * PI * freq_hz * tau)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkyDirection {
    pub declination: f64,
    pub right_ascension: f64,
    pub lst_seconds: f64,
}

impl SkyDirection {
    pub fn new(declination: f64, right_ascension: f64, lst_seconds: f64) -> Result<Self> {
        if !(declination.abs() <= PI / 2.0) {
            return Err(Error::InvalidArgument(format!(
                "declination {declination} rad outside [-pi/2, pi/2]"
            )));
        }
        Ok(Self {
            declination,
            right_ascension,
            lst_seconds,
        })
    }

    pub fn from_degrees(dec_deg: f64, ra_rad: f64, lst_seconds: f64) -> Result<Self> {
        Self::new(dec_deg.to_radians(), ra_rad, lst_seconds)
    }

    pub fn hour_angle(&self) -> f64 {
        lst_radians(self.lst_seconds) - self.right_ascension
    }

    /// Topocentric unit vector (east, north, up) at `latitude`.
    pub fn enu(&self, latitude: f64) -> [f64; 3] {
        let (sd, cd) = self.declination.sin_cos();
        let (sh, ch) = self.hour_angle().sin_cos();
        let (sl, cl) = latitude.sin_cos();
        [-cd * sh, sd * cl - cd * sl * ch, sd * sl + cd * cl * ch]
    }
}

/// Unit vector toward azimuth (from north through east) and elevation.
pub fn azel_unit(azimuth: f64, elevation: f64) -> [f64; 3] {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    [ce * sa, ce * ca, se]
}

#[derive(Debug, Clone)]
pub struct SteeringVector {
    pub entries: Vec<C64>,
    pub freq_hz: f64,
    pub direction: SkyDirection,
    pub below_horizon: bool,
}

pub fn steering_vector(geom: &ArrayGeometry, dir: &SkyDirection, freq_hz: f64) -> SteeringVector {
    let s = dir.enu(geom.site_latitude);
    SteeringVector {
        entries: geom.steering_from_unit(s, freq_hz),
        freq_hz,
        direction: *dir,
        below_horizon: s[2] < 0.0,
    }
}

/// `Re(aᴴ R a)`, with small negative values from rounding clamped to zero.
pub fn beam_power(a: &[C64], r: &CovarianceMatrix) -> Result<f64> {
    if a.len() != r.dim() {
        return Err(Error::DimensionMismatch {
            expected: r.dim(),
            got: a.len(),
        });
    }
    let p = r.quadratic_form(a);
    if p < 0.0 && p >= -1e-10 * trace(r).abs() {
        return Ok(0.0);
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftScan {
    pub declinations_deg: Vec<f64>,
    pub powers: Vec<f64>,
    pub freq_hz: f64,
    pub right_ascension: f64,
}

impl DriftScan {
    pub fn new(declinations_deg: Vec<f64>, powers: Vec<f64>, freq_hz: f64, right_ascension: f64) -> Result<Self> {
        if declinations_deg.is_empty() || declinations_deg.len() != powers.len() {
            return Err(Error::DimensionMismatch {
                expected: declinations_deg.len(),
                got: powers.len(),
            });
        }
        if declinations_deg.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "declination grid must be strictly increasing".into(),
            ));
        }
        if powers.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("drift scan contains non-finite power".into()));
        }
        Ok(Self {
            declinations_deg,
            powers,
            freq_hz,
            right_ascension,
        })
    }

    pub fn peak_index(&self) -> usize {
        self.powers
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (i, &p)| if p > best.1 { (i, p) } else { best },
            )
            .0
    }

    /// Two-column `declination_deg,power` text.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# freq_hz={}\n# ra_rad={}\ndeclination_deg,power\n",
            self.freq_hz, self.right_ascension
        );
        for (d, p) in self.declinations_deg.iter().zip(&self.powers) {
            let _ = writeln!(s, "{d},{p}");
        }
        s
    }
}

/// Default scan: 1° steps over [−30°, 90°].
pub fn default_declination_grid() -> Vec<f64> {
    (-30..=90).map(f64::from).collect()
}

/// Steering vectors along a declination scan at fixed RA and LST, cached so
/// repeated SINR evaluations reuse them.
#[derive(Debug, Clone)]
pub struct ScanBeams {
    pub declinations_deg: Vec<f64>,
    pub right_ascension: f64,
    pub lst_seconds: f64,
    pub freq_hz: f64,
    vectors: Vec<Vec<C64>>,
}

impl ScanBeams {
    pub fn new(
        geom: &ArrayGeometry,
        right_ascension: f64,
        lst_seconds: f64,
        declinations_deg: &[f64],
        freq_hz: f64,
    ) -> Result<Self> {
        let vectors = declinations_deg
            .iter()
            .map(|&d| {
                let dir = SkyDirection::from_degrees(d, right_ascension, lst_seconds)?;
                Ok(steering_vector(geom, &dir, freq_hz).entries)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            declinations_deg: declinations_deg.to_vec(),
            right_ascension,
            lst_seconds,
            freq_hz,
            vectors,
        })
    }

    pub fn vectors(&self) -> &[Vec<C64>] {
        &self.vectors
    }

    /// Unclamped `Re(aᴴ R a)` per grid point.
    pub fn raw_powers(&self, r: &CovarianceMatrix) -> Vec<f64> {
        self.vectors.iter().map(|a| r.quadratic_form(a)).collect()
    }

    pub fn drift_scan(&self, r: &CovarianceMatrix) -> Result<DriftScan> {
        let powers = self
            .vectors
            .iter()
            .map(|a| beam_power(a, r))
            .collect::<Result<Vec<_>>>()?;
        DriftScan::new(
            self.declinations_deg.clone(),
            powers,
            self.freq_hz,
            self.right_ascension,
        )
    }

    pub fn sinr(&self, r_d: &CovarianceMatrix, mask: &[bool]) -> Result<f64> {
        check_band(self.freq_hz, r_d.freq_hz)?;
        sinr_from_powers(&self.raw_powers(r_d), trace(r_d), mask)
    }
}

fn check_band(expected: f64, got: f64) -> Result<()> {
    // exact matrices from tests often carry no band tag
    if got == 0.0 {
        return Ok(());
    }
    crate::detect::check_band(expected, got)
}

/// `|a_δᴴ a_s|²` over the declination grid at the source's RA and LST.
pub fn point_spread_function(
    geom: &ArrayGeometry,
    src: &SkyDirection,
    decl_grid_deg: &[f64],
    freq_hz: f64,
) -> Result<DriftScan> {
    let a_s = steering_vector(geom, src, freq_hz).entries;
    let beams = ScanBeams::new(geom, src.right_ascension, src.lst_seconds, decl_grid_deg, freq_hz)?;
    let powers = beams.vectors.iter().map(|a| dot(a, &a_s).norm_sqr()).collect();
    DriftScan::new(decl_grid_deg.to_vec(), powers, freq_hz, src.right_ascension)
}

/// Samples strictly above the scan mean.
pub fn source_range(scan: &DriftScan) -> Vec<bool> {
    let mean = scan.powers.iter().sum::<f64>() / scan.powers.len() as f64;
    scan.powers.iter().map(|&p| p > mean).collect()
}

/// The contiguous run of [`source_range`] that contains the scan peak.
pub fn source_lobe(scan: &DriftScan) -> Vec<bool> {
    let raw = source_range(scan);
    let peak = scan.peak_index();
    let mut mask = vec![false; raw.len()];
    if !raw[peak] {
        return mask;
    }
    let mut lo = peak;
    while lo > 0 && raw[lo - 1] {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < raw.len() && raw[hi + 1] {
        hi += 1;
    }
    mask[lo..=hi].iter_mut().for_each(|m| *m = true);
    mask
}

/// Half of the full width at half maximum of the peak, in degrees, with
/// linear interpolation between samples. Clipped at the grid edges.
pub fn main_lobe_half_width(scan: &DriftScan) -> f64 {
    let peak = scan.peak_index();
    let half = 0.5 * scan.powers[peak];
    let x = &scan.declinations_deg;
    let p = &scan.powers;
    let crossing = |i: usize, j: usize| x[i] + (half - p[i]) * (x[j] - x[i]) / (p[j] - p[i]);
    let left = (0..peak)
        .rev()
        .find(|&i| p[i] <= half)
        .map_or(x[0], |i| crossing(i, i + 1));
    let right = (peak + 1..p.len())
        .find(|&i| p[i] <= half)
        .map_or(x[x.len() - 1], |i| crossing(i - 1, i));
    0.5 * (right - left)
}

/// SINR in dB from per-grid beam powers.
pub fn sinr_from_powers(powers: &[f64], trace_r: f64, mask: &[bool]) -> Result<f64> {
    if mask.len() != powers.len() {
        return Err(Error::DimensionMismatch {
            expected: powers.len(),
            got: mask.len(),
        });
    }
    let inside = mask.iter().filter(|&&m| m).count();
    if inside == 0 || inside == mask.len() {
        return Err(Error::InvalidArgument(
            "source mask must be a nonempty strict subset of the grid".into(),
        ));
    }
    let masked: f64 = powers.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| p).sum();
    let num = masked / inside as f64 - trace_r;
    let den = powers.iter().sum::<f64>() / powers.len() as f64 - trace_r;
    if num <= 0.0 {
        return Ok(SINR_FLOOR_DB);
    }
    if den <= 0.0 || den.abs() <= 1e-12 * trace_r.abs() {
        return Err(Error::DegenerateDenominator { denominator: den });
    }
    Ok(10.0 * (num / den).log10())
}

/// SINR of `r_d` toward a declination scan at one right ascension.
pub fn sinr(
    r_d: &CovarianceMatrix,
    geom: &ArrayGeometry,
    right_ascension: f64,
    lst_seconds: f64,
    decl_grid_deg: &[f64],
    mask: &[bool],
    freq_hz: f64,
) -> Result<f64> {
    ScanBeams::new(geom, right_ascension, lst_seconds, decl_grid_deg, freq_hz)?.sinr(r_d, mask)
}

/// Exhaustive search over subtraction depth for the SINR maximum.
///
/// One eigendecomposition; each further depth subtracts `λ_k |aᴴu_k|²` from
/// the cached beam powers. Ties go to the smaller depth. Candidates with a
/// degenerate denominator are skipped and flagged.
pub fn iterative_sinr_clean(
    r: &CovarianceMatrix,
    beams: &ScanBeams,
    mask: &[bool],
    d_max: Option<usize>,
) -> Result<(CovarianceMatrix, MitigationReport)> {
    let start = std::time::Instant::now();
    let eigh_before = eigh_call_count();
    let dim = r.dim();
    let d_max = d_max.unwrap_or(ITERATIVE_SINR_MAX_DEPTH).min(dim.saturating_sub(1));
    let eig = eigh(r)?;
    let mut powers = beams.raw_powers(r);
    let mut tr = trace(r);
    let mut curve = Vec::with_capacity(d_max + 1);
    let mut flags = Vec::new();
    let mut best: Option<(usize, f64)> = None;

    for k in 0..=d_max {
        if k > 0 {
            let (lambda, u) = (eig.values[k - 1], &eig.vectors[k - 1]);
            for (p, a) in powers.iter_mut().zip(beams.vectors()) {
                *p -= lambda * dot(u, a).norm_sqr();
            }
            tr -= lambda;
        }
        match sinr_from_powers(&powers, tr, mask) {
            Ok(s) => {
                curve.push((k, s));
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((k, s));
                }
            }
            Err(Error::DegenerateDenominator { .. }) => flags.push(format!("degenerate@{k}")),
            Err(e) => return Err(e),
        }
    }
    let Some((d_hat, _)) = best else {
        return Err(Error::DegenerateDenominator { denominator: 0.0 });
    };
    let (cleaned, mut report) = subtract_subspace(r, &eig.vectors[..d_hat], &eig.values[..d_hat])?;
    report.method = Method::IterativeSinr;
    report.trail = curve;
    report.flags = flags;
    report.eigh_calls = eigh_call_count() - eigh_before;
    report.wall_time_ns = start.elapsed().as_nanos();
    Ok((cleaned, report))
}

/// Beamformed power over a (declination × RA) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SkyImage {
    pub declinations_deg: Vec<f64>,
    pub right_ascensions: Vec<f64>,
    pub freq_hz: f64,
    pub lst_seconds: f64,
    /// `powers[k][l]` at declination k and right ascension l.
    pub powers: Vec<Vec<f64>>,
}

impl SkyImage {
    pub fn normalized(&self) -> SkyImage {
        let max = self.powers.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
        let mut out = self.clone();
        if max > 0.0 {
            out.powers.iter_mut().flatten().for_each(|p| *p /= max);
        }
        out
    }

    /// `(row, col)` of the largest cell.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for (k, row) in self.powers.iter().enumerate() {
            for (l, &p) in row.iter().enumerate() {
                if p > best.2 {
                    best = (k, l, p);
                }
            }
        }
        (best.0, best.1)
    }

    /// Fraction of cells strictly brighter than `(row, col)`.
    pub fn rank_fraction(&self, row: usize, col: usize) -> f64 {
        let v = self.powers[row][col];
        let total = self.powers.len() * self.powers[0].len();
        let brighter = self.powers.iter().flatten().filter(|&&p| p > v).count();
        brighter as f64 / total as f64
    }

    /// Comma-separated rows, one per declination, after `#` header lines.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = format!("# freq_hz={}\n# lst_seconds={}\n", self.freq_hz, self.lst_seconds);
        let _ = writeln!(s, "# ra_rad={}", join(&self.right_ascensions));
        let _ = writeln!(s, "# declination_deg={}", join(&self.declinations_deg));
        for row in &self.powers {
            let _ = writeln!(s, "{}", join(row));
        }
        s
    }
}

pub fn sky_image(
    r_d: &CovarianceMatrix,
    geom: &ArrayGeometry,
    ra_grid: &[f64],
    decl_grid_deg: &[f64],
    lst_seconds: f64,
    freq_hz: f64,
) -> Result<SkyImage> {
    if ra_grid.is_empty() || decl_grid_deg.is_empty() {
        return Err(Error::InvalidArgument("image grids must be nonempty".into()));
    }
    let powers = decl_grid_deg
        .par_iter()
        .map(|&d| {
            ra_grid
                .iter()
                .map(|&ra| {
                    let dir = SkyDirection::from_degrees(d, ra, lst_seconds)?;
                    beam_power(&steering_vector(geom, &dir, freq_hz).entries, r_d)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SkyImage {
        declinations_deg: decl_grid_deg.to_vec(),
        right_ascensions: ra_grid.to_vec(),
        freq_hz,
        lst_seconds,
        powers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdrResult {
    pub mse: f64,
    /// `1/mse`, or `f64::INFINITY` when `mse < 1e-300`.
    pub sdr: f64,
}

/// Distortion of the point-spread function when the array response is
/// projected onto `u_kept`, measured over `probe` directions.
pub fn image_projection_and_sdr(
    u_kept: &[Vec<C64>],
    geom: &ArrayGeometry,
    src: &SkyDirection,
    probe: &[SkyDirection],
    freq_hz: f64,
) -> Result<SdrResult> {
    let dim = geom.dim();
    if let Some(u) = u_kept.iter().find(|u| u.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: u.len(),
        });
    }
    if probe.is_empty() {
        return Err(Error::InvalidArgument("probe grid is empty".into()));
    }
    let project = |a: &[C64]| -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); dim];
        for u in u_kept {
            let c = dot(u, a);
            for (o, ui) in out.iter_mut().zip(u) {
                *o += ui * c;
            }
        }
        out
    };
    let a_s = steering_vector(geom, src, freq_hz).entries;
    let pa_s = project(&a_s);
    let norm = (dim * dim) as f64;
    let mse = probe
        .iter()
        .map(|dir| {
            let a = steering_vector(geom, dir, freq_hz).entries;
            // aᴴ P a_s a_sᴴ P a = |(P a)ᴴ a_s|² with P Hermitian idempotent
            let projected = dot(&a, &pa_s).norm_sqr() / norm;
            let raw = dot(&a, &a_s).norm_sqr() / norm;
            (projected - raw).powi(2)
        })
        .sum::<f64>()
        / probe.len() as f64;
    let sdr = if mse < 1e-300 { f64::INFINITY } else { 1.0 / mse };
    Ok(SdrResult { mse, sdr })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_array(n: usize, spacing: f64) -> ArrayGeometry {
        let positions = (0..n).map(|i| [i as f64 * spacing, 0.0, 0.0]).collect();
        ArrayGeometry::new(positions, vec![0.0; n], 34.07f64.to_radians(), 0.0, 0).unwrap()
    }

    #[test]
    fn zenith_source_gives_ones() {
        let geom = line_array(5, 3.0);
        // declination = latitude at transit is the zenith
        let dir = SkyDirection::new(geom.site_latitude, 1.0, transit_lst_seconds(1.0)).unwrap();
        let a = steering_vector(&geom, &dir, 40e6);
        assert!(!a.below_horizon);
        for z in &a.entries {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn full_wavelength_baseline_is_in_phase() {
        let b = 10.0;
        let geom = ArrayGeometry::new(vec![[0.0, 0.0, 0.0], [b, 0.0, 0.0]], vec![0.0, 0.0], 0.0, 0.0, 0).unwrap();
        let a = geom.steering_from_unit([1.0, 0.0, 0.0], SPEED_OF_LIGHT / b);
        assert!((a[1] - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn reference_entry_is_exactly_one() {
        let geom = line_array(4, 2.5);
        let dir = SkyDirection::from_degrees(20.0, 0.3, 1000.0).unwrap();
        let a = steering_vector(&geom, &dir, 27e6);
        assert_eq!(a.entries[0], C64::new(1.0, 0.0));
        assert!(a.entries.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn beam_power_examples() {
        let geom = line_array(4, 2.5);
        let dir = SkyDirection::from_degrees(20.0, 0.3, 1000.0).unwrap();
        let a = steering_vector(&geom, &dir, 27e6).entries;
        assert!((beam_power(&a, &CovarianceMatrix::identity(4)).unwrap() - 4.0).abs() < 1e-12);

        let mut entries = vec![C64::new(0.0, 0.0); 16];
        crate::linalg::rank_one_update(&mut entries, 4, &a, 1.0);
        let r = CovarianceMatrix::new(4, entries, 0.0, 0, 0.0).unwrap();
        assert!((beam_power(&a, &r).unwrap() - 16.0).abs() < 1e-10);

        let perp = vec![
            C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0),
        ];
        let mut entries = vec![C64::new(0.0, 0.0); 16];
        crate::linalg::rank_one_update(&mut entries, 4, &perp, 1.0);
        let r = CovarianceMatrix::new(4, entries, 0.0, 0, 0.0).unwrap();
        let ones = vec![C64::new(1.0, 0.0); 4];
        assert_eq!(beam_power(&ones, &r).unwrap(), 0.0);
        assert!(matches!(
            beam_power(&ones[..3], &r),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn constant_scan_has_empty_mask() {
        let scan = DriftScan::new(vec![0.0, 1.0, 2.0], vec![5.0; 3], 1.0, 0.0).unwrap();
        assert_eq!(source_range(&scan), vec![false; 3]);
        assert_eq!(source_lobe(&scan), vec![false; 3]);
    }

    #[test]
    fn mask_on_constructed_scan() {
        // mean = 2.5; samples 3, 6, 4 above it; 3.0 at the far end is a sidelobe
        let powers = vec![1.0, 1.0, 3.0, 6.0, 4.0, 1.0, 1.0, 1.0, 1.5, 3.0];
        let decl: Vec<f64> = (0..10).map(f64::from).collect();
        let scan = DriftScan::new(decl, powers, 1.0, 0.0).unwrap();
        let raw = source_range(&scan);
        let want_raw: Vec<bool> = [0, 0, 1, 1, 1, 0, 0, 0, 0, 1].iter().map(|&b| b == 1).collect();
        assert_eq!(raw, want_raw);
        let lobe = source_lobe(&scan);
        let want_lobe: Vec<bool> = [0, 0, 1, 1, 1, 0, 0, 0, 0, 0].iter().map(|&b| b == 1).collect();
        assert_eq!(lobe, want_lobe);
    }

    #[test]
    fn half_width_of_triangle() {
        let powers = vec![0.0, 0.5, 1.0, 0.5, 0.0];
        let decl: Vec<f64> = (0..5).map(f64::from).collect();
        let scan = DriftScan::new(decl, powers, 1.0, 0.0).unwrap();
        assert!((main_lobe_half_width(&scan) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sinr_of_identity_is_floor() {
        let powers = vec![4.0; 6];
        let mask = vec![false, false, true, true, false, false];
        assert_eq!(sinr_from_powers(&powers, 4.0, &mask).unwrap(), SINR_FLOOR_DB);
        assert!(matches!(
            sinr_from_powers(&powers, 4.0, &[false; 6]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn sinr_degenerate_denominator() {
        // numerator positive, grid mean equal to the trace
        let powers = vec![2.0, 6.0, 2.0, 2.0];
        let mask = vec![false, true, false, false];
        assert!(matches!(
            sinr_from_powers(&powers, 3.0, &mask),
            Err(Error::DegenerateDenominator { .. })
        ));
    }

    #[test]
    fn identity_projection_has_infinite_sdr() {
        let geom = line_array(6, 4.0);
        let src = SkyDirection::from_degrees(40.0, 0.0, 0.0).unwrap();
        let probe: Vec<SkyDirection> = (0..10)
            .map(|k| SkyDirection::from_degrees(10.0 * k as f64 - 20.0, 0.0, 0.0).unwrap())
            .collect();
        let basis: Vec<Vec<C64>> = (0..6)
            .map(|k| {
                let mut v = vec![C64::new(0.0, 0.0); 6];
                v[k] = C64::new(1.0, 0.0);
                v
            })
            .collect();
        let res = image_projection_and_sdr(&basis, &geom, &src, &probe, 30e6).unwrap();
        assert_eq!(res.mse, 0.0);
        assert!(res.sdr.is_infinite());
    }

    #[test]
    fn drift_scan_rejects_unsorted_grid() {
        assert!(DriftScan::new(vec![1.0, 1.0], vec![0.0, 0.0], 1.0, 0.0).is_err());
    }
}
