//! Synthetic array data: point sources on the sky, near-horizon interferers
//! and white receiver noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::beamform::{azel_unit, steering_vector, ArrayGeometry, SkyDirection, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::linalg::{rank_one_update, CovarianceMatrix, C64};

pub const LWA_LATITUDE_DEG: f64 = 34.07;
pub const LWA_LONGITUDE_DEG: f64 = -107.63;
/// Position of the distant reference antenna.
pub const OUTRIGGER_ENU: [f64; 3] = [-290.0, 70.0, 0.0];

const CORE_RADIUS_M: f64 = 50.0;
const MIN_SEPARATION_M: f64 = 2.0;
const CABLE_SLACK: f64 = 1.2;
const CABLE_VELOCITY_FACTOR: f64 = 0.8;

type Columns = Vec<Vec<C64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RfiWaveform {
    #[default]
    Gaussian,
    /// Constant-envelope tone with a random offset frequency and phase.
    Sinusoid,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RfiArrival {
    /// Radians; azimuth from north through east.
    AzEl {
        azimuth: f64,
        elevation: f64,
    },
    Steering(Vec<C64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfiEmitter {
    pub arrival: RfiArrival,
    pub power: f64,
    pub waveform: RfiWaveform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkySource {
    pub declination: f64,
    pub right_ascension: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkyScenario {
    pub geometry: ArrayGeometry,
    pub sources: Vec<SkySource>,
    pub rfi: Vec<RfiEmitter>,
    pub noise_power: f64,
    pub freq_hz: f64,
    pub lst_seconds: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ScenarioTruth {
    pub d_true: usize,
    /// Columns `√p_i a_i` of the interference mixing matrix.
    pub mixing: Vec<Vec<C64>>,
    pub r_exact: CovarianceMatrix,
}

impl SkyScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidArgument(format!(
                "{what} must be finite and nonnegative, got {v}"
            )))
        };
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return bad("noise power", self.noise_power);
        }
        for s in &self.sources {
            if !(s.power >= 0.0 && s.power.is_finite()) {
                return bad("source power", s.power);
            }
        }
        for e in &self.rfi {
            if !(e.power >= 0.0 && e.power.is_finite()) {
                return bad("RFI power", e.power);
            }
            if let RfiArrival::Steering(v) = &e.arrival {
                if v.len() != self.geometry.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.geometry.dim(),
                        got: v.len(),
                    });
                }
            }
        }
        if self.sources.is_empty() && self.rfi.is_empty() && self.noise_power == 0.0 {
            return Err(Error::InvalidArgument("scenario has no signal of any kind".into()));
        }
        Ok(())
    }

    pub fn source_direction(&self, s: &SkySource) -> Result<SkyDirection> {
        SkyDirection::new(s.declination, s.right_ascension, self.lst_seconds)
    }

    pub fn rfi_steering(&self, e: &RfiEmitter) -> Vec<C64> {
        match &e.arrival {
            RfiArrival::AzEl { azimuth, elevation } => self
                .geometry
                .steering_from_unit(azel_unit(*azimuth, *elevation), self.freq_hz),
            RfiArrival::Steering(v) => v.clone(),
        }
    }

    /// Columns `√power · a` for every source, then every emitter.
    fn components(&self) -> Result<(Columns, Columns)> {
        let sources = self
            .sources
            .iter()
            .map(|s| {
                let a = steering_vector(&self.geometry, &self.source_direction(s)?, self.freq_hz).entries;
                Ok(a.into_iter().map(|z| z * s.power.sqrt()).collect())
            })
            .collect::<Result<Vec<Vec<C64>>>>()?;
        let rfi = self
            .rfi
            .iter()
            .map(|e| self.rfi_steering(e).into_iter().map(|z| z * e.power.sqrt()).collect())
            .collect();
        Ok((sources, rfi))
    }

    /// Same scenario without interferers.
    pub fn without_rfi(&self) -> SkyScenario {
        SkyScenario {
            rfi: Vec::new(),
            ..self.clone()
        }
    }
}

pub fn exact_covariance(sc: &SkyScenario) -> Result<ScenarioTruth> {
    sc.validate()?;
    let dim = sc.geometry.dim();
    let (sources, rfi) = sc.components()?;
    let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
    for col in rfi.iter().chain(&sources) {
        rank_one_update(&mut entries, dim, col, 1.0);
    }
    for i in 0..dim {
        entries[i * dim + i] += sc.noise_power;
    }
    let r_exact = CovarianceMatrix::new(dim, entries, sc.freq_hz, 0, sc.lst_seconds)?;
    let mixing: Vec<Vec<C64>> = rfi
        .into_iter()
        .zip(&sc.rfi)
        .filter(|(_, e)| e.power > 0.0)
        .map(|(c, _)| c)
        .collect();
    Ok(ScenarioTruth {
        d_true: mixing.len(),
        mixing,
        r_exact,
    })
}

fn circular(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Sample covariance from `n` snapshots using the scenario seed.
pub fn sample_covariance(sc: &SkyScenario, n: usize) -> Result<CovarianceMatrix> {
    sample_covariance_seeded(sc, n, sc.seed)
}

pub fn sample_covariance_seeded(sc: &SkyScenario, n: usize, seed: u64) -> Result<CovarianceMatrix> {
    sc.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let dim = sc.geometry.dim();
    let (sources, rfi) = sc.components()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tones: Vec<Option<(f64, f64)>> = sc
        .rfi
        .iter()
        .map(|e| match e.waveform {
            RfiWaveform::Gaussian => None,
            RfiWaveform::Sinusoid => Some((rng.random_range(-0.5..0.5), rng.random_range(0.0..2.0 * PI))),
        })
        .collect();
    let sigma = sc.noise_power.sqrt();

    // snapshots stored antenna-major so each covariance entry is a row dot
    let mut x = vec![C64::new(0.0, 0.0); dim * n];
    for t in 0..n {
        for (col, tone) in rfi.iter().zip(&tones) {
            let g = match tone {
                None => circular(&mut rng),
                Some((f0, ph)) => C64::from_polar(1.0, 2.0 * PI * f0 * t as f64 + ph),
            };
            for (i, a) in col.iter().enumerate() {
                x[i * n + t] += a * g;
            }
        }
        for col in &sources {
            let s = circular(&mut rng);
            for (i, a) in col.iter().enumerate() {
                x[i * n + t] += a * s;
            }
        }
        for i in 0..dim {
            x[i * n + t] += circular(&mut rng) * sigma;
        }
    }

    let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
    let inv_n = 1.0 / n as f64;
    for i in 0..dim {
        let xi = &x[i * n..(i + 1) * n];
        for j in i..dim {
            let xj = &x[j * n..(j + 1) * n];
            let s: C64 = xi.iter().zip(xj).map(|(a, b)| a * b.conj()).sum();
            entries[i * dim + j] = s * inv_n;
            entries[j * dim + i] = (s * inv_n).conj();
        }
    }
    CovarianceMatrix::new(dim, entries, sc.freq_hz, n as u64, sc.lst_seconds)
}

/// Two independent realizations of the same sky: `a` to calibrate on and
/// `b` to clean. With `rfi_only_in_b`, `a` is drawn without interferers.
pub fn reference_pair(
    sc: &SkyScenario,
    n: usize,
    seed_a: u64,
    seed_b: u64,
    rfi_only_in_b: bool,
) -> Result<(CovarianceMatrix, CovarianceMatrix)> {
    let a_sc = if rfi_only_in_b { sc.without_rfi() } else { sc.clone() };
    let a = sample_covariance_seeded(&a_sc, n, seed_a)?;
    let b = sample_covariance_seeded(sc, n, seed_b)?;
    Ok((a, b))
}

/// A compact random core of `m − 1` stations plus one distant outrigger,
/// which is placed last and used as the phase reference.
pub fn lwa_like_geometry(m: usize, seed: u64) -> Result<ArrayGeometry> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 antennas, got {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<[f64; 3]> = Vec::with_capacity(m);
    let mut min_sep = MIN_SEPARATION_M;
    let mut misses = 0;
    while positions.len() < m - 1 {
        let x = rng.random_range(-CORE_RADIUS_M..CORE_RADIUS_M);
        let y = rng.random_range(-CORE_RADIUS_M..CORE_RADIUS_M);
        if x * x + y * y > CORE_RADIUS_M * CORE_RADIUS_M {
            continue;
        }
        let crowded = positions.iter().any(|p| (p[0] - x).hypot(p[1] - y) < min_sep);
        if crowded {
            misses += 1;
            if misses > 1000 {
                min_sep *= 0.9;
                misses = 0;
            }
            continue;
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        positions.push([x, y, 0.1 * z]);
    }
    positions.push(OUTRIGGER_ENU);
    let cable_delays = positions
        .iter()
        .map(|p| CABLE_SLACK * p[0].hypot(p[1]) / (CABLE_VELOCITY_FACTOR * SPEED_OF_LIGHT))
        .collect();
    ArrayGeometry::new(
        positions,
        cable_delays,
        LWA_LATITUDE_DEG.to_radians(),
        LWA_LONGITUDE_DEG.to_radians(),
        m - 1,
    )
}
