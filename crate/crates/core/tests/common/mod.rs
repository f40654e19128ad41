#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rfi_scrub::beamform::{default_declination_grid, ArrayGeometry, SkyDirection};
use rfi_scrub::beamform::{point_spread_function, ra_from_hm, source_lobe, transit_lst_seconds, ScanBeams};
use rfi_scrub::linalg::{dot, norm};
use rfi_scrub::skysim::{lwa_like_geometry, RfiArrival, RfiEmitter, RfiWaveform, SkyScenario, SkySource};
use rfi_scrub::{CovarianceMatrix, C64};

pub const M: usize = 64;
pub const N: usize = 4096;
pub const GEOMETRY_SEED: u64 = 7;
/// Test source: 58.8° declination, 23h23m right ascension.
pub const SOURCE_DEC_DEG: f64 = 58.8;
pub const SOURCE_POWER: f64 = 0.004;

pub fn cgauss(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-like random unitary by Gram–Schmidt on Gaussian columns.
pub fn random_unitary(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<C64>> {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<C64> = (0..dim).map(|_| cgauss(rng)).collect();
        for _ in 0..2 {
            for q in &cols {
                let c = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= qi * c;
                }
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            cols.push(v.into_iter().map(|z| z / n).collect());
        }
    }
    cols
}

/// `Q diag(values) Qᴴ` with the given columns.
pub fn from_spectrum(q: &[Vec<C64>], values: &[f64]) -> CovarianceMatrix {
    let dim = q.len();
    let mut e = vec![C64::new(0.0, 0.0); dim * dim];
    for (col, &l) in q.iter().zip(values) {
        for i in 0..dim {
            let s = col[i] * l;
            for j in 0..dim {
                e[i * dim + j] += s * col[j].conj();
            }
        }
    }
    CovarianceMatrix::new(dim, e, 0.0, 0, 0.0).unwrap()
}

/// Random PSD matrix: a noise-like tail in [0.75, 1.25] (the sample
/// covariance band for M/N = 1/64) and `d` dominant values log-uniform from
/// `gap` to `100·gap` times the tail maximum. Returns the matrix and its
/// descending spectrum.
pub fn dominant_psd(dim: usize, d: usize, gap: f64, seed: u64) -> (CovarianceMatrix, Vec<f64>) {
    const TAIL: (f64, f64) = (0.75, 1.25);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_unitary(dim, &mut rng);
    let mut values: Vec<f64> = (0..dim)
        .map(|k| {
            if k < d {
                gap * TAIL.1 * 10f64.powf(rng.random_range(0.0..2.0))
            } else {
                rng.random_range(TAIL.0..TAIL.1)
            }
        })
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    (from_spectrum(&q, &values), values)
}

pub fn source_ra() -> f64 {
    ra_from_hm(23.0, 23.0)
}

pub fn geometry() -> ArrayGeometry {
    lwa_like_geometry(M, GEOMETRY_SEED).unwrap()
}

/// Near-horizon Gaussian emitters, each `inr_db` (or a range) above noise.
pub fn random_rfi(rng: &mut ChaCha8Rng, d: usize, inr_db: (f64, f64)) -> Vec<RfiEmitter> {
    (0..d)
        .map(|_| {
            let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
            let elevation = rng.random_range(0.0..10.0f64).to_radians();
            let db = if inr_db.0 == inr_db.1 {
                inr_db.0
            } else {
                rng.random_range(inr_db.0..inr_db.1)
            };
            RfiEmitter {
                arrival: RfiArrival::AzEl { azimuth, elevation },
                power: 10f64.powf(db / 10.0),
                waveform: RfiWaveform::Gaussian,
            }
        })
        .collect()
}

/// Single-source sky at transit with the given interferers.
pub fn scenario(geom: &ArrayGeometry, rfi: Vec<RfiEmitter>, freq_hz: f64, source_power: f64, seed: u64) -> SkyScenario {
    let ra = source_ra();
    SkyScenario {
        geometry: geom.clone(),
        sources: vec![SkySource {
            declination: SOURCE_DEC_DEG.to_radians(),
            right_ascension: ra,
            power: source_power,
        }],
        rfi,
        noise_power: 1.0,
        freq_hz,
        lst_seconds: transit_lst_seconds(ra),
        seed,
    }
}

/// Scan beams and the source mask for the test source.
pub fn sinr_setup(geom: &ArrayGeometry, freq_hz: f64) -> (ScanBeams, Vec<bool>) {
    let ra = source_ra();
    let lst = transit_lst_seconds(ra);
    let grid = default_declination_grid();
    let beams = ScanBeams::new(geom, ra, lst, &grid, freq_hz).unwrap();
    let src = SkyDirection::new(SOURCE_DEC_DEG.to_radians(), ra, lst).unwrap();
    let psf = point_spread_function(geom, &src, &grid, freq_hz).unwrap();
    (beams, source_lobe(&psf))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
