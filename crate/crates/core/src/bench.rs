//! Paired timings of the Lanczos pipeline against the full-eigendecomposition
//! pipeline on synthetic interference scenarios.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detect::{calibrate_epsilon, DetectConfig};
use crate::error::Result;
use crate::mitigate::{clean_qmam, clean_with_eigh, EighDetector};
use crate::skysim::{lwa_like_geometry, reference_pair, RfiArrival, RfiEmitter, RfiWaveform, SkyScenario};

#[derive(Debug, Clone)]
pub struct BenchSettings {
    pub dims: Vec<usize>,
    pub d: usize,
    pub trials: usize,
    pub samples: usize,
    /// Interference-to-noise ratio per element, dB.
    pub inr_db: f64,
    pub seed: u64,
    pub detect: DetectConfig,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            dims: vec![64, 128, 256, 512],
            d: 3,
            trials: 11,
            samples: 4096,
            inr_db: 30.0,
            seed: 1,
            detect: DetectConfig {
                tau_phi: 0.01,
                ..DetectConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub dim: usize,
    pub d: usize,
    pub qmam_ns: u128,
    pub eigh_ns: u128,
    pub qmam_d_hat: usize,
    pub mdl_d_hat: usize,
    pub qmam_eigh_calls: u64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub qmam_slope: f64,
    pub eigh_slope: f64,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,d,qmam_median_ns,eigh_median_ns,ratio,qmam_d_hat,mdl_d_hat,qmam_eigh_calls\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{:.4},{},{},{}\n",
                r.dim,
                r.d,
                r.qmam_ns,
                r.eigh_ns,
                r.qmam_ns as f64 / r.eigh_ns as f64,
                r.qmam_d_hat,
                r.mdl_d_hat,
                r.qmam_eigh_calls
            ));
        }
        s.push_str(&format!(
            "# qmam_slope = {:.3}\n# eigh_slope = {:.3}\n",
            self.qmam_slope, self.eigh_slope
        ));
        s
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn median(mut v: Vec<u128>) -> u128 {
    v.sort_unstable();
    v[v.len() / 2]
}

/// Scenario with `d` near-horizon Gaussian emitters over white noise.
pub fn interference_scenario(dim: usize, d: usize, inr_db: f64, seed: u64) -> Result<SkyScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let power = 10f64.powf(inr_db / 10.0);
    let rfi = (0..d)
        .map(|_| RfiEmitter {
            arrival: RfiArrival::AzEl {
                azimuth: rng.random_range(0.0..std::f64::consts::TAU),
                elevation: rng.random_range(0.0..10f64.to_radians()),
            },
            power,
            waveform: RfiWaveform::Gaussian,
        })
        .collect();
    Ok(SkyScenario {
        geometry: lwa_like_geometry(dim, seed)?,
        sources: Vec::new(),
        rfi,
        noise_power: 1.0,
        freq_hz: 41e6,
        lst_seconds: 0.0,
        seed,
    })
}

/// Times one matrix size; each pipeline runs `trials` times, interleaved.
pub fn bench_one(dim: usize, s: &BenchSettings) -> Result<BenchRow> {
    let sc = interference_scenario(dim, s.d, s.inr_db, s.seed)?;
    let (reference, r) = reference_pair(&sc, s.samples, s.seed + 1, s.seed + 2, true)?;
    let cal = calibrate_epsilon(&reference, 0)?;
    let mut tq = Vec::with_capacity(s.trials);
    let mut te = Vec::with_capacity(s.trials);
    // untimed pass so allocation and cache warm-up stay out of the medians
    clean_qmam(&r, &cal, &s.detect)?;
    clean_with_eigh(&r, EighDetector::Mdl)?;
    let mut last = None;
    for _ in 0..s.trials {
        let t0 = Instant::now();
        let (_, rq) = clean_qmam(&r, &cal, &s.detect)?;
        tq.push(t0.elapsed().as_nanos());
        let t0 = Instant::now();
        let (_, re) = clean_with_eigh(&r, EighDetector::Mdl)?;
        te.push(t0.elapsed().as_nanos());
        last = Some((rq, re));
    }
    let (rq, re) = last.expect("at least one trial");
    Ok(BenchRow {
        dim,
        d: s.d,
        qmam_ns: median(tq),
        eigh_ns: median(te),
        qmam_d_hat: rq.d_hat,
        mdl_d_hat: re.d_hat,
        qmam_eigh_calls: rq.eigh_calls,
    })
}

pub fn run_bench(s: &BenchSettings) -> Result<BenchReport> {
    let rows = s
        .dims
        .iter()
        .map(|&m| {
            let row = bench_one(m, s)?;
            log::info!("bench m={m} qmam={}ns eigh={}ns", row.qmam_ns, row.eigh_ns);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = rows.iter().map(|r| r.dim as f64).collect();
    let yq: Vec<f64> = rows.iter().map(|r| r.qmam_ns as f64).collect();
    let ye: Vec<f64> = rows.iter().map(|r| r.eigh_ns as f64).collect();
    let (qmam_slope, eigh_slope) = if rows.len() >= 2 {
        (fit_loglog_slope(&x, &yq), fit_loglog_slope(&x, &ye))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(BenchReport {
        rows,
        qmam_slope,
        eigh_slope,
    })
}
