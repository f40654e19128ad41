//! Subspace subtraction and the end-to-end cleaning pipelines.

use std::fmt::Write as _;
use std::time::Instant;

use crate::detect::{
    detect_mdl_from_eigenvalues, detect_qmam_with_state, DetectConfig, DetectFlag, EpsilonCalibration, Method,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, eigh, eigh_call_count, rank_one_update, trace, CovarianceMatrix, C64};

/// Relative tolerance on ‖VᴴV − I‖_F, scaled by the number of vectors.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MitigationReport {
    pub d_hat: usize,
    pub method: Method,
    /// Sum of the removed eigen- or Ritz values.
    pub removed_power: f64,
    pub residual_trace: f64,
    pub lanczos_steps: usize,
    pub wall_time_ns: u128,
    /// Full eigendecompositions performed by this pipeline run.
    pub eigh_calls: u64,
    /// Detection statistic per candidate (φ, MDL or SINR dB).
    pub trail: Vec<(usize, f64)>,
    pub flags: Vec<String>,
}

impl MitigationReport {
    fn new(method: Method) -> Self {
        Self {
            d_hat: 0,
            method,
            removed_power: 0.0,
            residual_trace: 0.0,
            lanczos_steps: 0,
            wall_time_ns: 0,
            eigh_calls: 0,
            trail: Vec::new(),
            flags: Vec::new(),
        }
    }

    /// One-line `key=value` record. Timing is optional so that records can
    /// be compared byte for byte across runs.
    pub fn to_record(&self, with_timing: bool) -> String {
        let mut s = format!(
            "method={} d_hat={} removed_power={} residual_trace={} lanczos_steps={} eigh_calls={}",
            self.method, self.d_hat, self.removed_power, self.residual_trace, self.lanczos_steps, self.eigh_calls
        );
        if with_timing {
            let _ = write!(s, " wall_time_ns={}", self.wall_time_ns);
        }
        if !self.flags.is_empty() {
            let _ = write!(s, " flags={}", self.flags.join(","));
        }
        if !self.trail.is_empty() {
            let trail: Vec<String> = self.trail.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            let _ = write!(s, " trail={}", trail.join(","));
        }
        s
    }
}

fn orthonormality_deviation(vectors: &[Vec<C64>]) -> f64 {
    let mut acc = 0.0;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate() {
            let g = dot(a, b);
            let want = if i == j { 1.0 } else { 0.0 };
            acc += (g - want).norm_sqr();
        }
    }
    acc.sqrt()
}

/// `R − V diag(values) Vᴴ`, re-symmetrized, with metadata carried over.
pub fn subtract_subspace(
    r: &CovarianceMatrix,
    vectors: &[Vec<C64>],
    values: &[f64],
) -> Result<(CovarianceMatrix, MitigationReport)> {
    let dim = r.dim();
    if vectors.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            got: vectors.len(),
        });
    }
    if vectors.len() > dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: vectors.len(),
        });
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    let d = vectors.len();
    let deviation = orthonormality_deviation(vectors);
    if deviation > ORTHONORMAL_TOL * d as f64 {
        return Err(Error::NonOrthonormalBasis { deviation });
    }

    let mut entries = r.as_slice().to_vec();
    for (v, &theta) in vectors.iter().zip(values) {
        rank_one_update(&mut entries, dim, v, -theta);
    }
    let cleaned = CovarianceMatrix::new(dim, entries, r.freq_hz, r.sample_count, r.lst_seconds)?;
    let mut report = MitigationReport::new(Method::Fixed);
    report.d_hat = d;
    report.removed_power = values.iter().sum();
    report.residual_trace = trace(&cleaned);
    Ok((cleaned, report))
}

/// Lanczos detection followed by Ritz-vector subtraction. Never performs a
/// full eigendecomposition.
pub fn clean_qmam(
    r: &CovarianceMatrix,
    cal: &EpsilonCalibration,
    config: &DetectConfig,
) -> Result<(CovarianceMatrix, MitigationReport)> {
    let start = Instant::now();
    let eigh_before = eigh_call_count();
    let (det, state) = detect_qmam_with_state(r, cal, config)?;
    let (cleaned, mut report) = if det.d_hat == 0 {
        let mut rep = MitigationReport::new(Method::Qmam);
        rep.residual_trace = trace(r);
        (r.clone(), rep)
    } else {
        let pairs = state.ritz_pairs_top(det.d_hat)?;
        subtract_subspace(r, &pairs.vectors, &pairs.theta)?
    };
    report.method = Method::Qmam;
    report.lanczos_steps = det.lanczos_steps;
    report.trail = det.trail;
    report.flags = det.flags.iter().map(DetectFlag::to_string).collect();
    report.eigh_calls = eigh_call_count() - eigh_before;
    report.wall_time_ns = start.elapsed().as_nanos();
    Ok((cleaned, report))
}

/// How the eigendecomposition path chooses d̂.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EighDetector {
    Fixed(usize),
    Mdl,
}

/// Full eigendecomposition, then removal of the top d̂ exact eigenpairs.
pub fn clean_with_eigh(r: &CovarianceMatrix, detector: EighDetector) -> Result<(CovarianceMatrix, MitigationReport)> {
    let start = Instant::now();
    let eigh_before = eigh_call_count();
    let eig = eigh(r)?;
    let (d_hat, method, trail, flags) = match detector {
        EighDetector::Fixed(d) => {
            if d > r.dim() {
                return Err(Error::DimensionMismatch {
                    expected: r.dim(),
                    got: d,
                });
            }
            (d, Method::Fixed, Vec::new(), Vec::new())
        }
        EighDetector::Mdl => {
            let det = detect_mdl_from_eigenvalues(&eig.values, r.sample_count)?;
            let flags = det.flags.iter().map(DetectFlag::to_string).collect();
            (det.d_hat, Method::Mdl, det.trail, flags)
        }
    };
    let (cleaned, mut report) = subtract_subspace(r, &eig.vectors[..d_hat], &eig.values[..d_hat])?;
    report.method = method;
    report.trail = trail;
    report.flags = flags;
    report.eigh_calls = eigh_call_count() - eigh_before;
    report.wall_time_ns = start.elapsed().as_nanos();
    Ok((cleaned, report))
}
