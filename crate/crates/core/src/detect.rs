//! Interferer-count detection: sphericity ratios, ε calibration, the φ
//! test and the Lanczos-coupled detection loop, plus the MDL baseline.

use std::fmt;

use crate::error::{Error, Result};
use crate::lanczos::{LanczosState, Reorth, StepStatus, DEFAULT_START_SEED};
use crate::linalg::{eigh, frobenius_norm_sq, trace, CovarianceMatrix, C64};

/// φ values within this distance above the threshold still accept. Exact
/// calibration puts φ_d at zero up to rounding, which would otherwise flip
/// the decision on the last bit.
pub const PHI_ZERO_BAND: f64 = 1e-9;

/// Relative floor applied to eigenvalues before taking logarithms in MDL.
pub const GMAM_CLAMP_REL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Qmam,
    Mdl,
    IterativeSinr,
    /// Caller-supplied interferer count.
    Fixed,
    /// Pass-through.
    None,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Qmam => "QMAM",
            Method::Mdl => "MDL",
            Method::IterativeSinr => "ITERATIVE-SINR",
            Method::Fixed => "FIXED",
            Method::None => "NONE",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "QMAM" => Ok(Method::Qmam),
            "MDL" => Ok(Method::Mdl),
            "ITERATIVE-SINR" => Ok(Method::IterativeSinr),
            "FIXED" => Ok(Method::Fixed),
            "NONE" => Ok(Method::None),
            other => Err(Error::InvalidArgument(format!("unknown method tag '{other}'"))),
        }
    }
}

/// Conditions worth surfacing next to a detection result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectFlag {
    /// The Ritz radicand for this candidate went negative and was clamped.
    Unconverged { d_hat: usize },
    /// The Lanczos run hit an invariant subspace after this many steps.
    Breakdown { step: usize },
    /// Eigenvalues were clamped before taking logarithms.
    ClampedEigenvalues,
    /// Fewer samples than antennas; the MDL criterion is degenerate.
    DegenerateSampleCount,
}

impl fmt::Display for DetectFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectFlag::Unconverged { d_hat } => write!(f, "unconverged@{d_hat}"),
            DetectFlag::Breakdown { step } => write!(f, "breakdown@{step}"),
            DetectFlag::ClampedEigenvalues => f.write_str("clamped-eigenvalues"),
            DetectFlag::DegenerateSampleCount => f.write_str("degenerate-n"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub d_hat: usize,
    /// `(candidate, statistic)` in evaluation order: φ for QMAM, the
    /// description length for MDL, SINR in dB for iterative-SINR.
    pub trail: Vec<(usize, f64)>,
    pub method: Method,
    pub lanczos_steps: usize,
    pub flags: Vec<DetectFlag>,
}

fn tail(values: &[f64], d_hat: usize) -> Result<&[f64]> {
    if d_hat >= values.len() {
        return Err(Error::EmptyTail {
            d_hat,
            dim: values.len(),
        });
    }
    Ok(&values[d_hat..])
}

/// Geometric over arithmetic mean of `values[d_hat..]`.
pub fn gmam(values: &[f64], d_hat: usize) -> Result<f64> {
    let t = tail(values, d_hat)?;
    if let Some((i, &v)) = t.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveEigenvalue {
            index: d_hat + i,
            value: v,
        });
    }
    Ok(gm_over_am(t))
}

fn gm_over_am(t: &[f64]) -> f64 {
    let n = t.len() as f64;
    let log_gm = t.iter().map(|v| v.ln()).sum::<f64>() / n;
    let am = t.iter().sum::<f64>() / n;
    (log_gm - am.ln()).exp()
}

/// GMAM with eigenvalues floored at `GMAM_CLAMP_REL · values[0]`. The flag
/// is set when any tail value was raised.
pub fn gmam_clamped(values: &[f64], d_hat: usize) -> Result<(f64, bool)> {
    let t = tail(values, d_hat)?;
    let floor = GMAM_CLAMP_REL * values[0].abs();
    let mut clamped = false;
    let t: Vec<f64> = t
        .iter()
        .map(|&v| {
            if v < floor {
                clamped = true;
                floor
            } else {
                v
            }
        })
        .collect();
    if !(floor > 0.0) {
        return Err(Error::NonPositiveEigenvalue {
            index: 0,
            value: values[0],
        });
    }
    Ok((gm_over_am(&t), clamped))
}

/// Quadratic over arithmetic mean of `values[d_hat..]`.
pub fn qmam_from_eigenvalues(values: &[f64], d_hat: usize) -> Result<f64> {
    let t = tail(values, d_hat)?;
    let n = t.len() as f64;
    let qm = (t.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let am = t.iter().sum::<f64>() / n;
    if !(am > 0.0) {
        return Err(Error::NonPositiveEigenvalue {
            index: values.len() - 1,
            value: am,
        });
    }
    Ok(qm / am)
}

/// The same ratio as [`qmam_from_eigenvalues`], computed from the trace, the
/// squared Frobenius norm and the top `d_hat` Ritz values only.
pub fn qmam_from_ritz(trace_r: f64, frob_sq_r: f64, theta: &[f64], d_hat: usize, dim: usize) -> Result<f64> {
    if d_hat >= dim {
        return Err(Error::EmptyTail { d_hat, dim });
    }
    if d_hat > theta.len() {
        return Err(Error::DimensionMismatch {
            expected: d_hat,
            got: theta.len(),
        });
    }
    let top = &theta[..d_hat];
    let rest = (dim - d_hat) as f64;
    let radicand = (frob_sq_r - top.iter().map(|t| t * t).sum::<f64>()) / rest;
    if radicand < 0.0 {
        return Err(Error::NegativeRadicand { d_hat, radicand });
    }
    let am = (trace_r - top.iter().sum::<f64>()) / rest;
    if !(am > 0.0) {
        return Err(Error::NonPositiveEigenvalue {
            index: dim - 1,
            value: am,
        });
    }
    Ok(radicand.sqrt() / am)
}

/// φ = ln(ε η).
pub fn phi_statistic(epsilon: f64, eta: f64) -> f64 {
    (epsilon * eta).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonCalibration {
    pub epsilon: f64,
    /// `(lst_seconds, ε)` for each reference that went into `epsilon`.
    pub constituents: Vec<(f64, f64)>,
    pub freq_hz: f64,
    pub d_ref: usize,
    pub weights: Option<Vec<f64>>,
}

impl EpsilonCalibration {
    /// A calibration with a known ε and no provenance.
    pub fn fixed(epsilon: f64, freq_hz: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            epsilon,
            constituents: Vec::new(),
            freq_hz,
            d_ref: 0,
            weights: None,
        })
    }

    /// Averages several per-LST calibrations of the same band.
    pub fn combine(parts: &[EpsilonCalibration]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("no calibrations to combine".into()))?;
        for p in &parts[1..] {
            check_band(first.freq_hz, p.freq_hz)?;
        }
        let constituents: Vec<(f64, f64)> = parts
            .iter()
            .flat_map(|p| {
                if p.constituents.is_empty() {
                    vec![(0.0, p.epsilon)]
                } else {
                    p.constituents.clone()
                }
            })
            .collect();
        let epsilon = constituents.iter().map(|c| c.1).sum::<f64>() / constituents.len() as f64;
        Ok(Self {
            epsilon,
            constituents,
            freq_hz: first.freq_hz,
            d_ref: parts.iter().map(|p| p.d_ref).max().unwrap_or(0),
            weights: None,
        })
    }
}

pub(crate) fn check_band(expected: f64, got: f64) -> Result<()> {
    let scale = expected.abs().max(got.abs());
    if (expected - got).abs() > 1e-9 * scale {
        return Err(Error::BandMismatch { expected, got });
    }
    Ok(())
}

/// ε from the eigenvalue tail of an RFI-free (or already cleaned) reference.
pub fn calibrate_epsilon(reference: &CovarianceMatrix, d_ref: usize) -> Result<EpsilonCalibration> {
    let dim = reference.dim();
    if d_ref >= dim {
        return Err(Error::EmptyTail { d_hat: d_ref, dim });
    }
    let eig = eigh(reference)?;
    let floor = -1e-10 * trace(reference).abs() / dim as f64;
    let values: Vec<f64> = eig
        .values
        .iter()
        .map(|&v| if v < 0.0 && v >= floor { 0.0 } else { v })
        .collect();
    let lambda_min = values[dim - 1];
    if !(lambda_min > 0.0) {
        return Err(Error::ZeroMinEigenvalue(lambda_min));
    }
    let weights: Vec<f64> = values[d_ref..].iter().map(|v| v / lambda_min).collect();
    let epsilon = 1.0 / qmam_from_eigenvalues(&weights, 0)?;
    Ok(EpsilonCalibration {
        epsilon,
        constituents: vec![(reference.lst_seconds, epsilon)],
        freq_hz: reference.freq_hz,
        d_ref,
        weights: Some(weights),
    })
}

#[derive(Debug, Clone)]
pub struct DetectConfig {
    /// Explicit step cap; derived from `d_expected` when `None`.
    pub m_max: Option<usize>,
    pub d_expected: usize,
    pub reorth: Reorth,
    pub start_seed: u64,
    /// Overrides the seeded starting vector.
    pub start_vector: Option<Vec<C64>>,
    /// Accept when φ < `tau_phi`.
    pub tau_phi: f64,
    /// Steps required beyond the candidate before trusting its φ.
    pub guard: usize,
    /// First candidate evaluated (1 reproduces the original loop).
    pub floor: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            m_max: None,
            d_expected: 32,
            reorth: Reorth::Full,
            start_seed: DEFAULT_START_SEED,
            start_vector: None,
            tau_phi: 0.0,
            guard: 2,
            floor: 0,
        }
    }
}

impl DetectConfig {
    pub fn m_max_for(&self, dim: usize) -> usize {
        let derived = 32.max(4 * self.d_expected);
        self.m_max.unwrap_or(derived).min(dim).max(1)
    }

    pub(crate) fn start(&self, r: &CovarianceMatrix) -> Result<LanczosState> {
        let s = match &self.start_vector {
            Some(f) => LanczosState::init(r, Some(f))?,
            None => LanczosState::seeded(r, self.start_seed)?,
        };
        Ok(s.with_reorth(self.reorth))
    }
}

/// QMAM detection; see [`detect_qmam_with_state`].
pub fn detect_qmam(r: &CovarianceMatrix, cal: &EpsilonCalibration, config: &DetectConfig) -> Result<DetectionResult> {
    detect_qmam_with_state(r, cal, config).map(|(d, _)| d)
}

/// Runs Lanczos steps and candidate tests together, returning the detection
/// and the Lanczos state so the caller can lift the Ritz vectors.
pub fn detect_qmam_with_state(
    r: &CovarianceMatrix,
    cal: &EpsilonCalibration,
    config: &DetectConfig,
) -> Result<(DetectionResult, LanczosState)> {
    check_band(cal.freq_hz, r.freq_hz)?;
    let dim = r.dim();
    let tr = trace(r);
    let fr = frobenius_norm_sq(r);
    let m_max = config.m_max_for(dim);
    let mut state = config.start(r)?;
    let mut trail = Vec::new();
    let mut flags = Vec::new();
    let mut d_hat = config.floor;

    let advance = |state: &mut LanczosState, flags: &mut Vec<DetectFlag>| -> Result<()> {
        if let StepStatus::Breakdown { .. } = state.step(r)? {
            flags.push(DetectFlag::Breakdown { step: state.m() });
        }
        Ok(())
    };

    loop {
        if d_hat >= dim || d_hat > m_max {
            return Err(Error::NoAcceptance {
                limit: d_hat.min(m_max),
            });
        }
        let need = (d_hat + config.guard).min(m_max).max(d_hat.max(1));
        while state.m() < need && !state.is_exhausted() {
            advance(&mut state, &mut flags)?;
        }
        if d_hat > state.m() {
            return Err(Error::NoAcceptance { limit: state.m() });
        }
        let theta = state.ritz_values()?;
        let phi = match qmam_from_ritz(tr, fr, &theta, d_hat, dim) {
            Ok(eta) => phi_statistic(cal.epsilon, eta),
            Err(Error::NegativeRadicand { .. }) => {
                flags.push(DetectFlag::Unconverged { d_hat });
                if state.m() < m_max && !state.is_exhausted() {
                    advance(&mut state, &mut flags)?;
                    continue;
                }
                f64::NEG_INFINITY
            }
            Err(e) => return Err(e),
        };
        trail.push((d_hat, phi));
        if phi < config.tau_phi + PHI_ZERO_BAND {
            log::debug!("qmam accepted d_hat={d_hat} phi={phi:.6e} m={}", state.m());
            let result = DetectionResult {
                d_hat,
                trail,
                method: Method::Qmam,
                lanczos_steps: state.m(),
                flags,
            };
            return Ok((result, state));
        }
        d_hat += 1;
    }
}

/// Minimum-description-length order estimate from a full eigendecomposition.
pub fn detect_mdl(r: &CovarianceMatrix) -> Result<DetectionResult> {
    let eig = eigh(r)?;
    detect_mdl_from_eigenvalues(&eig.values, r.sample_count)
}

/// MDL on precomputed descending eigenvalues.
pub fn detect_mdl_from_eigenvalues(values: &[f64], n: u64) -> Result<DetectionResult> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "MDL needs a sample count; exact covariances have N = 0".into(),
        ));
    }
    let dim = values.len();
    let nf = n as f64;
    let mut flags = Vec::new();
    if (n as usize) < dim {
        flags.push(DetectFlag::DegenerateSampleCount);
    }
    let mut trail = Vec::with_capacity(dim);
    let mut any_clamped = false;
    for k in 0..dim {
        let (l, clamped) = gmam_clamped(values, k)?;
        any_clamped |= clamped;
        let kf = k as f64;
        let mdl = -nf * (dim - k) as f64 * l.ln() + 0.5 * kf * (2.0 * dim as f64 - kf) * nf.ln();
        trail.push((k, mdl));
    }
    if any_clamped {
        flags.push(DetectFlag::ClampedEigenvalues);
    }
    let d_hat = trail
        .iter()
        .fold(
            (0, f64::INFINITY),
            |best, &(k, v)| if v < best.1 { (k, v) } else { best },
        )
        .0;
    Ok(DetectionResult {
        d_hat,
        trail,
        method: Method::Mdl,
        lanczos_steps: 0,
        flags,
    })
}
