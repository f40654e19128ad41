//! Dense Hermitian linear algebra shared by the rest of the crate.
//!
//! Matrices are stored row-major as `Vec<Complex64>`. The full eigensolver
//! is Householder tridiagonalization followed by implicit-shift QL, which is
//! the O(M³) baseline that the Krylov path is measured against.

use std::cell::Cell;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

thread_local! {
    static EIGH_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of full eigendecompositions performed on the current thread.
///
/// Pipelines read this before and after a run to prove which code path they
/// took; the counter is per thread so concurrent work does not interfere.
pub fn eigh_call_count() -> u64 {
    EIGH_CALLS.with(|c| c.get())
}

/// An M×M Hermitian covariance matrix with band metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    dim: usize,
    entries: Vec<C64>,
    /// Centre frequency of the band in Hz.
    pub freq_hz: f64,
    /// Number of snapshots averaged; 0 marks an exact (analytic) matrix.
    pub sample_count: u64,
    /// Local sidereal time tag in seconds.
    pub lst_seconds: f64,
}

impl CovarianceMatrix {
    /// Builds a covariance matrix from row-major entries, symmetrizing via
    /// `(A + Aᴴ) / 2`.
    pub fn new(dim: usize, entries: Vec<C64>, freq_hz: f64, sample_count: u64, lst_seconds: f64) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        if let Some(pos) = entries.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let mut m = Self {
            dim,
            entries,
            freq_hz,
            sample_count,
            lst_seconds,
        };
        m.symmetrize();
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
        for (i, &v) in diag.iter().enumerate() {
            entries[i * dim + i] = C64::new(v, 0.0);
        }
        Self {
            dim,
            entries,
            freq_hz: 0.0,
            sample_count: 0,
            lst_seconds: 0.0,
        }
    }

    /// Copies band metadata from `other`.
    pub fn with_metadata_of(mut self, other: &CovarianceMatrix) -> Self {
        self.freq_hz = other.freq_hz;
        self.sample_count = other.sample_count;
        self.lst_seconds = other.lst_seconds;
        self
    }

    pub fn with_freq(mut self, freq_hz: f64) -> Self {
        self.freq_hz = freq_hz;
        self
    }

    fn symmetrize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            let d = self.entries[i * n + i];
            self.entries[i * n + i] = C64::new(d.re, 0.0);
            for j in (i + 1)..n {
                let a = self.entries[i * n + j];
                let b = self.entries[j * n + i].conj();
                let s = (a + b) * 0.5;
                self.entries[i * n + j] = s;
                self.entries[j * n + i] = s.conj();
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.dim + col]
    }

    pub fn row(&self, row: usize) -> &[C64] {
        &self.entries[row * self.dim..(row + 1) * self.dim]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[C64] {
        &self.entries
    }

    /// `y = R x`.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (yi, row) in y.iter_mut().zip(self.entries.chunks_exact(self.dim)) {
            *yi = row.iter().zip(x).map(|(r, v)| r * v).sum();
        }
    }

    /// Real part of `aᴴ R a`.
    pub fn quadratic_form(&self, a: &[C64]) -> f64 {
        self.entries
            .chunks_exact(self.dim)
            .zip(a)
            .map(|(row, ai)| {
                let s: C64 = row.iter().zip(a).map(|(r, v)| r * v).sum();
                (ai.conj() * s).re
            })
            .sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.entries.iter_mut().for_each(|z| *z *= c);
        out
    }

    /// Largest `|R_ij − conj(R_ji)|` relative to the largest entry magnitude,
    /// evaluated on raw (unsymmetrized) row-major data.
    pub fn relative_asymmetry(dim: usize, entries: &[C64]) -> f64 {
        let scale = entries.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in i..dim {
                let d = (entries[i * dim + j] - entries[j * dim + i].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst / scale
    }

    /// Projects onto the PSD cone by zeroing eigenvalues in
    /// `[−1e-10·trace/M, 0)`. Larger negative eigenvalues are kept.
    pub fn psd_clamped(&self) -> Result<Self> {
        let eig = eigh(self)?;
        let floor = -1e-10 * trace(self).abs() / self.dim as f64;
        let values: Vec<f64> = eig
            .values
            .iter()
            .map(|&v| if v < 0.0 && v >= floor { 0.0 } else { v })
            .collect();
        let rebuilt = EigenDecomposition {
            values,
            vectors: eig.vectors,
        };
        Ok(rebuilt.reconstruct().with_metadata_of(self))
    }
}

/// Eigenpairs of a Hermitian matrix, values descending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit-norm eigenvector for `values[k]`.
    pub vectors: Vec<Vec<C64>>,
}

impl EigenDecomposition {
    /// `U Λ Uᴴ` as a covariance matrix without metadata.
    pub fn reconstruct(&self) -> CovarianceMatrix {
        let n = self.values.len();
        let mut entries = vec![C64::new(0.0, 0.0); n * n];
        for (lambda, u) in self.values.iter().zip(&self.vectors) {
            rank_one_update(&mut entries, n, u, *lambda);
        }
        CovarianceMatrix::new(n, entries, 0.0, 0, 0.0).expect("finite by construction")
    }
}

/// Symmetric tridiagonal matrix: diagonal `alpha`, off-diagonal `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || beta.len() + 1 != alpha.len() {
            return Err(Error::DimensionMismatch {
                expected: alpha.len().saturating_sub(1),
                got: beta.len(),
            });
        }
        Ok(Self { alpha, beta })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// `entries += scale · u uᴴ` on a row-major n×n buffer.
pub(crate) fn rank_one_update(entries: &mut [C64], n: usize, u: &[C64], scale: f64) {
    for (i, row) in entries.chunks_exact_mut(n).enumerate() {
        let ui = u[i] * scale;
        for (r, uj) in row.iter_mut().zip(u) {
            *r += ui * uj.conj();
        }
    }
}

/// `Σ conj(a_i) b_i`.
#[inline]
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(r: &CovarianceMatrix) -> f64 {
    (0..r.dim()).map(|i| r.get(i, i).re).sum()
}

pub fn frobenius_norm_sq(r: &CovarianceMatrix) -> f64 {
    r.as_slice().iter().map(|z| z.norm_sqr()).sum()
}

/// Full eigendecomposition of a Hermitian matrix, values descending with
/// ties kept in their original order.
pub fn eigh(r: &CovarianceMatrix) -> Result<EigenDecomposition> {
    EIGH_CALLS.with(|c| c.set(c.get() + 1));
    let n = r.dim();
    if let Some(pos) = r.as_slice().iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite {
            row: pos / n,
            col: pos % n,
        });
    }
    if n == 0 {
        return Ok(EigenDecomposition {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }

    let (mut diag, mut offdiag, mut basis) = householder_tridiagonalize(r);
    tql_implicit(&mut diag, &mut offdiag, |i, c, s| {
        let (lo, hi) = basis.split_at_mut(i + 1);
        let (vi, vj) = (&mut lo[i], &mut hi[0]);
        for (zi, zj) in vi.iter_mut().zip(vj.iter_mut()) {
            let f = *zj;
            *zj = *zi * s + f * c;
            *zi = *zi * c - f * s;
        }
    })?;

    let order = descending_order(&diag);
    let values = order.iter().map(|&k| diag[k]).collect();
    let mut slots: Vec<Option<Vec<C64>>> = basis.into_iter().map(Some).collect();
    let vectors = order
        .iter()
        .map(|&k| slots[k].take().expect("each index used once"))
        .collect();
    Ok(EigenDecomposition { values, vectors })
}

/// Eigenpairs of a real symmetric tridiagonal matrix. Values descending;
/// `vectors[k]` is the k-th eigenvector.
pub fn tridiag_eigh(t: &Tridiagonal) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = t.len();
    if let Some(pos) = t.alpha.iter().chain(&t.beta).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: pos, col: pos });
    }
    let mut d = t.alpha.clone();
    let mut e = t.beta.clone();
    e.push(0.0);
    // basis[k] holds the k-th column of the rotation accumulator
    let mut basis: Vec<Vec<f64>> = (0..m)
        .map(|k| {
            let mut v = vec![0.0; m];
            v[k] = 1.0;
            v
        })
        .collect();
    tql_implicit(&mut d, &mut e, |i, c, s| {
        let (lo, hi) = basis.split_at_mut(i + 1);
        for (zi, zj) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
            let f = *zj;
            *zj = s * *zi + c * f;
            *zi = c * *zi - s * f;
        }
    })?;
    let order = descending_order(&d);
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = order.iter().map(|&k| basis[k].clone()).collect();
    Ok((values, vectors))
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable sort keeps ascending index order on ties
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

/// Reduces a Hermitian matrix to real symmetric tridiagonal form.
///
/// Returns `(diag, offdiag, basis)` where `offdiag[k]` couples k and k+1
/// (the last entry is a zero pad) and `basis[j]` is column j of the unitary
/// `Q·D` such that `R = (Q·D) T (Q·D)ᴴ`.
fn householder_tridiagonalize(r: &CovarianceMatrix) -> (Vec<f64>, Vec<f64>, Vec<Vec<C64>>) {
    let n = r.dim();
    let mut a = r.as_slice().to_vec();
    let mut reflectors: Vec<(Vec<C64>, f64)> = Vec::with_capacity(n.saturating_sub(2));
    let mut sub = vec![C64::new(0.0, 0.0); n];
    let mut p = vec![C64::new(0.0, 0.0); n];

    for k in 0..n.saturating_sub(1) {
        let len = n - k - 1;
        let mut w: Vec<C64> = (k + 1..n).map(|i| a[i * n + k]).collect();
        let xnorm = norm(&w);
        let alpha = w[0];
        if len == 1 || xnorm == 0.0 {
            sub[k] = alpha;
            reflectors.push((Vec::new(), 0.0));
            continue;
        }
        let abs_alpha = alpha.norm();
        let phase = if abs_alpha > 0.0 {
            alpha / abs_alpha
        } else {
            C64::new(1.0, 0.0)
        };
        w[0] += phase * xnorm;
        let tau = 1.0 / (xnorm * (xnorm + abs_alpha));
        sub[k] = -phase * xnorm;

        // trailing block S = a[k+1.., k+1..]: p = tau S w
        let off = k + 1;
        for (ii, pi) in p[..len].iter_mut().enumerate() {
            let row = &a[(off + ii) * n + off..(off + ii) * n + n];
            let s: C64 = row.iter().zip(&w).map(|(x, y)| x * y).sum();
            *pi = s * tau;
        }
        let kappa = 0.5 * tau * dot(&w, &p[..len]).re;
        for (pi, wi) in p[..len].iter_mut().zip(&w) {
            *pi -= wi * kappa;
        }
        // S -= w qᴴ + q wᴴ
        for ii in 0..len {
            let wi = w[ii];
            let qi = p[ii];
            let row = &mut a[(off + ii) * n + off..(off + ii) * n + n];
            for ((x, wj), qj) in row.iter_mut().zip(&w).zip(&p[..len]) {
                *x -= wi * qj.conj() + qi * wj.conj();
            }
        }
        reflectors.push((w, tau));
    }

    let diag: Vec<f64> = (0..n).map(|i| a[i * n + i].re).collect();

    // Q = H_0 H_1 ... accumulated backwards into row-major q
    let mut q = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        q[i * n + i] = C64::new(1.0, 0.0);
    }
    let mut s = vec![C64::new(0.0, 0.0); n];
    for (k, (w, tau)) in reflectors.iter().enumerate().rev() {
        if w.is_empty() {
            continue;
        }
        let off = k + 1;
        let s = &mut s[off..];
        s.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for (ii, wi) in w.iter().enumerate() {
            let wc = wi.conj();
            let row = &q[(off + ii) * n + off..(off + ii) * n + n];
            for (sj, x) in s.iter_mut().zip(row) {
                *sj += wc * x;
            }
        }
        for (ii, wi) in w.iter().enumerate() {
            let f = wi * *tau;
            let row = &mut q[(off + ii) * n + off..(off + ii) * n + n];
            for (x, sj) in row.iter_mut().zip(s.iter()) {
                *x -= f * sj;
            }
        }
    }

    // diagonal phases making the off-diagonal real and nonnegative
    let mut phases = vec![C64::new(1.0, 0.0); n];
    let mut offdiag = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let e = sub[k];
        let mag = e.norm();
        offdiag[k] = mag;
        phases[k + 1] = if mag > 0.0 { phases[k] * (e / mag) } else { phases[k] };
    }

    let basis = (0..n)
        .map(|j| (0..n).map(|i| q[i * n + j] * phases[j]).collect())
        .collect();
    (diag, offdiag, basis)
}

/// Implicit-shift QL on a symmetric tridiagonal (`e[i]` couples i and i+1,
/// `e[n-1]` is scratch). Each plane rotation on (i, i+1) is reported through
/// `rotate(i, c, s)` so callers can accumulate eigenvectors.
fn tql_implicit(d: &mut [f64], e: &mut [f64], mut rotate: impl FnMut(usize, f64, f64)) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::NoConvergence { index: l });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                rotate(i, c, s);
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}
