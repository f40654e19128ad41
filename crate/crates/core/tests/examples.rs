//! Scenario-level checks: Monte-Carlo detection rates, closed-form
//! simulator spectra, subtraction bounds and imaging behaviour.

mod common;

use common::{cgauss, geometry, random_rfi, rng, scenario, sinr_setup, source_ra, N, SOURCE_DEC_DEG};
use rfi_scrub::beamform::{
    image_projection_and_sdr, iterative_sinr_clean, point_spread_function, ra_from_hm, sky_image, source_lobe,
    steering_vector, transit_lst_seconds, ScanBeams, SkyDirection, SkyImage,
};
use rfi_scrub::detect::{
    calibrate_epsilon, detect_mdl, detect_qmam, phi_statistic, qmam_from_eigenvalues, DetectConfig, EpsilonCalibration,
    PHI_ZERO_BAND,
};
use rfi_scrub::linalg::{dot, eigh, frobenius_norm_sq, norm};
use rfi_scrub::mitigate::{clean_qmam, clean_with_eigh, subtract_subspace, EighDetector};
use rfi_scrub::skysim::{
    exact_covariance, lwa_like_geometry, reference_pair, sample_covariance_seeded, RfiArrival, RfiEmitter, RfiWaveform,
    SkyScenario, SkySource,
};
use rfi_scrub::{CovarianceMatrix, C64};

fn noise_only(m: usize, rfi: Vec<RfiEmitter>) -> SkyScenario {
    SkyScenario {
        geometry: lwa_like_geometry(m, 11).unwrap(),
        sources: Vec::new(),
        rfi,
        noise_power: 1.0,
        freq_hz: 41e6,
        lst_seconds: 0.0,
        seed: 0,
    }
}

fn rel_diff(a: &CovarianceMatrix, b: &CovarianceMatrix) -> f64 {
    let d: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    (d / frobenius_norm_sq(b)).sqrt()
}

#[test]
fn mdl_on_white_noise() {
    let sc = noise_only(16, Vec::new());
    let hits = (0..100)
        .filter(|&t| detect_mdl(&sample_covariance_seeded(&sc, N, t).unwrap()).unwrap().d_hat == 0)
        .count();
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn mdl_counts_two_interferers() {
    let mut g = rng(21);
    let hits = (0..100)
        .filter(|&t| {
            let sc = noise_only(32, random_rfi(&mut g, 2, (30.0, 30.0)));
            detect_mdl(&sample_covariance_seeded(&sc, N, t).unwrap()).unwrap().d_hat == 2
        })
        .count();
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn qmam_counts_two_interferers_and_agrees_with_mdl() {
    let geom = geometry();
    let cfg = DetectConfig {
        tau_phi: 0.01,
        ..DetectConfig::default()
    };
    let mut g = rng(22);
    let (mut hits, mut agree) = (0, 0);
    for t in 0..100u64 {
        let sc = scenario(&geom, random_rfi(&mut g, 2, (30.0, 30.0)), 41e6, 0.004, t);
        let (reference, r) = reference_pair(&sc, N, 3 * t + 7, 3 * t + 8, true).unwrap();
        let cal = calibrate_epsilon(&reference, 0).unwrap();
        let dq = detect_qmam(&r, &cal, &cfg).unwrap().d_hat;
        let dm = detect_mdl(&r).unwrap().d_hat;
        hits += usize::from(dq == 2);
        agree += usize::from(dq == dm);
    }
    assert!(hits >= 95, "qmam {hits}/100");
    assert!(agree >= 90, "agreement {agree}/100");
}

#[test]
fn qmam_matches_exhaustive_phi_on_strong_spikes() {
    let dim = 32;
    let sc = noise_only(dim, Vec::new());
    for t in 0..10u64 {
        let base = sample_covariance_seeded(&sc, N, 100 + t).unwrap();
        let lambda1 = eigh(&base).unwrap().values[0];
        let cal = calibrate_epsilon(&base, 0).unwrap();
        let mut g = rng(200 + t);
        let mut e = base.as_slice().to_vec();
        for k in 0..3 {
            let a: Vec<C64> = (0..dim).map(|_| C64::from_polar(1.0, cgauss(&mut g).arg())).collect();
            let p = 100.0 * lambda1 * (1.0 + k as f64);
            for i in 0..dim {
                for j in 0..dim {
                    e[i * dim + j] += a[i] * a[j].conj() * p;
                }
            }
        }
        let r = CovarianceMatrix::new(dim, e, base.freq_hz, base.sample_count, 0.0).unwrap();
        let cfg = DetectConfig::default();
        let values = eigh(&r).unwrap().values;
        let oracle = (0..dim)
            .find(|&d| {
                phi_statistic(cal.epsilon, qmam_from_eigenvalues(&values, d).unwrap()) < cfg.tau_phi + PHI_ZERO_BAND
            })
            .unwrap();
        assert_eq!(oracle, 3, "trial {t}");
        assert_eq!(detect_qmam(&r, &cal, &cfg).unwrap().d_hat, 3, "trial {t}");
    }
}

#[test]
fn combined_calibration_is_the_mean() {
    let sc = noise_only(16, Vec::new());
    let a = calibrate_epsilon(&sample_covariance_seeded(&sc, N, 1).unwrap(), 0).unwrap();
    let b = calibrate_epsilon(&sample_covariance_seeded(&sc, N, 2).unwrap(), 0).unwrap();
    let c = EpsilonCalibration::combine(&[a.clone(), b.clone()]).unwrap();
    assert!((c.epsilon - (a.epsilon + b.epsilon) / 2.0).abs() < 1e-15);
}

#[test]
fn rank_two_removal_leaves_noise_floor() {
    let dim = 24;
    for t in 0..10u64 {
        let mut g = rng(300 + t);
        let b: Vec<Vec<C64>> = (0..2)
            .map(|_| (0..dim).map(|_| cgauss(&mut g) * 3.0).collect())
            .collect();
        let mut e = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            e[i * dim + i] = C64::new(1.0, 0.0);
            for j in 0..dim {
                e[i * dim + j] += b.iter().map(|c| c[i] * c[j].conj()).sum::<C64>();
            }
        }
        let r = CovarianceMatrix::new(dim, e, 0.0, 0, 0.0).unwrap();
        let eig = eigh(&r).unwrap();
        let (rd, _) = subtract_subspace(&r, &eig.vectors[..2], &eig.values[..2]).unwrap();
        assert!(eigh(&rd).unwrap().values[0] <= eig.values[2] + 1e-9);
    }
}

#[test]
fn eigh_path_matches_direct_subtraction() {
    let sc = noise_only(20, vec![]);
    let r = sample_covariance_seeded(&sc, 64, 5).unwrap();
    let eig = eigh(&r).unwrap();
    let (a, _) = clean_with_eigh(&r, EighDetector::Fixed(3)).unwrap();
    let (b, _) = subtract_subspace(&r, &eig.vectors[..3], &eig.values[..3]).unwrap();
    assert!(rel_diff(&a, &b) <= 1e-10);
    let (all, _) = clean_with_eigh(&r, EighDetector::Fixed(20)).unwrap();
    assert!(rfi_scrub::linalg::trace(&all).abs() <= 1e-9 * rfi_scrub::linalg::trace(&r));
    let (none, rep) = clean_with_eigh(&r, EighDetector::Fixed(0)).unwrap();
    assert_eq!(none, r);
    assert_eq!(rep.removed_power, 0.0);
}

#[test]
fn orthogonal_interferers_have_closed_form_spectrum() {
    let m = 16;
    let powers = [4.0, 2.5, 0.75];
    // DFT columns: unit modulus and mutually orthogonal
    let rfi = powers
        .iter()
        .enumerate()
        .map(|(k, &p)| RfiEmitter {
            arrival: RfiArrival::Steering(
                (0..m)
                    .map(|i| C64::from_polar(1.0, std::f64::consts::TAU * ((k + 1) * i) as f64 / m as f64))
                    .collect(),
            ),
            power: p,
            waveform: RfiWaveform::Gaussian,
        })
        .collect();
    let mut sc = noise_only(m, rfi);
    sc.noise_power = 0.5;
    let truth = exact_covariance(&sc).unwrap();
    assert_eq!(truth.d_true, 3);
    let values = eigh(&truth.r_exact).unwrap().values;
    for (v, p) in values.iter().zip(powers) {
        assert!((v - (p * m as f64 + 0.5)).abs() < 1e-9);
    }
    assert!(values[3..].iter().all(|v| (v - 0.5).abs() < 1e-9));
}

#[test]
fn sample_covariance_converges_at_large_n() {
    let mut g = rng(5);
    let sc = noise_only(8, random_rfi(&mut g, 2, (10.0, 10.0)));
    let n = 1 << 20;
    let exact = exact_covariance(&sc).unwrap().r_exact;
    let r = sample_covariance_seeded(&sc, n, 9).unwrap();
    assert!(rel_diff(&r, &exact) <= 5.0 / (n as f64).sqrt());
}

#[test]
fn clean_qmam_tracks_iterative_sinr_on_exact_skies() {
    let geom = geometry();
    let (beams, mask) = sinr_setup(&geom, 41e6);
    let cfg = DetectConfig {
        tau_phi: 0.01,
        ..DetectConfig::default()
    };
    let mut g = rng(40);
    for t in 0..10 {
        let sc = scenario(&geom, random_rfi(&mut g, 3, (30.0, 35.0)), 41e6, 0.5, t);
        let r = exact_covariance(&sc).unwrap().r_exact.with_freq(41e6);
        let reference = exact_covariance(&sc.without_rfi()).unwrap().r_exact.with_freq(41e6);
        let cal = calibrate_epsilon(&reference, 0).unwrap();
        let (rq, rep) = clean_qmam(&r, &cal, &cfg).unwrap();
        let (_, best) = iterative_sinr_clean(&r, &beams, &mask, None).unwrap();
        let best_db = best.trail.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let q_db = beams.sinr(&rq, &mask).unwrap();
        assert!(
            q_db >= best_db - 1.0,
            "trial {t}: d_hat {} sinr {q_db:.2} vs best {best_db:.2}",
            rep.d_hat
        );
    }
}

#[test]
fn ideal_source_mask_beats_shifted_masks() {
    let geom = geometry();
    let ra = source_ra();
    let lst = transit_lst_seconds(ra);
    let grid = rfi_scrub::beamform::default_declination_grid();
    let src = SkyDirection::from_degrees(SOURCE_DEC_DEG, ra, lst).unwrap();
    let a = steering_vector(&geom, &src, 41e6).entries;
    let m = a.len();
    let e: Vec<C64> = (0..m * m).map(|k| a[k / m] * a[k % m].conj()).collect();
    let r = CovarianceMatrix::new(m, e, 41e6, 0, lst).unwrap();
    let beams = ScanBeams::new(&geom, ra, lst, &grid, 41e6).unwrap();
    let mask = source_lobe(&point_spread_function(&geom, &src, &grid, 41e6).unwrap());
    let at_source = beams.sinr(&r, &mask).unwrap();
    assert!(at_source > 0.0);
    let width = mask.iter().filter(|&&b| b).count();
    let first = mask.iter().position(|&b| b).unwrap();
    for start in (0..=grid.len() - width).filter(|&s| s != first) {
        let shifted: Vec<bool> = (0..grid.len()).map(|i| i >= start && i < start + width).collect();
        if let Ok(s) = beams.sinr(&r, &shifted) {
            assert!(s < at_source, "start {start}: {s} vs {at_source}");
        }
    }
}

#[test]
fn exact_white_noise_sinr_ignores_source_power() {
    // noise cancels against the trace in both terms, leaving a PSF ratio
    let geom = geometry();
    let (beams, mask) = sinr_setup(&geom, 41e6);
    let at = |q: f64| {
        let r = exact_covariance(&scenario(&geom, Vec::new(), 41e6, q, 0))
            .unwrap()
            .r_exact;
        beams.sinr(&r, &mask).unwrap()
    };
    let base = at(0.01);
    for q in [0.001, 0.1, 1.0] {
        assert!((at(q) - base).abs() < 1e-9);
    }
}

#[test]
fn sampled_sinr_grows_with_source_power() {
    // rises toward the exact-covariance value once the source clears the
    // sample-noise fluctuations of the denominator
    let geom = geometry();
    let (beams, mask) = sinr_setup(&geom, 41e6);
    let ceiling = beams
        .sinr(
            &exact_covariance(&scenario(&geom, Vec::new(), 41e6, 1.0, 0))
                .unwrap()
                .r_exact,
            &mask,
        )
        .unwrap();
    let mut last = f64::NEG_INFINITY;
    for q in [0.01, 0.03, 0.1, 0.3, 1.0] {
        let sc = scenario(&geom, Vec::new(), 41e6, q, 0);
        let s: f64 = (0..5)
            .map(|seed| {
                beams
                    .sinr(&sample_covariance_seeded(&sc, N, 80 + seed).unwrap(), &mask)
                    .unwrap()
            })
            .sum::<f64>()
            / 5.0;
        assert!(s > last && s < ceiling, "q {q}: {s} after {last}, ceiling {ceiling}");
        last = s;
    }
}

#[test]
fn iterative_sinr_depth_on_exact_skies() {
    let geom = geometry();
    let (beams, mask) = sinr_setup(&geom, 41e6);
    let clean = exact_covariance(&scenario(&geom, Vec::new(), 41e6, 0.1, 0))
        .unwrap()
        .r_exact;
    assert_eq!(iterative_sinr_clean(&clean, &beams, &mask, None).unwrap().1.d_hat, 0);
    let mut g = rng(50);
    for t in 0..10 {
        let sc = scenario(&geom, random_rfi(&mut g, 2, (30.0, 30.0)), 41e6, 0.1, t);
        let r = exact_covariance(&sc).unwrap().r_exact;
        assert_eq!(
            iterative_sinr_clean(&r, &beams, &mask, None).unwrap().1.d_hat,
            2,
            "trial {t}"
        );
    }
}

fn cell(grid: &[f64], v: f64) -> usize {
    grid.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .unwrap()
        .0
}

fn is_local_max(img: &SkyImage, k: usize, l: usize) -> bool {
    let v = img.powers[k][l];
    (k.saturating_sub(1)..=(k + 1).min(img.powers.len() - 1))
        .all(|i| (l.saturating_sub(1)..=(l + 1).min(img.powers[0].len() - 1)).all(|j| img.powers[i][j] <= v))
}

#[test]
fn two_source_image_after_cleaning() {
    let geom = geometry();
    let cas = (58.8, ra_from_hm(23.0, 23.0));
    let cyg = (41.0, ra_from_hm(19.0, 59.0));
    let lst = transit_lst_seconds(ra_from_hm(21.0, 41.0));
    let mut g = rng(60);
    let sc = SkyScenario {
        geometry: geom.clone(),
        sources: [cas, cyg]
            .iter()
            .map(|&(d, ra)| SkySource {
                declination: f64::to_radians(d),
                right_ascension: ra,
                power: 0.5,
            })
            .collect(),
        rfi: random_rfi(&mut g, 2, (30.0, 30.0)),
        noise_power: 1.0,
        freq_hz: 41e6,
        lst_seconds: lst,
        seed: 61,
    };
    let (reference, r) = reference_pair(&sc, N, 62, 63, true).unwrap();
    let cal = calibrate_epsilon(&reference, 0).unwrap();
    let cfg = DetectConfig {
        tau_phi: 0.01,
        ..DetectConfig::default()
    };
    let (rd, rep) = clean_qmam(&r, &cal, &cfg).unwrap();
    assert_eq!(rep.d_hat, 2);
    let decl: Vec<f64> = (0..=200).map(|k| 30.0 + 0.2 * k as f64).collect();
    let ra: Vec<f64> = (-15..=66).map(|k| cyg.1 + ra_from_hm(0.0, 4.0) * k as f64).collect();
    let img = sky_image(&rd, &geom, &ra, &decl, lst, 41e6).unwrap();
    for (d, a) in [cas, cyg] {
        let (k, l) = (cell(&decl, d), cell(&ra, a));
        assert!(is_local_max(&img, k, l), "no local maximum at dec {d}");
    }
}

#[test]
fn cleaning_lifts_a_faint_source_into_the_top_cells() {
    let geom = geometry();
    let ra0 = source_ra();
    let lst = transit_lst_seconds(ra0);
    let mut g = rng(70);
    let sc = scenario(&geom, random_rfi(&mut g, 3, (30.0, 30.0)), 41e6, 0.05, 71);
    let (reference, r) = reference_pair(&sc, N, 72, 73, true).unwrap();
    let cal = calibrate_epsilon(&reference, 0).unwrap();
    let cfg = DetectConfig {
        tau_phi: 0.01,
        ..DetectConfig::default()
    };
    let (rd, _) = clean_qmam(&r, &cal, &cfg).unwrap();
    let decl: Vec<f64> = (0..=110).map(|k| -20.0 + k as f64).collect();
    let ra: Vec<f64> = (0..144).map(|k| k as f64 * std::f64::consts::TAU / 144.0).collect();
    let (k, l) = (cell(&decl, SOURCE_DEC_DEG), cell(&ra, ra0));
    let before = sky_image(&r, &geom, &ra, &decl, lst, 41e6).unwrap().rank_fraction(k, l);
    let after = sky_image(&rd, &geom, &ra, &decl, lst, 41e6)
        .unwrap()
        .rank_fraction(k, l);
    assert!(before > 0.01 && after <= 0.01, "before {before} after {after}");
}

#[test]
fn projection_orthogonal_to_probes_is_lossless() {
    let geom = lwa_like_geometry(32, 4).unwrap();
    let ra = source_ra();
    let lst = transit_lst_seconds(ra);
    let src = SkyDirection::from_degrees(SOURCE_DEC_DEG, ra, lst).unwrap();
    let probe: Vec<SkyDirection> = [40.0, 50.0, 58.8, 65.0, 80.0]
        .iter()
        .map(|&d| SkyDirection::from_degrees(d, ra, lst).unwrap())
        .collect();
    // keep exactly the span of the probe and source responses
    let mut kept: Vec<Vec<C64>> = Vec::new();
    for dir in probe.iter().chain([&src]) {
        let mut v = steering_vector(&geom, dir, 41e6).entries;
        for _ in 0..2 {
            for q in &kept {
                let c = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, qi)| *x -= qi * c);
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            kept.push(v.into_iter().map(|z| z / n).collect());
        }
    }
    let res = image_projection_and_sdr(&kept, &geom, &src, &probe, 41e6).unwrap();
    assert!(res.mse <= 1e-12, "mse {}", res.mse);
}
