//! Command-line front end.
//!
//! Precedence for every setting: command-line flag, then `RFI_SCRUB_SEED`
//! (seeds only), then the `--config` file, then built-in defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::beamform::{
    default_declination_grid, main_lobe_half_width, point_spread_function, ra_from_hm, sky_image, source_lobe,
    source_range, ArrayGeometry, ScanBeams, SkyDirection,
};
use crate::bench::{run_bench, BenchSettings};
use crate::config::{parse_list, parse_ra_hours, KeyValueFile, ScenarioConfig};
use crate::covio::{
    read_calibration, read_covariance, read_geometry, write_calibration, write_covariance, write_geometry, FLAG_CLEANED,
};
use crate::detect::{calibrate_epsilon, DetectConfig, EpsilonCalibration};
use crate::error::{Error, Result};
use crate::lanczos::{Reorth, DEFAULT_START_SEED};
use crate::linalg::{eigh, CovarianceMatrix};
use crate::mitigate::{clean_qmam, clean_with_eigh, EighDetector, MitigationReport};
use crate::skysim::{exact_covariance, sample_covariance_seeded, SkyScenario};

pub const SEED_ENV: &str = "RFI_SCRUB_SEED";

#[derive(Debug, Parser)]
#[command(name = "rfi-scrub", version, about = "Remove RFI from array covariance matrices")]
pub struct Cli {
    /// Worker threads for per-band processing.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate sample and exact covariances from a scenario file.
    Simulate(SimulateArgs),
    /// Derive the ε correction from reference (RFI-free or cleaned) data.
    Calibrate(CalibrateArgs),
    /// Clean covariance files and write a report table.
    Clean(CleanArgs),
    /// Tabulate SINR against frequency for raw and cleaned sets.
    SinrCurve(SinrCurveArgs),
    /// Time the Lanczos pipeline against the eigendecomposition pipeline.
    Bench(BenchArgs),
    /// Beamformed sky images before and after cleaning.
    Image(ImageArgs),
    /// Point-spread-function drift scans.
    Psf(PsfArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DRefSource {
    Truth,
    IterativeSinr,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Reference covariance files of one band.
    #[arg(required = true)]
    pub references: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "truth")]
    pub d_ref_source: DRefSource,
    /// Interferer count used when no truth sidecar is found.
    #[arg(long, default_value_t = 0)]
    pub d_ref: usize,
    #[command(flatten)]
    pub sky: SkyArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CleanMethod {
    Qmam,
    CombinedQmam,
    Mdl,
    IterativeSinr,
    None,
}

impl CleanMethod {
    fn parse(s: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(s, true).ok()
    }

    fn name(self) -> &'static str {
        match self {
            CleanMethod::Qmam => "qmam",
            CleanMethod::CombinedQmam => "combined-qmam",
            CleanMethod::Mdl => "mdl",
            CleanMethod::IterativeSinr => "iterative-sinr",
            CleanMethod::None => "none",
        }
    }
}

/// Geometry, reference source and declination grid for SINR and masks.
#[derive(Debug, Args, Clone, Default)]
pub struct SkyArgs {
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    /// Reference source as "dec_deg ra_hours", e.g. "58.8 23h23m".
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub decl_min: Option<f64>,
    #[arg(long)]
    pub decl_max: Option<f64>,
    #[arg(long)]
    pub decl_step: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct LanczosArgs {
    #[arg(long)]
    pub m_max: Option<usize>,
    #[arg(long)]
    pub d_expected: Option<usize>,
    /// full | none
    #[arg(long)]
    pub reorth: Option<String>,
    /// Seed of the Lanczos starting vector.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau_phi: Option<f64>,
    #[arg(long)]
    pub guard: Option<usize>,
    /// First candidate evaluated (1 skips the no-RFI test).
    #[arg(long)]
    pub floor: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<CleanMethod>,
    #[arg(long)]
    pub calibration: Vec<PathBuf>,
    /// Fixed removal depth for the eigendecomposition path instead of MDL.
    #[arg(long)]
    pub d_hat: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub lanczos: LanczosArgs,
    #[command(flatten)]
    pub sky: SkyArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SinrCurveArgs {
    /// Raw covariance files, one per band.
    #[arg(required = true)]
    pub raw: Vec<PathBuf>,
    /// Cleaned set as LABEL=DIR; DIR holds `<stem>.clean.rcov` files.
    #[arg(long)]
    pub cleaned: Vec<String>,
    /// Label treated as the reference for the MSE summary.
    #[arg(long)]
    pub oracle: Option<String>,
    #[command(flatten)]
    pub sky: SkyArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated array sizes.
    #[arg(long, default_value = "64,128,256,512")]
    pub m: String,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 11)]
    pub trials: usize,
    #[arg(long, default_value_t = 4096)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImageArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<CleanMethod>,
    #[arg(long)]
    pub calibration: Vec<PathBuf>,
    #[arg(long)]
    pub d_hat: Option<usize>,
    #[command(flatten)]
    pub lanczos: LanczosArgs,
    #[command(flatten)]
    pub sky: SkyArgs,
    #[arg(long, default_value_t = 0.0)]
    pub ra_min_h: f64,
    #[arg(long, default_value_t = 24.0)]
    pub ra_max_h: f64,
    #[arg(long, default_value_t = 0.25)]
    pub ra_step_h: f64,
    /// Scale each image to a peak of 1.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PsfArgs {
    #[command(flatten)]
    pub sky: SkyArgs,
    /// Comma-separated frequencies in Hz.
    #[arg(long)]
    pub freqs: String,
    /// LST in seconds; defaults to the source transit.
    #[arg(long)]
    pub lst: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Binary entry point.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let jobs = cli.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => cmd_simulate(&a).map(|_| ExitCode::SUCCESS),
        Command::Calibrate(a) => cmd_calibrate(&a).map(|_| ExitCode::SUCCESS),
        Command::Clean(a) => cmd_clean(&a),
        Command::SinrCurve(a) => cmd_sinr_curve(&a).map(|_| ExitCode::SUCCESS),
        Command::Bench(a) => cmd_bench(&a).map(|_| ExitCode::SUCCESS),
        Command::Image(a) => cmd_image(&a).map(|_| ExitCode::SUCCESS),
        Command::Psf(a) => cmd_psf(&a).map(|_| ExitCode::SUCCESS),
    })
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidArgument(format!("{SEED_ENV} is not an integer: '{v}'"))),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<Option<u64>> {
    Ok(flag.or(env_seed()?).or(file))
}

/// `dir/band000.rcov` → `dir/band000.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = file_stem(path);
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn file_stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.strip_suffix(".rcov").unwrap_or(&name).to_string()
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn truth_text(sc: &SkyScenario, samples: usize, seed: u64) -> Result<String> {
    let truth = exact_covariance(sc)?;
    let eig = eigh(&truth.r_exact)?;
    let mut s = String::new();
    let _ = writeln!(s, "freq_hz = {}", sc.freq_hz);
    let _ = writeln!(s, "lst_seconds = {}", sc.lst_seconds);
    let _ = writeln!(s, "samples = {samples}");
    let _ = writeln!(s, "seed = {seed}");
    let _ = writeln!(s, "d_true = {}", truth.d_true);
    let _ = writeln!(s, "exact_eigenvalues = {}", join_floats(&eig.values));
    Ok(s)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = ScenarioConfig::load(&a.scenario)?;
    if let Some(seed) = resolve_seed(a.seed, None)? {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&a.out)?;
    write_geometry(&a.out.join("geometry.csv"), &cfg.geometry)?;
    let bands: Vec<usize> = (0..cfg.freqs_hz.len()).collect();
    bands.par_iter().try_for_each(|&b| -> Result<()> {
        let sc = cfg.scenario_for_band(b);
        let stem = a.out.join(format!("band{b:03}"));
        let r = sample_covariance_seeded(&sc, cfg.samples, sc.seed)?;
        write_covariance(&stem.with_extension("rcov"), &r, 0)?;
        let exact = exact_covariance(&sc)?.r_exact;
        write_covariance(&stem.with_extension("exact.rcov"), &exact, 0)?;
        std::fs::write(stem.with_extension("truth.txt"), truth_text(&sc, cfg.samples, sc.seed)?)?;
        if let Some(ref_seed) = cfg.reference_seed {
            let clean_sky = sc.without_rfi();
            let seed = ScenarioConfig::band_seed(ref_seed, b);
            let reference = sample_covariance_seeded(&clean_sky, cfg.samples, seed)?;
            write_covariance(&stem.with_extension("ref.rcov"), &reference, 0)?;
            std::fs::write(
                stem.with_extension("ref.truth.txt"),
                truth_text(&clean_sky, cfg.samples, seed)?,
            )?;
        }
        Ok(())
    })?;
    println!("wrote {} band(s) to {}", bands.len(), a.out.display());
    Ok(())
}

/// Resolved SINR setup.
#[derive(Debug, Clone)]
pub struct SkySetup {
    pub geometry: ArrayGeometry,
    pub declination: f64,
    pub right_ascension: f64,
    pub decl_grid: Vec<f64>,
}

impl SkySetup {
    fn from_args(args: &SkyArgs, kv: Option<&KeyValueFile>) -> Result<Option<Self>> {
        let from_kv = |key: &str| kv.and_then(|k| k.get(key)).map(|e| e.value.clone());
        let geometry = args
            .geometry
            .clone()
            .or_else(|| from_kv("geometry").map(|g| resolve_relative(kv, &g)));
        let source = args.source.clone().or_else(|| from_kv("source"));
        let (geometry, source) = match (geometry, source) {
            (Some(g), Some(s)) => (g, s),
            (None, None) => return Ok(None),
            _ => {
                return Err(Error::InvalidArgument(
                    "SINR needs both a geometry file and a reference source".into(),
                ))
            }
        };
        let (declination, right_ascension) = parse_source(&source)?;
        let num = |flag: Option<f64>, key: &str, default: f64| -> Result<f64> {
            match flag {
                Some(v) => Ok(v),
                None => match kv {
                    Some(k) => Ok(k.parse_value(key)?.unwrap_or(default)),
                    None => Ok(default),
                },
            }
        };
        let lo = num(args.decl_min, "decl_min", -30.0)?;
        let hi = num(args.decl_max, "decl_max", 90.0)?;
        let step = num(args.decl_step, "decl_step", 1.0)?;
        let decl_grid = if (lo, hi, step) == (-30.0, 90.0, 1.0) {
            default_declination_grid()
        } else {
            grid(lo, hi, step)?
        };
        Ok(Some(Self {
            geometry: read_geometry(&geometry)?,
            declination,
            right_ascension,
            decl_grid,
        }))
    }

    pub fn beams(&self, r: &CovarianceMatrix) -> Result<ScanBeams> {
        ScanBeams::new(
            &self.geometry,
            self.right_ascension,
            r.lst_seconds,
            &self.decl_grid,
            r.freq_hz,
        )
    }

    /// Contiguous above-mean lobe of the ideal point-spread function.
    pub fn mask(&self, r: &CovarianceMatrix) -> Result<Vec<bool>> {
        let src = SkyDirection::new(self.declination, self.right_ascension, r.lst_seconds)?;
        let psf = point_spread_function(&self.geometry, &src, &self.decl_grid, r.freq_hz)?;
        Ok(source_lobe(&psf))
    }

    pub fn sinr(&self, r: &CovarianceMatrix) -> Result<f64> {
        self.beams(r)?.sinr(r, &self.mask(r)?)
    }
}

fn resolve_relative(kv: Option<&KeyValueFile>, p: &str) -> PathBuf {
    let base = kv.and_then(|k| k.path.parent()).unwrap_or(Path::new("."));
    base.join(p)
}

fn grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) {
        return Err(Error::InvalidArgument(format!("bad grid {lo}..{hi} step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| lo + k as f64 * step).collect())
}

/// "dec_deg ra_hours" → radians.
pub fn parse_source(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    let bad = || Error::InvalidArgument(format!("source must be 'dec_deg ra_hours', got '{s}'"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let dec: f64 = parts[0].parse().map_err(|_| bad())?;
    let ra = parse_ra_hours(parts[1]).map_err(Error::InvalidArgument)?;
    Ok((dec.to_radians(), ra_from_hm(ra, 0.0)))
}

fn read_truth_d(path: &Path) -> Result<Option<usize>> {
    let sidecar = sibling(path, "truth.txt");
    if !sidecar.exists() {
        return Ok(None);
    }
    KeyValueFile::load(&sidecar)?.parse_value("d_true")
}

pub fn cmd_calibrate(a: &CalibrateArgs) -> Result<()> {
    let sky = SkySetup::from_args(&a.sky, None)?;
    let parts = a
        .references
        .iter()
        .map(|p| {
            let r = read_covariance(p)?;
            let d_ref = match a.d_ref_source {
                DRefSource::Truth => read_truth_d(p)?.unwrap_or(a.d_ref),
                DRefSource::IterativeSinr => {
                    let sky = sky.as_ref().ok_or_else(|| {
                        Error::InvalidArgument("--d-ref-source iterative-sinr needs --geometry and --source".into())
                    })?;
                    let (_, rep) = crate::beamform::iterative_sinr_clean(&r, &sky.beams(&r)?, &sky.mask(&r)?, None)?;
                    rep.d_hat
                }
            };
            let cal = calibrate_epsilon(&r, d_ref)?;
            log::info!("{}: d_ref={d_ref} epsilon={}", p.display(), cal.epsilon);
            Ok(cal)
        })
        .collect::<Result<Vec<_>>>()?;
    let cal = if parts.len() == 1 {
        parts.into_iter().next().expect("one part")
    } else {
        EpsilonCalibration::combine(&parts)?
    };
    write_calibration(&a.out, &cal)?;
    println!("epsilon = {}", cal.epsilon);
    Ok(())
}

/// Fully resolved cleaning settings shared by `clean` and `image`.
#[derive(Debug, Clone)]
pub struct CleanSettings {
    pub method: CleanMethod,
    pub calibrations: Vec<EpsilonCalibration>,
    pub detect: DetectConfig,
    pub d_hat: Option<usize>,
    pub sky: Option<SkySetup>,
}

const RUN_KEYS: &[&str] = &[
    "method",
    "calibration",
    "d_hat",
    "m_max",
    "d_expected",
    "reorth",
    "seed",
    "tau_phi",
    "guard",
    "floor",
    "geometry",
    "source",
    "decl_min",
    "decl_max",
    "decl_step",
    "out",
];

impl CleanSettings {
    pub fn resolve(
        method: Option<CleanMethod>,
        calibration: &[PathBuf],
        d_hat: Option<usize>,
        lanczos: &LanczosArgs,
        sky: &SkyArgs,
        config: Option<&Path>,
    ) -> Result<Self> {
        let kv = config.map(KeyValueFile::load).transpose()?;
        if let Some(k) = &kv {
            k.check_known(RUN_KEYS)?;
        }
        let kvr = kv.as_ref();
        let method = match method {
            Some(m) => m,
            None => match kvr.and_then(|k| k.get("method")) {
                Some(e) => CleanMethod::parse(&e.value).ok_or_else(|| {
                    kvr.expect("entry came from file")
                        .error(e.line, format!("unknown method '{}'", e.value))
                })?,
                None => CleanMethod::Qmam,
            },
        };
        let mut cal_paths: Vec<PathBuf> = calibration.to_vec();
        if cal_paths.is_empty() {
            if let Some(k) = kvr {
                cal_paths = k
                    .get_all("calibration")
                    .map(|e| resolve_relative(kvr, &e.value))
                    .collect();
            }
        }
        let calibrations = cal_paths
            .iter()
            .map(|p| read_calibration(p))
            .collect::<Result<Vec<_>>>()?;
        if matches!(method, CleanMethod::Qmam | CleanMethod::CombinedQmam) && calibrations.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "method {} needs at least one --calibration file",
                method.name()
            )));
        }

        fn pick<T: std::str::FromStr>(flag: Option<T>, kv: Option<&KeyValueFile>, key: &str) -> Result<Option<T>>
        where
            T::Err: std::fmt::Display,
        {
            match flag {
                Some(v) => Ok(Some(v)),
                None => match kv {
                    Some(k) => k.parse_value(key),
                    None => Ok(None),
                },
            }
        }
        let defaults = DetectConfig::default();
        let reorth = match pick(lanczos.reorth.clone(), kvr, "reorth")? {
            Some(s) => s.parse::<Reorth>()?,
            None => defaults.reorth,
        };
        let file_seed = match kvr {
            Some(k) => k.parse_value("seed")?,
            None => None,
        };
        let detect = DetectConfig {
            m_max: pick(lanczos.m_max, kvr, "m_max")?,
            d_expected: pick(lanczos.d_expected, kvr, "d_expected")?.unwrap_or(defaults.d_expected),
            reorth,
            start_seed: resolve_seed(lanczos.seed, file_seed)?.unwrap_or(DEFAULT_START_SEED),
            start_vector: None,
            tau_phi: pick(lanczos.tau_phi, kvr, "tau_phi")?.unwrap_or(defaults.tau_phi),
            guard: pick(lanczos.guard, kvr, "guard")?.unwrap_or(defaults.guard),
            floor: pick(lanczos.floor, kvr, "floor")?.unwrap_or(defaults.floor),
        };
        let d_hat = pick(d_hat, kvr, "d_hat")?;
        let sky = SkySetup::from_args(sky, kvr)?;
        if method == CleanMethod::IterativeSinr && sky.is_none() {
            return Err(Error::InvalidArgument(
                "method iterative-sinr needs --geometry and --source".into(),
            ));
        }
        Ok(Self {
            method,
            calibrations,
            detect,
            d_hat,
            sky,
        })
    }

    fn calibration_for(&self, r: &CovarianceMatrix) -> Result<EpsilonCalibration> {
        let matching: Vec<EpsilonCalibration> = self
            .calibrations
            .iter()
            .filter(|c| crate::detect::check_band(c.freq_hz, r.freq_hz).is_ok())
            .cloned()
            .collect();
        match (self.method, matching.len()) {
            (_, 0) => Err(Error::BandMismatch {
                expected: r.freq_hz,
                got: self.calibrations.first().map_or(f64::NAN, |c| c.freq_hz),
            }),
            (CleanMethod::CombinedQmam, _) => EpsilonCalibration::combine(&matching),
            (_, 1) => Ok(matching.into_iter().next().expect("one")),
            (_, n) => Err(Error::InvalidArgument(format!(
                "{n} calibrations match {} Hz; use combined-qmam to average them",
                r.freq_hz
            ))),
        }
    }

    /// Cleans one band with the configured method.
    pub fn clean(&self, r: &CovarianceMatrix) -> Result<(CovarianceMatrix, MitigationReport)> {
        match self.method {
            CleanMethod::None => Ok((r.clone(), passthrough_report(r))),
            CleanMethod::Qmam | CleanMethod::CombinedQmam => clean_qmam(r, &self.calibration_for(r)?, &self.detect),
            CleanMethod::Mdl => match self.d_hat {
                Some(d) => clean_with_eigh(r, EighDetector::Fixed(d)),
                None => clean_with_eigh(r, EighDetector::Mdl),
            },
            CleanMethod::IterativeSinr => {
                let sky = self.sky.as_ref().expect("checked in resolve");
                crate::beamform::iterative_sinr_clean(r, &sky.beams(r)?, &sky.mask(r)?, None)
            }
        }
    }
}

fn passthrough_report(r: &CovarianceMatrix) -> MitigationReport {
    MitigationReport {
        d_hat: 0,
        method: crate::detect::Method::None,
        removed_power: 0.0,
        residual_trace: crate::linalg::trace(r),
        lanczos_steps: 0,
        wall_time_ns: 0,
        eigh_calls: 0,
        trail: Vec::new(),
        flags: Vec::new(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

struct BandRow {
    input: PathBuf,
    freq_hz: f64,
    outcome: std::result::Result<(MitigationReport, Option<f64>, Option<f64>), String>,
}

pub fn cmd_clean(a: &CleanArgs) -> Result<ExitCode> {
    let settings = CleanSettings::resolve(
        a.method,
        &a.calibration,
        a.d_hat,
        &a.lanczos,
        &a.sky,
        a.config.as_deref(),
    )?;
    let out = match &a.out {
        Some(o) => o.clone(),
        None => match &a.config {
            Some(c) => {
                let kv = KeyValueFile::load(c)?;
                kv.get("out")
                    .map(|e| resolve_relative(Some(&kv), &e.value))
                    .ok_or_else(|| Error::InvalidArgument("no output directory (--out)".into()))?
            }
            None => return Err(Error::InvalidArgument("no output directory (--out)".into())),
        },
    };
    if a.inputs.is_empty() {
        return Err(Error::InvalidArgument("no input files".into()));
    }
    std::fs::create_dir_all(&out)?;

    let rows: Vec<BandRow> = a
        .inputs
        .par_iter()
        .map(|input| {
            let mut freq_hz = f64::NAN;
            let outcome = (|| -> Result<(MitigationReport, Option<f64>, Option<f64>)> {
                let r = read_covariance(input)?;
                freq_hz = r.freq_hz;
                let (cleaned, report) = settings.clean(&r)?;
                let stem = out.join(file_stem(input));
                let flags = if settings.method == CleanMethod::None {
                    0
                } else {
                    FLAG_CLEANED
                };
                write_covariance(&stem.with_extension("clean.rcov"), &cleaned, flags)?;
                std::fs::write(stem.with_extension("report.txt"), report.to_record(false) + "\n")?;
                let (before, after) = match &settings.sky {
                    Some(sky) => (sky.sinr(&r).ok(), sky.sinr(&cleaned).ok()),
                    None => (None, None),
                };
                Ok((report, before, after))
            })()
            .map_err(|e| e.to_string());
            BandRow {
                input: input.clone(),
                freq_hz,
                outcome,
            }
        })
        .collect();

    let mut table =
        String::from("input,freq_hz,method,d_hat,sinr_raw_db,sinr_clean_db,lanczos_steps,eigh_calls,status\n");
    let mut timings = String::from("input,wall_time_ns\n");
    let mut errors = String::new();
    for row in &rows {
        let name = row.input.display();
        match &row.outcome {
            Ok((rep, before, after)) => {
                let status = if rep.flags.is_empty() {
                    "ok".to_string()
                } else {
                    rep.flags.join(";")
                };
                let _ = writeln!(
                    table,
                    "{name},{},{},{},{},{},{},{},{status}",
                    row.freq_hz,
                    settings.method.name(),
                    rep.d_hat,
                    fmt_opt(*before),
                    fmt_opt(*after),
                    rep.lanczos_steps,
                    rep.eigh_calls
                );
                let _ = writeln!(timings, "{name},{}", rep.wall_time_ns);
            }
            Err(msg) => {
                let _ = writeln!(
                    table,
                    "{name},{},{},,,,,,error",
                    fmt_opt(Some(row.freq_hz).filter(|f| f.is_finite())),
                    settings.method.name()
                );
                let _ = writeln!(errors, "input={name} error={msg}");
            }
        }
    }
    std::fs::write(out.join("report.csv"), &table)?;
    std::fs::write(out.join("timings.csv"), &timings)?;
    print!("{table}");
    if errors.is_empty() {
        let _ = std::fs::remove_file(out.join("errors.txt"));
        Ok(ExitCode::SUCCESS)
    } else {
        std::fs::write(out.join("errors.txt"), &errors)?;
        eprint!("{errors}");
        Ok(ExitCode::from(2))
    }
}

pub fn cmd_sinr_curve(a: &SinrCurveArgs) -> Result<()> {
    let sky = SkySetup::from_args(&a.sky, None)?
        .ok_or_else(|| Error::InvalidArgument("sinr-curve needs --geometry and --source".into()))?;
    let sets: Vec<(String, PathBuf)> = a
        .cleaned
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(l, d)| (l.to_string(), PathBuf::from(d)))
                .ok_or_else(|| Error::InvalidArgument(format!("--cleaned expects LABEL=DIR, got '{s}'")))
        })
        .collect::<Result<_>>()?;
    if let Some(o) = &a.oracle {
        if !sets.iter().any(|(l, _)| l == o) {
            return Err(Error::InvalidArgument(format!(
                "oracle label '{o}' is not among --cleaned"
            )));
        }
    }
    let mut rows = a
        .raw
        .par_iter()
        .map(|p| {
            let r = read_covariance(p)?;
            let mut vals = vec![sky.sinr(&r)?];
            for (_, dir) in &sets {
                let c = read_covariance(&dir.join(format!("{}.clean.rcov", file_stem(p))))?;
                crate::detect::check_band(r.freq_hz, c.freq_hz)?;
                vals.push(sky.sinr(&c)?);
            }
            Ok((r.freq_hz, vals))
        })
        .collect::<Result<Vec<(f64, Vec<f64>)>>>()?;
    rows.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut s = String::from("freq_hz,raw");
    for (l, _) in &sets {
        s.push(',');
        s.push_str(l);
    }
    s.push('\n');
    for (f, vals) in &rows {
        let _ = writeln!(s, "{f},{}", join_floats(vals));
    }
    if let Some(o) = &a.oracle {
        let oi = 1 + sets.iter().position(|(l, _)| l == o).expect("checked");
        let labels = std::iter::once("raw").chain(sets.iter().map(|(l, _)| l.as_str()));
        for (i, label) in labels.enumerate() {
            if i == oi {
                continue;
            }
            let mse = rows.iter().map(|(_, v)| (v[i] - v[oi]).powi(2)).sum::<f64>() / rows.len() as f64;
            let _ = writeln!(s, "# mse_db2 {label} = {mse}");
        }
    }
    std::fs::write(&a.out, s)?;
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let dims: Vec<usize> = parse_list(&a.m).map_err(Error::InvalidArgument)?;
    let settings = BenchSettings {
        dims,
        d: a.d,
        trials: a.trials.max(1),
        samples: a.samples,
        seed: resolve_seed(a.seed, None)?.unwrap_or(1),
        ..BenchSettings::default()
    };
    let report = run_bench(&settings)?;
    let csv = report.to_csv();
    if let Some(out) = &a.out {
        std::fs::write(out, &csv)?;
    }
    print!("{csv}");
    Ok(())
}

pub fn cmd_image(a: &ImageArgs) -> Result<()> {
    let settings = CleanSettings::resolve(
        a.method,
        &a.calibration,
        a.d_hat,
        &a.lanczos,
        &a.sky,
        a.config.as_deref(),
    )?;
    let sky = settings
        .sky
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("image needs --geometry and --source".into()))?;
    let r = read_covariance(&a.input)?;
    let (cleaned, _) = settings.clean(&r)?;
    let ra_h = grid(a.ra_min_h, a.ra_max_h, a.ra_step_h)?;
    let ra: Vec<f64> = ra_h.iter().map(|h| ra_from_hm(*h, 0.0)).collect();
    std::fs::create_dir_all(&a.out)?;
    let stem = file_stem(&a.input);
    for (tag, m) in [("before", &r), ("after", &cleaned)] {
        let mut img = sky_image(m, &sky.geometry, &ra, &sky.decl_grid, r.lst_seconds, r.freq_hz)?;
        if a.normalize {
            img = img.normalized();
        }
        std::fs::write(a.out.join(format!("{stem}.{tag}.txt")), img.to_text())?;
    }
    Ok(())
}

pub fn cmd_psf(a: &PsfArgs) -> Result<()> {
    let sky = SkySetup::from_args(&a.sky, None)?
        .ok_or_else(|| Error::InvalidArgument("psf needs --geometry and --source".into()))?;
    let freqs: Vec<f64> = parse_list(&a.freqs).map_err(Error::InvalidArgument)?;
    let lst = a
        .lst
        .unwrap_or_else(|| crate::beamform::transit_lst_seconds(sky.right_ascension));
    let src = SkyDirection::new(sky.declination, sky.right_ascension, lst)?;
    std::fs::create_dir_all(&a.out)?;
    let mut summary = String::from("freq_hz,peak_decl_deg,half_width_deg,mask_points,lobe_lo_deg,lobe_hi_deg\n");
    for (i, &f) in freqs.iter().enumerate() {
        let scan = point_spread_function(&sky.geometry, &src, &sky.decl_grid, f)?;
        std::fs::write(a.out.join(format!("psf{i:03}.txt")), scan.to_text())?;
        let lobe = source_lobe(&scan);
        let raw = source_range(&scan);
        let inside: Vec<f64> = scan
            .declinations_deg
            .iter()
            .zip(&lobe)
            .filter(|(_, &m)| m)
            .map(|(d, _)| *d)
            .collect();
        let _ = writeln!(
            summary,
            "{f},{},{},{},{},{}",
            scan.declinations_deg[scan.peak_index()],
            main_lobe_half_width(&scan),
            raw.iter().filter(|&&m| m).count(),
            fmt_opt(inside.first().copied()),
            fmt_opt(inside.last().copied())
        );
    }
    std::fs::write(a.out.join("psf_summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}
