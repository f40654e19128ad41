//! Flat `key = value` text files with `#` comments, and the scenario files
//! built on them.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::beamform::{transit_lst_seconds, ArrayGeometry};
use crate::error::{Error, Result};
use crate::skysim::{lwa_like_geometry, RfiArrival, RfiEmitter, RfiWaveform, SkyScenario, SkySource};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone)]
pub struct KeyValueFile {
    pub path: PathBuf,
    pub entries: Vec<Entry>,
}

impl KeyValueFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(Error::Config {
                    path: path.to_path_buf(),
                    line,
                    message: format!("expected key = value, got '{content}'"),
                });
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Config {
                    path: path.to_path_buf(),
                    line,
                    message: "empty key".into(),
                });
            }
            entries.push(Entry {
                line,
                key: key.to_string(),
                value: v.trim().to_string(),
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    /// Last occurrence wins.
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|err| self.error(e.line, format!("bad value for '{key}': {err}"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parse_value(key)?
            .ok_or_else(|| self.error(0, format!("missing required key '{key}'")))
    }

    /// Rejects keys outside `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|e| !known.contains(&e.key.as_str())) {
            Some(e) => Err(self.error(e.line, format!("unknown key '{}'", e.key))),
            None => Ok(()),
        }
    }
}

/// Parses right ascension given as decimal hours or as `23h23m[45s]`.
pub fn parse_ra_hours(s: &str) -> std::result::Result<f64, String> {
    if let Ok(h) = s.parse::<f64>() {
        return Ok(h);
    }
    let bad = || format!("cannot parse right ascension '{s}'");
    let (h, rest) = s.split_once('h').ok_or_else(bad)?;
    let mut hours: f64 = h.trim().parse().map_err(|_| bad())?;
    let rest = rest.trim();
    if rest.is_empty() {
        return Ok(hours);
    }
    let (m, rest) = rest.split_once('m').ok_or_else(bad)?;
    hours += m.trim().parse::<f64>().map_err(|_| bad())? / 60.0;
    let rest = rest.trim();
    if !rest.is_empty() {
        let sec = rest.strip_suffix('s').ok_or_else(bad)?;
        hours += sec.trim().parse::<f64>().map_err(|_| bad())? / 3600.0;
    }
    Ok(hours)
}

pub fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("'{}': {e}", p.trim())))
        .collect()
}

const SCENARIO_KEYS: &[&str] = &[
    "geometry",
    "antennas",
    "geometry_seed",
    "freqs_hz",
    "source",
    "rfi",
    "noise_power",
    "samples",
    "seed",
    "lst_seconds",
    "reference_seed",
];

/// A multi-band simulation request.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub geometry: ArrayGeometry,
    pub freqs_hz: Vec<f64>,
    pub sources: Vec<SkySource>,
    /// Azimuth, elevation (radians), power, waveform.
    pub rfi: Vec<(f64, f64, f64, RfiWaveform)>,
    pub noise_power: f64,
    pub samples: usize,
    pub seed: u64,
    pub lst_seconds: f64,
    /// When set, an RFI-free reference realization is produced per band.
    pub reference_seed: Option<u64>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let kv = KeyValueFile::load(path)?;
        Self::from_kv(&kv)
    }

    pub fn from_kv(kv: &KeyValueFile) -> Result<Self> {
        kv.check_known(SCENARIO_KEYS)?;
        let geometry = match kv.get("geometry") {
            Some(e) => {
                let base = kv.path.parent().unwrap_or(Path::new("."));
                let p = base.join(&e.value);
                crate::covio::read_geometry(&p).map_err(|err| kv.error(e.line, err.to_string()))?
            }
            None => {
                let m: usize = kv.require("antennas")?;
                let gseed: u64 = kv.parse_value("geometry_seed")?.unwrap_or(7);
                let line = kv.get("antennas").map_or(0, |e| e.line);
                lwa_like_geometry(m, gseed).map_err(|err| kv.error(line, err.to_string()))?
            }
        };

        let freqs_entry = kv
            .get("freqs_hz")
            .ok_or_else(|| kv.error(0, "missing required key 'freqs_hz'"))?;
        let freqs_hz: Vec<f64> = parse_list(&freqs_entry.value).map_err(|m| kv.error(freqs_entry.line, m))?;
        if freqs_hz.is_empty() || freqs_hz.iter().any(|f| !(*f > 0.0)) {
            return Err(kv.error(freqs_entry.line, "frequencies must be positive"));
        }

        let mut sources = Vec::new();
        for e in kv.get_all("source") {
            let parts: Vec<&str> = e.value.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(kv.error(e.line, "expected: source = dec_deg ra_hours power"));
            }
            let dec: f64 = parts[0].parse().map_err(|_| kv.error(e.line, "bad declination"))?;
            let ra = parse_ra_hours(parts[1]).map_err(|m| kv.error(e.line, m))?;
            let power: f64 = parts[2].parse().map_err(|_| kv.error(e.line, "bad source power"))?;
            if !(-90.0..=90.0).contains(&dec) {
                return Err(kv.error(e.line, "declination outside [-90, 90]"));
            }
            sources.push(SkySource {
                declination: dec.to_radians(),
                right_ascension: ra * std::f64::consts::PI / 12.0,
                power,
            });
        }

        let mut rfi = Vec::new();
        for e in kv.get_all("rfi") {
            let parts: Vec<&str> = e.value.split_whitespace().collect();
            if !(3..=4).contains(&parts.len()) {
                return Err(kv.error(e.line, "expected: rfi = az_deg el_deg power [gaussian|sinusoid]"));
            }
            let num =
                |s: &str, what: &str| -> Result<f64> { s.parse().map_err(|_| kv.error(e.line, format!("bad {what}"))) };
            let az = num(parts[0], "azimuth")?;
            let el = num(parts[1], "elevation")?;
            let power = num(parts[2], "RFI power")?;
            let waveform = match parts.get(3).copied() {
                None | Some("gaussian") => RfiWaveform::Gaussian,
                Some("sinusoid") => RfiWaveform::Sinusoid,
                Some(other) => return Err(kv.error(e.line, format!("unknown waveform '{other}'"))),
            };
            if el > 10.0 {
                log::warn!(
                    "{}:{}: RFI elevation {el} deg is above the horizon band",
                    kv.path.display(),
                    e.line
                );
            }
            rfi.push((az.to_radians(), el.to_radians(), power, waveform));
        }

        let noise_power = kv.parse_value("noise_power")?.unwrap_or(1.0);
        let samples = kv.parse_value("samples")?.unwrap_or(4096);
        let seed = kv.parse_value("seed")?.unwrap_or(1);
        let lst_seconds = match kv.parse_value("lst_seconds")? {
            Some(v) => v,
            None => sources.first().map_or(0.0, |s| transit_lst_seconds(s.right_ascension)),
        };
        let reference_seed = kv.parse_value("reference_seed")?;
        Ok(Self {
            geometry,
            freqs_hz,
            sources,
            rfi,
            noise_power,
            samples,
            seed,
            lst_seconds,
            reference_seed,
        })
    }

    /// Seed for band `index`, decorrelated from neighbouring bands.
    pub fn band_seed(base: u64, index: usize) -> u64 {
        base ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
    }

    pub fn scenario_for_band(&self, index: usize) -> SkyScenario {
        SkyScenario {
            geometry: self.geometry.clone(),
            sources: self.sources.clone(),
            rfi: self
                .rfi
                .iter()
                .map(|&(azimuth, elevation, power, waveform)| RfiEmitter {
                    arrival: RfiArrival::AzEl { azimuth, elevation },
                    power,
                    waveform,
                })
                .collect(),
            noise_power: self.noise_power,
            freq_hz: self.freqs_hz[index],
            lst_seconds: self.lst_seconds,
            seed: Self::band_seed(self.seed, index),
        }
    }
}
