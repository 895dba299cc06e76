//! Strict INI configuration.
//!
//! Every key is looked up through a [`Reader`], which records the value it
//! resolved (including defaults). Any key in the file or in the overrides
//! that no experiment asked for is an error.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use qcond_core::grid::PositionGrid;
use qcond_core::qdyn::MeasurementSpec;
use qcond_core::system::SystemSpec;

use crate::CliError;

pub type Sections = BTreeMap<String, BTreeMap<String, String>>;

/// Parsed key/value pairs with overrides applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub sections: Sections,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(format!("parse error at {e}")))?;
        let mut sections = Sections::new();
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(CliError::Config(format!("key `{key}` appears outside any section")));
                }
                continue;
            };
            let section = sections.entry(name.trim().to_string()).or_default();
            for (key, value) in props.iter() {
                if section.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
                    return Err(CliError::Config(format!("duplicate key `{name}.{key}`")));
                }
            }
        }
        Ok(RawConfig { sections })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies `section.key=value`.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
        let (section, key) = key
            .trim()
            .split_once('.')
            .ok_or_else(|| CliError::Config(format!("override key `{key}` is not SECTION.KEY")))?;
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(String::as_str)
    }

    /// Fails on the first key in a section not listed in `allowed`.
    pub fn check_sections(&self, allowed: &[&str]) -> Result<(), CliError> {
        for (section, keys) in &self.sections {
            if let Some(key) = keys.keys().next().filter(|_| !allowed.contains(&section.as_str())) {
                return Err(CliError::Config(format!("unknown key `{section}.{key}`")));
            }
        }
        Ok(())
    }
}

/// Typed access that remembers what was read.
#[derive(Debug)]
pub struct Reader<'a> {
    raw: &'a RawConfig,
    resolved: RefCell<Sections>,
    used: RefCell<BTreeSet<(String, String)>>,
}

impl<'a> Reader<'a> {
    pub fn new(raw: &'a RawConfig) -> Self {
        Reader { raw, resolved: RefCell::default(), used: RefCell::default() }
    }

    fn lookup<T: FromStr + ToString>(&self, section: &str, key: &str, default: Option<T>) -> Result<T, CliError> {
        self.used.borrow_mut().insert((section.to_string(), key.to_string()));
        let value = match self.raw.get(section, key) {
            Some(text) => text
                .parse::<T>()
                .map_err(|_| CliError::Config(format!("`{section}.{key}` has an invalid value `{text}`")))?,
            None => default.ok_or_else(|| CliError::Config(format!("missing required key `{section}.{key}`")))?,
        };
        self.resolved
            .borrow_mut()
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
        Ok(value)
    }

    pub fn f64(&self, section: &str, key: &str) -> Result<f64, CliError> {
        self.lookup(section, key, None)
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, CliError> {
        self.lookup(section, key, Some(default))
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize, CliError> {
        self.lookup(section, key, Some(default))
    }

    pub fn u64_or(&self, section: &str, key: &str, default: u64) -> Result<u64, CliError> {
        self.lookup(section, key, Some(default))
    }

    pub fn bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool, CliError> {
        self.lookup(section, key, Some(default))
    }

    pub fn string_or(&self, section: &str, key: &str, default: &str) -> Result<String, CliError> {
        self.lookup(section, key, Some(default.to_string()))
    }

    pub fn optional_f64(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        if self.raw.get(section, key).is_some() {
            self.f64(section, key).map(Some)
        } else {
            self.used.borrow_mut().insert((section.to_string(), key.to_string()));
            Ok(None)
        }
    }

    /// Comma-separated numbers.
    pub fn list_f64(&self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let joined = default.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let text = self.string_or(section, key, &joined)?;
        text.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("`{section}.{key}` has an invalid entry `{s}`")))
            })
            .collect()
    }

    /// A value from a fixed set of words.
    pub fn choice(&self, section: &str, key: &str, options: &[&str], default: &str) -> Result<String, CliError> {
        let v = self.string_or(section, key, default)?;
        if options.contains(&v.as_str()) {
            Ok(v)
        } else {
            Err(CliError::Config(format!("`{section}.{key}` must be one of {options:?}, got `{v}`")))
        }
    }

    /// Fails on the first key nobody read.
    pub fn finish(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        for (section, keys) in &self.raw.sections {
            for key in keys.keys() {
                if !used.contains(&(section.clone(), key.clone())) {
                    return Err(CliError::Config(format!("unknown key `{section}.{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn resolved(&self) -> Sections {
        self.resolved.borrow().clone()
    }
}

pub fn system(r: &Reader) -> Result<SystemSpec, CliError> {
    let s = "system";
    let mass = r.f64_or(s, "mass", 1.0)?;
    let hbar = r.f64_or(s, "hbar", 1.0)?;
    let coeffs = [
        r.f64_or(s, "c0", 0.0)?,
        r.f64_or(s, "c1", 0.0)?,
        r.f64_or(s, "c2", 0.0)?,
        r.f64_or(s, "c3", 0.0)?,
        r.f64_or(s, "c4", 0.0)?,
    ];
    let amplitude = r.f64_or(s, "drive_amplitude", 0.0)?;
    let frequency = r.f64_or(s, "drive_frequency", 0.0)?;
    let spec = if hbar == 0.0 { SystemSpec::classical(mass, &coeffs)? } else { SystemSpec::new(mass, hbar, &coeffs)? };
    Ok(spec.with_drive(amplitude, frequency))
}

pub fn grid(r: &Reader) -> Result<PositionGrid, CliError> {
    let points = r.usize_or("grid", "points", 128)?;
    match r.optional_f64("grid", "half_width")? {
        Some(h) => {
            if r.optional_f64("grid", "x_min")?.is_some() || r.optional_f64("grid", "x_max")?.is_some() {
                return Err(CliError::Config("give either grid.half_width or grid.x_min/x_max, not both".into()));
            }
            Ok(PositionGrid::centered(h, points)?)
        }
        None => Ok(PositionGrid::new(r.f64("grid", "x_min")?, r.f64("grid", "x_max")?, points)?),
    }
}

pub fn measurement(r: &Reader) -> Result<MeasurementSpec, CliError> {
    Ok(MeasurementSpec::new(r.f64_or("measurement", "k", 0.0)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunBlock {
    pub dt: f64,
    pub horizon: f64,
    pub n_realizations: usize,
    pub sample_every: usize,
    pub master_seed: u64,
}

impl RunBlock {
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Sample times `0, every·dt, 2·every·dt, …` up to the horizon.
    pub fn sample_times(&self) -> Vec<f64> {
        (0..=self.n_steps() / self.sample_every)
            .map(|j| (j * self.sample_every) as f64 * self.dt)
            .collect()
    }
}

/// Seed used when neither the command line, the environment nor the
/// config supplies one.
pub const DEFAULT_SEED: u64 = 20_240_601;

pub fn run_block(r: &Reader) -> Result<RunBlock, CliError> {
    let s = "run";
    let dt = r.f64(s, "dt")?;
    let horizon = r.f64(s, "horizon")?;
    let n_realizations = r.usize_or(s, "n_realizations", 1)?;
    let sample_every = r.usize_or(s, "sample_every", 1)?.max(1);
    let master_seed = r.u64_or(s, "master_seed", DEFAULT_SEED)?;
    if !(dt > 0.0) || !(horizon >= dt) {
        return Err(CliError::Config("need 0 < run.dt ≤ run.horizon".into()));
    }
    Ok(RunBlock { dt, horizon, n_realizations, sample_every, master_seed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialBlock {
    pub x0: f64,
    pub p0: f64,
    pub sigma_x: f64,
}

pub fn initial(r: &Reader) -> Result<InitialBlock, CliError> {
    Ok(InitialBlock {
        x0: r.f64_or("initial", "x0", 0.0)?,
        p0: r.f64_or("initial", "p0", 0.0)?,
        sigma_x: r.f64_or("initial", "sigma_x", 1.0)?,
    })
}

/// `true` for a wave function, `false` for a density matrix.
pub fn pure_representation(r: &Reader, default: &str) -> Result<bool, CliError> {
    Ok(r.choice("state", "representation", &["density", "wavefunction"], default)? == "wavefunction")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "[system]\nhbar = 2\n[measurement]\nk = 0.5\n";

    #[test]
    fn unknown_keys_are_rejected() {
        let mut raw = RawConfig::parse(TEXT).unwrap();
        raw.set("measurment.k=1").unwrap();
        let r = Reader::new(&raw);
        system(&r).unwrap();
        measurement(&r).unwrap();
        let err = r.finish().unwrap_err();
        assert!(err.to_string().contains("measurment.k"), "{err}");
    }

    #[test]
    fn overrides_replace_values() {
        let mut raw = RawConfig::parse(TEXT).unwrap();
        raw.set("measurement.k = 3").unwrap();
        let r = Reader::new(&raw);
        assert_eq!(measurement(&r).unwrap().strength, 3.0);
        assert_eq!(r.resolved()["measurement"]["k"], "3");
    }

    #[test]
    fn defaults_are_echoed() {
        let raw = RawConfig::parse(TEXT).unwrap();
        let r = Reader::new(&raw);
        system(&r).unwrap();
        measurement(&r).unwrap();
        assert_eq!(r.resolved()["system"]["mass"], "1");
        r.finish().unwrap();
    }

    #[test]
    fn sections_outside_the_allowed_set() {
        let raw = RawConfig::parse(TEXT).unwrap();
        assert!(raw.check_sections(&["system", "measurement"]).is_ok());
        let err = raw.check_sections(&["system"]).unwrap_err();
        assert!(err.to_string().contains("measurement.k"), "{err}");
    }

    #[test]
    fn malformed_input() {
        assert!(RawConfig::parse("k = 1\n").is_err());
        assert!(RawConfig::parse("[a]\nk = 1\nk = 2\n").is_err());
        let raw = RawConfig::parse("[measurement]\nk = lots\n").unwrap();
        assert!(measurement(&Reader::new(&raw)).is_err());
    }
}
