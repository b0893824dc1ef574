//! `key = value` run configuration with `#` comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hsym_core::shell::ModelConfig;
use hsym_core::stats::default_fit_band;
use hsym_core::{Cx, Error, Result};

/// Model parameters plus analysis settings. `None` bands are derived from the Reynolds
/// number and shell count.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub m_band: Option<(i32, i32)>,
    pub fit_band: Option<(i32, i32)>,
    pub window: (i32, i32),
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_bins: usize,
    pub memory_depth: usize,
    pub p_list: Vec<f64>,
    pub pdf_bins: usize,
    pub tau_resample: bool,
    pub output_dir: PathBuf,
    pub trajectory: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            m_band: None,
            fit_band: None,
            window: (-2, 2),
            grid_min: 1e-3,
            grid_max: 1e2,
            grid_bins: 200,
            memory_depth: 1,
            p_list: (1..=12).map(|i| 0.5 * i as f64).collect(),
            pdf_bins: 201,
            tau_resample: false,
            output_dir: PathBuf::from("hsym_out"),
            trajectory: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "reynolds",
    "f0",
    "f1",
    "n_shells",
    "dt",
    "t_end",
    "t_transient",
    "record_stride",
    "seed",
    "m_band",
    "fit_band",
    "window",
    "grid_min",
    "grid_max",
    "grid_bins",
    "memory_depth",
    "p_list",
    "pdf_bins",
    "tau_resample",
    "output_dir",
    "trajectory",
];

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("{key}: cannot parse {value:?} as {what}"))
}

fn float(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| bad(key, v, "a number"))
}

fn int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v, "an integer"))
}

fn complex(key: &str, v: &str) -> Result<Cx<f64>> {
    let (re, im) = v.split_once(',').ok_or_else(|| bad(key, v, "\"re,im\""))?;
    Ok(Cx::new(float(key, re.trim())?, float(key, im.trim())?))
}

fn range(key: &str, v: &str) -> Result<(i32, i32)> {
    let (a, b) = v.split_once("..").ok_or_else(|| bad(key, v, "a range \"a..b\""))?;
    Ok((int(key, a.trim())?, int(key, b.trim())?))
}

fn auto_range(key: &str, v: &str) -> Result<Option<(i32, i32)>> {
    if v == "auto" {
        Ok(None)
    } else {
        range(key, v).map(Some)
    }
}

fn show_range(r: Option<(i32, i32)>) -> String {
    match r {
        Some((a, b)) => format!("{a}..{b}"),
        None => "auto".into(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key {key:?}", lineno + 1)));
            }
            if seen.contains(&key) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
            seen.push(key);
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("config: cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "reynolds" => m.reynolds = float(key, v)?,
            "f0" => m.f0 = complex(key, v)?,
            "f1" => m.f1 = complex(key, v)?,
            "n_shells" => m.n_shells = int(key, v)?,
            "dt" => m.dt = float(key, v)?,
            "t_end" => m.t_end = float(key, v)?,
            "t_transient" => m.t_transient = float(key, v)?,
            "record_stride" => m.record_stride = int(key, v)?,
            "seed" => m.seed = int(key, v)?,
            "m_band" => self.m_band = auto_range(key, v)?,
            "fit_band" => self.fit_band = auto_range(key, v)?,
            "window" => self.window = range(key, v)?,
            "grid_min" => self.grid_min = float(key, v)?,
            "grid_max" => self.grid_max = float(key, v)?,
            "grid_bins" => self.grid_bins = int(key, v)?,
            "memory_depth" => self.memory_depth = int(key, v)?,
            "p_list" => {
                self.p_list = v
                    .split(',')
                    .map(|p| float(key, p.trim()))
                    .collect::<Result<_>>()?
            }
            "pdf_bins" => self.pdf_bins = int(key, v)?,
            "tau_resample" => {
                self.tau_resample = v.parse().map_err(|_| bad(key, v, "true or false"))?
            }
            "output_dir" => self.output_dir = PathBuf::from(v),
            "trajectory" => self.trajectory = (!v.is_empty()).then(|| PathBuf::from(v)),
            _ => unreachable!("key list checked by the caller"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let (lo, hi) = self.window;
        if !(lo <= 0 && 0 < hi) {
            return Err(Error::Config(format!("window: need lo <= 0 < hi, got {lo}..{hi}")));
        }
        if !(self.grid_min > 0.0 && self.grid_max > self.grid_min) || self.grid_bins == 0 {
            return Err(Error::Config(format!(
                "grid_min/grid_max/grid_bins: need 0 < min < max and bins > 0, got {}, {}, {}",
                self.grid_min, self.grid_max, self.grid_bins
            )));
        }
        if self.memory_depth > 1 {
            return Err(Error::Config(format!(
                "memory_depth: only 0 and 1 are supported, got {}",
                self.memory_depth
            )));
        }
        if self.p_list.is_empty() || self.p_list.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Config("p_list: need a nonempty list of finite orders >= 0".into()));
        }
        if self.pdf_bins == 0 {
            return Err(Error::Config("pdf_bins: must be > 0".into()));
        }
        if let Some((a, b)) = self.fit_band {
            if b - a < 2 {
                return Err(Error::Config(format!("fit_band: need at least 3 shells, got {a}..{b}")));
            }
        }
        if let Some((a, b)) = self.m_band {
            if b < a {
                return Err(Error::Config(format!("m_band: empty band {a}..{b}")));
            }
        }
        Ok(())
    }

    /// Canonical text: every key in fixed order.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("reynolds", m.reynolds.to_string());
        kv("f0", format!("{},{}", m.f0.re, m.f0.im));
        kv("f1", format!("{},{}", m.f1.re, m.f1.im));
        kv("n_shells", m.n_shells.to_string());
        kv("dt", m.dt.to_string());
        kv("t_end", m.t_end.to_string());
        kv("t_transient", m.t_transient.to_string());
        kv("record_stride", m.record_stride.to_string());
        kv("seed", m.seed.to_string());
        kv("m_band", show_range(self.m_band));
        kv("fit_band", show_range(self.fit_band));
        kv("window", show_range(Some(self.window)));
        kv("grid_min", self.grid_min.to_string());
        kv("grid_max", self.grid_max.to_string());
        kv("grid_bins", self.grid_bins.to_string());
        kv("memory_depth", self.memory_depth.to_string());
        kv(
            "p_list",
            self.p_list.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        );
        kv("pdf_bins", self.pdf_bins.to_string());
        kv("tau_resample", self.tau_resample.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv(
            "trajectory",
            self.trajectory.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        s
    }

    /// Fit band, defaulting to `4 <= n <= round(0.75 log₂ Re) - 4` clipped to the evolved
    /// shells.
    pub fn resolved_fit_band(&self) -> (i32, i32) {
        self.fit_band.unwrap_or_else(|| {
            let top = self.model.n_shells as i32 - 1;
            let (a, b) = if self.model.reynolds.is_finite() {
                default_fit_band(self.model.reynolds)
            } else {
                (4, top - 4)
            };
            (a, b.min(top))
        })
    }

    /// Scale band for normalization and multipliers, defaulting to the middle of the fit
    /// band (two shells trimmed at each end).
    pub fn resolved_m_band(&self) -> (i32, i32) {
        self.m_band.unwrap_or_else(|| {
            let (a, b) = self.resolved_fit_band();
            if b - a >= 8 {
                (a + 2, b - 2)
            } else {
                (a.max(1), b)
            }
        })
    }

    pub fn trajectory_path(&self) -> PathBuf {
        self.trajectory
            .clone()
            .unwrap_or_else(|| self.output_dir.join("trajectory.hsym"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let text = c.to_text();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
        for key in KEYS {
            assert!(text.contains(&format!("\n{key} = ")) || text.starts_with(&format!("{key} = ")));
        }
    }

    #[test]
    fn comments_and_overrides() {
        let c = RunConfig::parse(
            "# desk run\nreynolds = 1e6  # lower\nf0 = 1.5, -2\nm_band = 3..7\np_list = 1,2,3\n\ntrajectory = /tmp/x.hsym\n",
        )
        .unwrap();
        assert_eq!(c.model.reynolds, 1e6);
        assert_eq!(c.model.f0, Cx::new(1.5, -2.0));
        assert_eq!(c.m_band, Some((3, 7)));
        assert_eq!(c.p_list, vec![1.0, 2.0, 3.0]);
        assert_eq!(c.trajectory_path(), PathBuf::from("/tmp/x.hsym"));
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        for (text, needle) in [
            ("colour = red", "colour"),
            ("reynolds = fast", "reynolds"),
            ("seed = 1\nseed = 2", "seed"),
            ("m_band = 5..4", "m_band"),
            ("window = 1..3", "window"),
            ("memory_depth = 3", "memory_depth"),
            ("just text", "line 1"),
            ("t_transient = 300", "t_transient"),
        ] {
            match RunConfig::parse(text) {
                Err(Error::Config(msg)) => assert!(msg.contains(needle), "{msg}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn derived_bands() {
        let c = RunConfig::default();
        assert_eq!(c.resolved_fit_band(), (4, 13));
        assert_eq!(c.resolved_m_band(), (6, 11));
        let mut ideal = RunConfig::default();
        ideal.model.reynolds = f64::INFINITY;
        assert_eq!(ideal.resolved_fit_band(), (4, 23));
        let high = RunConfig {
            model: ModelConfig::high_reynolds(),
            ..RunConfig::default()
        };
        assert_eq!(high.resolved_fit_band(), (4, 24));
    }
}
