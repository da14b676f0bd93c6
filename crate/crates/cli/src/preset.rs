//! Scenario configuration: named preset files plus key/value overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use darkmode_core::config::{parameter_keys, parse_flat, resolve_params, suggest_key, ResolvedParams, Value};
use darkmode_core::spectrum::{Detrend, Window};
use darkmode_core::{Error, ProtocolConfig, Result, Scheme, SystemParams, WelchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Paper,
    Desk,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        }
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            _ => Err(Error::Config(format!("unknown scale `{s}` (expected paper or desk)"))),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Fig2Amplitude,
    Fig3Spectrum,
    Fig4Resolution,
    Fig5Mismatch,
    Fig6PeakVsBeta,
    Custom,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::Fig2Amplitude,
        ScenarioKind::Fig3Spectrum,
        ScenarioKind::Fig4Resolution,
        ScenarioKind::Fig5Mismatch,
        ScenarioKind::Fig6PeakVsBeta,
        ScenarioKind::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Fig2Amplitude => "fig2_amplitude",
            ScenarioKind::Fig3Spectrum => "fig3_spectrum",
            ScenarioKind::Fig4Resolution => "fig4_resolution",
            ScenarioKind::Fig5Mismatch => "fig5_mismatch",
            ScenarioKind::Fig6PeakVsBeta => "fig6_peak_vs_beta",
            ScenarioKind::Custom => "custom",
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
            Error::Config(format!("unknown scenario `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Text of the preset file for a scenario at a scale.
pub fn preset_text(kind: ScenarioKind, scale: Scale) -> &'static str {
    use ScenarioKind::*;
    match (scale, kind) {
        (Scale::Desk, Fig2Amplitude) => include_str!("../presets/desk/fig2_amplitude.toml"),
        (Scale::Desk, Fig3Spectrum) => include_str!("../presets/desk/fig3_spectrum.toml"),
        (Scale::Desk, Fig4Resolution) => include_str!("../presets/desk/fig4_resolution.toml"),
        (Scale::Desk, Fig5Mismatch) => include_str!("../presets/desk/fig5_mismatch.toml"),
        (Scale::Desk, Fig6PeakVsBeta) => include_str!("../presets/desk/fig6_peak_vs_beta.toml"),
        (Scale::Desk, Custom) => include_str!("../presets/desk/custom.toml"),
        (Scale::Paper, Fig2Amplitude) => include_str!("../presets/paper/fig2_amplitude.toml"),
        (Scale::Paper, Fig3Spectrum) => include_str!("../presets/paper/fig3_spectrum.toml"),
        (Scale::Paper, Fig4Resolution) => include_str!("../presets/paper/fig4_resolution.toml"),
        (Scale::Paper, Fig5Mismatch) => include_str!("../presets/paper/fig5_mismatch.toml"),
        (Scale::Paper, Fig6PeakVsBeta) => include_str!("../presets/paper/fig6_peak_vs_beta.toml"),
        (Scale::Paper, Custom) => include_str!("../presets/paper/custom.toml"),
    }
}

/// Keys controlling runs rather than physics.
pub const RUN_KEYS: &[&str] = &[
    "dt",
    "record_gamma_t",
    "transient_gamma_t",
    "record_stride",
    "scheme",
    "noise",
    "repeats",
    "power_min_w",
    "power_max_w",
    "power_points",
    "power_spacing",
    "beta_min",
    "beta_max",
    "beta_points",
    "record_factor",
    "r2_threshold",
    "welch_segment",
    "welch_overlap",
    "window",
    "detrend",
    "band_low",
    "band_high",
    "exclude_coherent",
    "mismatch_min",
    "mismatch_max",
    "mismatch_points",
];

/// Keys describing the configuration itself.
pub const META_KEYS: &[&str] = &["scenario", "scale", "seed", "output_dir"];

fn all_keys() -> impl Iterator<Item = &'static str> {
    parameter_keys().chain(RUN_KEYS.iter().copied()).chain(META_KEYS.iter().copied())
}

fn unknown_key(key: &str) -> Error {
    let hint = suggest_key(key, all_keys())
        .map(|s| format!("; did you mean `{s}`?"))
        .unwrap_or_default();
    let mut valid: Vec<&str> = all_keys().collect();
    valid.sort_unstable();
    Error::Config(format!("unknown key `{key}`{hint} (valid keys: {})", valid.join(", ")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

/// Run settings after defaults are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub dt: f64,
    pub record_gamma_t: f64,
    pub transient_gamma_t: f64,
    pub record_stride: Option<usize>,
    pub scheme: Scheme,
    pub noise: bool,
    pub repeats: usize,
    pub power_min_w: Option<f64>,
    pub power_max_w: Option<f64>,
    pub power_points: usize,
    pub power_spacing: Spacing,
    pub beta_min: Option<f64>,
    pub beta_max: Option<f64>,
    pub beta_points: usize,
    pub record_factor: f64,
    pub r2_threshold: f64,
    pub welch_segment: f64,
    pub welch_overlap: f64,
    pub window: Window,
    pub detrend: Detrend,
    pub band: (f64, f64),
    pub exclude_coherent: Option<bool>,
    pub mismatch_min: Option<f64>,
    pub mismatch_max: Option<f64>,
    pub mismatch_points: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            dt: 0.02,
            record_gamma_t: 20.0,
            transient_gamma_t: 3.0,
            record_stride: None,
            scheme: Scheme::HeunDrift,
            noise: true,
            repeats: 1,
            power_min_w: None,
            power_max_w: None,
            power_points: 8,
            power_spacing: Spacing::Linear,
            beta_min: None,
            beta_max: None,
            beta_points: 5,
            record_factor: 3.0,
            r2_threshold: darkmode_core::estimation::DEFAULT_R2_THRESHOLD,
            welch_segment: 5.0,
            welch_overlap: 2.0,
            window: Window::Blackman,
            detrend: Detrend::Mean,
            band: (-20.0, 40.0),
            exclude_coherent: None,
            mismatch_min: None,
            mismatch_max: None,
            mismatch_points: 6,
        }
    }
}

fn grid(lo: f64, hi: f64, n: usize, spacing: Spacing) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    (0..n)
        .map(|i| {
            let f = i as f64 / (n - 1) as f64;
            match spacing {
                Spacing::Linear => lo + f * (hi - lo),
                Spacing::Log => (lo.ln() + f * (hi.ln() - lo.ln())).exp(),
            }
        })
        .collect()
}

impl RunSettings {
    fn apply(&mut self, key: &str, value: &Value, line: usize) -> Result<()> {
        let num = || {
            value.as_f64().ok_or_else(|| Error::Parse {
                line,
                message: format!("`{key}` must be numeric"),
            })
        };
        let count = || -> Result<usize> {
            let v = num()?;
            if v < 1.0 || v.fract() != 0.0 {
                return Err(Error::Config(format!("`{key}` must be a positive integer, got {v}")));
            }
            Ok(v as usize)
        };
        let text = || match value {
            Value::Text(s) => Ok(s.as_str()),
            _ => Err(Error::Parse {
                line,
                message: format!("`{key}` must be a string"),
            }),
        };
        let flag = || match value {
            Value::Bool(b) => Ok(*b),
            _ => Err(Error::Parse {
                line,
                message: format!("`{key}` must be true or false"),
            }),
        };
        match key {
            "dt" => self.dt = num()?,
            "record_gamma_t" => self.record_gamma_t = num()?,
            "transient_gamma_t" => self.transient_gamma_t = num()?,
            "record_stride" => self.record_stride = Some(count()?),
            "scheme" => self.scheme = text()?.parse()?,
            "noise" => self.noise = flag()?,
            "repeats" => self.repeats = count()?,
            "power_min_w" => self.power_min_w = Some(num()?),
            "power_max_w" => self.power_max_w = Some(num()?),
            "power_points" => self.power_points = count()?,
            "power_spacing" => {
                self.power_spacing = match text()? {
                    "linear" => Spacing::Linear,
                    "log" => Spacing::Log,
                    other => return Err(Error::Config(format!("unknown spacing `{other}` (linear or log)"))),
                }
            }
            "beta_min" => self.beta_min = Some(num()?),
            "beta_max" => self.beta_max = Some(num()?),
            "beta_points" => self.beta_points = count()?,
            "record_factor" => self.record_factor = num()?,
            "r2_threshold" => self.r2_threshold = num()?,
            "welch_segment" => self.welch_segment = num()?,
            "welch_overlap" => self.welch_overlap = num()?,
            "window" => self.window = text()?.parse()?,
            "detrend" => {
                self.detrend = match text()? {
                    "none" => Detrend::None,
                    "mean" => Detrend::Mean,
                    other => return Err(Error::Config(format!("unknown detrend `{other}` (none or mean)"))),
                }
            }
            "band_low" => self.band.0 = num()?,
            "band_high" => self.band.1 = num()?,
            "exclude_coherent" => self.exclude_coherent = Some(flag()?),
            "mismatch_min" => self.mismatch_min = Some(num()?),
            "mismatch_max" => self.mismatch_max = Some(num()?),
            "mismatch_points" => self.mismatch_points = count()?,
            _ => return Err(unknown_key(key)),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("record_gamma_t", self.record_gamma_t),
            ("record_factor", self.record_factor),
            ("welch_segment", self.welch_segment),
        ];
        for (k, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("`{k}` must be positive, got {v}")));
            }
        }
        if !(self.transient_gamma_t >= 0.0) {
            return Err(Error::Config("`transient_gamma_t` must be non-negative".into()));
        }
        if !(self.welch_overlap >= 0.0 && self.welch_overlap < self.welch_segment) {
            return Err(Error::Config("need 0 <= `welch_overlap` < `welch_segment`".into()));
        }
        let two_segments = 2.0 * self.welch_segment - self.welch_overlap;
        if self.record_gamma_t < two_segments {
            return Err(Error::Config(format!(
                "`record_gamma_t` = {} holds fewer than two Welch segments (needs {two_segments})",
                self.record_gamma_t
            )));
        }
        if self.band.0 >= self.band.1 {
            return Err(Error::Config("`band_low` must be below `band_high`".into()));
        }
        if let (Some(lo), Some(hi)) = (self.power_min_w, self.power_max_w) {
            if !(lo >= 0.0 && hi >= lo) {
                return Err(Error::Config(format!("power range [{lo}, {hi}] is invalid")));
            }
        }
        if let (Some(lo), Some(hi)) = (self.beta_min, self.beta_max) {
            if !(lo > 0.0 && hi > lo) {
                return Err(Error::Config(format!("beta range [{lo}, {hi}] is invalid")));
            }
        }
        Ok(())
    }

    /// Hot-drive powers in W.
    pub fn power_grid(&self) -> Result<Vec<f64>> {
        match (self.power_min_w, self.power_max_w) {
            (Some(lo), Some(hi)) => {
                if self.power_spacing == Spacing::Log && lo <= 0.0 {
                    return Err(Error::Config("log power spacing needs power_min_w > 0".into()));
                }
                Ok(grid(lo, hi, self.power_points, self.power_spacing))
            }
            _ => Err(Error::Config("this run needs power_min_w and power_max_w".into())),
        }
    }

    /// Log-spaced β_NL grid.
    pub fn beta_grid(&self) -> Result<Vec<f64>> {
        match (self.beta_min, self.beta_max) {
            (Some(lo), Some(hi)) => Ok(grid(lo, hi, self.beta_points, Spacing::Log)),
            _ => Err(Error::Config("this run needs beta_min and beta_max".into())),
        }
    }

    /// Log-spaced frequency-mismatch grid (dimensionless δ).
    pub fn mismatch_grid(&self) -> Result<Vec<f64>> {
        match (self.mismatch_min, self.mismatch_max) {
            (Some(lo), Some(hi)) if lo > 0.0 && hi >= lo => Ok(grid(lo, hi, self.mismatch_points, Spacing::Log)),
            (Some(_), Some(_)) => Err(Error::Config("mismatch range is invalid".into())),
            _ => Err(Error::Config("this run needs mismatch_min and mismatch_max".into())),
        }
    }
}

/// A scenario request: preset choice, overrides, seed and destination.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub scale: Scale,
    /// Key/value pairs applied on top of the preset.
    pub overrides: BTreeMap<String, Value>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl ScenarioConfig {
    pub fn new(scenario: ScenarioKind, scale: Scale) -> Self {
        ScenarioConfig {
            scenario,
            scale,
            overrides: BTreeMap::new(),
            master_seed: 0,
            output_dir: PathBuf::from("darkmode-out"),
        }
    }

    /// Read a configuration file. `scenario`, `scale`, `seed` and
    /// `output_dir` select the run; every other key overrides the preset.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::new(ScenarioKind::Custom, Scale::Desk);
        for e in parse_flat(text)? {
            let as_text = |v: &Value| match v {
                Value::Text(s) => Ok(s.clone()),
                _ => Err(Error::Parse {
                    line: e.line,
                    message: format!("`{}` must be a string", e.key),
                }),
            };
            match e.key.as_str() {
                "scenario" => cfg.scenario = as_text(&e.value)?.parse()?,
                "scale" => cfg.scale = as_text(&e.value)?.parse()?,
                "output_dir" => cfg.output_dir = PathBuf::from(as_text(&e.value)?),
                "seed" => {
                    cfg.master_seed = match e.value.as_f64() {
                        Some(v) if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) => v as u64,
                        _ => {
                            return Err(Error::Parse {
                                line: e.line,
                                message: "`seed` must be a non-negative integer".into(),
                            })
                        }
                    }
                }
                key => {
                    if !all_keys().any(|k| k == key) {
                        return Err(unknown_key(key));
                    }
                    cfg.overrides.insert(e.key.clone(), e.value.clone());
                }
            }
        }
        Ok(cfg)
    }

    /// Apply a `key=value` override given on the command line.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        if !all_keys().any(|k| k == key) || META_KEYS.contains(&key) {
            return Err(unknown_key(key));
        }
        let value = if let Ok(v) = raw.parse::<f64>() {
            Value::Number(v)
        } else if let Ok(b) = raw.parse::<bool>() {
            Value::Bool(b)
        } else {
            Value::Text(raw.trim_matches('"').to_string())
        };
        self.overrides.insert(key.to_string(), value);
        Ok(())
    }

    /// Merge preset and overrides into concrete parameters and settings.
    pub fn resolve(&self) -> Result<Resolved> {
        let preset = preset_text(self.scenario, self.scale);
        let mut merged: BTreeMap<String, (Value, usize)> = BTreeMap::new();
        for e in parse_flat(preset)? {
            merged.insert(e.key, (e.value, e.line));
        }
        for (k, v) in &self.overrides {
            merged.insert(k.clone(), (v.clone(), 0));
        }
        // A dimensionless override replaces the SI form of the same quantity
        // from the preset instead of colliding with it.
        for (dim, si) in SUPERSEDES {
            if self.overrides.contains_key(*dim) {
                for s in si.iter() {
                    if !self.overrides.contains_key(*s) {
                        merged.remove(*s);
                    }
                }
            }
        }

        let mut numeric = BTreeMap::new();
        let mut run = RunSettings::default();
        for (key, (value, line)) in &merged {
            if parameter_keys().any(|k| k == key) {
                let v = value.as_f64().ok_or_else(|| Error::Parse {
                    line: *line,
                    message: format!("`{key}` must be numeric"),
                })?;
                numeric.insert(key.clone(), v);
            } else {
                run.apply(key, value, *line)?;
            }
        }
        run.validate()?;
        let params = resolve_params(&numeric, SystemParams::paper_baseline())?;
        let canonical = merged
            .iter()
            .map(|(k, (v, _))| format!("{k} = {}", render(v)))
            .collect::<Vec<_>>()
            .join("\n");
        Ok(Resolved {
            scenario: self.scenario,
            scale: self.scale,
            master_seed: self.master_seed,
            params,
            run,
            canonical,
        })
    }
}

const SUPERSEDES: &[(&str, &[&str])] = &[
    ("delta", &["delta_hz"]),
    ("kappa", &["kappa_hz"]),
    ("g", &["g_hz"]),
    ("delta2", &["delta2_hz"]),
    ("delta1", &["delta1_hz"]),
    ("gamma", &["q"]),
    ("drive_h", &["power_h_w"]),
    ("drive_c", &["power_c_w"]),
    ("nbar", &["temperature_k"]),
    ("beta_nl", &["beta0"]),
];

fn render(v: &Value) -> String {
    match v {
        Value::Number(x) => format!("{x:e}"),
        Value::Text(s) => format!("\"{s}\""),
        Value::Bool(b) => b.to_string(),
    }
}

/// A fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: ScenarioKind,
    pub scale: Scale,
    pub master_seed: u64,
    pub params: ResolvedParams,
    pub run: RunSettings,
    /// Sorted `key = value` listing of every input, hashed into the manifest.
    pub canonical: String,
}

impl Resolved {
    pub fn system(&self) -> &SystemParams {
        &self.params.params
    }

    /// Mean mechanical damping, the unit of the γt settings.
    pub fn gamma(&self) -> f64 {
        let p = self.system();
        (p.gamma1 + p.gamma2) / 2.0
    }

    /// Hot-drive amplitude per √W.
    pub fn drive_per_sqrt_watt(&self) -> Result<f64> {
        self.params.drive_for_power(1.0)
    }

    /// Hot drive of single runs: the explicit value if one was given,
    /// otherwise the top of the power grid.
    pub fn single_run_params(&self) -> Result<SystemParams> {
        let mut p = self.system().clone();
        let explicit = self.params.power_h_w.is_some() || self.canonical.lines().any(|l| l.starts_with("drive_h "));
        if !explicit {
            let top = self
                .run
                .power_max_w
                .ok_or_else(|| Error::Config("set power_h_w, drive_h or power_max_w".into()))?;
            p.drive_h = self.drive_per_sqrt_watt()? * top.sqrt();
        }
        Ok(p)
    }

    pub fn welch(&self) -> WelchConfig {
        WelchConfig {
            segment_length: self.run.welch_segment,
            overlap: self.run.welch_overlap,
            window: self.run.window,
            detrend: self.run.detrend,
            gamma: self.gamma(),
        }
    }

    /// Protocol settings. The coherent line at Δ₂ is skipped by default only
    /// when the resonators differ, since otherwise the dark mode carries no
    /// coherent component.
    pub fn protocol(&self, workers: usize) -> Result<ProtocolConfig> {
        let p = self.system();
        let g = self.gamma();
        let mismatched = p.omega_b1 != p.omega_b2 || p.gamma1 != p.gamma2 || p.g1 != p.g2;
        Ok(ProtocolConfig {
            dt: self.run.dt,
            t_transient: self.run.transient_gamma_t / g,
            t_record: self.run.record_gamma_t / g,
            scheme: self.run.scheme,
            record_stride: self.run.record_stride,
            welch: self.welch(),
            peak_method: Default::default(),
            band: self.run.band,
            exclude_coherent: self.run.exclude_coherent.unwrap_or(mismatched),
            drive_per_sqrt_watt: self.drive_per_sqrt_watt()?,
            master_seed: self.master_seed,
            repeats: self.run.repeats,
            noise: self.run.noise,
            workers,
        })
    }

    /// Human-readable listing of the resolved dimensionless parameters.
    pub fn echo(&self) -> String {
        let p = self.system();
        let mut out = format!("scenario = {}\nscale = {}\nseed = {}\n", self.scenario, self.scale, self.master_seed);
        let rows = [
            ("omega_b1", p.omega_b1),
            ("omega_b2", p.omega_b2),
            ("gamma1", p.gamma1),
            ("gamma2", p.gamma2),
            ("g1", p.g1),
            ("g2", p.g2),
            ("kappa", p.kappa),
            ("kappa_in", p.kappa_in),
            ("delta1", p.delta1),
            ("delta2", p.delta2),
            ("drive_h", p.drive_h),
            ("drive_c", p.drive_c),
            ("nbar1", p.nbar1),
            ("nbar2", p.nbar2),
            ("beta_nl", p.beta_nl),
            ("theta", p.theta),
        ];
        for (k, v) in rows {
            out.push_str(&format!("{k} = {}\n", fmt_sig(v)));
        }
        out
    }
}

/// Five significant figures, plain notation where it stays readable.
fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor();
    if (-3.0..6.0).contains(&mag) {
        let decimals = (4.0 - mag).max(0.0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.4e}")
    }
}
