//! Flat `key = value` parameter files.
//!
//! A file may give quantities in SI form (keys ending in `_hz`, `_w`, `_m`,
//! `_k`, `_kg`, quality factors `q*`, `beta0`) together with the SI context,
//! or directly in dimensionless form. When both forms of the same quantity are
//! present the dimensionless value wins and a warning is recorded.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::units::{beta_nl_from_beta0, thermal_occupancy, to_dimensionless, SiContext, SystemParams};

/// Dimensionless parameter keys.
pub const DIMENSIONLESS_KEYS: &[&str] = &[
    "omega_b1", "omega_b2", "delta", "gamma", "gamma1", "gamma2", "g", "g1", "g2", "kappa",
    "kappa_in", "delta1", "delta2", "drive_h", "drive_c", "nbar", "nbar1", "nbar2", "beta_nl",
    "theta",
];

/// SI parameter and context keys.
pub const SI_KEYS: &[&str] = &[
    "omega_b_hz", "delta_hz", "q", "q1", "q2", "g_hz", "g1_hz", "g2_hz", "kappa_hz",
    "kappa_in_hz", "delta1_hz", "delta2_hz", "power_h_w", "power_c_w", "wavelength_m",
    "temperature_k", "mass_kg", "beta0",
];

/// Every parameter key understood by [`resolve_params`].
pub fn parameter_keys() -> impl Iterator<Item = &'static str> {
    DIMENSIONLESS_KEYS.iter().chain(SI_KEYS.iter()).copied()
}

/// One `key = value` entry with its source line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: Value,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
    Bool(bool),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            _ => None,
        }
    }
}

/// Parse a flat key/value document. Nested tables and arrays are rejected.
pub fn parse_flat(text: &str) -> Result<Vec<Entry>> {
    if text.trim().is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "configuration is empty".into(),
        });
    }
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })?;
    let mut entries = Vec::with_capacity(table.len());
    for (key, value) in table {
        let line = find_key_line(text, &key);
        let value = match value {
            toml::Value::Integer(i) => Value::Number(i as f64),
            toml::Value::Float(f) => Value::Number(f),
            toml::Value::String(s) => Value::Text(s),
            toml::Value::Boolean(b) => Value::Bool(b),
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("`{key}` must be a scalar, found {}", other.type_str()),
                })
            }
        };
        entries.push(Entry { key, value, line });
    }
    entries.sort_by_key(|e| e.line);
    Ok(entries)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn find_key_line(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .map(|rest| rest.trim_start().starts_with('='))
                .unwrap_or(false)
        })
        .map(|i| i + 1)
        .unwrap_or(0)
}

/// Closest known key to `unknown`, if any is reasonably close.
pub fn suggest_key<'a>(unknown: &str, known: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    known
        .map(|k| (strsim::levenshtein(unknown, k), k))
        .filter(|(d, k)| *d <= 2.max(k.len() / 3))
        .min_by_key(|(d, _)| *d)
        .map(|(_, k)| k)
}

/// Parameter set after resolving SI and dimensionless inputs.
#[derive(Debug, Clone)]
pub struct ResolvedParams {
    pub params: SystemParams,
    pub si: Option<SiContext>,
    /// Powers in watts when given in SI form: (P_h, P_c).
    pub power_h_w: Option<f64>,
    pub power_c_w: Option<f64>,
    /// Input-port decay rate in Hz, kept for power/drive conversions.
    pub kappa_in_hz: Option<f64>,
    pub warnings: Vec<String>,
}

impl ResolvedParams {
    /// Dimensionless drive for a power in watts, using the resolved SI context.
    pub fn drive_for_power(&self, power_w: f64) -> Result<f64> {
        let si = self
            .si
            .as_ref()
            .ok_or_else(|| Error::config("power conversion needs omega_b_hz and wavelength_m"))?;
        let kin_hz = self.kappa_in_hz.unwrap_or(self.params.kappa_in * si.omega_b_hz);
        si.drive_from_power(power_w, kin_hz)
    }
}

/// Apply numeric parameter entries on top of `base`.
///
/// Unknown keys are reported with the closest valid name.
pub fn resolve_params(values: &BTreeMap<String, f64>, base: SystemParams) -> Result<ResolvedParams> {
    for key in values.keys() {
        if !parameter_keys().any(|k| k == key) {
            let hint = suggest_key(key, parameter_keys())
                .map(|s| format!("; did you mean `{s}`?"))
                .unwrap_or_default();
            return Err(Error::config(format!("unknown parameter `{key}`{hint}")));
        }
    }

    let get = |k: &str| values.get(k).copied();
    let mut p = base;
    let mut warnings = Vec::new();

    let si = match get("omega_b_hz") {
        Some(hz) => {
            let ctx = SiContext {
                omega_b_hz: hz,
                mass: get("mass_kg"),
                laser_wavelength: get("wavelength_m").unwrap_or(1064e-9),
                temperature: get("temperature_k"),
            };
            if ctx.mass.is_none() && get("beta0").is_some() {
                return Err(Error::config("beta0 needs mass_kg to convert to beta_nl"));
            }
            ctx.validate()?;
            Some(ctx)
        }
        None => {
            if let Some(k) = SI_KEYS.iter().find(|k| values.contains_key(**k)) {
                return Err(Error::config(format!("SI key `{k}` requires omega_b_hz")));
            }
            None
        }
    };

    let mut power_h_w = None;
    let mut power_c_w = None;
    let mut kappa_in_hz = None;

    if let Some(ctx) = &si {
        let r = ctx.omega_b_hz;
        let dimless = |hz: f64| to_dimensionless(hz, r);
        if let Some(d) = get("delta_hz") {
            let d = dimless(d)?;
            p.omega_b1 = 1.0 - d;
            p.omega_b2 = 1.0 + d;
        }
        if let Some(k) = get("kappa_hz") {
            p.kappa = dimless(k)?;
            p.kappa_in = p.kappa / 2.0;
        }
        if let Some(k) = get("kappa_in_hz") {
            p.kappa_in = dimless(k)?;
        }
        kappa_in_hz = Some(p.kappa_in * r);
        if let Some(g) = get("g_hz") {
            p.g1 = dimless(g)?;
            p.g2 = p.g1;
        }
        if let Some(g) = get("g1_hz") {
            p.g1 = dimless(g)?;
        }
        if let Some(g) = get("g2_hz") {
            p.g2 = dimless(g)?;
        }
        if let Some(d) = get("delta1_hz") {
            p.delta1 = dimless(d)?;
        }
        if let Some(d) = get("delta2_hz") {
            p.delta2 = dimless(d)?;
        }
        if let Some(q) = get("q") {
            p.gamma1 = p.omega_b1 / q;
            p.gamma2 = p.omega_b2 / q;
        }
        if let Some(q) = get("q1") {
            p.gamma1 = p.omega_b1 / q;
        }
        if let Some(q) = get("q2") {
            p.gamma2 = p.omega_b2 / q;
        }
        if let Some(t) = ctx.temperature {
            let w = ctx.omega_b_angular();
            p.nbar1 = thermal_occupancy(w * p.omega_b1, t);
            p.nbar2 = thermal_occupancy(w * p.omega_b2, t);
        }
        let kin_hz = p.kappa_in * r;
        if let Some(pw) = get("power_h_w") {
            p.drive_h = ctx.drive_from_power(pw, kin_hz)?;
            power_h_w = Some(pw);
        }
        if let Some(pw) = get("power_c_w") {
            p.drive_c = ctx.drive_from_power(pw, kin_hz)?;
            power_c_w = Some(pw);
        }
        if let (Some(b0), Some(m)) = (get("beta0"), ctx.mass) {
            p.beta_nl = beta_nl_from_beta0(b0, m, ctx.omega_b_angular())?;
        }
    }

    // Dimensionless values override their SI counterparts.
    let conflicts: &[(&str, &[&str])] = &[
        ("delta", &["delta_hz"]),
        ("omega_b1", &["delta_hz"]),
        ("omega_b2", &["delta_hz"]),
        ("kappa", &["kappa_hz"]),
        ("kappa_in", &["kappa_in_hz", "kappa_hz"]),
        ("g", &["g_hz", "g1_hz", "g2_hz"]),
        ("g1", &["g_hz", "g1_hz"]),
        ("g2", &["g_hz", "g2_hz"]),
        ("delta1", &["delta1_hz"]),
        ("delta2", &["delta2_hz"]),
        ("gamma", &["q", "q1", "q2"]),
        ("gamma1", &["q", "q1"]),
        ("gamma2", &["q", "q2"]),
        ("drive_h", &["power_h_w"]),
        ("drive_c", &["power_c_w"]),
        ("nbar", &["temperature_k"]),
        ("nbar1", &["temperature_k"]),
        ("nbar2", &["temperature_k"]),
        ("beta_nl", &["beta0"]),
    ];
    for (dim, sis) in conflicts {
        if values.contains_key(*dim) {
            for s in sis.iter().filter(|s| values.contains_key(**s)) {
                let w = format!("`{dim}` overrides SI value `{s}`");
                log::warn!("{w}");
                warnings.push(w);
            }
        }
    }

    if let Some(d) = get("delta") {
        p.omega_b1 = 1.0 - d;
        p.omega_b2 = 1.0 + d;
    }
    if let Some(v) = get("omega_b1") {
        p.omega_b1 = v;
    }
    if let Some(v) = get("omega_b2") {
        p.omega_b2 = v;
    }
    if let Some(v) = get("gamma") {
        p.gamma1 = v;
        p.gamma2 = v;
    }
    if let Some(v) = get("gamma1") {
        p.gamma1 = v;
    }
    if let Some(v) = get("gamma2") {
        p.gamma2 = v;
    }
    if let Some(v) = get("g") {
        p.g1 = v;
        p.g2 = v;
    }
    if let Some(v) = get("g1") {
        p.g1 = v;
    }
    if let Some(v) = get("g2") {
        p.g2 = v;
    }
    if let Some(v) = get("kappa") {
        p.kappa = v;
        if get("kappa_in").is_none() && get("kappa_in_hz").is_none() {
            p.kappa_in = v / 2.0;
        }
    }
    if let Some(v) = get("kappa_in") {
        p.kappa_in = v;
    }
    if get("kappa").is_some() || get("kappa_in").is_some() {
        kappa_in_hz = si.as_ref().map(|c| p.kappa_in * c.omega_b_hz);
    }
    if let Some(v) = get("delta1") {
        p.delta1 = v;
    }
    if let Some(v) = get("delta2") {
        p.delta2 = v;
    }
    if let Some(v) = get("drive_h") {
        p.drive_h = v;
        power_h_w = None;
    }
    if let Some(v) = get("drive_c") {
        p.drive_c = v;
        power_c_w = None;
    }
    if let Some(v) = get("nbar") {
        p.nbar1 = v;
        p.nbar2 = v;
    }
    if let Some(v) = get("nbar1") {
        p.nbar1 = v;
    }
    if let Some(v) = get("nbar2") {
        p.nbar2 = v;
    }
    if let Some(v) = get("beta_nl") {
        p.beta_nl = v;
    }
    if let Some(v) = get("theta") {
        p.theta = v;
    }

    warnings.extend(p.validate()?);
    Ok(ResolvedParams {
        params: p,
        si,
        power_h_w,
        power_c_w,
        kappa_in_hz,
        warnings,
    })
}

/// Parse a parameter-only file on top of `base`.
pub fn parse_params(text: &str, base: SystemParams) -> Result<ResolvedParams> {
    let mut values = BTreeMap::new();
    for e in parse_flat(text)? {
        let v = e.value.as_f64().ok_or_else(|| Error::Parse {
            line: e.line,
            message: format!("`{}` must be numeric", e.key),
        })?;
        values.insert(e.key, v);
    }
    resolve_params(&values, base)
}
