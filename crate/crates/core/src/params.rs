//! Converter design record and its flat `key = value` configuration format.
//!
//! Every quantity is in SI base units (V, A, H, F, s, Ω). The config file uses
//! the same units and accepts plain decimal or scientific notation only, so a
//! value such as 230 nH is written `230e-9`.
//!
//! ```
//! use capcoupled::ConverterParams;
//!
//! let p = ConverterParams::parse_config(
//!     "v_dc = 15\nn_stages = 16\nl_s = 230e-9\nc_s = 44e-6\n\
//!      c_f = 10e-6\nr_l = 180\nf_sw = 200e3\n",
//! )
//! .unwrap();
//! assert_eq!(p.t_sw(), 5e-6);
//! assert_eq!(p.per_stage_load(), 11.25);
//! ```

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Version of the config-file schema understood by [`ConverterParams::parse_config`].
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

const REQUIRED: [&str; 7] = ["v_dc", "n_stages", "l_s", "c_s", "c_f", "r_l", "f_sw"];
const OPTIONAL: [&str; 2] = ["k_ls", "k_cs"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("`{0}` must be strictly positive")]
    NonPositiveValue(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("malformed number for `{0}`")]
    MalformedNumber(String),
    #[error("key `{0}` given more than once")]
    DuplicateKey(String),
    #[error("line {0} is not a `key = value` pair")]
    MalformedLine(usize),
}

/// Design parameters of an N-stage capacitor-coupled converter.
///
/// The switching period is always derived from the switching frequency; there
/// is no way to set it independently.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterParams {
    v_dc: f64,
    n_stages: u32,
    l_s: f64,
    c_s: f64,
    c_f: f64,
    r_l: f64,
    f_sw: f64,
    k_ls: Option<f64>,
    k_cs: Option<f64>,
}

impl ConverterParams {
    /// Validating constructor. `r_l` may be `f64::INFINITY` to represent an
    /// open-circuit (no-load) output; every other value must be finite.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        v_dc: f64,
        n_stages: u32,
        l_s: f64,
        c_s: f64,
        c_f: f64,
        r_l: f64,
        f_sw: f64,
    ) -> Result<Self, ConfigError> {
        for (name, value) in [
            ("v_dc", v_dc),
            ("l_s", l_s),
            ("c_s", c_s),
            ("c_f", c_f),
            ("f_sw", f_sw),
        ] {
            if !value.is_finite() {
                return Err(ConfigError::MalformedNumber(name.into()));
            }
            if value <= 0.0 {
                return Err(ConfigError::NonPositiveValue(name.into()));
            }
        }
        if r_l.is_nan() {
            return Err(ConfigError::MalformedNumber("r_l".into()));
        }
        if r_l <= 0.0 {
            return Err(ConfigError::NonPositiveValue("r_l".into()));
        }
        if n_stages == 0 {
            return Err(ConfigError::NonPositiveValue("n_stages".into()));
        }
        Ok(Self {
            v_dc,
            n_stages,
            l_s,
            c_s,
            c_f,
            r_l,
            f_sw,
            k_ls: None,
            k_cs: None,
        })
    }

    /// The 16-stage laboratory design: 15 V source, 230 nH / 44 µF coupling,
    /// 10 µF filters, 180 Ω load, 200 kHz switching.
    pub fn reference_design() -> Self {
        let mut p =
            Self::new(15.0, 16, 230e-9, 44e-6, 10e-6, 180.0, 200e3).expect("reference design is valid");
        p.k_ls = Some(60.0);
        p.k_cs = Some(40.0);
        p
    }

    pub fn v_dc(&self) -> f64 {
        self.v_dc
    }
    pub fn n_stages(&self) -> u32 {
        self.n_stages
    }
    pub fn l_s(&self) -> f64 {
        self.l_s
    }
    pub fn c_s(&self) -> f64 {
        self.c_s
    }
    pub fn c_f(&self) -> f64 {
        self.c_f
    }
    /// Total load resistance across the series-connected outputs.
    pub fn r_l(&self) -> f64 {
        self.r_l
    }
    pub fn f_sw(&self) -> f64 {
        self.f_sw
    }
    pub fn t_sw(&self) -> f64 {
        1.0 / self.f_sw
    }
    /// Opaque sizing metadata; carried through but never used in computation.
    pub fn k_ls(&self) -> Option<f64> {
        self.k_ls
    }
    pub fn k_cs(&self) -> Option<f64> {
        self.k_cs
    }

    /// Load resistance seen by one stage, `r_l / n_stages`.
    pub fn per_stage_load(&self) -> f64 {
        self.r_l / f64::from(self.n_stages)
    }

    /// Copy with a different total load resistance.
    pub fn with_load(&self, r_l: f64) -> Result<Self, ConfigError> {
        let mut p = Self::new(
            self.v_dc,
            self.n_stages,
            self.l_s,
            self.c_s,
            self.c_f,
            r_l,
            self.f_sw,
        )?;
        p.k_ls = self.k_ls;
        p.k_cs = self.k_cs;
        Ok(p)
    }

    /// Copy with a different source voltage.
    pub fn with_v_dc(&self, v_dc: f64) -> Result<Self, ConfigError> {
        let mut p = Self::new(
            v_dc,
            self.n_stages,
            self.l_s,
            self.c_s,
            self.c_f,
            self.r_l,
            self.f_sw,
        )?;
        p.k_ls = self.k_ls;
        p.k_cs = self.k_cs;
        Ok(p)
    }

    /// Copy with a different stage count; the total load is unchanged.
    pub fn with_stages(&self, n_stages: u32) -> Result<Self, ConfigError> {
        let mut p = Self::new(
            self.v_dc, n_stages, self.l_s, self.c_s, self.c_f, self.r_l, self.f_sw,
        )?;
        p.k_ls = self.k_ls;
        p.k_cs = self.k_cs;
        Ok(p)
    }

    /// Parses the flat config format: one `key = value` per line, `#` starts
    /// a comment, blank lines ignored.
    pub fn parse_config(text: &str) -> Result<Self, ConfigError> {
        let mut values: BTreeMap<&str, &str> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::MalformedLine(idx + 1))?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(ConfigError::MalformedLine(idx + 1));
            }
            if !REQUIRED.contains(&key) && !OPTIONAL.contains(&key) {
                return Err(ConfigError::UnknownKey(key.into()));
            }
            if values.insert(key, value).is_some() {
                return Err(ConfigError::DuplicateKey(key.into()));
            }
        }

        let number = |key: &str| -> Result<f64, ConfigError> {
            let raw = values
                .get(key)
                .ok_or_else(|| ConfigError::MissingKey(key.into()))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| ConfigError::MalformedNumber(key.into()))?;
            if v.is_nan() {
                return Err(ConfigError::MalformedNumber(key.into()));
            }
            Ok(v)
        };

        // Report missing keys in schema order before any value checks.
        for key in REQUIRED {
            if !values.contains_key(key) {
                return Err(ConfigError::MissingKey(key.into()));
            }
        }

        let n = number("n_stages")?;
        if n <= 0.0 {
            return Err(ConfigError::NonPositiveValue("n_stages".into()));
        }
        if n.fract() != 0.0 || n > f64::from(u32::MAX) {
            return Err(ConfigError::MalformedNumber("n_stages".into()));
        }

        let mut p = Self::new(
            number("v_dc")?,
            n as u32,
            number("l_s")?,
            number("c_s")?,
            number("c_f")?,
            number("r_l")?,
            number("f_sw")?,
        )?;
        for key in OPTIONAL {
            if values.contains_key(key) {
                let v = number(key)?;
                if !v.is_finite() {
                    return Err(ConfigError::MalformedNumber(key.into()));
                }
                match key {
                    "k_ls" => p.k_ls = Some(v),
                    _ => p.k_cs = Some(v),
                }
            }
        }
        Ok(p)
    }

    /// Serializes to the config format. Values use the shortest decimal form
    /// that parses back to the identical `f64`.
    pub fn to_config_string(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ConverterParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "v_dc = {}", self.v_dc)?;
        writeln!(f, "n_stages = {}", self.n_stages)?;
        writeln!(f, "l_s = {:e}", self.l_s)?;
        writeln!(f, "c_s = {:e}", self.c_s)?;
        writeln!(f, "c_f = {:e}", self.c_f)?;
        writeln!(f, "r_l = {}", self.r_l)?;
        writeln!(f, "f_sw = {:e}", self.f_sw)?;
        if let Some(k) = self.k_ls {
            writeln!(f, "k_ls = {k}")?;
        }
        if let Some(k) = self.k_cs {
            writeln!(f, "k_cs = {k}")?;
        }
        Ok(())
    }
}
