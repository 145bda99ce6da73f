//! Model constants and the derived width/time scales.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The constants of the model: population size, mutation rate, probability
/// that a mutation is beneficial and the selection coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: usize,
    pub mu: f64,
    pub q: f64,
    pub gamma: f64,
}

impl Params {
    /// Checked constructor. Requires `n >= 2`, `mu > 0`, `0 < q <= 1` and
    /// `gamma > 0`.
    pub fn new(n: usize, mu: f64, q: f64, gamma: f64) -> Result<Self> {
        let p = Self { n, mu, q, gamma };
        p.validate()?;
        Ok(p)
    }

    /// Same as [`Params::new`] but admits `gamma == 0`, the neutral model
    /// used for drift checks.
    pub fn neutral_allowed(n: usize, mu: f64, q: f64, gamma: f64) -> Result<Self> {
        let p = Self { n, mu, q, gamma };
        p.validate_neutral_allowed()?;
        Ok(p)
    }

    pub fn validate_neutral_allowed(&self) -> Result<()> {
        self.validate_common()?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "gamma must be nonnegative and finite (got {})",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_common()?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "selection coefficient must satisfy gamma > 0 (got {})",
                self.gamma
            )));
        }
        Ok(())
    }

    fn validate_common(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParams(format!(
                "population size must satisfy n >= 2 (got {})",
                self.n
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "mutation rate must satisfy mu > 0 (got {})",
                self.mu
            )));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "beneficial probability must satisfy 0 < q <= 1 (got {})",
                self.q
            )));
        }
        Ok(())
    }
}

/// Choice of the slowly growing function `w(N)` behind the scales.
///
/// Each preset tends to infinity while `w / ln ln N` tends to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WPreset {
    /// `sqrt(ln ln N)`
    #[default]
    SqrtLogLog,
    /// `(ln ln N)^(1/3)`
    CbrtLogLog,
    /// `ln ln ln N`, positive for `N >= 16`.
    LogLogLog,
}

impl WPreset {
    pub fn eval_ln(self, ln_n: f64) -> f64 {
        let lln = ln_n.ln();
        match self {
            WPreset::SqrtLogLog => lln.sqrt(),
            WPreset::CbrtLogLog => lln.cbrt(),
            WPreset::LogLogLog => lln.ln(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WPreset::SqrtLogLog => "sqrt-loglog",
            WPreset::CbrtLogLog => "cbrt-loglog",
            WPreset::LogLogLog => "logloglog",
        }
    }
}

impl std::str::FromStr for WPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt-loglog" => Ok(WPreset::SqrtLogLog),
            "cbrt-loglog" => Ok(WPreset::CbrtLogLog),
            "logloglog" => Ok(WPreset::LogLogLog),
            other => Err(Error::InvalidParams(format!(
                "unknown w preset '{other}' (expected sqrt-loglog, cbrt-loglog or logloglog)"
            ))),
        }
    }
}

/// A fully specified `w`: a preset times a positive scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WChoice {
    pub preset: WPreset,
    pub scale: f64,
}

impl Default for WChoice {
    fn default() -> Self {
        Self {
            preset: WPreset::SqrtLogLog,
            scale: 1.0,
        }
    }
}

/// The width scale `cal_w = floor(w ln N / ln ln N)` and the time scale
/// `cal_t = w^{-1/2} ln ln N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub w_value: f64,
    pub cal_w: i64,
    pub cal_t: f64,
}

impl Scales {
    pub fn new(n: usize, w: WChoice) -> Result<Self> {
        if n < 16 {
            return Err(Error::ScalesUndefined(n));
        }
        Self::from_ln_n((n as f64).ln(), w)
    }

    /// Scales for a population given through `ln N`, which lets asymptotic
    /// quantities be evaluated far beyond representable `N`.
    pub fn from_ln_n(ln_n: f64, w: WChoice) -> Result<Self> {
        let lln = ln_n.ln();
        if !(lln > 0.0) || !lln.is_finite() {
            return Err(Error::InvalidParams(format!(
                "ln ln N must be positive and finite (ln N = {ln_n})"
            )));
        }
        if !(w.scale > 0.0 && w.scale.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "w scale must be positive (got {})",
                w.scale
            )));
        }
        let w_value = w.scale * w.preset.eval_ln(ln_n);
        if !(w_value > 0.0) {
            return Err(Error::InvalidParams(format!(
                "w(N) must be positive (got {w_value})"
            )));
        }
        let cal_w = (w_value * ln_n / lln).floor() as i64;
        let cal_t = lln / w_value.sqrt();
        Ok(Self {
            w_value,
            cal_w,
            cal_t,
        })
    }
}

/// The unit rate envelope `ln N / (ln ln N)^2`.
pub fn theorem_envelope(n: usize, c: f64) -> f64 {
    let ln_n = (n as f64).ln();
    c * ln_n / (ln_n.ln() * ln_n.ln())
}
