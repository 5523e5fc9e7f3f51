//! Model families and their kernel parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::acf::{self, AcfVector, FbmParams, GleParams};
use crate::error::{Error, Result};
use crate::gausslik::LocationScale;

/// A subdiffusion model family. `Gle { modes }` is the zero-mass GLE with a
/// `modes`-term generalized Rouse kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    Fbm,
    Gle { modes: usize },
}

impl ModelFamily {
    pub fn gle(modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::invalid("GLE requires at least one mode"));
        }
        Ok(ModelFamily::Gle { modes })
    }

    /// Short label, `fbm` or `gle:K`.
    pub fn label(&self) -> String {
        match self {
            ModelFamily::Fbm => "fbm".into(),
            ModelFamily::Gle { modes } => format!("gle:{modes}"),
        }
    }

    /// Dimension of the kernel parameter.
    pub fn vartheta_dim(&self) -> usize {
        match self {
            ModelFamily::Fbm => 1,
            ModelFamily::Gle { .. } => 2,
        }
    }

    /// Builds a kernel parameter from grid coordinates (`[H]` or `[alpha, log_tau]`).
    pub fn vartheta(&self, coords: &[f64]) -> Result<Vartheta> {
        match (self, coords) {
            (ModelFamily::Fbm, [h]) => Ok(Vartheta::Fbm { hurst: *h }),
            (ModelFamily::Gle { .. }, [a, lt]) => Ok(Vartheta::Gle { alpha: *a, log_tau: *lt }),
            _ => Err(Error::invalid(format!("{} expects {} coordinate(s)", self.label(), self.vartheta_dim()))),
        }
    }

    /// Increment autocovariance at lags `0..nlags` for a kernel parameter of this family.
    pub fn acf(&self, v: &Vartheta, dt: f64, nlags: usize) -> Result<AcfVector> {
        match (self, v) {
            (ModelFamily::Fbm, Vartheta::Fbm { hurst }) => acf::fbm_acf(&FbmParams::new(*hurst)?, dt, nlags),
            (ModelFamily::Gle { modes }, Vartheta::Gle { alpha, log_tau }) => {
                let p = GleParams::from_alpha(*alpha, log_tau.exp(), *modes)?;
                Ok(acf::gle_acf(&acf::gle_decompose(&p)?, dt, nlags))
            }
            _ => Err(Error::invalid("kernel parameter does not match model family")),
        }
    }

    /// Theoretical unit-scale MSD at time `t`.
    pub fn msd(&self, v: &Vartheta, t: f64) -> Result<f64> {
        match (self, v) {
            (ModelFamily::Fbm, Vartheta::Fbm { hurst }) => Ok(acf::fbm_msd(&FbmParams::new(*hurst)?, t)),
            (ModelFamily::Gle { modes }, Vartheta::Gle { alpha, log_tau }) => {
                let p = GleParams::from_alpha(*alpha, log_tau.exp(), *modes)?;
                Ok(acf::gle_msd(&acf::gle_decompose(&p)?, t))
            }
            _ => Err(Error::invalid("kernel parameter does not match model family")),
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "fbm" {
            return Ok(ModelFamily::Fbm);
        }
        let k = s
            .strip_prefix("gle:")
            .or_else(|| s.strip_prefix("gle-"))
            .ok_or_else(|| Error::invalid(format!("unknown model '{s}' (expected fbm or gle:K)")))?;
        let modes: usize = k.parse().map_err(|_| Error::invalid(format!("bad mode count in '{s}'")))?;
        ModelFamily::gle(modes)
    }
}

/// Kernel parameter: the Hurst exponent, or the GLE subdiffusion exponent
/// `alpha = 1/gamma` together with the natural log of the shortest relaxation time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Vartheta {
    Fbm { hurst: f64 },
    Gle { alpha: f64, log_tau: f64 },
}

impl Vartheta {
    pub fn coords(&self) -> Vec<f64> {
        match *self {
            Vartheta::Fbm { hurst } => vec![hurst],
            Vartheta::Gle { alpha, log_tau } => vec![alpha, log_tau],
        }
    }

    /// Subdiffusion exponent: `2H` or `1/gamma`.
    pub fn alpha(&self) -> f64 {
        match *self {
            Vartheta::Fbm { hurst } => 2.0 * hurst,
            Vartheta::Gle { alpha, .. } => alpha,
        }
    }
}

/// Full parameter `(vartheta, mu, Sigma)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub vartheta: Vartheta,
    pub ls: LocationScale,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_labels() {
        assert_eq!("fbm".parse::<ModelFamily>().unwrap(), ModelFamily::Fbm);
        assert_eq!("GLE:200".parse::<ModelFamily>().unwrap(), ModelFamily::Gle { modes: 200 });
        assert_eq!("gle-2".parse::<ModelFamily>().unwrap().label(), "gle:2");
        assert!("gle:0".parse::<ModelFamily>().is_err());
        assert!("ctrw".parse::<ModelFamily>().is_err());
    }

    #[test]
    fn family_mismatch_rejected() {
        let v = Vartheta::Fbm { hurst: 0.3 };
        assert!(ModelFamily::Gle { modes: 2 }.acf(&v, 1.0, 4).is_err());
        assert!(ModelFamily::Fbm.vartheta(&[0.1, 0.2]).is_err());
    }
}
