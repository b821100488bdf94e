//! Link functions `g` mapping a mean to the linear-predictor scale.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkSpec {
    Identity,
    Log,
    Logit,
}

/// `1 / (1 + exp(-eta))` without overflow for large `|eta|`.
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

impl LinkSpec {
    pub fn name(self) -> &'static str {
        match self {
            LinkSpec::Identity => "identity",
            LinkSpec::Log => "log",
            LinkSpec::Logit => "logit",
        }
    }

    pub fn in_domain(self, mu: f64) -> bool {
        match self {
            LinkSpec::Identity => mu.is_finite(),
            LinkSpec::Log => mu > 0.0 && mu.is_finite(),
            LinkSpec::Logit => mu > 0.0 && mu < 1.0,
        }
    }

    /// `eta = g(mu)`.
    pub fn apply(self, mu: f64) -> Result<f64> {
        if !self.in_domain(mu) {
            return Err(Error::Domain {
                term: format!("{} link", self.name()),
                msg: format!("mean {mu} outside link domain"),
            });
        }
        Ok(match self {
            LinkSpec::Identity => mu,
            LinkSpec::Log => mu.ln(),
            LinkSpec::Logit => (mu / (1.0 - mu)).ln(),
        })
    }

    /// `mu = g^-1(eta)`, total on the reals.
    #[inline]
    pub fn invert(self, eta: f64) -> f64 {
        match self {
            LinkSpec::Identity => eta,
            LinkSpec::Log => eta.exp(),
            LinkSpec::Logit => expit(eta),
        }
    }

    pub fn is_linear(self) -> bool {
        self == LinkSpec::Identity
    }
}

impl fmt::Display for LinkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
