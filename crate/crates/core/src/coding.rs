//! Coding schemes for categorical covariates and exact expectations over a
//! categorical support.
//!
//! A `p`-level variable is encoded as `p - 1` columns. Level 0 is always the
//! reference level.

use serde::{Deserialize, Serialize};

use crate::distributions::CovariateSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodingScheme {
    /// Dummy coding: level 0 is the zero row.
    #[default]
    ReferenceCell,
    /// Level 0 is the all `-1` row.
    Effect,
    /// Level 0 has entries `-pi_j / pi_0`, so probability-weighted rows sum
    /// to zero.
    WeightedEffect,
}

impl CodingScheme {
    pub fn name(self) -> &'static str {
        match self {
            CodingScheme::ReferenceCell => "reference_cell",
            CodingScheme::Effect => "effect",
            CodingScheme::WeightedEffect => "weighted_effect",
        }
    }
}

pub(crate) const PROB_SUM_TOL: f64 = 1e-12;

pub(crate) fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::param("probs", "empty probability vector"));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::param("probs", format!("{p} is not a probability")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::param("probs", format!("sum to {total}, expected 1")));
    }
    Ok(())
}

/// Writes the encoded row for `level` into `row` (length `p - 1`).
pub(crate) fn encode_into(
    scheme: CodingScheme,
    level: usize,
    probs: &[f64],
    row: &mut [f64],
) {
    row.fill(0.0);
    if level > 0 {
        row[level - 1] = 1.0;
        return;
    }
    match scheme {
        CodingScheme::ReferenceCell => {}
        CodingScheme::Effect => row.fill(-1.0),
        CodingScheme::WeightedEffect => {
            for (j, r) in row.iter_mut().enumerate() {
                *r = -probs[j + 1] / probs[0];
            }
        }
    }
}

/// Encoded row of `level` for a `p`-level variable. `probs` is only read by
/// [`CodingScheme::WeightedEffect`] and may be empty otherwise.
pub fn encode(scheme: CodingScheme, level: usize, p: usize, probs: &[f64]) -> Result<Vec<f64>> {
    if level >= p {
        return Err(Error::Index { level, levels: p });
    }
    if scheme == CodingScheme::WeightedEffect {
        if probs.len() != p {
            return Err(Error::param(
                "probs",
                format!("weighted effect coding needs {p} probabilities, got {}", probs.len()),
            ));
        }
        if probs[0] == 0.0 {
            return Err(Error::param("probs", "reference level probability is zero"));
        }
    }
    let mut row = vec![0.0; p - 1];
    encode_into(scheme, level, probs, &mut row);
    Ok(row)
}

/// Linear predictor `beta . encode(level)` for every level.
pub(crate) fn level_predictors(
    probs: &[f64],
    betas: &[f64],
    scheme: CodingScheme,
) -> Result<Vec<f64>> {
    validate_probs(probs)?;
    let p = probs.len();
    if betas.len() + 1 != p {
        return Err(Error::param(
            "betas",
            format!("{p}-level variable needs {} coefficients, got {}", p - 1, betas.len()),
        ));
    }
    if scheme == CodingScheme::WeightedEffect && probs[0] == 0.0 {
        return Err(Error::param("probs", "reference level probability is zero"));
    }
    let mut row = vec![0.0; p - 1];
    Ok((0..p)
        .map(|level| {
            encode_into(scheme, level, probs, &mut row);
            row.iter().zip(betas).map(|(x, b)| x * b).sum()
        })
        .collect())
}

/// `sum_i pi_i f(beta . X_i)` over the encoded levels.
pub fn categorical_expectation<F>(probs: &[f64], betas: &[f64], scheme: CodingScheme, f: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let etas = level_predictors(probs, betas, scheme)?;
    Ok(probs.iter().zip(etas).map(|(pi, eta)| pi * f(eta)).sum())
}

/// Combines two independent categoricals into one over all level pairs.
/// Level `(i, j)` lands at index `i * q + j`. The result keeps `a`'s coding.
pub fn cross_levels(a: &CovariateSpec, b: &CovariateSpec) -> Result<CovariateSpec> {
    match (a, b) {
        (
            CovariateSpec::Categorical { probs: pa, coding },
            CovariateSpec::Categorical { probs: pb, .. },
        ) => Ok(CovariateSpec::Categorical {
            probs: pa
                .iter()
                .flat_map(|x| pb.iter().map(move |y| x * y))
                .collect(),
            coding: *coding,
        }),
        _ => Err(Error::param("cross_levels", "both arguments must be categorical")),
    }
}
