//! Covariate distributions: sampling, exact means, moment generating
//! functions and a Monte Carlo estimate of `E[exp(beta . X)]` for cases
//! without a closed form.

use std::fmt;

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coding::{self, CodingScheme};
use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateSpec {
    Bernoulli {
        p: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    Normal {
        mu: f64,
        sigma: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    Cauchy {
        location: f64,
        scale: f64,
    },
    /// Samples are level indices `0..p`.
    Categorical {
        probs: Vec<f64>,
        #[serde(default)]
        coding: CodingScheme,
    },
}

impl fmt::Display for CovariateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovariateSpec::Bernoulli { p } => write!(f, "bernoulli(p={p})"),
            CovariateSpec::Uniform { a, b } => write!(f, "uniform(a={a}, b={b})"),
            CovariateSpec::Normal { mu, sigma } => write!(f, "normal(mu={mu}, sigma={sigma})"),
            CovariateSpec::Gamma { shape, rate } => write!(f, "gamma(shape={shape}, rate={rate})"),
            CovariateSpec::Cauchy { location, scale } => {
                write!(f, "cauchy(location={location}, scale={scale})")
            }
            CovariateSpec::Categorical { probs, coding } => {
                write!(f, "categorical(probs={probs:?}, coding={})", coding.name())
            }
        }
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(what, format!("must be positive and finite, got {v}")))
    }
}

fn finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(what, format!("must be finite, got {v}")))
    }
}

impl CovariateSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CovariateSpec::Bernoulli { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::param("p", format!("{p} is not a probability")));
                }
            }
            CovariateSpec::Uniform { a, b } => {
                finite("a", a)?;
                finite("b", b)?;
                if a >= b {
                    return Err(Error::param("b", format!("need a < b, got a={a}, b={b}")));
                }
            }
            CovariateSpec::Normal { mu, sigma } => {
                finite("mu", mu)?;
                positive("sigma", sigma)?;
            }
            CovariateSpec::Gamma { shape, rate } => {
                positive("shape", shape)?;
                positive("rate", rate)?;
            }
            CovariateSpec::Cauchy { location, scale } => {
                finite("location", location)?;
                positive("scale", scale)?;
            }
            CovariateSpec::Categorical { ref probs, coding } => {
                coding::validate_probs(probs)?;
                if probs.len() < 2 {
                    return Err(Error::param("probs", "categorical needs at least two levels"));
                }
                if coding == CodingScheme::WeightedEffect && probs[0] == 0.0 {
                    return Err(Error::param("probs", "reference level probability is zero"));
                }
            }
        }
        Ok(())
    }

    /// Number of design columns: `p - 1` for categoricals, 1 otherwise.
    pub fn arity(&self) -> usize {
        match self {
            CovariateSpec::Categorical { probs, .. } => probs.len().saturating_sub(1),
            _ => 1,
        }
    }

    /// Finite support as `(value, probability)` pairs, `None` for continuous
    /// distributions. Categorical values are level indices.
    pub fn discrete_support(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            CovariateSpec::Bernoulli { p } => Some(vec![(0.0, 1.0 - p), (1.0, *p)]),
            CovariateSpec::Categorical { probs, .. } => {
                Some(probs.iter().enumerate().map(|(i, &pi)| (i as f64, pi)).collect())
            }
            _ => None,
        }
    }

    pub fn is_heavy_tailed(&self) -> bool {
        matches!(self, CovariateSpec::Cauchy { .. })
    }

    /// True when the distribution puts all mass on one point.
    pub fn is_degenerate(&self) -> bool {
        match self {
            CovariateSpec::Bernoulli { p } => *p == 0.0 || *p == 1.0,
            CovariateSpec::Categorical { probs, .. } => probs.contains(&1.0),
            _ => false,
        }
    }

    /// Draws into `out`, one value per slot.
    pub(crate) fn fill(&self, rng: &mut StreamRng, out: &mut [f64]) {
        match *self {
            CovariateSpec::Bernoulli { p } => {
                for x in out.iter_mut() {
                    *x = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                }
            }
            CovariateSpec::Uniform { a, b } => {
                for x in out.iter_mut() {
                    *x = a + (b - a) * rng.random::<f64>();
                }
            }
            CovariateSpec::Normal { mu, sigma } => {
                for x in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *x = mu + sigma * z;
                }
            }
            CovariateSpec::Gamma { shape, rate } => {
                let d = Gamma::new(shape, 1.0 / rate).expect("validated gamma parameters");
                for x in out.iter_mut() {
                    *x = d.sample(rng);
                }
            }
            CovariateSpec::Cauchy { location, scale } => {
                let d = Cauchy::new(location, scale).expect("validated cauchy parameters");
                for x in out.iter_mut() {
                    *x = d.sample(rng);
                }
            }
            CovariateSpec::Categorical { ref probs, .. } => {
                let last = probs.len() - 1;
                let cumulative: Vec<f64> = probs
                    .iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect();
                for x in out.iter_mut() {
                    let u: f64 = rng.random();
                    let level = cumulative[..last].partition_point(|&c| c <= u);
                    *x = level as f64;
                }
            }
        }
    }

    /// `n` i.i.d. draws from stream `rng`. Categoricals yield level indices.
    pub fn sample(&self, n: usize, rng: &RngStream) -> Result<Vec<f64>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::param("n", "sample size must be at least 1"));
        }
        let mut out = vec![0.0; n];
        self.fill(&mut rng.rng(), &mut out);
        Ok(out)
    }

    /// Writes the design columns for a drawn value into `row`.
    pub(crate) fn encode_value(&self, value: f64, row: &mut [f64]) {
        match self {
            CovariateSpec::Categorical { probs, coding } => {
                coding::encode_into(*coding, value as usize, probs, row)
            }
            _ => row[0] = value,
        }
    }

    /// Scalar mean. Categoricals have a vector mean, see [`Self::encoded_mean`].
    pub fn mean(&self) -> Result<f64> {
        self.validate()?;
        match *self {
            CovariateSpec::Bernoulli { p } => Ok(p),
            CovariateSpec::Uniform { a, b } => Ok(0.5 * (a + b)),
            CovariateSpec::Normal { mu, .. } => Ok(mu),
            CovariateSpec::Gamma { shape, rate } => Ok(shape / rate),
            CovariateSpec::Cauchy { .. } => Err(Error::UndefinedMoment {
                term: self.to_string(),
            }),
            CovariateSpec::Categorical { .. } => Err(Error::Unsupported {
                term: self.to_string(),
                msg: "categorical mean is a vector; use encoded_mean".into(),
            }),
        }
    }

    /// Mean of the design columns: `sum_i pi_i encode(i)` for categoricals,
    /// the scalar mean otherwise.
    pub fn encoded_mean(&self) -> Result<Vec<f64>> {
        match self {
            CovariateSpec::Categorical { probs, coding } => {
                self.validate()?;
                let p = probs.len();
                let mut acc = vec![0.0; p - 1];
                let mut row = vec![0.0; p - 1];
                for (level, pi) in probs.iter().enumerate() {
                    coding::encode_into(*coding, level, probs, &mut row);
                    for (a, r) in acc.iter_mut().zip(&row) {
                        *a += pi * r;
                    }
                }
                Ok(acc)
            }
            _ => Ok(vec![self.mean()?]),
        }
    }

    /// `E[exp(t X)]` in closed form.
    pub fn mgf(&self, t: f64) -> Result<f64> {
        self.validate()?;
        match *self {
            CovariateSpec::Bernoulli { p } => Ok(1.0 + p * t.exp_m1()),
            CovariateSpec::Uniform { a, b } => {
                if t == 0.0 {
                    return Ok(1.0);
                }
                let w = t * (b - a);
                Ok((t * a).exp() * w.exp_m1() / w)
            }
            CovariateSpec::Normal { mu, sigma } => Ok((mu * t + 0.5 * sigma * sigma * t * t).exp()),
            CovariateSpec::Gamma { shape, rate } => {
                if t >= rate {
                    return Err(Error::Domain {
                        term: self.to_string(),
                        msg: format!("E[exp({t} X)] diverges for t >= rate = {rate}"),
                    });
                }
                Ok((1.0 - t / rate).powf(-shape))
            }
            CovariateSpec::Cauchy { .. } => {
                if t == 0.0 {
                    Ok(1.0)
                } else {
                    Err(Error::NoMgf {
                        term: self.to_string(),
                    })
                }
            }
            CovariateSpec::Categorical { .. } => Err(Error::Unsupported {
                term: self.to_string(),
                msg: "use categorical_expectation for categorical exponential moments".into(),
            }),
        }
    }
}

/// Source of joint covariate draws. Dependent covariates enter the library
/// through this trait.
pub trait JointSampler: Send + Sync {
    /// Design columns per draw.
    fn dim(&self) -> usize;

    /// `n` draws as a row-major `n x dim` matrix.
    fn sample_design(&self, n: usize, rng: &RngStream) -> Result<Vec<f64>>;

    /// True when some component has no finite moments.
    fn heavy_tailed(&self) -> bool {
        false
    }
}

fn encoded_design(spec: &CovariateSpec, values: &[f64], out: &mut [f64], stride: usize, offset: usize) {
    let k = spec.arity();
    for (i, v) in values.iter().enumerate() {
        let start = i * stride + offset;
        spec.encode_value(*v, &mut out[start..start + k]);
    }
}

impl JointSampler for CovariateSpec {
    fn dim(&self) -> usize {
        self.arity()
    }

    fn sample_design(&self, n: usize, rng: &RngStream) -> Result<Vec<f64>> {
        let values = self.sample(n, rng)?;
        let k = self.arity();
        let mut out = vec![0.0; n * k];
        encoded_design(self, &values, &mut out, k, 0);
        Ok(out)
    }

    fn heavy_tailed(&self) -> bool {
        self.is_heavy_tailed()
    }
}

/// Mutually independent covariates; covariate `j` draws from `rng.child(j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependentCovariates(pub Vec<CovariateSpec>);

impl JointSampler for IndependentCovariates {
    fn dim(&self) -> usize {
        self.0.iter().map(CovariateSpec::arity).sum()
    }

    fn sample_design(&self, n: usize, rng: &RngStream) -> Result<Vec<f64>> {
        let dim = self.dim();
        let mut out = vec![0.0; n * dim];
        let mut offset = 0;
        for (j, spec) in self.0.iter().enumerate() {
            let values = spec.sample(n, &rng.child(j as u64))?;
            encoded_design(spec, &values, &mut out, dim, offset);
            offset += spec.arity();
        }
        Ok(out)
    }

    fn heavy_tailed(&self) -> bool {
        self.0.iter().any(CovariateSpec::is_heavy_tailed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub se: f64,
    /// Set when the sampler has a component without an exponential moment;
    /// the estimate then targets a quantity that does not exist.
    pub heavy_tailed: bool,
}

/// Sample mean and standard error of a slice.
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt() / n.sqrt())
}

/// Monte Carlo estimate of `E[exp(beta . x)]` over `n_mc` joint draws.
pub fn mc_exp_moment(
    sampler: &dyn JointSampler,
    betas: &[f64],
    n_mc: usize,
    rng: &RngStream,
) -> Result<McEstimate> {
    if n_mc < 2 {
        return Err(Error::param("n_mc", format!("need at least 2 draws, got {n_mc}")));
    }
    let dim = sampler.dim();
    if betas.len() != dim {
        return Err(Error::param(
            "betas",
            format!("sampler has {dim} columns, got {} coefficients", betas.len()),
        ));
    }
    let design = sampler.sample_design(n_mc, rng)?;
    let values: Vec<f64> = if dim == 0 {
        vec![1.0; n_mc]
    } else {
        design
            .chunks_exact(dim)
            .map(|row| row.iter().zip(betas).map(|(x, b)| x * b).sum::<f64>().exp())
            .collect()
    };
    let (estimate, se) = mean_and_se(&values);
    Ok(McEstimate {
        estimate,
        se,
        heavy_tailed: sampler.heavy_tailed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream() -> RngStream {
        RngStream::new(42, 0)
    }

    #[test]
    fn bernoulli_one_is_all_ones() {
        let s = CovariateSpec::Bernoulli { p: 1.0 }.sample(5, &stream()).unwrap();
        assert_eq!(s, vec![1.0; 5]);
    }

    #[test]
    fn categorical_frequencies() {
        let probs = [0.5, 0.35, 0.15];
        let spec = CovariateSpec::Categorical {
            probs: probs.to_vec(),
            coding: CodingScheme::ReferenceCell,
        };
        let n = 1_000_000;
        let draws = spec.sample(n, &stream()).unwrap();
        let mut counts = [0usize; 3];
        for d in &draws {
            counts[*d as usize] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.005);
        }
    }

    #[test]
    fn normal_sample_mean() {
        let draws = CovariateSpec::Normal { mu: 0.0, sigma: 1.0 }
            .sample(1_000_000, &stream())
            .unwrap();
        assert!((draws.iter().sum::<f64>() / 1e6).abs() < 0.01);
    }

    #[test]
    fn invalid_parameters() {
        let bad = [
            CovariateSpec::Bernoulli { p: 1.2 },
            CovariateSpec::Uniform { a: 1.0, b: 1.0 },
            CovariateSpec::Normal { mu: 0.0, sigma: 0.0 },
            CovariateSpec::Gamma { shape: -1.0, rate: 1.0 },
            CovariateSpec::Gamma { shape: 1.0, rate: 0.0 },
            CovariateSpec::Cauchy { location: 0.0, scale: -2.0 },
            CovariateSpec::Categorical { probs: vec![0.5, 0.4], coding: CodingScheme::Effect },
        ];
        for spec in bad {
            assert!(
                matches!(spec.sample(3, &stream()), Err(Error::Parameter { .. })),
                "{spec}"
            );
        }
    }

    #[test]
    fn sample_zero_n_rejected() {
        assert!(CovariateSpec::Bernoulli { p: 0.5 }.sample(0, &stream()).is_err());
    }

    #[test]
    fn means() {
        assert_eq!(CovariateSpec::Bernoulli { p: 0.8 }.mean().unwrap(), 0.8);
        assert_eq!(CovariateSpec::Uniform { a: -1.0, b: 3.0 }.mean().unwrap(), 1.0);
        assert_eq!(CovariateSpec::Gamma { shape: 1.0, rate: 1.5 }.mean().unwrap(), 1.0 / 1.5);
        assert!(matches!(
            CovariateSpec::Cauchy { location: 0.0, scale: 1.0 }.mean(),
            Err(Error::UndefinedMoment { .. })
        ));
    }

    #[test]
    fn categorical_encoded_mean() {
        let spec = CovariateSpec::Categorical {
            probs: vec![0.5, 0.35, 0.15],
            coding: CodingScheme::ReferenceCell,
        };
        assert_eq!(spec.encoded_mean().unwrap(), vec![0.35, 0.15]);
        let w = CovariateSpec::Categorical {
            probs: vec![0.5, 0.35, 0.15],
            coding: CodingScheme::WeightedEffect,
        };
        assert!(w.encoded_mean().unwrap().iter().all(|m| m.abs() < 1e-15));
    }

    #[test]
    fn mgf_examples() {
        let n01 = CovariateSpec::Normal { mu: 0.0, sigma: 1.0 };
        assert!((n01.mgf(1.0).unwrap() - 0.5f64.exp()).abs() < 1e-15);
        assert!((n01.mgf(1.0).unwrap() - 1.648721).abs() < 1e-6);
        assert!(matches!(
            CovariateSpec::Gamma { shape: 1.0, rate: 1.5 }.mgf(2.0),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            CovariateSpec::Gamma { shape: 1.0, rate: 1.5 }.mgf(1.5),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            CovariateSpec::Cauchy { location: 0.0, scale: 1.0 }.mgf(1.0),
            Err(Error::NoMgf { .. })
        ));
        assert!(matches!(
            CovariateSpec::Categorical { probs: vec![0.5, 0.5], coding: CodingScheme::ReferenceCell }.mgf(1.0),
            Err(Error::Unsupported { .. })
        ));
    }

    #[test]
    fn mgf_at_zero_is_one() {
        let specs = [
            CovariateSpec::Bernoulli { p: 0.3 },
            CovariateSpec::Uniform { a: -1.0, b: 3.0 },
            CovariateSpec::Normal { mu: 2.0, sigma: 0.5 },
            CovariateSpec::Gamma { shape: 2.5, rate: 0.7 },
            CovariateSpec::Cauchy { location: 1.0, scale: 2.0 },
        ];
        for s in specs {
            assert_eq!(s.mgf(0.0).unwrap(), 1.0, "{s}");
        }
    }

    #[test]
    fn uniform_mgf_near_zero_is_continuous() {
        let u = CovariateSpec::Uniform { a: -1.0, b: 3.0 };
        let small = u.mgf(1e-12).unwrap();
        assert!((small - 1.0).abs() < 1e-11);
    }

    #[test]
    fn bernoulli_mgf_matches_enumeration() {
        let b = CovariateSpec::Bernoulli { p: 0.8 };
        let oracle = 0.2 + 0.8 * 2f64.exp();
        assert!((b.mgf(2.0).unwrap() - oracle).abs() < 1e-14);
        assert!((oracle - 6.111_244_879_1).abs() < 1e-9);
    }

    #[test]
    fn jensen_direction() {
        let specs = [
            CovariateSpec::Bernoulli { p: 0.3 },
            CovariateSpec::Uniform { a: -1.0, b: 3.0 },
            CovariateSpec::Normal { mu: 0.5, sigma: 1.0 },
            CovariateSpec::Gamma { shape: 2.0, rate: 1.5 },
        ];
        for s in specs {
            for t in [-2.0, -0.5, 0.3, 1.0, 1.4] {
                let lhs = s.mgf(t).unwrap();
                let rhs = (t * s.mean().unwrap()).exp();
                assert!(lhs > rhs, "{s} t={t}: {lhs} <= {rhs}");
            }
        }
        for p in [0.0, 1.0] {
            let s = CovariateSpec::Bernoulli { p };
            assert!((s.mgf(1.3).unwrap() - (1.3 * p).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn mc_zero_betas() {
        let est = mc_exp_moment(&CovariateSpec::Normal { mu: 0.0, sigma: 1.0 }, &[0.0], 1000, &stream()).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn mc_normal_and_bernoulli() {
        let est = mc_exp_moment(&CovariateSpec::Normal { mu: 0.0, sigma: 1.0 }, &[1.0], 1_000_000, &stream()).unwrap();
        assert!((est.estimate - 0.5f64.exp()).abs() <= 4.0 * est.se, "{est:?}");

        let oracle = 0.2 * 0f64.exp() + 0.8 * 2f64.exp();
        let est = mc_exp_moment(&CovariateSpec::Bernoulli { p: 0.8 }, &[2.0], 1_000_000, &stream()).unwrap();
        assert!((est.estimate - oracle).abs() <= 4.0 * est.se, "{est:?}");
    }

    #[test]
    fn mc_flags_cauchy() {
        let est = mc_exp_moment(&CovariateSpec::Cauchy { location: 0.0, scale: 1.0 }, &[0.1], 100, &stream()).unwrap();
        assert!(est.heavy_tailed);
    }

    #[test]
    fn mc_argument_errors() {
        let n = CovariateSpec::Normal { mu: 0.0, sigma: 1.0 };
        assert!(mc_exp_moment(&n, &[1.0], 1, &stream()).is_err());
        assert!(mc_exp_moment(&n, &[1.0, 2.0], 10, &stream()).is_err());
    }

    #[test]
    fn independent_sampler_dim_and_columns() {
        let s = IndependentCovariates(vec![
            CovariateSpec::Categorical { probs: vec![0.5, 0.35, 0.15], coding: CodingScheme::ReferenceCell },
            CovariateSpec::Bernoulli { p: 0.8 },
        ]);
        assert_eq!(s.dim(), 3);
        let d = s.sample_design(100, &stream()).unwrap();
        assert_eq!(d.len(), 300);
        for row in d.chunks_exact(3) {
            assert!(row[0] + row[1] <= 1.0);
            assert!(row[2] == 0.0 || row[2] == 1.0);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let specs = [
            CovariateSpec::Gamma { shape: 1.0, rate: 1.5 },
            CovariateSpec::Normal { mu: 0.0, sigma: 1.0 },
            CovariateSpec::Categorical { probs: vec![0.2, 0.8], coding: CodingScheme::Effect },
        ];
        for s in specs {
            let a = s.sample(1000, &RngStream::new(9, 4)).unwrap();
            let b = s.sample(1000, &RngStream::new(9, 4)).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
