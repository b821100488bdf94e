//! Balancing-intercept solvers.
//!
//! Three routes to the intercept `b0` that makes `E_X[g^-1(b0 + beta . X)]`
//! equal a target mean:
//!
//! * [`solve_linear_scale`]: `b0 = g(target) - sum_j beta_j E[X_j]`. Exact for
//!   the identity link, a naive approximation for anything else.
//! * [`solve_log_closed_form`]: `b0 = ln(target) - sum_j ln E[exp(beta_j X_j)]`
//!   for the log link with independent covariates.
//! * [`solve_numeric`]: bracketed bisection on the response-scale
//!   expectation, evaluated by exact enumeration or Monte Carlo.

use std::fmt;

use bitflags::bitflags;
use serde::{Deserialize, Serialize};

use crate::coding::categorical_expectation;
use crate::distributions::{mc_exp_moment, mean_and_se, CovariateSpec, IndependentCovariates, JointSampler};
use crate::error::{Error, Result};
use crate::links::LinkSpec;
use crate::rng::RngStream;

pub const DEFAULT_N_MC: usize = 100_000;
pub const DEFAULT_EXACT_TOL: f64 = 1e-10;
pub const DEFAULT_MC_TOL: f64 = 1e-4;
pub const MAX_ENUMERATION: usize = 1_000_000;
pub const MAX_EXPANSIONS: usize = 60;
pub const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampPolicy {
    /// `mu -> min(max(mu, 0), 1)`, counting every row that moved.
    #[default]
    ClampToUnit,
    RejectOutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeFamily {
    Normal { sd: f64 },
    Bernoulli { clamp: ClampPolicy },
}

impl OutcomeFamily {
    pub fn name(&self) -> &'static str {
        match self {
            OutcomeFamily::Normal { .. } => "normal",
            OutcomeFamily::Bernoulli { .. } => "bernoulli",
        }
    }
}

/// One covariate and its coefficient block (length 1, or `p - 1` for a
/// `p`-level categorical).
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub name: String,
    pub dist: CovariateSpec,
    pub coef: Vec<f64>,
}

impl Term {
    pub fn new(name: impl Into<String>, dist: CovariateSpec, coef: Vec<f64>) -> Self {
        Term {
            name: name.into(),
            dist,
            coef,
        }
    }

    pub fn scalar(name: impl Into<String>, dist: CovariateSpec, coef: f64) -> Self {
        Term::new(name, dist, vec![coef])
    }

    fn is_zero(&self) -> bool {
        self.coef.iter().all(|b| *b == 0.0)
    }
}

/// A data-generating model with independently sampled covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub terms: Vec<Term>,
    pub link: LinkSpec,
    pub outcome: OutcomeFamily,
    pub target_mean: f64,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.link.in_domain(self.target_mean) {
            return Err(Error::Domain {
                term: "target_mean".into(),
                msg: format!("{} outside the {} link domain", self.target_mean, self.link),
            });
        }
        match self.outcome {
            OutcomeFamily::Normal { sd } => {
                if !(sd > 0.0 && sd.is_finite()) {
                    return Err(Error::param("outcome.sd", format!("must be positive, got {sd}")));
                }
            }
            OutcomeFamily::Bernoulli { .. } => {
                if !(self.target_mean > 0.0 && self.target_mean < 1.0) {
                    return Err(Error::Domain {
                        term: "target_mean".into(),
                        msg: format!("bernoulli outcome needs a target in (0, 1), got {}", self.target_mean),
                    });
                }
            }
        }
        for term in &self.terms {
            term.dist.validate().map_err(|e| e.for_term(&term.name))?;
            if term.coef.len() != term.dist.arity() {
                return Err(Error::param(
                    format!("{}.coef", term.name),
                    format!("expected {} coefficients, got {}", term.dist.arity(), term.coef.len()),
                ));
            }
            if let Some(b) = term.coef.iter().find(|b| !b.is_finite()) {
                return Err(Error::param(format!("{}.coef", term.name), format!("non-finite coefficient {b}")));
            }
        }
        Ok(())
    }

    /// Flattened coefficient vector matching [`Self::sampler`]'s columns.
    pub fn betas(&self) -> Vec<f64> {
        self.terms.iter().flat_map(|t| t.coef.iter().copied()).collect()
    }

    pub fn sampler(&self) -> IndependentCovariates {
        IndependentCovariates(self.terms.iter().map(|t| t.dist.clone()).collect())
    }

    pub fn all_coefficients_zero(&self) -> bool {
        self.terms.iter().all(Term::is_zero)
    }

    pub fn is_discrete(&self) -> bool {
        self.terms.iter().all(|t| t.dist.discrete_support().is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LinearScale,
    LogClosedForm,
    Numeric,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::LinearScale => "linear_scale",
            Method::LogClosedForm => "log_closed_form",
            Method::Numeric => "numeric",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct Warnings: u32 {
        /// Linear-scale formula applied under a nonlinear link.
        const NAIVE_LINEAR_SCALE = 1;
        /// An exponential moment was estimated by Monte Carlo.
        const MC_FALLBACK = 1 << 1;
        /// A heavy-tailed covariate was averaged; the target quantity does
        /// not exist.
        const HEAVY_TAILED = 1 << 2;
        /// Monte Carlo standard error exceeds a quarter of the tolerance.
        const MC_PRECISION = 1 << 3;
        /// A log-link exponential moment is infinite.
        const DIVERGENT_TERM = 1 << 4;
        /// The residual could not be evaluated exactly and is NaN.
        const RESIDUAL_UNCHECKED = 1 << 5;
        /// Some Bernoulli means were clamped into [0, 1].
        const CLAMPED = 1 << 6;
        /// The solver failed; see the accompanying error.
        const SOLVER_ERROR = 1 << 7;
    }
}

const WARNING_NAMES: [(Warnings, &str); 8] = [
    (Warnings::NAIVE_LINEAR_SCALE, "naive_linear_scale"),
    (Warnings::MC_FALLBACK, "mc_fallback"),
    (Warnings::HEAVY_TAILED, "heavy_tailed"),
    (Warnings::MC_PRECISION, "mc_precision"),
    (Warnings::DIVERGENT_TERM, "divergent_term"),
    (Warnings::RESIDUAL_UNCHECKED, "residual_unchecked"),
    (Warnings::CLAMPED, "clamped"),
    (Warnings::SOLVER_ERROR, "solver_error"),
];

impl fmt::Display for Warnings {
    /// `|`-separated names, empty when no flag is set.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (flag, name) in WARNING_NAMES {
            if self.contains(flag) {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterceptSolution {
    pub beta0: f64,
    pub method: Method,
    /// `|achieved mean - target|` under the solver's own evaluation.
    pub residual: f64,
    pub iterations: usize,
    /// Zero on exact paths.
    pub mc_se: f64,
    pub warnings: Warnings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Exact,
    MonteCarlo { n_mc: usize },
}

impl Engine {
    pub fn default_tol(self) -> f64 {
        match self {
            Engine::Exact => DEFAULT_EXACT_TOL,
            Engine::MonteCarlo { .. } => DEFAULT_MC_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    pub se: f64,
}

/// Distribution of the covariate part `beta . X` of the linear predictor.
enum Predictor {
    /// Finite support with probabilities.
    Weighted(Vec<(f64, f64)>),
    /// Fixed Monte Carlo draws, reused across evaluations.
    Sampled(Vec<f64>),
}

impl Predictor {
    fn enumerate(dgp: &DgpSpec) -> Result<Predictor> {
        let mut size: usize = 1;
        for t in &dgp.terms {
            let Some(support) = t.dist.discrete_support() else {
                return Err(Error::EngineMismatch { term: t.name.clone() });
            };
            size = size.saturating_mul(support.len());
        }
        if size > MAX_ENUMERATION {
            return Err(Error::param(
                "engine",
                format!("combined support of {size} points exceeds {MAX_ENUMERATION}"),
            ));
        }
        let mut points = vec![(0.0, 1.0)];
        let mut row = Vec::new();
        for t in &dgp.terms {
            let contributions: Vec<(f64, f64)> = t
                .dist
                .discrete_support()
                .expect("checked above")
                .into_iter()
                .map(|(value, prob)| {
                    row.resize(t.dist.arity(), 0.0);
                    t.dist.encode_value(value, &mut row);
                    let eta: f64 = row.iter().zip(&t.coef).map(|(x, b)| x * b).sum();
                    (eta, prob)
                })
                .collect();
            points = points
                .iter()
                .flat_map(|&(eta, w)| contributions.iter().map(move |&(e, p)| (eta + e, w * p)))
                .collect();
        }
        Ok(Predictor::Weighted(points))
    }

    fn sample(sampler: &dyn JointSampler, betas: &[f64], n_mc: usize, rng: &RngStream) -> Result<Predictor> {
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
        if dim == 0 {
            return Ok(Predictor::Sampled(vec![0.0; n_mc]));
        }
        let design = sampler.sample_design(n_mc, rng)?;
        Ok(Predictor::Sampled(
            design
                .chunks_exact(dim)
                .map(|row| row.iter().zip(betas).map(|(x, b)| x * b).sum())
                .collect(),
        ))
    }

    fn build(dgp: &DgpSpec, engine: Engine, rng: &RngStream) -> Result<Predictor> {
        match engine {
            Engine::Exact => Predictor::enumerate(dgp),
            Engine::MonteCarlo { n_mc } => Predictor::sample(&dgp.sampler(), &dgp.betas(), n_mc, rng),
        }
    }

    fn mean_response(&self, link: LinkSpec, beta0: f64) -> Expectation {
        match self {
            Predictor::Weighted(points) => Expectation {
                value: points.iter().map(|&(eta, w)| w * link.invert(beta0 + eta)).sum(),
                se: 0.0,
            },
            Predictor::Sampled(etas) => {
                let mu: Vec<f64> = etas.iter().map(|eta| link.invert(beta0 + eta)).collect();
                let (value, se) = mean_and_se(&mu);
                Expectation { value, se }
            }
        }
    }
}

/// `E_X[g^-1(beta0 + beta . X)]` by exhaustive enumeration (se = 0) or by
/// averaging over `n_mc` joint draws from `rng`.
pub fn expectation_of_mean(beta0: f64, dgp: &DgpSpec, engine: Engine, rng: &RngStream) -> Result<Expectation> {
    dgp.validate()?;
    Ok(Predictor::build(dgp, engine, rng)?.mean_response(dgp.link, beta0))
}

/// Monte Carlo version of [`expectation_of_mean`] for dependent covariates
/// supplied as a joint sampler.
pub fn expectation_of_mean_joint(
    beta0: f64,
    sampler: &dyn JointSampler,
    betas: &[f64],
    link: LinkSpec,
    n_mc: usize,
    rng: &RngStream,
) -> Result<Expectation> {
    Ok(Predictor::sample(sampler, betas, n_mc, rng)?.mean_response(link, beta0))
}

fn zero_coefficient_solution(dgp: &DgpSpec, method: Method) -> Result<InterceptSolution> {
    Ok(InterceptSolution {
        beta0: dgp.link.apply(dgp.target_mean)?,
        method,
        residual: 0.0,
        iterations: 0,
        mc_se: 0.0,
        warnings: Warnings::empty(),
    })
}

/// `b0 = g(target) - sum_j beta_j E[X_j]`.
///
/// Exact under the identity link. Under log or logit the result ignores the
/// curvature of `g^-1`, so it carries [`Warnings::NAIVE_LINEAR_SCALE`]; its
/// residual is evaluated by enumeration (discrete covariates) or through the
/// moment generating functions (log link), otherwise it is NaN.
pub fn solve_linear_scale(dgp: &DgpSpec) -> Result<InterceptSolution> {
    dgp.validate()?;
    if dgp.all_coefficients_zero() {
        return zero_coefficient_solution(dgp, Method::LinearScale);
    }
    let mut shift = 0.0;
    for t in &dgp.terms {
        shift += match &t.dist {
            CovariateSpec::Categorical { probs, coding } => {
                categorical_expectation(probs, &t.coef, *coding, |x| x)?
            }
            dist => t.coef[0] * dist.mean().map_err(|e| e.for_term(&t.name))?,
        };
    }
    let eta_target = dgp.link.apply(dgp.target_mean)?;
    let beta0 = eta_target - shift;

    let mut warnings = Warnings::empty();
    let residual = if dgp.link.is_linear() {
        (beta0 + shift - dgp.target_mean).abs()
    } else {
        warnings |= Warnings::NAIVE_LINEAR_SCALE;
        match response_residual(dgp, beta0) {
            Some(r) => r,
            None => {
                warnings |= Warnings::RESIDUAL_UNCHECKED;
                f64::NAN
            }
        }
    };
    Ok(InterceptSolution {
        beta0,
        method: Method::LinearScale,
        residual,
        iterations: 0,
        mc_se: 0.0,
        warnings,
    })
}

/// Exact response-scale residual where one is available without sampling.
fn response_residual(dgp: &DgpSpec, beta0: f64) -> Option<f64> {
    if let Ok(p) = Predictor::enumerate(dgp) {
        return Some((p.mean_response(dgp.link, beta0).value - dgp.target_mean).abs());
    }
    if dgp.link == LinkSpec::Log {
        let log_moment = log_exp_moments(dgp, None).ok()?.log_sum;
        return Some(((beta0 + log_moment).exp() - dgp.target_mean).abs());
    }
    None
}

/// Monte Carlo settings for terms without a moment generating function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McFallback {
    pub n_mc: usize,
    pub rng: RngStream,
}

struct LogMoments {
    log_sum: f64,
    /// Variance of `log_sum` from Monte Carlo terms (delta method).
    log_var: f64,
    warnings: Warnings,
}

fn log_exp_moments(dgp: &DgpSpec, fallback: Option<McFallback>) -> Result<LogMoments> {
    let mut out = LogMoments {
        log_sum: 0.0,
        log_var: 0.0,
        warnings: Warnings::empty(),
    };
    for (j, t) in dgp.terms.iter().enumerate() {
        let moment = match &t.dist {
            CovariateSpec::Categorical { probs, coding } => categorical_expectation(probs, &t.coef, *coding, f64::exp)?,
            dist => match dist.mgf(t.coef[0]) {
                Ok(m) => m,
                Err(Error::NoMgf { .. }) if fallback.is_some() => {
                    let fb = fallback.expect("guarded");
                    let est = mc_exp_moment(dist, &t.coef, fb.n_mc, &fb.rng.child(j as u64))?;
                    out.warnings |= Warnings::MC_FALLBACK;
                    if est.heavy_tailed {
                        out.warnings |= Warnings::HEAVY_TAILED;
                    }
                    out.log_var += (est.se / est.estimate).powi(2);
                    est.estimate
                }
                Err(e) => {
                    let e = e.for_term(&t.name);
                    if matches!(e, Error::Domain { .. }) {
                        out.warnings |= Warnings::DIVERGENT_TERM;
                    }
                    return Err(e);
                }
            },
        };
        out.log_sum += moment.ln();
    }
    Ok(out)
}

/// `b0 = ln(target) - sum_j ln E[exp(beta_j X_j)]` with each exponential
/// moment taken from the categorical enumeration or the closed-form MGF.
/// Terms without an MGF are an error.
pub fn solve_log_closed_form(dgp: &DgpSpec) -> Result<InterceptSolution> {
    solve_log_closed_form_with(dgp, None)
}

/// As [`solve_log_closed_form`], estimating MGF-less terms by Monte Carlo
/// when `fallback` is given.
pub fn solve_log_closed_form_with(dgp: &DgpSpec, fallback: Option<McFallback>) -> Result<InterceptSolution> {
    if dgp.link != LinkSpec::Log {
        return Err(Error::WrongLink {
            solver: Method::LogClosedForm.name().into(),
            link: dgp.link.name().into(),
        });
    }
    dgp.validate()?;
    if dgp.all_coefficients_zero() {
        return zero_coefficient_solution(dgp, Method::LogClosedForm);
    }
    let moments = log_exp_moments(dgp, fallback)?;
    let beta0 = dgp.target_mean.ln() - moments.log_sum;
    let achieved = (beta0 + moments.log_sum).exp();
    Ok(InterceptSolution {
        beta0,
        method: Method::LogClosedForm,
        residual: (achieved - dgp.target_mean).abs(),
        iterations: 0,
        mc_se: dgp.target_mean * moments.log_var.sqrt(),
        warnings: moments.warnings,
    })
}

/// Bisection on `b0 -> E[g^-1(b0 + eta)] - target`, which is strictly
/// increasing. Returns the root and the number of bisection steps.
fn bisect<F>(center: f64, tol: f64, f: F) -> Result<(f64, usize)>
where
    F: Fn(f64) -> f64,
{
    let mut half = 1.0;
    let mut expansions = 0;
    let (mut lo, mut hi) = loop {
        let (lo, hi) = (center - half, center + half);
        let (flo, fhi) = (f(lo), f(hi));
        if flo == 0.0 {
            return Ok((lo, 0));
        }
        if fhi == 0.0 {
            return Ok((hi, 0));
        }
        if flo < 0.0 && fhi > 0.0 {
            break (lo, hi);
        }
        if expansions == MAX_EXPANSIONS {
            return Err(Error::NoRoot {
                msg: format!(
                    "no sign change in [{lo}, {hi}] after {MAX_EXPANSIONS} expansions (residuals {flo}, {fhi})"
                ),
            });
        }
        half *= 2.0;
        expansions += 1;
    };

    let mut best = (f64::NAN, f64::INFINITY);
    for step in 1..=MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() < best.1 {
            best = (mid, fm.abs());
        }
        if fm == 0.0 || (fm.abs() <= tol && 0.5 * (hi - lo) <= tol) || mid <= lo || mid >= hi {
            if best.1 <= tol {
                return Ok((best.0, step));
            }
            break;
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.1 <= tol {
        return Ok((best.0, MAX_BISECTIONS));
    }
    Err(Error::NoRoot {
        msg: format!("bisection stalled at b0 = {} with residual {}", best.0, best.1),
    })
}

fn solve_on_predictor(
    predictor: &Predictor,
    link: LinkSpec,
    target: f64,
    tol: f64,
) -> Result<InterceptSolution> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", format!("must be positive, got {tol}")));
    }
    let center = link.apply(target)?;
    let (beta0, iterations) = bisect(center, tol, |b| predictor.mean_response(link, b).value - target)?;
    let at_root = predictor.mean_response(link, beta0);
    let mut warnings = Warnings::empty();
    if at_root.se > tol / 4.0 {
        warnings |= Warnings::MC_PRECISION;
    }
    Ok(InterceptSolution {
        beta0,
        method: Method::Numeric,
        residual: (at_root.value - target).abs(),
        iterations,
        mc_se: at_root.se,
        warnings,
    })
}

/// Numeric balancing intercept with `|E[mu] - target| <= tol`.
///
/// The bracket starts at `g(target) +/- 1` and doubles its half-width until
/// the residual changes sign. With the Monte Carlo engine the covariate draws
/// are fixed once per solve, so the objective is deterministic and monotone.
pub fn solve_numeric(dgp: &DgpSpec, engine: Engine, tol: f64, rng: &RngStream) -> Result<InterceptSolution> {
    dgp.validate()?;
    if dgp.all_coefficients_zero() {
        return zero_coefficient_solution(dgp, Method::Numeric);
    }
    let predictor = Predictor::build(dgp, engine, rng)?;
    let mut sol = solve_on_predictor(&predictor, dgp.link, dgp.target_mean, tol)?;
    if matches!(engine, Engine::MonteCarlo { .. }) && dgp.sampler().heavy_tailed() {
        sol.warnings |= Warnings::HEAVY_TAILED;
    }
    Ok(sol)
}

/// Numeric intercept for dependent covariates given as a joint sampler.
pub fn solve_numeric_joint(
    sampler: &dyn JointSampler,
    betas: &[f64],
    link: LinkSpec,
    target: f64,
    n_mc: usize,
    tol: f64,
    rng: &RngStream,
) -> Result<InterceptSolution> {
    let predictor = Predictor::sample(sampler, betas, n_mc, rng)?;
    let mut sol = solve_on_predictor(&predictor, link, target, tol)?;
    if sampler.heavy_tailed() {
        sol.warnings |= Warnings::HEAVY_TAILED;
    }
    Ok(sol)
}

/// Dispatches to the solver named by `method`. `engine` and `tol` are only
/// read by [`Method::Numeric`].
pub fn solve(dgp: &DgpSpec, method: Method, engine: Engine, tol: f64, rng: &RngStream) -> Result<InterceptSolution> {
    match method {
        Method::LinearScale => solve_linear_scale(dgp),
        Method::LogClosedForm => solve_log_closed_form(dgp),
        Method::Numeric => solve_numeric(dgp, engine, tol, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::CodingScheme;

    fn fig1_exposure() -> Term {
        Term::new(
            "x",
            CovariateSpec::Categorical {
                probs: vec![0.5, 0.35, 0.15],
                coding: CodingScheme::ReferenceCell,
            },
            vec![0.2, -0.2],
        )
    }

    fn dgp(terms: Vec<Term>, link: LinkSpec, target: f64) -> DgpSpec {
        DgpSpec {
            terms,
            link,
            outcome: OutcomeFamily::Normal { sd: 0.1 },
            target_mean: target,
        }
    }

    fn stream() -> RngStream {
        RngStream::new(2024, 0)
    }

    // ln(0.5) - ln(0.5 + 0.35 e^0.2 + 0.15 e^-0.2), summed by hand.
    fn fig1_log_oracle() -> f64 {
        0.5f64.ln() - (0.5 + 0.35 * 0.2f64.exp() + 0.15 * (-0.2f64).exp()).ln()
    }

    #[test]
    fn linear_scale_fig1_identity() {
        let s = solve_linear_scale(&dgp(vec![fig1_exposure()], LinkSpec::Identity, 0.5)).unwrap();
        assert!((s.beta0 - 0.46).abs() < 1e-15);
        assert!(s.warnings.is_empty());
        assert!(s.residual < 1e-15);
    }

    #[test]
    fn linear_scale_zero_mean_covariate() {
        let t = Term::scalar("z", CovariateSpec::Normal { mu: 0.0, sigma: 1.0 }, 2.7);
        let s = solve_linear_scale(&dgp(vec![t], LinkSpec::Identity, 0.3)).unwrap();
        assert_eq!(s.beta0, 0.3);
    }

    #[test]
    fn linear_scale_nonlinear_link_is_flagged() {
        let s = solve_linear_scale(&dgp(vec![fig1_exposure()], LinkSpec::Log, 0.5)).unwrap();
        assert!(s.warnings.contains(Warnings::NAIVE_LINEAR_SCALE));
        assert!(s.residual > 1e-4);
        let t = Term::scalar("z", CovariateSpec::Uniform { a: 0.0, b: 1.0 }, 1.0);
        let s = solve_linear_scale(&dgp(vec![t], LinkSpec::Logit, 0.5)).unwrap();
        assert!(s.warnings.contains(Warnings::RESIDUAL_UNCHECKED));
        assert!(s.residual.is_nan());
    }

    #[test]
    fn linear_scale_cauchy_errors() {
        let t = Term::scalar("c", CovariateSpec::Cauchy { location: 0.0, scale: 1.0 }, 1.0);
        assert_eq!(
            solve_linear_scale(&dgp(vec![t], LinkSpec::Identity, 0.5)),
            Err(Error::UndefinedMoment { term: "c".into() })
        );
    }

    #[test]
    fn zero_coefficients_give_link_of_target() {
        for link in [LinkSpec::Identity, LinkSpec::Log, LinkSpec::Logit] {
            let t = Term::scalar("z", CovariateSpec::Normal { mu: 1.0, sigma: 2.0 }, 0.0);
            let d = dgp(vec![t], link, 0.37);
            let g = link.apply(0.37).unwrap();
            assert_eq!(solve_linear_scale(&d).unwrap().beta0, g);
            assert_eq!(solve_numeric(&d, Engine::MonteCarlo { n_mc: 100 }, 1e-4, &stream()).unwrap().beta0, g);
            if link == LinkSpec::Log {
                assert_eq!(solve_log_closed_form(&d).unwrap().beta0, g);
            }
        }
    }

    #[test]
    fn log_closed_form_examples() {
        let s = solve_log_closed_form(&dgp(vec![fig1_exposure()], LinkSpec::Log, 0.5)).unwrap();
        assert!((s.beta0 - fig1_log_oracle()).abs() < 1e-14);
        assert!((s.beta0 + 0.742_223_568_8).abs() < 1e-9);

        let z = Term::scalar("z", CovariateSpec::Normal { mu: 0.0, sigma: 1.0 }, 1.0);
        let s = solve_log_closed_form(&dgp(vec![fig1_exposure(), z], LinkSpec::Log, 0.5)).unwrap();
        assert!((s.beta0 - (fig1_log_oracle() - 0.5)).abs() < 1e-14);
        assert!((s.beta0 + 1.242_223_568_8).abs() < 1e-9);

        let s = solve_log_closed_form(&dgp(vec![], LinkSpec::Log, 0.3)).unwrap();
        assert_eq!(s.beta0, 0.3f64.ln());
    }

    #[test]
    fn log_closed_form_errors() {
        assert!(matches!(
            solve_log_closed_form(&dgp(vec![fig1_exposure()], LinkSpec::Logit, 0.5)),
            Err(Error::WrongLink { .. })
        ));
        let g = Term::scalar("z", CovariateSpec::Gamma { shape: 1.0, rate: 1.5 }, 2.0);
        match solve_log_closed_form(&dgp(vec![fig1_exposure(), g], LinkSpec::Log, 0.5)) {
            Err(Error::Domain { term, .. }) => assert_eq!(term, "z"),
            other => panic!("{other:?}"),
        }
        let c = Term::scalar("c", CovariateSpec::Cauchy { location: 0.0, scale: 1.0 }, 0.1);
        let d = dgp(vec![c], LinkSpec::Log, 0.5);
        assert_eq!(solve_log_closed_form(&d), Err(Error::NoMgf { term: "c".into() }));
        let fb = McFallback { n_mc: 10_000, rng: stream() };
        let s = solve_log_closed_form_with(&d, Some(fb)).unwrap();
        assert!(s.warnings.contains(Warnings::MC_FALLBACK | Warnings::HEAVY_TAILED));
        assert!(s.mc_se > 0.0);
    }

    #[test]
    fn expectation_examples() {
        let d = dgp(vec![], LinkSpec::Logit, 0.2);
        let e = expectation_of_mean(LinkSpec::Logit.apply(0.2).unwrap(), &d, Engine::Exact, &stream()).unwrap();
        assert!((e.value - 0.2).abs() < 1e-15);
        assert_eq!(e.se, 0.0);

        let x = Term::scalar("x", CovariateSpec::Bernoulli { p: 0.5 }, 1.0);
        let d = dgp(vec![x], LinkSpec::Logit, 0.5);
        let e = expectation_of_mean(-0.5, &d, Engine::Exact, &stream()).unwrap();
        assert!((e.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn expectation_mc_matches_closed_form() {
        let d = dgp(vec![fig1_exposure()], LinkSpec::Log, 0.5);
        let b0 = solve_log_closed_form(&d).unwrap().beta0;
        let e = expectation_of_mean(b0, &d, Engine::MonteCarlo { n_mc: 1_000_000 }, &stream()).unwrap();
        assert!((e.value - 0.5).abs() <= 4.0 * e.se, "{e:?}");
    }

    #[test]
    fn exact_engine_rejects_continuous() {
        let z = Term::scalar("z", CovariateSpec::Normal { mu: 0.0, sigma: 1.0 }, 1.0);
        let d = dgp(vec![fig1_exposure(), z], LinkSpec::Log, 0.5);
        assert_eq!(
            expectation_of_mean(0.0, &d, Engine::Exact, &stream()),
            Err(Error::EngineMismatch { term: "z".into() })
        );
    }

    #[test]
    fn numeric_logit_symmetry() {
        let x = Term::scalar("x", CovariateSpec::Bernoulli { p: 0.5 }, 1.0);
        let s = solve_numeric(&dgp(vec![x], LinkSpec::Logit, 0.5), Engine::Exact, 1e-10, &stream()).unwrap();
        assert!((s.beta0 + 0.5).abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn numeric_matches_closed_forms() {
        let d = dgp(vec![fig1_exposure()], LinkSpec::Log, 0.5);
        let n = solve_numeric(&d, Engine::Exact, 1e-12, &stream()).unwrap();
        assert!((n.beta0 - solve_log_closed_form(&d).unwrap().beta0).abs() < 1e-9);

        let d = dgp(vec![fig1_exposure()], LinkSpec::Identity, 0.5);
        let n = solve_numeric(&d, Engine::Exact, 1e-12, &stream()).unwrap();
        assert!((n.beta0 - 0.46).abs() < 1e-9);
    }

    #[test]
    fn numeric_mc_identity_and_log() {
        let z = Term::scalar("z", CovariateSpec::Uniform { a: -1.0, b: 3.0 }, 1.0);
        let d = dgp(vec![fig1_exposure(), z.clone()], LinkSpec::Identity, 0.5);
        let n = solve_numeric(&d, Engine::MonteCarlo { n_mc: 100_000 }, 1e-6, &stream()).unwrap();
        let exact = solve_linear_scale(&d).unwrap().beta0;
        // sd of the uniform part is 4/sqrt(12); the common draws carry that noise.
        assert!((n.beta0 - exact).abs() < 4.0 * n.mc_se + 1e-6, "{n:?} vs {exact}");

        let d = dgp(vec![fig1_exposure(), z], LinkSpec::Log, 0.5);
        let n = solve_numeric(&d, Engine::MonteCarlo { n_mc: 100_000 }, 1e-6, &stream()).unwrap();
        let exact = solve_log_closed_form(&d).unwrap().beta0;
        // beta0 error ~ se / target on the log scale.
        assert!((n.beta0 - exact).abs() < 4.0 * n.mc_se / 0.5, "{n:?} vs {exact}");
    }

    #[test]
    fn numeric_mc_precision_warning() {
        let z = Term::scalar("z", CovariateSpec::Normal { mu: 0.0, sigma: 1.0 }, 1.0);
        let d = dgp(vec![z], LinkSpec::Logit, 0.5);
        let s = solve_numeric(&d, Engine::MonteCarlo { n_mc: 1000 }, 1e-4, &stream()).unwrap();
        assert!(s.warnings.contains(Warnings::MC_PRECISION));
        assert!(s.residual <= 1e-4);
    }

    #[test]
    fn numeric_rejects_bad_tol() {
        let x = Term::scalar("x", CovariateSpec::Bernoulli { p: 0.5 }, 1.0);
        let d = dgp(vec![x], LinkSpec::Logit, 0.5);
        assert!(solve_numeric(&d, Engine::Exact, 0.0, &stream()).is_err());
    }

    #[test]
    fn bisect_reports_no_root() {
        assert!(matches!(bisect(0.0, 1e-10, |_| 1.0), Err(Error::NoRoot { .. })));
        assert!(matches!(bisect(0.0, 1e-10, |_| f64::NAN), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn bisect_finds_far_root() {
        let (root, _) = bisect(0.0, 1e-12, |b| b - 1000.0).unwrap();
        assert!((root - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn validation() {
        let d = dgp(vec![], LinkSpec::Logit, 1.0);
        assert!(matches!(d.validate(), Err(Error::Domain { .. })));
        let mut d = dgp(vec![], LinkSpec::Identity, 1.5);
        d.outcome = OutcomeFamily::Bernoulli { clamp: ClampPolicy::ClampToUnit };
        assert!(d.validate().is_err());
        let t = Term::new("x", fig1_exposure().dist, vec![0.2]);
        match dgp(vec![t], LinkSpec::Log, 0.5).validate() {
            Err(Error::Parameter { what, .. }) => assert_eq!(what, "x.coef"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn warning_names() {
        assert_eq!(Warnings::empty().to_string(), "");
        assert_eq!(
            (Warnings::MC_FALLBACK | Warnings::CLAMPED).to_string(),
            "mc_fallback|clamped"
        );
    }

    #[test]
    fn joint_sampler_path() {
        struct Correlated;
        impl JointSampler for Correlated {
            fn dim(&self) -> usize {
                2
            }
            fn sample_design(&self, n: usize, rng: &RngStream) -> Result<Vec<f64>> {
                let z = CovariateSpec::Normal { mu: 0.0, sigma: 1.0 }.sample(n, rng)?;
                Ok(z.iter().flat_map(|v| [*v, *v]).collect())
            }
        }
        // X = Z, so beta . x = 2 Z and E[exp(b0 + 2Z)] = exp(b0 + 2).
        let s = solve_numeric_joint(&Correlated, &[1.0, 1.0], LinkSpec::Log, 0.5, 200_000, 1e-6, &stream()).unwrap();
        let exact = 0.5f64.ln() - 2.0;
        assert!((s.beta0 - exact).abs() < 4.0 * s.mc_se / 0.5, "{s:?} vs {exact}");
        let e = expectation_of_mean_joint(s.beta0, &Correlated, &[1.0, 1.0], LinkSpec::Log, 200_000, &RngStream::new(1, 1))
            .unwrap();
        assert!((e.value - 0.5).abs() < 4.0 * (e.se + s.mc_se));
    }
}
