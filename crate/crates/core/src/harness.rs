//! Monte Carlo replication of scenario grids.
//!
//! Each scenario solves its intercept once and then draws `replicates`
//! datasets of size `n`. Replicate `k` of scenario `id` always uses stream
//! `k` below the key `(master_seed, hash(id))`, and aggregation runs in
//! replicate order, so results do not depend on the worker count.

use std::io::Write;

use rayon::prelude::*;

use crate::config::GridConfig;
use crate::datagen::summarize;
use crate::distributions::CovariateSpec;
use crate::error::{Error, Result};
use crate::intercept::{solve, DgpSpec, Engine, Method, OutcomeFamily, Warnings};
use crate::links::LinkSpec;
use crate::rng::{stable_hash, RngStream};

/// Substream used by the solver (Monte Carlo engine draws).
pub const SOLVER_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub dgp: DgpSpec,
    pub solver: Method,
    pub engine: Engine,
    pub tol: f64,
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    /// Label of the covariate-axis distribution, `none` without one.
    pub z_dist: String,
    pub beta2: Option<f64>,
}

impl Scenario {
    pub fn stream(&self) -> RngStream {
        RngStream::new(self.master_seed, stable_hash(&self.id))
    }

    /// The first log-link term whose exponential moment is infinite.
    pub fn divergent_term(&self) -> Option<&str> {
        if self.dgp.link != LinkSpec::Log {
            return None;
        }
        self.dgp.terms.iter().find_map(|t| match t.dist {
            CovariateSpec::Gamma { rate, .. } if t.coef[0] >= rate => Some(t.name.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub scenario_id: String,
    pub beta0: f64,
    /// Grand mean of the per-replicate outcome means.
    pub achieved_mean: f64,
    pub bias: f64,
    pub bias_se: f64,
    pub clamp_rate: f64,
    pub replicates: usize,
    pub warnings: Warnings,
    pub replicate_means: Vec<f64>,
}

/// Solves the intercept and runs every replicate.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioResult> {
    let attach = |e: Error| Error::Scenario {
        id: s.id.clone(),
        source: Box::new(e),
    };
    if s.replicates < 2 {
        return Err(attach(Error::param("replicates", "need at least 2 replicates")));
    }
    let stream = s.stream();
    let sol = solve(&s.dgp, s.solver, s.engine, s.tol, &stream.child(SOLVER_STREAM)).map_err(attach)?;

    let summaries = (0..s.replicates as u64)
        .into_par_iter()
        .map(|k| summarize(&s.dgp, sol.beta0, s.n, &stream.child(k)))
        .collect::<Result<Vec<_>>>()
        .map_err(attach)?;

    let replicate_means: Vec<f64> = summaries.iter().map(|r| r.mean).collect();
    let reps = s.replicates as f64;
    let achieved_mean = replicate_means.iter().sum::<f64>() / reps;
    let ss: f64 = replicate_means.iter().map(|m| (m - achieved_mean).powi(2)).sum();
    let bias_se = (ss / (reps - 1.0)).sqrt() / reps.sqrt();
    let clamped: usize = summaries.iter().map(|r| r.clamp_count).sum();
    let clamp_rate = clamped as f64 / (reps * s.n as f64);

    let mut warnings = sol.warnings;
    if clamped > 0 {
        warnings |= Warnings::CLAMPED;
    }
    Ok(ScenarioResult {
        scenario_id: s.id.clone(),
        beta0: sol.beta0,
        achieved_mean,
        bias: achieved_mean - s.dgp.target_mean,
        bias_se,
        clamp_rate,
        replicates: s.replicates,
        warnings,
        replicate_means,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok(ScenarioResult),
    Skipped { warnings: Warnings, reason: String },
}

/// One line of the result CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: Scenario,
    pub status: RowStatus,
}

impl ResultRow {
    pub fn result(&self) -> Option<&ScenarioResult> {
        match &self.status {
            RowStatus::Ok(r) => Some(r),
            RowStatus::Skipped { .. } => None,
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.result().is_none()
    }
}

fn run_row(s: Scenario) -> ResultRow {
    if let Some(term) = s.divergent_term() {
        let reason = format!("E[exp(beta * {term})] is infinite under the log link");
        return ResultRow {
            scenario: s,
            status: RowStatus::Skipped {
                warnings: Warnings::DIVERGENT_TERM,
                reason,
            },
        };
    }
    let status = match run_scenario(&s) {
        Ok(r) => RowStatus::Ok(r),
        Err(e) => RowStatus::Skipped {
            warnings: Warnings::SOLVER_ERROR,
            reason: e.to_string(),
        },
    };
    ResultRow { scenario: s, status }
}

/// Runs every scenario of `config` on `config.workers` threads (0 = all).
/// Rows come back ordered by scenario id.
pub fn run_grid(config: &GridConfig) -> Result<Vec<ResultRow>> {
    let scenarios = config.scenarios()?;
    if scenarios.is_empty() {
        return Err(Error::config("targets", "grid expands to no scenarios"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    Ok(pool.install(|| scenarios.into_par_iter().map(run_row).collect()))
}

/// `%.9g`-style formatting: 9 significant digits, trailing zeros dropped,
/// exponent form outside `[1e-4, 1e9)`.
pub fn fmt_sig9(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub const CSV_HEADER: [&str; 17] = [
    "scenario_id",
    "link",
    "outcome_family",
    "solver",
    "z_dist",
    "beta2",
    "target_mean",
    "beta0",
    "achieved_mean",
    "bias",
    "bias_se",
    "clamp_rate",
    "n",
    "replicates",
    "master_seed",
    "status",
    "warnings",
];

pub fn write_results_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        let s = &row.scenario;
        let mut rec = vec![
            s.id.clone(),
            s.dgp.link.name().to_string(),
            match s.dgp.outcome {
                OutcomeFamily::Normal { .. } => "normal".to_string(),
                OutcomeFamily::Bernoulli { .. } => "bernoulli".to_string(),
            },
            s.solver.name().to_string(),
            s.z_dist.clone(),
            s.beta2.map(fmt_sig9).unwrap_or_default(),
            fmt_sig9(s.dgp.target_mean),
        ];
        match &row.status {
            RowStatus::Ok(r) => {
                rec.extend([
                    fmt_sig9(r.beta0),
                    fmt_sig9(r.achieved_mean),
                    fmt_sig9(r.bias),
                    fmt_sig9(r.bias_se),
                    fmt_sig9(r.clamp_rate),
                ]);
            }
            RowStatus::Skipped { .. } => rec.extend(std::iter::repeat_n(String::new(), 5)),
        }
        let (status, warnings) = match &row.status {
            RowStatus::Ok(r) => ("ok", r.warnings),
            RowStatus::Skipped { warnings, .. } => ("skipped", *warnings),
        };
        rec.extend([
            s.n.to_string(),
            s.replicates.to_string(),
            s.master_seed.to_string(),
            status.to_string(),
            warnings.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSummary {
    pub run: usize,
    pub skipped: usize,
    /// Largest `|bias| / bias_se` over completed rows.
    pub max_bias_ratio: f64,
}

pub fn summarize_grid(rows: &[ResultRow]) -> GridSummary {
    let ok: Vec<&ScenarioResult> = rows.iter().filter_map(ResultRow::result).collect();
    GridSummary {
        run: ok.len(),
        skipped: rows.len() - ok.len(),
        max_bias_ratio: ok
            .iter()
            .map(|r| if r.bias_se > 0.0 { r.bias.abs() / r.bias_se } else { 0.0 })
            .fold(0.0, f64::max),
    }
}

/// Lag-1 autocorrelation of a series.
pub fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    if den == 0.0 {
        return 0.0;
    }
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intercept::Term;

    fn scenario(dgp: DgpSpec, solver: Method, replicates: usize) -> Scenario {
        Scenario {
            id: "test/none/-/x".into(),
            dgp,
            solver,
            engine: Engine::Exact,
            tol: 1e-10,
            n: 10_000,
            replicates,
            master_seed: 3,
            z_dist: "none".into(),
            beta2: None,
        }
    }

    #[test]
    fn sig9_formatting() {
        let cases = [
            (0.0, "0"),
            (0.5, "0.5"),
            (-0.742218474, "-0.742218474"),
            (-0.74221847412345, "-0.742218474"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567891.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-2.5e-7, "-2.5e-07"),
            (999999999.6, "1e+09"),
            (0.99999999999, "1"),
            (10000.0, "10000"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_sig9(x), want, "{x}");
        }
    }

    #[test]
    fn zero_coefficient_identity_scenario() {
        let z = Term::scalar("z", CovariateSpec::Normal { mu: 0.0, sigma: 1.0 }, 0.0);
        let s = scenario(
            DgpSpec {
                terms: vec![z],
                link: LinkSpec::Identity,
                outcome: OutcomeFamily::Normal { sd: 0.1 },
                target_mean: 0.3,
            },
            Method::LinearScale,
            50,
        );
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.beta0, 0.3);
        assert!(r.bias.abs() <= 4.0 * r.bias_se);
        assert_eq!(r.bias, r.achieved_mean - 0.3);
        assert_eq!(r.clamp_rate, 0.0);
    }

    #[test]
    fn errors_carry_scenario_id() {
        let g = Term::scalar("z", CovariateSpec::Gamma { shape: 1.0, rate: 1.5 }, 2.0);
        let s = scenario(
            DgpSpec {
                terms: vec![g],
                link: LinkSpec::Log,
                outcome: OutcomeFamily::Normal { sd: 0.1 },
                target_mean: 0.5,
            },
            Method::LogClosedForm,
            2,
        );
        assert_eq!(s.divergent_term(), Some("z"));
        match run_scenario(&s) {
            Err(Error::Scenario { id, source }) => {
                assert_eq!(id, s.id);
                assert!(matches!(*source, Error::Domain { .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn autocorrelation_helper() {
        assert!((lag1_autocorrelation(&[1.0, -1.0, 1.0, -1.0, 1.0, -1.0]) + 0.833333).abs() < 1e-5);
        assert_eq!(lag1_autocorrelation(&[2.0; 5]), 0.0);
    }
}
