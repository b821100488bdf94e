//! Dataset generation from a model and a solved intercept.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::distributions::CovariateSpec;
use crate::error::{Error, Result};
use crate::intercept::{ClampPolicy, DgpSpec, OutcomeFamily};
use crate::rng::RngStream;

/// Substream of the outcome draws. Covariate `j` uses substream `j`, so the
/// outcome index sits out of their way.
pub const OUTCOME_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    /// Raw draws; level indices for categoricals.
    pub values: Vec<f64>,
    /// Design columns of a categorical (`p - 1` vectors), empty otherwise.
    pub encoded: Vec<Vec<f64>>,
    pub categorical: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<Column>,
    pub outcome: Vec<f64>,
    pub clamp_count: usize,
    pub n: usize,
}

impl Dataset {
    pub fn outcome_mean(&self) -> f64 {
        self.outcome.iter().sum::<f64>() / self.n as f64
    }

    pub fn clamp_rate(&self) -> f64 {
        self.clamp_count as f64 / self.n as f64
    }

    /// CSV with one column per covariate (categoricals as integer levels)
    /// followed by `y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        header.push("y");
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n {
            record.clear();
            for c in &self.columns {
                let v = c.values[i];
                record.push(if c.categorical {
                    format!("{}", v as usize)
                } else {
                    format!("{v}")
                });
            }
            record.push(format!("{}", self.outcome[i]));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `n` rows: covariates independently in declaration order, then
/// `Y | X` from the outcome family at `mu = g^-1(beta0 + beta . x)`.
pub fn generate(dgp: &DgpSpec, beta0: f64, n: usize, rng: &RngStream) -> Result<Dataset> {
    dgp.validate()?;
    if n == 0 {
        return Err(Error::param("n", "dataset size must be at least 1"));
    }
    let mut eta = vec![beta0; n];
    let mut columns = Vec::with_capacity(dgp.terms.len());
    for (j, term) in dgp.terms.iter().enumerate() {
        let values = term
            .dist
            .sample(n, &rng.child(j as u64))
            .map_err(|e| e.for_term(&term.name))?;
        let k = term.dist.arity();
        let categorical = matches!(term.dist, CovariateSpec::Categorical { .. });
        let mut encoded = if categorical { vec![vec![0.0; n]; k] } else { Vec::new() };
        let mut row = vec![0.0; k];
        for (i, v) in values.iter().enumerate() {
            term.dist.encode_value(*v, &mut row);
            eta[i] += row.iter().zip(&term.coef).map(|(x, b)| x * b).sum::<f64>();
            for (col, x) in encoded.iter_mut().zip(&row) {
                col[i] = *x;
            }
        }
        columns.push(Column {
            name: term.name.clone(),
            values,
            encoded,
            categorical,
        });
    }

    let mut out_rng = rng.child(OUTCOME_STREAM).rng();
    let mut outcome = Vec::with_capacity(n);
    let mut clamp_count = 0;
    match dgp.outcome {
        OutcomeFamily::Normal { sd } => {
            for e in &eta {
                let z: f64 = StandardNormal.sample(&mut out_rng);
                outcome.push(dgp.link.invert(*e) + sd * z);
            }
        }
        OutcomeFamily::Bernoulli { clamp } => {
            for (row, e) in eta.iter().enumerate() {
                let mu = dgp.link.invert(*e);
                let p = if (0.0..=1.0).contains(&mu) {
                    mu
                } else {
                    match clamp {
                        ClampPolicy::ClampToUnit => {
                            clamp_count += 1;
                            mu.clamp(0.0, 1.0)
                        }
                        ClampPolicy::RejectOutOfRange => {
                            return Err(Error::OutOfRange { row, eta: *e, mu });
                        }
                    }
                };
                outcome.push(if out_rng.random::<f64>() < p { 1.0 } else { 0.0 });
            }
        }
    }

    Ok(Dataset {
        columns,
        outcome,
        clamp_count,
        n,
    })
}

/// Outcome mean and clamp count of one replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateSummary {
    pub mean: f64,
    pub clamp_count: usize,
}

const CHUNK: usize = 4096;

/// Same draws as [`generate`] without materializing the dataset: every
/// stream is consumed in the same order, chunk by chunk, so the mean is
/// bitwise equal to `generate(..).outcome_mean()`.
pub fn summarize(dgp: &DgpSpec, beta0: f64, n: usize, rng: &RngStream) -> Result<ReplicateSummary> {
    dgp.validate()?;
    if n == 0 {
        return Err(Error::param("n", "dataset size must be at least 1"));
    }
    let mut cov_rngs: Vec<_> = (0..dgp.terms.len()).map(|j| rng.child(j as u64).rng()).collect();
    let mut out_rng = rng.child(OUTCOME_STREAM).rng();
    // Per-term linear predictor contribution of each categorical level.
    let level_etas: Vec<Option<Vec<f64>>> = dgp
        .terms
        .iter()
        .map(|t| match &t.dist {
            CovariateSpec::Categorical { probs, coding } => {
                Some(crate::coding::level_predictors(probs, &t.coef, *coding).expect("validated"))
            }
            _ => None,
        })
        .collect();

    let mut values = vec![0.0; CHUNK];
    let mut eta = vec![0.0; CHUNK];
    let mut total = 0.0;
    let mut clamp_count = 0;
    let mut done = 0;
    while done < n {
        let len = CHUNK.min(n - done);
        let eta = &mut eta[..len];
        eta.fill(beta0);
        for ((term, r), levels) in dgp.terms.iter().zip(cov_rngs.iter_mut()).zip(&level_etas) {
            let values = &mut values[..len];
            term.dist.fill(r, values);
            match levels {
                Some(l) => eta.iter_mut().zip(values.iter()).for_each(|(e, v)| *e += l[*v as usize]),
                None => eta.iter_mut().zip(values.iter()).for_each(|(e, v)| *e += v * term.coef[0]),
            }
        }
        match dgp.outcome {
            OutcomeFamily::Normal { sd } => {
                for e in eta.iter() {
                    let z: f64 = StandardNormal.sample(&mut out_rng);
                    total += dgp.link.invert(*e) + sd * z;
                }
            }
            OutcomeFamily::Bernoulli { clamp } => {
                for (i, e) in eta.iter().enumerate() {
                    let mu = dgp.link.invert(*e);
                    let p = if (0.0..=1.0).contains(&mu) {
                        mu
                    } else if clamp == ClampPolicy::ClampToUnit {
                        clamp_count += 1;
                        mu.clamp(0.0, 1.0)
                    } else {
                        return Err(Error::OutOfRange { row: done + i, eta: *e, mu });
                    };
                    total += if out_rng.random::<f64>() < p { 1.0 } else { 0.0 };
                }
            }
        }
        done += len;
    }
    Ok(ReplicateSummary {
        mean: total / n as f64,
        clamp_count,
    })
}
