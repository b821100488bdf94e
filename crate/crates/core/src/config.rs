//! Grid configuration documents (TOML).
//!
//! A config names one exposure block, an axis of covariate distributions, an
//! axis of covariate coefficients (`beta2`) and an axis of target means. Its
//! Cartesian product is the scenario grid. Unknown keys are rejected.
//!
//! ```toml
//! name = "fig1"
//! link = "log"                 # identity | log | logit
//! solver = "log_closed_form"   # linear_scale | log_closed_form | numeric
//! n = 10000
//! replicates = 500
//! master_seed = 20230901
//! workers = 0                  # 0 = all cores
//! tol = 1e-10                  # optional, numeric solver / verify
//!
//! [outcome]
//! family = "normal"            # or "bernoulli" with clamp = "clamp_to_unit" | "reject_out_of_range"
//! sd = 0.1
//!
//! [engine]
//! kind = "exact"               # exact | mc
//! n_mc = 100000
//!
//! [exposure]
//! name = "x"
//! probs = [0.5, 0.35, 0.15]
//! betas = [0.2, -0.2]
//! coding = "reference_cell"    # reference_cell | effect | weighted_effect
//!
//! [[covariates]]
//! label = "normal"
//! dist = { type = "normal", mu = 0.0, sigma = 1.0 }
//!
//! beta2 = [1.0, 2.0]
//! targets = [0.1, 0.5]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coding::CodingScheme;
use crate::distributions::CovariateSpec;
use crate::error::{Error, Result};
use crate::harness::Scenario;
use crate::intercept::{ClampPolicy, DgpSpec, Engine, Method, OutcomeFamily, Term, DEFAULT_N_MC};
use crate::links::LinkSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutcomeConfig {
    Normal {
        sd: f64,
    },
    Bernoulli {
        #[serde(default)]
        clamp: ClampPolicy,
    },
}

impl From<OutcomeConfig> for OutcomeFamily {
    fn from(o: OutcomeConfig) -> Self {
        match o {
            OutcomeConfig::Normal { sd } => OutcomeFamily::Normal { sd },
            OutcomeConfig::Bernoulli { clamp } => OutcomeFamily::Bernoulli { clamp },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    #[default]
    Exact,
    Mc,
}

fn default_n_mc() -> usize {
    DEFAULT_N_MC
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default)]
    pub kind: EngineKind,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            kind: EngineKind::Exact,
            n_mc: DEFAULT_N_MC,
        }
    }
}

impl EngineConfig {
    pub fn engine(&self) -> Engine {
        match self.kind {
            EngineKind::Exact => Engine::Exact,
            EngineKind::Mc => Engine::MonteCarlo { n_mc: self.n_mc },
        }
    }
}

fn default_exposure_name() -> String {
    "x".into()
}

fn default_covariate_name() -> String {
    "z".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExposureConfig {
    #[serde(default = "default_exposure_name")]
    pub name: String,
    pub probs: Vec<f64>,
    pub betas: Vec<f64>,
    #[serde(default)]
    pub coding: CodingScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisCovariate {
    /// Appears in scenario ids and the `z_dist` column.
    pub label: String,
    /// Column / term name.
    #[serde(default = "default_covariate_name")]
    pub name: String,
    pub dist: CovariateSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub name: String,
    pub link: LinkSpec,
    pub solver: Method,
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    pub outcome: OutcomeConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure: Option<ExposureConfig>,
    #[serde(default)]
    pub covariates: Vec<AxisCovariate>,
    #[serde(default)]
    pub beta2: Vec<f64>,
    pub targets: Vec<f64>,
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub workers: Option<usize>,
    pub engine: Option<EngineKind>,
    pub n_mc: Option<usize>,
    pub tol: Option<f64>,
}

impl GridConfig {
    pub fn from_toml(text: &str) -> Result<GridConfig> {
        let cfg: GridConfig = toml::from_str(text).map_err(|e| {
            let key = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("<document>")
                .to_string();
            Error::config(key, e.to_string().trim().replace('\n', " "))
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<GridConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        GridConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.master_seed = s;
        }
        if let Some(r) = o.replicates {
            self.replicates = r;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(k) = o.engine {
            self.engine.kind = k;
        }
        if let Some(n) = o.n_mc {
            self.engine.n_mc = n;
        }
        if let Some(t) = o.tol {
            self.tol = Some(t);
        }
    }

    pub fn engine(&self) -> Engine {
        self.engine.engine()
    }

    pub fn tol(&self) -> f64 {
        self.tol.unwrap_or_else(|| self.engine().default_tol())
    }

    /// Structural checks; model-level validity is checked per scenario.
    pub fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if self.replicates < 2 {
            return Err(Error::config("replicates", "need at least 2 replicates"));
        }
        if self.targets.is_empty() {
            return Err(Error::config("targets", "empty target axis"));
        }
        if self.covariates.is_empty() && !self.beta2.is_empty() {
            return Err(Error::config("beta2", "coefficients given without covariates"));
        }
        if !self.covariates.is_empty() && self.beta2.is_empty() {
            return Err(Error::config("beta2", "empty coefficient axis"));
        }
        if self.engine.kind == EngineKind::Mc && self.engine.n_mc < 2 {
            return Err(Error::config("engine.n_mc", "need at least 2 draws"));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Error::config("tol", format!("must be positive, got {t}")));
            }
        }
        if let Some(x) = &self.exposure {
            if x.betas.len() + 1 != x.probs.len() {
                return Err(Error::config(
                    "exposure.betas",
                    format!("{} levels need {} coefficients", x.probs.len(), x.probs.len().saturating_sub(1)),
                ));
            }
        }
        for (i, c) in self.covariates.iter().enumerate() {
            if matches!(c.dist, CovariateSpec::Categorical { .. }) {
                return Err(Error::config(
                    format!("covariates[{i}].dist"),
                    "the covariate axis takes scalar distributions",
                ));
            }
            c.dist
                .validate()
                .map_err(|e| Error::config(format!("covariates[{i}].dist"), e.to_string()))?;
        }
        Ok(())
    }

    fn exposure_term(&self) -> Option<Term> {
        self.exposure.as_ref().map(|x| {
            Term::new(
                x.name.clone(),
                CovariateSpec::Categorical {
                    probs: x.probs.clone(),
                    coding: x.coding,
                },
                x.betas.clone(),
            )
        })
    }

    /// Expands the axes into scenarios, ordered by id.
    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        self.check()?;
        let engine = self.engine();
        let tol = self.tol();
        let mut cells: Vec<(Option<&AxisCovariate>, Option<f64>)> = Vec::new();
        if self.covariates.is_empty() {
            cells.push((None, None));
        } else {
            for c in &self.covariates {
                for b in &self.beta2 {
                    cells.push((Some(c), Some(*b)));
                }
            }
        }
        let mut out = Vec::with_capacity(cells.len() * self.targets.len());
        for (cov, beta2) in cells {
            for &target in &self.targets {
                let mut terms: Vec<Term> = self.exposure_term().into_iter().collect();
                if let (Some(c), Some(b)) = (cov, beta2) {
                    terms.push(Term::scalar(c.name.clone(), c.dist.clone(), b));
                }
                let z_dist = cov.map_or("none".to_string(), |c| c.label.clone());
                let id = format!(
                    "{}/{}/{}/{}",
                    self.name,
                    z_dist,
                    beta2.map_or("-".to_string(), |b| b.to_string()),
                    target
                );
                out.push(Scenario {
                    id,
                    dgp: DgpSpec {
                        terms,
                        link: self.link,
                        outcome: self.outcome.into(),
                        target_mean: target,
                    },
                    solver: self.solver,
                    engine,
                    tol,
                    n: self.n,
                    replicates: self.replicates,
                    master_seed: self.master_seed,
                    z_dist,
                    beta2,
                });
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    /// The one scenario of a single-model config.
    pub fn single(&self) -> Result<Scenario> {
        let mut s = self.scenarios()?;
        if s.len() != 1 {
            return Err(Error::config(
                "targets",
                format!("expected a single model, config expands to {} scenarios", s.len()),
            ));
        }
        Ok(s.pop().expect("one scenario"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
link = "logit"
solver = "numeric"
n = 100
replicates = 10
master_seed = 1
targets = [0.5]

[outcome]
family = "bernoulli"
"#;

    #[test]
    fn minimal_defaults() {
        let c = GridConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.outcome, OutcomeConfig::Bernoulli { clamp: ClampPolicy::ClampToUnit });
        assert_eq!(c.engine, EngineConfig::default());
        assert_eq!(c.workers, 0);
        assert_eq!(c.tol(), 1e-10);
        let s = c.single().unwrap();
        assert_eq!(s.id, "t/none/-/0.5");
        assert!(s.dgp.terms.is_empty());
    }

    #[test]
    fn unknown_key_is_an_error() {
        let text = MINIMAL.replace("n = 100", "n = 100\nreplcates = 3");
        match GridConfig::from_toml(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "replcates"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("family = \"bernoulli\"", "family = \"bernoulli\"\nsd = 0.1");
        assert!(matches!(GridConfig::from_toml(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn structural_errors_name_the_key() {
        let cases = [
            ("replicates = 10", "replicates = 1", "replicates"),
            ("targets = [0.5]", "targets = []", "targets"),
            ("targets = [0.5]", "targets = [0.5]\nbeta2 = [1.0]", "beta2"),
            ("n = 100", "n = 0", "n"),
        ];
        for (from, to, key) in cases {
            match GridConfig::from_toml(&MINIMAL.replace(from, to)) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key),
                other => panic!("{to}: {other:?}"),
            }
        }
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = GridConfig::from_toml(MINIMAL).unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            replicates: Some(4),
            workers: Some(2),
            engine: Some(EngineKind::Mc),
            n_mc: Some(500),
            tol: Some(1e-3),
        });
        assert_eq!(c.master_seed, 9);
        assert_eq!(c.replicates, 4);
        assert_eq!(c.workers, 2);
        assert_eq!(c.engine(), Engine::MonteCarlo { n_mc: 500 });
        assert_eq!(c.tol(), 1e-3);
    }

    #[test]
    fn round_trip() {
        let text = MINIMAL.replace(
            "targets = [0.5]",
            r#"targets = [0.25, 0.5]
beta2 = [1.0, 1.5]
covariates = [
  { label = "g", dist = { type = "gamma", shape = 1.0, rate = 1.5 } },
  { label = "n", name = "w", dist = { type = "normal", mu = 0.0, sigma = 1.0 } },
]
[exposure]
probs = [0.5, 0.35, 0.15]
betas = [0.2, -0.2]
coding = "weighted_effect"
"#,
        );
        let c = GridConfig::from_toml(&text).unwrap();
        let back = GridConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        let s = c.scenarios().unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0].id, "t/g/1.5/0.25");
        assert!(s.windows(2).all(|w| w[0].id < w[1].id));
        assert_eq!(s.last().unwrap().dgp.terms[1].name, "w");
    }

    #[test]
    fn single_rejects_grids() {
        let c = GridConfig::from_toml(&MINIMAL.replace("[0.5]", "[0.4, 0.5]")).unwrap();
        assert!(matches!(c.single(), Err(Error::Config { .. })));
    }
}
