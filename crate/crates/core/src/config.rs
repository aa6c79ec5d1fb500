//! Run configuration files (TOML).
//!
//! An analysis config names the outcome column, the treatment columns
//! with their kinds (binary, categorical with levels and reference,
//! continuous), the interactions, the optional regimen column, and the
//! estimation settings. Learner hyperparameters live in `[learners.*]`
//! tables referenced by name:
//!
//! ```toml
//! outcome = "y"
//! regimen = "r"              # optional; required by irm runs
//! covariates = ["x1", "x2"]  # optional; default: every other column
//!
//! [[treatments]]
//! name = "art"
//! kind = "categorical"
//! levels = ["NNRTI", "bPI", "DTG"]
//! reference = "NNRTI"
//!
//! [[treatments]]
//! name = "tdf"
//! kind = "binary"
//!
//! [[interactions]]
//! factors = ["art", "tdf"]
//!
//! [estimate]
//! k = 5
//! n_splits = 100
//! seed = 17
//! clip_eps = 0.01
//! treatment_learner = "boosted_trees"
//! outcome_learner = "boosted_trees"
//!
//! [learners.boosted_trees]
//! n_trees = 60
//! learning_rate = 0.3
//! max_depth = 2
//! min_leaf = 10
//! subsample = 1.0
//! ```
//!
//! Valid learner names: `ols`, `ridge`, `lasso`, `logistic`,
//! `multinomial_softmax`, `random_forest`, `boosted_trees`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::{IrmBenchConfig, IrmMethod, IrmMethodSpec, PlmBenchConfig};
use crate::error::{Error, Result};
use crate::learners::{BoostParams, ForestParams, LearnerKind, DEFAULT_CLIP_EPS};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreatmentDecl {
    pub name: String,
    /// "binary" | "categorical" | "continuous"
    pub kind: String,
    /// Categorical level labels (CSV values); order fixes level indices.
    pub levels: Option<Vec<String>>,
    /// Reference level label; default is the first level.
    pub reference: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteractionDecl {
    pub factors: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateSettings {
    pub k: usize,
    pub n_splits: usize,
    pub seed: u64,
    pub clip_eps: f64,
    pub treatment_learner: String,
    pub outcome_learner: String,
    /// Propensity learner for irm runs; defaults to `treatment_learner`.
    pub propensity_learner: Option<String>,
}

impl Default for EstimateSettings {
    fn default() -> Self {
        Self {
            k: 5,
            n_splits: 1,
            seed: 0,
            clip_eps: DEFAULT_CLIP_EPS,
            treatment_learner: "boosted_trees".into(),
            outcome_learner: "boosted_trees".into(),
            propensity_learner: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PenaltySettings {
    pub lambda: Option<f64>,
}

/// Hyperparameter tables per learner family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerTables {
    pub boosted_trees: BoostParams,
    pub random_forest: ForestParams,
    pub ridge: PenaltySettings,
    pub lasso: PenaltySettings,
}

impl Default for LearnerTables {
    fn default() -> Self {
        Self {
            boosted_trees: BoostParams::default(),
            random_forest: ForestParams::default(),
            ridge: PenaltySettings::default(),
            lasso: PenaltySettings::default(),
        }
    }
}

impl LearnerTables {
    pub fn resolve(&self, name: &str) -> Result<LearnerKind> {
        let kind = match name {
            "ols" => LearnerKind::Ols,
            "ridge" => LearnerKind::Ridge { lambda: self.ridge.lambda },
            "lasso" => LearnerKind::Lasso { lambda: self.lasso.lambda },
            "logistic" => LearnerKind::Logistic,
            "multinomial_softmax" | "multinomial" => LearnerKind::MultinomialSoftmax,
            "random_forest" => LearnerKind::RandomForest(self.random_forest),
            "boosted_trees" => LearnerKind::BoostedTrees(self.boosted_trees),
            other => {
                return Err(Error::Invalid(format!(
                    "unknown learner '{}'; expected one of ols, ridge, lasso, logistic, multinomial_softmax, random_forest, boosted_trees",
                    other
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Analysis configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub outcome: String,
    pub regimen: Option<String>,
    pub covariates: Option<Vec<String>>,
    #[serde(default)]
    pub treatments: Vec<TreatmentDecl>,
    #[serde(default)]
    pub interactions: Vec<InteractionDecl>,
    #[serde(default)]
    pub estimate: EstimateSettings,
    #[serde(default)]
    pub learners: LearnerTables,
}

impl AnalysisConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: AnalysisConfig = toml::from_str(&text)
            .map_err(|e| Error::Invalid(format!("config parse error: {}", e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.treatments {
            match t.kind.as_str() {
                "binary" | "continuous" => {}
                "categorical" => {
                    if let (Some(levels), Some(reference)) = (&t.levels, &t.reference) {
                        if !levels.contains(reference) {
                            return Err(Error::Invalid(format!(
                                "reference level '{}' of treatment '{}' not among its levels",
                                reference, t.name
                            )));
                        }
                    }
                }
                other => {
                    return Err(Error::Invalid(format!(
                        "treatment '{}' has unknown kind '{}'",
                        t.name, other
                    )))
                }
            }
        }
        for i in &self.interactions {
            if i.factors.len() < 2 {
                return Err(Error::Invalid("interaction needs at least 2 factors".into()));
            }
        }
        self.learners.resolve(&self.estimate.treatment_learner)?;
        self.learners.resolve(&self.estimate.outcome_learner)?;
        if let Some(p) = &self.estimate.propensity_learner {
            self.learners.resolve(p)?;
        }
        if !(self.estimate.clip_eps > 0.0 && self.estimate.clip_eps < 0.5) {
            return Err(Error::Invalid("clip_eps must lie in (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Bench configuration file for the partial-linear design.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PlmBenchFile {
    pub n: usize,
    pub theta: [f64; 3],
    pub preset: String,
    pub learner_names: Vec<String>,
    pub ks: Vec<usize>,
    pub n_replicates: usize,
    pub n_splits: usize,
    pub master_seed: u64,
    pub clip_eps: f64,
    pub learners: LearnerTables,
}

impl Default for PlmBenchFile {
    fn default() -> Self {
        Self {
            n: 2000,
            theta: [5.0, 15.0, 5.0],
            preset: "default".into(),
            learner_names: vec!["boosted_trees".into()],
            ks: vec![5],
            n_replicates: 100,
            n_splits: 50,
            master_seed: 20240901,
            clip_eps: DEFAULT_CLIP_EPS,
            learners: LearnerTables::default(),
        }
    }
}

impl PlmBenchFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Invalid(format!("config parse error: {}", e)))
    }

    pub fn resolve(&self) -> Result<PlmBenchConfig> {
        crate::bench::parse_plm_preset(&self.preset)?;
        let learners = self
            .learner_names
            .iter()
            .map(|n| self.learners.resolve(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(PlmBenchConfig {
            n: self.n,
            theta: self.theta,
            preset: self.preset.clone(),
            learners,
            ks: self.ks.clone(),
            n_replicates: self.n_replicates,
            n_splits: self.n_splits,
            master_seed: self.master_seed,
            clip_eps: self.clip_eps,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodDecl {
    /// "dml_aipw" | "ipw" | "regression"
    pub method: String,
    pub learner: String,
}

/// Bench configuration file for the interactive design.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IrmBenchFile {
    pub n: usize,
    pub preset: String,
    pub methods: Vec<MethodDecl>,
    pub ks: Vec<usize>,
    pub n_replicates: usize,
    pub master_seed: u64,
    pub clip_eps: f64,
    pub learners: LearnerTables,
}

impl Default for IrmBenchFile {
    fn default() -> Self {
        Self {
            n: 1000,
            preset: "default".into(),
            methods: vec![
                MethodDecl { method: "dml_aipw".into(), learner: "boosted_trees".into() },
                MethodDecl { method: "ipw".into(), learner: "multinomial_softmax".into() },
            ],
            ks: vec![5],
            n_replicates: 200,
            master_seed: 20240902,
            clip_eps: DEFAULT_CLIP_EPS,
            learners: LearnerTables::default(),
        }
    }
}

impl IrmBenchFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Invalid(format!("config parse error: {}", e)))
    }

    pub fn resolve(&self) -> Result<IrmBenchConfig> {
        crate::bench::parse_irm_preset(&self.preset)?;
        let methods = self
            .methods
            .iter()
            .map(|m| {
                let method = match m.method.as_str() {
                    "dml_aipw" => IrmMethod::DmlAipw,
                    "ipw" => IrmMethod::Ipw,
                    "regression" => IrmMethod::Regression,
                    other => {
                        return Err(Error::Invalid(format!("unknown irm method '{}'", other)))
                    }
                };
                Ok(IrmMethodSpec { method, learner: self.learners.resolve(&m.learner)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IrmBenchConfig {
            n: self.n,
            preset: self.preset.clone(),
            methods,
            ks: self.ks.clone(),
            n_replicates: self.n_replicates,
            master_seed: self.master_seed,
            clip_eps: self.clip_eps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_analysis_config() {
        let text = r#"
outcome = "egfr"
covariates = ["age", "bmi"]

[[treatments]]
name = "art"
kind = "categorical"
levels = ["NNRTI", "bPI", "DTG"]
reference = "NNRTI"

[[treatments]]
name = "tdf"
kind = "binary"

[[interactions]]
factors = ["art", "tdf"]

[estimate]
k = 5
n_splits = 100
treatment_learner = "boosted_trees"
outcome_learner = "boosted_trees"

[learners.boosted_trees]
n_trees = 40
learning_rate = 0.25
max_depth = 2
min_leaf = 5
subsample = 1.0
"#;
        let cfg: AnalysisConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.treatments.len(), 2);
        assert_eq!(cfg.estimate.n_splits, 100);
        let lk = cfg.learners.resolve("boosted_trees").unwrap();
        match lk {
            LearnerKind::BoostedTrees(p) => assert_eq!(p.n_trees, 40),
            _ => panic!("wrong learner"),
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_kind = r#"
outcome = "y"
[[treatments]]
name = "a"
kind = "ordinal"
"#;
        let cfg: AnalysisConfig = toml::from_str(bad_kind).unwrap();
        assert!(cfg.validate().is_err());

        let bad_ref = r#"
outcome = "y"
[[treatments]]
name = "a"
kind = "categorical"
levels = ["u", "v"]
reference = "w"
"#;
        let cfg: AnalysisConfig = toml::from_str(bad_ref).unwrap();
        assert!(cfg.validate().is_err());

        let tables = LearnerTables::default();
        assert!(tables.resolve("neural_network").is_err());
    }

    #[test]
    fn bench_files_resolve() {
        let plm = PlmBenchFile::default().resolve().unwrap();
        assert_eq!(plm.learners.len(), 1);
        let irm = IrmBenchFile::default().resolve().unwrap();
        assert_eq!(irm.methods.len(), 2);
    }
}
