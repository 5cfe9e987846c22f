//! Run configuration: a TOML file with sections for data, prior, model,
//! MCMC, and output settings. Every field has a default; `--print-config`
//! dumps the effective configuration.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub prior: PriorConfig,
    pub model: ModelConfig,
    pub mcmc: McmcSection,
    pub output: OutputConfig,
    /// Worker-pool size for batch fitting; 0 means one worker per core.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            prior: PriorConfig::default(),
            model: ModelConfig::default(),
            mcmc: McmcSection::default(),
            output: OutputConfig::default(),
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: PathBuf,
    /// Response column names; `fit` runs one model per response.
    pub responses: Vec<String>,
    pub predictors: Vec<String>,
    pub confounders: Vec<String>,
    /// Cells equal to this token (or empty cells) are treated as PMVs.
    pub pmv_sentinel: String,
    /// Detection limit override; by default the minimum observed response.
    pub psi: Option<f64>,
    /// Standardize each response with the half-minimum recipe before fitting.
    pub standardize: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            responses: vec![],
            predictors: vec![],
            confounders: vec![],
            pmv_sentinel: "NA".to_string(),
            psi: None,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    /// "independent" or "mrf".
    pub kind: String,
    /// Prior inclusion probability; omega = logit of this.
    pub inclusion_probability: f64,
    /// Path to the relationship matrix CSV (required for the MRF prior).
    pub rel_path: Option<PathBuf>,
    /// MRF interaction strength; tuned from the prior when absent.
    pub eta: Option<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            kind: "independent".to_string(),
            inclusion_probability: 0.05,
            rel_path: None,
            eta: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// "skew_normal" or "normal" (normal pins the skew weight at 0).
    pub error_model: String,
    pub nu0_sq: f64,
    /// Slab variance; when absent, set to the empirical variance of the
    /// single-predictor regression slopes.
    pub nu_sq: Option<f64>,
    pub nud_sq: f64,
    /// One entry per confounder, recycled when a single value is given.
    pub lambda_sq: Vec<f64>,
    pub xi0: f64,
    pub sigma0_sq: f64,
    /// Treat every PMV as technical (the forced-rho baseline).
    pub fix_rho_one: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        // analysis-style defaults
        Self {
            error_model: "skew_normal".to_string(),
            nu0_sq: 100.0,
            nu_sq: None,
            nud_sq: 100.0,
            lambda_sq: vec![100.0],
            xi0: 3.0,
            sigma0_sq: 1.0,
            fix_rho_one: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for McmcSection {
    fn default() -> Self {
        Self {
            iterations: 330_000,
            burn_in: 30_000,
            thin: 20,
            chains: 3,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub fdr_target: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            fdr_target: 0.05,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config file {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        match self.prior.kind.as_str() {
            "independent" => {}
            "mrf" => {
                if self.prior.rel_path.is_none() {
                    bail!("prior.kind = \"mrf\" requires prior.rel_path");
                }
            }
            other => bail!("prior.kind must be \"independent\" or \"mrf\", got \"{other}\""),
        }
        if !(self.prior.inclusion_probability > 0.0 && self.prior.inclusion_probability < 1.0) {
            bail!("prior.inclusion_probability must lie in (0, 1)");
        }
        match self.model.error_model.as_str() {
            "skew_normal" | "normal" => {}
            other => bail!("model.error_model must be \"skew_normal\" or \"normal\", got \"{other}\""),
        }
        if !(self.output.fdr_target > 0.0 && self.output.fdr_target < 1.0) {
            bail!("output.fdr_target must lie in (0, 1)");
        }
        if self.mcmc.iterations == 0 || self.mcmc.thin == 0 || self.mcmc.chains == 0 {
            bail!("mcmc.iterations, mcmc.thin, and mcmc.chains must be positive");
        }
        if self.mcmc.burn_in >= self.mcmc.iterations {
            bail!("mcmc.burn_in must be below mcmc.iterations");
        }
        Ok(())
    }

    pub fn mcmc_config(&self) -> sncm::gibbs::McmcConfig {
        sncm::gibbs::McmcConfig {
            iterations: self.mcmc.iterations,
            burn_in: self.mcmc.burn_in,
            thin: self.mcmc.thin,
            chains: self.mcmc.chains,
            seed: self.mcmc.seed,
        }
    }
}
