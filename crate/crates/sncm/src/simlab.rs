//! Simulation laboratory: the eight data-generating scenarios, replicate
//! generation with ground truth, the two ad-hoc baseline methods, and
//! TPR / FDR / bias / rMSE scoring.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::SQRT_2_OVER_PI;
use crate::error::{Result, SncmError};
use crate::gibbs::{run_chain, McmcConfig};
use crate::model::{CensoredDataset, Hyperparams, SelectionPrior};
use crate::posterior::{adaptive_beta_prior, summarize, SelectionResult};
use crate::relmatrix::{simulation_r, RelationshipMatrix};

const CALIBRATION_DRAWS: usize = 1_000_000;
const CALIBRATION_SEED: u64 = 0x5eed_ca1b;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Baseline,
    HighVariance,
    HighCensoring,
    HighSkewness,
    MisspecifiedR,
    LognormalErrors,
    CorrelatedPredictors,
    LargeN,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 8] = [
        ScenarioName::Baseline,
        ScenarioName::HighVariance,
        ScenarioName::HighCensoring,
        ScenarioName::HighSkewness,
        ScenarioName::MisspecifiedR,
        ScenarioName::LognormalErrors,
        ScenarioName::CorrelatedPredictors,
        ScenarioName::LargeN,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioName::Baseline => "baseline",
            ScenarioName::HighVariance => "high_variance",
            ScenarioName::HighCensoring => "high_censoring",
            ScenarioName::HighSkewness => "high_skewness",
            ScenarioName::MisspecifiedR => "misspecified_R",
            ScenarioName::LognormalErrors => "lognormal_errors",
            ScenarioName::CorrelatedPredictors => "correlated_predictors",
            ScenarioName::LargeN => "large_n",
        }
    }
}

impl std::str::FromStr for ScenarioName {
    type Err = SncmError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| SncmError::domain(format!("unknown scenario name: {s}")))
    }
}

impl std::fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorFamily {
    SkewNormal,
    /// exp(mu_log + sigma_log * N(0,1)), moment-matched to the baseline
    /// skew-normal error.
    LogNormal { mu_log: f64, sigma_log: f64 },
}

/// A fully specified data-generating scenario.
#[derive(Debug, Clone)]
pub struct SimScenario {
    pub name: ScenarioName,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub sigma_sq: f64,
    pub delta: f64,
    pub rho: f64,
    /// True detection limit, calibrated so P(V < psi) hits `target_pv`.
    pub psi: f64,
    pub target_pv: f64,
    pub r: RelationshipMatrix,
    pub correlated_predictors: bool,
    pub permute_r: bool,
    pub error_family: ErrorFamily,
}

impl SimScenario {
    /// Expected PMV fraction: absent with prob 1 - rho, else censored with
    /// prob P(V < psi).
    pub fn expected_pmv_rate(&self) -> f64 {
        (1.0 - self.rho) + self.rho * self.target_pv
    }

    pub fn truth_gamma(&self) -> Vec<bool> {
        self.beta.iter().map(|&b| b != 0.0).collect()
    }
}

/// The paper's 20-signal coefficient vector: within blocks 1-4 of 20
/// predictors each, quintets at positions 1-5, 6-10, 11-15, and 16-20 carry
/// {0.4, -0.6, 0.8, -1.0, 1.2}.
fn signal_beta(p: usize) -> Vec<f64> {
    let values = [0.4, -0.6, 0.8, -1.0, 1.2];
    let mut beta = vec![0.0; p];
    for block in 0..4 {
        let offset = block * 20 + block * 5; // positions 1-5, 6-10, 11-15, 16-20
        for (k, &v) in values.iter().enumerate() {
            beta[offset + k] = v;
        }
    }
    beta
}

fn draw_error(family: ErrorFamily, sigma: f64, delta: f64, rng: &mut impl Rng) -> f64 {
    match family {
        ErrorFamily::SkewNormal => {
            sigma * rng.sample::<f64, _>(StandardNormal)
                + delta * rng.sample::<f64, _>(StandardNormal).abs()
        }
        ErrorFamily::LogNormal { mu_log, sigma_log } => {
            (mu_log + sigma_log * rng.sample::<f64, _>(StandardNormal)).exp()
        }
    }
}

/// Variance of x' beta under the scenario's predictor covariance.
fn linear_term_variance(sc_beta: &[f64], correlated: bool, r: &RelationshipMatrix) -> f64 {
    if !correlated {
        return sc_beta.iter().map(|b| b * b).sum();
    }
    let support: Vec<usize> = (0..sc_beta.len()).filter(|&j| sc_beta[j] != 0.0).collect();
    let mut total = 0.0;
    for &j in &support {
        for &k in &support {
            let sigma_jk = if j == k { 1.0 } else { r.get(j, k) };
            total += sc_beta[j] * sc_beta[k] * sigma_jk;
        }
    }
    total
}

/// Monte-Carlo quantile of the marginal of V at the target censoring
/// probability, with a fixed internal seed so scenarios are reproducible.
fn calibrate_psi(
    beta0: f64,
    lin_var: f64,
    sigma: f64,
    delta: f64,
    family: ErrorFamily,
    target: f64,
    stream: u64,
) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(CALIBRATION_SEED);
    rng.set_stream(stream);
    let sd = lin_var.sqrt();
    let mut draws: Vec<f64> = (0..CALIBRATION_DRAWS)
        .map(|_| {
            beta0
                + sd * rng.sample::<f64, _>(StandardNormal)
                + draw_error(family, sigma, delta, &mut rng)
        })
        .collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((target * CALIBRATION_DRAWS as f64).ceil() as usize)
        .clamp(1, CALIBRATION_DRAWS)
        - 1;
    draws[idx]
}

/// Build one of the eight scenarios, including the Monte-Carlo-calibrated
/// detection limit.
pub fn make_scenario(name: ScenarioName) -> Result<SimScenario> {
    let p = 300;
    let r = simulation_r(15, 20)?;
    let beta = signal_beta(p);
    // baseline residual variance 8 with 75% from the half-normal component
    let half_normal_var_frac = 1.0 - SQRT_2_OVER_PI * SQRT_2_OVER_PI; // Var(|N|) = 1 - 2/pi
    let base_delta = (0.75 * 8.0 / half_normal_var_frac).sqrt();
    let base_sigma_sq = 0.25 * 8.0;

    let mut sc = SimScenario {
        name,
        n: 400,
        p,
        s: 0,
        beta0: 5.0,
        beta,
        sigma_sq: base_sigma_sq,
        delta: base_delta,
        rho: 0.8,
        psi: f64::NAN,
        target_pv: 0.20,
        r,
        correlated_predictors: false,
        permute_r: false,
        error_family: ErrorFamily::SkewNormal,
    };
    match name {
        ScenarioName::Baseline => {}
        ScenarioName::HighVariance => {
            // sigma and delta both x1.5: residual variance x2.25 = 18
            sc.sigma_sq *= 2.25;
            sc.delta *= 1.5;
        }
        ScenarioName::HighCensoring => {
            sc.rho = 0.7;
            sc.target_pv = 0.30;
        }
        ScenarioName::HighSkewness => {
            // 95% of the unchanged total variance 8 from the half-normal part
            sc.delta = (0.95 * 8.0 / half_normal_var_frac).sqrt();
            sc.sigma_sq = 0.05 * 8.0;
        }
        ScenarioName::MisspecifiedR => sc.permute_r = true,
        ScenarioName::LognormalErrors => {
            // matched in mean and variance to the baseline skew-normal error
            let m = base_delta * SQRT_2_OVER_PI;
            let v = 8.0;
            let sigma_log_sq = (1.0 + v / (m * m)).ln();
            sc.error_family = ErrorFamily::LogNormal {
                mu_log: m.ln() - sigma_log_sq / 2.0,
                sigma_log: sigma_log_sq.sqrt(),
            };
        }
        ScenarioName::CorrelatedPredictors => sc.correlated_predictors = true,
        ScenarioName::LargeN => sc.n = 1000,
    }
    let stream = ScenarioName::ALL.iter().position(|&n| n == name).unwrap() as u64;
    let lin_var = linear_term_variance(&sc.beta, sc.correlated_predictors, &sc.r);
    sc.psi = calibrate_psi(
        sc.beta0,
        lin_var,
        sc.sigma_sq.sqrt(),
        sc.delta,
        sc.error_family,
        sc.target_pv,
        stream,
    );
    Ok(sc)
}

/// One simulated dataset with its ground truth and the relationship matrix
/// the analyst should be handed (permuted under misspecified_R).
#[derive(Debug, Clone)]
pub struct Replicate {
    pub data: CensoredDataset,
    pub truth_gamma: Vec<bool>,
    pub truth_beta: Vec<f64>,
    pub r: RelationshipMatrix,
    /// Latent V values before absence/censoring, for calibration checks.
    pub latent_v: Vec<f64>,
}

/// Generate one replicate from the scenario's generative model.
pub fn generate_replicate(sc: &SimScenario, rng: &mut impl Rng) -> Result<Replicate> {
    let (n, p) = (sc.n, sc.p);
    // X column-major; correlated rows via the Cholesky factor of Sigma
    let mut x = vec![0.0f64; n * p];
    if sc.correlated_predictors {
        let sigma = sc.r.with_unit_diagonal();
        let chol = nalgebra::Cholesky::new(sigma).ok_or_else(|| {
            SncmError::Numerical("predictor covariance is not positive definite".into())
        })?;
        let l = chol.l();
        let mut zrow = vec![0.0f64; p];
        for i in 0..n {
            for z in zrow.iter_mut() {
                *z = rng.sample::<f64, _>(StandardNormal);
            }
            // row_i = L z; L lower triangular
            for j in 0..p {
                let mut acc = 0.0;
                for k in 0..=j {
                    acc += l[(j, k)] * zrow[k];
                }
                x[j * n + i] = acc;
            }
        }
    } else {
        for v in x.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let sigma = sc.sigma_sq.sqrt();
    let mut latent_v = Vec::with_capacity(n);
    for i in 0..n {
        let mut mu = sc.beta0;
        for j in 0..p {
            if sc.beta[j] != 0.0 {
                mu += sc.beta[j] * x[j * n + i];
            }
        }
        latent_v.push(mu + draw_error(sc.error_family, sigma, sc.delta, rng));
    }
    let y: Vec<Option<f64>> = latent_v
        .iter()
        .map(|&v| {
            if rng.random::<f64>() >= sc.rho || v < sc.psi {
                None
            } else {
                Some(v)
            }
        })
        .collect();
    if y.iter().all(|v| v.is_none()) {
        return Err(SncmError::domain(
            "degenerate replicate: every response value is a PMV",
        ));
    }
    // the analyst estimates the detection limit as the minimum observed value
    let psi_hat = y.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let data = CensoredDataset::new(y, x, p, vec![], 0, psi_hat)?;
    let r = if sc.permute_r {
        let mut perm: Vec<usize> = (0..p).collect();
        perm.shuffle(rng);
        sc.r.permuted(&perm)?
    } else {
        sc.r.clone()
    };
    Ok(Replicate {
        data,
        truth_gamma: sc.truth_gamma(),
        truth_beta: sc.beta.clone(),
        r,
        latent_v,
    })
}

/// Simulation-study hyperparameters (paper section 3.2 values) around a
/// chosen selection prior, with the adaptive Beta(rho0, rho1).
pub fn sim_hyperparams(data: &CensoredDataset, selection: SelectionPrior) -> Result<Hyperparams> {
    let (rho0, rho1) = adaptive_beta_prior(data)?;
    Ok(Hyperparams {
        nu0_sq: 25.0,
        nu_sq: 4.0,
        nud_sq: 25.0,
        lambda_sq: vec![],
        xi0: 5.0,
        sigma0_sq: 4.0,
        rho0,
        rho1,
        selection,
        skew_errors: true,
        fix_rho_one: false,
    })
}

/// Fit one dataset and summarize selection at 5% Bayesian FDR.
pub fn fit_and_summarize(
    data: &CensoredDataset,
    hyper: &Hyperparams,
    cfg: &McmcConfig,
) -> Result<SelectionResult> {
    let chain = run_chain(data, hyper, cfg, 0)?;
    summarize(&[chain], 0.05)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    /// Treat every PMV as technical: rho pinned at 1, all U_i = 1.
    ForcedRhoOne,
    /// Replace PMVs with half the minimum observed value and treat all rows
    /// as observed.
    HalfMinImpute,
}

/// Replace every PMV with half the minimum observed value; the resulting
/// dataset has no missing rows and its detection limit sits at the imputed
/// value.
pub fn half_min_imputed_dataset(data: &CensoredDataset) -> Result<CensoredDataset> {
    let min_obs = data
        .min_observed()
        .ok_or_else(|| SncmError::domain("no observed values to impute from"))?;
    let fill = min_obs / 2.0;
    // with a negative minimum (e.g. standardized data), the imputed value
    // sits above some observed values; the detection limit tracks the
    // smallest value actually present
    let floor = fill.min(min_obs);
    let y: Vec<Option<f64>> = data.y.iter().map(|v| Some(v.unwrap_or(fill))).collect();
    let mut x = Vec::with_capacity(data.n() * data.p());
    for j in 0..data.p() {
        x.extend_from_slice(data.x_col(j));
    }
    let mut c = Vec::with_capacity(data.n() * data.s());
    for t in 0..data.s() {
        c.extend_from_slice(data.c_col(t));
    }
    CensoredDataset::new(y, x, data.p(), c, data.s(), floor)
}

/// Run one of the two ad-hoc comparison methods with independent Bernoulli
/// selection priors at inclusion log-odds `omega`.
pub fn run_baseline_methods(
    data: &CensoredDataset,
    which: BaselineMethod,
    omega: f64,
    cfg: &McmcConfig,
) -> Result<SelectionResult> {
    match which {
        BaselineMethod::ForcedRhoOne => {
            let mut hyper = sim_hyperparams(data, SelectionPrior::Independent { omega })?;
            hyper.fix_rho_one = true;
            fit_and_summarize(data, &hyper, cfg)
        }
        BaselineMethod::HalfMinImpute => {
            let imputed = half_min_imputed_dataset(data)?;
            let hyper = sim_hyperparams(&imputed, SelectionPrior::Independent { omega })?;
            fit_and_summarize(&imputed, &hyper, cfg)
        }
    }
}

/// Selection and estimation metrics averaged over replicates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub replicates: usize,
    pub overall_tpr: f64,
    pub overall_tpr_sd: f64,
    pub fdr: f64,
    pub fdr_sd: f64,
    /// One entry per true predictor, in index order: selection frequency.
    pub variable_tpr: Vec<f64>,
    /// Per-true-predictor mean of (beta_hat - beta); NaN when never defined.
    pub bias: Vec<f64>,
    pub rmse: Vec<f64>,
    /// Indices of the true predictors the per-variable vectors refer to.
    pub true_indices: Vec<usize>,
}

/// Score selection results against the ground truth. FDR on an empty
/// selected set counts as 0.
pub fn score(
    results: &[SelectionResult],
    truth_gamma: &[bool],
    truth_beta: &[f64],
) -> Result<MetricsReport> {
    if results.is_empty() {
        return Err(SncmError::domain("scoring needs at least one replicate"));
    }
    let true_indices: Vec<usize> = (0..truth_gamma.len()).filter(|&j| truth_gamma[j]).collect();
    if true_indices.is_empty() {
        return Err(SncmError::domain("ground truth has no true predictors"));
    }
    let n_true = true_indices.len() as f64;
    let mut tprs = Vec::with_capacity(results.len());
    let mut fdrs = Vec::with_capacity(results.len());
    let mut hit_counts = vec![0usize; true_indices.len()];
    let mut err_sums = vec![0.0f64; true_indices.len()];
    let mut err_sq_sums = vec![0.0f64; true_indices.len()];
    let mut err_counts = vec![0usize; true_indices.len()];
    for res in results {
        if res.pip.len() != truth_gamma.len() {
            return Err(SncmError::dimension(
                "selection result dimension does not match truth",
            ));
        }
        let selected: std::collections::HashSet<usize> = res.selected.iter().cloned().collect();
        let tp = true_indices.iter().filter(|j| selected.contains(j)).count();
        tprs.push(tp as f64 / n_true);
        let fp = selected.len() - tp;
        fdrs.push(if selected.is_empty() {
            0.0
        } else {
            fp as f64 / selected.len() as f64
        });
        for (k, &j) in true_indices.iter().enumerate() {
            if selected.contains(&j) {
                hit_counts[k] += 1;
            }
            if let Some(bh) = res.beta_hat[j] {
                let e = bh - truth_beta[j];
                err_sums[k] += e;
                err_sq_sums[k] += e * e;
                err_counts[k] += 1;
            }
        }
    }
    let m = results.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let sd = |v: &[f64]| {
        let mu = mean(v);
        (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0).max(1.0)).sqrt()
    };
    Ok(MetricsReport {
        replicates: results.len(),
        overall_tpr: mean(&tprs),
        overall_tpr_sd: sd(&tprs),
        fdr: mean(&fdrs),
        fdr_sd: sd(&fdrs),
        variable_tpr: hit_counts.iter().map(|&h| h as f64 / m).collect(),
        bias: (0..true_indices.len())
            .map(|k| {
                if err_counts[k] > 0 {
                    err_sums[k] / err_counts[k] as f64
                } else {
                    f64::NAN
                }
            })
            .collect(),
        rmse: (0..true_indices.len())
            .map(|k| {
                if err_counts[k] > 0 {
                    (err_sq_sums[k] / err_counts[k] as f64).sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect(),
        true_indices,
    })
}
