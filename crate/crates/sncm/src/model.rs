//! Data structures of the skew-normal censored mixture model and its two
//! likelihoods: the observed-data mixture likelihood and the augmented
//! likelihood in terms of the latent (V, U, Z).
//!
//! Latent convention: Z_i ~ |N(0,1)| enters the mean as delta * Z_i, so the
//! error term is N(0, sigma^2) + delta * |N(0,1)|.

use serde::{Deserialize, Serialize};

use crate::distributions::{sn_cdf, sn_ln_pdf, std_normal_ln_pdf, SkewNormalParams};
use crate::error::{Result, SncmError};
use crate::mrf::{logistic, MrfPrior};

/// Responses with point-mass-value markers, predictors, confounders, and the
/// detection limit. Matrices are stored column-major.
#[derive(Debug, Clone)]
pub struct CensoredDataset {
    /// None marks a PMV.
    pub y: Vec<Option<f64>>,
    x_cols: Vec<f64>, // p columns of length n
    c_cols: Vec<f64>, // s columns of length n
    n: usize,
    p: usize,
    s: usize,
    pub psi: f64,
    pub predictor_names: Vec<String>,
    pub confounder_names: Vec<String>,
    pub response_name: String,
}

impl CensoredDataset {
    pub fn new(
        y: Vec<Option<f64>>,
        x_cols: Vec<f64>,
        p: usize,
        c_cols: Vec<f64>,
        s: usize,
        psi: f64,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(SncmError::domain("dataset must have at least one row"));
        }
        if x_cols.len() != n * p || c_cols.len() != n * s {
            return Err(SncmError::dimension(format!(
                "matrix sizes inconsistent with n={n}, p={p}, s={s}"
            )));
        }
        if !psi.is_finite() {
            return Err(SncmError::domain("detection limit must be finite"));
        }
        for (i, v) in y.iter().enumerate() {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(SncmError::domain(format!("non-finite response at row {i}")));
                }
                if *v < psi {
                    return Err(SncmError::domain(format!(
                        "observed response {v} at row {i} lies below the detection limit {psi}"
                    )));
                }
            }
        }
        if x_cols.iter().chain(c_cols.iter()).any(|v| !v.is_finite()) {
            return Err(SncmError::domain("non-finite covariate value"));
        }
        Ok(Self {
            y,
            x_cols,
            c_cols,
            n,
            p,
            s,
            psi,
            predictor_names: (0..p).map(|j| format!("x{}", j + 1)).collect(),
            confounder_names: (0..s).map(|t| format!("c{}", t + 1)).collect(),
            response_name: "y".to_string(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn s(&self) -> usize {
        self.s
    }

    #[inline]
    pub fn x(&self, i: usize, j: usize) -> f64 {
        self.x_cols[j * self.n + i]
    }

    #[inline]
    pub fn x_col(&self, j: usize) -> &[f64] {
        &self.x_cols[j * self.n..(j + 1) * self.n]
    }

    #[inline]
    pub fn c(&self, i: usize, t: usize) -> f64 {
        self.c_cols[t * self.n + i]
    }

    #[inline]
    pub fn c_col(&self, t: usize) -> &[f64] {
        &self.c_cols[t * self.n..(t + 1) * self.n]
    }

    /// W_i = 1 iff y_i is observed.
    pub fn observed(&self, i: usize) -> bool {
        self.y[i].is_some()
    }

    /// Fraction of observed responses.
    pub fn w_bar(&self) -> f64 {
        self.y.iter().filter(|v| v.is_some()).count() as f64 / self.n as f64
    }

    /// Minimum observed response, the plug-in detection-limit estimate.
    pub fn min_observed(&self) -> Option<f64> {
        self.y
            .iter()
            .flatten()
            .cloned()
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
    }
}

/// Inclusion prior: independent Bernoulli or the MRF prior over gamma.
#[derive(Debug, Clone)]
pub enum SelectionPrior {
    Independent { omega: f64 },
    Mrf(MrfPrior),
}

impl SelectionPrior {
    /// Log prior odds of gamma_j = 1 given the rest of gamma.
    #[inline]
    pub fn conditional_logit(&self, j: usize, gamma: &[bool]) -> f64 {
        match self {
            SelectionPrior::Independent { omega } => *omega,
            SelectionPrior::Mrf(prior) => prior.conditional_logit(j, gamma),
        }
    }

    pub fn conditional_inclusion_prob(&self, j: usize, gamma: &[bool]) -> f64 {
        logistic(self.conditional_logit(j, gamma))
    }
}

/// Prior hyperparameters and model variant switches.
#[derive(Debug, Clone)]
pub struct Hyperparams {
    pub nu0_sq: f64,
    pub nu_sq: f64,
    pub nud_sq: f64,
    pub lambda_sq: Vec<f64>,
    pub xi0: f64,
    pub sigma0_sq: f64,
    pub rho0: f64,
    pub rho1: f64,
    pub selection: SelectionPrior,
    /// false = normal errors (delta fixed at 0).
    pub skew_errors: bool,
    /// Treat every PMV as technical: rho fixed at 1, U fixed at 1.
    pub fix_rho_one: bool,
}

impl Hyperparams {
    pub fn validate(&self, s: usize) -> Result<()> {
        let pos = [
            ("nu0_sq", self.nu0_sq),
            ("nu_sq", self.nu_sq),
            ("nud_sq", self.nud_sq),
            ("xi0", self.xi0),
            ("sigma0_sq", self.sigma0_sq),
            ("rho0", self.rho0),
            ("rho1", self.rho1),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SncmError::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.lambda_sq.len() != s {
            return Err(SncmError::dimension(format!(
                "lambda_sq has length {}, expected s={s}",
                self.lambda_sq.len()
            )));
        }
        if self.lambda_sq.iter().any(|&v| !(v > 0.0)) {
            return Err(SncmError::domain("lambda_sq entries must be positive"));
        }
        Ok(())
    }
}

/// All latent and parameter values at one MCMC iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelState {
    pub beta0: f64,
    pub beta_star: Vec<f64>,
    pub gamma: Vec<bool>,
    pub alpha: Vec<f64>,
    pub sigma_sq: f64,
    pub delta: f64,
    pub rho: f64,
    pub v: Vec<f64>,
    pub u: Vec<bool>,
    pub z: Vec<f64>,
}

impl ModelState {
    /// Effective coefficient beta_j = gamma_j * beta*_j.
    pub fn beta(&self, j: usize) -> f64 {
        if self.gamma[j] {
            self.beta_star[j]
        } else {
            0.0
        }
    }

    pub fn model_size(&self) -> usize {
        self.gamma.iter().filter(|&&g| g).count()
    }

    pub fn sn_params(&self, location: f64) -> Result<SkewNormalParams> {
        SkewNormalParams::new(location, self.sigma_sq, self.delta)
    }

    /// Check the latent-state invariants against the data.
    pub fn check_invariants(&self, data: &CensoredDataset) -> Result<()> {
        for i in 0..data.n() {
            if let Some(y) = data.y[i] {
                if self.v[i] != y || !self.u[i] {
                    return Err(SncmError::domain(format!(
                        "observed row {i} must have V = y and U = 1"
                    )));
                }
            } else if self.u[i] && self.v[i] >= data.psi {
                return Err(SncmError::domain(format!(
                    "PMV row {i} with U = 1 must have V below the detection limit"
                )));
            }
            if !(self.z[i] > 0.0) {
                return Err(SncmError::domain(format!("Z must be positive at row {i}")));
            }
        }
        Ok(())
    }
}

/// mu_i = beta0 + sum_j gamma_j beta*_j x_ij + sum_t alpha_t c_it.
pub fn linear_predictor(state: &ModelState, data: &CensoredDataset, i: usize) -> f64 {
    let mut mu = state.beta0;
    for j in 0..data.p() {
        if state.gamma[j] {
            mu += state.beta_star[j] * data.x(i, j);
        }
    }
    for t in 0..data.s() {
        mu += state.alpha[t] * data.c(i, t);
    }
    mu
}

/// Log observed-data likelihood of row i:
/// W=1: log rho + log f_SN(y_i); W=0: log(1 - rho + rho F_SN(psi)).
/// Computed in the log domain; -inf is allowed at mixture endpoints, NaN never.
pub fn obs_loglik_i(state: &ModelState, data: &CensoredDataset, i: usize) -> Result<f64> {
    let mu = linear_predictor(state, data, i);
    obs_loglik_at(state, data, i, mu)
}

/// Same as [`obs_loglik_i`] with the linear predictor supplied by the caller
/// (the sampler maintains it incrementally).
pub fn obs_loglik_at(state: &ModelState, data: &CensoredDataset, i: usize, mu: f64) -> Result<f64> {
    let params = state.sn_params(mu)?;
    match data.y[i] {
        Some(y) => {
            if state.rho == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(state.rho.ln() + sn_ln_pdf(y, &params)?)
        }
        None => {
            let mass = 1.0 - state.rho + state.rho * sn_cdf(data.psi, &params)?;
            Ok(if mass > 0.0 { mass.ln() } else { f64::NEG_INFINITY })
        }
    }
}

/// Log augmented likelihood of row i:
/// log[(1-rho)^{1-U} rho^U] + log 2 phi(Z_i) + log phi((V_i - mu_i - delta Z_i)/sigma) - log sigma.
pub fn aug_loglik_i(state: &ModelState, data: &CensoredDataset, i: usize) -> Result<f64> {
    let z = state.z[i];
    if !(z > 0.0) {
        return Err(SncmError::domain(format!("aug_loglik requires Z > 0, got {z} at row {i}")));
    }
    let mu = linear_predictor(state, data, i);
    let sigma = state.sigma_sq.sqrt();
    let mix = if state.u[i] {
        if state.rho == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        state.rho.ln()
    } else {
        if state.rho == 1.0 {
            return Ok(f64::NEG_INFINITY);
        }
        (1.0 - state.rho).ln()
    };
    let resid = (state.v[i] - mu - state.delta * z) / sigma;
    Ok(mix
        + std::f64::consts::LN_2
        + std_normal_ln_pdf(z)
        + std_normal_ln_pdf(resid)
        - sigma.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{sn_pdf, std_normal_cdf, std_normal_pdf};
    use approx::assert_abs_diff_eq;

    fn toy_dataset() -> CensoredDataset {
        // n = 4, p = 2, s = 1; row 3 is a PMV
        let y = vec![Some(1.0), Some(2.5), Some(0.4), None];
        let x = vec![0.3, -1.0, 2.0, 0.5, 1.1, 0.0, -0.7, 0.9]; // col-major
        let c = vec![1.0, -1.0, 0.5, 0.0];
        CensoredDataset::new(y, x, 2, c, 1, 0.3).unwrap()
    }

    fn toy_state(data: &CensoredDataset) -> ModelState {
        ModelState {
            beta0: 0.5,
            beta_star: vec![2.0, -1.0],
            gamma: vec![true, false],
            alpha: vec![0.7],
            sigma_sq: 1.0,
            delta: 0.0,
            rho: 0.8,
            v: data.y.iter().map(|v| v.unwrap_or(0.0)).collect(),
            u: vec![true, true, true, false],
            z: vec![0.5; 4],
        }
    }

    #[test]
    fn dataset_validation() {
        assert!(CensoredDataset::new(vec![Some(0.1)], vec![1.0], 1, vec![], 0, 0.5).is_err());
        assert!(CensoredDataset::new(vec![], vec![], 0, vec![], 0, 0.5).is_err());
        let d = toy_dataset();
        assert_eq!(d.w_bar(), 0.75);
        assert_eq!(d.min_observed(), Some(0.4));
    }

    #[test]
    fn linear_predictor_masks_spike_coordinates() {
        let data = toy_dataset();
        let mut st = toy_state(&data);
        // gamma = (1, 0): beta*_2 masked out
        let mu0 = linear_predictor(&st, &data, 0);
        assert_abs_diff_eq!(mu0, 0.5 + 2.0 * 0.3 + 0.7 * 1.0, epsilon = 1e-12);
        // all gamma zero: beta0 + C'alpha only
        st.gamma = vec![false, false];
        let mu0 = linear_predictor(&st, &data, 0);
        assert_abs_diff_eq!(mu0, 0.5 + 0.7, epsilon = 1e-12);
        // all coefficients zero -> beta0
        st.alpha = vec![0.0];
        assert_abs_diff_eq!(linear_predictor(&st, &data, 0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn linear_predictor_matches_naive_dense_product() {
        let data = toy_dataset();
        let st = toy_state(&data);
        for i in 0..data.n() {
            let mut mu = st.beta0;
            for j in 0..data.p() {
                mu += st.beta(j) * data.x(i, j);
            }
            for t in 0..data.s() {
                mu += st.alpha[t] * data.c(i, t);
            }
            assert_abs_diff_eq!(linear_predictor(&st, &data, i), mu, epsilon = 1e-12);
        }
    }

    #[test]
    fn obs_loglik_mixture_cases() {
        // PMV row with rho = 0.8, mu = 0, sigma^2 = 1, delta = 0, psi = -1:
        // log(0.2 + 0.8 * Phi(-1)) = log(0.32695...)
        let y = vec![Some(0.5), None];
        let x = vec![0.0, 0.0];
        let data = CensoredDataset::new(y, x, 1, vec![], 0, -1.0).unwrap();
        let mut st = ModelState {
            beta0: 0.0,
            beta_star: vec![0.0],
            gamma: vec![false],
            alpha: vec![],
            sigma_sq: 1.0,
            delta: 0.0,
            rho: 0.8,
            v: vec![0.5, -2.0],
            u: vec![true, true],
            z: vec![0.1, 0.1],
        };
        let expect = (0.2 + 0.8 * std_normal_cdf(-1.0)).ln();
        assert_abs_diff_eq!(obs_loglik_i(&st, &data, 1).unwrap(), expect, epsilon = 1e-9);
        assert_abs_diff_eq!(expect, 0.32695_f64.ln(), epsilon = 1e-4);
        // W = 1, rho = 1: pure censored-model limit log f_SN(y)
        st.rho = 1.0;
        let params = SkewNormalParams::new(0.0, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(
            obs_loglik_i(&st, &data, 0).unwrap(),
            sn_pdf(0.5, &params).unwrap().ln(),
            epsilon = 1e-12
        );
        // W = 0, rho = 0: PMV fully explained by absence
        st.rho = 0.0;
        assert_abs_diff_eq!(obs_loglik_i(&st, &data, 1).unwrap(), 0.0, epsilon = 1e-12);
        // W = 1, rho = 0 is impossible: -inf, never NaN
        assert_eq!(obs_loglik_i(&st, &data, 0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn obs_loglik_invariant_to_inactive_beta_star() {
        let data = toy_dataset();
        let mut st = toy_state(&data);
        let base: Vec<f64> = (0..4).map(|i| obs_loglik_i(&st, &data, i).unwrap()).collect();
        st.beta_star[1] = 123.0; // gamma_2 = 0
        for i in 0..4 {
            assert_abs_diff_eq!(obs_loglik_i(&st, &data, i).unwrap(), base[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn aug_loglik_cases() {
        let data = toy_dataset();
        let mut st = toy_state(&data);
        st.rho = 0.5;
        // U toggling changes the log-likelihood by exactly log(rho/(1-rho)) = 0
        let with_u = aug_loglik_i(&st, &data, 3).unwrap();
        st.u[3] = true;
        st.v[3] = 0.1;
        let ll_u1 = aug_loglik_i(&st, &data, 3).unwrap();
        st.u[3] = false;
        let ll_u0 = aug_loglik_i(&st, &data, 3).unwrap();
        assert_abs_diff_eq!(ll_u1, ll_u0, epsilon = 1e-12);
        let _ = with_u;
        // delta = 0, U = 1, rho = 1: log 2 phi(Z) + normal log-density of residual
        st.rho = 1.0;
        st.u[0] = true;
        let mu = linear_predictor(&st, &data, 0);
        let expect = (2.0 * std_normal_pdf(st.z[0])).ln()
            + std_normal_pdf(st.v[0] - mu).ln();
        assert_abs_diff_eq!(aug_loglik_i(&st, &data, 0).unwrap(), expect, epsilon = 1e-12);
        // Z <= 0 is a domain error
        st.z[0] = -0.1;
        assert!(aug_loglik_i(&st, &data, 0).is_err());
    }

    #[test]
    fn aug_loglik_marginalizes_to_observed_loglik() {
        // integrating exp(aug) over z > 0 recovers rho * f_SN(v) for an
        // uncensored point
        let y = vec![Some(1.2)];
        let data = CensoredDataset::new(y, vec![0.0], 1, vec![], 0, 0.0).unwrap();
        let mut st = ModelState {
            beta0: 0.3,
            beta_star: vec![0.0],
            gamma: vec![false],
            alpha: vec![],
            sigma_sq: 0.8,
            delta: 1.7,
            rho: 0.6,
            v: vec![1.2],
            u: vec![true],
            z: vec![0.0],
        };
        let mut total = 0.0;
        let dz = 1e-4;
        let mut z = dz / 2.0;
        while z < 9.0 {
            st.z[0] = z;
            total += aug_loglik_i(&st, &data, 0).unwrap().exp() * dz;
            z += dz;
        }
        st.z[0] = 1.0;
        let expect = obs_loglik_i(&st, &data, 0).unwrap().exp();
        assert_abs_diff_eq!(total, expect, epsilon = 1e-6);
    }

    #[test]
    fn aug_loglik_marginalizes_for_pmv_row() {
        // summing over U and integrating over (Z, V) reproduces the
        // observed-data likelihood of a PMV row within quadrature tolerance
        let y = vec![None];
        let data = CensoredDataset::new(y, vec![0.0], 1, vec![], 0, 0.4).unwrap();
        let mut st = ModelState {
            beta0: 0.2,
            beta_star: vec![0.0],
            gamma: vec![false],
            alpha: vec![],
            sigma_sq: 1.1,
            delta: 0.9,
            rho: 0.7,
            v: vec![0.0],
            u: vec![true],
            z: vec![1.0],
        };
        let dz = 2e-3;
        let dv = 2e-3;
        // U = 0 branch: integral over all v and z > 0 of the augmented density = 1 - rho
        // U = 1 branch: integral over v < psi
        let mut u1 = 0.0;
        let mut z = dz / 2.0;
        while z < 8.0 {
            st.z[0] = z;
            st.u[0] = true;
            let mut v = data.psi - 10.0 + dv / 2.0;
            while v < data.psi {
                st.v[0] = v;
                u1 += aug_loglik_i(&st, &data, 0).unwrap().exp() * dz * dv;
                v += dv;
            }
            z += dz;
        }
        let sn = SkewNormalParams::new(0.2, 1.1, 0.9).unwrap();
        let expect_u1 = 0.7 * sn_cdf(0.4, &sn).unwrap();
        assert_abs_diff_eq!(u1, expect_u1, epsilon = 1e-4);
        // total mixture mass matches the observed likelihood
        st.u[0] = false;
        let total = u1 + (1.0 - 0.7);
        st.v[0] = 0.0;
        st.z[0] = 1.0;
        let obs = obs_loglik_i(&st, &data, 0).unwrap().exp();
        assert_abs_diff_eq!(total, obs, epsilon = 1e-4);
    }
}
