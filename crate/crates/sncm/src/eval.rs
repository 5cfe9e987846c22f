//! Model-fit assessment: ELPD by WAIC and by harmonic-mean importance
//! sampling from per-draw per-observation log-likelihoods, plus posterior
//! predictive sampling of the observed response.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::sn_sample;
use crate::error::{Result, SncmError};
use crate::gibbs::PosteriorChain;
use crate::model::{linear_predictor, CensoredDataset};

/// ELPD estimates with per-observation contributions. Totals equal the sums
/// of the contributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElpdReport {
    pub elpd_is: f64,
    pub elpd_waic: f64,
    pub pointwise_is: Vec<f64>,
    pub pointwise_waic: Vec<f64>,
    /// Observations whose maximum normalized importance weight exceeds 0.5;
    /// the harmonic-mean estimator is unreliable there.
    pub unstable_is_points: Vec<usize>,
}

fn check_loglik(loglik: &[Vec<f64>]) -> Result<usize> {
    if loglik.len() < 2 {
        return Err(SncmError::domain(
            "ELPD estimation needs at least two posterior draws",
        ));
    }
    let n = loglik[0].len();
    if loglik.iter().any(|row| row.len() != n) {
        return Err(SncmError::dimension("ragged log-likelihood matrix"));
    }
    Ok(n)
}

fn log_mean_exp(vals: impl Iterator<Item = f64> + Clone, count: usize) -> f64 {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = vals.map(|v| (v - m).exp()).sum();
    m + (sum / count as f64).ln()
}

/// Per-observation WAIC contribution: log mean exp(ll) minus the across-draw
/// variance of ll.
pub fn elpd_waic(loglik: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = check_loglik(loglik)?;
    let draws = loglik.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let col = loglik.iter().map(|row| row[i]);
        let lme = log_mean_exp(col.clone(), draws);
        let mean = col.clone().sum::<f64>() / draws as f64;
        let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        out.push(lme - var);
    }
    Ok(out)
}

/// Per-observation harmonic-mean (CPO) contribution: -log mean exp(-ll),
/// with indices of unstable points (max normalized weight > 0.5).
pub fn elpd_is(loglik: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<usize>)> {
    let n = check_loglik(loglik)?;
    let draws = loglik.len();
    let mut out = Vec::with_capacity(n);
    let mut unstable = Vec::new();
    for i in 0..n {
        let neg = loglik.iter().map(|row| -row[i]);
        let lme = log_mean_exp(neg.clone(), draws);
        out.push(-lme);
        // max normalized weight = exp(max(-ll) - logsumexp(-ll))
        let mx = neg.clone().fold(f64::NEG_INFINITY, f64::max);
        let lse = lme + (draws as f64).ln();
        if (mx - lse).exp() > 0.5 + 1e-9 {
            unstable.push(i);
        }
    }
    Ok((out, unstable))
}

/// Combined report from one model's pooled chains.
pub fn elpd_report(chains: &[PosteriorChain]) -> Result<ElpdReport> {
    let loglik: Vec<Vec<f64>> = chains
        .iter()
        .flat_map(|c| c.loglik.iter().cloned())
        .collect();
    let pointwise_waic = elpd_waic(&loglik)?;
    let (pointwise_is, unstable_is_points) = elpd_is(&loglik)?;
    Ok(ElpdReport {
        elpd_is: pointwise_is.iter().sum(),
        elpd_waic: pointwise_waic.iter().sum(),
        pointwise_is,
        pointwise_waic,
        unstable_is_points,
    })
}

/// One synthetic response vector drawn from the generative model at a single
/// posterior state: absence with probability 1 - rho, censoring below psi.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictiveDraw {
    /// `None` encodes a PMV (absent or censored).
    pub y: Vec<Option<f64>>,
}

/// For each of `draws_out` uniformly selected posterior states, simulate a
/// full response vector from the fitted SNCM generative model.
pub fn posterior_predictive_sample(
    chains: &[PosteriorChain],
    data: &CensoredDataset,
    draws_out: usize,
    rng: &mut impl Rng,
) -> Result<Vec<PredictiveDraw>> {
    let states: Vec<_> = chains.iter().flat_map(|c| c.draws.iter()).collect();
    if states.is_empty() {
        return Err(SncmError::domain("no posterior draws to sample from"));
    }
    let mut out = Vec::with_capacity(draws_out);
    for _ in 0..draws_out {
        let st = states[rng.random_range(0..states.len())];
        let params = st.sn_params(0.0)?;
        let mut y = Vec::with_capacity(data.n());
        for i in 0..data.n() {
            if rng.random::<f64>() >= st.rho {
                y.push(None); // biologically absent
                continue;
            }
            let mu = linear_predictor(st, data, i);
            let v = mu + sn_sample(&params, rng);
            y.push(if v < data.psi { None } else { Some(v) });
        }
        out.push(PredictiveDraw { y });
    }
    Ok(out)
}

/// Observed-fraction and observed-mean summaries of predictive draws, for
/// calibration checks against the empirical data.
pub fn predictive_summary(draws: &[PredictiveDraw]) -> (f64, f64) {
    let mut total = 0usize;
    let mut missing = 0usize;
    let mut sum = 0.0;
    for d in draws {
        for v in &d.y {
            total += 1;
            match v {
                Some(x) => sum += x,
                None => missing += 1,
            }
        }
    }
    let pmv_frac = missing as f64 / total as f64;
    let obs_mean = sum / (total - missing) as f64;
    (pmv_frac, obs_mean)
}
