//! Posterior summarization: inclusion probabilities, Bayesian-FDR selection,
//! conditional coefficient estimates, convergence diagnostics, and the
//! preprocessing recipes (standardize-with-PMV, empirical slab variance,
//! adaptive Beta prior on the mixture weight).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SncmError};
use crate::gibbs::PosteriorChain;
use crate::model::CensoredDataset;

/// Variable-selection summary of one fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    pub pip: Vec<f64>,
    /// `None` means no nonempty selected set met the FDR target.
    pub threshold: Option<f64>,
    pub selected: Vec<usize>,
    /// Conditional posterior means E[beta*_j | gamma_j = 1]; `None` when the
    /// coordinate was never included (undefined, never reported as 0).
    pub beta_hat: Vec<Option<f64>>,
    pub alpha_hat: Vec<f64>,
    pub beta0_hat: f64,
    pub sigma_sq_hat: f64,
    pub delta_hat: f64,
    pub rho_hat: f64,
}

fn pooled_draws(chains: &[PosteriorChain]) -> Result<usize> {
    let total: usize = chains.iter().map(|c| c.n_draws()).sum();
    if total == 0 {
        return Err(SncmError::domain("no posterior draws to summarize"));
    }
    Ok(total)
}

/// Posterior inclusion probabilities: per-coordinate mean of gamma over the
/// pooled draws of all chains.
pub fn compute_pips(chains: &[PosteriorChain]) -> Result<Vec<f64>> {
    let total = pooled_draws(chains)?;
    let p = chains[0].draws[0].gamma.len();
    let mut counts = vec![0usize; p];
    for chain in chains {
        for st in &chain.draws {
            for (c, &g) in counts.iter_mut().zip(&st.gamma) {
                *c += usize::from(g);
            }
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// The smallest threshold t (scanning unique PIP values descending by
/// selected-set size) such that the mean of (1 - pip) over {j : pip_j >= t}
/// stays at or below `target`. Returns `None` when no nonempty set qualifies.
pub fn bayesian_fdr_threshold(pips: &[f64], target: f64) -> Result<Option<f64>> {
    if !(target > 0.0 && target < 1.0) {
        return Err(SncmError::domain(format!(
            "FDR target must lie in (0, 1), got {target}"
        )));
    }
    if pips.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(SncmError::domain("PIPs must lie in [0, 1]"));
    }
    let mut unique: Vec<f64> = pips.to_vec();
    unique.sort_by(|a, b| b.partial_cmp(a).unwrap());
    unique.dedup();
    let mut best = None;
    for &t in &unique {
        let sel: Vec<f64> = pips.iter().cloned().filter(|&p| p >= t).collect();
        let mean_complement = sel.iter().map(|p| 1.0 - p).sum::<f64>() / sel.len() as f64;
        if mean_complement <= target {
            best = Some(t); // keep scanning: lower t = larger set
        }
    }
    Ok(best)
}

/// Conditional posterior means E[beta*_j | gamma_j = 1] over pooled draws;
/// `None` where gamma_j never equals 1.
pub fn conditional_beta_estimates(chains: &[PosteriorChain]) -> Result<Vec<Option<f64>>> {
    pooled_draws(chains)?;
    let p = chains[0].draws[0].gamma.len();
    let mut sums = vec![0.0f64; p];
    let mut counts = vec![0usize; p];
    for chain in chains {
        for st in &chain.draws {
            for j in 0..p {
                if st.gamma[j] {
                    sums[j] += st.beta_star[j];
                    counts[j] += 1;
                }
            }
        }
    }
    Ok((0..p)
        .map(|j| (counts[j] > 0).then(|| sums[j] / counts[j] as f64))
        .collect())
}

/// Full selection summary at the given Bayesian FDR target.
pub fn summarize(chains: &[PosteriorChain], target_fdr: f64) -> Result<SelectionResult> {
    let total = pooled_draws(chains)? as f64;
    let pip = compute_pips(chains)?;
    let threshold = bayesian_fdr_threshold(&pip, target_fdr)?;
    let selected = match threshold {
        Some(t) => (0..pip.len()).filter(|&j| pip[j] >= t).collect(),
        None => Vec::new(),
    };
    let beta_hat = conditional_beta_estimates(chains)?;
    let s = chains[0].draws[0].alpha.len();
    let mut alpha_hat = vec![0.0; s];
    let (mut b0, mut s2, mut dl, mut rh) = (0.0, 0.0, 0.0, 0.0);
    for chain in chains {
        for st in &chain.draws {
            for (a, &x) in alpha_hat.iter_mut().zip(&st.alpha) {
                *a += x;
            }
            b0 += st.beta0;
            s2 += st.sigma_sq;
            dl += st.delta;
            rh += st.rho;
        }
    }
    for a in alpha_hat.iter_mut() {
        *a /= total;
    }
    Ok(SelectionResult {
        pip,
        threshold,
        selected,
        beta_hat,
        alpha_hat,
        beta0_hat: b0 / total,
        sigma_sq_hat: s2 / total,
        delta_hat: dl / total,
        rho_hat: rh / total,
    })
}

/// Per-parameter convergence summary across chains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub mean: f64,
    /// Split-chain potential scale reduction, clamped below at 1.
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub params: Vec<ParamDiagnostics>,
}

impl ConvergenceReport {
    pub fn flagged(&self, rhat_limit: f64) -> Vec<&ParamDiagnostics> {
        self.params.iter().filter(|p| p.rhat > rhat_limit).collect()
    }
}

fn scalar_series(chains: &[PosteriorChain], f: impl Fn(&crate::model::ModelState) -> f64) -> Vec<Vec<f64>> {
    chains
        .iter()
        .map(|c| c.draws.iter().map(&f).collect())
        .collect()
}

/// Split-chain potential-scale-reduction statistic. Each chain is halved and
/// the halves treated as separate sequences; values below 1 (pure sampling
/// noise) are clamped to exactly 1.
pub fn split_rhat(series: &[Vec<f64>]) -> f64 {
    let mut seqs: Vec<&[f64]> = Vec::with_capacity(series.len() * 2);
    for s in series {
        let half = s.len() / 2;
        if half == 0 {
            return f64::NAN;
        }
        seqs.push(&s[..half]);
        seqs.push(&s[half..2 * half]);
    }
    let n = seqs[0].len() as f64;
    let m = seqs.len() as f64;
    let means: Vec<f64> = seqs.iter().map(|s| s.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = if m > 1.0 {
        n * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let w = seqs
        .iter()
        .zip(&means)
        .map(|(s, mu)| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt().max(1.0)
}

/// Effective sample size via chain-averaged autocovariances with Geyer's
/// initial-positive-sequence truncation.
pub fn effective_sample_size(series: &[Vec<f64>]) -> f64 {
    let m = series.len() as f64;
    let n = series.iter().map(|s| s.len()).min().unwrap_or(0);
    if n < 4 {
        return f64::NAN;
    }
    let nf = n as f64;
    let means: Vec<f64> = series.iter().map(|s| s[..n].iter().sum::<f64>() / nf).collect();
    let vars: Vec<f64> = series
        .iter()
        .zip(&means)
        .map(|(s, mu)| s[..n].iter().map(|x| (x - mu).powi(2)).sum::<f64>() / nf)
        .collect();
    let w = vars.iter().sum::<f64>() / m;
    let b_over_n = if series.len() > 1 {
        let grand = means.iter().sum::<f64>() / m;
        means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if var_plus == 0.0 {
        return f64::NAN;
    }
    // chain-averaged autocovariance at lag t
    let acov = |t: usize| -> f64 {
        series
            .iter()
            .zip(&means)
            .map(|(s, mu)| {
                (0..n - t)
                    .map(|i| (s[i] - mu) * (s[i + t] - mu))
                    .sum::<f64>()
                    / nf
            })
            .sum::<f64>()
            / m
    };
    let rho = |t: usize| 1.0 - (w - acov(t)) / var_plus;
    let mut tau = 1.0;
    let mut t = 1;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        t += 2;
    }
    m * nf / tau
}

/// Convergence diagnostics for the scalar model parameters (and model size).
pub fn convergence_report(chains: &[PosteriorChain]) -> Result<ConvergenceReport> {
    if chains.len() < 2 {
        return Err(SncmError::domain(
            "convergence diagnostics need at least two chains",
        ));
    }
    pooled_draws(chains)?;
    let tracked: Vec<(&str, Box<dyn Fn(&crate::model::ModelState) -> f64>)> = vec![
        ("beta0", Box::new(|st| st.beta0)),
        ("sigma_sq", Box::new(|st| st.sigma_sq)),
        ("delta", Box::new(|st| st.delta)),
        ("rho", Box::new(|st| st.rho)),
        ("model_size", Box::new(|st| st.model_size() as f64)),
    ];
    let mut params = Vec::with_capacity(tracked.len());
    for (name, f) in tracked {
        let series = scalar_series(chains, f);
        let total: usize = series.iter().map(|s| s.len()).sum();
        let mean = series.iter().flatten().sum::<f64>() / total as f64;
        params.push(ParamDiagnostics {
            name: name.to_string(),
            mean,
            rhat: split_rhat(&series),
            ess: effective_sample_size(&series),
        });
    }
    Ok(ConvergenceReport { params })
}

/// Trace data for external plotting: one row per (chain, draw) with the
/// tracked scalar parameters.
pub fn write_trace_csv<W: std::io::Write>(chains: &[PosteriorChain], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["chain", "draw", "beta0", "sigma_sq", "delta", "rho", "model_size"])?;
    for (c, chain) in chains.iter().enumerate() {
        for (d, st) in chain.draws.iter().enumerate() {
            wtr.write_record(&[
                c.to_string(),
                d.to_string(),
                format!("{:.17e}", st.beta0),
                format!("{:.17e}", st.sigma_sq),
                format!("{:.17e}", st.delta),
                format!("{:.17e}", st.rho),
                st.model_size().to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(std::io::Error::from)?;
    Ok(())
}

/// Affine transform applied to the response during standardization, recorded
/// so fitted coefficients can be mapped back to the original scale.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResponseTransform {
    pub center: f64,
    pub scale: f64,
}

impl ResponseTransform {
    pub fn forward(&self, y: f64) -> f64 {
        (y - self.center) / self.scale
    }
    pub fn inverse(&self, z: f64) -> f64 {
        z * self.scale + self.center
    }
    /// Map a slope fitted on the standardized response back to the original
    /// response scale.
    pub fn slope_to_original(&self, slope: f64) -> f64 {
        slope * self.scale
    }
}

fn half_min_imputed(data: &CensoredDataset) -> Result<Vec<f64>> {
    let min_obs = data.min_observed().ok_or_else(|| {
        SncmError::domain("cannot impute: the response has no observed values")
    })?;
    Ok(data
        .y
        .iter()
        .map(|v| v.unwrap_or(min_obs / 2.0))
        .collect())
}

/// Standardize the response using constants computed on the half-minimum
/// imputed vector; observed values and the detection limit get the same
/// affine map, and PMVs are restored to missing afterwards.
pub fn standardize_with_pmv(data: &CensoredDataset) -> Result<(CensoredDataset, ResponseTransform)> {
    let imputed = half_min_imputed(data)?;
    let n = imputed.len() as f64;
    let center = imputed.iter().sum::<f64>() / n;
    let var = imputed.iter().map(|v| (v - center).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    if var <= 0.0 {
        return Err(SncmError::domain(
            "zero variance after half-minimum imputation; response is constant",
        ));
    }
    let t = ResponseTransform {
        center,
        scale: var.sqrt(),
    };
    let y: Vec<Option<f64>> = data.y.iter().map(|v| v.map(|y| t.forward(y))).collect();
    let mut x = Vec::with_capacity(data.n() * data.p());
    for j in 0..data.p() {
        x.extend_from_slice(data.x_col(j));
    }
    let mut c = Vec::with_capacity(data.n() * data.s());
    for tcol in 0..data.s() {
        c.extend_from_slice(data.c_col(tcol));
    }
    let out = CensoredDataset::new(y, x, data.p(), c, data.s(), t.forward(data.psi))?;
    Ok((out, t))
}

/// The empirical variance of the p single-predictor least-squares slopes
/// (each regression adjusting for the confounders) fit to the half-minimum
/// imputed, standardized response.
pub fn empirical_slab_variance(data: &CensoredDataset) -> Result<f64> {
    use nalgebra::{DMatrix, DVector};
    if data.p() < 2 {
        return Err(SncmError::domain(
            "empirical slab variance needs at least two predictors",
        ));
    }
    let (std_data, _) = standardize_with_pmv(data)?;
    let y_imp = half_min_imputed(&std_data)?;
    let n = data.n();
    let s = data.s();
    let d = 2 + s;
    let yv = DVector::from_vec(y_imp);
    let mut slopes = Vec::with_capacity(data.p());
    for j in 0..data.p() {
        let mut design = DMatrix::<f64>::zeros(n, d);
        for i in 0..n {
            design[(i, 0)] = 1.0;
            design[(i, 1)] = data.x(i, j);
            for t in 0..s {
                design[(i, 2 + t)] = data.c(i, t);
            }
        }
        let xtx = design.transpose() * &design;
        let xty = design.transpose() * &yv;
        let coef = xtx.lu().solve(&xty).ok_or_else(|| {
            SncmError::domain(format!(
                "degenerate design for predictor {j}: single-predictor regression is singular"
            ))
        })?;
        slopes.push(coef[1]);
    }
    let m = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let var = slopes.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (slopes.len() - 1) as f64;
    if var <= 0.0 || !var.is_finite() {
        return Err(SncmError::domain(
            "degenerate predictors: slope estimates have no spread",
        ));
    }
    Ok(var)
}

/// (rho0, rho1) = (5 sqrt(W-bar), 5 (1 - sqrt(W-bar))) with W-bar the fraction
/// of observed responses; rho1 floored at 0.01 to keep the Beta proper.
pub fn adaptive_beta_prior(data: &CensoredDataset) -> Result<(f64, f64)> {
    let w_bar = data.w_bar();
    if w_bar == 0.0 {
        return Err(SncmError::domain(
            "refusing to fit: every response value is a PMV",
        ));
    }
    let root = w_bar.sqrt();
    Ok((5.0 * root, (5.0 * (1.0 - root)).max(0.01)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::McmcConfig;
    use crate::model::ModelState;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn chain_from_gammas(gammas: Vec<Vec<bool>>, betas: Vec<Vec<f64>>) -> PosteriorChain {
        let draws = gammas
            .into_iter()
            .zip(betas)
            .map(|(gamma, beta_star)| ModelState {
                beta0: 0.0,
                beta_star,
                gamma,
                alpha: vec![],
                sigma_sq: 1.0,
                delta: 0.0,
                rho: 1.0,
                v: vec![],
                u: vec![],
                z: vec![],
            })
            .collect();
        PosteriorChain {
            draws,
            loglik: vec![],
            config: McmcConfig {
                iterations: 1,
                burn_in: 0,
                thin: 1,
                chains: 1,
                seed: 0,
            },
            stream: 0,
        }
    }

    #[test]
    fn pips_constant_and_alternating() {
        let chain = chain_from_gammas(
            vec![vec![true, false], vec![true, true], vec![true, false], vec![true, true]],
            vec![vec![0.0; 2]; 4],
        );
        let pips = compute_pips(&[chain]).unwrap();
        assert_eq!(pips[0], 1.0);
        assert_eq!(pips[1], 0.5);
    }

    #[test]
    fn pips_pool_unequal_chains_by_draw_count() {
        let a = chain_from_gammas(vec![vec![true]; 3], vec![vec![0.0]; 3]);
        let b = chain_from_gammas(vec![vec![false]; 1], vec![vec![0.0]; 1]);
        let pips = compute_pips(&[a.clone(), b.clone()]).unwrap();
        // direct recount over the concatenation
        let concat: Vec<bool> = a
            .draws
            .iter()
            .chain(b.draws.iter())
            .map(|st| st.gamma[0])
            .collect();
        let direct = concat.iter().filter(|&&g| g).count() as f64 / concat.len() as f64;
        assert_eq!(pips[0], direct);
        assert_eq!(pips[0], 0.75);
    }

    #[test]
    fn fdr_threshold_spec_examples() {
        let t = bayesian_fdr_threshold(&[0.99, 0.98, 0.90, 0.50], 0.05)
            .unwrap()
            .unwrap();
        assert_eq!(t, 0.90); // top 3: mean complement 0.0433; adding 0.50 -> 0.1575
        assert_eq!(
            bayesian_fdr_threshold(&[1.0, 1.0, 1.0], 0.05).unwrap().unwrap(),
            1.0
        );
        assert!(bayesian_fdr_threshold(&[0.5, 0.5], 0.05).unwrap().is_none());
        assert!(bayesian_fdr_threshold(&[0.5], 1.5).is_err());
    }

    #[test]
    fn fdr_threshold_matches_prefix_brute_force_and_is_monotone() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = rng.random_range(1..8);
            let pips: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let target = rng.random_range(0.01..0.5);
            // brute force over every prefix of the descending unique values
            let mut unique = pips.clone();
            unique.sort_by(|a, b| b.partial_cmp(a).unwrap());
            unique.dedup();
            let mut best: Option<f64> = None;
            for &t in &unique {
                let sel: Vec<f64> = pips.iter().cloned().filter(|&p| p >= t).collect();
                if sel.iter().map(|p| 1.0 - p).sum::<f64>() / sel.len() as f64 <= target {
                    best = Some(t);
                }
            }
            assert_eq!(bayesian_fdr_threshold(&pips, target).unwrap(), best);
            // monotone: larger target never shrinks the selected set
            let loose = bayesian_fdr_threshold(&pips, (target + 0.3).min(0.99)).unwrap();
            let count = |t: Option<f64>| match t {
                Some(t) => pips.iter().filter(|&&p| p >= t).count(),
                None => 0,
            };
            assert!(count(loose) >= count(best));
        }
    }

    #[test]
    fn conditional_beta_discards_prior_draws() {
        // included half the time with beta* = 2 there, prior noise elsewhere
        let gammas = vec![vec![true], vec![false], vec![true], vec![false]];
        let betas = vec![vec![2.0], vec![-7.3], vec![2.0], vec![11.0]];
        let chain = chain_from_gammas(gammas, betas);
        let est = conditional_beta_estimates(&[chain]).unwrap();
        assert_eq!(est[0], Some(2.0));
    }

    #[test]
    fn conditional_beta_never_included_is_missing() {
        let chain = chain_from_gammas(vec![vec![false]; 5], vec![vec![3.0]; 5]);
        assert_eq!(conditional_beta_estimates(&[chain]).unwrap()[0], None);
    }

    #[test]
    fn conditional_beta_matches_hand_filter() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let gammas: Vec<Vec<bool>> = (0..200).map(|_| vec![rng.random::<bool>()]).collect();
        let betas: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.sample::<f64, _>(StandardNormal)])
            .collect();
        let hand: Vec<f64> = gammas
            .iter()
            .zip(&betas)
            .filter(|(g, _)| g[0])
            .map(|(_, b)| b[0])
            .collect();
        let expect = hand.iter().sum::<f64>() / hand.len() as f64;
        let chain = chain_from_gammas(gammas, betas);
        let est = conditional_beta_estimates(&[chain]).unwrap();
        assert_abs_diff_eq!(est[0].unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn rhat_identical_chains_is_one() {
        // both halves of each chain identical, chains identical: every
        // between-sequence component vanishes
        let half: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let chain: Vec<f64> = half.iter().chain(half.iter()).cloned().collect();
        let series = vec![chain.clone(), chain];
        assert_eq!(split_rhat(&series), 1.0);
    }

    #[test]
    fn rhat_flags_different_means() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..500)
            .map(|_| 3.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        assert!(split_rhat(&[a, b]) > 1.1);
    }

    #[test]
    fn ess_white_noise_near_n() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let n = 4000;
        let series: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let ess = effective_sample_size(&series);
        let total = 2.0 * n as f64;
        assert!(ess > 0.85 * total && ess < 1.15 * total, "ESS {ess}");
    }

    fn data_with_pmv() -> CensoredDataset {
        // y = {2, 4, PMV}, psi = 2
        CensoredDataset::new(
            vec![Some(2.0), Some(4.0), None],
            vec![0.1, 0.2, 0.3],
            1,
            vec![],
            0,
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn standardize_hand_example() {
        let data = data_with_pmv();
        let (out, t) = standardize_with_pmv(&data).unwrap();
        // imputed {2, 4, 1}: mean 7/3
        assert_abs_diff_eq!(t.center, 7.0 / 3.0, epsilon = 1e-12);
        let ss = (2.0f64 - 7.0 / 3.0).powi(2) + (4.0f64 - 7.0 / 3.0).powi(2) + (1.0f64 - 7.0 / 3.0).powi(2);
        let sd = (ss / 2.0).sqrt(); // sample variance of the imputed vector
        assert_abs_diff_eq!(t.scale, sd, epsilon = 1e-12);
        assert_eq!(out.y[2], None); // PMV restored
        assert_abs_diff_eq!(out.y[0].unwrap(), (2.0 - 7.0 / 3.0) / sd, epsilon = 1e-12);
        assert_abs_diff_eq!(out.psi, (2.0 - 7.0 / 3.0) / sd, epsilon = 1e-12);
        // W pattern preserved, observed values >= transformed psi
        for i in 0..3 {
            assert_eq!(out.observed(i), data.observed(i));
            if let Some(y) = out.y[i] {
                assert!(y >= out.psi);
            }
        }
        // round trip
        assert_abs_diff_eq!(t.inverse(t.forward(4.0)), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn standardize_without_pmv_is_plain_zscore() {
        let data = CensoredDataset::new(
            vec![Some(1.0), Some(2.0), Some(3.0)],
            vec![0.0; 3],
            1,
            vec![],
            0,
            0.5,
        )
        .unwrap();
        let (_, t) = standardize_with_pmv(&data).unwrap();
        assert_abs_diff_eq!(t.center, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.scale, 1.0, epsilon = 1e-12); // sample sd of {1,2,3}
    }

    #[test]
    fn standardize_constant_response_errors() {
        let data = CensoredDataset::new(
            vec![Some(3.0), Some(3.0)],
            vec![0.0; 2],
            1,
            vec![],
            0,
            1.0,
        )
        .unwrap();
        assert!(standardize_with_pmv(&data).is_err());
    }

    #[test]
    fn slab_variance_orthonormal_design() {
        // orthogonal columns with unit norms: slope_j solves the 2x2 system
        // with the intercept; with centered columns it reduces to x_j' y
        let n = 4;
        let x = vec![
            0.5, 0.5, -0.5, -0.5, // column 1
            0.5, -0.5, 0.5, -0.5, // column 2
        ];
        let yv = [1.0, 2.0, 3.0, 5.0];
        let y: Vec<Option<f64>> = yv.iter().map(|&v| Some(v)).collect();
        let data = CensoredDataset::new(y, x.clone(), 2, vec![], 0, 0.0).unwrap();
        let nu2 = empirical_slab_variance(&data).unwrap();
        // oracle by hand on the standardized response
        let mean = yv.iter().sum::<f64>() / n as f64;
        let sd = (yv.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let ys: Vec<f64> = yv.iter().map(|v| (v - mean) / sd).collect();
        let slopes: Vec<f64> = (0..2)
            .map(|j| (0..n).map(|i| x[j * n + i] * ys[i]).sum::<f64>()) // ||col||^2 = 1
            .collect();
        let sm = slopes.iter().sum::<f64>() / 2.0;
        let expect = slopes.iter().map(|b| (b - sm).powi(2)).sum::<f64>();
        assert_abs_diff_eq!(nu2, expect, epsilon = 1e-10);
    }

    #[test]
    fn slab_variance_identical_predictors_errors() {
        let x = vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
        let data = CensoredDataset::new(
            vec![Some(1.0), Some(2.0), Some(4.0)],
            x,
            2,
            vec![],
            0,
            0.0,
        )
        .unwrap();
        assert!(empirical_slab_variance(&data).is_err());
    }

    #[test]
    fn slab_variance_null_data_positive() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 100;
        let p = 8;
        let x: Vec<f64> = (0..n * p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<Option<f64>> = (0..n)
            .map(|_| Some(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let psi = y.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        let data = CensoredDataset::new(y, x, p, vec![], 0, psi).unwrap();
        let nu2 = empirical_slab_variance(&data).unwrap();
        assert!(nu2 > 0.0 && nu2 < 0.1, "null slab variance {nu2}");
    }

    #[test]
    fn adaptive_prior_examples() {
        let make = |n_obs: usize, n_pmv: usize| {
            let mut y: Vec<Option<f64>> = vec![Some(1.0); n_obs];
            y.extend(std::iter::repeat(None).take(n_pmv));
            let n = n_obs + n_pmv;
            CensoredDataset::new(y, vec![0.0; n], 1, vec![], 0, 0.5).unwrap()
        };
        let (r0, r1) = adaptive_beta_prior(&make(16, 9)).unwrap(); // W-bar = 0.64
        assert_abs_diff_eq!(r0, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r1, 1.0, epsilon = 1e-12);
        let (r0, r1) = adaptive_beta_prior(&make(10, 0)).unwrap(); // W-bar = 1
        assert_abs_diff_eq!(r0, 5.0, epsilon = 1e-12);
        assert_eq!(r1, 0.01);
        let (r0, r1) = adaptive_beta_prior(&make(4, 12)).unwrap(); // W-bar = 0.25
        assert_abs_diff_eq!(r0, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r1, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn summarize_selection_consistency() {
        let gammas = vec![
            vec![true, true, false],
            vec![true, true, false],
            vec![true, false, false],
            vec![true, true, true],
        ];
        let betas = vec![vec![1.0, 2.0, 0.0]; 4];
        let chain = chain_from_gammas(gammas, betas);
        let res = summarize(&[chain], 0.3).unwrap();
        assert_eq!(res.pip, vec![1.0, 0.75, 0.25]);
        if let Some(t) = res.threshold {
            for j in 0..3 {
                assert_eq!(res.selected.contains(&j), res.pip[j] >= t);
            }
        }
        assert_eq!(res.beta_hat[0], Some(1.0));
    }
}
