//! Markov random field prior over inclusion vectors:
//! P(gamma) proportional to exp(omega * sum gamma_j + eta * gamma' R gamma),
//! with prior-only Gibbs sampling and the percentile-matching eta selector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, SncmError};
use crate::relmatrix::RelationshipMatrix;

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// MRF prior with sparse neighbor lists derived from R.
#[derive(Debug, Clone)]
pub struct MrfPrior {
    pub omega: f64,
    pub eta: f64,
    p: usize,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl MrfPrior {
    pub fn new(omega: f64, eta: f64, r: &RelationshipMatrix) -> Result<Self> {
        if !(eta >= 0.0) {
            return Err(SncmError::domain(format!("eta must be non-negative, got {eta}")));
        }
        Ok(Self {
            omega,
            eta,
            p: r.dim(),
            neighbors: r.neighbor_lists(),
        })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    fn check_dim(&self, gamma: &[bool]) -> Result<()> {
        if gamma.len() != self.p {
            return Err(SncmError::dimension(format!(
                "gamma has length {}, prior expects {}",
                gamma.len(),
                self.p
            )));
        }
        Ok(())
    }

    /// omega * sum gamma_j + eta * gamma' R gamma (each pair counted twice in
    /// the quadratic form, matching the matrix expression).
    pub fn log_prior_unnorm(&self, gamma: &[bool]) -> Result<f64> {
        self.check_dim(gamma)?;
        let k = gamma.iter().filter(|&&g| g).count() as f64;
        let mut quad = 0.0;
        if self.eta > 0.0 {
            for (j, &gj) in gamma.iter().enumerate() {
                if gj {
                    for &(j2, r) in &self.neighbors[j] {
                        if gamma[j2] {
                            quad += r;
                        }
                    }
                }
            }
        }
        Ok(self.omega * k + self.eta * quad)
    }

    /// logit^{-1}(omega + 2 eta sum_{j' != j} r_{j,j'} gamma_{j'}).
    pub fn conditional_inclusion_prob(&self, j: usize, gamma: &[bool]) -> Result<f64> {
        self.check_dim(gamma)?;
        Ok(logistic(self.conditional_logit(j, &gamma)))
    }

    #[inline]
    pub(crate) fn conditional_logit(&self, j: usize, gamma: &[bool]) -> f64 {
        let mut s = 0.0;
        if self.eta > 0.0 {
            for &(j2, r) in &self.neighbors[j] {
                if gamma[j2] {
                    s += r;
                }
            }
        }
        self.omega + 2.0 * self.eta * s
    }

    /// Prior-only systematic-scan Gibbs chain; one sweep per draw.
    pub fn sample_prior<R: Rng + ?Sized>(
        &self,
        draws: usize,
        burn_in: usize,
        rng: &mut R,
    ) -> Vec<Vec<bool>> {
        let mut gamma = vec![false; self.p];
        let mut out = Vec::with_capacity(draws);
        for it in 0..burn_in + draws {
            self.sweep(&mut gamma, rng);
            if it >= burn_in {
                out.push(gamma.clone());
            }
        }
        out
    }

    fn sweep<R: Rng + ?Sized>(&self, gamma: &mut [bool], rng: &mut R) {
        for j in 0..self.p {
            let pj = logistic(self.conditional_logit(j, &gamma));
            gamma[j] = rng.random::<f64>() < pj;
        }
    }

    fn sample_model_sizes<R: Rng + ?Sized>(
        &self,
        draws: usize,
        burn_in: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        let mut gamma = vec![false; self.p];
        let mut size = 0usize;
        let mut out = Vec::with_capacity(draws);
        for it in 0..burn_in + draws {
            for j in 0..self.p {
                let pj = logistic(self.conditional_logit(j, &gamma));
                let new = rng.random::<f64>() < pj;
                if new != gamma[j] {
                    size = if new { size + 1 } else { size - 1 };
                    gamma[j] = new;
                }
            }
            if it >= burn_in {
                out.push(size);
            }
        }
        out
    }
}

/// Search specification for the prior-percentile eta tuner.
#[derive(Debug, Clone)]
pub struct EtaSearchSpec {
    pub omega0: f64,
    pub candidates: Vec<f64>,
    pub prior_draws: usize,
    pub burn_in: usize,
    pub percentile: f64,
}

impl EtaSearchSpec {
    pub fn new(omega0: f64, candidates: Vec<f64>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(SncmError::domain("candidate list must be nonempty"));
        }
        if candidates.windows(2).any(|w| w[0] > w[1]) || candidates.iter().any(|&e| e < 0.0) {
            return Err(SncmError::domain(
                "candidates must be non-negative and sorted ascending",
            ));
        }
        Ok(Self {
            omega0,
            candidates,
            prior_draws: 20_000,
            burn_in: 5_000,
            percentile: 0.95,
        })
    }

    /// The simulation-style grid {0.01, 0.02, ..., 1.00} / max(R).
    pub fn scaled_grid(r: &RelationshipMatrix) -> Vec<f64> {
        let rmax = r.max_entry();
        let scale = if rmax > 0.0 { 1.0 / rmax } else { 1.0 };
        (1..=100).map(|k| k as f64 / 100.0 * scale).collect()
    }

    /// The data-analysis grid {0.01, 0.02, ..., 1.00}.
    pub fn unit_grid() -> Vec<f64> {
        (1..=100).map(|k| k as f64 / 100.0).collect()
    }
}

/// Outcome of the eta search: the chosen value, the reference model size, and
/// the per-candidate sampled percentile table.
#[derive(Debug, Clone)]
pub struct EtaSelection {
    pub eta: f64,
    pub reference_size: f64,
    /// (candidate, sampled percentile of model size)
    pub table: Vec<(f64, f64)>,
}

/// Choose the largest candidate eta whose prior `percentile` model size,
/// estimated by Gibbs sampling from MRF(omega0, eta, R), stays at or below
/// the same percentile of Binomial(p, 2 logit^{-1}(omega0)) - the reference
/// independent prior with doubled inclusion probability. Falls back to 0 if
/// no candidate qualifies. Candidates are evaluated in parallel on
/// independent rng streams; the result is deterministic given `seed`.
pub fn select_eta(spec: &EtaSearchSpec, r: &RelationshipMatrix, seed: u64) -> Result<EtaSelection> {
    let p = r.dim();
    let q0 = logistic(spec.omega0);
    let reference_size = binomial_quantile(p, (2.0 * q0).min(1.0), spec.percentile) as f64;
    let table: Vec<(f64, f64)> = spec
        .candidates
        .par_iter()
        .enumerate()
        .map(|(i, &eta)| -> Result<(f64, f64)> {
            let prior = MrfPrior::new(spec.omega0, eta, r)?;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut sizes = prior.sample_model_sizes(spec.prior_draws, spec.burn_in, &mut rng);
            sizes.sort_unstable();
            let q = empirical_quantile(&sizes, spec.percentile);
            Ok((eta, q))
        })
        .collect::<Result<_>>()?;
    let eta = table
        .iter()
        .rev()
        .find(|&&(_, q)| q <= reference_size)
        .map(|&(e, _)| e)
        .unwrap_or(0.0);
    Ok(EtaSelection {
        eta,
        reference_size,
        table,
    })
}

fn empirical_quantile(sorted: &[usize], q: f64) -> f64 {
    // lowest value whose empirical CDF reaches q
    let n = sorted.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1] as f64
}

/// Exact quantile of Binomial(n, p): smallest k with CDF(k) >= q.
pub fn binomial_quantile(n: usize, p: f64, q: f64) -> usize {
    assert!((0.0..=1.0).contains(&p) && (0.0..1.0).contains(&q));
    if p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    let ln_p = p.ln();
    let ln_1p = (1.0 - p).ln();
    let ln_n1 = ln_gamma(n as f64 + 1.0);
    let mut cdf = 0.0;
    for k in 0..=n {
        let ln_pmf = ln_n1 - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
            + k as f64 * ln_p
            + (n - k) as f64 * ln_1p;
        cdf += ln_pmf.exp();
        if cdf >= q {
            return k;
        }
    }
    n
}
