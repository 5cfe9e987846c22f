//! Subcommand implementations. Each one reads its inputs, writes every
//! output file through a `ManifestBuilder` (atomic writes + content hashes),
//! and finishes by emitting `manifest.json`.

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::path::Path;

use crate::config::RunConfig;
use crate::ingest;
use crate::manifest::ManifestBuilder;
use sncm::gibbs::{run_chains, PosteriorChain};
use sncm::model::{CensoredDataset, Hyperparams, SelectionPrior};
use sncm::mrf::{logit, select_eta, EtaSearchSpec, MrfPrior};
use sncm::posterior::{
    adaptive_beta_prior, convergence_report, empirical_slab_variance, standardize_with_pmv,
    summarize, write_trace_csv, ResponseTransform, SelectionResult,
};
use sncm::relmatrix::{build_relationship_matrix, simulation_r, HierarchyNode, RelationshipMatrix};
use sncm::simlab::{generate_replicate, make_scenario, ScenarioName};

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

/// Config snapshot stored in the manifest. The output directory is blanked:
/// it is where the manifest itself lives and has no bearing on the produced
/// bytes, so identical runs into different directories stay byte-identical.
fn manifest_cfg(cfg: &RunConfig) -> RunConfig {
    let mut snap = cfg.clone();
    snap.output.dir = std::path::PathBuf::new();
    snap
}

fn csv_bytes(build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    build(&mut w)?;
    w.flush()?;
    Ok(w.into_inner()?)
}

/// Build a worker pool sized by the config (0 = one per core).
fn worker_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("cannot build worker pool")
}

// ---------------------------------------------------------------- simulate

pub fn simulate(cfg: &RunConfig, scenario: &str, replicates: usize) -> Result<()> {
    if replicates == 0 {
        bail!("--replicates must be positive");
    }
    let name: ScenarioName = scenario.parse()?;
    let sc = make_scenario(name)?;
    let mut mf = ManifestBuilder::new(&cfg.output.dir, "simulate", cfg.mcmc.seed, &manifest_cfg(cfg))?;
    for rep in 0..replicates {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.mcmc.seed);
        rng.set_stream(rep as u64);
        let replicate = generate_replicate(&sc, &mut rng)?;
        let prefix = format!("rep_{rep:03}");
        mf.write_file(
            &format!("{prefix}/data.csv"),
            &ingest::dataset_csv_bytes(&replicate.data)?,
        )?;
        let truth = csv_bytes(|w| {
            w.write_record(["index", "gamma", "beta"])?;
            for j in 0..replicate.truth_beta.len() {
                w.write_record(&[
                    j.to_string(),
                    (replicate.truth_gamma[j] as u8).to_string(),
                    fmt(replicate.truth_beta[j]),
                ])?;
            }
            Ok(())
        })?;
        mf.write_file(&format!("{prefix}/truth.csv"), &truth)?;
        mf.write_file(&format!("{prefix}/rel.csv"), &replicate.r.csv_bytes()?)?;
    }
    mf.finish()
}

// ---------------------------------------------------------------- build-rel

pub fn build_rel(cfg: &RunConfig, hierarchy: Option<&Path>, blocks: usize) -> Result<()> {
    let r = match hierarchy {
        Some(path) => {
            let tree = HierarchyNode::from_json_file(path)
                .with_context(|| format!("cannot read hierarchy {}", path.display()))?;
            build_relationship_matrix(&tree)?
        }
        None => simulation_r(blocks, 20)?,
    };
    let mut mf = ManifestBuilder::new(&cfg.output.dir, "build-rel", cfg.mcmc.seed, &manifest_cfg(cfg))?;
    mf.write_file("rel.csv", &r.csv_bytes()?)?;
    mf.finish()
}

// ---------------------------------------------------------------- tune-eta

pub fn tune_eta(cfg: &RunConfig, rel: &Path, inclusion_probability: f64, grid: &str) -> Result<()> {
    if !(inclusion_probability > 0.0 && inclusion_probability < 1.0) {
        bail!("--inclusion-probability must lie in (0, 1)");
    }
    let r = RelationshipMatrix::read_csv(rel)?;
    let candidates = match grid {
        "unit" => EtaSearchSpec::unit_grid(),
        "scaled" => EtaSearchSpec::scaled_grid(&r),
        other => bail!("--grid must be \"unit\" or \"scaled\", got \"{other}\""),
    };
    let spec = EtaSearchSpec::new(logit(inclusion_probability), candidates)?;
    let pool = worker_pool(cfg.threads)?;
    let sel = pool.install(|| select_eta(&spec, &r, cfg.mcmc.seed))?;
    let mut mf = ManifestBuilder::new(&cfg.output.dir, "tune-eta", cfg.mcmc.seed, &manifest_cfg(cfg))?;
    let table = csv_bytes(|w| {
        w.write_record(["eta", "q95_model_size"])?;
        for (eta, q) in &sel.table {
            w.write_record(&[fmt(*eta), fmt(*q)])?;
        }
        Ok(())
    })?;
    mf.write_file("eta_table.csv", &table)?;
    let chosen = csv_bytes(|w| {
        w.write_record(["eta", "reference_model_size"])?;
        w.write_record(&[fmt(sel.eta), fmt(sel.reference_size)])?;
        Ok(())
    })?;
    mf.write_file("chosen_eta.csv", &chosen)?;
    mf.finish()?;
    println!("eta = {}", sel.eta);
    Ok(())
}

// ---------------------------------------------------------------- fit

fn build_prior(cfg: &RunConfig, p: usize) -> Result<SelectionPrior> {
    let omega = logit(cfg.prior.inclusion_probability);
    match cfg.prior.kind.as_str() {
        "independent" => Ok(SelectionPrior::Independent { omega }),
        "mrf" => {
            let rel_path = cfg
                .prior
                .rel_path
                .as_ref()
                .ok_or_else(|| anyhow!("prior.kind = \"mrf\" requires prior.rel_path"))?;
            let r = RelationshipMatrix::read_csv(rel_path)?;
            if r.dim() != p {
                bail!(
                    "relationship matrix is {}x{} but the model has {} predictors",
                    r.dim(),
                    r.dim(),
                    p
                );
            }
            let eta = match cfg.prior.eta {
                Some(eta) => eta,
                None => {
                    let spec = EtaSearchSpec::new(omega, EtaSearchSpec::unit_grid())?;
                    select_eta(&spec, &r, cfg.mcmc.seed)?.eta
                }
            };
            Ok(SelectionPrior::Mrf(MrfPrior::new(omega, eta, &r)?))
        }
        other => bail!("prior.kind must be \"independent\" or \"mrf\", got \"{other}\""),
    }
}

fn build_hyperparams(
    cfg: &RunConfig,
    data: &CensoredDataset,
    selection: SelectionPrior,
) -> Result<Hyperparams> {
    let nu_sq = match cfg.model.nu_sq {
        Some(v) => v,
        None => empirical_slab_variance(data)?,
    };
    let s = data.s();
    let lambda_sq = match cfg.model.lambda_sq.len() {
        1 => vec![cfg.model.lambda_sq[0]; s],
        n if n == s => cfg.model.lambda_sq.clone(),
        n => bail!("model.lambda_sq has {n} entries but there are {s} confounders"),
    };
    let (rho0, rho1) = adaptive_beta_prior(data)?;
    let hyper = Hyperparams {
        nu0_sq: cfg.model.nu0_sq,
        nu_sq,
        nud_sq: cfg.model.nud_sq,
        lambda_sq,
        xi0: cfg.model.xi0,
        sigma0_sq: cfg.model.sigma0_sq,
        rho0,
        rho1,
        selection,
        skew_errors: cfg.model.error_model == "skew_normal",
        fix_rho_one: cfg.model.fix_rho_one,
    };
    hyper.validate(s)?;
    Ok(hyper)
}

fn selection_csv(
    result: &SelectionResult,
    names: &[String],
    transform: &ResponseTransform,
) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["predictor", "pip", "selected", "beta_hat", "beta_hat_original"])?;
        let selected: std::collections::HashSet<usize> = result.selected.iter().cloned().collect();
        for (j, name) in names.iter().enumerate() {
            let (bh, bho) = match result.beta_hat[j] {
                Some(b) => (fmt(b), fmt(transform.slope_to_original(b))),
                None => (String::new(), String::new()),
            };
            w.write_record(&[
                name.clone(),
                fmt(result.pip[j]),
                (selected.contains(&j) as u8).to_string(),
                bh,
                bho,
            ])?;
        }
        Ok(())
    })
}

fn summary_csv(
    result: &SelectionResult,
    confounders: &[String],
    transform: &ResponseTransform,
) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["parameter", "estimate"])?;
        w.write_record(&["beta0".to_string(), fmt(result.beta0_hat)])?;
        for (t, name) in confounders.iter().enumerate() {
            w.write_record(&[format!("alpha[{name}]"), fmt(result.alpha_hat[t])])?;
        }
        w.write_record(&["sigma_sq".to_string(), fmt(result.sigma_sq_hat)])?;
        w.write_record(&["delta".to_string(), fmt(result.delta_hat)])?;
        w.write_record(&["rho".to_string(), fmt(result.rho_hat)])?;
        w.write_record(&[
            "pip_threshold".to_string(),
            result.threshold.map(fmt).unwrap_or_default(),
        ])?;
        w.write_record(&["selected_count".to_string(), result.selected.len().to_string()])?;
        w.write_record(&["transform_center".to_string(), fmt(transform.center)])?;
        w.write_record(&["transform_scale".to_string(), fmt(transform.scale)])?;
        Ok(())
    })
}

fn elpd_csv(report: &sncm::eval::ElpdReport) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["elpd_is", "elpd_waic", "unstable_is_points"])?;
        w.write_record(&[
            fmt(report.elpd_is),
            fmt(report.elpd_waic),
            report.unstable_is_points.len().to_string(),
        ])?;
        Ok(())
    })
}

/// Output bundle for one fitted response, produced in parallel and written
/// out sequentially so the manifest stays deterministic.
struct FitOutput {
    response: String,
    files: Vec<(String, Vec<u8>)>,
}

fn fit_one(cfg: &RunConfig, table: &ingest::Table, response: &str) -> Result<FitOutput> {
    let raw = ingest::build_dataset(table, &cfg.data, response)?;
    let (data, transform) = if cfg.data.standardize {
        standardize_with_pmv(&raw)?
    } else {
        (raw, ResponseTransform { center: 0.0, scale: 1.0 })
    };
    let prior = build_prior(cfg, data.p())?;
    let hyper = build_hyperparams(cfg, &data, prior)?;
    let mcmc = cfg.mcmc_config();
    let chains = run_chains(&data, &hyper, &mcmc)?;
    let result = summarize(&chains, cfg.output.fdr_target)?;

    let mut files = Vec::new();
    files.push((
        "selection.csv".to_string(),
        selection_csv(&result, &data.predictor_names, &transform)?,
    ));
    files.push((
        "summary.csv".to_string(),
        summary_csv(&result, &data.confounder_names, &transform)?,
    ));
    files.push(("elpd.csv".to_string(), elpd_csv(&sncm::eval::elpd_report(&chains)?)?));
    let mut trace = Vec::new();
    write_trace_csv(&chains, &mut trace)?;
    files.push(("trace.csv".to_string(), trace));
    if chains.len() >= 2 {
        let report = convergence_report(&chains)?;
        let conv = csv_bytes(|w| {
            w.write_record(["parameter", "mean", "rhat", "ess"])?;
            for p in &report.params {
                w.write_record(&[p.name.clone(), fmt(p.mean), fmt(p.rhat), fmt(p.ess)])?;
            }
            Ok(())
        })?;
        files.push(("convergence.csv".to_string(), conv));
    }
    files.push(("draws.json".to_string(), serde_json::to_vec(&chains)?));
    Ok(FitOutput {
        response: response.to_string(),
        files,
    })
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    if cfg.data.responses.is_empty() {
        bail!("no response columns declared in data.responses");
    }
    let table = ingest::read_table(&cfg.data.path, &cfg.data.pmv_sentinel)?;
    let pool = worker_pool(cfg.threads)?;
    let mut outputs: Vec<FitOutput> = pool.install(|| {
        cfg.data
            .responses
            .par_iter()
            .map(|resp| {
                fit_one(cfg, &table, resp)
                    .with_context(|| format!("fitting response \"{resp}\""))
            })
            .collect::<Result<_>>()
    })?;
    outputs.sort_by(|a, b| a.response.cmp(&b.response));
    let mut mf = ManifestBuilder::new(&cfg.output.dir, "fit", cfg.mcmc.seed, &manifest_cfg(cfg))?;
    for out in &outputs {
        for (name, bytes) in &out.files {
            mf.write_file(&format!("{}/{}", out.response, name), bytes)?;
        }
    }
    mf.finish()
}

// ---------------------------------------------------------------- evaluate

fn read_chains(fit_dir: &Path) -> Result<Vec<PosteriorChain>> {
    let path = fit_dir.join("draws.json");
    let bytes = std::fs::read(&path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    Ok(serde_json::from_slice(&bytes)
        .with_context(|| format!("cannot parse {}", path.display()))?)
}

fn dir_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn evaluate(cfg: &RunConfig, fits: &[std::path::PathBuf]) -> Result<()> {
    let mut rows = Vec::with_capacity(fits.len());
    for dir in fits {
        let chains = read_chains(dir)?;
        let report = sncm::eval::elpd_report(&chains)?;
        rows.push((dir_label(dir), report));
    }
    let mut mf = ManifestBuilder::new(&cfg.output.dir, "evaluate", cfg.mcmc.seed, &manifest_cfg(cfg))?;
    let table = csv_bytes(|w| {
        w.write_record(["model", "elpd_is", "elpd_waic", "unstable_is_points"])?;
        for (label, report) in &rows {
            w.write_record(&[
                label.clone(),
                fmt(report.elpd_is),
                fmt(report.elpd_waic),
                report.unstable_is_points.len().to_string(),
            ])?;
        }
        Ok(())
    })?;
    mf.write_file("elpd.csv", &table)?;
    mf.finish()
}

// ---------------------------------------------------------------- score

fn read_truth(path: &Path) -> Result<(Vec<bool>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut gamma = Vec::new();
    let mut beta = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 3 {
            bail!("{}: row {} has fewer than 3 columns", path.display(), i + 2);
        }
        let g: u8 = rec[1].trim().parse().map_err(|_| {
            anyhow!("{}: row {}: non-binary gamma \"{}\"", path.display(), i + 2, &rec[1])
        })?;
        gamma.push(g != 0);
        beta.push(rec[2].trim().parse::<f64>().map_err(|_| {
            anyhow!("{}: row {}: non-numeric beta \"{}\"", path.display(), i + 2, &rec[2])
        })?);
    }
    Ok((gamma, beta))
}

fn read_selection(path: &Path) -> Result<SelectionResult> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_string()).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: missing column \"{name}\"", path.display()))
    };
    let (ci_pip, ci_sel, ci_beta) = (col("pip")?, col("selected")?, col("beta_hat")?);
    let mut pip = Vec::new();
    let mut selected = Vec::new();
    let mut beta_hat = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        pip.push(rec[ci_pip].trim().parse::<f64>().map_err(|_| {
            anyhow!("{}: row {}: bad pip", path.display(), i + 2)
        })?);
        if rec[ci_sel].trim() == "1" {
            selected.push(i);
        }
        let cell = rec[ci_beta].trim();
        beta_hat.push(if cell.is_empty() {
            None
        } else {
            Some(cell.parse::<f64>().map_err(|_| {
                anyhow!("{}: row {}: bad beta_hat", path.display(), i + 2)
            })?)
        });
    }
    Ok(SelectionResult {
        pip,
        threshold: None,
        selected,
        beta_hat,
        alpha_hat: Vec::new(),
        beta0_hat: f64::NAN,
        sigma_sq_hat: f64::NAN,
        delta_hat: f64::NAN,
        rho_hat: f64::NAN,
    })
}

pub fn score(
    cfg: &RunConfig,
    truth: &Path,
    selections: &[std::path::PathBuf],
    scenario: &str,
    prior: &str,
) -> Result<()> {
    let (gamma, beta) = read_truth(truth)?;
    let results: Vec<SelectionResult> = selections
        .iter()
        .map(|p| read_selection(p))
        .collect::<Result<_>>()?;
    let report = sncm::simlab::score(&results, &gamma, &beta)?;
    let mut mf = ManifestBuilder::new(&cfg.output.dir, "score", cfg.mcmc.seed, &manifest_cfg(cfg))?;
    let metrics = csv_bytes(|w| {
        w.write_record([
            "scenario", "prior", "replicates", "tpr", "tpr_sd", "fdr", "fdr_sd",
        ])?;
        w.write_record(&[
            scenario.to_string(),
            prior.to_string(),
            report.replicates.to_string(),
            fmt(report.overall_tpr),
            fmt(report.overall_tpr_sd),
            fmt(report.fdr),
            fmt(report.fdr_sd),
        ])?;
        Ok(())
    })?;
    mf.write_file("metrics.csv", &metrics)?;
    let per_var = csv_bytes(|w| {
        w.write_record(["index", "tpr", "bias", "rmse"])?;
        for (k, &j) in report.true_indices.iter().enumerate() {
            w.write_record(&[
                j.to_string(),
                fmt(report.variable_tpr[k]),
                fmt(report.bias[k]),
                fmt(report.rmse[k]),
            ])?;
        }
        Ok(())
    })?;
    mf.write_file("variable_metrics.csv", &per_var)?;
    mf.finish()
}

// ---------------------------------------------------------------- predict

pub fn predict(cfg: &RunConfig, fit_dir: &Path, response: &str, draws: usize) -> Result<()> {
    if draws == 0 {
        bail!("--draws must be positive");
    }
    let chains = read_chains(fit_dir)?;
    let table = ingest::read_table(&cfg.data.path, &cfg.data.pmv_sentinel)?;
    let raw = ingest::build_dataset(&table, &cfg.data, response)?;
    let data = if cfg.data.standardize {
        standardize_with_pmv(&raw)?.0
    } else {
        raw
    };
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.mcmc.seed);
    let samples = sncm::eval::posterior_predictive_sample(&chains, &data, draws, &mut rng)?;
    let (pmv_frac, obs_mean) = sncm::eval::predictive_summary(&samples);

    let mut mf = ManifestBuilder::new(&cfg.output.dir, "predict", cfg.mcmc.seed, &manifest_cfg(cfg))?;
    // per-observation summary across draws
    let per_obs = csv_bytes(|w| {
        w.write_record(["row", "p_missing", "mean_observed"])?;
        for i in 0..data.n() {
            let mut miss = 0usize;
            let mut sum = 0.0;
            for d in &samples {
                match d.y[i] {
                    Some(v) => sum += v,
                    None => miss += 1,
                }
            }
            let obs = samples.len() - miss;
            w.write_record(&[
                (i + 1).to_string(),
                fmt(miss as f64 / samples.len() as f64),
                if obs > 0 { fmt(sum / obs as f64) } else { String::new() },
            ])?;
        }
        Ok(())
    })?;
    mf.write_file("predictive.csv", &per_obs)?;
    let overall = csv_bytes(|w| {
        w.write_record(["pmv_fraction", "observed_mean"])?;
        w.write_record(&[fmt(pmv_frac), fmt(obs_mean)])?;
        Ok(())
    })?;
    mf.write_file("predictive_summary.csv", &overall)?;
    mf.finish()
}
