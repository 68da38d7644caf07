//! The five pipeline commands. Each one is a plain function so tests and the
//! acceptance suite can call it without spawning the binary.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use sparsecox::conditional::InducingSet;
use sparsecox::mcmc::{PosteriorSamples, Sampler};
use sparsecox::metrics::{self, EvalReport};
use sparsecox::points::Points;
use sparsecox::posterior::PosteriorContext;
use sparsecox::predict::{self, IntensityEstimate};
use sparsecox::selection::select_inducing_points;
use sparsecox::simulate::{self, IntensitySpec};
use sparsecox::Error;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::formats::{self, InducingFile, SamplesFile};

/// Random streams of the per-command generators, all keyed by the config seed.
const SELECT_STREAM: u64 = 1 << 62;
const FIT_STREAM: u64 = 1 << 63;

/// Draws kept when scoring held-out data draw by draw.
const MAX_PER_DRAW: usize = 200;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Peak resident set size of this process in KiB, where the OS reports it.
pub fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatedFile {
    pub path: PathBuf,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateManifest {
    pub spec: IntensitySpec,
    pub seed: u64,
    /// `∫λ` over the domain by order-64 Gauss–Legendre.
    pub integral: f64,
    pub files: Vec<SimulatedFile>,
    pub created_unix: u64,
}

/// Simulate `replicates` independent event sets. A single replicate is
/// written to `out`; several go to `out`'s stem with `.0.csv`, `.1.csv`, ...
pub fn cmd_simulate(cfg: &RunConfig, intensity: &str, out: &Path, replicates: usize) -> Result<SimulateManifest, CliError> {
    if replicates == 0 {
        return Err(CliError::Usage("at least one replicate is required".into()));
    }
    let spec = cfg.intensity_spec(intensity)?;
    let integral = simulate::integral_of(&spec, sparsecox::quadrature::MAX_ORDER)?;
    let mut files = Vec::with_capacity(replicates);
    for i in 0..replicates {
        let path = if replicates == 1 {
            out.to_path_buf()
        } else {
            formats::sibling(out, &format!("{i}.csv"))
        };
        let mut rng = rng_for(cfg.seed, i as u64);
        let events = simulate::simulate(&spec, &mut rng)?;
        formats::write_events(&path, &events.points)?;
        files.push(SimulatedFile {
            path,
            count: events.len(),
        });
    }
    let manifest = SimulateManifest {
        spec,
        seed: cfg.seed,
        integral,
        files,
        created_unix: unix_time(),
    };
    formats::write_json(&formats::sibling(out, "manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Greedy selection; writes the prefix reaching `utility_level` plus the full
/// trace. A non-converged run still writes its partial trace.
pub fn cmd_select(cfg: &RunConfig, events: &Path, out: &Path) -> Result<InducingFile, CliError> {
    let data = formats::read_events(events, &cfg.domain)?;
    if data.is_empty() {
        return Err(CliError::Data(format!("{}: no events", events.display())));
    }
    let mut rng = rng_for(cfg.seed, SELECT_STREAM);
    let (trace, failure) = match select_inducing_points(&data.points, &cfg.domain, &cfg.selection(), &mut rng) {
        Ok(trace) => (trace, None),
        Err(Error::Selection { message, trace }) => (*trace, Some(message)),
        Err(e) => return Err(e.into()),
    };
    let k = trace.k_for_level(cfg.utility_level).unwrap_or(trace.k());
    log::info!("selected {k} of {} inducing points", trace.k());
    let file = InducingFile {
        seed: cfg.seed,
        level: cfg.utility_level,
        points: trace.inducing_prefix(k).points().clone(),
        trace: Some(trace),
    };
    formats::write_json(out, &file)?;
    match failure {
        None => Ok(file),
        Some(message) => Err(CliError::Numerical(format!(
            "selection did not converge ({message}); partial trace written to {}",
            out.display()
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub n: usize,
    pub k: usize,
    pub chains: usize,
    pub draws: usize,
    pub wall_seconds: f64,
    /// Wall time per sampler iteration of one chain.
    pub seconds_per_iteration: f64,
    pub acceptance_rate: f64,
    pub ess_per_1000: Option<f64>,
    pub peak_rss_kib: Option<u64>,
    pub created_unix: u64,
}

#[derive(Clone, Debug, Serialize)]
struct ErrorManifest {
    error: String,
    draws_kept: usize,
    created_unix: u64,
}

fn load_inducing(path: &Path, cfg: &RunConfig) -> Result<InducingSet, CliError> {
    let file: InducingFile = formats::read_json(path)?;
    let set = InducingSet::new(file.points).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    set.check_within(&cfg.domain)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(set)
}

/// Run `chains` independent chains concurrently and pool their draws.
pub fn cmd_fit(
    cfg: &RunConfig,
    events: &Path,
    inducing: &Path,
    out: &Path,
    chains: Option<usize>,
) -> Result<FitSummary, CliError> {
    let chains = chains.unwrap_or(cfg.chains);
    if chains == 0 {
        return Err(CliError::Usage("at least one chain is required".into()));
    }
    let data = formats::read_events(events, &cfg.domain)?;
    if data.is_empty() {
        return Err(CliError::Data(format!("{}: no events", events.display())));
    }
    let inducing = load_inducing(inducing, cfg)?;
    if inducing.is_empty() {
        return Err(CliError::Data("the inducing file has no points".into()));
    }
    let (n, k) = (data.len(), inducing.len());
    let ctx = PosteriorContext::new(data.points, inducing, cfg.domain.clone(), cfg.quadrature_order, cfg.fit_prior())?;
    let sampler_cfg = cfg.sampler(cfg.seed);
    sampler_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let start = Instant::now();
    let results: Vec<Result<PosteriorSamples, (Error, Option<PosteriorSamples>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|c| {
                let (ctx, sampler_cfg) = (&ctx, &sampler_cfg);
                scope.spawn(move || {
                    let mut rng = rng_for(cfg.seed, FIT_STREAM + c as u64);
                    let sampler = Sampler::new(ctx);
                    let initial = sampler.initial_state(&mut rng).map_err(|e| (e, None))?;
                    sampler.run_from(initial, sampler_cfg, &mut rng).map_err(|(e, s)| (e, Some(s)))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampler thread panicked")).collect()
    });
    let wall = start.elapsed().as_secs_f64();

    let mut pooled = Vec::with_capacity(chains);
    let mut failure = None;
    for r in results {
        match r {
            Ok(s) => pooled.push(s),
            Err((e, partial)) => {
                pooled.extend(partial);
                failure.get_or_insert(e);
            }
        }
    }
    let samples = if pooled.is_empty() {
        None
    } else {
        Some(PosteriorSamples::pool(pooled)?)
    };
    let file = |samples: PosteriorSamples| SamplesFile {
        seed: cfg.seed,
        chains,
        domain: cfg.domain.clone(),
        prior: cfg.fit_prior(),
        quadrature_order: cfg.quadrature_order,
        samples,
    };

    if let Some(e) = failure {
        let kept = samples.as_ref().map_or(0, |s| s.len());
        if let Some(s) = samples {
            formats::write_json(out, &file(s))?;
        }
        formats::write_json(
            &formats::sibling(out, "error.json"),
            &ErrorManifest {
                error: e.to_string(),
                draws_kept: kept,
                created_unix: unix_time(),
            },
        )?;
        return Err(e.into());
    }
    let samples = samples.expect("at least one chain");
    let iterations = sampler_cfg.burn_in + sampler_cfg.n_samples * sampler_cfg.thinning;
    let ess = samples.ess_per_1000();
    let summary = FitSummary {
        n,
        k,
        chains,
        draws: samples.len(),
        wall_seconds: wall,
        seconds_per_iteration: wall / iterations as f64 * if chains > 1 { 1.0 / chains as f64 } else { 1.0 },
        acceptance_rate: samples.stats.acceptance_rate(),
        ess_per_1000: ess.is_finite().then_some(ess),
        peak_rss_kib: peak_rss_kib(),
        created_unix: unix_time(),
    };
    formats::write_json(out, &file(samples))?;
    formats::write_json(&formats::sibling(out, "summary.json"), &summary)?;
    Ok(summary)
}

fn load_samples(path: &Path, cfg: &RunConfig) -> Result<SamplesFile, CliError> {
    let file: SamplesFile = formats::read_json(path)?;
    if file.domain != cfg.domain {
        return Err(CliError::Data(format!(
            "{}: samples were fitted on {:?}–{:?}, the config has {:?}–{:?}",
            path.display(),
            file.domain.lower,
            file.domain.upper,
            cfg.domain.lower,
            cfg.domain.upper
        )));
    }
    if file.samples.is_empty() {
        return Err(CliError::Data(format!("{}: no draws", path.display())));
    }
    Ok(file)
}

/// Context for evaluating draws away from the data: the sampler's `m*`, no
/// events.
fn prediction_context(file: &SamplesFile) -> Result<PosteriorContext, CliError> {
    Ok(PosteriorContext::with_m_star(
        Points::empty(file.domain.dim()),
        file.samples.inducing.clone(),
        file.domain.clone(),
        file.quadrature_order,
        file.prior.clone(),
        file.samples.m_star,
    )?)
}

/// Posterior summaries on the configured lattice, written to `out`. With
/// `events` (the fitted data) the tilted summaries at the events go to
/// `data_out`.
pub fn cmd_predict(
    cfg: &RunConfig,
    samples: &Path,
    out: &Path,
    events: Option<(&Path, &Path)>,
) -> Result<IntensityEstimate, CliError> {
    let file = load_samples(samples, cfg)?;
    let ctx = prediction_context(&file)?;
    let grid = cfg.domain.grid(cfg.grid_per_dim);
    let estimate = predict::predictive_on_grid(&file.samples, &grid, &ctx)?;
    formats::write_estimate(out, &estimate)?;
    if let Some((events, data_out)) = events {
        let data = formats::read_events(events, &cfg.domain)?;
        let at_data = predict::predictive_at_data(&file.samples, &data.points)?;
        formats::write_estimate(data_out, &at_data)?;
    }
    Ok(estimate)
}

pub struct EvaluateInputs<'a> {
    pub estimate: &'a Path,
    pub truth: &'a str,
    pub heldout: &'a [PathBuf],
    /// Enables the per-draw held-out score and the ESS column.
    pub samples: Option<&'a Path>,
    /// Supplies the wall time column.
    pub fit_summary: Option<&'a Path>,
}

pub fn cmd_evaluate(cfg: &RunConfig, inputs: &EvaluateInputs, out: &Path) -> Result<EvalReport, CliError> {
    if inputs.heldout.is_empty() {
        return Err(CliError::Usage("evaluate needs at least one held-out event file".into()));
    }
    let estimate = formats::read_estimate(inputs.estimate)?;
    if estimate.locations.dim() != cfg.domain.dim() || estimate.locations.iter().any(|p| !cfg.domain.contains(p)) {
        return Err(CliError::Data(format!(
            "{}: the estimate does not lie in the configured domain",
            inputs.estimate.display()
        )));
    }
    let truth = cfg.intensity_spec(inputs.truth)?;
    let heldout = inputs
        .heldout
        .iter()
        .map(|p| formats::read_events(p, &cfg.domain))
        .collect::<Result<Vec<_>, _>>()?;
    let (mae, rmse) = metrics::normalized_errors(&estimate, &truth).map_err(data_error)?;
    let lp = metrics::log_predictive(&estimate, &heldout, &cfg.domain).map_err(data_error)?;

    let (mut lp_draw, mut ess) = (None, None);
    if let Some(path) = inputs.samples {
        let file = load_samples(path, cfg)?;
        let ctx = prediction_context(&file)?;
        let stride = file.samples.len().div_ceil(MAX_PER_DRAW);
        let rows = predict::per_draw_intensity(&file.samples, &estimate.locations, &ctx, stride)?;
        lp_draw = Some(metrics::log_predictive_per_draw(&rows, &estimate.locations, &heldout, &cfg.domain).map_err(data_error)?);
        let e = file.samples.ess_per_1000();
        ess = e.is_finite().then_some(e);
    }
    let wall = match inputs.fit_summary {
        Some(path) => Some(formats::read_json::<FitSummary>(path)?.wall_seconds),
        None => None,
    };
    let report = EvalReport {
        mae,
        rmse,
        lp_mean: lp.mean,
        lp_sd: lp.sd,
        lp_per_draw_mean: lp_draw.map(|s| s.mean),
        lp_per_draw_sd: lp_draw.map(|s| s.sd),
        ess_per_1000: ess,
        wall_seconds: wall,
    };
    formats::write_json(out, &report)?;
    let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), formats::fmt_f64);
    formats::write_key_values(
        &formats::sibling(out, "txt"),
        &[
            ("mae", formats::fmt_f64(mae)),
            ("rmse", formats::fmt_f64(rmse)),
            ("lp_mean", formats::fmt_f64(lp.mean)),
            ("lp_sd", formats::fmt_f64(lp.sd)),
            ("lp_per_draw_mean", opt(report.lp_per_draw_mean)),
            ("lp_per_draw_sd", opt(report.lp_per_draw_sd)),
            ("ess_per_1000", opt(ess)),
            ("wall_seconds", opt(wall)),
        ],
    )?;
    Ok(report)
}

/// Metric preconditions (grid shape, domain) concern the inputs, not the numbers.
fn data_error(e: Error) -> CliError {
    if e.is_numerical() {
        e.into()
    } else {
        CliError::Data(e.to_string())
    }
}
