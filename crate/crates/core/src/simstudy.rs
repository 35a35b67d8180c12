//! Gaussian random field simulation, frequentist coverage experiments and
//! empirical semivariograms.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

use crate::bayes::{median, sample_posterior, Conditionals, LikelihoodTable, SamplerConfig, ThetaPosterior};
use crate::covmodel::MaternKernel;
use crate::designs::{regular_lattice, tune_defaults, SpatialDesign, Trend};
use crate::error::{Error, Result};
use crate::likelihoods::{profile_ci, DataVector, LikelihoodContext, ProfileParam};
use crate::linalg::{guarded_cholesky, thin_qr, CorrelationContext};
use crate::numerics::maximize_scalar;
use crate::priors::{
    default_theta_grid, tabulate_approx_prior, tabulate_exact_prior, tabulate_inverse_gamma, PriorKind, SpectralConfig,
    TabulatedDensity,
};

/// Parameters of a Matérn Gaussian random field with linear mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrfParams {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub theta: f64,
    pub nu: f64,
}

/// RNG for replicate `index` of an experiment seeded with `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Repeated simulation from one field model on a fixed design.
#[derive(Debug, Clone)]
pub struct GrfSimulator {
    design: SpatialDesign,
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl GrfSimulator {
    pub fn new(design: &SpatialDesign, params: &GrfParams) -> Result<Self> {
        if params.beta.len() != design.p() {
            return Err(Error::DimensionMismatch(format!("beta has length {}, design has p = {}", params.beta.len(), design.p())));
        }
        if !(params.sigma2 > 0.0 && params.theta > 0.0) {
            return Err(Error::InvalidParameter("sigma2 and theta must be positive".into()));
        }
        let ctx = CorrelationContext::new(design.locations(), params.nu)?;
        let chol = guarded_cholesky(ctx.corr(params.theta), params.theta)?;
        let mean = design.covariates() * DVector::from_column_slice(&params.beta);
        Ok(GrfSimulator { design: design.clone(), mean, factor: chol.l() * params.sigma2.sqrt() })
    }

    /// z = Xβ + σLη with η standard normal.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> DataVector {
        let n = self.mean.len();
        let eta = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let z = &self.mean + &self.factor * eta;
        DataVector { design: self.design.clone(), z }
    }
}

/// One realization of a Gaussian random field.
pub fn simulate_grf(design: &SpatialDesign, params: &GrfParams, seed: u64) -> Result<DataVector> {
    Ok(GrfSimulator::new(design, params)?.draw(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Sampling locations of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignSpec {
    /// m1 × m2 equally spaced points covering [0, 1]².
    Regular { m1: usize, m2: usize },
    /// n points drawn uniformly on [0, 1]².
    Uniform { n: usize, seed: u64 },
    Points { points: Vec<[f64; 2]> },
}

impl DesignSpec {
    pub fn locations(&self) -> Result<Vec<[f64; 2]>> {
        match self {
            DesignSpec::Regular { m1, m2 } => {
                if *m1 < 2 || *m2 < 2 {
                    return Err(Error::InvalidDesign("regular designs need at least two points per side".into()));
                }
                let pts = regular_lattice(*m1, *m2, 1.0, [0.0, 0.0]);
                let (s1, s2) = ((*m1 - 1) as f64, (*m2 - 1) as f64);
                Ok(pts.into_iter().map(|[x, y]| [x / s1, y / s2]).collect())
            }
            DesignSpec::Uniform { n, seed } => Ok(uniform_locations(*n, *seed)),
            DesignSpec::Points { points } => Ok(points.clone()),
        }
    }
}

/// `n` points uniform on [0, 1]² from a seeded generator.
pub fn uniform_locations(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
}

/// Mean function coefficients used for the quadratic-trend scenarios,
/// in the order (1, x, y, x², xy, y²).
pub const QUADRATIC_TREND_BETA: [f64; 6] = [0.15, -0.65, -0.1, 0.9, -1.0, 1.2];

/// Setup of a coverage experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub design: DesignSpec,
    pub trend: Trend,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub theta: f64,
    pub nu: f64,
    pub priors: Vec<PriorKind>,
    /// Also compute the MLE and profile-likelihood intervals.
    pub include_mle: bool,
    /// Profile-likelihood interval for σ² too (nested optimization, slow).
    pub mle_sigma2_interval: bool,
    pub replicates: usize,
    pub n_draws: usize,
    pub level: f64,
    pub seed: u64,
    /// Spectral tuning of the approximate prior; design defaults when absent.
    pub spectral: Option<SpectralConfig>,
    pub refine_points: usize,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 10 × 10 regular design, constant mean,
    /// 300 replicates of 2000 draws.
    pub fn desk_scale(theta: f64, nu: f64, trend: Trend) -> Self {
        let beta = match trend {
            Trend::Constant => vec![1.0],
            Trend::Linear => QUADRATIC_TREND_BETA[..3].to_vec(),
            Trend::Quadratic => QUADRATIC_TREND_BETA.to_vec(),
        };
        ExperimentConfig {
            design: DesignSpec::Regular { m1: 10, m2: 10 },
            trend,
            beta,
            sigma2: 1.0,
            theta,
            nu,
            priors: vec![
                PriorKind::InverseGamma {
                    shape: crate::priors::INVERSE_GAMMA_BASELINE.0,
                    scale: crate::priors::INVERSE_GAMMA_BASELINE.1,
                },
                PriorKind::ExactRef { representation: crate::priors::Representation::A },
                PriorKind::ApproxRef,
            ],
            include_mle: true,
            mle_sigma2_interval: false,
            replicates: 300,
            n_draws: 2000,
            level: 0.95,
            seed: 2024,
            spectral: None,
            refine_points: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("at least one replicate is required".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if self.n_draws < crate::bayes::HPD_MIN_DRAWS && !self.priors.is_empty() {
            return Err(Error::InvalidParameter(format!("at least {} draws are needed", crate::bayes::HPD_MIN_DRAWS)));
        }
        if self.beta.len() != self.trend.dim() {
            return Err(Error::DimensionMismatch(format!("beta has length {}, trend needs {}", self.beta.len(), self.trend.dim())));
        }
        Ok(())
    }
}

/// Interval and point estimate of one parameter in one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
}

/// Outcome of one method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: String,
    pub theta: Option<IntervalRecord>,
    pub sigma2: Option<IntervalRecord>,
    pub acceptance_rate: Option<f64>,
    pub error: Option<String>,
}

/// Aggregate frequentist properties of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub replicates_ok: usize,
    pub theta_coverage: f64,
    pub theta_log_length: f64,
    pub theta_mae: f64,
    pub sigma2_coverage: Option<f64>,
    pub sigma2_log_length: Option<f64>,
    pub sigma2_mae: f64,
    pub mean_acceptance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub summaries: Vec<MethodSummary>,
    pub records: Vec<ReplicateRecord>,
    pub failure_fraction: f64,
    pub wall_clock_seconds: f64,
}

/// Coverage indicator average and mean log-length of intervals for `truth`.
pub fn coverage_and_log_length(intervals: &[(f64, f64)], truth: f64) -> (f64, f64) {
    let n = intervals.len() as f64;
    let covered = intervals.iter().filter(|(l, u)| *l < truth && truth < *u).count() as f64;
    let log_len = intervals.iter().map(|(l, u)| u.ln() - l.ln()).sum::<f64>();
    (covered / n, log_len / n)
}

/// Mean absolute error of estimates.
pub fn mean_absolute_error(estimates: &[f64], truth: f64) -> f64 {
    estimates.iter().map(|e| (e - truth).abs()).sum::<f64>() / estimates.len() as f64
}

/// Label of the likelihood-based method in reports.
pub const MLE_LABEL: &str = "mle";

/// Runs a coverage experiment. Replicates run in parallel with independent
/// RNG streams; per-replicate failures are recorded, not fatal.
pub fn coverage_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let design = SpatialDesign::with_trend(config.design.locations()?, config.trend)?;
    let params = GrfParams { beta: config.beta.clone(), sigma2: config.sigma2, theta: config.theta, nu: config.nu };
    let sim = GrfSimulator::new(&design, &params)?;
    let grid = default_theta_grid(&design)?;
    let priors: Vec<(PriorKind, TabulatedDensity)> = config
        .priors
        .iter()
        .map(|k| Ok((*k, tabulate_prior(*k, &design, config.nu, config.spectral, &grid)?)))
        .collect::<Result<_>>()?;

    let per_rep: Vec<Vec<ReplicateRecord>> = (0..config.replicates)
        .into_par_iter()
        .map(|rep| run_replicate(rep, config, &sim, &priors, &grid))
        .collect();
    let records: Vec<ReplicateRecord> = per_rep.into_iter().flatten().collect();

    let mut methods: Vec<String> = config.priors.iter().map(|k| k.label().to_string()).collect();
    if config.include_mle {
        methods.push(MLE_LABEL.into());
    }
    let summaries = methods.iter().map(|m| summarize(m, &records, config)).collect();
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    Ok(ExperimentReport {
        config: config.clone(),
        summaries,
        failure_fraction: failures as f64 / records.len().max(1) as f64,
        records,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Tabulates a prior of the given kind on `grid`.
pub fn tabulate_prior(
    kind: PriorKind,
    design: &SpatialDesign,
    nu: f64,
    spectral: Option<SpectralConfig>,
    grid: &[f64],
) -> Result<TabulatedDensity> {
    match kind {
        PriorKind::ExactRef { representation } => tabulate_exact_prior(design, nu, representation, grid),
        PriorKind::ApproxRef => {
            let cfg = match spectral {
                Some(c) => c,
                None => {
                    let t = tune_defaults(design, None, nu)?;
                    SpectralConfig { m1: t.m1, m2: t.m2, delta: t.delta, truncation: crate::covmodel::DEFAULT_TRUNCATION }
                }
            };
            tabulate_approx_prior(design, nu, &cfg, grid)
        }
        PriorKind::InverseGamma { shape, scale } => tabulate_inverse_gamma(shape, scale, grid),
    }
}

fn run_replicate(
    rep: usize,
    config: &ExperimentConfig,
    sim: &GrfSimulator,
    priors: &[(PriorKind, TabulatedDensity)],
    grid: &[f64],
) -> Vec<ReplicateRecord> {
    let mut rng = replicate_rng(config.seed, rep as u64);
    let data = sim.draw(&mut rng);
    let seeds: Vec<u64> = priors.iter().map(|_| rng.next_u64()).collect();
    let failed = |method: &str, e: Error| ReplicateRecord {
        replicate: rep,
        method: method.into(),
        theta: None,
        sigma2: None,
        acceptance_rate: None,
        error: Some(e.to_string()),
    };
    let mut out = Vec::with_capacity(priors.len() + 1);
    let base = LikelihoodContext::new(&data, config.nu).and_then(|ctx| {
        let table = LikelihoodTable::tabulate(&ctx, grid)?;
        Ok((ctx, table))
    });
    for ((kind, prior), seed) in priors.iter().zip(seeds) {
        let r = base.as_ref().map_err(|e| Error::Sampler(e.to_string())).and_then(|(ctx, table)| {
            let post = ThetaPosterior::build(ctx, prior, Some(table), config.refine_points)?;
            let cfg = SamplerConfig {
                n_draws: config.n_draws,
                seed,
                exact_marginal: false,
                conditionals: Conditionals::Interpolated,
                refine_points: config.refine_points,
            };
            let draws = sample_posterior(ctx, &post, *kind, &cfg)?;
            let th = crate::bayes::hpd_interval(&draws.theta(), config.level)?;
            let s2 = draws.sigma2();
            let sh = crate::bayes::hpd_interval(&s2, config.level)?;
            Ok(ReplicateRecord {
                replicate: rep,
                method: kind.label().into(),
                theta: Some(IntervalRecord { lower: th.0, upper: th.1, estimate: post.mode() }),
                sigma2: Some(IntervalRecord { lower: sh.0, upper: sh.1, estimate: median(&s2) }),
                acceptance_rate: Some(draws.acceptance_rate),
                error: None,
            })
        });
        out.push(r.unwrap_or_else(|e| failed(kind.label(), e)));
    }
    if config.include_mle {
        let r = (|| -> Result<ReplicateRecord> {
            let th = profile_ci(&data, config.nu, ProfileParam::Theta, config.level, None)?;
            let sigma2 = if config.mle_sigma2_interval {
                let s = profile_ci(&data, config.nu, ProfileParam::Sigma2, config.level, None)?;
                IntervalRecord { lower: s.lower, upper: s.upper, estimate: s.estimate }
            } else {
                let ctx = LikelihoodContext::new(&data, config.nu)?;
                let s2 = ctx.gls(th.estimate)?.s2 / data.n() as f64;
                IntervalRecord { lower: f64::NAN, upper: f64::NAN, estimate: s2 }
            };
            Ok(ReplicateRecord {
                replicate: rep,
                method: MLE_LABEL.into(),
                theta: Some(IntervalRecord { lower: th.lower, upper: th.upper, estimate: th.estimate }),
                sigma2: Some(sigma2),
                acceptance_rate: None,
                error: None,
            })
        })();
        out.push(r.unwrap_or_else(|e| failed(MLE_LABEL, e)));
    }
    out
}

fn summarize(method: &str, records: &[ReplicateRecord], config: &ExperimentConfig) -> MethodSummary {
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == method && r.error.is_none()).collect();
    let theta: Vec<IntervalRecord> = ok.iter().filter_map(|r| r.theta).collect();
    let sigma2: Vec<IntervalRecord> = ok.iter().filter_map(|r| r.sigma2).collect();
    let (theta_coverage, theta_log_length) =
        coverage_and_log_length(&theta.iter().map(|r| (r.lower, r.upper)).collect::<Vec<_>>(), config.theta);
    let s2_intervals: Vec<(f64, f64)> = sigma2.iter().filter(|r| r.lower.is_finite()).map(|r| (r.lower, r.upper)).collect();
    let (sigma2_coverage, sigma2_log_length) = if s2_intervals.is_empty() {
        (None, None)
    } else {
        let (c, l) = coverage_and_log_length(&s2_intervals, config.sigma2);
        (Some(c), Some(l))
    };
    let acc: Vec<f64> = ok.iter().filter_map(|r| r.acceptance_rate).collect();
    MethodSummary {
        method: method.into(),
        replicates_ok: ok.len(),
        theta_coverage,
        theta_log_length,
        theta_mae: mean_absolute_error(&theta.iter().map(|r| r.estimate).collect::<Vec<_>>(), config.theta),
        sigma2_coverage,
        sigma2_log_length,
        sigma2_mae: mean_absolute_error(&sigma2.iter().map(|r| r.estimate).collect::<Vec<_>>(), config.sigma2),
        mean_acceptance: if acc.is_empty() { None } else { Some(acc.iter().sum::<f64>() / acc.len() as f64) },
    }
}

impl ExperimentReport {
    /// One row per method: coverage, log-length and MAE of θ and σ².
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "method",
            "design",
            "p",
            "nu",
            "theta",
            "replicates_ok",
            "theta_coverage",
            "theta_log_length",
            "theta_mae",
            "sigma2_coverage",
            "sigma2_log_length",
            "sigma2_mae",
        ])?;
        let design = match &self.config.design {
            DesignSpec::Regular { m1, m2 } => format!("regular-{m1}x{m2}"),
            DesignSpec::Uniform { n, .. } => format!("uniform-{n}"),
            DesignSpec::Points { points } => format!("points-{}", points.len()),
        };
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for s in &self.summaries {
            wtr.write_record(&[
                s.method.clone(),
                design.clone(),
                self.config.trend.dim().to_string(),
                self.config.nu.to_string(),
                self.config.theta.to_string(),
                s.replicates_ok.to_string(),
                format!("{:.6}", s.theta_coverage),
                format!("{:.6}", s.theta_log_length),
                format!("{:.6}", s.theta_mae),
                opt(s.sigma2_coverage),
                opt(s.sigma2_log_length),
                format!("{:.6}", s.sigma2_mae),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}

/// Default number of semivariogram bins.
pub const DEFAULT_BINS: usize = 15;

/// One distance bin of an empirical semivariogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemivariogramBin {
    pub lower: f64,
    pub upper: f64,
    /// Mean pair distance within the bin.
    pub distance: f64,
    pub gamma: f64,
    pub pairs: usize,
}

/// Least-squares fit of σ²(1 − K_θ(r)) to the binned semivariogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Semivariogram {
    pub bins: Vec<SemivariogramBin>,
    pub nu: f64,
    pub sigma2: f64,
    pub theta: f64,
    pub rss: f64,
}

impl Semivariogram {
    /// CSV with columns distance, gamma, pairs, fitted.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let kernel = MaternKernel::new(self.nu)?;
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["distance", "gamma", "pairs", "fitted"])?;
        for b in &self.bins {
            let fitted = self.sigma2 * (1.0 - kernel.corr(b.distance, self.theta));
            wtr.write_record(&[
                format!("{:.10e}", b.distance),
                format!("{:.10e}", b.gamma),
                b.pairs.to_string(),
                format!("{fitted:.10e}"),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Matheron estimator on OLS residuals in `n_bins` equal-width bins up to
/// half the maximum pairwise distance, then a least-squares Matérn fit at
/// fixed ν. Empty bins are skipped.
pub fn empirical_semivariogram(data: &DataVector, n_bins: usize, nu: f64) -> Result<Semivariogram> {
    let n = data.n();
    if n < 10 {
        return Err(Error::InvalidDesign(format!("semivariogram needs at least 10 locations, got {n}")));
    }
    if n_bins == 0 {
        return Err(Error::InvalidParameter("at least one bin is required".into()));
    }
    let x = data.design.covariates();
    let qr = thin_qr(x)?;
    let resid = &data.z - &qr.q * qr.q.tr_mul(&data.z);
    let locs = data.design.locations();
    let cutoff = 0.5 * data.design.max_distance();
    let width = cutoff / n_bins as f64;
    let mut sum = vec![0.0; n_bins];
    let mut dsum = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    for i in 0..n {
        for j in i + 1..n {
            let d = crate::designs::dist(locs[i], locs[j]);
            if d > cutoff || d == 0.0 {
                continue;
            }
            let k = ((d / width) as usize).min(n_bins - 1);
            sum[k] += (resid[i] - resid[j]).powi(2);
            dsum[k] += d;
            count[k] += 1;
        }
    }
    let bins: Vec<SemivariogramBin> = (0..n_bins)
        .filter(|&k| count[k] > 0)
        .map(|k| SemivariogramBin {
            lower: k as f64 * width,
            upper: (k + 1) as f64 * width,
            distance: dsum[k] / count[k] as f64,
            gamma: sum[k] / (2.0 * count[k] as f64),
            pairs: count[k],
        })
        .collect();
    let (sigma2, theta, rss) = fit_matern_semivariogram(&bins, nu, cutoff)?;
    Ok(Semivariogram { bins, nu, sigma2, theta, rss })
}

/// σ̂² is linear given θ, so the fit profiles it out and searches θ on a
/// log scale over [1e-3, 1e2] × `scale`.
fn fit_matern_semivariogram(bins: &[SemivariogramBin], nu: f64, scale: f64) -> Result<(f64, f64, f64)> {
    if bins.is_empty() {
        return Err(Error::InvalidDesign("no pairs within the semivariogram cutoff".into()));
    }
    let kernel = MaternKernel::new(nu)?;
    let fit_at = |theta: f64| {
        let g: Vec<f64> = bins.iter().map(|b| 1.0 - kernel.corr(b.distance, theta)).collect();
        let gg: f64 = g.iter().map(|v| v * v).sum();
        let gy: f64 = g.iter().zip(bins).map(|(v, b)| v * b.gamma).sum();
        let s2 = if gg > 0.0 { (gy / gg).max(0.0) } else { 0.0 };
        let rss: f64 = g.iter().zip(bins).map(|(v, b)| (b.gamma - s2 * v).powi(2)).sum();
        (s2, rss)
    };
    let lo = (1e-3 * scale).ln();
    let hi = (1e2 * scale).ln();
    let m = maximize_scalar(|lt| -fit_at(lt.exp()).1, lo, hi, 200, 1e-9)?;
    let theta = m.x.exp();
    let (s2, rss) = fit_at(theta);
    Ok((s2, theta, rss))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_formula_on_synthetic_intervals() {
        let iv = [(0.1, 0.3), (0.25, 0.5), (0.19, 0.21), (0.2, 0.4)];
        let (c, l) = coverage_and_log_length(&iv, 0.2);
        // The interval starting exactly at the truth does not cover it.
        assert_eq!(c, 0.5);
        let expected = iv.iter().map(|(a, b): &(f64, f64)| (b / a).ln()).sum::<f64>() / 4.0;
        assert!((l - expected).abs() < 1e-15);
        assert!((mean_absolute_error(&[0.1, 0.3, 0.25], 0.2) - 0.25 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn regular_design_spans_unit_square() {
        let pts = DesignSpec::Regular { m1: 10, m2: 10 }.locations().unwrap();
        assert_eq!(pts.len(), 100);
        assert_eq!(pts[99], [1.0, 1.0]);
        assert!((pts[1][1] - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn simulation_is_reproducible() {
        let d = SpatialDesign::constant_mean(uniform_locations(20, 1)).unwrap();
        let p = GrfParams { beta: vec![1.0], sigma2: 1.0, theta: 0.2, nu: 0.5 };
        assert_eq!(simulate_grf(&d, &p, 4).unwrap().z, simulate_grf(&d, &p, 4).unwrap().z);
        assert_ne!(simulate_grf(&d, &p, 4).unwrap().z, simulate_grf(&d, &p, 5).unwrap().z);
    }

    #[test]
    fn constant_field_has_flat_semivariogram() {
        let d = SpatialDesign::constant_mean(uniform_locations(30, 2)).unwrap();
        let data = DataVector::new(d, DVector::from_element(30, 3.7)).unwrap();
        let sv = empirical_semivariogram(&data, DEFAULT_BINS, 0.5).unwrap();
        assert!(sv.bins.iter().all(|b| b.gamma.abs() < 1e-20));
        assert!(sv.sigma2.abs() < 1e-12);
    }

    #[test]
    fn semivariogram_fit_recovers_an_exact_curve() {
        let kernel = MaternKernel::new(1.5).unwrap();
        let bins: Vec<SemivariogramBin> = (1..=15)
            .map(|k| {
                let r = 0.03 * k as f64;
                SemivariogramBin { lower: r, upper: r, distance: r, gamma: 0.8 * (1.0 - kernel.corr(r, 0.17)), pairs: 1 }
            })
            .collect();
        let (s2, th, rss) = fit_matern_semivariogram(&bins, 1.5, 0.5).unwrap();
        assert!((s2 - 0.8).abs() < 1e-6 && (th - 0.17).abs() < 1e-6 && rss < 1e-12);
    }
}
