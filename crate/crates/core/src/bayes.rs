//! Posterior of (β, σ², θ) factored as π(β|σ²,θ,z) π(σ²|θ,z) π(θ|z),
//! sampled without Markov chains, plus HPD intervals and the integrated
//! likelihood of the smoothness parameter.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::designs::tune_defaults;
use crate::error::{Error, Result};
use crate::likelihoods::{DataVector, LikelihoodContext};
use crate::numerics::{log_grid, ls_slope, maximize_scalar, Pchip};
use crate::priors::{
    default_theta_grid, tabulate_approx_prior, LogInterpolator, PriorKind, Representation, SpectralConfig,
    Support, TabulatedDensity, TAIL_MARGIN,
};

/// Log-posterior drop below the maximum that bounds the refined region.
pub const REFINE_DROP: f64 = 25.0;
/// Default number of extra θ points placed in the refined region.
pub const DEFAULT_REFINE_POINTS: usize = 200;
/// A tail whose log density sits this far below the maximum carries no mass.
const NEGLIGIBLE_DROP: f64 = 40.0;
/// Points of the fine ψ grid used for the posterior CDF.
const CDF_POINTS: usize = 4001;
/// Ratio-of-uniforms exponent.
pub const ROU_R: f64 = 0.5;
/// Proposals allowed per accepted draw before the sampler gives up.
const MAX_ATTEMPTS: usize = 100_000;

/// GLS quantities at one θ.
#[derive(Debug, Clone)]
struct TableEntry {
    theta: f64,
    loglik: f64,
    ln_s2: f64,
    beta: DVector<f64>,
    rx: DMatrix<f64>,
}

/// Integrated log-likelihood and GLS summaries on a θ grid.
#[derive(Debug, Clone, Default)]
pub struct LikelihoodTable {
    entries: Vec<TableEntry>,
    failed: Vec<f64>,
}

impl LikelihoodTable {
    pub fn tabulate(ctx: &LikelihoodContext, grid: &[f64]) -> Result<Self> {
        let mut t = LikelihoodTable::default();
        t.extend(ctx, grid)?;
        Ok(t)
    }

    /// Evaluates the grid points not yet present. Numerical failures are
    /// recorded, other errors propagate.
    pub fn extend(&mut self, ctx: &LikelihoodContext, grid: &[f64]) -> Result<()> {
        let todo: Vec<f64> = grid.iter().copied().filter(|&t| !self.contains(t)).collect();
        let dof = (ctx.n() - ctx.p()) as f64;
        let results: Vec<(f64, Result<TableEntry>)> = todo
            .par_iter()
            .map(|&theta| {
                let r = ctx.gls(theta).map(|g| TableEntry {
                    theta,
                    loglik: -0.5 * g.log_det_r - 0.5 * g.log_det_xtrx - 0.5 * dof * g.s2.ln(),
                    ln_s2: g.s2.ln(),
                    beta: g.beta,
                    rx: g.rx,
                });
                (theta, r)
            })
            .collect();
        for (theta, r) in results {
            match r {
                Ok(e) => self.entries.push(e),
                Err(e) if e.is_numerical() => self.failed.push(theta),
                Err(e) => return Err(e),
            }
        }
        self.entries.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        self.failed.sort_by(f64::total_cmp);
        Ok(())
    }

    fn contains(&self, theta: f64) -> bool {
        let close = |t: f64| (t - theta).abs() <= 1e-12 * theta;
        self.entries.iter().any(|e| close(e.theta)) || self.failed.iter().any(|&t| close(t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.theta).collect()
    }

    pub fn loglik(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.loglik).collect()
    }

    /// θ values at which the correlation matrix could not be factored.
    pub fn failures(&self) -> &[f64] {
        &self.failed
    }
}

/// ln π(θ) + ln L^I(θ; z), the unnormalized log marginal posterior of θ.
/// The flag reports that the prior was extrapolated beyond its tabulation.
pub fn marginal_post_theta(theta: f64, ctx: &LikelihoodContext, prior: &LogInterpolator) -> Result<(f64, bool)> {
    let (lp, extrapolated) = prior.eval(theta);
    Ok((lp + ctx.integrated(theta, Representation::A)?, extrapolated))
}

/// How σ² and β are drawn given θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditionals {
    /// Fresh GLS factorization at every sampled θ.
    Exact,
    /// Interpolation of the tabulated GLS quantities in ln θ; falls back to
    /// an exact factorization outside the tabulated range.
    Interpolated,
}

/// Sampler options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_draws: usize,
    pub seed: u64,
    /// Evaluate the integrated likelihood exactly inside the θ sampler
    /// instead of through the cached spline.
    pub exact_marginal: bool,
    pub conditionals: Conditionals,
    pub refine_points: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_draws: 2000,
            seed: 1,
            exact_marginal: false,
            conditionals: Conditionals::Exact,
            refine_points: DEFAULT_REFINE_POINTS,
        }
    }
}

/// Behaviour of a tabulated log density beyond one end of its knots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tail {
    /// No mass beyond the knot.
    None,
    /// Power law θ^slope.
    PowerLaw { slope: f64 },
}

/// Marginal posterior of θ, tabulated and splined in ψ = ln θ.
#[derive(Debug, Clone)]
pub struct ThetaPosterior {
    spline: Pchip,
    lower_tail: Tail,
    upper_tail: Tail,
    /// ln of the normalizing constant of exp(spline) on the θ scale.
    log_norm: f64,
    mode: f64,
    fine_psi: Vec<f64>,
    fine_cdf: Vec<f64>,
    lower_tail_mass: f64,
    upper_tail_mass: f64,
    table: LikelihoodTable,
    prior: LogInterpolator,
    prior_extrapolated: bool,
    /// Shift applied to the log posterior so that its maximum is zero.
    shift: f64,
}

impl ThetaPosterior {
    /// Builds the posterior on the prior's grid, then refines where the log
    /// posterior is within [`REFINE_DROP`] of its maximum.
    pub fn build(ctx: &LikelihoodContext, prior: &TabulatedDensity, base: Option<&LikelihoodTable>, refine_points: usize) -> Result<Self> {
        let interp = prior.interpolator();
        let mut table = base.cloned().unwrap_or_default();
        table.extend(ctx, &prior.theta)?;
        let upper_limit = prior.truncated_at.into_iter().chain(table.failed.iter().copied()).fold(f64::INFINITY, f64::min);
        let coarse = knots(&table, &interp, upper_limit);
        if coarse.len() < 3 {
            return Err(Error::IllConditioned { theta: upper_limit, rcond: 0.0 });
        }
        let max = coarse.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max);
        let inside: Vec<usize> = (0..coarse.len()).filter(|&i| coarse[i].1 > max - REFINE_DROP).collect();
        let lo = coarse[inside[0].saturating_sub(1)].0;
        let hi = coarse[(inside[inside.len() - 1] + 1).min(coarse.len() - 1)].0;
        if refine_points >= 2 && hi > lo {
            table.extend(ctx, &log_grid(lo, hi, refine_points))?;
        }
        let upper_limit = upper_limit.min(table.failed.iter().copied().fold(f64::INFINITY, f64::min));
        let all = knots(&table, &interp, upper_limit);
        let prior_extrapolated = all.iter().any(|k| k.0 < prior.theta[0] || k.0 > prior.theta[prior.len() - 1]);
        let truncated = upper_limit.is_finite();
        let compact = prior.support == Support::Compact;
        Self::from_knots(all, table, interp, prior_extrapolated, (compact, compact || truncated))
    }

    fn from_knots(
        knots: Vec<(f64, f64)>,
        table: LikelihoodTable,
        prior: LogInterpolator,
        prior_extrapolated: bool,
        (closed_below, closed_above): (bool, bool),
    ) -> Result<Self> {
        let shift = knots.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max);
        let psi: Vec<f64> = knots.iter().map(|k| k.0.ln()).collect();
        let lp: Vec<f64> = knots.iter().map(|k| k.1 - shift).collect();
        let spline = Pchip::new(psi.clone(), lp.clone())?;
        let n = psi.len();
        let decade = std::f64::consts::LN_10;
        let tail = |upper: bool| -> Result<Tail> {
            let edge = if upper { n - 1 } else { 0 };
            if lp[edge] < -NEGLIGIBLE_DROP || (if upper { closed_above } else { closed_below }) {
                return Ok(Tail::None);
            }
            let idx: Vec<usize> = (0..n)
                .filter(|&i| if upper { psi[i] >= psi[n - 1] - decade } else { psi[i] <= psi[0] + decade })
                .collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = idx.iter().map(|&i| (psi[i], lp[i])).unzip();
            let slope = if xs.len() >= 3 { ls_slope(&xs, &ys) } else { f64::NAN };
            let ok = if upper { slope < -1.0 - TAIL_MARGIN } else { slope > -1.0 + TAIL_MARGIN };
            if ok {
                Ok(Tail::PowerLaw { slope })
            } else if !upper {
                // The integrated likelihood has a finite limit at θ = 0, so a
                // proper prior cannot make this tail diverge; a non-integrable
                // local slope is a tabulation artefact and is held flat.
                Ok(Tail::PowerLaw { slope: 0.0 })
            } else {
                Err(Error::Improper(format!("upper tail of the posterior of theta has log-log slope {slope:.3}")))
            }
        };
        let lower_tail = tail(false)?;
        let upper_tail = tail(true)?;

        // Mass in ψ of exp(lp + ψ).
        let (a, b) = (psi[0], psi[n - 1]);
        let fine_psi: Vec<f64> = (0..CDF_POINTS).map(|i| a + (b - a) * i as f64 / (CDF_POINTS - 1) as f64).collect();
        let g: Vec<f64> = fine_psi.iter().map(|&x| (spline.eval(x) + x).exp()).collect();
        let mut cum = vec![0.0; CDF_POINTS];
        for i in 1..CDF_POINTS {
            cum[i] = cum[i - 1] + 0.5 * (fine_psi[i] - fine_psi[i - 1]) * (g[i] + g[i - 1]);
        }
        let lower_tail_mass = match lower_tail {
            Tail::PowerLaw { slope } => (lp[0] + a).exp() / (slope + 1.0),
            Tail::None => 0.0,
        };
        let upper_tail_mass = match upper_tail {
            Tail::PowerLaw { slope } => (lp[n - 1] + b).exp() / (-slope - 1.0),
            Tail::None => 0.0,
        };
        let total = lower_tail_mass + cum[CDF_POINTS - 1] + upper_tail_mass;
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Improper(format!("posterior of theta integrates to {total}")));
        }
        let fine_cdf: Vec<f64> = cum.iter().map(|c| (lower_tail_mass + c) / total).collect();

        let i_max = (0..n).max_by(|&i, &j| lp[i].total_cmp(&lp[j])).expect("non-empty");
        let (l, r) = (psi[i_max.saturating_sub(1)], psi[(i_max + 1).min(n - 1)]);
        let mode = maximize_scalar(|x| spline.eval(x), l, r, 9, 1e-10)?.x.exp();

        Ok(ThetaPosterior {
            spline,
            lower_tail,
            upper_tail,
            log_norm: total.ln(),
            mode,
            fine_psi,
            fine_cdf,
            lower_tail_mass: lower_tail_mass / total,
            upper_tail_mass: upper_tail_mass / total,
            table,
            prior,
            prior_extrapolated,
            shift,
        })
    }

    /// Posterior mode of θ (maximizer of the density on the θ scale).
    pub fn mode(&self) -> f64 {
        self.mode
    }

    /// Knots of the spline, on the θ scale.
    pub fn theta_knots(&self) -> Vec<f64> {
        self.spline.x().iter().map(|x| x.exp()).collect()
    }

    pub fn table(&self) -> &LikelihoodTable {
        &self.table
    }

    pub fn prior_extrapolated(&self) -> bool {
        self.prior_extrapolated
    }

    pub fn tails(&self) -> (Tail, Tail) {
        (self.lower_tail, self.upper_tail)
    }

    /// Normalized ln π(θ | z).
    pub fn ln_density(&self, theta: f64) -> f64 {
        self.ln_unnormalized(theta.ln()) - self.log_norm
    }

    /// Spline log posterior at ψ = ln θ, shifted so the maximum knot is 0.
    fn ln_unnormalized(&self, psi: f64) -> f64 {
        let (lo, hi) = (self.spline.lower(), self.spline.upper());
        if psi < lo {
            match self.lower_tail {
                Tail::PowerLaw { slope } => self.spline.eval(lo) + slope * (psi - lo),
                Tail::None => f64::NEG_INFINITY,
            }
        } else if psi > hi {
            match self.upper_tail {
                Tail::PowerLaw { slope } => self.spline.eval(hi) + slope * (psi - hi),
                Tail::None => f64::NEG_INFINITY,
            }
        } else {
            self.spline.eval(psi)
        }
    }

    /// Posterior CDF of θ.
    pub fn cdf(&self, theta: f64) -> f64 {
        let psi = theta.ln();
        let (lo, hi) = (self.spline.lower(), self.spline.upper());
        if psi < lo {
            return match self.lower_tail {
                Tail::PowerLaw { slope } => self.lower_tail_mass * ((slope + 1.0) * (psi - lo)).exp(),
                Tail::None => 0.0,
            };
        }
        if psi >= hi {
            return match self.upper_tail {
                Tail::PowerLaw { slope } => 1.0 - self.upper_tail_mass * ((slope + 1.0) * (psi - hi)).exp(),
                Tail::None => 1.0,
            };
        }
        let k = self.fine_psi.partition_point(|&x| x <= psi).clamp(1, CDF_POINTS - 1);
        let (x0, x1) = (self.fine_psi[k - 1], self.fine_psi[k]);
        let w = (psi - x0) / (x1 - x0);
        self.fine_cdf[k - 1] * (1.0 - w) + self.fine_cdf[k] * w
    }

    /// Tabulated normalized density on the spline knots, for reporting.
    pub fn tabulated(&self) -> Result<TabulatedDensity> {
        let theta = self.theta_knots();
        let logs: Vec<f64> = theta.iter().map(|&t| self.ln_density(t)).collect();
        let mut d = TabulatedDensity::from_log(theta, logs.clone(), Support::HalfLine)?;
        d.values = logs.iter().map(|l| l.exp()).collect();
        d.log_values = logs;
        d.normalization = Some((-self.log_norm - self.shift).exp());
        Ok(d)
    }
}

fn knots(table: &LikelihoodTable, prior: &LogInterpolator, upper_limit: f64) -> Vec<(f64, f64)> {
    table
        .entries
        .iter()
        .filter(|e| e.theta < upper_limit)
        .map(|e| (e.theta, prior.eval(e.theta).0 + e.loglik))
        .filter(|k| k.1.is_finite())
        .collect()
}

/// Bounding rectangle of the generalized ratio-of-uniforms region
/// {(u, v) : 0 < u ≤ g(v/u^r + ψ*)^{1/(r+1)}} for g normalized to g(ψ*) = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouBox {
    pub center: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// Finds the ratio-of-uniforms box for a log density `lg` on ψ whose mass
/// lies in [lo, hi], relocated to its maximizer.
pub fn rou_box(lg: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<(RouBox, f64)> {
    let peak = maximize_scalar(&lg, lo, hi, 2001, 1e-10)?;
    let (center, top) = (peak.x, peak.value);
    let e = ROU_R / (ROU_R + 1.0);
    let side = |a: f64, b: f64, sign: f64| -> Result<f64> {
        if b - a <= 0.0 {
            return Ok(0.0);
        }
        let m = maximize_scalar(|x| sign * (x - center) * (e * (lg(x) - top)).exp(), a, b, 2001, 1e-10)?;
        Ok(m.value.max(0.0))
    };
    let v_max = side(center, hi, 1.0)?;
    let v_min = -side(lo, center, -1.0)?;
    if !(v_max.is_finite() && v_min.is_finite()) || v_max - v_min <= 0.0 {
        return Err(Error::Sampler(format!("degenerate ratio-of-uniforms box [{v_min}, {v_max}] around {center}")));
    }
    Ok((RouBox { center, u_max: 1.0, v_min, v_max }, top))
}

/// Draws ψ from exp(lg) with the generalized ratio-of-uniforms method.
/// Returns the draw and the number of proposals used.
fn rou_draw<R: Rng>(rng: &mut R, rb: &RouBox, lg_rel: &impl Fn(f64) -> f64) -> Result<(f64, usize)> {
    for attempt in 1..=MAX_ATTEMPTS {
        let u = rb.u_max * (1.0 - rng.random::<f64>());
        let v = rb.v_min + (rb.v_max - rb.v_min) * rng.random::<f64>();
        let x = rb.center + v / u.powf(ROU_R);
        if (ROU_R + 1.0) * u.ln() <= lg_rel(x) {
            return Ok((x, attempt));
        }
    }
    Err(Error::Sampler(format!("no acceptance in {MAX_ATTEMPTS} ratio-of-uniforms proposals")))
}

/// One posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub theta: f64,
}

/// Independent posterior draws of (β, σ², θ).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub draws: Vec<Draw>,
    pub seed: u64,
    pub acceptance_rate: f64,
    pub prior: PriorKind,
    pub rou: RouBox,
    /// Posterior mode of θ from the quadrature-normalized marginal.
    pub theta_mode: f64,
}

/// Summary of one scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mode: Option<f64>,
    pub median: f64,
    pub mean: f64,
    pub hpd_lower: f64,
    pub hpd_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub prior: String,
    pub n_draws: usize,
    pub seed: u64,
    pub acceptance_rate: f64,
    pub level: f64,
    pub parameters: Vec<ParamSummary>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn p(&self) -> usize {
        self.draws.first().map_or(0, |d| d.beta.len())
    }

    pub fn theta(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.theta).collect()
    }

    pub fn sigma2(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.sigma2).collect()
    }

    pub fn beta(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.beta[k]).collect()
    }

    /// Mode, median, mean and HPD bounds of every parameter.
    pub fn summary(&self, level: f64) -> Result<PosteriorSummary> {
        let mut parameters = Vec::with_capacity(self.p() + 2);
        let mut push = |name: String, xs: Vec<f64>, mode: Option<f64>| -> Result<()> {
            let (hpd_lower, hpd_upper) = hpd_interval(&xs, level)?;
            parameters.push(ParamSummary { name, mode, median: median(&xs), mean: mean(&xs), hpd_lower, hpd_upper });
            Ok(())
        };
        for k in 0..self.p() {
            push(format!("beta_{}", k + 1), self.beta(k), None)?;
        }
        push("sigma2".into(), self.sigma2(), None)?;
        push("theta".into(), self.theta(), Some(self.theta_mode))?;
        Ok(PosteriorSummary {
            prior: self.prior.label().into(),
            n_draws: self.len(),
            seed: self.seed,
            acceptance_rate: self.acceptance_rate,
            level,
            parameters,
        })
    }

    /// CSV with columns beta_1..beta_p, sigma2, theta.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.p()).map(|k| format!("beta_{k}")).collect();
        header.push("sigma2".into());
        header.push("theta".into());
        wtr.write_record(&header)?;
        for d in &self.draws {
            let row: Vec<String> =
                d.beta.iter().chain([d.sigma2, d.theta].iter()).map(|v| format!("{v:.12e}")).collect();
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Minimum number of draws accepted by [`hpd_interval`].
pub const HPD_MIN_DRAWS: usize = 100;

/// Shortest interval containing a `level` fraction of the sorted draws.
pub fn hpd_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("credible level must lie in (0, 1), got {level}")));
    }
    if draws.len() < HPD_MIN_DRAWS {
        return Err(Error::InvalidParameter(format!("HPD needs at least {HPD_MIN_DRAWS} draws, got {}", draws.len())));
    }
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let k = ((level * n as f64).ceil() as usize).clamp(1, n);
    let best = (0..=n - k).min_by(|&i, &j| (s[i + k - 1] - s[i]).total_cmp(&(s[j + k - 1] - s[j]))).expect("n ≥ k");
    Ok((s[best], s[best + k - 1]))
}

/// Draws from the joint posterior: θ by ratio-of-uniforms on ln θ,
/// σ² | θ ~ IG((n−p)/2, S²_θ/2) and β | σ², θ ~ N(β̂_θ, σ²(XᵀR_θ⁻¹X)⁻¹).
pub fn sample_posterior(
    ctx: &LikelihoodContext,
    posterior: &ThetaPosterior,
    prior: PriorKind,
    cfg: &SamplerConfig,
) -> Result<PosteriorDraws> {
    if cfg.n_draws == 0 {
        return Err(Error::InvalidParameter("at least one draw is required".into()));
    }
    let (lo, hi) = sampling_range(posterior);
    let spline_lg = |x: f64| posterior.ln_unnormalized(x) + x;
    let (mut rb, mut top) = rou_box(spline_lg, lo, hi)?;
    let exact_lg = |x: f64| -> f64 {
        let t = x.exp();
        match marginal_post_theta(t, ctx, &posterior.prior) {
            Ok((v, _)) => v - posterior.shift + x,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    if cfg.exact_marginal {
        // Re-center on the exact density and pad the spline box, which is
        // accurate to interpolation error only.
        let m = maximize_scalar(exact_lg, rb.center - 0.5, rb.center + 0.5, 21, 1e-8)?;
        top = m.value;
        rb.center = m.x;
        let (v_lo, v_hi) = (rb.v_min * 1.05, rb.v_max * 1.05);
        rb.v_min = v_lo;
        rb.v_max = v_hi;
    }
    let a = 0.5 * (ctx.n() - ctx.p()) as f64;
    let gamma = Gamma::new(a, 1.0).map_err(|e| Error::InvalidParameter(format!("gamma shape {a}: {e}")))?;
    let interp = if cfg.conditionals == Conditionals::Interpolated { Some(ConditionalSplines::new(&posterior.table)?) } else { None };

    let results: Vec<Result<(Draw, usize)>> = (0..cfg.n_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let (psi, attempts) = if cfg.exact_marginal {
                rou_draw(&mut rng, &rb, &|x| exact_lg(x) - top)?
            } else {
                rou_draw(&mut rng, &rb, &|x| spline_lg(x) - top)?
            };
            let theta = psi.exp();
            let (s2, beta_hat, rx) = match interp.as_ref().and_then(|s| s.at(psi)) {
                Some(v) => v,
                None => {
                    let g = ctx.gls(theta)?;
                    (g.s2, g.beta, g.rx)
                }
            };
            let sigma2 = 0.5 * s2 / gamma.sample(&mut rng);
            let xi = DVector::from_fn(beta_hat.len(), |_, _| StandardNormal.sample(&mut rng));
            let mut dev = xi;
            rx.solve_upper_triangular_mut(&mut dev);
            let beta = beta_hat + dev * sigma2.sqrt();
            Ok((Draw { beta: beta.iter().copied().collect(), sigma2, theta }, attempts))
        })
        .collect();
    let mut draws = Vec::with_capacity(cfg.n_draws);
    let mut attempts = 0usize;
    for r in results {
        let (d, k) = r?;
        draws.push(d);
        attempts += k;
    }
    Ok(PosteriorDraws {
        acceptance_rate: cfg.n_draws as f64 / attempts as f64,
        draws,
        seed: cfg.seed,
        prior,
        rou: rb,
        theta_mode: posterior.mode(),
    })
}

/// ψ range holding all but a negligible fraction of the mass of exp(lg).
fn sampling_range(p: &ThetaPosterior) -> (f64, f64) {
    let (lo, hi) = (p.spline.lower(), p.spline.upper());
    let reach = |edge: f64, slope: f64| {
        // lg = ln π + ψ decays at rate |slope + 1| in ψ beyond the edge.
        let start = p.spline.eval(edge) + edge;
        let peak = p.spline.y().iter().zip(p.spline.x()).map(|(y, x)| y + x).fold(f64::NEG_INFINITY, f64::max);
        ((start - peak + 80.0).max(0.0) / (slope + 1.0).abs()).min(200.0)
    };
    let lo = match p.lower_tail {
        Tail::PowerLaw { slope } => lo - reach(lo, slope),
        Tail::None => lo,
    };
    let hi = match p.upper_tail {
        Tail::PowerLaw { slope } => hi + reach(hi, slope),
        Tail::None => hi,
    };
    (lo, hi)
}

/// Splines of the GLS quantities in ln θ.
struct ConditionalSplines {
    ln_s2: Pchip,
    beta: Vec<Pchip>,
    rx: Vec<(usize, usize, Pchip)>,
    p: usize,
}

impl ConditionalSplines {
    fn new(table: &LikelihoodTable) -> Result<Self> {
        let psi: Vec<f64> = table.entries.iter().map(|e| e.theta.ln()).collect();
        let p = table.entries.first().map_or(0, |e| e.beta.len());
        let col = |f: &dyn Fn(&TableEntry) -> f64| Pchip::new(psi.clone(), table.entries.iter().map(f).collect());
        let ln_s2 = col(&|e| e.ln_s2)?;
        let beta = (0..p).map(|k| col(&|e| e.beta[k])).collect::<Result<Vec<_>>>()?;
        let mut rx = Vec::new();
        for j in 0..p {
            for i in 0..=j {
                rx.push((i, j, col(&|e| e.rx[(i, j)])?));
            }
        }
        Ok(ConditionalSplines { ln_s2, beta, rx, p })
    }

    fn at(&self, psi: f64) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        if psi < self.ln_s2.lower() || psi > self.ln_s2.upper() {
            return None;
        }
        let beta = DVector::from_iterator(self.p, self.beta.iter().map(|s| s.eval(psi)));
        let mut rx = DMatrix::zeros(self.p, self.p);
        for (i, j, s) in &self.rx {
            rx[(*i, *j)] = s.eval(psi);
        }
        Some((self.ln_s2.eval(psi).exp(), beta, rx))
    }
}

/// Posterior of θ and joint draws for one dataset and prior.
pub fn fit_posterior(
    data: &DataVector,
    nu: f64,
    prior_kind: PriorKind,
    prior: &TabulatedDensity,
    cfg: &SamplerConfig,
) -> Result<(ThetaPosterior, PosteriorDraws)> {
    let ctx = LikelihoodContext::new(data, nu)?;
    let post = ThetaPosterior::build(&ctx, prior, None, cfg.refine_points)?;
    let draws = sample_posterior(&ctx, &post, prior_kind, cfg)?;
    Ok((post, draws))
}

/// Integrated likelihood m(z | ν) over a grid of smoothness values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessScan {
    pub nu_grid: Vec<f64>,
    /// ln m(z | ν); `None` where the scan failed for that ν.
    pub log_m: Vec<Option<f64>>,
    /// ln C(ν), the log normalizing constant of the approximate prior.
    pub log_c: Vec<Option<f64>>,
    /// Reason a ν was flagged, if any.
    pub flags: Vec<Option<String>>,
    pub argmax: Option<f64>,
}

impl SmoothnessScan {
    /// CSV with columns nu, log_m, log_c, flag.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["nu", "log_m", "log_c", "flag"])?;
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.10e}"));
        for i in 0..self.nu_grid.len() {
            wtr.write_record(&[
                format!("{}", self.nu_grid[i]),
                fmt(self.log_m[i]),
                fmt(self.log_c[i]),
                self.flags[i].clone().unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Spectral tuning used for each ν in a smoothness scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanTuning {
    /// Per-ν defaults from the design.
    Auto { truncation: usize },
    Fixed(SpectralConfig),
}

/// ln m(z | ν) = ln ∫ π^AR(θ | ν) L^I(θ; z, ν) dθ for one ν, with the
/// normalized approximate reference prior. Returns (ln m, ln C(ν)).
pub fn log_marginal_nu(data: &DataVector, nu: f64, cfg: &SpectralConfig, grid: &[f64]) -> Result<(f64, f64)> {
    let prior = tabulate_approx_prior(&data.design, nu, cfg, grid)?.normalize()?;
    let log_c = prior.normalization.expect("normalized").ln();
    let ctx = LikelihoodContext::new(data, nu)?;
    let table = LikelihoodTable::tabulate(&ctx, &prior.theta)?;
    let k = 0.5 * (data.n() - data.p()) as f64;
    let constant = crate::special::ln_gamma(k) - k * std::f64::consts::PI.ln();
    // Trapezoid in ψ of π(θ) θ L(θ); failed θ contribute zero.
    let psi: Vec<f64> = prior.theta.iter().map(|t| t.ln()).collect();
    let lookup = |t: f64| table.entries.iter().find(|e| (e.theta - t).abs() <= 1e-12 * t).map(|e| e.loglik);
    let terms: Vec<f64> = prior
        .theta
        .iter()
        .zip(&prior.log_values)
        .map(|(&t, &lp)| lookup(t).map_or(f64::NEG_INFINITY, |ll| lp + t.ln() + ll))
        .collect();
    let mut pieces = Vec::with_capacity(terms.len() + 1);
    for i in 1..terms.len() {
        let (a, b) = (terms[i - 1], terms[i]);
        let m = a.max(b);
        if m > f64::NEG_INFINITY {
            pieces.push(m + (0.5 * (psi[i] - psi[i - 1]) * ((a - m).exp() + (b - m).exp())).ln());
        }
    }
    // Upper tail: prior mass beyond the grid times the likelihood at the edge.
    if let (Some(q), Some(ll)) = (prior.quadrature.as_ref(), lookup(*prior.theta.last().expect("non-empty"))) {
        if q.upper_tail_mass > 0.0 {
            pieces.push(q.upper_tail_mass.ln() + ll);
        }
    }
    let m = pieces.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::NoConvergence(format!("integrated likelihood of nu = {nu} vanished on the grid")));
    }
    let log_m = m + pieces.iter().map(|p| (p - m).exp()).sum::<f64>().ln() + constant;
    Ok((log_m, log_c))
}

/// Scans m(z | ν) over `nu_grid`. Failing ν values are flagged and skipped.
pub fn integrated_lik_nu(nu_grid: &[f64], data: &DataVector, tuning: ScanTuning, grid: Option<&[f64]>) -> Result<SmoothnessScan> {
    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            default_grid = default_theta_grid(&data.design)?;
            &default_grid
        }
    };
    let mut scan = SmoothnessScan { nu_grid: nu_grid.to_vec(), log_m: vec![], log_c: vec![], flags: vec![], argmax: None };
    for &nu in nu_grid {
        let cfg = match tuning {
            ScanTuning::Fixed(c) => Ok(c),
            ScanTuning::Auto { truncation } => tune_defaults(&data.design, None, nu)
                .map(|t| SpectralConfig { m1: t.m1, m2: t.m2, delta: t.delta, truncation }),
        };
        match cfg.and_then(|c| log_marginal_nu(data, nu, &c, grid)) {
            Ok((lm, lc)) if lm.is_finite() && lc.is_finite() => {
                scan.log_m.push(Some(lm));
                scan.log_c.push(Some(lc));
                scan.flags.push(None);
            }
            Ok((lm, lc)) => {
                scan.log_m.push(None);
                scan.log_c.push(None);
                scan.flags.push(Some(format!("non-finite result (ln m = {lm}, ln C = {lc})")));
            }
            Err(e) if e.is_numerical() => {
                scan.log_m.push(None);
                scan.log_c.push(None);
                scan.flags.push(Some(e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    scan.argmax = scan
        .nu_grid
        .iter()
        .zip(&scan.log_m)
        .filter_map(|(&nu, lm)| lm.map(|v| (nu, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(nu, _)| nu);
    Ok(scan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::SpatialDesign;
    use crate::priors::tabulate_inverse_gamma;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn scattered(n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
    }

    fn simulated(n: usize, sigma2: f64, theta: f64, nu: f64, seed: u64) -> DataVector {
        let pts = scattered(n, seed);
        let ctx = crate::linalg::CorrelationContext::new(&pts, nu).unwrap();
        let chol = crate::linalg::guarded_cholesky(ctx.corr(theta), theta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let eta = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let z = (chol.l() * eta) * sigma2.sqrt();
        DataVector::new(SpatialDesign::constant_mean(pts).unwrap(), z.add_scalar(1.0)).unwrap()
    }

    #[test]
    fn hpd_of_uniform_draws() {
        let xs: Vec<f64> = (0..10_000).map(|i| (i as f64 + 0.5) / 10_000.0).collect();
        let (l, u) = hpd_interval(&xs, 0.95).unwrap();
        assert!((u - l - 0.95).abs() < 1e-3);
        assert!(hpd_interval(&xs, 1.0).is_err());
        assert!(hpd_interval(&xs, 0.0).is_err());
        assert!(hpd_interval(&xs[..50], 0.9).is_err());
    }

    #[test]
    fn hpd_of_symmetric_draws_is_equal_tailed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut xs: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (l, u) = hpd_interval(&xs, 0.9).unwrap();
        xs.sort_by(f64::total_cmp);
        let q = |p: f64| xs[(p * xs.len() as f64) as usize];
        assert!((l - q(0.05)).abs() <= 0.05 && (u - q(0.95)).abs() <= 0.05);
    }

    #[test]
    fn rou_samples_a_gaussian() {
        let lg = |x: f64| -0.5 * (x - 1.0) * (x - 1.0) / 0.25;
        let (rb, top) = rou_box(lg, -10.0, 10.0).unwrap();
        assert!((rb.center - 1.0).abs() < 1e-6 && top.abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 20_000;
        let mut xs: Vec<f64> = (0..n).map(|_| rou_draw(&mut rng, &rb, &|x| lg(x) - top).unwrap().0).collect();
        xs.sort_by(f64::total_cmp);
        let normal = Normal::new(1.0, 0.5).unwrap();
        let ks = xs.iter().enumerate().map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        });
        assert!(ks.fold(0.0, f64::max) < 0.015);
    }

    #[test]
    fn flat_prior_posterior_is_the_likelihood() {
        let data = simulated(30, 1.0, 0.2, 0.5, 5);
        let ctx = LikelihoodContext::new(&data, 0.5).unwrap();
        let grid = log_grid(0.01, 3.0, 120);
        let flat = TabulatedDensity::new(grid.clone(), vec![1.0; grid.len()], Support::Compact).unwrap();
        let post = ThetaPosterior::build(&ctx, &flat, None, 0).unwrap();
        let (a, b) = (grid[40], grid[90]);
        let lhs = post.ln_density(a) - post.ln_density(b);
        let rhs = ctx.integrated(a, Representation::A).unwrap() - ctx.integrated(b, Representation::A).unwrap();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn spike_prior_pins_the_mode() {
        let data = simulated(30, 1.0, 0.2, 0.5, 6);
        let ctx = LikelihoodContext::new(&data, 0.5).unwrap();
        let grid = log_grid(0.28, 0.32, 400);
        let logs: Vec<f64> = grid.iter().map(|t: &f64| -0.5 * ((t.ln() - 0.3f64.ln()) / 0.002).powi(2)).collect();
        let spike = TabulatedDensity::from_log(grid, logs, Support::Compact).unwrap();
        let post = ThetaPosterior::build(&ctx, &spike, None, 400).unwrap();
        assert!((post.mode() / 0.3 - 1.0).abs() < 2e-3);
    }

    #[test]
    fn posterior_cdf_is_a_distribution() {
        let data = simulated(40, 1.0, 0.2, 0.5, 7);
        let ctx = LikelihoodContext::new(&data, 0.5).unwrap();
        let (a, b) = crate::priors::INVERSE_GAMMA_BASELINE;
        let prior = tabulate_inverse_gamma(a, b, &default_theta_grid(&data.design).unwrap()).unwrap();
        let post = ThetaPosterior::build(&ctx, &prior, None, 200).unwrap();
        assert!(post.cdf(1e-9) < 1e-12);
        assert!(post.cdf(1e9) > 1.0 - 1e-4);
        let ts = log_grid(1e-3, 1e4, 400);
        assert!(ts.windows(2).all(|w| post.cdf(w[1]) >= post.cdf(w[0])));
        assert!(matches!(post.tails().1, Tail::PowerLaw { .. }));
    }

    #[test]
    fn sigma2_draws_at_fixed_theta_match_inverse_gamma_mean() {
        let data = simulated(40, 1.0, 0.2, 0.5, 8);
        let ctx = LikelihoodContext::new(&data, 0.5).unwrap();
        let grid = log_grid(0.2495, 0.2505, 300);
        let logs: Vec<f64> = grid.iter().map(|t: &f64| -0.5 * ((t.ln() - 0.25f64.ln()) / 1e-4).powi(2)).collect();
        let spike = TabulatedDensity::from_log(grid, logs, Support::Compact).unwrap();
        let post = ThetaPosterior::build(&ctx, &spike, None, 400).unwrap();
        let cfg = SamplerConfig { n_draws: 10_000, seed: 11, ..Default::default() };
        let draws = sample_posterior(&ctx, &post, PriorKind::ApproxRef, &cfg).unwrap();
        let g = ctx.gls(0.25).unwrap();
        let expected = g.s2 / (40.0 - 1.0 - 2.0);
        let m = mean(&draws.sigma2());
        assert!((m / expected - 1.0).abs() < 0.05, "{m} vs {expected}");
        // β draws centre on the GLS estimate.
        let b = mean(&draws.beta(0));
        let se = (expected * (g.rx[(0, 0)].powi(-2))).sqrt() / 100.0;
        assert!((b - g.beta[0]).abs() < 4.0 * se);
    }

    #[test]
    fn identical_seeds_reproduce_draws() {
        let data = simulated(30, 1.0, 0.2, 0.5, 12);
        let ctx = LikelihoodContext::new(&data, 0.5).unwrap();
        let (a, b) = crate::priors::INVERSE_GAMMA_BASELINE;
        let prior = tabulate_inverse_gamma(a, b, &default_theta_grid(&data.design).unwrap()).unwrap();
        let post = ThetaPosterior::build(&ctx, &prior, None, 100).unwrap();
        let cfg = SamplerConfig { n_draws: 300, seed: 5, ..Default::default() };
        let kind = PriorKind::InverseGamma { shape: a, scale: b };
        let d1 = sample_posterior(&ctx, &post, kind, &cfg).unwrap();
        let d2 = sample_posterior(&ctx, &post, kind, &cfg).unwrap();
        assert_eq!(d1.draws, d2.draws);
        let d3 = sample_posterior(&ctx, &post, kind, &SamplerConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(d1.draws, d3.draws);
        let s = d1.summary(0.95).unwrap();
        assert_eq!(s.parameters.len(), 3);
        let th = &s.parameters[2];
        assert!(th.hpd_lower <= th.median && th.median <= th.hpd_upper);
    }

    #[test]
    fn interpolated_conditionals_track_exact_ones() {
        let data = simulated(40, 1.0, 0.2, 0.5, 13);
        let ctx = LikelihoodContext::new(&data, 0.5).unwrap();
        let (a, b) = crate::priors::INVERSE_GAMMA_BASELINE;
        let prior = tabulate_inverse_gamma(a, b, &default_theta_grid(&data.design).unwrap()).unwrap();
        let post = ThetaPosterior::build(&ctx, &prior, None, 200).unwrap();
        let s = ConditionalSplines::new(post.table()).unwrap();
        for t in [0.05, 0.13, 0.4] {
            let (s2, beta, rx) = s.at(f64::ln(t)).unwrap();
            let g = ctx.gls(t).unwrap();
            assert!((s2 / g.s2 - 1.0).abs() < 1e-4);
            assert!((beta[0] - g.beta[0]).abs() < 1e-4 * (1.0 + g.beta[0].abs()));
            assert!((rx[(0, 0)].abs() / g.rx[(0, 0)].abs() - 1.0).abs() < 1e-4);
        }
    }
}
