//! Exact and approximate reference priors for the range parameter, their
//! tabulation, normalization and tail diagnostics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::covmodel::{AliasConfig, AliasTable, MaternFamily, SpectralFamily};
use crate::designs::{
    build_aux_grid, build_spectral_design, nearest_neighbor_distances, FreqIndex, SpatialDesign, SpectralDesign,
};
use crate::error::{Error, Result};
use crate::linalg::{forward_solve, guarded_cholesky, orthogonal_complement, thin_qr, CorrelationContext};
use crate::numerics::{log_grid, ls_slope, Pchip};
use crate::spectral_basis::{build_h1, build_x1_for_trend};

/// Which exact representation to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Trace formula in Σ_θ and the projection Q_θ.
    A,
    /// Trace formula in the contrast covariance WᵀΣ_θW.
    B,
}

/// Prior families for the range parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorKind {
    ExactRef { representation: Representation },
    ApproxRef,
    InverseGamma { shape: f64, scale: f64 },
}

impl PriorKind {
    pub fn label(&self) -> &'static str {
        match self {
            PriorKind::ExactRef { .. } => "exact-ref",
            PriorKind::ApproxRef => "approx-ref",
            PriorKind::InverseGamma { .. } => "inverse-gamma",
        }
    }
}

/// Default inverse-gamma hyperparameters (shape, scale) for the baseline prior.
pub const INVERSE_GAMMA_BASELINE: (f64, f64) = (0.5, std::f64::consts::SQRT_2 / 100.0);

/// ln of the IG(shape, scale) density.
pub fn inverse_gamma_ln_pdf(theta: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - crate::special::ln_gamma(shape) - (shape + 1.0) * theta.ln() - scale / theta
}

/// sqrt(tr(A²) − tr(A)²/dof), clamped at zero.
fn trace_formula(tr_a: f64, tr_a2: f64, dof: usize) -> f64 {
    (tr_a2 - tr_a * tr_a / dof as f64).max(0.0).sqrt()
}

/// An orthonormal basis W of the error-contrast space: WᵀW = I, XᵀW = 0.
#[derive(Debug, Clone)]
pub struct ContrastProjector {
    pub w: DMatrix<f64>,
}

pub fn build_contrast_projector(design: &SpatialDesign) -> Result<ContrastProjector> {
    Ok(ContrastProjector { w: orthogonal_complement(design.covariates())? })
}

/// Evaluates the exact reference prior for one design and smoothness.
#[derive(Debug, Clone)]
pub struct ExactPrior {
    ctx: CorrelationContext,
    x: DMatrix<f64>,
    w: DMatrix<f64>,
}

impl ExactPrior {
    pub fn new(design: &SpatialDesign, nu: f64) -> Result<Self> {
        Ok(ExactPrior {
            ctx: CorrelationContext::new(design.locations(), nu)?,
            x: design.covariates().clone(),
            w: build_contrast_projector(design)?.w,
        })
    }

    fn dof(&self) -> usize {
        self.x.nrows() - self.x.ncols()
    }

    /// Unnormalized π^R(θ).
    pub fn value(&self, theta: f64, rep: Representation) -> Result<f64> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidParameter(format!("theta must be positive, got {theta}")));
        }
        match rep {
            Representation::A => self.value_a(theta),
            Representation::B => self.value_b(theta),
        }
    }

    fn value_a(&self, theta: f64) -> Result<f64> {
        let chol = guarded_cholesky(self.ctx.corr(theta), theta)?;
        let xs = forward_solve(&chol, &self.x);
        let q = thin_qr(&xs)?.q;
        // G = L⁻¹ Σ' L⁻ᵀ, formed from two triangular solves.
        let t = forward_solve(&chol, &self.ctx.dcorr(theta));
        let mut g = forward_solve(&chol, &t.transpose());
        g = (&g + g.transpose()) * 0.5;
        let gq = &g * &q;
        let qgq = q.tr_mul(&gq);
        let tr_a = g.trace() - qgq.trace();
        let tr_a2 = g.norm_squared() - 2.0 * gq.norm_squared() + qgq.norm_squared();
        Ok(trace_formula(tr_a, tr_a2, self.dof()))
    }

    fn value_b(&self, theta: f64) -> Result<f64> {
        let rw = self.w.tr_mul(&(self.ctx.corr(theta) * &self.w));
        let drw = self.w.tr_mul(&(self.ctx.dcorr(theta) * &self.w));
        let chol = guarded_cholesky((&rw + rw.transpose()) * 0.5, theta)?;
        let t = forward_solve(&chol, &drw);
        let g = forward_solve(&chol, &t.transpose());
        Ok(trace_formula(g.trace(), g.norm_squared(), self.dof()))
    }
}

/// Unnormalized exact reference prior at one θ.
pub fn exact_ref_prior(theta: f64, design: &SpatialDesign, nu: f64, rep: Representation) -> Result<f64> {
    ExactPrior::new(design, nu)?.value(theta, rep)
}

/// Tuning of the spectral approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub m1: usize,
    pub m2: usize,
    pub delta: f64,
    pub truncation: usize,
}

/// Evaluates the approximate reference prior π^AR.
///
/// The constant-mean case is matrix-free; a general mean uses X1 = L1ᵀX̃
/// and only p × p factorizations.
#[derive(Debug, Clone)]
pub struct ApproxPrior<F: SpectralFamily = MaternFamily> {
    family: F,
    table: AliasTable,
    n_corner: usize,
    n_pairs: usize,
    x1: Option<DMatrix<f64>>,
}

impl<F: SpectralFamily> ApproxPrior<F> {
    /// Constant mean: sample variance of ∂θ ln f̃ over W_M ∖ {0}.
    pub fn constant_mean(spectral: &SpectralDesign, family: F, truncation: usize) -> Result<Self> {
        let alias = AliasConfig::new(spectral.delta, truncation)?;
        let freqs: Vec<[f64; 2]> = spectral.corner.iter().chain(spectral.index_set().iter()).map(|&k| spectral.frequency(k)).collect();
        let table = AliasTable::new(&family, &freqs, &alias)?;
        Ok(ApproxPrior { family, table, n_corner: spectral.corner.len(), n_pairs: spectral.index_set().len(), x1: None })
    }

    /// General mean with X1 given in the (I_C, I, I) layout.
    pub fn general(spectral: &SpectralDesign, family: F, truncation: usize, x1: DMatrix<f64>) -> Result<Self> {
        if x1.nrows() != spectral.m() {
            return Err(Error::DimensionMismatch(format!("X1 has {} rows, expected {}", x1.nrows(), spectral.m())));
        }
        if x1.ncols() >= spectral.m() {
            return Err(Error::InvalidDesign("need M > p".into()));
        }
        let mut ap = Self::constant_mean(spectral, family, truncation)?;
        ap.x1 = Some(x1);
        Ok(ap)
    }

    pub fn m(&self) -> usize {
        self.n_corner + 2 * self.n_pairs
    }

    fn expanded(&self, theta: f64) -> (Vec<f64>, Vec<f64>) {
        let k = self.table.len();
        let mut ln = vec![0.0; k];
        let mut dln = vec![0.0; k];
        self.table.eval_all(&self.family, theta, &mut ln, &mut dln);
        let pairs = self.n_corner..self.n_corner + self.n_pairs;
        ln.extend_from_within(pairs.clone());
        dln.extend_from_within(pairs);
        (ln, dln)
    }

    /// ∂θ ln f̃ at every frequency in the (I_C, I, I) layout.
    pub fn dlog_spectrum(&self, theta: f64) -> Vec<f64> {
        self.expanded(theta).1
    }

    /// Unnormalized π^AR(θ).
    pub fn value(&self, theta: f64) -> Result<f64> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidParameter(format!("theta must be positive, got {theta}")));
        }
        let (ln, d) = self.expanded(theta);
        match &self.x1 {
            None => Ok(centered_sum_of_squares(&d[1..]).sqrt()),
            Some(x1) => general_trace(&ln, &d, x1),
        }
    }
}

/// Σ (x − x̄)² by two passes.
fn centered_sum_of_squares(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// Leverage above which 1 − l is recomputed from the complement rows.
const HIGH_LEVERAGE: f64 = 0.5;

fn general_trace(ln_f: &[f64], d: &[f64], x1: &DMatrix<f64>) -> Result<f64> {
    let (m, p) = x1.shape();
    let ln_max = ln_f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Y = Λ^{-1/2} X1 up to a common scale, which leaves its column space fixed.
    let y = DMatrix::from_fn(m, p, |i, j| x1[(i, j)] * (-0.5 * (ln_f[i] - ln_max)).exp());
    let qr = y.qr();
    let r_diag = qr.r().diagonal();
    let scale = r_diag.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if r_diag.iter().any(|v| v.abs() <= scale * 1e-12) {
        return Err(Error::RankDeficient("X1ᵀΛ̃⁻¹X1 is singular".into()));
    }
    let q = qr.q();
    let leverage: Vec<f64> = (0..m).map(|k| q.row(k).norm_squared()).collect();
    // P = I − QQᵀ. Its diagonal 1 − l loses all accuracy when l ≈ 1, so
    // for the (at most 2p) high-leverage rows it is taken from the
    // complement part of the full orthogonal factor instead.
    let high: Vec<usize> = (0..m).filter(|&k| leverage[k] > HIGH_LEVERAGE).collect();
    let mut p_diag: Vec<f64> = leverage.iter().map(|l| 1.0 - l).collect();
    for &k in &high {
        let mut e = DVector::zeros(m);
        e[k] = 1.0;
        qr.q_tr_mul(&mut e);
        p_diag[k] = e.rows(p, m - p).norm_squared();
    }
    // The formula is invariant to shifting d. Shifting by tr(A)/(M − p)
    // makes tr(A) vanish, which removes the cancellation in the difference.
    let mean = d.iter().sum::<f64>() / m as f64;
    let tr_centered: f64 = d.iter().zip(&p_diag).map(|(v, pk)| (v - mean) * pk).sum();
    let shift = mean + tr_centered / (m - p) as f64;
    let dc: Vec<f64> = d.iter().map(|v| v - shift).collect();
    let tr_a: f64 = dc.iter().zip(&p_diag).map(|(v, pk)| v * pk).sum();

    // tr(A²) = Σ_i dc_i² P_ii² + Σ_{i≠j} dc_i dc_j (q_i·q_j)².
    let is_high = |k: usize| leverage[k] > HIGH_LEVERAGE;
    let mut tr_a2: f64 = dc.iter().zip(&p_diag).map(|(v, pk)| v * v * pk * pk).sum();
    // Low-leverage block via ‖Q_Lᵀ D Q_L‖² minus its diagonal.
    let mut qdq = DMatrix::<f64>::zeros(p, p);
    for k in (0..m).filter(|&k| !is_high(k)) {
        let row = q.row(k);
        qdq += row.transpose() * row * dc[k];
        tr_a2 -= dc[k] * dc[k] * leverage[k] * leverage[k];
    }
    tr_a2 += qdq.norm_squared();
    // Pairs involving a high-leverage row, summed directly.
    for &h in &high {
        let qh = q.row(h);
        for j in 0..m {
            if j == h || (is_high(j) && j < h) {
                continue;
            }
            let c = qh.dot(&q.row(j));
            tr_a2 += 2.0 * dc[h] * dc[j] * c * c;
        }
    }
    Ok(trace_formula(tr_a, tr_a2, m - p))
}

impl ApproxPrior<MaternFamily> {
    /// Builds the approximate prior for a design, choosing the constant-mean
    /// path when p = 1 and otherwise evaluating the design's trend on U_M.
    pub fn for_design(design: &SpatialDesign, nu: f64, cfg: &SpectralConfig) -> Result<Self> {
        let family = MaternFamily::new(nu)?;
        let spectral = build_spectral_design(cfg.m1, cfg.m2, cfg.delta)?;
        if design.p() == 1 {
            return Self::constant_mean(&spectral, family, cfg.truncation);
        }
        let trend = design.trend().ok_or_else(|| {
            Error::InvalidDesign("the approximate prior with p > 1 needs covariates defined at every location (a trend)".into())
        })?;
        let grid = build_aux_grid(&design.bounding_box(), cfg.m1, cfg.m2, cfg.delta)?;
        let basis = build_h1(&grid, &spectral)?;
        let x1 = build_x1_for_trend(&basis, trend)?;
        Self::general(&spectral, family, cfg.truncation, x1)
    }
}

/// Support of a tabulated density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// Zero outside the tabulated range.
    Compact,
    /// (0, ∞), with power-law tails beyond the tabulated range.
    HalfLine,
}

/// Propriety verdict of a tail diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Proper,
    Improper,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailDiagnostic {
    pub slope: Option<f64>,
    pub verdict: Verdict,
}

/// Slope margin below −1 required to call an upper tail integrable.
pub const TAIL_MARGIN: f64 = 0.1;

/// How a tabulated density was integrated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadratureMeta {
    pub rule: String,
    pub lower_tail_mass: f64,
    pub upper_tail_mass: f64,
    pub lower_slope: Option<f64>,
    pub upper_slope: Option<f64>,
}

/// An unnormalized (or normalized) density tabulated on a θ grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabulatedDensity {
    pub theta: Vec<f64>,
    pub values: Vec<f64>,
    pub log_values: Vec<f64>,
    pub support: Support,
    /// Constant C with C·(unnormalized values) integrating to one, once normalized.
    pub normalization: Option<f64>,
    pub quadrature: Option<QuadratureMeta>,
    /// First grid point at which evaluation failed numerically; the
    /// tabulation stops below it.
    pub truncated_at: Option<f64>,
}

impl TabulatedDensity {
    pub fn new(theta: Vec<f64>, values: Vec<f64>, support: Support) -> Result<Self> {
        if theta.len() != values.len() || theta.len() < 2 {
            return Err(Error::DimensionMismatch("grid and values must match and have at least two points".into()));
        }
        if theta.windows(2).any(|w| !(w[1] > w[0])) || theta[0] <= 0.0 {
            return Err(Error::InvalidParameter("theta grid must be positive and strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("density values must be finite and non-negative".into()));
        }
        let log_values = values.iter().map(|v| v.ln()).collect();
        Ok(TabulatedDensity { theta, values, log_values, support, normalization: None, quadrature: None, truncated_at: None })
    }

    /// Builds a density from log values.
    pub fn from_log(theta: Vec<f64>, log_values: Vec<f64>, support: Support) -> Result<Self> {
        let m = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut d = Self::new(theta, log_values.iter().map(|l| (l - m).exp()).collect(), support)?;
        d.log_values = log_values.iter().map(|l| l - m).collect();
        Ok(d)
    }

    /// Tabulates `f` on `grid` in parallel. Numerical failures (such as an
    /// ill-conditioned correlation matrix) end the tabulation at the first
    /// failing point; other errors propagate.
    pub fn tabulate(grid: &[f64], f: impl Fn(f64) -> Result<f64> + Sync) -> Result<Self> {
        let results: Vec<Result<f64>> = grid.par_iter().map(|&t| f(t)).collect();
        let mut values = Vec::with_capacity(grid.len());
        let mut truncated_at = None;
        for (t, r) in grid.iter().zip(results) {
            match r {
                Ok(v) => values.push(v),
                Err(e) if e.is_numerical() => {
                    truncated_at = Some(*t);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if values.len() < 2 {
            return Err(Error::IllConditioned { theta: grid[values.len().min(grid.len() - 1)], rcond: 0.0 });
        }
        let mut d = Self::new(grid[..values.len()].to_vec(), values, Support::HalfLine)?;
        d.truncated_at = truncated_at;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization.is_some()
    }

    fn edge_slope(&self, upper: bool) -> Option<f64> {
        let lo = self.theta[0];
        let hi = *self.theta.last()?;
        if hi / lo < 100.0 * (1.0 - 1e-9) {
            return None;
        }
        let (a, b) = if upper { (hi / 10.0, hi) } else { (lo, lo * 10.0) };
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .theta
            .iter()
            .zip(&self.values)
            .filter(|(t, v)| **t >= a * (1.0 - 1e-12) && **t <= b * (1.0 + 1e-12) && **v > 0.0)
            .map(|(t, v)| (t.ln(), v.ln()))
            .unzip();
        if xs.len() < 3 {
            return None;
        }
        Some(ls_slope(&xs, &ys))
    }

    /// Trapezoid integral over the tabulated range, in log θ.
    pub fn grid_integral(&self) -> f64 {
        let ts: Vec<f64> = self.theta.iter().map(|t| t.ln()).collect();
        let ys: Vec<f64> = self.theta.iter().zip(&self.values).map(|(t, v)| t * v).collect();
        crate::numerics::trapezoid(&ts, &ys)
    }

    /// Normalizes the density. Fails with [`Error::Improper`] when a tail
    /// is not integrable.
    pub fn normalize(&self) -> Result<TabulatedDensity> {
        let body = self.grid_integral();
        let mut meta = QuadratureMeta { rule: "trapezoid in log theta".into(), ..Default::default() };
        if self.support == Support::HalfLine {
            meta.rule.push_str(" + power-law tails");
            let n = self.len();
            let (t_hi, v_hi) = (self.theta[n - 1], self.values[n - 1]);
            if v_hi > 0.0 {
                let diag = tail_diagnostic(self);
                meta.upper_slope = diag.slope;
                match (diag.verdict, diag.slope) {
                    (Verdict::Proper, Some(s)) => meta.upper_tail_mass = v_hi * t_hi / (-s - 1.0),
                    _ => {
                        return Err(Error::Improper(format!(
                            "upper tail slope {:?} does not establish integrability",
                            diag.slope
                        )))
                    }
                }
            }
            let (t_lo, v_lo) = (self.theta[0], self.values[0]);
            if v_lo > 0.0 {
                let s = self.edge_slope(false);
                meta.lower_slope = s;
                match s {
                    Some(s) if s > -1.0 + TAIL_MARGIN => meta.lower_tail_mass = v_lo * t_lo / (s + 1.0),
                    _ => return Err(Error::Improper(format!("lower tail slope {s:?} does not establish integrability"))),
                }
            }
        }
        let total = body + meta.lower_tail_mass + meta.upper_tail_mass;
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Improper(format!("integral {total} is not positive and finite")));
        }
        let c = 1.0 / total;
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.log_values.iter_mut().for_each(|l| *l += c.ln());
        out.normalization = Some(c * self.normalization.unwrap_or(1.0));
        out.quadrature = Some(meta);
        Ok(out)
    }

    /// ln density at θ by monotone cubic interpolation in (ln θ, ln value).
    /// Outside the grid the fitted edge power law is used (HalfLine) or −∞
    /// (Compact); the flag reports extrapolation.
    pub fn ln_density_at(&self, theta: f64) -> (f64, bool) {
        self.interpolator().eval(theta)
    }

    pub fn interpolator(&self) -> LogInterpolator {
        LogInterpolator::new(self)
    }

    /// CSV with columns theta, density, log_density.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["theta", "density", "log_density"])?;
        for i in 0..self.len() {
            wtr.write_record(&[
                format!("{:.12e}", self.theta[i]),
                format!("{:.12e}", self.values[i]),
                format!("{:.12e}", self.log_values[i]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let (mut theta, mut values) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::InvalidParameter("short density row".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidParameter(format!("bad number in density file: {e}")))
            };
            theta.push(parse(0)?);
            values.push(parse(1)?);
        }
        Self::new(theta, values, Support::HalfLine)
    }
}

/// Cached interpolant of a tabulated log density.
#[derive(Debug, Clone)]
pub struct LogInterpolator {
    spline: Pchip,
    support: Support,
    lower_slope: f64,
    upper_slope: f64,
}

/// Floor for log values of zero density entries, relative to the maximum.
const LOG_FLOOR: f64 = -700.0;

impl LogInterpolator {
    fn new(d: &TabulatedDensity) -> Self {
        let max = d.log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ys: Vec<f64> = d.log_values.iter().map(|l| l.max(max + LOG_FLOOR)).collect();
        let xs: Vec<f64> = d.theta.iter().map(|t| t.ln()).collect();
        let spline = Pchip::new(xs, ys).expect("validated grid");
        let upper_slope = d.edge_slope(true).unwrap_or(f64::NEG_INFINITY);
        let lower_slope = d.edge_slope(false).unwrap_or(0.0);
        LogInterpolator { spline, support: d.support, lower_slope, upper_slope }
    }

    pub fn eval(&self, theta: f64) -> (f64, bool) {
        let x = theta.ln();
        let (lo, hi) = (self.spline.lower(), self.spline.upper());
        if x >= lo && x <= hi {
            return (self.spline.eval(x), false);
        }
        if self.support == Support::Compact {
            return (f64::NEG_INFINITY, true);
        }
        if x < lo {
            (self.spline.eval(lo) + self.lower_slope * (x - lo), true)
        } else {
            (self.spline.eval(hi) + self.upper_slope * (x - hi), true)
        }
    }
}

/// Least-squares log-log slope over the upper decade and a propriety verdict.
pub fn tail_diagnostic(d: &TabulatedDensity) -> TailDiagnostic {
    match d.edge_slope(true) {
        None => TailDiagnostic { slope: None, verdict: Verdict::Inconclusive },
        Some(s) => TailDiagnostic {
            slope: Some(s),
            verdict: if s < -1.0 - TAIL_MARGIN { Verdict::Proper } else { Verdict::Improper },
        },
    }
}

/// Number of points in the default prior tabulation.
pub const DEFAULT_GRID_POINTS: usize = 200;

/// Default θ grid: 200 log-spaced points on [1e-2·d, 1e3·d] with d the
/// median nearest-neighbour distance.
pub fn default_theta_grid(design: &SpatialDesign) -> Result<Vec<f64>> {
    let d = nearest_neighbor_distances(design.locations())?.median();
    Ok(log_grid(1e-2 * d, 1e3 * d, DEFAULT_GRID_POINTS))
}

/// Tabulates the exact reference prior.
pub fn tabulate_exact_prior(design: &SpatialDesign, nu: f64, rep: Representation, grid: &[f64]) -> Result<TabulatedDensity> {
    let prior = ExactPrior::new(design, nu)?;
    TabulatedDensity::tabulate(grid, |t| prior.value(t, rep))
}

/// Decades the approximate prior's grid may be extended below its first point.
pub const MAX_LOWER_EXTENSION: usize = 4;

/// Tabulates the approximate reference prior.
///
/// The truncated aliasing sum makes the prior rise as θ falls through the
/// range where 2√ν/θ approaches the truncation radius, before it vanishes
/// linearly at 0. When the lowest decade does not yet show an integrable
/// slope, the grid is extended downward one decade at a time (same log
/// spacing, at most [`MAX_LOWER_EXTENSION`] decades) so the lower tail is
/// resolved by evaluation rather than extrapolation.
pub fn tabulate_approx_prior(design: &SpatialDesign, nu: f64, cfg: &SpectralConfig, grid: &[f64]) -> Result<TabulatedDensity> {
    let prior = ApproxPrior::for_design(design, nu, cfg)?;
    let mut d = TabulatedDensity::tabulate(grid, |t| prior.value(t))?;
    if d.len() < 3 || d.theta[d.len() - 1] / d.theta[0] < 100.0 {
        return Ok(d);
    }
    let step = (d.theta[1] / d.theta[0]).ln();
    let per_decade = (std::f64::consts::LN_10 / step).round().max(2.0) as usize;
    for _ in 0..MAX_LOWER_EXTENSION {
        match d.edge_slope(false) {
            Some(s) if s > -1.0 + TAIL_MARGIN => break,
            _ => {}
        }
        let lo = d.theta[0];
        let ext: Vec<f64> = (1..=per_decade).rev().map(|k| lo * (-(k as f64) * step).exp()).collect();
        let vals = ext.iter().map(|&t| prior.value(t)).collect::<Result<Vec<f64>>>()?;
        let mut theta = ext;
        theta.extend_from_slice(&d.theta);
        let mut values = vals;
        values.extend_from_slice(&d.values);
        let truncated_at = d.truncated_at;
        d = TabulatedDensity::new(theta, values, Support::HalfLine)?;
        d.truncated_at = truncated_at;
    }
    Ok(d)
}

/// Tabulates the inverse-gamma prior.
pub fn tabulate_inverse_gamma(shape: f64, scale: f64, grid: &[f64]) -> Result<TabulatedDensity> {
    if !(shape > 0.0 && scale > 0.0) {
        return Err(Error::InvalidParameter("inverse-gamma parameters must be positive".into()));
    }
    let logs: Vec<f64> = grid.iter().map(|&t| inverse_gamma_ln_pdf(t, shape, scale)).collect();
    TabulatedDensity::from_log(grid.to_vec(), logs, Support::HalfLine)
}

/// Frequency index layout of the approximate prior, for reporting.
pub fn layout_of(spectral: &SpectralDesign) -> Vec<FreqIndex> {
    spectral.layout()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{regular_lattice, Trend};

    fn scattered(n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        (0..n).map(|_| [next(), next()]).collect()
    }

    #[test]
    fn two_point_design_has_zero_prior() {
        let d = SpatialDesign::constant_mean(vec![[0.0, 0.0], [0.4, 0.3]]).unwrap();
        for t in [0.05, 0.3, 2.0] {
            for rep in [Representation::A, Representation::B] {
                assert!(exact_ref_prior(t, &d, 0.5, rep).unwrap() < 1e-6);
            }
        }
    }

    #[test]
    fn representations_differ_by_constant_factor() {
        let d = SpatialDesign::constant_mean(scattered(8, 11)).unwrap();
        let prior = ExactPrior::new(&d, 0.5).unwrap();
        let ratios: Vec<f64> = log_grid(0.05, 2.0, 12)
            .into_iter()
            .map(|t| (prior.value(t, Representation::A).unwrap() / prior.value(t, Representation::B).unwrap()).ln())
            .collect();
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-6, "{ratios:?}");
        }
    }

    #[test]
    fn corollary_matches_general_formula() {
        let spectral = build_spectral_design(8, 8, 0.15).unwrap();
        let fam = MaternFamily::new(1.5).unwrap();
        let c = ApproxPrior::constant_mean(&spectral, fam, 5).unwrap();
        let mut x1 = DMatrix::zeros(64, 1);
        x1[(0, 0)] = 8.0;
        let g = ApproxPrior::general(&spectral, fam, 5, x1).unwrap();
        for t in log_grid(0.01, 50.0, 50) {
            let (a, b) = (c.value(t).unwrap(), g.value(t).unwrap());
            assert!((a / b - 1.0).abs() < 1e-8, "theta={t}: {a} vs {b}");
        }
    }

    #[test]
    fn corollary_over_all_nonorigin_frequencies() {
        let spectral = build_spectral_design(6, 8, 0.2).unwrap();
        let fam = MaternFamily::new(0.5).unwrap();
        let ap = ApproxPrior::constant_mean(&spectral, fam, 5).unwrap();
        let alias = AliasConfig::new(0.2, 5).unwrap();
        for t in [0.05, 0.4, 3.0] {
            let d: Vec<f64> = spectral
                .all_indices()
                .into_iter()
                .filter(|&k| k != (0, 0))
                .map(|k| crate::covmodel::dlog_aliased_density(&fam, t, spectral.frequency(k), &alias).unwrap())
                .collect();
            let full = centered_sum_of_squares(&d).sqrt();
            assert!((full / ap.value(t).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn normalize_uniform_compact() {
        let theta: Vec<f64> = (0..=1000).map(|i| 1.0 + i as f64 / 1000.0).collect();
        let d = TabulatedDensity::new(theta, vec![1.0; 1001], Support::Compact).unwrap();
        let n = d.normalize().unwrap();
        assert!((n.normalization.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tail_slope_of_power_law() {
        let grid = log_grid(0.01, 100.0, 200);
        let vals: Vec<f64> = grid.iter().map(|t| 1.0 / (1.0 + t * t * t)).collect();
        let d = TabulatedDensity::new(grid, vals, Support::HalfLine).unwrap();
        let diag = tail_diagnostic(&d);
        assert_eq!(diag.verdict, Verdict::Proper);
        assert!((diag.slope.unwrap() + 3.0).abs() < 0.01);
        let short = TabulatedDensity::new(log_grid(1.0, 50.0, 30), vec![1.0; 30], Support::HalfLine).unwrap();
        assert_eq!(tail_diagnostic(&short).verdict, Verdict::Inconclusive);
        let flat = TabulatedDensity::new(log_grid(1.0, 500.0, 30), vec![1.0; 30], Support::HalfLine).unwrap();
        assert_eq!(tail_diagnostic(&flat).verdict, Verdict::Improper);
        assert!(matches!(flat.normalize(), Err(Error::Improper(_))));
    }

    #[test]
    fn power_law_normalization_is_accurate() {
        // ∫_0^∞ 3√3/(2π) / (1 + t³) dt = 1
        let c = 3.0 * 3f64.sqrt() / (2.0 * std::f64::consts::PI);
        let grid = log_grid(1e-3, 1e3, 400);
        let vals: Vec<f64> = grid.iter().map(|t| c / (1.0 + t * t * t)).collect();
        let d = TabulatedDensity::new(grid, vals, Support::HalfLine).unwrap().normalize().unwrap();
        assert!((d.normalization.unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn approx_prior_is_finite_and_nonnegative() {
        let spectral = build_spectral_design(12, 12, 0.133).unwrap();
        for nu in [0.5, 1.0, 1.5, 2.5] {
            let ap = ApproxPrior::constant_mean(&spectral, MaternFamily::new(nu).unwrap(), 5).unwrap();
            for t in log_grid(1e-3, 1e3, 60) {
                let v = ap.value(t).unwrap();
                assert!(v.is_finite() && v >= 0.0, "nu={nu} theta={t}: {v}");
            }
        }
    }

    #[test]
    fn general_prior_requires_trend() {
        let pts = regular_lattice(10, 10, 1.0 / 9.0, [0.0, 0.0]);
        let x = Trend::Linear.matrix(&pts);
        let d = SpatialDesign::new(pts.clone(), x).unwrap();
        let cfg = SpectralConfig { m1: 10, m2: 10, delta: 0.122, truncation: 5 };
        assert!(ApproxPrior::for_design(&d, 0.5, &cfg).is_err());
        let d = SpatialDesign::with_trend(pts, Trend::Quadratic).unwrap();
        let ap = ApproxPrior::for_design(&d, 0.5, &cfg).unwrap();
        assert!(ap.value(0.3).unwrap() > 0.0);
    }

    #[test]
    fn scale_equivariance_of_exact_prior() {
        let pts = scattered(7, 5);
        let d1 = SpatialDesign::constant_mean(pts.clone()).unwrap();
        let d2 = SpatialDesign::constant_mean(pts.iter().map(|s| [2.0 * s[0], 2.0 * s[1]]).collect()).unwrap();
        let (p1, p2) = (ExactPrior::new(&d1, 1.5).unwrap(), ExactPrior::new(&d2, 1.5).unwrap());
        // π₂(2θ) = π₁(θ)/2 as densities in θ.
        for t in [0.05, 0.2, 0.9] {
            let a = p1.value(t, Representation::A).unwrap();
            let b = p2.value(2.0 * t, Representation::A).unwrap();
            assert!((b * 2.0 / a - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_roundtrip() {
        let d = tabulate_inverse_gamma(0.5, 0.02, &log_grid(0.01, 10.0, 20)).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = TabulatedDensity::read_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 20);
        for (a, b) in back.values.iter().zip(&d.values) {
            assert!((a / b - 1.0).abs() < 1e-11);
        }
    }
}
