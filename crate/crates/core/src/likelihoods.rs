//! Gaussian, integrated and approximate restricted likelihoods, REML fits
//! and profile-likelihood confidence intervals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::covmodel::{AliasConfig, AliasTable, MaternFamily, SpectralFamily};
use crate::designs::{nearest_neighbor_distances, SpatialDesign, SpectralDesign};
use crate::error::{Error, Result};
use crate::linalg::{guarded_cholesky, orthogonal_complement, thin_qr, CorrelationContext, GlsSummary};
use crate::numerics::{bisect, maximize_scalar, Maximum};
use crate::priors::Representation;
use crate::spectral_basis::SpectralBasis;

/// Observations bound to their design.
#[derive(Debug, Clone)]
pub struct DataVector {
    pub design: SpatialDesign,
    pub z: DVector<f64>,
}

impl DataVector {
    pub fn new(design: SpatialDesign, z: DVector<f64>) -> Result<Self> {
        if z.len() != design.n() {
            return Err(Error::DimensionMismatch(format!("{} observations for {} locations", z.len(), design.n())));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("observations must be finite".into()));
        }
        Ok(DataVector { design, z })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn p(&self) -> usize {
        self.design.p()
    }
}

/// Likelihood evaluations for one dataset and smoothness.
#[derive(Debug, Clone)]
pub struct LikelihoodContext {
    ctx: CorrelationContext,
    x: DMatrix<f64>,
    z: DVector<f64>,
    w: Option<DMatrix<f64>>,
}

impl LikelihoodContext {
    pub fn new(data: &DataVector, nu: f64) -> Result<Self> {
        Ok(LikelihoodContext {
            ctx: CorrelationContext::new(data.design.locations(), nu)?,
            x: data.design.covariates().clone(),
            z: data.z.clone(),
            w: None,
        })
    }

    /// Also prepares the contrast basis needed by the second representation.
    pub fn with_contrasts(mut self) -> Result<Self> {
        self.w = Some(orthogonal_complement(&self.x)?);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn nu(&self) -> f64 {
        self.ctx.kernel().nu()
    }

    pub fn correlation(&self) -> &CorrelationContext {
        &self.ctx
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn observations(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn gls(&self, theta: f64) -> Result<GlsSummary> {
        check_theta(theta)?;
        let chol = guarded_cholesky(self.ctx.corr(theta), theta)?;
        GlsSummary::compute(&chol, &self.x, &self.z)
    }

    /// ln L(β, σ², θ; z).
    pub fn gauss_loglik(&self, beta: &DVector<f64>, sigma2: f64, theta: f64) -> Result<f64> {
        check_theta(theta)?;
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
        }
        if beta.len() != self.p() {
            return Err(Error::DimensionMismatch(format!("beta has length {}, expected {}", beta.len(), self.p())));
        }
        let chol = guarded_cholesky(self.ctx.corr(theta), theta)?;
        let resid = &self.z - &self.x * beta;
        let mut r = resid.clone();
        chol.l_dirty().solve_lower_triangular_mut(&mut r);
        let n = self.n() as f64;
        Ok(-0.5 * n * (2.0 * PI * sigma2).ln() - 0.5 * crate::linalg::chol_log_det(&chol) - 0.5 * r.norm_squared() / sigma2)
    }

    /// ln of the integrated likelihood of θ, up to a θ-free constant.
    pub fn integrated(&self, theta: f64, rep: Representation) -> Result<f64> {
        check_theta(theta)?;
        let dof = (self.n() - self.p()) as f64;
        match rep {
            Representation::A => {
                let g = self.gls(theta)?;
                Ok(-0.5 * g.log_det_r - 0.5 * g.log_det_xtrx - 0.5 * dof * g.s2.ln())
            }
            Representation::B => {
                let w = self.w.as_ref().ok_or_else(|| Error::InvalidParameter("contrast basis not prepared".into()))?;
                let rw = w.tr_mul(&(self.ctx.corr(theta) * w));
                let chol = guarded_cholesky((&rw + rw.transpose()) * 0.5, theta)?;
                let mut zw = w.tr_mul(&self.z);
                chol.l_dirty().solve_lower_triangular_mut(&mut zw);
                Ok(-0.5 * crate::linalg::chol_log_det(&chol) - 0.5 * dof * zw.norm_squared().ln())
            }
        }
    }

    /// Limit of the first representation as θ → 0⁺:
    /// −½ ln|XᵀX| − ((n−p)/2) ln S²₀ with S²₀ the OLS residual sum of squares.
    pub fn integrated_limit_at_zero(&self) -> Result<f64> {
        let qr = thin_qr(&self.x)?;
        let qtz = qr.q.tr_mul(&self.z);
        let s2 = (&self.z - &qr.q * qtz).norm_squared();
        let log_det = 2.0 * qr.r.diagonal().iter().map(|v| v.abs().ln()).sum::<f64>();
        Ok(-0.5 * log_det - 0.5 * (self.n() - self.p()) as f64 * s2.ln())
    }

    /// Profile log-likelihood of θ with β and σ² maximized out.
    pub fn profile_theta(&self, theta: f64) -> Result<f64> {
        let g = self.gls(theta)?;
        let n = self.n() as f64;
        Ok(-0.5 * n * (2.0 * PI * g.s2 / n).ln() - 0.5 * g.log_det_r - 0.5 * n)
    }

    /// ln L with β maximized out, at given (σ², θ).
    pub fn profile_beta(&self, sigma2: f64, theta: f64) -> Result<f64> {
        let g = self.gls(theta)?;
        let n = self.n() as f64;
        Ok(-0.5 * n * (2.0 * PI * sigma2).ln() - 0.5 * g.log_det_r - 0.5 * g.s2 / sigma2)
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::InvalidParameter(format!("theta must be positive and finite, got {theta}")));
    }
    Ok(())
}

/// ln L(β, σ², θ; z) under a Matérn model.
pub fn gauss_loglik(beta: &DVector<f64>, sigma2: f64, theta: f64, nu: f64, data: &DataVector) -> Result<f64> {
    LikelihoodContext::new(data, nu)?.gauss_loglik(beta, sigma2, theta)
}

/// ln of the integrated likelihood of θ (up to a constant).
pub fn integrated_loglik_theta(theta: f64, data: &DataVector, nu: f64, rep: Representation) -> Result<f64> {
    let mut lc = LikelihoodContext::new(data, nu)?;
    if rep == Representation::B {
        lc = lc.with_contrasts()?;
    }
    lc.integrated(theta, rep)
}

/// The spectral approximation to the restricted likelihood for a constant
/// mean, evaluated from the M − 1 contrasts V_2, …, V_M.
#[derive(Debug, Clone)]
pub struct ApproxRestricted<F: SpectralFamily = MaternFamily> {
    family: F,
    table: AliasTable,
    /// Index into `table` for each contrast.
    slot: Vec<usize>,
    v2: Vec<f64>,
    c_delta: f64,
}

impl<F: SpectralFamily> ApproxRestricted<F> {
    /// Contrasts `v` paired with their frequencies.
    pub fn from_contrasts(freqs: &[[f64; 2]], v: &[f64], family: F, alias: &AliasConfig) -> Result<Self> {
        if freqs.len() != v.len() || v.is_empty() {
            return Err(Error::DimensionMismatch("one frequency per contrast required".into()));
        }
        let table = AliasTable::new(&family, freqs, alias)?;
        Ok(ApproxRestricted {
            family,
            table,
            slot: (0..v.len()).collect(),
            v2: v.iter().map(|x| x * x).collect(),
            c_delta: alias.c_delta(),
        })
    }

    /// Builds the contrasts V = L1ᵀz̃ for values `z_grid` in grid order.
    pub fn from_grid(basis: &SpectralBasis, z_grid: &DVector<f64>, family: F, truncation: usize) -> Result<Self> {
        let alias = AliasConfig::new(basis.grid.delta, truncation)?;
        let v = basis.contrasts(z_grid)?;
        let spectral: &SpectralDesign = &basis.spectral;
        let distinct: Vec<[f64; 2]> = basis.distinct_frequencies();
        let table = AliasTable::new(&family, &distinct, &alias)?;
        let (nc, np) = (basis.n_corner(), basis.n_pairs());
        debug_assert_eq!(nc + 2 * np, spectral.m());
        // layout slot k maps to distinct frequency k, or k − np for the second I block
        let slot: Vec<usize> = (1..basis.m()).map(|k| if k < nc + np { k } else { k - np }).collect();
        let v2 = v.iter().skip(1).map(|x| x * x).collect();
        Ok(ApproxRestricted { family, table, slot, v2, c_delta: alias.c_delta() })
    }

    pub fn n_contrasts(&self) -> usize {
        self.v2.len()
    }

    fn ln_spectrum(&self, theta: f64) -> Vec<f64> {
        let mut ln = vec![0.0; self.table.len()];
        let mut d = vec![0.0; self.table.len()];
        self.table.eval_all(&self.family, theta, &mut ln, &mut d);
        ln
    }

    /// ln L^A(σ², θ) up to an additive constant.
    pub fn loglik(&self, sigma2: f64, theta: f64) -> f64 {
        let ln = self.ln_spectrum(theta);
        let mut s = 0.0;
        for (j, &k) in self.slot.iter().enumerate() {
            let ln_var = (self.c_delta * sigma2).ln() + ln[k];
            s += ln_var + self.v2[j] * (-ln_var).exp();
        }
        -0.5 * s
    }

    /// σ̂²(θ) = (1/(M−1)) Σ V_j² / (c_Δ f̃_θ(ω_j)).
    pub fn sigma2_hat(&self, theta: f64) -> f64 {
        let ln = self.ln_spectrum(theta);
        let s: f64 = self.slot.iter().enumerate().map(|(j, &k)| self.v2[j] * (-ln[k]).exp()).sum();
        s / (self.c_delta * self.n_contrasts() as f64)
    }

    /// ln L^A with σ² profiled out.
    pub fn profile(&self, theta: f64) -> f64 {
        self.loglik(self.sigma2_hat(theta), theta)
    }
}

/// `approx_restricted_loglik` for explicit contrasts.
pub fn approx_restricted_loglik(sigma2: f64, theta: f64, v: &[f64], freqs: &[[f64; 2]], nu: f64, alias: &AliasConfig) -> Result<f64> {
    Ok(ApproxRestricted::from_contrasts(freqs, v, MaternFamily::new(nu)?, alias)?.loglik(sigma2, theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemlMethod {
    Exact,
    Approximate,
}

/// Outcome of a REML fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemlFit {
    pub sigma2: f64,
    pub theta: f64,
    pub method: RemlMethod,
    pub objective: f64,
    pub at_lower_bound: bool,
    pub at_upper_bound: bool,
    pub evaluations: usize,
    pub bounds: (f64, f64),
}

/// Number of coarse scan points before golden-section refinement.
pub const SCAN_POINTS: usize = 40;
/// Tolerance of the optimizer in ln θ.
pub const LOG_THETA_TOL: f64 = 1e-6;

/// Search interval [1e-3·d_min, 1e3·d_max] for θ.
pub fn theta_bounds(design: &SpatialDesign) -> Result<(f64, f64)> {
    let nn = nearest_neighbor_distances(design.locations())?;
    Ok((1e-3 * nn.d_min, 1e3 * design.max_distance()))
}

fn maximize_log_theta(f: impl Fn(f64) -> f64, bounds: (f64, f64)) -> Result<Maximum> {
    maximize_scalar(|lt| f(lt.exp()), bounds.0.ln(), bounds.1.ln(), SCAN_POINTS, LOG_THETA_TOL)
}

/// Exact REML: maximizes the integrated likelihood, with σ̂² = S²_θ/(n − p).
pub fn reml_fit_exact(data: &DataVector, nu: f64, bounds: Option<(f64, f64)>) -> Result<RemlFit> {
    let bounds = match bounds {
        Some(b) => b,
        None => theta_bounds(&data.design)?,
    };
    let lc = LikelihoodContext::new(data, nu)?;
    let m = maximize_log_theta(|t| lc.integrated(t, Representation::A).unwrap_or(f64::NEG_INFINITY), bounds)?;
    let theta = m.x.exp();
    let g = lc.gls(theta)?;
    Ok(RemlFit {
        sigma2: g.s2 / (data.n() - data.p()) as f64,
        theta,
        method: RemlMethod::Exact,
        objective: m.value,
        at_lower_bound: m.at_lower,
        at_upper_bound: m.at_upper,
        evaluations: m.evaluations,
        bounds,
    })
}

/// Approximate REML on a regular grid with U_M equal to the sampling design.
pub fn reml_fit_approx(data: &DataVector, nu: f64, truncation: usize, bounds: Option<(f64, f64)>) -> Result<RemlFit> {
    if data.p() != 1 {
        return Err(Error::InvalidDesign("approximate REML is available for a constant mean only".into()));
    }
    let (grid, order) = data
        .design
        .as_regular_grid(1e-6)
        .ok_or_else(|| Error::InvalidDesign("approximate REML needs a complete regular grid with even sides".into()))?;
    let spectral = crate::designs::build_spectral_design(grid.m1, grid.m2, grid.delta)?;
    let basis = crate::spectral_basis::build_h1(&grid, &spectral)?;
    let z_grid = DVector::from_iterator(order.len(), order.iter().map(|&k| data.z[k]));
    reml_fit_approx_on_basis(&basis, &z_grid, nu, truncation, bounds.unwrap_or(theta_bounds(&data.design)?))
}

/// Approximate REML with a prebuilt basis (reused across replicates).
pub fn reml_fit_approx_on_basis(
    basis: &SpectralBasis,
    z_grid: &DVector<f64>,
    nu: f64,
    truncation: usize,
    bounds: (f64, f64),
) -> Result<RemlFit> {
    let ar = ApproxRestricted::from_grid(basis, z_grid, MaternFamily::new(nu)?, truncation)?;
    let m = maximize_log_theta(|t| ar.profile(t), bounds)?;
    let theta = m.x.exp();
    Ok(RemlFit {
        sigma2: ar.sigma2_hat(theta),
        theta,
        method: RemlMethod::Approximate,
        objective: m.value,
        at_lower_bound: m.at_lower,
        at_upper_bound: m.at_upper,
        evaluations: m.evaluations,
        bounds,
    })
}

/// Parameter of a profile-likelihood interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileParam {
    Sigma2,
    Theta,
}

/// Likelihood-ratio confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileCi {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// False when the lower endpoint is the search bound, not a crossing.
    pub lower_found: bool,
    pub upper_found: bool,
    pub log_length: f64,
}

/// Bisection iterations used to locate each endpoint.
pub const PROFILE_BISECTIONS: usize = 60;

/// Upper χ²₁ quantile at `level`.
pub fn chi2_1_quantile(level: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(1.0).expect("valid").inverse_cdf(level)
}

/// Inverts 2(ℓ_max − ℓ(η)) = χ²₁(level) on each side of `mle` within
/// [lo, hi]. `profile` is evaluated on the same scale as the bounds.
pub fn invert_profile(profile: impl Fn(f64) -> f64, mle: f64, lo: f64, hi: f64, level: f64) -> Result<(f64, f64, bool, bool)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {level}")));
    }
    let lmax = profile(mle);
    let q = chi2_1_quantile(level);
    let excess = |x: f64| {
        let v = profile(x);
        if v.is_finite() {
            2.0 * (lmax - v) - q
        } else {
            f64::INFINITY
        }
    };
    let side = |bound: f64| -> (f64, bool) {
        if (bound - mle).abs() == 0.0 || excess(bound) < 0.0 {
            (bound, false)
        } else {
            (bisect(excess, mle, bound, PROFILE_BISECTIONS), true)
        }
    };
    let (l, lf) = side(lo);
    let (u, uf) = side(hi);
    Ok((l, u, lf, uf))
}

/// Profile-likelihood CI for θ or σ² at the given level.
pub fn profile_ci(data: &DataVector, nu: f64, param: ProfileParam, level: f64, bounds: Option<(f64, f64)>) -> Result<ProfileCi> {
    let bounds = match bounds {
        Some(b) => b,
        None => theta_bounds(&data.design)?,
    };
    let lc = LikelihoodContext::new(data, nu)?;
    let prof = |t: f64| lc.profile_theta(t).unwrap_or(f64::NEG_INFINITY);
    let m = maximize_log_theta(prof, bounds)?;
    match param {
        ProfileParam::Theta => {
            let (l, u, lf, uf) = invert_profile(|lt| prof(lt.exp()), m.x, bounds.0.ln(), bounds.1.ln(), level)?;
            Ok(ProfileCi { estimate: m.x.exp(), lower: l.exp(), upper: u.exp(), lower_found: lf, upper_found: uf, log_length: u - l })
        }
        ProfileParam::Sigma2 => {
            let theta_hat = m.x.exp();
            let s2_hat = lc.gls(theta_hat)?.s2 / data.n() as f64;
            let prof_s = |ls: f64| {
                let s = ls.exp();
                maximize_log_theta(|t| lc.profile_beta(s, t).unwrap_or(f64::NEG_INFINITY), bounds).map(|mm| mm.value).unwrap_or(f64::NEG_INFINITY)
            };
            let c = s2_hat.ln();
            let (l, u, lf, uf) = invert_profile(prof_s, c, c - 15.0, c + 15.0, level)?;
            Ok(ProfileCi { estimate: s2_hat, lower: l.exp(), upper: u.exp(), lower_found: lf, upper_found: uf, log_length: u - l })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{regular_lattice, Trend};

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    fn random_data(n: usize, trend: Trend, seed: u64) -> DataVector {
        let mut u = lcg(seed);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [u(), u()]).collect();
        let z = DVector::from_fn(n, |_, _| u() * 2.0 - 1.0 + 0.5);
        DataVector::new(SpatialDesign::with_trend(pts, trend).unwrap(), z).unwrap()
    }

    #[test]
    fn gauss_loglik_matches_eigen_oracle() {
        let data = random_data(8, Trend::Linear, 3);
        let lc = LikelihoodContext::new(&data, 1.5).unwrap();
        let beta = DVector::from_vec(vec![0.2, -0.1, 0.4]);
        let (s2, theta) = (1.7, 0.3);
        let got = lc.gauss_loglik(&beta, s2, theta).unwrap();
        let eig = (lc.correlation().corr(theta) * s2).symmetric_eigen();
        let r = &data.z - data.design.covariates() * &beta;
        let proj = eig.eigenvectors.tr_mul(&r);
        let mut want = -0.5 * 8.0 * (2.0 * PI).ln();
        for k in 0..8 {
            want -= 0.5 * eig.eigenvalues[k].ln() + 0.5 * proj[k] * proj[k] / eig.eigenvalues[k];
        }
        assert!((got - want).abs() < 1e-8);
    }

    #[test]
    fn gauss_loglik_white_noise_limit() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let z = DVector::from_vec(vec![0.3, -1.2, 0.8]);
        let data = DataVector::new(SpatialDesign::constant_mean(pts).unwrap(), z.clone()).unwrap();
        let beta = DVector::from_vec(vec![0.1]);
        let got = gauss_loglik(&beta, 2.0, 1e-6, 0.5, &data).unwrap();
        let want: f64 = z.iter().map(|v| -0.5 * (2.0 * PI * 2.0).ln() - (v - 0.1).powi(2) / 4.0).sum();
        assert!((got - want).abs() < 1e-6);
    }

    #[test]
    fn representations_differ_by_constant() {
        let data = random_data(10, Trend::Linear, 7);
        let lc = LikelihoodContext::new(&data, 0.5).unwrap().with_contrasts().unwrap();
        let diffs: Vec<f64> = crate::numerics::log_grid(0.01, 3.0, 20)
            .into_iter()
            .map(|t| lc.integrated(t, Representation::A).unwrap() - lc.integrated(t, Representation::B).unwrap())
            .collect();
        for d in &diffs {
            assert!((d - diffs[0]).abs() < 1e-6, "{diffs:?}");
        }
    }

    #[test]
    fn integrated_limit_at_zero() {
        let data = random_data(10, Trend::Linear, 9);
        let lc = LikelihoodContext::new(&data, 0.5).unwrap();
        let d_min = nearest_neighbor_distances(data.design.locations()).unwrap().d_min;
        let at = lc.integrated(1e-8 * d_min, Representation::A).unwrap();
        assert!((at - lc.integrated_limit_at_zero().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn integrated_is_invariant_to_mean_shift() {
        let data = random_data(12, Trend::Linear, 21);
        let mut shifted = data.clone();
        shifted.z += data.design.covariates() * DVector::from_vec(vec![3.0, -2.0, 0.5]);
        for t in [0.05, 0.3, 1.2] {
            let a = integrated_loglik_theta(t, &data, 1.5, Representation::B).unwrap();
            let b = integrated_loglik_theta(t, &shifted, 1.5, Representation::B).unwrap();
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn single_frequency_matches_gamma_density() {
        // V² ~ Gamma(1/2, scale 2σ²c f̃) for a single contrast V ~ N(0, σ²c f̃).
        let alias = AliasConfig::new(0.1, 5).unwrap();
        let w = [[3.0, -7.0]];
        let (v, s2, theta, nu) = (0.37f64, 1.3f64, 0.2, 0.5);
        let f = crate::covmodel::aliased_specden(w[0], &crate::covmodel::MaternParams::new(1.0, theta, nu).unwrap(), &alias).unwrap();
        let scale = 2.0 * s2 * alias.c_delta() * f;
        let x = v * v;
        let gamma_ln = -0.5 * scale.ln() - crate::special::ln_gamma(0.5) - 0.5 * x.ln() - x / scale;
        let got = approx_restricted_loglik(s2, theta, &[v], &w, nu, &alias).unwrap();
        // Both are ln densities of the same variable up to terms free of (σ², θ).
        let got2 = approx_restricted_loglik(2.0 * s2, 1.7 * theta, &[v], &w, nu, &alias).unwrap();
        let f2 = crate::covmodel::aliased_specden(w[0], &crate::covmodel::MaternParams::new(1.0, 1.7 * theta, nu).unwrap(), &alias).unwrap();
        let scale2 = 2.0 * 2.0 * s2 * alias.c_delta() * f2;
        let gamma_ln2 = -0.5 * scale2.ln() - crate::special::ln_gamma(0.5) - 0.5 * x.ln() - x / scale2;
        assert!(((got - got2) - (gamma_ln - gamma_ln2)).abs() < 1e-12);
    }

    fn grid_data(seed: u64) -> (SpectralBasis, DVector<f64>) {
        let pts = regular_lattice(8, 8, 0.1, [0.0, 0.0]);
        let d = SpatialDesign::constant_mean(pts).unwrap();
        let (grid, _) = d.as_regular_grid(1e-6).unwrap();
        let spectral = crate::designs::build_spectral_design(8, 8, 0.1).unwrap();
        let basis = crate::spectral_basis::build_h1(&grid, &spectral).unwrap();
        let mut u = lcg(seed);
        (basis, DVector::from_fn(64, |_, _| u()))
    }

    #[test]
    fn sigma2_closed_form_is_the_profile_maximizer() {
        let (basis, z) = grid_data(5);
        let ar = ApproxRestricted::from_grid(&basis, &z, MaternFamily::new(0.5).unwrap(), 5).unwrap();
        let theta = 0.25;
        let s_hat = ar.sigma2_hat(theta);
        let best = ar.loglik(s_hat, theta);
        for k in 1..200 {
            let s = s_hat * (0.2 + k as f64 * 0.01);
            assert!(ar.loglik(s, theta) <= best + 1e-12);
        }
    }

    #[test]
    fn approx_restricted_ignores_constant_shift() {
        let (basis, z) = grid_data(6);
        let fam = MaternFamily::new(1.5).unwrap();
        let a = ApproxRestricted::from_grid(&basis, &z, fam, 5).unwrap();
        let zs = z.add_scalar(4.2);
        let b = ApproxRestricted::from_grid(&basis, &zs, fam, 5).unwrap();
        for t in [0.05, 0.2, 0.8] {
            assert!((a.loglik(0.7, t) - b.loglik(0.7, t)).abs() < 1e-9);
        }
    }

    #[test]
    fn quadratic_profile_inversion() {
        let (l, u, lf, uf) = invert_profile(|x| -(x - 1.0).powi(2), 1.0, -5.0, 5.0, 0.95).unwrap();
        let q = chi2_1_quantile(0.95);
        assert!(lf && uf);
        assert!((2.0 * (l - 1.0).powi(2) - q).abs() < 1e-9);
        assert!((2.0 * (u - 1.0).powi(2) - q).abs() < 1e-9);
        assert!((q - 3.841_458_820_694_124).abs() < 1e-9);
    }

    #[test]
    fn anticorrelated_data_pin_theta_at_lower_bound() {
        // A checkerboard is as far from positive spatial correlation as data
        // can be, so the likelihood keeps rising as θ → 0.
        let pts = regular_lattice(6, 6, 0.2, [0.0, 0.0]);
        let z = DVector::from_fn(36, |k, _| if (k / 6 + k % 6) % 2 == 0 { 1.0 } else { -1.0 } + 0.01 * (k as f64).sin());
        let data = DataVector::new(SpatialDesign::constant_mean(pts).unwrap(), z).unwrap();
        let fit = reml_fit_exact(&data, 0.5, None).unwrap();
        assert!(fit.at_lower_bound && !fit.at_upper_bound);
        assert!((fit.theta - fit.bounds.0).abs() < 1e-12 * fit.bounds.0.max(1.0));
    }

    #[test]
    fn profile_ci_contains_mle() {
        let data = random_data(30, Trend::Constant, 41);
        let ci = profile_ci(&data, 0.5, ProfileParam::Theta, 0.95, None).unwrap();
        assert!(ci.lower <= ci.estimate && ci.estimate <= ci.upper);
        let ci = profile_ci(&data, 0.5, ProfileParam::Sigma2, 0.95, None).unwrap();
        assert!(ci.lower <= ci.estimate && ci.estimate <= ci.upper);
    }
}
