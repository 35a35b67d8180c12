//! Matérn covariance, its range derivative, and spectral densities.
//!
//! Spectral densities are written in the product form
//! `f(ω) = h1(ω) h2(θ) / (|ω|² + u(θ))^a` so that the range derivative of the
//! log aliased density never needs Bessel functions.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};
use crate::special::{half_integer_index, ln_bessel_k, ln_gamma};

/// Default lattice truncation for the aliased spectral density.
pub const DEFAULT_TRUNCATION: usize = 5;

/// Matérn parameters: variance, range, smoothness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub sigma2: f64,
    pub theta: f64,
    pub nu: f64,
}

impl MaternParams {
    pub fn new(sigma2: f64, theta: f64, nu: f64) -> Result<Self> {
        let p = MaternParams { sigma2, theta, nu };
        p.validate()?;
        Ok(p)
    }

    /// Unit variance parameters, the usual case for correlation work.
    pub fn correlation(theta: f64, nu: f64) -> Result<Self> {
        Self::new(1.0, theta, nu)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma2", self.sigma2), ("theta", self.theta), ("nu", self.nu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn with_theta(self, theta: f64) -> Self {
        MaternParams { theta, ..self }
    }
}

/// Matérn correlation kernel for a fixed smoothness with cached constants.
#[derive(Debug, Clone, Copy)]
pub struct MaternKernel {
    nu: f64,
    ln_norm: f64,
    scale: f64,
    half_integer: Option<usize>,
}

impl MaternKernel {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidParameter(format!("nu must be positive and finite, got {nu}")));
        }
        Ok(MaternKernel {
            nu,
            ln_norm: (1.0 - nu) * LN_2 - ln_gamma(nu),
            scale: 2.0 * nu.sqrt(),
            half_integer: half_integer_index(nu),
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// K_θ(r), evaluated in log space; underflow returns 0.
    pub fn corr(&self, r: f64, theta: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        let x = self.scale * r / theta;
        if let Some(m) = self.half_integer {
            return half_integer_corr(m, x);
        }
        if x < 1e-300 {
            return 1.0;
        }
        let ln_k = self.ln_norm + self.nu * x.ln() + ln_bessel_k(self.nu, x);
        if ln_k < -745.0 {
            0.0
        } else {
            ln_k.exp().min(1.0)
        }
    }

    /// ∂K_θ(r)/∂θ = (x/θ) c_ν x^ν K_{ν-1}(x) with x = 2√ν r/θ.
    pub fn dcorr_dtheta(&self, r: f64, theta: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let x = self.scale * r / theta;
        if x < 1e-300 {
            return 0.0;
        }
        let ln_d = self.ln_norm + (self.nu + 1.0) * x.ln() + ln_bessel_k(self.nu - 1.0, x) - theta.ln();
        if ln_d < -745.0 {
            0.0
        } else {
            ln_d.exp()
        }
    }
}

/// Closed form for ν = m + 1/2:
/// K(x) = e^{-x} m!/(2m)! Σ_k (m+k)!/(k!(m-k)!) (2x)^{m-k}.
fn half_integer_corr(m: usize, x: f64) -> f64 {
    if x > 745.0 + 40.0 * m as f64 {
        return 0.0;
    }
    // Horner in (2x) with coefficients a_k for power (2x)^(m-k), normalised
    // so that the constant term (k = m) equals 1.
    let mf = m as f64;
    let mut coef = 1.0; // k = m
    let mut poly = 1.0;
    let mut pow = 1.0;
    for j in 1..=m {
        // move from k = m-j+1 to k = m-j
        let k = (m - j) as f64;
        // a_k / a_{k+1} = (m+k)!/(k!(m-k)!) * ((k+1)!(m-k-1)!)/(m+k+1)!
        coef *= (k + 1.0) / ((mf + k + 1.0) * (mf - k));
        pow *= 2.0 * x;
        poly += coef * pow;
    }
    (poly.ln() - x).exp()
}

/// Matérn correlation K_θ(r).
pub fn matern_corr(r: f64, params: &MaternParams) -> Result<f64> {
    params.validate()?;
    if !r.is_finite() || r < 0.0 {
        return Err(Error::InvalidParameter(format!("distance must be finite and non-negative, got {r}")));
    }
    Ok(MaternKernel::new(params.nu)?.corr(r, params.theta))
}

/// ∂K_θ(r)/∂θ for the Matérn correlation.
pub fn matern_dcorr_dtheta(r: f64, params: &MaternParams) -> Result<f64> {
    params.validate()?;
    if !r.is_finite() || r < 0.0 {
        return Err(Error::InvalidParameter(format!("distance must be finite and non-negative, got {r}")));
    }
    Ok(MaternKernel::new(params.nu)?.dcorr_dtheta(r, params.theta))
}

/// A normalized isotropic spectral family of the form
/// `h1(ω) h2(θ) / (|ω|² + u(θ))^a`.
pub trait SpectralFamily: Send + Sync {
    fn ln_h1(&self, omega: [f64; 2]) -> f64;
    fn ln_h2(&self, theta: f64) -> f64;
    fn dln_h2(&self, theta: f64) -> f64;
    fn u(&self, theta: f64) -> f64;
    fn du(&self, theta: f64) -> f64;
    fn exponent(&self) -> f64;

    /// Whether `h1` is constant in ω, which lets the aliasing sums skip it.
    fn h1_is_constant(&self) -> bool {
        false
    }

    fn ln_density(&self, omega: [f64; 2], theta: f64) -> f64 {
        let r2 = omega[0] * omega[0] + omega[1] * omega[1];
        self.ln_h1(omega) + self.ln_h2(theta) - self.exponent() * (r2 + self.u(theta)).ln()
    }

    fn density(&self, omega: [f64; 2], theta: f64) -> f64 {
        self.ln_density(omega, theta).exp()
    }
}

/// The Matérn family: h1 = Γ(ν+1)(4ν)^ν/(πΓ(ν)), h2 = θ^{-2ν}, u = 4ν/θ², a = ν+1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternFamily {
    nu: f64,
    ln_h1: f64,
}

impl MaternFamily {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidParameter(format!("nu must be positive and finite, got {nu}")));
        }
        let ln_h1 = ln_gamma(nu + 1.0) + nu * (4.0 * nu).ln() - PI.ln() - ln_gamma(nu);
        Ok(MaternFamily { nu, ln_h1 })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

impl SpectralFamily for MaternFamily {
    fn ln_h1(&self, _omega: [f64; 2]) -> f64 {
        self.ln_h1
    }
    fn ln_h2(&self, theta: f64) -> f64 {
        -2.0 * self.nu * theta.ln()
    }
    fn dln_h2(&self, theta: f64) -> f64 {
        -2.0 * self.nu / theta
    }
    fn u(&self, theta: f64) -> f64 {
        4.0 * self.nu / (theta * theta)
    }
    fn du(&self, theta: f64) -> f64 {
        -8.0 * self.nu / (theta * theta * theta)
    }
    fn exponent(&self) -> f64 {
        self.nu + 1.0
    }
    fn h1_is_constant(&self) -> bool {
        true
    }
}

/// Matérn spectral density f_θ(ω) (unit variance).
pub fn specden(omega: [f64; 2], params: &MaternParams) -> Result<f64> {
    params.validate()?;
    if !(omega[0].is_finite() && omega[1].is_finite()) {
        return Err(Error::InvalidParameter("frequency must be finite".into()));
    }
    Ok(MaternFamily::new(params.nu)?.density(omega, params.theta))
}

/// Lattice spacing and truncation of the aliasing sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AliasConfig {
    pub delta: f64,
    pub truncation: usize,
}

impl AliasConfig {
    pub fn new(delta: f64, truncation: usize) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        Ok(AliasConfig { delta, truncation })
    }

    pub fn with_default_truncation(delta: f64) -> Result<Self> {
        Self::new(delta, DEFAULT_TRUNCATION)
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.delta
    }

    /// c_Δ = (2π/Δ)².
    pub fn c_delta(&self) -> f64 {
        let w = 2.0 * PI / self.delta;
        w * w
    }

    fn check(&self, omega: [f64; 2]) -> Result<()> {
        let ny = self.nyquist() * (1.0 + 1e-12);
        if !(omega[0].abs() <= ny && omega[1].abs() <= ny) {
            return Err(Error::InvalidParameter(format!(
                "frequency ({}, {}) lies outside the Nyquist square [-{ny}, {ny}]^2",
                omega[0], omega[1]
            )));
        }
        Ok(())
    }

    fn shifts(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        let t = self.truncation as i64;
        let step = 2.0 * PI / self.delta;
        (-t..=t).flat_map(move |l1| (-t..=t).map(move |l2| [l1 as f64 * step, l2 as f64 * step]))
    }
}

/// Precomputed aliasing geometry for a fixed set of frequencies.
///
/// For each frequency it stores the squared norms of all shifted copies
/// `ω + 2πl/Δ` with `max |l_i| <= T` and, for non-constant `h1`, the log
/// `h1` values, so that evaluating the aliased density over a whole spectral
/// design at a new θ costs only the `(|ω_l|² + u)^{-a}` terms.
#[derive(Debug, Clone)]
pub struct AliasTable {
    n_terms: usize,
    norms2: Vec<f64>,
    ln_h1: Option<Vec<f64>>,
}

impl AliasTable {
    pub fn new<F: SpectralFamily + ?Sized>(family: &F, frequencies: &[[f64; 2]], alias: &AliasConfig) -> Result<Self> {
        let shifts: Vec<[f64; 2]> = alias.shifts().collect();
        let n_terms = shifts.len();
        let mut norms2 = Vec::with_capacity(frequencies.len() * n_terms);
        let mut ln_h1 = if family.h1_is_constant() { None } else { Some(Vec::with_capacity(norms2.capacity())) };
        for &w in frequencies {
            alias.check(w)?;
            for s in &shifts {
                let v = [w[0] + s[0], w[1] + s[1]];
                norms2.push(v[0] * v[0] + v[1] * v[1]);
                if let Some(h) = ln_h1.as_mut() {
                    h.push(family.ln_h1(v));
                }
            }
        }
        Ok(AliasTable { n_terms, norms2, ln_h1 })
    }

    pub fn len(&self) -> usize {
        self.norms2.len() / self.n_terms
    }

    pub fn is_empty(&self) -> bool {
        self.norms2.is_empty()
    }

    /// Returns `(ln f̃(ω_k), ∂/∂θ ln f̃(ω_k))` for frequency index `k`.
    pub fn ln_and_dln<F: SpectralFamily + ?Sized>(&self, family: &F, theta: f64, k: usize) -> (f64, f64) {
        let a = family.exponent();
        let u = family.u(theta);
        let rows = &self.norms2[k * self.n_terms..(k + 1) * self.n_terms];
        let h1 = self.ln_h1.as_ref().map(|h| &h[k * self.n_terms..(k + 1) * self.n_terms]);
        // log-sum-exp over the shifted copies
        let mut max_ln = f64::NEG_INFINITY;
        for (j, &r2) in rows.iter().enumerate() {
            let l = h1.map_or(0.0, |h| h[j]) - a * (r2 + u).ln();
            if l > max_ln {
                max_ln = l;
            }
        }
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for (j, &r2) in rows.iter().enumerate() {
            let rho = r2 + u;
            let w = (h1.map_or(0.0, |h| h[j]) - a * rho.ln() - max_ln).exp();
            s0 += w;
            s1 += w / rho;
        }
        let h1_const = if h1.is_none() { family.ln_h1([0.0, 0.0]) } else { 0.0 };
        let ln_f = h1_const + family.ln_h2(theta) + max_ln + s0.ln();
        let dln = family.dln_h2(theta) - a * family.du(theta) * s1 / s0;
        (ln_f, dln)
    }

    /// Fills `ln_out` and `dln_out` for every stored frequency.
    pub fn eval_all<F: SpectralFamily + ?Sized>(&self, family: &F, theta: f64, ln_out: &mut [f64], dln_out: &mut [f64]) {
        for k in 0..self.len() {
            let (l, d) = self.ln_and_dln(family, theta, k);
            ln_out[k] = l;
            dln_out[k] = d;
        }
    }
}

/// Truncated aliased density f̃^Δ_θ(ω) for a general family.
pub fn aliased_density<F: SpectralFamily + ?Sized>(family: &F, theta: f64, omega: [f64; 2], alias: &AliasConfig) -> Result<f64> {
    let t = AliasTable::new(family, &[omega], alias)?;
    Ok(t.ln_and_dln(family, theta, 0).0.exp())
}

/// ∂/∂θ ln f̃^Δ_θ(ω) for a general family.
pub fn dlog_aliased_density<F: SpectralFamily + ?Sized>(
    family: &F,
    theta: f64,
    omega: [f64; 2],
    alias: &AliasConfig,
) -> Result<f64> {
    let t = AliasTable::new(family, &[omega], alias)?;
    Ok(t.ln_and_dln(family, theta, 0).1)
}

/// Matérn aliased spectral density f̃^Δ_θ(ω) (unit variance).
pub fn aliased_specden(omega: [f64; 2], params: &MaternParams, alias: &AliasConfig) -> Result<f64> {
    params.validate()?;
    aliased_density(&MaternFamily::new(params.nu)?, params.theta, omega, alias)
}

/// ∂/∂θ ln f̃^Δ_θ(ω) for the Matérn family.
pub fn dlog_aliased_specden(omega: [f64; 2], params: &MaternParams, alias: &AliasConfig) -> Result<f64> {
    params.validate()?;
    dlog_aliased_density(&MaternFamily::new(params.nu)?, params.theta, omega, alias)
}
