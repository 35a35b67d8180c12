//! Dense correlation matrices, guarded Cholesky factorizations and
//! generalized least squares summaries.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::covmodel::MaternKernel;
use crate::designs::dist;
use crate::error::{Error, Result};

/// Reciprocal condition estimate below which a factorization is refused.
pub const RCOND_THRESHOLD: f64 = 1e-14;

/// Correlation matrices of a fixed design under one Matérn kernel.
#[derive(Debug, Clone)]
pub struct CorrelationContext {
    kernel: MaternKernel,
    dists: DMatrix<f64>,
}

impl CorrelationContext {
    pub fn new(locations: &[[f64; 2]], nu: f64) -> Result<Self> {
        let n = locations.len();
        let dists = DMatrix::from_fn(n, n, |i, j| dist(locations[i], locations[j]));
        Ok(CorrelationContext { kernel: MaternKernel::new(nu)?, dists })
    }

    pub fn n(&self) -> usize {
        self.dists.nrows()
    }

    pub fn kernel(&self) -> &MaternKernel {
        &self.kernel
    }

    pub fn distances(&self) -> &DMatrix<f64> {
        &self.dists
    }

    pub fn corr(&self, theta: f64) -> DMatrix<f64> {
        self.symmetric(|r| if r == 0.0 { 1.0 } else { self.kernel.corr(r, theta) })
    }

    pub fn dcorr(&self, theta: f64) -> DMatrix<f64> {
        self.symmetric(|r| if r == 0.0 { 0.0 } else { self.kernel.dcorr_dtheta(r, theta) })
    }

    fn symmetric(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(self.dists[(i, j)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

/// Cholesky factorization with a conditioning guard.
///
/// The reciprocal 1-norm condition number is estimated with Hager's method
/// from a few solves with the factor, as LAPACK's `dpocon` does.
pub fn guarded_cholesky(a: DMatrix<f64>, theta: f64) -> Result<Cholesky<f64, Dyn>> {
    let norm = one_norm(&a);
    let chol = match Cholesky::new(a) {
        Some(c) => c,
        None => return Err(Error::IllConditioned { theta, rcond: 0.0 }),
    };
    let inv_norm = inverse_one_norm_estimate(&chol);
    let rcond = 1.0 / (norm * inv_norm);
    if !(rcond >= RCOND_THRESHOLD) {
        return Err(Error::IllConditioned { theta, rcond });
    }
    Ok(chol)
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Hager's lower estimate of ‖A⁻¹‖₁ for symmetric positive definite A.
pub fn inverse_one_norm_estimate(chol: &Cholesky<f64, Dyn>) -> f64 {
    let n = chol.l_dirty().nrows();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let y = chol.solve(&x);
        let norm_y = y.iter().map(|v| v.abs()).sum::<f64>();
        if !norm_y.is_finite() {
            return f64::INFINITY;
        }
        if norm_y <= est {
            break;
        }
        est = norm_y;
        // A is symmetric, so the dual step solves with A again.
        let z = chol.solve(&y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 }));
        let (j, zmax) = z.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        if zmax <= z.dot(&x) {
            break;
        }
        x.fill(0.0);
        x[j] = 1.0;
    }
    est
}

/// ln |A| from its Cholesky factor.
pub fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// L⁻¹ B for the lower factor L.
pub fn forward_solve(chol: &Cholesky<f64, Dyn>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let l = chol.l_dirty();
    let mut out = b.clone();
    let ok = l.solve_lower_triangular_mut(&mut out);
    debug_assert!(ok);
    out
}

/// Thin QR factor pieces of a tall full-rank matrix.
pub struct ThinQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

pub fn thin_qr(a: &DMatrix<f64>) -> Result<ThinQr> {
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= scale * 1e-12) {
        return Err(Error::RankDeficient("matrix lost column rank".into()));
    }
    Ok(ThinQr { q, r })
}

/// Orthonormal basis of the orthogonal complement of the columns of X.
pub fn orthogonal_complement(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if p >= n {
        return Err(Error::InvalidDesign(format!("need n > p, got n = {n}, p = {p}")));
    }
    // Householder QR of [X | I] yields a full orthonormal basis whose first p
    // columns span X.
    let aug = DMatrix::from_fn(n, n + p, |i, j| if j < p { x[(i, j)] } else if i == j - p { 1.0 } else { 0.0 });
    let qr = aug.qr();
    let r = qr.r();
    let scale = (0..p).fold(0.0f64, |m, k| m.max(r[(k, k)].abs()));
    if (0..p).any(|k| r[(k, k)].abs() <= scale * 1e-10) {
        return Err(Error::RankDeficient("design matrix is rank deficient".into()));
    }
    Ok(qr.q().columns(p, n - p).into_owned())
}

/// Generalized least squares summary at one correlation matrix.
///
/// With R = LLᵀ, X* = L⁻¹X = QxRx and z* = L⁻¹z:
/// β̂ = Rx⁻¹Qxᵀz*, S² = |z* − QxQxᵀz*|², and (XᵀR⁻¹X)⁻¹ = Rx⁻¹Rx⁻ᵀ.
#[derive(Debug, Clone)]
pub struct GlsSummary {
    pub log_det_r: f64,
    pub log_det_xtrx: f64,
    pub s2: f64,
    pub beta: DVector<f64>,
    /// Upper-triangular Rx; (XᵀR⁻¹X)⁻¹ = Rx⁻¹Rx⁻ᵀ.
    pub rx: DMatrix<f64>,
}

impl GlsSummary {
    pub fn compute(chol: &Cholesky<f64, Dyn>, x: &DMatrix<f64>, z: &DVector<f64>) -> Result<Self> {
        let xs = forward_solve(chol, x);
        let zs = forward_solve(chol, &DMatrix::from_column_slice(z.len(), 1, z.as_slice()));
        let ThinQr { q, r } = thin_qr(&xs)?;
        let qtz = q.tr_mul(&zs);
        let resid = &zs - &q * &qtz;
        let s2 = resid.norm_squared();
        let mut beta = qtz.column(0).into_owned();
        if !r.solve_upper_triangular_mut(&mut beta) {
            return Err(Error::RankDeficient("GLS system is singular".into()));
        }
        let log_det_xtrx = 2.0 * r.diagonal().iter().map(|v| v.abs().ln()).sum::<f64>();
        Ok(GlsSummary { log_det_r: chol_log_det(chol), log_det_xtrx, s2, beta, rx: r })
    }

    /// Rx⁻¹ ξ, a draw from N(0, (XᵀR⁻¹X)⁻¹) when ξ is standard normal.
    pub fn cov_factor_mul(&self, xi: &DVector<f64>) -> DVector<f64> {
        let mut out = xi.clone();
        self.rx.solve_upper_triangular_mut(&mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        DMatrix::from_fn(n, p, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn inverse_norm_estimate_is_a_tight_lower_bound() {
        let pts = crate::designs::regular_lattice(8, 8, 1.0 / 7.0, [0.0, 0.0]);
        for (nu, theta) in [(0.5, 0.2), (1.5, 0.3), (2.5, 0.5)] {
            let a = CorrelationContext::new(&pts, nu).unwrap().corr(theta);
            let exact = one_norm(&a.clone().try_inverse().unwrap());
            let est = inverse_one_norm_estimate(&Cholesky::new(a).unwrap());
            assert!(est <= exact * (1.0 + 1e-8) && est >= exact / 3.0, "{nu} {theta}: {est} vs {exact}");
        }
    }

    #[test]
    fn guard_refuses_nearly_singular_smooth_correlations() {
        let pts = crate::designs::regular_lattice(10, 10, 1.0 / 9.0, [0.0, 0.0]);
        let ctx = CorrelationContext::new(&pts, 2.5).unwrap();
        assert!(guarded_cholesky(ctx.corr(0.05), 0.05).is_ok());
        assert!(matches!(guarded_cholesky(ctx.corr(100.0), 100.0), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn complement_identities() {
        for (n, p) in [(3, 1), (10, 3), (5, 4)] {
            let x = if p == 1 { DMatrix::from_element(n, 1, 1.0) } else { random_matrix(n, p, n as u64) };
            let w = orthogonal_complement(&x).unwrap();
            assert_eq!(w.shape(), (n, n - p));
            assert!((w.tr_mul(&w) - DMatrix::identity(n - p, n - p)).abs().max() < 1e-12);
            assert!(x.tr_mul(&w).abs().max() < 1e-12);
        }
        let mut x = random_matrix(6, 2, 3);
        let c = x.column(0).into_owned();
        x.set_column(1, &(c * 2.0));
        assert!(orthogonal_complement(&x).is_err());
    }

    #[test]
    fn gls_matches_normal_equations() {
        let pts: Vec<[f64; 2]> = (0..9).map(|k| [(k % 3) as f64 * 0.3, (k / 3) as f64 * 0.25 + 0.01 * k as f64]).collect();
        let ctx = CorrelationContext::new(&pts, 1.5).unwrap();
        let r = ctx.corr(0.2);
        let x = DMatrix::from_fn(9, 2, |i, j| if j == 0 { 1.0 } else { pts[i][0] });
        let z = DVector::from_fn(9, |i, _| (i as f64).sin());
        let chol = guarded_cholesky(r.clone(), 0.2).unwrap();
        let g = GlsSummary::compute(&chol, &x, &z).unwrap();
        let ri = r.clone().try_inverse().unwrap();
        let a = x.transpose() * &ri * &x;
        let beta = a.clone().try_inverse().unwrap() * x.transpose() * &ri * &z;
        assert!((g.beta.clone() - &beta).abs().max() < 1e-10);
        let e = &z - &x * &beta;
        assert!((g.s2 - (e.transpose() * &ri * &e)[(0, 0)]).abs() < 1e-10);
        assert!((g.log_det_xtrx - a.determinant().ln()).abs() < 1e-10);
        assert!((g.log_det_r - r.determinant().ln()).abs() < 1e-10);
    }

    #[test]
    fn guard_rejects_near_singular() {
        let pts = vec![[0.0, 0.0], [1e-9, 0.0], [1.0, 1.0]];
        let ctx = CorrelationContext::new(&pts, 2.5).unwrap();
        let err = guarded_cholesky(ctx.corr(1.0), 1.0).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { theta, .. } if theta == 1.0));
    }
}
