//! The trigonometric basis H1 on the auxiliary grid, the transformed design
//! X1 and the diagonal spectra Λ̃ and G of the spectral approximation.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::covmodel::{AliasConfig, AliasTable, SpectralFamily};
use crate::designs::{AuxGrid, FreqIndex, SpectralDesign, Trend};
use crate::error::{Error, Result};

/// Grid size above which building a dense H1 for a general mean is flagged.
pub const DENSE_BASIS_WARN_M: usize = 4096;

/// H1 together with the grid and spectral design it was built from.
///
/// Columns follow the (I_C, I, I) layout: four cosine columns for the
/// corner frequencies, then 2cos and −2sin columns over I.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub grid: AuxGrid,
    pub spectral: SpectralDesign,
    pub h1: DMatrix<f64>,
    layout: Vec<FreqIndex>,
    n_corner: usize,
    n_pairs: usize,
}

/// cos/sin of 2π(m1 i/M1 + m2 j/M2) evaluated through an exact integer phase.
fn phase(idx: FreqIndex, i: usize, j: usize, m1: usize, m2: usize) -> f64 {
    let m = (m1 * m2) as i64;
    let k = (idx.0 * (i as i64) * (m2 as i64) + idx.1 * (j as i64) * (m1 as i64)).rem_euclid(m);
    2.0 * PI * k as f64 / m as f64
}

/// The analytic value of H1[row, col].
fn h1_entry(sd: &SpectralDesign, layout: &[FreqIndex], n_corner: usize, n_pairs: usize, grid: &AuxGrid, row: usize, col: usize) -> f64 {
    let (i, j) = grid.index(row);
    let ang = phase(layout[col], i, j, sd.m1, sd.m2);
    if col < n_corner {
        ang.cos()
    } else if col < n_corner + n_pairs {
        2.0 * ang.cos()
    } else {
        -2.0 * ang.sin()
    }
}

/// Builds H1 for a grid and its spectral design.
pub fn build_h1(grid: &AuxGrid, spectral: &SpectralDesign) -> Result<SpectralBasis> {
    if grid.m1 != spectral.m1 || grid.m2 != spectral.m2 {
        return Err(Error::DimensionMismatch(format!(
            "grid is {} x {} but spectral design is {} x {}",
            grid.m1, grid.m2, spectral.m1, spectral.m2
        )));
    }
    if (grid.delta - spectral.delta).abs() > 1e-12 * grid.delta {
        return Err(Error::DimensionMismatch("grid and spectral design use different spacings".into()));
    }
    let layout = spectral.layout();
    let n_corner = spectral.corner.len();
    let n_pairs = spectral.index_set().len();
    let m = grid.m();
    debug_assert_eq!(layout.len(), m);
    let h1 = DMatrix::from_fn(m, m, |r, c| h1_entry(spectral, &layout, n_corner, n_pairs, grid, r, c));
    Ok(SpectralBasis { grid: *grid, spectral: spectral.clone(), h1, layout, n_corner, n_pairs })
}

impl SpectralBasis {
    pub fn m(&self) -> usize {
        self.grid.m()
    }

    pub fn layout(&self) -> &[FreqIndex] {
        &self.layout
    }

    pub fn n_corner(&self) -> usize {
        self.n_corner
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    /// Diagonal of H1ᵀH1: M for the corner columns and 2M otherwise.
    pub fn gram_diagonal(&self) -> Vec<f64> {
        let m = self.m() as f64;
        (0..self.m()).map(|c| if c < self.n_corner { m } else { 2.0 * m }).collect()
    }

    /// Recomputes H1[row, col] from the defining formula.
    pub fn analytic_entry(&self, row: usize, col: usize) -> f64 {
        h1_entry(&self.spectral, &self.layout, self.n_corner, self.n_pairs, &self.grid, row, col)
    }

    /// L1 = H1 (H1ᵀH1)^{-1/2}, an orthogonal matrix.
    pub fn l1(&self) -> DMatrix<f64> {
        let mut l = self.h1.clone();
        for (c, g) in self.gram_diagonal().into_iter().enumerate() {
            l.column_mut(c).scale_mut(1.0 / g.sqrt());
        }
        l
    }

    /// L1ᵀ v.
    pub fn l1_transpose_mul(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if v.nrows() != self.m() {
            return Err(Error::DimensionMismatch(format!("expected {} rows, got {}", self.m(), v.nrows())));
        }
        let mut out = self.h1.tr_mul(v);
        for (c, g) in self.gram_diagonal().into_iter().enumerate() {
            out.row_mut(c).scale_mut(1.0 / g.sqrt());
        }
        Ok(out)
    }

    /// L1ᵀ z for a vector of grid values.
    pub fn contrasts(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(z.len(), 1, z.as_slice());
        Ok(self.l1_transpose_mul(&m)?.column(0).into_owned())
    }

    /// Frequencies ω in layout order.
    pub fn frequencies(&self) -> Vec<[f64; 2]> {
        self.layout.iter().map(|&k| self.spectral.frequency(k)).collect()
    }

    /// The distinct frequencies I_C ∪ I (the I block is repeated in the layout).
    pub fn distinct_frequencies(&self) -> Vec<[f64; 2]> {
        self.frequencies()[..self.n_corner + self.n_pairs].to_vec()
    }

    /// Expands per-frequency values on I_C ∪ I into the full (I_C, I, I) layout.
    pub fn expand(&self, distinct: &[f64]) -> Vec<f64> {
        let mut v = distinct.to_vec();
        v.extend_from_slice(&distinct[self.n_corner..self.n_corner + self.n_pairs]);
        v
    }
}

/// X1 = L1ᵀ X̃ for covariates X̃ evaluated at the grid points.
pub fn build_x1(basis: &SpectralBasis, covariates: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let x1 = basis.l1_transpose_mul(covariates)?;
    let p = covariates.ncols();
    let sv = covariates.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if p == 0 || sv.iter().any(|&s| s <= smax * 1e-10 * basis.m() as f64) {
        return Err(Error::RankDeficient("covariates on the grid are rank deficient".into()));
    }
    Ok(x1)
}

/// X1 for a trend evaluated at the grid points.
pub fn build_x1_for_trend(basis: &SpectralBasis, trend: Trend) -> Result<DMatrix<f64>> {
    build_x1(basis, &trend.matrix(&basis.grid.points()))
}

/// A diagonal spectrum in layout order, with ∂/∂θ of its log.
#[derive(Debug, Clone)]
pub struct DiagonalSpectrum {
    pub lambda: Vec<f64>,
    pub dlog: Vec<f64>,
    pub layout: Vec<FreqIndex>,
}

/// Evaluates Λ̃_θ repeatedly for one basis and family.
pub struct SpectrumEvaluator<'a, F: SpectralFamily + ?Sized> {
    basis: &'a SpectralBasis,
    family: &'a F,
    alias: AliasConfig,
    table: AliasTable,
}

impl<'a, F: SpectralFamily + ?Sized> SpectrumEvaluator<'a, F> {
    pub fn new(basis: &'a SpectralBasis, family: &'a F, truncation: usize) -> Result<Self> {
        let alias = AliasConfig::new(basis.grid.delta, truncation)?;
        let table = AliasTable::new(family, &basis.distinct_frequencies(), &alias)?;
        Ok(SpectrumEvaluator { basis, family, alias, table })
    }

    pub fn basis(&self) -> &SpectralBasis {
        self.basis
    }

    pub fn alias(&self) -> &AliasConfig {
        &self.alias
    }

    /// (ln f̃, ∂θ ln f̃) on I_C ∪ I.
    pub fn distinct(&self, theta: f64) -> (Vec<f64>, Vec<f64>) {
        let k = self.table.len();
        let mut ln = vec![0.0; k];
        let mut dln = vec![0.0; k];
        self.table.eval_all(self.family, theta, &mut ln, &mut dln);
        (ln, dln)
    }

    /// Λ̃_θ = c_Δ diag(f̃ over I_C, I, I).
    pub fn lambda_tilde(&self, theta: f64) -> DiagonalSpectrum {
        let (ln, dln) = self.distinct(theta);
        let c = self.alias.c_delta();
        let lambda = self.basis.expand(&ln.iter().map(|l| c * l.exp()).collect::<Vec<_>>());
        DiagonalSpectrum { lambda, dlog: self.basis.expand(&dln), layout: self.basis.layout.clone() }
    }

    /// G_θ = c_Δ/(2M) diag(2f̃ over I_C, f̃ over I, I).
    pub fn g_diagonal(&self, theta: f64) -> Vec<f64> {
        let lt = self.lambda_tilde(theta);
        let m = self.basis.m() as f64;
        lt.lambda
            .iter()
            .enumerate()
            .map(|(c, l)| if c < self.basis.n_corner { l / m } else { l / (2.0 * m) })
            .collect()
    }

    /// σ² H1 G_θ H1ᵀ.
    pub fn spectral_cov(&self, sigma2: f64, theta: f64) -> DMatrix<f64> {
        let g = self.g_diagonal(theta);
        let mut hg = self.basis.h1.clone();
        for (c, gc) in g.iter().enumerate() {
            hg.column_mut(c).scale_mut(sigma2 * gc);
        }
        hg * self.basis.h1.transpose()
    }

    /// Covariance between two grid points without forming the full matrix.
    pub fn spectral_cov_between(&self, sigma2: f64, theta: f64, a: usize, b: usize) -> f64 {
        let g = self.g_diagonal(theta);
        let h = &self.basis.h1;
        sigma2 * (0..self.basis.m()).map(|c| h[(a, c)] * g[c] * h[(b, c)]).sum::<f64>()
    }

    /// Implied covariance at lag (k1Δ, k2Δ): (c_Δ/M) Σ_W f̃(ω) cos(ωᵀh).
    pub fn lag_cov(&self, sigma2: f64, theta: f64, k1: i64, k2: i64) -> f64 {
        let (ln, _) = self.distinct(theta);
        let sd = &self.basis.spectral;
        let nc = self.basis.n_corner;
        let m = self.basis.m() as f64;
        let c = self.alias.c_delta();
        let mut s = 0.0;
        for (q, &idx) in self.basis.layout[..nc + self.basis.n_pairs].iter().enumerate() {
            let ang = phase(idx, k1.rem_euclid(sd.m1 as i64) as usize, k2.rem_euclid(sd.m2 as i64) as usize, sd.m1, sd.m2);
            let w = if q < nc { 1.0 } else { 2.0 };
            s += w * ln[q].exp() * ang.cos();
        }
        sigma2 * c * s / m
    }
}
