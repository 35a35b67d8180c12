//! Sampling designs, the auxiliary grid U_M, the spectral design W_M and
//! tuning heuristics for (M1, M2, Δ).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Mean-function families that can be evaluated at any location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    /// μ(s) = β1.
    Constant,
    /// μ(s) = β1 + β2 x + β3 y.
    Linear,
    /// μ(s) = β1 + β2 x + β3 y + β4 x² + β5 xy + β6 y².
    Quadratic,
}

impl Trend {
    pub fn dim(&self) -> usize {
        match self {
            Trend::Constant => 1,
            Trend::Linear => 3,
            Trend::Quadratic => 6,
        }
    }

    pub fn row(&self, s: [f64; 2]) -> Vec<f64> {
        let [x, y] = s;
        match self {
            Trend::Constant => vec![1.0],
            Trend::Linear => vec![1.0, x, y],
            Trend::Quadratic => vec![1.0, x, y, x * x, x * y, y * y],
        }
    }

    pub fn matrix(&self, points: &[[f64; 2]]) -> DMatrix<f64> {
        let p = self.dim();
        DMatrix::from_fn(points.len(), p, |i, j| self.row(points[i])[j])
    }

    pub fn parse(s: &str) -> Option<Trend> {
        match s.to_ascii_lowercase().as_str() {
            "constant" | "const" => Some(Trend::Constant),
            "linear" => Some(Trend::Linear),
            "quadratic" => Some(Trend::Quadratic),
            _ => None,
        }
    }
}

/// Sampling locations together with the n × p design matrix.
#[derive(Debug, Clone)]
pub struct SpatialDesign {
    locations: Vec<[f64; 2]>,
    covariates: DMatrix<f64>,
    trend: Option<Trend>,
}

impl SpatialDesign {
    pub fn new(locations: Vec<[f64; 2]>, covariates: DMatrix<f64>) -> Result<Self> {
        let d = SpatialDesign { locations, covariates, trend: None };
        d.validate()?;
        Ok(d)
    }

    pub fn with_trend(locations: Vec<[f64; 2]>, trend: Trend) -> Result<Self> {
        let covariates = trend.matrix(&locations);
        let d = SpatialDesign { locations, covariates, trend: Some(trend) };
        d.validate()?;
        Ok(d)
    }

    pub fn constant_mean(locations: Vec<[f64; 2]>) -> Result<Self> {
        Self::with_trend(locations, Trend::Constant)
    }

    fn validate(&self) -> Result<()> {
        let n = self.locations.len();
        let p = self.covariates.ncols();
        if self.covariates.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} locations but design matrix has {} rows",
                n,
                self.covariates.nrows()
            )));
        }
        if p < 1 || n <= p {
            return Err(Error::InvalidDesign(format!("need n > p >= 1, got n = {n}, p = {p}")));
        }
        if self.locations.iter().any(|s| !(s[0].is_finite() && s[1].is_finite())) {
            return Err(Error::InvalidDesign("non-finite coordinate".into()));
        }
        if self.covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign("non-finite covariate".into()));
        }
        if let Some((i, j)) = find_duplicate(&self.locations) {
            return Err(Error::InvalidDesign(format!("locations {i} and {j} coincide")));
        }
        let rank = numerical_rank(&self.covariates);
        if rank < p {
            return Err(Error::RankDeficient(format!("design matrix has rank {rank} < p = {p}")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.locations.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn locations(&self) -> &[[f64; 2]] {
        &self.locations
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    /// The trend used to build the covariates, when they came from one.
    pub fn trend(&self) -> Option<Trend> {
        self.trend
    }

    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox::of(&self.locations)
    }

    /// Pairwise Euclidean distances (n × n).
    pub fn distance_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| dist(self.locations[i], self.locations[j]))
    }

    pub fn max_distance(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n() {
            for j in 0..i {
                m = m.max(dist(self.locations[i], self.locations[j]));
            }
        }
        m
    }

    /// If the locations form a complete m1 × m2 lattice with common spacing,
    /// returns the matching auxiliary grid together with, for every grid
    /// point in grid order, the index of the sampling location sitting there.
    pub fn as_regular_grid(&self, rel_tol: f64) -> Option<(AuxGrid, Vec<usize>)> {
        let xs = distinct_sorted(self.locations.iter().map(|s| s[0]), rel_tol);
        let ys = distinct_sorted(self.locations.iter().map(|s| s[1]), rel_tol);
        let (m1, m2) = (xs.len(), ys.len());
        if m1 * m2 != self.n() || m1 < 2 || m2 < 2 || m1 % 2 == 1 || m2 % 2 == 1 {
            return None;
        }
        let delta = xs[1] - xs[0];
        let tol = rel_tol * delta;
        let spaced = |v: &[f64]| v.windows(2).all(|w| ((w[1] - w[0]) - delta).abs() <= tol);
        if !spaced(&xs) || !spaced(&ys) {
            return None;
        }
        let grid = AuxGrid { m1, m2, delta, origin: [xs[0] - delta, ys[0] - delta] };
        let mut order = vec![usize::MAX; self.n()];
        for (k, s) in self.locations.iter().enumerate() {
            let i = ((s[0] - xs[0]) / delta).round() as usize;
            let j = ((s[1] - ys[0]) / delta).round() as usize;
            let g = i * m2 + j;
            if order[g] != usize::MAX {
                return None;
            }
            order[g] = k;
        }
        Some((grid, order))
    }
}

fn distinct_sorted(values: impl Iterator<Item = f64>, rel_tol: f64) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.total_cmp(b));
    let span = v.last().copied().unwrap_or(0.0) - v.first().copied().unwrap_or(0.0);
    let tol = rel_tol * span.max(f64::MIN_POSITIVE);
    let mut out: Vec<f64> = Vec::new();
    for x in v {
        if out.last().is_none_or(|&l| x - l > tol) {
            out.push(x);
        }
    }
    out
}

fn numerical_rank(x: &DMatrix<f64>) -> usize {
    let sv = x.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = smax * 1e-10 * (x.nrows().max(x.ncols()) as f64);
    sv.iter().filter(|&&s| s > tol).count()
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Regular m1 × m2 lattice with the given spacing, starting at `origin`.
pub fn regular_lattice(m1: usize, m2: usize, spacing: f64, origin: [f64; 2]) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(m1 * m2);
    for i in 0..m1 {
        for j in 0..m2 {
            pts.push([origin[0] + spacing * i as f64, origin[1] + spacing * j as f64]);
        }
    }
    pts
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BoundingBox {
    pub fn of(points: &[[f64; 2]]) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for s in points {
            for d in 0..2 {
                min[d] = min[d].min(s[d]);
                max[d] = max[d].max(s[d]);
            }
        }
        BoundingBox { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }
}

/// The auxiliary grid U_M = origin + {Δ,…,ΔM1} × {Δ,…,ΔM2}.
///
/// Grid points are ordered with the second index running fastest, i.e.
/// u_{1,1}, u_{1,2}, …, u_{M1,M2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxGrid {
    pub m1: usize,
    pub m2: usize,
    pub delta: f64,
    pub origin: [f64; 2],
}

impl AuxGrid {
    pub fn m(&self) -> usize {
        self.m1 * self.m2
    }

    /// Integer grid index (i, j), 1-based, of the k-th grid point.
    pub fn index(&self, k: usize) -> (usize, usize) {
        (k / self.m2 + 1, k % self.m2 + 1)
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        let (i, j) = self.index(k);
        [self.origin[0] + self.delta * i as f64, self.origin[1] + self.delta * j as f64]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.m()).map(|k| self.point(k)).collect()
    }

    pub fn extent(&self) -> BoundingBox {
        BoundingBox {
            min: self.point(0),
            max: self.point(self.m() - 1),
        }
    }

    pub fn covers(&self, region: &BoundingBox) -> bool {
        let e = self.extent();
        let tol = 1e-9 * self.delta;
        e.min[0] <= region.min[0] + tol
            && e.min[1] <= region.min[1] + tol
            && e.max[0] >= region.max[0] - tol
            && e.max[1] >= region.max[1] - tol
    }
}

/// Builds U_M anchored one spacing below the lower-left corner of `region`,
/// so the first grid point sits on that corner.
pub fn build_aux_grid(region: &BoundingBox, m1: usize, m2: usize, delta: f64) -> Result<AuxGrid> {
    check_even(m1, m2)?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if !(region.width() >= 0.0 && region.height() >= 0.0) {
        return Err(Error::InvalidDesign("empty region".into()));
    }
    let grid = AuxGrid {
        m1,
        m2,
        delta,
        origin: [region.min[0] - delta, region.min[1] - delta],
    };
    if !grid.covers(region) {
        return Err(Error::InvalidDesign(format!(
            "a {m1} x {m2} grid with spacing {delta} spans {:.4} x {:.4} but the region is {:.4} x {:.4}; \
             increase M1/M2 or the spacing",
            delta * (m1 - 1) as f64,
            delta * (m2 - 1) as f64,
            region.width(),
            region.height()
        )));
    }
    Ok(grid)
}

fn check_even(m1: usize, m2: usize) -> Result<()> {
    if m1 == 0 || m2 == 0 || m1 % 2 == 1 || m2 % 2 == 1 {
        return Err(Error::InvalidParameter(format!("M1 and M2 must be positive even integers, got {m1} and {m2}")));
    }
    Ok(())
}

/// Frequency index (m1, m2).
pub type FreqIndex = (i64, i64);

/// The spectral design W_M and its index classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDesign {
    pub m1: usize,
    pub m2: usize,
    pub delta: f64,
    /// I_C: (0,0), (M1/2,0), (0,M2/2), (M1/2,M2/2).
    pub corner: Vec<FreqIndex>,
    pub boundary: Vec<FreqIndex>,
    pub interior: Vec<FreqIndex>,
    pub exterior: Vec<FreqIndex>,
}

impl SpectralDesign {
    pub fn m(&self) -> usize {
        self.m1 * self.m2
    }

    pub fn frequency(&self, idx: FreqIndex) -> [f64; 2] {
        [
            2.0 * PI * idx.0 as f64 / (self.delta * self.m1 as f64),
            2.0 * PI * idx.1 as f64 / (self.delta * self.m2 as f64),
        ]
    }

    /// I = I_B ∪ I_I ∪ I_E, in that order.
    pub fn index_set(&self) -> Vec<FreqIndex> {
        self.boundary.iter().chain(&self.interior).chain(&self.exterior).copied().collect()
    }

    /// Frequencies in the layout used by Λ̃ and H1: (I_C, I, I).
    pub fn layout(&self) -> Vec<FreqIndex> {
        let i = self.index_set();
        self.corner.iter().chain(&i).chain(&i).copied().collect()
    }

    pub fn layout_frequencies(&self) -> Vec<[f64; 2]> {
        self.layout().into_iter().map(|k| self.frequency(k)).collect()
    }

    /// Every index of W_M: m_i ∈ {-M_i/2+1, …, M_i/2}.
    pub fn all_indices(&self) -> Vec<FreqIndex> {
        let (h1, h2) = (self.m1 as i64 / 2, self.m2 as i64 / 2);
        let mut v = Vec::with_capacity(self.m());
        for a in (-h1 + 1)..=h1 {
            for b in (-h2 + 1)..=h2 {
                v.push((a, b));
            }
        }
        v
    }

    /// Reduces an index to its representative in W_M modulo the lattice.
    pub fn wrap(&self, idx: FreqIndex) -> FreqIndex {
        let w = |v: i64, m: i64| {
            let h = m / 2;
            let r = (v + h - 1).rem_euclid(m);
            r - h + 1
        };
        (w(idx.0, self.m1 as i64), w(idx.1, self.m2 as i64))
    }
}

/// Builds W_M with index classes I_C, I_B, I_I, I_E.
pub fn build_spectral_design(m1: usize, m2: usize, delta: f64) -> Result<SpectralDesign> {
    check_even(m1, m2)?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let (h1, h2) = (m1 as i64 / 2, m2 as i64 / 2);
    let corner = vec![(0, 0), (h1, 0), (0, h2), (h1, h2)];
    let mut boundary = Vec::new();
    boundary.extend((1..h1).map(|a| (a, 0)));
    boundary.extend((1..h2).map(|b| (0, b)));
    boundary.extend((1..h1).map(|a| (a, h2)));
    boundary.extend((1..h2).map(|b| (h1, b)));
    let mut interior = Vec::new();
    let mut exterior = Vec::new();
    for a in 1..h1 {
        for b in 1..h2 {
            interior.push((a, b));
            exterior.push((a, -b));
        }
    }
    Ok(SpectralDesign { m1, m2, delta, corner, boundary, interior, exterior })
}

/// Nearest-neighbour distances d_i and their minimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NearestNeighbors {
    pub distances: Vec<f64>,
    pub d_min: f64,
}

impl NearestNeighbors {
    pub fn percentile(&self, q: f64) -> f64 {
        percentile(&self.distances, q)
    }

    pub fn median(&self) -> f64 {
        self.percentile(50.0)
    }

    /// Coefficient of variation of the d_i.
    pub fn cv(&self) -> f64 {
        let n = self.distances.len() as f64;
        let mean = self.distances.iter().sum::<f64>() / n;
        let var = self.distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        var.sqrt() / mean
    }
}

/// Linear-interpolation percentile (q in [0, 100]).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

fn find_duplicate(points: &[[f64; 2]]) -> Option<(usize, usize)> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(points[a][1].total_cmp(&points[b][1])));
    idx.windows(2).find(|w| points[w[0]] == points[w[1]]).map(|w| (w[0].min(w[1]), w[0].max(w[1])))
}

/// Nearest-neighbour distances via an x-sorted sweep with pruning.
pub fn nearest_neighbor_distances(points: &[[f64; 2]]) -> Result<NearestNeighbors> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidDesign("need at least two locations".into()));
    }
    if let Some((i, j)) = find_duplicate(points) {
        return Err(Error::InvalidDesign(format!("locations {i} and {j} coincide")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
    let mut best = vec![f64::INFINITY; n];
    for (rank, &i) in order.iter().enumerate() {
        let pi = points[i];
        for &j in &order[rank + 1..] {
            if points[j][0] - pi[0] >= best[i] {
                break;
            }
            let d = dist(pi, points[j]);
            if d < best[i] {
                best[i] = d;
            }
            if d < best[j] {
                best[j] = d;
            }
        }
    }
    // Points whose nearest neighbour lies to their left were updated while
    // that neighbour was scanning, except when the neighbour's scan broke off
    // early; a reverse sweep closes that gap.
    for (rank, &i) in order.iter().enumerate().rev() {
        let pi = points[i];
        for &j in order[..rank].iter().rev() {
            let dx = pi[0] - points[j][0];
            if dx >= best[i] {
                break;
            }
            let d = dist(pi, points[j]);
            if d < best[i] {
                best[i] = d;
            }
        }
    }
    let d_min = best.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(NearestNeighbors { distances: best, d_min })
}

/// Regular vs irregular designs for tuning purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularity {
    Regular,
    Irregular,
}

/// Coefficient-of-variation threshold below which a design counts as regular.
pub const REGULAR_CV_THRESHOLD: f64 = 0.05;
/// Percentile of nearest-neighbour distances used for Δ on irregular designs.
pub const IRREGULAR_PERCENTILE: f64 = 85.0;
/// Sample size from which a regular grid only needs Δ adjusted.
pub const LARGE_GRID_N: usize = 400;

/// Suggested tuning constants and the distance summary they came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningReport {
    pub m1: usize,
    pub m2: usize,
    pub delta: f64,
    pub regularity: Regularity,
    pub enlargement: f64,
    pub d_min: f64,
    pub d_median: f64,
    pub d_percentile: f64,
    pub percentile: f64,
}

/// Grid enlargement factor as a function of smoothness.
pub fn enlargement_factor(nu: f64) -> f64 {
    if nu <= 1.0 {
        1.2
    } else if nu <= 2.0 {
        1.3
    } else {
        1.4
    }
}

/// Nearest even integer, ties upward.
fn round_even(x: f64) -> usize {
    let e = 2.0 * (x / 2.0 + 0.5).floor();
    e.max(0.0) as usize
}

fn ceil_even(x: f64) -> usize {
    let c = x.ceil().max(0.0) as usize;
    c + c % 2
}

pub fn detect_regularity(nn: &NearestNeighbors) -> Regularity {
    if nn.cv() < REGULAR_CV_THRESHOLD {
        Regularity::Regular
    } else {
        Regularity::Irregular
    }
}

/// Suggests (M1, M2, Δ) for a design.
///
/// Small regular grids enlarge both M1 and Δ by a smoothness-dependent factor
/// in [1.2, 1.4]; regular grids with n >= 400 keep M1 = √n and enlarge Δ by
/// 10% less than that factor; irregular designs take Δ at the 85th percentile
/// of nearest-neighbour distances. M1 = M2 is always raised until the grid
/// covers the design's bounding box.
pub fn tune_defaults(design: &SpatialDesign, regularity: Option<Regularity>, nu: f64) -> Result<TuningReport> {
    if design.n() < 4 {
        return Err(Error::InvalidDesign("tuning needs at least four locations".into()));
    }
    let nn = nearest_neighbor_distances(design.locations())?;
    let regularity = regularity.unwrap_or_else(|| detect_regularity(&nn));
    let bbox = design.bounding_box();
    let span = bbox.width().max(bbox.height());
    let sqrt_n = (design.n() as f64).sqrt();
    let f = enlargement_factor(nu);
    let (mut m, delta, enlargement) = match regularity {
        Regularity::Regular => {
            if design.n() >= LARGE_GRID_N {
                (round_even(sqrt_n), nn.d_min * (f - 0.1), f - 0.1)
            } else {
                let m = round_even(sqrt_n * f);
                if m < 4 {
                    (4, nn.d_min, 1.0)
                } else {
                    (m, nn.d_min * f, f)
                }
            }
        }
        Regularity::Irregular => (0, nn.percentile(IRREGULAR_PERCENTILE), 1.0),
    };
    let needed = ceil_even(span / delta * (1.0 - 1e-12) + 1.0);
    m = m.max(needed).max(4);
    Ok(TuningReport {
        m1: m,
        m2: m,
        delta,
        regularity,
        enlargement,
        d_min: nn.d_min,
        d_median: nn.median(),
        d_percentile: nn.percentile(IRREGULAR_PERCENTILE),
        percentile: IRREGULAR_PERCENTILE,
    })
}
