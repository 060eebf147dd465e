//! Seeded randomized linear transforms (Gaussian JL, fast JL via
//! Walsh-Hadamard, stacked Hadamard blocks with Gaussian diagonals) and the
//! scalar estimators built on top of them.
//!
//! All transforms are immutable after construction and deterministic in the
//! generator handed to the constructor.

use nalgebra::{DMatrix, DVectorView};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::constants::{PHI_INV_3_4, SQRT_PI_OVER_2};
use crate::error::{ensure_finite, Error, Result};
use crate::rng::SeedRng;

/// In-place unnormalized Walsh-Hadamard transform.
///
/// Applies the recursively defined `H_d` in `O(d log d)` butterflies;
/// `fwht(fwht(v)) == d * v` exactly on inputs where the arithmetic stays
/// integral.
pub fn fwht(data: &mut [f64]) -> Result<()> {
    let n = data.len();
    if n == 0 || n & (n - 1) != 0 {
        return Err(Error::NotPowerOfTwo { len: n });
    }
    let mut half = 1;
    while half < n {
        for chunk in data.chunks_exact_mut(half * 2) {
            let (lo, hi) = chunk.split_at_mut(half);
            for i in 0..half {
                let a = lo[i];
                let b = hi[i];
                lo[i] = a + b;
                hi[i] = a - b;
            }
        }
        half *= 2;
    }
    Ok(())
}

pub fn next_power_of_two(n: usize) -> usize {
    n.next_power_of_two().max(1)
}

/// Dense Gaussian JL map: `m x d` i.i.d. normal entries scaled by `1/sqrt(m)`.
#[derive(Clone, Debug)]
pub struct GaussianJlMap {
    entries: DMatrix<f64>,
}

impl GaussianJlMap {
    pub fn new(target_dim: usize, source_dim: usize, rng: &mut SeedRng) -> Result<Self> {
        if target_dim == 0 || source_dim == 0 {
            return Err(Error::invalid("JL dimensions must be positive"));
        }
        let scale = 1.0 / (target_dim as f64).sqrt();
        let entries = DMatrix::from_fn(target_dim, source_dim, |_, _| {
            let g: f64 = rng.sample(StandardNormal);
            g * scale
        });
        Ok(Self { entries })
    }

    pub fn from_seed(target_dim: usize, source_dim: usize, seed: u64) -> Result<Self> {
        Self::new(target_dim, source_dim, &mut SeedRng::new(seed))
    }

    pub fn target_dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn source_dim(&self) -> usize {
        self.entries.ncols()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.source_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.source_dim(),
                got: x.len(),
            });
        }
        let v = DVectorView::from_slice(x, x.len());
        Ok((&self.entries * v).data.into())
    }

    /// Row `i` of the map applied to `x`; used by column-wise incremental
    /// maintenance.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.entries.column(j).iter().copied().collect()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// Fast JL map `P H D`: random sign flip, Walsh-Hadamard mix, then a uniform
/// sample of `m` rows. Rows of the orthonormal Hadamard are rescaled by
/// `sqrt(d_pad / m)`, which collapses to dividing the unnormalized transform
/// by `sqrt(m)`.
#[derive(Clone, Debug)]
pub struct FastJlMap {
    source_dim: usize,
    padded_dim: usize,
    signs: Vec<f64>,
    sampled_rows: Vec<usize>,
    scale: f64,
}

impl FastJlMap {
    pub fn new(target_dim: usize, source_dim: usize, rng: &mut SeedRng) -> Result<Self> {
        if target_dim == 0 || source_dim == 0 {
            return Err(Error::invalid("JL dimensions must be positive"));
        }
        let padded_dim = next_power_of_two(source_dim);
        let signs = (0..padded_dim)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let sampled_rows = (0..target_dim)
            .map(|_| rng.gen_range(0..padded_dim))
            .collect();
        Ok(Self {
            source_dim,
            padded_dim,
            signs,
            sampled_rows,
            scale: 1.0 / (target_dim as f64).sqrt(),
        })
    }

    pub fn from_seed(target_dim: usize, source_dim: usize, seed: u64) -> Result<Self> {
        Self::new(target_dim, source_dim, &mut SeedRng::new(seed))
    }

    pub fn target_dim(&self) -> usize {
        self.sampled_rows.len()
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.source_dim {
            return Err(Error::DimensionMismatch {
                expected: self.source_dim,
                got: x.len(),
            });
        }
        let mut buf = vec![0.0; self.padded_dim];
        for (i, &v) in x.iter().enumerate() {
            buf[i] = v * self.signs[i];
        }
        fwht(&mut buf)?;
        Ok(self
            .sampled_rows
            .iter()
            .map(|&r| buf[r] * self.scale)
            .collect())
    }
}

/// Either flavor of JL map behind one dispatch point.
#[derive(Clone, Debug)]
pub enum JlMap {
    Gaussian(GaussianJlMap),
    Fast(FastJlMap),
}

impl JlMap {
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            JlMap::Gaussian(m) => m.apply(x),
            JlMap::Fast(m) => m.apply(x),
        }
    }

    pub fn target_dim(&self) -> usize {
        match self {
            JlMap::Gaussian(m) => m.target_dim(),
            JlMap::Fast(m) => m.target_dim(),
        }
    }

    pub fn source_dim(&self) -> usize {
        match self {
            JlMap::Gaussian(m) => m.source_dim(),
            JlMap::Fast(m) => m.source_dim(),
        }
    }
}

/// `m` stacked Hadamard blocks, each preceded by an independent standard
/// normal diagonal. [`SrhtStack::apply`] normalizes every block by
/// `1/sqrt(d_pad)`, so output coordinates are `N(0, ||z||^2 / d_pad)`
/// marginally; the crate-internal raw variant skips the normalization, giving
/// unit-variance-per-norm coordinates `N(0, ||z||^2)` as the truncated-mean
/// norm estimator expects.
#[derive(Clone, Debug)]
pub struct SrhtStack {
    source_dim: usize,
    padded_dim: usize,
    diagonals: Vec<Vec<f64>>,
}

impl SrhtStack {
    pub fn new(blocks: usize, source_dim: usize, rng: &mut SeedRng) -> Result<Self> {
        if blocks == 0 || source_dim == 0 {
            return Err(Error::invalid("SRHT dimensions must be positive"));
        }
        let padded_dim = next_power_of_two(source_dim);
        let diagonals = (0..blocks)
            .map(|_| (0..padded_dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        Ok(Self {
            source_dim,
            padded_dim,
            diagonals,
        })
    }

    pub fn from_seed(blocks: usize, source_dim: usize, seed: u64) -> Result<Self> {
        Self::new(blocks, source_dim, &mut SeedRng::new(seed))
    }

    /// Test-support constructor with explicit diagonals.
    pub fn with_diagonals(source_dim: usize, diagonals: Vec<Vec<f64>>) -> Result<Self> {
        let padded_dim = next_power_of_two(source_dim);
        if diagonals.is_empty() {
            return Err(Error::EmptyInput("SRHT diagonals"));
        }
        for d in &diagonals {
            if d.len() != padded_dim {
                return Err(Error::DimensionMismatch {
                    expected: padded_dim,
                    got: d.len(),
                });
            }
            ensure_finite(d, "SRHT diagonal")?;
        }
        Ok(Self {
            source_dim,
            padded_dim,
            diagonals,
        })
    }

    pub fn blocks(&self) -> usize {
        self.diagonals.len()
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn padded_dim(&self) -> usize {
        self.padded_dim
    }

    pub fn output_dim(&self) -> usize {
        self.blocks() * self.padded_dim
    }

    /// Number of stored diagonal entries.
    pub fn stored_reals(&self) -> usize {
        self.blocks() * self.padded_dim
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        let inv = 1.0 / (self.padded_dim as f64).sqrt();
        let mut out = self.apply_raw(z)?;
        for v in &mut out {
            *v *= inv;
        }
        Ok(out)
    }

    /// Unnormalized variant: block `j` is `H_d D^j z` with the plain `±1`
    /// Hadamard, so each coordinate has standard deviation `||z||`.
    pub(crate) fn apply_raw(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.source_dim {
            return Err(Error::DimensionMismatch {
                expected: self.source_dim,
                got: z.len(),
            });
        }
        let mut out = Vec::with_capacity(self.output_dim());
        let mut buf = vec![0.0; self.padded_dim];
        for diag in &self.diagonals {
            buf.iter_mut().for_each(|v| *v = 0.0);
            for (i, &zi) in z.iter().enumerate() {
                buf[i] = zi * diag[i];
            }
            fwht(&mut buf)?;
            out.extend_from_slice(&buf);
        }
        Ok(out)
    }

}

/// Truncation level and accuracy target for the clamped norm estimator.
#[derive(Clone, Copy, Debug)]
pub struct TruncationParams {
    pub r_trunc: f64,
    pub eps: f64,
}

impl TruncationParams {
    pub fn new(r_trunc: f64, eps: f64) -> Result<Self> {
        if !(r_trunc > 0.0) {
            return Err(Error::invalid("truncation level must be positive"));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid("eps must lie in (0, 1)"));
        }
        let floor = 4.0 * (1.0 / eps).ln().sqrt();
        if r_trunc < floor {
            return Err(Error::invalid(format!(
                "truncation level {r_trunc} is below the norm-estimation floor {floor:.3}"
            )));
        }
        Ok(Self { r_trunc, eps })
    }

    /// Smallest admissible truncation level for a given accuracy target.
    pub fn for_eps(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid("eps must lie in (0, 1)"));
        }
        let r = 4.0 * (1.0 / eps).ln().sqrt();
        Ok(Self { r_trunc: r, eps })
    }
}

/// Clamp to `min(|a|, r)`.
pub fn psi_r(a: f64, r_trunc: f64) -> f64 {
    a.abs().min(r_trunc)
}

/// The `ceil(alpha * n)`-th smallest element of a multiset.
pub fn quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile input"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("quantile level must lie in (0, 1]"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let idx = ((alpha * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[idx - 1])
}

/// Truncated-mean norm estimate from a coordinate subsample.
///
/// `coords` must be drawn (with replacement) from a transform whose
/// coordinates have standard deviation equal to the norm being estimated
/// (the unnormalized stacked-Hadamard coordinates). Truncation is scale
/// free: the first pass
/// estimates the coordinate scale from the median absolute value, the second
/// clamps at `r_trunc` times that scale and returns the
/// `sqrt(pi/2)`-corrected truncated mean.
pub fn ret_norm(coords: &[f64], params: &TruncationParams) -> Result<f64> {
    if coords.is_empty() {
        return Err(Error::EmptyInput("norm-estimator coordinate sample"));
    }
    let abs: Vec<f64> = coords.iter().map(|c| c.abs()).collect();
    let scale = quantile(&abs, 0.5)? / PHI_INV_3_4;
    if scale == 0.0 {
        return Ok(0.0);
    }
    let r = params.r_trunc * scale;
    let mean = abs.iter().map(|&a| a.min(r)).sum::<f64>() / abs.len() as f64;
    Ok(SQRT_PI_OVER_2 * mean)
}
