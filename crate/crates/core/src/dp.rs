//! Differentially private median over a finite geometric grid, plus the
//! privacy-budget calculators used to size the replica wrappers.

use rand::Rng;

use crate::constants::{EPS_MED, FRAMEWORK_K_COEFF, FRAMEWORK_R_COEFF};
use crate::error::{Error, Result};
use crate::rng::SeedRng;

/// An `(epsilon, delta)` privacy guarantee.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::invalid("epsilon must be finite and nonnegative"));
        }
        if !delta.is_finite() || !(0.0..1.0).contains(&delta) {
            return Err(Error::invalid("delta must lie in [0, 1)"));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Finite output domain of the private median: the point `0` followed by the
/// geometric sequence `lo * ratio^j` until `hi` is covered.
#[derive(Clone, Debug)]
pub struct OutputGrid {
    lo: f64,
    hi: f64,
    ratio: f64,
    points: Vec<f64>,
}

impl OutputGrid {
    pub fn new(lo: f64, hi: f64, ratio: f64) -> Result<Self> {
        if !(lo > 0.0 && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("grid bounds must satisfy 0 < lo < hi"));
        }
        if !(ratio > 1.0) {
            return Err(Error::invalid("grid ratio must exceed 1"));
        }
        let steps = ((hi / lo).ln() / ratio.ln()).ceil() as usize;
        let mut points = Vec::with_capacity(steps + 2);
        points.push(0.0);
        for j in 0..=steps {
            points.push(lo * ratio.powi(j as i32));
        }
        Ok(Self {
            lo,
            hi,
            ratio,
            points,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the grid point nearest to `v` (in absolute distance).
    pub fn nearest_index(&self, v: f64) -> usize {
        let mut best = 0;
        let mut best_gap = f64::INFINITY;
        for (i, &p) in self.points.iter().enumerate() {
            let gap = (p - v).abs();
            if gap < best_gap {
                best_gap = gap;
                best = i;
            }
        }
        best
    }

    /// Projects a value onto the finite domain: clamp into `[0, hi]`, send
    /// anything below `lo` to the `0` point, and round the rest to the
    /// log-nearest geometric point.
    pub fn snap(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, self.hi);
        if v < self.lo {
            return 0.0;
        }
        let j = ((v / self.lo).ln() / self.ratio.ln()).round() as usize;
        self.points[(j + 1).min(self.points.len() - 1)]
    }
}

/// Exponential-mechanism selection probabilities for every grid point.
///
/// Values are first projected onto the grid (clamped into `[0, hi]`, snapped
/// to the log-nearest point), so the mechanism's database lives on the finite
/// domain. The utility of a candidate `x` is its rank distance to the median:
/// `min(#{v <= x}, #{v >= x}) - |S|/2`, which coincides with
/// `-|#{v <= x} - |S|/2|` whenever no value ties with `x` and keeps point
/// masses on the grid meaningful. Changing one value moves either count by at
/// most one, so the weight `exp(eps * u / 2)` yields `(eps, 0)`-DP.
pub fn private_median_distribution(
    values: &[f64],
    grid: &OutputGrid,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("private median input"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("median epsilon must be positive"));
    }
    let mut sorted: Vec<f64> = values.iter().map(|v| grid.snap(*v)).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len() as f64;
    let utilities: Vec<f64> = grid
        .points
        .iter()
        .map(|&x| {
            let le = sorted.partition_point(|&v| v <= x) as f64;
            let lt = sorted.partition_point(|&v| v < x) as f64;
            let ge = n - lt;
            le.min(ge) - n / 2.0
        })
        .collect();
    let max_u = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = utilities
        .iter()
        .map(|u| (epsilon * (u - max_u) / 2.0).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Private median over the grid: one exponential-mechanism draw.
///
/// Input values are clamped into `[0, grid.hi]` first.
pub fn private_median(
    values: &[f64],
    grid: &OutputGrid,
    epsilon: f64,
    rng: &mut SeedRng,
) -> Result<f64> {
    let probs = private_median_distribution(values, grid, epsilon)?;
    let mut u: f64 = rng.gen();
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return Ok(grid.points[i]);
        }
        u -= p;
    }
    Ok(*grid.points.last().expect("grid is never empty"))
}

/// Privacy of `k` adaptive interactions with an `(eps, delta)`-DP mechanism:
/// `eps' = sqrt(2k ln(1/delta')) * eps + 2k eps^2`, `delta' = k delta + delta_prime`.
pub fn advanced_composition(
    k: usize,
    eps: f64,
    delta: f64,
    delta_prime: f64,
) -> Result<PrivacyParams> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid("composition eps must lie in (0, 1]"));
    }
    if !(delta_prime > 0.0 && delta_prime <= 1.0) {
        return Err(Error::invalid("delta_prime must lie in (0, 1]"));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::invalid("delta must lie in [0, 1]"));
    }
    let kf = k as f64;
    let epsilon = (2.0 * kf * (1.0 / delta_prime).ln()).sqrt() * eps + 2.0 * kf * eps * eps;
    Ok(PrivacyParams {
        epsilon,
        delta: kf * delta + delta_prime,
    })
}

/// Amplification by subsampling `k` of `n` rows with replacement:
/// `eps' = 6 eps k / n`, `delta' = exp(6 eps k / n) * 4 k delta / n`.
pub fn subsampling_amplification(
    eps: f64,
    delta: f64,
    k: usize,
    n: usize,
) -> Result<PrivacyParams> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid("amplification requires eps in (0, 1]"));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::invalid("delta must lie in [0, 1)"));
    }
    if n == 0 || 2 * k > n {
        return Err(Error::invalid(format!(
            "subsample size {k} must be at most half the database size {n}"
        )));
    }
    let epsilon = 6.0 * eps * k as f64 / n as f64;
    let delta_out = epsilon.exp() * 4.0 * k as f64 * delta / n as f64;
    Ok(PrivacyParams {
        epsilon,
        delta: delta_out,
    })
}

/// Sizing of the replica wrapper for a query budget `Q` over an input of
/// size `n`, together with the composed transcript budget it implies.
#[derive(Clone, Copy, Debug)]
pub struct FrameworkParams {
    /// Number of independent replicas.
    pub r: usize,
    /// Per-query subsample size.
    pub k: usize,
    /// Per-call private-median privacy parameter.
    pub eps_med: f64,
    /// Query budget.
    pub query_budget: usize,
    /// Composed privacy of the full Q-query transcript.
    pub transcript: PrivacyParams,
}

/// `r = ceil(c_r sqrt(Q) ln^2(nQ))`, `k = ceil(c_k ln(nQ))`, with the
/// transcript budget chained through the two calculators
/// (per-query amplification at `k/r`, then advanced composition over `Q`
/// interactions at `delta' = (nQ)^-2`).
pub fn framework_params(query_budget: usize, n: usize) -> Result<FrameworkParams> {
    if query_budget == 0 || n == 0 {
        return Err(Error::invalid("query budget and input size must be positive"));
    }
    let nq = (n as f64) * (query_budget as f64);
    let log_nq = nq.max(2.0).ln();
    let k = (FRAMEWORK_K_COEFF * log_nq).ceil().max(1.0) as usize;
    let r_formula =
        (FRAMEWORK_R_COEFF * (query_budget as f64).sqrt() * log_nq * log_nq).ceil() as usize;
    // Amplification needs k <= r/2; 6k keeps the per-query epsilon below 1.
    let r = r_formula.max(6 * k);
    let per_query = subsampling_amplification(EPS_MED, 0.0, k, r)?;
    let delta_prime = (-2.0 * log_nq).exp();
    let transcript = advanced_composition(query_budget, per_query.epsilon, per_query.delta, delta_prime)?;
    Ok(FrameworkParams {
        r,
        k,
        eps_med: EPS_MED,
        query_budget,
        transcript,
    })
}
