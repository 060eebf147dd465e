//! Leverage scores, the binary-tree repeated sampler, and weighted
//! row-sampling (subspace-embedding) matrices.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;

use crate::constants::LEVERAGE_SAMPLING_C;
use crate::error::{Error, Result};
use crate::linalg::thin_svd;
use crate::rng::SeedRng;

/// Per-row leverage score overestimates. The exact-computation path returns
/// the scores themselves, so the overestimate holds with equality.
#[derive(Clone, Debug)]
pub struct LeverageScores {
    tau: Vec<f64>,
}

impl LeverageScores {
    pub fn from_values(tau: Vec<f64>) -> Result<Self> {
        if tau.is_empty() {
            return Err(Error::EmptyInput("leverage scores"));
        }
        if tau.iter().any(|&t| !t.is_finite() || t < 0.0) {
            return Err(Error::invalid("leverage scores must be finite and nonnegative"));
        }
        Ok(Self { tau })
    }

    pub fn values(&self) -> &[f64] {
        &self.tau
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.tau.iter().sum()
    }
}

/// Exact row leverage scores via a thin orthogonal factorization:
/// `tau_i` is the squared norm of row `i` of the orthonormal column-basis
/// factor, restricted to the numerical rank.
pub fn compute_leverage_scores(a: &DMatrix<f64>) -> Result<LeverageScores> {
    let svd = thin_svd(a)?;
    if svd.rank == 0 {
        return Err(Error::DegenerateInput("all-zero matrix".into()));
    }
    let tau = (0..a.nrows())
        .map(|i| (0..svd.rank).map(|j| svd.u[(i, j)].powi(2)).sum())
        .collect();
    LeverageScores::from_values(tau)
}

/// Complete-binary-tree sampler over nonnegative leaf weights; one draw costs
/// `O(log n)`.
#[derive(Clone, Debug)]
pub struct SamplerTree {
    leaves: usize,
    capacity: usize,
    nodes: Vec<f64>,
}

impl SamplerTree {
    pub fn build(scores: &LeverageScores) -> Result<Self> {
        let weights = scores.values();
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::DegenerateInput("all-zero sampling weights".into()));
        }
        let leaves = weights.len();
        let capacity = leaves.next_power_of_two();
        let mut nodes = vec![0.0; 2 * capacity];
        nodes[capacity..capacity + leaves].copy_from_slice(weights);
        for i in (1..capacity).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Ok(Self {
            leaves,
            capacity,
            nodes,
        })
    }

    /// Total weight stored at the root.
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn len(&self) -> usize {
        self.leaves
    }

    pub fn is_empty(&self) -> bool {
        self.leaves == 0
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.nodes[self.capacity + index]
    }

    /// One weighted draw.
    pub fn sample(&self, rng: &mut SeedRng) -> usize {
        let mut u: f64 = rng.gen::<f64>() * self.total();
        let mut node = 1;
        while node < self.capacity {
            let left = self.nodes[2 * node];
            if u < left {
                node *= 2;
            } else {
                u -= left;
                node = 2 * node + 1;
            }
        }
        (node - self.capacity).min(self.leaves - 1)
    }
}

/// A weighted row sample: `S A` keeps the listed rows of `A`, each rescaled
/// by `1/sqrt(p_i)`.
#[derive(Clone, Debug)]
pub struct RowSamplingMatrix {
    source_rows: usize,
    row_indices: Vec<usize>,
    scales: Vec<f64>,
    probs: Vec<f64>,
}

impl RowSamplingMatrix {
    pub fn source_rows(&self) -> usize {
        self.source_rows
    }

    pub fn sampled_rows(&self) -> usize {
        self.row_indices.len()
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.row_indices
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `S A`.
    pub fn apply_matrix(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.nrows() != self.source_rows {
            return Err(Error::DimensionMismatch {
                expected: self.source_rows,
                got: a.nrows(),
            });
        }
        let mut out = DMatrix::zeros(self.sampled_rows(), a.ncols());
        for (j, (&i, &s)) in self.row_indices.iter().zip(&self.scales).enumerate() {
            for c in 0..a.ncols() {
                out[(j, c)] = a[(i, c)] * s;
            }
        }
        Ok(out)
    }

    /// `S b`.
    pub fn apply_vector(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.source_rows {
            return Err(Error::DimensionMismatch {
                expected: self.source_rows,
                got: b.len(),
            });
        }
        Ok(self
            .row_indices
            .iter()
            .zip(&self.scales)
            .map(|(&i, &s)| b[i] * s)
            .collect())
    }

    /// Original row index -> positions in the sampled list.
    pub fn position_map(&self) -> HashMap<usize, Vec<usize>> {
        let mut map: HashMap<usize, Vec<usize>> = HashMap::new();
        for (pos, &row) in self.row_indices.iter().enumerate() {
            map.entry(row).or_default().push(pos);
        }
        map
    }
}

/// Independent Bernoulli row inclusion at `p_i = min(1, eps^-2 c tau_i ln d)`.
pub fn sampling_matrix_from_scores(
    scores: &LeverageScores,
    cols: usize,
    eps: f64,
    rng: &mut SeedRng,
) -> Result<RowSamplingMatrix> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("sampling eps must lie in (0, 1)"));
    }
    let n = scores.len();
    let rate = LEVERAGE_SAMPLING_C * (cols.max(2) as f64).ln() / (eps * eps);
    let mut row_indices = Vec::new();
    let mut scales = Vec::new();
    let mut probs = Vec::new();
    for (i, &tau) in scores.values().iter().enumerate() {
        let p = (rate * tau).min(1.0);
        // Draw unconditionally so the consumed randomness does not depend on
        // the scores themselves.
        let u: f64 = rng.gen();
        if p > 0.0 && u < p {
            row_indices.push(i);
            scales.push(1.0 / p.sqrt());
            probs.push(p);
        }
    }
    if row_indices.is_empty() {
        return Err(Error::DegenerateInput(
            "row sampling produced an empty matrix".into(),
        ));
    }
    Ok(RowSamplingMatrix {
        source_rows: n,
        row_indices,
        scales,
        probs,
    })
}

/// Bernoulli leverage-score sampling matrix for `A` at accuracy `eps`.
pub fn sampling_matrix(a: &DMatrix<f64>, eps: f64, seed: u64) -> Result<RowSamplingMatrix> {
    let scores = compute_leverage_scores(a)?;
    sampling_matrix_from_scores(&scores, a.ncols(), eps, &mut SeedRng::new(seed))
}

/// Fixed-size with-replacement draw through the tree sampler; `m` rows with
/// `scale_j = 1/sqrt(m q_j)` where `q_j` is the normalized weight.
pub fn fixed_size_sampling_matrix(
    scores: &LeverageScores,
    m: usize,
    rng: &mut SeedRng,
) -> Result<RowSamplingMatrix> {
    if m == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let tree = SamplerTree::build(scores)?;
    let total = tree.total();
    let mut row_indices = Vec::with_capacity(m);
    let mut scales = Vec::with_capacity(m);
    let mut probs = Vec::with_capacity(m);
    for _ in 0..m {
        let i = tree.sample(rng);
        let q = tree.weight(i) / total;
        row_indices.push(i);
        scales.push(1.0 / (m as f64 * q).sqrt());
        probs.push(q);
    }
    Ok(RowSamplingMatrix {
        source_rows: scores.len(),
        row_indices,
        scales,
        probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand_distr::StandardNormal;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = SeedRng::new(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn identity_scores_are_one() {
        let scores = compute_leverage_scores(&DMatrix::identity(6, 6)).unwrap();
        for &t in scores.values() {
            assert!((t - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_column_scores() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let scores = compute_leverage_scores(&a).unwrap();
        assert!((scores.values()[0] - 0.5).abs() < 1e-12);
        assert!((scores.values()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scores_sum_to_rank_and_match_hat_matrix() {
        let a = random_matrix(50, 5, 3);
        let scores = compute_leverage_scores(&a).unwrap();
        assert!((scores.sum() - 5.0).abs() < 1e-9);

        // Independent oracle: tau_i = a_i^T (A^T A)^+ a_i.
        let gram_pinv = (a.transpose() * &a).pseudo_inverse(1e-12).unwrap();
        for i in 0..a.nrows() {
            let row: DVector<f64> = a.row(i).transpose();
            let oracle = (row.transpose() * &gram_pinv * &row)[(0, 0)];
            assert!((scores.values()[i] - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn all_zero_matrix_rejected() {
        let a = DMatrix::zeros(4, 3);
        assert!(matches!(
            compute_leverage_scores(&a),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn sampler_degenerate_weight() {
        let scores = LeverageScores::from_values(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let tree = SamplerTree::build(&scores).unwrap();
        let mut rng = SeedRng::new(0);
        for _ in 0..100 {
            assert_eq!(tree.sample(&mut rng), 0);
        }
    }

    #[test]
    fn sampler_uniform_frequencies() {
        let scores = LeverageScores::from_values(vec![1.0, 1.0]).unwrap();
        let tree = SamplerTree::build(&scores).unwrap();
        let mut rng = SeedRng::new(5);
        let draws = 100_000;
        let zeros = (0..draws).filter(|_| tree.sample(&mut rng) == 0).count();
        let freq = zeros as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn sampler_proportional_frequencies() {
        let scores = LeverageScores::from_values(vec![1.0, 2.0, 3.0]).unwrap();
        let tree = SamplerTree::build(&scores).unwrap();
        let mut rng = SeedRng::new(6);
        let draws = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            counts[tree.sample(&mut rng)] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let expect = (i + 1) as f64 / 6.0;
            let freq = c as f64 / draws as f64;
            assert!((freq - expect).abs() < 0.02, "index {i}: {freq} vs {expect}");
        }
    }

    #[test]
    fn all_zero_scores_rejected() {
        let scores = LeverageScores::from_values(vec![0.0, 0.0]).unwrap();
        assert!(SamplerTree::build(&scores).is_err());
    }

    #[test]
    fn tiny_eps_keeps_every_row_unscaled() {
        let a = random_matrix(30, 3, 9);
        let s = sampling_matrix(&a, 0.05, 1).unwrap();
        assert_eq!(s.sampled_rows(), 30);
        assert!(s.scales().iter().all(|&v| v == 1.0));
        assert!(s.probs().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn identity_rows_share_probability() {
        let a = DMatrix::identity(16, 16);
        let scores = compute_leverage_scores(&a).unwrap();
        let mut rng = SeedRng::new(2);
        let s = sampling_matrix_from_scores(&scores, 16, 0.9, &mut rng).unwrap();
        let p0 = s.probs()[0];
        assert!(s.probs().iter().all(|&p| (p - p0).abs() < 1e-12));
    }

    #[test]
    fn inclusion_weighting_is_unbiased_per_row() {
        // p_i * (1/sqrt(p_i))^2 == 1 for every sampled row.
        let a = random_matrix(200, 8, 11);
        let s = sampling_matrix(&a, 0.6, 3).unwrap();
        for (&p, &scale) in s.probs().iter().zip(s.scales()) {
            assert!((p * scale * scale - 1.0).abs() < 1e-12);
            assert!(p > 0.0 && p <= 1.0);
            assert!(scale >= 1.0);
        }
    }

    #[test]
    fn sampling_matrix_deterministic_per_seed() {
        let a = random_matrix(100, 6, 17);
        let s1 = sampling_matrix(&a, 0.5, 21).unwrap();
        let s2 = sampling_matrix(&a, 0.5, 21).unwrap();
        assert_eq!(s1.row_indices(), s2.row_indices());
        assert_eq!(s1.scales(), s2.scales());
    }

    #[test]
    fn subspace_embedding_monte_carlo_small() {
        // Reduced-size version of the embedding check; the acceptance suite
        // runs the full one.
        let a = random_matrix(500, 10, 23);
        let mut seeds_ok = 0;
        for seed in 0..10 {
            let s = sampling_matrix(&a, 0.5, 100 + seed).unwrap();
            let sa = s.apply_matrix(&a).unwrap();
            let mut rng = SeedRng::new(500 + seed);
            let mut worst: f64 = 0.0;
            for _ in 0..50 {
                let x = DVector::from_fn(10, |_, _| rng.sample(StandardNormal));
                let num = (&sa * &x).norm_squared();
                let den = (&a * &x).norm_squared();
                worst = worst.max((num / den - 1.0).abs());
            }
            if worst <= 0.5 {
                seeds_ok += 1;
            }
        }
        assert!(seeds_ok >= 9, "{seeds_ok}/10 seeds passed");
    }

    #[test]
    fn fixed_size_sampler_scales() {
        let scores = LeverageScores::from_values(vec![0.5, 0.25, 0.25]).unwrap();
        let mut rng = SeedRng::new(4);
        let s = fixed_size_sampling_matrix(&scores, 64, &mut rng).unwrap();
        assert_eq!(s.sampled_rows(), 64);
        for (&i, &scale) in s.row_indices().iter().zip(s.scales()) {
            let q = scores.values()[i] / scores.sum();
            assert!((scale - 1.0 / (64.0 * q).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn condition_number_stability() {
        use crate::linalg::condition_number;
        let a = random_matrix(400, 8, 31);
        let kappa = condition_number(&a).unwrap();
        let eps = 0.3;
        let mut ok = 0;
        for seed in 0..20 {
            let s = sampling_matrix(&a, eps, 900 + seed).unwrap();
            let sa = s.apply_matrix(&a).unwrap();
            let ks = condition_number(&sa).unwrap();
            if (ks / kappa - 1.0).abs() <= 2.0 * eps {
                ok += 1;
            }
        }
        assert!(ok >= 18, "{ok}/20 within the condition-number band");
    }
}
