//! Adaptive adversaries and head-to-head experiments.
//!
//! The norm adversary accumulates Gaussian directions whose signs are chosen
//! against the attacked map's internal randomness, so its queries grow
//! increasingly correlated with that one map while staying unit norm. The
//! other adversaries chase whatever input produced the largest observed error
//! of the structure under attack. Every estimator answers the same query
//! stream, so robust and unprotected variants are compared on equal footing.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::constants::EPS_MED;
use crate::distance::AdeSrht;
use crate::dp::{FrameworkParams, OutputGrid, PrivacyParams};
use crate::error::Result;
use crate::framework::{QueryDataStructure, RobustWrapper};
use crate::kde::{kde_exact, robust_kde_build, Kernel};
use crate::leverage::compute_leverage_scores;
use crate::linalg::l2_norm;
use crate::regression::{exact_cost_oracle, RegressionSketch, RobustRegression, SparseUpdate};
use crate::rng::SeedRng;
use crate::transforms::{ret_norm, FastJlMap, GaussianJlMap, SrhtStack, TruncationParams};

/// Which game the harness plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Norm,
    Regression,
    Distance,
    Kde,
}

/// Dimensions and replica parameters of an attack run.
#[derive(Clone, Copy, Debug)]
pub struct AttackConfig {
    pub dim: usize,
    pub sketch_rows: usize,
    pub replicas: usize,
    pub subsample: usize,
    pub num_queries: usize,
    pub seed: u64,
    pub scenario: Scenario,
}

impl AttackConfig {
    /// Desk-scale defaults; finishes in seconds.
    pub fn desk(scenario: Scenario, seed: u64) -> Self {
        Self {
            dim: 1024,
            sketch_rows: 128,
            replicas: 64,
            subsample: 5,
            num_queries: 2000,
            seed,
            scenario,
        }
    }

    /// The reference configuration of the original experiment.
    pub fn full(scenario: Scenario, seed: u64) -> Self {
        Self {
            dim: 4096,
            sketch_rows: 250,
            replicas: 200,
            subsample: 5,
            num_queries: 5000,
            seed,
            scenario,
        }
    }
}

/// Anything that can be placed in the head-to-head lineup.
pub trait EstimatorUnderTest {
    fn label(&self) -> &str;
    fn answer(&mut self, query: &[f64]) -> Result<f64>;
}

/// One round of the experiment: the exact value and every estimator's answer.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    pub truth: f64,
    pub estimates: Vec<f64>,
}

/// The sign-accumulation adversary. Each round draws a fresh Gaussian
/// direction, orients it against the attacked transform (the side on which
/// the transform sees a positive correlation with `e_1` gets flipped), adds
/// it to a running sum, and emits the normalized sum.
pub struct NormAttackStream<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    apply: F,
    sum: Vec<f64>,
    dim: usize,
    rng: SeedRng,
}

/// Builds the query stream against the map realized by `apply`.
pub fn generate_norm_attack<F>(dim: usize, apply: F, rng: SeedRng) -> NormAttackStream<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    NormAttackStream {
        apply,
        sum: vec![0.0; dim],
        dim,
        rng,
    }
}

impl<F> NormAttackStream<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    /// Running unnormalized sum (exposed for the sign-analysis checks).
    pub fn running_sum(&self) -> &[f64] {
        &self.sum
    }

    pub fn next_query(&mut self) -> Result<Vec<f64>> {
        let z: Vec<f64> = (0..self.dim)
            .map(|_| self.rng.sample(StandardNormal))
            .collect();
        let mut minus = z.clone();
        minus[0] -= 1.0;
        let mut plus = z.clone();
        plus[0] += 1.0;
        let norm_minus = l2_norm(&(self.apply)(&minus)?);
        let norm_plus = l2_norm(&(self.apply)(&plus)?);
        let sign = if norm_minus <= norm_plus { -1.0 } else { 1.0 };
        for (s, v) in self.sum.iter_mut().zip(&z) {
            *s += sign * v;
        }
        let norm = l2_norm(&self.sum);
        if norm == 0.0 {
            return self.next_query();
        }
        Ok(self.sum.iter().map(|v| v / norm).collect())
    }
}

/// The attacked map itself, reporting `||Pi q||` as its norm estimate.
pub struct NaiveJlEstimator {
    map: GaussianJlMap,
}

impl NaiveJlEstimator {
    pub fn new(map: GaussianJlMap) -> Self {
        Self { map }
    }

    pub fn map(&self) -> &GaussianJlMap {
        &self.map
    }
}

impl EstimatorUnderTest for NaiveJlEstimator {
    fn label(&self) -> &str {
        "naive"
    }

    fn answer(&mut self, query: &[f64]) -> Result<f64> {
        Ok(l2_norm(&self.map.apply(query)?))
    }
}

/// A single fast-JL replica inside the robust wrapper.
pub struct JlNormReplica(FastJlMap);

impl QueryDataStructure for JlNormReplica {
    type Query = Vec<f64>;

    fn answer(&self, query: &Vec<f64>) -> Result<f64> {
        Ok(l2_norm(&self.0.apply(query)?))
    }
}

/// Replica-wrapped norm estimator at the experiment's `(r, k)`.
pub struct RobustNormEstimator {
    wrapper: RobustWrapper<JlNormReplica>,
}

impl RobustNormEstimator {
    pub fn build(config: &AttackConfig, seed: u64) -> Result<Self> {
        let query_budget = config.num_queries.max(1);
        // Informational budget for the pinned (r, k): amplification when the
        // subsample is small enough, the raw per-call epsilon otherwise.
        let per_query = if 2 * config.subsample <= config.replicas {
            crate::dp::subsampling_amplification(EPS_MED, 0.0, config.subsample, config.replicas)?
        } else {
            PrivacyParams {
                epsilon: EPS_MED,
                delta: 0.0,
            }
        };
        let transcript = crate::dp::advanced_composition(
            query_budget,
            per_query.epsilon.min(1.0),
            per_query.delta,
            (query_budget.max(2) as f64).powi(-2),
        )?;
        let params = FrameworkParams {
            r: config.replicas,
            k: config.subsample,
            eps_med: EPS_MED,
            query_budget,
            transcript,
        };
        let grid = OutputGrid::new(0.05, 4.0, 1.02)?;
        let rows = config.sketch_rows;
        let dim = config.dim;
        let wrapper = RobustWrapper::build_with_params(
            move |mut rng| Ok(JlNormReplica(FastJlMap::new(rows, dim, &mut rng)?)),
            params,
            grid,
            seed,
        )?;
        Ok(Self { wrapper })
    }
}

impl EstimatorUnderTest for RobustNormEstimator {
    fn label(&self) -> &str {
        "robust"
    }

    fn answer(&mut self, query: &[f64]) -> Result<f64> {
        self.wrapper.query(&query.to_vec())
    }
}

/// Simplified reconstruction of the replicated-JL baseline: plain median of
/// `k` subsampled maps, no privacy.
pub struct Baseline1 {
    maps: Vec<GaussianJlMap>,
    subsample: usize,
    rng: SeedRng,
}

impl Baseline1 {
    pub fn build(config: &AttackConfig, seed: u64) -> Result<Self> {
        let root = SeedRng::new(seed);
        let mut build_rng = root.substream(0);
        let maps = (0..config.replicas)
            .map(|_| GaussianJlMap::new(config.sketch_rows, config.dim, &mut build_rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            maps,
            subsample: config.subsample,
            rng: root.substream(1),
        })
    }
}

impl EstimatorUnderTest for Baseline1 {
    fn label(&self) -> &str {
        "baseline1"
    }

    fn answer(&mut self, query: &[f64]) -> Result<f64> {
        // A subsample as large as the pool degenerates to the plain median
        // over every map.
        let mut values = Vec::with_capacity(self.subsample);
        if self.subsample >= self.maps.len() {
            for map in &self.maps {
                values.push(l2_norm(&map.apply(query)?));
            }
        } else {
            for _ in 0..self.subsample {
                let j = self.rng.gen_range(0..self.maps.len());
                values.push(l2_norm(&self.maps[j].apply(query)?));
            }
        }
        crate::transforms::quantile(&values, 0.5)
    }
}

/// Simplified reconstruction of the Hadamard baseline: the query runs through
/// every block, `m * k` coordinates of the concatenated output are
/// subsampled, and the truncated-mean estimator reads off the norm.
pub struct Baseline2 {
    stack: SrhtStack,
    coords: usize,
    trunc: TruncationParams,
    rng: SeedRng,
}

impl Baseline2 {
    pub fn build(config: &AttackConfig, seed: u64) -> Result<Self> {
        let root = SeedRng::new(seed);
        let mut build_rng = root.substream(0);
        let stack = SrhtStack::new(config.replicas, config.dim, &mut build_rng)?;
        Ok(Self {
            stack,
            coords: config.sketch_rows * config.subsample,
            trunc: TruncationParams::for_eps(0.25)?,
            rng: root.substream(1),
        })
    }
}

impl EstimatorUnderTest for Baseline2 {
    fn label(&self) -> &str {
        "baseline2"
    }

    fn answer(&mut self, query: &[f64]) -> Result<f64> {
        let raw = self.stack.apply_raw(query)?;
        let sample: Vec<f64> = (0..self.coords)
            .map(|_| raw[self.rng.gen_range(0..raw.len())])
            .collect();
        ret_norm(&sample, &self.trunc)
    }
}

/// Exact-norm oracle, for degenerate harness tests.
pub struct ExactNormOracle;

impl EstimatorUnderTest for ExactNormOracle {
    fn label(&self) -> &str {
        "exact"
    }

    fn answer(&mut self, query: &[f64]) -> Result<f64> {
        Ok(l2_norm(query))
    }
}

/// Drives the norm game: the stream is coupled to `attacked_map` (the
/// white-box adversary reads that map's responses), every estimator answers
/// every query, truth is identically 1.
pub fn run_attack(
    config: &AttackConfig,
    attacked_map: &GaussianJlMap,
    estimators: &mut [Box<dyn EstimatorUnderTest + '_>],
) -> Result<Vec<IterationRecord>> {
    let mut stream = generate_norm_attack(
        config.dim,
        |v: &[f64]| attacked_map.apply(v),
        SeedRng::new(config.seed).substream(1000),
    );
    let mut records = Vec::with_capacity(config.num_queries);
    for iteration in 0..config.num_queries {
        let q = stream.next_query()?;
        let mut estimates = Vec::with_capacity(estimators.len());
        for est in estimators.iter_mut() {
            estimates.push(est.answer(&q)?);
        }
        records.push(IterationRecord {
            iteration,
            truth: 1.0,
            estimates,
        });
    }
    Ok(records)
}

/// The standard norm lineup plus its labels.
pub struct NormExperiment {
    pub labels: Vec<String>,
    pub records: Vec<IterationRecord>,
}

/// Builds naive, robust, and both baselines, runs the full game.
pub fn norm_experiment(config: &AttackConfig) -> Result<NormExperiment> {
    let root = SeedRng::new(config.seed);
    let naive_map = GaussianJlMap::new(
        config.sketch_rows,
        config.dim,
        &mut root.substream(0),
    )?;
    let attacked = naive_map.clone();
    let mut estimators: Vec<Box<dyn EstimatorUnderTest>> = vec![
        Box::new(NaiveJlEstimator::new(naive_map)),
        Box::new(RobustNormEstimator::build(config, config.seed.wrapping_add(1))?),
        Box::new(Baseline1::build(config, config.seed.wrapping_add(2))?),
        Box::new(Baseline2::build(config, config.seed.wrapping_add(3))?),
    ];
    let labels = estimators.iter().map(|e| e.label().to_string()).collect();
    let records = run_attack(config, &attacked, &mut estimators)?;
    Ok(NormExperiment { labels, records })
}

/// One round of the regression game.
#[derive(Clone, Copy, Debug)]
pub struct RegressionRound {
    pub round: usize,
    pub truth: f64,
    pub naive: f64,
    pub robust: f64,
}

/// Configuration of the regression attack.
#[derive(Clone, Copy, Debug)]
pub struct RegressionAttackConfig {
    pub rows: usize,
    pub cols: usize,
    pub sparsity: usize,
    pub eps: f64,
    pub rounds: usize,
    pub seed: u64,
}

impl Default for RegressionAttackConfig {
    fn default() -> Self {
        Self {
            rows: 200,
            cols: 20,
            sparsity: 5,
            eps: 0.25,
            rounds: 100,
            seed: crate::constants::DEFAULT_SEED,
        }
    }
}

/// Coordinate-probing adversary against the unprotected sketch.
///
/// The sketch's estimate is a fixed quadratic form of the label, so blowing
/// up a single coordinate `j` drives the estimate-to-truth ratio toward a
/// `j`-specific constant that the sketch gets wrong for some coordinates.
/// The adversary probes coordinates one at a time (set, observe, reset),
/// remembers the coordinate with the worst observed ratio, and finally
/// repeats the update that maximized past error. The robust runner and the
/// exact oracle are fed the identical stream.
pub fn regression_attack_experiment(
    config: &RegressionAttackConfig,
) -> Result<Vec<RegressionRound>> {
    use nalgebra::DMatrix;
    let mut rng = SeedRng::new(config.seed);
    let a = DMatrix::from_fn(config.rows, config.cols, |_, _| rng.sample(StandardNormal));
    let b1: Vec<f64> = (0..config.rows).map(|_| rng.sample(StandardNormal)).collect();

    let scores = compute_leverage_scores(&a)?;
    let mut naive = RegressionSketch::init(&a, &b1, config.eps, &scores, &mut rng.substream(1))?;
    let mut robust = RobustRegression::new(
        a.clone(),
        &b1,
        config.eps,
        config.sparsity,
        config.seed.wrapping_add(17),
    )?;

    let spike = 1000.0;
    let mut label = b1.clone();
    let mut coord_order: Vec<usize> = (0..config.rows).collect();
    // Seeded shuffle of the probe order.
    for i in (1..coord_order.len()).rev() {
        let j = rng.gen_range(0..=i);
        coord_order.swap(i, j);
    }

    let mut best: Option<(usize, f64)> = None;
    let mut records = Vec::with_capacity(config.rounds);
    let probe_rounds = config.rounds.saturating_sub(config.rounds / 5);
    let mut next_coord = 0;
    let mut pending_reset: Option<usize> = None;

    for round in 0..config.rounds {
        let upd = if round < probe_rounds {
            if let Some(j) = pending_reset.take() {
                SparseUpdate::new(vec![(j, b1[j])])?
            } else {
                let j = coord_order[next_coord % coord_order.len()];
                next_coord += 1;
                pending_reset = Some(j);
                SparseUpdate::new(vec![(j, spike)])?
            }
        } else {
            // Commit: repeat the most damaging probe.
            let j = best.map(|(j, _)| j).unwrap_or(0);
            SparseUpdate::new(vec![(j, spike)])?
        };

        for &(i, v) in upd.entries() {
            label[i] = v;
        }
        let naive_out = naive.update(&upd)?;
        let robust_out = robust.step(&upd)?;
        let truth = exact_cost_oracle(&a, &label)?;

        if truth > 0.0 {
            let dev = (naive_out / truth).ln().abs();
            // Score only the spike probes; resets revisit old states.
            if let Some(j) = pending_reset {
                if best.map(|(_, d)| dev > d).unwrap_or(true) {
                    best = Some((j, dev));
                }
            }
        }
        records.push(RegressionRound {
            round,
            truth,
            naive: naive_out,
            robust: robust_out,
        });
    }
    Ok(records)
}

/// One round of the all-points distance game.
#[derive(Clone, Debug)]
pub struct DistanceRound {
    pub round: usize,
    pub truths: Vec<f64>,
    pub robust: Vec<f64>,
    pub unprotected: f64,
    pub unprotected_truth: f64,
}

/// Unprotected single-transform norm estimator with one fixed coordinate
/// subset, the structure the distance chaser attacks.
pub struct FixedSubsetNorm {
    stack: SrhtStack,
    subset: Vec<usize>,
    trunc: TruncationParams,
}

impl FixedSubsetNorm {
    pub fn build(dim: usize, blocks: usize, coords: usize, eps: f64, seed: u64) -> Result<Self> {
        let mut rng = SeedRng::new(seed);
        let stack = SrhtStack::new(blocks, dim, &mut rng)?;
        let total = stack.output_dim();
        let subset = (0..coords).map(|_| rng.gen_range(0..total)).collect();
        Ok(Self {
            stack,
            subset,
            trunc: TruncationParams::for_eps(eps)?,
        })
    }

    pub fn estimate(&self, q: &[f64]) -> Result<f64> {
        let raw = self.stack.apply_raw(q)?;
        let coords: Vec<f64> = self.subset.iter().map(|&i| raw[i]).collect();
        ret_norm(&coords, &self.trunc)
    }
}

/// Distance game: the chaser accumulates directions on which the unprotected
/// estimator underestimates, exactly the sign-accumulation recipe, and both
/// structures answer the resulting stream.
pub struct DistanceAttackOutcome {
    pub rounds: Vec<DistanceRound>,
}

pub fn distance_attack_experiment(
    points: Vec<Vec<f64>>,
    query_budget: usize,
    eps: f64,
    seed: u64,
) -> Result<DistanceAttackOutcome> {
    let grid = crate::distance::distance_grid(&points, eps)?;
    distance_attack_experiment_with_grid(points, query_budget, eps, seed, grid)
}

/// Same game with an explicit value grid (needed when the dataset's own
/// scale is degenerate, e.g. a single point at the origin).
pub fn distance_attack_experiment_with_grid(
    points: Vec<Vec<f64>>,
    query_budget: usize,
    eps: f64,
    seed: u64,
    grid: OutputGrid,
) -> Result<DistanceAttackOutcome> {
    let d = points[0].len();
    let mut robust = AdeSrht::build_with_grid(points.clone(), query_budget, eps, seed, grid)?;
    let dims = robust.dims();
    let unprotected = FixedSubsetNorm::build(
        d,
        dims.blocks,
        dims.coords_per_set,
        eps,
        seed.wrapping_add(5),
    )?;

    let mut rng = SeedRng::new(seed.wrapping_add(9));
    let mut sum = vec![0.0; d];
    let mut rounds = Vec::with_capacity(query_budget);
    for round in 0..query_budget {
        // Orient a fresh direction against the unprotected estimator: probe
        // both sides of the running sum and keep whichever lowers its
        // estimate, steering the queries into the structure's blind spots.
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let normalize = |v: &[f64]| -> Vec<f64> {
            let n = l2_norm(v);
            v.iter().map(|x| x / n).collect()
        };
        let plus: Vec<f64> = sum.iter().zip(&z).map(|(s, v)| s + v).collect();
        let minus: Vec<f64> = sum.iter().zip(&z).map(|(s, v)| s - v).collect();
        let est_plus = unprotected.estimate(&normalize(&plus))?;
        let est_minus = unprotected.estimate(&normalize(&minus))?;
        sum = if est_plus <= est_minus { plus } else { minus };
        let q = normalize(&sum);

        let unprotected_est = unprotected.estimate(&q)?;
        let robust_out = robust.query(&q)?;
        let truths = crate::distance::exact_distances(&points, &q)?;
        rounds.push(DistanceRound {
            round,
            truths,
            robust: robust_out,
            unprotected: unprotected_est,
            unprotected_truth: 1.0,
        });
    }
    Ok(DistanceAttackOutcome { rounds })
}

/// One round of the density game.
#[derive(Clone, Debug)]
pub struct KdeRound {
    pub round: usize,
    pub truth: f64,
    pub robust: f64,
    pub promise_met: bool,
}

/// Error-chasing density adversary: re-query perturbations of whatever query
/// produced the largest relative error so far, interleaved with exploration.
pub fn kde_attack_experiment(
    points: &[Vec<f64>],
    query_budget: usize,
    eps: f64,
    tau: f64,
    kernel: Kernel,
    seed: u64,
) -> Result<Vec<KdeRound>> {
    let mut wrapper = robust_kde_build(points, query_budget, eps, tau, kernel, seed)?;
    let mut rng = SeedRng::new(seed.wrapping_add(3));
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut rounds = Vec::with_capacity(query_budget);
    for round in 0..query_budget {
        let q: Vec<f64> = match &best {
            Some((q_star, _)) if rng.gen::<bool>() => q_star
                .iter()
                .map(|v| v + 0.3 * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            _ => {
                let anchor = &points[rng.gen_range(0..points.len())];
                anchor
                    .iter()
                    .map(|v| v + 0.5 * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        };
        let out = wrapper.query(&q)?;
        let truth = kde_exact(points, &q, &kernel)?;
        let rel = if truth > 0.0 {
            (out - truth).abs() / truth
        } else {
            0.0
        };
        if best.as_ref().map(|(_, b)| rel > *b).unwrap_or(true) {
            best = Some((q.clone(), rel));
        }
        rounds.push(KdeRound {
            round,
            truth,
            robust: out,
            promise_met: truth >= tau,
        });
    }
    Ok(rounds)
}
