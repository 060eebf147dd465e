//! Adaptive distance estimation.
//!
//! Two constructions: a per-point estimator that stores projections of every
//! point under `r` independent JL maps and answers one (point, query)
//! distance per budget unit, and an all-points estimator built on stacked
//! Hadamard blocks that releases the distances to every stored point while
//! consuming a single budget unit per query: each point owns its private
//! index-set families, so one query touches each family once.

use rand::Rng;

use crate::constants::{
    ADE_FJL_R_COEFF, ADE_SRHT_K_COEFF, ADE_SRHT_L_COEFF, ADE_SRHT_M_COEFF, ADE_SRHT_R_COEFF,
    EPS_MED, FRAMEWORK_K_COEFF, SQRT_PI_OVER_2,
};
use crate::dp::{
    advanced_composition, private_median, subsampling_amplification, FrameworkParams, OutputGrid,
    PrivacyParams,
};
use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{l2_norm, sub_norm};
use crate::rng::SeedRng;
use crate::transforms::{
    psi_r, ret_norm, FastJlMap, GaussianJlMap, JlMap, SrhtStack, TruncationParams,
};

/// A distance query: the point `y` and, for the per-point variant, the index
/// of the stored point to compare against.
#[derive(Clone, Debug)]
pub struct DistanceQuery {
    pub y: Vec<f64>,
    pub target: usize,
}

fn validate_points(points: &[Vec<f64>]) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::EmptyInput("point set"));
    }
    let d = points[0].len();
    if d == 0 {
        return Err(Error::EmptyInput("point dimension"));
    }
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
        ensure_finite(p, "dataset point")?;
    }
    Ok(d)
}

fn max_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut diam: f64 = 0.0;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            diam = diam.max(sub_norm(&points[i], &points[j]));
        }
    }
    diam
}

/// Default distance grid: floor surrogate `1e-6` (scaled by the data),
/// ceiling twice the diameter.
pub fn distance_grid(points: &[Vec<f64>], eps: f64) -> Result<OutputGrid> {
    let diam = max_pairwise_distance(points);
    let lo = 1e-6 * diam.max(1.0);
    let hi = (2.0 * diam).max(1.0);
    OutputGrid::new(lo, hi, 1.0 + eps / 5.0)
}

fn subsample_count(n: usize, query_budget: usize) -> usize {
    let nq = (n as f64) * (query_budget as f64);
    (FRAMEWORK_K_COEFF * nq.max(2.0).ln()).ceil().max(1.0) as usize
}

/// Per-point estimator: `r` JL maps, all `n * r` projections stored at build
/// time; a query re-projects only the query point under `k` sampled maps.
pub struct AdeFastJl {
    points: Vec<Vec<f64>>,
    maps: Vec<JlMap>,
    projections: Vec<Vec<Vec<f64>>>,
    params: FrameworkParams,
    grid: OutputGrid,
    queries_used: usize,
    build_applications: usize,
    query_applications: usize,
    rng: SeedRng,
}

impl AdeFastJl {
    /// Builds with fast (Hadamard) maps; see [`AdeFastJl::build_gaussian`]
    /// for the dense variant.
    pub fn build(points: Vec<Vec<f64>>, query_budget: usize, eps: f64, seed: u64) -> Result<Self> {
        Self::build_inner(points, query_budget, eps, seed, false, None)
    }

    pub fn build_gaussian(
        points: Vec<Vec<f64>>,
        query_budget: usize,
        eps: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::build_inner(points, query_budget, eps, seed, true, None)
    }

    /// Grid override for callers whose value scale is not the dataset
    /// diameter (a single-point set, for instance).
    pub fn build_with_grid(
        points: Vec<Vec<f64>>,
        query_budget: usize,
        eps: f64,
        seed: u64,
        grid: OutputGrid,
    ) -> Result<Self> {
        Self::build_inner(points, query_budget, eps, seed, false, Some(grid))
    }

    fn build_inner(
        points: Vec<Vec<f64>>,
        query_budget: usize,
        eps: f64,
        seed: u64,
        gaussian: bool,
        grid: Option<OutputGrid>,
    ) -> Result<Self> {
        let d = validate_points(&points)?;
        if query_budget == 0 {
            return Err(Error::invalid("query budget must be positive"));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid("eps must lie in (0, 1)"));
        }
        let n = points.len();
        let nq = (n as f64) * (query_budget as f64);
        let log_nq = nq.max(2.0).ln();
        let r = (ADE_FJL_R_COEFF * (query_budget as f64).sqrt() * log_nq * log_nq)
            .ceil()
            .max(1.0) as usize;
        let k = subsample_count(n, query_budget).min(r.max(1));
        let m = (crate::constants::JL_ROWS_COEFF / (eps * eps)).ceil() as usize;

        let root = SeedRng::new(seed);
        let mut build_rng = root.substream(0);
        let maps: Vec<JlMap> = (0..r)
            .map(|_| {
                Ok(if gaussian {
                    JlMap::Gaussian(GaussianJlMap::new(m, d, &mut build_rng)?)
                } else {
                    JlMap::Fast(FastJlMap::new(m, d, &mut build_rng)?)
                })
            })
            .collect::<Result<_>>()?;

        let mut build_applications = 0;
        let mut projections = Vec::with_capacity(n);
        for p in &points {
            let mut per_map = Vec::with_capacity(r);
            for map in &maps {
                per_map.push(map.apply(p)?);
                build_applications += 1;
            }
            projections.push(per_map);
        }

        let grid = match grid {
            Some(g) => g,
            None => distance_grid(&points, eps)?,
        };
        // Budget report for the chosen (r, k); desk-scale replica counts are
        // below what a unit transcript budget would demand, so this is
        // informational.
        let per_query = if 2 * k <= r {
            subsampling_amplification(EPS_MED, 0.0, k, r)?
        } else {
            PrivacyParams {
                epsilon: EPS_MED,
                delta: 0.0,
            }
        };
        let transcript = advanced_composition(
            query_budget,
            per_query.epsilon.min(1.0),
            per_query.delta,
            (-2.0 * log_nq).exp(),
        )?;
        let params = FrameworkParams {
            r,
            k,
            eps_med: EPS_MED,
            query_budget,
            transcript,
        };
        Ok(Self {
            points,
            maps,
            projections,
            params,
            grid,
            queries_used: 0,
            build_applications,
            query_applications: 0,
            rng: root.substream(1),
        })
    }

    pub fn params(&self) -> &FrameworkParams {
        &self.params
    }

    pub fn grid(&self) -> &OutputGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn queries_used(&self) -> usize {
        self.queries_used
    }

    /// Stored projection footprint: `r * n * m` reals.
    pub fn stored_projection_reals(&self) -> usize {
        self.projections
            .iter()
            .map(|per_map| per_map.iter().map(Vec::len).sum::<usize>())
            .sum()
    }

    /// Words held by the transform states themselves.
    pub fn map_state_words(&self) -> usize {
        self.maps
            .iter()
            .map(|m| match m {
                JlMap::Gaussian(g) => g.target_dim() * g.source_dim(),
                JlMap::Fast(f) => {
                    crate::transforms::next_power_of_two(f.source_dim()) + f.target_dim()
                }
            })
            .sum()
    }

    /// Transform applications consumed so far (build, query).
    pub fn application_counts(&self) -> (usize, usize) {
        (self.build_applications, self.query_applications)
    }

    /// Answers `|| x_target - y ||` by the private median over `k` sampled
    /// maps; stored projections are reused, only the query point is
    /// projected afresh.
    pub fn query(&mut self, q: &DistanceQuery) -> Result<f64> {
        if self.queries_used >= self.params.query_budget {
            return Err(Error::BudgetExhausted {
                budget: self.params.query_budget,
            });
        }
        if q.target >= self.points.len() {
            return Err(Error::invalid(format!(
                "point index {} out of range (n = {})",
                q.target,
                self.points.len()
            )));
        }
        let r = self.maps.len();
        let mut answers = Vec::with_capacity(self.params.k);
        for _ in 0..self.params.k {
            let j = self.rng.gen_range(0..r);
            let proj_y = self.maps[j].apply(&q.y)?;
            self.query_applications += 1;
            answers.push(sub_norm(&self.projections[q.target][j], &proj_y));
        }
        let out = private_median(&answers, &self.grid, self.params.eps_med, &mut self.rng)?;
        self.queries_used += 1;
        Ok(out)
    }
}

/// Sizing of the all-points estimator.
#[derive(Clone, Copy, Debug)]
pub struct AdeSrhtDims {
    /// Hadamard blocks.
    pub blocks: usize,
    /// Index-set families per point.
    pub families: usize,
    /// Coordinates per index set.
    pub coords_per_set: usize,
    /// Families sampled per (point, query).
    pub draws_per_query: usize,
}

fn ade_srht_dims(n: usize, d: usize, query_budget: usize, eps: f64) -> AdeSrhtDims {
    let nd = ((n * d).max(2)) as f64;
    let blocks = (ADE_SRHT_M_COEFF * (2.0 * (d as f64) * (n as f64) / eps).max(2.0).ln()
        / (eps * eps))
        .ceil()
        .max(1.0) as usize;
    let families = (ADE_SRHT_R_COEFF * (query_budget as f64).sqrt() * nd.ln().powi(3))
        .ceil()
        .max(1.0) as usize;
    let coords_per_set = (ADE_SRHT_K_COEFF * (2.0 / eps).ln() * (2.0 * nd).ln() / (eps * eps))
        .ceil()
        .max(1.0) as usize;
    let draws_per_query = (ADE_SRHT_L_COEFF * nd.ln()).ceil().max(1.0) as usize;
    AdeSrhtDims {
        blocks,
        families,
        coords_per_set,
        draws_per_query,
    }
}

/// All-points estimator: one SRHT shared by everyone, per-point index-set
/// families drawn once at build, only the indexed coordinates of each
/// transformed point retained.
pub struct AdeSrht {
    srht: SrhtStack,
    dims: AdeSrhtDims,
    index_sets: Vec<Vec<Vec<u32>>>,
    stored_coords: Vec<Vec<Vec<f64>>>,
    trunc: TruncationParams,
    grid: OutputGrid,
    n: usize,
    d: usize,
    query_budget: usize,
    queries_used: usize,
    rng: SeedRng,
}

impl AdeSrht {
    pub fn build(points: Vec<Vec<f64>>, query_budget: usize, eps: f64, seed: u64) -> Result<Self> {
        let grid = distance_grid(&points, eps)?;
        Self::build_with_grid(points, query_budget, eps, seed, grid)
    }

    pub fn build_with_grid(
        points: Vec<Vec<f64>>,
        query_budget: usize,
        eps: f64,
        seed: u64,
        grid: OutputGrid,
    ) -> Result<Self> {
        let d = validate_points(&points)?;
        if query_budget == 0 {
            return Err(Error::invalid("query budget must be positive"));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid("eps must lie in (0, 1)"));
        }
        if query_budget > d {
            log::warn!(
                "query budget {query_budget} exceeds the dimension {d}; accuracy degrades beyond it"
            );
        }
        let n = points.len();
        let dims = ade_srht_dims(n, d, query_budget, eps);
        let trunc = TruncationParams::for_eps(eps)?;

        let root = SeedRng::new(seed);
        // One re-seed is allowed when the build-time calibration check fails.
        for attempt in 0..2 {
            let mut build_rng = root.substream(attempt);
            let srht = SrhtStack::new(dims.blocks, d, &mut build_rng)?;
            if !Self::well_conditioned(&srht, d, eps, &trunc, &mut build_rng) {
                if attempt == 0 {
                    log::warn!("SRHT calibration check failed; drawing a fresh transform");
                    continue;
                }
                return Err(Error::DegenerateInput(
                    "SRHT failed the norm-calibration check twice".into(),
                ));
            }

            let total = srht.output_dim() as u32;
            let mut index_sets = Vec::with_capacity(n);
            let mut stored_coords = Vec::with_capacity(n);
            for p in &points {
                let raw = srht.apply_raw(p)?;
                let mut sets = Vec::with_capacity(dims.families);
                let mut coords = Vec::with_capacity(dims.families);
                for _ in 0..dims.families {
                    let set: Vec<u32> = (0..dims.coords_per_set)
                        .map(|_| build_rng.gen_range(0..total))
                        .collect();
                    let vals: Vec<f64> = set.iter().map(|&ix| raw[ix as usize]).collect();
                    sets.push(set);
                    coords.push(vals);
                }
                index_sets.push(sets);
                stored_coords.push(coords);
            }
            return Ok(Self {
                srht,
                dims,
                index_sets,
                stored_coords,
                trunc,
                grid,
                n,
                d,
                query_budget,
                queries_used: 0,
                rng: root.substream(100 + attempt),
            });
        }
        unreachable!("the retry loop returns or errors");
    }

    /// Build-time check of the truncated-mean calibration on random unit
    /// directions: the full-transform estimate must sit within `eps/2` of 1.
    fn well_conditioned(
        srht: &SrhtStack,
        d: usize,
        eps: f64,
        trunc: &TruncationParams,
        rng: &mut SeedRng,
    ) -> bool {
        use rand_distr::StandardNormal;
        for _ in 0..200 {
            let mut z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = l2_norm(&z);
            if norm == 0.0 {
                continue;
            }
            z.iter_mut().for_each(|v| *v /= norm);
            let raw = match srht.apply_raw(&z) {
                Ok(r) => r,
                Err(_) => return false,
            };
            let mean = raw.iter().map(|&c| psi_r(c, trunc.r_trunc)).sum::<f64>()
                / raw.len() as f64;
            let est = SQRT_PI_OVER_2 * mean;
            if (est - 1.0).abs() > eps / 2.0 {
                return false;
            }
        }
        true
    }

    pub fn dims(&self) -> AdeSrhtDims {
        self.dims
    }

    pub fn grid(&self) -> &OutputGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn queries_used(&self) -> usize {
        self.queries_used
    }

    pub fn query_budget(&self) -> usize {
        self.query_budget
    }

    /// Retained point coordinates: exactly `n * r * k` reals.
    pub fn stored_reals(&self) -> usize {
        self.stored_coords
            .iter()
            .map(|sets| sets.iter().map(Vec::len).sum::<usize>())
            .sum()
    }

    /// Diagonal state of the shared transform.
    pub fn diagonal_reals(&self) -> usize {
        self.srht.stored_reals()
    }

    /// Distances from `q` to every stored point; one budget unit total.
    pub fn query(&mut self, q: &[f64]) -> Result<Vec<f64>> {
        if self.queries_used >= self.query_budget {
            return Err(Error::BudgetExhausted {
                budget: self.query_budget,
            });
        }
        if q.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: q.len(),
            });
        }
        let v = self.srht.apply_raw(q)?;
        let mut out = Vec::with_capacity(self.n);
        let mut estimates = Vec::with_capacity(self.dims.draws_per_query);
        let mut coords = Vec::with_capacity(self.dims.coords_per_set);
        for i in 0..self.n {
            estimates.clear();
            for _ in 0..self.dims.draws_per_query {
                let t = self.rng.gen_range(0..self.dims.families);
                coords.clear();
                let set = &self.index_sets[i][t];
                let stored = &self.stored_coords[i][t];
                for (j, &ix) in set.iter().enumerate() {
                    coords.push(v[ix as usize] - stored[j]);
                }
                estimates.push(ret_norm(&coords, &self.trunc)?);
            }
            out.push(private_median(
                &estimates,
                &self.grid,
                EPS_MED,
                &mut self.rng,
            )?);
        }
        self.queries_used += 1;
        Ok(out)
    }
}

/// Exact distances, the reference oracle.
pub fn exact_distances(points: &[Vec<f64>], q: &[f64]) -> Result<Vec<f64>> {
    let d = validate_points(points)?;
    if q.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: q.len(),
        });
    }
    Ok(points.iter().map(|p| sub_norm(p, q)).collect())
}
