//! Dynamic maintenance of the least-squares cost under sparse label updates:
//! a sketched maintainer (leverage-score row sample + Gaussian cost sketch),
//! an exact SVD-based deterministic maintainer, and the epoch-rebuilding
//! robust runner that aggregates sketch replicas through the private median.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, DVectorView};


use crate::constants::{EPS_MED, REG_EPOCH_COEFF, REG_GAMMA_COEFF, REG_JL_ROWS_COEFF};
use crate::dp::{private_median, OutputGrid};
use crate::error::{ensure_finite, Error, Result};
use crate::leverage::{compute_leverage_scores, sampling_matrix_from_scores, LeverageScores, RowSamplingMatrix};
use crate::linalg::thin_svd;
use crate::rng::SeedRng;
use crate::transforms::GaussianJlMap;

/// At most `K` label entries rewritten in one round. Entries carry absolute
/// new values; deltas are derived against the maintained state.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SparseUpdate {
    entries: Vec<(usize, f64)>,
}

impl SparseUpdate {
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(i, v) in &entries {
            if !seen.insert(i) {
                return Err(Error::invalid(format!("duplicate update index {i}")));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("sparse update value"));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Exact optimum `min_x ||Ax - b||^2`, used as the reference oracle.
///
/// With `U` an orthonormal basis of the column space, the optimal residual is
/// the part of `b` outside that space: `||b||^2 - ||U^T b||^2`.
pub fn exact_cost_oracle(a: &DMatrix<f64>, b: &[f64]) -> Result<f64> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    let svd = thin_svd(a)?;
    let bv = DVectorView::from_slice(b, b.len());
    let mut proj_sq = 0.0;
    for j in 0..svd.rank {
        let c = svd.u.column(j).dot(&bv);
        proj_sq += c * c;
    }
    Ok((bv.norm_squared() - proj_sq).max(0.0))
}

/// Number of structurally nonzero entries.
pub fn nnz(a: &DMatrix<f64>) -> usize {
    a.iter().filter(|&&v| v != 0.0).count()
}

/// The sketched maintainer: `S` a leverage-score row sample, `G` a Gaussian
/// cost sketch, `M = G A (S A)^+` solved once at initialization, and the
/// running quantities `S b`, `G b`, `M S b` kept current under sparse
/// updates. The estimate is `||M S b - G b||^2`.
pub struct RegressionSketch {
    row_sample: RowSamplingMatrix,
    g: GaussianJlMap,
    m: DMatrix<f64>,
    sb: Vec<f64>,
    gb: DVector<f64>,
    msb: DVector<f64>,
    b: Vec<f64>,
    positions: HashMap<usize, Vec<usize>>,
}

fn cost_sketch_rows(n: usize, eps: f64) -> usize {
    ((REG_JL_ROWS_COEFF / (eps * eps)) * (n.max(2) as f64).ln()).ceil() as usize
}

impl RegressionSketch {
    /// Draws `S` at rate `eps/2` and `G` with `O(eps^-2 log n)` rows, then
    /// solves for `M` by a direct factorization of `S A`. Conjugate-gradient
    /// solves against the same system are available through
    /// [`compute_m_cg`] for the large-scale path.
    pub fn init(
        a: &DMatrix<f64>,
        b1: &[f64],
        eps: f64,
        scores: &LeverageScores,
        rng: &mut SeedRng,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps <= 0.25) {
            return Err(Error::invalid("regression eps must lie in (0, 1/4]"));
        }
        if b1.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: b1.len(),
            });
        }
        ensure_finite(b1, "initial label")?;
        let row_sample = sampling_matrix_from_scores(scores, a.ncols(), eps / 2.0, rng)?;
        let g = GaussianJlMap::new(cost_sketch_rows(a.nrows(), eps), a.nrows(), rng)?;
        let sa = row_sample.apply_matrix(a)?;
        let sa_svd = thin_svd(&sa)?;
        if sa_svd.rank < a.ncols() {
            log::warn!(
                "sampled system is rank deficient ({}/{}); falling back to the pseudoinverse",
                sa_svd.rank,
                a.ncols()
            );
        }
        let ga = g.as_matrix() * a;
        let m = &ga * sa_svd.pseudo_inverse();

        let b = b1.to_vec();
        let sb = row_sample.apply_vector(&b)?;
        let gb = g.as_matrix() * DVectorView::from_slice(&b, b.len());
        let msb = &m * DVectorView::from_slice(&sb, sb.len());
        let positions = row_sample.position_map();
        Ok(Self {
            row_sample,
            g,
            m,
            sb,
            gb,
            msb,
            b,
            positions,
        })
    }

    /// Current estimate `||M S b - G b||^2`.
    pub fn estimate(&self) -> f64 {
        (&self.msb - &self.gb).norm_squared()
    }

    /// Applies a sparse update in place, touching only affected coordinates,
    /// and returns the refreshed estimate.
    pub fn update(&mut self, upd: &SparseUpdate) -> Result<f64> {
        for &(idx, _) in upd.entries() {
            if idx >= self.b.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.b.len(),
                    got: idx,
                });
            }
        }
        for &(idx, new_value) in upd.entries() {
            let delta = new_value - self.b[idx];
            if delta == 0.0 {
                continue;
            }
            self.b[idx] = new_value;
            self.gb.axpy(delta, &self.g.as_matrix().column(idx), 1.0);
            if let Some(positions) = self.positions.get(&idx) {
                for &pos in positions {
                    let scaled = delta * self.row_sample.scales()[pos];
                    self.sb[pos] += scaled;
                    self.msb.axpy(scaled, &self.m.column(pos), 1.0);
                }
            }
        }
        Ok(self.estimate())
    }

    /// From-scratch recomputation of `||M (S b) - G b||^2`; the incremental
    /// path must match this bit-for-bit within 1e-9.
    pub fn recompute_estimate(&self) -> Result<f64> {
        let sb = self.row_sample.apply_vector(&self.b)?;
        let gb = self.g.as_matrix() * DVectorView::from_slice(&self.b, self.b.len());
        let msb = &self.m * DVectorView::from_slice(&sb, sb.len());
        Ok((msb - gb).norm_squared())
    }

    pub fn label(&self) -> &[f64] {
        &self.b
    }
}

/// Conjugate gradient on the normal equations of `S A`, one solve per row of
/// `G A`; converges in `O(sqrt(kappa))` products for well-conditioned inputs.
pub fn compute_m_cg(sa: &DMatrix<f64>, ga: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let gram = sa.transpose() * sa;
    let d = gram.nrows();
    let mut m = DMatrix::zeros(ga.nrows(), sa.nrows());
    for i in 0..ga.nrows() {
        let rhs: DVector<f64> = ga.row(i).transpose();
        let mut x = DVector::zeros(d);
        let mut residual = rhs.clone();
        let mut dir = residual.clone();
        let mut rs = residual.norm_squared();
        let rhs_norm = rhs.norm().max(1e-300);
        for _ in 0..(10 * d) {
            if rs.sqrt() <= tol * rhs_norm {
                break;
            }
            let gd = &gram * &dir;
            let alpha = rs / dir.dot(&gd);
            x.axpy(alpha, &dir, 1.0);
            residual.axpy(-alpha, &gd, 1.0);
            let rs_new = residual.norm_squared();
            dir = &residual + &dir * (rs_new / rs);
            rs = rs_new;
        }
        let row = sa * x;
        m.row_mut(i).copy_from(&row.transpose());
    }
    Ok(m)
}

/// Exact deterministic maintainer built on a thin SVD of `A`.
///
/// Keeps `x = A^+ b` and `U^T b` current in `O(dK)` per update. The reported
/// cost is the orthogonal-complement energy `||b||^2 - ||U^T b||^2` plus the
/// in-space residual `||Sigma V^T x - U^T b||^2` (identically zero for the
/// maintained minimizer, kept for generality).
pub struct ExactMaintainer {
    u_t: DMatrix<f64>,
    sigma: DVector<f64>,
    v_t: DMatrix<f64>,
    a_pinv: DMatrix<f64>,
    x_cur: DVector<f64>,
    utb: DVector<f64>,
    b_norm_sq: f64,
    b: Vec<f64>,
}

impl ExactMaintainer {
    pub fn init(a: &DMatrix<f64>, b1: &[f64]) -> Result<Self> {
        if b1.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: b1.len(),
            });
        }
        ensure_finite(b1, "initial label")?;
        let svd = thin_svd(a)?;
        let rank = svd.rank;
        let u_t = svd.u.columns(0, rank).transpose();
        let sigma = DVector::from_iterator(rank, svd.singular_values.iter().take(rank).copied());
        let v_t = svd.v_t.rows(0, rank).into_owned();
        let a_pinv = svd.pseudo_inverse();
        let b = b1.to_vec();
        let bv = DVectorView::from_slice(&b, b.len());
        let x_cur = &a_pinv * bv;
        let utb = &u_t * bv;
        let b_norm_sq = bv.norm_squared();
        Ok(Self {
            u_t,
            sigma,
            v_t,
            a_pinv,
            x_cur,
            utb,
            b_norm_sq,
            b,
        })
    }

    /// Exact cost at the current label.
    pub fn cost(&self) -> f64 {
        let in_space = &self.sigma.component_mul(&(&self.v_t * &self.x_cur)) - &self.utb;
        let complement = (self.b_norm_sq - self.utb.norm_squared()).max(0.0);
        in_space.norm_squared() + complement
    }

    /// Current minimizer `A^+ b`.
    pub fn solution(&self) -> &DVector<f64> {
        &self.x_cur
    }

    pub fn update(&mut self, upd: &SparseUpdate) -> Result<f64> {
        for &(idx, _) in upd.entries() {
            if idx >= self.b.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.b.len(),
                    got: idx,
                });
            }
        }
        for &(idx, new_value) in upd.entries() {
            let old = self.b[idx];
            let delta = new_value - old;
            if delta == 0.0 {
                continue;
            }
            self.b[idx] = new_value;
            self.b_norm_sq += new_value * new_value - old * old;
            self.utb.axpy(delta, &self.u_t.column(idx), 1.0);
            self.x_cur.axpy(delta, &self.a_pinv.column(idx), 1.0);
        }
        Ok(self.cost())
    }

    pub fn label(&self) -> &[f64] {
        &self.b
    }
}

/// Epoch bookkeeping of the robust runner.
#[derive(Clone, Copy, Debug)]
pub struct EpochState {
    /// Rounds per epoch.
    pub epoch_len: usize,
    /// Instances rebuilt at every epoch boundary.
    pub gamma: usize,
    /// Rounds consumed in the current epoch.
    pub step_in_epoch: usize,
}

/// Epoch length `T = ceil(c_T nnz(A) / (eps^2 K))` and instance count
/// `Gamma = max(ceil(c_G sqrt(T) ln(n T)), floor)`.
pub fn epoch_params(a: &DMatrix<f64>, eps: f64, sparsity: usize) -> (usize, usize) {
    let t = ((REG_EPOCH_COEFF * nnz(a) as f64) / (eps * eps * sparsity.max(1) as f64))
        .ceil()
        .max(1.0) as usize;
    let gamma = (REG_GAMMA_COEFF * (t as f64).sqrt() * ((a.nrows() * t).max(2) as f64).ln())
        .ceil()
        .max(1.0) as usize;
    (t, gamma.max(crate::constants::REG_GAMMA_FLOOR))
}

/// The robust dynamic runner: `Gamma` independent sketch instances, each fed
/// every update, answered by the private median of their estimates, with all
/// instances rebuilt on fresh randomness every `T` rounds.
pub struct RobustRegression {
    a: DMatrix<f64>,
    scores: LeverageScores,
    eps: f64,
    instances: Vec<RegressionSketch>,
    epoch: EpochState,
    epoch_index: u64,
    grid: OutputGrid,
    b: Vec<f64>,
    root: SeedRng,
    median_rng: SeedRng,
}

const STREAM_EPOCHS: u64 = 0;
const STREAM_MEDIAN: u64 = 1;

impl RobustRegression {
    pub fn new(
        a: DMatrix<f64>,
        b1: &[f64],
        eps: f64,
        sparsity: usize,
        seed: u64,
    ) -> Result<Self> {
        let scores = compute_leverage_scores(&a)?;
        let (epoch_len, gamma) = epoch_params(&a, eps, sparsity);
        let scale = crate::linalg::l2_norm_sq(b1).max(1e-6);
        let grid = OutputGrid::new(1e-9 * scale, 1e8 * scale, 1.0 + eps / 5.0)?;
        let root = SeedRng::new(seed);
        let median_rng = root.substream(STREAM_MEDIAN);
        let mut runner = Self {
            a,
            scores,
            eps,
            instances: Vec::new(),
            epoch: EpochState {
                epoch_len,
                gamma,
                step_in_epoch: 0,
            },
            epoch_index: 0,
            grid,
            b: b1.to_vec(),
            root,
            median_rng,
        };
        runner.rebuild()?;
        Ok(runner)
    }

    fn rebuild(&mut self) -> Result<()> {
        let epoch_rng = self
            .root
            .substream(STREAM_EPOCHS)
            .substream(self.epoch_index);
        self.epoch_index += 1;
        self.epoch.step_in_epoch = 0;
        self.instances = (0..self.epoch.gamma)
            .map(|i| {
                let mut rng = epoch_rng.substream(i as u64);
                RegressionSketch::init(&self.a, &self.b, self.eps, &self.scores, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(())
    }

    pub fn epoch_state(&self) -> EpochState {
        self.epoch
    }

    pub fn grid(&self) -> &OutputGrid {
        &self.grid
    }

    /// Private median of the instance estimates at the current label.
    pub fn current_output(&mut self) -> Result<f64> {
        let estimates: Vec<f64> = self.instances.iter().map(|inst| inst.estimate()).collect();
        private_median(&estimates, &self.grid, EPS_MED, &mut self.median_rng)
    }

    /// One round: rebuild at the epoch boundary, feed the update to every
    /// instance, release the private median of their outputs.
    pub fn step(&mut self, upd: &SparseUpdate) -> Result<f64> {
        if self.epoch.step_in_epoch >= self.epoch.epoch_len {
            self.rebuild()?;
        }
        for &(idx, value) in upd.entries() {
            if idx >= self.b.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.b.len(),
                    got: idx,
                });
            }
            self.b[idx] = value;
        }
        for inst in &mut self.instances {
            inst.update(upd)?;
        }
        self.epoch.step_in_epoch += 1;
        self.current_output()
    }

    pub fn label(&self) -> &[f64] {
        &self.b
    }
}

/// Feeds the whole update stream through [`RobustRegression`], one output per
/// round.
pub fn robust_reg_run(
    a: DMatrix<f64>,
    b1: &[f64],
    eps: f64,
    sparsity: usize,
    updates: &[SparseUpdate],
    seed: u64,
) -> Result<Vec<f64>> {
    let mut runner = RobustRegression::new(a, b1, eps, sparsity, seed)?;
    updates.iter().map(|u| runner.step(u)).collect()
}
