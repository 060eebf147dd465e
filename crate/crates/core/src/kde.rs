//! Kernel density estimation: the exact oracle, the uniform-sampling
//! estimator, its replica-wrapped adaptive variant, and the net-based wrapper
//! that survives an unlimited number of adaptive queries.

use std::collections::HashMap;

use rand::Rng;

use crate::constants::{KDE_SAMPLE_COEFF, NET_SIZE_CAP};
use crate::dp::OutputGrid;
use crate::error::{ensure_finite, Error, Result};
use crate::framework::{QueryDataStructure, RobustWrapper};
use crate::linalg::sub_norm;
use crate::rng::SeedRng;

/// Supported kernel families. Both decay with distance and are Lipschitz in
/// the query argument, which the net wrapper depends on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// `k(x, y) = C exp(-||x - y||)`.
    Exp,
    /// `k(x, y) = C / (C + ||x - y||)`.
    Rational,
}

#[derive(Clone, Copy, Debug)]
pub struct Kernel {
    kind: KernelKind,
    scale: f64,
}

impl Kernel {
    pub fn new(kind: KernelKind, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("kernel scale must be positive and finite"));
        }
        Ok(Self { kind, scale })
    }

    pub fn exp(scale: f64) -> Result<Self> {
        Self::new(KernelKind::Exp, scale)
    }

    pub fn rational(scale: f64) -> Result<Self> {
        Self::new(KernelKind::Rational, scale)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn eval_dist(&self, dist: f64) -> f64 {
        match self.kind {
            KernelKind::Exp => self.scale * (-dist).exp(),
            KernelKind::Rational => self.scale / (self.scale + dist),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval_dist(sub_norm(x, y))
    }

    /// `k(x, x)`: the largest attainable value.
    pub fn self_value(&self) -> f64 {
        match self.kind {
            KernelKind::Exp => self.scale,
            KernelKind::Rational => 1.0,
        }
    }

    /// Lipschitz constant in the second argument: `C` for the exponential
    /// kernel, `1/C` for the rational one.
    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            KernelKind::Exp => self.scale,
            KernelKind::Rational => 1.0 / self.scale,
        }
    }

    /// Distance beyond which the kernel drops below `tau / 3`. Solved in
    /// closed form: `ln(3C/tau)` for the exponential kernel and
    /// `C (3/tau - 1)` for the rational one.
    pub fn tail_radius(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau <= self.self_value()) {
            return Err(Error::invalid(
                "threshold must lie in (0, k(x,x)] for a tail radius",
            ));
        }
        Ok(match self.kind {
            KernelKind::Exp => (3.0 * self.scale / tau).ln().max(0.0),
            KernelKind::Rational => self.scale * (3.0 / tau - 1.0).max(0.0),
        })
    }
}

fn validate_points(points: &[Vec<f64>]) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::EmptyInput("point set"));
    }
    let d = points[0].len();
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

/// Exact mean kernel value, the reference oracle.
pub fn kde_exact(points: &[Vec<f64>], q: &[f64], kernel: &Kernel) -> Result<f64> {
    let d = validate_points(points)?;
    if q.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: q.len(),
        });
    }
    Ok(points.iter().map(|p| kernel.eval(p, q)).sum::<f64>() / points.len() as f64)
}

/// A query answer plus whether the multiplicative guarantee applies (the
/// estimate cleared the promise threshold).
#[derive(Clone, Copy, Debug)]
pub struct KdeQueryResult {
    pub value: f64,
    pub promise_met: bool,
}

/// Uniform-sampling estimator: the mean kernel value over
/// `s = ceil(c ln(1/delta) / (tau eps^2))` points drawn with replacement.
/// Being a mean of Lipschitz functions, it is itself Lipschitz in the query
/// with the kernel's constant.
pub struct KdeSampleEstimator {
    sample: Vec<Vec<f64>>,
    kernel: Kernel,
    tau: f64,
    eps: f64,
    delta: f64,
}

/// `ceil(c ln(1/delta) / (tau eps^2))`.
pub fn kde_sample_size(eps: f64, tau: f64, delta: f64) -> usize {
    (KDE_SAMPLE_COEFF * (1.0 / delta).ln() / (tau * eps * eps))
        .ceil()
        .max(1.0) as usize
}

impl KdeSampleEstimator {
    pub fn build(
        points: &[Vec<f64>],
        eps: f64,
        tau: f64,
        delta: f64,
        kernel: Kernel,
        rng: &mut SeedRng,
    ) -> Result<Self> {
        validate_points(points)?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid("eps must lie in (0, 1)"));
        }
        if !(tau > 0.0 && tau <= kernel.self_value()) {
            return Err(Error::invalid("tau must lie in (0, k(x,x)]"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta must lie in (0, 1)"));
        }
        let s = kde_sample_size(eps, tau, delta);
        let sample = (0..s)
            .map(|_| points[rng.gen_range(0..points.len())].clone())
            .collect();
        Ok(Self {
            sample,
            kernel,
            tau,
            eps,
            delta,
        })
    }

    pub fn sample_size(&self) -> usize {
        self.sample.len()
    }

    pub fn sample(&self) -> &[Vec<f64>] {
        &self.sample
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn query(&self, q: &[f64]) -> Result<KdeQueryResult> {
        if q.len() != self.sample[0].len() {
            return Err(Error::DimensionMismatch {
                expected: self.sample[0].len(),
                got: q.len(),
            });
        }
        let value = self
            .sample
            .iter()
            .map(|p| self.kernel.eval(p, q))
            .sum::<f64>()
            / self.sample.len() as f64;
        Ok(KdeQueryResult {
            value,
            promise_met: value >= self.tau * (1.0 - self.eps),
        })
    }
}

impl QueryDataStructure for KdeSampleEstimator {
    type Query = Vec<f64>;

    fn answer(&self, query: &Vec<f64>) -> Result<f64> {
        Ok(self.query(query)?.value)
    }
}

/// Default grid for density values: promise scale up to `k(x,x)`.
pub fn kde_grid(kernel: &Kernel, tau: f64, eps: f64) -> Result<OutputGrid> {
    OutputGrid::new(tau / 100.0, kernel.self_value(), 1.0 + eps / 6.0)
}

/// Replica-wrapped sampling estimator for `Q` adaptive queries. Replicas are
/// built slightly tighter than the target accuracy (`2 eps / 3`) so the grid
/// step fits inside the band, and at constant failure probability; the
/// wrapper's median does the rest.
pub fn robust_kde_build(
    points: &[Vec<f64>],
    query_budget: usize,
    eps: f64,
    tau: f64,
    kernel: Kernel,
    seed: u64,
) -> Result<RobustWrapper<KdeSampleEstimator>> {
    let grid = kde_grid(&kernel, tau, eps)?;
    let inner_eps = 2.0 * eps / 3.0;
    let n = points.len();
    let points = points.to_vec();
    RobustWrapper::build(
        move |mut rng| {
            KdeSampleEstimator::build(&points, inner_eps, tau, 0.1, kernel, &mut rng)
        },
        query_budget,
        n,
        grid,
        seed,
    )
}

/// Net-backed wrapper: the base estimator is sized so that, by a union bound
/// over a fine net of the query ball, it is simultaneously accurate on every
/// net point; Lipschitzness of both the kernel and the estimator then
/// transfers accuracy to every possible query, so adaptivity cannot exhaust
/// it. Queries go straight to the base estimator; the net is a sizing and
/// verification artifact.
pub struct NetWrapper {
    base: KdeSampleEstimator,
    net: Vec<Vec<f64>>,
    net_radius: f64,
    center: Vec<f64>,
    ball_radius: f64,
    diameter_bound: f64,
    tail_radius: f64,
    tau: f64,
    eps: f64,
}

impl NetWrapper {
    pub fn build(
        points: &[Vec<f64>],
        eps: f64,
        tau: f64,
        kernel: Kernel,
        diameter_bound: f64,
        tail_radius: f64,
        seed: u64,
    ) -> Result<Self> {
        let d = validate_points(points)?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid("eps must lie in (0, 1)"));
        }
        if !(tau > 0.0 && tau <= kernel.self_value()) {
            return Err(Error::invalid("tau must lie in (0, k(x,x)]"));
        }
        // The far-query hypothesis, checked numerically from the kernel.
        if kernel.eval_dist(tail_radius) > tau / 3.0 * (1.0 + 1e-9) {
            return Err(Error::invalid(format!(
                "kernel value at distance {tail_radius} exceeds tau/3; need radius >= {}",
                kernel.tail_radius(tau)?
            )));
        }
        // Diameter hypothesis.
        let mut diam: f64 = 0.0;
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                diam = diam.max(sub_norm(&points[i], &points[j]));
            }
        }
        if diam > diameter_bound * (1.0 + 1e-9) {
            return Err(Error::invalid(format!(
                "dataset diameter {diam} exceeds the declared bound {diameter_bound}"
            )));
        }

        let lipschitz = kernel.lipschitz();
        let net_radius = eps * tau / (3.0 * lipschitz);
        let mut center = vec![0.0; d];
        for p in points {
            for (c, v) in center.iter_mut().zip(p) {
                *c += v / points.len() as f64;
            }
        }
        let ball_radius = diameter_bound + tail_radius;

        let net = build_lattice_net(&center, ball_radius, net_radius, d)?;
        let delta = 1.0 / (100.0 * net.len() as f64);
        let mut rng = SeedRng::new(seed);
        let base =
            KdeSampleEstimator::build(points, eps / 3.0, tau / 2.0, delta, kernel, &mut rng)?;
        Ok(Self {
            base,
            net,
            net_radius,
            center,
            ball_radius,
            diameter_bound,
            tail_radius,
            tau,
            eps,
        })
    }

    pub fn net_size(&self) -> usize {
        self.net.len()
    }

    pub fn net(&self) -> &[Vec<f64>] {
        &self.net
    }

    pub fn net_radius(&self) -> f64 {
        self.net_radius
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn ball_radius(&self) -> f64 {
        self.ball_radius
    }

    pub fn diameter_bound(&self) -> f64 {
        self.diameter_bound
    }

    pub fn tail_radius(&self) -> f64 {
        self.tail_radius
    }

    pub fn base(&self) -> &KdeSampleEstimator {
        &self.base
    }

    pub fn query(&self, q: &[f64]) -> Result<KdeQueryResult> {
        let out = self.base.query(q)?;
        Ok(KdeQueryResult {
            value: out.value,
            promise_met: out.value >= self.tau * (1.0 - self.eps),
        })
    }
}

/// Greedy net over a lattice candidate set. The lattice spacing is chosen in
/// `[net_radius, 2 net_radius / sqrt(d))` so candidates are simultaneously a
/// cover at radius `< net_radius` and a packing at `>= net_radius`; the
/// greedy pass then enforces separation explicitly. Errors when the
/// candidate count would exceed the construction cap (the count is
/// exponential in `d`).
fn build_lattice_net(
    center: &[f64],
    ball_radius: f64,
    net_radius: f64,
    d: usize,
) -> Result<Vec<Vec<f64>>> {
    if !(net_radius > 0.0) {
        return Err(Error::invalid("net radius must be positive"));
    }
    let spacing = (1.96 * net_radius / (d as f64).sqrt()).max(net_radius * (1.0 + 1e-12));
    let margin = spacing * (d as f64).sqrt() / 2.0;
    let half_cells = ((ball_radius + margin) / spacing).ceil() as i64;
    let per_axis = (2 * half_cells + 1) as u128;
    let mut estimate: u128 = 1;
    for _ in 0..d {
        estimate = estimate.saturating_mul(per_axis);
        if estimate > NET_SIZE_CAP as u128 {
            return Err(Error::CapacityExceeded {
                size: estimate.min(usize::MAX as u128) as usize,
                cap: NET_SIZE_CAP,
            });
        }
    }

    let mut net: Vec<Vec<f64>> = Vec::new();
    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let cell_of = |p: &[f64]| -> Vec<i64> {
        p.iter()
            .zip(center)
            .map(|(v, c)| ((v - c) / net_radius).floor() as i64)
            .collect()
    };

    let mut idx = vec![-half_cells; d];
    let limit = ball_radius + margin;
    'outer: loop {
        let candidate: Vec<f64> = idx
            .iter()
            .zip(center)
            .map(|(&j, c)| c + j as f64 * spacing)
            .collect();
        let dist_sq: f64 = candidate
            .iter()
            .zip(center)
            .map(|(v, c)| (v - c) * (v - c))
            .sum();
        if dist_sq <= limit * limit {
            // Greedy insertion: keep unless a kept point is within the net
            // radius; only neighbor cells can contain one.
            let cell = cell_of(&candidate);
            let mut blocked = false;
            let mut neighbor = vec![0i64; d];
            let mut offsets = vec![-1i64; d];
            'nb: loop {
                for i in 0..d {
                    neighbor[i] = cell[i] + offsets[i];
                }
                if let Some(members) = cells.get(&neighbor) {
                    for &m in members {
                        if sub_norm(&net[m], &candidate) < net_radius {
                            blocked = true;
                            break 'nb;
                        }
                    }
                }
                let mut axis = 0;
                loop {
                    if axis == d {
                        break 'nb;
                    }
                    offsets[axis] += 1;
                    if offsets[axis] <= 1 {
                        break;
                    }
                    offsets[axis] = -1;
                    axis += 1;
                }
            }
            if !blocked {
                let id = net.len();
                net.push(candidate);
                cells.entry(cell).or_default().push(id);
            }
        }

        let mut axis = 0;
        loop {
            if axis == d {
                break 'outer;
            }
            idx[axis] += 1;
            if idx[axis] <= half_cells {
                break;
            }
            idx[axis] = -half_cells;
            axis += 1;
        }
    }
    if net.is_empty() {
        return Err(Error::DegenerateInput("empty net".into()));
    }
    Ok(net)
}
