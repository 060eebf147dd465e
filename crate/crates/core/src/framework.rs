//! The generic replica wrapper: build `r` independent copies of a randomized
//! query structure, answer each query by a private median over a fresh
//! subsample of `k` of them, and enforce the query budget.

use rand::RngCore;
use rayon::prelude::*;

use crate::dp::{framework_params, private_median, FrameworkParams, OutputGrid};
use crate::error::{Error, Result};
use crate::rng::SeedRng;

/// Contract every wrapped structure must satisfy: built from a seed stream,
/// it answers a fixed query correctly (in the application's sense) with
/// probability at least 3/4 over its own randomness.
pub trait QueryDataStructure: Send + Sync {
    type Query: Clone + Send + Sync;

    fn answer(&self, query: &Self::Query) -> Result<f64>;
}

/// Ordered (query, response) pairs released so far. Raw per-replica answers
/// are never stored here.
#[derive(Clone, Debug, Default)]
pub struct Transcript<Q> {
    entries: Vec<(Q, f64)>,
}

impl<Q> Transcript<Q> {
    pub fn entries(&self) -> &[(Q, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `r` replicas plus the private-median aggregation state.
pub struct RobustWrapper<D: QueryDataStructure> {
    replicas: Vec<D>,
    params: FrameworkParams,
    grid: OutputGrid,
    queries_used: usize,
    transcript: Transcript<D::Query>,
    query_rng: SeedRng,
}

// Substream layout under the wrapper's root seed.
const STREAM_BUILD: u64 = 0;
const STREAM_QUERY: u64 = 1;

impl<D: QueryDataStructure> RobustWrapper<D> {
    /// Sizes the wrapper from the budget calculator and builds the replicas
    /// with independent substreams.
    pub fn build<F>(factory: F, query_budget: usize, n: usize, grid: OutputGrid, seed: u64) -> Result<Self>
    where
        F: Fn(SeedRng) -> Result<D> + Sync,
    {
        let params = framework_params(query_budget, n)?;
        Self::build_with_params(factory, params, grid, seed)
    }

    /// Builds with explicitly chosen replica parameters (the experiment
    /// harness pins these to reference configurations).
    pub fn build_with_params<F>(
        factory: F,
        params: FrameworkParams,
        grid: OutputGrid,
        seed: u64,
    ) -> Result<Self>
    where
        F: Fn(SeedRng) -> Result<D> + Sync,
    {
        if params.r == 0 || params.k == 0 {
            return Err(Error::invalid("replica and subsample counts must be positive"));
        }
        if params.k > params.r {
            return Err(Error::invalid("subsample size exceeds replica count"));
        }
        let root = SeedRng::new(seed);
        let build_root = root.substream(STREAM_BUILD);
        let replicas: Result<Vec<D>> = (0..params.r)
            .into_par_iter()
            .map(|i| factory(build_root.substream(i as u64)))
            .collect();
        Ok(Self {
            replicas: replicas?,
            params,
            grid,
            queries_used: 0,
            transcript: Transcript { entries: Vec::new() },
            query_rng: root.substream(STREAM_QUERY),
        })
    }

    pub fn params(&self) -> &FrameworkParams {
        &self.params
    }

    pub fn grid(&self) -> &OutputGrid {
        &self.grid
    }

    pub fn queries_used(&self) -> usize {
        self.queries_used
    }

    pub fn remaining_budget(&self) -> usize {
        self.params.query_budget - self.queries_used
    }

    pub fn replica_count(&self) -> usize {
        self.replicas.len()
    }

    pub fn transcript(&self) -> &Transcript<D::Query> {
        &self.transcript
    }

    /// Answers one query: a fresh with-replacement subsample of `k` replicas,
    /// then the private median of their answers over the grid.
    pub fn query(&mut self, query: &D::Query) -> Result<f64> {
        if self.queries_used >= self.params.query_budget {
            return Err(Error::BudgetExhausted {
                budget: self.params.query_budget,
            });
        }
        let k = self.params.k;
        let r = self.replicas.len();
        let mut answers = Vec::with_capacity(k);
        for _ in 0..k {
            let idx = (self.query_rng.next_u64() % r as u64) as usize;
            answers.push(self.replicas[idx].answer(query)?);
        }
        let out = private_median(&answers, &self.grid, self.params.eps_med, &mut self.query_rng)?;
        self.queries_used += 1;
        self.transcript.entries.push((query.clone(), out));
        Ok(out)
    }
}
