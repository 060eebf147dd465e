//! Small shared linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn l2_norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    l2_norm_sq(v).sqrt()
}

/// `||a - b||_2` without materializing the difference.
pub fn sub_norm(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Thin SVD with a relative rank cutoff.
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
    pub rank: usize,
}

pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::invalid("SVD failed to produce U"))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::invalid("SVD failed to produce V^T"))?;
    let singular_values = svd.singular_values;
    let max_sv = singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = max_sv * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    let rank = singular_values.iter().filter(|&&s| s > tol).count();
    Ok(ThinSvd {
        u,
        singular_values,
        v_t,
        rank,
    })
}

impl ThinSvd {
    /// Moore-Penrose pseudoinverse assembled from the factors.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let k = self.singular_values.len();
        let mut inv = DMatrix::zeros(k, k);
        for i in 0..self.rank {
            inv[(i, i)] = 1.0 / self.singular_values[i];
        }
        self.v_t.transpose() * inv * self.u.transpose()
    }
}

/// `kappa(A)`: ratio of extreme nonzero singular values.
pub fn condition_number(a: &DMatrix<f64>) -> Result<f64> {
    let svd = thin_svd(a)?;
    if svd.rank == 0 {
        return Err(Error::DegenerateInput("all-zero matrix".into()));
    }
    let max = svd.singular_values[0];
    let min = svd.singular_values[svd.rank - 1];
    Ok(max / min)
}
