//! Frozen tuning constants.
//!
//! Every leading constant hidden inside an asymptotic bound was fixed once by
//! an empirical calibration run (see the acceptance suite) and is not meant to
//! be adjusted per call site.

/// Default CLI seed, used whenever no seed is supplied.
pub const DEFAULT_SEED: u64 = 42;

/// Per-call privacy parameter of the private median used by the replica
/// wrappers.
pub const EPS_MED: f64 = 1.0;

/// JL target dimension: `m = ceil(JL_ROWS_COEFF / eps^2)`.
pub const JL_ROWS_COEFF: f64 = 5.0;

/// Leverage-score sampling rate: `p_i = min(1, eps^-2 * LEVERAGE_SAMPLING_C * tau_i * ln d)`.
pub const LEVERAGE_SAMPLING_C: f64 = 2.0;

/// Replica count of the query wrapper: `r = ceil(FRAMEWORK_R_COEFF * sqrt(Q) * ln^2(nQ))`.
pub const FRAMEWORK_R_COEFF: f64 = 31.5;

/// Per-query subsample size of the query wrapper: `k = ceil(FRAMEWORK_K_COEFF * ln(nQ))`.
pub const FRAMEWORK_K_COEFF: f64 = 7.0;

/// Rows of the cost-compressing Gaussian sketch in dynamic regression:
/// `ceil(REG_JL_ROWS_COEFF * eps^-2 * ln n)`.
pub const REG_JL_ROWS_COEFF: f64 = 1.5;

/// Epoch length of the robust regression runner:
/// `T = ceil(REG_EPOCH_COEFF * nnz(A) / (eps^2 * K))`.
pub const REG_EPOCH_COEFF: f64 = 1.0 / 128.0;

/// Instances per epoch: `Gamma = ceil(REG_GAMMA_COEFF * sqrt(T) * ln(n T))`.
pub const REG_GAMMA_COEFF: f64 = 0.65;

/// Lower bound on instances per epoch. The private median over a
/// multi-decade geometric grid needs this many inputs before its selection
/// noise is negligible.
pub const REG_GAMMA_FLOOR: usize = 72;

/// Replica count of the per-point distance estimator:
/// `r = ceil(ADE_FJL_R_COEFF * sqrt(Q) * ln^2(nQ))`.
pub const ADE_FJL_R_COEFF: f64 = 1.0;

/// Hadamard blocks in the all-points distance estimator:
/// `m = ceil(ADE_SRHT_M_COEFF * eps^-2 * ln(2 d n / eps))`.
pub const ADE_SRHT_M_COEFF: f64 = 0.5;

/// Index-set families per point: `r = ceil(ADE_SRHT_R_COEFF * sqrt(Q) * ln^3(nd))`.
pub const ADE_SRHT_R_COEFF: f64 = 0.05;

/// Coordinates per index set: `k = ceil(ADE_SRHT_K_COEFF * eps^-2 * ln(2/eps) * ln(2nd))`.
pub const ADE_SRHT_K_COEFF: f64 = 0.5;

/// Per-query index-set draws per point: `l = ceil(ADE_SRHT_L_COEFF * ln(nd))`.
pub const ADE_SRHT_L_COEFF: f64 = 8.0;

/// Kernel density sample size: `s = ceil(KDE_SAMPLE_COEFF * ln(1/delta) / (tau * eps^2))`.
pub const KDE_SAMPLE_COEFF: f64 = 1.5;

/// Hard cap on constructible net sizes.
pub const NET_SIZE_CAP: usize = 10_000_000;

/// Phi^-1(3/4), the quartile of the standard normal; converts a median
/// absolute value into a scale estimate.
pub const PHI_INV_3_4: f64 = 0.674_489_750_196_081_7;

/// sqrt(pi/2), the bias correction of the mean-absolute-value norm estimator.
pub const SQRT_PI_OVER_2: f64 = 1.253_314_137_315_500_3;
