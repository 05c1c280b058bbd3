//! Dispersion-based upper bounds on the variational gap
//! `log E[X] - E[log X]` and an end-to-end diagnostic report.
//!
//! Three checks are implemented:
//!
//! - `prop1_check` — the mean-median inequality `|mu - nu| <= ||V - mu||_p`,
//!   a theorem on any distribution (including empirical ones), used to
//!   certify candidate dispersion constants.
//! - `prop2_bound` — the tangent-line bound
//!   `gap <= C_X / (mu_X - C_X) + C_Y`, applicable when `mu_X > C_X`.
//! - `corollary_bound` — the same bound specialized to an unbiased
//!   estimator of the evidence with `C = sigma`, gated on
//!   `sigma_X < p(v)`.
//!
//! Inapplicability (a violated gate) is a first-class `None`, never an
//! error: poor proposals routinely fail the gates and the report must say
//! so rather than crash.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::estimators::{iwlb_samples, EstimatorConfig};
use crate::models::{sample_log_weights, ImportanceModel};
use crate::stats::{
    compensated_sum, dispersion_of, log_sum_exp, mean_of, Coupling, DispersionStats, LogWeightBatch,
};

/// z such that Phi(z) = 0.995; drives the distribution-free 99% median CI.
const Z_995: f64 = 2.5758293035489004;

/// Absolute slack allowed when asserting the mean-median inequality on
/// empirical data.
pub const PROP1_TOLERANCE: f64 = 1e-12;

/// Result of checking the mean-median deviation inequality at one order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop1Check {
    /// `|mean - median|`.
    pub lhs: f64,
    /// `||V - mean||_p`.
    pub rhs: f64,
    /// `lhs <= rhs + PROP1_TOLERANCE`; always true on empirical data.
    pub holds: bool,
}

/// Checks `|mean - median| <= lp_dev(p)` for `p` in {1, 2}.
pub fn prop1_check(stats: &DispersionStats, p: u32) -> Result<Prop1Check> {
    let rhs = stats.lp_dev(p)?;
    let lhs = (stats.mean - stats.median).abs();
    Ok(Prop1Check {
        lhs,
        rhs,
        holds: lhs <= rhs + PROP1_TOLERANCE,
    })
}

/// Shared arithmetic of both gap bounds: `c_x / (center - c_x) + c_y`
/// when the gate `center > c_x` holds, `None` otherwise.
fn tangent_bound(center: f64, c_x: f64, c_y: f64) -> Option<f64> {
    (center > c_x).then(|| c_x / (center - c_x) + c_y)
}

/// Tangent-line gap bound from dispersion constants on both scales.
///
/// Given `|mu_X - nu_X| <= c_x` and `|mu_Y - nu_Y| <= c_y`, the gap is at
/// most `c_x / (mu_x - c_x) + c_y` whenever `mu_x > c_x`; a violated gate
/// returns `None`.
pub fn prop2_bound(mu_x: f64, c_x: f64, c_y: f64) -> Result<Option<f64>> {
    if !mu_x.is_finite() || mu_x <= 0.0 {
        return Err(Error::NonFiniteInput {
            context: "prop2_bound mean (must be finite and > 0)",
            value: mu_x,
        });
    }
    if !c_x.is_finite() || c_x < 0.0 {
        return Err(Error::InvalidDispersion(c_x));
    }
    if !c_y.is_finite() || c_y < 0.0 {
        return Err(Error::InvalidDispersion(c_y));
    }
    Ok(tangent_bound(mu_x, c_x, c_y))
}

/// Standard-deviation form of the gap bound for an unbiased estimator of
/// the evidence `p(v)`: when `sigma_x < p_v`,
/// `log p(v) - E[log X] <= sigma_x / (p_v - sigma_x) + sigma_y`.
///
/// Identical to `prop2_bound(p_v, sigma_x, sigma_y)` by construction.
pub fn corollary_bound(p_v: f64, sigma_x: f64, sigma_y: f64) -> Result<Option<f64>> {
    if !p_v.is_finite() || p_v <= 0.0 {
        return Err(Error::InvalidEvidence(p_v));
    }
    if !sigma_x.is_finite() || sigma_x < 0.0 {
        return Err(Error::InvalidDispersion(sigma_x));
    }
    if !sigma_y.is_finite() || sigma_y < 0.0 {
        return Err(Error::InvalidDispersion(sigma_y));
    }
    Ok(tangent_bound(p_v, sigma_x, sigma_y))
}

/// Full diagnostic for one estimator configuration.
///
/// All X-scale quantities are normalized by the exact evidence, which the
/// gap and both bounds are invariant to; `mu_x` therefore hovers near 1 and
/// the corollary gate reads `sigma_x < 1`. Serializes to JSON with stable
/// field names and `null` for inapplicable bounds.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GapBoundReport {
    /// Exact log-evidence minus the estimated E[Y_K].
    pub gap: f64,
    pub gap_std_error: f64,
    /// Tangent-line bound from the L1 deviations; `null` when `mu_x <= c_x`.
    pub prop2_bound: Option<f64>,
    /// Sigma-based bound; `null` when `sigma_x >= 1` (normalized gate).
    pub corollary_bound: Option<f64>,
    pub mu_x: f64,
    pub mu_x_std_error: f64,
    pub median_x: f64,
    /// Distribution-free 99% order-statistic interval for the X median.
    pub median_x_ci99: [f64; 2],
    pub sigma_x: f64,
    pub sigma_x_std_error: f64,
    pub sigma_y: f64,
    pub sigma_y_std_error: f64,
    /// Candidate C_X values by order: {"1": L1 deviation, "2": sigma}.
    pub prop1_cx: BTreeMap<String, f64>,
    /// Candidate C_Y values by order.
    pub prop1_cy: BTreeMap<String, f64>,
    /// The constants used in `prop2_bound` (the L1 pair, the tightest).
    pub c_x: f64,
    pub c_y: f64,
    pub applicable_prop2: bool,
    pub applicable_corollary: bool,
    pub k: usize,
    pub replications: usize,
    pub coupling: Coupling,
    pub n: usize,
    pub seed: u64,
}

/// Delta-method standard error of a sample standard deviation.
fn std_dev_std_error(values: &[f64], mean: f64, std: f64) -> f64 {
    let n = values.len() as f64;
    if std == 0.0 || values.len() < 2 {
        return 0.0;
    }
    let var_pop = compensated_sum(values.iter().map(|v| {
        let d = v - mean;
        d * d
    })) / n;
    let m4 = compensated_sum(values.iter().map(|v| {
        let d = v - mean;
        d * d * d * d
    })) / n;
    let var_of_var = ((m4 - var_pop * var_pop) / n).max(0.0);
    var_of_var.sqrt() / (2.0 * std)
}

/// Order-statistic 99% confidence interval for the median.
fn median_ci99(sorted: &[f64]) -> [f64; 2] {
    let n = sorted.len();
    let half = n as f64 / 2.0;
    let spread = Z_995 * (n as f64).sqrt() / 2.0;
    let lo = (half - spread).floor().max(0.0) as usize;
    let hi = ((half + spread).ceil() as usize).min(n - 1);
    [sorted[lo.min(n - 1)], sorted[hi]]
}

/// Runs the estimator, assembles dispersion statistics on both scales and
/// evaluates every bound with applicability flags and error bars.
pub fn diagnose<M: ImportanceModel + ?Sized>(
    model: &M,
    cfg: &EstimatorConfig,
) -> Result<GapBoundReport> {
    cfg.validate()?;
    let batch = sample_log_weights(model, cfg.total_samples(), cfg.seed, cfg.coupling)?;
    let ys = iwlb_samples(&batch, cfg.k)?;
    let log_z = model.log_evidence();

    let y_stats = dispersion_of(&ys);
    let xs: Vec<f64> = ys.iter().map(|y| (y - log_z).exp()).collect();
    if let Some(&bad) = xs.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput {
            context: "diagnose normalized weights",
            value: bad,
        });
    }
    let x_stats = dispersion_of(&xs);

    let r = ys.len() as f64;
    let gap = log_z - y_stats.mean;
    let gap_std_error = y_stats.std / r.sqrt();

    let c_x = x_stats.mean_abs_dev;
    let c_y = y_stats.mean_abs_dev;
    let prop2 = prop2_bound(x_stats.mean, c_x, c_y)?;
    // Normalized evidence is exactly 1.
    let corollary = corollary_bound(1.0, x_stats.std, y_stats.std)?;

    let mut sorted_x = xs.clone();
    sorted_x.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));

    Ok(GapBoundReport {
        gap,
        gap_std_error,
        prop2_bound: prop2,
        corollary_bound: corollary,
        mu_x: x_stats.mean,
        mu_x_std_error: x_stats.std / r.sqrt(),
        median_x: x_stats.median,
        median_x_ci99: median_ci99(&sorted_x),
        sigma_x: x_stats.std,
        sigma_x_std_error: std_dev_std_error(&xs, x_stats.mean, x_stats.std),
        sigma_y: y_stats.std,
        sigma_y_std_error: std_dev_std_error(&ys, y_stats.mean, y_stats.std),
        prop1_cx: BTreeMap::from([
            ("1".to_string(), x_stats.mean_abs_dev),
            ("2".to_string(), x_stats.std),
        ]),
        prop1_cy: BTreeMap::from([
            ("1".to_string(), y_stats.mean_abs_dev),
            ("2".to_string(), y_stats.std),
        ]),
        c_x,
        c_y,
        applicable_prop2: prop2.is_some(),
        applicable_corollary: corollary.is_some(),
        k: cfg.k,
        replications: ys.len(),
        coupling: cfg.coupling,
        n: batch.len(),
        seed: cfg.seed,
    })
}

/// Exact finite-population check of the tangent-line bound on one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalCheck {
    /// `log(mean of X) - mean(Y)` of the batch as a finite population.
    pub gap: f64,
    pub mu_x: f64,
    /// Population L1 deviations, certified by `prop1_check`.
    pub c_x: f64,
    pub c_y: f64,
    pub bound: Option<f64>,
    /// `gap <= bound + 1e-9` when applicable.
    pub holds: Option<bool>,
}

/// Treats the batch itself as the distribution and verifies the bound with
/// no Monte Carlo slack.
///
/// Internally the weights are normalized by their own log-mean-exp, which
/// keeps every exponential at most `n` and changes neither the gap nor the
/// bound.
pub fn empirical_prop2_check(batch: &LogWeightBatch) -> Result<EmpiricalCheck> {
    let ys = batch.log_weights();
    let n = ys.len();
    let log_mean = log_sum_exp(ys)? - (n as f64).ln();
    let shifted: Vec<f64> = ys.iter().map(|y| y - log_mean).collect();
    let xs: Vec<f64> = shifted.iter().map(|y| y.exp()).collect();

    let mu_x = mean_of(&xs);
    let gap = mu_x.ln() - mean_of(&shifted);
    let c_x = compensated_sum(xs.iter().map(|x| (x - mu_x).abs())) / n as f64;
    let mu_y = mean_of(&shifted);
    let c_y = compensated_sum(shifted.iter().map(|y| (y - mu_y).abs())) / n as f64;

    let bound = prop2_bound(mu_x, c_x, c_y)?;
    Ok(EmpiricalCheck {
        gap,
        mu_x,
        c_x,
        c_y,
        bound,
        holds: bound.map(|b| gap <= b + 1e-9),
    })
}
