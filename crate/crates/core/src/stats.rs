//! Numerically stable primitive statistics on log-weight batches.
//!
//! Everything here is a pure function of immutable inputs. The central type
//! is [`LogWeightBatch`]: a finite, non-empty, immutable vector of
//! log likelihood-ratio samples `y = log(p/q)`. All downstream modules
//! (estimators, bounds, figures) consume batches or plain `&[f64]` slices
//! produced from them.
//!
//! X-scale statistics are computed on normalized weights `exp(y - log c)`
//! so that a well-chosen normalizer (typically the exact evidence) keeps
//! the exponentials near 1. The gap and the dispersion bounds are invariant
//! under this scaling, so the normalizer never changes a reported bound.

use crate::error::{Error, Result};

/// How the underlying standard-normal draws of a batch were coupled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// Independent draws.
    Iid,
    /// Consecutive pairs reflected through the proposal mean: (eps, -eps).
    Antithetic,
    /// First coordinate stratified into n equal-probability strata with
    /// uniform within-stratum jitter; remaining coordinates iid.
    Stratified,
}

impl Coupling {
    pub fn as_str(self) -> &'static str {
        match self {
            Coupling::Iid => "iid",
            Coupling::Antithetic => "antithetic",
            Coupling::Stratified => "stratified",
        }
    }
}

impl std::fmt::Display for Coupling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Coupling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "iid" => Ok(Coupling::Iid),
            "antithetic" => Ok(Coupling::Antithetic),
            "stratified" => Ok(Coupling::Stratified),
            other => Err(format!(
                "unknown coupling '{other}' (expected iid, antithetic or stratified)"
            )),
        }
    }
}

/// A batch of log likelihood-ratio samples, immutable after construction.
///
/// Construction rejects NaN and infinities: a `-inf` log-weight signals a
/// support mismatch the caller must see, not a value to drop silently.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeightBatch {
    log_weights: Vec<f64>,
    seed: u64,
    coupling: Coupling,
}

impl LogWeightBatch {
    pub fn new(log_weights: Vec<f64>, seed: u64, coupling: Coupling) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::EmptyBatch("LogWeightBatch::new"));
        }
        if let Some(&bad) = log_weights.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput {
                context: "LogWeightBatch::new",
                value: bad,
            });
        }
        Ok(Self {
            log_weights,
            seed,
            coupling,
        })
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 is a construction invariant
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }
}

/// Which scale a dispersion summary describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Statistics of `X = exp(y - log c)`.
    X,
    /// Statistics of `Y = y - log c`.
    Y,
}

/// Mean, median and deviation summary of one sample set on one scale.
///
/// `std` is the sample standard deviation (n-1 denominator, 0 for n = 1)
/// and doubles as the L2 deviation; `mean_abs_dev` is the population mean
/// absolute deviation and doubles as the L1 deviation. The ordering
/// `lp_dev(1) <= lp_dev(2)` and the empirical mean-median bound
/// `|mean - median| <= lp_dev(p)` hold by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionStats {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub mean_abs_dev: f64,
    pub n: usize,
}

impl DispersionStats {
    /// L_p deviation `||V - mean||_p` for p in {1, 2}.
    pub fn lp_dev(&self, p: u32) -> Result<f64> {
        match p {
            1 => Ok(self.mean_abs_dev),
            2 => Ok(self.std),
            other => Err(Error::UnsupportedOrder(other)),
        }
    }
}

/// Neumaier compensated sum; error stays O(eps) independent of length.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut c = 0.0_f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Arithmetic mean with compensated summation. Caller guarantees non-empty.
pub(crate) fn mean_of(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// log(sum_i exp(v_i)) by max-shifting; never overflows for finite input.
///
/// Single-element input returns the element exactly.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyBatch("log_sum_exp"));
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput {
            context: "log_sum_exp",
            value: bad,
        });
    }
    if values.len() == 1 {
        return Ok(values[0]);
    }
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s = compensated_sum(values.iter().map(|v| (v - m).exp()));
    Ok(m + s.ln())
}

/// Two-argument log-sum-exp for finite inputs.
pub fn log_sum_exp_pair(a: f64, b: f64) -> f64 {
    if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Midpoint-rule empirical median: the middle order statistic for odd n,
/// the midpoint of the two central order statistics for even n.
pub fn empirical_median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyBatch("empirical_median"));
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput {
            context: "empirical_median",
            value: bad,
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    Ok(median_of_sorted(&sorted))
}

pub(crate) fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// R-7 linear-interpolation quantile on unsorted data, `p` in [0, 1].
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyBatch("quantile"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::NonFiniteInput {
            context: "quantile order",
            value: p,
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    Ok(quantile_of_sorted(&sorted, p))
}

pub(crate) fn quantile_of_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let j = h.floor() as usize;
    let g = h - h.floor();
    if j + 1 >= n {
        sorted[n - 1]
    } else {
        (1.0 - g) * sorted[j] + g * sorted[j + 1]
    }
}

/// Full dispersion summary of `values`; single pass for moments after a sort
/// for the median. `values` must be finite and non-empty (callers validate).
pub(crate) fn dispersion_of(values: &[f64]) -> DispersionStats {
    let n = values.len();
    let mean = mean_of(values);
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let median = median_of_sorted(&sorted);
    let mad = compensated_sum(values.iter().map(|v| (v - mean).abs())) / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (compensated_sum(values.iter().map(|v| {
            let d = v - mean;
            d * d
        })) / (n - 1) as f64)
            .sqrt()
    };
    DispersionStats {
        mean,
        median,
        std,
        mean_abs_dev: mad,
        n,
    }
}

/// Dispersion statistics of a batch on the requested scale.
///
/// With a normalizer `c > 0`, Y-scale values are `y - log c` (mean and
/// median shift by `-log c`, deviations unchanged) and X-scale values are
/// `exp(y - log c)`. X-scale exponentials that overflow to infinity are
/// rejected; pass the exact evidence as the normalizer to avoid that.
pub fn dispersion_stats(
    batch: &LogWeightBatch,
    scale: Scale,
    normalizer: Option<f64>,
) -> Result<DispersionStats> {
    let c = normalizer.unwrap_or(1.0);
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::InvalidNormalizer(c));
    }
    let log_c = c.ln();
    let values: Vec<f64> = match scale {
        Scale::Y => batch.log_weights().iter().map(|y| y - log_c).collect(),
        Scale::X => batch
            .log_weights()
            .iter()
            .map(|y| (y - log_c).exp())
            .collect(),
    };
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput {
            context: "dispersion_stats (x-scale overflow; normalize by the evidence)",
            value: bad,
        });
    }
    let stats = dispersion_of(&values);
    // Squared deviations of huge-but-finite weights can still overflow.
    if !stats.std.is_finite() || !stats.mean_abs_dev.is_finite() || !stats.mean.is_finite() {
        return Err(Error::NonFiniteInput {
            context: "dispersion_stats moments (x-scale overflow; normalize by the evidence)",
            value: stats.std,
        });
    }
    Ok(stats)
}

/// Streaming mean/variance accumulator (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (n-1 denominator); 0 below two samples.
    pub fn sample_var(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn sample_std(&self) -> f64 {
        self.sample_var().sqrt()
    }

    /// Standard error of the accumulated mean.
    pub fn se_of_mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.sample_var() / self.count as f64).sqrt()
        }
    }
}

/// Horner evaluation, `coeffs` ordered from the constant term upward.
fn polynomial(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Inverse standard-normal CDF (quantile function).
///
/// Wichura's AS 241 (PPND16) rational approximations; absolute error below
/// ~1e-15 over (0, 1). Used for stratified sampling and distribution-free
/// median intervals.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    // Coefficients from Wichura (1988), Algorithm AS 241, PPND16.
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_3e3,
        1.373_169_376_550_946e4,
        4.592_195_393_154_987e4,
        6.726_577_092_700_87e4,
        3.343_057_558_358_813e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091e1,
        6.871_870_074_920_579e2,
        5.394_196_021_424_751e3,
        2.121_379_430_158_659_7e4,
        3.930_789_580_009_271e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_854e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_546,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        2.417_807_251_774_506e-1,
        2.272_384_498_926_918_4e-2,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        6.897_673_349_851e-1,
        1.481_039_764_274_800_8e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_9e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        2.965_605_718_285_048_7e-1,
        2.653_218_952_657_612_4e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_88e-1,
        1.369_298_809_227_358e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_7e-15,
    ];

    if !(p > 0.0 && p < 1.0) {
        return Err(Error::NonFiniteInput {
            context: "inverse_normal_cdf (p must lie in (0,1))",
            value: p,
        });
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return Ok(q * polynomial(&A, r) / polynomial(&B, r));
    }
    let r = (-(if q < 0.0 { p } else { 1.0 - p }).ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        polynomial(&C, r) / polynomial(&D, r)
    } else {
        let r = r - 5.0;
        polynomial(&E, r) / polynomial(&F, r)
    };
    Ok(if q < 0.0 { -x } else { x })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeError {
            context: "spearman",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::EmptyBatch("spearman needs at least two points"));
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let ma = mean_of(&ra);
    let mb = mean_of(&rb);
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..ra.len() {
        let xa = ra[i] - ma;
        let xb = rb[i] - mb;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    let denom = (da * db).sqrt();
    if denom == 0.0 {
        return Err(Error::NumericalFailure(
            "spearman: an input has zero rank variance",
        ));
    }
    Ok(num / denom)
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite values"));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_2: f64 = std::f64::consts::LN_2;

    #[test]
    fn log_sum_exp_two_equal_terms() {
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_shift_avoids_overflow() {
        // Naive exp(1000) overflows; the shifted form is exact.
        let v = log_sum_exp(&[1000.0, 1000.0]).unwrap();
        assert!((v - (1000.0 + LN_2)).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_single_element_is_identity() {
        assert_eq!(log_sum_exp(&[0.0]).unwrap(), 0.0);
        assert_eq!(log_sum_exp(&[-3.25]).unwrap(), -3.25);
    }

    #[test]
    fn log_sum_exp_rejects_empty_and_non_finite() {
        assert!(matches!(log_sum_exp(&[]), Err(Error::EmptyBatch(_))));
        assert!(matches!(
            log_sum_exp(&[0.0, f64::NAN]),
            Err(Error::NonFiniteInput { .. })
        ));
        assert!(matches!(
            log_sum_exp(&[f64::NEG_INFINITY]),
            Err(Error::NonFiniteInput { .. })
        ));
    }

    #[test]
    fn pair_lse_matches_slice_lse() {
        for (a, b) in [(0.5, 2.0), (12.0, 5.0), (-3.0, -3.0), (700.0, 690.0)] {
            let got = log_sum_exp_pair(a, b);
            let want = log_sum_exp(&[a, b]).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn median_odd_even_single() {
        assert_eq!(empirical_median(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(empirical_median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(empirical_median(&[5.0]).unwrap(), 5.0);
        assert!(matches!(empirical_median(&[]), Err(Error::EmptyBatch(_))));
    }

    #[test]
    fn batch_construction_guards() {
        assert!(matches!(
            LogWeightBatch::new(vec![], 0, Coupling::Iid),
            Err(Error::EmptyBatch(_))
        ));
        assert!(matches!(
            LogWeightBatch::new(vec![0.0, f64::INFINITY], 0, Coupling::Iid),
            Err(Error::NonFiniteInput { .. })
        ));
        let b = LogWeightBatch::new(vec![1.7; 4], 9, Coupling::Antithetic).unwrap();
        assert_eq!(b.len(), 4);
        assert_eq!(b.seed(), 9);
        assert_eq!(b.coupling(), Coupling::Antithetic);
    }

    #[test]
    fn constant_batch_has_zero_dispersion() {
        let b = LogWeightBatch::new(vec![1.7; 8], 0, Coupling::Iid).unwrap();
        let s = dispersion_stats(&b, Scale::Y, None).unwrap();
        assert_eq!(s.mean, 1.7);
        assert_eq!(s.median, 1.7);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.mean_abs_dev, 0.0);
        assert_eq!(s.n, 8);
    }

    #[test]
    fn y_scale_normalizer_shifts_center_only() {
        let b = LogWeightBatch::new(vec![0.2, -0.3, 1.1, 0.4], 0, Coupling::Iid).unwrap();
        let plain = dispersion_stats(&b, Scale::Y, None).unwrap();
        let c = 3.7;
        let shifted = dispersion_stats(&b, Scale::Y, Some(c)).unwrap();
        assert!((shifted.mean - (plain.mean - c.ln())).abs() < 1e-12);
        assert!((shifted.median - (plain.median - c.ln())).abs() < 1e-12);
        assert!((shifted.std - plain.std).abs() < 1e-12);
        assert!((shifted.mean_abs_dev - plain.mean_abs_dev).abs() < 1e-12);
    }

    #[test]
    fn x_scale_uses_normalized_exponentials() {
        let b = LogWeightBatch::new(vec![0.0, LN_2], 0, Coupling::Iid).unwrap();
        let s = dispersion_stats(&b, Scale::X, Some(2.0)).unwrap();
        // exp(0 - ln 2) = 0.5, exp(ln 2 - ln 2) = 1.0
        assert!((s.mean - 0.75).abs() < 1e-15);
        assert!((s.median - 0.75).abs() < 1e-15);
    }

    #[test]
    fn invalid_normalizer_is_rejected() {
        let b = LogWeightBatch::new(vec![0.0], 0, Coupling::Iid).unwrap();
        assert!(matches!(
            dispersion_stats(&b, Scale::X, Some(0.0)),
            Err(Error::InvalidNormalizer(_))
        ));
        assert!(matches!(
            dispersion_stats(&b, Scale::X, Some(-1.0)),
            Err(Error::InvalidNormalizer(_))
        ));
        assert!(matches!(
            dispersion_stats(&b, Scale::X, Some(f64::NAN)),
            Err(Error::InvalidNormalizer(_))
        ));
    }

    #[test]
    fn x_scale_overflow_is_reported() {
        let b = LogWeightBatch::new(vec![800.0, 0.0], 0, Coupling::Iid).unwrap();
        assert!(matches!(
            dispersion_stats(&b, Scale::X, None),
            Err(Error::NonFiniteInput { .. })
        ));
        // Normalizing by the large weight keeps everything finite.
        let b = LogWeightBatch::new(vec![700.0, 650.0], 0, Coupling::Iid).unwrap();
        assert!(matches!(
            dispersion_stats(&b, Scale::X, None),
            Err(Error::NonFiniteInput { .. })
        ));
        assert!(dispersion_stats(&b, Scale::X, Some(700f64.exp())).is_ok());
    }

    #[test]
    fn lp_dev_orders() {
        let b = LogWeightBatch::new(vec![0.0, 1.0, 5.0], 0, Coupling::Iid).unwrap();
        let s = dispersion_stats(&b, Scale::Y, None).unwrap();
        assert_eq!(s.lp_dev(1).unwrap(), s.mean_abs_dev);
        assert_eq!(s.lp_dev(2).unwrap(), s.std);
        assert!(matches!(s.lp_dev(3), Err(Error::UnsupportedOrder(3))));
    }

    #[test]
    fn single_sample_stats_are_degenerate() {
        let b = LogWeightBatch::new(vec![2.5], 0, Coupling::Iid).unwrap();
        let s = dispersion_stats(&b, Scale::Y, None).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.mean_abs_dev, 0.0);
    }

    #[test]
    fn running_moments_match_batch_formulas() {
        let data = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        let mut acc = RunningMoments::new();
        for &x in &data {
            acc.push(x);
        }
        assert!((acc.mean() - 5.0).abs() < 1e-14);
        assert!((acc.sample_var() - 4.571428571428571).abs() < 1e-12);
        assert_eq!(acc.count(), 8);
    }

    #[test]
    fn inverse_normal_cdf_frozen_values() {
        // Reference values from an independent double-precision implementation.
        let cases = [
            (0.5, 0.0),
            (0.8, 0.8416212335729143),
            (0.975, 1.959963984540054),
            (0.99, 2.3263478740408408),
            (0.995, 2.5758293035489004),
            (1e-10, -6.361340902404056),
        ];
        for (p, z) in cases {
            let got = inverse_normal_cdf(p).unwrap();
            assert!(
                (got - z).abs() <= 1e-12 * z.abs().max(1.0),
                "p={p}: got {got}, want {z}"
            );
        }
        assert!(inverse_normal_cdf(0.0).is_err());
        assert!(inverse_normal_cdf(1.0).is_err());
    }

    #[test]
    fn spearman_monotone_and_ties() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let up = [10.0, 20.0, 25.0, 100.0];
        let down = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&a, &up).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &down).unwrap() + 1.0).abs() < 1e-12);
        let tied = [1.0, 1.0, 2.0, 3.0];
        let r = spearman(&tied, &a).unwrap();
        assert!(r > 0.9 && r <= 1.0);
        assert!(spearman(&[1.0, 1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn quantile_basics() {
        let d = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&d, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&d, 0.5).unwrap(), 3.0);
        assert_eq!(quantile(&d, 1.0).unwrap(), 5.0);
        let q = quantile(&[1.0, 2.0, 3.0, 4.0], 0.25).unwrap();
        assert!((q - 1.75).abs() < 1e-15);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn finite_vec(min_len: usize, max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-40.0_f64..40.0, min_len..=max_len)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        // Shift equivariance: lse(v + c) = lse(v) + c.
        #[test]
        fn lse_shift_equivariance(v in finite_vec(1, 64), c in -500.0_f64..500.0) {
            let base = log_sum_exp(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let got = log_sum_exp(&shifted).unwrap();
            let want = base + c;
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }

        // The empirical mean-median inequality holds on every batch for both orders.
        #[test]
        fn mean_median_bounded_by_deviations(v in finite_vec(1, 200)) {
            let s = dispersion_of(&v);
            let lhs = (s.mean - s.median).abs();
            prop_assert!(lhs <= s.mean_abs_dev + 1e-12);
            prop_assert!(lhs <= s.std + 1e-12);
        }

        // L1 deviation never exceeds L2 deviation.
        #[test]
        fn l1_below_l2(v in finite_vec(1, 200)) {
            let s = dispersion_of(&v);
            prop_assert!(s.mean_abs_dev <= s.std + 1e-12);
        }

        // Median ignores input order.
        #[test]
        fn median_permutation_invariant(v in finite_vec(1, 64), seed in 0u64..1000) {
            let base = empirical_median(&v).unwrap();
            let mut shuffled = v.clone();
            // deterministic pseudo-shuffle
            let n = shuffled.len();
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            prop_assert_eq!(empirical_median(&shuffled).unwrap(), base);
        }

        // Y-scale normalizer shifts the center and leaves deviations alone.
        #[test]
        fn normalizer_shift_property(v in finite_vec(1, 64), c in 0.01_f64..100.0) {
            let b = LogWeightBatch::new(v, 0, Coupling::Iid).unwrap();
            let plain = dispersion_stats(&b, Scale::Y, None).unwrap();
            let norm = dispersion_stats(&b, Scale::Y, Some(c)).unwrap();
            prop_assert!((norm.mean - (plain.mean - c.ln())).abs() <= 1e-12);
            prop_assert!((norm.median - (plain.median - c.ln())).abs() <= 1e-12);
            prop_assert!((norm.std - plain.std).abs() <= 1e-12);
            prop_assert!((norm.mean_abs_dev - plain.mean_abs_dev).abs() <= 1e-12);
        }
    }
}
