//! ELBO and K-sample lower-bound estimators, bias/variance sweeps over K,
//! and coupling comparisons.
//!
//! Sweeps use common random numbers: every replication draws one pooled
//! weight vector of size `max(k_grid)` which is re-blocked for each `k`, so
//! comparisons across `k` are paired. Standard errors are always computed
//! across replications (pools), never across the blocks inside one pool.
//! Reductions are sequential and deterministic given the seed.

use crate::error::{Error, Result};
use crate::models::{sample_log_weights, ImportanceModel, LogWeightStream};
use crate::seeding::derive_stream_seed;
use crate::stats::{
    log_sum_exp_pair, quantile_of_sorted, Coupling, LogWeightBatch, RunningMoments,
};

/// Inner average size, replication count, seed and coupling of one
/// Monte Carlo estimation run; total sample demand is `k * replications`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub k: usize,
    pub replications: usize,
    pub seed: u64,
    pub coupling: Coupling,
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidBatchSpec("k must be >= 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidBatchSpec("replications must be >= 1".into()));
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.k * self.replications
    }
}

/// Point estimate of a lower bound with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateResult {
    pub value: f64,
    /// Sample std of the per-replication values divided by sqrt(R).
    pub std_error: f64,
    pub k: usize,
    pub replications: usize,
}

/// ELBO estimate: the mean log-weight (the K = 1 case).
pub fn elbo_estimate(batch: &LogWeightBatch) -> EstimateResult {
    let mut acc = RunningMoments::new();
    for &y in batch.log_weights() {
        acc.push(y);
    }
    EstimateResult {
        value: acc.mean(),
        std_error: acc.se_of_mean(),
        k: 1,
        replications: batch.len(),
    }
}

/// Reduces a batch to its K-sample averaged estimator values:
/// consecutive disjoint blocks of size `k`, each mapped to
/// `log_sum_exp(block) - log k`.
///
/// The batch length must be divisible by `k`. For antithetic batches `k`
/// must be even (or 1), so reflected pairs never straddle block boundaries
/// and the within-block anti-correlation is preserved.
pub fn iwlb_samples(batch: &LogWeightBatch, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidBatchSpec("k must be >= 1".into()));
    }
    if !batch.len().is_multiple_of(k) {
        return Err(Error::InvalidBatchSpec(format!(
            "batch length {} is not divisible by k = {k}",
            batch.len()
        )));
    }
    if batch.coupling() == Coupling::Antithetic && k > 1 && !k.is_multiple_of(2) {
        return Err(Error::InvalidBatchSpec(format!(
            "antithetic pairs must not straddle blocks: k = {k} is odd"
        )));
    }
    if k == 1 {
        return Ok(batch.log_weights().to_vec());
    }
    let ln_k = (k as f64).ln();
    Ok(batch
        .log_weights()
        .chunks_exact(k)
        .map(|block| block_lse(block) - ln_k)
        .collect())
}

/// Flat max-shift log-sum-exp of one block (finite, non-empty by contract).
fn block_lse(block: &[f64]) -> f64 {
    debug_assert!(!block.is_empty());
    if block.len() == 1 {
        return block[0];
    }
    let m = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = block.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

/// Draws `k * replications` weights and reduces them to the K-sample
/// lower-bound estimate with across-replication standard error.
pub fn iwlb_estimate<M: ImportanceModel + ?Sized>(
    model: &M,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    cfg.validate()?;
    let batch = sample_log_weights(model, cfg.total_samples(), cfg.seed, cfg.coupling)?;
    let ys = iwlb_samples(&batch, cfg.k)?;
    let mut acc = RunningMoments::new();
    for &y in &ys {
        acc.push(y);
    }
    Ok(EstimateResult {
        value: acc.mean(),
        std_error: acc.se_of_mean(),
        k: cfg.k,
        replications: ys.len(),
    })
}

/// Streams `blocks` disjoint K-blocks and returns their estimator values
/// without materializing the weight pool. Equals
/// `iwlb_samples(sample_log_weights(...), k)` for the same arguments.
pub fn iwlb_block_values<M: ImportanceModel + ?Sized>(
    model: &M,
    k: usize,
    blocks: usize,
    seed: u64,
    coupling: Coupling,
) -> Result<Vec<f64>> {
    if k == 0 || blocks == 0 {
        return Err(Error::InvalidBatchSpec(
            "k and blocks must both be >= 1".into(),
        ));
    }
    if coupling == Coupling::Antithetic && k > 1 && !k.is_multiple_of(2) {
        return Err(Error::InvalidBatchSpec(format!(
            "antithetic pairs must not straddle blocks: k = {k} is odd"
        )));
    }
    let mut stream = LogWeightStream::new(model, k * blocks, seed, coupling)?;
    let ln_k = (k as f64).ln();
    let mut block = vec![0.0; k];
    let mut out = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        for slot in block.iter_mut() {
            *slot = stream.next().expect("stream sized to k * blocks");
        }
        out.push(block_lse(&block) - ln_k);
    }
    Ok(out)
}

/// One row of a bias/variance sweep at a fixed `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    /// Mean of the Y_K estimator values.
    pub estimate: f64,
    /// Across-replication standard error of `estimate`.
    pub std_error: f64,
    /// Oracle gap: exact log-evidence minus `estimate`.
    pub gap: f64,
    /// Empirical variance of the evidence-normalized X_K = exp(Y_K - log p(v)).
    pub var_x: f64,
    /// Empirical variance of Y_K.
    pub var_y: f64,
    /// Number of K-blocks behind the row.
    pub blocks: usize,
}

/// Paired comparison of adjacent levels `k -> 2k` built by merging the two
/// K-blocks of each 2K-block, from the same pooled weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergePairStat {
    pub k_from: usize,
    pub k_to: usize,
    /// Mean of `Y_2K - (Y_K + Y_K')/2` over merged pairs.
    pub mean_diff: f64,
    /// Across-replication standard error of `mean_diff`.
    pub se_diff: f64,
    pub pairs: usize,
}

/// Common-random-number sweep over a divisibility chain of K values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Paired merge statistics for every adjacent grid transition with
    /// ratio exactly 2.
    pub merge_pairs: Vec<MergePairStat>,
    pub budget: usize,
    pub seed: u64,
    pub coupling: Coupling,
}

/// Estimates the gap and the dispersion of Y_K and X_K over `k_grid` from a
/// shared sample budget.
///
/// Each replication draws one pooled weight vector of size `max(k_grid)`
/// (seeded per replication) and re-blocks it for every `k`, so the grid
/// must form a divisibility chain (`k[i]` divides `k[i+1]`) and the budget
/// must be a multiple of `max(k_grid)`. Estimates and standard errors are
/// across replications; `var_x`/`var_y` pool all blocks.
pub fn bias_variance_sweep<M: ImportanceModel + ?Sized>(
    model: &M,
    k_grid: &[usize],
    budget: usize,
    seed: u64,
    coupling: Coupling,
) -> Result<SweepResult> {
    if k_grid.is_empty() {
        return Err(Error::InvalidBatchSpec("empty k grid".into()));
    }
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid[0] == 0 {
        return Err(Error::InvalidBatchSpec("k values must be >= 1".into()));
    }
    for w in grid.windows(2) {
        if w[1] % w[0] != 0 {
            return Err(Error::InvalidBatchSpec(format!(
                "k grid must form a divisibility chain for common-random-number re-blocking; \
                 {} does not divide {}",
                w[0], w[1]
            )));
        }
    }
    let pool = *grid.last().expect("non-empty grid");
    if !budget.is_multiple_of(pool) || budget == 0 {
        return Err(Error::InvalidBatchSpec(format!(
            "budget {budget} is not a positive multiple of max k = {pool}"
        )));
    }
    if coupling == Coupling::Antithetic {
        if !pool.is_multiple_of(2) {
            return Err(Error::InvalidBatchSpec(
                "antithetic sweeps need an even pool size".into(),
            ));
        }
        // Reflected pairs sit at (2i, 2i+1); odd blocks above k = 1 would
        // straddle them.
        if let Some(&bad) = grid.iter().find(|&&k| k > 1 && !k.is_multiple_of(2)) {
            return Err(Error::InvalidBatchSpec(format!(
                "antithetic pairs must not straddle blocks: k = {bad} is odd"
            )));
        }
    }
    let replications = budget / pool;
    if replications < 2 {
        return Err(Error::InvalidBatchSpec(
            "budget must cover at least two replications for standard errors".into(),
        ));
    }

    let log_z = model.log_evidence();
    let levels = grid.len();
    // Per-level accumulators: across-replication mean, pooled block moments.
    let mut pool_means = vec![RunningMoments::new(); levels];
    let mut y_moments = vec![RunningMoments::new(); levels];
    let mut x_moments = vec![RunningMoments::new(); levels];
    // Merge-pair accumulators, one per ratio-2 transition.
    let mut pair_means: Vec<Option<RunningMoments>> = grid
        .windows(2)
        .map(|w| (w[1] == 2 * w[0]).then(RunningMoments::new))
        .collect();

    let mut pool_buf = vec![0.0; pool];
    let mut level_vals: Vec<Vec<f64>> = grid.iter().map(|k| vec![0.0; pool / k]).collect();

    for r in 0..replications {
        let rep_seed = derive_stream_seed(seed, "sweep", r as u64);
        let mut stream = LogWeightStream::new(model, pool, rep_seed, coupling)?;
        for slot in pool_buf.iter_mut() {
            *slot = stream.next().expect("stream sized to pool");
        }

        // Base level by flat blockwise reduction.
        let k0 = grid[0];
        let ln_k0 = (k0 as f64).ln();
        for (j, block) in pool_buf.chunks_exact(k0).enumerate() {
            level_vals[0][j] = block_lse(block) - ln_k0;
        }
        // Higher levels merge the previous level.
        for lvl in 1..levels {
            let ratio = grid[lvl] / grid[lvl - 1];
            let ln_ratio = (ratio as f64).ln();
            let (lo, hi) = level_vals.split_at_mut(lvl);
            let prev = &lo[lvl - 1];
            let cur = &mut hi[0];
            for (j, chunk) in prev.chunks_exact(ratio).enumerate() {
                cur[j] = if ratio == 2 {
                    log_sum_exp_pair(chunk[0], chunk[1]) - ln_ratio
                } else {
                    block_lse(chunk) - ln_ratio
                };
            }
        }

        for lvl in 0..levels {
            let mut rep_mean = RunningMoments::new();
            for &y in &level_vals[lvl] {
                rep_mean.push(y);
                y_moments[lvl].push(y);
                x_moments[lvl].push((y - log_z).exp());
            }
            pool_means[lvl].push(rep_mean.mean());
        }
        for (t, acc) in pair_means.iter_mut().enumerate() {
            if let Some(acc) = acc {
                let mut rep_diff = RunningMoments::new();
                let fine = &level_vals[t];
                let coarse = &level_vals[t + 1];
                for (j, &merged) in coarse.iter().enumerate() {
                    rep_diff.push(merged - 0.5 * (fine[2 * j] + fine[2 * j + 1]));
                }
                acc.push(rep_diff.mean());
            }
        }
    }

    let rows = grid
        .iter()
        .enumerate()
        .map(|(lvl, &k)| SweepRow {
            k,
            estimate: pool_means[lvl].mean(),
            std_error: pool_means[lvl].se_of_mean(),
            gap: log_z - pool_means[lvl].mean(),
            var_x: x_moments[lvl].sample_var(),
            var_y: y_moments[lvl].sample_var(),
            blocks: y_moments[lvl].count() as usize,
        })
        .collect();
    let merge_pairs = pair_means
        .iter()
        .enumerate()
        .filter_map(|(t, acc)| {
            acc.as_ref().map(|acc| MergePairStat {
                k_from: grid[t],
                k_to: grid[t + 1],
                mean_diff: acc.mean(),
                se_diff: acc.se_of_mean(),
                pairs: y_moments[t + 1].count() as usize,
            })
        })
        .collect();

    Ok(SweepResult {
        rows,
        merge_pairs,
        budget,
        seed,
        coupling,
    })
}

/// Per-replication estimator values of a coupling: replication `r` draws
/// its own batch of size `k` under `coupling` (so strata and reflected
/// pairs live inside the block) and reduces it to one Y_K value.
///
/// Replication seeds are shared across couplings for the same base seed,
/// which makes cross-coupling comparisons paired.
pub fn coupling_block_values<M: ImportanceModel + ?Sized>(
    model: &M,
    k: usize,
    replications: usize,
    coupling: Coupling,
    seed: u64,
) -> Result<Vec<f64>> {
    if k == 0 || replications == 0 {
        return Err(Error::InvalidBatchSpec(
            "k and replications must both be >= 1".into(),
        ));
    }
    let ln_k = (k as f64).ln();
    let mut block = vec![0.0; k];
    let mut out = Vec::with_capacity(replications);
    for r in 0..replications {
        let rep_seed = derive_stream_seed(seed, "couple", r as u64);
        let mut stream = LogWeightStream::new(model, k, rep_seed, coupling)?;
        for slot in block.iter_mut() {
            *slot = stream.next().expect("stream sized to k");
        }
        out.push(block_lse(&block) - ln_k);
    }
    Ok(out)
}

/// Summary of one coupling in a comparison run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupleRow {
    pub coupling: Coupling,
    pub k: usize,
    pub replications: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub gap: f64,
    /// Variance of the evidence-normalized X_K across replications.
    pub var_x: f64,
    pub var_y: f64,
}

/// Compares couplings at a fixed K with shared per-replication seeds.
pub fn couple_compare<M: ImportanceModel + ?Sized>(
    model: &M,
    k: usize,
    replications: usize,
    couplings: &[Coupling],
    seed: u64,
) -> Result<Vec<CoupleRow>> {
    let log_z = model.log_evidence();
    couplings
        .iter()
        .map(|&coupling| {
            let ys = coupling_block_values(model, k, replications, coupling, seed)?;
            let mut y_acc = RunningMoments::new();
            let mut x_acc = RunningMoments::new();
            for &y in &ys {
                y_acc.push(y);
                x_acc.push((y - log_z).exp());
            }
            Ok(CoupleRow {
                coupling,
                k,
                replications,
                estimate: y_acc.mean(),
                std_error: y_acc.se_of_mean(),
                gap: log_z - y_acc.mean(),
                var_x: x_acc.sample_var(),
                var_y: y_acc.sample_var(),
            })
        })
        .collect()
}

/// Bootstrap quantile of `var(a*) - var(b*)` under independent resampling
/// of `a` and `b` with replacement. An upper quantile below zero certifies
/// `var(a) < var(b)` at that confidence level.
pub fn bootstrap_var_diff_quantile(
    a: &[f64],
    b: &[f64],
    prob: f64,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::EmptyBatch(
            "bootstrap needs at least two samples per arm",
        ));
    }
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::NonFiniteInput {
            context: "bootstrap quantile",
            value: prob,
        });
    }
    if resamples == 0 {
        return Err(Error::InvalidBatchSpec("resamples must be >= 1".into()));
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut diffs = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut va = RunningMoments::new();
        for _ in 0..a.len() {
            va.push(a[rng.random_range(0..a.len())]);
        }
        let mut vb = RunningMoments::new();
        for _ in 0..b.len() {
            vb.push(b[rng.random_range(0..b.len())]);
        }
        diffs.push(va.sample_var() - vb.sample_var());
    }
    diffs.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite variances"));
    Ok(quantile_of_sorted(&diffs, prob))
}
