//! Tractable latent-variable models with exact log-evidence and exact
//! posteriors.
//!
//! Every model here doubles as a ground-truth oracle: the quantity the
//! estimators chase (`log p(v)`) is available in closed form, so bias,
//! gap and bound claims can be checked without self-referential baselines.
//!
//! Sampling is fully deterministic. Each batch draws from a ChaCha8 stream
//! seeded explicitly; the standardized draws are shaped by the requested
//! [`Coupling`] and mapped through the model, so identical
//! `(seed, n, coupling, params)` reproduce bit-identical batches on every
//! platform.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stats::{inverse_normal_cdf, Coupling, LogWeightBatch};

/// A distribution of log likelihood-ratios with known exact evidence.
///
/// Implementors map a standardized normal draw `eps` to one log-weight
/// `y = log(p/q)` such that `E[exp(y)] = exp(log_evidence())` regardless of
/// the coupling applied to the `eps` stream.
pub trait ImportanceModel {
    /// Dimension of the standard-normal draw behind one sample.
    fn eps_dim(&self) -> usize;

    /// Log-weight of one standardized draw.
    fn log_weight(&self, eps: &[f64]) -> f64;

    /// Exact `log p(v)`, the quantity `exp(log_weight)` estimates unbiasedly.
    fn log_evidence(&self) -> f64;
}

/// Synthetic positive estimator `X = exp(Y)` with `Y ~ Normal(m, s^2)`.
///
/// Every quantity of interest is closed-form, which makes this the
/// benchmark of choice for bound and rate checks:
/// gap `= s^2/2`, `mu_x = exp(m + s^2/2)`, `nu_x = exp(m)`,
/// `sigma_x = mu_x * sqrt(exp(s^2) - 1)`, `mu_y = nu_y = m`, `sigma_y = s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalRatioModel {
    m: f64,
    s: f64,
}

impl LogNormalRatioModel {
    pub fn new(m: f64, s: f64) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::NonFiniteInput {
                context: "LogNormalRatioModel location",
                value: m,
            });
        }
        if !s.is_finite() || s < 0.0 {
            return Err(Error::NonFiniteInput {
                context: "LogNormalRatioModel scale (must be finite and >= 0)",
                value: s,
            });
        }
        Ok(Self { m, s })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Exact variational gap `log E[X] - E[log X] = s^2 / 2`.
    pub fn exact_gap(&self) -> f64 {
        0.5 * self.s * self.s
    }

    pub fn mu_x(&self) -> f64 {
        (self.m + 0.5 * self.s * self.s).exp()
    }

    pub fn nu_x(&self) -> f64 {
        self.m.exp()
    }

    pub fn sigma_x(&self) -> f64 {
        self.mu_x() * ((self.s * self.s).exp() - 1.0).sqrt()
    }

    pub fn mu_y(&self) -> f64 {
        self.m
    }

    pub fn nu_y(&self) -> f64 {
        self.m
    }

    pub fn sigma_y(&self) -> f64 {
        self.s
    }

    /// The evidence this estimator targets: `p(v) = mu_x`.
    pub fn evidence(&self) -> f64 {
        self.mu_x()
    }
}

impl ImportanceModel for LogNormalRatioModel {
    fn eps_dim(&self) -> usize {
        1
    }

    fn log_weight(&self, eps: &[f64]) -> f64 {
        self.m + self.s * eps[0]
    }

    fn log_evidence(&self) -> f64 {
        self.m + 0.5 * self.s * self.s
    }
}

/// Linear-Gaussian latent variable model.
///
/// Prior `h ~ N(0, I)`, likelihood `v | h ~ N(A h, sigma^2 I)`. The
/// evidence is `N(v; 0, A A^T + sigma^2 I)` and the posterior over `h` is
/// Gaussian. All solves go through the `d_h x d_h` precision
/// `Lambda = I + A^T A / sigma^2` rather than the `d_v x d_v` form.
#[derive(Debug, Clone)]
pub struct GaussianLinearModel {
    a: DMatrix<f64>,
    obs_noise_std: f64,
    v: DVector<f64>,
    lambda: DMatrix<f64>,
    lambda_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_det_lambda: f64,
    posterior_mean: DVector<f64>,
    log_evidence: f64,
}

impl GaussianLinearModel {
    pub fn new(a: DMatrix<f64>, obs_noise_std: f64, v: DVector<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::ShapeError {
                context: "GaussianLinearModel weights (need d_v, d_h >= 1)",
                expected: 1,
                got: 0,
            });
        }
        if v.len() != a.nrows() {
            return Err(Error::ShapeError {
                context: "GaussianLinearModel observation",
                expected: a.nrows(),
                got: v.len(),
            });
        }
        if !obs_noise_std.is_finite() || obs_noise_std <= 0.0 {
            return Err(Error::NonFiniteInput {
                context: "GaussianLinearModel obs_noise_std (must be finite and > 0)",
                value: obs_noise_std,
            });
        }
        if let Some(&bad) = a.iter().chain(v.iter()).find(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput {
                context: "GaussianLinearModel parameters",
                value: bad,
            });
        }

        let d_v = a.nrows();
        let d_h = a.ncols();
        let sigma2 = obs_noise_std * obs_noise_std;
        let lambda = DMatrix::identity(d_h, d_h) + a.transpose() * &a / sigma2;
        let lambda_chol = nalgebra::Cholesky::new(lambda.clone()).ok_or(
            Error::NumericalFailure("latent precision is not positive definite"),
        )?;
        let log_det_lambda = 2.0
            * lambda_chol
                .l()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();

        let at_v = a.transpose() * &v;
        let posterior_mean = lambda_chol.solve(&(&at_v / sigma2));

        // log N(v; 0, A A^T + sigma^2 I) through the d_h-sized solve:
        // det(S) = sigma^(2 d_v) det(Lambda), and by push-through
        // v^T S^-1 v = (v.v - (A^T v)^T Lambda^-1 (A^T v) / sigma^2) / sigma^2.
        let quad = (v.dot(&v) - at_v.dot(&lambda_chol.solve(&at_v)) / sigma2) / sigma2;
        let log_evidence = -0.5
            * (d_v as f64 * (2.0 * std::f64::consts::PI).ln()
                + 2.0 * d_v as f64 * obs_noise_std.ln()
                + log_det_lambda
                + quad);

        Ok(Self {
            a,
            obs_noise_std,
            v,
            lambda,
            lambda_chol,
            log_det_lambda,
            posterior_mean,
            log_evidence,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn obs_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn obs_noise_std(&self) -> f64 {
        self.obs_noise_std
    }

    pub fn observation(&self) -> &DVector<f64> {
        &self.v
    }

    /// Exact `log p(v) = log N(v; 0, A A^T + sigma^2 I)`.
    pub fn exact_log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn posterior_mean(&self) -> &DVector<f64> {
        &self.posterior_mean
    }

    /// Exact posterior covariance `Lambda^{-1}`.
    pub fn posterior_cov(&self) -> DMatrix<f64> {
        self.lambda_chol.inverse()
    }

    /// Diagonal proposal matching the posterior mean and marginal standard
    /// deviations. Equals the exact posterior whenever the posterior is
    /// diagonal (d_h = 1 or orthogonal columns of A).
    pub fn posterior_proposal(&self) -> ProposalParams {
        let cov = self.posterior_cov();
        let log_scale = DVector::from_iterator(
            self.latent_dim(),
            cov.diagonal().iter().map(|var| 0.5 * var.ln()),
        );
        ProposalParams::new(self.posterior_mean.clone(), log_scale)
            .expect("posterior moments are finite")
    }

    /// Exact variational gap `KL(q || p(h|v))` of a diagonal Gaussian
    /// proposal; zero iff the proposal equals the posterior.
    pub fn exact_elbo_gap(&self, q: &ProposalParams) -> Result<f64> {
        let d = self.latent_dim();
        if q.dim() != d {
            return Err(Error::ShapeError {
                context: "exact_elbo_gap proposal",
                expected: d,
                got: q.dim(),
            });
        }
        let scale = q.scale();
        let delta = &self.posterior_mean - q.loc();
        let trace_term: f64 = (0..d)
            .map(|i| self.lambda[(i, i)] * scale[i] * scale[i])
            .sum();
        let quad = delta.dot(&(&self.lambda * &delta));
        let log_det_q: f64 = 2.0 * q.log_scale().iter().sum::<f64>();
        Ok(0.5 * (trace_term + quad - d as f64 - self.log_det_lambda - log_det_q))
    }
}

/// Diagonal Gaussian proposal `q(h) = N(loc, diag(exp(log_scale))^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalParams {
    loc: DVector<f64>,
    log_scale: DVector<f64>,
}

impl ProposalParams {
    pub fn new(loc: DVector<f64>, log_scale: DVector<f64>) -> Result<Self> {
        if loc.len() != log_scale.len() {
            return Err(Error::ShapeError {
                context: "ProposalParams",
                expected: loc.len(),
                got: log_scale.len(),
            });
        }
        if loc.is_empty() {
            return Err(Error::ShapeError {
                context: "ProposalParams (need dim >= 1)",
                expected: 1,
                got: 0,
            });
        }
        if let Some(&bad) = loc.iter().chain(log_scale.iter()).find(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput {
                context: "ProposalParams",
                value: bad,
            });
        }
        Ok(Self { loc, log_scale })
    }

    /// Proposal with every coordinate at `(loc_value, scale_value)`.
    pub fn isotropic(dim: usize, loc_value: f64, scale_value: f64) -> Result<Self> {
        if scale_value <= 0.0 {
            return Err(Error::NonFiniteInput {
                context: "ProposalParams scale (must be > 0)",
                value: scale_value,
            });
        }
        Self::new(
            DVector::from_element(dim, loc_value),
            DVector::from_element(dim, scale_value.ln()),
        )
    }

    pub fn dim(&self) -> usize {
        self.loc.len()
    }

    pub fn loc(&self) -> &DVector<f64> {
        &self.loc
    }

    pub fn log_scale(&self) -> &DVector<f64> {
        &self.log_scale
    }

    pub fn scale(&self) -> DVector<f64> {
        self.log_scale.map(f64::exp)
    }
}

/// A Gaussian model paired with a proposal: the importance sampler whose
/// weights are `p(v, h) / q(h)` with `h = loc + scale .* eps`.
#[derive(Debug, Clone)]
pub struct GaussianImportance<'a> {
    model: &'a GaussianLinearModel,
    proposal: &'a ProposalParams,
    scale: Vec<f64>,
    sum_log_scale: f64,
}

impl<'a> GaussianImportance<'a> {
    pub fn new(model: &'a GaussianLinearModel, proposal: &'a ProposalParams) -> Result<Self> {
        if proposal.dim() != model.latent_dim() {
            return Err(Error::ShapeError {
                context: "GaussianImportance proposal",
                expected: model.latent_dim(),
                got: proposal.dim(),
            });
        }
        Ok(Self {
            model,
            proposal,
            scale: proposal.log_scale.iter().map(|l| l.exp()).collect(),
            sum_log_scale: proposal.log_scale.iter().sum(),
        })
    }

    pub fn model(&self) -> &GaussianLinearModel {
        self.model
    }

    pub fn proposal(&self) -> &ProposalParams {
        self.proposal
    }
}

impl ImportanceModel for GaussianImportance<'_> {
    fn eps_dim(&self) -> usize {
        self.model.latent_dim()
    }

    fn log_weight(&self, eps: &[f64]) -> f64 {
        let d_h = self.model.latent_dim();
        let d_v = self.model.obs_dim();
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let sigma = self.model.obs_noise_std;

        let mut h = vec![0.0; d_h];
        let mut h_sq = 0.0;
        let mut eps_sq = 0.0;
        for i in 0..d_h {
            let hi = self.proposal.loc[i] + self.scale[i] * eps[i];
            h[i] = hi;
            h_sq += hi * hi;
            eps_sq += eps[i] * eps[i];
        }

        let mut resid_sq = 0.0;
        for r in 0..d_v {
            let mut ah = 0.0;
            for (c, hc) in h.iter().enumerate() {
                ah += self.model.a[(r, c)] * hc;
            }
            let resid = self.model.v[r] - ah;
            resid_sq += resid * resid;
        }

        let log_prior = -0.5 * (d_h as f64 * ln_2pi + h_sq);
        let log_lik = -0.5 * (d_v as f64 * ln_2pi)
            - d_v as f64 * sigma.ln()
            - 0.5 * resid_sq / (sigma * sigma);
        // q evaluated through the standardization: (h - loc)/scale = eps.
        let log_q = -0.5 * (d_h as f64 * ln_2pi + eps_sq) - self.sum_log_scale;
        log_prior + log_lik - log_q
    }

    fn log_evidence(&self) -> f64 {
        self.model.log_evidence
    }
}

/// Standardized-normal draw source shaped by a coupling.
///
/// Antithetic emits reflected pairs `(eps, -eps)` at consecutive indices.
/// Stratified splits the first coordinate of a length-`total` batch into
/// `total` equal-probability strata with uniform jitter inside each
/// stratum, so every draw keeps the exact standard-normal marginal.
pub(crate) struct EpsSource {
    rng: ChaCha8Rng,
    coupling: Coupling,
    total: usize,
    dim: usize,
    index: usize,
    reflect: Vec<f64>,
}

impl EpsSource {
    pub(crate) fn new(seed: u64, coupling: Coupling, total: usize, dim: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::InvalidBatchSpec("batch size must be >= 1".into()));
        }
        if coupling == Coupling::Antithetic && !total.is_multiple_of(2) {
            return Err(Error::InvalidBatchSpec(format!(
                "antithetic coupling needs an even batch size, got {total}"
            )));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            coupling,
            total,
            dim,
            index: 0,
            reflect: vec![0.0; dim],
        })
    }

    /// Writes the next standardized draw into `out`; panics past `total`.
    pub(crate) fn fill_next(&mut self, out: &mut [f64]) {
        assert!(self.index < self.total, "EpsSource exhausted");
        debug_assert_eq!(out.len(), self.dim);
        match self.coupling {
            Coupling::Iid => {
                for slot in out.iter_mut() {
                    *slot = self.rng.sample(StandardNormal);
                }
            }
            Coupling::Antithetic => {
                if self.index.is_multiple_of(2) {
                    for (slot, keep) in out.iter_mut().zip(self.reflect.iter_mut()) {
                        let z: f64 = self.rng.sample(StandardNormal);
                        *slot = z;
                        *keep = z;
                    }
                } else {
                    for (slot, kept) in out.iter_mut().zip(self.reflect.iter()) {
                        *slot = -kept;
                    }
                }
            }
            Coupling::Stratified => {
                let u: f64 = self.rng.random();
                let p = ((self.index as f64 + u) / self.total as f64).clamp(1e-300, 1.0 - 1e-16);
                out[0] = inverse_normal_cdf(p).expect("p clamped into (0,1)");
                for slot in out.iter_mut().skip(1) {
                    *slot = self.rng.sample(StandardNormal);
                }
            }
        }
        self.index += 1;
    }
}

/// Iterator over the `n` log-weights of one batch, in draw order.
pub struct LogWeightStream<'a, M: ImportanceModel + ?Sized> {
    model: &'a M,
    eps: EpsSource,
    buf: Vec<f64>,
    remaining: usize,
}

impl<'a, M: ImportanceModel + ?Sized> LogWeightStream<'a, M> {
    pub fn new(model: &'a M, n: usize, seed: u64, coupling: Coupling) -> Result<Self> {
        let dim = model.eps_dim();
        Ok(Self {
            model,
            eps: EpsSource::new(seed, coupling, n, dim)?,
            buf: vec![0.0; dim],
            remaining: n,
        })
    }
}

impl<M: ImportanceModel + ?Sized> Iterator for LogWeightStream<'_, M> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        self.eps.fill_next(&mut self.buf);
        Some(self.model.log_weight(&self.buf))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// Draws `n` log-weights under the requested coupling.
///
/// Deterministic in `(seed, n, coupling)` and the model parameters; each
/// sample is marginally distributed as in the iid case, so `exp(y)` stays
/// an unbiased estimator of the evidence under every coupling.
pub fn sample_log_weights<M: ImportanceModel + ?Sized>(
    model: &M,
    n: usize,
    seed: u64,
    coupling: Coupling,
) -> Result<LogWeightBatch> {
    let values: Vec<f64> = LogWeightStream::new(model, n, seed, coupling)?.collect();
    LogWeightBatch::new(values, seed, coupling)
}
