//! Flat dotted-key run configuration.
//!
//! Config files are plain text, one `key = value` per line, `#` comments.
//! Command-line `--set key=value` overrides win over the file, and
//! `--seed` wins over both. Parse errors carry the offending line or
//! field so runs are diff-friendly and failures are attributable.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use gapcheck_core::models::{GaussianLinearModel, LogNormalRatioModel, ProposalParams};
use gapcheck_core::stats::Coupling;

/// A config error; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type ConfigResult<T> = Result<T, ConfigError>;

/// Raw key-value table with per-key origin for error messages.
#[derive(Debug, Default, Clone)]
pub struct KeyTable {
    entries: BTreeMap<String, (String, String)>,
}

impl KeyTable {
    /// Parses `key = value` lines; reports the line number on failure.
    pub fn parse_file(text: &str, path: &str) -> ConfigResult<Self> {
        let mut table = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "{path}:{}: expected 'key = value', got '{line}'",
                    idx + 1
                )));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError(format!("{path}:{}: empty key", idx + 1)));
            }
            table.entries.insert(
                key.to_string(),
                (value.trim().to_string(), format!("{path}:{}", idx + 1)),
            );
        }
        Ok(table)
    }

    /// Applies one `--set key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> ConfigResult<()> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(ConfigError(format!(
                "--set '{assignment}': expected key=value"
            )));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError(format!("--set '{assignment}': empty key")));
        }
        self.entries.insert(
            key.to_string(),
            (value.trim().to_string(), format!("--set {key}")),
        );
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: String, origin: &str) {
        self.entries
            .insert(key.to_string(), (value, origin.to_string()));
    }

    fn raw(&self, key: &str) -> Option<&(String, String)> {
        self.entries.get(key)
    }

    fn parse_with<T, F>(&self, key: &str, what: &str, f: F) -> ConfigResult<Option<T>>
    where
        F: FnOnce(&str) -> Result<T, String>,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((value, origin)) => f(value)
                .map(Some)
                .map_err(|e| ConfigError(format!("field '{key}' ({origin}): invalid {what}: {e}"))),
        }
    }

    pub fn get_f64(&self, key: &str) -> ConfigResult<Option<f64>> {
        self.parse_with(key, "number", |v| {
            v.parse::<f64>().map_err(|e| format!("'{v}': {e}"))
        })
    }

    pub fn get_u64(&self, key: &str) -> ConfigResult<Option<u64>> {
        self.parse_with(key, "integer", |v| {
            v.parse::<u64>().map_err(|e| format!("'{v}': {e}"))
        })
    }

    pub fn get_usize(&self, key: &str) -> ConfigResult<Option<usize>> {
        self.parse_with(key, "integer", |v| {
            v.parse::<usize>().map_err(|e| format!("'{v}': {e}"))
        })
    }

    pub fn get_string(&self, key: &str) -> Option<String> {
        self.raw(key).map(|(v, _)| v.clone())
    }

    pub fn get_coupling(&self, key: &str) -> ConfigResult<Option<Coupling>> {
        self.parse_with(key, "coupling", |v| v.parse::<Coupling>())
    }

    /// Comma-separated reals: `0.5, 1, -2`.
    pub fn get_vec_f64(&self, key: &str) -> ConfigResult<Option<Vec<f64>>> {
        self.parse_with(key, "vector", parse_vec_f64)
    }

    /// Comma-separated positive integers: `1,4,16,64`.
    pub fn get_vec_usize(&self, key: &str) -> ConfigResult<Option<Vec<usize>>> {
        self.parse_with(key, "integer list", |v| {
            v.split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|e| format!("'{t}': {e}")))
                .collect()
        })
    }

    /// Rows separated by ';', entries by ',': `1,0;0,1`.
    pub fn get_matrix(&self, key: &str) -> ConfigResult<Option<Vec<Vec<f64>>>> {
        self.parse_with(key, "matrix", |v| {
            let rows: Result<Vec<Vec<f64>>, String> = v.split(';').map(parse_vec_f64).collect();
            let rows = rows?;
            if rows.is_empty() || rows[0].is_empty() {
                return Err("matrix must have at least one entry".into());
            }
            let width = rows[0].len();
            if rows.iter().any(|r| r.len() != width) {
                return Err("matrix rows have unequal lengths".into());
            }
            Ok(rows)
        })
    }

    /// Unknown-key guard: every key must belong to the documented set.
    pub fn check_known_keys(&self, known: &[&str]) -> ConfigResult<()> {
        for (key, (_, origin)) in &self.entries {
            if !known.contains(&key.as_str()) {
                let mut msg = format!("unknown field '{key}' ({origin}); known fields:");
                for k in known {
                    let _ = write!(msg, " {k}");
                }
                return Err(ConfigError(msg));
            }
        }
        Ok(())
    }
}

fn parse_vec_f64(v: &str) -> Result<Vec<f64>, String> {
    v.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect()
}

/// Which tractable model a run works on.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    LogNormal {
        m: f64,
        s: f64,
    },
    Gaussian {
        a: Vec<Vec<f64>>,
        obs_noise_std: f64,
        v: Vec<f64>,
    },
}

/// Fully-resolved run configuration with defaults applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSpec,
    pub proposal_loc: Option<Vec<f64>>,
    pub proposal_log_scale: Option<Vec<f64>>,
    pub estimator_k: usize,
    pub estimator_replications: usize,
    pub estimator_coupling: Coupling,
    pub sweep_k_grid: Vec<usize>,
    pub sweep_budget: usize,
    pub fit_steps: usize,
    pub fit_step_size: f64,
    pub fit_k: usize,
    pub fit_gradient_samples: usize,
    pub fit_eval_interval: usize,
    pub fit_eval_samples: usize,
    pub figures_k_grid: Vec<usize>,
    pub figures_points_per_k: usize,
    pub figures_samples: usize,
}

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "model.kind",
    "model.m",
    "model.s",
    "model.a",
    "model.obs_noise_std",
    "model.v",
    "proposal.loc",
    "proposal.log_scale",
    "estimator.k",
    "estimator.replications",
    "estimator.coupling",
    "sweep.k_grid",
    "sweep.budget",
    "fit.steps",
    "fit.step_size",
    "fit.k",
    "fit.gradient_samples",
    "fit.eval_interval",
    "fit.eval_samples",
    "figures.k_grid",
    "figures.points_per_k",
    "figures.samples",
];

impl RunConfig {
    pub fn from_table(table: &KeyTable) -> ConfigResult<Self> {
        table.check_known_keys(KNOWN_KEYS)?;
        let model = match table.get_string("model.kind").as_deref() {
            Some("lognormal") => ModelSpec::LogNormal {
                m: table.get_f64("model.m")?.unwrap_or(0.0),
                s: table.get_f64("model.s")?.unwrap_or(0.5),
            },
            Some("gaussian") => {
                let a = table.get_matrix("model.a")?.ok_or_else(|| {
                    ConfigError("field 'model.a' is required for the gaussian model".into())
                })?;
                let v = table.get_vec_f64("model.v")?.ok_or_else(|| {
                    ConfigError("field 'model.v' is required for the gaussian model".into())
                })?;
                ModelSpec::Gaussian {
                    a,
                    obs_noise_std: table.get_f64("model.obs_noise_std")?.unwrap_or(1.0),
                    v,
                }
            }
            Some(other) => {
                return Err(ConfigError(format!(
                    "field 'model.kind': unknown model '{other}' (expected lognormal or gaussian)"
                )))
            }
            None => {
                return Err(ConfigError(
                    "field 'model.kind' is required (lognormal or gaussian)".into(),
                ))
            }
        };
        Ok(Self {
            seed: table.get_u64("seed")?.unwrap_or(0),
            model,
            proposal_loc: table.get_vec_f64("proposal.loc")?,
            proposal_log_scale: table.get_vec_f64("proposal.log_scale")?,
            estimator_k: table.get_usize("estimator.k")?.unwrap_or(1),
            estimator_replications: table
                .get_usize("estimator.replications")?
                .unwrap_or(100_000),
            estimator_coupling: table
                .get_coupling("estimator.coupling")?
                .unwrap_or(Coupling::Iid),
            sweep_k_grid: table
                .get_vec_usize("sweep.k_grid")?
                .unwrap_or_else(|| vec![1, 2, 4, 8, 16, 32, 64]),
            sweep_budget: table.get_usize("sweep.budget")?.unwrap_or(1_280_000),
            fit_steps: table.get_usize("fit.steps")?.unwrap_or(2000),
            fit_step_size: table.get_f64("fit.step_size")?.unwrap_or(1e-2),
            fit_k: table.get_usize("fit.k")?.unwrap_or(1),
            fit_gradient_samples: table.get_usize("fit.gradient_samples")?.unwrap_or(16),
            fit_eval_interval: table.get_usize("fit.eval_interval")?.unwrap_or(50),
            fit_eval_samples: table.get_usize("fit.eval_samples")?.unwrap_or(4096),
            figures_k_grid: table
                .get_vec_usize("figures.k_grid")?
                .unwrap_or_else(|| vec![1, 4, 16, 64]),
            figures_points_per_k: table.get_usize("figures.points_per_k")?.unwrap_or(400),
            figures_samples: table.get_usize("figures.samples")?.unwrap_or(4096),
        })
    }

    /// Instantiates the lognormal model, or fails with a config error.
    pub fn build_lognormal(&self) -> ConfigResult<Option<LogNormalRatioModel>> {
        match &self.model {
            ModelSpec::LogNormal { m, s } => LogNormalRatioModel::new(*m, *s)
                .map(Some)
                .map_err(|e| ConfigError(format!("model parameters: {e}"))),
            ModelSpec::Gaussian { .. } => Ok(None),
        }
    }

    /// Instantiates the Gaussian model, or fails with a config error.
    pub fn build_gaussian(&self) -> ConfigResult<Option<GaussianLinearModel>> {
        match &self.model {
            ModelSpec::LogNormal { .. } => Ok(None),
            ModelSpec::Gaussian {
                a,
                obs_noise_std,
                v,
            } => {
                let d_v = a.len();
                let d_h = a[0].len();
                let flat: Vec<f64> = a.iter().flatten().copied().collect();
                let model = GaussianLinearModel::new(
                    DMatrix::from_row_slice(d_v, d_h, &flat),
                    *obs_noise_std,
                    DVector::from_row_slice(v),
                )
                .map_err(|e| ConfigError(format!("model parameters: {e}")))?;
                Ok(Some(model))
            }
        }
    }

    /// Proposal for a Gaussian model of latent dimension `d_h`; defaults to
    /// a standard normal.
    pub fn build_proposal(&self, d_h: usize) -> ConfigResult<ProposalParams> {
        let loc = self.proposal_loc.clone().unwrap_or_else(|| vec![0.0; d_h]);
        let log_scale = self
            .proposal_log_scale
            .clone()
            .unwrap_or_else(|| vec![0.0; d_h]);
        ProposalParams::new(
            DVector::from_row_slice(&loc),
            DVector::from_row_slice(&log_scale),
        )
        .map_err(|e| ConfigError(format!("proposal parameters: {e}")))
    }
}
