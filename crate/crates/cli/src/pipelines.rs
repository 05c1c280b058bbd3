//! Command pipelines: estimation, report assembly and atomic file output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gapcheck_core::bounds::diagnose;
use gapcheck_core::error::Error as CoreError;
use gapcheck_core::estimators::{
    bias_variance_sweep, bootstrap_var_diff_quantile, coupling_block_values, EstimatorConfig,
};
use gapcheck_core::figures::{
    concentration_data, concentration_svg, majorizer_svg, MajorizerParams,
};
use gapcheck_core::models::{GaussianImportance, ImportanceModel};
use gapcheck_core::optim::{fit, FitConfig};
use gapcheck_core::seeding::derive_stream_seed;
use gapcheck_core::stats::{dispersion_stats, Coupling, LogWeightBatch, RunningMoments, Scale};

use crate::config::{ConfigError, RunConfig};

/// CLI failure categories; each maps to a documented exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Oracle(String),
    Io(String),
    Divergence(String),
    Numerical(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Oracle(_) => "oracle",
            CliError::Io(_) => "io",
            CliError::Divergence(_) => "divergence",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Oracle(_) => 3,
            CliError::Io(_) => 4,
            CliError::Divergence(_) => 5,
            CliError::Numerical(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Oracle(m)
            | CliError::Io(m)
            | CliError::Divergence(m)
            | CliError::Numerical(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::OracleUnavailable(_) => CliError::Oracle(e.to_string()),
            CoreError::DivergenceDetected { .. } => CliError::Divergence(e.to_string()),
            CoreError::NumericalFailure(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Which output files a run may write.
#[derive(Debug, Clone, Copy)]
pub struct OutputFormats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl OutputFormats {
    pub fn all() -> Self {
        Self {
            csv: true,
            json: true,
            svg: true,
        }
    }

    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let mut f = Self {
            csv: false,
            json: false,
            svg: false,
        };
        for token in spec.split(',') {
            match token.trim() {
                "csv" => f.csv = true,
                "json" => f.json = true,
                "svg" => f.svg = true,
                other => {
                    return Err(CliError::Config(format!(
                        "--formats: unknown format '{other}' (expected csv, json, svg)"
                    )))
                }
            }
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    Concentration,
    Majorizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Diagnose,
    SweepK,
    CoupleCompare,
    Fit,
    Figures(FigureKind),
}

/// Runs the model-polymorphic part of a pipeline.
fn with_importance<T>(
    cfg: &RunConfig,
    f: impl FnOnce(&dyn ImportanceModel) -> Result<T, CliError>,
) -> Result<T, CliError> {
    if let Some(model) = cfg.build_lognormal()? {
        return f(&model);
    }
    let model = cfg
        .build_gaussian()?
        .expect("model spec is lognormal or gaussian");
    let proposal = cfg.build_proposal(model.latent_dim())?;
    let imp = GaussianImportance::new(&model, &proposal).map_err(CliError::from)?;
    f(&imp)
}

/// Writes via a temp file in the same directory, then renames into place.
fn write_atomic(path: &Path, content: &str) -> Result<(), CliError> {
    let tmp = path.with_file_name(format!(
        "{}.tmp",
        path.file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("output")
    ));
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn emit(out_dir: &Path, name: &str, content: &str) -> Result<PathBuf, CliError> {
    let path = out_dir.join(name);
    write_atomic(&path, content)?;
    println!("wrote {} ({} bytes)", path.display(), content.len());
    Ok(path)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "inapplicable".to_string(), |x| format!("{x:.6}"))
}

/// Executes one pipeline; returns the files written.
pub fn run(
    pipeline: Pipeline,
    cfg: &RunConfig,
    out_dir: &Path,
    formats: OutputFormats,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    match pipeline {
        Pipeline::Diagnose => {
            let est_cfg = EstimatorConfig {
                k: cfg.estimator_k,
                replications: cfg.estimator_replications,
                seed: cfg.seed,
                coupling: cfg.estimator_coupling,
            };
            let report = with_importance(cfg, |m| diagnose(m, &est_cfg).map_err(CliError::from))?;
            println!(
                "diagnose: gap={:.6} (se {:.3e}) prop2={} corollary={}",
                report.gap,
                report.gap_std_error,
                fmt_opt(report.prop2_bound),
                fmt_opt(report.corollary_bound),
            );
            if formats.json {
                let mut body = serde_json::to_string_pretty(&report)
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                body.push('\n');
                written.push(emit(out_dir, "report.json", &body)?);
            }
        }
        Pipeline::SweepK => {
            let sweep = with_importance(cfg, |m| {
                bias_variance_sweep(
                    m,
                    &cfg.sweep_k_grid,
                    cfg.sweep_budget,
                    cfg.seed,
                    cfg.estimator_coupling,
                )
                .map_err(CliError::from)
            })?;
            println!(
                "sweep-k: {} levels, k in [{}, {}], budget {}",
                sweep.rows.len(),
                sweep.rows.first().map_or(0, |r| r.k),
                sweep.rows.last().map_or(0, |r| r.k),
                sweep.budget
            );
            if formats.csv {
                let mut csv = String::from("k,estimate,std_error,var_x,var_y,gap\n");
                for r in &sweep.rows {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{},{}",
                        r.k, r.estimate, r.std_error, r.var_x, r.var_y, r.gap
                    );
                }
                written.push(emit(out_dir, "sweep.csv", &csv)?);
            }
        }
        Pipeline::CoupleCompare => {
            struct Row {
                coupling: Coupling,
                estimate: f64,
                std_error: f64,
                gap: f64,
                var_x: f64,
                var_y: f64,
                /// 99% bootstrap upper quantile of var_x minus the iid var_x.
                var_x_vs_iid_q99: Option<f64>,
            }
            let couplings = [Coupling::Iid, Coupling::Antithetic, Coupling::Stratified];
            let rows: Vec<Row> = with_importance(cfg, |m| {
                let log_z = m.log_evidence();
                let mut iid_xs: Vec<f64> = Vec::new();
                let mut rows = Vec::new();
                for (i, &coupling) in couplings.iter().enumerate() {
                    let ys = coupling_block_values(
                        m,
                        cfg.estimator_k,
                        cfg.estimator_replications,
                        coupling,
                        cfg.seed,
                    )?;
                    let xs: Vec<f64> = ys.iter().map(|y| (y - log_z).exp()).collect();
                    let mut y_acc = RunningMoments::new();
                    let mut x_acc = RunningMoments::new();
                    for (&y, &x) in ys.iter().zip(&xs) {
                        y_acc.push(y);
                        x_acc.push(x);
                    }
                    let var_x_vs_iid_q99 = if coupling == Coupling::Iid {
                        iid_xs = xs;
                        None
                    } else {
                        Some(bootstrap_var_diff_quantile(
                            &xs,
                            &iid_xs,
                            0.99,
                            2000,
                            derive_stream_seed(cfg.seed, "couple-bootstrap", i as u64),
                        )?)
                    };
                    rows.push(Row {
                        coupling,
                        estimate: y_acc.mean(),
                        std_error: y_acc.se_of_mean(),
                        gap: log_z - y_acc.mean(),
                        var_x: x_acc.sample_var(),
                        var_y: y_acc.sample_var(),
                        var_x_vs_iid_q99,
                    });
                }
                Ok::<_, CliError>(rows)
            })?;
            let mut csv = String::from(
                "coupling,k,replications,estimate,std_error,gap,var_x,var_y,var_x_vs_iid_q99\n",
            );
            let mut summary = String::from("couple-compare:");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{}",
                    r.coupling,
                    cfg.estimator_k,
                    cfg.estimator_replications,
                    r.estimate,
                    r.std_error,
                    r.gap,
                    r.var_x,
                    r.var_y,
                    r.var_x_vs_iid_q99
                        .map_or_else(String::new, |q| q.to_string()),
                );
                let _ = write!(summary, " {}:var_x={:.4e}", r.coupling, r.var_x);
            }
            println!("{summary}");
            if formats.csv {
                written.push(emit(out_dir, "couple.csv", &csv)?);
            }
        }
        Pipeline::Fit => {
            let model = cfg.build_gaussian()?.ok_or_else(|| {
                CliError::Config(
                    "fit optimizes proposal parameters and needs model.kind = gaussian".into(),
                )
            })?;
            let q0 = cfg.build_proposal(model.latent_dim())?;
            let fit_cfg = FitConfig {
                steps: cfg.fit_steps,
                step_size: cfg.fit_step_size,
                k: cfg.fit_k,
                gradient_samples: cfg.fit_gradient_samples,
                eval_interval: cfg.fit_eval_interval,
                eval_samples: cfg.fit_eval_samples,
                seed: cfg.seed,
            };
            let trace = fit(&model, &q0, &fit_cfg)?;
            let last = trace.evals.last().expect("fit records a final evaluation");
            println!(
                "fit: {} steps, final gap={:.6} sigma_y={:.6}",
                cfg.fit_steps, last.gap, last.sigma_y
            );
            if formats.csv {
                let d = model.latent_dim();
                let mut csv = String::from("iteration,objective,gap,sigma_x,sigma_y");
                for i in 0..d {
                    let _ = write!(csv, ",loc_{i}");
                }
                for i in 0..d {
                    let _ = write!(csv, ",log_scale_{i}");
                }
                csv.push('\n');
                for e in &trace.evals {
                    let _ = write!(
                        csv,
                        "{},{},{},{},{}",
                        e.iteration, e.objective, e.gap, e.sigma_x, e.sigma_y
                    );
                    for v in &e.loc {
                        let _ = write!(csv, ",{v}");
                    }
                    for v in &e.log_scale {
                        let _ = write!(csv, ",{v}");
                    }
                    csv.push('\n');
                }
                written.push(emit(out_dir, "trace.csv", &csv)?);
            }
        }
        Pipeline::Figures(kind) => {
            if !formats.svg {
                println!("figures: svg not in --formats, nothing to write");
                return Ok(written);
            }
            match kind {
                FigureKind::Concentration => {
                    let svg = with_importance(cfg, |m| {
                        let data = concentration_data(
                            m,
                            &cfg.figures_k_grid,
                            cfg.figures_points_per_k,
                            cfg.seed,
                        )?;
                        Ok::<_, CliError>(concentration_svg(&data)?)
                    })?;
                    println!(
                        "figures: concentration over k = {:?}, {} points per level",
                        cfg.figures_k_grid, cfg.figures_points_per_k
                    );
                    written.push(emit(out_dir, "fig_concentration.svg", &svg)?);
                }
                FigureKind::Majorizer => {
                    let params = with_importance(cfg, |m| {
                        let seed = derive_stream_seed(cfg.seed, "figure-majorizer", 0);
                        let batch = gapcheck_core::models::sample_log_weights(
                            m,
                            cfg.figures_samples,
                            seed,
                            Coupling::Iid,
                        )?;
                        majorizer_params_from_batch(&batch)
                    })?;
                    println!(
                        "figures: majorizer at nu_x={:.6}, mu_x={:.6}, c_x={:.6}",
                        params.nu_x, params.mu_x, params.c_x
                    );
                    written.push(emit(
                        out_dir,
                        "fig_majorizer.svg",
                        &majorizer_svg(&params)?,
                    )?);
                }
            }
        }
    }
    Ok(written)
}

/// Empirical tangent-construction quantities of one batch on the raw X
/// scale (the figure draws actual weights against the log curve).
fn majorizer_params_from_batch(batch: &LogWeightBatch) -> Result<MajorizerParams, CliError> {
    let x = dispersion_stats(batch, Scale::X, None)?;
    let y = dispersion_stats(batch, Scale::Y, None)?;
    Ok(MajorizerParams {
        nu_x: x.median,
        mu_x: x.mean,
        c_x: x.mean_abs_dev,
        mu_y: y.mean,
    })
}
