//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `--nocapture`). Every tolerance is pinned in code; seeds
//! are fixed so the suite is deterministic on a given platform.

use std::path::{Path, PathBuf};
use std::process::Command;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use gapcheck_core::bounds::{corollary_bound, empirical_prop2_check, prop1_check, prop2_bound};
use gapcheck_core::estimators::{
    bias_variance_sweep, bootstrap_var_diff_quantile, coupling_block_values, elbo_estimate,
};
use gapcheck_core::figures::{concentration_data, concentration_svg};
use gapcheck_core::models::{
    sample_log_weights, GaussianImportance, GaussianLinearModel, LogNormalRatioModel,
    ProposalParams,
};
use gapcheck_core::optim::{elbo_gradient, fit, iwlb_gradient, objective_value, FitConfig};
use gapcheck_core::stats::{
    dispersion_stats, quantile, spearman, Coupling, LogWeightBatch, RunningMoments, Scale,
};

const LOG_EVIDENCE_1D: f64 = -1.2655121234846454; // -0.5 ln(4 pi)
const KL_STD_NORMAL_1D: f64 = 0.15342640972002735; // 0.5 (1 - ln 2)
const ELBO_1D: f64 = -1.4189385332046727;

fn benchmark_model() -> GaussianLinearModel {
    GaussianLinearModel::new(
        DMatrix::from_row_slice(1, 1, &[1.0]),
        1.0,
        DVector::from_row_slice(&[0.0]),
    )
    .unwrap()
}

#[test]
fn criterion_01_elbo_soundness() {
    let model = benchmark_model();
    let q = ProposalParams::isotropic(1, 0.0, 1.0).unwrap();
    let imp = GaussianImportance::new(&model, &q).unwrap();
    let batch = sample_log_weights(&imp, 1_000_000, 101, Coupling::Iid).unwrap();
    let est = elbo_estimate(&batch);
    assert!((model.exact_log_evidence() - LOG_EVIDENCE_1D).abs() < 1e-12);
    assert!((model.exact_elbo_gap(&q).unwrap() - KL_STD_NORMAL_1D).abs() < 1e-12);
    assert!(
        (est.value - ELBO_1D).abs() <= 3.0 * est.std_error,
        "elbo {} vs {ELBO_1D} (se {})",
        est.value,
        est.std_error
    );
    println!(
        "PASS criterion 1: elbo {:.6} within 3 se ({:.2e}) of {ELBO_1D:.6}",
        est.value, est.std_error
    );
}

/// Batch sizes log-uniform in [1, 10^4].
fn random_size(rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    (10f64.powf(4.0 * u)).round().max(1.0) as usize
}

/// Varied log-weight batches: constants, normals, heavy-tailed lognormal
/// Y scales, uniforms, tied two-point masses, contaminated normals.
fn random_batch(rng: &mut ChaCha8Rng, kind: usize) -> Vec<f64> {
    let n = random_size(rng);
    match kind % 6 {
        0 => {
            let c: f64 = rng.random_range(-5.0..5.0);
            vec![c; n]
        }
        1 => {
            let m: f64 = rng.random_range(-3.0..3.0);
            let s: f64 = rng.random_range(0.0..2.0);
            (0..n)
                .map(|_| m + s * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        2 => {
            // Heavy tails on the X scale: exp of a wide normal.
            let s: f64 = rng.random_range(1.0..3.0);
            (0..n)
                .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        3 => {
            let a: f64 = rng.random_range(-4.0..0.0);
            let b: f64 = a + rng.random_range(0.0..6.0);
            (0..n).map(|_| rng.random_range(a..=b)).collect()
        }
        4 => {
            let a: f64 = rng.random_range(-2.0..0.0);
            let b: f64 = rng.random_range(0.0..2.0);
            let p: f64 = rng.random_range(0.05..0.95);
            (0..n)
                .map(|_| if rng.random::<f64>() < p { a } else { b })
                .collect()
        }
        _ => (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                if rng.random::<f64>() < 0.05 {
                    20.0 * z.signum() + z
                } else {
                    z
                }
            })
            .collect(),
    }
}

#[test]
fn criterion_02_mean_median_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0usize;
    for i in 0..1000 {
        let values = random_batch(&mut rng, i);
        let batch = LogWeightBatch::new(values, i as u64, Coupling::Iid).unwrap();
        for scale in [Scale::Y, Scale::X] {
            let stats = dispersion_stats(&batch, scale, None).unwrap();
            for p in [1, 2] {
                let c = prop1_check(&stats, p).unwrap();
                assert!(
                    c.holds,
                    "batch {i}, scale {scale:?}, p={p}: |mean-median| {} > lp {}",
                    c.lhs, c.rhs
                );
                checked += 1;
            }
        }
    }
    println!("PASS criterion 2: mean-median inequality held on {checked} batch/scale/order checks");
}

#[test]
fn criterion_03_prop2_soundness() {
    // Exact mode: closed-form moments at several scales and locations.
    let mut exact_checked = 0usize;
    for s in [0.1, 0.25, 0.5, 1.0] {
        for m in [0.0, -0.5 * s * s, 1.3] {
            let model = LogNormalRatioModel::new(m, s).unwrap();
            let gap = model.exact_gap();
            assert!((gap - 0.5 * s * s).abs() < 1e-15);
            let bound = prop2_bound(model.mu_x(), model.sigma_x(), model.sigma_y()).unwrap();
            if model.mu_x() > model.sigma_x() {
                let b = bound.expect("gate holds");
                assert!(gap <= b, "s={s}, m={m}: gap {gap} > bound {b}");
                exact_checked += 1;
            } else {
                assert!(bound.is_none(), "s={s}: gate should have failed");
            }
        }
    }
    assert!(exact_checked >= 9, "s = 1.0 is the only gated-off scale");

    // Empirical-population mode: the inequality holds exactly on batches.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut applicable = 0usize;
    for i in 0..1000 {
        let n = random_size(&mut rng);
        let values: Vec<f64> = match i % 3 {
            0 => {
                let s: f64 = rng.random_range(0.0..0.7);
                (0..n)
                    .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            1 => {
                let c: f64 = rng.random_range(-2.0..2.0);
                let w: f64 = rng.random_range(0.0..1.5);
                (0..n).map(|_| c + rng.random_range(-w..=w)).collect()
            }
            _ => {
                let s: f64 = rng.random_range(0.5..2.5);
                (0..n)
                    .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        };
        let batch = LogWeightBatch::new(values, i as u64, Coupling::Iid).unwrap();
        let check = empirical_prop2_check(&batch).unwrap();
        if let Some(holds) = check.holds {
            assert!(holds, "batch {i}: {check:?}");
            applicable += 1;
        }
    }
    assert!(
        applicable >= 300,
        "only {applicable} of 1000 batches were applicable"
    );
    println!(
        "PASS criterion 3: closed-form soundness ({exact_checked} cases) and exact empirical soundness ({applicable}/1000 applicable batches)"
    );
}

#[test]
fn criterion_04_corollary_gate() {
    // Analytic gate: sigma_x >= p(v) iff exp(s^2) - 1 >= 1 iff s^2 >= ln 2.
    let s_crit = (2.0f64.ln()).sqrt();
    for s in [
        0.05,
        0.3,
        0.6,
        0.8,
        s_crit - 1e-9,
        s_crit + 1e-9,
        0.84,
        1.0,
        1.7,
    ] {
        let model = LogNormalRatioModel::new(0.4, s).unwrap();
        let gate_should_hold = s * s < 2.0f64.ln();
        let bound = corollary_bound(model.evidence(), model.sigma_x(), model.sigma_y()).unwrap();
        assert_eq!(
            bound.is_some(),
            gate_should_hold,
            "s = {s}: gate mismatch (sigma_x = {}, p_v = {})",
            model.sigma_x(),
            model.evidence()
        );
        if let Some(b) = bound {
            assert!(model.exact_gap() <= b);
        }
    }
    // Exact boundary: sigma_x == p(v) is inapplicable (the gate is strict).
    assert_eq!(corollary_bound(1.0, 1.0, 0.3).unwrap(), None);
    println!("PASS criterion 4: corollary gate flips exactly at s^2 = ln 2");
}

#[test]
fn criterion_05_iwlb_monotonicity() {
    let model = LogNormalRatioModel::new(0.0, 0.5).unwrap();
    let grid: Vec<usize> = (0..=10).map(|i| 1usize << i).collect(); // 1..1024
    let budget = 1024 * 100_000;
    let sweep = bias_variance_sweep(&model, &grid, budget, 505, Coupling::Iid).unwrap();
    assert_eq!(sweep.merge_pairs.len(), 10);
    for pair in &sweep.merge_pairs {
        assert!(
            pair.pairs >= 100_000,
            "K={}: only {} pairs",
            pair.k_from,
            pair.pairs
        );
        assert!(
            pair.mean_diff >= -3.0 * pair.se_diff,
            "K={}->{}: mean(Y_2K - Y_K) = {} < -3 se ({})",
            pair.k_from,
            pair.k_to,
            pair.mean_diff,
            pair.se_diff
        );
    }
    println!(
        "PASS criterion 5: mean(Y_2K) >= mean(Y_K) - 3 se on all {} doublings, K in [1, 512]",
        sweep.merge_pairs.len()
    );
}

/// Weighted least-squares slope of y on x.
fn wls_slope(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    let swx: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum();
    let swy: f64 = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum();
    let swxx: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi * xi).sum();
    let swxy: f64 = w
        .iter()
        .zip(x.iter().zip(y))
        .map(|(wi, (xi, yi))| wi * xi * yi)
        .sum();
    (sw * swxy - swx * swy) / (sw * swxx - swx * swx)
}

#[test]
fn criterion_06_bias_rate() {
    // Gap of the K-sample estimator decays as 1/K; the log-log slope over
    // K in [64, 1024] must sit at -1 within 0.3. The fit weights each
    // log-gap by its inverse variance (se/gap per point).
    let model = LogNormalRatioModel::new(0.0, 0.5).unwrap();
    let grid = [64usize, 128, 256, 512, 1024];
    let budget = 1024 * 100_000;
    let sweep = bias_variance_sweep(&model, &grid, budget, 606, Coupling::Iid).unwrap();
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut w = Vec::new();
    for row in &sweep.rows {
        assert!(
            row.gap > 0.0,
            "k={}: nonpositive gap estimate {}",
            row.k,
            row.gap
        );
        lx.push((row.k as f64).ln());
        ly.push(row.gap.ln());
        let rel = row.std_error / row.gap;
        w.push(1.0 / (rel * rel));
    }
    let slope = wls_slope(&lx, &ly, &w);
    assert!(
        (-1.3..=-0.7).contains(&slope),
        "log-log slope {slope} outside -1 +/- 0.3; gaps {:?}",
        sweep.rows.iter().map(|r| r.gap).collect::<Vec<_>>()
    );
    println!("PASS criterion 6: bias rate slope {slope:.4} in [-1.3, -0.7]");
}

#[test]
fn criterion_07_antithetic_variance_reduction() {
    // The proposal is offset from the posterior mean so the log-weight is
    // monotone in the draw and reflected pairs anti-correlate (centered at
    // the posterior the weight is even in the draw and pairing cannot
    // help).
    let model = benchmark_model();
    let q = ProposalParams::isotropic(1, 1.0, 1.0).unwrap();
    let imp = GaussianImportance::new(&model, &q).unwrap();
    let log_z = model.exact_log_evidence();
    let replications = 20_000;

    let y_iid = coupling_block_values(&imp, 2, replications, Coupling::Iid, 707).unwrap();
    let y_anti = coupling_block_values(&imp, 2, replications, Coupling::Antithetic, 707).unwrap();
    let x_iid: Vec<f64> = y_iid.iter().map(|y| (y - log_z).exp()).collect();
    let x_anti: Vec<f64> = y_anti.iter().map(|y| (y - log_z).exp()).collect();

    // var(X_2^anti) <= var(X_2^iid) at 99% bootstrap confidence.
    let q99 = bootstrap_var_diff_quantile(&x_anti, &x_iid, 0.99, 2000, 7077).unwrap();
    assert!(
        q99 < 0.0,
        "99% bootstrap quantile of var(anti) - var(iid) is {q99} >= 0"
    );

    // Paired gap comparison: shared replication seeds couple the arms.
    let mut d = RunningMoments::new();
    for (a, b) in y_anti.iter().zip(&y_iid) {
        d.push(a - b);
    }
    assert!(
        d.mean() >= -3.0 * d.se_of_mean(),
        "antithetic gap estimate is larger: mean(Y_anti - Y_iid) = {} (se {})",
        d.mean(),
        d.se_of_mean()
    );
    println!(
        "PASS criterion 7: var reduction certified (q99 {q99:.3e} < 0), paired gap diff {:.4} >= -3 se",
        d.mean()
    );
}

#[test]
fn criterion_08_gradient_correctness() {
    let model = benchmark_model();
    let q = ProposalParams::new(
        DVector::from_row_slice(&[0.7]),
        DVector::from_row_slice(&[-0.3]),
    )
    .unwrap();

    // CRN central finite differences at n = 10^4 matched draws.
    let n = 10_000;
    let seed = 808;
    let g = iwlb_gradient(&model, &q, 1, n, seed).unwrap();
    let delta = 1e-4;
    let mut fd = [0.0f64; 2];
    for (i, slot) in fd.iter_mut().enumerate() {
        let at = |eps: f64| {
            let mut loc = q.loc().clone();
            let mut ls = q.log_scale().clone();
            if i == 0 {
                loc[0] += eps;
            } else {
                ls[0] += eps;
            }
            let qp = ProposalParams::new(loc, ls).unwrap();
            objective_value(&model, &qp, 1, n, seed).unwrap()
        };
        *slot = (at(delta) - at(-delta)) / (2.0 * delta);
    }
    let mc = [g.loc[0], g.log_scale[0]];
    for i in 0..2 {
        let rel = (mc[i] - fd[i]).abs() / fd[i].abs().max(1e-8);
        assert!(
            rel < 1e-4,
            "coord {i}: pathwise {} vs finite difference {} (rel {rel:.2e})",
            mc[i],
            fd[i]
        );
    }

    // Analytic 1-D gradient of log p(v) - KL(q || posterior).
    let m_p = model.posterior_mean()[0];
    let var_p = model.posterior_cov()[(0, 0)];
    let s2 = (2.0 * q.log_scale()[0]).exp();
    let analytic = [-(q.loc()[0] - m_p) / var_p, 1.0 - s2 / var_p];
    let g = elbo_gradient(&model, &q, n, 809).unwrap();
    let se = [g.loc_std_error[0], g.log_scale_std_error[0]];
    let mc = [g.loc[0], g.log_scale[0]];
    for i in 0..2 {
        assert!(
            (mc[i] - analytic[i]).abs() <= 3.0 * se[i],
            "coord {i}: mc {} vs analytic {} (se {})",
            mc[i],
            analytic[i],
            se[i]
        );
    }
    println!(
        "PASS criterion 8: pathwise gradient matches finite differences (rel < 1e-4) and the analytic gradient (3 se)"
    );
}

#[test]
fn criterion_09_fit_convergence() {
    let model = benchmark_model();
    let q0 = ProposalParams::isotropic(1, 3.0, 1.0).unwrap();
    let cfg = FitConfig {
        steps: 2000,
        step_size: 1e-2,
        k: 1,
        gradient_samples: 16,
        eval_interval: 50,
        eval_samples: 4096,
        seed: 909,
    };
    let trace = fit(&model, &q0, &cfg).unwrap();
    let final_gap = model.exact_elbo_gap(&trace.final_proposal).unwrap();
    assert!(
        final_gap < 1e-2,
        "final exact gap {final_gap} after {} steps",
        cfg.steps
    );

    let gaps: Vec<f64> = trace.evals.iter().map(|e| e.gap).collect();
    let sigma_ys: Vec<f64> = trace.evals.iter().map(|e| e.sigma_y).collect();
    let rho = spearman(&gaps, &sigma_ys).unwrap();
    assert!(rho > 0.9, "Spearman(gap, sigma_y) = {rho}");

    // Smoothed (window 50) objective is non-decreasing within one
    // smoothed std.
    let objs: Vec<f64> = trace.steps.iter().map(|s| s.objective).collect();
    let window = 50;
    let smooth: Vec<(f64, f64)> = objs
        .windows(window)
        .map(|w| {
            let mut acc = RunningMoments::new();
            for &v in w {
                acc.push(v);
            }
            (acc.mean(), acc.sample_std())
        })
        .collect();
    for j in 1..smooth.len() {
        assert!(
            smooth[j].0 >= smooth[j - 1].0 - smooth[j - 1].1,
            "smoothed objective fell at window {j}: {} -> {} (std {})",
            smooth[j - 1].0,
            smooth[j].0,
            smooth[j - 1].1
        );
    }
    println!(
        "PASS criterion 9: final gap {final_gap:.2e} < 1e-2, Spearman(gap, sigma_y) = {rho:.4}"
    );
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gapcheck")
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run_cli(args: &[&str], out: &Path) -> std::process::Output {
    let output = Command::new(bin())
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "gapcheck {args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn criterion_10_cli_determinism() {
    let base = std::env::temp_dir().join(format!("gapcheck-acceptance-{}", std::process::id()));
    let gauss = repo_config("gaussian-1d.conf");
    let logn = repo_config("lognormal.conf");
    let gauss = gauss.to_str().unwrap();
    let logn = logn.to_str().unwrap();

    let cases: Vec<(&str, Vec<&str>, &str)> = vec![
        (
            "diagnose",
            vec![
                "diagnose",
                "--config",
                gauss,
                "--set",
                "estimator.replications=20000",
                "--seed",
                "11",
            ],
            "report.json",
        ),
        (
            "sweep-k",
            vec![
                "sweep-k",
                "--config",
                logn,
                "--set",
                "sweep.k_grid=1,4,16",
                "--set",
                "sweep.budget=160000",
                "--seed",
                "12",
            ],
            "sweep.csv",
        ),
        (
            "fit",
            vec![
                "fit",
                "--config",
                gauss,
                "--set",
                "fit.steps=120",
                "--set",
                "proposal.loc=2",
                "--seed",
                "13",
            ],
            "trace.csv",
        ),
        (
            "couple-compare",
            vec![
                "couple-compare",
                "--config",
                gauss,
                "--set",
                "proposal.loc=1",
                "--set",
                "estimator.k=2",
                "--set",
                "estimator.replications=5000",
                "--seed",
                "14",
            ],
            "couple.csv",
        ),
        (
            "figures",
            vec![
                "figures",
                "--config",
                logn,
                "--set",
                "figures.points_per_k=200",
                "--seed",
                "15",
            ],
            "fig_concentration.svg",
        ),
    ];
    for (name, args, artifact) in cases {
        let d1 = base.join(format!("{name}-1"));
        let d2 = base.join(format!("{name}-2"));
        run_cli(&args, &d1);
        run_cli(&args, &d2);
        let a = std::fs::read(d1.join(artifact)).unwrap();
        let b = std::fs::read(d2.join(artifact)).unwrap();
        assert!(a == b, "{name}: {artifact} differs between identical runs");
        assert!(!a.is_empty());

        if artifact == "report.json" {
            // The benchmark report must carry the oracle gap.
            let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
            let gap = report["gap"].as_f64().unwrap();
            let se = report["gap_std_error"].as_f64().unwrap();
            assert!(
                (gap - KL_STD_NORMAL_1D).abs() <= 3.0 * se,
                "report gap {gap} vs {KL_STD_NORMAL_1D} (se {se})"
            );
            assert!(report["applicable_corollary"].as_bool().unwrap());
        }
    }
    println!("PASS criterion 10: byte-identical outputs across repeated runs of all five commands");
}

#[test]
fn criterion_11_figure_concentration() {
    let model = LogNormalRatioModel::new(0.0, 0.5).unwrap();
    let data = concentration_data(&model, &[1, 64], 8000, 1111).unwrap();

    // Data-level check: averaging 64 weights shrinks the X interquartile
    // range by about sqrt(64); the exact lognormal-vs-normal shapes put
    // the ratio near 6.75.
    let xs1: Vec<f64> = data.series[0].points.iter().map(|p| p.0).collect();
    let xs64: Vec<f64> = data.series[1].points.iter().map(|p| p.0).collect();
    let iqr = |xs: &[f64]| quantile(xs, 0.75).unwrap() - quantile(xs, 0.25).unwrap();
    let ratio = iqr(&xs1) / iqr(&xs64);
    assert!(
        (6.0..=10.0).contains(&ratio),
        "IQR shrinkage {ratio} outside [6, 10]"
    );

    // Structural check on the emitted document.
    let svg = concentration_svg(&data).unwrap();
    assert!(svg.contains(r#"id="log-curve""#), "missing log curve");
    assert!(
        svg.matches("mean-line-x").count() >= 2 && svg.matches("mean-line-y").count() >= 2,
        "missing dotted mean lines"
    );
    assert!(
        svg.contains("stroke-dasharray"),
        "mean lines are not dotted"
    );
    assert!(svg.contains(r#"class="series series-k1""#));
    assert!(svg.contains(r#"class="series series-k64""#));
    println!("PASS criterion 11: IQR shrinkage {ratio:.3} in [6, 10]; dotted mean lines and log curve present");
}
