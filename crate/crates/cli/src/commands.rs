use std::fmt::Write as _;

use cloudclust::optimize::{
    exact_loss_at, majority_rule_loss, optimize_heterogeneous, optimize_homogeneous, InitScheme,
};
use cloudclust::simulate::{monte_carlo, DeployedSystem};
use cloudclust::{cluster_comm_prob, evaluate_system, expected_communicating_clusters, ClusterSpec, EvalReport, SensorParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// One point of one curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub sweep_value: f64,
    pub curve_name: String,
    pub loss: f64,
    pub p_fa: f64,
    pub p_md: f64,
    pub used_cluster_bound: bool,
    pub used_fc_bound: bool,
    pub seed: u64,
}

impl Row {
    fn from_report(sweep_value: f64, curve_name: impl Into<String>, r: &EvalReport, seed: u64) -> Self {
        Self {
            sweep_value,
            curve_name: curve_name.into(),
            loss: r.expected_loss,
            p_fa: r.p_fa,
            p_md: r.p_md,
            used_cluster_bound: r.used_cluster_bound,
            used_fc_bound: r.used_fc_bound,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommRow {
    pub n: usize,
    pub p_com_s: f64,
    pub p_com_c: f64,
}

/// CSV text plus a human-readable summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Output {
    pub csv: String,
    pub summary: String,
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn comm_prob_rows(cfg: &ExperimentConfig) -> Result<Vec<CommRow>, CliError> {
    let mut rows = Vec::new();
    for &p in &cfg.comm_prob_values {
        let s = SensorParams::new(cfg.p_fa, cfg.p_md, p)?;
        for &n in &cfg.comm_prob_sizes {
            let c = ClusterSpec::with_midpoint_rule(vec![s; n])?;
            rows.push(CommRow {
                n,
                p_com_s: p,
                p_com_c: cluster_comm_prob(&c),
            });
        }
    }
    Ok(rows)
}

pub fn comm_prob(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let rows = comm_prob_rows(cfg)?;
    Ok(Output {
        summary: format!("{} rows\n", rows.len()),
        csv: to_csv(&rows)?,
    })
}

/// Terminal report of the heterogeneous optimizer on one realization,
/// evaluated under the configured estimator policy.
fn heterogeneous_report(
    cfg: &ExperimentConfig,
    n_clusters: usize,
    p_com: f64,
    index: u64,
    scheme: InitScheme,
) -> Result<EvalReport, CliError> {
    let system = cfg.realization(n_clusters, p_com, index)?;
    let sol = optimize_heterogeneous(&system, &cfg.gauss_seidel(scheme))?;
    Ok(evaluate_system(&sol.apply(&system)?, &cfg.policy())?)
}

fn mean_report(reports: &[EvalReport]) -> EvalReport {
    let n = reports.len() as f64;
    EvalReport {
        p_fa: reports.iter().map(|r| r.p_fa).sum::<f64>() / n,
        p_md: reports.iter().map(|r| r.p_md).sum::<f64>() / n,
        expected_loss: reports.iter().map(|r| r.expected_loss).sum::<f64>() / n,
        used_cluster_bound: reports.iter().any(|r| r.used_cluster_bound),
        used_fc_bound: reports.iter().any(|r| r.used_fc_bound),
    }
}

/// The five comparison curves at one system size and connectivity.
///
/// `approx_gamma` is the exact loss of the thresholds chosen with the
/// bounds, so its provenance flags are those of an exact evaluation.
fn curves_at(
    cfg: &ExperimentConfig,
    n_clusters: usize,
    p_com: f64,
    sweep_value: f64,
    suffix: &str,
) -> Result<Vec<Row>, CliError> {
    let sys = cfg.homogeneous(n_clusters, p_com)?;
    let exact = optimize_homogeneous(&sys, cfg.r_p, &cfg.exact_policy())?;
    let majority = majority_rule_loss(&sys)?;
    let approx = optimize_homogeneous(&sys, cfg.r_p, &cfg.policy())?;
    let approx_gamma = exact_loss_at(&sys, approx.gamma_c as f64, approx.tie_prob)?;
    let het = (0..cfg.realizations as u64)
        .into_par_iter()
        .map(|r| heterogeneous_report(cfg, n_clusters, p_com, r, InitScheme::OptimalHomogeneous))
        .collect::<Result<Vec<_>, _>>()?;
    let name = |c: &str| format!("{c}{suffix}");
    Ok(vec![
        Row::from_report(sweep_value, name("exact"), &exact.report, cfg.seed),
        Row::from_report(sweep_value, name("majority"), &majority, cfg.seed),
        Row::from_report(sweep_value, name("approx_gamma"), &approx_gamma, cfg.seed),
        Row::from_report(sweep_value, name("approx_homogeneous"), &approx.report, cfg.seed),
        Row::from_report(sweep_value, name("approx_heterogeneous"), &mean_report(&het), cfg.seed),
    ])
}

pub fn sweep_pcom_rows(cfg: &ExperimentConfig) -> Result<Vec<Row>, CliError> {
    let chunks = cfg
        .p_com_grid
        .par_iter()
        .map(|&p| curves_at(cfg, cfg.n_clusters, p, p, ""))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn sweep_pcom(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let rows = sweep_pcom_rows(cfg)?;
    Ok(Output {
        summary: format!("{} rows over {} p_com values\n", rows.len(), cfg.p_com_grid.len()),
        csv: to_csv(&rows)?,
    })
}

pub fn sweep_nc_rows(cfg: &ExperimentConfig) -> Result<Vec<Row>, CliError> {
    let bad: Vec<String> = cfg
        .n_clusters_grid
        .iter()
        .filter(|n_c| cfg.n_sensors % **n_c != 0)
        .map(|n_c| n_c.to_string())
        .collect();
    if !bad.is_empty() {
        return Err(CliError::Config(format!(
            "{} sensors cannot be split evenly into N_c = {}",
            cfg.n_sensors,
            bad.join(", ")
        )));
    }
    let points: Vec<(f64, usize)> = cfg
        .sweep_nc_p_com
        .iter()
        .flat_map(|&p| cfg.n_clusters_grid.iter().map(move |&n_c| (p, n_c)))
        .collect();
    let chunks = points
        .par_iter()
        .map(|&(p, n_c)| curves_at(cfg, n_c, p, n_c as f64, &format!("@p_com={p}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn sweep_nc(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let rows = sweep_nc_rows(cfg)?;
    Ok(Output {
        summary: format!("{} rows\n", rows.len()),
        csv: to_csv(&rows)?,
    })
}

/// Homogeneous rows at the configured point, then one row per
/// heterogeneous realization and initialization scheme with the terminal
/// surrogate loss.
pub fn optimize(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let sys = cfg.homogeneous(cfg.n_clusters, cfg.p_com)?;
    let exact = optimize_homogeneous(&sys, cfg.r_p, &cfg.exact_policy())?;
    let approx = optimize_homogeneous(&sys, cfg.r_p, &cfg.policy())?;
    let approx_gamma = exact_loss_at(&sys, approx.gamma_c as f64, approx.tie_prob)?;
    let majority = majority_rule_loss(&sys)?;
    let p = cfg.p_com;
    let mut rows = vec![
        Row::from_report(p, "exact", &exact.report, cfg.seed),
        Row::from_report(p, "majority", &majority, cfg.seed),
        Row::from_report(p, "approx_gamma", &approx_gamma, cfg.seed),
        Row::from_report(p, "approx_homogeneous", &approx.report, cfg.seed),
    ];
    let mut summary = String::new();
    let gap = (approx_gamma.expected_loss - exact.loss) / exact.loss;
    writeln!(
        summary,
        "homogeneous: exact-optimal count threshold {} (tie {}), loss {:.6}; bound-optimized threshold {} (tie {}), exact loss {:.6}, relative gap {:.4}%; majority loss {:.6}",
        exact.gamma_c, exact.tie_prob, exact.loss, approx.gamma_c, approx.tie_prob, approx_gamma.expected_loss, 100.0 * gap, majority.expected_loss
    )
    .unwrap();

    let per_realization = (0..cfg.realizations as u64)
        .into_par_iter()
        .map(|r| {
            cfg.init_schemes
                .iter()
                .map(|s| heterogeneous_report(cfg, cfg.n_clusters, cfg.p_com, r, *s))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let first_best = per_realization
        .iter()
        .filter(|reps| reps.iter().all(|r| reps[0].expected_loss <= r.expected_loss + 1e-9))
        .count();
    for (r, reps) in per_realization.iter().enumerate() {
        for (s, rep) in cfg.init_schemes.iter().zip(reps) {
            rows.push(Row::from_report(r as f64, format!("init:{}", s.name()), rep, cfg.seed));
        }
    }
    for (k, s) in cfg.init_schemes.iter().enumerate() {
        let m = per_realization.iter().map(|reps| reps[k].expected_loss).sum::<f64>() / per_realization.len() as f64;
        writeln!(summary, "heterogeneous init {}: mean terminal loss {m:.6}", s.name()).unwrap();
    }
    writeln!(
        summary,
        "first scheme ({}) best within 1e-9 in {first_best} of {} realizations",
        cfg.init_schemes[0].name(),
        per_realization.len()
    )
    .unwrap();
    Ok(Output {
        csv: to_csv(&rows)?,
        summary,
    })
}

/// Simulates the exact-optimal homogeneous rule at the configured point
/// and lists the empirical values next to the exact ones.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let sys = cfg.homogeneous(cfg.n_clusters, cfg.p_com)?;
    let policy = cfg.exact_policy();
    let opt = optimize_homogeneous(&sys, cfg.r_p, &policy)?;
    let system = sys.config(opt.gamma_c as f64, opt.tie_prob)?;
    let deployed = DeployedSystem::new(&system, &policy)?;
    let mc = monte_carlo(&deployed, cfg.trials, cfg.seed)?;
    let exact = evaluate_system(&system, &policy)?;
    let p = cfg.p_com;
    let row = |name: &str, loss, p_fa, p_md| Row {
        sweep_value: p,
        curve_name: name.into(),
        loss,
        p_fa,
        p_md,
        used_cluster_bound: mc.used_cluster_bound,
        used_fc_bound: mc.used_fc_bound,
        seed: cfg.seed,
    };
    let rows = vec![
        Row::from_report(p, "exact", &exact, cfg.seed),
        row("simulated", mc.loss.mean, mc.p_fa.mean, mc.p_md.mean),
        row("simulated_std_error", mc.loss.std_error, mc.p_fa.std_error, mc.p_md.std_error),
    ];
    let comm = expected_communicating_clusters(&system.clusters);
    let summary = format!(
        "{} trials, seed {}: loss {:.6} ± {:.6} (exact {:.6}, {:.2} SE); P_FA {:.6} ({:.2} SE); P_MD {:.6} ({:.2} SE); communicating clusters {:.4} (expected {:.4}, {:.2} SE)\n",
        cfg.trials,
        cfg.seed,
        mc.loss.mean,
        mc.loss.std_error,
        exact.expected_loss,
        mc.loss.z_score(exact.expected_loss),
        mc.p_fa.mean,
        mc.p_fa.z_score(exact.p_fa),
        mc.p_md.mean,
        mc.p_md.z_score(exact.p_md),
        mc.communicating.mean,
        comm,
        mc.communicating.z_score(comm),
    );
    Ok(Output {
        csv: to_csv(&rows)?,
        summary,
    })
}
