//! Runtime, savings and sparsity studies built on the full pipeline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{max_min_sinr, MaxMinReport};
use crate::problem::{assemble, relative_saving, se_to_sinr, PaModel, PowerParams, ProblemData, Targets};
use crate::scenario::{Scenario, ScenarioConfig};
use crate::solver::{penalty_minimize, SolverOptions, SolverResult};
use crate::statistics::{effective_statistics, EffectiveStatistics};

/// A generated deployment with its statistics and problem data.
#[derive(Debug, Clone)]
pub struct Instance {
    pub scenario: Scenario,
    pub statistics: EffectiveStatistics,
    pub data: ProblemData,
}

pub fn build_instance(config: &ScenarioConfig, targets: &Targets) -> Result<Instance> {
    let scenario = Scenario::generate(config)?;
    let statistics = effective_statistics(&scenario)?;
    let data = assemble(&statistics, targets, PowerParams::from(config))?;
    Ok(Instance {
        scenario,
        statistics,
        data,
    })
}

fn with_axes(base: &ScenarioConfig, num_aps: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        num_aps,
        seed,
        ..base.clone()
    }
}

fn check_axes(aps: &[usize], seeds: &[u64]) -> Result<()> {
    if aps.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidConfig("sweep axes must be non-empty".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub num_aps: usize,
    pub seed: u64,
    pub wall_ms: f64,
    pub penalty_iters: usize,
    pub apg_iters: usize,
    pub objective_w: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStudy {
    pub rows: Vec<RuntimeRow>,
    /// `(L, median wall_ms)` over feasible runs.
    pub medians: Vec<(usize, f64)>,
    /// Least-squares slope of `ln(median wall_ms)` against `ln(L)`.
    pub slope: Option<f64>,
}

/// Solve time against the number of APs at a common SE target. Runs are
/// sequential so that wall times do not compete for cores.
pub fn sweep_runtime(
    base: &ScenarioConfig,
    aps: &[usize],
    seeds: &[u64],
    se_target: f64,
    options: &SolverOptions,
) -> Result<RuntimeStudy> {
    check_axes(aps, seeds)?;
    if aps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("AP list must be strictly ascending".into()));
    }
    let mut rows = Vec::new();
    for &l in aps {
        for &seed in seeds {
            let cfg = with_axes(base, l, seed);
            let inst = build_instance(&cfg, &Targets::common_se(se_target, cfg.num_users))?;
            let r = penalty_minimize(&inst.data, options)?;
            log::info!("runtime L={l} seed={seed}: {:.1} ms, feasible {}", r.wall_time_s * 1e3, r.feasible);
            rows.push(RuntimeRow {
                num_aps: l,
                seed,
                wall_ms: r.wall_time_s * 1e3,
                penalty_iters: r.penalty_iterations,
                apg_iters: r.apg_iterations,
                objective_w: r.consumed(options.model),
                feasible: r.feasible,
            });
        }
    }
    let medians: Vec<(usize, f64)> = aps
        .iter()
        .filter_map(|&l| {
            let times: Vec<f64> = rows
                .iter()
                .filter(|r| r.num_aps == l && r.feasible)
                .map(|r| r.wall_ms)
                .collect();
            median(&times).map(|m| (l, m))
        })
        .collect();
    let slope = loglog_slope(&medians);
    Ok(RuntimeStudy { rows, medians, slope })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Least-squares slope in log-log coordinates; needs two distinct points.
pub fn loglog_slope(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > 0.0)
        .map(|&(x, y)| ((x as f64).ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsRow {
    pub num_aps: usize,
    pub seed: u64,
    pub fraction: f64,
    pub se_mm: f64,
    pub se_target: f64,
    /// Non-linear consumed power of the ideal-model optimum.
    pub p_nl_of_ideal_opt: f64,
    /// Non-linear consumed power of the non-linear-model optimum.
    pub p_nl_of_nl_opt: f64,
    /// Relative saving; absent unless both solves are feasible.
    pub saving: Option<f64>,
    pub feasible_ideal: bool,
    pub feasible_nl: bool,
}

/// Both models at each fraction of the max-min SE of one instance.
pub fn savings_point(
    data: &ProblemData,
    num_aps: usize,
    seed: u64,
    fractions: &[f64],
    options: &SolverOptions,
    bisection_tol: f64,
) -> Result<(MaxMinReport, Vec<SavingsRow>)> {
    if fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::InvalidConfig("fractions must lie in (0, 1]".into()));
    }
    let mm = max_min_sinr(data, bisection_tol, options)?;
    let se_mm = mm.se_mm.ok_or_else(|| {
        Error::InvalidConfig(format!(
            "max-min probe inconclusive for L={num_aps} seed={seed}, bracket [{}, {}]",
            mm.se_low, mm.se_high
        ))
    })?;
    if se_mm <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "max-min SE is zero for L={num_aps} seed={seed}"
        )));
    }
    let mut rows = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let se_target = fraction * se_mm;
        let d = data.with_sinr_targets(vec![se_to_sinr(se_target); data.num_users()])?;
        let ideal = penalty_minimize(&d, &options_for(options, PaModel::Ideal))?;
        let nl = penalty_minimize(&d, &options_for(options, PaModel::NonLinear))?;
        let saving = if ideal.feasible && nl.feasible {
            Some(relative_saving(&ideal.x_star, &nl.x_star, &d.power)?)
        } else {
            None
        };
        rows.push(SavingsRow {
            num_aps,
            seed,
            fraction,
            se_mm,
            se_target,
            p_nl_of_ideal_opt: ideal.consumed_nonlinear,
            p_nl_of_nl_opt: nl.consumed_nonlinear,
            saving,
            feasible_ideal: ideal.feasible,
            feasible_nl: nl.feasible,
        });
    }
    Ok((mm, rows))
}

fn options_for(options: &SolverOptions, model: PaModel) -> SolverOptions {
    SolverOptions {
        model,
        ..options.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsStudy {
    pub rows: Vec<SavingsRow>,
    /// `(L, seed, reason)` of groups aborted by a max-min failure.
    pub aborted: Vec<(usize, u64, String)>,
}

/// Relative saving against the load fraction. Points run in parallel; rows
/// keep axis order.
pub fn sweep_savings(
    base: &ScenarioConfig,
    aps: &[usize],
    seeds: &[u64],
    fractions: &[f64],
    options: &SolverOptions,
    bisection_tol: f64,
) -> Result<SavingsStudy> {
    check_axes(aps, seeds)?;
    if fractions.is_empty() {
        return Err(Error::InvalidConfig("fraction list must be non-empty".into()));
    }
    let points: Vec<(usize, u64)> = aps
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
        .collect();
    let results: Vec<Result<std::result::Result<Vec<SavingsRow>, String>>> = points
        .par_iter()
        .map(|&(l, seed)| {
            let cfg = with_axes(base, l, seed);
            // targets are replaced per fraction
            let inst = build_instance(&cfg, &Targets::common_se(1.0, cfg.num_users))?;
            match savings_point(&inst.data, l, seed, fractions, options, bisection_tol) {
                Ok((_, rows)) => Ok(Ok(rows)),
                Err(Error::InvalidConfig(reason)) => Ok(Err(reason)),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut study = SavingsStudy {
        rows: Vec::new(),
        aborted: Vec::new(),
    };
    for (&(l, seed), r) in points.iter().zip(results) {
        match r? {
            Ok(rows) => study.rows.extend(rows),
            Err(reason) => {
                log::warn!("savings group L={l} seed={seed} aborted: {reason}");
                study.aborted.push((l, seed, reason));
            }
        }
    }
    Ok(study)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityRow {
    pub seed: u64,
    pub ap_index: usize,
    pub ptx_ideal_w: f64,
    pub ptx_nl_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityCount {
    pub seed: u64,
    pub off_ideal: usize,
    pub off_nl: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityStudy {
    pub rows: Vec<SparsityRow>,
    pub counts: Vec<SparsityCount>,
    /// Seeds where either model was infeasible.
    pub skipped: Vec<u64>,
}

/// An AP counts as off when its transmit power is below this fraction of `P_max`.
pub const OFF_THRESHOLD: f64 = 1e-6;

pub fn off_count(per_ap_tx: &[f64], p_max: f64) -> usize {
    per_ap_tx.iter().filter(|&&p| p < OFF_THRESHOLD * p_max).count()
}

/// Per-AP transmit power under both models at a common SE target.
pub fn sparsity_study(
    base: &ScenarioConfig,
    seeds: &[u64],
    se_target: f64,
    options: &SolverOptions,
) -> Result<SparsityStudy> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("seed list must be non-empty".into()));
    }
    let solved: Vec<Result<(SolverResult, SolverResult)>> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = with_axes(base, base.num_aps, seed);
            let inst = build_instance(&cfg, &Targets::common_se(se_target, cfg.num_users))?;
            let ideal = penalty_minimize(&inst.data, &options_for(options, PaModel::Ideal))?;
            let nl = penalty_minimize(&inst.data, &options_for(options, PaModel::NonLinear))?;
            Ok((ideal, nl))
        })
        .collect();
    let mut study = SparsityStudy {
        rows: Vec::new(),
        counts: Vec::new(),
        skipped: Vec::new(),
    };
    for (&seed, r) in seeds.iter().zip(solved) {
        let (ideal, nl) = r?;
        if !(ideal.feasible && nl.feasible) {
            log::warn!("sparsity seed {seed} skipped: infeasible at SE {se_target}");
            study.skipped.push(seed);
            continue;
        }
        let mut order: Vec<usize> = (0..nl.per_ap_tx.len()).collect();
        order.sort_by(|&a, &b| nl.per_ap_tx[b].total_cmp(&nl.per_ap_tx[a]).then(a.cmp(&b)));
        study.rows.extend(order.into_iter().map(|l| SparsityRow {
            seed,
            ap_index: l,
            ptx_ideal_w: ideal.per_ap_tx[l],
            ptx_nl_w: nl.per_ap_tx[l],
        }));
        study.counts.push(SparsityCount {
            seed,
            off_ideal: off_count(&ideal.per_ap_tx, base.p_max),
            off_nl: off_count(&nl.per_ap_tx, base.p_max),
        });
    }
    Ok(study)
}
