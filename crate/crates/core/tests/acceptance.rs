//! End-to-end checks. Each test writes one `criterion N: PASS|FAIL` line
//! straight to stdout, so the lines show up without `--nocapture`.

mod common;

use std::io::Write;

use cfpower::experiments::{build_instance, median, sparsity_study, sweep_runtime, sweep_savings};
use cfpower::oracle::{check_feasibility, grid_search, max_min_sinr, single_link_closed_form};
use cfpower::problem::{constraint_values, consumed_power, quadratic_form, se_to_sinr, sinr};
use cfpower::solver::{apg_minimize, exact_penalized_cost, Objective};
use cfpower::statistics::{estimate_channels, run_pipeline, sample_channels};
use cfpower::{
    assemble, penalty_minimize, EffectiveStatistics, PaModel, PowerAllocation, ProblemData, Scenario,
    ScenarioConfig, SolverOptions, Targets,
};
use rand::Rng;

use common::{mean_and_se, rng};

fn report(n: u32, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" }).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {n}: {detail}");
}

/// Problem data built from a generated deployment, with the statistics
/// passed through their JSON file format first.
fn instance(config: &ScenarioConfig, targets: &Targets) -> ProblemData {
    let inst = build_instance(config, targets).unwrap();
    let stats = EffectiveStatistics::from_json(&inst.statistics.to_json().unwrap()).unwrap();
    assemble(&stats, targets, inst.data.power).unwrap()
}

fn tiny_config(num_aps: usize, num_users: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        num_aps,
        num_users,
        seed,
        mc_realizations: 200,
        ..ScenarioConfig::default()
    }
}

/// Tiny instance whose max-min SE is at least `floor`, with a common target
/// of `fraction` times that SE. Seeds are tried in order from `seed`.
fn tiny_instance(num_aps: usize, num_users: usize, seed: u64, fraction: f64, floor: f64) -> (ProblemData, u64) {
    for s in seed.. {
        let data = instance(&tiny_config(num_aps, num_users, s), &Targets::common_se(1.0, num_users));
        let mm = max_min_sinr(&data, 0.01, &SolverOptions::default()).unwrap();
        if mm.se_mm.is_some() && mm.se_low >= floor {
            let target = se_to_sinr(fraction * mm.se_low);
            return (data.with_sinr_targets(vec![target; num_users]).unwrap(), s);
        }
    }
    unreachable!()
}

#[test]
fn criterion_1_oracle_equivalence() {
    let shapes = [(1, 1), (2, 1), (1, 2), (3, 1), (1, 3), (2, 2), (1, 4), (3, 1), (2, 1), (1, 2)];
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..50 {
        let (mut l, mut k) = shapes[i % shapes.len()];
        if (l, k) == (2, 2) && (i / shapes.len()) % 2 == 1 {
            (l, k) = (4, 1);
        }
        // near the max-min SE the optimum spends a sizeable share of P_max,
        // where one lattice step is a small fraction of the amplitudes
        let fraction = r.random_range(0.85..0.97);
        let (data, seed) = tiny_instance(l, k, 1000 * i as u64, fraction, 0.2);
        let res = penalty_minimize(&data, &SolverOptions::default()).unwrap();
        let grid = grid_search(&data, 2e-3 * data.power.p_max.sqrt(), PaModel::NonLinear).unwrap();
        let err = if res.feasible && grid.feasible {
            (res.consumed_nonlinear - grid.objective).abs() / grid.objective
        } else {
            f64::INFINITY
        };
        worst = worst.max(err);
        if err > 0.01 {
            failures.push(format!("L{l} K{k} seed {seed}: {err:.3e}"));
        }
    }

    // single link, solved to the precision the closed form allows
    let tight = SolverOptions {
        epsilon: 1e-12,
        eps_feas: 1e-10,
        max_apg_iters: 100_000,
        max_penalty_iters: 80,
        ..SolverOptions::default()
    };
    let mut worst_single: f64 = 0.0;
    for i in 0..10 {
        let (data, seed) = tiny_instance(1, 1, 77_000 + 100 * i, 0.3 + 0.06 * i as f64, 0.2);
        let res = penalty_minimize(&data, &tight).unwrap();
        let exact = single_link_closed_form(&data, PaModel::NonLinear).unwrap();
        let err = (res.consumed_nonlinear - exact.objective).abs() / exact.objective;
        worst_single = worst_single.max(err);
        if !(err <= 1e-6) {
            failures.push(format!("single link seed {seed}: {err:.3e}"));
        }
    }
    report(
        1,
        failures.is_empty(),
        &format!("max rel. error vs grid {worst:.3e}, vs closed form {worst_single:.3e}; over tolerance: {failures:?}"),
    );
}

#[test]
fn criterion_2_feasibility() {
    let mut r = rng(102);
    let mut flagged = 0;
    let mut bad = Vec::new();
    for i in 0..100u64 {
        let l = r.random_range(1..=25);
        let k = r.random_range(1..=8);
        let se = r.random_range(0.1..4.0);
        let cfg = ScenarioConfig {
            num_aps: l,
            num_users: k,
            seed: 5000 + i,
            mc_realizations: 200,
            ..ScenarioConfig::default()
        };
        let data = instance(&cfg, &Targets::common_se(se, k));
        let model = if i % 2 == 0 { PaModel::NonLinear } else { PaModel::Ideal };
        let res = penalty_minimize(&data, &SolverOptions::with_model(model)).unwrap();
        if !res.feasible {
            continue;
        }
        flagged += 1;
        let x = &res.x_star.values;
        let quad: Vec<f64> = (0..k).map(|u| quadratic_form(&res.x_star, u, &data).unwrap()).collect();
        let s2 = data.sigma_dl * data.sigma_dl;
        let users_ok = constraint_values(x, &data)
            .iter()
            .zip(&quad)
            .all(|(g, q)| *g <= 1e-5 * (q + s2).sqrt());
        let caps_ok = res
            .x_star
            .per_ap_transmit_power()
            .iter()
            .all(|p| p.sqrt() <= data.power.p_max.sqrt() * (1.0 + 1e-9));
        let checked = check_feasibility(&res.x_star, &data, 1e-5).unwrap().feasible;
        if !(users_ok && caps_ok && checked) {
            bad.push(i);
        }
    }
    report(2, bad.is_empty(), &format!("{flagged} of 100 solves flagged feasible, failing re-check: {bad:?}"));
}

#[test]
fn criterion_3_gradient() {
    let mut r = rng(103);
    let mu = SolverOptions::default().mu_s;
    let mut tested = 0;
    let mut worst: f64 = 0.0;
    let mut seed = 0;
    while tested < 100 {
        seed += 1;
        let (l, k) = (r.random_range(1..=5), r.random_range(1..=4));
        let data = instance(&tiny_config(l, k, 9000 + seed), &Targets::common_se(r.random_range(0.5..3.0), k))
            .noise_normalized();
        let x: Vec<f64> = (0..k * l).map(|_| r.random_range(0.0..1.0 / (k as f64).sqrt())).collect();
        let tx = PowerAllocation::from_vec(k, l, x.clone()).unwrap().per_ap_transmit_power();
        if tx.iter().any(|p| p.sqrt() <= 10.0 * mu) || constraint_values(&x, &data).iter().any(|g| g.abs() <= 1e-8) {
            continue;
        }
        let model = if seed % 2 == 0 { PaModel::NonLinear } else { PaModel::Ideal };
        let obj = Objective::new(&data, 10f64.powf(r.random_range(-1.0..3.0)), model, mu);
        let analytic = obj.gradient(&x);
        let h = 1e-6;
        let numeric: Vec<f64> = (0..x.len())
            .map(|i| {
                let mut up = x.clone();
                let mut down = x.clone();
                up[i] += h;
                down[i] -= h;
                (obj.value(&up) - obj.value(&down)) / (2.0 * h)
            })
            .collect();
        let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
        tested += 1;
    }
    report(3, worst <= 1e-5, &format!("max relative error {worst:.3e} over {tested} points"));
}

#[test]
fn criterion_4_monotone_inner_loop() {
    let mut r = rng(104);
    let mut violations = 0;
    let mut accepted = 0usize;
    let mut bad_lambda = 0;
    for i in 0..40u64 {
        let (l, k) = (r.random_range(1..=12), r.random_range(1..=5));
        let data = instance(&tiny_config(l, k, 12_000 + i), &Targets::common_se(r.random_range(0.3..3.0), k));
        let model = if i % 2 == 0 { PaModel::NonLinear } else { PaModel::Ideal };
        let options = SolverOptions {
            record_history: true,
            ..SolverOptions::with_model(model)
        };
        let res = penalty_minimize(&data, &options).unwrap();
        for h in res.objective_history.as_ref().unwrap() {
            accepted += h.len();
            violations += h.windows(2).filter(|w| w[1] > w[0]).count();
        }
        bad_lambda += res
            .trace
            .iter()
            .enumerate()
            .filter(|(i, s)| s.lambda != 0.1 * 3f64.powi(*i as i32))
            .count();
    }
    // standalone inner solves from random starts
    for i in 0..40u64 {
        let data = instance(&tiny_config(4, 3, 13_000 + i), &Targets::common_se(1.0, 3)).noise_normalized();
        let x0: Vec<f64> = (0..12).map(|_| r.random_range(0.0..0.6)).collect();
        let options = SolverOptions {
            record_history: true,
            ..SolverOptions::default()
        };
        let out = apg_minimize(&data, 10f64.powf(r.random_range(-1.0..6.0)), &x0, &options);
        accepted += out.history.len();
        violations += out.history.windows(2).filter(|w| w[1] > w[0]).count();
    }
    report(
        4,
        violations == 0 && bad_lambda == 0,
        &format!("{violations} increases over {accepted} recorded values, {bad_lambda} off-schedule lambdas"),
    );
}

#[test]
fn criterion_5_smoothing_bound() {
    let mut r = rng(105);
    let mu = SolverOptions::default().mu_s;
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_excess: f64 = f64::NEG_INFINITY;
    let datasets: Vec<ProblemData> = (0..5)
        .map(|s| instance(&tiny_config(10, 3, 15_000 + s), &Targets::common_se(1.0, 3)))
        .collect();
    for i in 0..10_000 {
        let data = &datasets[i % datasets.len()];
        let (k, l) = (data.num_users(), data.num_aps());
        // span the quadratic zone, the knee and the linear zone
        let scale = 10f64.powf(r.random_range(-9.0..0.0));
        let x: Vec<f64> = (0..k * l)
            .map(|_| if r.random_bool(0.2) { 0.0 } else { r.random_range(0.0..scale) })
            .collect();
        let smooth = Objective::new(data, 0.0, PaModel::NonLinear, mu).value(&x);
        let exact = consumed_power(&PowerAllocation::from_vec(k, l, x.clone()).unwrap(), PaModel::NonLinear, &data.power).total;
        debug_assert_eq!(exact, exact_penalized_cost(&x, 0.0, PaModel::NonLinear, data));
        let bound = l as f64 * data.power.p_max.sqrt() * mu / (2.0 * data.power.eta_max);
        let gap = (smooth - exact).abs();
        worst_ratio = worst_ratio.max(gap / bound);
        // the bound is attained once every AP is past the knee, so the
        // subtraction may round a few ulps of `exact` to either side of it
        let rounding = 8.0 * f64::EPSILON * exact;
        worst_excess = worst_excess.max((gap - bound) / exact.max(f64::MIN_POSITIVE));
        if gap > bound + rounding {
            violations += 1;
        }
    }
    report(
        5,
        violations == 0,
        &format!("{violations} violations in 10^4 samples, max gap / bound {worst_ratio:.6}, max excess {worst_excess:.2e} of the total"),
    );
}

#[test]
fn criterion_6_savings_trend() {
    let base = ScenarioConfig {
        num_aps: 25,
        num_users: 8,
        ..ScenarioConfig::default()
    };
    let seeds: Vec<u64> = (0..20).collect();
    let fractions = [0.1, 0.3, 0.5, 0.7, 0.9];
    let study = sweep_savings(&base, &[25], &seeds, &fractions, &SolverOptions::default(), 0.01).unwrap();
    let at = |f: f64| -> Vec<f64> { study.rows.iter().filter(|r| r.fraction == f).filter_map(|r| r.saving).collect() };
    let low = median(&at(0.1));
    let high = median(&at(0.9));
    let all: Vec<f64> = study.rows.iter().filter_map(|r| r.saving).collect();
    let min = all.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = match (low, high) {
        (Some(lo), Some(hi)) => (0.05..=0.40).contains(&lo) && lo >= hi && min >= -1e-6,
        _ => false,
    };
    report(
        6,
        pass,
        &format!(
            "median saving {low:?} at 0.1, {high:?} at 0.9, min {min:.3e} over {} feasible pairs, {} seeds aborted",
            all.len(),
            study.aborted.len()
        ),
    );
}

#[test]
fn criterion_7_sparsity() {
    let base = ScenarioConfig {
        num_aps: 15,
        num_users: 5,
        area_side: 200.0,
        ..ScenarioConfig::default()
    };
    let seeds: Vec<u64> = (0..20).collect();
    let study = sparsity_study(&base, &seeds, 6.0, &SolverOptions::default()).unwrap();
    let ideal: Vec<f64> = study.counts.iter().map(|c| c.off_ideal as f64).collect();
    let nl: Vec<f64> = study.counts.iter().map(|c| c.off_nl as f64).collect();
    let (mi, mn) = (median(&ideal), median(&nl));
    let pass = matches!((mi, mn), (Some(a), Some(b)) if b > a);
    report(
        7,
        pass,
        &format!("median APs off: ideal {mi:?}, non-linear {mn:?} over {} seeds ({} skipped)", study.counts.len(), study.skipped.len()),
    );
}

#[test]
fn criterion_8_runtime_scaling() {
    let base = ScenarioConfig {
        num_users: 15,
        ..ScenarioConfig::default()
    };
    let seeds: Vec<u64> = (0..5).collect();
    let study = sweep_runtime(&base, &[25, 50, 100], &seeds, 1.0, &SolverOptions::default()).unwrap();
    let pass = study.slope.is_some_and(|s| s <= 2.5);
    report(8, pass, &format!("median ms per L {:?}, slope {:?}", study.medians, study.slope));
}

#[test]
fn criterion_9_constraint_sinr_equivalence() {
    let mut r = rng(109);
    let mut compared = 0;
    let mut disagreements = 0;
    for i in 0..1000u64 {
        let (l, k) = (r.random_range(1..=3), r.random_range(1..=3));
        let cfg = ScenarioConfig {
            mc_realizations: 20,
            ..tiny_config(l, k, 20_000 + i)
        };
        let data = instance(&cfg, &Targets::common_se(1.0, k));
        let x = PowerAllocation::from_vec(k, l, (0..k * l).map(|_| r.random_range(0.0..0.5)).collect()).unwrap();
        let s = sinr(&x, &data).unwrap();
        // targets scattered around the achieved SINR so both signs occur
        let targets: Vec<f64> = s.iter().map(|v| v * 2f64.powf(r.random_range(-2.0..2.0))).collect();
        let data = data.with_sinr_targets(targets).unwrap();
        let g = constraint_values(&x.values, &data);
        for u in 0..k {
            let signal: f64 = data.b_k(u).iter().zip(x.rho_k(u)).map(|(b, p)| b * p).sum();
            if signal > 0.0 {
                compared += 1;
                let gap = data.gamma_bar[u] - s[u];
                if (g[u] > 0.0) != (gap > 0.0) || (g[u] < 0.0) != (gap < 0.0) {
                    disagreements += 1;
                }
            }
        }
    }
    report(9, disagreements == 0, &format!("{disagreements} disagreements in {compared} comparisons"));
}

#[test]
fn criterion_10_statistics_sanity() {
    // second moment against squared mean on default deployments
    let mut worst_z: f64 = f64::INFINITY;
    let mut jensen_bad = 0;
    let mut entries = 0;
    for seed in 0..10 {
        let cfg = ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        };
        let p = run_pipeline(&Scenario::generate(&cfg).unwrap()).unwrap();
        let stats = &p.statistics;
        let (m, kk, l) = (p.channels.realizations, stats.num_users, stats.num_aps);
        for k in 0..kk {
            for ap in 0..l {
                let samples: Vec<f64> = (0..m)
                    .map(|t| {
                        p.channels
                            .get(t, ap, k)
                            .iter()
                            .zip(p.precoders.vectors.get(t, ap, k))
                            .map(|(h, w)| h.conj() * w)
                            .sum::<cfpower::linalg::C64>()
                            .norm_sqr()
                    })
                    .collect();
                let (_, se) = mean_and_se(&samples);
                let gap = stats.block(k, k)[ap * l + ap] - stats.b_k(k)[ap].powi(2);
                entries += 1;
                if se > 0.0 {
                    worst_z = worst_z.min(gap / se);
                }
                if gap < -3.0 * se {
                    jensen_bad += 1;
                }
            }
        }
    }

    // error covariance of the channel estimate against its closed form
    let cfg = ScenarioConfig {
        num_aps: 2,
        num_users: 2,
        antennas: 2,
        area_side: 100.0,
        seed: 3,
        ..ScenarioConfig::default()
    };
    let s = Scenario::generate(&cfg).unwrap();
    let m = 10_000;
    let h = sample_channels(&s, m, 31).unwrap();
    let est = estimate_channels(&h, &s, 31).unwrap();
    let n = cfg.antennas;
    let mut identity_bad = Vec::new();
    for ap in 0..2 {
        for k in 0..2 {
            let mut dist2 = 0.0;
            let mut se2 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let (mut re, mut im) = (Vec::with_capacity(m), Vec::with_capacity(m));
                    for t in 0..m {
                        let ei = h.get(t, ap, k)[i] - est.estimates.get(t, ap, k)[i];
                        let ej = h.get(t, ap, k)[j] - est.estimates.get(t, ap, k)[j];
                        let v = ei * ej.conj();
                        re.push(v.re);
                        im.push(v.im);
                    }
                    let (mr, sr) = mean_and_se(&re);
                    let (mi, si) = mean_and_se(&im);
                    let target = est.error_covariances[ap * 2 + k][(i, j)];
                    dist2 += (mr - target.re).powi(2) + (mi - target.im).powi(2);
                    se2 += sr * sr + si * si;
                }
            }
            if dist2.sqrt() > 3.0 * se2.sqrt() {
                identity_bad.push((ap, k, dist2.sqrt() / se2.sqrt()));
            }
        }
    }
    report(
        10,
        jensen_bad == 0 && identity_bad.is_empty(),
        &format!(
            "Jensen: {jensen_bad} of {entries} entries below -3 SE (min z {worst_z:.2}); error covariance outside 3 SE: {identity_bad:?}"
        ),
    );
}
