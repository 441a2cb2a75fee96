#![allow(dead_code)]

use cfpower::linalg::C64;
use cfpower::scenario::generate_geometry;
use cfpower::statistics::{LinkVectors, STATISTICS_FORMAT_VERSION};
use cfpower::{assemble, EffectiveStatistics, PowerParams, ProblemData, Scenario, ScenarioConfig, Targets};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Synthetic statistics: `b` uniform in `[0.2, 1]`, each block `A A^T` with
/// `A` uniform in `[0, scale)`, plus `b_k b_k^T` on the diagonal blocks so
/// that the second moment dominates the squared mean.
pub fn random_statistics(k: usize, l: usize, scale: f64, sigma2: f64, rng: &mut impl Rng) -> EffectiveStatistics {
    let b: Vec<f64> = (0..k * l).map(|_| rng.random_range(0.2..1.0)).collect();
    let mut c = vec![0.0; k * k * l * l];
    for u in 0..k {
        for i in 0..k {
            let a = DMatrix::<f64>::from_fn(l, l, |_, _| rng.random_range(0.0..scale));
            let mut block = &a * a.transpose();
            if u == i {
                let bu = nalgebra::DVector::from_column_slice(&b[u * l..(u + 1) * l]);
                block += &bu * bu.transpose();
            }
            let o = (u * k + i) * l * l;
            c[o..o + l * l].copy_from_slice(block.as_slice());
        }
    }
    EffectiveStatistics {
        format_version: STATISTICS_FORMAT_VERSION,
        num_users: k,
        num_aps: l,
        sigma_dl2: sigma2,
        b,
        c,
        max_imag_ratio: None,
        negative_b_fraction: None,
    }
}

pub fn unit_power() -> PowerParams {
    PowerParams {
        p_max: 1.0,
        eta_max: std::f64::consts::FRAC_PI_4,
        eta: std::f64::consts::FRAC_PI_4,
    }
}

pub fn random_problem(k: usize, l: usize, sinr: f64, rng: &mut impl Rng) -> ProblemData {
    let stats = random_statistics(k, l, 0.3, 0.05, rng);
    assemble(&stats, &Targets::Sinr(vec![sinr; k]), unit_power()).unwrap()
}

/// The scalar instance `b = 1, C = 2, sigma^2 = 1`.
pub fn scalar_problem(sinr: f64) -> ProblemData {
    let stats = EffectiveStatistics {
        format_version: STATISTICS_FORMAT_VERSION,
        num_users: 1,
        num_aps: 1,
        sigma_dl2: 1.0,
        b: vec![1.0],
        c: vec![2.0],
        max_imag_ratio: None,
        negative_b_fraction: None,
    };
    assemble(&stats, &Targets::Sinr(vec![sinr]), unit_power()).unwrap()
}

/// Real symmetric PSD matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> DMatrix<C64> {
    let a = DMatrix::<C64>::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let q = a.qr().q();
    let d = DMatrix::<C64>::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
        C64::new(rng.random_range(lo..hi), 0.0)
    }));
    let m = &q * d * q.adjoint();
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Geometry from `config` with the covariances replaced by `cov(l, k)`.
pub fn scenario_with(config: ScenarioConfig, cov: impl Fn(usize, usize) -> DMatrix<C64>) -> Scenario {
    let mut s = generate_geometry(&config).unwrap();
    let k = config.num_users;
    s.covariances = (0..config.num_aps * k).map(|link| cov(link / k, link % k)).collect();
    s
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Per-realization samples of `Re(a)` for `b` and `Re(a_l conj(a_m))` for `C`,
/// where `a_l = h_lk^H w_li`.
pub fn entry_samples(h: &LinkVectors, w: &LinkVectors) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (m, kk, l) = (h.realizations, h.num_users, h.num_aps);
    let mut b = vec![Vec::with_capacity(m); kk * l];
    let mut c = vec![Vec::with_capacity(m); kk * kk * l * l];
    let mut a = vec![C64::new(0.0, 0.0); l];
    for t in 0..m {
        for k in 0..kk {
            for i in 0..kk {
                for (ap, av) in a.iter_mut().enumerate() {
                    *av = h.get(t, ap, k).iter().zip(w.get(t, ap, i)).map(|(x, y)| x.conj() * y).sum();
                }
                if k == i {
                    for ap in 0..l {
                        b[k * l + ap].push(a[ap].re);
                    }
                }
                for p in 0..l {
                    for q in 0..l {
                        c[(k * kk + i) * l * l + p * l + q].push((a[p] * a[q].conj()).re);
                    }
                }
            }
        }
    }
    (b, c)
}
