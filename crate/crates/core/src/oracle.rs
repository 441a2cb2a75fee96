//! Small-scale reference solutions: closed form for one link, exhaustive
//! lattice search, feasibility checks and a max-min SINR bisection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::problem::{
    consumed_power, constraint_values, se_to_sinr, sinr_to_se, PaModel,
    PowerAllocation, ProblemData,
};
use crate::solver::{penalty_minimize, SolverOptions};

/// Largest `K * L` accepted by [`grid_search`].
pub const GRID_MAX_DIM: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub x_best: PowerAllocation,
    /// Consumed power of `x_best` in watts under the requested model.
    pub objective: f64,
    pub feasible: bool,
    /// Lattice step in sqrt(watts); zero for the closed form.
    pub resolution: f64,
    pub evaluations: u64,
}

/// Exact solution for a single AP serving a single user.
pub fn single_link_closed_form(data: &ProblemData, model: PaModel) -> Result<OracleReport> {
    if data.num_users() != 1 || data.num_aps() != 1 {
        return Err(Error::NotSingleLink {
            users: data.num_users(),
            aps: data.num_aps(),
        });
    }
    let b = data.b_k(0)[0];
    let c = data.block(0, 0)[0];
    let gamma = data.gamma_bar[0];
    let s2 = data.sigma_dl * data.sigma_dl;
    let denom = b * b - gamma * (c - b * b);
    let (rho, feasible) = if denom > 0.0 && b > 0.0 {
        let rho2 = gamma * s2 / denom;
        (rho2.sqrt(), rho2 <= data.power.p_max)
    } else {
        (0.0, false)
    };
    let x_best = PowerAllocation::from_vec(1, 1, vec![if feasible { rho } else { 0.0 }])?;
    Ok(OracleReport {
        objective: consumed_power(&x_best, model, &data.power).total,
        x_best,
        feasible,
        resolution: 0.0,
        evaluations: 1,
    })
}

/// Minimum consumed power over the lattice `{0, r, 2r, ...} <= sqrt(P_max)`
/// in every coordinate, subject to `g_k <= 0` for all users and the per-AP
/// caps. The search is a branch and bound that returns the exact lattice
/// minimum: partial objectives only grow, and the interference of a user
/// only grows as further users are assigned, so both prune safely. Ties go
/// to the lexicographically smallest lattice point.
pub fn grid_search(data: &ProblemData, resolution: f64, model: PaModel) -> Result<OracleReport> {
    let dim = data.dim();
    if dim > GRID_MAX_DIM {
        return Err(Error::GridTooLarge {
            dimension: dim,
            limit: GRID_MAX_DIM,
        });
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "grid resolution must be positive, got {resolution}"
        )));
    }
    let top = data.power.p_max.sqrt();
    let n = lattice_size(top, resolution);

    // nested coarse lattices seed the incumbent
    let mut levels = 0u32;
    while levels < 30 && (n >> (levels + 1)) >= 4 {
        levels += 1;
    }
    let mut best: Option<Candidate> = None;
    let mut evaluations = 0;
    for s in (0..=levels).rev() {
        let scale = 1u64 << s;
        let step = resolution * scale as f64;
        let search = LatticeSearch::new(data, model, step, lattice_size(top, step));
        let bound = best.as_ref().map_or(f64::INFINITY, |c| c.objective);
        let (found, evals) = search.run(bound);
        evaluations += evals;
        if let Some(mut c) = found {
            c.index.iter_mut().for_each(|i| *i *= scale);
            best = Some(match best {
                Some(b) if !c.better_than(&b) => b,
                _ => c,
            });
        }
    }

    let (values, feasible) = match &best {
        Some(c) => (c.index.iter().map(|&i| i as f64 * resolution).collect(), true),
        None => (vec![0.0; dim], false),
    };
    let x_best = PowerAllocation::for_problem(data, values)?;
    Ok(OracleReport {
        objective: consumed_power(&x_best, model, &data.power).total,
        x_best,
        feasible,
        resolution,
        evaluations,
    })
}

fn lattice_size(top: f64, step: f64) -> u64 {
    ((top / step) * (1.0 + 1e-12)).floor() as u64
}

#[derive(Debug, Clone)]
struct Candidate {
    objective: f64,
    index: Vec<u64>,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        self.objective < other.objective
            || (self.objective == other.objective && self.index < other.index)
    }
}

struct LatticeSearch<'a> {
    data: &'a ProblemData,
    model: PaModel,
    step: f64,
    n: u64,
    cap: f64,
    dim: usize,
    /// Dense `C_k`, row-major `KL x KL`.
    forms: Vec<Vec<f64>>,
    /// Lifted `b_k` scaled by the cone factor.
    signal: Vec<Vec<f64>>,
    noise: f64,
}

struct Branch {
    x: Vec<f64>,
    index: Vec<u64>,
    tx: Vec<f64>,
    bound: f64,
    best: Option<Candidate>,
    evaluations: u64,
}

/// `g(t) = sqrt(q0 + 2 q1 t + q2 t^2 + sigma^2) - (s0 + s1 t)` for one user
/// along the last coordinate.
struct LeafForm {
    q0: f64,
    q1: f64,
    q2: f64,
    s0: f64,
    s1: f64,
}

impl<'a> LatticeSearch<'a> {
    fn new(data: &'a ProblemData, model: PaModel, step: f64, n: u64) -> Self {
        let dim = data.dim();
        let forms = (0..data.num_users())
            .map(|k| data.c_k_dense(k).transpose().as_slice().to_vec())
            .collect();
        let signal = (0..data.num_users())
            .map(|k| {
                let cf = data.cone_factor(k);
                data.b_tilde(k).iter().map(|v| v * cf).collect()
            })
            .collect();
        Self {
            data,
            model,
            step,
            n,
            cap: data.power.p_max * (1.0 + 1e-12),
            dim,
            forms,
            signal,
            noise: data.sigma_dl * data.sigma_dl,
        }
    }

    /// Same arithmetic as `consumed_power_from_tx`.
    fn objective(&self, tx: &[f64]) -> f64 {
        let power = &self.data.power;
        match self.model {
            PaModel::Ideal => tx.iter().map(|p| p / power.eta).sum(),
            PaModel::NonLinear => tx.iter().map(|p| (p * power.p_max).sqrt() / power.eta_max).sum(),
        }
    }

    fn violation(&self, x: &[f64], k: usize) -> f64 {
        let c = &self.forms[k];
        let mut quad = 0.0;
        for (r, xr) in x.iter().enumerate() {
            if *xr != 0.0 {
                quad += xr * dot(&c[r * self.dim..(r + 1) * self.dim], x);
            }
        }
        (quad + self.noise).sqrt() - dot(&self.signal[k], x)
    }

    fn ap_power(&self, x: &[f64], ap: usize) -> f64 {
        x.iter()
            .skip(ap)
            .step_by(self.data.num_aps())
            .map(|v| v * v)
            .sum()
    }

    /// Branches over the first coordinate run in parallel, each with its own
    /// incumbent, so the result and the evaluation count are deterministic.
    fn run(&self, bound: f64) -> (Option<Candidate>, u64) {
        let fresh = || Branch {
            x: vec![0.0; self.dim],
            index: vec![0; self.dim],
            tx: vec![0.0; self.data.num_aps()],
            bound,
            best: None,
            evaluations: 0,
        };
        if self.dim == 1 {
            let mut b = fresh();
            self.leaf(&mut b);
            return (b.best, b.evaluations);
        }
        let results: Vec<(Option<Candidate>, u64)> = (0..=self.n)
            .into_par_iter()
            .map(|i| {
                let mut b = fresh();
                if self.assign(&mut b, 0, i) == Assign::Ok {
                    self.descend(&mut b, 1);
                }
                (b.best, b.evaluations)
            })
            .collect();
        let mut best: Option<Candidate> = None;
        let mut evaluations = 0;
        for (c, e) in results {
            evaluations += e;
            if let Some(c) = c {
                if best.as_ref().is_none_or(|b| c.better_than(b)) {
                    best = Some(c);
                }
            }
        }
        (best, evaluations)
    }

    /// Sets coordinate `p` to lattice index `i` and tests the prefix.
    fn assign(&self, b: &mut Branch, p: usize, i: u64) -> Assign {
        let l = self.data.num_aps();
        let ap = p % l;
        b.x[p] = i as f64 * self.step;
        b.index[p] = i;
        b.tx[ap] = self.ap_power(&b.x, ap);
        if b.tx[ap] > self.cap || self.objective(&b.tx) > b.bound {
            // both grow with the coordinate
            return Assign::Exhausted;
        }
        if ap == l - 1 {
            // user block complete: later users only add interference
            b.evaluations += 1;
            if (0..=p / l).any(|k| self.violation(&b.x, k) > 0.0) {
                return Assign::Infeasible;
            }
        }
        Assign::Ok
    }

    fn clear(&self, b: &mut Branch, p: usize) {
        let ap = p % self.data.num_aps();
        b.x[p] = 0.0;
        b.index[p] = 0;
        b.tx[ap] = self.ap_power(&b.x, ap);
    }

    fn descend(&self, b: &mut Branch, p: usize) {
        if p == self.dim - 1 {
            self.leaf(b);
            return;
        }
        for i in 0..=self.n {
            match self.assign(b, p, i) {
                Assign::Exhausted => break,
                Assign::Infeasible => continue,
                Assign::Ok => self.descend(b, p + 1),
            }
        }
        self.clear(b, p);
    }

    /// Last coordinate: the worst constraint is convex in it and the
    /// objective increasing, so the answer is the first feasible lattice
    /// value. Any feasible value is located by a ternary search on the
    /// worst violation, then the first one by bisection below it.
    fn leaf(&self, b: &mut Branch) {
        let p = self.dim - 1;
        let ap = p % self.data.num_aps();
        b.x[p] = 0.0;
        let rest = self.ap_power(&b.x, ap);
        let mut hi = self.n;
        while hi > 0 && rest + (hi as f64 * self.step).powi(2) > self.cap {
            hi -= 1;
        }
        if rest > self.cap {
            self.clear(b, p);
            return;
        }
        let forms: Vec<LeafForm> = (0..self.data.num_users())
            .map(|k| {
                let c = &self.forms[k];
                let row = &c[p * self.dim..(p + 1) * self.dim];
                let mut q0 = 0.0;
                for (r, xr) in b.x.iter().enumerate() {
                    if *xr != 0.0 {
                        q0 += xr * dot(&c[r * self.dim..(r + 1) * self.dim], &b.x);
                    }
                }
                LeafForm {
                    q0: q0 + self.noise,
                    q1: dot(row, &b.x),
                    q2: row[p],
                    s0: dot(&self.signal[k], &b.x),
                    s1: self.signal[k][p],
                }
            })
            .collect();
        let step = self.step;
        let mut evaluations = 0u64;
        let mut eval = |i: u64| {
            let t = i as f64 * step;
            evaluations += 1;
            forms
                .iter()
                .map(|f| (f.q0 + t * (2.0 * f.q1 + t * f.q2)).sqrt() - (f.s0 + f.s1 * t))
                .fold(f64::NEG_INFINITY, f64::max)
        };

        let mut feasible = None;
        if eval(0) <= 0.0 {
            feasible = Some(0);
        } else {
            let (mut lo, mut up) = (0u64, hi);
            while up - lo > 2 {
                let m1 = lo + (up - lo) / 3;
                let m2 = up - (up - lo) / 3;
                let (f1, f2) = (eval(m1), eval(m2));
                if f1 <= 0.0 {
                    feasible = Some(m1);
                    break;
                }
                if f2 <= 0.0 {
                    feasible = Some(m2);
                    break;
                }
                if f1 < f2 {
                    up = m2 - 1;
                } else {
                    lo = m1 + 1;
                }
            }
            if feasible.is_none() {
                feasible = (lo..=up).find(|&i| eval(i) <= 0.0);
            }
        }
        if let Some(mut first) = feasible {
            // the violation is non-increasing on [0, first]
            let mut lo = 0u64;
            while first > 0 && first - lo > 1 {
                let mid = lo + (first - lo) / 2;
                if eval(mid) <= 0.0 {
                    first = mid;
                } else {
                    lo = mid;
                }
            }
            let v = first as f64 * self.step;
            b.x[p] = v;
            b.index[p] = first;
            b.tx[ap] = self.ap_power(&b.x, ap);
            let objective = self.objective(&b.tx);
            if objective <= b.bound {
                let c = Candidate {
                    objective,
                    index: b.index.clone(),
                };
                if b.best.as_ref().is_none_or(|cur| c.better_than(cur)) {
                    b.bound = objective;
                    b.best = Some(c);
                }
            }
        }
        b.evaluations += evaluations;
        self.clear(b, p);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Assign {
    Ok,
    Infeasible,
    /// Larger values of this coordinate cannot help either.
    Exhausted,
}

/// Per-user and per-AP constraint status of an allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub user_feasible: Vec<bool>,
    /// `g_k(x)`; non-positive means the SINR target is met.
    pub margins: Vec<f64>,
    pub ap_feasible: Vec<bool>,
    pub ap_norms: Vec<f64>,
    pub feasible: bool,
}

/// `g_k(x) <= tol * sqrt(x^T C_k x + sigma^2)` per user and
/// `||x_l|| <= sqrt(P_max) (1 + tol)` per AP.
pub fn check_feasibility(x: &PowerAllocation, data: &ProblemData, tol: f64) -> Result<FeasibilityReport> {
    data.check_dim(x)?;
    let margins = constraint_values(&x.values, data);
    let user_feasible: Vec<bool> = margins
        .iter()
        .enumerate()
        .map(|(k, &g)| {
            // g_k + c_k b_k^T rho_k recovers sqrt(x^T C_k x + sigma^2)
            let root = g + data.cone_factor(k) * dot_signal(x, data, k);
            g <= tol * root
        })
        .collect();
    let cap = data.power.p_max.sqrt() * (1.0 + tol);
    let ap_norms: Vec<f64> = x.per_ap_transmit_power().iter().map(|p| p.sqrt()).collect();
    let ap_feasible: Vec<bool> = ap_norms.iter().map(|&n| n <= cap).collect();
    let feasible = user_feasible.iter().chain(&ap_feasible).all(|&f| f);
    Ok(FeasibilityReport {
        user_feasible,
        margins,
        ap_feasible,
        ap_norms,
        feasible,
    })
}

fn dot_signal(x: &PowerAllocation, data: &ProblemData, k: usize) -> f64 {
    dot(data.b_k(k), x.rho_k(k))
}

/// Outcome of the max-min SINR bisection. `se_low` is always achieved by
/// `x_low` (or is zero); `se_high` was probed infeasible or is an upper bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMinReport {
    pub se_low: f64,
    pub se_high: f64,
    /// Common achievable SE, absent when a probe was inconclusive.
    pub se_mm: Option<f64>,
    pub sinr_mm: Option<f64>,
    pub x_low: Option<PowerAllocation>,
    pub probes: usize,
    pub bisection_tol: f64,
}

impl MaxMinReport {
    pub fn sinr_low(&self) -> f64 {
        se_to_sinr(self.se_low)
    }

    pub fn sinr_high(&self) -> f64 {
        se_to_sinr(self.se_high)
    }
}

enum Probe {
    Feasible(PowerAllocation),
    Infeasible,
    Inconclusive,
}

/// Largest common SINR all users can reach under the per-AP caps, by
/// bisection on the SE with pure feasibility solves as probes. The targets
/// stored in `data` are ignored.
pub fn max_min_sinr(data: &ProblemData, bisection_tol: f64, options: &SolverOptions) -> Result<MaxMinReport> {
    if !(bisection_tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "bisection tolerance must be positive, got {bisection_tol}"
        )));
    }
    let options = SolverOptions {
        power_weight: 0.0,
        ..options.clone()
    };
    let k = data.num_users();
    let s2 = data.sigma_dl * data.sigma_dl;
    // SINR_k <= (b_k^T rho_k)^2 / sigma^2 <= (||b_k||_1 sqrt(P_max))^2 / sigma^2
    let gamma_ub = (0..k)
        .map(|u| data.b_k(u).iter().sum::<f64>().powi(2) * data.power.p_max / s2)
        .fold(f64::INFINITY, f64::min);

    let mut report = MaxMinReport {
        se_low: 0.0,
        se_high: sinr_to_se(gamma_ub),
        se_mm: None,
        sinr_mm: None,
        x_low: None,
        probes: 0,
        bisection_tol,
    };
    if gamma_ub <= 0.0 {
        report.se_mm = Some(0.0);
        report.sinr_mm = Some(0.0);
        report.x_low = Some(PowerAllocation::for_problem(data, vec![0.0; data.dim()])?);
        return Ok(report);
    }

    let probe = |se: f64, report: &mut MaxMinReport| -> Result<Probe> {
        report.probes += 1;
        let d = data.with_sinr_targets(vec![se_to_sinr(se); k])?;
        let r = penalty_minimize(&d, &options)?;
        Ok(if r.feasible {
            Probe::Feasible(r.x_star)
        } else if r.trace.last().is_some_and(|s| s.hit_cap) {
            Probe::Inconclusive
        } else {
            Probe::Infeasible
        })
    };

    // the bound should be infeasible; grow it if it is not
    for _ in 0..8 {
        match probe(report.se_high, &mut report)? {
            Probe::Feasible(x) => {
                report.se_low = report.se_high;
                report.x_low = Some(x);
                report.se_high *= 2.0;
            }
            Probe::Infeasible => break,
            Probe::Inconclusive => return Ok(report),
        }
    }

    while report.se_high - report.se_low > bisection_tol {
        let mid = 0.5 * (report.se_low + report.se_high);
        match probe(mid, &mut report)? {
            Probe::Feasible(x) => {
                report.se_low = mid;
                report.x_low = Some(x);
            }
            Probe::Infeasible => report.se_high = mid,
            Probe::Inconclusive => return Ok(report),
        }
    }
    report.se_mm = Some(report.se_low);
    report.sinr_mm = Some(se_to_sinr(report.se_low));
    if report.x_low.is_none() {
        report.x_low = Some(PowerAllocation::for_problem(data, vec![0.0; data.dim()])?);
    }
    Ok(report)
}
