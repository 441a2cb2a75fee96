//! Penalty method with a monotone accelerated projected-gradient inner solver.
//!
//! The SINR constraints are moved into the cost as `lambda * sum_k [g_k]_+^2`
//! and `lambda` grows geometrically until every constraint holds to a
//! relative tolerance. Each penalized subproblem only keeps the per-AP power
//! caps, which admit a closed-form projection.

pub mod apg;
pub mod objective;
pub mod projection;
pub mod smoothing;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use apg::{apg_minimize, apg_minimize_warm, armijo_search, armijo_step, next_momentum, ApgOutcome, ArmijoStep};
pub use objective::{constraint_gradient, Objective};
pub use projection::{project, project_in_place};
pub use smoothing::{smoothed_norm, smoothed_norm_grad_factor};

use crate::error::{Error, Result};
use crate::problem::{
    self, consumed_power_from_tx, user_forms, PaModel, PowerAllocation, ProblemData,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Penalty weight of the first outer iteration.
    pub lambda0: f64,
    /// Penalty growth factor.
    pub zeta: f64,
    /// Smoothing width of the non-linear PA term, sqrt(watts).
    pub mu_s: f64,
    /// Armijo sufficient-decrease constant.
    pub tau: f64,
    /// Inner loop stops once the relative decrease falls below this.
    pub epsilon: f64,
    /// Relative feasibility tolerance of the outer loop.
    pub eps_feas: f64,
    pub max_penalty_iters: usize,
    pub max_apg_iters: usize,
    /// Inner iterations before the relative-decrease exit is tested.
    pub min_apg_iters: usize,
    pub alpha_init: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub model: PaModel,
    pub init_seed: u64,
    /// Upper end of the uniform start point `[0, init_scale]`.
    pub init_scale: f64,
    /// Weight of the consumed-power term. Zero gives a pure feasibility search.
    pub power_weight: f64,
    /// Solve in noise-normalized units (`b / sigma`, `C / sigma^2`).
    pub normalize_noise: bool,
    /// Keep the accepted-objective sequence of every inner solve.
    pub record_history: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lambda0: 0.1,
            zeta: 3.0,
            mu_s: 1e-7,
            tau: 1e-4,
            epsilon: 1e-3,
            eps_feas: 1e-5,
            max_penalty_iters: 40,
            max_apg_iters: 5000,
            min_apg_iters: 10,
            alpha_init: 1.0,
            backtrack_factor: 0.5,
            max_backtracks: 60,
            model: PaModel::NonLinear,
            init_seed: 0,
            init_scale: 1e-10,
            power_weight: 1.0,
            normalize_noise: true,
            record_history: false,
        }
    }
}

impl SolverOptions {
    pub fn with_model(model: PaModel) -> Self {
        Self {
            model,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.zeta > 1.0) {
            return bad("zeta must exceed 1");
        }
        if !(self.mu_s > 0.0) {
            return bad("mu_s must be positive");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.lambda0 > 0.0) || !(self.alpha_init > 0.0) {
            return bad("lambda0 and alpha_init must be positive");
        }
        if !(self.eps_feas >= 0.0) || !(self.power_weight >= 0.0) || !(self.init_scale >= 0.0) {
            return bad("eps_feas, power_weight and init_scale must be nonnegative");
        }
        Ok(())
    }

    /// Penalty weight of outer iteration `i` (0-based), `lambda0 * zeta^i`.
    pub fn lambda_at(&self, i: usize) -> f64 {
        self.lambda0 * self.zeta.powi(i as i32)
    }
}

/// One outer iteration of the penalty loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyStep {
    pub penalty_iter: usize,
    pub lambda: f64,
    pub apg_iters: usize,
    /// Penalized cost at the end of the inner solve (in solver units).
    pub f_value: f64,
    /// `max_k [g_k]_+ / sqrt(x^T C_k x + sigma^2)`.
    pub max_violation: f64,
    pub hit_cap: bool,
    pub stalls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub x_star: PowerAllocation,
    pub model: PaModel,
    /// Every user meets the feasibility rule.
    pub feasible: bool,
    pub user_feasible: Vec<bool>,
    /// `g_k(x*)` in the units of the input data.
    pub margins: Vec<f64>,
    pub per_ap_tx: Vec<f64>,
    pub consumed_ideal: f64,
    pub consumed_nonlinear: f64,
    pub trace: Vec<PenaltyStep>,
    pub penalty_iterations: usize,
    pub apg_iterations: usize,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_history: Option<Vec<Vec<f64>>>,
}

impl SolverResult {
    /// Trace as CSV with header `penalty_iter,lambda,apg_iters,f_value,max_violation`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("penalty_iter,lambda,apg_iters,f_value,max_violation\n");
        for s in &self.trace {
            out.push_str(&format!(
                "{},{:e},{},{:e},{:e}\n",
                s.penalty_iter, s.lambda, s.apg_iters, s.f_value, s.max_violation
            ));
        }
        out
    }

    /// Consumed power under `model`, unsmoothed.
    pub fn consumed(&self, model: PaModel) -> f64 {
        match model {
            PaModel::Ideal => self.consumed_ideal,
            PaModel::NonLinear => self.consumed_nonlinear,
        }
    }
}

/// Per-user relative violations `[g_k]_+ / sqrt(x^T C_k x + sigma^2)` and raw `g_k`.
pub fn relative_violations(x: &[f64], data: &ProblemData) -> (Vec<f64>, Vec<f64>) {
    let (quad, signal) = user_forms(data, x, None);
    let s2 = data.sigma_dl * data.sigma_dl;
    let mut rel = Vec::with_capacity(quad.len());
    let mut g = Vec::with_capacity(quad.len());
    for k in 0..quad.len() {
        let root = (quad[k] + s2).sqrt();
        let gk = root - data.cone_factor(k) * signal[k];
        g.push(gk);
        rel.push(gk.max(0.0) / root);
    }
    (rel, g)
}

/// Uniform start point on `[0, scale]^{KL}`.
pub fn initial_point(data: &ProblemData, options: &SolverOptions) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng::derive_seed(options.init_seed, rng::SOLVER_INIT));
    (0..data.dim())
        .map(|_| rng.random::<f64>() * options.init_scale)
        .collect()
}

/// Runs the penalty loop from the random start point.
pub fn penalty_minimize(data: &ProblemData, options: &SolverOptions) -> Result<SolverResult> {
    let x0 = initial_point(data, options);
    penalty_minimize_from(data, options, &x0)
}

/// Runs the penalty loop from a given start point.
pub fn penalty_minimize_from(
    data: &ProblemData,
    options: &SolverOptions,
    x0: &[f64],
) -> Result<SolverResult> {
    options.validate()?;
    if x0.len() != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "start point has {} entries, expected {}",
            x0.len(),
            data.dim()
        )));
    }
    let start = Instant::now();
    let normalized;
    let work = if options.normalize_noise {
        normalized = data.noise_normalized();
        &normalized
    } else {
        data
    };

    let mut x = x0.to_vec();
    project_in_place(&mut x, data.num_aps(), data.power.p_max);
    let mut trace = Vec::new();
    let mut histories = Vec::new();
    let mut alpha = options.alpha_init;
    let mut apg_total = 0;
    for i in 0..options.max_penalty_iters {
        let lambda = options.lambda_at(i);
        let out = apg_minimize_warm(work, lambda, &x, options, alpha);
        x = out.x;
        alpha = out.last_alpha;
        apg_total += out.iterations;
        let (rel, _) = relative_violations(&x, work);
        let max_violation = rel.iter().copied().fold(0.0, f64::max);
        trace.push(PenaltyStep {
            penalty_iter: i + 1,
            lambda,
            apg_iters: out.iterations,
            f_value: out.value,
            max_violation,
            hit_cap: out.hit_cap,
            stalls: out.stalls,
        });
        if options.record_history {
            histories.push(out.history);
        }
        if max_violation <= options.eps_feas {
            break;
        }
    }

    let x_star = PowerAllocation::for_problem(data, x)?;
    let (rel, margins) = relative_violations(&x_star.values, data);
    let user_feasible: Vec<bool> = rel.iter().map(|&v| v <= options.eps_feas).collect();
    let per_ap_tx = x_star.per_ap_transmit_power();
    let consumed_ideal = consumed_power_from_tx(&per_ap_tx, PaModel::Ideal, &data.power).total;
    let consumed_nonlinear =
        consumed_power_from_tx(&per_ap_tx, PaModel::NonLinear, &data.power).total;
    Ok(SolverResult {
        feasible: user_feasible.iter().all(|&f| f),
        x_star,
        model: options.model,
        user_feasible,
        margins,
        per_ap_tx,
        consumed_ideal,
        consumed_nonlinear,
        penalty_iterations: trace.len(),
        trace,
        apg_iterations: apg_total,
        wall_time_s: start.elapsed().as_secs_f64(),
        objective_history: options.record_history.then_some(histories),
    })
}

/// Exact (unsmoothed) penalized cost, used to bound the smoothing error.
pub fn exact_penalized_cost(x: &[f64], lambda: f64, model: PaModel, data: &ProblemData) -> f64 {
    let tx = problem::ap_squared_norms(x, data.num_aps());
    let power = consumed_power_from_tx(&tx, model, &data.power).total;
    let penalty: f64 = problem::constraint_values(x, data)
        .into_iter()
        .map(|g| g.max(0.0).powi(2))
        .sum();
    power + lambda * penalty
}
