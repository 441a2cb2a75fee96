//! Monotone accelerated projected gradient with Armijo backtracking.

use crate::linalg::dot;
use crate::problem::ProblemData;
use crate::solver::objective::Objective;
use crate::solver::projection::project_in_place;
use crate::solver::SolverOptions;

/// Result of one backtracking search.
#[derive(Debug, Clone)]
pub struct ArmijoStep {
    pub alpha: f64,
    pub candidate: Vec<f64>,
    pub value: f64,
    pub backtracks: usize,
    /// No step satisfied the sufficient-decrease test; `candidate` is the
    /// one with the smallest step tried.
    pub stalled: bool,
}

/// Backtracks from `alpha_start` until
/// `f(y) - f(P(y - alpha grad)) >= tau * alpha * ||grad||^2`.
pub fn armijo_step(
    objective: &Objective<'_>,
    y: &[f64],
    f_y: f64,
    grad: &[f64],
    alpha_start: f64,
    options: &SolverOptions,
) -> ArmijoStep {
    let data = objective.data;
    armijo_search(
        |x| objective.value(x),
        |x| project_in_place(x, data.num_aps(), data.power.p_max),
        y,
        f_y,
        grad,
        alpha_start,
        options,
    )
}

/// Backtracking search for an arbitrary cost and projection.
pub fn armijo_search(
    f: impl Fn(&[f64]) -> f64,
    project: impl Fn(&mut [f64]),
    y: &[f64],
    f_y: f64,
    grad: &[f64],
    alpha_start: f64,
    options: &SolverOptions,
) -> ArmijoStep {
    let grad_sq = dot(grad, grad);
    let mut alpha = alpha_start;
    let mut candidate = vec![0.0; y.len()];
    let mut value = f_y;
    for backtracks in 0..=options.max_backtracks {
        for ((c, yi), gi) in candidate.iter_mut().zip(y).zip(grad) {
            *c = yi - alpha * gi;
        }
        project(&mut candidate);
        value = f(&candidate);
        if f_y - value >= options.tau * alpha * grad_sq {
            return ArmijoStep {
                alpha,
                candidate,
                value,
                backtracks,
                stalled: false,
            };
        }
        if backtracks < options.max_backtracks {
            alpha *= options.backtrack_factor;
        }
    }
    ArmijoStep {
        alpha,
        candidate,
        value,
        backtracks: options.max_backtracks,
        stalled: true,
    }
}

/// `1/2 sqrt(4 m^2 + 1) + 1/2`.
pub fn next_momentum(m: f64) -> f64 {
    0.5 * (4.0 * m * m + 1.0).sqrt() + 0.5
}

#[derive(Debug, Clone)]
pub struct ApgOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub hit_cap: bool,
    pub stalls: usize,
    /// Last accepted Armijo step, used to warm-start the next search.
    pub last_alpha: f64,
    /// `f(x^t)` of every accepted iterate, starting with `f(x^1)`; empty
    /// unless `options.record_history` is set.
    pub history: Vec<f64>,
}

/// Minimizes the penalized cost at weight `lambda` over the per-AP caps,
/// starting from `x0` (projected on entry).
pub fn apg_minimize(
    data: &ProblemData,
    lambda: f64,
    x0: &[f64],
    options: &SolverOptions,
) -> ApgOutcome {
    apg_minimize_warm(data, lambda, x0, options, options.alpha_init)
}

/// As [`apg_minimize`], with the first backtracking search starting from
/// `min(alpha_init, 2 * previous_alpha)`.
pub fn apg_minimize_warm(
    data: &ProblemData,
    lambda: f64,
    x0: &[f64],
    options: &SolverOptions,
    previous_alpha: f64,
) -> ApgOutcome {
    let objective = Objective {
        data,
        lambda,
        model: options.model,
        mu_s: options.mu_s,
        power_weight: options.power_weight,
    };
    let n = x0.len();
    let mut x = x0.to_vec();
    project_in_place(&mut x, data.num_aps(), data.power.p_max);
    let mut x_prev = x.clone();
    let mut z = x.clone();
    let mut f_x = objective.value(&x);
    let (mut m_prev, mut m) = (1.0, 1.0);
    let mut alpha_prev = previous_alpha;
    let mut y = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut history = Vec::new();
    if options.record_history {
        history.push(f_x);
    }
    let mut stalls = 0;
    let mut iterations = 0;
    let mut hit_cap = true;
    let mut restarted = false;

    for _ in 0..options.max_apg_iters {
        iterations += 1;
        let a = m_prev / m;
        let b = (m_prev - 1.0) / m;
        for i in 0..n {
            y[i] = x[i] + a * (z[i] - x[i]) + b * (x[i] - x_prev[i]);
        }
        let f_y = objective.value_and_gradient(&y, &mut grad);
        let alpha_start = options.alpha_init.min(2.0 * alpha_prev);
        let step = armijo_step(&objective, &y, f_y, &grad, alpha_start, options);
        if step.stalled {
            stalls += 1;
        } else {
            alpha_prev = step.alpha;
        }
        let f_old = f_x;
        let accepted = step.value <= f_x;
        if options.record_history {
            history.push(if accepted { step.value } else { f_x });
        }
        if !accepted && !restarted {
            // extrapolation overshot: restart momentum and retry from x with a plain step
            z.copy_from_slice(&x);
            x_prev.copy_from_slice(&x);
            m_prev = 1.0;
            m = 1.0;
            restarted = true;
            continue;
        }
        restarted = false;
        let m_next = next_momentum(m);
        x_prev.copy_from_slice(&x);
        if accepted {
            x.copy_from_slice(&step.candidate);
            f_x = step.value;
        }
        z = step.candidate;
        m_prev = m;
        m = m_next;
        let settled = iterations >= options.min_apg_iters && f_old - f_x < options.epsilon * f_x;
        if settled || f_x == 0.0 {
            hit_cap = false;
            break;
        }
    }
    ApgOutcome {
        x,
        value: f_x,
        iterations,
        hit_cap,
        stalls,
        last_alpha: alpha_prev,
        history,
    }
}
