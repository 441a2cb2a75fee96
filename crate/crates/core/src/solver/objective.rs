use crate::linalg::dot;
use crate::problem::{self, ap_squared_norms, PaModel, ProblemData};
use crate::solver::smoothing::smoothed_norm_grad_factor;

/// Penalized cost `w * sum_l P_l(x) + lambda * sum_k [g_k(x)]_+^2` with the
/// non-linear PA term smoothed, together with its exact gradient.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub data: &'a ProblemData,
    pub lambda: f64,
    pub model: PaModel,
    pub mu_s: f64,
    /// Weight of the power term; zero turns the cost into a pure feasibility measure.
    pub power_weight: f64,
}

impl<'a> Objective<'a> {
    pub fn new(data: &'a ProblemData, lambda: f64, model: PaModel, mu_s: f64) -> Self {
        Self {
            data,
            lambda,
            model,
            mu_s,
            power_weight: 1.0,
        }
    }

    fn power(&self, x: &[f64]) -> f64 {
        if self.power_weight == 0.0 {
            return 0.0;
        }
        self.power_weight * problem::smoothed_power(x, self.model, self.data, self.mu_s)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let penalty: f64 = problem::constraint_values(x, self.data)
            .into_iter()
            .map(|g| g.max(0.0).powi(2))
            .sum();
        self.power(x) + self.lambda * penalty
    }

    /// Writes the gradient into `grad` and returns the cost.
    pub fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let data = self.data;
        let (kk, l) = (data.num_users(), data.num_aps());
        let dim = kk * l;
        let s2 = data.sigma_dl * data.sigma_dl;

        grad.iter_mut().for_each(|g| *g = 0.0);
        let power = self.power(x);
        if self.power_weight != 0.0 {
            match self.model {
                PaModel::Ideal => {
                    let c = 2.0 * self.power_weight / data.power.eta;
                    grad.iter_mut().zip(x).for_each(|(g, v)| *g = c * v);
                }
                PaModel::NonLinear => {
                    let w = self.power_weight * data.power.nonlinear_weight();
                    let factors: Vec<f64> = ap_squared_norms(x, l)
                        .iter()
                        .map(|n2| w * smoothed_norm_grad_factor(n2.sqrt(), self.mu_s))
                        .collect();
                    for (gb, xb) in grad.chunks_exact_mut(l).zip(x.chunks_exact(l)) {
                        for ((g, v), f) in gb.iter_mut().zip(xb).zip(&factors) {
                            *g = f * v;
                        }
                    }
                }
            }
        }

        let mut ckx = vec![0.0; kk * dim];
        let (quad, signal) = problem::user_forms(data, x, Some(&mut ckx));
        let mut penalty = 0.0;
        for k in 0..kk {
            let root = (quad[k] + s2).sqrt();
            let kappa = data.cone_factor(k);
            let g = root - kappa * signal[k];
            if g <= 0.0 {
                continue;
            }
            penalty += g * g;
            let coef = 2.0 * self.lambda * g;
            let a = coef / root;
            for (gi, ci) in grad.iter_mut().zip(&ckx[k * dim..(k + 1) * dim]) {
                *gi += a * ci;
            }
            for (gi, bi) in grad[k * l..(k + 1) * l].iter_mut().zip(data.b_k(k)) {
                *gi -= coef * kappa * bi;
            }
        }
        power + self.lambda * penalty
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.value_and_gradient(x, &mut g);
        g
    }
}

/// Gradient of `g_k` at `x`: `C_k x / sqrt(x^T C_k x + sigma^2) - kappa_k b~_k`.
pub fn constraint_gradient(data: &ProblemData, x: &[f64], k: usize) -> Vec<f64> {
    let (kk, l) = (data.num_users(), data.num_aps());
    let dim = kk * l;
    let mut ckx = vec![0.0; kk * dim];
    let (quad, _) = problem::user_forms(data, x, Some(&mut ckx));
    let root = (quad[k] + data.sigma_dl * data.sigma_dl).sqrt();
    let mut out: Vec<f64> = ckx[k * dim..(k + 1) * dim].iter().map(|v| v / root).collect();
    let kappa = data.cone_factor(k);
    for (o, b) in out[k * l..(k + 1) * l].iter_mut().zip(data.b_k(k)) {
        *o -= kappa * b;
    }
    debug_assert!(dot(&out, &out).is_finite());
    out
}
