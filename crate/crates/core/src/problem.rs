//! The stacked power-allocation problem.
//!
//! The variable is `x = [rho_1; ...; rho_K]` with `rho_k` the amplitudes of
//! user `k` at every AP, so `x[k * L + l] = rho_lk`. User `k`'s SINR
//! constraint is written as the second-order cone condition `g_k(x) <= 0`
//! with
//!
//! ```text
//! g_k(x) = sqrt(x^T C_k x + sigma^2) - sqrt((1 + gamma_k) / gamma_k) * b_k^T rho_k
//! ```
//!
//! where `C_k` is block diagonal with blocks `C_k1 .. C_kK`. Quadratic forms
//! are always evaluated block by block; the `KL x KL` matrices are never
//! materialized.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, block_matvec, dot};
use crate::scenario::ScenarioConfig;
use crate::solver::smoothing;
use crate::statistics::EffectiveStatistics;

/// Power-amplifier consumption model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaModel {
    /// Consumed power `P_tx / eta`.
    Ideal,
    /// Consumed power `sqrt(P_tx P_max) / eta_max`.
    NonLinear,
}

impl std::fmt::Display for PaModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PaModel::Ideal => "ideal",
            PaModel::NonLinear => "non-linear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    pub p_max: f64,
    pub eta_max: f64,
    pub eta: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        let c = ScenarioConfig::default();
        Self::from(&c)
    }
}

impl From<&ScenarioConfig> for PowerParams {
    fn from(c: &ScenarioConfig) -> Self {
        Self {
            p_max: c.p_max,
            eta_max: c.eta_max,
            eta: c.eta,
        }
    }
}

impl PowerParams {
    /// Weight of `||x_l||` in the non-linear consumed power.
    pub fn nonlinear_weight(&self) -> f64 {
        self.p_max.sqrt() / self.eta_max
    }
}

/// Per-user quality targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    /// Spectral efficiencies in bits/s/Hz.
    Se(Vec<f64>),
    /// Linear SINR.
    Sinr(Vec<f64>),
}

impl Targets {
    pub fn common_se(se: f64, users: usize) -> Self {
        Targets::Se(vec![se; users])
    }

    pub fn to_sinr(&self) -> Vec<f64> {
        match self {
            Targets::Se(v) => v.iter().map(|&se| se_to_sinr(se)).collect(),
            Targets::Sinr(v) => v.clone(),
        }
    }
}

pub fn se_to_sinr(se: f64) -> f64 {
    se.exp2() - 1.0
}

pub fn sinr_to_se(sinr: f64) -> f64 {
    sinr.ln_1p() / std::f64::consts::LN_2
}

/// Everything the solver touches.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    num_users: usize,
    num_aps: usize,
    /// `K x L`, row `k` is `b_k`.
    b: Vec<f64>,
    /// `K x K` blocks of `L x L`, row-major.
    c: Vec<f64>,
    c_sqrt: Vec<f64>,
    pub sigma_dl: f64,
    pub gamma_bar: Vec<f64>,
    pub power: PowerParams,
}

/// Tolerance on negative eigenvalues of a `C_ki` block, relative to its trace.
const BLOCK_PSD_TOL: f64 = 1e-8;

/// Builds [`ProblemData`] from effective statistics, targets and PA parameters.
pub fn assemble(
    stats: &EffectiveStatistics,
    targets: &Targets,
    power: PowerParams,
) -> Result<ProblemData> {
    stats.validate()?;
    let (k_count, l_count) = (stats.num_users, stats.num_aps);
    let gamma_bar = targets.to_sinr();
    if gamma_bar.len() != k_count {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {k_count} users",
            gamma_bar.len()
        )));
    }
    if let Some(k) = gamma_bar.iter().position(|&g| !(g > 0.0) || !g.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "target of user {k} must be positive and finite, got {}",
            gamma_bar[k]
        )));
    }
    if !(power.p_max > 0.0 && power.eta > 0.0 && power.eta_max > 0.0) {
        return Err(Error::InvalidConfig("p_max, eta and eta_max must be positive".into()));
    }
    let block_len = l_count * l_count;
    let mut c_sqrt = vec![0.0; stats.c.len()];
    for k in 0..k_count {
        for i in 0..k_count {
            let block = stats.block(k, i);
            let m = DMatrix::from_row_slice(l_count, l_count, block);
            let (s, min) = linalg::symmetric_sqrt(&m);
            let trace = m.trace();
            if min < -BLOCK_PSD_TOL * trace.abs().max(f64::MIN_POSITIVE) / l_count as f64 {
                return Err(Error::NotPsdBlock {
                    user: k,
                    other: i,
                    min_eigenvalue: min,
                });
            }
            let o = (k * k_count + i) * block_len;
            // symmetric, so column-major storage reads as row-major
            c_sqrt[o..o + block_len].copy_from_slice(s.as_slice());
        }
    }
    if stats.b.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidConfig("b entries must be nonnegative".into()));
    }
    Ok(ProblemData {
        num_users: k_count,
        num_aps: l_count,
        b: stats.b.clone(),
        c: stats.c.clone(),
        c_sqrt,
        sigma_dl: stats.sigma_dl2.sqrt(),
        gamma_bar,
        power,
    })
}

impl ProblemData {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    /// Length of the stacked variable, `K * L`.
    pub fn dim(&self) -> usize {
        self.num_users * self.num_aps
    }

    pub fn b_k(&self, k: usize) -> &[f64] {
        &self.b[k * self.num_aps..(k + 1) * self.num_aps]
    }

    /// `e_K^k (x) b_k`, aligned with `x`.
    pub fn b_tilde(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        out[k * self.num_aps..(k + 1) * self.num_aps].copy_from_slice(self.b_k(k));
        out
    }

    /// Row-major `L x L` block `C_ki`.
    pub fn block(&self, k: usize, i: usize) -> &[f64] {
        let len = self.num_aps * self.num_aps;
        let o = (k * self.num_users + i) * len;
        &self.c[o..o + len]
    }

    /// Symmetric PSD square root of `C_ki`.
    pub fn block_sqrt(&self, k: usize, i: usize) -> &[f64] {
        let len = self.num_aps * self.num_aps;
        let o = (k * self.num_users + i) * len;
        &self.c_sqrt[o..o + len]
    }

    /// The monolithic block-diagonal `C_k` (tests and diagnostics only).
    pub fn c_k_dense(&self, k: usize) -> DMatrix<f64> {
        let (kk, l) = (self.num_users, self.num_aps);
        let mut m = DMatrix::zeros(kk * l, kk * l);
        for i in 0..kk {
            let block = self.block(k, i);
            for r in 0..l {
                for c in 0..l {
                    m[(i * l + r, i * l + c)] = block[r * l + c];
                }
            }
        }
        m
    }

    /// `sqrt((1 + gamma_k) / gamma_k)`.
    pub fn cone_factor(&self, k: usize) -> f64 {
        let g = self.gamma_bar[k];
        ((1.0 + g) / g).sqrt()
    }

    /// Same statistics with new linear SINR targets.
    pub fn with_sinr_targets(&self, gamma_bar: Vec<f64>) -> Result<Self> {
        if gamma_bar.len() != self.num_users {
            return Err(Error::DimensionMismatch(format!(
                "{} targets for {} users",
                gamma_bar.len(),
                self.num_users
            )));
        }
        Ok(Self {
            gamma_bar,
            ..self.clone()
        })
    }

    pub fn with_power(&self, power: PowerParams) -> Self {
        Self {
            power,
            ..self.clone()
        }
    }

    /// Equivalent problem with gains expressed relative to the noise level
    /// (`b / sigma`, `C / sigma^2`, `sigma = 1`). SINRs, constraint signs and
    /// relative margins are unchanged; `g_k` scales by `1 / sigma`.
    pub fn noise_normalized(&self) -> Self {
        let s = self.sigma_dl;
        Self {
            b: self.b.iter().map(|v| v / s).collect(),
            c: self.c.iter().map(|v| v / (s * s)).collect(),
            c_sqrt: self.c_sqrt.iter().map(|v| v / s).collect(),
            sigma_dl: 1.0,
            ..self.clone()
        }
    }

    pub fn check_dim(&self, x: &PowerAllocation) -> Result<()> {
        if x.num_users != self.num_users || x.num_aps != self.num_aps {
            return Err(Error::DimensionMismatch(format!(
                "allocation is {}x{}, problem is {}x{}",
                x.num_users, x.num_aps, self.num_users, self.num_aps
            )));
        }
        Ok(())
    }

    pub fn check_user(&self, k: usize) -> Result<()> {
        if k >= self.num_users {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: k,
                count: self.num_users,
            });
        }
        Ok(())
    }
}

/// Stacked nonnegative amplitudes, `values[k * L + l] = rho_lk` in sqrt(watts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub num_users: usize,
    pub num_aps: usize,
    pub values: Vec<f64>,
}

impl PowerAllocation {
    pub fn zeros(num_users: usize, num_aps: usize) -> Self {
        Self {
            num_users,
            num_aps,
            values: vec![0.0; num_users * num_aps],
        }
    }

    pub fn from_vec(num_users: usize, num_aps: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_users * num_aps {
            return Err(Error::DimensionMismatch(format!(
                "{} values for K*L = {}",
                values.len(),
                num_users * num_aps
            )));
        }
        Ok(Self {
            num_users,
            num_aps,
            values,
        })
    }

    pub fn for_problem(data: &ProblemData, values: Vec<f64>) -> Result<Self> {
        Self::from_vec(data.num_users(), data.num_aps(), values)
    }

    pub fn rho_k(&self, k: usize) -> &[f64] {
        &self.values[k * self.num_aps..(k + 1) * self.num_aps]
    }

    /// `(rho_l1, ..., rho_lK)`: a strided gather over the user blocks.
    pub fn gather_ap(&self, l: usize) -> Result<Vec<f64>> {
        if l >= self.num_aps {
            return Err(Error::IndexOutOfRange {
                what: "AP",
                index: l,
                count: self.num_aps,
            });
        }
        Ok(self.values.iter().skip(l).step_by(self.num_aps).copied().collect())
    }

    /// Transmit power of AP `l`, `sum_k rho_lk^2`.
    pub fn transmit_power(&self, l: usize) -> Result<f64> {
        Ok(self.gather_ap(l)?.iter().map(|v| v * v).sum())
    }

    pub fn per_ap_transmit_power(&self) -> Vec<f64> {
        ap_squared_norms(&self.values, self.num_aps)
    }
}

/// `||x_l||^2` for every AP of a stacked vector.
pub fn ap_squared_norms(x: &[f64], num_aps: usize) -> Vec<f64> {
    let mut out = vec![0.0; num_aps];
    for block in x.chunks_exact(num_aps) {
        for (o, v) in out.iter_mut().zip(block) {
            *o += v * v;
        }
    }
    out
}

/// Per-AP and total consumed power in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumedPower {
    pub per_ap: Vec<f64>,
    pub total: f64,
}

pub fn consumed_power_from_tx(per_ap_tx: &[f64], model: PaModel, power: &PowerParams) -> ConsumedPower {
    let per_ap: Vec<f64> = per_ap_tx
        .iter()
        .map(|&p| match model {
            PaModel::Ideal => p / power.eta,
            PaModel::NonLinear => (p * power.p_max).sqrt() / power.eta_max,
        })
        .collect();
    let total = per_ap.iter().sum();
    ConsumedPower { per_ap, total }
}

pub fn consumed_power(x: &PowerAllocation, model: PaModel, power: &PowerParams) -> ConsumedPower {
    consumed_power_from_tx(&x.per_ap_transmit_power(), model, power)
}

/// Per-user `x^T C_k x` and `b_k^T rho_k`; optionally also `C_k x` for every
/// user, written to `ckx[k * KL ..(k + 1) * KL]`.
pub(crate) fn user_forms(data: &ProblemData, x: &[f64], mut ckx: Option<&mut [f64]>) -> (Vec<f64>, Vec<f64>) {
    let (kk, l) = (data.num_users, data.num_aps);
    let dim = kk * l;
    let mut quad = vec![0.0; kk];
    let mut signal = vec![0.0; kk];
    let mut tmp = vec![0.0; l];
    for k in 0..kk {
        let mut q = 0.0;
        for i in 0..kk {
            let rho_i = &x[i * l..(i + 1) * l];
            let out = match ckx.as_deref_mut() {
                Some(buf) => &mut buf[k * dim + i * l..k * dim + (i + 1) * l],
                None => &mut tmp[..],
            };
            block_matvec(data.block(k, i), rho_i, out);
            q += dot(rho_i, out);
        }
        quad[k] = q;
        signal[k] = dot(data.b_k(k), &x[k * l..(k + 1) * l]);
    }
    (quad, signal)
}

/// `x^T C_k x` evaluated block by block.
pub fn quadratic_form(x: &PowerAllocation, k: usize, data: &ProblemData) -> Result<f64> {
    data.check_dim(x)?;
    data.check_user(k)?;
    let l = data.num_aps;
    let mut tmp = vec![0.0; l];
    let mut q = 0.0;
    for i in 0..data.num_users {
        let rho = x.rho_k(i);
        block_matvec(data.block(k, i), rho, &mut tmp);
        q += dot(rho, &tmp);
    }
    Ok(q)
}

/// Achieved linear SINR of every user.
pub fn sinr(x: &PowerAllocation, data: &ProblemData) -> Result<Vec<f64>> {
    data.check_dim(x)?;
    let (quad, signal) = user_forms(data, &x.values, None);
    let s2 = data.sigma_dl * data.sigma_dl;
    quad.iter()
        .zip(&signal)
        .enumerate()
        .map(|(k, (&q, &s))| {
            let denom = q - s * s + s2;
            if denom <= 0.0 {
                return Err(Error::InconsistentStatistics { user: k, value: denom });
            }
            Ok(s * s / denom)
        })
        .collect()
}

/// Constraint violations `g_k(x)` for every user.
pub fn constraint_values(x: &[f64], data: &ProblemData) -> Vec<f64> {
    let (quad, signal) = user_forms(data, x, None);
    let s2 = data.sigma_dl * data.sigma_dl;
    (0..data.num_users)
        .map(|k| (quad[k] + s2).sqrt() - data.cone_factor(k) * signal[k])
        .collect()
}

/// Constraint violation of user `k`; `g_k <= 0` iff the SINR target is met.
pub fn constraint_g(x: &PowerAllocation, k: usize, data: &ProblemData) -> Result<f64> {
    let q = quadratic_form(x, k, data)?;
    let s = dot(data.b_k(k), x.rho_k(k));
    Ok((q + data.sigma_dl * data.sigma_dl).sqrt() - data.cone_factor(k) * s)
}

/// `Psi_k = [g_k]_+^2`.
pub fn penalty_terms(x: &PowerAllocation, data: &ProblemData) -> Result<Vec<f64>> {
    data.check_dim(x)?;
    Ok(constraint_values(&x.values, data)
        .into_iter()
        .map(|g| g.max(0.0).powi(2))
        .collect())
}

/// Power part of the penalized objective; the non-linear model uses the
/// smoothed norm.
pub(crate) fn smoothed_power(x: &[f64], model: PaModel, data: &ProblemData, mu_s: f64) -> f64 {
    let norms = ap_squared_norms(x, data.num_aps);
    match model {
        PaModel::Ideal => norms.iter().sum::<f64>() / data.power.eta,
        PaModel::NonLinear => {
            data.power.nonlinear_weight()
                * norms
                    .iter()
                    .map(|n2| smoothing::smoothed_norm(n2.sqrt(), mu_s))
                    .sum::<f64>()
        }
    }
}

/// `f(x) = sum_l P_l(x) + lambda sum_k Psi_k(x)` with the smoothed non-linear model.
pub fn penalized_cost(
    x: &PowerAllocation,
    lambda: f64,
    model: PaModel,
    data: &ProblemData,
    mu_s: f64,
) -> Result<f64> {
    data.check_dim(x)?;
    let penalty: f64 = penalty_terms(x, data)?.iter().sum();
    Ok(smoothed_power(&x.values, model, data, mu_s) + lambda * penalty)
}

/// `(P(x_ideal) - P(x_nl)) / P(x_ideal)` with `P` the unsmoothed total
/// non-linear consumed power.
pub fn relative_saving(
    x_ideal_opt: &PowerAllocation,
    x_nl_opt: &PowerAllocation,
    power: &PowerParams,
) -> Result<f64> {
    let reference = consumed_power(x_ideal_opt, PaModel::NonLinear, power).total;
    let optimized = consumed_power(x_nl_opt, PaModel::NonLinear, power).total;
    if reference == 0.0 {
        return Err(Error::UndefinedSaving);
    }
    Ok((reference - optimized) / reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistics::STATISTICS_FORMAT_VERSION;

    pub(crate) fn scalar_stats(b: f64, c: f64, sigma2: f64) -> EffectiveStatistics {
        EffectiveStatistics {
            format_version: STATISTICS_FORMAT_VERSION,
            num_users: 1,
            num_aps: 1,
            sigma_dl2: sigma2,
            b: vec![b],
            c: vec![c],
            max_imag_ratio: None,
            negative_b_fraction: None,
        }
    }

    fn scalar_problem(gamma: f64) -> ProblemData {
        assemble(
            &scalar_stats(1.0, 2.0, 1.0),
            &Targets::Sinr(vec![gamma]),
            PowerParams {
                p_max: 1.0,
                eta_max: 0.785,
                eta: 0.785,
            },
        )
        .unwrap()
    }

    #[test]
    fn se_targets_convert_to_sinr() {
        assert_eq!(se_to_sinr(1.0), 1.0);
        assert_eq!(se_to_sinr(6.0), 63.0);
        assert!((sinr_to_se(63.0) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_assembly() {
        let data = assemble(
            &scalar_stats(1.0, 2.0, 1.0),
            &Targets::Se(vec![1.0]),
            PowerParams::default(),
        )
        .unwrap();
        assert_eq!(data.b_tilde(0), vec![1.0]);
        assert_eq!(data.block(0, 0), &[2.0]);
        assert!((data.block_sqrt(0, 0)[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(data.gamma_bar, vec![1.0]);
    }

    #[test]
    fn assemble_rejects_indefinite_block() {
        let mut stats = scalar_stats(1.0, 2.0, 1.0);
        stats.num_aps = 2;
        stats.b = vec![1.0, 1.0];
        stats.c = vec![1.0, 3.0, 3.0, 1.0];
        let err = assemble(&stats, &Targets::Sinr(vec![1.0]), PowerParams::default()).unwrap_err();
        assert!(matches!(err, Error::NotPsdBlock { user: 0, other: 0, .. }));
    }

    #[test]
    fn assemble_rejects_nonpositive_target() {
        let err = assemble(
            &scalar_stats(1.0, 2.0, 1.0),
            &Targets::Sinr(vec![0.0]),
            PowerParams::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn lifted_b_has_zeros_outside_block() {
        let mut stats = scalar_stats(1.0, 2.0, 1.0);
        stats.num_users = 2;
        stats.num_aps = 3;
        stats.b = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        stats.c = vec![0.0; 36];
        for blk in 0..4 {
            for d in 0..3 {
                stats.c[blk * 9 + d * 4] = 50.0;
            }
        }
        let data = assemble(&stats, &Targets::Sinr(vec![1.0, 1.0]), PowerParams::default()).unwrap();
        assert_eq!(data.b_tilde(1), vec![0.0, 0.0, 0.0, 4.0, 5.0, 6.0]);
        assert_eq!(data.b_tilde(0).iter().filter(|v| **v == 0.0).count(), 3);
    }

    #[test]
    fn gather_and_transmit_power() {
        let x = PowerAllocation::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(x.gather_ap(0).unwrap(), vec![1.0, 4.0]);
        assert_eq!(x.gather_ap(2).unwrap(), vec![3.0, 6.0]);
        assert!(matches!(x.gather_ap(3), Err(Error::IndexOutOfRange { .. })));
        assert_eq!(PowerAllocation::zeros(2, 3).gather_ap(1).unwrap(), vec![0.0, 0.0]);

        let y = PowerAllocation::from_vec(2, 1, vec![0.3, 0.4]).unwrap();
        assert!((y.transmit_power(0).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(PowerAllocation::zeros(2, 1).transmit_power(0).unwrap(), 0.0);
        let z = PowerAllocation::from_vec(2, 1, vec![2f64.sqrt(), 0.0]).unwrap();
        assert!((z.transmit_power(0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn consumed_power_models() {
        let power = PowerParams {
            p_max: 1.0,
            eta_max: 0.785,
            eta: 0.785,
        };
        let at_cap = consumed_power_from_tx(&[1.0], PaModel::NonLinear, &power);
        assert!((1.0 / at_cap.total - 0.785).abs() < 1e-15);
        let nl = consumed_power_from_tx(&[0.25], PaModel::NonLinear, &power);
        let ideal = consumed_power_from_tx(&[0.25], PaModel::Ideal, &power);
        assert!((nl.total - 0.6369).abs() < 1e-4);
        assert!((ideal.total - 0.3185).abs() < 1e-4);
        for model in [PaModel::Ideal, PaModel::NonLinear] {
            assert_eq!(consumed_power_from_tx(&[0.0], model, &power).total, 0.0);
        }
    }

    #[test]
    fn scalar_sinr_and_constraint() {
        let data = scalar_problem(0.5);
        let x = PowerAllocation::from_vec(1, 1, vec![1.0]).unwrap();
        assert!((sinr(&x, &data).unwrap()[0] - 0.5).abs() < 1e-15);
        assert!(constraint_g(&x, 0, &data).unwrap().abs() < 1e-15);
        let zero = PowerAllocation::zeros(1, 1);
        assert_eq!(sinr(&zero, &data).unwrap(), vec![0.0]);
        assert_eq!(constraint_g(&zero, 0, &data).unwrap(), 1.0);
        // boundary: cost is the consumed power alone
        let f = penalized_cost(&x, 1e6, PaModel::NonLinear, &data, 1e-7).unwrap();
        assert!((f - (1.0 - 0.5e-7) / 0.785).abs() < 1e-12);
    }

    #[test]
    fn vanishing_target_makes_constraint_slack() {
        let x = PowerAllocation::from_vec(1, 1, vec![0.1]).unwrap();
        let mut last = f64::INFINITY;
        for gamma in [1e-2, 1e-4, 1e-8, 1e-12] {
            let g = constraint_g(&x, 0, &scalar_problem(gamma)).unwrap();
            assert!(g < last);
            last = g;
        }
        assert!(last < -1e4);
    }

    #[test]
    fn penalty_is_squared_hinge() {
        let data = scalar_problem(0.5);
        // g(rho) = sqrt(2 rho^2 + 1) - sqrt(3) rho
        let psi = |rho: f64| {
            let x = PowerAllocation::from_vec(1, 1, vec![rho]).unwrap();
            penalty_terms(&x, &data).unwrap()[0]
        };
        assert_eq!(psi(1.5), 0.0);
        assert!((psi(0.0) - 1.0).abs() < 1e-15);
        // smooth at the boundary: value and one-sided slopes vanish
        let h = 1e-6;
        assert!(psi(1.0 + h) == 0.0);
        assert!(psi(1.0 - h) / h < 1e-5);
    }

    #[test]
    fn relative_saving_arithmetic() {
        let power = PowerParams {
            p_max: 1.0,
            eta_max: 1.0,
            eta: 1.0,
        };
        let a = PowerAllocation::from_vec(1, 1, vec![1.0]).unwrap();
        let b = PowerAllocation::from_vec(1, 1, vec![0.75]).unwrap();
        assert_eq!(relative_saving(&a, &a, &power).unwrap(), 0.0);
        assert!((relative_saving(&a, &b, &power).unwrap() - 0.25).abs() < 1e-15);
        let z = PowerAllocation::zeros(1, 1);
        assert!(matches!(relative_saving(&z, &z, &power), Err(Error::UndefinedSaving)));
    }

    #[test]
    fn normalization_preserves_sinr() {
        let mut stats = scalar_stats(3e-6, 2e-11, 4e-13);
        stats.b = vec![3e-6];
        let data = assemble(&stats, &Targets::Sinr(vec![2.0]), PowerParams::default()).unwrap();
        let norm = data.noise_normalized();
        let x = PowerAllocation::from_vec(1, 1, vec![0.4]).unwrap();
        let a = sinr(&x, &data).unwrap()[0];
        let b = sinr(&x, &norm).unwrap()[0];
        assert!((a - b).abs() < 1e-12 * a);
        let ga = constraint_g(&x, 0, &data).unwrap();
        let gb = constraint_g(&x, 0, &norm).unwrap();
        assert!((ga / data.sigma_dl - gb).abs() < 1e-9 * gb.abs());
    }
}
