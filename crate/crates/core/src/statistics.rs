//! Monte-Carlo channel statistics.
//!
//! Channels are drawn from the one-ring covariances, estimated per AP with the
//! MMSE filter from orthogonal pilots, and combined with local partial-MMSE
//! precoders. The result is reduced to the deterministic quantities the
//! optimizer consumes: the average effective gains `b_k` and the interference
//! second moments `C_ki`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::rng;
use crate::scenario::Scenario;

pub const STATISTICS_FORMAT_VERSION: u32 = 1;

/// Realizations per partial sum when reducing over the Monte-Carlo axis.
pub const REDUCTION_CHUNK: usize = 256;

/// Per-realization complex N-vectors for every `(ap, user)` link.
///
/// Layout: `[((r * L + l) * K + k) * N + antenna]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkVectors {
    pub realizations: usize,
    pub num_aps: usize,
    pub num_users: usize,
    pub antennas: usize,
    pub data: Vec<C64>,
}

impl LinkVectors {
    pub fn zeros(realizations: usize, num_aps: usize, num_users: usize, antennas: usize) -> Self {
        Self {
            realizations,
            num_aps,
            num_users,
            antennas,
            data: vec![C64::new(0.0, 0.0); realizations * num_aps * num_users * antennas],
        }
    }

    fn offset(&self, r: usize, l: usize, k: usize) -> usize {
        ((r * self.num_aps + l) * self.num_users + k) * self.antennas
    }

    pub fn get(&self, r: usize, l: usize, k: usize) -> &[C64] {
        let o = self.offset(r, l, k);
        &self.data[o..o + self.antennas]
    }

    pub fn get_mut(&mut self, r: usize, l: usize, k: usize) -> &mut [C64] {
        let o = self.offset(r, l, k);
        &mut self.data[o..o + self.antennas]
    }

    /// Scatters per-link columns (each `realizations * N` long) into the layout.
    fn from_links(
        realizations: usize,
        num_aps: usize,
        num_users: usize,
        antennas: usize,
        links: Vec<Vec<C64>>,
    ) -> Self {
        let mut out = Self::zeros(realizations, num_aps, num_users, antennas);
        for (link, column) in links.into_iter().enumerate() {
            let (l, k) = (link / num_users, link % num_users);
            for r in 0..realizations {
                out.get_mut(r, l, k)
                    .copy_from_slice(&column[r * antennas..(r + 1) * antennas]);
            }
        }
        out
    }
}

fn complex_normal(rng: &mut impl Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

fn mat_vec(a: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    let n = v.len();
    (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] * v[j]).sum())
        .collect()
}

/// Draws `h_lk = R_lk^{1/2} g` with `g ~ CN(0, I)` for every link.
pub fn sample_channels(scenario: &Scenario, realizations: usize, seed: u64) -> Result<LinkVectors> {
    let (num_aps, num_users) = (scenario.num_aps(), scenario.num_users());
    let n = scenario.config.antennas;
    let links: Result<Vec<Vec<C64>>> = (0..num_aps * num_users)
        .into_par_iter()
        .map(|link| {
            let (l, k) = (link / num_users, link % num_users);
            let r = scenario.covariance(l, k);
            let (sqrt, min) = linalg::hermitian_sqrt(r);
            let trace: f64 = (0..n).map(|i| r[(i, i)].re).sum();
            if min < -1e-10 * trace.abs().max(f64::MIN_POSITIVE) / n as f64 {
                return Err(Error::NotPsdCovariance {
                    ap: l,
                    user: k,
                    min_eigenvalue: min,
                });
            }
            let mut rng = rng::link_rng(seed, rng::CHANNEL, l, k);
            let mut column = Vec::with_capacity(realizations * n);
            let mut g = vec![C64::new(0.0, 0.0); n];
            for _ in 0..realizations {
                for gi in g.iter_mut() {
                    *gi = complex_normal(&mut rng, 1.0);
                }
                column.extend(mat_vec(&sqrt, &g));
            }
            Ok(column)
        })
        .collect();
    Ok(LinkVectors::from_links(realizations, num_aps, num_users, n, links?))
}

/// Channel estimates and their error covariances.
#[derive(Debug, Clone)]
pub struct EstimationModel {
    pub estimates: LinkVectors,
    /// `R - tau p R (tau p R + sigma^2 I)^{-1} R` per link, indexed `[l * K + k]`.
    pub error_covariances: Vec<DMatrix<C64>>,
}

/// MMSE filter `sqrt(tau p) R (tau p R + sigma^2 I)^{-1}` and the error covariance.
pub fn mmse_filter(
    r: &DMatrix<C64>,
    pilot_gain: f64,
    noise: f64,
) -> Option<(DMatrix<C64>, DMatrix<C64>)> {
    let n = r.nrows();
    let a = r * C64::new(pilot_gain, 0.0) + DMatrix::identity(n, n) * C64::new(noise, 0.0);
    let inv = a.try_inverse()?;
    let filter = r * &inv * C64::new(pilot_gain.sqrt(), 0.0);
    let err = r - &filter * r * C64::new(pilot_gain.sqrt(), 0.0);
    Some((filter, linalg::hermitian_part(&err)))
}

/// Per-AP MMSE estimation from orthogonal pilots.
///
/// The decorrelated pilot observation is `y = sqrt(tau p) h + n`,
/// `n ~ CN(0, sigma_ul^2 I)`, with the noise drawn from a dedicated substream.
pub fn estimate_channels(
    channels: &LinkVectors,
    scenario: &Scenario,
    seed: u64,
) -> Result<EstimationModel> {
    let cfg = &scenario.config;
    let pilot_gain = cfg.pilot_len() as f64 * cfg.pilot_power;
    let (num_aps, num_users, n) = (channels.num_aps, channels.num_users, channels.antennas);
    let m = channels.realizations;

    let per_link: Result<Vec<(Vec<C64>, DMatrix<C64>)>> = (0..num_aps * num_users)
        .into_par_iter()
        .map(|link| {
            let (l, k) = (link / num_users, link % num_users);
            let (filter, err) = mmse_filter(scenario.covariance(l, k), pilot_gain, cfg.noise_ul)
                .ok_or(Error::SingularEstimator { ap: l, user: k })?;
            let mut rng = rng::link_rng(seed, rng::PILOT, l, k);
            let mut column = Vec::with_capacity(m * n);
            let mut y = vec![C64::new(0.0, 0.0); n];
            for r in 0..m {
                for (yi, hi) in y.iter_mut().zip(channels.get(r, l, k)) {
                    *yi = hi * pilot_gain.sqrt() + complex_normal(&mut rng, cfg.noise_ul);
                }
                column.extend(mat_vec(&filter, &y));
            }
            Ok((column, err))
        })
        .collect();
    let (columns, error_covariances): (Vec<_>, Vec<_>) = per_link?.into_iter().unzip();
    Ok(EstimationModel {
        estimates: LinkVectors::from_links(m, num_aps, num_users, n, columns),
        error_covariances,
    })
}

/// The `|S_l|` users with the largest gain to AP `l`, ties broken by index.
pub fn select_service_set(scenario: &Scenario, l: usize) -> Vec<usize> {
    let mut users: Vec<usize> = (0..scenario.num_users()).collect();
    users.sort_by(|&a, &b| {
        scenario
            .beta(l, b)
            .total_cmp(&scenario.beta(l, a))
            .then(a.cmp(&b))
    });
    users.truncate(scenario.config.service_set_size());
    users
}

/// Normalized partial-MMSE precoders.
#[derive(Debug, Clone)]
pub struct Precoders {
    pub vectors: LinkVectors,
    /// `false` when AP `l` does not serve user `k` or the estimate is identically zero.
    pub active: Vec<bool>,
}

/// Local partial-MMSE precoders over each AP's service set, normalized so that
/// the Monte-Carlo mean of `||w_lk||^2` is one.
pub fn pmmse_precoders(estimation: &EstimationModel, scenario: &Scenario) -> Result<Precoders> {
    let cfg = &scenario.config;
    let est = &estimation.estimates;
    let (num_aps, num_users, n, m) = (est.num_aps, est.num_users, est.antennas, est.realizations);
    let p = C64::new(cfg.pilot_power, 0.0);

    let per_ap: Result<Vec<(Vec<Vec<C64>>, Vec<bool>)>> = (0..num_aps)
        .into_par_iter()
        .map(|l| {
            let served = select_service_set(scenario, l);
            let mut base = DMatrix::identity(n, n) * C64::new(cfg.noise_dl, 0.0);
            for &i in &served {
                base += &estimation.error_covariances[l * num_users + i] * p;
            }
            let mut columns: Vec<Vec<C64>> = vec![Vec::new(); num_users];
            for &k in &served {
                columns[k].reserve(m * n);
            }
            for r in 0..m {
                let mut a = base.clone();
                for &i in &served {
                    let h = DVector::from_column_slice(est.get(r, l, i));
                    a += &h * h.adjoint() * p;
                }
                let lu = a.lu();
                for &k in &served {
                    let h = DVector::from_column_slice(est.get(r, l, k));
                    let w = lu.solve(&h).ok_or(Error::SingularPrecoder { ap: l })?;
                    columns[k].extend(w.iter());
                }
            }
            let mut active = vec![false; num_users];
            for &k in &served {
                let col = &mut columns[k];
                let mean_sq = col.iter().map(|c| c.norm_sqr()).sum::<f64>() / m as f64;
                if mean_sq > 0.0 {
                    let s = 1.0 / mean_sq.sqrt();
                    col.iter_mut().for_each(|c| *c *= s);
                    active[k] = true;
                }
            }
            Ok((columns, active))
        })
        .collect();

    let mut vectors = LinkVectors::zeros(m, num_aps, num_users, n);
    let mut active = vec![false; num_aps * num_users];
    for (l, (columns, ap_active)) in per_ap?.into_iter().enumerate() {
        for (k, col) in columns.into_iter().enumerate() {
            active[l * num_users + k] = ap_active[k];
            if ap_active[k] {
                for r in 0..m {
                    vectors.get_mut(r, l, k).copy_from_slice(&col[r * n..(r + 1) * n]);
                }
            }
        }
    }
    Ok(Precoders { vectors, active })
}

/// Average effective gains and interference second moments.
///
/// `b` is `K x L` (`[k * L + l]`); `c` holds `K x K` blocks of `L x L`,
/// block `(k, i)` at offset `(k * K + i) * L * L`, each block row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveStatistics {
    pub format_version: u32,
    #[serde(rename = "K")]
    pub num_users: usize,
    #[serde(rename = "L")]
    pub num_aps: usize,
    pub sigma_dl2: f64,
    pub b: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    /// Largest `|Im| / (|Re| + eps)` discarded when taking real parts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_imag_ratio: Option<f64>,
    /// Sum of negative `b` entries clamped to zero, relative to `||b||_1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_b_fraction: Option<f64>,
}

impl EffectiveStatistics {
    pub fn b_k(&self, k: usize) -> &[f64] {
        &self.b[k * self.num_aps..(k + 1) * self.num_aps]
    }

    pub fn block(&self, k: usize, i: usize) -> &[f64] {
        let len = self.num_aps * self.num_aps;
        let o = (k * self.num_users + i) * len;
        &self.c[o..o + len]
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != STATISTICS_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version,
                expected: STATISTICS_FORMAT_VERSION,
            });
        }
        let (k, l) = (self.num_users, self.num_aps);
        if k == 0 || l == 0 {
            return Err(Error::DimensionMismatch("K and L must be positive".into()));
        }
        if self.b.len() != k * l {
            return Err(Error::DimensionMismatch(format!(
                "b has {} entries, expected K*L = {}",
                self.b.len(),
                k * l
            )));
        }
        if self.c.len() != k * k * l * l {
            return Err(Error::DimensionMismatch(format!(
                "C has {} entries, expected K*K*L*L = {}",
                self.c.len(),
                k * k * l * l
            )));
        }
        if !(self.sigma_dl2 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma_dl2 must be positive, got {}",
                self.sigma_dl2
            )));
        }
        if self.b.iter().chain(&self.c).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("statistics contain non-finite values".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let stats: Self = serde_json::from_str(s)?;
        stats.validate()?;
        Ok(stats)
    }
}

/// `a[r][l] = h_lk^H w_li` for a fixed `(k, i)`, realization-major.
fn effective_gains(channels: &LinkVectors, precoders: &LinkVectors, k: usize, i: usize) -> Vec<C64> {
    let (m, num_aps) = (channels.realizations, channels.num_aps);
    let mut out = Vec::with_capacity(m * num_aps);
    for r in 0..m {
        for l in 0..num_aps {
            let h = channels.get(r, l, k);
            let w = precoders.get(r, l, i);
            out.push(h.iter().zip(w).map(|(h, w)| h.conj() * w).sum());
        }
    }
    out
}

/// Sample moments of the effective gains for one `(k, i)` pair: the mean
/// vector and the real and imaginary parts of the second-moment matrix.
///
/// The sum over realizations is taken in fixed chunks of [`REDUCTION_CHUNK`]
/// and the partial sums are added in chunk order.
fn pair_moments(gains: &[C64], num_aps: usize) -> (Vec<C64>, DMatrix<f64>, DMatrix<f64>) {
    let m = gains.len() / num_aps;
    let mut mean = vec![C64::new(0.0, 0.0); num_aps];
    let mut re = DMatrix::<f64>::zeros(num_aps, num_aps);
    let mut im = DMatrix::<f64>::zeros(num_aps, num_aps);
    for chunk in gains.chunks(REDUCTION_CHUNK * num_aps) {
        let rows = chunk.len() / num_aps;
        let a_re = DMatrix::from_fn(rows, num_aps, |r, l| chunk[r * num_aps + l].re);
        let a_im = DMatrix::from_fn(rows, num_aps, |r, l| chunk[r * num_aps + l].im);
        // E[a_l conj(a_m)] = (Re_l Re_m + Im_l Im_m) + j (Im_l Re_m - Re_l Im_m)
        re += a_re.tr_mul(&a_re) + a_im.tr_mul(&a_im);
        im += a_im.tr_mul(&a_re) - a_re.tr_mul(&a_im);
        for row in chunk.chunks_exact(num_aps) {
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    let scale = 1.0 / m as f64;
    mean.iter_mut().for_each(|v| *v *= scale);
    (mean, re * scale, im * scale)
}

/// Reduces channel and precoder realizations to [`EffectiveStatistics`].
pub fn estimate_expectations(
    channels: &LinkVectors,
    precoders: &LinkVectors,
    sigma_dl2: f64,
) -> Result<EffectiveStatistics> {
    let m = channels.realizations;
    if m < 2 {
        return Err(Error::TooFewRealizations(m));
    }
    if precoders.realizations != m
        || precoders.num_aps != channels.num_aps
        || precoders.num_users != channels.num_users
        || precoders.antennas != channels.antennas
    {
        return Err(Error::DimensionMismatch(
            "channel and precoder realizations differ in shape".into(),
        ));
    }
    let (num_users, num_aps) = (channels.num_users, channels.num_aps);
    let block_len = num_aps * num_aps;

    let pairs: Vec<(usize, usize)> = (0..num_users)
        .flat_map(|k| (0..num_users).map(move |i| (k, i)))
        .collect();
    let results: Vec<(Vec<C64>, DMatrix<f64>, f64)> = pairs
        .par_iter()
        .map(|&(k, i)| {
            let gains = effective_gains(channels, precoders, k, i);
            let (mean, re, im) = pair_moments(&gains, num_aps);
            let mut imag_ratio = 0.0f64;
            for (r, q) in re.iter().zip(im.iter()) {
                imag_ratio = imag_ratio.max(q.abs() / (r.abs() + 1e-300));
            }
            let (block, min) = linalg::psd_repair(&re);
            let trace = re.trace();
            if min < -1e-10 * trace.abs() / num_aps as f64 {
                log::warn!("C[{k}][{i}] had eigenvalue {min:e} before repair (trace {trace:e})");
            }
            (mean, block, imag_ratio)
        })
        .collect();

    let mut b = vec![0.0; num_users * num_aps];
    let mut c = vec![0.0; num_users * num_users * block_len];
    let mut max_imag_ratio = 0.0f64;
    let mut negative = 0.0;
    let mut total = 0.0;
    for (&(k, i), (mean, block, imag_ratio)) in pairs.iter().zip(results) {
        let o = (k * num_users + i) * block_len;
        // nalgebra is column-major; the block is symmetric so the order agrees
        c[o..o + block_len].copy_from_slice(block.as_slice());
        max_imag_ratio = max_imag_ratio.max(imag_ratio);
        if k == i {
            for (l, v) in mean.iter().enumerate() {
                total += v.re.abs();
                if v.re < 0.0 {
                    negative += -v.re;
                }
                b[k * num_aps + l] = v.re.max(0.0);
            }
        }
    }
    let negative_b_fraction = if total > 0.0 { negative / total } else { 0.0 };
    if negative_b_fraction > 0.01 {
        log::warn!("clamped negative mass of b is {:.3}% of ||b||_1", 100.0 * negative_b_fraction);
    }
    Ok(EffectiveStatistics {
        format_version: STATISTICS_FORMAT_VERSION,
        num_users,
        num_aps,
        sigma_dl2,
        b,
        c,
        max_imag_ratio: Some(max_imag_ratio),
        negative_b_fraction: Some(negative_b_fraction),
    })
}

/// All intermediate products of the channel pipeline.
#[derive(Debug, Clone)]
pub struct ChannelPipeline {
    pub channels: LinkVectors,
    pub estimation: EstimationModel,
    pub precoders: Precoders,
    pub statistics: EffectiveStatistics,
}

/// Runs sampling, estimation, precoding and expectation with the scenario's
/// seed and Monte-Carlo depth.
pub fn run_pipeline(scenario: &Scenario) -> Result<ChannelPipeline> {
    let cfg = &scenario.config;
    let channels = sample_channels(scenario, cfg.mc_realizations, cfg.seed)?;
    let estimation = estimate_channels(&channels, scenario, cfg.seed)?;
    let precoders = pmmse_precoders(&estimation, scenario)?;
    let statistics = estimate_expectations(&channels, &precoders.vectors, cfg.noise_dl)?;
    Ok(ChannelPipeline {
        channels,
        estimation,
        precoders,
        statistics,
    })
}

pub fn effective_statistics(scenario: &Scenario) -> Result<EffectiveStatistics> {
    Ok(run_pipeline(scenario)?.statistics)
}
