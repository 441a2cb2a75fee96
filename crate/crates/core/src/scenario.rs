//! Network deployments and one-ring spatial covariances.
//!
//! Every downstream quantity is a deterministic function of a
//! [`ScenarioConfig`]: AP and user positions are drawn uniformly on a square,
//! large-scale gains follow a log-distance path-loss law and each AP-user
//! link gets a one-ring covariance for a half-wavelength uniform linear array.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::rng;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

/// Number of Gauss-Legendre nodes for the one-ring integral.
pub const ONE_RING_NODES: usize = 200;

/// Minimum horizontal AP-user distance in meters.
pub const MIN_HORIZONTAL_DISTANCE: f64 = 5.0;

/// -94 dBm in watts (20 MHz bandwidth, 7 dB noise figure).
pub const DEFAULT_NOISE_W: f64 = 3.981_071_705_534_969e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Number of access points (L).
    pub num_aps: usize,
    /// Antennas per AP (N).
    pub antennas: usize,
    /// Number of single-antenna users (K).
    pub num_users: usize,
    /// Side of the square deployment area in meters.
    pub area_side: f64,
    /// AP height above the users in meters.
    pub ap_height: f64,
    /// Pilot length in symbols; `None` means one pilot per user.
    pub pilot_len: Option<usize>,
    /// Uplink pilot power per user in watts.
    pub pilot_power: f64,
    /// Uplink noise power in watts.
    pub noise_ul: f64,
    /// Downlink noise power in watts.
    pub noise_dl: f64,
    /// Per-AP transmit power cap in watts.
    pub p_max: f64,
    /// Peak PA efficiency of the non-linear model, reached at `p_max`.
    pub eta_max: f64,
    /// Constant efficiency of the ideal PA model.
    pub eta: f64,
    /// One-ring angular spread (half-width) in radians.
    pub angular_spread: f64,
    /// Users served by each AP; `None` means `min(K, pilot_len)`.
    pub service_set_size: Option<usize>,
    /// Monte-Carlo depth for the effective channel statistics.
    pub mc_realizations: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_aps: 25,
            antennas: 4,
            num_users: 8,
            area_side: 1000.0,
            ap_height: 10.0,
            pilot_len: None,
            pilot_power: 0.1,
            noise_ul: DEFAULT_NOISE_W,
            noise_dl: DEFAULT_NOISE_W,
            p_max: 1.0,
            eta_max: PI / 4.0,
            eta: PI / 4.0,
            angular_spread: 15f64.to_radians(),
            service_set_size: None,
            mc_realizations: 500,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn pilot_len(&self) -> usize {
        self.pilot_len.unwrap_or(self.num_users)
    }

    pub fn service_set_size(&self) -> usize {
        self.service_set_size
            .unwrap_or_else(|| self.num_users.min(self.pilot_len()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_aps == 0 || self.antennas == 0 || self.num_users == 0 {
            return fail(format!(
                "num_aps, antennas and num_users must be positive (got {}, {}, {})",
                self.num_aps, self.antennas, self.num_users
            ));
        }
        if self.pilot_len() < self.num_users {
            return fail(format!(
                "pilot_len {} is shorter than num_users {}; pilots must be orthogonal",
                self.pilot_len(),
                self.num_users
            ));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return fail(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        if !(self.eta_max > 0.0 && self.eta_max <= 1.0) {
            return fail(format!("eta_max must lie in (0, 1], got {}", self.eta_max));
        }
        if !(self.p_max > 0.0) {
            return fail(format!("p_max must be positive, got {}", self.p_max));
        }
        if !(self.noise_ul > 0.0) || !(self.noise_dl > 0.0) {
            return fail("noise_ul and noise_dl must be positive".into());
        }
        let s = self.service_set_size();
        if s == 0 || s > self.num_users {
            return fail(format!(
                "service_set_size must lie in [1, {}], got {s}",
                self.num_users
            ));
        }
        if !(self.area_side >= 0.0) || !(self.ap_height >= 0.0) {
            return fail("area_side and ap_height must be nonnegative".into());
        }
        if !(self.angular_spread >= 0.0) {
            return fail("angular_spread must be nonnegative".into());
        }
        if !(self.pilot_power > 0.0) {
            return fail("pilot_power must be positive".into());
        }
        Ok(())
    }
}

/// A deployment with its large-scale statistics.
///
/// Gains and angles are stored row-major as `L x K` (`[l * K + k]`), as are
/// the covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub ap_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    pub beta: Vec<f64>,
    pub nominal_angles: Vec<f64>,
    pub covariances: Vec<DMatrix<C64>>,
}

impl Scenario {
    /// Full pipeline: geometry followed by one-ring covariances.
    pub fn generate(config: &ScenarioConfig) -> Result<Self> {
        let mut scenario = generate_geometry(config)?;
        scenario.build_covariances();
        Ok(scenario)
    }

    pub fn num_aps(&self) -> usize {
        self.config.num_aps
    }

    pub fn num_users(&self) -> usize {
        self.config.num_users
    }

    pub fn link(&self, l: usize, k: usize) -> usize {
        l * self.config.num_users + k
    }

    pub fn beta(&self, l: usize, k: usize) -> f64 {
        self.beta[self.link(l, k)]
    }

    pub fn covariance(&self, l: usize, k: usize) -> &DMatrix<C64> {
        &self.covariances[self.link(l, k)]
    }

    /// (Re)computes the covariances from gains and angles.
    pub fn build_covariances(&mut self) {
        let n = self.config.antennas;
        let spread = self.config.angular_spread;
        self.covariances = self
            .beta
            .iter()
            .zip(&self.nominal_angles)
            .map(|(&b, &a)| one_ring_covariance(b, a, spread, n))
            .collect();
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            format_version: SCENARIO_FORMAT_VERSION,
            config: self.config.clone(),
            ap_positions: self.ap_positions.clone(),
            user_positions: self.user_positions.clone(),
            beta: self.beta.clone(),
            nominal_angles: self.nominal_angles.clone(),
        }
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        if file.format_version != SCENARIO_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: file.format_version,
                expected: SCENARIO_FORMAT_VERSION,
            });
        }
        file.config.validate()?;
        let links = file.config.num_aps * file.config.num_users;
        if file.ap_positions.len() != file.config.num_aps
            || file.user_positions.len() != file.config.num_users
            || file.beta.len() != links
            || file.nominal_angles.len() != links
        {
            return Err(Error::DimensionMismatch(
                "scenario arrays do not match num_aps/num_users".into(),
            ));
        }
        let mut scenario = Scenario {
            config: file.config,
            ap_positions: file.ap_positions,
            user_positions: file.user_positions,
            beta: file.beta,
            nominal_angles: file.nominal_angles,
            covariances: Vec::new(),
        };
        scenario.build_covariances();
        Ok(scenario)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }
}

/// On-disk form of a [`Scenario`]. Covariances are rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub format_version: u32,
    pub config: ScenarioConfig,
    pub ap_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    pub beta: Vec<f64>,
    pub nominal_angles: Vec<f64>,
}

/// Large-scale gain in dB at 3-D distance `d` meters.
pub fn path_loss_db(d: f64) -> f64 {
    -30.5 - 36.7 * d.log10()
}

/// Draws positions and derives gains and nominal angles. Covariances are left empty.
pub fn generate_geometry(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng::derive_seed(config.seed, rng::GEOMETRY));
    let side = config.area_side;
    let mut draw = |count: usize| -> Vec<[f64; 2]> {
        (0..count)
            .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
            .collect()
    };
    let ap_positions = draw(config.num_aps);
    let user_positions = draw(config.num_users);

    let mut beta = Vec::with_capacity(config.num_aps * config.num_users);
    let mut nominal_angles = Vec::with_capacity(beta.capacity());
    for ap in &ap_positions {
        for user in &user_positions {
            let dx = user[0] - ap[0];
            let dy = user[1] - ap[1];
            let horizontal = dx.hypot(dy).max(MIN_HORIZONTAL_DISTANCE);
            let distance = horizontal.hypot(config.ap_height);
            beta.push(10f64.powf(path_loss_db(distance) / 10.0));
            nominal_angles.push(dy.atan2(dx));
        }
    }
    Ok(Scenario {
        config: config.clone(),
        ap_positions,
        user_positions,
        beta,
        nominal_angles,
        covariances: Vec::new(),
    })
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let step = p0 / dp;
            z -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn one_ring_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ONE_RING_NODES))
}

/// One-ring covariance of a half-wavelength ULA with `n` antennas.
///
/// `[R]_{m,n} = beta / (2 spread) * integral over [angle - spread, angle + spread]
/// of exp(j pi (m - n) sin phi)`. `spread = 0` gives the rank-one point-scatterer limit.
pub fn one_ring_covariance(beta: f64, angle: f64, spread: f64, n: usize) -> DMatrix<C64> {
    // Toeplitz: first column r[d] = E[exp(j pi d sin phi)]
    let mut first = vec![C64::new(1.0, 0.0); n];
    if spread == 0.0 {
        let s = angle.sin();
        for (d, r) in first.iter_mut().enumerate().skip(1) {
            *r = C64::from_polar(1.0, PI * d as f64 * s);
        }
    } else {
        let (nodes, weights) = one_ring_rule();
        for (d, r) in first.iter_mut().enumerate().skip(1) {
            let mut acc = C64::new(0.0, 0.0);
            for (x, w) in nodes.iter().zip(weights) {
                let phi = angle + spread * x;
                acc += C64::from_polar(0.5 * w, PI * d as f64 * phi.sin());
            }
            *r = acc;
        }
    }
    DMatrix::from_fn(n, n, |i, j| {
        if i >= j {
            first[i - j] * beta
        } else {
            first[j - i].conj() * beta
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            num_aps: 6,
            num_users: 3,
            seed: 17,
            ..Default::default()
        }
    }

    #[test]
    fn geometry_is_deterministic() {
        let a = Scenario::generate(&small_config()).unwrap();
        let b = Scenario::generate(&small_config()).unwrap();
        assert_eq!(a, b);
        let c = Scenario::generate(&ScenarioConfig {
            seed: 18,
            ..small_config()
        })
        .unwrap();
        assert_ne!(a.ap_positions, c.ap_positions);
    }

    #[test]
    fn distance_floor_applies_to_colocated_nodes() {
        let config = ScenarioConfig {
            area_side: 0.0,
            ..small_config()
        };
        let s = generate_geometry(&config).unwrap();
        let expected = 10f64.powf(path_loss_db(5f64.hypot(10.0)) / 10.0);
        assert!(s.beta.iter().all(|&b| b == expected && b.is_finite()));
    }

    #[test]
    fn positions_within_area() {
        let s = generate_geometry(&small_config()).unwrap();
        for p in s.ap_positions.iter().chain(&s.user_positions) {
            assert!((0.0..=1000.0).contains(&p[0]) && (0.0..=1000.0).contains(&p[1]));
        }
    }

    #[test]
    fn rejects_short_pilots() {
        let config = ScenarioConfig {
            pilot_len: Some(2),
            ..small_config()
        };
        assert!(matches!(config.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(ONE_RING_NODES);
        let sum: f64 = w.iter().sum();
        assert!((sum - 2.0).abs() < 1e-13);
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m4 - 0.4).abs() < 1e-13);
    }

    #[test]
    fn point_scatterer_limit_is_rank_one() {
        let angle = 0.3;
        let r = one_ring_covariance(2.0, angle, 0.0, 4);
        let a = nalgebra::DVector::from_fn(4, |m, _| C64::from_polar(1.0, PI * m as f64 * angle.sin()));
        let expected = (&a * a.adjoint()) * C64::new(2.0, 0.0);
        assert!((r - expected).norm() < 1e-12);
    }

    #[test]
    fn diagonal_equals_beta_and_hermitian() {
        for &(beta, angle, spread, n) in &[(1.0, 0.0, 0.26, 4), (3e-11, 2.0, 0.1, 8), (0.5, -1.2, 0.0, 3)] {
            let r = one_ring_covariance(beta, angle, spread, n);
            for m in 0..n {
                assert_eq!(r[(m, m)], C64::new(beta, 0.0));
            }
            assert_eq!(r.adjoint(), r);
        }
    }

    #[test]
    fn json_round_trip_rebuilds_covariances() {
        let s = Scenario::generate(&small_config()).unwrap();
        let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(s, back);
    }
}
