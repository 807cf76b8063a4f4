//! Closed-form link model: MMSE estimation variances, effective SINRs, rates,
//! step durations, data volumes and the per-epoch effective rate.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::scenario::{LargeScaleFading, SystemParams};
use crate::{Error, Result};

/// Rates below this are treated as zero when converting payloads to time.
pub const MIN_RATE_BPS: f64 = 1.0;

/// Duplexing of Step 3 (uplink of FL updates).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    Hd,
    Fd,
    Fdma,
}

/// One of the seven rate expressions of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    /// Step 1 downlink to FL UE `l`.
    DownFl,
    /// Step 1 downlink to non-FL UE `k`.
    Down1,
    /// Step 2 downlink to non-FL UE `k`.
    Down2,
    /// Step 3 uplink from FL UE `l`.
    Up(Mode),
    /// Step 3 downlink to non-FL UE `k`.
    Down3(Mode),
}

impl Link {
    pub fn is_fl(self) -> bool {
        matches!(self, Link::DownFl | Link::Up(_))
    }
}

pub fn mmse_variance(rho_p: f64, tau_p: f64, beta: f64) -> f64 {
    let g = rho_p * tau_p * beta;
    g * beta / (g + 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationVariances {
    pub sigma2_d: Vec<f64>,
    pub sigma2_1: Vec<f64>,
    pub sigma2_2: Vec<f64>,
    pub sigma2_3: Vec<f64>,
    pub sigma2_u: Vec<f64>,
}

impl EstimationVariances {
    pub fn compute(params: &SystemParams, fading: &LargeScaleFading) -> Self {
        Self::with_step3_pilots(params, fading, params.tau_3p as f64, params.tau_up as f64)
    }

    /// Variances for the FDMA baseline, whose Step-3 pilots have length one.
    pub fn compute_fdma(params: &SystemParams, fading: &LargeScaleFading) -> Self {
        Self::with_step3_pilots(params, fading, 1.0, 1.0)
    }

    fn with_step3_pilots(params: &SystemParams, fading: &LargeScaleFading, tau_3: f64, tau_u: f64) -> Self {
        let var = |tau: f64, betas: &[f64]| -> Vec<f64> {
            betas.iter().map(|&b| mmse_variance(params.rho_p, tau, b)).collect()
        };
        Self {
            sigma2_d: var(params.tau_dp as f64, &fading.beta_fl),
            sigma2_1: var(params.tau_1p as f64, &fading.beta_nfl),
            sigma2_2: var(params.tau_2p as f64, &fading.beta_nfl),
            sigma2_3: var(tau_3, &fading.beta_nfl),
            sigma2_u: var(tau_u, &fading.beta_fl),
        }
    }
}

/// Power-control coefficients and CPU frequency of one FL iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub eta_d: Vec<f64>,
    pub zeta_1: Vec<f64>,
    pub zeta_2: Vec<f64>,
    pub eta_u: Vec<f64>,
    pub zeta_3: Vec<f64>,
    pub f: f64,
}

impl Allocation {
    /// Equal power split: `1/(L+K)` in Step 1, `1/K` downlink, full uplink.
    pub fn equal_power(l: usize, k: usize, f: f64) -> Self {
        let s1 = 1.0 / (l + k) as f64;
        Self {
            eta_d: vec![s1; l],
            zeta_1: vec![s1; k],
            zeta_2: vec![1.0 / k as f64; k],
            eta_u: vec![1.0; l],
            zeta_3: vec![1.0 / k as f64; k],
            f,
        }
    }

    /// Checks the power budgets and boxes with absolute tolerance `tol`.
    pub fn validate(&self, params: &SystemParams, tol: f64) -> Result<()> {
        let (l, k) = (params.fl_ues, params.nfl_ues);
        let fail = |m: String| Err(Error::InvalidAllocation(m));
        if self.eta_d.len() != l || self.eta_u.len() != l {
            return fail(format!("expected {l} FL coefficients"));
        }
        if self.zeta_1.len() != k || self.zeta_2.len() != k || self.zeta_3.len() != k {
            return fail(format!("expected {k} non-FL coefficients"));
        }
        let all = [&self.eta_d, &self.zeta_1, &self.zeta_2, &self.eta_u, &self.zeta_3];
        if all.iter().flat_map(|v| v.iter()).any(|&x| !x.is_finite() || x < -tol) {
            return fail("power coefficients must be non-negative".into());
        }
        let s1: f64 = self.eta_d.iter().chain(&self.zeta_1).sum();
        if s1 > 1.0 + tol {
            return fail(format!("Step-1 power sum {s1} exceeds 1"));
        }
        for (name, v) in [("zeta_2", &self.zeta_2), ("zeta_3", &self.zeta_3)] {
            let s: f64 = v.iter().sum();
            if s > 1.0 + tol {
                return fail(format!("{name} sum {s} exceeds 1"));
            }
        }
        if self.eta_u.iter().chain(&self.eta_d).any(|&x| x > 1.0 + tol) {
            return fail("FL power coefficient above 1".into());
        }
        let ftol = tol * params.f_max;
        if self.f < params.f_min - ftol || self.f > params.f_max + ftol || self.f <= 0.0 {
            return fail(format!("frequency {} outside [{}, {}]", self.f, params.f_min, params.f_max));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRates {
    pub mode: Mode,
    pub r_d_fl: Vec<f64>,
    pub r1_nfl: Vec<f64>,
    pub r2_nfl: Vec<f64>,
    pub r3_nfl: Vec<f64>,
    pub r_u_fl: Vec<f64>,
}

impl SchemeRates {
    /// Common FL downlink rate (group minimum).
    pub fn r_d(&self) -> f64 {
        self.r_d_fl.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Common FL uplink rate (group minimum).
    pub fn r_u(&self) -> f64 {
        self.r_u_fl.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochSummary {
    pub t_d: f64,
    pub t_c: f64,
    pub t_u: f64,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
    pub eff_rate: Vec<f64>,
    pub min_eff_rate: f64,
}

impl EpochSummary {
    pub fn total_time(&self) -> f64 {
        self.t_d + self.t_c + self.t_u
    }
}

/// One drop together with its derived estimation variances.
#[derive(Debug, Clone)]
pub struct Network {
    pub params: SystemParams,
    pub fading: LargeScaleFading,
    pub vars: EstimationVariances,
    pub fdma_vars: EstimationVariances,
}

impl Network {
    pub fn new(params: SystemParams, fading: LargeScaleFading) -> Result<Self> {
        params.validate()?;
        if fading.beta_fl.len() != params.fl_ues || fading.beta_nfl.len() != params.nfl_ues {
            return Err(Error::InvalidParams("fading dimensions do not match L and K".into()));
        }
        let vars = EstimationVariances::compute(&params, &fading);
        let fdma_vars = EstimationVariances::compute_fdma(&params, &fading);
        Ok(Self { params, fading, vars, fdma_vars })
    }

    pub fn l(&self) -> usize {
        self.params.fl_ues
    }

    pub fn k(&self) -> usize {
        self.params.nfl_ues
    }

    /// Bandwidth times pilot-overhead factor of a link, in Hz.
    pub fn prelog(&self, link: Link) -> f64 {
        let p = &self.params;
        let frac = |tau: usize| (p.tau_c - tau) as f64 / p.tau_c as f64;
        let hd = p.options.hd_band_fraction;
        let fdma = (p.tau_c - 1) as f64 / ((p.fl_ues + p.nfl_ues) as f64 * p.tau_c as f64);
        p.bandwidth_hz
            * match link {
                Link::DownFl => frac(p.tau_dp),
                Link::Down1 => frac(p.tau_1p),
                Link::Down2 => frac(p.tau_2p),
                Link::Up(Mode::Hd) => frac(p.tau_up) * hd,
                Link::Up(Mode::Fd) => frac(p.tau_up),
                Link::Down3(Mode::Hd) => frac(p.tau_3p) * hd,
                Link::Down3(Mode::Fd) => frac(p.tau_3p),
                Link::Up(Mode::Fdma) | Link::Down3(Mode::Fdma) => fdma,
            }
    }

    /// Weight of the cross-group power sum in the Step-1 denominators.
    fn cross_weight(&self, beta: f64, sigma2: f64) -> f64 {
        match self.params.options.theta_form {
            crate::scenario::ThetaForm::Residual => beta - sigma2,
            crate::scenario::ThetaForm::Full => beta,
        }
    }

    pub fn sinr_s1_fl(&self, a: &Allocation, l: usize) -> f64 {
        let p = &self.params;
        let (b, s2) = (self.fading.beta_fl[l], self.vars.sigma2_d[l]);
        let gain = (p.antennas - p.fl_ues - p.nfl_ues) as f64;
        let num = p.rho_d * a.eta_d[l] * gain * s2;
        let den = 1.0
            + p.rho_d * (b - s2) * a.eta_d.iter().sum::<f64>()
            + p.rho_d * self.cross_weight(b, s2) * a.zeta_1.iter().sum::<f64>();
        num / den
    }

    pub fn sinr_s1_nfl(&self, a: &Allocation, k: usize) -> f64 {
        let p = &self.params;
        let (b, s2) = (self.fading.beta_nfl[k], self.vars.sigma2_1[k]);
        let gain = (p.antennas - p.fl_ues - p.nfl_ues) as f64;
        let num = p.rho_d * a.zeta_1[k] * gain * s2;
        let den = 1.0
            + p.rho_d * (b - s2) * a.zeta_1.iter().sum::<f64>()
            + p.rho_d * self.cross_weight(b, s2) * a.eta_d.iter().sum::<f64>();
        num / den
    }

    pub fn sinr_s2_nfl(&self, a: &Allocation, k: usize) -> f64 {
        let p = &self.params;
        let (b, s2) = (self.fading.beta_nfl[k], self.vars.sigma2_2[k]);
        let num = p.rho_d * a.zeta_2[k] * (p.antennas - p.nfl_ues) as f64 * s2;
        num / (1.0 + p.rho_d * (b - s2) * a.zeta_2.iter().sum::<f64>())
    }

    fn uplink_interference(&self, a: &Allocation) -> f64 {
        let p = &self.params;
        let v = &self.vars;
        1.0 + p.rho_u
            * (0..p.fl_ues)
                .map(|i| (self.fading.beta_fl[i] - v.sigma2_u[i]) * a.eta_u[i])
                .sum::<f64>()
    }

    pub fn sinr_s3_hd_fl(&self, a: &Allocation, l: usize) -> f64 {
        let p = &self.params;
        let num = p.rho_u * a.eta_u[l] * (p.antennas - p.fl_ues) as f64 * self.vars.sigma2_u[l];
        num / self.uplink_interference(a)
    }

    pub fn sinr_s3_hd_nfl(&self, a: &Allocation, k: usize) -> f64 {
        let p = &self.params;
        let (b, s2) = (self.fading.beta_nfl[k], self.vars.sigma2_3[k]);
        let num = p.rho_d * a.zeta_3[k] * (p.antennas - p.nfl_ues) as f64 * s2;
        num / (1.0 + p.rho_d * (b - s2) * a.zeta_3.iter().sum::<f64>())
    }

    /// Self-interference power seen by every FL uplink stream, per unit of
    /// total Step-3 downlink power.
    pub fn si_coefficient(&self) -> f64 {
        self.params.si_tx_scale() * self.params.antennas as f64 * self.fading.beta_si_sigma2
    }

    pub fn sinr_s3_fd_fl(&self, a: &Allocation, l: usize) -> f64 {
        let p = &self.params;
        let num = p.rho_u * a.eta_u[l] * (p.antennas - p.fl_ues) as f64 * self.vars.sigma2_u[l];
        let si = self.si_coefficient() * a.zeta_3.iter().sum::<f64>();
        num / (self.uplink_interference(a) + si)
    }

    pub fn sinr_s3_fd_nfl(&self, a: &Allocation, k: usize) -> f64 {
        let p = &self.params;
        let (b, s2) = (self.fading.beta_nfl[k], self.vars.sigma2_3[k]);
        let num = p.rho_d * a.zeta_3[k] * (p.antennas - p.nfl_ues) as f64 * s2;
        let igi: f64 = (0..p.fl_ues).map(|i| a.eta_u[i] * self.fading.beta_igi[k][i]).sum();
        num / (1.0 + p.rho_d * (b - s2) * a.zeta_3.iter().sum::<f64>() + p.rho_u * igi)
    }

    pub fn sinr_fdma_fl(&self, a: &Allocation, l: usize) -> f64 {
        let p = &self.params;
        let num = p.rho_u * a.eta_u[l] * p.antennas as f64 * self.fdma_vars.sigma2_u[l];
        num / (1.0 + p.rho_u * self.fading.beta_fl[l] * a.eta_u[l])
    }

    pub fn sinr_fdma_nfl(&self, a: &Allocation, k: usize) -> f64 {
        let p = &self.params;
        let num = p.rho_d * a.zeta_3[k] * p.antennas as f64 * self.fdma_vars.sigma2_3[k];
        num / (1.0 + p.rho_d * self.fading.beta_nfl[k] * a.zeta_3[k])
    }

    pub fn sinr(&self, link: Link, a: &Allocation, idx: usize) -> f64 {
        match link {
            Link::DownFl => self.sinr_s1_fl(a, idx),
            Link::Down1 => self.sinr_s1_nfl(a, idx),
            Link::Down2 => self.sinr_s2_nfl(a, idx),
            Link::Up(Mode::Hd) => self.sinr_s3_hd_fl(a, idx),
            Link::Up(Mode::Fd) => self.sinr_s3_fd_fl(a, idx),
            Link::Up(Mode::Fdma) => self.sinr_fdma_fl(a, idx),
            Link::Down3(Mode::Hd) => self.sinr_s3_hd_nfl(a, idx),
            Link::Down3(Mode::Fd) => self.sinr_s3_fd_nfl(a, idx),
            Link::Down3(Mode::Fdma) => self.sinr_fdma_nfl(a, idx),
        }
    }

    /// Achievable rate in bps.
    pub fn rate(&self, link: Link, a: &Allocation, idx: usize) -> f64 {
        self.prelog(link) * self.sinr(link, a, idx).ln_1p() / std::f64::consts::LN_2
    }

    pub fn rates(&self, a: &Allocation, mode: Mode) -> SchemeRates {
        let per = |link: Link, n: usize| (0..n).map(|i| self.rate(link, a, i)).collect();
        SchemeRates {
            mode,
            r_d_fl: per(Link::DownFl, self.l()),
            r1_nfl: per(Link::Down1, self.k()),
            r2_nfl: per(Link::Down2, self.k()),
            r3_nfl: per(Link::Down3(mode), self.k()),
            r_u_fl: per(Link::Up(mode), self.l()),
        }
    }

    pub fn effective_rates(&self, a: &Allocation, mode: Mode) -> Result<EpochSummary> {
        let rates = self.rates(a, mode);
        let t = times(&rates, a.f, &self.params)?;
        Ok(summarize(&rates, t))
    }
}

/// Step durations `(t_d, t_C, t_u)` in seconds.
pub fn times(rates: &SchemeRates, f: f64, params: &SystemParams) -> Result<(f64, f64, f64)> {
    if !(f > 0.0) {
        return Err(Error::InvalidAllocation(format!("frequency must be positive (got {f})")));
    }
    let (r_d, r_u) = (rates.r_d(), rates.r_u());
    if !(r_d >= MIN_RATE_BPS) {
        return Err(Error::ZeroRate { which: "FL downlink", rate: r_d });
    }
    if !(r_u >= MIN_RATE_BPS) {
        return Err(Error::ZeroRate { which: "FL uplink", rate: r_u });
    }
    Ok((params.s_d_bits / r_d, params.compute_cycles() / f, params.s_u_bits / r_u))
}

/// Bits delivered to non-FL UE `k` in Steps 1, 2 and 3.
pub fn data_volumes(rates: &SchemeRates, t: (f64, f64, f64), k: usize) -> (f64, f64, f64) {
    (rates.r1_nfl[k] * t.0, rates.r2_nfl[k] * t.1, rates.r3_nfl[k] * t.2)
}

pub fn summarize(rates: &SchemeRates, t: (f64, f64, f64)) -> EpochSummary {
    let k = rates.r1_nfl.len();
    let total = t.0 + t.1 + t.2;
    let (mut d1, mut d2, mut d3, mut eff) = (vec![], vec![], vec![], vec![]);
    for i in 0..k {
        let (a, b, c) = data_volumes(rates, t, i);
        d1.push(a);
        d2.push(b);
        d3.push(c);
        eff.push((a + b + c) / total);
    }
    let min_eff_rate = eff.iter().copied().fold(f64::INFINITY, f64::min);
    EpochSummary { t_d: t.0, t_c: t.1, t_u: t.2, d1, d2, d3, eff_rate: eff, min_eff_rate }
}

/// Monte-Carlo check of the self-interference variance approximation.
///
/// Each sample draws an `M x M` SI matrix with i.i.d. `CN(0, beta_si_sigma2)`
/// entries and a unit-norm receive combiner `u`, and evaluates
/// `rho_d * zeta_sum * |G^H u|^2`, the SI power after the transmit covariance
/// has been replaced by its trace-preserving average. Returns the sample mean
/// and the closed form `rho_d * M * beta_si_sigma2 * zeta_sum`.
pub fn verify_fd_si_variance(
    m: usize,
    n_samples: usize,
    beta_si_sigma2: f64,
    zeta_sum: f64,
    rho_d: f64,
    seed: u64,
) -> (f64, f64) {
    let approx = rho_d * m as f64 * beta_si_sigma2 * zeta_sum;
    if beta_si_sigma2 == 0.0 || zeta_sum == 0.0 {
        return (0.0, approx);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = (beta_si_sigma2 / 2.0).sqrt();
    let mut cn = |s: f64| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    };
    let mut g = vec![Complex64::default(); m * m];
    let mut u = vec![Complex64::default(); m];
    let mut acc = 0.0;
    for _ in 0..n_samples {
        g.iter_mut().for_each(|x| *x = cn(std));
        u.iter_mut().for_each(|x| *x = cn(1.0));
        let norm = u.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        u.iter_mut().for_each(|x| *x /= norm);
        // |G^H u|^2 with G stored row-major.
        let mut power = 0.0;
        for col in 0..m {
            let v: Complex64 = (0..m).map(|row| g[row * m + col].conj() * u[row]).sum();
            power += v.norm_sqr();
        }
        acc += power;
    }
    (rho_d * zeta_sum * acc / n_samples as f64, approx)
}
