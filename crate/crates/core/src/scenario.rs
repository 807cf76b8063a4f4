//! Network drops: system parameters, UE placement and large-scale fading.
//!
//! Every quantity produced here is an immutable value; generation is a pure
//! function of `(SystemParams, seed)` so drops can be built in parallel.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Intercept of the log-distance path-loss law at 1 km, in dB.
pub const PATHLOSS_INTERCEPT_DB: f64 = -148.1;
/// Slope of the path-loss law in dB per decade of distance.
pub const PATHLOSS_SLOPE_DB: f64 = 37.6;

const MAX_PLACEMENT_TRIES: usize = 100_000;

/// How the residual self-interference power enters the full-duplex uplink SINR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiScaling {
    /// SI term is `P_d[W] * M * beta_si * sigma2_si0/N0`: the residual SI level
    /// is referenced to the noise floor once and the downlink power enters in
    /// watts.
    TransmitWatts,
    /// SI term is `rho_d * M * beta_si * sigma2_si0/N0` with `rho_d` the
    /// noise-normalized downlink SNR.
    NoiseNormalized,
}

/// Which estimation-error weight multiplies the cross-group power sum in the
/// Step-1 denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaForm {
    /// `(beta - sigma2)` on both interference sums.
    Residual,
    /// Full `beta` on the cross-group sum.
    Full,
}

/// Uplink mode assumed by the equal-power baseline when it sizes the
/// computation frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bl2Uplink {
    Hd,
    Fd,
}

/// Modelling switches that the closed forms leave open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub si_scaling: SiScaling,
    pub theta_form: ThetaForm,
    /// Fraction of the band given to each group in half-duplex Step 3.
    pub hd_band_fraction: f64,
    /// Shadowing standard deviation in dB (0 disables shadowing).
    pub shadow_std_db: f64,
    /// Minimum UE-to-BS distance.
    pub min_ue_distance_m: f64,
    /// Floor applied to UE-to-UE distances for inter-group gains.
    pub igi_min_distance_m: f64,
    pub bl2_uplink: Bl2Uplink,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            si_scaling: SiScaling::TransmitWatts,
            theta_form: ThetaForm::Residual,
            hd_band_fraction: 0.5,
            shadow_std_db: 7.0,
            min_ue_distance_m: 35.0,
            igi_min_distance_m: 10.0,
            bl2_uplink: Bl2Uplink::Hd,
        }
    }
}

/// Fixed scalars of one network configuration.
///
/// Powers are stored as noise-normalized SNRs (`rho_*`); see
/// [`normalize_snr`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// BS antennas (transmit and receive arrays each have this many).
    pub antennas: usize,
    /// FL UEs.
    pub fl_ues: usize,
    /// Non-FL UEs.
    pub nfl_ues: usize,
    pub bandwidth_hz: f64,
    pub tau_c: usize,
    pub tau_dp: usize,
    pub tau_1p: usize,
    pub tau_2p: usize,
    pub tau_3p: usize,
    pub tau_up: usize,
    pub rho_d: f64,
    pub rho_u: f64,
    pub rho_p: f64,
    pub n0_dbm: f64,
    pub nc_rounds: f64,
    pub d_max: f64,
    pub c_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub s_d_bits: f64,
    pub s_u_bits: f64,
    pub t_qos: f64,
    pub area_side_m: f64,
    pub si_over_noise_db: f64,
    pub pl_si_db: f64,
    pub options: ModelOptions,
}

impl Default for SystemParams {
    fn default() -> Self {
        let n0_dbm = -92.0;
        Self {
            antennas: 50,
            fl_ues: 5,
            nfl_ues: 5,
            bandwidth_hz: 20e6,
            tau_c: 200,
            tau_dp: 20,
            tau_1p: 20,
            tau_2p: 20,
            tau_3p: 20,
            tau_up: 20,
            rho_d: normalize_snr(10.0, n0_dbm),
            rho_u: normalize_snr(0.2, n0_dbm),
            rho_p: normalize_snr(0.2, n0_dbm),
            n0_dbm,
            nc_rounds: 20.0,
            d_max: 1.6e5,
            c_max: 20.0,
            f_min: 0.0,
            f_max: 5e9,
            s_d_bits: 16e6,
            s_u_bits: 16e6,
            t_qos: 3.0,
            area_side_m: 250.0,
            si_over_noise_db: 20.0,
            pl_si_db: -81.1846,
            options: ModelOptions::default(),
        }
    }
}

impl SystemParams {
    /// Checks every structural invariant; sweeps call this at each point.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        let (m, l, k) = (self.antennas, self.fl_ues, self.nfl_ues);
        if l == 0 || k == 0 {
            return fail(format!("need at least one UE per group (L={l}, K={k})"));
        }
        if m < l + k {
            return fail(format!("zero-forcing needs M >= L+K (M={m}, L+K={})", l + k));
        }
        for (name, tau, need) in [
            ("tau_dp", self.tau_dp, l + k),
            ("tau_1p", self.tau_1p, l + k),
            ("tau_2p", self.tau_2p, k),
            ("tau_3p", self.tau_3p, l + k),
            ("tau_up", self.tau_up, l + k),
        ] {
            if tau < need {
                return fail(format!("{name}={tau} is shorter than the {need} orthogonal pilots needed"));
            }
            if tau >= self.tau_c {
                return fail(format!("{name}={tau} must be below tau_c={}", self.tau_c));
            }
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max) {
            return fail(format!("need 0 <= f_min < f_max (got {}, {})", self.f_min, self.f_max));
        }
        for (name, v) in [
            ("bandwidth_hz", self.bandwidth_hz),
            ("rho_d", self.rho_d),
            ("rho_u", self.rho_u),
            ("rho_p", self.rho_p),
            ("nc_rounds", self.nc_rounds),
            ("d_max", self.d_max),
            ("c_max", self.c_max),
            ("s_d_bits", self.s_d_bits),
            ("s_u_bits", self.s_u_bits),
            ("t_qos", self.t_qos),
            ("area_side_m", self.area_side_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive and finite (got {v})"));
            }
        }
        let o = &self.options;
        if !(o.hd_band_fraction > 0.0 && o.hd_band_fraction <= 1.0) {
            return fail(format!("hd_band_fraction must lie in (0, 1] (got {})", o.hd_band_fraction));
        }
        if !(o.shadow_std_db >= 0.0) || !(o.min_ue_distance_m > 0.0) || !(o.igi_min_distance_m > 0.0) {
            return fail("shadowing and distance floors must be non-negative / positive".into());
        }
        Ok(())
    }

    /// Raises every pilot length that must cover all UEs to at least `L+K`.
    pub fn raise_pilots(&mut self) {
        let need = self.fl_ues + self.nfl_ues;
        for tau in [&mut self.tau_dp, &mut self.tau_1p, &mut self.tau_3p, &mut self.tau_up] {
            *tau = (*tau).max(need);
        }
        self.tau_2p = self.tau_2p.max(self.nfl_ues);
    }

    /// Noise power in watts.
    pub fn noise_watts(&self) -> f64 {
        db_to_linear(self.n0_dbm - 30.0)
    }

    /// Local computation load `N_c * D_max * c_max` in cycles.
    pub fn compute_cycles(&self) -> f64 {
        self.nc_rounds * self.d_max * self.c_max
    }

    /// Multiplier of the downlink power in the SI term of the FD uplink SINR.
    pub fn si_tx_scale(&self) -> f64 {
        match self.options.si_scaling {
            SiScaling::TransmitWatts => self.rho_d * self.noise_watts(),
            SiScaling::NoiseNormalized => self.rho_d,
        }
    }
}

/// Positions of one drop. The BS sits at the area center.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub bs_position: [f64; 2],
    pub fl_positions: Vec<[f64; 2]>,
    pub nfl_positions: Vec<[f64; 2]>,
    pub seed: u64,
}

impl Geometry {
    pub fn fl_distances(&self) -> Vec<f64> {
        self.fl_positions.iter().map(|p| dist(*p, self.bs_position)).collect()
    }

    pub fn nfl_distances(&self) -> Vec<f64> {
        self.nfl_positions.iter().map(|p| dist(*p, self.bs_position)).collect()
    }

    /// `K x L` matrix of non-FL-to-FL UE distances.
    pub fn igi_distances(&self) -> Vec<Vec<f64>> {
        self.nfl_positions
            .iter()
            .map(|q| self.fl_positions.iter().map(|p| dist(*p, *q)).collect())
            .collect()
    }
}

/// Large-scale gains of one drop, all linear.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScaleFading {
    /// `beta_l` for each FL UE.
    pub beta_fl: Vec<f64>,
    /// `beta_bar_k` for each non-FL UE.
    pub beta_nfl: Vec<f64>,
    /// `beta_igi[k][l]`, FL UE `l` into non-FL UE `k`.
    pub beta_igi: Vec<Vec<f64>>,
    /// `beta_si * sigma2_si0 / N0`.
    pub beta_si_sigma2: f64,
}

impl LargeScaleFading {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let all = self
            .beta_fl
            .iter()
            .chain(&self.beta_nfl)
            .chain(self.beta_igi.iter().flatten())
            .all(|&b| ok(b));
        if !all || !(self.beta_si_sigma2.is_finite() && self.beta_si_sigma2 >= 0.0) {
            return Err(Error::InvalidParams("fading gains must be positive and finite".into()));
        }
        Ok(())
    }

    /// Copy with self-interference and inter-group gains zeroed.
    pub fn without_cross_interference(&self) -> Self {
        Self {
            beta_igi: self.beta_igi.iter().map(|row| vec![0.0; row.len()]).collect(),
            beta_si_sigma2: 0.0,
            ..self.clone()
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Path gain in dB at `distance_m` with additive shadowing `shadow_db`.
pub fn pathloss_db(distance_m: f64, shadow_db: f64) -> f64 {
    debug_assert!(distance_m > 0.0);
    PATHLOSS_INTERCEPT_DB - PATHLOSS_SLOPE_DB * (distance_m / 1000.0).log10() + shadow_db
}

/// Transmit power in watts divided by the noise power.
pub fn normalize_snr(power_watts: f64, n0_dbm: f64) -> f64 {
    power_watts / db_to_linear(n0_dbm - 30.0)
}

/// Places `L` FL and `K` non-FL UEs uniformly in the square, resampling any
/// point closer than the minimum distance to the BS.
pub fn drop_ues(params: &SystemParams, seed: u64) -> Result<Geometry> {
    let side = params.area_side_m;
    let min_d = params.options.min_ue_distance_m;
    if side <= 2.0 * min_d {
        return Err(Error::Geometry(format!(
            "area side {side} m leaves no room beyond the {min_d} m exclusion radius"
        )));
    }
    let center = [side / 2.0, side / 2.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut place = |n: usize| -> Result<Vec<[f64; 2]>> {
        (0..n)
            .map(|_| {
                for _ in 0..MAX_PLACEMENT_TRIES {
                    let p = [rng.gen::<f64>() * side, rng.gen::<f64>() * side];
                    if dist(p, center) >= min_d {
                        return Ok(p);
                    }
                }
                Err(Error::Geometry("UE placement exceeded the retry budget".into()))
            })
            .collect()
    };
    let fl_positions = place(params.fl_ues)?;
    let nfl_positions = place(params.nfl_ues)?;
    Ok(Geometry { bs_position: center, fl_positions, nfl_positions, seed })
}

/// Large-scale fading for a drop with i.i.d. log-normal shadowing per link.
pub fn build_fading(geom: &Geometry, params: &SystemParams, seed: u64) -> LargeScaleFading {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = params.options.shadow_std_db;
    let shadow = Normal::new(0.0, std.max(0.0)).expect("finite std");
    let mut gain = |d: f64| {
        let z = if std > 0.0 { shadow.sample(&mut rng) } else { 0.0 };
        db_to_linear(pathloss_db(d, z))
    };
    let beta_fl = geom.fl_distances().into_iter().map(&mut gain).collect();
    let beta_nfl = geom.nfl_distances().into_iter().map(&mut gain).collect();
    let floor = params.options.igi_min_distance_m;
    let beta_igi = geom
        .igi_distances()
        .into_iter()
        .map(|row| row.into_iter().map(|d| gain(d.max(floor))).collect())
        .collect();
    LargeScaleFading {
        beta_fl,
        beta_nfl,
        beta_igi,
        beta_si_sigma2: db_to_linear(params.pl_si_db) * db_to_linear(params.si_over_noise_db),
    }
}

/// Geometry plus fading for one seed; the two streams are decorrelated.
pub fn generate_drop(params: &SystemParams, seed: u64) -> Result<(Geometry, LargeScaleFading)> {
    let geom = drop_ues(params, seed)?;
    let fading = build_fading(&geom, params, seed ^ 0x9e37_79b9_7f4a_7c15);
    Ok((geom, fading))
}

/// Writes one CSV row per link: `type,index,distance_m,beta_db`.
pub fn write_drop_csv<W: Write>(geom: &Geometry, fading: &LargeScaleFading, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["type", "index", "distance_m", "beta_db"])?;
    for (i, (d, b)) in geom.fl_distances().iter().zip(&fading.beta_fl).enumerate() {
        w.write_record(["fl", &i.to_string(), &format!("{d:.3}"), &format!("{:.4}", linear_to_db(*b))])?;
    }
    for (i, (d, b)) in geom.nfl_distances().iter().zip(&fading.beta_nfl).enumerate() {
        w.write_record(["nfl", &i.to_string(), &format!("{d:.3}"), &format!("{:.4}", linear_to_db(*b))])?;
    }
    for (k, (drow, brow)) in geom.igi_distances().iter().zip(&fading.beta_igi).enumerate() {
        for (l, (d, b)) in drow.iter().zip(brow).enumerate() {
            let idx = format!("{k}:{l}");
            w.write_record(["igi", &idx, &format!("{d:.3}"), &format!("{:.4}", linear_to_db(*b))])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pathloss_reference_points() {
        assert_relative_eq!(pathloss_db(1000.0, 0.0), -148.1, epsilon = 1e-12);
        assert_relative_eq!(pathloss_db(100.0, 0.0), -110.5, epsilon = 1e-12);
        assert_relative_eq!(pathloss_db(100.0, 7.0), -103.5, epsilon = 1e-12);
    }

    #[test]
    fn snr_normalization() {
        assert_relative_eq!(normalize_snr(10.0, -92.0), 10f64.powf(13.2), max_relative = 1e-12);
        assert_relative_eq!(normalize_snr(0.2, -92.0), 0.02 * 10f64.powf(13.2), max_relative = 1e-12);
        let noise = db_to_linear(-92.0 - 30.0);
        assert_relative_eq!(normalize_snr(noise, -92.0), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn drop_respects_exclusion_and_bounds() {
        let p = SystemParams { area_side_m: 250.0, ..Default::default() };
        let g = drop_ues(&p, 1).unwrap();
        assert_eq!(g.fl_positions.len() + g.nfl_positions.len(), 10);
        let half_diag = 125.0 * 2f64.sqrt();
        for d in g.fl_distances().into_iter().chain(g.nfl_distances()) {
            assert!((35.0..=half_diag + 1e-9).contains(&d), "{d}");
        }
        assert_eq!(g, drop_ues(&p, 1).unwrap());
    }

    #[test]
    fn small_area_is_rejected() {
        let p = SystemParams { area_side_m: 60.0, ..Default::default() };
        assert!(matches!(drop_ues(&p, 1), Err(Error::Geometry(_))));
    }

    #[test]
    fn fading_without_shadowing_at_one_km() {
        let mut p = SystemParams::default();
        p.options.shadow_std_db = 0.0;
        let g = Geometry {
            bs_position: [0.0, 0.0],
            fl_positions: vec![[1000.0, 0.0]],
            nfl_positions: vec![[0.0, 1000.0]],
            seed: 0,
        };
        let f = build_fading(&g, &p, 3);
        assert_relative_eq!(f.beta_fl[0], 10f64.powf(-14.81), max_relative = 1e-12);
        assert_relative_eq!(f.beta_nfl[0], 10f64.powf(-14.81), max_relative = 1e-12);
    }

    #[test]
    fn si_gain_composition() {
        let p = SystemParams { pl_si_db: -81.1846, si_over_noise_db: 20.0, ..Default::default() };
        let g = drop_ues(&p, 5).unwrap();
        let f = build_fading(&g, &p, 5);
        assert_relative_eq!(f.beta_si_sigma2, 10f64.powf(-8.11846 + 2.0), max_relative = 1e-12);
    }

    #[test]
    fn fading_is_deterministic() {
        let p = SystemParams::default();
        let (g1, f1) = generate_drop(&p, 42).unwrap();
        let (g2, f2) = generate_drop(&p, 42).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(f1, f2);
        f1.validate().unwrap();
    }

    #[test]
    fn gain_decreases_with_distance() {
        let mut last = f64::INFINITY;
        for d in [35.0, 50.0, 80.0, 120.0, 176.0, 500.0] {
            let b = db_to_linear(pathloss_db(d, 0.0));
            assert!(b < last);
            last = b;
        }
    }

    #[test]
    fn igi_floor_applies() {
        let mut p = SystemParams::default();
        p.options.shadow_std_db = 0.0;
        let g = Geometry {
            bs_position: [125.0, 125.0],
            fl_positions: vec![[10.0, 10.0]],
            nfl_positions: vec![[11.0, 10.0]],
            seed: 0,
        };
        let f = build_fading(&g, &p, 0);
        assert_relative_eq!(f.beta_igi[0][0], db_to_linear(pathloss_db(10.0, 0.0)), max_relative = 1e-12);
    }

    #[test]
    fn validate_catches_bad_params() {
        let p = SystemParams { antennas: 8, ..Default::default() };
        assert!(p.validate().is_err());
        let p = SystemParams { tau_dp: 5, ..Default::default() };
        assert!(p.validate().is_err());
        let mut p = SystemParams { fl_ues: 12, nfl_ues: 10, ..Default::default() };
        assert!(p.validate().is_err());
        p.raise_pilots();
        p.validate().unwrap();
        assert_eq!(p.tau_up, 22);
        SystemParams::default().validate().unwrap();
    }

    #[test]
    fn drop_csv_has_one_row_per_link() {
        let p = SystemParams { fl_ues: 2, nfl_ues: 3, ..Default::default() };
        let (g, f) = generate_drop(&p, 9).unwrap();
        let mut buf = Vec::new();
        write_drop_csv(&g, &f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 + 3 + 6);
    }
}
