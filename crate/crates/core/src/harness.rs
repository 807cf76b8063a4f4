//! Monte-Carlo experiments over drops and parameter sweeps, aggregation,
//! CSV output, the flat configuration file and figure presets.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::algorithms::{gain_mu, run_sca, eval_bl2, select_hybrid, RunResult, RunStatus, ScaConfig, Scheme};
use crate::bounds::{bilinear_upper_bound, build_rate_lb, build_rate_ub, log_lower_bound, log_upper_bound, power_vector};
use crate::layout::Layout;
use crate::link::{Allocation, Link, Mode, Network};
use crate::scenario::{generate_drop, normalize_snr, Bl2Uplink, SiScaling, SystemParams, ThetaForm};
use crate::{Error, Result};

/// Environment variable holding the worker-pool size.
pub const THREADS_ENV: &str = "FLMIMO_THREADS";

pub const CSV_HEADER: [&str; 9] = [
    "sweep_axis",
    "sweep_value",
    "drop_seed",
    "scheme",
    "min_eff_rate_mbps",
    "iterations",
    "status",
    "total_time_s",
    "mu_percent",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    AntennasM,
    FlCountL,
    SiDb,
    PayloadMb,
    None,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::AntennasM => "antennas_M",
            SweepAxis::FlCountL => "fl_count_L",
            SweepAxis::SiDb => "si_dB",
            SweepAxis::PayloadMb => "payload_Mb",
            SweepAxis::None => "none",
        }
    }

    /// Parameters at one sweep point, validated.
    pub fn apply(self, base: &SystemParams, value: f64) -> Result<SystemParams> {
        let mut p = base.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{}: {v} is not a positive integer", self.name())))
            }
        };
        match self {
            SweepAxis::AntennasM => p.antennas = count(value)?,
            SweepAxis::FlCountL => {
                p.fl_ues = count(value)?;
                p.raise_pilots();
            }
            SweepAxis::SiDb => p.si_over_noise_db = value,
            SweepAxis::PayloadMb => {
                p.s_d_bits = value * 1e6;
                p.s_u_bits = value * 1e6;
            }
            SweepAxis::None => {}
        }
        p.validate().map_err(|e| Error::Config(format!("{} = {value}: {e}", self.name())))?;
        Ok(p)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::AntennasM, SweepAxis::FlCountL, SweepAxis::SiDb, SweepAxis::PayloadMb, SweepAxis::None]
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown sweep axis `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub n_drops: usize,
    pub schemes: Vec<Scheme>,
    pub base_params: SystemParams,
    pub sca: ScaConfig,
    pub master_seed: u64,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            sweep_axis: SweepAxis::None,
            sweep_values: vec![0.0],
            n_drops: 50,
            schemes: vec![Scheme::Hd, Scheme::Fd],
            base_params: SystemParams::default(),
            sca: ScaConfig::default(),
            master_seed: 1,
            output_path: None,
        }
    }
}

impl ExperimentSpec {
    /// Parameters for every sweep point; fails on the first invalid one.
    pub fn points(&self) -> Result<Vec<SystemParams>> {
        if self.sweep_values.is_empty() {
            return Err(Error::Config("sweep_values is empty".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes selected".into()));
        }
        self.sca.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.sweep_values.iter().map(|&v| self.sweep_axis.apply(&self.base_params, v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub sweep_axis: String,
    pub sweep_value: f64,
    pub drop_seed: u64,
    pub scheme: Scheme,
    pub min_eff_rate_bps: f64,
    pub iterations: usize,
    pub status: RunStatus,
    pub total_time_s: f64,
    pub mu_percent: Option<f64>,
}

impl Row {
    /// Rate credited to the scheme in averages: zero unless the deadline
    /// holds.
    pub fn credited_rate(&self) -> f64 {
        if self.status.is_feasible() {
            self.min_eff_rate_bps
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub n: usize,
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { n, mean: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { n, mean, se }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub sweep_value: f64,
    pub scheme: Scheme,
    /// Credited minimum effective rate in bps.
    pub rate: MeanSe,
    pub feasible: usize,
    /// Mean FD gain over HD on this point, present on FD aggregates.
    pub mu: Option<MeanSe>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub sweep_value: f64,
    pub drop_seed: u64,
    pub scheme: Scheme,
    pub objective_bps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    pub traces: Vec<Trace>,
}

impl ExperimentResult {
    pub fn all_infeasible(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| !r.status.is_feasible())
    }

    pub fn aggregate(&self, value: f64, scheme: Scheme) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.sweep_value == value && a.scheme == scheme)
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of drop `drop_index` at sweep point `value_index`.
pub fn drop_seed(master_seed: u64, value_index: usize, drop_index: usize) -> u64 {
    splitmix(splitmix(splitmix(master_seed) ^ value_index as u64) ^ drop_index as u64)
}

/// Rayon pool sized from [`THREADS_ENV`], or rayon's default.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer (got `{v}`)")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}

fn failed(scheme: Scheme, mode: Mode, net: &Network) -> RunResult {
    RunResult {
        scheme,
        mode,
        status: RunStatus::NumericalFailure,
        iterations: 0,
        objective_trace: vec![],
        subproblem_objectives: vec![],
        objective: 0.0,
        z_final: 0.0,
        final_alloc: Allocation::equal_power(net.l(), net.k(), net.params.f_max),
        epoch: None,
        slack_final: 0.0,
        relaxed_start: false,
    }
}

/// Every requested scheme on one drop, in request order. Hybrid reuses the
/// HD and FD runs.
fn run_drop(net: &Network, schemes: &[Scheme], sca: &ScaConfig) -> Vec<RunResult> {
    let mut cache: BTreeMap<Scheme, RunResult> = BTreeMap::new();
    let get = |s: Scheme, cache: &mut BTreeMap<Scheme, RunResult>| -> RunResult {
        cache
            .entry(s)
            .or_insert_with(|| {
                let mode = match s {
                    Scheme::Fd => Mode::Fd,
                    Scheme::Bl1 => Mode::Fdma,
                    _ => Mode::Hd,
                };
                let r = match s {
                    Scheme::Bl2 => eval_bl2(net),
                    _ => run_sca(net, s, sca),
                };
                r.unwrap_or_else(|_| failed(s, mode, net))
            })
            .clone()
    };
    schemes
        .iter()
        .map(|&s| match s {
            Scheme::Hybrid => {
                let hd = get(Scheme::Hd, &mut cache);
                let fd = get(Scheme::Fd, &mut cache);
                select_hybrid(hd, fd)
            }
            _ => get(s, &mut cache),
        })
        .collect()
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let points = spec.points()?;
    let tasks: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|v| (0..spec.n_drops).map(move |d| (v, d))).collect();
    let pool = worker_pool()?;
    let per_task: Vec<Result<(usize, u64, Vec<RunResult>)>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(v, d)| {
                let seed = drop_seed(spec.master_seed, v, d);
                let (_, fading) = generate_drop(&points[v], seed)?;
                let net = Network::new(points[v].clone(), fading)?;
                let sca = ScaConfig { seed, ..spec.sca.clone() };
                Ok((v, seed, run_drop(&net, &spec.schemes, &sca)))
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for task in per_task {
        let (v, seed, runs) = task?;
        let value = spec.sweep_values[v];
        let rate_of = |s: Scheme| runs.iter().find(|r| r.scheme == s);
        let mu = match (rate_of(Scheme::Hd), rate_of(Scheme::Fd)) {
            (Some(h), Some(f)) if h.status.is_feasible() && f.status.is_feasible() => gain_mu(f.objective, h.objective).ok(),
            _ => None,
        };
        for r in runs {
            rows.push(Row {
                sweep_axis: spec.sweep_axis.name().to_string(),
                sweep_value: value,
                drop_seed: seed,
                scheme: r.scheme,
                min_eff_rate_bps: r.objective,
                iterations: r.iterations,
                status: r.status,
                total_time_s: r.total_time(),
                mu_percent: if r.scheme == Scheme::Fd { mu } else { None },
            });
            traces.push(Trace { sweep_value: value, drop_seed: seed, scheme: r.scheme, objective_bps: r.objective_trace });
        }
    }
    let aggregates = aggregate(&rows, &spec.sweep_values, &spec.schemes);
    Ok(ExperimentResult { rows, aggregates, traces })
}

/// Mean and standard error per (sweep value, scheme), in the given orders.
pub fn aggregate(rows: &[Row], values: &[f64], schemes: &[Scheme]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &v in values {
        for &s in schemes {
            let sel: Vec<&Row> = rows.iter().filter(|r| r.sweep_value == v && r.scheme == s).collect();
            let rates: Vec<f64> = sel.iter().map(|r| r.credited_rate()).collect();
            let mus: Vec<f64> = sel.iter().filter_map(|r| r.mu_percent).collect();
            out.push(Aggregate {
                sweep_value: v,
                scheme: s,
                rate: MeanSe::of(&rates),
                feasible: sel.iter().filter(|r| r.status.is_feasible()).count(),
                mu: (s == Scheme::Fd && !mus.is_empty()).then(|| MeanSe::of(&mus)),
            });
        }
    }
    out
}

/// Six significant digits, plain notation.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    if x == 0.0 {
        return "0".into();
    }
    let decimals = (5 - x.abs().log10().floor() as i32).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_csv_to<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.sweep_axis.clone(),
            sig6(r.sweep_value),
            r.drop_seed.to_string(),
            r.scheme.name().to_string(),
            sig6(r.min_eff_rate_bps / 1e6),
            r.iterations.to_string(),
            r.status.name().to_string(),
            sig6(r.total_time_s),
            r.mu_percent.map(sig6).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    write_csv_to(&result.rows, std::fs::File::create(path)?)
}

/// Parses a CSV written by [`write_csv_to`]; rates come back in bps.
pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<Row>> {
    let mut rd = csv::Reader::from_reader(input);
    let bad = |m: String| Error::Config(format!("malformed results CSV: {m}"));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != CSV_HEADER.len() {
            return Err(bad(format!("expected {} fields, got {}", CSV_HEADER.len(), rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            if rec[i].is_empty() {
                return Ok(f64::NAN);
            }
            rec[i].parse().map_err(|_| bad(format!("`{}` is not a number", &rec[i])))
        };
        let status = match &rec[6] {
            "converged" => RunStatus::Converged,
            "infeasible" => RunStatus::Infeasible,
            "iter_capped" => RunStatus::IterCapped,
            "numerical_failure" => RunStatus::NumericalFailure,
            s => return Err(bad(format!("unknown status `{s}`"))),
        };
        rows.push(Row {
            sweep_axis: rec[0].to_string(),
            sweep_value: num(1)?,
            drop_seed: rec[2].parse().map_err(|_| bad(format!("bad seed `{}`", &rec[2])))?,
            scheme: rec[3].parse()?,
            min_eff_rate_bps: num(4)? * 1e6,
            iterations: rec[5].parse().map_err(|_| bad(format!("bad iteration count `{}`", &rec[5])))?,
            status,
            total_time_s: num(7)?,
            mu_percent: Some(num(8)?).filter(|v| !v.is_nan()),
        });
    }
    Ok(rows)
}

/// One line per iteration: `sweep_value,drop_seed,scheme,iteration,objective_mbps`.
pub fn write_traces_to<W: Write>(traces: &[Trace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sweep_value", "drop_seed", "scheme", "iteration", "objective_mbps"])?;
    for t in traces {
        for (i, v) in t.objective_bps.iter().enumerate() {
            w.write_record([sig6(t.sweep_value), t.drop_seed.to_string(), t.scheme.name().into(), i.to_string(), sig6(v / 1e6)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Flat configuration file. Every key is optional; unknown keys are errors.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub sweep_axis: Option<String>,
    pub sweep_values: Option<Vec<f64>>,
    pub n_drops: Option<usize>,
    pub schemes: Option<Vec<String>>,
    pub master_seed: Option<u64>,
    pub output: Option<PathBuf>,

    pub antennas: Option<usize>,
    pub fl_ues: Option<usize>,
    pub nfl_ues: Option<usize>,
    pub bandwidth_hz: Option<f64>,
    pub tau_c: Option<usize>,
    pub pilot_len: Option<usize>,
    pub pd_w: Option<f64>,
    pub pu_w: Option<f64>,
    pub n0_dbm: Option<f64>,
    pub nc_rounds: Option<f64>,
    pub d_max: Option<f64>,
    pub c_max: Option<f64>,
    pub f_min: Option<f64>,
    pub f_max: Option<f64>,
    pub payload_mb: Option<f64>,
    pub t_qos: Option<f64>,
    pub area_side_m: Option<f64>,
    pub si_db: Option<f64>,
    pub pl_si_db: Option<f64>,

    pub si_scaling: Option<SiScaling>,
    pub theta_form: Option<ThetaForm>,
    pub hd_band_fraction: Option<f64>,
    pub shadow_std_db: Option<f64>,
    pub bl2_uplink: Option<Bl2Uplink>,

    pub max_iters: Option<usize>,
    pub rel_tol: Option<f64>,
    pub slack_tol: Option<f64>,
    pub alpha: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Overlays the file on `spec`.
    pub fn apply(&self, spec: &mut ExperimentSpec) -> Result<()> {
        if let Some(a) = &self.sweep_axis {
            spec.sweep_axis = a.parse()?;
        }
        if let Some(v) = &self.sweep_values {
            spec.sweep_values = v.clone();
        }
        if let Some(n) = self.n_drops {
            spec.n_drops = n;
        }
        if let Some(s) = &self.schemes {
            spec.schemes = s.iter().map(|x| x.parse()).collect::<Result<_>>()?;
        }
        if let Some(s) = self.master_seed {
            spec.master_seed = s;
        }
        if let Some(o) = &self.output {
            spec.output_path = Some(o.clone());
        }
        let p = &mut spec.base_params;
        macro_rules! set {
            ($($src:ident => $dst:expr),* $(,)?) => {
                $(if let Some(v) = self.$src { $dst = v; })*
            };
        }
        set!(
            antennas => p.antennas,
            fl_ues => p.fl_ues,
            nfl_ues => p.nfl_ues,
            bandwidth_hz => p.bandwidth_hz,
            tau_c => p.tau_c,
            n0_dbm => p.n0_dbm,
            nc_rounds => p.nc_rounds,
            d_max => p.d_max,
            c_max => p.c_max,
            f_min => p.f_min,
            f_max => p.f_max,
            t_qos => p.t_qos,
            area_side_m => p.area_side_m,
            si_db => p.si_over_noise_db,
            pl_si_db => p.pl_si_db,
            si_scaling => p.options.si_scaling,
            theta_form => p.options.theta_form,
            hd_band_fraction => p.options.hd_band_fraction,
            shadow_std_db => p.options.shadow_std_db,
            bl2_uplink => p.options.bl2_uplink,
            max_iters => spec.sca.max_iters,
            rel_tol => spec.sca.rel_tol,
            slack_tol => spec.sca.slack_tol,
        );
        if let Some(t) = self.pilot_len {
            p.tau_dp = t;
            p.tau_1p = t;
            p.tau_2p = t;
            p.tau_3p = t;
            p.tau_up = t;
        }
        p.raise_pilots();
        if let Some(w) = self.pd_w {
            p.rho_d = normalize_snr(w, p.n0_dbm);
        }
        if let Some(w) = self.pu_w {
            p.rho_u = normalize_snr(w, p.n0_dbm);
            p.rho_p = p.rho_u;
        }
        if self.n0_dbm.is_some() && (self.pd_w.is_none() || self.pu_w.is_none()) {
            return Err(Error::Config("n0_dbm requires pd_w and pu_w so the SNRs can be renormalised".into()));
        }
        if let Some(mb) = self.payload_mb {
            p.s_d_bits = mb * 1e6;
            p.s_u_bits = mb * 1e6;
        }
        if self.alpha.is_some() {
            spec.sca.alpha = self.alpha;
        }
        Ok(())
    }
}

/// Named figure presets at desk scale.
pub fn figure_preset(name: &str) -> Result<ExperimentSpec> {
    let base = ExperimentSpec::default();
    let spec = match name {
        "fig2" => ExperimentSpec {
            n_drops: 1,
            schemes: vec![Scheme::Bl1, Scheme::Bl2, Scheme::Hd, Scheme::Fd],
            ..base
        },
        "fig3" => ExperimentSpec {
            sweep_axis: SweepAxis::AntennasM,
            sweep_values: vec![20.0, 30.0, 50.0, 75.0, 100.0],
            schemes: vec![Scheme::Bl1, Scheme::Bl2, Scheme::Hd, Scheme::Fd],
            ..base
        },
        "fig4" => ExperimentSpec {
            sweep_axis: SweepAxis::FlCountL,
            sweep_values: vec![2.0, 3.0, 5.0, 8.0],
            schemes: vec![Scheme::Bl1, Scheme::Bl2, Scheme::Hd, Scheme::Fd],
            ..base
        },
        "fig5" => ExperimentSpec {
            sweep_axis: SweepAxis::SiDb,
            sweep_values: vec![20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0],
            schemes: vec![Scheme::Hd, Scheme::Fd, Scheme::Hybrid],
            ..base
        },
        "fig6" => ExperimentSpec {
            sweep_axis: SweepAxis::PayloadMb,
            sweep_values: vec![8.0, 16.0, 24.0, 32.0, 40.0],
            schemes: vec![Scheme::Hd, Scheme::Fd],
            ..base
        },
        other => return Err(Error::Config(format!("unknown figure `{other}` (expected fig2..fig6)"))),
    };
    Ok(spec)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundReport {
    pub scalar_cases: usize,
    pub scalar_failures: usize,
    /// Largest `LB - exact`, `exact - UB` and `xy - bilinear` seen.
    pub scalar_worst: f64,
    pub scalar_worst_tangency: f64,
    pub rate_cases: usize,
    pub rate_failures: usize,
    /// Largest relative ordering violation among rate bounds.
    pub rate_worst: f64,
    pub rate_worst_tangency: f64,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.scalar_failures == 0 && self.rate_failures == 0
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Scalar inequalities over random positive tuples in `[0.01, 10]`:
/// violations beyond `1e-12` absolute or tangency beyond `1e-10` relative
/// count as failures.
pub fn scalar_bound_suite(cases: usize, seed: u64, report: &mut BoundReport) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let mut draw = || log_uniform(&mut rng, 0.01, 10.0);
        let (x, y, xn, yn) = (draw(), draw(), draw(), draw());
        let exact = (x / y).ln_1p();
        let lb = log_lower_bound(x, y, xn, yn)?;
        let ub = log_upper_bound(x, y, xn, yn)?;
        let bl = bilinear_upper_bound(x, y, xn, yn);
        let worst = (lb - exact).max(exact - ub).max(x * y - bl);
        let at = (xn / yn).ln_1p();
        let tangency = ((log_lower_bound(xn, yn, xn, yn)? - at).abs().max((log_upper_bound(xn, yn, xn, yn)? - at).abs())
            / at)
            .max((bilinear_upper_bound(xn, yn, xn, yn) - xn * yn).abs() / (xn * yn));
        report.scalar_cases += 1;
        report.scalar_worst = report.scalar_worst.max(worst);
        report.scalar_worst_tangency = report.scalar_worst_tangency.max(tangency);
        if worst > 1e-12 || tangency > 1e-10 {
            report.scalar_failures += 1;
        }
    }
    Ok(())
}

fn random_alloc(rng: &mut ChaCha8Rng, l: usize, k: usize, f: f64) -> Allocation {
    let mut draw = |n: usize, total: f64| -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| 1e-3 + rng.gen::<f64>()).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x * total / s).collect()
    };
    let step1 = draw(l + k, 1.0);
    let eta_u = draw(l, l as f64).into_iter().map(|x| x.min(1.0)).collect();
    Allocation {
        eta_d: step1[..l].to_vec(),
        zeta_1: step1[l..].to_vec(),
        zeta_2: draw(k, 1.0),
        eta_u,
        zeta_3: draw(k, 1.0),
        f,
    }
}

/// Rate bounds on random drops: for each triple of drop, expansion point and
/// perturbed allocation, every link of every mode must satisfy
/// `LB <= R <= UB` within `1e-9` relative, with tangency within `1e-10`.
pub fn rate_bound_suite(triples: usize, seed: u64, report: &mut BoundReport) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..triples {
        let mut params = SystemParams { antennas: rng.gen_range(12..=100), ..Default::default() };
        params.fl_ues = rng.gen_range(1..=5);
        params.nfl_ues = rng.gen_range(1..=5);
        params.si_over_noise_db = rng.gen_range(0.0..90.0);
        let (_, fading) = generate_drop(&params, seed ^ (n as u64).wrapping_mul(0x2545_f491_4f6c_dd1d))?;
        let net = Network::new(params.clone(), fading)?;
        let (l, k) = (net.l(), net.k());
        let lay = Layout::new(l, k, false);
        let point = random_alloc(&mut rng, l, k, params.f_max);
        let other = random_alloc(&mut rng, l, k, params.f_max);
        let t: f64 = rng.gen();
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect() };
        let x = Allocation {
            eta_d: mix(&point.eta_d, &other.eta_d),
            zeta_1: mix(&point.zeta_1, &other.zeta_1),
            zeta_2: mix(&point.zeta_2, &other.zeta_2),
            eta_u: mix(&point.eta_u, &other.eta_u),
            zeta_3: mix(&point.zeta_3, &other.zeta_3),
            f: params.f_max,
        };
        let (xv, pv) = (power_vector(&lay, &x), power_vector(&lay, &point));
        let mut links: Vec<(Link, usize)> = Vec::new();
        for i in 0..l {
            links.push((Link::DownFl, i));
            for m in [Mode::Hd, Mode::Fd, Mode::Fdma] {
                links.push((Link::Up(m), i));
            }
        }
        for i in 0..k {
            links.extend([(Link::Down1, i), (Link::Down2, i)]);
            for m in [Mode::Hd, Mode::Fd, Mode::Fdma] {
                links.push((Link::Down3(m), i));
            }
        }
        let mut worst = 0.0f64;
        let mut tangency = 0.0f64;
        for (link, i) in links {
            let lb = build_rate_lb(&net, &lay, link, i, &point)?;
            let ub = build_rate_ub(&net, &lay, link, i, &point)?;
            let exact = net.rate(link, &x, i);
            let at = net.rate(link, &point, i);
            let rel = |v: f64, r: f64| v / r.abs().max(f64::MIN_POSITIVE);
            if let Some(v) = lb.eval(&xv) {
                worst = worst.max(rel(v - exact, exact));
            }
            if let Some(v) = ub.eval(&xv) {
                worst = worst.max(rel(exact - v, exact));
            }
            for b in [&lb, &ub] {
                let v = b.eval(&pv).ok_or_else(|| Error::Bound(format!("{link:?} bound undefined at its own point")))?;
                tangency = tangency.max(rel((v - at).abs(), at));
            }
        }
        report.rate_cases += 1;
        report.rate_worst = report.rate_worst.max(worst);
        report.rate_worst_tangency = report.rate_worst_tangency.max(tangency);
        if worst > 1e-9 || tangency > 1e-10 {
            report.rate_failures += 1;
        }
    }
    Ok(())
}

pub fn bound_suite(scalar_cases: usize, rate_triples: usize, seed: u64) -> Result<BoundReport> {
    let mut report = BoundReport::default();
    scalar_bound_suite(scalar_cases, seed, &mut report)?;
    rate_bound_suite(rate_triples, seed.wrapping_add(1), &mut report)?;
    Ok(report)
}
