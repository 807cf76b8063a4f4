//! Optimisation drivers: the SCA loop for the half-duplex, full-duplex and
//! FDMA formulations, the equal-power baseline and hybrid selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::POWER_FLOOR;
use crate::conic::SolveStatus;
use crate::layout::{Layout, RATE_UNIT};
use crate::link::{Allocation, EpochSummary, Mode, Network};
use crate::scenario::Bl2Uplink;
use crate::subproblem::{build_subproblem, solve, ScaIterate};
use crate::{Error, Result};

/// Share of each power cap used by the random starting point.
pub const INIT_MARGIN: f64 = 0.9;
/// Relative tolerance under which HD and FD objectives count as tied.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Seconds.
    pub slack_tol: f64,
    /// Deadline penalty in bps per second; `None` uses ten times the
    /// bandwidth in Hz.
    pub alpha: Option<f64>,
    /// Penalty doublings allowed when the slack stalls above `slack_tol`.
    pub max_alpha_doublings: usize,
    pub seed: u64,
}

impl Default for ScaConfig {
    fn default() -> Self {
        Self { max_iters: 100, rel_tol: 1e-4, slack_tol: 1e-3, alpha: None, max_alpha_doublings: 3, seed: 0 }
    }
}

impl ScaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParams("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) || !(self.slack_tol > 0.0) {
            return Err(Error::InvalidParams("tolerances must be positive".into()));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidParams(format!("alpha must be positive (got {a})")));
            }
        }
        Ok(())
    }

    fn alpha_bps_per_s(&self, net: &Network) -> f64 {
        self.alpha.unwrap_or(10.0 * net.params.bandwidth_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scheme {
    Hd,
    Fd,
    Bl1,
    Bl2,
    Hybrid,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Hd, Scheme::Fd, Scheme::Bl1, Scheme::Bl2, Scheme::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Hd => "HD",
            Scheme::Fd => "FD",
            Scheme::Bl1 => "BL1",
            Scheme::Bl2 => "BL2",
            Scheme::Hybrid => "HYBRID",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    Infeasible,
    IterCapped,
    NumericalFailure,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::Infeasible => "infeasible",
            RunStatus::IterCapped => "iter_capped",
            RunStatus::NumericalFailure => "numerical_failure",
        }
    }

    /// Whether the final allocation meets the deadline.
    pub fn is_feasible(self) -> bool {
        matches!(self, RunStatus::Converged | RunStatus::IterCapped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub scheme: Scheme,
    /// Step-3 mode of the returned allocation.
    pub mode: Mode,
    pub status: RunStatus,
    /// Subproblems solved.
    pub iterations: usize,
    /// Penalised objective of each seeded iterate in bps, starting with the
    /// initial point. Equal to the epigraph value `z` once the deadline holds.
    pub objective_trace: Vec<f64>,
    /// Optimal value of each solved subproblem in bps.
    pub subproblem_objectives: Vec<f64>,
    /// Minimum effective rate recomputed from `final_alloc`, in bps.
    pub objective: f64,
    /// Epigraph value `z` at `final_alloc`, in bps.
    pub z_final: f64,
    pub final_alloc: Allocation,
    pub epoch: Option<EpochSummary>,
    /// Deadline violation in seconds, non-positive.
    pub slack_final: f64,
    pub relaxed_start: bool,
}

impl RunResult {
    pub fn total_time(&self) -> f64 {
        self.epoch.as_ref().map_or(f64::NAN, EpochSummary::total_time)
    }

    /// Largest relative drop between consecutive trace entries.
    pub fn worst_trace_decrease(&self) -> f64 {
        self.objective_trace
            .windows(2)
            .map(|w| (w[0] - w[1]) / w[0].abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

fn mode_of(scheme: Scheme) -> Result<Mode> {
    match scheme {
        Scheme::Hd => Ok(Mode::Hd),
        Scheme::Fd => Ok(Mode::Fd),
        Scheme::Bl1 => Ok(Mode::Fdma),
        _ => Err(Error::InvalidParams(format!("{scheme} is not an SCA scheme"))),
    }
}

/// Random feasible-power starting point with binding auxiliaries; the flag
/// is set when the deadline fails there and the slack is needed.
pub fn init_feasible(net: &Network, mode: Mode, config: &ScaConfig) -> Result<(ScaIterate, bool)> {
    let (l, k) = (net.l(), net.k());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| 1.0 - rng.gen::<f64>() * 0.9).collect() };
    let scale_to = |v: Vec<f64>, total: f64| -> Vec<f64> {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x * total / s).collect()
    };
    let step1 = scale_to(draw(l + k), INIT_MARGIN);
    let alloc = Allocation {
        eta_d: step1[..l].to_vec(),
        zeta_1: step1[l..].to_vec(),
        zeta_2: scale_to(draw(k), INIT_MARGIN),
        eta_u: draw(l).into_iter().map(|x| x * INIT_MARGIN).collect(),
        zeta_3: scale_to(draw(k), INIT_MARGIN),
        f: net.params.f_max,
    };
    let it = ScaIterate::binding(net, &alloc, mode)?;
    let relaxed = it.t_q > net.params.t_qos;
    Ok((it, relaxed))
}

/// Projects a solver allocation back onto the boxes and budgets and raises
/// every power to the expansion floor.
fn clean(a: &Allocation, net: &Network) -> Allocation {
    let p = &net.params;
    let clip = |v: &[f64], cap: f64| -> Vec<f64> { v.iter().map(|x| x.clamp(POWER_FLOOR, cap)).collect() };
    let fit = |mut v: Vec<f64>| -> Vec<f64> {
        let s: f64 = v.iter().sum();
        if s > 1.0 {
            v.iter_mut().for_each(|x| *x /= s);
        }
        v
    };
    let l = a.eta_d.len();
    let step1 = fit([clip(&a.eta_d, 1.0), clip(&a.zeta_1, 1.0)].concat());
    Allocation {
        eta_d: step1[..l].to_vec(),
        zeta_1: step1[l..].to_vec(),
        zeta_2: fit(clip(&a.zeta_2, 1.0)),
        eta_u: clip(&a.eta_u, 1.0),
        zeta_3: fit(clip(&a.zeta_3, 1.0)),
        f: a.f.clamp(p.f_min.max(f64::MIN_POSITIVE), p.f_max),
    }
}

fn penalised(it: &ScaIterate, relaxed: bool, alpha: f64) -> f64 {
    if relaxed {
        it.z + alpha * it.s
    } else {
        it.z
    }
}

/// Successive convex approximation for the HD, FD or FDMA (BL1) problem.
pub fn run_sca(net: &Network, scheme: Scheme, config: &ScaConfig) -> Result<RunResult> {
    config.validate()?;
    let mode = mode_of(scheme)?;
    let (mut it, relaxed_start) = init_feasible(net, mode, config)?;
    let mut relaxed = relaxed_start;
    let mut alpha = config.alpha_bps_per_s(net);
    let mut doublings = 0;
    let mut trace = vec![penalised(&it, relaxed, alpha)];
    let mut iterations = 0;
    let mut sub = Vec::new();
    let mut status = RunStatus::IterCapped;

    while iterations < config.max_iters {
        let lay = Layout::new(net.l(), net.k(), relaxed);
        let prog = build_subproblem(net, &lay, mode, &it, alpha / RATE_UNIT)?;
        let sol = solve(&prog, &lay)?;
        iterations += 1;
        sub.push(sol.objective_value * RATE_UNIT);
        let next = match (sol.status, sol.point) {
            (SolveStatus::Optimal, Some(x)) => x,
            _ => {
                status = RunStatus::NumericalFailure;
                break;
            }
        };
        let candidate = match ScaIterate::binding(net, &clean(&next.alloc, net), mode) {
            Ok(c) => c,
            Err(_) => {
                status = RunStatus::NumericalFailure;
                break;
            }
        };
        let prev = *trace.last().unwrap_or(&0.0);
        it = candidate;
        let obj = penalised(&it, relaxed, alpha);
        trace.push(obj);
        if relaxed && it.s == 0.0 {
            // The deadline holds at the seeded point, so the unrelaxed
            // problem takes over with the same objective value.
            relaxed = false;
            continue;
        }
        if (obj - prev).abs() <= config.rel_tol * prev.abs().max(f64::MIN_POSITIVE) {
            if relaxed && -it.s > config.slack_tol {
                if doublings < config.max_alpha_doublings {
                    doublings += 1;
                    alpha *= 2.0;
                    *trace.last_mut().unwrap() = penalised(&it, relaxed, alpha);
                    continue;
                }
                status = RunStatus::Infeasible;
                break;
            }
            status = RunStatus::Converged;
            break;
        }
    }
    if status == RunStatus::IterCapped && -it.s > config.slack_tol {
        status = RunStatus::Infeasible;
    }
    let epoch = net.effective_rates(&it.alloc, mode).ok();
    Ok(RunResult {
        scheme,
        mode,
        status,
        iterations,
        objective_trace: trace,
        subproblem_objectives: sub,
        objective: epoch.as_ref().map_or(0.0, |e| e.min_eff_rate),
        z_final: it.z,
        final_alloc: it.alloc,
        epoch,
        slack_final: it.s,
        relaxed_start,
    })
}

/// Equal-power baseline with the CPU frequency chosen to use up the
/// deadline left after both transmissions.
pub fn eval_bl2(net: &Network) -> Result<RunResult> {
    let p = &net.params;
    let mode = match p.options.bl2_uplink {
        Bl2Uplink::Hd => Mode::Hd,
        Bl2Uplink::Fd => Mode::Fd,
    };
    let mut alloc = Allocation::equal_power(net.l(), net.k(), p.f_max);
    let rates = net.rates(&alloc, mode);
    let (t_d, _, t_u) = crate::link::times(&rates, alloc.f, p)?;
    let remaining = p.t_qos - t_d - t_u;
    let mut status = RunStatus::Converged;
    if remaining > 0.0 {
        alloc.f = (p.compute_cycles() / remaining).clamp(p.f_min.max(f64::MIN_POSITIVE), p.f_max);
    } else {
        status = RunStatus::Infeasible;
    }
    let epoch = net.effective_rates(&alloc, mode)?;
    let slack = (p.t_qos - epoch.total_time()).min(0.0);
    if slack < -1e-9 * p.t_qos {
        status = RunStatus::Infeasible;
    }
    let it = ScaIterate::binding(net, &alloc, mode)?;
    Ok(RunResult {
        scheme: Scheme::Bl2,
        mode,
        status,
        iterations: 0,
        objective_trace: vec![epoch.min_eff_rate],
        subproblem_objectives: vec![],
        objective: epoch.min_eff_rate,
        z_final: it.z,
        final_alloc: alloc,
        epoch: Some(epoch),
        slack_final: slack,
        relaxed_start: false,
    })
}

/// Runs HD and FD and keeps the better feasible one; ties go to FD.
pub fn run_hybrid(net: &Network, config: &ScaConfig) -> Result<RunResult> {
    let hd = run_sca(net, Scheme::Hd, config)?;
    let fd = run_sca(net, Scheme::Fd, config)?;
    Ok(select_hybrid(hd, fd))
}

pub fn select_hybrid(hd: RunResult, fd: RunResult) -> RunResult {
    let pick_fd = match (hd.status.is_feasible(), fd.status.is_feasible()) {
        (true, true) => fd.objective >= hd.objective * (1.0 - TIE_TOL),
        (true, false) => false,
        _ => true,
    };
    let mut out = if pick_fd { fd } else { hd };
    out.scheme = Scheme::Hybrid;
    out
}

/// Percentage gain of FD over HD.
pub fn gain_mu(r_fd: f64, r_hd: f64) -> Result<f64> {
    if r_hd == 0.0 || !r_hd.is_finite() || !r_fd.is_finite() {
        return Err(Error::UndefinedGain);
    }
    Ok((r_fd - r_hd) / r_hd * 100.0)
}

/// Dispatches any scheme on one drop.
pub fn run_scheme(net: &Network, scheme: Scheme, config: &ScaConfig) -> Result<RunResult> {
    match scheme {
        Scheme::Bl2 => eval_bl2(net),
        Scheme::Hybrid => run_hybrid(net, config),
        s => run_sca(net, s, config),
    }
}
