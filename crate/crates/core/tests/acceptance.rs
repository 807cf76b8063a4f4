//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always shown. A failed
//! criterion does not fail the target unless `FLMIMO_ACCEPTANCE_STRICT` is
//! set; errors always do.

use std::time::{Duration, Instant};

use flmimo::algorithms::{run_sca, RunResult, RunStatus, ScaConfig, Scheme};
use flmimo::harness::{
    drop_seed, rate_bound_suite, run_experiment, scalar_bound_suite, BoundReport, ExperimentResult, ExperimentSpec,
    MeanSe, SweepAxis,
};
use flmimo::link::{verify_fd_si_variance, Network};
use flmimo::scenario::{generate_drop, SystemParams};

const MASTER_SEED: u64 = 20_240_601;
const DROPS: usize = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn network(params: &SystemParams, seed: u64) -> Network {
    let (_, fading) = generate_drop(params, seed).expect("drop");
    Network::new(params.clone(), fading).expect("network")
}

fn criterion_1() -> Outcome {
    let mut r = BoundReport::default();
    scalar_bound_suite(10_000, 11, &mut r).expect("scalar suite");
    outcome(
        r.scalar_failures == 0,
        format!(
            "{} tuples, {} failures, worst violation {:.2e}, worst tangency {:.2e}",
            r.scalar_cases, r.scalar_failures, r.scalar_worst, r.scalar_worst_tangency
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut r = BoundReport::default();
    rate_bound_suite(1_000, 12, &mut r).expect("rate suite");
    outcome(
        r.rate_failures == 0,
        format!(
            "{} triples, {} failures, worst relative violation {:.2e}, worst tangency {:.2e}",
            r.rate_cases, r.rate_failures, r.rate_worst, r.rate_worst_tangency
        ),
    )
}

fn criterion_3() -> Outcome {
    let p = SystemParams::default();
    let beta = flmimo::scenario::db_to_linear(p.pl_si_db) * flmimo::scenario::db_to_linear(p.si_over_noise_db);
    let (emp, approx) = verify_fd_si_variance(64, 10_000, beta, 0.8, 1.0, 13);
    let rel = (emp - approx).abs() / approx;
    outcome(rel <= 0.03, format!("M=64, 10^4 samples: empirical {emp:.4e}, closed form {approx:.4e}, off by {:.3}%", rel * 100.0))
}

/// HD and FD runs on 20 default drops, shared by criteria 4, 5 and 9.
fn default_runs() -> Vec<RunResult> {
    let params = SystemParams::default();
    let mut out = Vec::new();
    for d in 0..20 {
        let seed = drop_seed(MASTER_SEED, 0, d);
        let net = network(&params, seed);
        let cfg = ScaConfig { seed, ..Default::default() };
        for s in [Scheme::Hd, Scheme::Fd] {
            out.push(run_sca(&net, s, &cfg).expect("sca"));
        }
    }
    out
}

fn criterion_4(runs: &[RunResult]) -> Outcome {
    let converged: Vec<&RunResult> = runs.iter().filter(|r| r.status == RunStatus::Converged).collect();
    let worst_drop = converged.iter().map(|r| r.worst_trace_decrease()).fold(0.0, f64::max);
    let worst_gap = converged
        .iter()
        .map(|r| (r.objective - r.z_final).abs() / r.objective)
        .fold(0.0, f64::max);
    let bad = converged
        .iter()
        .filter(|r| r.worst_trace_decrease() > 1e-6 || (r.objective - r.z_final).abs() / r.objective > 1e-5)
        .count();
    outcome(
        bad == 0 && !converged.is_empty(),
        format!(
            "{} of {} runs converged; worst trace decrease {worst_drop:.2e}, worst objective/recomputed gap {worst_gap:.2e}, {bad} violating",
            converged.len(),
            runs.len()
        ),
    )
}

fn criterion_5(runs: &[RunResult]) -> Outcome {
    let converged: Vec<&RunResult> = runs.iter().filter(|r| r.status == RunStatus::Converged).collect();
    let fast = converged.iter().filter(|r| r.iterations <= 50).count();
    let share = fast as f64 / converged.len().max(1) as f64;
    let mut its: Vec<usize> = runs.iter().map(|r| r.iterations).collect();
    its.sort_unstable();
    outcome(
        share >= 0.8,
        format!(
            "{fast} of {} converged runs within 50 iterations ({:.0}%); median iterations over all runs {}, {} capped at 100",
            converged.len(),
            share * 100.0,
            its[its.len() / 2],
            runs.iter().filter(|r| r.status == RunStatus::IterCapped).count()
        ),
    )
}

fn paired(result: &ExperimentResult, value: f64, a: Scheme, b: Scheme) -> MeanSe {
    let rate = |s: Scheme| -> Vec<(u64, f64)> {
        result
            .rows
            .iter()
            .filter(|r| r.sweep_value == value && r.scheme == s)
            .map(|r| (r.drop_seed, r.credited_rate()))
            .collect()
    };
    let (ra, rb) = (rate(a), rate(b));
    let diffs: Vec<f64> = ra
        .iter()
        .map(|(seed, x)| x - rb.iter().find(|(s, _)| s == seed).expect("paired drop").1)
        .collect();
    MeanSe::of(&diffs)
}

fn experiment(axis: SweepAxis, values: &[f64], schemes: &[Scheme], base: SystemParams) -> ExperimentResult {
    let spec = ExperimentSpec {
        sweep_axis: axis,
        sweep_values: values.to_vec(),
        n_drops: DROPS,
        schemes: schemes.to_vec(),
        base_params: base,
        master_seed: MASTER_SEED,
        ..Default::default()
    };
    run_experiment(&spec).expect("experiment")
}

fn criterion_6() -> Outcome {
    let schemes = [Scheme::Hd, Scheme::Fd, Scheme::Bl1, Scheme::Bl2];
    let by_m = experiment(SweepAxis::AntennasM, &[30.0, 50.0, 100.0], &schemes, SystemParams::default());
    let by_l = experiment(SweepAxis::FlCountL, &[2.0, 5.0, 8.0], &schemes, SystemParams::default());
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, res, values) in [("M", &by_m, [30.0, 50.0, 100.0]), ("L", &by_l, [2.0, 5.0, 8.0])] {
        for v in values {
            let mut cells = Vec::new();
            for alg in [Scheme::Hd, Scheme::Fd] {
                for bl in [Scheme::Bl1, Scheme::Bl2] {
                    let d = paired(res, v, alg, bl);
                    let holds = d.mean > d.se;
                    ok &= holds;
                    cells.push(format!("{alg}-{bl} {:+.1}±{:.1}{}", d.mean / 1e6, d.se / 1e6, if holds { "" } else { "!" }));
                }
            }
            let means: Vec<String> = schemes
                .iter()
                .map(|&s| format!("{s} {:.1}", res.aggregate(v, s).map_or(f64::NAN, |a| a.rate.mean / 1e6)))
                .collect();
            lines.push(format!("{name}={v}: [{}] diffs Mbps [{}]", means.join(", "), cells.join(", ")));
        }
    }
    outcome(ok, lines.join("\n      "))
}

fn criterion_7() -> Outcome {
    let res = experiment(SweepAxis::SiDb, &[20.0, 80.0], &[Scheme::Hd, Scheme::Fd, Scheme::Hybrid], SystemParams::default());
    let low = paired(&res, 20.0, Scheme::Fd, Scheme::Hd);
    let high = paired(&res, 80.0, Scheme::Hd, Scheme::Fd);
    let mut ok = low.mean > low.se && high.mean > high.se;
    let mut hyb = Vec::new();
    for v in [20.0, 80.0] {
        let m = |s| res.aggregate(v, s).expect("aggregate").rate;
        let (h, f, y) = (m(Scheme::Hd), m(Scheme::Fd), m(Scheme::Hybrid));
        let best = h.mean.max(f.mean);
        let close = y.mean >= best * (1.0 - 1e-6) && y.mean - best <= y.se;
        ok &= close;
        hyb.push(format!("{v} dB: HD {:.2} FD {:.2} hybrid {:.2} (se {:.2})", h.mean / 1e6, f.mean / 1e6, y.mean / 1e6, y.se / 1e6));
    }
    outcome(
        ok,
        format!(
            "FD-HD at 20 dB {:+.2}±{:.2} Mbps, HD-FD at 80 dB {:+.2}±{:.2} Mbps; {}",
            low.mean / 1e6,
            low.se / 1e6,
            high.mean / 1e6,
            high.se / 1e6,
            hyb.join("; ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let values = [8.0, 16.0, 24.0, 32.0, 40.0];
    let res = experiment(SweepAxis::PayloadMb, &values, &[Scheme::Hd, Scheme::Fd], SystemParams::default());
    let mus: Vec<MeanSe> = values
        .iter()
        .map(|&v| res.aggregate(v, Scheme::Fd).and_then(|a| a.mu).unwrap_or(MeanSe { n: 0, mean: f64::NAN, se: f64::NAN }))
        .collect();
    let ok = mus.windows(2).all(|w| w[1].mean >= w[0].mean - (w[0].se.powi(2) + w[1].se.powi(2)).sqrt());
    let text: Vec<String> = values.iter().zip(&mus).map(|(v, m)| format!("{v} Mb: {:.2}±{:.2}%", m.mean, m.se)).collect();
    outcome(ok, format!("mu by payload [{}]", text.join(", ")))
}

fn criterion_9(runs: &[RunResult]) -> Outcome {
    let params = SystemParams { t_qos: 1e-3, ..Default::default() };
    let mut impossible = Vec::new();
    for d in 0..5 {
        let seed = drop_seed(MASTER_SEED, 9, d);
        let net = network(&params, seed);
        let cfg = ScaConfig { seed, ..Default::default() };
        for s in [Scheme::Hd, Scheme::Fd] {
            impossible.push(run_sca(&net, s, &cfg).expect("sca"));
        }
    }
    let flagged = impossible
        .iter()
        .filter(|r| r.status == RunStatus::Infeasible && -r.slack_final > 1e-3)
        .count();
    let good = runs
        .iter()
        .filter(|r| r.status == RunStatus::Converged && -r.slack_final <= 1e-3)
        .count();
    let feasible = runs.iter().filter(|r| r.status.is_feasible()).count();
    let share = good as f64 / runs.len() as f64;
    outcome(
        flagged == impossible.len() && share >= 0.9,
        format!(
            "t_qos=1e-3: {flagged}/{} runs infeasible with |s|>tol; t_qos=3: {good}/{} runs converged within the deadline ({:.0}%), {feasible} end feasible",
            impossible.len(),
            runs.len(),
            share * 100.0
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut worst = 0.0f64;
    let mut ok = true;
    let mut iters = 0;
    for d in 0..5 {
        let seed = drop_seed(MASTER_SEED, 10, d);
        let (_, fading) = generate_drop(&SystemParams::default(), seed).expect("drop");
        let fading = fading.without_cross_interference();
        let fd_net = Network::new(SystemParams::default(), fading.clone()).expect("network");
        let mut hd_params = SystemParams::default();
        hd_params.options.hd_band_fraction = 1.0;
        let hd_net = Network::new(hd_params, fading).expect("network");
        let cfg = ScaConfig { seed, ..Default::default() };
        let fd = run_sca(&fd_net, Scheme::Fd, &cfg).expect("sca");
        let hd = run_sca(&hd_net, Scheme::Hd, &cfg).expect("sca");
        ok &= fd.subproblem_objectives.len() == hd.subproblem_objectives.len();
        for (a, b) in fd.subproblem_objectives.iter().zip(&hd.subproblem_objectives) {
            worst = worst.max((a - b).abs() / b.abs());
        }
        iters += fd.subproblem_objectives.len();
    }
    ok &= worst <= 1e-6;
    outcome(ok, format!("5 drops, {iters} subproblems compared, worst relative difference {worst:.2e}"))
}

fn main() {
    let strict = std::env::var_os("FLMIMO_ACCEPTANCE_STRICT").is_some();
    let mut failures = 0;
    let mut report = |n: usize, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let in_time = limit.is_none_or(|l| took <= l);
        let pass = o.pass && in_time;
        if !pass {
            failures += 1;
        }
        let budget = limit.map(|l| format!(" / limit {:.0} s", l.as_secs_f64())).unwrap_or_default();
        println!(
            "criterion {n:>2}: {}  ({:.1} s{budget})\n      {}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            o.detail
        );
    };
    let mins = |m: u64| Some(Duration::from_secs(60 * m));
    report(1, Some(Duration::from_secs(10)), &mut criterion_1);
    report(2, Some(Duration::from_secs(60)), &mut criterion_2);
    report(3, Some(Duration::from_secs(30)), &mut criterion_3);
    let mut shared = None;
    report(4, mins(10), &mut || criterion_4(shared.insert(default_runs())));
    let runs = shared.expect("criterion 4 ran");
    report(5, None, &mut || criterion_5(&runs));
    report(6, mins(120), &mut criterion_6);
    report(7, None, &mut criterion_7);
    report(8, None, &mut criterion_8);
    report(9, None, &mut || criterion_9(&runs));
    report(10, None, &mut criterion_10);
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if strict && failures > 0 {
        std::process::exit(1);
    }
}
