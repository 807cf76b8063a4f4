use flmimo::algorithms::{RunStatus, Scheme};
use flmimo::bounds::{bilinear_upper_bound, build_rate_lb, build_rate_ub, log_lower_bound, log_upper_bound};
use flmimo::harness::{aggregate, Row};
use flmimo::layout::Layout;
use flmimo::link::{Allocation, Link, Mode, Network};
use flmimo::scenario::{generate_drop, SystemParams};
use proptest::prelude::*;

fn pos() -> impl Strategy<Value = f64> {
    (-2.0f64..1.0).prop_map(|e| 10f64.powf(e))
}

fn exact(x: f64, y: f64) -> f64 {
    (x / y).ln_1p()
}

fn small_net(seed: u64) -> Network {
    let p = SystemParams { antennas: 12, fl_ues: 2, nfl_ues: 3, ..Default::default() };
    let (_, f) = generate_drop(&p, seed).unwrap();
    Network::new(p, f).unwrap()
}

/// Powers in (0, 1] scaled to respect every group budget.
fn alloc_strategy() -> impl Strategy<Value = Allocation> {
    let v = |n: usize| prop::collection::vec(0.01f64..1.0, n);
    (v(2), v(3), v(3), v(2), v(3)).prop_map(|(ed, z1, z2, eu, z3)| {
        let s1: f64 = ed.iter().chain(&z1).sum::<f64>().max(1.0);
        let norm = |v: Vec<f64>, s: f64| v.into_iter().map(|x| x / s).collect::<Vec<_>>();
        let s2 = z2.iter().sum::<f64>().max(1.0);
        let s3 = z3.iter().sum::<f64>().max(1.0);
        Allocation { eta_d: norm(ed, s1), zeta_1: norm(z1, s1), zeta_2: norm(z2, s2), eta_u: eu, zeta_3: norm(z3, s3), f: 1e9 }
    })
}

const LINKS: [(Link, usize); 8] = [
    (Link::DownFl, 2),
    (Link::Down1, 3),
    (Link::Down2, 3),
    (Link::Up(Mode::Hd), 2),
    (Link::Up(Mode::Fd), 2),
    (Link::Down3(Mode::Hd), 3),
    (Link::Down3(Mode::Fd), 3),
    (Link::Up(Mode::Fdma), 2),
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn scalar_bounds_sandwich(x in pos(), y in pos(), xn in pos(), yn in pos()) {
        let f = exact(x, y);
        prop_assert!(log_lower_bound(x, y, xn, yn).unwrap() <= f + 1e-12);
        prop_assert!(log_upper_bound(x, y, xn, yn).unwrap() >= f - 1e-12);
        prop_assert!((log_lower_bound(xn, yn, xn, yn).unwrap() - exact(xn, yn)).abs() <= 1e-12);
        prop_assert!((log_upper_bound(xn, yn, xn, yn).unwrap() - exact(xn, yn)).abs() <= 1e-12);
    }

    #[test]
    fn bilinear_bound_dominates(x in 0.0f64..10.0, y in 0.0f64..10.0, xn in 0.0f64..10.0, yn in 0.0f64..10.0) {
        prop_assert!(bilinear_upper_bound(x, y, xn, yn) >= x * y - 1e-12);
        prop_assert!((bilinear_upper_bound(xn, yn, xn, yn) - xn * yn).abs() <= 1e-12 * (1.0 + xn * yn));
    }

    #[test]
    fn lower_bound_is_midpoint_concave(
        a in (pos(), pos()), b in (pos(), pos()), n in (pos(), pos())
    ) {
        let lb = |p: (f64, f64)| log_lower_bound(p.0, p.1, n.0, n.1).unwrap();
        let ub = |p: (f64, f64)| log_upper_bound(p.0, p.1, n.0, n.1).unwrap();
        let m = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
        let tol = 1e-9 * (1.0 + lb(a).abs() + lb(b).abs());
        prop_assert!(lb(m) >= (lb(a) + lb(b)) / 2.0 - tol);
        let tol = 1e-9 * (1.0 + ub(a).abs() + ub(b).abs());
        prop_assert!(ub(m) <= (ub(a) + ub(b)) / 2.0 + tol);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rate_bounds_sandwich_every_link(seed in 0u64..20, at in alloc_strategy(), point in alloc_strategy()) {
        let n = small_net(seed);
        let lay = Layout::new(2, 3, false);
        let x = flmimo::bounds::power_vector(&lay, &at);
        let xn = flmimo::bounds::power_vector(&lay, &point);
        for (link, count) in LINKS {
            for i in 0..count {
                let r = n.rate(link, &at, i);
                let lb = build_rate_lb(&n, &lay, link, i, &point).unwrap();
                let ub = build_rate_ub(&n, &lay, link, i, &point).unwrap();
                let tol = 1e-9 * (1.0 + r);
                prop_assert!(lb.eval(&x).unwrap() <= r + tol, "{link:?}[{i}] lb above rate");
                prop_assert!(ub.eval(&x).unwrap() >= r - tol, "{link:?}[{i}] ub below rate");
                let rn = n.rate(link, &point, i);
                prop_assert!((lb.eval(&xn).unwrap() - rn).abs() <= 1e-9 * (1.0 + rn));
                prop_assert!((ub.eval(&xn).unwrap() - rn).abs() <= 1e-9 * (1.0 + rn));
            }
        }
    }

    #[test]
    fn sinr_grows_with_own_power_and_falls_with_interference(
        seed in 0u64..20, a in alloc_strategy(), bump in 1.01f64..2.0
    ) {
        let n = small_net(seed);
        let mut b = a.clone();
        b.eta_d[0] *= bump;
        prop_assert!(n.sinr(Link::DownFl, &b, 0) > n.sinr(Link::DownFl, &a, 0));
        prop_assert!(n.sinr(Link::Down1, &b, 0) < n.sinr(Link::Down1, &a, 0));
        let mut c = a.clone();
        c.zeta_3[1] *= bump;
        prop_assert!(n.sinr(Link::Down3(Mode::Fd), &c, 1) > n.sinr(Link::Down3(Mode::Fd), &a, 1));
        prop_assert!(n.sinr(Link::Up(Mode::Fd), &c, 0) < n.sinr(Link::Up(Mode::Fd), &a, 0));
        prop_assert_eq!(n.sinr(Link::Up(Mode::Hd), &c, 0), n.sinr(Link::Up(Mode::Hd), &a, 0));
        let mut d = a.clone();
        d.eta_u[0] *= bump;
        prop_assert!(n.sinr(Link::Down3(Mode::Fd), &d, 0) < n.sinr(Link::Down3(Mode::Fd), &a, 0));
        prop_assert_eq!(n.sinr(Link::Down3(Mode::Hd), &d, 0), n.sinr(Link::Down3(Mode::Hd), &a, 0));
    }

    #[test]
    fn aggregates_match_a_direct_recount(
        cells in prop::collection::vec((0usize..2, 0usize..2, 0.0f64..1e8, 0usize..4, prop::option::of(-50.0f64..50.0)), 1..40)
    ) {
        let values = [10.0, 20.0];
        let schemes = [Scheme::Hd, Scheme::Fd];
        let statuses = [RunStatus::Converged, RunStatus::Infeasible, RunStatus::IterCapped, RunStatus::NumericalFailure];
        let rows: Vec<Row> = cells
            .iter()
            .enumerate()
            .map(|(i, &(v, s, rate, st, mu))| Row {
                sweep_axis: "antennas_M".into(),
                sweep_value: values[v],
                drop_seed: i as u64,
                scheme: schemes[s],
                min_eff_rate_bps: rate,
                iterations: 1,
                status: statuses[st],
                total_time_s: 1.0,
                mu_percent: mu,
            })
            .collect();
        let aggs = aggregate(&rows, &values, &schemes);
        prop_assert_eq!(aggs.len(), 4);
        for a in aggs {
            let sel: Vec<&Row> = rows.iter().filter(|r| r.sweep_value == a.sweep_value && r.scheme == a.scheme).collect();
            prop_assert_eq!(a.rate.n, sel.len());
            prop_assert_eq!(a.feasible, sel.iter().filter(|r| r.status.is_feasible()).count());
            if !sel.is_empty() {
                let mean = sel.iter().map(|r| if r.status.is_feasible() { r.min_eff_rate_bps } else { 0.0 }).sum::<f64>() / sel.len() as f64;
                prop_assert!((a.rate.mean - mean).abs() <= 1e-9 * (1.0 + mean));
            }
            prop_assert_eq!(a.mu.is_some(), a.scheme == Scheme::Fd && sel.iter().any(|r| r.mu_percent.is_some()));
        }
    }
}
