//! Tangent inequalities for `log(1 + x/y)` and `xy`, and the per-rate bound
//! structures built from them.
//!
//! A rate is `prelog * log(1 + Psi/Theta)` with `Psi`, `Theta` affine in the
//! power coefficients. Bound expressions are stored with `Psi` and `Theta`
//! divided by their values at the expansion point so every coefficient the
//! conic layer sees is of order one.

use crate::affine::AffineForm;
use crate::layout::Layout;
use crate::link::{Allocation, Link, Mode, Network};
use crate::scenario::ThetaForm;
use crate::{Error, Result};

/// Power coefficients below this are raised before a bound is built.
pub const POWER_FLOOR: f64 = 1e-8;

fn check_positive(args: &[f64]) -> Result<()> {
    if args.iter().all(|&v| v > 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Bound(format!("arguments must be positive and finite: {args:?}")))
    }
}

/// Concave minorant of `log(1 + x/y)` (natural log), tight at `(x_n, y_n)`.
pub fn log_lower_bound(x: f64, y: f64, x_n: f64, y_n: f64) -> Result<f64> {
    check_positive(&[x, y, x_n, y_n])?;
    let s = x_n + y_n;
    Ok((x_n / y_n).ln_1p() + 2.0 * x_n / s - x_n * x_n / (s * x) - x_n * y / (s * y_n))
}

/// Convex majorant of `log(1 + x/y)` (natural log), tight at `(x_n, y_n)`.
pub fn log_upper_bound(x: f64, y: f64, x_n: f64, y_n: f64) -> Result<f64> {
    check_positive(&[x, y, x_n, y_n])?;
    let s = x_n + y_n;
    Ok((x_n / y_n).ln_1p() + y_n / s * ((x * x + x_n * x_n) / (2.0 * x_n * y) - x_n / y_n))
}

/// Convex majorant of `xy` on the non-negative orthant, tight whenever
/// `x - y = x_n - y_n`.
pub fn bilinear_upper_bound(x: f64, y: f64, x_n: f64, y_n: f64) -> f64 {
    let d = x_n - y_n;
    0.25 * ((x + y).powi(2) - 2.0 * d * (x - y) + d * d)
}

/// Effective SINR of one link as `psi / theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrForm {
    pub psi: AffineForm,
    pub theta: AffineForm,
}

impl SinrForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.psi.eval(x) / self.theta.eval(x)
    }
}

/// Numerator and denominator of `link`'s SINR over the layout's power
/// variables, matching [`Network::sinr`].
pub fn sinr_form(net: &Network, lay: &Layout, link: Link, i: usize) -> SinrForm {
    let p = &net.params;
    let (m, l, k) = (p.antennas as f64, p.fl_ues, p.nfl_ues);
    let v = &net.vars;
    let fd = &net.fading;
    let cross = |b: f64, s2: f64| match p.options.theta_form {
        ThetaForm::Residual => b - s2,
        ThetaForm::Full => b,
    };
    let sum = |f: &dyn Fn(usize) -> usize, n: usize, c: f64| AffineForm::sum_of((0..n).map(f), c);
    let one = AffineForm::constant(1.0);
    let zf = m - (l + k) as f64;
    match link {
        Link::DownFl => {
            let (b, s2) = (fd.beta_fl[i], v.sigma2_d[i]);
            SinrForm {
                psi: AffineForm::term(lay.eta_d(i), p.rho_d * zf * s2),
                theta: one
                    + sum(&|j| lay.eta_d(j), l, p.rho_d * (b - s2))
                    + sum(&|j| lay.zeta_1(j), k, p.rho_d * cross(b, s2)),
            }
        }
        Link::Down1 => {
            let (b, s2) = (fd.beta_nfl[i], v.sigma2_1[i]);
            SinrForm {
                psi: AffineForm::term(lay.zeta_1(i), p.rho_d * zf * s2),
                theta: one
                    + sum(&|j| lay.zeta_1(j), k, p.rho_d * (b - s2))
                    + sum(&|j| lay.eta_d(j), l, p.rho_d * cross(b, s2)),
            }
        }
        Link::Down2 => {
            let (b, s2) = (fd.beta_nfl[i], v.sigma2_2[i]);
            SinrForm {
                psi: AffineForm::term(lay.zeta_2(i), p.rho_d * (m - k as f64) * s2),
                theta: one + sum(&|j| lay.zeta_2(j), k, p.rho_d * (b - s2)),
            }
        }
        Link::Up(Mode::Fdma) => {
            let s2 = net.fdma_vars.sigma2_u[i];
            SinrForm {
                psi: AffineForm::term(lay.eta_u(i), p.rho_u * m * s2),
                theta: one + AffineForm::term(lay.eta_u(i), p.rho_u * fd.beta_fl[i]),
            }
        }
        Link::Up(mode) => {
            let mut theta = one;
            for j in 0..l {
                theta.add_term(lay.eta_u(j), p.rho_u * (fd.beta_fl[j] - v.sigma2_u[j]));
            }
            if mode == Mode::Fd {
                theta = theta + sum(&|j| lay.zeta_3(j), k, net.si_coefficient());
            }
            SinrForm {
                psi: AffineForm::term(lay.eta_u(i), p.rho_u * (m - l as f64) * v.sigma2_u[i]),
                theta,
            }
        }
        Link::Down3(Mode::Fdma) => {
            let s2 = net.fdma_vars.sigma2_3[i];
            SinrForm {
                psi: AffineForm::term(lay.zeta_3(i), p.rho_d * m * s2),
                theta: one + AffineForm::term(lay.zeta_3(i), p.rho_d * fd.beta_nfl[i]),
            }
        }
        Link::Down3(mode) => {
            let (b, s2) = (fd.beta_nfl[i], v.sigma2_3[i]);
            let mut theta = one + sum(&|j| lay.zeta_3(j), k, p.rho_d * (b - s2));
            if mode == Mode::Fd {
                for j in 0..l {
                    theta.add_term(lay.eta_u(j), p.rho_u * fd.beta_igi[i][j]);
                }
            }
            SinrForm {
                psi: AffineForm::term(lay.zeta_3(i), p.rho_d * (m - k as f64) * s2),
                theta,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    ConcaveLb,
    ConvexUb,
}

/// `coef / arg`, subtracted from the bound.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseTerm {
    pub coef: f64,
    pub arg: AffineForm,
}

/// `scale * sum(num_i^2) / den`, added to the bound.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadOverLin {
    pub numerators: Vec<AffineForm>,
    pub denominator: AffineForm,
    pub scale: f64,
}

/// `prelog * (constant + linear - inverse + quad_over_lin)` in bps, with the
/// bracket in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundExpr {
    pub kind: BoundKind,
    /// Bps per nat.
    pub prelog: f64,
    pub constant: f64,
    pub linear: AffineForm,
    pub inverse: Option<InverseTerm>,
    pub quad_over_lin: Option<QuadOverLin>,
}

impl BoundExpr {
    /// Bracket value in nats; `None` where an atom leaves its domain.
    pub fn eval_nats(&self, x: &[f64]) -> Option<f64> {
        let mut v = self.constant + self.linear.eval(x);
        if let Some(inv) = &self.inverse {
            let a = inv.arg.eval(x);
            if !(a > 0.0) {
                return None;
            }
            v -= inv.coef / a;
        }
        if let Some(q) = &self.quad_over_lin {
            let d = q.denominator.eval(x);
            if !(d > 0.0) {
                return None;
            }
            v += q.scale * q.numerators.iter().map(|n| n.eval(x).powi(2)).sum::<f64>() / d;
        }
        Some(v)
    }

    /// Bound value in bps.
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        self.eval_nats(x).map(|v| v * self.prelog)
    }
}

/// Allocation with every power coefficient raised to at least [`POWER_FLOOR`].
pub fn lift_powers(a: &Allocation) -> Allocation {
    let lift = |v: &[f64]| v.iter().map(|&x| x.max(POWER_FLOOR)).collect();
    Allocation {
        eta_d: lift(&a.eta_d),
        zeta_1: lift(&a.zeta_1),
        zeta_2: lift(&a.zeta_2),
        eta_u: lift(&a.eta_u),
        zeta_3: lift(&a.zeta_3),
        f: a.f,
    }
}

fn expansion(net: &Network, lay: &Layout, link: Link, i: usize, point: &Allocation) -> Result<(SinrForm, f64, f64)> {
    let form = sinr_form(net, lay, link, i);
    let x = power_vector(lay, point);
    let (psi_n, theta_n) = (form.psi.eval(&x), form.theta.eval(&x));
    if !(psi_n > 0.0 && psi_n.is_finite()) {
        return Err(Error::Bound(format!("signal term of {link:?}[{i}] is {psi_n} at the expansion point")));
    }
    if !(theta_n > 0.0 && theta_n.is_finite()) {
        return Err(Error::Bound(format!("interference term of {link:?}[{i}] is {theta_n}")));
    }
    Ok((form, psi_n, theta_n))
}

/// Layout-sized vector holding only the power coefficients of `a`.
pub fn power_vector(lay: &Layout, a: &Allocation) -> Vec<f64> {
    let mut x = vec![0.0; lay.len()];
    for i in 0..lay.l {
        x[lay.eta_d(i)] = a.eta_d[i];
        x[lay.eta_u(i)] = a.eta_u[i];
    }
    for i in 0..lay.k {
        x[lay.zeta_1(i)] = a.zeta_1[i];
        x[lay.zeta_2(i)] = a.zeta_2[i];
        x[lay.zeta_3(i)] = a.zeta_3[i];
    }
    x
}

/// Concave lower bound of the rate of `link` for UE `i`, tight at `point`.
pub fn build_rate_lb(net: &Network, lay: &Layout, link: Link, i: usize, point: &Allocation) -> Result<BoundExpr> {
    let (form, psi_n, theta_n) = expansion(net, lay, link, i, point)?;
    let w = psi_n / (psi_n + theta_n);
    Ok(BoundExpr {
        kind: BoundKind::ConcaveLb,
        prelog: net.prelog(link) / std::f64::consts::LN_2,
        constant: (psi_n / theta_n).ln_1p() + 2.0 * w,
        linear: form.theta.scale(-w / theta_n),
        inverse: Some(InverseTerm { coef: w, arg: form.psi.scale(1.0 / psi_n) }),
        quad_over_lin: None,
    })
}

/// Convex upper bound of the rate of `link` for UE `i`, tight at `point`.
pub fn build_rate_ub(net: &Network, lay: &Layout, link: Link, i: usize, point: &Allocation) -> Result<BoundExpr> {
    let (form, psi_n, theta_n) = expansion(net, lay, link, i, point)?;
    let w = psi_n / (psi_n + theta_n);
    Ok(BoundExpr {
        kind: BoundKind::ConvexUb,
        prelog: net.prelog(link) / std::f64::consts::LN_2,
        constant: (psi_n / theta_n).ln_1p() - w,
        linear: AffineForm::zero(),
        inverse: None,
        quad_over_lin: Some(QuadOverLin {
            numerators: vec![form.psi.scale(1.0 / psi_n), AffineForm::constant(1.0)],
            denominator: form.theta.scale(1.0 / theta_n),
            scale: 0.5 * w,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_drop, SystemParams};
    use approx::assert_relative_eq;

    #[test]
    fn scalar_tangency_and_dominance() {
        let t = log_lower_bound(2.0, 3.0, 2.0, 3.0).unwrap();
        assert_relative_eq!(t, (5.0f64 / 3.0).ln(), max_relative = 1e-14);
        assert!(log_lower_bound(4.0, 3.0, 2.0, 3.0).unwrap() <= (7.0f64 / 3.0).ln());
        assert!(log_lower_bound(2.0, 6.0, 2.0, 3.0).unwrap() <= (4.0f64 / 3.0).ln());
        let u = log_upper_bound(2.0, 3.0, 2.0, 3.0).unwrap();
        assert_relative_eq!(u, (5.0f64 / 3.0).ln(), max_relative = 1e-14);
        assert!(log_upper_bound(4.0, 3.0, 2.0, 3.0).unwrap() >= (7.0f64 / 3.0).ln());
        assert!(log_upper_bound(1.0, 6.0, 2.0, 3.0).unwrap() >= (7.0f64 / 6.0).ln());
        assert!(log_lower_bound(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn bilinear_reference_values() {
        assert_eq!(bilinear_upper_bound(2.0, 2.0, 2.0, 2.0), 4.0);
        assert_eq!(bilinear_upper_bound(3.0, 1.0, 2.0, 2.0), 4.0);
        assert!(bilinear_upper_bound(0.0, 5.0, 1.0, 1.0) >= 0.0);
        assert_relative_eq!(bilinear_upper_bound(5.0, 2.0, 4.0, 1.0), 10.0, max_relative = 1e-15);
    }

    fn network(seed: u64) -> Network {
        let p = SystemParams::default();
        let (_, f) = generate_drop(&p, seed).unwrap();
        Network::new(p, f).unwrap()
    }

    fn links() -> Vec<Link> {
        let mut v = vec![Link::DownFl, Link::Down1, Link::Down2];
        for m in [Mode::Hd, Mode::Fd, Mode::Fdma] {
            v.push(Link::Up(m));
            v.push(Link::Down3(m));
        }
        v
    }

    #[test]
    fn sinr_forms_match_link_model() {
        let net = network(3);
        let lay = Layout::new(5, 5, false);
        let a = Allocation {
            eta_d: vec![0.1, 0.05, 0.08, 0.12, 0.02],
            zeta_1: vec![0.1, 0.11, 0.09, 0.03, 0.2],
            zeta_2: vec![0.2, 0.1, 0.3, 0.15, 0.05],
            eta_u: vec![0.9, 0.4, 1.0, 0.3, 0.7],
            zeta_3: vec![0.25, 0.1, 0.2, 0.3, 0.1],
            f: 1e9,
        };
        let x = power_vector(&lay, &a);
        for link in links() {
            for i in 0..5 {
                let form = sinr_form(&net, &lay, link, i);
                assert_relative_eq!(form.eval(&x), net.sinr(link, &a, i), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn rate_bounds_are_tight_at_the_expansion_point() {
        let net = network(8);
        let lay = Layout::new(5, 5, false);
        let a = Allocation::equal_power(5, 5, 2e9);
        let x = power_vector(&lay, &a);
        for link in links() {
            for i in 0..5 {
                let exact = net.rate(link, &a, i);
                let lb = build_rate_lb(&net, &lay, link, i, &a).unwrap().eval(&x).unwrap();
                let ub = build_rate_ub(&net, &lay, link, i, &a).unwrap().eval(&x).unwrap();
                assert_relative_eq!(lb, exact, max_relative = 1e-10);
                assert_relative_eq!(ub, exact, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn zero_signal_power_is_rejected() {
        let net = network(1);
        let lay = Layout::new(5, 5, false);
        let mut a = Allocation::equal_power(5, 5, 2e9);
        a.eta_d[0] = 0.0;
        assert!(build_rate_lb(&net, &lay, Link::DownFl, 0, &a).is_err());
        assert!(build_rate_lb(&net, &lay, Link::DownFl, 0, &lift_powers(&a)).is_ok());
    }

    #[test]
    fn fd_bounds_reduce_to_hd_without_self_interference() {
        let mut net = network(4);
        net.fading = net.fading.without_cross_interference();
        let lay = Layout::new(5, 5, false);
        let a = Allocation::equal_power(5, 5, 2e9);
        for (hd, fd) in [(Link::Up(Mode::Hd), Link::Up(Mode::Fd)), (Link::Down3(Mode::Hd), Link::Down3(Mode::Fd))] {
            let b_hd = build_rate_lb(&net, &lay, hd, 2, &a).unwrap();
            let b_fd = build_rate_lb(&net, &lay, fd, 2, &a).unwrap();
            assert_eq!(b_hd.linear, b_fd.linear);
            assert_eq!(b_hd.constant, b_fd.constant);
            assert_eq!(b_hd.inverse, b_fd.inverse);
            let ratio = net.params.options.hd_band_fraction;
            assert_relative_eq!(b_hd.prelog, ratio * b_fd.prelog, max_relative = 1e-14);
        }
    }

    #[test]
    fn doubling_uplink_snr_doubles_signal_coefficients() {
        let net = network(2);
        let mut p2 = net.params.clone();
        p2.rho_u *= 2.0;
        let mut net2 = net.clone();
        net2.params = p2;
        let lay = Layout::new(5, 5, false);
        let f1 = sinr_form(&net, &lay, Link::Up(Mode::Hd), 1);
        let f2 = sinr_form(&net2, &lay, Link::Up(Mode::Hd), 1);
        for (i, c) in &f1.psi.coeffs {
            assert_relative_eq!(f2.psi.coeffs[i], 2.0 * c, max_relative = 1e-14);
        }
    }
}
