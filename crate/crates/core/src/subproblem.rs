//! One successive-convex-approximation step: the convex restriction of the
//! epigraph problem around an expansion point, in conic form.

use crate::affine::AffineForm;
use crate::bounds::{build_rate_lb, build_rate_ub, lift_powers, BoundExpr, BoundKind};
use crate::conic::{Cone, ConicProgram, LinearConstraint, Rel, SolveStatus};
use crate::layout::{Layout, BITS_UNIT, CYCLE_UNIT, FREQ_UNIT, RATE_UNIT};
use crate::link::{Link, Mode, Network};
use crate::{Error, Result};

pub use crate::layout::ScaIterate;

/// Smallest value either factor of a bilinear term may take when choosing its
/// balancing scale.
const BILINEAR_FLOOR: f64 = 1e-12;

/// `aux * r >= s` with `aux, r >= 0`, i.e. `s / r <= aux`.
pub fn canon_inverse(s: f64, r: AffineForm, aux: AffineForm, label: impl Into<String>) -> Cone {
    Cone::Rotated { u: aux, v: r, w: vec![AffineForm::constant((2.0 * s.max(0.0)).sqrt())], label: label.into() }
}

/// Convex restriction of `x * y <= rhs` from the tangent bound at
/// `(x_n, y_n)`: `(x+y)^2 - 2 d (x-y) + d^2 <= 4 rhs` with `d = x_n - y_n`.
pub fn canon_bilinear_ub(
    x: AffineForm,
    y: AffineForm,
    rhs: AffineForm,
    x_n: f64,
    y_n: f64,
    label: impl Into<String>,
) -> Cone {
    let d = x_n - y_n;
    let u = rhs + (x.clone() - y.clone()) * (0.5 * d) - 0.25 * d * d;
    Cone::Rotated { u, v: AffineForm::constant(2.0), w: vec![x + y], label: label.into() }
}

/// Bilinear restriction after rescaling `x` and `y` so they are equal at the
/// expansion point, which makes the tangent bound depend only on `x + y`.
pub fn canon_bilinear_balanced(
    x: AffineForm,
    y: AffineForm,
    rhs: AffineForm,
    x_n: f64,
    y_n: f64,
    label: impl Into<String>,
) -> Cone {
    let (xn, yn) = (x_n.max(BILINEAR_FLOOR), y_n.max(BILINEAR_FLOOR));
    let c = (yn / xn).sqrt();
    let g = (xn * yn).sqrt();
    canon_bilinear_ub(x * c, y * (1.0 / c), rhs, g, g, label)
}

/// Constraint tying `var` (in Mbps) to a rate bound: `var <= bound` for a
/// concave lower bound, `bound <= var` for a convex upper bound.
pub fn canon_bound_expr(
    b: &BoundExpr,
    var: AffineForm,
    label: impl Into<String>,
) -> Result<(Vec<LinearConstraint>, Vec<Cone>)> {
    let label = label.into();
    let per_nat = b.prelog / RATE_UNIT;
    if !(per_nat > 0.0) {
        return Err(Error::Bound(format!("{label}: non-positive prelog")));
    }
    let v = var * (1.0 / per_nat);
    let affine = b.linear.clone() + b.constant;
    match b.kind {
        BoundKind::ConcaveLb => {
            if b.quad_over_lin.is_some() {
                return Err(Error::Bound(format!("{label}: concave bound with a convex atom")));
            }
            let slack = affine - v;
            match &b.inverse {
                Some(inv) => Ok((
                    vec![],
                    vec![Cone::Rotated {
                        u: slack,
                        v: inv.arg.clone(),
                        w: vec![AffineForm::constant((2.0 * inv.coef).sqrt())],
                        label,
                    }],
                )),
                None => Ok((vec![LinearConstraint { expr: slack, rel: Rel::Ge, label }], vec![])),
            }
        }
        BoundKind::ConvexUb => {
            if b.inverse.is_some() {
                return Err(Error::Bound(format!("{label}: convex bound with a concave atom")));
            }
            let slack = v - affine;
            match &b.quad_over_lin {
                Some(q) => Ok((
                    vec![],
                    vec![Cone::Rotated {
                        u: slack,
                        v: q.denominator.scale(0.5 / q.scale),
                        w: q.numerators.clone(),
                        label,
                    }],
                )),
                None => Ok((vec![LinearConstraint { expr: slack, rel: Rel::Ge, label }], vec![])),
            }
        }
    }
}

/// Assembles the convex subproblem around `point` for the given Step-3 mode.
///
/// With `relaxed`, the deadline `t_Q <= t_qos` becomes `t_Q + s <= t_qos`
/// with `s <= 0` and the objective gains `alpha * s` (alpha in Mbps per
/// second).
pub fn build_subproblem(
    net: &Network,
    lay: &Layout,
    mode: Mode,
    point: &ScaIterate,
    alpha: f64,
) -> Result<ConicProgram> {
    let p = &net.params;
    if lay.l != p.fl_ues || lay.k != p.nfl_ues {
        return Err(Error::Program("layout does not match the network dimensions".into()));
    }
    let var = AffineForm::var;
    let one = || AffineForm::constant(1.0);
    let mut prog = ConicProgram::new(lay.names());
    let (l, k) = (lay.l, lay.k);

    // Power budgets and boxes.
    let step1 = AffineForm::sum_of((0..l).map(|i| lay.eta_d(i)).chain((0..k).map(|i| lay.zeta_1(i))), 1.0);
    prog.add_le(step1, one(), "power step1");
    prog.add_le(AffineForm::sum_of((0..k).map(|i| lay.zeta_2(i)), 1.0), one(), "power step2");
    prog.add_le(AffineForm::sum_of((0..k).map(|i| lay.zeta_3(i)), 1.0), one(), "power step3");
    for i in 0..l {
        prog.add_le(var(lay.eta_d(i)), one(), format!("eta_d[{i}] cap"));
        prog.add_le(var(lay.eta_u(i)), one(), format!("eta_u[{i}] cap"));
    }
    let nonneg: Vec<usize> = (0..l)
        .flat_map(|i| [lay.eta_d(i), lay.eta_u(i)])
        .chain((0..k).flat_map(|i| [lay.zeta_1(i), lay.zeta_2(i), lay.zeta_3(i), lay.r1(i), lay.r2(i), lay.r3(i)]))
        .chain([lay.r_d(), lay.r_u(), lay.rt_d(), lay.rt_u(), lay.a1(), lay.a2(), lay.a3(), lay.t(), lay.z()])
        .collect();
    for i in nonneg {
        prog.add_linear(var(i), Rel::Ge, format!("{} >= 0", lay.names()[i]));
    }
    prog.add_linear(var(lay.f()) - p.f_min / FREQ_UNIT, Rel::Ge, "f >= f_min");
    prog.add_le(var(lay.f()), AffineForm::constant(p.f_max / FREQ_UNIT), "f <= f_max");

    // Delay budget.
    let (s_d, s_u) = (p.s_d_bits / BITS_UNIT, p.s_u_bits / BITS_UNIT);
    let cycles = p.compute_cycles() / CYCLE_UNIT;
    prog.add_cone(canon_inverse(s_d, var(lay.r_d()), var(lay.w_d()), "S_d / r_d"));
    prog.add_cone(canon_inverse(cycles, var(lay.f()), var(lay.w_c()), "C / f"));
    prog.add_cone(canon_inverse(s_u, var(lay.r_u()), var(lay.w_u()), "S_u / r_u"));
    prog.add_le(var(lay.w_d()) + var(lay.w_c()) + var(lay.w_u()), var(lay.t_q()), "delay sum");
    let deadline = AffineForm::constant(p.t_qos);
    prog.objective = var(lay.z());
    match lay.s() {
        Some(s) => {
            prog.add_le(var(lay.t_q()) + var(s), deadline, "deadline relaxed");
            prog.add_linear(var(s), Rel::Le, "s <= 0");
            prog.objective = prog.objective.clone() + AffineForm::term(s, alpha);
        }
        None => prog.add_le(var(lay.t_q()), deadline, "deadline"),
    }

    // Data accumulated by the weakest non-FL UE.
    let data = AffineForm::term(lay.a1(), s_d) + AffineForm::term(lay.a2(), cycles) + AffineForm::term(lay.a3(), s_u);
    prog.add_le(var(lay.t()), data, "data");

    // Rate bounds.
    let expansion = lift_powers(&point.alloc);
    let mut bound = |b: Result<BoundExpr>, v: usize, label: String| -> Result<()> {
        let (lin, cones) = canon_bound_expr(&b?, var(v), label)?;
        prog.linear.extend(lin);
        prog.cones.extend(cones);
        Ok(())
    };
    let up = Link::Up(mode);
    for i in 0..l {
        bound(build_rate_lb(net, lay, Link::DownFl, i, &expansion), lay.r_d(), format!("r_d <= R~d[{i}]"))?;
        bound(build_rate_ub(net, lay, Link::DownFl, i, &expansion), lay.rt_d(), format!("R^d[{i}] <= rt_d"))?;
        bound(build_rate_lb(net, lay, up, i, &expansion), lay.r_u(), format!("r_u <= R~u[{i}]"))?;
        bound(build_rate_ub(net, lay, up, i, &expansion), lay.rt_u(), format!("R^u[{i}] <= rt_u"))?;
    }
    for i in 0..k {
        bound(build_rate_lb(net, lay, Link::Down1, i, &expansion), lay.r1(i), format!("r1[{i}] <= R~1"))?;
        bound(build_rate_lb(net, lay, Link::Down2, i, &expansion), lay.r2(i), format!("r2[{i}] <= R~2"))?;
        bound(build_rate_lb(net, lay, Link::Down3(mode), i, &expansion), lay.r3(i), format!("r3[{i}] <= R~3"))?;
    }

    // Ratio and objective couplings.
    let xn = point.pack(lay, net);
    let pair = |a: usize, b: usize| (xn[a], xn[b]);
    let (a1n, rtdn) = pair(lay.a1(), lay.rt_d());
    let (a2n, fn_) = pair(lay.a2(), lay.f());
    let (a3n, rtun) = pair(lay.a3(), lay.rt_u());
    for i in 0..k {
        let c1 = canon_bilinear_balanced(var(lay.a1()), var(lay.rt_d()), var(lay.r1(i)), a1n, rtdn, format!("a1 rt_d <= r1[{i}]"));
        let c2 = canon_bilinear_balanced(var(lay.a2()), var(lay.f()), var(lay.r2(i)), a2n, fn_, format!("a2 f <= r2[{i}]"));
        let c3 = canon_bilinear_balanced(var(lay.a3()), var(lay.rt_u()), var(lay.r3(i)), a3n, rtun, format!("a3 rt_u <= r3[{i}]"));
        prog.cones.extend([c1, c2, c3]);
    }
    let (zn, tqn) = pair(lay.z(), lay.t_q());
    prog.add_cone(canon_bilinear_balanced(var(lay.z()), var(lay.t_q()), var(lay.t()), zn, tqn, "z t_Q <= t"));

    prog.validate()?;
    Ok(prog)
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub point: Option<ScaIterate>,
    /// Objective in program units (Mbps).
    pub objective_value: f64,
    pub kkt_residual: f64,
    pub max_violation: f64,
}

pub fn solve(prog: &ConicProgram, lay: &Layout) -> Result<Solution> {
    let sol = prog.solve()?;
    let point = match sol.status {
        SolveStatus::Optimal => Some(ScaIterate::unpack(&sol.x, lay)?),
        _ => None,
    };
    Ok(Solution {
        status: sol.status,
        point,
        objective_value: sol.objective_value,
        kkt_residual: sol.kkt_residual,
        max_violation: prog.max_violation(&sol.x),
    })
}
