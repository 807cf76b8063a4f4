//! Canonical conic programs (linear, second-order and rotated second-order
//! cones over affine forms) and their interior-point backend.

use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::affine::AffineForm;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    /// `expr <= 0`
    Le,
    /// `expr == 0`
    Eq,
    /// `expr >= 0`
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub expr: AffineForm,
    pub rel: Rel,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cone {
    /// `||x|| <= t`
    Soc { t: AffineForm, x: Vec<AffineForm>, label: String },
    /// `2 u v >= ||w||^2` with `u, v >= 0`
    Rotated { u: AffineForm, v: AffineForm, w: Vec<AffineForm>, label: String },
}

impl Cone {
    pub fn label(&self) -> &str {
        match self {
            Cone::Soc { label, .. } | Cone::Rotated { label, .. } => label,
        }
    }

    /// Amount by which `x` violates the cone (0 inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let norm2 = |w: &[AffineForm]| w.iter().map(|a| a.eval(x).powi(2)).sum::<f64>();
        match self {
            Cone::Soc { t, x: v, .. } => (norm2(v).sqrt() - t.eval(x)).max(0.0),
            Cone::Rotated { u, v, w, .. } => {
                let (u, v) = (u.eval(x), v.eval(x));
                let t = (u + v) / std::f64::consts::SQRT_2;
                let d = (u - v) / std::f64::consts::SQRT_2;
                ((norm2(w) + d * d).sqrt() - t).max(0.0)
            }
        }
    }
}

/// A maximization problem over `names.len()` real variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    pub names: Vec<String>,
    pub objective: AffineForm,
    pub linear: Vec<LinearConstraint>,
    pub cones: Vec<Cone>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Largest of the solver's primal and dual residuals.
    pub kkt_residual: f64,
    pub iterations: u32,
}

impl ConicProgram {
    pub fn new(names: Vec<String>) -> Self {
        Self { names, ..Default::default() }
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn add_linear(&mut self, expr: AffineForm, rel: Rel, label: impl Into<String>) {
        self.linear.push(LinearConstraint { expr, rel, label: label.into() });
    }

    /// `lhs <= rhs`
    pub fn add_le(&mut self, lhs: AffineForm, rhs: AffineForm, label: impl Into<String>) {
        self.add_linear(lhs - rhs, Rel::Le, label);
    }

    pub fn add_cone(&mut self, cone: Cone) {
        self.cones.push(cone);
    }

    /// Every affine form referenced by the program.
    fn forms(&self) -> impl Iterator<Item = &AffineForm> {
        let lin = self.linear.iter().map(|c| &c.expr);
        let cones = self.cones.iter().flat_map(|c| -> Box<dyn Iterator<Item = &AffineForm>> {
            match c {
                Cone::Soc { t, x, .. } => Box::new(std::iter::once(t).chain(x)),
                Cone::Rotated { u, v, w, .. } => Box::new([u, v].into_iter().chain(w)),
            }
        });
        std::iter::once(&self.objective).chain(lin).chain(cones)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        match self.forms().filter_map(|f| f.max_index()).max() {
            Some(i) if i >= n => Err(Error::Program(format!("variable {i} referenced but only {n} declared"))),
            _ => Ok(()),
        }
    }

    /// Largest constraint violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let lin = self.linear.iter().map(|c| {
            let v = c.expr.eval(x);
            match c.rel {
                Rel::Le => v.max(0.0),
                Rel::Ge => (-v).max(0.0),
                Rel::Eq => v.abs(),
            }
        });
        let cones = self.cones.iter().map(|c| c.violation(x));
        lin.chain(cones).fold(0.0, f64::max)
    }

    /// Plain-text dump: one line per variable, the objective, then one line
    /// per constraint.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, n) in self.names.iter().enumerate() {
            let _ = writeln!(s, "var {i} {n}");
        }
        let _ = writeln!(s, "maximize {}", self.objective);
        for c in &self.linear {
            let rel = match c.rel {
                Rel::Le => "<=",
                Rel::Eq => "==",
                Rel::Ge => ">=",
            };
            let _ = writeln!(s, "lin {} : {} {rel} 0", c.label, c.expr);
        }
        for c in &self.cones {
            match c {
                Cone::Soc { t, x, label } => {
                    let xs: Vec<String> = x.iter().map(|a| a.to_string()).collect();
                    let _ = writeln!(s, "soc {label} : t = {t} ; x = [{}]", xs.join(" | "));
                }
                Cone::Rotated { u, v, w, label } => {
                    let ws: Vec<String> = w.iter().map(|a| a.to_string()).collect();
                    let _ = writeln!(s, "rsoc {label} : u = {u} ; v = {v} ; w = [{}]", ws.join(" | "));
                }
            }
        }
        s
    }

    pub fn solve(&self) -> Result<ConicSolution> {
        self.validate()?;
        let n = self.n_vars();
        let mut rows: Vec<&AffineForm> = Vec::new();
        let mut cones = Vec::new();

        // Rows encode `s = expr`, i.e. A = -coeffs and b = constant.
        let eq: Vec<_> = self.linear.iter().filter(|c| c.rel == Rel::Eq).collect();
        let mut negated = Vec::new();
        for c in self.linear.iter().filter(|c| c.rel != Rel::Eq) {
            negated.push(if c.rel == Rel::Le { -c.expr.clone() } else { c.expr.clone() });
        }
        if !eq.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(eq.len()));
            eq.iter().for_each(|c| rows.push(&c.expr));
        }
        if !negated.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(negated.len()));
            negated.iter().for_each(|e| rows.push(e));
        }
        let mut rotated = Vec::new();
        for c in &self.cones {
            if let Cone::Rotated { u, v, w, .. } = c {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                let mut forms = vec![(u.clone() + v.clone()) * r, (u.clone() - v.clone()) * r];
                forms.extend(w.iter().cloned());
                rotated.push(forms);
            }
        }
        let mut rot_iter = rotated.iter();
        let mut soc_rows: Vec<Vec<&AffineForm>> = Vec::new();
        for c in &self.cones {
            match c {
                Cone::Soc { t, x, .. } => soc_rows.push(std::iter::once(t).chain(x).collect()),
                Cone::Rotated { .. } => soc_rows.push(rot_iter.next().expect("rotated form").iter().collect()),
            }
        }
        for block in &soc_rows {
            cones.push(SupportedConeT::SecondOrderConeT(block.len()));
            rows.extend(block.iter().copied());
        }

        let m = rows.len();
        let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::with_capacity(m);
        for (r, form) in rows.iter().enumerate() {
            for (&j, &c) in &form.coeffs {
                ii.push(r);
                jj.push(j);
                vv.push(-c);
            }
            b.push(form.constant);
        }
        let a = CscMatrix::new_from_triplets(m, n, ii, jj, vv);
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        for (&j, &c) in &self.objective.coeffs {
            q[j] = -c;
        }
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(300)
            .build()
            .map_err(|e| Error::Program(format!("solver settings: {e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| Error::Program(format!("solver setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            _ => SolveStatus::NumericalFailure,
        };
        Ok(ConicSolution {
            status,
            objective_value: self.objective.eval(&sol.x),
            x: sol.x.clone(),
            kkt_residual: sol.r_prim.max(sol.r_dual),
            iterations: sol.iterations,
        })
    }
}
