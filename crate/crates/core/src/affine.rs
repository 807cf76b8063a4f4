//! Sparse affine functions of the program's variable vector.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineForm {
    pub constant: f64,
    /// Coefficients keyed by variable index; zero entries are not stored.
    pub coeffs: BTreeMap<usize, f64>,
}

impl AffineForm {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { constant: c, coeffs: BTreeMap::new() }
    }

    pub fn var(i: usize) -> Self {
        Self::term(i, 1.0)
    }

    pub fn term(i: usize, c: f64) -> Self {
        let mut f = Self::zero();
        f.add_term(i, c);
        f
    }

    pub fn add_term(&mut self, i: usize, c: f64) {
        if c == 0.0 {
            return;
        }
        let e = self.coeffs.entry(i).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.coeffs.remove(&i);
        }
    }

    /// Sum of `c * x_i` over the given indices.
    pub fn sum_of(indices: impl IntoIterator<Item = usize>, c: f64) -> Self {
        let mut f = Self::zero();
        for i in indices {
            f.add_term(i, c);
        }
        f
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|(&i, &c)| c * x[i]).sum::<f64>()
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero();
        }
        Self {
            constant: self.constant * s,
            coeffs: self.coeffs.iter().map(|(&i, &c)| (i, c * s)).collect(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.coeffs.keys().next_back().copied()
    }
}

impl Add for AffineForm {
    type Output = AffineForm;
    fn add(mut self, rhs: AffineForm) -> AffineForm {
        self.constant += rhs.constant;
        for (i, c) in rhs.coeffs {
            self.add_term(i, c);
        }
        self
    }
}

impl Add<f64> for AffineForm {
    type Output = AffineForm;
    fn add(mut self, rhs: f64) -> AffineForm {
        self.constant += rhs;
        self
    }
}

impl Sub for AffineForm {
    type Output = AffineForm;
    fn sub(self, rhs: AffineForm) -> AffineForm {
        self + rhs.scale(-1.0)
    }
}

impl Sub<f64> for AffineForm {
    type Output = AffineForm;
    fn sub(self, rhs: f64) -> AffineForm {
        self + (-rhs)
    }
}

impl Mul<f64> for AffineForm {
    type Output = AffineForm;
    fn mul(self, rhs: f64) -> AffineForm {
        self.scale(rhs)
    }
}

impl Neg for AffineForm {
    type Output = AffineForm;
    fn neg(self) -> AffineForm {
        self.scale(-1.0)
    }
}

impl fmt::Display for AffineForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.constant)?;
        for (i, c) in &self.coeffs {
            write!(f, " {c:+e}*x{i}")?;
        }
        Ok(())
    }
}
