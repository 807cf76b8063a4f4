//! Variable layout of the per-iteration conic program and the iterate it
//! encodes.
//!
//! Inside the program rates are in Mbps, data in Mbit, frequencies in GHz,
//! cycles in Gcycles and times in seconds. [`ScaIterate`] holds SI values and
//! converts at the boundary.

use serde::Serialize;

use crate::link::{Allocation, Link, Mode, Network};
use crate::{Error, Result};

pub const RATE_UNIT: f64 = 1e6;
pub const BITS_UNIT: f64 = 1e6;
pub const FREQ_UNIT: f64 = 1e9;
pub const CYCLE_UNIT: f64 = 1e9;
/// Unit of `a_2`: one Mbit per Gcycle, expressed in bits per cycle.
pub const A2_UNIT: f64 = BITS_UNIT / CYCLE_UNIT;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub l: usize,
    pub k: usize,
    pub relaxed: bool,
}

impl Layout {
    pub fn new(l: usize, k: usize, relaxed: bool) -> Self {
        Self { l, k, relaxed }
    }

    pub fn eta_d(&self, i: usize) -> usize {
        i
    }
    pub fn zeta_1(&self, i: usize) -> usize {
        self.l + i
    }
    pub fn zeta_2(&self, i: usize) -> usize {
        self.l + self.k + i
    }
    pub fn eta_u(&self, i: usize) -> usize {
        self.l + 2 * self.k + i
    }
    pub fn zeta_3(&self, i: usize) -> usize {
        2 * self.l + 2 * self.k + i
    }
    fn base(&self) -> usize {
        2 * self.l + 3 * self.k
    }
    pub fn f(&self) -> usize {
        self.base()
    }
    pub fn r_d(&self) -> usize {
        self.base() + 1
    }
    pub fn r_u(&self) -> usize {
        self.base() + 2
    }
    pub fn rt_d(&self) -> usize {
        self.base() + 3
    }
    pub fn rt_u(&self) -> usize {
        self.base() + 4
    }
    pub fn a1(&self) -> usize {
        self.base() + 5
    }
    pub fn a2(&self) -> usize {
        self.base() + 6
    }
    pub fn a3(&self) -> usize {
        self.base() + 7
    }
    pub fn r1(&self, i: usize) -> usize {
        self.base() + 8 + i
    }
    pub fn r2(&self, i: usize) -> usize {
        self.base() + 8 + self.k + i
    }
    pub fn r3(&self, i: usize) -> usize {
        self.base() + 8 + 2 * self.k + i
    }
    pub fn t(&self) -> usize {
        self.base() + 8 + 3 * self.k
    }
    pub fn t_q(&self) -> usize {
        self.t() + 1
    }
    pub fn z(&self) -> usize {
        self.t() + 2
    }
    /// Epigraph variables of `S_d/r_d`, `C/f` and `S_u/r_u`.
    pub fn w_d(&self) -> usize {
        self.t() + 3
    }
    pub fn w_c(&self) -> usize {
        self.t() + 4
    }
    pub fn w_u(&self) -> usize {
        self.t() + 5
    }
    pub fn s(&self) -> Option<usize> {
        self.relaxed.then(|| self.t() + 6)
    }

    /// Decision variables, frequency and the ten scalar auxiliaries plus the
    /// per-UE rate auxiliaries.
    pub fn core_len(&self) -> usize {
        self.z() + 1
    }

    pub fn len(&self) -> usize {
        self.t() + 6 + usize::from(self.relaxed)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the power coefficient that is the signal term of `link`.
    pub fn own_power(&self, link: Link, i: usize) -> usize {
        match link {
            Link::DownFl => self.eta_d(i),
            Link::Down1 => self.zeta_1(i),
            Link::Down2 => self.zeta_2(i),
            Link::Up(_) => self.eta_u(i),
            Link::Down3(_) => self.zeta_3(i),
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut n = Vec::with_capacity(self.len());
        let group = |n: &mut Vec<String>, name: &str, count: usize| {
            (0..count).for_each(|i| n.push(format!("{name}[{i}]")));
        };
        group(&mut n, "eta_d", self.l);
        group(&mut n, "zeta_1", self.k);
        group(&mut n, "zeta_2", self.k);
        group(&mut n, "eta_u", self.l);
        group(&mut n, "zeta_3", self.k);
        for s in ["f", "r_d", "r_u", "rt_d", "rt_u", "a1", "a2", "a3"] {
            n.push(s.into());
        }
        group(&mut n, "r1", self.k);
        group(&mut n, "r2", self.k);
        group(&mut n, "r3", self.k);
        for s in ["t", "t_q", "z", "w_d", "w_c", "w_u"] {
            n.push(s.into());
        }
        if self.relaxed {
            n.push("s".into());
        }
        n
    }
}

/// Allocation plus every epigraph auxiliary, in SI units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaIterate {
    pub alloc: Allocation,
    pub r_d: f64,
    pub r_u: f64,
    pub rt_d: f64,
    pub rt_u: f64,
    pub a1: f64,
    /// Bits per cycle.
    pub a2: f64,
    pub a3: f64,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    /// Bits.
    pub t: f64,
    pub t_q: f64,
    pub z: f64,
    /// Deadline violation, non-positive.
    pub s: f64,
}

impl ScaIterate {
    /// Auxiliaries set to the binding values of the exact rates at `alloc`.
    ///
    /// `z` is then the reformulated objective at `alloc`, a lower bound on the
    /// minimum effective rate that is tight when the FL rates are equal and
    /// every step has a common weakest non-FL UE.
    pub fn binding(net: &Network, alloc: &Allocation, mode: Mode) -> Result<Self> {
        let p = &net.params;
        let rates = net.rates(alloc, mode);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let (r_d, r_u) = (rates.r_d(), rates.r_u());
        let (t_d, t_c, t_u) = crate::link::times(&rates, alloc.f, p)?;
        let (rt_d, rt_u) = (max(&rates.r_d_fl), max(&rates.r_u_fl));
        let a1 = min(&rates.r1_nfl) / rt_d;
        let a2 = min(&rates.r2_nfl) / alloc.f;
        let a3 = min(&rates.r3_nfl) / rt_u;
        let t_q = t_d + t_c + t_u;
        let t = a1 * p.s_d_bits + a2 * p.compute_cycles() + a3 * p.s_u_bits;
        Ok(Self {
            alloc: alloc.clone(),
            r_d,
            r_u,
            rt_d,
            rt_u,
            a1,
            a2,
            a3,
            r1: rates.r1_nfl,
            r2: rates.r2_nfl,
            r3: rates.r3_nfl,
            t,
            t_q,
            z: t / t_q,
            s: (p.t_qos - t_q).min(0.0),
        })
    }

    /// Program vector in scaled units.
    pub fn pack(&self, layout: &Layout, net: &Network) -> Vec<f64> {
        let p = &net.params;
        let mut x = vec![0.0; layout.len()];
        let a = &self.alloc;
        for i in 0..layout.l {
            x[layout.eta_d(i)] = a.eta_d[i];
            x[layout.eta_u(i)] = a.eta_u[i];
        }
        for i in 0..layout.k {
            x[layout.zeta_1(i)] = a.zeta_1[i];
            x[layout.zeta_2(i)] = a.zeta_2[i];
            x[layout.zeta_3(i)] = a.zeta_3[i];
            x[layout.r1(i)] = self.r1[i] / RATE_UNIT;
            x[layout.r2(i)] = self.r2[i] / RATE_UNIT;
            x[layout.r3(i)] = self.r3[i] / RATE_UNIT;
        }
        x[layout.f()] = a.f / FREQ_UNIT;
        x[layout.r_d()] = self.r_d / RATE_UNIT;
        x[layout.r_u()] = self.r_u / RATE_UNIT;
        x[layout.rt_d()] = self.rt_d / RATE_UNIT;
        x[layout.rt_u()] = self.rt_u / RATE_UNIT;
        x[layout.a1()] = self.a1;
        x[layout.a2()] = self.a2 / A2_UNIT;
        x[layout.a3()] = self.a3;
        x[layout.t()] = self.t / BITS_UNIT;
        x[layout.t_q()] = self.t_q;
        x[layout.z()] = self.z / RATE_UNIT;
        x[layout.w_d()] = p.s_d_bits / self.r_d;
        x[layout.w_c()] = p.compute_cycles() / a.f;
        x[layout.w_u()] = p.s_u_bits / self.r_u;
        if let Some(s) = layout.s() {
            x[s] = self.s;
        }
        x
    }

    pub fn unpack(x: &[f64], layout: &Layout) -> Result<Self> {
        if x.len() != layout.len() {
            return Err(Error::Program(format!("solution has {} entries, layout {}", x.len(), layout.len())));
        }
        let take = |f: &dyn Fn(usize) -> usize, n: usize, unit: f64| -> Vec<f64> {
            (0..n).map(|i| x[f(i)] * unit).collect()
        };
        let alloc = Allocation {
            eta_d: take(&|i| layout.eta_d(i), layout.l, 1.0),
            zeta_1: take(&|i| layout.zeta_1(i), layout.k, 1.0),
            zeta_2: take(&|i| layout.zeta_2(i), layout.k, 1.0),
            eta_u: take(&|i| layout.eta_u(i), layout.l, 1.0),
            zeta_3: take(&|i| layout.zeta_3(i), layout.k, 1.0),
            f: x[layout.f()] * FREQ_UNIT,
        };
        Ok(Self {
            alloc,
            r_d: x[layout.r_d()] * RATE_UNIT,
            r_u: x[layout.r_u()] * RATE_UNIT,
            rt_d: x[layout.rt_d()] * RATE_UNIT,
            rt_u: x[layout.rt_u()] * RATE_UNIT,
            a1: x[layout.a1()],
            a2: x[layout.a2()] * A2_UNIT,
            a3: x[layout.a3()],
            r1: take(&|i| layout.r1(i), layout.k, RATE_UNIT),
            r2: take(&|i| layout.r2(i), layout.k, RATE_UNIT),
            r3: take(&|i| layout.r3(i), layout.k, RATE_UNIT),
            t: x[layout.t()] * BITS_UNIT,
            t_q: x[layout.t_q()],
            z: x[layout.z()] * RATE_UNIT,
            s: layout.s().map_or(0.0, |i| x[i]),
        })
    }
}
