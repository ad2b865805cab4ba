//! Cross-ratios, Möbius maps of the upper half-plane and boundary Poisson kernels.
//!
//! A point at infinity is written as `f64::INFINITY`; formulas take the limit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loewner::LoewnerState;

pub const INF: f64 = f64::INFINITY;

/// Gap below which a tracked image counts as swallowed.
pub const SWALLOW_EPS: f64 = 1e-6;

pub fn is_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoints {
    xs: Vec<f64>,
}

impl MarkedPoints {
    pub fn new(xs: Vec<f64>) -> Result<Self> {
        if xs.len() % 2 != 0 || !is_increasing(&xs) {
            return Err(Error::Order);
        }
        Ok(Self { xs })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.xs
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// z = (x2−x1)(x4−x3)/((x3−x1)(x4−x2)); x4 may be infinite.
pub fn cross_ratio(x1: f64, x2: f64, x3: f64, x4: f64) -> Result<f64> {
    if !(x1 < x2 && x2 < x3 && x3 < x4) {
        return Err(Error::Order);
    }
    if x4 == INF {
        return Ok((x2 - x1) / (x3 - x1));
    }
    Ok((x2 - x1) * (x4 - x3) / ((x3 - x1) * (x4 - x2)))
}

/// H(x,y) = |y − x|^{-2}.
pub fn poisson_kernel_halfplane(x: f64, y: f64) -> Result<f64> {
    if x == y {
        return Err(Error::Singular("Poisson kernel at coinciding points".into()));
    }
    Ok((y - x).powi(-2))
}

/// Poisson kernel of the slit domain from tracked images and log-derivatives.
pub fn poisson_kernel_slit(state: &LoewnerState, i: usize, j: usize) -> Result<f64> {
    let (pi, pj) = (state.point(i)?, state.point(j)?);
    if pi.swallowed {
        return Err(Error::Swallowed(i));
    }
    if pj.swallowed {
        return Err(Error::Swallowed(j));
    }
    let dv = pj.v - pi.v;
    if dv == 0.0 {
        return Err(Error::Singular("coinciding images".into()));
    }
    Ok((pi.l + pj.l - 2.0 * dv.abs().ln()).exp())
}

/// x ↦ (p x + q)/(r x + s) with ps − qr > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobiusMap {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
}

impl MobiusMap {
    pub fn new(p: f64, q: f64, r: f64, s: f64) -> Result<Self> {
        let m = Self { p, q, r, s };
        if !(m.det() > 0.0) {
            return Err(Error::Param("Möbius map must have positive determinant".into()));
        }
        Ok(m)
    }

    pub fn identity() -> Self {
        Self { p: 1.0, q: 0.0, r: 0.0, s: 1.0 }
    }

    pub fn det(&self) -> f64 {
        self.p * self.s - self.q * self.r
    }

    /// Real point where the map sends to infinity, if any.
    pub fn pole(&self) -> Option<f64> {
        (self.r != 0.0).then(|| -self.s / self.r)
    }

    pub fn apply(&self, x: f64) -> f64 {
        if x == INF {
            return if self.r == 0.0 { INF } else { self.p / self.r };
        }
        let den = self.r * x + self.s;
        if den == 0.0 {
            return INF;
        }
        (self.p * x + self.q) / den
    }

    pub fn apply_c(&self, z: num_complex::Complex64) -> num_complex::Complex64 {
        (z * self.p + self.q) / (z * self.r + self.s)
    }

    /// φ'(x) = det/(r x + s)^2.
    pub fn deriv(&self, x: f64) -> f64 {
        self.det() / (self.r * x + self.s).powi(2)
    }

    pub fn inverse(&self) -> Self {
        Self { p: self.s, q: -self.q, r: -self.r, s: self.p }
    }

    /// self ∘ other.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            p: self.p * other.p + self.q * other.r,
            q: self.p * other.q + self.q * other.s,
            r: self.r * other.p + self.s * other.r,
            s: self.r * other.q + self.s * other.s,
        }
    }

    /// ∏ φ'(x_i)^{w_i}, computed in log space.
    pub fn covariance_factor(&self, xs: &[f64], weights: &[f64]) -> f64 {
        xs.iter()
            .zip(weights)
            .map(|(&x, &w)| w * self.deriv(x).ln())
            .sum::<f64>()
            .exp()
    }
}

/// Möbius map sending xs[i] ↦ 0, xs[j] ↦ 1, xs[k] ↦ ∞, with the transformed list.
pub fn normalize_to_halfplane(pts: &[f64], target: [usize; 3]) -> Result<(MobiusMap, Vec<f64>)> {
    if pts.len() < 3 {
        return Err(Error::Param("normalization needs at least three points".into()));
    }
    let [i, j, k] = target;
    if i >= pts.len() || j >= pts.len() || k >= pts.len() {
        return Err(Error::Param("normalization index out of range".into()));
    }
    let (xi, xj, xk) = (pts[i], pts[j], pts[k]);
    let m = if xk == INF {
        MobiusMap { p: 1.0 / (xj - xi), q: -xi / (xj - xi), r: 0.0, s: 1.0 }
    } else {
        // (x − xi)(xj − xk) / ((x − xk)(xj − xi))
        let u = (xj - xk) / (xj - xi);
        MobiusMap { p: u, q: -xi * u, r: 1.0, s: -xk }
    };
    let m = if m.det() < 0.0 {
        MobiusMap { p: -m.p, q: -m.q, r: -m.r, s: -m.s }
    } else {
        m
    };
    let out = pts.iter().map(|&x| if x == xk { INF } else { m.apply(x) }).collect();
    Ok((m, out))
}
