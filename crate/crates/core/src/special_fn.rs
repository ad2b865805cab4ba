//! Gauss hypergeometric function, Gamma, and the hypergeometric solutions F and G
//! that enter the hSLE drift and partition function.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

const MAX_TERMS: usize = 10_000;
const SERIES_TOL: f64 = 1e-15;
/// Above this argument the series is replaced by continuation around z = 1.
const SERIES_LIMIT: f64 = 0.9;
/// Distance of C-A-B from an integer below which the Gamma connection is ill-conditioned.
const INTEGER_GAP: f64 = 1e-3;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// Gamma function (Lanczos, g = 7), with reflection below 1/2.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        if x == x.round() {
            return f64::NAN;
        }
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut s = LANCZOS[0];
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            s += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * s
    }
}

/// ln|Γ(x)|.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        (PI / (PI * x).sin().abs()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut s = LANCZOS[0];
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            s += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
    }
}

/// 1/Γ(x), zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        0.0
    } else {
        1.0 / gamma(x)
    }
}

/// Rising factorial (x)_n.
pub fn pochhammer(x: f64, n: usize) -> f64 {
    (0..n).fold(1.0, |acc, k| acc * (x + k as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl HypParams {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    fn check(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite() && self.c.is_finite()) {
            return Err(Error::Param("non-finite hypergeometric parameter".into()));
        }
        if is_nonpositive_integer(self.c) {
            return Err(Error::Param(format!("C = {} is a nonpositive integer", self.c)));
        }
        Ok(())
    }

    fn terminates(&self) -> bool {
        is_nonpositive_integer(self.a) || is_nonpositive_integer(self.b)
    }

    /// Parameters of the derivative: d/dz 2F1(A,B;C;z) = (AB/C) 2F1(A+1,B+1;C+1;z).
    pub fn shifted(&self) -> Self {
        Self::new(self.a + 1.0, self.b + 1.0, self.c + 1.0)
    }
}

fn series(p: HypParams, z: f64) -> Result<f64> {
    let mut sum = 1.0;
    let mut term = 1.0;
    for n in 0..MAX_TERMS {
        let nf = n as f64;
        term *= (p.a + nf) * (p.b + nf) / ((p.c + nf) * (nf + 1.0)) * z;
        if term == 0.0 {
            return Ok(sum);
        }
        sum += term;
        if term.abs() < SERIES_TOL * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::NoConvergence(MAX_TERMS))
}

/// Two-term connection to the solutions around z = 1.
fn connection(p: HypParams, z: f64) -> Result<f64> {
    let m = p.c - p.a - p.b;
    let w = 1.0 - z;
    let g1 = gamma(p.c) * gamma(m) * rgamma(p.c - p.a) * rgamma(p.c - p.b);
    let g2 = gamma(p.c) * gamma(-m) * rgamma(p.a) * rgamma(p.b);
    let mut value = 0.0;
    if g1 != 0.0 {
        value += g1 * series(HypParams::new(p.a, p.b, 1.0 - m), w)?;
    }
    if g2 != 0.0 {
        value += g2 * w.powf(m) * series(HypParams::new(p.c - p.a, p.c - p.b, m + 1.0), w)?;
    }
    Ok(value)
}

/// Taylor continuation of Euler's ODE from the series region toward z < 1.
fn ode_continuation(p: HypParams, z: f64) -> Result<f64> {
    let mut z0 = SERIES_LIMIT;
    let mut y = series(p, z0)?;
    let mut dy = p.a * p.b / p.c * series(p.shifted(), z0)?;
    let ab = p.a * p.b;
    while z0 < z {
        let h = (z - z0).min(0.5 * (1.0 - z0));
        let p0 = z0 * (1.0 - z0);
        let p1 = 1.0 - 2.0 * z0;
        let p2 = -1.0;
        let q0 = p.c - (p.a + p.b + 1.0) * z0;
        let q1 = -(p.a + p.b + 1.0);
        let (mut c_prev, mut c_cur) = (y, dy);
        let mut val = y + dy * h;
        let mut der = dy;
        let mut hp = h;
        let mut small = 0;
        for n in 0..MAX_TERMS {
            let nf = n as f64;
            let c_next = -((p1 * nf * (nf + 1.0) + q0 * (nf + 1.0)) * c_cur
                + (p2 * nf * (nf - 1.0) + q1 * nf - ab) * c_prev)
                / (p0 * (nf + 2.0) * (nf + 1.0));
            der += (nf + 2.0) * c_next * hp;
            hp *= h;
            let term = c_next * hp;
            val += term;
            if term.abs() <= 1e-17 * val.abs() {
                small += 1;
                if small >= 2 {
                    break;
                }
            } else {
                small = 0;
            }
            c_prev = c_cur;
            c_cur = c_next;
            if n + 1 == MAX_TERMS {
                return Err(Error::NoConvergence(MAX_TERMS));
            }
        }
        y = val;
        dy = der;
        z0 += h;
    }
    Ok(y)
}

/// 2F1(A, B; C; z) for z in [0, 1]; z = 1 requires C > A + B.
pub fn hyp2f1(p: HypParams, z: f64) -> Result<f64> {
    p.check()?;
    if !(z.is_finite()) || z > 1.0 || z <= -1.0 {
        return Err(Error::Domain(format!("2F1 argument {z} outside (-1, 1]")));
    }
    if z == 1.0 {
        return hyp2f1_at_one(p);
    }
    if z.abs() <= SERIES_LIMIT || p.terminates() {
        return series(p, z);
    }
    let m = p.c - p.a - p.b;
    if (m - m.round()).abs() > INTEGER_GAP {
        connection(p, z)
    } else {
        ode_continuation(p, z)
    }
}

/// Gauss summation Γ(C)Γ(C−A−B)/(Γ(C−A)Γ(C−B)).
pub fn hyp2f1_at_one(p: HypParams) -> Result<f64> {
    p.check()?;
    if p.terminates() {
        return series(p, 1.0);
    }
    if p.c <= p.a + p.b {
        return Err(Error::Domain(format!(
            "2F1 diverges at 1 since C - A - B = {} <= 0",
            p.c - p.a - p.b
        )));
    }
    Ok(gamma(p.c) * gamma(p.c - p.a - p.b) * rgamma(p.c - p.a) * rgamma(p.c - p.b))
}

/// d/dz 2F1(A,B;C;z).
pub fn hyp2f1_deriv(p: HypParams, z: f64) -> Result<f64> {
    let k = p.a * p.b / p.c;
    if k == 0.0 {
        return Ok(0.0);
    }
    Ok(k * hyp2f1(p.shifted(), z)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub kappa: f64,
    pub nu: f64,
    pub h: f64,
    pub a: f64,
    pub b: f64,
}

impl Params {
    pub fn new(kappa: f64, nu: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 8.0) {
            return Err(Error::Param(format!("kappa = {kappa} outside (0, 8)")));
        }
        if !nu.is_finite() {
            return Err(Error::Param("nu must be finite".into()));
        }
        Ok(Self {
            kappa,
            nu,
            h: (6.0 - kappa) / (2.0 * kappa),
            a: (nu + 2.0) / kappa,
            b: (nu + 2.0) * (nu + 6.0 - kappa) / (4.0 * kappa),
        })
    }

    /// The regime boundary max(−4, κ/2 − 6).
    pub fn nu_threshold(kappa: f64) -> f64 {
        (-4.0f64).max(kappa / 2.0 - 6.0)
    }

    pub fn low_nu(&self) -> bool {
        self.nu <= Self::nu_threshold(self.kappa)
    }

    /// Parameters of F in the high-ν regime.
    pub fn f_params(&self) -> HypParams {
        let k = self.kappa;
        HypParams::new(
            (2.0 * self.nu + 4.0) / k,
            1.0 - 4.0 / k,
            (2.0 * self.nu + 8.0) / k,
        )
    }

    /// Parameters of G in the low-ν regime.
    pub fn g_params(&self) -> HypParams {
        let k = self.kappa;
        HypParams::new((2.0 * self.nu + 12.0 - k) / k, 4.0 / k, 8.0 / k)
    }
}

/// F(z) of the hSLE drift, switching to the reflected form (1−z)^{8/κ−1} G(1−z) at low ν.
#[allow(non_snake_case)]
pub fn F_hsle(par: &Params, z: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::Domain(format!("F evaluated at {z}")));
    }
    if par.low_nu() {
        let e = 8.0 / par.kappa - 1.0;
        if z == 1.0 {
            return Ok(0.0);
        }
        Ok((1.0 - z).powf(e) * hyp2f1(par.g_params(), 1.0 - z)?)
    } else {
        hyp2f1(par.f_params(), z)
    }
}

/// F'(z). Closed form in the high-ν regime; derivative of the reflected form otherwise.
#[allow(non_snake_case)]
pub fn F_prime(par: &Params, z: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::Domain(format!("F' evaluated at {z}")));
    }
    let k = par.kappa;
    let nu = par.nu;
    if par.low_nu() {
        let e = 8.0 / k - 1.0;
        let w = 1.0 - z;
        let g = par.g_params();
        let gv = hyp2f1(g, w)?;
        let gd = hyp2f1_deriv(g, w)?;
        Ok(-e * w.powf(e - 1.0) * gv - w.powf(e) * gd)
    } else {
        let pre = (nu + 2.0) / (nu + 4.0) * (1.0 - 4.0 / k);
        if pre == 0.0 {
            return Ok(0.0);
        }
        let p = HypParams::new(4.0 / k, (12.0 + 2.0 * nu) / k - 1.0, (8.0 + 2.0 * nu) / k + 1.0);
        Ok(pre * (1.0 - z).powf(8.0 / k - 2.0) * hyp2f1(p, z)?)
    }
}

/// Residual of Euler's hypergeometric ODE for F with centred differences of the given step.
pub fn euler_ode_residual(par: &Params, z: f64, step: f64) -> Result<f64> {
    if !(z - step > 0.0 && z + step < 1.0) {
        return Err(Error::Domain(format!("stencil around {z} leaves (0,1)")));
    }
    let k = par.kappa;
    let nu = par.nu;
    let f0 = F_hsle(par, z)?;
    let fp = F_hsle(par, z + step)?;
    let fm = F_hsle(par, z - step)?;
    let d1 = (fp - fm) / (2.0 * step);
    let d2 = (fp - 2.0 * f0 + fm) / (step * step);
    let c1 = (2.0 * nu + 8.0) / k - (2.0 * nu + 2.0 * k) / k * z;
    let c0 = 2.0 * (nu + 2.0) * (k - 4.0) / (k * k);
    Ok(z * (1.0 - z) * d2 + c1 * d1 - c0 * f0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Stirling series for ln Γ after shifting the argument above 20.
    fn ln_gamma_stirling(x: f64) -> f64 {
        let mut shift = 0.0;
        let mut y = x;
        while y < 20.0 {
            shift += y.ln();
            y += 1.0;
        }
        let y2 = y * y;
        let series = 1.0 / (12.0 * y) - 1.0 / (360.0 * y * y2) + 1.0 / (1260.0 * y2 * y2 * y)
            - 1.0 / (1680.0 * y2 * y2 * y2 * y);
        (y - 0.5) * y.ln() - y + 0.5 * (2.0 * PI).ln() + series - shift
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn gamma_against_stirling() {
        for i in 1..600 {
            let x = 0.05 * i as f64;
            assert!(rel(gamma(x), ln_gamma_stirling(x).exp()) < 1e-12, "x = {x}");
            assert!((ln_gamma(x) - ln_gamma_stirling(x)).abs() < 1e-12 * ln_gamma(x).abs().max(1.0));
        }
    }

    #[test]
    fn gamma_reflection_and_integers() {
        assert!(rel(gamma(5.0), 24.0) < 1e-14);
        assert!(rel(gamma(0.5), PI.sqrt()) < 1e-14);
        assert!(rel(gamma(-0.5), -2.0 * PI.sqrt()) < 1e-13);
        assert!(rel(gamma(-1.5), 4.0 / 3.0 * PI.sqrt()) < 1e-13);
        assert_eq!(rgamma(-3.0), 0.0);
        assert_eq!(pochhammer(3.0, 4), 3.0 * 4.0 * 5.0 * 6.0);
        assert_eq!(pochhammer(0.0, 3), 0.0);
    }

    #[test]
    fn trivial_values() {
        assert_eq!(hyp2f1(HypParams::new(0.3, 1.2, 2.5), 0.0).unwrap(), 1.0);
        assert_eq!(hyp2f1(HypParams::new(0.0, 1.2, 2.5), 0.7).unwrap(), 1.0);
        assert_eq!(hyp2f1_at_one(HypParams::new(0.0, 4.0, 2.0)).unwrap(), 1.0);
        assert!(rel(hyp2f1_at_one(HypParams::new(1.0, 1.0, 3.0)).unwrap(), 2.0) < 1e-14);
    }

    #[test]
    fn log_closed_form() {
        let v = hyp2f1(HypParams::new(1.0, 1.0, 2.0), 0.5).unwrap();
        assert!(rel(v, 1.386_294_361_119_890_6) < 1e-14);
        for i in 1..=999 {
            let z = i as f64 / 1000.0;
            let exact = -(1.0 - z).ln() / z;
            let v = hyp2f1(HypParams::new(1.0, 1.0, 2.0), z).unwrap();
            assert!(rel(v, exact) < 1e-10, "z = {z}: {v} vs {exact}");
        }
    }

    #[test]
    fn arcsin_closed_form_through_connection() {
        // 2F1(1/2,1/2;3/2;z^2) = asin(z)/z, C-A-B = 1/2 exercises the connection formula.
        for &z in &[0.3f64, 0.95, 0.97, 0.99, 0.999] {
            let v = hyp2f1(HypParams::new(0.5, 0.5, 1.5), z * z).unwrap();
            assert!(rel(v, z.asin() / z) < 1e-12, "z = {z}");
        }
    }

    #[test]
    fn integer_gap_uses_ode_continuation() {
        // 2F1(1,1;3;z) = (z + (1-z) ln(1-z)) * 2 / z^2, C-A-B = 1.
        for &z in &[0.91f64, 0.95, 0.99, 0.9999, 1.0 - 1e-7] {
            let exact = 2.0 * (z + (1.0 - z) * (1.0 - z).ln()) / (z * z);
            let v = hyp2f1(HypParams::new(1.0, 1.0, 3.0), z).unwrap();
            assert!(rel(v, exact) < 1e-11, "z = {z}: {v} vs {exact}");
        }
    }

    #[test]
    fn connection_matches_series_at_overlap() {
        let p = HypParams::new(4.0 / 3.0, -1.0 / 3.0, 8.0 / 3.0);
        let s = series(p, 0.9).unwrap();
        assert!(rel(connection(p, 0.9).unwrap(), s) < 1e-12);
        let q = HypParams::new(1.0, 1.0, 3.0);
        assert!(rel(ode_continuation(q, 0.9 + 1e-9).unwrap(), series(q, 0.9 + 1e-9).unwrap()) < 1e-12);
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(hyp2f1(HypParams::new(1.0, 1.0, -2.0), 0.5), Err(Error::Param(_))));
        assert!(matches!(hyp2f1_at_one(HypParams::new(1.0, 1.0, 2.0)), Err(Error::Domain(_))));
    }

    /// Least-squares fit of F(1 - w) on {1, w^m, w, w^(m+1), w^2} over w = 10^-k, k = 2..8.
    fn extrapolate_to_one(p: HypParams) -> f64 {
        let m = p.c - p.a - p.b;
        let basis = |w: f64| -> Vec<f64> {
            if (m - 1.0).abs() < 1e-3 {
                vec![1.0, w * w.ln(), w, w * w * w.ln(), w * w]
            } else if (m - 2.0).abs() < 1e-3 {
                vec![1.0, w, w * w * w.ln(), w * w, w * w * w]
            } else {
                vec![1.0, w.powf(m), w, w.powf(m + 1.0), w * w]
            }
        };
        let n = 5;
        let mut a = vec![vec![0.0; n + 1]; n];
        for k in 2..=8 {
            let w = 10f64.powi(-k);
            let row = basis(w);
            let y = hyp2f1(p, 1.0 - w).unwrap();
            for i in 0..n {
                a[i][n] += row[i] * y;
                for j in 0..n {
                    a[i][j] += row[i] * row[j];
                }
            }
        }
        for col in 0..n {
            let piv = (col..n).max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap()).unwrap();
            a.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        a[0][n] / a[0][0]
    }

    #[test]
    fn approach_to_one() {
        for kappa in [2.0, 3.0, 4.0, 6.0, 7.0] {
            for nu in [-1.5, 0.0, 2.0] {
                let par = Params::new(kappa, nu).unwrap();
                let p = par.f_params();
                let one = hyp2f1_at_one(p).unwrap();
                let v = extrapolate_to_one(p);
                assert!(rel(v, one) < 1e-6, "kappa {kappa} nu {nu}: {v} vs {one}");
            }
        }
    }

    #[test]
    fn params_and_regimes() {
        let p = Params::new(3.0, 0.0).unwrap();
        assert!((p.h - 0.5).abs() < 1e-15);
        assert!((p.a - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.b - 0.5).abs() < 1e-15);
        assert!(Params::new(3.0, -4.0).unwrap().low_nu());
        assert!(!Params::new(3.0, -3.9).unwrap().low_nu());
        assert!(Params::new(2.0, -5.0).unwrap().low_nu());
        assert!(Params::new(8.0, 0.0).is_err());
    }

    #[test]
    fn f_hsle_examples() {
        for kappa in [2.0, 3.0, 6.0] {
            let p = Params::new(kappa, -2.0).unwrap();
            for z in [0.0, 0.3, 0.95, 1.0] {
                assert_eq!(F_hsle(&p, z).unwrap(), 1.0);
            }
            assert_eq!(F_prime(&p, 0.4).unwrap(), 0.0);
        }
        let p = Params::new(4.0, 0.0).unwrap();
        assert_eq!(F_hsle(&p, 1.0).unwrap(), 1.0);
        assert_eq!(F_hsle(&Params::new(3.0, 1.0).unwrap(), 0.0).unwrap(), 1.0);
    }

    #[test]
    fn f_prime_near_zero() {
        for (kappa, nu) in [(3.0, 0.0), (6.0, 1.0), (2.5, -1.0)] {
            let par = Params::new(kappa, nu).unwrap();
            let p = par.f_params();
            let expect = p.a * p.b / p.c;
            assert!(rel(F_prime(&par, 1e-12).unwrap(), expect) < 1e-9);
        }
    }

    #[test]
    fn f_prime_matches_differences() {
        let cases = [(6.0, 0.0), (3.0, 0.0), (2.0, 1.0), (7.0, -1.0), (3.0, -5.0), (2.0, -6.0), (3.0, -4.0)];
        for (kappa, nu) in cases {
            let par = Params::new(kappa, nu).unwrap();
            for i in 0..=18 {
                let z = 0.05 + 0.05 * i as f64;
                let h = 1e-5;
                let fd = (F_hsle(&par, z + h).unwrap() - F_hsle(&par, z - h).unwrap()) / (2.0 * h);
                let d = F_prime(&par, z).unwrap();
                assert!((d - fd).abs() <= 1e-6 * d.abs().max(1e-3), "kappa {kappa} nu {nu} z {z}: {d} vs {fd}");
            }
        }
    }

    #[test]
    fn ode_residual_small() {
        let par = Params::new(3.0, 0.0).unwrap();
        assert!(euler_ode_residual(&par, 0.5, 1e-3).unwrap().abs() < 1e-5);
        for kappa in [3.0, 4.0, 6.0] {
            let p = Params::new(kappa, -2.0).unwrap();
            assert_eq!(euler_ode_residual(&p, 0.5, 1e-3).unwrap(), 0.0);
        }
        let low = Params::new(3.0, -5.0).unwrap();
        assert!(euler_ode_residual(&low, 0.5, 1e-3).unwrap().abs() < 1e-5);
    }

    #[test]
    fn g_is_bounded() {
        for kappa in [2.0, 3.0, 4.0, 6.0] {
            for nu in [-4.0, -5.0, -7.0] {
                let par = Params::new(kappa, nu).unwrap();
                if !par.low_nu() {
                    continue;
                }
                let g = par.g_params();
                let top = hyp2f1_at_one(g).unwrap();
                for i in 0..=1000 {
                    let v = hyp2f1(g, i as f64 / 1000.0).unwrap();
                    assert!(v.is_finite() && v > 0.0 && v <= top.max(1.0) * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn monotone_between_one_and_f1() {
        for kappa in [2.0, 3.0, 4.0, 6.0, 7.0] {
            let lo = Params::nu_threshold(kappa);
            for j in 1..=8 {
                let nu = lo + (4.0 - lo) * j as f64 / 8.0;
                let par = Params::new(kappa, nu).unwrap();
                let f1 = F_hsle(&par, 1.0).unwrap();
                let (mn, mx) = (f1.min(1.0), f1.max(1.0));
                let vals: Vec<f64> = (0..1000).map(|i| F_hsle(&par, i as f64 / 1000.0).unwrap()).collect();
                let up = vals.windows(2).all(|w| w[1] >= w[0] - 1e-13);
                let down = vals.windows(2).all(|w| w[1] <= w[0] + 1e-13);
                assert!(up || down, "kappa {kappa} nu {nu}");
                assert!(vals.iter().all(|&v| v >= mn - 1e-12 && v <= mx + 1e-12));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn series_and_continuation_agree(a in 0.1f64..3.0, b in -0.9f64..2.0, extra in 0.2f64..3.0, z in 0.9f64..0.999) {
            let c = a + b + extra;
            let p = HypParams::new(a, b, c);
            let v = hyp2f1(p, z).unwrap();
            let w = ode_continuation(p, z).unwrap();
            proptest::prop_assert!(rel(v, w) < 1e-9);
        }
    }
}
