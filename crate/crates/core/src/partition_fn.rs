//! Closed-form partition functions: Z_{κ,ν} on quads, pure partition functions for
//! N ≤ 2 and the bound B_α, with finite-difference PDE and asymptotics probes.

use crate::error::{Error, Result};
use crate::geometry::{cross_ratio, is_increasing};
use crate::link_patterns::LinkPattern;
use crate::special_fn::{hyp2f1, hyp2f1_at_one, ln_gamma, F_hsle, HypParams, Params};

pub fn h_exponent(kappa: f64) -> f64 {
    (6.0 - kappa) / (2.0 * kappa)
}

fn check4(x: &[f64]) -> Result<()> {
    if x.len() != 4 || !is_increasing(x) {
        return Err(Error::Order);
    }
    Ok(())
}

/// ln Z_{κ,ν}(x1,x2,x3,x4).
pub fn ln_z_kappa_nu(par: &Params, x: &[f64]) -> Result<f64> {
    check4(x)?;
    let z = cross_ratio(x[0], x[1], x[2], x[3])?;
    let f = F_hsle(par, z)?;
    if !(f > 0.0) {
        return Err(Error::Domain(format!("F({z}) = {f} is not positive")));
    }
    Ok(-2.0 * par.h * (x[3] - x[0]).ln() - 2.0 * par.b * (x[2] - x[1]).ln() + par.a * z.ln() + f.ln())
}

/// Z_{κ,ν} = (x4−x1)^{−2h}(x3−x2)^{−2b} z^a F(z).
pub fn z_kappa_nu(par: &Params, x: &[f64]) -> Result<f64> {
    Ok(ln_z_kappa_nu(par, x)?.exp())
}

/// Covariance weights (h, b, b, h) of Z_{κ,ν}.
pub fn z_kappa_nu_weights(par: &Params) -> [f64; 4] {
    [par.h, par.b, par.b, par.h]
}

/// (y − x)^{−2h}.
pub fn pure_z_n1(kappa: f64, x: f64, y: f64) -> Result<f64> {
    if !(x < y) {
        return Err(Error::Order);
    }
    Ok((-2.0 * h_exponent(kappa) * (y - x).ln()).exp())
}

/// Parameters of 2F1(4/κ, 1−4/κ; 8/κ; ·) used by the N = 2 functions.
pub fn n2_hyp(kappa: f64) -> HypParams {
    HypParams::new(4.0 / kappa, 1.0 - 4.0 / kappa, 8.0 / kappa)
}

/// Pure partition functions of LP_2, normalized by F(1) so that the linked-pair limit is
/// the N = 1 function.
pub fn pure_z_n2(kappa: f64, pattern: &LinkPattern, x: &[f64]) -> Result<f64> {
    check4(x)?;
    let h = h_exponent(kappa);
    let p = n2_hyp(kappa);
    let f1 = hyp2f1_at_one(p)?;
    let z = cross_ratio(x[0], x[1], x[2], x[3])?;
    let ln = if *pattern == LinkPattern::new(vec![(1, 4), (2, 3)])? {
        -2.0 * h * ((x[3] - x[0]).ln() + (x[2] - x[1]).ln()) + 2.0 / kappa * z.ln() + hyp2f1(p, z)?.ln()
    } else if *pattern == LinkPattern::new(vec![(1, 2), (3, 4)])? {
        -2.0 * h * ((x[1] - x[0]).ln() + (x[3] - x[2]).ln())
            + 2.0 / kappa * (1.0 - z).ln()
            + hyp2f1(p, 1.0 - z)?.ln()
    } else {
        return Err(Error::Param(format!("{pattern} is not an N = 2 pattern")));
    };
    Ok((ln - f1.ln()).exp())
}

/// Closed-form pure partition function for N ≤ 2.
pub fn pure_z_closed(kappa: f64, pattern: &LinkPattern, x: &[f64]) -> Result<f64> {
    if x.len() != 2 * pattern.n() {
        return Err(Error::Param("point count does not match the pattern".into()));
    }
    match pattern.n() {
        0 => Ok(1.0),
        1 => pure_z_n1(kappa, x[0], x[1]),
        2 => pure_z_n2(kappa, pattern, x),
        n => Err(Error::Param(format!("no closed form for N = {n}"))),
    }
}

/// B_α = ∏ over links of |x_b − x_a|^{−2h}.
pub fn bound_b_alpha(kappa: f64, pattern: &LinkPattern, x: &[f64]) -> Result<f64> {
    if x.len() != 2 * pattern.n() {
        return Err(Error::Param("point count does not match the pattern".into()));
    }
    if !is_increasing(x) {
        return Err(Error::Order);
    }
    let h = h_exponent(kappa);
    let ln: f64 = pattern.links().iter().map(|&(a, b)| -2.0 * h * (x[b - 1] - x[a - 1]).ln()).sum();
    Ok(ln.exp())
}

/// Residual of (κ/2)∂²_i Z + Σ_{j≠i} [2/(x_j−x_i) ∂_j Z − 2w_j/(x_j−x_i)² Z] with centred
/// differences of the given step. `i` is 0-based.
pub fn pde_residual<F: Fn(&[f64]) -> f64>(zf: F, kappa: f64, weights: &[f64], i: usize, points: &[f64], step: f64) -> f64 {
    let mut x = points.to_vec();
    let z0 = zf(&x);
    let mut shifted = |j: usize, d: f64| {
        x[j] = points[j] + d;
        let v = zf(&x);
        x[j] = points[j];
        v
    };
    let zp = shifted(i, step);
    let zm = shifted(i, -step);
    let mut r = kappa / 2.0 * (zp - 2.0 * z0 + zm) / (step * step);
    for j in 0..points.len() {
        if j == i {
            continue;
        }
        let dx = points[j] - points[i];
        let dj = (shifted(j, step) - shifted(j, -step)) / (2.0 * step);
        r += 2.0 / dx * dj - 2.0 * weights[j] / (dx * dx) * z0;
    }
    r
}

/// One Richardson level on top of [`pde_residual`].
pub fn pde_residual_richardson<F: Fn(&[f64]) -> f64>(
    zf: F,
    kappa: f64,
    weights: &[f64],
    i: usize,
    points: &[f64],
    step: f64,
) -> f64 {
    let r1 = pde_residual(&zf, kappa, weights, i, points, step);
    let r2 = pde_residual(&zf, kappa, weights, i, points, step / 2.0);
    (4.0 * r2 - r1) / 3.0
}

/// Default stencil: 1e−4 of the smallest gap.
pub fn default_step(points: &[f64]) -> f64 {
    1e-4 * points.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Z(points with x_j, x_{j+1} moved to ξ ∓ gap/2) / gap^{−2h}, ξ their midpoint; j is 1-based.
pub fn asy_ratio<F: Fn(&[f64]) -> f64>(zf: F, kappa: f64, j: usize, points: &[f64], gap: f64) -> f64 {
    let mut x = points.to_vec();
    let xi = 0.5 * (points[j - 1] + points[j]);
    x[j - 1] = xi - gap / 2.0;
    x[j] = xi + gap / 2.0;
    let h = h_exponent(kappa);
    (zf(&x).ln() + 2.0 * h * gap.ln()).exp()
}

/// Probability that hSLE_κ(ν) avoids (x2, x3).
pub fn avoid_probability(par: &Params, x: &[f64]) -> Result<f64> {
    check4(x)?;
    let (k, nu) = (par.kappa, par.nu);
    if nu >= k / 2.0 - 4.0 {
        return Ok(1.0);
    }
    if nu <= Params::nu_threshold(k) {
        return Err(Error::Domain(format!("nu = {nu} is outside the avoidance band for kappa = {k}")));
    }
    let hat = Params::new(k, k - 8.0 - nu)?;
    let ln = ln_z_kappa_nu(&hat, x)? - ln_z_kappa_nu(par, x)? + ln_gamma((2.0 * nu + 8.0) / k)
        + ln_gamma((k - 4.0 - 2.0 * nu) / k)
        - ln_gamma((2.0 * nu + 12.0 - k) / k)
        - ln_gamma((2.0 * k - 8.0 - 2.0 * nu) / k);
    Ok(ln.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MobiusMap;
    use crate::special_fn::gamma;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lp(s: &str) -> LinkPattern {
        s.parse().unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn base_values() {
        let p = Params::new(3.0, -2.0).unwrap();
        assert!(rel(z_kappa_nu(&p, &[0.0, 1.0, 2.0, 3.0]).unwrap(), 1.0 / 3.0) < 1e-14);
        assert!((pure_z_n1(3.0, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(pure_z_n1(6.0, 0.0, 17.0).unwrap(), 1.0);
        assert!(rel(pure_z_n1(2.0, 0.0, 2.0).unwrap(), 0.25) < 1e-14);
        assert!(z_kappa_nu(&p, &[0.0, 2.0, 1.0, 3.0]).is_err());
    }

    #[test]
    fn kappa4_nu0_oracle() {
        // h = b = 1/4, a = 1/2, B = 0 so F ≡ 1: Z = 3^{-1/2} · 1^{-1/2} · (1/4)^{1/2}.
        let p = Params::new(4.0, 0.0).unwrap();
        let v = z_kappa_nu(&p, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(rel(v, 0.5 / 3f64.sqrt()) < 1e-14);
    }

    #[test]
    fn kappa6_n2_oracle() {
        // h = 0, F = 2F1(2/3, 1/3; 4/3; ·), F(1) = Γ(4/3)Γ(1/3)/Γ(2/3).
        let f1 = gamma(4.0 / 3.0) * gamma(1.0 / 3.0) / gamma(2.0 / 3.0);
        let series = |z: f64| {
            let (mut s, mut t) = (1.0, 1.0);
            for n in 0..400 {
                let n = n as f64;
                t *= (2.0 / 3.0 + n) * (1.0 / 3.0 + n) / ((4.0 / 3.0 + n) * (n + 1.0)) * z;
                s += t;
            }
            s
        };
        let a = pure_z_n2(6.0, &lp("1-4,2-3"), &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(rel(a, 0.25f64.powf(1.0 / 3.0) * series(0.25) / f1) < 1e-12);
        let b = pure_z_n2(6.0, &lp("1-2,3-4"), &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(rel(b, 0.75f64.powf(1.0 / 3.0) * series(0.75) / f1) < 1e-10);
    }

    #[test]
    fn exchange_symmetry() {
        // Reflection x ↦ −x reverses the order and swaps the two patterns' roles after
        // rotation; equivalently the patterns swap under z ↔ 1−z with the prefactor swap.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kappa in [2.0, 3.0, 4.0, 6.0] {
            for _ in 0..50 {
                let mut x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
                x.sort_by(|a, b| a.partial_cmp(b).unwrap());
                // Rotating the marked points x2,x3,x4,x1 (x1 sent past infinity by −1/(w−c)).
                let c = 0.5 * (x[0] + x[1]);
                let m = MobiusMap::new(0.0, -1.0, 1.0, -c).unwrap();
                let y = [m.apply(x[1]), m.apply(x[2]), m.apply(x[3]), m.apply(x[0])];
                let h = h_exponent(kappa);
                let cov = m.covariance_factor(&[x[1], x[2], x[3], x[0]], &[h; 4]);
                let a = pure_z_n2(kappa, &lp("1-4,2-3"), &x).unwrap();
                let b = pure_z_n2(kappa, &lp("1-2,3-4"), &y).unwrap() * cov;
                assert!(rel(a, b) < 1e-10, "kappa {kappa}");
            }
        }
    }

    #[test]
    fn bound_examples() {
        assert!(rel(bound_b_alpha(3.0, &lp("1-2"), &[0.5, 2.0]).unwrap(), pure_z_n1(3.0, 0.5, 2.0).unwrap()) < 1e-14);
        assert_eq!(bound_b_alpha(6.0, &lp("1-4,2-3"), &[0.0, 1.0, 2.0, 3.0]).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kappa in [2.0, 3.0, 4.0, 6.0] {
            for _ in 0..1000 {
                let mut x: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
                x.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for pat in LinkPattern::enumerate(2).unwrap() {
                    let z = pure_z_n2(kappa, &pat, &x).unwrap();
                    let b = bound_b_alpha(kappa, &pat, &x).unwrap();
                    assert!(z > 0.0 && z <= b * (1.0 + 1e-12), "kappa {kappa} {pat}: {z} > {b}");
                }
            }
        }
    }

    #[test]
    fn n1_pde_residual() {
        let h = h_exponent(3.0);
        let zf = |x: &[f64]| pure_z_n1(3.0, x[0], x[1]).unwrap();
        for i in 0..2 {
            let r = pde_residual(zf, 3.0, &[h, h], i, &[0.0, 1.0], 1e-4);
            assert!(r.abs() < 1e-5, "{r}");
        }
    }

    #[test]
    fn hsle_pde_residual() {
        for (kappa, nu) in [(3.0, 0.0), (6.0, -1.0), (2.0, 1.5), (3.0, -5.0)] {
            let par = Params::new(kappa, nu).unwrap();
            let zf = |x: &[f64]| z_kappa_nu(&par, x).unwrap();
            let x = [0.0, 0.7, 1.6, 3.1];
            for i in [0usize, 3] {
                let mut w = [par.b; 4];
                w[3 - i] = par.h;
                let r = pde_residual_richardson(zf, kappa, &w, i, &x, 1e-3);
                assert!(r.abs() < 1e-7 * zf(&x), "kappa {kappa} nu {nu} i {i}: {r}");
            }
        }
    }

    #[test]
    fn asymptotics_targets() {
        let kappa = 3.0;
        let x = [0.0, 1.0, 2.5, 4.0];
        let lin = |y: &[f64]| pure_z_n2(kappa, &lp("1-2,3-4"), y).unwrap();
        let r = asy_ratio(lin, kappa, 1, &x, 1e-7);
        assert!(rel(r, pure_z_n1(kappa, x[2], x[3]).unwrap()) < 1e-4);
        let unl = |y: &[f64]| pure_z_n2(kappa, &lp("1-4,2-3"), y).unwrap();
        assert!(asy_ratio(unl, kappa, 1, &x, 1e-8) < 1e-6);
    }

    #[test]
    fn avoid_probability_cases() {
        let x = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(avoid_probability(&Params::new(6.0, 0.0).unwrap(), &x).unwrap(), 1.0);
        assert!(avoid_probability(&Params::new(6.0, -3.5).unwrap(), &x).is_err());
        // Plain SLE_6 (ν = −2): Cardy's formula Γ(2/3)/(Γ(1/3)Γ(4/3)) z^{1/3} 2F1(1/3,2/3;4/3;z).
        let p = avoid_probability(&Params::new(6.0, -2.0).unwrap(), &x).unwrap();
        let cardy = gamma(2.0 / 3.0) / (gamma(1.0 / 3.0) * gamma(4.0 / 3.0))
            * 0.25f64.powf(1.0 / 3.0)
            * hyp2f1(HypParams::new(1.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0), 0.25).unwrap();
        assert!(rel(p, cardy) < 1e-12, "{p} vs {cardy}");
        // Monotone in the obstacle: widening (x2, x3) lowers the probability.
        let par = Params::new(6.0, -2.0).unwrap();
        let sweep: Vec<f64> = [1.9, 1.5, 1.0, 0.5, 0.1]
            .iter()
            .map(|&a| avoid_probability(&par, &[0.0, a, 2.0, 3.0]).unwrap())
            .collect();
        assert!(sweep.windows(2).all(|w| w[1] < w[0]));
        assert!(sweep[4] < 0.2);
    }
}
