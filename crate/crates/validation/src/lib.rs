//! Criterion batteries: each suite runs a fixed set of checks at a pinned tolerance and
//! reports measured value, target and verdict for every one of them. The acceptance test
//! and `hsle verify` both run these.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use hsle::cascade::{estimate_pure_z, symmetry_report, McConfig, McEstimate};
use hsle::geometry::MobiusMap;
use hsle::ising::{
    alternating_pair, crossing_samples, default_updates, dobrushin_drivings, kappa_estimate, sample_at, Bc,
    LatticeDomain, Sampler, BETA_C, KAPPA_T_MAX,
};
use hsle::link_patterns::LinkPattern;
use hsle::loewner::path_rng;
use hsle::martingale_lab::{avoid_probability_mc, poisson_martingale_identity, terminal_endpoint_kappa4};
use hsle::partition_fn::{
    asy_ratio, bound_b_alpha, h_exponent, n2_hyp, pde_residual, pure_z_n1, pure_z_n2, z_kappa_nu, z_kappa_nu_weights,
};
use hsle::special_fn::{euler_ode_residual, hyp2f1, hyp2f1_at_one, F_hsle, HypParams, Params};
use hsle::{Error, Result};

pub const KAPPAS: [f64; 4] = [2.0, 3.0, 4.0, 6.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Reduced sample sizes for smoke runs.
    Quick,
    /// The sizes the criteria are stated at.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub target: f64,
    /// Allowed |value − target| (or the band half-width for range checks).
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn within(name: impl Into<String>, value: f64, target: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: (value - target).abs() <= tolerance,
            value,
            target,
            tolerance,
            detail: detail.into(),
        }
    }

    fn flag(name: impl Into<String>, passed: bool, value: f64, target: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, value, target, tolerance: 0.0, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub scale: String,
    pub checks: Vec<Check>,
    pub seconds: f64,
    /// Wall-clock allowance; infinite when none is stated.
    pub budget_seconds: f64,
    /// Workers the budget is stated for; runs on fewer threads are projected linearly.
    pub budget_workers: Option<usize>,
    pub threads: usize,
    pub within_budget: bool,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.within_budget && self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

pub const SUITES: [&str; 10] =
    ["specialfn", "pde", "cov", "asy", "crossing", "avoid", "poisson", "cascade", "ising", "ising-smoke"];

/// Runs a suite by name.
pub fn run_suite(name: &str, scale: Scale) -> Result<SuiteReport> {
    let (budget, workers): (f64, Option<usize>) = match name {
        "specialfn" => (5.0, None),
        "pde" => (30.0, None),
        "cov" => (10.0, None),
        "asy" => (f64::INFINITY, None),
        "crossing" => (600.0, Some(4)),
        "avoid" | "poisson" => (900.0, None),
        "cascade" | "ising" | "ising-smoke" => (1800.0, None),
        other => return Err(Error::Param(format!("unknown suite '{other}'; expected one of {}", SUITES.join(", ")))),
    };
    let t0 = Instant::now();
    let checks = match name {
        "specialfn" => special_functions()?,
        "pde" => residual_contraction()?,
        "cov" => covariance()?,
        "asy" => asymptotics()?,
        "crossing" => crossing(scale)?,
        "avoid" => avoid(scale)?,
        "poisson" => poisson(scale)?,
        "cascade" => cascade(scale)?,
        "ising" => ising(scale)?,
        _ => ising(Scale::Quick)?,
    };
    let seconds = t0.elapsed().as_secs_f64();
    let threads = rayon::current_num_threads();
    let projected = match workers {
        Some(w) => seconds * threads.min(w) as f64 / w as f64,
        None => seconds,
    };
    Ok(SuiteReport {
        suite: name.into(),
        scale: format!("{scale:?}").to_lowercase(),
        checks,
        seconds,
        budget_seconds: budget,
        budget_workers: workers,
        threads,
        within_budget: projected <= budget,
    })
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

fn gauss_at_one(p: HypParams) -> f64 {
    use statrs::function::gamma::gamma;
    gamma(p.c) * gamma(p.c - p.a - p.b) / (gamma(p.c - p.a) * gamma(p.c - p.b))
}

/// ν values spread over the high regime (threshold, 4].
fn high_nus(kappa: f64) -> Vec<f64> {
    let lo = Params::nu_threshold(kappa);
    (1..=8).map(|j| lo + (4.0 - lo) * j as f64 / 8.0).collect()
}

pub fn special_functions() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let p = HypParams::new(1.0, 1.0, 2.0);
    let mut worst: f64 = 0.0;
    for i in 0..=900 {
        let z = i as f64 / 1000.0;
        let exact = if z == 0.0 { 1.0 } else { -(-z).ln_1p() / z };
        worst = worst.max(rel(hyp2f1(p, z)?, exact));
    }
    out.push(Check::within("2F1(1,1;2;z) vs -ln(1-z)/z on [0, 0.9]", worst, 0.0, 1e-10, "max relative error"));

    for kappa in KAPPAS {
        let mut sets = vec![("N=2", n2_hyp(kappa))];
        for nu in high_nus(kappa) {
            sets.push(("F", Params::new(kappa, nu)?.f_params()));
        }
        for nu in [Params::nu_threshold(kappa) - 0.5, Params::nu_threshold(kappa) - 1.75] {
            let par = Params::new(kappa, nu)?;
            if par.nu < kappa / 2.0 - 4.0 {
                sets.push(("G", par.g_params()));
            }
        }
        let mut worst: f64 = 0.0;
        for (_, hp) in &sets {
            let exact = gauss_at_one(*hp);
            let err = (hyp2f1_at_one(*hp)? - exact).abs() / exact.abs().max(1.0);
            worst = worst.max(err);
        }
        out.push(Check::within(
            format!("2F1 at 1 vs Gamma formula, kappa {kappa}"),
            worst,
            0.0,
            1e-8,
            format!("{} parameter sets", sets.len()),
        ));
    }

    for kappa in KAPPAS {
        let mut bad = Vec::new();
        for nu in high_nus(kappa) {
            let par = Params::new(kappa, nu)?;
            let f1 = F_hsle(&par, 1.0)?;
            let (mn, mx) = (f1.min(1.0), f1.max(1.0));
            let vals: Vec<f64> = (0..1000).map(|i| F_hsle(&par, i as f64 / 999.0)).collect::<Result<_>>()?;
            let up = vals.windows(2).all(|w| w[1] >= w[0] - 1e-13);
            let down = vals.windows(2).all(|w| w[1] <= w[0] + 1e-13);
            let inside = vals.iter().all(|&v| v >= mn - 1e-12 && v <= mx + 1e-12);
            if !((up || down) && inside) {
                bad.push(nu);
            }
        }
        out.push(Check::flag(
            format!("F monotone between 1 and F(1), kappa {kappa}"),
            bad.is_empty(),
            bad.len() as f64,
            0.0,
            if bad.is_empty() { "8 nu values, 1000-point grids".to_string() } else { format!("fails at nu {bad:?}") },
        ));
    }
    Ok(out)
}

/// Residuals below this are rounding noise: the differenced function is a polynomial of
/// low degree (κ = 2 makes F linear) or constant.
const ROUNDING_FLOOR: f64 = 1e-9;

/// r(s)/r(s/2); `None` when the residual is at rounding level at both steps.
fn contraction(r: impl Fn(f64) -> Result<f64>, step: f64) -> Result<Option<f64>> {
    let (a, b) = (r(step)?, r(step / 2.0)?);
    if a.abs() < ROUNDING_FLOOR && b.abs() < ROUNDING_FLOOR {
        return Ok(None);
    }
    Ok(Some(a / b))
}

fn ratio_check(name: String, ratio: Option<f64>) -> Check {
    match ratio {
        None => Check::flag(name, true, 0.0, 4.0, "residual at rounding level at both steps"),
        Some(q) => Check::within(name, q, 4.0, 0.5, "residual ratio under step halving"),
    }
}

pub fn residual_contraction() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let quad = [0.0, 0.7, 1.6, 3.1];
    let step = 0.05;
    for kappa in KAPPAS {
        let h = h_exponent(kappa);
        for nu in [0.0, 1.5] {
            let par = Params::new(kappa, nu)?;
            let q = contraction(|s| euler_ode_residual(&par, 0.4, s / 2.5), step)?;
            out.push(ratio_check(format!("Euler ODE, kappa {kappa}, nu {nu}"), q));
        }

        let n1 = |x: &[f64]| pure_z_n1(kappa, x[0], x[1]).unwrap();
        for i in 0..2 {
            let q = contraction(|s| Ok(pde_residual(n1, kappa, &[h, h], i, &[0.0, 1.3], s)), step)?;
            out.push(ratio_check(format!("PDE pure_Z_N1, kappa {kappa}, i {}", i + 1), q));
        }

        for pat in LinkPattern::enumerate(2)? {
            let zf = |x: &[f64]| pure_z_n2(kappa, &pat, x).unwrap();
            for i in [0usize, 2] {
                let q = contraction(|s| Ok(pde_residual(zf, kappa, &[h; 4], i, &quad, s)), step)?;
                out.push(ratio_check(format!("PDE pure_Z_N2 {pat}, kappa {kappa}, i {}", i + 1), q));
            }
        }

        for nu in [0.0, 1.5] {
            let par = Params::new(kappa, nu)?;
            let zf = |x: &[f64]| z_kappa_nu(&par, x).unwrap();
            for i in [0usize, 3] {
                let mut w = [par.b; 4];
                w[3 - i] = par.h;
                let q = contraction(|s| Ok(pde_residual(zf, kappa, &w, i, &quad, s)), step)?;
                out.push(ratio_check(format!("PDE z_kappa_nu, kappa {kappa}, nu {nu}, i {}", i + 1), q));
            }
        }
    }
    Ok(out)
}

fn random_map(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> MobiusMap {
    loop {
        let m = MobiusMap {
            p: rng.random_range(-3.0..3.0),
            q: rng.random_range(-3.0..3.0),
            r: rng.random_range(-1.0..1.0),
            s: rng.random_range(-3.0..3.0),
        };
        if m.det() < 0.1 {
            continue;
        }
        if let Some(pole) = m.pole() {
            if pole > lo - 0.5 && pole < hi + 0.5 {
                continue;
            }
        }
        return m;
    }
}

pub fn covariance() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let patterns = LinkPattern::enumerate(2)?;
    let mut worst = [0.0f64; 3];
    for _ in 0..200 {
        let mut x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = random_map(&mut rng, x[0], x[3]);
        let y: Vec<f64> = x.iter().map(|&v| m.apply(v)).collect();
        for kappa in KAPPAS {
            let h = h_exponent(kappa);
            let a = pure_z_n1(kappa, y[0], y[3])? * m.covariance_factor(&[x[0], x[3]], &[h, h]);
            worst[0] = worst[0].max(rel(a, pure_z_n1(kappa, x[0], x[3])?));
            for pat in &patterns {
                let a = pure_z_n2(kappa, pat, &y)? * m.covariance_factor(&x, &[h; 4]);
                worst[1] = worst[1].max(rel(a, pure_z_n2(kappa, pat, &x)?));
            }
            for nu in [0.0, 1.5, Params::nu_threshold(kappa) - 0.5] {
                let par = Params::new(kappa, nu)?;
                let a = z_kappa_nu(&par, &y)? * m.covariance_factor(&x, &z_kappa_nu_weights(&par));
                worst[2] = worst[2].max(rel(a, z_kappa_nu(&par, &x)?));
            }
        }
    }
    Ok(["pure_Z_N1", "pure_Z_N2", "z_kappa_nu"]
        .iter()
        .zip(worst)
        .map(|(n, w)| Check::within(format!("{n} Möbius covariance"), w, 0.0, 1e-8, "200 random maps, max relative error"))
        .collect())
}

/// Aitken extrapolation of the last three values of a geometric sequence of gaps.
fn aitken(r: &[f64]) -> f64 {
    let n = r.len();
    let (a, b, c) = (r[n - 3], r[n - 2], r[n - 1]);
    let d = (c - b) - (b - a);
    if d == 0.0 {
        c
    } else {
        c - (c - b) * (c - b) / d
    }
}

pub fn asymptotics() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let x = [0.0, 1.0, 2.5, 4.0];
    let apart: LinkPattern = "1-2,3-4".parse()?;
    let nested: LinkPattern = "1-4,2-3".parse()?;
    for kappa in KAPPAS {
        let linked = [
            (&apart, 1usize, pure_z_n1(kappa, x[2], x[3])?),
            (&apart, 3, pure_z_n1(kappa, x[0], x[1])?),
            (&nested, 2, pure_z_n1(kappa, x[0], x[3])?),
        ];
        for (pat, j, target) in linked {
            let f = |y: &[f64]| pure_z_n2(kappa, pat, y).unwrap();
            let seq: Vec<f64> = (4..=6).map(|k| asy_ratio(&f, kappa, j, &x, 10f64.powi(-k))).collect();
            let lim = aitken(&seq);
            out.push(Check::within(
                format!("ASY linked {pat}, kappa {kappa}, j {j}"),
                rel(lim, target),
                0.0,
                1e-3,
                format!("extrapolated {lim:.8} vs {target:.8}"),
            ));
        }
        let expected = (8.0 - kappa) / kappa;
        for (pat, j) in [(&nested, 1usize), (&apart, 2)] {
            let f = |y: &[f64]| pure_z_n2(kappa, pat, y).unwrap();
            let pts: Vec<(f64, f64)> = (3..=6)
                .map(|k| {
                    let g = 10f64.powi(-k);
                    (g.ln(), asy_ratio(&f, kappa, j, &x, g).ln())
                })
                .collect();
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
                / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
            out.push(Check::within(
                format!("ASY unlinked {pat}, kappa {kappa}, j {j}"),
                slope,
                expected,
                0.1 * expected,
                "log-log slope of Z/gap^(-2h) over gaps 1e-3..1e-6",
            ));
        }
    }
    Ok(out)
}

fn mc_check(name: impl Into<String>, e: &McEstimate, target: f64, allowance: f64, extra: &str) -> Check {
    let mut c = Check::within(
        name,
        e.mean,
        target,
        3.0 * e.stderr + allowance,
        format!("n {}, stderr {:.5}, z {:.2}{extra}", e.n, e.stderr, e.zscore(target)),
    );
    if !e.mean.is_finite() {
        c.passed = false;
    }
    c
}

pub const QUAD: [f64; 4] = [0.0, 1.0, 2.0, 3.0];

pub fn crossing(scale: Scale) -> Result<Vec<Check>> {
    let n = if scale == Scale::Full { 10_000 } else { 2000 };
    let cfg = McConfig::new(n, 1e-4, 1e-3, 4004);
    let e = terminal_endpoint_kappa4(-4.0, &QUAD, &cfg)?;
    Ok(vec![
        mc_check(
            "kappa 4, nu -4: P[ends at x4] vs z^alpha",
            &e.estimate,
            e.target,
            0.01,
            &format!(", unclassified {}, ambiguous {}", e.unclassified, e.ambiguous),
        ),
        mc_check("kappa 4, nu -4: E[z_tau^alpha] vs z^alpha", &e.conditional, e.target, 0.01, ""),
    ])
}

pub fn avoid(scale: Scale) -> Result<Vec<Check>> {
    let n = if scale == Scale::Full { 10_000 } else { 1000 };
    let p = Params::new(6.0, 0.0)?;
    let e = avoid_probability_mc(&p, &QUAD, &McConfig::new(n, 1e-3, 1e-3, 6006))?;
    let sle6 = Params::new(6.0, -2.0)?;
    let c = avoid_probability_mc(&sle6, &QUAD, &McConfig::new(n / 2, 1e-3, 1e-3, 6007))?;
    Ok(vec![
        mc_check("kappa 6, nu 0: avoidance vs closed form", &e.estimate, e.target, 0.01, &format!(", at horizon {}", e.at_horizon)),
        mc_check(
            "kappa 6, nu -2: avoidance vs closed form (Cardy)",
            &c.estimate,
            c.target,
            0.01,
            &format!(", at horizon {}", c.at_horizon),
        ),
    ])
}

pub fn poisson(scale: Scale) -> Result<Vec<Check>> {
    let n = if scale == Scale::Full { 4000 } else { 500 };
    let p = Params::new(3.0, 0.0)?;
    let e = poisson_martingale_identity(&p, 1.0, 2.0, &McConfig::new(n, 1e-3, 1e-3, 3003))?;
    let scaled = McEstimate { mean: e.kernel.mean * e.f_one, stderr: e.kernel.stderr * e.f_one, n: e.kernel.n };
    Ok(vec![
        mc_check("kappa 3, nu 0, (1,2): E[H^b] vs M_0", &e.kernel, e.target, 0.02, " (literal statement)"),
        mc_check("kappa 3, nu 0, (1,2): E[M_tau] vs M_0", &e.stopped, e.target, 0.02, &format!(", short runs {}", e.short)),
        mc_check(
            "kappa 3, nu 0, (1,2): F(1) E[H^b] vs M_0",
            &scaled,
            e.target,
            0.02,
            &format!(", F(1) = {:.6}", e.f_one),
        ),
    ])
}

pub fn cascade(scale: Scale) -> Result<Vec<Check>> {
    let (n2, n3) = if scale == Scale::Full { (5000, 2000) } else { (500, 300) };
    let kappa = 3.0;
    let mut out = Vec::new();
    let pat: LinkPattern = "1-4,2-3".parse()?;
    let exact = pure_z_n2(kappa, &pat, &QUAD)?;
    let bound = bound_b_alpha(kappa, &pat, &QUAD)?;
    for k in 0..2 {
        let e = estimate_pure_z(kappa, &pat, &QUAD, k, &McConfig::new(n2, 1e-3, 1e-3, 5005))?;
        let z = e.estimate.zscore(exact);
        out.push(Check::within(
            format!("N=2 {pat} along link {k} vs closed form"),
            e.estimate.mean,
            exact,
            3.0 * e.estimate.stderr,
            format!("n {}, stderr {:.5}, z {z:.2}, rejected {}, incomplete {}", n2, e.estimate.stderr, e.rejected, e.incomplete),
        ));
        out.push(Check::flag(
            format!("N=2 {pat} along link {k} within B_alpha"),
            e.estimate.mean <= bound * (1.0 + 3.0 * e.estimate.stderr / e.estimate.mean),
            e.estimate.mean,
            bound,
            "estimate ≤ B_alpha up to 3 stderr",
        ));
    }
    let pat3: LinkPattern = "1-6,2-3,4-5".parse()?;
    let x6 = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
    let r = symmetry_report(kappa, &pat3, &x6, &McConfig::new(n3, 1e-3, 1e-3, 5006))?;
    for &(i, j, z) in &r.zscores {
        out.push(Check::within(format!("N=3 {pat3} link {i} vs link {j}"), z, 0.0, 3.0, "pairwise z-score"));
    }
    out.push(Check::flag(
        format!("N=3 {pat3} within B_alpha"),
        r.respects_bound(),
        r.rows.iter().map(|row| row.1.estimate.mean).fold(0.0, f64::max),
        r.bound,
        format!(
            "estimates {:?}",
            r.rows.iter().map(|row| (row.1.estimate.mean * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    ));
    Ok(out)
}

fn paired_difference(a: &[bool], b: &[bool]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| y as u8 as f64 - x as u8 as f64).collect();
    let e = McEstimate::from_samples(&d);
    (e.mean, e.stderr)
}

pub fn ising(scale: Scale) -> Result<Vec<Check>> {
    let full = scale == Scale::Full;
    let mut out = Vec::new();

    let (side, n) = if full { (64, 500) } else { (32, 200) };
    let dom = LatticeDomain::dobrushin(side, side)?;
    let samples = dobrushin_drivings(&dom, n, default_updates(&dom), 7001)?;
    let paths: Vec<_> = samples.into_iter().map(|s| s.path).collect();
    let fit = kappa_estimate(&paths, KAPPA_T_MAX)?;
    out.push(Check::within(
        format!("Dobrushin {side}x{side} kappa slope"),
        fit.slope,
        3.0,
        0.5,
        format!("{n} interfaces, batch stderr {:.3}, intercept {:.4}", fit.stderr, fit.intercept),
    ));

    let (side, n) = if full { (32, 400) } else { (16, 200) };
    let free = LatticeDomain::quad(side, side, [Bc::Minus, Bc::Free, Bc::Minus, Bc::Plus])?;
    let plus = LatticeDomain::quad(side, side, [Bc::Minus, Bc::Plus, Bc::Minus, Bc::Plus])?;
    let a = crossing_samples(&free, n, default_updates(&free), 7002)?;
    let b = crossing_samples(&plus, n, default_updates(&plus), 7002)?;
    let col = |v: &[(bool, bool, bool)], k: usize| -> Vec<bool> { v.iter().map(|e| [e.0, e.1, e.2][k]).collect() };
    let (dh, sh) = paired_difference(&col(&a, 1), &col(&b, 1));
    out.push(Check::flag(
        format!("FKG: P[C_h_plus] does not drop when the right arc goes free to plus ({side}x{side})"),
        dh >= -3.0 * sh,
        dh,
        0.0,
        format!("paired difference {dh:.4} ± {sh:.4}, n {n}"),
    ));
    let (dv, sv) = paired_difference(&col(&a, 0), &col(&b, 0));
    out.push(Check::flag(
        format!("FKG: P[C_v_minus] does not rise when the right arc goes free to plus ({side}x{side})"),
        dv <= 3.0 * sv,
        dv,
        0.0,
        format!("paired difference {dv:.4} ± {sv:.4}, n {n}"),
    ));
    let alt = LatticeDomain::quad(side, side, [Bc::Minus, Bc::Plus, Bc::Minus, Bc::Plus])?;
    let mut crossed = 0;
    let mut broken = Vec::new();
    for i in 0..n / 2 {
        let mut rng = path_rng(7003, i as u64);
        let c = sample_at(&alt, BETA_C, default_updates(&alt), Sampler::Wolff, &mut rng);
        match alternating_pair(&c, &alt) {
            Ok(Some(_)) => crossed += 1,
            Ok(None) => {}
            Err(e) => broken.push(e.to_string()),
        }
    }
    out.push(Check::flag(
        "alternating pair: on C_v_minus both interfaces exist and are disjoint",
        broken.is_empty() && crossed > 0,
        broken.len() as f64,
        0.0,
        format!("{crossed} of {} samples crossed{}", n / 2, broken.first().map(|e| format!("; {e}")).unwrap_or_default()),
    ));

    let sizes: &[(usize, usize)] = if full { &[(32, 100), (64, 100), (128, 60)] } else { &[(16, 100), (32, 60)] };
    const RSW_C: f64 = 0.05;
    for &(l, n) in sizes {
        let dom = LatticeDomain::quad(l, 3 * l, [Bc::Minus, Bc::Free, Bc::Minus, Bc::Free])?;
        let ev = crossing_samples(&dom, n, default_updates(&dom), 7004 + l as u64)?;
        let f = ev.iter().filter(|e| e.0).count() as f64 / n as f64;
        let dual = ev.iter().all(|e| e.0 ^ e.2);
        out.push(Check::within(
            format!("RSW: {l}x{} quad, minus short arcs, free long arcs: P[C_v_minus] in [c, 1-c]", 3 * l),
            f,
            0.5,
            0.5 - RSW_C,
            format!("n {n}, c {RSW_C}"),
        ));
        out.push(Check::flag(
            format!("RSW: {l}x{} duality, exactly one of C_v_minus and 8-adjacent C_h_plus", 3 * l),
            dual,
            ev.iter().filter(|e| !(e.0 ^ e.2)).count() as f64,
            0.0,
            format!("n {n}"),
        ));
    }
    Ok(out)
}
