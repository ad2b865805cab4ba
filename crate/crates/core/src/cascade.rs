//! Monte Carlo estimation of pure partition functions through the cascade relation: an
//! SLE_κ is run along one link and the sub-pattern functions are evaluated on the two
//! complementary components.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{is_increasing, MobiusMap};
use crate::link_patterns::LinkPattern;
use crate::loewner::{path_rng, run, target_change_driver, RunConfig, StopReason};
use crate::partition_fn::{bound_b_alpha, h_exponent, pure_z_closed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    /// Completion tolerance on g_t(x_b) − W_t, relative to |x_b − x_a|.
    pub epsilon_target: f64,
    pub seed: u64,
    pub max_recursion_depth: usize,
    /// Paths per nested estimate when a sub-pattern has N ≥ 3.
    pub inner_paths: usize,
}

impl McConfig {
    pub fn new(n_paths: usize, dt: f64, epsilon_target: f64, seed: u64) -> Self {
        Self { n_paths, dt, epsilon_target, seed, max_recursion_depth: 4, inner_paths: 200 }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths < 2 || !(self.dt > 0.0) || !(self.epsilon_target > 0.0) {
            return Err(Error::Param("Monte Carlo configuration needs n ≥ 2, dt > 0, ε > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
        } else {
            0.0
        };
        Self { mean, stderr: (var / n as f64).sqrt(), n }
    }

    /// (mean − target)/stderr; zero when both the error and the deviation vanish.
    pub fn zscore(&self, target: f64) -> f64 {
        let d = self.mean - target;
        if self.stderr == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY * d.signum()
            }
        } else {
            d / self.stderr
        }
    }

    /// z-score between two independent estimates.
    pub fn zscore_between(&self, other: &Self) -> f64 {
        let se = (self.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        let d = self.mean - other.mean;
        if se == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / se
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeEstimate {
    pub estimate: McEstimate,
    /// Paths on which a marked point was swallowed before completion.
    pub rejected: usize,
    /// Paths that hit the capacity horizon or step budget without completing.
    pub incomplete: usize,
}

/// Z_α(H; xs), closed form for N ≤ 2 and a nested cascade estimate above.
fn sub_z(kappa: f64, alpha: &LinkPattern, xs: &[f64], cfg: &McConfig, depth: usize, stream: u64) -> Result<f64> {
    if alpha.n() <= 2 {
        return pure_z_closed(kappa, alpha, xs);
    }
    if depth >= cfg.max_recursion_depth {
        return Err(Error::Capacity(format!("recursion depth {depth} exceeded")));
    }
    let mut inner = cfg.clone();
    inner.n_paths = cfg.inner_paths;
    inner.seed = cfg.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    Ok(estimate_inner(kappa, alpha, xs, 0, &inner, depth + 1)?.estimate.mean)
}

/// One cascade sample along link `k`; `None` when the path is rejected.
fn cascade_sample(
    kappa: f64,
    alpha: &LinkPattern,
    xs: &[f64],
    k: usize,
    cfg: &McConfig,
    depth: usize,
    stream: u64,
) -> Result<(Option<f64>, bool)> {
    let (a, b) = alpha.links()[k];
    let n2 = xs.len();
    let (xa, xb) = (xs[a - 1], xs[b - 1]);
    let h = h_exponent(kappa);
    let inner: Vec<usize> = (a + 1..b).collect();
    let outer: Vec<usize> = (b + 1..=n2).chain(1..a).collect();
    let others: Vec<f64> = inner.iter().chain(&outer).map(|&i| xs[i - 1]).collect();
    let spec = target_change_driver(kappa, xa, xb)?.with_marked(&others);
    let scale = (xb - xa).abs();
    let mut rc = RunConfig::new(cfg.dt * scale * scale, 1e4 * scale * scale);
    rc.target = Some((0, cfg.epsilon_target * scale));
    rc.stop_on_swallow = true;
    rc.stop_on_threshold = false;
    rc.coarsen = Some(scale);
    rc.max_steps = 50_000_000;
    let mut rng = path_rng(cfg.seed, stream);
    let out = run(&spec, &rc, &mut rng, |_| false)?;
    match out.reason {
        StopReason::Target => {}
        StopReason::Swallow => {
            if out.swallowed.iter().any(|&(lab, _)| lab != 0) {
                return Ok((None, false));
            }
        }
        _ => return Ok((None, true)),
    }
    let st = &out.state;
    let (alpha_r, alpha_l) = alpha.split(a, b)?;
    let mut ln = -2.0 * h * scale.ln();
    if !inner.is_empty() {
        let pts: Vec<f64> = (0..inner.len()).map(|i| st.tracked[1 + i].v).collect();
        if !is_increasing(&pts) {
            return Ok((None, false));
        }
        ln += h * (0..inner.len()).map(|i| st.tracked[1 + i].l).sum::<f64>();
        ln += sub_z(kappa, &alpha_r, &pts, cfg, depth, stream.wrapping_add(1))?.ln();
    }
    if !outer.is_empty() {
        let m = MobiusMap { p: 0.0, q: -1.0, r: 1.0, s: -st.w };
        let off = 1 + inner.len();
        let raw: Vec<f64> = (0..outer.len()).map(|i| st.tracked[off + i].v).collect();
        let pts: Vec<f64> = raw.iter().map(|&v| m.apply(v)).collect();
        if !is_increasing(&pts) {
            return Ok((None, false));
        }
        ln += h * (0..outer.len()).map(|i| st.tracked[off + i].l).sum::<f64>();
        ln += h * raw.iter().map(|&v| m.deriv(v).ln()).sum::<f64>();
        ln += sub_z(kappa, &alpha_l, &pts, cfg, depth, stream.wrapping_add(2))?.ln();
    }
    Ok((Some(ln.exp()), false))
}

fn estimate_inner(
    kappa: f64,
    alpha: &LinkPattern,
    xs: &[f64],
    k: usize,
    cfg: &McConfig,
    depth: usize,
) -> Result<CascadeEstimate> {
    if alpha.n() == 0 {
        return Ok(CascadeEstimate {
            estimate: McEstimate { mean: 1.0, stderr: 0.0, n: cfg.n_paths },
            rejected: 0,
            incomplete: 0,
        });
    }
    let (a, b) = alpha.links()[k];
    if alpha.n() == 1 {
        let v = pure_z_closed(kappa, alpha, &[xs[a - 1], xs[b - 1]])?;
        return Ok(CascadeEstimate {
            estimate: McEstimate { mean: v, stderr: 0.0, n: cfg.n_paths },
            rejected: 0,
            incomplete: 0,
        });
    }
    let base = (k as u64) << 40;
    let results: Vec<(Option<f64>, bool)> = if depth == 0 {
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| cascade_sample(kappa, alpha, xs, k, cfg, depth, base | (i << 2)))
            .collect::<Result<_>>()?
    } else {
        (0..cfg.n_paths as u64)
            .map(|i| cascade_sample(kappa, alpha, xs, k, cfg, depth, base | (i << 2)))
            .collect::<Result<_>>()?
    };
    let rejected = results.iter().filter(|(v, inc)| v.is_none() && !inc).count();
    let incomplete = results.iter().filter(|(_, inc)| *inc).count();
    let samples: Vec<f64> = results
        .iter()
        .filter(|(_, inc)| !inc)
        .map(|(v, _)| v.unwrap_or(0.0))
        .collect();
    if samples.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate(format!("all {} samples rejected", cfg.n_paths)));
    }
    Ok(CascadeEstimate { estimate: McEstimate::from_samples(&samples), rejected, incomplete })
}

/// H(x_a, x_b)^h · E[Z_{α_R}(D_R) Z_{α_L}(D_L) 1_{E_k}] along the k-th link (0-based index
/// into `alpha.links()`).
pub fn estimate_pure_z(kappa: f64, alpha: &LinkPattern, points: &[f64], k: usize, cfg: &McConfig) -> Result<CascadeEstimate> {
    cfg.validate()?;
    if !(kappa > 0.0 && kappa <= 6.0) {
        return Err(Error::Param(format!("cascade needs kappa in (0, 6], got {kappa}")));
    }
    if points.len() != 2 * alpha.n() || !is_increasing(points) {
        return Err(Error::Order);
    }
    if alpha.n() > 0 && k >= alpha.n() {
        return Err(Error::Param(format!("link index {k} out of range")));
    }
    estimate_inner(kappa, alpha, points, k, cfg, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub rows: Vec<(usize, CascadeEstimate)>,
    /// (k1, k2, z) for every pair of links.
    pub zscores: Vec<(usize, usize, f64)>,
    pub bound: f64,
}

impl SymmetryReport {
    pub fn max_abs_z(&self) -> f64 {
        self.zscores.iter().map(|z| z.2.abs()).fold(0.0, f64::max)
    }

    /// Every estimate is at most B_α·(1 + 3·relative stderr).
    pub fn respects_bound(&self) -> bool {
        self.rows.iter().all(|(_, e)| {
            let m = e.estimate.mean;
            let rel = if m > 0.0 { e.estimate.stderr / m } else { 0.0 };
            m <= self.bound * (1.0 + 3.0 * rel)
        })
    }
}

/// One estimate per link with a shared base seed and disjoint sub-streams.
pub fn symmetry_report(kappa: f64, alpha: &LinkPattern, points: &[f64], cfg: &McConfig) -> Result<SymmetryReport> {
    let mut rows = Vec::new();
    for k in 0..alpha.n().max(1) {
        rows.push((k, estimate_pure_z(kappa, alpha, points, k, cfg)?));
    }
    let mut zscores = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            zscores.push((i, j, rows[i].1.estimate.zscore_between(&rows[j].1.estimate)));
        }
    }
    Ok(SymmetryReport { rows, zscores, bound: bound_b_alpha(kappa, alpha, points)? })
}
