//! Monte Carlo experiments for the explicit hitting probabilities and martingales of
//! SLE_4(ρ) and hSLE.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{McConfig, McEstimate};
use crate::error::{Error, Result};
use crate::geometry::{cross_ratio, is_increasing, normalize_to_halfplane, MarkedPoints};
use crate::loewner::{path_rng, run, DriverSpec, ForcePoint, LoewnerState, RunConfig, StopReason};
use crate::partition_fn::avoid_probability;
use crate::special_fn::{hyp2f1_at_one, F_hsle, Params};

/// Largest tolerated fraction of unclassified κ = 4 runs.
pub const MAX_UNCLASSIFIED: f64 = 0.05;

/// Capacity horizon in units of (x4 − x1)^2.
pub const HORIZON_FACTOR: f64 = 50.0;

/// Swallowing tolerance for avoidance runs. Near x the gap is a Bessel process of
/// dimension above 2, which comes within ε of zero with probability of order ε^{d−2}.
pub const AVOID_EPS: f64 = 1e-12;

/// Closeness of Z to one at which an hSLE state counts as transient.
pub const POISSON_STOP: f64 = 1e-3;

fn check_cfg(cfg: &McConfig) -> Result<()> {
    if cfg.n_paths < 2 || !(cfg.dt > 0.0) {
        return Err(Error::Param("need n ≥ 2 paths and dt > 0".into()));
    }
    Ok(())
}

fn check4(x: &[f64]) -> Result<()> {
    if x.len() != 4 {
        return Err(Error::Param(format!("expected 4 points, got {}", x.len())));
    }
    if !is_increasing(x) {
        return Err(Error::Order);
    }
    Ok(())
}

/// Exponent α = −(ν+2)/2 of the κ = 4 crossing formula.
pub fn crossing_exponent(nu: f64) -> f64 {
    -(nu + 2.0) / 2.0
}

/// SLE_4(ν+2, −ν−2) from x1 with force points x2, x3, aimed at x4.
pub fn kappa4_driver(nu: f64, x: &[f64]) -> Result<DriverSpec> {
    check4(x)?;
    if nu > -4.0 {
        return Err(Error::Param(format!("crossing experiments need nu ≤ −4, got {nu}")));
    }
    Ok(DriverSpec::sle_rho(
        4.0,
        x[0],
        vec![
            ForcePoint { x: x[1], rho: nu + 2.0 },
            ForcePoint { x: x[2], rho: -nu - 2.0 },
            ForcePoint { x: x[3], rho: -2.0 },
        ],
    ))
}

/// z_t = (V2−W)(V4−V3)/((V3−W)(V4−V2)); tends to 0 at x2 and to 1 at x4. A cluster
/// V2 = V3 = V4 that has collapsed below floating-point resolution counts as 1.
pub fn kappa4_z(state: &LoewnerState) -> f64 {
    let (v2, v3, v4) = (state.tracked[0].v, state.tracked[1].v, state.tracked[2].v);
    let w = state.w;
    if v4 == v2 {
        return 1.0;
    }
    ((v2 - w) * (v4 - v3) / ((v3 - w) * (v4 - v2))).clamp(0.0, 1.0)
}

/// Sub-step refinement for the κ = 4 runs. Near a force point with ρ = −2 the gap is a
/// driftless martingale and the splitting error accumulates per decade of scale.
pub const KAPPA4_REFINE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endpoint {
    X2,
    X4,
    Unclassified,
}

fn kappa4_run_config(x: &[f64], cfg: &McConfig, horizon: f64) -> RunConfig {
    let scale = x[3] - x[0];
    let mut rc = RunConfig::new(cfg.dt * scale * scale, horizon);
    rc.stop_on_swallow = true;
    rc.refine = KAPPA4_REFINE;
    rc
}

/// Terminal classification and the value of z at the stopping time.
fn kappa4_endpoint(spec: &DriverSpec, rc: &RunConfig, seed: u64, i: u64) -> Result<(Endpoint, f64)> {
    let mut rng = path_rng(seed, i);
    let out = run(spec, rc, &mut rng, |_| false)?;
    Ok(match out.reason {
        StopReason::Swallow | StopReason::Threshold => {
            let z = kappa4_z(&out.prev);
            (if z < 0.5 { Endpoint::X2 } else { Endpoint::X4 }, z)
        }
        _ => (Endpoint::Unclassified, kappa4_z(&out.state)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointEstimate {
    /// Frequency of ending at x4 among classified runs.
    pub estimate: McEstimate,
    pub unclassified: usize,
    /// Classified runs whose z was still inside (0.05, 0.95) when they stopped.
    pub ambiguous: usize,
    /// E[z_τ^α] over all runs; the conditional probability of x4 at the stopping time.
    pub conditional: McEstimate,
    pub target: f64,
}

/// P[η(T) = x4] for SLE_4(ν+2, −ν−2) run to the continuation threshold.
pub fn terminal_endpoint_kappa4(nu: f64, x: &[f64], cfg: &McConfig) -> Result<EndpointEstimate> {
    check_cfg(cfg)?;
    let spec = kappa4_driver(nu, x)?;
    let rc = kappa4_run_config(x, cfg, HORIZON_FACTOR * (x[3] - x[0]).powi(2));
    let ends: Vec<(Endpoint, f64)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| kappa4_endpoint(&spec, &rc, cfg.seed, i))
        .collect::<Result<_>>()?;
    let unclassified = ends.iter().filter(|e| e.0 == Endpoint::Unclassified).count();
    if unclassified as f64 > MAX_UNCLASSIFIED * cfg.n_paths as f64 {
        return Err(Error::Degenerate(format!(
            "{unclassified} of {} runs reached neither endpoint",
            cfg.n_paths
        )));
    }
    let alpha = crossing_exponent(nu);
    let ambiguous = ends
        .iter()
        .filter(|e| e.0 != Endpoint::Unclassified && e.1 > 0.05 && e.1 < 0.95)
        .count();
    let conditional: Vec<f64> = ends.iter().map(|e| e.1.powf(alpha)).collect();
    let samples: Vec<f64> = ends
        .iter()
        .filter_map(|e| match e.0 {
            Endpoint::X2 => Some(0.0),
            Endpoint::X4 => Some(1.0),
            Endpoint::Unclassified => None,
        })
        .collect();
    let z = cross_ratio(x[0], x[1], x[2], x[3])?;
    Ok(EndpointEstimate {
        estimate: McEstimate::from_samples(&samples),
        unclassified,
        ambiguous,
        conditional: McEstimate::from_samples(&conditional),
        target: z.powf(alpha),
    })
}

/// E[M_{t ∧ τ}] for M_t = z_t^α; returns the estimate and M_0.
pub fn martingale_check_kappa4(nu: f64, x: &[f64], cfg: &McConfig, t_check: f64) -> Result<(McEstimate, f64)> {
    check_cfg(cfg)?;
    let spec = kappa4_driver(nu, x)?;
    let alpha = crossing_exponent(nu);
    let m0 = cross_ratio(x[0], x[1], x[2], x[3])?.powf(alpha);
    if t_check <= 0.0 {
        return Ok((McEstimate { mean: m0, stderr: 0.0, n: cfg.n_paths }, m0));
    }
    let rc = kappa4_run_config(x, cfg, t_check);
    let samples: Vec<f64> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.seed, i);
            let out = run(&spec, &rc, &mut rng, |_| false)?;
            Ok(match out.reason {
                StopReason::Swallow | StopReason::Threshold => kappa4_z(&out.prev).powf(alpha),
                _ => kappa4_z(&out.state).powf(alpha),
            })
        })
        .collect::<Result<_>>()?;
    Ok((McEstimate::from_samples(&samples), m0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidEstimate {
    pub estimate: McEstimate,
    /// Closed-form value.
    pub target: f64,
    /// Runs that reached the horizon before x2 was swallowed; these contribute the
    /// conditional avoidance probability of their final state.
    pub at_horizon: usize,
}

/// Frequency with which hSLE_κ(ν) in (x1, x4) avoids (x2, x3).
///
/// The quad is sent to (0, x, y = 1, ∞). A run ends when x is swallowed; the interval was
/// avoided if the hull enclosed it, which shows as Z = (Vx−W)/(Vy−W) ≥ 1/2 just before.
/// Runs still open at the horizon score the closed-form probability from their state.
pub fn avoid_probability_mc(params: &Params, x: &[f64], cfg: &McConfig) -> Result<AvoidEstimate> {
    check_cfg(cfg)?;
    check4(x)?;
    let target = avoid_probability(params, x)?;
    let (_, y) = normalize_to_halfplane(x, [0, 2, 3])?;
    let spec = DriverSpec::hsle(*params, y[1], 1.0)?;
    let mut rc = RunConfig::new(cfg.dt, HORIZON_FACTOR * 1e4);
    rc.eps = AVOID_EPS;
    rc.stop_on_swallow = true;
    rc.coarsen = Some(1.0);
    let outcomes: Vec<(f64, bool)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.seed, i);
            let out = run(&spec, &rc, &mut rng, |_| false)?;
            Ok(match out.reason {
                StopReason::Swallow => {
                    let z = crate::loewner::hsle_z(&out.prev);
                    ((z >= 0.5) as u8 as f64, false)
                }
                _ => {
                    // The remaining curve is hSLE in (W, Vx, Vy, ∞); (0, 2Z/(1+Z), 1, 2) has the
                    // same cross-ratio.
                    let z = crate::loewner::hsle_z(&out.state).clamp(1e-15, 1.0 - 1e-15);
                    (avoid_probability(params, &[0.0, 2.0 * z / (1.0 + z), 1.0, 2.0])?, true)
                }
            })
        })
        .collect::<Result<_>>()?;
    let samples: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    Ok(AvoidEstimate {
        estimate: McEstimate::from_samples(&samples),
        target,
        at_horizon: outcomes.iter().filter(|o| o.1).count(),
    })
}

/// M_0 = z^a (y−x)^{−2b} F(z) for SLE_κ from 0 with marked points 0 < x < y, z = x/y.
pub fn poisson_m0(params: &Params, x: f64, y: f64) -> Result<f64> {
    if !(0.0 < x && x < y) {
        return Err(Error::Order);
    }
    let z = x / y;
    Ok(z.powf(params.a) * (y - x).powf(-2.0 * params.b) * F_hsle(params, z)?)
}

/// F(1) of the hSLE function; the terminal value of M is F(1)·H_D(x,y)^b.
pub fn f_at_one(params: &Params) -> Result<f64> {
    if params.low_nu() {
        return F_hsle(params, 1.0);
    }
    hyp2f1_at_one(params.f_params())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonEstimate {
    /// E[H_D(x,y)^b 1{η ∩ (x,y) = ∅}], with H_D read off at the stopping time.
    pub kernel: McEstimate,
    /// E[M_τ] for the stopped martingale.
    pub stopped: McEstimate,
    /// M_0.
    pub target: f64,
    pub f_one: f64,
    /// Runs stopped by the horizon rather than by Z reaching 1 − POISSON_STOP.
    pub short: usize,
}

impl PoissonEstimate {
    /// Literal comparison of E[H^b] with M_0.
    pub fn literal_zscore(&self) -> f64 {
        self.kernel.zscore(self.target)
    }
}

/// Samples SLE_κ from 0 to ∞ and averages H_D(x,y)^b and the stopped martingale
/// M_t = Z_t^a J_t^b F(Z_t), stopping once 1 − Z_t < POISSON_STOP.
pub fn poisson_martingale_identity(params: &Params, x: f64, y: f64, cfg: &McConfig) -> Result<PoissonEstimate> {
    check_cfg(cfg)?;
    if params.nu < params.kappa / 2.0 - 4.0 {
        return Err(Error::Param(format!(
            "nu = {} is below kappa/2 − 4 = {}",
            params.nu,
            params.kappa / 2.0 - 4.0
        )));
    }
    let target = poisson_m0(params, x, y)?;
    let f_one = f_at_one(params)?;
    if params.a == 0.0 && params.b == 0.0 {
        let one = McEstimate { mean: 1.0, stderr: 0.0, n: cfg.n_paths };
        return Ok(PoissonEstimate { kernel: one, stopped: one, target, f_one, short: 0 });
    }
    let spec = DriverSpec::bm(params.kappa).with_marked(&[x, y]);
    let ell = y - x;
    let horizon = 1e4 * (ell / POISSON_STOP).powi(2);
    let mut rc = RunConfig::new(cfg.dt * ell * ell, horizon);
    rc.coarsen = Some(ell);
    rc.stop_on_threshold = false;
    let samples: Vec<(f64, f64, bool)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.seed, i);
            let out = run(&spec, &rc, &mut rng, |s| {
                let (px, py) = (&s.tracked[0], &s.tracked[1]);
                px.swallowed || (py.v - px.v) < POISSON_STOP * (py.v - s.w)
            })?;
            let st = &out.state;
            let (px, py) = (&st.tracked[0], &st.tracked[1]);
            if px.swallowed || py.swallowed {
                return Ok((0.0, 0.0, false));
            }
            let ln_j = px.l + py.l - 2.0 * (py.v - px.v).ln();
            let j_b = (params.b * ln_j).exp();
            let z = (px.v - st.w) / (py.v - st.w);
            let m = z.powf(params.a) * j_b * F_hsle(params, z.clamp(0.0, 1.0))?;
            Ok((j_b, m, out.reason != StopReason::Predicate))
        })
        .collect::<Result<_>>()?;
    let kernel: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let stopped: Vec<f64> = samples.iter().map(|s| s.1).collect();
    Ok(PoissonEstimate {
        kernel: McEstimate::from_samples(&kernel),
        stopped: McEstimate::from_samples(&stopped),
        target,
        f_one,
        short: samples.iter().filter(|s| s.2).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TerminalEndpoint,
    MartingaleKappa4 { t_check: f64 },
    AvoidProbability,
    PoissonIdentity,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::TerminalEndpoint => "terminal-endpoint",
            Self::MartingaleKappa4 { .. } => "martingale-kappa4",
            Self::AvoidProbability => "avoid-probability",
            Self::PoissonIdentity => "poisson-identity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub params: Params,
    /// Four quad points for the κ = 4 and avoidance runs; (x, y) for the Poisson identity.
    pub points: MarkedPoints,
    pub mc: McConfig,
    /// Overrides the closed-form target.
    pub target: Option<f64>,
    /// Discretization allowance added to 3·stderr.
    pub allowance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub kappa: f64,
    pub nu: f64,
    pub points: Vec<f64>,
    pub estimate: f64,
    pub stderr: f64,
    pub target: f64,
    pub zscore: f64,
    pub n: usize,
    pub dt: f64,
    pub seed: u64,
    pub allowance: f64,
    /// Unclassified, horizon-stopped or otherwise flagged runs.
    pub flagged: usize,
}

impl ExperimentResult {
    pub fn passed(&self) -> bool {
        (self.estimate - self.target).abs() <= 3.0 * self.stderr + self.allowance
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let x = spec.points.as_slice();
    let p = &spec.params;
    let (est, target, flagged) = match spec.kind {
        ExperimentKind::TerminalEndpoint => {
            let e = terminal_endpoint_kappa4(p.nu, x, &spec.mc)?;
            (e.estimate, e.target, e.unclassified)
        }
        ExperimentKind::MartingaleKappa4 { t_check } => {
            let (e, m0) = martingale_check_kappa4(p.nu, x, &spec.mc, t_check)?;
            (e, m0, 0)
        }
        ExperimentKind::AvoidProbability => {
            let e = avoid_probability_mc(p, x, &spec.mc)?;
            (e.estimate, e.target, e.at_horizon)
        }
        ExperimentKind::PoissonIdentity => {
            if x.len() != 2 {
                return Err(Error::Param("the Poisson identity takes two points".into()));
            }
            let e = poisson_martingale_identity(p, x[0], x[1], &spec.mc)?;
            (e.kernel, e.target, e.short)
        }
    };
    let target = spec.target.unwrap_or(target);
    Ok(ExperimentResult {
        experiment: spec.kind.name().into(),
        kappa: p.kappa,
        nu: p.nu,
        points: x.to_vec(),
        estimate: est.mean,
        stderr: est.stderr,
        target,
        zscore: est.zscore(target),
        n: est.n,
        dt: spec.mc.dt,
        seed: spec.mc.seed,
        allowance: spec.allowance,
        flagged,
    })
}
