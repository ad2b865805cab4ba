//! Chordal Loewner chains: SLE_κ, SLE_κ(ρ) and hSLE_κ(ν) drivers, tracked boundary
//! points with their log-derivatives, and slit-map trace reconstruction.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SWALLOW_EPS;
use crate::special_fn::{F_hsle, F_prime, Params};

/// Per-path generator: stream `index` of the ChaCha8 generator keyed by `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tracked {
    pub label: usize,
    /// Image g_t(x).
    pub v: f64,
    /// ln g_t'(x).
    pub l: f64,
    pub swallowed: bool,
    /// +1 for points right of the seed, −1 for points left of it.
    pub side: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoewnerState {
    pub t: f64,
    pub w: f64,
    pub tracked: Vec<Tracked>,
}

impl LoewnerState {
    /// Identity map at time 0 with the seed at `w0`; points get labels 0, 1, ...
    pub fn new(w0: f64, xs: &[f64]) -> Self {
        let tracked = xs
            .iter()
            .enumerate()
            .map(|(label, &x)| Tracked {
                label,
                v: x,
                l: 0.0,
                swallowed: false,
                side: if x >= w0 { 1.0 } else { -1.0 },
            })
            .collect();
        Self { t: 0.0, w: w0, tracked }
    }

    /// State from (label, image, log-derivative) triples.
    pub fn from_raw(t: f64, w: f64, pts: Vec<(usize, f64, f64)>) -> Self {
        let tracked = pts
            .into_iter()
            .map(|(label, v, l)| Tracked {
                label,
                v,
                l,
                swallowed: false,
                side: if v >= w { 1.0 } else { -1.0 },
            })
            .collect();
        Self { t, w, tracked }
    }

    pub fn point(&self, label: usize) -> Result<&Tracked> {
        self.tracked
            .iter()
            .find(|p| p.label == label)
            .ok_or_else(|| Error::Param(format!("no tracked point with label {label}")))
    }

    /// Smallest |V − W| over unswallowed points.
    pub fn min_gap(&self) -> f64 {
        self.tracked
            .iter()
            .filter(|p| !p.swallowed)
            .map(|p| (p.v - self.w).abs())
            .fold(f64::INFINITY, f64::min)
    }

    fn mark_swallowed(&mut self, eps: f64, newly: &mut Vec<usize>) {
        let w = self.w;
        for p in self.tracked.iter_mut() {
            if p.swallowed {
                if p.side * (p.v - w) < 0.0 {
                    p.v = w;
                }
            } else if p.side * (p.v - w) < eps {
                p.swallowed = true;
                p.v = w;
                newly.push(p.label);
            }
        }
    }
}

/// One explicit Euler step of the Loewner flow with the driver frozen at its old value.
/// Returns labels swallowed during the step.
pub fn step(state: &mut LoewnerState, drift: f64, dw: f64, dt: f64) -> Vec<usize> {
    let w = state.w;
    for p in state.tracked.iter_mut() {
        let u = p.v - w;
        if u == 0.0 {
            continue;
        }
        p.v += 2.0 * dt / u;
        if !p.swallowed {
            p.l -= 2.0 * dt / (u * u);
        }
    }
    state.w += drift * dt + dw;
    state.t += dt;
    let mut newly = Vec::new();
    state.mark_swallowed(SWALLOW_EPS, &mut newly);
    newly
}

/// Exact flow of the Loewner equation over dt with the driver frozen at its old value:
/// (V − W)^2 grows by 4dt. Returns labels swallowed during the step.
pub fn slit_step(state: &mut LoewnerState, drift: f64, dw: f64, dt: f64, eps: f64) -> Vec<usize> {
    let mut newly = Vec::new();
    slit_step_into(state, drift, dw, dt, eps, &mut newly);
    newly
}

fn slit_step_into(state: &mut LoewnerState, drift: f64, dw: f64, dt: f64, eps: f64, newly: &mut Vec<usize>) {
    let w = state.w;
    for p in state.tracked.iter_mut() {
        let u = p.v - w;
        let r = (u * u + 4.0 * dt).sqrt();
        let s = if u == 0.0 { p.side } else { u.signum() };
        if !p.swallowed {
            p.l += (u.abs() / r).ln();
        }
        p.v = w + s * r;
    }
    state.w += drift * dt + dw;
    state.t += dt;
    state.mark_swallowed(eps, newly);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcePoint {
    pub x: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Driver {
    /// √κ B.
    Bm,
    /// √κ B plus Σ ρ_i/(W − V_i) dt.
    SleRho,
    /// hSLE_κ(ν) with marked points x = points[0], y = points[1].
    Hsle(Params),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverSpec {
    pub kappa: f64,
    pub w0: f64,
    pub driver: Driver,
    /// Tracked boundary points; ρ is ignored for the Brownian and hSLE drivers.
    pub points: Vec<ForcePoint>,
}

impl DriverSpec {
    pub fn bm(kappa: f64) -> Self {
        Self { kappa, w0: 0.0, driver: Driver::Bm, points: Vec::new() }
    }

    pub fn sle_rho(kappa: f64, w0: f64, points: Vec<ForcePoint>) -> Self {
        Self { kappa, w0, driver: Driver::SleRho, points }
    }

    /// hSLE_κ(ν) from 0 to ∞ with marked points 0 < x < y.
    pub fn hsle(params: Params, x: f64, y: f64) -> Result<Self> {
        if !(0.0 < x && x < y) {
            return Err(Error::Param(format!("hSLE needs 0 < x < y, got x = {x}, y = {y}")));
        }
        Ok(Self {
            kappa: params.kappa,
            w0: 0.0,
            driver: Driver::Hsle(params),
            points: vec![ForcePoint { x, rho: 0.0 }, ForcePoint { x: y, rho: 0.0 }],
        })
    }

    /// Adds passive tracked points (ρ = 0).
    pub fn with_marked(mut self, xs: &[f64]) -> Self {
        self.points.extend(xs.iter().map(|&x| ForcePoint { x, rho: 0.0 }));
        self
    }

    pub fn initial_state(&self) -> LoewnerState {
        let xs: Vec<f64> = self.points.iter().map(|p| p.x).collect();
        LoewnerState::new(self.w0, &xs)
    }

    pub fn name(&self) -> &'static str {
        match self.driver {
            Driver::Bm => "bm",
            Driver::SleRho => "sle-rho",
            Driver::Hsle(_) => "hsle",
        }
    }
}

/// Chordal SLE_κ from x_a aimed at x_b, as SLE_κ(κ − 6) toward ∞ with force point x_b.
pub fn target_change_driver(kappa: f64, xa: f64, xb: f64) -> Result<DriverSpec> {
    if xa == xb {
        return Err(Error::Param("target must differ from the seed".into()));
    }
    Ok(DriverSpec::sle_rho(kappa, xa, vec![ForcePoint { x: xb, rho: kappa - 6.0 }]))
}

/// Σ ρ_i/(W − V_i); points sitting on the driver are skipped.
pub fn drift_sle_rho(state: &LoewnerState, spec: &DriverSpec) -> f64 {
    let mut d = 0.0;
    for (p, f) in state.tracked.iter().zip(&spec.points) {
        if f.rho == 0.0 {
            continue;
        }
        let u = state.w - p.v;
        if u != 0.0 {
            d += f.rho / u;
        }
    }
    d
}

/// Cross-ratio Z = (Vx − W)/(Vy − W) of an hSLE state.
pub fn hsle_z(state: &LoewnerState) -> f64 {
    let (vx, vy) = (state.tracked[0].v, state.tracked[1].v);
    (vx - state.w) / (vy - state.w)
}

/// hSLE drift (ν+2)/(W−Vx) − (ν+2)/(W−Vy) − κ (F'/F)(Z) (1−Z)/(Vy−W).
pub fn drift_hsle(state: &LoewnerState, params: &Params) -> Result<f64> {
    let (vx, vy) = (state.tracked[0].v, state.tracked[1].v);
    let w = state.w;
    let z = (vx - w) / (vy - w);
    if !(-1e-9..=1.0 + 1e-9).contains(&z) {
        return Err(Error::Invariant(format!("hSLE cross-ratio {z} outside [0,1]")));
    }
    let nu = params.nu;
    let mut d = (nu + 2.0) / (w - vx) - (nu + 2.0) / (w - vy);
    if params.nu != -2.0 && params.kappa != 4.0 {
        let zc = z.clamp(1e-300, 1.0 - 1e-15);
        let ratio = F_prime(params, zc)? / F_hsle(params, zc)?;
        d -= params.kappa * ratio * (1.0 - zc) / (vy - w);
    }
    Ok(d)
}

fn drift(state: &LoewnerState, spec: &DriverSpec) -> Result<f64> {
    match &spec.driver {
        Driver::Bm => Ok(0.0),
        Driver::SleRho => Ok(drift_sle_rho(state, spec)),
        Driver::Hsle(p) => drift_hsle(state, p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Half a step of exact flow, the driver increment, then the other half (default).
    Strang,
    /// Exact flow over the whole step with the driver frozen at its old value.
    Slit,
    /// Explicit Euler for images and log-derivatives.
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Horizon,
    Threshold,
    Swallow,
    Target,
    Predicate,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Swallowing tolerance on |V − W|.
    pub eps: f64,
    /// Stop once the target label's gap falls below the given tolerance.
    pub target: Option<(usize, f64)>,
    pub stop_on_swallow: bool,
    pub stop_on_threshold: bool,
    /// Length scale ℓ: macro steps grow as dt·(gap/ℓ)^2 once the smallest gap exceeds ℓ.
    pub coarsen: Option<f64>,
    pub record: bool,
    pub scheme: Scheme,
    pub max_steps: u64,
    /// Sub-steps shrink tenfold while gap^2 < refine·h.
    pub refine: f64,
}

impl RunConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            eps: SWALLOW_EPS,
            target: None,
            stop_on_swallow: false,
            stop_on_threshold: true,
            coarsen: None,
            record: false,
            scheme: Scheme::Strang,
            max_steps: 200_000_000,
            refine: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingPath {
    /// Capacity times, t[0] = 0.
    pub t: Vec<f64>,
    /// Driving values at those times.
    pub w: Vec<f64>,
    pub seed: u64,
    pub driver: String,
    pub stop: StopReason,
}

impl DrivingPath {
    /// Path from explicit samples on a uniform grid.
    pub fn uniform(dt: f64, w: Vec<f64>) -> Self {
        let t = (0..w.len()).map(|k| k as f64 * dt).collect();
        Self { t, w, seed: 0, driver: "given".into(), stop: StopReason::Horizon }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Driving value at time s, linear between samples and constant past the end.
    pub fn value_at(&self, s: f64) -> f64 {
        let k = self.t.partition_point(|&x| x <= s);
        if k == 0 {
            return self.w[0];
        }
        if k >= self.t.len() {
            return *self.w.last().unwrap();
        }
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let f = if t1 > t0 { (s - t0) / (t1 - t0) } else { 1.0 };
        self.w[k - 1] + f * (self.w[k] - self.w[k - 1])
    }

    pub fn final_time(&self) -> f64 {
        *self.t.last().unwrap_or(&0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub state: LoewnerState,
    /// State just before the final step.
    pub prev: LoewnerState,
    pub reason: StopReason,
    /// (label, time) in swallowing order.
    pub swallowed: Vec<(usize, f64)>,
    pub path: Option<DrivingPath>,
    pub steps: u64,
}

fn translate(state: &mut LoewnerState, c: f64) {
    state.w += c;
    for p in state.tracked.iter_mut() {
        p.v += c;
    }
}

/// Moves the driving value to 0 and returns the offset removed.
fn recentre(state: &mut LoewnerState) -> f64 {
    let c = state.w;
    translate(state, -c);
    c
}

fn advance(
    state: &mut LoewnerState,
    spec: &DriverSpec,
    scheme: Scheme,
    dw: f64,
    h: f64,
    eps: f64,
    newly: &mut Vec<usize>,
) -> Result<()> {
    match scheme {
        Scheme::Slit => {
            let d = drift(state, spec)?;
            slit_step_into(state, d, dw, h, eps, newly);
        }
        Scheme::Strang => {
            slit_step_into(state, 0.0, 0.0, 0.5 * h, eps, newly);
            let d = drift(state, spec)?;
            state.w += d * h + dw;
            state.mark_swallowed(eps, newly);
            slit_step_into(state, 0.0, 0.0, 0.5 * h, eps, newly);
        }
        Scheme::Euler => {
            let d = drift(state, spec)?;
            let w = state.w;
            for p in state.tracked.iter_mut() {
                let u = p.v - w;
                if u != 0.0 {
                    p.v += 2.0 * h / u;
                    if !p.swallowed {
                        p.l -= 2.0 * h / (u * u);
                    }
                }
            }
            state.w += d * h + dw;
            state.t += h;
            state.mark_swallowed(eps, newly);
        }
    }
    Ok(())
}

/// Runs the chain with adaptive sub-stepping until a stopping rule or `stop(state)` fires.
///
/// Internally the chain is translated so that W = 0 before every sub-step, which keeps
/// clustered images resolvable at large |W|; `stop` sees these centred states, while the
/// returned states and path are in the original frame.
pub fn run<R, F>(spec: &DriverSpec, cfg: &RunConfig, rng: &mut R, mut stop: F) -> Result<RunOutcome>
where
    R: rand::Rng + ?Sized,
    F: FnMut(&LoewnerState) -> bool,
{
    let sqk = spec.kappa.sqrt();
    let mut state = spec.initial_state();
    let mut prev = state.clone();
    let mut swallowed = Vec::new();
    let mut newly = Vec::new();
    let mut pending: Vec<(f64, f64)> = Vec::new();
    let mut rec_t = Vec::new();
    let mut rec_w = Vec::new();
    if cfg.record {
        rec_t.push(0.0);
        rec_w.push(state.w);
    }
    let dt_floor = (cfg.eps * cfg.eps / 100.0).max(1e-300);
    let mut steps = 0u64;
    let mut shift = 0.0;
    let reason = 'outer: loop {
        if state.t >= cfg.horizon * (1.0 - 1e-12) {
            break StopReason::Horizon;
        }
        let gap = state.min_gap();
        let mut macro_dt = cfg.dt;
        if let Some(ell) = cfg.coarsen {
            if gap.is_finite() && gap > ell {
                macro_dt *= (gap / ell).powi(2);
            }
        }
        macro_dt = macro_dt.min(cfg.horizon - state.t);
        let mut remaining = macro_dt;
        while remaining > 0.0 {
            let g = state.min_gap();
            let mut h = remaining;
            while g * g < cfg.refine * h && h > dt_floor {
                h /= 10.0;
            }
            if remaining - h < 1e-3 * h {
                h = remaining;
            }
            let n: f64 = StandardNormal.sample(rng);
            pending.clear();
            pending.push((h, sqk * h.sqrt() * n));
            remaining -= h;
            while let Some((hh, dw)) = pending.pop() {
                shift += recentre(&mut state);
                prev.clone_from(&state);
                newly.clear();
                advance(&mut state, spec, cfg.scheme, dw, hh, cfg.eps, &mut newly)?;
                steps += 1;
                if !newly.is_empty() && hh > dt_floor {
                    // Resolve the collision on a Brownian bridge between the two endpoints.
                    state.clone_from(&prev);
                    let n: f64 = StandardNormal.sample(rng);
                    let mid = 0.5 * dw + 0.5 * sqk * hh.sqrt() * n;
                    pending.push((0.5 * hh, dw - mid));
                    pending.push((0.5 * hh, mid));
                    continue;
                }
                if !newly.is_empty() {
                    for &lab in &newly {
                        swallowed.push((lab, state.t));
                    }
                    if cfg.stop_on_swallow {
                        break 'outer StopReason::Swallow;
                    }
                    if cfg.stop_on_threshold && threshold_reached(&state, spec, &newly) {
                        break 'outer StopReason::Threshold;
                    }
                }
            }
            if let Some((lab, tol)) = cfg.target {
                let p = state.point(lab)?;
                if p.swallowed || (p.v - state.w).abs() < tol {
                    break 'outer StopReason::Target;
                }
            }
            if stop(&state) {
                break 'outer StopReason::Predicate;
            }
            if steps >= cfg.max_steps {
                break 'outer StopReason::MaxSteps;
            }
        }
        if cfg.record {
            rec_t.push(state.t);
            rec_w.push(state.w + shift);
        }
    };
    if cfg.record && rec_t.last() != Some(&state.t) {
        rec_t.push(state.t);
        rec_w.push(state.w + shift);
    }
    translate(&mut state, shift);
    translate(&mut prev, shift);
    let path = cfg.record.then(|| DrivingPath {
        t: rec_t,
        w: rec_w,
        seed: 0,
        driver: spec.name().into(),
        stop: reason,
    });
    Ok(RunOutcome { state, prev, reason, swallowed, path, steps })
}

/// Continuation threshold: the ρ-weights of all swallowed points on the side of a new
/// collision sum to at most −2.
pub fn threshold_reached(state: &LoewnerState, spec: &DriverSpec, newly: &[usize]) -> bool {
    if !matches!(spec.driver, Driver::SleRho) {
        return false;
    }
    for side in [-1.0, 1.0] {
        let hit = newly.iter().any(|&lab| state.tracked[lab].side == side);
        if !hit {
            continue;
        }
        let total: f64 = state
            .tracked
            .iter()
            .zip(&spec.points)
            .filter(|(p, _)| p.swallowed && p.side == side)
            .map(|(_, f)| f.rho)
            .sum();
        if total <= -2.0 {
            return true;
        }
    }
    false
}

/// Driving path of capacity horizon T sampled with the given seed.
pub fn sample_path(spec: &DriverSpec, horizon: f64, dt: f64, seed: u64) -> Result<DrivingPath> {
    sample_path_stream(spec, horizon, dt, seed, 0)
}

/// As [`sample_path`], on stream `index` of the seed.
pub fn sample_path_stream(spec: &DriverSpec, horizon: f64, dt: f64, seed: u64, index: u64) -> Result<DrivingPath> {
    let mut cfg = RunConfig::new(dt, horizon);
    cfg.record = true;
    let mut rng = path_rng(seed, index);
    let out = run(spec, &cfg, &mut rng, |_| false)?;
    let mut path = out.path.expect("recording was requested");
    path.seed = seed;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub t: Vec<f64>,
    pub points: Vec<Complex64>,
}

/// Root of sqrt(q) in the closed upper half-plane; on the real axis the sign follows `side`.
fn upper_sqrt(q: Complex64, side: f64) -> Complex64 {
    let mut r = q.sqrt();
    if r.im < 0.0 || (r.im == 0.0 && r.re * side < 0.0) {
        r = -r;
    }
    r
}

/// Trace by backward composition of vertical-slit inverses; step k uses the driving value
/// at its right endpoint. Every `stride`-th point is reconstructed.
pub fn trace_from_path_strided(path: &DrivingPath, stride: usize) -> Trace {
    let stride = stride.max(1);
    let n = path.len();
    let mut t = Vec::new();
    let mut points = Vec::new();
    if n == 0 {
        return Trace { t, points };
    }
    let mut ks: Vec<usize> = (0..n).step_by(stride).collect();
    if *ks.last().unwrap() != n - 1 {
        ks.push(n - 1);
    }
    for k in ks {
        let mut z = Complex64::new(path.w[k], 0.0);
        for j in (1..=k).rev() {
            let dt = path.t[j] - path.t[j - 1];
            let wj = path.w[j];
            let u = z - wj;
            z = wj + upper_sqrt(u * u - 4.0 * dt, u.re.signum());
        }
        t.push(path.t[k]);
        points.push(z);
    }
    Trace { t, points }
}

pub fn trace_from_path(path: &DrivingPath) -> Trace {
    trace_from_path_strided(path, 1)
}

/// Zipper: driving function of a curve given by points[0] (on the real axis), points[1..]
/// in the closed upper half-plane. Each point is unzipped by a vertical slit.
/// Returns the path and the number of skipped zero-capacity steps.
pub fn driving_from_trace(points: &[Complex64]) -> (DrivingPath, usize) {
    let mut t = vec![0.0];
    let w0 = points.first().map(|p| p.re).unwrap_or(0.0);
    let mut w = vec![w0];
    let mut maps: Vec<(f64, f64)> = Vec::new();
    let mut skipped = 0;
    for &p in points.iter().skip(1) {
        let mut z = p;
        for &(wj, dtj) in &maps {
            let u = z - wj;
            z = wj + upper_sqrt(u * u + 4.0 * dtj, u.re.signum());
        }
        let dt = z.im.max(0.0).powi(2) / 4.0;
        if dt <= 0.0 {
            skipped += 1;
            continue;
        }
        maps.push((z.re, dt));
        t.push(t.last().unwrap() + dt);
        w.push(z.re);
    }
    (
        DrivingPath { t, w, seed: 0, driver: "zipper".into(), stop: StopReason::Horizon },
        skipped,
    )
}
