//! Critical Ising model on rectangles of the square lattice with mixed boundary arcs:
//! cluster samplers, interface tracing, crossing events and driving-function extraction.
//!
//! Spins live on the unit cells (x, y), 0 ≤ x < width, 0 ≤ y < height, surrounded by a ring
//! of boundary cells. Ring cells are numbered counterclockwise from the bottom-left corner
//! (−1, −1): bottom row left to right, right column upwards, top row right to left, left
//! column downwards. Junction m is the edge between ring cells m − 1 and m. Interfaces run
//! along cell edges, through the corners (i, j).

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MobiusMap;
use crate::loewner::{driving_from_trace, path_rng, DrivingPath};

/// ln(1 + √2)/2, the self-dual point of the square-lattice model.
pub const BETA_C: f64 = 0.440_686_793_509_771_6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bc {
    Plus,
    Minus,
    Free,
}

impl Bc {
    fn spin(self) -> i8 {
        match self {
            Bc::Plus => 1,
            Bc::Minus => -1,
            Bc::Free => 0,
        }
    }
}

impl FromStr for Bc {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plus" | "+" => Ok(Bc::Plus),
            "minus" | "-" => Ok(Bc::Minus),
            "free" | "0" => Ok(Bc::Free),
            other => Err(Error::Parse(format!("unknown boundary condition '{other}'"))),
        }
    }
}

impl fmt::Display for Bc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bc::Plus => "plus",
            Bc::Minus => "minus",
            Bc::Free => "free",
        })
    }
}

/// Ring cells start..end (exclusive, cyclic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryArc {
    pub start: usize,
    pub end: usize,
    pub bc: Bc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeDomain {
    pub width: usize,
    pub height: usize,
    pub arcs: Vec<BoundaryArc>,
    /// Marked junctions in counterclockwise order.
    pub marks: Vec<usize>,
    #[serde(skip)]
    ring_bc: Vec<Bc>,
}

impl LatticeDomain {
    pub fn new(width: usize, height: usize, arcs: Vec<BoundaryArc>, marks: Vec<usize>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Param("empty lattice".into()));
        }
        let n = ring_len(width, height);
        let mut ring_bc: Vec<Option<Bc>> = vec![None; n];
        for a in &arcs {
            if a.start >= n || a.end >= n {
                return Err(Error::Param(format!("arc {}..{} outside the ring of {n} cells", a.start, a.end)));
            }
            let mut i = a.start;
            loop {
                if ring_bc[i].is_some() {
                    return Err(Error::Invariant(format!("ring cell {i} covered twice")));
                }
                ring_bc[i] = Some(a.bc);
                i = (i + 1) % n;
                if i == a.end {
                    break;
                }
            }
        }
        let ring_bc: Vec<Bc> = ring_bc
            .into_iter()
            .enumerate()
            .map(|(i, b)| b.ok_or_else(|| Error::Invariant(format!("ring cell {i} not covered"))))
            .collect::<Result<_>>()?;
        for &m in &marks {
            if m >= n || !arcs.iter().any(|a| a.start == m) {
                return Err(Error::Invariant(format!("mark {m} is not an arc junction")));
            }
        }
        if marks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Order);
        }
        Ok(Self { width, height, arcs, marks, ring_bc })
    }

    /// Arcs split at the given junctions (increasing), with conditions in order.
    pub fn from_marks(width: usize, height: usize, marks: &[usize], bcs: &[Bc]) -> Result<Self> {
        if marks.len() != bcs.len() || marks.is_empty() {
            return Err(Error::Param("one boundary condition per arc".into()));
        }
        let k = marks.len();
        let arcs = (0..k)
            .map(|i| BoundaryArc { start: marks[i], end: marks[(i + 1) % k], bc: bcs[i] })
            .collect();
        Self::new(width, height, arcs, marks.to_vec())
    }

    /// Dobrushin boundary: minus on the left half, plus on the right, marks at the middle of
    /// the bottom and top sides.
    pub fn dobrushin(width: usize, height: usize) -> Result<Self> {
        if width < 2 {
            return Err(Error::Param("Dobrushin domain needs width ≥ 2".into()));
        }
        let a = width / 2 + 1;
        let b = width + 2 + height + (width - width / 2) + 1;
        Self::from_marks(width, height, &[a, b], &[Bc::Plus, Bc::Minus])
    }

    /// Quad with one condition per side (bottom, right, top, left), marks at the corners.
    pub fn quad(width: usize, height: usize, sides: [Bc; 4]) -> Result<Self> {
        Self::from_marks(width, height, &corner_marks(width, height), &sides)
    }

    pub fn ring_len(&self) -> usize {
        ring_len(self.width, self.height)
    }

    /// Coordinates of ring cell idx.
    pub fn ring_cell(&self, idx: usize) -> (i64, i64) {
        ring_cell(self.width, self.height, idx)
    }

    pub fn bc_at(&self, idx: usize) -> Bc {
        self.ring_bc[idx]
    }

    /// Ring cells of the arc starting at marks[i] and ending at the next mark.
    fn mark_arc(&self, i: usize) -> Vec<usize> {
        let n = self.ring_len();
        let (s, e) = (self.marks[i], self.marks[(i + 1) % self.marks.len()]);
        let mut out = Vec::new();
        let mut j = s;
        loop {
            out.push(j);
            j = (j + 1) % n;
            if j == e {
                break;
            }
        }
        out
    }

    /// Plain-text form accepted by `parse`.
    pub fn to_text(&self) -> String {
        let mut s = format!("width {}\nheight {}\n", self.width, self.height);
        for a in &self.arcs {
            s.push_str(&format!("arc {} {} {}\n", a.start, a.end, a.bc));
        }
        for m in &self.marks {
            s.push_str(&format!("mark {m}\n"));
        }
        s
    }

    /// Parses `width W`, `height H`, `arc START END BC` and `mark J` lines; `#` starts a
    /// comment. `preset dobrushin` or `preset quad BC BC BC BC` replace the arc lines.
    pub fn parse(text: &str) -> Result<Self> {
        let (mut w, mut h) = (None, None);
        let mut arcs = Vec::new();
        let mut marks = Vec::new();
        let mut preset: Option<Vec<String>> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("line {}: '{}'", ln + 1, raw.trim()));
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
            match (f[0], f.len()) {
                ("width", 2) => w = Some(num(f[1])?),
                ("height", 2) => h = Some(num(f[1])?),
                ("arc", 4) => arcs.push(BoundaryArc { start: num(f[1])?, end: num(f[2])?, bc: f[3].parse().map_err(|_| bad())? }),
                ("mark", 2) => marks.push(num(f[1])?),
                ("preset", _) => preset = Some(f[1..].iter().map(|s| s.to_string()).collect()),
                _ => return Err(bad()),
            }
        }
        let w = w.ok_or_else(|| Error::Parse("missing width".into()))?;
        let h = h.ok_or_else(|| Error::Parse("missing height".into()))?;
        match preset {
            Some(p) if p.first().map(String::as_str) == Some("dobrushin") => Self::dobrushin(w, h),
            Some(p) if p.first().map(String::as_str) == Some("quad") && p.len() == 5 => {
                let b: Vec<Bc> = p[1..].iter().map(|s| s.parse()).collect::<Result<_>>()?;
                Self::quad(w, h, [b[0], b[1], b[2], b[3]])
            }
            Some(p) => Err(Error::Parse(format!("unknown preset '{}'", p.join(" ")))),
            None => Self::new(w, h, arcs, marks),
        }
    }
}

/// Junctions at the four corners: bottom, right, top and left sides each own one corner cell.
pub fn corner_marks(width: usize, height: usize) -> [usize; 4] {
    [1, width + 2, width + height + 3, 2 * width + height + 4]
}

fn ring_len(w: usize, h: usize) -> usize {
    2 * w + 2 * h + 4
}

fn ring_cell(w: usize, h: usize, idx: usize) -> (i64, i64) {
    let (w, h, i) = (w as i64, h as i64, idx as i64);
    if i < w + 2 {
        (i - 1, -1)
    } else if i < w + 2 + h {
        (w, i - (w + 2))
    } else if i < 2 * w + 4 + h {
        (w - (i - (w + 2 + h)), h)
    } else {
        (-1, h - 1 - (i - (2 * w + 4 + h)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinConfig {
    pub width: usize,
    pub height: usize,
    /// Padded (width+2)×(height+2) array; ring cells hold the boundary value, 0 when free.
    spins: Vec<i8>,
}

impl SpinConfig {
    /// Interior spins drawn uniformly, ring from the domain.
    pub fn random<R: Rng + ?Sized>(dom: &LatticeDomain, rng: &mut R) -> Self {
        let mut c = Self::uniform(dom, 1);
        for y in 0..dom.height as i64 {
            for x in 0..dom.width as i64 {
                let s = if rng.random::<bool>() { 1 } else { -1 };
                c.set(x, y, s);
            }
        }
        c
    }

    /// Every interior spin equal to s.
    pub fn uniform(dom: &LatticeDomain, s: i8) -> Self {
        let (w, h) = (dom.width, dom.height);
        let mut c = Self { width: w, height: h, spins: vec![s; (w + 2) * (h + 2)] };
        for i in 0..dom.ring_len() {
            let (x, y) = dom.ring_cell(i);
            let k = c.idx(x, y);
            c.spins[k] = dom.bc_at(i).spin();
        }
        c
    }

    fn idx(&self, x: i64, y: i64) -> usize {
        (x + 1) as usize + (y + 1) as usize * (self.width + 2)
    }

    fn stride(&self) -> usize {
        self.width + 2
    }

    fn is_interior_idx(&self, k: usize) -> bool {
        let s = self.stride();
        let (x, y) = (k % s, k / s);
        x >= 1 && x <= self.width && y >= 1 && y <= self.height
    }

    /// Spin at (x, y), including ring cells; 0 outside or on free arcs.
    pub fn get(&self, x: i64, y: i64) -> i8 {
        if x < -1 || y < -1 || x > self.width as i64 || y > self.height as i64 {
            return 0;
        }
        self.spins[self.idx(x, y)]
    }

    pub fn set(&mut self, x: i64, y: i64, s: i8) {
        let k = self.idx(x, y);
        self.spins[k] = s;
    }

    /// −Σ σ_i σ_j over bonds with at least one interior end.
    pub fn energy(&self) -> f64 {
        let mut e = 0i64;
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                let s = self.get(x, y) as i64;
                e -= s * self.get(x + 1, y) as i64 + s * self.get(x, y + 1) as i64;
                if x == 0 {
                    e -= s * self.get(-1, y) as i64;
                }
                if y == 0 {
                    e -= s * self.get(x, -1) as i64;
                }
            }
        }
        e as f64
    }

    pub fn magnetization(&self) -> f64 {
        let mut m = 0i64;
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                m += self.get(x, y) as i64;
            }
        }
        m as f64 / (self.width * self.height) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Single-cluster updates; a cluster bonded to a fixed boundary cell is not flipped.
    Wolff,
    /// All clusters at once; clusters bonded to the fixed boundary stay put.
    SwendsenWang,
}

struct Scratch {
    stack: Vec<usize>,
    cluster: Vec<usize>,
    mark: Vec<u32>,
    generation: u32,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self { stack: Vec::new(), cluster: Vec::new(), mark: vec![0; n], generation: 0 }
    }
}

/// One Wolff update; returns the number of flipped spins.
fn wolff_step<R: Rng + ?Sized>(c: &mut SpinConfig, p_add: f64, rng: &mut R, sc: &mut Scratch) -> usize {
    sc.generation = sc.generation.wrapping_add(1);
    if sc.generation == 0 {
        sc.mark.iter_mut().for_each(|m| *m = 0);
        sc.generation = 1;
    }
    let g = sc.generation;
    let x = rng.random_range(0..c.width as i64);
    let y = rng.random_range(0..c.height as i64);
    let seed = c.idx(x, y);
    let s = c.spins[seed];
    let stride = c.stride();
    sc.stack.clear();
    sc.cluster.clear();
    sc.stack.push(seed);
    sc.mark[seed] = g;
    while let Some(k) = sc.stack.pop() {
        sc.cluster.push(k);
        for nb in [k - 1, k + 1, k - stride, k + stride] {
            if sc.mark[nb] == g || c.spins[nb] != s {
                continue;
            }
            if rng.random::<f64>() >= p_add {
                continue;
            }
            if !c.is_interior_idx(nb) {
                return 0;
            }
            sc.mark[nb] = g;
            sc.stack.push(nb);
        }
    }
    for &k in &sc.cluster {
        c.spins[k] = -s;
    }
    sc.cluster.len()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// One Swendsen–Wang sweep. Index `frozen` stands for the fixed boundary.
fn sw_sweep<R: Rng + ?Sized>(c: &mut SpinConfig, p_add: f64, rng: &mut R) {
    let n = c.spins.len();
    let frozen = n;
    let mut parent: Vec<usize> = (0..=n).collect();
    let stride = c.stride();
    let union = |parent: &mut Vec<usize>, a: usize, b: usize| {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            // The boundary node stays a root so clusters can be recognised by it.
            if ra == frozen {
                parent[rb] = ra;
            } else {
                parent[ra] = rb;
            }
        }
    };
    for y in 0..c.height as i64 {
        for x in 0..c.width as i64 {
            let k = c.idx(x, y);
            let s = c.spins[k];
            for nb in [k + 1, k + stride, k - 1, k - stride] {
                let interior = c.is_interior_idx(nb);
                // Interior pairs are visited once, from the left or lower cell.
                if interior && (nb == k - 1 || nb == k - stride) {
                    continue;
                }
                if c.spins[nb] == s && rng.random::<f64>() < p_add {
                    union(&mut parent, k, if interior { nb } else { frozen });
                }
            }
        }
    }
    let mut flip: Vec<i8> = vec![0; n + 1];
    for y in 0..c.height as i64 {
        for x in 0..c.width as i64 {
            let k = c.idx(x, y);
            let r = find(&mut parent, k);
            if r == find(&mut parent, frozen) {
                continue;
            }
            if flip[r] == 0 {
                flip[r] = if rng.random::<bool>() { 1 } else { -1 };
            }
            if flip[r] < 0 {
                c.spins[k] = -c.spins[k];
            }
        }
    }
}

/// Wolff updates needed at side length L: 10·L.
pub fn thermalization_floor(dom: &LatticeDomain) -> usize {
    10 * dom.width.max(dom.height)
}

/// Wolff updates per unit of side length used by the experiment drivers. At 64×64 with
/// Dobrushin boundary the energy autocorrelation is still 0.2 at lag 10·L and falls below
/// 0.05 between 20·L and 40·L; a hot start needs several such times.
pub const UPDATES_PER_SIDE: usize = 150;

pub fn default_updates(dom: &LatticeDomain) -> usize {
    UPDATES_PER_SIDE * dom.width.max(dom.height)
}

/// Runs `steps` updates (Wolff steps or SW sweeps) from a random start at inverse
/// temperature β.
pub fn sample_at<R: Rng + ?Sized>(dom: &LatticeDomain, beta: f64, steps: usize, sampler: Sampler, rng: &mut R) -> SpinConfig {
    let mut c = SpinConfig::random(dom, rng);
    evolve(&mut c, beta, steps, sampler, rng);
    c
}

fn evolve<R: Rng + ?Sized>(c: &mut SpinConfig, beta: f64, steps: usize, sampler: Sampler, rng: &mut R) {
    let p_add = 1.0 - (-2.0 * beta).exp();
    match sampler {
        Sampler::Wolff => {
            let mut sc = Scratch::new(c.spins.len());
            for _ in 0..steps {
                wolff_step(c, p_add, rng, &mut sc);
            }
        }
        Sampler::SwendsenWang => {
            for _ in 0..steps {
                sw_sweep(c, p_add, rng);
            }
        }
    }
}

/// Sample at β_c with Wolff updates on stream 0 of `seed`.
pub fn sample_critical(dom: &LatticeDomain, seed: u64, sweeps: usize) -> Result<SpinConfig> {
    if sweeps < thermalization_floor(dom) {
        return Err(Error::Param(format!(
            "{sweeps} updates are below the thermalization floor {}",
            thermalization_floor(dom)
        )));
    }
    let mut rng = path_rng(seed, 0);
    Ok(sample_at(dom, BETA_C, sweeps, Sampler::Wolff, &mut rng))
}

/// Normalized energy autocorrelation at `lag` along one chain of `n` recorded updates.
pub fn energy_autocorrelation(dom: &LatticeDomain, beta: f64, sampler: Sampler, lag: usize, n: usize, seed: u64) -> f64 {
    let mut rng = path_rng(seed, 0);
    let mut c = sample_at(dom, beta, thermalization_floor(dom), sampler, &mut rng);
    let mut es = Vec::with_capacity(n);
    for _ in 0..n {
        evolve(&mut c, beta, 1, sampler, &mut rng);
        es.push(c.energy());
    }
    let m = es.iter().sum::<f64>() / n as f64;
    let var = es.iter().map(|e| (e - m).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 || lag >= n {
        return 0.0;
    }
    let cov = (0..n - lag).map(|i| (es[i] - m) * (es[i + lag] - m)).sum::<f64>() / (n - lag) as f64;
    cov / var
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chirality {
    /// Turn left when both turns are allowed.
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfacePath {
    /// Cell corners visited; the first and last lie on the outer edge of the ring.
    pub vertices: Vec<(i64, i64)>,
    pub start: usize,
    /// Junction where the path left the domain.
    pub end: usize,
}

impl InterfacePath {
    /// Corners inside or on the boundary of the rectangle [0, W]×[0, H].
    pub fn inner(&self) -> &[(i64, i64)] {
        &self.vertices[1..self.vertices.len() - 1]
    }
}

/// Outer and inner end of the edge shared by ring cells m − 1 and m, and the inward heading.
fn junction_edge(dom: &LatticeDomain, m: usize) -> ((i64, i64), (i64, i64)) {
    let n = dom.ring_len();
    let (a, b) = (dom.ring_cell((m + n - 1) % n), dom.ring_cell(m));
    let (w, h) = (dom.width as i64, dom.height as i64);
    let (p, q) = if a.1 == b.1 {
        let x = a.0.max(b.0);
        ((x, a.1), (x, a.1 + 1))
    } else {
        let y = a.1.max(b.1);
        ((a.0, y), (a.0 + 1, y))
    };
    let outer = |v: (i64, i64)| v.0 <= -1 || v.1 <= -1 || v.0 >= w + 1 || v.1 >= h + 1;
    if outer(p) {
        (p, q)
    } else {
        (q, p)
    }
}

/// Interface from junction `start`: the cell on its left holds the spin of ring cell
/// start − 1, the cell on its right the opposite spin.
pub fn trace_interface(cfg: &SpinConfig, dom: &LatticeDomain, start: usize, chirality: Chirality) -> Result<InterfacePath> {
    let n = dom.ring_len();
    if start >= n {
        return Err(Error::Param(format!("junction {start} outside the ring")));
    }
    let (c1, c2) = (dom.ring_cell((start + n - 1) % n), dom.ring_cell(start));
    let left = cfg.get(c1.0, c1.1);
    if left == 0 || cfg.get(c2.0, c2.1) != -left {
        return Err(Error::Param(format!("junction {start} does not separate opposite fixed spins")));
    }
    let (w, h) = (dom.width as i64, dom.height as i64);
    let (p0, p1) = junction_edge(dom, start);
    let mut v = p1;
    let mut d = (p1.0 - p0.0, p1.1 - p0.1);
    let mut vertices = vec![p0, p1];
    let limit = 4 * (dom.width + 3) * (dom.height + 3);
    // Cell (x, y) has corners (x, y)..(x+1, y+1); from corner v heading d, the cell ahead on
    // the left has lower-left corner v + (d − l − (1,1))/2 with l = d rotated left.
    let cell = |v: (i64, i64), a: (i64, i64), b: (i64, i64)| {
        let (x, y) = (2 * v.0 + a.0 + b.0 - 1, 2 * v.1 + a.1 + b.1 - 1);
        cfg.get(x.div_euclid(2), y.div_euclid(2))
    };
    while vertices.len() <= limit {
        let l = (-d.1, d.0);
        let r = (d.1, -d.0);
        let ahead_left = cell(v, d, l);
        let ahead_right = cell(v, d, r);
        if ahead_left == 0 || ahead_right == 0 {
            return Err(Error::Invariant(format!("interface reached a free cell at {v:?}")));
        }
        let can_left = ahead_left == -left;
        let can_right = ahead_right == left;
        d = match (can_left, can_right, chirality) {
            (true, true, Chirality::Left) | (true, false, _) => l,
            (true, true, Chirality::Right) | (false, true, _) => r,
            (false, false, _) => d,
        };
        v = (v.0 + d.0, v.1 + d.1);
        vertices.push(v);
        if v.0 <= -1 || v.1 <= -1 || v.0 >= w + 1 || v.1 >= h + 1 {
            let end = (0..n)
                .find(|&m| junction_edge(dom, m).0 == v)
                .ok_or_else(|| Error::Invariant(format!("interface left the domain at {v:?}")))?;
            return Ok(InterfacePath { vertices, start, end });
        }
    }
    Err(Error::Invariant("interface did not terminate".into()))
}

/// BFS over interior cells with spin s from cells next to `from` to cells next to `to`.
fn connects(cfg: &SpinConfig, dom: &LatticeDomain, s: i8, from: &[usize], to: &[usize], diagonal: bool) -> bool {
    let (w, h) = (dom.width as i64, dom.height as i64);
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h;
    let mut target = vec![false; (dom.width * dom.height) as usize];
    let mut seen = vec![false; (dom.width * dom.height) as usize];
    let id = |x: i64, y: i64| (x + y * w) as usize;
    let nbrs4 = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    for &r in to {
        let (x, y) = dom.ring_cell(r);
        for (dx, dy) in nbrs4 {
            if inside(x + dx, y + dy) {
                target[id(x + dx, y + dy)] = true;
            }
        }
    }
    let mut queue = VecDeque::new();
    for &r in from {
        let (x, y) = dom.ring_cell(r);
        for (dx, dy) in nbrs4 {
            let (a, b) = (x + dx, y + dy);
            if inside(a, b) && cfg.get(a, b) == s && !seen[id(a, b)] {
                seen[id(a, b)] = true;
                queue.push_back((a, b));
            }
        }
    }
    let steps: &[(i64, i64)] = if diagonal {
        &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
    } else {
        &nbrs4
    };
    while let Some((x, y)) = queue.pop_front() {
        if target[id(x, y)] {
            return true;
        }
        for &(dx, dy) in steps {
            let (a, b) = (x + dx, y + dy);
            if inside(a, b) && cfg.get(a, b) == s && !seen[id(a, b)] {
                seen[id(a, b)] = true;
                queue.push_back((a, b));
            }
        }
    }
    false
}

fn four_arcs(dom: &LatticeDomain) -> Result<[Vec<usize>; 4]> {
    if dom.marks.len() != 4 {
        return Err(Error::Param(format!("crossing events need 4 marks, got {}", dom.marks.len())));
    }
    Ok([dom.mark_arc(0), dom.mark_arc(1), dom.mark_arc(2), dom.mark_arc(3)])
}

/// (minus crossing between arcs 1 and 3, plus crossing between arcs 2 and 4), both with
/// 4-adjacency; arc i runs from mark i to mark i + 1.
pub fn crossing_events(cfg: &SpinConfig, dom: &LatticeDomain) -> Result<(bool, bool)> {
    let a = four_arcs(dom)?;
    Ok((connects(cfg, dom, -1, &a[0], &a[2], false), connects(cfg, dom, 1, &a[1], &a[3], false)))
}

/// Plus crossing between arcs 2 and 4 with 8-adjacency, the dual of the minus crossing.
pub fn plus_crossing_8(cfg: &SpinConfig, dom: &LatticeDomain) -> Result<bool> {
    let a = four_arcs(dom)?;
    Ok(connects(cfg, dom, 1, &a[1], &a[3], true))
}

/// Real Jacobi sn, cn, dn with parameter m_c = 1 − k² (Bulirsch's descending Landen).
pub fn sncndn(u: f64, k: f64) -> (f64, f64, f64) {
    const CA: f64 = 1e-8;
    let mut emc = 1.0 - k * k;
    if emc == 0.0 {
        let cn = 1.0 / u.cosh();
        return (u.tanh(), cn, cn);
    }
    let mut em = [0.0; 14];
    let mut en = [0.0; 14];
    let mut a = 1.0;
    let mut dn = 1.0;
    let mut c = 1.0;
    let mut l = 0;
    for i in 0..13 {
        l = i;
        em[i] = a;
        emc = emc.sqrt();
        en[i] = emc;
        c = 0.5 * (a + emc);
        if (a - emc).abs() <= CA * a {
            break;
        }
        emc *= a;
        a = c;
    }
    let u = u * c;
    let mut sn = u.sin();
    let mut cn = u.cos();
    if sn != 0.0 {
        let mut a = cn / sn;
        c *= a;
        for ii in (0..=l).rev() {
            let b = em[ii];
            a *= c;
            c *= dn;
            dn = (en[ii] + a) / (b + a);
            a = c / b;
        }
        a = 1.0 / (c * c + 1.0).sqrt();
        sn = if sn >= 0.0 { a } else { -a };
        cn = c * sn;
    }
    (sn, cn, dn)
}

/// sn(x + iy, k) by the addition formula.
pub fn sn_complex(u: Complex64, k: f64) -> Complex64 {
    let kp = (1.0 - k * k).sqrt();
    let (s, c, d) = sncndn(u.re, k);
    let (s1, c1, d1) = sncndn(u.im, kp);
    let den = c1 * c1 + k * k * s * s * s1 * s1;
    Complex64::new(s * d1, c * d * s1 * c1) / den
}

fn agm(mut a: f64, mut b: f64) -> f64 {
    while (a - b).abs() > 1e-15 * a {
        let m = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = m;
    }
    a
}

/// Complete elliptic integral K(k).
pub fn ellip_k(k: f64) -> f64 {
    std::f64::consts::FRAC_PI_2 / agm(1.0, (1.0 - k * k).sqrt())
}

/// Modulus k with K(k')/K(k) = r, from the nome q = e^{−πr} through theta functions.
pub fn modulus_for_ratio(r: f64) -> f64 {
    let q = (-std::f64::consts::PI * r).exp();
    let mut t2 = 0.0;
    let mut t3 = 1.0;
    for n in 0..60 {
        let nf = n as f64;
        t2 += q.powf(nf * (nf + 1.0));
        if n > 0 {
            t3 += 2.0 * q.powf(nf * nf);
        }
    }
    t2 *= 2.0 * q.powf(0.25);
    (t2 / t3).powi(2)
}

/// Conformal map of [0, W]×[0, H] onto the upper half-plane sending junction corner a to 0
/// and b to ∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectangleMap {
    pub width: f64,
    pub height: f64,
    pub k: f64,
    pub big_k: f64,
    pub big_kp: f64,
    mobius: Option<MobiusMap>,
}

impl RectangleMap {
    /// sn-based map with the bottom midpoint at 0, the top midpoint at ∞ and the centre at i.
    pub fn centred(width: f64, height: f64) -> Self {
        let k = modulus_for_ratio(2.0 * height / width);
        let big_k = ellip_k(k);
        let big_kp = ellip_k((1.0 - k * k).sqrt());
        Self { width, height, k, big_k, big_kp, mobius: None }
    }

    /// Map sending the boundary points pa ↦ 0 and pb ↦ ∞.
    pub fn with_points(width: f64, height: f64, pa: (f64, f64), pb: (f64, f64)) -> Result<Self> {
        let base = Self::centred(width, height);
        let (za, zb) = (base.apply_raw(pa.0, pa.1), base.apply_raw(pb.0, pb.1));
        let (a, b) = (za.re, zb.re);
        let m = if !zb.re.is_finite() || zb.norm() > 1e12 {
            MobiusMap::new(1.0, -a, 0.0, 1.0)?
        } else if b > a {
            MobiusMap::new(1.0, -a, -1.0, b)?
        } else {
            MobiusMap::new(1.0, -a, 1.0, -b)?
        };
        Ok(Self { mobius: Some(m), ..base })
    }

    fn apply_raw(&self, x: f64, y: f64) -> Complex64 {
        let u = Complex64::new((x - 0.5 * self.width) * 2.0 * self.big_k / self.width, y * self.big_kp / self.height);
        sn_complex(u, self.k) * self.k.sqrt()
    }

    pub fn apply(&self, x: f64, y: f64) -> Complex64 {
        let z = self.apply_raw(x, y);
        match &self.mobius {
            Some(m) => m.apply_c(z),
            None => z,
        }
    }
}

/// Driving function of an interface in the domain's rectangle, through the conformal map
/// sending its start to 0 and its end to ∞, then the zipper. Returns the path and the
/// number of skipped zero-capacity steps.
pub fn extract_driving(path: &InterfacePath, dom: &LatticeDomain) -> Result<(DrivingPath, usize)> {
    let inner = path.inner();
    if inner.len() < 2 {
        return Err(Error::Degenerate("interface too short".into()));
    }
    let (w, h) = (dom.width as f64, dom.height as f64);
    let (a, b) = (inner[0], *inner.last().unwrap());
    let map = RectangleMap::with_points(w, h, (a.0 as f64, a.1 as f64), (b.0 as f64, b.1 as f64))?;
    let mut pts = Vec::with_capacity(inner.len());
    pts.push(Complex64::new(0.0, 0.0));
    for &(x, y) in &inner[1..inner.len() - 1] {
        let z = map.apply(x as f64, y as f64);
        if !(z.re.is_finite() && z.im.is_finite()) || z.norm() > 1e8 {
            break;
        }
        pts.push(Complex64::new(z.re, z.im.max(0.0)));
    }
    Ok(driving_from_trace(&pts))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub n_paths: usize,
}

fn ols(ts: &[f64], vs: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let mv = vs.iter().sum::<f64>() / n;
    let sxy: f64 = ts.iter().zip(vs).map(|(t, v)| (t - mt) * (v - mv)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, mv - slope * mt)
}

fn variance_slope(paths: &[&DrivingPath], t_max: f64, grid: usize) -> (f64, f64) {
    let ts: Vec<f64> = (1..=grid).map(|j| t_max * j as f64 / grid as f64).collect();
    let vs: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let ws: Vec<f64> = paths.iter().map(|p| p.value_at(t) - p.w[0]).collect();
            let m = ws.iter().sum::<f64>() / ws.len() as f64;
            ws.iter().map(|w| (w - m).powi(2)).sum::<f64>() / (ws.len() as f64 - 1.0)
        })
        .collect();
    ols(&ts, &vs)
}

/// Slope of Var[W_t − W_0] against t on (0, t_max], with a batch-means standard error over
/// ten batches of paths.
pub fn kappa_estimate(drivings: &[DrivingPath], t_max: f64) -> Result<KappaFit> {
    const BATCHES: usize = 10;
    const GRID: usize = 20;
    if drivings.len() < 2 * BATCHES {
        return Err(Error::Param(format!("{} paths are too few for a slope fit", drivings.len())));
    }
    if !(t_max > 0.0) {
        return Err(Error::Param("t_max must be positive".into()));
    }
    let all: Vec<&DrivingPath> = drivings.iter().collect();
    let (slope, intercept) = variance_slope(&all, t_max, GRID);
    let per = drivings.len() / BATCHES;
    let slopes: Vec<f64> = (0..BATCHES)
        .map(|b| variance_slope(&all[b * per..(b + 1) * per], t_max, GRID).0)
        .collect();
    let m = slopes.iter().sum::<f64>() / BATCHES as f64;
    let var = slopes.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (BATCHES as f64 - 1.0);
    Ok(KappaFit { slope, stderr: (var / BATCHES as f64).sqrt(), intercept, n_paths: drivings.len() })
}

/// On the minus crossing event of a four-marked domain, the interfaces from marks 0 and 1.
/// They must end at marks 3 and 2 and share no vertex; `None` without the crossing.
pub fn alternating_pair(cfg: &SpinConfig, dom: &LatticeDomain) -> Result<Option<(InterfacePath, InterfacePath)>> {
    if !crossing_events(cfg, dom)?.0 {
        return Ok(None);
    }
    // Both interfaces keep the plus cells on their outer side together, so they hug the
    // 4-connected minus crossing from either side.
    let left = trace_interface(cfg, dom, dom.marks[0], Chirality::Right)?;
    let right = trace_interface(cfg, dom, dom.marks[1], Chirality::Left)?;
    if left.end != dom.marks[3] || right.end != dom.marks[2] {
        return Err(Error::Invariant(format!(
            "pair ends at ({}, {}) instead of ({}, {})",
            left.end, right.end, dom.marks[3], dom.marks[2]
        )));
    }
    let seen: std::collections::HashSet<_> = left.vertices.iter().collect();
    if let Some(v) = right.vertices.iter().find(|v| seen.contains(v)) {
        return Err(Error::Invariant(format!("pair interfaces meet at {v:?}")));
    }
    Ok(Some((left, right)))
}

/// Capacity window used for the κ fit of interfaces normalized by `RectangleMap::centred`.
pub const KAPPA_T_MAX: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSample {
    pub index: usize,
    pub length: usize,
    pub end: usize,
    pub skipped: usize,
    pub path: DrivingPath,
}

/// Dobrushin interfaces (turn-left rule) with their driving functions, one independent chain
/// per sample on stream i of `seed`.
pub fn dobrushin_drivings(dom: &LatticeDomain, n: usize, updates: usize, seed: u64) -> Result<Vec<InterfaceSample>> {
    if dom.marks.len() != 2 {
        return Err(Error::Param("a Dobrushin domain has two marks".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let cfg = sample_at(dom, BETA_C, updates, Sampler::Wolff, &mut rng);
            let ip = trace_interface(&cfg, dom, dom.marks[0], Chirality::Left)?;
            if ip.end != dom.marks[1] {
                return Err(Error::Invariant(format!("interface ended at {} instead of {}", ip.end, dom.marks[1])));
            }
            let (mut path, skipped) = extract_driving(&ip, dom)?;
            path.seed = seed;
            Ok(InterfaceSample { index: i, length: ip.vertices.len(), end: ip.end, skipped, path })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingCounts {
    pub n: usize,
    pub v_minus: usize,
    pub h_plus: usize,
    pub h_plus_8: usize,
}

impl CrossingCounts {
    pub fn freq_v_minus(&self) -> f64 {
        self.v_minus as f64 / self.n as f64
    }

    pub fn freq_h_plus(&self) -> f64 {
        self.h_plus as f64 / self.n as f64
    }
}

/// Per-sample (C_v_minus, C_h_plus, 8-adjacent C_h_plus) over n independent critical
/// samples; sample i uses stream i of `seed`, so two domains with the same seed share
/// their random numbers.
pub fn crossing_samples(dom: &LatticeDomain, n: usize, updates: usize, seed: u64) -> Result<Vec<(bool, bool, bool)>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let cfg = sample_at(dom, BETA_C, updates, Sampler::Wolff, &mut rng);
            let (v, hp) = crossing_events(&cfg, dom)?;
            Ok((v, hp, plus_crossing_8(&cfg, dom)?))
        })
        .collect()
}

pub fn crossing_frequencies(dom: &LatticeDomain, n: usize, updates: usize, seed: u64) -> Result<CrossingCounts> {
    let ev = crossing_samples(dom, n, updates, seed)?;
    Ok(CrossingCounts {
        n,
        v_minus: ev.iter().filter(|e| e.0).count(),
        h_plus: ev.iter().filter(|e| e.1).count(),
        h_plus_8: ev.iter().filter(|e| e.2).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn alternating(w: usize, h: usize) -> LatticeDomain {
        LatticeDomain::quad(w, h, [Bc::Minus, Bc::Plus, Bc::Minus, Bc::Plus]).unwrap()
    }

    #[test]
    fn beta_c_is_self_dual() {
        assert!((BETA_C - (1.0 + 2f64.sqrt()).ln() / 2.0).abs() < 1e-15);
        // sinh(2β_c) = 1.
        assert!(((2.0 * BETA_C).sinh() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ring_numbering() {
        let d = LatticeDomain::dobrushin(4, 3).unwrap();
        assert_eq!(d.ring_len(), 18);
        assert_eq!(d.ring_cell(0), (-1, -1));
        assert_eq!(d.ring_cell(5), (4, -1));
        assert_eq!(d.ring_cell(6), (4, 0));
        assert_eq!(d.ring_cell(9), (4, 3));
        assert_eq!(d.ring_cell(14), (-1, 3));
        assert_eq!(d.ring_cell(17), (-1, 0));
        let mut seen = std::collections::HashSet::new();
        for i in 0..d.ring_len() {
            assert!(seen.insert(d.ring_cell(i)));
        }
        assert_eq!(junction_edge(&d, d.marks[0]), ((2, -1), (2, 0)));
        assert_eq!(junction_edge(&d, d.marks[1]), ((2, 4), (2, 3)));
    }

    #[test]
    fn domain_validation_and_text() {
        let d = alternating(5, 4);
        assert_eq!(LatticeDomain::parse(&d.to_text()).unwrap(), d);
        let p = LatticeDomain::parse("# quad\nwidth 5\nheight 4\npreset quad minus plus minus plus\n").unwrap();
        assert_eq!(p, d);
        assert!(LatticeDomain::parse("width 3\nheight 3\narc 0 5 plus\n").is_err());
        assert!(LatticeDomain::parse("width 3\nheight 3\nbogus 1\n").is_err());
        let overlap = vec![
            BoundaryArc { start: 0, end: 10, bc: Bc::Plus },
            BoundaryArc { start: 5, end: 0, bc: Bc::Minus },
        ];
        assert!(LatticeDomain::new(3, 3, overlap, vec![]).is_err());
    }

    #[test]
    fn two_by_two_trace_by_hand() {
        // Interior  y=1: [+ -]   y=0: [- +]; minus on the left half of the ring.
        let d = LatticeDomain::dobrushin(2, 2).unwrap();
        let mut c = SpinConfig::uniform(&d, 1);
        c.set(0, 0, -1);
        c.set(1, 0, 1);
        c.set(0, 1, 1);
        c.set(1, 1, -1);
        assert_eq!(c.get(0, -1), -1);
        assert_eq!(c.get(1, -1), 1);
        let left = trace_interface(&c, &d, d.marks[0], Chirality::Left).unwrap();
        // At (1,1) heading north both turns are allowed.
        assert_eq!(left.vertices, vec![(1, -1), (1, 0), (1, 1), (0, 1), (0, 2), (1, 2), (1, 3)]);
        let right = trace_interface(&c, &d, d.marks[0], Chirality::Right).unwrap();
        assert_eq!(right.vertices, vec![(1, -1), (1, 0), (1, 1), (2, 1), (2, 2), (1, 2), (1, 3)]);
        assert_eq!(left.end, d.marks[1]);
        assert_eq!(right.end, d.marks[1]);
    }

    #[test]
    fn uniform_configs_trace_straight() {
        let d = LatticeDomain::dobrushin(6, 5).unwrap();
        let plus = SpinConfig::uniform(&d, 1);
        let p = trace_interface(&plus, &d, d.marks[0], Chirality::Left).unwrap();
        // All plus inside: the interface hugs the minus boundary on its left.
        assert!(p.vertices.iter().all(|v| v.0 <= 3));
        assert_eq!(p.end, d.marks[1]);
        let minus = SpinConfig::uniform(&d, -1);
        let q = trace_interface(&minus, &d, d.marks[0], Chirality::Left).unwrap();
        assert!(q.vertices.iter().all(|v| v.0 >= 3));
        assert!(trace_interface(&plus, &d, 0, Chirality::Left).is_err());
    }

    #[test]
    fn trace_endpoints_and_determinism() {
        let d = LatticeDomain::dobrushin(16, 16).unwrap();
        for i in 0..100 {
            let mut rng = path_rng(9, i);
            let c = sample_at(&d, BETA_C, 40, Sampler::Wolff, &mut rng);
            let p = trace_interface(&c, &d, d.marks[0], Chirality::Left).unwrap();
            assert_eq!(p.end, d.marks[1]);
            assert_eq!(p, trace_interface(&c, &d, d.marks[0], Chirality::Left).unwrap());
            let r = trace_interface(&c, &d, d.marks[0], Chirality::Right).unwrap();
            assert_eq!(r.end, d.marks[1]);
            // Every step separates a minus cell on the left from a plus cell on the right.
            for e in p.vertices.windows(2) {
                let (v, u) = (e[0], e[1]);
                let dvec = (u.0 - v.0, u.1 - v.1);
                let (lx, ly) = (2 * v.0 + dvec.0 - dvec.1 - 1, 2 * v.1 + dvec.1 + dvec.0 - 1);
                let (rx, ry) = (2 * v.0 + dvec.0 + dvec.1 - 1, 2 * v.1 + dvec.1 - dvec.0 - 1);
                assert_eq!(c.get(lx.div_euclid(2), ly.div_euclid(2)), -1);
                assert_eq!(c.get(rx.div_euclid(2), ry.div_euclid(2)), 1);
            }
        }
    }

    #[test]
    fn crossing_trivial_cases() {
        let d = alternating(7, 5);
        assert_eq!(crossing_events(&SpinConfig::uniform(&d, -1), &d).unwrap(), (true, false));
        assert_eq!(crossing_events(&SpinConfig::uniform(&d, 1), &d).unwrap(), (false, true));
    }

    #[test]
    fn crossing_hand_fixtures() {
        // Rows listed top to bottom; '-' minus, '+' plus.
        let fixtures: [(&[&str], bool); 10] = [
            (&["+-+", "+-+", "+-+"], true),
            (&["---", "+++", "---"], false),
            (&["+-+", "-+-", "+-+"], false),
            (&["-+-", "+-+", "-+-"], false),
            (&["--+", "-++", "+++"], false),
            (&["-++", "-++", "-++"], true),
            (&["+++", "+-+", "+++"], false),
            (&["+-+", "+--", "++-"], true),
            (&["++-", "+-+", "-++"], false),
            (&["-+", "-+"], true),
        ];
        for (rows, v) in fixtures {
            let (w, hgt) = (rows[0].len(), rows.len());
            let d = alternating(w, hgt);
            let mut c = SpinConfig::uniform(&d, 1);
            for (r, row) in rows.iter().enumerate() {
                for (x, ch) in row.chars().enumerate() {
                    c.set(x as i64, (hgt - 1 - r) as i64, if ch == '-' { -1 } else { 1 });
                }
            }
            let (cv, _) = crossing_events(&c, &d).unwrap();
            assert_eq!(cv, v, "{rows:?}");
            assert_eq!(plus_crossing_8(&c, &d).unwrap(), !v, "duality fails on {rows:?}");
        }
    }

    #[test]
    fn duality_on_samples() {
        let d = alternating(12, 12);
        for i in 0..30 {
            let mut rng = path_rng(3, i);
            let c = sample_at(&d, BETA_C, 120, Sampler::Wolff, &mut rng);
            let (v, _) = crossing_events(&c, &d).unwrap();
            assert!(v ^ plus_crossing_8(&c, &d).unwrap());
        }
    }

    #[test]
    fn alternating_pair_on_samples() {
        let d = alternating(24, 24);
        let mut crossed = 0;
        for i in 0..60 {
            let mut rng = path_rng(17, i);
            let c = sample_at(&d, BETA_C, 1500, Sampler::Wolff, &mut rng);
            if let Some((l, r)) = alternating_pair(&c, &d).unwrap() {
                crossed += 1;
                assert!(l.vertices.len() > 24 && r.vertices.len() > 24);
            }
        }
        assert!(crossed > 5 && crossed < 55, "{crossed}");
        assert!(alternating_pair(&SpinConfig::uniform(&d, -1), &d).unwrap().is_some());
        assert!(alternating_pair(&SpinConfig::uniform(&d, 1), &d).unwrap().is_none());
    }

    #[test]
    fn infinite_temperature_is_independent() {
        let d = LatticeDomain::quad(20, 20, [Bc::Plus; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mags = Vec::new();
        for _ in 0..50 {
            let c = sample_at(&d, 0.0, 2000, Sampler::Wolff, &mut rng);
            mags.push(c.magnetization());
        }
        let m = mags.iter().sum::<f64>() / mags.len() as f64;
        // Each magnetization has variance 1/400.
        assert!(m.abs() < 3.0 * (1.0 / 400.0 / 50.0f64).sqrt());
    }

    #[test]
    fn plus_boundary_polarizes() {
        let d = LatticeDomain::quad(16, 16, [Bc::Plus; 4]).unwrap();
        let mut positive = 0;
        for i in 0..100 {
            let c = sample_critical(&d, 100 + i, thermalization_floor(&d)).unwrap();
            let mut layer = 0i64;
            for k in 0..16 {
                layer += (c.get(k, 0) + c.get(k, 15) + c.get(0, k) + c.get(15, k)) as i64;
            }
            positive += (layer > 0) as usize;
        }
        assert!(positive >= 99, "{positive}");
        assert!(sample_critical(&d, 0, 3).is_err());
    }

    #[test]
    fn samplers_agree_on_energy() {
        let d = LatticeDomain::quad(12, 12, [Bc::Plus, Bc::Minus, Bc::Free, Bc::Plus]).unwrap();
        let mean_e = |s: Sampler, steps: usize| {
            let es: Vec<f64> = (0..300)
                .map(|i| {
                    let mut rng = path_rng(21, i);
                    sample_at(&d, BETA_C, steps, s, &mut rng).energy()
                })
                .collect();
            let m = es.iter().sum::<f64>() / es.len() as f64;
            let v = es.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (es.len() as f64 - 1.0);
            (m, (v / es.len() as f64).sqrt())
        };
        let (mw, sw) = mean_e(Sampler::Wolff, 300);
        let (ms, ss) = mean_e(Sampler::SwendsenWang, 60);
        assert!((mw - ms).abs() < 3.5 * (sw * sw + ss * ss).sqrt(), "{mw} ± {sw} vs {ms} ± {ss}");
    }

    #[test]
    fn jacobi_functions() {
        let k = 0.6;
        let kk = ellip_k(k);
        let (s, c, d) = sncndn(kk, k);
        assert!((s - 1.0).abs() < 1e-12 && c.abs() < 1e-7 && (d - 0.8).abs() < 1e-12);
        let (s, c, d) = sncndn(0.37, k);
        assert!((s * s + c * c - 1.0).abs() < 1e-14);
        assert!((d * d + k * k * s * s - 1.0).abs() < 1e-14);
        assert_eq!(sncndn(0.3, 1.0).0, 0.3f64.tanh());
        // K(k)/K(k') = 1 at k = 1/√2 and the nome inversion recovers it.
        assert!((modulus_for_ratio(1.0) - 0.5f64.sqrt()).abs() < 1e-14);
        let k2 = modulus_for_ratio(2.0);
        let r = ellip_k((1.0 - k2 * k2).sqrt()) / ellip_k(k2);
        assert!((r - 2.0).abs() < 1e-12);
        let kp = (1.0 - k * k).sqrt();
        let corner = sn_complex(Complex64::new(kk, ellip_k(kp) - 1e-9), k);
        assert!((corner.re - 1.0 / k).abs() < 1e-6);
    }

    #[test]
    fn rectangle_map_boundary_and_centre() {
        let m = RectangleMap::centred(64.0, 48.0);
        assert!(m.apply(32.0, 0.0).norm() < 1e-12);
        assert!((m.apply(32.0, 24.0) - Complex64::new(0.0, 1.0)).norm() < 1e-10);
        assert!(m.apply(32.0, 48.0 - 1e-9).norm() > 1e6);
        for x in [0.0, 10.0, 40.0, 64.0] {
            assert!(m.apply(x, 0.0).im.abs() < 1e-10);
            assert!(m.apply(x, 48.0).im.abs() < 1e-8 * m.apply(x, 48.0).norm().max(1.0));
        }
        for y in [5.0, 30.0] {
            assert!(m.apply(0.0, y).im.abs() < 1e-10 && m.apply(64.0, y).im.abs() < 1e-10);
            assert!(m.apply(20.0, y).im > 0.0);
        }
        let g = RectangleMap::with_points(10.0, 10.0, (2.0, 0.0), (10.0, 7.0)).unwrap();
        assert!(g.apply(2.0, 0.0).norm() < 1e-12);
        assert!(g.apply(10.0, 7.0 - 1e-9).norm() > 1e6);
        assert!(g.apply(5.0, 5.0).im > 0.0);
    }

    #[test]
    fn kappa_fit_on_brownian_drivers() {
        for (kappa, tol) in [(3.0f64, 0.2), (6.0, 0.3)] {
            let mut rng = ChaCha8Rng::seed_from_u64(kappa as u64);
            let dt = 0.25 / 200.0;
            let paths: Vec<DrivingPath> = (0..2000)
                .map(|_| {
                    let mut w = vec![0.0];
                    for _ in 0..200 {
                        let n: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                        w.push(w.last().unwrap() + (kappa * dt).sqrt() * n);
                    }
                    DrivingPath::uniform(dt, w)
                })
                .collect();
            let fit = kappa_estimate(&paths, 0.25).unwrap();
            assert!((fit.slope - kappa).abs() < tol, "{fit:?}");
            assert!(fit.stderr > 0.0 && fit.stderr < tol);
        }
        assert!(kappa_estimate(&[], 0.25).is_err());
    }

    #[test]
    fn vertical_slit_has_constant_driving() {
        // Column of corners above the start in a tall rectangle: symmetric, so W ≡ 0.
        let d = LatticeDomain::dobrushin(20, 40).unwrap();
        let mut vertices = vec![(10, -1)];
        for y in 0..=41 {
            vertices.push((10, y));
        }
        let ip = InterfacePath { vertices, start: d.marks[0], end: d.marks[1] };
        let (p, skipped) = extract_driving(&ip, &d).unwrap();
        assert_eq!(skipped, 0);
        assert!(p.w.iter().all(|w| w.abs() < 1e-9));
        assert!(p.t.windows(2).all(|t| t[1] > t[0]));
    }
}
