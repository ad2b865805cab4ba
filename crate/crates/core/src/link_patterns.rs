//! Planar pair partitions of {1, ..., 2N}.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_N: usize = 12;

/// Links stored as (min, max) pairs, 1-based, sorted by first coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkPattern {
    links: Vec<(usize, usize)>,
}

fn crosses(l: (usize, usize), m: (usize, usize)) -> bool {
    (l.0 < m.0 && m.0 < l.1 && l.1 < m.1) || (m.0 < l.0 && l.0 < m.1 && m.1 < l.1)
}

impl LinkPattern {
    pub fn empty() -> Self {
        Self { links: Vec::new() }
    }

    /// Builds a pattern, checking that it is a noncrossing exact cover of {1..2N}.
    pub fn new(links: Vec<(usize, usize)>) -> Result<Self> {
        let mut links: Vec<(usize, usize)> = links.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        links.sort_unstable();
        let n2 = 2 * links.len();
        let mut seen = vec![false; n2 + 1];
        for &(a, b) in &links {
            if a == 0 || b > n2 || a == b || seen[a] || seen[b] {
                return Err(Error::Invariant(format!("links do not cover 1..{n2} exactly")));
            }
            seen[a] = true;
            seen[b] = true;
        }
        let p = Self { links };
        if !p.is_noncrossing() {
            return Err(Error::Invariant("crossing links".into()));
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.links.contains(&(a.min(b), a.max(b)))
    }

    pub fn is_noncrossing(&self) -> bool {
        for (i, &l) in self.links.iter().enumerate() {
            for &m in &self.links[i + 1..] {
                if crosses(l, m) {
                    return false;
                }
            }
        }
        true
    }

    /// Partner of index i.
    pub fn partner(&self, i: usize) -> Option<usize> {
        self.links.iter().find_map(|&(a, b)| {
            if a == i {
                Some(b)
            } else if b == i {
                Some(a)
            } else {
                None
            }
        })
    }

    /// Removes {a,b} and relabels the remaining indices to 1..2(N−1) in order.
    pub fn remove_link(&self, a: usize, b: usize) -> Result<Self> {
        let (a, b) = (a.min(b), a.max(b));
        if !self.contains(a, b) {
            return Err(Error::NotFound(a, b));
        }
        let relabel = |i: usize| i - (i > a) as usize - (i > b) as usize;
        let links = self
            .links
            .iter()
            .filter(|&&l| l != (a, b))
            .map(|&(x, y)| (relabel(x), relabel(y)))
            .collect();
        Self::new(links)
    }

    /// Splits along {a,b}: α_R from the links inside (a,b), α_L from the complementary arc
    /// relabelled cyclically starting at b+1.
    pub fn split(&self, a: usize, b: usize) -> Result<(Self, Self)> {
        let (a, b) = (a.min(b), a.max(b));
        if !self.contains(a, b) {
            return Err(Error::NotFound(a, b));
        }
        let n2 = 2 * self.n();
        let inside = |i: usize| i > a && i < b;
        let mut right = Vec::new();
        let mut left = Vec::new();
        for &(x, y) in &self.links {
            if (x, y) == (a, b) {
                continue;
            }
            match (inside(x), inside(y)) {
                (true, true) => right.push((x - a, y - a)),
                (false, false) => {
                    let cyc = |i: usize| if i > b { i - b } else { i + n2 - b };
                    left.push((cyc(x), cyc(y)));
                }
                _ => return Err(Error::Invariant(format!("link {x}-{y} straddles {a}-{b}"))),
            }
        }
        Ok((Self::new(right)?, Self::new(left)?))
    }

    /// All noncrossing perfect matchings of {1..2N}.
    pub fn enumerate(n: usize) -> Result<Vec<Self>> {
        if n > MAX_N {
            return Err(Error::Capacity(format!("N = {n} exceeds the enumeration limit {MAX_N}")));
        }
        let mut out = Vec::new();
        for links in matchings(1, 2 * n) {
            out.push(Self::new(links)?);
        }
        Ok(out)
    }
}

/// Noncrossing matchings of the consecutive range lo..=hi.
fn matchings(lo: usize, hi: usize) -> Vec<Vec<(usize, usize)>> {
    if lo > hi {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut j = lo + 1;
    while j <= hi {
        let inner = matchings(lo + 1, j - 1);
        let outer = matchings(j + 1, hi);
        for i in &inner {
            for o in &outer {
                let mut v = Vec::with_capacity(1 + i.len() + o.len());
                v.push((lo, j));
                v.extend_from_slice(i);
                v.extend_from_slice(o);
                out.push(v);
            }
        }
        j += 2;
    }
    out
}

impl fmt::Display for LinkPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.links.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for LinkPattern {
    type Err = Error;

    /// Parses "1-4,2-3"; the empty string is the empty pattern.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::empty());
        }
        let mut links = Vec::new();
        for part in s.split(',') {
            let (x, y) = part
                .trim()
                .split_once('-')
                .ok_or_else(|| Error::Parse(format!("expected a-b, got '{part}'")))?;
            let x: usize = x.trim().parse().map_err(|_| Error::Parse(format!("bad index '{x}'")))?;
            let y: usize = y.trim().parse().map_err(|_| Error::Parse(format!("bad index '{y}'")))?;
            links.push((x, y));
        }
        Self::new(links)
    }
}
