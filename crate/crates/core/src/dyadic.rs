//! Translated dyadic grids on a finite window, good/bad cubes and the
//! geometric quantities used by the pair decomposition.
//!
//! Coordinates are exact fixed-point dyadic rationals with resolution
//! `2^-FRAC`, so classification predicates never depend on rounding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Fractional bits of the fixed-point coordinate representation.
pub const FRAC: u32 = 40;
/// How far above `k_min` ancestor searches may climb.
pub const ANCESTOR_HEADROOM: i32 = 24;
const MIN_LEVEL: i32 = FRAC as i32 - 61;

/// Exact dyadic rational `ticks · 2^-FRAC`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Dyadic(pub i64);

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic(0);

    /// `2^-k`.
    pub fn pow2(k: i32) -> Dyadic {
        Dyadic(side_ticks(k))
    }

    pub fn from_ratio(num: i64, k: i32) -> Dyadic {
        Dyadic(num * side_ticks(k))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / (1u64 << FRAC) as f64
    }
}

impl std::ops::Add for Dyadic {
    type Output = Dyadic;
    fn add(self, o: Dyadic) -> Dyadic {
        Dyadic(self.0 + o.0)
    }
}

impl std::ops::Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, o: Dyadic) -> Dyadic {
        Dyadic(self.0 - o.0)
    }
}

/// Sidelength of a level-`k` cube in ticks.
#[inline]
pub fn side_ticks(k: i32) -> i64 {
    debug_assert!(k <= FRAC as i32 && k >= MIN_LEVEL, "level {k} out of range");
    1i64 << (FRAC as i32 - k)
}

/// Finite window `[0, 2^L)^D` with admitted scales `k_min..=k_max`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Window<const D: usize> {
    pub level: i32,
    pub k_min: i32,
    pub k_max: i32,
}

impl<const D: usize> Window<D> {
    pub fn new(level: i32, k_min: i32, k_max: i32) -> Result<Self> {
        if D == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if k_min > k_max {
            return Err(Error::InvalidArgument(format!("k_min {k_min} > k_max {k_max}")));
        }
        if !(0..=20).contains(&level) {
            return Err(Error::InvalidArgument(format!("window level {level} outside 0..=20")));
        }
        if k_min < -level {
            return Err(Error::InvalidArgument(format!(
                "level-{k_min} cubes do not fit in a window of level {level}"
            )));
        }
        if k_max > FRAC as i32 - 4 {
            return Err(Error::InvalidArgument(format!("k_max {k_max} too fine")));
        }
        Ok(Window { level, k_min, k_max })
    }

    pub fn depth(&self) -> u32 {
        (self.k_max - self.k_min + 1) as u32
    }

    /// Coarsest level an ancestor search may reach.
    pub fn ceiling(&self) -> i32 {
        (self.k_min - ANCESTOR_HEADROOM).max(MIN_LEVEL)
    }

    pub fn extent_ticks(&self) -> i64 {
        side_ticks(-self.level)
    }

    pub fn region(&self) -> Region<D> {
        Region { lo: [0; D], hi: [self.extent_ticks(); D] }
    }

    /// Lattice indices (per axis) of the level-`k` cubes lying inside the window.
    pub fn index_range(&self, k: i32, shift: &GridShift<D>) -> [(i64, i64); D] {
        let side = side_ticks(k);
        let off = shift.offset(k);
        let ext = self.extent_ticks();
        let mut out = [(0, 0); D];
        for a in 0..D {
            // corner = l·side + off must satisfy 0 <= corner and corner + side <= ext.
            let lo = (-off[a]).div_euclid(side) + i64::from((-off[a]).rem_euclid(side) != 0);
            let hi = (ext - side - off[a]).div_euclid(side);
            out[a] = (lo, hi);
        }
        out
    }

    /// All level-`k` cubes inside the window, in lexicographic index order.
    pub fn cubes_at(&self, k: i32, shift: &GridShift<D>) -> Vec<Cube<D>> {
        let ranges = self.index_range(k, shift);
        let mut out = Vec::new();
        let mut l = [0i64; D];
        for a in 0..D {
            if ranges[a].0 > ranges[a].1 {
                return out;
            }
            l[a] = ranges[a].0;
        }
        loop {
            out.push(Cube { k, l });
            let mut a = D;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                if l[a] < ranges[a].1 {
                    l[a] += 1;
                    for b in a + 1..D {
                        l[b] = ranges[b].0;
                    }
                    break;
                }
            }
        }
    }

    /// All cubes of all admitted levels, coarse to fine.
    pub fn all_cubes(&self, shift: &GridShift<D>) -> Vec<Cube<D>> {
        (self.k_min..=self.k_max).flat_map(|k| self.cubes_at(k, shift)).collect()
    }
}

/// Random translation `ω = (ω_j)` restricted to `k_min..=k_max`, together
/// with the goodness parameters `(r, θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridShift<const D: usize> {
    pub window: Window<D>,
    /// `omega[j - k_min]` for `j` in `k_min..=k_max`.
    pub omega: Vec<[bool; D]>,
    pub seed: u64,
    pub r: u32,
    pub theta: f64,
    /// `offsets[k - k_min] = Σ_{k<j≤k_max} 2^-j ω_j`, in ticks.
    offsets: Vec<[i64; D]>,
}

impl<const D: usize> GridShift<D> {
    pub fn from_bits(window: Window<D>, omega: Vec<[bool; D]>, r: u32, theta: f64) -> Result<Self> {
        if omega.len() != window.depth() as usize {
            return Err(Error::InvalidArgument(format!(
                "omega has {} levels, window has {}",
                omega.len(),
                window.depth()
            )));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidArgument(format!("theta {theta} outside (0,1]")));
        }
        let mut offsets = vec![[0i64; D]; omega.len()];
        let mut acc = [0i64; D];
        for idx in (0..omega.len()).rev() {
            offsets[idx] = acc;
            let j = window.k_min + idx as i32;
            for a in 0..D {
                if omega[idx][a] {
                    acc[a] += side_ticks(j);
                }
            }
        }
        Ok(GridShift { window, omega, seed: 0, r, theta, offsets })
    }

    /// The unshifted reference grid.
    pub fn zero(window: Window<D>, r: u32, theta: f64) -> Result<Self> {
        Self::from_bits(window, vec![[false; D]; window.depth() as usize], r, theta)
    }

    /// Sample number `sample` of the ω stream for `seed`.
    pub fn random(window: Window<D>, seed: u64, sample: u64, r: u32, theta: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sample);
        let omega = (0..window.depth()).map(|_| std::array::from_fn(|_| rng.random::<bool>())).collect();
        let mut g = Self::from_bits(window, omega, r, theta)?;
        g.seed = seed;
        Ok(g)
    }

    /// `ω_j`, zero outside the retained range.
    pub fn bit(&self, j: i32, axis: usize) -> bool {
        if j < self.window.k_min || j > self.window.k_max {
            false
        } else {
            self.omega[(j - self.window.k_min) as usize][axis]
        }
    }

    /// `Σ_{j>k} 2^-j ω_j` in ticks (the translation of level-`k` cubes).
    pub fn offset(&self, k: i32) -> [i64; D] {
        if k >= self.window.k_max {
            [0; D]
        } else if k < self.window.k_min {
            let mut o = self.offsets[0];
            for (a, v) in o.iter_mut().enumerate() {
                if self.omega[0][a] {
                    *v += side_ticks(self.window.k_min);
                }
            }
            o
        } else {
            self.offsets[(k - self.window.k_min) as usize]
        }
    }

    pub fn corner(&self, c: &Cube<D>) -> [i64; D] {
        let side = side_ticks(c.k);
        let off = self.offset(c.k);
        std::array::from_fn(|a| c.l[a] * side + off[a])
    }

    pub fn region(&self, c: &Cube<D>) -> Region<D> {
        let lo = self.corner(c);
        let side = side_ticks(c.k);
        Region { lo, hi: std::array::from_fn(|a| lo[a] + side) }
    }

    pub fn parent(&self, c: &Cube<D>) -> Cube<D> {
        Cube {
            k: c.k - 1,
            l: std::array::from_fn(|a| (c.l[a] - i64::from(self.bit(c.k, a))).div_euclid(2)),
        }
    }

    /// Ancestor at level `k ≤ c.k`.
    pub fn ancestor(&self, c: &Cube<D>, k: i32) -> Cube<D> {
        let mut cur = *c;
        while cur.k > k {
            cur = self.parent(&cur);
        }
        cur
    }

    /// Level-`k` cube of this grid containing the point `x` (ticks).
    pub fn cube_containing(&self, x: [i64; D], k: i32) -> Cube<D> {
        let side = side_ticks(k);
        let off = self.offset(k);
        Cube { k, l: std::array::from_fn(|a| (x[a] - off[a]).div_euclid(side)) }
    }

    /// Relative position of `c` inside its ancestor `n` levels up, per axis.
    pub fn relative_position(&self, c: &Cube<D>, n: u32) -> [u64; D] {
        let mut p = [0u64; D];
        let mut cur = *c;
        for t in 0..n {
            for a in 0..D {
                let child = (cur.l[a] - i64::from(self.bit(cur.k, a))).rem_euclid(2) as u64;
                p[a] |= child << t;
            }
            cur = self.parent(&cur);
        }
        p
    }
}

/// A cube of a translated grid: `I ∔ ω` where `I = 2^-k (l + [0,1)^D)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Cube<const D: usize> {
    pub k: i32,
    #[serde(with = "serde_arrays")]
    pub l: [i64; D],
}

mod serde_arrays {
    use serde::Serializer;
    pub fn serialize<S: Serializer, const D: usize>(v: &[i64; D], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }
}

impl<const D: usize> Cube<D> {
    pub fn new(k: i32, l: [i64; D]) -> Self {
        Cube { k, l }
    }

    pub fn sidelength(&self) -> Dyadic {
        Dyadic::pow2(self.k)
    }

    /// `|I| = ℓ(I)^D` as a float.
    pub fn volume(&self) -> f64 {
        (-(self.k as f64) * D as f64).exp2()
    }
}

/// Half-open axis-parallel box in ticks.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Region<const D: usize> {
    pub lo: [i64; D],
    pub hi: [i64; D],
}

impl<const D: usize> Region<D> {
    /// ℓ∞ distance between the closures.
    pub fn dist(&self, o: &Region<D>) -> i64 {
        (0..D).map(|a| (self.lo[a] - o.hi[a]).max(o.lo[a] - self.hi[a]).max(0)).max().unwrap_or(0)
    }

    pub fn contains(&self, o: &Region<D>) -> bool {
        (0..D).all(|a| self.lo[a] <= o.lo[a] && o.hi[a] <= self.hi[a])
    }

    pub fn intersects(&self, o: &Region<D>) -> bool {
        (0..D).all(|a| self.lo[a] < o.hi[a] && o.lo[a] < self.hi[a])
    }

    /// Concentric dilate by the odd factor `m`.
    pub fn dilate(&self, m: u32) -> Region<D> {
        debug_assert!(m % 2 == 1);
        let half = (m as i64 - 1) / 2;
        Region {
            lo: std::array::from_fn(|a| self.lo[a] - half * (self.hi[a] - self.lo[a])),
            hi: std::array::from_fn(|a| self.hi[a] + half * (self.hi[a] - self.lo[a])),
        }
    }

    pub fn contains_point(&self, x: &[i64; D]) -> bool {
        (0..D).all(|a| self.lo[a] <= x[a] && x[a] < self.hi[a])
    }
}

/// Real geometry of a shifted cube.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CubeGeometry<const D: usize> {
    pub corner: [Dyadic; D],
    pub side: Dyadic,
}

impl<const D: usize> CubeGeometry<D> {
    pub fn center(&self) -> [f64; D] {
        std::array::from_fn(|a| self.corner[a].to_f64() + 0.5 * self.side.to_f64())
    }
}

/// `I ∔ ω`: the corner of `I` translated by `Σ_{2^-j < ℓ(I)} 2^-j ω_j`.
pub fn shifted_cube<const D: usize>(i: &Cube<D>, omega: &GridShift<D>) -> CubeGeometry<D> {
    let c = omega.corner(i);
    CubeGeometry { corner: c.map(Dyadic), side: i.sidelength() }
}

/// `Θ(t) = t^θ`.
pub fn modulus(t: f64, theta: f64) -> f64 {
    t.powf(theta)
}

/// Whether position `p` at gap `n` is within `2^{n(1-θ)}` sidelengths of the
/// ancestor's boundary.
#[inline]
fn near_boundary(p: u64, n: u32, theta: f64) -> bool {
    let edge = p.min((1u64 << n) - 1 - p) as f64;
    edge <= (n as f64 * (1.0 - theta)).exp2()
}

/// Bad-cube test: some ancestor `J` with `ℓ(J) ≥ 2^r ℓ(I)` and level at least
/// `k_min` has `dist(I, ∂J) ≤ Θ(ℓ(I)/ℓ(J)) ℓ(J)`.
pub fn is_bad<const D: usize>(i: &Cube<D>, omega: &GridShift<D>) -> Result<bool> {
    let w = &omega.window;
    let r = omega.r;
    if i.k - (r as i32) < w.k_min {
        return Err(Error::ScaleRange { level: i.k, r, k_min: w.k_min });
    }
    let max_gap = (i.k - w.k_min) as u32;
    let mut p = [0u64; D];
    let mut cur = *i;
    for n in 1..=max_gap {
        for a in 0..D {
            let child = (cur.l[a] - i64::from(omega.bit(cur.k, a))).rem_euclid(2) as u64;
            p[a] |= child << (n - 1);
        }
        cur = omega.parent(&cur);
        if n >= r && p.iter().any(|&pa| near_boundary(pa, n, omega.theta)) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Badness where classifiable; cubes without admissible witnesses count as good.
pub fn is_bad_or_unclassified<const D: usize>(i: &Cube<D>, omega: &GridShift<D>) -> bool {
    is_bad(i, omega).unwrap_or(false)
}

/// `D(I,J) = ℓ(I) + dist(I,J) + ℓ(J)` (ticks).
pub fn long_distance<const D: usize>(i: &Cube<D>, j: &Cube<D>, omega: &GridShift<D>) -> Dyadic {
    let ri = omega.region(i);
    let rj = omega.region(j);
    Dyadic(side_ticks(i.k) + ri.dist(&rj) + side_ticks(j.k))
}

/// Result of [`ancestor_join`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Join<const D: usize> {
    pub k: Cube<D>,
    pub i: u32,
    pub j: u32,
}

/// Smallest grid cube containing both regions, searching upward from level
/// `start` to the window ceiling.
pub fn smallest_container<const D: usize>(
    a: &Region<D>,
    b: &Region<D>,
    start: i32,
    omega: &GridShift<D>,
) -> Option<Cube<D>> {
    let ceiling = omega.window.ceiling();
    let mut k = start;
    while k >= ceiling {
        let c = omega.cube_containing(a.lo, k);
        let rc = omega.region(&c);
        if rc.contains(a) && rc.contains(b) {
            return Some(c);
        }
        k -= 1;
    }
    None
}

/// `I ∨ J`: the smallest grid cube containing `mI ∪ mJ`, with
/// `(i, j) = (log2 ℓ(K)/ℓ(I), log2 ℓ(K)/ℓ(J))`.
pub fn ancestor_join<const D: usize>(i: &Cube<D>, j: &Cube<D>, m: u32, omega: &GridShift<D>) -> Result<Join<D>> {
    let a = omega.region(i).dilate(m);
    let b = omega.region(j).dilate(m);
    let k = smallest_container(&a, &b, i.k.min(j.k), omega)
        .ok_or(Error::NoContainingAncestor { level_i: i.k, level_j: j.k })?;
    Ok(Join { k, i: (i.k - k.k) as u32, j: (j.k - k.k) as u32 })
}

/// Lemma 2.3 bound `(8d/θ) 2^{-rθ}`.
pub fn lemma_bound(d: usize, r: u32, theta: f64) -> f64 {
    8.0 * d as f64 / theta * (-(r as f64) * theta).exp2()
}

/// Smallest `r` with `(8d/θ) 2^{-rθ} ≤ 1/2`.
pub fn default_r(d: usize, theta: f64) -> u32 {
    let mut r = 0;
    while lemma_bound(d, r, theta) > 0.5 {
        r += 1;
    }
    r
}

/// Exact probability that a cube with `gaps` admissible ancestor levels
/// above it is bad, by enumerating relative positions.
pub fn pi_bad_exact(gaps: u32, r: u32, theta: f64, d: usize) -> Result<f64> {
    if gaps < r {
        return Ok(0.0);
    }
    if gaps > 26 {
        return Err(Error::Resource(format!("{gaps} ancestor levels exceed the enumeration limit")));
    }
    let total = 1u64 << gaps;
    let bad = (0..total)
        .into_par_iter()
        .filter(|&p| (r..=gaps).any(|n| near_boundary(p & ((1u64 << n) - 1), n, theta)))
        .count() as f64;
    let q = bad / total as f64;
    Ok(1.0 - (1.0 - q).powi(d as i32))
}

/// Empirical badness frequency and Lemma 2.3 bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodnessReport {
    pub samples: u64,
    pub pi_bad_hat: f64,
    pub stderr: f64,
    pub bound: f64,
    pub r: u32,
    pub theta: f64,
    pub d: usize,
    /// Frequencies for the additional reference cubes.
    pub other_references: Vec<f64>,
    /// All reference frequencies agree with the main one within 3 combined stderr.
    pub references_agree: bool,
}

fn reference_cubes<const D: usize>(window: &Window<D>) -> Vec<Cube<D>> {
    let k = (window.k_min + window.k_max + 1).div_euclid(2);
    let n = 1i64 << (window.level + k).max(0);
    let mid = n / 2;
    [mid, mid + 1, n / 3, 1].iter().map(|&l| Cube { k, l: [l; D] }).collect()
}

fn frequency(hits: u64, n: u64) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Monte Carlo estimate of the badness probability of a mid-scale reference
/// cube, plus a consistency check across several reference cubes.
pub fn pi_bad_estimate<const D: usize>(
    window: &Window<D>,
    r: u32,
    theta: f64,
    samples: u64,
    seed: u64,
) -> Result<GoodnessReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    let refs = reference_cubes(window);
    let flags: Vec<Vec<bool>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let g = GridShift::random(*window, seed, s, r, theta)?;
            refs.iter().map(|c| is_bad(c, &g)).collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<_>>()?;
    let counts: Vec<u64> = (0..refs.len()).map(|c| flags.iter().filter(|f| f[c]).count() as u64).collect();
    let (p0, se0) = frequency(counts[0], samples);
    let mut others = Vec::new();
    let mut agree = true;
    for &c in &counts[1..] {
        let (p, se) = frequency(c, samples);
        let tol = 3.0 * (se0 * se0 + se * se).sqrt();
        agree &= (p - p0).abs() <= tol.max(1e-12);
        others.push(p);
    }
    Ok(GoodnessReport {
        samples,
        pi_bad_hat: p0,
        stderr: se0,
        bound: lemma_bound(D, r, theta),
        r,
        theta,
        d: D,
        other_references: others,
        references_agree: agree,
    })
}

/// Chi-square test of independence between badness and the position of
/// the reference cube's shifted corner.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndependenceTest {
    pub samples: u64,
    /// `table[bin][bad]`, bins are the two position bits below the cube scale.
    pub table: Vec<[u64; 2]>,
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
}

pub fn independence_test<const D: usize>(
    window: &Window<D>,
    r: u32,
    theta: f64,
    samples: u64,
    seed: u64,
) -> Result<IndependenceTest> {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let refc = reference_cubes(window)[0];
    if refc.k + 2 > window.k_max {
        return Err(Error::InvalidArgument("window too shallow below the reference scale".into()));
    }
    let rows: Vec<(usize, bool)> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let g = GridShift::random(*window, seed, s, r, theta)?;
            let bin = usize::from(g.bit(refc.k + 1, 0)) * 2 + usize::from(g.bit(refc.k + 2, 0));
            Ok((bin, is_bad(&refc, &g)?))
        })
        .collect::<Result<_>>()?;
    let mut table = vec![[0u64; 2]; 4];
    for (bin, bad) in rows {
        table[bin][usize::from(bad)] += 1;
    }
    let n = samples as f64;
    let col: [f64; 2] = std::array::from_fn(|b| table.iter().map(|t| t[b] as f64).sum());
    let mut stat = 0.0;
    for t in &table {
        let row: f64 = (t[0] + t[1]) as f64;
        for b in 0..2 {
            let e = row * col[b] / n;
            if e > 0.0 {
                stat += (t[b] as f64 - e).powi(2) / e;
            }
        }
    }
    let dof = 3;
    let p_value = if col.contains(&0.0) {
        1.0
    } else {
        ChiSquared::new(dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?.sf(stat)
    };
    Ok(IndependenceTest { samples, table, statistic: stat, dof, p_value })
}

/// Number of cube pairs in the window whose intersection is not `∅`, `I` or `J`.
pub fn nestedness_violations<const D: usize>(omega: &GridShift<D>) -> usize {
    let cubes = omega.window.all_cubes(omega);
    let regions: Vec<Region<D>> = cubes.iter().map(|c| omega.region(c)).collect();
    (0..regions.len())
        .into_par_iter()
        .map(|x| {
            let a = &regions[x];
            regions[x + 1..]
                .iter()
                .filter(|b| a.intersects(b) && !a.contains(b) && !b.contains(a))
                .count()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w1(level: i32, k_min: i32, k_max: i32) -> Window<1> {
        Window::new(level, k_min, k_max).unwrap()
    }

    fn bits1(w: Window<1>, set: &[i32]) -> GridShift<1> {
        let omega = (w.k_min..=w.k_max).map(|j| [set.contains(&j)]).collect();
        GridShift::from_bits(w, omega, 2, 1.0).unwrap()
    }

    fn f(x: i64) -> f64 {
        Dyadic(x).to_f64()
    }

    #[test]
    fn shifted_cube_examples() {
        let w = w1(2, 0, 6);
        let zero = bits1(w, &[]);
        let g = shifted_cube(&Cube::new(0, [0]), &zero);
        assert_eq!((g.corner[0].to_f64(), g.side.to_f64()), (0.0, 1.0));

        let one = bits1(w, &[1]);
        let g = shifted_cube(&Cube::new(0, [0]), &one);
        assert_eq!(g.corner[0].to_f64(), 0.5);

        // Only j = 2 has 2^-j < 1/2: shift 1/4.
        let two = bits1(w, &[1, 2]);
        let g = shifted_cube(&Cube::new(1, [0]), &two);
        assert_eq!(g.corner[0].to_f64(), 0.25);
        assert_eq!(g.center()[0], 0.5);
    }

    #[test]
    fn shift_uses_only_finer_bits() {
        let w = w1(3, -1, 8);
        for seed in 0..20 {
            let g = GridShift::<1>::random(w, seed, 0, 3, 1.0).unwrap();
            for k in w.k_min..=w.k_max {
                let direct: i64 = (k + 1..=w.k_max).filter(|&j| g.bit(j, 0)).map(side_ticks).sum();
                assert_eq!(g.offset(k)[0], direct);
            }
        }
    }

    #[test]
    fn long_distance_examples() {
        let w = w1(2, 0, 4);
        let z = bits1(w, &[]);
        let u = Cube::new(0, [0]);
        assert_eq!(long_distance(&u, &u, &z).to_f64(), 2.0);
        assert_eq!(long_distance(&u, &Cube::new(0, [2]), &z).to_f64(), 3.0);
        // Adjacent halves: 1/2 + 0 + 1/2.
        assert_eq!(long_distance(&Cube::new(1, [0]), &Cube::new(1, [1]), &z).to_f64(), 1.0);
    }

    #[test]
    fn ancestor_join_examples() {
        let w = w1(2, 0, 6);
        let z = bits1(w, &[]);
        let i = Cube::new(3, [3]);
        let j = ancestor_join(&i, &i, 1, &z).unwrap();
        assert_eq!((j.k, j.i, j.j), (i, 0, 0));

        let q = Cube::new(2, [1]); // [1/4, 1/2)
        let j = ancestor_join(&q, &q, 3, &z).unwrap();
        assert_eq!((j.k, j.i, j.j), (Cube::new(0, [0]), 2, 2));
        let j = ancestor_join(&q, &Cube::new(2, [2]), 3, &z).unwrap();
        assert_eq!(j.k, Cube::new(0, [0]));
    }

    #[test]
    fn ancestor_join_is_minimal() {
        let w = w1(3, 0, 6);
        let (mut joined, mut escapes) = (0, 0);
        for seed in 0..5 {
            let g = GridShift::<1>::random(w, seed, 0, 3, 1.0).unwrap();
            let cubes = w.all_cubes(&g);
            for (x, a) in cubes.iter().enumerate().step_by(7) {
                for b in cubes[x..].iter().step_by(5) {
                    let (s, t) = if a.k >= b.k { (a, b) } else { (b, a) };
                    let (ms, mt) = (g.region(s).dilate(3), g.region(t).dilate(3));
                    let join = match ancestor_join(s, t, 3, &g) {
                        Ok(j) => j,
                        Err(e) => {
                            // Escapes straddle the grid point fixed at every coarse level.
                            assert!(matches!(e, Error::NoContainingAncestor { .. }));
                            let top = g.region(&g.cube_containing(ms.lo, w.ceiling()));
                            assert!(!(top.contains(&ms) && top.contains(&mt)));
                            let pivot = g.offset(w.k_min - 1)[0];
                            assert!(ms.lo[0].min(mt.lo[0]) < pivot && pivot < ms.hi[0].max(mt.hi[0]));
                            escapes += 1;
                            continue;
                        }
                    };
                    joined += 1;
                    let rk = g.region(&join.k);
                    assert!(rk.contains(&ms) && rk.contains(&mt));
                    if join.k.k < t.k {
                        // Any finer grid cube fails containment.
                        let finer = g.cube_containing(ms.lo, join.k.k + 1);
                        let rf = g.region(&finer);
                        assert!(!(rf.contains(&ms) && rf.contains(&mt)));
                    }
                }
            }
        }
        assert!(joined > escapes);
    }

    /// Witnesses enumerated directly from window cubes and boxes.
    fn brute_bad(i: &Cube<1>, g: &GridShift<1>) -> bool {
        let ri = g.region(i);
        (g.window.k_min..=i.k - g.r as i32).any(|kj| {
            g.window.cubes_at(kj, g).iter().chain(std::iter::once(&g.ancestor(i, kj))).any(|jc| {
                let rj = g.region(jc);
                if !rj.contains(&ri) {
                    return false;
                }
                let d = (ri.lo[0] - rj.lo[0]).min(rj.hi[0] - ri.hi[0]);
                let lj = side_ticks(kj) as f64;
                d as f64 <= lj * modulus(side_ticks(i.k) as f64 / lj, g.theta)
            })
        })
    }

    #[test]
    fn is_bad_examples() {
        let w = w1(0, 0, 6);
        let z = bits1(w, &[]);
        // I = [7/16, 8/16): last child of [0,1/2), adjacent to its boundary.
        let i = Cube::new(4, [7]);
        assert!(is_bad(&i, &z).unwrap());
        assert!(brute_bad(&i, &z));
        // Face-sharing with an ancestor exactly r levels up.
        assert!(is_bad(&Cube::new(4, [4]), &z).unwrap());
        // With θ = 1, r = 2 every cube is bad.
        for l in 0..16 {
            assert!(is_bad(&Cube::new(4, [l]), &z).unwrap());
        }
        // r = 3: positions 2..5 at gap 3 are interior.
        let z3 = GridShift::from_bits(w, z.omega.clone(), 3, 1.0).unwrap();
        let central = Cube::new(3, [3]);
        assert!(!is_bad(&central, &z3).unwrap());
        assert!(!brute_bad(&central, &z3));
    }

    #[test]
    fn is_bad_scale_range_error() {
        let w = w1(0, 0, 6);
        let z = bits1(w, &[]);
        assert!(matches!(is_bad(&Cube::new(1, [0]), &z), Err(Error::ScaleRange { .. })));
    }

    #[test]
    fn is_bad_matches_brute_force() {
        let w = w1(1, 0, 7);
        for (seed, theta) in [(1u64, 1.0), (2, 0.5), (3, 0.3)] {
            for r in 1..4 {
                let g0 = GridShift::<1>::random(w, seed, 7, r, theta).unwrap();
                for k in (r as i32)..=7 {
                    for c in w.cubes_at(k, &g0) {
                        assert_eq!(is_bad(&c, &g0).unwrap(), brute_bad(&c, &g0), "{c:?} r={r} θ={theta}");
                    }
                }
            }
        }
    }

    #[test]
    fn pi_bad_exact_closed_form() {
        // θ = 1: only the shallowest gap matters; 4 of 2^r positions are bad.
        for r in 2..10 {
            let p = pi_bad_exact(r + 3, r, 1.0, 1).unwrap();
            assert!((p - 4.0 / (1u64 << r) as f64).abs() < 1e-15, "r={r}");
        }
        assert_eq!(pi_bad_exact(4, 2, 1.0, 1).unwrap(), 1.0);
        let p1 = pi_bad_exact(8, 5, 1.0, 1).unwrap();
        let p2 = pi_bad_exact(8, 5, 1.0, 2).unwrap();
        assert!((p2 - (1.0 - (1.0 - p1).powi(2))).abs() < 1e-15);
    }

    #[test]
    fn pi_bad_estimate_matches_enumeration() {
        let w = w1(0, 0, 8);
        let rep = pi_bad_estimate(&w, 2, 1.0, 2000, 11).unwrap();
        assert_eq!(rep.pi_bad_hat, 1.0);
        assert!(rep.pi_bad_hat <= rep.bound.min(1.0));
        let rep = pi_bad_estimate(&w, 3, 1.0, 20000, 5).unwrap();
        let exact = pi_bad_exact(4, 3, 1.0, 1).unwrap();
        assert!((rep.pi_bad_hat - exact).abs() < 4.0 * rep.stderr, "{} vs {exact}", rep.pi_bad_hat);
        assert!(rep.references_agree);
        assert_eq!(rep.bound, lemma_bound(1, 3, 1.0));
    }

    #[test]
    fn bounds_and_defaults() {
        assert_eq!(lemma_bound(1, 5, 1.0), 0.25);
        assert_eq!(default_r(1, 0.25), 24);
        assert!(lemma_bound(1, default_r(1, 0.25), 0.25) <= 0.5);
        assert!(lemma_bound(1, default_r(1, 0.25) - 1, 0.25) > 0.5);
    }

    #[test]
    fn nested_in_one_and_two_dimensions() {
        let w = w1(3, -1, 6);
        for seed in 0..4 {
            let g = GridShift::random(w, seed, 0, 3, 1.0).unwrap();
            assert_eq!(nestedness_violations(&g), 0);
        }
        let w2 = Window::<2>::new(1, 0, 4).unwrap();
        let g = GridShift::random(w2, 9, 0, 2, 1.0).unwrap();
        assert!(w2.all_cubes(&g).len() < 10_000);
        assert_eq!(nestedness_violations(&g), 0);
    }

    #[test]
    fn window_enumeration_stays_inside() {
        let w = Window::<2>::new(2, -1, 5).unwrap();
        let g = GridShift::random(w, 3, 1, 2, 1.0).unwrap();
        for c in w.all_cubes(&g) {
            assert!(w.region().contains(&g.region(&c)));
        }
        // Unshifted grid tiles the window completely.
        let z = GridShift::zero(w, 2, 1.0).unwrap();
        assert_eq!(w.cubes_at(0, &z).len(), 16);
        assert_eq!(f(z.corner(&Cube::new(1, [3, 1]))[0]), 1.5);
    }

    #[test]
    fn parent_contains_child() {
        let w = Window::<2>::new(2, -2, 6).unwrap();
        let g = GridShift::random(w, 4, 2, 2, 1.0).unwrap();
        for c in w.cubes_at(6, &g).iter().step_by(13) {
            let mut cur = *c;
            while cur.k > w.ceiling() + 1 {
                let p = g.parent(&cur);
                assert!(g.region(&p).contains(&g.region(&cur)));
                cur = p;
            }
        }
    }
}
