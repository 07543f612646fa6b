//! Compactly supported orthonormal wavelet systems built from refinement
//! filters by the cascade algorithm.
//!
//! Both mother functions are stored on the common support `[1-N, N]` of a
//! filter of length `2N`; the scaling function is re-centred by `N-1` so that
//! every `ψ_I^η` is supported in the concentric dilate `mI` with `m = 2N-1`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{side_ticks, Cube, GridShift, Region, FRAC};
use crate::error::{Error, Result};
use crate::filters;
use crate::mesh::MeshFn;

pub const BUILTIN_FILTERS: [&str; 6] = ["haar", "db2", "db3", "db4", "db6", "db8"];

const CASCADE_TOL: f64 = 1e-10;
const CASCADE_CAP: usize = 60;
const TWO_SCALE_TOL: f64 = 1e-8;
const STABLE_RATIO: f64 = 1.1;
const MAX_PROBED_ORDER: u32 = 4;

/// Refinement filter `h` (low-pass, `h[0]` first).
#[derive(Clone, Debug, PartialEq)]
pub struct Filter {
    pub id: String,
    pub h: Vec<f64>,
}

impl Filter {
    pub fn builtin(id: &str) -> Result<Filter> {
        let h: &[f64] = match id {
            "haar" | "db1" => &filters::HAAR,
            "db2" => &filters::DB2,
            "db3" => &filters::DB3,
            "db4" => &filters::DB4,
            "db6" => &filters::DB6,
            "db8" => &filters::DB8,
            _ => return Err(Error::InvalidConfig(format!("unknown filter id '{id}'"))),
        };
        Ok(Filter { id: id.to_string(), h: h.to_vec() })
    }

    /// One coefficient per line; blank lines and `#` comments are ignored.
    pub fn parse(id: &str, text: &str) -> Result<Filter> {
        let mut h = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let t = line.split('#').next().unwrap_or("").trim();
            if t.is_empty() {
                continue;
            }
            let v: f64 = t
                .parse()
                .map_err(|_| Error::FilterInvalid(format!("line {}: cannot parse '{t}'", n + 1)))?;
            h.push(v);
        }
        Ok(Filter { id: id.to_string(), h })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Filter> {
        let text = std::fs::read_to_string(path)?;
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("file").to_string();
        Self::parse(&id, &text)
    }

    /// Builtin id or path to a filter file.
    pub fn resolve(spec: &str) -> Result<Filter> {
        if BUILTIN_FILTERS.contains(&spec) || spec == "db1" {
            Self::builtin(spec)
        } else {
            Self::from_file(std::path::Path::new(spec))
        }
    }

    /// `Σh = √2` and `Σ_n h_n h_{n+2k} = δ_k` within `1e-12`.
    pub fn check_qmf(&self) -> Result<()> {
        let h = &self.h;
        if h.is_empty() || !h.len().is_multiple_of(2) {
            return Err(Error::FilterInvalid(format!("length {} is not even", h.len())));
        }
        let sum: f64 = h.iter().sum();
        if (sum - std::f64::consts::SQRT_2).abs() > 1e-12 {
            return Err(Error::FilterInvalid(format!("sum {sum} differs from sqrt 2")));
        }
        for k in 0..h.len() / 2 {
            let c: f64 = (0..h.len() - 2 * k).map(|n| h[n] * h[n + 2 * k]).sum();
            let target = if k == 0 { 1.0 } else { 0.0 };
            if (c - target).abs() > 1e-12 {
                return Err(Error::FilterInvalid(format!("even-shift product at {k} is {c}")));
            }
        }
        Ok(())
    }

    /// `N` for a filter of length `2N`.
    pub fn half_len(&self) -> usize {
        self.h.len() / 2
    }
}

/// Sampled wavelet system with measured parameters `(m, u, v)`.
#[derive(Clone, Debug)]
pub struct WaveletSystem {
    pub filter_id: String,
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    pub q: u32,
    pub m: u32,
    pub u: u32,
    pub v: i32,
    /// Scaling function samples on `[1-N, N]` at spacing `2^-q` (re-centred).
    pub samples_phi: Vec<f64>,
    /// Wavelet samples on `[1-N, N]` at spacing `2^-q`.
    pub samples_psi: Vec<f64>,
    pub cascade_iterations: usize,
    pub two_scale_residual: f64,
    /// `ratios[o-1]`: finite-difference refinement ratio for order `o`.
    pub regularity_ratios: Vec<f64>,
    /// Mother moments `∫ x^n ψ`, `n = 0..=v+1`.
    pub moments: Vec<f64>,
}

/// JSON summary of a system.
#[derive(Clone, Debug, Serialize)]
pub struct SystemSummary {
    pub filter_id: String,
    pub filter_len: usize,
    pub m: u32,
    pub u: u32,
    pub v: i32,
    pub q: u32,
    pub cascade_iterations: usize,
    pub two_scale_residual: f64,
    pub regularity_ratios: Vec<f64>,
    pub moments: Vec<f64>,
    pub l2_norm_psi: f64,
    pub sup_psi: f64,
}

fn cascade(h: &[f64], q: u32) -> Result<(Vec<f64>, usize, f64)> {
    let len = h.len() - 1;
    let scale = 1usize << q;
    let count = len * scale + 1;
    let mut phi: Vec<f64> = (0..count).map(|n| if n < scale { 1.0 } else { 0.0 }).collect();
    let s2 = std::f64::consts::SQRT_2;
    let mut diff = f64::INFINITY;
    let mut iterations = 0;
    while iterations < CASCADE_CAP {
        iterations += 1;
        let next: Vec<f64> = (0..count)
            .into_par_iter()
            .map(|n| {
                let mut acc = 0.0;
                for (k, hk) in h.iter().enumerate() {
                    let idx = 2 * n as i64 - (k * scale) as i64;
                    if idx >= 0 && (idx as usize) < count {
                        acc += hk * phi[idx as usize];
                    }
                }
                s2 * acc
            })
            .collect();
        diff = next.iter().zip(&phi).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        phi = next;
        if diff < CASCADE_TOL {
            break;
        }
    }
    if diff > TWO_SCALE_TOL {
        return Err(Error::CascadeDiverged { residual: diff });
    }
    Ok((phi, iterations, diff))
}

/// Largest finite difference of order `order`, divided by `step^order`, on
/// the subsampled mesh `samples[::stride]`.
fn fd_sup(samples: &[f64], stride: usize, spacing: f64, order: u32) -> f64 {
    let mut v: Vec<f64> = samples.iter().step_by(stride).copied().collect();
    // Pad with the zero extension on both sides so edge behaviour counts.
    let pad = order as usize;
    let mut ext = vec![0.0; pad];
    ext.append(&mut v);
    ext.extend(std::iter::repeat_n(0.0, pad));
    for _ in 0..order {
        ext = ext.windows(2).map(|w| w[1] - w[0]).collect();
    }
    let h = spacing * stride as f64;
    ext.iter().fold(0.0f64, |m, x| m.max(x.abs())) / h.powi(order as i32)
}

fn moment_1d(samples: &[f64], origin: f64, spacing: f64, n: u32) -> (f64, f64) {
    let mut m = 0.0;
    let mut a = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let x = origin + i as f64 * spacing;
        let t = x.powi(n as i32) * s;
        m += t;
        a += t.abs();
    }
    (m * spacing, a * spacing)
}

impl WaveletSystem {
    /// Cascade build with the targets `u ≥ s_target`, `v ≥ s_target - 1`.
    pub fn build(filter: &Filter, q: u32, s_target: u32) -> Result<WaveletSystem> {
        let sys = Self::build_unchecked(filter, q)?;
        if sys.v < s_target as i32 - 1 {
            return Err(Error::InsufficientMoments { v: sys.v, required: s_target as i32 - 1 });
        }
        if sys.u < s_target {
            return Err(Error::InsufficientSmoothness { u: sys.u, required: s_target });
        }
        Ok(sys)
    }

    /// Cascade build with measured `(m, u, v)` and no target checks.
    pub fn build_unchecked(filter: &Filter, q: u32) -> Result<WaveletSystem> {
        filter.check_qmf()?;
        if !(8..=20).contains(&q) {
            return Err(Error::InvalidArgument(format!("mesh exponent q = {q} outside 8..=20")));
        }
        let h = filter.h.clone();
        let n2 = h.len();
        let big_n = n2 / 2;
        // g_n = (-1)^n h_{1-n}, n in [2-2N, 1]; stored as g[t] with n = t + 2 - 2N.
        let g: Vec<f64> = (0..n2)
            .map(|t| {
                let n = t as i64 + 2 - n2 as i64;
                let sign = if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                sign * h[(1 - n) as usize]
            })
            .collect();
        let (phi, iterations, residual) = cascade(&h, q)?;
        let scale = 1usize << q;
        let count = phi.len();
        let s2 = std::f64::consts::SQRT_2;
        // ψ(x) = √2 Σ g_n φ(2x - n) with x = (1-N) + i 2^-q.
        let psi: Vec<f64> = (0..count)
            .map(|i| {
                let mut acc = 0.0;
                for (t, gt) in g.iter().enumerate() {
                    let n = t as i64 + 2 - n2 as i64;
                    let idx = 2 * (1 - big_n as i64) * scale as i64 - n * scale as i64 + 2 * i as i64;
                    if idx >= 0 && (idx as usize) < count {
                        acc += gt * phi[idx as usize];
                    }
                }
                s2 * acc
            })
            .collect();
        let mut sys = WaveletSystem {
            filter_id: filter.id.clone(),
            h,
            g,
            q,
            m: (n2 - 1) as u32,
            u: 0,
            v: -1,
            samples_phi: phi,
            samples_psi: psi,
            cascade_iterations: iterations,
            two_scale_residual: residual,
            regularity_ratios: Vec::new(),
            moments: Vec::new(),
        };
        sys.measure_regularity();
        sys.measure_moments();
        Ok(sys)
    }

    /// Left end `1-N` of the mother support.
    pub fn origin(&self) -> f64 {
        1.0 - (self.h.len() / 2) as f64
    }

    pub fn spacing(&self) -> f64 {
        (-(self.q as f64)).exp2()
    }

    pub fn mother(&self, eta: bool) -> &[f64] {
        if eta {
            &self.samples_psi
        } else {
            &self.samples_phi
        }
    }

    /// Piecewise-linear interpolation of a mother function.
    pub fn mother_at(&self, eta: bool, t: f64) -> f64 {
        let s = self.mother(eta);
        let pos = (t - self.origin()) / self.spacing();
        if pos < 0.0 || pos > (s.len() - 1) as f64 {
            return 0.0;
        }
        let i = pos.floor() as usize;
        if i + 1 >= s.len() {
            return s[s.len() - 1];
        }
        let f = pos - i as f64;
        s[i] * (1.0 - f) + s[i + 1] * f
    }

    fn probe_ratio(&self, order: u32) -> f64 {
        let coarse = 1usize << 6;
        let fine = 1usize << 5;
        let h = self.spacing();
        [&self.samples_phi, &self.samples_psi]
            .iter()
            .map(|s| fd_sup(s, fine, h, order) / fd_sup(s, coarse, h, order).max(f64::MIN_POSITIVE))
            .fold(0.0f64, f64::max)
    }

    fn measure_regularity(&mut self) {
        self.regularity_ratios = (1..=MAX_PROBED_ORDER).map(|o| self.probe_ratio(o)).collect();
        self.u = self.regularity_ratios.iter().take_while(|&&r| r <= STABLE_RATIO).count() as u32;
    }

    fn measure_moments(&mut self) {
        let cap = self.h.len() as u32 + 1;
        self.moments.clear();
        self.v = -1;
        for n in 0..=cap {
            let (m, a) = moment_1d(&self.samples_psi, self.origin(), self.spacing(), n);
            self.moments.push(m);
            if m.abs() <= 1e-6 * a.max(1.0) {
                self.v = n as i32;
            } else {
                break;
            }
        }
    }

    /// Sup of the finite-difference derivative of order `order` at the finer
    /// probe mesh; errors when the value is not stable under refinement.
    pub fn regularity_probe(&self, order: u32) -> Result<f64> {
        let h = self.spacing();
        if order == 0 {
            return Ok(self.samples_psi.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        let ratio = self.probe_ratio(order);
        if ratio > STABLE_RATIO {
            return Err(Error::NotDifferentiable { order, ratio });
        }
        Ok([&self.samples_phi, &self.samples_psi]
            .iter()
            .map(|s| fd_sup(s, 1 << 5, h, order))
            .fold(0.0, f64::max))
    }

    pub fn summary(&self) -> SystemSummary {
        let h = self.spacing();
        SystemSummary {
            filter_id: self.filter_id.clone(),
            filter_len: self.h.len(),
            m: self.m,
            u: self.u,
            v: self.v,
            q: self.q,
            cascade_iterations: self.cascade_iterations,
            two_scale_residual: self.two_scale_residual,
            regularity_ratios: self.regularity_ratios.clone(),
            moments: self.moments.clone(),
            l2_norm_psi: (h * self.samples_psi.iter().map(|x| x * x).sum::<f64>()).sqrt(),
            sup_psi: self.samples_psi.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }
    }

    /// Support region of the element on a level-`k` cube with corner `corner`
    /// (ticks, per axis): the dilate `mI`.
    pub fn support<const D: usize>(&self, k: i32, corner: [i64; D]) -> Region<D> {
        let side = side_ticks(k);
        let half = (self.m as i64 - 1) / 2;
        Region {
            lo: std::array::from_fn(|a| corner[a] - half * side),
            hi: std::array::from_fn(|a| corner[a] + (half + 1) * side),
        }
    }

    /// 1D element `2^{k/2} ψ^η(2^k x - corner)` sampled on the mesh `2^-p`.
    /// Requires `k ≤ p ≤ k + q` and the corner on the mesh.
    pub fn sample_1d(&self, eta: bool, k: i32, corner_ticks: i64, p: i32) -> Result<MeshFn> {
        let rel = p - k;
        if rel < 0 || rel > self.q as i32 {
            return Err(Error::InvalidArgument(format!(
                "mesh 2^-{p} cannot subsample level {k} at q = {}",
                self.q
            )));
        }
        let unit = 1i64 << (FRAC as i32 - p);
        if corner_ticks % unit != 0 {
            return Err(Error::InvalidArgument(format!("corner not on mesh 2^-{p}")));
        }
        let stride = 1usize << (self.q as i32 - rel);
        let mother = self.mother(eta);
        let amp = (k as f64 / 2.0).exp2();
        let values: Vec<f64> = mother.iter().step_by(stride).map(|v| amp * v).collect();
        let start = corner_ticks / unit + (self.origin() as i64) * (1i64 << rel);
        Ok(MeshFn { p, start, values })
    }
}

/// `ψ_I^η` on a translated grid.
#[derive(Clone, Debug)]
pub struct WaveletFn<'a, const D: usize> {
    pub system: &'a WaveletSystem,
    pub cube: Cube<D>,
    pub eta: [bool; D],
    pub corner: [i64; D],
}

impl<'a, const D: usize> WaveletFn<'a, D> {
    pub fn new(system: &'a WaveletSystem, grid: &GridShift<D>, cube: Cube<D>, eta: [bool; D]) -> Self {
        WaveletFn { system, cube, eta, corner: grid.corner(&cube) }
    }

    pub fn support(&self) -> Region<D> {
        self.system.support(self.cube.k, self.corner)
    }
}

/// `2^{dk/2} ∏ ψ^{η_i}(2^k (x_i - corner_i))`, piecewise-linear between samples.
pub fn evaluate<const D: usize>(w: &WaveletFn<D>, x: [f64; D]) -> f64 {
    let k = w.cube.k as f64;
    let scale = k.exp2();
    let mut v = (D as f64 * k / 2.0).exp2();
    for a in 0..D {
        let c = w.corner[a] as f64 / (1u64 << FRAC) as f64;
        v *= w.system.mother_at(w.eta[a], scale * (x[a] - c));
        if v == 0.0 {
            return 0.0;
        }
    }
    v
}

/// `∫ x^α ψ_I^η(x) dx` by mesh quadrature (product of one-dimensional factors).
pub fn moment<const D: usize>(w: &WaveletFn<D>, alpha: [u32; D]) -> f64 {
    let sys = w.system;
    let ell = (-(w.cube.k as f64)).exp2();
    let mut total = 1.0;
    for a in 0..D {
        let c = w.corner[a] as f64 / (1u64 << FRAC) as f64;
        // x = c + ℓ t with t on the mother mesh.
        let h = sys.spacing();
        let s: f64 = sys
            .mother(w.eta[a])
            .iter()
            .enumerate()
            .map(|(i, v)| (c + ell * (sys.origin() + i as f64 * h)).powi(alpha[a] as i32) * v)
            .sum();
        total *= s * h * ell.sqrt();
    }
    total
}

/// `max |⟨ψ_a, ψ_b⟩ − δ_ab|` over all elements `(cube, η)` with `η` from
/// `etas`, by mesh quadrature at resolution `2^{-(k_coarse + q)}` per pair.
pub fn gram_defect<const D: usize>(
    system: &WaveletSystem,
    grid: &GridShift<D>,
    cubes: &[Cube<D>],
    etas: &[[bool; D]],
) -> Result<f64> {
    let elems: Vec<(Cube<D>, [bool; D])> = cubes.iter().flat_map(|c| etas.iter().map(move |e| (*c, *e))).collect();
    gram_defect_elements(system, grid, &elems)
}

/// [`gram_defect`] over an explicit element list.
pub fn gram_defect_elements<const D: usize>(
    system: &WaveletSystem,
    grid: &GridShift<D>,
    elements: &[(Cube<D>, [bool; D])],
) -> Result<f64> {
    let elems: Vec<(Cube<D>, [bool; D], [i64; D])> =
        elements.iter().map(|(c, e)| (*c, *e, grid.corner(c))).collect();
    let defects: Vec<f64> = (0..elems.len())
        .into_par_iter()
        .map(|x| -> Result<f64> {
            let mut worst: f64 = 0.0;
            for y in x..elems.len() {
                let (ca, ea, pa) = &elems[x];
                let (cb, eb, pb) = &elems[y];
                let p = ca.k.min(cb.k) + system.q as i32;
                let mut ip = 1.0;
                for a in 0..D {
                    let fa = system.sample_1d(ea[a], ca.k, pa[a], p)?;
                    let fb = system.sample_1d(eb[a], cb.k, pb[a], p)?;
                    ip *= fa.inner(&fb);
                }
                let target = if x == y { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(defects.into_iter().fold(0.0, f64::max))
}
