//! Calderón–Zygmund convolution kernels on the line and their application
//! to sampled functions.
//!
//! Two application paths exist. The multiplier path applies the symbol
//! exactly to the piecewise-linear interpolant of the samples: on a mesh of
//! spacing `h` this is the linear convolution with the hat response
//! `c_n = (T Λ_h)(n h)`. The spectral path multiplies a zero-padded periodic
//! DFT by the symbol. The raw kernel quadrature `h² Σ Σ ψ_J K ψ_I` is the
//! independent oracle for disjoint supports.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dyadic::Window;
use crate::error::{Error, Result};
use crate::mesh::{convolve, MeshFn};
use crate::wavelet::WaveletFn;

/// Absolute and relative tolerances of the pairing cross-validation.
pub const CROSS_ABS_TOL: f64 = 1e-6;
pub const CROSS_REL_TOL: f64 = 1e-4;

/// `n`-th derivative of a convolution profile `k(u)`, `K(x,y) = k(x-y)`.
pub type ProfileFn = Arc<dyn Fn(f64, u32) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum KernelKind {
    /// `K(x,y) = 1/(π(x-y))`, symbol `-i sgn ξ`.
    Hilbert,
    /// `K(x,y) = (x-y)/(π((x-y)² + a²))`, symbol `-i sgn ξ e^{-2πa|ξ|}`.
    ConjugatePoisson { a: f64 },
    /// Symbol `1`: calibration mode, no off-diagonal kernel.
    Identity,
    /// User-supplied profile; only the raw quadrature path is available.
    Custom(ProfileFn),
}

impl std::fmt::Debug for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelKind::Hilbert => write!(f, "Hilbert"),
            KernelKind::ConjugatePoisson { a } => write!(f, "ConjugatePoisson(a={a})"),
            KernelKind::Identity => write!(f, "Identity"),
            KernelKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// A CZ operator with smoothness order `s`.
#[derive(Clone, Debug)]
pub struct KernelOp {
    pub name: String,
    pub d: usize,
    pub s: u32,
    pub kind: KernelKind,
    pub l2_norm: f64,
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `(z+1)Log(z+1) - 2z Log z + (z-1)Log(z-1)`, the second difference of
/// `z Log z`, with the asymptotic series for `|z| ≥ 8`.
fn second_difference_zlogz(z: Complex64) -> Complex64 {
    if z.norm() >= 8.0 {
        let inv = z.inv();
        let inv2 = inv * inv;
        let mut term = inv;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 1..=12u32 {
            acc += term / f64::from(k * (2 * k - 1));
            term *= inv2;
        }
        return acc;
    }
    let g = |w: Complex64| if w.norm() == 0.0 { Complex64::new(0.0, 0.0) } else { w * w.ln() };
    g(z + 1.0) - 2.0 * g(z) + g(z - 1.0)
}

impl KernelOp {
    pub fn hilbert(s: u32) -> Self {
        KernelOp { name: "hilbert".into(), d: 1, s, kind: KernelKind::Hilbert, l2_norm: 1.0 }
    }

    pub fn conjugate_poisson(a: f64, s: u32) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidConfig(format!("conjugate Poisson width {a} must be positive")));
        }
        Ok(KernelOp { name: "conjugate-poisson".into(), d: 1, s, kind: KernelKind::ConjugatePoisson { a }, l2_norm: 1.0 })
    }

    pub fn identity() -> Self {
        KernelOp { name: "identity".into(), d: 1, s: 0, kind: KernelKind::Identity, l2_norm: 1.0 }
    }

    pub fn custom(name: &str, s: u32, l2_norm: f64, profile: ProfileFn) -> Self {
        KernelOp { name: name.into(), d: 1, s, kind: KernelKind::Custom(profile), l2_norm }
    }

    /// Built-in by name; `a` is the conjugate Poisson width.
    pub fn by_name(name: &str, s: u32, a: f64) -> Result<Self> {
        match name {
            "hilbert" => Ok(Self::hilbert(s)),
            "conjugate-poisson" => Self::conjugate_poisson(a, s),
            "identity" => Ok(Self::identity()),
            _ => Err(Error::InvalidConfig(format!("unknown kernel '{name}'"))),
        }
    }

    /// `k^{(n)}(u)` for the convolution profile.
    pub fn profile_deriv(&self, u: f64, n: u32) -> Result<f64> {
        if u == 0.0 {
            return Err(Error::DiagonalSingularity);
        }
        let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        match &self.kind {
            KernelKind::Hilbert => Ok(sign * factorial(n) / (std::f64::consts::PI * u.powi(n as i32 + 1))),
            KernelKind::ConjugatePoisson { a } => {
                let w = Complex64::new(u, *a);
                Ok(sign * factorial(n) / std::f64::consts::PI * w.powi(-(n as i32 + 1)).re)
            }
            KernelKind::Identity => Ok(0.0),
            KernelKind::Custom(f) => Ok(f(u, n)),
        }
    }

    /// `∂_x^{a_x} ∂_y^{a_y} K(x, y)`.
    pub fn kernel_deriv(&self, x: f64, y: f64, alpha: [u32; 2]) -> Result<f64> {
        if alpha[0] + alpha[1] > self.s {
            return Err(Error::InvalidArgument(format!("|alpha| > s = {}", self.s)));
        }
        let v = self.profile_deriv(x - y, alpha[0] + alpha[1])?;
        Ok(if alpha[1] % 2 == 1 { -v } else { v })
    }

    /// `‖K‖_{CZ_s}`: analytic for built-ins.
    pub fn czs_seminorm(&self) -> Result<f64> {
        match self.kind {
            KernelKind::Hilbert | KernelKind::ConjugatePoisson { .. } => {
                Ok(factorial(self.s) / std::f64::consts::PI)
            }
            KernelKind::Identity => Ok(0.0),
            KernelKind::Custom(_) => Err(Error::UnknownSeminorm { lower_bound: self.empirical_seminorm(4096, 7) }),
        }
    }

    /// `max |∂^α K| |x-y|^{1+|α|}` over a deterministic sample of `(u, α)`.
    pub fn empirical_seminorm(&self, samples: usize, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut best: f64 = 0.0;
        for _ in 0..samples {
            let u = rng.random_range(-6.0f64..6.0).exp2() * if rng.random::<bool>() { 1.0 } else { -1.0 };
            for n in 0..=self.s {
                if let Ok(v) = self.profile_deriv(u, n) {
                    best = best.max(v.abs() * u.abs().powi(n as i32 + 1));
                }
            }
        }
        best
    }

    pub fn symbol(&self, xi: f64) -> Result<Complex64> {
        let sgn = if xi > 0.0 {
            1.0
        } else if xi < 0.0 {
            -1.0
        } else {
            0.0
        };
        match self.kind {
            KernelKind::Hilbert => Ok(Complex64::new(0.0, -sgn)),
            KernelKind::ConjugatePoisson { a } => {
                Ok(Complex64::new(0.0, -sgn * (-2.0 * std::f64::consts::PI * a * xi.abs()).exp()))
            }
            KernelKind::Identity => Ok(Complex64::new(1.0, 0.0)),
            KernelKind::Custom(_) => Err(Error::NoApplicationPath(self.name.clone())),
        }
    }

    /// `(T Λ_h)(n h)` for the hat `Λ_h` of half-width `h`.
    pub fn hat_response(&self, n: i64, h: f64) -> Result<f64> {
        let pi = std::f64::consts::PI;
        match self.kind {
            KernelKind::Hilbert => Ok(second_difference_zlogz(Complex64::new(n as f64, 0.0)).re / pi),
            KernelKind::ConjugatePoisson { a } => {
                Ok(second_difference_zlogz(Complex64::new(n as f64, -a / h)).re / pi)
            }
            KernelKind::Identity => Ok(if n == 0 { 1.0 } else { 0.0 }),
            KernelKind::Custom(_) => Err(Error::NoApplicationPath(self.name.clone())),
        }
    }

    /// Raw quadrature weight `h k(n h)`; zero on the diagonal.
    pub fn raw_weight(&self, n: i64, h: f64) -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        Ok(h * self.profile_deriv(n as f64 * h, 0)?)
    }

    fn lag_weights(&self, lo: i64, hi: i64, h: f64, raw: bool) -> Result<Vec<f64>> {
        (lo..=hi).map(|n| if raw { self.raw_weight(n, h) } else { self.hat_response(n, h) }).collect()
    }
}

fn apply_with(op: &KernelOp, f: &MeshFn, out_lo: i64, out_hi: i64, raw: bool) -> Result<MeshFn> {
    if out_hi <= out_lo || f.values.is_empty() {
        return Ok(MeshFn::zeros(f.p, out_lo, (out_hi - out_lo).max(0) as usize));
    }
    let h = f.step();
    let lag_lo = out_lo - (f.end() - 1);
    let lag_hi = out_hi - 1 - f.start;
    let c = op.lag_weights(lag_lo, lag_hi, h, raw)?;
    let conv = convolve(&f.values, &c);
    let base = out_lo - f.start - lag_lo;
    let values = (0..(out_hi - out_lo)).map(|t| conv[(base + t) as usize]).collect();
    Ok(MeshFn { p: f.p, start: out_lo, values })
}

/// Multiplier path: `T` applied exactly to the piecewise-linear interpolant
/// of `f`, sampled at mesh indices `out_lo..out_hi`.
pub fn apply_pl(op: &KernelOp, f: &MeshFn, out_lo: i64, out_hi: i64) -> Result<MeshFn> {
    apply_with(op, f, out_lo, out_hi, false)
}

/// Raw kernel quadrature `Σ_m h K(x_n, y_m) f_m` (meaningful off `supp f`).
pub fn apply_raw(op: &KernelOp, f: &MeshFn, out_lo: i64, out_hi: i64) -> Result<MeshFn> {
    apply_with(op, f, out_lo, out_hi, true)
}

/// Periodic spectral path: zero-pad by `padding`, multiply the DFT by the
/// symbol, return the full padded period.
pub fn apply_spectral(op: &KernelOp, f: &MeshFn, padding: usize) -> Result<MeshFn> {
    let len = f.values.len();
    let n = (len * padding.max(1)).next_power_of_two();
    let lead = (n - len) / 2;
    let h = f.step();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (i, v) in f.values.iter().enumerate() {
        buf[lead + i] = Complex64::new(*v, 0.0);
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let kk = if k < n / 2 { k as f64 } else if k == n / 2 { 0.0 } else { k as f64 - n as f64 };
        // The Nyquist bin carries no sign information; drop it for odd symbols.
        let sym = if k == n / 2 { op.symbol(0.0)? } else { op.symbol(kk / (n as f64 * h))? };
        *b *= sym;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Ok(MeshFn { p: f.p, start: f.start - lead as i64, values: buf.iter().map(|z| z.re / n as f64).collect() })
}

/// Compactly supported test functions with closed forms.
#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    /// `exp(-1/(1-t²))`, `t = (x-center)/radius`.
    Bump { center: f64, radius: f64 },
    /// Hat on `[a, b]` with peak 1 at the midpoint.
    Hat { a: f64, b: f64 },
    /// `(x - center)^power` times a smooth plateau equal to 1 on
    /// `[center - half_width, center + half_width]` with ramps of width `ramp`.
    Plateau { center: f64, half_width: f64, ramp: f64, power: u32 },
    /// Linear combination of other test functions.
    Sum(Vec<(f64, TestFunction)>),
}

fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

impl TestFunction {
    pub fn bump(center: f64, radius: f64) -> Self {
        TestFunction::Bump { center, radius }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::Bump { center, radius } => {
                let t = (x - center) / radius;
                if t.abs() >= 1.0 {
                    0.0
                } else {
                    (-1.0 / (1.0 - t * t)).exp()
                }
            }
            TestFunction::Hat { a, b } => {
                let mid = 0.5 * (a + b);
                let half = 0.5 * (b - a);
                (1.0 - ((x - mid) / half).abs()).max(0.0)
            }
            TestFunction::Plateau { center, half_width, ramp, power } => {
                let lo = center - half_width - ramp;
                let hi = center + half_width + ramp;
                let chi = smooth_step((x - lo) / ramp) * smooth_step((hi - x) / ramp);
                (x - center).powi(*power as i32) * chi
            }
            TestFunction::Sum(parts) => parts.iter().map(|(c, f)| c * f.eval(x)).sum(),
        }
    }

    /// Closed support interval.
    pub fn support(&self) -> (f64, f64) {
        match self {
            TestFunction::Bump { center, radius } => (center - radius, center + radius),
            TestFunction::Hat { a, b } => (*a, *b),
            TestFunction::Plateau { center, half_width, ramp, .. } => {
                (center - half_width - ramp, center + half_width + ramp)
            }
            TestFunction::Sum(parts) => parts.iter().map(|(_, f)| f.support()).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(a, b), (c, d)| (a.min(c), b.max(d)),
            ),
        }
    }

    /// Samples on the mesh `2^-p` covering the support.
    pub fn sample(&self, p: i32) -> MeshFn {
        let scale = (p as f64).exp2();
        let (lo, hi) = self.support();
        let start = (lo * scale).floor() as i64;
        let end = (hi * scale).ceil() as i64 + 1;
        let values = (start..end).map(|n| self.eval(n as f64 / scale)).collect();
        MeshFn { p, start, values }
    }

    /// Support must keep a margin of `margin` from the window boundary.
    pub fn check_margin<const D: usize>(&self, window: &Window<D>, margin: f64) -> Result<()> {
        let (lo, hi) = self.support();
        let ext = (window.level as f64).exp2();
        if lo < margin || hi > ext - margin {
            return Err(Error::InvalidArgument(format!(
                "test function support [{lo}, {hi}] violates margin {margin} in [0, {ext})"
            )));
        }
        Ok(())
    }
}

/// A pairing by the multiplier path, with the raw-quadrature value when the
/// supports are disjoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pairing {
    pub value: f64,
    pub oracle: Option<f64>,
}

impl Pairing {
    pub fn agrees(&self) -> bool {
        match self.oracle {
            None => true,
            Some(o) => (self.value - o).abs() <= CROSS_ABS_TOL.max(CROSS_REL_TOL * o.abs()),
        }
    }
}

/// `⟨ψ_J, T ψ_I⟩` on the mesh `2^-p`.
pub fn pair_inner(op: &KernelOp, wj: &WaveletFn<1>, wi: &WaveletFn<1>, p: i32) -> Result<Pairing> {
    let sys = wi.system;
    let fi = sys.sample_1d(wi.eta[0], wi.cube.k, wi.corner[0], p)?;
    let fj = wj.system.sample_1d(wj.eta[0], wj.cube.k, wj.corner[0], p)?;
    let tf = apply_pl(op, &fi, fj.start, fj.end())?;
    let value = fj.inner(&tf);
    let disjoint = wi.support().dist(&wj.support()) > 0;
    let oracle = if disjoint && !matches!(op.kind, KernelKind::Identity) {
        let raw = apply_raw(op, &fi, fj.start, fj.end())?;
        Some(fj.inner(&raw))
    } else {
        None
    };
    let pairing = Pairing { value, oracle };
    if !pairing.agrees() {
        return Err(Error::CrossValidation { primary: value, oracle: oracle.unwrap_or(f64::NAN) });
    }
    Ok(pairing)
}

/// `⟨g, T f⟩` by the multiplier path on the mesh `2^-p`.
pub fn ground_truth(op: &KernelOp, f: &TestFunction, g: &TestFunction, p: i32) -> Result<f64> {
    let fs = f.sample(p);
    let gs = g.sample(p);
    let tf = apply_pl(op, &fs, gs.start, gs.end())?;
    Ok(gs.inner(&tf))
}
