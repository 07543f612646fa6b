//! Functions sampled on a uniform dyadic mesh and FFT convolution helpers.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Samples `values[n]` at `x = (start + n)·2^-p`, zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshFn {
    pub p: i32,
    pub start: i64,
    pub values: Vec<f64>,
}

impl MeshFn {
    pub fn zeros(p: i32, start: i64, len: usize) -> Self {
        MeshFn { p, start, values: vec![0.0; len] }
    }

    pub fn step(&self) -> f64 {
        (-(self.p as f64)).exp2()
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64
    }

    pub fn x(&self, n: usize) -> f64 {
        (self.start + n as i64) as f64 * self.step()
    }

    pub fn at(&self, idx: i64) -> f64 {
        if idx < self.start || idx >= self.end() {
            0.0
        } else {
            self.values[(idx - self.start) as usize]
        }
    }

    /// Mesh quadrature `h Σ f g` over the common range.
    pub fn inner(&self, o: &MeshFn) -> f64 {
        assert_eq!(self.p, o.p, "mesh mismatch");
        let lo = self.start.max(o.start);
        let hi = self.end().min(o.end());
        if lo >= hi {
            return 0.0;
        }
        let a = &self.values[(lo - self.start) as usize..(hi - self.start) as usize];
        let b = &o.values[(lo - o.start) as usize..(hi - o.start) as usize];
        self.step() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn norm2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += c·o`, growing the support if needed.
    pub fn add_scaled(&mut self, c: f64, o: &MeshFn) {
        assert_eq!(self.p, o.p, "mesh mismatch");
        if o.values.is_empty() {
            return;
        }
        if self.values.is_empty() {
            self.start = o.start;
        }
        let lo = self.start.min(o.start);
        let hi = self.end().max(o.end());
        if lo < self.start || hi > self.end() {
            let mut v = vec![0.0; (hi - lo) as usize];
            let off = (self.start - lo) as usize;
            v[off..off + self.values.len()].copy_from_slice(&self.values);
            self.values = v;
            self.start = lo;
        }
        let off = (o.start - self.start) as usize;
        for (s, x) in self.values[off..].iter_mut().zip(&o.values) {
            *s += c * x;
        }
    }

    /// Restriction to `[lo, hi)` (mesh indices), zero-filled.
    pub fn window(&self, lo: i64, hi: i64) -> MeshFn {
        MeshFn { p: self.p, start: lo, values: (lo..hi).map(|i| self.at(i)).collect() }
    }
}

/// Linear convolution `(a*b)[n] = Σ_m a[m] b[n-m]`, length `|a|+|b|-1`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    // Pack both real inputs into one complex transform.
    let mut buf: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(a.get(i).copied().unwrap_or(0.0), b.get(i).copied().unwrap_or(0.0)))
        .collect();
    fwd.process(&mut buf);
    let mut prod = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let z = buf[k];
        let zc = buf[(n - k) % n].conj();
        let fa = (z + zc) * 0.5;
        let fb = (z - zc) * Complex64::new(0.0, -0.5);
        prod[k] = fa * fb;
    }
    inv.process(&mut prod);
    let scale = 1.0 / n as f64;
    prod[..out_len].iter().map(|z| z.re * scale).collect()
}

/// Cross-correlation `c[δ] = Σ_n a[n+δ] b[n]` for `δ` in
/// `-(|b|-1)..=|a|-1`, returned with offset `|b|-1`.
pub fn correlate(a: &[f64], b: &[f64]) -> Vec<f64> {
    let rb: Vec<f64> = b.iter().rev().copied().collect();
    convolve(a, &rb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let a: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64 - 50.0) / 7.0).collect();
        let b: Vec<f64> = (0..77).map(|i| ((i * 13 % 29) as f64).sin()).collect();
        let fast = convolve(&a, &b);
        for (x, y) in fast.iter().zip(naive(&a, &b)) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn correlation_offsets() {
        let a = [1.0, 2.0, 3.0];
        let b = [1.0, 1.0];
        // δ = -1: a[0]b[1]; δ = 0: a0+a1; δ = 1: a1+a2; δ = 2: a2.
        assert_eq!(correlate(&a, &b), vec![1.0, 3.0, 5.0, 3.0]);
    }

    #[test]
    fn inner_and_accumulate() {
        let f = MeshFn { p: 2, start: -2, values: vec![1.0, 2.0, 3.0] };
        let g = MeshFn { p: 2, start: 0, values: vec![4.0, 5.0] };
        assert_eq!(f.inner(&g), 0.25 * 12.0);
        let mut acc = MeshFn::zeros(2, 0, 0);
        acc.add_scaled(2.0, &f);
        acc.add_scaled(1.0, &g);
        assert_eq!(acc.start, -2);
        assert_eq!(acc.values, vec![2.0, 4.0, 10.0, 5.0]);
        assert_eq!(acc.window(-3, 0).values, vec![0.0, 2.0, 4.0]);
    }
}
