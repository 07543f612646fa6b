//! Quantitative experiments: per-class decay audits, the windowed expansion
//! identity, the randomized good-cube expansion and its convergence in the
//! shift order `max(i, j)`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{is_bad_or_unclassified, lemma_bound, GridShift, Window};
use crate::error::{Error, Result};
use crate::operators::{ground_truth, KernelOp, TestFunction};
use crate::shift::{
    assemble_shifts, classify_elements, classify_ordered, coefficient_ratio, smaller_of, table_pairing,
    window_elements, ClassKind, Element, GoodWeights, Normalization, ShiftContext,
};
use crate::tables::{corner_units, CoefficientTable, PairingTables};
use crate::wavelet::WaveletSystem;

/// `Ψ(t) = t^s (ln(1/t) + 1)`.
pub fn psi(t: f64, s: u32) -> f64 {
    t.powi(s as i32) * ((1.0 / t).ln() + 1.0)
}

/// Sample index offset of the calibration stream.
pub const CALIBRATION_STREAM: u64 = 1 << 40;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayAuditRow {
    pub class: ClassKind,
    pub i: u32,
    pub j: u32,
    pub pairs: usize,
    pub max_pairing: f64,
    pub bound: f64,
    pub ratio: f64,
    /// Ψ-refined bound for the between/contained classes.
    pub psi_bound: Option<f64>,
    pub psi_ratio: Option<f64>,
}

/// Class bound for a pair with `ℓ(I) ≤ ℓ(J)` of type `(i, j)`, `d = 1`.
pub fn class_bound(class: ClassKind, i: u32, j: u32, czs: f64, op_norm: f64, s: u32, eps: f64, theta: f64) -> f64 {
    let (i, j) = (i as f64, j as f64);
    let s = s as f64;
    match class {
        // √(|I||J|)/|K| · Θ(2^-i)^{-1-s} · 2^{-is}
        ClassKind::Far => czs * (-(i + j) / 2.0).exp2() * (i * theta * (1.0 + s)).exp2() * (-i * s).exp2(),
        // (|I|/|J|)^{1/2} (ℓ(I)/ℓ(J))^{s-ε}
        ClassKind::Between | ClassKind::Contained => {
            (czs + op_norm) * (-(i - j) / 2.0).exp2() * (-(i - j) * (s - eps)).exp2()
        }
        ClassKind::Equal | ClassKind::Near => op_norm,
    }
}

fn psi_class_bound(class: ClassKind, i: u32, j: u32, czs: f64, op_norm: f64, s: u32) -> Option<f64> {
    match class {
        ClassKind::Between | ClassKind::Contained => {
            let t = (-((i - j) as f64)).exp2();
            Some((czs + op_norm) * t.sqrt() * psi(t, s))
        }
        _ => None,
    }
}

/// Max pairing against the class bound for every good wavelet pair with
/// `ℓ(I) ≤ ℓ(J)`, `i ≤ i_max`, `j ≤ j_max`.
pub fn decay_audit(
    op: &KernelOp,
    sys: &WaveletSystem,
    grid: &GridShift<1>,
    tables: &PairingTables,
    s: u32,
    eps: f64,
    i_max: u32,
    j_max: u32,
) -> Result<Vec<DecayAuditRow>> {
    let czs = op.czs_seminorm()?;
    let elems: Vec<Element> = grid.window.all_cubes(grid).into_iter().map(Element::wavelet).collect();
    let groups: Vec<BTreeMap<(ClassKind, u32, u32), (usize, f64)>> = elems
        .par_iter()
        .map(|ei| {
            let mut acc: BTreeMap<(ClassKind, u32, u32), (usize, f64)> = BTreeMap::new();
            if is_bad_or_unclassified(&ei.cube, grid) {
                return Ok(acc);
            }
            for ej in elems.iter().filter(|ej| ej.cube.k <= ei.cube.k) {
                let class = match classify_ordered(&ei.cube, &ej.cube, grid, sys.m) {
                    Ok(c) => c,
                    Err(Error::NoContainingAncestor { .. }) => continue,
                    Err(e) => return Err(e),
                };
                if class.i > i_max || class.j > j_max {
                    continue;
                }
                let v = table_pairing(tables, grid, ei, ej).abs();
                let slot = acc.entry((class.kind, class.i, class.j)).or_default();
                slot.0 += 1;
                slot.1 = slot.1.max(v);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut merged: BTreeMap<(ClassKind, u32, u32), (usize, f64)> = BTreeMap::new();
    for g in groups {
        for (key, (n, v)) in g {
            let slot = merged.entry(key).or_default();
            slot.0 += n;
            slot.1 = slot.1.max(v);
        }
    }
    Ok(merged
        .into_iter()
        .map(|((class, i, j), (pairs, max_pairing))| {
            let bound = class_bound(class, i, j, czs, op.l2_norm, s, eps, grid.theta);
            let psi_bound = psi_class_bound(class, i, j, czs, op.l2_norm, s);
            DecayAuditRow {
                class,
                i,
                j,
                pairs,
                max_pairing,
                bound,
                ratio: max_pairing / bound,
                psi_bound,
                psi_ratio: psi_bound.map(|b| max_pairing / b),
            }
        })
        .collect())
}

/// `R_n = max ratio over (i, j)` with `max(i, j) = n`, per class.
pub fn class_growth(rows: &[DecayAuditRow], class: ClassKind) -> Vec<(u32, f64)> {
    let mut by_n: BTreeMap<u32, f64> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.class == class) {
        let e = by_n.entry(r.i.max(r.j)).or_default();
        *e = e.max(r.ratio);
    }
    by_n.into_iter().collect()
}

/// Everything translation invariant in an expansion experiment.
pub struct Setup<'a> {
    pub op: &'a KernelOp,
    pub sys: &'a WaveletSystem,
    pub window: Window<1>,
    pub f: TestFunction,
    pub g: TestFunction,
    pub p: i32,
    pub tables: PairingTables,
    pub fc: CoefficientTable,
    pub gc: CoefficientTable,
    pub truth: f64,
}

impl<'a> Setup<'a> {
    /// Tables on mesh `2^-p`; the reference `⟨g, Tf⟩` uses mesh `2^-truth_p`.
    pub fn new(
        op: &'a KernelOp,
        sys: &'a WaveletSystem,
        window: Window<1>,
        f: TestFunction,
        g: TestFunction,
        p: i32,
        truth_p: i32,
    ) -> Result<Self> {
        let margin = sys.m as f64 * (-(window.k_min as f64)).exp2();
        f.check_margin(&window, margin)?;
        g.check_margin(&window, margin)?;
        let tables = PairingTables::build(op, sys, &window, p, false)?;
        let fc = CoefficientTable::build(sys, &f.sample(p), &window)?;
        let gc = CoefficientTable::build(sys, &g.sample(p), &window)?;
        let truth = ground_truth(op, &f, &g, truth_p)?;
        Ok(Setup { op, sys, window, f, g, p, tables, fc, gc, truth })
    }

    fn coef(&self, t: &CoefficientTable, grid: &GridShift<1>, e: &Element) -> f64 {
        t.get(e.kind(), corner_units(grid.corner(&e.cube)[0], self.window.k_max))
    }

    pub fn f_coef(&self, grid: &GridShift<1>, e: &Element) -> f64 {
        self.coef(&self.fc, grid, e)
    }

    pub fn g_coef(&self, grid: &GridShift<1>, e: &Element) -> f64 {
        self.coef(&self.gc, grid, e)
    }

    /// Window elements whose support meets the support of `h`.
    pub fn active(&self, grid: &GridShift<1>, h: &TestFunction) -> Vec<Element> {
        let (lo, hi) = h.support();
        window_elements(&self.window, grid)
            .into_iter()
            .filter(|e| {
                let r = self.sys.support(e.cube.k, grid.corner(&e.cube));
                let scale = (crate::dyadic::FRAC as f64).exp2();
                (r.lo[0] as f64) < hi * scale && (r.hi[0] as f64) > lo * scale
            })
            .collect()
    }

    /// `Σ_{I,J} ⟨g,ψ_J⟩⟨ψ_J,Tψ_I⟩⟨ψ_I,f⟩` over all window elements.
    pub fn full_sum(&self, grid: &GridShift<1>) -> f64 {
        let is = self.active(grid, &self.f);
        let js = self.active(grid, &self.g);
        let gj: Vec<f64> = js.iter().map(|e| self.g_coef(grid, e)).collect();
        is.par_iter()
            .map(|ei| {
                let fi = self.f_coef(grid, ei);
                js.iter().zip(&gj).map(|(ej, g)| g * table_pairing(&self.tables, grid, ei, ej)).sum::<f64>() * fi
            })
            .collect::<Vec<_>>()
            .iter()
            .sum()
    }

    pub fn normalization(&self, s: u32, eps: f64, c_emp: f64) -> Result<Normalization> {
        Ok(Normalization { c_emp, czs_seminorm: self.op.czs_seminorm()?, op_norm: self.op.l2_norm, s, eps })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpansionIdentity {
    pub truth: f64,
    pub expansion: f64,
    pub defect: f64,
}

/// `|⟨g,Tf⟩ − Σ_{I,J} ⟨g,ψ_J⟩⟨ψ_J,Tψ_I⟩⟨ψ_I,f⟩|` on one grid, no goodness filter.
pub fn expansion_identity(setup: &Setup, grid: &GridShift<1>) -> ExpansionIdentity {
    let expansion = setup.full_sum(grid);
    ExpansionIdentity { truth: setup.truth, expansion, defect: (setup.truth - expansion).abs() }
}

/// Per-ω contributions of the good shifts, grouped by `max(i, j)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleTerms {
    pub sample: u64,
    /// `Σ_{max(i,j)=n} 2^{-(s-2ε)n} c (…) ⟨g, S^{ij} f⟩ / π_good`.
    pub layers: BTreeMap<u32, f64>,
    pub total: f64,
    /// Unfiltered windowed expansion on the same grid.
    pub unfiltered: f64,
    pub escaped: usize,
    pub excluded_bad: usize,
    pub coefficients: usize,
    pub max_normalized: f64,
    pub all_good: bool,
}

/// Largest `|pairing|·|K|/(√(|I||J|) decay)` over good active pairs of one grid.
pub fn max_ratio(setup: &Setup, grid: &GridShift<1>, norm: &Normalization) -> Result<f64> {
    let is = setup.active(grid, &setup.f);
    let js = setup.active(grid, &setup.g);
    let pairs = classify_elements(&is, &js, grid, setup.sys.m)?;
    Ok(pairs
        .pairs
        .par_iter()
        .filter(|p| !is_bad_or_unclassified(&smaller_of(&is[p.i].cube, &js[p.j].cube), grid))
        .map(|p| {
            let (a, b) = (&is[p.i], &js[p.j]);
            coefficient_ratio(table_pairing(&setup.tables, grid, a, b), &a.cube, &b.cube, &p.class, norm)
        })
        .reduce(|| 0.0, f64::max))
}

/// `c_emp` as the max ratio over `samples` grids drawn from the calibration stream.
pub fn calibrate_c_emp(setup: &Setup, s: u32, eps: f64, r: u32, theta: f64, samples: u64, seed: u64) -> Result<f64> {
    let norm = setup.normalization(s, eps, 1.0)?;
    let mut c = 0.0f64;
    for n in 0..samples {
        let grid = GridShift::random(setup.window, seed, CALIBRATION_STREAM + n, r, theta)?;
        c = c.max(max_ratio(setup, &grid, &norm)?);
    }
    Ok(c)
}

/// Good shifts of one grid applied to `(f, g)`.
pub fn sample_terms(setup: &Setup, grid: &GridShift<1>, norm: &Normalization, weights: &GoodWeights, sample: u64) -> Result<SampleTerms> {
    let is = setup.active(grid, &setup.f);
    let js = setup.active(grid, &setup.g);
    let pairs = classify_elements(&is, &js, grid, setup.sys.m)?;
    let ctx = ShiftContext {
        tables: &setup.tables,
        norm,
        weights,
        classes: &ClassKind::ALL,
        m: setup.sys.m,
        sample,
    };
    let shifts = assemble_shifts(grid, &is, &js, &pairs, &ctx)?;
    let mut layers: BTreeMap<u32, f64> = BTreeMap::new();
    let mut out = SampleTerms {
        sample,
        layers: BTreeMap::new(),
        total: 0.0,
        unfiltered: setup.full_sum(grid),
        escaped: pairs.escaped,
        excluded_bad: 0,
        coefficients: 0,
        max_normalized: 0.0,
        all_good: true,
    };
    for ((i, j), s) in &shifts {
        let v = norm.scale(*i, *j) * s.weighted_pairing(|e| setup.f_coef(grid, e), |e| setup.g_coef(grid, e));
        *layers.entry((*i).max(*j)).or_default() += v;
        out.excluded_bad += s.excluded_bad;
        out.coefficients += s.coefficient_count();
        out.max_normalized = out.max_normalized.max(s.max_normalized());
        out.all_good &= s.good;
    }
    out.total = layers.values().sum();
    out.layers = layers;
    Ok(out)
}

/// Checks the certified lower bound `1 − (8d/θ) 2^{-rθ} > 0`.
pub fn certify_pi_good(r: u32, theta: f64) -> Result<f64> {
    let bound = lemma_bound(1, r, theta);
    if 1.0 - bound <= 0.0 {
        return Err(Error::PiGoodTooSmall { bound });
    }
    Ok(1.0 - bound)
}

/// Per-sample good-shift terms on the run stream `seed`, samples `0..n_omega`.
pub fn run_samples(
    setup: &Setup,
    norm: &Normalization,
    r: u32,
    theta: f64,
    n_omega: u64,
    seed: u64,
) -> Result<(GoodWeights, Vec<SampleTerms>)> {
    certify_pi_good(r, theta)?;
    let weights = GoodWeights::new(&setup.window, r, theta)?;
    let mut out = Vec::with_capacity(n_omega as usize);
    for n in 0..n_omega {
        let grid = GridShift::random(setup.window, seed, n, r, theta)?;
        out.push(sample_terms(setup, &grid, norm, &weights, n)?);
    }
    Ok((weights, out))
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandomizedExpansion {
    pub estimate: f64,
    pub stderr: f64,
    pub truth: f64,
    pub n_omega: u64,
    pub pi_good: Vec<f64>,
    pub pi_good_certified: f64,
    pub c_emp: f64,
    /// Largest windowed-expansion defect among the sampled grids.
    pub truncation_defect: f64,
    /// Mean of the unfiltered windowed expansions, the estimator's target.
    pub unfiltered_mean: f64,
    pub max_normalized: f64,
    pub escaped: usize,
    pub excluded_bad: usize,
    pub all_good: bool,
}

impl RandomizedExpansion {
    pub fn within_tolerance(&self) -> bool {
        (self.estimate - self.truth).abs() <= 3.0 * self.stderr + self.truncation_defect
    }
}

pub fn summarize_randomized(
    setup: &Setup,
    norm: &Normalization,
    r: u32,
    theta: f64,
    weights: &GoodWeights,
    samples: &[SampleTerms],
) -> RandomizedExpansion {
    let totals: Vec<f64> = samples.iter().map(|s| s.total).collect();
    let (estimate, stderr) = mean_stderr(&totals);
    RandomizedExpansion {
        estimate,
        stderr,
        truth: setup.truth,
        n_omega: samples.len() as u64,
        pi_good: weights.pi_good.clone(),
        pi_good_certified: 1.0 - lemma_bound(1, r, theta),
        c_emp: norm.c_emp,
        truncation_defect: samples.iter().map(|s| (s.unfiltered - setup.truth).abs()).fold(0.0, f64::max),
        unfiltered_mean: mean_stderr(&samples.iter().map(|s| s.unfiltered).collect::<Vec<_>>()).0,
        max_normalized: samples.iter().map(|s| s.max_normalized).fold(0.0, f64::max),
        escaped: samples.iter().map(|s| s.escaped).sum(),
        excluded_bad: samples.iter().map(|s| s.excluded_bad).sum(),
        all_good: samples.iter().all(|s| s.all_good),
    }
}

/// Monte Carlo estimate of `⟨g, Tf⟩` from the good shifts.
pub fn randomized_expansion(
    setup: &Setup,
    norm: &Normalization,
    r: u32,
    theta: f64,
    n_omega: u64,
    seed: u64,
) -> Result<RandomizedExpansion> {
    if n_omega < 30 {
        return Err(Error::InvalidArgument(format!("n_omega = {n_omega} < 30")));
    }
    let (weights, samples) = run_samples(setup, norm, r, theta, n_omega, seed)?;
    Ok(summarize_randomized(setup, norm, r, theta, &weights, &samples))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: u32,
    pub e_n: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceCurve {
    pub points: Vec<CurvePoint>,
    pub slope: f64,
    pub fit_range: (u32, u32),
    pub n_omega: u64,
    pub pi_good: Vec<f64>,
    pub truth: f64,
    /// Residual with every layer included.
    pub e_full: f64,
    pub stderr: f64,
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `e_N` for the partial sums over `max(i,j) ≤ N` and the fitted rate.
pub fn convergence_curve(truth: f64, weights: &GoodWeights, samples: &[SampleTerms], n_max: Option<u32>) -> Result<ConvergenceCurve> {
    let top = samples.iter().filter_map(|s| s.layers.keys().last().copied()).max().unwrap_or(0);
    let first = samples.iter().filter_map(|s| s.layers.keys().next().copied()).min().unwrap_or(0);
    let n_max = n_max.unwrap_or(top);
    let mut points = Vec::new();
    for n in 0..=n_max {
        let partial: Vec<f64> = samples.iter().map(|s| s.layers.range(..=n).map(|(_, v)| v).sum()).collect();
        let (mean, se) = mean_stderr(&partial);
        points.push(CurvePoint { n, e_n: (truth - mean).abs(), stderr: se });
    }
    let totals: Vec<f64> = samples.iter().map(|s| s.total).collect();
    let (mean, stderr) = mean_stderr(&totals);
    let e_full = (truth - mean).abs();
    if points.iter().all(|p| p.e_n < stderr) {
        return Err(Error::CurveDominatedByNoise);
    }
    let floor = 10.0 * stderr.max(e_full);
    let last = points.iter().filter(|p| p.n >= first && p.e_n > floor).map(|p| p.n).max();
    let fit: Vec<&CurvePoint> = match last {
        Some(last) => points.iter().filter(|p| p.n >= first && p.n <= last).collect(),
        None => Vec::new(),
    };
    if fit.len() < 2 {
        return Err(Error::CurveDominatedByNoise);
    }
    let xs: Vec<f64> = fit.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = fit.iter().map(|p| p.e_n.log2()).collect();
    Ok(ConvergenceCurve {
        slope: fit_slope(&xs, &ys),
        fit_range: (fit[0].n, fit[fit.len() - 1].n),
        points,
        n_omega: samples.len() as u64,
        pi_good: weights.pi_good.clone(),
        truth,
        e_full,
        stderr,
    })
}

pub fn convergence_experiment(
    setup: &Setup,
    norm: &Normalization,
    r: u32,
    theta: f64,
    n_max: Option<u32>,
    n_omega: u64,
    seed: u64,
) -> Result<ConvergenceCurve> {
    let (weights, samples) = run_samples(setup, norm, r, theta, n_omega, seed)?;
    convergence_curve(setup.truth, &weights, &samples, n_max)
}
