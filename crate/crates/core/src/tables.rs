//! Translation-invariant tables of wavelet pairings `⟨ψ_J, Tψ_I⟩` and of
//! analysis coefficients `⟨f, ψ_I⟩` for one-dimensional windows.
//!
//! A pairing depends only on the two element kinds (level, η) and on the
//! corner offset, which is a multiple of `2^-k_max` in every translated grid.
//! Tables are therefore built once per run and shared by all ω samples.

use rayon::prelude::*;

use crate::dyadic::{Window, FRAC};
use crate::error::{Error, Result};
use crate::mesh::{correlate, MeshFn};
use crate::operators::{apply_pl, apply_raw, KernelKind, KernelOp};
use crate::wavelet::WaveletSystem;

/// Element kind: `(level, η)`; `η = false` (father) only at `k_min`.
pub type Kind = (i32, bool);

pub fn element_kinds(k_min: i32, k_max: i32) -> Vec<Kind> {
    std::iter::once((k_min, false)).chain((k_min..=k_max).map(|k| (k, true))).collect()
}

/// Corner in units of `2^-k_max`.
pub fn corner_units(corner_ticks: i64, k_max: i32) -> i64 {
    corner_ticks >> (FRAC as i32 - k_max)
}

#[derive(Clone, Debug)]
struct Table {
    lo: i64,
    values: Vec<f64>,
    oracle: Option<Vec<f64>>,
}

impl Table {
    fn get(&self, delta: i64) -> f64 {
        let idx = delta - self.lo;
        if idx < 0 || idx as usize >= self.values.len() {
            0.0
        } else {
            self.values[idx as usize]
        }
    }
}

/// `⟨ψ_J, Tψ_I⟩` for all kind pairs and corner offsets within a window.
#[derive(Clone, Debug)]
pub struct PairingTables {
    pub p: i32,
    pub k_min: i32,
    pub k_max: i32,
    pub kinds: Vec<Kind>,
    tables: Vec<Table>,
}

fn kind_index(kinds: &[Kind], kind: Kind) -> usize {
    kinds.iter().position(|k| *k == kind).expect("kind outside the table range")
}

impl PairingTables {
    /// Tables on the mesh `2^-p`; `with_oracle` adds the raw kernel
    /// quadrature (meaningful only for disjoint supports).
    pub fn build(
        op: &KernelOp,
        sys: &WaveletSystem,
        window: &Window<1>,
        p: i32,
        with_oracle: bool,
    ) -> Result<PairingTables> {
        if p < window.k_max {
            return Err(Error::InvalidArgument(format!("mesh 2^-{p} coarser than k_max {}", window.k_max)));
        }
        let kinds = element_kinds(window.k_min, window.k_max);
        let mothers: Vec<MeshFn> =
            kinds.iter().map(|&(k, eta)| sys.sample_1d(eta, k, 0, p)).collect::<Result<_>>()?;
        let stride = 1i64 << (p - window.k_max);
        let span = 1i64 << (window.level + window.k_max);
        let (dlo, dhi) = (-span, span);
        let j_lo = mothers.iter().map(|f| f.start).min().unwrap_or(0);
        let j_hi = mothers.iter().map(|f| f.end()).max().unwrap_or(0);
        let out_lo = dlo * stride + j_lo;
        let out_hi = dhi * stride + j_hi;
        let applied: Vec<(MeshFn, Option<MeshFn>)> = mothers
            .par_iter()
            .map(|fi| -> Result<_> {
                let t = apply_pl(op, fi, out_lo, out_hi)?;
                let raw = if with_oracle && !matches!(op.kind, KernelKind::Identity) {
                    Some(apply_raw(op, fi, out_lo, out_hi)?)
                } else {
                    None
                };
                Ok((t, raw))
            })
            .collect::<Result<_>>()?;
        let n = kinds.len();
        let tables = (0..n * n)
            .into_par_iter()
            .map(|ij| {
                let (ti, raw) = &applied[ij / n];
                let fj = &mothers[ij % n];
                let extract = |a: &MeshFn| -> Vec<f64> {
                    let c = correlate(&a.values, &fj.values);
                    let h = a.step();
                    (dlo..=dhi)
                        .map(|d| {
                            let shift = fj.start + d * stride - a.start + fj.values.len() as i64 - 1;
                            if shift < 0 || shift as usize >= c.len() {
                                0.0
                            } else {
                                h * c[shift as usize]
                            }
                        })
                        .collect()
                };
                Table { lo: dlo, values: extract(ti), oracle: raw.as_ref().map(extract) }
            })
            .collect();
        Ok(PairingTables { p, k_min: window.k_min, k_max: window.k_max, kinds, tables })
    }

    fn table(&self, ki: Kind, kj: Kind) -> &Table {
        let n = self.kinds.len();
        &self.tables[kind_index(&self.kinds, ki) * n + kind_index(&self.kinds, kj)]
    }

    /// `⟨ψ_J, Tψ_I⟩` with `delta = corner(J) - corner(I)` in units of `2^-k_max`.
    pub fn get(&self, ki: Kind, kj: Kind, delta: i64) -> f64 {
        self.table(ki, kj).get(delta)
    }

    /// Raw-quadrature value, when built with the oracle.
    pub fn oracle(&self, ki: Kind, kj: Kind, delta: i64) -> Option<f64> {
        let t = self.table(ki, kj);
        t.oracle.as_ref().map(|o| {
            let idx = delta - t.lo;
            if idx < 0 || idx as usize >= o.len() {
                0.0
            } else {
                o[idx as usize]
            }
        })
    }
}

/// `⟨f, ψ⟩` for every kind and every corner in the window.
#[derive(Clone, Debug)]
pub struct CoefficientTable {
    pub k_max: i32,
    pub kinds: Vec<Kind>,
    tables: Vec<Table>,
}

impl CoefficientTable {
    pub fn build(sys: &WaveletSystem, f: &MeshFn, window: &Window<1>) -> Result<CoefficientTable> {
        let p = f.p;
        let kinds = element_kinds(window.k_min, window.k_max);
        let stride = 1i64 << (p - window.k_max);
        let span = 1i64 << (window.level + window.k_max);
        let tables = kinds
            .par_iter()
            .map(|&(k, eta)| -> Result<Table> {
                let psi = sys.sample_1d(eta, k, 0, p)?;
                let c = correlate(&f.values, &psi.values);
                let h = f.step();
                let values = (0..span)
                    .map(|u| {
                        let shift = psi.start + u * stride - f.start + psi.values.len() as i64 - 1;
                        if shift < 0 || shift as usize >= c.len() {
                            0.0
                        } else {
                            h * c[shift as usize]
                        }
                    })
                    .collect();
                Ok(Table { lo: 0, values, oracle: None })
            })
            .collect::<Result<_>>()?;
        Ok(CoefficientTable { k_max: window.k_max, kinds, tables })
    }

    /// `⟨f, ψ⟩` for the element of kind `kind` with corner `corner` (units of `2^-k_max`).
    pub fn get(&self, kind: Kind, corner: i64) -> f64 {
        self.tables[kind_index(&self.kinds, kind)].get(corner)
    }
}
