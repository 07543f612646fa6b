//! Pair classification into the five sums, normalized shift coefficients,
//! averaging blocks `A_K` and assembled wavelet shifts `S^{ij}`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{ancestor_join, is_bad_or_unclassified, long_distance, side_ticks, Cube, GridShift, Join, Window};
use crate::error::{Error, Result};
use crate::mesh::MeshFn;
use crate::tables::{corner_units, PairingTables};
use crate::wavelet::WaveletSystem;

/// `I` when `ℓ(I) ≤ ℓ(J)`, else `J`; ties go to `I`.
pub fn smaller_of<const D: usize>(i: &Cube<D>, j: &Cube<D>) -> Cube<D> {
    if i.k >= j.k {
        *i
    } else {
        *j
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKind {
    Far,
    Between,
    Contained,
    Equal,
    Near,
}

impl ClassKind {
    pub const ALL: [ClassKind; 5] =
        [ClassKind::Far, ClassKind::Between, ClassKind::Contained, ClassKind::Equal, ClassKind::Near];

    pub fn name(self) -> &'static str {
        match self {
            ClassKind::Far => "far",
            ClassKind::Between => "between",
            ClassKind::Contained => "contained",
            ClassKind::Equal => "equal",
            ClassKind::Near => "near",
        }
    }

    pub fn parse(s: &str) -> Option<ClassKind> {
        ClassKind::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Class of an ordered pair with `ℓ(I) ≤ ℓ(J)`, the assigned `K` and
/// `ℓ(I) = 2^-i ℓ(K)`, `ℓ(J) = 2^-j ℓ(K)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct PairClass<const D: usize> {
    pub kind: ClassKind,
    pub k: Cube<D>,
    pub i: u32,
    pub j: u32,
}

/// The five defining predicates, evaluated independently.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct Predicates {
    pub far: bool,
    pub between: bool,
    pub contained: bool,
    pub equal: bool,
    pub near: bool,
}

impl Predicates {
    pub fn count(&self) -> usize {
        [self.far, self.between, self.contained, self.equal, self.near].iter().filter(|b| **b).count()
    }

    pub fn kind(&self) -> Option<ClassKind> {
        if self.count() != 1 {
            return None;
        }
        Some(if self.far {
            ClassKind::Far
        } else if self.between {
            ClassKind::Between
        } else if self.contained {
            ClassKind::Contained
        } else if self.equal {
            ClassKind::Equal
        } else {
            ClassKind::Near
        })
    }
}

/// `ℓ(J) Θ(ℓ(I)/ℓ(J))` in ticks.
fn separation_threshold<const D: usize>(i: &Cube<D>, j: &Cube<D>, theta: f64) -> f64 {
    side_ticks(j.k) as f64 * (-((i.k - j.k) as f64) * theta).exp2()
}

pub fn predicates<const D: usize>(i: &Cube<D>, j: &Cube<D>, grid: &GridShift<D>, m: u32) -> Predicates {
    let ri = grid.region(i);
    let rj = grid.region(j);
    let dist = ri.dist(&rj);
    let separated = dist as f64 > separation_threshold(i, j, grid.theta);
    let far_apart = 2 * ri.dilate(m).dist(&rj.dilate(m)) > long_distance(i, j, grid).0;
    Predicates {
        far: separated && far_apart,
        between: separated && !far_apart,
        contained: rj.contains(&ri) && i != j,
        equal: i == j,
        near: !separated && !ri.intersects(&rj),
    }
}

/// Same-level neighbour in the `+e_1` direction, or `-e_1` at the window edge.
pub fn adjacent_cube<const D: usize>(i: &Cube<D>, grid: &GridShift<D>) -> Cube<D> {
    let range = grid.window.index_range(i.k, grid);
    let mut l = i.l;
    l[0] += if i.l[0] < range[0].1 { 1 } else { -1 };
    Cube::new(i.k, l)
}

/// Classifies `(I, J)` with `ℓ(I) ≤ ℓ(J)` and assigns `K`.
pub fn classify_pair<const D: usize>(i: &Cube<D>, j: &Cube<D>, grid: &GridShift<D>, m: u32) -> Result<PairClass<D>> {
    if i.k < j.k {
        return Err(Error::InvalidArgument(format!("classify_pair needs ℓ(I) ≤ ℓ(J), got levels {} and {}", i.k, j.k)));
    }
    let p = predicates(i, j, grid, m);
    let kind = p
        .kind()
        .ok_or_else(|| Error::Finding(format!("pair {i:?}, {j:?} satisfies {} class predicates", p.count())))?;
    let Join { k, i: a, j: b } = if kind == ClassKind::Equal {
        let jp = adjacent_cube(i, grid);
        let join = ancestor_join(i, &jp, m, grid)?;
        Join { k: join.k, i: join.i, j: join.i }
    } else {
        ancestor_join(i, j, m, grid)?
    };
    Ok(PairClass { kind, k, i: a, j: b })
}

/// Classification of an arbitrary ordered pair: the larger-first half is
/// classified as its transpose and `(i, j)` swapped back.
pub fn classify_ordered<const D: usize>(i: &Cube<D>, j: &Cube<D>, grid: &GridShift<D>, m: u32) -> Result<PairClass<D>> {
    if i.k >= j.k {
        classify_pair(i, j, grid, m)
    } else {
        let c = classify_pair(j, i, grid, m)?;
        Ok(PairClass { i: c.j, j: c.i, ..c })
    }
}

/// Scale constants turning a pairing into a shift coefficient.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct Normalization {
    pub c_emp: f64,
    pub czs_seminorm: f64,
    pub op_norm: f64,
    pub s: u32,
    pub eps: f64,
}

impl Normalization {
    /// `(‖K‖_{CZ_s} + ‖T‖) 2^{-max(i,j)(s-2ε)}`, without `c_emp`.
    pub fn decay(&self, i: u32, j: u32) -> f64 {
        (self.czs_seminorm + self.op_norm) * (-(i.max(j) as f64) * (self.s as f64 - 2.0 * self.eps)).exp2()
    }

    pub fn scale(&self, i: u32, j: u32) -> f64 {
        self.c_emp * self.decay(i, j)
    }
}

/// `√(|I||J|)/|K|`.
pub fn coefficient_cap<const D: usize>(i: &Cube<D>, j: &Cube<D>, k: &Cube<D>) -> f64 {
    (i.volume() * j.volume()).sqrt() / k.volume()
}

/// `|pairing|·|K| / (√(|I||J|) · decay(i,j))`: the smallest admissible `c_emp` for one pair.
pub fn coefficient_ratio<const D: usize>(pairing: f64, i: &Cube<D>, j: &Cube<D>, class: &PairClass<D>, n: &Normalization) -> f64 {
    pairing.abs() / (coefficient_cap(i, j, &class.k) * n.decay(class.i, class.j))
}

/// `a_IJK = pairing / scale(i,j)`, asserting `|a| ≤ √(|I||J|)/|K|`.
pub fn shift_coefficient<const D: usize>(
    pairing: f64,
    i: &Cube<D>,
    j: &Cube<D>,
    class: &PairClass<D>,
    n: &Normalization,
) -> Result<f64> {
    let a = pairing / n.scale(class.i, class.j);
    let ratio = a.abs() / coefficient_cap(i, j, &class.k);
    if ratio > 1.0 + 1e-12 || !ratio.is_finite() {
        return Err(Error::NormalizationViolated {
            ratio,
            detail: format!("I = {i:?}, J = {j:?}, K = {:?}, class {}", class.k, class.kind.name()),
        });
    }
    Ok(a)
}

/// One basis element: a cube and its η (`false` = father, used only at `k_min`).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Element {
    pub cube: Cube<1>,
    pub eta: bool,
}

impl Element {
    pub fn wavelet(cube: Cube<1>) -> Self {
        Element { cube, eta: true }
    }

    pub fn kind(&self) -> (i32, bool) {
        (self.cube.k, self.eta)
    }
}

/// Fathers at `k_min` followed by wavelets at every window level.
pub fn window_elements(window: &Window<1>, grid: &GridShift<1>) -> Vec<Element> {
    let fathers = window.cubes_at(window.k_min, grid).into_iter().map(|cube| Element { cube, eta: false });
    let wavelets = window.all_cubes(grid).into_iter().map(Element::wavelet);
    fathers.chain(wavelets).collect()
}

/// `1/π_good` per level, from the exact finite-window badness probability.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodWeights {
    pub k_min: i32,
    pub pi_good: Vec<f64>,
}

impl GoodWeights {
    pub fn new(window: &Window<1>, r: u32, theta: f64) -> Result<Self> {
        let pi_good = (window.k_min..=window.k_max)
            .map(|k| crate::dyadic::pi_bad_exact((k - window.k_min) as u32, r, theta, 1).map(|b| 1.0 - b))
            .collect::<Result<Vec<_>>>()?;
        if let Some(&g) = pi_good.iter().find(|&&g| g <= 0.0) {
            return Err(Error::PiGoodTooSmall { bound: 1.0 - g });
        }
        Ok(GoodWeights { k_min: window.k_min, pi_good })
    }

    /// Weights of a grid without bad cubes.
    pub fn vacuous(window: &Window<1>) -> Self {
        GoodWeights { k_min: window.k_min, pi_good: vec![1.0; window.depth() as usize] }
    }

    pub fn inv(&self, k: i32) -> f64 {
        1.0 / self.pi_good[(k - self.k_min) as usize]
    }
}

/// An ordered pair `(is[i], js[j])` with its class.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ClassifiedPair {
    pub i: usize,
    pub j: usize,
    pub class: PairClass<1>,
}

#[derive(Clone, Debug, Default)]
pub struct PairSet {
    pub pairs: Vec<ClassifiedPair>,
    /// Pairs without a containing ancestor below the window ceiling.
    pub escaped: usize,
}

/// Classifies every ordered pair of `is × js`.
pub fn classify_elements(is: &[Element], js: &[Element], grid: &GridShift<1>, m: u32) -> Result<PairSet> {
    let rows: Vec<Result<(Vec<ClassifiedPair>, usize)>> = is
        .par_iter()
        .enumerate()
        .map(|(a, ei)| {
            let mut out = Vec::with_capacity(js.len());
            let mut escaped = 0;
            for (b, ej) in js.iter().enumerate() {
                match classify_ordered(&ei.cube, &ej.cube, grid, m) {
                    Ok(class) => out.push(ClassifiedPair { i: a, j: b, class }),
                    Err(Error::NoContainingAncestor { .. }) => escaped += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok((out, escaped))
        })
        .collect();
    let mut set = PairSet::default();
    for row in rows {
        let (pairs, escaped) = row?;
        set.pairs.extend(pairs);
        set.escaped += escaped;
    }
    Ok(set)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct ShiftEntry {
    pub i: Element,
    pub j: Element,
    pub class: ClassKind,
    pub a: f64,
    pub inv_pi_good: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Block {
    pub k: Cube<1>,
    pub entries: Vec<ShiftEntry>,
}

/// `S^{ij} f = Σ_K A_K f`, `A_K f = Σ a_IJK ⟨f, ψ_I⟩ ψ_J`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShiftOperator {
    pub i: u32,
    pub j: u32,
    pub m: u32,
    pub blocks: Vec<Block>,
    pub good: bool,
    pub seed: u64,
    pub sample: u64,
    pub excluded_bad: usize,
    pub excluded_window: usize,
}

impl ShiftOperator {
    pub fn empty(i: u32, j: u32, m: u32, grid: &GridShift<1>, sample: u64) -> Self {
        ShiftOperator {
            i,
            j,
            m,
            blocks: Vec::new(),
            good: true,
            seed: grid.seed,
            sample,
            excluded_bad: 0,
            excluded_window: 0,
        }
    }

    pub fn coefficient_count(&self) -> usize {
        self.blocks.iter().map(|b| b.entries.len()).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Cube<1>, &ShiftEntry)> {
        self.blocks.iter().flat_map(|b| b.entries.iter().map(move |e| (&b.k, e)))
    }

    /// `max |a|·|K|/√(|I||J|)` over stored coefficients.
    pub fn max_normalized(&self) -> f64 {
        self.entries().map(|(k, e)| e.a.abs() / coefficient_cap(&e.i.cube, &e.j.cube, k)).fold(0.0, f64::max)
    }

    /// Recomputes the good flag: `mI, mJ ⊂ K` for every stored coefficient.
    pub fn check_good(&self, grid: &GridShift<1>) -> bool {
        self.entries().all(|(k, e)| {
            let rk = grid.region(k);
            e.a == 0.0
                || (rk.contains(&grid.region(&e.i.cube).dilate(self.m))
                    && rk.contains(&grid.region(&e.j.cube).dilate(self.m)))
        })
    }

    /// The adjoint: a `(j, i)` shift with transposed blocks.
    pub fn transpose(&self) -> ShiftOperator {
        let blocks = self
            .blocks
            .iter()
            .map(|b| Block {
                k: b.k,
                entries: b.entries.iter().map(|e| ShiftEntry { i: e.j, j: e.i, ..*e }).collect(),
            })
            .collect();
        ShiftOperator { i: self.j, j: self.i, blocks, ..self.clone() }
    }

    /// `Σ a_IJK w_IJK f(I) g(J)` with `w = 1/π_good`, given coefficient lookups.
    pub fn weighted_pairing(&self, f: impl Fn(&Element) -> f64, g: impl Fn(&Element) -> f64) -> f64 {
        self.entries().map(|(_, e)| e.a * e.inv_pi_good * f(&e.i) * g(&e.j)).sum()
    }
}

/// Run-level inputs of shift assembly.
#[derive(Clone, Copy, Debug)]
pub struct ShiftContext<'a> {
    pub tables: &'a PairingTables,
    pub norm: &'a Normalization,
    pub weights: &'a GoodWeights,
    pub classes: &'a [ClassKind],
    pub m: u32,
    pub sample: u64,
}

/// Pairing `⟨ψ_J, Tψ_I⟩` read from the tables.
pub fn table_pairing(tables: &PairingTables, grid: &GridShift<1>, i: &Element, j: &Element) -> f64 {
    let k_max = tables.k_max;
    let delta = corner_units(grid.corner(&j.cube)[0], k_max) - corner_units(grid.corner(&i.cube)[0], k_max);
    tables.get(i.kind(), j.kind(), delta)
}

/// Every shift `(i, j)` reached by the classified pairs, good-filtered on
/// `smaller{I,J}`, keyed by `(i, j)`.
pub fn assemble_shifts(
    grid: &GridShift<1>,
    is: &[Element],
    js: &[Element],
    pairs: &PairSet,
    ctx: &ShiftContext,
) -> Result<BTreeMap<(u32, u32), ShiftOperator>> {
    let mut blocks: BTreeMap<(u32, u32), BTreeMap<Cube<1>, Vec<ShiftEntry>>> = BTreeMap::new();
    let mut bad: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut bad_cache: HashMap<Cube<1>, bool> = HashMap::new();
    for p in &pairs.pairs {
        if !ctx.classes.contains(&p.class.kind) {
            continue;
        }
        let (ei, ej) = (&is[p.i], &js[p.j]);
        let key = (p.class.i, p.class.j);
        let small = smaller_of(&ei.cube, &ej.cube);
        let is_bad = *bad_cache.entry(small).or_insert_with(|| is_bad_or_unclassified(&small, grid));
        if is_bad {
            *bad.entry(key).or_default() += 1;
            continue;
        }
        let pairing = table_pairing(ctx.tables, grid, ei, ej);
        let a = shift_coefficient(pairing, &ei.cube, &ej.cube, &p.class, ctx.norm)?;
        let entry = ShiftEntry { i: *ei, j: *ej, class: p.class.kind, a, inv_pi_good: ctx.weights.inv(small.k) };
        blocks.entry(key).or_default().entry(p.class.k).or_default().push(entry);
    }
    let mut keys: Vec<(u32, u32)> = blocks.keys().chain(bad.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let mut out = BTreeMap::new();
    for key in keys {
        let mut s = ShiftOperator::empty(key.0, key.1, ctx.m, grid, ctx.sample);
        s.blocks = blocks
            .remove(&key)
            .unwrap_or_default()
            .into_iter()
            .map(|(k, entries)| Block { k, entries })
            .collect();
        s.excluded_bad = bad.get(&key).copied().unwrap_or(0);
        s.excluded_window = pairs.escaped;
        s.good = s.check_good(grid);
        out.insert(key, s);
    }
    Ok(out)
}

/// The single shift of type `(i, j)` over all ordered pairs of `elements`.
pub fn assemble_shift(grid: &GridShift<1>, elements: &[Element], i: u32, j: u32, ctx: &ShiftContext) -> Result<ShiftOperator> {
    if ctx.classes.is_empty() {
        return Ok(ShiftOperator::empty(i, j, ctx.m, grid, ctx.sample));
    }
    let pairs = classify_elements(elements, elements, grid, ctx.m)?;
    let mut all = assemble_shifts(grid, elements, elements, &pairs, ctx)?;
    let mut s = all.remove(&(i, j)).unwrap_or_else(|| ShiftOperator::empty(i, j, ctx.m, grid, ctx.sample));
    s.excluded_window = pairs.escaped;
    Ok(s)
}

/// Saturated good shift: every good triple with `mI, mJ ⊂ K`, `K` at level
/// `k_level`, coefficient exactly `√(|I||J|)/|K|`.
pub fn saturated_shift(grid: &GridShift<1>, i: u32, j: u32, m: u32, k_level: i32) -> Result<ShiftOperator> {
    let w = &grid.window;
    if k_level < w.k_min || k_level + i.max(j) as i32 > w.k_max {
        return Err(Error::InvalidArgument(format!("shift ({i},{j}) at level {k_level} leaves the window")));
    }
    let inside = |k: &Cube<1>, level: i32| -> Vec<Cube<1>> {
        let rk = grid.region(k);
        w.cubes_at(level, grid).into_iter().filter(|c| rk.contains(&grid.region(c).dilate(m))).collect()
    };
    let mut s = ShiftOperator::empty(i, j, m, grid, 0);
    for k in w.cubes_at(k_level, grid) {
        let ci = inside(&k, k_level + i as i32);
        let cj = inside(&k, k_level + j as i32);
        let mut entries = Vec::new();
        for a in &ci {
            for b in &cj {
                let small = smaller_of(a, b);
                if is_bad_or_unclassified(&small, grid) {
                    s.excluded_bad += 1;
                    continue;
                }
                entries.push(ShiftEntry {
                    i: Element::wavelet(*a),
                    j: Element::wavelet(*b),
                    class: ClassKind::Contained,
                    a: coefficient_cap(a, b, &k),
                    inv_pi_good: 1.0,
                });
            }
        }
        if !entries.is_empty() {
            s.blocks.push(Block { k, entries });
        }
    }
    s.good = s.check_good(grid);
    Ok(s)
}

/// Sampled elements on mesh `p`, cached by element.
struct Samples<'a> {
    sys: &'a WaveletSystem,
    grid: &'a GridShift<1>,
    p: i32,
    cache: HashMap<Element, MeshFn>,
}

impl<'a> Samples<'a> {
    fn new(sys: &'a WaveletSystem, grid: &'a GridShift<1>, p: i32) -> Self {
        Samples { sys, grid, p, cache: HashMap::new() }
    }

    fn get(&mut self, e: &Element) -> Result<&MeshFn> {
        if !self.cache.contains_key(e) {
            let f = self.sys.sample_1d(e.eta, e.cube.k, self.grid.corner(&e.cube)[0], self.p)?;
            self.cache.insert(*e, f);
        }
        Ok(&self.cache[e])
    }
}

fn apply_entries<'e>(
    entries: impl Iterator<Item = &'e ShiftEntry>,
    samples: &mut Samples,
    f: &MeshFn,
) -> Result<MeshFn> {
    let mut coef: HashMap<Element, f64> = HashMap::new();
    let mut out = MeshFn::zeros(f.p, f.start, 0);
    let mut acc: BTreeMap<Element, f64> = BTreeMap::new();
    for e in entries {
        let c = match coef.get(&e.i) {
            Some(c) => *c,
            None => {
                let c = samples.get(&e.i)?.inner(f);
                coef.insert(e.i, c);
                c
            }
        };
        *acc.entry(e.j).or_default() += e.a * c;
    }
    for (j, c) in acc {
        if c != 0.0 {
            out.add_scaled(c, samples.get(&j)?);
        }
    }
    Ok(out)
}

/// `A_K f` on the mesh of `f`.
pub fn apply_averaging(block: &Block, sys: &WaveletSystem, grid: &GridShift<1>, f: &MeshFn) -> Result<MeshFn> {
    apply_entries(block.entries.iter(), &mut Samples::new(sys, grid, f.p), f)
}

/// `S f` on the mesh of `f`.
pub fn apply_shift(s: &ShiftOperator, sys: &WaveletSystem, grid: &GridShift<1>, f: &MeshFn) -> Result<MeshFn> {
    apply_entries(s.entries().map(|(_, e)| e), &mut Samples::new(sys, grid, f.p), f)
}

/// Pointwise constant `|K| sup_{x,y} |Σ a ψ_J(x) ψ_I(y)|`, so that
/// `|A_K f| ≤ C 1_K (1/|K|) ∫_K |f|`; sup taken on the mesh `p`.
pub fn block_constant(block: &Block, sys: &WaveletSystem, grid: &GridShift<1>, p: i32) -> Result<f64> {
    let mut samples = Samples::new(sys, grid, p);
    let mut is: Vec<Element> = block.entries.iter().map(|e| e.i).collect();
    let mut js: Vec<Element> = block.entries.iter().map(|e| e.j).collect();
    is.sort_unstable();
    is.dedup();
    js.sort_unstable();
    js.dedup();
    let unit = side_ticks(p);
    let rk = grid.region(&block.k);
    let (lo, hi) = (rk.lo[0] / unit, rk.hi[0] / unit);
    let n = (hi - lo) as usize;
    let dense = |e: &Element, samples: &mut Samples| -> Result<Vec<f64>> { Ok(samples.get(e)?.window(lo, hi).values) };
    let psi_i: Vec<Vec<f64>> = is.iter().map(|e| dense(e, &mut samples)).collect::<Result<_>>()?;
    let psi_j: Vec<Vec<f64>> = js.iter().map(|e| dense(e, &mut samples)).collect::<Result<_>>()?;
    // b[J][y] = Σ_I a_IJ ψ_I(y)
    let mut b = vec![vec![0.0; n]; js.len()];
    for e in &block.entries {
        let ii = is.binary_search(&e.i).unwrap();
        let jj = js.binary_search(&e.j).unwrap();
        for (t, v) in b[jj].iter_mut().zip(&psi_i[ii]) {
            *t += e.a * v;
        }
    }
    let sup = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut row = vec![0.0; n];
            for (jj, pj) in psi_j.iter().enumerate() {
                let w = pj[x];
                if w != 0.0 {
                    for (r, v) in row.iter_mut().zip(&b[jj]) {
                        *r += w * v;
                    }
                }
            }
            row.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .reduce(|| 0.0, f64::max);
    Ok(block.k.volume() * sup)
}

/// `‖S‖_{L²→L²}` by power iteration on `S*S` over the mesh `p`.
pub fn shift_norm_estimate(s: &ShiftOperator, sys: &WaveletSystem, grid: &GridShift<1>, p: i32) -> Result<f64> {
    if s.entries().all(|(_, e)| e.a == 0.0) {
        return Ok(0.0);
    }
    let adj = s.transpose();
    let mut samples = Samples::new(sys, grid, p);
    let mut inputs: Vec<Element> = s.entries().map(|(_, e)| e.i).collect();
    inputs.sort_unstable();
    inputs.dedup();
    // Deterministic start with mixed signs so no singular direction is missed.
    let mut x = MeshFn::zeros(p, 0, 0);
    for (n, e) in inputs.iter().enumerate() {
        let w = 1.0 + ((n * 7919) % 13) as f64 / 13.0;
        x.add_scaled(if n % 3 == 2 { -w } else { w }, samples.get(e)?);
    }
    let mut lambda = 0.0;
    const CAP: usize = 500;
    for _ in 0..CAP {
        let nx = x.norm2();
        if nx == 0.0 {
            return Ok(0.0);
        }
        let sx = apply_entries(s.entries().map(|(_, e)| e), &mut samples, &x)?;
        let y = apply_entries(adj.entries().map(|(_, e)| e), &mut samples, &sx)?;
        let next = y.norm2() / nx;
        let done = (next - lambda).abs() <= 1e-4 * next;
        lambda = next;
        if done {
            return Ok(lambda.sqrt());
        }
        let ny = y.norm2();
        x = MeshFn { values: y.values.iter().map(|v| v / ny).collect(), ..y };
    }
    Err(Error::PowerIterationDiverged { iterations: CAP })
}

/// Largest number of dilates `mJ` covering one point.
pub fn bounded_overlap(cubes: &[Cube<1>], grid: &GridShift<1>, m: u32) -> usize {
    let mut events: Vec<(i64, i32)> = cubes
        .iter()
        .flat_map(|c| {
            let r = grid.region(c).dilate(m);
            [(r.lo[0], 1), (r.hi[0], -1)]
        })
        .collect();
    // Half-open: closings sort before openings at the same point.
    events.sort_unstable();
    let mut cur = 0i32;
    let mut best = 0i32;
    for (_, d) in events {
        cur += d;
        best = best.max(cur);
    }
    best as usize
}
