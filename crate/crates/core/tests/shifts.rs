use dyadrep::dyadic::{GridShift, Window};
use dyadrep::mesh::MeshFn;
use dyadrep::operators::KernelOp;
use dyadrep::shift::*;
use dyadrep::tables::PairingTables;
use dyadrep::wavelet::{Filter, WaveletSystem};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn db(id: &str) -> WaveletSystem {
    WaveletSystem::build_unchecked(&Filter::builtin(id).unwrap(), 14).unwrap()
}

fn random_mesh(p: i32, start: i64, len: usize, seed: u64) -> MeshFn {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MeshFn { p, start, values: (0..len).map(|_| rng.random_range(-1.0..1.0)).collect() }
}

fn randomize_signs(s: &mut ShiftOperator, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for b in &mut s.blocks {
        for e in &mut b.entries {
            e.a *= rng.random_range(-1.0..1.0);
        }
    }
}

#[test]
fn norm_estimate_matches_dense_svd() {
    let sys = db("db2");
    let w = Window::<1>::new(1, 0, 5).unwrap();
    let g = GridShift::random(w, 11, 0, 24, 1.0).unwrap();
    let mut s = saturated_shift(&g, 2, 4, sys.m, 0).unwrap();
    randomize_signs(&mut s, 3);
    assert!(s.coefficient_count() > 0 && s.coefficient_count() <= 200);
    let mut is: Vec<Element> = s.entries().map(|(_, e)| e.i).collect();
    let mut js: Vec<Element> = s.entries().map(|(_, e)| e.j).collect();
    is.sort();
    is.dedup();
    js.sort();
    js.dedup();
    let mut a = DMatrix::<f64>::zeros(js.len(), is.len());
    for (_, e) in s.entries() {
        a[(js.binary_search(&e.j).unwrap(), is.binary_search(&e.i).unwrap())] += e.a;
    }
    let dense = a.singular_values().max();
    let est = shift_norm_estimate(&s, &sys, &g, 12).unwrap();
    assert!((est - dense).abs() < 1e-3 * dense, "{est} vs {dense}");
    assert_eq!(shift_norm_estimate(&ShiftOperator::empty(1, 1, 3, &g, 0), &sys, &g, 12).unwrap(), 0.0);
}

#[test]
fn transpose_is_the_adjoint() {
    let sys = db("db2");
    let w = Window::<1>::new(2, 0, 4).unwrap();
    let g = GridShift::random(w, 4, 0, 24, 1.0).unwrap();
    let mut s = saturated_shift(&g, 2, 3, sys.m, 0).unwrap();
    randomize_signs(&mut s, 8);
    let t = s.transpose();
    assert_eq!((t.i, t.j), (3, 2));
    let p = 11;
    let f = random_mesh(p, 0, 4 << 11, 1);
    let h = random_mesh(p, 0, 4 << 11, 2);
    let lhs = h.inner(&apply_shift(&s, &sys, &g, &f).unwrap());
    let rhs = apply_shift(&t, &sys, &g, &h).unwrap().inner(&f);
    assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
}

#[test]
fn averaging_blocks_are_local_and_bounded() {
    let sys = db("db3");
    let w = Window::<1>::new(3, 0, 6).unwrap();
    let g = GridShift::random(w, 6, 0, 24, 1.0).unwrap();
    let p = 12;
    let mut consts = Vec::new();
    for (i, j) in [(3, 3), (3, 5), (5, 4), (6, 6)] {
        let mut s = saturated_shift(&g, i, j, sys.m, 0).unwrap();
        assert!(s.good);
        randomize_signs(&mut s, 5);
        for (n, block) in s.blocks.iter().enumerate() {
            let c = block_constant(block, &sys, &g, (i.max(j) + 4) as i32).unwrap();
            let rk = g.region(&block.k);
            let unit = dyadrep::dyadic::side_ticks(p);
            let (lo, hi) = (rk.lo[0] / unit, rk.hi[0] / unit);
            let zero = MeshFn::zeros(p, lo, (hi - lo) as usize);
            assert!(apply_averaging(block, &sys, &g, &zero).unwrap().sup() == 0.0);
            // Supported away from K and every mI in the block.
            let outside = random_mesh(p, hi + (4 << p), 1 << p, 9);
            assert_eq!(apply_averaging(block, &sys, &g, &outside).unwrap().sup(), 0.0);
            let f = random_mesh(p, lo, (hi - lo) as usize, 100 + n as u64);
            let af = apply_averaging(block, &sys, &g, &f).unwrap();
            let mean = f.values.iter().map(|v| v.abs()).sum::<f64>() * f.step() / block.k.volume();
            assert!(af.sup() <= 1.05 * c * mean, "pointwise: {} > {c}·{mean}", af.sup());
            let spill = (af.start..af.end()).filter(|x| *x < lo || *x >= hi).map(|x| af.at(x).abs()).fold(0.0, f64::max);
            assert!(spill < 1e-12, "mass outside K: {spill}");
            let l1 = |m: &MeshFn| m.values.iter().map(|v| v.abs()).sum::<f64>() * m.step();
            assert!(l1(&af) <= 1.05 * c * l1(&f));
            assert!(af.norm2() <= 1.05 * c * f.norm2());
            assert!(af.sup() <= 1.05 * c * f.sup());
            consts.push(c);
        }
    }
    let max = consts.iter().cloned().fold(0.0, f64::max);
    assert!(max < 10.0, "{consts:?}");
}

#[test]
fn saturated_shift_norms_are_flat() {
    let sys = db("db3");
    let w = Window::<1>::new(2, 0, 6).unwrap();
    let g = GridShift::random(w, 2, 0, 24, 1.0).unwrap();
    let mut norms = Vec::new();
    for i in 1..=6 {
        for j in 1..=6 {
            let s = saturated_shift(&g, i, j, sys.m, 0).unwrap();
            assert!(s.good);
            if s.coefficient_count() > 0 {
                norms.push(shift_norm_estimate(&s, &sys, &g, 13).unwrap());
            }
        }
    }
    let (lo, hi) = norms.iter().fold((f64::MAX, 0.0f64), |(a, b), &n| (a.min(n), b.max(n)));
    assert!(hi <= 1.0 + 1e-3 && hi / lo < 2.0, "{norms:?}");
}

#[test]
fn assembled_hilbert_shifts_are_good() {
    let sys = db("db2");
    let w = Window::<1>::new(2, 0, 4).unwrap();
    let op = KernelOp::hilbert(2);
    let tables = PairingTables::build(&op, &sys, &w, 11, false).unwrap();
    let g = GridShift::random(w, 21, 0, 3, 1.0).unwrap();
    let elems = window_elements(&w, &g);
    let pairs = classify_elements(&elems, &elems, &g, sys.m).unwrap();
    assert_eq!(pairs.pairs.len() + pairs.escaped, elems.len() * elems.len());
    let mut norm = Normalization { c_emp: 1.0, czs_seminorm: op.czs_seminorm().unwrap(), op_norm: 1.0, s: 2, eps: 0.5 };
    norm.c_emp = pairs
        .pairs
        .iter()
        .map(|p| {
            let (a, b) = (&elems[p.i], &elems[p.j]);
            coefficient_ratio(table_pairing(&tables, &g, a, b), &a.cube, &b.cube, &p.class, &norm)
        })
        .fold(0.0, f64::max);
    let weights = GoodWeights::new(&w, 3, 1.0).unwrap();
    let ctx = ShiftContext {
        tables: &tables,
        norm: &norm,
        weights: &weights,
        classes: &ClassKind::ALL,
        m: sys.m,
        sample: 0,
    };
    let shifts = assemble_shifts(&g, &elems, &elems, &pairs, &ctx).unwrap();
    assert!(!shifts.is_empty());
    for s in shifts.values() {
        assert!(s.good && s.check_good(&g));
        assert!(s.max_normalized() <= 1.0 + 1e-12);
        for (k, e) in s.entries() {
            assert_eq!(e.i.cube.k - k.k, s.i as i32);
            assert_eq!(e.j.cube.k - k.k, s.j as i32);
            if e.class == ClassKind::Equal {
                assert_eq!(s.i, s.j);
            }
        }
    }
    let bad: usize = shifts.values().map(|s| s.excluded_bad).sum();
    assert!(bad > 0);
    let empty = ShiftContext { classes: &[], ..ctx };
    let z = assemble_shift(&g, &elems, 2, 2, &empty).unwrap();
    assert!(z.good && z.coefficient_count() == 0);
    let far = ShiftContext { classes: &[ClassKind::Far], ..ctx };
    let shifts = assemble_shifts(&g, &elems, &elems, &pairs, &far).unwrap();
    assert!(shifts.values().all(|s| s.entries().all(|(_, e)| e.class == ClassKind::Far) && s.good));
}
