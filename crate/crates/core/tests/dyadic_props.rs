use dyadrep::dyadic::*;
use dyadrep::shift::{classify_ordered, smaller_of};
use proptest::prelude::*;

fn window() -> Window<1> {
    Window::new(3, 0, 9).unwrap()
}

/// The level-`k` window cube selected by `pick`, if the level has any.
fn cube_in(grid: &GridShift<1>, k: i32, pick: u64) -> Option<Cube<1>> {
    let cs = grid.window.cubes_at(k, grid);
    (!cs.is_empty()).then(|| cs[(pick % cs.len() as u64) as usize])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cubes_are_nested_or_disjoint(seed in any::<u64>(), k1 in 0i32..=9, k2 in 0i32..=9, p1 in any::<u64>(), p2 in any::<u64>()) {
        let g = GridShift::random(window(), seed, 0, 2, 1.0).unwrap();
        let (Some(a), Some(b)) = (cube_in(&g, k1, p1), cube_in(&g, k2, p2)) else { return Ok(()) };
        let (ra, rb) = (g.region(&a), g.region(&b));
        prop_assert!(!ra.intersects(&rb) || ra.contains(&rb) || rb.contains(&ra));
        if k1 <= k2 && ra.intersects(&rb) {
            prop_assert_eq!(g.ancestor(&b, k1), a);
        }
    }

    #[test]
    fn ancestors_contain_and_compose(seed in any::<u64>(), k in 2i32..=9, up in 1i32..=2, pick in any::<u64>()) {
        let g = GridShift::random(window(), seed, 3, 2, 1.0).unwrap();
        let Some(c) = cube_in(&g, k, pick) else { return Ok(()) };
        let a = g.ancestor(&c, k - up);
        prop_assert!(g.region(&a).contains(&g.region(&c)));
        let mut p = c;
        for _ in 0..up {
            p = g.parent(&p);
        }
        prop_assert_eq!(p, a);
        prop_assert_eq!(g.cube_containing(g.corner(&c), k), c);
    }

    #[test]
    fn join_contains_both_dilates(seed in any::<u64>(), k1 in 3i32..=9, k2 in 3i32..=9, p1 in any::<u64>(), p2 in any::<u64>(), m in prop::sample::select(vec![1u32, 3, 5])) {
        let g = GridShift::random(window(), seed, 1, 2, 1.0).unwrap();
        let (Some(a), Some(b)) = (cube_in(&g, k1, p1), cube_in(&g, k2, p2)) else { return Ok(()) };
        match ancestor_join(&a, &b, m, &g) {
            Ok(j) => {
                let rk = g.region(&j.k);
                prop_assert!(rk.contains(&g.region(&a).dilate(m)) && rk.contains(&g.region(&b).dilate(m)));
                prop_assert_eq!((j.i as i32, j.j as i32), (a.k - j.k.k, b.k - j.k.k));
                // Minimal: no child of K holds both.
                if j.k.k < g.window.k_max {
                    let child = g.cube_containing(g.region(&a).dilate(m).lo, j.k.k + 1);
                    let rc = g.region(&child);
                    prop_assert!(!(rc.contains(&g.region(&a).dilate(m)) && rc.contains(&g.region(&b).dilate(m))));
                }
                let swapped = ancestor_join(&b, &a, m, &g).unwrap();
                prop_assert_eq!((swapped.k, swapped.i, swapped.j), (j.k, j.j, j.i));
            }
            Err(e) => {
                let escaped = matches!(e, dyadrep::Error::NoContainingAncestor { .. });
                prop_assert!(escaped);
            }
        }
    }

    #[test]
    fn long_distance_is_symmetric_and_dominates_sides(seed in any::<u64>(), k1 in 0i32..=9, k2 in 0i32..=9, p1 in any::<u64>(), p2 in any::<u64>()) {
        let g = GridShift::random(window(), seed, 2, 2, 1.0).unwrap();
        let (Some(a), Some(b)) = (cube_in(&g, k1, p1), cube_in(&g, k2, p2)) else { return Ok(()) };
        let d = long_distance(&a, &b, &g);
        prop_assert_eq!(d, long_distance(&b, &a, &g));
        prop_assert!(d.0 >= side_ticks(k1) + side_ticks(k2));
        prop_assert!(d.0 >= side_ticks(k1.min(k2)));
    }

    /// Raising r or θ removes witnesses, so badness can only disappear.
    #[test]
    fn badness_is_monotone_in_r_and_theta(seed in any::<u64>(), sample in 0u64..1000, r in 1u32..6, t in 1u32..=9, pick in any::<u64>()) {
        let w = Window::<1>::new(3, 0, 12).unwrap();
        let theta = t as f64 / 10.0;
        let g = GridShift::random(w, seed, sample, r, theta).unwrap();
        let c = cube_in(&g, 12, pick).unwrap();
        let bad = is_bad(&c, &g).unwrap();
        let mut g_r = g.clone();
        g_r.r = r + 1;
        let mut g_t = g.clone();
        g_t.theta = theta + 0.1;
        prop_assert!(!is_bad(&c, &g_r).unwrap() || bad);
        prop_assert!(!is_bad(&c, &g_t).unwrap() || bad);
    }

    #[test]
    fn exact_bad_probability_respects_lemma(r in 1u32..10, t in 1u32..=10, extra in 0u32..6) {
        let theta = t as f64 / 10.0;
        let p = pi_bad_exact(r + extra, r, theta, 1).unwrap();
        prop_assert!(p <= lemma_bound(1, r, theta).min(1.0) + 1e-12);
        prop_assert!(p <= pi_bad_exact(r + extra + 1, r, theta, 1).unwrap());
    }

    #[test]
    fn classification_ignores_argument_order(seed in any::<u64>(), k1 in 2i32..=9, k2 in 2i32..=9, p1 in any::<u64>(), p2 in any::<u64>()) {
        let g = GridShift::random(window(), seed, 4, 2, 1.0).unwrap();
        let (Some(a), Some(b)) = (cube_in(&g, k1, p1), cube_in(&g, k2, p2)) else { return Ok(()) };
        let (x, y) = (classify_ordered(&a, &b, &g, 3), classify_ordered(&b, &a, &g, 3));
        match (x, y) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x.kind, y.kind);
                prop_assert_eq!(x.k, y.k);
                prop_assert_eq!((x.i, x.j), (y.j, y.i));
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "order-dependent failure"),
        }
        let s = smaller_of(&a, &b);
        prop_assert!(s.k == k1.max(k2));
    }
}
