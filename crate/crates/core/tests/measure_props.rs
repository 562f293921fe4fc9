//! Set algebra and orbit counting against a 64-cell bitmap model.

use ergocount::counting::{brute_force_hits, brute_force_n, count_n, OrbitSpec};
use ergocount::harness::random_instance;
use ergocount::rational::{big, int, ratio};
use ergocount::{Constraint, ExactRational as Q, Family, PeriodicIntervalSet};
use num_bigint::BigInt;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CELLS: i64 = 64;

fn cell(i: i64) -> Q {
    ratio(i, CELLS)
}

/// Window `[a, b)/64` with up to two periodic constraints whose pieces sit
/// on the 1/64 grid, so membership is constant on every cell.
fn family() -> impl Strategy<Value = Family> {
    let constraint = (1u32..=5).prop_flat_map(|e| {
        let span = CELLS >> e;
        (Just(e), 0..span, 1..=span).prop_map(move |(e, a, len)| {
            let s = a.min(span - 1);
            let t = (s + len).min(span);
            Constraint::single(-(e as i64), cell(s), cell(t)).unwrap()
        })
    });
    (0..CELLS, 1..=CELLS, prop::collection::vec(constraint, 0..=2)).prop_map(|(a, len, cs)| {
        let lo = a.min(CELLS - 1);
        Family::new(Some(cell(lo)), Some(cell((lo + len).min(CELLS))), cs)
    })
}

fn set() -> impl Strategy<Value = PeriodicIntervalSet> {
    prop::collection::vec(family(), 1..=3).prop_map(|fs| {
        // make the families disjoint by folding them through union
        fs.into_iter().fold(PeriodicIntervalSet::empty(), |acc, f| acc.union(&PeriodicIntervalSet::from_family(f)).unwrap())
    })
}

fn bitmap(s: &PeriodicIntervalSet) -> Vec<bool> {
    (0..CELLS).map(|i| s.contains(&(cell(i) + ratio(1, 2 * CELLS)))).collect()
}

fn bitmap_measure(b: &[bool]) -> Q {
    ratio(b.iter().filter(|&&x| x).count() as i64, CELLS)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn measure_matches_bitmap(a in set()) {
        prop_assert!(a.validate().is_ok());
        prop_assert_eq!(a.measure().unwrap(), bitmap_measure(&bitmap(&a)));
    }

    #[test]
    fn boolean_ops_match_bitmap(a in set(), b in set()) {
        let (ba, bb) = (bitmap(&a), bitmap(&b));
        let i = a.intersect(&b).unwrap();
        let u = a.union(&b).unwrap();
        let d = a.difference(&b).unwrap();
        prop_assert!(u.validate().is_ok() && d.validate().is_ok());
        let and: Vec<bool> = ba.iter().zip(&bb).map(|(x, y)| *x && *y).collect();
        let or: Vec<bool> = ba.iter().zip(&bb).map(|(x, y)| *x || *y).collect();
        let minus: Vec<bool> = ba.iter().zip(&bb).map(|(x, y)| *x && !*y).collect();
        prop_assert_eq!(bitmap(&i), and.clone());
        prop_assert_eq!(bitmap(&u), or);
        prop_assert_eq!(bitmap(&d), minus);
        // inclusion–exclusion, exactly
        prop_assert_eq!(
            u.measure().unwrap() + i.measure().unwrap(),
            a.measure().unwrap() + b.measure().unwrap()
        );
        prop_assert_eq!(i.measure().unwrap(), bitmap_measure(&and));
    }

    #[test]
    fn complement_parts_partition_the_line(f in family(), k in 0..CELLS) {
        let x = cell(k) + ratio(1, 3 * CELLS);
        let parts = f.complement_parts();
        let hits = parts.iter().filter(|p| p.contains(&x)).count() + usize::from(f.contains(&x));
        prop_assert_eq!(hits, 1);
    }

    #[test]
    fn translation_moves_membership(a in set(), shift in -CELLS..CELLS, k in 0..CELLS) {
        let t = cell(shift);
        let moved = a.translate(&t);
        let x = cell(k) + ratio(1, 2 * CELLS);
        prop_assert_eq!(moved.contains(&(&x + &t)), a.contains(&x));
        prop_assert_eq!(moved.measure().unwrap(), a.measure().unwrap());
    }

    #[test]
    fn constraints_are_periodic(e in 1u32..=5, s in 0i64..2, k in 0..CELLS, reps in -3i64..3) {
        let span = CELLS >> e;
        let c = Constraint::single(-(e as i64), cell(s.min(span - 1)), cell(span.min(s + 1))).unwrap();
        let x = cell(k) + ratio(1, 2 * CELLS);
        prop_assert_eq!(c.contains(&x), c.contains(&(&x + c.period() * int(reps))));
    }

    #[test]
    fn scaled_components_are_subsets(a in set(), num in 1i64..=8) {
        let rho = ratio(num, 8);
        let s = a.scale_components(&rho).unwrap();
        prop_assert_eq!(s.measure().unwrap(), &rho * a.measure().unwrap());
        prop_assert!(s.difference(&a).unwrap().is_empty());
    }

    #[test]
    fn orbit_hits_match_iteration(a in set(), j in 6u64..=9, start in 0..CELLS, k_lo in 0i64..50, len in 0i64..300, wrap in any::<bool>()) {
        let x = cell(start) + ratio(1, 7 * CELLS);
        let orbit = OrbitSpec { j, wrap };
        let fast = a.count_orbit_hits(j, &x, &BigInt::from(k_lo), &BigInt::from(k_lo + len), wrap).unwrap();
        prop_assert_eq!(fast, brute_force_hits(&a, orbit, &x, k_lo, k_lo + len));
    }

    #[test]
    fn counts_match_iteration(seed in any::<u64>(), j in 1u64..=12, wrap in any::<bool>(), n in 1i64..2000, num in 0i64..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_instance(&mut rng, j);
        let x = ratio(num, 64);
        let orbit = OrbitSpec { j, wrap };
        let fast = count_n(&f, orbit, &x, &int(n)).unwrap();
        let slow = brute_force_n(&f, orbit, &x, &int(n), &BigInt::from(1u64 << 24)).unwrap();
        prop_assert_eq!(big(fast), big(slow));
    }
}
