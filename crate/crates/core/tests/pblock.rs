use ergocount::base::SamplingPolicy;
use ergocount::harness::random_instance;
use ergocount::level::LevelBudget;
use ergocount::pblock::{
    build_pblock, estimate_size, floor_log2, j0_symbolic, log2_bracket, m_p, plan_pblock, smallness_holds, threshold_set,
    verify_pblock, PBlockParams,
};
use ergocount::rational::{int, ratio};
use ergocount::{Error, GridInterval, StepFunction};
use num_bigint::BigInt;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Grid-6 variables are constant on 1/64 cells, so the cell midpoints
    /// decide both membership and measure.
    #[test]
    fn threshold_set_matches_pointwise_sums(seed in any::<u64>(), k in 1usize..=3, tn in 0i64..120, td in 1i64..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vars: Vec<StepFunction> = (0..k).map(|_| random_instance(&mut rng, 6)).collect();
        let t = ratio(tn, td);
        let set = threshold_set(&vars, &GridInterval::unit(), &t).unwrap();
        let mut above = 0;
        for i in 0..64 {
            let x = ratio(2 * i + 1, 128);
            let sum = vars.iter().fold(int(0), |a, v| a + v.eval(&x));
            let inside = sum > t;
            above += i64::from(inside);
            prop_assert_eq!(set.contains(&x), inside);
        }
        prop_assert_eq!(set.measure, ratio(above, 64));
    }

    #[test]
    fn log_brackets_contain_powers(e in 1i64..200, s in 4u32..40) {
        let r = ergocount::rational::pow2(e) * ratio(3, 2);
        let b = log2_bracket(&r, s);
        prop_assert!(b.lo <= b.hi);
        prop_assert_eq!(floor_log2(&r), e);
        // 2^{lo} ≤ r < 2^{hi} checked through the integer part
        prop_assert!(b.lo < int(e + 1) && b.hi > int(e));
    }
}

#[test]
fn gains() {
    let expected = [(2, 3), (3, 5), (4, 8), (8, 14)];
    for (p, m) in expected {
        assert_eq!(m_p(p).unwrap(), m, "p = {p}");
    }
}

#[test]
fn plan_validation() {
    assert!(plan_pblock(&PBlockParams::new(1, true)).is_err());
    assert!(plan_pblock(&PBlockParams::new(2, false)).is_err());
    assert!(plan_pblock(&PBlockParams::new(2, true)).is_ok());
    assert!(plan_pblock(&PBlockParams { p: 3, relaxed: true, levels: Some(9) }).is_err());
    assert!(plan_pblock(&PBlockParams { p: 3, relaxed: true, levels: Some(0) }).is_err());
}

#[test]
fn plan_claims_hold_for_small_p() {
    for p in 3..=10 {
        let rep = plan_pblock(&PBlockParams::new(p, true)).unwrap().verify().unwrap();
        assert!(rep.all_pass(), "p = {p}: {:?}", rep.failures().map(|c| c.to_string()).collect::<Vec<_>>());
    }
}

#[test]
fn smallness_threshold() {
    assert_eq!(smallness_holds(1 << 21).unwrap(), Some(false));
    assert_eq!(smallness_holds(1 << 22).unwrap(), Some(true));
}

#[test]
fn grid_exponent_recursion() {
    // one level is the plain base system: N_1 + (M - 1)(c_1 + 20) + c_1 + M + 21
    let j0 = j0_symbolic(4, 1, &BigInt::from(11), &BigInt::from(0));
    assert_eq!(j0, BigInt::from(11 + 3 * 21 + 1 + 4 + 21));
    let est = estimate_size(5, &BigInt::from(8), &BigInt::from(11));
    assert_eq!(est.j0.as_deref(), Some("65625136"));
}

#[test]
fn full_block_is_refused_with_an_estimate() {
    let budget = LevelBudget { max_level: 8, ..LevelBudget::default() };
    match build_pblock(&PBlockParams::new(3, true), &budget) {
        Err(Error::Budget { estimate, .. }) => assert!(estimate.contains("65625136")),
        other => panic!("expected a budget error, got {other:?}"),
    }
}

#[test]
fn reduced_block_verifies() {
    let block = build_pblock(&PBlockParams { p: 2, relaxed: true, levels: Some(1) }, &LevelBudget::default()).unwrap();
    assert!(block.is_reduced());
    let rep = verify_pblock(&block, &SamplingPolicy { random_points: 16, ..Default::default() }).unwrap();
    assert!(rep.all_pass(), "{}", rep.summary());
}
