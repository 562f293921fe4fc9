use ergocount::base::{build_base, verify_base, BaseParams, LifeFunction, SamplingPolicy};
use ergocount::rational::{c99, ratio};
use ergocount::{counting, GridInterval};
use num_bigint::BigInt;

fn reference() -> BaseParams {
    BaseParams::new(4, LifeFunction::successor(), 11, 0, GridInterval::unit())
}

#[test]
fn reference_system_verifies() {
    let sys = build_base(reference()).unwrap();
    assert_eq!(sys.j0, 100);
    let rep = verify_base(&sys, &SamplingPolicy::default()).unwrap();
    for c in rep.failures() {
        eprintln!("{c}");
    }
    assert!(rep.all_pass(), "{}", rep.summary());
}

#[test]
fn shifted_residue_is_caught() {
    let sys = build_base(reference()).unwrap();
    let bad = sys.with_support_residue(1).unwrap();
    let policy = SamplingPolicy { random_points: 4, endpoint_cap: 4, ..Default::default() };
    let rep = verify_base(&bad, &policy).unwrap();
    let failed: Vec<&str> = rep.failures().map(|c| c.claim_id.as_str()).collect();
    assert_eq!(failed, vec!["base.f.residue"]);
    // the counting bound only sees the density of the support, not its phase
    assert!(rep.with_prefix("base.count").all(|c| c.passed()));
}

#[test]
fn first_component_counts_every_block() {
    let sys = build_base(reference()).unwrap();
    let x = sys.gammas[0].runs(1).unwrap()[0].0.clone();
    let n = BigInt::from(1u32) << 11;
    let c = counting::count_n_int(&sys.f, sys.orbit(), &x, &n).unwrap();
    // hits at k = h, 2h, ..., (n-1)h
    assert_eq!(c, &n - 1);
    assert!(ergocount::rational::big(c) / ergocount::rational::big(n) > c99());
}

#[test]
fn shifted_interval_and_resolution() {
    let mut p = reference();
    p.interval = GridInterval::new(BigInt::from(5), 3);
    let sys = build_base(p).unwrap();
    assert_eq!(sys.j0, 103);
    let rep = verify_base(&sys, &SamplingPolicy { random_points: 10, endpoint_cap: 8, ..Default::default() }).unwrap();
    assert!(rep.all_pass(), "{}", rep.summary());
    assert_eq!(sys.cascade[3].measure().unwrap(), ratio(1, 16));
}
