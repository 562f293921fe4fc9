use ergocount::base::SamplingPolicy;
use ergocount::level::{build_level, compositional_life, verify_level, LevelBudget, LevelParams, LifeTower};
use ergocount::GridInterval;
use std::time::Instant;

#[test]
fn level_two_reference() {
    let t = Instant::now();
    let sys = build_level(&LevelParams::new(GridInterval::unit(), 2, 4, 11), &LevelBudget::default()).unwrap();
    eprintln!("built in {:?}; J = {}", t.elapsed(), sys.j);
    eprintln!("{:?}", sys.size_report());
    let rep = verify_level(&sys, &SamplingPolicy::default()).unwrap();
    eprintln!("verified in {:?}: {}", t.elapsed(), rep.summary());
    for c in rep.failures().take(10) {
        eprintln!("{c}");
    }
    assert!(rep.all_pass());
}

#[test]
fn tower_matches_composition() {
    let t = LifeTower::new(5, 5).unwrap();
    assert_eq!(t.coeffs, vec![1, 85, 505, 2605, 13105]);
    for k in 1..=5 {
        assert_eq!(compositional_life(5, k, 11).unwrap(), 11 + t.coeffs[k as usize - 1]);
    }
}
