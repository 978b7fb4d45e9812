mod common;

use common::{random_detectable_problem, rng};
use turnpike_core::dissipativity::{certify, lmi_margin, verify_strict_dissipativity, RateChoice};
use turnpike_core::Problem;

fn detectable_instances(seed: u64, count: usize) -> Vec<Problem> {
    let mut r = rng(seed);
    (0..count).map(|_| random_detectable_problem(&mut r)).collect()
}

#[test]
fn random_detectable_instances_certify() {
    for (i, p) in detectable_instances(7, 20).iter().enumerate() {
        let t = std::time::Instant::now();
        let (cert, sc) = certify(p, RateChoice::Auto).unwrap_or_else(|e| panic!("instance {i}: {e}"));
        assert!(cert.kkt_ok, "instance {i}");
        assert!(sc.s > 0.0);
        assert!(sc.lmi_margin <= 0.0, "instance {i}: {}", sc.lmi_margin);
        assert!(sc.p_positive_definite, "instance {i}");
        let report = verify_strict_dissipativity(&sc, p, 10_000, 42).unwrap();
        println!("{i} n={} m={} s={:.3e} margin {:.2e} worst {:.2e} {:?}", p.n(), p.m(), sc.s, sc.lmi_margin, report.worst_margin, t.elapsed());
        assert!(report.passed, "instance {i}: {report:?}");
        assert_eq!(lmi_margin(p, &sc.storage_matrix(), sc.s), sc.lmi_margin);
    }
}
