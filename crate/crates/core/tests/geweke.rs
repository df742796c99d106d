use bsvd::geweke::{run_geweke, GewekeConfig};

#[test]
fn joint_distribution_rank_one() {
    let mut cfg = GewekeConfig::new(8, 6, 1, 50_000);
    cfg.seed = 11;
    let report = run_geweke(&cfg).unwrap();
    for s in &report.statistics {
        eprintln!("{:10} prior {:.4} chain {:.4} z {:+.2}", s.name, s.prior_mean, s.chain_mean, s.z);
    }
    assert!(report.max_abs_z() < 4.0);
}

#[test]
fn joint_distribution_rank_two() {
    let mut cfg = GewekeConfig::new(8, 6, 2, 40_000);
    cfg.seed = 12;
    let report = run_geweke(&cfg).unwrap();
    for s in &report.statistics {
        eprintln!("{:10} prior {:.4} chain {:.4} z {:+.2}", s.name, s.prior_mean, s.chain_mean, s.z);
    }
    assert!(report.max_abs_z() < 4.0);
}

#[test]
fn joint_distribution_rank_two_with_rotations() {
    let mut cfg = GewekeConfig::new(8, 6, 2, 40_000);
    cfg.seed = 13;
    cfg.rotation_moves = true;
    let report = run_geweke(&cfg).unwrap();
    for s in &report.statistics {
        eprintln!("{:10} prior {:.4} chain {:.4} z {:+.2}", s.name, s.prior_mean, s.chain_mean, s.z);
    }
    assert!(report.max_abs_z() < 4.0);
}
