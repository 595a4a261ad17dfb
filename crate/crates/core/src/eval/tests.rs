use super::*;
use crate::chain::TxStatus;
use crate::runtime::CrashPoint;

fn cfg(schedule: &[u64]) -> RunConfig {
    RunConfig {
        seed: 11,
        delegation_schedule: schedule.to_vec(),
        ..RunConfig::default()
    }
}

#[test]
fn default_demo_delegates_and_confirms() {
    let r = run_demo(&cfg(&[200])).unwrap();
    assert_eq!(r.exit_code, 0, "{:?}", r.error);
    assert_eq!(r.owner_enclave_balance, 300);
    assert_eq!(r.delegatee_chain_balance, 200);
    assert_eq!(r.owner_chain_balance, 300);
    assert_eq!(r.chain_calls_during_delegation, 0);
    assert!(matches!(r.delegations[0].status, Some(TxStatus::Confirmed { .. })));
    assert!(r.transcript.contains("exit 0"));
}

#[test]
fn overdraft_is_refused_with_exit_one() {
    let r = run_demo(&cfg(&[200, 400])).unwrap();
    assert_eq!(r.exit_code, 1);
    assert!(matches!(r.delegations[1].result, DelegationResult::Refused { .. }));
    assert_eq!(r.delegations[1].status, None);
    assert_eq!(r.owner_enclave_balance, 300);
    assert_eq!(r.delegatee_chain_balance, 200);
}

#[test]
fn same_seed_same_report() {
    let c = cfg(&[100, 50]);
    assert_eq!(run_demo(&c).unwrap(), run_demo(&c).unwrap());
    let other = RunConfig { seed: 12, ..c.clone() };
    assert_ne!(run_demo(&c).unwrap().transcript, run_demo(&other).unwrap().transcript);
}

#[test]
fn invalid_config_is_rejected_before_running() {
    assert_eq!(run_demo(&cfg(&[0])).unwrap_err(), ConfigError::ZeroAmount(0));
}

#[test]
fn crash_plans_conserve_balance() {
    for point in CrashPoint::ALL {
        let mut c = cfg(&[100, 50]);
        c.fault_plan.crash = Some((point, 1));
        let r = run_demo(&c).unwrap();
        let delegated: u64 = r
            .delegations
            .iter()
            .filter(|l| matches!(l.status, Some(TxStatus::Confirmed { .. })))
            .map(|l| l.amount)
            .sum();
        assert_eq!(r.delegatee_chain_balance, delegated, "{point}");
        assert_eq!(r.owner_enclave_balance + delegated, 500, "{point}");
        assert_eq!(r.exit_code, if point.commits() { 0 } else { 1 }, "{point}: {:?}", r.delegations);
    }
}

#[test]
fn linear_fit_recovers_a_line() {
    let pts: Vec<(f64, f64)> = (0..10).map(|x| (x as f64, 3.0 * x as f64 + 7.0)).collect();
    let f = linear_fit(&pts);
    assert!((f.slope - 3.0).abs() < 1e-9 && (f.intercept - 7.0).abs() < 1e-9);
    assert!((f.r_squared - 1.0).abs() < 1e-12);
}

#[test]
fn diskgrowth_is_linear_and_file_matches_memory() {
    let sizes = [1, 5, 20];
    let mem = run_diskgrowth(3, &sizes, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let file = run_diskgrowth(3, &sizes, Some(dir.path())).unwrap();
    assert_eq!(mem.points, file.points);
    assert!(mem.fit.r_squared > 0.99);
    assert!(mem.to_csv().starts_with("n_transactions,bytes\n1,"));
}

#[test]
fn bench_reports_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_bench(5, 1, dir.path()).unwrap();
    assert_eq!(r.rows.len(), BENCH_OPERATIONS.len());
    for (row, op) in r.rows.iter().zip(BENCH_OPERATIONS) {
        assert_eq!(row.operation, op);
        assert_eq!(row.iterations, 5);
    }
    assert_eq!(r.to_tsv().lines().count(), 11);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}
