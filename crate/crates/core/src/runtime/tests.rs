use super::*;
use crate::chain::TxStatus;

fn ready(seed: u64, deposit: u64) -> Simulation {
    let mut sim = Simulation::new(SimConfig {
        seed,
        ..SimConfig::default()
    })
    .unwrap();
    sim.run_setup().unwrap();
    sim.run_deposit(deposit).unwrap();
    sim
}

#[test]
fn honest_run_confirms_and_keeps_balances_in_step() {
    let mut sim = ready(1, 1000);
    let addr = sim.owner.addr().unwrap();
    assert_eq!(sim.chain().balance_of(&addr), 1000);
    assert_eq!(sim.owner.balance().unwrap(), 1000);

    let out = sim.run_delegation(300).unwrap();
    assert_eq!(out.chain_calls, 0);
    assert_eq!(out.tx.amount(), 300);
    assert_eq!(sim.owner.balance().unwrap(), 700);

    let id = sim.run_spend(out.seq).unwrap();
    sim.confirm().unwrap();
    assert!(matches!(sim.chain().tx_status(&id), TxStatus::Confirmed { .. }));
    assert_eq!(sim.chain().balance_of(&addr), 700);
    assert_eq!(sim.chain().balance_of(&sim.delegatee.payout()), 300);

    let summary = check_flow(&sim.transcript.envelopes().unwrap()).unwrap();
    assert_eq!(summary.delegations, 1);
    assert_eq!(summary.spends, 1);
    assert_eq!(summary.session, sim.delegatee.sid());
}

#[test]
fn overdraft_is_refused_before_anything_is_sent() {
    let mut sim = ready(2, 100);
    let n = sim.transcript.lines().len();
    let err = sim.run_delegation(101).unwrap_err();
    assert!(matches!(
        err.enclave_error(),
        Some(EnclaveError::InsufficientBalance { balance: 100, requested: 101 })
    ));
    assert_eq!(sim.transcript.lines().len(), n);
    assert_eq!(sim.owner.balance().unwrap(), 100);
}

#[test]
fn delegation_before_setup_fails() {
    let mut sim = Simulation::new(SimConfig::default()).unwrap();
    assert!(matches!(sim.run_delegation(1), Err(RuntimeError::NoAddress)));
    assert!(matches!(sim.run_deposit(1), Err(RuntimeError::NoSession)));
}

#[test]
fn crash_point_names_round_trip() {
    for p in CrashPoint::ALL {
        assert_eq!(p.name().parse::<CrashPoint>().unwrap(), p);
        assert_eq!(String::from(p), p.name());
    }
    assert!("nowhere".parse::<CrashPoint>().is_err());
}

#[test]
fn every_crash_point_recovers_to_a_consistent_state() {
    for point in CrashPoint::ALL {
        let mut sim = ready(3, 500);
        sim.run_delegation(100).unwrap();
        sim.owner.arm(point);
        let err = sim.run_delegation(50).unwrap_err();
        assert!(err.is_crash(), "{point}: {err}");
        assert!(!sim.owner.is_up());

        let rec = sim.recover_owner().unwrap();
        let expected = if point.commits() { 350 } else { 400 };
        assert_eq!(rec.balance, expected, "{point}");
        assert_eq!(sim.delegatee.received_total() + rec.balance, 500, "{point}");
        if point.commits() {
            assert!(rec.resent.contains(&2), "{point}");
        }

        // the recovered owner keeps delegating from the right balance
        let next = sim.run_delegation(expected).unwrap();
        assert_eq!(sim.owner.balance().unwrap(), 0);
        for seq in sim.delegatee.received().keys().copied().collect::<Vec<_>>() {
            sim.run_spend(seq).unwrap();
        }
        sim.confirm().unwrap();
        assert_eq!(sim.chain().balance_of(&sim.delegatee.payout()), 500, "{point}");
        assert!(next.seq > 1);
        assert!(sim.chain().with(|c| c.conservation_holds()));
    }
}

#[test]
fn recovery_resend_is_byte_identical() {
    let mut sim = ready(4, 100);
    let out = sim.run_delegation(40).unwrap();
    sim.crash_owner();
    let resent_before = sim.transcript.lines().len();
    sim.recover_owner().unwrap();
    let last = &sim.transcript.lines()[resent_before..];
    let original = sim
        .transcript
        .envelopes()
        .unwrap()
        .into_iter()
        .find(|e| e.phase == Phase::Delegate)
        .unwrap();
    assert_eq!(delegate_decode(&original.body).unwrap().1, out.ct_tx);
    assert!(last.iter().any(|l| *l == format!("delegate {}", hex::encode(original.encode()))));
    assert_eq!(sim.delegatee.received().len(), 1);
}

#[test]
fn recovery_from_an_empty_store_starts_at_zero() {
    let mut sim = Simulation::new(SimConfig::default()).unwrap();
    sim.crash_owner();
    let rec = sim.recover_owner().unwrap();
    assert_eq!(rec.balance, 0);
    assert!(rec.resent.is_empty());
    assert!(sim.owner.addr().is_none());
}

#[test]
fn recovery_keeps_the_existing_address() {
    let mut sim = ready(5, 300);
    let addr = sim.owner.addr().unwrap();
    sim.crash_owner();
    sim.recover_owner().unwrap();
    assert_eq!(sim.owner.addr(), Some(addr));
    assert_eq!(sim.owner.ensure_address().unwrap(), addr);
    assert_eq!(sim.owner.balance().unwrap(), 300);
}

#[test]
fn file_store_survives_reopening() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("owner.seal");
    let mut sim = Simulation::new(SimConfig {
        seed: 6,
        store_path: Some(path.clone()),
        ..SimConfig::default()
    })
    .unwrap();
    sim.run_setup().unwrap();
    sim.run_deposit(90).unwrap();
    sim.run_delegation(30).unwrap();
    let on_disk = std::fs::metadata(&path).unwrap().len();
    assert_eq!(on_disk, sim.owner.store().len().unwrap());

    // swap in a store reopened from the file, as a restarted process would
    let reopened = SealStore::open(&path).unwrap();
    let contents = reopened.load().unwrap();
    assert_eq!(contents.latest.unwrap().seq, 2);
    assert_eq!(contents.outbox.len(), 1);
    sim.crash_owner();
    assert_eq!(sim.recover_owner().unwrap().balance, 60);
}

#[test]
fn faulty_link_still_delivers_each_message_once() {
    let mut sim = Simulation::new(SimConfig {
        seed: 7,
        link_faults: LinkFaults {
            drop: 0.3,
            duplicate: 0.3,
            reorder: 0.3,
            corrupt: 0.0,
        },
        ..SimConfig::default()
    })
    .unwrap();
    sim.run_setup().unwrap();
    sim.run_deposit(100).unwrap();
    for _ in 0..10 {
        sim.run_delegation(10).unwrap();
    }
    assert_eq!(sim.delegatee.received().len(), 10);
    assert_eq!(sim.delegatee.received_total(), 100);
    assert_eq!(sim.owner.balance().unwrap(), 0);
    let stats = sim.link.stats();
    assert!(stats.dropped > 0 && stats.duplicated > 0);
}

#[test]
fn corrupted_delegations_are_retried_not_accepted() {
    let mut sim = ready(8, 100);
    sim.link = Link::new(
        LinkFaults {
            corrupt: 0.5,
            ..LinkFaults::default()
        },
        8,
    );
    for _ in 0..10 {
        sim.run_delegation(10).unwrap();
    }
    assert!(sim.link.stats().corrupted > 0);
    for (seq, tx) in sim.delegatee.received().clone() {
        assert_eq!(tx.amount(), 10);
        sim.run_spend(seq).unwrap();
    }
    sim.confirm().unwrap();
    assert_eq!(sim.chain().balance_of(&sim.delegatee.payout()), 100);
}

#[test]
fn same_seed_same_transcript() {
    let run = |seed| {
        let mut sim = ready(seed, 50);
        let out = sim.run_delegation(20).unwrap();
        sim.run_spend(out.seq).unwrap();
        sim.transcript.render()
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
}
