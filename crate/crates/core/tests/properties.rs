use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use delegacoin::crypto::{
    derive_address, pke_dec, pke_enc, pke_keygen, se_dec, se_enc, se_kgen, sig_keygen, sig_sign, sig_verify, Address,
    PkeCiphertext, Signature, SymCiphertext,
};
use delegacoin::enclave::{Transaction, TxMetadata};
use delegacoin::runtime::{SimConfig, Simulation};

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_round_trip(seed: u64, msg in proptest::collection::vec(any::<u8>(), 0..512)) {
        let mut r = rng(seed);
        let k = se_kgen(&mut r);
        let ct = SymCiphertext::from_bytes(&se_enc(&mut r, &k, &msg).to_bytes()).unwrap();
        prop_assert_eq!(se_dec(&k, &ct).unwrap(), msg);
    }

    #[test]
    fn symmetric_rejects_any_bit_flip(seed: u64, msg in proptest::collection::vec(any::<u8>(), 1..64), bit: usize) {
        let mut r = rng(seed);
        let k = se_kgen(&mut r);
        let mut bytes = se_enc(&mut r, &k, &msg).to_bytes();
        let bit = bit % (bytes.len() * 8);
        bytes[bit / 8] ^= 1 << (bit % 8);
        if let Ok(ct) = SymCiphertext::from_bytes(&bytes) {
            prop_assert!(se_dec(&k, &ct).is_err());
        }
    }

    #[test]
    fn pke_round_trip(seed: u64, msg in proptest::collection::vec(any::<u8>(), 0..256)) {
        let mut r = rng(seed);
        let kp = pke_keygen(&mut r);
        let ct = PkeCiphertext::from_bytes(&pke_enc(&mut r, &kp.pk, &msg).to_bytes()).unwrap();
        prop_assert_eq!(pke_dec(&kp.sk, &ct).unwrap(), msg);
    }

    #[test]
    fn signatures_bind_key_and_message(seed: u64, msg in proptest::collection::vec(any::<u8>(), 0..128), other: u8) {
        let mut r = rng(seed);
        let kp = sig_keygen(&mut r);
        let sig = sig_sign(&kp.sk, &msg);
        prop_assert!(sig_verify(&kp.vk, &Signature::from_slice(sig.as_bytes()).unwrap(), &msg));
        let mut altered = msg.clone();
        altered.push(other);
        prop_assert!(!sig_verify(&kp.vk, &sig, &altered));
        prop_assert!(!sig_verify(&sig_keygen(&mut r).vk, &sig, &msg));
    }

    #[test]
    fn address_round_trips_through_text_and_bytes(seed: u64) {
        let addr = derive_address(&sig_keygen(&mut rng(seed)).vk);
        prop_assert_eq!(addr.to_string().parse::<Address>().unwrap(), addr);
        prop_assert_eq!(Address::from_bytes(&addr.to_bytes()).unwrap(), addr);
    }

    #[test]
    fn transaction_wire_round_trip(seed: u64, amount: u64, nonce: [u8; 8]) {
        let mut r = rng(seed);
        let kp = sig_keygen(&mut r);
        let recipient = derive_address(&sig_keygen(&mut r).vk);
        let tx = Transaction::sign(&kp.sk, derive_address(&kp.vk), TxMetadata { recipient, amount, nonce });
        let back = Transaction::from_bytes(&tx.to_bytes()).unwrap();
        prop_assert_eq!(back, tx);
        prop_assert!(back.verify_signature());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Enclave balance and chain state track a plain ledger for any schedule,
    /// and no transaction confirms twice.
    #[test]
    fn delegation_matches_a_plain_ledger(
        seed: u64,
        deposit in 1u64..2000,
        schedule in proptest::collection::vec(1u64..800, 1..8),
    ) {
        let mut sim = Simulation::new(SimConfig { seed, ..SimConfig::default() }).unwrap();
        sim.run_setup().unwrap();
        sim.run_deposit(deposit).unwrap();
        let mut balance = deposit;
        let mut delegated = 0;
        for amount in schedule {
            let r = sim.run_delegation(amount);
            if amount <= balance {
                let out = r.unwrap();
                prop_assert_eq!(out.chain_calls, 0);
                sim.run_spend(out.seq).unwrap();
                prop_assert!(sim.chain().submit(out.tx).is_err());
                balance -= amount;
                delegated += amount;
            } else {
                prop_assert!(r.is_err());
            }
            prop_assert_eq!(sim.owner.balance().unwrap(), balance);
        }
        sim.confirm().unwrap();
        let addr = sim.owner.addr().unwrap();
        prop_assert_eq!(sim.chain().balance_of(&addr), balance);
        prop_assert_eq!(sim.chain().balance_of(&sim.delegatee.payout()), delegated);
        prop_assert!(sim.chain().with(|c| c.conservation_holds()));
    }
}
