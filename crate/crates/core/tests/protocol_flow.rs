//! Both protocol stages through the public API: request, endorsements,
//! commitment on chain, chain export, then challenge-response ownership.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use bychain::crypto::{derive_keypair, KeyEscrow, KeyPair};
use bychain::ledger::{
    export_chain, import_chain, AppendOutcome, ChainConfig, ChainStore, FixedSchedule, Mempool,
    Operation, Transaction, TxRejection,
};
use bychain::pol::{
    build_pol_request, combine_responses, finalize_note, prove_ownership, reveal_location,
    witness_validate, CollectedResponse, CommitmentLookup, LocalFrame, Location,
    OwnershipVerifier, PoLNote, WitnessPolicy, WitnessSigner,
};

struct Setup {
    producer: KeyPair,
    rules: FixedSchedule,
    store: ChainStore,
    pool: Mempool,
    witnesses: Vec<WitnessSigner>,
    rng: ChaCha20Rng,
}

fn setup() -> Setup {
    let producer = derive_keypair(&[9; 32], b"flow/producer", 0);
    Setup {
        rules: FixedSchedule {
            producers: vec![producer.public],
        },
        producer,
        store: ChainStore::new(ChainConfig::default()),
        pool: Mempool::new(),
        witnesses: (0..3)
            .map(|i| WitnessSigner::new(derive_keypair(&[7; 32], b"flow/witness", i)))
            .collect(),
        rng: ChaCha20Rng::seed_from_u64(99),
    }
}

impl Setup {
    fn seal_block(&mut self) -> AppendOutcome {
        let slot = self.store.tip_height() + 1;
        let ts = self.store.config().slot_timestamp(slot);
        let block = self
            .pool
            .assemble_block(&self.store, &self.producer, ts, None)
            .unwrap();
        let out = self.store.append(block, &self.rules, ts).unwrap();
        self.pool.prune(&self.store);
        out
    }
}

/// Stage one against three witnesses standing 20 m east of the prover.
fn stage_one(s: &mut Setup, escrow: &mut KeyEscrow, at: Location) -> (Transaction, PoLNote) {
    let frame = LocalFrame::new(at);
    let witness_pos = frame.to_location(20.0, 0.0).unwrap();
    let policy = WitnessPolicy::new(50.0);
    let now = s.store.config().slot_timestamp(s.store.tip_height() + 1);

    let (advert, pending) = build_pol_request(escrow, at, now, &mut s.rng).unwrap();
    witness_validate(&advert, &witness_pos, &policy, now).unwrap();
    let collected: Vec<_> = s
        .witnesses
        .iter_mut()
        .zip(0..)
        .map(|(w, i)| CollectedResponse {
            response: w.respond(&advert.request).unwrap(),
            arrival_ms: 100 * i,
        })
        .collect();
    let commitment = combine_responses(&advert.request, &collected, 1_000).unwrap();
    let one_use = escrow.current().unwrap().clone();
    let note = finalize_note(escrow, pending, &commitment).unwrap();
    let expiration = s.store.tip_height() + 10;
    let tx = Transaction::new(vec![Operation::PoLCommitment(commitment)], expiration, &one_use).unwrap();
    (tx, note)
}

#[test]
fn commitment_round_trip_and_ownership() {
    let mut s = setup();
    let mut escrow = KeyEscrow::with_pool_size([1; 32], 4);
    let here = Location::from_degrees(39.9612, 116.3580).unwrap();
    let (tx, note) = stage_one(&mut s, &mut escrow, here);

    s.pool.submit(&s.store, tx.clone()).unwrap();
    assert_eq!(s.pool.submit(&s.store, tx.clone()), Err(TxRejection::Replay));
    assert_eq!(s.seal_block(), AppendOutcome::Extended);
    assert_eq!(s.pool.submit(&s.store, tx), Err(TxRejection::Replay));

    // The exported chain re-imports under full validation.
    let now = s.store.config().slot_timestamp(s.store.tip_height());
    let bytes = export_chain(&s.store);
    let imported = import_chain(&bytes, ChainConfig::default(), &s.rules, now).unwrap();
    assert_eq!(imported.tip(), s.store.tip());

    let v = note.verification_request();
    let on_chain = imported.find_commitment(&v.index_key()).unwrap();
    assert_eq!(on_chain.witness_count(), 3);
    assert_eq!(reveal_location(&on_chain, &note.location_key).unwrap(), here);

    let mut verifier = OwnershipVerifier::default();
    let r = verifier.issue_challenge(&imported, &v, &mut s.rng).unwrap();
    let proof = prove_ownership(&note, &r).unwrap();
    assert!(verifier.verify_ownership(&imported, &v, &r, &proof));
    // A challenge answers once.
    assert!(!verifier.verify_ownership(&imported, &v, &r, &proof));
}

#[test]
fn notes_use_distinct_keys_and_proofs_do_not_transfer() {
    let mut s = setup();
    let mut escrow = KeyEscrow::with_pool_size([2; 32], 4);
    let here = Location::from_degrees(39.9612, 116.3580).unwrap();
    let (tx_a, note_a) = stage_one(&mut s, &mut escrow, here);
    let (tx_b, note_b) = stage_one(&mut s, &mut escrow, here);
    assert_ne!(note_a.public, note_b.public);
    s.pool.submit(&s.store, tx_a).unwrap();
    s.pool.submit(&s.store, tx_b).unwrap();
    s.seal_block();

    let mut verifier = OwnershipVerifier::default();
    let v = note_a.verification_request();
    let r = verifier.issue_challenge(&s.store, &v, &mut s.rng).unwrap();
    let wrong = prove_ownership(&note_b, &r).unwrap();
    assert!(!verifier.verify_ownership(&s.store, &v, &r, &wrong));
}

#[test]
fn reused_witness_counter_is_a_replay() {
    let mut s = setup();
    let mut escrow = KeyEscrow::with_pool_size([4; 32], 4);
    let here = Location::from_degrees(39.9612, 116.3580).unwrap();
    let (tx_a, _) = stage_one(&mut s, &mut escrow, here);
    s.pool.submit(&s.store, tx_a).unwrap();
    s.seal_block();
    // Witnesses restarted with their counters reset.
    for (w, i) in s.witnesses.iter_mut().zip(0..) {
        *w = WitnessSigner::new(derive_keypair(&[7; 32], b"flow/witness", i));
    }
    let (tx_b, _) = stage_one(&mut s, &mut escrow, here);
    assert_eq!(s.pool.submit(&s.store, tx_b), Err(TxRejection::Replay));
}

#[test]
fn witness_refuses_distant_claim() {
    let mut s = setup();
    let mut escrow = KeyEscrow::with_pool_size([3; 32], 2);
    let here = Location::from_degrees(39.9612, 116.3580).unwrap();
    let far = LocalFrame::new(here).to_location(500.0, 0.0).unwrap();
    let now = s.store.config().slot_timestamp(1);
    let (advert, _) = build_pol_request(&mut escrow, far, now, &mut s.rng).unwrap();
    assert!(witness_validate(&advert, &here, &WitnessPolicy::new(50.0), now).is_err());
}
