//! Shared fixtures for unit tests.

use std::collections::BTreeMap;

use crate::channel::{open_channel, ChannelState, LedgerAnchor};
use crate::crypto::{KeyDirectory, KeyPair};
use crate::message::{
    Alternative, ChannelId, Deadlines, ExternalMethod, SessionTerms, TransferMode,
};
use crate::party::{PartyId, Role, Roster};
use crate::time::Ticks;
use crate::value::Value;

pub struct TestBench {
    pub alice: PartyId,
    pub ingrid: PartyId,
    pub bank_a: PartyId,
    pub bank_i: PartyId,
    pub regulator: PartyId,
    pub roster: Roster,
    pub dir: KeyDirectory,
    pub keys: BTreeMap<PartyId, KeyPair>,
}

impl TestBench {
    pub fn new() -> Self {
        let alice = PartyId::new("alice");
        let ingrid = PartyId::new("ingrid");
        let bank_a = PartyId::new("bank_a");
        let bank_i = PartyId::new("bank_i");
        let regulator = PartyId::new("regulator");

        let mut roster = Roster::new();
        roster
            .register(alice.clone(), Role::ChannelParticipant)
            .unwrap();
        roster
            .register(ingrid.clone(), Role::ChannelParticipant)
            .unwrap();
        roster.register(bank_a.clone(), Role::Bank).unwrap();
        roster.register(bank_i.clone(), Role::Bank).unwrap();
        roster.register(regulator.clone(), Role::Regulator).unwrap();

        let mut dir = KeyDirectory::new();
        let mut keys = BTreeMap::new();
        for party in [&alice, &ingrid, &bank_a, &bank_i, &regulator] {
            let kp = KeyPair::derive(42, party);
            dir.publish(party.clone(), kp.public());
            keys.insert(party.clone(), kp);
        }

        TestBench {
            alice,
            ingrid,
            bank_a,
            bank_i,
            regulator,
            roster,
            dir,
            keys,
        }
    }

    pub fn open(&self, deposit_a: u64, deposit_i: u64) -> (ChannelState, LedgerAnchor) {
        open_channel(
            &self.roster,
            ChannelId(1),
            &self.alice,
            &self.ingrid,
            Value::channel(deposit_a),
            Value::channel(deposit_i),
            Ticks(10),
            &self.keys[&self.alice],
            &self.keys[&self.ingrid],
        )
        .unwrap()
    }

    pub fn default_terms(&self) -> SessionTerms {
        SessionTerms {
            payer: self.alice.clone(),
            payee: self.ingrid.clone(),
            payer_bank: self.bank_a.clone(),
            payee_bank: self.bank_i.clone(),
            amount: Value::channel(10),
            collateral_payer: Value::channel(2),
            collateral_payee: Value::channel(3),
            alternative: Alternative::Alt1Design1,
            receipt_unlock: false,
            method: ExternalMethod {
                mode: TransferMode::RequestToPay,
                irreversible_after: Ticks(8),
            },
            deadlines: Deadlines {
                initiation_timeout: Ticks(20),
                actual_transfer: Ticks(5),
                transfer_max: Ticks(15),
            },
            policy: Default::default(),
        }
    }
}
