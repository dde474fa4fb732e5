//! Two-party trustless payment channel.
//!
//! Both participants hold a sequence-numbered, countersigned state.
//! Funds can sit in conditional locks whose release and timeout
//! dispositions are fixed when the lock is created, so the sum
//! `balance_a + balance_i + locked` is invariant from funding to
//! close. A ledger anchor settles disputes: within the dispute window
//! any higher-sequence countersigned state supersedes, and remaining
//! locks fall back to their timeout disposition at close.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::{KeyDirectory, KeyPair, Signature};
use crate::message::{ChannelId, MessageBody, MessageError, MessageKind, SessionId, SignedMessage};
use crate::party::{PartyId, Role, Roster};
use crate::time::{Tick, Ticks};
use crate::value::{Unit, Value, ValueError};
use crate::wire::{Decoder, Encoder, WireDecode, WireEncode, WireError};

/// Identifies a lock within a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LockId(pub u64);

impl fmt::Display for LockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lock{}", self.0)
    }
}

/// What a lock waits for. Conditions are self-contained: they are
/// evaluable against a single message plus the key directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LockCondition {
    /// A verifying message of `kind` from one of the registered
    /// `senders` (for certificate kinds, the issuer; for the
    /// four-party chain, the endorsing banks).
    CertificateFrom {
        senders: BTreeSet<PartyId>,
        kind: MessageKind,
    },
    /// A verifying message of `kind` signed by the lock owner's
    /// counterparty.
    CounterpartySigned(MessageKind),
    /// Only the timeout can resolve this lock.
    Never,
}

/// Who gets credited what when a lock resolves. Credits are in channel
/// minor units and must sum to the lock amount.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disposition {
    pub to_a: u64,
    pub to_i: u64,
}

impl Disposition {
    pub fn total(&self) -> u64 {
        self.to_a.saturating_add(self.to_i)
    }
}

/// A conditional reservation of channel value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lock {
    pub id: LockId,
    pub owner: PartyId,
    pub amount: Value,
    pub condition: LockCondition,
    pub timeout: Tick,
    /// Credits applied when the condition is met.
    pub on_release: Disposition,
    /// Credits applied when the timeout fires first.
    pub on_timeout: Disposition,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChannelError {
    #[error("invalid party: {0}")]
    InvalidParty(String),
    #[error("deposits must be positive")]
    ZeroDeposit,
    #[error("conservation violation: state sums to {got}, capacity is {want}")]
    ConservationViolation { got: u64, want: u64 },
    #[error("stale sequence number {got}, expected {want}")]
    StaleSeq { got: u64, want: u64 },
    #[error("bad signature")]
    BadSignature,
    #[error("unknown lock {0}")]
    UnknownLock(LockId),
    #[error("lock condition not met")]
    ConditionNotMet,
    #[error("lock disposition must credit exactly the lock amount")]
    BadDisposition,
    #[error("channel already closed")]
    AlreadyClosed,
    #[error("no dispute in progress")]
    NotDisputed,
    #[error("dispute window still open until {0}")]
    WindowStillOpen(Tick),
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error(transparent)]
    Message(#[from] MessageError),
}

/// One countersigned channel state.
///
/// `signatures` are the two participants' signatures over the
/// equivalent `CHANNEL_UPDATE` message (see [`ChannelState::to_update_message`]),
/// so a state and the message that produced it share one signing
/// surface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelState {
    pub channel_id: ChannelId,
    pub seq: u64,
    pub participant_a: PartyId,
    pub participant_i: PartyId,
    pub balance_a: Value,
    pub balance_i: Value,
    pub locks: Vec<Lock>,
    /// Which participant proposed this state (fixes the signer order).
    pub proposed_by: PartyId,
    pub signatures: Vec<Signature>,
}

impl ChannelState {
    pub fn is_participant(&self, party: &PartyId) -> bool {
        *party == self.participant_a || *party == self.participant_i
    }

    pub fn counterparty_of(&self, party: &PartyId) -> &PartyId {
        if *party == self.participant_a {
            &self.participant_i
        } else {
            &self.participant_a
        }
    }

    pub fn balance_of(&self, party: &PartyId) -> Value {
        if *party == self.participant_a {
            self.balance_a
        } else {
            self.balance_i
        }
    }

    pub fn locked_total(&self) -> u64 {
        self.locks.iter().map(|l| l.amount.amount()).sum()
    }

    /// Balances plus locked value; constant between funding and close.
    pub fn capacity(&self) -> Value {
        Value::channel(
            self.balance_a
                .amount()
                .saturating_add(self.balance_i.amount())
                .saturating_add(self.locked_total()),
        )
    }

    pub fn lock(&self, id: LockId) -> Option<&Lock> {
        self.locks.iter().find(|l| l.id == id)
    }

    pub fn next_lock_id(&self) -> LockId {
        LockId(self.locks.iter().map(|l| l.id.0).max().unwrap_or(0) + 1)
    }

    /// The `CHANNEL_UPDATE` message equivalent to this state, carrying
    /// this state's signatures.
    pub fn to_update_message(&self) -> SignedMessage {
        let counterparty = self.counterparty_of(&self.proposed_by).clone();
        let mut msg = SignedMessage::unsigned(
            MessageKind::ChannelUpdate,
            SessionId::NONE,
            self.channel_id,
            MessageBody::BalanceUpdate {
                proposer: self.proposed_by.clone(),
                counterparty,
                seq: self.seq,
                balance_a: self.balance_a,
                balance_i: self.balance_i,
                locks: self.locks.clone(),
            },
        )
        .expect("balance update body always matches CHANNEL_UPDATE");
        msg.signatures = self.signatures.clone();
        msg
    }

    /// True iff both participants' signatures are present and verify.
    pub fn both_signed(&self, dir: &KeyDirectory) -> bool {
        self.signatures.len() == 2 && self.to_update_message().verify(dir)
    }

    /// Signs the state in the required order (proposer first).
    pub fn co_sign(&mut self, key: &KeyPair) -> Result<(), ChannelError> {
        let mut msg = self.to_update_message();
        msg = msg.signed_by(key)?;
        self.signatures = msg.signatures;
        Ok(())
    }

    fn check_conservation(&self, capacity: Value) -> Result<(), ChannelError> {
        let got = self.capacity();
        if got != capacity {
            return Err(ChannelError::ConservationViolation {
                got: got.amount(),
                want: capacity.amount(),
            });
        }
        for lock in &self.locks {
            if lock.on_release.total() != lock.amount.amount()
                || lock.on_timeout.total() != lock.amount.amount()
            {
                return Err(ChannelError::BadDisposition);
            }
        }
        Ok(())
    }
}

/// Opens a funded channel: both-signed seq-0 state plus its anchor.
#[allow(clippy::too_many_arguments)]
pub fn open_channel(
    roster: &Roster,
    channel_id: ChannelId,
    a: &PartyId,
    i: &PartyId,
    deposit_a: Value,
    deposit_i: Value,
    dispute_window: Ticks,
    key_a: &KeyPair,
    key_i: &KeyPair,
) -> Result<(ChannelState, LedgerAnchor), ChannelError> {
    if a == i {
        return Err(ChannelError::InvalidParty(format!(
            "{a} cannot open a channel with itself"
        )));
    }
    for party in [a, i] {
        if !roster.has_role(party, Role::ChannelParticipant) {
            return Err(ChannelError::InvalidParty(format!(
                "{party} is not a channel participant"
            )));
        }
    }
    if deposit_a.is_zero() || deposit_i.is_zero() {
        return Err(ChannelError::ZeroDeposit);
    }
    if deposit_a.unit() != Unit::Channel || deposit_i.unit() != Unit::Channel {
        return Err(ChannelError::Value(ValueError::UnitMismatch(
            deposit_a.unit(),
            deposit_i.unit(),
        )));
    }

    let mut state = ChannelState {
        channel_id,
        seq: 0,
        participant_a: a.clone(),
        participant_i: i.clone(),
        balance_a: deposit_a,
        balance_i: deposit_i,
        locks: Vec::new(),
        proposed_by: a.clone(),
        signatures: Vec::new(),
    };
    state.co_sign(key_a)?;
    state.co_sign(key_i)?;

    let anchor = LedgerAnchor {
        channel_id,
        deposit_a,
        deposit_i,
        dispute_window,
        status: AnchorStatus::Open,
        best: None,
        window_ends: None,
    };
    Ok((state, anchor))
}

/// Proposes the next state. Returns the half-signed update message the
/// counterparty is expected to countersign.
pub fn propose_update(
    state: &ChannelState,
    seq: u64,
    new_balance_a: Value,
    new_balance_i: Value,
    new_locks: Vec<Lock>,
    proposer: &KeyPair,
) -> Result<SignedMessage, ChannelError> {
    if !state.is_participant(proposer.party()) {
        return Err(ChannelError::InvalidParty(proposer.party().to_string()));
    }
    if seq != state.seq + 1 {
        return Err(ChannelError::StaleSeq {
            got: seq,
            want: state.seq + 1,
        });
    }
    let proposed = ChannelState {
        channel_id: state.channel_id,
        seq,
        participant_a: state.participant_a.clone(),
        participant_i: state.participant_i.clone(),
        balance_a: new_balance_a,
        balance_i: new_balance_i,
        locks: new_locks,
        proposed_by: proposer.party().clone(),
        signatures: Vec::new(),
    };
    proposed.check_conservation(state.capacity())?;
    let msg = proposed.to_update_message().signed_by(proposer)?;
    Ok(msg)
}

/// Accepts a half-signed update: verifies the proposer's signature and
/// the state checks, countersigns, and returns the fully signed
/// message together with the new both-signed state.
pub fn accept_update(
    state: &ChannelState,
    update: &SignedMessage,
    acceptor: &KeyPair,
    dir: &KeyDirectory,
) -> Result<(SignedMessage, ChannelState), ChannelError> {
    let (proposer, seq, balance_a, balance_i, locks) = match &update.body {
        MessageBody::BalanceUpdate {
            proposer,
            counterparty,
            seq,
            balance_a,
            balance_i,
            locks,
        } if update.kind == MessageKind::ChannelUpdate => {
            if counterparty != acceptor.party() || !state.is_participant(proposer) {
                return Err(ChannelError::InvalidParty(proposer.to_string()));
            }
            (proposer.clone(), *seq, *balance_a, *balance_i, locks.clone())
        }
        _ => return Err(ChannelError::BadSignature),
    };
    if update.signatures.len() != 1 || !update.verify_prefix(dir) {
        return Err(ChannelError::BadSignature);
    }
    if seq != state.seq + 1 {
        return Err(ChannelError::StaleSeq {
            got: seq,
            want: state.seq + 1,
        });
    }
    let mut next = ChannelState {
        channel_id: state.channel_id,
        seq,
        participant_a: state.participant_a.clone(),
        participant_i: state.participant_i.clone(),
        balance_a,
        balance_i,
        locks,
        proposed_by: proposer,
        signatures: update.signatures.clone(),
    };
    next.check_conservation(state.capacity())?;
    let signed = update.clone().signed_by(acceptor)?;
    next.signatures = signed.signatures.clone();
    Ok((signed, next))
}

/// What drives a lock transition.
#[derive(Debug, Clone)]
pub enum LockTrigger<'a> {
    Message(&'a SignedMessage),
    Timeout(Tick),
}

/// Evaluates a lock condition against a message. Pure; no state
/// beyond the key directory.
pub fn condition_met(
    condition: &LockCondition,
    lock_owner: &PartyId,
    counterparty: &PartyId,
    msg: &SignedMessage,
    dir: &KeyDirectory,
) -> bool {
    let _ = lock_owner;
    match condition {
        LockCondition::CertificateFrom { senders, kind } => {
            if msg.kind != *kind || !msg.verify(dir) {
                return false;
            }
            match &msg.body {
                MessageBody::Certificate { issuer, .. } => senders.contains(issuer),
                MessageBody::RebalanceTerms(terms) => {
                    senders.contains(&terms.payer_bank) && senders.contains(&terms.payee_bank)
                }
                _ => false,
            }
        }
        LockCondition::CounterpartySigned(kind) => {
            msg.kind == *kind
                && msg.verify(dir)
                && msg.signatures.iter().any(|s| s.signer == *counterparty)
        }
        LockCondition::Never => false,
    }
}

/// Resolves one lock: a satisfying message applies the release
/// disposition, a fired timeout applies the timeout disposition. The
/// returned state is unsigned; both parties co-sign it (the transition
/// itself is authorized by the trigger).
pub fn apply_lock_transition(
    state: &ChannelState,
    lock_id: LockId,
    trigger: &LockTrigger<'_>,
    dir: &KeyDirectory,
) -> Result<ChannelState, ChannelError> {
    let lock = state
        .lock(lock_id)
        .ok_or(ChannelError::UnknownLock(lock_id))?
        .clone();
    let disposition = match trigger {
        LockTrigger::Message(msg) => {
            let counterparty = state.counterparty_of(&lock.owner);
            if !condition_met(&lock.condition, &lock.owner, counterparty, msg, dir) {
                return Err(ChannelError::ConditionNotMet);
            }
            lock.on_release
        }
        LockTrigger::Timeout(now) => {
            if *now < lock.timeout {
                return Err(ChannelError::ConditionNotMet);
            }
            lock.on_timeout
        }
    };

    let mut next = derived_successor(state);
    next.locks.retain(|l| l.id != lock_id);
    next.balance_a = next.balance_a.checked_add(&Value::channel(disposition.to_a))?;
    next.balance_i = next.balance_i.checked_add(&Value::channel(disposition.to_i))?;
    next.check_conservation(state.capacity())?;
    Ok(next)
}

/// Rewrites a lock in place (second locking stage / timer reset). The
/// trigger must satisfy `trigger_condition`, the rule the parties
/// agreed on for this transition when the lock was set up. The
/// returned state is unsigned.
#[allow(clippy::too_many_arguments)]
pub fn restage_lock(
    state: &ChannelState,
    lock_id: LockId,
    trigger: &SignedMessage,
    trigger_condition: &LockCondition,
    new_condition: LockCondition,
    new_timeout: Tick,
    new_on_timeout: Disposition,
    dir: &KeyDirectory,
) -> Result<ChannelState, ChannelError> {
    let lock = state
        .lock(lock_id)
        .ok_or(ChannelError::UnknownLock(lock_id))?
        .clone();
    let counterparty = state.counterparty_of(&lock.owner);
    if !condition_met(trigger_condition, &lock.owner, counterparty, trigger, dir) {
        return Err(ChannelError::ConditionNotMet);
    }
    if new_on_timeout.total() != lock.amount.amount() {
        return Err(ChannelError::BadDisposition);
    }
    let mut next = derived_successor(state);
    for l in &mut next.locks {
        if l.id == lock_id {
            l.condition = new_condition.clone();
            l.timeout = new_timeout;
            l.on_timeout = new_on_timeout;
        }
    }
    next.check_conservation(state.capacity())?;
    Ok(next)
}

fn derived_successor(state: &ChannelState) -> ChannelState {
    ChannelState {
        channel_id: state.channel_id,
        seq: state.seq + 1,
        participant_a: state.participant_a.clone(),
        participant_i: state.participant_i.clone(),
        balance_a: state.balance_a,
        balance_i: state.balance_i,
        locks: state.locks.clone(),
        proposed_by: state.participant_a.clone(),
        signatures: Vec::new(),
    }
}

/// Anchor status on the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStatus {
    Open,
    Disputed,
    Closed,
}

/// Final payout of a closed channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payout {
    pub to_a: Value,
    pub to_i: Value,
}

/// On-ledger anchor of the channel: deposits, dispute window, and the
/// best state seen during a dispute.
#[derive(Debug, Clone)]
pub struct LedgerAnchor {
    pub channel_id: ChannelId,
    pub deposit_a: Value,
    pub deposit_i: Value,
    pub dispute_window: Ticks,
    pub status: AnchorStatus,
    best: Option<ChannelState>,
    window_ends: Option<Tick>,
}

impl LedgerAnchor {
    pub fn best_seq(&self) -> Option<u64> {
        self.best.as_ref().map(|s| s.seq)
    }

    pub fn window_ends(&self) -> Option<Tick> {
        self.window_ends
    }

    /// Submits a state for closing. The first submission opens the
    /// dispute window; later submissions supersede only with a higher
    /// sequence number. A submission arriving exactly at window expiry
    /// is still accepted (inclusive deadline).
    pub fn submit_close(
        &mut self,
        state: ChannelState,
        now: Tick,
        dir: &KeyDirectory,
    ) -> Result<(), ChannelError> {
        if !state.both_signed(dir) {
            return Err(ChannelError::BadSignature);
        }
        match self.status {
            AnchorStatus::Closed => Err(ChannelError::AlreadyClosed),
            AnchorStatus::Open => {
                self.status = AnchorStatus::Disputed;
                self.window_ends = Some(now + self.dispute_window);
                self.best = Some(state);
                Ok(())
            }
            AnchorStatus::Disputed => {
                let ends = self.window_ends.expect("disputed anchor has a window");
                if now > ends {
                    return Err(ChannelError::AlreadyClosed);
                }
                let best_seq = self.best_seq().unwrap_or(0);
                if state.seq > best_seq {
                    self.best = Some(state);
                }
                Ok(())
            }
        }
    }

    /// Closes the channel after the window has elapsed: remaining
    /// locks fall back to their timeout disposition, then the payout
    /// equals the resulting balances.
    pub fn finalize(&mut self, now: Tick) -> Result<Payout, ChannelError> {
        match self.status {
            AnchorStatus::Closed => return Err(ChannelError::AlreadyClosed),
            AnchorStatus::Open => return Err(ChannelError::NotDisputed),
            AnchorStatus::Disputed => {}
        }
        let ends = self.window_ends.expect("disputed anchor has a window");
        if now <= ends {
            return Err(ChannelError::WindowStillOpen(ends));
        }
        let state = self.best.take().expect("disputed anchor has a state");

        let mut to_a = state.balance_a;
        let mut to_i = state.balance_i;
        for lock in &state.locks {
            to_a = to_a.checked_add(&Value::channel(lock.on_timeout.to_a))?;
            to_i = to_i.checked_add(&Value::channel(lock.on_timeout.to_i))?;
        }

        let total = to_a.checked_add(&to_i)?;
        let deposits = self.deposit_a.checked_add(&self.deposit_i)?;
        if total != deposits {
            return Err(ChannelError::ConservationViolation {
                got: total.amount(),
                want: deposits.amount(),
            });
        }
        self.status = AnchorStatus::Closed;
        Ok(Payout { to_a, to_i })
    }
}

// ---------------------------------------------------------------------------
// Wire encoding
// ---------------------------------------------------------------------------

impl WireEncode for LockCondition {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            LockCondition::CertificateFrom { senders, kind } => {
                enc.put_u8(0);
                senders.encode(enc);
                enc.put_u8(match kind {
                    MessageKind::MA1 => 1,
                    MessageKind::MA1I1 => 2,
                    MessageKind::MA1I1BA1 => 3,
                    MessageKind::MA1I1BA1BI1 => 4,
                    MessageKind::Cert1 => 5,
                    MessageKind::Cert2 => 6,
                    MessageKind::ChannelUpdate => 7,
                    MessageKind::Dispute => 8,
                    MessageKind::Verdict => 9,
                });
            }
            LockCondition::CounterpartySigned(kind) => {
                enc.put_u8(1);
                enc.put_u8(match kind {
                    MessageKind::MA1 => 1,
                    MessageKind::MA1I1 => 2,
                    MessageKind::MA1I1BA1 => 3,
                    MessageKind::MA1I1BA1BI1 => 4,
                    MessageKind::Cert1 => 5,
                    MessageKind::Cert2 => 6,
                    MessageKind::ChannelUpdate => 7,
                    MessageKind::Dispute => 8,
                    MessageKind::Verdict => 9,
                });
            }
            LockCondition::Never => enc.put_u8(2),
        }
    }
}

fn kind_from_tag(tag: u8) -> Result<MessageKind, WireError> {
    Ok(match tag {
        1 => MessageKind::MA1,
        2 => MessageKind::MA1I1,
        3 => MessageKind::MA1I1BA1,
        4 => MessageKind::MA1I1BA1BI1,
        5 => MessageKind::Cert1,
        6 => MessageKind::Cert2,
        7 => MessageKind::ChannelUpdate,
        8 => MessageKind::Dispute,
        9 => MessageKind::Verdict,
        tag => return Err(WireError::InvalidTag { what: "kind", tag }),
    })
}

impl WireDecode for LockCondition {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(match dec.take_u8()? {
            0 => LockCondition::CertificateFrom {
                senders: BTreeSet::decode(dec)?,
                kind: kind_from_tag(dec.take_u8()?)?,
            },
            1 => LockCondition::CounterpartySigned(kind_from_tag(dec.take_u8()?)?),
            2 => LockCondition::Never,
            tag => {
                return Err(WireError::InvalidTag {
                    what: "condition",
                    tag,
                })
            }
        })
    }
}

impl WireEncode for Disposition {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u64(self.to_a);
        enc.put_u64(self.to_i);
    }
}

impl WireDecode for Disposition {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(Disposition {
            to_a: dec.take_u64()?,
            to_i: dec.take_u64()?,
        })
    }
}

impl WireEncode for Lock {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u64(self.id.0);
        self.owner.encode(enc);
        self.amount.encode(enc);
        self.condition.encode(enc);
        self.timeout.encode(enc);
        self.on_release.encode(enc);
        self.on_timeout.encode(enc);
    }
}

impl WireDecode for Lock {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(Lock {
            id: LockId(dec.take_u64()?),
            owner: PartyId::decode(dec)?,
            amount: Value::decode(dec)?,
            condition: LockCondition::decode(dec)?,
            timeout: Tick::decode(dec)?,
            on_release: Disposition::decode(dec)?,
            on_timeout: Disposition::decode(dec)?,
        })
    }
}
