//! Deterministic discrete-event engine.
//!
//! A run is a pure function of its [`ScenarioConfig`]: events are
//! processed in `(tick, insertion-sequence)` order, honest actors
//! follow the protocol, adversarial actors follow their configured
//! strategy, banks follow their configured behavior, and every
//! processed event appends one trace record. Repeating a run yields a
//! byte-identical trace.
//!
//! [`enumerate_faults`] replays a base scenario across a finite grid
//! of adversary dimensions and reports every invariant or safety
//! violation (the expectation being none).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::channel::{open_channel, ChannelState, LedgerAnchor};
use crate::crypto::{ContentHash, KeyDirectory, KeyPair};
use crate::extrail::{
    adjudicate, credit_suspense, execute_remedy, process_order, receive_delivery,
    relay_alternative2, BankBehavior, BankLedger, OrderId, RailEvent, TransferOrder,
};
use crate::message::{
    Alternative, ChannelId, CollateralRoute, Deadlines, ExternalMethod, MessageBody, MessageKind,
    SessionId, SessionTerms, SignedMessage, TransferMode,
};
use crate::party::{PartyId, Role, Roster};
use crate::rebalance::{
    accept, accept_certificate, initiate_with, observe_relay, on_timeout, raise_dispute,
    register_sources, Phase, RebalanceSession,
};
use crate::scenario::{ParticipantPreset, ScenarioConfig, ScenarioError};
use crate::time::{Tick, Ticks};
use crate::trace::{
    audit, BankSnap, ChannelSnap, LockSnap, Snapshot, Trace, TraceRecord, Violation,
};
use crate::value::Value;

pub const MAX_GRID_CELLS: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    InvalidScenario(#[from] ScenarioError),
    #[error("grid of {size} cells exceeds the {max}-cell limit")]
    GridTooLarge { size: usize, max: usize },
}

/// Per-actor adversary policy, assembled from a finite preset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdversaryStrategy {
    /// Outbound message kinds this actor never sends.
    pub drop: BTreeSet<MessageKind>,
    /// Outbound message kinds this actor sends late.
    pub delay: BTreeMap<MessageKind, Ticks>,
    /// Outbound message kinds this actor corrupts before sending.
    pub forge: BTreeSet<MessageKind>,
    /// Submit a stale state to the ledger anchor after the session.
    pub stale_close: bool,
}

impl AdversaryStrategy {
    pub fn is_honest(&self) -> bool {
        *self == AdversaryStrategy::default()
    }
}

impl From<ParticipantPreset> for AdversaryStrategy {
    fn from(preset: ParticipantPreset) -> Self {
        let mut strategy = AdversaryStrategy::default();
        match preset {
            ParticipantPreset::Honest => {}
            // The payee's accept and the payer's bank submission are
            // both M_A1I1 sends; the strategy is per-actor, so the
            // kind alone identifies the step.
            ParticipantPreset::DropAccept | ParticipantPreset::DropSubmit => {
                strategy.drop.insert(MessageKind::MA1I1);
            }
            ParticipantPreset::ForgeSubmit => {
                strategy.forge.insert(MessageKind::MA1I1);
            }
            ParticipantPreset::DelaySubmit => {
                strategy.delay.insert(MessageKind::MA1I1, Ticks(3));
            }
            ParticipantPreset::StaleClose => {
                strategy.stale_close = true;
            }
        }
        strategy
    }
}

/// What an event does when it fires.
#[derive(Debug, Clone)]
pub enum EventPayload {
    /// Scripted: propose the pre-rebalance interaction update.
    ProposeInteraction,
    /// Scripted: propose source registration for the session.
    ProposeRegistration,
    /// Scripted: the payer initiates the re-balancing session.
    Initiate,
    /// A message arrives at `actor`.
    Deliver {
        from: PartyId,
        message: Box<SignedMessage>,
    },
    /// A session deadline fires (ignored if `generation` is stale).
    SessionTimer { generation: u64 },
    /// Interbank delivery arrives at the payee bank.
    RailDelivery { order: OrderId },
    /// The payee bank credits a suspended delivery.
    RailCredit { order: OrderId },
    /// End of run: eligible parties hand their claims to the regulator.
    RaiseDisputes,
    /// A claimant's case is adjudicated and remedies executed.
    Adjudicate { claimant: PartyId },
    /// An adversary submits a stale state for closing.
    StaleClose { by: PartyId },
    /// The honest counterparty counters with the latest state.
    CounterClose { by: PartyId },
    /// The dispute window elapsed; the anchor pays out.
    FinalizeAnchor,
}

/// One scheduled simulator event.
#[derive(Debug, Clone)]
pub struct ScenarioEvent {
    pub at: Tick,
    pub seq: u64,
    pub actor: PartyId,
    pub payload: EventPayload,
}

/// Deterministic event queue ordered by `(tick, insertion sequence)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    events: BTreeMap<(Tick, u64), ScenarioEvent>,
    next_seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, at: Tick, actor: PartyId, payload: EventPayload) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.events.insert(
            (at, seq),
            ScenarioEvent {
                at,
                seq,
                actor,
                payload,
            },
        );
    }

    pub fn pop(&mut self) -> Option<ScenarioEvent> {
        let key = *self.events.keys().next()?;
        self.events.remove(&key)
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemedyReport {
    pub debtor_bank: String,
    pub creditor: String,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub claimant: String,
    pub culprit: Option<String>,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remedy: Option<RemedyReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub participant_a: String,
    pub participant_i: String,
    pub balance_a: u64,
    pub balance_i: u64,
    pub seq: u64,
    pub anchor: String,
}

/// End-of-run summary: balances, outcome, verdicts, violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub outcome: Option<String>,
    pub channel: ChannelReport,
    /// Fiat account balances per customer, across both banks.
    pub fiat: BTreeMap<String, u64>,
    /// Equivalence totals (channel value at the contract rate plus
    /// fiat) for the two channel participants.
    pub totals: BTreeMap<String, u64>,
    pub verdicts: Vec<VerdictReport>,
    pub violations: Vec<Violation>,
}

/// A finished run: the trace and its report.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub report: FinalReport,
}

// ---------------------------------------------------------------------------
// World
// ---------------------------------------------------------------------------

struct World {
    config: ScenarioConfig,
    roster: Roster,
    dir: KeyDirectory,
    keys: BTreeMap<PartyId, KeyPair>,
    payer: PartyId,
    payee: PartyId,
    bank_a_id: PartyId,
    bank_i_id: PartyId,
    regulator: PartyId,
    terms: Option<SessionTerms>,

    channel: ChannelState,
    anchor: LedgerAnchor,
    /// Every both-signed state, for dispute scenarios.
    history: Vec<ChannelState>,
    session: Option<RebalanceSession>,
    pending_proposal: Option<SignedMessage>,
    registration_done: bool,

    bank_a: BankLedger,
    bank_i: BankLedger,
    orders: BTreeMap<OrderId, TransferOrder>,
    in_flight: BTreeMap<OrderId, u64>,
    next_order: u64,

    queue: EventQueue,
    now: Tick,
    strategies: BTreeMap<PartyId, AdversaryStrategy>,
    applied: BTreeSet<[u8; 32]>,

    records: Vec<TraceRecord>,
    verdicts: Vec<VerdictReport>,
    /// Equivalence totals at session initiation (the safety baseline).
    start_totals: BTreeMap<PartyId, u64>,
    channel_baseline: BTreeMap<PartyId, u64>,
    payout_done: bool,
}

/// Draft of the trace record an event handler produces.
struct RecordDraft {
    event: &'static str,
    msg_kind: Option<String>,
    verified: Option<bool>,
    payload_hash: ContentHash,
}

impl RecordDraft {
    fn plain(event: &'static str) -> Self {
        RecordDraft {
            event,
            msg_kind: None,
            verified: None,
            payload_hash: ContentHash::of(event.as_bytes()),
        }
    }

    fn message(event: &'static str, msg: &SignedMessage, verified: bool) -> Self {
        RecordDraft {
            event,
            msg_kind: Some(msg.kind.name().to_string()),
            verified: Some(verified),
            payload_hash: msg.content_hash(),
        }
    }
}

impl World {
    fn new(config: &ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let payer = PartyId::new(config.parties.payer.clone());
        let payee = PartyId::new(config.parties.payee.clone());
        let bank_a_id = PartyId::new(config.parties.payer_bank.clone());
        let bank_i_id = PartyId::new(config.parties.payee_bank.clone());
        let regulator = PartyId::new(config.parties.regulator.clone());

        let mut roster = Roster::new();
        for (party, role) in [
            (&payer, Role::ChannelParticipant),
            (&payee, Role::ChannelParticipant),
            (&bank_a_id, Role::Bank),
            (&bank_i_id, Role::Bank),
            (&regulator, Role::Regulator),
        ] {
            roster
                .register(party.clone(), role)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }

        let mut dir = KeyDirectory::new();
        let mut keys = BTreeMap::new();
        for party in [&payer, &payee, &bank_a_id, &bank_i_id, &regulator] {
            let kp = KeyPair::derive(config.seed, party);
            dir.publish(party.clone(), kp.public());
            keys.insert(party.clone(), kp);
        }

        let (channel, anchor) = open_channel(
            &roster,
            ChannelId(1),
            &payer,
            &payee,
            Value::channel(config.channel.deposit_payer),
            Value::channel(config.channel.deposit_payee),
            Ticks(config.channel.dispute_window),
            &keys[&payer],
            &keys[&payee],
        )
        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let mut bank_a = BankLedger::new(
            bank_a_id.clone(),
            config.banks.payer_bank.behavior,
            config.banks.payer_bank.equity,
        );
        for (customer, initial) in &config.banks.payer_bank.accounts {
            bank_a.open_account(PartyId::new(customer.clone()), *initial);
        }
        let mut bank_i = BankLedger::new(
            bank_i_id.clone(),
            config.banks.payee_bank.behavior,
            config.banks.payee_bank.equity,
        );
        for (customer, initial) in &config.banks.payee_bank.accounts {
            bank_i.open_account(PartyId::new(customer.clone()), *initial);
        }

        let terms = config.session.as_ref().map(|session| SessionTerms {
            payer: payer.clone(),
            payee: payee.clone(),
            payer_bank: bank_a_id.clone(),
            payee_bank: bank_i_id.clone(),
            amount: Value::channel(session.amount),
            collateral_payer: Value::channel(session.collateral_payer),
            collateral_payee: Value::channel(session.collateral_payee),
            alternative: session.alternative,
            receipt_unlock: session.receipt_unlock,
            method: ExternalMethod {
                mode: TransferMode::RequestToPay,
                irreversible_after: Ticks(8),
            },
            deadlines: Deadlines {
                initiation_timeout: Ticks(session.initiation_timeout),
                actual_transfer: Ticks(session.actual_transfer),
                transfer_max: Ticks(session.transfer_max),
            },
            policy: crate::message::DispositionPolicy {
                payer_collateral_on_revert: session.payer_collateral_on_revert,
                payee_collateral_on_compensation: session.payee_collateral_on_compensation,
            },
        });

        let mut strategies = BTreeMap::new();
        strategies.insert(payer.clone(), AdversaryStrategy::from(config.adversary.payer));
        strategies.insert(payee.clone(), AdversaryStrategy::from(config.adversary.payee));

        let history = vec![channel.clone()];
        let mut world = World {
            config: config.clone(),
            roster,
            dir,
            keys,
            payer,
            payee,
            bank_a_id,
            bank_i_id,
            regulator,
            terms,
            channel,
            anchor,
            history,
            session: None,
            pending_proposal: None,
            registration_done: false,
            bank_a,
            bank_i,
            orders: BTreeMap::new(),
            in_flight: BTreeMap::new(),
            next_order: 1,
            queue: EventQueue::default(),
            now: Tick::ZERO,
            strategies,
            applied: BTreeSet::new(),
            records: Vec::new(),
            verdicts: Vec::new(),
            start_totals: BTreeMap::new(),
            channel_baseline: BTreeMap::new(),
            payout_done: false,
        };
        world.reset_baselines();
        Ok(world)
    }

    fn reset_baselines(&mut self) {
        for party in [self.payer.clone(), self.payee.clone()] {
            let total = self.equivalence_total(&party);
            self.start_totals.insert(party.clone(), total);
            self.channel_baseline
                .insert(party.clone(), self.channel.balance_of(&party).amount());
        }
    }

    fn equivalence_total(&self, party: &PartyId) -> u64 {
        let channel_part = self.channel.balance_of(party).amount() * self.config.equivalence;
        let fiat_part = [&self.bank_a, &self.bank_i]
            .iter()
            .filter_map(|b| b.account_balance(party))
            .map(|v| v.amount())
            .sum::<u64>();
        channel_part + fiat_part
    }

    fn strategy(&self, party: &PartyId) -> AdversaryStrategy {
        self.strategies.get(party).cloned().unwrap_or_default()
    }

    /// Sends a message, applying the sender's adversary strategy.
    /// Returns false if the message was dropped.
    fn send(&mut self, from: &PartyId, to: &PartyId, message: SignedMessage) -> bool {
        let strategy = self.strategy(from);
        if strategy.drop.contains(&message.kind) {
            return false;
        }
        let mut message = message;
        if strategy.forge.contains(&message.kind) {
            if let Some(sig) = message.signatures.last_mut() {
                sig.bytes[0] ^= 0x01;
            }
        }
        let delay = strategy
            .delay
            .get(&message.kind)
            .copied()
            .unwrap_or(Ticks(0));
        let at = self.now + Ticks(1) + delay;
        self.queue.push(
            at,
            to.clone(),
            EventPayload::Deliver {
                from: from.clone(),
                message: Box::new(message),
            },
        );
        true
    }

    /// Delivers a rail event produced by a bank.
    fn dispatch_rail(&mut self, bank: PartyId, events: Vec<RailEvent>) {
        for event in events {
            match event {
                RailEvent::Cert { message, at } => {
                    for to in [self.payer.clone(), self.payee.clone()] {
                        self.queue.push(
                            at + Ticks(1),
                            to,
                            EventPayload::Deliver {
                                from: bank.clone(),
                                message: Box::new(message.clone()),
                            },
                        );
                    }
                }
                RailEvent::Relay { message, at } => {
                    // The chain goes to the other bank and to both
                    // participants (it resets the reversion timer).
                    let mut recipients = vec![self.payer.clone(), self.payee.clone()];
                    if message.kind == MessageKind::MA1I1BA1 {
                        recipients.push(self.bank_i_id.clone());
                    }
                    for to in recipients {
                        self.queue.push(
                            at + Ticks(1),
                            to,
                            EventPayload::Deliver {
                                from: bank.clone(),
                                message: Box::new(message.clone()),
                            },
                        );
                    }
                }
                RailEvent::Delivery { order, at } => {
                    if let Some(o) = self.orders.get(&order) {
                        self.in_flight.insert(order, o.amount.amount());
                    }
                    self.queue.push(
                        at,
                        self.bank_i_id.clone(),
                        EventPayload::RailDelivery { order },
                    );
                }
                RailEvent::Credit { order, at } => {
                    self.queue
                        .push(at, self.bank_i_id.clone(), EventPayload::RailCredit { order });
                }
            }
        }
    }

    fn co_sign_state(&self, state: &mut ChannelState) {
        let first = state.proposed_by.clone();
        let second = state.counterparty_of(&first).clone();
        state
            .co_sign(&self.keys[&first])
            .expect("proposer signs first");
        state
            .co_sign(&self.keys[&second])
            .expect("counterparty countersigns");
    }

    fn adopt_state(&mut self, mut state: ChannelState) {
        if state.signatures.len() < 2 {
            self.co_sign_state(&mut state);
        }
        self.channel = state.clone();
        self.history.push(state);
    }

    fn sync_timer(&mut self) {
        if let Some(session) = &self.session {
            if let Some(deadline) = session.deadline {
                self.queue.push(
                    deadline,
                    self.payee.clone(),
                    EventPayload::SessionTimer {
                        generation: session.timer_generation,
                    },
                );
            }
        }
    }

    /// The payee accepts once she holds the proposal and registration
    /// is done.
    fn try_accept(&mut self) {
        if !self.registration_done {
            return;
        }
        let Some(m_a1) = self.pending_proposal.clone() else {
            return;
        };
        let Some(mut session) = self.session.take() else {
            return;
        };
        if session.phase != Phase::Proposed {
            self.session = Some(session);
            return;
        }
        if self.strategy(&self.payee).drop.contains(&MessageKind::MA1I1) {
            // Never agrees; the proposal lapses by timeout.
            self.session = Some(session);
            return;
        }
        let result = accept(
            &mut session,
            &self.channel,
            &m_a1,
            self.now,
            &self.keys[&self.payee],
            &self.dir,
        );
        match result {
            Ok((locked, m_a1i1)) => {
                self.pending_proposal = None;
                self.session = Some(session);
                self.adopt_state(locked);
                self.sync_timer();
                let payer = self.payer.clone();
                let payee = self.payee.clone();
                self.send(&payee, &payer, m_a1i1);
            }
            Err(_) => {
                self.session = Some(session);
            }
        }
    }

    fn snapshot(&self) -> Snapshot {
        let locks = self
            .channel
            .locks
            .iter()
            .map(|l| LockSnap {
                id: l.id.0,
                owner: l.owner.to_string(),
                amount: l.amount.amount(),
                timeout: l.timeout.0,
            })
            .collect();
        let banks = [&self.bank_a, &self.bank_i]
            .iter()
            .map(|b| BankSnap {
                bank: b.bank.to_string(),
                accounts: b
                    .accounts()
                    .iter()
                    .map(|(k, v)| (k.to_string(), *v))
                    .collect(),
                suspense: b.suspense_total(),
                equity: b.equity(),
            })
            .collect();
        Snapshot {
            channel: ChannelSnap {
                seq: self.channel.seq,
                balance_a: self.channel.balance_a.amount(),
                balance_i: self.channel.balance_i.amount(),
                locks,
            },
            banks,
            in_flight: self.in_flight.values().sum(),
            session: self
                .session
                .as_ref()
                .map(|s| s.phase.name().to_string()),
            anchor: match self.anchor.status {
                crate::channel::AnchorStatus::Open => "open".to_string(),
                crate::channel::AnchorStatus::Disputed => "disputed".to_string(),
                crate::channel::AnchorStatus::Closed => "closed".to_string(),
            },
        }
    }

    fn record(&mut self, actor: &PartyId, seq: u64, draft: RecordDraft) {
        let snapshot = self.snapshot();
        let digest = snapshot.digest();
        self.records.push(TraceRecord {
            tick: self.now.0,
            seq,
            actor: actor.to_string(),
            event: draft.event.to_string(),
            msg_kind: draft.msg_kind,
            verified: draft.verified,
            payload_hash: draft.payload_hash.to_hex(),
            snapshot,
            digest,
        });
    }

    // -- event handlers ----------------------------------------------------

    fn handle(&mut self, event: &ScenarioEvent) -> RecordDraft {
        match &event.payload {
            EventPayload::ProposeInteraction => self.on_propose_interaction(),
            EventPayload::ProposeRegistration => self.on_propose_registration(),
            EventPayload::Initiate => self.on_initiate(),
            EventPayload::Deliver { from, message } => {
                self.on_deliver(&event.actor, from, &message.clone())
            }
            EventPayload::SessionTimer { generation } => self.on_timer(*generation),
            EventPayload::RailDelivery { order } => self.on_rail_delivery(*order),
            EventPayload::RailCredit { order } => self.on_rail_credit(*order),
            EventPayload::RaiseDisputes => self.on_raise_disputes(),
            EventPayload::Adjudicate { claimant } => self.on_adjudicate(&claimant.clone()),
            EventPayload::StaleClose { by } => self.on_stale_close(&by.clone()),
            EventPayload::CounterClose { by } => self.on_counter_close(&by.clone()),
            EventPayload::FinalizeAnchor => self.on_finalize_anchor(),
        }
    }

    fn on_propose_interaction(&mut self) -> RecordDraft {
        let Some(interaction) = self.config.interaction.clone() else {
            return RecordDraft::plain("note");
        };
        let payer = self.payer.clone();
        let payee = self.payee.clone();
        let (balance_a, balance_i) = if self.channel.participant_a == payer {
            (interaction.payer_balance, interaction.payee_balance)
        } else {
            (interaction.payee_balance, interaction.payer_balance)
        };
        match crate::channel::propose_update(
            &self.channel,
            self.channel.seq + 1,
            Value::channel(balance_a),
            Value::channel(balance_i),
            vec![],
            &self.keys[&payer],
        ) {
            Ok(msg) => {
                let draft = RecordDraft::message("propose", &msg, msg.verify_prefix(&self.dir));
                self.send(&payer, &payee, msg);
                draft
            }
            Err(_) => RecordDraft::plain("note"),
        }
    }

    fn on_propose_registration(&mut self) -> RecordDraft {
        let payer = self.payer.clone();
        let payee = self.payee.clone();
        let sources: BTreeSet<PartyId> = self
            .config
            .registered_sources()
            .into_iter()
            .map(PartyId::new)
            .collect();
        let msg = SignedMessage::unsigned(
            MessageKind::ChannelUpdate,
            self.session.as_ref().map(|s| s.id).unwrap_or(SessionId(1)),
            self.channel.channel_id,
            MessageBody::SourceRegistration {
                proposer: payer.clone(),
                counterparty: payee.clone(),
                sources,
            },
        )
        .expect("registration body matches CHANNEL_UPDATE")
        .signed_by(&self.keys[&payer])
        .expect("payer proposes registration");
        let draft = RecordDraft::message("propose", &msg, msg.verify_prefix(&self.dir));
        self.send(&payer, &payee, msg);
        draft
    }

    fn on_initiate(&mut self) -> RecordDraft {
        let payer = self.payer.clone();
        let payee = self.payee.clone();
        if self.session.is_some() {
            // One active session per channel.
            return RecordDraft::plain("note");
        }
        let Some(terms) = self.terms.clone() else {
            return RecordDraft::plain("note");
        };
        match initiate_with(
            &self.channel,
            SessionId(1),
            terms,
            self.now,
            &self.keys[&payer],
            self.config.mutations,
        ) {
            Ok((session, m_a1)) => {
                self.session = Some(session);
                self.reset_baselines();
                self.sync_timer();
                let draft = RecordDraft::message("propose", &m_a1, m_a1.verify(&self.dir));
                self.send(&payer, &payee, m_a1);
                draft
            }
            Err(_) => RecordDraft::plain("note"),
        }
    }

    fn on_deliver(
        &mut self,
        to: &PartyId,
        from: &PartyId,
        message: &SignedMessage,
    ) -> RecordDraft {
        match self.roster.role_of(to) {
            Some(Role::ChannelParticipant) => self.participant_receive(to, message),
            Some(Role::Bank) => self.bank_receive(to, from, message),
            _ => RecordDraft::message("deliver", message, false),
        }
    }

    fn participant_receive(&mut self, to: &PartyId, message: &SignedMessage) -> RecordDraft {
        match message.kind {
            MessageKind::ChannelUpdate => self.participant_channel_update(to, message),
            MessageKind::MA1 => {
                let verified = message.verify(&self.dir);
                if verified && *to == self.payee {
                    self.pending_proposal = Some(message.clone());
                    self.try_accept();
                }
                RecordDraft::message("deliver", message, verified)
            }
            MessageKind::MA1I1 => {
                let verified = message.verify(&self.dir);
                if verified && *to == self.payer {
                    self.payer_submit(message);
                }
                RecordDraft::message("deliver", message, verified)
            }
            MessageKind::MA1I1BA1 => {
                let verified = message.verify(&self.dir);
                if verified {
                    self.apply_relay(message);
                }
                RecordDraft::message("deliver", message, verified)
            }
            MessageKind::Cert1 | MessageKind::Cert2 | MessageKind::MA1I1BA1BI1 => {
                let verified = message.verify(&self.dir);
                if verified {
                    self.apply_settling(message);
                }
                RecordDraft::message("deliver", message, verified)
            }
            _ => RecordDraft::message("deliver", message, message.verify(&self.dir)),
        }
    }

    fn participant_channel_update(
        &mut self,
        to: &PartyId,
        message: &SignedMessage,
    ) -> RecordDraft {
        match &message.body {
            MessageBody::BalanceUpdate { .. } => {
                if message.signatures.len() == 1 {
                    match crate::channel::accept_update(
                        &self.channel,
                        message,
                        &self.keys[to],
                        &self.dir,
                    ) {
                        Ok((signed, next)) => {
                            let proposer = next.proposed_by.clone();
                            self.channel = next.clone();
                            self.history.push(next);
                            let to_cloned = to.clone();
                            self.send(&to_cloned, &proposer, signed.clone());
                            RecordDraft::message("deliver", &signed, true)
                        }
                        Err(_) => RecordDraft::message("deliver", message, false),
                    }
                } else {
                    RecordDraft::message("deliver", message, message.verify(&self.dir))
                }
            }
            MessageBody::SourceRegistration { proposer, .. } => {
                if message.signatures.len() == 1 && to != proposer {
                    match message.clone().signed_by(&self.keys[to]) {
                        Ok(signed) => {
                            let mut applied = false;
                            if let Some(session) = &mut self.session {
                                applied = register_sources(
                                    session,
                                    &signed,
                                    &self.roster,
                                    &self.dir,
                                )
                                .is_ok();
                            }
                            if applied {
                                self.registration_done = true;
                            }
                            let proposer = proposer.clone();
                            let to_cloned = to.clone();
                            self.send(&to_cloned, &proposer, signed.clone());
                            self.try_accept();
                            RecordDraft::message("deliver", &signed, applied)
                        }
                        Err(_) => RecordDraft::message("deliver", message, false),
                    }
                } else {
                    // Countersigned registration echoed back.
                    RecordDraft::message("deliver", message, message.verify(&self.dir))
                }
            }
            _ => RecordDraft::message("deliver", message, false),
        }
    }

    /// The payer hands the acceptance and transfer order to her bank.
    fn payer_submit(&mut self, m_a1i1: &SignedMessage) {
        let payer = self.payer.clone();
        let strategy = self.strategy(&payer);
        if strategy.drop.contains(&MessageKind::MA1I1) {
            return;
        }
        let Some(session) = &self.session else {
            return;
        };
        if session.phase != Phase::AcceptedLocked {
            return;
        }
        let order_id = OrderId(self.next_order);
        let order = match crate::rebalance::submit_to_bank(
            session,
            m_a1i1,
            order_id,
            self.config.equivalence,
            self.now,
        ) {
            Ok(order) => order,
            Err(_) => return,
        };
        self.next_order += 1;
        self.orders.insert(order_id, order);
        let bank = self.bank_a_id.clone();
        self.send(&payer, &bank, m_a1i1.clone());
    }

    fn bank_receive(
        &mut self,
        to: &PartyId,
        _from: &PartyId,
        message: &SignedMessage,
    ) -> RecordDraft {
        match message.kind {
            MessageKind::MA1I1 if *to == self.bank_a_id => {
                let order = self
                    .orders
                    .values()
                    .find(|o| o.session == message.session)
                    .cloned();
                let Some(order) = order else {
                    return RecordDraft::message("deliver", message, false);
                };
                let registered: BTreeSet<PartyId> = self
                    .session
                    .as_ref()
                    .map(|s| s.registered_sources.clone())
                    .unwrap_or_default();
                let key = self.keys[&self.bank_a_id].clone();
                let result = process_order(
                    &mut self.bank_a,
                    &key,
                    &order,
                    message,
                    &registered,
                    &self.dir,
                    self.now,
                );
                match result {
                    Ok(events) => {
                        let bank = self.bank_a_id.clone();
                        self.dispatch_rail(bank, events);
                        RecordDraft::message("deliver", message, true)
                    }
                    Err(_) => RecordDraft::message("deliver", message, false),
                }
            }
            MessageKind::MA1I1BA1 if *to == self.bank_i_id => {
                let key = self.keys[&self.bank_i_id].clone();
                let result =
                    relay_alternative2(&mut self.bank_i, &key, message, &self.dir, self.now);
                match result {
                    Ok(Some(event)) => {
                        let bank = self.bank_i_id.clone();
                        self.dispatch_rail(bank, vec![event]);
                        RecordDraft::message("deliver", message, true)
                    }
                    Ok(None) => RecordDraft::message("deliver", message, true),
                    Err(_) => RecordDraft::message("deliver", message, false),
                }
            }
            _ => RecordDraft::message("deliver", message, message.verify(&self.dir)),
        }
    }

    fn apply_relay(&mut self, message: &SignedMessage) {
        let hash = message.content_hash().0;
        if self.applied.contains(&hash) {
            return;
        }
        let Some(mut session) = self.session.take() else {
            return;
        };
        let result = observe_relay(&mut session, &self.channel, message, self.now, &self.dir);
        match result {
            Ok(state) => {
                self.applied.insert(hash);
                self.session = Some(session);
                self.adopt_state(state);
                self.sync_timer();
            }
            Err(_) => {
                self.session = Some(session);
            }
        }
    }

    fn apply_settling(&mut self, message: &SignedMessage) {
        let hash = message.content_hash().0;
        if self.applied.contains(&hash) {
            return;
        }
        let Some(mut session) = self.session.take() else {
            return;
        };
        if session.phase.is_terminal() {
            // Late evidence is kept for the regulator.
            crate::rebalance::record_late_evidence(&mut session, message, &self.dir);
            self.session = Some(session);
            self.applied.insert(hash);
            return;
        }
        let result =
            accept_certificate(&mut session, &self.channel, message, self.now, &self.dir);
        match result {
            Ok((state, _action)) => {
                self.applied.insert(hash);
                self.session = Some(session);
                self.adopt_state(state);
                self.sync_timer();
            }
            Err(_) => {
                self.session = Some(session);
            }
        }
    }

    fn on_timer(&mut self, generation: u64) -> RecordDraft {
        let Some(mut session) = self.session.take() else {
            return RecordDraft::plain("timer");
        };
        if session.timer_generation != generation
            || session.phase.is_terminal()
            || session.deadline.map(|d| self.now < d).unwrap_or(true)
        {
            self.session = Some(session);
            return RecordDraft::plain("timer");
        }
        let result = on_timeout(&mut session, &self.channel, self.now);
        match result {
            Ok(state) => {
                self.session = Some(session);
                self.adopt_state(state);
            }
            Err(_) => {
                self.session = Some(session);
            }
        }
        RecordDraft::plain("timer")
    }

    fn on_rail_delivery(&mut self, order_id: OrderId) -> RecordDraft {
        let Some(order) = self.orders.get(&order_id).cloned() else {
            return RecordDraft::plain("rail_delivery");
        };
        self.in_flight.remove(&order_id);
        let result = receive_delivery(&mut self.bank_i, &order, self.now);
        if let Ok(events) = result {
            let bank = self.bank_i_id.clone();
            self.dispatch_rail(bank, events);
        }
        RecordDraft::plain("rail_delivery")
    }

    fn on_rail_credit(&mut self, order_id: OrderId) -> RecordDraft {
        let Some(order) = self.orders.get(&order_id).cloned() else {
            return RecordDraft::plain("rail_credit");
        };
        let key = self.keys[&self.bank_i_id].clone();
        let result = credit_suspense(&mut self.bank_i, &key, &order, self.now);
        if let Ok(events) = result {
            let bank = self.bank_i_id.clone();
            self.dispatch_rail(bank, events);
        }
        RecordDraft::plain("rail_credit")
    }

    fn on_raise_disputes(&mut self) -> RecordDraft {
        let mut claimants = Vec::new();
        for party in [self.payer.clone(), self.payee.clone()] {
            if !self.strategy(&party).is_honest() {
                continue;
            }
            let start = self.start_totals.get(&party).copied().unwrap_or(0);
            let current = self.equivalence_total(&party);
            let force = self.config.dispute.force_claim && party == self.payee;
            if current < start || force {
                claimants.push(party);
            }
        }
        for (i, claimant) in claimants.into_iter().enumerate() {
            self.queue.push(
                self.now + Ticks(1 + i as u64),
                self.regulator.clone(),
                EventPayload::Adjudicate { claimant },
            );
        }
        RecordDraft::plain("note")
    }

    fn on_adjudicate(&mut self, claimant: &PartyId) -> RecordDraft {
        let Some(session) = self.session.clone() else {
            return RecordDraft::plain("adjudicate");
        };
        let start = self.start_totals.get(claimant).copied().unwrap_or(0);
        let current = self.equivalence_total(claimant);
        let mut claimed = start.saturating_sub(current);
        if claimed == 0 && self.config.dispute.force_claim {
            claimed = session.terms.amount.amount() * self.config.equivalence;
        }
        let case = match raise_dispute(&session, claimant, Value::fiat(claimed), &self.dir) {
            Ok(case) => case,
            Err(_) => return RecordDraft::plain("adjudicate"),
        };
        let adjudication = match adjudicate(&case, &self.bank_a, &self.bank_i, &self.orders, &self.dir)
        {
            Ok(adjudication) => adjudication,
            Err(_) => return RecordDraft::plain("adjudicate"),
        };

        let verdict_msg = SignedMessage::unsigned(
            MessageKind::Verdict,
            session.id,
            session.channel_id,
            MessageBody::Verdict {
                regulator: self.regulator.clone(),
                culprit: adjudication.culprit.clone(),
                remedy: adjudication.remedy.clone(),
                rationale: adjudication.rationale,
            },
        )
        .expect("verdict body matches kind")
        .signed_by(&self.keys[&self.regulator])
        .expect("regulator signs the verdict");

        if let Some(remedy) = &adjudication.remedy {
            let order_id = self
                .orders
                .values()
                .find(|o| o.reference == case.acceptance.content_hash())
                .map(|o| o.id);
            let _ = execute_remedy(
                remedy,
                order_id,
                &mut self.bank_a,
                &mut self.bank_i,
                self.now,
            );
        }

        self.verdicts.push(VerdictReport {
            claimant: claimant.to_string(),
            culprit: adjudication.culprit.as_ref().map(|c| c.to_string()),
            rationale: format!("{:?}", adjudication.rationale),
            remedy: adjudication.remedy.as_ref().map(|r| RemedyReport {
                debtor_bank: r.debtor_bank.to_string(),
                creditor: r.creditor.to_string(),
                amount: r.amount.amount(),
            }),
        });
        RecordDraft::message("adjudicate", &verdict_msg, true)
    }

    fn on_stale_close(&mut self, by: &PartyId) -> RecordDraft {
        if !self.strategy(by).stale_close {
            return RecordDraft::plain("note");
        }
        // The most favorable superseded state for the adversary.
        let latest_seq = self.history.iter().map(|s| s.seq).max().unwrap_or(0);
        let stale = self
            .history
            .iter()
            .filter(|s| s.seq < latest_seq)
            .max_by_key(|s| (s.balance_of(by).amount(), s.seq))
            .cloned();
        let Some(stale) = stale else {
            return RecordDraft::plain("note");
        };
        if self
            .anchor
            .submit_close(stale, self.now, &self.dir)
            .is_ok()
        {
            let counterparty = self.channel.counterparty_of(by).clone();
            self.queue.push(
                self.now + Ticks(1),
                counterparty.clone(),
                EventPayload::CounterClose { by: counterparty },
            );
            let finalize_at = self
                .anchor
                .window_ends()
                .expect("dispute window armed")
                + Ticks(1);
            self.queue.push(
                finalize_at,
                self.regulator.clone(),
                EventPayload::FinalizeAnchor,
            );
            return RecordDraft::plain("anchor_submit");
        }
        RecordDraft::plain("note")
    }

    fn on_counter_close(&mut self, by: &PartyId) -> RecordDraft {
        if !self.strategy(by).is_honest() {
            return RecordDraft::plain("note");
        }
        let latest = self
            .history
            .iter()
            .max_by_key(|s| s.seq)
            .cloned()
            .expect("history never empty");
        match self.anchor.submit_close(latest, self.now, &self.dir) {
            Ok(()) => RecordDraft::plain("anchor_submit"),
            Err(_) => RecordDraft::plain("note"),
        }
    }

    fn on_finalize_anchor(&mut self) -> RecordDraft {
        match self.anchor.finalize(self.now) {
            Ok(payout) => {
                self.channel.balance_a = payout.to_a;
                self.channel.balance_i = payout.to_i;
                self.channel.locks.clear();
                self.payout_done = true;
                RecordDraft::plain("anchor_finalize")
            }
            Err(_) => RecordDraft::plain("note"),
        }
    }

    // -- safety oracle ------------------------------------------------------

    /// Checks each honest participant's end state against the terms:
    /// the equivalence-total floor and the exact channel delta the
    /// protocol assigns on the reached outcome path.
    fn safety_violations(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let rate = self.config.equivalence;
        let session = self.session.as_ref();

        for party in [self.payer.clone(), self.payee.clone()] {
            if !self.strategy(&party).is_honest() {
                continue;
            }
            let start = self.start_totals.get(&party).copied().unwrap_or(0);
            let end = self.equivalence_total(&party);
            let is_payer = party == self.payer;

            let mut floor = start;
            let mut expected_delta: Option<i64> = None;

            if let Some(session) = session {
                if session.phase.is_terminal() && session.locks_created() {
                    let v = session.terms.amount.amount() as i64;
                    let c_a = session.terms.collateral_payer.amount() as i64;
                    let c_i = session.terms.collateral_payee.amount() as i64;
                    let routed_c_a = match session.terms.policy.payer_collateral_on_revert {
                        CollateralRoute::ToCounterparty => c_a,
                        CollateralRoute::Returned => 0,
                    };
                    let routed_c_i = match session.terms.policy.payee_collateral_on_compensation
                    {
                        CollateralRoute::ToCounterparty => c_i,
                        CollateralRoute::Returned => 0,
                    };
                    let payer_delta = match session.phase {
                        Phase::Settled => Some(v),
                        Phase::SettledWithCompensation => Some(v + routed_c_i),
                        Phase::Reverted => Some(-routed_c_a),
                        _ => None,
                    };
                    if let Some(d) = payer_delta {
                        expected_delta = Some(if is_payer { d } else { -d });
                    }
                    if is_payer && session.phase == Phase::Reverted {
                        floor = start.saturating_sub((routed_c_a as u64) * rate);
                    }
                }
            }

            if end < floor {
                violations.push(Violation::SafetyShortfall {
                    party: party.to_string(),
                    floor,
                    got: end,
                });
            }
            if let Some(expected) = expected_delta {
                let baseline = self.channel_baseline.get(&party).copied().unwrap_or(0) as i64;
                let got = self.channel.balance_of(&party).amount() as i64 - baseline;
                if got != expected {
                    violations.push(Violation::CollateralNotApplied {
                        party: party.to_string(),
                        expected_delta: expected,
                        got_delta: got,
                    });
                }
            }
        }
        violations
    }

    fn final_report(&self, violations: Vec<Violation>) -> FinalReport {
        let mut fiat = BTreeMap::new();
        for bank in [&self.bank_a, &self.bank_i] {
            for (customer, balance) in bank.accounts() {
                *fiat.entry(customer.to_string()).or_insert(0) += *balance;
            }
        }
        let mut totals = BTreeMap::new();
        for party in [&self.payer, &self.payee] {
            totals.insert(party.to_string(), self.equivalence_total(party));
        }
        FinalReport {
            outcome: self
                .session
                .as_ref()
                .map(|s| s.phase.name().to_string()),
            channel: ChannelReport {
                participant_a: self.channel.participant_a.to_string(),
                participant_i: self.channel.participant_i.to_string(),
                balance_a: self.channel.balance_a.amount(),
                balance_i: self.channel.balance_i.amount(),
                seq: self.channel.seq,
                anchor: match self.anchor.status {
                    crate::channel::AnchorStatus::Open => "open".to_string(),
                    crate::channel::AnchorStatus::Disputed => "disputed".to_string(),
                    crate::channel::AnchorStatus::Closed => "closed".to_string(),
                },
            },
            fiat,
            totals,
            verdicts: self.verdicts.clone(),
            violations,
        }
    }
}

/// Executes one scenario to completion. Deterministic: the output is a
/// pure function of the config.
pub fn run(config: &ScenarioConfig) -> Result<RunOutput, SimError> {
    let mut world = World::new(config)?;

    // Opening record.
    world.record(
        &world.payer.clone(),
        0,
        RecordDraft::plain("open"),
    );

    // Scripted prelude.
    let payer = world.payer.clone();
    if world.config.interaction.is_some() {
        world
            .queue
            .push(Tick(1), payer.clone(), EventPayload::ProposeInteraction);
    }
    if let Some(s) = &config.session {
        world
            .queue
            .push(Tick(4), payer.clone(), EventPayload::Initiate);
        world
            .queue
            .push(Tick(5), payer.clone(), EventPayload::ProposeRegistration);

        // End-of-run bookkeeping.
        let horizon = Tick(12 + 2 * s.initiation_timeout + s.transfer_max + s.actual_transfer);
        world.queue.push(
            horizon,
            world.regulator.clone(),
            EventPayload::RaiseDisputes,
        );
        for party in [world.payer.clone(), world.payee.clone()] {
            if world.strategy(&party).stale_close {
                world.queue.push(
                    horizon + Ticks(4),
                    party.clone(),
                    EventPayload::StaleClose { by: party.clone() },
                );
            }
        }
    }

    while let Some(event) = world.queue.pop() {
        debug_assert!(event.at >= world.now, "time never goes backwards");
        world.now = event.at;
        let draft = world.handle(&event);
        world.record(&event.actor.clone(), event.seq, draft);
    }

    let trace = Trace::new(config.clone(), world.records.clone());
    let mut violations = audit(&trace);
    violations.extend(world.safety_violations());
    let report = world.final_report(violations);
    Ok(RunOutput { trace, report })
}

// ---------------------------------------------------------------------------
// Fault enumeration
// ---------------------------------------------------------------------------

/// A dimension of the adversary grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridDimension {
    /// Both banks' behaviors (5 x 5 cells).
    Banks,
    /// Both participants' strategy presets (6 x 6 cells).
    Participants,
    /// The protocol alternative (3 cells).
    Alternatives,
}

impl GridDimension {
    pub fn parse(name: &str) -> Option<GridDimension> {
        Some(match name {
            "banks" => GridDimension::Banks,
            "participants" => GridDimension::Participants,
            "alternatives" => GridDimension::Alternatives,
            _ => return None,
        })
    }

    fn cells(&self) -> usize {
        match self {
            GridDimension::Banks => BANK_BEHAVIORS.len() * BANK_BEHAVIORS.len(),
            GridDimension::Participants => {
                ParticipantPreset::ALL.len() * ParticipantPreset::ALL.len()
            }
            GridDimension::Alternatives => ALTERNATIVES.len(),
        }
    }
}

/// The finite adversary grid: a product of named dimensions.
#[derive(Debug, Clone, Default)]
pub struct GridSpec {
    pub dimensions: Vec<GridDimension>,
}

impl GridSpec {
    pub fn size(&self) -> usize {
        self.dimensions
            .iter()
            .map(|d| d.cells())
            .product::<usize>()
            .max(usize::from(!self.dimensions.is_empty()))
    }
}

pub const BANK_BEHAVIORS: [BankBehavior; 5] = [
    BankBehavior::Honest,
    BankBehavior::ConfirmNoExecute,
    BankBehavior::ReceiveNoCredit,
    BankBehavior::Silent,
    BankBehavior::Slow(Ticks(3)),
];

pub const ALTERNATIVES: [Alternative; 3] = [
    Alternative::Alt1Design1,
    Alternative::Alt1Design2,
    Alternative::Alt2,
];

/// One choice along one grid dimension.
#[derive(Debug, Clone)]
enum CellChoice {
    Banks(BankBehavior, BankBehavior),
    Participants(ParticipantPreset, ParticipantPreset),
    Alternative(Alternative),
}

impl CellChoice {
    fn apply(&self, config: &mut ScenarioConfig) {
        match self {
            CellChoice::Banks(a, i) => {
                config.banks.payer_bank.behavior = *a;
                config.banks.payee_bank.behavior = *i;
            }
            CellChoice::Participants(payer, payee) => {
                config.adversary.payer = *payer;
                config.adversary.payee = *payee;
            }
            CellChoice::Alternative(alt) => {
                if let Some(session) = config.session.as_mut() {
                    session.alternative = *alt;
                }
            }
        }
    }

    fn label(&self) -> String {
        match self {
            CellChoice::Banks(a, i) => format!("banks={}/{}", a.name(), i.name()),
            CellChoice::Participants(payer, payee) => {
                format!("participants={payer}/{payee}")
            }
            CellChoice::Alternative(alt) => format!("alternative={alt}"),
        }
    }
}

fn dimension_choices(dimension: GridDimension) -> Vec<CellChoice> {
    match dimension {
        GridDimension::Banks => {
            let mut out = Vec::new();
            for a in BANK_BEHAVIORS {
                for i in BANK_BEHAVIORS {
                    out.push(CellChoice::Banks(a, i));
                }
            }
            out
        }
        GridDimension::Participants => {
            let mut out = Vec::new();
            for payer in ParticipantPreset::ALL {
                for payee in ParticipantPreset::ALL {
                    out.push(CellChoice::Participants(payer, payee));
                }
            }
            out
        }
        GridDimension::Alternatives => ALTERNATIVES
            .into_iter()
            .map(CellChoice::Alternative)
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub labels: Vec<String>,
    pub outcome: Option<String>,
    pub verdicts: Vec<VerdictReport>,
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnumerationReport {
    pub cells: Vec<CellReport>,
    pub total_violations: usize,
    pub outcomes: BTreeMap<String, usize>,
}

/// Runs the base scenario across every cell of the grid and collects
/// reports plus violations (expected: none).
pub fn enumerate_faults(
    base: &ScenarioConfig,
    grid: &GridSpec,
) -> Result<EnumerationReport, SimError> {
    base.validate()?;
    let size = grid.size();
    if size > MAX_GRID_CELLS {
        return Err(SimError::GridTooLarge {
            size,
            max: MAX_GRID_CELLS,
        });
    }

    let per_dimension: Vec<Vec<CellChoice>> = grid
        .dimensions
        .iter()
        .map(|d| dimension_choices(*d))
        .collect();

    let mut cells: Vec<Vec<CellChoice>> = vec![Vec::new()];
    for choices in &per_dimension {
        let mut next = Vec::with_capacity(cells.len() * choices.len());
        for cell in &cells {
            for choice in choices {
                let mut extended = cell.clone();
                extended.push(choice.clone());
                next.push(extended);
            }
        }
        cells = next;
    }

    let mut reports = Vec::with_capacity(cells.len());
    let mut total_violations = 0;
    let mut outcomes: BTreeMap<String, usize> = BTreeMap::new();
    for cell in cells {
        let mut config = base.clone();
        for choice in &cell {
            choice.apply(&mut config);
        }
        let output = run(&config)?;
        let outcome_key = output
            .report
            .outcome
            .clone()
            .unwrap_or_else(|| "NO_SESSION".to_string());
        *outcomes.entry(outcome_key).or_insert(0) += 1;
        total_violations += output.report.violations.len();
        reports.push(CellReport {
            labels: cell.iter().map(|c| c.label()).collect(),
            outcome: output.report.outcome.clone(),
            verdicts: output.report.verdicts.clone(),
            violations: output.report.violations.len(),
        });
    }

    Ok(EnumerationReport {
        cells: reports,
        total_violations,
        outcomes,
    })
}
