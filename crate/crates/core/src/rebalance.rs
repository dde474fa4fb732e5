//! The external re-balancing protocol engine.
//!
//! One [`RebalanceSession`] tracks a single re-balancing procedure on
//! a channel: the payer proposes (`M_A1`), the payee accepts and both
//! sides lock value plus collateral (`M_A1I1`), the external rail
//! moves the equivalent value, and certificates (or the four-party
//! signature chain) release the locks. Timeouts revert or compensate.
//!
//! The engine is a pure state machine: every operation takes the
//! session and channel state and returns updated copies plus the
//! messages or orders to hand to the next layer. Callers serialize
//! events per session.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{
    apply_lock_transition, restage_lock, ChannelError, ChannelState, Disposition, Lock,
    LockCondition, LockId, LockTrigger,
};
use crate::crypto::{ContentHash, KeyDirectory, KeyPair};
use crate::extrail::{DisputeCase, OrderId, TransferOrder};
use crate::message::{
    Alternative, CollateralRoute, MessageBody, MessageError, MessageKind, SessionId, SessionTerms,
    SignedMessage,
};
use crate::party::{PartyId, Role, Roster};
use crate::time::Tick;
use crate::value::{Value, ValueError};

/// Session phases. Transitions only ever move forward along the
/// phase graph; see [`Phase::may_transition_to`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Proposed,
    AcceptedLocked,
    /// Alternative 2: the payer bank endorsed the transfer, resetting
    /// the reversion timer.
    TransferTriggered,
    /// Second locking stage: trigger certificate seen, waiting for the
    /// receipt certificate.
    AwaitingReceipt,
    Settled,
    /// Receipt deadline expired with a valid trigger certificate; the
    /// payer was credited the locked value plus the payee collateral.
    SettledWithCompensation,
    Reverted,
    Disputed,
}

impl Phase {
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            Phase::Settled | Phase::SettledWithCompensation | Phase::Reverted | Phase::Disputed
        )
    }

    /// The normative phase graph.
    pub fn may_transition_to(&self, next: Phase) -> bool {
        use Phase::*;
        if next == Disputed {
            return !self.is_terminal();
        }
        matches!(
            (self, next),
            (Proposed, AcceptedLocked)
                | (Proposed, Reverted)
                | (AcceptedLocked, TransferTriggered)
                | (AcceptedLocked, AwaitingReceipt)
                | (AcceptedLocked, Settled)
                | (AcceptedLocked, Reverted)
                | (TransferTriggered, AwaitingReceipt)
                | (TransferTriggered, Settled)
                | (TransferTriggered, Reverted)
                | (AwaitingReceipt, Settled)
                | (AwaitingReceipt, SettledWithCompensation)
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            Phase::Proposed => "PROPOSED",
            Phase::AcceptedLocked => "ACCEPTED_LOCKED",
            Phase::TransferTriggered => "TRANSFER_TRIGGERED",
            Phase::AwaitingReceipt => "AWAITING_RECEIPT",
            Phase::Settled => "SETTLED",
            Phase::SettledWithCompensation => "SETTLED_WITH_COMPENSATION",
            Phase::Reverted => "REVERTED",
            Phase::Disputed => "DISPUTED",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Engine-level fault injection used by detector-sensitivity tests.
/// A mutation makes the engine deviate from the agreed terms; the
/// safety oracle judges runs by the terms, so enabling one must
/// produce a reported violation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolMutations {
    /// Route the payer collateral back to the payer on reversion even
    /// though the terms forfeit it to the payee.
    #[serde(default)]
    pub disable_payer_collateral_forfeit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("amount must be positive and within the payee-side balance")]
    AmountExceedsBalance,
    #[error("a session is already active on this channel")]
    SessionAlreadyActive,
    #[error("bad signature")]
    BadSignature,
    #[error("insufficient channel balance for value plus collateral")]
    InsufficientBalance,
    #[error("registration is not countersigned by both participants")]
    NotCountersigned,
    #[error("{0} does not have the bank role")]
    InvalidRole(PartyId),
    #[error("certificate issuer {0} is not a registered source")]
    UnregisteredIssuer(PartyId),
    #[error("message does not reference this session")]
    WrongSession,
    #[error("operation not valid in phase {0}")]
    PhaseError(Phase),
    #[error("no deadline pending")]
    NoDeadlinePending,
    #[error("insufficient evidence for a dispute")]
    InsufficientEvidence,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Message(#[from] MessageError),
    #[error(transparent)]
    Value(#[from] ValueError),
}

/// What a settling message did to the session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SettleAction {
    /// Locks released; session settled.
    Settled,
    /// Second locking stage armed; awaiting the receipt certificate.
    EnteredReceiptStage,
    /// Reversion timer reset (payer bank endorsed the transfer).
    TimerReset,
}

/// State machine for one re-balancing procedure.
#[derive(Debug, Clone)]
pub struct RebalanceSession {
    pub id: SessionId,
    pub channel_id: crate::message::ChannelId,
    pub terms: SessionTerms,
    pub registered_sources: BTreeSet<PartyId>,
    pub phase: Phase,
    /// Append-only message log of the procedure.
    pub transcript: Vec<SignedMessage>,
    /// Hash of the countersigned acceptance; certificates must
    /// reference it.
    pub accepted_hash: Option<ContentHash>,
    pub lock_payee: Option<LockId>,
    pub lock_payer: Option<LockId>,
    /// The verifying trigger certificate, once seen.
    pub trigger_evidence: Option<SignedMessage>,
    pub deadline: Option<Tick>,
    /// Bumped whenever the deadline is re-armed; stale timer events
    /// carry an older generation and are ignored.
    pub timer_generation: u64,
    pub opened_at: Tick,
    pub closed_at: Option<Tick>,
    mutations: ProtocolMutations,
}

impl RebalanceSession {
    pub fn locks_created(&self) -> bool {
        self.lock_payee.is_some()
    }

    fn advance(&mut self, next: Phase, now: Tick) -> Result<(), SessionError> {
        if !self.phase.may_transition_to(next) {
            return Err(SessionError::PhaseError(self.phase));
        }
        self.phase = next;
        if next.is_terminal() {
            self.closed_at = Some(now);
            self.deadline = None;
            self.timer_generation += 1;
        }
        Ok(())
    }

    fn arm_deadline(&mut self, at: Tick) {
        self.deadline = Some(at);
        self.timer_generation += 1;
    }
}

fn payer_is_a(channel: &ChannelState, terms: &SessionTerms) -> bool {
    terms.payer == channel.participant_a
}

/// Maps (to_payer, to_payee) credits onto the channel's a/i sides.
fn disposition(channel: &ChannelState, terms: &SessionTerms, to_payer: u64, to_payee: u64) -> Disposition {
    if payer_is_a(channel, terms) {
        Disposition {
            to_a: to_payer,
            to_i: to_payee,
        }
    } else {
        Disposition {
            to_a: to_payee,
            to_i: to_payer,
        }
    }
}

/// The lock condition that settles this session.
fn settle_condition(terms: &SessionTerms, sources: &BTreeSet<PartyId>) -> LockCondition {
    let kind = match terms.alternative {
        Alternative::Alt1Design1 | Alternative::Alt1Design2 => MessageKind::Cert1,
        Alternative::Alt2 => MessageKind::MA1I1BA1BI1,
    };
    LockCondition::CertificateFrom {
        senders: sources.clone(),
        kind,
    }
}

/// Starts a re-balancing procedure: checks the proposal against the
/// channel, creates the session in `PROPOSED`, and returns the signed
/// `M_A1`. The caller enforces one active session per channel.
pub fn initiate(
    channel: &ChannelState,
    id: SessionId,
    terms: SessionTerms,
    now: Tick,
    payer_key: &KeyPair,
) -> Result<(RebalanceSession, SignedMessage), SessionError> {
    initiate_with(channel, id, terms, now, payer_key, ProtocolMutations::default())
}

/// [`initiate`] with engine fault injection for detector tests.
pub fn initiate_with(
    channel: &ChannelState,
    id: SessionId,
    terms: SessionTerms,
    now: Tick,
    payer_key: &KeyPair,
    mutations: ProtocolMutations,
) -> Result<(RebalanceSession, SignedMessage), SessionError> {
    if !channel.is_participant(&terms.payer) || !channel.is_participant(&terms.payee) {
        return Err(SessionError::AmountExceedsBalance);
    }
    // The payee gives up `amount` on the channel; it must exist on her
    // side. Zero amounts are rejected outright.
    let payee_balance = channel.balance_of(&terms.payee);
    if terms.amount.is_zero() || terms.amount.amount() > payee_balance.amount() {
        return Err(SessionError::AmountExceedsBalance);
    }

    let m_a1 = SignedMessage::unsigned(
        MessageKind::MA1,
        id,
        channel.channel_id,
        MessageBody::RebalanceTerms(terms.clone()),
    )?
    .signed_by(payer_key)?;

    let mut session = RebalanceSession {
        id,
        channel_id: channel.channel_id,
        terms,
        registered_sources: BTreeSet::new(),
        phase: Phase::Proposed,
        transcript: Vec::new(),
        accepted_hash: None,
        lock_payee: None,
        lock_payer: None,
        trigger_evidence: None,
        deadline: None,
        timer_generation: 0,
        opened_at: now,
        closed_at: None,
        mutations,
    };
    session.arm_deadline(now + session.terms.deadlines.initiation_timeout);
    session.transcript.push(m_a1.clone());
    Ok((session, m_a1))
}

/// Registers certificate sources for this procedure. Requires the
/// registration message countersigned by both participants, and every
/// source to hold the bank role.
pub fn register_sources(
    session: &mut RebalanceSession,
    registration: &SignedMessage,
    roster: &Roster,
    dir: &KeyDirectory,
) -> Result<(), SessionError> {
    if session.phase != Phase::Proposed {
        return Err(SessionError::PhaseError(session.phase));
    }
    let sources = match &registration.body {
        MessageBody::SourceRegistration { sources, .. }
            if registration.kind == MessageKind::ChannelUpdate =>
        {
            sources.clone()
        }
        _ => return Err(SessionError::NotCountersigned),
    };
    if !registration.verify(dir) {
        return Err(SessionError::NotCountersigned);
    }
    for source in &sources {
        if !roster.has_role(source, Role::Bank) {
            return Err(SessionError::InvalidRole(source.clone()));
        }
    }
    session.registered_sources = sources;
    session.transcript.push(registration.clone());
    Ok(())
}

/// The payee accepts `M_A1`: countersigns it and locks `amount + C_I`
/// on her side plus `C_A` on the payer side. Returns the updated
/// session, the locked channel state (unsigned; both parties co-sign
/// it), and the full `M_A1I1`.
pub fn accept(
    session: &mut RebalanceSession,
    channel: &ChannelState,
    m_a1: &SignedMessage,
    now: Tick,
    payee_key: &KeyPair,
    dir: &KeyDirectory,
) -> Result<(ChannelState, SignedMessage), SessionError> {
    if session.phase != Phase::Proposed {
        return Err(SessionError::PhaseError(session.phase));
    }
    if m_a1.session != session.id || m_a1.kind != MessageKind::MA1 {
        return Err(SessionError::WrongSession);
    }
    if !m_a1.verify(dir) {
        return Err(SessionError::BadSignature);
    }
    let terms = &session.terms;
    let amount = terms.amount.amount();
    let c_payer = terms.collateral_payer.amount();
    let c_payee = terms.collateral_payee.amount();

    let payee_balance = channel.balance_of(&terms.payee).amount();
    let payer_balance = channel.balance_of(&terms.payer).amount();
    if payee_balance < amount + c_payee || payer_balance < c_payer {
        return Err(SessionError::InsufficientBalance);
    }

    let m_a1i1 = SignedMessage::countersigned(m_a1, dir)?.signed_by(payee_key)?;

    let deadline = now + terms.deadlines.initiation_timeout;
    let condition = settle_condition(terms, &session.registered_sources);

    let mut locks = channel.locks.clone();
    let payee_lock_id = channel.next_lock_id();
    locks.push(Lock {
        id: payee_lock_id,
        owner: terms.payee.clone(),
        amount: Value::channel(amount + c_payee),
        condition: condition.clone(),
        timeout: deadline,
        // Settling: the value moves to the payer, the collateral back.
        on_release: disposition(channel, terms, amount, c_payee),
        // Reversion: everything returns to the payee.
        on_timeout: disposition(channel, terms, 0, amount + c_payee),
    });

    let mut payer_lock_id = None;
    if c_payer > 0 {
        let id = LockId(payee_lock_id.0 + 1);
        let forfeit_route = if session.mutations.disable_payer_collateral_forfeit {
            CollateralRoute::Returned
        } else {
            terms.policy.payer_collateral_on_revert
        };
        let on_timeout = match forfeit_route {
            CollateralRoute::Returned => disposition(channel, terms, c_payer, 0),
            CollateralRoute::ToCounterparty => disposition(channel, terms, 0, c_payer),
        };
        locks.push(Lock {
            id,
            owner: terms.payer.clone(),
            amount: Value::channel(c_payer),
            condition,
            timeout: deadline,
            on_release: disposition(channel, terms, c_payer, 0),
            on_timeout,
        });
        payer_lock_id = Some(id);
    }

    let (new_a, new_i) = if payer_is_a(channel, terms) {
        (
            channel.balance_a.checked_sub(&Value::channel(c_payer))?,
            channel
                .balance_i
                .checked_sub(&Value::channel(amount + c_payee))?,
        )
    } else {
        (
            channel
                .balance_a
                .checked_sub(&Value::channel(amount + c_payee))?,
            channel.balance_i.checked_sub(&Value::channel(c_payer))?,
        )
    };

    let locked = ChannelState {
        channel_id: channel.channel_id,
        seq: channel.seq + 1,
        participant_a: channel.participant_a.clone(),
        participant_i: channel.participant_i.clone(),
        balance_a: new_a,
        balance_i: new_i,
        locks,
        proposed_by: terms.payee.clone(),
        signatures: Vec::new(),
    };

    session.accepted_hash = Some(m_a1i1.content_hash());
    session.lock_payee = Some(payee_lock_id);
    session.lock_payer = payer_lock_id;
    session.transcript.push(m_a1i1.clone());
    session.advance(Phase::AcceptedLocked, now)?;
    session.arm_deadline(deadline);
    Ok((locked, m_a1i1))
}

/// Builds the transfer order the payer hands to her bank along with
/// `M_A1I1`. No bank behavior is modeled here; failure surfaces as a
/// timeout on the session.
pub fn submit_to_bank(
    session: &RebalanceSession,
    m_a1i1: &SignedMessage,
    order_id: OrderId,
    equivalence: u64,
    now: Tick,
) -> Result<TransferOrder, SessionError> {
    if session.phase != Phase::AcceptedLocked {
        return Err(SessionError::PhaseError(session.phase));
    }
    let accepted = session.accepted_hash.ok_or(SessionError::WrongSession)?;
    if m_a1i1.content_hash() != accepted {
        return Err(SessionError::WrongSession);
    }
    let terms = &session.terms;
    Ok(TransferOrder {
        id: order_id,
        session: session.id,
        channel: session.channel_id,
        from: terms.payer.clone(),
        to: terms.payee.clone(),
        amount: terms.amount.to_fiat_equivalent(equivalence)?,
        reference: accepted,
        triggered_at: now,
        irreversible_after: terms.method.irreversible_after,
        mode: terms.method.mode,
    })
}

fn is_settling_kind(alternative: Alternative, kind: MessageKind) -> bool {
    match alternative {
        Alternative::Alt1Design1 | Alternative::Alt1Design2 => kind == MessageKind::Cert1,
        Alternative::Alt2 => kind == MessageKind::MA1I1BA1BI1,
    }
}

fn references_session(session: &RebalanceSession, msg: &SignedMessage) -> bool {
    match &msg.body {
        MessageBody::Certificate { reference, .. } => {
            Some(*reference) == session.accepted_hash && msg.session == session.id
        }
        MessageBody::RebalanceTerms(_) => msg.session == session.id,
        _ => false,
    }
}

fn check_registered(session: &RebalanceSession, msg: &SignedMessage) -> Result<(), SessionError> {
    match &msg.body {
        MessageBody::Certificate { issuer, .. } => {
            if !session.registered_sources.contains(issuer) {
                return Err(SessionError::UnregisteredIssuer(issuer.clone()));
            }
            Ok(())
        }
        MessageBody::RebalanceTerms(terms) => {
            for bank in [&terms.payer_bank, &terms.payee_bank] {
                if !session.registered_sources.contains(bank) {
                    return Err(SessionError::UnregisteredIssuer(bank.clone()));
                }
            }
            Ok(())
        }
        _ => Err(SessionError::WrongSession),
    }
}

fn release_all(
    session: &RebalanceSession,
    channel: &ChannelState,
    trigger: &SignedMessage,
    dir: &KeyDirectory,
) -> Result<ChannelState, SessionError> {
    let mut state = channel.clone();
    let base_seq = channel.seq;
    for lock_id in [session.lock_payee, session.lock_payer].into_iter().flatten() {
        state = apply_lock_transition(&state, lock_id, &LockTrigger::Message(trigger), dir)?;
    }
    // One protocol step, one state transition, regardless of how many
    // locks it resolved.
    state.seq = base_seq + 1;
    Ok(state)
}

/// Applies a settling or staging message: a trigger certificate, a
/// receipt certificate, or the four-party chain message, depending on
/// the alternative and current phase.
pub fn accept_certificate(
    session: &mut RebalanceSession,
    channel: &ChannelState,
    msg: &SignedMessage,
    now: Tick,
    dir: &KeyDirectory,
) -> Result<(ChannelState, SettleAction), SessionError> {
    if !references_session(session, msg) {
        return Err(SessionError::WrongSession);
    }
    if !msg.verify(dir) {
        return Err(SessionError::BadSignature);
    }
    check_registered(session, msg)?;

    let terms = session.terms.clone();
    match (session.phase, msg.kind) {
        // Trigger certificate while locked.
        (Phase::AcceptedLocked | Phase::TransferTriggered, kind)
            if is_settling_kind(terms.alternative, kind) =>
        {
            let receipt_staged = match terms.alternative {
                Alternative::Alt1Design1 => false,
                Alternative::Alt1Design2 => true,
                Alternative::Alt2 => terms.receipt_unlock,
            };
            session.transcript.push(msg.clone());
            session.trigger_evidence = Some(msg.clone());
            if receipt_staged {
                let state = enter_receipt_stage(session, channel, msg, now, dir)?;
                session.advance(Phase::AwaitingReceipt, now)?;
                session.arm_deadline(now + terms.deadlines.transfer_max);
                Ok((state, SettleAction::EnteredReceiptStage))
            } else {
                let state = release_all(session, channel, msg, dir)?;
                session.advance(Phase::Settled, now)?;
                Ok((state, SettleAction::Settled))
            }
        }
        // Receipt certificate in the second stage.
        (Phase::AwaitingReceipt, MessageKind::Cert2) => {
            session.transcript.push(msg.clone());
            let state = release_all(session, channel, msg, dir)?;
            session.advance(Phase::Settled, now)?;
            Ok((state, SettleAction::Settled))
        }
        _ => Err(SessionError::PhaseError(session.phase)),
    }
}

/// Alternative 2: the payer bank's endorsement `M_A1I1BA1` resets the
/// reversion timer (the payer demonstrably made a step).
pub fn observe_relay(
    session: &mut RebalanceSession,
    channel: &ChannelState,
    msg: &SignedMessage,
    now: Tick,
    dir: &KeyDirectory,
) -> Result<ChannelState, SessionError> {
    if session.terms.alternative != Alternative::Alt2 || msg.kind != MessageKind::MA1I1BA1 {
        return Err(SessionError::WrongSession);
    }
    if session.phase != Phase::AcceptedLocked {
        return Err(SessionError::PhaseError(session.phase));
    }
    if !references_session(session, msg) {
        return Err(SessionError::WrongSession);
    }
    if !msg.verify(dir) {
        return Err(SessionError::BadSignature);
    }
    let new_deadline = now + session.terms.deadlines.initiation_timeout;
    // The reset rule: a verifying chain prefix endorsed by the payer
    // bank resets the reversion timer, leaving conditions and
    // dispositions untouched.
    let reset_rule = LockCondition::CertificateFrom {
        senders: [
            session.terms.payer_bank.clone(),
            session.terms.payee_bank.clone(),
        ]
        .into_iter()
        .collect(),
        kind: MessageKind::MA1I1BA1,
    };
    let mut state = channel.clone();
    let base_seq = channel.seq;
    for lock_id in [session.lock_payee, session.lock_payer].into_iter().flatten() {
        let lock = state
            .lock(lock_id)
            .ok_or(ChannelError::UnknownLock(lock_id))?
            .clone();
        state = restage_lock(
            &state,
            lock_id,
            msg,
            &reset_rule,
            lock.condition.clone(),
            new_deadline,
            lock.on_timeout,
            dir,
        )?;
    }
    state.seq = base_seq + 1;
    session.transcript.push(msg.clone());
    session.advance(Phase::TransferTriggered, now)?;
    session.arm_deadline(new_deadline);
    Ok(state)
}

/// Arms the second locking stage after a valid trigger certificate
/// (design 2): conditions switch to the receipt certificate and the
/// timeout dispositions flip to compensate the payer.
fn enter_receipt_stage(
    session: &RebalanceSession,
    channel: &ChannelState,
    trigger: &SignedMessage,
    now: Tick,
    dir: &KeyDirectory,
) -> Result<ChannelState, SessionError> {
    let terms = &session.terms;
    let amount = terms.amount.amount();
    let c_payee = terms.collateral_payee.amount();
    let deadline = now + terms.deadlines.transfer_max;

    let receipt_condition = LockCondition::CertificateFrom {
        senders: session.registered_sources.clone(),
        kind: MessageKind::Cert2,
    };

    let mut state = channel.clone();
    let base_seq = channel.seq;
    if let Some(lock_id) = session.lock_payee {
        let stage_rule = state
            .lock(lock_id)
            .ok_or(ChannelError::UnknownLock(lock_id))?
            .condition
            .clone();
        let compensation_route = terms.policy.payee_collateral_on_compensation;
        let on_timeout = match compensation_route {
            // Compensation for the waiting: value plus payee collateral
            // go to the payer.
            CollateralRoute::ToCounterparty => disposition(channel, terms, amount + c_payee, 0),
            CollateralRoute::Returned => disposition(channel, terms, amount, c_payee),
        };
        state = restage_lock(
            &state,
            lock_id,
            trigger,
            &stage_rule,
            receipt_condition.clone(),
            deadline,
            on_timeout,
            dir,
        )?;
    }
    if let Some(lock_id) = session.lock_payer {
        let stage_rule = state
            .lock(lock_id)
            .ok_or(ChannelError::UnknownLock(lock_id))?
            .condition
            .clone();
        let c_payer = terms.collateral_payer.amount();
        // The payer did her part; on receipt timeout her collateral
        // returns to her.
        let on_timeout = disposition(channel, terms, c_payer, 0);
        state = restage_lock(
            &state,
            lock_id,
            trigger,
            &stage_rule,
            receipt_condition,
            deadline,
            on_timeout,
            dir,
        )?;
    }
    state.seq = base_seq + 1;
    Ok(state)
}

/// Fires the pending deadline: reverts a locked session or settles
/// the receipt stage with compensation.
pub fn on_timeout(
    session: &mut RebalanceSession,
    channel: &ChannelState,
    now: Tick,
) -> Result<ChannelState, SessionError> {
    let deadline = session.deadline.ok_or(SessionError::NoDeadlinePending)?;
    if now < deadline {
        return Err(SessionError::NoDeadlinePending);
    }
    match session.phase {
        Phase::Proposed => {
            // Nothing was locked; the proposal simply lapses.
            session.advance(Phase::Reverted, now)?;
            Ok(channel.clone())
        }
        Phase::AcceptedLocked | Phase::TransferTriggered => {
            let state = fire_lock_timeouts(session, channel, now)?;
            session.advance(Phase::Reverted, now)?;
            Ok(state)
        }
        Phase::AwaitingReceipt => {
            let state = fire_lock_timeouts(session, channel, now)?;
            session.advance(Phase::SettledWithCompensation, now)?;
            Ok(state)
        }
        phase => Err(SessionError::PhaseError(phase)),
    }
}

fn fire_lock_timeouts(
    session: &RebalanceSession,
    channel: &ChannelState,
    now: Tick,
) -> Result<ChannelState, SessionError> {
    let mut state = channel.clone();
    let base_seq = channel.seq;
    for lock_id in [session.lock_payee, session.lock_payer].into_iter().flatten() {
        state = apply_lock_transition(&state, lock_id, &LockTrigger::Timeout(now), &KeyDirectory::new())?;
    }
    state.seq = base_seq + 1;
    Ok(state)
}

/// Keeps a verifying but no-longer-applicable message for the
/// regulator (a certificate arriving after the session closed).
pub fn record_late_evidence(
    session: &mut RebalanceSession,
    msg: &SignedMessage,
    dir: &KeyDirectory,
) {
    if references_session(session, msg) && msg.verify(dir) && check_registered(session, msg).is_ok()
    {
        session.transcript.push(msg.clone());
    }
}

/// Assembles a dispute case for the regulator. Admissible only when
/// the transcript holds verifying certificate-grade evidence (a bank
/// certificate or a bank-endorsed chain message).
pub fn raise_dispute(
    session: &RebalanceSession,
    claimant: &PartyId,
    claimed_shortfall: Value,
    dir: &KeyDirectory,
) -> Result<DisputeCase, SessionError> {
    let evidence: Vec<SignedMessage> = session
        .transcript
        .iter()
        .filter(|m| {
            matches!(
                m.kind,
                MessageKind::Cert1
                    | MessageKind::Cert2
                    | MessageKind::MA1I1BA1
                    | MessageKind::MA1I1BA1BI1
            ) && m.verify(dir)
        })
        .cloned()
        .collect();
    if evidence.is_empty() {
        return Err(SessionError::InsufficientEvidence);
    }
    let acceptance = session
        .transcript
        .iter()
        .find(|m| m.kind == MessageKind::MA1I1)
        .cloned()
        .ok_or(SessionError::InsufficientEvidence)?;
    Ok(DisputeCase {
        claimant: claimant.clone(),
        session: session.id,
        acceptance,
        certificates: evidence,
        outcome: session.phase,
        claimed_shortfall,
    })
}
