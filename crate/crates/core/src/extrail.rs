//! Simulated justified-trust rail: two banks with fiat ledgers and
//! injectable behaviors, plus the regulator that adjudicates disputes
//! from certificates and ledger evidence.
//!
//! Banks are event-driven: processing an order or receiving a delivery
//! returns [`RailEvent`]s with explicit timestamps, so a slow bank is
//! just a bank whose events carry later ticks. Every action leaves a
//! journal entry; the journals are the "extra evidence from within the
//! banking system" the regulator reads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::{ContentHash, KeyDirectory, KeyPair};
use crate::message::{
    Alternative, CertAssertion, MessageBody, MessageKind, Remedy, SessionId, SignedMessage,
    TransferMode, VerdictRationale,
};
use crate::party::PartyId;
use crate::rebalance::Phase;
use crate::time::{Tick, Ticks};
use crate::value::{Unit, Value};

/// Identifies a rail-level transfer order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderId(pub u64);

impl fmt::Display for OrderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "order{}", self.0)
    }
}

/// A fiat transfer order derived from a countersigned acceptance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferOrder {
    pub id: OrderId,
    pub session: SessionId,
    pub channel: crate::message::ChannelId,
    pub from: PartyId,
    pub to: PartyId,
    pub amount: Value,
    /// Hash of the `M_A1I1` this order executes.
    pub reference: ContentHash,
    pub triggered_at: Tick,
    /// Reversal is refused after this span (request-to-pay).
    pub irreversible_after: Ticks,
    pub mode: TransferMode,
}

impl TransferOrder {
    /// Whether the rail would still entertain a reversal. Request-to-
    /// pay orders become irreversible once the window elapses, which
    /// is what lowers the payee's default risk.
    pub fn reversal_allowed(&self, now: Tick) -> bool {
        match self.mode {
            TransferMode::Push => true,
            TransferMode::RequestToPay => now < self.triggered_at + self.irreversible_after,
        }
    }
}

/// Behavior of a bank for a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankBehavior {
    Honest,
    /// Certifies the trigger but never debits or delivers.
    ConfirmNoExecute,
    /// Books incoming value into suspense and never credits the
    /// customer; no receipt certificate.
    ReceiveNoCredit,
    /// Ignores valid orders and deliveries entirely.
    Silent,
    /// Acts honestly, delayed by the given number of ticks.
    Slow(Ticks),
}

impl BankBehavior {
    pub fn name(&self) -> String {
        match self {
            BankBehavior::Honest => "honest".into(),
            BankBehavior::ConfirmNoExecute => "confirm_no_execute".into(),
            BankBehavior::ReceiveNoCredit => "receive_no_credit".into(),
            BankBehavior::Silent => "silent".into(),
            BankBehavior::Slow(d) => format!("slow({})", d.0),
        }
    }

    fn delay(&self) -> Ticks {
        match self {
            BankBehavior::Slow(d) => *d,
            _ => Ticks(0),
        }
    }
}

/// Journal actions; the forensic trail the regulator reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JournalAction {
    Debited,
    DeliveredOut,
    ReceivedIntoSuspense,
    Credited,
    RemedyPaid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub order: OrderId,
    pub action: JournalAction,
    pub at: Tick,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BankError {
    #[error("insufficient fiat: account holds {have}, order needs {need}")]
    InsufficientFiat { have: u64, need: u64 },
    #[error("unknown customer {0}")]
    UnknownCustomer(PartyId),
    #[error("order rejected: {0}")]
    InvalidOrder(&'static str),
}

/// Per-bank fiat ledger.
#[derive(Debug, Clone)]
pub struct BankLedger {
    pub bank: PartyId,
    pub behavior: BankBehavior,
    accounts: BTreeMap<PartyId, u64>,
    /// Received but uncredited value, by order.
    suspense: BTreeMap<OrderId, u64>,
    /// The bank's own funds; remedies draw from here.
    equity: u64,
    journal: Vec<JournalEntry>,
}

impl BankLedger {
    pub fn new(bank: PartyId, behavior: BankBehavior, equity: u64) -> Self {
        BankLedger {
            bank,
            behavior,
            accounts: BTreeMap::new(),
            suspense: BTreeMap::new(),
            equity,
            journal: Vec::new(),
        }
    }

    pub fn open_account(&mut self, customer: PartyId, initial: u64) {
        self.accounts.insert(customer, initial);
    }

    pub fn has_account(&self, customer: &PartyId) -> bool {
        self.accounts.contains_key(customer)
    }

    pub fn account_balance(&self, customer: &PartyId) -> Option<Value> {
        self.accounts.get(customer).map(|v| Value::fiat(*v))
    }

    pub fn accounts(&self) -> &BTreeMap<PartyId, u64> {
        &self.accounts
    }

    pub fn suspense_total(&self) -> u64 {
        self.suspense.values().sum()
    }

    pub fn equity(&self) -> u64 {
        self.equity
    }

    /// Everything the bank holds: accounts, suspense, equity.
    pub fn total(&self) -> u64 {
        self.accounts.values().sum::<u64>() + self.suspense_total() + self.equity
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    pub fn journal_has(&self, order: OrderId, action: JournalAction) -> bool {
        self.journal
            .iter()
            .any(|e| e.order == order && e.action == action)
    }

    fn record(&mut self, order: OrderId, action: JournalAction, at: Tick, amount: u64) {
        self.journal.push(JournalEntry {
            order,
            action,
            at,
            amount,
        });
    }
}

/// Effects a bank hands back to the scheduler, each with the tick at
/// which it takes place.
#[derive(Debug, Clone)]
pub enum RailEvent {
    /// A certificate to deliver to both channel participants.
    Cert { message: SignedMessage, at: Tick },
    /// A chain message to relay (alternative 2).
    Relay { message: SignedMessage, at: Tick },
    /// Interbank delivery arriving at the payee bank.
    Delivery { order: OrderId, at: Tick },
    /// The payee bank credits a suspended delivery.
    Credit { order: OrderId, at: Tick },
}

fn build_cert(
    key: &KeyPair,
    order: &TransferOrder,
    kind: MessageKind,
    assertion: CertAssertion,
    at: Tick,
) -> SignedMessage {
    SignedMessage::unsigned(
        kind,
        order.session,
        order.channel,
        MessageBody::Certificate {
            issuer: key.party().clone(),
            reference: order.reference,
            assertion,
            order: order.id.0,
            issued_at: at,
        },
    )
    .expect("certificate body matches kind")
    .signed_by(key)
    .expect("issuer signs its own certificate")
}

/// The payer bank processes `M_A1I1` plus the order derived from it.
///
/// An honest bank debits the payer, certifies the trigger (or, in
/// alternative 2, endorses the chain), and schedules the interbank
/// delivery within `t_actualTransfer`. Deviating behaviors do exactly
/// what their name says. Errors mean the bank ignored the order.
pub fn process_order(
    bank: &mut BankLedger,
    key: &KeyPair,
    order: &TransferOrder,
    m_a1i1: &SignedMessage,
    registered: &BTreeSet<PartyId>,
    dir: &KeyDirectory,
    now: Tick,
) -> Result<Vec<RailEvent>, BankError> {
    if !m_a1i1.verify(dir) {
        return Err(BankError::InvalidOrder("acceptance does not verify"));
    }
    if order.reference != m_a1i1.content_hash() {
        return Err(BankError::InvalidOrder("order does not match acceptance"));
    }
    let terms = match &m_a1i1.body {
        MessageBody::RebalanceTerms(terms) => terms.clone(),
        _ => return Err(BankError::InvalidOrder("not an acceptance message")),
    };
    if !registered.contains(&bank.bank) {
        return Err(BankError::InvalidOrder(
            "bank not registered as certificate source",
        ));
    }
    if order.amount.unit() != Unit::Fiat {
        return Err(BankError::InvalidOrder("order not denominated in fiat"));
    }

    if bank.behavior == BankBehavior::Silent {
        return Ok(Vec::new());
    }

    let delay = bank.behavior.delay();
    let confirm_at = now + delay;
    let deliver_at = now + terms.deadlines.actual_transfer + delay;

    let confirmation = match terms.alternative {
        Alternative::Alt1Design1 | Alternative::Alt1Design2 => RailEvent::Cert {
            message: build_cert(
                key,
                order,
                MessageKind::Cert1,
                CertAssertion::TransferTriggered,
                confirm_at,
            ),
            at: confirm_at,
        },
        Alternative::Alt2 => {
            let chain = SignedMessage::countersigned(m_a1i1, dir)
                .map_err(|_| BankError::InvalidOrder("chain cannot be extended"))?
                .signed_by(key)
                .map_err(|_| BankError::InvalidOrder("bank is not the next chain signer"))?;
            RailEvent::Relay {
                message: chain,
                at: confirm_at,
            }
        }
    };

    if bank.behavior == BankBehavior::ConfirmNoExecute {
        return Ok(vec![confirmation]);
    }

    let amount = order.amount.amount();
    let balance = bank
        .accounts
        .get_mut(&order.from)
        .ok_or_else(|| BankError::UnknownCustomer(order.from.clone()))?;
    if *balance < amount {
        return Err(BankError::InsufficientFiat {
            have: *balance,
            need: amount,
        });
    }
    *balance -= amount;
    bank.record(order.id, JournalAction::Debited, now, amount);
    bank.record(order.id, JournalAction::DeliveredOut, now, amount);

    Ok(vec![
        confirmation,
        RailEvent::Delivery {
            order: order.id,
            at: deliver_at,
        },
    ])
}

/// The payee bank receives an interbank delivery. The value is booked
/// into suspense; honest behavior credits it (possibly delayed).
pub fn receive_delivery(
    bank: &mut BankLedger,
    order: &TransferOrder,
    now: Tick,
) -> Result<Vec<RailEvent>, BankError> {
    let amount = order.amount.amount();
    *bank.suspense.entry(order.id).or_insert(0) += amount;
    bank.record(order.id, JournalAction::ReceivedIntoSuspense, now, amount);

    match bank.behavior {
        BankBehavior::ReceiveNoCredit | BankBehavior::Silent => Ok(Vec::new()),
        _ => {
            if !bank.has_account(&order.to) {
                return Err(BankError::UnknownCustomer(order.to.clone()));
            }
            Ok(vec![RailEvent::Credit {
                order: order.id,
                at: now + bank.behavior.delay(),
            }])
        }
    }
}

/// Moves a suspended delivery into the customer account and issues the
/// receipt certificate.
pub fn credit_suspense(
    bank: &mut BankLedger,
    key: &KeyPair,
    order: &TransferOrder,
    now: Tick,
) -> Result<Vec<RailEvent>, BankError> {
    let amount = bank
        .suspense
        .remove(&order.id)
        .ok_or(BankError::InvalidOrder("nothing suspended for this order"))?;
    let balance = bank
        .accounts
        .get_mut(&order.to)
        .ok_or_else(|| BankError::UnknownCustomer(order.to.clone()))?;
    *balance += amount;
    bank.record(order.id, JournalAction::Credited, now, amount);

    Ok(vec![RailEvent::Cert {
        message: build_cert(
            key,
            order,
            MessageKind::Cert2,
            CertAssertion::ReceiptConfirmed,
            now,
        ),
        at: now,
    }])
}

/// Alternative 2: the payee bank endorses the chain, producing the
/// four-party-signed message. Silence is a modeled behavior, not an
/// error.
pub fn relay_alternative2(
    bank: &mut BankLedger,
    key: &KeyPair,
    m_a1i1ba1: &SignedMessage,
    dir: &KeyDirectory,
    now: Tick,
) -> Result<Option<RailEvent>, BankError> {
    if bank.behavior == BankBehavior::Silent {
        return Ok(None);
    }
    if m_a1i1ba1.kind != MessageKind::MA1I1BA1 || !m_a1i1ba1.verify(dir) {
        return Err(BankError::InvalidOrder("chain does not verify"));
    }
    let chain = SignedMessage::countersigned(m_a1i1ba1, dir)
        .map_err(|_| BankError::InvalidOrder("chain cannot be extended"))?
        .signed_by(key)
        .map_err(|_| BankError::InvalidOrder("bank is not the next chain signer"))?;
    Ok(Some(RailEvent::Relay {
        message: chain,
        at: now + bank.behavior.delay(),
    }))
}

/// A claim handed to the regulator: the acceptance, the certificate
/// chain, and the claimed shortfall.
#[derive(Debug, Clone)]
pub struct DisputeCase {
    pub claimant: PartyId,
    pub session: SessionId,
    pub acceptance: SignedMessage,
    pub certificates: Vec<SignedMessage>,
    pub outcome: Phase,
    pub claimed_shortfall: Value,
}

/// The regulator's finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjudication {
    pub culprit: Option<PartyId>,
    pub remedy: Option<Remedy>,
    pub rationale: VerdictRationale,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdjudicationError {
    #[error("case inadmissible: no verifying certificate evidence")]
    Inadmissible,
}

/// Decides a dispute from certificates plus both bank ledgers. Pure:
/// same case and ledgers, same verdict.
///
/// A trigger certificate with no matching debit convicts the payer
/// bank; a debit that was received but never credited convicts the
/// payee bank; ledgers showing correct completion clear everyone.
pub fn adjudicate(
    case: &DisputeCase,
    payer_bank: &BankLedger,
    payee_bank: &BankLedger,
    orders: &BTreeMap<OrderId, TransferOrder>,
    dir: &KeyDirectory,
) -> Result<Adjudication, AdjudicationError> {
    if !case.acceptance.verify(dir) {
        return Err(AdjudicationError::Inadmissible);
    }
    let acceptance_hash = case.acceptance.content_hash();
    let evidence_ok = case.certificates.iter().any(|cert| {
        if !cert.verify(dir) {
            return false;
        }
        match &cert.body {
            MessageBody::Certificate { reference, .. } => *reference == acceptance_hash,
            // Bank-endorsed chain messages embed the same terms; the
            // session binding is checked by kind and session id.
            MessageBody::RebalanceTerms(_) => {
                matches!(cert.kind, MessageKind::MA1I1BA1 | MessageKind::MA1I1BA1BI1)
                    && cert.session == case.session
            }
            _ => false,
        }
    });
    if !evidence_ok {
        return Err(AdjudicationError::Inadmissible);
    }

    let order = orders.values().find(|o| o.reference == acceptance_hash);
    let remedy_for = |debtor: &BankLedger| {
        if case.claimed_shortfall.is_zero() {
            None
        } else {
            Some(Remedy {
                debtor_bank: debtor.bank.clone(),
                creditor: case.claimant.clone(),
                amount: case.claimed_shortfall,
            })
        }
    };

    let (debited, received, credited) = match order {
        Some(order) => (
            payer_bank.journal_has(order.id, JournalAction::Debited),
            payee_bank.journal_has(order.id, JournalAction::ReceivedIntoSuspense),
            payee_bank.journal_has(order.id, JournalAction::Credited),
        ),
        // Certificates exist but the rail never saw an order: the
        // payer bank certified out of thin air.
        None => (false, false, false),
    };

    if credited {
        return Ok(Adjudication {
            culprit: None,
            remedy: None,
            rationale: VerdictRationale::CompletedCorrectly,
        });
    }
    if !debited || !received {
        return Ok(Adjudication {
            culprit: Some(payer_bank.bank.clone()),
            remedy: remedy_for(payer_bank),
            rationale: VerdictRationale::ConfirmedWithoutExecuting,
        });
    }
    Ok(Adjudication {
        culprit: Some(payee_bank.bank.clone()),
        remedy: remedy_for(payee_bank),
        rationale: VerdictRationale::ReceivedWithoutCrediting,
    })
}

/// Executes a remedy: draws first on value suspended for the order,
/// then on the culprit's equity, and credits the wronged party's
/// account at whichever bank holds it. Nothing is minted.
pub fn execute_remedy(
    remedy: &Remedy,
    order: Option<OrderId>,
    payer_bank: &mut BankLedger,
    payee_bank: &mut BankLedger,
    now: Tick,
) -> Result<(), BankError> {
    let mut needed = remedy.amount.amount();

    {
        let debtor = if payer_bank.bank == remedy.debtor_bank {
            &mut *payer_bank
        } else {
            &mut *payee_bank
        };
        let mut drawn_from_suspense = 0;
        if let Some(order_id) = order {
            if let Some(suspended) = debtor.suspense.get_mut(&order_id) {
                drawn_from_suspense = (*suspended).min(needed);
                *suspended -= drawn_from_suspense;
                if *suspended == 0 {
                    debtor.suspense.remove(&order_id);
                }
            }
        }
        let from_equity = needed - drawn_from_suspense;
        if debtor.equity < from_equity {
            return Err(BankError::InsufficientFiat {
                have: debtor.equity,
                need: from_equity,
            });
        }
        debtor.equity -= from_equity;
        debtor.record(
            order.unwrap_or(OrderId(0)),
            JournalAction::RemedyPaid,
            now,
            needed,
        );
        needed = 0;
    }
    let _ = needed;

    let holder = if payer_bank.has_account(&remedy.creditor) {
        &mut *payer_bank
    } else if payee_bank.has_account(&remedy.creditor) {
        &mut *payee_bank
    } else {
        return Err(BankError::UnknownCustomer(remedy.creditor.clone()));
    };
    *holder
        .accounts
        .get_mut(&remedy.creditor)
        .expect("checked above") += remedy.amount.amount();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::ChannelId;
    use crate::testutil::TestBench;

    fn order_for(bench: &TestBench, m_a1i1: &SignedMessage) -> TransferOrder {
        TransferOrder {
            id: OrderId(1),
            session: SessionId(1),
            channel: ChannelId(1),
            from: bench.alice.clone(),
            to: bench.ingrid.clone(),
            amount: Value::fiat(10),
            reference: m_a1i1.content_hash(),
            triggered_at: Tick(8),
            irreversible_after: Ticks(8),
            mode: TransferMode::RequestToPay,
        }
    }

    fn acceptance(bench: &TestBench) -> SignedMessage {
        let m_a1 = SignedMessage::unsigned(
            MessageKind::MA1,
            SessionId(1),
            ChannelId(1),
            MessageBody::RebalanceTerms(bench.default_terms()),
        )
        .unwrap()
        .signed_by(&bench.keys[&bench.alice])
        .unwrap();
        SignedMessage::countersigned(&m_a1, &bench.dir)
            .unwrap()
            .signed_by(&bench.keys[&bench.ingrid])
            .unwrap()
    }

    fn registered(bench: &TestBench) -> BTreeSet<PartyId> {
        [bench.bank_a.clone(), bench.bank_i.clone()]
            .into_iter()
            .collect()
    }

    #[test]
    fn honest_bank_debits_certifies_and_schedules_delivery() {
        let bench = TestBench::new();
        let m_a1i1 = acceptance(&bench);
        let order = order_for(&bench, &m_a1i1);
        let mut bank = BankLedger::new(bench.bank_a.clone(), BankBehavior::Honest, 100);
        bank.open_account(bench.alice.clone(), 100);

        let events = process_order(
            &mut bank,
            &bench.keys[&bench.bank_a],
            &order,
            &m_a1i1,
            &registered(&bench),
            &bench.dir,
            Tick(8),
        )
        .unwrap();
        assert_eq!(bank.account_balance(&bench.alice), Some(Value::fiat(90)));
        assert!(bank.journal_has(OrderId(1), JournalAction::Debited));
        assert!(matches!(&events[0], RailEvent::Cert { message, at } if message.kind == MessageKind::Cert1 && *at == Tick(8)));
        assert!(matches!(&events[1], RailEvent::Delivery { at, .. } if *at == Tick(13)));
    }

    #[test]
    fn confirm_no_execute_certifies_without_debit() {
        let bench = TestBench::new();
        let m_a1i1 = acceptance(&bench);
        let order = order_for(&bench, &m_a1i1);
        let mut bank = BankLedger::new(bench.bank_a.clone(), BankBehavior::ConfirmNoExecute, 100);
        bank.open_account(bench.alice.clone(), 100);

        let events = process_order(
            &mut bank,
            &bench.keys[&bench.bank_a],
            &order,
            &m_a1i1,
            &registered(&bench),
            &bench.dir,
            Tick(8),
        )
        .unwrap();
        assert_eq!(events.len(), 1);
        assert!(matches!(&events[0], RailEvent::Cert { .. }));
        assert_eq!(bank.account_balance(&bench.alice), Some(Value::fiat(100)));
        assert!(!bank.journal_has(OrderId(1), JournalAction::Debited));
    }

    #[test]
    fn insufficient_fiat_blocks_certificate() {
        let bench = TestBench::new();
        let m_a1i1 = acceptance(&bench);
        let order = order_for(&bench, &m_a1i1);
        let mut bank = BankLedger::new(bench.bank_a.clone(), BankBehavior::Honest, 100);
        bank.open_account(bench.alice.clone(), 5);

        let err = process_order(
            &mut bank,
            &bench.keys[&bench.bank_a],
            &order,
            &m_a1i1,
            &registered(&bench),
            &bench.dir,
            Tick(8),
        )
        .unwrap_err();
        assert_eq!(err, BankError::InsufficientFiat { have: 5, need: 10 });
    }

    #[test]
    fn forged_acceptance_is_ignored() {
        let bench = TestBench::new();
        let mut m_a1i1 = acceptance(&bench);
        m_a1i1.signatures[1].bytes[0] ^= 1;
        let order = order_for(&bench, &m_a1i1);
        let mut bank = BankLedger::new(bench.bank_a.clone(), BankBehavior::Honest, 100);
        bank.open_account(bench.alice.clone(), 100);

        let err = process_order(
            &mut bank,
            &bench.keys[&bench.bank_a],
            &order,
            &m_a1i1,
            &registered(&bench),
            &bench.dir,
            Tick(8),
        )
        .unwrap_err();
        assert!(matches!(err, BankError::InvalidOrder(_)));
    }

    #[test]
    fn receive_and_credit_emits_receipt_certificate() {
        let bench = TestBench::new();
        let m_a1i1 = acceptance(&bench);
        let order = order_for(&bench, &m_a1i1);
        let mut bank = BankLedger::new(bench.bank_i.clone(), BankBehavior::Honest, 100);
        bank.open_account(bench.ingrid.clone(), 50);

        let events = receive_delivery(&mut bank, &order, Tick(13)).unwrap();
        assert!(matches!(&events[0], RailEvent::Credit { at, .. } if *at == Tick(13)));
        assert_eq!(bank.suspense_total(), 10);

        let events = credit_suspense(&mut bank, &bench.keys[&bench.bank_i], &order, Tick(13))
            .unwrap();
        assert_eq!(bank.account_balance(&bench.ingrid), Some(Value::fiat(60)));
        assert_eq!(bank.suspense_total(), 0);
        assert!(matches!(&events[0], RailEvent::Cert { message, .. } if message.kind == MessageKind::Cert2));
    }

    #[test]
    fn receive_no_credit_leaves_value_in_suspense() {
        let bench = TestBench::new();
        let m_a1i1 = acceptance(&bench);
        let order = order_for(&bench, &m_a1i1);
        let mut bank = BankLedger::new(bench.bank_i.clone(), BankBehavior::ReceiveNoCredit, 100);
        bank.open_account(bench.ingrid.clone(), 50);

        let events = receive_delivery(&mut bank, &order, Tick(13)).unwrap();
        assert!(events.is_empty());
        assert_eq!(bank.suspense_total(), 10);
        assert!(bank.journal_has(OrderId(1), JournalAction::ReceivedIntoSuspense));
        assert!(!bank.journal_has(OrderId(1), JournalAction::Credited));
    }

    #[test]
    fn delivery_for_closed_account_is_regulator_visible() {
        let bench = TestBench::new();
        let m_a1i1 = acceptance(&bench);
        let order = order_for(&bench, &m_a1i1);
        let mut bank = BankLedger::new(bench.bank_i.clone(), BankBehavior::Honest, 100);
        // No account for the payee.
        let err = receive_delivery(&mut bank, &order, Tick(13)).unwrap_err();
        assert_eq!(err, BankError::UnknownCustomer(bench.ingrid.clone()));
        // Value is parked in suspense, visible to the regulator.
        assert_eq!(bank.suspense_total(), 10);
        assert!(bank.journal_has(OrderId(1), JournalAction::ReceivedIntoSuspense));
    }

    fn case_for(
        bench: &TestBench,
        m_a1i1: &SignedMessage,
        cert: SignedMessage,
        shortfall: u64,
    ) -> DisputeCase {
        DisputeCase {
            claimant: bench.ingrid.clone(),
            session: SessionId(1),
            acceptance: m_a1i1.clone(),
            certificates: vec![cert],
            outcome: Phase::Settled,
            claimed_shortfall: Value::fiat(shortfall),
        }
    }

    #[test]
    fn adjudicate_convicts_confirming_bank_without_debit() {
        let bench = TestBench::new();
        let m_a1i1 = acceptance(&bench);
        let order = order_for(&bench, &m_a1i1);
        let mut bank_a = BankLedger::new(bench.bank_a.clone(), BankBehavior::ConfirmNoExecute, 100);
        bank_a.open_account(bench.alice.clone(), 100);
        let mut bank_i = BankLedger::new(bench.bank_i.clone(), BankBehavior::Honest, 100);
        bank_i.open_account(bench.ingrid.clone(), 50);

        let events = process_order(
            &mut bank_a,
            &bench.keys[&bench.bank_a],
            &order,
            &m_a1i1,
            &registered(&bench),
            &bench.dir,
            Tick(8),
        )
        .unwrap();
        let cert = match &events[0] {
            RailEvent::Cert { message, .. } => message.clone(),
            other => panic!("expected certificate, got {other:?}"),
        };

        let mut orders = BTreeMap::new();
        orders.insert(order.id, order.clone());
        let verdict = adjudicate(
            &case_for(&bench, &m_a1i1, cert, 10),
            &bank_a,
            &bank_i,
            &orders,
            &bench.dir,
        )
        .unwrap();
        assert_eq!(verdict.culprit, Some(bench.bank_a.clone()));
        assert_eq!(verdict.rationale, VerdictRationale::ConfirmedWithoutExecuting);
    }

    #[test]
    fn adjudicate_convicts_receiving_bank_that_never_credits() {
        let bench = TestBench::new();
        let m_a1i1 = acceptance(&bench);
        let order = order_for(&bench, &m_a1i1);
        let mut bank_a = BankLedger::new(bench.bank_a.clone(), BankBehavior::Honest, 100);
        bank_a.open_account(bench.alice.clone(), 100);
        let mut bank_i = BankLedger::new(bench.bank_i.clone(), BankBehavior::ReceiveNoCredit, 100);
        bank_i.open_account(bench.ingrid.clone(), 50);

        let events = process_order(
            &mut bank_a,
            &bench.keys[&bench.bank_a],
            &order,
            &m_a1i1,
            &registered(&bench),
            &bench.dir,
            Tick(8),
        )
        .unwrap();
        let cert = match &events[0] {
            RailEvent::Cert { message, .. } => message.clone(),
            other => panic!("expected certificate, got {other:?}"),
        };
        receive_delivery(&mut bank_i, &order, Tick(13)).unwrap();

        let mut orders = BTreeMap::new();
        orders.insert(order.id, order.clone());
        let verdict = adjudicate(
            &case_for(&bench, &m_a1i1, cert, 10),
            &bank_a,
            &bank_i,
            &orders,
            &bench.dir,
        )
        .unwrap();
        assert_eq!(verdict.culprit, Some(bench.bank_i.clone()));
        assert_eq!(verdict.rationale, VerdictRationale::ReceivedWithoutCrediting);
        // The remedy restores the claimant from suspense plus equity.
        let remedy = verdict.remedy.unwrap();
        let before = bank_a.total() + bank_i.total();
        execute_remedy(&remedy, Some(order.id), &mut bank_a, &mut bank_i, Tick(20)).unwrap();
        assert_eq!(bank_i.account_balance(&bench.ingrid), Some(Value::fiat(60)));
        assert_eq!(bank_i.suspense_total(), 0);
        assert_eq!(bank_a.total() + bank_i.total(), before);
    }

    #[test]
    fn adjudicate_clears_banks_on_completed_transfer() {
        let bench = TestBench::new();
        let m_a1i1 = acceptance(&bench);
        let order = order_for(&bench, &m_a1i1);
        let mut bank_a = BankLedger::new(bench.bank_a.clone(), BankBehavior::Honest, 100);
        bank_a.open_account(bench.alice.clone(), 100);
        let mut bank_i = BankLedger::new(bench.bank_i.clone(), BankBehavior::Honest, 100);
        bank_i.open_account(bench.ingrid.clone(), 50);

        let events = process_order(
            &mut bank_a,
            &bench.keys[&bench.bank_a],
            &order,
            &m_a1i1,
            &registered(&bench),
            &bench.dir,
            Tick(8),
        )
        .unwrap();
        let cert = match &events[0] {
            RailEvent::Cert { message, .. } => message.clone(),
            other => panic!("expected certificate, got {other:?}"),
        };
        receive_delivery(&mut bank_i, &order, Tick(13)).unwrap();
        credit_suspense(&mut bank_i, &bench.keys[&bench.bank_i], &order, Tick(13)).unwrap();

        let mut orders = BTreeMap::new();
        orders.insert(order.id, order.clone());
        // Frivolous claim: everything completed.
        let verdict = adjudicate(
            &case_for(&bench, &m_a1i1, cert, 10),
            &bank_a,
            &bank_i,
            &orders,
            &bench.dir,
        )
        .unwrap();
        assert_eq!(verdict.culprit, None);
        assert_eq!(verdict.remedy, None);
        assert_eq!(verdict.rationale, VerdictRationale::CompletedCorrectly);
    }

    #[test]
    fn request_to_pay_becomes_irreversible() {
        let bench = TestBench::new();
        let order = order_for(&bench, &acceptance(&bench));
        assert!(order.reversal_allowed(Tick(8)));
        assert!(order.reversal_allowed(Tick(15)));
        assert!(!order.reversal_allowed(Tick(16)));

        let mut push = order;
        push.mode = TransferMode::Push;
        assert!(push.reversal_allowed(Tick(100)));
    }

    #[test]
    fn tampered_chain_refused_by_relay() {
        let bench = TestBench::new();
        let m_a1i1 = acceptance(&bench);
        let mut chain = SignedMessage::countersigned(&m_a1i1, &bench.dir)
            .unwrap()
            .signed_by(&bench.keys[&bench.bank_a])
            .unwrap();
        chain.signatures[2].bytes[3] ^= 0x40;
        let mut bank = BankLedger::new(bench.bank_i.clone(), BankBehavior::Honest, 100);
        let err = relay_alternative2(
            &mut bank,
            &bench.keys[&bench.bank_i],
            &chain,
            &bench.dir,
            Tick(10),
        )
        .unwrap_err();
        assert!(matches!(err, BankError::InvalidOrder(_)));
    }

    #[test]
    fn silent_bank_does_not_relay() {
        let bench = TestBench::new();
        let m_a1i1 = acceptance(&bench);
        let chain = SignedMessage::countersigned(&m_a1i1, &bench.dir)
            .unwrap()
            .signed_by(&bench.keys[&bench.bank_a])
            .unwrap();
        let mut bank = BankLedger::new(bench.bank_i.clone(), BankBehavior::Silent, 100);
        let relayed = relay_alternative2(
            &mut bank,
            &bench.keys[&bench.bank_i],
            &chain,
            &bench.dir,
            Tick(10),
        )
        .unwrap();
        assert!(relayed.is_none());
    }

    #[test]
    fn inadmissible_without_verifying_certificates() {
        let bench = TestBench::new();
        let m_a1i1 = acceptance(&bench);
        let mut forged = build_cert(
            &bench.keys[&bench.bank_a],
            &order_for(&bench, &m_a1i1),
            MessageKind::Cert1,
            CertAssertion::TransferTriggered,
            Tick(8),
        );
        forged.signatures[0].bytes[0] ^= 1;
        let bank_a = BankLedger::new(bench.bank_a.clone(), BankBehavior::Honest, 100);
        let bank_i = BankLedger::new(bench.bank_i.clone(), BankBehavior::Honest, 100);
        let err = adjudicate(
            &case_for(&bench, &m_a1i1, forged, 10),
            &bank_a,
            &bank_i,
            &BTreeMap::new(),
            &bench.dir,
        )
        .unwrap_err();
        assert_eq!(err, AdjudicationError::Inadmissible);
    }
}
