//! The authenticated message envelope shared by every protocol layer.
//!
//! A [`SignedMessage`] couples a kind, a session and channel reference,
//! a kind-specific body, and an ordered list of signatures. Each kind
//! declares its required signer sequence; signature `i` is computed
//! over the canonical serialization of the message as it stood when
//! signer `i` signed it (stage kind, body, and signatures `0..i`), so
//! every countersignature commits to everything before it.
//!
//! The re-balancing negotiation is a four-stage chain
//! `M_A1 -> M_A1I1 -> M_A1I1BA1 -> M_A1I1BA1BI1`: the payer proposes,
//! the payee countersigns, then (alternative 2 only) each bank appends
//! its own signature.

use std::collections::BTreeSet;
use std::fmt;

use crate::crypto::{ContentHash, KeyDirectory, KeyPair, Signature};
use crate::party::PartyId;
use crate::time::{Tick, Ticks};
use crate::value::{Unit, Value};
use crate::wire::{Decoder, Encoder, WireDecode, WireEncode, FRAME_MAGIC};
use crate::wire::WireError;
use crate::channel::Lock;

use serde::{Deserialize, Serialize};

/// Identifies one re-balancing session. `SessionId::NONE` marks
/// messages that are channel-scoped rather than session-scoped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub u64);

impl SessionId {
    pub const NONE: SessionId = SessionId(0);
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Identifies a channel within a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelId(pub u64);

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// Every message kind in the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    /// Payer's re-balancing proposal.
    MA1,
    /// Payee's countersigned acceptance of `MA1`.
    MA1I1,
    /// Payer bank's endorsement of `MA1I1` (alternative 2).
    MA1I1BA1,
    /// Payee bank's endorsement completing the chain (alternative 2).
    MA1I1BA1BI1,
    /// Bank certificate: the external transfer has been triggered.
    Cert1,
    /// Bank certificate: the transferred value has been received.
    Cert2,
    /// Countersigned channel state update or rule change.
    ChannelUpdate,
    /// Claim handed to the regulator.
    Dispute,
    /// Regulator's adjudication.
    Verdict,
}

impl MessageKind {
    pub fn name(&self) -> &'static str {
        match self {
            MessageKind::MA1 => "M_A1",
            MessageKind::MA1I1 => "M_A1I1",
            MessageKind::MA1I1BA1 => "M_A1I1BA1",
            MessageKind::MA1I1BA1BI1 => "M_A1I1BA1BI1",
            MessageKind::Cert1 => "CERT1",
            MessageKind::Cert2 => "CERT2",
            MessageKind::ChannelUpdate => "CHANNEL_UPDATE",
            MessageKind::Dispute => "DISPUTE",
            MessageKind::Verdict => "VERDICT",
        }
    }

    fn wire_tag(&self) -> u8 {
        match self {
            MessageKind::MA1 => 1,
            MessageKind::MA1I1 => 2,
            MessageKind::MA1I1BA1 => 3,
            MessageKind::MA1I1BA1BI1 => 4,
            MessageKind::Cert1 => 5,
            MessageKind::Cert2 => 6,
            MessageKind::ChannelUpdate => 7,
            MessageKind::Dispute => 8,
            MessageKind::Verdict => 9,
        }
    }

    fn from_wire_tag(tag: u8) -> Result<Self, WireError> {
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
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// The four successive stages of the re-balancing negotiation chain.
const REBALANCE_CHAIN: [MessageKind; 4] = [
    MessageKind::MA1,
    MessageKind::MA1I1,
    MessageKind::MA1I1BA1,
    MessageKind::MA1I1BA1BI1,
];

fn chain_index(kind: MessageKind) -> Option<usize> {
    REBALANCE_CHAIN.iter().position(|k| *k == kind)
}

/// Enabled trust model for the external transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// Both parties trust the banking framework; the trigger
    /// certificate alone releases the locks.
    Alt1Design1,
    /// Both parties trust the banking framework; the trigger
    /// certificate arms a second, receipt-gated locking stage.
    Alt1Design2,
    /// Each party trusts her own bank only; the four-party signature
    /// chain plays the settling role.
    Alt2,
}

impl Alternative {
    pub fn name(&self) -> &'static str {
        match self {
            Alternative::Alt1Design1 => "alt1_design1",
            Alternative::Alt1Design2 => "alt1_design2",
            Alternative::Alt2 => "alt2",
        }
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// How the external rail moves the money.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    /// Ordinary payer-initiated credit transfer.
    Push,
    /// Payee-initiated trigger; reversal is refused once the
    /// irreversibility window has elapsed.
    RequestToPay,
}

/// Conditions of the external transfer as fixed in the proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalMethod {
    pub mode: TransferMode,
    /// After this span the rail refuses reversal (request-to-pay).
    pub irreversible_after: Ticks,
}

/// Protocol deadlines agreed in the proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deadlines {
    /// How long the locked stage may wait for a settling message.
    pub initiation_timeout: Ticks,
    /// Expected interbank delivery time once triggered.
    pub actual_transfer: Ticks,
    /// Receipt deadline for the second locking stage.
    pub transfer_max: Ticks,
}

/// Where a party's collateral goes when a failure path assigns it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollateralRoute {
    /// Collateral returns to its owner.
    Returned,
    /// Collateral is transferred to the counterparty as compensation.
    ToCounterparty,
}

/// Agreed routing of collateral on the failure paths. Appendix-style
/// punishment is not hard-coded: these are session parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispositionPolicy {
    /// Payer collateral when the session reverts after acceptance.
    pub payer_collateral_on_revert: CollateralRoute,
    /// Payee collateral when the receipt deadline expires with a valid
    /// trigger certificate.
    pub payee_collateral_on_compensation: CollateralRoute,
}

impl Default for DispositionPolicy {
    fn default() -> Self {
        DispositionPolicy {
            payer_collateral_on_revert: CollateralRoute::ToCounterparty,
            payee_collateral_on_compensation: CollateralRoute::ToCounterparty,
        }
    }
}

/// Everything the payer proposes in `M_A1`: the parties, the value
/// equivalent, collaterals, trust model, method and deadlines of the
/// external transfer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTerms {
    pub payer: PartyId,
    pub payee: PartyId,
    pub payer_bank: PartyId,
    pub payee_bank: PartyId,
    /// Channel-unit value to re-balance toward the payer.
    pub amount: Value,
    pub collateral_payer: Value,
    pub collateral_payee: Value,
    pub alternative: Alternative,
    /// Alternative 2 only: settle via a receipt certificate instead of
    /// the four-party chain message.
    pub receipt_unlock: bool,
    pub method: ExternalMethod,
    pub deadlines: Deadlines,
    pub policy: DispositionPolicy,
}

/// What a bank certificate asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertAssertion {
    TransferTriggered,
    ReceiptConfirmed,
}

/// Rationale tag attached to a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictRationale {
    /// Ledgers show the transfer completed correctly.
    CompletedCorrectly,
    /// The payer bank certified the trigger but never debited.
    ConfirmedWithoutExecuting,
    /// The payee bank received the value but never credited it.
    ReceivedWithoutCrediting,
}

/// Regulator-ordered compensation drawn from the culprit bank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Remedy {
    pub debtor_bank: PartyId,
    pub creditor: PartyId,
    pub amount: Value,
}

/// Kind-specific payloads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageBody {
    /// Body of the `M_A1..M_A1I1BA1BI1` chain.
    RebalanceTerms(SessionTerms),
    /// Body of `CERT1`/`CERT2`.
    Certificate {
        issuer: PartyId,
        /// Hash of the countersigned acceptance the certificate is about.
        reference: ContentHash,
        assertion: CertAssertion,
        /// Rail-level order this certificate documents.
        order: u64,
        issued_at: Tick,
    },
    /// Body of `CHANNEL_UPDATE`: proposed next channel state.
    BalanceUpdate {
        proposer: PartyId,
        counterparty: PartyId,
        seq: u64,
        balance_a: Value,
        balance_i: Value,
        locks: Vec<Lock>,
    },
    /// Body of `CHANNEL_UPDATE`: register certificate sources for an
    /// upcoming re-balancing procedure.
    SourceRegistration {
        proposer: PartyId,
        counterparty: PartyId,
        sources: BTreeSet<PartyId>,
    },
    /// Body of `DISPUTE`.
    Dispute {
        claimant: PartyId,
        evidence: Vec<SignedMessage>,
    },
    /// Body of `VERDICT`.
    Verdict {
        regulator: PartyId,
        culprit: Option<PartyId>,
        remedy: Option<Remedy>,
        rationale: VerdictRationale,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MessageError {
    #[error("body does not match kind {0}")]
    KindBodyMismatch(MessageKind),
    #[error("wrong signer: expected {expected}, got {got}")]
    WrongSigner { expected: PartyId, got: PartyId },
    #[error("message already carries all required signatures")]
    AlreadyComplete,
    #[error("kind {0} has no countersigned successor")]
    NotCountersignable(MessageKind),
    #[error("prior message does not verify")]
    PriorInvalid,
}

/// An authenticated protocol payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedMessage {
    pub kind: MessageKind,
    pub session: SessionId,
    pub channel: ChannelId,
    pub body: MessageBody,
    pub signatures: Vec<Signature>,
}

impl SignedMessage {
    /// Builds an unsigned message, validating the kind/body pairing.
    pub fn unsigned(
        kind: MessageKind,
        session: SessionId,
        channel: ChannelId,
        body: MessageBody,
    ) -> Result<Self, MessageError> {
        let ok = matches!(
            (&kind, &body),
            (
                MessageKind::MA1
                    | MessageKind::MA1I1
                    | MessageKind::MA1I1BA1
                    | MessageKind::MA1I1BA1BI1,
                MessageBody::RebalanceTerms(_)
            ) | (
                MessageKind::Cert1 | MessageKind::Cert2,
                MessageBody::Certificate { .. }
            ) | (
                MessageKind::ChannelUpdate,
                MessageBody::BalanceUpdate { .. } | MessageBody::SourceRegistration { .. }
            ) | (MessageKind::Dispute, MessageBody::Dispute { .. })
                | (MessageKind::Verdict, MessageBody::Verdict { .. })
        );
        if !ok {
            return Err(MessageError::KindBodyMismatch(kind));
        }
        if let (MessageKind::Cert1, MessageBody::Certificate { assertion, .. }) = (&kind, &body) {
            if *assertion != CertAssertion::TransferTriggered {
                return Err(MessageError::KindBodyMismatch(kind));
            }
        }
        if let (MessageKind::Cert2, MessageBody::Certificate { assertion, .. }) = (&kind, &body) {
            if *assertion != CertAssertion::ReceiptConfirmed {
                return Err(MessageError::KindBodyMismatch(kind));
            }
        }
        Ok(SignedMessage {
            kind,
            session,
            channel,
            body,
            signatures: Vec::new(),
        })
    }

    /// The full signer sequence this message requires, in order.
    pub fn required_signers(&self) -> Vec<PartyId> {
        match &self.body {
            MessageBody::RebalanceTerms(terms) => {
                let all = [
                    terms.payer.clone(),
                    terms.payee.clone(),
                    terms.payer_bank.clone(),
                    terms.payee_bank.clone(),
                ];
                let n = chain_index(self.kind).map(|i| i + 1).unwrap_or(0);
                all.into_iter().take(n).collect()
            }
            MessageBody::Certificate { issuer, .. } => vec![issuer.clone()],
            MessageBody::BalanceUpdate {
                proposer,
                counterparty,
                ..
            }
            | MessageBody::SourceRegistration {
                proposer,
                counterparty,
                ..
            } => vec![proposer.clone(), counterparty.clone()],
            MessageBody::Dispute { claimant, .. } => vec![claimant.clone()],
            MessageBody::Verdict { regulator, .. } => vec![regulator.clone()],
        }
    }

    /// The party expected to sign next, if the sequence is incomplete.
    pub fn next_signer(&self) -> Option<PartyId> {
        self.required_signers()
            .into_iter()
            .nth(self.signatures.len())
    }

    /// The kind this message had when signature `index` was applied.
    /// For the re-balancing chain the kind advances with each stage;
    /// for every other kind it is constant.
    fn stage_kind(&self, index: usize) -> MessageKind {
        match chain_index(self.kind) {
            Some(_) => REBALANCE_CHAIN[index.min(REBALANCE_CHAIN.len() - 1)],
            None => self.kind,
        }
    }

    /// Canonical bytes signature `upto` is computed over: the frame
    /// with the stage kind and the signatures preceding it.
    pub fn signing_payload(&self, upto: usize) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_raw(&FRAME_MAGIC);
        enc.put_u8(self.stage_kind(upto).wire_tag());
        enc.put_u64(self.session.0);
        enc.put_u64(self.channel.0);
        self.body.encode(&mut enc);
        let prior = &self.signatures[..upto.min(self.signatures.len())];
        enc.put_u32(prior.len() as u32);
        for sig in prior {
            sig.encode(&mut enc);
        }
        enc.finish()
    }

    /// Appends the caller's signature. Fails unless the caller is the
    /// next required signer. The input is unchanged on error.
    pub fn signed_by(mut self, key: &KeyPair) -> Result<Self, MessageError> {
        let required = self.required_signers();
        let index = self.signatures.len();
        let expected = match required.get(index) {
            Some(p) => p.clone(),
            None => return Err(MessageError::AlreadyComplete),
        };
        if expected != *key.party() {
            return Err(MessageError::WrongSigner {
                expected,
                got: key.party().clone(),
            });
        }
        let payload = self.signing_payload(index);
        self.signatures.push(key.sign(&payload));
        Ok(self)
    }

    /// Advances a fully signed chain message to its countersigned
    /// successor, carrying body and signatures forward. The returned
    /// message awaits the next signer.
    pub fn countersigned(prior: &SignedMessage, dir: &KeyDirectory) -> Result<Self, MessageError> {
        let idx = chain_index(prior.kind).ok_or(MessageError::NotCountersignable(prior.kind))?;
        if idx + 1 >= REBALANCE_CHAIN.len() {
            return Err(MessageError::NotCountersignable(prior.kind));
        }
        if !prior.verify(dir) {
            return Err(MessageError::PriorInvalid);
        }
        let mut next = prior.clone();
        next.kind = REBALANCE_CHAIN[idx + 1];
        Ok(next)
    }

    pub fn fully_signed(&self) -> bool {
        self.signatures.len() == self.required_signers().len()
    }

    /// True iff every required signature is present and verifies.
    /// Total: never fails, returns `false` on any defect.
    pub fn verify(&self, dir: &KeyDirectory) -> bool {
        let required = self.required_signers();
        if self.signatures.len() != required.len() || required.is_empty() {
            return false;
        }
        self.verify_prefix(dir)
    }

    /// True iff the signatures present so far (possibly fewer than
    /// required) all verify against their expected signers.
    pub fn verify_prefix(&self, dir: &KeyDirectory) -> bool {
        let required = self.required_signers();
        if self.signatures.len() > required.len() {
            return false;
        }
        self.signatures.iter().enumerate().all(|(i, sig)| {
            let payload = self.signing_payload(i);
            dir.verify(&required[i], &payload, sig)
        })
    }

    /// Canonical serialization of the complete message.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    pub fn content_hash(&self) -> ContentHash {
        ContentHash::of(&self.canonical_bytes())
    }
}

// ---------------------------------------------------------------------------
// Wire encoding
// ---------------------------------------------------------------------------

impl WireEncode for PartyId {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_str(self.as_str());
    }
}

impl WireDecode for PartyId {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(PartyId::new(dec.take_str()?))
    }
}

impl WireEncode for Value {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u64(self.amount());
        enc.put_u8(match self.unit() {
            Unit::Channel => 0,
            Unit::Fiat => 1,
        });
    }
}

impl WireDecode for Value {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        let amount = dec.take_u64()?;
        let unit = match dec.take_u8()? {
            0 => Unit::Channel,
            1 => Unit::Fiat,
            tag => return Err(WireError::InvalidTag { what: "unit", tag }),
        };
        Ok(Value::new(amount, unit))
    }
}

impl WireEncode for Tick {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u64(self.0);
    }
}

impl WireDecode for Tick {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(Tick(dec.take_u64()?))
    }
}

impl WireEncode for Ticks {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u64(self.0);
    }
}

impl WireDecode for Ticks {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(Ticks(dec.take_u64()?))
    }
}

impl WireEncode for ContentHash {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_raw(&self.0);
    }
}

impl WireDecode for ContentHash {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(ContentHash(dec.take_array::<32>()?))
    }
}

impl WireEncode for Signature {
    fn encode(&self, enc: &mut Encoder) {
        self.signer.encode(enc);
        enc.put_raw(&self.bytes);
    }
}

impl WireDecode for Signature {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(Signature {
            signer: PartyId::decode(dec)?,
            bytes: dec.take_array::<32>()?,
        })
    }
}

impl WireEncode for Alternative {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u8(match self {
            Alternative::Alt1Design1 => 0,
            Alternative::Alt1Design2 => 1,
            Alternative::Alt2 => 2,
        });
    }
}

impl WireDecode for Alternative {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(match dec.take_u8()? {
            0 => Alternative::Alt1Design1,
            1 => Alternative::Alt1Design2,
            2 => Alternative::Alt2,
            tag => {
                return Err(WireError::InvalidTag {
                    what: "alternative",
                    tag,
                })
            }
        })
    }
}

impl WireEncode for TransferMode {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u8(match self {
            TransferMode::Push => 0,
            TransferMode::RequestToPay => 1,
        });
    }
}

impl WireDecode for TransferMode {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(match dec.take_u8()? {
            0 => TransferMode::Push,
            1 => TransferMode::RequestToPay,
            tag => return Err(WireError::InvalidTag { what: "mode", tag }),
        })
    }
}

impl WireEncode for CollateralRoute {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u8(match self {
            CollateralRoute::Returned => 0,
            CollateralRoute::ToCounterparty => 1,
        });
    }
}

impl WireDecode for CollateralRoute {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(match dec.take_u8()? {
            0 => CollateralRoute::Returned,
            1 => CollateralRoute::ToCounterparty,
            tag => return Err(WireError::InvalidTag { what: "route", tag }),
        })
    }
}

impl WireEncode for SessionTerms {
    fn encode(&self, enc: &mut Encoder) {
        self.payer.encode(enc);
        self.payee.encode(enc);
        self.payer_bank.encode(enc);
        self.payee_bank.encode(enc);
        self.amount.encode(enc);
        self.collateral_payer.encode(enc);
        self.collateral_payee.encode(enc);
        self.alternative.encode(enc);
        enc.put_bool(self.receipt_unlock);
        self.method.mode.encode(enc);
        self.method.irreversible_after.encode(enc);
        self.deadlines.initiation_timeout.encode(enc);
        self.deadlines.actual_transfer.encode(enc);
        self.deadlines.transfer_max.encode(enc);
        self.policy.payer_collateral_on_revert.encode(enc);
        self.policy.payee_collateral_on_compensation.encode(enc);
    }
}

impl WireDecode for SessionTerms {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(SessionTerms {
            payer: PartyId::decode(dec)?,
            payee: PartyId::decode(dec)?,
            payer_bank: PartyId::decode(dec)?,
            payee_bank: PartyId::decode(dec)?,
            amount: Value::decode(dec)?,
            collateral_payer: Value::decode(dec)?,
            collateral_payee: Value::decode(dec)?,
            alternative: Alternative::decode(dec)?,
            receipt_unlock: dec.take_bool()?,
            method: ExternalMethod {
                mode: TransferMode::decode(dec)?,
                irreversible_after: Ticks::decode(dec)?,
            },
            deadlines: Deadlines {
                initiation_timeout: Ticks::decode(dec)?,
                actual_transfer: Ticks::decode(dec)?,
                transfer_max: Ticks::decode(dec)?,
            },
            policy: DispositionPolicy {
                payer_collateral_on_revert: CollateralRoute::decode(dec)?,
                payee_collateral_on_compensation: CollateralRoute::decode(dec)?,
            },
        })
    }
}

impl WireEncode for CertAssertion {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u8(match self {
            CertAssertion::TransferTriggered => 0,
            CertAssertion::ReceiptConfirmed => 1,
        });
    }
}

impl WireDecode for CertAssertion {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(match dec.take_u8()? {
            0 => CertAssertion::TransferTriggered,
            1 => CertAssertion::ReceiptConfirmed,
            tag => {
                return Err(WireError::InvalidTag {
                    what: "assertion",
                    tag,
                })
            }
        })
    }
}

impl WireEncode for VerdictRationale {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u8(match self {
            VerdictRationale::CompletedCorrectly => 0,
            VerdictRationale::ConfirmedWithoutExecuting => 1,
            VerdictRationale::ReceivedWithoutCrediting => 2,
        });
    }
}

impl WireDecode for VerdictRationale {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(match dec.take_u8()? {
            0 => VerdictRationale::CompletedCorrectly,
            1 => VerdictRationale::ConfirmedWithoutExecuting,
            2 => VerdictRationale::ReceivedWithoutCrediting,
            tag => {
                return Err(WireError::InvalidTag {
                    what: "rationale",
                    tag,
                })
            }
        })
    }
}

impl WireEncode for Remedy {
    fn encode(&self, enc: &mut Encoder) {
        self.debtor_bank.encode(enc);
        self.creditor.encode(enc);
        self.amount.encode(enc);
    }
}

impl WireDecode for Remedy {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(Remedy {
            debtor_bank: PartyId::decode(dec)?,
            creditor: PartyId::decode(dec)?,
            amount: Value::decode(dec)?,
        })
    }
}

impl WireEncode for MessageBody {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            MessageBody::RebalanceTerms(terms) => {
                enc.put_u8(0);
                terms.encode(enc);
            }
            MessageBody::Certificate {
                issuer,
                reference,
                assertion,
                order,
                issued_at,
            } => {
                enc.put_u8(1);
                issuer.encode(enc);
                reference.encode(enc);
                assertion.encode(enc);
                enc.put_u64(*order);
                issued_at.encode(enc);
            }
            MessageBody::BalanceUpdate {
                proposer,
                counterparty,
                seq,
                balance_a,
                balance_i,
                locks,
            } => {
                enc.put_u8(2);
                proposer.encode(enc);
                counterparty.encode(enc);
                enc.put_u64(*seq);
                balance_a.encode(enc);
                balance_i.encode(enc);
                locks.encode(enc);
            }
            MessageBody::SourceRegistration {
                proposer,
                counterparty,
                sources,
            } => {
                enc.put_u8(3);
                proposer.encode(enc);
                counterparty.encode(enc);
                sources.encode(enc);
            }
            MessageBody::Dispute { claimant, evidence } => {
                enc.put_u8(4);
                claimant.encode(enc);
                evidence.encode(enc);
            }
            MessageBody::Verdict {
                regulator,
                culprit,
                remedy,
                rationale,
            } => {
                enc.put_u8(5);
                regulator.encode(enc);
                culprit.encode(enc);
                remedy.encode(enc);
                rationale.encode(enc);
            }
        }
    }
}

impl WireDecode for MessageBody {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(match dec.take_u8()? {
            0 => MessageBody::RebalanceTerms(SessionTerms::decode(dec)?),
            1 => MessageBody::Certificate {
                issuer: PartyId::decode(dec)?,
                reference: ContentHash::decode(dec)?,
                assertion: CertAssertion::decode(dec)?,
                order: dec.take_u64()?,
                issued_at: Tick::decode(dec)?,
            },
            2 => MessageBody::BalanceUpdate {
                proposer: PartyId::decode(dec)?,
                counterparty: PartyId::decode(dec)?,
                seq: dec.take_u64()?,
                balance_a: Value::decode(dec)?,
                balance_i: Value::decode(dec)?,
                locks: Vec::<Lock>::decode(dec)?,
            },
            3 => MessageBody::SourceRegistration {
                proposer: PartyId::decode(dec)?,
                counterparty: PartyId::decode(dec)?,
                sources: BTreeSet::<PartyId>::decode(dec)?,
            },
            4 => MessageBody::Dispute {
                claimant: PartyId::decode(dec)?,
                evidence: Vec::<SignedMessage>::decode(dec)?,
            },
            5 => MessageBody::Verdict {
                regulator: PartyId::decode(dec)?,
                culprit: Option::<PartyId>::decode(dec)?,
                remedy: Option::<Remedy>::decode(dec)?,
                rationale: VerdictRationale::decode(dec)?,
            },
            tag => return Err(WireError::InvalidTag { what: "body", tag }),
        })
    }
}

impl WireEncode for SignedMessage {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_raw(&FRAME_MAGIC);
        enc.put_u8(self.kind.wire_tag());
        enc.put_u64(self.session.0);
        enc.put_u64(self.channel.0);
        self.body.encode(enc);
        self.signatures.encode(enc);
    }
}

impl WireDecode for SignedMessage {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        dec.enter()?;
        let magic = dec.take_array::<3>()?;
        if magic != FRAME_MAGIC {
            return Err(WireError::BadMagic);
        }
        let kind = MessageKind::from_wire_tag(dec.take_u8()?)?;
        let session = SessionId(dec.take_u64()?);
        let channel = ChannelId(dec.take_u64()?);
        let body = MessageBody::decode(dec)?;
        let signatures = Vec::<Signature>::decode(dec)?;
        dec.exit();
        let msg = SignedMessage {
            kind,
            session,
            channel,
            body,
            signatures,
        };
        // Reject structurally impossible kind/body pairings so decoded
        // messages satisfy the same invariants as constructed ones.
        SignedMessage::unsigned(msg.kind, msg.session, msg.channel, msg.body.clone())
            .map_err(|_| WireError::InvalidTag {
                what: "kind/body pairing",
                tag: kind.wire_tag(),
            })?;
        Ok(msg)
    }
}
