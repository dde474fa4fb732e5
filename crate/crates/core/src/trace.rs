//! Replayable audit trace.
//!
//! A run emits one JSON record per line: a header carrying the full
//! scenario, then one event record per processed event with a state
//! snapshot taken after it (`docs/trace-format.md`). Re-running the
//! header's scenario must reproduce the file byte for byte.
//!
//! [`audit`] re-checks every snapshot: channel and fiat conservation,
//! phase-graph legality, sequence monotonicity, that only authorized
//! events mutate state, settlement authorization, the termination
//! bound, and snapshot digests.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::ContentHash;
use crate::rebalance::Phase;
use crate::scenario::ScenarioConfig;

pub const TRACE_FORMAT: &str = "seesaw-trace/1";

#[derive(Debug, thiserror::Error)]
pub enum TraceParseError {
    #[error("line {line}: {err}")]
    Json { line: usize, err: serde_json::Error },
    #[error("trace has no header record")]
    MissingHeader,
    #[error("line {0}: unexpected second header")]
    DuplicateHeader(usize),
    #[error("unsupported trace format {0:?}")]
    UnsupportedFormat(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockSnap {
    pub id: u64,
    pub owner: String,
    pub amount: u64,
    pub timeout: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSnap {
    pub seq: u64,
    pub balance_a: u64,
    pub balance_i: u64,
    pub locks: Vec<LockSnap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSnap {
    pub bank: String,
    pub accounts: BTreeMap<String, u64>,
    pub suspense: u64,
    pub equity: u64,
}

/// World state after an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub channel: ChannelSnap,
    pub banks: Vec<BankSnap>,
    /// Value moving between banks.
    pub in_flight: u64,
    /// Session phase name, if a session exists.
    pub session: Option<String>,
    pub anchor: String,
}

impl Snapshot {
    /// Canonical digest of the snapshot (hash of its JSON encoding;
    /// struct field order and sorted maps make it deterministic).
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("snapshot always serializes");
        ContentHash::of(json.as_bytes()).to_hex()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub seq: u64,
    pub actor: String,
    pub event: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified: Option<bool>,
    pub payload_hash: String,
    pub snapshot: Snapshot,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceLine {
    Header(TraceHeader),
    Event(TraceRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(scenario: ScenarioConfig, records: Vec<TraceRecord>) -> Self {
        Trace {
            header: TraceHeader {
                format: TRACE_FORMAT.to_string(),
                scenario,
            },
            records,
        }
    }

    /// Line-delimited JSON: header first, then one record per event.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        out.push_str(
            &serde_json::to_string(&TraceLine::Header(self.header.clone()))
                .expect("header serializes"),
        );
        out.push('\n');
        for record in &self.records {
            out.push_str(
                &serde_json::to_string(&TraceLine::Event(record.clone()))
                    .expect("record serializes"),
            );
            out.push('\n');
        }
        out
    }

    pub fn parse(input: &str) -> Result<Trace, TraceParseError> {
        let mut header: Option<TraceHeader> = None;
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine = serde_json::from_str(line)
                .map_err(|err| TraceParseError::Json { line: i + 1, err })?;
            match parsed {
                TraceLine::Header(h) => {
                    if header.is_some() {
                        return Err(TraceParseError::DuplicateHeader(i + 1));
                    }
                    if h.format != TRACE_FORMAT {
                        return Err(TraceParseError::UnsupportedFormat(h.format));
                    }
                    header = Some(h);
                }
                TraceLine::Event(record) => records.push(record),
            }
        }
        let header = header.ok_or(TraceParseError::MissingHeader)?;
        Ok(Trace { header, records })
    }
}

/// One invariant breach found in a run or a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ChannelConservation {
        index: usize,
        got: u64,
        want: u64,
    },
    FiatConservation {
        index: usize,
        got: u64,
        want: u64,
    },
    IllegalPhaseTransition {
        index: usize,
        from: String,
        to: String,
    },
    SeqRegression {
        index: usize,
        from: u64,
        to: u64,
    },
    /// State changed on an event that carries no authorization.
    UnsignedTransition {
        index: usize,
        event: String,
    },
    /// A settled phase appeared without the authorizing messages.
    MissingAuthorization {
        index: usize,
        missing: String,
    },
    TerminationExceeded {
        last_tick: u64,
        bound: u64,
    },
    DigestMismatch {
        index: usize,
    },
    /// An honest bank certified something its ledger contradicts.
    CertificateInconsistent {
        index: usize,
        bank: String,
        cert: String,
    },
    /// An honest party ended below its protocol-assigned floor.
    SafetyShortfall {
        party: String,
        floor: u64,
        got: u64,
    },
    /// A collateral disposition the terms assign did not happen.
    CollateralNotApplied {
        party: String,
        expected_delta: i64,
        got_delta: i64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ChannelConservation { index, got, want } => write!(
                f,
                "record {index}: channel sums to {got}, capacity is {want}"
            ),
            Violation::FiatConservation { index, got, want } => {
                write!(f, "record {index}: fiat sums to {got}, expected {want}")
            }
            Violation::IllegalPhaseTransition { index, from, to } => {
                write!(f, "record {index}: illegal phase transition {from} -> {to}")
            }
            Violation::SeqRegression { index, from, to } => {
                write!(f, "record {index}: channel seq went from {from} to {to}")
            }
            Violation::UnsignedTransition { index, event } => {
                write!(f, "record {index}: state changed on unauthorized event {event}")
            }
            Violation::MissingAuthorization { index, missing } => {
                write!(f, "record {index}: settlement without {missing}")
            }
            Violation::TerminationExceeded { last_tick, bound } => {
                write!(f, "run reached tick {last_tick}, bound is {bound}")
            }
            Violation::DigestMismatch { index } => {
                write!(f, "record {index}: snapshot digest mismatch")
            }
            Violation::CertificateInconsistent { index, bank, cert } => {
                write!(
                    f,
                    "record {index}: honest bank {bank} issued {cert} inconsistent with its ledger"
                )
            }
            Violation::SafetyShortfall { party, floor, got } => {
                write!(f, "{party} ended at {got}, floor is {floor}")
            }
            Violation::CollateralNotApplied {
                party,
                expected_delta,
                got_delta,
            } => write!(
                f,
                "{party}: channel delta {got_delta}, terms assign {expected_delta}"
            ),
        }
    }
}

fn parse_phase(name: &str) -> Option<Phase> {
    Some(match name {
        "PROPOSED" => Phase::Proposed,
        "ACCEPTED_LOCKED" => Phase::AcceptedLocked,
        "TRANSFER_TRIGGERED" => Phase::TransferTriggered,
        "AWAITING_RECEIPT" => Phase::AwaitingReceipt,
        "SETTLED" => Phase::Settled,
        "SETTLED_WITH_COMPENSATION" => Phase::SettledWithCompensation,
        "REVERTED" => Phase::Reverted,
        "DISPUTED" => Phase::Disputed,
        _ => return None,
    })
}

/// Events allowed to mutate state. Message-carrying events ("deliver",
/// "propose") additionally need `verified == true`.
fn event_carries_authority(event: &str) -> bool {
    matches!(
        event,
        "open"
            | "deliver"
            | "propose"
            | "timer"
            | "rail_delivery"
            | "rail_credit"
            | "adjudicate"
            | "remedy"
            | "anchor_submit"
            | "anchor_finalize"
    )
}

/// The upper bound on run length implied by a scenario: every deadline
/// can be armed at most once after the scripted prelude, plus the
/// dispute window and the end-of-run bookkeeping events.
pub fn termination_bound(config: &ScenarioConfig) -> u64 {
    let (init, max, actual) = match &config.session {
        Some(s) => (s.initiation_timeout, s.transfer_max, s.actual_transfer),
        None => (0, 0, 0),
    };
    16 + 2 * init + max + actual + config.channel.dispute_window + 16
}

/// Audits a trace record by record. Total: returns every violation
/// found, empty for a clean trace.
pub fn audit(trace: &Trace) -> Vec<Violation> {
    let mut violations = Vec::new();
    let config = &trace.header.scenario;

    let capacity = config.channel.deposit_payer + config.channel.deposit_payee;
    let fiat_total: u64 = [&config.banks.payer_bank, &config.banks.payee_bank]
        .iter()
        .map(|b| b.accounts.values().sum::<u64>() + b.equity)
        .sum();
    let bound = termination_bound(config);

    let mut prev_snapshot: Option<&Snapshot> = None;
    let mut seen_acceptance = false;
    let mut seen_trigger = false;
    let mut seen_receipt = false;
    let mut prev_phase: Option<Phase> = None;

    for (index, record) in trace.records.iter().enumerate() {
        let snap = &record.snapshot;

        if record.digest != snap.digest() {
            violations.push(Violation::DigestMismatch { index });
        }

        let channel_sum = snap.channel.balance_a
            + snap.channel.balance_i
            + snap.channel.locks.iter().map(|l| l.amount).sum::<u64>();
        if channel_sum != capacity {
            violations.push(Violation::ChannelConservation {
                index,
                got: channel_sum,
                want: capacity,
            });
        }

        let fiat_sum: u64 = snap
            .banks
            .iter()
            .map(|b| b.accounts.values().sum::<u64>() + b.suspense + b.equity)
            .sum::<u64>()
            + snap.in_flight;
        if fiat_sum != fiat_total {
            violations.push(Violation::FiatConservation {
                index,
                got: fiat_sum,
                want: fiat_total,
            });
        }

        if record.verified == Some(true) {
            match record.msg_kind.as_deref() {
                Some("M_A1I1") => seen_acceptance = true,
                Some("CERT1") | Some("M_A1I1BA1") | Some("M_A1I1BA1BI1") => seen_trigger = true,
                Some("CERT2") => seen_receipt = true,
                _ => {}
            }
        }
        let seen_settler = seen_trigger || seen_receipt;

        // An honest bank's certificates must agree with its ledger:
        // a trigger certificate implies the payer account was debited,
        // a receipt certificate implies the payee was credited.
        if record.verified == Some(true) {
            let honest = |behavior: &crate::extrail::BankBehavior| {
                matches!(
                    behavior,
                    crate::extrail::BankBehavior::Honest | crate::extrail::BankBehavior::Slow(_)
                )
            };
            let bank_sum = |name: &str| -> Option<u64> {
                snap.banks
                    .iter()
                    .find(|b| b.bank == name)
                    .map(|b| b.accounts.values().sum())
            };
            match record.msg_kind.as_deref() {
                Some("CERT1") if honest(&config.banks.payer_bank.behavior) => {
                    let initial: u64 = config.banks.payer_bank.accounts.values().sum();
                    if bank_sum(&config.parties.payer_bank) >= Some(initial) {
                        violations.push(Violation::CertificateInconsistent {
                            index,
                            bank: config.parties.payer_bank.clone(),
                            cert: "CERT1".into(),
                        });
                    }
                }
                Some("CERT2") if honest(&config.banks.payee_bank.behavior) => {
                    let initial: u64 = config.banks.payee_bank.accounts.values().sum();
                    if bank_sum(&config.parties.payee_bank) <= Some(initial) {
                        violations.push(Violation::CertificateInconsistent {
                            index,
                            bank: config.parties.payee_bank.clone(),
                            cert: "CERT2".into(),
                        });
                    }
                }
                _ => {}
            }
        }

        let phase = snap.session.as_deref().and_then(parse_phase);
        if let Some(p) = phase {
            match prev_phase {
                None => {}
                Some(prev) if prev == p => {}
                Some(prev) => {
                    if !prev.may_transition_to(p) {
                        violations.push(Violation::IllegalPhaseTransition {
                            index,
                            from: prev.name().to_string(),
                            to: p.name().to_string(),
                        });
                    }
                    if matches!(p, Phase::Settled | Phase::SettledWithCompensation) {
                        if !seen_acceptance {
                            violations.push(Violation::MissingAuthorization {
                                index,
                                missing: "a verified M_A1I1".into(),
                            });
                        }
                        if p == Phase::Settled && !seen_settler {
                            violations.push(Violation::MissingAuthorization {
                                index,
                                missing: "a verified settling message".into(),
                            });
                        }
                        if p == Phase::SettledWithCompensation && !seen_trigger {
                            violations.push(Violation::MissingAuthorization {
                                index,
                                missing: "a verified trigger certificate".into(),
                            });
                        }
                    }
                }
            }
            prev_phase = Some(p);
        }

        if let Some(prev) = prev_snapshot {
            if snap.channel.seq < prev.channel.seq {
                violations.push(Violation::SeqRegression {
                    index,
                    from: prev.channel.seq,
                    to: snap.channel.seq,
                });
            }
            if *snap != *prev {
                let message_event = matches!(record.event.as_str(), "deliver" | "propose");
                let authorized = event_carries_authority(&record.event)
                    && (!message_event || record.verified == Some(true));
                if !authorized {
                    violations.push(Violation::UnsignedTransition {
                        index,
                        event: record.event.clone(),
                    });
                }
            }
        }

        if record.tick > bound {
            violations.push(Violation::TerminationExceeded {
                last_tick: record.tick,
                bound,
            });
        }

        prev_snapshot = Some(snap);
    }

    violations
}
