//! Two-party trustless payment channel whose balance is restored
//! through an external, regulated transfer rail instead of closing the
//! channel, plus a deterministic discrete-event simulator that drives
//! the protocol against adversarial banks and participants and audits
//! every run.
//!
//! Layers, bottom up:
//!
//! - [`value`], [`time`], [`party`], [`crypto`], [`wire`]: amounts,
//!   logical time, identities, authentication, canonical encoding.
//! - [`message`]: the authenticated envelope and the countersignature
//!   chain of the re-balancing negotiation.
//! - [`channel`]: countersigned state updates, conditional locks, and
//!   the on-ledger dispute anchor.
//! - [`rebalance`]: the re-balancing session state machine (locking,
//!   certificates, timeouts, compensation).
//! - [`extrail`]: simulated banks with injectable behaviors and the
//!   regulator oracle.
//! - [`scenario`], [`sim`], [`trace`]: scenario configs, the
//!   deterministic engine with fault enumeration, and the replayable
//!   audit trace.

pub mod channel;
pub mod crypto;
pub mod extrail;
pub mod message;
pub mod party;
pub mod rebalance;
pub mod scenario;
pub mod sim;
pub mod time;
pub mod trace;
pub mod value;
pub mod wire;

#[cfg(test)]
pub(crate) mod testutil;

pub use crypto::{ContentHash, KeyDirectory, KeyPair, PublicKey, Signature};
pub use message::{Alternative, MessageKind, SessionId, SignedMessage};
pub use party::{PartyId, Role, Roster};
pub use time::{Tick, Ticks};
pub use value::{Unit, Value};
