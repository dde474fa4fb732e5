//! Message authentication for the simulator.
//!
//! The protocol only needs "signed and counter-signed" payloads whose
//! verification is deterministic, so the default scheme is an
//! HMAC-SHA-256 stand-in: the verification key equals the MAC key and
//! is distributed through the scenario [`KeyDirectory`]. Nothing
//! outside this module depends on the scheme; swapping in an
//! asymmetric scheme only touches this file.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::party::PartyId;

const BLOCK_LEN: usize = 64;
const TAG_LEN: usize = 32;

fn sha256(data: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(data);
    h.finalize().into()
}

/// HMAC-SHA-256 (RFC 2104) over a 32-byte key.
fn hmac_sha256(key: &[u8; 32], message: &[u8]) -> [u8; TAG_LEN] {
    let mut ipad = [0x36u8; BLOCK_LEN];
    let mut opad = [0x5cu8; BLOCK_LEN];
    for (i, b) in key.iter().enumerate() {
        ipad[i] ^= b;
        opad[i] ^= b;
    }
    let mut inner = Sha256::new();
    inner.update(ipad);
    inner.update(message);
    let inner_tag: [u8; 32] = inner.finalize().into();

    let mut outer = Sha256::new();
    outer.update(opad);
    outer.update(inner_tag);
    outer.finalize().into()
}

/// A content hash used to reference messages and snapshots.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContentHash(pub [u8; 32]);

impl ContentHash {
    pub fn of(data: &[u8]) -> Self {
        ContentHash(sha256(data))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

/// The verification half of a key pair.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublicKey(pub [u8; 32]);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &hex::encode(self.0)[..12])
    }
}

/// A signature over a byte string, attributed to its signer.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub signer: PartyId,
    pub bytes: [u8; TAG_LEN],
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Signature({}, {})",
            self.signer,
            &hex::encode(self.bytes)[..12]
        )
    }
}

/// Signing and verification key for one party.
#[derive(Clone)]
pub struct KeyPair {
    party: PartyId,
    secret: [u8; 32],
}

impl KeyPair {
    /// Derives a key pair deterministically from a scenario seed. The
    /// seed influences key (and therefore signature) bytes only, never
    /// protocol outcomes.
    pub fn derive(seed: u64, party: &PartyId) -> Self {
        let mut h = Sha256::new();
        h.update(b"seesaw/keygen/v1");
        h.update(seed.to_be_bytes());
        h.update(party.as_str().as_bytes());
        KeyPair {
            party: party.clone(),
            secret: h.finalize().into(),
        }
    }

    pub fn party(&self) -> &PartyId {
        &self.party
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.secret)
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature {
            signer: self.party.clone(),
            bytes: hmac_sha256(&self.secret, message),
        }
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyPair({})", self.party)
    }
}

/// Verifies `sig` over `message` against a verification key.
pub fn verify_signature(key: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    let expected = hmac_sha256(&key.0, message);
    // Not constant-time; this is a simulation, not a deployment.
    expected == sig.bytes
}

/// Scenario-level directory mapping each party to its verification key.
///
/// The protocol itself never exchanges keys; the directory is agreed
/// out of band when the scenario is set up.
#[derive(Debug, Clone, Default)]
pub struct KeyDirectory {
    keys: BTreeMap<PartyId, PublicKey>,
}

impl KeyDirectory {
    pub fn new() -> Self {
        KeyDirectory::default()
    }

    pub fn publish(&mut self, party: PartyId, key: PublicKey) {
        self.keys.insert(party, key);
    }

    pub fn key_of(&self, party: &PartyId) -> Option<&PublicKey> {
        self.keys.get(party)
    }

    /// Verifies that `sig` was produced by `signer` over `message`,
    /// according to the directory. Unknown signers never verify.
    pub fn verify(&self, signer: &PartyId, message: &[u8], sig: &Signature) -> bool {
        if &sig.signer != signer {
            return false;
        }
        match self.keys.get(signer) {
            Some(key) => verify_signature(key, message, sig),
            None => false,
        }
    }
}
