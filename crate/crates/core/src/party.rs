//! Participants of a scenario and the roles they play.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// What a party is allowed to do in the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// One of the two channel participants.
    ChannelParticipant,
    /// A bank on the external rail; eligible as a certificate source.
    Bank,
    /// The adjudicating authority for rail-level disputes.
    Regulator,
    /// The ledger anchoring the channel.
    Ledger,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::ChannelParticipant => "participant",
            Role::Bank => "bank",
            Role::Regulator => "regulator",
            Role::Ledger => "ledger",
        };
        write!(f, "{s}")
    }
}

/// An opaque party identifier, unique within a scenario.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(String);

impl PartyId {
    pub fn new(name: impl Into<String>) -> Self {
        PartyId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for PartyId {
    fn from(s: &str) -> Self {
        PartyId::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RosterError {
    #[error("party {0} already registered")]
    DuplicateParty(PartyId),
    #[error("unknown party {0}")]
    UnknownParty(PartyId),
}

/// The scenario-level registry of parties. Roles are fixed at
/// registration and never change.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    parties: BTreeMap<PartyId, Role>,
}

impl Roster {
    pub fn new() -> Self {
        Roster::default()
    }

    pub fn register(&mut self, id: PartyId, role: Role) -> Result<(), RosterError> {
        if self.parties.contains_key(&id) {
            return Err(RosterError::DuplicateParty(id));
        }
        self.parties.insert(id, role);
        Ok(())
    }

    pub fn role_of(&self, id: &PartyId) -> Option<Role> {
        self.parties.get(id).copied()
    }

    pub fn has_role(&self, id: &PartyId, role: Role) -> bool {
        self.role_of(id) == Some(role)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PartyId, &Role)> {
        self.parties.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_are_immutable_after_registration() {
        let mut roster = Roster::new();
        roster
            .register(PartyId::new("alice"), Role::ChannelParticipant)
            .unwrap();
        let err = roster.register(PartyId::new("alice"), Role::Bank);
        assert_eq!(err, Err(RosterError::DuplicateParty(PartyId::new("alice"))));
        assert_eq!(
            roster.role_of(&PartyId::new("alice")),
            Some(Role::ChannelParticipant)
        );
    }
}
