//! Scenario configuration: the single input a simulation run needs.
//!
//! Configs are TOML with a fixed schema (`docs/scenario-schema.md`);
//! unknown fields are rejected. Every parameter of the re-balancing
//! procedure (deposits, collaterals, deadlines, trust alternative,
//! bank behaviors, adversary presets) lives here, so a config plus
//! this library fully determines a run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::extrail::BankBehavior;
use crate::message::{Alternative, CollateralRoute};
use crate::rebalance::ProtocolMutations;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Participant adversary presets. Drawn from a finite set so fault
/// grids stay enumerable.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantPreset {
    #[default]
    Honest,
    /// Payee never countersigns the proposal.
    DropAccept,
    /// Payer never hands the acceptance to her bank.
    DropSubmit,
    /// Payer submits an acceptance with a corrupted signature.
    ForgeSubmit,
    /// Payer hands the acceptance to her bank three ticks late.
    DelaySubmit,
    /// Party tries to close the channel with a stale state afterwards.
    StaleClose,
}

impl ParticipantPreset {
    pub const ALL: [ParticipantPreset; 6] = [
        ParticipantPreset::Honest,
        ParticipantPreset::DropAccept,
        ParticipantPreset::DropSubmit,
        ParticipantPreset::ForgeSubmit,
        ParticipantPreset::DelaySubmit,
        ParticipantPreset::StaleClose,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ParticipantPreset::Honest => "honest",
            ParticipantPreset::DropAccept => "drop_accept",
            ParticipantPreset::DropSubmit => "drop_submit",
            ParticipantPreset::ForgeSubmit => "forge_submit",
            ParticipantPreset::DelaySubmit => "delay_submit",
            ParticipantPreset::StaleClose => "stale_close",
        }
    }
}

impl fmt::Display for ParticipantPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartiesConfig {
    pub payer: String,
    pub payee: String,
    pub payer_bank: String,
    pub payee_bank: String,
    pub regulator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub deposit_payer: u64,
    pub deposit_payee: u64,
    #[serde(default = "default_dispute_window")]
    pub dispute_window: u64,
}

/// Channel balances after the ordinary interaction that precedes the
/// re-balancing (the payer spent value toward the payee).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionConfig {
    pub payer_balance: u64,
    pub payee_balance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub amount: u64,
    #[serde(default)]
    pub collateral_payer: u64,
    #[serde(default)]
    pub collateral_payee: u64,
    pub alternative: Alternative,
    /// Alternative 2 only: settle via the receipt certificate instead
    /// of the four-party chain message.
    #[serde(default)]
    pub receipt_unlock: bool,
    #[serde(default = "default_initiation_timeout")]
    pub initiation_timeout: u64,
    #[serde(default = "default_actual_transfer")]
    pub actual_transfer: u64,
    #[serde(default = "default_transfer_max")]
    pub transfer_max: u64,
    /// Certificate sources to register; defaults to both banks.
    #[serde(default)]
    pub register: Option<Vec<String>>,
    /// Where the payer collateral goes when the session reverts.
    /// Changing this is an agreed term, unlike [`ProtocolMutations`].
    #[serde(default = "default_to_counterparty")]
    pub payer_collateral_on_revert: CollateralRoute,
    /// Where the payee collateral goes on the compensation path.
    #[serde(default = "default_to_counterparty")]
    pub payee_collateral_on_compensation: CollateralRoute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankConfig {
    #[serde(default)]
    pub accounts: BTreeMap<String, u64>,
    #[serde(default = "default_equity")]
    pub equity: u64,
    #[serde(default = "default_behavior")]
    pub behavior: BankBehavior,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanksConfig {
    pub payer_bank: BankConfig,
    pub payee_bank: BankConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    #[serde(default)]
    pub payer: ParticipantPreset,
    #[serde(default)]
    pub payee: ParticipantPreset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisputeConfig {
    /// Raise a claim at the end of the run even without a shortfall
    /// (exercises the frivolous-claim path).
    #[serde(default)]
    pub force_claim: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub format_version: u32,
    /// Affects key material (and therefore signature and hash bytes)
    /// only, never protocol outcomes.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Fiat minor units per channel unit, fixed by the underlying
    /// contract.
    #[serde(default = "default_equivalence")]
    pub equivalence: u64,
    pub parties: PartiesConfig,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub interaction: Option<InteractionConfig>,
    /// Omitting the session yields an empty run: the channel opens and
    /// nothing else happens.
    #[serde(default)]
    pub session: Option<SessionConfig>,
    pub banks: BanksConfig,
    #[serde(default)]
    pub adversary: AdversaryConfig,
    #[serde(default)]
    pub mutations: ProtocolMutations,
    #[serde(default)]
    pub dispute: DisputeConfig,
}

fn default_seed() -> u64 {
    42
}
fn default_equivalence() -> u64 {
    1
}
fn default_dispute_window() -> u64 {
    10
}
fn default_initiation_timeout() -> u64 {
    20
}
fn default_actual_transfer() -> u64 {
    5
}
fn default_transfer_max() -> u64 {
    15
}
fn default_equity() -> u64 {
    100
}
fn default_behavior() -> BankBehavior {
    BankBehavior::Honest
}
fn default_to_counterparty() -> CollateralRoute {
    CollateralRoute::ToCounterparty
}

impl ScenarioConfig {
    pub fn from_toml_str(input: &str) -> Result<Self, ScenarioError> {
        let config: ScenarioConfig = toml::from_str(input)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let input = std::fs::read_to_string(path)?;
        Self::from_toml_str(&input)
    }

    pub fn party_names(&self) -> [&str; 5] {
        [
            &self.parties.payer,
            &self.parties.payee,
            &self.parties.payer_bank,
            &self.parties.payee_bank,
            &self.parties.regulator,
        ]
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));

        if self.format_version != 1 {
            return invalid(format!(
                "unsupported format_version {}",
                self.format_version
            ));
        }
        let names = self.party_names();
        for name in names {
            if name.is_empty() {
                return invalid("party names must be non-empty".into());
            }
        }
        for (i, a) in names.iter().enumerate() {
            for b in names.iter().skip(i + 1) {
                if a == b {
                    return invalid(format!("duplicate party name {a}"));
                }
            }
        }
        if self.equivalence == 0 {
            return invalid("equivalence rate must be at least 1".into());
        }
        if self.channel.deposit_payer == 0 || self.channel.deposit_payee == 0 {
            return invalid("channel deposits must be positive".into());
        }
        if self.channel.dispute_window == 0 {
            return invalid("dispute window must be positive".into());
        }
        if let Some(session) = &self.session {
            if session.amount == 0 {
                return invalid("re-balance amount must be positive".into());
            }
            if let Some(register) = &session.register {
                for source in register {
                    if !names.contains(&source.as_str()) {
                        return invalid(format!(
                            "registered source {source} is not a known party"
                        ));
                    }
                }
            }
        }
        let capacity = self.channel.deposit_payer + self.channel.deposit_payee;
        if let Some(interaction) = &self.interaction {
            if interaction.payer_balance + interaction.payee_balance != capacity {
                return invalid(format!(
                    "interaction balances must sum to the channel capacity {capacity}"
                ));
            }
        }
        for (label, bank) in [
            ("payer_bank", &self.banks.payer_bank),
            ("payee_bank", &self.banks.payee_bank),
        ] {
            for customer in bank.accounts.keys() {
                if !names.contains(&customer.as_str()) {
                    return invalid(format!(
                        "account holder {customer} at {label} is not a known party"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Sources to register, defaulting to both banks.
    pub fn registered_sources(&self) -> Vec<String> {
        self.session
            .as_ref()
            .and_then(|s| s.register.clone())
            .unwrap_or_else(|| {
                vec![
                    self.parties.payer_bank.clone(),
                    self.parties.payee_bank.clone(),
                ]
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
format_version = 1

[parties]
payer = "alice"
payee = "ingrid"
payer_bank = "bank_a"
payee_bank = "bank_i"
regulator = "regulator"

[channel]
deposit_payer = 20
deposit_payee = 10

[interaction]
payer_balance = 10
payee_balance = 20

[session]
amount = 10
collateral_payer = 2
collateral_payee = 3
alternative = "alt1_design2"

[banks.payer_bank]
accounts = { alice = 100 }

[banks.payee_bank]
accounts = { ingrid = 50 }
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(config.seed, 42);
        assert_eq!(config.equivalence, 1);
        assert_eq!(config.channel.dispute_window, 10);
        let session = config.session.as_ref().unwrap();
        assert_eq!(session.initiation_timeout, 20);
        assert_eq!(session.actual_transfer, 5);
        assert_eq!(session.transfer_max, 15);
        assert_eq!(config.banks.payer_bank.behavior, BankBehavior::Honest);
        assert_eq!(
            config.registered_sources(),
            vec!["bank_a".to_string(), "bank_i".to_string()]
        );
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = MINIMAL.replace("[session]", "[session]\nnot_a_field = 1");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&bad),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn negative_collateral_rejected_at_parse() {
        let bad = MINIMAL.replace("collateral_payer = 2", "collateral_payer = -1");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&bad),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn duplicate_party_rejected() {
        let bad = MINIMAL.replace("payee = \"ingrid\"", "payee = \"alice\"");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&bad),
            Err(ScenarioError::Invalid(_))
        ));
    }

    #[test]
    fn interaction_must_conserve_capacity() {
        let bad = MINIMAL.replace("payee_balance = 20", "payee_balance = 21");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&bad),
            Err(ScenarioError::Invalid(_))
        ));
    }

    #[test]
    fn slow_behavior_parses() {
        let slow = MINIMAL.replace(
            "accounts = { alice = 100 }",
            "accounts = { alice = 100 }\nbehavior = { slow = 3 }",
        );
        let config = ScenarioConfig::from_toml_str(&slow).unwrap();
        assert_eq!(
            config.banks.payer_bank.behavior,
            BankBehavior::Slow(crate::time::Ticks(3))
        );
    }
}
