//! Amounts in minor units, tagged with the unit they denominate.
//!
//! Channel units and fiat units never mix: every arithmetic operation
//! checks the tags and fails on a mismatch instead of silently adding
//! apples to oranges. Amounts are unsigned, so a negative balance is
//! unrepresentable; subtraction that would go below zero is an error.

use std::fmt;

use serde::{Deserialize, Serialize};

/// The denomination of a [`Value`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    /// Book-keeping units inside a payment channel.
    Channel,
    /// Minor units of the external fiat rail (e.g. cents).
    Fiat,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unit::Channel => write!(f, "ch"),
            Unit::Fiat => write!(f, "fiat"),
        }
    }
}

/// Errors from [`Value`] arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ValueError {
    #[error("unit mismatch: {0} vs {1}")]
    UnitMismatch(Unit, Unit),
    #[error("amount overflow")]
    Overflow,
    #[error("insufficient value: {have} < {need}")]
    Insufficient { have: u64, need: u64 },
}

/// A non-negative amount in minor units of one [`Unit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Value {
    amount: u64,
    unit: Unit,
}

impl Value {
    pub const fn new(amount: u64, unit: Unit) -> Self {
        Value { amount, unit }
    }

    pub const fn channel(amount: u64) -> Self {
        Value::new(amount, Unit::Channel)
    }

    pub const fn fiat(amount: u64) -> Self {
        Value::new(amount, Unit::Fiat)
    }

    pub const fn zero(unit: Unit) -> Self {
        Value::new(0, unit)
    }

    pub const fn amount(&self) -> u64 {
        self.amount
    }

    pub const fn unit(&self) -> Unit {
        self.unit
    }

    pub const fn is_zero(&self) -> bool {
        self.amount == 0
    }

    fn expect_unit(&self, other: &Value) -> Result<(), ValueError> {
        if self.unit != other.unit {
            return Err(ValueError::UnitMismatch(self.unit, other.unit));
        }
        Ok(())
    }

    /// Checked addition; rejects unit mixing and overflow.
    pub fn checked_add(&self, other: &Value) -> Result<Value, ValueError> {
        self.expect_unit(other)?;
        let amount = self
            .amount
            .checked_add(other.amount)
            .ok_or(ValueError::Overflow)?;
        Ok(Value::new(amount, self.unit))
    }

    /// Checked subtraction; rejects unit mixing and going below zero.
    pub fn checked_sub(&self, other: &Value) -> Result<Value, ValueError> {
        self.expect_unit(other)?;
        let amount = self
            .amount
            .checked_sub(other.amount)
            .ok_or(ValueError::Insufficient {
                have: self.amount,
                need: other.amount,
            })?;
        Ok(Value::new(amount, self.unit))
    }

    /// Converts a channel-unit value to its fiat equivalent at an
    /// integer `rate` of fiat minor units per channel unit.
    pub fn to_fiat_equivalent(&self, rate: u64) -> Result<Value, ValueError> {
        match self.unit {
            Unit::Fiat => Ok(*self),
            Unit::Channel => {
                let amount = self.amount.checked_mul(rate).ok_or(ValueError::Overflow)?;
                Ok(Value::fiat(amount))
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.amount, self.unit)
    }
}
