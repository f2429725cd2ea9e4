use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize};

use crate::ledger::LedgerError;

/// 20 bytes rendered as 40 lowercase hex characters, like a wallet address.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct AccountId(String);

impl AccountId {
    pub fn from_bytes(bytes: [u8; 20]) -> Self {
        AccountId(hex::encode(bytes))
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 20];
        rng.fill_bytes(&mut bytes);
        Self::from_bytes(bytes)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for AccountId {
    type Err = LedgerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_prefix("0x").unwrap_or(s);
        if s.len() == 40 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            Ok(AccountId(s.to_string()))
        } else {
            Err(LedgerError::InvalidAccountId(s.to_string()))
        }
    }
}

impl<'de> Deserialize<'de> for AccountId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        // Only the bare form is canonical.
        if s.starts_with("0x") {
            return Err(serde::de::Error::custom(
                "account id must not carry a 0x prefix",
            ));
        }
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Account {
    pub id: AccountId,
    pub balance: f64,
}

impl Account {
    /// The account after paying `fee`; fails without change if the balance
    /// would go negative.
    pub fn debit(&self, fee: f64) -> Result<Account, LedgerError> {
        if !(fee.is_finite() && fee >= 0.0) {
            return Err(LedgerError::InvalidFee(fee));
        }
        if fee > self.balance {
            return Err(LedgerError::InsufficientFunds {
                account: self.id.clone(),
                balance: self.balance,
                fee,
            });
        }
        Ok(Account {
            id: self.id.clone(),
            balance: self.balance - fee,
        })
    }
}

/// Flat-plus-linear price per appended record, in synthetic credits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeeSchedule {
    pub base_fee: f64,
    pub per_byte_fee: f64,
}

impl Default for FeeSchedule {
    fn default() -> Self {
        FeeSchedule {
            base_fee: 0.001,
            per_byte_fee: 1e-6,
        }
    }
}

impl FeeSchedule {
    pub fn price_of(&self, size_bytes: usize) -> f64 {
        self.base_fee + self.per_byte_fee * size_bytes as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccountBook {
    accounts: BTreeMap<AccountId, Account>,
}

impl AccountBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, account: Account) {
        self.accounts.insert(account.id.clone(), account);
    }

    pub fn get(&self, id: &AccountId) -> Option<&Account> {
        self.accounts.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Account> {
        self.accounts.values()
    }

    pub fn len(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    /// Debits in place; on error the book is unchanged.
    pub fn debit(&mut self, id: &AccountId, fee: f64) -> Result<&Account, LedgerError> {
        let acct = self
            .accounts
            .get_mut(id)
            .ok_or_else(|| LedgerError::UnknownAccount(id.clone()))?;
        *acct = acct.debit(fee)?;
        Ok(acct)
    }
}
