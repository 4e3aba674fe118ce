//! Sequence roles and the unbiased role coin.

use bacalarm_core::traffic::SequenceRole;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Behavioral role a generated sequence plays out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Benign,
    Malicious,
}

impl Role {
    /// `true` for sequences that abuse access control.
    pub fn is_malicious(self) -> bool {
        matches!(self, Role::Malicious)
    }
}

impl From<Role> for SequenceRole {
    fn from(role: Role) -> Self {
        match role {
            Role::Benign => SequenceRole::Benign,
            Role::Malicious => SequenceRole::Malicious,
        }
    }
}

/// Draws a role with P(benign) = 0.5.
pub fn assign_role<R: Rng>(rng: &mut R) -> Role {
    if rng.gen_bool(0.5) {
        Role::Benign
    } else {
        Role::Malicious
    }
}
