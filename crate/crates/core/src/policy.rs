//! The shared synapse policy: a 36-state × 3-action Q-table, epsilon-greedy
//! action selection and the temporal-difference update.
//!
//! A synapse observes only its last two action signs and the last two global
//! reward signs. That history is packed into a state index in `0..36`:
//!
//! ```text
//! index = ((a_prev1 · 3 + a_prev2) · 2 + r_prev1) · 2 + r_prev2
//! ```
//!
//! with actions indexed `Dec=0, Null=1, Inc=2` and rewards `Neg=0, Pos=1`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STATE_COUNT: usize = 36;
pub const ACTION_COUNT: usize = 3;
pub const ENCODING_ID: &str = "a1a2r1r2-v1";
pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionSign {
    Dec,
    Null,
    Inc,
}

impl ActionSign {
    pub const ALL: [ActionSign; ACTION_COUNT] =
        [ActionSign::Dec, ActionSign::Null, ActionSign::Inc];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn sign(self) -> f64 {
        match self {
            ActionSign::Dec => -1.0,
            ActionSign::Null => 0.0,
            ActionSign::Inc => 1.0,
        }
    }

    /// `weight ± alpha_s`; `Null` returns the weight untouched.
    #[inline]
    pub fn apply(self, weight: f64, alpha_s: f64) -> f64 {
        match self {
            ActionSign::Dec => weight - alpha_s,
            ActionSign::Null => weight,
            ActionSign::Inc => weight + alpha_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardSign {
    Neg,
    Pos,
}

impl RewardSign {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn value(self) -> f64 {
        match self {
            RewardSign::Neg => -1.0,
            RewardSign::Pos => 1.0,
        }
    }

    /// `Pos` iff the loss strictly decreased; ties are penalized.
    pub fn from_losses(previous: f64, current: f64) -> Result<Self> {
        if previous.is_nan() || current.is_nan() {
            return Err(Error::NonFinite(format!(
                "reward from losses {previous} -> {current}"
            )));
        }
        Ok(if previous > current {
            RewardSign::Pos
        } else {
            RewardSign::Neg
        })
    }
}

/// What one synapse remembers between iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SynapseHistory {
    pub a_prev1: ActionSign,
    pub a_prev2: ActionSign,
    pub r_prev1: RewardSign,
    pub r_prev2: RewardSign,
}

impl Default for SynapseHistory {
    /// No action taken yet, no improvement observed yet.
    fn default() -> Self {
        Self {
            a_prev1: ActionSign::Null,
            a_prev2: ActionSign::Null,
            r_prev1: RewardSign::Neg,
            r_prev2: RewardSign::Neg,
        }
    }
}

impl SynapseHistory {
    pub fn encode(&self) -> usize {
        ((self.a_prev1.index() * 3 + self.a_prev2.index()) * 2 + self.r_prev1.index()) * 2
            + self.r_prev2.index()
    }

    pub fn decode(state: usize) -> Option<Self> {
        if state >= STATE_COUNT {
            return None;
        }
        let reward = |i| {
            if i == 0 {
                RewardSign::Neg
            } else {
                RewardSign::Pos
            }
        };
        Some(Self {
            a_prev1: ActionSign::from_index(state / 12)?,
            a_prev2: ActionSign::from_index(state / 4 % 3)?,
            r_prev1: reward(state / 2 % 2),
            r_prev2: reward(state % 2),
        })
    }

    /// History after taking `action` and then observing `reward`.
    pub fn shifted(&self, action: ActionSign, reward: RewardSign) -> Self {
        Self {
            a_prev1: action,
            a_prev2: self.a_prev1,
            r_prev1: reward,
            r_prev2: self.r_prev1,
        }
    }
}

/// Which form of the temporal-difference target to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdRule {
    /// `Q ← Q + α_q [R + γ max Q' − Q]`
    #[default]
    Standard,
    /// `Q ← Q + α_q [R + γ (max Q' − Q)]`, the discount also scaling the
    /// current estimate. Not bounded in general; kept for comparison runs.
    DiscountedDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonGreedy {
    epsilon: f64,
}

impl EpsilonGreedy {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be in [0, 1], got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: [[f64; ACTION_COUNT]; STATE_COUNT],
    gamma: f64,
    alpha_q: f64,
    rule: TdRule,
}

impl QTable {
    /// All-zero table.
    pub fn new(gamma: f64, alpha_q: f64) -> Result<Self> {
        Self::with_values([[0.0; ACTION_COUNT]; STATE_COUNT], gamma, alpha_q)
    }

    pub fn with_values(
        values: [[f64; ACTION_COUNT]; STATE_COUNT],
        gamma: f64,
        alpha_q: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be in [0, 1], got {gamma}"
            )));
        }
        if !(alpha_q.is_finite() && alpha_q >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha_q must be finite and non-negative, got {alpha_q}"
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Q-table entries".into()));
        }
        Ok(Self {
            values,
            gamma,
            alpha_q,
            rule: TdRule::Standard,
        })
    }

    pub fn with_rule(mut self, rule: TdRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha_q(&self) -> f64 {
        self.alpha_q
    }

    pub fn rule(&self) -> TdRule {
        self.rule
    }

    pub fn values(&self) -> &[[f64; ACTION_COUNT]; STATE_COUNT] {
        &self.values
    }

    pub fn get(&self, state: usize, action: ActionSign) -> f64 {
        self.values[state][action.index()]
    }

    pub fn set(&mut self, state: usize, action: ActionSign, value: f64) {
        self.values[state][action.index()] = value;
    }

    pub fn row(&self, state: usize) -> &[f64; ACTION_COUNT] {
        &self.values[state]
    }

    fn max_value(&self, state: usize) -> f64 {
        let r = &self.values[state];
        r[0].max(r[1]).max(r[2])
    }

    /// Epsilon-greedy choice for `state`.
    ///
    /// Always draws one uniform `f64` for the branch decision, then one
    /// `usize` for either the random action or the tie-break among maximal
    /// entries (the latter only when more than one entry is maximal).
    pub fn select_action<R: rand::Rng + ?Sized>(
        &self,
        state: usize,
        policy: EpsilonGreedy,
        rng: &mut R,
    ) -> ActionSign {
        if rng.random::<f64>() < policy.epsilon {
            return ActionSign::ALL[rng.random_range(0..ACTION_COUNT)];
        }
        let row = &self.values[state];
        let max = self.max_value(state);
        let mut best = [0usize; ACTION_COUNT];
        let mut n = 0;
        for (i, &v) in row.iter().enumerate() {
            if v == max {
                best[n] = i;
                n += 1;
            }
        }
        let pick = if n == 1 {
            best[0]
        } else {
            best[rng.random_range(0..n)]
        };
        ActionSign::ALL[pick]
    }

    /// One temporal-difference step on the entry `(s_prev, action)`.
    pub fn td_update(
        &mut self,
        s_prev: usize,
        action: ActionSign,
        reward: RewardSign,
        s_next: usize,
    ) {
        let next_max = self.max_value(s_next);
        let q = &mut self.values[s_prev][action.index()];
        let target = match self.rule {
            TdRule::Standard => reward.value() + self.gamma * next_max - *q,
            TdRule::DiscountedDifference => reward.value() + self.gamma * (next_max - *q),
        };
        *q += self.alpha_q * target;
    }

    pub fn to_json(&self, manifest_sha256: Option<&str>) -> Result<String> {
        let file = PolicyFile {
            format_version: POLICY_FORMAT_VERSION,
            gamma: self.gamma,
            alpha_q: self.alpha_q,
            encoding_id: ENCODING_ID.to_owned(),
            td_rule: self.rule,
            values: self.values.iter().map(|r| r.to_vec()).collect(),
            manifest_sha256: manifest_sha256.map(str::to_owned),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PolicyFile = serde_json::from_str(text)?;
        if file.format_version != POLICY_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: POLICY_FORMAT_VERSION,
                found: file.format_version,
            });
        }
        if file.encoding_id != ENCODING_ID {
            return Err(Error::EncodingMismatch {
                expected: ENCODING_ID.to_owned(),
                found: file.encoding_id,
            });
        }
        if file.values.len() != STATE_COUNT || file.values.iter().any(|r| r.len() != ACTION_COUNT) {
            return Err(Error::Shape(format!(
                "policy values must be {STATE_COUNT} rows of {ACTION_COUNT}"
            )));
        }
        let mut values = [[0.0; ACTION_COUNT]; STATE_COUNT];
        for (dst, src) in values.iter_mut().zip(&file.values) {
            dst.copy_from_slice(src);
        }
        Ok(Self::with_values(values, file.gamma, file.alpha_q)?.with_rule(file.td_rule))
    }

    pub fn save(&self, path: &Path, manifest_sha256: Option<&str>) -> Result<()> {
        fs::write(path, self.to_json(manifest_sha256)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format_version: u32,
    gamma: f64,
    alpha_q: f64,
    encoding_id: String,
    #[serde(default)]
    td_rule: TdRule,
    values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest_sha256: Option<String>,
}
