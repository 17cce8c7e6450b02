//! System state value from token probabilities.
//!
//! Two metrics are supported, both with natural logarithms:
//!
//! * `cppl`, conditional perplexity: `exp(-(1/N) Σ ln p_i)` where `p_i` is the
//!   probability of the i-th generated token given its prefix and the user
//!   query at the stack bottom.
//! * `uct`, uncertainty: `-Σ p_i ln p_i` over the realized tokens.
//!
//! Lower is better. A `Conclusion` is final only when its value is below
//! `sigma`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::ActionKind;

/// Floor applied to probabilities arriving over the wire.
pub const MIN_PROB: f64 = 1e-12;
pub const DEFAULT_LARGE_VALUE: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("cannot score an empty token sequence")]
    Empty,
    #[error("token {index} has probability {prob}, expected a value in (0, 1]")]
    BadProbability { index: usize, prob: f64 },
    #[error("invalid monitor config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProb {
    pub token: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenProbSequence {
    entries: Vec<TokenProb>,
    #[serde(default)]
    context_id: String,
}

impl TokenProbSequence {
    pub fn new(entries: Vec<TokenProb>, context_id: impl Into<String>) -> Result<Self, MonitorError> {
        for (index, e) in entries.iter().enumerate() {
            if !(e.prob > 0.0 && e.prob <= 1.0) {
                return Err(MonitorError::BadProbability { index, prob: e.prob });
            }
        }
        Ok(Self { entries, context_id: context_id.into() })
    }

    /// Anonymous tokens with the given probabilities.
    pub fn from_probs(probs: &[f64]) -> Result<Self, MonitorError> {
        Self::new(probs.iter().enumerate().map(|(i, p)| TokenProb { token: format!("t{i}"), prob: *p }).collect(), "")
    }

    /// Builds a sequence from `(token, logprob)` pairs, clamping the
    /// resulting probabilities into `[MIN_PROB, 1]`.
    pub fn from_logprobs_clamped(
        tokens: impl IntoIterator<Item = (String, f64)>,
        context_id: impl Into<String>,
    ) -> Self {
        let entries = tokens
            .into_iter()
            .map(|(token, logprob)| {
                let raw = logprob.exp();
                let prob = if raw.is_nan() { MIN_PROB } else { raw.clamp(MIN_PROB, 1.0) };
                if prob != raw {
                    log::warn!("clamped probability {raw} for token {token:?} to {prob}");
                }
                TokenProb { token, prob }
            })
            .collect();
        Self { entries, context_id: context_id.into() }
    }

    pub fn entries(&self) -> &[TokenProb] {
        &self.entries
    }

    pub fn context_id(&self) -> &str {
        &self.context_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn scored(&self) -> Result<impl Iterator<Item = f64> + '_, MonitorError> {
        if self.entries.is_empty() {
            return Err(MonitorError::Empty);
        }
        Ok(self.entries.iter().map(|e| e.prob))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cppl,
    Uct,
}

impl Metric {
    /// Operating threshold used when none is configured.
    pub fn default_sigma(self) -> f64 {
        match self {
            Metric::Cppl => 10.0,
            Metric::Uct => 20.0,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cppl => "cppl",
            Metric::Uct => "uct",
        })
    }
}

impl FromStr for Metric {
    type Err = MonitorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cppl" => Ok(Metric::Cppl),
            "uct" => Ok(Metric::Uct),
            other => Err(MonitorError::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub metric: Metric,
    pub sigma: f64,
    pub large_value: f64,
}

impl MonitorConfig {
    pub fn new(metric: Metric, sigma: f64) -> Result<Self, MonitorError> {
        let cfg = Self { metric, sigma, large_value: DEFAULT_LARGE_VALUE.max(sigma) };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MonitorError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(MonitorError::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.large_value.is_nan() || self.large_value < self.sigma || self.large_value.is_infinite() {
            return Err(MonitorError::InvalidConfig(format!(
                "large_value {} must be at least sigma {}",
                self.large_value, self.sigma
            )));
        }
        Ok(())
    }
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { metric: Metric::Cppl, sigma: 10.0, large_value: DEFAULT_LARGE_VALUE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateValue {
    pub value: f64,
    pub metric: Metric,
    pub step: u64,
}

pub fn compute_cppl(seq: &TokenProbSequence) -> Result<f64, MonitorError> {
    let mut n = 0usize;
    let mut log_sum = 0.0;
    for p in seq.scored()? {
        log_sum += p.ln();
        n += 1;
    }
    Ok((-log_sum / n as f64).exp())
}

pub fn compute_uct(seq: &TokenProbSequence) -> Result<f64, MonitorError> {
    // p = 1 contributes exactly zero; -0.0 is avoided so the sum prints as 0.
    Ok(seq.scored()?.map(|p| if p == 1.0 { 0.0 } else { -p * p.ln() }).sum())
}

pub fn evaluate_state(seq: &TokenProbSequence, cfg: &MonitorConfig, step: u64) -> Result<StateValue, MonitorError> {
    let value = match cfg.metric {
        Metric::Cppl => compute_cppl(seq)?,
        Metric::Uct => compute_uct(seq)?,
    };
    Ok(StateValue { value, metric: cfg.metric, step })
}

pub fn is_final(state: &StateValue, kind: ActionKind, cfg: &MonitorConfig) -> bool {
    kind == ActionKind::Conclusion && state.value < cfg.sigma
}

/// A confident `Thought` is lifted to `sigma` so it cannot halt the loop.
pub fn clamp_thought_state(state: &StateValue, cfg: &MonitorConfig) -> StateValue {
    StateValue { value: state.value.max(cfg.sigma), ..*state }
}
