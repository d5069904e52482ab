//! Adaptive confidence threshold.
//!
//! Predictions whose max score reaches the current τ are counted. Every time
//! the running count passes another multiple of `trigger_every`, τ moves up
//! by an epoch-dependent step `10^-(1 + ⌈epoch / 200⌉)`: 1e-2 for epochs
//! 1..=200, 1e-3 for 201..=400, and so on. τ never exceeds `tau_max`.
//!
//! τ is recomputed as `tau0 + Σ count_e · step_e` rather than accumulated step
//! by step, so k triggers at one epoch land exactly on `tau0 + k · step`.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    pub trigger_every: u64,
    pub tau_max: f64,
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        Self {
            trigger_every: 50,
            tau_max: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedulerState {
    pub tau: f64,
    pub high_count: u64,
    pub epoch: u32,
    tau0: f64,
    /// Trigger counts keyed by step exponent.
    steps: BTreeMap<u32, u64>,
}

/// Step exponent e for an epoch, so that the step is 10^-e. Epoch 0 is
/// treated as epoch 1.
pub fn step_exponent(epoch: u32) -> u32 {
    1 + epoch.max(1).div_ceil(200)
}

/// `10^-(1 + ⌈epoch/200⌉)`, correctly rounded.
pub fn threshold_increment(epoch: u32) -> f64 {
    1.0 / 10f64.powi(step_exponent(epoch) as i32)
}

impl ThresholdSchedulerState {
    pub fn new(tau0: f64) -> Result<Self> {
        if !(tau0 > 0.0 && tau0 <= 1.0) {
            return Err(ConfigError::Tau(tau0).into());
        }
        Ok(Self {
            tau: tau0,
            high_count: 0,
            epoch: 0,
            tau0,
            steps: BTreeMap::new(),
        })
    }

    pub fn initial_tau(&self) -> f64 {
        self.tau0
    }

    fn recompute(&mut self, tau_max: f64) {
        let raised = self
            .steps
            .iter()
            .fold(self.tau0, |acc, (&e, &k)| acc + k as f64 * (1.0 / 10f64.powi(e as i32)));
        // Never below the current value: a lowered cap must not pull τ down.
        self.tau = raised.min(tau_max).max(self.tau);
    }
}

/// Counts the high-confidence rows of `predictions` against the current τ
/// and applies one step per `trigger_every` boundary crossed.
pub fn update_threshold(
    state: &ThresholdSchedulerState,
    predictions: ArrayView2<'_, f64>,
    epoch: u32,
    schedule: &ThresholdSchedule,
) -> ThresholdSchedulerState {
    let hits = predictions
        .rows()
        .into_iter()
        .filter(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max) >= state.tau)
        .count() as u64;
    record_high_count(state, hits, epoch, schedule)
}

/// Same as [`update_threshold`] for a caller that already counted.
pub fn record_high_count(
    state: &ThresholdSchedulerState,
    hits: u64,
    epoch: u32,
    schedule: &ThresholdSchedule,
) -> ThresholdSchedulerState {
    let mut next = state.clone();
    let every = schedule.trigger_every.max(1);
    let before = state.high_count / every;
    next.high_count = state.high_count + hits;
    next.epoch = epoch;
    let triggers = next.high_count / every - before;
    if triggers > 0 && next.tau < schedule.tau_max {
        *next.steps.entry(step_exponent(epoch)).or_insert(0) += triggers;
        next.recompute(schedule.tau_max);
    }
    next
}
