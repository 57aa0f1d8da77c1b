use std::collections::BTreeMap;
use std::ops::Bound;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EngineConfig, Mode, ModePolicy, Strategy};
use crate::ar::fit_ar;
use crate::error::{Error, Result};
use crate::gru::{GenerationHandle, GruNetwork};
use crate::trace::CommandMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Actual,
    ShortTerm,
    LongTerm,
    HoldLast,
}

impl Source {
    pub fn tag(&self) -> &'static str {
        match self {
            Source::Actual => "actual",
            Source::ShortTerm => "short_term",
            Source::LongTerm => "long_term",
            Source::HoldLast => "hold_last",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuationDecision {
    pub slot: usize,
    pub command: Vec<f64>,
    pub source: Source,
    /// Slots since the last on-time receipt.
    pub s: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineCounters {
    /// Decisions that fell back to hold-last because history was too short
    /// or no receipt had happened yet.
    pub cold_start: u64,
    /// Receipts whose short-term fit failed.
    pub fit_failures: u64,
    pub on_time_receipts: u64,
    pub late_receipts: u64,
}

/// Per-domain engine state. Single owner; the generation network is only
/// read through snapshots.
#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    strategy: Strategy,
    mode: Mode,
    generation: Option<GenerationHandle>,
    history: BTreeMap<usize, Vec<f64>>,
    history_capacity: usize,
    history_log: Vec<usize>,
    last_receipt: Option<usize>,
    candidate: Option<Vec<f64>>,
    short_block: Vec<Vec<f64>>,
    long_block: Option<Vec<Vec<f64>>>,
    /// Network snapshot and window taken at receipt; the block is computed
    /// on first use.
    pending_long: Option<(Arc<GruNetwork>, Vec<Vec<f64>>)>,
    last_actuated: Vec<f64>,
    last_decided: Option<usize>,
    counters: EngineCounters,
}

impl Engine {
    /// `initial` is actuated until the first on-time receipt. `generation`
    /// is required for the TAP strategy.
    pub fn new(
        config: EngineConfig,
        strategy: Strategy,
        initial: Vec<f64>,
        generation: Option<GenerationHandle>,
    ) -> Result<Self> {
        config.validate()?;
        if initial.is_empty() {
            return Err(Error::InvalidEngine("initial command is empty".into()));
        }
        if strategy == Strategy::Tap {
            let handle = generation
                .as_ref()
                .ok_or_else(|| Error::InvalidEngine("TAP strategy needs a generation network".into()))?;
            let shape = *handle.snapshot().shape();
            if shape.input_dim != initial.len() {
                return Err(Error::DimensionMismatch {
                    context: "GRU input vs command",
                    expected: initial.len(),
                    found: shape.input_dim,
                });
            }
            if shape.window != config.window {
                return Err(Error::DimensionMismatch {
                    context: "GRU window",
                    expected: config.window,
                    found: shape.window,
                });
            }
        }
        let mode = match (strategy, config.mode_policy) {
            (Strategy::Tap, ModePolicy::Offline) => Mode::Tap,
            _ => Mode::SinglePrediction,
        };
        let history_capacity = 4 * (config.window + 1) + config.horizon;
        Ok(Self {
            config,
            strategy,
            mode,
            generation,
            history: BTreeMap::new(),
            history_capacity,
            history_log: Vec::new(),
            last_receipt: None,
            candidate: None,
            short_block: Vec::new(),
            long_block: None,
            pending_long: None,
            last_actuated: initial,
            last_decided: None,
            counters: EngineCounters::default(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn counters(&self) -> EngineCounters {
        self.counters
    }

    /// Retained history, keyed by source slot.
    pub fn history(&self) -> &BTreeMap<usize, Vec<f64>> {
        &self.history
    }

    /// Every slot ever added to history, in insertion order.
    pub fn history_log(&self) -> &[usize] {
        &self.history_log
    }

    pub fn last_actuated(&self) -> &[f64] {
        &self.last_actuated
    }

    /// The long-term block `R^t` for the latest receipt, if any.
    pub fn cached_block(&mut self) -> Option<&[Vec<f64>]> {
        if let Some((net, window)) = self.pending_long.take() {
            self.long_block = net.forward(&window, self.config.horizon).ok();
        }
        self.long_block.as_deref()
    }

    /// Slots since the last on-time receipt as seen from `now`.
    pub fn slots_since_receipt(&self, now: usize) -> Option<usize> {
        self.last_receipt.map(|r| now.saturating_sub(r))
    }

    /// Adds a delivered payload to history. An on-time payload also becomes
    /// the actuation candidate for its last slot and re-triggers the
    /// predictors.
    pub fn ingest_delivery(&mut self, payload: &[CommandMatrix], on_time: bool, now: usize) -> Result<()> {
        let last = payload.last().ok_or(Error::EmptyPayload)?;
        let dim = self.last_actuated.len();
        for c in payload {
            if c.values.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "delivered command",
                    expected: dim,
                    found: c.values.len(),
                });
            }
            if c.slot > now {
                return Err(Error::InvalidPayload(format!("command for slot {} delivered at {now}", c.slot)));
            }
        }
        for c in payload {
            if let std::collections::btree_map::Entry::Vacant(e) = self.history.entry(c.slot) {
                e.insert(c.values.clone());
                self.history_log.push(c.slot);
            }
        }
        while self.history.len() > self.history_capacity {
            self.history.pop_first();
        }

        if !on_time {
            self.counters.late_receipts += 1;
            return Ok(());
        }
        self.counters.on_time_receipts += 1;
        if self.last_receipt.is_some_and(|r| r >= last.slot) {
            return Ok(());
        }
        self.last_receipt = Some(last.slot);
        self.candidate = Some(last.values.clone());
        self.short_block.clear();
        self.long_block = None;
        self.pending_long = None;
        self.refresh_predictions(last.slot);
        Ok(())
    }

    fn refresh_predictions(&mut self, t: usize) {
        if self.strategy == Strategy::NonPredictive {
            return;
        }
        if self.history.len() < self.config.ar_order + 2 {
            return;
        }
        let Some(window) = self.window_at(t) else {
            return;
        };
        let steps = match self.mode {
            Mode::Tap => 1,
            Mode::SinglePrediction => self.config.horizon,
        };
        match fit_ar(&window, self.config.ar_order, self.config.ar_ridge)
            .and_then(|m| m.predict_from_window(&window, steps))
        {
            Ok(block) => self.short_block = block,
            Err(_) => self.counters.fit_failures += 1,
        }
        if self.mode == Mode::Tap {
            if let Some(handle) = &self.generation {
                self.pending_long = Some((handle.snapshot(), window));
            }
        }
    }

    /// `W^t`: the `phi + 1` slots ending at `t`. Missing slots are linearly
    /// interpolated between neighbouring history entries; slots before the
    /// oldest entry repeat it.
    pub fn window_at(&self, t: usize) -> Option<Vec<Vec<f64>>> {
        let phi = self.config.window;
        let (&first_slot, first) = self.history.first_key_value()?;
        let mut out = Vec::with_capacity(phi + 1);
        for k in 0..=phi {
            let slot = (t + k).saturating_sub(phi);
            if t + k < phi || slot <= first_slot {
                out.push(first.clone());
                continue;
            }
            if let Some(v) = self.history.get(&slot) {
                out.push(v.clone());
                continue;
            }
            let (&a, va) = self.history.range(..slot).next_back()?;
            match self.history.range((Bound::Excluded(slot), Bound::Unbounded)).next() {
                Some((&b, vb)) => {
                    let w = (slot - a) as f64 / (b - a) as f64;
                    out.push(va.iter().zip(vb).map(|(x, y)| x + w * (y - x)).collect());
                }
                None => out.push(va.clone()),
            }
        }
        Some(out)
    }

    /// Chooses the command for slot `now`. Must be called once per slot, in
    /// increasing slot order, after that slot's deliveries were ingested.
    pub fn decide_actuation(&mut self, now: usize) -> Result<ActuationDecision> {
        if self.last_decided.is_some_and(|d| d >= now) {
            return Err(Error::AlreadyDecided(now));
        }
        self.last_decided = Some(now);

        let Some(receipt) = self.last_receipt else {
            self.counters.cold_start += 1;
            return Ok(self.hold(now, now + 1));
        };
        let s = now - receipt;
        if s == 0 {
            let command = self.candidate.clone().expect("candidate set on receipt");
            self.last_actuated = command.clone();
            return Ok(ActuationDecision {
                slot: now,
                command,
                source: Source::Actual,
                s,
            });
        }
        if self.strategy == Strategy::NonPredictive || s > self.config.horizon {
            return Ok(self.hold(now, s));
        }

        let predicted = match self.mode {
            Mode::Tap if s >= 2 => self
                .cached_block()
                .and_then(|b| b.get(s - 1))
                .map(|v| (v.clone(), Source::LongTerm)),
            _ => self.short_block.get(s - 1).map(|v| (v.clone(), Source::ShortTerm)),
        };
        match predicted {
            Some((command, source)) => {
                self.last_actuated = command.clone();
                Ok(ActuationDecision {
                    slot: now,
                    command,
                    source,
                    s,
                })
            }
            None => {
                self.counters.cold_start += 1;
                Ok(self.hold(now, s))
            }
        }
    }

    fn hold(&self, now: usize, s: usize) -> ActuationDecision {
        ActuationDecision {
            slot: now,
            command: self.last_actuated.clone(),
            source: Source::HoldLast,
            s,
        }
    }

    /// Online policy: switch to TAP once the long-term predictor measures
    /// strictly better. Never switches back.
    pub fn maybe_switch_mode(&mut self, short_val_ae: f64, long_val_ae: f64) -> Mode {
        if self.strategy == Strategy::Tap
            && self.config.mode_policy == ModePolicy::Online
            && self.mode == Mode::SinglePrediction
            && long_val_ae < short_val_ae
        {
            self.mode = Mode::Tap;
        }
        self.mode
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gru::{GruNetwork, GruShape};

    fn cfg(window: usize, horizon: usize) -> EngineConfig {
        EngineConfig {
            window,
            horizon,
            ..Default::default()
        }
    }

    fn value(t: usize) -> Vec<f64> {
        vec![0.2 + 0.01 * t as f64, 0.8 - 0.005 * t as f64]
    }

    fn cm(t: usize) -> CommandMatrix {
        CommandMatrix::new(t, value(t))
    }

    fn tap_engine(policy: ModePolicy) -> Engine {
        let net = GruNetwork::new(GruShape::new(1, 2, 4, 6, 5), 3).unwrap();
        let config = EngineConfig {
            mode_policy: policy,
            ..cfg(6, 5)
        };
        Engine::new(config, Strategy::Tap, value(0), Some(GenerationHandle::new(net))).unwrap()
    }

    #[test]
    fn fresh_receipt_is_actual_bit_exact() {
        let mut e = tap_engine(ModePolicy::Offline);
        for t in 0..10 {
            e.ingest_delivery(&[cm(t)], true, t).unwrap();
            let d = e.decide_actuation(t).unwrap();
            assert_eq!(d.source, Source::Actual);
            assert_eq!(d.command, value(t));
            assert_eq!(d.s, 0);
        }
        assert_eq!(e.cached_block().unwrap().len(), 5);
    }

    #[test]
    fn tap_routing_over_a_gap() {
        let mut e = tap_engine(ModePolicy::Offline);
        for t in 0..10 {
            e.ingest_delivery(&[cm(t)], true, t).unwrap();
            e.decide_actuation(t).unwrap();
        }
        let block = e.cached_block().unwrap().to_vec();
        let sources: Vec<_> = (10..18).map(|t| e.decide_actuation(t).unwrap()).collect();
        assert_eq!(sources[0].source, Source::ShortTerm);
        // a ramp is fitted almost exactly; the ridge leaves a small bias
        assert!((sources[0].command[0] - value(10)[0]).abs() < 1e-4);
        for (k, d) in sources[1..5].iter().enumerate() {
            assert_eq!(d.source, Source::LongTerm);
            assert_eq!(d.command, block[k + 1]);
        }
        for d in &sources[5..] {
            assert_eq!(d.source, Source::HoldLast);
            assert_eq!(d.command, block[4]);
        }
    }

    #[test]
    fn single_mode_predicts_recursively() {
        let mut e = Engine::new(cfg(6, 3), Strategy::SinglePredictive, value(0), None).unwrap();
        for t in 0..10 {
            e.ingest_delivery(&[cm(t)], true, t).unwrap();
            e.decide_actuation(t).unwrap();
        }
        for t in 10..13 {
            let d = e.decide_actuation(t).unwrap();
            assert_eq!(d.source, Source::ShortTerm);
            assert!((d.command[1] - value(t)[1]).abs() < 1e-4);
        }
        assert_eq!(e.decide_actuation(13).unwrap().source, Source::HoldLast);
    }

    #[test]
    fn non_predictive_holds_last_command() {
        let mut e = Engine::new(cfg(6, 3), Strategy::NonPredictive, value(0), None).unwrap();
        e.ingest_delivery(&[cm(0)], true, 0).unwrap();
        e.decide_actuation(0).unwrap();
        let d = e.decide_actuation(1).unwrap();
        assert_eq!((d.source, d.command), (Source::HoldLast, value(0)));
    }

    #[test]
    fn late_packet_only_grows_history() {
        let mut e = tap_engine(ModePolicy::Offline);
        e.ingest_delivery(&[cm(0)], true, 0).unwrap();
        e.decide_actuation(0).unwrap();
        e.decide_actuation(1).unwrap();
        e.ingest_delivery(&[cm(1)], false, 2).unwrap();
        assert_eq!(e.slots_since_receipt(2), Some(2));
        assert_eq!(e.history().len(), 2);
    }

    #[test]
    fn duplicates_are_stored_once() {
        let mut e = tap_engine(ModePolicy::Offline);
        e.ingest_delivery(&[cm(0), cm(1)], true, 1).unwrap();
        e.ingest_delivery(&[cm(1)], false, 2).unwrap();
        assert_eq!(e.history_log(), &[0, 1]);
    }

    #[test]
    fn cold_start_holds() {
        let mut e = tap_engine(ModePolicy::Offline);
        let d = e.decide_actuation(0).unwrap();
        assert_eq!((d.source, d.command), (Source::HoldLast, value(0)));
        e.ingest_delivery(&[cm(1)], true, 1).unwrap();
        e.decide_actuation(1).unwrap();
        assert_eq!(e.decide_actuation(2).unwrap().source, Source::HoldLast);
        assert_eq!(e.counters().cold_start, 2);
    }

    #[test]
    fn decide_twice_is_an_error() {
        let mut e = tap_engine(ModePolicy::Offline);
        e.decide_actuation(3).unwrap();
        assert!(matches!(e.decide_actuation(3), Err(Error::AlreadyDecided(3))));
    }

    #[test]
    fn window_interpolates_gaps() {
        let mut e = Engine::new(cfg(5, 2), Strategy::SinglePredictive, vec![0.0], None).unwrap();
        e.ingest_delivery(&[CommandMatrix::new(2, vec![0.2])], true, 2).unwrap();
        e.ingest_delivery(&[CommandMatrix::new(6, vec![0.6])], true, 6).unwrap();
        let w: Vec<f64> = e.window_at(6).unwrap().into_iter().map(|v| v[0]).collect();
        let expected = [0.2, 0.2, 0.3, 0.4, 0.5, 0.6];
        assert!(w.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-12), "{w:?}");
    }

    #[test]
    fn mode_switch_latches() {
        let mut e = tap_engine(ModePolicy::Online);
        assert_eq!(e.mode(), Mode::SinglePrediction);
        assert_eq!(e.maybe_switch_mode(0.05, 0.08), Mode::SinglePrediction);
        assert_eq!(e.maybe_switch_mode(0.08, 0.05), Mode::Tap);
        assert_eq!(e.maybe_switch_mode(0.01, 0.9), Mode::Tap);
        assert_eq!(tap_engine(ModePolicy::Offline).mode(), Mode::Tap);
    }

    #[test]
    fn tap_requires_matching_network() {
        assert!(Engine::new(cfg(6, 5), Strategy::Tap, value(0), None).is_err());
        let net = GruNetwork::new(GruShape::new(1, 2, 4, 8, 5), 3).unwrap();
        assert!(Engine::new(cfg(6, 5), Strategy::Tap, value(0), Some(GenerationHandle::new(net))).is_err());
    }
}
