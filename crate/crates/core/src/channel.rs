//! The impaired command link.
//!
//! Time is counted in slots. A packet sent at slot `t` with sampled latency
//! `L` ms arrives at slot `t + ceil(L / slot_duration)`; it is on time when
//! that delay is at most `deadline_slots`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::CommandMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Independent loss plus Normal latency truncated at zero.
    Stochastic,
    /// One packet per `period_k` slots, delivered instantly.
    Periodic,
    /// Periodic gating followed by stochastic loss and latency.
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatePolicy {
    /// Late packets are delivered flagged `on_time = false`.
    History,
    /// Late packets are discarded by the channel.
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    #[serde(default)]
    pub latency_mean_ms: f64,
    /// Standard deviation (not variance) of the latency, in ms.
    #[serde(default)]
    pub latency_std_ms: f64,
    #[serde(default)]
    pub loss_prob: f64,
    #[serde(default = "one")]
    pub period_k: usize,
    pub slot_duration_ms: f64,
    #[serde(default = "one")]
    pub deadline_slots: usize,
    #[serde(default = "default_late_policy")]
    pub late_policy: LatePolicy,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

fn default_late_policy() -> LatePolicy {
    LatePolicy::History
}

impl ChannelConfig {
    pub fn perfect(slot_duration_ms: f64) -> Self {
        Self {
            mode: ChannelMode::Stochastic,
            latency_mean_ms: 0.0,
            latency_std_ms: 0.0,
            loss_prob: 0.0,
            period_k: 1,
            slot_duration_ms,
            deadline_slots: 1,
            late_policy: LatePolicy::History,
            seed: 0,
        }
    }

    pub fn periodic(period_k: usize, slot_duration_ms: f64) -> Self {
        Self {
            mode: ChannelMode::Periodic,
            period_k,
            ..Self::perfect(slot_duration_ms)
        }
    }

    pub fn normal_latency(mean_ms: f64, std_ms: f64, slot_duration_ms: f64) -> Self {
        Self {
            latency_mean_ms: mean_ms,
            latency_std_ms: std_ms,
            ..Self::perfect(slot_duration_ms)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidChannel(m));
        if !(self.latency_std_ms >= 0.0 && self.latency_std_ms.is_finite()) {
            return bad(format!("latency_std_ms {} must be >= 0", self.latency_std_ms));
        }
        if !self.latency_mean_ms.is_finite() {
            return bad("latency_mean_ms must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return bad(format!("loss_prob {} outside [0, 1]", self.loss_prob));
        }
        if self.period_k == 0 {
            return bad("period_k must be >= 1".into());
        }
        if !(self.slot_duration_ms > 0.0 && self.slot_duration_ms.is_finite()) {
            return bad(format!("slot_duration_ms {} must be > 0", self.slot_duration_ms));
        }
        if self.deadline_slots == 0 {
            return bad("deadline_slots must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub send_slot: usize,
    pub payload: Vec<CommandMatrix>,
}

impl Packet {
    /// Payload slots must be strictly increasing and end at `send_slot`.
    pub fn new(id: u64, send_slot: usize, payload: Vec<CommandMatrix>) -> Result<Self> {
        let last = payload.last().ok_or(Error::EmptyPayload)?;
        if last.slot != send_slot {
            return Err(Error::InvalidPayload(format!(
                "last command is for slot {}, packet sent at {send_slot}",
                last.slot
            )));
        }
        if payload.windows(2).any(|w| w[1].slot <= w[0].slot) {
            return Err(Error::InvalidPayload("payload slots not increasing".into()));
        }
        Ok(Self {
            id,
            send_slot,
            payload,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryEvent {
    pub packet_id: u64,
    pub send_slot: usize,
    pub arrival_slot: usize,
    pub on_time: bool,
    pub payload: Vec<CommandMatrix>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub accepted: u64,
    pub rejected: u64,
    pub lost: u64,
    pub delivered: u64,
    pub late_dropped: u64,
}

#[derive(Debug)]
pub struct Channel {
    config: ChannelConfig,
    rng: ChaCha8Rng,
    in_flight: BTreeMap<(usize, u64), Packet>,
    clock: Option<usize>,
    stats: ChannelStats,
}

impl Channel {
    pub fn new(config: ChannelConfig) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            rng,
            in_flight: BTreeMap::new(),
            clock: None,
            stats: ChannelStats::default(),
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn stats(&self) -> ChannelStats {
        self.stats
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    /// Offers a packet to the link at slot `now`. Returns `false` when periodic
    /// gating refuses it; a packet that is accepted may still be lost.
    pub fn transmit(&mut self, packet: Packet, now: usize) -> Result<bool> {
        if packet.payload.is_empty() {
            return Err(Error::EmptyPayload);
        }
        if packet.send_slot != now {
            return Err(Error::InvalidPayload(format!(
                "packet for slot {} transmitted at slot {now}",
                packet.send_slot
            )));
        }
        // Draw loss and latency for every packet so that the random stream
        // depends only on the transmit sequence.
        let stochastic = matches!(
            self.config.mode,
            ChannelMode::Stochastic | ChannelMode::Composite
        );
        let (lost, delay) = if stochastic {
            let u: f64 = self.rng.random();
            let z: f64 = self.rng.sample(StandardNormal);
            (u < self.config.loss_prob, self.latency_slots(z))
        } else {
            (false, 0)
        };

        let gated = matches!(
            self.config.mode,
            ChannelMode::Periodic | ChannelMode::Composite
        );
        if gated && !now.is_multiple_of(self.config.period_k) {
            self.stats.rejected += 1;
            return Ok(false);
        }
        self.stats.accepted += 1;
        if lost {
            self.stats.lost += 1;
            return Ok(true);
        }
        self.in_flight.insert((now + delay, packet.id), packet);
        Ok(true)
    }

    /// Latency truncated at zero, converted to whole slots.
    fn latency_slots(&self, z: f64) -> usize {
        let ms = (self.config.latency_mean_ms + self.config.latency_std_ms * z).max(0.0);
        (ms / self.config.slot_duration_ms).ceil() as usize
    }

    /// Delivers every in-flight packet due by `now`, ordered by arrival slot
    /// then packet id. The clock must strictly increase between calls.
    pub fn advance_slot(&mut self, now: usize) -> Result<Vec<DeliveryEvent>> {
        if let Some(previous) = self.clock {
            if now <= previous {
                return Err(Error::NonMonotonicClock { previous, now });
            }
        }
        self.clock = Some(now);

        let later = self.in_flight.split_off(&(now + 1, 0));
        let due = std::mem::replace(&mut self.in_flight, later);
        let mut events = Vec::with_capacity(due.len());
        for ((arrival_slot, id), packet) in due {
            let on_time = arrival_slot - packet.send_slot <= self.config.deadline_slots;
            if !on_time && self.config.late_policy == LatePolicy::Drop {
                self.stats.late_dropped += 1;
                continue;
            }
            self.stats.delivered += 1;
            events.push(DeliveryEvent {
                packet_id: id,
                send_slot: packet.send_slot,
                arrival_slot,
                on_time,
                payload: packet.payload,
            });
        }
        Ok(events)
    }
}
