use serde::{Deserialize, Serialize};

use crate::channel::{Channel, ChannelConfig, Packet};
use crate::engine::{bundle, Engine, EngineConfig, EngineCounters, OnlineTrainer, Source, Strategy, TrainerReport};
use crate::error::{Error, Result};
use crate::gru::GenerationHandle;
use crate::trace::CommandMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub source: Vec<f64>,
    pub actuated: Vec<f64>,
    /// `|actuated - source|` per dimension.
    pub ae: Vec<f64>,
    pub tag: Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub packet_id: u64,
    pub send_slot: usize,
    pub arrival_slot: usize,
    pub on_time: bool,
}

/// Everything one closed-loop run produced.
#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub records: Vec<SlotRecord>,
    pub deliveries: Vec<DeliveryRecord>,
    pub history_log: Vec<usize>,
    pub counters: EngineCounters,
    pub trainer: Option<TrainerSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerSummary {
    pub steps: u64,
    pub switched_at: Option<u64>,
    pub reports: Vec<TrainerReport>,
}

/// What the closed loop needs besides the trajectory.
#[derive(Debug)]
pub struct EpisodeInputs {
    pub channel: ChannelConfig,
    pub engine: EngineConfig,
    pub strategy: Strategy,
    /// Offline TAP: the pre-trained generation network.
    pub generation: Option<GenerationHandle>,
    /// Online TAP: the trainer that owns the generation network.
    pub trainer: Option<OnlineTrainer>,
}

/// Runs the slotted loop over `trajectory` (normalized commands).
///
/// The source emits its command at every slot (or a bundle every `mu`
/// slots). A command for slot `t` counts as received on time if it arrives
/// within `deadline_slots`, so slot `t` is actuated once the clock reaches
/// `t + deadline_slots`, using only packets sent at or before `t`.
pub fn simulate(trajectory: &[Vec<f64>], inputs: EpisodeInputs) -> Result<EpisodeTrace> {
    if trajectory.is_empty() {
        return Err(Error::InvalidScenario("empty trajectory".into()));
    }
    let EpisodeInputs {
        channel,
        engine: engine_config,
        strategy,
        generation,
        mut trainer,
    } = inputs;
    let deadline = channel.deadline_slots;
    let mu = engine_config.mu();
    let mut link = Channel::new(channel)?;
    let generation = match &trainer {
        Some(t) => Some(t.generation()),
        None => generation,
    };
    let mut engine = Engine::new(engine_config, strategy, trajectory[0].clone(), generation)?;

    let t_end = trajectory.len();
    let mut pending = Vec::new();
    let mut records = Vec::with_capacity(t_end);
    let mut deliveries = Vec::new();
    let mut next_id = 0u64;

    for clock in 0..t_end + deadline {
        if clock < t_end && clock % mu == 0 {
            let first = (clock + 1).saturating_sub(mu);
            let commands: Vec<CommandMatrix> = (first..=clock)
                .map(|s| CommandMatrix::new(s, trajectory[s].clone()))
                .collect();
            let payload = if commands.len() == mu { bundle(&commands, mu)? } else { commands };
            link.transmit(Packet::new(next_id, clock, payload)?, clock)?;
            next_id += 1;
        }
        for event in link.advance_slot(clock)? {
            deliveries.push(DeliveryRecord {
                packet_id: event.packet_id,
                send_slot: event.send_slot,
                arrival_slot: event.arrival_slot,
                on_time: event.on_time,
            });
            pending.push(event);
        }
        let Some(t) = clock.checked_sub(deadline) else {
            continue;
        };
        let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut pending).into_iter().partition(|e| e.send_slot <= t);
        pending = later;
        for event in due {
            engine.ingest_delivery(&event.payload, event.on_time, t)?;
        }
        let decision = engine.decide_actuation(t)?;
        if let Some(trainer) = trainer.as_mut() {
            trainer.on_slot(&mut engine)?;
        }
        let source = &trajectory[t];
        let ae = decision.command.iter().zip(source).map(|(a, s)| (a - s).abs()).collect();
        records.push(SlotRecord {
            slot: t,
            source: source.clone(),
            actuated: decision.command,
            ae,
            tag: decision.source,
        });
    }

    Ok(EpisodeTrace {
        records,
        deliveries,
        history_log: engine.history_log().to_vec(),
        counters: engine.counters(),
        trainer: trainer.map(|t| TrainerSummary {
            steps: t.steps(),
            switched_at: t.switched_at(),
            reports: t.reports().to_vec(),
        }),
    })
}

/// Mean AE over slots and dimensions.
pub fn average_ae(records: &[SlotRecord]) -> f64 {
    let (sum, n) = records
        .iter()
        .flat_map(|r| r.ae.iter())
        .fold((0.0, 0usize), |(s, n), &e| (s + e, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn success_probability(successes: &[bool]) -> f64 {
    if successes.is_empty() {
        return 0.0;
    }
    successes.iter().filter(|&&s| s).count() as f64 / successes.len() as f64
}

/// True when, for every checkpoint slot `w`, the position error (max over
/// `position_dims`) stays within `tolerance` for `dwell` consecutive slots
/// somewhere in `[w - dwell, w + dwell]`.
pub fn evaluate_success(
    records: &[SlotRecord],
    waypoints: &[usize],
    tolerance: f64,
    dwell: usize,
    position_dims: &[usize],
) -> bool {
    let n = records.len();
    let within = |r: &SlotRecord| position_dims.iter().all(|&d| r.ae[d] <= tolerance);
    waypoints.iter().all(|&w| {
        if n == 0 || w >= n {
            return false;
        }
        let lo = w.saturating_sub(dwell);
        let hi = (w + dwell).min(n - 1);
        let mut run = 0;
        for r in &records[lo..=hi] {
            run = if within(r) { run + 1 } else { 0 };
            if run >= dwell {
                return true;
            }
        }
        false
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(slot: usize, ae: f64) -> SlotRecord {
        SlotRecord {
            slot,
            source: vec![0.0],
            actuated: vec![ae],
            ae: vec![ae],
            tag: Source::Actual,
        }
    }

    #[test]
    fn average_examples() {
        assert!((average_ae(&[rec(0, 0.1), rec(1, 0.3)]) - 0.2).abs() < 1e-15);
        let outcomes: Vec<bool> = (0..100).map(|i| i < 83).collect();
        assert_eq!(success_probability(&outcomes), 0.83);
    }

    #[test]
    fn success_examples() {
        let perfect: Vec<_> = (0..20).map(|t| rec(t, 0.0)).collect();
        assert!(evaluate_success(&perfect, &[5, 19], 0.05, 3, &[0]));
        let missed: Vec<_> = (0..20).map(|t| rec(t, if (2..=8).contains(&t) { 0.1 } else { 0.0 })).collect();
        assert!(!evaluate_success(&missed, &[5], 0.05, 3, &[0]));
        // two good slots on the edge of the window are not enough
        let edge: Vec<_> = (0..20).map(|t| rec(t, if (2..=6).contains(&t) { 0.1 } else { 0.0 })).collect();
        assert!(!evaluate_success(&edge, &[5], 0.05, 3, &[0]));
        assert!(!evaluate_success(&edge, &[4, 12], 0.05, 3, &[0]));
        assert!(evaluate_success(&edge, &[12], 0.05, 3, &[0]));
    }

    #[test]
    fn perfect_channel_tracks_exactly() {
        let traj: Vec<Vec<f64>> = (0..40).map(|t| vec![(t as f64 * 0.3).sin() * 0.4 + 0.5]).collect();
        for strategy in [Strategy::NonPredictive, Strategy::SinglePredictive] {
            let out = simulate(
                &traj,
                EpisodeInputs {
                    channel: ChannelConfig::perfect(10.0),
                    engine: EngineConfig { window: 6, ..Default::default() },
                    strategy,
                    generation: None,
                    trainer: None,
                },
            )
            .unwrap();
            assert_eq!(out.records.len(), 40);
            assert!(out.records.iter().all(|r| r.ae[0] == 0.0 && r.tag == Source::Actual));
        }
    }

    #[test]
    fn total_loss_holds_initial_value() {
        let traj: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64 / 10.0]).collect();
        let channel = ChannelConfig {
            loss_prob: 1.0,
            ..ChannelConfig::perfect(10.0)
        };
        let out = simulate(
            &traj,
            EpisodeInputs {
                channel,
                engine: EngineConfig { window: 6, ..Default::default() },
                strategy: Strategy::NonPredictive,
                generation: None,
                trainer: None,
            },
        )
        .unwrap();
        for r in &out.records {
            assert_eq!(r.actuated, traj[0]);
            assert_eq!(r.ae[0], (traj[r.slot][0] - traj[0][0]).abs());
        }
    }
}
