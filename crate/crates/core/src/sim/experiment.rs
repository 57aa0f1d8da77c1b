use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::data::{derive_seed, mix, PreparedData, STREAM_CHANNEL};
use super::episode::{average_ae, evaluate_success, simulate, EpisodeInputs, EpisodeTrace, TrainerSummary};
use super::pretrain::{pretrain, PretrainSummary};
use crate::engine::{ModePolicy, OnlineTrainer, Source, Strategy};
use crate::error::{Error, Result};
use crate::gru::{load_weights_expecting, GenerationHandle, GruNetwork, GruShape};

/// One episode of one strategy, with its task outcome.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub seed: u64,
    pub strategy: Strategy,
    pub trace: EpisodeTrace,
    pub success: bool,
    pub average_ae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotStat {
    pub slot: usize,
    pub episodes: usize,
    pub mean_ae: f64,
    /// Mean AE and count per decision source at this slot.
    pub by_source: BTreeMap<Source, (f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub episodes: usize,
    pub successes: usize,
    pub success_probability: f64,
    pub mean_average_ae: f64,
    pub std_average_ae: f64,
    pub episode_average_ae: Vec<f64>,
    pub source_counts: BTreeMap<Source, u64>,
    pub per_slot: Vec<SlotStat>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub online: Vec<TrainerSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: ScenarioConfig,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretraining: Option<PretrainSummary>,
    pub strategies: Vec<StrategyReport>,
}

impl ExperimentReport {
    pub fn strategy(&self, strategy: Strategy) -> Option<&StrategyReport> {
        self.strategies.iter().find(|r| r.strategy == strategy)
    }
}

/// A prepared scenario: normalized data plus, for TAP, the network.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    data: PreparedData,
    network: Option<GruNetwork>,
    pretraining: Option<PretrainSummary>,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let data = PreparedData::prepare(&config)?;
        Ok(Self {
            config,
            data,
            network: None,
            pretraining: None,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn data(&self) -> &PreparedData {
        &self.data
    }

    pub fn network(&self) -> Option<&GruNetwork> {
        self.network.as_ref()
    }

    pub fn pretraining(&self) -> Option<&PretrainSummary> {
        self.pretraining.as_ref()
    }

    pub fn gru_shape(&self) -> GruShape {
        let t = &self.config.training;
        GruShape::new(t.layers, self.data.dim(), t.hidden, self.config.engine.window, self.config.engine.horizon)
    }

    pub fn set_network(&mut self, net: GruNetwork) -> Result<()> {
        let expected = self.gru_shape();
        if *net.shape() != expected {
            return Err(Error::InvalidScenario(format!(
                "network shape {:?} does not match scenario shape {expected:?}",
                net.shape()
            )));
        }
        self.network = Some(net);
        Ok(())
    }

    fn needs_network(&self) -> bool {
        self.config.strategies.contains(&Strategy::Tap)
    }

    /// Loads the configured weights, or pre-trains (offline policy) or
    /// randomly initialises (online policy) a network when TAP is compared.
    pub fn prepare_network(&mut self, steps_override: Option<usize>) -> Result<()> {
        if !self.needs_network() || self.network.is_some() {
            return Ok(());
        }
        let shape = self.gru_shape();
        if let Some(path) = &self.config.training.weights {
            self.network = Some(load_weights_expecting(path, &shape)?);
            return Ok(());
        }
        if self.config.engine.mode_policy == ModePolicy::Online {
            self.network = Some(GruNetwork::new(shape, self.config.training.seed)?);
            return Ok(());
        }
        self.train(steps_override).map(|_| ())
    }

    /// Offline pre-training on the scenario's training data.
    pub fn train(&mut self, steps_override: Option<usize>) -> Result<&PretrainSummary> {
        let steps = steps_override.unwrap_or(self.config.training.steps);
        let (net, summary) = pretrain(self.data.training(), &self.config.engine, &self.config.training, steps)?;
        self.network = Some(net);
        Ok(self.pretraining.insert(summary))
    }

    fn checkpoints(&self, len: usize) -> Vec<usize> {
        if !self.config.experiment.waypoints.is_empty() {
            return self.config.experiment.waypoints.clone();
        }
        let from_source = self.data.source_waypoints();
        if from_source.is_empty() {
            vec![len.saturating_sub(1)]
        } else {
            from_source.into_iter().map(|w| w.min(len.saturating_sub(1))).collect()
        }
    }

    /// Source trajectory of the episode with `seed`, normalized.
    pub fn trajectory(&self, seed: u64) -> Result<Vec<Vec<f64>>> {
        let traj = self.data.episode(seed)?;
        if let Some(budget) = self.config.experiment.slot_budget {
            if traj.len() > budget {
                return Err(Error::InvalidScenario(format!(
                    "trajectory of {} slots exceeds the slot budget {budget}",
                    traj.len()
                )));
            }
        }
        Ok(traj)
    }

    /// One closed-loop episode. Every strategy sees the same trajectory and
    /// channel randomness for a given seed.
    pub fn run_episode(&self, strategy: Strategy, seed: u64) -> Result<EpisodeResult> {
        let trajectory = self.trajectory(seed)?;
        self.run_on(&trajectory, strategy, seed)
    }

    fn run_on(&self, trajectory: &[Vec<f64>], strategy: Strategy, seed: u64) -> Result<EpisodeResult> {
        let mut channel = self.config.channel.clone();
        channel.seed = mix(derive_seed(seed, STREAM_CHANNEL) ^ self.config.channel.seed);
        let engine = self.config.engine.clone();
        let (generation, trainer) = if strategy == Strategy::Tap {
            let net = self
                .network
                .clone()
                .ok_or_else(|| Error::InvalidScenario("TAP needs a network; load or train one first".into()))?;
            if engine.mode_policy == ModePolicy::Online {
                let mut online = self.config.training.online.clone();
                online.seed = derive_seed(seed, online.seed);
                (None, Some(OnlineTrainer::new(net, &engine, online)))
            } else {
                (Some(GenerationHandle::new(net)), None)
            }
        } else {
            (None, None)
        };
        let trace = simulate(
            trajectory,
            EpisodeInputs {
                channel,
                engine,
                strategy,
                generation,
                trainer,
            },
        )?;
        let e = &self.config.experiment;
        let success = evaluate_success(
            &trace.records,
            &self.checkpoints(trajectory.len()),
            e.success_tolerance,
            e.dwell,
            self.data.position_dims(),
        );
        Ok(EpisodeResult {
            seed,
            strategy,
            average_ae: average_ae(&trace.records),
            trace,
            success,
        })
    }

    /// Runs every strategy on episodes `base_seed + i`. Episodes run in
    /// parallel (capped by `TAPSIM_THREADS`); results are reduced in seed
    /// order so the report does not depend on scheduling.
    pub fn run_experiment(&self) -> Result<ExperimentReport> {
        if self.needs_network() && self.network.is_none() {
            return Err(Error::InvalidScenario("TAP needs a network; load or train one first".into()));
        }
        let e = &self.config.experiment;
        let seeds: Vec<u64> = (0..e.episodes as u64).map(|i| e.base_seed.wrapping_add(i)).collect();
        let strategies = self.config.strategies.clone();
        let work = || -> Result<Vec<Vec<EpisodeSummary>>> {
            seeds
                .par_iter()
                .map(|&seed| {
                    let trajectory = self.trajectory(seed)?;
                    strategies
                        .iter()
                        .map(|&s| self.run_on(&trajectory, s, seed).map(EpisodeSummary::from))
                        .collect()
                })
                .collect()
        };
        let per_seed = match threads_from_env() {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|err| Error::InvalidScenario(format!("thread pool: {err}")))?
                .install(work)?,
            None => work()?,
        };
        let reports = strategies
            .iter()
            .enumerate()
            .map(|(k, &strategy)| aggregate(strategy, per_seed.iter().map(|row| &row[k])))
            .collect();
        Ok(ExperimentReport {
            scenario: self.config.clone(),
            seeds,
            pretraining: self.pretraining.clone(),
            strategies: reports,
        })
    }
}

fn threads_from_env() -> Option<usize> {
    std::env::var("TAPSIM_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

struct EpisodeSummary {
    success: bool,
    average_ae: f64,
    slot_ae: Vec<f64>,
    tags: Vec<Source>,
    trainer: Option<TrainerSummary>,
}

impl From<EpisodeResult> for EpisodeSummary {
    fn from(r: EpisodeResult) -> Self {
        let slot_ae = r
            .trace
            .records
            .iter()
            .map(|rec| rec.ae.iter().sum::<f64>() / rec.ae.len() as f64)
            .collect();
        let tags = r.trace.records.iter().map(|rec| rec.tag).collect();
        Self {
            success: r.success,
            average_ae: r.average_ae,
            slot_ae,
            tags,
            trainer: r.trace.trainer,
        }
    }
}

fn aggregate<'a>(strategy: Strategy, episodes: impl Iterator<Item = &'a EpisodeSummary>) -> StrategyReport {
    let episodes: Vec<&EpisodeSummary> = episodes.collect();
    let n = episodes.len();
    let successes = episodes.iter().filter(|e| e.success).count();
    let averages: Vec<f64> = episodes.iter().map(|e| e.average_ae).collect();
    let mean = averages.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (averages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };

    let longest = episodes.iter().map(|e| e.slot_ae.len()).max().unwrap_or(0);
    let mut per_slot = Vec::with_capacity(longest);
    let mut source_counts = BTreeMap::new();
    for slot in 0..longest {
        let mut total = 0.0;
        let mut count = 0;
        let mut by_source: BTreeMap<Source, (f64, usize)> = BTreeMap::new();
        for e in &episodes {
            if let (Some(&ae), Some(&tag)) = (e.slot_ae.get(slot), e.tags.get(slot)) {
                total += ae;
                count += 1;
                let entry = by_source.entry(tag).or_default();
                entry.0 += ae;
                entry.1 += 1;
                *source_counts.entry(tag).or_insert(0u64) += 1;
            }
        }
        for v in by_source.values_mut() {
            v.0 /= v.1 as f64;
        }
        per_slot.push(SlotStat {
            slot,
            episodes: count,
            mean_ae: total / count as f64,
            by_source,
        });
    }

    StrategyReport {
        strategy,
        episodes: n,
        successes,
        success_probability: successes as f64 / n as f64,
        mean_average_ae: mean,
        std_average_ae: std,
        episode_average_ae: averages,
        source_counts,
        per_slot,
        online: episodes.iter().filter_map(|e| e.trainer.clone()).collect(),
    }
}
