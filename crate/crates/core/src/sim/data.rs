use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ScenarioConfig, TraceSource};
use crate::error::{Error, Result};
use crate::trace::{generate_synthetic, load_trace_csv, position_dims, NormalizationSpec, SyntheticKind, SyntheticSpec, TraceDataset};

/// SplitMix64 finaliser, used to derive independent seeds.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `stream` of episode `episode_seed`.
pub fn derive_seed(episode_seed: u64, stream: u64) -> u64 {
    mix(mix(episode_seed) ^ stream)
}

pub(crate) const STREAM_CHANNEL: u64 = 1;
pub(crate) const STREAM_TRAJECTORY: u64 = 2;
pub(crate) const STREAM_TRAINING: u64 = 3;

/// Normalized data for a scenario: the training series and the means to
/// produce each episode's source trajectory.
#[derive(Debug, Clone)]
pub struct PreparedData {
    normalization: NormalizationSpec,
    training: Vec<Vec<Vec<f64>>>,
    held_out: Option<Vec<Vec<f64>>>,
    synthetic: Option<SyntheticSpec>,
    episode_slots: Option<usize>,
    position_dims: Vec<usize>,
    dim: usize,
}

impl PreparedData {
    pub fn prepare(config: &ScenarioConfig) -> Result<Self> {
        match (&config.data.synthetic, &config.data.trace) {
            (Some(spec), None) => Self::from_synthetic(spec, config.data.training_episodes),
            (None, Some(trace)) => Self::from_trace(trace),
            _ => Err(Error::InvalidScenario("data needs exactly one of `synthetic` or `trace`".into())),
        }
    }

    fn from_synthetic(spec: &SyntheticSpec, training_episodes: usize) -> Result<Self> {
        let raw: Vec<TraceDataset> = (0..training_episodes as u64)
            .map(|k| generate_synthetic(&spec.with_seed(derive_seed(spec.seed, STREAM_TRAINING + k))))
            .collect::<Result<_>>()?;
        let rows: Vec<Vec<f64>> = raw.iter().flat_map(|d| d.samples().iter().cloned()).collect();
        let normalization = NormalizationSpec::fit_rows(&rows);
        let training = raw.iter().map(|d| normalization.transform(d)).collect::<Result<_>>()?;
        Ok(Self {
            normalization,
            training,
            held_out: None,
            synthetic: Some(spec.clone()),
            episode_slots: None,
            position_dims: position_dims(spec.dof_count, spec.signals_per_dof),
            dim: spec.dof_count * spec.signals_per_dof,
        })
    }

    fn from_trace(source: &TraceSource) -> Result<Self> {
        let data = load_trace_csv(&source.path, source.signals_per_dof)?.with_sample_rate(source.sample_rate_hz)?;
        let (train, test) = data.split(source.train_fraction)?;
        let normalization = NormalizationSpec::fit(&train);
        if let Some(n) = source.episode_slots {
            if n < 2 || n > test.len() {
                return Err(Error::InvalidScenario(format!(
                    "episode_slots {n} must be between 2 and the held-out length {}",
                    test.len()
                )));
            }
        }
        Ok(Self {
            training: vec![normalization.transform(&train)?],
            held_out: Some(normalization.transform(&test)?),
            normalization,
            synthetic: None,
            episode_slots: source.episode_slots,
            position_dims: data.position_dims(),
            dim: data.dim(),
        })
    }

    pub fn normalization(&self) -> &NormalizationSpec {
        &self.normalization
    }

    /// Normalized pre-training series; windows never straddle two series.
    pub fn training(&self) -> &[Vec<Vec<f64>>] {
        &self.training
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position_dims(&self) -> &[usize] {
        &self.position_dims
    }

    /// Waypoint slots of a minimum-jerk source.
    pub fn source_waypoints(&self) -> Vec<usize> {
        match &self.synthetic {
            Some(SyntheticSpec {
                kind: SyntheticKind::MinimumJerk { waypoints, .. },
                ..
            }) => waypoints.iter().map(|w| w.slot).collect(),
            _ => Vec::new(),
        }
    }

    /// The normalized source trajectory of the episode with `episode_seed`.
    pub fn episode(&self, episode_seed: u64) -> Result<Vec<Vec<f64>>> {
        let seed = derive_seed(episode_seed, STREAM_TRAJECTORY);
        if let Some(spec) = &self.synthetic {
            let raw = generate_synthetic(&spec.with_seed(seed))?;
            return self.normalization.transform(&raw);
        }
        let held = self.held_out.as_ref().expect("trace data has a held-out part");
        match self.episode_slots {
            Some(n) if n < held.len() => {
                let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..=held.len() - n);
                Ok(held[start..start + n].to_vec())
            }
            _ => Ok(held.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stream_and_episode() {
        assert_ne!(derive_seed(1, STREAM_CHANNEL), derive_seed(1, STREAM_TRAJECTORY));
        assert_ne!(derive_seed(1, STREAM_CHANNEL), derive_seed(2, STREAM_CHANNEL));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
