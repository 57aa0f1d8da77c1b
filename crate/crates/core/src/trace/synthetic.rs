use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_signals_per_dof, TraceDataset, DEFAULT_SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dof_count: usize,
    pub duration_slots: usize,
    #[serde(default = "one")]
    pub signals_per_dof: usize,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub kind: SyntheticKind,
}

fn one() -> usize {
    1
}

fn default_rate() -> f64 {
    DEFAULT_SAMPLE_RATE_HZ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Rest-to-rest quintic segments between waypoints. Each waypoint
    /// coordinate is shifted by a seeded uniform offset in `[-jitter, jitter]`.
    MinimumJerk {
        waypoints: Vec<Waypoint>,
        #[serde(default)]
        jitter: f64,
    },
    /// Per DoF: `offset + sum_k a_k sin(2 pi t / P_k + theta_k)` with seeded
    /// phases, `a_k` drawn from `[amplitude/2, amplitude]` and `P_k` jittered
    /// by up to `period_jitter` (relative).
    SinusoidMixture {
        components: Vec<SinusoidComponent>,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        period_jitter: f64,
    },
    /// Rotary joints turning at a constant rate; the reported angle is the
    /// fraction of a turn, wrapping from 1 back to 0. Initial phases are seeded.
    ConstantVelocity { cycles_per_slot: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub slot: usize,
    /// One value per DoF, or a single value applied to every DoF.
    pub position: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidComponent {
    pub period_slots: f64,
    pub amplitude: f64,
}

impl SyntheticSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Position, velocity and acceleration of one DoF, derivatives per slot.
type Kinematics = [f64; 3];

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TraceDataset> {
    if spec.dof_count == 0 {
        return Err(Error::InvalidSynthetic("dof_count must be positive".into()));
    }
    if spec.duration_slots < 2 {
        return Err(Error::InvalidSynthetic(format!(
            "duration_slots must be at least 2, got {}",
            spec.duration_slots
        )));
    }
    check_signals_per_dof(spec.signals_per_dof)
        .map_err(|_| Error::InvalidSynthetic("signals_per_dof must be 1 or 3".into()))?;
    let rate = spec.sample_rate_hz;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidSynthetic(format!("sample rate {rate} must be positive")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let columns: Vec<Vec<Kinematics>> = match &spec.kind {
        SyntheticKind::MinimumJerk { waypoints, jitter } => {
            minimum_jerk(spec, waypoints, *jitter, &mut rng)?
        }
        SyntheticKind::SinusoidMixture {
            components,
            offset,
            period_jitter,
        } => sinusoids(spec, components, *offset, *period_jitter, &mut rng)?,
        SyntheticKind::ConstantVelocity { cycles_per_slot } => {
            constant_velocity(spec, cycles_per_slot, &mut rng)?
        }
    };

    let samples = (0..spec.duration_slots)
        .map(|t| {
            columns
                .iter()
                .flat_map(|col| {
                    let [p, v, a] = col[t];
                    if spec.signals_per_dof == 1 {
                        vec![p]
                    } else {
                        vec![p, v * rate, a * rate * rate]
                    }
                })
                .collect()
        })
        .collect();
    TraceDataset::new(spec.dof_count, spec.signals_per_dof, rate, samples)
}

fn per_dof<'a>(values: &'a [f64], dofs: usize, what: &str) -> Result<Box<dyn Fn(usize) -> f64 + 'a>> {
    match values.len() {
        1 => Ok(Box::new(move |_| values[0])),
        n if n == dofs => Ok(Box::new(move |d| values[d])),
        n => Err(Error::InvalidSynthetic(format!(
            "{what} has {n} values; expected 1 or {dofs}"
        ))),
    }
}

fn minimum_jerk(
    spec: &SyntheticSpec,
    waypoints: &[Waypoint],
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Kinematics>>> {
    if waypoints.len() < 2 {
        return Err(Error::InvalidSynthetic(format!(
            "minimum-jerk needs at least 2 waypoints, got {}",
            waypoints.len()
        )));
    }
    if waypoints.windows(2).any(|w| w[1].slot <= w[0].slot) {
        return Err(Error::InvalidSynthetic(
            "waypoint slots must be strictly increasing".into(),
        ));
    }
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::InvalidSynthetic(format!("jitter {jitter} must be non-negative")));
    }

    let dofs = spec.dof_count;
    // targets[w][d]
    let mut targets = Vec::with_capacity(waypoints.len());
    for wp in waypoints {
        let base = per_dof(&wp.position, dofs, "waypoint position")?;
        let row: Vec<f64> = (0..dofs)
            .map(|d| {
                let shift = if jitter > 0.0 {
                    rng.random_range(-jitter..=jitter)
                } else {
                    0.0
                };
                base(d) + shift
            })
            .collect();
        targets.push(row);
    }

    Ok((0..dofs)
        .map(|d| {
            (0..spec.duration_slots)
                .map(|t| {
                    let seg = waypoints.partition_point(|w| w.slot <= t);
                    if seg == 0 {
                        return [targets[0][d], 0.0, 0.0];
                    }
                    if seg == waypoints.len() {
                        return [targets[seg - 1][d], 0.0, 0.0];
                    }
                    let (a, b) = (&waypoints[seg - 1], &waypoints[seg]);
                    let span = (b.slot - a.slot) as f64;
                    let tau = (t - a.slot) as f64 / span;
                    let delta = targets[seg][d] - targets[seg - 1][d];
                    let (s, ds, dds) = min_jerk_profile(tau);
                    [
                        targets[seg - 1][d] + delta * s,
                        delta * ds / span,
                        delta * dds / (span * span),
                    ]
                })
                .collect()
        })
        .collect())
}

/// `s(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5` and its first two derivatives.
pub(crate) fn min_jerk_profile(tau: f64) -> (f64, f64, f64) {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    (
        t3 * (10.0 - 15.0 * tau + 6.0 * t2),
        30.0 * t2 * (1.0 - 2.0 * tau + t2),
        60.0 * tau - 180.0 * t2 + 120.0 * t3,
    )
}

fn sinusoids(
    spec: &SyntheticSpec,
    components: &[SinusoidComponent],
    offset: f64,
    period_jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Kinematics>>> {
    if components.is_empty() {
        return Err(Error::InvalidSynthetic("sinusoid mixture needs components".into()));
    }
    if !(0.0..1.0).contains(&period_jitter) {
        return Err(Error::InvalidSynthetic(format!(
            "period_jitter {period_jitter} must be in [0, 1)"
        )));
    }
    for c in components {
        if !(c.period_slots > 0.0 && c.period_slots.is_finite()) || !c.amplitude.is_finite() {
            return Err(Error::InvalidSynthetic(format!("bad component {c:?}")));
        }
    }

    Ok((0..spec.dof_count)
        .map(|_| {
            let drawn: Vec<(f64, f64, f64)> = components
                .iter()
                .map(|c| {
                    let amp = c.amplitude.abs() * rng.random_range(0.5..=1.0);
                    let period = if period_jitter > 0.0 {
                        c.period_slots * (1.0 + rng.random_range(-period_jitter..=period_jitter))
                    } else {
                        c.period_slots
                    };
                    let phase = rng.random_range(0.0..TAU);
                    (amp, TAU / period, phase)
                })
                .collect();
            (0..spec.duration_slots)
                .map(|t| {
                    let t = t as f64;
                    drawn.iter().fold([offset, 0.0, 0.0], |[p, v, a], &(amp, w, ph)| {
                        let arg = w * t + ph;
                        [
                            p + amp * arg.sin(),
                            v + amp * w * arg.cos(),
                            a - amp * w * w * arg.sin(),
                        ]
                    })
                })
                .collect()
        })
        .collect())
}

fn constant_velocity(
    spec: &SyntheticSpec,
    cycles_per_slot: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Kinematics>>> {
    let rate = per_dof(cycles_per_slot, spec.dof_count, "cycles_per_slot")?;
    if cycles_per_slot.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSynthetic("cycles_per_slot must be finite".into()));
    }
    Ok((0..spec.dof_count)
        .map(|d| {
            let v = rate(d);
            let phase: f64 = rng.random_range(0.0..1.0);
            (0..spec.duration_slots)
                .map(|t| [(phase + v * t as f64).rem_euclid(1.0), v, 0.0])
                .collect()
        })
        .collect())
}
