//! NMAC classification, per-episode outcomes, fairness and report aggregation.

use alloc::vec::Vec;

use thiserror::Error;

use crate::scenario::{Bottleneck, FleetId, ScenarioSpec};
use crate::sim::{ConflictEvent, WorldState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("fairness needs positive mission times, got {0} and {1}")]
    NonPositiveTime(f64, f64),
    #[error("cannot aggregate zero episodes")]
    Empty,
}

/// Fleet pairing of an NMAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairCategory {
    AA,
    AB,
    BB,
}

impl PairCategory {
    pub const ALL: [PairCategory; 3] = [PairCategory::AA, PairCategory::AB, PairCategory::BB];

    pub fn of(a: FleetId, b: FleetId) -> Self {
        match (a, b) {
            (FleetId::A, FleetId::A) => PairCategory::AA,
            (FleetId::B, FleetId::B) => PairCategory::BB,
            _ => PairCategory::AB,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            PairCategory::AA => "AA",
            PairCategory::AB => "AB",
            PairCategory::BB => "BB",
        }
    }
}

/// Pair and bottleneck category of an NMAC event; `None` for other events.
///
/// The bottleneck is the one both aircraft were heading for at closest
/// approach, or else the bottleneck waypoint nearest the event midpoint.
pub fn classify_nmac(
    event: &ConflictEvent,
    world: &WorldState,
    spec: &ScenarioSpec,
) -> Option<(PairCategory, Bottleneck)> {
    let ConflictEvent::Nmac {
        agents,
        midpoint,
        arcs,
        ..
    } = event
    else {
        return None;
    };
    let a = &world.aircraft[agents[0]];
    let b = &world.aircraft[agents[1]];
    let pair = PairCategory::of(a.fleet, b.fleet);

    let na = spec.route(a.route).next_bottleneck(arcs[0]);
    let nb = spec.route(b.route).next_bottleneck(arcs[1]);
    let shared = match (na, nb) {
        (Some(x), Some(y)) if x.waypoint == y.waypoint => spec.bottleneck_category(x.waypoint),
        _ => None,
    };
    let cat = shared.or_else(|| {
        spec.waypoints
            .iter()
            .enumerate()
            .filter(|(_, w)| w.kind.is_bottleneck())
            .min_by(|(_, x), (_, y)| {
                x.position
                    .dist(*midpoint)
                    .total_cmp(&y.position.dist(*midpoint))
            })
            .and_then(|(i, _)| spec.bottleneck_category(i))
    })?;
    Some((pair, cat))
}

/// `(1 − |t1 − t2| / max(t1, t2)) × 100`.
pub fn fairness(t1: f64, t2: f64) -> Result<f64, MetricsError> {
    if !(t1 > 0.0 && t2 > 0.0) {
        return Err(MetricsError::NonPositiveTime(t1, t2));
    }
    Ok((1.0 - libm::fabs(t1 - t2) / t1.max(t2)) * 100.0)
}

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeMetrics {
    pub n_agents: usize,
    pub n_success: usize,
    pub n_timeout: usize,
    pub success_by_fleet: [usize; 2],
    /// Agents of each fleet removed by an NMAC.
    pub nmac_agents_by_fleet: [usize; 2],
    /// Indexed by [`PairCategory::index`].
    pub nmac_by_pair: [u32; 3],
    /// Indexed by [`Bottleneck::index`].
    pub nmac_by_bottleneck: [u32; 3],
    /// Summed step rewards of each fleet's agents.
    pub reward_by_fleet: [f64; 2],
    /// Number of rewarded agent-steps per fleet.
    pub agent_steps_by_fleet: [u64; 2],
    /// Mission times of successful agents per fleet, s.
    pub mission_times: [Vec<f64>; 2],
    pub steps: u32,
}

impl EpisodeMetrics {
    pub fn total_nmac(&self) -> u32 {
        self.nmac_by_pair.iter().sum()
    }

    pub fn total_reward(&self) -> f64 {
        self.reward_by_fleet.iter().sum()
    }

    pub fn record_nmac(&mut self, pair: PairCategory, bottleneck: Bottleneck) {
        self.nmac_by_pair[pair.index()] += 1;
        self.nmac_by_bottleneck[bottleneck.index()] += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single episode.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        let n = xs.len();
        if n == 0 {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            libm::sqrt(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64)
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Summary over evaluation episodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub episodes: usize,
    pub nmac_by_pair: [MeanStd; 3],
    pub nmac_by_bottleneck: [MeanStd; 3],
    pub nmac_total: MeanStd,
    pub n_success: MeanStd,
    /// Per-episode sum of all agents' rewards.
    pub total_reward: MeanStd,
    /// Mean reward per agent-step, pooled over all episodes.
    pub mean_step_reward: f64,
    pub reward_by_fleet: [MeanStd; 2],
    /// Mean mission time of successful agents per fleet, minutes.
    pub mission_time_min: [Option<f64>; 2],
    /// Percent; `None` when either fleet had no successful agent.
    pub fairness: Option<f64>,
    pub steps: MeanStd,
}

pub fn aggregate(episodes: &[EpisodeMetrics]) -> Result<EvalReport, MetricsError> {
    if episodes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let col = |f: &dyn Fn(&EpisodeMetrics) -> f64| MeanStd::of(episodes.iter().map(f));
    let nmac_by_pair = core::array::from_fn(|k| col(&|e| e.nmac_by_pair[k] as f64));
    let nmac_by_bottleneck = core::array::from_fn(|k| col(&|e| e.nmac_by_bottleneck[k] as f64));
    let reward_by_fleet = core::array::from_fn(|k| col(&|e| e.reward_by_fleet[k]));

    let mission_time_min: [Option<f64>; 2] = core::array::from_fn(|k| {
        let times: Vec<f64> = episodes
            .iter()
            .flat_map(|e| e.mission_times[k].iter().copied())
            .collect();
        (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64 / 60.0)
    });
    let fairness = match mission_time_min {
        [Some(a), Some(b)] => fairness(a, b).ok(),
        _ => None,
    };
    let reward_sum: f64 = episodes.iter().map(EpisodeMetrics::total_reward).sum();
    let agent_steps: u64 = episodes.iter().flat_map(|e| e.agent_steps_by_fleet).sum();

    Ok(EvalReport {
        episodes: episodes.len(),
        nmac_by_pair,
        nmac_by_bottleneck,
        nmac_total: col(&|e| e.total_nmac() as f64),
        n_success: col(&|e| e.n_success as f64),
        total_reward: col(&|e| e.total_reward()),
        mean_step_reward: if agent_steps > 0 {
            reward_sum / agent_steps as f64
        } else {
            0.0
        },
        reward_by_fleet,
        mission_time_min,
        fairness,
        steps: col(&|e| e.steps as f64),
    })
}
