//! One closed-loop episode: observe, act, advance, detect, reward.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{random_action, rule_based_action};
use crate::metrics::{classify_nmac, EpisodeMetrics};
use crate::nn::{greedy_action, sample_action, NnError, PolicyNetwork, Tape};
use crate::observation::{build_observation, nearest_sensed_distance, sense_intruders, OBS_DIM};
use crate::ppo::{FleetBuffer, Transition};
use crate::reward::{total_reward, RewardContext};
use crate::scenario::{sample_spawn_times, FleetId, RouteId, ScenarioSpec};
use crate::seed::{derive_seed, stream};
use crate::sim::{
    advance_kinematics, apply_action, detect_events, is_episode_done, Action, AgentStatus,
    ConflictEvent, WorldState,
};

/// How one fleet chooses actions.
#[derive(Debug, Clone, Copy)]
pub enum FleetPolicy<'a> {
    /// Attention actor-critic; `greedy` takes the argmax instead of sampling.
    Learned {
        net: &'a PolicyNetwork<f32>,
        greedy: bool,
    },
    /// Rule-based controller with the scenario's rule parameters.
    RuleBased,
    Random,
}

impl FleetPolicy<'_> {
    pub fn is_learned(&self) -> bool {
        matches!(self, FleetPolicy::Learned { .. })
    }
}

/// Per-episode random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSeeds {
    pub spawn: u64,
    /// Action sampling, per fleet.
    pub action: [u64; 2],
}

impl EpisodeSeeds {
    pub fn derive(seed: u64, episode: u64) -> Self {
        Self {
            spawn: derive_seed(seed, stream::SPAWN, episode),
            action: [0u64, 1].map(|f| derive_seed(seed, stream::ACTION, (episode << 1) | f)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EpisodeOptions {
    /// Store transitions of learned fleets for training.
    pub collect_transitions: bool,
    /// Store one [`StepRecord`] per acting agent per step.
    pub record_trajectory: bool,
}

/// One agent's state after a step, for trajectory logs.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u32,
    pub sim_time: f64,
    pub agent_id: usize,
    pub fleet: FleetId,
    pub route: RouteId,
    /// State the action was chosen from.
    pub arc_before: f64,
    pub speed_before: f64,
    pub x: f64,
    pub y: f64,
    pub arc: f64,
    pub speed: f64,
    pub action: Action,
    pub reward: f64,
    pub status: AgentStatus,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub metrics: EpisodeMetrics,
    pub events: Vec<ConflictEvent>,
    pub trajectory: Vec<StepRecord>,
    /// Transitions of learned fleets, when collected.
    pub buffers: [FleetBuffer; 2],
}

struct Decision {
    agent: usize,
    arc: f64,
    speed: f64,
    action: Action,
    own: [f64; OBS_DIM],
    intruders: Vec<f64>,
    log_prob: f64,
    value: f64,
}

/// Run one episode to completion.
pub fn run_episode(
    spec: &ScenarioSpec,
    policies: [FleetPolicy<'_>; 2],
    seeds: EpisodeSeeds,
    opts: EpisodeOptions,
) -> Result<EpisodeOutcome, NnError> {
    let mut spawn_rng = ChaCha8Rng::seed_from_u64(seeds.spawn);
    let spawn_times = sample_spawn_times(spec, &mut spawn_rng);
    let mut world = WorldState::new(spec, &spawn_times);
    let mut action_rngs = seeds.action.map(ChaCha8Rng::seed_from_u64);

    let mut metrics = EpisodeMetrics {
        n_agents: world.aircraft.len(),
        ..EpisodeMetrics::default()
    };
    let mut events_all = Vec::new();
    let mut trajectory = Vec::new();
    let mut buffers = [FleetBuffer::new(FleetId::A), FleetBuffer::new(FleetId::B)];
    let mut tape: Tape<f32> = Tape::new();
    let mut decisions: Vec<Decision> = Vec::new();
    let mut own32 = [0f32; OBS_DIM];
    let mut intr32: Vec<f32> = Vec::new();

    while !is_episode_done(&mut world, spec) {
        decisions.clear();
        for own in world.active() {
            let fi = own.fleet.index();
            let mut d = Decision {
                agent: own.agent_id,
                arc: own.arc,
                speed: own.speed,
                action: Action::Hold,
                own: [0.0; OBS_DIM],
                intruders: Vec::new(),
                log_prob: 0.0,
                value: 0.0,
            };
            d.action = match policies[fi] {
                FleetPolicy::Learned { net, greedy } => {
                    let contacts = sense_intruders(own, &world, spec);
                    let (o, intr) = build_observation(own, &contacts, &world, spec);
                    d.own = o.to_array();
                    d.intruders = intr.iter().flat_map(|i| i.to_array()).collect();
                    for (dst, src) in own32.iter_mut().zip(d.own) {
                        *dst = src as f32;
                    }
                    intr32.clear();
                    intr32.extend(d.intruders.iter().map(|v| *v as f32));
                    net.forward(&mut tape, &own32, &intr32)?;
                    let k = if greedy {
                        greedy_action(tape.probs())
                    } else {
                        sample_action(tape.probs(), &mut action_rngs[fi]).0
                    };
                    d.log_prob = tape.log_probs()[k] as f64;
                    d.value = tape.value() as f64;
                    Action::from_index(k).expect("three actions")
                }
                FleetPolicy::RuleBased => rule_based_action(own, &world, spec, &spec.rules),
                FleetPolicy::Random => random_action(&mut action_rngs[fi]),
            };
            decisions.push(d);
        }

        // prev_action before the command, for the action-change penalty.
        let prev_actions: Vec<Action> = decisions
            .iter()
            .map(|d| world.aircraft[d.agent].prev_action)
            .collect();
        for d in &decisions {
            let a = &mut world.aircraft[d.agent];
            let cfg = spec.fleet(a.fleet);
            apply_action(a, d.action, cfg, spec.dt);
        }
        advance_kinematics(&mut world, spec);
        let events = detect_events(&mut world, spec);

        for ev in &events {
            if let Some((pair, cat)) = classify_nmac(ev, &world, spec) {
                metrics.record_nmac(pair, cat);
            }
        }

        for (d, prev) in decisions.iter().zip(prev_actions) {
            let a = &world.aircraft[d.agent];
            let fi = a.fleet.index();
            let nmac_sep = events
                .iter()
                .filter_map(|e| match e {
                    ConflictEvent::Nmac {
                        agents, separation, ..
                    } if agents.contains(&d.agent) => Some(*separation),
                    _ => None,
                })
                .fold(f64::INFINITY, f64::min);
            let in_nmac = a.status == AgentStatus::DoneNmac;
            let d_min = if in_nmac {
                nmac_sep
            } else {
                nearest_sensed_distance(a, &world, spec)
            };
            let dist_final = if in_nmac {
                f64::INFINITY
            } else {
                a.position(spec).dist(spec.route(a.route).destination())
            };
            let ctx = RewardContext {
                d_min,
                speed: a.speed,
                action: d.action,
                prev_action: prev,
                dist_final,
                airborne_time: world.sim_time - a.spawn_time,
            };
            let r = total_reward(
                &ctx,
                spec.fleet(a.fleet),
                &spec.reward,
                spec.d_nmac,
                spec.d_lowc,
                spec.mission_horizon,
            );
            metrics.reward_by_fleet[fi] += r;
            metrics.agent_steps_by_fleet[fi] += 1;

            if opts.collect_transitions && policies[fi].is_learned() {
                buffers[fi].push(Transition {
                    own: d.own,
                    intruders: d.intruders.clone(),
                    action: d.action.index(),
                    log_prob_old: d.log_prob,
                    reward: r,
                    value_old: d.value,
                    done: a.status.is_done(),
                    agent_id: d.agent,
                    step: world.step_index - 1,
                });
            }
            if opts.record_trajectory {
                let p = a.position(spec);
                trajectory.push(StepRecord {
                    step: world.step_index,
                    sim_time: world.sim_time,
                    agent_id: d.agent,
                    fleet: a.fleet,
                    route: a.route,
                    arc_before: d.arc,
                    speed_before: d.speed,
                    x: p.x,
                    y: p.y,
                    arc: a.arc,
                    speed: a.speed,
                    action: d.action,
                    reward: r,
                    status: a.status,
                });
            }
        }
        events_all.extend(events);
    }

    // Agents force-retired at the step cap end without a done transition;
    // mark their last stored step terminal.
    for buf in &mut buffers {
        buf.close_open_trajectories();
    }

    metrics.steps = world.step_index;
    for a in &world.aircraft {
        let fi = a.fleet.index();
        match a.status {
            AgentStatus::DoneSuccess => {
                metrics.n_success += 1;
                metrics.success_by_fleet[fi] += 1;
                let t = a.end_time.unwrap_or(world.sim_time) - a.spawn_time;
                metrics.mission_times[fi].push(t);
            }
            AgentStatus::DoneNmac => metrics.nmac_agents_by_fleet[fi] += 1,
            AgentStatus::DoneTimeout => metrics.n_timeout += 1,
            _ => {}
        }
    }
    Ok(EpisodeOutcome {
        metrics,
        events: events_all,
        trajectory,
        buffers,
    })
}
