//! Discrete-time world stepping and conflict detection.

use alloc::vec::Vec;

use crate::math::{closest_approach, Vec2};
use crate::scenario::{FleetConfig, FleetId, RouteId, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Decel = 0,
    Hold = 1,
    Accel = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Decel, Action::Hold, Action::Accel];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn sign(self) -> f64 {
        match self {
            Action::Decel => -1.0,
            Action::Hold => 0.0,
            Action::Accel => 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Action::Decel => "DECEL",
            Action::Hold => "HOLD",
            Action::Accel => "ACCEL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentStatus {
    Pending,
    Active,
    DoneSuccess,
    DoneNmac,
    DoneTimeout,
}

impl AgentStatus {
    pub fn is_done(self) -> bool {
        !matches!(self, AgentStatus::Pending | AgentStatus::Active)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AircraftState {
    pub agent_id: usize,
    pub fleet: FleetId,
    pub route: RouteId,
    /// Distance flown along the route, meters.
    pub arc: f64,
    /// Arc at the start of the current step, used for swept conflict checks.
    pub prev_arc: f64,
    pub speed: f64,
    pub prev_action: Action,
    pub last_speed_delta: f64,
    pub spawn_time: f64,
    pub status: AgentStatus,
    /// Simulation time the agent left the world.
    pub end_time: Option<f64>,
}

impl AircraftState {
    pub fn is_active(&self) -> bool {
        self.status == AgentStatus::Active
    }

    pub fn position(&self, spec: &ScenarioSpec) -> Vec2 {
        spec.route(self.route).position_clamped(self.arc).0
    }

    pub fn heading(&self, spec: &ScenarioSpec) -> f64 {
        spec.route(self.route).position_clamped(self.arc).1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub sim_time: f64,
    pub step_index: u32,
    /// Every agent of the episode, indexed by agent id.
    pub aircraft: Vec<AircraftState>,
}

impl WorldState {
    /// All agents pending, with the given spawn times in agent-id order.
    pub fn new(spec: &ScenarioSpec, spawn_times: &[f64]) -> Self {
        let aircraft = spec
            .agent_assignments()
            .into_iter()
            .zip(spawn_times)
            .enumerate()
            .map(|(agent_id, ((route, fleet), &spawn_time))| AircraftState {
                agent_id,
                fleet,
                route,
                arc: 0.0,
                prev_arc: 0.0,
                speed: spec.fleet(fleet).spawn_speed,
                prev_action: Action::Hold,
                last_speed_delta: 0.0,
                spawn_time,
                status: AgentStatus::Pending,
                end_time: None,
            })
            .collect();
        Self {
            sim_time: 0.0,
            step_index: 0,
            aircraft,
        }
    }

    pub fn active(&self) -> impl Iterator<Item = &AircraftState> {
        self.aircraft.iter().filter(|a| a.is_active())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Nmac,
    Goal,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConflictEvent {
    Nmac {
        agents: [usize; 2],
        sim_time: f64,
        /// Midpoint of the pair at closest approach within the step.
        midpoint: Vec2,
        separation: f64,
        /// Arc positions of the pair at closest approach.
        arcs: [f64; 2],
    },
    Goal {
        agent: usize,
        sim_time: f64,
    },
    Timeout {
        agent: usize,
        sim_time: f64,
    },
}

impl ConflictEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            ConflictEvent::Nmac { .. } => EventKind::Nmac,
            ConflictEvent::Goal { .. } => EventKind::Goal,
            ConflictEvent::Timeout { .. } => EventKind::Timeout,
        }
    }

    pub fn involves(&self, agent: usize) -> bool {
        match self {
            ConflictEvent::Nmac { agents, .. } => agents.contains(&agent),
            ConflictEvent::Goal { agent: a, .. } | ConflictEvent::Timeout { agent: a, .. } => {
                *a == agent
            }
        }
    }
}

/// Apply one speed command. Saturation at the fleet's speed limits is
/// recorded in `last_speed_delta`.
pub fn apply_action(agent: &mut AircraftState, action: Action, config: &FleetConfig, dt: f64) {
    let target = agent.speed + action.sign() * config.accel_mag * dt;
    let new_speed = target.clamp(config.v_min, config.v_max);
    agent.last_speed_delta = new_speed - agent.speed;
    agent.speed = new_speed;
    agent.prev_action = action;
}

/// Move every active agent `speed·dt` along its route (held at the route end),
/// advance the clock one step and activate agents whose spawn time has come.
pub fn advance_kinematics(world: &mut WorldState, spec: &ScenarioSpec) {
    let dt = spec.dt;
    for a in world.aircraft.iter_mut().filter(|a| a.is_active()) {
        let length = spec.route(a.route).length;
        a.prev_arc = a.arc;
        a.arc = (a.arc + a.speed * dt).min(length);
    }
    world.step_index += 1;
    world.sim_time = world.step_index as f64 * dt;
    for a in world.aircraft.iter_mut() {
        if a.status == AgentStatus::Pending && a.spawn_time <= world.sim_time {
            let cfg = spec.fleet(a.fleet);
            a.status = AgentStatus::Active;
            a.arc = 0.0;
            a.prev_arc = 0.0;
            a.speed = cfg.spawn_speed;
            a.last_speed_delta = 0.0;
            a.prev_action = Action::Hold;
        }
    }
}

/// Step fractions in `(0, 1)` at which the agent passes an interior waypoint.
fn turn_fractions(spec: &ScenarioSpec, a: &AircraftState, out: &mut Vec<f64>) {
    let travel = a.arc - a.prev_arc;
    if travel <= 0.0 {
        return;
    }
    for &c in spec.route(a.route).waypoint_arcs() {
        if c > a.prev_arc && c < a.arc {
            out.push((c - a.prev_arc) / travel);
        }
    }
}

/// Closest approach of two agents over the last step. Both move at constant
/// speed along polylines, so the sweep is exact piecewise between turns.
/// Returns `(separation, fraction)`.
pub fn swept_separation(spec: &ScenarioSpec, a: &AircraftState, b: &AircraftState) -> (f64, f64) {
    let ra = spec.route(a.route);
    let rb = spec.route(b.route);
    let arc_a = |t: f64| a.prev_arc + t * (a.arc - a.prev_arc);
    let arc_b = |t: f64| b.prev_arc + t * (b.arc - b.prev_arc);
    let mut cuts = alloc::vec![0.0, 1.0];
    turn_fractions(spec, a, &mut cuts);
    turn_fractions(spec, b, &mut cuts);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let mut best = (f64::INFINITY, 0.0);
    for w in cuts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if t1 < t0 {
            continue;
        }
        let a0 = ra.position_clamped(arc_a(t0)).0;
        let a1 = ra.position_clamped(arc_a(t1)).0;
        let b0 = rb.position_clamped(arc_b(t0)).0;
        let b1 = rb.position_clamped(arc_b(t1)).0;
        let (d, s) = closest_approach(a0, a1, b0, b1);
        if d < best.0 {
            best = (d, t0 + s * (t1 - t0));
        }
    }
    best
}

/// Detect NMACs, goal arrivals and timeouts after kinematics have advanced,
/// and retire the affected agents. NMAC takes precedence over GOAL, which
/// takes precedence over TIMEOUT.
pub fn detect_events(world: &mut WorldState, spec: &ScenarioSpec) -> Vec<ConflictEvent> {
    let now = world.sim_time;
    let mut events = Vec::new();
    let active: Vec<usize> = world
        .aircraft
        .iter()
        .filter(|a| a.is_active())
        .map(|a| a.agent_id)
        .collect();

    let mut nmac = alloc::vec![false; world.aircraft.len()];
    for (n, &i) in active.iter().enumerate() {
        for &j in &active[n + 1..] {
            let (a, b) = (&world.aircraft[i], &world.aircraft[j]);
            // Cheap reject: end-of-step gap larger than anything the sweep could close.
            let reach = (a.arc - a.prev_arc) + (b.arc - b.prev_arc) + spec.d_nmac;
            if a.position(spec).dist(b.position(spec)) > reach {
                continue;
            }
            let (sep, t) = swept_separation(spec, a, b);
            if sep < spec.d_nmac {
                let arc_a = a.prev_arc + t * (a.arc - a.prev_arc);
                let arc_b = b.prev_arc + t * (b.arc - b.prev_arc);
                let pa = spec.route(a.route).position_clamped(arc_a).0;
                let pb = spec.route(b.route).position_clamped(arc_b).0;
                events.push(ConflictEvent::Nmac {
                    agents: [i, j],
                    sim_time: now,
                    midpoint: pa.lerp(pb, 0.5),
                    separation: sep,
                    arcs: [arc_a, arc_b],
                });
                nmac[i] = true;
                nmac[j] = true;
            }
        }
    }

    for &i in &active {
        let a = &mut world.aircraft[i];
        if nmac[i] {
            a.status = AgentStatus::DoneNmac;
            a.end_time = Some(now);
            continue;
        }
        let route = spec.route(a.route);
        let to_goal = a.position(spec).dist(route.destination());
        if to_goal < spec.goal_tolerance || a.arc >= route.length {
            a.status = AgentStatus::DoneSuccess;
            a.end_time = Some(now);
            events.push(ConflictEvent::Goal {
                agent: i,
                sim_time: now,
            });
        } else if now - a.spawn_time >= spec.mission_horizon {
            a.status = AgentStatus::DoneTimeout;
            a.end_time = Some(now);
            events.push(ConflictEvent::Timeout {
                agent: i,
                sim_time: now,
            });
        }
    }
    events
}

/// True once every agent has left the world. At the step cap all remaining
/// agents are force-retired as timeouts.
pub fn is_episode_done(world: &mut WorldState, spec: &ScenarioSpec) -> bool {
    if world.aircraft.iter().all(|a| a.status.is_done()) {
        return true;
    }
    if world.step_index >= spec.max_steps {
        let now = world.sim_time;
        for a in world.aircraft.iter_mut().filter(|a| !a.status.is_done()) {
            a.status = AgentStatus::DoneTimeout;
            a.end_time = Some(now);
        }
        return true;
    }
    false
}
