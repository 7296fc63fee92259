//! Ownship and front-intruder observations.
//!
//! An intruder is any active aircraft within the ownship fleet's sensing
//! range that shares the ownship's next bottleneck and is expected to reach it
//! strictly earlier.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::scenario::ScenarioSpec;
use crate::sim::{AircraftState, WorldState};

/// Below this speed an aircraft is treated as never reaching its bottleneck.
pub const MIN_ETA_SPEED: f64 = 0.1;

pub const OBS_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OwnshipObs {
    pub dist_next_wp: f64,
    pub speed: f64,
    pub heading: f64,
    pub accel: f64,
}

impl OwnshipObs {
    pub fn to_array(self) -> [f64; OBS_DIM] {
        [self.dist_next_wp, self.speed, self.heading, self.accel]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntruderObs {
    pub dist_to_ownship: f64,
    pub speed: f64,
    pub heading: f64,
    pub accel: f64,
}

impl IntruderObs {
    pub fn to_array(self) -> [f64; OBS_DIM] {
        [self.dist_to_ownship, self.speed, self.heading, self.accel]
    }
}

/// Seconds to the next bottleneck at current speed; infinite when there is
/// none ahead or the aircraft is (nearly) stopped.
pub fn eta_to_bottleneck(agent: &AircraftState, spec: &ScenarioSpec) -> f64 {
    match spec.route(agent.route).next_bottleneck(agent.arc) {
        Some(b) if agent.speed >= MIN_ETA_SPEED => (b.arc - agent.arc) / agent.speed,
        _ => f64::INFINITY,
    }
}

/// A sensed aircraft: agent id and Euclidean distance to the ownship.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub agent_id: usize,
    pub distance: f64,
}

/// Front intruders of `ownship`, nearest first (ties by agent id).
pub fn sense_intruders(
    ownship: &AircraftState,
    world: &WorldState,
    spec: &ScenarioSpec,
) -> Vec<Contact> {
    let Some(own_next) = spec.route(ownship.route).next_bottleneck(ownship.arc) else {
        return Vec::new();
    };
    let range = spec.fleet(ownship.fleet).sensing_range;
    let own_pos = ownship.position(spec);
    let own_eta = eta_to_bottleneck(ownship, spec);

    let mut out: Vec<Contact> = world
        .active()
        .filter(|o| o.agent_id != ownship.agent_id)
        .filter_map(|o| {
            let distance = own_pos.dist(o.position(spec));
            if distance > range {
                return None;
            }
            let next = spec.route(o.route).next_bottleneck(o.arc)?;
            if next.waypoint != own_next.waypoint {
                return None;
            }
            (eta_to_bottleneck(o, spec) < own_eta).then_some(Contact {
                agent_id: o.agent_id,
                distance,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap()
            .then(a.agent_id.cmp(&b.agent_id))
    });
    out
}

/// Normalized observation of the ownship and its intruders. Intruder
/// quantities are scaled with the ownship fleet's constants, so a faster
/// fleet's aircraft may read above 1.
pub fn build_observation(
    ownship: &AircraftState,
    intruders: &[Contact],
    world: &WorldState,
    spec: &ScenarioSpec,
) -> (OwnshipObs, Vec<IntruderObs>) {
    let cfg = spec.fleet(ownship.fleet);
    let route = spec.route(ownship.route);
    let accel_norm = cfg.accel_mag * spec.dt;
    let own = OwnshipObs {
        dist_next_wp: route.distance_to_next_waypoint(ownship.arc) / route.length,
        speed: ownship.speed / cfg.v_max,
        heading: ownship.heading(spec) / TAU,
        accel: ownship.last_speed_delta / accel_norm,
    };
    let intr = intruders
        .iter()
        .map(|c| {
            let o = &world.aircraft[c.agent_id];
            IntruderObs {
                dist_to_ownship: c.distance / cfg.sensing_range,
                speed: o.speed / cfg.v_max,
                heading: o.heading(spec) / TAU,
                accel: o.last_speed_delta / accel_norm,
            }
        })
        .collect();
    (own, intr)
}

/// Nearest active aircraft of any fleet and direction within the ownship's
/// sensing range, or infinity.
pub fn nearest_sensed_distance(
    ownship: &AircraftState,
    world: &WorldState,
    spec: &ScenarioSpec,
) -> f64 {
    let range = spec.fleet(ownship.fleet).sensing_range;
    let p = ownship.position(spec);
    world
        .active()
        .filter(|o| o.agent_id != ownship.agent_id)
        .map(|o| p.dist(o.position(spec)))
        .filter(|&d| d <= range)
        .fold(f64::INFINITY, f64::min)
}
