//! Fixed policies: a bottleneck-aware rule-based controller and a uniform
//! random controller.

use rand::Rng;

use crate::observation::eta_to_bottleneck;
use crate::reward::RewardWeights;
use crate::scenario::{FleetConfig, FleetId, ScenarioError, ScenarioSpec};
use crate::sim::{Action, AircraftState, WorldState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleParams {
    /// Minimum acceptable ETA gap to a front aircraft at a shared bottleneck, s.
    pub eta_buffer: f64,
    /// Longitudinal gap below which same-route neighbours constrain the ownship, m.
    pub follow_gap: f64,
    /// Per-fleet cruise speed; `None` means `v_max − η₂ᵛ − 1`.
    pub cruise_speed: [Option<f64>; 2],
}

impl Default for RuleParams {
    fn default() -> Self {
        Self {
            eta_buffer: 15.0,
            follow_gap: 600.0,
            cruise_speed: [None, None],
        }
    }
}

impl RuleParams {
    pub fn validate(&self, d_nmac: f64) -> Result<(), ScenarioError> {
        if !(self.eta_buffer > 0.0) {
            return Err(ScenarioError::Invariant("eta_buffer > 0".into()));
        }
        if !(self.follow_gap > d_nmac) {
            return Err(ScenarioError::Invariant("follow_gap > d_nmac".into()));
        }
        if self.cruise_speed.iter().flatten().any(|v| !(*v > 0.0)) {
            return Err(ScenarioError::Invariant("cruise_speed > 0".into()));
        }
        Ok(())
    }

    pub fn cruise_for(&self, fleet: FleetId, cfg: &FleetConfig, w: &RewardWeights) -> f64 {
        self.cruise_speed[fleet.index()]
            .unwrap_or(cfg.v_max - w.eta2_v - 1.0)
            .clamp(cfg.v_min, cfg.v_max)
    }
}

/// Nearest active aircraft ahead on the ownship's current corridor leg, with
/// the along-track gap.
fn segment_leader<'w>(
    own: &AircraftState,
    world: &'w WorldState,
    spec: &ScenarioSpec,
) -> Option<(&'w AircraftState, f64)> {
    let key = spec.route(own.route).segment_key(own.arc);
    let own_pos = own.position(spec);
    world
        .active()
        .filter(|o| o.agent_id != own.agent_id)
        .filter(|o| spec.route(o.route).segment_key(o.arc) == key)
        .filter_map(|o| {
            // Same leg: compare progress by distance to the leg's end.
            let d_own = spec.route(own.route).distance_to_next_waypoint(own.arc);
            let d_o = spec.route(o.route).distance_to_next_waypoint(o.arc);
            (d_o < d_own).then(|| (o, own_pos.dist(o.position(spec))))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.agent_id.cmp(&b.0.agent_id)))
}

/// Nearest active same-route aircraft behind the ownship within `follow_gap`.
fn nearest_follower<'w>(
    own: &AircraftState,
    world: &'w WorldState,
    follow_gap: f64,
) -> Option<&'w AircraftState> {
    world
        .active()
        .filter(|o| o.route == own.route && o.agent_id != own.agent_id && o.arc < own.arc)
        .filter(|o| own.arc - o.arc <= follow_gap)
        .max_by(|a, b| a.arc.total_cmp(&b.arc))
}

/// Deterministic rule-based speed command for an active ownship.
///
/// 1. Bottleneck sequencing: every sensed aircraft heading for the same next
///    merge/intersection whose ETA differs from the ownship's by less than
///    `eta_buffer` is a conflict. The aircraft farther from the bottleneck
///    yields (DECEL); the closer one holds its speed. Equal distances fall
///    back to agent id so both sides agree on the order.
/// 2. Leg following: a leader on the same leg within `follow_gap` that is
///    not faster than the ownship also triggers DECEL.
/// 3. A DECEL is softened to HOLD while a same-route follower within
///    `follow_gap` is at least as fast as the ownship.
///
/// Otherwise the ownship steers toward its cruise speed.
pub fn rule_based_action(
    own: &AircraftState,
    world: &WorldState,
    spec: &ScenarioSpec,
    params: &RuleParams,
) -> Action {
    let cfg = spec.fleet(own.fleet);
    let cruise = params.cruise_for(own.fleet, cfg, &spec.reward);
    let increment = cfg.accel_mag * spec.dt;

    let mut yield_needed = false;
    let mut hold_needed = false;

    if let Some(next) = spec.route(own.route).next_bottleneck(own.arc) {
        let own_pos = own.position(spec);
        let own_eta = eta_to_bottleneck(own, spec);
        let own_d = next.arc - own.arc;
        for o in world.active().filter(|o| o.agent_id != own.agent_id) {
            let Some(o_next) = spec.route(o.route).next_bottleneck(o.arc) else {
                continue;
            };
            if o_next.waypoint != next.waypoint
                || own_pos.dist(o.position(spec)) > cfg.sensing_range
            {
                continue;
            }
            let gap = libm::fabs(own_eta - eta_to_bottleneck(o, spec));
            if !(gap < params.eta_buffer) {
                continue;
            }
            let o_d = o_next.arc - o.arc;
            let own_second = own_d > o_d || (own_d == o_d && own.agent_id > o.agent_id);
            if own_second {
                yield_needed = true;
            } else {
                hold_needed = true;
            }
        }
    }

    if let Some((leader, dist)) = segment_leader(own, world, spec) {
        if dist < params.follow_gap && leader.speed <= own.speed {
            yield_needed = true;
        }
    }

    if yield_needed {
        let pressed =
            nearest_follower(own, world, params.follow_gap).is_some_and(|f| f.speed >= own.speed);
        return if pressed { Action::Hold } else { Action::Decel };
    }
    if hold_needed {
        return Action::Hold;
    }
    if own.speed + 0.5 * increment < cruise {
        Action::Accel
    } else if own.speed - 0.5 * increment > cruise {
        Action::Decel
    } else {
        Action::Hold
    }
}

/// Uniform over the three actions.
pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> Action {
    Action::ALL[rng.gen_range(0..3)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::RouteId;
    use crate::sim::{apply_action, AgentStatus};
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent(
        spec: &ScenarioSpec,
        id: usize,
        route: RouteId,
        arc: f64,
        speed: f64,
    ) -> AircraftState {
        AircraftState {
            agent_id: id,
            fleet: spec.route(route).owner,
            route,
            arc,
            prev_arc: arc,
            speed,
            prev_action: Action::Hold,
            last_speed_delta: 0.0,
            spawn_time: 0.0,
            status: AgentStatus::Active,
            end_time: None,
        }
    }

    /// World indexed by agent id; unlisted ids are pending placeholders.
    fn world(listed: Vec<AircraftState>) -> WorldState {
        let spec = ScenarioSpec::reference();
        let n = listed.iter().map(|a| a.agent_id + 1).max().unwrap_or(0);
        let mut aircraft: Vec<AircraftState> = (0..n)
            .map(|i| {
                let mut a = agent(&spec, i, RouteId::IV, 0.0, 0.0);
                a.status = AgentStatus::Pending;
                a
            })
            .collect();
        for a in listed {
            let id = a.agent_id;
            aircraft[id] = a;
        }
        WorldState {
            sim_time: 0.0,
            step_index: 0,
            aircraft,
        }
    }

    fn x_spec() -> ScenarioSpec {
        ScenarioSpec::reference().with_profile(FleetId::B, crate::scenario::Profile::X)
    }

    #[test]
    fn free_flow_accelerates() {
        let spec = x_spec();
        let w = world(vec![agent(&spec, 0, RouteId::I, 100.0, 20.0)]);
        let a = rule_based_action(&w.aircraft[0], &w, &spec, &RuleParams::default());
        assert_eq!(a, Action::Accel);
    }

    #[test]
    fn holds_at_cruise() {
        let spec = x_spec();
        let p = RuleParams::default();
        let cruise = p.cruise_for(FleetId::A, spec.fleet(FleetId::A), &spec.reward);
        let w = world(vec![agent(&spec, 0, RouteId::I, 100.0, cruise)]);
        assert_eq!(
            rule_based_action(&w.aircraft[0], &w, &spec, &p),
            Action::Hold
        );
    }

    #[test]
    fn farther_aircraft_yields_on_short_eta_gap() {
        // Route I ownship 750 m before WP3 at 30 m/s: ETA 25 s.
        // Route II intruder 400 m before WP3 at 20 m/s: ETA 20 s. Gap 5 s.
        let spec = x_spec();
        let wp3 = 3000.0;
        let w = world(vec![
            agent(&spec, 0, RouteId::I, wp3 - 750.0, 30.0),
            agent(&spec, 5, RouteId::II, wp3 - 400.0, 20.0),
        ]);
        let own = &w.aircraft[0];
        assert_eq!(
            rule_based_action(own, &w, &spec, &RuleParams::default()),
            Action::Decel
        );
    }

    #[test]
    fn closer_aircraft_holds_instead_of_yielding() {
        // Ownship 400 m out at 10 m/s (ETA 40 s); intruder 700 m out at
        // 20 m/s (ETA 35 s) counts as front but is farther away.
        let spec = x_spec();
        let wp3 = 3000.0;
        let w = world(vec![
            agent(&spec, 0, RouteId::I, wp3 - 400.0, 10.0),
            agent(&spec, 5, RouteId::II, wp3 - 700.0, 20.0),
        ]);
        let own = &w.aircraft[0];
        assert_eq!(
            rule_based_action(own, &w, &spec, &RuleParams::default()),
            Action::Hold
        );
    }

    #[test]
    fn decel_softened_by_close_follower() {
        let spec = x_spec();
        let wp3 = 3000.0;
        let w = world(vec![
            agent(&spec, 0, RouteId::I, wp3 - 750.0, 30.0),
            agent(&spec, 5, RouteId::II, wp3 - 400.0, 20.0),
            agent(&spec, 1, RouteId::I, wp3 - 1150.0, 32.0),
        ]);
        assert_eq!(
            rule_based_action(&w.aircraft[0], &w, &spec, &RuleParams::default()),
            Action::Hold
        );
    }

    #[test]
    fn follows_slower_leader_on_same_leg() {
        let spec = x_spec();
        let w = world(vec![
            agent(&spec, 0, RouteId::I, 4000.0, 40.0),
            agent(&spec, 1, RouteId::I, 4400.0, 10.0),
        ]);
        assert_eq!(
            rule_based_action(&w.aircraft[0], &w, &spec, &RuleParams::default()),
            Action::Decel
        );
    }

    #[test]
    fn deterministic() {
        let spec = x_spec();
        let w = world(vec![
            agent(&spec, 0, RouteId::I, 2100.0, 30.0),
            agent(&spec, 1, RouteId::I, 1200.0, 30.0),
        ]);
        let p = RuleParams::default();
        let a = rule_based_action(&w.aircraft[0], &w, &spec, &p);
        for _ in 0..10 {
            assert_eq!(rule_based_action(&w.aircraft[0], &w, &spec, &p), a);
        }
    }

    #[test]
    fn single_aircraft_converges_to_cruise() {
        let spec = x_spec();
        let p = RuleParams::default();
        let cfg = spec.fleet(FleetId::A).clone();
        let cruise = p.cruise_for(FleetId::A, &cfg, &spec.reward);
        let mut w = world(vec![agent(&spec, 0, RouteId::I, 0.0, 20.0)]);
        for _ in 0..100 {
            let a = rule_based_action(&w.aircraft[0], &w, &spec, &p);
            apply_action(&mut w.aircraft[0], a, &cfg, spec.dt);
        }
        let inc = cfg.accel_mag * spec.dt;
        assert!(
            (w.aircraft[0].speed - cruise).abs() <= inc,
            "{}",
            w.aircraft[0].speed
        );
    }

    #[test]
    fn never_accelerates_when_yield_is_due() {
        let spec = x_spec();
        let p = RuleParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let wp3 = 3000.0;
        let mut checked = 0;
        for _ in 0..5000 {
            let own_d = rng.gen_range(50.0..2500.0);
            let oth_d = rng.gen_range(50.0..2500.0);
            let w = world(vec![
                agent(&spec, 0, RouteId::I, wp3 - own_d, rng.gen_range(0.5..44.0)),
                agent(&spec, 5, RouteId::II, wp3 - oth_d, rng.gen_range(0.5..44.0)),
            ]);
            let own = &w.aircraft[0];
            let other = &w.aircraft[5];
            let gap = eta_to_bottleneck(own, &spec) - eta_to_bottleneck(other, &spec);
            let sensed = own.position(&spec).dist(other.position(&spec))
                <= spec.fleet(own.fleet).sensing_range;
            if sensed && gap > 0.0 && gap < p.eta_buffer && own_d >= oth_d {
                checked += 1;
                assert_ne!(rule_based_action(own, &w, &spec, &p), Action::Accel);
            }
        }
        assert!(checked > 50, "{checked}");
    }

    #[test]
    fn random_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[random_action(&mut rng).index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
        }
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(random_action(&mut a), random_action(&mut b));
    }

    #[test]
    fn params_validation() {
        assert!(RuleParams::default().validate(100.0).is_ok());
        let p = RuleParams {
            follow_gap: 100.0,
            ..RuleParams::default()
        };
        assert!(p.validate(100.0).is_err());
        let p = RuleParams {
            eta_buffer: 0.0,
            ..RuleParams::default()
        };
        assert!(p.validate(100.0).is_err());
    }
}
