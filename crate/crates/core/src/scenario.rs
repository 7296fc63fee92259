//! Airspace geometry, fleet capability profiles and the spawn law.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use thiserror::Error;

use crate::baselines::RuleParams;
use crate::math::{bearing, Vec2};
use crate::reward::RewardWeights;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("{0} violated")]
    Invariant(String),
    #[error("unknown waypoint `{0}`")]
    UnknownWaypoint(String),
    #[error("arc {arc} m outside route {route} of length {length} m")]
    ArcOutOfRange {
        route: RouteId,
        arc: f64,
        length: f64,
    },
}

fn violated(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invariant(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FleetId {
    A,
    B,
}

impl FleetId {
    pub const ALL: [FleetId; 2] = [FleetId::A, FleetId::B];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "A" | "a" => Some(FleetId::A),
            "B" | "b" => Some(FleetId::B),
            _ => None,
        }
    }
}

impl fmt::Display for FleetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FleetId::A => "A",
            FleetId::B => "B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RouteId {
    I,
    II,
    III,
    IV,
}

impl RouteId {
    pub const ALL: [RouteId; 4] = [RouteId::I, RouteId::II, RouteId::III, RouteId::IV];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "I" => Some(RouteId::I),
            "II" => Some(RouteId::II),
            "III" => Some(RouteId::III),
            "IV" => Some(RouteId::IV),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RouteId::I => "I",
            RouteId::II => "II",
            RouteId::III => "III",
            RouteId::IV => "IV",
        }
    }
}

impl fmt::Display for RouteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaypointKind {
    Origin,
    Merge,
    Intersection,
    Destination,
}

impl WaypointKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "origin" => Some(Self::Origin),
            "merge" => Some(Self::Merge),
            "intersection" => Some(Self::Intersection),
            "destination" => Some(Self::Destination),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Origin => "origin",
            Self::Merge => "merge",
            Self::Intersection => "intersection",
            Self::Destination => "destination",
        }
    }

    pub fn is_bottleneck(self) -> bool {
        matches!(self, Self::Merge | Self::Intersection)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waypoint {
    pub id: String,
    pub position: Vec2,
    pub kind: WaypointKind,
}

impl Waypoint {
    pub fn new(id: &str, x: f64, y: f64, kind: WaypointKind) -> Self {
        Self {
            id: id.to_string(),
            position: Vec2::new(x, y),
            kind,
        }
    }
}

/// NMAC attribution buckets: the two merge points and the intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bottleneck {
    M1,
    M2,
    In,
}

impl Bottleneck {
    pub const ALL: [Bottleneck; 3] = [Bottleneck::M1, Bottleneck::M2, Bottleneck::In];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Bottleneck::M1 => "M1",
            Bottleneck::M2 => "M2",
            Bottleneck::In => "IN",
        }
    }
}

/// A bottleneck as seen from a point on a route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BottleneckAhead {
    /// Index into [`ScenarioSpec::waypoints`].
    pub waypoint: usize,
    /// Arc position of the bottleneck on the queried route.
    pub arc: f64,
}

/// A piecewise-linear route. Geometry is resolved against the waypoint table
/// at construction and cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub id: RouteId,
    pub waypoint_ids: Vec<String>,
    pub owner: FleetId,
    pub length: f64,
    /// Indices into the scenario waypoint table, parallel to `waypoint_ids`.
    waypoints: Vec<usize>,
    points: Vec<Vec2>,
    kinds: Vec<WaypointKind>,
    /// Arc length from the origin to each waypoint.
    cum: Vec<f64>,
}

impl Route {
    pub fn new(
        id: RouteId,
        waypoint_ids: Vec<String>,
        owner: FleetId,
        table: &[Waypoint],
    ) -> Result<Self, ScenarioError> {
        if waypoint_ids.len() < 2 {
            return Err(violated(alloc::format!(
                "route {id} has at least two waypoints"
            )));
        }
        let mut waypoints = Vec::with_capacity(waypoint_ids.len());
        for wid in &waypoint_ids {
            let idx = table
                .iter()
                .position(|w| &w.id == wid)
                .ok_or_else(|| ScenarioError::UnknownWaypoint(wid.clone()))?;
            waypoints.push(idx);
        }
        let points: Vec<Vec2> = waypoints.iter().map(|&i| table[i].position).collect();
        let kinds: Vec<WaypointKind> = waypoints.iter().map(|&i| table[i].kind).collect();
        let mut cum = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for pair in points.windows(2) {
            let seg = pair[0].dist(pair[1]);
            if seg <= 0.0 {
                return Err(violated(alloc::format!(
                    "route {id} segments have positive length"
                )));
            }
            acc += seg;
            cum.push(acc);
        }
        Ok(Self {
            id,
            waypoint_ids,
            owner,
            length: acc,
            waypoints,
            points,
            kinds,
            cum,
        })
    }

    pub fn waypoint_indices(&self) -> &[usize] {
        &self.waypoints
    }

    pub fn waypoint_arcs(&self) -> &[f64] {
        &self.cum
    }

    pub fn kinds(&self) -> &[WaypointKind] {
        &self.kinds
    }

    pub fn origin(&self) -> Vec2 {
        self.points[0]
    }

    pub fn destination(&self) -> Vec2 {
        self.points[self.points.len() - 1]
    }

    fn segment_at(&self, arc: f64) -> usize {
        // Segment i spans cum[i]..cum[i+1]; a waypoint belongs to the segment it starts.
        let last = self.points.len() - 2;
        (0..=last).find(|&i| arc < self.cum[i + 1]).unwrap_or(last)
    }

    /// Position and segment bearing at `arc` meters from the origin.
    pub fn position_on_route(&self, arc: f64) -> Result<(Vec2, f64), ScenarioError> {
        if !(0.0..=self.length).contains(&arc) {
            return Err(ScenarioError::ArcOutOfRange {
                route: self.id,
                arc,
                length: self.length,
            });
        }
        Ok(self.position_clamped(arc))
    }

    /// Like [`Route::position_on_route`] but clamps `arc` into the route.
    pub fn position_clamped(&self, arc: f64) -> (Vec2, f64) {
        let arc = arc.clamp(0.0, self.length);
        let i = self.segment_at(arc);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let seg = self.cum[i + 1] - self.cum[i];
        let t = ((arc - self.cum[i]) / seg).clamp(0.0, 1.0);
        (a.lerp(b, t), bearing(b - a))
    }

    /// Segment index and the waypoint index (into the route) it leads to.
    pub fn next_waypoint(&self, arc: f64) -> usize {
        self.segment_at(arc) + 1
    }

    /// Distance along the route to the next waypoint.
    pub fn distance_to_next_waypoint(&self, arc: f64) -> f64 {
        let j = self.next_waypoint(arc);
        (self.cum[j] - arc).max(0.0)
    }

    /// Segment key `(from, to)` as scenario waypoint indices; two aircraft with
    /// equal keys fly the same corridor leg.
    pub fn segment_key(&self, arc: f64) -> (usize, usize) {
        let i = self.segment_at(arc.clamp(0.0, self.length));
        (self.waypoints[i], self.waypoints[i + 1])
    }

    /// First merge or intersection waypoint strictly ahead of `arc`.
    pub fn next_bottleneck(&self, arc: f64) -> Option<BottleneckAhead> {
        self.kinds
            .iter()
            .zip(&self.cum)
            .zip(&self.waypoints)
            .find(|((k, &c), _)| k.is_bottleneck() && c > arc)
            .map(|((_, &c), &w)| BottleneckAhead {
                waypoint: w,
                arc: c,
            })
    }

    /// Arc of a scenario waypoint on this route, if the route visits it.
    pub fn arc_of(&self, waypoint: usize) -> Option<f64> {
        self.waypoints
            .iter()
            .position(|&w| w == waypoint)
            .map(|i| self.cum[i])
    }
}

/// Named capability profiles for a fleet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    /// Strong: speed [0, 44.88] m/s, ±1.71 m/s², sensing 1000 m.
    X,
    /// Weak: speed [0, 30.12] m/s, ±1.02 m/s², sensing 750 m.
    Y,
}

impl Profile {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "X" | "x" => Some(Profile::X),
            "Y" | "y" => Some(Profile::Y),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::X => "X",
            Profile::Y => "Y",
        }
    }

    pub fn config(self, id: FleetId) -> FleetConfig {
        let (v_max, accel_mag, sensing_range) = match self {
            Profile::X => (44.88, 1.71, 1000.0),
            Profile::Y => (30.12, 1.02, 750.0),
        };
        FleetConfig {
            id,
            profile: Some(self),
            v_min: 0.0,
            v_max,
            accel_mag,
            sensing_range,
            spawn_speed: DEFAULT_SPAWN_SPEED,
        }
    }
}

pub const DEFAULT_SPAWN_SPEED: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FleetConfig {
    pub id: FleetId,
    /// Profile the numbers came from, when they came from one.
    pub profile: Option<Profile>,
    pub v_min: f64,
    pub v_max: f64,
    pub accel_mag: f64,
    pub sensing_range: f64,
    pub spawn_speed: f64,
}

impl FleetConfig {
    pub fn label(&self) -> &'static str {
        self.profile.map(Profile::as_str).unwrap_or("custom")
    }

    fn validate(&self, d_lowc: f64) -> Result<(), ScenarioError> {
        let id = self.id;
        if !(0.0 <= self.v_min && self.v_min < self.v_max) {
            return Err(violated(alloc::format!("fleet {id}: 0 <= v_min < v_max")));
        }
        if !(self.accel_mag > 0.0) {
            return Err(violated(alloc::format!("fleet {id}: accel_mag > 0")));
        }
        if !(self.sensing_range > d_lowc) {
            return Err(violated(alloc::format!(
                "fleet {id}: sensing_range > d_lowc"
            )));
        }
        if !(self.v_min <= self.spawn_speed && self.spawn_speed <= self.v_max) {
            return Err(violated(alloc::format!(
                "fleet {id}: v_min <= spawn_speed <= v_max"
            )));
        }
        Ok(())
    }
}

/// How `spawn_base + spawn_step·k` is turned into spawn times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpawnMode {
    /// Each agent spawns at `base + step·k` seconds after episode start.
    Absolute,
    /// `base + step·k` is the gap after the previous agent on the same route
    /// (the first agent's gap is measured from episode start).
    Interval,
}

impl SpawnMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "absolute" => Some(Self::Absolute),
            "interval" => Some(Self::Interval),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Absolute => "absolute",
            Self::Interval => "interval",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub waypoints: Vec<Waypoint>,
    /// Always ordered I, II, III, IV.
    pub routes: Vec<Route>,
    /// Indexed by [`FleetId::index`].
    pub fleets: [FleetConfig; 2],
    pub agents_per_route: usize,
    pub spawn_base: f64,
    pub spawn_step: f64,
    pub spawn_k_max: u32,
    pub spawn_mode: SpawnMode,
    pub dt: f64,
    /// Per-agent airborne time limit, seconds.
    pub mission_horizon: f64,
    pub d_nmac: f64,
    pub d_lowc: f64,
    pub goal_tolerance: f64,
    /// Hard episode cap in steps.
    pub max_steps: u32,
    pub reward: RewardWeights,
    pub rules: RuleParams,
}

pub const REFERENCE_ROUTE_LENGTH: f64 = 10_330.0;

impl ScenarioSpec {
    /// The reference two-fleet scenario: routes I/II merge at WP3, III/IV at
    /// WP7, the merged corridors cross at WP9. Every route is 10330 m.
    pub fn reference() -> Self {
        use WaypointKind::*;
        let waypoints = alloc::vec![
            Waypoint::new("WP1", -4621.32, 2121.32, Origin),
            Waypoint::new("WP2", -4621.32, -2121.32, Origin),
            Waypoint::new("WP3", -2500.0, 0.0, Merge),
            Waypoint::new("WP4", 4830.0, 0.0, Destination),
            Waypoint::new("WP5", -2121.32, -4621.32, Origin),
            Waypoint::new("WP6", 2121.32, -4621.32, Origin),
            Waypoint::new("WP7", 0.0, -2500.0, Merge),
            Waypoint::new("WP8", 0.0, 4830.0, Destination),
            Waypoint::new("WP9", 0.0, 0.0, Intersection),
        ];
        let route_defs: [(RouteId, [&str; 4], FleetId); 4] = [
            (RouteId::I, ["WP1", "WP3", "WP9", "WP4"], FleetId::A),
            (RouteId::II, ["WP2", "WP3", "WP9", "WP4"], FleetId::B),
            (RouteId::III, ["WP5", "WP7", "WP9", "WP8"], FleetId::A),
            (RouteId::IV, ["WP6", "WP7", "WP9", "WP8"], FleetId::B),
        ];
        let routes = route_defs
            .iter()
            .map(|(id, wps, owner)| {
                Route::new(
                    *id,
                    wps.iter().map(|s| s.to_string()).collect(),
                    *owner,
                    &waypoints,
                )
                .expect("reference route")
            })
            .collect();
        let spec = Self {
            waypoints,
            routes,
            fleets: [Profile::X.config(FleetId::A), Profile::Y.config(FleetId::B)],
            agents_per_route: 5,
            spawn_base: 35.0,
            spawn_step: 5.0,
            spawn_k_max: 10,
            spawn_mode: SpawnMode::Interval,
            dt: 3.0,
            mission_horizon: 18.0 * 60.0,
            d_nmac: 100.0,
            d_lowc: 500.0,
            goal_tolerance: 50.0,
            max_steps: 500,
            reward: RewardWeights::default(),
            rules: RuleParams::default(),
        };
        debug_assert!(spec.validate().is_ok());
        spec
    }

    /// Replace a fleet's capabilities with a named profile, keeping its spawn speed.
    pub fn with_profile(mut self, fleet: FleetId, profile: Profile) -> Self {
        let spawn = self.fleets[fleet.index()].spawn_speed;
        let mut cfg = profile.config(fleet);
        cfg.spawn_speed = spawn.min(cfg.v_max).max(cfg.v_min);
        self.fleets[fleet.index()] = cfg;
        self
    }

    pub fn fleet(&self, id: FleetId) -> &FleetConfig {
        &self.fleets[id.index()]
    }

    pub fn route(&self, id: RouteId) -> &Route {
        &self.routes[id.index()]
    }

    pub fn total_agents(&self) -> usize {
        self.agents_per_route * self.routes.len()
    }

    pub fn waypoint_index(&self, id: &str) -> Option<usize> {
        self.waypoints.iter().position(|w| w.id == id)
    }

    /// Route and fleet of each agent, in agent-id order (route-major).
    pub fn agent_assignments(&self) -> Vec<(RouteId, FleetId)> {
        self.routes
            .iter()
            .flat_map(|r| core::iter::repeat_n((r.id, r.owner), self.agents_per_route))
            .collect()
    }

    /// NMAC bucket of a bottleneck waypoint: the intersection is IN, the merge
    /// on routes I/II is M1, any other merge is M2.
    pub fn bottleneck_category(&self, waypoint: usize) -> Option<Bottleneck> {
        match self.waypoints.get(waypoint)?.kind {
            WaypointKind::Intersection => Some(Bottleneck::In),
            WaypointKind::Merge => {
                let on_first_pair = self.routes[..2]
                    .iter()
                    .any(|r| r.waypoint_indices().contains(&waypoint));
                Some(if on_first_pair {
                    Bottleneck::M1
                } else {
                    Bottleneck::M2
                })
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.d_nmac < self.d_lowc) {
            return Err(violated("d_nmac < d_lowc"));
        }
        if !(self.d_nmac > 0.0) {
            return Err(violated("d_nmac > 0"));
        }
        if !(self.dt > 0.0) {
            return Err(violated("dt > 0"));
        }
        if !(self.mission_horizon > 0.0) {
            return Err(violated("mission_horizon > 0"));
        }
        if !(self.goal_tolerance > 0.0) {
            return Err(violated("goal_tolerance > 0"));
        }
        if self.agents_per_route == 0 {
            return Err(violated("agents_per_route > 0"));
        }
        if !(self.spawn_base >= 0.0 && self.spawn_step >= 0.0) {
            return Err(violated("spawn_base >= 0 and spawn_step >= 0"));
        }
        if self.max_steps == 0 {
            return Err(violated("max_steps > 0"));
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if self.waypoints[..i].iter().any(|o| o.id == w.id) {
                return Err(violated(alloc::format!("waypoint id `{}` unique", w.id)));
            }
        }
        if self.routes.len() != 4 {
            return Err(violated("exactly four routes I..IV"));
        }
        for (r, id) in self.routes.iter().zip(RouteId::ALL) {
            if r.id != id {
                return Err(violated("routes ordered I, II, III, IV"));
            }
            self.validate_route_shape(r)?;
        }
        let min_len = self
            .routes
            .iter()
            .map(|r| r.length)
            .fold(f64::INFINITY, f64::min);
        let max_len = self.routes.iter().map(|r| r.length).fold(0.0, f64::max);
        if max_len - min_len > 1.0 {
            return Err(violated("route lengths equal within 1 m"));
        }
        for (w_idx, w) in self.waypoints.iter().enumerate() {
            if w.kind.is_bottleneck() {
                let users = self
                    .routes
                    .iter()
                    .filter(|r| r.waypoint_indices().contains(&w_idx))
                    .count();
                if users < 2 {
                    return Err(violated(alloc::format!(
                        "bottleneck `{}` shared by at least two routes",
                        w.id
                    )));
                }
            }
        }
        for (cfg, id) in self.fleets.iter().zip(FleetId::ALL) {
            if cfg.id != id {
                return Err(violated("fleets ordered A, B"));
            }
            cfg.validate(self.d_lowc)?;
        }
        self.reward.validate()?;
        self.rules.validate(self.d_nmac)?;
        Ok(())
    }

    fn validate_route_shape(&self, r: &Route) -> Result<(), ScenarioError> {
        let kinds = r.kinds();
        let expected = [
            WaypointKind::Origin,
            WaypointKind::Merge,
            WaypointKind::Intersection,
            WaypointKind::Destination,
        ];
        if kinds != expected {
            return Err(violated(alloc::format!(
                "route {} visits origin, one merge, the intersection, then its destination",
                r.id
            )));
        }
        Ok(())
    }
}

/// Draw one spawn time per agent (agent-id order).
///
/// Every draw is `spawn_base + spawn_step·k` with `k` uniform on
/// `0..=spawn_k_max`, independent per agent. In [`SpawnMode::Interval`] the
/// draws are accumulated along each route.
pub fn sample_spawn_times<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Vec<f64> {
    let mut times = Vec::with_capacity(spec.total_agents());
    for _route in &spec.routes {
        let mut clock = 0.0;
        for _ in 0..spec.agents_per_route {
            let k = rng.gen_range(0..=spec.spawn_k_max);
            let draw = spec.spawn_base + spec.spawn_step * k as f64;
            let t = match spec.spawn_mode {
                SpawnMode::Absolute => draw,
                SpawnMode::Interval => {
                    clock += draw;
                    clock
                }
            };
            times.push(t);
        }
    }
    times
}
