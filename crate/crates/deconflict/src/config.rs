//! TOML scenario documents.
//!
//! ```toml
//! [params]            # every key optional, reference values by default
//! dt = 3.0
//! spawn_mode = "interval"
//!
//! [[waypoints]]
//! id = "WP1"
//! x = -4621.32
//! y = 2121.32
//! kind = "origin"     # origin | merge | intersection | destination
//!
//! [[routes]]
//! id = "I"            # I | II | III | IV
//! owner = "A"
//! waypoints = ["WP1", "WP3", "WP9", "WP4"]
//!
//! [fleets.A]
//! profile = "X"       # X | Y; explicit numbers override the profile
//! spawn_speed = 20.0
//!
//! [reward]            # optional weight overrides
//! [rules]             # optional rule-based controller thresholds
//! ```

use std::path::Path;

use deconflict_core::baselines::RuleParams;
use deconflict_core::reward::RewardWeights;
use deconflict_core::scenario::{
    FleetConfig, FleetId, Profile, Route, RouteId, ScenarioError, ScenarioSpec, SpawnMode,
    Waypoint, WaypointKind,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mission_horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_nmac: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_lowc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub goal_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agents_per_route: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spawn_base: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spawn_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spawn_k_max: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spawn_mode: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointDoc {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteDoc {
    pub id: String,
    pub owner: String,
    pub waypoints: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accel_mag: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensing_range: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spawn_speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetsDoc {
    #[serde(rename = "A")]
    pub a: FleetDoc,
    #[serde(rename = "B")]
    pub b: FleetDoc,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardDoc {
    pub alpha: Option<f64>,
    pub psi1_v: Option<f64>,
    pub psi2_v: Option<f64>,
    pub eta1_v: Option<f64>,
    pub eta2_v: Option<f64>,
    pub psi1_a: Option<f64>,
    pub psi2_a: Option<f64>,
    pub psi_m: Option<f64>,
    pub eta_m: Option<f64>,
    pub psi_t: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulesDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_buffer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub follow_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cruise_speed_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cruise_speed_b: Option<f64>,
}

impl From<&RuleParams> for RulesDoc {
    fn from(p: &RuleParams) -> Self {
        Self {
            eta_buffer: Some(p.eta_buffer),
            follow_gap: Some(p.follow_gap),
            cruise_speed_a: p.cruise_speed[0],
            cruise_speed_b: p.cruise_speed[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default)]
    pub params: ParamsDoc,
    pub waypoints: Vec<WaypointDoc>,
    pub routes: Vec<RouteDoc>,
    pub fleets: FleetsDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<RulesDoc>,
}

pub fn load_scenario(text: &str) -> Result<ScenarioSpec, ConfigError> {
    let doc: ScenarioDoc = toml::from_str(text)?;
    build(doc)
}

pub fn load_scenario_file(path: &Path) -> Result<ScenarioSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_scenario(&text)
}

/// Canonical TOML of a rule parameter set.
pub fn rules_to_toml(p: &RuleParams) -> String {
    toml::to_string(&RulesDoc::from(p)).expect("plain numeric table")
}

fn fleet_config(id: FleetId, doc: &FleetDoc) -> Result<FleetConfig, ConfigError> {
    let section = format!("fleets.{id}");
    let mut cfg = match &doc.profile {
        Some(name) => Profile::parse(name)
            .ok_or_else(|| {
                field_err(
                    format!("{section}.profile"),
                    format!("unknown profile `{name}`"),
                )
            })?
            .config(id),
        None => {
            let need = |v: Option<f64>, key: &str| {
                v.ok_or_else(|| field_err(format!("{section}.{key}"), "required without a profile"))
            };
            FleetConfig {
                id,
                profile: None,
                v_min: need(doc.v_min, "v_min")?,
                v_max: need(doc.v_max, "v_max")?,
                accel_mag: need(doc.accel_mag, "accel_mag")?,
                sensing_range: need(doc.sensing_range, "sensing_range")?,
                spawn_speed: deconflict_core::scenario::DEFAULT_SPAWN_SPEED,
            }
        }
    };
    let overridden = [doc.v_min, doc.v_max, doc.accel_mag, doc.sensing_range]
        .iter()
        .any(Option::is_some);
    if doc.profile.is_some() && overridden {
        cfg.profile = None;
    }
    if let Some(v) = doc.v_min {
        cfg.v_min = v;
    }
    if let Some(v) = doc.v_max {
        cfg.v_max = v;
    }
    if let Some(v) = doc.accel_mag {
        cfg.accel_mag = v;
    }
    if let Some(v) = doc.sensing_range {
        cfg.sensing_range = v;
    }
    if let Some(v) = doc.spawn_speed {
        cfg.spawn_speed = v;
    }
    Ok(cfg)
}

fn build(doc: ScenarioDoc) -> Result<ScenarioSpec, ConfigError> {
    let reference = ScenarioSpec::reference();

    let mut waypoints = Vec::with_capacity(doc.waypoints.len());
    for (i, w) in doc.waypoints.iter().enumerate() {
        let kind = WaypointKind::parse(&w.kind).ok_or_else(|| {
            field_err(
                format!("waypoints[{i}].kind"),
                format!("unknown kind `{}`", w.kind),
            )
        })?;
        waypoints.push(Waypoint::new(&w.id, w.x, w.y, kind));
    }

    let mut routes: Vec<Option<Route>> = vec![None, None, None, None];
    for (i, r) in doc.routes.iter().enumerate() {
        let id = RouteId::parse(&r.id).ok_or_else(|| {
            field_err(
                format!("routes[{i}].id"),
                format!("unknown route `{}`", r.id),
            )
        })?;
        let owner = FleetId::parse(&r.owner).ok_or_else(|| {
            field_err(
                format!("routes[{i}].owner"),
                format!("unknown fleet `{}`", r.owner),
            )
        })?;
        if routes[id.index()].is_some() {
            return Err(field_err(
                format!("routes[{i}].id"),
                format!("duplicate route {id}"),
            ));
        }
        routes[id.index()] = Some(Route::new(id, r.waypoints.clone(), owner, &waypoints)?);
    }
    let routes = routes
        .into_iter()
        .zip(RouteId::ALL)
        .map(|(r, id)| r.ok_or_else(|| field_err("routes", format!("route {id} missing"))))
        .collect::<Result<Vec<_>, _>>()?;

    let fleets = [
        fleet_config(FleetId::A, &doc.fleets.a)?,
        fleet_config(FleetId::B, &doc.fleets.b)?,
    ];

    let p = doc.params;
    let spawn_mode = match &p.spawn_mode {
        Some(m) => SpawnMode::parse(m)
            .ok_or_else(|| field_err("params.spawn_mode", format!("unknown mode `{m}`")))?,
        None => reference.spawn_mode,
    };

    let mut reward = RewardWeights::default();
    if let Some(r) = doc.reward {
        let slots: [(&mut f64, Option<f64>); 10] = [
            (&mut reward.alpha, r.alpha),
            (&mut reward.psi1_v, r.psi1_v),
            (&mut reward.psi2_v, r.psi2_v),
            (&mut reward.eta1_v, r.eta1_v),
            (&mut reward.eta2_v, r.eta2_v),
            (&mut reward.psi1_a, r.psi1_a),
            (&mut reward.psi2_a, r.psi2_a),
            (&mut reward.psi_m, r.psi_m),
            (&mut reward.eta_m, r.eta_m),
            (&mut reward.psi_t, r.psi_t),
        ];
        for (dst, v) in slots {
            if let Some(v) = v {
                *dst = v;
            }
        }
    }

    let mut rules = RuleParams::default();
    if let Some(r) = doc.rules {
        if let Some(v) = r.eta_buffer {
            rules.eta_buffer = v;
        }
        if let Some(v) = r.follow_gap {
            rules.follow_gap = v;
        }
        rules.cruise_speed = [r.cruise_speed_a, r.cruise_speed_b];
    }

    let spec = ScenarioSpec {
        waypoints,
        routes,
        fleets,
        agents_per_route: p.agents_per_route.unwrap_or(reference.agents_per_route),
        spawn_base: p.spawn_base.unwrap_or(reference.spawn_base),
        spawn_step: p.spawn_step.unwrap_or(reference.spawn_step),
        spawn_k_max: p.spawn_k_max.unwrap_or(reference.spawn_k_max),
        spawn_mode,
        dt: p.dt.unwrap_or(reference.dt),
        mission_horizon: p.mission_horizon.unwrap_or(reference.mission_horizon),
        d_nmac: p.d_nmac.unwrap_or(reference.d_nmac),
        d_lowc: p.d_lowc.unwrap_or(reference.d_lowc),
        goal_tolerance: p.goal_tolerance.unwrap_or(reference.goal_tolerance),
        max_steps: p.max_steps.unwrap_or(reference.max_steps),
        reward,
        rules,
    };
    spec.validate()?;
    Ok(spec)
}

/// The reference scenario document shipped with the crate.
pub const REFERENCE_TOML: &str = include_str!("../scenarios/reference.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_document_matches_builtin() {
        let spec = load_scenario(REFERENCE_TOML).unwrap();
        assert_eq!(spec, ScenarioSpec::reference());
        assert_eq!(spec.waypoints.len(), 9);
        assert_eq!(spec.routes.len(), 4);
        assert_eq!((spec.d_nmac, spec.d_lowc), (100.0, 500.0));
    }

    #[test]
    fn inverted_thresholds_rejected() {
        let text = REFERENCE_TOML
            .replace("d_nmac = 100.0", "d_nmac = 500.0")
            .replace("d_lowc = 500.0", "d_lowc = 100.0");
        let err = load_scenario(&text).unwrap_err();
        assert!(
            err.to_string().contains("d_nmac < d_lowc violated"),
            "{err}"
        );
    }

    #[test]
    fn missing_dt_defaults_to_three_seconds() {
        let text: String = REFERENCE_TOML
            .lines()
            .filter(|l| !l.starts_with("dt "))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(!text.contains("dt ="));
        assert_eq!(load_scenario(&text).unwrap().dt, 3.0);
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = REFERENCE_TOML.replacen("[params]", "[params\n", 1);
        let err = load_scenario(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn bad_field_is_named() {
        let text = REFERENCE_TOML.replacen("kind = \"merge\"", "kind = \"roundabout\"", 1);
        let err = load_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("waypoints[2].kind"), "{err}");
    }

    #[test]
    fn unknown_waypoint_in_route() {
        let text = REFERENCE_TOML.replacen("\"WP1\", \"WP3\"", "\"WP1\", \"WP33\"", 1);
        let err = load_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("WP33"), "{err}");
    }

    #[test]
    fn rules_round_trip() {
        let p = RuleParams {
            cruise_speed: [Some(30.0), None],
            ..RuleParams::default()
        };
        let text = rules_to_toml(&p);
        let doc: RulesDoc = toml::from_str(&text).unwrap();
        assert_eq!(doc, RulesDoc::from(&p));
    }
}
