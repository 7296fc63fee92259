//! Five-component per-step reward: loss of separation, speed limits, action
//! changes, mission completion and elapsed time.

use crate::scenario::{FleetConfig, ScenarioError};
use crate::sim::Action;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    /// Scale of the LoWC band penalty.
    pub alpha: f64,
    pub psi1_v: f64,
    pub psi2_v: f64,
    /// Offset above `v_min` below which the low-speed penalty applies, m/s.
    pub eta1_v: f64,
    /// Offset below `v_max` above which the high-speed penalty applies, m/s.
    pub eta2_v: f64,
    pub psi1_a: f64,
    pub psi2_a: f64,
    pub psi_m: f64,
    /// Goal distance for the mission bonus, m.
    pub eta_m: f64,
    pub psi_t: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            psi1_v: 1e-3,
            psi2_v: 1e-4,
            eta1_v: 5.14,
            eta2_v: 2.57,
            psi1_a: 1e-5,
            psi2_a: 1e-4,
            psi_m: 0.1,
            eta_m: 50.0,
            psi_t: 1e-4,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ScenarioError::Invariant("alpha in [0, 1]".into()));
        }
        let psis = [
            self.psi1_v,
            self.psi2_v,
            self.psi1_a,
            self.psi2_a,
            self.psi_m,
            self.psi_t,
        ];
        if psis.iter().any(|p| !(*p >= 0.0)) {
            return Err(ScenarioError::Invariant("all psi >= 0".into()));
        }
        Ok(())
    }

    /// Lowest possible step reward: NMAC, both speed penalties, both action
    /// penalties and a timeout.
    pub fn lower_bound(&self) -> f64 {
        -1.0 - self.psi1_v - self.psi2_v - self.psi1_a - self.psi2_a - 1.0
    }
}

/// `d_min` is the distance to the nearest sensed aircraft, infinite if none.
pub fn r_los(d_min: f64, d_nmac: f64, d_lowc: f64, alpha: f64) -> f64 {
    if d_min < d_nmac {
        -1.0
    } else if d_min <= d_lowc {
        alpha * (-1.0 + (d_min - d_nmac) / (d_lowc - d_nmac))
    } else {
        0.0
    }
}

pub fn r_velocity(speed: f64, config: &FleetConfig, w: &RewardWeights) -> f64 {
    let mut r = 0.0;
    if speed < config.v_min + w.eta1_v {
        r -= w.psi1_v;
    }
    if speed > config.v_max - w.eta2_v {
        r -= w.psi2_v;
    }
    r
}

pub fn r_action(action: Action, prev_action: Action, w: &RewardWeights) -> f64 {
    let mut r = 0.0;
    if action != prev_action {
        r -= w.psi1_a;
    }
    if action != Action::Hold {
        r -= w.psi2_a;
    }
    r
}

pub fn r_mission(dist_final: f64, w: &RewardWeights) -> f64 {
    if dist_final < w.eta_m {
        w.psi_m
    } else {
        0.0
    }
}

pub fn r_time(airborne_time: f64, horizon: f64, w: &RewardWeights) -> f64 {
    if airborne_time < horizon {
        -w.psi_t
    } else {
        -1.0
    }
}

/// Everything the reward needs about one agent's step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardContext {
    pub d_min: f64,
    pub speed: f64,
    pub action: Action,
    pub prev_action: Action,
    /// Distance to the final waypoint; pass infinity when the agent was
    /// removed by an NMAC this step, so no bonus accrues.
    pub dist_final: f64,
    pub airborne_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub los: f64,
    pub velocity: f64,
    pub action: f64,
    pub mission: f64,
    pub time: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.los + self.velocity + self.action + self.mission + self.time
    }
}

pub fn reward_breakdown(
    ctx: &RewardContext,
    config: &FleetConfig,
    w: &RewardWeights,
    d_nmac: f64,
    d_lowc: f64,
    horizon: f64,
) -> RewardBreakdown {
    RewardBreakdown {
        los: r_los(ctx.d_min, d_nmac, d_lowc, w.alpha),
        velocity: r_velocity(ctx.speed, config, w),
        action: r_action(ctx.action, ctx.prev_action, w),
        mission: r_mission(ctx.dist_final, w),
        time: r_time(ctx.airborne_time, horizon, w),
    }
}

pub fn total_reward(
    ctx: &RewardContext,
    config: &FleetConfig,
    w: &RewardWeights,
    d_nmac: f64,
    d_lowc: f64,
    horizon: f64,
) -> f64 {
    reward_breakdown(ctx, config, w, d_nmac, d_lowc, horizon).total()
}
