//! Highway micro-simulation on a straight multi-lane ring road.
//!
//! Target vehicles follow commanded speeds and lanes through proportional
//! controllers; surrounding vehicles drive with IDM and change lanes with
//! MOBIL. Lane 0 is the left-most lane; lane `n_lanes - 1` is the right-most.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub n_lanes: usize,
    pub lane_width_m: f64,
    pub road_length_m: f64,
    pub dt_s: f64,
    pub k_psi: f64,
    pub k_y: f64,
    pub k0_v: f64,
    /// Maximum acceleration a_c.
    pub a_c_mps2: f64,
    /// Comfortable braking b_c used in the IDM desired gap.
    pub b_c_mps2: f64,
    /// Hard braking limit applied to every longitudinal command.
    pub b_hard_mps2: f64,
    pub v0_mps: f64,
    pub delta_a: f64,
    pub d0_m: f64,
    pub t_gap_s: f64,
    pub politeness: f64,
    pub b_safe_mps2: f64,
    pub da_th_mps2: f64,
    pub dv_action_mps: f64,
    pub v_hard_max_mps: f64,
    pub vehicle_length_m: f64,
    pub max_steering_rad: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            n_lanes: 5,
            lane_width_m: 4.0,
            road_length_m: 1500.0,
            dt_s: 1.0 / 15.0,
            k_psi: 5.0,
            k_y: 5.0 / 3.0,
            k0_v: 5.0,
            a_c_mps2: 3.0,
            b_c_mps2: 5.0,
            b_hard_mps2: 5.0,
            v0_mps: 30.0,
            delta_a: 4.0,
            d0_m: 10.0,
            t_gap_s: 1.5,
            politeness: 0.3,
            b_safe_mps2: 4.0,
            da_th_mps2: 0.2,
            dv_action_mps: 5.0,
            v_hard_max_mps: 45.0,
            vehicle_length_m: 5.0,
            max_steering_rad: PI / 3.0,
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lanes == 0 {
            return Err(Error::config("traffic.n_lanes must be >= 1"));
        }
        let positive = [
            ("lane_width_m", self.lane_width_m),
            ("road_length_m", self.road_length_m),
            ("dt_s", self.dt_s),
            ("a_c_mps2", self.a_c_mps2),
            ("b_c_mps2", self.b_c_mps2),
            ("b_hard_mps2", self.b_hard_mps2),
            ("v0_mps", self.v0_mps),
            ("v_hard_max_mps", self.v_hard_max_mps),
            ("vehicle_length_m", self.vehicle_length_m),
            ("max_steering_rad", self.max_steering_rad),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("traffic.{name} must be > 0, got {v}")));
            }
        }
        if self.max_steering_rad >= PI / 2.0 {
            return Err(Error::config("traffic.max_steering_rad must be < pi/2"));
        }
        Ok(())
    }

    /// Lateral coordinate of a lane centre.
    pub fn lane_center(&self, lane: usize) -> f64 {
        lane as f64 * self.lane_width_m
    }

    /// Index of the lane whose centre is closest to `y`.
    pub fn nearest_lane(&self, y: f64) -> usize {
        let idx = (y / self.lane_width_m).round();
        idx.clamp(0.0, (self.n_lanes - 1) as f64) as usize
    }

    pub fn on_road(&self, y: f64) -> bool {
        let half = 0.5 * self.lane_width_m;
        y >= -half && y <= self.lane_center(self.n_lanes - 1) + half
    }

    /// Forward distance travelled from `from` to reach `to` on the ring.
    pub fn forward_distance(&self, from: f64, to: f64) -> f64 {
        (to - from).rem_euclid(self.road_length_m)
    }

    /// Shortest longitudinal separation on the ring.
    pub fn ring_separation(&self, a: f64, b: f64) -> f64 {
        let d = self.forward_distance(a, b);
        d.min(self.road_length_m - d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleClass {
    Target,
    Surrounding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: usize,
    pub class: VehicleClass,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
    pub slip: f64,
    pub lane: usize,
    pub target_lane: usize,
    /// Commanded speed v_r (targets only).
    pub speed_target: f64,
    pub length: f64,
    pub crashed: bool,
}

impl VehicleState {
    pub fn new(id: usize, class: VehicleClass, x: f64, lane: usize, speed: f64, cfg: &TrafficConfig) -> Self {
        Self {
            id,
            class,
            x,
            y: cfg.lane_center(lane),
            speed,
            heading: 0.0,
            slip: 0.0,
            lane,
            target_lane: lane,
            speed_target: speed,
            length: cfg.vehicle_length_m,
            crashed: false,
        }
    }

    /// True if the vehicle is in, or merging into, `lane`.
    pub fn occupies(&self, lane: usize) -> bool {
        self.lane == lane || self.target_lane == lane
    }
}

/// One explicit-Euler step of the kinematic bicycle model.
///
/// Position and heading advance with the pre-step speed; the speed is then
/// integrated and clamped to `[0, v_hard_max]`.
pub fn step_kinematics(
    s: &VehicleState,
    accel: f64,
    steering: f64,
    dt: f64,
    cfg: &TrafficConfig,
) -> Result<VehicleState> {
    if !(accel.is_finite() && steering.is_finite() && dt.is_finite()) {
        return Err(Error::domain("kinematics inputs must be finite"));
    }
    if !(dt > 0.0) {
        return Err(Error::domain("dt must be > 0"));
    }
    if steering.abs() > cfg.max_steering_rad + 1e-12 {
        return Err(Error::domain(format!("steering {steering} exceeds the maximum")));
    }
    let slip = (steering.tan() / 2.0).atan();
    let mut next = s.clone();
    next.slip = slip;
    next.x = s.x + s.speed * (s.heading + slip).cos() * dt;
    next.y = s.y + s.speed * (s.heading + slip).sin() * dt;
    next.heading = s.heading + s.speed / (0.5 * s.length) * slip.sin() * dt;
    next.speed = (s.speed + accel * dt).clamp(0.0, cfg.v_hard_max_mps);
    Ok(next)
}

/// Heading rate commanded by the lateral controller of a target vehicle.
/// Defined as zero at standstill.
pub fn target_heading_rate(s: &VehicleState, y_lane: f64, cfg: &TrafficConfig) -> f64 {
    if s.speed <= 0.0 {
        return 0.0;
    }
    let lateral_speed = cfg.k_y * (y_lane - s.y);
    let heading_ref = (lateral_speed / s.speed).clamp(-1.0, 1.0).asin();
    cfg.k_psi * (heading_ref - s.heading)
}

/// Front-wheel angle realising a heading rate under the bicycle model, clamped
/// to the steering limit.
pub fn steering_for_heading_rate(rate: f64, speed: f64, length: f64, cfg: &TrafficConfig) -> f64 {
    if speed <= 0.0 {
        return 0.0;
    }
    let slip = (rate * 0.5 * length / speed).clamp(-1.0, 1.0).asin();
    (2.0 * slip.tan())
        .atan()
        .clamp(-cfg.max_steering_rad, cfg.max_steering_rad)
}

/// IDM acceleration. `dv` is the closing speed `v - v_leader`; an infinite gap
/// means there is no leader. Non-positive gaps are emergencies.
pub fn idm_acceleration(v: f64, dv: f64, gap: f64, cfg: &TrafficConfig) -> f64 {
    if gap <= 0.0 || gap.is_nan() {
        return -cfg.b_hard_mps2;
    }
    let free = (v.abs() / cfg.v0_mps).powf(cfg.delta_a);
    let interaction = if gap.is_infinite() {
        0.0
    } else {
        let desired = cfg.d0_m
            + (cfg.t_gap_s * v + v * dv / (2.0 * (cfg.a_c_mps2 * cfg.b_c_mps2).sqrt())).max(0.0);
        (desired / gap).powi(2)
    };
    let a = cfg.a_c_mps2 * (1.0 - free - interaction);
    a.clamp(-cfg.b_hard_mps2, cfg.a_c_mps2)
}

/// Proportional speed tracking of a target vehicle.
pub fn target_longitudinal_accel(s: &VehicleState, cfg: &TrafficConfig) -> f64 {
    (cfg.k0_v * (s.speed_target - s.speed)).clamp(-cfg.b_hard_mps2, cfg.a_c_mps2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneChange {
    Stay,
    Left,
    Right,
}

/// Leader and follower of the ego vehicle in one lane. Positions are unwrapped
/// so that the leader lies ahead of the ego and the follower behind it.
#[derive(Debug, Clone, Default)]
pub struct LaneNeighbors {
    pub leader: Option<VehicleState>,
    pub follower: Option<VehicleState>,
}

#[derive(Debug, Clone, Default)]
pub struct Neighborhood {
    pub current: LaneNeighbors,
    /// `None` when the lane does not exist.
    pub left: Option<LaneNeighbors>,
    pub right: Option<LaneNeighbors>,
}

fn follow_accel(follower: &VehicleState, leader: Option<&VehicleState>, cfg: &TrafficConfig) -> f64 {
    match leader {
        None => idm_acceleration(follower.speed, 0.0, f64::INFINITY, cfg),
        Some(l) => {
            let gap = l.x - follower.x - 0.5 * (l.length + follower.length);
            idm_acceleration(follower.speed, follower.speed - l.speed, gap, cfg)
        }
    }
}

/// MOBIL incentive of moving into a lane, or `None` if the move is vetoed.
fn mobil_gain(ego: &VehicleState, cur: &LaneNeighbors, new: &LaneNeighbors, cfg: &TrafficConfig) -> Option<f64> {
    let (new_follower_gain, new_follower_after) = match &new.follower {
        Some(f) => {
            let before = follow_accel(f, new.leader.as_ref(), cfg);
            let after = follow_accel(f, Some(ego), cfg);
            (after - before, Some(after))
        }
        None => (0.0, None),
    };
    if let Some(after) = new_follower_after {
        if after < -cfg.b_safe_mps2 {
            return None;
        }
    }
    let ego_gain = follow_accel(ego, new.leader.as_ref(), cfg) - follow_accel(ego, cur.leader.as_ref(), cfg);
    let old_follower_gain = match &cur.follower {
        Some(f) => follow_accel(f, cur.leader.as_ref(), cfg) - follow_accel(f, Some(ego), cfg),
        None => 0.0,
    };
    let incentive = ego_gain + cfg.politeness * (old_follower_gain + new_follower_gain);
    (incentive >= cfg.da_th_mps2).then_some(incentive)
}

/// MOBIL lane-change decision. When both sides qualify the larger incentive
/// wins; exact ties go right.
pub fn mobil_decision(ego: &VehicleState, hood: &Neighborhood, cfg: &TrafficConfig) -> LaneChange {
    let left = hood.left.as_ref().and_then(|n| mobil_gain(ego, &hood.current, n, cfg));
    let right = hood.right.as_ref().and_then(|n| mobil_gain(ego, &hood.current, n, cfg));
    match (left, right) {
        (None, None) => LaneChange::Stay,
        (Some(_), None) => LaneChange::Left,
        (None, Some(_)) => LaneChange::Right,
        (Some(l), Some(r)) => {
            if l > r {
                LaneChange::Left
            } else {
                LaneChange::Right
            }
        }
    }
}

fn colliding(a: &VehicleState, b: &VehicleState, cfg: &TrafficConfig) -> bool {
    let longitudinal = cfg.ring_separation(a.x, b.x) < 0.5 * (a.length + b.length);
    longitudinal && (a.lane == b.lane || (a.y - b.y).abs() < 0.9 * cfg.lane_width_m)
}

/// Marks every overlapping pair as crashed and returns the ids involved.
///
/// Sort-and-sweep along the ring: only vehicles within one maximum vehicle
/// length ahead are compared.
pub fn detect_collisions(vehicles: &mut [VehicleState], cfg: &TrafficConfig) -> BTreeSet<usize> {
    let n = vehicles.len();
    let mut hits = BTreeSet::new();
    if n < 2 {
        return hits;
    }
    let reach = vehicles.iter().map(|v| v.length).fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let xa = vehicles[a].x.rem_euclid(cfg.road_length_m);
        let xb = vehicles[b].x.rem_euclid(cfg.road_length_m);
        xa.total_cmp(&xb).then(a.cmp(&b))
    });
    let mut pairs = Vec::new();
    for p in 0..n {
        let i = order[p];
        for k in 1..n {
            let j = order[(p + k) % n];
            if cfg.forward_distance(vehicles[i].x, vehicles[j].x) >= reach {
                break;
            }
            if colliding(&vehicles[i], &vehicles[j], cfg) {
                pairs.push((i, j));
            }
        }
    }
    for (i, j) in pairs {
        vehicles[i].crashed = true;
        vehicles[j].crashed = true;
        hits.insert(vehicles[i].id);
        hits.insert(vehicles[j].id);
    }
    hits
}

/// The road and every vehicle on it.
#[derive(Debug, Clone)]
pub struct World {
    pub cfg: TrafficConfig,
    pub vehicles: Vec<VehicleState>,
}

impl World {
    pub fn new(cfg: TrafficConfig, vehicles: Vec<VehicleState>) -> Result<Self> {
        cfg.validate()?;
        for v in &vehicles {
            if v.lane >= cfg.n_lanes || v.target_lane >= cfg.n_lanes {
                return Err(Error::config(format!("vehicle {} outside the lane range", v.id)));
            }
        }
        Ok(Self { cfg, vehicles })
    }

    /// Closest vehicle ahead of `i` occupying `lane`, with its unwrapped copy.
    fn leader_in(&self, i: usize, lane: usize) -> Option<VehicleState> {
        let ego = &self.vehicles[i];
        self.vehicles
            .iter()
            .enumerate()
            .filter(|(k, v)| *k != i && v.occupies(lane))
            .map(|(_, v)| (self.cfg.forward_distance(ego.x, v.x), v))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
            .map(|(d, v)| VehicleState { x: ego.x + d, ..v.clone() })
    }

    fn follower_in(&self, i: usize, lane: usize) -> Option<VehicleState> {
        let ego = &self.vehicles[i];
        self.vehicles
            .iter()
            .enumerate()
            .filter(|(k, v)| *k != i && v.occupies(lane))
            .map(|(_, v)| (self.cfg.forward_distance(v.x, ego.x), v))
            .filter(|(d, _)| *d > 0.0)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
            .map(|(d, v)| VehicleState { x: ego.x - d, ..v.clone() })
    }

    pub fn neighbors(&self, i: usize, lane: usize) -> LaneNeighbors {
        LaneNeighbors {
            leader: self.leader_in(i, lane),
            follower: self.follower_in(i, lane),
        }
    }

    pub fn neighborhood(&self, i: usize) -> Neighborhood {
        let lane = self.vehicles[i].lane;
        Neighborhood {
            current: self.neighbors(i, lane),
            left: (lane > 0).then(|| self.neighbors(i, lane - 1)),
            right: (lane + 1 < self.cfg.n_lanes).then(|| self.neighbors(i, lane + 1)),
        }
    }

    /// Gap and closing speed to the leader in the vehicle's own lane.
    pub fn leader_gap(&self, i: usize) -> (f64, f64) {
        let ego = &self.vehicles[i];
        match self.leader_in(i, ego.lane) {
            Some(l) => (
                l.x - ego.x - 0.5 * (l.length + ego.length),
                ego.speed - l.speed,
            ),
            None => (f64::INFINITY, 0.0),
        }
    }

    /// Advances the world by one `dt`: MOBIL for surrounding vehicles (applied
    /// in id order), longitudinal and lateral control, kinematics, ring wrap,
    /// then collision detection. Returns the ids that collided this step.
    pub fn step(&mut self) -> Result<BTreeSet<usize>> {
        let cfg = self.cfg.clone();

        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            if v.class != VehicleClass::Surrounding || v.crashed {
                continue;
            }
            let lane = v.lane;
            match mobil_decision(v, &self.neighborhood(i), &cfg) {
                LaneChange::Stay => continue,
                LaneChange::Left => self.teleport(i, lane - 1),
                LaneChange::Right => self.teleport(i, lane + 1),
            }
        }

        let mut commands = Vec::with_capacity(self.vehicles.len());
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.crashed {
                commands.push((0.0, 0.0));
                continue;
            }
            let cmd = match v.class {
                VehicleClass::Target => {
                    let rate = target_heading_rate(v, cfg.lane_center(v.target_lane), &cfg);
                    (
                        target_longitudinal_accel(v, &cfg),
                        steering_for_heading_rate(rate, v.speed, v.length, &cfg),
                    )
                }
                VehicleClass::Surrounding => {
                    let (gap, dv) = self.leader_gap(i);
                    (idm_acceleration(v.speed, dv, gap, &cfg), 0.0)
                }
            };
            commands.push(cmd);
        }

        for (v, (accel, steering)) in self.vehicles.iter_mut().zip(commands) {
            if v.crashed {
                v.speed = 0.0;
                continue;
            }
            let mut next = step_kinematics(v, accel, steering, cfg.dt_s, &cfg)?;
            next.x = next.x.rem_euclid(cfg.road_length_m);
            if next.class == VehicleClass::Target {
                next.lane = cfg.nearest_lane(next.y);
            }
            *v = next;
        }

        Ok(detect_collisions(&mut self.vehicles, &cfg))
    }

    fn teleport(&mut self, i: usize, lane: usize) {
        let y = self.cfg.lane_center(lane);
        let v = &mut self.vehicles[i];
        v.lane = lane;
        v.target_lane = lane;
        v.y = y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car(id: usize, x: f64, lane: usize, speed: f64) -> VehicleState {
        VehicleState::new(id, VehicleClass::Surrounding, x, lane, speed, &TrafficConfig::default())
    }

    #[test]
    fn straight_line_motion() {
        let cfg = TrafficConfig::default();
        let s = car(0, 0.0, 0, 20.0);
        let n = step_kinematics(&s, 0.0, 0.0, 1.0 / 15.0, &cfg).unwrap();
        assert!((n.x - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(n.y, s.y);
        assert_eq!(n.slip, 0.0);
        assert_eq!(n.speed, 20.0);
    }

    #[test]
    fn kinematics_rejects_bad_inputs() {
        let cfg = TrafficConfig::default();
        let s = car(0, 0.0, 0, 20.0);
        assert!(step_kinematics(&s, f64::NAN, 0.0, 0.1, &cfg).is_err());
        assert!(step_kinematics(&s, 0.0, 0.0, 0.0, &cfg).is_err());
        assert!(step_kinematics(&s, 0.0, 1.2, 0.1, &cfg).is_err());
    }

    #[test]
    fn speed_clamps_at_zero_and_hard_max() {
        let cfg = TrafficConfig::default();
        let slow = car(0, 0.0, 0, 0.1);
        assert_eq!(step_kinematics(&slow, -5.0, 0.0, 1.0, &cfg).unwrap().speed, 0.0);
        let fast = car(0, 0.0, 0, 44.9);
        assert_eq!(step_kinematics(&fast, 3.0, 0.0, 1.0, &cfg).unwrap().speed, cfg.v_hard_max_mps);
    }

    #[test]
    fn heading_rate_zero_when_aligned_or_stopped() {
        let cfg = TrafficConfig::default();
        let s = car(0, 0.0, 2, 20.0);
        assert_eq!(target_heading_rate(&s, s.y, &cfg), 0.0);
        let stopped = car(0, 0.0, 2, 0.0);
        assert_eq!(target_heading_rate(&stopped, s.y + 4.0, &cfg), 0.0);
        assert_eq!((cfg.k_psi, cfg.k_y), (5.0, 5.0 / 3.0));
    }

    #[test]
    fn idm_reference_cases() {
        let cfg = TrafficConfig::default();
        assert_eq!(idm_acceleration(cfg.v0_mps, 0.0, f64::INFINITY, &cfg), 0.0);
        assert_eq!(idm_acceleration(0.0, 0.0, f64::INFINITY, &cfg), cfg.a_c_mps2);
        assert_eq!(idm_acceleration(10.0, 0.0, 0.0, &cfg), -cfg.b_hard_mps2);
        assert_eq!(idm_acceleration(10.0, 0.0, -3.0, &cfg), -cfg.b_hard_mps2);
    }

    #[test]
    fn speed_controller_setpoint_and_clamp() {
        let cfg = TrafficConfig::default();
        let mut s = car(0, 0.0, 0, 20.0);
        s.speed_target = 20.0;
        assert_eq!(target_longitudinal_accel(&s, &cfg), 0.0);
        s.speed_target = 30.0;
        assert_eq!(target_longitudinal_accel(&s, &cfg), 3.0);
        s.speed_target = 0.0;
        assert_eq!(target_longitudinal_accel(&s, &cfg), -5.0);
    }

    #[test]
    fn mobil_stays_without_incentive() {
        let cfg = TrafficConfig::default();
        let ego = car(0, 100.0, 2, 25.0);
        // empty road: every lane looks the same, incentive 0 < threshold
        let hood = Neighborhood {
            current: LaneNeighbors::default(),
            left: Some(LaneNeighbors::default()),
            right: Some(LaneNeighbors::default()),
        };
        assert_eq!(mobil_decision(&ego, &hood, &cfg), LaneChange::Stay);
    }

    #[test]
    fn mobil_safety_veto() {
        let cfg = TrafficConfig::default();
        let ego = car(0, 100.0, 2, 25.0);
        let blocker = car(1, 120.0, 2, 5.0);
        // fast follower right behind the ego in the left lane
        let tailgater = car(2, 93.0, 1, 35.0);
        let hood = Neighborhood {
            current: LaneNeighbors { leader: Some(blocker), follower: None },
            left: Some(LaneNeighbors { leader: None, follower: Some(tailgater) }),
            right: None,
        };
        assert_eq!(mobil_decision(&ego, &hood, &cfg), LaneChange::Stay);
    }

    #[test]
    fn collisions_by_gap() {
        let cfg = TrafficConfig::default();
        let mut far = vec![car(0, 0.0, 1, 20.0), car(1, 100.0, 1, 20.0)];
        assert!(detect_collisions(&mut far, &cfg).is_empty());
        let mut near = vec![car(0, 0.0, 1, 20.0), car(1, 4.0, 1, 20.0)];
        assert_eq!(detect_collisions(&mut near, &cfg), BTreeSet::from([0, 1]));
        assert!(near.iter().all(|v| v.crashed));
        // across the ring seam
        let mut seam = vec![car(0, 1498.0, 1, 20.0), car(1, 1.0, 1, 20.0)];
        assert_eq!(detect_collisions(&mut seam, &cfg).len(), 2);
        // adjacent lanes at the same x do not collide
        let mut side = vec![car(0, 10.0, 1, 20.0), car(1, 10.0, 2, 20.0)];
        assert!(detect_collisions(&mut side, &cfg).is_empty());
    }

    #[test]
    fn lane_geometry() {
        let cfg = TrafficConfig::default();
        assert_eq!(cfg.nearest_lane(-3.0), 0);
        assert_eq!(cfg.nearest_lane(5.9), 1);
        assert_eq!(cfg.nearest_lane(99.0), 4);
        assert!(cfg.on_road(16.0));
        assert!(!cfg.on_road(18.5));
        assert_eq!(cfg.ring_separation(1499.0, 1.0), 2.0);
    }
}
