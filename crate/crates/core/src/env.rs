//! Highway + multi-band network environment with vector rewards.
//!
//! Each target vehicle picks one of 15 joint actions per step: a driving
//! action (lane left, keep, lane right, faster, slower) and a base-station
//! association policy. Rewards are per target vehicle and two-dimensional.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::channel::{self, Handover, LinkGeometry, RadioConfig};
use crate::error::{Error, Result};
use crate::objectives::RewardVector;
use crate::rng::{substream, Stream};
use crate::traffic::{TrafficConfig, VehicleClass, VehicleState, World};

pub const N_TRAN_ACTIONS: usize = 5;
pub const N_TELE_ACTIONS: usize = 3;
pub const N_ACTIONS: usize = N_TRAN_ACTIONS * N_TELE_ACTIONS;
/// Features per observation row: x, y, v, psi, n_R, n_T.
pub const ROW_FEATURES: usize = 6;

/// Flattened observation of one target vehicle.
pub type Observation = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranAction {
    LaneLeft,
    Keep,
    LaneRight,
    Faster,
    Slower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TelePolicy {
    /// Best weighted rate including the handover penalty.
    WeightedRate,
    /// Best weighted rate without penalty among base stations with quota left.
    VacantWeightedRate,
    /// Best raw achievable rate.
    MaxRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointAction {
    pub tele: usize,
    pub tran: usize,
}

impl JointAction {
    pub fn from_flat(flat: usize) -> Result<Self> {
        if flat >= N_ACTIONS {
            return Err(Error::domain(format!("action index {flat} outside 0..{N_ACTIONS}")));
        }
        Ok(Self {
            tele: flat / N_TRAN_ACTIONS,
            tran: flat % N_TRAN_ACTIONS,
        })
    }

    pub fn new(tele: usize, tran: usize) -> Result<Self> {
        if tele >= N_TELE_ACTIONS || tran >= N_TRAN_ACTIONS {
            return Err(Error::domain(format!("invalid joint action ({tele}, {tran})")));
        }
        Ok(Self { tele, tran })
    }

    pub fn flat(&self) -> usize {
        self.tele * N_TRAN_ACTIONS + self.tran
    }

    pub fn tran_action(&self) -> TranAction {
        [
            TranAction::LaneLeft,
            TranAction::Keep,
            TranAction::LaneRight,
            TranAction::Faster,
            TranAction::Slower,
        ][self.tran]
    }

    pub fn tele_policy(&self) -> TelePolicy {
        [
            TelePolicy::WeightedRate,
            TelePolicy::VacantWeightedRate,
            TelePolicy::MaxRate,
        ][self.tele]
    }
}

/// Scenario size and speed band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceConfig {
    pub v_min_mps: f64,
    pub v_max_mps: f64,
    pub n_rbs: usize,
    pub n_tbs: usize,
    pub n_targets: usize,
    pub n_surrounding: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            v_min_mps: 20.0,
            v_max_mps: 30.0,
            n_rbs: 5,
            n_tbs: 20,
            n_targets: 5,
            n_surrounding: 20,
        }
    }
}

impl InstanceConfig {
    /// Named test instances `I-(v_min,v_max,n_T,M)`; `M` counts the
    /// surrounding vehicles, with five target vehicles and five RBSs.
    pub fn preset(name: &str) -> Option<Self> {
        let (v_min, v_max, n_tbs, m) = match name {
            "I-(20,30,20,20)" => (20.0, 30.0, 20, 20),
            "I-(25,35,20,20)" => (25.0, 35.0, 20, 20),
            "I-(20,30,10,20)" => (20.0, 30.0, 10, 20),
            "I-(20,30,20,50)" => (20.0, 30.0, 20, 50),
            "I-(30,40,20,20)" => (30.0, 40.0, 20, 20),
            _ => return None,
        };
        Some(Self {
            v_min_mps: v_min,
            v_max_mps: v_max,
            n_rbs: 5,
            n_tbs,
            n_targets: 5,
            n_surrounding: m,
        })
    }

    pub const PRESETS: [&'static str; 5] = [
        "I-(20,30,20,20)",
        "I-(25,35,20,20)",
        "I-(20,30,10,20)",
        "I-(20,30,20,50)",
        "I-(30,40,20,20)",
    ];

    pub fn validate(&self) -> Result<()> {
        if !(self.v_min_mps.is_finite() && self.v_min_mps >= 0.0 && self.v_min_mps < self.v_max_mps) {
            return Err(Error::config("instance needs 0 <= v_min < v_max"));
        }
        if self.n_targets == 0 {
            return Err(Error::config("instance needs at least one target vehicle"));
        }
        if self.n_rbs + self.n_tbs == 0 {
            return Err(Error::config("instance needs at least one base station"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub r_th_bps: f64,
    pub sense_radius_m: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            c1: 0.4,
            c2: 1.0,
            c3: 0.1,
            c4: 0.2,
            c5: 4.5e-7,
            r_th_bps: 5e7,
            sense_radius_m: 200.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let c = [self.c1, self.c2, self.c3, self.c4, self.c5];
        if c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config("reward coefficients must be finite and >= 0"));
        }
        if !(self.c2 > self.c1 && self.c2 > self.c3 && self.c2 > self.c4) {
            return Err(Error::config("reward.c2 must be the largest of c1..c4"));
        }
        if !(self.sense_radius_m > 0.0 && self.r_th_bps >= 0.0) {
            return Err(Error::config("reward.sense_radius_m must be > 0 and r_th_bps >= 0"));
        }
        Ok(())
    }
}

/// Everything needed to build an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub horizon_steps: usize,
    /// Vehicles spawn with `x` in `[0, spawn_window_m)`.
    pub spawn_window_m: f64,
    /// Minimum bumper-to-bumper gap between spawned vehicles in one lane.
    pub spawn_gap_m: f64,
    /// Lateral distance of base stations from the outer lane centres.
    pub bs_offset_m: f64,
    /// Number of nearest other vehicles (of either class) appended to each
    /// observation as ego-relative rows.
    pub observe_surrounding: usize,
    /// Longitudinal offset that maps to 1 in surrounding-vehicle rows.
    pub relative_range_m: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 30,
            spawn_window_m: 1500.0,
            spawn_gap_m: 5.0,
            bs_offset_m: 10.0,
            observe_surrounding: 0,
            relative_range_m: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub instance: InstanceConfig,
    pub traffic: TrafficConfig,
    pub radio: RadioConfig,
    pub reward: RewardConfig,
    pub env: EnvConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.instance.validate()?;
        self.traffic.validate()?;
        self.radio.validate()?;
        self.reward.validate()?;
        if self.env.horizon_steps == 0 {
            return Err(Error::config("env.horizon_steps must be >= 1"));
        }
        if !(self.env.spawn_window_m > 0.0 && self.env.spawn_gap_m >= 0.0) {
            return Err(Error::config("env.spawn_window_m must be > 0"));
        }
        if !(self.env.relative_range_m > 0.0) {
            return Err(Error::config("env.relative_range_m must be > 0"));
        }
        Ok(())
    }

    pub fn observation_dim(&self) -> usize {
        (self.instance.n_targets + self.env.observe_surrounding) * ROW_FEATURES
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BsKind {
    Rbs,
    Tbs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseStation {
    pub id: usize,
    pub kind: BsKind,
    pub x: f64,
    pub y: f64,
    pub quota: u32,
    /// Number of target vehicles currently associated.
    pub load: u32,
}

impl BaseStation {
    pub fn new(id: usize, kind: BsKind, x: f64, y: f64, radio: &RadioConfig) -> Self {
        let quota = match kind {
            BsKind::Rbs => radio.q_r,
            BsKind::Tbs => radio.q_t,
        };
        Self {
            id,
            kind,
            x,
            y,
            quota,
            load: 0,
        }
    }

    fn height(&self, radio: &RadioConfig) -> f64 {
        match self.kind {
            BsKind::Rbs => radio.h_r_m,
            BsKind::Tbs => radio.h_t_m,
        }
    }

    pub fn geometry(&self, x: f64, y: f64, radio: &RadioConfig) -> Result<LinkGeometry> {
        LinkGeometry::new((self.x - x).hypot(self.y - y), self.height(radio))
    }

    pub fn handover_into(&self) -> Handover {
        match self.kind {
            BsKind::Rbs => Handover::ToRbs,
            BsKind::Tbs => Handover::ToTbs,
        }
    }
}

/// How the gain on interfering paths is set when evaluating links.
enum LinkDraw<'a> {
    /// Unit fading and mean beam alignment.
    Mean,
    /// Per-path fading powers `fading[bs]` and alignment products `align[bs]`.
    Sampled { fading: &'a [f64], align: &'a [f64] },
}

/// Achievable rate from every base station to a receiver at `(x, y)`.
fn link_rates(x: f64, y: f64, stations: &[BaseStation], radio: &RadioConfig, draw: LinkDraw<'_>) -> Result<Vec<f64>> {
    let geoms = stations
        .iter()
        .map(|b| b.geometry(x, y, radio))
        .collect::<Result<Vec<_>>>()?;
    let mean_alignment = (radio.f_tx() * radio.g_t_max_tx + (1.0 - radio.f_tx()) * radio.g_t_min)
        * (radio.f_rx() * radio.g_t_max_rx + (1.0 - radio.f_rx()) * radio.g_t_min);
    let gain = |k: usize| match (&draw, stations[k].kind) {
        (LinkDraw::Mean, BsKind::Rbs) => 1.0,
        (LinkDraw::Mean, BsKind::Tbs) => mean_alignment,
        (LinkDraw::Sampled { fading, .. }, BsKind::Rbs) => fading[k],
        (LinkDraw::Sampled { align, .. }, BsKind::Tbs) => align[k],
    };
    let mut rates = Vec::with_capacity(stations.len());
    for (i, bs) in stations.iter().enumerate() {
        let interferers: Vec<(LinkGeometry, f64)> = stations
            .iter()
            .enumerate()
            .filter(|(k, other)| *k != i && other.kind == bs.kind)
            .map(|(k, _)| (geoms[k], gain(k)))
            .collect();
        let rate = match bs.kind {
            BsKind::Rbs => {
                let h = match &draw {
                    LinkDraw::Mean => 1.0,
                    LinkDraw::Sampled { fading, .. } => fading[i],
                };
                let sinr = channel::rf_sinr(&geoms[i], h, &interferers, radio)?;
                channel::achievable_rate(sinr, radio.w_r_hz, radio.l_b_r_symbols, radio.eps_c)?
            }
            BsKind::Tbs => {
                let sinr = channel::thz_sinr(&geoms[i], &interferers, radio)?;
                channel::achievable_rate(sinr, radio.w_t_hz, radio.l_b_t_symbols, radio.eps_c)?
            }
        };
        rates.push(rate);
    }
    Ok(rates)
}

/// Base station picked by an association policy.
///
/// `stations[i].load` must exclude the deciding vehicle; the vehicle's own
/// arrival is counted when evaluating each candidate. Ties go to the current
/// station, then to the lowest id.
pub fn choose_station(policy: TelePolicy, current: usize, rates: &[f64], stations: &[BaseStation]) -> Result<usize> {
    if stations.is_empty() {
        return Err(Error::Empty("base-station list"));
    }
    if rates.len() != stations.len() {
        return Err(Error::Shape {
            expected: stations.len(),
            got: rates.len(),
        });
    }
    let mut scores = Vec::with_capacity(stations.len());
    for (i, bs) in stations.iter().enumerate() {
        let joined = bs.load + 1;
        let score = match policy {
            TelePolicy::WeightedRate => {
                let mu = if i == current {
                    Handover::Keep.penalty()
                } else {
                    bs.handover_into().penalty()
                };
                channel::weighted_rate(rates[i], bs.quota, joined, mu)?
            }
            TelePolicy::VacantWeightedRate => channel::weighted_rate(rates[i], bs.quota, joined, 0.0)?,
            TelePolicy::MaxRate => rates[i],
        };
        scores.push(score);
    }
    let eligible: Vec<usize> = match policy {
        TelePolicy::VacantWeightedRate => {
            let vacant: Vec<usize> = (0..stations.len())
                .filter(|&i| stations[i].load + 1 <= stations[i].quota)
                .collect();
            if vacant.is_empty() {
                (0..stations.len()).collect()
            } else {
                vacant
            }
        }
        _ => (0..stations.len()).collect(),
    };
    let mut best = eligible[0];
    for &i in &eligible[1..] {
        if scores[i] > scores[best] || (scores[i] == scores[best] && i == current) {
            best = i;
        }
    }
    if current < stations.len() && eligible.contains(&current) && scores[current] == scores[best] {
        best = current;
    }
    Ok(best)
}

/// Per-step transportation reward, clamped to [0, 1].
pub fn transport_reward(
    speed: f64,
    lane: usize,
    n_lanes: usize,
    collided: bool,
    on_road: bool,
    v_min: f64,
    v_max: f64,
    cfg: &RewardConfig,
) -> f64 {
    let speed_term = (speed - v_min) / (v_max - v_min);
    let right_lane = if n_lanes > 1 {
        lane as f64 / (n_lanes - 1) as f64
    } else {
        1.0
    };
    let r = cfg.c1 * speed_term - cfg.c2 * f64::from(u8::from(collided))
        + cfg.c3 * right_lane
        + cfg.c4 * f64::from(u8::from(on_road));
    r.clamp(0.0, 1.0)
}

/// Per-step telecommunication reward.
pub fn telecom_reward(weighted_rate: f64, ho_probability: f64, cfg: &RewardConfig) -> f64 {
    cfg.c5 * weighted_rate * (1.0 - ho_probability.min(1.0))
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observations: Vec<Observation>,
    pub rewards: Vec<RewardVector>,
    pub done: bool,
    /// Whether each target vehicle crashed.
    pub collided: Vec<bool>,
}

/// Initial vehicles and base stations of an episode.
#[derive(Debug, Clone)]
pub struct Layout {
    pub vehicles: Vec<VehicleState>,
    pub stations: Vec<BaseStation>,
}

#[derive(Debug, Clone)]
pub struct Env {
    scenario: Scenario,
    world: World,
    stations: Vec<BaseStation>,
    /// Indices into `world.vehicles` of the target vehicles, ascending id.
    targets: Vec<usize>,
    serving: Vec<usize>,
    handovers: Vec<u32>,
    last_wr: Vec<f64>,
    rng: ChaCha8Rng,
    t: usize,
    done: bool,
}

impl Env {
    /// Random layout drawn from `seed`, then initial association.
    pub fn reset(scenario: &Scenario, seed: u64) -> Result<(Self, Vec<Observation>)> {
        scenario.validate()?;
        let mut layout_rng = substream(seed, Stream::Layout);
        let layout = random_layout(scenario, &mut layout_rng)?;
        Self::with_layout(scenario, layout, seed)
    }

    /// Environment over a given layout. Target vehicles are associated with
    /// their best-rate base station without handover penalty.
    pub fn with_layout(scenario: &Scenario, layout: Layout, seed: u64) -> Result<(Self, Vec<Observation>)> {
        scenario.validate()?;
        let world = World::new(scenario.traffic.clone(), layout.vehicles)?;
        if layout.stations.is_empty() {
            return Err(Error::config("layout has no base stations"));
        }
        let mut targets: Vec<usize> = world
            .vehicles
            .iter()
            .enumerate()
            .filter(|(_, v)| v.class == VehicleClass::Target)
            .map(|(i, _)| i)
            .collect();
        targets.sort_by_key(|&i| world.vehicles[i].id);
        if targets.len() != scenario.instance.n_targets {
            return Err(Error::config(format!(
                "layout has {} target vehicles, instance expects {}",
                targets.len(),
                scenario.instance.n_targets
            )));
        }
        let n = targets.len();
        let mut env = Self {
            scenario: scenario.clone(),
            world,
            stations: layout.stations,
            targets,
            serving: vec![0; n],
            handovers: vec![0; n],
            last_wr: vec![0.0; n],
            rng: substream(seed, Stream::Env),
            t: 0,
            done: false,
        };
        for bs in &mut env.stations {
            bs.load = 0;
        }
        let rates = env.sampled_rates()?;
        for (j, r) in rates.iter().enumerate() {
            let pick = choose_station(TelePolicy::MaxRate, usize::MAX, r, &env.stations)?;
            env.serving[j] = pick;
            env.stations[pick].load += 1;
        }
        let obs = env.observations()?;
        Ok((env, obs))
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn stations(&self) -> &[BaseStation] {
        &self.stations
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn target(&self, j: usize) -> &VehicleState {
        &self.world.vehicles[self.targets[j]]
    }

    pub fn serving(&self) -> &[usize] {
        &self.serving
    }

    pub fn handovers(&self) -> &[u32] {
        &self.handovers
    }

    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Weighted rate each target vehicle received on the last step.
    pub fn last_weighted_rates(&self) -> &[f64] {
        &self.last_wr
    }

    /// Handovers so far divided by elapsed steps, capped at one.
    pub fn ho_probability(&self, j: usize) -> f64 {
        if self.t == 0 {
            0.0
        } else {
            (f64::from(self.handovers[j]) / self.t as f64).min(1.0)
        }
    }

    pub fn observation_dim(&self) -> usize {
        self.scenario.observation_dim()
    }

    fn sampled_rates(&mut self) -> Result<Vec<Vec<f64>>> {
        let radio = &self.scenario.radio;
        let mut out = Vec::with_capacity(self.targets.len());
        for &vi in &self.targets {
            let fading: Vec<f64> = self
                .stations
                .iter()
                .map(|_| Exp1.sample(&mut self.rng))
                .collect();
            let align: Vec<f64> = self
                .stations
                .iter()
                .map(|_| channel::sample_beam_alignment(radio, &mut self.rng))
                .collect();
            let v = &self.world.vehicles[vi];
            out.push(link_rates(
                v.x,
                v.y,
                &self.stations,
                radio,
                LinkDraw::Sampled {
                    fading: &fading,
                    align: &align,
                },
            )?);
        }
        Ok(out)
    }

    /// Applies one joint action per target vehicle and advances one step.
    pub fn step(&mut self, actions: &[JointAction]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::domain("step called on a finished episode"));
        }
        if actions.len() != self.targets.len() {
            return Err(Error::Shape {
                expected: self.targets.len(),
                got: actions.len(),
            });
        }
        let inst = self.scenario.instance.clone();
        let traffic = self.scenario.traffic.clone();
        for (a, &vi) in actions.iter().zip(&self.targets) {
            JointAction::new(a.tele, a.tran)?;
            let v = &mut self.world.vehicles[vi];
            match a.tran_action() {
                TranAction::LaneLeft => v.target_lane = v.target_lane.saturating_sub(1),
                TranAction::LaneRight => v.target_lane = (v.target_lane + 1).min(traffic.n_lanes - 1),
                TranAction::Keep => {}
                TranAction::Faster => {
                    v.speed_target = (v.speed_target + traffic.dv_action_mps).clamp(inst.v_min_mps, inst.v_max_mps)
                }
                TranAction::Slower => {
                    v.speed_target = (v.speed_target - traffic.dv_action_mps).clamp(inst.v_min_mps, inst.v_max_mps)
                }
            }
        }

        self.world.step()?;
        self.t += 1;

        let rates = self.sampled_rates()?;
        let mut switched = vec![Handover::Keep; self.targets.len()];
        for (j, a) in actions.iter().enumerate() {
            let current = self.serving[j];
            self.stations[current].load -= 1;
            let pick = choose_station(a.tele_policy(), current, &rates[j], &self.stations)?;
            self.stations[pick].load += 1;
            if pick != current {
                self.handovers[j] += 1;
                self.serving[j] = pick;
                switched[j] = self.stations[pick].handover_into();
            }
        }

        let mut rewards = Vec::with_capacity(self.targets.len());
        let mut collided = Vec::with_capacity(self.targets.len());
        for j in 0..self.targets.len() {
            let v = self.target(j).clone();
            let bs = &self.stations[self.serving[j]];
            let wr = channel::weighted_rate(rates[j][self.serving[j]], bs.quota, bs.load, switched[j].penalty())?;
            self.last_wr[j] = wr;
            let tran = transport_reward(
                v.speed,
                v.lane,
                traffic.n_lanes,
                v.crashed,
                traffic.on_road(v.y),
                inst.v_min_mps,
                inst.v_max_mps,
                &self.scenario.reward,
            );
            let tele = telecom_reward(wr, self.ho_probability(j), &self.scenario.reward);
            rewards.push(RewardVector::new(tran, tele));
            collided.push(v.crashed);
        }

        self.done = collided.iter().any(|&c| c) || self.t >= self.scenario.env.horizon_steps;
        Ok(StepOutcome {
            observations: self.observations()?,
            rewards,
            done: self.done,
            collided,
        })
    }

    /// Number of RBSs and TBSs within the sensing radius whose mean-channel
    /// rate meets the threshold.
    pub fn capable_counts(&self, j: usize) -> Result<(usize, usize)> {
        let v = self.target(j);
        let radio = &self.scenario.radio;
        let rates = link_rates(v.x, v.y, &self.stations, radio, LinkDraw::Mean)?;
        let mut counts = (0, 0);
        for (bs, rate) in self.stations.iter().zip(rates) {
            let near = (bs.x - v.x).hypot(bs.y - v.y) <= self.scenario.reward.sense_radius_m;
            if near && rate >= self.scenario.reward.r_th_bps {
                match bs.kind {
                    BsKind::Rbs => counts.0 += 1,
                    BsKind::Tbs => counts.1 += 1,
                }
            }
        }
        Ok(counts)
    }

    fn feature_row(&self, v: &VehicleState, counts: (usize, usize)) -> [f64; ROW_FEATURES] {
        let traffic = &self.scenario.traffic;
        let inst = &self.scenario.instance;
        let span = traffic.lane_center(traffic.n_lanes - 1);
        let y = if span > 0.0 { 2.0 * v.y / span - 1.0 } else { 0.0 };
        let frac = |n: usize, total: usize| if total == 0 { 0.0 } else { n as f64 / total as f64 };
        [
            2.0 * v.x / traffic.road_length_m - 1.0,
            y,
            2.0 * (v.speed - inst.v_min_mps) / (inst.v_max_mps - inst.v_min_mps) - 1.0,
            v.heading / std::f64::consts::PI,
            frac(counts.0, inst.n_rbs),
            frac(counts.1, inst.n_tbs),
        ]
        .map(|f| f.clamp(-1.0, 1.0))
    }

    /// Ego-relative row of a surrounding vehicle: longitudinal offset over
    /// `relative_range_m`, lateral offset over two lane widths, speed
    /// difference over the speed band, heading, and a presence flag.
    fn relative_row(&self, ego: &VehicleState, v: &VehicleState) -> [f64; ROW_FEATURES] {
        let traffic = &self.scenario.traffic;
        let inst = &self.scenario.instance;
        let mut dx = traffic.forward_distance(ego.x, v.x);
        if dx > 0.5 * traffic.road_length_m {
            dx -= traffic.road_length_m;
        }
        [
            dx / self.scenario.env.relative_range_m,
            (v.y - ego.y) / (2.0 * traffic.lane_width_m),
            (v.speed - ego.speed) / (inst.v_max_mps - inst.v_min_mps),
            v.heading / std::f64::consts::PI,
            1.0,
            0.0,
        ]
        .map(|f| f.clamp(-1.0, 1.0))
    }

    /// Observations of every target vehicle, rows rotated so the ego row
    /// comes first.
    pub fn observations(&self) -> Result<Vec<Observation>> {
        let n = self.targets.len();
        let mut rows = Vec::with_capacity(n);
        for j in 0..n {
            rows.push(self.feature_row(self.target(j), self.capable_counts(j)?));
        }
        let k = self.scenario.env.observe_surrounding;
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let mut obs = Vec::with_capacity(self.observation_dim());
            for r in 0..n {
                obs.extend_from_slice(&rows[(j + r) % n]);
            }
            if k > 0 {
                let ego = self.target(j);
                let traffic = &self.scenario.traffic;
                let mut others: Vec<&VehicleState> = self
                    .world
                    .vehicles
                    .iter()
                    .filter(|v| v.id != ego.id)
                    .collect();
                others.sort_by(|a, b| {
                    let da = traffic.ring_separation(ego.x, a.x).hypot(a.y - ego.y);
                    let db = traffic.ring_separation(ego.x, b.x).hypot(b.y - ego.y);
                    da.total_cmp(&db).then(a.id.cmp(&b.id))
                });
                for slot in 0..k {
                    match others.get(slot) {
                        Some(v) => obs.extend_from_slice(&self.relative_row(ego, v)),
                        None => obs.extend_from_slice(&[0.0; ROW_FEATURES]),
                    }
                }
            }
            out.push(obs);
        }
        Ok(out)
    }
}

const PLACEMENT_TRIES: usize = 1000;

/// Random collision-free vehicle placement and roadside base stations.
pub fn random_layout<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<Layout> {
    let inst = &scenario.instance;
    let traffic = &scenario.traffic;
    let window = scenario.env.spawn_window_m.min(traffic.road_length_m);
    let total = inst.n_targets + inst.n_surrounding;
    let mut vehicles: Vec<VehicleState> = Vec::with_capacity(total);
    for id in 0..total {
        let class = if id < inst.n_targets {
            VehicleClass::Target
        } else {
            VehicleClass::Surrounding
        };
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            let lane = rng.random_range(0..traffic.n_lanes);
            let x = rng.random_range(0.0..window);
            let clear = vehicles.iter().all(|o| {
                o.lane != lane
                    || traffic.ring_separation(o.x, x) >= traffic.vehicle_length_m + scenario.env.spawn_gap_m
            });
            if clear {
                placed = Some((lane, x));
                break;
            }
        }
        let (lane, x) = placed.ok_or_else(|| {
            Error::config(format!("could not place vehicle {id} without overlap; reduce density"))
        })?;
        let speed = rng.random_range(inst.v_min_mps..=inst.v_max_mps);
        vehicles.push(VehicleState::new(id, class, x, lane, speed, traffic));
    }

    let far_side = traffic.lane_center(traffic.n_lanes - 1) + scenario.env.bs_offset_m;
    let mut stations = Vec::with_capacity(inst.n_rbs + inst.n_tbs);
    let kinds = std::iter::repeat_n(BsKind::Rbs, inst.n_rbs).chain(std::iter::repeat_n(BsKind::Tbs, inst.n_tbs));
    for (id, kind) in kinds.enumerate() {
        let x = rng.random_range(0.0..traffic.road_length_m);
        let y = if rng.random_bool(0.5) {
            -scenario.env.bs_offset_m
        } else {
            far_side
        };
        stations.push(BaseStation::new(id, kind, x, y, &scenario.radio));
    }
    Ok(Layout { vehicles, stations })
}
