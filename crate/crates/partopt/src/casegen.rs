//! Generator for the rotating-duty sensor case study.
//!
//! A site runs `n` sensors through a cyclic energy scenario. Each state
//! records the scenario slot (hour), a coarse battery band and the mode of
//! every sensor. One sensor at a time (round-robin by hour) may be switched:
//! the actions are the target modes, and a switch succeeds with a tunable
//! probability drawn from the battery band's parameter group. Battery
//! evolves by a fixed-point proxy: the band's midpoint charge plus harvested
//! energy, minus mode power draw and switch cost, reclassified against the
//! same thresholds that band the scenario's energy values.
//!
//! Scenario slots may also branch probabilistically (constants or declared
//! environment parameters). On such slots mode switching is frozen so branch
//! expressions stay linear: every action just follows the slot distribution.

use std::collections::BTreeMap;
use std::fmt;

use num::{BigInt, One};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::parse_expr_str;
use crate::model::{
    ActionId, AvailabilityMask, LinExpr, MaskRule, ModelError, ParamId, Pmdp, PmdpBuilder, Rational,
};
use crate::search::{BatteryLevel, Category, EnvLevel};

/// Operating mode of one sensor, ordered from most to least power-hungry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    Busy,
    Idle,
    Standby,
    Sleep,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Busy, Mode::Idle, Mode::Standby, Mode::Sleep];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Busy => "busy",
            Mode::Idle => "idle",
            Mode::Standby => "standby",
            Mode::Sleep => "sleep",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-mode integer table (power draw, utility reward).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeTable {
    pub busy: i64,
    pub idle: i64,
    pub standby: i64,
    pub sleep: i64,
}

impl ModeTable {
    pub fn of(&self, m: Mode) -> i64 {
        match m {
            Mode::Busy => self.busy,
            Mode::Idle => self.idle,
            Mode::Standby => self.standby,
            Mode::Sleep => self.sleep,
        }
    }
}

/// One probabilistic successor of a scenario slot: expression text and the
/// index of the target slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvBranch(pub String, pub usize);

/// One slot of the cyclic energy scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvState {
    /// Harvested energy while in this slot; also decides the slot's band.
    pub energy: i64,
    /// Successor distribution. `None` steps to the next slot (cyclically).
    #[serde(default)]
    pub next: Option<Vec<EnvBranch>>,
}

impl EnvState {
    pub fn plain(energy: i64) -> EnvState {
        EnvState { energy, next: None }
    }
}

fn default_name() -> String {
    "duty_cycle".to_string()
}

fn default_sensors() -> usize {
    2
}

/// Daily harvest curve: dark nights, a morning ramp, a midday plateau.
pub const DEFAULT_ENERGY: [i64; 24] = [
    0, 0, 0, 0, 0, 10, 120, 260, 420, 620, 700, 760, 800, 760, 700, 620, 420, 260, 120, 10, 0, 0,
    0, 0,
];

fn default_env() -> Vec<EnvState> {
    DEFAULT_ENERGY.iter().map(|&e| EnvState::plain(e)).collect()
}

fn default_power() -> ModeTable {
    ModeTable {
        busy: 10,
        idle: 5,
        standby: 2,
        sleep: 1,
    }
}

fn default_utility() -> ModeTable {
    ModeTable {
        busy: 4,
        idle: 2,
        standby: 1,
        sleep: 0,
    }
}

fn default_switch_cost() -> i64 {
    1
}

fn default_thresholds() -> (i64, i64) {
    (200, 600)
}

/// Everything the generator needs; every field has a default, so `{}` is a
/// valid configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_sensors")]
    pub sensors: usize,
    #[serde(default = "default_env")]
    pub env: Vec<EnvState>,
    /// Extra parameters the slot distributions may mention.
    #[serde(default)]
    pub env_params: Vec<String>,
    #[serde(default = "default_power")]
    pub power: ModeTable,
    #[serde(default = "default_utility")]
    pub utility: ModeTable,
    #[serde(default = "default_switch_cost")]
    pub switch_cost: i64,
    /// Charge bands: below the first value is low, below the second regular.
    #[serde(default = "default_thresholds")]
    pub thresholds: (i64, i64),
}

impl Default for CaseConfig {
    fn default() -> Self {
        CaseConfig {
            name: default_name(),
            sensors: default_sensors(),
            env: default_env(),
            env_params: Vec::new(),
            power: default_power(),
            utility: default_utility(),
            switch_cost: default_switch_cost(),
            thresholds: default_thresholds(),
        }
    }
}

/// Hard cap on generated state count.
pub const MAX_STATES: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaseError {
    #[error("at least one sensor is required")]
    NoSensors,
    #[error("the energy scenario needs at least one slot")]
    EmptyEnv,
    #[error("thresholds must satisfy 0 < low < high")]
    BadThresholds,
    #[error("slot {0}: {1}")]
    BadEnvBranch(usize, String),
    #[error("{0} states exceed the {MAX_STATES} cap")]
    TooLarge(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("generated model failed validation: {0}")]
    Invalid(String),
}

/// The tunable parameters of one sensor, one group per battery band.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorParams {
    /// 1-based sensor number, matching the `s<k>.` name prefix.
    pub sensor: usize,
    /// Success probabilities at high battery: busy, idle, standby, sleep.
    pub high: Vec<ParamId>,
    /// At regular battery: idle, standby, sleep.
    pub regular: Vec<ParamId>,
    /// At low battery: idle, standby, sleep.
    pub low: Vec<ParamId>,
}

#[derive(Debug, Clone)]
pub struct GeneratedModel {
    pub model: Pmdp,
    pub categories: Vec<Category>,
    pub policy_params: Vec<SensorParams>,
}

/// Band of an energy value, shared by scenario slots and battery charge.
pub fn env_band(cfg: &CaseConfig, energy: i64) -> EnvLevel {
    let (t0, t1) = cfg.thresholds;
    if energy < t0 {
        EnvLevel::Low
    } else if energy < t1 {
        EnvLevel::Medium
    } else {
        EnvLevel::High
    }
}

/// Battery band after one step: midpoint proxy charge of the current band,
/// plus harvested energy, minus power draw and switch cost.
pub fn battery_step(
    cfg: &CaseConfig,
    level: BatteryLevel,
    energy: i64,
    power: i64,
    cost: i64,
) -> BatteryLevel {
    let (t0, t1) = cfg.thresholds;
    let proxy = match level {
        BatteryLevel::Low => t0 / 2,
        BatteryLevel::Regular => (t0 + t1) / 2,
        BatteryLevel::High => (3 * t1 - t0) / 2,
    };
    let charge = proxy + energy - power - cost;
    if charge < t0 {
        BatteryLevel::Low
    } else if charge < t1 {
        BatteryLevel::Regular
    } else {
        BatteryLevel::High
    }
}

/// Target modes switchable at a battery band. Busy needs a full battery.
pub fn ladder_modes(level: BatteryLevel) -> &'static [Mode] {
    match level {
        BatteryLevel::High => &Mode::ALL,
        BatteryLevel::Regular | BatteryLevel::Low => &[Mode::Idle, Mode::Standby, Mode::Sleep],
    }
}

fn param_for(sp: &SensorParams, level: BatteryLevel, target: Mode) -> &ParamId {
    match level {
        BatteryLevel::High => match target {
            Mode::Busy => &sp.high[0],
            Mode::Idle => &sp.high[1],
            Mode::Standby => &sp.high[2],
            Mode::Sleep => &sp.high[3],
        },
        BatteryLevel::Regular => match target {
            Mode::Idle => &sp.regular[0],
            Mode::Standby => &sp.regular[1],
            Mode::Sleep => &sp.regular[2],
            Mode::Busy => unreachable!("busy is not reachable below high battery"),
        },
        BatteryLevel::Low => match target {
            Mode::Idle => &sp.low[0],
            Mode::Standby => &sp.low[1],
            Mode::Sleep => &sp.low[2],
            Mode::Busy => unreachable!("busy is not reachable below high battery"),
        },
    }
}

/// Actions permitted in a situation category. Lean harvests and drained
/// batteries lock the deeper power-saving modes in; abundance opens the
/// whole ladder.
pub fn category_mask(cat: Category) -> AvailabilityMask {
    use BatteryLevel as B;
    use EnvLevel as E;
    let allowed: &[Mode] = match (cat.env, cat.battery) {
        (E::Low, B::Low) | (E::Low, B::Regular) | (E::Medium, B::Low) => {
            &[Mode::Standby, Mode::Sleep]
        }
        (E::Low, B::High) | (E::Medium, B::Regular) | (E::High, B::Low) => {
            &[Mode::Idle, Mode::Standby, Mode::Sleep]
        }
        _ => &Mode::ALL,
    };
    AvailabilityMask {
        rules: vec![MaskRule {
            predicate: vec![
                ("env".to_string(), cat.env.as_str().to_string()),
                ("battery".to_string(), cat.battery.as_str().to_string()),
            ],
            allowed: allowed
                .iter()
                .map(|m| ActionId::new(m.as_str()).expect("mode names are identifiers"))
                .collect(),
        }],
    }
}

fn mode_vectors(n: usize) -> Vec<Vec<Mode>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::with_capacity(out.len() * 4);
        for v in &out {
            for m in Mode::ALL {
                let mut w = v.clone();
                w.push(m);
                next.push(w);
            }
        }
        out = next;
    }
    out
}

fn state_name(h: usize, level: BatteryLevel, modes: &[Mode]) -> String {
    let mut s = format!("h{h}_{level}");
    for m in modes {
        s.push('_');
        s.push_str(m.as_str());
    }
    s
}

/// Builds the full product model: one state per (slot, battery band, mode
/// vector). Nothing is pruned here; availability masks and policies are
/// applied downstream.
pub fn generate_model(cfg: &CaseConfig) -> Result<GeneratedModel, CaseError> {
    let n = cfg.sensors;
    if n == 0 {
        return Err(CaseError::NoSensors);
    }
    let len = cfg.env.len();
    if len == 0 {
        return Err(CaseError::EmptyEnv);
    }
    let (t0, t1) = cfg.thresholds;
    if t0 <= 0 || t1 <= t0 {
        return Err(CaseError::BadThresholds);
    }
    let total = u32::try_from(n)
        .ok()
        .and_then(|n| 4usize.checked_pow(n))
        .and_then(|v| v.checked_mul(3))
        .and_then(|v| v.checked_mul(len))
        .ok_or(CaseError::TooLarge(usize::MAX))?;
    if total > MAX_STATES {
        return Err(CaseError::TooLarge(total));
    }

    let mut b = PmdpBuilder::new(&cfg.name);
    for p in &cfg.env_params {
        b.param(p)?;
    }
    let mut sensors = Vec::with_capacity(n);
    for k in 1..=n {
        let mut declare = |suffixes: &[&str]| -> Result<Vec<ParamId>, ModelError> {
            suffixes
                .iter()
                .map(|s| b.param(&format!("s{k}.{s}")))
                .collect()
        };
        let high = declare(&["p2", "p3", "p4", "p0a"])?;
        let regular = declare(&["p5", "p6", "p0b"])?;
        let low = declare(&["p7", "p8", "p0c"])?;
        b.group(high.clone())?;
        b.group(regular.clone())?;
        b.group(low.clone())?;
        sensors.push(SensorParams {
            sensor: k,
            high,
            regular,
            low,
        });
    }
    for m in Mode::ALL {
        b.action(m.as_str())?;
    }

    let known = |p: &str| cfg.env_params.iter().any(|q| q == p);
    let mut env_next: Vec<Vec<(LinExpr, usize)>> = Vec::with_capacity(len);
    for (h, slot) in cfg.env.iter().enumerate() {
        match &slot.next {
            None => env_next.push(vec![(LinExpr::one(), (h + 1) % len)]),
            Some(branches) if branches.is_empty() => {
                return Err(CaseError::BadEnvBranch(
                    h,
                    "empty successor list".to_string(),
                ))
            }
            Some(branches) => {
                let mut resolved = Vec::with_capacity(branches.len());
                for EnvBranch(expr, target) in branches {
                    if *target >= len {
                        return Err(CaseError::BadEnvBranch(
                            h,
                            format!("target slot {target} out of range"),
                        ));
                    }
                    let e = parse_expr_str(expr, &known)
                        .map_err(|e| CaseError::BadEnvBranch(h, e.to_string()))?;
                    resolved.push((e, *target));
                }
                env_next.push(resolved);
            }
        }
    }

    let vectors = mode_vectors(n);
    for h in 0..len {
        let band = env_band(cfg, cfg.env[h].energy);
        for level in BatteryLevel::ALL {
            for modes in &vectors {
                let mut labels = BTreeMap::new();
                labels.insert("env".to_string(), band.as_str().to_string());
                labels.insert("battery".to_string(), level.as_str().to_string());
                for (j, m) in modes.iter().enumerate() {
                    labels.insert(format!("s{}", j + 1), m.as_str().to_string());
                }
                let reward: i64 = modes.iter().map(|&m| cfg.utility.of(m)).sum();
                b.state_with(
                    &state_name(h, level, modes),
                    Rational::from(BigInt::from(reward)),
                    labels,
                )?;
            }
        }
    }
    b.initial(&state_name(0, BatteryLevel::Regular, &vec![Mode::Busy; n]));

    for h in 0..len {
        let energy = cfg.env[h].energy;
        let next = &env_next[h];
        let advances = next.len() == 1 && next[0].0.as_constant().map_or(false, |c| c.is_one());
        let k0 = h % n;
        for level in BatteryLevel::ALL {
            for modes in &vectors {
                let src = state_name(h, level, modes);
                let hold_power: i64 = modes.iter().map(|&m| cfg.power.of(m)).sum();
                if !advances {
                    // probabilistic slot: switching frozen, every action
                    // follows the slot distribution unchanged
                    let level2 = battery_step(cfg, level, energy, hold_power, 0);
                    let branches: Vec<(LinExpr, String)> = next
                        .iter()
                        .map(|(e, h2)| (e.clone(), state_name(*h2, level2, modes)))
                        .collect();
                    for &t in ladder_modes(level) {
                        b.transition(&src, t.as_str(), branches.clone());
                    }
                    continue;
                }
                let h2 = next[0].1;
                for &t in ladder_modes(level) {
                    if t == modes[k0] {
                        let level2 = battery_step(cfg, level, energy, hold_power, 0);
                        b.transition(
                            &src,
                            t.as_str(),
                            vec![(LinExpr::one(), state_name(h2, level2, modes))],
                        );
                    } else {
                        let w = param_for(&sensors[k0], level, t).clone();
                        let mut switched = modes.clone();
                        switched[k0] = t;
                        let switched_power: i64 = switched.iter().map(|&m| cfg.power.of(m)).sum();
                        let level_go =
                            battery_step(cfg, level, energy, switched_power, cfg.switch_cost);
                        let level_stay =
                            battery_step(cfg, level, energy, hold_power, cfg.switch_cost);
                        b.transition(
                            &src,
                            t.as_str(),
                            vec![
                                (
                                    LinExpr::param(w.clone()),
                                    state_name(h2, level_go, &switched),
                                ),
                                (
                                    LinExpr::one().sub(&LinExpr::param(w)),
                                    state_name(h2, level_stay, modes),
                                ),
                            ],
                        );
                    }
                }
            }
        }
    }

    let model = b.build()?;
    if let Some(v) = model.validate().into_iter().next() {
        return Err(CaseError::Invalid(v.to_string()));
    }
    Ok(GeneratedModel {
        model,
        categories: Category::all(),
        policy_params: sensors,
    })
}

/// Index of the generated bundle: the model file, its digest and the mask
/// file per situation category.
pub fn manifest_json(cfg: &CaseConfig, gm: &GeneratedModel, fingerprint: &str) -> String {
    let params: Vec<&str> = gm.model.params().iter().map(|p| p.as_str()).collect();
    let groups: Vec<Vec<&str>> = gm
        .model
        .groups()
        .iter()
        .map(|g| g.members().iter().map(|p| p.as_str()).collect())
        .collect();
    let categories: Vec<serde_json::Value> = gm
        .categories
        .iter()
        .map(|c| {
            serde_json::json!({
                "id": c.id(),
                "mask": format!("{}.mask", c.id()),
            })
        })
        .collect();
    let manifest = serde_json::json!({
        "name": cfg.name,
        "model": "model.pmdp",
        "fingerprint": fingerprint,
        "states": gm.model.state_count(),
        "sensors": cfg.sensors,
        "env_slots": cfg.env.len(),
        "params": params,
        "groups": groups,
        "categories": categories,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::{parse_model, serialize_model};
    use crate::model::{StateId, Valuation};
    use crate::prune::eliminate_unavailable;

    fn tiny_config() -> CaseConfig {
        CaseConfig {
            sensors: 1,
            env: vec![EnvState::plain(0), EnvState::plain(700)],
            ..CaseConfig::default()
        }
    }

    #[test]
    fn default_dimensions() {
        let cfg = CaseConfig::default();
        assert_eq!(cfg.env.len(), 24);
        let gm = generate_model(&cfg).unwrap();
        assert_eq!(gm.model.state_count(), 24 * 3 * 16);
        assert_eq!(gm.model.params().len(), 20);
        assert_eq!(gm.model.groups().len(), 6);
        assert_eq!(gm.model.actions().len(), 4);
        assert_eq!(gm.categories.len(), 9);
        assert_eq!(
            gm.model.state(gm.model.initial()).name,
            "h0_regular_busy_busy"
        );
        assert!(gm.model.validate().is_empty());
    }

    #[test]
    fn one_sensor_two_slots_is_24_states_and_round_trips() {
        let gm = generate_model(&tiny_config()).unwrap();
        assert_eq!(gm.model.state_count(), 2 * 3 * 4);
        let text = serialize_model(&gm.model);
        assert_eq!(parse_model(&text).unwrap(), gm.model);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = tiny_config();
        let a = serialize_model(&generate_model(&cfg).unwrap().model);
        let b = serialize_model(&generate_model(&cfg).unwrap().model);
        assert_eq!(a, b);
    }

    #[test]
    fn battery_reclassification_boundaries() {
        let cfg = CaseConfig::default();
        use BatteryLevel::*;
        assert_eq!(battery_step(&cfg, Regular, 200, 0, 0), High);
        assert_eq!(battery_step(&cfg, Regular, 199, 0, 0), Regular);
        assert_eq!(battery_step(&cfg, Low, 100, 0, 0), Regular);
        assert_eq!(battery_step(&cfg, Low, 99, 0, 0), Low);
        assert_eq!(battery_step(&cfg, High, 0, 201, 0), Regular);
        assert_eq!(battery_step(&cfg, Regular, 0, 201, 0), Low);
        assert_eq!(battery_step(&cfg, Low, 0, 20, 1), Low);
    }

    #[test]
    fn slot_bands_use_the_battery_thresholds() {
        let cfg = CaseConfig::default();
        assert_eq!(env_band(&cfg, 0), EnvLevel::Low);
        assert_eq!(env_band(&cfg, 199), EnvLevel::Low);
        assert_eq!(env_band(&cfg, 200), EnvLevel::Medium);
        assert_eq!(env_band(&cfg, 599), EnvLevel::Medium);
        assert_eq!(env_band(&cfg, 600), EnvLevel::High);
    }

    #[test]
    fn ladders_depend_on_battery_band() {
        let gm = generate_model(&tiny_config()).unwrap();
        let m = &gm.model;
        let high = m.state_id("h0_high_busy").unwrap();
        assert_eq!(m.transitions(high).len(), 4);
        let regular = m.state_id("h0_regular_busy").unwrap();
        assert_eq!(m.transitions(regular).len(), 3);
        assert!(!m
            .enabled_actions(regular)
            .contains(&ActionId::new("busy").unwrap()));
        let low = m.state_id("h0_low_sleep").unwrap();
        assert_eq!(m.transitions(low).len(), 3);
    }

    #[test]
    fn switch_actions_branch_succeed_or_stay() {
        let gm = generate_model(&tiny_config()).unwrap();
        let m = &gm.model;
        let s = m.state_id("h0_high_busy").unwrap();
        let sleep = ActionId::new("sleep").unwrap();
        let branches = &m.transitions(s)[&sleep];
        assert_eq!(branches.len(), 2);
        let p0a = ParamId::new("s1.p0a").unwrap();
        assert_eq!(branches[0].expr, LinExpr::param(p0a.clone()));
        assert!(m.state(branches[0].target).name.ends_with("_sleep"));
        assert_eq!(branches[1].expr, LinExpr::one().sub(&LinExpr::param(p0a)));
        assert!(m.state(branches[1].target).name.ends_with("_busy"));
        // holding the current mode is a single sure step
        let busy = ActionId::new("busy").unwrap();
        let hold = &m.transitions(s)[&busy];
        assert_eq!(hold.len(), 1);
        assert!(hold[0].expr.as_constant().map_or(false, |c| c.is_one()));
    }

    #[test]
    fn probabilistic_slots_freeze_switching() {
        let mut cfg = tiny_config();
        cfg.env_params = vec!["e1".to_string()];
        cfg.env[0].next = Some(vec![
            EnvBranch("e1".to_string(), 1),
            EnvBranch("1 - e1".to_string(), 0),
        ]);
        let gm = generate_model(&cfg).unwrap();
        let m = &gm.model;
        assert!(m.validate().is_empty());
        let s = m.state_id("h0_regular_busy").unwrap();
        for (_, branches) in m.transitions(s) {
            assert_eq!(branches.len(), 2);
            for br in branches {
                assert!(m.state(br.target).name.ends_with("_busy"));
            }
        }
        // the plain slot still switches
        let s1 = m.state_id("h1_regular_busy").unwrap();
        let idle = ActionId::new("idle").unwrap();
        assert_eq!(m.transitions(s1)[&idle].len(), 2);
    }

    #[test]
    fn bad_env_branches_are_rejected() {
        let mut cfg = tiny_config();
        cfg.env[0].next = Some(vec![EnvBranch("0.5".to_string(), 7)]);
        assert!(matches!(
            generate_model(&cfg),
            Err(CaseError::BadEnvBranch(0, _))
        ));
        cfg.env[0].next = Some(vec![EnvBranch("q".to_string(), 1)]);
        assert!(matches!(
            generate_model(&cfg),
            Err(CaseError::BadEnvBranch(0, _))
        ));
        cfg.env[0].next = Some(vec![]);
        assert!(matches!(
            generate_model(&cfg),
            Err(CaseError::BadEnvBranch(0, _))
        ));
        // a lone non-unit successor leaves the distribution short
        cfg.env[0].next = Some(vec![EnvBranch("0.5".to_string(), 1)]);
        assert!(matches!(generate_model(&cfg), Err(CaseError::Invalid(_))));
    }

    #[test]
    fn config_guards() {
        let mut cfg = CaseConfig::default();
        cfg.sensors = 0;
        assert!(matches!(generate_model(&cfg), Err(CaseError::NoSensors)));
        let mut cfg = CaseConfig::default();
        cfg.env.clear();
        assert!(matches!(generate_model(&cfg), Err(CaseError::EmptyEnv)));
        let mut cfg = CaseConfig::default();
        cfg.thresholds = (600, 200);
        assert!(matches!(
            generate_model(&cfg),
            Err(CaseError::BadThresholds)
        ));
        let mut cfg = CaseConfig::default();
        cfg.sensors = 9;
        assert!(matches!(generate_model(&cfg), Err(CaseError::TooLarge(_))));
    }

    #[test]
    fn category_masks_restrict_only_matching_states() {
        let gm = generate_model(&tiny_config()).unwrap();
        let m = &gm.model;
        let mask = category_mask(Category {
            env: EnvLevel::Low,
            battery: BatteryLevel::Low,
        });
        // slot 0 has zero harvest, so its low-battery states match
        let matching = m.state_id("h0_low_busy").unwrap();
        let allowed = mask.allowed_at(m, matching).unwrap();
        let names: Vec<&str> = allowed.iter().map(|a| a.as_str()).collect();
        assert_eq!(names, vec!["sleep", "standby"]);
        // slot 1 harvests 700, banded high, so the rule does not apply
        let other = m.state_id("h1_low_busy").unwrap();
        assert!(mask.allowed_at(m, other).is_none());
    }

    #[test]
    fn pruning_by_a_lean_category_leaves_only_the_deep_modes() {
        let gm = generate_model(&tiny_config()).unwrap();
        let mask = category_mask(Category {
            env: EnvLevel::Low,
            battery: BatteryLevel::Low,
        });
        let (pruned, trace) = eliminate_unavailable(&gm.model, &mask).unwrap();
        assert!(!trace.is_empty());
        let busy = ActionId::new("busy").unwrap();
        let idle = ActionId::new("idle").unwrap();
        for i in 0..pruned.state_count() {
            let s = StateId(i);
            let info = pruned.state(s);
            if info.labels.get("env").map(String::as_str) == Some("low")
                && info.labels.get("battery").map(String::as_str) == Some("low")
            {
                let enabled = pruned.enabled_actions(s);
                assert!(!enabled.contains(&busy), "{}", info.name);
                assert!(!enabled.contains(&idle), "{}", info.name);
            }
        }
    }

    #[test]
    fn nonsingleton_components_span_whole_scenario_cycles() {
        let gm = generate_model(&tiny_config()).unwrap();
        let mut assignment = Valuation::new();
        for (group, value) in [
            (&gm.policy_params[0].high, 4),
            (&gm.policy_params[0].regular, 3),
            (&gm.policy_params[0].low, 3),
        ] {
            for p in group {
                assignment
                    .insert(
                        p.clone(),
                        Rational::new(BigInt::from(1), BigInt::from(value)),
                    )
                    .unwrap();
            }
        }
        let pol = crate::model::Policy {
            id: "uniform".to_string(),
            valuation: assignment,
            mask: None,
        };
        let (pruned, _) = crate::prune::prune_pipeline(&gm.model, None, Some(&pol)).unwrap();
        let cs = crate::scc::decompose(&pruned);
        let len = tiny_config().env.len();
        for c in &cs.components {
            if c.size() > 1 {
                assert_eq!(c.size() % len, 0, "component of size {}", c.size());
            }
        }

        // the full daily scenario, with the second sensor left symbolic
        let cfg = CaseConfig::default();
        let gm = generate_model(&cfg).unwrap();
        let mut assignment = Valuation::new();
        for (group, value) in [
            (&gm.policy_params[0].high, 4),
            (&gm.policy_params[0].regular, 3),
            (&gm.policy_params[0].low, 3),
        ] {
            for p in group {
                assignment
                    .insert(
                        p.clone(),
                        Rational::new(BigInt::from(1), BigInt::from(value)),
                    )
                    .unwrap();
            }
        }
        let pol = crate::model::Policy {
            id: "first_sensor".to_string(),
            valuation: assignment,
            mask: None,
        };
        let mask = category_mask(Category {
            env: EnvLevel::Medium,
            battery: BatteryLevel::Regular,
        });
        let (pruned, _) = crate::prune::prune_pipeline(&gm.model, Some(&mask), Some(&pol)).unwrap();
        let cs = crate::scc::decompose(&pruned);
        assert!(cs.components.iter().any(|c| c.size() > 1));
        for c in &cs.components {
            if c.size() > 1 {
                assert_eq!(
                    c.size() % cfg.env.len(),
                    0,
                    "component of size {}",
                    c.size()
                );
            }
        }
    }

    #[test]
    fn empty_json_config_is_the_default() {
        let cfg: CaseConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, CaseConfig::default());
        let text = serde_json::to_string(&cfg).unwrap();
        let again: CaseConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(again, cfg);
        assert!(serde_json::from_str::<CaseConfig>("{\"sensor\": 2}").is_err());
    }

    #[test]
    fn manifest_lists_all_categories() {
        let cfg = tiny_config();
        let gm = generate_model(&cfg).unwrap();
        let text = manifest_json(&cfg, &gm, "abc123");
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["states"], serde_json::json!(24));
        assert_eq!(v["fingerprint"], serde_json::json!("abc123"));
        assert_eq!(v["categories"].as_array().unwrap().len(), 9);
        assert_eq!(v["categories"][0]["id"], serde_json::json!("low_low"));
        assert_eq!(
            v["categories"][0]["mask"],
            serde_json::json!("low_low.mask")
        );
        assert_eq!(v["groups"].as_array().unwrap().len(), 3);
    }
}
