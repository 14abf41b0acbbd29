//! Feeder description file and its validation.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FEEDER_FORMAT_VERSION: u32 = 1;

const REFERENCE_FEEDER: &str = include_str!("../../data/reference_feeder.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Subset of {a, b, c}, written as a string such as `"abc"` or `"b"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PhaseSet([bool; 3]);

impl PhaseSet {
    pub const THREE: PhaseSet = PhaseSet([true; 3]);

    pub fn contains(self, p: Phase) -> bool {
        self.0[p.index()]
    }

    pub fn count(self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(self, other: PhaseSet) -> bool {
        (0..3).all(|i| !self.0[i] || other.0[i])
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |&p| self.contains(p))
    }
}

impl TryFrom<String> for PhaseSet {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        let mut set = [false; 3];
        for ch in s.chars() {
            let i = match ch {
                'a' => 0,
                'b' => 1,
                'c' => 2,
                _ => return Err(format!("unknown phase {ch:?} in {s:?}")),
            };
            if set[i] {
                return Err(format!("phase {ch:?} repeated in {s:?}"));
            }
            set[i] = true;
        }
        if !set.iter().any(|&b| b) {
            return Err("empty phase set".into());
        }
        Ok(PhaseSet(set))
    }
}

impl From<PhaseSet> for String {
    fn from(p: PhaseSet) -> String {
        p.to_string()
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, ch) in ['a', 'b', 'c'].iter().enumerate() {
            if self.0[i] {
                write!(f, "{ch}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadType {
    ConstantPower,
    ConstantImpedance,
    ConstantCurrent,
}

impl LoadType {
    /// Exponent of `V / V0` in the consumed power.
    pub fn voltage_exponent(self) -> i32 {
        match self {
            LoadType::ConstantPower => 0,
            LoadType::ConstantCurrent => 1,
            LoadType::ConstantImpedance => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
}

/// A line section. `r` and `x` are per-phase series impedances in per-unit,
/// identical on every phase the branch carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: String,
    pub from: String,
    pub to: String,
    pub phases: PhaseSet,
    pub r: f64,
    pub x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_id: Option<String>,
}

impl Branch {
    pub fn switchable(&self) -> bool {
        self.switch_id.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtectiveDevice {
    pub id: String,
    pub branch: String,
}

/// A named switching configuration; switches not listed are open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    pub id: String,
    pub closed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseLoad {
    pub phase: Phase,
    pub p: f64,
    pub q: f64,
}

/// One load, possibly spanning several phases, driven by a single random
/// scale per scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub id: String,
    pub bus: String,
    #[serde(rename = "type")]
    pub kind: LoadType,
    pub phases: Vec<PhaseLoad>,
}

fn default_power_factor() -> f64 {
    0.95
}

fn default_true() -> bool {
    true
}

/// A DER at constant power factor, absorbing reactive power. Output is split
/// equally over its phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Der {
    pub id: String,
    pub bus: String,
    pub phases: PhaseSet,
    pub p_mean: f64,
    #[serde(default = "default_power_factor")]
    pub power_factor: f64,
    #[serde(default = "default_true")]
    pub metered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Substation {
    pub id: String,
    pub bus: String,
}

fn default_v0() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederModel {
    pub format_version: u32,
    pub name: String,
    #[serde(default = "default_v0")]
    pub v0: f64,
    /// Slack bus held at `v0` on every phase.
    pub source_bus: String,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub protective_devices: Vec<ProtectiveDevice>,
    /// Admissible switching configurations. When empty, every open/closed
    /// pattern of the switches that keeps all loads supplied with at most one
    /// loop is used, named `C1`, `C2`, ... in enumeration order.
    #[serde(default)]
    pub switch_configs: Vec<SwitchConfig>,
    #[serde(default)]
    pub loads: Vec<Load>,
    #[serde(default)]
    pub ders: Vec<Der>,
    pub substation: Substation,
}

impl FeederModel {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The shipped 10-bus, 12-topology reference feeder.
    pub fn reference() -> Self {
        Self::from_json(REFERENCE_FEEDER).expect("reference feeder parses")
    }

    /// SHA-256 of the canonical compact serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("feeder serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn switch_ids(&self) -> Vec<&str> {
        self.branches.iter().filter_map(|b| b.switch_id.as_deref()).collect()
    }

    /// Checks every field-level invariant. Topology-level checks live in
    /// [`super::flow::PreparedNetwork::new`].
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FEEDER_FORMAT_VERSION {
            return Err(Error::feeder(
                "format_version",
                format!("unsupported version {}", self.format_version),
            ));
        }
        if !(self.v0.is_finite() && self.v0 > 0.0) {
            return Err(Error::feeder("v0", "must be positive and finite"));
        }

        let mut bus_phases: HashMap<&str, PhaseSet> = HashMap::new();
        for b in &self.buses {
            if b.id.is_empty() {
                return Err(Error::feeder("buses", "empty bus id"));
            }
            if bus_phases.insert(&b.id, b.phases).is_some() {
                return Err(Error::feeder(format!("buses[{}]", b.id), "duplicate id"));
            }
        }
        let three_phase_bus = |field: String, bus: &str| -> Result<()> {
            match bus_phases.get(bus) {
                None => Err(Error::feeder(field, format!("unknown bus {bus:?}"))),
                Some(p) if *p != PhaseSet::THREE => {
                    Err(Error::feeder(field, format!("bus {bus:?} must carry all three phases")))
                }
                Some(_) => Ok(()),
            }
        };
        three_phase_bus("source_bus".into(), &self.source_bus)?;
        three_phase_bus("substation.bus".into(), &self.substation.bus)?;
        if self.substation.bus == self.source_bus {
            return Err(Error::feeder("substation.bus", "must differ from the source bus"));
        }
        if self.substation.id.is_empty() || self.substation.id.contains('.') {
            return Err(Error::feeder("substation.id", "must be non-empty and contain no '.'"));
        }

        let mut branch_ids = HashSet::new();
        let mut switch_ids = HashSet::new();
        for br in &self.branches {
            let field = |f: &str| format!("branches[{}].{f}", br.id);
            if !branch_ids.insert(br.id.as_str()) {
                return Err(Error::feeder(format!("branches[{}]", br.id), "duplicate id"));
            }
            for (name, end) in [("from", &br.from), ("to", &br.to)] {
                let phases = bus_phases
                    .get(end.as_str())
                    .ok_or_else(|| Error::feeder(field(name), format!("unknown bus {end:?}")))?;
                if !br.phases.is_subset_of(*phases) {
                    return Err(Error::feeder(
                        field("phases"),
                        format!("phases {} not present at bus {end:?}", br.phases),
                    ));
                }
            }
            if br.from == br.to {
                return Err(Error::feeder(field("to"), "branch connects a bus to itself"));
            }
            for (name, v) in [("r", br.r), ("x", br.x)] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::feeder(field(name), format!("{v} must be finite and non-negative")));
                }
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Error::feeder(field("r"), "r and x are both zero"));
            }
            if let Some(s) = &br.switch_id {
                if !switch_ids.insert(s.as_str()) {
                    return Err(Error::feeder(field("switch_id"), format!("duplicate switch {s:?}")));
                }
            }
        }

        let mut pd_ids = HashSet::new();
        let mut pd_branches = HashSet::new();
        for pd in &self.protective_devices {
            let field = format!("protective_devices[{}]", pd.id);
            if !pd_ids.insert(pd.id.as_str()) {
                return Err(Error::feeder(field, "duplicate id"));
            }
            let br = self
                .branches
                .iter()
                .find(|b| b.id == pd.branch)
                .ok_or_else(|| Error::feeder(format!("{field}.branch"), format!("unknown branch {:?}", pd.branch)))?;
            if br.switchable() {
                return Err(Error::feeder(format!("{field}.branch"), "branch is already a switch"));
            }
            if !pd_branches.insert(pd.branch.as_str()) {
                return Err(Error::feeder(format!("{field}.branch"), "branch carries two devices"));
            }
        }

        let mut config_ids = HashSet::new();
        for cfg in &self.switch_configs {
            let field = format!("switch_configs[{}]", cfg.id);
            if cfg.id.is_empty() || !config_ids.insert(cfg.id.as_str()) {
                return Err(Error::feeder(field, "empty or duplicate id"));
            }
            for s in &cfg.closed {
                if !switch_ids.contains(s.as_str()) {
                    return Err(Error::feeder(format!("{field}.closed"), format!("unknown switch {s:?}")));
                }
            }
        }

        let mut load_ids = HashSet::new();
        for l in &self.loads {
            let field = |f: &str| format!("loads[{}].{f}", l.id);
            if !load_ids.insert(l.id.as_str()) {
                return Err(Error::feeder(format!("loads[{}]", l.id), "duplicate id"));
            }
            let phases = bus_phases
                .get(l.bus.as_str())
                .ok_or_else(|| Error::feeder(field("bus"), format!("unknown bus {:?}", l.bus)))?;
            if l.phases.is_empty() {
                return Err(Error::feeder(field("phases"), "no phase loads"));
            }
            let mut seen = HashSet::new();
            for pl in &l.phases {
                if !seen.insert(pl.phase) || !phases.contains(pl.phase) {
                    return Err(Error::feeder(
                        field("phases"),
                        format!("phase {:?} repeated or absent at bus {:?}", pl.phase, l.bus),
                    ));
                }
                if !(pl.p.is_finite() && pl.q.is_finite() && pl.p >= 0.0) {
                    return Err(Error::feeder(field("phases"), "p must be non-negative, p and q finite"));
                }
            }
        }

        let mut unit_ids: HashSet<&str> = HashSet::from([self.substation.id.as_str()]);
        for d in &self.ders {
            let field = |f: &str| format!("ders[{}].{f}", d.id);
            if d.id.is_empty() || d.id.contains('.') {
                return Err(Error::feeder(field("id"), "must be non-empty and contain no '.'"));
            }
            if !unit_ids.insert(d.id.as_str()) {
                return Err(Error::feeder(format!("ders[{}]", d.id), "duplicate unit id"));
            }
            let phases = bus_phases
                .get(d.bus.as_str())
                .ok_or_else(|| Error::feeder(field("bus"), format!("unknown bus {:?}", d.bus)))?;
            if !d.phases.is_subset_of(*phases) {
                return Err(Error::feeder(field("phases"), "phase absent at bus"));
            }
            if d.metered {
                three_phase_bus(field("bus"), &d.bus)?;
            }
            if !(d.p_mean.is_finite() && d.p_mean >= 0.0) {
                return Err(Error::feeder(field("p_mean"), "must be finite and non-negative"));
            }
            if !(d.power_factor > 0.0 && d.power_factor <= 1.0) {
                return Err(Error::feeder(field("power_factor"), "must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Simulator presets for load-type and loading-level studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadVariant {
    Base,
    ConstantPower,
    ConstantImpedance,
    ConstantCurrent,
    ActiveScaled,
    ReactiveScaled,
}

impl LoadVariant {
    pub const ALL: [LoadVariant; 6] = [
        LoadVariant::Base,
        LoadVariant::ConstantPower,
        LoadVariant::ConstantImpedance,
        LoadVariant::ConstantCurrent,
        LoadVariant::ActiveScaled,
        LoadVariant::ReactiveScaled,
    ];

    /// Loading multiplier of the scaled presets.
    pub const LOADING_FACTOR: f64 = 1.2;

    pub fn name(self) -> &'static str {
        match self {
            LoadVariant::Base => "base",
            LoadVariant::ConstantPower => "constant-power",
            LoadVariant::ConstantImpedance => "constant-impedance",
            LoadVariant::ConstantCurrent => "constant-current",
            LoadVariant::ActiveScaled => "p-120",
            LoadVariant::ReactiveScaled => "q-120",
        }
    }

    pub fn apply(self, feeder: &FeederModel) -> FeederModel {
        let mut f = feeder.clone();
        for load in &mut f.loads {
            match self {
                LoadVariant::Base => {}
                LoadVariant::ConstantPower => load.kind = LoadType::ConstantPower,
                LoadVariant::ConstantImpedance => load.kind = LoadType::ConstantImpedance,
                LoadVariant::ConstantCurrent => load.kind = LoadType::ConstantCurrent,
                LoadVariant::ActiveScaled => {
                    load.phases.iter_mut().for_each(|p| p.p *= Self::LOADING_FACTOR)
                }
                LoadVariant::ReactiveScaled => {
                    load.phases.iter_mut().for_each(|p| p.q *= Self::LOADING_FACTOR)
                }
            }
        }
        if self != LoadVariant::Base {
            f.name = format!("{}+{}", f.name, self.name());
        }
        f
    }
}

impl std::str::FromStr for LoadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LoadVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidParameter {
                name: "load_variant",
                message: format!("unknown preset {s:?}"),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_feeder_is_valid() {
        let f = FeederModel::reference();
        f.validate().unwrap();
        assert_eq!(f.buses.len(), 10);
        assert_eq!(f.switch_ids().len(), 3);
        assert_eq!(f.protective_devices.len(), 2);
    }

    #[test]
    fn phase_set_round_trip() {
        let p: PhaseSet = "ac".to_string().try_into().unwrap();
        assert!(p.contains(Phase::A) && !p.contains(Phase::B));
        assert_eq!(String::from(p), "ac");
        assert!(PhaseSet::try_from("aa".to_string()).is_err());
        assert!(PhaseSet::try_from(String::new()).is_err());
    }

    #[test]
    fn negative_impedance_names_branch() {
        let mut f = FeederModel::reference();
        f.branches[2].r = -0.1;
        let id = f.branches[2].id.clone();
        match f.validate() {
            Err(Error::InvalidFeeder { field, .. }) => assert!(field.contains(&id)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_impedance_rejected() {
        let mut f = FeederModel::reference();
        f.branches[0].r = 0.0;
        f.branches[0].x = 0.0;
        assert!(f.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let f = FeederModel::reference();
        let mut g = f.clone();
        assert_eq!(f.hash(), g.hash());
        g.loads[0].phases[0].p += 1e-9;
        assert_ne!(f.hash(), g.hash());
    }

    #[test]
    fn variants_rewrite_loads() {
        let f = FeederModel::reference();
        let z = LoadVariant::ConstantImpedance.apply(&f);
        assert!(z.loads.iter().all(|l| l.kind == LoadType::ConstantImpedance));
        let p = LoadVariant::ActiveScaled.apply(&f);
        assert_eq!(p.loads[0].phases[0].p, f.loads[0].phases[0].p * 1.2);
        assert_eq!(p.loads[0].phases[0].q, f.loads[0].phases[0].q);
        assert_eq!("q-120".parse::<LoadVariant>().unwrap(), LoadVariant::ReactiveScaled);
    }
}
