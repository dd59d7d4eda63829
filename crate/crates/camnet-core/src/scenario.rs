//! Scenario assembly: the resolved simulation input (nodes, traces,
//! channel and MAC parameters, seed, duration), its TOML file format, and
//! the named presets.
//!
//! The two radio bands get independent channel parameters because they are
//! calibrated to different observed ranges: the high-power band to ~700 m
//! of RSU coverage, the low-power band to the ~80 m V2V horizon. Node MAC
//! addresses are assigned from the node's position in the list, so adding
//! a node at the end never changes existing nodes' addresses or any of
//! their hash-derived randomness.

use crate::channel::{ChannelParams, NicProfile};
use crate::codec::MacAddr;
use crate::geo::{self, GpsFix, LocalFrame, MobilityTrace};
use crate::mac::MacParams;
use crate::node::{JitterModel, NodeConfig, NodeKind};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("node {node}: {reason}")]
    Node { node: String, reason: String },
    #[error("trace file {path}: {reason}")]
    TraceFile { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Local-frame origin used by the synthetic traces, central Bristol.
pub const ORIGIN: (f64, f64) = (51.4545, -2.5879);

pub const PRESET_NAMES: [&str; 3] = ["v2i-solo", "v2i-interferer", "v2v-highway"];

/// Fully resolved simulation input.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration_us: u64,
    /// CAM payload size on the wire model; the devices' size is not
    /// published, so this is configurable.
    pub payload_bytes: u32,
    pub hp_channel: ChannelParams,
    pub lp_channel: ChannelParams,
    pub mac: MacParams,
    pub nodes: Vec<NodeConfig>,
}

impl Scenario {
    /// All contract violations, empty iff runnable.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.duration_us == 0 {
            v.push("duration_us must be > 0".to_string());
        }
        if self.payload_bytes == 0 {
            v.push("payload_bytes must be > 0".to_string());
        }
        if let Err(e) = self.hp_channel.validate() {
            v.push(format!("hp channel: {e}"));
        }
        if let Err(e) = self.lp_channel.validate() {
            v.push(format!("lp channel: {e}"));
        }
        if let Err(e) = self.mac.validate() {
            v.push(format!("mac: {e}"));
        }
        if self.nodes.is_empty() {
            v.push("scenario declares no nodes".to_string());
        }
        let mut ids = std::collections::HashSet::new();
        let mut macs = std::collections::HashSet::new();
        for node in &self.nodes {
            if let Err(e) = node.validate() {
                v.push(e.to_string());
            }
            if !ids.insert(node.node_id.clone()) {
                v.push(format!("duplicate node_id {:?}", node.node_id));
            }
            for mac in [node.hp_mac, node.lp_mac] {
                if !macs.insert(mac) {
                    v.push(format!("duplicate MAC {mac} on node {:?}", node.node_id));
                }
            }
            if let NodeKind::Obu { trace } = &node.kind {
                if trace.end_us() < self.duration_us {
                    v.push(format!(
                        "node {:?}: trace ends at {} us, before the simulation end {} us",
                        node.node_id,
                        trace.end_us(),
                        self.duration_us
                    ));
                }
            }
        }
        v
    }

    pub fn preset(name: &str) -> Option<Scenario> {
        match name {
            "v2i-solo" => Some(v2i(false)),
            "v2i-interferer" => Some(v2i(true)),
            "v2v-highway" => Some(v2v_highway()),
            _ => None,
        }
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_toml_str(&text, path.parent())
    }

    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
        let file: ConfigFile = toml::from_str(text)?;
        file.resolve(base_dir)
    }

    /// Fully resolved configuration as TOML, traces inlined. Parsing the
    /// output reproduces the scenario exactly.
    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string_pretty(&ConfigFile::from_scenario(self))?)
    }
}

/// Deterministic MAC address for node `index`: one per NIC.
pub fn assigned_macs(index: usize) -> (MacAddr, MacAddr) {
    let i = u8::try_from(index).expect("at most 256 nodes");
    (
        MacAddr([0x02, 0, 0, 0, i, 0x00]),
        MacAddr([0x02, 0, 0, 0, i, 0x01]),
    )
}

/// Straight-line GPS trace at 1 Hz on a local frame anchored at `origin`.
/// Heading is the velocity azimuth (degrees clockwise from north).
pub fn line_trace(
    node_id: &str,
    origin: (f64, f64),
    start_xy_m: (f64, f64),
    velocity_mps: (f64, f64),
    start_us: u64,
    end_us: u64,
) -> MobilityTrace {
    let frame = LocalFrame::new(origin.0, origin.1);
    let speed = (velocity_mps.0 * velocity_mps.0 + velocity_mps.1 * velocity_mps.1).sqrt();
    let heading = if speed == 0.0 {
        0.0
    } else {
        let h = velocity_mps.0.atan2(velocity_mps.1).to_degrees();
        if h < 0.0 {
            h + 360.0
        } else {
            h
        }
    };
    let mut fixes = Vec::new();
    let mut t = start_us;
    while t <= end_us {
        let dt_s = (t - start_us) as f64 / 1e6;
        let (lat, lon) = frame.to_global(
            start_xy_m.0 + velocity_mps.0 * dt_s,
            start_xy_m.1 + velocity_mps.1 * dt_s,
        );
        fixes.push(GpsFix {
            t_us: t,
            lat,
            lon,
            speed,
            heading,
        });
        t += 1_000_000;
    }
    MobilityTrace::new(node_id, fixes).expect("synthetic trace is well-formed")
}

// ============================================================================
// Presets
// ============================================================================

const PRESET_DURATION_US: u64 = 60_000_000;
// traces extend past the end so drain-phase receptions can be positioned
const PRESET_TRACE_END_US: u64 = 63_000_000;

fn preset_channels() -> (ChannelParams, ChannelParams) {
    let base = ChannelParams {
        shadow_sigma_db: 3.0,
        ..ChannelParams::default()
    };
    let hp = ChannelParams {
        n_exp: base
            .calibrate_exponent(700.0, &NicProfile::hp_rsu(), &NicProfile::hp_obu())
            .expect("700 m > 1 m"),
        ..base
    };
    let lp = ChannelParams {
        n_exp: base
            .calibrate_exponent(80.0, &NicProfile::lp_obu(), &NicProfile::lp_obu())
            .expect("80 m > 1 m"),
        ..base
    };
    (hp, lp)
}

fn rsu(index: usize, id: &str, x_m: f64, y_m: f64, height_m: f64, boot_offset_us: u64) -> NodeConfig {
    let frame = LocalFrame::new(ORIGIN.0, ORIGIN.1);
    let (lat, lon) = frame.to_global(x_m, y_m);
    let (hp_mac, lp_mac) = assigned_macs(index);
    NodeConfig {
        node_id: id.to_string(),
        hp_mac,
        lp_mac,
        kind: NodeKind::Rsu {
            lat,
            lon,
            height_m,
        },
        beacon_period_us: 10_000,
        jitter: JitterModel::None,
        boot_offset_us,
    }
}

fn obu(
    index: usize,
    id: &str,
    start_xy_m: (f64, f64),
    velocity_mps: (f64, f64),
    jitter: JitterModel,
    boot_offset_us: u64,
) -> NodeConfig {
    let (hp_mac, lp_mac) = assigned_macs(index);
    NodeConfig {
        node_id: id.to_string(),
        hp_mac,
        lp_mac,
        kind: NodeKind::Obu {
            trace: line_trace(id, ORIGIN, start_xy_m, velocity_mps, 0, PRESET_TRACE_END_US),
        },
        beacon_period_us: 10_000,
        jitter,
        boot_offset_us,
    }
}

/// Three masts along a 600 m urban run, vehicle1 driving past all of them.
/// The interferer variant appends vehicle2 in convoy 25 m behind.
///
/// Beacon phasing is the calibrated part. The masts tick jitter-free with
/// staggered boots (0 / 3 / 6 ms), so infrastructure frames never overlap
/// each other. vehicle2 also ticks jitter-free from boot 0: its ticks
/// coincide with hydrogen's forever, so at vehicle1 the two transmissions
/// always overlap and hydrogen's downlink is suppressed wherever vehicle2
/// is inside the capture margin. vehicle1 keeps the empirically shaped
/// tick train (and a half-millisecond boot offset), so its own frames
/// never ride on the infrastructure grid.
fn v2i(with_interferer: bool) -> Scenario {
    let (hp, lp) = preset_channels();
    let mut nodes = vec![
        rsu(0, "hydrogen", -200.0, 30.0, 8.0, 0),
        rsu(1, "helium", 0.0, 30.0, 5.0, 3_000),
        rsu(2, "lithium", 200.0, 30.0, 25.0, 6_000),
        obu(
            3,
            "vehicle1",
            (-300.0, 0.0),
            (10.0, 0.0),
            JitterModel::default_empirical(),
            500,
        ),
    ];
    if with_interferer {
        nodes.push(obu(
            4,
            "vehicle2",
            (-325.0, 0.0),
            (10.0, 0.0),
            JitterModel::None,
            0,
        ));
    }
    Scenario {
        name: if with_interferer {
            "v2i-interferer".to_string()
        } else {
            "v2i-solo".to_string()
        },
        seed: 1,
        duration_us: PRESET_DURATION_US,
        payload_bytes: 200,
        hp_channel: hp,
        lp_channel: lp,
        mac: MacParams::default(),
        nodes,
    }
}

/// Two vehicles on opposing highway directions, closing at 30 m/s and
/// crossing mid-run. The low-power band is calibrated to the 80 m V2V
/// horizon; distances sweep 900 m down to a 3.5 m lane offset and back.
fn v2v_highway() -> Scenario {
    let (hp, lp) = preset_channels();
    let nodes = vec![
        obu(
            0,
            "vehicle-east",
            (-450.0, 0.0),
            (15.0, 0.0),
            JitterModel::default_empirical(),
            500,
        ),
        obu(
            1,
            "vehicle-west",
            (450.0, 3.5),
            (-15.0, 0.0),
            JitterModel::default_empirical(),
            1_500,
        ),
    ];
    Scenario {
        name: "v2v-highway".to_string(),
        seed: 1,
        duration_us: PRESET_DURATION_US,
        payload_bytes: 200,
        hp_channel: hp,
        lp_channel: lp,
        mac: MacParams::default(),
        nodes,
    }
}

// ============================================================================
// TOML schema
// ============================================================================

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    scenario: ScenarioSection,
    #[serde(default)]
    channel: ChannelSection,
    #[serde(default)]
    mac: MacParams,
    #[serde(default, rename = "node")]
    node: Vec<NodeSection>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioSection {
    #[serde(default)]
    name: String,
    #[serde(default)]
    seed: u64,
    duration_us: u64,
    #[serde(default = "default_payload")]
    payload_bytes: u32,
}

fn default_payload() -> u32 {
    200
}

#[derive(Serialize, Deserialize, Default)]
struct ChannelSection {
    #[serde(default)]
    hp: ChannelParams,
    #[serde(default)]
    lp: ChannelParams,
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum KindTag {
    Rsu,
    Obu,
}

/// One inline trace row: (t_us, lat, lon, speed, heading).
type InlineFix = (u64, f64, f64, f64, f64);

#[derive(Serialize, Deserialize)]
struct NodeSection {
    id: String,
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height_m: Option<f64>,
    /// External trace file (CSV, possibly holding several nodes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace_file: Option<String>,
    /// Which node_id to pick from `trace_file`; defaults to `id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace_id: Option<String>,
    /// Inline fixes as (t_us, lat, lon, speed, heading) rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixes: Option<Vec<InlineFix>>,
    #[serde(default = "default_period")]
    beacon_period_us: u64,
    #[serde(default)]
    jitter: JitterModel,
    #[serde(default)]
    boot_offset_us: u64,
}

fn default_period() -> u64 {
    10_000
}

impl ConfigFile {
    fn resolve(self, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
        let mut nodes = Vec::with_capacity(self.node.len());
        for (index, section) in self.node.into_iter().enumerate() {
            let id = section.id.clone();
            let node_err = |reason: String| ScenarioError::Node {
                node: id.clone(),
                reason,
            };
            let kind = match section.kind {
                KindTag::Rsu => {
                    let (lat, lon, height_m) = match (section.lat, section.lon, section.height_m) {
                        (Some(lat), Some(lon), Some(h)) => (lat, lon, h),
                        _ => {
                            return Err(ScenarioError::Node {
                                node: id,
                                reason: "rsu needs lat, lon, height_m".to_string(),
                            })
                        }
                    };
                    NodeKind::Rsu {
                        lat,
                        lon,
                        height_m,
                    }
                }
                KindTag::Obu => {
                    let trace = match (&section.fixes, &section.trace_file) {
                        (Some(rows), None) => {
                            let fixes = rows
                                .iter()
                                .map(|&(t_us, lat, lon, speed, heading)| GpsFix {
                                    t_us,
                                    lat,
                                    lon,
                                    speed,
                                    heading,
                                })
                                .collect();
                            MobilityTrace::new(id.clone(), fixes).map_err(|e| {
                                ScenarioError::Node {
                                    node: id.clone(),
                                    reason: e.to_string(),
                                }
                            })?
                        }
                        (None, Some(rel_path)) => {
                            let path = match base_dir {
                                Some(dir) => dir.join(rel_path),
                                None => std::path::PathBuf::from(rel_path),
                            };
                            let traces = geo::load_trace_csv(&path).map_err(|e| {
                                ScenarioError::TraceFile {
                                    path: path.display().to_string(),
                                    reason: e.to_string(),
                                }
                            })?;
                            let want = section.trace_id.as_deref().unwrap_or(&id);
                            traces
                                .into_iter()
                                .find(|t| t.node_id() == want)
                                .ok_or_else(|| ScenarioError::TraceFile {
                                    path: path.display().to_string(),
                                    reason: format!("no trace for node_id {want:?}"),
                                })?
                        }
                        (Some(_), Some(_)) => {
                            return Err(node_err(
                                "give either inline fixes or trace_file, not both".to_string(),
                            ))
                        }
                        (None, None) => {
                            return Err(node_err(
                                "obu needs inline fixes or a trace_file".to_string(),
                            ))
                        }
                    };
                    NodeKind::Obu { trace }
                }
            };
            let (hp_mac, lp_mac) = assigned_macs(index);
            nodes.push(NodeConfig {
                node_id: id,
                hp_mac,
                lp_mac,
                kind,
                beacon_period_us: section.beacon_period_us,
                jitter: section.jitter,
                boot_offset_us: section.boot_offset_us,
            });
        }
        Ok(Scenario {
            name: self.scenario.name,
            seed: self.scenario.seed,
            duration_us: self.scenario.duration_us,
            payload_bytes: self.scenario.payload_bytes,
            hp_channel: self.channel.hp,
            lp_channel: self.channel.lp,
            mac: self.mac,
            nodes,
        })
    }

    fn from_scenario(s: &Scenario) -> ConfigFile {
        let node = s
            .nodes
            .iter()
            .map(|n| {
                let (kind, lat, lon, height_m, fixes) = match &n.kind {
                    NodeKind::Rsu {
                        lat,
                        lon,
                        height_m,
                    } => (KindTag::Rsu, Some(*lat), Some(*lon), Some(*height_m), None),
                    NodeKind::Obu { trace } => {
                        let rows = trace
                            .fixes()
                            .iter()
                            .map(|f| (f.t_us, f.lat, f.lon, f.speed, f.heading))
                            .collect();
                        (KindTag::Obu, None, None, None, Some(rows))
                    }
                };
                NodeSection {
                    id: n.node_id.clone(),
                    kind,
                    lat,
                    lon,
                    height_m,
                    trace_file: None,
                    trace_id: None,
                    fixes,
                    beacon_period_us: n.beacon_period_us,
                    jitter: n.jitter.clone(),
                    boot_offset_us: n.boot_offset_us,
                }
            })
            .collect();
        ConfigFile {
            scenario: ScenarioSection {
                name: s.name.clone(),
                seed: s.seed,
                duration_us: s.duration_us,
                payload_bytes: s.payload_bytes,
            },
            channel: ChannelSection {
                hp: s.hp_channel,
                lp: s.lp_channel,
            },
            mac: s.mac,
            node,
        }
    }
}
