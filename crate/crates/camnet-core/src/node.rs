//! RSU and OBU behavior: beacon-tick timing with empirically shaped
//! jitter, per-NIC sequence counters, GPS sampling, and receive-side
//! record construction.
//!
//! Every node carries two radios and generates one CAM per radio at each
//! beacon tick. The tick train is what the device's CPU manages, so jitter
//! lives here; MAC contention delays the transmission further, and the
//! logs keep the two effects separable (TX log timestamps are generation
//! times, flight times live in the engine).

use crate::codec::{CamFrame, CodecError, MacAddr, NicId, RxLogRecord};
use crate::geo::MobilityTrace;
use crate::NodeRole;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("node {node_id:?}: {reason}")]
    InvalidConfig { node_id: String, reason: String },
}

/// One (interval, probability) atom of a discrete inter-generation
/// distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterAtom {
    pub interval_us: u64,
    pub probability: f64,
}

/// Beacon-tick timing model. `None` produces the nominal period exactly;
/// `Empirical` replaces it with a draw from a discrete distribution each
/// tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum JitterModel {
    #[default]
    None,
    Empirical { atoms: Vec<JitterAtom> },
}

impl JitterModel {
    /// The shape observed on the field devices: CAM trains run mostly at
    /// 12 or 14 ms rather than the nominal 10 ms.
    pub fn default_empirical() -> Self {
        JitterModel::Empirical {
            atoms: vec![
                JitterAtom {
                    interval_us: 12_000,
                    probability: 0.45,
                },
                JitterAtom {
                    interval_us: 14_000,
                    probability: 0.40,
                },
                JitterAtom {
                    interval_us: 10_000,
                    probability: 0.10,
                },
                JitterAtom {
                    interval_us: 16_000,
                    probability: 0.05,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        let JitterModel::Empirical { atoms } = self else {
            return Ok(());
        };
        let invalid = |reason: String| NodeError::InvalidConfig {
            node_id: String::new(),
            reason,
        };
        if atoms.is_empty() {
            return Err(invalid("empirical jitter needs at least one atom".into()));
        }
        let mut sum = 0.0;
        for atom in atoms {
            if atom.interval_us == 0 {
                return Err(invalid("jitter interval must be > 0".into()));
            }
            if atom.probability < 0.0 || !atom.probability.is_finite() {
                return Err(invalid(format!(
                    "jitter probability {} out of range",
                    atom.probability
                )));
            }
            sum += atom.probability;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("jitter probabilities sum to {sum}, want 1")));
        }
        Ok(())
    }

    /// Expected tick interval, microseconds.
    pub fn mean_interval_us(&self, nominal_period_us: u64) -> f64 {
        match self {
            JitterModel::None => nominal_period_us as f64,
            JitterModel::Empirical { atoms } => atoms
                .iter()
                .map(|a| a.interval_us as f64 * a.probability)
                .sum(),
        }
    }

    fn sample_interval_us<R: Rng + ?Sized>(&self, nominal_period_us: u64, rng: &mut R) -> u64 {
        match self {
            JitterModel::None => nominal_period_us,
            JitterModel::Empirical { atoms } => {
                let mut r: f64 = rng.random();
                for atom in atoms {
                    if r < atom.probability {
                        return atom.interval_us;
                    }
                    r -= atom.probability;
                }
                atoms.last().expect("validated non-empty").interval_us
            }
        }
    }
}

/// Next beacon tick after `last_gen_us`.
pub fn next_generation_time<R: Rng + ?Sized>(
    config: &NodeConfig,
    rng: &mut R,
    last_gen_us: u64,
) -> u64 {
    last_gen_us
        + config
            .jitter
            .sample_interval_us(config.beacon_period_us, rng)
}

/// Where a node lives: fixed mast position for an RSU, a GPS trace for an
/// OBU.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Rsu { lat: f64, lon: f64, height_m: f64 },
    Obu { trace: MobilityTrace },
}

impl NodeKind {
    pub fn role(&self) -> NodeRole {
        match self {
            NodeKind::Rsu { .. } => NodeRole::Rsu,
            NodeKind::Obu { .. } => NodeRole::Obu,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeConfig {
    pub node_id: String,
    pub hp_mac: MacAddr,
    pub lp_mac: MacAddr,
    pub kind: NodeKind,
    /// Nominal tick period; the jitter model may replace it.
    pub beacon_period_us: u64,
    pub jitter: JitterModel,
    /// Time of the node's first beacon tick.
    pub boot_offset_us: u64,
}

impl NodeConfig {
    pub fn validate(&self) -> Result<(), NodeError> {
        let fail = |reason: String| NodeError::InvalidConfig {
            node_id: self.node_id.clone(),
            reason,
        };
        if self.node_id.is_empty() {
            return Err(fail("node_id must not be empty".into()));
        }
        if self.hp_mac == self.lp_mac {
            return Err(fail(format!("both NICs share MAC {}", self.hp_mac)));
        }
        if self.beacon_period_us == 0 {
            return Err(fail("beacon_period_us must be > 0".into()));
        }
        if let NodeKind::Rsu { height_m, lat, lon } = &self.kind {
            if *height_m <= 0.0 || height_m.is_nan() {
                return Err(fail(format!("RSU height must be > 0, got {height_m}")));
            }
            if !(-90.0..=90.0).contains(lat) || !(-180.0..=180.0).contains(lon) {
                return Err(fail(format!("RSU position ({lat}, {lon}) out of range")));
            }
        }
        self.jitter.validate().map_err(|e| match e {
            NodeError::InvalidConfig { reason, .. } => fail(reason),
        })?;
        Ok(())
    }

    pub fn mac_for(&self, nic: NicId) -> MacAddr {
        match nic {
            NicId::Hp => self.hp_mac,
            NicId::Lp => self.lp_mac,
        }
    }

    pub fn role(&self) -> NodeRole {
        self.kind.role()
    }
}

/// Runtime node state: the config plus the per-NIC sequence counters.
#[derive(Clone, Debug)]
pub struct NodeAgent {
    pub config: NodeConfig,
    seq: [u32; 2],
}

impl NodeAgent {
    pub fn new(config: NodeConfig) -> Self {
        NodeAgent {
            config,
            seq: [0, 0],
        }
    }

    fn seq_slot(nic: NicId) -> usize {
        match nic {
            NicId::Hp => 0,
            NicId::Lp => 1,
        }
    }

    /// An OBU is on only while its trace covers `t_us`; an RSU is always
    /// on. Boot offsets are the engine's business (it schedules the first
    /// tick), so they do not factor in here.
    pub fn is_on(&self, t_us: u64) -> bool {
        match &self.config.kind {
            NodeKind::Rsu { .. } => true,
            NodeKind::Obu { trace } => trace.covers(t_us),
        }
    }

    /// Receiver position for logging. Clamps to the trace ends so that a
    /// frame landing a few hundred microseconds after the final fix (the
    /// engine drains in-flight frames past end_time) still gets a
    /// position.
    pub fn position_at(&self, t_us: u64) -> (f64, f64) {
        match &self.config.kind {
            NodeKind::Rsu { lat, lon, .. } => (*lat, *lon),
            NodeKind::Obu { trace } => {
                let s = trace.sample_clamped(t_us);
                (s.lat, s.lon)
            }
        }
    }

    /// One beacon tick: a CAM per NIC, HP first. Off nodes (OBU outside
    /// its trace span) generate nothing and do not advance their counters.
    pub fn generate_cams(&mut self, t_us: u64) -> Vec<CamFrame> {
        let (gps, inter) = match &self.config.kind {
            NodeKind::Rsu { lat, lon, .. } => {
                let fixed = (*lat, *lon, 0.0, 0.0);
                (fixed, fixed)
            }
            NodeKind::Obu { trace } => {
                if !trace.covers(t_us) {
                    return Vec::new();
                }
                let fix = trace
                    .latest_fix_at(t_us)
                    .expect("covers(t) implies a fix at or before t");
                let s = trace.sample_clamped(t_us);
                (
                    (fix.lat, fix.lon, fix.speed, fix.heading),
                    (s.lat, s.lon, s.speed, s.heading),
                )
            }
        };
        NicId::ALL
            .iter()
            .map(|&nic| {
                let slot = Self::seq_slot(nic);
                let seq_num = self.seq[slot];
                self.seq[slot] += 1;
                CamFrame {
                    src_mac: self.config.mac_for(nic),
                    nic_id: nic,
                    seq_num,
                    gps_lon: gps.1,
                    gps_lat: gps.0,
                    inter_lon: inter.1,
                    inter_lat: inter.0,
                    gps_speed: gps.2,
                    inter_speed: inter.2,
                    heading: inter.3,
                    timestamp_us: t_us,
                }
            })
            .collect()
    }

    /// Receive-side record for a frame the channel delivered to this node.
    /// Own frames (either NIC) are discarded silently.
    pub fn on_receive(&self, frame: &CamFrame, t_us: u64) -> Option<RxLogRecord> {
        if frame.src_mac == self.config.hp_mac || frame.src_mac == self.config.lp_mac {
            return None;
        }
        let (lat, lon) = self.position_at(t_us);
        let receiver_mac = self.config.mac_for(frame.nic_id);
        match RxLogRecord::new(receiver_mac, frame, lat, lon, t_us) {
            Ok(record) => Some(record),
            Err(CodecError::OwnMac(_)) => None,
            Err(e) => unreachable!("rx record construction only fails on own MAC: {e}"),
        }
    }
}
