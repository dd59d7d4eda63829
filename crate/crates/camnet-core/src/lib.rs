//! camnet-core: deterministic simulation and log analysis for ITS-G5
//! cooperative-awareness (CAM) beaconing networks.

pub mod analysis;
pub mod channel;
pub mod codec;
pub mod engine;
pub mod geo;
pub mod mac;
pub mod node;
pub mod scenario;

pub use analysis::{
    awareness_horizon, interval_histogram, join_link, mean_pdr_over_shared_cells,
    overlap_fraction, pdr_heatmap, positions_from_tx_log, uplink_positions, AnalysisError,
    CellStats, GridHeatmap, HorizonHistogram, IntervalHistogram, LinkLog, LinkSession,
};
pub use channel::{
    ChannelParams, DeliveryVerdict, Mcs, NicProfile, NodeRole, ShadowingField, ShadowingMode,
};
pub use codec::{CamFrame, MacAddr, NicId, RxLogRecord, TxLogRecord};
pub use engine::{run, EngineError, NodeLogs, RunOutput, RunSummary};
pub use geo::{GpsFix, InterpSample, LocalFrame, MobilityTrace};
pub use mac::{MacParams, NicMac, TxAttempt};
pub use node::{JitterAtom, JitterModel, NodeAgent, NodeConfig, NodeKind};
pub use scenario::{Scenario, ScenarioError, ORIGIN, PRESET_NAMES};
