//! Radio propagation and reception: log-distance path loss with optional
//! log-normal shadowing, link budgets from the NIC profiles, interference
//! power-summing, capture, and the delivered / lost-to-noise /
//! lost-to-collision verdict.
//!
//! The two radio bands (5.89 and 5.9 GHz, both 10 MHz wide) are treated as
//! orthogonal: a frame on one band is invisible to the other. Interference
//! lists passed to [`ChannelParams::deliver`] must therefore contain
//! co-band transmissions only; the engine enforces this.

use crate::codec::{MacAddr, NicId};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("{what} must be positive and finite, got {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("target range must exceed 1 m, got {0}")]
    RangeTooShort(f64),
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
}

/// Whether a node is fixed infrastructure or a vehicle unit. Determines
/// which antenna gain a NIC gets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeRole {
    Rsu,
    Obu,
}

/// 802.11p OFDM modulation and coding schemes at 10 MHz. Only the number
/// of data bits per symbol matters for airtime.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mcs {
    Bpsk12,
    Bpsk34,
    Qpsk12,
    Qpsk34,
    Qam16_12,
    Qam16_34,
    Qam64_23,
    Qam64_34,
}

impl Mcs {
    pub fn data_bits_per_symbol(self) -> u32 {
        match self {
            Mcs::Bpsk12 => 24,
            Mcs::Bpsk34 => 36,
            Mcs::Qpsk12 => 48,
            Mcs::Qpsk34 => 72,
            Mcs::Qam16_12 => 96,
            Mcs::Qam16_34 => 144,
            Mcs::Qam64_23 => 192,
            Mcs::Qam64_34 => 216,
        }
    }
}

/// Radio front-end parameters for one NIC. The four named constructors are
/// the only profiles the simulator instantiates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NicProfile {
    pub role: NodeRole,
    pub power_class: NicId,
    pub tx_power_dbm: f64,
    pub antenna_gain_dbi: f64,
    pub center_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub mcs: Mcs,
    pub cw_min: u32,
    pub cw_max: u32,
}

const HP_FREQ_HZ: f64 = 5.90e9;
const LP_FREQ_HZ: f64 = 5.89e9;

impl NicProfile {
    fn base(role: NodeRole, power_class: NicId, tx_power_dbm: f64, gain_dbi: f64) -> Self {
        NicProfile {
            role,
            power_class,
            tx_power_dbm,
            antenna_gain_dbi: gain_dbi,
            center_freq_hz: match power_class {
                NicId::Hp => HP_FREQ_HZ,
                NicId::Lp => LP_FREQ_HZ,
            },
            bandwidth_hz: 10.0e6,
            mcs: Mcs::Qpsk12,
            cw_min: 15,
            cw_max: 1023,
        }
    }

    pub fn hp_rsu() -> Self {
        Self::base(NodeRole::Rsu, NicId::Hp, 29.0, 9.0)
    }

    pub fn hp_obu() -> Self {
        Self::base(NodeRole::Obu, NicId::Hp, 29.0, 5.0)
    }

    pub fn lp_rsu() -> Self {
        Self::base(NodeRole::Rsu, NicId::Lp, 25.0, 7.0)
    }

    pub fn lp_obu() -> Self {
        Self::base(NodeRole::Obu, NicId::Lp, 25.0, 5.0)
    }

    pub fn named(role: NodeRole, power_class: NicId) -> Self {
        match (role, power_class) {
            (NodeRole::Rsu, NicId::Hp) => Self::hp_rsu(),
            (NodeRole::Obu, NicId::Hp) => Self::hp_obu(),
            (NodeRole::Rsu, NicId::Lp) => Self::lp_rsu(),
            (NodeRole::Obu, NicId::Lp) => Self::lp_obu(),
        }
    }
}

/// How shadowing samples are keyed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ShadowingMode {
    /// Fresh sample per (frame, listener). Vehicles move between frames,
    /// so consecutive frames see independent obstructions.
    #[default]
    PerFrame,
    /// One sample per (transmitter NIC, listener NIC) pair, fixed for the
    /// whole run.
    PerLink,
}

/// Propagation and receiver-decision knobs. These are calibration inputs,
/// not measured constants; presets pick values that reproduce the observed
/// coverage ranges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    /// Path loss at the 1 m reference distance, dB. The default is
    /// free-space loss at 5.9 GHz and 1 m.
    pub pl0_db: f64,
    pub n_exp: f64,
    pub shadow_sigma_db: f64,
    pub shadowing_mode: ShadowingMode,
    pub noise_floor_dbm: f64,
    pub sensitivity_dbm: f64,
    pub capture_threshold_db: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            pl0_db: 47.86,
            n_exp: 2.0,
            shadow_sigma_db: 0.0,
            shadowing_mode: ShadowingMode::PerFrame,
            noise_floor_dbm: -99.0,
            sensitivity_dbm: -92.0,
            capture_threshold_db: 10.0,
        }
    }
}

/// Outcome of one reception attempt at one listener.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DeliveryVerdict {
    Delivered,
    /// The frame would have failed even on a silent channel: below
    /// sensitivity, or below the capture margin over thermal noise alone.
    LostNoise,
    /// Interference from overlapping transmissions pushed SINR below the
    /// capture threshold.
    LostCollision,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.n_exp < 2.0 || !self.n_exp.is_finite() {
            return Err(ChannelError::InvalidParams(format!(
                "n_exp must be >= 2, got {}",
                self.n_exp
            )));
        }
        if self.shadow_sigma_db < 0.0 || !self.shadow_sigma_db.is_finite() {
            return Err(ChannelError::InvalidParams(format!(
                "shadow_sigma_db must be >= 0, got {}",
                self.shadow_sigma_db
            )));
        }
        for (name, v) in [
            ("pl0_db", self.pl0_db),
            ("noise_floor_dbm", self.noise_floor_dbm),
            ("sensitivity_dbm", self.sensitivity_dbm),
            ("capture_threshold_db", self.capture_threshold_db),
        ] {
            if !v.is_finite() {
                return Err(ChannelError::InvalidParams(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    /// Log-distance path loss plus a shadowing term the caller obtained
    /// from a [`ShadowingField`] (pass 0.0 for none). Distances under 1 m
    /// clamp the deterministic term to `pl0_db`; the shadowing term is
    /// still applied.
    pub fn path_loss_db(&self, d_m: f64, shadow_db: f64) -> Result<f64, ChannelError> {
        if d_m <= 0.0 || !d_m.is_finite() {
            return Err(ChannelError::Domain {
                what: "distance",
                value: d_m,
            });
        }
        let d_eff = d_m.max(1.0);
        Ok(self.pl0_db + 10.0 * self.n_exp * d_eff.log10() + shadow_db)
    }

    /// Received power at distance `d_m`: transmit power plus both antenna
    /// gains minus path loss.
    pub fn rx_power_dbm(
        &self,
        tx: &NicProfile,
        rx: &NicProfile,
        d_m: f64,
        shadow_db: f64,
    ) -> Result<f64, ChannelError> {
        Ok(tx.tx_power_dbm + tx.antenna_gain_dbi + rx.antenna_gain_dbi
            - self.path_loss_db(d_m, shadow_db)?)
    }

    /// Reception verdict for one frame given the co-band interference
    /// levels overlapping its airtime.
    ///
    /// A frame below sensitivity, or below the capture margin over thermal
    /// noise alone, is noise-lost regardless of interference. Otherwise it
    /// is delivered exactly when SINR (against noise plus the power sum of
    /// all interferers) clears the capture threshold; failing that gate is
    /// a collision loss.
    pub fn deliver(&self, rx_power_dbm: f64, interference_dbm: &[f64]) -> DeliveryVerdict {
        if rx_power_dbm < self.sensitivity_dbm {
            return DeliveryVerdict::LostNoise;
        }
        if rx_power_dbm - self.noise_floor_dbm < self.capture_threshold_db {
            return DeliveryVerdict::LostNoise;
        }
        let mut denom = Vec::with_capacity(interference_dbm.len() + 1);
        denom.push(self.noise_floor_dbm);
        denom.extend_from_slice(interference_dbm);
        let sinr_db = rx_power_dbm - powersum_dbm(&denom);
        if sinr_db < self.capture_threshold_db {
            DeliveryVerdict::LostCollision
        } else {
            DeliveryVerdict::Delivered
        }
    }

    /// Path-loss exponent that places the deterministic sensitivity
    /// boundary of the given link exactly at `target_range_m`.
    pub fn calibrate_exponent(
        &self,
        target_range_m: f64,
        tx: &NicProfile,
        rx: &NicProfile,
    ) -> Result<f64, ChannelError> {
        if target_range_m <= 1.0 || !target_range_m.is_finite() {
            return Err(ChannelError::RangeTooShort(target_range_m));
        }
        let budget_db = tx.tx_power_dbm + tx.antenna_gain_dbi + rx.antenna_gain_dbi
            - self.pl0_db
            - self.sensitivity_dbm;
        Ok(budget_db / (10.0 * target_range_m.log10()))
    }
}

/// Sum of power levels in the dB domain. Empty input is silence.
pub fn powersum_dbm(levels_dbm: &[f64]) -> f64 {
    let total_mw: f64 = levels_dbm.iter().map(|l| 10f64.powf(l / 10.0)).sum();
    if total_mw == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * total_mw.log10()
    }
}

/// Deterministic shadowing source. Every sample is derived statelessly by
/// hashing the master seed with the frame and listener identity, so the
/// value for a given (frame, listener) pair never depends on evaluation
/// order and carrier sensing can share the delivery sample.
#[derive(Clone, Copy, Debug)]
pub struct ShadowingField {
    master_seed: u64,
    sigma_db: f64,
    mode: ShadowingMode,
}

impl ShadowingField {
    pub fn new(master_seed: u64, sigma_db: f64, mode: ShadowingMode) -> Self {
        ShadowingField {
            master_seed,
            sigma_db,
            mode,
        }
    }

    pub fn sigma_db(&self) -> f64 {
        self.sigma_db
    }

    /// Shadowing term in dB for one transmitted frame as seen by the
    /// listener NIC `rx_mac`. In per-link mode the sequence number is
    /// ignored, freezing the sample for the pair.
    pub fn sample_db(&self, tx_mac: MacAddr, nic: NicId, seq_num: u32, rx_mac: MacAddr) -> f64 {
        if self.sigma_db == 0.0 {
            return 0.0;
        }
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(b"shadow");
        hasher.update(tx_mac.0);
        hasher.update(nic.as_str().as_bytes());
        if self.mode == ShadowingMode::PerFrame {
            hasher.update(seq_num.to_le_bytes());
        }
        hasher.update(rx_mac.0);
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let z: f64 = rng.sample(StandardNormal);
        self.sigma_db * z
    }
}
