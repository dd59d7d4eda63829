//! KPI computation over TX/RX log sets, simulated or from field devices:
//! link joins, PDR heatmaps, transmission-interval histograms, awareness
//! horizon, and uplink/downlink overlap.
//!
//! Devices reboot, and every boot restarts the per-NIC sequence counter
//! at zero, so raw sequence numbers are only unique within a boot
//! session. Sessions are cut wherever the logged sequence decreases.
//! A receiver-side session is then matched to the earliest unconsumed
//! transmitter session whose sequence set contains it; receiver sessions
//! that fit no transmitter session are reported as anomalies rather than
//! guessed at.
//!
//! All operations are pure functions of the parsed logs and all
//! containers iterate in a fixed order, so repeated runs export
//! byte-identical CSV.

use crate::codec::{MacAddr, RxLogRecord, TxLogRecord};
use crate::geo::{self, GpsFix, LocalFrame, MobilityTrace};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;
use thiserror::Error;

pub const DEFAULT_CELL_SIZE_M: f64 = 25.0;
pub const DEFAULT_MIN_SAMPLES: u32 = 20;
pub const DEFAULT_INTERVAL_BIN_US: u64 = 1_000;
pub const DEFAULT_HORIZON_BIN_M: f64 = 10.0;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty {0} log")]
    EmptyLog(&'static str),
    #[error("tx log mixes transmitters {0} and {1}")]
    MixedTransmitters(MacAddr, MacAddr),
    #[error("duplicate seq {seq} within one boot session of the {side} log")]
    DuplicateSeq { side: &'static str, seq: u32 },
    #[error("receiver track: {0}")]
    Track(#[from] geo::GeoError),
    #[error("grid parameters differ, refusing to merge")]
    GridMismatch,
}

// ============================================================================
// Boot sessions and the link join
// ============================================================================

/// Half-open index ranges, split where the sequence number decreases.
fn split_sessions(seqs: impl Iterator<Item = u32>) -> Vec<Range<usize>> {
    let mut out: Vec<Range<usize>> = Vec::new();
    let mut start = 0usize;
    let mut prev: Option<u32> = None;
    let mut len = 0usize;
    for (i, s) in seqs.enumerate() {
        if let Some(p) = prev {
            if s < p {
                out.push(start..i);
                start = i;
            }
        }
        prev = Some(s);
        len = i + 1;
    }
    if len > 0 {
        out.push(start..len);
    }
    out
}

/// One transmitter boot session and what the receiver caught of it.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSession {
    /// Indices into the TX record slice.
    pub tx_range: Range<usize>,
    /// (tx index, rx index) pairs, in TX order.
    pub matched: Vec<(usize, usize)>,
    /// Transmitted sequence numbers never received, ascending.
    pub lost_seqs: Vec<u32>,
}

/// The deterministic join of one (transmitter, NIC) TX log with one
/// receiver's RX log.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkLog {
    pub src_mac: MacAddr,
    pub sessions: Vec<LinkSession>,
    /// RX records whose session fits no transmitter session.
    pub anomalies: u64,
    pub tx_total: u64,
    pub matched_total: u64,
}

impl LinkLog {
    pub fn pdr(&self) -> f64 {
        if self.tx_total == 0 {
            f64::NAN
        } else {
            self.matched_total as f64 / self.tx_total as f64
        }
    }

    /// Per-TX-record delivery flags, aligned with the joined TX slice.
    pub fn matched_flags(&self, tx_len: usize) -> Vec<bool> {
        let mut flags = vec![false; tx_len];
        for s in &self.sessions {
            for &(ti, _) in &s.matched {
                flags[ti] = true;
            }
        }
        flags
    }
}

/// Joins a transmitter's log with a receiver's log. The RX slice may
/// contain other transmitters; records are filtered by the TX log's
/// source MAC first.
pub fn join_link(tx: &[TxLogRecord], rx: &[RxLogRecord]) -> Result<LinkLog, AnalysisError> {
    if tx.is_empty() {
        return Err(AnalysisError::EmptyLog("tx"));
    }
    let src_mac = tx[0].src_mac;
    if let Some(bad) = tx.iter().find(|r| r.src_mac != src_mac) {
        return Err(AnalysisError::MixedTransmitters(src_mac, bad.src_mac));
    }

    let tx_sessions = split_sessions(tx.iter().map(|r| r.seq_num));
    let mut tx_maps: Vec<HashMap<u32, usize>> = Vec::with_capacity(tx_sessions.len());
    for r in &tx_sessions {
        let mut m = HashMap::with_capacity(r.len());
        for i in r.clone() {
            if m.insert(tx[i].seq_num, i).is_some() {
                return Err(AnalysisError::DuplicateSeq {
                    side: "tx",
                    seq: tx[i].seq_num,
                });
            }
        }
        tx_maps.push(m);
    }

    let rx_link: Vec<usize> = rx
        .iter()
        .enumerate()
        .filter(|(_, r)| r.rx_mac == src_mac)
        .map(|(i, _)| i)
        .collect();
    let rx_sessions = split_sessions(rx_link.iter().map(|&i| rx[i].seq_num));

    let mut assigned: Vec<Vec<(usize, usize)>> = vec![Vec::new(); tx_sessions.len()];
    let mut anomalies = 0u64;
    let mut cursor = 0usize;
    for rs in &rx_sessions {
        let mut seqs = BTreeSet::new();
        for k in rs.clone() {
            if !seqs.insert(rx[rx_link[k]].seq_num) {
                return Err(AnalysisError::DuplicateSeq {
                    side: "rx",
                    seq: rx[rx_link[k]].seq_num,
                });
            }
        }
        let hit = (cursor..tx_sessions.len())
            .find(|&k| seqs.iter().all(|s| tx_maps[k].contains_key(s)));
        match hit {
            Some(k) => {
                for j in rs.clone() {
                    let ri = rx_link[j];
                    assigned[k].push((tx_maps[k][&rx[ri].seq_num], ri));
                }
                cursor = k + 1;
            }
            None => anomalies += rs.len() as u64,
        }
    }

    let mut sessions = Vec::with_capacity(tx_sessions.len());
    let mut matched_total = 0u64;
    for (k, tr) in tx_sessions.iter().enumerate() {
        let mut matched = std::mem::take(&mut assigned[k]);
        matched.sort_unstable_by_key(|&(ti, _)| ti);
        matched_total += matched.len() as u64;
        let got: BTreeSet<u32> = matched.iter().map(|&(ti, _)| tx[ti].seq_num).collect();
        let mut lost_seqs: Vec<u32> = tr
            .clone()
            .map(|i| tx[i].seq_num)
            .filter(|s| !got.contains(s))
            .collect();
        lost_seqs.sort_unstable();
        sessions.push(LinkSession {
            tx_range: tr.clone(),
            matched,
            lost_seqs,
        });
    }

    Ok(LinkLog {
        src_mac,
        sessions,
        anomalies,
        tx_total: tx.len() as u64,
        matched_total,
    })
}

// ============================================================================
// Receiver track reconstruction
// ============================================================================

/// Rebuilds a node's movement from its own TX log: the interpolated
/// position carried in each generated frame is a 100 Hz GPS-grade track
/// of where the device was.
pub fn positions_from_tx_log(
    node_id: &str,
    tx: &[TxLogRecord],
) -> Result<MobilityTrace, AnalysisError> {
    if tx.is_empty() {
        return Err(AnalysisError::EmptyLog("tx"));
    }
    let fixes: Vec<GpsFix> = tx
        .iter()
        .map(|r| GpsFix {
            t_us: r.timestamp_us,
            lat: r.inter_lat,
            lon: r.inter_lon,
            speed: r.inter_speed,
            heading: r.heading,
        })
        .collect();
    Ok(MobilityTrace::new(node_id, fixes)?)
}

// ============================================================================
// PDR heatmap
// ============================================================================

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CellStats {
    pub tx_count: u32,
    pub rx_count: u32,
}

impl CellStats {
    pub fn pdr(&self) -> f64 {
        if self.tx_count == 0 {
            f64::NAN
        } else {
            f64::from(self.rx_count) / f64::from(self.tx_count)
        }
    }
}

/// PDR per square cell of the receiver's local frame. Cells under the
/// sample floor stay in `cells` but are excluded from reporting,
/// averaging, and export.
#[derive(Clone, Debug, PartialEq)]
pub struct GridHeatmap {
    pub cell_size_m: f64,
    pub min_samples: u32,
    /// Local-frame anchor (lat, lon): the receiver's first known position.
    pub origin: (f64, f64),
    pub cells: BTreeMap<(i32, i32), CellStats>,
    /// TX records outside the receiver's position span.
    pub excluded: u64,
}

impl GridHeatmap {
    pub fn cell_index(&self, lat: f64, lon: f64) -> (i32, i32) {
        let frame = LocalFrame::new(self.origin.0, self.origin.1);
        let (x, y) = frame.to_local(lat, lon);
        (
            (x / self.cell_size_m).floor() as i32,
            (y / self.cell_size_m).floor() as i32,
        )
    }

    /// Cells with enough traffic to quote a ratio.
    pub fn reported(&self) -> impl Iterator<Item = (&(i32, i32), &CellStats)> {
        self.cells
            .iter()
            .filter(move |(_, c)| c.tx_count >= self.min_samples)
    }

    /// Unweighted mean PDR across reported cells.
    pub fn mean_pdr(&self) -> Option<f64> {
        let mut n = 0u32;
        let mut sum = 0.0;
        for (_, c) in self.reported() {
            n += 1;
            sum += c.pdr();
        }
        if n == 0 {
            None
        } else {
            Some(sum / f64::from(n))
        }
    }

    /// Pools another map's counts into this one. Grids must coincide.
    pub fn merge(&mut self, other: &GridHeatmap) -> Result<(), AnalysisError> {
        if self.cell_size_m != other.cell_size_m
            || self.min_samples != other.min_samples
            || self.origin != other.origin
        {
            return Err(AnalysisError::GridMismatch);
        }
        for (k, c) in &other.cells {
            let e = self.cells.entry(*k).or_default();
            e.tx_count += c.tx_count;
            e.rx_count += c.rx_count;
        }
        self.excluded += other.excluded;
        Ok(())
    }

    /// `cell_x,cell_y,lat,lon,tx,rx,pdr` rows for reported cells, with
    /// lat/lon at the cell center.
    pub fn to_csv(&self) -> String {
        let frame = LocalFrame::new(self.origin.0, self.origin.1);
        let mut out = String::from("cell_x,cell_y,lat,lon,tx,rx,pdr\n");
        for (&(cx, cy), c) in self.reported() {
            let (lat, lon) = frame.to_global(
                (f64::from(cx) + 0.5) * self.cell_size_m,
                (f64::from(cy) + 0.5) * self.cell_size_m,
            );
            out.push_str(&format!(
                "{},{},{:.7},{:.7},{},{},{:.4}\n",
                cx,
                cy,
                lat,
                lon,
                c.tx_count,
                c.rx_count,
                c.pdr()
            ));
        }
        out
    }
}

/// Assigns every TX record to the cell holding the receiver's position
/// at the frame's generation time, so lost frames stay attributable to a
/// place. Records outside the receiver's span are only counted.
pub fn pdr_heatmap(
    link: &LinkLog,
    tx: &[TxLogRecord],
    receiver_track: &MobilityTrace,
    cell_size_m: f64,
    min_samples: u32,
) -> GridHeatmap {
    let first = receiver_track.fixes()[0];
    let mut map = GridHeatmap {
        cell_size_m,
        min_samples,
        origin: (first.lat, first.lon),
        cells: BTreeMap::new(),
        excluded: 0,
    };
    let flags = link.matched_flags(tx.len());
    for (i, r) in tx.iter().enumerate() {
        if !receiver_track.covers(r.timestamp_us) {
            map.excluded += 1;
            continue;
        }
        let s = receiver_track.sample_clamped(r.timestamp_us);
        let key = map.cell_index(s.lat, s.lon);
        let c = map.cells.entry(key).or_default();
        c.tx_count += 1;
        if flags[i] {
            c.rx_count += 1;
        }
    }
    map
}

/// Mean PDR of each map over the cells reported by both. This is the
/// right comparison for paired runs whose coverage differs.
pub fn mean_pdr_over_shared_cells(a: &GridHeatmap, b: &GridHeatmap) -> Option<(f64, f64)> {
    let keys_a: BTreeSet<(i32, i32)> = a.reported().map(|(k, _)| *k).collect();
    let keys_b: BTreeSet<(i32, i32)> = b.reported().map(|(k, _)| *k).collect();
    let shared: Vec<(i32, i32)> = keys_a.intersection(&keys_b).copied().collect();
    if shared.is_empty() {
        return None;
    }
    let mean = |m: &GridHeatmap| {
        shared.iter().map(|k| m.cells[k].pdr()).sum::<f64>() / shared.len() as f64
    };
    Some((mean(a), mean(b)))
}

// ============================================================================
// Transmission interval histogram
// ============================================================================

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalHistogram {
    pub bin_width_us: u64,
    /// Bin start (microseconds) to count.
    pub counts: BTreeMap<u64, u64>,
    pub records: u64,
    pub session_count: u64,
}

impl IntervalHistogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,count\n");
        for (b, c) in &self.counts {
            out.push_str(&format!("{b},{c}\n"));
        }
        out
    }
}

/// Consecutive generation-timestamp deltas of one device NIC, binned.
/// Deltas across boot-session boundaries are not intervals and are
/// skipped, so total == records − sessions.
pub fn interval_histogram(tx: &[TxLogRecord], bin_width_us: u64) -> IntervalHistogram {
    let sessions = split_sessions(tx.iter().map(|r| r.seq_num));
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for s in &sessions {
        for w in tx[s.clone()].windows(2) {
            let dt = w[1].timestamp_us - w[0].timestamp_us;
            *counts.entry(dt / bin_width_us * bin_width_us).or_default() += 1;
        }
    }
    IntervalHistogram {
        bin_width_us,
        counts,
        records: tx.len() as u64,
        session_count: sessions.len() as u64,
    }
}

// ============================================================================
// Awareness horizon
// ============================================================================

#[derive(Clone, Debug, PartialEq)]
pub struct HorizonHistogram {
    pub bin_m: f64,
    /// Bin index to delivered-frame count, distance at reception time.
    pub delivered: BTreeMap<u32, u64>,
    /// Bin index to offered-frame count, distance at generation time.
    pub offered: BTreeMap<u32, u64>,
    pub excluded_delivered: u64,
    pub excluded_offered: u64,
}

impl HorizonHistogram {
    pub fn delivered_total(&self) -> u64 {
        self.delivered.values().sum()
    }

    /// Fraction of delivered mass in bins lying entirely at or under
    /// `limit_m`.
    pub fn delivered_mass_within(&self, limit_m: f64) -> f64 {
        let total = self.delivered_total();
        if total == 0 {
            return f64::NAN;
        }
        let near: u64 = self
            .delivered
            .iter()
            .filter(|(&b, _)| f64::from(b + 1) * self.bin_m <= limit_m)
            .map(|(_, c)| *c)
            .sum();
        near as f64 / total as f64
    }

    /// Per-bin delivery ratio, None where nothing was offered.
    pub fn ratio(&self, bin: u32) -> Option<f64> {
        let off = *self.offered.get(&bin)?;
        if off == 0 {
            return None;
        }
        Some(*self.delivered.get(&bin).unwrap_or(&0) as f64 / off as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,count\n");
        for (&b, c) in &self.delivered {
            out.push_str(&format!("{},{}\n", (f64::from(b) * self.bin_m) as u64, c));
        }
        out
    }
}

/// Distance distribution of delivered frames (at reception time) next to
/// the offered-load distribution (at generation time). Records falling
/// outside either node's position span are counted, not guessed.
pub fn awareness_horizon(
    link: &LinkLog,
    tx: &[TxLogRecord],
    rx: &[RxLogRecord],
    tx_track: &MobilityTrace,
    rx_track: &MobilityTrace,
    bin_m: f64,
) -> HorizonHistogram {
    let mut h = HorizonHistogram {
        bin_m,
        delivered: BTreeMap::new(),
        offered: BTreeMap::new(),
        excluded_delivered: 0,
        excluded_offered: 0,
    };
    let dist_at = |t: u64| -> Option<f64> {
        if !tx_track.covers(t) || !rx_track.covers(t) {
            return None;
        }
        let a = tx_track.sample_clamped(t);
        let b = rx_track.sample_clamped(t);
        Some(geo::distance_m(a.lat, a.lon, b.lat, b.lon))
    };
    for r in tx {
        match dist_at(r.timestamp_us) {
            Some(d) => *h.offered.entry((d / bin_m).floor() as u32).or_default() += 1,
            None => h.excluded_offered += 1,
        }
    }
    for s in &link.sessions {
        for &(_, ri) in &s.matched {
            match dist_at(rx[ri].local_rx_time_us) {
                Some(d) => *h.delivered.entry((d / bin_m).floor() as u32).or_default() += 1,
                None => h.excluded_delivered += 1,
            }
        }
    }
    h
}

// ============================================================================
// Uplink positions and the bidirectionality overlap
// ============================================================================

/// Vehicle positions at the moment an infrastructure node heard it: the
/// interpolated coordinates carried inside each received frame.
pub fn uplink_positions(rsu_rx: &[RxLogRecord], vehicle_mac: MacAddr) -> Vec<(f64, f64)> {
    rsu_rx
        .iter()
        .filter(|r| r.rx_mac == vehicle_mac)
        .map(|r| (r.rx_lat, r.rx_lon))
        .collect()
}

/// Fraction of uplink positions that land in downlink cells which are
/// reported and have PDR > 0. Low values mean the node heard a vehicle
/// it could not talk back to.
pub fn overlap_fraction(positions: &[(f64, f64)], downlink: &GridHeatmap) -> Option<f64> {
    if positions.is_empty() {
        return None;
    }
    let inside = positions
        .iter()
        .filter(|&&(lat, lon)| {
            let key = downlink.cell_index(lat, lon);
            downlink
                .cells
                .get(&key)
                .is_some_and(|c| c.tx_count >= downlink.min_samples && c.rx_count > 0)
        })
        .count();
    Some(inside as f64 / positions.len() as f64)
}
