//! Discrete-event simulation core.
//!
//! Event ordering is the load-bearing invariant. Events at equal
//! timestamps execute by class: generation, then MAC timers, then
//! transmit starts, then transmit ends, then reception decisions, with
//! insertion order breaking remaining ties. Two consequences the MAC
//! layer relies on: a frame enqueued at the exact instant another
//! transmission ends still senses the medium busy, and a transmission
//! starting at the instant a peer's AIFS or countdown expires does not
//! retroactively cancel that expiry (both go to air and collide).
//!
//! Randomness is split into named ChaCha streams seeded by hashing the
//! master seed with a purpose tag and the node identity, so adding or
//! removing one node never shifts the draws of another. Shadowing is a
//! stateless hash-keyed field shared by carrier sensing and delivery.
//!
//! Listeners whose deterministic receive power sits more than three
//! sigma below sensitivity are dropped early: such a frame is booked as
//! a noise loss without drawing its shadowing sample. Sub-audible
//! transmitters likewise contribute nothing to interference sums.

use crate::channel::{ChannelParams, DeliveryVerdict, NicProfile, ShadowingField};
use crate::codec::{self, CamFrame, NicId, RxLogRecord, TxLogRecord};
use crate::geo;
use crate::mac::{self, MacStep, NicMac, TxAttempt};
use crate::node::{next_generation_time, NodeAgent, NodeKind};
use crate::scenario::Scenario;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BinaryHeap};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("scenario is not runnable:\n  {}", violations.join("\n  "))]
    InvalidScenario { violations: Vec<String> },
    #[error("log write failed: {0}")]
    LogWrite(#[from] crate::codec::CodecError),
}

const BANDS: [NicId; 2] = [NicId::Hp, NicId::Lp];

fn band_idx(nic: NicId) -> usize {
    match nic {
        NicId::Hp => 0,
        NicId::Lp => 1,
    }
}

/// Named deterministic stream: hash of (master seed, purpose, node id,
/// optional NIC), so streams are independent and stable under changes to
/// the rest of the node set.
fn stream_rng(master_seed: u64, purpose: &str, node_id: &str, nic: Option<NicId>) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update(node_id.as_bytes());
    if let Some(nic) = nic {
        hasher.update(nic.as_str().as_bytes());
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Per-node transmit and receive logs, one of each per NIC, indexed by
/// [`BANDS`] order (HP, LP).
#[derive(Clone, Debug, PartialEq)]
pub struct NodeLogs {
    pub node_id: String,
    pub tx: [Vec<TxLogRecord>; 2],
    pub rx: [Vec<RxLogRecord>; 2],
}

/// Frame and event accounting for one run. The identities
/// `generated == transmitted + queue_dropped` and
/// `rx_opportunities == delivered + lost_noise + lost_collision`
/// hold exactly once the event queue has drained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub generated: u64,
    pub queue_dropped: u64,
    pub transmitted: u64,
    pub rx_opportunities: u64,
    pub delivered: u64,
    pub lost_noise: u64,
    pub lost_collision: u64,
    pub events_processed: u64,
    pub wall_ms: u64,
}

impl RunSummary {
    pub fn report(&self) -> String {
        let pdr = if self.rx_opportunities == 0 {
            f64::NAN
        } else {
            self.delivered as f64 / self.rx_opportunities as f64
        };
        format!(
            "frames generated      {}\n\
             queue replacements    {}\n\
             frames transmitted    {}\n\
             rx opportunities      {}\n\
             delivered             {}\n\
             lost to noise/range   {}\n\
             lost to collision     {}\n\
             overall pdr           {:.4}\n\
             events processed      {}\n\
             wall time             {} ms",
            self.generated,
            self.queue_dropped,
            self.transmitted,
            self.rx_opportunities,
            self.delivered,
            self.lost_noise,
            self.lost_collision,
            pdr,
            self.events_processed,
            self.wall_ms
        )
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub scenario_name: String,
    pub seed: u64,
    pub summary: RunSummary,
    pub logs: Vec<NodeLogs>,
}

/// Writes `<node>_<hp|lp>_<tx|rx>.log` files into `dir`.
pub fn write_logs(out: &RunOutput, dir: &Path) -> Result<(), EngineError> {
    for node in &out.logs {
        for (b, nic) in BANDS.iter().enumerate() {
            let tag = nic.file_tag();
            codec::write_tx_log(
                &dir.join(format!("{}_{}_tx.log", node.node_id, tag)),
                &node.tx[b],
            )?;
            codec::write_rx_log(
                &dir.join(format!("{}_{}_rx.log", node.node_id, tag)),
                &node.rx[b],
            )?;
        }
    }
    Ok(())
}

// Same-timestamp execution order.
const CLASS_GENERATION: u8 = 0;
const CLASS_MAC_TIMER: u8 = 1;
const CLASS_TX_START: u8 = 2;
const CLASS_TX_END: u8 = 3;
const CLASS_RX_DECISION: u8 = 4;

enum Ev {
    Generation { node: usize },
    MacTimer { node: usize, band: usize, gen: u64 },
    TxStart { node: usize, band: usize, attempt: TxAttempt },
    TxEnd { flight: u64 },
    RxDecision { flight: u64 },
}

/// Heap entry ordered by (time, class, insertion), inverted so that
/// `BinaryHeap::pop` yields the earliest event.
struct QueuedEvent {
    time: u64,
    class: u8,
    tie: u64,
    ev: Ev,
}

impl QueuedEvent {
    fn key(&self) -> (u64, u8, u64) {
        (self.time, self.class, self.tie)
    }
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.key().cmp(&self.key())
    }
}

/// One pending reception: the signal as sampled at transmit start plus
/// every co-band transmission overlapping the frame's airtime.
struct Reception {
    listener: usize,
    signal_dbm: f64,
    interference_dbm: Vec<f64>,
    /// Listener's own NIC was on the air at some overlapping moment;
    /// half-duplex hardware cannot receive through that.
    corrupted: bool,
}

struct Flight {
    band: usize,
    tx_node: usize,
    end_us: u64,
    frame: CamFrame,
    receptions: Vec<Reception>,
}

struct Sim<'a> {
    sc: &'a Scenario,
    agents: Vec<NodeAgent>,
    macs: Vec<[NicMac; 2]>,
    jitter_rngs: Vec<ChaCha8Rng>,
    backoff_rngs: Vec<[ChaCha8Rng; 2]>,
    /// Count of audible co-band transmissions per (node, band), own
    /// transmissions excluded. The MAC only hears the 0/1 edges.
    audible: Vec<[u32; 2]>,
    profiles: Vec<[NicProfile; 2]>,
    heights: Vec<f64>,
    channels: [ChannelParams; 2],
    shadows: [ShadowingField; 2],
    heap: BinaryHeap<QueuedEvent>,
    tie: u64,
    flights: BTreeMap<u64, Flight>,
    next_flight: u64,
    logs: Vec<NodeLogs>,
    summary: RunSummary,
}

pub fn run(sc: &Scenario) -> Result<RunOutput, EngineError> {
    let violations = sc.validate();
    if !violations.is_empty() {
        return Err(EngineError::InvalidScenario { violations });
    }
    let started = std::time::Instant::now();

    let airtime = mac::airtime_us(&sc.mac, sc.payload_bytes);
    let mut sim = Sim {
        sc,
        agents: sc
            .nodes
            .iter()
            .map(|n| NodeAgent::new(n.clone()))
            .collect(),
        macs: sc
            .nodes
            .iter()
            .map(|_| [NicMac::new(sc.mac, airtime), NicMac::new(sc.mac, airtime)])
            .collect(),
        jitter_rngs: sc
            .nodes
            .iter()
            .map(|n| stream_rng(sc.seed, "jitter", &n.node_id, None))
            .collect(),
        backoff_rngs: sc
            .nodes
            .iter()
            .map(|n| {
                [
                    stream_rng(sc.seed, "backoff", &n.node_id, Some(NicId::Hp)),
                    stream_rng(sc.seed, "backoff", &n.node_id, Some(NicId::Lp)),
                ]
            })
            .collect(),
        audible: vec![[0, 0]; sc.nodes.len()],
        profiles: sc
            .nodes
            .iter()
            .map(|n| {
                [
                    NicProfile::named(n.role(), NicId::Hp),
                    NicProfile::named(n.role(), NicId::Lp),
                ]
            })
            .collect(),
        heights: sc
            .nodes
            .iter()
            .map(|n| match &n.kind {
                NodeKind::Rsu { height_m, .. } => *height_m,
                NodeKind::Obu { .. } => 0.0,
            })
            .collect(),
        channels: [sc.hp_channel, sc.lp_channel],
        shadows: [
            ShadowingField::new(sc.seed, sc.hp_channel.shadow_sigma_db, sc.hp_channel.shadowing_mode),
            ShadowingField::new(sc.seed, sc.lp_channel.shadow_sigma_db, sc.lp_channel.shadowing_mode),
        ],
        heap: BinaryHeap::new(),
        tie: 0,
        flights: BTreeMap::new(),
        next_flight: 0,
        logs: sc
            .nodes
            .iter()
            .map(|n| NodeLogs {
                node_id: n.node_id.clone(),
                tx: [Vec::new(), Vec::new()],
                rx: [Vec::new(), Vec::new()],
            })
            .collect(),
        summary: RunSummary::default(),
    };

    for (i, n) in sc.nodes.iter().enumerate() {
        if n.boot_offset_us < sc.duration_us {
            sim.push(n.boot_offset_us, CLASS_GENERATION, Ev::Generation { node: i });
        }
    }

    while let Some(qe) = sim.heap.pop() {
        sim.summary.events_processed += 1;
        let now = qe.time;
        match qe.ev {
            Ev::Generation { node } => sim.on_generation(node, now),
            Ev::MacTimer { node, band, gen } => {
                let step = sim.macs[node][band].on_mac_event(now, gen);
                sim.apply_step(node, band, step);
            }
            Ev::TxStart {
                node,
                band,
                attempt,
            } => sim.on_tx_start(node, band, attempt),
            Ev::TxEnd { flight } => sim.on_tx_end(flight, now),
            Ev::RxDecision { flight } => sim.on_rx_decision(flight, now),
        }
    }

    debug_assert!(sim.flights.is_empty());
    debug_assert_eq!(
        sim.summary.generated,
        sim.summary.transmitted + sim.summary.queue_dropped
    );
    debug_assert_eq!(
        sim.summary.rx_opportunities,
        sim.summary.delivered + sim.summary.lost_noise + sim.summary.lost_collision
    );

    sim.summary.wall_ms = started.elapsed().as_millis() as u64;
    Ok(RunOutput {
        scenario_name: sc.name.clone(),
        seed: sc.seed,
        summary: sim.summary,
        logs: sim.logs,
    })
}

impl<'a> Sim<'a> {
    fn push(&mut self, time: u64, class: u8, ev: Ev) {
        self.tie += 1;
        self.heap.push(QueuedEvent {
            time,
            class,
            tie: self.tie,
            ev,
        });
    }

    fn apply_step(&mut self, node: usize, band: usize, step: MacStep) {
        match step {
            MacStep::None => {}
            MacStep::Schedule(token) => self.push(
                token.time_us,
                CLASS_MAC_TIMER,
                Ev::MacTimer {
                    node,
                    band,
                    gen: token.gen,
                },
            ),
            MacStep::Commit(attempt) => self.push(
                attempt.start_time_us,
                CLASS_TX_START,
                Ev::TxStart {
                    node,
                    band,
                    attempt,
                },
            ),
        }
    }

    fn on_generation(&mut self, node: usize, now: u64) {
        let frames = self.agents[node].generate_cams(now);
        self.summary.generated += frames.len() as u64;
        for frame in frames {
            let band = band_idx(frame.nic_id);
            // the TX log is the generation log: every frame appears here,
            // even one the depth-1 queue later replaces
            self.logs[node].tx[band].push(TxLogRecord::from_frame(&frame));
            let busy = self.audible[node][band] > 0;
            let params = self.sc.mac;
            let rng = &mut self.backoff_rngs[node][band];
            let mut draw = || mac::draw_backoff(&params, rng);
            let reaction = self.macs[node][band].on_enqueue(frame, now, busy, &mut draw);
            if reaction.dropped.is_some() {
                self.summary.queue_dropped += 1;
            }
            self.apply_step(node, band, reaction.step);
        }
        let next = next_generation_time(
            &self.agents[node].config,
            &mut self.jitter_rngs[node],
            now,
        );
        if next < self.sc.duration_us {
            self.push(next, CLASS_GENERATION, Ev::Generation { node });
        }
    }

    /// Distance between two nodes at `t`, including mast height.
    fn distance(&self, a: usize, b: usize, t: u64) -> f64 {
        let (lat_a, lon_a) = self.agents[a].position_at(t);
        let (lat_b, lon_b) = self.agents[b].position_at(t);
        let horiz = geo::distance_m(lat_a, lon_a, lat_b, lon_b);
        let dh = self.heights[a] - self.heights[b];
        (horiz * horiz + dh * dh).sqrt().max(1e-3)
    }

    fn on_tx_start(&mut self, node: usize, band: usize, attempt: TxAttempt) {
        let now = attempt.start_time_us;
        let frame = attempt.frame;
        self.summary.transmitted += 1;

        let ch = &self.channels[band];
        let margin = 3.0 * ch.shadow_sigma_db;
        let mut receptions = Vec::new();
        for l in 0..self.agents.len() {
            if l == node || !self.agents[l].is_on(now) {
                continue;
            }
            self.summary.rx_opportunities += 1;
            let d = self.distance(node, l, now);
            let tx_prof = &self.profiles[node][band];
            let rx_prof = &self.profiles[l][band];
            let det = ch
                .rx_power_dbm(tx_prof, rx_prof, d, 0.0)
                .expect("distance is positive and finite");
            if det + margin < ch.sensitivity_dbm {
                self.summary.lost_noise += 1;
                continue;
            }
            let shadow = self.shadows[band].sample_db(
                frame.src_mac,
                BANDS[band],
                frame.seq_num,
                self.agents[l].config.mac_for(BANDS[band]),
            );
            let signal = det - shadow;
            if signal < ch.sensitivity_dbm {
                self.summary.lost_noise += 1;
                continue;
            }

            // Audible: drives carrier sensing and a pending reception.
            self.audible[l][band] += 1;
            if self.audible[l][band] == 1 {
                let params = self.sc.mac;
                let rng = &mut self.backoff_rngs[l][band];
                let mut draw = || mac::draw_backoff(&params, rng);
                self.macs[l][band].on_medium_busy(now, &mut draw);
            }
            let mut corrupted = false;
            let mut interference_dbm = Vec::new();
            for f in self.flights.values() {
                if f.band != band || f.end_us <= now {
                    continue;
                }
                if f.tx_node == l {
                    corrupted = true;
                } else if let Some(r) = f.receptions.iter().find(|r| r.listener == l) {
                    interference_dbm.push(r.signal_dbm);
                }
            }
            receptions.push(Reception {
                listener: l,
                signal_dbm: signal,
                interference_dbm,
                corrupted,
            });
        }

        // This transmission, in turn, degrades every reception already in
        // the air on the band: as interference where it is audible, as a
        // half-duplex corruption where the listener is this transmitter.
        for f in self.flights.values_mut() {
            if f.band != band || f.end_us <= now {
                continue;
            }
            for r in &mut f.receptions {
                if r.listener == node {
                    r.corrupted = true;
                } else if let Some(p) = receptions.iter().find(|n| n.listener == r.listener) {
                    r.interference_dbm.push(p.signal_dbm);
                }
            }
        }

        let id = self.next_flight;
        self.next_flight += 1;
        self.flights.insert(
            id,
            Flight {
                band,
                tx_node: node,
                end_us: attempt.end_time_us,
                frame,
                receptions,
            },
        );
        self.push(attempt.end_time_us, CLASS_TX_END, Ev::TxEnd { flight: id });
        self.push(
            attempt.end_time_us,
            CLASS_RX_DECISION,
            Ev::RxDecision { flight: id },
        );
    }

    fn on_tx_end(&mut self, flight: u64, now: u64) {
        let (band, tx_node, listeners) = {
            let f = &self.flights[&flight];
            (
                f.band,
                f.tx_node,
                f.receptions.iter().map(|r| r.listener).collect::<Vec<_>>(),
            )
        };
        for l in listeners {
            self.audible[l][band] -= 1;
            if self.audible[l][band] == 0 {
                let step = self.macs[l][band].on_medium_idle(now);
                self.apply_step(l, band, step);
            }
        }
        let busy = self.audible[tx_node][band] > 0;
        let params = self.sc.mac;
        let rng = &mut self.backoff_rngs[tx_node][band];
        let mut draw = || mac::draw_backoff(&params, rng);
        let step = self.macs[tx_node][band].on_tx_end(now, busy, &mut draw);
        self.apply_step(tx_node, band, step);
    }

    fn on_rx_decision(&mut self, flight: u64, now: u64) {
        let f = self.flights.remove(&flight).expect("flight registered");
        for r in f.receptions {
            let verdict = if r.corrupted {
                DeliveryVerdict::LostCollision
            } else {
                self.channels[f.band].deliver(r.signal_dbm, &r.interference_dbm)
            };
            match verdict {
                DeliveryVerdict::Delivered => {
                    self.summary.delivered += 1;
                    if let Some(record) = self.agents[r.listener].on_receive(&f.frame, now) {
                        self.logs[r.listener].rx[f.band].push(record);
                    }
                }
                DeliveryVerdict::LostNoise => self.summary.lost_noise += 1,
                DeliveryVerdict::LostCollision => self.summary.lost_collision += 1,
            }
        }
    }
}
