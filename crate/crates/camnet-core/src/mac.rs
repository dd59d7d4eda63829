//! OCB-mode broadcast CSMA/CA: airtime computation, contention-window
//! draws, and transmit-time scheduling.
//!
//! Broadcast frames get no ACK and no retry, so the contention window
//! never grows beyond `cw_min`; `cw_max` is carried in the parameters for
//! configuration completeness only. The transmit queue is one frame deep
//! and drop-oldest: a CAM superseded by a fresher one is discarded, but
//! contention progress (the drawn counter and elapsed slots) carries over
//! to the replacement.
//!
//! Two equivalent implementations live here. [`schedule_tx`] walks a
//! static list of busy intervals and is the reference model used by the
//! oracles; [`NicMac`] is the incremental state machine the simulation
//! engine drives with medium-transition and timer events. A property test
//! pins them to each other.
//!
//! Timing edge rule: a medium-busy transition landing at exactly the
//! instant an AIFS expiry or countdown completion fires does not cancel
//! it. Both nodes transmit and the frames collide. This is what makes two
//! contenders that draw the same slot collide rather than serialize.

use crate::codec::CamFrame;
use crate::Mcs;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MacError {
    #[error("invalid MAC parameters: {0}")]
    InvalidParams(String),
}

/// 802.11p timing and contention constants for 10 MHz OFDM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacParams {
    pub slot_us: u64,
    pub sifs_us: u64,
    pub aifsn: u32,
    pub cw_min: u32,
    pub cw_max: u32,
    pub preamble_us: u64,
    pub symbol_us: u64,
    pub bits_per_symbol: u32,
    pub service_bits: u32,
    pub tail_bits: u32,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            slot_us: 13,
            sifs_us: 32,
            aifsn: 2,
            cw_min: 15,
            cw_max: 1023,
            preamble_us: 40,
            symbol_us: 8,
            bits_per_symbol: 48,
            service_bits: 16,
            tail_bits: 6,
        }
    }
}

impl MacParams {
    /// Defaults with the data rate taken from the given MCS.
    pub fn for_mcs(mcs: Mcs) -> Self {
        MacParams {
            bits_per_symbol: mcs.data_bits_per_symbol(),
            ..MacParams::default()
        }
    }

    /// Arbitration inter-frame space: SIFS plus AIFSN slots.
    pub fn aifs_us(&self) -> u64 {
        self.sifs_us + u64::from(self.aifsn) * self.slot_us
    }

    pub fn validate(&self) -> Result<(), MacError> {
        if self.cw_min > self.cw_max {
            return Err(MacError::InvalidParams(format!(
                "cw_min {} exceeds cw_max {}",
                self.cw_min, self.cw_max
            )));
        }
        for (name, v) in [
            ("slot_us", self.slot_us),
            ("sifs_us", self.sifs_us),
            ("preamble_us", self.preamble_us),
            ("symbol_us", self.symbol_us),
        ] {
            if v == 0 {
                return Err(MacError::InvalidParams(format!("{name} must be > 0")));
            }
        }
        if self.bits_per_symbol == 0 {
            return Err(MacError::InvalidParams(
                "bits_per_symbol must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Time on air for one frame: preamble plus whole OFDM symbols covering
/// service bits, payload, and tail bits.
pub fn airtime_us(params: &MacParams, payload_bytes: u32) -> u64 {
    debug_assert!(payload_bytes > 0);
    let bits = u64::from(params.service_bits) + 8 * u64::from(payload_bytes)
        + u64::from(params.tail_bits);
    let symbols = bits.div_ceil(u64::from(params.bits_per_symbol));
    params.preamble_us + symbols * params.symbol_us
}

/// Uniform backoff draw over [0, cw_min], both ends inclusive.
pub fn draw_backoff<R: Rng + ?Sized>(params: &MacParams, rng: &mut R) -> u32 {
    rng.random_range(0..=params.cw_min)
}

/// One scheduled broadcast transmission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TxAttempt {
    pub frame: CamFrame,
    pub enqueue_time_us: u64,
    pub start_time_us: u64,
    pub end_time_us: u64,
    /// `None` when the medium stayed idle through the initial AIFS and no
    /// counter was ever drawn.
    pub backoff_slots_drawn: Option<u32>,
}

/// Reference scheduler: resolves one frame's transmit time against a fixed
/// set of half-open busy intervals `[start, end)`.
///
/// Sensing at the enqueue instant treats an interval as busy through its
/// end point inclusive, matching the engine's event order where a frame
/// generated at the same instant a transmission ends still sees the medium
/// busy and enters contention. `draw` is invoked at most once, and only
/// when the frame actually meets a busy medium.
pub fn schedule_tx(
    params: &MacParams,
    frame: CamFrame,
    enqueue_us: u64,
    busy_intervals: &[(u64, u64)],
    airtime_us: u64,
    draw: impl FnOnce() -> u32,
) -> TxAttempt {
    let clusters = merge_intervals(busy_intervals);
    let aifs = params.aifs_us();
    let slot = params.slot_us;

    let attempt = |start: u64, drawn: Option<u32>| TxAttempt {
        frame,
        enqueue_time_us: enqueue_us,
        start_time_us: start,
        end_time_us: start + airtime_us,
        backoff_slots_drawn: drawn,
    };

    // Sense at enqueue; an untouched AIFS means no draw at all.
    let covering = clusters
        .iter()
        .position(|&(s, e)| s <= enqueue_us && enqueue_us <= e);
    let (drawn, mut idle_onset) = match covering {
        Some(idx) => (draw(), clusters[idx].1),
        None => {
            let expiry = enqueue_us + aifs;
            match clusters.iter().find(|&&(s, _)| s > enqueue_us && s < expiry) {
                None => return attempt(expiry, None),
                Some(&(_, end)) => (draw(), end),
            }
        }
    };

    let mut remaining = drawn;
    loop {
        let expiry = idle_onset + aifs;
        // The AIFS restarts from scratch after every busy period; the
        // drawn counter does not.
        if let Some(&(_, end)) = clusters.iter().find(|&&(s, _)| s > idle_onset && s < expiry) {
            idle_onset = end;
            continue;
        }
        if remaining == 0 {
            return attempt(expiry, Some(drawn));
        }
        let completion = expiry + u64::from(remaining) * slot;
        match clusters
            .iter()
            .find(|&&(s, _)| s >= expiry && s < completion)
        {
            None => return attempt(completion, Some(drawn)),
            Some(&(s, end)) => {
                // Freeze: only fully elapsed slots count.
                let elapsed = ((s - expiry) / slot) as u32;
                remaining -= elapsed;
                idle_onset = end;
            }
        }
    }
}

fn merge_intervals(intervals: &[(u64, u64)]) -> Vec<(u64, u64)> {
    let mut sorted: Vec<(u64, u64)> = intervals
        .iter()
        .copied()
        .filter(|&(s, e)| e > s)
        .collect();
    sorted.sort_unstable();
    let mut merged: Vec<(u64, u64)> = Vec::with_capacity(sorted.len());
    for (s, e) in sorted {
        match merged.last_mut() {
            // Touching intervals merge: the medium never shows an idle
            // instant between them.
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

// ============================================================================
// Incremental state machine
// ============================================================================

/// A timer the engine must fire back into [`NicMac::on_mac_event`].
/// Stale generations are ignored, which is how superseded timers die.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacEventToken {
    pub time_us: u64,
    pub gen: u64,
}

/// What a state transition asks of the engine.
#[derive(Clone, Debug, PartialEq)]
pub enum MacStep {
    None,
    /// Schedule a timer event.
    Schedule(MacEventToken),
    /// Put this transmission on the air now.
    Commit(TxAttempt),
}

/// A transition's side effects: at most one step plus at most one frame
/// displaced from the depth-1 queue.
#[derive(Debug)]
pub struct MacReaction {
    pub step: MacStep,
    pub dropped: Option<CamFrame>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    /// Nothing queued.
    Idle,
    /// Frame queued, medium busy, counter (if any) frozen.
    WaitIdle,
    /// AIFS running; expiry timer scheduled.
    Aifs,
    /// Counter running; completion timer scheduled.
    Backoff,
    /// Own transmission on the air.
    Tx,
}

#[derive(Clone, Debug)]
struct PendingFrame {
    frame: CamFrame,
    enqueue_us: u64,
    /// Original draw; `None` until the frame first meets a busy medium.
    drawn: Option<u32>,
    /// Slots still to count down.
    remaining: u32,
    /// Slots consumed across earlier freeze episodes (bookkeeping for the
    /// conservation invariant drawn == frozen + remaining).
    frozen: u32,
}

/// Per-NIC MAC state machine, driven by the engine through enqueue,
/// medium-transition, timer, and transmit-end events. Only medium *edges*
/// (idle to busy, busy to idle) may be reported; the engine tracks the
/// co-band transmission count per node and excludes the node's own
/// transmissions from it.
#[derive(Clone, Debug)]
pub struct NicMac {
    params: MacParams,
    airtime_us: u64,
    phase: Phase,
    pending: Option<PendingFrame>,
    /// Frame enqueued while our own transmission was on the air, with its
    /// enqueue time. Contends after the transmission ends.
    waiting: Option<(CamFrame, u64)>,
    gen: u64,
    countdown_start_us: u64,
    /// Conservation record of the most recent commit: (drawn, counted).
    last_conservation: Option<(u32, u32)>,
}

impl NicMac {
    pub fn new(params: MacParams, airtime_us: u64) -> Self {
        NicMac {
            params,
            airtime_us,
            phase: Phase::Idle,
            pending: None,
            waiting: None,
            gen: 0,
            countdown_start_us: 0,
            last_conservation: None,
        }
    }

    pub fn airtime_us(&self) -> u64 {
        self.airtime_us
    }

    pub fn is_transmitting(&self) -> bool {
        self.phase == Phase::Tx
    }

    fn schedule(&mut self, time_us: u64) -> MacStep {
        self.gen += 1;
        MacStep::Schedule(MacEventToken {
            time_us,
            gen: self.gen,
        })
    }

    /// Starts contention for `pending` at `now`. Caller guarantees
    /// `pending` is populated and the phase is being (re)established.
    fn begin_contention(
        &mut self,
        now_us: u64,
        medium_busy: bool,
        draw: &mut dyn FnMut() -> u32,
    ) -> MacStep {
        if medium_busy {
            let p = self.pending.as_mut().expect("pending frame");
            if p.drawn.is_none() {
                let d = draw();
                p.drawn = Some(d);
                p.remaining = d;
            }
            self.phase = Phase::WaitIdle;
            self.gen += 1;
            MacStep::None
        } else {
            self.phase = Phase::Aifs;
            self.schedule(now_us + self.params.aifs_us())
        }
    }

    /// A fresh CAM arrives from the generator. Replaces whatever is
    /// queued; contention state survives the swap.
    pub fn on_enqueue(
        &mut self,
        frame: CamFrame,
        now_us: u64,
        medium_busy: bool,
        draw: &mut dyn FnMut() -> u32,
    ) -> MacReaction {
        match self.phase {
            Phase::Idle => {
                self.pending = Some(PendingFrame {
                    frame,
                    enqueue_us: now_us,
                    drawn: None,
                    remaining: 0,
                    frozen: 0,
                });
                MacReaction {
                    step: self.begin_contention(now_us, medium_busy, draw),
                    dropped: None,
                }
            }
            Phase::WaitIdle | Phase::Aifs | Phase::Backoff => {
                let p = self.pending.as_mut().expect("pending frame");
                let dropped = std::mem::replace(&mut p.frame, frame);
                p.enqueue_us = now_us;
                MacReaction {
                    step: MacStep::None,
                    dropped: Some(dropped),
                }
            }
            Phase::Tx => {
                let dropped = self
                    .waiting
                    .replace((frame, now_us))
                    .map(|(old, _)| old);
                MacReaction {
                    step: MacStep::None,
                    dropped,
                }
            }
        }
    }

    /// Medium transition idle -> busy at this node.
    pub fn on_medium_busy(&mut self, now_us: u64, draw: &mut dyn FnMut() -> u32) {
        match self.phase {
            Phase::Aifs => {
                // AIFS canceled; the counter (drawn lazily here if the
                // initial AIFS had none) waits for the next idle period.
                let p = self.pending.as_mut().expect("pending frame");
                if p.drawn.is_none() {
                    let d = draw();
                    p.drawn = Some(d);
                    p.remaining = d;
                }
                self.phase = Phase::WaitIdle;
                self.gen += 1;
            }
            Phase::Backoff => {
                let p = self.pending.as_mut().expect("pending frame");
                let elapsed = ((now_us - self.countdown_start_us) / self.params.slot_us) as u32;
                debug_assert!(elapsed < p.remaining, "completion event should have fired");
                p.remaining -= elapsed;
                p.frozen += elapsed;
                self.phase = Phase::WaitIdle;
                self.gen += 1;
            }
            Phase::Idle | Phase::WaitIdle | Phase::Tx => {}
        }
    }

    /// Medium transition busy -> idle at this node.
    pub fn on_medium_idle(&mut self, now_us: u64) -> MacStep {
        match self.phase {
            Phase::WaitIdle => {
                self.phase = Phase::Aifs;
                self.schedule(now_us + self.params.aifs_us())
            }
            _ => MacStep::None,
        }
    }

    /// A timer scheduled earlier fires. Stale generations are no-ops.
    pub fn on_mac_event(&mut self, now_us: u64, gen: u64) -> MacStep {
        if gen != self.gen {
            return MacStep::None;
        }
        match self.phase {
            Phase::Aifs => {
                let remaining = self.pending.as_ref().expect("pending frame").remaining;
                if remaining == 0 {
                    self.commit(now_us)
                } else {
                    self.phase = Phase::Backoff;
                    self.countdown_start_us = now_us;
                    self.schedule(now_us + u64::from(remaining) * self.params.slot_us)
                }
            }
            Phase::Backoff => self.commit(now_us),
            _ => {
                debug_assert!(false, "live timer in phase {:?}", self.phase);
                MacStep::None
            }
        }
    }

    fn commit(&mut self, now_us: u64) -> MacStep {
        let p = self.pending.take().expect("pending frame");
        if let Some(d) = p.drawn {
            self.last_conservation = Some((d, p.frozen + p.remaining));
        }
        self.phase = Phase::Tx;
        self.gen += 1;
        MacStep::Commit(TxAttempt {
            frame: p.frame,
            enqueue_time_us: p.enqueue_us,
            start_time_us: now_us,
            end_time_us: now_us + self.airtime_us,
            backoff_slots_drawn: p.drawn,
        })
    }

    /// Our own transmission left the air. A waiting frame starts its
    /// contention here.
    pub fn on_tx_end(
        &mut self,
        now_us: u64,
        medium_busy: bool,
        draw: &mut dyn FnMut() -> u32,
    ) -> MacStep {
        debug_assert_eq!(self.phase, Phase::Tx);
        self.phase = Phase::Idle;
        match self.waiting.take() {
            None => MacStep::None,
            Some((frame, enqueue_us)) => {
                self.pending = Some(PendingFrame {
                    frame,
                    enqueue_us,
                    drawn: None,
                    remaining: 0,
                    frozen: 0,
                });
                self.begin_contention(now_us, medium_busy, draw)
            }
        }
    }
}
