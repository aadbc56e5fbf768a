//! Channel access: the unified comms/radar frame structure and the four
//! access schemes under study — ideal TDMA, radar-aware CSMA with preamble
//! repetition and reservations, uncoordinated random access, and
//! uncoordinated access with binary exponential backoff.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameCategory {
    Data,
    Radar,
    Preamble,
}

/// A frame as seen by the MAC. The category field models the fixed-length
/// header field that lets receivers drop radar frames at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub category: FrameCategory,
    pub duration_slots: u32,
    pub originator: u32,
    /// Slots the reserving preamble claims on behalf of this frame.
    pub reservation_slots: u32,
}

/// Slot timing shared by every vehicle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlotClock {
    pub slot_duration_s: f64,
    pub inter_preamble_interval: u32,
    pub min_interframe_spacing: u32,
}

impl Default for SlotClock {
    fn default() -> Self {
        SlotClock {
            slot_duration_s: 5e-6,
            inter_preamble_interval: 20,
            min_interframe_spacing: 1,
        }
    }
}

/// Channel-access scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Tdma,
    RaCsma,
    Uncoordinated,
    Adaptive,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Tdma => "tdma",
            Scheme::RaCsma => "ra_csma",
            Scheme::Uncoordinated => "uncoordinated",
            Scheme::Adaptive => "adaptive",
        }
    }

    pub const ALL: [Scheme; 4] = [
        Scheme::Tdma,
        Scheme::RaCsma,
        Scheme::Adaptive,
        Scheme::Uncoordinated,
    ];
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacParams {
    pub cw_min: u32,
    pub cw_max: u32,
    /// Reservation length per frame, slots.
    pub reservation_slots: u32,
    /// Fraction of frames that carry radar sensing instead of data.
    pub radar_duty: f64,
    /// Preamble detection SNR threshold, dB.
    pub preamble_snr_threshold_db: f64,
    /// Data decode SINR threshold, dB.
    pub decode_sinr_threshold_db: f64,
    /// Per-slot transmit probability for the uncoordinated scheme.
    pub p_tx: f64,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            cw_min: 8,
            cw_max: 1024,
            reservation_slots: 100,
            radar_duty: 0.5,
            preamble_snr_threshold_db: -5.0,
            decode_sinr_threshold_db: 10.0,
            p_tx: 1.0,
        }
    }
}

/// Radio mode of the shared antenna front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    CommRx,
    CommTx,
    Radar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Initial listen for one full inter-preamble interval.
    Listen { until: u64 },
    /// Counting down backoff on idle slots.
    Contend,
    /// Holding a reservation; `end` is one past the last occupied slot.
    Occupy { end: u64, next_preamble: u64 },
}

/// What a vehicle does in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacAction {
    Idle,
    Transmit {
        category: FrameCategory,
        /// True on slots that carry a (reserving or repeated) preamble.
        preamble: bool,
        /// True on the first slot of a reservation.
        starts: bool,
    },
}

/// Per-vehicle channel-access state.
#[derive(Debug, Clone)]
pub struct MacState {
    pub vehicle: u32,
    pub cw: u32,
    pub backoff: u32,
    pub channel_busy_until: u64,
    pub mode: Mode,
    phase: Phase,
    pub pending: Frame,
    frames_emitted: u64,
    /// Slot at which the current access attempt began (listen entry).
    attempt_start: u64,
    /// Idle slots spent decrementing or firing within the current attempt.
    backoff_slots: u32,
    /// Completed accesses: (fire slot, total delay slots, backoff slots).
    pub access_log: Vec<(u64, u64, u32)>,
    /// Reservation starts that collided are resolved at finish time.
    pub last_start_slot: u64,
}

impl MacState {
    pub fn new(vehicle: u32, params: &MacParams, clock: &SlotClock, boot_jitter: u32) -> Self {
        let mut s = MacState {
            vehicle,
            cw: params.cw_min,
            backoff: 0,
            channel_busy_until: 0,
            mode: Mode::CommRx,
            phase: Phase::Listen {
                until: clock.inter_preamble_interval as u64 + boot_jitter as u64,
            },
            pending: Frame {
                category: FrameCategory::Data,
                duration_slots: params.reservation_slots,
                originator: vehicle,
                reservation_slots: params.reservation_slots,
            },
            frames_emitted: 0,
            attempt_start: 0,
            backoff_slots: 0,
            access_log: Vec::new(),
            last_start_slot: u64::MAX,
        };
        s.pending = s.draw_frame(params);
        s
    }

    /// Saturated traffic: alternate data and radar frames so that the
    /// long-run radar fraction equals `radar_duty`.
    fn draw_frame(&mut self, params: &MacParams) -> Frame {
        let k = self.frames_emitted as f64;
        let category = if ((k + 1.0) * params.radar_duty).floor() > (k * params.radar_duty).floor()
        {
            FrameCategory::Radar
        } else {
            FrameCategory::Data
        };
        Frame {
            category,
            duration_slots: params.reservation_slots,
            originator: self.vehicle,
            reservation_slots: params.reservation_slots,
        }
    }

    pub fn is_occupying(&self) -> bool {
        matches!(self.phase, Phase::Occupy { .. })
    }

    /// True while the radio cannot receive or carrier-sense.
    pub fn is_deaf(&self) -> bool {
        self.mode != Mode::CommRx
    }
}

/// [OP] ra_csma_step
///
/// One slot of the radar-aware CSMA state machine. `detections` lists the
/// vehicles whose preamble this vehicle detected on the previous slot; while
/// transmitting (or sensing in radar mode) the vehicle is deaf and the engine
/// passes an empty set.
pub fn ra_csma_step<R: Rng>(
    state: &mut MacState,
    slot: u64,
    clock: &SlotClock,
    detections: &[u32],
    rng: &mut R,
) -> MacAction {
    let p = clock.inter_preamble_interval as u64;
    if !state.is_deaf() && !detections.is_empty() {
        state.channel_busy_until = state.channel_busy_until.max(slot + p);
    }
    match state.phase {
        Phase::Occupy { end, next_preamble } => {
            if slot + 1 < end {
                let preamble = slot == next_preamble;
                if preamble {
                    state.phase = Phase::Occupy {
                        end,
                        next_preamble: next_preamble + p,
                    };
                }
                MacAction::Transmit {
                    category: state.pending.category,
                    preamble,
                    starts: false,
                }
            } else {
                // Last occupied slot; the reservation outcome is applied by
                // `finish_reservation` before the next slot.
                MacAction::Transmit {
                    category: state.pending.category,
                    preamble: slot == next_preamble,
                    starts: false,
                }
            }
        }
        Phase::Listen { until } => {
            if slot + 1 >= until {
                state.phase = Phase::Contend;
                state.backoff = rng.gen_range(0..state.cw);
            }
            MacAction::Idle
        }
        Phase::Contend => {
            if slot < state.channel_busy_until {
                return MacAction::Idle; // frozen
            }
            state.backoff_slots += 1;
            if state.backoff > 0 {
                state.backoff -= 1;
                return MacAction::Idle;
            }
            // Fire: reserving preamble now, payload follows.
            let end = slot + 1 + state.pending.duration_slots as u64;
            state.phase = Phase::Occupy {
                end,
                next_preamble: slot + p,
            };
            state.mode = match state.pending.category {
                FrameCategory::Radar => Mode::Radar,
                _ => Mode::CommTx,
            };
            state.last_start_slot = slot;
            state
                .access_log
                .push((slot, slot - state.attempt_start, state.backoff_slots));
            MacAction::Transmit {
                category: state.pending.category,
                preamble: true,
                starts: true,
            }
        }
    }
}

/// True when the vehicle's reservation ends after this slot.
pub fn reservation_ends(state: &MacState, slot: u64) -> bool {
    matches!(state.phase, Phase::Occupy { end, .. } if slot + 1 >= end)
}

/// Applies the reservation outcome and re-enters the listen phase; the
/// post-reservation listen also provides the interframe spacing.
pub fn finish_reservation<R: Rng>(
    state: &mut MacState,
    slot: u64,
    clock: &SlotClock,
    params: &MacParams,
    success: bool,
    _rng: &mut R,
) {
    debug_assert!(state.is_occupying());
    if success {
        state.cw = params.cw_min;
    } else if state.pending.category == FrameCategory::Data {
        state.cw = (state.cw * 2).min(params.cw_max);
    }
    state.frames_emitted += 1;
    state.pending = state.draw_frame(params);
    state.mode = Mode::CommRx;
    let spacing = clock.min_interframe_spacing.max(1) as u64;
    state.phase = Phase::Listen {
        until: slot + spacing + clock.inter_preamble_interval as u64,
    };
    state.attempt_start = slot + 1;
    state.backoff_slots = 0;
    state.last_start_slot = u64::MAX;
}

/// [OP] tdma_schedule — round-robin slot assignment within a collision
/// domain: member at rank r transmits on slots where slot % n == r.
pub fn tdma_schedule(members: &[u32]) -> Vec<(u32, usize, usize)> {
    let mut sorted: Vec<u32> = members.to_vec();
    sorted.sort_unstable();
    let n = sorted.len().max(1);
    sorted
        .into_iter()
        .enumerate()
        .map(|(rank, id)| (id, rank, n))
        .collect()
}

/// [OP] uncoordinated_step — per-slot Bernoulli transmission, no sensing.
pub fn uncoordinated_step<R: Rng>(
    state: &mut MacState,
    params: &MacParams,
    rng: &mut R,
) -> MacAction {
    debug_assert!((0.0..=1.0).contains(&params.p_tx));
    if rng.gen::<f64>() < params.p_tx {
        state.frames_emitted += 1;
        let k = state.frames_emitted as f64;
        let category = if (k * params.radar_duty).floor()
            > ((k - 1.0) * params.radar_duty).floor()
        {
            FrameCategory::Radar
        } else {
            FrameCategory::Data
        };
        MacAction::Transmit {
            category,
            preamble: false,
            starts: true,
        }
    } else {
        MacAction::Idle
    }
}

/// [OP] adaptive_backoff_step
///
/// Uncoordinated access with binary exponential backoff: no carrier sensing,
/// the backoff counter runs every slot, and the contention window reacts to
/// per-frame feedback in [`adaptive_feedback`].
pub fn adaptive_backoff_step(state: &mut MacState, slot: u64) -> MacAction {
    match state.phase {
        Phase::Occupy { end, .. } => {
            if slot < end {
                MacAction::Transmit {
                    category: state.pending.category,
                    preamble: false,
                    starts: false,
                }
            } else {
                MacAction::Idle
            }
        }
        Phase::Listen { .. } | Phase::Contend => {
            if state.backoff > 0 {
                state.backoff -= 1;
                state.backoff_slots += 1;
                return MacAction::Idle;
            }
            let end = slot + state.pending.duration_slots as u64;
            state.phase = Phase::Occupy {
                end,
                next_preamble: u64::MAX,
            };
            state.mode = Mode::CommTx;
            state.last_start_slot = slot;
            state
                .access_log
                .push((slot, slot - state.attempt_start, state.backoff_slots + 1));
            MacAction::Transmit {
                category: state.pending.category,
                preamble: false,
                starts: true,
            }
        }
    }
}

pub fn adaptive_frame_ends(state: &MacState, slot: u64) -> bool {
    matches!(state.phase, Phase::Occupy { end, .. } if slot + 1 >= end)
}

/// Post-frame feedback for the adaptive scheme: failure doubles the window
/// (capped), success resets it to the minimum; either way a fresh uniform
/// backoff is drawn.
pub fn adaptive_feedback<R: Rng>(
    state: &mut MacState,
    slot: u64,
    params: &MacParams,
    success: bool,
    rng: &mut R,
) {
    state.cw = if success {
        params.cw_min
    } else {
        (state.cw * 2).min(params.cw_max)
    };
    state.frames_emitted += 1;
    state.pending = state.draw_frame(params);
    state.mode = Mode::CommRx;
    state.phase = Phase::Contend;
    state.backoff = rng.gen_range(0..state.cw);
    state.attempt_start = slot + 1;
    state.backoff_slots = 0;
    state.last_start_slot = u64::MAX;
}

/// Outcome of header-level frame filtering at a receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disposition {
    Deliver,
    Drop,
    /// Preambles only refresh the busy indicator.
    BusyIndicatorOnly,
}

/// [OP] classify_and_filter — radar frames are dropped on the category
/// field alone; data is delivered when decodable; preambles update the busy
/// indicator and deliver nothing.
pub fn classify_and_filter(frame: &Frame, receiver_mode: Mode, decodable: bool) -> Disposition {
    if receiver_mode != Mode::CommRx {
        return Disposition::Drop;
    }
    match frame.category {
        FrameCategory::Radar => Disposition::Drop,
        FrameCategory::Preamble => Disposition::BusyIndicatorOnly,
        FrameCategory::Data => {
            if decodable {
                Disposition::Deliver
            } else {
                Disposition::Drop
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clock() -> SlotClock {
        SlotClock::default()
    }

    fn params() -> MacParams {
        MacParams::default()
    }

    #[test]
    fn radar_frame_reservation_flow() {
        let clock = clock();
        let params = MacParams { radar_duty: 1.0, ..params() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = MacState::new(0, &params, &clock, 0);
        assert_eq!(s.pending.category, FrameCategory::Radar);
        let mut slot = 0u64;
        // Listen phase: idle for one inter-preamble interval.
        loop {
            let a = ra_csma_step(&mut s, slot, &clock, &[], &mut rng);
            if let MacAction::Transmit { category, preamble, starts } = a {
                assert_eq!(category, FrameCategory::Radar);
                assert!(preamble && starts);
                break;
            }
            slot += 1;
            assert!(slot < 2000, "must eventually transmit on an idle channel");
        }
        assert_eq!(s.mode, Mode::Radar);
        // Occupies exactly reservation_slots more slots.
        let mut occupied = 0;
        loop {
            slot += 1;
            let a = ra_csma_step(&mut s, slot, &clock, &[], &mut rng);
            match a {
                MacAction::Transmit { starts, .. } => {
                    assert!(!starts);
                    occupied += 1;
                }
                MacAction::Idle => unreachable!("occupancy is contiguous"),
            }
            if reservation_ends(&s, slot) {
                break;
            }
        }
        assert_eq!(occupied, params.reservation_slots);
        finish_reservation(&mut s, slot, &clock, &params, true, &mut rng);
        assert_eq!(s.mode, Mode::CommRx);
        assert_eq!(s.cw, params.cw_min);
    }

    #[test]
    fn detection_freezes_backoff() {
        let clock = clock();
        let params = params();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = MacState::new(0, &params, &clock, 0);
        // Walk through listen.
        let mut slot = 0u64;
        while !matches!(s.phase, Phase::Contend) {
            ra_csma_step(&mut s, slot, &clock, &[], &mut rng);
            slot += 1;
        }
        s.backoff = 5;
        // Detection: busy for one interval, counter frozen.
        ra_csma_step(&mut s, slot, &clock, &[9], &mut rng);
        assert_eq!(s.channel_busy_until, slot + 20);
        assert_eq!(s.backoff, 5);
        for _ in 0..19 {
            slot += 1;
            ra_csma_step(&mut s, slot, &clock, &[], &mut rng);
            assert_eq!(s.backoff, 5, "frozen while busy");
        }
        slot += 1;
        ra_csma_step(&mut s, slot, &clock, &[], &mut rng);
        assert_eq!(s.backoff, 4, "resumes after the busy interval");
    }

    #[test]
    fn worst_case_backoff_delay_bound() {
        // Forced CW = 1024, single contender: the backoff component never
        // exceeds 1024 slots (5.12 ms at 5 us).
        let clock = clock();
        let params = MacParams { cw_min: 1024, cw_max: 1024, ..params() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = MacState::new(0, &params, &clock, 0);
        let mut slot = 0u64;
        while slot < 100_000 {
            let a = ra_csma_step(&mut s, slot, &clock, &[], &mut rng);
            if matches!(a, MacAction::Transmit { .. }) && reservation_ends(&s, slot) {
                finish_reservation(&mut s, slot, &clock, &params, true, &mut rng);
            }
            slot += 1;
        }
        assert!(s.access_log.len() > 10);
        for &(_fire, _total, backoff) in &s.access_log {
            assert!(backoff as f64 * 5e-6 <= 5.12e-3 + 1e-12, "backoff {backoff} slots");
        }
    }

    #[test]
    fn tdma_round_robin() {
        let a = tdma_schedule(&[7, 3, 5]);
        assert_eq!(a.len(), 3);
        for (id, rank, n) in &a {
            assert_eq!(*n, 3);
            match id {
                3 => assert_eq!(*rank, 0),
                5 => assert_eq!(*rank, 1),
                7 => assert_eq!(*rank, 2),
                _ => panic!(),
            }
        }
        let single = tdma_schedule(&[42]);
        assert_eq!(single[0], (42, 0, 1));
    }

    #[test]
    fn uncoordinated_rates() {
        let params0 = MacParams { p_tx: 0.0, ..params() };
        let params1 = MacParams { p_tx: 1.0, ..params() };
        let params_half = MacParams { p_tx: 0.5, ..params() };
        let clock = clock();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = MacState::new(0, &params0, &clock, 0);
        for _ in 0..1000 {
            assert_eq!(uncoordinated_step(&mut s, &params0, &mut rng), MacAction::Idle);
        }
        let mut on = 0;
        for _ in 0..1000 {
            if matches!(uncoordinated_step(&mut s, &params1, &mut rng), MacAction::Transmit { .. }) {
                on += 1;
            }
        }
        assert_eq!(on, 1000);
        let mut on = 0;
        for _ in 0..10_000 {
            if matches!(
                uncoordinated_step(&mut s, &params_half, &mut rng),
                MacAction::Transmit { .. }
            ) {
                on += 1;
            }
        }
        let rate = on as f64 / 10_000.0;
        assert!((rate - 0.5).abs() < 0.02, "empirical rate {rate}");
    }

    #[test]
    fn adaptive_cw_trajectory() {
        let params = params();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let clock = clock();
        let mut s = MacState::new(0, &params, &clock, 0);
        s.phase = Phase::Contend;
        assert_eq!(s.cw, 8);
        for expect in [16, 32, 64, 128, 256] {
            adaptive_feedback(&mut s, 0, &params, false, &mut rng);
            assert_eq!(s.cw, expect);
        }
        for _ in 0..5 {
            adaptive_feedback(&mut s, 0, &params, false, &mut rng);
        }
        assert_eq!(s.cw, 1024, "cap at 1024");
        adaptive_feedback(&mut s, 0, &params, false, &mut rng);
        assert_eq!(s.cw, 1024);
        // Success from any level resets to the minimum.
        s.cw = 512;
        adaptive_feedback(&mut s, 0, &params, true, &mut rng);
        assert_eq!(s.cw, 8);
        // Always a power of two within bounds.
        assert!(s.cw.is_power_of_two());
    }

    #[test]
    fn classify_and_filter_table() {
        let radar = Frame {
            category: FrameCategory::Radar,
            duration_slots: 10,
            originator: 1,
            reservation_slots: 10,
        };
        let data = Frame { category: FrameCategory::Data, ..radar };
        let preamble = Frame { category: FrameCategory::Preamble, ..radar };
        assert_eq!(classify_and_filter(&radar, Mode::CommRx, true), Disposition::Drop);
        assert_eq!(classify_and_filter(&data, Mode::CommRx, true), Disposition::Deliver);
        assert_eq!(classify_and_filter(&data, Mode::CommRx, false), Disposition::Drop);
        assert_eq!(
            classify_and_filter(&preamble, Mode::CommRx, true),
            Disposition::BusyIndicatorOnly
        );
        assert_eq!(classify_and_filter(&data, Mode::Radar, true), Disposition::Drop);
    }

    #[test]
    fn radar_duty_alternation() {
        let clock = clock();
        let params = MacParams { radar_duty: 0.5, ..params() };
        let mut s = MacState::new(0, &params, &clock, 0);
        let mut cats = Vec::new();
        for _ in 0..8 {
            cats.push(s.pending.category);
            s.frames_emitted += 1;
            s.pending = s.draw_frame(&params);
        }
        let radar = cats.iter().filter(|c| **c == FrameCategory::Radar).count();
        assert_eq!(radar, 4, "50% duty alternates categories");
        assert_ne!(cats[0], cats[1]);
    }
}
