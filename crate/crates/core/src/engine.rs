//! Time-driven simulation loop binding scene, propagation and MAC, plus the
//! Monte-Carlo experiment driver that reproduces the link-distance and
//! inter-vehicle-gap sweeps.

use crate::error::{Result, SimError};
use crate::mac::{
    adaptive_backoff_step, adaptive_feedback, adaptive_frame_ends, finish_reservation,
    ra_csma_step, reservation_ends, tdma_schedule, uncoordinated_step, FrameCategory, MacAction,
    MacParams, MacState, Scheme, SlotClock,
};
use crate::materials::MaterialRegistry;
use crate::propagation::{
    noise_dbm, quick_link_gain_db, received_power_dbm, trace_paths, RadioParams, SceneGeometry,
    TraceOptions,
};
use crate::scene::{
    advance_positions, build_canyon, generate_deployment, AntennaMount, CanyonParams,
    DeploymentParams, MountLocation, Scene, Setup, TaggedPlacement,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Tagged-link distance sweep with background traffic at a fixed gap.
    Fig4,
    /// Mean inter-vehicle gap sweep under both deployment setups.
    Fig5,
    /// One configuration point.
    Single,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub canyon: CanyonParams,
    pub deployment: DeploymentParams,
    pub radio: RadioParams,
    pub clock: SlotClock,
    pub mac: MacParams,
    pub schemes: Vec<Scheme>,
    pub experiment: Experiment,
    pub replications: usize,
    pub slots_per_replication: u64,
    /// Leading fraction of slots excluded from aggregation.
    pub warmup_fraction: f64,
    pub master_seed: u64,
    /// Paths are retraced once any vehicle moved farther than this.
    pub path_cache_tolerance_m: f64,
    pub max_reflection_order: u8,
    pub fig4_distances_m: Vec<f64>,
    pub fig5_gaps_m: Vec<f64>,
    /// Lane that hosts the tagged pair (must head +x).
    pub tagged_lane: usize,
    /// Optional CSV with measured material tables (see materials module).
    pub material_csv: Option<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            canyon: CanyonParams::default(),
            deployment: DeploymentParams::default(),
            radio: RadioParams::default(),
            clock: SlotClock::default(),
            mac: MacParams::default(),
            schemes: Scheme::ALL.to_vec(),
            experiment: Experiment::Single,
            replications: 100,
            slots_per_replication: 2000,
            warmup_fraction: 0.1,
            master_seed: 1,
            path_cache_tolerance_m: 0.01,
            max_reflection_order: 1,
            fig4_distances_m: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            fig5_gaps_m: vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
            tagged_lane: 1,
            material_csv: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(SimError::config("replications", "must be >= 1"));
        }
        if self.warmup_fraction < 0.0 || self.warmup_fraction >= 1.0 {
            return Err(SimError::config("warmup_fraction", "must be in [0, 1)"));
        }
        if self.radio.bandwidth_ghz <= 0.0 {
            return Err(SimError::config("radio.bandwidth_ghz", "must be > 0"));
        }
        if self.radio.carrier_ghz <= 0.0 {
            return Err(SimError::config("radio.carrier_ghz", "must be > 0"));
        }
        if self.radio.temperature_k <= 0.0 {
            return Err(SimError::config("radio.temperature_k", "must be > 0"));
        }
        if self.clock.slot_duration_s <= 0.0 {
            return Err(SimError::config("clock.slot_duration_s", "must be > 0"));
        }
        if self.clock.inter_preamble_interval < 1 {
            return Err(SimError::config("clock.inter_preamble_interval", "must be >= 1"));
        }
        if !self.mac.cw_min.is_power_of_two()
            || !self.mac.cw_max.is_power_of_two()
            || self.mac.cw_min > self.mac.cw_max
        {
            return Err(SimError::config(
                "mac.cw_min/cw_max",
                "must be powers of two with cw_min <= cw_max",
            ));
        }
        if !(0.0..=1.0).contains(&self.mac.p_tx) {
            return Err(SimError::config("mac.p_tx", "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.mac.radar_duty) {
            return Err(SimError::config("mac.radar_duty", "must be in [0, 1]"));
        }
        if self.max_reflection_order > 2 {
            return Err(SimError::config("max_reflection_order", "must be 0, 1 or 2"));
        }
        if self.schemes.is_empty() {
            return Err(SimError::config("schemes", "must list at least one scheme"));
        }
        match self.experiment {
            Experiment::Fig4 if self.fig4_distances_m.is_empty() => {
                return Err(SimError::config("fig4_distances_m", "sweep grid is empty"));
            }
            Experiment::Fig5 if self.fig5_gaps_m.is_empty() => {
                return Err(SimError::config("fig5_gaps_m", "sweep grid is empty"));
            }
            _ => {}
        }
        if self.deployment.gap_m <= 0.0 {
            return Err(SimError::config("deployment.gap_m", "must be > 0"));
        }
        if self.canyon.lane_width_m < self.deployment.vehicle_dims.1 {
            return Err(SimError::config(
                "canyon.lane_width_m",
                "narrower than the vehicle body",
            ));
        }
        if self.tagged_lane >= self.canyon.lanes_per_direction {
            return Err(SimError::config(
                "tagged_lane",
                "tagged lane must head +x (index < lanes_per_direction)",
            ));
        }
        Ok(())
    }
}

/// [OP] spectral_efficiency — log2(1 + linear SINR); outage maps to zero.
pub fn spectral_efficiency_bps_hz(sinr_db: f64) -> f64 {
    if sinr_db == f64::NEG_INFINITY || sinr_db.is_nan() {
        return 0.0;
    }
    (1.0 + 10f64.powf(sinr_db / 10.0)).log2()
}

/// SINR from already-computed powers; interference in linear milliwatts.
pub fn sinr_db_from_powers(wanted_dbm: f64, interference_mw: f64, noise_dbm: f64) -> f64 {
    if wanted_dbm == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let w = 10f64.powf(wanted_dbm / 10.0);
    let n = 10f64.powf(noise_dbm / 10.0);
    10.0 * (w / (n + interference_mw)).log10()
}

fn mount_pair(scene: &Scene, id: u32) -> (AntennaMount, AntennaMount) {
    let v = scene.vehicle(id);
    let l = scene.canyon.length;
    (v.mount(MountLocation::Front, l), v.mount(MountLocation::Rear, l))
}

/// [OP] preamble_detect — full-fidelity variant over every enumerated path;
/// preambles are announced on both bumper mounts and the listener checks
/// both of its mounts.
pub fn preamble_detect(
    scene: &Scene,
    registry: &MaterialRegistry,
    radio: &RadioParams,
    mac: &MacParams,
    rx_vehicle: u32,
    tx_vehicle: u32,
    max_order: u8,
) -> Result<bool> {
    let geo = SceneGeometry::compile(scene, registry)?;
    let noise = noise_dbm(radio);
    let (tf, tr) = mount_pair(scene, tx_vehicle);
    let (rf, rr) = mount_pair(scene, rx_vehicle);
    let opts = TraceOptions { max_order };
    for t in [&tf, &tr] {
        for r in [&rf, &rr] {
            let paths = trace_paths(&geo, t.position, r.position, opts);
            for p in &paths {
                let g = crate::propagation::path_gain_db(p, t, r, radio, registry);
                if radio.tx_power_dbm + g - noise >= mac.preamble_snr_threshold_db {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

/// [OP] collision_domain — vehicles whose transmissions (front-bumper data
/// beam) arrive above the noise floor at any of this vehicle's mounts.
pub fn collision_domain(
    scene: &Scene,
    registry: &MaterialRegistry,
    radio: &RadioParams,
    vehicle: u32,
    max_order: u8,
) -> Result<Vec<u32>> {
    let geo = SceneGeometry::compile(scene, registry)?;
    let noise = noise_dbm(radio);
    let (vf, vr) = mount_pair(scene, vehicle);
    let opts = TraceOptions { max_order };
    let mut out = Vec::new();
    for u in &scene.vehicles {
        if u.id == vehicle {
            continue;
        }
        let uf = u.mount(MountLocation::Front, scene.canyon.length);
        let mut best = f64::NEG_INFINITY;
        for m in [&vf, &vr] {
            let paths = trace_paths(&geo, uf.position, m.position, opts);
            best = best.max(received_power_dbm(&paths, &uf, m, radio, registry));
        }
        if best > noise {
            out.push(u.id);
        }
    }
    Ok(out)
}

/// Per-replication aggregates for one sweep point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRecord {
    pub scheme: Scheme,
    pub setup: Setup,
    pub sweep_m: f64,
    pub replication: u64,
    /// Mean linear SINR over recorded slots (outage slots contribute 0).
    pub mean_sinr_linear: f64,
    pub mean_spectral_efficiency: f64,
    /// Mean linear interference-to-noise ratio over non-outage slots.
    pub mean_inr_linear: f64,
    pub mean_access_delay_s: f64,
    pub collision_domain_size: u32,
    pub radar_success_fraction: f64,
    pub recorded_slots: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ci {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

fn ci(samples: &[f64]) -> Ci {
    let vals: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    if vals.is_empty() {
        return Ci { mean: f64::NAN, lo: f64::NAN, hi: f64::NAN };
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() == 1 {
        return Ci { mean, lo: mean, hi: mean };
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = 1.96 * (var / n).sqrt();
    Ci { mean, lo: mean - half, hi: mean + half }
}

fn lin_to_db(v: f64) -> f64 {
    if v > 0.0 {
        10.0 * v.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Aggregated metrics for one (scheme, setup, sweep point).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub scheme: Scheme,
    pub setup: Setup,
    pub sweep_m: f64,
    pub replications: usize,
    /// SINR in dB; the CI is computed on linear means and converted.
    pub sinr_db: Ci,
    pub spectral_efficiency: Ci,
    pub inr_db: Ci,
    pub access_delay_s: Ci,
    pub collision_domain_size: Ci,
    pub radar_success_fraction: Ci,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub points: Vec<AggregatePoint>,
    pub records: Vec<MetricRecord>,
}

fn aggregate(group: &[MetricRecord]) -> AggregatePoint {
    let first = &group[0];
    let lin_sinr: Vec<f64> = group.iter().map(|r| r.mean_sinr_linear).collect();
    let se: Vec<f64> = group.iter().map(|r| r.mean_spectral_efficiency).collect();
    let inr: Vec<f64> = group.iter().map(|r| r.mean_inr_linear).collect();
    let delay: Vec<f64> = group.iter().map(|r| r.mean_access_delay_s).collect();
    let dom: Vec<f64> = group.iter().map(|r| r.collision_domain_size as f64).collect();
    let radar: Vec<f64> = group.iter().map(|r| r.radar_success_fraction).collect();
    let s = ci(&lin_sinr);
    let i = ci(&inr);
    AggregatePoint {
        scheme: first.scheme,
        setup: first.setup,
        sweep_m: first.sweep_m,
        replications: group.len(),
        sinr_db: Ci { mean: lin_to_db(s.mean), lo: lin_to_db(s.lo.max(0.0)), hi: lin_to_db(s.hi) },
        spectral_efficiency: ci(&se),
        inr_db: Ci { mean: lin_to_db(i.mean), lo: lin_to_db(i.lo.max(0.0)), hi: lin_to_db(i.hi) },
        access_delay_s: ci(&delay),
        collision_domain_size: ci(&dom),
        radar_success_fraction: ci(&radar),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn mix_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x243F6A8885A308D3u64;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

fn scheme_code(s: Scheme) -> u64 {
    match s {
        Scheme::Tdma => 0,
        Scheme::RaCsma => 1,
        Scheme::Uncoordinated => 2,
        Scheme::Adaptive => 3,
    }
}

fn setup_code(s: Setup) -> u64 {
    match s {
        Setup::Setup1 => 1,
        Setup::Setup2 => 2,
    }
}

/// Geometry-derived tables, valid until any vehicle moves beyond the cache
/// tolerance.
struct Epoch {
    /// Preamble detectability e -> l (dual mounts, LoS + canyon surfaces).
    detect: Vec<bool>,
    /// Front-beam coupling above noise w -> v, for collision resolution.
    coupled: Vec<bool>,
    /// Linear mW from u's front mount at the tagged receiver's link mount.
    row_rx_mw: Vec<f64>,
    /// Linear mW from u's front mount at the tagged transmitter's front
    /// mount (radar-sensing interference).
    row_txf_mw: Vec<f64>,
    /// Best received power from u's front beam at the tagged transmitter.
    row_tx_best_dbm: Vec<f64>,
    wanted_dbm: f64,
    front_neighbor: Vec<u32>,
    positions_x: Vec<f64>,
}

fn build_epoch(
    scene: &Scene,
    registry: &MaterialRegistry,
    radio: &RadioParams,
    mac: &MacParams,
    tx_id: u32,
    rx_id: u32,
    max_order: u8,
    need_detect: bool,
) -> Result<Epoch> {
    let geo = SceneGeometry::compile(scene, registry)?;
    let n = scene.vehicles.len();
    let l = scene.canyon.length;
    let noise = noise_dbm(radio);
    let det_floor = noise + mac.preamble_snr_threshold_db;
    let mounts: Vec<(AntennaMount, AntennaMount)> = scene
        .vehicles
        .iter()
        .map(|v| (v.mount(MountLocation::Front, l), v.mount(MountLocation::Rear, l)))
        .collect();

    let mut detect = Vec::new();
    let mut coupled = Vec::new();
    if need_detect {
        detect = vec![false; n * n];
        coupled = vec![false; n * n];
        for e in 0..n {
            for r in 0..n {
                if e == r {
                    continue;
                }
                let mut best_dual = f64::NEG_INFINITY;
                let mut best_front = f64::NEG_INFINITY;
                for (ti, t) in [&mounts[e].0, &mounts[e].1].into_iter().enumerate() {
                    for r_m in [&mounts[r].0, &mounts[r].1] {
                        let g = quick_link_gain_db(&geo, t, r_m, radio, registry);
                        best_dual = best_dual.max(g);
                        if ti == 0 {
                            best_front = best_front.max(g);
                        }
                    }
                }
                detect[e * n + r] = radio.tx_power_dbm + best_dual >= det_floor;
                coupled[e * n + r] = radio.tx_power_dbm + best_front > noise;
            }
        }
    }

    let opts = TraceOptions { max_order };
    let rx_mount = &mounts[rx_id as usize].1;
    let txf_mount = &mounts[tx_id as usize].0;
    let txr_mount = &mounts[tx_id as usize].1;
    let mut row_rx_mw = vec![0.0; n];
    let mut row_txf_mw = vec![0.0; n];
    let mut row_tx_best_dbm = vec![f64::NEG_INFINITY; n];
    let mut wanted_dbm = f64::NEG_INFINITY;
    for u in 0..n {
        let uf = &mounts[u].0;
        if u as u32 != rx_id {
            let paths = trace_paths(&geo, uf.position, rx_mount.position, opts);
            let p = received_power_dbm(&paths, uf, rx_mount, radio, registry);
            if u as u32 == tx_id {
                wanted_dbm = p;
            } else if p.is_finite() {
                row_rx_mw[u] = 10f64.powf(p / 10.0);
            }
        }
        if u as u32 != tx_id {
            let paths = trace_paths(&geo, uf.position, txf_mount.position, opts);
            let pf = received_power_dbm(&paths, uf, txf_mount, radio, registry);
            if pf.is_finite() {
                row_txf_mw[u] = 10f64.powf(pf / 10.0);
            }
            let paths = trace_paths(&geo, uf.position, txr_mount.position, opts);
            let pr = received_power_dbm(&paths, uf, txr_mount, radio, registry);
            row_tx_best_dbm[u] = pf.max(pr);
        }
    }

    // Nearest vehicle ahead in the same lane (cyclic), the data destination.
    let mut front_neighbor: Vec<u32> = (0..n as u32).collect();
    for lane in 0..scene.canyon.lane_count() {
        let heading = scene.canyon.lane_heading(lane);
        let mut ids: Vec<u32> = scene
            .vehicles
            .iter()
            .filter(|v| v.lane == lane)
            .map(|v| v.id)
            .collect();
        ids.sort_by(|&a, &b| {
            let xa = scene.vehicle(a).position.x * heading;
            let xb = scene.vehicle(b).position.x * heading;
            xa.partial_cmp(&xb).unwrap()
        });
        let m = ids.len();
        for (k, &id) in ids.iter().enumerate() {
            front_neighbor[id as usize] = ids[(k + 1) % m];
        }
    }

    Ok(Epoch {
        detect,
        coupled,
        row_rx_mw,
        row_txf_mw,
        row_tx_best_dbm,
        wanted_dbm,
        front_neighbor,
        positions_x: scene.vehicles.iter().map(|v| v.position.x).collect(),
    })
}

impl Epoch {
    fn stale(&self, scene: &Scene, tol: f64) -> bool {
        let l = scene.canyon.length;
        self.positions_x
            .iter()
            .zip(scene.vehicles.iter())
            .any(|(&x0, v)| {
                let d = (v.position.x - x0).abs();
                d.min(l - d) > tol
            })
    }
}

/// One independent replication: deploy, run the slot loop, aggregate.
pub fn run_replication(
    cfg: &SimConfig,
    registry: &MaterialRegistry,
    scheme: Scheme,
    setup: Setup,
    sweep_m: f64,
    replication: u64,
) -> Result<MetricRecord> {
    let seed = mix_seed(&[
        cfg.master_seed,
        scheme_code(scheme),
        setup_code(setup),
        sweep_m.to_bits(),
        replication,
    ]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let canyon = build_canyon(&cfg.canyon)?;
    let mut dp = cfg.deployment.clone();
    dp.setup = setup;
    let tagged_distance = match cfg.experiment {
        Experiment::Fig4 => sweep_m,
        Experiment::Fig5 => {
            dp.gap_m = sweep_m;
            sweep_m
        }
        Experiment::Single => dp.gap_m,
    };
    let tagged = TaggedPlacement {
        lane: cfg.tagged_lane,
        distance_m: tagged_distance,
        center_x: canyon.length / 2.0,
    };
    let mut scene = generate_deployment(&dp, &canyon, Some(tagged), rng.gen())?;
    let (tx_id, rx_id) = scene.tagged_link.unwrap();
    let n = scene.vehicles.len();

    let noise = noise_dbm(&cfg.radio);
    let noise_mw = 10f64.powf(noise / 10.0);
    let need_detect = scheme == Scheme::RaCsma;
    let mut epoch = build_epoch(
        &scene, registry, &cfg.radio, &cfg.mac, tx_id, rx_id, cfg.max_reflection_order,
        need_detect,
    )?;
    let domain_size = epoch
        .row_tx_best_dbm
        .iter()
        .filter(|&&p| p > noise)
        .count() as u32;

    // Per-scheme state.
    let p_interval = cfg.clock.inter_preamble_interval;
    let mut states: Vec<MacState> = (0..n as u32)
        .map(|v| {
            let jitter = rng.gen_range(0..p_interval);
            let mut s = MacState::new(v, &cfg.mac, &cfg.clock, jitter);
            if scheme == Scheme::Adaptive {
                s.backoff = rng.gen_range(0..s.cw);
            }
            s
        })
        .collect();
    // TDMA: round-robin over the tagged transmitter's collision domain;
    // vehicles outside it reuse the period by id (ideal synchronization, no
    // interference by scheme definition).
    let (tdma_period, tdma_rank): (u64, Vec<u64>) = {
        let mut members: Vec<u32> = (0..n as u32)
            .filter(|&u| u == tx_id || epoch.row_tx_best_dbm[u as usize] > noise)
            .collect();
        members.sort_unstable();
        let sched = tdma_schedule(&members);
        let period = sched.first().map(|s| s.2).unwrap_or(1) as u64;
        let mut rank: Vec<u64> = (0..n as u64).map(|v| v % period).collect();
        for (id, r, _) in sched {
            rank[id as usize] = r as u64;
        }
        (period, rank)
    };
    let mut tdma_emitted = vec![0u64; n];

    let warmup = (cfg.slots_per_replication as f64 * cfg.warmup_fraction).ceil() as u64;
    let slot_s = cfg.clock.slot_duration_s;

    // Metric accumulators.
    let mut sinr_sum = 0.0;
    let mut se_sum = 0.0;
    let mut recorded = 0u64;
    let mut inr_sum = 0.0;
    let mut inr_count = 0u64;
    let mut delay_samples: Vec<f64> = Vec::new();
    let mut radar_ok = 0.0f64;
    let mut radar_total = 0u64;

    // Slot-loop scratch.
    let mut active = vec![false; n];
    let mut category: Vec<FrameCategory> = vec![FrameCategory::Data; n];
    let mut preamble_now: Vec<bool> = vec![false; n];
    let mut started_now: Vec<bool> = vec![false; n];
    let mut detections: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut collided = vec![false; n];
    let mut frame_ok = vec![true; n];
    let mut radar_clean = true;
    let mut last_tagged_tx_slot: Option<u64> = None;
    let mut tagged_reservation_ends;

    for slot in 0..cfg.slots_per_replication {
        advance_positions(&mut scene, slot_s);
        if epoch.stale(&scene, cfg.path_cache_tolerance_m) {
            epoch = build_epoch(
                &scene, registry, &cfg.radio, &cfg.mac, tx_id, rx_id,
                cfg.max_reflection_order, need_detect,
            )?;
        }

        for v in 0..n {
            active[v] = false;
            preamble_now[v] = false;
            started_now[v] = false;
        }
        tagged_reservation_ends = true; // slot-granular schemes

        match scheme {
            Scheme::RaCsma => {
                for v in 0..n {
                    let det = std::mem::take(&mut detections[v]);
                    let a = ra_csma_step(&mut states[v], slot, &cfg.clock, &det, &mut rng);
                    if let MacAction::Transmit { category: c, preamble, starts } = a {
                        active[v] = true;
                        category[v] = c;
                        preamble_now[v] = preamble;
                        started_now[v] = starts;
                    }
                }
                // Same-slot starts within coupling range collide.
                for v in 0..n {
                    if !started_now[v] {
                        continue;
                    }
                    collided[v] = (0..n).any(|w| {
                        w != v
                            && started_now[w]
                            && (epoch.coupled[w * n + v] || epoch.coupled[v * n + w])
                    });
                }
                // Preamble emissions inform listeners on the next slot.
                for e in 0..n {
                    if !(active[e] && preamble_now[e]) {
                        continue;
                    }
                    for l in 0..n {
                        if l == e || states[l].is_deaf() {
                            continue;
                        }
                        if epoch.detect[e * n + l] {
                            detections[l].push(e as u32);
                        }
                    }
                }
                tagged_reservation_ends =
                    active[tx_id as usize] && reservation_ends(&states[tx_id as usize], slot);
                for v in 0..n {
                    if active[v] && reservation_ends(&states[v], slot) {
                        let success = !collided[v];
                        finish_reservation(&mut states[v], slot, &cfg.clock, &cfg.mac, success, &mut rng);
                        collided[v] = false;
                    }
                }
            }
            Scheme::Tdma => {
                for v in 0..n {
                    if slot % tdma_period == tdma_rank[v] {
                        active[v] = true;
                        tdma_emitted[v] += 1;
                        let k = tdma_emitted[v] as f64;
                        category[v] = if (k * cfg.mac.radar_duty).floor()
                            > ((k - 1.0) * cfg.mac.radar_duty).floor()
                        {
                            FrameCategory::Radar
                        } else {
                            FrameCategory::Data
                        };
                    }
                }
            }
            Scheme::Uncoordinated => {
                for v in 0..n {
                    let a = uncoordinated_step(&mut states[v], &cfg.mac, &mut rng);
                    if let MacAction::Transmit { category: c, .. } = a {
                        active[v] = true;
                        category[v] = c;
                    }
                }
            }
            Scheme::Adaptive => {
                for v in 0..n {
                    let a = adaptive_backoff_step(&mut states[v], slot);
                    if let MacAction::Transmit { category: c, starts, .. } = a {
                        active[v] = true;
                        category[v] = c;
                        started_now[v] = starts;
                        if starts {
                            frame_ok[v] = true;
                        }
                    }
                }
                tagged_reservation_ends =
                    active[tx_id as usize] && adaptive_frame_ends(&states[tx_id as usize], slot);
                // Deafness feedback: a frame fails when its destination was
                // itself occupying the channel during any overlap slot. The
                // tagged transmitter additionally gets the exact SINR check
                // below.
                for v in 0..n {
                    if active[v] {
                        let dst = epoch.front_neighbor[v] as usize;
                        if dst != v && active[dst] {
                            frame_ok[v] = false;
                        }
                    }
                }
            }
        }

        // Tagged-link bookkeeping.
        let tx = tx_id as usize;
        let rx = rx_id as usize;
        let record_now = slot >= warmup;

        // Radar reservation protection for the tagged transmitter.
        if active[tx] && category[tx] == FrameCategory::Radar {
            let corrupted = (0..n).any(|w| {
                w != tx && active[w] && epoch.row_txf_mw[w] > noise_mw
            });
            if corrupted {
                radar_clean = false;
            }
            if tagged_reservation_ends {
                if record_now {
                    radar_total += 1;
                    if radar_clean {
                        radar_ok += 1.0;
                    }
                }
                radar_clean = true;
            }
        }

        // Adaptive feedback at frame ends (needs the SINR verdict for the
        // tagged transmitter, so it happens after interference is known).
        if scheme == Scheme::Adaptive {
            for v in 0..n {
                if active[v] && adaptive_frame_ends(&states[v], slot) {
                    let mut success = frame_ok[v];
                    if v == tx {
                        // Exact criterion on the tagged link.
                        success = frame_ok[v]
                            && tagged_slot_sinr(&epoch, &active, tx, rx, noise)
                                .map(|s| s >= cfg.mac.decode_sinr_threshold_db)
                                .unwrap_or(false);
                    }
                    adaptive_feedback(&mut states[v], slot, &cfg.mac, success, &mut rng);
                    frame_ok[v] = true;
                }
            }
        }

        // Record tagged data payload slots.
        if record_now && active[tx] && category[tx] == FrameCategory::Data && !preamble_now[tx] {
            recorded += 1;
            let rx_busy = match scheme {
                Scheme::Tdma => slot % tdma_period == tdma_rank[rx],
                _ => active[rx],
            };
            let sinr_db = if rx_busy {
                f64::NEG_INFINITY
            } else {
                match scheme {
                    Scheme::Tdma => sinr_db_from_powers(epoch.wanted_dbm, 0.0, noise),
                    _ => {
                        let mut i_mw = 0.0;
                        for (w, &on) in active.iter().enumerate() {
                            if on && w != tx && w != rx {
                                i_mw += epoch.row_rx_mw[w];
                            }
                        }
                        let s = sinr_db_from_powers(epoch.wanted_dbm, i_mw, noise);
                        if s.is_finite() {
                            inr_sum += i_mw / noise_mw;
                            inr_count += 1;
                        }
                        s
                    }
                }
            };
            if sinr_db.is_finite() {
                sinr_sum += 10f64.powf(sinr_db / 10.0);
                if scheme == Scheme::Tdma {
                    inr_count += 1; // TDMA: no interference by definition
                }
            }
            se_sum += spectral_efficiency_bps_hz(sinr_db);
            // Access delay for slot-granular schemes: idle run before this
            // transmission.
            if matches!(scheme, Scheme::Tdma | Scheme::Uncoordinated) {
                if let Some(prev) = last_tagged_tx_slot {
                    delay_samples.push((slot - prev - 1) as f64 * slot_s);
                }
            }
        }
        if active[tx] {
            last_tagged_tx_slot = Some(slot);
        }
    }

    // Access delays from the MAC log for the contention schemes.
    if matches!(scheme, Scheme::RaCsma | Scheme::Adaptive) {
        for &(fire_slot, total_slots, _backoff) in &states[tx_id as usize].access_log {
            if fire_slot >= warmup {
                delay_samples.push(total_slots as f64 * slot_s);
            }
        }
    }

    let mean = |sum: f64, n: u64| if n > 0 { sum / n as f64 } else { f64::NAN };
    Ok(MetricRecord {
        scheme,
        setup,
        sweep_m,
        replication,
        mean_sinr_linear: if recorded > 0 { sinr_sum / recorded as f64 } else { f64::NAN },
        mean_spectral_efficiency: if recorded > 0 { se_sum / recorded as f64 } else { f64::NAN },
        mean_inr_linear: mean(inr_sum, inr_count),
        mean_access_delay_s: if delay_samples.is_empty() {
            f64::NAN
        } else {
            delay_samples.iter().sum::<f64>() / delay_samples.len() as f64
        },
        collision_domain_size: domain_size,
        radar_success_fraction: if radar_total > 0 {
            radar_ok / radar_total as f64
        } else {
            f64::NAN
        },
        recorded_slots: recorded,
    })
}

fn tagged_slot_sinr(
    epoch: &Epoch,
    active: &[bool],
    tx: usize,
    rx: usize,
    noise_db: f64,
) -> Option<f64> {
    if active[rx] {
        return None;
    }
    let mut i_mw = 0.0;
    for (w, &on) in active.iter().enumerate() {
        if on && w != tx && w != rx {
            i_mw += epoch.row_rx_mw[w];
        }
    }
    Some(sinr_db_from_powers(epoch.wanted_dbm, i_mw, noise_db))
}

/// [OP] run_experiment — the full Monte-Carlo sweep. Replications execute in
/// parallel; aggregation runs in deterministic job order so the output is
/// independent of the worker count.
pub fn run_experiment(cfg: &SimConfig, registry: &MaterialRegistry) -> Result<ExperimentResult> {
    cfg.validate()?;
    let sweeps: Vec<f64> = match cfg.experiment {
        Experiment::Fig4 => cfg.fig4_distances_m.clone(),
        Experiment::Fig5 => cfg.fig5_gaps_m.clone(),
        Experiment::Single => vec![cfg.deployment.gap_m],
    };
    let setups: Vec<Setup> = match cfg.experiment {
        Experiment::Fig5 => vec![Setup::Setup1, Setup::Setup2],
        _ => vec![cfg.deployment.setup],
    };

    let mut jobs = Vec::new();
    for &scheme in &cfg.schemes {
        for &setup in &setups {
            for &sweep in &sweeps {
                for rep in 0..cfg.replications as u64 {
                    jobs.push((scheme, setup, sweep, rep));
                }
            }
        }
    }
    let records: Vec<MetricRecord> = jobs
        .par_iter()
        .map(|&(scheme, setup, sweep, rep)| {
            run_replication(cfg, registry, scheme, setup, sweep, rep)
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    let mut i = 0;
    while i < records.len() {
        let j = (i + cfg.replications).min(records.len());
        points.push(aggregate(&records[i..j]));
        i = j;
    }
    Ok(ExperimentResult { points, records })
}
