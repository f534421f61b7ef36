//! Slot-level Monte Carlo simulation of one beaconing period.
//!
//! Independent check on the analytical chain, sharing nothing with it but
//! the geometry primitives:
//!
//! - nodes are a Poisson population on a disc around the tagged transmitter
//!   (vT), which sits at the center of the deployment square;
//! - every node runs the modified backoff: draw uniform on `[0, CW - 1]`,
//!   decrement only on slots its own neighborhood leaves idle, transmit in
//!   the slot after the last decrement, drop the beacon if it cannot finish
//!   inside the period;
//! - contention is resolved event-driven and exactly: the globally earliest
//!   tentative start commits (ties commit together; they cannot sense each
//!   other), everyone affected rescans. Committed starts are nondecreasing,
//!   so the loop can stop once nothing can overlap vT's beacon anymore;
//! - outcomes are classified geometrically: a same-slot start inside the
//!   sensing radius is a SYNC collision, a time-overlapping transmission
//!   from the hidden annulus `(r_cs, 2 r_cs]` is an HN collision, and a
//!   receiver hears the beacon iff it is not itself transmitting and no
//!   time-overlapping transmitter (of any technology) sits within `r_cs`
//!   of it.
//!
//! Truncations, both documented and deliberate: only nodes within
//! `r_cs + max(r_cs, r_tx)` of vT are simulated (farther nodes can touch
//! neither vT's countdown nor any receiver), and transmissions begun before
//! vT's period are not modeled (their overlap mass is `l_bcn / L`-small).
//!
//! Within-sensing-range overlap needs no slot bookkeeping beyond starts:
//! a countdown can never complete on a slot a committed neighbor already
//! occupies, so nodes that *count down* collide in range only by landing
//! in the same slot. The one other channel is a zero-backoff draw, which
//! transmits at its period start without sensing at all and can therefore
//! start one slot into a neighbor's beacon. Both are failures of carrier
//! sensing between mutually audible nodes, and both count as SYNC.
//!
//! Interferers are independent per-node processes sampled on the DSRC slot
//! grid. A transmission makes a DSRC slot busy (or corrupts a reception)
//! iff it covers the slot's start instant: a Wi-Fi frame beginning inside
//! slot 1 therefore hits slot 2 first, and a 1 ms C-V2X subframe spans
//! `1000 / 66.7 ~ 15` slot starts, matching the per-slot conflict maps.
//! Wi-Fi frames occupy the whole channel; C-V2X subframes corrupt each
//! covered slot with the spectral overlap fraction as probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::geometry::{collision_area, Rat};
use crate::interference::{
    cv2x_rb_conflict, CoexScenario, PeriodAlignment, RatProfile, CV2X_BANDWIDTH_MHZ,
    CV2X_RBS_PER_VEHICLE, CV2X_RB_KHZ, CV2X_SUBFRAME_US, DSRC_CCH_BANDWIDTH_MHZ,
    WIFI_CONTENTION_WINDOW, WIFI_FRAME_SLOTS, WIFI_SLOT_US,
};
use crate::temporal::MacParams;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Outcome types
// ---------------------------------------------------------------------------

/// What happened to the tagged transmitter during one simulated period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOutcome {
    /// vT's beacon started (and finished) within its period.
    pub transmitted: bool,
    /// Complement of `transmitted`: the countdown did not fit the period.
    pub expired: bool,
    /// Some node inside the sensing radius transmitted over vT's beacon:
    /// a same-slot pick, or a zero-backoff start while it was on air.
    pub sync_collided: bool,
    /// Some node in the hidden annulus overlapped vT's beacon in time.
    pub hn_collided: bool,
    /// Ground blanked by colliding transmissions, in square meters: the
    /// collision lens at the collider separation when there is one collider,
    /// otherwise the corrupted-receiver fraction of the coverage disc.
    pub affected_area_m2: f64,
    /// Nodes within the transmission radius of vT.
    pub receivers_total: usize,
    /// Receivers that heard the beacon cleanly.
    pub receivers_ok: usize,
}

/// Scalar Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimEstimate {
    pub mean: f64,
    /// Sample standard deviation divided by `sqrt(n_trials)`.
    pub stderr: f64,
    /// Samples that entered the estimator. Ratio quantities (`PHn`,
    /// `Stpdr`) skip trials that produced no receivers.
    pub n_trials: usize,
}

/// What `estimate` measures over a batch of trials.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quantity {
    /// Fraction of trials whose beacon started within the period.
    PStart,
    /// Fraction of trials with a collision inside the sensing radius.
    PSync,
    /// Mean fraction of receivers corrupted by hidden transmitters
    /// (zero when the beacon expired; trials without receivers skipped).
    PHn,
    /// Fraction of trials delivered cleanly: transmitted and collision-free.
    Pdr,
    /// Mean fraction of receivers reached (zero when expired; trials
    /// without receivers skipped).
    Stpdr,
    /// Per-trial count of nodes inside the sensing disc.
    NCsHist,
    /// Corner-anchored separations in the deployment square.
    LCdf,
    /// Collision-lens areas at corner-anchored separations in an
    /// `r_cs`-side square.
    ACdf,
}

/// Result of `estimate`: scalar quantities carry a standard error,
/// distribution quantities come back as sorted samples (an empirical CDF).
#[derive(Clone, Debug, PartialEq)]
pub enum Estimate {
    Scalar(SimEstimate),
    Samples(Vec<f64>),
}

impl Estimate {
    pub fn scalar(&self) -> Option<SimEstimate> {
        match self {
            Estimate::Scalar(e) => Some(*e),
            Estimate::Samples(_) => None,
        }
    }

    pub fn samples(&self) -> Option<&[f64]> {
        match self {
            Estimate::Scalar(_) => None,
            Estimate::Samples(s) => Some(s),
        }
    }
}

// ---------------------------------------------------------------------------
// Seed derivation
// ---------------------------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent per-trial stream: trials of one batch never share state, so
/// they may run in any order or in parallel.
fn trial_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

// ---------------------------------------------------------------------------
// Slot occupancy masks
// ---------------------------------------------------------------------------

/// Busy flags over the simulation horizon, one bit per slot.
#[derive(Clone)]
struct SlotMask {
    words: Vec<u64>,
}

impl SlotMask {
    fn new(slots: u32) -> Self {
        SlotMask { words: vec![0; (slots as usize + 63) / 64] }
    }

    #[inline]
    fn set(&mut self, slot: u32) {
        self.words[(slot >> 6) as usize] |= 1u64 << (slot & 63);
    }

    fn set_range(&mut self, start: u32, len: u32) {
        for s in start..start + len {
            self.set(s);
        }
    }
}

/// Slot where a node that still owes `backoff` idle slots, contending from
/// `phase` against `mask`, begins its `l_bcn`-slot transmission; `None` if
/// the transmission cannot finish by `phase + window`. A zero backoff
/// transmits immediately: the countdown spends no idle slot at all.
fn landing_slot(mask: &SlotMask, phase: u32, backoff: u32, window: u32, l_bcn: u32) -> Option<u32> {
    let latest = phase + window - l_bcn;
    if backoff == 0 {
        return Some(phase);
    }
    let mut remaining = backoff;
    let mut t = phase;
    let end = phase + window;
    while t < end {
        let span = (64 - (t & 63)).min(end - t);
        let live = mask.words[(t >> 6) as usize] >> (t & 63);
        let valid = if span == 64 { !0u64 } else { (1u64 << span) - 1 };
        let idle_bits = !live & valid;
        let idle = idle_bits.count_ones();
        if idle < remaining {
            remaining -= idle;
            t += span;
            continue;
        }
        // The countdown ends inside this word: select its remaining-th
        // idle bit.
        let mut bits = idle_bits;
        for _ in 1..remaining {
            bits &= bits - 1;
        }
        let s = t + bits.trailing_zeros() + 1;
        return (s <= latest).then_some(s);
    }
    None
}

// ---------------------------------------------------------------------------
// Interferer processes
// ---------------------------------------------------------------------------

/// DSRC slots whose start instant falls inside `[from_us, to_us)`.
fn covered_slots(from_us: f64, to_us: f64, slot_us: f64, horizon: u32, out: &mut Vec<u32>) {
    let first = (from_us / slot_us).ceil().max(0.0) as u32;
    let last = (to_us / slot_us).ceil().min(horizon as f64) as u32;
    out.extend(first..last);
}

/// One Wi-Fi node's transmission slots over the horizon: free-running
/// backoff-frame renewal cycles on its own 9 us grid with a uniform phase.
/// Inter-Wi-Fi contention is not simulated.
fn wifi_node_slots(rng: &mut ChaCha8Rng, dsrc_slot_us: f64, horizon: u32) -> Vec<u32> {
    let horizon_us = horizon as f64 * dsrc_slot_us;
    let frame_us = WIFI_FRAME_SLOTS as f64 * WIFI_SLOT_US;
    let mut out = Vec::new();
    let mut t_us = rng.gen::<f64>() * WIFI_SLOT_US;
    while t_us < horizon_us {
        let backoff: u32 = rng.gen_range(0..WIFI_CONTENTION_WINDOW);
        t_us += backoff as f64 * WIFI_SLOT_US;
        if t_us >= horizon_us {
            break;
        }
        covered_slots(t_us, t_us + frame_us, dsrc_slot_us, horizon, &mut out);
        t_us += frame_us;
    }
    out
}

/// One C-V2X node's slots over the horizon. Subframes are synchronous with
/// the period start; each is independently active. `corruption` filters the
/// covered slots down by the spectral overlap fraction; activity traces
/// keep them all.
fn cv2x_node_slots(
    rng: &mut ChaCha8Rng,
    busy_prob: f64,
    dsrc_slot_us: f64,
    horizon: u32,
    corruption: Option<f64>,
) -> Vec<u32> {
    let horizon_us = horizon as f64 * dsrc_slot_us;
    let subframes = (horizon_us / CV2X_SUBFRAME_US).ceil() as u32;
    let mut out = Vec::new();
    let mut covered = Vec::new();
    for q in 0..subframes {
        if !rng.gen_bool(busy_prob) {
            continue;
        }
        covered.clear();
        let start = q as f64 * CV2X_SUBFRAME_US;
        covered_slots(start, start + CV2X_SUBFRAME_US, dsrc_slot_us, horizon, &mut covered);
        match corruption {
            None => out.extend_from_slice(&covered),
            Some(p) => out.extend(covered.iter().copied().filter(|_| rng.gen::<f64>() < p)),
        }
    }
    out
}

/// Spectral overlap fraction a C-V2X subframe applies per covered DSRC slot.
fn cv2x_overlap_fraction() -> f64 {
    cv2x_rb_conflict(DSRC_CCH_BANDWIDTH_MHZ, CV2X_RB_KHZ, CV2X_RBS_PER_VEHICLE, CV2X_BANDWIDTH_MHZ)
        .map(|m| m.overlap_fraction)
        .unwrap_or(1.0)
}

/// Activity trace of a single interferer node over one beaconing period:
/// `trace[t]` is true iff an active transmission of that node covers slot
/// `t`'s start instant. Draw order per node is fixed: Wi-Fi draws its grid
/// phase, then alternating backoffs; C-V2X draws one activity flag per
/// subframe.
pub fn interferer_process(profile: &RatProfile, mac: &MacParams, seed: u64) -> Result<Vec<bool>> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = mac.slots_per_period();
    let slots = match profile.rat {
        Rat::Dsrc => {
            return Err(Error::domain(
                "interferer_process",
                "the primary technology is not an interferer".to_string(),
            ))
        }
        Rat::Wifi => wifi_node_slots(&mut rng, mac.slot_us(), horizon),
        Rat::Cv2x => cv2x_node_slots(
            &mut rng,
            profile.busy_prob_override.unwrap_or(0.0),
            mac.slot_us(),
            horizon,
            None,
        ),
    };
    let mut trace = vec![false; horizon as usize];
    for s in slots {
        trace[s as usize] = true;
    }
    Ok(trace)
}

// ---------------------------------------------------------------------------
// Single-trial simulation
// ---------------------------------------------------------------------------

/// Sampled node positions for one trial, in coordinates centered on vT.
/// `dsrc[0]` is vT itself.
struct Placement {
    dsrc: Vec<[f64; 2]>,
    wifi: Vec<[f64; 2]>,
    cv2x: Vec<[f64; 2]>,
}

fn sample_disc(rng: &mut ChaCha8Rng, intensity_per_m2: f64, radius_m: f64) -> Result<Vec<[f64; 2]>> {
    let mean = intensity_per_m2 * PI * radius_m * radius_m;
    let count = if mean == 0.0 {
        0
    } else {
        let poisson = rand_distr::Poisson::new(mean)
            .map_err(|e| Error::domain("sample_disc", format!("invalid Poisson mean {mean}: {e}")))?;
        rng.sample(poisson) as usize
    };
    Ok((0..count)
        .map(|_| {
            let r = radius_m * rng.gen::<f64>().sqrt();
            let th = 2.0 * PI * rng.gen::<f64>();
            [r * th.cos(), r * th.sin()]
        })
        .collect())
}

fn sample_placement(scenario: &CoexScenario, rng: &mut ChaCha8Rng) -> Result<Placement> {
    let radii = scenario.radii;
    let region = radii.carrier_sense_m() + radii.carrier_sense_m().max(radii.transmission_m());
    let mut dsrc = vec![[0.0, 0.0]];
    dsrc.extend(sample_disc(rng, scenario.dsrc.intensity_per_m2, region)?);
    let mut wifi = Vec::new();
    let mut cv2x = Vec::new();
    for p in &scenario.interferers {
        let nodes = sample_disc(rng, p.intensity_per_m2, region)?;
        match p.rat {
            Rat::Wifi => wifi = nodes,
            Rat::Cv2x => cv2x = nodes,
            Rat::Dsrc => unreachable!("validated scenario has no dsrc interferer"),
        }
    }
    Ok(Placement { dsrc, wifi, cv2x })
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Trial outcome plus the extra counter the hidden-node estimator needs.
struct RichOutcome {
    outcome: TrialOutcome,
    /// Receivers corrupted by transmitters hidden from vT.
    hidden_corrupted: usize,
}

fn simulate(placement: &Placement, scenario: &CoexScenario, rng: &mut ChaCha8Rng) -> Result<RichOutcome> {
    let mac = &scenario.mac;
    let period = mac.slots_per_period();
    let l_bcn = mac.beacon_slots();
    let horizon = 2 * period;
    let r_cs = scenario.radii.carrier_sense_m();
    let r_tx = scenario.radii.transmission_m();
    let n = placement.dsrc.len();

    // Phases and backoffs. vT observes the period [0, L); desynchronized
    // competitors contend somewhere inside their own shifted window.
    let phases: Vec<u32> = (0..n)
        .map(|j| match scenario.period_alignment {
            _ if j == 0 => 0,
            PeriodAlignment::Aligned => 0,
            PeriodAlignment::Desynchronized => rng.gen_range(0..period),
        })
        .collect();
    let backoffs: Vec<u32> = (0..n).map(|_| rng.gen_range(0..mac.cw())).collect();

    // Interferer transmission slots, one draw per physical node so every
    // DSRC node in range senses the same signal.
    let overlap = cv2x_overlap_fraction();
    let wifi_slots: Vec<Vec<u32>> =
        placement.wifi.iter().map(|_| wifi_node_slots(rng, mac.slot_us(), horizon)).collect();
    let cv2x_busy = scenario.cv2x().and_then(|p| p.busy_prob_override).unwrap_or(0.0);
    let cv2x_slots: Vec<Vec<u32>> = placement
        .cv2x
        .iter()
        .map(|_| cv2x_node_slots(rng, cv2x_busy, mac.slot_us(), horizon, Some(overlap)))
        .collect();

    // Per-node busy masks, seeded with every in-range interferer.
    let r_cs2 = r_cs * r_cs;
    let mut masks: Vec<SlotMask> = (0..n).map(|_| SlotMask::new(horizon)).collect();
    for (j, mask) in masks.iter_mut().enumerate() {
        let pos = placement.dsrc[j];
        for (i, slots) in placement.wifi.iter().zip(&wifi_slots) {
            if dist2(*i, pos) <= r_cs2 {
                for &s in slots {
                    mask.set(s);
                }
            }
        }
        for (i, slots) in placement.cv2x.iter().zip(&cv2x_slots) {
            if dist2(*i, pos) <= r_cs2 {
                for &s in slots {
                    mask.set(s);
                }
            }
        }
    }

    // Sensing adjacency among DSRC nodes.
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
    for j in 0..n {
        for k in j + 1..n {
            if dist2(placement.dsrc[j], placement.dsrc[k]) <= r_cs2 {
                neighbors[j].push(k as u32);
                neighbors[k].push(j as u32);
            }
        }
    }

    // Event-driven contention. Committed starts are nondecreasing, so once
    // vT is resolved and the earliest pending start can no longer overlap
    // its beacon, the rest of the period is irrelevant.
    const UNRESOLVED: u32 = u32::MAX;
    let mut start: Vec<u32> = vec![UNRESOLVED; n]; // committed start slot
    let mut tentative: Vec<Option<u32>> =
        (0..n).map(|j| landing_slot(&masks[j], phases[j], backoffs[j], period, l_bcn)).collect();
    let mut pending: Vec<bool> = tentative.iter().map(Option::is_some).collect();
    let mut committers: Vec<u32> = Vec::new();
    loop {
        if !pending[0] && start[0] == UNRESOLVED {
            break; // vT expired; nothing else can matter
        }
        let mut s_min = u32::MAX;
        for j in 0..n {
            if pending[j] {
                s_min = s_min.min(tentative[j].expect("pending node has a tentative start"));
            }
        }
        if s_min == u32::MAX {
            break;
        }
        if start[0] != UNRESOLVED && s_min > start[0] + l_bcn - 1 {
            break; // beyond any overlap with vT's beacon
        }
        committers.clear();
        for j in 0..n {
            if pending[j] && tentative[j] == Some(s_min) {
                pending[j] = false;
                start[j] = s_min;
                committers.push(j as u32);
            }
        }
        // The new transmissions occupy their slots for everyone in range;
        // affected pending nodes rescan against the grown mask.
        for &c in &committers {
            for &k in &neighbors[c as usize] {
                let k = k as usize;
                masks[k].set_range(s_min, l_bcn);
                if pending[k] {
                    tentative[k] = landing_slot(&masks[k], phases[k], backoffs[k], period, l_bcn);
                    pending[k] = tentative[k].is_some();
                }
            }
        }
    }

    // Classification from vT's perspective.
    let transmitted = start[0] != UNRESOLVED;
    let s_vt = start[0];
    let r_tx2 = r_tx * r_tx;
    let annulus2 = 4.0 * r_cs2;

    let overlaps_vt = |s: u32| -> bool { s != UNRESOLVED && s.abs_diff(s_vt) <= l_bcn - 1 };

    let mut sync_collided = false;
    let mut hn_collided = false;
    let mut colliders: Vec<usize> = Vec::new();
    if transmitted {
        for j in 1..n {
            if !overlaps_vt(start[j]) {
                continue;
            }
            colliders.push(j);
            let d2 = dist2(placement.dsrc[j], placement.dsrc[0]);
            if d2 <= r_cs2 {
                // Same slot, or a blind zero-backoff start one slot in.
                sync_collided = true;
            } else if d2 <= annulus2 {
                hn_collided = true;
            }
        }
    }

    // Receiver accounting. A receiver is lost to its own transmission, to
    // any DSRC collider in range, or to an interferer covering the beacon.
    let receivers: Vec<usize> =
        (1..n).filter(|&j| dist2(placement.dsrc[j], placement.dsrc[0]) <= r_tx2).collect();
    let receivers_total = receivers.len();
    let mut receivers_ok = 0usize;
    let mut dsrc_corrupted = 0usize;
    let mut hidden_corrupted = 0usize;
    if transmitted {
        let beacon = s_vt..s_vt + l_bcn;
        let wifi_hit: Vec<bool> = wifi_slots
            .iter()
            .map(|slots| slots.iter().any(|s| beacon.contains(s)))
            .collect();
        let cv2x_hit: Vec<bool> = cv2x_slots
            .iter()
            .map(|slots| slots.iter().any(|s| beacon.contains(s)))
            .collect();
        for &k in &receivers {
            let pos = placement.dsrc[k];
            let self_tx = overlaps_vt(start[k]);
            let dsrc_hit = self_tx
                || colliders
                    .iter()
                    .any(|&c| c != k && dist2(placement.dsrc[c], pos) <= r_cs2);
            let hidden_hit = colliders.iter().any(|&c| {
                c != k
                    && dist2(placement.dsrc[c], placement.dsrc[0]) > r_cs2
                    && dist2(placement.dsrc[c], pos) <= r_cs2
            });
            let interferer_hit = placement
                .wifi
                .iter()
                .zip(&wifi_hit)
                .chain(placement.cv2x.iter().zip(&cv2x_hit))
                .any(|(i, hit)| *hit && dist2(*i, pos) <= r_cs2);
            if dsrc_hit {
                dsrc_corrupted += 1;
            }
            if hidden_hit {
                hidden_corrupted += 1;
            }
            if !dsrc_hit && !interferer_hit {
                receivers_ok += 1;
            }
        }
    }

    // Blanked ground: the exact lens for the single-collider case the
    // analysis studies, receiver counting for pile-ups.
    let affected_area_m2 = if !transmitted || colliders.is_empty() {
        0.0
    } else if colliders.len() == 1 {
        let l = dist2(placement.dsrc[colliders[0]], placement.dsrc[0]).sqrt();
        collision_area(l.min(2.0 * r_cs), scenario.radii)?
    } else if receivers_total == 0 {
        0.0
    } else {
        (dsrc_corrupted as f64 / receivers_total as f64) * scenario.radii.coverage_area_m2()
    }
    .min(scenario.radii.sense_area_m2());

    Ok(RichOutcome {
        outcome: TrialOutcome {
            transmitted,
            expired: !transmitted,
            sync_collided,
            hn_collided,
            affected_area_m2,
            receivers_total,
            receivers_ok,
        },
        hidden_corrupted,
    })
}

fn check_preconditions(scenario: &CoexScenario) -> Result<()> {
    scenario.validate()?;
    let needed = 4.0 * scenario.radii.carrier_sense_m();
    if scenario.space.side_m() < needed {
        return Err(Error::domain(
            "run_trial",
            format!(
                "side {} m cannot hold an unclipped neighborhood of a centered node; need at least {needed} m",
                scenario.space.side_m()
            ),
        ));
    }
    Ok(())
}

fn run_trial_rich(scenario: &CoexScenario, seed: u64) -> Result<RichOutcome> {
    check_preconditions(scenario)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let placement = sample_placement(scenario, &mut rng)?;
    simulate(&placement, scenario, &mut rng)
}

/// Simulates one beaconing period and reports vT's outcome.
///
/// Identical seeds produce identical outcomes. Draw order is fixed: node
/// counts and positions (DSRC, then each configured interferer), phases,
/// backoffs, then interferer transmission processes.
pub fn run_trial(scenario: &CoexScenario, seed: u64) -> Result<TrialOutcome> {
    Ok(run_trial_rich(scenario, seed)?.outcome)
}

// ---------------------------------------------------------------------------
// Batch estimation
// ---------------------------------------------------------------------------

fn scalar_estimate(samples: &[f64]) -> Result<SimEstimate> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::no_convergence(
            "estimate",
            format!("{n} contributing trials cannot carry a standard error"),
        ));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(SimEstimate { mean, stderr: (var / n as f64).sqrt(), n_trials: n })
}

/// Runs `n_trials` independent trials and reduces them to the requested
/// quantity. Trials run in parallel; the reduction folds the per-trial
/// records in index order, so the result does not depend on scheduling.
pub fn estimate(
    scenario: &CoexScenario,
    quantity: Quantity,
    n_trials: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_trials < 100 {
        return Err(Error::domain(
            "estimate",
            format!("{n_trials} trials cannot support an estimate; need at least 100"),
        ));
    }
    check_preconditions(scenario)?;

    // Distribution quantities need geometry only, not contention.
    match quantity {
        Quantity::NCsHist => {
            let r_cs = scenario.radii.carrier_sense_m();
            let region = r_cs + r_cs.max(scenario.radii.transmission_m());
            let mut counts: Vec<f64> = (0..n_trials)
                .into_par_iter()
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, i as u64));
                    let nodes = sample_disc(&mut rng, scenario.dsrc.intensity_per_m2, region)?;
                    Ok(nodes.iter().filter(|p| dist2(**p, [0.0, 0.0]) <= r_cs * r_cs).count() as f64)
                })
                .collect::<Result<_>>()?;
            counts.sort_by(f64::total_cmp);
            return Ok(Estimate::Samples(counts));
        }
        Quantity::LCdf => {
            let side = scenario.space.side_m();
            let mut ls: Vec<f64> = (0..n_trials)
                .into_par_iter()
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, i as u64));
                    let (x, y) = (rng.gen::<f64>() * side, rng.gen::<f64>() * side);
                    x.hypot(y)
                })
                .collect();
            ls.sort_by(f64::total_cmp);
            return Ok(Estimate::Samples(ls));
        }
        Quantity::ACdf => {
            let side = scenario.radii.carrier_sense_m();
            let mut areas: Vec<f64> = (0..n_trials)
                .into_par_iter()
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, i as u64));
                    let l = (rng.gen::<f64>() * side).hypot(rng.gen::<f64>() * side);
                    collision_area(l, scenario.radii)
                })
                .collect::<Result<_>>()?;
            areas.sort_by(f64::total_cmp);
            return Ok(Estimate::Samples(areas));
        }
        _ => {}
    }

    let records: Vec<RichOutcome> = (0..n_trials)
        .into_par_iter()
        .map(|i| run_trial_rich(scenario, trial_seed(seed, i as u64)))
        .collect::<Result<_>>()?;
    Ok(Estimate::Scalar(scalar_estimate(&scalar_samples(&records, quantity))?))
}

fn scalar_samples(records: &[RichOutcome], quantity: Quantity) -> Vec<f64> {
    match quantity {
        Quantity::PStart => records.iter().map(|r| r.outcome.transmitted as u8 as f64).collect(),
        Quantity::PSync => records.iter().map(|r| r.outcome.sync_collided as u8 as f64).collect(),
        Quantity::Pdr => records
            .iter()
            .map(|r| {
                (r.outcome.transmitted && !r.outcome.sync_collided && !r.outcome.hn_collided) as u8
                    as f64
            })
            .collect(),
        Quantity::PHn => records
            .iter()
            .filter(|r| r.outcome.receivers_total > 0)
            .map(|r| {
                if r.outcome.transmitted {
                    r.hidden_corrupted as f64 / r.outcome.receivers_total as f64
                } else {
                    0.0
                }
            })
            .collect(),
        Quantity::Stpdr => records
            .iter()
            .filter(|r| r.outcome.receivers_total > 0)
            .map(|r| {
                if r.outcome.transmitted {
                    r.outcome.receivers_ok as f64 / r.outcome.receivers_total as f64
                } else {
                    0.0
                }
            })
            .collect(),
        Quantity::NCsHist | Quantity::LCdf | Quantity::ACdf => {
            unreachable!("distribution quantities never reach the scalar fold")
        }
    }
}

/// All five scalar quantities folded from one shared batch of trials.
#[derive(Clone, Copy, Debug)]
pub struct ScalarEstimates {
    pub p_start: SimEstimate,
    pub p_sync: SimEstimate,
    pub p_hn: SimEstimate,
    pub pdr: SimEstimate,
    pub stpdr: SimEstimate,
}

/// Runs one batch of trials and reduces it to every scalar quantity at
/// once. `estimate` on any scalar quantity with the same arguments sees the
/// identical trial stream, so the two agree exactly.
pub fn estimate_scalars(
    scenario: &CoexScenario,
    n_trials: usize,
    seed: u64,
) -> Result<ScalarEstimates> {
    if n_trials < 100 {
        return Err(Error::domain(
            "estimate",
            format!("{n_trials} trials cannot support an estimate; need at least 100"),
        ));
    }
    check_preconditions(scenario)?;
    let records: Vec<RichOutcome> = (0..n_trials)
        .into_par_iter()
        .map(|i| run_trial_rich(scenario, trial_seed(seed, i as u64)))
        .collect::<Result<_>>()?;
    Ok(ScalarEstimates {
        p_start: scalar_estimate(&scalar_samples(&records, Quantity::PStart))?,
        p_sync: scalar_estimate(&scalar_samples(&records, Quantity::PSync))?,
        p_hn: scalar_estimate(&scalar_samples(&records, Quantity::PHn))?,
        pdr: scalar_estimate(&scalar_samples(&records, Quantity::Pdr))?,
        stpdr: scalar_estimate(&scalar_samples(&records, Quantity::Stpdr))?,
    })
}

/// Kolmogorov-Smirnov distance between sorted samples and a reference CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
