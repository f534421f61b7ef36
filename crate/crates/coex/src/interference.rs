//! Multi-RAT coexistence model.
//!
//! Three technologies can share the channel: the broadcast system itself,
//! Wi-Fi (asynchronous 9 us slots, 20 MHz), and C-V2X (synchronous 1 ms
//! subframes, 20 MHz). Each contributes a busy-slot probability; the
//! composed probability is their clamped sum. The conflict maps translate
//! the interferers' scheduling units into broadcast-slot corruption terms:
//!
//! - [`wifi_slot_conflict`]: which interferer slot lands in which broadcast
//!   slot once the interferer defers to an ongoing transmission;
//! - [`cv2x_rb_conflict`]: how many resource blocks of a C-V2X carrier fall
//!   into the broadcast control channel, and how much slot-time per
//!   subframe that corrupts.

use crate::geometry::{Radii, Rat, SystemSpace};
use crate::temporal::{
    solve_busy_prob, CompetitorDistribution, FixedPointSolution, MacParams, DSRC_SLOT_US,
};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

/// 802.11ac slot duration, microseconds.
pub const WIFI_SLOT_US: f64 = 9.0;
/// Wi-Fi frame length in Wi-Fi slots.
pub const WIFI_FRAME_SLOTS: u32 = 8;
/// Fixed Wi-Fi contention window.
pub const WIFI_CONTENTION_WINDOW: u32 = 15;
/// Wi-Fi channel width, MHz.
pub const WIFI_BANDWIDTH_MHZ: f64 = 20.0;

/// C-V2X subframe duration, microseconds.
pub const CV2X_SUBFRAME_US: f64 = 1000.0;
/// C-V2X carrier width, MHz.
pub const CV2X_BANDWIDTH_MHZ: f64 = 20.0;
/// Resource-block width, kHz.
pub const CV2X_RB_KHZ: f64 = 180.0;
/// Resource blocks one vehicle's message occupies.
pub const CV2X_RBS_PER_VEHICLE: f64 = 12.0;
/// Nominal resource blocks per MHz of carrier (100 RBs on a 20 MHz grid).
pub const RBS_PER_MHZ: f64 = 5.0;

/// Broadcast control channel width, MHz.
pub const DSRC_CCH_BANDWIDTH_MHZ: f64 = 10.0;

// ---------------------------------------------------------------------------
// Profiles and scenarios
// ---------------------------------------------------------------------------

/// One technology's deployment and air-interface parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RatProfile {
    pub rat: Rat,
    pub intensity_per_m2: f64,
    pub slot_us: f64,
    pub bandwidth_mhz: f64,
    /// Externally supplied per-subframe activity probability; C-V2X only,
    /// where the resource-selection process is not modeled.
    pub busy_prob_override: Option<f64>,
}

impl RatProfile {
    /// Broadcast-system profile on the 10 MHz control channel.
    pub fn dsrc(intensity_per_m2: f64) -> Self {
        RatProfile {
            rat: Rat::Dsrc,
            intensity_per_m2,
            slot_us: DSRC_SLOT_US,
            bandwidth_mhz: DSRC_CCH_BANDWIDTH_MHZ,
            busy_prob_override: None,
        }
    }

    /// Wi-Fi profile with the 802.11ac defaults.
    pub fn wifi(intensity_per_m2: f64) -> Self {
        RatProfile {
            rat: Rat::Wifi,
            intensity_per_m2,
            slot_us: WIFI_SLOT_US,
            bandwidth_mhz: WIFI_BANDWIDTH_MHZ,
            busy_prob_override: None,
        }
    }

    /// C-V2X profile; `busy_prob` is the per-subframe activity probability.
    pub fn cv2x(intensity_per_m2: f64, busy_prob: f64) -> Self {
        RatProfile {
            rat: Rat::Cv2x,
            intensity_per_m2,
            slot_us: CV2X_SUBFRAME_US,
            bandwidth_mhz: CV2X_BANDWIDTH_MHZ,
            busy_prob_override: Some(busy_prob),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.intensity_per_m2 < 0.0 || !self.intensity_per_m2.is_finite() {
            return Err(Error::domain(
                "RatProfile::validate",
                format!("{} intensity must be nonnegative, got {}", self.rat, self.intensity_per_m2),
            ));
        }
        if !(self.slot_us > 0.0) || !(self.bandwidth_mhz > 0.0) {
            return Err(Error::domain(
                "RatProfile::validate",
                format!("{} slot duration and bandwidth must be positive", self.rat),
            ));
        }
        match (self.rat, self.busy_prob_override) {
            (Rat::Cv2x, Some(p)) if (0.0..=1.0).contains(&p) => Ok(()),
            (Rat::Cv2x, Some(p)) => Err(Error::domain(
                "RatProfile::validate",
                format!("cv2x activity probability {p} outside [0, 1]"),
            )),
            (Rat::Cv2x, None) => Err(Error::domain(
                "RatProfile::validate",
                "cv2x requires an activity probability (its scheduler is not modeled)",
            )),
            (_, Some(_)) => Err(Error::domain(
                "RatProfile::validate",
                format!("{} must not carry an activity override", self.rat),
            )),
            (_, None) => Ok(()),
        }
    }
}

/// How the nodes' beaconing periods relate in simulation: one shared period
/// start, or integer slot phases drawn uniformly per node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeriodAlignment {
    Aligned,
    Desynchronized,
}

/// A full coexistence scenario: the broadcast deployment plus any
/// interferer deployments sharing the channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CoexScenario {
    pub dsrc: RatProfile,
    pub interferers: Vec<RatProfile>,
    pub radii: Radii,
    pub space: SystemSpace,
    pub mac: MacParams,
    /// Restrict collision geometry (sync / hidden-node competitor counts)
    /// to broadcast nodes only; by default every deployed node competes.
    pub collision_sources_dsrc_only: bool,
    /// Simulation-only: how nodes' beaconing periods are phased.
    pub period_alignment: PeriodAlignment,
}

impl CoexScenario {
    pub fn new(
        dsrc: RatProfile,
        interferers: Vec<RatProfile>,
        radii: Radii,
        space: SystemSpace,
        mac: MacParams,
    ) -> Result<Self> {
        let scenario = CoexScenario {
            dsrc,
            interferers,
            radii,
            space,
            mac,
            collision_sources_dsrc_only: false,
            period_alignment: PeriodAlignment::Desynchronized,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Broadcast-only scenario with no interferers.
    pub fn without_interference(
        intensity_per_m2: f64,
        radii: Radii,
        space: SystemSpace,
        mac: MacParams,
    ) -> Result<Self> {
        CoexScenario::new(RatProfile::dsrc(intensity_per_m2), Vec::new(), radii, space, mac)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dsrc.rat != Rat::Dsrc {
            return Err(Error::domain(
                "CoexScenario::validate",
                format!("primary profile must be dsrc, got {}", self.dsrc.rat),
            ));
        }
        self.dsrc.validate()?;
        let mut seen_wifi = false;
        let mut seen_cv2x = false;
        for p in &self.interferers {
            p.validate()?;
            match p.rat {
                Rat::Dsrc => {
                    return Err(Error::domain(
                        "CoexScenario::validate",
                        "interferer list must not contain a second dsrc profile",
                    ))
                }
                Rat::Wifi if seen_wifi => {
                    return Err(Error::domain("CoexScenario::validate", "duplicate wifi interferer"))
                }
                Rat::Cv2x if seen_cv2x => {
                    return Err(Error::domain("CoexScenario::validate", "duplicate cv2x interferer"))
                }
                Rat::Wifi => seen_wifi = true,
                Rat::Cv2x => seen_cv2x = true,
            }
        }
        Ok(())
    }

    pub fn wifi(&self) -> Option<&RatProfile> {
        self.interferers.iter().find(|p| p.rat == Rat::Wifi)
    }

    pub fn cv2x(&self) -> Option<&RatProfile> {
        self.interferers.iter().find(|p| p.rat == Rat::Cv2x)
    }
}

// ---------------------------------------------------------------------------
// Superposition
// ---------------------------------------------------------------------------

/// Total node intensity across all deployed processes; superposed Poisson
/// intensities add.
pub fn total_intensity(scenario: &CoexScenario) -> f64 {
    scenario.dsrc.intensity_per_m2
        + scenario.interferers.iter().map(|p| p.intensity_per_m2).sum::<f64>()
}

/// Competitor-count distribution seen inside the tagged node's sensing
/// disc. Every deployed node competes for the medium unless the scenario
/// restricts collision sources to the broadcast process.
pub fn effective_competitor_distribution(scenario: &CoexScenario) -> Result<CompetitorDistribution> {
    let intensity = if scenario.collision_sources_dsrc_only {
        scenario.dsrc.intensity_per_m2
    } else {
        total_intensity(scenario)
    };
    CompetitorDistribution::poisson_normal(intensity * scenario.radii.sense_area_m2())
}

/// Composes per-technology busy probabilities into the channel's: the
/// clamped sum (a slot is busy when any system occupies it; overlaps are
/// absorbed by the clamp).
pub fn compose_busy_prob(p_b_dsrc: f64, p_b_cv2x: f64, p_b_wifi: f64) -> Result<f64> {
    for (name, v) in [("dsrc", p_b_dsrc), ("cv2x", p_b_cv2x), ("wifi", p_b_wifi)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(
                "compose_busy_prob",
                format!("{name} busy probability {v} outside [0, 1]"),
            ));
        }
    }
    Ok((p_b_dsrc + p_b_cv2x + p_b_wifi).min(1.0))
}

// ---------------------------------------------------------------------------
// Conflict maps
// ---------------------------------------------------------------------------

/// Time/frequency relation of one deferring Wi-Fi transmission to the
/// broadcast slot grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotConflictMap {
    /// 1-based interferer slot index (counted from the sensed broadcast
    /// slot's start) whose transmission lands in the next broadcast slot.
    pub conflicting_interferer_slot: u32,
    /// 1-based broadcast slot the interferer corrupts: always the slot
    /// after the sensed one, for every grid phase.
    pub corrupted_dsrc_slot: u32,
    /// The interferer band covers the whole control channel.
    pub full_frequency_overlap: bool,
}

/// Maps a deferring Wi-Fi transmission onto the broadcast grid: the
/// interferer senses the ongoing slot busy and starts on its first own slot
/// boundary at or past that slot's end, which is boundary
/// `ceil(dsrc_slot / wifi_slot)` and lands in broadcast slot 2 regardless of
/// the (sub-slot) phase offset between the grids.
pub fn wifi_slot_conflict(dsrc_slot_us: f64, wifi_slot_us: f64) -> Result<SlotConflictMap> {
    if !(dsrc_slot_us > 0.0) || !(wifi_slot_us > 0.0) {
        return Err(Error::domain(
            "wifi_slot_conflict",
            format!("slot durations must be positive, got ({dsrc_slot_us}, {wifi_slot_us})"),
        ));
    }
    Ok(SlotConflictMap {
        conflicting_interferer_slot: (dsrc_slot_us / wifi_slot_us).ceil() as u32,
        corrupted_dsrc_slot: 2,
        full_frequency_overlap: true,
    })
}

/// Frequency-domain relation of a C-V2X subframe to the broadcast control
/// channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbConflictMap {
    /// Resource blocks of the C-V2X grid that fall inside the control
    /// channel.
    pub rbs_in_cch: f64,
    /// Vehicles whose messages those blocks can carry simultaneously.
    pub colliding_nodes: f64,
    /// Fraction of the nominal C-V2X grid overlapping the control channel.
    pub overlap_fraction: f64,
    /// Broadcast slots per 1 ms subframe corrupted at that overlap
    /// fraction.
    pub slots_interfered_per_subframe: f64,
}

/// Maps the C-V2X resource grid onto the broadcast control channel.
pub fn cv2x_rb_conflict(
    cch_bandwidth_mhz: f64,
    rb_khz: f64,
    rbs_per_vehicle: f64,
    cv2x_bandwidth_mhz: f64,
) -> Result<RbConflictMap> {
    if !(cch_bandwidth_mhz > 0.0) || !(rb_khz > 0.0) || !(rbs_per_vehicle > 0.0) || !(cv2x_bandwidth_mhz > 0.0) {
        return Err(Error::domain("cv2x_rb_conflict", "all bandwidth parameters must be positive"));
    }
    let rbs_in_cch = cch_bandwidth_mhz * 1000.0 / rb_khz;
    let nominal_rbs = cv2x_bandwidth_mhz * RBS_PER_MHZ;
    let overlap_fraction = (rbs_in_cch / nominal_rbs).min(1.0);
    Ok(RbConflictMap {
        rbs_in_cch,
        colliding_nodes: rbs_in_cch / rbs_per_vehicle,
        overlap_fraction,
        slots_interfered_per_subframe: (CV2X_SUBFRAME_US / DSRC_SLOT_US) * overlap_fraction,
    })
}

// ---------------------------------------------------------------------------
// Busy-probability pipeline
// ---------------------------------------------------------------------------

/// Per-technology busy terms and their composition for one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct BusyComponents {
    /// Broadcast chain's own fixed point.
    pub dsrc: FixedPointSolution,
    /// Wi-Fi chain's fixed point, when Wi-Fi is deployed.
    pub wifi_chain: Option<FixedPointSolution>,
    /// Broadcast contribution to the composed busy probability.
    pub dsrc_busy: f64,
    /// Wi-Fi contribution: its own busy probability scaled by one Wi-Fi
    /// slot's share of a broadcast slot.
    pub wifi_busy: f64,
    /// C-V2X contribution: activity probability scaled by the spectral
    /// overlap fraction.
    pub cv2x_busy: f64,
    /// Composed channel busy probability.
    pub composed: f64,
}

/// The Wi-Fi backoff chain translated to the broadcast beaconing horizon:
/// same window mechanics on 9 us slots, with the period expressed in Wi-Fi
/// slots and the frame as the occupancy burst.
pub fn wifi_chain_params(mac: &MacParams) -> Result<MacParams> {
    let slots = (mac.slots_per_period() as f64 * mac.slot_us() / WIFI_SLOT_US).round() as u32;
    MacParams::new(WIFI_CONTENTION_WINDOW, slots, WIFI_FRAME_SLOTS, WIFI_SLOT_US)
}

/// Solves each deployed technology's activity model and composes the busy
/// probabilities: the broadcast chain on its own competitor distribution,
/// the Wi-Fi chain likewise, the C-V2X term from its override and spectral
/// overlap; composition happens after the per-technology solves.
pub fn busy_components(scenario: &CoexScenario) -> Result<BusyComponents> {
    scenario.validate()?;
    let area = scenario.radii.sense_area_m2();

    let dsrc_dist = CompetitorDistribution::poisson_normal(scenario.dsrc.intensity_per_m2 * area)?;
    let dsrc = solve_busy_prob(&dsrc_dist, &scenario.mac)?;

    let mut wifi_chain = None;
    let mut wifi_busy = 0.0;
    if let Some(wifi) = scenario.wifi() {
        let chain_mac = wifi_chain_params(&scenario.mac)?;
        let dist = CompetitorDistribution::poisson_normal(wifi.intensity_per_m2 * area)?;
        let sol = solve_busy_prob(&dist, &chain_mac)?;
        wifi_busy = (wifi.slot_us / scenario.mac.slot_us()) * sol.busy_prob;
        wifi_chain = Some(sol);
    }

    let mut cv2x_busy = 0.0;
    if let Some(cv2x) = scenario.cv2x() {
        let map = cv2x_rb_conflict(
            scenario.dsrc.bandwidth_mhz,
            CV2X_RB_KHZ,
            CV2X_RBS_PER_VEHICLE,
            cv2x.bandwidth_mhz,
        )?;
        // validate() guarantees the override is present for cv2x.
        cv2x_busy = map.overlap_fraction * cv2x.busy_prob_override.unwrap_or(0.0);
    }

    let composed = compose_busy_prob(dsrc.busy_prob, cv2x_busy, wifi_busy)?;
    Ok(BusyComponents { dsrc, wifi_chain, dsrc_busy: dsrc.busy_prob, wifi_busy, cv2x_busy, composed })
}

// ---------------------------------------------------------------------------
