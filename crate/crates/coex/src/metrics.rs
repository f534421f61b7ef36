//! Delivery-performance metrics.
//!
//! Combines the temporal pipeline (busy probability, start/collision
//! probabilities) with the spatial one (collision-area distribution) into
//! the two headline figures:
//!
//! - PDR: probability that a beacon is sent within its period and survives
//!   both same-slot and hidden-node collisions;
//! - STPDR: the spatial softening of PDR, where each collision discounts
//!   delivery only by the expected fraction of the coverage disc it blanks.
//!
//! [`evaluate`] runs the whole pipeline for one scenario; [`sweep`] maps it
//! over an axis (density, contention window, interferer set) with per-point
//! error capture.

use crate::geometry::{
    collision_area, distance_pdf, rgb, QuadraticFit, Radii, Rat, SystemSpace,
};
use crate::interference::{
    busy_components, effective_competitor_distribution, CoexScenario, RatProfile,
};
use crate::numeric::integrate;
use crate::temporal::{hn_prob, start_prob, sync_prob, MacParams};
use crate::{Error, Result};
use rayon::prelude::*;

/// Relative tolerance of the collision-area expectations.
pub const RGB_QUADRATURE_REL_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Report type
// ---------------------------------------------------------------------------

/// One scenario's full metric set, with the scenario echoed back so rows
/// stay self-describing in tables and CSV output.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub p_start: f64,
    pub p_sync: f64,
    pub p_hn: f64,
    pub pdr: f64,
    pub stpdr_avg: f64,
    pub rgb_sync_mean: f64,
    pub rgb_hn_mean: f64,
    pub scenario: CoexScenario,
}

impl MetricsReport {
    /// CSV column order: scenario parameters first, metrics after. Absent
    /// interferers appear as zero intensity / zero activity.
    pub fn csv_header() -> &'static str {
        "space_side_m,r_cs_m,r_tx_m,cw,slots_per_period,beacon_slots,\
         dsrc_intensity_per_m2,dsrc_per_disc,wifi_intensity_per_m2,\
         cv2x_intensity_per_m2,cv2x_activity,\
         p_start,p_sync,p_hn,pdr,stpdr_avg,rgb_sync_mean,rgb_hn_mean"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            scenario_csv_params(&self.scenario),
            self.p_start,
            self.p_sync,
            self.p_hn,
            self.pdr,
            self.stpdr_avg,
            self.rgb_sync_mean,
            self.rgb_hn_mean,
        )
    }
}

/// The scenario-parameter prefix shared by every artifact row, matching the
/// leading columns of [`MetricsReport::csv_header`].
pub fn scenario_csv_params(s: &CoexScenario) -> String {
    let wifi = s.wifi().map_or(0.0, |p| p.intensity_per_m2);
    let cv2x = s.cv2x().map_or(0.0, |p| p.intensity_per_m2);
    let activity = s.cv2x().and_then(|p| p.busy_prob_override).unwrap_or(0.0);
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        s.space.side_m(),
        s.radii.carrier_sense_m(),
        s.radii.transmission_m(),
        s.mac.cw(),
        s.mac.slots_per_period(),
        s.mac.beacon_slots(),
        s.dsrc.intensity_per_m2,
        s.dsrc.intensity_per_m2 * s.radii.sense_area_m2(),
        wifi,
        cv2x,
        activity,
    )
}

// ---------------------------------------------------------------------------
// Point metrics
// ---------------------------------------------------------------------------

fn check_unit(op: &'static str, name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::domain(op, format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

/// Packet delivery ratio: the beacon must start within its period and avoid
/// both collision modes. The collision probabilities partition the failure
/// event, so their sum may not exceed one.
pub fn pdr(p_start: f64, p_sync: f64, p_hn: f64) -> Result<f64> {
    check_unit("pdr", "p_start", p_start)?;
    check_unit("pdr", "p_sync", p_sync)?;
    check_unit("pdr", "p_hn", p_hn)?;
    if p_sync + p_hn > 1.0 {
        return Err(Error::domain(
            "pdr",
            format!("collision probabilities sum to {} > 1; the failure events cannot overlap", p_sync + p_hn),
        ));
    }
    Ok(p_start * (1.0 - (p_sync + p_hn)))
}

/// Delivery rate for one concrete collision geometry: each collision mode
/// discounts delivery by the fraction of the coverage disc its collision
/// area blanks, rather than failing the whole packet.
///
/// When sensing reaches beyond decoding the blanked lens can exceed the
/// coverage disc; the rate floors at zero.
pub fn stpdr_instant(
    p_start: f64,
    p_sync: f64,
    p_hn: f64,
    a_sync_m2: f64,
    a_hn_m2: f64,
    radii: Radii,
) -> Result<f64> {
    check_unit("stpdr_instant", "p_start", p_start)?;
    check_unit("stpdr_instant", "p_sync", p_sync)?;
    check_unit("stpdr_instant", "p_hn", p_hn)?;
    let rgb_sync = rgb(a_sync_m2, radii)?;
    let rgb_hn = rgb(a_hn_m2, radii)?;
    Ok((p_start * (1.0 - (p_sync * rgb_sync + p_hn * rgb_hn))).max(0.0))
}

// ---------------------------------------------------------------------------
// Collision-area expectations
// ---------------------------------------------------------------------------

fn check_fit(op: &'static str, fit: &QuadraticFit, radii: Radii) -> Result<()> {
    let r = radii.carrier_sense_m();
    if (fit.radius_m - r).abs() > 1e-6 * r {
        return Err(Error::domain(
            op,
            format!("fit was built for radius {} m but the scenario senses at {} m", fit.radius_m, r),
        ));
    }
    Ok(())
}

/// Area value at which the fitted inverse crosses separation `l`, on the
/// decreasing branch of the surrogate quadratic.
fn surrogate_area_at(fit: &QuadraticFit, l: f64) -> Option<f64> {
    let c = fit.p3 - l;
    if fit.p1.abs() < 1e-300 {
        return (fit.p2.abs() > 0.0).then(|| -c / fit.p2);
    }
    let disc = fit.p2 * fit.p2 - 4.0 * fit.p1 * c;
    if disc < 0.0 {
        return None;
    }
    // Smaller root: left of the parabola's vertex, where the surrogate
    // decreases in area.
    Some((-fit.p2 - disc.sqrt()) / (2.0 * fit.p1))
}

/// Mean coverage-disc fraction blanked by a same-slot collider, averaged
/// over the collision-area distribution.
///
/// The collider sits within the coverage radius; its area distribution is
/// induced through the fitted inverse map from the separation weight
/// `pi*l / D^2` on `[0, r_tx]` (`D` the deployment side). The weight
/// carries less than unit mass: it includes how likely the collider is to
/// land that close at all. Both integration endpoints are the surrogate's
/// own areas at the separation endpoints, so the change of variables covers
/// exactly that separation range.
pub fn mean_rgb_sync(fit: &QuadraticFit, radii: Radii, space: SystemSpace) -> Result<f64> {
    check_fit("mean_rgb_sync", fit, radii)?;
    let lo = surrogate_area_at(fit, radii.transmission_m())
        .unwrap_or_else(|| collision_area(radii.transmission_m(), radii).unwrap_or(0.0));
    let hi = surrogate_area_at(fit, 0.0).unwrap_or_else(|| radii.sense_area_m2());
    let q = integrate(
        |a| {
            let l = fit.inverse_area(a);
            a * 2.0 * distance_pdf(l, space) * fit.inverse_area_slope(a).abs()
        },
        lo,
        hi,
        RGB_QUADRATURE_REL_TOL,
    )?;
    Ok(q.value / radii.coverage_area_m2())
}

/// Mean coverage-disc fraction blanked by a hidden collider, averaged over
/// the collision-area distribution.
///
/// The collider sits beyond the sensing radius; separations follow the
/// corner-anchored law on a square of side `r_cs`, whose support ends at
/// `sqrt(2) * r_cs`. In area terms that puts all mass between the
/// surrogate's areas at those two separations.
pub fn mean_rgb_hn(fit: &QuadraticFit, radii: Radii) -> Result<f64> {
    check_fit("mean_rgb_hn", fit, radii)?;
    let hn_space = SystemSpace::new(fit.radius_m)?;
    let hi = surrogate_area_at(fit, radii.carrier_sense_m())
        .unwrap_or_else(|| collision_area(radii.carrier_sense_m(), radii).unwrap_or(0.0));
    let lo = surrogate_area_at(fit, hn_space.diagonal_m())
        .filter(|a| a.is_finite() && (0.0..hi).contains(a))
        .unwrap_or(0.0);
    let q = integrate(
        |a| {
            let l = fit.inverse_area(a);
            a * distance_pdf(l, hn_space) * fit.inverse_area_slope(a).abs()
        },
        lo,
        hi,
        RGB_QUADRATURE_REL_TOL,
    )?;
    Ok(q.value / radii.coverage_area_m2())
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

/// Debug switches for the averaged delivery rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StpdrOptions {
    /// Treat every collision as blanking the whole coverage disc; the
    /// averaged rate then degenerates to the plain delivery ratio.
    pub force_unit_rgb: bool,
    /// Subtract the two discounts from each other instead of summing them
    /// (a sign variant kept for comparison; not the model's semantics).
    pub printed_difference_form: bool,
}

/// Runs the full analytical pipeline for one scenario.
pub fn evaluate(scenario: &CoexScenario, fit: &QuadraticFit) -> Result<MetricsReport> {
    evaluate_with(scenario, fit, StpdrOptions::default())
}

/// [`evaluate`] with explicit averaging switches.
pub fn evaluate_with(
    scenario: &CoexScenario,
    fit: &QuadraticFit,
    opts: StpdrOptions,
) -> Result<MetricsReport> {
    scenario.validate()?;
    check_fit("evaluate", fit, scenario.radii)?;

    let busy = busy_components(scenario)?;
    let dist = effective_competitor_distribution(scenario)?;
    let p_start = start_prob(&dist, &scenario.mac, busy.composed)?;

    let collider_intensity = if scenario.collision_sources_dsrc_only {
        scenario.dsrc.intensity_per_m2
    } else {
        crate::interference::total_intensity(scenario)
    };
    // A same-slot collision needs the competitor to start in the one slot
    // the tagged node picked, so the per-slot rate is what matters.
    let tau_slot = p_start / scenario.mac.slots_per_period() as f64;
    let p_sync = sync_prob(collider_intensity, scenario.radii, &dist, &scenario.mac, p_start, tau_slot)?;
    let p_hn = hn_prob(collider_intensity, scenario.radii, &dist, &scenario.mac, p_start)?;
    let pdr = pdr(p_start, p_sync, p_hn)?;

    let (rgb_sync_mean, rgb_hn_mean) = if opts.force_unit_rgb {
        (1.0, 1.0)
    } else {
        (
            mean_rgb_sync(fit, scenario.radii, scenario.space)?,
            mean_rgb_hn(fit, scenario.radii)?,
        )
    };
    let discount = if opts.printed_difference_form {
        p_sync * rgb_sync_mean - p_hn * rgb_hn_mean
    } else {
        p_sync * rgb_sync_mean + p_hn * rgb_hn_mean
    };
    let stpdr_avg = (p_start * (1.0 - discount)).clamp(0.0, 1.0);

    Ok(MetricsReport {
        p_start,
        p_sync,
        p_hn,
        pdr,
        stpdr_avg,
        rgb_sync_mean,
        rgb_hn_mean,
        scenario: scenario.clone(),
    })
}

/// Averaged spatiotemporal delivery rate for one scenario.
pub fn stpdr_average(scenario: &CoexScenario, fit: &QuadraticFit) -> Result<f64> {
    evaluate(scenario, fit).map(|r| r.stpdr_avg)
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Axis a sweep walks while holding the rest of the template fixed.
#[derive(Clone, Debug)]
pub enum SweepAxis {
    /// Broadcast-node intensity, per square meter.
    IntensityPerM2(Vec<f64>),
    /// Contention window.
    ContentionWindow(Vec<u32>),
    /// Interferer sets, each replacing the template's list wholesale.
    InterferenceSets(Vec<Vec<RatProfile>>),
}

/// One sweep point: the label identifies the axis value, the outcome either
/// holds the report or the error that point produced.
#[derive(Debug)]
pub struct SweepPoint {
    pub label: String,
    pub outcome: Result<MetricsReport>,
}

fn interferer_set_label(set: &[RatProfile]) -> String {
    if set.is_empty() {
        return "none".to_string();
    }
    let mut names: Vec<&str> = set
        .iter()
        .map(|p| match p.rat {
            Rat::Dsrc => "dsrc",
            Rat::Wifi => "wifi",
            Rat::Cv2x => "cv2x",
        })
        .collect();
    names.sort_unstable();
    names.join("+")
}

/// Evaluates the template across one axis. Points run in parallel and are
/// collected in axis order; a failing point carries its error and the sweep
/// continues.
pub fn sweep(template: &CoexScenario, fit: &QuadraticFit, axis: &SweepAxis) -> Vec<SweepPoint> {
    let points: Vec<(String, Result<CoexScenario>)> = match axis {
        SweepAxis::IntensityPerM2(values) => values
            .iter()
            .map(|&v| {
                let mut s = template.clone();
                s.dsrc.intensity_per_m2 = v;
                (format!("intensity_per_m2={v}"), s.validate().map(|()| s))
            })
            .collect(),
        SweepAxis::ContentionWindow(values) => values
            .iter()
            .map(|&cw| {
                let label = format!("cw={cw}");
                let scenario = MacParams::new(
                    cw,
                    template.mac.slots_per_period(),
                    template.mac.beacon_slots(),
                    template.mac.slot_us(),
                )
                .map(|mac| {
                    let mut s = template.clone();
                    s.mac = mac;
                    s
                });
                (label, scenario)
            })
            .collect(),
        SweepAxis::InterferenceSets(sets) => sets
            .iter()
            .map(|set| {
                let mut s = template.clone();
                s.interferers = set.clone();
                (format!("interference={}", interferer_set_label(set)), s.validate().map(|()| s))
            })
            .collect(),
    };

    points
        .into_par_iter()
        .map(|(label, scenario)| SweepPoint {
            label,
            outcome: scenario.and_then(|s| evaluate(&s, fit)),
        })
        .collect()
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fit_inverse_area, intensity_from_per_disc, DEFAULT_FIT_SAMPLES};

    fn table_radii() -> Radii {
        Radii::new(500.0, 500.0).unwrap()
    }

    fn table_fit() -> QuadraticFit {
        fit_inverse_area(500.0, DEFAULT_FIT_SAMPLES).unwrap()
    }

    fn scenario(per_disc: f64, cw: u32, interferers: Vec<RatProfile>) -> CoexScenario {
        let radii = table_radii();
        CoexScenario::new(
            RatProfile::dsrc(intensity_from_per_disc(per_disc, radii)),
            interferers,
            radii,
            SystemSpace::new(2000.0).unwrap(),
            MacParams::dsrc(cw).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn pdr_anchors() {
        assert_eq!(pdr(1.0, 0.0, 0.0).unwrap(), 1.0);
        assert!((pdr(0.6, 0.0, 0.5).unwrap() - 0.3).abs() < 1e-15);
        assert!(pdr(0.5, 0.6, 0.5).is_err());
        assert!(pdr(1.2, 0.0, 0.0).is_err());
        assert!(pdr(0.5, -0.1, 0.0).is_err());
    }

    #[test]
    fn stpdr_instant_anchors() {
        let radii = table_radii();
        // No blanked area: the start probability passes through.
        let v = stpdr_instant(0.8, 0.3, 0.4, 0.0, 0.0, radii).unwrap();
        assert_eq!(v, 0.8);
        // Full-disc blanking with certain collision: nothing survives.
        let full = radii.sense_area_m2();
        let v = stpdr_instant(0.8, 0.4, 0.6, full, full, radii).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn stpdr_instant_exceeds_pdr_for_partial_overlap() {
        // Hidden collider at 600 m separation: the lens covers part of the
        // disc, so the spatial rate beats the all-or-nothing one.
        let radii = table_radii();
        let a = collision_area(600.0, radii).unwrap();
        let (p_start, p_sync, p_hn) = (0.9, 0.0005, 0.3);
        let soft = stpdr_instant(p_start, p_sync, p_hn, a, a, radii).unwrap();
        let hard = pdr(p_start, p_sync, p_hn).unwrap();
        assert!(soft > hard, "soft {soft} <= hard {hard}");
    }

    #[test]
    fn rgb_means_match_expected_scale_and_oracle() {
        let fit = table_fit();
        let radii = table_radii();
        let space = SystemSpace::new(2000.0).unwrap();
        let r = radii.carrier_sense_m();

        let sync = mean_rgb_sync(&fit, radii, space).unwrap();
        let hn = mean_rgb_hn(&fit, radii).unwrap();
        assert!((sync - 0.0576).abs() < 0.005, "sync mean {sync}");
        assert!((hn - 0.0742).abs() < 0.005, "hn mean {hn}");

        // Separation-space oracles on the true lens, bypassing the fitted
        // surrogate and the area change of variables entirely.
        let d = space.side_m();
        let sync_oracle = integrate(
            |l| collision_area(l, radii).unwrap() * std::f64::consts::PI * l / (d * d),
            0.0,
            radii.transmission_m(),
            1e-10,
        )
        .unwrap()
        .value
            / radii.coverage_area_m2();
        // Looser tolerance: the corner law's derivative blows up like
        // 1 / sqrt(l - r) at the lower endpoint.
        let hn_space = SystemSpace::new(r).unwrap();
        let hn_oracle = integrate(
            |l| collision_area(l, radii).unwrap() * distance_pdf(l, hn_space),
            r,
            hn_space.diagonal_m(),
            1e-7,
        )
        .unwrap()
        .value
            / radii.coverage_area_m2();
        assert!((sync - sync_oracle).abs() < 0.003, "sync {sync} vs oracle {sync_oracle}");
        assert!((hn - hn_oracle).abs() < 0.003, "hn {hn} vs oracle {hn_oracle}");
    }

    #[test]
    fn zero_intensity_delivers_everything() {
        let report = evaluate(&scenario(0.0, 15, vec![]), &table_fit()).unwrap();
        assert_eq!(report.p_start, 1.0);
        assert!(report.p_sync.abs() < 1e-15);
        assert!(report.p_hn.abs() < 1e-15);
        assert!((report.pdr - 1.0).abs() < 1e-12);
        assert!((report.stpdr_avg - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_sandwich_holds_across_scenarios() {
        let fit = table_fit();
        let radii = table_radii();
        let cases = vec![
            scenario(3.0, 15, vec![]),
            scenario(13.0, 15, vec![]),
            scenario(13.0, 255, vec![]),
            scenario(13.0, 15, vec![RatProfile::cv2x(intensity_from_per_disc(300.0, radii), 0.5)]),
        ];
        for s in cases {
            let r = evaluate(&s, &fit).unwrap();
            assert!(r.pdr <= r.p_start + 1e-12, "pdr {} > p_start {}", r.pdr, r.p_start);
            assert!(
                (r.pdr..=r.p_start + 1e-12).contains(&r.stpdr_avg),
                "stpdr {} outside [{}, {}]",
                r.stpdr_avg,
                r.pdr,
                r.p_start
            );
            for v in [r.p_start, r.p_sync, r.p_hn, r.pdr, r.stpdr_avg, r.rgb_sync_mean, r.rgb_hn_mean] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn forced_unit_rgb_degenerates_to_pdr() {
        let s = scenario(13.0, 15, vec![]);
        let forced = evaluate_with(&s, &table_fit(), StpdrOptions { force_unit_rgb: true, ..Default::default() })
            .unwrap();
        assert_eq!(forced.stpdr_avg, forced.pdr);
    }

    #[test]
    fn difference_form_overshoots_the_sum_form() {
        let s = scenario(13.0, 15, vec![]);
        let fit = table_fit();
        let normal = evaluate(&s, &fit).unwrap();
        let printed = evaluate_with(&s, &fit, StpdrOptions { printed_difference_form: true, ..Default::default() })
            .unwrap();
        assert!(printed.stpdr_avg > normal.stpdr_avg);
    }

    #[test]
    fn interference_weakly_degrades_delivery() {
        let fit = table_fit();
        let radii = table_radii();
        // Matched interferer intensity keeps the competitor population equal
        // across the pair, so the comparison isolates the busy-time term.
        let per_disc = intensity_from_per_disc(300.0, radii);
        for dsrc_per_disc in [13.0, 20.0] {
            let base = evaluate(&scenario(dsrc_per_disc, 15, vec![]), &fit).unwrap();
            let wifi = evaluate(
                &scenario(dsrc_per_disc, 15, vec![RatProfile::wifi(per_disc)]),
                &fit,
            )
            .unwrap();
            let cv2x = evaluate(
                &scenario(dsrc_per_disc, 15, vec![RatProfile::cv2x(per_disc, 0.5)]),
                &fit,
            )
            .unwrap();
            for hit in [&wifi, &cv2x] {
                assert!(hit.pdr <= base.pdr + 1e-12);
                assert!(hit.stpdr_avg <= base.stpdr_avg + 1e-12);
            }
            // The long C-V2X subframe corrupts more air time than Wi-Fi slots do.
            assert!(cv2x.pdr <= wifi.pdr + 1e-12, "cv2x {} vs wifi {}", cv2x.pdr, wifi.pdr);
            if dsrc_per_disc == 20.0 {
                // Here the C-V2X busy term saturates the channel while the
                // Wi-Fi one does not, so the gap must be wide open.
                assert!(cv2x.pdr < wifi.pdr - 0.1, "cv2x {} vs wifi {}", cv2x.pdr, wifi.pdr);
            }
        }
    }

    #[test]
    fn single_point_sweep_matches_direct_evaluation() {
        let s = scenario(13.0, 15, vec![]);
        let fit = table_fit();
        let direct = evaluate(&s, &fit).unwrap();
        let pts = sweep(&s, &fit, &SweepAxis::ContentionWindow(vec![15]));
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].label, "cw=15");
        assert_eq!(*pts[0].outcome.as_ref().unwrap(), direct);
    }

    #[test]
    fn cw_sweep_without_interference_is_nondecreasing_in_pdr() {
        let s = scenario(13.0, 15, vec![]);
        let pts = sweep(&s, &table_fit(), &SweepAxis::ContentionWindow(vec![15, 63, 255, 1023]));
        let pdrs: Vec<f64> = pts.iter().map(|p| p.outcome.as_ref().unwrap().pdr).collect();
        for w in pdrs.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "pdr dropped along cw axis: {pdrs:?}");
        }
    }

    #[test]
    fn sweep_continues_past_invalid_points() {
        let s = scenario(13.0, 15, vec![]);
        // 1600 exceeds the countdown budget of a 1500-slot period.
        let pts = sweep(&s, &table_fit(), &SweepAxis::ContentionWindow(vec![15, 1600]));
        assert_eq!(pts.len(), 2);
        assert!(pts[0].outcome.is_ok());
        assert!(pts[1].outcome.is_err());
    }

    #[test]
    fn csv_row_has_documented_column_count() {
        let report = evaluate(&scenario(3.0, 15, vec![]), &table_fit()).unwrap();
        let header_cols = MetricsReport::csv_header().split(',').count();
        let row_cols = report.csv_row().split(',').count();
        assert_eq!(header_cols, 18);
        assert_eq!(row_cols, 18);
    }
}
