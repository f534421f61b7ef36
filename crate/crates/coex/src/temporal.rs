//! Temporal contention model: the frozen-countdown backoff chain.
//!
//! Every node draws one backoff per beaconing period, uniform over
//! `[0, cw)`, and decrements it only on slots it senses idle; the contention
//! window never doubles. The chain state is the remaining countdown. From
//! that chain come:
//!
//! - [`transmit_prob_tau`]: stationary probability of sitting in the
//!   transmit state, as a function of the busy-slot probability;
//! - [`solve_busy_prob`]: the self-consistent busy-slot probability over a
//!   random competitor count;
//! - [`start_prob`]: probability the beacon starts (and finishes) inside its
//!   own period;
//! - [`sync_prob`] / [`hn_prob`]: synchronous-collision and hidden-node
//!   collision probabilities for a tagged transmitter.

use rayon::prelude::*;

use crate::geometry::Radii;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Broadcast channel slot length, microseconds.
pub const DSRC_SLOT_US: f64 = 66.7;
/// Slots per 100 ms beaconing period.
pub const DSRC_SLOTS_PER_PERIOD: u32 = 1500;
/// Beacon transmission length in slots.
pub const DSRC_BEACON_SLOTS: u32 = 2;

/// Slotted-MAC parameters of one technology.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacParams {
    cw: u32,
    slots_per_period: u32,
    beacon_slots: u32,
    slot_us: f64,
}

impl MacParams {
    pub fn new(cw: u32, slots_per_period: u32, beacon_slots: u32, slot_us: f64) -> Result<Self> {
        if cw < 1 {
            return Err(Error::domain("MacParams::new", "contention window must be at least 1"));
        }
        if beacon_slots == 0 || beacon_slots >= slots_per_period {
            return Err(Error::domain(
                "MacParams::new",
                format!("beacon length {beacon_slots} must be in [1, slots_per_period) = [1, {slots_per_period})"),
            ));
        }
        if cw > slots_per_period - beacon_slots {
            return Err(Error::domain(
                "MacParams::new",
                format!(
                    "contention window {cw} exceeds the {} slots available before the beacon must start",
                    slots_per_period - beacon_slots
                ),
            ));
        }
        if !(slot_us > 0.0) {
            return Err(Error::domain("MacParams::new", format!("slot duration must be positive, got {slot_us}")));
        }
        Ok(MacParams { cw, slots_per_period, beacon_slots, slot_us })
    }

    /// Broadcast-channel defaults with the given contention window.
    pub fn dsrc(cw: u32) -> Result<Self> {
        MacParams::new(cw, DSRC_SLOTS_PER_PERIOD, DSRC_BEACON_SLOTS, DSRC_SLOT_US)
    }

    pub fn cw(&self) -> u32 {
        self.cw
    }

    pub fn slots_per_period(&self) -> u32 {
        self.slots_per_period
    }

    pub fn beacon_slots(&self) -> u32 {
        self.beacon_slots
    }

    pub fn slot_us(&self) -> f64 {
        self.slot_us
    }

    /// Slots in a period that may be spent counting down: the beacon itself
    /// must still fit afterwards.
    pub fn countdown_budget(&self) -> u32 {
        self.slots_per_period - self.beacon_slots
    }
}

// ---------------------------------------------------------------------------
// Competitor distribution
// ---------------------------------------------------------------------------

/// Distribution of the number of competitors inside a sensing disc: a
/// Poisson count approximated by its matching Normal, discretized on the
/// integers and truncated to `mean +- 6 sigma` (and at zero), renormalized.
#[derive(Clone, Debug, PartialEq)]
pub struct CompetitorDistribution {
    mean: f64,
    n_min: u32,
    weights: Vec<f64>,
}

impl CompetitorDistribution {
    pub fn poisson_normal(mean: f64) -> Result<Self> {
        if mean < 0.0 || !mean.is_finite() {
            return Err(Error::domain(
                "CompetitorDistribution::poisson_normal",
                format!("mean competitor count must be nonnegative, got {mean}"),
            ));
        }
        if mean == 0.0 {
            return Ok(CompetitorDistribution { mean, n_min: 0, weights: vec![1.0] });
        }
        let sigma = mean.sqrt();
        let lo = (mean - 6.0 * sigma).ceil().max(0.0) as u32;
        let hi = (mean + 6.0 * sigma).floor().max(lo as f64) as u32;
        let mut weights: Vec<f64> = (lo..=hi)
            .map(|n| {
                let z = n as f64 - mean;
                (-z * z / (2.0 * mean)).exp()
            })
            .collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(CompetitorDistribution { mean, n_min: lo, weights })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Smallest competitor count carrying probability mass.
    pub fn n_min(&self) -> u32 {
        self.n_min
    }

    /// Largest competitor count carrying probability mass.
    pub fn truncation_max(&self) -> u32 {
        self.n_min + (self.weights.len() as u32 - 1)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Support iterator: `(count, probability)` pairs in increasing count.
    pub fn support(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.weights.iter().enumerate().map(|(i, w)| (self.n_min + i as u32, *w))
    }

    /// Expectation of `f` over the competitor count.
    pub fn expected<F: Fn(u32) -> f64>(&self, f: F) -> f64 {
        self.support().map(|(n, w)| w * f(n)).sum()
    }
}

// ---------------------------------------------------------------------------
// Per-slot transmit probability
// ---------------------------------------------------------------------------

/// Stationary transmit-state probability of the frozen-countdown chain.
///
/// With busy-slot probability `p_b` and `n_cs` competitors bounding how many
/// busy slots a countdown step can absorb, each backoff state `i` is left at
/// rate `q_i = 1 - p_b^{min(n_cs, budget - i) + 1}`; the stationary mass of
/// the transmit state is `1 / sum_k prod_{i<=k} q_i^{-1}`. At `p_b = 0`
/// every transition is certain and the chain is uniform, giving `1 / cw`;
/// at `p_b = 1` the chain can never advance and the value is 0.
pub fn transmit_prob_tau(p_b: f64, mac: &MacParams, n_cs: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_b) {
        return Err(Error::domain("transmit_prob_tau", format!("busy probability {p_b} outside [0, 1]")));
    }
    if p_b == 1.0 {
        return Ok(0.0);
    }
    let budget = mac.countdown_budget();
    let mut inv_prod = 1.0f64; // prod_{i<=k} q_i^{-1}
    let mut sum = 1.0f64; // k = 0 term
    for i in 1..mac.cw {
        let exponent = n_cs.min(budget - i) + 1;
        let q = 1.0 - p_b.powi(exponent as i32);
        inv_prod /= q;
        sum += inv_prod;
        if sum > 1e300 {
            return Ok(0.0);
        }
    }
    Ok(1.0 / sum)
}

// ---------------------------------------------------------------------------
// Self-consistent busy probability
// ---------------------------------------------------------------------------

/// Resolution of the busy-probability grid scan.
pub const BUSY_PROB_GRID_STEP: f64 = 1e-5;

/// Residual above which the scan is treated as failed.
const BUSY_PROB_FAIL_RESIDUAL: f64 = 1e-3;

/// Converged solution of the busy-probability fixed point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointSolution {
    /// Self-consistent probability that a sensed slot is busy.
    pub busy_prob: f64,
    /// Mean per-slot transmit probability at the solution.
    pub tau: f64,
    /// `|p - (1 - E[(1 - tau)^n])|` at the reported point.
    pub residual: f64,
    /// Scan resolution that selected the root.
    pub grid_step: f64,
}

/// Per-`p_b` evaluator for the expectation over the competitor count.
///
/// Splits the support three ways around the countdown budget `K`:
/// below `K - cw + 1` every state shares `q = 1 - p_b^{n+1}` (geometric
/// sum); above `K` the per-state rates no longer depend on `n` (one prefix
/// product serves every count); the band in between reuses the same prefix
/// products through a prefix/suffix identity, so each count costs O(1).
struct ChainEvaluator<'a> {
    mac: &'a MacParams,
    p: f64,
    /// `prefix[k] = prod_{i<=k} s_i^{-1}` with `s_i = 1 - p^{K - i + 1}`,
    /// saturated to stay finite; only built when the support needs it.
    prefix: Vec<f64>,
    /// `suffix[j] = sum_{k > j} prefix[k]`.
    suffix: Vec<f64>,
}

/// Saturation bound: far beyond the point where `tau` underflows any
/// observable effect on `(1 - tau)^n`, while keeping sums finite.
const PROD_CAP: f64 = 1e280;

impl<'a> ChainEvaluator<'a> {
    fn new(mac: &'a MacParams, dist: &CompetitorDistribution, p: f64) -> Self {
        let budget = mac.countdown_budget();
        let needs_band = dist.truncation_max() + mac.cw > budget + 1;
        let (prefix, suffix) = if needs_band && p > 0.0 && p < 1.0 && mac.cw > 1 {
            let cw = mac.cw as usize;
            let mut prefix = vec![1.0f64; cw];
            // s_i exponents run from K - cw + 2 (at i = cw - 1) up to K.
            let mut z = p.powi((budget - mac.cw + 2) as i32);
            let mut inv = vec![0.0f64; cw];
            for i in (1..cw).rev() {
                inv[i] = 1.0 / (1.0 - z);
                z *= p;
            }
            for i in 1..cw {
                prefix[i] = (prefix[i - 1] * inv[i]).min(PROD_CAP);
            }
            // suffix[j] = sum of prefix[j..]; state_sum reads suffix[t + 1].
            let mut suffix = vec![0.0f64; cw + 1];
            for k in (0..cw).rev() {
                suffix[k] = suffix[k + 1] + prefix[k];
            }
            (prefix, suffix)
        } else {
            (Vec::new(), Vec::new())
        };
        ChainEvaluator { mac, p, prefix, suffix }
    }

    /// `sum_{k < cw} prod_{i <= k} q_i^{-1}` for a given competitor count,
    /// with `x = p^{n+1}` supplied by the caller.
    fn state_sum(&self, n: u32, x: f64) -> f64 {
        let cw = self.mac.cw;
        let budget = self.mac.countdown_budget();
        // States i <= t still see the full n-bounded rate; beyond t the
        // period bound takes over.
        let t = if n >= budget { 0 } else { (budget - n).min(cw - 1) };
        let head = geometric_inv_sum(x, t as u64 + 1);
        if t == cw - 1 {
            return head;
        }
        let y_pow_t = if x > 1e-18 { (1.0 - x).powi(-(t as i32)) } else { 1.0 };
        let tail = self.suffix[t as usize + 1] / self.prefix[t as usize];
        head + y_pow_t * tail
    }

    /// Expectation of `(1 - tau(n))^n`; `with_tau` also returns `E[tau(n)]`.
    fn expectations(&self, dist: &CompetitorDistribution, with_tau: bool) -> (f64, f64) {
        let p = self.p;
        if p == 0.0 {
            // tau = 1/cw for every count.
            let tau0 = 1.0 / self.mac.cw as f64;
            let mut pow = (1.0 - tau0).powi(dist.n_min() as i32);
            let mut e_pow = 0.0;
            for w in dist.weights() {
                e_pow += w * pow;
                pow *= 1.0 - tau0;
            }
            return (e_pow, tau0);
        }
        if p == 1.0 {
            return (1.0, 0.0);
        }
        let cw = self.mac.cw;
        let budget = self.mac.countdown_budget();
        let mut e_pow = 0.0;
        let mut e_tau = 0.0;
        let mut x = p.powi(dist.n_min() as i32 + 1);
        // Once tau stops depending on n (either pinned at 1/cw in the pure
        // low-count regime, or past the budget where every count saturates),
        // carry (1 - tau)^n across counts with one multiply each.
        let mut frozen: Option<(f64, f64)> = None; // (tau, (1 - tau)^n)
        let mut prev_n = 0u32;
        for (n, w) in dist.support() {
            let tau;
            let pow;
            match frozen {
                Some((ft, fp)) => {
                    let fp = fp * (1.0 - ft).powi((n - prev_n) as i32);
                    tau = ft;
                    pow = fp;
                    frozen = Some((ft, fp));
                }
                None => {
                    let sum = self.state_sum(n, x);
                    tau = 1.0 / sum;
                    pow = pow_one_minus(tau, n);
                    let pure_low = n + cw <= budget + 1;
                    if (pure_low && x < 1e-18) || n >= budget {
                        frozen = Some((tau, pow));
                    }
                }
            }
            e_pow += w * pow;
            if with_tau {
                e_tau += w * tau;
            }
            x *= p;
            prev_n = n;
        }
        (e_pow, e_tau)
    }
}

/// `sum_{k=0}^{m-1} (1 - x)^{-k}` without cancellation for small `x`:
/// numerator through `exp_m1`, denominator as the exact ratio `x / (1 - x)`.
fn geometric_inv_sum(x: f64, m: u64) -> f64 {
    if x <= 1e-18 {
        // Across any feasible window the deviation from m is below 1e-15.
        return m as f64;
    }
    let ln_y = -(-x).ln_1p(); // ln(1 / (1 - x)) > 0
    let num = (m as f64 * ln_y).exp_m1(); // y^m - 1
    if !num.is_finite() {
        return PROD_CAP;
    }
    let den = x / (1.0 - x); // y - 1
    (num / den).min(PROD_CAP)
}

/// `(1 - tau)^n` in log space to dodge underflow surprises.
fn pow_one_minus(tau: f64, n: u32) -> f64 {
    if tau >= 1.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * (-tau).ln_1p()).exp()
}

/// Signed fixed-point residual `p - (1 - E[(1 - tau(p, n))^n])`.
fn signed_residual(p: f64, dist: &CompetitorDistribution, mac: &MacParams) -> f64 {
    let (e_pow, _) = ChainEvaluator::new(mac, dist, p).expectations(dist, false);
    p - (1.0 - e_pow)
}

/// Solves the busy-probability fixed point
/// `p = 1 - E_n[(1 - tau(p, n))^n]` over the competitor distribution.
///
/// A full grid scan at [`BUSY_PROB_GRID_STEP`] picks the global minimizer of
/// the absolute residual (ties resolved toward the smaller probability);
/// scanning runs in parallel with a deterministic reduction, so the result
/// is bit-identical to a sequential scan. A bisection polish inside the
/// winning cell then drives the reported residual to solver precision.
pub fn solve_busy_prob(dist: &CompetitorDistribution, mac: &MacParams) -> Result<FixedPointSolution> {
    if dist.mean() == 0.0 {
        let tau = transmit_prob_tau(0.0, mac, 0)?;
        return Ok(FixedPointSolution { busy_prob: 0.0, tau, residual: 0.0, grid_step: BUSY_PROB_GRID_STEP });
    }

    let steps = (1.0 / BUSY_PROB_GRID_STEP).round() as u64;
    let (best_res, best_p) = (0..=steps)
        .into_par_iter()
        .map(|j| {
            let p = (j as f64 * BUSY_PROB_GRID_STEP).min(1.0);
            (signed_residual(p, dist, mac).abs(), p)
        })
        .reduce(|| (f64::INFINITY, f64::INFINITY), |a, b| if (a.0, a.1) <= (b.0, b.1) { a } else { b });

    if best_res >= BUSY_PROB_FAIL_RESIDUAL {
        return Err(Error::no_convergence(
            "solve_busy_prob",
            format!(
                "no grid point reaches residual {BUSY_PROB_FAIL_RESIDUAL:.0e} \
                 (best |residual| {best_res:.3e} at p_b = {best_p})"
            ),
        ));
    }

    // Polish: bisect inside the winning cell when a sign change brackets the
    // root there. The grid stays responsible for root selection.
    let mut p_star = best_p;
    let mut res_star = best_res;
    let lo = (best_p - BUSY_PROB_GRID_STEP).max(0.0);
    let hi = (best_p + BUSY_PROB_GRID_STEP).min(1.0);
    let (r_lo, r_mid, r_hi) = (
        signed_residual(lo, dist, mac),
        signed_residual(best_p, dist, mac),
        signed_residual(hi, dist, mac),
    );
    let bracket = if r_lo <= 0.0 && r_mid >= 0.0 {
        Some((lo, best_p))
    } else if r_mid <= 0.0 && r_hi >= 0.0 {
        Some((best_p, hi))
    } else {
        None
    };
    if let Some((mut a, mut b)) = bracket {
        for _ in 0..64 {
            let mid = 0.5 * (a + b);
            if signed_residual(mid, dist, mac) <= 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let candidate = 0.5 * (a + b);
        let cand_res = signed_residual(candidate, dist, mac).abs();
        if cand_res < res_star {
            p_star = candidate;
            res_star = cand_res;
        }
    }

    let (_, tau) = ChainEvaluator::new(mac, dist, p_star).expectations(dist, true);
    Ok(FixedPointSolution { busy_prob: p_star, tau, residual: res_star, grid_step: BUSY_PROB_GRID_STEP })
}

// ---------------------------------------------------------------------------
// Start probability
// ---------------------------------------------------------------------------

/// Probability that a beacon with a uniform backoff starts early enough to
/// finish inside its own period.
///
/// With backoff `b`, the countdown consumes `b` idle slots plus a random
/// number of busy slots; the beacon fits iff the busy slots number at most
/// `budget - b`. That count is negative-binomial, so each backoff term is a
/// regularized incomplete beta. The competitor distribution is accepted for
/// interface symmetry with the collision probabilities; the period bound
/// binds at every competitor count, so the value depends only on `p_b`.
pub fn start_prob(_dist: &CompetitorDistribution, mac: &MacParams, p_b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_b) {
        return Err(Error::domain("start_prob", format!("busy probability {p_b} outside [0, 1]")));
    }
    if p_b == 0.0 {
        return Ok(1.0);
    }
    let budget = mac.countdown_budget();
    let mut total = 1.0f64; // b = 0 always fits (validated cw <= budget)
    if p_b == 1.0 {
        // No slot is ever idle: only the zero backoff starts.
        return Ok(1.0 / mac.cw as f64);
    }
    for b in 1..mac.cw {
        let spare = (budget - b) as f64;
        total += statrs::function::beta::beta_reg(b as f64, spare + 1.0, 1.0 - p_b);
    }
    Ok((total / mac.cw as f64).clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// Collision probabilities
// ---------------------------------------------------------------------------

/// Synchronous-collision probability for a tagged transmitter: some
/// competitor exists in sensing range, at least one of them starts a beacon,
/// and it picks the tagged node's exact slot (probability `tau` per slot).
pub fn sync_prob(
    intensity_per_m2: f64,
    radii: Radii,
    dist: &CompetitorDistribution,
    _mac: &MacParams,
    p_start: f64,
    tau: f64,
) -> Result<f64> {
    check_unit("sync_prob", "p_start", p_start)?;
    check_unit("sync_prob", "tau", tau)?;
    if intensity_per_m2 < 0.0 {
        return Err(Error::domain("sync_prob", format!("intensity must be nonnegative, got {intensity_per_m2}")));
    }
    let occupied = 1.0 - (-intensity_per_m2 * radii.sense_area_m2()).exp();
    let someone_starts = 1.0 - dist.expected(|n| (1.0 - p_start).powi(n as i32));
    Ok((occupied * someone_starts * tau).clamp(0.0, 1.0))
}

/// Hidden-node collision probability for a tagged transmitter: some node
/// exists in the hidden annulus (three sensing-disc areas), and at least one
/// start among the period's placements lands inside the tagged beacon's
/// vulnerable window.
pub fn hn_prob(
    intensity_per_m2: f64,
    radii: Radii,
    dist: &CompetitorDistribution,
    mac: &MacParams,
    p_start: f64,
) -> Result<f64> {
    check_unit("hn_prob", "p_start", p_start)?;
    if intensity_per_m2 < 0.0 {
        return Err(Error::domain("hn_prob", format!("intensity must be nonnegative, got {intensity_per_m2}")));
    }
    let occupied = 1.0 - (-3.0 * intensity_per_m2 * radii.sense_area_m2()).exp();
    let period = mac.slots_per_period() as f64;
    let free = mac.countdown_budget() as f64; // slots that dodge the beacon
    let ratio = free / period;
    let no_overlap = ((free + 1.0) / period) * dist.expected(|n| ratio.powi(n as i32));
    Ok((occupied * (1.0 - no_overlap) * p_start).clamp(0.0, 1.0))
}

fn check_unit(op: &'static str, name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::domain(op, format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
