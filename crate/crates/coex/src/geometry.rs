//! Planar deployment model.
//!
//! Nodes live on a square region and every distance law below is anchored at
//! a corner of that square: the separation between the reference point and a
//! uniformly placed node follows the quarter-circle / corner-arc density
//! implemented by [`distance_pdf`]. Pairwise interference geometry is the
//! symmetric lens of two equal carrier-sense discs, [`collision_area`], and
//! [`fit_inverse_area`] builds the quadratic surrogate for the inverse of
//! that lens map so later averages can be taken directly in area space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, SQRT_2};

use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Core types
// ---------------------------------------------------------------------------

/// Square deployment region `[0, side] x [0, side]`, sides in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemSpace {
    side_m: f64,
}

impl SystemSpace {
    pub fn new(side_m: f64) -> Result<Self> {
        if !(side_m > 0.0) || !side_m.is_finite() {
            return Err(Error::domain("SystemSpace::new", format!("side must be positive, got {side_m}")));
        }
        Ok(SystemSpace { side_m })
    }

    pub fn side_m(&self) -> f64 {
        self.side_m
    }

    pub fn area_m2(&self) -> f64 {
        self.side_m * self.side_m
    }

    /// Largest possible separation between two points of the region.
    pub fn diagonal_m(&self) -> f64 {
        SQRT_2 * self.side_m
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * self.side_m, 0.5 * self.side_m]
    }
}

/// Carrier-sense and transmission radii of the broadcast nodes, in meters.
///
/// Sensing reaches at least as far as decodable transmission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Radii {
    carrier_sense_m: f64,
    transmission_m: f64,
}

impl Radii {
    pub fn new(carrier_sense_m: f64, transmission_m: f64) -> Result<Self> {
        if !(transmission_m > 0.0) || !(carrier_sense_m > 0.0) {
            return Err(Error::domain("Radii::new", format!("radii must be positive, got cs={carrier_sense_m}, tx={transmission_m}")));
        }
        if carrier_sense_m < transmission_m {
            return Err(Error::domain(
                "Radii::new",
                format!("carrier-sense radius {carrier_sense_m} must be >= transmission radius {transmission_m}"),
            ));
        }
        Ok(Radii { carrier_sense_m, transmission_m })
    }

    pub fn carrier_sense_m(&self) -> f64 {
        self.carrier_sense_m
    }

    pub fn transmission_m(&self) -> f64 {
        self.transmission_m
    }

    /// Area of one carrier-sense disc.
    pub fn sense_area_m2(&self) -> f64 {
        PI * self.carrier_sense_m * self.carrier_sense_m
    }

    /// Area of one transmission (coverage) disc.
    pub fn coverage_area_m2(&self) -> f64 {
        PI * self.transmission_m * self.transmission_m
    }
}

/// Radio access technology of a node population.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rat {
    Dsrc,
    Wifi,
    Cv2x,
}

impl std::fmt::Display for Rat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rat::Dsrc => write!(f, "dsrc"),
            Rat::Wifi => write!(f, "wifi"),
            Rat::Cv2x => write!(f, "cv2x"),
        }
    }
}

/// One sampled node population: positions of every node of a single RAT.
#[derive(Clone, Debug)]
pub struct NodeSet {
    pub rat: Rat,
    pub positions: Vec<[f64; 2]>,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Number of nodes within `radius_m` of `center` (inclusive).
    pub fn count_within(&self, center: [f64; 2], radius_m: f64) -> usize {
        let r2 = radius_m * radius_m;
        self.positions
            .iter()
            .filter(|p| {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                dx * dx + dy * dy <= r2
            })
            .count()
    }
}

// ---------------------------------------------------------------------------
// Node sampling
// ---------------------------------------------------------------------------

/// Samples a stationary Poisson population on the region: the node count is
/// Poisson with mean `intensity_per_m2 * area`, positions i.i.d. uniform.
/// Fully deterministic for a given `seed`.
pub fn sample_ppp(space: SystemSpace, intensity_per_m2: f64, rat: Rat, seed: u64) -> Result<NodeSet> {
    if intensity_per_m2 < 0.0 || !intensity_per_m2.is_finite() {
        return Err(Error::domain(
            "sample_ppp",
            format!("intensity must be nonnegative, got {intensity_per_m2} per m^2"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = intensity_per_m2 * space.area_m2();
    let count = if mean == 0.0 {
        0
    } else {
        let poisson = rand_distr::Poisson::new(mean)
            .map_err(|e| Error::domain("sample_ppp", format!("invalid Poisson mean {mean}: {e}")))?;
        rng.sample(poisson) as usize
    };
    let side = space.side_m();
    let positions = (0..count)
        .map(|_| [rng.gen::<f64>() * side, rng.gen::<f64>() * side])
        .collect();
    Ok(NodeSet { rat, positions })
}

/// Converts a per-disc node count (nodes per carrier-sense area) into the
/// per-square-meter intensity used throughout the API.
pub fn intensity_from_per_disc(nodes_per_disc: f64, radii: Radii) -> f64 {
    nodes_per_disc / radii.sense_area_m2()
}

// ---------------------------------------------------------------------------
// Corner separation law
// ---------------------------------------------------------------------------

/// Density of the separation between the corner-anchored reference point and
/// a uniform node of the square. Zero outside `[0, sqrt(2) * side]`.
pub fn distance_pdf(l: f64, space: SystemSpace) -> f64 {
    let d = space.side_m();
    if l < 0.0 || l > SQRT_2 * d {
        return 0.0;
    }
    if l <= d {
        // Full quarter circle of radius l fits inside the square.
        PI * l / (2.0 * d * d)
    } else {
        // Arc clipped by both far sides.
        (l / (d * d)) * (0.5 * PI - 2.0 * (d / l).acos())
    }
}

/// Distribution function matching [`distance_pdf`]; clamps to `[0, 1]`
/// outside the support.
pub fn distance_cdf(l: f64, space: SystemSpace) -> f64 {
    let d = space.side_m();
    if l <= 0.0 {
        return 0.0;
    }
    if l >= SQRT_2 * d {
        return 1.0;
    }
    let quarter = PI * l * l / (4.0 * d * d);
    if l <= d {
        quarter
    } else {
        // Quarter-disc area minus the two circular segments outside the square.
        quarter - (l * l * (d / l).acos() - d * (l * l - d * d).sqrt()) / (d * d)
    }
}

// ---------------------------------------------------------------------------
// Collision lens
// ---------------------------------------------------------------------------

/// Intersection area of two carrier-sense discs whose centers sit `l` apart.
///
/// Errors for separations outside `[0, 2 * r_cs]`: beyond two radii the discs
/// are disjoint and the caller is asking about a pair that cannot collide.
pub fn collision_area(l: f64, radii: Radii) -> Result<f64> {
    let r = radii.carrier_sense_m();
    if l < 0.0 || l > 2.0 * r || !l.is_finite() {
        return Err(Error::domain(
            "collision_area",
            format!("separation {l} outside [0, {}] for carrier-sense radius {r}", 2.0 * r),
        ));
    }
    // Standard symmetric lens; the acos argument is in [0, 1] by the check above.
    Ok(2.0 * r * r * (l / (2.0 * r)).acos() - 0.5 * l * (4.0 * r * r - l * l).sqrt())
}

/// Fraction of the reference node's coverage disc blanked by a collision of
/// area `a`: the relative geometry-based degradation. Clamped to 1 when the
/// collision lens (drawn with the sensing radius) exceeds the coverage disc.
pub fn rgb(a: f64, radii: Radii) -> Result<f64> {
    let max_lens = radii.sense_area_m2();
    if a < 0.0 || a > max_lens * (1.0 + 1e-12) || !a.is_finite() {
        return Err(Error::domain(
            "rgb",
            format!("collision area {a} outside [0, {max_lens}]"),
        ));
    }
    Ok((a / radii.coverage_area_m2()).min(1.0))
}

// ---------------------------------------------------------------------------
// Quadratic inverse-area fit
// ---------------------------------------------------------------------------

/// Quadratic surrogate for the inverse lens map: `separation ~ p1*a^2 + p2*a + p3`
/// where `a` is a collision area produced by discs of radius `radius_m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticFit {
    pub radius_m: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    /// Mean relative separation error of the surrogate over the fitting grid.
    pub mean_rel_error: f64,
}

impl QuadraticFit {
    /// Fitted separation for collision area `a`.
    pub fn inverse_area(&self, a: f64) -> f64 {
        (self.p1 * a + self.p2) * a + self.p3
    }

    /// Derivative of the fitted inverse map at `a`.
    pub fn inverse_area_slope(&self, a: f64) -> f64 {
        2.0 * self.p1 * a + self.p2
    }

    /// Largest representable collision area for this radius.
    pub fn max_area_m2(&self) -> f64 {
        PI * self.radius_m * self.radius_m
    }
}

/// Number of grid points used by [`fit_inverse_area`] unless overridden.
pub const DEFAULT_FIT_SAMPLES: usize = 10_000;

/// Fits the quadratic inverse-area surrogate on `n_samples` separations
/// uniformly spaced over `(0, sqrt(2) * radius]`: the surrogate is only ever
/// evaluated on areas induced by separations inside a square of side
/// `radius`, so the grid stops at that square's diagonal. Fitting the unused
/// far tail would trade accuracy away exactly where the map gets used.
///
/// The normal equations are formed on areas scaled by the full-disc area so
/// the three powers stay well conditioned, then unscaled. The reported error
/// is the grid mean of `|l - fitted| / fitted`; the fitted value in the
/// denominator keeps the average convergent under grid refinement (the true
/// separation vanishes at the top of the area range).
pub fn fit_inverse_area(radius_m: f64, n_samples: usize) -> Result<QuadraticFit> {
    if !(radius_m > 0.0) || !radius_m.is_finite() {
        return Err(Error::domain("fit_inverse_area", format!("radius must be positive, got {radius_m}")));
    }
    if n_samples < 100 {
        return Err(Error::domain(
            "fit_inverse_area",
            format!("need at least 100 samples for a stable fit, got {n_samples}"),
        ));
    }
    let radii = Radii::new(radius_m, radius_m)?;
    let a0 = PI * radius_m * radius_m;

    // Moments of the scaled design matrix [s^2 s 1] and its response l.
    let mut m = [0.0f64; 5]; // sum of s^k, k = 0..4
    let mut v = [0.0f64; 3]; // sum of l * s^k, k = 0..2
    let step = std::f64::consts::SQRT_2 * radius_m / n_samples as f64;
    for i in 1..=n_samples {
        let l = i as f64 * step;
        let s = collision_area(l, radii)? / a0;
        let mut sk = 1.0;
        for k in 0..5 {
            m[k] += sk;
            if k < 3 {
                v[k] += l * sk;
            }
            sk *= s;
        }
    }

    let normal = nalgebra::Matrix3::new(m[4], m[3], m[2], m[3], m[2], m[1], m[2], m[1], m[0]);
    let rhs = nalgebra::Vector3::new(v[2], v[1], v[0]);
    let coeffs = normal.lu().solve(&rhs).ok_or_else(|| {
        Error::domain(
            "fit_inverse_area",
            format!("degenerate fitting grid for radius {radius_m}: normal equations are singular"),
        )
    })?;

    let fit = QuadraticFit {
        radius_m,
        p1: coeffs[0] / (a0 * a0),
        p2: coeffs[1] / a0,
        p3: coeffs[2],
        mean_rel_error: 0.0,
    };

    // Relative error pass over the same grid, against the fitted value.
    let mut err_sum = 0.0;
    for i in 1..=n_samples {
        let l = i as f64 * step;
        let a = collision_area(l, radii)?;
        let pred = fit.inverse_area(a);
        err_sum += (l - pred).abs() / pred.max(f64::MIN_POSITIVE);
    }
    Ok(QuadraticFit { mean_rel_error: err_sum / n_samples as f64, ..fit })
}

// ---------------------------------------------------------------------------
// Area-space laws
// ---------------------------------------------------------------------------

/// Density of the collision area induced by the corner separation law of
/// `space`, pushed through the fitted inverse map: the separation density
/// evaluated at the fitted inverse, times the Jacobian `|2*p1*a + p2|`.
/// Zero outside `[0, pi * radius^2]`.
pub fn area_pdf(a: f64, fit: &QuadraticFit, space: SystemSpace) -> f64 {
    if a < 0.0 || a > fit.max_area_m2() {
        return 0.0;
    }
    let l = fit.inverse_area(a);
    distance_pdf(l, space) * fit.inverse_area_slope(a).abs()
}

/// Distribution function of the separation at the fitted inverse of `a`,
/// with the corner law normalized to a square of side `radius`. The fitted
/// inverse is clamped to the law's support; since the inverse map decreases
/// in `a`, the value is nonincreasing in `a`.
pub fn area_cdf(a: f64, fit: &QuadraticFit) -> f64 {
    let side = SystemSpace { side_m: fit.radius_m };
    let l = fit.inverse_area(a).clamp(0.0, side.diagonal_m());
    distance_cdf(l, side)
}

// ---------------------------------------------------------------------------
// Fit table serialization
// ---------------------------------------------------------------------------

/// Writes fits as a plain-text table, one `radius p1 p2 p3 err` row each.
pub fn write_fit_table(fits: &[QuadraticFit], out: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "# radius_m p1 p2 p3 mean_rel_error")?;
    for f in fits {
        writeln!(out, "{} {} {} {} {}", f.radius_m, f.p1, f.p2, f.p3, f.mean_rel_error)?;
    }
    Ok(())
}

/// Parses the table produced by [`write_fit_table`].
pub fn parse_fit_table(text: &str) -> Result<Vec<QuadraticFit>> {
    let mut fits = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::ConfigParse {
                line: idx + 1,
                message: format!("expected 5 columns (radius p1 p2 p3 err), got {}", fields.len()),
            });
        }
        let mut nums = [0.0f64; 5];
        for (k, field) in fields.iter().enumerate() {
            nums[k] = field.parse().map_err(|_| Error::ConfigParse {
                line: idx + 1,
                message: format!("column {} is not a number: {field:?}", k + 1),
            })?;
        }
        fits.push(QuadraticFit {
            radius_m: nums[0],
            p1: nums[1],
            p2: nums[2],
            p3: nums[3],
            mean_rel_error: nums[4],
        });
    }
    Ok(fits)
}

// ---------------------------------------------------------------------------
