//! Crate-internal numerical helpers: adaptive Gauss–Kronrod quadrature.

use crate::{Error, Result};

/// 15-point Kronrod abscissae on [-1, 1] (positive half, descending).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_17,
    0.207_784_955_007_898_27,
    0.0,
];

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// 7-point Gauss weights for the odd-index Kronrod abscissae.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 7/15 panel: returns (Kronrod value, |Kronrod - Gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);

    let f_mid = f(mid);
    let mut kronrod = WGK[7] * f_mid;
    let mut gauss = WG[3] * f_mid;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half.abs())
}

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
}

const MAX_DEPTH: u32 = 48;

fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Result<Quadrature> {
    let (value, err) = gk15(f, a, b);
    if err <= tol || err == 0.0 {
        return Ok(Quadrature { value, abs_error: err });
    }
    if depth >= MAX_DEPTH {
        return Err(Error::no_convergence(
            "integrate",
            format!(
                "interval [{a:.6e}, {b:.6e}] still carries error {err:.3e} > {tol:.3e} \
                 after {MAX_DEPTH} bisections"
            ),
        ));
    }
    let mid = 0.5 * (a + b);
    let left = refine(f, a, mid, 0.5 * tol, depth + 1)?;
    let right = refine(f, mid, b, 0.5 * tol, depth + 1)?;
    Ok(Quadrature {
        value: left.value + right.value,
        abs_error: left.abs_error + right.abs_error,
    })
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]` to relative
/// tolerance `rel_tol` (with a floor for integrals that are exactly zero).
pub(crate) fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<Quadrature> {
    debug_assert!(a.is_finite() && b.is_finite() && a <= b);
    if a == b {
        return Ok(Quadrature { value: 0.0, abs_error: 0.0 });
    }
    let (first_pass, _) = gk15(&f, a, b);
    let tol = (rel_tol * first_pass.abs()).max(1e-300);
    refine(&f, a, b, tol, 0)
}

/// Integrates a piecewise-smooth function by integrating each span between
/// consecutive breakpoints separately and summing. Test-only: production
/// callers know their seams and split at the call site.
#[cfg(test)]
pub(crate) fn integrate_piecewise<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    rel_tol: f64,
) -> Result<Quadrature> {
    let mut value = 0.0;
    let mut abs_error = 0.0;
    for pair in breakpoints.windows(2) {
        let q = integrate(&f, pair[0], pair[1], rel_tol)?;
        value += q.value;
        abs_error += q.abs_error;
    }
    Ok(Quadrature { value, abs_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((q.value - 8.0).abs() < 1e-12);
    }

    #[test]
    fn transcendental_matches_closed_form() {
        let q = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((q.value - 2.0).abs() < 1e-11);
    }

    #[test]
    fn sharp_peak_is_resolved() {
        // Narrow Gaussian integrates to ~sqrt(pi)*w against naive panels.
        let w = 1e-3;
        let q = integrate(|x: f64| (-(x / w) * (x / w)).exp(), -1.0, 1.0, 1e-9).unwrap();
        let exact = std::f64::consts::PI.sqrt() * w;
        assert!((q.value - exact).abs() / exact < 1e-8);
    }

    #[test]
    fn piecewise_splits_at_breakpoints() {
        let f = |x: f64| if x < 1.0 { x } else { 2.0 - x };
        let q = integrate_piecewise(f, &[0.0, 1.0, 2.0], 1e-12).unwrap();
        assert!((q.value - 1.0).abs() < 1e-12);
    }
}
