//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};

/// Absolute tolerance for continuous-spectrum integrals.
pub const ABS_TOL: f64 = 1e-12;
/// Relative tolerance for continuous-spectrum integrals.
pub const REL_TOL: f64 = 1e-10;

const MAX_DEPTH: usize = 48;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One 15-point Kronrod rule with its embedded 7-point Gauss estimate.
/// Returns `(kronrod, |kronrod - gauss|)`.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrate `f` over `[a, b]` by recursive bisection until each panel
/// meets `max(abs_tol, rel_tol * |panel|)` scaled to its share of the interval.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::QuadratureFailure { lo: a, hi: b });
    }
    let (whole, err) = gk15(f, a, b);
    let tol = abs_tol.max(rel_tol * whole.abs());
    if err <= tol {
        return Ok(whole);
    }
    let mut total = 0.0;
    let mut stack = vec![(a, b, whole, 0usize)];
    let width = b - a;
    while let Some((lo, hi, _, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (left, el) = gk15(f, lo, mid);
        let (right, er) = gk15(f, mid, hi);
        let local_tol = tol * (hi - lo) / width;
        if el + er <= local_tol || (hi - lo) <= width * f64::EPSILON * 16.0 {
            total += left + right;
        } else if depth >= MAX_DEPTH {
            return Err(Error::QuadratureFailure { lo, hi });
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(&|x: f64| x.powi(5) - 3.0 * x, 0.0, 2.0, ABS_TOL, REL_TOL).unwrap();
        assert!((v - (64.0 / 6.0 - 6.0)).abs() < 1e-13);
    }

    #[test]
    fn gaussian_mass() {
        let v = integrate(
            &|x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -10.0,
            10.0,
            ABS_TOL,
            REL_TOL,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn peaked_integrand_refines() {
        // sharp Lorentzian
        let eps = 1e-4;
        let v = integrate(&|x: f64| eps / (x * x + eps * eps), -1.0, 1.0, ABS_TOL, REL_TOL).unwrap();
        let exact = 2.0 * (1.0 / eps).atan();
        assert!((v - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn infinite_limits_rejected() {
        assert!(integrate(&|x: f64| x, 0.0, f64::INFINITY, ABS_TOL, REL_TOL).is_err());
    }
}
