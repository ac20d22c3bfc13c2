//! Special functions and small scalar helpers shared by the closed forms.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `z * phi(z)`, continuous at `z = ±inf`.
pub fn z_norm_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        z * norm_pdf(z)
    }
}

/// Probability that a standard normal variate lies in `[za, zb]`, evaluated on
/// whichever tail avoids cancellation.
pub fn norm_interval(za: f64, zb: f64) -> f64 {
    if zb <= za {
        return 0.0;
    }
    let upper = |z: f64| 0.5 * erfc(z * FRAC_1_SQRT_2);
    if za >= 0.0 {
        upper(za) - upper(zb)
    } else if zb <= 0.0 {
        upper(-zb) - upper(-za)
    } else {
        1.0 - upper(-za) - upper(zb)
    }
}

/// Regularized upper incomplete gamma `Q(n, x)` for integer shape `n >= 1`:
/// `e^{-x} sum_{j<n} x^j / j!`.
pub fn gamma_q_int(n: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..n {
        term *= x / j as f64;
        sum += term;
    }
    (-x).exp() * sum
}

/// Regularized lower incomplete gamma `P(n, x)` for integer shape.
pub fn gamma_p_int(n: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x > n as f64 {
        return 1.0 - gamma_q_int(n, x);
    }
    // series e^{-x} sum_{j>=n} x^j / j!
    let mut term = (-x).exp();
    for j in 1..=n {
        term *= x / j as f64;
    }
    let mut sum = term;
    let mut j = n;
    loop {
        j += 1;
        term *= x / j as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// `P(n, xb) - P(n, xa)` for `0 <= xa <= xb`, using the tail that keeps precision.
pub fn gamma_interval_int(n: u32, xa: f64, xb: f64) -> f64 {
    if xb <= xa {
        return 0.0;
    }
    if xa >= n as f64 {
        gamma_q_int(n, xa) - gamma_q_int(n, xb)
    } else {
        gamma_p_int(n, xb) - gamma_p_int(n, xa)
    }
}

/// `e^x - 1 - x` without cancellation for small `x`.
pub fn expm1_minus_x(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let mut term = x * x / 2.0;
        let mut sum = term;
        let mut k = 2.0;
        while term.abs() > sum.abs() * 1e-18 {
            k += 1.0;
            term *= x / k;
            sum += term;
        }
        sum
    } else {
        x.exp_m1() - x
    }
}

/// Numerically stable `ln(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
/// Stops when the bracket is narrower than `tol`. Returns `(argmax, max)`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iterations = 0;
    while (hi - lo) > tol && iterations < 400 {
        // ties move toward the lower end
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
        iterations += 1;
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Ordinary least-squares line through `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LineFit {
        slope,
        intercept,
        r_squared,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incomplete_gamma_matches_closed_forms() {
        for &x in &[1e-6, 0.3, 1.0, 2.58975, 7.5, 40.0] {
            let q2 = (1.0 + x) * (-x as f64).exp();
            assert!((gamma_q_int(2, x) - q2).abs() < 1e-15);
            let p2 = gamma_p_int(2, x);
            assert!((p2 + gamma_q_int(2, x) - 1.0).abs() < 1e-14, "x={x}");
        }
        // small-x series keeps relative precision: P(2, x) ~ x^2/2
        let x = 1e-6;
        assert!((gamma_p_int(2, x) / (x * x / 2.0) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn norm_interval_tails() {
        assert!((norm_interval(f64::NEG_INFINITY, 0.0) - 0.5).abs() < 1e-16);
        assert!((norm_interval(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-15);
        let far = norm_interval(30.0, f64::INFINITY);
        assert!(far > 0.0 && far < 1e-190);
    }

    #[test]
    fn expm1_minus_x_small_and_large() {
        let x: f64 = 1e-3;
        let series = x * x / 2.0 + x.powi(3) / 6.0 + x.powi(4) / 24.0 + x.powi(5) / 120.0;
        assert!((expm1_minus_x(x) / series - 1.0).abs() < 1e-13);
        assert!((expm1_minus_x(2.0) - (2f64.exp() - 3.0)).abs() < 1e-14);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, _) = golden_max(|x| -(x - 1.234).powi(2), 0.0, 5.0, 1e-10);
        assert!((x - 1.234).abs() < 1e-8);
    }

    #[test]
    fn line_fit_exact() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [3.0, 5.0, 7.0];
        let fit = fit_line(&xs, &ys);
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!((fit.intercept - 1.0).abs() < 1e-14);
    }
}
