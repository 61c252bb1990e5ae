//! Small numerical kernels shared by the wave, criterion and spectral code:
//! cancellation-free power/log differences, bracketed root finding,
//! Clenshaw-Curtis quadrature and finite differences on uniform grids.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `((1 + z)^a - 1) / a`, with the `a -> 0` limit `ln(1 + z)`.
pub fn pow1p_m1_over(a: f64, z: f64) -> f64 {
    if a == 0.0 {
        z.ln_1p()
    } else {
        (a * z.ln_1p()).exp_m1() / a
    }
}

/// `((1 + z)^a - 1) / (a z)`, smooth through `z = 0` where it equals 1.
pub fn pow1p_m1_over_z(a: f64, z: f64) -> f64 {
    if z.abs() < 0.1 {
        // sum_{n>=1} t_n z^(n-1), t_1 = 1, t_n = t_{n-1} (a - n + 1) / n
        let mut t = 1.0;
        let mut zp = 1.0;
        let mut sum = 1.0;
        for n in 2..200 {
            t *= (a - (n as f64) + 1.0) / n as f64;
            zp *= z;
            let term = t * zp;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        pow1p_m1_over(a, z) / z
    }
}

/// `(((1 - x)^a - 1) / a + x) / x^2`, the second-order remainder of the
/// binomial expansion scaled by `x^2`. For `a = 0` this is
/// `(ln(1 - x) + x) / x^2`.
pub fn binomial_defect_over_sq(a: f64, x: f64) -> f64 {
    if x.abs() < 0.25 {
        // sum_{n>=2} t_n (-x)^n / x^2
        let mut t = 1.0;
        let mut sum = 0.0;
        let mut xp = 1.0;
        for n in 2..400 {
            t *= (a - (n as f64) + 1.0) / n as f64;
            let term = t * xp;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            xp *= -x;
        }
        sum
    } else {
        (pow1p_m1_over(a, -x) + x) / (x * x)
    }
}

/// `-phi - ln(1 - phi)`, positive on `(0, 1)`, evaluated without cancellation
/// near zero.
pub fn log_defect(phi: f64) -> f64 {
    if phi.abs() < 0.1 {
        let mut sum = 0.0;
        let mut p = phi;
        for n in 2..200 {
            p *= phi;
            let term = p / n as f64;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        -phi - (-phi).ln_1p()
    }
}

/// Bisection on a sign change, run to the resolution of `f64`.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return Err(Error::Bracket(format!(
            "no sign change on [{lo}, {hi}] (f = {flo}, {fhi})"
        )));
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Clenshaw-Curtis rule with `n + 1` Chebyshev-Lobatto nodes on `[lo, hi]`.
/// Nodes are returned in increasing order, clustered at both ends.
pub fn clenshaw_curtis(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "Clenshaw-Curtis needs n >= 2");
    let nf = n as f64;
    let mut w = vec![0.0; n + 1];
    let mut v = vec![1.0; n - 1];
    let theta = |k: usize| k as f64 * PI / nf;
    if n.is_multiple_of(2) {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
        for k in 1..n / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta(i + 1)).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi -= (nf * theta(i + 1)).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
        for k in 1..=(n - 1) / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta(i + 1)).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (i, vi) in v.iter().enumerate() {
        w[i + 1] = 2.0 * vi / nf;
    }
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    // x_k = cos(k pi / n) runs from 1 down to -1; reverse for increasing order.
    let nodes: Vec<f64> = (0..=n).rev().map(|k| mid + half * theta(k).cos()).collect();
    let weights: Vec<f64> = (0..=n).rev().map(|k| half * w[k]).collect();
    (nodes, weights)
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(y: &[f64], dx: f64) -> f64 {
    match y.len() {
        0 | 1 => 0.0,
        n => dx * (y[1..n - 1].iter().sum::<f64>() + 0.5 * (y[0] + y[n - 1])),
    }
}

/// Discrete `L^2` inner product on a uniform grid (rectangle weights).
pub fn inner(u: &[f64], v: &[f64], dx: f64) -> f64 {
    dx * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
}

/// Fourth-order first derivative on a uniform grid; one-sided closures at the
/// two points nearest each end.
pub fn fd4_first(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "fd4_first needs at least 5 points");
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h);
    }
    let left = |g: &dyn Fn(usize) -> f64| {
        (
            (-25.0 * g(0) + 48.0 * g(1) - 36.0 * g(2) + 16.0 * g(3) - 3.0 * g(4)) / (12.0 * h),
            (-3.0 * g(0) - 10.0 * g(1) + 18.0 * g(2) - 6.0 * g(3) + g(4)) / (12.0 * h),
        )
    };
    let (d0, d1) = left(&|i| f[i]);
    d[0] = d0;
    d[1] = d1;
    let (e0, e1) = left(&|i| f[n - 1 - i]);
    d[n - 1] = -e0;
    d[n - 2] = -e1;
    d
}

/// Fourth-order second derivative on a uniform grid; one-sided closures at
/// the two points nearest each end.
pub fn fd4_second(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 6, "fd4_second needs at least 6 points");
    let h2 = 12.0 * h * h;
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) / h2;
    }
    let left = |g: &dyn Fn(usize) -> f64| {
        (
            (45.0 * g(0) - 154.0 * g(1) + 214.0 * g(2) - 156.0 * g(3) + 61.0 * g(4)
                - 10.0 * g(5))
                / h2,
            (10.0 * g(0) - 15.0 * g(1) - 4.0 * g(2) + 14.0 * g(3) - 6.0 * g(4) + g(5)) / h2,
        )
    };
    let (d0, d1) = left(&|i| f[i]);
    d[0] = d0;
    d[1] = d1;
    let (e0, e1) = left(&|i| f[n - 1 - i]);
    d[n - 1] = e0;
    d[n - 2] = e1;
    d
}

/// Second-order central second derivative with zero (Dirichlet) ghost values
/// replaced by one-sided second-order closures.
pub fn fd2_second(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 4);
    let h2 = h * h;
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) / h2;
    }
    d[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
    d[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
    d
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn l2_norm(v: &[f64], dx: f64) -> f64 {
    inner(v, v, dx).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pow_helpers_match_direct_evaluation() {
        for &a in &[-1.4, -0.3, 0.0, 0.3, 1.0, 2.5] {
            for &z in &[-0.7, -0.05, 1e-6, 0.02, 0.4, 3.0] {
                let direct = if a == 0.0 { (1.0_f64 + z).ln() } else { ((1.0_f64 + z).powf(a) - 1.0) / a };
                assert_relative_eq!(pow1p_m1_over(a, z), direct, max_relative = 1e-9);
                assert_relative_eq!(pow1p_m1_over_z(a, z), direct / z, max_relative = 1e-8);
            }
        }
        assert_eq!(pow1p_m1_over_z(0.7, 0.0), 1.0);
    }

    #[test]
    fn binomial_defect_is_continuous_across_branch() {
        for &a in &[0.0, 0.3, -0.4] {
            let below = binomial_defect_over_sq(a, 0.25 - 1e-12);
            let above = binomial_defect_over_sq(a, 0.25 + 1e-12);
            assert_relative_eq!(below, above, max_relative = 1e-10);
            // limit (a - 1) / 2
            assert_relative_eq!(binomial_defect_over_sq(a, 0.0), (a - 1.0) / 2.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn log_defect_series_and_direct_agree() {
        let x: f64 = 0.1;
        let direct = -x - (1.0 - x).ln();
        assert_relative_eq!(log_defect(x - 1e-13), direct, max_relative = 1e-10);
        assert_relative_eq!(log_defect(1e-5), 0.5e-10 + 1e-15 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn clenshaw_curtis_integrates_polynomials_exactly() {
        let (x, w) = clenshaw_curtis(16, 0.0, 2.0);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(7)).sum();
        assert_relative_eq!(integral, 2.0_f64.powi(8) / 8.0, max_relative = 1e-13);
        let (x, w) = clenshaw_curtis(15, -1.0, 1.0);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.exp()).sum();
        assert_relative_eq!(integral, 1.0_f64.exp() - (-1.0_f64).exp(), max_relative = 1e-13);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn finite_differences_are_fourth_order() {
        let err = |n: usize| {
            let h = 2.0 / (n - 1) as f64;
            let f: Vec<f64> = (0..n).map(|i| (-1.0 + i as f64 * h).sin()).collect();
            let d1 = fd4_first(&f, h);
            let d2 = fd4_second(&f, h);
            let e1 = (0..n).map(|i| (d1[i] - (-1.0 + i as f64 * h).cos()).abs()).fold(0.0, f64::max);
            let e2 = (0..n).map(|i| (d2[i] + (-1.0 + i as f64 * h).sin()).abs()).fold(0.0, f64::max);
            (e1, e2)
        };
        let (a1, a2) = err(41);
        let (b1, b2) = err(81);
        assert!(a1 / b1 > 12.0, "first derivative ratio {}", a1 / b1);
        assert!(a2 / b2 > 7.0, "second derivative ratio {}", a2 / b2);
    }

    #[test]
    fn bisect_finds_root_and_reports_bad_bracket() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0).unwrap();
        assert_relative_eq!(r, 2.0_f64.sqrt(), max_relative = 1e-15);
        assert!(bisect(|x| x * x + 1.0, 0.0, 2.0).is_err());
    }
}
