//! Deterministic quadrature: adaptive Gauss–Legendre panels on an interval,
//! radial–angular product rules over balls and spheres in d = 2, 3.
//!
//! The angular factor uses a trapezoid rule on the circle (d = 2, spectrally
//! accurate for smooth periodic integrands) and a Gauss–Legendre × uniform
//! product on the sphere (d = 3). The radial factor is adaptive bisection
//! with an embedded error estimate, so weakly singular profiles such as
//! `r^{d-1} g(r)` are refined automatically.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::geom::unit_sphere_area;

/// Nodes and weights of the `N`-point Gauss–Legendre rule on `[-1, 1]`,
/// computed once by Newton iteration on the Legendre polynomial.
fn gauss_legendre_16() -> &'static ([f64; 16], [f64; 16]) {
    static RULE: OnceLock<([f64; 16], [f64; 16])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 16usize;
        let mut nodes = [0.0; 16];
        let mut weights = [0.0; 16];
        for i in 0..n {
            // Chebyshev-style initial guess for the i-th root.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_and_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_and_derivative(n, x);
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// 16-point Gauss–Legendre approximation of `∫_a^b f`.
pub fn gl16<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gauss_legendre_16();
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Adaptive panel integration of `f` on `[a, b]`.
///
/// Bisects panels until the two-half refinement agrees with the single-panel
/// value within `tol` (scaled by panel share). Returns the value and an
/// accumulated error estimate; errs if the depth limit is hit before the
/// estimate drops below the tolerance.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    const MAX_DEPTH: usize = 28;
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        floor: f64,
        depth: usize,
    ) -> (f64, f64) {
        let mid = 0.5 * (a + b);
        let left = gl16(f, a, mid);
        let right = gl16(f, mid, b);
        let err = (left + right - whole).abs();
        // `floor` keeps the per-panel target above floating-point noise.
        if err <= tol.max(floor) || depth >= MAX_DEPTH {
            (left + right, err)
        } else {
            let (lv, le) = recurse(f, a, mid, left, 0.5 * tol, floor, depth + 1);
            let (rv, re) = recurse(f, mid, b, right, 0.5 * tol, floor, depth + 1);
            (lv + rv, le + re)
        }
    }
    if !(b > a) {
        return Ok((0.0, 0.0));
    }
    let whole = gl16(f, a, b);
    let scale = whole.abs().max(1.0);
    let floor = 1e-15 * scale;
    let (value, err) = recurse(f, a, b, whole, tol * scale, floor, 0);
    // The promise is on the accumulated estimate, not on any single panel.
    if err > tol * scale {
        return Err(Error::QuadratureResidual { residual: err, tolerance: tol * scale });
    }
    Ok((value, err))
}

/// Average of `f` over the sphere of radius `r` around `center` (d = 2, 3).
///
/// `resolution` scales the number of angular nodes; the default (1) is
/// 64 points on the circle and a 24 × 48 product grid on the sphere.
pub fn sphere_average<F: Fn(&[f64]) -> f64>(
    center: &[f64],
    r: f64,
    f: &F,
    resolution: usize,
) -> Result<f64> {
    let d = center.len();
    match d {
        2 => {
            let k = 64 * resolution;
            let mut acc = 0.0;
            let mut y = [0.0; 2];
            for j in 0..k {
                let t = 2.0 * std::f64::consts::PI * (j as f64) / (k as f64);
                y[0] = center[0] + r * t.cos();
                y[1] = center[1] + r * t.sin();
                acc += f(&y);
            }
            Ok(acc / k as f64)
        }
        3 => {
            let (nodes, weights) = gauss_legendre_16();
            let n_phi = 48 * resolution;
            let mut acc = 0.0;
            let mut y = [0.0; 3];
            // mu = cos(theta) panels: split [-1,1] into `resolution` panels of GL16.
            let panels = resolution;
            for p in 0..panels {
                let lo = -1.0 + 2.0 * p as f64 / panels as f64;
                let hi = -1.0 + 2.0 * (p as f64 + 1.0) / panels as f64;
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                for (xm, wm) in nodes.iter().zip(weights.iter()) {
                    let mu: f64 = mid + half * xm;
                    let s = (1.0 - mu * mu).max(0.0).sqrt();
                    let mut phi_acc = 0.0;
                    for j in 0..n_phi {
                        let phi = 2.0 * std::f64::consts::PI * (j as f64) / (n_phi as f64);
                        y[0] = center[0] + r * s * phi.cos();
                        y[1] = center[1] + r * s * phi.sin();
                        y[2] = center[2] + r * mu;
                        phi_acc += f(&y);
                    }
                    acc += wm * half * phi_acc / n_phi as f64;
                }
            }
            // ∫_{-1}^{1} dmu weights sum to 2; average needs /2.
            Ok(acc / 2.0)
        }
        _ => Err(Error::Unsupported(format!(
            "sphere quadrature implemented for d = 2, 3 only (got d = {d})"
        ))),
    }
}

/// Integral of `f` over the spherical shell `r_lo ≤ |y - center| ≤ r_hi`
/// by the radial–angular product rule, adaptive in the radius.
pub fn shell_integral<F: Fn(&[f64]) -> f64>(
    center: &[f64],
    r_lo: f64,
    r_hi: f64,
    f: &F,
    tol: f64,
    resolution: usize,
) -> Result<f64> {
    let d = center.len();
    if d != 2 && d != 3 {
        return Err(Error::Unsupported(format!(
            "ball quadrature implemented for d = 2, 3 only (got d = {d})"
        )));
    }
    let area = unit_sphere_area(d);
    let profile = |r: f64| -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let avg = sphere_average(center, r, f, resolution).expect("dim checked above");
        area * r.powi(d as i32 - 1) * avg
    };
    let (value, _err) = integrate_adaptive(&profile, r_lo, r_hi, tol)?;
    Ok(value)
}

/// Integral of `f` over the ball `B(center, radius)`.
pub fn ball_integral<F: Fn(&[f64]) -> f64>(
    center: &[f64],
    radius: f64,
    f: &F,
    tol: f64,
) -> Result<f64> {
    shell_integral(center, 0.0, radius, f, tol, 1)
}
