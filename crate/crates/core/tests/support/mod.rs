//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1], via Newton on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Panel edges on [a, b], graded towards the peak at `c` so that each panel is
/// at most a quarter of its distance-plus-height from the peak.
fn panels(a: f64, b: f64, c: f64, z: f64) -> Vec<f64> {
    let mut cuts = vec![a, b];
    if c > a && c < b {
        cuts.push(c);
    }
    cuts.sort_by(f64::total_cmp);
    let mut edges = vec![a];
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mut x = lo;
        while x < hi {
            let step = if lo >= c {
                0.25 * (x - c + z)
            } else {
                0.2 * (c - x + z)
            };
            x = (x + step).min(hi);
            edges.push(x);
        }
    }
    edges
}

/// Integrate `f(x', y')` over the rectangle with composite Gauss-Legendre
/// panels concentrated around (cx, cy).
pub fn integrate_rect<F: Fn(f64, f64) -> f64>(
    rect: [f64; 4],
    cx: f64,
    cy: f64,
    z: f64,
    f: F,
) -> f64 {
    let gl = gauss_legendre(20);
    let xs = panels(rect[0], rect[1], cx, z);
    let ys = panels(rect[2], rect[3], cy, z);
    let mut total = 0.0;
    for xw in xs.windows(2) {
        let (xm, xh) = (0.5 * (xw[0] + xw[1]), 0.5 * (xw[1] - xw[0]));
        for yw in ys.windows(2) {
            let (ym, yh) = (0.5 * (yw[0] + yw[1]), 0.5 * (yw[1] - yw[0]));
            let mut s = 0.0;
            for &(u, wu) in &gl {
                for &(v, wv) in &gl {
                    s += wu * wv * f(xm + xh * u, ym + yh * v);
                }
            }
            total += s * xh * yh;
        }
    }
    total
}

/// Potential of a unit-volt rectangle at (x, y, z) from the plane Green's function.
pub fn quad_potential(rect: [f64; 4], x: f64, y: f64, z: f64) -> f64 {
    integrate_rect(rect, x, y, z, |xp, yp| {
        let r2 = (xp - x).powi(2) + (yp - y).powi(2) + z * z;
        z / (2.0 * PI * r2 * r2.sqrt())
    })
}

/// Gradient of [`quad_potential`] with respect to the field point.
pub fn quad_gradient(rect: [f64; 4], x: f64, y: f64, z: f64) -> [f64; 3] {
    let k = |dx: f64, dy: f64| {
        let r2 = dx * dx + dy * dy + z * z;
        (r2, r2 * r2 * r2.sqrt())
    };
    let gx = integrate_rect(rect, x, y, z, |xp, yp| {
        let (_, r5) = k(xp - x, yp - y);
        3.0 * z * (xp - x) / (2.0 * PI * r5)
    });
    let gy = integrate_rect(rect, x, y, z, |xp, yp| {
        let (_, r5) = k(xp - x, yp - y);
        3.0 * z * (yp - y) / (2.0 * PI * r5)
    });
    let gz = integrate_rect(rect, x, y, z, |xp, yp| {
        let (r2, r5) = k(xp - x, yp - y);
        (r2 - 3.0 * z * z) / (2.0 * PI * r5)
    });
    [gx, gy, gz]
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn vec_rel_err(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d: f64 = (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    d / n
}
