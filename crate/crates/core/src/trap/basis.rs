//! Gapless-plane basis functions for rectangular electrodes.
//!
//! A rectangle held at 1 V in an otherwise grounded infinite plane produces
//! `phi = (1/2pi) sum_corners s_ij F(x_i - x, y_j - y, z)` with
//! `F(a, b, z) = atan(a b / (z R))`, `R = sqrt(a^2 + b^2 + z^2)` and corner
//! signs `s_22 = s_11 = +1`, `s_12 = s_21 = -1`. Each corner term is harmonic
//! in `(a, b, z)`, so the derivatives below are assembled per corner.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use super::{Point, Rect};

const INV_2PI: f64 = 0.5 / PI;

struct Corner {
    a: f64,
    b: f64,
    sign: f64,
}

fn corners(r: &Rect, p: Point) -> [Corner; 4] {
    let (a1, a2) = (r.x1 - p.x, r.x2 - p.x);
    let (b1, b2) = (r.y1 - p.y, r.y2 - p.y);
    [
        Corner { a: a2, b: b2, sign: 1.0 },
        Corner { a: a1, b: b2, sign: -1.0 },
        Corner { a: a2, b: b1, sign: -1.0 },
        Corner { a: a1, b: b1, sign: 1.0 },
    ]
}

/// Potential per volt of rectangle `r` at `p`. Requires `p.z > 0`.
pub fn rect_potential(r: &Rect, p: Point) -> f64 {
    let z = p.z;
    let sum: f64 = corners(r, p)
        .iter()
        .map(|c| {
            let rr = (c.a * c.a + c.b * c.b + z * z).sqrt();
            c.sign * (c.a * c.b / (z * rr)).atan()
        })
        .sum();
    INV_2PI * sum
}

/// Gradient (1/um) of [`rect_potential`] with respect to the observation point.
pub fn rect_gradient(r: &Rect, p: Point) -> Vector3<f64> {
    let z = p.z;
    let z2 = z * z;
    let mut g = Vector3::zeros();
    for c in corners(r, p) {
        let (a, b) = (c.a, c.b);
        let aa = a * a + z2;
        let bb = b * b + z2;
        let r2 = a * a + b * b + z2;
        let rr = r2.sqrt();
        let f_a = b * z / (rr * aa);
        let f_b = a * z / (rr * bb);
        let f_z = -a * b * (r2 + z2) / (rr * aa * bb);
        // a = x_i - x, b = y_j - y
        g += c.sign * Vector3::new(-f_a, -f_b, f_z);
    }
    g * INV_2PI
}

/// Hessian (1/um^2) of [`rect_potential`] with respect to the observation point.
pub fn rect_hessian(r: &Rect, p: Point) -> Matrix3<f64> {
    let z = p.z;
    let z2 = z * z;
    let mut h = Matrix3::zeros();
    for c in corners(r, p) {
        let (a, b) = (c.a, c.b);
        let aa = a * a + z2;
        let bb = b * b + z2;
        let r2 = a * a + b * b + z2;
        let rr = r2.sqrt();
        let r3 = rr * r2;

        let f_aa = -a * b * z * (1.0 / (r3 * aa) + 2.0 / (rr * aa * aa));
        let f_bb = -a * b * z * (1.0 / (r3 * bb) + 2.0 / (rr * bb * bb));
        let f_ab = z / r3;
        let f_az = b * (1.0 / (rr * aa) - z2 / (r3 * aa) - 2.0 * z2 / (rr * aa * aa));
        let f_bz = a * (1.0 / (rr * bb) - z2 / (r3 * bb) - 2.0 * z2 / (rr * bb * bb));
        // each corner term is harmonic in (a, b, z)
        let f_zz = -(f_aa + f_bb);

        // d/dx = -d/da, d/dy = -d/db, d/dz = d/dz
        let corner = Matrix3::new(
            f_aa, f_ab, -f_az, //
            f_ab, f_bb, -f_bz, //
            -f_az, -f_bz, f_zz,
        );
        h += c.sign * corner;
    }
    h * INV_2PI
}
