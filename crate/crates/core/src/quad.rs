// SPDX-License-Identifier: Apache-2.0

//! Gauss–Legendre rules and the cell self-interaction averages used on the
//! Gram diagonal.

use std::f64::consts::PI;

/// Nodes and weights of the `m`-point Gauss–Legendre rule on `[0, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Newton iteration from the Chebyshev-like initial guess
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { z } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (z * pm - pm1) / (z * z - 1.0);
            let dz = pm / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[m - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[m - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

/// Arithmetic–geometric mean.
pub fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a.abs().max(b.abs()) {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    0.5 * (a + b)
}

/// Mean of `|y|^(alpha-n)` over the ball of radius `h` about the origin: `(n/alpha) h^(alpha-n)`.
pub fn ball_average(dim: usize, alpha: f64, h: f64) -> f64 {
    dim as f64 / alpha * h.powf(alpha - dim as f64)
}

/// Mean of `|x - y|^(-p)` over independent uniform points `x, y` on the
/// lateral surface of a cylinder of radius `a` and length `len`.
///
/// The axial separation `t` has density `2 (len - t) / len^2` and the angular
/// separation is uniform on `[0, pi]`, so the average reduces to a 2-D
/// integral with an integrable corner singularity at `t = 0, theta = 0`
/// whenever `p < 2`.
pub fn band_average(a: f64, len: f64, p: f64) -> f64 {
    assert!(p > 0.0 && p < 2.0, "band cells need 0 < n - alpha < 2");
    let weight = |t: f64| 2.0 * (len - t) / (len * len);
    let t_near = a.min(len);
    let near = if p == 1.0 { near_newtonian(a, t_near, &weight) } else { near_general(a, t_near, p, &weight) };
    let far = if len > t_near {
        let (gx, gw) = gauss_legendre(8);
        let (tx, tw) = gauss_legendre(24);
        let span = (len / t_near).ln();
        let panels = span.ceil().max(1.0) as usize;
        let h = span / panels as f64;
        let mut acc = 0.0;
        for k in 0..panels {
            for (xi, wi) in gx.iter().zip(&gw) {
                let v = (k as f64 + xi) * h;
                let t = t_near * v.exp();
                let inner = if p == 1.0 {
                    1.0 / agm((t * t + 4.0 * a * a).sqrt(), t)
                } else {
                    // smooth in theta once t >= a
                    tx.iter()
                        .zip(&tw)
                        .map(|(y, wy)| {
                            let s = (0.5 * PI * y).sin();
                            wy * (t * t + 4.0 * a * a * s * s).powf(-0.5 * p)
                        })
                        .sum::<f64>()
                };
                acc += wi * h * t * weight(t) * inner;
            }
        }
        acc
    } else {
        0.0
    };
    near + far
}

/// `t in [0, t_near]` for `p = 1`, where the angular mean is `1 / agm(sqrt(t^2 + 4a^2), t)`.
fn near_newtonian(a: f64, t_near: f64, weight: &dyn Fn(f64) -> f64) -> f64 {
    let (gx, gw) = gauss_legendre(48);
    // t = t_near z^2 tames the logarithmic singularity at t = 0
    gx.iter()
        .zip(&gw)
        .map(|(z, w)| {
            let t = t_near * z * z;
            let inner = 1.0 / agm((t * t + 4.0 * a * a).sqrt(), t);
            w * 2.0 * t_near * z * weight(t) * inner
        })
        .sum()
}

/// `t in [0, t_near]` for general `p`, by Duffy's transformation of the two
/// triangles meeting at the singular corner.
fn near_general(a: f64, t_near: f64, p: f64, weight: &dyn Fn(f64) -> f64) -> f64 {
    let (gx, gw) = gauss_legendre(40);
    let tau_max = t_near / a;
    // u = z^m smooths the u^(1-p) behaviour left after the Duffy Jacobian
    let m = (2.0 / (2.0 - p)).ceil().max(2.0);
    let g = |tau: f64, theta: f64| {
        let s = (0.5 * theta).sin();
        (tau * tau + 4.0 * s * s).powf(-0.5 * p)
    };
    let mut acc = 0.0;
    for (z, wz) in gx.iter().zip(&gw) {
        let u = z.powf(m);
        let du = m * z.powf(m - 1.0);
        for (v, wv) in gx.iter().zip(&gw) {
            // triangle with theta / pi <= tau / tau_max
            let (tau1, th1) = (tau_max * u, PI * u * v);
            // triangle with tau / tau_max <= theta / pi
            let (tau2, th2) = (tau_max * u * v, PI * u);
            let jac = tau_max * PI * u * du;
            let f1 = weight(a * tau1) * g(tau1, th1);
            let f2 = weight(a * tau2) * g(tau2, th2);
            acc += wz * wv * jac * (f1 + f2);
        }
    }
    // d t = a d tau; angular density 1 / pi; kernel scale a^-p
    acc * a / PI * a.powf(-p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(9)).sum();
        assert!((s - 0.1).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn agm_known_value() {
        // agm(1, sqrt 2) = 1.19814023473559220744...
        assert!((agm(1.0, 2f64.sqrt()) - 1.198_140_234_735_592_2).abs() < 1e-14);
    }

    /// Monte Carlo mean of |x - y|^-p for points on the band.
    fn band_mc(a: f64, len: f64, p: f64, samples: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut acc = 0.0;
        for _ in 0..samples {
            let (z1, z2): (f64, f64) = (rng.gen::<f64>() * len, rng.gen::<f64>() * len);
            let (t1, t2): (f64, f64) = (rng.gen::<f64>() * 2.0 * PI, rng.gen::<f64>() * 2.0 * PI);
            let d2 = (z1 - z2).powi(2) + a * a * ((t1.cos() - t2.cos()).powi(2) + (t1.sin() - t2.sin()).powi(2));
            acc += d2.powf(-0.5 * p);
        }
        acc / samples as f64
    }

    #[test]
    fn band_average_matches_monte_carlo() {
        // p < 1 keeps the Monte Carlo variance finite
        for &(a, len) in &[(0.1, 1.0), (1.0, 0.5), (0.3, 0.3)] {
            let exact = band_average(a, len, 0.5);
            let mc = band_mc(a, len, 0.5, 400_000);
            assert!((exact - mc).abs() / exact < 5e-3, "a={a} len={len}: {exact} vs {mc}");
        }
    }

    #[test]
    fn newtonian_closed_form_agrees_with_duffy_route() {
        for &(a, len) in &[(0.05, 1.0), (1.0, 0.2), (0.5, 0.5), (1e-3, 2.0)] {
            let fast = band_average(a, len, 1.0);
            let slow = band_average(a, len, 1.0 + 1e-9);
            assert!((fast - slow).abs() / fast < 1e-6, "a={a} len={len}: {fast} vs {slow}");
        }
    }

    #[test]
    fn thin_band_approaches_wire_asymptotics() {
        // slender wire (a << L), p = 1: (2/L)(ln(2L/a) - 1)
        let (a, len): (f64, f64) = (1e-40, 1.0);
        let expected = 2.0 / len * ((2.0 * len / a).ln() - 1.0);
        let got = band_average(a, len, 1.0);
        assert!((got - expected).abs() / expected < 1e-3, "{got} vs {expected}");
    }

    #[test]
    fn ball_average_closed_form() {
        assert!((ball_average(3, 2.0, 0.1) - 15.0).abs() < 1e-12);
    }
}
