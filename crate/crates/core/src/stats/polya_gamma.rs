//! Exact Pólya-Gamma PG(1, c) draws.
//!
//! Devroye-style alternating-series rejection sampler: the proposal mixes a
//! truncated exponential (right of the cut point `TRUNC`) with a truncated
//! inverse-Gaussian (left of it), and acceptance is decided by the alternating
//! series of the Jacobi density, so no truncation bias is introduced.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Exp1, StandardNormal};

use super::special::ln_normal_cdf;
use crate::rng::Rng;

const TRUNC: f64 = 0.64;
const TRUNC_RECIP: f64 = 1.0 / 0.64;

/// One draw from PG(1, c). Symmetric in `c`.
pub fn sample_pg1(c: f64, rng: &mut Rng) -> f64 {
    let z = 0.5 * c.abs();
    let k = 0.125 * PI * PI + 0.5 * z * z;
    let p_exp = exponential_mass(z, k);
    loop {
        let x = if rng.random::<f64>() < p_exp {
            TRUNC + rng.sample::<f64, _>(Exp1) / k
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// PG(b, c) for integer `b` as a sum of `b` independent PG(1, c) draws.
pub fn sample_pg(b: u32, c: f64, rng: &mut Rng) -> f64 {
    (0..b).map(|_| sample_pg1(c, rng)).sum()
}

/// E[PG(1, c)] = tanh(c/2) / (2c), with limit 1/4 at zero.
pub fn pg1_mean(c: f64) -> f64 {
    if c.abs() < 1e-6 {
        0.25 - c * c / 48.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

/// Probability of drawing from the exponential piece of the proposal.
fn exponential_mass(z: f64, k: f64) -> f64 {
    let sqrt_inv_t = (1.0 / TRUNC).sqrt();
    let b = sqrt_inv_t * (TRUNC * z - 1.0);
    let a = -sqrt_inv_t * (TRUNC * z + 1.0);
    let x0 = k.ln() + k * TRUNC;
    let xb = x0 - z + ln_normal_cdf(b);
    let xa = x0 + z + ln_normal_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Inverse-Gaussian(1/z, 1) restricted to (0, TRUNC).
fn truncated_inverse_gaussian(z: f64, rng: &mut Rng) -> f64 {
    if TRUNC_RECIP > z {
        // mean beyond the cut: draw from the truncated Lévy and accept
        loop {
            let (mut e1, mut e2): (f64, f64) = (rng.sample(Exp1), rng.sample(Exp1));
            while e1 * e1 > 2.0 * e2 / TRUNC {
                e1 = rng.sample(Exp1);
                e2 = rng.sample(Exp1);
            }
            let d = 1.0 + e1 * TRUNC;
            let x = TRUNC / (d * d);
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        let mu = 1.0 / z;
        loop {
            let n: f64 = rng.sample(StandardNormal);
            let y = n * n;
            let mu_y = mu * y;
            let mut x = mu + 0.5 * mu * mu_y - 0.5 * mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < TRUNC {
                return x;
            }
        }
    }
}

/// n-th coefficient of the alternating series for the J*(1, 0) density.
fn coef(n: u32, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let h = n as f64 + 0.5;
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn draws_are_positive_and_finite() {
        let mut rng = RngStream::new(9, 0).rng();
        for c in [-40.0, -3.0, 0.0, 1e-9, 0.5, 7.0, 200.0] {
            for _ in 0..200 {
                let d = sample_pg1(c, &mut rng);
                assert!(d.is_finite() && d > 0.0, "c={c} d={d}");
            }
        }
    }

    #[test]
    fn mean_identity_limit() {
        assert!((pg1_mean(0.0) - 0.25).abs() < 1e-15);
        assert!((pg1_mean(2.0) - 1f64.tanh() / 4.0).abs() < 1e-15);
        assert!((pg1_mean(1e-7) - 0.25).abs() < 1e-12);
    }
}
