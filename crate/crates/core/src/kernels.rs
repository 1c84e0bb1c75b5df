//! Memory kernels of the kinetic operator and the related time factors.
//!
//! For damping rates `g = (g1, g2, g3, g4)` (the fourth belongs to the base
//! frequency) and `G = g1 + g2 + g3 + g4`,
//! `Z^j(t0) = int_0^t0 e^{-g_j (t0 - l)} prod_{m != j} sinh(g_m l) / sinh(g_m t0) dl`.
//! Expanding the sinh product gives
//! `Z^j = P_j sum_{S subset of the other indices} (-1)^{|S|} E(2 g_S, G)` with
//! `E(x, y) = (e^{-x t0} - e^{-y t0}) / (y - x)` and
//! `P_j = prod_{m != j} (1 - e^{-2 g_m t0})^{-1}`. `E` is evaluated through
//! `expm1`, which is exact in the degenerate limit `x = y` where it equals
//! `t0 e^{-y t0}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, integrate_adaptive};

/// Four damping rates, the last one at the base frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaQuad(pub [f64; 4]);

impl GammaQuad {
    pub fn new(g: [f64; 4]) -> Result<Self> {
        if g.iter().any(|x| !(x.is_finite() && *x >= 1.0)) {
            return Err(Error::InvalidParam(format!("damping rates must be finite and >= 1, got {g:?}")));
        }
        Ok(Self(g))
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// All four kernels at one time with their common limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelBundle {
    pub tau0: f64,
    pub quad: GammaQuad,
    pub values: [f64; 4],
    pub limit: f64,
}

impl KernelBundle {
    pub fn new(tau0: f64, quad: GammaQuad) -> Self {
        let values = [0, 1, 2, 3].map(|j| z_closed(tau0, &quad, j));
        Self { tau0, quad, values, limit: z_infinity(&quad) }
    }
}

/// `(e^{-x t} - e^{-y t}) / (y - x)`, continuous across `x = y`.
pub fn exp_difference(x: f64, y: f64, t: f64) -> f64 {
    let u = (y - x) * t;
    if u.abs() <= 1.0 {
        // e^{-y t} t (e^u - 1) / u
        let phi1 = if u == 0.0 { 1.0 } else { u.exp_m1() / u };
        (-y * t).exp() * t * phi1
    } else {
        ((-x * t).exp() - (-y * t).exp()) / (y - x)
    }
}

/// `1 / G`.
pub fn z_infinity(quad: &GammaQuad) -> f64 {
    1.0 / quad.total()
}

fn others(j: usize) -> [usize; 3] {
    match j {
        0 => [1, 2, 3],
        1 => [0, 2, 3],
        2 => [0, 1, 3],
        _ => [0, 1, 2],
    }
}

/// `prod_{k != j} (1 - e^{-2 g_k t0})`.
pub fn sinh_normaliser(tau0: f64, quad: &GammaQuad, j: usize) -> f64 {
    others(j).iter().map(|&k| -(-2.0 * quad.0[k] * tau0).exp_m1()).product()
}

// Integrand of the time factor in a form free of overflow.
fn tcal_integrand(tau0: f64, quad: &GammaQuad, j: usize, l: f64) -> f64 {
    let g = quad.total();
    (-g * (tau0 - l)).exp() * others(j).iter().map(|&k| -(-2.0 * quad.0[k] * l).exp_m1()).product::<f64>()
}

// Fixed graded Gauss-Legendre rule for the time factor, refined towards the
// boundary layer at l = t0.
fn tcal_graded(tau0: f64, quad: &GammaQuad, j: usize) -> f64 {
    let (x, w) = gauss_legendre(12);
    let mut acc = 0.0;
    let mut lo = 0.0;
    for k in 1..=52 {
        let hi = if k == 52 { tau0 } else { tau0 * (1.0 - 0.5f64.powi(k)) };
        let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        acc += h * x.iter().zip(&w).map(|(xi, wi)| wi * tcal_integrand(tau0, quad, j, c + h * xi)).sum::<f64>();
        lo = hi;
    }
    acc
}

/// `Z^j(t0)` in closed form; `j` in `0..4`, the last index is the base frequency.
///
/// When `prod_{k != j}(1 - e^{-2 g_k t0}) < 1e-3` the alternating sum loses
/// too many digits and the time factor is integrated by a fixed graded rule.
pub fn z_closed(tau0: f64, quad: &GammaQuad, j: usize) -> f64 {
    assert!(j < 4, "kernel index out of range");
    if tau0 <= 0.0 {
        return 0.0;
    }
    if tau0.is_infinite() {
        return z_infinity(quad);
    }
    let norm = sinh_normaliser(tau0, quad, j);
    if norm < 1e-3 {
        return tcal_graded(tau0, quad, j) / norm;
    }
    let g = quad.total();
    let o = others(j);
    let mut terms = [0.0; 8];
    for (mask, t) in terms.iter_mut().enumerate() {
        let mut sigma = 0.0;
        let mut sign = 1.0;
        for (b, &k) in o.iter().enumerate() {
            if mask >> b & 1 == 1 {
                sigma += quad.0[k];
                sign = -sign;
            }
        }
        *t = sign * exp_difference(2.0 * sigma, g, tau0);
    }
    // positive and negative parts separately
    let pos: f64 = terms.iter().filter(|t| **t > 0.0).sum();
    let neg: f64 = terms.iter().filter(|t| **t < 0.0).sum();
    ((pos + neg) / norm).max(0.0)
}

/// `Z^j(t0)` by adaptive quadrature of its defining integral.
pub fn z_quadrature(tau0: f64, quad: &GammaQuad, j: usize) -> Result<f64> {
    if j >= 4 {
        return Err(Error::InvalidParam(format!("kernel index {j} out of range")));
    }
    if !(tau0 >= 0.0) {
        return Err(Error::InvalidParam(format!("tau0 must be >= 0, got {tau0}")));
    }
    if tau0 == 0.0 {
        return Ok(0.0);
    }
    let g = quad.0;
    let o = others(j);
    let f = |l: f64| {
        let mut v = (-g[j] * (tau0 - l)).exp();
        for &m in &o {
            let a = g[m];
            // sinh(a l) / sinh(a t0) in scaled form, stable for large a t0
            let ratio = if a * tau0 > 500.0 {
                (-a * (tau0 - l)).exp()
            } else {
                (-a * (tau0 - l)).exp() * (-2.0 * a * l).exp_m1() / (-2.0 * a * tau0).exp_m1()
            };
            v *= ratio;
        }
        v
    };
    integrate_adaptive(&f, 0.0, tau0, 1e-12)
}

/// `T = int_0^t e^{-2 g_4 (t - l) - G l} dl`, which is `E(2 g_4, G)`.
pub fn t_factor(tau: f64, quad: &GammaQuad) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    exp_difference(2.0 * quad.0[3], quad.total(), tau)
}

/// `int_0^t0 e^{-G t0} e^{g_j l} prod_{k != j} (e^{g_k l} - e^{-g_k l}) dl`,
/// evaluated as `int_0^t0 e^{-G (t0 - l)} prod_{k != j} (1 - e^{-2 g_k l}) dl`.
pub fn tcal_factor(tau0: f64, quad: &GammaQuad, j: usize) -> Result<f64> {
    if j >= 4 {
        return Err(Error::InvalidParam(format!("kernel index {j} out of range")));
    }
    if !(tau0 >= 0.0) {
        return Err(Error::InvalidParam(format!("tau0 must be >= 0, got {tau0}")));
    }
    if tau0 == 0.0 {
        return Ok(0.0);
    }
    if tau0.is_infinite() {
        return Ok(z_infinity(quad));
    }
    integrate_adaptive(&|l| tcal_integrand(tau0, quad, j, l), 0.0, tau0, 1e-13)
}

/// `Z^j` recovered from the time factor.
pub fn z_from_tcal(tau0: f64, quad: &GammaQuad, j: usize) -> Result<f64> {
    if tau0 == 0.0 {
        return Ok(0.0);
    }
    Ok(tcal_factor(tau0, quad, j)? / sinh_normaliser(tau0, quad, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quad(rng: &mut ChaCha8Rng) -> GammaQuad {
        GammaQuad::new([0; 4].map(|_| 1.0 + rng.gen::<f64>() * 6.0)).unwrap()
    }

    #[test]
    fn boundary_values() {
        let q = GammaQuad::new([1.0; 4]).unwrap();
        for j in 0..4 {
            assert_eq!(z_closed(0.0, &q, j), 0.0);
            assert!((z_closed(40.0, &q, j) - 0.25).abs() < 1e-15);
        }
        assert_eq!(z_infinity(&GammaQuad::new([1.0, 1.0, 1.0, 5.0]).unwrap()), 0.125);
        let z10 = z_quadrature(10.0, &q, 0).unwrap();
        assert!((z10 - 0.25).abs() < 1e-4);
        assert!(GammaQuad::new([0.5, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = random_quad(&mut rng);
            let tau0 = 10f64.powf(rng.gen_range(-3.0..1.3));
            for j in 0..4 {
                let a = z_closed(tau0, &q, j);
                let b = z_quadrature(tau0, &q, j).unwrap();
                assert!((a - b).abs() < 1e-10, "{tau0} {q:?} {j}: {a} {b}");
            }
        }
    }

    #[test]
    fn degenerate_denominators() {
        // 2 g_4 = G for (1, 1, 1, 3); perturb down to 1e-12
        for eps in [0.0, 1e-12, 1e-9, 1e-6, 1e-3] {
            let q = GammaQuad::new([1.0, 1.0, 1.0, 3.0 + eps]).unwrap();
            for tau0 in [0.3, 1.0, 4.0] {
                for j in 0..4 {
                    let a = z_closed(tau0, &q, j);
                    let b = z_quadrature(tau0, &q, j).unwrap();
                    assert!(a.is_finite() && (a - b).abs() < 1e-10, "{eps} {tau0} {j}: {a} {b}");
                }
            }
        }
        // 2 (g_j + g_l) = G with j = 0, l = 1
        let q = GammaQuad::new([1.0, 1.5, 1.25, 1.25]).unwrap();
        for j in 0..4 {
            let a = z_closed(2.0, &q, j);
            let b = z_quadrature(2.0, &q, j).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn exp_difference_limit() {
        let t: f64 = 1.7;
        assert!((exp_difference(2.0, 2.0, t) - t * (-2.0 * t).exp()).abs() < 1e-16);
        let near = exp_difference(2.0, 2.0 + 1e-12, t);
        assert!((near - t * (-2.0 * t).exp()).abs() < 1e-12);
        let far = exp_difference(1.0, 3.0, t);
        assert!((far - ((-t).exp() - (-3.0 * t).exp()) / 2.0).abs() < 1e-16);
    }

    #[test]
    fn lemma_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let q = random_quad(&mut rng);
            let tau0 = rng.gen_range(0.0..8.0);
            for j in 0..4 {
                let z = z_closed(tau0, &q, j);
                assert!(z >= 0.0 && z <= tau0.min(1.0 / q.0[j]) + 1e-15, "{tau0} {q:?} {j} {z}");
            }
        }
    }

    #[test]
    fn exponential_approach_to_limit() {
        // frozen regression constant for |Z^j - 1/G| <= C e^{-2 t0}
        const C_FROZEN: f64 = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut worst = 0.0f64;
        for _ in 0..2000 {
            let q = random_quad(&mut rng);
            let tau0 = rng.gen_range(0.0..10.0);
            for j in 0..4 {
                let r = (z_closed(tau0, &q, j) - z_infinity(&q)).abs() * (2.0 * tau0).exp();
                worst = worst.max(r);
            }
        }
        assert!(worst <= C_FROZEN, "{worst}");
    }

    #[test]
    fn time_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let q = random_quad(&mut rng);
            let tau = rng.gen_range(0.0..3.0);
            let direct = integrate_adaptive(
                &|l| (-2.0 * q.0[3] * (tau - l) - q.total() * l).exp(),
                0.0,
                tau,
                1e-14,
            )
            .unwrap();
            let t = t_factor(tau, &q);
            assert!((t - direct).abs() < 1e-10);
            assert!((t - tau).abs() <= 3.0 * tau * tau * q.total() + 1e-15);
            let tau0 = rng.gen_range(0.01..6.0);
            for j in 0..4 {
                let tc = tcal_factor(tau0, &q, j).unwrap();
                assert!(tc >= 0.0 && tc <= 1.0 / q.total() + 1e-15);
                let z = z_from_tcal(tau0, &q, j).unwrap();
                assert!((z - z_closed(tau0, &q, j)).abs() < 1e-8);
            }
        }
        let q = GammaQuad::new([1.0, 1.0, 1.0, 3.0]).unwrap();
        assert!((t_factor(0.8, &q) - 0.8 * (-6.0 * 0.8f64).exp()).abs() < 1e-16);
        let ones = GammaQuad::new([1.0; 4]).unwrap();
        assert!((z_from_tcal(30.0, &ones, 2).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(tcal_factor(0.0, &ones, 1).unwrap(), 0.0);
    }

    #[test]
    fn monotone_limit() {
        let base = GammaQuad::new([1.0, 2.0, 3.0, 4.0]).unwrap();
        for k in 0..4 {
            let mut g = base.0;
            g[k] += 0.5;
            assert!(z_infinity(&GammaQuad::new(g).unwrap()) < z_infinity(&base));
        }
    }

    #[test]
    fn time_derivative_is_bounded_by_rate() {
        // |dZ^j/dt0| <= C g(R^2) with g(R^2) the largest rate; C frozen
        const C_FROZEN: f64 = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..2000 {
            let q = random_quad(&mut rng);
            let gmax = q.0.iter().cloned().fold(1.0, f64::max);
            let t = rng.gen_range(0.01..5.0);
            let h = 1e-6;
            for j in 0..4 {
                let dz = (z_closed(t + h, &q, j) - z_closed(t - h, &q, j)) / (2.0 * h);
                assert!(dz.abs() <= C_FROZEN * gmax, "{dz} {gmax}");
            }
        }
    }
}
