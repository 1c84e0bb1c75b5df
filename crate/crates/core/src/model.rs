//! Physical model data: dissipation spectrum, forcing profile, scalings and
//! the weighted sup-norms used throughout.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radial Gaussian forcing `b(s) = b0 exp(-|s|^2 / (2 sigma^2))`.
///
/// A negative `b0` is accepted; every downstream formula uses `b^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcingProfile {
    pub b0: f64,
    pub sigma: f64,
}

impl ForcingProfile {
    pub fn new(b0: f64, sigma: f64) -> Result<Self> {
        if !b0.is_finite() {
            return Err(Error::InvalidParam("b0 must be finite".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParam(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { b0, sigma })
    }

    #[inline]
    pub fn eval_r2(&self, r2: f64) -> f64 {
        self.b0 * (-r2 / (2.0 * self.sigma * self.sigma)).exp()
    }

    #[inline]
    pub fn squared_r2(&self, r2: f64) -> f64 {
        self.b0 * self.b0 * (-r2 / (self.sigma * self.sigma)).exp()
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        self.eval_r2(norm2(s))
    }
}

/// Model parameters. Serialized as a flat JSON object with keys
/// `d, L, r_star, b0, sigma, epsilon`; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub r_star: f64,
    pub b0: f64,
    pub sigma: f64,
    pub epsilon: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { d: 3, l: 16.0, r_star: 1.0, b0: 1.0, sigma: 1.0, epsilon: 0.1 }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidParam(format!("d must be >= 2, got {}", self.d)));
        }
        if !(self.l >= 2.0) {
            return Err(Error::InvalidParam(format!("L must be >= 2, got {}", self.l)));
        }
        if !(self.r_star > 0.0 && self.r_star.is_finite()) {
            return Err(Error::InvalidParam("r_star must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.5) {
            return Err(Error::InvalidParam(format!(
                "epsilon must lie in (0, 1/2], got {}",
                self.epsilon
            )));
        }
        ForcingProfile::new(self.b0, self.sigma)?;
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let p: ModelParams =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    pub fn forcing(&self) -> ForcingProfile {
        ForcingProfile { b0: self.b0, sigma: self.sigma }
    }

    /// Dissipation rate as a function of `|s|^2`: `(1 + y)^{r_star}`.
    #[inline]
    pub fn gamma_r2(&self, r2: f64) -> f64 {
        gamma_profile(r2, self.r_star)
    }

    pub fn gamma(&self, s: &[f64]) -> f64 {
        self.gamma_r2(norm2(s))
    }

    /// Stationary variance `b^2 / gamma` of the linear mode at `|s|^2 = r2`.
    #[inline]
    pub fn b_coeff_r2(&self, r2: f64) -> f64 {
        self.forcing().squared_r2(r2) / self.gamma_r2(r2)
    }

    pub fn b_coeff(&self, s: &[f64]) -> f64 {
        self.b_coeff_r2(norm2(s))
    }

    /// Scale factor: 1 for `d >= 3`, `(ln L)^{-1/2}` for `d = 2`.
    pub fn chi(&self) -> f64 {
        chi(self.d, self.l)
    }

    /// Nonlinear coupling `rho = epsilon L chi`.
    pub fn rho(&self) -> f64 {
        self.epsilon * self.l * self.chi()
    }
}

#[inline]
pub fn gamma_profile(r2: f64, r_star: f64) -> f64 {
    if r_star == 1.0 {
        1.0 + r2
    } else {
        (1.0 + r2).powf(r_star)
    }
}

pub fn chi(d: usize, l: f64) -> f64 {
    if d >= 3 {
        1.0
    } else {
        1.0 / l.ln().sqrt()
    }
}

#[inline]
pub fn norm2(s: &[f64]) -> f64 {
    s.iter().map(|x| x * x).sum()
}

/// `<z> = max(|z|, 1)`.
#[inline]
pub fn japanese(z: &[f64]) -> f64 {
    norm2(z).sqrt().max(1.0)
}

/// Values of a function at a finite set of frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<Complex64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::InvalidField(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if let Some(first) = points.first() {
            if points.iter().any(|p| p.len() != first.len()) {
                return Err(Error::InvalidField("points of mixed dimension".into()));
            }
        }
        Ok(Self { points, values })
    }

    pub fn from_real(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        Self::new(points, values.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
    }

    pub fn sample(points: Vec<Vec<f64>>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = points.iter().map(|p| Complex64::new(f(p), 0.0)).collect();
        Self { points, values }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Grid supremum of `|f(z)| <z>^r`.
pub fn weighted_norm(f: &SpectralField, r: f64) -> Result<f64> {
    if f.is_empty() {
        return Err(Error::InvalidField("empty grid".into()));
    }
    let mut best = 0.0f64;
    for (p, v) in f.points.iter().zip(&f.values) {
        let a = v.norm();
        if !a.is_finite() {
            return Err(Error::InvalidField("non-finite value on grid".into()));
        }
        best = best.max(a * japanese(p).powf(r));
    }
    Ok(best)
}

/// Cubic grid `spacing * k`, `k` in `[-half_count, half_count]^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub dim: usize,
    pub spacing: f64,
    pub half_count: usize,
}

impl UniformGrid {
    pub fn new(dim: usize, spacing: f64, half_count: usize) -> Self {
        Self { dim, spacing, half_count }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let n = 2 * self.half_count + 1;
        let total = n.pow(self.dim as u32);
        let mut out = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut p = vec![0.0; self.dim];
            for c in p.iter_mut() {
                let k = (idx % n) as f64 - self.half_count as f64;
                idx /= n;
                *c = k * self.spacing;
            }
            out.push(p);
        }
        out
    }
}

/// `max_{|a| <= n1} sup_grid |d^a f(z)| <z>^n2` with derivatives by central
/// differences of step equal to the grid spacing.
pub fn smooth_seminorm(
    phi: &dyn Fn(&[f64]) -> f64,
    n1: usize,
    n2: f64,
    grid: &UniformGrid,
) -> Result<f64> {
    if !(grid.spacing.abs() > 0.0) {
        return Err(Error::InvalidParam("grid spacing is zero".into()));
    }
    let h = grid.spacing.abs();
    let indices = multi_indices(grid.dim, n1);
    let mut best = 0.0f64;
    let mut probe = vec![0.0; grid.dim];
    for z in grid.points() {
        let w = japanese(&z).powf(n2);
        for alpha in &indices {
            let v = central_difference(phi, &z, alpha, h, &mut probe);
            best = best.max(v.abs() * w);
        }
    }
    Ok(best)
}

fn multi_indices(dim: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; dim]];
    for _ in 0..max_order {
        let mut next = out.clone();
        for a in &out {
            for i in 0..dim {
                let mut b = a.clone();
                b[i] += 1;
                if !next.contains(&b) {
                    next.push(b);
                }
            }
        }
        out = next;
    }
    out
}

// Tensor product of 1-d stencils (2h)^-k sum_j (-1)^j C(k,j) f(z + (k-2j) h e_i).
fn central_difference(
    phi: &dyn Fn(&[f64]) -> f64,
    z: &[f64],
    alpha: &[usize],
    h: f64,
    probe: &mut [f64],
) -> f64 {
    let stencils: Vec<Vec<(f64, f64)>> = alpha
        .iter()
        .map(|&k| {
            let scale = (2.0 * h).powi(k as i32);
            (0..=k)
                .map(|j| {
                    let c = binomial(k, j) * if j % 2 == 0 { 1.0 } else { -1.0 } / scale;
                    (c, (k as f64 - 2.0 * j as f64) * h)
                })
                .collect()
        })
        .collect();
    let mut counters = vec![0usize; alpha.len()];
    let mut total = 0.0;
    loop {
        let mut coef = 1.0;
        for (i, st) in stencils.iter().enumerate() {
            let (c, off) = st[counters[i]];
            coef *= c;
            probe[i] = z[i] + off;
        }
        total += coef * phi(probe);
        let mut i = 0;
        loop {
            if i == counters.len() {
                return total;
            }
            counters[i] += 1;
            if counters[i] < stencils[i].len() {
                break;
            }
            counters[i] = 0;
            i += 1;
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_examples() {
        let mut p = ModelParams::default();
        assert_eq!(p.gamma(&[0.0, 0.0, 0.0]), 1.0);
        assert_eq!(p.gamma(&[1.0, 0.0, 0.0]), 2.0);
        p.r_star = 2.0;
        assert_eq!(p.gamma_r2(3.0), 16.0);
    }

    #[test]
    fn b_coeff_examples() {
        let p = ModelParams::default();
        let v = p.b_coeff(&[1.0, 0.0, 0.0]);
        assert!((v - (-1.0f64).exp() / 2.0).abs() < 1e-15);
        let zero = ModelParams { b0: 0.0, ..ModelParams::default() };
        assert_eq!(zero.b_coeff(&[0.3, 0.1, 0.0]), 0.0);
        let wide = ModelParams { sigma: 1e300, ..ModelParams::default() };
        assert!((wide.b_coeff(&[0.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn signed_forcing_only_enters_squared() {
        let p = ModelParams { b0: -0.7, ..ModelParams::default() };
        let q = ModelParams { b0: 0.7, ..ModelParams::default() };
        assert_eq!(p.b_coeff_r2(0.4), q.b_coeff_r2(0.4));
        assert!(p.forcing().eval_r2(0.4) < 0.0);
    }

    #[test]
    fn chi_and_rho() {
        let p = ModelParams { d: 2, l: std::f64::consts::E.powi(4), ..ModelParams::default() };
        assert!((p.chi() - 0.5).abs() < 1e-12);
        let q = ModelParams { d: 3, l: 10.0, epsilon: 0.2, ..ModelParams::default() };
        assert!((q.rho() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn config_round_trip_and_unknown_keys() {
        let p = ModelParams { d: 2, l: 8.0, r_star: 1.5, b0: 0.5, sigma: 2.0, epsilon: 0.25 };
        let text = p.to_json_string();
        assert_eq!(ModelParams::from_json_str(&text).unwrap(), p);
        assert!(ModelParams::from_json_str(r#"{"d":3,"bogus":1}"#).is_err());
        let partial = ModelParams::from_json_str(r#"{"d":2}"#).unwrap();
        assert_eq!(partial.l, 16.0);
    }

    #[test]
    fn validation_rejects_bad_values() {
        for bad in [
            ModelParams { d: 1, ..Default::default() },
            ModelParams { l: 1.5, ..Default::default() },
            ModelParams { epsilon: 0.6, ..Default::default() },
            ModelParams { epsilon: 0.0, ..Default::default() },
            ModelParams { r_star: 0.0, ..Default::default() },
            ModelParams { sigma: -1.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn weighted_norm_examples() {
        let pts: Vec<Vec<f64>> = (0..50).map(|k| vec![k as f64 * 0.1, 0.0]).collect();
        let ones = SpectralField::sample(pts.clone(), |_| 1.0);
        assert_eq!(weighted_norm(&ones, 0.0).unwrap(), 1.0);
        let r = 2.5;
        let cancel = SpectralField::sample(pts, |z| japanese(z).powf(-r));
        assert!((weighted_norm(&cancel, r).unwrap() - 1.0).abs() < 1e-14);
        let single = SpectralField::from_real(vec![vec![2.0, 0.0]], vec![1.0]).unwrap();
        assert_eq!(weighted_norm(&single, 1.0).unwrap(), 2.0);
        let empty = SpectralField::from_real(vec![], vec![]).unwrap();
        assert!(weighted_norm(&empty, 1.0).is_err());
    }

    #[test]
    fn seminorm_examples() {
        let grid = UniformGrid::new(2, 0.25, 8);
        assert!((smooth_seminorm(&|_| -3.0, 0, 0.0, &grid).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(smooth_seminorm(&|_| 0.0, 2, 3.0, &grid).unwrap(), 0.0);
        let zero = UniformGrid::new(1, 0.0, 3);
        assert!(smooth_seminorm(&|_| 1.0, 0, 0.0, &zero).is_err());
    }

    #[test]
    fn seminorm_gaussian_one_dimensional_scan() {
        // Independent scan: with <z> = max(|z|,1) the weight is 1 on |z| <= 1,
        // so the supremum of exp(-z^2) <z>^2 sits at the origin.
        let mut oracle = 0.0f64;
        for k in -4000..=4000 {
            let z = k as f64 * 1e-3;
            oracle = oracle.max((-z * z).exp() * z.abs().max(1.0).powi(2));
        }
        let grid = UniformGrid::new(1, 1e-3, 4000);
        let v = smooth_seminorm(&|z| (-z[0] * z[0]).exp(), 0, 2.0, &grid).unwrap();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 1.0).abs() < 1e-15);
        // The |z| >= 1 branch alone peaks at |z| = 1 with exp(-1).
        let mut outer = 0.0f64;
        for k in 1000..=4000 {
            let z = k as f64 * 1e-3;
            outer = outer.max((-z * z).exp() * z * z);
        }
        assert!((outer - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn seminorm_derivatives_of_polynomial() {
        // f = x^2 y: mixed derivatives are exact under central differences.
        let grid = UniformGrid::new(2, 0.5, 2);
        let v = smooth_seminorm(&|z| z[0] * z[0] * z[1], 3, 0.0, &grid).unwrap();
        // |d_x d_x d_y f| = 2, |f| <= 1, |d_x f| = |2xy| <= 2, |d_y f| = x^2 <= 1, |d_x d_y f| = 2|x| <= 2.
        assert!((v - 2.0).abs() < 1e-12);
    }
}
