//! Integration over the resonant quadric `{(s1, s2) : (s1 - s).(s2 - s) = 0}`
//! with its coarea measure, and the lattice-sum constant `C_d`.
//!
//! In shifted variables `z_i = s_i - s` the measure reduces to
//! `dz1 |z1|^{-1} dz2` over `z2 in z1^perp`. Writing `z1 = r w` and
//! `z2 = rho e` with `e` a unit vector of `w^perp` gives
//! `r^{d-2} rho^{d-2} dr dw drho de`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{decay_probe, resonance_sum_2, resonance_sum_2_biradial, Sum2Options};
use crate::sum::pairwise;
use crate::zeta::zeta;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss-Legendre rule on `[a, b]`.
pub fn composite_gl(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(lo + 0.5 * h * (xi + 1.0));
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

/// Adaptive Gauss-Legendre integration of `f` over `[a, b]` to absolute
/// tolerance `tol`, by interval bisection.
pub fn integrate_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (x, w) = gauss_legendre(15);
    let panel = |lo: f64, hi: f64| -> f64 {
        let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        h * x.iter().zip(&w).map(|(xi, wi)| wi * f(c + h * xi)).sum::<f64>()
    };
    let total_len = (b - a).abs();
    let mut stack = vec![(a, b, panel(a, b), 0u32)];
    let mut parts = Vec::new();
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (left, right) = (panel(lo, mid), panel(mid, hi));
        let err = (left + right - whole).abs();
        let budget = tol * ((hi - lo).abs() / total_len).max(1e-3);
        if err <= budget || depth >= 48 {
            if depth >= 48 && err > budget {
                return Err(Error::NoConvergence(format!("adaptive quadrature stalled on [{lo}, {hi}]")));
            }
            parts.push(left + right);
        } else {
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
    }
    Ok(pairwise(&parts))
}

/// Surface area of the unit sphere `S^k` in `R^{k+1}`.
pub fn sphere_area(k: usize) -> f64 {
    // |S^0| = 2, |S^1| = 2 pi, |S^k| = 2 pi |S^{k-2}| / (k - 1)
    match k {
        0 => 2.0,
        1 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI * sphere_area(k - 2) / (k - 1) as f64,
    }
}

/// Product rule on `S^k`; `order` controls the polar resolution.
pub fn sphere_rule(k: usize, order: usize) -> Vec<(Vec<f64>, f64)> {
    match k {
        0 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        1 => {
            let n = 2 * order.max(1);
            let h = 2.0 * std::f64::consts::PI / n as f64;
            (0..n)
                .map(|i| {
                    let t = i as f64 * h;
                    (vec![t.cos(), t.sin()], h)
                })
                .collect()
        }
        _ => {
            let lower = sphere_rule(k - 1, order);
            let polar = polar_rule(k, order);
            let mut out = Vec::with_capacity(polar.len() * lower.len());
            for (c, sn, wt) in polar {
                for (y, wy) in &lower {
                    let mut p = Vec::with_capacity(k + 1);
                    p.push(c);
                    p.extend(y.iter().map(|v| sn * v));
                    out.push((p, wt * wy));
                }
            }
            out
        }
    }
}

/// `(cos t, sin t, weight)` for `int_0^pi g(t) sin^{k-1} t dt`, `k >= 2`.
///
/// For `k = 2` the rule is Gauss-Legendre in `cos t`, exact for polynomials
/// in the height; otherwise Gauss-Legendre in the angle.
pub fn polar_rule(k: usize, order: usize) -> Vec<(f64, f64, f64)> {
    let (x, w) = gauss_legendre(order.max(2));
    if k == 2 {
        return x.iter().zip(&w).map(|(&c, &wi)| (c, (1.0 - c * c).sqrt(), wi)).collect();
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    x.iter()
        .zip(&w)
        .map(|(xi, wi)| {
            let th = half_pi * (xi + 1.0);
            let (sn, c) = th.sin_cos();
            (c, sn, half_pi * wi * sn.powi(k as i32 - 1))
        })
        .collect()
}

/// Orthonormal basis of `w^perp` for a unit vector `w`.
pub fn perp_basis(w: &[f64]) -> Vec<Vec<f64>> {
    let d = w.len();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
    // start from the axes least aligned with w
    let mut axes: Vec<usize> = (0..d).collect();
    axes.sort_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()));
    for &ax in axes.iter() {
        if out.len() == d - 1 {
            break;
        }
        let mut v = vec![0.0; d];
        v[ax] = 1.0;
        for _ in 0..2 {
            for u in std::iter::once(w).chain(out.iter().map(|u| u.as_slice())) {
                let c: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * ui;
                }
            }
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            out.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    out
}

/// Resolution of the product rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceOptions {
    /// Radial cutoff for both `|z1|` and `|z2|`.
    pub r_max: f64,
    pub radial_panels: usize,
    pub radial_order: usize,
    pub sphere_order: usize,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        Self { r_max: 6.5, radial_panels: 8, radial_order: 12, sphere_order: 8 }
    }
}

impl SurfaceOptions {
    /// Every order doubled.
    pub fn refined(self) -> Self {
        Self {
            radial_panels: 2 * self.radial_panels,
            sphere_order: 2 * self.sphere_order,
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.r_max > 0.0) || self.radial_panels == 0 || self.radial_order == 0 || self.sphere_order == 0 {
            return Err(Error::InvalidParam(format!("bad surface options {self:?}")));
        }
        Ok(())
    }
}

fn probe_general(phi: &(dyn Fn(&[f64], &[f64]) -> f64 + Sync), s: &[f64], t: f64) -> f64 {
    let d = s.len();
    let mut best = 0.0f64;
    let mut a = s.to_vec();
    let mut b = s.to_vec();
    for (i, j) in [(0usize, 1usize), (1, 0)] {
        a.copy_from_slice(s);
        b.copy_from_slice(s);
        a[i] += t;
        b[j % d] += t;
        best = best.max(phi(&a, &b).abs());
    }
    best
}

/// `int phi(s1, s2) dmu` over the resonant quadric through `s`.
pub fn sigma_integral(
    phi: &(dyn Fn(&[f64], &[f64]) -> f64 + Sync),
    s: &[f64],
    opts: SurfaceOptions,
) -> Result<f64> {
    opts.validate()?;
    let d = s.len();
    if d < 2 {
        return Err(Error::InvalidParam(format!("dimension must be >= 2, got {d}")));
    }
    decay_probe(&|t| probe_general(phi, s, t), opts.r_max, (2 * d - 1) as f64)?;
    let (rn, rw) = composite_gl(0.0, opts.r_max, opts.radial_panels, opts.radial_order);
    let outer = sphere_rule(d - 1, opts.sphere_order);
    let inner = sphere_rule(d - 2, opts.sphere_order);
    let frames: Vec<(Vec<f64>, f64, Vec<Vec<f64>>)> = outer
        .into_iter()
        .map(|(w, wt)| {
            let e = perp_basis(&w);
            let dirs: Vec<Vec<f64>> = inner
                .iter()
                .map(|(y, _)| (0..d).map(|t| (0..d - 1).map(|k| y[k] * e[k][t]).sum()).collect())
                .collect();
            (w, wt, dirs)
        })
        .collect();
    let inner_w: Vec<f64> = inner.iter().map(|(_, w)| *w).collect();
    let shells: Vec<f64> = rn
        .par_iter()
        .zip(rw.par_iter())
        .map(|(&r, &wr)| {
            let mut s1 = vec![0.0; d];
            let mut s2 = vec![0.0; d];
            let mut acc = Vec::with_capacity(frames.len());
            for (w, wt, dirs) in &frames {
                for t in 0..d {
                    s1[t] = s[t] + r * w[t];
                }
                let mut part = Vec::with_capacity(rn.len());
                for (&rho, &wrho) in rn.iter().zip(&rw) {
                    let mut ring = 0.0;
                    for (e, we) in dirs.iter().zip(&inner_w) {
                        for t in 0..d {
                            s2[t] = s[t] + rho * e[t];
                        }
                        ring += we * phi(&s1, &s2);
                    }
                    part.push(wrho * rho.powi(d as i32 - 2) * ring);
                }
                acc.push(wt * pairwise(&part));
            }
            wr * r.powi(d as i32 - 2) * pairwise(&acc)
        })
        .collect();
    Ok(pairwise(&shells))
}

/// Same integral for integrands invariant under rotations fixing `s`.
///
/// The outer sphere is reduced to the polar angle between `z1` and `s`.
pub fn sigma_integral_axisymmetric(
    phi: &(dyn Fn(&[f64], &[f64]) -> f64 + Sync),
    s: &[f64],
    opts: SurfaceOptions,
) -> Result<f64> {
    opts.validate()?;
    let d = s.len();
    if d < 2 {
        return Err(Error::InvalidParam(format!("dimension must be >= 2, got {d}")));
    }
    decay_probe(&|t| probe_general(phi, s, t), opts.r_max, (2 * d - 1) as f64)?;
    let ns = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    // axis along s, or the first axis when s = 0
    let axis: Vec<f64> = if ns > 0.0 { s.iter().map(|x| x / ns).collect() } else {
        let mut a = vec![0.0; d];
        a[0] = 1.0;
        a
    };
    let side = perp_basis(&axis)[0].clone();
    let thetas: Vec<(f64, f64)> = if d == 2 {
        // S^1: both half-circles are mirror images only when phi is even in
        // the normal direction, so keep the full circle
        let n = 2 * opts.sphere_order;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        (0..n).map(|i| (i as f64 * h, h)).collect()
    } else {
        let area = sphere_area(d - 2);
        polar_rule(d - 1, opts.sphere_order)
            .into_iter()
            .map(|(c, sn, w)| (sn.atan2(c), w * area))
            .collect()
    };
    let (rn, rw) = composite_gl(0.0, opts.r_max, opts.radial_panels, opts.radial_order);
    let inner = sphere_rule(d - 2, opts.sphere_order);
    let frames: Vec<(Vec<f64>, f64, Vec<Vec<f64>>)> = thetas
        .iter()
        .map(|&(th, wt)| {
            let (sn, cs) = th.sin_cos();
            let w: Vec<f64> = (0..d).map(|t| cs * axis[t] + sn * side[t]).collect();
            let e = perp_basis(&w);
            let dirs = inner
                .iter()
                .map(|(y, _)| (0..d).map(|t| (0..d - 1).map(|k| y[k] * e[k][t]).sum()).collect())
                .collect();
            (w, wt, dirs)
        })
        .collect();
    let inner_w: Vec<f64> = inner.iter().map(|(_, w)| *w).collect();
    let shells: Vec<f64> = rn
        .par_iter()
        .zip(rw.par_iter())
        .map(|(&r, &wr)| {
            let mut s1 = vec![0.0; d];
            let mut s2 = vec![0.0; d];
            let mut acc = Vec::with_capacity(frames.len());
            for (w, wt, dirs) in &frames {
                for t in 0..d {
                    s1[t] = s[t] + r * w[t];
                }
                let mut part = Vec::with_capacity(rn.len());
                for (&rho, &wrho) in rn.iter().zip(&rw) {
                    let mut ring = 0.0;
                    for (e, we) in dirs.iter().zip(&inner_w) {
                        for t in 0..d {
                            s2[t] = s[t] + rho * e[t];
                        }
                        ring += we * phi(&s1, &s2);
                    }
                    part.push(wrho * rho.powi(d as i32 - 2) * ring);
                }
                acc.push(wt * pairwise(&part));
            }
            wr * r.powi(d as i32 - 2) * pairwise(&acc)
        })
        .collect();
    Ok(pairwise(&shells))
}

/// Integral of `f(|z1|^2, |z2|^2)` over the quadric through the origin.
pub fn sigma_integral_biradial(f: &(dyn Fn(f64, f64) -> f64 + Sync), d: usize, opts: SurfaceOptions) -> Result<f64> {
    opts.validate()?;
    if d < 2 {
        return Err(Error::InvalidParam(format!("dimension must be >= 2, got {d}")));
    }
    let probe = |t: f64| f(t * t, t * t).abs().max(f(t * t, 0.0).abs()).max(f(0.0, t * t).abs());
    decay_probe(&probe, opts.r_max, (2 * d - 1) as f64)?;
    let (rn, rw) = composite_gl(0.0, opts.r_max, opts.radial_panels, opts.radial_order);
    let k = d as i32 - 2;
    let rows: Vec<f64> = rn
        .iter()
        .zip(&rw)
        .map(|(&r, &wr)| {
            let inner: Vec<f64> =
                rn.iter().zip(&rw).map(|(&p, &wp)| wp * p.powi(k) * f(r * r, p * p)).collect();
            wr * r.powi(k) * pairwise(&inner)
        })
        .collect();
    Ok(sphere_area(d - 1) * sphere_area(d - 2) * pairwise(&rows))
}

/// `zeta(d-1) zeta(4d-2) / (zeta(d) zeta(2d-2))`, the lattice-sum constant.
pub fn c_d(d: usize) -> Result<f64> {
    match d {
        0 | 1 => Err(Error::InvalidParam(format!("dimension must be >= 2, got {d}"))),
        2 => Err(Error::Unavailable("closed form unavailable for d=2".into())),
        _ => {
            let d = d as f64;
            Ok(zeta(d - 1.0)? * zeta(4.0 * d - 2.0)? / (zeta(d)? * zeta(2.0 * d - 2.0)?))
        }
    }
}

/// Summand of a lattice-vs-continuum comparison.
#[derive(Clone, Copy)]
pub enum Summand<'a> {
    /// `f(|z1|^2, |z2|^2)`.
    Biradial(&'a (dyn Fn(f64, f64) -> f64 + Sync)),
    General(&'a (dyn Fn(&[f64], &[f64]) -> f64 + Sync)),
}

/// One row of the lattice-vs-continuum table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeathBrownRow {
    #[serde(rename = "L")]
    pub l: f64,
    pub lattice_sum: f64,
    pub limit: f64,
    pub residual: f64,
    pub wall_time_s: f64,
}

/// Normalised lattice sums `S_{L,2}` against their continuum limit.
///
/// For `d >= 3` the limit is `C_d` times the surface integral. For `d = 2`
/// the constant is not known in closed form; the limit reported is the
/// lattice sum at the largest `L`, i.e. the empirical constant times the
/// surface integral.
pub fn heath_brown_check(
    phi: Summand<'_>,
    d: usize,
    ls: &[f64],
    sum_opts: Sum2Options,
    surf: SurfaceOptions,
) -> Result<Vec<HeathBrownRow>> {
    if ls.is_empty() {
        return Err(Error::InvalidParam("empty L list".into()));
    }
    let mut rows = Vec::with_capacity(ls.len());
    for &l in ls {
        let t0 = Instant::now();
        let v = match phi {
            Summand::Biradial(f) => resonance_sum_2_biradial(f, d, l, sum_opts)?,
            Summand::General(g) => resonance_sum_2(g, d, l, sum_opts)?,
        };
        rows.push(HeathBrownRow { l, lattice_sum: v, limit: 0.0, residual: 0.0, wall_time_s: t0.elapsed().as_secs_f64() });
    }
    let limit = if d >= 3 {
        let integral = match phi {
            Summand::Biradial(f) => sigma_integral_biradial(f, d, surf)?,
            Summand::General(g) => sigma_integral(g, &vec![0.0; d], surf)?,
        };
        c_d(d)? * integral
    } else {
        let last = ls.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
        rows[last].lattice_sum
    };
    for r in rows.iter_mut() {
        r.limit = limit;
        r.residual = (r.lattice_sum - limit).abs();
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gauss(a: &[f64], b: &[f64]) -> f64 {
        (-a.iter().chain(b).map(|x| x * x).sum::<f64>()).exp()
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for n in [1usize, 2, 5, 12, 20] {
            let (x, w) = gauss_legendre(n);
            for k in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn adaptive_rule_handles_layers() {
        let v = integrate_adaptive(&|x| (-200.0 * (1.0 - x)).exp(), 0.0, 1.0, 1e-13).unwrap();
        assert!((v - (1.0 - (-200f64).exp()) / 200.0).abs() < 1e-13);
        let v = integrate_adaptive(&|x| x.sqrt(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn sphere_rules_integrate_area_and_moments() {
        for k in 0..5 {
            let rule = sphere_rule(k, 14);
            let area: f64 = rule.iter().map(|(_, w)| w).sum();
            assert!((area - sphere_area(k)).abs() < 1e-12 * area);
            // int x_0^2 = |S^k| / (k + 1)
            let m2: f64 = rule.iter().map(|(p, w)| w * p[0] * p[0]).sum();
            assert!((m2 - sphere_area(k) / (k as f64 + 1.0)).abs() < 1e-12);
            for (p, _) in &rule {
                let n: f64 = p.iter().map(|x| x * x).sum();
                assert!((n - 1.0).abs() < 1e-14);
            }
        }
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn perp_basis_is_orthonormal() {
        let w = [0.6, 0.0, 0.8];
        let e = perp_basis(&w);
        assert_eq!(e.len(), 2);
        for (i, a) in e.iter().enumerate() {
            assert!(a.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>().abs() < 1e-14);
            for (j, b) in e.iter().enumerate() {
                let ip: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                if i == j {
                    assert!((ip - 1.0).abs() < 1e-14);
                } else {
                    assert!(ip.abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn gaussian_reference_values() {
        let o = SurfaceOptions::default();
        let v3 = sigma_integral(&gauss, &[0.0; 3], o).unwrap();
        assert!((v3 - 2.0 * PI * PI).abs() < 1e-8 * v3, "{v3}");
        let b3 = sigma_integral_biradial(&|a, b| (-a - b).exp(), 3, o).unwrap();
        assert!((b3 - 2.0 * PI * PI).abs() < 1e-10 * b3);
        let v2 = sigma_integral(&gauss, &[0.0; 2], o).unwrap();
        assert!((v2 - PI * PI).abs() < 1e-8 * v2);
    }

    // Independent path in d = 2: the parametrisation
    // (r, p, t) -> (z1, z2) = (r (cos p, sin p), t r (-sin p, cos p)), with
    // the surface element sqrt(det G) / |grad(z1.z2)| from the Jacobian.
    #[test]
    fn parametric_patch_agrees_in_two_dimensions() {
        let phi = |z1: &[f64], z2: &[f64]| {
            (-(z1[0] - 0.3).powi(2) - 2.0 * z1[1].powi(2) - (z2[0] + 0.2).powi(2) - z2[1].powi(2)).exp()
                * (1.0 + 0.5 * z1[0] * z2[1])
        };
        let (rn, rw) = composite_gl(0.0, 7.0, 8, 16);
        let (pn, pw) = composite_gl(0.0, 2.0 * PI, 8, 16);
        let (un, uw) = composite_gl(-14.0, 14.0, 28, 16);
        let mut total = 0.0;
        for (&r, &wr) in rn.iter().zip(&rw) {
            for (&p, &wp) in pn.iter().zip(&pw) {
                let (sp, cp) = p.sin_cos();
                for (&u, &wu) in un.iter().zip(&uw) {
                    let t = u.sinh();
                    let dt = u.cosh();
                    let cols = [
                        [cp, sp, -t * sp, t * cp],
                        [-r * sp, r * cp, -t * r * cp, -t * r * sp],
                        [0.0, 0.0, -r * sp, r * cp],
                    ];
                    let mut g = [[0.0; 3]; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            g[i][j] = (0..4).map(|k| cols[i][k] * cols[j][k]).sum();
                        }
                    }
                    let det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1])
                        - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
                        + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
                    let z1 = [r * cp, r * sp];
                    let z2 = [-t * r * sp, t * r * cp];
                    let grad = (z1[0] * z1[0] + z1[1] * z1[1] + z2[0] * z2[0] + z2[1] * z2[1]).sqrt();
                    if grad == 0.0 {
                        continue;
                    }
                    total += wr * wp * wu * dt * det.max(0.0).sqrt() / grad * phi(&z1, &z2);
                }
            }
        }
        let o = SurfaceOptions { r_max: 7.0, radial_panels: 10, radial_order: 16, sphere_order: 24 };
        let polar = sigma_integral(&phi, &[0.0, 0.0], o).unwrap();
        assert!((total - polar).abs() < 1e-6 * polar.abs(), "{total} {polar}");
        let g = sigma_integral(&gauss, &[0.0, 0.0], o).unwrap();
        assert!((g - PI * PI).abs() < 1e-8);
    }

    #[test]
    fn zero_and_odd_integrands_vanish() {
        let o = SurfaceOptions::default();
        assert_eq!(sigma_integral(&|_, _| 0.0, &[0.0; 3], o).unwrap(), 0.0);
        let odd = |a: &[f64], b: &[f64]| a[0] * gauss(a, b);
        assert!(sigma_integral(&odd, &[0.0; 3], o).unwrap().abs() < 1e-10);
    }

    #[test]
    fn shift_covariance() {
        let s = [0.4, -0.2, 0.7];
        let phi = |a: &[f64], b: &[f64]| {
            (-(a[0] - 0.4).powi(2) - (a[1] + 0.2).powi(2) - (a[2] - 0.7).powi(2) - 1.5 * (b[0] - 0.4).powi(2)
                - (b[1] + 0.2).powi(2)
                - (b[2] - 0.7).powi(2))
            .exp()
        };
        let shifted = |a: &[f64], b: &[f64]| {
            let a2: Vec<f64> = a.iter().zip(&s).map(|(x, y)| x + y).collect();
            let b2: Vec<f64> = b.iter().zip(&s).map(|(x, y)| x + y).collect();
            phi(&a2, &b2)
        };
        let o = SurfaceOptions::default();
        let v1 = sigma_integral(&phi, &s, o).unwrap();
        let v2 = sigma_integral(&shifted, &[0.0; 3], o).unwrap();
        assert!((v1 - v2).abs() < 1e-9 * v1.abs());
    }

    #[test]
    fn axisymmetric_path_matches_full_rule() {
        let s = [0.0, 0.5, 0.5];
        let n2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let phi = |a: &[f64], b: &[f64]| {
            let c: Vec<f64> = (0..3).map(|t| a[t] + b[t] - s[t]).collect();
            (-0.7 * n2(a) - 0.5 * n2(b) - 0.3 * n2(&c)).exp()
        };
        let o = SurfaceOptions::default();
        let full = sigma_integral(&phi, &s, o).unwrap();
        let axi = sigma_integral_axisymmetric(&phi, &s, o).unwrap();
        assert!((full - axi).abs() < 1e-8 * full.abs(), "{full} {axi}");
        let s2 = [0.3, -0.4];
        let phi2 = |a: &[f64], b: &[f64]| {
            let c: Vec<f64> = (0..2).map(|t| a[t] + b[t] - s2[t]).collect();
            (-0.7 * n2(a) - 0.5 * n2(b) - 0.3 * n2(&c)).exp()
        };
        let full = sigma_integral(&phi2, &s2, o).unwrap();
        let axi = sigma_integral_axisymmetric(&phi2, &s2, o).unwrap();
        assert!((full - axi).abs() < 1e-8 * full.abs(), "{full} {axi}");
    }

    #[test]
    fn refinement_is_stable() {
        let o = SurfaceOptions::default();
        let phi = |a: &[f64], b: &[f64]| gauss(a, b) * (1.0 + a[0] * a[0] * b[1] * b[1]);
        let c = sigma_integral(&phi, &[0.0; 3], o).unwrap();
        let f = sigma_integral(&phi, &[0.0; 3], o.refined()).unwrap();
        assert!((c - f).abs() < 1e-6 * f.abs());
    }

    #[test]
    fn slow_decay_rejected() {
        let phi = |a: &[f64], b: &[f64]| 1.0 / (1.0 + a.iter().chain(b).map(|x| x * x).sum::<f64>());
        assert!(matches!(sigma_integral(&phi, &[0.0; 3], SurfaceOptions::default()), Err(Error::Divergent(_))));
    }

    #[test]
    fn constants() {
        let c3 = c_d(3).unwrap();
        assert!((c3 - 1.26561).abs() < 1e-4);
        let oracle = zeta(2.0).unwrap() * zeta(10.0).unwrap() / (zeta(3.0).unwrap() * zeta(4.0).unwrap());
        assert_eq!(c3, oracle);
        for d in 3..=10 {
            let c = c_d(d).unwrap();
            assert!(c > 1.0 && c < 1.0 + 2f64.powi(2 - d as i32), "d={d} {c}");
        }
        assert!((c_d(40).unwrap() - 1.0).abs() < 1e-10);
        assert!(matches!(c_d(2), Err(Error::Unavailable(_))));
    }

    #[test]
    fn zero_summand_table() {
        let rows = heath_brown_check(
            Summand::Biradial(&|_, _| 0.0),
            3,
            &[4.0, 8.0],
            Sum2Options::default(),
            SurfaceOptions::default(),
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.residual == 0.0));
    }
}
