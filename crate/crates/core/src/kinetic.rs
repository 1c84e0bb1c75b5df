//! Cubic kinetic operator on radial fields and its lattice counterpart.
//!
//! For a base frequency `s` the operator integrates, over the resonant
//! quadric `(s1 - s) . (s2 - s) = 0` with `s3 = s1 + s2 - s`,
//! `Z^4 v1 v2 v3 + Z^3 v1 v2 v4 - Z^2 v1 v3 v4 - Z^1 v2 v3 v4` (index 4 is the
//! base) and multiplies by `4 C_d`. Fields are radial, so every node of the
//! quadrature is reduced to the four radii `|s1|, |s2|, |s3|, |s|`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{z_closed, GammaQuad};
use crate::lattice::{decay_probe, resonance_sum_2, resonance_sum_2_biradial, Sum2Options};
use crate::model::{gamma_profile, norm2, ModelParams};
use crate::quadrature::{c_d, composite_gl, polar_rule, sphere_area};

/// Signs making each term of the operator positive on nonnegative fields,
/// ordered as the terms `K^1..K^4`.
pub const KAPPA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// Anything that can be evaluated as a function of `|s|`.
pub trait Radial: Sync {
    fn at(&self, r: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Sync> Radial for F {
    fn at(&self, r: f64) -> f64 {
        self(r)
    }
}

/// Behaviour beyond the last knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tail {
    Zero,
    /// Keep the last knot value, i.e. extend the field as a constant.
    Hold,
}

/// Radial field on knots `0 = r_0 < ... < r_n`, interpolated by a monotone
/// piecewise cubic (Fritsch-Butland slopes, zero slope at the origin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    knots: Vec<f64>,
    values: Vec<f64>,
    #[serde(skip)]
    slopes: Vec<f64>,
    tail: Tail,
}

impl RadialField {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, tail: Tail) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::InvalidField(format!(
                "need at least two knots and one value per knot, got {} knots and {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots[0] != 0.0 {
            return Err(Error::InvalidField("first knot must be 0".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidField("knots must be finite and strictly increasing".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidField("field values must be finite".into()));
        }
        let slopes = monotone_slopes(&knots, &values);
        Ok(Self { knots, values, slopes, tail })
    }

    pub fn from_fn(knots: Vec<f64>, f: impl Fn(f64) -> f64, tail: Tail) -> Result<Self> {
        let values = knots.iter().map(|&r| f(r)).collect();
        Self::new(knots, values, tail)
    }

    /// Constant `c` extended globally.
    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![c, c], Tail::Hold)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    /// Same knots and tail, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.knots.clone(), values, self.tail)
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        let values: Vec<f64> = self.values.iter().map(|v| lambda * v).collect();
        let slopes = self.slopes.iter().map(|m| lambda * m).collect();
        Self { knots: self.knots.clone(), values, slopes, tail: self.tail }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        let n = self.knots.len();
        let last = self.knots[n - 1];
        if r >= last {
            return match self.tail {
                Tail::Hold => self.values[n - 1],
                Tail::Zero if r == last => self.values[n - 1],
                Tail::Zero => 0.0,
            };
        }
        let k = self.knots.partition_point(|&x| x <= r) - 1;
        let h = self.knots[k + 1] - self.knots[k];
        let t = (r - self.knots[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.values[k] + h * h10 * self.slopes[k] + h01 * self.values[k + 1] + h * h11 * self.slopes[k + 1]
    }

    /// Restores the interpolation data after deserialization.
    pub fn rebuild(&mut self) {
        self.slopes = monotone_slopes(&self.knots, &self.values);
    }
}

impl Radial for RadialField {
    fn at(&self, r: f64) -> f64 {
        self.eval(r)
    }
}

fn monotone_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        let (d0, d1) = (delta[k - 1], delta[k]);
        if d0 * d1 <= 0.0 {
            continue;
        }
        let (h0, h1) = (x[k] - x[k - 1], x[k + 1] - x[k]);
        m[k] = 3.0 * (h0 + h1) / ((2.0 * h1 + h0) / d0 + (h1 + 2.0 * h0) / d1);
    }
    m[n - 1] = delta[n - 2];
    m
}

/// `n` radii on `[0, r_max]`, clustered towards the origin.
pub fn base_grid(r_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let c = 3.0f64;
    (0..n).map(|i| r_max * (c * i as f64 / (n - 1) as f64).exp_m1() / c.exp_m1()).collect()
}

/// Default output grid: 24 radii on `[0, 8 sigma]`.
pub fn default_base_grid(sigma: f64) -> Vec<f64> {
    base_grid(8.0 * sigma, 24)
}

/// Resolution of the quadrature on the resonant quadric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticOptions {
    /// Radial range of `|s_j - s|` beyond `|s|`.
    pub reach: f64,
    pub panel_width: f64,
    pub radial_order: usize,
    /// Nodes for the angle between `s1 - s` and `s`.
    pub polar_order: usize,
    /// Nodes for the direction of `s2 - s` around `s1 - s`.
    pub ring_order: usize,
    /// Nodes whose three field products are all below `prune * max|v|^3`
    /// are skipped.
    pub prune: f64,
}

impl Default for KineticOptions {
    fn default() -> Self {
        Self { reach: 6.0, panel_width: 0.5, radial_order: 8, polar_order: 16, ring_order: 16, prune: 0.0 }
    }
}

impl KineticOptions {
    /// Cheaper rule used inside time stepping.
    pub fn coarse() -> Self {
        Self { reach: 5.0, panel_width: 1.0, radial_order: 6, polar_order: 8, ring_order: 8, prune: 1e-16 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.reach > 0.0 && self.panel_width > 0.0)
            || self.radial_order == 0
            || self.polar_order == 0
            || self.ring_order == 0
            || !(self.prune >= 0.0)
        {
            return Err(Error::InvalidParam(format!("bad kinetic options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    r: [f64; 3],
    gamma: [f64; 4],
    w: f64,
}

/// Per-radius split `[K^1, K^2, K^3, K^4]` of the operator, signs included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticProfile {
    pub radii: Vec<f64>,
    pub terms: Vec<[f64; 4]>,
}

impl KineticProfile {
    pub fn totals(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.iter().sum()).collect()
    }

    /// CSV with columns `radius,K,K1,K2,K3,K4`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("radius,K,K1,K2,K3,K4\n");
        for (r, t) in self.radii.iter().zip(&self.terms) {
            let k: f64 = t.iter().sum();
            out.push_str(&format!("{r:.12e},{k:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n", t[0], t[1], t[2], t[3]));
        }
        out
    }
}

/// Precomputed quadrature nodes on the quadrics through a set of base radii.
#[derive(Debug, Clone)]
pub struct KineticPlan {
    d: usize,
    r_star: f64,
    prefactor: f64,
    base: Vec<f64>,
    nodes: Vec<Vec<Node>>,
    opts: KineticOptions,
}

impl KineticPlan {
    /// Fails with `Unavailable` for `d = 2`.
    pub fn new(params: &ModelParams, base: Vec<f64>, opts: KineticOptions) -> Result<Self> {
        params.validate()?;
        opts.validate()?;
        let d = params.d;
        let prefactor = 4.0 * c_d(d)?;
        if base.is_empty() || base.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidParam("base radii must be finite and nonnegative".into()));
        }
        let nodes = base.iter().map(|&rho| quadric_nodes(d, rho, params.r_star, &opts)).collect();
        Ok(Self { d, r_star: params.r_star, prefactor, base, nodes, opts })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn base_radii(&self) -> &[f64] {
        &self.base
    }

    pub fn options(&self) -> KineticOptions {
        self.opts
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().map(Vec::len).sum()
    }

    pub fn apply(&self, tau0: f64, v: &dyn Radial) -> Result<KineticProfile> {
        Ok(self.apply_many(tau0, &[v])?.pop().expect("one field in, one profile out"))
    }

    /// Applies `K(tau0)` to several fields, sharing the kernel evaluations.
    pub fn apply_many(&self, tau0: f64, fields: &[&dyn Radial]) -> Result<Vec<KineticProfile>> {
        if !(tau0 >= 0.0) {
            return Err(Error::InvalidParam(format!("tau0 must be >= 0, got {tau0}")));
        }
        for v in fields {
            self.probe(tau0, *v)?;
        }
        let nf = fields.len();
        let scale: Vec<f64> = fields
            .iter()
            .map(|v| {
                let m = self.base.iter().chain(std::iter::once(&0.0)).map(|&r| v.at(r).abs()).fold(0.0, f64::max);
                self.opts.prune * m * m * m
            })
            .collect();
        let per_base: Vec<Vec<[f64; 4]>> = self
            .base
            .par_iter()
            .zip(self.nodes.par_iter())
            .map(|(&rho, nodes)| {
                let v4: Vec<f64> = fields.iter().map(|v| v.at(rho)).collect();
                let mut acc = vec![[0.0f64; 4]; nf];
                let mut prods = vec![[0.0f64; 4]; nf];
                for node in nodes {
                    let mut need = [false; 4];
                    for f in 0..nf {
                        let v1 = fields[f].at(node.r[0]);
                        let v2 = fields[f].at(node.r[1]);
                        let v3 = fields[f].at(node.r[2]);
                        let v4 = v4[f];
                        // K^1..K^4 products
                        let p = [v2 * v3 * v4, v1 * v3 * v4, v1 * v2 * v4, v1 * v2 * v3];
                        for j in 0..4 {
                            if p[j] != 0.0 && p[j].abs() > scale[f] {
                                need[j] = true;
                            }
                        }
                        prods[f] = p;
                    }
                    if !need.iter().any(|x| *x) {
                        continue;
                    }
                    let quad = GammaQuad(node.gamma);
                    let mut z = [0.0; 4];
                    for j in 0..4 {
                        if need[j] {
                            z[j] = z_closed(tau0, &quad, j);
                        }
                    }
                    for f in 0..nf {
                        for j in 0..4 {
                            acc[f][j] += node.w * z[j] * prods[f][j];
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = Vec::with_capacity(nf);
        for f in 0..nf {
            let terms = per_base
                .iter()
                .map(|acc| {
                    let a = acc[f];
                    [
                        -self.prefactor * a[0],
                        -self.prefactor * a[1],
                        self.prefactor * a[2],
                        self.prefactor * a[3],
                    ]
                })
                .collect();
            out.push(KineticProfile { radii: self.base.clone(), terms });
        }
        Ok(out)
    }

    // The integrand must decay like the surface measure requires; a field
    // that does not is rejected unless the bracket cancels identically.
    fn probe(&self, tau0: f64, v: &dyn Radial) -> Result<()> {
        let rho = self.base.iter().cloned().fold(0.0, f64::max);
        let r_star = self.r_star;
        let sample = |t: f64| {
            let mut best = 0.0f64;
            for (a, b) in [(t, t), (t, 0.0), (0.0, t)] {
                let r1 = (rho * rho + a * a).sqrt();
                let r2 = (rho * rho + b * b).sqrt();
                let r3 = (rho * rho + a * a + b * b).sqrt();
                let g = [r1, r2, r3, rho].map(|r| gamma_profile(r * r, r_star));
                let quad = GammaQuad(g);
                let z = [0, 1, 2, 3].map(|j| z_closed(tau0, &quad, j));
                let (v1, v2, v3, v4) = (v.at(r1), v.at(r2), v.at(r3), v.at(rho));
                let bracket = z[3] * v1 * v2 * v3 + z[2] * v1 * v2 * v4 - z[1] * v1 * v3 * v4 - z[0] * v2 * v3 * v4;
                best = best.max(bracket.abs());
            }
            best
        };
        decay_probe(&sample, self.opts.reach, (2 * self.d - 1) as f64)
    }
}

// Nodes on the quadric through a base point of radius `rho`.
fn quadric_nodes(d: usize, rho: f64, r_star: f64, opts: &KineticOptions) -> Vec<Node> {
    let r_max = rho + opts.reach;
    let panels = (r_max / opts.panel_width).ceil().max(1.0) as usize;
    let (rn, rw) = composite_gl(0.0, r_max, panels, opts.radial_order);
    let k = d as i32 - 2;
    let radial: Vec<(f64, f64)> = rn.iter().zip(&rw).map(|(&r, &w)| (r, w * r.powi(k))).collect();
    let g4 = gamma_profile(rho * rho, r_star);
    let mut out = Vec::new();
    let mut push = |a2: f64, b2: f64, w: f64| {
        let c2 = (a2 + b2 - rho * rho).max(0.0);
        let (a2, b2) = (a2.max(0.0), b2.max(0.0));
        out.push(Node {
            r: [a2.sqrt(), b2.sqrt(), c2.sqrt()],
            gamma: [gamma_profile(a2, r_star), gamma_profile(b2, r_star), gamma_profile(c2, r_star), g4],
            w,
        });
    };
    if rho == 0.0 {
        let ang = sphere_area(d - 1) * sphere_area(d - 2);
        for &(r, wr) in &radial {
            for &(p, wp) in &radial {
                push(r * r, p * p, ang * wr * wp);
            }
        }
        return out;
    }
    // angle between s1 - s and s
    let polar: Vec<(f64, f64, f64)> = polar_rule(d - 1, opts.polar_order)
        .into_iter()
        .map(|(c, s, w)| (c, s, w * sphere_area(d - 2)))
        .collect();
    // cosine between s2 - s and the component of s orthogonal to s1 - s
    let ring: Vec<(f64, f64)> = if d == 3 {
        let n = opts.ring_order;
        let h = std::f64::consts::PI / n as f64;
        (0..n).map(|i| (((i as f64 + 0.5) * h).cos(), 2.0 * h)).collect()
    } else {
        polar_rule(d - 2, opts.ring_order).into_iter().map(|(c, _, w)| (c, w * sphere_area(d - 3))).collect()
    };
    for &(r, wr) in &radial {
        for &(ct, st, wt) in &polar {
            let a2 = rho * rho + r * r + 2.0 * rho * r * ct;
            for &(p, wp) in &radial {
                for &(cp, wc) in &ring {
                    let b2 = rho * rho + p * p + 2.0 * rho * p * st * cp;
                    push(a2, b2, wr * wt * wp * wc);
                }
            }
        }
    }
    out
}

/// `K_s(tau0)(v)` split into `[K^1, K^2, K^3, K^4]`.
pub fn apply_k_terms(params: &ModelParams, tau0: f64, v: &dyn Radial, s: &[f64], opts: KineticOptions) -> Result<[f64; 4]> {
    check_point(params, s)?;
    let plan = KineticPlan::new(params, vec![norm2(s).sqrt()], opts)?;
    Ok(plan.apply(tau0, v)?.terms[0])
}

/// `K_s(tau0)(v)`.
pub fn apply_k(params: &ModelParams, tau0: f64, v: &dyn Radial, s: &[f64], opts: KineticOptions) -> Result<f64> {
    Ok(apply_k_terms(params, tau0, v, s, opts)?.iter().sum())
}

/// `K_s(infinity)(v)`, every kernel replaced by `1 / (g1 + g2 + g3 + g4)`.
pub fn apply_k_inf(params: &ModelParams, v: &dyn Radial, s: &[f64], opts: KineticOptions) -> Result<f64> {
    apply_k(params, f64::INFINITY, v, s, opts)
}

/// `(1 - e^{-2 g tau}) / (2 g)`.
pub fn k_tau_factor(tau: f64, gamma_s: f64) -> f64 {
    -(-2.0 * gamma_s * tau).exp_m1() / (2.0 * gamma_s)
}

/// `K^tau_s(tau0)(v)`, the operator integrated against the linear flow over `[0, tau]`.
pub fn apply_k_tau(
    params: &ModelParams,
    tau: f64,
    tau0: f64,
    v: &dyn Radial,
    s: &[f64],
    opts: KineticOptions,
) -> Result<f64> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidParam(format!("tau must lie in (0, 1], got {tau}")));
    }
    Ok(k_tau_factor(tau, params.gamma(s)) * apply_k(params, tau0, v, s, opts)?)
}

fn check_point(params: &ModelParams, s: &[f64]) -> Result<()> {
    if s.len() != params.d {
        return Err(Error::InvalidParam(format!("point has dimension {}, model has {}", s.len(), params.d)));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParam("point must be finite".into()));
    }
    Ok(())
}

/// `B_s (1 - e^{-2 g_s tau0})` as a function of `|s|`.
pub fn linear_spectrum(params: &ModelParams, tau0: f64) -> impl Fn(f64) -> f64 + Sync + '_ {
    move |r: f64| {
        let r2 = r * r;
        params.b_coeff_r2(r2) * -(-2.0 * params.gamma_r2(r2) * tau0).exp_m1()
    }
}

/// Lattice proxy `4 L^{2(1-d)} tau sum delta' delta(omega) (...)` evaluated on
/// `n^(0)(tau0)`, summed over `z_j = s_j - s` in `Z^d / L`.
///
/// Terms with `z1 = 0` or `z2 = 0` are always dropped.
pub fn x_lattice(params: &ModelParams, s: &[f64], tau0: f64, tau: f64, l: f64, opts: Sum2Options) -> Result<f64> {
    check_point(params, s)?;
    if !(tau0 >= 0.0 && tau >= 0.0) {
        return Err(Error::InvalidParam("times must be nonnegative".into()));
    }
    if tau == 0.0 || tau0 == 0.0 {
        return Ok(0.0);
    }
    let opts = Sum2Options { exclude_zeros: true, ..opts };
    let n0 = linear_spectrum(params, tau0);
    let s2 = norm2(s);
    let g4 = params.gamma_r2(s2);
    let n4 = n0(s2.sqrt());
    let bracket = |a2: f64, b2: f64, c2: f64| {
        let g = [params.gamma_r2(a2), params.gamma_r2(b2), params.gamma_r2(c2), g4];
        let quad = GammaQuad(g);
        let (n1, n2, n3) = (n0(a2.sqrt()), n0(b2.sqrt()), n0(c2.max(0.0).sqrt()));
        z_closed(tau0, &quad, 3) * n1 * n2 * n3 + z_closed(tau0, &quad, 2) * n1 * n2 * n4
            - z_closed(tau0, &quad, 0) * n2 * n3 * n4
            - z_closed(tau0, &quad, 1) * n1 * n3 * n4
    };
    let sum = if s2 == 0.0 {
        resonance_sum_2_biradial(&|a, b| bracket(a, b, a + b), params.d, l, opts)?
    } else {
        let d = params.d;
        let phi = |z1: &[f64], z2: &[f64]| {
            let mut a2 = 0.0;
            let mut b2 = 0.0;
            let mut c2 = 0.0;
            for t in 0..d {
                a2 += (s[t] + z1[t]).powi(2);
                b2 += (s[t] + z2[t]).powi(2);
                c2 += (s[t] + z1[t] + z2[t]).powi(2);
            }
            bracket(a2, b2, c2)
        };
        resonance_sum_2(&phi, d, l, opts)?
    };
    Ok(4.0 * tau * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{sigma_integral_axisymmetric, SurfaceOptions};
    use crate::zeta::zeta;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(d: usize) -> ModelParams {
        ModelParams { d, ..ModelParams::default() }
    }

    fn gaussian(c: f64) -> impl Fn(f64) -> f64 + Sync {
        move |r: f64| c * (-r * r).exp()
    }

    #[test]
    fn interpolant_reproduces_knots_and_is_monotone() {
        let knots = vec![0.0, 0.3, 1.0, 1.5, 3.0];
        let values = vec![2.0, 1.9, 0.5, 0.5, 0.0];
        let f = RadialField::new(knots.clone(), values.clone(), Tail::Zero).unwrap();
        for (r, v) in knots.iter().zip(&values) {
            assert_eq!(f.eval(*r), *v);
        }
        let mut prev = f.eval(0.0);
        for i in 1..=3000 {
            let x = f.eval(i as f64 * 1e-3);
            assert!(x <= prev + 1e-15, "not monotone at {}", i);
            assert!(x >= 0.0);
            prev = x;
        }
        assert_eq!(f.eval(3.5), 0.0);
        assert_eq!(f.eval(-0.3), f.eval(0.3));
        let h = RadialField::new(knots, values, Tail::Hold).unwrap();
        assert_eq!(h.eval(10.0), 0.0);
        assert_eq!(RadialField::constant(1.5).unwrap().eval(100.0), 1.5);
    }

    #[test]
    fn interpolant_is_accurate_on_smooth_data() {
        let knots = base_grid(6.0, 60);
        let f = RadialField::from_fn(knots, |r| (-r * r).exp(), Tail::Zero).unwrap();
        for i in 0..500 {
            let r = i as f64 * 0.01;
            assert!((f.eval(r) - (-r * r).exp()).abs() < 2e-3, "r = {r}");
        }
    }

    #[test]
    fn field_validation() {
        assert!(RadialField::new(vec![0.0], vec![1.0], Tail::Zero).is_err());
        assert!(RadialField::new(vec![0.1, 1.0], vec![1.0, 0.0], Tail::Zero).is_err());
        assert!(RadialField::new(vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 0.0], Tail::Zero).is_err());
        assert!(RadialField::new(vec![0.0, 1.0], vec![f64::NAN, 0.0], Tail::Zero).is_err());
    }

    #[test]
    fn quadric_nodes_match_surface_rule() {
        // the node set integrates a radial test function like the full rule
        let p = params(3);
        let phi = |a2: f64, b2: f64, c2: f64| (-(a2 + 0.5 * b2 + 0.25 * c2)).exp();
        for rho in [0.0, 0.7, 1.6] {
            let opts = KineticOptions::default();
            let nodes = quadric_nodes(3, rho, p.r_star, &opts);
            let ours: f64 =
                nodes.iter().map(|n| n.w * phi(n.r[0] * n.r[0], n.r[1] * n.r[1], n.r[2] * n.r[2])).sum();
            let s = [rho, 0.0, 0.0];
            let g = |s1: &[f64], s2: &[f64]| {
                let s3: Vec<f64> = (0..3).map(|t| s1[t] + s2[t] - s[t]).collect();
                phi(norm2(s1), norm2(s2), norm2(&s3))
            };
            let surf = SurfaceOptions { r_max: 8.0, radial_panels: 16, radial_order: 12, sphere_order: 16 };
            let full = sigma_integral_axisymmetric(&g, &s, surf).unwrap();
            assert!((ours - full).abs() < 1e-8 * full, "rho {rho}: {ours} vs {full}");
        }
    }

    #[test]
    fn four_dimensional_nodes_match_surface_rule() {
        let p = params(4);
        let phi = |a2: f64, b2: f64, c2: f64| (-(a2 + b2 + 0.5 * c2)).exp();
        let rho = 0.9;
        let nodes = quadric_nodes(4, rho, p.r_star, &KineticOptions::default());
        let ours: f64 = nodes.iter().map(|n| n.w * phi(n.r[0] * n.r[0], n.r[1] * n.r[1], n.r[2] * n.r[2])).sum();
        let s = [rho, 0.0, 0.0, 0.0];
        let g = |s1: &[f64], s2: &[f64]| {
            let s3: Vec<f64> = (0..4).map(|t| s1[t] + s2[t] - s[t]).collect();
            phi(norm2(s1), norm2(s2), norm2(&s3))
        };
        let surf = SurfaceOptions { r_max: 8.0, radial_panels: 12, radial_order: 12, sphere_order: 10 };
        let full = sigma_integral_axisymmetric(&g, &s, surf).unwrap();
        assert!((ours - full).abs() < 1e-7 * full, "{ours} vs {full}");
    }

    #[test]
    fn zero_and_constant_fields() {
        let p = params(3);
        let opts = KineticOptions::default();
        let zero = |_: f64| 0.0;
        assert_eq!(apply_k(&p, 1.0, &zero, &[0.5, 0.0, 0.0], opts).unwrap(), 0.0);
        let c = RadialField::constant(0.7).unwrap();
        for s in [[0.0, 0.0, 0.0], [1.2, 0.3, 0.0]] {
            assert_eq!(apply_k_inf(&p, &c, &s, opts).unwrap(), 0.0);
        }
        // finite memory breaks the cancellation and the integral diverges
        assert!(matches!(apply_k(&p, 1.0, &c, &[0.0; 3], opts), Err(Error::Divergent(_))));
    }

    #[test]
    fn two_dimensions_unavailable() {
        let p = params(2);
        let e = apply_k(&p, 1.0, &gaussian(1.0), &[0.0, 0.0], KineticOptions::default()).unwrap_err();
        assert!(matches!(e, Error::Unavailable(_)));
    }

    #[test]
    fn cubic_homogeneity_and_sign_structure() {
        let p = params(3);
        let opts = KineticOptions::coarse();
        let plan = KineticPlan::new(&p, base_grid(4.0, 6), opts).unwrap();
        let v = gaussian(0.8);
        let w = gaussian(0.8 * 1.7);
        let a = plan.apply(0.6, &v).unwrap();
        let b = plan.apply(0.6, &w).unwrap();
        for (ta, tb) in a.terms.iter().zip(&b.terms) {
            for j in 0..4 {
                assert!((tb[j] - 1.7f64.powi(3) * ta[j]).abs() <= 1e-12 * tb[j].abs().max(1e-300));
                assert!(KAPPA[j] * ta[j] >= 0.0);
            }
        }
    }

    #[test]
    fn kappa_positivity_on_random_fields() {
        let p = params(3);
        let plan = KineticPlan::new(&p, base_grid(3.0, 10), KineticOptions::coarse()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let knots = base_grid(4.0, 9);
        for _ in 0..10 {
            let vals: Vec<f64> = knots.iter().map(|_| rng.gen::<f64>()).collect();
            let f = RadialField::new(knots.clone(), vals, Tail::Zero).unwrap();
            let tau0 = rng.gen_range(0.05..5.0);
            let prof = plan.apply(tau0, &f).unwrap();
            for t in &prof.terms {
                for j in 0..4 {
                    assert!(KAPPA[j] * t[j] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn shared_kernels_match_single_application() {
        let p = params(3);
        let plan = KineticPlan::new(&p, base_grid(3.0, 5), KineticOptions::coarse()).unwrap();
        let (u, v) = (gaussian(1.0), gaussian(0.5));
        let both = plan.apply_many(0.8, &[&u, &v]).unwrap();
        assert_eq!(both[0], plan.apply(0.8, &u).unwrap());
        assert_eq!(both[1], plan.apply(0.8, &v).unwrap());
    }

    #[test]
    fn long_memory_approaches_limit() {
        let p = params(3);
        let opts = KineticOptions::coarse();
        let v = gaussian(1.0);
        for s in [[0.0, 0.0, 0.0], [0.8, 0.0, 0.0]] {
            let inf = apply_k_inf(&p, &v, &s, opts).unwrap();
            let late = apply_k(&p, 20.0, &v, &s, opts).unwrap();
            assert!((inf - late).abs() <= 1e-12 * inf.abs(), "{inf} vs {late}");
            let early = apply_k(&p, 1.0, &v, &s, opts).unwrap();
            assert!((inf - early).abs() > 1e-6 * inf.abs());
        }
    }

    #[test]
    fn refinement_is_stable() {
        let p = params(3);
        let v = linear_spectrum(&p, 1.0);
        for s in [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]] {
            let coarse = apply_k(&p, 1.0, &v, &s, KineticOptions::coarse()).unwrap();
            let fine = apply_k(&p, 1.0, &v, &s, KineticOptions::default()).unwrap();
            assert!((coarse - fine).abs() < 2e-3 * fine.abs(), "{coarse} vs {fine}");
        }
    }

    #[test]
    fn time_integrated_operator() {
        let p = params(3);
        let opts = KineticOptions::coarse();
        let v = gaussian(1.0);
        let s = [0.5, 0.0, 0.0];
        let k = apply_k(&p, 1.0, &v, &s, opts).unwrap();
        let g = p.gamma(&s);
        for tau in [1e-4, 1e-2, 0.3, 1.0] {
            let kt = apply_k_tau(&p, tau, 1.0, &v, &s, opts).unwrap();
            assert!((tau * k - kt).abs() <= g * tau * tau * k.abs() + 1e-15);
        }
        let small = apply_k_tau(&p, 1e-8, 1.0, &v, &s, opts).unwrap() / 1e-8;
        assert!((small - k).abs() < 1e-7 * k.abs());
        assert!((k_tau_factor(50.0, g) - 0.5 / g).abs() < 1e-15);
        assert!(apply_k_tau(&p, 0.0, 1.0, &v, &s, opts).is_err());
        assert!(apply_k_tau(&p, 1.5, 1.0, &v, &s, opts).is_err());
    }

    #[test]
    fn lattice_proxy_trivial_cases() {
        let p = params(3);
        let o = Sum2Options::default();
        assert_eq!(x_lattice(&p, &[0.0; 3], 1.0, 0.0, 4.0, o).unwrap(), 0.0);
        assert_eq!(x_lattice(&p, &[0.0; 3], 0.0, 1.0, 4.0, o).unwrap(), 0.0);
    }

    #[test]
    fn lattice_proxy_general_path_matches_biradial() {
        let p = params(3);
        let o = Sum2Options { radius: 3.5, ..Sum2Options::default() };
        let a = x_lattice(&p, &[0.0; 3], 1.0, 0.5, 4.0, o).unwrap();
        let b = x_lattice(&p, &[1e-300, 0.0, 0.0], 1.0, 0.5, 4.0, o).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn lattice_proxy_tracks_continuum() {
        // the normalised quadric sums approach zeta(d-1)/zeta(d) times the
        // surface integral; compare at that scale
        let p = params(3);
        let tau0 = 1.0;
        let n0 = linear_spectrum(&p, tau0);
        let k = apply_k(&p, tau0, &n0, &[0.0; 3], KineticOptions::default()).unwrap();
        let ratio = zeta(2.0).unwrap() / zeta(3.0).unwrap() / c_d(3).unwrap();
        let x = x_lattice(&p, &[0.0; 3], tau0, 1.0, 16.0, Sum2Options::default()).unwrap();
        assert!((x - ratio * k).abs() < 0.05 * k.abs(), "x = {x}, scaled K = {}", ratio * k);
    }
}
