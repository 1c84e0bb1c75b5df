//! Integer points on coupled quadrics in a box, and point counts of
//! polynomial systems over prime fields.

use serde::{Deserialize, Serialize};

use super::integer::dot;
use super::IncidenceMatrix;
use crate::error::{Error, Result};

/// `coeff * prod x_i^{exps_i}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: i64,
    pub exps: Vec<u32>,
}

/// Integer polynomial in a fixed number of variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Poly {
    pub nvars: usize,
    pub terms: Vec<Monomial>,
}

impl Poly {
    pub fn new(nvars: usize) -> Self {
        Self { nvars, terms: Vec::new() }
    }

    /// Adds `coeff * x_a * x_b` (`b = None` for a linear term), merging like terms.
    pub fn add_term(&mut self, coeff: i64, a: usize, b: Option<usize>) {
        let mut exps = vec![0u32; self.nvars];
        exps[a] += 1;
        if let Some(b) = b {
            exps[b] += 1;
        }
        self.add_monomial(coeff, exps);
    }

    pub fn add_monomial(&mut self, coeff: i64, exps: Vec<u32>) {
        if coeff == 0 {
            return;
        }
        if let Some(t) = self.terms.iter_mut().find(|t| t.exps == exps) {
            t.coeff += coeff;
        } else {
            self.terms.push(Monomial { coeff, exps });
        }
        self.terms.retain(|t| t.coeff != 0);
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.exps.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[i64]) -> i64 {
        self.terms
            .iter()
            .map(|t| t.exps.iter().zip(x).fold(t.coeff, |acc, (&e, &v)| acc * v.pow(e)))
            .sum()
    }

    /// Coefficients reduced to `[0, p)`, zero terms dropped.
    pub fn reduce_mod(&self, p: u64) -> Poly {
        let p = p as i64;
        let mut out = Poly::new(self.nvars);
        for t in &self.terms {
            out.add_monomial(t.coeff.rem_euclid(p), t.exps.clone());
        }
        out
    }
}

/// Result of a box count on `q_j = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionCount {
    pub count: u64,
    pub bound: f64,
    pub ratio: f64,
}

// Relabelling that puts a pair with alpha_{1N} = 1 in the corner.
fn normal_order(alpha: &IncidenceMatrix) -> Result<Vec<usize>> {
    let n = alpha.size();
    for i in 0..n {
        for k in 0..n {
            if alpha.get(i, k) == 1 {
                let mut order = vec![i];
                order.extend((0..n).filter(|&t| t != i && t != k));
                order.push(k);
                return Ok(order);
            }
        }
    }
    Err(Error::EmptyAdmissible("incidence matrix is zero".into()))
}

struct Linearised {
    n: usize,
    d: usize,
    // lin[j] = alpha_{j1} z1 + alpha_{jN} v, for inner rows j = 1..N-2
    lin: Vec<Vec<i64>>,
    // coef[j][i] = alpha_{ji} - alpha_{jN} alpha_{1i}, inner indices
    coef: Vec<Vec<i64>>,
}

fn linearise(alpha: &IncidenceMatrix, z1: &[i64], v: &[i64]) -> Result<Linearised> {
    let n = alpha.size();
    let d = z1.len();
    if n < 3 {
        return Err(Error::InvalidParam(format!("need N >= 3, got {n}")));
    }
    if v.len() != d || d == 0 {
        return Err(Error::InvalidParam("z1 and v must have equal positive length".into()));
    }
    if !alpha.is_irreducible() {
        return Err(Error::Hypothesis("incidence matrix is reducible".into()));
    }
    if z1.iter().all(|&c| c == 0) || v.iter().all(|&c| c == 0) {
        return Err(Error::Hypothesis("z1 and v must be nonzero".into()));
    }
    if dot(z1, v) != 0 {
        return Err(Error::Hypothesis(format!("z1 . v = {} != 0", dot(z1, v))));
    }
    let order = normal_order(alpha)?;
    let a = |i: usize, k: usize| alpha.get(order[i], order[k]);
    let inner = n - 2;
    let mut lin = Vec::with_capacity(inner);
    let mut coef = Vec::with_capacity(inner);
    for j in 1..n - 1 {
        lin.push((0..d).map(|t| a(j, 0) * z1[t] + a(j, n - 1) * v[t]).collect());
        coef.push((1..n - 1).map(|i| a(j, i) - a(j, n - 1) * a(0, i)).collect());
    }
    Ok(Linearised { n, d, lin, coef })
}

impl Linearised {
    fn vars(&self) -> usize {
        (self.n - 2) * self.d
    }

    fn polys(&self) -> Vec<Poly> {
        let m = self.vars();
        let d = self.d;
        (0..self.n - 2)
            .map(|j| {
                let mut p = Poly::new(m);
                for t in 0..d {
                    p.add_term(self.lin[j][t], j * d + t, None);
                    for (i, &c) in self.coef[j].iter().enumerate() {
                        p.add_term(c, j * d + t, Some(i * d + t));
                    }
                }
                p
            })
            .collect()
    }

    fn vanishes(&self, y: &[i64]) -> bool {
        let d = self.d;
        (0..self.n - 2).all(|j| {
            let mut acc = 0i64;
            for t in 0..d {
                let mut w = self.lin[j][t];
                for (i, &c) in self.coef[j].iter().enumerate() {
                    w += c * y[i * d + t];
                }
                acc += y[j * d + t] * w;
            }
            acc == 0
        })
    }
}

/// The polynomials `q_j(z_2, ..., z_{N-1}; z1, v)` in `(N-2)d` variables,
/// after relabelling so that `alpha_{1N} = 1`.
pub fn quadric_polys(alpha: &IncidenceMatrix, z1: &[i64], v: &[i64]) -> Result<Vec<Poly>> {
    Ok(linearise(alpha, z1, v)?.polys())
}

/// Number of integer `(z_2, ..., z_{N-1})` with `|.|_inf <= R L` on all
/// `q_j = 0`, against `2^{(N-2)d} (N R L)^{(N-2)(d-1)}`.
pub fn quadric_intersection_count(
    alpha: &IncidenceMatrix,
    z1: &[i64],
    v: &[i64],
    r: f64,
    l: f64,
) -> Result<IntersectionCount> {
    if !(r >= 0.0) || !(l > 0.0) {
        return Err(Error::InvalidParam(format!("need R >= 0 and L > 0, got R = {r}, L = {l}")));
    }
    let sys = linearise(alpha, z1, v)?;
    let m = sys.vars();
    let half = (r * l + 1e-9).floor() as i64;
    let side = (2 * half + 1) as u64;
    let total = side
        .checked_pow(m as u32)
        .filter(|&t| t <= 2_000_000_000)
        .ok_or_else(|| Error::InvalidParam(format!("box with {side}^{m} points is too large")))?;
    let mut y = vec![-half; m];
    let mut count = 0u64;
    for _ in 0..total {
        if sys.vanishes(&y) {
            count += 1;
        }
        for c in y.iter_mut() {
            if *c < half {
                *c += 1;
                break;
            }
            *c = -half;
        }
    }
    let n = sys.n as f64;
    let d = sys.d as f64;
    let bound = (2f64.powf((n - 2.0) * d) * (n * r * l).powf((n - 2.0) * (d - 1.0))).max(1.0);
    Ok(IntersectionCount { count, bound, ratio: count as f64 / bound })
}

pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut k = 2u64;
    while k * k <= p {
        if p % k == 0 {
            return false;
        }
        k += 1;
    }
    true
}

/// Common zeros of `polys` over `F_p^m`, with `p^dim * prod deg_i` where the
/// product runs over the polynomials that stay nonzero mod `p`.
pub fn finite_field_count(polys: &[Poly], p: u64, m: usize, dim: usize) -> Result<(u64, f64)> {
    if !is_prime(p) {
        return Err(Error::InvalidParam(format!("{p} is not prime")));
    }
    if polys.iter().any(|q| q.nvars != m) {
        return Err(Error::InvalidParam("polynomial arity differs from m".into()));
    }
    let total = p
        .checked_pow(m as u32)
        .filter(|&t| t <= 1_000_000_000)
        .ok_or_else(|| Error::InvalidParam(format!("{p}^{m} exceeds 1e9 points")))?;
    let reduced: Vec<Poly> = polys.iter().map(|q| q.reduce_mod(p)).collect();
    let pi = p as i64;
    // powers table per variable value
    let maxdeg = reduced.iter().flat_map(|q| q.terms.iter().flat_map(|t| t.exps.iter())).copied().max().unwrap_or(0);
    let pow: Vec<Vec<i64>> = (0..pi)
        .map(|x| {
            let mut row = vec![1i64; maxdeg as usize + 1];
            for e in 1..row.len() {
                row[e] = row[e - 1] * x % pi;
            }
            row
        })
        .collect();
    let mut x = vec![0i64; m];
    let mut count = 0u64;
    for _ in 0..total {
        let zero = reduced.iter().all(|q| {
            let mut acc = 0i64;
            for t in &q.terms {
                let mut v = t.coeff;
                for (k, &e) in t.exps.iter().enumerate() {
                    if e != 0 {
                        v = v * pow[x[k] as usize][e as usize] % pi;
                    }
                }
                acc = (acc + v) % pi;
            }
            acc == 0
        });
        if zero {
            count += 1;
        }
        for c in x.iter_mut() {
            if *c + 1 < pi {
                *c += 1;
                break;
            }
            *c = 0;
        }
    }
    let degs: f64 = reduced.iter().filter(|q| !q.terms.is_empty()).map(|q| q.degree() as f64).product();
    Ok((count, (p as f64).powi(dim as i32) * degs))
}
