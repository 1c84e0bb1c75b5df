//! Exact integer linear algebra: kernels and affine solution sets of integer
//! systems, LLL reduction and Fincke-Pohst enumeration of short vectors.

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[i64]) -> i64 {
    dot(a, a)
}

/// `(g, x, y)` with `a x + b y = g >= 0`.
pub fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut r0, mut r1) = (a, b);
    let (mut s0, mut s1) = (1i128, 0i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0.div_euclid(r1);
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 < 0 {
        (-r0, -s0, -t0)
    } else {
        (r0, s0, t0)
    }
}

pub fn gcd(a: i64, b: i64) -> i64 {
    ext_gcd(a as i128, b as i128).0 as i64
}

/// Integer points `x0 + sum_i y_i basis[i]`, `y` integer.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLattice {
    pub x0: Vec<i64>,
    pub basis: Vec<Vec<i64>>,
}

impl AffineLattice {
    pub fn rank(&self) -> usize {
        self.basis.len()
    }
}

/// All integer solutions of `C x = e`, or `None` when there are none.
///
/// Column operations bring `C` to lower echelon form `C U = [H | 0]`; the
/// trailing columns of the unimodular `U` span the kernel.
pub fn solve_affine(rows: &[Vec<i64>], rhs: &[i64], n: usize) -> Option<AffineLattice> {
    debug_assert_eq!(rows.len(), rhs.len());
    let k = rows.len();
    let mut m: Vec<Vec<i128>> =
        rows.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    // u[row][col]
    let mut u: Vec<Vec<i128>> =
        (0..n).map(|i| (0..n).map(|j| i128::from(i == j)).collect()).collect();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut col = 0usize;
    for r in 0..k {
        if col == n {
            continue;
        }
        for i in col + 1..n {
            let b = m[r][i];
            if b == 0 {
                continue;
            }
            let a = m[r][col];
            let (g, x, y) = ext_gcd(a, b);
            let (ag, bg) = (a / g, b / g);
            for row in m.iter_mut().chain(u.iter_mut()) {
                let c0 = row[col];
                let ci = row[i];
                row[col] = x * c0 + y * ci;
                row[i] = bg * c0 - ag * ci;
            }
        }
        if col < n && m[r][col] != 0 {
            if m[r][col] < 0 {
                for row in m.iter_mut().chain(u.iter_mut()) {
                    row[col] = -row[col];
                }
            }
            pivots.push((r, col));
            col += 1;
        }
    }
    let rank = col;
    let mut y = vec![0i128; n];
    let mut next_pivot = 0usize;
    for r in 0..k {
        let acc: i128 = (0..rank).map(|q| m[r][q] * y[q]).sum();
        if next_pivot < pivots.len() && pivots[next_pivot].0 == r {
            let p = pivots[next_pivot].1;
            // acc excludes y[p], which is still zero
            let num = rhs[r] as i128 - acc;
            if num % m[r][p] != 0 {
                return None;
            }
            y[p] = num / m[r][p];
            next_pivot += 1;
        } else if acc != rhs[r] as i128 {
            return None;
        }
    }
    let x0: Vec<i64> = (0..n)
        .map(|i| (0..rank).map(|q| u[i][q] * y[q]).sum::<i128>() as i64)
        .collect();
    let basis: Vec<Vec<i64>> =
        (rank..n).map(|c| (0..n).map(|i| u[i][c] as i64).collect()).collect();
    let basis = lll_reduce(basis);
    let x0 = babai_reduce(x0, &basis);
    Some(AffineLattice { x0, basis })
}

/// Basis of `{x in Z^d : x . m = 0}`, LLL-reduced.
pub fn orthogonal_basis(m: &[i64]) -> Result<Vec<Vec<i64>>> {
    if m.iter().all(|&v| v == 0) {
        return Err(Error::InvalidParam("orthogonal_basis needs m != 0".into()));
    }
    let sol = solve_affine(&[m.to_vec()], &[0], m.len())
        .ok_or_else(|| Error::Internal("homogeneous system unsolvable".into()))?;
    Ok(sol.basis)
}

/// Determinant of the Gram matrix of `basis` (the squared covolume).
pub fn gram_determinant(basis: &[Vec<i64>]) -> i128 {
    let k = basis.len();
    let mut g: Vec<Vec<i128>> = (0..k)
        .map(|i| (0..k).map(|j| dot(&basis[i], &basis[j]) as i128).collect())
        .collect();
    // fraction-free Bareiss elimination
    let mut prev = 1i128;
    let mut sign = 1i128;
    for p in 0..k {
        if g[p][p] == 0 {
            match (p + 1..k).find(|&r| g[r][p] != 0) {
                Some(r) => {
                    g.swap(p, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in p + 1..k {
            for j in p + 1..k {
                g[i][j] = (g[i][j] * g[p][p] - g[i][p] * g[p][j]) / prev;
            }
        }
        prev = g[p][p];
    }
    if k == 0 {
        1
    } else {
        sign * g[k - 1][k - 1]
    }
}

/// LLL reduction with `delta = 0.99`. Intended for small ranks.
pub fn lll_reduce(mut b: Vec<Vec<i64>>) -> Vec<Vec<i64>> {
    let k = b.len();
    if k <= 1 {
        return b;
    }
    let delta = 0.99;
    let mut i = 1usize;
    let mut guard = 0usize;
    while i < k {
        guard += 1;
        if guard > 100_000 {
            break;
        }
        for j in (0..i).rev() {
            let (mu, _) = gram_schmidt(&b);
            let q = mu[i][j].round() as i64;
            if q != 0 {
                let bj = b[j].clone();
                for (x, y) in b[i].iter_mut().zip(&bj) {
                    *x -= q * y;
                }
            }
        }
        let (mu, bstar2) = gram_schmidt(&b);
        if bstar2[i] >= (delta - mu[i][i - 1] * mu[i][i - 1]) * bstar2[i - 1] {
            i += 1;
        } else {
            b.swap(i, i - 1);
            i = i.saturating_sub(1).max(1);
        }
    }
    b
}

fn gram_schmidt(b: &[Vec<i64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = b.len();
    let d = b[0].len();
    let mut star: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut mu = vec![vec![0.0; k]; k];
    let mut norms = vec![0.0; k];
    for i in 0..k {
        let mut v: Vec<f64> = b[i].iter().map(|&x| x as f64).collect();
        for j in 0..i {
            let bi: f64 = b[i].iter().zip(&star[j]).map(|(&x, y)| x as f64 * y).sum();
            mu[i][j] = if norms[j] > 0.0 { bi / norms[j] } else { 0.0 };
            for t in 0..d {
                v[t] -= mu[i][j] * star[j][t];
            }
        }
        norms[i] = v.iter().map(|x| x * x).sum();
        star.push(v);
    }
    (mu, norms)
}

// Shift x0 by lattice vectors to roughly minimise |x0|.
fn babai_reduce(mut x0: Vec<i64>, basis: &[Vec<i64>]) -> Vec<i64> {
    if basis.is_empty() {
        return x0;
    }
    let (_, norms) = gram_schmidt(basis);
    let k = basis.len();
    let d = x0.len();
    // recompute the Gram-Schmidt vectors to project onto
    let mut star: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let mut v: Vec<f64> = basis[i].iter().map(|&x| x as f64).collect();
        for j in 0..i {
            let c: f64 = basis[i].iter().zip(&star[j]).map(|(&x, y)| x as f64 * y).sum::<f64>()
                / norms[j];
            for t in 0..d {
                v[t] -= c * star[j][t];
            }
        }
        star.push(v);
    }
    for i in (0..k).rev() {
        let c: f64 =
            x0.iter().zip(&star[i]).map(|(&x, y)| x as f64 * y).sum::<f64>() / norms[i];
        let q = c.round() as i64;
        if q != 0 {
            for (x, y) in x0.iter_mut().zip(&basis[i]) {
                *x -= q * y;
            }
        }
    }
    x0
}

/// Fincke-Pohst enumeration of `{x = x0 + B y : |x|^2 <= budget}`.
///
/// The callback receives each point and its squared norm. With `half` set
/// (only meaningful for `x0 = 0`) exactly one of `x, -x` is reported and the
/// origin is skipped.
pub struct ShortVectors<'a> {
    x0: &'a [i64],
    basis: &'a [Vec<i64>],
    r_diag: Vec<f64>,
    mu: Vec<Vec<f64>>,
    center: Vec<f64>,
    perp2: f64,
}

impl<'a> ShortVectors<'a> {
    pub fn new(x0: &'a [i64], basis: &'a [Vec<i64>]) -> Self {
        let k = basis.len();
        let d = x0.len();
        // Cholesky of the Gram matrix, G = R^T R with R upper triangular
        let g: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| dot(&basis[i], &basis[j]) as f64).collect())
            .collect();
        let mut r = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in i..k {
                let mut s = g[i][j];
                for t in 0..i {
                    s -= r[t][i] * r[t][j];
                }
                if i == j {
                    r[i][i] = s.max(0.0).sqrt();
                } else {
                    r[i][j] = s / r[i][i];
                }
            }
        }
        let r_diag: Vec<f64> = (0..k).map(|i| r[i][i]).collect();
        let mu: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| if j > i { r[i][j] / r[i][i] } else { 0.0 }).collect())
            .collect();
        // center c = -G^{-1} B^T x0 via the Cholesky factors
        let bt_x0: Vec<f64> = (0..k).map(|i| dot(&basis[i], x0) as f64).collect();
        let mut w = vec![0.0; k];
        for i in 0..k {
            let mut s = -bt_x0[i];
            for t in 0..i {
                s -= r[t][i] * w[t];
            }
            w[i] = s / r[i][i];
        }
        let mut center = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = w[i];
            for t in i + 1..k {
                s -= r[i][t] * center[t];
            }
            center[i] = s / r[i][i];
        }
        let mut p: Vec<f64> = x0.iter().map(|&v| v as f64).collect();
        for (i, b) in basis.iter().enumerate() {
            for t in 0..d {
                p[t] += center[i] * b[t] as f64;
            }
        }
        let perp2 = p.iter().map(|v| v * v).sum();
        Self { x0, basis, r_diag, mu, center, perp2 }
    }

    pub fn for_each(&self, budget: i64, half: bool, f: &mut dyn FnMut(&[i64], i64)) {
        let k = self.basis.len();
        if budget < 0 {
            return;
        }
        if k == 0 {
            let n = norm2(self.x0);
            if n <= budget && !(half && n == 0) {
                f(self.x0, n);
            }
            return;
        }
        let slack = 1e-9 * (1.0 + budget as f64);
        let rem = budget as f64 - self.perp2 + slack;
        if rem < 0.0 {
            return;
        }
        let mut y = vec![0i64; k];
        let mut acc = self.x0.to_vec();
        self.level(k - 1, rem, budget, half, true, &mut y, &mut acc, f);
    }

    #[allow(clippy::too_many_arguments)]
    fn level(
        &self,
        i: usize,
        rem: f64,
        budget: i64,
        half: bool,
        all_zero_above: bool,
        y: &mut [i64],
        acc: &mut Vec<i64>,
        f: &mut dyn FnMut(&[i64], i64),
    ) {
        let k = self.basis.len();
        let mut c = self.center[i];
        for j in i + 1..k {
            c -= self.mu[i][j] * (y[j] as f64 - self.center[j]);
        }
        let rad = rem.max(0.0).sqrt() / self.r_diag[i];
        let mut lo = (c - rad).ceil() as i64;
        let hi = (c + rad).floor() as i64;
        if half && all_zero_above {
            lo = lo.max(if i == 0 { 1 } else { 0 });
        }
        if lo > hi {
            return;
        }
        let b = &self.basis[i];
        // acc currently holds x0 + sum_{j>i} y_j b_j
        for (a, bv) in acc.iter_mut().zip(b) {
            *a += lo * bv;
        }
        for yi in lo..=hi {
            y[i] = yi;
            if i == 0 {
                let n = norm2(acc);
                if n <= budget {
                    f(acc, n);
                }
            } else {
                let t = (yi as f64 - c) * self.r_diag[i];
                self.level(i - 1, rem - t * t, budget, half, all_zero_above && yi == 0, y, acc, f);
            }
            for (a, bv) in acc.iter_mut().zip(b) {
                *a += bv;
            }
        }
        for (a, bv) in acc.iter_mut().zip(b) {
            *a -= (hi + 1) * bv;
        }
        y[i] = 0;
    }
}

/// Integer vectors of `Z^d` with `|x|^2 <= budget`, sorted by squared norm.
pub fn ball_points(d: usize, budget: i64) -> Vec<(Vec<i64>, i64)> {
    let zero = vec![0i64; d];
    let basis: Vec<Vec<i64>> =
        (0..d).map(|i| (0..d).map(|j| i64::from(i == j)).collect()).collect();
    let mut out = Vec::new();
    ShortVectors::new(&zero, &basis).for_each(budget, false, &mut |x, n| out.push((x.to_vec(), n)));
    out.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    out
}
