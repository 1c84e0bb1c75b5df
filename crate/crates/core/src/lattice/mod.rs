//! Integer points on resonance quadrics: orthogonal sublattices, resonant
//! lattice sums, point counts on coupled quadrics and over finite fields.
//!
//! Frequencies live on `Z^d / L`; every routine here works with the integer
//! numerators `m = L s` so that resonance conditions are tested exactly.

mod counting;
mod integer;
mod sums;

pub use counting::{
    finite_field_count, is_prime, quadric_intersection_count, quadric_polys, IntersectionCount,
    Monomial, Poly,
};
pub use integer::{
    ball_points, dot, ext_gcd, gcd, gram_determinant, lll_reduce, norm2, orthogonal_basis,
    solve_affine, AffineLattice, ShortVectors,
};
pub use sums::{
    decay_probe, resonance_sum_2, resonance_sum_2_biradial, resonance_sum_n, NSumOptions,
    Sum2Options,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Skew-symmetric `N x N` matrix with entries in `{-1, 0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidenceMatrix {
    n: usize,
    entries: Vec<i8>,
}

impl IncidenceMatrix {
    pub fn new(n: usize, entries: &[i64]) -> Result<Self> {
        if n < 1 || entries.len() != n * n {
            return Err(Error::InvalidParam(format!("need {} entries for N = {n}", n * n)));
        }
        for i in 0..n {
            for j in 0..n {
                let a = entries[i * n + j];
                if !(-1..=1).contains(&a) {
                    return Err(Error::InvalidParam(format!("entry ({i},{j}) = {a} not in {{-1,0,1}}")));
                }
                if a != -entries[j * n + i] {
                    return Err(Error::InvalidParam(format!("not skew-symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { n, entries: entries.iter().map(|&a| a as i8).collect() })
    }

    /// `a_{j,j+1} = 1`, `a_{j+1,j} = -1` with indices mod `N` (`N >= 3`),
    /// and the single pair `a_{12} = 1` for `N = 2`.
    pub fn cyclic(n: usize) -> Self {
        let mut e = vec![0i64; n * n];
        if n == 2 {
            e[1] = 1;
            e[2] = -1;
        } else {
            for j in 0..n {
                let k = (j + 1) % n;
                e[j * n + k] = 1;
                e[k * n + j] = -1;
            }
        }
        Self::new(n, &e).expect("cyclic matrix is skew")
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.n + j] as i64
    }

    pub fn row_support(&self, j: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.get(j, i) != 0).collect()
    }

    pub fn has_zero_row(&self) -> bool {
        (0..self.n).any(|j| self.row_support(j).is_empty())
    }

    /// Connected components of the support graph.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut k = 0;
            while k < comp.len() {
                let v = comp[k];
                for w in self.row_support(v) {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
                k += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_irreducible(&self) -> bool {
        self.components().len() == 1
    }

    /// Principal submatrix on `idx`.
    pub fn block(&self, idx: &[usize]) -> Self {
        let m = idx.len();
        let e: Vec<i64> =
            (0..m * m).map(|t| self.get(idx[t / m], idx[t % m])).collect();
        Self::new(m, &e).expect("principal submatrix of a skew matrix is skew")
    }

    /// `(alpha z)_j` for a polyvector given as `N` integer vectors.
    pub fn apply(&self, z: &[Vec<i64>], j: usize) -> Vec<i64> {
        let d = z[0].len();
        let mut out = vec![0i64; d];
        for i in 0..self.n {
            let a = self.get(j, i);
            if a != 0 {
                for t in 0..d {
                    out[t] += a * z[i][t];
                }
            }
        }
        out
    }

    /// `omega_j(z) = z_j . (alpha z)_j` for every `j`.
    pub fn omegas(&self, z: &[Vec<i64>]) -> Vec<i64> {
        (0..self.n).map(|j| dot(&z[j], &self.apply(z, j))).collect()
    }
}

/// `{x : x . m = 0, 0 < |x|_inf <= box_radius}`, each solution once.
pub fn enumerate_orthogonal(m: &[i64], box_radius: i64) -> Result<Vec<Vec<i64>>> {
    let basis = orthogonal_basis(m)?;
    let d = m.len() as i64;
    let zero = vec![0i64; m.len()];
    let mut out = Vec::new();
    ShortVectors::new(&zero, &basis).for_each(d * box_radius * box_radius, false, &mut |x, n| {
        if n > 0 && x.iter().all(|v| v.abs() <= box_radius) {
            out.push(x.to_vec());
        }
    });
    out.sort();
    Ok(out)
}

/// Ordered pairs `(m1, m2)` of nonzero vectors in `[-M, M]^d` with `m1 . m2 = 0`.
pub fn count_resonant_pairs(d: usize, box_radius: i64) -> Result<u64> {
    if d == 0 {
        return Err(Error::InvalidParam("d must be positive".into()));
    }
    let mut total = 0u64;
    let side = 2 * box_radius + 1;
    let count = (side as u64).pow(d as u32);
    let mut m1 = vec![0i64; d];
    for mut idx in 0..count {
        for c in m1.iter_mut() {
            *c = (idx % side as u64) as i64 - box_radius;
            idx /= side as u64;
        }
        if m1.iter().all(|&v| v == 0) {
            continue;
        }
        total += enumerate_orthogonal(&m1, box_radius)?.len() as u64;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_orthogonal(m: &[i64], r: i64) -> Vec<Vec<i64>> {
        let d = m.len();
        let side = 2 * r + 1;
        let mut out = Vec::new();
        for mut idx in 0..(side as usize).pow(d as u32) {
            let mut x = vec![0i64; d];
            for c in x.iter_mut() {
                *c = (idx % side as usize) as i64 - r;
                idx /= side as usize;
            }
            if x.iter().any(|&v| v != 0) && dot(&x, m) == 0 {
                out.push(x);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn orthogonal_basis_examples() {
        let b = orthogonal_basis(&[1, 0]).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].iter().map(|v| v.abs()).collect::<Vec<_>>(), vec![0, 1]);
        let b = orthogonal_basis(&[3, 5]).unwrap();
        assert!(b[0] == vec![-5, 3] || b[0] == vec![5, -3]);
        let b = orthogonal_basis(&[1, 1, 1]).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(gram_determinant(&b), 3);
        // basis span equals brute-force solution set in a box
        let mut span = Vec::new();
        let zero = vec![0, 0, 0];
        ShortVectors::new(&zero, &b).for_each(75, false, &mut |x, n| {
            if n > 0 && x.iter().all(|v| v.abs() <= 5) {
                span.push(x.to_vec())
            }
        });
        span.sort();
        assert_eq!(span, brute_orthogonal(&[1, 1, 1], 5));
        assert!(orthogonal_basis(&[0, 0]).is_err());
    }

    #[test]
    fn enumerate_orthogonal_examples() {
        assert_eq!(enumerate_orthogonal(&[1, 0], 1).unwrap(), vec![vec![0, -1], vec![0, 1]]);
        assert_eq!(enumerate_orthogonal(&[1, 1], 1).unwrap(), vec![vec![-1, 1], vec![1, -1]]);
        let v = enumerate_orthogonal(&[1, 1, 1], 1).unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(v, brute_orthogonal(&[1, 1, 1], 1));
    }

    #[test]
    fn enumerate_orthogonal_is_complete_for_small_boxes() {
        for d in 2..=3usize {
            for r in 0..=4i64 {
                let side = 2 * r + 1;
                for mut idx in 0..(side as usize).pow(d as u32) {
                    let mut m = vec![0i64; d];
                    for c in m.iter_mut() {
                        *c = (idx % side as usize) as i64 - r;
                        idx /= side as usize;
                    }
                    if m.iter().all(|&v| v == 0) {
                        continue;
                    }
                    assert_eq!(enumerate_orthogonal(&m, r).unwrap(), brute_orthogonal(&m, r));
                }
            }
        }
    }

    #[test]
    fn resonant_pair_counts() {
        assert_eq!(count_resonant_pairs(2, 0).unwrap(), 0);
        assert_eq!(count_resonant_pairs(2, 1).unwrap(), 16);
        assert_eq!(count_resonant_pairs(3, 1).unwrap(), 192);
        // independent brute force over all pairs
        let mut brute = 0;
        let pts: Vec<Vec<i64>> = (0..125)
            .map(|i| vec![i % 5 - 2, (i / 5) % 5 - 2, i / 25 - 2])
            .filter(|v: &Vec<i64>| v.iter().any(|&x| x != 0))
            .collect();
        for a in &pts {
            for b in &pts {
                if dot(a, b) == 0 {
                    brute += 1;
                }
            }
        }
        assert_eq!(count_resonant_pairs(3, 2).unwrap(), brute);
    }

    #[test]
    fn incidence_matrix_validation() {
        assert!(IncidenceMatrix::new(2, &[0, 1, 1, 0]).is_err());
        assert!(IncidenceMatrix::new(2, &[0, 2, -2, 0]).is_err());
        let c = IncidenceMatrix::cyclic(4);
        assert!(!c.has_zero_row());
        assert!(c.is_irreducible());
        let red = IncidenceMatrix::new(4, &[0, 1, 0, 0, -1, 0, 0, 0, 0, 0, 0, -1, 0, 0, 1, 0]).unwrap();
        assert_eq!(red.components(), vec![vec![0, 1], vec![2, 3]]);
        let z = IncidenceMatrix::new(3, &[0, 1, 0, -1, 0, 0, 0, 0, 0]).unwrap();
        assert!(z.has_zero_row());
    }
}
