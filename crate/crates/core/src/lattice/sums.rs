//! Normalised lattice sums over resonance quadrics.
//!
//! All sums are truncated to a joint ball `sum_j |z_j|^2 <= R^2` in
//! frequency units; the caller picks `R` from the decay of the summand.

use rayon::prelude::*;

use super::integer::{ball_points, dot, ext_gcd, norm2, orthogonal_basis, solve_affine, ShortVectors};
use super::IncidenceMatrix;
use crate::error::{Error, Result};
use crate::sum::{pairwise, Neumaier};

/// Options for `N = 2` sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sum2Options {
    /// Truncation radius of the joint ball `|z1|^2 + |z2|^2 <= radius^2`.
    pub radius: f64,
    /// Drop terms with `z1 = 0` or `z2 = 0`.
    pub exclude_zeros: bool,
    /// In `d = 2` divide by `ln L`.
    pub d2_lognorm: bool,
}

impl Default for Sum2Options {
    fn default() -> Self {
        Self { radius: 5.3, exclude_zeros: true, d2_lognorm: true }
    }
}

/// Options for general `N` sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NSumOptions {
    pub radius: f64,
    /// In `d = 2` multiply by `(ln L)^{-N/2}`.
    pub d2_lognorm: bool,
    /// Caller guarantees `phi` is invariant under the simultaneous action of
    /// coordinate permutations and sign flips on all `z_j`.
    pub invariant: bool,
}

impl Default for NSumOptions {
    fn default() -> Self {
        Self { radius: 4.1, d2_lognorm: true, invariant: false }
    }
}

const CHUNK: usize = 64;

/// Fails when `t^exponent * sample(t)` does not decay over `t = radius 2^k`,
/// `k = 0..3`, where `sample(t)` is the largest `|phi|` seen at scale `t`.
pub fn decay_probe(sample: &dyn Fn(f64) -> f64, radius: f64, exponent: f64) -> Result<()> {
    let r0 = radius.max(1.0);
    let v: Vec<f64> = (0..4)
        .map(|k| {
            let t = r0 * 2f64.powi(k);
            sample(t).abs() * t.powf(exponent)
        })
        .collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergent("non-finite summand in the tail".into()));
    }
    if v[3] > 0.0 && v[3] >= v[2] && v[2] >= v[1] {
        return Err(Error::Divergent(format!(
            "summand decays slower than |z|^-{exponent}: tail probe {:.3e} -> {:.3e}",
            v[1], v[3]
        )));
    }
    Ok(())
}

fn scale(d: usize, l: f64, n: usize, lognorm: bool) -> f64 {
    let mut s = l.powf(n as f64 * (1.0 - d as f64));
    if d == 2 && lognorm {
        s /= l.ln().powf(n as f64 / 2.0);
    }
    s
}

fn check_l(d: usize, l: f64) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidParam(format!("d must be >= 2, got {d}")));
    }
    if !(l >= 2.0) {
        return Err(Error::InvalidParam(format!("L must be >= 2, got {l}")));
    }
    Ok(())
}

fn budget(radius: f64, l: f64) -> i64 {
    (radius * radius * l * l).floor() as i64
}

/// `L^{2(1-d)} sum_{z1 . z2 = 0} phi(z1, z2)` over `z_i in Z^d / L`.
pub fn resonance_sum_2(
    phi: &(dyn Fn(&[f64], &[f64]) -> f64 + Sync),
    d: usize,
    l: f64,
    opts: Sum2Options,
) -> Result<f64> {
    check_l(d, l)?;
    let probe = |t: f64| {
        let mut best = 0.0f64;
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        let h = t / std::f64::consts::SQRT_2;
        for (x1, y1, x2, y2) in [(t, 0.0, 0.0, t), (h, h, h, -h), (t, 0.0, 0.0, 0.0), (0.0, 0.0, t, 0.0)] {
            a[0] = x1;
            a[1] = y1;
            b[0] = x2;
            b[1] = y2;
            best = best.max(phi(&a, &b).abs());
        }
        best
    };
    decay_probe(&probe, opts.radius, d as f64 + 1.0)?;
    let bud = budget(opts.radius, l);
    let outer = ball_points(d, bud);
    let partials: Vec<f64> = outer
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Neumaier::new();
            let mut z1 = vec![0.0; d];
            let mut z2 = vec![0.0; d];
            for (m1, n1) in chunk {
                let zero1 = *n1 == 0;
                if zero1 && opts.exclude_zeros {
                    continue;
                }
                for t in 0..d {
                    z1[t] = m1[t] as f64 / l;
                }
                let mut visit = |m2: &[i64], n2: i64| {
                    if n2 == 0 && opts.exclude_zeros {
                        return;
                    }
                    for t in 0..d {
                        z2[t] = m2[t] as f64 / l;
                    }
                    acc.add(phi(&z1, &z2));
                };
                if zero1 {
                    for (m2, n2) in ball_points(d, bud - n1) {
                        visit(&m2, n2);
                    }
                } else {
                    let basis = orthogonal_basis(m1).expect("nonzero m1");
                    let origin = vec![0i64; d];
                    ShortVectors::new(&origin, &basis).for_each(bud - n1, false, &mut visit);
                }
            }
            acc.value()
        })
        .collect();
    Ok(pairwise(&partials) * scale(d, l, 2, opts.d2_lognorm))
}

/// Representatives `0 <= x_1 <= ... <= x_d`, `|x|^2 <= budget`, with the size
/// of their orbit under signed coordinate permutations.
fn fundamental_domain(d: usize, budget: i64) -> Vec<(Vec<i64>, u64)> {
    fn rec(d: usize, budget: i64, cur: &mut Vec<i64>, out: &mut Vec<(Vec<i64>, u64)>) {
        if cur.len() == d {
            out.push((cur.clone(), orbit_size(cur)));
            return;
        }
        let lo = cur.last().copied().unwrap_or(0);
        let used: i64 = cur.iter().map(|x| x * x).sum();
        let remaining_slots = (d - cur.len()) as i64;
        let mut x = lo;
        // remaining coordinates are all >= x
        while used + remaining_slots * x * x <= budget {
            cur.push(x);
            rec(d, budget, cur, out);
            cur.pop();
            x += 1;
        }
    }
    let mut out = Vec::new();
    rec(d, budget, &mut Vec::with_capacity(d), &mut out);
    out
}

fn orbit_size(x: &[i64]) -> u64 {
    let d = x.len();
    let mut perms: u64 = (1..=d as u64).product();
    let mut i = 0;
    while i < d {
        let mut j = i;
        while j < d && x[j] == x[i] {
            j += 1;
        }
        perms /= (1..=(j - i) as u64).product::<u64>();
        i = j;
    }
    let nonzero = x.iter().filter(|&&v| v != 0).count();
    perms << nonzero
}

/// Same sum for summands of the form `f(|z1|^2, |z2|^2)`.
///
/// Uses the signed-permutation symmetry in `z1` and the `z2 -> -z2` symmetry,
/// and accumulates integer histograms of `|m2|^2` per shell `|m1|^2`, so `f`
/// is called once per occupied `(|m1|^2, |m2|^2)` pair.
pub fn resonance_sum_2_biradial(
    f: &(dyn Fn(f64, f64) -> f64 + Sync),
    d: usize,
    l: f64,
    opts: Sum2Options,
) -> Result<f64> {
    check_l(d, l)?;
    let probe = |t: f64| f(t * t, t * t).abs().max(f(t * t, 0.0).abs()).max(f(0.0, t * t).abs());
    decay_probe(&probe, opts.radius, d as f64 + 1.0)?;
    let bud = budget(opts.radius, l);
    let l2 = l * l;
    let mut reps = fundamental_domain(d, bud);
    reps.retain(|(x, _)| x.iter().any(|&v| v != 0));
    reps.sort_by_key(|(x, _)| norm2(x));
    let mut shells: Vec<&[(Vec<i64>, u64)]> = Vec::new();
    let mut start = 0;
    while start < reps.len() {
        let a = norm2(&reps[start].0);
        let mut end = start;
        while end < reps.len() && norm2(&reps[end].0) == a {
            end += 1;
        }
        shells.push(&reps[start..end]);
        start = end;
    }
    let partials: Vec<f64> = shells
        .par_iter()
        .map(|shell| {
            let a = norm2(&shell[0].0);
            let room = (bud - a) as usize;
            let mut hist = vec![0u64; room + 1];
            let origin = vec![0i64; d];
            for (m1, w) in shell.iter() {
                let basis = orthogonal_basis(m1).expect("nonzero m1");
                ShortVectors::new(&origin, &basis).for_each(room as i64, true, &mut |_, n2| {
                    hist[n2 as usize] += 2 * w;
                });
                if !opts.exclude_zeros {
                    hist[0] += w;
                }
            }
            let af = a as f64 / l2;
            let mut acc = Neumaier::new();
            for (b, &c) in hist.iter().enumerate() {
                if c != 0 {
                    acc.add(c as f64 * f(af, b as f64 / l2));
                }
            }
            acc.value()
        })
        .collect();
    let mut total = pairwise(&partials);
    if !opts.exclude_zeros {
        let mut acc = Neumaier::new();
        for (_, n2) in ball_points(d, bud) {
            acc.add(f(0.0, n2 as f64 / l2));
        }
        total += acc.value();
    }
    Ok(total * scale(d, l, 2, opts.d2_lognorm))
}

#[derive(Debug, Clone)]
struct Step {
    var: usize,
    constraints: Vec<usize>,
    exclusions: Vec<usize>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

fn build_plan(alpha: &IncidenceMatrix, d: usize, rl: f64) -> Vec<Step> {
    let n = alpha.size();
    let mut best: Option<(f64, Vec<Step>)> = None;
    for order in permutations(n) {
        let mut pos = vec![0usize; n];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        let mut steps: Vec<Step> = order
            .iter()
            .map(|&v| Step { var: v, constraints: vec![], exclusions: vec![] })
            .collect();
        for j in 0..n {
            let supp = alpha.row_support(j);
            let known = supp.iter().map(|&i| pos[i]).max().expect("no zero rows");
            steps[known].exclusions.push(j);
            steps[known.max(pos[j])].constraints.push(j);
        }
        // one of the N forms is implied by the others
        let last = steps.iter().rposition(|s| !s.constraints.is_empty()).expect("N >= 1");
        let mut cost = 0.0;
        let mut expo = 0.0;
        for (k, s) in steps.iter().enumerate() {
            let eff = s.constraints.len() - usize::from(k == last);
            expo += d.saturating_sub(eff) as f64;
            cost += rl.max(2.0).powf(expo);
        }
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, steps));
        }
    }
    best.expect("at least one ordering").1
}

struct Walker<'a> {
    alpha: &'a IncidenceMatrix,
    steps: &'a [Step],
    d: usize,
    l: f64,
    budget: i64,
    phi: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    ball: &'a [(Vec<i64>, i64)],
    z: Vec<Vec<i64>>,
    zf: Vec<f64>,
    acc: Neumaier,
}

impl<'a> Walker<'a> {
    fn place(&mut self, k: usize, x: &[i64], used: i64, weight: f64) {
        if x.iter().all(|&v| v == 0) {
            return;
        }
        let v = self.steps[k].var;
        self.z[v].copy_from_slice(x);
        for &j in &self.steps[k].exclusions {
            let w = self.alpha.apply(&self.z, j);
            if w.iter().all(|&c| c == 0) {
                return;
            }
        }
        if k + 1 == self.steps.len() {
            let d = self.d;
            for (j, zj) in self.z.iter().enumerate() {
                for t in 0..d {
                    self.zf[j * d + t] = zj[t] as f64 / self.l;
                }
            }
            self.acc.add(weight * (self.phi)(&self.zf));
        } else {
            self.descend(k + 1, used, weight);
        }
    }

    fn descend(&mut self, k: usize, used: i64, weight: f64) {
        let room = self.budget - used;
        if room <= 0 {
            return;
        }
        let v = self.steps[k].var;
        let d = self.d;
        if self.steps[k].constraints.is_empty() {
            let ball = self.ball;
            for (x, n) in ball {
                if *n > room {
                    break;
                }
                self.place(k, x, used + n, weight);
            }
            return;
        }
        let mut rows: Vec<Vec<i64>> = Vec::with_capacity(self.steps[k].constraints.len());
        let mut rhs: Vec<i64> = Vec::with_capacity(rows.capacity());
        for &j in &self.steps[k].constraints {
            if j == v {
                let mut c = vec![0i64; d];
                for i in self.alpha.row_support(j) {
                    let a = self.alpha.get(j, i);
                    for t in 0..d {
                        c[t] += a * self.z[i][t];
                    }
                }
                rows.push(c);
                rhs.push(0);
            } else {
                let a = self.alpha.get(j, v);
                let mut rest = vec![0i64; d];
                for i in self.alpha.row_support(j) {
                    if i != v {
                        let b = self.alpha.get(j, i);
                        for t in 0..d {
                            rest[t] += b * self.z[i][t];
                        }
                    }
                }
                rows.push(self.z[j].iter().map(|&c| a * c).collect());
                rhs.push(-dot(&self.z[j], &rest));
            }
        }
        if let Some(x) = unique_solution(&rows, &rhs, d) {
            match x {
                Some(x) => {
                    let n = norm2(&x);
                    if n <= room {
                        self.place(k, &x, used + n, weight);
                    }
                }
                None => {}
            }
            return;
        }
        if d == 2 && rows.len() == 1 {
            let (c, e) = (&rows[0], rhs[0]);
            let (g, p, q) = ext_gcd(c[0] as i128, c[1] as i128);
            if g == 0 {
                if e == 0 {
                    let ball = self.ball;
                    for (x, n) in ball {
                        if *n > room {
                            break;
                        }
                        self.place(k, x, used + n, weight);
                    }
                }
                return;
            }
            if (e as i128) % g != 0 {
                return;
            }
            let s = e as i128 / g;
            let x0 = [(p * s) as i64, (q * s) as i64];
            let dir = [(-(c[1] as i128) / g) as i64, (c[0] as i128 / g) as i64];
            // |x0 + t dir|^2 <= room
            let dd = norm2(&dir) as f64;
            let center = -(dot(&x0, &dir) as f64) / dd;
            let perp = norm2(&x0) as f64 - center * center * dd;
            let span = ((room as f64 - perp).max(0.0) / dd).sqrt() + 1e-9;
            let lo = (center - span).ceil() as i64;
            let hi = (center + span).floor() as i64;
            for t in lo..=hi {
                let x = [x0[0] + t * dir[0], x0[1] + t * dir[1]];
                let n = norm2(&x);
                if n <= room {
                    self.place(k, &x, used + n, weight);
                }
            }
            return;
        }
        let Some(lat) = solve_affine(&rows, &rhs, d) else { return };
        let sv = ShortVectors::new(&lat.x0, &lat.basis);
        let mut found: Vec<(Vec<i64>, i64)> = Vec::new();
        sv.for_each(room, false, &mut |x, n| found.push((x.to_vec(), n)));
        for (x, n) in found {
            self.place(k, &x, used + n, weight);
        }
    }
}

// Some(Some(x)) for a unique integer solution, Some(None) for none, None
// when the system does not pin down a single point.
fn unique_solution(rows: &[Vec<i64>], rhs: &[i64], d: usize) -> Option<Option<Vec<i64>>> {
    if rows.len() < d || d > 3 {
        return None;
    }
    let idx: Vec<Vec<usize>> = match d {
        2 => {
            let mut v = Vec::new();
            for a in 0..rows.len() {
                for b in a + 1..rows.len() {
                    v.push(vec![a, b]);
                }
            }
            v
        }
        3 => {
            let mut v = Vec::new();
            for a in 0..rows.len() {
                for b in a + 1..rows.len() {
                    for c in b + 1..rows.len() {
                        v.push(vec![a, b, c]);
                    }
                }
            }
            v
        }
        _ => return None,
    };
    for pick in idx {
        let m: Vec<&Vec<i64>> = pick.iter().map(|&i| &rows[i]).collect();
        let e: Vec<i128> = pick.iter().map(|&i| rhs[i] as i128).collect();
        let det = det_i(&m);
        if det == 0 {
            continue;
        }
        let mut x = vec![0i64; d];
        for col in 0..d {
            let mut mm: Vec<Vec<i64>> = m.iter().map(|r| r.to_vec()).collect();
            let num = {
                // replace column by rhs, computed in i128
                let mut cols: Vec<Vec<i128>> =
                    mm.iter_mut().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
                for (r, row) in cols.iter_mut().enumerate() {
                    row[col] = e[r];
                }
                det_i128(&cols)
            };
            if num % det != 0 {
                return Some(None);
            }
            x[col] = (num / det) as i64;
        }
        for (r, row) in rows.iter().enumerate() {
            if dot(row, &x) != rhs[r] {
                return Some(None);
            }
        }
        return Some(Some(x));
    }
    None
}

fn det_i(m: &[&Vec<i64>]) -> i128 {
    let rows: Vec<Vec<i128>> = m.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    det_i128(&rows)
}

fn det_i128(m: &[Vec<i128>]) -> i128 {
    match m.len() {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unreachable!("small determinants only"),
    }
}

/// `L^{N(1-d)} sum phi(z)` over polyvectors `z in (Z^d / L)^N` with
/// `z_j != 0`, `(alpha z)_j != 0` and `z_j . (alpha z)_j = 0` for all `j`.
///
/// `phi` receives the flattened polyvector `(z_1, ..., z_N)`.
pub fn resonance_sum_n(
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    alpha: &IncidenceMatrix,
    d: usize,
    l: f64,
    opts: NSumOptions,
) -> Result<f64> {
    check_l(d, l)?;
    let n = alpha.size();
    if n < 2 {
        return Err(Error::InvalidParam("N must be >= 2".into()));
    }
    if alpha.has_zero_row() {
        return Err(Error::EmptyAdmissible("incidence matrix has a zero row".into()));
    }
    let probe = |t: f64| {
        let mut z = vec![0.0; n * d];
        for j in 0..n {
            z[j * d + (j % d)] = t / (n as f64).sqrt();
        }
        phi(&z).abs()
    };
    decay_probe(&probe, opts.radius, (n * (d - 1) + 1) as f64)?;
    let bud = budget(opts.radius, l);
    let steps = build_plan(alpha, d, opts.radius * l);
    let ball = ball_points(d, bud);
    let first: Vec<(Vec<i64>, i64, f64)> = if opts.invariant {
        fundamental_domain(d, bud)
            .into_iter()
            .filter(|(x, _)| x.iter().any(|&v| v != 0))
            .map(|(x, w)| {
                let n2 = norm2(&x);
                (x, n2, w as f64)
            })
            .collect()
    } else {
        ball.iter().filter(|(_, n2)| *n2 > 0).map(|(x, n2)| (x.clone(), *n2, 1.0)).collect()
    };
    let partials: Vec<f64> = first
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut w = Walker {
                alpha,
                steps: &steps,
                d,
                l,
                budget: bud,
                phi,
                ball: &ball,
                z: vec![vec![0i64; d]; n],
                zf: vec![0.0; n * d],
                acc: Neumaier::new(),
            };
            for (x, n2, weight) in chunk {
                w.place(0, x, *n2, *weight);
            }
            w.acc.value()
        })
        .collect();
    Ok(pairwise(&partials) * scale(d, l, n, opts.d2_lognorm))
}
