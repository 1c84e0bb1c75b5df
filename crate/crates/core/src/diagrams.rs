//! Diagram sets for the Duhamel iterates, Wick pairings of their leaves, the
//! cycle parametrisation of the paired index sets and the correlation sums.
//!
//! Vertex slots are `c_i` (non-conjugated, index `xi_i`) and `cb_i`
//! (conjugated, index `sigma_i`) for `i = 0..=2N`. Block `j` owns the slots
//! `2j - 1` and `2j` on both sides; one of its four slots is virtual and is
//! tied to the parent vertex.

use std::collections::VecDeque;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{resonance_sum_n, IncidenceMatrix, NSumOptions};
use crate::model::ModelParams;
use crate::quadrature::gauss_legendre;

/// Ternary tree of Duhamel expansions; children are ordered as the factors
/// `a_1 a_2 conj(a_3)` (or their conjugates).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tree {
    Leaf,
    Node(Box<[Tree; 3]>),
}

impl Tree {
    pub fn degree(&self) -> usize {
        match self {
            Tree::Leaf => 0,
            Tree::Node(c) => 1 + c.iter().map(Tree::degree).sum::<usize>(),
        }
    }
}

/// All trees with `0..=m` branchings, indexed by degree.
pub fn trees_up_to(m: usize) -> Vec<Vec<Tree>> {
    let mut out: Vec<Vec<Tree>> = vec![vec![Tree::Leaf]];
    for k in 1..=m {
        let mut level = Vec::new();
        for m1 in 0..k {
            for m2 in 0..k - m1 {
                let m3 = k - 1 - m1 - m2;
                for a in &out[m1] {
                    for b in &out[m2] {
                        for c in &out[m3] {
                            level.push(Tree::Node(Box::new([a.clone(), b.clone(), c.clone()])));
                        }
                    }
                }
            }
        }
        out.push(level);
    }
    out
}

/// `|D_m|` from the recurrence over `m1 + m2 + m3 = m - 1`.
pub fn diagram_count(m: usize) -> u64 {
    let mut c = vec![1u64];
    for k in 1..=m {
        let mut total = 0;
        for m1 in 0..k {
            for m2 in 0..k - m1 {
                total += c[m1] * c[m2] * c[k - 1 - m1 - m2];
            }
        }
        c.push(total);
    }
    c[m]
}

/// A vertex slot `c_i` or `cb_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub conj: bool,
    pub index: usize,
}

impl Slot {
    fn c(index: usize) -> Self {
        Self { conj: false, index }
    }

    fn cb(index: usize) -> Self {
        Self { conj: true, index }
    }

    /// Block owning the slot, `None` for a root.
    pub fn block(&self) -> Option<usize> {
        (self.index > 0).then(|| (self.index + 1) / 2)
    }

    pub fn label(&self) -> String {
        format!("{}{}", if self.conj { "cb" } else { "c" }, self.index)
    }
}

/// One application of the Duhamel formula.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    /// 1-based block number `j`.
    pub index: usize,
    pub conj_parent: bool,
    pub parent: Slot,
    /// Real vertices in factor order: `(c_{2j-1}, c_{2j}, cb_{2j-1})` for a
    /// non-conjugated parent, `(cb_{2j-1}, cb_{2j}, c_{2j-1})` otherwise.
    pub children: [Slot; 3],
    pub degrees: [usize; 3],
}

impl Block {
    /// `wb_{2j}` for a non-conjugated parent, `w_{2j}` otherwise.
    pub fn virtual_slot(&self) -> Slot {
        Slot { conj: !self.conj_parent, index: 2 * self.index }
    }

    /// The four slots in layout order.
    pub fn layout(&self) -> [Slot; 4] {
        let [a, b, c] = self.children;
        if self.conj_parent {
            [c, self.virtual_slot(), a, b]
        } else {
            [a, b, c, self.virtual_slot()]
        }
    }
}

/// Element of `D_m` (or its conjugate set).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagram {
    pub degree: usize,
    pub conj: bool,
    pub tree: Tree,
    pub blocks: Vec<Block>,
}

impl Diagram {
    /// Blocks numbered from `offset + 1`, top to bottom and left to right.
    pub fn from_tree(tree: &Tree, conj: bool, offset: usize) -> Self {
        let mut blocks = Vec::new();
        let mut queue = VecDeque::from([(tree, Slot { conj, index: 0 })]);
        let mut next = offset + 1;
        while let Some((t, parent)) = queue.pop_front() {
            let Tree::Node(ch) = t else { continue };
            let j = next;
            next += 1;
            let children = if parent.conj {
                [Slot::cb(2 * j - 1), Slot::cb(2 * j), Slot::c(2 * j - 1)]
            } else {
                [Slot::c(2 * j - 1), Slot::c(2 * j), Slot::cb(2 * j - 1)]
            };
            let degrees = [ch[0].degree(), ch[1].degree(), ch[2].degree()];
            blocks.push(Block { index: j, conj_parent: parent.conj, parent, children, degrees });
            let order = if parent.conj { [2, 0, 1] } else { [0, 1, 2] };
            for k in order {
                if degrees[k] > 0 {
                    queue.push_back((&ch[k], children[k]));
                }
            }
        }
        Self { degree: tree.degree(), conj, tree: tree.clone(), blocks }
    }

    pub fn root(&self) -> Slot {
        Slot { conj: self.conj, index: 0 }
    }

    pub fn leaves(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        if self.degree == 0 {
            out.push(self.root());
        }
        for b in &self.blocks {
            for k in 0..3 {
                if b.degrees[k] == 0 {
                    out.push(b.children[k]);
                }
            }
        }
        out
    }
}

/// `D_m`.
pub fn build_d(m: usize) -> Vec<Diagram> {
    trees_up_to(m)[m].iter().map(|t| Diagram::from_tree(t, false, 0)).collect()
}

/// `D_m` drawn side by side with a conjugated `D_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductDiagram {
    pub m: usize,
    pub n: usize,
    pub left: Diagram,
    pub right: Diagram,
}

impl ProductDiagram {
    pub fn new(left: &Tree, right: &Tree) -> Self {
        let left = Diagram::from_tree(left, false, 0);
        let right = Diagram::from_tree(right, true, left.degree);
        Self { m: left.degree, n: right.degree, left, right }
    }

    pub fn blocks(&self) -> Vec<Block> {
        self.left.blocks.iter().chain(&self.right.blocks).cloned().collect()
    }

    pub fn leaves(&self) -> Vec<Slot> {
        let mut v = self.left.leaves();
        v.extend(self.right.leaves());
        v
    }
}

/// `D_m x conj(D_n)`.
pub fn product_diagrams(m: usize, n: usize) -> Vec<ProductDiagram> {
    let trees = trees_up_to(m.max(n));
    let mut out = Vec::new();
    for a in &trees[m] {
        for b in &trees[n] {
            out.push(ProductDiagram::new(a, b));
        }
    }
    out
}

/// Pairings as `(i, k)` joining leaf `c_i` with leaf `cb_k`, never inside one block.
pub fn wick_pairings(d: &ProductDiagram) -> Vec<Vec<(usize, usize)>> {
    let leaves = d.leaves();
    let plain: Vec<Slot> = leaves.iter().filter(|s| !s.conj).copied().collect();
    let conj: Vec<Slot> = leaves.iter().filter(|s| s.conj).copied().collect();
    let mut out = Vec::new();
    if plain.len() != conj.len() {
        return out;
    }
    let mut used = vec![false; conj.len()];
    let mut cur = Vec::with_capacity(plain.len());
    fn rec(
        k: usize,
        plain: &[Slot],
        conj: &[Slot],
        used: &mut [bool],
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if k == plain.len() {
            out.push(cur.clone());
            return;
        }
        for (t, c) in conj.iter().enumerate() {
            if used[t] || (plain[k].block().is_some() && plain[k].block() == c.block()) {
                continue;
            }
            used[t] = true;
            cur.push((plain[k].index, c.index));
            rec(k + 1, plain, conj, used, cur, out);
            cur.pop();
            used[t] = false;
        }
    }
    rec(0, &plain, &conj, &mut used, &mut cur, &mut out);
    out
}

/// A paired diagram with its cycle parametrisation `xi = s + A z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeynmanDiagram {
    pub m: usize,
    pub n: usize,
    pub blocks: Vec<Block>,
    pub pairing: Vec<(usize, usize)>,
    /// `sigma_k = xi_{solid[k]}`.
    pub solid: Vec<usize>,
    /// Bit `j - 1` set: block `j` joins `c_{2j-1}` with `cb_{2j}`.
    pub dashed: u32,
    /// `None` when there are no blocks.
    pub alpha: Option<IncidenceMatrix>,
    /// `(2N + 1) x N` rows of `A`.
    pub a_map: Vec<Vec<i64>>,
    /// `c_F = i^phase_power`.
    pub phase_power: u8,
}

fn dashed_partner(i: usize, mask: u32) -> usize {
    if i == 0 {
        return 0;
    }
    let j = (i + 1) / 2;
    if mask >> (j - 1) & 1 == 0 {
        i
    } else if i % 2 == 1 {
        i + 1
    } else {
        i - 1
    }
}

impl FeynmanDiagram {
    pub fn size(&self) -> usize {
        self.blocks.len()
    }

    pub fn phase(&self) -> Complex64 {
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.0), Complex64::new(0.0, -1.0)]
            [self.phase_power as usize % 4]
    }

    /// Whether the index relations admit a solution.
    pub fn is_true(&self) -> bool {
        self.alpha.as_ref().map_or(true, |a| !a.has_zero_row())
    }

    /// A root leaf paired into the block opened by the other root. The block's
    /// virtual vertex and the paired leaf then both carry `s`, which forces a
    /// degenerate quadruple, so such diagrams are never true.
    pub fn root_leaf_degenerate(&self) -> bool {
        self.pairing.iter().any(|&(i, k)| {
            (i == 0 && self.m == 0 && Slot::cb(k).block() == Some(1))
                || (k == 0 && self.n == 0 && Slot::c(i).block() == Some(1))
        })
    }

    /// Dashed choices turning the diagram into one cycle.
    pub fn cycle_choices(&self) -> Vec<u32> {
        let n = self.size();
        (0..1u32 << n).filter(|&mask| cycle_order(&self.solid, mask).is_some()).collect()
    }

    /// The same diagram parametrised through another dashed choice.
    pub fn with_dashed(&self, mask: u32) -> Result<Self> {
        let (alpha, a_map) = parametrise(&self.solid, self.size(), mask)?;
        Ok(Self { dashed: mask, alpha, a_map, ..self.clone() })
    }

    /// Integer indices `(xi, sigma)` for an integer base point and polyvector.
    pub fn indices_int(&self, s: &[i64], z: &[Vec<i64>]) -> (Vec<Vec<i64>>, Vec<Vec<i64>>) {
        let d = s.len();
        let xi: Vec<Vec<i64>> = self
            .a_map
            .iter()
            .map(|row| (0..d).map(|t| s[t] + row.iter().zip(z).map(|(a, zj)| a * zj[t]).sum::<i64>()).collect())
            .collect();
        let sigma = self.solid.iter().map(|&i| xi[i].clone()).collect();
        (xi, sigma)
    }

    /// `(alpha z)_j`.
    pub fn alpha_apply_int(&self, z: &[Vec<i64>]) -> Vec<Vec<i64>> {
        let n = self.size();
        let d = z.first().map_or(0, Vec::len);
        (0..n)
            .map(|j| {
                (0..d)
                    .map(|t| (0..n).map(|i| self.alpha.as_ref().map_or(0, |a| a.get(j, i)) * z[i][t]).sum())
                    .collect()
            })
            .collect()
    }

    /// Time structure shared by all density evaluations.
    fn time_graph(&self) -> TimeGraph {
        let n = self.size();
        let parent: Vec<Option<usize>> = self.blocks.iter().map(|b| b.parent.block().map(|p| p - 1)).collect();
        let parent_value: Vec<usize> = self
            .blocks
            .iter()
            .map(|b| if b.parent.conj { self.solid[b.parent.index] } else { b.parent.index })
            .collect();
        let pairs = self
            .pairing
            .iter()
            .map(|&(i, k)| (Slot::c(i).block().map(|b| b - 1), Slot::cb(k).block().map(|b| b - 1), i))
            .collect();
        let mut orderings = Vec::new();
        let mut cur = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        linear_extensions(&parent, &mut placed, &mut cur, &mut orderings);
        TimeGraph { parent, parent_value, pairs, orderings }
    }

    /// `Phi^F_s(tau, tau, z)` (without the phase): Gaussian weights of the
    /// pairs times the integral over the block times.
    pub fn density(&self, params: &ModelParams, s: &[f64], opts: &DensityOptions) -> Result<Density> {
        if s.len() != params.d {
            return Err(Error::InvalidParam(format!("base point has dimension {}, expected {}", s.len(), params.d)));
        }
        if let Some(t) = opts.tau {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidParam(format!("time must be finite and >= 0, got {t}")));
            }
        }
        if opts.order < 2 {
            return Err(Error::InvalidParam("quadrature order must be >= 2".into()));
        }
        Ok(Density {
            graph: self.time_graph(),
            a_map: self.a_map.clone(),
            s: s.to_vec(),
            params: params.clone(),
            opts: *opts,
            nodes: gauss_legendre(opts.order),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    /// Plain-text rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let c = match self.phase_power % 4 {
            0 => "+1",
            1 => "+i",
            2 => "-1",
            _ => "-i",
        };
        let _ = writeln!(out, "F in F_{{{},{}}}: N = {}, c_F = {c}, true = {}", self.m, self.n, self.size(), self.is_true());
        for b in &self.blocks {
            let cells: Vec<String> = b
                .layout()
                .iter()
                .map(|s| {
                    let v = *s == b.virtual_slot();
                    let name = s.label();
                    if v {
                        name.replacen('c', "w", 1)
                    } else {
                        let k = b.children.iter().position(|x| x == s).expect("slot in block");
                        format!("{name}^({})", b.degrees[k])
                    }
                })
                .collect();
            let _ = writeln!(out, "  B{}: ({}) parent {}", b.index, cells.join(", "), b.parent.label());
        }
        let pairs: Vec<String> = self.pairing.iter().map(|(i, k)| format!("c{i}-cb{k}")).collect();
        let _ = writeln!(out, "  pairs: {}", pairs.join(" "));
        let _ = writeln!(out, "  dashed: {:0w$b}", self.dashed, w = self.size().max(1));
        if let Some(a) = &self.alpha {
            for j in 0..a.size() {
                let row: Vec<String> = (0..a.size()).map(|i| format!("{:>2}", a.get(j, i))).collect();
                let _ = writeln!(out, "  alpha[{}] = [{}]", j + 1, row.join(" "));
            }
        }
        for (i, row) in self.a_map.iter().enumerate() {
            let r: Vec<String> = row.iter().map(|v| format!("{v:>2}")).collect();
            let _ = writeln!(out, "  xi_{i} = s + [{}] z", r.join(" "));
        }
        out
    }
}

fn linear_extensions(parent: &[Option<usize>], placed: &mut [bool], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == parent.len() {
        out.push(cur.clone());
        return;
    }
    for j in 0..parent.len() {
        if placed[j] || parent[j].is_some_and(|p| !placed[p]) {
            continue;
        }
        placed[j] = true;
        cur.push(j);
        linear_extensions(parent, placed, cur, out);
        cur.pop();
        placed[j] = false;
    }
}

/// Order of `xi` slots along the cycle from `xi_0`, if solid and dashed edges
/// form a single cycle.
fn cycle_order(solid: &[usize], mask: u32) -> Option<Vec<usize>> {
    let total = solid.len();
    let mut order = Vec::with_capacity(total);
    let mut i = 0;
    loop {
        order.push(i);
        i = solid[dashed_partner(i, mask)];
        if i == 0 {
            break;
        }
        if order.len() > total {
            return None;
        }
    }
    (order.len() == total).then_some(order)
}

type Parametrisation = (Option<IncidenceMatrix>, Vec<Vec<i64>>);

fn parametrise(solid: &[usize], n: usize, mask: u32) -> Result<Parametrisation> {
    let order = cycle_order(solid, mask)
        .ok_or_else(|| Error::Internal(format!("dashed choice {mask:b} does not give a single cycle")))?;
    let mut a_map = vec![vec![0i64; n]; 2 * n + 1];
    let mut coef = vec![0i64; n];
    for &i in &order {
        a_map[i] = coef.clone();
        // crossing the dashed edge subtracts x_i = +z_j (odd i) or -z_j (even i)
        if i > 0 {
            let j = (i + 1) / 2 - 1;
            coef[j] += if i % 2 == 1 { -1 } else { 1 };
        }
    }
    if coef.iter().any(|&c| c != 0) {
        return Err(Error::Internal("cycle does not close".into()));
    }
    if n == 0 {
        return Ok((None, a_map));
    }
    let mut entries = vec![0i64; n * n];
    for j in 0..n {
        for i in 0..n {
            entries[j * n + i] = a_map[2 * j + 1][i] - a_map[2 * j + 2][i] - i64::from(i == j);
        }
    }
    let alpha = IncidenceMatrix::new(n, &entries).map_err(|e| Error::Internal(format!("incidence matrix: {e}")))?;
    Ok((Some(alpha), a_map))
}

/// Cycle parametrisation, incidence matrix and phase of one pairing, using
/// the first dashed choice that closes a single cycle.
pub fn incidence_and_map(d: &ProductDiagram, pairing: &[(usize, usize)]) -> Result<FeynmanDiagram> {
    let blocks = d.blocks();
    let n = blocks.len();
    let mut solid = vec![usize::MAX; 2 * n + 1];
    let mut set = |k: usize, i: usize| -> Result<()> {
        if solid[k] != usize::MAX {
            return Err(Error::Internal(format!("slot cb{k} has two solid edges")));
        }
        solid[k] = i;
        Ok(())
    };
    for b in &blocks {
        let v = b.virtual_slot();
        if b.conj_parent {
            set(b.parent.index, v.index)?;
        } else {
            set(v.index, b.parent.index)?;
        }
    }
    for &(i, k) in pairing {
        set(k, i)?;
    }
    if solid.iter().any(|&i| i == usize::MAX) {
        return Err(Error::InvalidParam("pairing does not cover every conjugated leaf".into()));
    }
    let mut seen = vec![false; 2 * n + 1];
    for &i in &solid {
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidParam(format!("slot c{i} has two solid edges")));
        }
    }
    let mask = (0..1u32 << n)
        .find(|&mask| cycle_order(&solid, mask).is_some())
        .ok_or_else(|| Error::Internal("no dashed choice closes a single cycle".into()))?;
    let (alpha, a_map) = parametrise(&solid, n, mask)?;
    let plain = blocks.iter().filter(|b| !b.conj_parent).count();
    let conj = n - plain;
    Ok(FeynmanDiagram {
        m: d.m,
        n: d.n,
        blocks,
        pairing: pairing.to_vec(),
        solid,
        dashed: mask,
        alpha,
        a_map,
        phase_power: ((plain + 3 * conj) % 4) as u8,
    })
}

/// `F_{m,n}`.
pub fn feynman_diagrams(m: usize, n: usize) -> Result<Vec<FeynmanDiagram>> {
    let mut out = Vec::new();
    for d in product_diagrams(m, n) {
        for p in wick_pairings(&d) {
            out.push(incidence_and_map(&d, &p)?);
        }
    }
    Ok(out)
}

/// Restriction of every index to the truncated grid `|m|_inf <= m_cut`, `xi = m / L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridWindow {
    #[serde(rename = "L")]
    pub l: f64,
    pub m_cut: i64,
}

impl GridWindow {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| (v * self.l).round().abs() <= self.m_cut as f64)
    }

    /// Radius covering every difference of two window points in dimension `d`.
    pub fn z_radius(&self, d: usize) -> f64 {
        2.0 * (d as f64).sqrt() * self.m_cut as f64 / self.l + 0.5 / self.l
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityOptions {
    /// Common observation time; `None` is the stationary limit.
    pub tau: Option<f64>,
    pub window: Option<GridWindow>,
    /// Gauss-Legendre points per block time for finite `tau`.
    pub order: usize,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self { tau: None, window: None, order: 12 }
    }
}

#[derive(Debug, Clone)]
struct TimeGraph {
    parent: Vec<Option<usize>>,
    parent_value: Vec<usize>,
    /// `(block of c_i, block of cb_k, i)`; `None` is a root at backward time 0.
    pairs: Vec<(Option<usize>, Option<usize>, usize)>,
    orderings: Vec<Vec<usize>>,
}

/// Evaluator of `Phi^F_s(z)` on flattened polyvectors.
#[derive(Debug, Clone)]
pub struct Density {
    graph: TimeGraph,
    a_map: Vec<Vec<i64>>,
    s: Vec<f64>,
    params: ModelParams,
    opts: DensityOptions,
    nodes: (Vec<f64>, Vec<f64>),
}

impl Density {
    pub fn eval(&self, z: &[f64]) -> f64 {
        let d = self.s.len();
        let n = self.graph.parent.len();
        debug_assert_eq!(z.len(), n * d);
        let xi: Vec<Vec<f64>> = self
            .a_map
            .iter()
            .map(|row| (0..d).map(|t| self.s[t] + (0..n).map(|j| row[j] as f64 * z[j * d + t]).sum::<f64>()).collect())
            .collect();
        if let Some(w) = &self.opts.window {
            if !xi.iter().all(|x| w.contains(x)) {
                return 0.0;
            }
        }
        let r2 = |i: usize| xi[i].iter().map(|v| v * v).sum::<f64>();
        let g_par: Vec<f64> = self.graph.parent_value.iter().map(|&i| self.params.gamma_r2(r2(i))).collect();
        let mut weight = 1.0;
        let g_pair: Vec<f64> = self
            .graph
            .pairs
            .iter()
            .map(|&(_, _, i)| {
                let y = r2(i);
                weight *= self.params.b_coeff_r2(y);
                self.params.gamma_r2(y)
            })
            .collect();
        if weight == 0.0 {
            return 0.0;
        }
        weight
            * match self.opts.tau {
                None => self.stationary_integral(&g_par, &g_pair),
                Some(t) => self.finite_integral(&g_par, &g_pair, t),
            }
    }

    // On an ordered region the integrand is exp(-sum c_j r_j); with gaps
    // u_k = r_(k) - r_(k-1) the integral is the product of inverse tail sums.
    fn stationary_integral(&self, g_par: &[f64], g_pair: &[f64]) -> f64 {
        let g = &self.graph;
        let n = g.parent.len();
        let mut total = 0.0;
        let mut pos = vec![0usize; n];
        for ord in &g.orderings {
            for (k, &j) in ord.iter().enumerate() {
                pos[j] = k;
            }
            let mut c = vec![0.0; n];
            for j in 0..n {
                c[j] += g_par[j];
                if let Some(p) = g.parent[j] {
                    c[p] -= g_par[j];
                }
            }
            for (&(a, b, _), &gm) in g.pairs.iter().zip(g_pair) {
                match (a, b) {
                    (Some(a), Some(b)) => {
                        let (late, early) = if pos[a] > pos[b] { (a, b) } else { (b, a) };
                        c[late] += gm;
                        c[early] -= gm;
                    }
                    (Some(a), None) | (None, Some(a)) => c[a] += gm,
                    (None, None) => {}
                }
            }
            let mut tail = 0.0;
            let mut prod = 1.0;
            for &j in ord.iter().rev() {
                tail += c[j];
                debug_assert!(tail > 0.0, "time integral diverges");
                prod /= tail;
            }
            total += prod;
        }
        total
    }

    fn finite_integral(&self, g_par: &[f64], g_pair: &[f64], tau: f64) -> f64 {
        let g = &self.graph;
        let n = g.parent.len();
        let mut r = vec![0.0; n];
        let integrand = |r: &[f64]| -> f64 {
            let at = |b: Option<usize>| b.map_or(0.0, |j| r[j]);
            let mut e = 0.0;
            for j in 0..n {
                e -= g_par[j] * (r[j] - at(g.parent[j]));
            }
            let mut v = e.exp();
            for (&(a, b, _), &gm) in g.pairs.iter().zip(g_pair) {
                let (ra, rb) = (at(a), at(b));
                v *= (-gm * (ra - rb).abs()).exp() - (-gm * (2.0 * tau - ra - rb)).exp();
            }
            v
        };
        let (x, w) = &self.nodes;
        fn nest(
            k: usize,
            lower: f64,
            tau: f64,
            ord: &[usize],
            r: &mut [f64],
            x: &[f64],
            w: &[f64],
            f: &dyn Fn(&[f64]) -> f64,
        ) -> f64 {
            if k == ord.len() {
                return f(r);
            }
            // panels of doubling length resolve the exponential decay from `lower`
            let mut acc = 0.0;
            let mut a = lower;
            let mut width = 0.5;
            while a < tau {
                let b = (a + width).min(tau);
                let half = 0.5 * (b - a);
                let mid = 0.5 * (a + b);
                for (xi, wi) in x.iter().zip(w) {
                    let v = mid + half * xi;
                    r[ord[k]] = v;
                    acc += wi * half * nest(k + 1, v, tau, ord, r, x, w, f);
                }
                a = b;
                width *= 2.0;
            }
            acc
        }
        g.orderings.iter().map(|ord| nest(0, 0.0, tau, ord, &mut r, x, w, &integrand)).sum()
    }
}

/// `J_s(F) = L^{N(1-d)} sum Phi(z)` over the admissible resonant polyvectors;
/// zero for diagrams whose index relations have no solution.
pub fn correlation_sum(
    f: &FeynmanDiagram,
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    d: usize,
    l: f64,
    radius: f64,
) -> Result<f64> {
    if !f.is_true() {
        return Ok(0.0);
    }
    match &f.alpha {
        None => Ok(phi(&[])),
        Some(alpha) => resonance_sum_n(phi, alpha, d, l, NSumOptions { radius, d2_lognorm: false, invariant: false }),
    }
}

/// `E a^(m)_s(tau) conj(a^(n)_s(tau)) = L^{-N} sum_F c_F J_s(F)`.
pub fn diagram_correlation(
    params: &ModelParams,
    m: usize,
    n: usize,
    s: &[f64],
    opts: &DensityOptions,
    radius: f64,
) -> Result<Complex64> {
    let mut total = Complex64::new(0.0, 0.0);
    for f in feynman_diagrams(m, n)? {
        let dens = f.density(params, s, opts)?;
        let j = correlation_sum(&f, &|z: &[f64]| dens.eval(z), params.d, params.l, radius)?;
        total += f.phase() * j;
    }
    Ok(total * params.l.powi(-((m + n) as i32)))
}
