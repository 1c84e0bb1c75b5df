//! Runs of the eleven acceptance criteria, shared by the `report` subcommand
//! and the acceptance test target.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagrams::{diagram_correlation, diagram_count, feynman_diagrams, trees_up_to, wick_pairings, DensityOptions, GridWindow, ProductDiagram};
use crate::error::{Error, Result};
use crate::kernels::{z_closed, z_from_tcal, z_quadrature, GammaQuad};
use crate::kinetic::{apply_k, apply_k_inf, base_grid, linear_spectrum, x_lattice, KineticOptions, KineticPlan, RadialField, Tail, KAPPA};
use crate::lattice::{finite_field_count, quadric_intersection_count, quadric_polys, resonance_sum_n, IncidenceMatrix, NSumOptions, Sum2Options};
use crate::model::ModelParams;
use crate::quadrature::{c_d, heath_brown_check, sigma_integral, Summand, SurfaceOptions};
use crate::stochastic::{mc_spectrum_with_table, McConfig, McReport, ResonantTable, SiteGrid};
use crate::wke::{fit_envelope_c2, long_time_check, solve, solve_batch, stationary_batch, WkeConfig};
use crate::zeta::zeta;

/// Problem sizes. `Full` is the size stated by the criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Full,
    Quick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: u8,
    pub title: String,
    pub pass: bool,
    pub detail: String,
    /// Informational lines that do not affect the verdict.
    pub notes: Vec<String>,
    pub wall_time_s: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {}: {} [{:.1} s]",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.wall_time_s
        )
    }
}

pub const TITLES: [&str; 11] = [
    "lattice-sum constant",
    "Gaussian surface integral",
    "lattice sums vs continuum",
    "memory-kernel identities",
    "kinetic operator structure",
    "lattice vs continuum kinetic term",
    "kinetic-equation solver",
    "Monte Carlo identities",
    "diagram engine",
    "quadric point counts",
    "multi-quadric sums bounded",
];

struct Verdict {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail, notes: Vec::new() }
}

fn gauss_biradial(a: f64, b: f64) -> f64 {
    (-a - b).exp()
}

fn gauss_flat(z: &[f64]) -> f64 {
    (-z.iter().map(|x| x * x).sum::<f64>()).exp()
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.5}")).collect::<Vec<_>>().join(", ")
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn c1_constant() -> Result<Verdict> {
    let c3 = c_d(3)?;
    let mut bad = Vec::new();
    for d in 3..=10 {
        let c = c_d(d)?;
        if !(c > 1.0 && c < 1.0 + 2f64.powi(2 - d as i32)) {
            bad.push(d);
        }
    }
    let pass = (c3 - 1.26561).abs() <= 1e-4 && bad.is_empty();
    Ok(verdict(pass, format!("C_3 = {c3:.6}; bound violated for d in {bad:?}")))
}

fn c2_surface() -> Result<Verdict> {
    let v = sigma_integral(&|a, b| gauss_flat(a) * gauss_flat(b), &[0.0; 3], SurfaceOptions::default())?;
    let target = 2.0 * PI * PI;
    let rel = (v - target).abs() / target;
    Ok(verdict(rel <= 1e-3, format!("integral {v:.8} vs 2 pi^2 = {target:.8}, rel. error {rel:.2e}")))
}

fn c3_lattice_sums(scale: Scale) -> Result<Verdict> {
    let ls: Vec<f64> = match scale {
        Scale::Full => vec![4.0, 8.0, 16.0, 32.0],
        Scale::Quick => vec![4.0, 8.0],
    };
    let rows = heath_brown_check(Summand::Biradial(&gauss_biradial), 3, &ls, Sum2Options::default(), SurfaceOptions::default())?;
    let res: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    let limit = rows[0].limit;
    let rel_last = res.last().copied().unwrap_or(f64::NAN) / limit;
    let pass = strictly_decreasing(&res) && rel_last <= 0.05;
    let sums: Vec<f64> = rows.iter().map(|r| r.lattice_sum).collect();
    let mut v = verdict(
        pass,
        format!(
            "S = [{}], C_3 * integral = {limit:.5}, |S - limit| = [{}], rel. error at largest L {rel_last:.4}",
            fmt_list(&sums),
            fmt_list(&res)
        ),
    );
    let alt = zeta(2.0)? / zeta(3.0)? * limit / c_d(3)?;
    let alt_res: Vec<f64> = sums.iter().map(|s| (s - alt).abs() / alt).collect();
    v.notes.push(format!(
        "against zeta(d-1)/zeta(d) * integral = {alt:.5} the relative errors are [{}]",
        fmt_list(&alt_res)
    ));
    Ok(v)
}

fn degenerate_quad(rng: &mut ChaCha8Rng, delta: f64) -> GammaQuad {
    // 2 g_S = G for a random subset S, then perturbed by delta
    let mut g: [f64; 4] = if rng.gen_bool(0.5) {
        let (a, b, c): (f64, f64, f64) = (rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0));
        [a, b, c, a + b + c + delta]
    } else {
        let (a, b): (f64, f64) = (rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0));
        let c: f64 = rng.gen_range(1.0..a + b - 1.0 + 1e-9);
        [a, b, c, (a + b - c + delta).max(1.0)]
    };
    // random placement of the special rate
    let k = rng.gen_range(0..4);
    g.swap(3, k);
    GammaQuad(g)
}

fn c4_kernels(seed: u64) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_q = 0.0f64;
    let mut worst_t = 0.0f64;
    for k in 0..100 {
        let q = if k < 40 {
            GammaQuad::new([0; 4].map(|_| rng.gen_range(1.0..7.0)))?
        } else {
            // denominators swept through 1e-1 .. 1e-12, and exactly 0
            let e = (k - 40) % 13;
            let delta = if e == 12 { 0.0 } else { 10f64.powi(-(e as i32) - 1) };
            degenerate_quad(&mut rng, delta)
        };
        let tau0 = 10f64.powf(rng.gen_range(-2.0..1.0));
        for j in 0..4 {
            let a = z_closed(tau0, &q, j);
            worst_q = worst_q.max((a - z_quadrature(tau0, &q, j)?).abs());
            worst_t = worst_t.max((a - z_from_tcal(tau0, &q, j)?).abs());
        }
    }
    let mut bound_fail = 0usize;
    for _ in 0..10_000 {
        let q = GammaQuad::new([0; 4].map(|_| rng.gen_range(1.0..7.0)))?;
        let tau0 = rng.gen_range(0.0..8.0);
        for j in 0..4 {
            let z = z_closed(tau0, &q, j);
            if !(z >= 0.0 && z <= tau0.min(1.0 / q.0[j]) * (1.0 + 1e-14)) {
                bound_fail += 1;
            }
        }
    }
    let pass = worst_q <= 1e-8 && worst_t <= 1e-8 && bound_fail == 0;
    Ok(verdict(
        pass,
        format!("max |closed - quadrature| {worst_q:.2e}, max |closed - time factor| {worst_t:.2e}, bound violations {bound_fail}/40000"),
    ))
}

fn c5_kinetic(seed: u64, scale: Scale) -> Result<Verdict> {
    let p = ModelParams::default();
    let opts = KineticOptions::default();
    let c = RadialField::constant(0.7)?;
    let mut worst_const = 0.0f64;
    for s in [[0.0, 0.0, 0.0], [0.6, 0.0, 0.0], [1.2, -0.3, 0.5]] {
        worst_const = worst_const.max(apply_k_inf(&p, &c, &s, opts)?.abs());
    }
    let plan = KineticPlan::new(&p, base_grid(3.0, 8), KineticOptions::coarse())?;
    let knots = base_grid(4.0, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields = match scale {
        Scale::Full => 100,
        Scale::Quick => 10,
    };
    let mut sign_fail = 0usize;
    let mut worst_hom = 0.0f64;
    for _ in 0..fields {
        let vals: Vec<f64> = knots.iter().map(|_| rng.gen::<f64>()).collect();
        let f = RadialField::new(knots.clone(), vals.clone(), Tail::Zero)?;
        let tau0 = if rng.gen_bool(0.2) { f64::INFINITY } else { rng.gen_range(0.05..5.0) };
        let prof = plan.apply(tau0, &f)?;
        for t in &prof.terms {
            sign_fail += (0..4).filter(|&j| KAPPA[j] * t[j] < 0.0).count();
        }
        let lambda = rng.gen_range(0.3..3.0);
        let g = f.scaled(lambda);
        let scaled = plan.apply(tau0, &g)?;
        for (a, b) in prof.totals().iter().zip(scaled.totals()) {
            let scale = prof.terms.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max) * lambda.powi(3);
            worst_hom = worst_hom.max((b - lambda.powi(3) * a).abs() / scale.max(1e-300));
        }
    }
    let pass = worst_const <= 1e-10 && sign_fail == 0 && worst_hom <= 1e-12;
    Ok(verdict(
        pass,
        format!(
            "max |K_inf(const)| {worst_const:.2e}; sign violations {sign_fail} over {fields} fields; homogeneity defect {worst_hom:.2e}"
        ),
    ))
}

fn c6_lattice_kinetic(scale: Scale) -> Result<Verdict> {
    let p = ModelParams::default();
    let s = [0.0; 3];
    let (tau0, tau) = (1.0, 1.0);
    let n0 = linear_spectrum(&p, tau0);
    let k = tau * apply_k(&p, tau0, &n0, &s, KineticOptions::default())?;
    let ls: Vec<f64> = match scale {
        Scale::Full => vec![8.0, 16.0, 32.0],
        Scale::Quick => vec![4.0, 8.0],
    };
    let mut xs = Vec::new();
    for &l in &ls {
        xs.push(x_lattice(&p, &s, tau0, tau, l, Sum2Options::default())?);
    }
    let diffs: Vec<f64> = xs.iter().map(|x| (x - k).abs()).collect();
    let mut v = verdict(
        strictly_decreasing(&diffs),
        format!("lattice term [{}] at L = {ls:?}, continuum {k:.5}, differences [{}]", fmt_list(&xs), fmt_list(&diffs)),
    );
    let scaled = zeta(2.0)? / zeta(3.0)? / c_d(3)? * k;
    let alt: Vec<f64> = xs.iter().map(|x| (x - scaled).abs()).collect();
    v.notes.push(format!(
        "against the continuum term rescaled by zeta(2)/(zeta(3) C_3), {scaled:.5}, the differences are [{}]",
        fmt_list(&alt)
    ));
    Ok(v)
}

fn c7_wke(scale: Scale) -> Result<Verdict> {
    let p = ModelParams::default();
    let mut cfg = WkeConfig::new(&p);
    let t_end = match scale {
        Scale::Full => 10.0,
        Scale::Quick => {
            cfg.knots = base_grid(4.5, 10);
            2.0
        }
    };
    let r = cfg.norm_r;
    let zero = solve(&p, 0.0, t_end, &cfg)?;
    let zero_dev = zero.sup_deviation_from_linear(&p, 0.0);

    let eps = [0.05, 0.1, 0.2];
    let trs = solve_batch(&p, &eps, t_end, &cfg)?;
    let ratios: Vec<f64> = trs.iter().map(|t| t.sup_deviation_from_linear(&p, r) / (t.eps * t.eps)).collect();
    let spread = |xs: &[f64]| {
        let (lo, hi) = xs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        hi / lo
    };
    let scaling = spread(&ratios);

    let stats = stationary_batch(&p, &eps, &cfg)?;
    let residual = stats.iter().map(|s| s.residual()).fold(0.0, f64::max);
    let dev: Vec<f64> = stats.iter().map(|s| s.deviation(&p, r) / (s.eps * s.eps)).collect();
    let dev_spread = spread(&dev);

    // envelope constant calibrated on the largest amplitude, checked on all
    let c2 = fit_envelope_c2(&trs[2], &stats[2], r)?;
    let mut holds = Vec::new();
    for (t, s) in trs.iter().zip(&stats) {
        holds.push(long_time_check(t, s, c2, r)?.holds);
    }
    let pass = zero_dev <= 1e-12
        && scaling < 2.0
        && residual <= 1e-10
        && dev_spread < 2.0
        && holds.iter().all(|h| *h);
    Ok(verdict(
        pass,
        format!(
            "zero-amplitude deviation {zero_dev:.1e}; deviation/eps^2 = [{}] (spread {scaling:.3}); stationary residual {residual:.1e}, \
             |z_eps - b^2/gamma|/eps^2 = [{}] (spread {dev_spread:.3}); envelope C2 = {c2:.4} holds {holds:?} on [0, {t_end}]",
            fmt_list(&ratios),
            fmt_list(&dev)
        ),
    ))
}

fn mc_setup(scale: Scale, seed: u64) -> Result<(ModelParams, McReport, ResonantTable)> {
    let p = ModelParams { d: 2, l: 2.0, ..ModelParams::default() };
    let samples = match scale {
        Scale::Full => 10_000,
        Scale::Quick => 1_000,
    };
    let cfg = McConfig { m_cut: 3, samples, seed, ..McConfig::default() };
    let table = ResonantTable::build(&SiteGrid::new(2, p.l, 3)?);
    let rep = mc_spectrum_with_table(&p, &cfg, &table)?;
    Ok((p, rep, table))
}

fn c8_mc(rep: &McReport) -> Result<Verdict> {
    let s = &rep.sites[0];
    let z0 = s.components[0].z_score(s.n0_exact);
    let z1 = s.components[1].z_score(0.0);
    let za = s.a1_sq.z_score(s.a1_stationary);
    let pass = [z0, z1, za].iter().all(|z| z.abs() <= 3.0);
    Ok(verdict(
        pass,
        format!(
            "{} samples: z(n0) = {z0:.2}, z(n1) = {z1:.2}, z(E|a1|^2) = {za:.2} (estimate {:.5e} +- {:.1e}, closed form {:.5e})",
            s.a1_sq.count, s.a1_sq.mean, s.a1_sq.stderr, s.a1_stationary
        ),
    ))
}

fn c9_diagrams(p: &ModelParams, rep: &McReport) -> Result<Verdict> {
    let counts: Vec<u64> = (0..=4).map(diagram_count).collect();
    let counts_ok = counts == [1, 1, 3, 12, 55];
    let t1 = &trees_up_to(1)[1][0];
    let pairings = wick_pairings(&ProductDiagram::new(t1, t1)).len();

    let mut untrue = Vec::new();
    for total in 0..=4usize {
        for m in 0..=total {
            let fs = feynman_diagrams(m, total - m)?;
            let bad = fs.iter().filter(|f| !f.is_true()).count();
            let degenerate = fs.iter().filter(|f| !f.is_true() && f.root_leaf_degenerate()).count();
            if bad > 0 {
                untrue.push(format!("F({m},{}): {bad} of {} ({degenerate} with a root leaf in the other root's block)", total - m, fs.len()));
            }
        }
    }

    let window = GridWindow { l: p.l, m_cut: 3 };
    let opts = DensityOptions { window: Some(window), ..DensityOptions::default() };
    let e = diagram_correlation(p, 1, 1, &[0.0, 0.0], &opts, window.z_radius(2))?;
    let s = &rep.sites[0];
    let rel = (e.re - s.a1_stationary).abs() / s.a1_stationary;
    let z = s.a1_sq.z_score(e.re);
    let all_true = untrue.is_empty();
    let pass = counts_ok && pairings == 2 && all_true && rel <= 1e-10 && e.im.abs() <= 1e-15 && z.abs() <= 3.0;
    let true_part = if all_true { "all true".to_string() } else { format!("not all true: {}", untrue.join("; ")) };
    Ok(verdict(
        pass,
        format!(
            "counts {counts:?}; (1,1) pairings {pairings}; m+n <= 4 {true_part}; diagram E|a1|^2 = {:.6e} vs closed form rel. {rel:.1e}, vs MC z = {z:.2}",
            e.re
        ),
    ))
}

fn random_admissible(rng: &mut ChaCha8Rng, d: usize) -> (Vec<i64>, Vec<i64>) {
    loop {
        let z1: Vec<i64> = (0..d).map(|_| rng.gen_range(-3..=3)).collect();
        let v: Vec<i64> = if d == 2 {
            let k = rng.gen_range(1..=2);
            vec![-k * z1[1], k * z1[0]]
        } else {
            let w: Vec<i64> = (0..3).map(|_| rng.gen_range(-2..=2)).collect();
            vec![z1[1] * w[2] - z1[2] * w[1], z1[2] * w[0] - z1[0] * w[2], z1[0] * w[1] - z1[1] * w[0]]
        };
        if z1.iter().any(|&c| c != 0) && v.iter().any(|&c| c != 0) {
            return (z1, v);
        }
    }
}

fn incidence_set(n: usize) -> Result<Vec<IncidenceMatrix>> {
    Ok(match n {
        3 => vec![IncidenceMatrix::cyclic(3)],
        _ => vec![
            IncidenceMatrix::cyclic(4),
            IncidenceMatrix::new(4, &[0, 1, -1, 1, -1, 0, 1, 0, 1, -1, 0, 1, -1, 0, -1, 0])?,
        ],
    })
}

fn c10_counts(seed: u64, scale: Scale) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per: usize = match scale {
        Scale::Full => 25,
        Scale::Quick => 4,
    };
    let mut checked = 0usize;
    let mut count_fail = Vec::new();
    let mut worst_ratio = 0.0f64;
    let mut ff_checked = 0usize;
    let mut ff_fail = Vec::new();
    let mut worst_ff = 0.0f64;
    for n in [3usize, 4] {
        let mats = incidence_set(n)?;
        for d in [2usize, 3] {
            let mut done = 0;
            while done < per {
                let alpha = &mats[rng.gen_range(0..mats.len())];
                let (z1, v) = random_admissible(&mut rng, d);
                let l = rng.gen_range(1..=3) as f64;
                let rl = rng.gen_range(1..=6) as f64;
                let c = match quadric_intersection_count(alpha, &z1, &v, rl / l, l) {
                    Ok(c) => c,
                    Err(Error::Hypothesis(_)) => continue,
                    Err(e) => return Err(e),
                };
                done += 1;
                checked += 1;
                worst_ratio = worst_ratio.max(c.ratio);
                if c.ratio > 1.0 {
                    count_fail.push(format!("N={n} d={d} z1={z1:?} v={v:?} RL={rl}"));
                }
                // finite-field counts on a subset keep the run short
                if done <= per.div_ceil(5) {
                    let polys = quadric_polys(alpha, &z1, &v)?;
                    let m = (n - 2) * d;
                    let dim = m - polys.len();
                    for p in [5u64, 7, 11] {
                        let (cnt, bound) = finite_field_count(&polys, p, m, dim)?;
                        ff_checked += 1;
                        worst_ff = worst_ff.max(cnt as f64 / bound);
                        if cnt as f64 > bound {
                            ff_fail.push(format!("N={n} d={d} z1={z1:?} v={v:?} p={p}: {cnt} > {bound}"));
                        }
                    }
                }
            }
        }
    }
    let pass = count_fail.is_empty() && ff_fail.is_empty();
    let mut detail = format!(
        "{checked} box counts, max count/bound {worst_ratio:.3}; {ff_checked} finite-field counts, max count/bound {worst_ff:.3}"
    );
    if !pass {
        detail.push_str(&format!("; violations: {}", count_fail.iter().chain(&ff_fail).cloned().collect::<Vec<_>>().join("; ")));
    }
    Ok(verdict(pass, detail))
}

fn c11_bounded(scale: Scale) -> Result<Verdict> {
    let ls: Vec<f64> = match scale {
        Scale::Full => vec![4.0, 8.0, 16.0],
        Scale::Quick => vec![4.0, 8.0],
    };
    let opts = NSumOptions { radius: 3.6, d2_lognorm: true, invariant: true };
    let mut parts = Vec::new();
    let mut pass = true;
    for n in [3usize, 4] {
        let alpha = IncidenceMatrix::cyclic(n);
        let mut vals = Vec::new();
        for &l in &ls {
            vals.push(resonance_sum_n(&gauss_flat, &alpha, 2, l, opts)?);
        }
        // bounded with no growth: never above the smallest-L value by more than 5%
        let first = vals[0];
        let peak = vals.iter().cloned().fold(0.0f64, f64::max);
        let ok = vals.iter().all(|v| v.is_finite() && *v > 0.0) && peak <= 1.05 * first;
        pass &= ok;
        parts.push(format!("N={n}: [{}] (max/first {:.3})", fmt_list(&vals), peak / first));
    }
    Ok(verdict(pass, format!("{} at L = {ls:?}", parts.join("; "))))
}

/// Runs the selected criteria (ids `1..=11`) in order.
pub fn run(ids: &[u8], scale: Scale, seed: u64) -> Vec<Outcome> {
    let mut mc: Option<Result<(ModelParams, McReport, ResonantTable)>> = None;
    let mut out = Vec::new();
    for &id in ids {
        let t0 = Instant::now();
        let res: Result<Verdict> = match id {
            1 => c1_constant(),
            2 => c2_surface(),
            3 => c3_lattice_sums(scale),
            4 => c4_kernels(seed),
            5 => c5_kinetic(seed, scale),
            6 => c6_lattice_kinetic(scale),
            7 => c7_wke(scale),
            8 | 9 => {
                let setup = mc.get_or_insert_with(|| mc_setup(scale, seed));
                match setup {
                    Ok((p, rep, _)) => {
                        if id == 8 {
                            c8_mc(rep)
                        } else {
                            c9_diagrams(p, rep)
                        }
                    }
                    Err(e) => Err(Error::Internal(e.to_string())),
                }
            }
            10 => c10_counts(seed, scale),
            11 => c11_bounded(scale),
            _ => Err(Error::InvalidParam(format!("no criterion {id}"))),
        };
        let (pass, detail, notes) = match res {
            Ok(v) => (v.pass, v.detail, v.notes),
            Err(e) => (false, format!("error ({}): {e}", e.category()), Vec::new()),
        };
        let title = TITLES.get(id.wrapping_sub(1) as usize).copied().unwrap_or("unknown").to_string();
        out.push(Outcome { id, title, pass, detail, notes, wall_time_s: t0.elapsed().as_secs_f64() });
    }
    out
}

/// CSV summary `id,title,pass,wall_time_s,detail`.
pub fn to_csv(outcomes: &[Outcome]) -> String {
    let mut s = String::from("id,title,pass,wall_time_s,detail\n");
    for o in outcomes {
        s.push_str(&format!("{},{},{},{:.3},\"{}\"\n", o.id, o.title, o.pass, o.wall_time_s, o.detail.replace('"', "'")));
    }
    s
}
